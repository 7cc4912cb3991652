#pragma once

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>
#include <string>

#include "mmlq/errors.hpp"

namespace mmlq {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using json = nlohmann::json;

inline Mat sym(const Mat& m) { return 0.5 * (m + m.transpose()); }

double min_eigenvalue_sym(const Mat& m);

// ||M - M^T||_inf relative to max(1, ||M||_inf).
double asymmetry(const Mat& m);

// Solves A X = B for symmetric positive (semi-)definite A via LDLT.
// Throws a numerical error naming `what` if the factorization fails.
Mat solve_spd(const Mat& a, const Mat& b, const std::string& what);

// JSON <-> Eigen. Matrices are nested row-major arrays, vectors flat arrays.
Mat mat_from_json(const json& j, const std::string& field);
Mat mat_from_json(const json& j, Eigen::Index rows, Eigen::Index cols,
                  const std::string& field);
Vec vec_from_json(const json& j, const std::string& field);
json mat_to_json(const Mat& m);
json vec_to_json(const Vec& v);

// Rejects keys outside `allowed`, naming the context in the error.
void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context);

}  // namespace mmlq
