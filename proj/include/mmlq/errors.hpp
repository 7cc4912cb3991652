#pragma once

#include <stdexcept>
#include <string>

namespace mmlq {

// Error categories map one-to-one onto CLI exit codes.
enum class ErrorKind {
  Usage = 2,       // bad flags, unparseable input files
  Validation = 3,  // well-formed but invalid problem data
  Numerical = 4,   // factorization failure, filter degeneracy, guards
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const { return kind_; }
  int exit_code() const { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline Error usage_error(const std::string& what) {
  return Error(ErrorKind::Usage, what);
}
inline Error validation_error(const std::string& what) {
  return Error(ErrorKind::Validation, what);
}
inline Error numerical_error(const std::string& what) {
  return Error(ErrorKind::Numerical, what);
}

}  // namespace mmlq
