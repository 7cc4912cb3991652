#!/usr/bin/env python3
"""Independent scalar oracles for the backward recursion and filter updates.

Computed with plain Python floats, no shared code with the C++ library.
The printed values are frozen into tests/test_riccati.cpp; rerun this script
if those constants ever need to be regenerated.
"""


def op_r(p, a, b, q, r):
    return q + a * p * a - a * p * b / (r + b * p * b) * b * p * a


def op_g(p, a, b, r):
    return b * p * a / (r + b * p * b)


def op_k(p, a, c, sw, sv):
    m = a * p * a + sw
    return m * c / (c * m * c + sv)


def op_f(p, a, c, sw, sv):
    m = a * p * a + sw
    k = op_k(p, a, c, sw, sv)
    return m - k * (c * m * c + sv) * k


def backward(a, b, q, r, qt, horizon):
    s = {horizon: qt}
    gains = {}
    for t in range(horizon - 1, 0, -1):
        gains[t] = op_g(s[t + 1], a, b, r)
        s[t] = op_r(s[t + 1], a, b, q, r)
    return s, gains


def main():
    print("op_R(1,1,1,1,1)  = %.17g" % op_r(1, 1, 1, 1, 1))
    print("op_G(1,1,1,1)    = %.17g" % op_g(1, 1, 1, 1))
    print("op_K(1,1,1,1,1)  = %.17g" % op_k(1, 1, 1, 1, 1))
    print("op_F(1,1,1,1,1)  = %.17g" % op_f(1, 1, 1, 1, 1))
    print("op_K(1,1,1,1,1e12) = %.17g" % op_k(1, 1, 1, 1, 1e12))

    s, gains = backward(1, 1, 1, 1, 1, 3)
    for t in (1, 2, 3):
        print("S[T=3][t=%d] = %.17g" % (t, s[t]))
    for t in (1, 2):
        print("L[T=3][t=%d] = %.17g" % (t, gains[t]))

    # longer horizon with non-unit coefficients
    s, gains = backward(a=0.9, b=0.5, q=2.0, r=0.4, qt=3.0, horizon=5)
    for t in range(1, 6):
        print("S[gen][t=%d] = %.17g" % (t, s[t]))
    for t in range(1, 5):
        print("L[gen][t=%d] = %.17g" % (t, gains[t]))

    # filter schedule: P(1)=Sigma_x, K(1)=0, predictor updates afterwards
    a, c, sw, sv, sx = 0.95, 1.3, 0.25, 0.49, 1.1
    p = sx
    for t in range(2, 6):
        k = op_k(p, a, c, sw, sv)
        p = op_f(p, a, c, sw, sv)
        print("K[filt][t=%d] = %.17g" % (t, k))
        print("P[filt][t=%d] = %.17g" % (t, p))


if __name__ == "__main__":
    main()
