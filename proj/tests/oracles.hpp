// Test-only reference implementations, kept deliberately independent of
// the library kernels: a Taylor/continued-fraction erf in extended
// precision, matching scalar compositions, and finite-difference helpers.
#pragma once

#include <cmath>
#include <cstddef>

namespace oracle {

// erfc(x) for x >= 3 via the classical continued fraction
//   erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
// evaluated bottom-up at fixed depth.
inline long double erfc_cf(long double x) {
    long double f = x;
    for (int n = 60; n >= 1; --n) {
        f = x + (n * 0.5L) / f;
    }
    return std::exp(-x * x) / std::sqrt(M_PIl) / f;
}

// erf(x): 50-term alternating Taylor series for |x| <= 3 (terms decay past
// any double's resolution there), complementary continued fraction beyond.
inline long double erf(long double x) {
    if (x < 0) return -erf(-x);
    if (x <= 3.0L) {
        const long double x2 = x * x;
        long double term = x;  // (-1)^n x^{2n+1} / n!
        long double sum = 0.0L;
        for (int n = 0; n < 50; ++n) {
            sum += term / (2 * n + 1);
            term *= -x2 / (n + 1);
        }
        return 2.0L / std::sqrt(M_PIl) * sum;
    }
    return 1.0L - erfc_cf(x);
}

inline long double erf_derivative(long double x) {
    return 2.0L / std::sqrt(M_PIl) * std::exp(-x * x);
}

inline long double softplus(long double z) {
    if (z > 40.0L) return z + std::log1p(std::exp(-z));
    return std::log1p(std::exp(z));
}

inline long double sigmoid(long double z) {
    if (z >= 0) return 1.0L / (1.0L + std::exp(-z));
    const long double e = std::exp(z);
    return e / (1.0L + e);
}

inline long double erfact(long double x, long double a, long double b) {
    return x * erf(a * std::exp(b * x));
}

inline long double pserf(long double x, long double g, long double d) {
    return x * erf(g * softplus(d * x));
}

// Central finite difference with step h.
template <typename F>
double central_diff(F&& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

// |a-b| <= tol * max(|a|,|b|) + floor; the comparison used by every
// finite-difference check in this suite.
inline bool close_rel(double a, double b, double rel, double floor_abs) {
    const double diff = std::fabs(a - b);
    const double scale = std::fmax(std::fabs(a), std::fabs(b));
    return diff <= rel * scale + floor_abs;
}

inline double rel_err(double a, double b, double floor_abs) {
    const double diff = std::fabs(a - b);
    const double scale = std::fmax(std::fabs(a), std::fabs(b));
    return diff / (scale > floor_abs ? scale : floor_abs);
}

}  // namespace oracle
