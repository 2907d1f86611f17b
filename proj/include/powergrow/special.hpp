#pragma once

#include <cmath>
#include <cstdint>

#include "powergrow/util.hpp"

namespace powergrow {

// A logit-domain value; sigmoid(value) is the corresponding unit-interval
// quantity, kept strictly inside (0,1).
struct LogitValue {
    double value = 0.0;
};

// A unit-interval value carried together with its complement. Keeping q = 1-p
// explicit preserves relative precision near both endpoints, which a bare
// double loses past p ~ 1 - 1e-13.
struct UnitValue {
    double p = 0.5;
    double q = 0.5;
};

inline double sigmoid(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    double e = std::exp(v);
    return e / (1.0 + e);
}

inline UnitValue sigmoid_pair(double v) { return UnitValue{sigmoid(v), sigmoid(-v)}; }

inline double logit(double p) {
    if (!(p > 0.0) || !(p < 1.0)) throw DomainError("logit: argument must lie in (0,1)");
    return std::log(p / (1.0 - p));
}

inline double logit(const UnitValue& u) {
    if (!(u.p > 0.0) || !(u.q > 0.0)) throw DomainError("logit: pair components must be positive");
    return std::log(u.p / u.q);
}

// ln Gamma(x) by Lanczos approximation (g = 7, 9 terms), with the reflection
// formula below 0.5. Absolute error < 1e-10 on [0.1, 50].
inline double log_gamma(double x) {
    if (!(x > 0.0)) throw DomainError("log_gamma: argument must be positive");
    static const double kCoeff[9] = {
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    };
    constexpr double kLnSqrt2Pi = 0.91893853320467274178;
    if (x < 0.5) {
        // ln Gamma(x) = ln(pi / sin(pi x)) - ln Gamma(1 - x)
        return std::log(M_PI / std::sin(M_PI * x)) - log_gamma(1.0 - x);
    }
    double z = x - 1.0;
    double sum = kCoeff[0];
    for (int i = 1; i < 9; ++i) sum += kCoeff[i] / (z + static_cast<double>(i));
    double base = z + 7.5;
    return kLnSqrt2Pi + (z + 0.5) * std::log(base) - base + std::log(sum);
}

// Digamma via the recurrence psi(x) = psi(x+1) - 1/x up to x >= 10, then the
// asymptotic Bernoulli series. Absolute error < 1e-9 on [0.1, 50].
inline double digamma(double x) {
    if (!(x > 0.0)) throw DomainError("digamma: argument must be positive");
    double result = 0.0;
    while (x < 10.0) {
        result -= 1.0 / x;
        x += 1.0;
    }
    double inv = 1.0 / x;
    double inv2 = inv * inv;
    double series = std::log(x) - 0.5 * inv -
                    inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
    return result + series;
}

inline double log_beta(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0)) throw DomainError("log_beta: parameters must be positive");
    return log_gamma(a) + log_gamma(b) - log_gamma(a + b);
}

// KL(Beta(a1,b1) || Beta(a2,b2)), closed form.
inline double kl_beta(double a1, double b1, double a2, double b2) {
    if (!(a1 > 0.0) || !(b1 > 0.0) || !(a2 > 0.0) || !(b2 > 0.0))
        throw DomainError("kl_beta: parameters must be positive");
    return log_beta(a2, b2) - log_beta(a1, b1) + (a1 - a2) * digamma(a1) +
           (b1 - b2) * digamma(b1) + (a2 - a1 + b2 - b1) * digamma(a1 + b1);
}

// Reverse-process accumulation in the logit domain:
//   x_{k-1} = x_k + p * (1 - x_k)
// becomes logit(x_{k-1}) = ln(e^a + e^b + e^{a+b}) for a = logit(x_k),
// b = logit(p). Log-sum-exp with max subtraction; total over finite inputs.
inline LogitValue logit_add_reverse(LogitValue logit_x_k, LogitValue logit_p) {
    double a = logit_x_k.value;
    double b = logit_p.value;
    double s = a + b;
    double m = a > b ? a : b;
    if (s > m) m = s;
    double r = m + std::log(std::exp(a - m) + std::exp(b - m) + std::exp(s - m));
    return LogitValue{r};
}

}  // namespace powergrow
