#include "virnet/specfun.hpp"

#include <cmath>

#include "virnet/errors.hpp"

namespace virnet::specfun {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178032973640562;  // ln(2*pi)/2

void require_positive(double x, const char* fn) {
    if (!(x > 0.0)) {
        throw DomainError(std::string(fn) + ": argument must be positive");
    }
}

// Stirling series for ln Gamma, valid for x >= 8. Coefficients are
// B_{2n} / (2n (2n-1)), n = 1..7.
double lgamma_asymptotic(double x) {
    static constexpr double c[] = {
        1.0 / 12.0,      -1.0 / 360.0,     1.0 / 1260.0,      -1.0 / 1680.0,
        1.0 / 1188.0,    -691.0 / 360360.0, 1.0 / 156.0,
    };
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = 0.0;
    double p = inv;
    for (double coeff : c) {
        series += coeff * p;
        p *= inv2;
    }
    return (x - 0.5) * std::log(x) - x + kHalfLog2Pi + series;
}

// psi(x) ~ ln x - 1/(2x) - sum B_{2n} / (2n x^{2n}), x >= 8.
double digamma_asymptotic(double x) {
    static constexpr double c[] = {
        1.0 / 12.0,  -1.0 / 120.0,  1.0 / 252.0,  -1.0 / 240.0,
        1.0 / 132.0, -691.0 / 32760.0, 1.0 / 12.0,
    };
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = 0.0;
    double p = inv2;
    for (double coeff : c) {
        series += coeff * p;
        p *= inv2;
    }
    return std::log(x) - 0.5 * inv - series;
}

// psi'(x) ~ 1/x + 1/(2x^2) + sum B_{2n} / x^{2n+1}, x >= 6.
double trigamma_asymptotic(double x) {
    static constexpr double c[] = {
        1.0 / 6.0,  -1.0 / 30.0,  1.0 / 42.0, -1.0 / 30.0,
        5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0,
    };
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    double series = 0.0;
    double p = inv * inv2;
    for (double coeff : c) {
        series += coeff * p;
        p *= inv2;
    }
    return inv + 0.5 * inv2 + series;
}

}  // namespace

double lgamma(double x) {
    require_positive(x, "lgamma");
    // shift x upward; ln Gamma(x) = ln Gamma(x+n) - sum ln(x+i)
    double shift = 0.0;
    while (x < 8.0) {
        shift += std::log(x);
        x += 1.0;
    }
    return lgamma_asymptotic(x) - shift;
}

double digamma(double x) {
    require_positive(x, "digamma");
    // psi(x) = psi(x+n) - sum 1/(x+i)
    double shift = 0.0;
    while (x < 8.0) {
        shift += 1.0 / x;
        x += 1.0;
    }
    return digamma_asymptotic(x) - shift;
}

double trigamma(double x) {
    require_positive(x, "trigamma");
    // psi'(x) = psi'(x+n) + sum 1/(x+i)^2
    double shift = 0.0;
    while (x < 6.0) {
        shift += 1.0 / (x * x);
        x += 1.0;
    }
    return trigamma_asymptotic(x) + shift;
}

SpecialValue lgamma_d(double x) {
    return {lgamma(x), digamma(x)};
}

SpecialValue digamma_d(double x) {
    return {digamma(x), trigamma(x)};
}

}  // namespace virnet::specfun
