#pragma once

namespace virnet::specfun {

/// Value of a special function together with its first derivative at the same
/// point; both entries are finite for any positive argument.
struct SpecialValue {
    double value;
    double derivative;
};

/// ln Gamma(x) for x > 0. Relative error <= 1e-12.
double lgamma(double x);

/// psi(x) = d/dx ln Gamma(x) for x > 0. Absolute error <= 1e-10.
double digamma(double x);

/// psi'(x) for x > 0. Absolute error <= 1e-8.
double trigamma(double x);

/// {ln Gamma(x), psi(x)} in one call.
SpecialValue lgamma_d(double x);

/// {psi(x), psi'(x)} in one call.
SpecialValue digamma_d(double x);

}  // namespace virnet::specfun
