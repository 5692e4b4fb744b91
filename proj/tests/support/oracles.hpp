#pragma once

#include <cstddef>
#include <vector>

#include "virnet/rng.hpp"

namespace testsup {

struct McEstimate {
    double mean = 0.0;
    double se = 0.0;  // standard error of the mean
};

McEstimate mc_mean(const std::vector<double>& samples);

// Monte Carlo KL(N(mu,m2) || N(x,eps0_sq)) for one pixel: average of
// log q - log p over draws from q.
McEstimate kl_mc_gaussian(double mu, double m2, double x, double eps0_sq,
                          std::size_t n, virnet::Rng& rng);

// Monte Carlo KL(IG(alpha,beta) || IG(alpha0,beta0)) for one pixel.
McEstimate kl_mc_invgamma(double alpha, double beta, double alpha0,
                          double beta0, std::size_t n, virnet::Rng& rng);

// Monte Carlo E[log N(y | z, s2)] with z ~ N(mu,m2), s2 ~ IG(alpha,beta),
// for one pixel. This is the likelihood term the closed form replaces.
McEstimate likelihood_mc(double y, double mu, double m2, double alpha,
                         double beta, std::size_t n, virnet::Rng& rng);

double invgamma_logpdf(double v, double a, double b);

}  // namespace testsup
