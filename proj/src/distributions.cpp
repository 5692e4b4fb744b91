#include "virnet/distributions.hpp"

#include <string>

#include "virnet/errors.hpp"
#include "virnet/specfun.hpp"

namespace virnet {

namespace {

void require_positive(const Tensor& t, const char* what) {
    auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0)) {
            throw DomainError(std::string(what) + " must be positive, got " +
                              std::to_string(v[i]) + " at index " + std::to_string(i));
        }
    }
}

void require_above_one(const Tensor& t, const char* what) {
    auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 1.0)) {
            throw DomainError(std::string(what) + " must exceed 1, got " +
                              std::to_string(v[i]) + " at index " + std::to_string(i));
        }
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " differ");
    }
}

}  // namespace

Tensor kl_gaussian(const GaussianPosterior& q, const ZPrior& prior) {
    if (!(prior.eps0_sq > 0.0)) {
        throw DomainError("kl_gaussian: eps0_sq must be positive");
    }
    require_same_shape(q.mu, q.m2, "kl_gaussian");
    require_same_shape(q.mu, prior.x, "kl_gaussian");
    require_positive(q.m2, "kl_gaussian: m2");

    const double inv_eps = 1.0 / prior.eps0_sq;
    auto quad = square(q.mu - prior.x) * (0.5 * inv_eps);
    auto ratio = q.m2 * inv_eps;
    auto rest = (ratio - virnet::log(ratio) - 1.0) * 0.5;
    return sum(quad + rest);
}

Tensor kl_inverse_gamma(const InvGammaPosterior& q, const SigmaPrior& prior) {
    if (!(prior.alpha0 > 0.0)) {
        throw DomainError("kl_inverse_gamma: alpha0 must be positive");
    }
    require_same_shape(q.alpha, q.beta, "kl_inverse_gamma");
    require_same_shape(q.alpha, prior.beta0, "kl_inverse_gamma");
    require_above_one(q.alpha, "kl_inverse_gamma: alpha");
    require_positive(q.beta, "kl_inverse_gamma: beta");
    require_positive(prior.beta0, "kl_inverse_gamma: beta0");

    const double lg0 = specfun::lgamma(prior.alpha0);
    auto gamma_part = scalar_sub(lg0, lgamma_map(q.alpha));
    auto mean_part = q.alpha * (prior.beta0 / q.beta - 1.0);
    auto digamma_part = (q.alpha - prior.alpha0) * digamma_map(q.alpha);
    auto log_part = (virnet::log(q.beta) - virnet::log(prior.beta0)) * prior.alpha0;
    return sum(gamma_part + mean_part + digamma_part + log_part);
}

Tensor reparameterize(const GaussianPosterior& q, const Tensor& noise) {
    require_same_shape(q.mu, q.m2, "reparameterize");
    require_same_shape(q.mu, noise, "reparameterize");
    require_positive(q.m2, "reparameterize: m2");
    return q.mu + virnet::sqrt(q.m2) * noise;
}

std::vector<double> sample_inverse_gamma(double alpha, double beta,
                                         std::size_t count, Rng& rng) {
    if (!(alpha > 0.0) || !(beta > 0.0)) {
        throw DomainError("sample_inverse_gamma: alpha and beta must be positive");
    }
    // sigma^2 ~ IG(alpha, beta)  <=>  1/sigma^2 ~ Gamma(alpha, rate beta)
    std::vector<double> out(count);
    for (auto& v : out) v = beta / rng.gamma(alpha);
    return out;
}

Tensor sigma_mode(const InvGammaPosterior& q) {
    require_same_shape(q.alpha, q.beta, "sigma_mode");
    // the mode stays finite down to alpha > 0, so the op does not insist on
    // the stricter alpha > 1 posterior invariant
    require_positive(q.alpha, "sigma_mode: alpha");
    require_positive(q.beta, "sigma_mode: beta");
    return q.beta / (q.alpha + 1.0);
}

}  // namespace virnet
