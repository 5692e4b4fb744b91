#include "virnet/objective.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "virnet/errors.hpp"

namespace virnet {
namespace {

void require_shape(const Tensor& t, const Tensor& ref, const char* what) {
    if (t.shape() != ref.shape())
        throw ShapeError(std::string(what) + " has shape " + shape_str(t.shape()) +
                         ", expected " + shape_str(ref.shape()));
}

// Shared core of both likelihood forms:
//   sum(-[ln beta - psi(alpha)]/2 - (alpha/2 beta) quad) - n ln(2 pi)/2.
Tensor gaussian_loglik(const Tensor& quad, const InvGammaPosterior& q_s) {
    const Tensor spread = log(q_s.beta) - digamma_map(q_s.alpha);
    const Tensor fit = (q_s.alpha / q_s.beta) * quad;
    const Tensor summed = sum((spread + fit) * (-0.5));
    const double log_2pi = std::log(2.0 * std::numbers::pi);
    return summed + (-0.5 * log_2pi * static_cast<double>(quad.size()));
}

bool identity_degradation(const DegradationSpec& spec) {
    return !spec.kernel.has_value() && spec.scale == 1;
}

}  // namespace

ElboTerms ElboParts::values() const {
    return {likelihood.item(), kl_z.item(), kl_sigma.item(), total.item()};
}

Tensor likelihood_identity(const Tensor& y, const GaussianPosterior& q_z,
                           const InvGammaPosterior& q_s) {
    require_shape(q_z.mu, y, "posterior mean");
    require_shape(q_z.m2, y, "posterior variance");
    require_shape(q_s.alpha, y, "noise posterior alpha");
    require_shape(q_s.beta, y, "noise posterior beta");
    const Tensor quad = square(y - q_z.mu) + q_z.m2;
    return gaussian_loglik(quad, q_s);
}

Tensor likelihood_general(const Tensor& y, const Tensor& z_tilde,
                          const DegradationSpec& spec, const InvGammaPosterior& q_s) {
    const Tensor hz = apply_degradation(z_tilde, spec);
    if (hz.shape() != y.shape())
        throw ShapeError("degraded latent has resolution " + shape_str(hz.shape()) +
                         ", observation has " + shape_str(y.shape()));
    require_shape(q_s.alpha, y, "noise posterior alpha");
    require_shape(q_s.beta, y, "noise posterior beta");
    const Tensor quad = square(y - hz);
    return gaussian_loglik(quad, q_s);
}

ElboParts elbo(const Tensor& y, const Tensor& x, const DegradationSpec& spec,
               const HyperParams& hp, const GaussianPosterior& q_z,
               const InvGammaPosterior& q_s, Rng& rng, std::size_t mc_samples) {
    if (mc_samples < 1) throw ContractError("elbo needs mc_samples >= 1");
    validate_degradation(spec);
    require_shape(q_z.mu, x, "posterior mean");
    require_shape(q_z.m2, x, "posterior variance");

    const Tensor hx = apply_degradation(x, spec);
    const SigmaPrior sigma_prior = to_sigma_prior(compute_xi(y, hx, hp));

    ElboParts parts;
    parts.kl_z = kl_gaussian(q_z, ZPrior{x, hp.eps0_sq});
    parts.kl_sigma = kl_inverse_gamma(q_s, sigma_prior);
    if (identity_degradation(spec)) {
        parts.likelihood = likelihood_identity(y, q_z, q_s);
    } else {
        Tensor acc;
        for (std::size_t i = 0; i < mc_samples; ++i) {
            const Tensor noise = Tensor::random_normal(q_z.mu.shape(), rng);
            const Tensor draw = likelihood_general(y, reparameterize(q_z, noise), spec, q_s);
            acc = i == 0 ? draw : acc + draw;
        }
        parts.likelihood =
            mc_samples == 1 ? acc : acc * (1.0 / static_cast<double>(mc_samples));
    }
    parts.total = parts.likelihood - parts.kl_z - parts.kl_sigma;
    return parts;
}

LossResult loss(const std::vector<TrainSample>& batch, const NetworkParams& params,
                const HyperParams& hp, Rng& rng, std::size_t mc_samples) {
    if (batch.empty()) throw ContractError("loss needs a non-empty batch");
    Tensor acc;
    ElboTerms mean;
    for (const TrainSample& sample : batch) {
        const InvGammaPosterior q_s = snet_forward(sample.y, params);
        const GaussianPosterior q_z = rnet_forward(sample.y, sample.stretched_h, params);
        const ElboParts parts =
            elbo(sample.y, sample.x, sample.spec, hp, q_z, q_s, rng, mc_samples);
        const double inv_n = 1.0 / static_cast<double>(sample.y.size());
        const Tensor contribution = parts.total * (-inv_n);
        acc = acc.defined() ? acc + contribution : contribution;
        const ElboTerms t = parts.values();
        mean.likelihood += t.likelihood * inv_n;
        mean.kl_z += t.kl_z * inv_n;
        mean.kl_sigma += t.kl_sigma * inv_n;
        mean.total += t.total * inv_n;
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    LossResult out;
    out.value = batch.size() == 1 ? acc : acc * inv_b;
    out.mean_terms = {mean.likelihood * inv_b, mean.kl_z * inv_b,
                      mean.kl_sigma * inv_b, mean.total * inv_b};
    return out;
}

double mse_degeneracy_check(const std::vector<TrainSample>& batch,
                            const NetworkParams& params, const HyperParams& hp,
                            Rng& rng) {
    if (batch.empty())
        throw ContractError("mse degeneracy check needs a non-empty batch");
    double dot = 0.0, elbo_sq = 0.0, mse_sq = 0.0;
    for (const TrainSample& sample : batch) {
        const InvGammaPosterior q_s = snet_forward(sample.y, params);
        const GaussianPosterior q_z = rnet_forward(sample.y, sample.stretched_h, params);
        const ElboParts parts =
            elbo(sample.y, sample.x, sample.spec, hp, q_z, q_s, rng);
        backward(parts.total * -1.0);
        const auto g_neg_elbo = q_z.mu.grad();
        const std::vector<double> g1(g_neg_elbo.begin(), g_neg_elbo.end());

        // Fresh forward: the tape was consumed, and mu must carry only the
        // mse adjoint this time.
        const GaussianPosterior again = rnet_forward(sample.y, sample.stretched_h, params);
        backward(sum(square(again.mu - sample.x)));
        const auto g2 = again.mu.grad();

        for (std::size_t i = 0; i < g1.size(); ++i) {
            dot += g1[i] * g2[i];
            elbo_sq += g1[i] * g1[i];
            mse_sq += g2[i] * g2[i];
        }
    }
    for (Tensor t : params.trainable()) t.zero_grad();
    if (mse_sq <= 1e-24)
        throw ContractError("mu equals x: the mse gradient vanishes and the "
                            "similarity is undefined (m2-only paths are excluded)");
    if (elbo_sq <= 1e-24)
        throw ContractError("elbo gradient with respect to mu vanished");
    return dot / std::sqrt(elbo_sq * mse_sq);
}

}  // namespace virnet
