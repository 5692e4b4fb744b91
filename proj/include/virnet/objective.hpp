#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "virnet/degradation.hpp"
#include "virnet/distributions.hpp"
#include "virnet/networks.hpp"
#include "virnet/priors.hpp"
#include "virnet/rng.hpp"
#include "virnet/tensor.hpp"

namespace virnet {

/// Plain-number summary of one ELBO evaluation; total is
/// likelihood - kl_z - kl_sigma by construction.
struct ElboTerms {
    double likelihood = 0.0;
    double kl_z = 0.0;
    double kl_sigma = 0.0;
    double total = 0.0;
};

/// The same four quantities as scalar graph nodes, so the training loss can
/// backpropagate through any of them.
struct ElboParts {
    Tensor likelihood;
    Tensor kl_z;
    Tensor kl_sigma;
    Tensor total;

    ElboTerms values() const;
};

/// Closed-form expected log-likelihood for identity degradation (denoise,
/// deblock): sum over pixels of
///   -ln(2 pi)/2 - [ln beta - psi(alpha)]/2 - (alpha/2 beta) [(y-mu)^2 + m2].
/// Differentiable in mu, m2, alpha, beta.
Tensor likelihood_identity(const Tensor& y, const GaussianPosterior& q_z,
                           const InvGammaPosterior& q_s);

/// Single-sample expected log-likelihood for a general degradation: z_tilde
/// is one reparameterized draw, H is the deterministic part of spec, and the
/// quadratic term becomes (alpha/2 beta) [y - (H z_tilde)]^2. Resolution of
/// H z_tilde must match y (ShapeError).
Tensor likelihood_general(const Tensor& y, const Tensor& z_tilde,
                          const DegradationSpec& spec, const InvGammaPosterior& q_s);

/// Evidence lower bound for one sample. The likelihood term uses the closed
/// form when the degradation is the identity and mc_samples reparameterized
/// draws otherwise; the noise prior comes from compute_xi(y, H x).
ElboParts elbo(const Tensor& y, const Tensor& x, const DegradationSpec& spec,
               const HyperParams& hp, const GaussianPosterior& q_z,
               const InvGammaPosterior& q_s, Rng& rng, std::size_t mc_samples = 1);

/// One training example: observation y, clean reference x at restoration
/// resolution, the degradation that produced y, and the stretched kernel
/// embedding for sr samples.
struct TrainSample {
    Tensor y;
    Tensor x;
    DegradationSpec spec;
    std::optional<Tensor> stretched_h;
};

struct LossResult {
    /// Mean over the batch of -total / (observation pixels); graph-tracked.
    Tensor value;
    /// The same per-pixel normalization applied to each term, batch-averaged.
    ElboTerms mean_terms;
};

/// Runs both networks on every sample and averages the negative ELBO.
/// Gradients of the likelihood term reach both networks.
LossResult loss(const std::vector<TrainSample>& batch, const NetworkParams& params,
                const HyperParams& hp, Rng& rng, std::size_t mc_samples = 1);

/// Cosine similarity between d(-ELBO)/d mu and d(MSE)/d mu across the batch,
/// where MSE = sum (mu - x)^2. Approaches 1 as eps0_sq shrinks. Throws
/// ContractError when mu == x everywhere (the MSE gradient vanishes and the
/// comparison is undefined); the m2-only path is deliberately out of scope.
double mse_degeneracy_check(const std::vector<TrainSample>& batch,
                            const NetworkParams& params, const HyperParams& hp,
                            Rng& rng);

}  // namespace virnet
