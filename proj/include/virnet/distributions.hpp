#pragma once

#include <cstddef>
#include <vector>

#include "virnet/rng.hpp"
#include "virnet/tensor.hpp"

namespace virnet {

/// Pixel-wise Gaussian posterior over the latent clean image: N(mu, m2).
struct GaussianPosterior {
    Tensor mu;
    Tensor m2;
};

/// Pixel-wise inverse-Gamma posterior over the noise variance: IG(alpha, beta).
/// alpha > 1 keeps both the mode and E[1/sigma^2] finite.
struct InvGammaPosterior {
    Tensor alpha;
    Tensor beta;
};

/// Prior on the latent image: N(x, eps0_sq) around the simulated clean image.
struct ZPrior {
    Tensor x;
    double eps0_sq = 1e-6;
};

/// Prior on the noise variance: IG(alpha0, beta0) anchored at the xi map.
struct SigmaPrior {
    double alpha0 = 0.0;
    Tensor beta0;
};

/// Closed-form KL(q || prior), summed over pixels. Differentiable in mu, m2.
Tensor kl_gaussian(const GaussianPosterior& q, const ZPrior& prior);

/// Closed-form KL(q || prior), summed over pixels. Differentiable in alpha,
/// beta.
Tensor kl_inverse_gamma(const InvGammaPosterior& q, const SigmaPrior& prior);

/// z = mu + sqrt(m2) * noise; differentiable in mu and m2.
Tensor reparameterize(const GaussianPosterior& q, const Tensor& noise);

/// i.i.d. draws from IG(alpha, beta); oracle support for the MC checks.
std::vector<double> sample_inverse_gamma(double alpha, double beta,
                                         std::size_t count, Rng& rng);

/// Posterior mode of each pixel's variance: beta / (alpha + 1).
Tensor sigma_mode(const InvGammaPosterior& q);

}  // namespace virnet
