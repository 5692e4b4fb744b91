#pragma once

#include <vector>

#include "virnet/distributions.hpp"
#include "virnet/task.hpp"
#include "virnet/tensor.hpp"

namespace virnet {

enum class FilterKind { gaussian, average };

struct HyperParams {
    double eps0_sq = 1e-6;
    int p = 7;  // odd window size
    FilterKind filter_kind = FilterKind::gaussian;
};

/// Data-dependent prior on the noise variance, anchored at the xi map.
struct NoisePrior {
    Tensor xi;      // filtered squared residual, floored
    double alpha0;  // p^2/2 - 1
    Tensor beta0;   // p^2 * xi / 2
};

/// Normalized p x p filter window (row-major), gaussian std = p/4 or flat.
std::vector<double> filter_window(int p, FilterKind kind);

/// xi = filter((y - Hx)^2; p) with reflective boundary, floored at 1e-8;
/// alpha0/beta0 follow from p. Inputs are observed-resolution images.
NoisePrior compute_xi(const Tensor& y, const Tensor& Hx, const HyperParams& hp);

HyperParams default_hyperparams(Task task);

SigmaPrior to_sigma_prior(const NoisePrior& prior);

}  // namespace virnet
