#pragma once

#include <optional>

#include "virnet/tensor.hpp"

namespace virnet {

struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> variance_corr;
};

/// -10 log10(MSE) with peak 1.0, capped at 100 dB. Shapes must match.
double psnr(const Tensor& a, const Tensor& b);

/// Single-scale structural similarity on a grayscale image ([h,w] or
/// [1,h,w]): 11x11 Gaussian window with std 1.5, C1=0.01^2, C2=0.03^2,
/// averaged over positions where the window fits entirely.
double ssim(const Tensor& a, const Tensor& b);

/// Pearson correlation between sqrt(sigma2) and the noise map m.
/// Either side constant -> undefined, raises.
double variance_map_quality(const Tensor& sigma2, const Tensor& m);

/// BT.601 luminance: Y = 0.299 R + 0.587 G + 0.114 B.
Tensor luminance(const Tensor& rgb);

}  // namespace virnet
