#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "virnet/linalg.hpp"
#include "virnet/rng.hpp"
#include "virnet/task.hpp"
#include "virnet/tensor.hpp"

namespace virnet {

enum class KernelKind { isotropic, anisotropic };

struct KernelSpec {
    KernelKind kind = KernelKind::isotropic;
    double d = 1.6;       // isotropic std (pixels)
    double theta = 0.0;   // anisotropic rotation (radians)
    double l1 = 1.0;      // eigenvalues of the covariance (pixels^2)
    double l2 = 1.0;
    int support = 15;     // odd side length
};

/// Gaussian kernel exp(-r^T Sigma^-1 r / 2) on the integer grid, normalized
/// to sum 1. Sigma = diag(d^2, d^2) or U(theta) diag(l1,l2) U(theta)^T.
Tensor make_kernel(const KernelSpec& spec);

enum class NoiseFieldKind { constant, peaks, gradient, vertical_split, custom };

struct NoiseFieldSpec {
    NoiseFieldKind kind = NoiseFieldKind::constant;
    double value = 0.1;       // constant level, or the high level of a ramp/map
    double low = -1.0;        // low level; negative selects the kind's default
    std::uint64_t seed = 0;   // placement seed for peaks
    int count = 4;            // bump count for peaks
    Tensor custom;            // explicit map for kind=custom
    std::string custom_path;  // provenance of the map, kept for manifests
};

/// The per-pixel std map M realized at h x w.
Tensor noise_map(const NoiseFieldSpec& field, std::size_t h, std::size_t w);

/// n = n1 (.) M with n1 i.i.d. standard normal; shape is [c,h,w].
Tensor synth_noise(const Shape& shape, const NoiseFieldSpec& field, Rng& rng);

struct DegradationSpec {
    Task task = Task::denoise;
    std::optional<KernelSpec> kernel;
    int scale = 1;
    NoiseFieldSpec noise;
};

/// Task consistency (denoise/deblock: scale 1 and no kernel; sr: kernel and
/// scale >= 2). Data synthesis calls this; apply_degradation itself does not.
void validate_degradation(const DegradationSpec& spec);

/// Deterministic part of the corruption: blur (true convolution, reflective
/// boundary) then direct downsampling keeping the upper-left pixel of each
/// s x s block. Differentiable in z.
Tensor apply_degradation(const Tensor& z, const DegradationSpec& spec);

/// Blur alone (true convolution with the given [k,k] kernel, reflective
/// boundary); shared by apply_degradation and kernel re-estimation.
Tensor blur_reflect(const Tensor& z, const Tensor& kernel);

/// Separable Catmull-Rom-style bicubic (a = -0.5, no antialias prefilter)
/// downsampling by integer factor s; edge-clamped sampling.
Tensor bicubic_downsample(const Tensor& img, int s);

/// Block-DCT codec: 8x8 DCT-II, standard luminance table scaled by qf,
/// round, dequantize, inverse DCT, clamp to [0,1]. Grayscale only.
Tensor jpeg_like_compress(const Tensor& z, int qf);

struct KernelEmbedding {
    Mat basis;                 // t x support^2, orthonormal rows
    std::vector<double> mean;  // support^2
    int t = 0;
    int support = 0;
};

KernelEmbedding kernel_pca_fit(const std::vector<Tensor>& kernels, int t);
std::vector<double> project_kernel(const KernelEmbedding& emb, const Tensor& kernel);
std::vector<double> reconstruct_kernel(const KernelEmbedding& emb,
                                       const std::vector<double>& code);

/// Each code component replicated over an h x w plane -> [t,h,w].
Tensor stretch_embedding(const std::vector<double>& code, std::size_t h,
                         std::size_t w);

/// Least-squares kernel k_b minimizing || bicubic_down(z*k_b) - direct_down(z*k_d) ||
/// over the probe images, normalized to sum 1.
Tensor reestimate_kernel(const Tensor& k_d, int s,
                         const std::vector<Tensor>& probe_images);

/// CLI-facing spec strings, e.g. "iso:d=1.6,support=15",
/// "aniso:theta=0.5,l1=4,l2=1", "peaks:seed=7,max=0.3", "const:value=0.1".
KernelSpec parse_kernel_spec(const std::string& text);
NoiseFieldSpec parse_noise_spec(const std::string& text);
std::string kernel_spec_str(const KernelSpec& spec);
std::string noise_spec_str(const NoiseFieldSpec& field);

}  // namespace virnet
