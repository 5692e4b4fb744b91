#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "virnet/distributions.hpp"
#include "virnet/io.hpp"
#include "virnet/rng.hpp"
#include "virnet/task.hpp"
#include "virnet/tensor.hpp"

namespace virnet {

/// Widths and topology of the two inference networks. The restoration net is
/// a small U-Net with rnet_depth encoder blocks (the deepest doubles as the
/// bottleneck) and rnet_depth - 1 decoder blocks, so spatial dims must be
/// divisible by 2^(rnet_depth - 1).
struct NetworkConfig {
    Task task = Task::denoise;
    std::size_t img_channels = 1;
    std::size_t snet_channels = 32;
    std::size_t rnet_base_channels = 32;
    std::size_t rnet_depth = 3;
    // Kernel embedding channels concatenated to the RNet input; sr only.
    std::size_t t = 8;
    // RNet output resolution factor; >= 2 iff task == sr.
    std::size_t scale = 1;
    double leaky_slope = 0.2;
};

/// Throws ConfigError when widths, depth, slope or scale are out of range or
/// inconsistent with the task.
void validate_network_config(const NetworkConfig& config);

/// Every weight and bias of both networks as named gradient-tracked leaves.
/// Entry order follows the layer plan and is stable, so checkpoints written
/// from one instance load into another bit-exactly.
struct NetworkParams {
    NetworkConfig config;
    NamedTensors entries;

    /// Lookup by name; ContractError when absent.
    const Tensor& at(const std::string& name) const;
    /// All tensors in entry order, for the optimizer.
    std::vector<Tensor> trainable() const;
};

/// Orthogonal initialization: each conv weight reshaped to [c_out, c_in*k*k]
/// has all singular values equal to the gain (sqrt(2) when a LeakyReLU
/// follows, 1 for the two un-activated heads); biases start at zero.
NetworkParams init_params(const NetworkConfig& config, Rng& rng);

/// Copies checkpoint values into an existing parameter set. Entry names,
/// order and shapes must match exactly (IoError otherwise); gradient tracking
/// of the leaves is preserved.
void load_state(NetworkParams& params, const NamedTensors& state);

/// Noise network: five 3x3 convs with LeakyReLU after all but the last. The
/// two head channels per image channel map to alpha = 1 + softplus(raw) + 1e-8
/// and beta = softplus(raw) + 1e-8, at the input resolution.
InvGammaPosterior snet_forward(const Tensor& y, const NetworkParams& params);

/// Restoration network: U-Net over y (with stretched_h concatenated for sr),
/// a nearest-upsample tail taking the output to scale * input resolution, and
/// an un-activated head giving mu = raw + (upsampled) y and
/// m2 = softplus(raw) + 1e-8.
/// stretched_h must be present iff task == sr (ContractError). Spatial dims
/// not divisible by 2^(rnet_depth - 1) raise ShapeError; callers pad first
/// (infer reflect-pads and crops).
GaussianPosterior rnet_forward(const Tensor& y,
                               const std::optional<Tensor>& stretched_h,
                               const NetworkParams& params);

}  // namespace virnet
