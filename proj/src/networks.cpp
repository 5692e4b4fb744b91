#include "virnet/networks.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "virnet/errors.hpp"
#include "virnet/linalg.hpp"

namespace virnet {
namespace {

constexpr std::size_t kKernel = 3;

struct ConvSpec {
    std::string name;
    std::size_t c_in = 0;
    std::size_t c_out = 0;
    bool activated = true;  // a LeakyReLU follows; also selects the init gain
};

std::size_t pool_factor(const NetworkConfig& cfg) {
    std::size_t f = 1;
    for (std::size_t d = 1; d < cfg.rnet_depth; ++d) f *= 2;
    return f;
}

// Tail upsample stages multiplying to scale: x2 stages first, then the odd
// remainder in one stage. scale 1 means no tail.
std::vector<std::size_t> upsample_factors(std::size_t scale) {
    std::vector<std::size_t> factors;
    while (scale % 2 == 0) {
        factors.push_back(2);
        scale /= 2;
    }
    if (scale > 1) factors.push_back(scale);
    return factors;
}

std::size_t rnet_in_channels(const NetworkConfig& cfg) {
    return cfg.img_channels + (cfg.task == Task::sr ? cfg.t : 0);
}

std::vector<ConvSpec> layer_plan(const NetworkConfig& cfg) {
    std::vector<ConvSpec> plan;
    const std::size_t s = cfg.snet_channels;
    plan.push_back({"snet.conv1", cfg.img_channels, s, true});
    plan.push_back({"snet.conv2", s, s, true});
    plan.push_back({"snet.conv3", s, s, true});
    plan.push_back({"snet.conv4", s, s, true});
    plan.push_back({"snet.conv5", s, 2 * cfg.img_channels, false});

    const std::size_t depth = cfg.rnet_depth;
    auto width = [&](std::size_t level) { return cfg.rnet_base_channels << level; };
    std::size_t c_in = rnet_in_channels(cfg);
    for (std::size_t d = 0; d < depth; ++d) {
        const std::string base = "rnet.enc" + std::to_string(d + 1);
        plan.push_back({base + ".conv1", c_in, width(d), true});
        plan.push_back({base + ".conv2", width(d), width(d), true});
        c_in = width(d);
    }
    for (std::size_t level = depth - 1; level-- > 0;) {
        const std::string base = "rnet.dec" + std::to_string(depth - 1 - level);
        plan.push_back({base + ".conv1", width(level + 1) + width(level), width(level), true});
        plan.push_back({base + ".conv2", width(level), width(level), true});
    }
    const auto tails = upsample_factors(cfg.scale);
    for (std::size_t i = 0; i < tails.size(); ++i) {
        const std::string base = "rnet.up" + std::to_string(i + 1);
        plan.push_back({base + ".conv", cfg.rnet_base_channels, cfg.rnet_base_channels, true});
    }
    plan.push_back({"rnet.head", cfg.rnet_base_channels, 2 * cfg.img_channels, false});
    return plan;
}

// Reshaped to [c_out, c_in*k*k] the weight has all singular values equal to
// the gain: orthonormal columns on the tall side, transposed when wide.
Tensor orthogonal_weight(std::size_t c_out, std::size_t c_in, double gain, Rng& rng) {
    const std::size_t rows = c_out;
    const std::size_t cols = c_in * kKernel * kKernel;
    std::vector<double> w(rows * cols, 0.0);
    if (rows >= cols) {
        const Mat m = orthonormal_columns(rows, cols, rng);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = gain * m.a[i];
    } else {
        const Mat m = orthonormal_columns(cols, rows, rng);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) w[r * cols + c] = gain * m.at(c, r);
    }
    return Tensor::from_data({c_out, c_in, kKernel, kKernel}, std::move(w),
                             /*requires_grad=*/true);
}

Tensor conv_block(const Tensor& x, const NetworkParams& p, const std::string& name,
                  double slope) {
    return leaky_relu(conv2d(x, p.at(name + ".w"), p.at(name + ".b"), 1, 1), slope);
}

void require_image(const Tensor& y, std::size_t channels, const char* net) {
    if (y.ndim() != 3 || y.shape()[0] != channels)
        throw ShapeError(std::string(net) + " expects a [" + std::to_string(channels) +
                         ", h, w] image, got " + shape_str(y.shape()));
}

}  // namespace

void validate_network_config(const NetworkConfig& config) {
    if (config.img_channels < 1 || config.snet_channels < 1 ||
        config.rnet_base_channels < 1)
        throw ConfigError("network channel widths must be >= 1");
    if (config.rnet_depth < 2)
        throw ConfigError("rnet_depth must be >= 2 (one pooling stage minimum)");
    if (!(config.leaky_slope > 0.0) || !(config.leaky_slope < 1.0))
        throw ConfigError("leaky_slope must lie in (0, 1)");
    if (config.task == Task::sr) {
        if (config.scale < 2)
            throw ConfigError("sr networks need scale >= 2, got " +
                              std::to_string(config.scale));
        if (config.t < 1)
            throw ConfigError("sr networks need t >= 1 kernel embedding channels");
    } else if (config.scale != 1) {
        throw ConfigError(std::string(task_name(config.task)) +
                          " networks must use scale 1, got " +
                          std::to_string(config.scale));
    }
}

const Tensor& NetworkParams::at(const std::string& name) const {
    for (const auto& [entry_name, tensor] : entries)
        if (entry_name == name) return tensor;
    throw ContractError("no parameter named '" + name + "'");
}

std::vector<Tensor> NetworkParams::trainable() const {
    std::vector<Tensor> out;
    out.reserve(entries.size());
    for (const auto& [name, tensor] : entries) out.push_back(tensor);
    return out;
}

NetworkParams init_params(const NetworkConfig& config, Rng& rng) {
    validate_network_config(config);
    NetworkParams params;
    params.config = config;
    for (const ConvSpec& spec : layer_plan(config)) {
        const double gain = spec.activated ? std::sqrt(2.0) : 1.0;
        params.entries.emplace_back(spec.name + ".w",
                                    orthogonal_weight(spec.c_out, spec.c_in, gain, rng));
        params.entries.emplace_back(spec.name + ".b",
                                    Tensor::zeros({spec.c_out}, /*requires_grad=*/true));
    }
    return params;
}

void load_state(NetworkParams& params, const NamedTensors& state) {
    if (state.size() != params.entries.size())
        throw IoError("checkpoint holds " + std::to_string(state.size()) +
                      " entries, networks expect " +
                      std::to_string(params.entries.size()));
    for (std::size_t i = 0; i < state.size(); ++i) {
        auto& [name, dst] = params.entries[i];
        const auto& [state_name, src] = state[i];
        if (state_name != name)
            throw IoError("checkpoint entry " + std::to_string(i) + " is '" +
                          state_name + "', expected '" + name + "'");
        if (src.shape() != dst.shape())
            throw IoError("checkpoint entry '" + name + "' has shape " +
                          shape_str(src.shape()) + ", expected " +
                          shape_str(dst.shape()));
        const auto values = src.values();
        std::copy(values.begin(), values.end(), dst.mutable_values().begin());
    }
}

InvGammaPosterior snet_forward(const Tensor& y, const NetworkParams& params) {
    const NetworkConfig& cfg = params.config;
    require_image(y, cfg.img_channels, "snet_forward");
    Tensor x = y;
    for (int i = 1; i <= 4; ++i)
        x = conv_block(x, params, "snet.conv" + std::to_string(i), cfg.leaky_slope);
    const Tensor raw =
        conv2d(x, params.at("snet.conv5.w"), params.at("snet.conv5.b"), 1, 1);
    const Tensor a_raw = slice_channels(raw, 0, cfg.img_channels);
    const Tensor b_raw = slice_channels(raw, cfg.img_channels, cfg.img_channels);
    // Both transforms get the additive floor: softplus underflows to exactly
    // zero for large negative raw values, which would let alpha touch 1.
    return {softplus(a_raw) + (1.0 + 1e-8), softplus(b_raw) + 1e-8};
}

GaussianPosterior rnet_forward(const Tensor& y,
                               const std::optional<Tensor>& stretched_h,
                               const NetworkParams& params) {
    const NetworkConfig& cfg = params.config;
    require_image(y, cfg.img_channels, "rnet_forward");
    const std::size_t h = y.shape()[1];
    const std::size_t w = y.shape()[2];
    const std::size_t divisor = pool_factor(cfg);
    if (h % divisor != 0 || w % divisor != 0)
        throw ShapeError("rnet_forward needs spatial dims divisible by " +
                         std::to_string(divisor) + ", got " + shape_str(y.shape()) +
                         " (pad the input first)");
    if (cfg.task == Task::sr) {
        if (!stretched_h)
            throw ContractError("sr rnet_forward needs the stretched kernel embedding");
        const Shape expected{cfg.t, h, w};
        if (stretched_h->shape() != expected)
            throw ShapeError("stretched kernel embedding has shape " +
                             shape_str(stretched_h->shape()) + ", expected " +
                             shape_str(expected));
    } else if (stretched_h) {
        throw ContractError(std::string(task_name(cfg.task)) +
                            " rnet_forward takes no kernel embedding");
    }

    Tensor x = cfg.task == Task::sr ? concat_channels(y, *stretched_h) : y;
    std::vector<Tensor> skips;
    for (std::size_t d = 0; d < cfg.rnet_depth; ++d) {
        if (d > 0) x = avg_pool2(x);
        const std::string base = "rnet.enc" + std::to_string(d + 1);
        x = conv_block(x, params, base + ".conv1", cfg.leaky_slope);
        x = conv_block(x, params, base + ".conv2", cfg.leaky_slope);
        if (d + 1 < cfg.rnet_depth) skips.push_back(x);
    }
    for (std::size_t i = 1; i < cfg.rnet_depth; ++i) {
        x = nearest_upsample(x, 2);
        x = concat_channels(x, skips[cfg.rnet_depth - 1 - i]);
        const std::string base = "rnet.dec" + std::to_string(i);
        x = conv_block(x, params, base + ".conv1", cfg.leaky_slope);
        x = conv_block(x, params, base + ".conv2", cfg.leaky_slope);
    }
    const auto tails = upsample_factors(cfg.scale);
    for (std::size_t i = 0; i < tails.size(); ++i) {
        x = nearest_upsample(x, tails[i]);
        x = conv_block(x, params, "rnet.up" + std::to_string(i + 1) + ".conv",
                       cfg.leaky_slope);
    }
    const Tensor head = conv2d(x, params.at("rnet.head.w"), params.at("rnet.head.b"), 1, 1);
    const Tensor mu_raw = slice_channels(head, 0, cfg.img_channels);
    const Tensor m2_raw = slice_channels(head, cfg.img_channels, cfg.img_channels);
    const Tensor residual = cfg.scale > 1 ? nearest_upsample(y, cfg.scale) : y;
    return {mu_raw + residual, softplus(m2_raw) + 1e-8};
}

}  // namespace virnet
