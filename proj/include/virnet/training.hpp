#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "virnet/networks.hpp"
#include "virnet/objective.hpp"
#include "virnet/priors.hpp"

namespace virnet {

struct TrainConfig {
    double lr_init = 2e-4;
    double lr_decay = 0.5;
    double lr_floor = 3e-6;
    std::size_t batch = 4;
    std::size_t iters = 100;
    std::size_t mc_samples = 1;
    std::uint64_t seed = 0;
    // Where a non-finite-loss abort dumps the parameters; empty skips the dump.
    std::string snapshot_path;
};

void validate_train_config(const TrainConfig& config);

/// Stepwise schedule: the iteration budget splits into eight equal segments
/// (the reference schedule halves eight times over its full run) and the rate
/// halves at each boundary, never dropping below lr_floor.
double lr_at(const TrainConfig& config, std::size_t iteration);

/// First-order optimizer with bias-corrected moment estimates
/// (beta1 = 0.9, beta2 = 0.999, eps = 1e-8). step() consumes the gradients
/// currently accumulated on the tracked leaves; grad_scale < 1 applies norm
/// clipping without mutating the gradient buffers.
class Adam {
public:
    explicit Adam(std::vector<Tensor> params, double beta1 = 0.9,
                  double beta2 = 0.999, double eps = 1e-8);
    void step(double lr, double grad_scale = 1.0);
    std::size_t steps() const { return t_; }

    const std::vector<std::vector<double>>& moments_m() const { return m_; }
    const std::vector<std::vector<double>>& moments_v() const { return v_; }
    /// Reinstalls saved moments; sizes must match the tracked leaves.
    void restore(std::vector<std::vector<double>> m, std::vector<std::vector<double>> v,
                 std::size_t steps);

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double beta1_;
    double beta2_;
    double eps_;
    std::size_t t_ = 0;
};

/// One trace row per iteration; the four ELBO columns use the same per-pixel
/// normalization as the loss.
struct TraceRow {
    std::size_t iteration = 0;  // 1-based
    double likelihood = 0.0;
    double kl_z = 0.0;
    double kl_sigma = 0.0;
    double total = 0.0;
    double grad_norm = 0.0;  // global norm before clipping
    double lr = 0.0;
};

/// Everything an interrupted run needs to continue: parameter values, the
/// optimizer moments, and the epoch/clip bookkeeping. Serialized through the
/// checkpoint container, so stored values round through 32-bit floats.
struct TrainerState {
    std::size_t completed = 0;  // iterations already run
    std::size_t adam_steps = 0;
    double clip_threshold = 0.0;
    double epoch_norm_sum = 0.0;
    std::size_t epoch_iters = 0;
    NamedTensors params;
    std::vector<std::vector<double>> adam_m;
    std::vector<std::vector<double>> adam_v;
};

void save_trainer_state(const std::filesystem::path& path, const TrainerState& state);
TrainerState load_trainer_state(const std::filesystem::path& path);

/// Optional periodic callback (validation metrics and the like);
/// eval_every == 0 disables it.
struct TrainHooks {
    std::size_t eval_every = 0;
    std::function<void(std::size_t iteration, const NetworkParams&)> on_eval;
};

struct TrainResult {
    NetworkParams params;
    std::vector<TraceRow> trace;  // rows for the iterations run in this call
    /// Clip threshold active in each epoch after the first (the mean recorded
    /// gradient norm of the epoch before).
    std::vector<double> clip_thresholds;
    TrainerState state;  // final state, ready to persist for a later resume
};

/// Full training loop: shuffled epochs over the dataset, Adam steps with the
/// lr schedule, and adaptive gradient clipping (epoch e+1 clips at the mean
/// norm recorded during epoch e; the first epoch is unclipped). Deterministic
/// in config.seed. A non-finite loss aborts with NumericError after writing
/// the snapshot checkpoint. With `resume` the loop continues at
/// resume->completed on a fresh shuffle stream; config.iters stays the total
/// budget, so a resumed call runs only the remaining iterations.
TrainResult train(const std::vector<TrainSample>& dataset,
                  const NetworkConfig& net_config, const TrainConfig& config,
                  const HyperParams& hp, const TrainerState* resume = nullptr,
                  const TrainHooks* hooks = nullptr);

/// CSV with header iteration,likelihood,kl_z,kl_sigma,total,grad_norm,lr and
/// full double precision, so equal traces give byte-identical files.
void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);
std::string trace_csv_header();
std::string trace_row_line(const TraceRow& row);

}  // namespace virnet
