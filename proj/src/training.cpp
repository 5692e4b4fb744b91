#include "virnet/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <utility>

#include "virnet/errors.hpp"
#include "virnet/io.hpp"

namespace virnet {
namespace {

// The reference schedule halves the rate eight times across its full budget.
constexpr std::size_t kLrSegments = 8;

double global_grad_norm(const std::vector<Tensor>& params) {
    double acc = 0.0;
    for (const Tensor& p : params) {
        if (!p.has_grad()) continue;
        for (double g : p.grad()) acc += g * g;
    }
    return std::sqrt(acc);
}

}  // namespace

void validate_train_config(const TrainConfig& config) {
    if (!(config.lr_init > 0.0) || !(config.lr_floor > 0.0))
        throw ConfigError("learning rates must be positive");
    if (config.lr_floor > config.lr_init)
        throw ConfigError("lr_floor exceeds lr_init");
    if (!(config.lr_decay > 0.0) || !(config.lr_decay < 1.0))
        throw ConfigError("lr_decay must lie in (0, 1)");
    if (config.batch < 1) throw ConfigError("batch must be >= 1");
    // iters == 0 is legal: a zero-iteration run just materializes the
    // initialization (the resume path also relies on this).
    if (config.mc_samples < 1) throw ConfigError("mc_samples must be >= 1");
}

double lr_at(const TrainConfig& config, std::size_t iteration) {
    const std::size_t segment = std::max<std::size_t>(1, config.iters / kLrSegments);
    std::size_t halvings = iteration / segment;
    if (halvings > kLrSegments - 1) halvings = kLrSegments - 1;
    double lr = config.lr_init;
    for (std::size_t i = 0; i < halvings; ++i) lr *= config.lr_decay;
    return std::max(lr, config.lr_floor);
}

Adam::Adam(std::vector<Tensor> params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        m_.emplace_back(p.size(), 0.0);
        v_.emplace_back(p.size(), 0.0);
    }
}

void Adam::restore(std::vector<std::vector<double>> m, std::vector<std::vector<double>> v,
                   std::size_t steps) {
    if (m.size() != params_.size() || v.size() != params_.size())
        throw ContractError("optimizer state does not match the tracked leaves");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (m[i].size() != params_[i].size() || v[i].size() != params_[i].size())
            throw ContractError("optimizer state does not match the tracked leaves");
    }
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = steps;
}

void Adam::step(double lr, double grad_scale) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        auto& values = p.mutable_values();
        const auto grad = p.grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = (grad.empty() ? 0.0 : grad[i]) * grad_scale;
            m_[pi][i] = beta1_ * m_[pi][i] + (1.0 - beta1_) * g;
            v_[pi][i] = beta2_ * v_[pi][i] + (1.0 - beta2_) * (g * g);
            const double m_hat = m_[pi][i] / bc1;
            const double v_hat = v_[pi][i] / bc2;
            values[i] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
        }
    }
}

TrainResult train(const std::vector<TrainSample>& dataset,
                  const NetworkConfig& net_config, const TrainConfig& config,
                  const HyperParams& hp, const TrainerState* resume,
                  const TrainHooks* hooks) {
    validate_train_config(config);
    validate_network_config(net_config);
    if (dataset.empty()) throw ContractError("train needs a non-empty dataset");

    const std::size_t start = resume ? resume->completed : 0;
    if (start > config.iters)
        throw ContractError("resume state has already run " + std::to_string(start) +
                            " iterations, past the budget of " +
                            std::to_string(config.iters));

    // A resumed run gets its own stream keyed on the restart point; the batch
    // composition between the restart and the next epoch boundary therefore
    // differs from an uninterrupted run, but every draw stays deterministic.
    Rng rng = resume ? Rng(config.seed, start + 1) : Rng(config.seed);
    TrainResult result;
    result.params = init_params(net_config, rng);
    std::vector<Tensor> leaves = result.params.trainable();
    Adam opt(leaves);
    if (resume) {
        load_state(result.params, resume->params);
        opt.restore(resume->adam_m, resume->adam_v, resume->adam_steps);
    }

    const std::size_t n = dataset.size();
    const std::size_t per_epoch = (n + config.batch - 1) / config.batch;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    double clip_threshold = resume ? resume->clip_threshold : 0.0;  // 0: unclipped
    double epoch_norm_sum = resume ? resume->epoch_norm_sum : 0.0;
    std::size_t epoch_iters = resume ? resume->epoch_iters : 0;
    std::size_t cursor = 0;
    bool need_shuffle = true;  // the first iteration of this call always reshuffles

    result.trace.reserve(config.iters - start);
    for (std::size_t iter = start; iter < config.iters; ++iter) {
        if (iter % per_epoch == 0 || need_shuffle) {
            if (iter % per_epoch == 0 && iter > 0 && epoch_iters > 0) {
                clip_threshold = epoch_norm_sum / static_cast<double>(epoch_iters);
                result.clip_thresholds.push_back(clip_threshold);
                epoch_norm_sum = 0.0;
                epoch_iters = 0;
            }
            for (std::size_t i = 0; i + 1 < n; ++i) {
                const auto j = static_cast<std::size_t>(
                    rng.uniform_int(static_cast<std::int64_t>(i),
                                    static_cast<std::int64_t>(n - 1)));
                std::swap(order[i], order[j]);
            }
            cursor = 0;
            need_shuffle = false;
        }

        std::vector<TrainSample> batch;
        const std::size_t first = cursor * config.batch;
        const std::size_t last = std::min(first + config.batch, n);
        for (std::size_t i = first; i < last; ++i) batch.push_back(dataset[order[i]]);
        ++cursor;

        for (Tensor& leaf : leaves) leaf.zero_grad();
        const LossResult batch_loss = loss(batch, result.params, hp, rng, config.mc_samples);
        const double value = batch_loss.value.item();
        if (!std::isfinite(value)) {
            if (!config.snapshot_path.empty())
                save_checkpoint(config.snapshot_path, result.params.entries);
            throw NumericError(
                "training loss became non-finite at iteration " +
                std::to_string(iter + 1) +
                (config.snapshot_path.empty()
                     ? std::string()
                     : " (parameter snapshot at " + config.snapshot_path + ")"));
        }
        backward(batch_loss.value);

        const double norm = global_grad_norm(leaves);
        const double scale =
            clip_threshold > 0.0 && norm > clip_threshold ? clip_threshold / norm : 1.0;
        const double lr = lr_at(config, iter);
        opt.step(lr, scale);
        epoch_norm_sum += norm;
        ++epoch_iters;

        const ElboTerms& t = batch_loss.mean_terms;
        result.trace.push_back(
            {iter + 1, t.likelihood, t.kl_z, t.kl_sigma, t.total, norm, lr});
        if (hooks && hooks->eval_every > 0 && hooks->on_eval &&
            (iter + 1) % hooks->eval_every == 0)
            hooks->on_eval(iter + 1, result.params);
    }

    result.state.completed = config.iters;
    result.state.adam_steps = opt.steps();
    result.state.clip_threshold = clip_threshold;
    result.state.epoch_norm_sum = epoch_norm_sum;
    result.state.epoch_iters = epoch_iters;
    result.state.params = result.params.entries;
    result.state.adam_m = opt.moments_m();
    result.state.adam_v = opt.moments_v();
    return result;
}

void save_trainer_state(const std::filesystem::path& path, const TrainerState& state) {
    NamedTensors entries;
    entries.emplace_back(
        "meta", Tensor::from_data({5}, {static_cast<double>(state.completed),
                                        static_cast<double>(state.adam_steps),
                                        state.clip_threshold, state.epoch_norm_sum,
                                        static_cast<double>(state.epoch_iters)}));
    for (const auto& [name, t] : state.params) entries.emplace_back("param." + name, t);
    if (state.adam_m.size() != state.params.size() ||
        state.adam_v.size() != state.params.size())
        throw ContractError("trainer state moments do not match its parameters");
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        const Shape& shape = state.params[i].second.shape();
        entries.emplace_back("adam.m." + state.params[i].first,
                             Tensor::from_data(shape, state.adam_m[i]));
        entries.emplace_back("adam.v." + state.params[i].first,
                             Tensor::from_data(shape, state.adam_v[i]));
    }
    save_checkpoint(path, entries);
}

TrainerState load_trainer_state(const std::filesystem::path& path) {
    const NamedTensors entries = load_checkpoint(path);
    if (entries.empty() || entries[0].first != "meta" || entries[0].second.size() != 5)
        throw IoError("not a trainer state checkpoint: " + path.string());
    TrainerState state;
    const auto meta = entries[0].second.values();
    state.completed = static_cast<std::size_t>(meta[0]);
    state.adam_steps = static_cast<std::size_t>(meta[1]);
    state.clip_threshold = meta[2];
    state.epoch_norm_sum = meta[3];
    state.epoch_iters = static_cast<std::size_t>(meta[4]);
    std::size_t i = 1;
    for (; i < entries.size() && entries[i].first.rfind("param.", 0) == 0; ++i)
        state.params.emplace_back(entries[i].first.substr(6), entries[i].second);
    for (; i + 1 < entries.size(); i += 2) {
        if (entries[i].first.rfind("adam.m.", 0) != 0 ||
            entries[i + 1].first.rfind("adam.v.", 0) != 0)
            throw IoError("trainer state has malformed optimizer entries: " + path.string());
        auto mv = entries[i].second.values();
        auto vv = entries[i + 1].second.values();
        state.adam_m.emplace_back(mv.begin(), mv.end());
        state.adam_v.emplace_back(vv.begin(), vv.end());
    }
    if (state.adam_m.size() != state.params.size())
        throw IoError("trainer state optimizer entries do not pair with its parameters: " +
                      path.string());
    return state;
}

std::string trace_csv_header() { return "iteration,likelihood,kl_z,kl_sigma,total,grad_norm,lr\n"; }

std::string trace_row_line(const TraceRow& row) {
    char line[512];
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  row.iteration, row.likelihood, row.kl_z, row.kl_sigma, row.total,
                  row.grad_norm, row.lr);
    return line;
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open trace file " + path);
    out << trace_csv_header();
    for (const TraceRow& row : trace) out << trace_row_line(row);
    if (!out) throw IoError("failed writing trace file " + path);
}

}  // namespace virnet
