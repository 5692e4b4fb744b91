#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "virnet/networks.hpp"
#include "virnet/priors.hpp"
#include "virnet/task.hpp"
#include "virnet/training.hpp"

namespace virnet {

/// Synthetic dataset ranges. `patch` is the clean-image side: the observation
/// side for denoise/deblock, the high-resolution side for sr (the observation
/// is then patch/scale). Kernel and noise ranges are sampled uniformly per
/// sample; sr draws `kernel_count` fixed kernels and cycles through them so a
/// single model is trained across several blurs.
struct DatasetConfig {
    std::size_t count = 64;
    std::size_t val_count = 8;
    std::size_t patch = 32;
    std::string clean_dir;  // empty -> procedural generator
    int scale = 1;

    std::vector<std::string> noise_kinds = {"constant", "peaks", "gradient",
                                            "vertical_split"};
    double noise_low = 5.0 / 255.0;
    double noise_high = 50.0 / 255.0;

    int kernel_support = 15;
    double d_low = 0.2;
    double d_high = 3.0;
    double aniso_fraction = 0.5;
    double l_low = 0.2;
    double l_high = 8.0;
    std::size_t kernel_count = 2;
    std::size_t pca_pool = 64;  // kernels drawn to fit the code basis

    int qf_low = 10;
    int qf_high = 90;
};

/// One experiment = one JSON document. Parsing is strict: unknown keys at any
/// nesting level are rejected, and task-dependent defaults (window size,
/// sr noise range) are applied before explicit values override them.
struct ExperimentConfig {
    Task task = Task::denoise;
    std::uint64_t seed = 1234;
    std::string output_dir = "out";
    std::size_t eval_every = 0;  // validation cadence in iterations; 0 = off

    HyperParams hyperparams;
    NetworkConfig network;  // task/scale resolved from the fields above
    TrainConfig train;
    DatasetConfig dataset;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
ExperimentConfig load_experiment_config(const std::string& path);

/// Round-trippable serialization of every field, defaults included.
std::string experiment_config_json(const ExperimentConfig& config);

/// Cross-field checks beyond what the per-module validators cover (patch
/// divisibility, range ordering, sampler bounds). Throws ConfigError.
void validate_experiment_config(const ExperimentConfig& config);

}  // namespace virnet
