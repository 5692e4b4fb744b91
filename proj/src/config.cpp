#include "virnet/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "virnet/errors.hpp"

namespace virnet {
namespace {

using nlohmann::json;

void expect_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
}

void expect_keys(const json& obj, const std::string& where,
                 std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* key : allowed) {
            if (item.key() == key) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
}

double get_num(const json& obj, const char* key, double fallback, const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
    return v.get<double>();
}

std::int64_t get_int(const json& obj, const char* key, std::int64_t fallback,
                     const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigError(where + "." + key + " must be an integer");
    return v.get<std::int64_t>();
}

std::size_t get_size(const json& obj, const char* key, std::size_t fallback,
                     const std::string& where) {
    const std::int64_t raw = get_int(obj, key, static_cast<std::int64_t>(fallback), where);
    if (raw < 0) throw ConfigError(where + "." + key + " must be non-negative");
    return static_cast<std::size_t>(raw);
}

std::uint64_t get_u64(const json& obj, const char* key, std::uint64_t fallback,
                      const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
        return static_cast<std::uint64_t>(v.get<std::int64_t>());
    throw ConfigError(where + "." + key + " must be a non-negative integer");
}

std::string get_str(const json& obj, const char* key, const std::string& fallback,
                    const std::string& where) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) throw ConfigError(where + "." + key + " must be a string");
    return v.get<std::string>();
}

void parse_hyperparams(const json& obj, HyperParams& hp) {
    expect_object(obj, "hyperparams");
    expect_keys(obj, "hyperparams", {"eps0_sq", "p", "filter"});
    hp.eps0_sq = get_num(obj, "eps0_sq", hp.eps0_sq, "hyperparams");
    hp.p = static_cast<int>(get_int(obj, "p", hp.p, "hyperparams"));
    const std::string filter =
        get_str(obj, "filter", hp.filter_kind == FilterKind::gaussian ? "gaussian" : "average",
                "hyperparams");
    if (filter == "gaussian") {
        hp.filter_kind = FilterKind::gaussian;
    } else if (filter == "average") {
        hp.filter_kind = FilterKind::average;
    } else {
        throw ConfigError("hyperparams.filter must be 'gaussian' or 'average', got '" + filter +
                          "'");
    }
}

void parse_network(const json& obj, NetworkConfig& net) {
    expect_object(obj, "network");
    expect_keys(obj, "network",
                {"img_channels", "snet_channels", "rnet_base_channels", "rnet_depth", "t",
                 "leaky_slope"});
    net.img_channels = get_size(obj, "img_channels", net.img_channels, "network");
    net.snet_channels = get_size(obj, "snet_channels", net.snet_channels, "network");
    net.rnet_base_channels = get_size(obj, "rnet_base_channels", net.rnet_base_channels, "network");
    net.rnet_depth = get_size(obj, "rnet_depth", net.rnet_depth, "network");
    net.t = get_size(obj, "t", net.t, "network");
    net.leaky_slope = get_num(obj, "leaky_slope", net.leaky_slope, "network");
}

void parse_train(const json& obj, TrainConfig& tc) {
    expect_object(obj, "train");
    expect_keys(obj, "train",
                {"lr_init", "lr_decay", "lr_floor", "batch", "iters", "mc_samples", "seed"});
    tc.lr_init = get_num(obj, "lr_init", tc.lr_init, "train");
    tc.lr_decay = get_num(obj, "lr_decay", tc.lr_decay, "train");
    tc.lr_floor = get_num(obj, "lr_floor", tc.lr_floor, "train");
    tc.batch = get_size(obj, "batch", tc.batch, "train");
    tc.iters = get_size(obj, "iters", tc.iters, "train");
    tc.mc_samples = get_size(obj, "mc_samples", tc.mc_samples, "train");
    tc.seed = get_u64(obj, "seed", tc.seed, "train");
}

void parse_dataset(const json& obj, DatasetConfig& ds) {
    expect_object(obj, "dataset");
    expect_keys(obj, "dataset",
                {"count", "val_count", "patch", "clean_dir", "scale", "noise_kinds", "noise_low",
                 "noise_high", "kernel_support", "d_low", "d_high", "aniso_fraction", "l_low",
                 "l_high", "kernel_count", "pca_pool", "qf_low", "qf_high"});
    ds.count = get_size(obj, "count", ds.count, "dataset");
    ds.val_count = get_size(obj, "val_count", ds.val_count, "dataset");
    ds.patch = get_size(obj, "patch", ds.patch, "dataset");
    ds.clean_dir = get_str(obj, "clean_dir", ds.clean_dir, "dataset");
    ds.scale = static_cast<int>(get_int(obj, "scale", ds.scale, "dataset"));
    if (obj.contains("noise_kinds")) {
        const json& arr = obj.at("noise_kinds");
        if (!arr.is_array() || arr.empty())
            throw ConfigError("dataset.noise_kinds must be a non-empty array of strings");
        ds.noise_kinds.clear();
        for (const json& item : arr) {
            if (!item.is_string())
                throw ConfigError("dataset.noise_kinds entries must be strings");
            ds.noise_kinds.push_back(item.get<std::string>());
        }
    }
    ds.noise_low = get_num(obj, "noise_low", ds.noise_low, "dataset");
    ds.noise_high = get_num(obj, "noise_high", ds.noise_high, "dataset");
    ds.kernel_support = static_cast<int>(get_int(obj, "kernel_support", ds.kernel_support,
                                                 "dataset"));
    ds.d_low = get_num(obj, "d_low", ds.d_low, "dataset");
    ds.d_high = get_num(obj, "d_high", ds.d_high, "dataset");
    ds.aniso_fraction = get_num(obj, "aniso_fraction", ds.aniso_fraction, "dataset");
    ds.l_low = get_num(obj, "l_low", ds.l_low, "dataset");
    ds.l_high = get_num(obj, "l_high", ds.l_high, "dataset");
    ds.kernel_count = get_size(obj, "kernel_count", ds.kernel_count, "dataset");
    ds.pca_pool = get_size(obj, "pca_pool", ds.pca_pool, "dataset");
    ds.qf_low = static_cast<int>(get_int(obj, "qf_low", ds.qf_low, "dataset"));
    ds.qf_high = static_cast<int>(get_int(obj, "qf_high", ds.qf_high, "dataset"));
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    expect_object(root, "config");
    expect_keys(root, "config",
                {"task", "seed", "output_dir", "eval_every", "hyperparams", "network", "train",
                 "dataset"});

    ExperimentConfig config;
    // Task first: it selects the window/filter defaults and the sr noise range
    // (0..25 on the 8-bit scale) before any explicit value overrides them.
    config.task = parse_task(get_str(root, "task", "denoise", "config"));
    config.hyperparams = default_hyperparams(config.task);
    if (config.task == Task::sr) {
        config.dataset.noise_low = 0.0;
        config.dataset.noise_high = 25.0 / 255.0;
        config.dataset.scale = 2;
        config.dataset.patch = 48;
    }

    config.seed = get_u64(root, "seed", config.seed, "config");
    config.output_dir = get_str(root, "output_dir", config.output_dir, "config");
    config.eval_every = get_size(root, "eval_every", config.eval_every, "config");
    if (root.contains("hyperparams")) parse_hyperparams(root.at("hyperparams"), config.hyperparams);
    if (root.contains("dataset")) parse_dataset(root.at("dataset"), config.dataset);
    if (root.contains("network")) parse_network(root.at("network"), config.network);
    if (root.contains("train")) parse_train(root.at("train"), config.train);
    if (!root.contains("train") || !root.at("train").contains("seed"))
        config.train.seed = config.seed;

    config.network.task = config.task;
    config.network.scale =
        config.task == Task::sr ? static_cast<std::size_t>(config.dataset.scale) : 1;

    validate_experiment_config(config);
    return config;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::ostringstream text;
    text << in.rdbuf();
    return parse_experiment_config(text.str());
}

std::string experiment_config_json(const ExperimentConfig& config) {
    json root;
    root["task"] = task_name(config.task);
    root["seed"] = config.seed;
    root["output_dir"] = config.output_dir;
    root["eval_every"] = config.eval_every;
    root["hyperparams"] = {
        {"eps0_sq", config.hyperparams.eps0_sq},
        {"p", config.hyperparams.p},
        {"filter", config.hyperparams.filter_kind == FilterKind::gaussian ? "gaussian"
                                                                          : "average"},
    };
    root["network"] = {
        {"img_channels", config.network.img_channels},
        {"snet_channels", config.network.snet_channels},
        {"rnet_base_channels", config.network.rnet_base_channels},
        {"rnet_depth", config.network.rnet_depth},
        {"t", config.network.t},
        {"leaky_slope", config.network.leaky_slope},
    };
    root["train"] = {
        {"lr_init", config.train.lr_init},   {"lr_decay", config.train.lr_decay},
        {"lr_floor", config.train.lr_floor}, {"batch", config.train.batch},
        {"iters", config.train.iters},       {"mc_samples", config.train.mc_samples},
        {"seed", config.train.seed},
    };
    const DatasetConfig& ds = config.dataset;
    root["dataset"] = {
        {"count", ds.count},
        {"val_count", ds.val_count},
        {"patch", ds.patch},
        {"clean_dir", ds.clean_dir},
        {"scale", ds.scale},
        {"noise_kinds", ds.noise_kinds},
        {"noise_low", ds.noise_low},
        {"noise_high", ds.noise_high},
        {"kernel_support", ds.kernel_support},
        {"d_low", ds.d_low},
        {"d_high", ds.d_high},
        {"aniso_fraction", ds.aniso_fraction},
        {"l_low", ds.l_low},
        {"l_high", ds.l_high},
        {"kernel_count", ds.kernel_count},
        {"pca_pool", ds.pca_pool},
        {"qf_low", ds.qf_low},
        {"qf_high", ds.qf_high},
    };
    return root.dump(2) + "\n";
}

void validate_experiment_config(const ExperimentConfig& config) {
    validate_network_config(config.network);
    validate_train_config(config.train);

    const HyperParams& hp = config.hyperparams;
    if (hp.eps0_sq <= 0.0 || !std::isfinite(hp.eps0_sq))
        throw ConfigError("hyperparams.eps0_sq must be positive and finite");
    if (hp.p < 3 || hp.p % 2 == 0) throw ConfigError("hyperparams.p must be odd and >= 3");

    const DatasetConfig& ds = config.dataset;
    if (ds.count < 1) throw ConfigError("dataset.count must be >= 1");
    if (ds.patch < 8) throw ConfigError("dataset.patch must be >= 8");
    if (ds.clean_dir.empty() && config.network.img_channels != 1)
        throw ConfigError("the procedural image generator is grayscale; multi-channel "
                          "datasets need a clean_dir");
    const std::size_t pool = std::size_t{1} << (config.network.rnet_depth - 1);
    if (config.task == Task::sr) {
        if (ds.scale < 2) throw ConfigError("dataset.scale must be >= 2 for sr");
        if (ds.patch % static_cast<std::size_t>(ds.scale) != 0)
            throw ConfigError("dataset.patch must be divisible by the sr scale");
        if ((ds.patch / static_cast<std::size_t>(ds.scale)) % pool != 0)
            throw ConfigError("dataset.patch / scale must be divisible by " +
                              std::to_string(pool) + " (the restoration net pooling factor)");
        if (ds.kernel_support < 3 || ds.kernel_support % 2 == 0)
            throw ConfigError("dataset.kernel_support must be odd and >= 3");
        if (!(ds.d_low >= 0.2 && ds.d_low <= ds.d_high && ds.d_high <= 3.0))
            throw ConfigError("dataset kernel width range must satisfy 0.2 <= d_low <= d_high <= 3.0");
        if (!(ds.l_low >= 0.2 && ds.l_low <= ds.l_high && ds.l_high <= 8.0))
            throw ConfigError("dataset kernel axis range must satisfy 0.2 <= l_low <= l_high <= 8.0");
        if (!(ds.aniso_fraction >= 0.0 && ds.aniso_fraction <= 1.0))
            throw ConfigError("dataset.aniso_fraction must lie in [0, 1]");
        if (ds.kernel_count < 1) throw ConfigError("dataset.kernel_count must be >= 1");
        if (ds.pca_pool < config.network.t)
            throw ConfigError("dataset.pca_pool must be >= network.t to fit the kernel basis");
    } else {
        if (ds.scale != 1) throw ConfigError("dataset.scale must be 1 unless the task is sr");
        if (ds.patch % pool != 0)
            throw ConfigError("dataset.patch must be divisible by " + std::to_string(pool) +
                              " (the restoration net pooling factor)");
    }
    if (config.task == Task::deblock) {
        if (!(1 <= ds.qf_low && ds.qf_low <= ds.qf_high && ds.qf_high <= 100))
            throw ConfigError("dataset quality range must satisfy 1 <= qf_low <= qf_high <= 100");
    }
    if (!(ds.noise_low >= 0.0 && ds.noise_low <= ds.noise_high))
        throw ConfigError("dataset noise range must satisfy 0 <= noise_low <= noise_high");
    if (ds.noise_kinds.empty()) throw ConfigError("dataset.noise_kinds must not be empty");
    for (const std::string& kind : ds.noise_kinds) {
        if (kind != "constant" && kind != "peaks" && kind != "gradient" &&
            kind != "vertical_split")
            throw ConfigError("dataset.noise_kinds entry '" + kind +
                              "' is not a synthesizable field kind");
    }
}

}  // namespace virnet
