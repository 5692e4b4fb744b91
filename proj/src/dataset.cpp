#include "virnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "virnet/errors.hpp"
#include "virnet/io.hpp"

namespace virnet {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

double smoothstep(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

std::string index_name(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04zu.virt", i);
    return buf;
}

KernelSpec draw_kernel(const DatasetConfig& ds, Rng& rng) {
    KernelSpec spec;
    spec.support = ds.kernel_support;
    if (rng.uniform() < ds.aniso_fraction) {
        spec.kind = KernelKind::anisotropic;
        spec.theta = rng.uniform(0.0, std::numbers::pi);
        spec.l1 = rng.uniform(ds.l_low, ds.l_high);
        spec.l2 = rng.uniform(ds.l_low, ds.l_high);
    } else {
        spec.kind = KernelKind::isotropic;
        spec.d = rng.uniform(ds.d_low, ds.d_high);
    }
    return spec;
}

NoiseFieldSpec draw_noise(const DatasetConfig& ds, Rng& rng) {
    const std::size_t pick =
        static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(
                                                        ds.noise_kinds.size() - 1)));
    const std::string& kind = ds.noise_kinds[pick];
    const double level = rng.uniform(ds.noise_low, ds.noise_high);
    NoiseFieldSpec field;
    field.value = level;
    if (kind == "constant") {
        field.kind = NoiseFieldKind::constant;
    } else if (kind == "peaks") {
        field.kind = NoiseFieldKind::peaks;
        field.seed = rng.uniform_u64();
    } else if (kind == "gradient") {
        field.kind = NoiseFieldKind::gradient;
    } else {
        field.kind = NoiseFieldKind::vertical_split;
    }
    return field;
}

// The on-disk tensor format stores 32-bit floats. Corruption is applied to
// the quantized clean image so re-deriving it from the stored files is
// bit-exact.
Tensor quantize_f32(const Tensor& t) {
    auto v = t.values();
    std::vector<double> out(v.begin(), v.end());
    for (double& x : out) x = static_cast<double>(static_cast<float>(x));
    return Tensor::from_data(t.shape(), std::move(out));
}

Tensor crop(const Tensor& img, std::size_t r0, std::size_t c0, std::size_t side) {
    const Shape& s = img.shape();
    const std::size_t c = s[0], h = s[1], w = s[2];
    std::vector<double> out(c * side * side);
    auto v = img.values();
    for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x)
                out[(ch * side + y) * side + x] = v[(ch * h + r0 + y) * w + c0 + x];
    return Tensor::from_data({c, side, side}, out);
}

std::vector<fs::path> list_clean_files(const std::string& dir) {
    std::vector<fs::path> files;
    if (!fs::is_directory(dir)) throw IoError("clean_dir does not exist: " + dir);
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".virt") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("clean_dir has no .pgm or .virt images: " + dir);
    return files;
}

Tensor clean_patch(const ExperimentConfig& config, const std::vector<fs::path>& pool,
                   Rng& rng) {
    const std::size_t side = config.dataset.patch;
    if (pool.empty()) return procedural_image(side, side, rng);
    const auto& path = pool[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(pool.size() - 1)))];
    Tensor img = path.extension() == ".pgm" ? read_pgm(path) : read_virt(path);
    if (img.ndim() == 2) {
        img = Tensor::from_data({1, img.shape()[0], img.shape()[1]},
                                {img.values().begin(), img.values().end()});
    }
    if (img.ndim() != 3 || img.shape()[0] != config.network.img_channels)
        throw IoError("clean image " + path.string() + " does not match img_channels");
    if (img.shape()[1] < side || img.shape()[2] < side)
        throw IoError("clean image " + path.string() + " is smaller than the patch size");
    const std::size_t r0 = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(img.shape()[1] - side)));
    const std::size_t c0 = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(img.shape()[2] - side)));
    return crop(img, r0, c0, side);
}

}  // namespace

Tensor procedural_image(std::size_t h, std::size_t w, Rng& rng) {
    if (h < 2 || w < 2) throw ShapeError("procedural_image needs h, w >= 2");
    std::vector<double> img(h * w);

    const double base = rng.uniform(0.25, 0.65);
    const double gx = rng.uniform(-0.35, 0.35);
    const double gy = rng.uniform(-0.35, 0.35);
    for (std::size_t y = 0; y < h; ++y) {
        const double v = static_cast<double>(y) / static_cast<double>(h - 1) - 0.5;
        for (std::size_t x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) / static_cast<double>(w - 1) - 0.5;
            img[y * w + x] = base + gx * u + gy * v;
        }
    }

    const int shapes = static_cast<int>(rng.uniform_int(2, 5));
    for (int s = 0; s < shapes; ++s) {
        const bool disk = rng.uniform() < 0.5;
        const double cx = rng.uniform(0.1, 0.9);
        const double cy = rng.uniform(0.1, 0.9);
        const double radius = rng.uniform(0.08, 0.28);
        const double soft = radius * rng.uniform(0.15, 0.5);
        const double amp = rng.uniform(0.18, 0.45) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        for (std::size_t y = 0; y < h; ++y) {
            const double v = static_cast<double>(y) / static_cast<double>(h - 1);
            for (std::size_t x = 0; x < w; ++x) {
                const double u = static_cast<double>(x) / static_cast<double>(w - 1);
                const double du = u - cx, dv = v - cy;
                const double dist = disk ? std::sqrt(du * du + dv * dv)
                                         : std::max(std::abs(du), std::abs(dv));
                img[y * w + x] += amp * smoothstep((radius - dist) / soft);
            }
        }
    }

    const double tex_amp = rng.uniform(0.02, 0.07);
    const double fx = rng.uniform(2.0, 9.0);
    const double fy = rng.uniform(2.0, 9.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (std::size_t y = 0; y < h; ++y) {
        const double v = static_cast<double>(y) / static_cast<double>(h - 1);
        for (std::size_t x = 0; x < w; ++x) {
            const double u = static_cast<double>(x) / static_cast<double>(w - 1);
            double val = img[y * w + x] +
                         tex_amp * std::sin(2.0 * std::numbers::pi * (fx * u + fy * v) + phase);
            img[y * w + x] = std::clamp(val, 0.0, 1.0);
        }
    }
    return Tensor::from_data({1, h, w}, img);
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
    json root;
    root["task"] = task_name(manifest.task);
    root["seed"] = manifest.seed;
    root["scale"] = manifest.scale;
    root["embedding"] = manifest.embedding;
    json samples = json::array();
    for (const SampleRecord& rec : manifest.samples) {
        samples.push_back({{"clean", rec.clean},
                           {"corrupted", rec.corrupted},
                           {"kernel", rec.kernel},
                           {"scale", rec.scale},
                           {"noise", rec.noise},
                           {"qf", rec.qf},
                           {"seed", rec.seed}});
    }
    root["samples"] = std::move(samples);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << root.dump(2) << "\n";
    if (!out) throw IoError("write failed for manifest " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest " + path.string());
    json root;
    try {
        root = json::parse(in);
    } catch (const json::exception& e) {
        throw IoError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    DatasetManifest m;
    try {
        m.task = parse_task(root.at("task").get<std::string>());
        m.seed = root.at("seed").get<std::uint64_t>();
        m.scale = root.at("scale").get<int>();
        m.embedding = root.value("embedding", std::string{});
        for (const json& item : root.at("samples")) {
            SampleRecord rec;
            rec.clean = item.at("clean").get<std::string>();
            rec.corrupted = item.at("corrupted").get<std::string>();
            rec.kernel = item.value("kernel", std::string{});
            rec.scale = item.at("scale").get<int>();
            rec.noise = item.value("noise", std::string{});
            rec.qf = item.value("qf", 0);
            rec.seed = item.at("seed").get<std::uint64_t>();
            m.samples.push_back(std::move(rec));
        }
    } catch (const json::exception& e) {
        throw IoError("manifest " + path.string() + " is missing fields: " + e.what());
    }
    const fs::path dir = path.parent_path();
    auto require_file = [&](const std::string& rel, const char* what) {
        if (rel.empty()) return;
        if (!fs::is_regular_file(dir / rel))
            throw IoError("manifest references a missing " + std::string(what) + ": " +
                          (dir / rel).string());
    };
    require_file(m.embedding, "embedding file");
    for (const SampleRecord& rec : m.samples) {
        require_file(rec.clean, "clean image");
        require_file(rec.corrupted, "corrupted image");
    }
    return m;
}

DegradationSpec record_spec(const SampleRecord& record, Task task) {
    DegradationSpec spec;
    spec.task = task;
    spec.scale = record.scale;
    if (!record.kernel.empty()) spec.kernel = parse_kernel_spec(record.kernel);
    if (!record.noise.empty()) spec.noise = parse_noise_spec(record.noise);
    return spec;
}

Tensor corrupt_sample(const Tensor& clean, const SampleRecord& record, Task task) {
    DegradationSpec spec = record_spec(record, task);
    validate_degradation(spec);
    Tensor y = apply_degradation(clean, spec);
    if (record.qf > 0) y = jpeg_like_compress(y, record.qf);
    if (!record.noise.empty()) {
        Rng stream(record.seed);
        y = y + synth_noise(y.shape(), spec.noise, stream);
    }
    return y;
}

SynthResult synthesize_dataset(const ExperimentConfig& config, const fs::path& dir,
                               int workers) {
    validate_experiment_config(config);
    if (workers < 1) throw ConfigError("worker count must be >= 1");
    const DatasetConfig& ds = config.dataset;
    fs::create_directories(dir / "clean");
    fs::create_directories(dir / "corrupt");

    const Rng master(config.seed);
    const std::vector<fs::path> clean_pool =
        ds.clean_dir.empty() ? std::vector<fs::path>{} : list_clean_files(ds.clean_dir);

    // Kernel streams sit far above any plausible sample index so adding
    // samples never shifts them.
    std::vector<KernelSpec> kernels;
    std::string embedding_name;
    if (config.task == Task::sr) {
        for (std::size_t j = 0; j < ds.kernel_count; ++j) {
            Rng stream = master.fork((std::uint64_t{1} << 32) + j);
            kernels.push_back(draw_kernel(ds, stream));
        }
        std::vector<Tensor> pool;
        for (std::size_t j = 0; j < ds.pca_pool; ++j) {
            Rng stream = master.fork((std::uint64_t{1} << 33) + j);
            pool.push_back(make_kernel(draw_kernel(ds, stream)));
        }
        for (const KernelSpec& spec : kernels) pool.push_back(make_kernel(spec));
        const KernelEmbedding emb =
            kernel_pca_fit(pool, static_cast<int>(config.network.t));
        embedding_name = "kernel_embedding.ckpt";
        save_embedding(dir / embedding_name, emb);
    }

    const std::size_t total = ds.count + ds.val_count;
    std::vector<SampleRecord> records(total);

    auto build_sample = [&](std::size_t i) {
        Rng stream = master.fork(i);
        const Tensor clean = quantize_f32(clean_patch(config, clean_pool, stream));
        SampleRecord rec;
        rec.clean = "clean/" + index_name(i);
        rec.corrupted = "corrupt/" + index_name(i);
        rec.scale = config.task == Task::sr ? ds.scale : 1;
        if (config.task == Task::sr) rec.kernel = kernel_spec_str(kernels[i % kernels.size()]);
        if (config.task == Task::deblock) {
            rec.qf = static_cast<int>(stream.uniform_int(ds.qf_low, ds.qf_high));
        } else {
            rec.noise = noise_spec_str(draw_noise(ds, stream));
        }
        rec.seed = stream.uniform_u64();
        const Tensor corrupted = corrupt_sample(clean, rec, config.task);
        write_virt(dir / rec.clean, clean);
        write_virt(dir / rec.corrupted, corrupted);
        records[i] = std::move(rec);
    };

    const int threads = std::min<int>(workers, static_cast<int>(total));
    if (threads <= 1) {
        for (std::size_t i = 0; i < total; ++i) build_sample(i);
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::mutex mu;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = static_cast<std::size_t>(t); i < total;
                         i += static_cast<std::size_t>(threads))
                        build_sample(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(mu);
                    if (!failure) failure = std::current_exception();
                }
            });
        }
        for (std::thread& th : pool) th.join();
        if (failure) std::rethrow_exception(failure);
    }

    DatasetManifest train_manifest{config.task, config.seed,
                                   config.task == Task::sr ? ds.scale : 1, embedding_name,
                                   {records.begin(), records.begin() + static_cast<std::ptrdiff_t>(
                                                                           ds.count)}};
    DatasetManifest val_manifest = train_manifest;
    val_manifest.samples = {records.begin() + static_cast<std::ptrdiff_t>(ds.count),
                            records.end()};

    SynthResult result{dir / "manifest.json", dir / "val_manifest.json"};
    save_manifest(result.train_manifest, train_manifest);
    save_manifest(result.val_manifest, val_manifest);
    return result;
}

std::vector<TrainSample> load_samples(const fs::path& manifest_path) {
    const DatasetManifest m = load_manifest(manifest_path);
    const fs::path dir = manifest_path.parent_path();
    KernelEmbedding emb;
    if (m.task == Task::sr) {
        if (m.embedding.empty())
            throw ContractError("sr manifest is missing the kernel embedding");
        emb = load_embedding(dir / m.embedding);
    }
    std::vector<TrainSample> samples;
    samples.reserve(m.samples.size());
    for (const SampleRecord& rec : m.samples) {
        TrainSample s;
        s.x = read_virt(dir / rec.clean);
        s.y = read_virt(dir / rec.corrupted);
        s.spec = record_spec(rec, m.task);
        if (m.task == Task::sr) {
            const std::vector<double> code =
                project_kernel(emb, make_kernel(*s.spec.kernel));
            s.stretched_h = stretch_embedding(code, s.y.shape()[1], s.y.shape()[2]);
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

void save_embedding(const fs::path& path, const KernelEmbedding& emb) {
    const std::size_t k2 = static_cast<std::size_t>(emb.support) *
                           static_cast<std::size_t>(emb.support);
    NamedTensors entries;
    entries.emplace_back("basis",
                         Tensor::from_data({static_cast<std::size_t>(emb.t), k2}, emb.basis.a));
    entries.emplace_back("mean", Tensor::from_data({k2}, emb.mean));
    save_checkpoint(path, entries);
}

KernelEmbedding load_embedding(const fs::path& path) {
    const NamedTensors entries = load_checkpoint(path);
    if (entries.size() != 2 || entries[0].first != "basis" || entries[1].first != "mean")
        throw IoError("not a kernel embedding checkpoint: " + path.string());
    const Tensor& basis = entries[0].second;
    const Tensor& mean = entries[1].second;
    if (basis.ndim() != 2 || mean.ndim() != 1 || basis.shape()[1] != mean.shape()[0])
        throw IoError("kernel embedding has inconsistent shapes: " + path.string());
    const std::size_t k2 = mean.shape()[0];
    const int support = static_cast<int>(std::lround(std::sqrt(static_cast<double>(k2))));
    if (static_cast<std::size_t>(support) * static_cast<std::size_t>(support) != k2)
        throw IoError("kernel embedding length is not a square: " + path.string());
    KernelEmbedding emb;
    emb.t = static_cast<int>(basis.shape()[0]);
    emb.support = support;
    emb.basis = Mat(basis.shape()[0], k2);
    auto bv = basis.values();
    emb.basis.a.assign(bv.begin(), bv.end());
    auto mv = mean.values();
    emb.mean.assign(mv.begin(), mv.end());
    return emb;
}

}  // namespace virnet
