#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "virnet/config.hpp"
#include "virnet/degradation.hpp"
#include "virnet/objective.hpp"
#include "virnet/rng.hpp"
#include "virnet/tensor.hpp"

namespace virnet {

/// Procedural grayscale image in [0,1]: a tilted gradient base, a few
/// soft-edged disks and squares, and a low-amplitude sinusoidal texture.
/// Enough edge/flat/texture variety to train and score restoration at desk
/// scale without shipping photographs.
Tensor procedural_image(std::size_t h, std::size_t w, Rng& rng);

/// One dataset entry. Paths are relative to the manifest's directory; the
/// spec strings plus `seed` reproduce the corruption bit-exactly from the
/// clean image.
struct SampleRecord {
    std::string clean;
    std::string corrupted;
    std::string kernel;      // kernel spec string; empty when no blur
    int scale = 1;
    std::string noise;       // noise field spec string; empty when no noise
    int qf = 0;              // block-codec quality; 0 = not compressed
    std::uint64_t seed = 0;  // per-sample noise stream key
};

struct DatasetManifest {
    Task task = Task::denoise;
    std::uint64_t seed = 0;  // generator seed the dataset was built from
    int scale = 1;
    std::string embedding;   // kernel code basis checkpoint, sr only
    std::vector<SampleRecord> samples;
};

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
/// Parses the manifest and checks every referenced file exists (IoError).
DatasetManifest load_manifest(const std::filesystem::path& path);

/// Re-applies the recorded corruption: blur/downsample from the kernel spec,
/// block-codec compression at qf, then the seeded noise draw.
Tensor corrupt_sample(const Tensor& clean, const SampleRecord& record, Task task);

/// Degradation spec for the likelihood model (kernel + scale; the qf part of
/// a deblock corruption is deliberately not modeled, H stays identity).
DegradationSpec record_spec(const SampleRecord& record, Task task);

struct SynthResult {
    std::filesystem::path train_manifest;
    std::filesystem::path val_manifest;
};

/// Writes clean/corrupted tensor pairs plus train/val manifests under `dir`.
/// Sample i draws everything from Rng(config.seed).fork(i), so regenerating
/// with the same config reproduces every file byte-identically. `workers`
/// bounds the synthesis threads (sample streams are independent).
SynthResult synthesize_dataset(const ExperimentConfig& config,
                               const std::filesystem::path& dir, int workers = 1);

/// Materializes training samples: loads each pair, rebuilds the degradation
/// spec, and for sr projects the blur kernel through the stored code basis
/// into a stretched per-pixel embedding.
std::vector<TrainSample> load_samples(const std::filesystem::path& manifest_path);

void save_embedding(const std::filesystem::path& path, const KernelEmbedding& emb);
KernelEmbedding load_embedding(const std::filesystem::path& path);

}  // namespace virnet
