#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "virnet/tensor.hpp"

namespace virnet {

/// Float tensor container. Layout: magic "VIRT", u32 version = 1, u32 ndim,
/// ndim x u32 dims, then little-endian f32 payload in row-major order.
void write_virt(const std::filesystem::path& path, const Tensor& t);
Tensor read_virt(const std::filesystem::path& path);

/// In-memory VIRT encoding (used by the checkpoint container).
std::vector<unsigned char> encode_virt(const Tensor& t);
Tensor decode_virt(const unsigned char* data, std::size_t size,
                   const std::string& what);

/// 8-bit binary previews. Tensors are [1,h,w] / [h,w] for PGM and [3,h,w]
/// for PPM, values clamped from [0,1] to 0..255.
void write_pgm(const std::filesystem::path& path, const Tensor& img);
Tensor read_pgm(const std::filesystem::path& path);  // -> [1,h,w] in [0,1]
void write_ppm(const std::filesystem::path& path, const Tensor& img);
Tensor read_ppm(const std::filesystem::path& path);  // -> [3,h,w] in [0,1]

/// Checkpoint container: magic "VCKP", u32 version = 1, u32 manifest bytes,
/// JSON manifest [{name, offset, size}...] in entry order, then concatenated
/// VIRT blobs. Loading and re-saving reproduces the file byte for byte.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& entries);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace virnet
