#include "virnet/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <json.hpp>

#include "virnet/errors.hpp"

namespace virnet {

namespace {

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) |
           (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) |
           (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_f32(std::vector<unsigned char>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

float get_f32(const unsigned char* p) {
    const std::uint32_t bits = get_u32(p);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return data;
}

void write_file(const std::filesystem::path& path,
                const std::vector<unsigned char>& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size()));
    if (!out) throw IoError("short write to " + path.string());
}

}  // namespace

std::vector<unsigned char> encode_virt(const Tensor& t) {
    if (!t.defined()) throw ContractError("encode_virt: undefined tensor");
    std::vector<unsigned char> out;
    out.reserve(16 + 4 * t.shape().size() + 4 * t.size());
    out.insert(out.end(), {'V', 'I', 'R', 'T'});
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(t.shape().size()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : t.values()) put_f32(out, static_cast<float>(v));
    return out;
}

Tensor decode_virt(const unsigned char* data, std::size_t size,
                   const std::string& what) {
    if (size < 12 || std::memcmp(data, "VIRT", 4) != 0) {
        throw IoError(what + ": not a VIRT blob");
    }
    const std::uint32_t version = get_u32(data + 4);
    if (version != 1) {
        throw IoError(what + ": unsupported VIRT version " + std::to_string(version));
    }
    const std::uint32_t ndim = get_u32(data + 8);
    if (size < 12 + 4 * static_cast<std::size_t>(ndim)) {
        throw IoError(what + ": truncated VIRT header");
    }
    Shape shape(ndim);
    std::size_t n = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        shape[i] = get_u32(data + 12 + 4 * i);
        n *= shape[i];
    }
    const std::size_t payload = 12 + 4 * static_cast<std::size_t>(ndim);
    if (size != payload + 4 * n) {
        throw IoError(what + ": payload size mismatch, header wants " +
                      std::to_string(n) + " floats, file has " +
                      std::to_string((size - payload) / 4));
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        values[i] = static_cast<double>(get_f32(data + payload + 4 * i));
    }
    return Tensor::from_data(std::move(shape), std::move(values));
}

void write_virt(const std::filesystem::path& path, const Tensor& t) {
    write_file(path, encode_virt(t));
}

Tensor read_virt(const std::filesystem::path& path) {
    auto data = read_file(path);
    return decode_virt(data.data(), data.size(), path.string());
}

namespace {

unsigned char to_byte(double v) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(clamped * 255.0));
}

void write_pnm(const std::filesystem::path& path, const Tensor& img,
               std::size_t channels, const char* magic) {
    Shape shape = img.shape();
    if (shape.size() == 2 && channels == 1) shape = {1, shape[0], shape[1]};
    if (shape.size() != 3 || shape[0] != channels) {
        throw ShapeError(std::string(magic) + " writer: expected [" +
                         std::to_string(channels) + ",h,w], got " +
                         shape_str(img.shape()));
    }
    const std::size_t h = shape[1], w = shape[2];
    std::vector<unsigned char> out;
    const std::string header =
        std::string(magic) + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.insert(out.end(), header.begin(), header.end());
    auto v = img.values();
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                out.push_back(to_byte(v[(c * h + y) * w + x]));
            }
        }
    }
    write_file(path, out);
}

struct PnmHeader {
    std::size_t w = 0, h = 0, maxval = 0, pixel_offset = 0;
};

PnmHeader parse_pnm_header(const std::vector<unsigned char>& data,
                           const char* magic, const std::string& name) {
    if (data.size() < 2 || data[0] != magic[0] || data[1] != magic[1]) {
        throw IoError(name + ": not a " + magic + " file");
    }
    PnmHeader hd;
    std::size_t pos = 2;
    std::size_t fields[3] = {0, 0, 0};
    for (int f = 0; f < 3; ++f) {
        // skip whitespace and '#' comments
        while (pos < data.size()) {
            if (std::isspace(data[pos])) {
                ++pos;
            } else if (data[pos] == '#') {
                while (pos < data.size() && data[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        std::size_t v = 0;
        bool any = false;
        while (pos < data.size() && std::isdigit(data[pos])) {
            v = v * 10 + (data[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw IoError(name + ": malformed header");
        fields[f] = v;
    }
    if (pos >= data.size() || !std::isspace(data[pos])) {
        throw IoError(name + ": malformed header");
    }
    ++pos;  // single whitespace after maxval
    hd.w = fields[0];
    hd.h = fields[1];
    hd.maxval = fields[2];
    hd.pixel_offset = pos;
    if (hd.maxval != 255) {
        throw IoError(name + ": only maxval 255 supported, got " +
                      std::to_string(hd.maxval));
    }
    return hd;
}

Tensor read_pnm(const std::filesystem::path& path, std::size_t channels,
                const char* magic) {
    auto data = read_file(path);
    auto hd = parse_pnm_header(data, magic, path.string());
    const std::size_t need = hd.pixel_offset + channels * hd.w * hd.h;
    if (data.size() < need) {
        throw IoError(path.string() + ": truncated pixel data");
    }
    std::vector<double> values(channels * hd.h * hd.w);
    for (std::size_t y = 0; y < hd.h; ++y) {
        for (std::size_t x = 0; x < hd.w; ++x) {
            for (std::size_t c = 0; c < channels; ++c) {
                const unsigned char b =
                    data[hd.pixel_offset + (y * hd.w + x) * channels + c];
                values[(c * hd.h + y) * hd.w + x] = static_cast<double>(b) / 255.0;
            }
        }
    }
    return Tensor::from_data({channels, hd.h, hd.w}, std::move(values));
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Tensor& img) {
    write_pnm(path, img, 1, "P5");
}

Tensor read_pgm(const std::filesystem::path& path) { return read_pnm(path, 1, "P5"); }

void write_ppm(const std::filesystem::path& path, const Tensor& img) {
    write_pnm(path, img, 3, "P6");
}

Tensor read_ppm(const std::filesystem::path& path) { return read_pnm(path, 3, "P6"); }

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& entries) {
    std::vector<unsigned char> payload;
    nlohmann::json manifest = nlohmann::json::array();
    for (const auto& [name, t] : entries) {
        auto blob = encode_virt(t);
        manifest.push_back({{"name", name},
                            {"offset", payload.size()},
                            {"size", blob.size()}});
        payload.insert(payload.end(), blob.begin(), blob.end());
    }
    const std::string mstr = manifest.dump();

    std::vector<unsigned char> out;
    out.insert(out.end(), {'V', 'C', 'K', 'P'});
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(mstr.size()));
    out.insert(out.end(), mstr.begin(), mstr.end());
    out.insert(out.end(), payload.begin(), payload.end());
    write_file(path, out);
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
    auto data = read_file(path);
    if (data.size() < 12 || std::memcmp(data.data(), "VCKP", 4) != 0) {
        throw IoError(path.string() + ": not a checkpoint file");
    }
    if (get_u32(data.data() + 4) != 1) {
        throw IoError(path.string() + ": unsupported checkpoint version");
    }
    const std::size_t mlen = get_u32(data.data() + 8);
    if (data.size() < 12 + mlen) {
        throw IoError(path.string() + ": truncated manifest");
    }
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(data.begin() + 12, data.begin() + 12 + mlen);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path.string() + ": bad manifest: " + e.what());
    }
    const std::size_t payload_start = 12 + mlen;
    NamedTensors out;
    for (const auto& entry : manifest) {
        const std::string name = entry.at("name").get<std::string>();
        const std::size_t offset = entry.at("offset").get<std::size_t>();
        const std::size_t size = entry.at("size").get<std::size_t>();
        if (payload_start + offset + size > data.size()) {
            throw IoError(path.string() + ": entry " + name + " out of bounds");
        }
        out.emplace_back(name, decode_virt(data.data() + payload_start + offset,
                                           size, path.string() + ":" + name));
    }
    return out;
}

}  // namespace virnet
