#include "virnet/degradation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "virnet/errors.hpp"
#include "virnet/io.hpp"

namespace virnet {

Tensor make_kernel(const KernelSpec& spec) {
    if (spec.support < 1 || spec.support % 2 == 0) {
        throw DomainError("make_kernel: support must be odd and >= 1, got " +
                          std::to_string(spec.support));
    }
    // Sigma = U diag(l1,l2) U^T acting on (dx,dy); isotropic is d^2 I
    double sxx, sxy, syy;
    if (spec.kind == KernelKind::isotropic) {
        if (!(spec.d > 0.0)) {
            throw DomainError("make_kernel: isotropic width must be positive");
        }
        sxx = syy = spec.d * spec.d;
        sxy = 0.0;
    } else {
        if (!(spec.l1 > 0.0) || !(spec.l2 > 0.0)) {
            throw DomainError("make_kernel: eigenvalues must be positive for a PD covariance");
        }
        const double c = std::cos(spec.theta), s = std::sin(spec.theta);
        sxx = c * c * spec.l1 + s * s * spec.l2;
        syy = s * s * spec.l1 + c * c * spec.l2;
        sxy = c * s * (spec.l1 - spec.l2);
    }
    const double det = sxx * syy - sxy * sxy;
    if (!(det > 0.0) || !(sxx > 0.0)) {
        throw DomainError("make_kernel: covariance not positive definite");
    }
    const double ixx = syy / det, iyy = sxx / det, ixy = -sxy / det;

    const int n = spec.support;
    const int half = n / 2;
    std::vector<double> k(static_cast<std::size_t>(n) * n);
    double total = 0.0;
    for (int y = 0; y < n; ++y) {
        const double dy = static_cast<double>(y - half);
        for (int x = 0; x < n; ++x) {
            const double dx = static_cast<double>(x - half);
            const double q = ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy;
            const double v = std::exp(-0.5 * q);
            k[static_cast<std::size_t>(y) * n + x] = v;
            total += v;
        }
    }
    for (auto& v : k) v /= total;
    return Tensor::from_data({static_cast<std::size_t>(n), static_cast<std::size_t>(n)},
                             std::move(k));
}

Tensor noise_map(const NoiseFieldSpec& field, std::size_t h, std::size_t w) {
    if (h == 0 || w == 0) throw ShapeError("noise_map: empty image");
    const double hi = field.value;
    double lo = field.low;
    if (field.kind != NoiseFieldKind::constant && field.kind != NoiseFieldKind::custom) {
        if (lo < 0.0) lo = hi / 10.0;
        if (!(hi >= 0.0) || lo > hi) {
            throw DomainError("noise_map: need 0 <= low <= high, got low " +
                              std::to_string(lo) + " high " + std::to_string(hi));
        }
    }
    std::vector<double> m(h * w, 0.0);
    switch (field.kind) {
        case NoiseFieldKind::constant: {
            if (!(hi >= 0.0)) throw DomainError("noise_map: level must be >= 0");
            std::fill(m.begin(), m.end(), hi);
            break;
        }
        case NoiseFieldKind::peaks: {
            Rng rng(field.seed);
            const double span = static_cast<double>(std::min(h, w));
            std::vector<double> cy(field.count), cx(field.count), sg(field.count),
                am(field.count);
            for (int b = 0; b < field.count; ++b) {
                cy[b] = rng.uniform(0.0, static_cast<double>(h));
                cx[b] = rng.uniform(0.0, static_cast<double>(w));
                sg[b] = rng.uniform(0.12, 0.30) * span;
                am[b] = rng.uniform(0.4, 1.0);
            }
            double peak = 0.0;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    double v = 0.0;
                    for (int b = 0; b < field.count; ++b) {
                        const double ddy = static_cast<double>(y) - cy[b];
                        const double ddx = static_cast<double>(x) - cx[b];
                        v += am[b] * std::exp(-(ddy * ddy + ddx * ddx) /
                                              (2.0 * sg[b] * sg[b]));
                    }
                    m[y * w + x] = v;
                    peak = std::max(peak, v);
                }
            }
            if (peak > 0.0) {
                for (auto& v : m) v = lo + (hi - lo) * (v / peak);
            } else {
                std::fill(m.begin(), m.end(), lo);
            }
            break;
        }
        case NoiseFieldKind::gradient: {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    const double fx = (w > 1)
                                          ? static_cast<double>(x) /
                                                static_cast<double>(w - 1)
                                          : 1.0;
                    m[y * w + x] = lo + (hi - lo) * fx;
                }
            }
            break;
        }
        case NoiseFieldKind::vertical_split: {
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t x = 0; x < w; ++x) {
                    m[y * w + x] = (x < w / 2) ? lo : hi;
                }
            }
            break;
        }
        case NoiseFieldKind::custom: {
            if (!field.custom.defined() || field.custom.ndim() != 2) {
                throw ShapeError("noise_map: custom kind needs a [h,w] map tensor");
            }
            if (field.custom.shape() != Shape{h, w}) {
                throw ShapeError("noise_map: custom map is " +
                                 shape_str(field.custom.shape()) + ", image wants [" +
                                 std::to_string(h) + "," + std::to_string(w) + "]");
            }
            auto v = field.custom.values();
            for (std::size_t i = 0; i < m.size(); ++i) {
                if (!(v[i] >= 0.0)) {
                    throw DomainError("noise_map: custom map has negative entry");
                }
                m[i] = v[i];
            }
            break;
        }
    }
    return Tensor::from_data({h, w}, std::move(m));
}

Tensor synth_noise(const Shape& shape, const NoiseFieldSpec& field, Rng& rng) {
    if (shape.size() != 3) {
        throw ShapeError("synth_noise: expected [c,h,w], got " + shape_str(shape));
    }
    const std::size_t c = shape[0], h = shape[1], w = shape[2];
    auto M = noise_map(field, h, w);
    auto mv = M.values();
    std::vector<double> n(c * h * w);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t i = 0; i < h * w; ++i) {
            n[ci * h * w + i] = rng.normal() * mv[i];
        }
    }
    return Tensor::from_data(shape, std::move(n));
}

void validate_degradation(const DegradationSpec& spec) {
    if (spec.scale < 1) {
        throw ContractError("degradation: scale must be >= 1");
    }
    switch (spec.task) {
        case Task::denoise:
        case Task::deblock:
            if (spec.scale != 1 || spec.kernel.has_value()) {
                throw ContractError(std::string("degradation: task ") +
                                    task_name(spec.task) +
                                    " requires scale 1 and no kernel");
            }
            break;
        case Task::sr:
            if (!spec.kernel.has_value() || spec.scale < 2) {
                throw ContractError(
                    "degradation: sr requires a kernel and scale >= 2");
            }
            break;
    }
}

Tensor blur_reflect(const Tensor& z, const Tensor& kernel) {
    if (!z.defined() || z.ndim() != 3) {
        throw ShapeError("blur_reflect: expected [c,h,w] image");
    }
    if (!kernel.defined() || kernel.ndim() != 2 ||
        kernel.shape()[0] != kernel.shape()[1]) {
        throw ShapeError("blur_reflect: kernel must be square [k,k]");
    }
    const std::size_t k = kernel.shape()[0];
    const std::size_t pad = (k - 1) / 2;
    // true convolution: flip the kernel, then run cross-correlation
    auto kv = kernel.values();
    std::vector<double> flipped(kv.rbegin(), kv.rend());
    auto weights = Tensor::from_data({1, 1, k, k}, std::move(flipped));
    auto bias = Tensor::zeros({1});

    const std::size_t c = z.shape()[0];
    auto padded = pad > 0 ? reflect_pad2d(z, pad) : z;
    if (c == 1) return conv2d(padded, weights, bias, 1, 0);
    Tensor out;
    for (std::size_t ci = 0; ci < c; ++ci) {
        auto one = conv2d(slice_channels(padded, ci, 1), weights, bias, 1, 0);
        out = ci == 0 ? one : concat_channels(out, one);
    }
    return out;
}

Tensor apply_degradation(const Tensor& z, const DegradationSpec& spec) {
    if (!z.defined() || z.ndim() != 3) {
        throw ShapeError("apply_degradation: expected [c,h,w] image");
    }
    if (spec.scale < 1) {
        throw ContractError("apply_degradation: scale must be >= 1");
    }
    Tensor y = z;
    if (spec.kernel.has_value()) {
        y = blur_reflect(y, make_kernel(*spec.kernel));
    }
    if (spec.scale > 1) {
        y = subsample2d(y, static_cast<std::size_t>(spec.scale));
    }
    return y;
}

namespace {

double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
    return 0.0;
}

}  // namespace

Tensor bicubic_downsample(const Tensor& img, int s) {
    if (!img.defined() || img.ndim() != 3) {
        throw ShapeError("bicubic_downsample: expected [c,h,w] image");
    }
    if (s < 1) throw ShapeError("bicubic_downsample: scale must be >= 1");
    const std::size_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
    const auto su = static_cast<std::size_t>(s);
    if (h % su != 0 || w % su != 0) {
        throw ShapeError("bicubic_downsample: dims " + shape_str(img.shape()) +
                         " not divisible by " + std::to_string(s));
    }
    const std::size_t oh = h / su, ow = w / su;

    // per output index: 4 taps and weights along one axis
    auto make_taps = [&](std::size_t out_n, std::size_t in_n) {
        std::vector<std::array<std::ptrdiff_t, 4>> idx(out_n);
        std::vector<std::array<double, 4>> wts(out_n);
        for (std::size_t o = 0; o < out_n; ++o) {
            const double src = (static_cast<double>(o) + 0.5) * s - 0.5;
            const double base = std::floor(src);
            const double frac = src - base;
            for (int tap = 0; tap < 4; ++tap) {
                std::ptrdiff_t j = static_cast<std::ptrdiff_t>(base) - 1 + tap;
                wts[o][tap] = cubic_weight(frac + 1.0 - tap);
                j = std::clamp<std::ptrdiff_t>(j, 0, static_cast<std::ptrdiff_t>(in_n) - 1);
                idx[o][tap] = j;
            }
        }
        return std::pair(idx, wts);
    };
    auto [xi, xw] = make_taps(ow, w);
    auto [yi, yw] = make_taps(oh, h);

    auto v = img.values();
    std::vector<double> tmp(c * h * ow);  // horizontal pass
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < h; ++y) {
            const double* row = v.data() + (ci * h + y) * w;
            double* out = tmp.data() + (ci * h + y) * ow;
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int tap = 0; tap < 4; ++tap) {
                    acc += xw[x][tap] * row[xi[x][tap]];
                }
                out[x] = acc;
            }
        }
    }
    std::vector<double> out(c * oh * ow);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (int tap = 0; tap < 4; ++tap) {
                    acc += yw[y][tap] *
                           tmp[(ci * h + static_cast<std::size_t>(yi[y][tap])) * ow + x];
                }
                out[(ci * oh + y) * ow + x] = acc;
            }
        }
    }
    return Tensor::from_data({c, oh, ow}, std::move(out));
}

namespace {

// ITU T.81 Annex K luminance quantization table
constexpr int kBaseQuant[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,   //
    12, 12, 14, 19, 26,  58,  60,  55,   //
    14, 13, 16, 24, 40,  57,  69,  56,   //
    14, 17, 22, 29, 51,  87,  80,  62,   //
    18, 22, 37, 56, 68,  109, 103, 77,   //
    24, 35, 55, 64, 81,  104, 113, 92,   //
    49, 64, 78, 87, 103, 121, 120, 101,  //
    72, 92, 95, 98, 112, 100, 103, 99};

struct DctBasis {
    double a[8][8];
    DctBasis() {
        for (int u = 0; u < 8; ++u) {
            const double cu = (u == 0) ? 1.0 / std::sqrt(2.0) : 1.0;
            for (int x = 0; x < 8; ++x) {
                a[u][x] = 0.5 * cu *
                          std::cos((2.0 * x + 1.0) * u * 3.14159265358979323846 / 16.0);
            }
        }
    }
};

const DctBasis kDct;

void scaled_quant_table(int qf, double q[64]) {
    const int scale = (qf < 50) ? 5000 / qf : 200 - 2 * qf;
    for (int i = 0; i < 64; ++i) {
        int v = (kBaseQuant[i] * scale + 50) / 100;
        v = std::clamp(v, 1, 255);
        q[i] = static_cast<double>(v);
    }
}

}  // namespace

Tensor jpeg_like_compress(const Tensor& z, int qf) {
    if (qf < 1 || qf > 99) {
        throw DomainError("jpeg_like_compress: qf must be in 1..99, got " +
                          std::to_string(qf));
    }
    Shape shape = z.defined() ? z.shape() : Shape{};
    bool rank2 = shape.size() == 2;
    if (rank2) shape = {1, shape[0], shape[1]};
    if (shape.size() != 3 || shape[0] != 1) {
        throw ShapeError("jpeg_like_compress: grayscale [1,h,w] expected, got " +
                         shape_str(z.shape()));
    }
    const std::size_t h = shape[1], w = shape[2];
    const std::size_t ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;

    // level shift to the codec's working range, edge-replicated to 8 | dims
    std::vector<double> work(ph * pw);
    auto v = z.values();
    for (std::size_t y = 0; y < ph; ++y) {
        const std::size_t sy = std::min(y, h - 1);
        for (std::size_t x = 0; x < pw; ++x) {
            const std::size_t sx = std::min(x, w - 1);
            work[y * pw + x] = v[sy * w + sx] * 255.0 - 128.0;
        }
    }

    double quant[64];
    scaled_quant_table(qf, quant);

    double f[8][8], g[8][8];
    for (std::size_t by = 0; by < ph; by += 8) {
        for (std::size_t bx = 0; bx < pw; bx += 8) {
            // F = A f A^T
            for (int u = 0; u < 8; ++u)
                for (int x = 0; x < 8; ++x) {
                    double acc = 0.0;
                    for (int t = 0; t < 8; ++t) {
                        acc += kDct.a[u][t] * work[(by + t) * pw + bx + x];
                    }
                    f[u][x] = acc;
                }
            for (int u = 0; u < 8; ++u)
                for (int vv = 0; vv < 8; ++vv) {
                    double acc = 0.0;
                    for (int t = 0; t < 8; ++t) acc += f[u][t] * kDct.a[vv][t];
                    const double q = quant[u * 8 + vv];
                    g[u][vv] = std::round(acc / q) * q;
                }
            // f' = A^T F' A
            for (int y = 0; y < 8; ++y)
                for (int vv = 0; vv < 8; ++vv) {
                    double acc = 0.0;
                    for (int t = 0; t < 8; ++t) acc += kDct.a[t][y] * g[t][vv];
                    f[y][vv] = acc;
                }
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    double acc = 0.0;
                    for (int t = 0; t < 8; ++t) acc += f[y][t] * kDct.a[t][x];
                    work[(by + y) * pw + bx + x] = acc;
                }
        }
    }

    std::vector<double> out(h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            out[y * w + x] = std::clamp((work[y * pw + x] + 128.0) / 255.0, 0.0, 1.0);
        }
    }
    return Tensor::from_data(rank2 ? z.shape() : shape, std::move(out));
}

KernelEmbedding kernel_pca_fit(const std::vector<Tensor>& kernels, int t) {
    if (t < 1 || kernels.size() < static_cast<std::size_t>(t)) {
        throw ContractError("kernel_pca_fit: need at least t=" + std::to_string(t) +
                            " kernels, got " + std::to_string(kernels.size()));
    }
    const auto& first = kernels.front();
    if (first.ndim() != 2 || first.shape()[0] != first.shape()[1]) {
        throw ShapeError("kernel_pca_fit: kernels must be square [k,k]");
    }
    const std::size_t support = first.shape()[0];
    const std::size_t dim = support * support;
    for (const auto& k : kernels) {
        if (k.shape() != first.shape()) {
            throw ShapeError("kernel_pca_fit: mixed kernel supports");
        }
    }

    const double n = static_cast<double>(kernels.size());
    std::vector<double> mean(dim, 0.0);
    for (const auto& k : kernels) {
        auto kv = k.values();
        for (std::size_t i = 0; i < dim; ++i) mean[i] += kv[i] / n;
    }
    Mat cov(dim, dim);
    for (const auto& k : kernels) {
        auto kv = k.values();
        std::vector<double> d(dim);
        for (std::size_t i = 0; i < dim; ++i) d[i] = kv[i] - mean[i];
        for (std::size_t i = 0; i < dim; ++i) {
            if (d[i] == 0.0) continue;
            for (std::size_t j = 0; j < dim; ++j) {
                cov.at(i, j) += d[i] * d[j] / n;
            }
        }
    }

    auto eig = eigh(cov);
    KernelEmbedding emb;
    emb.t = t;
    emb.support = static_cast<int>(support);
    emb.mean = std::move(mean);
    emb.basis = Mat(static_cast<std::size_t>(t), dim);
    for (int r = 0; r < t; ++r) {
        for (std::size_t i = 0; i < dim; ++i) {
            emb.basis.at(static_cast<std::size_t>(r), i) =
                eig.vectors.at(i, static_cast<std::size_t>(r));
        }
    }
    return emb;
}

std::vector<double> project_kernel(const KernelEmbedding& emb, const Tensor& kernel) {
    const std::size_t dim = emb.mean.size();
    if (kernel.size() != dim) {
        throw ShapeError("project_kernel: kernel has " + std::to_string(kernel.size()) +
                         " entries, embedding wants " + std::to_string(dim));
    }
    auto kv = kernel.values();
    std::vector<double> code(static_cast<std::size_t>(emb.t), 0.0);
    for (std::size_t r = 0; r < code.size(); ++r) {
        double acc = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            acc += emb.basis.at(r, i) * (kv[i] - emb.mean[i]);
        }
        code[r] = acc;
    }
    return code;
}

std::vector<double> reconstruct_kernel(const KernelEmbedding& emb,
                                       const std::vector<double>& code) {
    if (code.size() != static_cast<std::size_t>(emb.t)) {
        throw ShapeError("reconstruct_kernel: code length mismatch");
    }
    std::vector<double> out = emb.mean;
    for (std::size_t r = 0; r < code.size(); ++r) {
        for (std::size_t i = 0; i < out.size(); ++i) {
            out[i] += code[r] * emb.basis.at(r, i);
        }
    }
    return out;
}

Tensor stretch_embedding(const std::vector<double>& code, std::size_t h,
                         std::size_t w) {
    const std::size_t t = code.size();
    std::vector<double> out(t * h * w);
    for (std::size_t r = 0; r < t; ++r) {
        std::fill(out.begin() + r * h * w, out.begin() + (r + 1) * h * w, code[r]);
    }
    return Tensor::from_data({t, h, w}, std::move(out));
}

Tensor reestimate_kernel(const Tensor& k_d, int s,
                         const std::vector<Tensor>& probe_images) {
    if (!k_d.defined() || k_d.ndim() != 2 || k_d.shape()[0] != k_d.shape()[1]) {
        throw ShapeError("reestimate_kernel: kernel must be square [k,k]");
    }
    if (s < 1) throw ContractError("reestimate_kernel: scale must be >= 1");
    if (probe_images.empty()) {
        throw ContractError("reestimate_kernel: need probe images");
    }
    const std::size_t k = k_d.shape()[0];
    const std::size_t dim = k * k;
    const auto su = static_cast<std::size_t>(s);

    std::size_t rows = 0;
    for (const auto& z : probe_images) {
        if (z.ndim() != 3 || z.shape()[0] != 1) {
            throw ShapeError("reestimate_kernel: probes must be [1,h,w]");
        }
        const std::size_t h = z.shape()[1], w = z.shape()[2];
        if (h % su != 0 || w % su != 0) {
            throw ShapeError("reestimate_kernel: probe dims not divisible by scale");
        }
        rows += (h / su) * (w / su);
    }
    if (rows < dim) {
        throw ContractError("reestimate_kernel: system underdetermined, " +
                            std::to_string(rows) + " equations for " +
                            std::to_string(dim) + " unknowns");
    }

    Mat A(rows, dim);
    std::vector<double> b(rows);
    std::size_t row0 = 0;
    for (const auto& z : probe_images) {
        auto target = subsample2d(blur_reflect(z, k_d), su);
        auto tv = target.values();
        std::copy(tv.begin(), tv.end(), b.begin() + static_cast<std::ptrdiff_t>(row0));

        for (std::size_t j = 0; j < dim; ++j) {
            std::vector<double> e(dim, 0.0);
            e[j] = 1.0;
            auto col = bicubic_downsample(
                blur_reflect(z, Tensor::from_data({k, k}, std::move(e))), s);
            auto cv = col.values();
            for (std::size_t r = 0; r < cv.size(); ++r) {
                A.at(row0 + r, j) = cv[r];
            }
        }
        row0 += tv.size();
    }

    auto kb = solve_least_squares(std::move(A), std::move(b));
    double total = 0.0;
    for (double v : kb) total += v;
    if (!(std::abs(total) > 1e-8)) {
        throw ConditioningError("reestimate_kernel: estimated kernel sums to " +
                                std::to_string(total) + ", cannot normalize");
    }
    for (auto& v : kb) v /= total;
    return Tensor::from_data({k, k}, std::move(kb));
}

namespace {

std::map<std::string, std::string> parse_kv(const std::string& text,
                                            const std::string& what) {
    std::map<std::string, std::string> kv;
    if (text.empty()) return kv;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ConfigError(what + ": expected key=value, got '" + item + "'");
        }
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return kv;
}

double take_num(std::map<std::string, std::string>& kv, const std::string& key,
                double fallback, const std::string& what) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        const double v = std::stod(it->second);
        kv.erase(it);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(what + ": bad number for " + key + ": '" + it->second + "'");
    }
}

void reject_leftovers(const std::map<std::string, std::string>& kv,
                      const std::string& what) {
    if (!kv.empty()) {
        throw ConfigError(what + ": unknown key '" + kv.begin()->first + "'");
    }
}

}  // namespace

KernelSpec parse_kernel_spec(const std::string& text) {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    auto kv = parse_kv(colon == std::string::npos ? "" : text.substr(colon + 1),
                       "kernel spec");
    KernelSpec spec;
    if (kind == "iso") {
        spec.kind = KernelKind::isotropic;
        spec.d = take_num(kv, "d", spec.d, "kernel spec");
    } else if (kind == "aniso") {
        spec.kind = KernelKind::anisotropic;
        spec.theta = take_num(kv, "theta", spec.theta, "kernel spec");
        spec.l1 = take_num(kv, "l1", spec.l1, "kernel spec");
        spec.l2 = take_num(kv, "l2", spec.l2, "kernel spec");
    } else {
        throw ConfigError("kernel spec: unknown kind '" + kind +
                          "' (expected iso or aniso)");
    }
    spec.support = static_cast<int>(
        take_num(kv, "support", spec.support, "kernel spec"));
    reject_leftovers(kv, "kernel spec");
    return spec;
}

NoiseFieldSpec parse_noise_spec(const std::string& text) {
    const auto colon = text.find(':');
    const std::string kind = text.substr(0, colon);
    auto kv = parse_kv(colon == std::string::npos ? "" : text.substr(colon + 1),
                       "noise spec");
    NoiseFieldSpec field;
    if (kind == "const" || kind == "constant") {
        field.kind = NoiseFieldKind::constant;
        field.value = take_num(kv, "value", field.value, "noise spec");
    } else if (kind == "peaks") {
        field.kind = NoiseFieldKind::peaks;
        field.value = take_num(kv, "max", field.value, "noise spec");
        field.low = take_num(kv, "min", field.low, "noise spec");
        field.seed = static_cast<std::uint64_t>(
            take_num(kv, "seed", static_cast<double>(field.seed), "noise spec"));
        field.count = static_cast<int>(
            take_num(kv, "count", field.count, "noise spec"));
    } else if (kind == "gradient") {
        field.kind = NoiseFieldKind::gradient;
        field.value = take_num(kv, "high", field.value, "noise spec");
        field.low = take_num(kv, "low", field.low, "noise spec");
    } else if (kind == "vsplit") {
        field.kind = NoiseFieldKind::vertical_split;
        field.value = take_num(kv, "high", field.value, "noise spec");
        field.low = take_num(kv, "low", field.low, "noise spec");
    } else if (kind == "custom") {
        field.kind = NoiseFieldKind::custom;
        auto it = kv.find("path");
        if (it == kv.end()) {
            throw ConfigError("noise spec: custom needs path=<tensor file>");
        }
        field.custom_path = it->second;
        field.custom = read_virt(it->second);
        kv.erase(it);
    } else {
        throw ConfigError("noise spec: unknown kind '" + kind + "'");
    }
    reject_leftovers(kv, "noise spec");
    return field;
}

std::string kernel_spec_str(const KernelSpec& spec) {
    std::ostringstream os;
    if (spec.kind == KernelKind::isotropic) {
        os << "iso:d=" << spec.d;
    } else {
        os << "aniso:theta=" << spec.theta << ",l1=" << spec.l1 << ",l2=" << spec.l2;
    }
    os << ",support=" << spec.support;
    return os.str();
}

std::string noise_spec_str(const NoiseFieldSpec& field) {
    std::ostringstream os;
    switch (field.kind) {
        case NoiseFieldKind::constant:
            os << "const:value=" << field.value;
            break;
        case NoiseFieldKind::peaks:
            os << "peaks:seed=" << field.seed << ",max=" << field.value;
            if (field.low >= 0.0) os << ",min=" << field.low;
            os << ",count=" << field.count;
            break;
        case NoiseFieldKind::gradient:
            os << "gradient:low=" << (field.low >= 0.0 ? field.low : field.value / 10.0)
               << ",high=" << field.value;
            break;
        case NoiseFieldKind::vertical_split:
            os << "vsplit:low=" << (field.low >= 0.0 ? field.low : field.value / 10.0)
               << ",high=" << field.value;
            break;
        case NoiseFieldKind::custom:
            os << "custom:path=" << field.custom_path;
            break;
    }
    return os.str();
}

}  // namespace virnet
