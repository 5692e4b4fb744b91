#include "virnet/metrics.hpp"

#include <cmath>
#include <vector>

#include "virnet/errors.hpp"

namespace virnet {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.defined() || !b.defined() || a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes " +
                         (a.defined() ? shape_str(a.shape()) : "<none>") + " and " +
                         (b.defined() ? shape_str(b.shape()) : "<none>") + " differ");
    }
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "psnr");
    auto av = a.values();
    auto bv = b.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        acc += d * d;
    }
    const double mse = acc / static_cast<double>(av.size());
    if (mse <= 0.0) return 100.0;
    return std::min(-10.0 * std::log10(mse), 100.0);
}

double ssim(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "ssim");
    Shape shape = a.shape();
    if (shape.size() == 3 && shape[0] == 1) shape = {shape[1], shape[2]};
    if (shape.size() != 2) {
        throw ShapeError("ssim: grayscale [h,w] expected, got " + shape_str(a.shape()));
    }
    const std::size_t h = shape[0], w = shape[1];
    constexpr std::size_t win = 11;
    if (h < win || w < win) {
        throw ContractError("ssim: image " + shape_str(shape) +
                            " smaller than the 11x11 window");
    }

    // normalized 11x11 Gaussian, std 1.5
    static const std::vector<double> weight = [] {
        std::vector<double> wv(win * win);
        double total = 0.0;
        for (int y = 0; y < static_cast<int>(win); ++y) {
            for (int x = 0; x < static_cast<int>(win); ++x) {
                const double dy = y - 5, dx = x - 5;
                const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
                wv[static_cast<std::size_t>(y) * win + static_cast<std::size_t>(x)] = v;
                total += v;
            }
        }
        for (auto& v : wv) v /= total;
        return wv;
    }();

    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;

    auto av = a.values();
    auto bv = b.values();
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t y0 = 0; y0 + win <= h; ++y0) {
        for (std::size_t x0 = 0; x0 + win <= w; ++x0) {
            double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
            for (std::size_t dy = 0; dy < win; ++dy) {
                for (std::size_t dx = 0; dx < win; ++dx) {
                    const double wv = weight[dy * win + dx];
                    const double x = av[(y0 + dy) * w + x0 + dx];
                    const double y = bv[(y0 + dy) * w + x0 + dx];
                    mx += wv * x;
                    my += wv * y;
                    xx += wv * (x * x);
                    yy += wv * (y * y);
                    // parenthesized so swapping the images rounds identically
                    xy += wv * (x * y);
                }
            }
            const double vx = xx - mx * mx;
            const double vy = yy - my * my;
            const double cov = xy - mx * my;
            acc += ((2.0 * (mx * my) + c1) * (2.0 * cov + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++count;
        }
    }
    return acc / static_cast<double>(count);
}

double variance_map_quality(const Tensor& sigma2, const Tensor& m) {
    require_same_shape(sigma2, m, "variance_map_quality");
    auto sv = sigma2.values();
    auto mv = m.values();
    const auto n = static_cast<double>(sv.size());

    std::vector<double> s(sv.size());
    for (std::size_t i = 0; i < sv.size(); ++i) {
        if (!(sv[i] >= 0.0)) {
            throw DomainError("variance_map_quality: negative variance at index " +
                              std::to_string(i));
        }
        s[i] = std::sqrt(sv[i]);
    }

    double ms = 0.0, mm = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        ms += s[i];
        mm += mv[i];
    }
    ms /= n;
    mm /= n;
    double css = 0.0, cmm = 0.0, csm = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        css += (s[i] - ms) * (s[i] - ms);
        cmm += (mv[i] - mm) * (mv[i] - mm);
        csm += (s[i] - ms) * (mv[i] - mm);
    }
    // scale-aware zero test: a constant input only misses exact zero through
    // accumulation rounding
    const double s_floor = 1e-20 * n * (ms * ms + 1.0);
    const double m_floor = 1e-20 * n * (mm * mm + 1.0);
    if (css <= s_floor || cmm <= m_floor) {
        throw DomainError(
            "variance_map_quality: correlation undefined for a constant input");
    }
    return csm / std::sqrt(css * cmm);
}

Tensor luminance(const Tensor& rgb) {
    if (!rgb.defined() || rgb.ndim() != 3 || rgb.shape()[0] != 3) {
        throw ShapeError("luminance: expected [3,h,w], got " +
                         (rgb.defined() ? shape_str(rgb.shape()) : "<none>"));
    }
    const std::size_t h = rgb.shape()[1], w = rgb.shape()[2];
    auto v = rgb.values();
    std::vector<double> y(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
        y[i] = 0.299 * v[i] + 0.587 * v[h * w + i] + 0.114 * v[2 * h * w + i];
    }
    return Tensor::from_data({h, w}, std::move(y));
}

}  // namespace virnet
