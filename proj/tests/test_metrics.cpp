#include "virnet/metrics.hpp"

#include <cmath>
#include <vector>

#include "doctest.h"
#include "virnet/errors.hpp"
#include "virnet/rng.hpp"

using namespace virnet;

namespace {

// Oracle: sliding-window structural similarity with centered moments,
// written independently of production's raw-moment form.
double ssim_oracle(std::span<const double> a, std::span<const double> b,
                   std::size_t h, std::size_t w) {
    const int win = 11;
    std::vector<double> wt(121);
    double total = 0.0;
    for (int y = 0; y < win; ++y) {
        for (int x = 0; x < win; ++x) {
            wt[static_cast<std::size_t>(y * win + x)] =
                std::exp(-((y - 5) * (y - 5) + (x - 5) * (x - 5)) / 4.5);
            total += wt[static_cast<std::size_t>(y * win + x)];
        }
    }
    for (auto& v : wt) v /= total;

    const double c1 = 1e-4, c2 = 9e-4;
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t y0 = 0; y0 + 11 <= h; ++y0) {
        for (std::size_t x0 = 0; x0 + 11 <= w; ++x0) {
            double mx = 0.0, my = 0.0;
            for (int dy = 0; dy < win; ++dy) {
                for (int dx = 0; dx < win; ++dx) {
                    const std::size_t i =
                        (y0 + static_cast<std::size_t>(dy)) * w + x0 +
                        static_cast<std::size_t>(dx);
                    mx += wt[static_cast<std::size_t>(dy * win + dx)] * a[i];
                    my += wt[static_cast<std::size_t>(dy * win + dx)] * b[i];
                }
            }
            double vx = 0.0, vy = 0.0, cov = 0.0;
            for (int dy = 0; dy < win; ++dy) {
                for (int dx = 0; dx < win; ++dx) {
                    const std::size_t i =
                        (y0 + static_cast<std::size_t>(dy)) * w + x0 +
                        static_cast<std::size_t>(dx);
                    const double wv = wt[static_cast<std::size_t>(dy * win + dx)];
                    vx += wv * (a[i] - mx) * (a[i] - mx);
                    vy += wv * (b[i] - my) * (b[i] - my);
                    cov += wv * (a[i] - mx) * (b[i] - my);
                }
            }
            acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
                   ((mx * mx + my * my + c1) * (vx + vy + c2));
            ++n;
        }
    }
    return acc / static_cast<double>(n);
}

Tensor smooth_image(std::size_t h, std::size_t w, Rng& rng) {
    std::vector<double> v(h * w);
    const double f1 = rng.uniform(1.0, 4.0), f2 = rng.uniform(2.0, 7.0);
    const double p1 = rng.uniform(0.0, 6.28), p2 = rng.uniform(0.0, 6.28);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double ty = static_cast<double>(y) / static_cast<double>(h);
            const double tx = static_cast<double>(x) / static_cast<double>(w);
            v[y * w + x] = 0.5 + 0.25 * std::sin(6.28 * f1 * (ty + tx) + p1) +
                           0.15 * std::cos(6.28 * f2 * (ty - tx) + p2);
        }
    }
    return Tensor::from_data({h, w}, std::move(v));
}

}  // namespace

TEST_CASE("psnr formula and cap") {
    auto zero = Tensor::zeros({1, 4, 4});
    CHECK(psnr(zero, zero) == 100.0);

    auto off1 = Tensor::full({1, 4, 4}, 0.1);   // MSE 0.01
    auto off2 = Tensor::full({1, 4, 4}, 0.05);  // MSE 0.0025
    CHECK(psnr(zero, off1) == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(psnr(zero, off2) == doctest::Approx(26.0206).epsilon(1e-5));
    CHECK(psnr(zero, off2) ==
          doctest::Approx(-10.0 * std::log10(0.0025)).epsilon(1e-12));

    // tiny but nonzero error still hits the cap
    auto eps = Tensor::full({1, 4, 4}, 1e-8);
    CHECK(psnr(zero, eps) == 100.0);

    CHECK_THROWS_AS(psnr(zero, Tensor::zeros({1, 4, 5})), ShapeError);
}

TEST_CASE("psnr decreases as noise grows") {
    Rng rng(11);
    auto img = smooth_image(24, 24, rng);
    std::vector<double> unit(24 * 24);
    for (auto& v : unit) v = rng.normal();

    double prev = 1e300;
    for (double s : {0.02, 0.05, 0.1, 0.2, 0.3}) {
        std::vector<double> noisy(unit.size());
        auto iv = img.values();
        for (std::size_t i = 0; i < unit.size(); ++i) noisy[i] = iv[i] + s * unit[i];
        const double p = psnr(img, Tensor::from_data({24, 24}, noisy));
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("structural similarity of an image with itself is 1") {
    Rng rng(3);
    auto img = smooth_image(16, 20, rng);
    CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("structural similarity is symmetric") {
    Rng rng(5);
    auto a = smooth_image(18, 18, rng);
    auto b = smooth_image(18, 18, rng);
    CHECK(ssim(a, b) == ssim(b, a));
}

TEST_CASE("structural similarity matches the sliding-window oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 4; ++trial) {
        auto a = smooth_image(15 + static_cast<std::size_t>(trial), 19, rng);
        auto bt = smooth_image(15 + static_cast<std::size_t>(trial), 19, rng);
        const double got = ssim(a, bt);
        const double want =
            ssim_oracle(a.values(), bt.values(), 15 + static_cast<std::size_t>(trial), 19);
        CHECK(got == doctest::Approx(want).epsilon(1e-10));
    }
}

TEST_CASE("structural similarity accepts [1,h,w] and rejects small images") {
    Rng rng(7);
    auto a = smooth_image(12, 12, rng);
    auto a3 = Tensor::from_data({1, 12, 12}, std::vector<double>(
                                                  a.values().begin(), a.values().end()));
    CHECK(ssim(a3, a3) == doctest::Approx(1.0).epsilon(1e-12));

    auto tiny = Tensor::zeros({10, 12});
    CHECK_THROWS_AS(ssim(tiny, tiny), ContractError);
    CHECK_THROWS_AS(ssim(Tensor::zeros({3, 16, 16}), Tensor::zeros({3, 16, 16})),
                    ShapeError);
}

TEST_CASE("structural similarity lands in (0,1] on noisy pairs") {
    Rng rng(23);
    for (int trial = 0; trial < 5; ++trial) {
        auto img = smooth_image(20, 20, rng);
        std::vector<double> noisy(400);
        auto iv = img.values();
        for (std::size_t i = 0; i < 400; ++i) noisy[i] = iv[i] + 0.08 * rng.normal();
        const double v = ssim(img, Tensor::from_data({20, 20}, noisy));
        CHECK(v > 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("variance map correlation") {
    Rng rng(29);
    std::vector<double> m(64), s2(64), affine(64), anti(64);
    for (std::size_t i = 0; i < 64; ++i) {
        m[i] = rng.uniform(0.05, 0.4);
        s2[i] = m[i] * m[i];                        // sqrt recovers m exactly
        const double av = 2.0 * m[i] + 0.3;         // positive affine map
        affine[i] = av * av;
        const double rv = 0.5 - m[i];               // negative slope
        anti[i] = rv * rv;
    }
    auto mt = Tensor::from_data({8, 8}, m);
    CHECK(variance_map_quality(Tensor::from_data({8, 8}, s2), mt) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(variance_map_quality(Tensor::from_data({8, 8}, affine), mt) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK(variance_map_quality(Tensor::from_data({8, 8}, anti), mt) ==
          doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("degenerate variance maps are rejected") {
    Rng rng(31);
    std::vector<double> m(16);
    for (auto& v : m) v = rng.uniform(0.1, 0.3);
    auto mt = Tensor::from_data({4, 4}, m);

    CHECK_THROWS_AS(variance_map_quality(Tensor::full({4, 4}, 0.04), mt), DomainError);
    CHECK_THROWS_AS(variance_map_quality(mt, Tensor::full({4, 4}, 0.2)), DomainError);
    std::vector<double> neg = m;
    neg[3] = -0.01;
    CHECK_THROWS_AS(variance_map_quality(Tensor::from_data({4, 4}, neg), mt),
                    DomainError);
    CHECK_THROWS_AS(variance_map_quality(mt, Tensor::zeros({4, 5})), ShapeError);
}

TEST_CASE("luminance weights") {
    auto white = Tensor::full({3, 2, 2}, 1.0);
    auto wy = luminance(white);
    CHECK(wy.shape() == Shape{2, 2});
    for (double v : wy.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> green(12, 0.0);
    for (std::size_t i = 4; i < 8; ++i) green[i] = 1.0;
    auto gy = luminance(Tensor::from_data({3, 2, 2}, green));
    for (double v : gy.values()) CHECK(v == doctest::Approx(0.587).epsilon(1e-12));

    Rng rng(37);
    std::vector<double> level(4);
    for (auto& v : level) v = rng.uniform(0.0, 1.0);
    std::vector<double> gray(12);
    for (std::size_t c = 0; c < 3; ++c) {
        for (std::size_t i = 0; i < 4; ++i) gray[c * 4 + i] = level[i];
    }
    auto yy = luminance(Tensor::from_data({3, 2, 2}, gray));
    auto yv = yy.values();
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(yv[i] == doctest::Approx(level[i]).epsilon(1e-12));
    }

    CHECK_THROWS_AS(luminance(Tensor::zeros({1, 4, 4})), ShapeError);
    CHECK_THROWS_AS(luminance(Tensor::zeros({4, 4})), ShapeError);
}
