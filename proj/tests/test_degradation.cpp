#include "virnet/degradation.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "doctest.h"
#include "finite_diff.hpp"
#include "virnet/errors.hpp"
#include "virnet/rng.hpp"

using namespace virnet;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::vector<double> to_vec(const Tensor& t) {
    auto s = t.values();
    return {s.begin(), s.end()};
}

// Oracle: evaluate the kernel straight from the definition, inverting the
// covariance with Eigen instead of the closed 2x2 form.
std::vector<double> kernel_oracle(const KernelSpec& spec) {
    Eigen::Matrix2d sigma;
    if (spec.kind == KernelKind::isotropic) {
        sigma = Eigen::Matrix2d::Identity() * (spec.d * spec.d);
    } else {
        Eigen::Matrix2d u, lam;
        u << std::cos(spec.theta), -std::sin(spec.theta),  //
            std::sin(spec.theta), std::cos(spec.theta);
        lam << spec.l1, 0.0, 0.0, spec.l2;
        sigma = u * lam * u.transpose();
    }
    const Eigen::Matrix2d si = sigma.inverse();
    const int n = spec.support, half = n / 2;
    std::vector<double> k(static_cast<std::size_t>(n) * n);
    double total = 0.0;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            Eigen::Vector2d r(x - half, y - half);
            const double v = std::exp(-0.5 * r.dot(si * r));
            k[static_cast<std::size_t>(y * n + x)] = v;
            total += v;
        }
    }
    for (auto& v : k) v /= total;
    return k;
}

std::size_t mirror(std::ptrdiff_t i, std::size_t n) {
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    if (i < 0) i = -i;
    if (i > last) i = 2 * last - i;
    return static_cast<std::size_t>(i);
}

// Oracle: true convolution with reflective boundary, written from the
// definition out(p) = sum_q k(q) z(p - q). The kernel-position-outer
// accumulation order matches production so the comparison can be exact.
std::vector<double> blur_oracle(std::span<const double> z, std::size_t c,
                                std::size_t h, std::size_t w,
                                std::span<const double> kernel, std::size_t k) {
    const auto half = static_cast<std::ptrdiff_t>(k / 2);
    std::vector<double> out(z.size(), 0.0);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t u = 0; u < k; ++u) {
            for (std::size_t v = 0; v < k; ++v) {
                // production iterates the flipped kernel in raster order
                const double kv = kernel[(k - 1 - u) * k + (k - 1 - v)];
                const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(u) - half;
                const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(v) - half;
                for (std::size_t y = 0; y < h; ++y) {
                    const std::size_t sy = mirror(static_cast<std::ptrdiff_t>(y) + dy, h);
                    for (std::size_t x = 0; x < w; ++x) {
                        const std::size_t sx =
                            mirror(static_cast<std::ptrdiff_t>(x) + dx, w);
                        out[(ci * h + y) * w + x] += kv * z[(ci * h + sy) * w + sx];
                    }
                }
            }
        }
    }
    return out;
}

std::vector<double> direct_down_oracle(std::span<const double> z, std::size_t c,
                                       std::size_t h, std::size_t w, std::size_t s) {
    std::vector<double> out(c * (h / s) * (w / s));
    std::size_t i = 0;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < h; y += s) {
            for (std::size_t x = 0; x < w; x += s) {
                out[i++] = z[(ci * h + y) * w + x];
            }
        }
    }
    return out;
}

double cubic_oracle(double t) {
    const double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

// Oracle: non-separable bicubic, 16 taps gathered per output pixel.
std::vector<double> bicubic_oracle(std::span<const double> z, std::size_t c,
                                   std::size_t h, std::size_t w, int s) {
    const std::size_t oh = h / static_cast<std::size_t>(s);
    const std::size_t ow = w / static_cast<std::size_t>(s);
    std::vector<double> out(c * oh * ow);
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t oy = 0; oy < oh; ++oy) {
            const double sy = (static_cast<double>(oy) + 0.5) * s - 0.5;
            const double by = std::floor(sy);
            for (std::size_t ox = 0; ox < ow; ++ox) {
                const double sx = (static_cast<double>(ox) + 0.5) * s - 0.5;
                const double bx = std::floor(sx);
                double acc = 0.0;
                for (int i = -1; i <= 2; ++i) {
                    for (int j = -1; j <= 2; ++j) {
                        const auto yy = std::clamp<std::ptrdiff_t>(
                            static_cast<std::ptrdiff_t>(by) + i, 0,
                            static_cast<std::ptrdiff_t>(h) - 1);
                        const auto xx = std::clamp<std::ptrdiff_t>(
                            static_cast<std::ptrdiff_t>(bx) + j, 0,
                            static_cast<std::ptrdiff_t>(w) - 1);
                        acc += cubic_oracle(sy - (by + i)) * cubic_oracle(sx - (bx + j)) *
                               z[(ci * h + static_cast<std::size_t>(yy)) * w +
                                 static_cast<std::size_t>(xx)];
                    }
                }
                out[(ci * oh + oy) * ow + ox] = acc;
            }
        }
    }
    return out;
}

// Oracle: full codec pass with Eigen matrix transforms and its own table
// scaling; replicate padding like production.
std::vector<double> jpeg_oracle(std::span<const double> z, std::size_t h,
                                std::size_t w, int qf) {
    static const int base[64] = {16, 11, 10, 16, 24,  40,  51,  61,   //
                                 12, 12, 14, 19, 26,  58,  60,  55,   //
                                 14, 13, 16, 24, 40,  57,  69,  56,   //
                                 14, 17, 22, 29, 51,  87,  80,  62,   //
                                 18, 22, 37, 56, 68,  109, 103, 77,   //
                                 24, 35, 55, 64, 81,  104, 113, 92,   //
                                 49, 64, 78, 87, 103, 121, 120, 101,  //
                                 72, 92, 95, 98, 112, 100, 103, 99};
    const int scale = qf < 50 ? 5000 / qf : 200 - 2 * qf;
    Eigen::Matrix<double, 8, 8> q, dct;
    for (int i = 0; i < 64; ++i) {
        q(i / 8, i % 8) = std::clamp((base[i] * scale + 50) / 100, 1, 255);
    }
    for (int u = 0; u < 8; ++u) {
        const double cu = u == 0 ? 1.0 / std::sqrt(2.0) : 1.0;
        for (int x = 0; x < 8; ++x) {
            dct(u, x) = 0.5 * cu * std::cos((2.0 * x + 1.0) * u * kPi / 16.0);
        }
    }

    const std::size_t ph = (h + 7) / 8 * 8, pw = (w + 7) / 8 * 8;
    Eigen::MatrixXd work(ph, pw);
    for (std::size_t y = 0; y < ph; ++y) {
        for (std::size_t x = 0; x < pw; ++x) {
            work(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) =
                z[std::min(y, h - 1) * w + std::min(x, w - 1)] * 255.0 - 128.0;
        }
    }
    for (std::size_t by = 0; by < ph; by += 8) {
        for (std::size_t bx = 0; bx < pw; bx += 8) {
            Eigen::Matrix<double, 8, 8> f =
                work.block<8, 8>(static_cast<Eigen::Index>(by),
                                 static_cast<Eigen::Index>(bx));
            Eigen::Matrix<double, 8, 8> coef = dct * f * dct.transpose();
            for (int i = 0; i < 8; ++i) {
                for (int j = 0; j < 8; ++j) {
                    coef(i, j) = std::round(coef(i, j) / q(i, j)) * q(i, j);
                }
            }
            work.block<8, 8>(static_cast<Eigen::Index>(by),
                             static_cast<Eigen::Index>(bx)) =
                dct.transpose() * coef * dct;
        }
    }
    std::vector<double> out(h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            out[y * w + x] = std::clamp((work(static_cast<Eigen::Index>(y),
                                              static_cast<Eigen::Index>(x)) +
                                         128.0) /
                                            255.0,
                                        0.0, 1.0);
        }
    }
    return out;
}

// Smooth test image: a few random sinusoids, values inside (0,1).
Tensor smooth_image(std::size_t h, std::size_t w, Rng& rng) {
    std::vector<double> v(h * w);
    const double fy1 = rng.uniform(0.5, 3.0), fx1 = rng.uniform(0.5, 3.0);
    const double fy2 = rng.uniform(2.0, 6.0), fx2 = rng.uniform(2.0, 6.0);
    const double ph1 = rng.uniform(0.0, 2.0 * kPi), ph2 = rng.uniform(0.0, 2.0 * kPi);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const double ty = static_cast<double>(y) / static_cast<double>(h);
            const double tx = static_cast<double>(x) / static_cast<double>(w);
            v[y * w + x] = 0.5 + 0.25 * std::sin(2.0 * kPi * (fy1 * ty + fx1 * tx) + ph1) +
                           0.15 * std::cos(2.0 * kPi * (fy2 * ty - fx2 * tx) + ph2);
        }
    }
    return Tensor::from_data({1, h, w}, std::move(v));
}

double l2_diff(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(acc);
}

}  // namespace

// ---- kernels ----------------------------------------------------------------

TEST_CASE("kernels match the definitional grid oracle") {
    KernelSpec iso;
    iso.d = 1.6;
    iso.support = 15;
    KernelSpec an1{KernelKind::anisotropic, 1.6, 0.5, 4.0, 1.0, 13};
    KernelSpec an2{KernelKind::anisotropic, 1.6, 2.0, 0.5, 6.0, 9};
    for (const auto& spec : {iso, an1, an2}) {
        auto got = to_vec(make_kernel(spec));
        auto want = kernel_oracle(spec);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-13));
        }
    }
}

TEST_CASE("kernels are non-negative and sum to one") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        KernelSpec spec;
        if (trial % 2 == 0) {
            spec.kind = KernelKind::isotropic;
            spec.d = rng.uniform(0.2, 3.0);
        } else {
            spec.kind = KernelKind::anisotropic;
            spec.theta = rng.uniform(0.0, kPi);
            spec.l1 = rng.uniform(0.2, 8.0);
            spec.l2 = rng.uniform(0.2, 8.0);
        }
        spec.support = 2 * static_cast<int>(rng.uniform_int(1, 8)) + 1;
        auto k = to_vec(make_kernel(spec));
        double total = 0.0;
        for (double v : k) {
            CHECK(v >= 0.0);
            total += v;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("zero rotation separates the axes") {
    KernelSpec spec{KernelKind::anisotropic, 1.6, 0.0, 4.0, 1.5, 11};
    auto k = to_vec(make_kernel(spec));
    // Sigma = diag(l1, l2): closed-form separable evaluation
    const int n = spec.support, half = n / 2;
    std::vector<double> want(static_cast<std::size_t>(n) * n);
    double total = 0.0;
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            const double dx = x - half, dy = y - half;
            const double v = std::exp(-0.5 * (dx * dx / spec.l1 + dy * dy / spec.l2));
            want[static_cast<std::size_t>(y * n + x)] = v;
            total += v;
        }
    }
    for (std::size_t i = 0; i < want.size(); ++i) {
        CHECK(k[i] == doctest::Approx(want[i] / total).epsilon(1e-13));
    }
}

TEST_CASE("quarter-turn rotation transposes the kernel") {
    KernelSpec flat{KernelKind::anisotropic, 1.6, 0.0, 4.0, 1.0, 11};
    KernelSpec tall = flat;
    tall.theta = kPi / 2.0;
    auto a = to_vec(make_kernel(flat));
    auto b = to_vec(make_kernel(tall));
    const std::size_t n = 11;
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            CHECK(b[y * n + x] == doctest::Approx(a[x * n + y]).epsilon(1e-13));
        }
    }
}

TEST_CASE("isotropic kernels are radially symmetric") {
    KernelSpec spec;
    spec.d = 1.1;
    spec.support = 9;
    auto k = to_vec(make_kernel(spec));
    const std::size_t n = 9;
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            CHECK(k[y * n + x] == doctest::Approx(k[x * n + y]).epsilon(1e-14));
            CHECK(k[y * n + x] ==
                  doctest::Approx(k[(n - 1 - y) * n + (n - 1 - x)]).epsilon(1e-14));
        }
    }
    // isotropic == anisotropic with equal eigenvalues, any rotation
    KernelSpec an{KernelKind::anisotropic, 1.1, 0.7, 1.1 * 1.1, 1.1 * 1.1, 9};
    auto k2 = to_vec(make_kernel(an));
    for (std::size_t i = 0; i < k.size(); ++i) {
        CHECK(k2[i] == doctest::Approx(k[i]).epsilon(1e-13));
    }
}

TEST_CASE("degenerate covariances are rejected") {
    KernelSpec bad;
    bad.d = 0.0;
    CHECK_THROWS_AS(make_kernel(bad), DomainError);
    bad.d = -1.0;
    CHECK_THROWS_AS(make_kernel(bad), DomainError);
    KernelSpec an{KernelKind::anisotropic, 1.6, 0.3, -2.0, 1.0, 15};
    CHECK_THROWS_AS(make_kernel(an), DomainError);
    an.l1 = 2.0;
    an.l2 = 0.0;
    CHECK_THROWS_AS(make_kernel(an), DomainError);
    KernelSpec even;
    even.support = 8;
    CHECK_THROWS_AS(make_kernel(even), DomainError);
}

// ---- blur + direct downsampling --------------------------------------------

TEST_CASE("degradation keeps the upper-left pixel of each block") {
    auto z = Tensor::from_data({1, 2, 2}, {1, 2, 3, 4});
    DegradationSpec spec;
    spec.scale = 2;
    auto y = apply_degradation(z, spec);
    CHECK(y.shape() == Shape{1, 1, 1});
    CHECK(y.values()[0] == 1.0);
}

TEST_CASE("unit kernel at native scale is the identity") {
    Rng rng(9);
    auto z = Tensor::random_uniform({2, 6, 7}, rng, 0.0, 1.0);
    DegradationSpec spec;
    spec.kernel = KernelSpec{};
    spec.kernel->support = 1;
    auto y = apply_degradation(z, spec);
    auto a = z.values();
    auto b = y.values();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("degradation matches the nested-loop oracle exactly") {
    Rng rng(57);
    int blur_only = 0, strided = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t s = std::vector<std::size_t>{1, 1, 2, 3, 4}[trial % 5];
        const std::size_t h = s * static_cast<std::size_t>(rng.uniform_int(3, 6));
        const std::size_t w = s * static_cast<std::size_t>(rng.uniform_int(3, 6));
        const std::size_t c = 1 + static_cast<std::size_t>(trial % 2);
        KernelSpec kspec;
        if (trial % 3 == 0) {
            kspec.kind = KernelKind::anisotropic;
            kspec.theta = rng.uniform(0.0, kPi);
            kspec.l1 = rng.uniform(0.2, 8.0);
            kspec.l2 = rng.uniform(0.2, 8.0);
        } else {
            kspec.d = rng.uniform(0.2, 2.5);
        }
        kspec.support = std::vector<int>{3, 5, 7}[trial % 3];
        if (static_cast<std::size_t>(kspec.support / 2) >= std::min(h, w)) continue;

        auto z = Tensor::random_uniform({c, h, w}, rng, 0.0, 1.0);
        auto kernel = make_kernel(kspec);
        DegradationSpec spec;
        spec.kernel = kspec;
        spec.scale = static_cast<int>(s);
        auto got = to_vec(apply_degradation(z, spec));

        auto blurred = blur_oracle(z.values(), c, h, w, kernel.values(),
                                   static_cast<std::size_t>(kspec.support));
        auto want = direct_down_oracle(blurred, c, h, w, s);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
        (s == 1 ? blur_only : strided) += 1;
    }
    CHECK(blur_only >= 15);  // both paths actually exercised
    CHECK(strided >= 20);
}

TEST_CASE("pinned oracle case: 12x12 image, 7x7 kernel, s=3") {
    Rng rng(3);
    auto z = Tensor::random_uniform({1, 12, 12}, rng, 0.0, 1.0);
    KernelSpec kspec;
    kspec.d = 1.2;
    kspec.support = 7;
    DegradationSpec spec;
    spec.kernel = kspec;
    spec.scale = 3;
    auto got = to_vec(apply_degradation(z, spec));
    auto kernel = make_kernel(kspec);
    auto blurred = blur_oracle(z.values(), 1, 12, 12, kernel.values(), 7);
    auto want = direct_down_oracle(blurred, 1, 12, 12, 3);
    CHECK(got.size() == 16);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("indivisible dims are rejected") {
    DegradationSpec spec;
    spec.scale = 2;
    CHECK_THROWS_AS(apply_degradation(Tensor::zeros({1, 5, 6}), spec), ShapeError);
    CHECK_THROWS_AS(apply_degradation(Tensor::zeros({5, 6}), spec), ShapeError);
}

TEST_CASE("degradation is differentiable in the restored image") {
    Rng rng(77);
    auto z = Tensor::random_uniform({1, 8, 8}, rng, 0.0, 1.0, /*requires_grad=*/true);
    KernelSpec kspec;
    kspec.d = 0.8;
    kspec.support = 3;
    DegradationSpec spec;
    spec.kernel = kspec;
    spec.scale = 2;
    auto report = testsup::check_gradients(
        {z}, [&] { return sum(square(apply_degradation(z, spec))); }, rng);
    CHECK(report.max_err <= 1e-4);
}

TEST_CASE("task consistency rules") {
    DegradationSpec spec;
    spec.task = Task::denoise;
    CHECK_NOTHROW(validate_degradation(spec));
    spec.scale = 2;
    CHECK_THROWS_AS(validate_degradation(spec), ContractError);
    spec.scale = 1;
    spec.kernel = KernelSpec{};
    CHECK_THROWS_AS(validate_degradation(spec), ContractError);

    DegradationSpec sr;
    sr.task = Task::sr;
    sr.scale = 2;
    CHECK_THROWS_AS(validate_degradation(sr), ContractError);  // kernel missing
    sr.kernel = KernelSpec{};
    CHECK_NOTHROW(validate_degradation(sr));
    sr.scale = 1;
    CHECK_THROWS_AS(validate_degradation(sr), ContractError);

    DegradationSpec db;
    db.task = Task::deblock;
    CHECK_NOTHROW(validate_degradation(db));
}

// ---- bicubic downsampling ---------------------------------------------------

TEST_CASE("bicubic at scale 1 is the identity") {
    Rng rng(19);
    auto img = Tensor::random_uniform({2, 5, 6}, rng, -1.0, 1.0);
    auto out = bicubic_downsample(img, 1);
    auto a = img.values();
    auto b = out.values();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("bicubic preserves constants") {
    auto img = Tensor::full({1, 8, 12}, 0.7);
    for (int s : {2, 4}) {
        auto out = bicubic_downsample(img, s);
        for (double v : to_vec(out)) CHECK(v == doctest::Approx(0.7).epsilon(1e-13));
    }
}

TEST_CASE("bicubic matches the 16-tap gather oracle") {
    Rng rng(23);
    for (int s : {2, 4}) {
        auto img = Tensor::random_uniform({2, 12, 16}, rng, 0.0, 1.0);
        auto got = to_vec(bicubic_downsample(img, s));
        auto want = bicubic_oracle(img.values(), 2, 12, 16, s);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("bicubic rejects bad scales and shapes") {
    CHECK_THROWS_AS(bicubic_downsample(Tensor::zeros({1, 9, 8}), 2), ShapeError);
    CHECK_THROWS_AS(bicubic_downsample(Tensor::zeros({1, 8, 8}), 0), ShapeError);
    CHECK_THROWS_AS(bicubic_downsample(Tensor::zeros({8, 8}), 2), ShapeError);
}

// ---- block codec ------------------------------------------------------------

TEST_CASE("codec matches the independent transform oracle") {
    Rng rng(101);
    for (int trial = 0; trial < 8; ++trial) {
        const std::size_t h = std::vector<std::size_t>{16, 10, 8, 13}[trial % 4];
        const std::size_t w = std::vector<std::size_t>{16, 13, 24, 10}[trial % 4];
        const int qf = std::vector<int>{10, 30, 50, 80, 95}[trial % 5];
        auto img = smooth_image(h, w, rng);
        auto got = to_vec(jpeg_like_compress(img, qf));
        auto want = jpeg_oracle(img.values(), h, w, qf);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("constant images survive the codec within one quantization step") {
    for (double level : {0.2, 0.5, 0.83}) {
        auto img = Tensor::full({1, 16, 16}, level);
        auto out = to_vec(jpeg_like_compress(img, 50));
        // DC quant entry at qf=50 is 16; error bound is (16/2)/8/255
        const double bound = 16.0 / 2.0 / 8.0 / 255.0 + 1e-12;
        for (double v : out) {
            CHECK(std::abs(v - level) <= bound);
            CHECK(v == out[0]);  // stays constant
        }
    }
}

TEST_CASE("second compression changes the image less than the first") {
    Rng rng(7);
    double first_total = 0.0, second_total = 0.0;
    for (int i = 0; i < 20; ++i) {
        auto img = smooth_image(16, 16, rng);
        auto once = jpeg_like_compress(img, 30);
        auto twice = jpeg_like_compress(once, 30);
        const double r1 = l2_diff(once.values(), img.values());
        const double r2 = l2_diff(twice.values(), once.values());
        CHECK(r2 <= r1);
        first_total += r1;
        second_total += r2;
    }
    CHECK(first_total > 0.0);
    CHECK(second_total < 0.1 * first_total);
}

TEST_CASE("codec accepts rank-2 images and rejects bad inputs") {
    auto img = Tensor::full({6, 6}, 0.5);
    CHECK(jpeg_like_compress(img, 50).shape() == Shape{6, 6});
    CHECK_THROWS_AS(jpeg_like_compress(img, 0), DomainError);
    CHECK_THROWS_AS(jpeg_like_compress(img, 100), DomainError);
    CHECK_THROWS_AS(jpeg_like_compress(Tensor::zeros({3, 8, 8}), 50), ShapeError);
}

// ---- noise fields -----------------------------------------------------------

TEST_CASE("constant noise fields") {
    NoiseFieldSpec field;
    field.value = 0.25;
    auto m = noise_map(field, 5, 7);
    CHECK(m.shape() == Shape{5, 7});
    for (double v : to_vec(m)) CHECK(v == 0.25);

    field.value = 0.0;
    Rng rng(1);
    auto n = synth_noise({1, 6, 6}, field, rng);
    for (double v : to_vec(n)) CHECK(v == 0.0);
}

TEST_CASE("noise amplitude empirically matches the map") {
    NoiseFieldSpec field;
    field.value = 0.25;
    Rng rng(1234);
    auto n = synth_noise({4, 512, 512}, field, rng);  // > 1e6 samples
    auto v = n.values();
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() - 1);
    CHECK(std::sqrt(var) == doctest::Approx(0.25).epsilon(0.01));
}

TEST_CASE("fixed-pixel noise std matches the map within 5 percent") {
    NoiseFieldSpec field;
    field.kind = NoiseFieldKind::peaks;
    field.value = 0.3;
    field.seed = 7;
    auto m = to_vec(noise_map(field, 8, 8));
    const std::size_t pix = 3 * 8 + 5;

    Rng rng(999);
    double acc = 0.0, acc2 = 0.0;
    const int reps = 10000;
    for (int i = 0; i < reps; ++i) {
        auto n = synth_noise({1, 8, 8}, field, rng);
        const double x = n.values()[pix];
        acc += x;
        acc2 += x * x;
    }
    const double var = (acc2 - acc * acc / reps) / (reps - 1);
    CHECK(std::sqrt(var) == doctest::Approx(m[pix]).epsilon(0.05));
}

TEST_CASE("peak noise maps are seeded and span their range") {
    NoiseFieldSpec field;
    field.kind = NoiseFieldKind::peaks;
    field.value = 0.3;
    field.seed = 7;
    auto a = to_vec(noise_map(field, 32, 32));
    auto b = to_vec(noise_map(field, 32, 32));
    CHECK(a == b);

    field.seed = 8;
    auto c = to_vec(noise_map(field, 32, 32));
    CHECK(a != c);

    const double hi = *std::max_element(a.begin(), a.end());
    const double lo = *std::min_element(a.begin(), a.end());
    CHECK(hi == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(lo >= 0.03 - 1e-12);  // default floor is a tenth of the peak
    CHECK(lo <= 0.03 + 0.3 * 0.27);
}

TEST_CASE("gradient noise maps ramp left to right") {
    NoiseFieldSpec field;
    field.kind = NoiseFieldKind::gradient;
    field.value = 0.4;
    field.low = 0.05;
    auto m = to_vec(noise_map(field, 3, 9));
    for (std::size_t y = 0; y < 3; ++y) {
        CHECK(m[y * 9] == doctest::Approx(0.05).epsilon(1e-14));
        CHECK(m[y * 9 + 8] == doctest::Approx(0.4).epsilon(1e-14));
        for (std::size_t x = 1; x < 9; ++x) {
            CHECK(m[y * 9 + x] > m[y * 9 + x - 1]);
            CHECK(m[y * 9 + x] == m[x]);  // rows identical
        }
    }
}

TEST_CASE("vertical-split noise maps") {
    NoiseFieldSpec field;
    field.kind = NoiseFieldKind::vertical_split;
    field.value = 0.4;
    field.low = 0.1;
    auto m = to_vec(noise_map(field, 2, 8));
    for (std::size_t y = 0; y < 2; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
            CHECK(m[y * 8 + x] == (x < 4 ? 0.1 : 0.4));
        }
    }
}

TEST_CASE("custom noise maps pass through after validation") {
    NoiseFieldSpec field;
    field.kind = NoiseFieldKind::custom;
    field.custom = Tensor::from_data({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
    CHECK(to_vec(noise_map(field, 2, 3)) == to_vec(field.custom));
    CHECK_THROWS_AS(noise_map(field, 3, 2), ShapeError);

    field.custom = Tensor::from_data({2, 3}, {0.1, -0.2, 0.3, 0.4, 0.5, 0.6});
    CHECK_THROWS_AS(noise_map(field, 2, 3), DomainError);
}

TEST_CASE("noise maps reject negative levels") {
    NoiseFieldSpec field;
    field.value = -0.1;
    CHECK_THROWS_AS(noise_map(field, 4, 4), DomainError);
    field.kind = NoiseFieldKind::peaks;
    field.value = 0.3;
    field.low = 0.5;  // low above high
    CHECK_THROWS_AS(noise_map(field, 4, 4), DomainError);
    Rng rng(1);
    CHECK_THROWS_AS(synth_noise({4, 4}, NoiseFieldSpec{}, rng), ShapeError);
}

TEST_CASE("per-channel noise shares the map but not the draws") {
    NoiseFieldSpec field;
    field.value = 1.0;
    Rng rng(5);
    auto n = to_vec(synth_noise({2, 4, 4}, field, rng));
    bool differ = false;
    for (std::size_t i = 0; i < 16; ++i) differ |= n[i] != n[16 + i];
    CHECK(differ);
}

// ---- kernel embedding -------------------------------------------------------

namespace {

std::vector<Tensor> random_kernel_set(std::size_t n, int support, Rng& rng) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < n; ++i) {
        KernelSpec spec;
        if (i % 2 == 0) {
            spec.d = rng.uniform(0.4, 2.5);
        } else {
            spec.kind = KernelKind::anisotropic;
            spec.theta = rng.uniform(0.0, kPi);
            spec.l1 = rng.uniform(0.3, 6.0);
            spec.l2 = rng.uniform(0.3, 6.0);
        }
        spec.support = support;
        out.push_back(make_kernel(spec));
    }
    return out;
}

}  // namespace

TEST_CASE("embedding basis rows are orthonormal and centered") {
    Rng rng(61);
    auto kernels = random_kernel_set(30, 9, rng);
    auto emb = kernel_pca_fit(kernels, 4);
    CHECK(emb.t == 4);
    CHECK(emb.support == 9);
    REQUIRE(emb.basis.rows == 4);
    REQUIRE(emb.basis.cols == 81);

    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            double dot = 0.0;
            for (std::size_t d = 0; d < 81; ++d) {
                dot += emb.basis.at(i, d) * emb.basis.at(j, d);
            }
            CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-10));
        }
    }

    // mean really is the sample mean
    std::vector<double> mean(81, 0.0);
    for (const auto& k : kernels) {
        auto kv = k.values();
        for (std::size_t i = 0; i < 81; ++i) mean[i] += kv[i] / 30.0;
    }
    for (std::size_t i = 0; i < 81; ++i) {
        CHECK(emb.mean[i] == doctest::Approx(mean[i]).epsilon(1e-12));
    }

    // projections of the training set average to zero per component
    std::vector<double> total(4, 0.0);
    for (const auto& k : kernels) {
        auto code = project_kernel(emb, k);
        for (std::size_t i = 0; i < 4; ++i) total[i] += code[i];
    }
    for (double v : total) CHECK(std::abs(v) <= 1e-10);
}

TEST_CASE("embedding matches an independent eigendecomposition") {
    Rng rng(67);
    auto kernels = random_kernel_set(24, 7, rng);
    const int t = 3;
    auto emb = kernel_pca_fit(kernels, t);
    const std::size_t dim = 49;

    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim),
                                                static_cast<Eigen::Index>(dim));
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (const auto& k : kernels) {
        auto kv = k.values();
        for (std::size_t i = 0; i < dim; ++i) mean(static_cast<Eigen::Index>(i)) += kv[i];
    }
    mean /= static_cast<double>(kernels.size());
    for (const auto& k : kernels) {
        auto kv = k.values();
        Eigen::VectorXd d(static_cast<Eigen::Index>(dim));
        for (std::size_t i = 0; i < dim; ++i) {
            d(static_cast<Eigen::Index>(i)) = kv[i] - mean(static_cast<Eigen::Index>(i));
        }
        cov += d * d.transpose() / static_cast<double>(kernels.size());
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::MatrixXd top = es.eigenvectors().rightCols(t);  // ascending order

    // compare the rank-t projectors; eigenvector signs are arbitrary
    Eigen::MatrixXd b(t, static_cast<Eigen::Index>(dim));
    for (int r = 0; r < t; ++r) {
        for (std::size_t i = 0; i < dim; ++i) {
            b(r, static_cast<Eigen::Index>(i)) =
                emb.basis.at(static_cast<std::size_t>(r), i);
        }
    }
    Eigen::MatrixXd p_mine = b.transpose() * b;
    Eigen::MatrixXd p_eigen = top * top.transpose();
    CHECK((p_mine - p_eigen).cwiseAbs().maxCoeff() <= 1e-8);

    // reconstruction error agrees with the oracle projector
    KernelSpec pspec{KernelKind::anisotropic, 1.6, 1.1, 3.0, 0.8, 7};
    auto probe = make_kernel(pspec);
    auto kv = probe.values();
    auto recon = reconstruct_kernel(emb, project_kernel(emb, probe));
    double err2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        err2 += (recon[i] - kv[i]) * (recon[i] - kv[i]);
    }
    Eigen::VectorXd d(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
        d(static_cast<Eigen::Index>(i)) = kv[i] - mean(static_cast<Eigen::Index>(i));
    }
    const double want = (d - p_eigen * d).squaredNorm();
    CHECK(err2 == doctest::Approx(want).epsilon(1e-8));
}

TEST_CASE("full-rank embedding reconstructs its training set") {
    Rng rng(71);
    std::vector<Tensor> vecs;
    for (int i = 0; i < 6; ++i) vecs.push_back(Tensor::random_normal({4, 4}, rng));
    auto emb = kernel_pca_fit(vecs, 6);
    for (const auto& v : vecs) {
        auto recon = reconstruct_kernel(emb, project_kernel(emb, v));
        auto vv = v.values();
        for (std::size_t i = 0; i < 16; ++i) {
            CHECK(std::abs(recon[i] - vv[i]) <= 1e-10);
        }
    }
}

TEST_CASE("reconstruction error does not increase with embedding size") {
    Rng rng(73);
    auto kernels = random_kernel_set(20, 7, rng);
    KernelSpec pspec;
    pspec.d = 0.9;
    pspec.support = 7;
    auto probe = make_kernel(pspec);
    auto kv = probe.values();
    double prev = 1e300;
    for (int t : {1, 3, 6, 10}) {
        auto emb = kernel_pca_fit(kernels, t);
        auto recon = reconstruct_kernel(emb, project_kernel(emb, probe));
        double err = 0.0;
        for (std::size_t i = 0; i < kv.size(); ++i) {
            err += (recon[i] - kv[i]) * (recon[i] - kv[i]);
        }
        CHECK(err <= prev + 1e-12);
        prev = err;
    }
}

TEST_CASE("embedding contract violations") {
    Rng rng(79);
    auto kernels = random_kernel_set(4, 7, rng);
    CHECK_THROWS_AS(kernel_pca_fit(kernels, 5), ContractError);
    CHECK_THROWS_AS(kernel_pca_fit(kernels, 0), ContractError);

    auto mixed = kernels;
    KernelSpec other;
    other.support = 9;
    mixed.push_back(make_kernel(other));
    CHECK_THROWS_AS(kernel_pca_fit(mixed, 2), ShapeError);

    auto emb = kernel_pca_fit(kernels, 2);
    CHECK_THROWS_AS(project_kernel(emb, make_kernel(other)), ShapeError);
    CHECK_THROWS_AS(reconstruct_kernel(emb, {1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("codes stretch to constant planes") {
    auto out = stretch_embedding({3.0}, 2, 2);
    CHECK(out.shape() == Shape{1, 2, 2});
    for (double v : to_vec(out)) CHECK(v == 3.0);

    auto multi = stretch_embedding({1.0, -2.0, 0.5}, 3, 4);
    CHECK(multi.shape() == Shape{3, 3, 4});
    auto mv = multi.values();
    const double code[3] = {1.0, -2.0, 0.5};
    for (std::size_t p = 0; p < 3; ++p) {
        for (std::size_t i = 0; i < 12; ++i) CHECK(mv[p * 12 + i] == code[p]);
    }
}

// ---- kernel re-estimation ---------------------------------------------------

TEST_CASE("re-estimation at scale 1 returns the kernel itself") {
    Rng rng(83);
    KernelSpec kspec;
    kspec.d = 1.0;
    kspec.support = 5;
    auto k_d = make_kernel(kspec);
    std::vector<Tensor> probes = {smooth_image(10, 10, rng), smooth_image(10, 10, rng)};
    auto k_b = reestimate_kernel(k_d, 1, probes);
    auto a = k_d.values();
    auto b = k_b.values();
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(std::abs(a[i] - b[i]) <= 1e-8);
    }
}

namespace {

double reestimate_objective(const Tensor& k, const Tensor& k_d, int s,
                            const std::vector<Tensor>& probes) {
    double acc = 0.0;
    for (const auto& z : probes) {
        auto lhs_t = bicubic_downsample(blur_reflect(z, k), s);
        auto rhs_t = subsample2d(blur_reflect(z, k_d), static_cast<std::size_t>(s));
        auto lhs = lhs_t.values();
        auto rhs = rhs_t.values();
        for (std::size_t i = 0; i < lhs.size(); ++i) {
            acc += (lhs[i] - rhs[i]) * (lhs[i] - rhs[i]);
        }
    }
    return acc;
}

}  // namespace

TEST_CASE("re-estimation lowers the downsampler-mismatch objective") {
    Rng rng(89);
    KernelSpec kspec;
    kspec.d = 1.3;
    kspec.support = 5;
    auto k_d = make_kernel(kspec);
    std::vector<Tensor> probes = {smooth_image(16, 16, rng), smooth_image(16, 16, rng)};
    auto k_b = reestimate_kernel(k_d, 2, probes);

    const double at_kb = reestimate_objective(k_b, k_d, 2, probes);
    const double at_kd = reestimate_objective(k_d, k_d, 2, probes);
    CHECK(at_kb <= at_kd * (1.0 + 1e-9) + 1e-12);
    CHECK(at_kb < at_kd);  // the downsamplers genuinely differ at s=2

    double total = 0.0;
    for (double v : to_vec(k_b)) total += v;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("re-estimation matches a dense normal-equations solve") {
    Rng rng(97);
    KernelSpec kspec;
    kspec.d = 1.1;
    kspec.support = 5;
    auto k_d = make_kernel(kspec);
    std::vector<Tensor> probes = {smooth_image(12, 12, rng), smooth_image(12, 12, rng)};
    auto got = to_vec(reestimate_kernel(k_d, 2, probes));

    // assemble the same least-squares system with the oracle operators
    const std::size_t dim = 25;
    std::size_t rows = 0;
    for (const auto& z : probes) rows += (z.shape()[1] / 2) * (z.shape()[2] / 2);
    Eigen::MatrixXd A(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
    Eigen::VectorXd b(static_cast<Eigen::Index>(rows));
    std::size_t row0 = 0;
    for (const auto& z : probes) {
        const std::size_t h = z.shape()[1], w = z.shape()[2];
        auto zb = blur_oracle(z.values(), 1, h, w, k_d.values(), 5);
        auto tgt = direct_down_oracle(zb, 1, h, w, 2);
        for (std::size_t r = 0; r < tgt.size(); ++r) {
            b(static_cast<Eigen::Index>(row0 + r)) = tgt[r];
        }
        for (std::size_t j = 0; j < dim; ++j) {
            std::vector<double> e(dim, 0.0);
            e[j] = 1.0;
            auto col = bicubic_oracle(blur_oracle(z.values(), 1, h, w, e, 5), 1, h, w, 2);
            for (std::size_t r = 0; r < col.size(); ++r) {
                A(static_cast<Eigen::Index>(row0 + r), static_cast<Eigen::Index>(j)) =
                    col[r];
            }
        }
        row0 += tgt.size();
    }
    Eigen::VectorXd x = (A.transpose() * A).ldlt().solve(A.transpose() * b);
    x /= x.sum();
    for (std::size_t i = 0; i < dim; ++i) {
        CHECK(got[i] == doctest::Approx(x(static_cast<Eigen::Index>(i))).epsilon(1e-6));
    }
}

TEST_CASE("re-estimation rejects bad systems") {
    KernelSpec kspec;
    kspec.d = 1.0;
    kspec.support = 5;
    auto k_d = make_kernel(kspec);
    Rng rng(5);

    // too few equations
    CHECK_THROWS_AS(reestimate_kernel(k_d, 2, {smooth_image(8, 8, rng)}), ContractError);
    CHECK_THROWS_AS(reestimate_kernel(k_d, 2, {}), ContractError);
    // indivisible probe dims
    CHECK_THROWS_AS(reestimate_kernel(k_d, 2, {smooth_image(9, 8, rng)}), ShapeError);
    // multi-channel probes unsupported
    CHECK_THROWS_AS(reestimate_kernel(k_d, 2, {Tensor::zeros({2, 16, 16})}), ShapeError);
    // constant probes give identical columns -> rank-deficient
    CHECK_THROWS_AS(reestimate_kernel(k_d, 2, {Tensor::full({1, 16, 16}, 0.5)}),
                    ConditioningError);
}

// ---- spec strings -----------------------------------------------------------

TEST_CASE("kernel spec strings parse and round-trip") {
    auto iso = parse_kernel_spec("iso:d=1.6,support=15");
    CHECK(iso.kind == KernelKind::isotropic);
    CHECK(iso.d == 1.6);
    CHECK(iso.support == 15);

    auto an = parse_kernel_spec("aniso:theta=0.5,l1=4,l2=1");
    CHECK(an.kind == KernelKind::anisotropic);
    CHECK(an.theta == 0.5);
    CHECK(an.l1 == 4.0);
    CHECK(an.l2 == 1.0);
    CHECK(an.support == 15);  // default support

    auto bare = parse_kernel_spec("iso");
    CHECK(bare.d == 1.6);

    auto rt = parse_kernel_spec(kernel_spec_str(an));
    CHECK(rt.kind == an.kind);
    CHECK(rt.theta == an.theta);
    CHECK(rt.l1 == an.l1);
    CHECK(rt.l2 == an.l2);
    CHECK(rt.support == an.support);
}

TEST_CASE("noise spec strings parse and round-trip") {
    auto pk = parse_noise_spec("peaks:seed=7,max=0.3");
    CHECK(pk.kind == NoiseFieldKind::peaks);
    CHECK(pk.seed == 7);
    CHECK(pk.value == 0.3);

    auto ct = parse_noise_spec("const:value=0.05");
    CHECK(ct.kind == NoiseFieldKind::constant);
    CHECK(ct.value == 0.05);

    auto gr = parse_noise_spec("gradient:low=0.02,high=0.3");
    CHECK(gr.kind == NoiseFieldKind::gradient);
    CHECK(gr.low == 0.02);
    CHECK(gr.value == 0.3);

    auto vs = parse_noise_spec("vsplit:low=0.1,high=0.4");
    CHECK(vs.kind == NoiseFieldKind::vertical_split);
    CHECK(vs.low == 0.1);
    CHECK(vs.value == 0.4);

    auto rt = parse_noise_spec(noise_spec_str(pk));
    CHECK(rt.kind == pk.kind);
    CHECK(rt.seed == pk.seed);
    CHECK(rt.value == pk.value);
    CHECK(rt.count == pk.count);
}

TEST_CASE("malformed spec strings are rejected") {
    CHECK_THROWS_AS(parse_kernel_spec("box:w=3"), ConfigError);
    CHECK_THROWS_AS(parse_kernel_spec("iso:width=1.6"), ConfigError);
    CHECK_THROWS_AS(parse_kernel_spec("iso:d"), ConfigError);
    CHECK_THROWS_AS(parse_kernel_spec("iso:d=abc"), ConfigError);
    CHECK_THROWS_AS(parse_noise_spec("speckle:v=1"), ConfigError);
    CHECK_THROWS_AS(parse_noise_spec("peaks:level=0.3"), ConfigError);
    CHECK_THROWS_AS(parse_noise_spec("custom"), ConfigError);  // path missing
}
