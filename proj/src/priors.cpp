#include "virnet/priors.hpp"

#include <cmath>
#include <string>

#include "virnet/errors.hpp"

namespace virnet {

const char* task_name(Task task) {
    switch (task) {
        case Task::denoise: return "denoise";
        case Task::sr: return "sr";
        case Task::deblock: return "deblock";
    }
    return "?";
}

Task parse_task(const std::string& name) {
    if (name == "denoise") return Task::denoise;
    if (name == "sr") return Task::sr;
    if (name == "deblock") return Task::deblock;
    throw ConfigError("unknown task '" + name + "' (expected denoise, sr or deblock)");
}

std::vector<double> filter_window(int p, FilterKind kind) {
    if (p < 3 || p % 2 == 0) {
        throw ContractError("filter_window: p must be odd and >= 3, got " +
                            std::to_string(p));
    }
    const std::size_t n = static_cast<std::size_t>(p);
    std::vector<double> w(n * n);
    if (kind == FilterKind::average) {
        const double v = 1.0 / static_cast<double>(n * n);
        for (auto& x : w) x = v;
        return w;
    }
    const double sigma = static_cast<double>(p) / 4.0;
    const int half = p / 2;
    double total = 0.0;
    for (int dy = -half; dy <= half; ++dy) {
        for (int dx = -half; dx <= half; ++dx) {
            const double v = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            w[static_cast<std::size_t>(dy + half) * n +
              static_cast<std::size_t>(dx + half)] = v;
            total += v;
        }
    }
    for (auto& x : w) x /= total;
    return w;
}

namespace {

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
    const auto last = static_cast<std::ptrdiff_t>(n) - 1;
    while (i < 0 || i > last) {
        if (i < 0) i = -i;
        if (i > last) i = 2 * last - i;
    }
    return static_cast<std::size_t>(i);
}

}  // namespace

NoisePrior compute_xi(const Tensor& y, const Tensor& Hx, const HyperParams& hp) {
    if (y.shape() != Hx.shape()) {
        throw ShapeError("compute_xi: shapes " + shape_str(y.shape()) + " and " +
                         shape_str(Hx.shape()) + " differ");
    }
    if (!(hp.eps0_sq > 0.0)) {
        throw ContractError("compute_xi: eps0_sq must be positive");
    }
    Shape shape = y.shape();
    if (shape.size() == 2) shape = {1, shape[0], shape[1]};
    if (shape.size() != 3) {
        throw ShapeError("compute_xi: expected [c,h,w] images, got " +
                         shape_str(y.shape()));
    }
    const std::size_t c = shape[0], h = shape[1], w = shape[2];

    auto yv = y.values();
    auto hv = Hx.values();
    std::vector<double> sq(yv.size());
    for (std::size_t i = 0; i < sq.size(); ++i) {
        const double r = yv[i] - hv[i];
        sq[i] = r * r;
    }

    const auto win = filter_window(hp.p, hp.filter_kind);
    const int half = hp.p / 2;
    const std::size_t pn = static_cast<std::size_t>(hp.p);
    std::vector<double> xi(sq.size());
    for (std::size_t ci = 0; ci < c; ++ci) {
        const double* plane = sq.data() + ci * h * w;
        double* out = xi.data() + ci * h * w;
        for (std::size_t py = 0; py < h; ++py) {
            for (std::size_t px = 0; px < w; ++px) {
                double acc = 0.0;
                for (int dy = -half; dy <= half; ++dy) {
                    const std::size_t sy =
                        reflect_index(static_cast<std::ptrdiff_t>(py) + dy, h);
                    for (int dx = -half; dx <= half; ++dx) {
                        const std::size_t sx =
                            reflect_index(static_cast<std::ptrdiff_t>(px) + dx, w);
                        acc += win[static_cast<std::size_t>(dy + half) * pn +
                                   static_cast<std::size_t>(dx + half)] *
                               plane[sy * w + sx];
                    }
                }
                out[py * w + px] = std::max(acc, 1e-8);
            }
        }
    }

    NoisePrior prior;
    const double p2 = static_cast<double>(hp.p) * static_cast<double>(hp.p);
    prior.alpha0 = p2 / 2.0 - 1.0;
    std::vector<double> beta0(xi.size());
    for (std::size_t i = 0; i < xi.size(); ++i) beta0[i] = p2 * xi[i] / 2.0;
    prior.xi = Tensor::from_data(y.shape(), std::move(xi));
    prior.beta0 = Tensor::from_data(y.shape(), std::move(beta0));
    return prior;
}

HyperParams default_hyperparams(Task task) {
    switch (task) {
        case Task::denoise:
        case Task::deblock:
            return HyperParams{1e-6, 7, FilterKind::gaussian};
        case Task::sr:
            return HyperParams{1e-6, 11, FilterKind::average};
    }
    throw ContractError("default_hyperparams: unknown task");
}

SigmaPrior to_sigma_prior(const NoisePrior& prior) {
    return SigmaPrior{prior.alpha0, prior.beta0};
}

}  // namespace virnet
