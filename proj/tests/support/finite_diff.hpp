#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "virnet/rng.hpp"
#include "virnet/tensor.hpp"

namespace testsup {

struct GradCheckReport {
    double max_err = 0.0;       // max of |analytic - numeric| / max(1, |a|, |n|)
    std::size_t checked = 0;
    std::size_t skipped = 0;    // probes straddling an activation kink
    std::string worst;          // where the worst error occurred
};

// Compares analytic gradients of f() against central finite differences.
//
// f must rebuild its graph from the current leaf values on every call and
// return a scalar. Each leaf is probed at up to probes_per_leaf coordinates
// chosen by rng; the step is scaled by the coordinate magnitude. Probes where
// half-step and full-step differences disagree sit on a kink and are skipped
// rather than compared.
GradCheckReport check_gradients(std::vector<virnet::Tensor> leaves,
                                const std::function<virnet::Tensor()>& f,
                                virnet::Rng& rng,
                                std::size_t probes_per_leaf = 25,
                                double step = 1e-5);

}  // namespace testsup
