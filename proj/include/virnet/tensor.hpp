#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "virnet/rng.hpp"

namespace virnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

/// Dense n-d array of doubles in row-major order, with optional reverse-mode
/// gradient tracking. A Tensor is a cheap shared handle: copies alias the
/// same storage. Operations on tracked tensors record their inputs and an
/// adjoint rule; backward() replays the records in reverse topological order
/// and then clears them, so every forward pass builds a fresh tape.
///
/// Graphs are single-threaded. Untracked tensors are immutable in practice
/// and may be shared across threads.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
    static Tensor scalar(double value);
    /// i.i.d. standard normal entries drawn from rng.
    static Tensor random_normal(Shape shape, Rng& rng, bool requires_grad = false);
    static Tensor random_uniform(Shape shape, Rng& rng, double lo, double hi,
                                 bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t size() const;
    std::size_t ndim() const;
    bool requires_grad() const;

    std::span<const double> values() const;
    /// Write access; only valid on leaf tensors (no recorded inputs).
    std::vector<double>& mutable_values();
    double operator[](std::size_t flat_index) const;
    /// Value of a single-element tensor.
    double item() const;

    /// Accumulated adjoint; empty until backward() has reached this tensor.
    std::span<const double> grad() const;
    bool has_grad() const;
    void zero_grad();

    /// Detached copy of the values as a fresh untracked leaf.
    Tensor detach() const;

    detail::Node* node() const { return node_.get(); }

private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op_result(Shape shape, std::vector<double> values,
                                 std::vector<Tensor> inputs,
                                 std::function<void(detail::Node&)> backprop);
};

namespace detail {
struct Node {
    Shape shape;
    std::vector<double> values;
    bool requires_grad = false;
    std::vector<double> grad;
    // tape record: inputs + adjoint rule; cleared after backward()
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void accumulate_grad(const std::vector<double>& g);
    std::vector<double>& grad_buffer();
};
}  // namespace detail

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);
Tensor scalar_sub(double s, const Tensor& a);   // s - a
Tensor scalar_div(double s, const Tensor& a);   // s / a
Tensor neg(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return scalar_sub(s, a); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator/(const Tensor& a, double s) { return mul_scalar(a, 1.0 / s); }
inline Tensor operator/(double s, const Tensor& a) { return scalar_div(s, a); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- special-function maps -------------------------------------------------

/// Elementwise ln Gamma; adjoint multiplies by digamma. Entries must be > 0.
Tensor lgamma_map(const Tensor& a);
/// Elementwise digamma; adjoint multiplies by trigamma. Entries must be > 0.
Tensor digamma_map(const Tensor& a);

// ---- structural ops (images are [c, h, w]) ---------------------------------

/// Cross-correlation (no kernel flip): input [c_in, h, w], weights
/// [c_out, c_in, k, k] with odd k, bias [c_out]. Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias,
              std::size_t stride, std::size_t padding);

/// 2x2 average pooling; spatial dims must be even.
Tensor avg_pool2(const Tensor& input);

/// Nearest-neighbour upsampling by an integer factor.
Tensor nearest_upsample(const Tensor& input, std::size_t factor);

/// Concatenate along the channel axis; spatial dims must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Channels [first, first+count) of a [c, h, w] tensor.
Tensor slice_channels(const Tensor& input, std::size_t first, std::size_t count);

/// Mirror padding (edge not repeated); pad must be < min(h, w).
Tensor reflect_pad2d(const Tensor& input, std::size_t pad);

/// Direct downsampling: keeps the upper-left pixel of each s x s block.
/// Spatial dims must be divisible by s.
Tensor subsample2d(const Tensor& input, std::size_t s);

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// ---- autodiff --------------------------------------------------------------

/// Reverse-mode pass from a scalar loss. Visits the recorded operations in
/// reverse topological order, accumulates adjoints into every tracked tensor
/// reachable from the loss (a tensor used k times receives k contributions),
/// then clears the tape.
void backward(const Tensor& loss);

/// Throws NumericError naming the first non-finite entry, if any.
void check_finite(const Tensor& t, const std::string& what);

}  // namespace virnet
