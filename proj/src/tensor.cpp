#include "virnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "virnet/errors.hpp"
#include "virnet/specfun.hpp"

namespace virnet {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace detail {

void Node::accumulate_grad(const std::vector<double>& g) {
    auto& buf = grad_buffer();
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

std::vector<double>& Node::grad_buffer() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    return grad;
}

}  // namespace detail

using detail::Node;

namespace {

std::shared_ptr<Node> make_leaf(Shape shape, std::vector<double> values,
                                bool requires_grad) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    node->requires_grad = requires_grad;
    return node;
}

void require_defined(const Tensor& t, const char* op) {
    if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()) + " differ");
    }
}

}  // namespace

Tensor make_op_result(Shape shape, std::vector<double> values,
                      std::vector<Tensor> inputs,
                      std::function<void(Node&)> backprop) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->values = std::move(values);
    bool track = false;
    for (const auto& in : inputs) track = track || in.requires_grad();
    node->requires_grad = track;
    if (track) {
        node->parents.reserve(inputs.size());
        for (const auto& in : inputs) node->parents.push_back(in.node_);
        node->backprop = std::move(backprop);
    }
    return Tensor(std::move(node));
}

// ---- Tensor basics ---------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::size_t n = shape_size(shape);
    return Tensor(make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_size(shape) != values.size()) {
        throw ShapeError("from_data: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
    }
    return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value) {
    return Tensor(make_leaf({}, {value}, false));
}

Tensor Tensor::random_normal(Shape shape, Rng& rng, bool requires_grad) {
    std::size_t n = shape_size(shape);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.normal();
    return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::random_uniform(Shape shape, Rng& rng, double lo, double hi,
                              bool requires_grad) {
    std::size_t n = shape_size(shape);
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return Tensor(make_leaf(std::move(shape), std::move(v), requires_grad));
}

const Shape& Tensor::shape() const {
    require_defined(*this, "shape");
    return node_->shape;
}

std::size_t Tensor::size() const {
    require_defined(*this, "size");
    return node_->values.size();
}

std::size_t Tensor::ndim() const { return shape().size(); }

bool Tensor::requires_grad() const {
    return node_ && node_->requires_grad;
}

std::span<const double> Tensor::values() const {
    require_defined(*this, "values");
    return node_->values;
}

std::vector<double>& Tensor::mutable_values() {
    require_defined(*this, "mutable_values");
    if (node_->backprop) {
        throw ContractError("mutable_values: tensor is an op result, not a leaf");
    }
    return node_->values;
}

double Tensor::operator[](std::size_t flat_index) const {
    return values()[flat_index];
}

double Tensor::item() const {
    if (size() != 1) {
        throw ContractError("item: tensor has " + std::to_string(size()) + " elements");
    }
    return node_->values[0];
}

std::span<const double> Tensor::grad() const {
    require_defined(*this, "grad");
    return node_->grad;
}

bool Tensor::has_grad() const {
    return node_ && !node_->grad.empty() && node_->grad.size() == node_->values.size();
}

void Tensor::zero_grad() {
    require_defined(*this, "zero_grad");
    node_->grad.clear();
}

Tensor Tensor::detach() const {
    require_defined(*this, "detach");
    return Tensor(make_leaf(node_->shape, node_->values, false));
}

// ---- elementwise helpers ---------------------------------------------------

namespace {

template <class Fwd>
Tensor unary_op(const Tensor& a, const char* name, Fwd fwd,
                std::function<double(double /*x*/, double /*y*/)> dydx) {
    require_defined(a, name);
    auto av = a.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i], i);
    Tensor an = a;
    return make_op_result(
        a.shape(), std::move(out), {a}, [an, dydx](Node& self) {
            if (!an.requires_grad()) return;
            auto& g = an.node()->grad_buffer();
            auto x = an.values();
            const auto& y = self.values;
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] += self.grad[i] * dydx(x[i], y[i]);
            }
        });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_defined(a, "add");
    require_defined(b, "add");
    require_same_shape(a, b, "add");
    auto av = a.values(), bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    Tensor an = a, bn = b;
    return make_op_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an.requires_grad()) an.node()->accumulate_grad(self.grad);
        if (bn.requires_grad()) bn.node()->accumulate_grad(self.grad);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_defined(a, "sub");
    require_defined(b, "sub");
    require_same_shape(a, b, "sub");
    auto av = a.values(), bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    Tensor an = a, bn = b;
    return make_op_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an.requires_grad()) an.node()->accumulate_grad(self.grad);
        if (bn.requires_grad()) {
            auto& g = bn.node()->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_defined(a, "mul");
    require_defined(b, "mul");
    require_same_shape(a, b, "mul");
    auto av = a.values(), bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    Tensor an = a, bn = b;
    return make_op_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        if (an.requires_grad()) {
            auto& g = an.node()->grad_buffer();
            auto x = bn.values();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
        }
        if (bn.requires_grad()) {
            auto& g = bn.node()->grad_buffer();
            auto x = an.values();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
        }
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_defined(a, "div");
    require_defined(b, "div");
    require_same_shape(a, b, "div");
    auto av = a.values(), bv = b.values();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (bv[i] == 0.0) {
            throw DomainError("div: zero denominator at index " + std::to_string(i));
        }
        out[i] = av[i] / bv[i];
    }
    Tensor an = a, bn = b;
    return make_op_result(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
        auto bvals = bn.values();
        if (an.requires_grad()) {
            auto& g = an.node()->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / bvals[i];
        }
        if (bn.requires_grad()) {
            auto& g = bn.node()->grad_buffer();
            const auto& y = self.values;
            for (std::size_t i = 0; i < g.size(); ++i) {
                g[i] -= self.grad[i] * y[i] / bvals[i];
            }
        }
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary_op(a, "add_scalar",
                    [s](double x, std::size_t) { return x + s; },
                    [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    return unary_op(a, "mul_scalar",
                    [s](double x, std::size_t) { return x * s; },
                    [s](double, double) { return s; });
}

Tensor scalar_sub(double s, const Tensor& a) {
    return unary_op(a, "scalar_sub",
                    [s](double x, std::size_t) { return s - x; },
                    [](double, double) { return -1.0; });
}

Tensor scalar_div(double s, const Tensor& a) {
    require_defined(a, "scalar_div");
    auto av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (av[i] == 0.0) {
            throw DomainError("scalar_div: zero denominator at index " + std::to_string(i));
        }
    }
    return unary_op(a, "scalar_div",
                    [s](double x, std::size_t) { return s / x; },
                    [s](double x, double) { return -s / (x * x); });
}

Tensor neg(const Tensor& a) {
    return unary_op(a, "neg",
                    [](double x, std::size_t) { return -x; },
                    [](double, double) { return -1.0; });
}

Tensor log(const Tensor& a) {
    require_defined(a, "log");
    auto av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (!(av[i] > 0.0)) {
            throw DomainError("log: non-positive entry " + std::to_string(av[i]) +
                              " at index " + std::to_string(i));
        }
    }
    return unary_op(a, "log",
                    [](double x, std::size_t) { return std::log(x); },
                    [](double x, double) { return 1.0 / x; });
}

Tensor exp(const Tensor& a) {
    return unary_op(a, "exp",
                    [](double x, std::size_t) { return std::exp(x); },
                    [](double, double y) { return y; });
}

Tensor square(const Tensor& a) {
    return unary_op(a, "square",
                    [](double x, std::size_t) { return x * x; },
                    [](double x, double) { return 2.0 * x; });
}

Tensor sqrt(const Tensor& a) {
    require_defined(a, "sqrt");
    auto av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (!(av[i] >= 0.0)) {
            throw DomainError("sqrt: negative entry at index " + std::to_string(i));
        }
    }
    return unary_op(a, "sqrt",
                    [](double x, std::size_t) { return std::sqrt(x); },
                    [](double, double y) { return 0.5 / y; });
}

namespace {
double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
}  // namespace

Tensor softplus(const Tensor& a) {
    return unary_op(a, "softplus",
                    [](double x, std::size_t) {
                        return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
                    },
                    [](double x, double) { return sigmoid(x); });
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
    return unary_op(a, "leaky_relu",
                    [negative_slope](double x, std::size_t) {
                        return x >= 0.0 ? x : negative_slope * x;
                    },
                    [negative_slope](double x, double) {
                        return x >= 0.0 ? 1.0 : negative_slope;
                    });
}

Tensor lgamma_map(const Tensor& a) {
    require_defined(a, "lgamma_map");
    auto av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (!(av[i] > 0.0)) {
            throw DomainError("lgamma_map: non-positive entry at index " + std::to_string(i));
        }
    }
    return unary_op(a, "lgamma_map",
                    [](double x, std::size_t) { return specfun::lgamma(x); },
                    [](double x, double) { return specfun::digamma(x); });
}

Tensor digamma_map(const Tensor& a) {
    require_defined(a, "digamma_map");
    auto av = a.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (!(av[i] > 0.0)) {
            throw DomainError("digamma_map: non-positive entry at index " + std::to_string(i));
        }
    }
    return unary_op(a, "digamma_map",
                    [](double x, std::size_t) { return specfun::digamma(x); },
                    [](double x, double) { return specfun::trigamma(x); });
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
    require_defined(a, "sum");
    auto av = a.values();
    double s = 0.0;
    for (double x : av) s += x;
    Tensor an = a;
    return make_op_result({}, {s}, {a}, [an](Node& self) {
        if (!an.requires_grad()) return;
        auto& g = an.node()->grad_buffer();
        const double gy = self.grad[0];
        for (auto& v : g) v += gy;
    });
}

Tensor mean(const Tensor& a) {
    require_defined(a, "mean");
    auto av = a.values();
    double s = 0.0;
    for (double x : av) s += x;
    const double inv_n = 1.0 / static_cast<double>(av.size());
    Tensor an = a;
    return make_op_result({}, {s * inv_n}, {a}, [an, inv_n](Node& self) {
        if (!an.requires_grad()) return;
        auto& g = an.node()->grad_buffer();
        const double gy = self.grad[0] * inv_n;
        for (auto& v : g) v += gy;
    });
}

// ---- backward --------------------------------------------------------------

void backward(const Tensor& loss) {
    require_defined(loss, "backward");
    if (loss.size() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " +
                            shape_str(loss.shape()));
    }
    Node* root = loss.node();
    if (!root->requires_grad) {
        throw ContractError("backward: loss does not depend on any tracked tensor");
    }
    if (!root->backprop) {
        throw ContractError("backward: tape is empty (already consumed, or loss is a leaf)");
    }

    // iterative DFS for topological order over grad-requiring nodes
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx].get();
            ++idx;
            if (parent->requires_grad && !visited.count(parent)) {
                visited.insert(parent);
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backprop) {
            node->grad_buffer();  // ensure allocated even if nothing reached it
            node->backprop(*node);
        }
    }
    // clear the tape; leaf gradients stay until zero_grad
    for (Node* node : order) {
        node->backprop = nullptr;
        node->parents.clear();
    }
}

void check_finite(const Tensor& t, const std::string& what) {
    require_defined(t, "check_finite");
    auto v = t.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw NumericError(what + ": non-finite value " + std::to_string(v[i]) +
                               " at index " + std::to_string(i));
        }
    }
}

}  // namespace virnet
