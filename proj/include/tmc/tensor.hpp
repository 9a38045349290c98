#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
// Single-threaded: a graph is confined to one thread; tensor values are
// immutable once they participate in a graph.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace tmc {

// Numerical guards, recorded once so losses are reproducible.
inline constexpr double kProbEps = 1e-7;    // probability clamp before any log
inline constexpr double kCosineEps = 1e-8;  // cosine-similarity denominator guard

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // sized lazily by backward()
    bool requires_grad = false;
    bool needs_grad = false;  // requires_grad, or derived from a node that does
    bool backward_done = false;
    const char* op = "leaf";
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
};

// Grad-mode switch. While disabled, ops produce constant nodes that do not
// retain their parents, so intermediates are freed as soon as handles drop.
inline bool& grad_enabled() {
    thread_local bool enabled = true;
    return enabled;
}

}  // namespace detail

struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_enabled()) { detail::grad_enabled() = false; }
    ~NoGradGuard() { detail::grad_enabled() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Collects row-sum deviations of every softmax the forward pass computes.
// Used by tests to assert the attention-normalization invariant.
struct SoftmaxAudit {
    bool enabled = false;
    double max_row_dev = 0.0;
    int64_t rows_seen = 0;

    static SoftmaxAudit& instance() {
        thread_local SoftmaxAudit a;
        return a;
    }
    void reset() {
        max_row_dev = 0.0;
        rows_seen = 0;
    }
    void record(double row_sum) {
        max_row_dev = std::max(max_row_dev, std::fabs(row_sum - 1.0));
        ++rows_seen;
    }
};

class Tensor {
  public:
    Tensor() = default;

    static Tensor from(Shape shape, std::vector<double> data) {
        check_shape(shape);
        if (shape_numel(shape) != static_cast<int64_t>(data.size()))
            throw std::invalid_argument("shape error: " + shape_str(shape) + " does not hold " +
                                        std::to_string(data.size()) + " values");
        auto n = std::make_shared<detail::Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        return Tensor(std::move(n));
    }
    static Tensor zeros(Shape shape) { return full(std::move(shape), 0.0); }
    static Tensor full(Shape shape, double v) {
        check_shape(shape);
        auto n = std::make_shared<detail::Node>();
        n->value.assign(static_cast<size_t>(shape_numel(shape)), v);
        n->shape = std::move(shape);
        return Tensor(std::move(n));
    }
    static Tensor scalar(double v) { return full({1, 1}, v); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node()->shape; }
    int64_t numel() const { return node()->numel(); }
    int dim(int i) const { return node()->shape.at(static_cast<size_t>(i)); }
    const std::vector<double>& values() const { return node()->value; }
    double value_at(int64_t i) const { return node()->value.at(static_cast<size_t>(i)); }
    double item() const {
        if (numel() != 1) throw std::invalid_argument("rank error: item() on non-scalar tensor");
        return node()->value[0];
    }
    const char* op_name() const { return node()->op; }

    // Leaf mutation is the optimizer/grad-check entry point; tensors created
    // by ops are immutable.
    std::vector<double>& mutable_values() {
        if (!node()->parents.empty())
            throw std::logic_error("in-place mutation of a tensor produced by an op");
        return node()->value;
    }

    Tensor& set_requires_grad(bool rg = true) {
        node()->requires_grad = rg;
        node()->needs_grad = rg;
        return *this;
    }
    bool requires_grad() const { return node()->requires_grad; }
    bool needs_grad() const { return node()->needs_grad; }

    bool has_grad() const { return !node()->grad.empty(); }
    const std::vector<double>& grad() const {
        if (!has_grad()) throw std::logic_error("grad not populated; call backward() first");
        return node()->grad;
    }
    void clear_grad() { node()->grad.clear(); }

    void backward() const;

    detail::NodePtr node_ptr() const { return node_; }

  private:
    explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}
    detail::Node* node() const {
        if (!node_) throw std::logic_error("use of undefined tensor");
        return node_.get();
    }
    static void check_shape(const Shape& s) {
        if (s.empty()) throw std::invalid_argument("shape error: empty shape");
        for (int d : s)
            if (d <= 0)
                throw std::invalid_argument("shape error: non-positive extent in " + shape_str(s));
    }

    friend Tensor make_op(const char* name, Shape shape, std::vector<double> value,
                          std::vector<Tensor> parents, std::function<void(detail::Node&)> bw);
    detail::NodePtr node_;
};

// Every op funnels through here. When grad mode is off (or no parent needs a
// gradient) the result is a detached constant and the inputs are not retained.
inline Tensor make_op(const char* name, Shape shape, std::vector<double> value,
                      std::vector<Tensor> parents, std::function<void(detail::Node&)> bw) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = name;
    bool track = detail::grad_enabled();
    bool needs = false;
    if (track) {
        for (const auto& p : parents) needs = needs || p.node_ptr()->needs_grad;
    }
    if (track && needs) {
        n->needs_grad = true;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node_ptr());
        n->backward_fn = std::move(bw);
    }
    return Tensor(std::move(n));
}

namespace detail {

inline std::vector<Node*> topo_order(Node* root) {
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // Iterative DFS; the stack entry carries the next parent index to visit.
    std::vector<std::pair<Node*, size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    return order;
}

}  // namespace detail

inline void Tensor::backward() const {
    detail::Node* root = node();
    if (root->numel() != 1)
        throw std::invalid_argument("rank error: backward() needs a scalar loss, got " +
                                    shape_str(root->shape));
    if (root->backward_done)
        throw std::logic_error("backward() called twice on the same loss without reset");
    root->backward_done = true;

    std::vector<detail::Node*> order = detail::topo_order(root);
    for (detail::Node* n : order)
        if (n->needs_grad || n->requires_grad) n->grad.assign(n->value.size(), 0.0);
    if (root->grad.empty()) root->grad.assign(1, 0.0);
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->backward_fn && n->needs_grad) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// elementwise / binary ops
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_scalar_like(const Tensor& t) { return t.numel() == 1; }

inline void check_binary_shapes(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape() || is_scalar_like(a) || is_scalar_like(b)) return;
    throw std::invalid_argument(std::string("shape error: ") + op + " on " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()) +
                                " (only full-shape or scalar broadcast)");
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_binary_shapes("add", a, b);
    bool as = detail::is_scalar_like(a), bs = detail::is_scalar_like(b);
    const Shape& shape = as && !bs ? b.shape() : a.shape();
    int64_t n = shape_numel(shape);
    std::vector<double> out(static_cast<size_t>(n));
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int64_t i = 0; i < n; ++i) out[i] = av[as ? 0 : i] + bv[bs ? 0 : i];
    return make_op("add", shape, std::move(out), {a, b}, [as, bs, n](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.needs_grad)
            for (int64_t i = 0; i < n; ++i) pa.grad[as ? 0 : i] += self.grad[i];
        if (pb.needs_grad)
            for (int64_t i = 0; i < n; ++i) pb.grad[bs ? 0 : i] += self.grad[i];
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_binary_shapes("mul", a, b);
    bool as = detail::is_scalar_like(a), bs = detail::is_scalar_like(b);
    const Shape& shape = as && !bs ? b.shape() : a.shape();
    int64_t n = shape_numel(shape);
    std::vector<double> out(static_cast<size_t>(n));
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int64_t i = 0; i < n; ++i) out[i] = av[as ? 0 : i] * bv[bs ? 0 : i];
    return make_op("mul", shape, std::move(out), {a, b}, [as, bs, n](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.needs_grad)
            for (int64_t i = 0; i < n; ++i)
                pa.grad[as ? 0 : i] += self.grad[i] * pb.value[bs ? 0 : i];
        if (pb.needs_grad)
            for (int64_t i = 0; i < n; ++i)
                pb.grad[bs ? 0 : i] += self.grad[i] * pa.value[as ? 0 : i];
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_binary_shapes("sub", a, b);
    bool as = detail::is_scalar_like(a), bs = detail::is_scalar_like(b);
    const Shape& shape = as && !bs ? b.shape() : a.shape();
    int64_t n = shape_numel(shape);
    std::vector<double> out(static_cast<size_t>(n));
    const auto& av = a.values();
    const auto& bv = b.values();
    for (int64_t i = 0; i < n; ++i) out[i] = av[as ? 0 : i] - bv[bs ? 0 : i];
    return make_op("sub", shape, std::move(out), {a, b}, [as, bs, n](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        if (pa.needs_grad)
            for (int64_t i = 0; i < n; ++i) pa.grad[as ? 0 : i] += self.grad[i];
        if (pb.needs_grad)
            for (int64_t i = 0; i < n; ++i) pb.grad[bs ? 0 : i] -= self.grad[i];
    });
}

inline Tensor scale(const Tensor& a, double c) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[i] = c * a.values()[i];
    return make_op("scale", a.shape(), std::move(out), {a}, [c, n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int64_t i = 0; i < n; ++i) p.grad[i] += c * self.grad[i];
    });
}

inline Tensor add_scalar(const Tensor& a, double c) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[i] = a.values()[i] + c;
    return make_op("add_scalar", a.shape(), std::move(out), {a}, [n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int64_t i = 0; i < n; ++i) p.grad[i] += self.grad[i];
    });
}

inline Tensor sigmoid(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double x = a.values()[i];
        // Evaluate on the negative-exponent side for stability.
        out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return make_op("sigmoid", a.shape(), std::move(out), {a}, [n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int64_t i = 0; i < n; ++i) {
            double s = self.value[i];
            p.grad[i] += self.grad[i] * s * (1.0 - s);
        }
    });
}

inline Tensor relu(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
    return make_op("relu", a.shape(), std::move(out), {a}, [n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int64_t i = 0; i < n; ++i)
            if (p.value[i] > 0.0) p.grad[i] += self.grad[i];
    });
}

inline Tensor log(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        double x = a.values()[i];
        if (!(x > 0.0))
            throw std::domain_error("domain error: log of non-positive value " +
                                    std::to_string(x) + " at index " + std::to_string(i));
        out[i] = std::log(x);
    }
    return make_op("log", a.shape(), std::move(out), {a}, [n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int64_t i = 0; i < n; ++i) p.grad[i] += self.grad[i] / p.value[i];
    });
}

inline Tensor exp(const Tensor& a) {
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[i] = std::exp(a.values()[i]);
    return make_op("exp", a.shape(), std::move(out), {a}, [n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int64_t i = 0; i < n; ++i) p.grad[i] += self.grad[i] * self.value[i];
    });
}

// Gradient passes through wherever the input is inside [lo, hi].
inline Tensor clamp(const Tensor& a, double lo, double hi) {
    if (!(lo <= hi)) throw std::invalid_argument("clamp: lo > hi");
    int64_t n = a.numel();
    std::vector<double> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[i] = std::min(std::max(a.values()[i], lo), hi);
    return make_op("clamp", a.shape(), std::move(out), {a}, [lo, hi, n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int64_t i = 0; i < n; ++i)
            if (p.value[i] >= lo && p.value[i] <= hi) p.grad[i] += self.grad[i];
    });
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

namespace detail {
inline void require_2d(const char* op, const Tensor& t) {
    if (t.shape().size() != 2)
        throw std::invalid_argument(std::string("rank error: ") + op + " needs a 2-d tensor, got " +
                                    shape_str(t.shape()));
}
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require_2d("matmul", a);
    detail::require_2d("matmul", b);
    int m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2)
        throw std::invalid_argument("dimension error: matmul " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
    const double* av = a.values().data();
    const double* bv = b.values().data();
    for (int i = 0; i < m; ++i) {
        for (int t = 0; t < k; ++t) {
            double ait = av[i * k + t];
            if (ait == 0.0) continue;
            const double* brow = bv + static_cast<size_t>(t) * n;
            double* orow = out.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) orow[j] += ait * brow[j];
        }
    }
    return make_op("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node& self) {
        auto& pa = *self.parents[0];
        auto& pb = *self.parents[1];
        const double* g = self.grad.data();
        if (pa.needs_grad) {
            // dA = dC . B^T
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    double gij = g[i * n + j];
                    if (gij == 0.0) continue;
                    const double* brow = pb.value.data() + static_cast<size_t>(0);
                    for (int t = 0; t < k; ++t) pa.grad[i * k + t] += gij * brow[t * n + j];
                }
        }
        if (pb.needs_grad) {
            // dB = A^T . dC
            for (int i = 0; i < m; ++i)
                for (int t = 0; t < k; ++t) {
                    double ait = pa.value[i * k + t];
                    if (ait == 0.0) continue;
                    for (int j = 0; j < n; ++j) pb.grad[t * n + j] += ait * g[i * n + j];
                }
        }
    });
}

inline Tensor transpose2d(const Tensor& a) {
    detail::require_2d("transpose2d", a);
    int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(static_cast<size_t>(m) * n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = a.values()[i * n + j];
    return make_op("transpose2d", {n, m}, std::move(out), {a}, [m, n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j)
                p.grad[static_cast<size_t>(i) * n + j] += self.grad[static_cast<size_t>(j) * m + i];
    });
}

// Adds a [1 x d] row vector to every row of X.
inline Tensor add_rowvec(const Tensor& x, const Tensor& row) {
    detail::require_2d("add_rowvec", x);
    detail::require_2d("add_rowvec", row);
    int n = x.dim(0), d = x.dim(1);
    if (row.dim(0) != 1 || row.dim(1) != d)
        throw std::invalid_argument("shape error: add_rowvec " + shape_str(x.shape()) + " + " +
                                    shape_str(row.shape()));
    std::vector<double> out(static_cast<size_t>(n) * d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[i * d + j] = x.values()[i * d + j] + row.values()[j];
    return make_op("add_rowvec", x.shape(), std::move(out), {x, row}, [n, d](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pr = *self.parents[1];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) {
                double g = self.grad[i * d + j];
                if (px.needs_grad) px.grad[i * d + j] += g;
                if (pr.needs_grad) pr.grad[j] += g;
            }
    });
}

namespace detail {
inline void softmax_backward_rows(Node& self, int r, int c) {
    auto& p = *self.parents[0];
    if (!p.needs_grad) return;
    for (int i = 0; i < r; ++i) {
        const double* s = self.value.data() + static_cast<size_t>(i) * c;
        const double* g = self.grad.data() + static_cast<size_t>(i) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += g[j] * s[j];
        double* dp = p.grad.data() + static_cast<size_t>(i) * c;
        for (int j = 0; j < c; ++j) dp[j] += s[j] * (g[j] - dot);
    }
}
}  // namespace detail

// Row-wise softmax with max subtraction.
inline Tensor softmax_rows(const Tensor& a) {
    detail::require_2d("softmax_rows", a);
    int r = a.dim(0), c = a.dim(1);
    std::vector<double> out(static_cast<size_t>(r) * c);
    for (int i = 0; i < r; ++i) {
        const double* in = a.values().data() + static_cast<size_t>(i) * c;
        double* o = out.data() + static_cast<size_t>(i) * c;
        double mx = in[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        double inv = 1.0 / sum;
        double chk = 0.0;
        for (int j = 0; j < c; ++j) {
            o[j] *= inv;
            chk += o[j];
        }
        if (SoftmaxAudit::instance().enabled) SoftmaxAudit::instance().record(chk);
    }
    return make_op("softmax_rows", a.shape(), std::move(out), {a},
                   [r, c](detail::Node& self) { detail::softmax_backward_rows(self, r, c); });
}

// Softmax over the unmasked key columns only; masked columns get probability
// exactly 0 (equivalent to -inf logits). Every row needs >= 1 unmasked key.
inline Tensor softmax_rows_masked(const Tensor& a, const std::vector<uint8_t>& key_mask) {
    detail::require_2d("softmax_rows_masked", a);
    int r = a.dim(0), c = a.dim(1);
    if (static_cast<int>(key_mask.size()) != c)
        throw std::invalid_argument("shape error: key mask length " +
                                    std::to_string(key_mask.size()) + " vs " + std::to_string(c) +
                                    " columns");
    if (std::find(key_mask.begin(), key_mask.end(), uint8_t{1}) == key_mask.end())
        throw std::invalid_argument("mask error: all keys masked");
    std::vector<double> out(static_cast<size_t>(r) * c, 0.0);
    for (int i = 0; i < r; ++i) {
        const double* in = a.values().data() + static_cast<size_t>(i) * c;
        double* o = out.data() + static_cast<size_t>(i) * c;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < c; ++j)
            if (key_mask[j]) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j)
            if (key_mask[j]) {
                o[j] = std::exp(in[j] - mx);
                sum += o[j];
            }
        double inv = 1.0 / sum;
        double chk = 0.0;
        for (int j = 0; j < c; ++j) {
            o[j] *= inv;
            chk += o[j];
        }
        if (SoftmaxAudit::instance().enabled) SoftmaxAudit::instance().record(chk);
    }
    return make_op("softmax_rows_masked", a.shape(), std::move(out), {a},
                   [r, c](detail::Node& self) {
                       // masked entries have s=0, so the dense formula is exact
                       detail::softmax_backward_rows(self, r, c);
                   });
}

// Layer normalization over the feature (column) dimension of each row, with
// learnable per-column scale gamma and shift beta.
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                              double eps = 1e-5) {
    detail::require_2d("layer_norm_rows", x);
    int n = x.dim(0), d = x.dim(1);
    if (gamma.shape() != Shape{1, d} || beta.shape() != Shape{1, d})
        throw std::invalid_argument("shape error: layer_norm_rows scale/shift must be [1x" +
                                    std::to_string(d) + "]");
    std::vector<double> out(static_cast<size_t>(n) * d);
    std::vector<double> xhat(static_cast<size_t>(n) * d);
    std::vector<double> rstd(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double* in = x.values().data() + static_cast<size_t>(i) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += in[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            double t = in[j] - mean;
            var += t * t;
        }
        var /= d;
        double rs = 1.0 / std::sqrt(var + eps);
        rstd[i] = rs;
        for (int j = 0; j < d; ++j) {
            double xh = (in[j] - mean) * rs;
            xhat[i * d + j] = xh;
            out[i * d + j] = gamma.values()[j] * xh + beta.values()[j];
        }
    }
    return make_op("layer_norm_rows", x.shape(), std::move(out), {x, gamma, beta},
                   [n, d, xhat = std::move(xhat), rstd = std::move(rstd)](detail::Node& self) {
                       auto& px = *self.parents[0];
                       auto& pg = *self.parents[1];
                       auto& pb = *self.parents[2];
                       for (int i = 0; i < n; ++i) {
                           const double* g = self.grad.data() + static_cast<size_t>(i) * d;
                           const double* xh = xhat.data() + static_cast<size_t>(i) * d;
                           if (pg.needs_grad || pb.needs_grad) {
                               for (int j = 0; j < d; ++j) {
                                   if (pg.needs_grad) pg.grad[j] += g[j] * xh[j];
                                   if (pb.needs_grad) pb.grad[j] += g[j];
                               }
                           }
                           if (!px.needs_grad) continue;
                           double m1 = 0.0, m2 = 0.0;
                           for (int j = 0; j < d; ++j) {
                               double gy = g[j] * pg.value[j];
                               m1 += gy;
                               m2 += gy * xh[j];
                           }
                           m1 /= d;
                           m2 /= d;
                           for (int j = 0; j < d; ++j) {
                               double gy = g[j] * pg.value[j];
                               px.grad[i * d + j] += rstd[i] * (gy - m1 - xh[j] * m2);
                           }
                       }
                   });
}

// ---------------------------------------------------------------------------
// reductions, slicing, gathering
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    int64_t n = a.numel();
    return make_op("sum_all", {1, 1}, {s}, {a}, [n](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int64_t i = 0; i < n; ++i) p.grad[i] += self.grad[0];
    });
}

inline Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    int64_t n = a.numel();
    return make_op("mean_all", {1, 1}, {s / static_cast<double>(n)}, {a},
                   [n](detail::Node& self) {
                       auto& p = *self.parents[0];
                       if (!p.needs_grad) return;
                       double g = self.grad[0] / static_cast<double>(n);
                       for (int64_t i = 0; i < n; ++i) p.grad[i] += g;
                   });
}

// Column means of an [N x D] matrix -> [1 x D].
inline Tensor global_avg_pool(const Tensor& x) {
    detail::require_2d("global_avg_pool", x);
    int n = x.dim(0), d = x.dim(1);
    if (n < 1) throw std::invalid_argument("empty-input error: global_avg_pool over 0 rows");
    std::vector<double> out(static_cast<size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out[j] += x.values()[i * d + j];
    for (int j = 0; j < d; ++j) out[j] /= n;
    return make_op("global_avg_pool", {1, d}, std::move(out), {x}, [n, d](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < d; ++j) p.grad[i * d + j] += self.grad[j] / n;
    });
}

inline Tensor slice_rows(const Tensor& x, int r0, int r1) {
    detail::require_2d("slice_rows", x);
    int n = x.dim(0), d = x.dim(1);
    if (r0 < 0 || r1 > n || r0 >= r1)
        throw std::invalid_argument("shape error: slice_rows [" + std::to_string(r0) + "," +
                                    std::to_string(r1) + ") of " + shape_str(x.shape()));
    int rows = r1 - r0;
    std::vector<double> out(x.values().begin() + static_cast<size_t>(r0) * d,
                            x.values().begin() + static_cast<size_t>(r1) * d);
    return make_op("slice_rows", {rows, d}, std::move(out), {x},
                   [r0, rows, d](detail::Node& self) {
                       auto& p = *self.parents[0];
                       if (!p.needs_grad) return;
                       for (int i = 0; i < rows; ++i)
                           for (int j = 0; j < d; ++j)
                               p.grad[(r0 + i) * d + j] += self.grad[i * d + j];
                   });
}

inline Tensor slice_cols(const Tensor& x, int c0, int c1) {
    detail::require_2d("slice_cols", x);
    int n = x.dim(0), d = x.dim(1);
    if (c0 < 0 || c1 > d || c0 >= c1)
        throw std::invalid_argument("shape error: slice_cols [" + std::to_string(c0) + "," +
                                    std::to_string(c1) + ") of " + shape_str(x.shape()));
    int cols = c1 - c0;
    std::vector<double> out(static_cast<size_t>(n) * cols);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < cols; ++j) out[i * cols + j] = x.values()[i * d + c0 + j];
    return make_op("slice_cols", {n, cols}, std::move(out), {x},
                   [n, d, c0, cols](detail::Node& self) {
                       auto& p = *self.parents[0];
                       if (!p.needs_grad) return;
                       for (int i = 0; i < n; ++i)
                           for (int j = 0; j < cols; ++j)
                               p.grad[i * d + c0 + j] += self.grad[i * cols + j];
                   });
}

// Horizontal concatenation of [N x C_p] blocks.
inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("empty-input error: concat_cols of nothing");
    int n = parts[0].dim(0);
    int total = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
        detail::require_2d("concat_cols", parts[p]);
        if (parts[p].dim(0) != n)
            throw std::invalid_argument("shape error: concat_cols part " + std::to_string(p) +
                                        " has " + std::to_string(parts[p].dim(0)) + " rows, want " +
                                        std::to_string(n));
        total += parts[p].dim(1);
    }
    std::vector<double> out(static_cast<size_t>(n) * total);
    std::vector<int> widths;
    int off = 0;
    for (const auto& part : parts) {
        int c = part.dim(1);
        widths.push_back(c);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) out[i * total + off + j] = part.values()[i * c + j];
        off += c;
    }
    return make_op("concat_cols", {n, total}, std::move(out), parts,
                   [n, total, widths = std::move(widths)](detail::Node& self) {
                       int off = 0;
                       for (size_t p = 0; p < self.parents.size(); ++p) {
                           auto& par = *self.parents[p];
                           int c = widths[p];
                           if (par.needs_grad)
                               for (int i = 0; i < n; ++i)
                                   for (int j = 0; j < c; ++j)
                                       par.grad[i * c + j] += self.grad[i * total + off + j];
                           off += c;
                       }
                   });
}

// Row gather from an embedding table; ids are not differentiable.
inline Tensor embed_rows(const Tensor& table, const std::vector<int>& ids) {
    detail::require_2d("embed_rows", table);
    int v = table.dim(0), d = table.dim(1);
    int t = static_cast<int>(ids.size());
    std::vector<double> out(static_cast<size_t>(t) * d);
    for (int i = 0; i < t; ++i) {
        int id = ids[i];
        if (id < 0 || id >= v)
            throw std::out_of_range("vocabulary error: token id " + std::to_string(id) +
                                    " outside table of " + std::to_string(v) + " rows");
        for (int j = 0; j < d; ++j) out[i * d + j] = table.values()[id * d + j];
    }
    return make_op("embed_rows", {t, d}, std::move(out), {table}, [ids, d](detail::Node& self) {
        auto& p = *self.parents[0];
        if (!p.needs_grad) return;
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < d; ++j) p.grad[ids[i] * d + j] += self.grad[i * d + j];
    });
}

// Cosine similarity of two [1 x D] vectors with an epsilon-guarded
// denominator. When the guard trips (|a||b| < eps) the result degrades to
// dot/eps and `guarded`, when given, is set.
inline Tensor cosine_sim(const Tensor& a, const Tensor& b, double eps = 1e-8,
                         bool* guarded = nullptr) {
    detail::require_2d("cosine_sim", a);
    detail::require_2d("cosine_sim", b);
    if (a.shape() != b.shape() || a.dim(0) != 1)
        throw std::invalid_argument("shape error: cosine_sim needs two [1xD] tensors, got " +
                                    shape_str(a.shape()) + " and " + shape_str(b.shape()));
    int d = a.dim(1);
    double dot = 0.0, na2 = 0.0, nb2 = 0.0;
    for (int j = 0; j < d; ++j) {
        dot += a.values()[j] * b.values()[j];
        na2 += a.values()[j] * a.values()[j];
        nb2 += b.values()[j] * b.values()[j];
    }
    double na = std::sqrt(na2), nb = std::sqrt(nb2);
    bool guard = na * nb < eps;
    if (guarded) *guarded = guard;
    double denom = guard ? eps : na * nb;
    double s = dot / denom;
    return make_op("cosine_sim", {1, 1}, {s}, {a, b},
                   [d, na, nb, eps, guard, s](detail::Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       double g = self.grad[0];
                       for (int j = 0; j < d; ++j) {
                           double av = pa.value[j], bv = pb.value[j];
                           if (guard) {
                               if (pa.needs_grad) pa.grad[j] += g * bv / eps;
                               if (pb.needs_grad) pb.grad[j] += g * av / eps;
                           } else {
                               if (pa.needs_grad)
                                   pa.grad[j] += g * (bv / (na * nb) - s * av / (na * na));
                               if (pb.needs_grad)
                                   pb.grad[j] += g * (av / (na * nb) - s * bv / (nb * nb));
                           }
                       }
                   });
}

// ---------------------------------------------------------------------------
// debug dump: "shape: d0 d1 ..." header then whitespace-separated values
// ---------------------------------------------------------------------------

inline void dump_tensor(std::ostream& os, const Tensor& t) {
    os << "shape:";
    for (int d : t.shape()) os << ' ' << d;
    os << '\n';
    char buf[32];
    for (int64_t i = 0; i < t.numel(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", t.values()[i]);
        os << buf << (i + 1 == t.numel() ? '\n' : ' ');
    }
}

}  // namespace tmc
