#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "powergrow/special.hpp"
#include "powergrow/util.hpp"

namespace powergrow {

class Tensor;

struct TensorNode {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;  // leaf flag
    bool needs_grad = false;     // leaf flag or depends on a leaf that has it
    std::vector<Tensor> parents;
    std::function<void(TensorNode&)> backward_fn;
    const char* op = "leaf";
};

namespace detail {
inline thread_local bool g_grad_enabled = true;
}

// Disables tape recording in scope; used for sampling and finite differences.
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
    ~NoGradGuard() { detail::g_grad_enabled = prev; }
};

// Dense row-major 2-D tensor handle. Value-semantics handle over a shared
// node; the autodiff graph is the DAG of parent links.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false) {
        auto n = std::make_shared<TensorNode>();
        n->rows = rows;
        n->cols = cols;
        n->data.assign(rows * cols, 0.0);
        n->requires_grad = requires_grad;
        n->needs_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor from_data(std::size_t rows, std::size_t cols, std::vector<double> data,
                            bool requires_grad = false) {
        if (data.size() != rows * cols)
            throw UsageError("Tensor::from_data: data length does not match shape");
        auto n = std::make_shared<TensorNode>();
        n->rows = rows;
        n->cols = cols;
        n->data = std::move(data);
        n->requires_grad = requires_grad;
        n->needs_grad = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor scalar(double v) { return from_data(1, 1, {v}); }

    bool defined() const { return static_cast<bool>(node_); }
    std::size_t rows() const { return node_->rows; }
    std::size_t cols() const { return node_->cols; }
    std::size_t size() const { return node_->data.size(); }
    std::vector<std::size_t> shape() const { return {node_->rows, node_->cols}; }

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& grad() { return node_->grad; }
    const std::vector<double>& grad() const { return node_->grad; }

    double& at(std::size_t i, std::size_t j) { return node_->data[i * node_->cols + j]; }
    double at(std::size_t i, std::size_t j) const { return node_->data[i * node_->cols + j]; }

    double value() const {
        if (size() != 1) throw UsageError("Tensor::value: tensor is not scalar");
        return node_->data[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool needs_grad() const { return node_->needs_grad; }
    void set_requires_grad(bool v) {
        node_->requires_grad = v;
        node_->needs_grad = node_->needs_grad || v;
    }

    TensorNode* node() const { return node_.get(); }

    explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

namespace detail {

inline std::string shape_str(const Tensor& t) {
    std::ostringstream os;
    os << t.rows() << "x" << t.cols();
    return os.str();
}

[[noreturn]] inline void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw UsageError(std::string(op) + ": shape mismatch (" + shape_str(a) + " vs " + shape_str(b) + ")");
}

inline Tensor make_op(const char* op, std::size_t rows, std::size_t cols, std::vector<double> data,
                      std::vector<Tensor> parents, std::function<void(TensorNode&)> backward) {
    auto n = std::make_shared<TensorNode>();
    n->rows = rows;
    n->cols = cols;
    n->data = std::move(data);
    n->op = op;
    bool needs = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) needs = needs || p.needs_grad();
    }
    if (needs) {
        n->needs_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward);
    }
    return Tensor(std::move(n));
}

inline void ensure_grad(TensorNode& n) {
    if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), 0.0);
}

}  // namespace detail

// ---- primitive operations -------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) detail::shape_error("matmul", a, b);
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* po = out.data() + i * n;
        for (std::size_t l = 0; l < k; ++l) {
            const double av = pa[i * k + l];
            if (av == 0.0) continue;
            const double* pbr = pb + l * n;
            for (std::size_t j = 0; j < n; ++j) po[j] += av * pbr[j];
        }
    }
    return detail::make_op("matmul", m, n, std::move(out), {a, b}, [a, b, m, k, n](TensorNode& self) {
        const double* g = self.grad.data();
        if (a.needs_grad()) {
            detail::ensure_grad(*a.node());
            double* ga = a.node()->grad.data();
            const double* pb = b.data().data();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const double gv = g[i * n + j];
                    if (gv == 0.0) continue;
                    for (std::size_t l = 0; l < k; ++l) ga[i * k + l] += gv * pb[l * n + j];
                }
        }
        if (b.needs_grad()) {
            detail::ensure_grad(*b.node());
            double* gb = b.node()->grad.data();
            const double* pa = a.data().data();
            for (std::size_t l = 0; l < k; ++l)
                for (std::size_t i = 0; i < m; ++i) {
                    const double av = pa[i * k + l];
                    if (av == 0.0) continue;
                    for (std::size_t j = 0; j < n; ++j) gb[l * n + j] += av * g[i * n + j];
                }
        }
    });
}

namespace detail {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.data()[i], b.data()[i]);
    return make_op(op, a.rows(), a.cols(), std::move(out), {a, b}, [a, b, bwd](TensorNode& self) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            double da, db;
            bwd(a.data()[i], b.data()[i], &da, &db);
            if (a.needs_grad()) {
                ensure_grad(*a.node());
                a.node()->grad[i] += self.grad[i] * da;
            }
            if (b.needs_grad()) {
                ensure_grad(*b.node());
                b.node()->grad[i] += self.grad[i] * db;
            }
        }
    });
}

template <typename Fwd, typename Bwd>
Tensor unary_elementwise(const char* op, const Tensor& a, Fwd fwd, Bwd bwd) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(a.data()[i]);
    if (!g_grad_enabled || !a.needs_grad())
        return make_op(op, a.rows(), a.cols(), std::move(out), {}, nullptr);
    // The closure must not capture the result tensor itself (that would form
    // a shared_ptr cycle); adjoints that need the output get a copy.
    auto saved = std::make_shared<std::vector<double>>(out);
    return make_op(op, a.rows(), a.cols(), std::move(out), {a}, [a, saved, bwd](TensorNode& self) {
        ensure_grad(*a.node());
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            a.node()->grad[i] += self.grad[i] * bwd(a.data()[i], (*saved)[i]);
    });
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double* da, double* db) {
            *da = 1.0;
            *db = 1.0;
        });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double* da, double* db) {
            *da = 1.0;
            *db = -1.0;
        });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        "multiply", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double* da, double* db) {
            *da = y;
            *db = x;
        });
}

inline Tensor scale(const Tensor& a, double s) {
    return detail::unary_elementwise(
        "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
    return detail::unary_elementwise(
        "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_elementwise(
        "sigmoid", a, [](double x) { return sigmoid(x); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary_elementwise(
        "tanh", a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_elementwise(
        "relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

// Elementwise ln Gamma; adjoint is digamma. Inputs must be positive.
inline Tensor lgamma(const Tensor& a) {
    return detail::unary_elementwise(
        "lgamma", a, [](double x) { return log_gamma(x); },
        [](double x, double) { return digamma(x); });
}

inline Tensor softmax_rows(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = a.data().data() + i * c;
        double mx = row[0];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(row[j] - mx);
            sum += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= sum;
    }
    if (!detail::g_grad_enabled || !a.needs_grad())
        return detail::make_op("softmax_rows", r, c, std::move(out), {}, nullptr);
    auto saved = std::make_shared<std::vector<double>>(out);
    return detail::make_op("softmax_rows", r, c, std::move(out), {a}, [a, saved, r, c](TensorNode& self) {
        detail::ensure_grad(*a.node());
        for (std::size_t i = 0; i < r; ++i) {
            const double* y = saved->data() + i * c;
            const double* g = self.grad.data() + i * c;
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += g[j] * y[j];
            double* ga = a.node()->grad.data() + i * c;
            for (std::size_t j = 0; j < c; ++j) ga[j] += y[j] * (g[j] - dot);
        }
    });
}

// Row-wise layer normalization with learned gain/bias (1 x cols each).
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
    if (gain.rows() != 1 || gain.cols() != x.cols()) detail::shape_error("layer_norm", x, gain);
    if (bias.rows() != 1 || bias.cols() != x.cols()) detail::shape_error("layer_norm", x, bias);
    constexpr double kEps = 1e-5;
    const std::size_t r = x.rows(), c = x.cols();
    std::vector<double> out(x.size());
    auto stats = std::make_shared<std::vector<double>>(2 * r);  // mean, inv_std per row
    for (std::size_t i = 0; i < r; ++i) {
        const double* row = x.data().data() + i * c;
        double mean = 0.0;
        for (std::size_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(c);
        double inv_std = 1.0 / std::sqrt(var + kEps);
        (*stats)[2 * i] = mean;
        (*stats)[2 * i + 1] = inv_std;
        for (std::size_t j = 0; j < c; ++j)
            out[i * c + j] = gain.data()[j] * (row[j] - mean) * inv_std + bias.data()[j];
    }
    return detail::make_op("layer_norm", r, c, std::move(out), {x, gain, bias},
                           [x, gain, bias, stats, r, c](TensorNode& self) {
        for (std::size_t i = 0; i < r; ++i) {
            const double mean = (*stats)[2 * i];
            const double inv_std = (*stats)[2 * i + 1];
            const double* row = x.data().data() + i * c;
            const double* g = self.grad.data() + i * c;
            if (gain.needs_grad()) {
                detail::ensure_grad(*gain.node());
                for (std::size_t j = 0; j < c; ++j)
                    gain.node()->grad[j] += g[j] * (row[j] - mean) * inv_std;
            }
            if (bias.needs_grad()) {
                detail::ensure_grad(*bias.node());
                for (std::size_t j = 0; j < c; ++j) bias.node()->grad[j] += g[j];
            }
            if (x.needs_grad()) {
                detail::ensure_grad(*x.node());
                double sum_gg = 0.0, sum_ggx = 0.0;
                for (std::size_t j = 0; j < c; ++j) {
                    const double gg = g[j] * gain.data()[j];
                    const double xh = (row[j] - mean) * inv_std;
                    sum_gg += gg;
                    sum_ggx += gg * xh;
                }
                const double inv_c = 1.0 / static_cast<double>(c);
                double* gx = x.node()->grad.data() + i * c;
                for (std::size_t j = 0; j < c; ++j) {
                    const double gg = g[j] * gain.data()[j];
                    const double xh = (row[j] - mean) * inv_std;
                    gx[j] += inv_std * (gg - inv_c * sum_gg - xh * inv_c * sum_ggx);
                }
            }
        }
    });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) detail::shape_error("concat", a, b);
    const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
    std::vector<double> out(r * (ca + cb));
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < ca; ++j) out[i * (ca + cb) + j] = a.at(i, j);
        for (std::size_t j = 0; j < cb; ++j) out[i * (ca + cb) + ca + j] = b.at(i, j);
    }
    return detail::make_op("concat", r, ca + cb, std::move(out), {a, b}, [a, b, r, ca, cb](TensorNode& self) {
        const std::size_t c = ca + cb;
        if (a.needs_grad()) {
            detail::ensure_grad(*a.node());
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < ca; ++j) a.node()->grad[i * ca + j] += self.grad[i * c + j];
        }
        if (b.needs_grad()) {
            detail::ensure_grad(*b.node());
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < cb; ++j) b.node()->grad[i * cb + j] += self.grad[i * c + ca + j];
        }
    });
}

inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    if (c0 >= c1 || c1 > a.cols()) throw UsageError("slice: column range out of bounds");
    const std::size_t r = a.rows(), c = c1 - c0, ac = a.cols();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[i * ac + c0 + j];
    return detail::make_op("slice", r, c, std::move(out), {a}, [a, r, c, c0, ac](TensorNode& self) {
        detail::ensure_grad(*a.node());
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) a.node()->grad[i * ac + c0 + j] += self.grad[i * c + j];
    });
}

inline Tensor transpose(const Tensor& a) {
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a.data()[i * c + j];
    return detail::make_op("transpose", c, r, std::move(out), {a}, [a, r, c](TensorNode& self) {
        detail::ensure_grad(*a.node());
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) a.node()->grad[i * c + j] += self.grad[j * r + i];
    });
}

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    return detail::make_op("sum", 1, 1, {s}, {a}, [a](TensorNode& self) {
        detail::ensure_grad(*a.node());
        const double g = self.grad[0];
        for (double& gv : a.node()->grad) gv += g;
    });
}

inline Tensor mean(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    const double inv = 1.0 / static_cast<double>(a.size());
    return detail::make_op("mean", 1, 1, {s * inv}, {a}, [a, inv](TensorNode& self) {
        detail::ensure_grad(*a.node());
        const double g = self.grad[0] * inv;
        for (double& gv : a.node()->grad) gv += g;
    });
}

// Replicates a 1 x c row vector across n rows.
inline Tensor broadcast_rows(const Tensor& v, std::size_t n) {
    if (v.rows() != 1) throw UsageError("broadcast: input must be a 1-row tensor");
    const std::size_t c = v.cols();
    std::vector<double> out(n * c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = v.data()[j];
    return detail::make_op("broadcast", n, c, std::move(out), {v}, [v, n, c](TensorNode& self) {
        detail::ensure_grad(*v.node());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) v.node()->grad[j] += self.grad[i * c + j];
    });
}

// Same storage, new shape; row-major data is untouched.
inline Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
    if (rows * cols != a.size()) throw UsageError("reshape: element count mismatch");
    std::vector<double> out = a.data();
    return detail::make_op("reshape", rows, cols, std::move(out), {a}, [a](TensorNode& self) {
        detail::ensure_grad(*a.node());
        for (std::size_t i = 0; i < self.grad.size(); ++i) a.node()->grad[i] += self.grad[i];
    });
}

// Adds a learned 1x1 scalar to every element.
inline Tensor add_scalar_t(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) throw UsageError("add_scalar_t: bias must be 1x1");
    std::vector<double> out(a.size());
    const double sv = s.data()[0];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + sv;
    return detail::make_op("add_scalar_t", a.rows(), a.cols(), std::move(out), {a, s},
                           [a, s](TensorNode& self) {
        if (a.needs_grad()) {
            detail::ensure_grad(*a.node());
            for (std::size_t i = 0; i < self.grad.size(); ++i) a.node()->grad[i] += self.grad[i];
        }
        if (s.needs_grad()) {
            detail::ensure_grad(*s.node());
            double acc = 0.0;
            for (double g : self.grad) acc += g;
            s.node()->grad[0] += acc;
        }
    });
}

// Detaches a value from the graph.
inline Tensor stop_gradient(const Tensor& a) {
    return Tensor::from_data(a.rows(), a.cols(), a.data());
}

// Squash into (eps, 1-eps): eps + (1-2 eps) * sigmoid(x).
inline Tensor squash_unit(const Tensor& a, double eps = 1e-6) {
    return add_scalar(scale(sigmoid(a), 1.0 - 2.0 * eps), eps);
}

// ---- tape and backward ----------------------------------------------------

// Topologically ordered record of the graph below one root. Every node's
// parents precede it; one backward traversal visits each node exactly once.
class ComputeTape {
public:
    static ComputeTape record(const Tensor& root) {
        ComputeTape tape;
        std::unordered_set<const TensorNode*> seen;
        struct Frame {
            Tensor t;
            std::size_t next_parent = 0;
        };
        std::vector<Frame> stack;
        if (root.defined() && seen.insert(root.node()).second) stack.push_back({root});
        while (!stack.empty()) {
            Frame& f = stack.back();
            const auto& parents = f.t.node()->parents;
            if (f.next_parent < parents.size()) {
                const Tensor& p = parents[f.next_parent++];
                if (seen.insert(p.node()).second) stack.push_back({p});
            } else {
                tape.nodes_.push_back(f.t);
                stack.pop_back();
            }
        }
        return tape;
    }

    // Seeds the root (last node, must be scalar) with gradient 1 and pulls
    // adjoints back through the graph.
    void backward() {
        if (nodes_.empty()) return;
        Tensor& root = nodes_.back();
        if (root.size() != 1) throw UsageError("backward: root must be a scalar");
        detail::ensure_grad(*root.node());
        root.node()->grad[0] += 1.0;
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            TensorNode* n = nodes_[i].node();
            if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
        }
    }

    std::size_t node_count() const { return nodes_.size(); }
    const std::vector<Tensor>& nodes() const { return nodes_; }

private:
    std::vector<Tensor> nodes_;
};

inline void backward(const Tensor& loss) { ComputeTape::record(loss).backward(); }

}  // namespace powergrow
