#pragma once

// Dense double-precision tensors with reverse-mode automatic differentiation.
//
// A Graph is a define-by-run tape: every differentiable op appends one node
// holding the backward closure for that op. Graphs are rebuilt per training
// example; parameter tensors (requires_grad leaves) outlive graphs and their
// grad buffers accumulate across backward calls until zero_grad.
//
// There is no broadcasting. Binary elementwise ops demand equal shapes and
// matmul demands agreeing inner dimensions; anything else is a ShapeError.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "nts/common.hpp"

namespace nts {

namespace detail {

struct TensorStorage {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;   // empty until touched by backward
    bool requires_grad = false; // leaf flag, set at construction
    bool on_tape = false;       // produced by (or feeding) a recorded op
};

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, bool requires_grad = false) {
        for (std::size_t d : shape)
            if (d == 0) throw ShapeError("tensor dimensions must be positive");
        s_ = std::make_shared<detail::TensorStorage>();
        s_->shape = std::move(shape);
        s_->data.assign(detail::shape_numel(s_->shape), 0.0);
        s_->requires_grad = requires_grad;
    }

    static Tensor scalar(double v) {
        Tensor t({1});
        t.s_->data[0] = v;
        return t;
    }

    static Tensor from_vector(std::vector<double> v) {
        Tensor t({v.size()});
        t.s_->data = std::move(v);
        return t;
    }

    static Tensor from_matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        if (v.size() != rows * cols) throw ShapeError("from_matrix: size mismatch");
        Tensor t({rows, cols});
        t.s_->data = std::move(v);
        return t;
    }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.s_->data.begin(), t.s_->data.end(), v);
        return t;
    }

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    bool defined() const { return static_cast<bool>(s_); }
    const std::vector<std::size_t>& shape() const { return s_->shape; }
    std::size_t rank() const { return s_->shape.size(); }
    std::size_t size() const { return s_->data.size(); }
    std::size_t dim(std::size_t i) const { return s_->shape.at(i); }

    std::span<double> data() { return s_->data; }
    std::span<const double> data() const { return s_->data; }

    double& at(std::size_t i) { return s_->data.at(i); }
    double at(std::size_t i) const { return s_->data.at(i); }
    double& at(std::size_t i, std::size_t j) {
        if (rank() != 2) throw ShapeError("at(i,j) requires rank 2");
        return s_->data.at(i * s_->shape[1] + j);
    }
    double at(std::size_t i, std::size_t j) const {
        return const_cast<Tensor*>(this)->at(i, j);
    }

    bool requires_grad() const { return s_->requires_grad; }
    bool on_tape() const { return s_->on_tape; }
    bool wants_grad() const { return s_->requires_grad || s_->on_tape; }

    bool has_grad() const { return !s_->grad.empty(); }
    std::span<double> grad() {
        if (s_->grad.empty()) s_->grad.assign(s_->data.size(), 0.0);
        return s_->grad;
    }
    std::span<const double> grad_view() const { return s_->grad; }
    void zero_grad() { std::fill(s_->grad.begin(), s_->grad.end(), 0.0); }

    bool all_finite() const {
        for (double v : s_->data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_storage(const Tensor& other) const { return s_ == other.s_; }

    // internal: used by Graph when recording ops
    void mark_on_tape() { s_->on_tape = true; }

private:
    std::shared_ptr<detail::TensorStorage> s_;
};

inline bool same_shape(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape();
}

// ----------------------------- graph / tape -----------------------------

class Graph {
public:
    explicit Graph(std::uint64_t seed = 0, bool grad_enabled = true)
        : rng_(splitmix64(seed)), grad_enabled_(grad_enabled) {}

    static Graph inference(std::uint64_t seed = 0) { return Graph(seed, false); }

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return tape_.size(); }
    std::uint64_t draw_seed() { return rng_(); }

    // internal: append a node. `out` is the op result; `fn` propagates
    // out.grad into the inputs' grads.
    void record(const Tensor& out, std::function<void()> fn) {
        out_nonconst(out).mark_on_tape();
        tape_.push_back({out, std::move(fn)});
    }

    bool should_record(std::initializer_list<const Tensor*> inputs) const {
        if (!grad_enabled_) return false;
        for (const Tensor* t : inputs)
            if (t->wants_grad()) return true;
        return false;
    }

    // Reverse sweep. Grads of tape-produced tensors are recomputed from
    // scratch every call; leaf (requires_grad) tensors accumulate across
    // calls until zero_grad.
    void backward(const Tensor& loss) {
        if (!loss.defined() || loss.size() != 1)
            throw InvalidArgument("backward: loss must be a scalar tensor");
        if (!grad_enabled_) throw InvalidArgument("backward: graph recorded without gradients");
        for (auto& node : tape_)
            if (!node.out.requires_grad()) node.out.zero_grad();
        out_nonconst(loss).grad()[0] += 1.0;
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it)
            if (it->out.has_grad()) it->fn();
    }

private:
    struct Node {
        Tensor out;
        std::function<void()> fn;
    };

    static Tensor& out_nonconst(const Tensor& t) { return const_cast<Tensor&>(t); }

    std::vector<Node> tape_;
    std::mt19937_64 rng_;
    bool grad_enabled_;
};

// ----------------------------- ops -----------------------------

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!same_shape(a, b))
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <class Fwd, class Bwd>
Tensor binary_elementwise(Graph& g, const Tensor& a, const Tensor& b, const char* name, Fwd fwd,
                          Bwd bwd) {
    check_same_shape(a, b, name);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = fwd(a.at(i), b.at(i));
    if (g.should_record({&a, &b})) {
        Tensor ca = a, cb = b, co = out;
        g.record(out, [ca, cb, co, bwd]() mutable {
            auto og = co.grad();
            std::span<double> ga = ca.wants_grad() ? ca.grad() : std::span<double>{};
            std::span<double> gb = cb.wants_grad() ? cb.grad() : std::span<double>{};
            for (std::size_t i = 0; i < og.size(); ++i) {
                auto [da, db] = bwd(ca.at(i), cb.at(i), co.at(i));
                if (!ga.empty()) ga[i] += og[i] * da;
                if (!gb.empty()) gb[i] += og[i] * db;
            }
        });
    }
    return out;
}

template <class Fwd, class Bwd>
Tensor unary_elementwise(Graph& g, const Tensor& x, Fwd fwd, Bwd bwd) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out.at(i) = fwd(x.at(i));
    if (g.should_record({&x})) {
        Tensor cx = x, co = out;
        g.record(out, [cx, co, bwd]() mutable {
            auto og = co.grad();
            auto gx = cx.grad();
            for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i] * bwd(cx.at(i), co.at(i));
        });
    }
    return out;
}

}  // namespace detail

inline Tensor add(Graph& g, const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        g, a, b, "add", [](double x, double y) { return x + y; },
        [](double, double, double) { return std::pair{1.0, 1.0}; });
}

inline Tensor sub(Graph& g, const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        g, a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double, double) { return std::pair{1.0, -1.0}; });
}

inline Tensor mul(Graph& g, const Tensor& a, const Tensor& b) {
    return detail::binary_elementwise(
        g, a, b, "mul", [](double x, double y) { return x * y; },
        [](double x, double y, double) { return std::pair{y, x}; });
}

inline Tensor tanh(Graph& g, const Tensor& x) {
    return detail::unary_elementwise(
        g, x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(Graph& g, const Tensor& x) {
    return detail::unary_elementwise(
        g, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline Tensor scale(Graph& g, const Tensor& x, double c) {
    return detail::unary_elementwise(
        g, x, [c](double v) { return c * v; }, [c](double, double) { return c; });
}

// Product of a scalar tensor with a tensor; both factors receive gradient.
inline Tensor smul(Graph& g, const Tensor& s, const Tensor& x) {
    if (s.size() != 1) throw ShapeError("smul: first operand must be a scalar tensor");
    Tensor out(x.shape());
    const double sv = s.at(0);
    for (std::size_t i = 0; i < x.size(); ++i) out.at(i) = sv * x.at(i);
    if (g.should_record({&s, &x})) {
        Tensor cs = s, cx = x, co = out;
        g.record(out, [cs, cx, co]() mutable {
            auto og = co.grad();
            if (cs.wants_grad()) {
                double acc = 0.0;
                for (std::size_t i = 0; i < og.size(); ++i) acc += og[i] * cx.at(i);
                cs.grad()[0] += acc;
            }
            if (cx.wants_grad()) {
                auto gx = cx.grad();
                const double sv2 = cs.at(0);
                for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i] * sv2;
            }
        });
    }
    return out;
}

// matmul supports [m,k]x[k,n] -> [m,n] and the matrix-vector case
// [m,k]x[k] -> [m].
inline Tensor matmul(Graph& g, const Tensor& a, const Tensor& b) {
    const bool vec = b.rank() == 1;
    if (a.rank() != 2 || (b.rank() != 2 && b.rank() != 1))
        throw ShapeError("matmul: expects [m,k]x[k,n] or [m,k]x[k]");
    const std::size_t m = a.dim(0), k = a.dim(1);
    const std::size_t bk = b.dim(0), n = vec ? 1 : b.dim(1);
    if (k != bk)
        throw ShapeError("matmul: inner dimensions disagree " + detail::shape_str(a.shape()) +
                         " vs " + detail::shape_str(b.shape()));
    Tensor out(vec ? std::vector<std::size_t>{m} : std::vector<std::size_t>{m, n});
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ad[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) od[i * n + j] += av * bd[p * n + j];
        }
    if (g.should_record({&a, &b})) {
        Tensor ca = a, cb = b, co = out;
        g.record(out, [ca, cb, co, m, k, n]() mutable {
            auto og = co.grad_view();
            if (ca.wants_grad()) {
                auto ga = ca.grad();
                auto bd2 = cb.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            acc += og[i * n + j] * bd2[p * n + j];
                        ga[i * k + p] += acc;
                    }
            }
            if (cb.wants_grad()) {
                auto gb = cb.grad();
                auto ad2 = ca.data();
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t i = 0; i < m; ++i) {
                        const double av = ad2[i * k + p];
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j)
                            gb[p * n + j] += av * og[i * n + j];
                    }
            }
        });
    }
    return out;
}

// Dot product of two equal-length vectors -> scalar tensor.
inline Tensor dot(Graph& g, const Tensor& a, const Tensor& b) {
    if (a.rank() != 1 || b.rank() != 1) throw ShapeError("dot: expects two vectors");
    detail::check_same_shape(a, b, "dot");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i) * b.at(i);
    Tensor out = Tensor::scalar(acc);
    if (g.should_record({&a, &b})) {
        Tensor ca = a, cb = b, co = out;
        g.record(out, [ca, cb, co]() mutable {
            const double og = co.grad()[0];
            if (ca.wants_grad()) {
                auto ga = ca.grad();
                for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += og * cb.at(i);
            }
            if (cb.wants_grad()) {
                auto gb = cb.grad();
                for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += og * ca.at(i);
            }
        });
    }
    return out;
}

inline Tensor sum(Graph& g, const Tensor& x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += x.at(i);
    Tensor out = Tensor::scalar(acc);
    if (g.should_record({&x})) {
        Tensor cx = x, co = out;
        g.record(out, [cx, co]() mutable {
            const double og = co.grad()[0];
            auto gx = cx.grad();
            for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += og;
        });
    }
    return out;
}

// Concatenation along the last axis; all parts must agree on the leading
// dimensions.
inline Tensor concat(Graph& g, std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat: no operands");
    const std::size_t rank = parts[0].rank();
    std::size_t last = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != rank) throw ShapeError("concat: rank mismatch");
        for (std::size_t d = 0; d + 1 < rank; ++d)
            if (p.dim(d) != parts[0].dim(d)) throw ShapeError("concat: leading dims disagree");
        last += p.dim(rank - 1);
    }
    std::vector<std::size_t> oshape(parts[0].shape());
    oshape[rank - 1] = last;
    Tensor out(oshape);
    const std::size_t rows = out.size() / last;
    std::size_t col = 0;
    for (const Tensor& p : parts) {
        const std::size_t w = p.dim(rank - 1);
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < w; ++c) out.at(r * last + col + c) = p.at(r * w + c);
        col += w;
    }
    bool rec = g.grad_enabled();
    if (rec) {
        rec = false;
        for (const Tensor& p : parts)
            if (p.wants_grad()) rec = true;
    }
    if (rec) {
        std::vector<Tensor> cp(parts.begin(), parts.end());
        Tensor co = out;
        g.record(out, [cp, co, rows, last]() mutable {
            auto og = co.grad_view();
            std::size_t col2 = 0;
            for (Tensor& p : cp) {
                const std::size_t w = p.dim(p.rank() - 1);
                if (p.wants_grad()) {
                    auto gp = p.grad();
                    for (std::size_t r = 0; r < rows; ++r)
                        for (std::size_t c = 0; c < w; ++c)
                            gp[r * w + c] += og[r * last + col2 + c];
                }
                col2 += w;
            }
        });
    }
    return out;
}

inline Tensor concat(Graph& g, const Tensor& a, const Tensor& b) {
    const Tensor parts[] = {a, b};
    return concat(g, std::span<const Tensor>(parts));
}

inline Tensor concat(Graph& g, const Tensor& a, const Tensor& b, const Tensor& c) {
    const Tensor parts[] = {a, b, c};
    return concat(g, std::span<const Tensor>(parts));
}

// Contiguous slice [start, start+len) along the last axis.
inline Tensor slice(Graph& g, const Tensor& x, std::size_t start, std::size_t len) {
    const std::size_t rank = x.rank();
    const std::size_t last = x.dim(rank - 1);
    if (len == 0 || start + len > last) throw ShapeError("slice: range out of bounds");
    std::vector<std::size_t> oshape(x.shape());
    oshape[rank - 1] = len;
    Tensor out(oshape);
    const std::size_t rows = x.size() / last;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < len; ++c) out.at(r * len + c) = x.at(r * last + start + c);
    if (g.should_record({&x})) {
        Tensor cx = x, co = out;
        g.record(out, [cx, co, rows, last, start, len]() mutable {
            auto og = co.grad_view();
            auto gx = cx.grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < len; ++c)
                    gx[r * last + start + c] += og[r * len + c];
        });
    }
    return out;
}

inline Tensor reshape(Graph& g, const Tensor& x, std::vector<std::size_t> shape) {
    if (detail::shape_numel(shape) != x.size()) throw ShapeError("reshape: element count differs");
    Tensor out(shape);
    std::copy(x.data().begin(), x.data().end(), out.data().begin());
    if (g.should_record({&x})) {
        Tensor cx = x, co = out;
        g.record(out, [cx, co]() mutable {
            auto og = co.grad_view();
            auto gx = cx.grad();
            for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i];
        });
    }
    return out;
}

// Numerically stable softmax over a vector.
inline Tensor softmax(Graph& g, const Tensor& x) {
    if (x.rank() != 1 || x.size() == 0) throw ShapeError("softmax: expects a non-empty vector");
    Tensor out(x.shape());
    const double mx = *std::max_element(x.data().begin(), x.data().end());
    double z = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.at(i) = std::exp(x.at(i) - mx);
        z += out.at(i);
    }
    for (std::size_t i = 0; i < x.size(); ++i) out.at(i) /= z;
    if (g.should_record({&x})) {
        Tensor cx = x, co = out;
        g.record(out, [cx, co]() mutable {
            auto og = co.grad_view();
            auto gx = cx.grad();
            double inner = 0.0;
            for (std::size_t i = 0; i < og.size(); ++i) inner += og[i] * co.at(i);
            for (std::size_t i = 0; i < og.size(); ++i)
                gx[i] += co.at(i) * (og[i] - inner);
        });
    }
    return out;
}

// Row lookup: out[i] = table[ids[i]]. Backward scatter-adds, so repeated ids
// accumulate gradient.
inline Tensor gather_rows(Graph& g, const Tensor& table, std::span<const int> ids) {
    if (table.rank() != 2) throw ShapeError("gather_rows: table must be rank 2");
    const std::size_t v = table.dim(0), d = table.dim(1);
    if (ids.empty()) throw InvalidArgument("gather_rows: empty id list");
    for (int id : ids)
        if (id < 0 || static_cast<std::size_t>(id) >= v)
            throw IndexError("gather_rows: id " + std::to_string(id) + " out of range for " +
                             std::to_string(v) + " rows");
    Tensor out({ids.size(), d});
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            out.at(i, j) = table.at(static_cast<std::size_t>(ids[i]), j);
    if (g.should_record({&table})) {
        Tensor ct = table, co = out;
        std::vector<int> cids(ids.begin(), ids.end());
        g.record(out, [ct, co, cids, d]() mutable {
            auto og = co.grad_view();
            auto gt = ct.grad();
            for (std::size_t i = 0; i < cids.size(); ++i)
                for (std::size_t j = 0; j < d; ++j)
                    gt[static_cast<std::size_t>(cids[i]) * d + j] += og[i * d + j];
        });
    }
    return out;
}

inline Tensor gather_rows(Graph& g, const Tensor& table, std::initializer_list<int> ids) {
    return gather_rows(g, table, std::span<const int>(ids.begin(), ids.size()));
}

// Inverted dropout: in training mode each element is zeroed with probability
// `rate` and survivors are scaled by 1/(1-rate); eval mode is the identity.
inline Tensor dropout(Graph& g, const Tensor& x, double rate, bool training, std::uint64_t seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw InvalidArgument("dropout: rate must be in [0,1)");
    if (!training || rate == 0.0) return x;
    Tensor out(x.shape());
    std::vector<double> mask(x.size());
    std::mt19937_64 rng(splitmix64(seed));
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < x.size(); ++i) {
        mask[i] = uniform01(rng) < rate ? 0.0 : keep_scale;
        out.at(i) = x.at(i) * mask[i];
    }
    if (g.should_record({&x})) {
        Tensor cx = x, co = out;
        g.record(out, [cx, co, mask = std::move(mask)]() mutable {
            auto og = co.grad_view();
            auto gx = cx.grad();
            for (std::size_t i = 0; i < og.size(); ++i) gx[i] += og[i] * mask[i];
        });
    }
    return out;
}

constexpr double kCrossEntropyFloor = 1e-12;

// Negative log-likelihood of `target` under a probability vector. The
// probability is floored at 1e-12 before the log; below the floor the
// gradient is zero.
inline Tensor cross_entropy(Graph& g, const Tensor& probs, int target) {
    if (probs.rank() != 1) throw ShapeError("cross_entropy: expects a probability vector");
    if (target < 0 || static_cast<std::size_t>(target) >= probs.size())
        throw IndexError("cross_entropy: target " + std::to_string(target) +
                         " out of range for " + std::to_string(probs.size()) + " classes");
    const double p = probs.at(static_cast<std::size_t>(target));
    Tensor out = Tensor::scalar(-std::log(std::max(p, kCrossEntropyFloor)));
    if (g.should_record({&probs})) {
        Tensor cp = probs, co = out;
        g.record(out, [cp, co, target]() mutable {
            const double og = co.grad()[0];
            const double pv = cp.at(static_cast<std::size_t>(target));
            if (pv > kCrossEntropyFloor)
                cp.grad()[static_cast<std::size_t>(target)] -= og / pv;
        });
    }
    return out;
}

}  // namespace nts
