#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "bcgn/common.hpp"

namespace bcgn {

template <typename T>
class Tape;

// Dense row-major tensor. Storage is shared between copies and treated as
// immutable once an op has produced it; `node` links the tensor into a tape
// when it participates in gradient computation.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::shared_ptr<std::vector<T>> store;
    Tape<T>* tape = nullptr;
    int node = -1;

    Tensor() = default;

    Tensor(std::vector<int> shp, std::vector<T> values) : shape(std::move(shp)) {
        store = std::make_shared<std::vector<T>>(std::move(values));
        if (numel_of(shape) != int64_t(store->size()))
            throw ShapeError("tensor: shape does not match data length");
    }

    static Tensor zeros(std::vector<int> shp) {
        Tensor t;
        t.shape = std::move(shp);
        t.store = std::make_shared<std::vector<T>>(size_t(numel_of(t.shape)), T(0));
        return t;
    }

    static Tensor full(std::vector<int> shp, T v) {
        Tensor t = zeros(std::move(shp));
        std::fill(t.store->begin(), t.store->end(), v);
        return t;
    }

    static int64_t numel_of(const std::vector<int>& shp) {
        int64_t n = 1;
        for (int d : shp) {
            if (d < 0) throw ShapeError("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return numel_of(shape); }
    int rank() const { return int(shape.size()); }
    int dim(int i) const { return shape.at(size_t(i)); }

    std::span<T> data() { return {store->data(), store->size()}; }
    std::span<const T> data() const { return {store->data(), store->size()}; }
    T* raw() { return store->data(); }
    const T* raw() const { return store->data(); }

    bool requires_grad() const { return node >= 0; }

    // Same storage, detached from any tape.
    Tensor detached() const {
        Tensor t;
        t.shape = shape;
        t.store = store;
        return t;
    }

    Tensor clone() const {
        Tensor t;
        t.shape = shape;
        t.store = std::make_shared<std::vector<T>>(*store);
        return t;
    }

    T scalar() const {
        if (numel() != 1) throw ShapeError("tensor: scalar() on non-scalar");
        return (*store)[0];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <typename T>
std::string shape_str(const Tensor<T>& t) {
    std::string s = "[";
    for (size_t i = 0; i < t.shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(t.shape[i]);
    }
    return s + "]";
}

// Reverse-mode tape. Ops append nodes in evaluation order, so index order is
// already topological; backward() walks it once in reverse. A tape must only
// be used from one thread at a time, but distinct tapes are independent.
template <typename T>
class Tape {
public:
    using BackFn = std::function<void(const T* grad_out, const std::vector<T*>& parent_grads)>;

    Tensor<T> watch(const Tensor<T>& t) {
        Tensor<T> out = t;
        out.tape = this;
        out.node = add_node(t.numel(), {}, nullptr);
        return out;
    }

    int add_node(int64_t numel, std::vector<int> parents, BackFn fn) {
        for (int p : parents)
            if (p >= int(nodes_.size()))
                throw Error("tape: op input does not precede it");
        nodes_.push_back(Node{std::move(parents), std::move(fn), numel});
        return int(nodes_.size()) - 1;
    }

    // Computes gradients of a scalar loss w.r.t. every reachable node.
    void backward(const Tensor<T>& loss) {
        if (loss.tape != this || loss.node < 0)
            throw Error("tape: backward on a tensor from another tape");
        if (loss.numel() != 1)
            throw ShapeError("tape: backward requires a scalar loss");
        grads_.assign(nodes_.size(), {});
        grads_[size_t(loss.node)] = {T(1)};
        std::vector<T*> pg;
        for (int i = int(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[size_t(i)];
            if (grads_[size_t(i)].empty() || !n.back) continue;
            pg.clear();
            for (int p : n.parents) pg.push_back(grad_slot(p));
            n.back(grads_[size_t(i)].data(), pg);
        }
        ran_backward_ = true;
    }

    // Gradient of a watched/intermediate tensor; zeros if unreachable.
    Tensor<T> grad(const Tensor<T>& t) const {
        std::span<const T> g = grad_span(t);
        Tensor<T> out = Tensor<T>::zeros(t.shape);
        if (!g.empty()) std::copy(g.begin(), g.end(), out.store->begin());
        return out;
    }

    std::span<const T> grad_span(const Tensor<T>& t) const {
        if (!ran_backward_) throw Error("tape: grad requested before backward");
        if (t.tape != this || t.node < 0) throw Error("tape: grad of untracked tensor");
        const auto& g = grads_[size_t(t.node)];
        return {g.data(), g.size()};
    }

    size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::vector<int> parents;  // -1 entries mark untracked inputs
        BackFn back;
        int64_t numel;
    };

    T* grad_slot(int node) {
        if (node < 0) return nullptr;
        auto& g = grads_[size_t(node)];
        if (g.empty()) g.assign(size_t(nodes_[size_t(node)].numel), T(0));
        return g.data();
    }

    std::vector<Node> nodes_;
    std::vector<std::vector<T>> grads_;
    bool ran_backward_ = false;
};

namespace detail {

template <typename T>
void check_finite(const char* op, const std::vector<T>& v) {
    for (T x : v)
        if (!std::isfinite(double(x)))
            throw NumericError(std::string("op '") + op + "' produced a non-finite value");
}

template <typename T>
Tape<T>* common_tape(std::initializer_list<const Tensor<T>*> inputs) {
    Tape<T>* tape = nullptr;
    for (const Tensor<T>* t : inputs) {
        if (!t->requires_grad()) continue;
        if (tape && tape != t->tape)
            throw Error("op: inputs recorded on different tapes");
        tape = t->tape;
    }
    return tape;
}

template <typename T>
Tensor<T> make_result(const char* op, std::vector<int> shape, std::vector<T> values,
                      std::initializer_list<const Tensor<T>*> inputs,
                      typename Tape<T>::BackFn back) {
    check_finite(op, values);
    Tensor<T> out(std::move(shape), std::move(values));
    if (Tape<T>* tape = common_tape<T>(inputs)) {
        std::vector<int> parents;
        for (const Tensor<T>* t : inputs) parents.push_back(t->node);
        out.tape = tape;
        out.node = tape->add_node(out.numel(), std::move(parents), std::move(back));
    }
    return out;
}

// a[MxK] * b[KxN] += into c. Row-major, j-contiguous inner loop.
template <typename T>
void gemm_acc(int m, int k, int n, const T* a, const T* b, T* c) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + size_t(i) * size_t(k);
        T* ci = c + size_t(i) * size_t(n);
        for (int p = 0; p < k; ++p) {
            const T apv = ai[p];
            const T* bp = b + size_t(p) * size_t(n);
            for (int j = 0; j < n; ++j) ci[j] += apv * bp[j];
        }
    }
}

// aT[KxM] * b[KxN] += into c[MxN]  (a given transposed).
template <typename T>
void gemm_at_acc(int m, int k, int n, const T* a, const T* b, T* c) {
    for (int p = 0; p < k; ++p) {
        const T* ap = a + size_t(p) * size_t(m);
        const T* bp = b + size_t(p) * size_t(n);
        for (int i = 0; i < m; ++i) {
            const T av = ap[i];
            T* ci = c + size_t(i) * size_t(n);
            for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// a[MxK] * bT[NxK] += into c[MxN]  (b given transposed).
template <typename T>
void gemm_bt_acc(int m, int k, int n, const T* a, const T* b, T* c) {
    for (int i = 0; i < m; ++i) {
        const T* ai = a + size_t(i) * size_t(k);
        T* ci = c + size_t(i) * size_t(n);
        for (int j = 0; j < n; ++j) {
            const T* bj = b + size_t(j) * size_t(k);
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

struct ConvDims {
    int n, c, h, w, f, kh, kw, oh, ow, stride, pad;
};

inline ConvDims conv_dims(const std::vector<int>& x, const std::vector<int>& k, int stride,
                          int pad, const char* op) {
    if (x.size() != 4 || k.size() != 4)
        throw ShapeError(std::string(op) + ": expects 4-d input and kernel");
    if (stride < 1 || pad < 0) throw ShapeError(std::string(op) + ": bad stride/pad");
    ConvDims d;
    d.n = x[0]; d.c = x[1]; d.h = x[2]; d.w = x[3];
    d.f = k[0]; d.kh = k[2]; d.kw = k[3];
    d.stride = stride; d.pad = pad;
    if (k[1] != d.c) throw ShapeError(std::string(op) + ": kernel channel mismatch");
    int ho = d.h + 2 * pad - d.kh;
    int wo = d.w + 2 * pad - d.kw;
    if (ho < 0 || wo < 0 || ho % stride != 0 || wo % stride != 0)
        throw ShapeError(std::string(op) + ": output size is not integral");
    d.oh = ho / stride + 1;
    d.ow = wo / stride + 1;
    return d;
}

// Unpacks one image into a [C*Kh*Kw, OH*OW] patch matrix.
template <typename T>
void im2col(const T* img, const ConvDims& d, T* col) {
    const int ohw = d.oh * d.ow;
    for (int c = 0; c < d.c; ++c) {
        const T* ic = img + size_t(c) * size_t(d.h) * size_t(d.w);
        for (int kh = 0; kh < d.kh; ++kh) {
            for (int kw = 0; kw < d.kw; ++kw) {
                T* row = col + size_t((c * d.kh + kh) * d.kw + kw) * size_t(ohw);
                for (int oh = 0; oh < d.oh; ++oh) {
                    const int ih = oh * d.stride - d.pad + kh;
                    if (ih < 0 || ih >= d.h) {
                        for (int ow = 0; ow < d.ow; ++ow) row[oh * d.ow + ow] = T(0);
                        continue;
                    }
                    const T* irow = ic + size_t(ih) * size_t(d.w);
                    for (int ow = 0; ow < d.ow; ++ow) {
                        const int iw = ow * d.stride - d.pad + kw;
                        row[oh * d.ow + ow] = (iw < 0 || iw >= d.w) ? T(0) : irow[iw];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds the patch matrix back into an image.
template <typename T>
void col2im_acc(const T* col, const ConvDims& d, T* img) {
    const int ohw = d.oh * d.ow;
    for (int c = 0; c < d.c; ++c) {
        T* ic = img + size_t(c) * size_t(d.h) * size_t(d.w);
        for (int kh = 0; kh < d.kh; ++kh) {
            for (int kw = 0; kw < d.kw; ++kw) {
                const T* row = col + size_t((c * d.kh + kh) * d.kw + kw) * size_t(ohw);
                for (int oh = 0; oh < d.oh; ++oh) {
                    const int ih = oh * d.stride - d.pad + kh;
                    if (ih < 0 || ih >= d.h) continue;
                    T* irow = ic + size_t(ih) * size_t(d.w);
                    for (int ow = 0; ow < d.ow; ++ow) {
                        const int iw = ow * d.stride - d.pad + kw;
                        if (iw >= 0 && iw < d.w) irow[iw] += row[oh * d.ow + ow];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

// Shared unary builder: y = f(x), dx += gout * df(x, y). The backward lambda
// shares the output store instead of copying it.
template <typename T, class F, class DF>
Tensor<T> unary_op(const char* name, const Tensor<T>& x, F f, DF df) {
    auto ys = std::make_shared<std::vector<T>>(x.store->size());
    const T* xd = x.raw();
    for (size_t i = 0; i < ys->size(); ++i) (*ys)[i] = f(xd[i]);
    check_finite(name, *ys);
    Tensor<T> res;
    res.shape = x.shape;
    res.store = ys;
    if (x.requires_grad()) {
        auto xs = x.store;
        res.tape = x.tape;
        res.node = x.tape->add_node(
            res.numel(), {x.node}, [xs, ys, df](const T* g, const std::vector<T*>& pg) {
                if (!pg[0]) return;
                const T* xv = xs->data();
                const T* yv = ys->data();
                for (size_t i = 0; i < xs->size(); ++i) pg[0][i] += g[i] * df(xv[i], yv[i]);
            });
    }
    return res;
}

}  // namespace detail

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary_op(
        "relu", x, [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.2)) {
    return detail::unary_op(
        "leaky_relu", x, [slope](T v) { return v > T(0) ? v : slope * v; },
        [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return detail::unary_op(
        "tanh", x, [](T v) { return T(std::tanh(double(v))); },
        [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary_op(
        "sigmoid", x, [](T v) { return T(1.0 / (1.0 + std::exp(-double(v)))); },
        [](T, T y) { return y * (T(1) - y); });
}

// log with the operand clamped to >= kLogClamp; keeps adversarial losses
// finite when a discriminator saturates. Gradient is zero in the clamped
// region.
inline constexpr double kLogClamp = 1e-12;

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    return detail::unary_op(
        "log", x, [](T v) { return T(std::log(std::max(double(v), kLogClamp))); },
        [](T v, T) { return double(v) > kLogClamp ? T(1.0 / double(v)) : T(0); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return detail::unary_op(
        "exp", x, [](T v) { return T(std::exp(double(v))); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return detail::unary_op(
        "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    return detail::unary_op(
        "abs", x, [](T v) { return v < T(0) ? -v : v; },
        [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double c) {
    return detail::unary_op(
        "scale", x, [c](T v) { return T(double(v) * c); }, [c](T, T) { return T(c); });
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& x, double c) {
    return detail::unary_op(
        "add_const", x, [c](T v) { return T(double(v) + c); }, [](T, T) { return T(1); });
}

namespace detail {

// Binary elementwise; b may omit the leading batch dimension of a, in which
// case it is broadcast over it.
template <typename T, class F, class DA, class DB>
Tensor<T> binary_op(const char* name, const Tensor<T>& a, const Tensor<T>& b, F f, DA da, DB db) {
    bool bcast = false;
    if (!a.same_shape(b)) {
        bcast = a.rank() >= 1 &&
                std::vector<int>(a.shape.begin() + 1, a.shape.end()) == b.shape;
        if (!bcast)
            throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(a) + " vs " +
                             shape_str(b));
    }
    const int64_t bn = b.numel();
    std::vector<T> out(a.store->size());
    const T* ad = a.raw();
    const T* bd = b.raw();
    for (size_t i = 0; i < out.size(); ++i) out[i] = f(ad[i], bd[bn ? int64_t(i) % bn : 0]);
    auto as = a.store;
    auto bs = b.store;
    typename Tape<T>::BackFn back = [as, bs, bn, da, db](const T* g, const std::vector<T*>& pg) {
        const T* av = as->data();
        const T* bv = bs->data();
        for (size_t i = 0; i < as->size(); ++i) {
            const int64_t j = bn ? int64_t(i) % bn : 0;
            if (pg[0]) pg[0][i] += g[i] * da(av[i], bv[j]);
            if (pg[1]) pg[1][j] += g[i] * db(av[i], bv[j]);
        }
    };
    return detail::make_result<T>(name, a.shape, std::move(out), {&a, &b}, std::move(back));
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
        [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
        [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
        [](T x, T) { return x; });
}

// ---------------------------------------------------------------------------
// Linear algebra / conv ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: needs [MxK]*[KxN], got " + shape_str(a) + " * " + shape_str(b));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<T> out(size_t(m) * size_t(n), T(0));
    detail::gemm_acc(m, k, n, a.raw(), b.raw(), out.data());
    auto as = a.store;
    auto bs = b.store;
    typename Tape<T>::BackFn back = [as, bs, m, k, n](const T* g, const std::vector<T*>& pg) {
        if (pg[0]) detail::gemm_bt_acc(m, n, k, g, bs->data(), pg[0]);  // dA = G * B^T
        if (pg[1]) detail::gemm_at_acc(k, m, n, as->data(), g, pg[1]);  // dB = A^T * G
    };
    return detail::make_result<T>("matmul", {m, n}, std::move(out), {&a, &b}, std::move(back));
}

// Cross-correlation convention; x:[N,C,H,W], k:[F,C,Kh,Kw] -> [N,F,H',W'].
// The im2col buffers are kept alive for the backward pass.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, int stride, int pad) {
    const detail::ConvDims d = detail::conv_dims(x.shape, k.shape, stride, pad, "conv2d");
    const int ckk = d.c * d.kh * d.kw;
    const int ohw = d.oh * d.ow;
    auto cols = std::make_shared<std::vector<T>>(size_t(d.n) * size_t(ckk) * size_t(ohw));
    std::vector<T> out(size_t(d.n) * size_t(d.f) * size_t(ohw), T(0));
    for (int i = 0; i < d.n; ++i) {
        T* col = cols->data() + size_t(i) * size_t(ckk) * size_t(ohw);
        detail::im2col(x.raw() + size_t(i) * size_t(d.c) * size_t(d.h) * size_t(d.w), d, col);
        detail::gemm_acc(d.f, ckk, ohw, k.raw(), col, out.data() + size_t(i) * size_t(d.f) * ohw);
    }
    auto ks = k.store;
    typename Tape<T>::BackFn back = [cols, ks, d, ckk, ohw](const T* g, const std::vector<T*>& pg) {
        std::vector<T> dcol;
        for (int i = 0; i < d.n; ++i) {
            const T* gi = g + size_t(i) * size_t(d.f) * size_t(ohw);
            const T* col = cols->data() + size_t(i) * size_t(ckk) * size_t(ohw);
            if (pg[1]) detail::gemm_bt_acc(d.f, ohw, ckk, gi, col, pg[1]);  // dK = G * col^T
            if (pg[0]) {
                dcol.assign(size_t(ckk) * size_t(ohw), T(0));
                detail::gemm_at_acc(ckk, d.f, ohw, ks->data(), gi, dcol.data());  // K^T * G
                detail::col2im_acc(dcol.data(), d,
                                   pg[0] + size_t(i) * size_t(d.c) * size_t(d.h) * size_t(d.w));
            }
        }
    };
    return detail::make_result<T>("conv2d", {d.n, d.f, d.oh, d.ow}, std::move(out), {&x, &k},
                                  std::move(back));
}

// Exact adjoint of conv2d with the same kernel/stride/pad: maps [N,F,H',W']
// back to [N,C,H,W] with H = (H'-1)*stride - 2*pad + Kh.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& y, const Tensor<T>& k, int stride, int pad) {
    if (y.rank() != 4 || k.rank() != 4)
        throw ShapeError("conv_transpose2d: expects 4-d input and kernel");
    if (y.dim(1) != k.dim(0))
        throw ShapeError("conv_transpose2d: input channels must match kernel dim 0");
    detail::ConvDims d;
    d.n = y.dim(0); d.f = k.dim(0); d.c = k.dim(1); d.kh = k.dim(2); d.kw = k.dim(3);
    d.oh = y.dim(2); d.ow = y.dim(3);
    d.stride = stride; d.pad = pad;
    d.h = (d.oh - 1) * stride - 2 * pad + d.kh;
    d.w = (d.ow - 1) * stride - 2 * pad + d.kw;
    if (stride < 1 || pad < 0 || d.h < 1 || d.w < 1)
        throw ShapeError("conv_transpose2d: invalid output size");
    const int ckk = d.c * d.kh * d.kw;
    const int ohw = d.oh * d.ow;
    std::vector<T> out(size_t(d.n) * size_t(d.c) * size_t(d.h) * size_t(d.w), T(0));
    {
        std::vector<T> col(size_t(ckk) * size_t(ohw));
        for (int i = 0; i < d.n; ++i) {
            std::fill(col.begin(), col.end(), T(0));
            detail::gemm_at_acc(ckk, d.f, ohw, k.raw(), y.raw() + size_t(i) * size_t(d.f) * ohw,
                                col.data());
            detail::col2im_acc(col.data(), d,
                               out.data() + size_t(i) * size_t(d.c) * size_t(d.h) * size_t(d.w));
        }
    }
    auto ys = y.store;
    auto ks = k.store;
    typename Tape<T>::BackFn back = [ys, ks, d, ckk, ohw](const T* g, const std::vector<T*>& pg) {
        std::vector<T> col(size_t(ckk) * size_t(ohw));
        for (int i = 0; i < d.n; ++i) {
            detail::im2col(g + size_t(i) * size_t(d.c) * size_t(d.h) * size_t(d.w), d, col.data());
            // dY = K * im2col(G)  (adjoint of the adjoint is the forward conv)
            if (pg[0])
                detail::gemm_acc(d.f, ckk, ohw, ks->data(), col.data(),
                                 pg[0] + size_t(i) * size_t(d.f) * ohw);
            // dK = Y * im2col(G)^T
            if (pg[1])
                detail::gemm_bt_acc(d.f, ohw, ckk, ys->data() + size_t(i) * size_t(d.f) * ohw,
                                    col.data(), pg[1]);
        }
    };
    return detail::make_result<T>("conv_transpose2d", {d.n, d.c, d.h, d.w}, std::move(out),
                                  {&y, &k}, std::move(back));
}

// Adds a per-channel bias b:[C] to x:[N,C,H,W].
template <typename T>
Tensor<T> bias_add(const Tensor<T>& x, const Tensor<T>& b) {
    if (x.rank() != 4 || b.rank() != 1 || b.dim(0) != x.dim(1))
        throw ShapeError("bias_add: expects [N,C,H,W] and [C]");
    const int n = x.dim(0), c = x.dim(1);
    const int64_t hw = int64_t(x.dim(2)) * x.dim(3);
    std::vector<T> out(x.store->size());
    const T* xd = x.raw();
    const T* bd = b.raw();
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const T bv = bd[ch];
            const int64_t base = (int64_t(i) * c + ch) * hw;
            for (int64_t p = 0; p < hw; ++p) out[size_t(base + p)] = xd[base + p] + bv;
        }
    typename Tape<T>::BackFn back = [n, c, hw](const T* g, const std::vector<T*>& pg) {
        if (pg[0])
            for (size_t i = 0; i < size_t(n) * size_t(c) * size_t(hw); ++i) pg[0][i] += g[i];
        if (pg[1])
            for (int i = 0; i < n; ++i)
                for (int ch = 0; ch < c; ++ch) {
                    const int64_t base = (int64_t(i) * c + ch) * hw;
                    T acc = T(0);
                    for (int64_t p = 0; p < hw; ++p) acc += g[base + p];
                    pg[1][ch] += acc;
                }
    };
    return detail::make_result<T>("bias_add", x.shape, std::move(out), {&x, &b}, std::move(back));
}

// Per-(sample,channel) normalization to zero mean / unit variance, no learned
// affine parameters.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, double eps = 1e-5) {
    if (x.rank() != 4) throw ShapeError("instance_norm: expects [N,C,H,W]");
    const int groups = x.dim(0) * x.dim(1);
    const int64_t hw = int64_t(x.dim(2)) * x.dim(3);
    if (hw < 1) throw ShapeError("instance_norm: empty spatial dims");
    auto xhat = std::make_shared<std::vector<T>>(x.store->size());
    auto invstd = std::make_shared<std::vector<T>>(size_t(groups));
    const T* xd = x.raw();
    for (int gix = 0; gix < groups; ++gix) {
        const int64_t base = int64_t(gix) * hw;
        double mean = 0;
        for (int64_t p = 0; p < hw; ++p) mean += double(xd[base + p]);
        mean /= double(hw);
        double var = 0;
        for (int64_t p = 0; p < hw; ++p) {
            const double dv = double(xd[base + p]) - mean;
            var += dv * dv;
        }
        var /= double(hw);
        const double is = 1.0 / std::sqrt(var + eps);
        (*invstd)[size_t(gix)] = T(is);
        for (int64_t p = 0; p < hw; ++p)
            (*xhat)[size_t(base + p)] = T((double(xd[base + p]) - mean) * is);
    }
    std::vector<T> out = *xhat;
    typename Tape<T>::BackFn back = [xhat, invstd, groups, hw](const T* g,
                                                               const std::vector<T*>& pg) {
        if (!pg[0]) return;
        for (int gix = 0; gix < groups; ++gix) {
            const int64_t base = int64_t(gix) * hw;
            double gsum = 0, gxsum = 0;
            for (int64_t p = 0; p < hw; ++p) {
                gsum += double(g[base + p]);
                gxsum += double(g[base + p]) * double((*xhat)[size_t(base + p)]);
            }
            const double gmean = gsum / double(hw);
            const double gxmean = gxsum / double(hw);
            const double is = double((*invstd)[size_t(gix)]);
            for (int64_t p = 0; p < hw; ++p)
                pg[0][base + p] += T(is * (double(g[base + p]) - gmean -
                                           double((*xhat)[size_t(base + p)]) * gxmean));
        }
    };
    return detail::make_result<T>("instance_norm", x.shape, std::move(out), {&x}, std::move(back));
}

// Stacks b's channels after a's: [N,C1,H,W] + [N,C2,H,W] -> [N,C1+C2,H,W].
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 4 || b.rank() != 4 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) ||
        a.dim(3) != b.dim(3))
        throw ShapeError("concat_channels: mismatch " + shape_str(a) + " vs " + shape_str(b));
    const int n = a.dim(0), c1 = a.dim(1), c2 = b.dim(1);
    const int64_t hw = int64_t(a.dim(2)) * a.dim(3);
    std::vector<T> out(size_t(n) * size_t(c1 + c2) * size_t(hw));
    for (int i = 0; i < n; ++i) {
        std::copy_n(a.raw() + int64_t(i) * c1 * hw, size_t(c1 * hw),
                    out.begin() + int64_t(i) * (c1 + c2) * hw);
        std::copy_n(b.raw() + int64_t(i) * c2 * hw, size_t(c2 * hw),
                    out.begin() + int64_t(i) * (c1 + c2) * hw + c1 * hw);
    }
    typename Tape<T>::BackFn back = [n, c1, c2, hw](const T* g, const std::vector<T*>& pg) {
        for (int i = 0; i < n; ++i) {
            const T* gi = g + int64_t(i) * (c1 + c2) * hw;
            if (pg[0])
                for (int64_t p = 0; p < c1 * hw; ++p) pg[0][int64_t(i) * c1 * hw + p] += gi[p];
            if (pg[1])
                for (int64_t p = 0; p < c2 * hw; ++p)
                    pg[1][int64_t(i) * c2 * hw + p] += gi[c1 * hw + p];
        }
    };
    return detail::make_result<T>("concat_channels", {n, c1 + c2, a.dim(2), a.dim(3)},
                                  std::move(out), {&a, &b}, std::move(back));
}

// ---------------------------------------------------------------------------
// Reductions (all return a 1-element tensor)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    double acc = 0;
    for (T v : x.data()) acc += double(v);
    const int64_t n = x.numel();
    typename Tape<T>::BackFn back = [n](const T* g, const std::vector<T*>& pg) {
        if (pg[0])
            for (int64_t i = 0; i < n; ++i) pg[0][i] += g[0];
    };
    return detail::make_result<T>("sum", {1}, {T(acc)}, {&x}, std::move(back));
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.numel() == 0) throw ShapeError("mean: empty tensor");
    double acc = 0;
    for (T v : x.data()) acc += double(v);
    const int64_t n = x.numel();
    typename Tape<T>::BackFn back = [n](const T* g, const std::vector<T*>& pg) {
        if (pg[0]) {
            const T s = T(double(g[0]) / double(n));
            for (int64_t i = 0; i < n; ++i) pg[0][i] += s;
        }
    };
    return detail::make_result<T>("mean", {1}, {T(acc / double(n))}, {&x}, std::move(back));
}

// Reduces all dims except the leading batch dim: [N,...] -> [N].
template <typename T>
Tensor<T> mean_per_item(const Tensor<T>& x) {
    if (x.rank() < 1 || x.numel() == 0) throw ShapeError("mean_per_item: empty tensor");
    const int n = x.dim(0);
    const int64_t per = x.numel() / n;
    std::vector<T> out(size_t(n), T(0));
    for (int i = 0; i < n; ++i) {
        double acc = 0;
        for (int64_t p = 0; p < per; ++p) acc += double(x.raw()[int64_t(i) * per + p]);
        out[size_t(i)] = T(acc / double(per));
    }
    typename Tape<T>::BackFn back = [n, per](const T* g, const std::vector<T*>& pg) {
        if (!pg[0]) return;
        for (int i = 0; i < n; ++i) {
            const T s = T(double(g[i]) / double(per));
            for (int64_t p = 0; p < per; ++p) pg[0][int64_t(i) * per + p] += s;
        }
    };
    return detail::make_result<T>("mean_per_item", {n}, std::move(out), {&x}, std::move(back));
}

// Sum of |a-b| over all elements divided by the batch size (dim 0 for rank>=2
// inputs, 1 otherwise); the per-batch-item expectation of a summed L1 norm.
template <typename T>
Tensor<T> l1_distance(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError("l1_distance: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    const int64_t n = a.rank() >= 2 ? a.dim(0) : 1;
    double acc = 0;
    const T* ad = a.raw();
    const T* bd = b.raw();
    for (size_t i = 0; i < a.store->size(); ++i) acc += std::abs(double(ad[i]) - double(bd[i]));
    auto as = a.store;
    auto bs = b.store;
    typename Tape<T>::BackFn back = [as, bs, n](const T* g, const std::vector<T*>& pg) {
        const T* av = as->data();
        const T* bv = bs->data();
        const T s = T(double(g[0]) / double(n));
        for (size_t i = 0; i < as->size(); ++i) {
            const T sgn = av[i] > bv[i] ? T(1) : (av[i] < bv[i] ? T(-1) : T(0));
            if (pg[0]) pg[0][i] += s * sgn;
            if (pg[1]) pg[1][i] -= s * sgn;
        }
    };
    return detail::make_result<T>("l1_distance", {1}, {T(acc / double(n))}, {&a, &b},
                                  std::move(back));
}

// Mean over all elements of (a-b)^2.
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError("mse: shape mismatch " + shape_str(a) + " vs " + shape_str(b));
    if (a.numel() == 0) throw ShapeError("mse: empty tensor");
    const int64_t n = a.numel();
    double acc = 0;
    const T* ad = a.raw();
    const T* bd = b.raw();
    for (size_t i = 0; i < a.store->size(); ++i) {
        const double dv = double(ad[i]) - double(bd[i]);
        acc += dv * dv;
    }
    auto as = a.store;
    auto bs = b.store;
    typename Tape<T>::BackFn back = [as, bs, n](const T* g, const std::vector<T*>& pg) {
        const T* av = as->data();
        const T* bv = bs->data();
        const T s = T(2.0 * double(g[0]) / double(n));
        for (size_t i = 0; i < as->size(); ++i) {
            const T dv = av[i] - bv[i];
            if (pg[0]) pg[0][i] += s * dv;
            if (pg[1]) pg[1][i] -= s * dv;
        }
    };
    return detail::make_result<T>("mse", {1}, {T(acc / double(n))}, {&a, &b}, std::move(back));
}

// Mean of a list of scalar losses, accumulated in double in index order so
// the result is permutation-stable; one node with one parent per sample.
template <typename T>
Tensor<T> marginal_reduce(const std::vector<Tensor<T>>& samples) {
    if (samples.empty()) throw ShapeError("marginal_reduce: empty sample list");
    double acc = 0;
    std::vector<int> parents;
    std::vector<const Tensor<T>*> inputs;
    for (const Tensor<T>& s : samples) {
        if (s.numel() != 1) throw ShapeError("marginal_reduce: samples must be scalars");
        acc += double(s.scalar());
    }
    const double m = double(samples.size());
    Tape<T>* tape = nullptr;
    for (const Tensor<T>& s : samples) {
        if (!s.requires_grad()) continue;
        if (tape && tape != s.tape) throw Error("marginal_reduce: inputs on different tapes");
        tape = s.tape;
    }
    std::vector<T> out{T(acc / m)};
    detail::check_finite("marginal_reduce", out);
    Tensor<T> res({1}, std::move(out));
    if (tape) {
        for (const Tensor<T>& s : samples) parents.push_back(s.node);
        typename Tape<T>::BackFn back = [m](const T* g, const std::vector<T*>& pg) {
            const T s = T(double(g[0]) / m);
            for (T* p : pg)
                if (p) p[0] += s;
        };
        res.tape = tape;
        res.node = tape->add_node(1, std::move(parents), std::move(back));
    }
    return res;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

struct FiniteDiffResult {
    double max_rel_err = 0;
    int tested = 0;
    int skipped = 0;  // coordinates where the stencil straddled a kink
};

// Compares reverse-mode gradients of `make_loss` w.r.t. `x` against central
// differences. `make_loss` must be deterministic and work for both tracked
// and untracked inputs. `coords` restricts the check to a coordinate subset
// (useful for large parameter tensors); empty means every coordinate.
// Error metric per coordinate: |fd - grad| / max(1, |fd|, |grad|).
//
// With `skip_nondiff_tol` > 0, coordinates whose one-sided differences
// disagree by more than that fraction of the error normalizer are excluded:
// the loss is not differentiable inside the stencil there (a relu or |.|
// kink was crossed), so central differences are not a valid oracle. Any
// surviving kink contributes at most half the skip threshold to the error.
template <typename T, class LossFn>
FiniteDiffResult finite_diff_check_ex(LossFn make_loss, const Tensor<T>& x, double eps = 1e-3,
                                      std::vector<int64_t> coords = {},
                                      double skip_nondiff_tol = 0) {
    Tape<T> tape;
    Tensor<T> xt = tape.watch(x.detached());
    Tensor<T> loss = make_loss(xt);
    tape.backward(loss);
    Tensor<T> g = tape.grad(xt);
    const double l0 = double(loss.scalar());

    if (coords.empty()) {
        coords.resize(size_t(x.numel()));
        for (int64_t i = 0; i < x.numel(); ++i) coords[size_t(i)] = i;
    }
    FiniteDiffResult res;
    for (int64_t c : coords) {
        Tensor<T> xp = x.detached().clone();
        Tensor<T> xm = x.detached().clone();
        (*xp.store)[size_t(c)] += T(eps);
        (*xm.store)[size_t(c)] -= T(eps);
        const double lp = double(make_loss(xp).scalar());
        const double lm = double(make_loss(xm).scalar());
        const double fd = (lp - lm) / (2.0 * eps);
        const double an = double(g.data()[size_t(c)]);
        const double norm = std::max({1.0, std::abs(fd), std::abs(an)});
        if (skip_nondiff_tol > 0) {
            const double dp = (lp - l0) / eps;
            const double dm = (l0 - lm) / eps;
            if (std::abs(dp - dm) > skip_nondiff_tol * norm) {
                ++res.skipped;
                continue;
            }
        }
        ++res.tested;
        res.max_rel_err = std::max(res.max_rel_err, std::abs(fd - an) / norm);
    }
    return res;
}

template <typename T, class LossFn>
double finite_diff_check(LossFn make_loss, const Tensor<T>& x, double eps = 1e-3,
                         std::vector<int64_t> coords = {}) {
    return finite_diff_check_ex(make_loss, x, eps, std::move(coords)).max_rel_err;
}

// Inner product helper used by adjointness checks.
template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("dot: shape mismatch");
    double acc = 0;
    for (size_t i = 0; i < a.store->size(); ++i) acc += double(a.raw()[i]) * double(b.raw()[i]);
    return acc;
}

}  // namespace bcgn
