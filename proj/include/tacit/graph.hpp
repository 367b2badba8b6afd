#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "tacit/error.hpp"
#include "tacit/tensor.hpp"

namespace tacit {

/// Define-by-run reverse-mode tape over Tensor<T>. Ops compute their value on
/// creation and record what the backward sweep needs. Node creation order is a
/// topological order, so backward() is a single reverse walk that accumulates
/// each node's gradient exactly once.
///
/// Reductions use fixed sequential orders (and fixed Eigen kernels for the
/// dense products), so identical inputs produce bit-identical values and
/// gradients run to run.
template <typename T>
class Graph {
public:
    using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using MatMap = Eigen::Map<Mat>;
    using ConstMatMap = Eigen::Map<const Mat>;

    // ---- leaves ----

    /// Constant leaf; owns a copy of the value. Receives a gradient slot but
    /// callers usually ignore it.
    int input(Tensor<T> value) {
        Node n;
        n.kind = Op::kLeaf;
        n.owned = std::move(value);
        return push(std::move(n));
    }

    /// Parameter leaf; references external storage that must outlive the graph.
    int param(const Tensor<T>* external) {
        Node n;
        n.kind = Op::kLeaf;
        n.external = external;
        return push(std::move(n));
    }

    // ---- ops ----

    /// [n,k] x [k,m] -> [n,m]
    int matmul(int a, int b) {
        const Tensor<T>& ta = value(a);
        const Tensor<T>& tb = value(b);
        require(ta.ndim() == 2 && tb.ndim() == 2 && ta.cols() == tb.rows(),
                ErrorCategory::invalid_argument,
                "matmul shape mismatch " + shape_string(ta) + " x " + shape_string(tb));
        Node n;
        n.kind = Op::kMatMul;
        n.a = a;
        n.b = b;
        n.owned = Tensor<T>({ta.rows(), tb.cols()});
        MatMap(n.owned.data.data(), ta.rows(), tb.cols()).noalias() =
            cmap(ta) * cmap(tb);
        return push(std::move(n));
    }

    int add(int a, int b) {
        const Tensor<T>& ta = value(a);
        const Tensor<T>& tb = value(b);
        require(ta.same_shape(tb), ErrorCategory::invalid_argument,
                "add shape mismatch " + shape_string(ta) + " vs " + shape_string(tb));
        Node n;
        n.kind = Op::kAdd;
        n.a = a;
        n.b = b;
        n.owned = ta;
        for (size_t i = 0; i < n.owned.data.size(); ++i) n.owned.data[i] += tb.data[i];
        return push(std::move(n));
    }

    /// a[n,m] + row vector b (numel m), broadcast over rows.
    int row_add(int a, int b) {
        const Tensor<T>& ta = value(a);
        const Tensor<T>& tb = value(b);
        require(ta.ndim() == 2 && tb.numel() == static_cast<size_t>(ta.cols()),
                ErrorCategory::invalid_argument,
                "row_add shape mismatch " + shape_string(ta) + " vs " + shape_string(tb));
        Node n;
        n.kind = Op::kRowAdd;
        n.a = a;
        n.b = b;
        n.owned = ta;
        const int m = ta.cols();
        for (int r = 0; r < ta.rows(); ++r)
            for (int c = 0; c < m; ++c) n.owned.data[size_t(r) * m + c] += tb.data[c];
        return push(std::move(n));
    }

    /// a[n,m] * row vector g (numel m), broadcast over rows.
    int row_mul(int a, int g) {
        const Tensor<T>& ta = value(a);
        const Tensor<T>& tg = value(g);
        require(ta.ndim() == 2 && tg.numel() == static_cast<size_t>(ta.cols()),
                ErrorCategory::invalid_argument,
                "row_mul shape mismatch " + shape_string(ta) + " vs " + shape_string(tg));
        Node n;
        n.kind = Op::kRowMul;
        n.a = a;
        n.b = g;
        n.owned = ta;
        const int m = ta.cols();
        for (int r = 0; r < ta.rows(); ++r)
            for (int c = 0; c < m; ++c) n.owned.data[size_t(r) * m + c] *= tg.data[c];
        return push(std::move(n));
    }

    int scale(int a, T factor) {
        Node n;
        n.kind = Op::kScale;
        n.a = a;
        n.scalar = factor;
        n.owned = value(a);
        for (auto& v : n.owned.data) v *= factor;
        return push(std::move(n));
    }

    /// Per-row normalization over the last axis: (x - mean) / sqrt(var + eps),
    /// population variance, no learned affine.
    int layer_norm(int a, T eps = T(1e-5)) {
        const Tensor<T>& ta = value(a);
        require(ta.ndim() == 2 && ta.cols() >= 1, ErrorCategory::invalid_argument,
                "layer_norm expects [rows, d]");
        const int rows = ta.rows(), d = ta.cols();
        Node n;
        n.kind = Op::kLayerNorm;
        n.a = a;
        n.scalar = eps;
        n.owned = Tensor<T>({rows, d});
        n.saved = Tensor<T>({rows});  // 1/sqrt(var + eps) per row
        for (int r = 0; r < rows; ++r) {
            const T* x = &ta.data[size_t(r) * d];
            T mean = 0;
            for (int c = 0; c < d; ++c) mean += x[c];
            mean /= T(d);
            T var = 0;
            for (int c = 0; c < d; ++c) var += (x[c] - mean) * (x[c] - mean);
            var /= T(d);
            const T inv = T(1) / std::sqrt(var + eps);
            n.saved.data[r] = inv;
            for (int c = 0; c < d; ++c) n.owned.data[size_t(r) * d + c] = (x[c] - mean) * inv;
        }
        return push(std::move(n));
    }

    /// Row-wise softmax with max subtraction.
    int softmax(int a) {
        const Tensor<T>& ta = value(a);
        require(ta.ndim() == 2, ErrorCategory::invalid_argument, "softmax expects [rows, n]");
        Node n;
        n.kind = Op::kSoftmax;
        n.a = a;
        n.owned = Tensor<T>({ta.rows(), ta.cols()});
        softmax_rows(ta.data.data(), n.owned.data.data(), ta.rows(), ta.cols());
        return push(std::move(n));
    }

    /// GELU, tanh approximation (0.044715 cubic term).
    int gelu(int a) {
        Node n;
        n.kind = Op::kGelu;
        n.a = a;
        n.owned = value(a);
        for (auto& v : n.owned.data) v = gelu_scalar(v);
        return push(std::move(n));
    }

    int silu(int a) {
        Node n;
        n.kind = Op::kSilu;
        n.a = a;
        n.owned = value(a);
        for (auto& v : n.owned.data) v = v * sigmoid(v);
        return push(std::move(n));
    }

    /// Columns [begin, end) of a [n,m] matrix.
    int slice_cols(int a, int begin, int end) {
        const Tensor<T>& ta = value(a);
        require(ta.ndim() == 2 && 0 <= begin && begin < end && end <= ta.cols(),
                ErrorCategory::invalid_argument, "slice_cols out of range");
        Node n;
        n.kind = Op::kSliceCols;
        n.a = a;
        n.i0 = begin;
        n.i1 = end;
        const int w = end - begin;
        n.owned = Tensor<T>({ta.rows(), w});
        for (int r = 0; r < ta.rows(); ++r)
            for (int c = 0; c < w; ++c)
                n.owned.data[size_t(r) * w + c] = ta.data[size_t(r) * ta.cols() + begin + c];
        return push(std::move(n));
    }

    /// [n, H*dk] -> [H, n, dk]
    int split_heads(int a, int heads) {
        const Tensor<T>& ta = value(a);
        require(ta.ndim() == 2 && ta.cols() % heads == 0, ErrorCategory::invalid_argument,
                "split_heads: width not divisible by head count");
        const int n_tok = ta.rows(), dk = ta.cols() / heads;
        Node n;
        n.kind = Op::kSplitHeads;
        n.a = a;
        n.i0 = heads;
        n.owned = Tensor<T>({heads, n_tok, dk});
        for (int h = 0; h < heads; ++h)
            for (int t = 0; t < n_tok; ++t)
                for (int c = 0; c < dk; ++c)
                    n.owned.data[(size_t(h) * n_tok + t) * dk + c] =
                        ta.data[size_t(t) * ta.cols() + h * dk + c];
        return push(std::move(n));
    }

    /// [H, n, dk] -> [n, H*dk]
    int merge_heads(int a) {
        const Tensor<T>& ta = value(a);
        require(ta.ndim() == 3, ErrorCategory::invalid_argument, "merge_heads expects [H,n,dk]");
        const int heads = ta.dim(0), n_tok = ta.dim(1), dk = ta.dim(2);
        Node n;
        n.kind = Op::kMergeHeads;
        n.a = a;
        n.owned = Tensor<T>({n_tok, heads * dk});
        for (int h = 0; h < heads; ++h)
            for (int t = 0; t < n_tok; ++t)
                for (int c = 0; c < dk; ++c)
                    n.owned.data[size_t(t) * heads * dk + h * dk + c] =
                        ta.data[(size_t(h) * n_tok + t) * dk + c];
        return push(std::move(n));
    }

    /// Full (non-causal) scaled dot-product attention per head:
    /// softmax(Q K^T / sqrt(dk)) V over [H, n, dk] inputs.
    int attention(int q, int k, int v) {
        const Tensor<T>& tq = value(q);
        const Tensor<T>& tk = value(k);
        const Tensor<T>& tv = value(v);
        require(tq.ndim() == 3 && tq.same_shape(tk) && tq.same_shape(tv),
                ErrorCategory::invalid_argument, "attention expects three [H,n,dk] tensors");
        const int heads = tq.dim(0), n_tok = tq.dim(1), dk = tq.dim(2);
        Node n;
        n.kind = Op::kAttention;
        n.a = q;
        n.b = k;
        n.c = v;
        n.scalar = T(1) / std::sqrt(T(dk));
        n.owned = Tensor<T>({heads, n_tok, dk});
        n.saved = Tensor<T>({heads, n_tok, n_tok});  // attention probabilities
        std::vector<T> scores(size_t(n_tok) * n_tok);
        for (int h = 0; h < heads; ++h) {
            const size_t off = size_t(h) * n_tok * dk;
            ConstMatMap Q(tq.data.data() + off, n_tok, dk);
            ConstMatMap K(tk.data.data() + off, n_tok, dk);
            ConstMatMap V(tv.data.data() + off, n_tok, dk);
            MatMap S(scores.data(), n_tok, n_tok);
            S.noalias() = Q * K.transpose() * n.scalar;
            T* probs = n.saved.data.data() + size_t(h) * n_tok * n_tok;
            softmax_rows(scores.data(), probs, n_tok, n_tok);
            MatMap(n.owned.data.data() + off, n_tok, dk).noalias() =
                ConstMatMap(probs, n_tok, n_tok) * V;
        }
        return push(std::move(n));
    }

    /// Mean over all elements of (pred - target)^2; scalar node. The target is
    /// captured by value and is not differentiated.
    int mse_loss(int pred, const Tensor<T>& target) {
        const Tensor<T>& tp = value(pred);
        require(tp.same_shape(target), ErrorCategory::invalid_argument,
                "mse_loss shape mismatch " + shape_string(tp) + " vs " + shape_string(target));
        require(tp.numel() > 0, ErrorCategory::invalid_argument, "mse_loss on empty tensor");
        Node n;
        n.kind = Op::kMseLoss;
        n.a = pred;
        n.saved = target;
        T acc = 0;
        for (size_t i = 0; i < tp.numel(); ++i) {
            const T d = tp.data[i] - target.data[i];
            acc += d * d;
        }
        n.owned = Tensor<T>({1}, {acc / T(tp.numel())});
        return push(std::move(n));
    }

    /// Sum of all elements; scalar node.
    int sum(int a) {
        Node n;
        n.kind = Op::kSum;
        n.a = a;
        T acc = 0;
        for (T v : value(a).data) acc += v;
        n.owned = Tensor<T>({1}, {acc});
        return push(std::move(n));
    }

    // ---- access ----

    const Tensor<T>& value(int id) const {
        const Node& n = nodes_[static_cast<size_t>(id)];
        return n.external ? *n.external : n.owned;
    }

    /// Gradient of the last backward() loss w.r.t. node id (zeros if the node
    /// did not influence the loss).
    const Tensor<T>& grad(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.numel() == 0) n.grad = Tensor<T>(value(id).shape);
        return n.grad;
    }

    /// Reverse sweep from a scalar loss node. Single use per recorded pass.
    void backward(int loss) {
        require(!consumed_, ErrorCategory::invalid_argument,
                "tape already consumed by a previous backward()");
        consumed_ = true;
        require(value(loss).numel() == 1, ErrorCategory::invalid_argument,
                "backward() needs a scalar loss node");
        grad_ref(loss).data[0] = T(1);
        for (int id = loss; id >= 0; --id) backprop(id);
    }

    void reset() {
        nodes_.clear();
        consumed_ = false;
    }

    size_t size() const { return nodes_.size(); }

private:
    enum class Op {
        kLeaf,
        kMatMul,
        kAdd,
        kRowAdd,
        kRowMul,
        kScale,
        kLayerNorm,
        kSoftmax,
        kGelu,
        kSilu,
        kSliceCols,
        kSplitHeads,
        kMergeHeads,
        kAttention,
        kMseLoss,
        kSum,
    };

    struct Node {
        Op kind = Op::kLeaf;
        Tensor<T> owned;
        const Tensor<T>* external = nullptr;
        Tensor<T> grad;
        Tensor<T> saved;
        T scalar = 0;
        int a = -1, b = -1, c = -1;
        int i0 = 0, i1 = 0;
    };

    int push(Node&& n) {
#ifndef NDEBUG
        const Tensor<T>& v = n.external ? *n.external : n.owned;
        for (T x : v.data)
            if (!std::isfinite(static_cast<double>(x)))
                fail(ErrorCategory::numeric_error, "non-finite value in forward op");
#endif
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    Tensor<T>& grad_ref(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.numel() == 0) n.grad = Tensor<T>(value(id).shape);
        return n.grad;
    }

    static ConstMatMap cmap(const Tensor<T>& t) {
        return ConstMatMap(t.data.data(), t.rows(), t.cols());
    }
    static MatMap map(Tensor<T>& t) { return MatMap(t.data.data(), t.rows(), t.cols()); }

    static void softmax_rows(const T* in, T* out, int rows, int cols) {
        for (int r = 0; r < rows; ++r) {
            const T* x = in + size_t(r) * cols;
            T* y = out + size_t(r) * cols;
            T mx = x[0];
            for (int c = 1; c < cols; ++c) mx = std::max(mx, x[c]);
            T denom = 0;
            for (int c = 0; c < cols; ++c) {
                y[c] = std::exp(x[c] - mx);
                denom += y[c];
            }
            const T inv = T(1) / denom;
            for (int c = 0; c < cols; ++c) y[c] *= inv;
        }
    }

    static T sigmoid(T x) { return T(1) / (T(1) + std::exp(-x)); }

    static T gelu_scalar(T x) {
        constexpr T kSqrt2OverPi = T(0.7978845608028654);
        constexpr T kCubic = T(0.044715);
        return T(0.5) * x * (T(1) + std::tanh(kSqrt2OverPi * (x + kCubic * x * x * x)));
    }

    void backprop(int id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad.numel() == 0) return;  // not on any path to the loss
        const Tensor<T>& g = n.grad;
        switch (n.kind) {
            case Op::kLeaf:
                break;
            case Op::kMatMul: {
                const Tensor<T>& ta = value(n.a);
                const Tensor<T>& tb = value(n.b);
                map(grad_ref(n.a)).noalias() += cmap(g) * cmap(tb).transpose();
                map(grad_ref(n.b)).noalias() += cmap(ta).transpose() * cmap(g);
                break;
            }
            case Op::kAdd: {
                Tensor<T>& ga = grad_ref(n.a);
                for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
                Tensor<T>& gb = grad_ref(n.b);
                for (size_t i = 0; i < g.numel(); ++i) gb.data[i] += g.data[i];
                break;
            }
            case Op::kRowAdd: {
                Tensor<T>& ga = grad_ref(n.a);
                for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i];
                Tensor<T>& gb = grad_ref(n.b);
                const int m = value(n.a).cols();
                for (int r = 0; r < value(n.a).rows(); ++r)
                    for (int c = 0; c < m; ++c) gb.data[c] += g.data[size_t(r) * m + c];
                break;
            }
            case Op::kRowMul: {
                const Tensor<T>& ta = value(n.a);
                const Tensor<T>& tg = value(n.b);
                Tensor<T>& ga = grad_ref(n.a);
                Tensor<T>& gg = grad_ref(n.b);
                const int m = ta.cols();
                for (int r = 0; r < ta.rows(); ++r)
                    for (int c = 0; c < m; ++c) {
                        const size_t i = size_t(r) * m + c;
                        ga.data[i] += g.data[i] * tg.data[c];
                        gg.data[c] += g.data[i] * ta.data[i];
                    }
                break;
            }
            case Op::kScale: {
                Tensor<T>& ga = grad_ref(n.a);
                for (size_t i = 0; i < g.numel(); ++i) ga.data[i] += g.data[i] * n.scalar;
                break;
            }
            case Op::kLayerNorm: {
                // dx = inv * (dy - mean(dy) - y * mean(dy * y)) per row
                const Tensor<T>& y = n.owned;
                Tensor<T>& ga = grad_ref(n.a);
                const int rows = y.rows(), d = y.cols();
                for (int r = 0; r < rows; ++r) {
                    const T* yr = &y.data[size_t(r) * d];
                    const T* gr = &g.data[size_t(r) * d];
                    T* gar = &ga.data[size_t(r) * d];
                    T mg = 0, mgy = 0;
                    for (int c = 0; c < d; ++c) {
                        mg += gr[c];
                        mgy += gr[c] * yr[c];
                    }
                    mg /= T(d);
                    mgy /= T(d);
                    const T inv = n.saved.data[r];
                    for (int c = 0; c < d; ++c) gar[c] += inv * (gr[c] - mg - yr[c] * mgy);
                }
                break;
            }
            case Op::kSoftmax: {
                const Tensor<T>& y = n.owned;
                Tensor<T>& ga = grad_ref(n.a);
                const int rows = y.rows(), m = y.cols();
                for (int r = 0; r < rows; ++r) {
                    const T* yr = &y.data[size_t(r) * m];
                    const T* gr = &g.data[size_t(r) * m];
                    T dot = 0;
                    for (int c = 0; c < m; ++c) dot += yr[c] * gr[c];
                    T* gar = &ga.data[size_t(r) * m];
                    for (int c = 0; c < m; ++c) gar[c] += yr[c] * (gr[c] - dot);
                }
                break;
            }
            case Op::kGelu: {
                const Tensor<T>& x = value(n.a);
                Tensor<T>& ga = grad_ref(n.a);
                constexpr T kSqrt2OverPi = T(0.7978845608028654);
                constexpr T kCubic = T(0.044715);
                for (size_t i = 0; i < x.numel(); ++i) {
                    const T xi = x.data[i];
                    const T u = kSqrt2OverPi * (xi + kCubic * xi * xi * xi);
                    const T th = std::tanh(u);
                    const T du = kSqrt2OverPi * (T(1) + T(3) * kCubic * xi * xi);
                    const T d = T(0.5) * (T(1) + th) + T(0.5) * xi * (T(1) - th * th) * du;
                    ga.data[i] += g.data[i] * d;
                }
                break;
            }
            case Op::kSilu: {
                const Tensor<T>& x = value(n.a);
                Tensor<T>& ga = grad_ref(n.a);
                for (size_t i = 0; i < x.numel(); ++i) {
                    const T s = sigmoid(x.data[i]);
                    ga.data[i] += g.data[i] * (s * (T(1) + x.data[i] * (T(1) - s)));
                }
                break;
            }
            case Op::kSliceCols: {
                Tensor<T>& ga = grad_ref(n.a);
                const int src_cols = value(n.a).cols();
                const int w = n.i1 - n.i0;
                for (int r = 0; r < value(n.a).rows(); ++r)
                    for (int c = 0; c < w; ++c)
                        ga.data[size_t(r) * src_cols + n.i0 + c] += g.data[size_t(r) * w + c];
                break;
            }
            case Op::kSplitHeads: {
                Tensor<T>& ga = grad_ref(n.a);
                const int heads = n.i0;
                const int n_tok = value(n.a).rows();
                const int dk = value(n.a).cols() / heads;
                for (int h = 0; h < heads; ++h)
                    for (int t = 0; t < n_tok; ++t)
                        for (int c = 0; c < dk; ++c)
                            ga.data[size_t(t) * heads * dk + h * dk + c] +=
                                g.data[(size_t(h) * n_tok + t) * dk + c];
                break;
            }
            case Op::kMergeHeads: {
                Tensor<T>& ga = grad_ref(n.a);
                const Tensor<T>& src = value(n.a);
                const int heads = src.dim(0), n_tok = src.dim(1), dk = src.dim(2);
                for (int h = 0; h < heads; ++h)
                    for (int t = 0; t < n_tok; ++t)
                        for (int c = 0; c < dk; ++c)
                            ga.data[(size_t(h) * n_tok + t) * dk + c] +=
                                g.data[size_t(t) * heads * dk + h * dk + c];
                break;
            }
            case Op::kAttention: {
                const Tensor<T>& tq = value(n.a);
                const Tensor<T>& tk = value(n.b);
                const Tensor<T>& tv = value(n.c);
                Tensor<T>& gq = grad_ref(n.a);
                Tensor<T>& gk = grad_ref(n.b);
                Tensor<T>& gv = grad_ref(n.c);
                const int heads = tq.dim(0), n_tok = tq.dim(1), dk = tq.dim(2);
                Mat dP(n_tok, n_tok), dS(n_tok, n_tok);
                for (int h = 0; h < heads; ++h) {
                    const size_t off = size_t(h) * n_tok * dk;
                    ConstMatMap Q(tq.data.data() + off, n_tok, dk);
                    ConstMatMap K(tk.data.data() + off, n_tok, dk);
                    ConstMatMap V(tv.data.data() + off, n_tok, dk);
                    ConstMatMap P(n.saved.data.data() + size_t(h) * n_tok * n_tok, n_tok, n_tok);
                    ConstMatMap dO(g.data.data() + off, n_tok, dk);
                    MatMap(gv.data.data() + off, n_tok, dk).noalias() += P.transpose() * dO;
                    dP.noalias() = dO * V.transpose();
                    // softmax backward, then undo the 1/sqrt(dk) scale
                    for (int r = 0; r < n_tok; ++r) {
                        T dot = 0;
                        for (int c = 0; c < n_tok; ++c) dot += dP(r, c) * P(r, c);
                        for (int c = 0; c < n_tok; ++c)
                            dS(r, c) = P(r, c) * (dP(r, c) - dot) * n.scalar;
                    }
                    MatMap(gq.data.data() + off, n_tok, dk).noalias() += dS * K;
                    MatMap(gk.data.data() + off, n_tok, dk).noalias() += dS.transpose() * Q;
                }
                break;
            }
            case Op::kMseLoss: {
                const Tensor<T>& p = value(n.a);
                Tensor<T>& ga = grad_ref(n.a);
                const T s = g.data[0] * T(2) / T(p.numel());
                for (size_t i = 0; i < p.numel(); ++i)
                    ga.data[i] += s * (p.data[i] - n.saved.data[i]);
                break;
            }
            case Op::kSum: {
                Tensor<T>& ga = grad_ref(n.a);
                for (auto& v : ga.data) v += g.data[0];
                break;
            }
        }
    }

    std::vector<Node> nodes_;
    bool consumed_ = false;
};

/// y = x W + b recorded on the graph.
template <typename T>
int linear(Graph<T>& g, int x, int w, int b) {
    return g.row_add(g.matmul(x, w), b);
}

}  // namespace tacit
