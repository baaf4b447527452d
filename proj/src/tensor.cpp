#include "dla/tensor.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace dla {

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace {

[[noreturn]] void shape_error(const char* op, const std::vector<int>& a,
                              const std::vector<int>& b) {
    throw std::invalid_argument(std::string(op) + ": incompatible shapes " + shape_str(a) +
                                " vs " + shape_str(b));
}

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

} // namespace

template <typename T>
typename Graph<T>::Ref Graph<T>::push(Tensor<T> value, bool needs_grad,
                                      std::function<void()> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size() - 1);
}

template <typename T>
Tensor<T>& Graph<T>::gbuf(Ref r) {
    return nodes_[r].grad;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::input(Tensor<T> value, bool needs_grad) {
    return push(std::move(value), needs_grad);
}

template <typename T>
typename Graph<T>::Ref Graph<T>::leaf(const Tensor<T>* value, bool needs_grad) {
    Node n;
    n.external = value;
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<Ref>(nodes_.size() - 1);
}

template <typename T>
typename Graph<T>::Ref Graph<T>::scalar(T v) {
    return push(Tensor<T>({1}, {v}), false);
}

template <typename T>
typename Graph<T>::Ref Graph<T>::add(Ref a, Ref b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    Tensor<T> out;
    out.shape = va.shape;
    out.data = va.data;
    bool broadcast = false;
    if (vb.shape == va.shape) {
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    } else if (vb.ndim() == 1 && va.numel() % vb.dim(0) == 0 &&
               va.shape.back() == vb.dim(0)) {
        broadcast = true;
        int n = vb.dim(0);
        int64_t rows = va.numel() / n;
        for (int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < n; ++j) out.data[r * n + j] += vb.data[j];
    } else {
        shape_error("add", va.shape, vb.shape);
    }
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, b, o, broadcast]() {
            const Tensor<T>& go = nodes_[o].grad;
            if (nodes_[a].needs_grad) {
                Tensor<T>& ga = gbuf(a);
                for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
            }
            if (nodes_[b].needs_grad) {
                Tensor<T>& gb = gbuf(b);
                if (!broadcast) {
                    for (size_t i = 0; i < go.data.size(); ++i) gb.data[i] += go.data[i];
                } else {
                    int n = static_cast<int>(gb.data.size());
                    int64_t rows = static_cast<int64_t>(go.data.size()) / n;
                    for (int64_t r = 0; r < rows; ++r)
                        for (int j = 0; j < n; ++j) gb.data[j] += go.data[r * n + j];
                }
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::sub(Ref a, Ref b) {
    return add(a, scale(b, T(-1)));
}

template <typename T>
typename Graph<T>::Ref Graph<T>::mul(Ref a, Ref b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    if (va.shape != vb.shape) shape_error("mul", va.shape, vb.shape);
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = va.data[i] * vb.data[i];
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, b, o]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& va = val(a);
            const Tensor<T>& vb = val(b);
            if (nodes_[a].needs_grad) {
                Tensor<T>& ga = gbuf(a);
                for (size_t i = 0; i < go.data.size(); ++i)
                    ga.data[i] += go.data[i] * vb.data[i];
            }
            if (nodes_[b].needs_grad) {
                Tensor<T>& gb = gbuf(b);
                for (size_t i = 0; i < go.data.size(); ++i)
                    gb.data[i] += go.data[i] * va.data[i];
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::div(Ref a, Ref b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    if (va.shape != vb.shape) shape_error("div", va.shape, vb.shape);
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = va.data[i] / vb.data[i];
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, b, o]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& va = val(a);
            const Tensor<T>& vb = val(b);
            if (nodes_[a].needs_grad) {
                Tensor<T>& ga = gbuf(a);
                for (size_t i = 0; i < go.data.size(); ++i)
                    ga.data[i] += go.data[i] / vb.data[i];
            }
            if (nodes_[b].needs_grad) {
                Tensor<T>& gb = gbuf(b);
                for (size_t i = 0; i < go.data.size(); ++i)
                    gb.data[i] -= go.data[i] * va.data[i] / (vb.data[i] * vb.data[i]);
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::minimum(Ref a, Ref b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    if (va.shape != vb.shape) shape_error("minimum", va.shape, vb.shape);
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = std::min(va.data[i], vb.data[i]);
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, b, o]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& va = val(a);
            const Tensor<T>& vb = val(b);
            for (size_t i = 0; i < go.data.size(); ++i) {
                bool pick_a = va.data[i] <= vb.data[i];
                if (pick_a && nodes_[a].needs_grad) gbuf(a).data[i] += go.data[i];
                if (!pick_a && nodes_[b].needs_grad) gbuf(b).data[i] += go.data[i];
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::maximum(Ref a, Ref b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    if (va.shape != vb.shape) shape_error("maximum", va.shape, vb.shape);
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = std::max(va.data[i], vb.data[i]);
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, b, o]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& va = val(a);
            const Tensor<T>& vb = val(b);
            for (size_t i = 0; i < go.data.size(); ++i) {
                bool pick_a = va.data[i] >= vb.data[i];
                if (pick_a && nodes_[a].needs_grad) gbuf(a).data[i] += go.data[i];
                if (!pick_a && nodes_[b].needs_grad) gbuf(b).data[i] += go.data[i];
            }
        };
    return o;
}

// x is the stored input, y the stored output, available to both expressions
#define DLA_UNARY_OP(NAME, FWD, DERIV)                                                   \
    template <typename T>                                                                \
    typename Graph<T>::Ref Graph<T>::NAME(Ref a) {                                       \
        const Tensor<T>& va = val(a);                                                    \
        Tensor<T> out;                                                                   \
        out.shape = va.shape;                                                            \
        out.data.resize(va.data.size());                                                 \
        for (size_t i = 0; i < out.data.size(); ++i) {                                   \
            T x = va.data[i];                                                            \
            out.data[i] = (FWD);                                                         \
        }                                                                                \
        bool ng = nodes_[a].needs_grad;                                                  \
        Ref o = push(std::move(out), ng);                                                \
        if (ng)                                                                          \
            nodes_[o].back = [this, a, o]() {                                            \
                const Tensor<T>& go = nodes_[o].grad;                                    \
                const Tensor<T>& vo = nodes_[o].value;                                   \
                const Tensor<T>& va = val(a);                                            \
                Tensor<T>& ga = gbuf(a);                                                 \
                for (size_t i = 0; i < go.data.size(); ++i) {                            \
                    T x = va.data[i];                                                    \
                    T y = vo.data[i];                                                    \
                    (void)x;                                                             \
                    (void)y;                                                             \
                    ga.data[i] += go.data[i] * (DERIV);                                  \
                }                                                                        \
            };                                                                           \
        return o;                                                                        \
    }

DLA_UNARY_OP(relu, x > T(0) ? x : T(0), x > T(0) ? T(1) : T(0))
DLA_UNARY_OP(sigmoid, T(1) / (T(1) + std::exp(-x)), y*(T(1) - y))
DLA_UNARY_OP(abs, std::abs(x), x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)))
DLA_UNARY_OP(log, std::log(x), T(1) / x)

#undef DLA_UNARY_OP

template <typename T>
typename Graph<T>::Ref Graph<T>::gelu(Ref a) {
    const Tensor<T>& va = val(a);
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    const T inv_sqrt2 = T(0.7071067811865475);
    for (size_t i = 0; i < out.data.size(); ++i) {
        T x = va.data[i];
        out.data[i] = T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2));
    }
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& va = val(a);
            Tensor<T>& ga = gbuf(a);
            const T inv_sqrt2 = T(0.7071067811865475);
            const T inv_sqrt2pi = T(0.3989422804014327);
            for (size_t i = 0; i < go.data.size(); ++i) {
                T x = va.data[i];
                T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
                T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x * x);
                ga.data[i] += go.data[i] * (cdf + x * pdf);
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::inverse_sigmoid(Ref a) {
    const Tensor<T>& va = val(a);
    const T eps = T(1e-5);
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    for (size_t i = 0; i < out.data.size(); ++i) {
        T p = std::clamp(va.data[i], eps, T(1) - eps);
        out.data[i] = std::log(p / (T(1) - p));
    }
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& va = val(a);
            Tensor<T>& ga = gbuf(a);
            const T eps = T(1e-5);
            for (size_t i = 0; i < go.data.size(); ++i) {
                T p = va.data[i];
                if (p <= eps || p >= T(1) - eps) continue;
                ga.data[i] += go.data[i] / (p * (T(1) - p));
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::scale(Ref a, T s) {
    const Tensor<T>& va = val(a);
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = va.data[i] * s;
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o, s]() {
            const Tensor<T>& go = nodes_[o].grad;
            Tensor<T>& ga = gbuf(a);
            for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i] * s;
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::add_scalar(Ref a, T s) {
    const Tensor<T>& va = val(a);
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = va.data[i] + s;
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o]() {
            const Tensor<T>& go = nodes_[o].grad;
            Tensor<T>& ga = gbuf(a);
            for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::clamp_min(Ref a, T lo) {
    const Tensor<T>& va = val(a);
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = std::max(va.data[i], lo);
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o, lo]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& va = val(a);
            Tensor<T>& ga = gbuf(a);
            for (size_t i = 0; i < go.data.size(); ++i)
                if (va.data[i] > lo) ga.data[i] += go.data[i];
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::reshape(Ref a, std::vector<int> shape) {
    const Tensor<T>& va = val(a);
    if (Tensor<T>::numel_of(shape) != va.numel()) shape_error("reshape", va.shape, shape);
    Tensor<T> out;
    out.shape = std::move(shape);
    out.data = va.data;
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o]() {
            const Tensor<T>& go = nodes_[o].grad;
            Tensor<T>& ga = gbuf(a);
            for (size_t i = 0; i < go.data.size(); ++i) ga.data[i] += go.data[i];
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::slice_rows(Ref a, int begin, int end) {
    const Tensor<T>& va = val(a);
    int rows = va.dim(0);
    if (begin < 0 || end > rows || begin > end)
        throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + "," +
                                    std::to_string(end) + ") outside " + shape_str(va.shape));
    int64_t stride = va.numel() / rows;
    Tensor<T> out;
    out.shape = va.shape;
    out.shape[0] = end - begin;
    out.data.assign(va.data.begin() + begin * stride, va.data.begin() + end * stride);
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o, begin, stride]() {
            const Tensor<T>& go = nodes_[o].grad;
            Tensor<T>& ga = gbuf(a);
            for (size_t i = 0; i < go.data.size(); ++i)
                ga.data[begin * stride + i] += go.data[i];
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::slice_cols(Ref a, int begin, int end) {
    const Tensor<T>& va = val(a);
    int n = va.shape.back();
    if (begin < 0 || end > n || begin > end)
        throw std::invalid_argument("slice_cols: range outside " + shape_str(va.shape));
    int64_t rows = va.numel() / n;
    int w = end - begin;
    Tensor<T> out;
    out.shape = va.shape;
    out.shape.back() = w;
    out.data.resize(rows * w);
    for (int64_t r = 0; r < rows; ++r)
        std::copy(va.data.begin() + r * n + begin, va.data.begin() + r * n + end,
                  out.data.begin() + r * w);
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o, begin, n, w, rows]() {
            const Tensor<T>& go = nodes_[o].grad;
            Tensor<T>& ga = gbuf(a);
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < w; ++j)
                    ga.data[r * n + begin + j] += go.data[r * w + j];
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::concat_rows(const std::vector<Ref>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
    const Tensor<T>& first = val(parts[0]);
    Tensor<T> out;
    out.shape = first.shape;
    out.shape[0] = 0;
    bool ng = false;
    for (Ref p : parts) {
        const Tensor<T>& vp = val(p);
        std::vector<int> trailing_a(first.shape.begin() + 1, first.shape.end());
        std::vector<int> trailing_b(vp.shape.begin() + 1, vp.shape.end());
        if (trailing_a != trailing_b) shape_error("concat_rows", first.shape, vp.shape);
        out.shape[0] += vp.dim(0);
        out.data.insert(out.data.end(), vp.data.begin(), vp.data.end());
        ng = ng || nodes_[p].needs_grad;
    }
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, parts, o]() {
            const Tensor<T>& go = nodes_[o].grad;
            int64_t off = 0;
            for (Ref p : parts) {
                int64_t sz = val(p).numel();
                if (nodes_[p].needs_grad) {
                    Tensor<T>& gp = gbuf(p);
                    for (int64_t i = 0; i < sz; ++i) gp.data[i] += go.data[off + i];
                }
                off += sz;
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::concat_cols(const std::vector<Ref>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
    const Tensor<T>& first = val(parts[0]);
    int last = first.shape.back();
    int64_t rows = first.numel() / last;
    int total = 0;
    bool ng = false;
    for (Ref p : parts) {
        const Tensor<T>& vp = val(p);
        if (vp.numel() / vp.shape.back() != rows)
            shape_error("concat_cols", first.shape, vp.shape);
        total += vp.shape.back();
        ng = ng || nodes_[p].needs_grad;
    }
    Tensor<T> out;
    out.shape = first.shape;
    out.shape.back() = total;
    out.data.resize(rows * total);
    int off = 0;
    for (Ref p : parts) {
        const Tensor<T>& vp = val(p);
        int w = vp.shape.back();
        for (int64_t r = 0; r < rows; ++r)
            std::copy(vp.data.begin() + r * w, vp.data.begin() + (r + 1) * w,
                      out.data.begin() + r * total + off);
        off += w;
    }
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, parts, o, rows, total]() {
            const Tensor<T>& go = nodes_[o].grad;
            int off = 0;
            for (Ref p : parts) {
                int w = val(p).shape.back();
                if (nodes_[p].needs_grad) {
                    Tensor<T>& gp = gbuf(p);
                    for (int64_t r = 0; r < rows; ++r)
                        for (int j = 0; j < w; ++j)
                            gp.data[r * w + j] += go.data[r * total + off + j];
                }
                off += w;
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::gather_rows(Ref a, std::vector<int> idx) {
    const Tensor<T>& va = val(a);
    int rows = va.dim(0);
    int64_t stride = va.numel() / rows;
    for (int i : idx)
        if (i < 0 || i >= rows)
            throw std::invalid_argument("gather_rows: index " + std::to_string(i) +
                                        " outside " + shape_str(va.shape));
    Tensor<T> out;
    out.shape = va.shape;
    out.shape[0] = static_cast<int>(idx.size());
    out.data.resize(idx.size() * stride);
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(va.data.begin() + idx[r] * stride, va.data.begin() + (idx[r] + 1) * stride,
                  out.data.begin() + r * stride);
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o, idx = std::move(idx), stride]() {
            const Tensor<T>& go = nodes_[o].grad;
            Tensor<T>& ga = gbuf(a);
            for (size_t r = 0; r < idx.size(); ++r)
                for (int64_t j = 0; j < stride; ++j)
                    ga.data[idx[r] * stride + j] += go.data[r * stride + j];
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::repeat_rows(Ref a, int times) {
    const Tensor<T>& va = val(a);
    if (va.dim(0) != 1) throw std::invalid_argument("repeat_rows: leading extent must be 1");
    std::vector<int> idx(times, 0);
    return gather_rows(a, std::move(idx));
}

template <typename T>
typename Graph<T>::Ref Graph<T>::matmul(Ref a, Ref b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(0))
        shape_error("matmul", va.shape, vb.shape);
    int m = va.dim(0), k = va.dim(1), n = vb.dim(1);
    Tensor<T> out({m, n});
    EMap<T>(out.data.data(), m, n) = ECMap<T>(va.data.data(), m, k) *
                                     ECMap<T>(vb.data.data(), k, n);
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, b, o, m, k, n]() {
            const Tensor<T>& go = nodes_[o].grad;
            ECMap<T> gmap(go.data.data(), m, n);
            if (nodes_[a].needs_grad) {
                Tensor<T>& ga = gbuf(a);
                EMap<T>(ga.data.data(), m, k) +=
                    gmap * ECMap<T>(val(b).data.data(), k, n).transpose();
            }
            if (nodes_[b].needs_grad) {
                Tensor<T>& gb = gbuf(b);
                EMap<T>(gb.data.data(), k, n) +=
                    ECMap<T>(val(a).data.data(), m, k).transpose() * gmap;
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::matmul_nt(Ref a, Ref b) {
    const Tensor<T>& va = val(a);
    const Tensor<T>& vb = val(b);
    if (va.ndim() != 2 || vb.ndim() != 2 || va.dim(1) != vb.dim(1))
        shape_error("matmul_nt", va.shape, vb.shape);
    int m = va.dim(0), k = va.dim(1), n = vb.dim(0);
    Tensor<T> out({m, n});
    EMap<T>(out.data.data(), m, n) = ECMap<T>(va.data.data(), m, k) *
                                     ECMap<T>(vb.data.data(), n, k).transpose();
    bool ng = nodes_[a].needs_grad || nodes_[b].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, b, o, m, k, n]() {
            const Tensor<T>& go = nodes_[o].grad;
            ECMap<T> gmap(go.data.data(), m, n);
            if (nodes_[a].needs_grad) {
                Tensor<T>& ga = gbuf(a);
                EMap<T>(ga.data.data(), m, k) += gmap * ECMap<T>(val(b).data.data(), n, k);
            }
            if (nodes_[b].needs_grad) {
                Tensor<T>& gb = gbuf(b);
                EMap<T>(gb.data.data(), n, k) +=
                    gmap.transpose() * ECMap<T>(val(a).data.data(), m, k);
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::linear(Ref x, Ref w, Ref b) {
    const Tensor<T>& vx = val(x);
    const Tensor<T>& vw = val(w);
    const Tensor<T>& vb = val(b);
    if (vx.ndim() != 2 || vw.ndim() != 2 || vx.dim(1) != vw.dim(0) || vb.ndim() != 1 ||
        vb.dim(0) != vw.dim(1))
        shape_error("linear", vx.shape, vw.shape);
    int m = vx.dim(0), k = vx.dim(1), n = vw.dim(1);
    Tensor<T> out({m, n});
    EMap<T> omap(out.data.data(), m, n);
    omap = ECMap<T>(vx.data.data(), m, k) * ECMap<T>(vw.data.data(), k, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) += vb.data[j];
    bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, x, w, b, o, m, k, n]() {
            const Tensor<T>& go = nodes_[o].grad;
            ECMap<T> gmap(go.data.data(), m, n);
            if (nodes_[x].needs_grad)
                EMap<T>(gbuf(x).data.data(), m, k) +=
                    gmap * ECMap<T>(val(w).data.data(), k, n).transpose();
            if (nodes_[w].needs_grad)
                EMap<T>(gbuf(w).data.data(), k, n) +=
                    ECMap<T>(val(x).data.data(), m, k).transpose() * gmap;
            if (nodes_[b].needs_grad) {
                Tensor<T>& gb = gbuf(b);
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) gb.data[j] += go.data[i * n + j];
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::sum(Ref a) {
    const Tensor<T>& va = val(a);
    T acc = T(0);
    for (T v : va.data) acc += v;
    bool ng = nodes_[a].needs_grad;
    Ref o = push(Tensor<T>({1}, {acc}), ng);
    if (ng)
        nodes_[o].back = [this, a, o]() {
            T g = nodes_[o].grad.data[0];
            Tensor<T>& ga = gbuf(a);
            for (T& v : ga.data) v += g;
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::mean(Ref a) {
    const Tensor<T>& va = val(a);
    return scale(sum(a), T(1) / static_cast<T>(va.numel()));
}

template <typename T>
typename Graph<T>::Ref Graph<T>::sum_rows(Ref a) {
    const Tensor<T>& va = val(a);
    if (va.ndim() != 2) throw std::invalid_argument("sum_rows: rank-2 input required");
    int m = va.dim(0), n = va.dim(1);
    Tensor<T> out({m});
    for (int i = 0; i < m; ++i) {
        T acc = T(0);
        for (int j = 0; j < n; ++j) acc += va.at(i, j);
        out.data[i] = acc;
    }
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o, m, n]() {
            const Tensor<T>& go = nodes_[o].grad;
            Tensor<T>& ga = gbuf(a);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) ga.data[i * n + j] += go.data[i];
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::softmax(Ref a) {
    const Tensor<T>& va = val(a);
    int n = va.shape.back();
    int64_t rows = va.numel() / n;
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = va.data.data() + r * n;
        T* y = out.data.data() + r * n;
        T mx = x[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        T z = T(0);
        for (int j = 0; j < n; ++j) {
            y[j] = std::exp(x[j] - mx);
            z += y[j];
        }
        for (int j = 0; j < n; ++j) y[j] /= z;
    }
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o, rows, n]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& vo = nodes_[o].value;
            Tensor<T>& ga = gbuf(a);
            for (int64_t r = 0; r < rows; ++r) {
                const T* y = vo.data.data() + r * n;
                const T* g = go.data.data() + r * n;
                T dot = T(0);
                for (int j = 0; j < n; ++j) dot += y[j] * g[j];
                for (int j = 0; j < n; ++j) ga.data[r * n + j] += y[j] * (g[j] - dot);
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::log_softmax(Ref a) {
    const Tensor<T>& va = val(a);
    int n = va.shape.back();
    int64_t rows = va.numel() / n;
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = va.data.data() + r * n;
        T* y = out.data.data() + r * n;
        T mx = x[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        T z = T(0);
        for (int j = 0; j < n; ++j) z += std::exp(x[j] - mx);
        T lz = std::log(z) + mx;
        for (int j = 0; j < n; ++j) y[j] = x[j] - lz;
    }
    bool ng = nodes_[a].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, o, rows, n]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& vo = nodes_[o].value;
            Tensor<T>& ga = gbuf(a);
            for (int64_t r = 0; r < rows; ++r) {
                const T* y = vo.data.data() + r * n;
                const T* g = go.data.data() + r * n;
                T gsum = T(0);
                for (int j = 0; j < n; ++j) gsum += g[j];
                for (int j = 0; j < n; ++j)
                    ga.data[r * n + j] += g[j] - std::exp(y[j]) * gsum;
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::layer_norm(Ref a, Ref gamma, Ref beta, T eps) {
    const Tensor<T>& va = val(a);
    int n = va.shape.back();
    int64_t rows = va.numel() / n;
    const Tensor<T>& vg = val(gamma);
    const Tensor<T>& vb = val(beta);
    if (vg.numel() != n || vb.numel() != n) shape_error("layer_norm", va.shape, vg.shape);
    Tensor<T> out;
    out.shape = va.shape;
    out.data.resize(va.data.size());
    Tensor<T> xhat;
    xhat.shape = va.shape;
    xhat.data.resize(va.data.size());
    Tensor<T> inv_std({static_cast<int>(rows)});
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = va.data.data() + r * n;
        T mu = T(0);
        for (int j = 0; j < n; ++j) mu += x[j];
        mu /= n;
        T var = T(0);
        for (int j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= n;
        T is = T(1) / std::sqrt(var + eps);
        inv_std.data[r] = is;
        for (int j = 0; j < n; ++j) {
            T h = (x[j] - mu) * is;
            xhat.data[r * n + j] = h;
            out.data[r * n + j] = vg.data[j] * h + vb.data[j];
        }
    }
    bool ng = nodes_[a].needs_grad || nodes_[gamma].needs_grad || nodes_[beta].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, a, gamma, beta, o, rows, n, xhat = std::move(xhat),
                          inv_std = std::move(inv_std)]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& vg = val(gamma);
            for (int64_t r = 0; r < rows; ++r) {
                const T* g = go.data.data() + r * n;
                const T* h = xhat.data.data() + r * n;
                if (nodes_[gamma].needs_grad) {
                    Tensor<T>& gg = gbuf(gamma);
                    for (int j = 0; j < n; ++j) gg.data[j] += g[j] * h[j];
                }
                if (nodes_[beta].needs_grad) {
                    Tensor<T>& gb = gbuf(beta);
                    for (int j = 0; j < n; ++j) gb.data[j] += g[j];
                }
                if (nodes_[a].needs_grad) {
                    Tensor<T>& ga = gbuf(a);
                    T sum_dh = T(0), sum_dh_h = T(0);
                    for (int j = 0; j < n; ++j) {
                        T dh = g[j] * vg.data[j];
                        sum_dh += dh;
                        sum_dh_h += dh * h[j];
                    }
                    T is = inv_std.data[r];
                    for (int j = 0; j < n; ++j) {
                        T dh = g[j] * vg.data[j];
                        ga.data[r * n + j] +=
                            is * (dh - sum_dh / n - h[j] * sum_dh_h / n);
                    }
                }
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::cross_entropy(Ref logits, std::vector<int> targets) {
    const Tensor<T>& vl = val(logits);
    if (vl.ndim() != 2 || vl.dim(0) != static_cast<int>(targets.size()))
        throw std::invalid_argument("cross_entropy: logits " + shape_str(vl.shape) + " vs " +
                                    std::to_string(targets.size()) + " targets");
    int m = vl.dim(0), n = vl.dim(1);
    for (int t : targets)
        if (t < 0 || t >= n)
            throw std::invalid_argument("cross_entropy: target " + std::to_string(t) +
                                        " outside " + std::to_string(n) + " classes");
    Tensor<T> probs({m, n});
    T loss = T(0);
    for (int i = 0; i < m; ++i) {
        const T* x = vl.data.data() + static_cast<int64_t>(i) * n;
        T mx = x[0];
        for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
        T z = T(0);
        for (int j = 0; j < n; ++j) {
            probs.at(i, j) = std::exp(x[j] - mx);
            z += probs.at(i, j);
        }
        for (int j = 0; j < n; ++j) probs.at(i, j) /= z;
        loss -= std::log(std::max(probs.at(i, targets[i]), std::numeric_limits<T>::min()));
    }
    loss /= static_cast<T>(m);
    bool ng = nodes_[logits].needs_grad;
    Ref o = push(Tensor<T>({1}, {loss}), ng);
    if (ng)
        nodes_[o].back = [this, logits, o, m, n, probs = std::move(probs),
                          targets = std::move(targets)]() {
            T g = nodes_[o].grad.data[0] / static_cast<T>(m);
            Tensor<T>& gl = gbuf(logits);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    T p = probs.at(i, j);
                    gl.data[static_cast<int64_t>(i) * n + j] +=
                        g * (p - (j == targets[i] ? T(1) : T(0)));
                }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::conv2d(Ref x, Ref w, Ref b, int stride, int pad) {
    const Tensor<T>& vx = val(x);
    const Tensor<T>& vw = val(w);
    const Tensor<T>& vb = val(b);
    if (vx.ndim() != 3 || vw.ndim() != 4 || vx.dim(2) != vw.dim(2))
        shape_error("conv2d", vx.shape, vw.shape);
    int h = vx.dim(0), wid = vx.dim(1), cin = vx.dim(2);
    int kh = vw.dim(0), kw = vw.dim(1), cout = vw.dim(3);
    if (vb.numel() != cout) shape_error("conv2d bias", vb.shape, vw.shape);
    int ho = (h + 2 * pad - kh) / stride + 1;
    int wo = (wid + 2 * pad - kw) / stride + 1;
    if (ho <= 0 || wo <= 0)
        throw std::invalid_argument("conv2d: kernel larger than padded input");

    int64_t cols = static_cast<int64_t>(kh) * kw * cin;
    Tensor<T> colmat({ho * wo, static_cast<int>(cols)});
    for (int oy = 0; oy < ho; ++oy)
        for (int ox = 0; ox < wo; ++ox) {
            T* dst = colmat.data.data() + (static_cast<int64_t>(oy) * wo + ox) * cols;
            for (int ky = 0; ky < kh; ++ky) {
                int iy = oy * stride + ky - pad;
                for (int kx = 0; kx < kw; ++kx) {
                    int ix = ox * stride + kx - pad;
                    T* cell = dst + (static_cast<int64_t>(ky) * kw + kx) * cin;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= wid) {
                        std::fill(cell, cell + cin, T(0));
                    } else {
                        const T* src =
                            vx.data.data() + (static_cast<int64_t>(iy) * wid + ix) * cin;
                        std::copy(src, src + cin, cell);
                    }
                }
            }
        }

    Tensor<T> out({ho, wo, cout});
    EMap<T> omap(out.data.data(), ho * wo, cout);
    omap = ECMap<T>(colmat.data.data(), ho * wo, cols) *
           ECMap<T>(vw.data.data(), cols, cout);
    for (int64_t r = 0; r < static_cast<int64_t>(ho) * wo; ++r)
        for (int c = 0; c < cout; ++c) out.data[r * cout + c] += vb.data[c];

    bool ng = nodes_[x].needs_grad || nodes_[w].needs_grad || nodes_[b].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, x, w, b, o, stride, pad, h, wid, cin, kh, kw, cout, ho, wo,
                          cols, colmat = std::move(colmat)]() {
            const Tensor<T>& go = nodes_[o].grad;
            ECMap<T> gmap(go.data.data(), static_cast<int64_t>(ho) * wo, cout);
            if (nodes_[w].needs_grad)
                EMap<T>(gbuf(w).data.data(), cols, cout) +=
                    ECMap<T>(colmat.data.data(), static_cast<int64_t>(ho) * wo, cols)
                        .transpose() *
                    gmap;
            if (nodes_[b].needs_grad) {
                Tensor<T>& gb = gbuf(b);
                for (int64_t r = 0; r < static_cast<int64_t>(ho) * wo; ++r)
                    for (int c = 0; c < cout; ++c) gb.data[c] += go.data[r * cout + c];
            }
            if (nodes_[x].needs_grad) {
                Tensor<T> gcol({ho * wo, static_cast<int>(cols)});
                EMap<T>(gcol.data.data(), static_cast<int64_t>(ho) * wo, cols) =
                    gmap * ECMap<T>(val(w).data.data(), cols, cout).transpose();
                Tensor<T>& gx = gbuf(x);
                for (int oy = 0; oy < ho; ++oy)
                    for (int ox = 0; ox < wo; ++ox) {
                        const T* src =
                            gcol.data.data() + (static_cast<int64_t>(oy) * wo + ox) * cols;
                        for (int ky = 0; ky < kh; ++ky) {
                            int iy = oy * stride + ky - pad;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                int ix = ox * stride + kx - pad;
                                if (ix < 0 || ix >= wid) continue;
                                const T* cell =
                                    src + (static_cast<int64_t>(ky) * kw + kx) * cin;
                                T* dst = gx.data.data() +
                                         (static_cast<int64_t>(iy) * wid + ix) * cin;
                                for (int c = 0; c < cin; ++c) dst[c] += cell[c];
                            }
                        }
                    }
            }
        };
    return o;
}

namespace {

// corner weights for one sample; normalized coords align cell centers at
// (i + 0.5) / extent
template <typename T>
struct BilinearCell {
    int x0, y0;
    T wx, wy;
};

template <typename T>
BilinearCell<T> bilinear_cell(T xn, T yn, int w, int h) {
    T px = xn * static_cast<T>(w) - T(0.5);
    T py = yn * static_cast<T>(h) - T(0.5);
    T fx = std::floor(px), fy = std::floor(py);
    return {static_cast<int>(fx), static_cast<int>(fy), px - fx, py - fy};
}

} // namespace

template <typename T>
typename Graph<T>::Ref Graph<T>::bilinear_sample(Ref map, Ref points) {
    const Tensor<T>& vm = val(map);
    const Tensor<T>& vp = val(points);
    if (vm.ndim() != 3 || vp.ndim() != 2 || vp.dim(1) != 2)
        shape_error("bilinear_sample", vm.shape, vp.shape);
    int h = vm.dim(0), w = vm.dim(1), c = vm.dim(2);
    int np = vp.dim(0);
    Tensor<T> out({np, c});
    auto read = [&](int y, int x, int ch) -> T {
        if (y < 0 || y >= h || x < 0 || x >= w) return T(0);
        return vm.data[(static_cast<int64_t>(y) * w + x) * c + ch];
    };
    for (int p = 0; p < np; ++p) {
        auto cell = bilinear_cell(vp.at(p, 0), vp.at(p, 1), w, h);
        for (int ch = 0; ch < c; ++ch) {
            T v00 = read(cell.y0, cell.x0, ch), v01 = read(cell.y0, cell.x0 + 1, ch);
            T v10 = read(cell.y0 + 1, cell.x0, ch), v11 = read(cell.y0 + 1, cell.x0 + 1, ch);
            out.at(p, ch) = (T(1) - cell.wy) * ((T(1) - cell.wx) * v00 + cell.wx * v01) +
                            cell.wy * ((T(1) - cell.wx) * v10 + cell.wx * v11);
        }
    }
    bool ng = nodes_[map].needs_grad || nodes_[points].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, map, points, o, h, w, c, np]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& vm = val(map);
            const Tensor<T>& vp = val(points);
            auto read = [&](int y, int x, int ch) -> T {
                if (y < 0 || y >= h || x < 0 || x >= w) return T(0);
                return vm.data[(static_cast<int64_t>(y) * w + x) * c + ch];
            };
            auto scatter = [&](Tensor<T>& gm, int y, int x, int ch, T v) {
                if (y < 0 || y >= h || x < 0 || x >= w) return;
                gm.data[(static_cast<int64_t>(y) * w + x) * c + ch] += v;
            };
            for (int p = 0; p < np; ++p) {
                auto cell = bilinear_cell(vp.at(p, 0), vp.at(p, 1), w, h);
                T dpx = T(0), dpy = T(0);
                for (int ch = 0; ch < c; ++ch) {
                    T g = go.at(p, ch);
                    if (g == T(0)) continue;
                    T v00 = read(cell.y0, cell.x0, ch);
                    T v01 = read(cell.y0, cell.x0 + 1, ch);
                    T v10 = read(cell.y0 + 1, cell.x0, ch);
                    T v11 = read(cell.y0 + 1, cell.x0 + 1, ch);
                    if (nodes_[map].needs_grad) {
                        Tensor<T>& gm = gbuf(map);
                        scatter(gm, cell.y0, cell.x0, ch, g * (T(1) - cell.wy) * (T(1) - cell.wx));
                        scatter(gm, cell.y0, cell.x0 + 1, ch, g * (T(1) - cell.wy) * cell.wx);
                        scatter(gm, cell.y0 + 1, cell.x0, ch, g * cell.wy * (T(1) - cell.wx));
                        scatter(gm, cell.y0 + 1, cell.x0 + 1, ch, g * cell.wy * cell.wx);
                    }
                    dpx += g * ((T(1) - cell.wy) * (v01 - v00) + cell.wy * (v11 - v10));
                    dpy += g * ((T(1) - cell.wx) * (v10 - v00) + cell.wx * (v11 - v01));
                }
                if (nodes_[points].needs_grad) {
                    Tensor<T>& gp = gbuf(points);
                    gp.at(p, 0) += dpx * static_cast<T>(w);
                    gp.at(p, 1) += dpy * static_cast<T>(h);
                }
            }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::deform_attend(const std::vector<Ref>& values,
                                               const std::vector<std::pair<int, int>>& level_hw,
                                               Ref locations, Ref weights, int heads) {
    if (values.size() != level_hw.size() || values.empty())
        throw std::invalid_argument("deform_attend: level lists disagree");
    const int nl = static_cast<int>(values.size());
    const Tensor<T>& vloc = val(locations);
    const Tensor<T>& vw = val(weights);
    const Tensor<T>& v0 = val(values[0]);
    int dm = v0.dim(1);
    if (dm % heads != 0) throw std::invalid_argument("deform_attend: heads must divide width");
    int ch = dm / heads;
    int q = vloc.dim(0);
    if (vloc.ndim() != 2 || vloc.dim(1) % (heads * nl * 2) != 0)
        shape_error("deform_attend locations", vloc.shape, {q, heads, nl, -1, 2});
    int npts = vloc.dim(1) / (heads * nl * 2);
    if (vw.ndim() != 2 || vw.dim(0) != q || vw.dim(1) != heads * nl * npts)
        shape_error("deform_attend weights", vw.shape, {q, heads * nl * npts});
    for (int l = 0; l < nl; ++l) {
        const Tensor<T>& v = val(values[l]);
        if (v.ndim() != 2 || v.dim(1) != dm ||
            v.dim(0) != level_hw[l].first * level_hw[l].second)
            shape_error("deform_attend values", v.shape,
                        {level_hw[l].first * level_hw[l].second, dm});
    }

    // sampled[qi][hd][l*npts+p][ch] kept for the backward pass
    Tensor<T> sampled({q, heads, nl * npts, ch});
    Tensor<T> out({q, dm});
    auto loc_at = [&](int qi, int hd, int l, int p, int xy) -> T {
        int64_t idx = (((static_cast<int64_t>(qi) * heads + hd) * nl + l) * npts + p) * 2 + xy;
        return vloc.data[idx];
    };
    for (int qi = 0; qi < q; ++qi)
        for (int hd = 0; hd < heads; ++hd)
            for (int l = 0; l < nl; ++l) {
                auto [lh, lw] = level_hw[l];
                const Tensor<T>& v = val(values[l]);
                for (int p = 0; p < npts; ++p) {
                    auto cell = bilinear_cell(loc_at(qi, hd, l, p, 0),
                                              loc_at(qi, hd, l, p, 1), lw, lh);
                    T wgt = vw.at(qi, (hd * nl + l) * npts + p);
                    for (int cc = 0; cc < ch; ++cc) {
                        auto read = [&](int y, int x) -> T {
                            if (y < 0 || y >= lh || x < 0 || x >= lw) return T(0);
                            return v.data[(static_cast<int64_t>(y) * lw + x) * dm + hd * ch +
                                          cc];
                        };
                        T v00 = read(cell.y0, cell.x0), v01 = read(cell.y0, cell.x0 + 1);
                        T v10 = read(cell.y0 + 1, cell.x0),
                          v11 = read(cell.y0 + 1, cell.x0 + 1);
                        T s = (T(1) - cell.wy) * ((T(1) - cell.wx) * v00 + cell.wx * v01) +
                              cell.wy * ((T(1) - cell.wx) * v10 + cell.wx * v11);
                        sampled.data[(((static_cast<int64_t>(qi) * heads + hd) * (nl * npts) +
                                       l * npts + p) *
                                      ch) +
                                     cc] = s;
                        out.at(qi, hd * ch + cc) += wgt * s;
                    }
                }
            }

    bool ng = nodes_[locations].needs_grad || nodes_[weights].needs_grad;
    for (Ref v : values) ng = ng || nodes_[v].needs_grad;
    Ref o = push(std::move(out), ng);
    if (ng)
        nodes_[o].back = [this, values, level_hw, locations, weights, o, heads, nl, npts, q,
                          ch, dm, sampled = std::move(sampled)]() {
            const Tensor<T>& go = nodes_[o].grad;
            const Tensor<T>& vloc = val(locations);
            const Tensor<T>& vw = val(weights);
            auto loc_at = [&](int qi, int hd, int l, int p, int xy) -> T {
                int64_t idx =
                    (((static_cast<int64_t>(qi) * heads + hd) * nl + l) * npts + p) * 2 + xy;
                return vloc.data[idx];
            };
            for (int qi = 0; qi < q; ++qi)
                for (int hd = 0; hd < heads; ++hd)
                    for (int l = 0; l < nl; ++l) {
                        auto [lh, lw] = level_hw[l];
                        const Tensor<T>& v = val(values[l]);
                        for (int p = 0; p < npts; ++p) {
                            auto cell = bilinear_cell(loc_at(qi, hd, l, p, 0),
                                                      loc_at(qi, hd, l, p, 1), lw, lh);
                            int wi = (hd * nl + l) * npts + p;
                            T wgt = vw.at(qi, wi);
                            T dw = T(0), dpx = T(0), dpy = T(0);
                            for (int cc = 0; cc < ch; ++cc) {
                                T g = go.at(qi, hd * ch + cc);
                                if (g == T(0)) continue;
                                T s = sampled.data[(((static_cast<int64_t>(qi) * heads + hd) *
                                                         (nl * npts) +
                                                     l * npts + p) *
                                                    ch) +
                                                   cc];
                                dw += g * s;
                                auto read = [&](int y, int x) -> T {
                                    if (y < 0 || y >= lh || x < 0 || x >= lw) return T(0);
                                    return v.data[(static_cast<int64_t>(y) * lw + x) * dm +
                                                  hd * ch + cc];
                                };
                                T v00 = read(cell.y0, cell.x0),
                                  v01 = read(cell.y0, cell.x0 + 1);
                                T v10 = read(cell.y0 + 1, cell.x0),
                                  v11 = read(cell.y0 + 1, cell.x0 + 1);
                                if (nodes_[values[l]].needs_grad) {
                                    Tensor<T>& gv = gbuf(values[l]);
                                    auto scatter = [&](int y, int x, T val) {
                                        if (y < 0 || y >= lh || x < 0 || x >= lw) return;
                                        gv.data[(static_cast<int64_t>(y) * lw + x) * dm +
                                                hd * ch + cc] += val;
                                    };
                                    T gw = g * wgt;
                                    scatter(cell.y0, cell.x0,
                                            gw * (T(1) - cell.wy) * (T(1) - cell.wx));
                                    scatter(cell.y0, cell.x0 + 1,
                                            gw * (T(1) - cell.wy) * cell.wx);
                                    scatter(cell.y0 + 1, cell.x0,
                                            gw * cell.wy * (T(1) - cell.wx));
                                    scatter(cell.y0 + 1, cell.x0 + 1,
                                            gw * cell.wy * cell.wx);
                                }
                                dpx += g * wgt *
                                       ((T(1) - cell.wy) * (v01 - v00) + cell.wy * (v11 - v10));
                                dpy += g * wgt *
                                       ((T(1) - cell.wx) * (v10 - v00) + cell.wx * (v11 - v01));
                            }
                            if (nodes_[weights].needs_grad) gbuf(weights).at(qi, wi) += dw;
                            if (nodes_[locations].needs_grad) {
                                Tensor<T>& gl = gbuf(locations);
                                int64_t base =
                                    (((static_cast<int64_t>(qi) * heads + hd) * nl + l) *
                                         npts +
                                     p) *
                                    2;
                                gl.data[base + 0] += dpx * static_cast<T>(lw);
                                gl.data[base + 1] += dpy * static_cast<T>(lh);
                            }
                        }
                    }
        };
    return o;
}

template <typename T>
typename Graph<T>::Ref Graph<T>::detach(Ref a) {
    return push(val(a), false);
}

template <typename T>
void Graph<T>::backward(Ref loss) {
    if (val(loss).numel() != 1)
        throw std::invalid_argument("backward: loss must be a scalar, got " +
                                    shape_str(val(loss).shape));
    for (Ref r = 0; r <= loss; ++r)
        if (nodes_[r].needs_grad) {
            nodes_[r].grad.shape = val(r).shape;
            nodes_[r].grad.data.assign(val(r).numel(), T(0));
        }
    if (!nodes_[loss].needs_grad)
        throw std::invalid_argument("backward: loss does not depend on any parameter");
    nodes_[loss].grad.data[0] = T(1);
    for (Ref r = loss; r >= 0; --r)
        if (nodes_[r].back && nodes_[r].needs_grad) nodes_[r].back();
}

template <typename T>
void Graph<T>::check_finite(Ref r, const std::string& context) const {
    for (T v : val(r).data)
        if (!std::isfinite(static_cast<double>(v)))
            throw std::runtime_error("non-finite value in " + context);
}

template class Graph<float>;
template class Graph<double>;

namespace {

double grad_check_impl(
    const std::function<Graph<double>::Ref(Graph<double>&, const std::vector<Graph<double>::Ref>&)>& build,
    std::vector<Tensor<double>>& params, double h,
    const std::vector<std::vector<int64_t>>& picks) {
    Graph<double> g0;
    std::vector<Graph<double>::Ref> refs0;
    for (auto& p : params) refs0.push_back(g0.leaf(&p, true));
    auto loss0 = build(g0, refs0);
    if (!std::isfinite(g0.val(loss0).data[0]))
        throw std::runtime_error("grad_check: non-finite loss");
    g0.backward(loss0);
    std::vector<Tensor<double>> grads;
    for (auto r : refs0) grads.push_back(g0.grad(r));

    auto value_only = [&]() -> double {
        Graph<double> g;
        std::vector<Graph<double>::Ref> refs;
        for (auto& p : params) refs.push_back(g.leaf(&p, true));
        return g.val(build(g, refs)).data[0];
    };

    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        for (int64_t i : picks[pi]) {
            double orig = params[pi].data[i];
            params[pi].data[i] = orig + h;
            double fp = value_only();
            params[pi].data[i] = orig - h;
            double fm = value_only();
            params[pi].data[i] = orig;
            double fd = (fp - fm) / (2 * h);
            double an = grads[pi].data[i];
            double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1.0});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

} // namespace

double grad_check(
    const std::function<Graph<double>::Ref(Graph<double>&, const std::vector<Graph<double>::Ref>&)>& build,
    std::vector<Tensor<double>> params, double h) {
    std::vector<std::vector<int64_t>> picks(params.size());
    for (size_t pi = 0; pi < params.size(); ++pi)
        for (int64_t i = 0; i < params[pi].numel(); ++i) picks[pi].push_back(i);
    return grad_check_impl(build, params, h, picks);
}

double grad_check_sampled(
    const std::function<Graph<double>::Ref(Graph<double>&, const std::vector<Graph<double>::Ref>&)>& build,
    std::vector<Tensor<double>> params, int max_per_tensor, uint64_t pick_seed, double h) {
    Rng rng(pick_seed);
    std::vector<std::vector<int64_t>> picks(params.size());
    for (size_t pi = 0; pi < params.size(); ++pi) {
        int64_t n = params[pi].numel();
        if (n <= max_per_tensor) {
            for (int64_t i = 0; i < n; ++i) picks[pi].push_back(i);
        } else {
            std::vector<int64_t> chosen;
            while (static_cast<int>(chosen.size()) < max_per_tensor) {
                int64_t cand = rng.uniform_int(0, n - 1);
                bool dup = false;
                for (int64_t c : chosen) dup |= (c == cand);
                if (!dup) chosen.push_back(cand);
            }
            std::sort(chosen.begin(), chosen.end());
            picks[pi] = std::move(chosen);
        }
    }
    return grad_check_impl(build, params, h, picks);
}

} // namespace dla
