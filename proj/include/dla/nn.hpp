#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dla/optim.hpp"
#include "dla/tensor.hpp"

namespace dla {

// One forward pass: a fresh graph with every store entry registered as an
// aliasing leaf. In eval mode leaves carry no gradient and backward is
// unavailable, which keeps inference lean.
template <typename T>
struct Session {
    using Ref = typename Graph<T>::Ref;

    ParameterStore<T>* store;
    Graph<T> g;
    std::vector<Ref> prefs;
    bool train;

    explicit Session(ParameterStore<T>& s, bool train_mode = true)
        : store(&s), train(train_mode) {
        prefs.reserve(s.size());
        for (int i = 0; i < s.size(); ++i)
            prefs.push_back(g.leaf(&s.at(i).tensor, train_mode));
    }

    Ref p(int i) { return prefs[i]; }

    // per-entry gradients after backward; zeros for parameters the loss
    // never touched
    std::vector<Tensor<T>> grads() {
        std::vector<Tensor<T>> out;
        out.reserve(store->size());
        for (int i = 0; i < store->size(); ++i) {
            const Tensor<T>& gr = g.grad(prefs[i]);
            if (gr.data.empty())
                out.push_back(Tensor<T>::zeros(store->at(i).tensor.shape));
            else
                out.push_back(gr);
        }
        return out;
    }
};

// init_std < 0 selects Xavier-uniform; 0 zero-fills; > 0 draws normal(0, std)
template <typename T>
struct Linear {
    int w = -1, b = -1;
    int in = 0, out = 0;

    static Linear create(ParameterStore<T>& s, const std::string& name, int in, int out,
                         Rng& rng, ParamGroup grp, double init_std = -1.0) {
        Linear l;
        l.in = in;
        l.out = out;
        Tensor<T> wt({in, out});
        if (init_std < 0) {
            double a = std::sqrt(6.0 / (in + out));
            for (T& v : wt.data) v = static_cast<T>(rng.uniform(-a, a));
        } else if (init_std > 0) {
            for (T& v : wt.data) v = static_cast<T>(rng.normal() * init_std);
        }
        l.w = s.add(name + ".w", std::move(wt), grp);
        l.b = s.add(name + ".b", Tensor<T>::zeros({out}), grp);
        return l;
    }

    typename Graph<T>::Ref apply(Session<T>& s, typename Graph<T>::Ref x) const {
        return s.g.linear(x, s.p(w), s.p(b));
    }
};

template <typename T>
struct LayerNorm {
    int gamma = -1, beta = -1;

    static LayerNorm create(ParameterStore<T>& s, const std::string& name, int dim,
                            ParamGroup grp) {
        LayerNorm l;
        l.gamma = s.add(name + ".g", Tensor<T>::full({dim}, T(1)), grp);
        l.beta = s.add(name + ".b", Tensor<T>::zeros({dim}), grp);
        return l;
    }

    typename Graph<T>::Ref apply(Session<T>& s, typename Graph<T>::Ref x) const {
        return s.g.layer_norm(x, s.p(gamma), s.p(beta));
    }
};

template <typename T>
struct Mlp {
    Linear<T> fc1, fc2;

    static Mlp create(ParameterStore<T>& s, const std::string& name, int dim, int hidden,
                      Rng& rng, ParamGroup grp) {
        Mlp m;
        m.fc1 = Linear<T>::create(s, name + ".fc1", dim, hidden, rng, grp);
        m.fc2 = Linear<T>::create(s, name + ".fc2", hidden, dim, rng, grp);
        return m;
    }

    typename Graph<T>::Ref apply(Session<T>& s, typename Graph<T>::Ref x) const {
        return fc2.apply(s, s.g.relu(fc1.apply(s, x)));
    }
};

template <typename T>
struct MultiHeadAttention {
    Linear<T> q, k, v, o;
    int heads = 8, dim = 0;

    static MultiHeadAttention create(ParameterStore<T>& s, const std::string& name, int dim,
                                     int heads, Rng& rng, ParamGroup grp) {
        MultiHeadAttention m;
        m.heads = heads;
        m.dim = dim;
        m.q = Linear<T>::create(s, name + ".q", dim, dim, rng, grp);
        m.k = Linear<T>::create(s, name + ".k", dim, dim, rng, grp);
        m.v = Linear<T>::create(s, name + ".v", dim, dim, rng, grp);
        m.o = Linear<T>::create(s, name + ".o", dim, dim, rng, grp);
        return m;
    }

    typename Graph<T>::Ref apply(Session<T>& s, typename Graph<T>::Ref query_in,
                                 typename Graph<T>::Ref key_in,
                                 typename Graph<T>::Ref value_in) const {
        auto& g = s.g;
        auto qp = q.apply(s, query_in);
        auto kp = k.apply(s, key_in);
        auto vp = v.apply(s, value_in);
        int ch = dim / heads;
        T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(ch)));
        std::vector<typename Graph<T>::Ref> parts;
        for (int h = 0; h < heads; ++h) {
            auto qh = g.slice_cols(qp, h * ch, (h + 1) * ch);
            auto kh = g.slice_cols(kp, h * ch, (h + 1) * ch);
            auto vh = g.slice_cols(vp, h * ch, (h + 1) * ch);
            auto att = g.softmax(g.scale(g.matmul_nt(qh, kh), inv_sqrt));
            parts.push_back(g.matmul(att, vh));
        }
        return o.apply(s, g.concat_cols(parts));
    }
};

// sampling location layout everywhere: [Q, heads*levels*points*2], the last
// axis ordered (head, level, point, xy)
template <typename T>
Tensor<T> tile_centers(const Tensor<T>& centers, int heads, int levels, int points) {
    int q = centers.dim(0);
    Tensor<T> out({q, heads * levels * points * 2});
    for (int qi = 0; qi < q; ++qi)
        for (int i = 0; i < heads * levels * points; ++i) {
            out.data[qi * out.dim(1) + i * 2] = centers.at(qi, 0);
            out.data[qi * out.dim(1) + i * 2 + 1] = centers.at(qi, 1);
        }
    return out;
}

// offsets normalized by target-level extents, as in grid-anchored attention
template <typename T>
Tensor<T> tile_level_scales(const std::vector<std::pair<int, int>>& level_hw, int q, int heads,
                            int points) {
    int levels = static_cast<int>(level_hw.size());
    Tensor<T> out({q, heads * levels * points * 2});
    for (int qi = 0; qi < q; ++qi)
        for (int h = 0; h < heads; ++h)
            for (int l = 0; l < levels; ++l)
                for (int p = 0; p < points; ++p) {
                    int base = (qi * heads * levels * points + (h * levels + l) * points + p) * 2;
                    out.data[base] = T(1) / static_cast<T>(level_hw[l].second);
                    out.data[base + 1] = T(1) / static_cast<T>(level_hw[l].first);
                }
    return out;
}

// offsets scaled by half the reference box, spread over the point count
template <typename T>
Tensor<T> tile_box_scales(const Tensor<T>& boxes, int heads, int levels, int points) {
    int q = boxes.dim(0);
    Tensor<T> out({q, heads * levels * points * 2});
    for (int qi = 0; qi < q; ++qi)
        for (int i = 0; i < heads * levels * points; ++i) {
            out.data[qi * out.dim(1) + i * 2] =
                boxes.at(qi, 2) * T(0.5) / static_cast<T>(points);
            out.data[qi * out.dim(1) + i * 2 + 1] =
                boxes.at(qi, 3) * T(0.5) / static_cast<T>(points);
        }
    return out;
}

template <typename T>
struct DeformableAttention {
    Linear<T> value_proj, offset_head, weight_head, out_proj;
    int heads = 8, levels = 4, points = 4, dim = 0;

    static DeformableAttention create(ParameterStore<T>& s, const std::string& name, int dim,
                                      int heads, int levels, int points, Rng& rng,
                                      ParamGroup grp) {
        DeformableAttention d;
        d.heads = heads;
        d.levels = levels;
        d.points = points;
        d.dim = dim;
        d.value_proj = Linear<T>::create(s, name + ".value", dim, dim, rng, grp);
        d.out_proj = Linear<T>::create(s, name + ".out", dim, dim, rng, grp);
        d.offset_head =
            Linear<T>::create(s, name + ".offset", dim, heads * levels * points * 2, rng, grp,
                              0.0);
        d.weight_head =
            Linear<T>::create(s, name + ".weight", dim, heads * levels * points, rng, grp, 0.0);
        // zero offset weights with a ring-of-directions bias so the first
        // step samples a spread of points around the reference
        Tensor<T>& ob = s.at(d.offset_head.b).tensor;
        for (int h = 0; h < heads; ++h) {
            double angle = 2.0 * 3.14159265358979323846 * h / heads;
            double dx = std::cos(angle), dy = std::sin(angle);
            for (int l = 0; l < levels; ++l)
                for (int p = 0; p < points; ++p) {
                    int base = ((h * levels + l) * points + p) * 2;
                    ob.data[base] = static_cast<T>(dx * (p + 1));
                    ob.data[base + 1] = static_cast<T>(dy * (p + 1));
                }
        }
        return d;
    }

    // query already carries its positional term; centers/scales are constant
    // tensors in the tiled layout above
    typename Graph<T>::Ref apply(Session<T>& s, typename Graph<T>::Ref query,
                                 const Tensor<T>& centers_tiled,
                                 const Tensor<T>& scales_tiled,
                                 const std::vector<typename Graph<T>::Ref>& value_levels,
                                 const std::vector<std::pair<int, int>>& level_hw) const {
        auto& g = s.g;
        int q = g.val(query).dim(0);
        auto offsets = offset_head.apply(s, query);
        auto locations =
            g.add(g.mul(offsets, g.input(scales_tiled)), g.input(centers_tiled));
        auto wlogits = weight_head.apply(s, query);
        auto weights = g.reshape(
            g.softmax(g.reshape(wlogits, {q * heads, levels * points})),
            {q, heads * levels * points});
        std::vector<typename Graph<T>::Ref> values;
        values.reserve(value_levels.size());
        for (auto v : value_levels) values.push_back(value_proj.apply(s, v));
        auto attended = g.deform_attend(values, level_hw, locations, weights, heads);
        return out_proj.apply(s, attended);
    }
};

template <typename T>
struct Conv {
    int w = -1, b = -1;
    int stride = 1, pad = 1;

    static Conv create(ParameterStore<T>& s, const std::string& name, int kh, int kw, int cin,
                       int cout, int stride, int pad, Rng& rng, ParamGroup grp) {
        Conv c;
        c.stride = stride;
        c.pad = pad;
        Tensor<T> wt({kh, kw, cin, cout});
        double std = std::sqrt(2.0 / (static_cast<double>(kh) * kw * cin));
        for (T& v : wt.data) v = static_cast<T>(rng.normal() * std);
        c.w = s.add(name + ".w", std::move(wt), grp);
        c.b = s.add(name + ".b", Tensor<T>::zeros({cout}), grp);
        return c;
    }

    typename Graph<T>::Ref apply(Session<T>& s, typename Graph<T>::Ref x) const {
        return s.g.conv2d(x, s.p(w), s.p(b), stride, pad);
    }
};

// sine embedding of one scalar component into `dim` slots, temperature 10000
template <typename T>
void sine_fill(T value, T* dst, int dim) {
    for (int i = 0; i < dim; ++i) {
        double t = std::pow(10000.0, 2.0 * (i / 2) / dim);
        double x = 2.0 * 3.14159265358979323846 * static_cast<double>(value) / t;
        dst[i] = static_cast<T>((i % 2 == 0) ? std::sin(x) : std::cos(x));
    }
}

// boxes [n,4] (cx,cy,w,h) -> [n,d], d/4 slots per component
template <typename T>
Tensor<T> sine_box_embedding(const Tensor<T>& boxes, int d) {
    int n = boxes.dim(0);
    int per = d / 4;
    Tensor<T> out({n, d});
    for (int i = 0; i < n; ++i)
        for (int c = 0; c < 4; ++c)
            sine_fill(boxes.at(i, c), out.data.data() + i * d + c * per, per);
    return out;
}

// 2-D position embedding over an H x W grid -> [H*W, d], y then x halves
template <typename T>
Tensor<T> sine_grid_embedding(int h, int w, int d) {
    int per = d / 2;
    Tensor<T> out({h * w, d});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            T* row = out.data.data() + (static_cast<int64_t>(y) * w + x) * d;
            sine_fill(static_cast<T>((y + 0.5) / h), row, per);
            sine_fill(static_cast<T>((x + 0.5) / w), row + per, per);
        }
    return out;
}

} // namespace dla
