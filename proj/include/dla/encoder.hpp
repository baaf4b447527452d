#pragma once

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dla/nn.hpp"
#include "dla/structdecode.hpp"

namespace dla {

struct EncoderConfig {
    int in_channels = 1;
    int hidden = 256;
    int heads = 8;
    int ffn = 1024;
    int layers = 3;
    int points = 4;
    // pass features through untouched, keeping the rest of the pipeline intact
    bool identity_encoder = false;
};

// Multi-scale token pyramid at strides 8/16/32/64. Tokens are row-major
// flattened [H_l*W_l, d]; pos carries sine position plus the level embedding.
template <typename T>
struct FeaturePyramid {
    std::vector<typename Graph<T>::Ref> tokens;
    std::vector<typename Graph<T>::Ref> pos;
    std::vector<std::pair<int, int>> level_hw;

    int total_positions() const {
        int s = 0;
        for (auto& [h, w] : level_hw) s += h * w;
        return s;
    }
};

// Normalized cell-center reference points for every pyramid position, in
// level-major row-major order matching concatenated tokens.
template <typename T>
Tensor<T> pyramid_centers(const std::vector<std::pair<int, int>>& level_hw) {
    int s = 0;
    for (auto& [h, w] : level_hw) s += h * w;
    Tensor<T> out({s, 2});
    int row = 0;
    for (auto& [h, w] : level_hw)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x, ++row) {
                out.at(row, 0) = static_cast<T>((x + 0.5) / w);
                out.at(row, 1) = static_cast<T>((y + 0.5) / h);
            }
    return out;
}

// Per-position anchor boxes: cell center plus a level-scaled square prior.
template <typename T>
Tensor<T> pyramid_anchors(const std::vector<std::pair<int, int>>& level_hw) {
    int s = 0;
    for (auto& [h, w] : level_hw) s += h * w;
    Tensor<T> out({s, 4});
    int row = 0;
    for (size_t l = 0; l < level_hw.size(); ++l) {
        auto [h, w] = level_hw[l];
        T side = static_cast<T>(0.05 * (1 << l));
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x, ++row) {
                out.at(row, 0) = static_cast<T>((x + 0.5) / w);
                out.at(row, 1) = static_cast<T>((y + 0.5) / h);
                out.at(row, 2) = side;
                out.at(row, 3) = side;
            }
    }
    return out;
}

template <typename T>
Tensor<T> logit_of(const Tensor<T>& probs, double eps = 1e-5) {
    Tensor<T> out(probs.shape);
    for (size_t i = 0; i < probs.data.size(); ++i) {
        double p = std::clamp(static_cast<double>(probs.data[i]), eps, 1.0 - eps);
        out.data[i] = static_cast<T>(std::log(p / (1.0 - p)));
    }
    return out;
}

// Four stride-2 stages at widths 32/64/128/256 producing maps at 1/8, 1/16,
// and 1/32 of the input.
template <typename T>
struct Backbone {
    std::vector<Conv<T>> convs;

    static Backbone create(ParameterStore<T>& s, const EncoderConfig& cfg, Rng& rng) {
        Backbone b;
        auto conv = [&](const std::string& name, int cin, int cout, int stride) {
            b.convs.push_back(
                Conv<T>::create(s, name, 3, 3, cin, cout, stride, 1, rng, ParamGroup::Backbone));
        };
        conv("backbone.s1a", cfg.in_channels, 32, 2);
        conv("backbone.s1b", 32, 32, 2);
        conv("backbone.s2a", 32, 64, 2);
        conv("backbone.s2b", 64, 64, 1);
        conv("backbone.s3a", 64, 128, 2);
        conv("backbone.s3b", 128, 128, 1);
        conv("backbone.s4a", 128, 256, 2);
        conv("backbone.s4b", 256, 256, 1);
        return b;
    }

    // image [H,W,C] -> {C3 [H/8,W/8,64], C4 [H/16,W/16,128], C5 [H/32,W/32,256]}
    std::array<typename Graph<T>::Ref, 3> apply(Session<T>& s,
                                                typename Graph<T>::Ref image) const {
        auto& g = s.g;
        const Tensor<T>& im = g.val(image);
        if (im.shape.size() != 3)
            throw std::invalid_argument("backbone: image must be [H,W,C]");
        if (std::min(im.dim(0), im.dim(1)) < 64)
            throw std::invalid_argument("backbone: image shorter side must be at least 64");
        auto x = image;
        std::array<typename Graph<T>::Ref, 3> out{};
        for (size_t i = 0; i < convs.size(); ++i) {
            x = g.relu(convs[i].apply(s, x));
            if (i == 3) out[0] = x;
            if (i == 5) out[1] = x;
            if (i == 7) out[2] = x;
        }
        return out;
    }
};

// Projects C3..C5 to the shared width, adds a stride-2 projection of C5 as
// the 1/64 level, and attaches sine + level embeddings.
template <typename T>
struct PyramidHead {
    Conv<T> lat3, lat4, lat5, down;
    std::vector<LayerNorm<T>> norms;
    int level_embed = -1;
    int hidden = 256;

    static PyramidHead create(ParameterStore<T>& s, const EncoderConfig& cfg, Rng& rng) {
        PyramidHead p;
        p.hidden = cfg.hidden;
        p.lat3 = Conv<T>::create(s, "pyramid.lat3", 1, 1, 64, cfg.hidden, 1, 0, rng,
                                 ParamGroup::Backbone);
        p.lat4 = Conv<T>::create(s, "pyramid.lat4", 1, 1, 128, cfg.hidden, 1, 0, rng,
                                 ParamGroup::Backbone);
        p.lat5 = Conv<T>::create(s, "pyramid.lat5", 1, 1, 256, cfg.hidden, 1, 0, rng,
                                 ParamGroup::Backbone);
        p.down = Conv<T>::create(s, "pyramid.down", 3, 3, 256, cfg.hidden, 2, 1, rng,
                                 ParamGroup::Backbone);
        for (int l = 0; l < 4; ++l)
            p.norms.push_back(LayerNorm<T>::create(s, "pyramid.norm" + std::to_string(l),
                                                   cfg.hidden, ParamGroup::Backbone));
        Tensor<T> le({4, cfg.hidden});
        for (T& v : le.data) v = static_cast<T>(rng.normal() * 0.02);
        p.level_embed = s.add("pyramid.level_embed", std::move(le), ParamGroup::Transformer);
        return p;
    }

    FeaturePyramid<T> apply(Session<T>& s,
                            const std::array<typename Graph<T>::Ref, 3>& c) const {
        auto& g = s.g;
        std::array<typename Graph<T>::Ref, 4> maps = {lat3.apply(s, c[0]), lat4.apply(s, c[1]),
                                                      lat5.apply(s, c[2]), down.apply(s, c[2])};
        FeaturePyramid<T> pyr;
        for (int l = 0; l < 4; ++l) {
            const Tensor<T>& m = g.val(maps[l]);
            int h = m.dim(0), w = m.dim(1);
            auto flat = g.reshape(maps[l], {h * w, hidden});
            pyr.tokens.push_back(norms[l].apply(s, flat));
            auto le = g.reshape(g.slice_rows(s.p(level_embed), l, l + 1), {hidden});
            pyr.pos.push_back(g.add(g.input(sine_grid_embedding<T>(h, w, hidden)), le));
            pyr.level_hw.emplace_back(h, w);
        }
        return pyr;
    }
};

template <typename T>
struct EncoderLayer {
    DeformableAttention<T> attn;
    LayerNorm<T> norm1, norm2;
    Mlp<T> ffn;

    static EncoderLayer create(ParameterStore<T>& s, const std::string& name,
                               const EncoderConfig& cfg, Rng& rng) {
        EncoderLayer l;
        l.attn = DeformableAttention<T>::create(s, name + ".attn", cfg.hidden, cfg.heads, 4,
                                                cfg.points, rng, ParamGroup::Transformer);
        l.norm1 = LayerNorm<T>::create(s, name + ".norm1", cfg.hidden, ParamGroup::Transformer);
        l.norm2 = LayerNorm<T>::create(s, name + ".norm2", cfg.hidden, ParamGroup::Transformer);
        l.ffn = Mlp<T>::create(s, name + ".ffn", cfg.hidden, cfg.ffn, rng,
                               ParamGroup::Transformer);
        return l;
    }
};

// Per-position proposal scoring over the enhanced memory. Logits and boxes
// cover every position so detection losses can supervise the head; the
// selected list carries the top-K by best non-background probability.
template <typename T>
struct SelectionOutput {
    typename Graph<T>::Ref cls_logits;  // [S, categories+1], background last
    typename Graph<T>::Ref boxes;       // [S, 4] in (0,1)
    std::vector<int> selected;          // position indices, best first
    std::vector<GraphicalProposal> proposals;
};

template <typename T>
struct Encoder {
    EncoderConfig cfg;
    Backbone<T> backbone;
    PyramidHead<T> pyramid;
    std::vector<EncoderLayer<T>> layers;
    Linear<T> sel_cls, sel_box;
    int num_categories = 0;

    static Encoder create(ParameterStore<T>& s, const EncoderConfig& cfg, int num_categories,
                          Rng& rng) {
        Encoder e;
        e.cfg = cfg;
        e.num_categories = num_categories;
        e.backbone = Backbone<T>::create(s, cfg, rng);
        e.pyramid = PyramidHead<T>::create(s, cfg, rng);
        for (int i = 0; i < cfg.layers; ++i)
            e.layers.push_back(
                EncoderLayer<T>::create(s, "encoder.layer" + std::to_string(i), cfg, rng));
        e.sel_cls = Linear<T>::create(s, "select.cls", cfg.hidden, num_categories + 1, rng,
                                      ParamGroup::Transformer, 0.01);
        e.sel_box = Linear<T>::create(s, "select.box", cfg.hidden, 4, rng,
                                      ParamGroup::Transformer, 0.01);
        return e;
    }

    // backbone + pyramid + deformable self-attention stack
    FeaturePyramid<T> forward(Session<T>& s, typename Graph<T>::Ref image) const {
        FeaturePyramid<T> pyr = pyramid.apply(s, backbone.apply(s, image));
        if (cfg.identity_encoder || layers.empty()) return pyr;
        auto& g = s.g;
        int S = pyr.total_positions();
        Tensor<T> centers = pyramid_centers<T>(pyr.level_hw);
        Tensor<T> centers_tiled = tile_centers(centers, cfg.heads, 4, cfg.points);
        Tensor<T> scales = tile_level_scales<T>(pyr.level_hw, S, cfg.heads, cfg.points);

        auto src = g.concat_rows(pyr.tokens);
        auto pos = g.concat_rows(pyr.pos);
        for (const EncoderLayer<T>& layer : layers) {
            auto q = g.add(src, pos);
            std::vector<typename Graph<T>::Ref> vals;
            int off = 0;
            for (auto& [h, w] : pyr.level_hw) {
                vals.push_back(g.slice_rows(src, off, off + h * w));
                off += h * w;
            }
            auto a = layer.attn.apply(s, q, centers_tiled, scales, vals, pyr.level_hw);
            src = layer.norm1.apply(s, g.add(src, a));
            src = layer.norm2.apply(s, g.add(src, layer.ffn.apply(s, src)));
        }
        FeaturePyramid<T> out;
        out.level_hw = pyr.level_hw;
        out.pos = pyr.pos;
        int off = 0;
        for (auto& [h, w] : pyr.level_hw) {
            out.tokens.push_back(g.slice_rows(src, off, off + h * w));
            off += h * w;
        }
        return out;
    }

    // classification and box heads over every memory position, no ranking
    SelectionOutput<T> score(Session<T>& s, const FeaturePyramid<T>& pyr) const {
        auto& g = s.g;
        auto memory = g.concat_rows(pyr.tokens);
        SelectionOutput<T> out;
        out.cls_logits = sel_cls.apply(s, memory);
        auto anchors = logit_of(pyramid_anchors<T>(pyr.level_hw));
        out.boxes = g.sigmoid(g.add(sel_box.apply(s, memory), g.input(anchors)));
        return out;
    }

    // top-K positions ranked by best non-background softmax probability;
    // each carries its best graphical category and a box decoded from a
    // per-position anchor in inverse-sigmoid space
    SelectionOutput<T> select(Session<T>& s, const FeaturePyramid<T>& pyr, int K) const {
        auto& g = s.g;
        int S = pyr.total_positions();
        if (K < 1) throw std::invalid_argument("query selection: K must be at least 1");
        if (K > S)
            throw std::invalid_argument("query selection: K = " + std::to_string(K) +
                                        " exceeds " + std::to_string(S) + " positions");
        SelectionOutput<T> out = score(s, pyr);
        const Tensor<T>& probs = g.val(g.softmax(out.cls_logits));
        std::vector<std::pair<double, int>> ranked(S);
        std::vector<int> best_cat(S);
        for (int i = 0; i < S; ++i) {
            double best = -1;
            int cat = 0;
            for (int c = 0; c < num_categories; ++c)
                if (static_cast<double>(probs.at(i, c)) > best) {
                    best = probs.at(i, c);
                    cat = c;
                }
            ranked[i] = {-best, i};
            best_cat[i] = cat;
        }
        std::sort(ranked.begin(), ranked.end());
        const Tensor<T>& bx = g.val(out.boxes);
        for (int k = 0; k < K; ++k) {
            int i = ranked[k].second;
            out.selected.push_back(i);
            out.proposals.push_back({BBox(bx.at(i, 0), bx.at(i, 1), bx.at(i, 2), bx.at(i, 3)),
                                     best_cat[i], -ranked[k].first});
        }
        return out;
    }
};

} // namespace dla
