#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "dla/encoder.hpp"
#include "dla/nn.hpp"
#include "dla/structdecode.hpp"

namespace dla {

struct DecoderConfig {
    int hidden = 256;
    int heads = 8;
    int ffn = 1024;
    int layers = 3;
    int points = 4;
};

// Learnable content vectors: one per graphical category, one shared by all
// text lines, one per logical role. Role queries also own reference boxes,
// stored in inverse-sigmoid space and started near the full page.
template <typename T>
struct ContentTable {
    int text_embed = -1;  // [1, d]
    int cat_embed = -1;   // [categories, d]
    int role_embed = -1;  // [roles, d]
    int role_box = -1;    // [roles, 4] logits
    int num_categories = 0, num_roles = 0, hidden = 0;

    static ContentTable create(ParameterStore<T>& s, int hidden, int num_categories,
                               int num_roles, Rng& rng) {
        ContentTable t;
        t.hidden = hidden;
        t.num_categories = num_categories;
        t.num_roles = num_roles;
        auto embed = [&](const std::string& name, int rows) {
            Tensor<T> e({rows, hidden});
            for (T& v : e.data) v = static_cast<T>(rng.normal());
            return s.add(name, std::move(e), ParamGroup::Transformer);
        };
        t.text_embed = embed("queries.text", 1);
        t.cat_embed = embed("queries.category", num_categories);
        t.role_embed = embed("queries.role", num_roles);
        Tensor<T> rb({num_roles, 4});
        Tensor<T> page({1, 4}, {T(0.5), T(0.5), T(1), T(1)});
        Tensor<T> page_logit = logit_of(page, 0.02);
        for (int r = 0; r < num_roles; ++r)
            for (int c = 0; c < 4; ++c) rb.at(r, c) = page_logit.at(0, c);
        t.role_box = s.add("queries.role_box", std::move(rb), ParamGroup::Transformer);
        return t;
    }
};

// Unified query bank: text-line queries [0,N), graphical queries [N,H),
// role queries [H,W). Boxes hold each query's current reference box.
template <typename T>
struct QueryBank {
    typename Graph<T>::Ref content;
    Tensor<T> boxes;  // [W, 4]
    int num_lines = 0, num_graphics = 0, num_roles = 0;
    std::vector<int> categories;  // per graphical query

    int H() const { return num_lines + num_graphics; }
    int W() const { return H() + num_roles; }
};

template <typename T>
QueryBank<T> init_queries(Session<T>& s, const ContentTable<T>& table,
                          const std::vector<GraphicalProposal>& proposals,
                          const std::vector<BBox>& line_boxes) {
    auto& g = s.g;
    if (line_boxes.empty()) throw std::invalid_argument("init_queries: need at least one line");
    QueryBank<T> bank;
    bank.num_lines = static_cast<int>(line_boxes.size());
    bank.num_graphics = static_cast<int>(proposals.size());
    bank.num_roles = table.num_roles;

    std::vector<typename Graph<T>::Ref> parts;
    parts.push_back(g.repeat_rows(s.p(table.text_embed), bank.num_lines));
    if (!proposals.empty()) {
        for (const GraphicalProposal& p : proposals) {
            if (p.category < 0 || p.category >= table.num_categories)
                throw std::invalid_argument("init_queries: proposal category " +
                                            std::to_string(p.category) +
                                            " outside the vocabulary");
            bank.categories.push_back(p.category);
        }
        parts.push_back(g.gather_rows(s.p(table.cat_embed), bank.categories));
    }
    if (table.num_roles > 0) parts.push_back(s.p(table.role_embed));
    bank.content = g.concat_rows(parts);

    bank.boxes = Tensor<T>({bank.W(), 4});
    auto put = [&](int row, const BBox& b) {
        bank.boxes.at(row, 0) = static_cast<T>(b.cx);
        bank.boxes.at(row, 1) = static_cast<T>(b.cy);
        bank.boxes.at(row, 2) = static_cast<T>(b.w);
        bank.boxes.at(row, 3) = static_cast<T>(b.h);
    };
    for (int i = 0; i < bank.num_lines; ++i) put(i, line_boxes[i]);
    for (int k = 0; k < bank.num_graphics; ++k) put(bank.num_lines + k, proposals[k].box);
    const Tensor<T>& rb = g.val(g.sigmoid(s.p(table.role_box)));
    for (int r = 0; r < bank.num_roles; ++r)
        for (int c = 0; c < 4; ++c) bank.boxes.at(bank.H() + r, c) = rb.at(r, c);
    return bank;
}

template <typename T>
struct DecoderLayer {
    MultiHeadAttention<T> self_attn;
    DeformableAttention<T> cross_attn;
    LayerNorm<T> norm1, norm2, norm3;
    Mlp<T> ffn;
    Linear<T> box_a, box_b;    // graphical box delta head, final layer zero
    Linear<T> role_a, role_b;  // role box delta head, final layer zero

    static DecoderLayer create(ParameterStore<T>& s, const std::string& name,
                               const DecoderConfig& cfg, Rng& rng) {
        DecoderLayer l;
        l.self_attn = MultiHeadAttention<T>::create(s, name + ".self", cfg.hidden, cfg.heads,
                                                    rng, ParamGroup::Transformer);
        l.cross_attn = DeformableAttention<T>::create(s, name + ".cross", cfg.hidden, cfg.heads,
                                                      4, cfg.points, rng,
                                                      ParamGroup::Transformer);
        l.norm1 = LayerNorm<T>::create(s, name + ".norm1", cfg.hidden, ParamGroup::Transformer);
        l.norm2 = LayerNorm<T>::create(s, name + ".norm2", cfg.hidden, ParamGroup::Transformer);
        l.norm3 = LayerNorm<T>::create(s, name + ".norm3", cfg.hidden, ParamGroup::Transformer);
        l.ffn = Mlp<T>::create(s, name + ".ffn", cfg.hidden, cfg.ffn, rng,
                               ParamGroup::Transformer);
        l.box_a = Linear<T>::create(s, name + ".box_a", cfg.hidden, cfg.hidden, rng,
                                    ParamGroup::Transformer);
        l.box_b = Linear<T>::create(s, name + ".box_b", cfg.hidden, 4, rng,
                                    ParamGroup::Transformer, 0.0);
        l.role_a = Linear<T>::create(s, name + ".role_a", cfg.hidden, cfg.hidden, rng,
                                     ParamGroup::Transformer);
        l.role_b = Linear<T>::create(s, name + ".role_b", cfg.hidden, 4, rng,
                                     ParamGroup::Transformer, 0.0);
        return l;
    }
};

// One decoder layer's retained outputs. Boxes for the next layer's anchors
// are taken from values, so refinement composes in inverse-sigmoid space
// without gradients crossing layer boundaries.
template <typename T>
struct DecoderLayerOutput {
    typename Graph<T>::Ref queries;      // [W, d]
    typename Graph<T>::Ref graph_boxes;  // [K, 4], absent when K = 0
    typename Graph<T>::Ref graph_deltas; // [K, 4] inverse-sigmoid-space deltas
    typename Graph<T>::Ref role_boxes;   // [R, 4], absent when R = 0
    bool has_graph_boxes = false, has_role_boxes = false;
    Tensor<T> ref_boxes;  // [W, 4] references after this layer
};

template <typename T>
struct Decoder {
    DecoderConfig cfg;
    ContentTable<T> table;
    std::vector<DecoderLayer<T>> layers;

    static Decoder create(ParameterStore<T>& s, const DecoderConfig& cfg, int num_categories,
                          int num_roles, Rng& rng) {
        Decoder d;
        d.cfg = cfg;
        d.table = ContentTable<T>::create(s, cfg.hidden, num_categories, num_roles, rng);
        for (int i = 0; i < cfg.layers; ++i)
            d.layers.push_back(
                DecoderLayer<T>::create(s, "decoder.layer" + std::to_string(i), cfg, rng));
        return d;
    }

    // Self-attention over all queries, deformable cross-attention anchored
    // at each query's reference box, then box refinement: graphical boxes
    // move by predicted deltas, text boxes stay fixed, role boxes are
    // re-predicted from the learnable anchors each layer.
    //
    // Reference boxes update from layer values, a non-differentiable path;
    // fixed_refs pins the per-layer references (entry l is the reference
    // before layer l) so finite-difference checks see only graph paths.
    std::vector<DecoderLayerOutput<T>> forward(Session<T>& s, const QueryBank<T>& bank,
                                               const FeaturePyramid<T>& pyr,
                                               const std::vector<Tensor<T>>* fixed_refs =
                                                   nullptr) const {
        auto& g = s.g;
        int N = bank.num_lines, K = bank.num_graphics, R = bank.num_roles;
        int H = bank.H(), W = bank.W();
        auto x = bank.content;
        Tensor<T> ref = bank.boxes;
        if (fixed_refs && fixed_refs->size() != layers.size())
            throw std::invalid_argument("decoder: fixed reference schedule length mismatch");
        std::vector<DecoderLayerOutput<T>> outs;
        for (size_t li = 0; li < layers.size(); ++li) {
            const DecoderLayer<T>& layer = layers[li];
            if (fixed_refs) ref = (*fixed_refs)[li];
            auto pos = g.input(sine_box_embedding(ref, cfg.hidden));
            auto qk = g.add(x, pos);
            x = layer.norm1.apply(s, g.add(x, layer.self_attn.apply(s, qk, qk, x)));

            Tensor<T> centers({W, 2});
            for (int i = 0; i < W; ++i) {
                centers.at(i, 0) = ref.at(i, 0);
                centers.at(i, 1) = ref.at(i, 1);
            }
            Tensor<T> centers_tiled = tile_centers(centers, cfg.heads, 4, cfg.points);
            Tensor<T> scales = tile_box_scales(ref, cfg.heads, 4, cfg.points);
            auto q2 = g.add(x, pos);
            auto a = layer.cross_attn.apply(s, q2, centers_tiled, scales, pyr.tokens,
                                            pyr.level_hw);
            x = layer.norm2.apply(s, g.add(x, a));
            x = layer.norm3.apply(s, g.add(x, layer.ffn.apply(s, x)));

            DecoderLayerOutput<T> out;
            out.queries = x;
            if (K > 0) {
                Tensor<T> gref({K, 4});
                for (int k = 0; k < K; ++k)
                    for (int c = 0; c < 4; ++c) gref.at(k, c) = ref.at(N + k, c);
                auto delta =
                    layer.box_b.apply(s, g.relu(layer.box_a.apply(s, g.slice_rows(x, N, H))));
                out.graph_deltas = delta;
                out.graph_boxes = g.sigmoid(g.add(delta, g.input(logit_of(gref))));
                out.has_graph_boxes = true;
                const Tensor<T>& gb = g.val(out.graph_boxes);
                for (int k = 0; k < K; ++k)
                    for (int c = 0; c < 4; ++c) ref.at(N + k, c) = gb.at(k, c);
            }
            if (R > 0) {
                auto rdelta =
                    layer.role_b.apply(s, g.relu(layer.role_a.apply(s, g.slice_rows(x, H, W))));
                out.role_boxes = g.sigmoid(g.add(rdelta, s.p(table.role_box)));
                out.has_role_boxes = true;
            }
            out.ref_boxes = ref;
            outs.push_back(out);
        }
        return outs;
    }
};

} // namespace dla
