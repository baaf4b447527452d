#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dla/nn.hpp"
#include "dla/page.hpp"

namespace dla {

// Pairwise relation scores over a query bank: raw affinities f [H, W] and
// their two-branch row softmax s (unit half j < H, role half j >= H).
template <typename T>
struct RelationScores {
    typename Graph<T>::Ref f;
    typename Graph<T>::Ref s;
    int H = 0, W = 0;
};

// Per-row inference decisions: the argmax unit edge with its classified
// type, and the argmax role edge (always typed as a role relationship).
struct RelationDecision {
    std::vector<int> unit_target;
    std::vector<double> unit_score;
    std::vector<RelationType> unit_type;
    std::vector<int> role_target;      // offsets into the role half
    std::vector<double> role_score;
};

template <typename T>
struct RelationHead {
    Linear<T> rq, rk, cq, ck;  // d -> width projections
    int bilinear = -1;         // [width, 4*width], class c in column block c
    int bilinear_bias = -1;    // [4]
    int width = 1024;

    static RelationHead create(ParameterStore<T>& s, int hidden, Rng& rng, int width = 1024) {
        RelationHead h;
        h.width = width;
        h.rq = Linear<T>::create(s, "relation.rq", hidden, width, rng,
                                 ParamGroup::Transformer, 0.01);
        h.rk = Linear<T>::create(s, "relation.rk", hidden, width, rng,
                                 ParamGroup::Transformer, 0.01);
        h.cq = Linear<T>::create(s, "relation.cq", hidden, width, rng,
                                 ParamGroup::Transformer, 0.01);
        h.ck = Linear<T>::create(s, "relation.ck", hidden, width, rng,
                                 ParamGroup::Transformer, 0.01);
        Tensor<T> b({width, 4 * width});
        for (T& v : b.data) v = static_cast<T>(rng.normal() * 0.01);
        h.bilinear = s.add("relation.bilinear", std::move(b), ParamGroup::Transformer);
        h.bilinear_bias = s.add("relation.bilinear_bias", Tensor<T>::zeros({4}),
                                ParamGroup::Transformer);
        return h;
    }

    // f_ij = dot(rq(q_i), rk(q_j)) for i < H; softmax per row over each half.
    RelationScores<T> relation_scores(Session<T>& s, typename Graph<T>::Ref queries,
                                      int H) const {
        auto& g = s.g;
        int W = g.val(queries).dim(0);
        if (H < 1 || H > W) throw std::invalid_argument("relation_scores: bad unit count");
        RelationScores<T> out;
        out.H = H;
        out.W = W;
        auto u = rq.apply(s, g.slice_rows(queries, 0, H));
        auto v = rk.apply(s, queries);
        out.f = g.matmul_nt(u, v);
        auto unit = g.softmax(g.slice_cols(out.f, 0, H));
        if (W > H) {
            auto role = g.softmax(g.slice_cols(out.f, H, W));
            out.s = g.concat_cols({unit, role});
        } else {
            out.s = unit;
        }
        return out;
    }

    // 4-class logits for an explicit pair list via the bilinear form.
    typename Graph<T>::Ref classify_pairs(Session<T>& s, typename Graph<T>::Ref queries,
                                          const std::vector<std::pair<int, int>>& pairs) const {
        auto& g = s.g;
        if (pairs.empty()) throw std::invalid_argument("classify_pairs: empty pair list");
        std::vector<int> is, js;
        is.reserve(pairs.size());
        js.reserve(pairs.size());
        for (auto& [i, j] : pairs) {
            is.push_back(i);
            js.push_back(j);
        }
        auto u = cq.apply(s, g.gather_rows(queries, is));  // [P, width]
        auto v = ck.apply(s, g.gather_rows(queries, js));
        auto t = g.matmul(u, s.p(bilinear));  // [P, 4*width]
        std::vector<typename Graph<T>::Ref> logits;
        int P = static_cast<int>(pairs.size());
        for (int c = 0; c < 4; ++c) {
            auto block = g.slice_cols(t, c * width, (c + 1) * width);
            logits.push_back(g.reshape(g.sum_rows(g.mul(block, v)), {P, 1}));
        }
        return g.add(g.concat_cols(logits), s.p(bilinear_bias));
    }

    // Inference: argmax per half plus type classification of each chosen
    // unit edge. Role edges are role relationships by construction, so the
    // classifier is consulted only for the unit half.
    RelationDecision predict(Session<T>& s, typename Graph<T>::Ref queries, int H) const {
        auto& g = s.g;
        RelationScores<T> rs = relation_scores(s, queries, H);
        const Tensor<T>& sm = g.val(rs.s);
        RelationDecision d;
        std::vector<std::pair<int, int>> pairs;
        for (int i = 0; i < rs.H; ++i) {
            int ju = 0;
            for (int j = 1; j < rs.H; ++j)
                if (sm.at(i, j) > sm.at(i, ju)) ju = j;
            d.unit_target.push_back(ju);
            d.unit_score.push_back(static_cast<double>(sm.at(i, ju)));
            pairs.emplace_back(i, ju);
            if (rs.W > rs.H) {
                int jr = rs.H;
                for (int j = rs.H + 1; j < rs.W; ++j)
                    if (sm.at(i, j) > sm.at(i, jr)) jr = j;
                d.role_target.push_back(jr - rs.H);
                d.role_score.push_back(static_cast<double>(sm.at(i, jr)));
            }
        }
        const Tensor<T>& lg = g.val(classify_pairs(s, queries, pairs));
        for (int i = 0; i < rs.H; ++i) {
            int best = 0;
            for (int c = 1; c < 4; ++c)
                if (lg.at(i, c) > lg.at(i, best)) best = c;
            d.unit_type.push_back(static_cast<RelationType>(best));
        }
        return d;
    }
};

} // namespace dla
