#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dla/optim.hpp"
#include "dla/page.hpp"
#include "dla/structdecode.hpp"
#include "dla/tensor.hpp"

namespace dla {

struct LossWeights {
    double cls = 2.0;
    double l1 = 5.0;
    double giou = 2.0;
    double rel = 1.0;
    double type = 1.0;
    double rolebox = 1.0;
    double background = 0.1;  // class-loss weight of unmatched positions
};

struct TrainConfig {
    int batch_size = 4;
    int steps = 1000;
    AdamWConfig opt;
    std::vector<int> scales = {320, 416, 512, 608, 704, 800};
    int long_side_cap = 1024;
    int test_shorter_side = 512;
    int top_k = 50;
    uint64_t seed = 0;
    bool deterministic = false;
    // DocLayNet-style corpora add class-prior offsets to the role half and
    // the type classifier
    bool logit_adjust = false;
    double tau = 1.0;
    LossWeights weights;
};

// Exact minimum-cost one-to-one assignment of rows to columns, rows <= cols.
// cost is row-major [rows, cols]; returns the matched column of each row.
std::vector<int> hungarian_match(const std::vector<double>& cost, int rows, int cols);

// Hungarian assignment between ground-truth graphics and scored proposals
// with cost w_cls*(-p_category) + w_l1*L1 + w_giou*(1-giou).
struct MatchResult {
    std::vector<int> proposal_of_gt;  // size G
    std::vector<int> gt_of_proposal;  // size K, -1 where unmatched
};

MatchResult match_graphics(const std::vector<GraphicalProposal>& proposals,
                           const std::vector<double>& category_probs,  // [K, C] row-major
                           int num_categories,
                           const std::vector<GraphicalObject>& gt,
                           const LossWeights& w);

// Relation supervision mapped into model index space: text rows keep their
// indices, ground-truth graphic g becomes row/column N + proposal_of_gt[g].
// Unmatched graphical queries stay unsupervised.
struct RelationTargets {
    std::vector<int> rows;
    std::vector<int> unit_cols;
    std::vector<RelationType> unit_types;
    std::vector<int> role_cols;  // role index, -1 when the matrix has no role half
};

RelationTargets map_relation_targets(const RelationLabelMatrix& m, int num_lines,
                                     const MatchResult& match, int num_queries);

// Differentiable generalized IoU per row between [n,4] center-size boxes.
template <typename T>
typename Graph<T>::Ref giou_rows(Graph<T>& g, typename Graph<T>::Ref pred,
                                 typename Graph<T>::Ref gt) {
    auto half = [&](typename Graph<T>::Ref b, int c) {
        return g.scale(g.slice_cols(b, c, c + 1), T(0.5));
    };
    auto corner = [&](typename Graph<T>::Ref b, int c, bool hi) {
        auto center = g.slice_cols(b, c, c + 1);
        auto h = half(b, c + 2);
        return hi ? g.add(center, h) : g.sub(center, h);
    };
    auto px1 = corner(pred, 0, false), px2 = corner(pred, 0, true);
    auto py1 = corner(pred, 1, false), py2 = corner(pred, 1, true);
    auto gx1 = corner(gt, 0, false), gx2 = corner(gt, 0, true);
    auto gy1 = corner(gt, 1, false), gy2 = corner(gt, 1, true);

    auto iw = g.clamp_min(g.sub(g.minimum(px2, gx2), g.maximum(px1, gx1)), T(0));
    auto ih = g.clamp_min(g.sub(g.minimum(py2, gy2), g.maximum(py1, gy1)), T(0));
    auto inter = g.mul(iw, ih);
    auto pa = g.mul(g.slice_cols(pred, 2, 3), g.slice_cols(pred, 3, 4));
    auto ga = g.mul(g.slice_cols(gt, 2, 3), g.slice_cols(gt, 3, 4));
    auto uni = g.clamp_min(g.sub(g.add(pa, ga), inter), T(1e-9));
    auto iou = g.div(inter, uni);

    auto hw = g.sub(g.maximum(px2, gx2), g.minimum(px1, gx1));
    auto hh = g.sub(g.maximum(py2, gy2), g.minimum(py1, gy1));
    auto hull = g.clamp_min(g.mul(hw, hh), T(1e-9));
    auto dead = g.div(g.sub(hull, uni), hull);
    int n = g.val(pred).dim(0);
    return g.reshape(g.sub(iou, dead), {n});
}

// Weighted softmax cross-entropy over every row of [n, classes] logits,
// normalized by the total weight.
template <typename T>
typename Graph<T>::Ref weighted_class_loss(Graph<T>& g, typename Graph<T>::Ref logits,
                                           const std::vector<int>& targets,
                                           const std::vector<double>& row_weights) {
    const Tensor<T>& lv = g.val(logits);
    int n = lv.dim(0), c = lv.dim(1);
    if (static_cast<int>(targets.size()) != n || static_cast<int>(row_weights.size()) != n)
        throw std::invalid_argument("weighted_class_loss: size mismatch");
    Tensor<T> mask({n, c});
    double total = 0;
    for (double w : row_weights) total += w;
    if (total <= 0) throw std::invalid_argument("weighted_class_loss: zero total weight");
    for (int i = 0; i < n; ++i) {
        if (targets[i] < 0 || targets[i] >= c)
            throw std::invalid_argument("weighted_class_loss: target out of range");
        mask.at(i, targets[i]) = static_cast<T>(row_weights[i] / total);
    }
    return g.scale(g.sum(g.mul(g.log_softmax(logits), g.input(mask))), T(-1));
}

// Cross-entropy with per-cell one-hot mask values pre-scaled by 1/count.
template <typename T>
typename Graph<T>::Ref masked_nll(Graph<T>& g, typename Graph<T>::Ref log_probs,
                                  const std::vector<std::pair<int, int>>& cells) {
    const Tensor<T>& lv = g.val(log_probs);
    if (cells.empty()) throw std::invalid_argument("masked_nll: no supervised cells");
    Tensor<T> mask(lv.shape);
    T unit = static_cast<T>(1.0 / cells.size());
    for (auto& [r, c] : cells) {
        if (r < 0 || r >= lv.dim(0) || c < 0 || c >= lv.dim(1))
            throw std::invalid_argument("masked_nll: cell out of range");
        mask.at(r, c) += unit;
    }
    return g.scale(g.sum(g.mul(log_probs, g.input(mask))), T(-1));
}

// Class-prior offsets for logit-adjusted cross-entropy: tau * ln(prior).
template <typename T>
Tensor<T> prior_offsets(const std::vector<double>& priors, double tau) {
    Tensor<T> out({static_cast<int>(priors.size())});
    for (size_t i = 0; i < priors.size(); ++i) {
        double p = priors[i] > 0 ? priors[i] : 1e-12;
        out.data[static_cast<int64_t>(i)] = static_cast<T>(tau * std::log(p));
    }
    return out;
}

// Softmax cross-entropy with tau * ln(prior) added to each class column
// before normalization. Uniform priors or tau = 0 reduce to plain CE up to
// a constant shift of every logit.
template <typename T>
typename Graph<T>::Ref logit_adjusted_ce(Graph<T>& g, typename Graph<T>::Ref logits,
                                         const std::vector<int>& targets,
                                         const std::vector<double>& priors, double tau) {
    const Tensor<T>& lv = g.val(logits);
    if (lv.ndim() != 2 || lv.dim(1) != static_cast<int>(priors.size()))
        throw std::invalid_argument("logit_adjusted_ce: prior count mismatch");
    auto adjusted = g.add(logits, g.input(prior_offsets<T>(priors, tau)));
    return g.cross_entropy(adjusted, targets);
}

} // namespace dla
