#pragma once

#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dla/model.hpp"
#include "dla/training.hpp"

namespace dla {

struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One annotated page ready for optimization.
struct TrainItem {
    DocumentPage page;
    Raster image;
    RelationLabelMatrix matrix;
};

inline TrainItem make_train_item(const DocumentPage& page, const Raster& image,
                                 const RoleVocab& vocab) {
    return {page, image, build_label_matrix(page, vocab)};
}

// Class priors estimated from the supervision matrices. The type prior gives
// the none class the combined mass of the sampled negatives, one per
// positive pair.
struct LossPriors {
    std::vector<double> role;
    std::vector<double> type;
};

inline LossPriors estimate_priors(const std::vector<TrainItem>& items, int num_roles) {
    LossPriors p;
    p.role.assign(num_roles, 0.0);
    p.type.assign(4, 0.0);
    double role_total = 0, positives = 0;
    for (const TrainItem& it : items) {
        for (int r = 0; r < it.matrix.num_units; ++r) {
            int rt = it.matrix.role_target(r);
            if (rt >= 0 && rt < num_roles) {
                p.role[rt] += 1;
                role_total += 1;
                p.type[static_cast<int>(RelationType::LogicalRoleRel)] += 1;
                positives += 1;
            }
            if (it.matrix.unit_target(r) >= 0) {
                p.type[static_cast<int>(it.matrix.unit_type(r))] += 1;
                positives += 1;
            }
        }
    }
    if (role_total > 0)
        for (double& v : p.role) v /= role_total;
    else
        p.role.assign(num_roles, num_roles > 0 ? 1.0 / num_roles : 0.0);
    p.type[static_cast<int>(RelationType::None)] = positives;
    if (positives > 0)
        for (double& v : p.type) v /= 2 * positives;
    else
        p.type.assign(4, 0.25);
    return p;
}

// Per-image decisions that live outside the computation graph: the resized
// input, the ranked proposals, the bipartite match, the sampled negative
// pairs, and the per-layer reference boxes. Replaying a filled plan with
// frozen = true makes the loss a fixed differentiable function of the
// parameters, which finite-difference checks need.
template <typename T>
struct StepPlan {
    Tensor<T> image;  // [H, W, 1]
    std::vector<BBox> line_boxes;
    std::vector<GraphicalProposal> proposals;
    std::vector<int> positions;  // memory position of each proposal
    MatchResult match;
    RelationTargets targets;
    std::vector<std::pair<int, int>> pairs;  // typed pairs, positives first
    std::vector<int> pair_labels;
    std::vector<Tensor<T>> fixed_refs;  // reference boxes before each layer
};

template <typename T>
StepPlan<T> prepare_plan(const TrainItem& item, int shorter_side, int long_cap) {
    StepPlan<T> p;
    auto [w, h] = scaled_size(item.image.width, item.image.height, shorter_side, long_cap);
    const Raster& src = item.image;
    p.image = raster_to_tensor<T>(w == src.width && h == src.height ? src
                                                                    : resize_raster(src, w, h));
    for (const TextLine& l : item.page.lines) p.line_boxes.push_back(l.box);
    return p;
}

// Weighted loss contributions per head, already scaled by their weights so
// the fields sum to total.
struct LossBreakdown {
    double cls = 0, l1 = 0, giou = 0, rel = 0, type = 0, rolebox = 0, total = 0;

    LossBreakdown& operator+=(const LossBreakdown& o) {
        cls += o.cls;
        l1 += o.l1;
        giou += o.giou;
        rel += o.rel;
        type += o.type;
        rolebox += o.rolebox;
        total += o.total;
        return *this;
    }

    LossBreakdown& operator*=(double f) {
        cls *= f;
        l1 *= f;
        giou *= f;
        rel *= f;
        type *= f;
        rolebox *= f;
        total *= f;
        return *this;
    }
};

template <typename T>
struct ImageLoss {
    typename Graph<T>::Ref total;
    LossBreakdown parts;
    StepPlan<T> plan;
};

// Full supervised loss of one page: selection classification over every
// memory position with down-weighted background, box regression on matched
// positions and on every decoder layer's refinements, relation score and
// type losses per layer, and role box regression against the union extents
// of each role present on the page. With frozen = false the plan's
// discrete slots are filled from this forward pass; with frozen = true they
// are replayed as given.
template <typename T>
ImageLoss<T> image_loss(const DlaModel<T>& m, Session<T>& s, const TrainItem& item,
                        const TrainConfig& cfg, const LossPriors& priors, Rng& rng,
                        StepPlan<T> plan, bool frozen) {
    auto& g = s.g;
    const LossWeights& w = cfg.weights;
    int C = m.vocab.num_categories();
    int G = static_cast<int>(item.page.graphics.size());
    int N = static_cast<int>(plan.line_boxes.size());

    auto im = g.input(plan.image);
    FeaturePyramid<T> pyr = m.encoder.forward(s, im);
    int S = pyr.total_positions();

    SelectionOutput<T> sel;
    if (frozen) {
        sel = m.encoder.score(s, pyr);
        sel.selected = plan.positions;
        sel.proposals = plan.proposals;
    } else {
        sel = m.encoder.select(s, pyr, cfg.top_k);
        plan.positions = sel.selected;
        plan.proposals = sel.proposals;
    }
    int K = static_cast<int>(plan.proposals.size());

    if (!frozen) {
        const Tensor<T>& probs = g.val(g.softmax(sel.cls_logits));
        std::vector<double> cat_probs(static_cast<size_t>(K) * C);
        for (int k = 0; k < K; ++k)
            for (int c = 0; c < C; ++c)
                cat_probs[static_cast<size_t>(k) * C + c] = probs.at(plan.positions[k], c);
        plan.match = match_graphics(plan.proposals, cat_probs, C, item.page.graphics, w);
        plan.targets = map_relation_targets(item.matrix, N, plan.match, K);
    }

    ImageLoss<T> out;
    std::vector<typename Graph<T>::Ref> terms;
    auto add_term = [&](typename Graph<T>::Ref r, double weight, double& slot) {
        auto wr = g.scale(r, static_cast<T>(weight));
        slot += g.val(wr).data[0];
        terms.push_back(wr);
    };

    // selection classification: matched positions carry their category,
    // everything else is background
    std::vector<int> cls_targets(S, C);
    std::vector<double> row_w(S, w.background);
    std::vector<int> matched_pos, matched_query;
    Tensor<T> gt_boxes({std::max(G, 1), 4});
    for (int gi = 0; gi < G; ++gi) {
        int k = plan.match.proposal_of_gt[gi];
        matched_query.push_back(k);
        matched_pos.push_back(plan.positions[k]);
        cls_targets[plan.positions[k]] = item.page.graphics[gi].category;
        row_w[plan.positions[k]] = 1.0;
        const BBox& b = item.page.graphics[gi].box;
        gt_boxes.at(gi, 0) = static_cast<T>(b.cx);
        gt_boxes.at(gi, 1) = static_cast<T>(b.cy);
        gt_boxes.at(gi, 2) = static_cast<T>(b.w);
        gt_boxes.at(gi, 3) = static_cast<T>(b.h);
    }
    add_term(weighted_class_loss(g, sel.cls_logits, cls_targets, row_w), w.cls, out.parts.cls);

    typename Graph<T>::Ref gtb{};
    auto box_terms = [&](typename Graph<T>::Ref pred) {
        add_term(g.scale(g.sum(g.abs(g.sub(pred, gtb))), static_cast<T>(1.0 / G)), w.l1,
                 out.parts.l1);
        Tensor<T> ones({G});
        for (int i = 0; i < G; ++i) ones.data[i] = T(1);
        add_term(g.mean(g.sub(g.input(ones), giou_rows(g, pred, gtb))), w.giou, out.parts.giou);
    };
    if (G > 0) {
        gtb = g.input(gt_boxes);
        box_terms(g.gather_rows(sel.boxes, matched_pos));
    }

    QueryBank<T> bank = init_queries(s, m.decoder.table, plan.proposals, plan.line_boxes);
    int H = bank.H(), Wq = bank.W(), R = bank.num_roles;
    std::vector<DecoderLayerOutput<T>> outs =
        m.decoder.forward(s, bank, pyr, frozen ? &plan.fixed_refs : nullptr);
    if (!frozen) {
        plan.fixed_refs.clear();
        plan.fixed_refs.push_back(bank.boxes);
        for (size_t l = 0; l + 1 < outs.size(); ++l) plan.fixed_refs.push_back(outs[l].ref_boxes);
    }

    size_t nsup = plan.targets.rows.size();
    std::vector<std::pair<int, int>> unit_cells, role_cells;
    for (size_t i = 0; i < nsup; ++i) {
        unit_cells.push_back({plan.targets.rows[i], plan.targets.unit_cols[i]});
        if (plan.targets.role_cols[i] >= 0)
            role_cells.push_back({plan.targets.rows[i], plan.targets.role_cols[i]});
    }
    if (!frozen) {
        for (size_t i = 0; i < nsup; ++i) {
            int row = plan.targets.rows[i];
            int ucol = plan.targets.unit_cols[i];
            int rcol = plan.targets.role_cols[i] >= 0 ? H + plan.targets.role_cols[i] : -1;
            plan.pairs.push_back({row, ucol});
            plan.pair_labels.push_back(static_cast<int>(plan.targets.unit_types[i]));
            if (rcol >= 0) {
                plan.pairs.push_back({row, rcol});
                plan.pair_labels.push_back(static_cast<int>(RelationType::LogicalRoleRel));
            }
            for (int t = 0, npos = rcol >= 0 ? 2 : 1; t < npos; ++t) {
                int j;
                do {
                    j = static_cast<int>(rng.uniform_int(0, Wq - 1));
                } while (j == ucol || j == rcol);
                plan.pairs.push_back({row, j});
                plan.pair_labels.push_back(static_cast<int>(RelationType::None));
            }
        }
    }

    // union extents of every role present on the page
    std::vector<int> present_roles;
    Tensor<T> role_gt;
    {
        std::vector<std::vector<BBox>> role_boxes(R);
        for (const Region& reg : item.page.regions)
            for (int uid : reg.members) role_boxes[reg.role].push_back(item.page.unit_box(uid));
        for (int r = 0; r < R; ++r)
            if (!role_boxes[r].empty()) present_roles.push_back(r);
        role_gt = Tensor<T>({std::max<int>(1, static_cast<int>(present_roles.size())), 4});
        for (size_t i = 0; i < present_roles.size(); ++i) {
            BBox b = union_box(role_boxes[present_roles[i]]);
            role_gt.at(static_cast<int>(i), 0) = static_cast<T>(b.cx);
            role_gt.at(static_cast<int>(i), 1) = static_cast<T>(b.cy);
            role_gt.at(static_cast<int>(i), 2) = static_cast<T>(b.w);
            role_gt.at(static_cast<int>(i), 3) = static_cast<T>(b.h);
        }
    }

    typename Graph<T>::Ref role_gtb{};
    int P = static_cast<int>(present_roles.size());
    Tensor<T> role_ones({std::max(P, 1)});
    for (int i = 0; i < P; ++i) role_ones.data[i] = T(1);
    if (P > 0) role_gtb = g.input(role_gt);

    Tensor<T> role_off, type_off;
    if (cfg.logit_adjust) {
        role_off = prior_offsets<T>(priors.role, cfg.tau);
        type_off = prior_offsets<T>(priors.type, cfg.tau);
    }

    for (const DecoderLayerOutput<T>& layer : outs) {
        if (G > 0 && layer.has_graph_boxes)
            box_terms(g.gather_rows(layer.graph_boxes, matched_query));
        if (nsup > 0) {
            RelationScores<T> rs = m.relation.relation_scores(s, layer.queries, H);
            auto unit_log = g.log_softmax(g.slice_cols(rs.f, 0, H));
            add_term(masked_nll(g, unit_log, unit_cells), w.rel, out.parts.rel);
            if (!role_cells.empty()) {
                auto role_f = g.slice_cols(rs.f, H, Wq);
                if (cfg.logit_adjust) role_f = g.add(role_f, g.input(role_off));
                add_term(masked_nll(g, g.log_softmax(role_f), role_cells), w.rel, out.parts.rel);
            }
            auto type_logits = m.relation.classify_pairs(s, layer.queries, plan.pairs);
            if (cfg.logit_adjust) type_logits = g.add(type_logits, g.input(type_off));
            add_term(g.cross_entropy(type_logits, plan.pair_labels), w.type, out.parts.type);
        }
        if (P > 0 && layer.has_role_boxes) {
            auto pred = g.gather_rows(layer.role_boxes, present_roles);
            add_term(g.scale(g.sum(g.abs(g.sub(pred, role_gtb))), static_cast<T>(1.0 / P)),
                     w.rolebox, out.parts.rolebox);
            add_term(g.mean(g.sub(g.input(role_ones), giou_rows(g, pred, role_gtb))), w.rolebox,
                     out.parts.rolebox);
        }
    }

    typename Graph<T>::Ref total = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) total = g.add(total, terms[i]);
    out.total = total;
    out.parts.total = g.val(total).data[0];
    out.plan = std::move(plan);
    return out;
}

struct StepStats {
    int step = 0;
    LossBreakdown losses;  // averaged over the batch
    double lr_transformer = 0, lr_backbone = 0;
};

// Minibatch AdamW driver: epochs shuffle the items, every image picks a
// random training scale, gradients accumulate per image and average over
// the batch.
template <typename T>
class Trainer {
  public:
    Trainer(DlaModel<T>& model, ParameterStore<T>& store, std::vector<TrainItem> items,
            const TrainConfig& cfg)
        : model_(&model), store_(&store), items_(std::move(items)), cfg_(cfg),
          opt_(cfg.opt, store), rng_(cfg.seed) {
        if (items_.empty()) throw TrainError("trainer: no training items");
        if (cfg_.batch_size < 1) throw TrainError("trainer: batch size must be positive");
        if (cfg_.scales.empty()) throw TrainError("trainer: no training scales");
        priors_ = estimate_priors(items_, model_->vocab.num_roles());
        order_.resize(items_.size());
        std::iota(order_.begin(), order_.end(), 0);
        cursor_ = items_.size();
    }

    const LossPriors& priors() const { return priors_; }
    int steps_done() const { return step_; }

    StepStats step() {
        std::vector<Tensor<T>> grad_sum;
        LossBreakdown acc;
        for (int b = 0; b < cfg_.batch_size; ++b) {
            const TrainItem& item = items_[next_index()];
            int scale = cfg_.scales[rng_.uniform_int(0, static_cast<int64_t>(cfg_.scales.size()) - 1)];
            StepPlan<T> plan = prepare_plan<T>(item, scale, cfg_.long_side_cap);
            Session<T> s(*store_, true);
            ImageLoss<T> il =
                image_loss(*model_, s, item, cfg_, priors_, rng_, std::move(plan), false);
            if (!std::isfinite(il.parts.total)) {
                std::ostringstream msg;
                msg << "trainer: non-finite loss at step " << step_ + 1 << " (cls "
                    << il.parts.cls << ", l1 " << il.parts.l1 << ", giou " << il.parts.giou
                    << ", rel " << il.parts.rel << ", type " << il.parts.type << ", rolebox "
                    << il.parts.rolebox << ")";
                throw TrainError(msg.str());
            }
            acc += il.parts;
            s.g.backward(il.total);
            std::vector<Tensor<T>> gr = s.grads();
            if (grad_sum.empty())
                grad_sum = std::move(gr);
            else
                for (size_t i = 0; i < grad_sum.size(); ++i)
                    for (int64_t j = 0; j < grad_sum[i].numel(); ++j)
                        grad_sum[i].data[j] += gr[i].data[j];
        }
        T inv = static_cast<T>(1.0 / cfg_.batch_size);
        for (Tensor<T>& t : grad_sum)
            for (T& v : t.data) v *= inv;
        acc *= 1.0 / cfg_.batch_size;
        opt_.step(*store_, grad_sum);
        ++step_;
        return {step_, acc, cfg_.opt.lr_transformer, cfg_.opt.lr_backbone};
    }

  private:
    size_t next_index() {
        if (cursor_ >= order_.size()) {
            for (size_t i = order_.size(); i > 1; --i)
                std::swap(order_[i - 1], order_[rng_.uniform_int(0, static_cast<int64_t>(i) - 1)]);
            cursor_ = 0;
        }
        return order_[cursor_++];
    }

    DlaModel<T>* model_;
    ParameterStore<T>* store_;
    std::vector<TrainItem> items_;
    TrainConfig cfg_;
    AdamW<T> opt_;
    Rng rng_;
    LossPriors priors_;
    std::vector<size_t> order_;
    size_t cursor_ = 0;
    int step_ = 0;
};

} // namespace dla
