#include "dla/evalmetrics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "dla/geometry.hpp"
#include "json.hpp"

namespace dla {

int edit_distance(const std::vector<int>& a, const std::vector<int>& b) {
    int n = static_cast<int>(a.size()), m = static_cast<int>(b.size());
    std::vector<int> prev(m + 1), cur(m + 1);
    std::iota(prev.begin(), prev.end(), 0);
    for (int i = 1; i <= n; ++i) {
        cur[0] = i;
        for (int j = 1; j <= m; ++j) {
            int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

namespace {

// Greedy unique matching by descending IoU; returns gt index per pred, -1
// when unmatched.
std::vector<int> greedy_iou_match(const std::vector<BBox>& pred, const std::vector<BBox>& gt,
                                  double thr) {
    struct Cand {
        double iou;
        int p, g;
    };
    std::vector<Cand> cands;
    for (size_t p = 0; p < pred.size(); ++p)
        for (size_t g = 0; g < gt.size(); ++g) {
            double v = iou(pred[p], gt[g]);
            if (v >= thr) cands.push_back({v, static_cast<int>(p), static_cast<int>(g)});
        }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (a.p != b.p) return a.p < b.p;
        return a.g < b.g;
    });
    std::vector<int> gt_of_pred(pred.size(), -1);
    std::vector<char> gt_used(gt.size(), 0);
    for (const Cand& c : cands) {
        if (gt_of_pred[c.p] != -1 || gt_used[c.g]) continue;
        gt_of_pred[c.p] = c.g;
        gt_used[c.g] = 1;
    }
    return gt_of_pred;
}

std::vector<int> text_region_ids(const DocumentPage& p) { return p.reading_order; }

std::vector<int> graphical_region_ids(const DocumentPage& p) {
    // global order: anchor at the linked text region's reading position,
    // unlinked graphics after all, ties by box position
    std::map<int, int> order_of_region;
    for (size_t i = 0; i < p.reading_order.size(); ++i)
        order_of_region[p.reading_order[i]] = static_cast<int>(i);
    std::map<int, int> link_of;
    for (auto& [g, t] : p.links) link_of[g] = t;
    std::vector<int> ids;
    for (const Region& r : p.regions)
        if (p.region_is_graphical(r)) ids.push_back(r.id);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        auto anchor = [&](int rid) {
            auto it = link_of.find(rid);
            if (it == link_of.end()) return std::numeric_limits<int>::max();
            auto ot = order_of_region.find(it->second);
            return ot == order_of_region.end() ? std::numeric_limits<int>::max() : ot->second;
        };
        int aa = anchor(a), ab = anchor(b);
        if (aa != ab) return aa < ab;
        BBox ba = p.region_box(p.regions[a]);
        BBox bb = p.region_box(p.regions[b]);
        if (ba.cy != bb.cy) return ba.cy < bb.cy;
        if (ba.cx != bb.cx) return ba.cx < bb.cx;
        return a < b;
    });
    return ids;
}

struct MatchedSequences {
    std::vector<int> pred_sym;
    std::vector<int> gt_sym;
    std::vector<int> gt_of_pred_region;  // by region id
};

MatchedSequences match_sequences(const DocumentPage& pred, const DocumentPage& gt,
                                 RedsKind kind) {
    std::vector<int> pids = kind == RedsKind::Text ? text_region_ids(pred)
                                                   : graphical_region_ids(pred);
    std::vector<int> gids = kind == RedsKind::Text ? text_region_ids(gt)
                                                   : graphical_region_ids(gt);
    std::vector<BBox> pboxes, gboxes;
    for (int id : pids) pboxes.push_back(pred.region_box(pred.regions[id]));
    for (int id : gids) gboxes.push_back(gt.region_box(gt.regions[id]));
    std::vector<int> gt_of_pred = greedy_iou_match(pboxes, gboxes, 0.5);

    MatchedSequences out;
    out.gt_of_pred_region.assign(pred.regions.size(), -1);
    for (size_t i = 0; i < pids.size(); ++i) {
        int g = gt_of_pred[i];
        out.pred_sym.push_back(g >= 0 ? gids[g] : -1);
        out.gt_of_pred_region[pids[i]] = g >= 0 ? gids[g] : -1;
    }
    for (int id : gids) out.gt_sym.push_back(id);
    return out;
}

} // namespace

double reds(const DocumentPage& pred, const DocumentPage& gt, RedsKind kind) {
    MatchedSequences ms = match_sequences(pred, gt, kind);
    size_t lp = ms.pred_sym.size(), lg = ms.gt_sym.size();
    if (lp == 0 && lg == 0) return 1.0;
    int d = edit_distance(ms.pred_sym, ms.gt_sym);
    return 1.0 - static_cast<double>(d) / static_cast<double>(std::max(lp, lg));
}

double link_fraction(const DocumentPage& pred, const DocumentPage& gt) {
    if (pred.links.empty() && gt.links.empty()) return 1.0;
    MatchedSequences text = match_sequences(pred, gt, RedsKind::Text);
    MatchedSequences graph = match_sequences(pred, gt, RedsKind::Graphical);
    int correct = 0;
    for (auto& [pg, pt] : pred.links) {
        int mg = graph.gt_of_pred_region[pg];
        int mt = text.gt_of_pred_region[pt];
        if (mg < 0 || mt < 0) continue;
        for (auto& [gg, gtr] : gt.links)
            if (gg == mg && gtr == mt) {
                ++correct;
                break;
            }
    }
    return static_cast<double>(correct) /
           static_cast<double>(std::max(pred.links.size(), gt.links.size()));
}

RedsSummary reds_corpus(const std::vector<DocumentPage>& preds,
                        const std::vector<DocumentPage>& gts) {
    RedsSummary s;
    if (preds.size() != gts.size())
        throw std::invalid_argument("reds_corpus: corpus size mismatch");
    if (preds.empty()) return s;
    double t = 0, g = 0, l = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        t += reds(preds[i], gts[i], RedsKind::Text);
        g += reds(preds[i], gts[i], RedsKind::Graphical);
        l += link_fraction(preds[i], gts[i]);
    }
    s.text = t / preds.size();
    s.graphical = g / preds.size();
    s.links = l / preds.size();
    return s;
}

GroupingF1 grouping_f1(const DocumentPage& pred, const DocumentPage& gt) {
    auto member_lists = [](const DocumentPage& p) {
        std::vector<std::vector<int>> out;
        for (const Region& r : p.regions)
            if (!p.region_is_graphical(r)) out.push_back(r.members);
        return out;
    };
    std::vector<std::vector<int>> pm = member_lists(pred), gm = member_lists(gt);
    GroupingF1 f;
    if (pm.empty() && gm.empty()) return f;
    std::vector<bool> used(gm.size(), false);
    int correct = 0;
    for (const auto& p : pm)
        for (size_t j = 0; j < gm.size(); ++j)
            if (!used[j] && gm[j] == p) {
                used[j] = true;
                ++correct;
                break;
            }
    f.precision = pm.empty() ? 0.0 : static_cast<double>(correct) / pm.size();
    f.recall = gm.empty() ? 0.0 : static_cast<double>(correct) / gm.size();
    f.f1 = f.precision + f.recall > 0 ? 2 * f.precision * f.recall / (f.precision + f.recall) : 0.0;
    return f;
}

std::vector<double> coco_thresholds() {
    std::vector<double> t;
    for (int i = 0; i < 10; ++i) t.push_back(0.5 + 0.05 * i);
    return t;
}

namespace {

// 101-point interpolated AP from match flags in descending-score order.
double ap_from_matches(const std::vector<char>& is_tp, int npos) {
    int tp = 0, fp = 0;
    std::vector<double> prec, rec;
    for (char t : is_tp) {
        t ? ++tp : ++fp;
        prec.push_back(static_cast<double>(tp) / (tp + fp));
        rec.push_back(static_cast<double>(tp) / npos);
    }
    for (int k = static_cast<int>(prec.size()) - 2; k >= 0; --k)
        prec[k] = std::max(prec[k], prec[k + 1]);
    double ap = 0;
    size_t k = 0;
    for (int i = 0; i <= 100; ++i) {
        double r = i / 100.0;
        while (k < rec.size() && rec[k] < r) ++k;
        if (k < rec.size()) ap += prec[k];
    }
    return ap / 101.0;
}

// Generic scorer: dets carry (image, score, payload index); iou_fn computes
// overlap between a det payload and a gt payload.
template <typename IouFn>
MapResult map_impl(int num_classes, const std::vector<double>& thresholds,
                   const std::vector<std::tuple<int, int, double>>& dets,  // (class, image, score)
                   const std::vector<std::pair<int, int>>& gts,           // (class, image)
                   IouFn&& iou_fn) {
    MapResult res;
    res.per_class_ap.assign(num_classes, -1.0);
    for (int c = 0; c < num_classes; ++c) {
        std::vector<int> det_idx, gt_idx;
        for (size_t i = 0; i < dets.size(); ++i)
            if (std::get<0>(dets[i]) == c) det_idx.push_back(static_cast<int>(i));
        for (size_t i = 0; i < gts.size(); ++i)
            if (gts[i].first == c) gt_idx.push_back(static_cast<int>(i));
        if (gt_idx.empty()) continue;
        std::stable_sort(det_idx.begin(), det_idx.end(), [&](int a, int b) {
            return std::get<2>(dets[a]) > std::get<2>(dets[b]);
        });
        double ap_sum = 0;
        for (double thr : thresholds) {
            std::vector<char> gt_used(gt_idx.size(), 0);
            std::vector<char> is_tp;
            for (int di : det_idx) {
                int best = -1;
                double best_iou = thr;
                for (size_t k = 0; k < gt_idx.size(); ++k) {
                    if (gt_used[k]) continue;
                    if (gts[gt_idx[k]].second != std::get<1>(dets[di])) continue;
                    double v = iou_fn(di, gt_idx[k]);
                    if (v >= best_iou) {
                        best_iou = v;
                        best = static_cast<int>(k);
                    }
                }
                if (best >= 0) {
                    gt_used[best] = 1;
                    is_tp.push_back(1);
                } else {
                    is_tp.push_back(0);
                }
            }
            ap_sum += ap_from_matches(is_tp, static_cast<int>(gt_idx.size()));
        }
        res.per_class_ap[c] = ap_sum / thresholds.size();
    }
    double total = 0;
    int present = 0;
    for (double ap : res.per_class_ap)
        if (ap >= 0) {
            total += ap;
            ++present;
        }
    res.map = present > 0 ? total / present : 0.0;
    return res;
}

} // namespace

MapResult coco_map(const std::vector<Detection>& preds, const std::vector<GroundTruthBox>& gts,
                   int num_classes, const std::vector<double>& thresholds) {
    std::vector<std::tuple<int, int, double>> d;
    std::vector<std::pair<int, int>> g;
    for (const Detection& p : preds) d.emplace_back(p.category, p.image, p.score);
    for (const GroundTruthBox& t : gts) g.emplace_back(t.category, t.image);
    return map_impl(num_classes, thresholds, d, g, [&](int di, int gi) {
        return iou(preds[di].box, gts[gi].box);
    });
}

namespace {

// Fixed-grid mask of a box union, one bit per cell.
std::vector<uint64_t> rasterize(const std::vector<BBox>& boxes, int raster) {
    std::vector<uint64_t> bits((static_cast<size_t>(raster) * raster + 63) / 64, 0);
    for (const BBox& b : boxes) {
        int x0 = std::clamp(static_cast<int>(std::floor(b.x1() * raster)), 0, raster);
        int x1 = std::clamp(static_cast<int>(std::ceil(b.x2() * raster)), 0, raster);
        int y0 = std::clamp(static_cast<int>(std::floor(b.y1() * raster)), 0, raster);
        int y1 = std::clamp(static_cast<int>(std::ceil(b.y2() * raster)), 0, raster);
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                size_t idx = static_cast<size_t>(y) * raster + x;
                bits[idx >> 6] |= 1ull << (idx & 63);
            }
    }
    return bits;
}

double mask_iou(const std::vector<uint64_t>& a, const std::vector<uint64_t>& b) {
    uint64_t inter = 0, uni = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        inter += std::popcount(a[i] & b[i]);
        uni += std::popcount(a[i] | b[i]);
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

} // namespace

MapResult coco_map_segm(const std::vector<MaskDetection>& preds,
                        const std::vector<MaskGroundTruth>& gts, int num_classes, int raster,
                        const std::vector<double>& thresholds) {
    std::vector<std::vector<uint64_t>> pmasks, gmasks;
    pmasks.reserve(preds.size());
    gmasks.reserve(gts.size());
    for (const MaskDetection& p : preds) pmasks.push_back(rasterize(p.boxes, raster));
    for (const MaskGroundTruth& t : gts) gmasks.push_back(rasterize(t.boxes, raster));
    std::vector<std::tuple<int, int, double>> d;
    std::vector<std::pair<int, int>> g;
    for (const MaskDetection& p : preds) d.emplace_back(p.category, p.image, p.score);
    for (const MaskGroundTruth& t : gts) g.emplace_back(t.category, t.image);
    return map_impl(num_classes, thresholds, d, g, [&](int di, int gi) {
        return mask_iou(pmasks[di], gmasks[gi]);
    });
}

RelationAccuracy relation_accuracy(const RelationPrediction& pred, const RelationLabelMatrix& m) {
    int h = m.height();
    if (pred.num_units() != h || static_cast<int>(pred.unit_target.size()) != h)
        throw std::invalid_argument("relation_accuracy: row count mismatch");
    RelationAccuracy acc;
    if (h == 0) return acc;
    int u = 0, r = 0, t = 0;
    for (int i = 0; i < h; ++i) {
        bool unit_ok = pred.unit_target[i] == m.unit_target(i);
        if (unit_ok) ++u;
        if (unit_ok && pred.unit_type[i] == m.unit_type(i)) ++t;
        if (m.num_roles > 0 && !pred.role_target.empty() &&
            pred.role_target[i] == m.role_target(i))
            ++r;
    }
    acc.unit = static_cast<double>(u) / h;
    acc.role = static_cast<double>(r) / h;
    acc.type = static_cast<double>(t) / h;
    return acc;
}

RelationAccuracy relation_accuracy(const RelationPrediction& pred, const RelationTargets& t) {
    RelationAccuracy acc;
    if (t.rows.empty()) return acc;
    int u = 0, r = 0, ty = 0;
    for (size_t k = 0; k < t.rows.size(); ++k) {
        int row = t.rows[k];
        if (row < 0 || row >= static_cast<int>(pred.unit_target.size()))
            throw std::invalid_argument("relation_accuracy: supervised row out of range");
        bool unit_ok = pred.unit_target[row] == t.unit_cols[k];
        if (unit_ok) ++u;
        if (unit_ok && pred.unit_type[row] == t.unit_types[k]) ++ty;
        if (t.role_cols[k] >= 0 && !pred.role_target.empty() &&
            pred.role_target[row] == t.role_cols[k])
            ++r;
    }
    double n = static_cast<double>(t.rows.size());
    acc.unit = u / n;
    acc.role = r / n;
    acc.type = ty / n;
    return acc;
}

DocumentPage page_from_prediction(const DocumentPage& gt, const DocumentStructure& s,
                                  const std::vector<GraphicalProposal>& graphics) {
    DocumentPage p;
    p.id = gt.id;
    p.width = gt.width;
    p.height = gt.height;
    p.lines = gt.lines;
    int n = p.num_lines();
    for (size_t g = 0; g < graphics.size(); ++g)
        p.graphics.push_back({n + static_cast<int>(g), graphics[g].box, graphics[g].category});
    p.regions = s.regions;
    p.reading_order = s.reading_order;
    p.links = s.links;
    return p;
}

std::string metric_report_json(const MetricReport& r) {
    nlohmann::json j;
    j["per_class_ap"] = r.per_class_ap;
    j["map"] = r.map;
    j["text_reds"] = r.text_reds;
    j["graphical_reds"] = r.graphical_reds;
    j["graphical_links"] = r.graphical_links;
    j["grouping"] = {{"precision", r.grouping.precision},
                     {"recall", r.grouping.recall},
                     {"f1", r.grouping.f1}};
    j["relation_acc"] = {{"unit", r.relation_acc.unit},
                         {"role", r.relation_acc.role},
                         {"type", r.relation_acc.type}};
    return j.dump(1);
}

} // namespace dla
