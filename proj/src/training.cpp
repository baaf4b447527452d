#include "dla/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dla/geometry.hpp"

namespace dla {

std::vector<int> hungarian_match(const std::vector<double>& cost, int rows, int cols) {
    if (rows < 0 || cols < 0 || rows > cols)
        throw std::invalid_argument("hungarian_match: need 0 <= rows <= cols, got " +
                                    std::to_string(rows) + "x" + std::to_string(cols));
    if (static_cast<int64_t>(cost.size()) != static_cast<int64_t>(rows) * cols)
        throw std::invalid_argument("hungarian_match: cost size mismatch");
    if (rows == 0) return {};
    for (double c : cost)
        if (!std::isfinite(c)) throw std::invalid_argument("hungarian_match: non-finite cost");

    const double inf = std::numeric_limits<double>::infinity();
    // Shortest augmenting path with dual potentials, 1-indexed.
    std::vector<double> u(rows + 1, 0), v(cols + 1, 0);
    std::vector<int> match(cols + 1, 0), way(cols + 1, 0);
    for (int i = 1; i <= rows; ++i) {
        match[0] = i;
        int j0 = 0;
        std::vector<double> minv(cols + 1, inf);
        std::vector<char> used(cols + 1, 0);
        do {
            used[j0] = 1;
            int i0 = match[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= cols; ++j) {
                if (used[j]) continue;
                double cur = cost[static_cast<size_t>(i0 - 1) * cols + (j - 1)] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= cols; ++j) {
                if (used[j]) {
                    u[match[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (match[j0] != 0);
        do {
            int j1 = way[j0];
            match[j0] = match[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> col_of_row(rows, -1);
    for (int j = 1; j <= cols; ++j)
        if (match[j] != 0) col_of_row[match[j] - 1] = j - 1;
    return col_of_row;
}

MatchResult match_graphics(const std::vector<GraphicalProposal>& proposals,
                           const std::vector<double>& category_probs, int num_categories,
                           const std::vector<GraphicalObject>& gt, const LossWeights& w) {
    int k = static_cast<int>(proposals.size());
    int gcount = static_cast<int>(gt.size());
    if (gcount > k)
        throw std::invalid_argument("match_graphics: " + std::to_string(gcount) +
                                    " objects exceed " + std::to_string(k) + " proposals");
    if (static_cast<int>(category_probs.size()) != k * num_categories)
        throw std::invalid_argument("match_graphics: category_probs size mismatch");
    MatchResult res;
    res.proposal_of_gt.assign(gcount, -1);
    res.gt_of_proposal.assign(k, -1);
    if (gcount == 0) return res;

    std::vector<double> cost(static_cast<size_t>(gcount) * k);
    for (int g = 0; g < gcount; ++g) {
        if (gt[g].category < 0 || gt[g].category >= num_categories)
            throw std::invalid_argument("match_graphics: category out of range");
        for (int j = 0; j < k; ++j) {
            double p = category_probs[static_cast<size_t>(j) * num_categories + gt[g].category];
            const BBox& a = proposals[j].box;
            const BBox& b = gt[g].box;
            double l1 = std::abs(a.cx - b.cx) + std::abs(a.cy - b.cy) +
                        std::abs(a.w - b.w) + std::abs(a.h - b.h);
            cost[static_cast<size_t>(g) * k + j] =
                w.cls * (-p) + w.l1 * l1 + w.giou * (1.0 - giou(a, b));
        }
    }
    res.proposal_of_gt = hungarian_match(cost, gcount, k);
    for (int g = 0; g < gcount; ++g) res.gt_of_proposal[res.proposal_of_gt[g]] = g;
    return res;
}

RelationTargets map_relation_targets(const RelationLabelMatrix& m, int num_lines,
                                     const MatchResult& match, int num_queries) {
    int h = m.height();
    int gcount = h - num_lines;
    if (gcount < 0 || static_cast<int>(match.proposal_of_gt.size()) != gcount)
        throw std::invalid_argument("map_relation_targets: match does not cover the graphics");
    auto to_model = [&](int idx) {
        if (idx < num_lines) return idx;
        int q = match.proposal_of_gt[idx - num_lines];
        if (q < 0 || q >= num_queries)
            throw std::invalid_argument("map_relation_targets: proposal index out of range");
        return num_lines + q;
    };
    RelationTargets t;
    for (int row = 0; row < h; ++row) {
        t.rows.push_back(to_model(row));
        t.unit_cols.push_back(to_model(m.unit_target(row)));
        t.unit_types.push_back(m.unit_type(row));
        t.role_cols.push_back(m.num_roles > 0 ? m.role_target(row) : -1);
    }
    return t;
}

} // namespace dla
