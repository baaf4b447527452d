#include "dla/structdecode.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace dla {

RelationPrediction prediction_from_matrix(const RelationLabelMatrix& mat,
                                          const DocumentPage& page) {
    RelationPrediction p;
    for (const TextLine& l : page.lines) p.line_boxes.push_back(l.box);
    for (const GraphicalObject& g : page.graphics)
        p.graphics.push_back({g.box, g.category, 1.0});
    const int h = mat.num_units;
    p.unit_target.resize(h);
    p.unit_score.assign(h, 1.0);
    p.unit_type.resize(h);
    p.role_target.resize(h);
    p.role_score.assign(h, 1.0);
    for (int i = 0; i < h; ++i) {
        p.unit_target[i] = mat.unit_target(i);
        p.unit_type[i] = mat.unit_type(i);
        p.role_target[i] = mat.role_target(i);
    }
    return p;
}

RelationPrediction filter_graphics(const RelationPrediction& pred, double min_score) {
    const int n = pred.num_lines();
    RelationPrediction out;
    out.line_boxes = pred.line_boxes;
    auto copy_row = [&](int row) {
        out.unit_target.push_back(pred.unit_target[row]);
        out.unit_score.push_back(pred.unit_score[row]);
        out.unit_type.push_back(pred.unit_type[row]);
        if (!pred.role_target.empty()) {
            out.role_target.push_back(pred.role_target[row]);
            out.role_score.push_back(pred.role_score[row]);
        }
    };
    for (int i = 0; i < n; ++i) copy_row(i);
    for (int g = 0; g < pred.num_graphics(); ++g) {
        if (pred.graphics[g].score < min_score) continue;
        out.graphics.push_back(pred.graphics[g]);
        copy_row(n + g);
    }
    return out;
}

namespace {

struct Dsu {
    std::vector<int> parent;
    explicit Dsu(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    void unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

} // namespace

std::vector<std::vector<int>> group_lines(const RelationPrediction& pred) {
    const int n = pred.num_lines();
    std::vector<int> succ(n, -1), indeg(n, 0);
    Dsu dsu(n);
    for (int i = 0; i < n; ++i) {
        if (pred.unit_type[i] != RelationType::IntraRegion) continue;
        int j = pred.unit_target[i];
        if (j < 0 || j >= n || j == i) continue;
        succ[i] = j;
        ++indeg[j];
        dsu.unite(i, j);
    }

    std::map<int, std::vector<int>> comp;
    for (int i = 0; i < n; ++i) comp[dsu.find(i)].push_back(i);

    std::vector<std::vector<int>> groups;
    std::vector<char> visited(n, 0);
    for (auto& [root, members] : comp) {
        std::vector<int> ordered;
        auto walk = [&](int start) {
            for (int v = start; v != -1 && !visited[v]; v = succ[v]) {
                visited[v] = 1;
                ordered.push_back(v);
            }
        };
        for (int v : members)
            if (indeg[v] == 0) walk(v);
        for (int v : members)
            if (!visited[v]) walk(v);
        groups.push_back(std::move(ordered));
    }
    std::sort(groups.begin(), groups.end(),
              [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return groups;
}

int vote_role(const RelationPrediction& pred, const std::vector<int>& members, int num_roles) {
    std::vector<int> count(num_roles, 0);
    std::vector<double> score(num_roles, 0.0);
    for (int uid : members) {
        int r = pred.role_target[uid];
        if (r < 0 || r >= num_roles) continue;
        ++count[r];
        score[r] += pred.role_score[uid];
    }
    int best = 0;
    for (int r = 1; r < num_roles; ++r)
        if (count[r] > count[best] || (count[r] == count[best] && score[r] > score[best]))
            best = r;
    return best;
}

DocumentStructure decode_structure(const RelationPrediction& pred, const RoleVocab& vocab) {
    const int n = pred.num_lines();
    const int k = pred.num_graphics();

    DocumentStructure s;
    std::vector<int> region_of_line(n, -1);
    for (auto& members : group_lines(pred)) {
        Region r;
        r.id = static_cast<int>(s.regions.size());
        r.role = vote_role(pred, members, vocab.num_roles());
        r.members = members;
        for (int uid : members) region_of_line[uid] = r.id;
        s.regions.push_back(std::move(r));
    }
    const int num_text_regions = static_cast<int>(s.regions.size());
    for (int g = 0; g < k; ++g) {
        Region r;
        r.id = num_text_regions + g;
        r.role = vocab.category_role[pred.graphics[g].category];
        r.members = {n + g};
        s.regions.push_back(std::move(r));
    }

    // reading-order edges come from each text region's last member
    struct Edge {
        double score;
        int src, dst;
    };
    std::vector<Edge> edges;
    for (int t = 0; t < num_text_regions; ++t) {
        int term = s.regions[t].members.back();
        if (pred.unit_type[term] != RelationType::InterRegion) continue;
        int j = pred.unit_target[term];
        if (j < 0 || j >= n || region_of_line[j] == t) continue;
        edges.push_back({pred.unit_score[term], t, region_of_line[j]});
    }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.src != b.src) return a.src < b.src;
        return a.dst < b.dst;
    });

    std::vector<int> next(num_text_regions, -1), prev(num_text_regions, -1);
    auto reaches = [&](int from, int to) {
        for (int v = from; v != -1; v = next[v])
            if (v == to) return true;
        return false;
    };
    for (const Edge& e : edges) {
        if (next[e.src] != -1 || prev[e.dst] != -1) continue;
        if (reaches(e.dst, e.src)) continue;
        next[e.src] = e.dst;
        prev[e.dst] = e.src;
    }

    // concatenate chains top-to-bottom, left-to-right by head box
    std::vector<int> heads;
    for (int t = 0; t < num_text_regions; ++t)
        if (prev[t] == -1) heads.push_back(t);
    auto head_box = [&](int t) {
        std::vector<BBox> boxes;
        for (int uid : s.regions[t].members) boxes.push_back(pred.line_boxes[uid]);
        return union_box(boxes);
    };
    std::sort(heads.begin(), heads.end(), [&](int a, int b) {
        BBox ba = head_box(a), bb = head_box(b);
        if (ba.cy != bb.cy) return ba.cy < bb.cy;
        if (ba.cx != bb.cx) return ba.cx < bb.cx;
        return a < b;
    });
    for (int h : heads)
        for (int v = h; v != -1; v = next[v]) s.reading_order.push_back(v);

    // attachment links from graphic rows
    struct Cand {
        double score;
        int src, dst;
    };
    std::vector<Cand> cands;
    for (int g = 0; g < k; ++g) {
        int row = n + g;
        if (pred.unit_type[row] != RelationType::InterRegion) continue;
        int j = pred.unit_target[row];
        if (j < 0 || j >= n) continue;
        int dst = region_of_line[j];
        if (!vocab.attachable(s.regions[dst].role)) continue;
        cands.push_back({pred.unit_score[row], num_text_regions + g, dst});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.src < b.src;
    });
    std::vector<char> src_used(s.regions.size(), 0), dst_used(s.regions.size(), 0);
    for (const Cand& c : cands) {
        if (src_used[c.src] || dst_used[c.dst]) continue;
        src_used[c.src] = 1;
        dst_used[c.dst] = 1;
        s.links.emplace_back(c.src, c.dst);
    }
    std::sort(s.links.begin(), s.links.end());
    return s;
}

} // namespace dla
