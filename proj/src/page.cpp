#include "dla/page.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace dla {

int RoleVocab::role_id(const std::string& name) const {
    for (size_t i = 0; i < role_names.size(); ++i)
        if (role_names[i] == name) return static_cast<int>(i);
    return -1;
}

int RoleVocab::category_id(const std::string& name) const {
    for (size_t i = 0; i < graphical_categories.size(); ++i)
        if (graphical_categories[i] == name) return static_cast<int>(i);
    return -1;
}

bool RoleVocab::attachable(int role) const {
    return std::find(attachable_roles.begin(), attachable_roles.end(), role) !=
           attachable_roles.end();
}

RoleVocab RoleVocab::comp_hrdoc() {
    RoleVocab v;
    v.role_names = {"Title",  "Author", "Mail",    "Affiliation", "Section", "Paragraph",
                    "Table",  "Figure", "Caption", "Footer",      "Header",  "Footnote"};
    v.graphical_categories = {"table", "figure"};
    v.category_role = {v.role_id("Table"), v.role_id("Figure")};
    v.attachable_roles = {v.role_id("Caption"), v.role_id("Footnote")};
    return v;
}

RoleVocab RoleVocab::doclaynet() {
    RoleVocab v;
    v.role_names = {"Caption",     "Footnote", "Formula", "List-item",
                    "Page-footer", "Page-header", "Picture", "Section-header",
                    "Table",       "Text",     "Title"};
    v.graphical_categories = {"table", "picture", "formula"};
    v.category_role = {v.role_id("Table"), v.role_id("Picture"), v.role_id("Formula")};
    v.attachable_roles = {v.role_id("Caption"), v.role_id("Footnote")};
    return v;
}

RoleVocab RoleVocab::by_name(const std::string& name) {
    if (name == "comp-hrdoc") return comp_hrdoc();
    if (name == "doclaynet") return doclaynet();
    throw ValidationError("vocab", "unknown vocabulary '" + name + "' (comp-hrdoc | doclaynet)");
}

BBox DocumentPage::region_box(const Region& r) const {
    std::vector<BBox> boxes;
    boxes.reserve(r.members.size());
    for (int uid : r.members) boxes.push_back(unit_box(uid));
    return union_box(boxes);
}

const char* relation_type_name(RelationType t) {
    switch (t) {
    case RelationType::None: return "none";
    case RelationType::IntraRegion: return "intra";
    case RelationType::InterRegion: return "inter";
    case RelationType::LogicalRoleRel: return "role";
    }
    return "?";
}

void validate_page(const DocumentPage& page, const RoleVocab& vocab) {
    const int n = page.num_lines();
    const int m = page.num_graphics();

    for (int i = 0; i < n; ++i) {
        if (page.lines[i].id != i)
            throw ValidationError("page", "text-line ids must be dense from 0");
        if (!page.lines[i].box.valid())
            throw ValidationError("page", "text-line " + std::to_string(i) + " has invalid box");
    }
    for (int g = 0; g < m; ++g) {
        const auto& go = page.graphics[g];
        if (go.id != n + g)
            throw ValidationError("page", "graphic ids must continue after line ids");
        if (!go.box.valid())
            throw ValidationError("page", "graphic " + std::to_string(g) + " has invalid box");
        if (go.category < 0 || go.category >= vocab.num_categories())
            throw ValidationError("page", "graphic category " + std::to_string(go.category) +
                                              " outside vocabulary");
    }

    std::vector<int> line_owner(n, -1), graphic_owner(m, -1);
    for (size_t r = 0; r < page.regions.size(); ++r) {
        const Region& reg = page.regions[r];
        if (reg.id != static_cast<int>(r))
            throw ValidationError("page", "region ids must be dense from 0");
        if (reg.members.empty())
            throw ValidationError("page", "region " + std::to_string(r) + " has no members");
        if (reg.role < 0 || reg.role >= vocab.num_roles())
            throw ValidationError("page", "region " + std::to_string(r) + " role out of range");
        bool graphical = page.unit_is_graphic(reg.members[0]);
        if (graphical) {
            if (reg.members.size() != 1)
                throw ValidationError("page", "graphical region must hold exactly one graphic");
            int g = reg.members[0] - n;
            if (g >= m) throw ValidationError("page", "region references unknown graphic");
            if (graphic_owner[g] != -1)
                throw ValidationError("page", "graphic in two regions");
            graphic_owner[g] = reg.id;
            if (vocab.category_role[page.graphics[g].category] != reg.role)
                throw ValidationError("page", "graphical region role does not match category");
        } else {
            for (int uid : reg.members) {
                if (uid < 0 || uid >= n || page.unit_is_graphic(uid))
                    throw ValidationError("page", "text region mixes member kinds");
                if (line_owner[uid] != -1)
                    throw ValidationError("page", "text-line " + std::to_string(uid) +
                                                      " in two regions");
                line_owner[uid] = reg.id;
            }
        }
    }
    for (int i = 0; i < n; ++i)
        if (line_owner[i] == -1)
            throw ValidationError("page", "text-line " + std::to_string(i) + " in no region");
    for (int g = 0; g < m; ++g)
        if (graphic_owner[g] == -1)
            throw ValidationError("page", "graphic " + std::to_string(g) + " in no region");

    // reading order must be a permutation of text-region ids
    std::set<int> text_regions, seen;
    for (const Region& reg : page.regions)
        if (!page.region_is_graphical(reg)) text_regions.insert(reg.id);
    for (int rid : page.reading_order) {
        if (!text_regions.count(rid))
            throw ValidationError("page", "reading order entry " + std::to_string(rid) +
                                              " is not a text region");
        if (!seen.insert(rid).second)
            throw ValidationError("page", "reading order repeats region " + std::to_string(rid));
    }
    if (seen.size() != text_regions.size())
        throw ValidationError("page", "reading order is not total over text regions");

    std::set<int> linked_graphics, linked_targets;
    for (auto [src, dst] : page.links) {
        if (src < 0 || src >= static_cast<int>(page.regions.size()) || dst < 0 ||
            dst >= static_cast<int>(page.regions.size()))
            throw ValidationError("page", "link endpoint out of range");
        const Region& s = page.regions[src];
        const Region& d = page.regions[dst];
        if (!page.region_is_graphical(s))
            throw ValidationError("page", "link source must be a graphical region");
        if (page.region_is_graphical(d))
            throw ValidationError("page", "link target must be a text region");
        if (!vocab.attachable(d.role))
            throw ValidationError("page", "link target role '" + vocab.role_names[d.role] +
                                              "' is not attachable");
        if (!linked_graphics.insert(src).second)
            throw ValidationError("page", "graphical region " + std::to_string(src) +
                                              " has two links");
        if (!linked_targets.insert(dst).second)
            throw ValidationError("page", "text region " + std::to_string(dst) +
                                              " attached to two graphics");
    }
}

int RelationLabelMatrix::unit_target(int row) const {
    for (int j = 0; j < num_units; ++j)
        if (at(row, j) != RelationType::None) return j;
    return -1;
}

RelationType RelationLabelMatrix::unit_type(int row) const {
    int j = unit_target(row);
    return j < 0 ? RelationType::None : at(row, j);
}

int RelationLabelMatrix::role_target(int row) const {
    for (int j = num_units; j < width(); ++j)
        if (at(row, j) != RelationType::None) return j - num_units;
    return -1;
}

void RelationLabelMatrix::validate() const {
    for (int i = 0; i < num_units; ++i) {
        int unit_edges = 0, role_edges = 0;
        for (int j = 0; j < width(); ++j) {
            RelationType t = at(i, j);
            if (t == RelationType::None) continue;
            if (j < num_units) {
                if (t != RelationType::IntraRegion && t != RelationType::InterRegion)
                    throw ValidationError("label_matrix", "unit-half cell with role type");
                ++unit_edges;
            } else {
                if (t != RelationType::LogicalRoleRel)
                    throw ValidationError("label_matrix", "role-half cell with unit type");
                ++role_edges;
            }
        }
        if (unit_edges != 1)
            throw ValidationError("label_matrix", "row " + std::to_string(i) + " has " +
                                                      std::to_string(unit_edges) +
                                                      " unit edges (want 1)");
        if (role_edges != 1)
            throw ValidationError("label_matrix", "row " + std::to_string(i) + " has " +
                                                      std::to_string(role_edges) +
                                                      " role edges (want 1)");
    }
}

RelationLabelMatrix build_label_matrix(const DocumentPage& page, const RoleVocab& vocab) {
    validate_page(page, vocab);

    const int n = page.num_lines();
    const int h = page.num_units();
    RelationLabelMatrix mat;
    mat.num_units = h;
    mat.num_roles = vocab.num_roles();
    mat.cells.assign(static_cast<size_t>(h) * mat.width(), RelationType::None);

    auto rep = [&](const Region& r) { return r.members.front(); };
    auto term = [&](const Region& r) { return r.members.back(); };

    // intra chains
    for (const Region& reg : page.regions) {
        if (page.region_is_graphical(reg)) continue;
        for (size_t t = 0; t + 1 < reg.members.size(); ++t)
            mat.set(reg.members[t], reg.members[t + 1], RelationType::IntraRegion);
    }

    // reading-order chain: last member of region k points at first member of
    // region k+1; the final region's last member self-edges
    for (size_t k = 0; k < page.reading_order.size(); ++k) {
        const Region& cur = page.regions[page.reading_order[k]];
        if (k + 1 < page.reading_order.size()) {
            const Region& nxt = page.regions[page.reading_order[k + 1]];
            mat.set(term(cur), rep(nxt), RelationType::InterRegion);
        } else {
            int t = term(cur);
            mat.set(t, t, cur.members.size() == 1 ? RelationType::IntraRegion
                                                  : RelationType::InterRegion);
        }
    }

    // graphics: attachment edge or self-edge
    std::map<int, int> link_of; // graphical region id -> target region id
    for (auto [src, dst] : page.links) link_of[src] = dst;
    for (const Region& reg : page.regions) {
        if (!page.region_is_graphical(reg)) continue;
        int g = reg.members[0];
        auto it = link_of.find(reg.id);
        if (it != link_of.end())
            mat.set(g, rep(page.regions[it->second]), RelationType::InterRegion);
        else
            mat.set(g, g, RelationType::InterRegion);
    }

    // role edges
    for (const Region& reg : page.regions)
        for (int uid : reg.members)
            mat.set(uid, h + reg.role, RelationType::LogicalRoleRel);

    mat.validate();
    return mat;
}

DocumentStructure page_structure(const DocumentPage& page) {
    DocumentStructure s;
    s.regions = page.regions;
    s.reading_order = page.reading_order;
    s.links = page.links;
    return s;
}

namespace {

struct CanonicalStructure {
    // region signatures sorted lexicographically: (members..., role)
    std::vector<std::pair<std::vector<int>, int>> regions;
    std::vector<std::vector<int>> order;                       // member lists in sequence
    std::vector<std::pair<std::vector<int>, std::vector<int>>> links;

    bool operator==(const CanonicalStructure&) const = default;
};

CanonicalStructure canonicalize(const DocumentStructure& s) {
    CanonicalStructure c;
    for (const Region& r : s.regions) c.regions.emplace_back(r.members, r.role);
    std::sort(c.regions.begin(), c.regions.end());
    for (int rid : s.reading_order) c.order.push_back(s.regions[rid].members);
    for (auto [a, b] : s.links) c.links.emplace_back(s.regions[a].members, s.regions[b].members);
    std::sort(c.links.begin(), c.links.end());
    return c;
}

std::string members_str(const std::vector<int>& m) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < m.size(); ++i) os << (i ? "," : "") << m[i];
    os << "]";
    return os.str();
}

} // namespace

bool same_structure(const DocumentStructure& a, const DocumentStructure& b) {
    return canonicalize(a) == canonicalize(b);
}

std::string structure_diff(const DocumentStructure& a, const DocumentStructure& b) {
    CanonicalStructure ca = canonicalize(a), cb = canonicalize(b);
    std::ostringstream os;
    if (ca.regions != cb.regions) {
        os << "regions differ:\n  a:";
        for (auto& [m, role] : ca.regions) os << " " << members_str(m) << ":" << role;
        os << "\n  b:";
        for (auto& [m, role] : cb.regions) os << " " << members_str(m) << ":" << role;
        os << "\n";
    }
    if (ca.order != cb.order) {
        os << "reading order differs:\n  a:";
        for (auto& m : ca.order) os << " " << members_str(m);
        os << "\n  b:";
        for (auto& m : cb.order) os << " " << members_str(m);
        os << "\n";
    }
    if (ca.links != cb.links) {
        os << "links differ:\n  a:";
        for (auto& [s, d] : ca.links) os << " " << members_str(s) << "->" << members_str(d);
        os << "\n  b:";
        for (auto& [s, d] : cb.links) os << " " << members_str(s) << "->" << members_str(d);
        os << "\n";
    }
    return os.str();
}

} // namespace dla
