#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dla/geometry.hpp"

namespace dla {

// Thrown when annotations violate the page model (a line in zero or two
// regions, a non-total reading order, a dangling link, ...).
class ValidationError : public std::runtime_error {
public:
    ValidationError(std::string context, const std::string& message)
        : std::runtime_error(context + ": " + message), context_(std::move(context)) {}
    const std::string& context() const { return context_; }

private:
    std::string context_;
};

// Logical role and graphical-category vocabulary for one corpus flavor.
struct RoleVocab {
    std::vector<std::string> role_names;           // dense role ids from 0
    std::vector<std::string> graphical_categories; // dense category ids from 0
    std::vector<int> category_role;                // graphical category id -> role id
    std::vector<int> attachable_roles;             // roles a graphic may link to

    int num_roles() const { return static_cast<int>(role_names.size()); }
    int num_categories() const { return static_cast<int>(graphical_categories.size()); }
    int role_id(const std::string& name) const;
    int category_id(const std::string& name) const;
    bool attachable(int role) const;

    static RoleVocab comp_hrdoc(); // Title..Footnote, 12 roles
    static RoleVocab doclaynet();  // Caption..Title, 11 roles
    static RoleVocab by_name(const std::string& name); // "comp-hrdoc" | "doclaynet"
};

// A text-line unit. Unit ids are global: lines occupy [0, N).
struct TextLine {
    int id = -1;
    BBox box;
};

// A graphical page object. Unit ids continue after lines: [N, N+M).
struct GraphicalObject {
    int id = -1;
    BBox box;
    int category = -1;
};

// A semantic region: ordered member unit ids (text-line ids in reading
// sequence, or exactly one graphical unit id) plus a logical role.
struct Region {
    int id = -1;
    int role = -1;
    std::vector<int> members;
};

// Ground-truth or decoded page content without pixels.
struct DocumentPage {
    int id = 0;
    int width = 0, height = 0; // pixels
    std::vector<TextLine> lines;
    std::vector<GraphicalObject> graphics;
    std::vector<Region> regions;
    std::vector<int> reading_order;            // text-region ids, total order
    std::vector<std::pair<int, int>> links;    // (graphical region id, text region id)

    int num_lines() const { return static_cast<int>(lines.size()); }
    int num_graphics() const { return static_cast<int>(graphics.size()); }
    int num_units() const { return num_lines() + num_graphics(); }
    bool unit_is_graphic(int uid) const { return uid >= num_lines(); }
    bool region_is_graphical(const Region& r) const {
        return r.members.size() == 1 && unit_is_graphic(r.members[0]);
    }
    BBox unit_box(int uid) const {
        return unit_is_graphic(uid) ? graphics[uid - num_lines()].box : lines[uid].box;
    }
    // Union of member boxes; the graphic's own box for graphical regions.
    BBox region_box(const Region& r) const;
};

// Checks the page model invariants; throws ValidationError on the first hit.
void validate_page(const DocumentPage& page, const RoleVocab& vocab);

enum class RelationType : uint8_t {
    None = 0,
    IntraRegion = 1,
    InterRegion = 2,
    LogicalRoleRel = 3,
};

constexpr int kNumRelationTypes = 4;

const char* relation_type_name(RelationType t);

// The unified H x W label space. Rows are unit queries (text-lines then
// graphics), columns are unit queries followed by role queries. Each row
// holds exactly one unit-half edge (Intra or Inter) and exactly one
// role-half edge.
struct RelationLabelMatrix {
    int num_units = 0; // H
    int num_roles = 0; // W - H
    std::vector<RelationType> cells;

    int height() const { return num_units; }
    int width() const { return num_units + num_roles; }

    RelationType at(int i, int j) const { return cells[static_cast<size_t>(i) * width() + j]; }
    void set(int i, int j, RelationType t) { cells[static_cast<size_t>(i) * width() + j] = t; }

    // Unique unit-half target of a row and its relation type.
    int unit_target(int row) const;
    RelationType unit_type(int row) const;
    // Role id of the row's unique role-half edge.
    int role_target(int row) const;

    // Asserts the per-row invariants; throws ValidationError on violation.
    void validate() const;
};

// Builds the ground-truth label matrix from page annotations.
//
// Edge layout: consecutive members of a text region are joined by forward
// Intra edges; the last member of region k carries the region's outgoing
// slot, an Inter edge to the first member of region k+1 in reading order.
// The final region's last member self-edges (Intra when the region is a
// single line, Inter otherwise). A graphic points Inter at the first member
// of its linked caption/footnote region, or at itself when unlinked. Every
// row also points at its region's role query.
RelationLabelMatrix build_label_matrix(const DocumentPage& page, const RoleVocab& vocab);

// Decoded document structure: the output contract of structure decoding and
// the comparison target for ground truth.
struct DocumentStructure {
    std::vector<Region> regions;
    std::vector<int> reading_order;         // text-region ids
    std::vector<std::pair<int, int>> links; // (graphical region id, text region id)
};

// The ground-truth structure carried by a page's annotations.
DocumentStructure page_structure(const DocumentPage& page);

// Structural equality up to region renumbering: same member partitions (with
// member order), same role per region, same reading sequence, same links.
bool same_structure(const DocumentStructure& a, const DocumentStructure& b);

// Human-readable diff for test failure messages; empty when equal.
std::string structure_diff(const DocumentStructure& a, const DocumentStructure& b);

} // namespace dla
