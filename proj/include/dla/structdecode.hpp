#pragma once

#include <vector>

#include "dla/page.hpp"

namespace dla {

// A graphical object proposal that survived detection, in unit-id order.
struct GraphicalProposal {
    BBox box;
    int category = 0;
    double score = 1.0;
};

// Per-row relation decisions for one page. Rows cover the N text lines first,
// then the K graphical proposals. unit_target is the argmax column of the
// unit half with unit_type its classified relation; role_target is the argmax
// role column. Scores are the softmax probabilities of the chosen columns.
struct RelationPrediction {
    std::vector<BBox> line_boxes;
    std::vector<GraphicalProposal> graphics;
    std::vector<int> unit_target;
    std::vector<double> unit_score;
    std::vector<RelationType> unit_type;
    std::vector<int> role_target;
    std::vector<double> role_score;

    int num_lines() const { return static_cast<int>(line_boxes.size()); }
    int num_graphics() const { return static_cast<int>(graphics.size()); }
    int num_units() const { return num_lines() + num_graphics(); }
};

// Exact prediction for a ground-truth matrix, used to test the decode path.
RelationPrediction prediction_from_matrix(const RelationLabelMatrix& mat,
                                          const DocumentPage& page);

// Drops graphic rows scoring below min_score. Unit targets keep their
// indices: edges into dropped rows dangle harmlessly since structure
// decoding only follows edges into text lines.
RelationPrediction filter_graphics(const RelationPrediction& pred, double min_score);

// Clusters text lines into regions via intra edges. Each cluster is returned
// in chain order: walk successors from each edge-free head (lowest line id
// first), then from the lowest unvisited line if a cycle remains. Clusters
// are sorted by their first member.
std::vector<std::vector<int>> group_lines(const RelationPrediction& pred);

// Majority vote over the members' role edges; ties fall to the higher summed
// role score, then the lower role id.
int vote_role(const RelationPrediction& pred, const std::vector<int>& members, int num_roles);

// Full page structure from relation predictions: group lines, vote roles,
// chain regions into a reading order via the inter edges carried by each
// region's last member, and attach graphics whose inter edge lands in a
// caption or footnote region. Conflicting edges are resolved greedily by
// score; edges that would close a cycle or fan in or out are dropped, and
// leftover chains are concatenated by the top-left corner of the head
// region's box.
DocumentStructure decode_structure(const RelationPrediction& pred, const RoleVocab& vocab);

} // namespace dla
