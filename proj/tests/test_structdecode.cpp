#include "doctest.h"

#include "dla/page.hpp"
#include "dla/rng.hpp"
#include "dla/structdecode.hpp"
#include "fuzz_pages.hpp"

using namespace dla;

namespace {

RelationPrediction blank_prediction(int n) {
    RelationPrediction p;
    for (int i = 0; i < n; ++i)
        p.line_boxes.push_back(BBox{0.5, 0.05 + 0.1 * i, 0.8, 0.05});
    p.unit_target.assign(n, 0);
    p.unit_score.assign(n, 1.0);
    p.unit_type.assign(n, RelationType::None);
    p.role_target.assign(n, 0);
    p.role_score.assign(n, 1.0);
    return p;
}

void set_edge(RelationPrediction& p, int row, int col, RelationType t, double score = 1.0) {
    p.unit_target[row] = col;
    p.unit_type[row] = t;
    p.unit_score[row] = score;
}

} // namespace

TEST_SUITE("structdecode") {

TEST_CASE("self intra edge makes a singleton region") {
    RelationPrediction p = blank_prediction(1);
    set_edge(p, 0, 0, RelationType::IntraRegion);
    auto groups = group_lines(p);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0] == std::vector<int>{0});
}

TEST_CASE("intra chain groups in walk order") {
    RelationPrediction p = blank_prediction(3);
    set_edge(p, 0, 1, RelationType::IntraRegion);
    set_edge(p, 1, 2, RelationType::IntraRegion);
    set_edge(p, 2, 2, RelationType::InterRegion);
    auto groups = group_lines(p);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0] == std::vector<int>{0, 1, 2});
}

TEST_CASE("intra cycle breaks at the lowest index") {
    RelationPrediction p = blank_prediction(2);
    set_edge(p, 0, 1, RelationType::IntraRegion);
    set_edge(p, 1, 0, RelationType::IntraRegion);
    auto groups = group_lines(p);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0] == std::vector<int>{0, 1});
}

TEST_CASE("role voting: majority, then summed score, then lower id") {
    RelationPrediction p = blank_prediction(3);
    p.role_target = {4, 4, 5};
    CHECK(vote_role(p, {0, 1, 2}, 12) == 4);

    p.role_target = {4, 5, 5};
    CHECK(vote_role(p, {0, 1, 2}, 12) == 5);

    RelationPrediction q = blank_prediction(2);
    q.role_target = {4, 5};
    q.role_score = {0.9, 0.6};
    CHECK(vote_role(q, {0, 1}, 12) == 4);
    q.role_score = {0.6, 0.9};
    CHECK(vote_role(q, {0, 1}, 12) == 5);
    q.role_score = {0.7, 0.7};
    CHECK(vote_role(q, {0, 1}, 12) == 4);
}

TEST_CASE("exhaustive two-member vote agrees with rule evaluation") {
    for (int ra = 0; ra < 4; ++ra)
        for (int rb = 0; rb < 4; ++rb)
            for (double sa : {0.3, 0.6})
                for (double sb : {0.3, 0.6}) {
                    RelationPrediction p = blank_prediction(2);
                    p.role_target = {ra, rb};
                    p.role_score = {sa, sb};
                    int got = vote_role(p, {0, 1}, 4);
                    int want;
                    if (ra == rb) want = ra;
                    else if (sa > sb) want = ra;
                    else if (sb > sa) want = rb;
                    else want = std::min(ra, rb);
                    CHECK(got == want);
                }
}

TEST_CASE("disjoint chains are concatenated top to bottom") {
    // two 1-line regions with no inter edge between them
    RelationPrediction p = blank_prediction(2);
    p.line_boxes[0] = BBox{0.5, 0.5, 0.4, 0.05};
    p.line_boxes[1] = BBox{0.5, 0.1, 0.4, 0.05};
    set_edge(p, 0, 0, RelationType::IntraRegion);
    set_edge(p, 1, 1, RelationType::IntraRegion);
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    DocumentStructure s = decode_structure(p, vocab);
    REQUIRE(s.reading_order.size() == 2);
    CHECK(s.regions[s.reading_order[0]].members == std::vector<int>{1});
    CHECK(s.regions[s.reading_order[1]].members == std::vector<int>{0});
}

TEST_CASE("conflicting successors resolved by score") {
    // regions {0} and {1} both point inter at {2}; higher score wins
    RelationPrediction p = blank_prediction(3);
    set_edge(p, 0, 2, RelationType::InterRegion, 0.4);
    set_edge(p, 1, 2, RelationType::InterRegion, 0.8);
    set_edge(p, 2, 2, RelationType::InterRegion);
    p.line_boxes = {BBox{0.5, 0.1, 0.4, 0.05}, BBox{0.5, 0.3, 0.4, 0.05},
                    BBox{0.5, 0.5, 0.4, 0.05}};
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    DocumentStructure s = decode_structure(p, vocab);
    REQUIRE(s.reading_order.size() == 3);
    // region of line 1 keeps the edge, so order is [0], [1], [2] by fallback then chain
    CHECK(s.regions[s.reading_order[0]].members == std::vector<int>{0});
    CHECK(s.regions[s.reading_order[1]].members == std::vector<int>{1});
    CHECK(s.regions[s.reading_order[2]].members == std::vector<int>{2});
}

TEST_CASE("graphic edge into a caption region becomes a link") {
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    RelationPrediction p = blank_prediction(2);
    set_edge(p, 0, 0, RelationType::IntraRegion);
    set_edge(p, 1, 1, RelationType::IntraRegion);
    p.role_target = {vocab.role_id("Caption"), vocab.role_id("Paragraph")};
    p.graphics.push_back({BBox{0.5, 0.5, 0.3, 0.3}, vocab.category_id("table"), 0.9});
    p.unit_target.push_back(0);
    p.unit_score.push_back(1.0);
    p.unit_type.push_back(RelationType::InterRegion);
    p.role_target.push_back(vocab.role_id("Table"));
    p.role_score.push_back(1.0);

    DocumentStructure s = decode_structure(p, vocab);
    REQUIRE(s.links.size() == 1);
    auto [src, dst] = s.links[0];
    CHECK(s.regions[src].members == std::vector<int>{2});
    CHECK(s.regions[dst].members == std::vector<int>{0});
    // graphics never join the reading order
    CHECK(s.reading_order.size() == 2);
}

TEST_CASE("graphic edge into a non-attachable region is dropped") {
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    RelationPrediction p = blank_prediction(1);
    set_edge(p, 0, 0, RelationType::IntraRegion);
    p.role_target = {vocab.role_id("Paragraph")};
    p.graphics.push_back({BBox{0.5, 0.5, 0.3, 0.3}, vocab.category_id("figure"), 0.9});
    p.unit_target.push_back(0);
    p.unit_score.push_back(1.0);
    p.unit_type.push_back(RelationType::InterRegion);
    p.role_target.push_back(vocab.role_id("Figure"));
    p.role_score.push_back(1.0);
    DocumentStructure s = decode_structure(p, vocab);
    CHECK(s.links.empty());
}

TEST_CASE("score filtering drops only sub-threshold graphic rows") {
    RelationPrediction p = blank_prediction(2);
    set_edge(p, 0, 1, RelationType::IntraRegion);
    set_edge(p, 1, 1, RelationType::IntraRegion);
    for (double score : {0.9, 0.3, 0.5}) {
        GraphicalProposal gp;
        gp.box = BBox{0.5, 0.5, 0.2, 0.2};
        gp.score = score;
        p.graphics.push_back(gp);
        p.unit_target.push_back(0);
        p.unit_score.push_back(1.0);
        p.unit_type.push_back(RelationType::InterRegion);
        p.role_target.push_back(0);
        p.role_score.push_back(1.0);
    }
    RelationPrediction kept = filter_graphics(p, 0.5);
    CHECK(kept.num_lines() == 2);
    REQUIRE(kept.num_graphics() == 2);
    CHECK(kept.graphics[0].score == 0.9);
    CHECK(kept.graphics[1].score == 0.5);
    CHECK(kept.unit_target.size() == 4);
    CHECK(kept.unit_target[0] == 1);
    CHECK(kept.unit_type[2] == RelationType::InterRegion);
    // threshold above every score leaves a pure text prediction
    CHECK(filter_graphics(p, 0.95).num_graphics() == 0);
}

TEST_CASE("round trip on the worked examples") {
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    Rng rng(5);
    DocumentPage p = testutil::random_page(rng, vocab);
    RelationLabelMatrix m = build_label_matrix(p, vocab);
    DocumentStructure got = decode_structure(prediction_from_matrix(m, p), vocab);
    DocumentStructure want = page_structure(p);
    INFO(structure_diff(want, got));
    CHECK(same_structure(want, got));
}

TEST_CASE("round trip identity over fuzzed pages") {
    RoleVocab comp = RoleVocab::comp_hrdoc();
    RoleVocab doc = RoleVocab::doclaynet();
    Rng rng(2024);
    for (int t = 0; t < 200; ++t) {
        const RoleVocab& vocab = (t % 2 == 0) ? comp : doc;
        DocumentPage p = testutil::random_page(rng, vocab);
        RelationLabelMatrix m = build_label_matrix(p, vocab);
        DocumentStructure got = decode_structure(prediction_from_matrix(m, p), vocab);
        DocumentStructure want = page_structure(p);
        INFO("page " << t << "\n" << structure_diff(want, got));
        REQUIRE(same_structure(want, got));
    }
}

} // TEST_SUITE
