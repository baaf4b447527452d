#include "doctest.h"

#include "dla/page.hpp"
#include "dla/rng.hpp"
#include "fuzz_pages.hpp"

using namespace dla;

namespace {

DocumentPage single_paragraph_page(int num_lines) {
    DocumentPage p;
    p.id = 0;
    for (int i = 0; i < num_lines; ++i)
        p.lines.push_back({i, BBox{0.5, 0.1 + 0.1 * i, 0.8, 0.05}});
    Region r;
    r.id = 0;
    r.role = RoleVocab::comp_hrdoc().role_id("Paragraph");
    for (int i = 0; i < num_lines; ++i) r.members.push_back(i);
    p.regions.push_back(r);
    p.reading_order = {0};
    return p;
}

} // namespace

TEST_SUITE("page") {

TEST_CASE("vocabularies") {
    RoleVocab comp = RoleVocab::comp_hrdoc();
    CHECK(comp.num_roles() == 12);
    CHECK(comp.num_categories() == 2);
    CHECK(comp.category_role[comp.category_id("table")] == comp.role_id("Table"));
    CHECK(comp.category_role[comp.category_id("figure")] == comp.role_id("Figure"));
    CHECK(comp.attachable(comp.role_id("Caption")));
    CHECK(comp.attachable(comp.role_id("Footnote")));
    CHECK(!comp.attachable(comp.role_id("Paragraph")));

    RoleVocab doc = RoleVocab::doclaynet();
    CHECK(doc.num_roles() == 11);
    CHECK(doc.num_categories() == 3);
    CHECK(doc.category_role[doc.category_id("picture")] == doc.role_id("Picture"));
    CHECK(doc.attachable(doc.role_id("Caption")));

    CHECK_THROWS_AS(RoleVocab::by_name("nope"), ValidationError);
}

TEST_CASE("single line region self-edges intra and points at its role") {
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    DocumentPage p = single_paragraph_page(1);
    RelationLabelMatrix m = build_label_matrix(p, vocab);
    CHECK(m.num_units == 1);
    CHECK(m.at(0, 0) == RelationType::IntraRegion);
    CHECK(m.role_target(0) == vocab.role_id("Paragraph"));
}

TEST_CASE("three-line region chains forward and terminates with inter self-edge") {
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    DocumentPage p = single_paragraph_page(3);
    RelationLabelMatrix m = build_label_matrix(p, vocab);
    CHECK(m.at(0, 1) == RelationType::IntraRegion);
    CHECK(m.at(1, 2) == RelationType::IntraRegion);
    CHECK(m.at(2, 2) == RelationType::InterRegion);
    CHECK(m.at(0, 0) == RelationType::None);
    CHECK(m.at(0, 2) == RelationType::None);
    for (int i = 0; i < 3; ++i)
        CHECK(m.role_target(i) == vocab.role_id("Paragraph"));
}

TEST_CASE("successor edge runs from last member to next region's first member") {
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    DocumentPage p;
    p.id = 1;
    for (int i = 0; i < 3; ++i) p.lines.push_back({i, BBox{0.5, 0.1 + 0.1 * i, 0.8, 0.05}});
    p.regions.push_back({0, vocab.role_id("Paragraph"), {0, 1}});
    p.regions.push_back({1, vocab.role_id("Paragraph"), {2}});
    p.reading_order = {0, 1};
    RelationLabelMatrix m = build_label_matrix(p, vocab);
    CHECK(m.at(0, 1) == RelationType::IntraRegion);
    CHECK(m.at(1, 2) == RelationType::InterRegion);
    CHECK(m.at(2, 2) == RelationType::IntraRegion);
    CHECK(m.unit_target(0) == 1);
    CHECK(m.unit_target(1) == 2);
    CHECK(m.unit_target(2) == 2);
}

TEST_CASE("linked graphic points at its caption's first member, unlinked self-edges") {
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    DocumentPage p;
    p.id = 2;
    for (int i = 0; i < 2; ++i) p.lines.push_back({i, BBox{0.5, 0.1 + 0.1 * i, 0.8, 0.05}});
    p.graphics.push_back({2, BBox{0.5, 0.5, 0.4, 0.3}, vocab.category_id("table")});
    p.graphics.push_back({3, BBox{0.5, 0.8, 0.4, 0.1}, vocab.category_id("figure")});
    p.regions.push_back({0, vocab.role_id("Caption"), {0, 1}});
    p.regions.push_back({1, vocab.role_id("Table"), {2}});
    p.regions.push_back({2, vocab.role_id("Figure"), {3}});
    p.reading_order = {0};
    p.links = {{1, 0}};
    RelationLabelMatrix m = build_label_matrix(p, vocab);
    CHECK(m.at(2, 0) == RelationType::InterRegion); // table -> caption head
    CHECK(m.at(3, 3) == RelationType::InterRegion); // unlinked figure self-edge
    CHECK(m.role_target(2) == vocab.role_id("Table"));
    CHECK(m.role_target(3) == vocab.role_id("Figure"));
}

TEST_CASE("validation rejects inconsistent annotations") {
    RoleVocab vocab = RoleVocab::comp_hrdoc();

    DocumentPage two_owners = single_paragraph_page(2);
    two_owners.regions[0].members = {0, 1};
    two_owners.regions.push_back({1, vocab.role_id("Section"), {1}});
    two_owners.reading_order = {0, 1};
    CHECK_THROWS_AS(validate_page(two_owners, vocab), ValidationError);

    DocumentPage orphan = single_paragraph_page(2);
    orphan.regions[0].members = {0};
    CHECK_THROWS_AS(validate_page(orphan, vocab), ValidationError);

    DocumentPage partial_order = single_paragraph_page(1);
    partial_order.reading_order = {};
    CHECK_THROWS_AS(validate_page(partial_order, vocab), ValidationError);

    DocumentPage bad_link = single_paragraph_page(1);
    bad_link.graphics.push_back({1, BBox{0.5, 0.5, 0.2, 0.2}, 0});
    bad_link.regions.push_back({1, vocab.role_id("Table"), {1}});
    bad_link.links = {{1, 0}}; // Paragraph target is not attachable
    CHECK_THROWS_AS(validate_page(bad_link, vocab), ValidationError);

    DocumentPage double_link = single_paragraph_page(1);
    double_link.regions[0].role = vocab.role_id("Caption");
    double_link.graphics.push_back({1, BBox{0.5, 0.5, 0.2, 0.2}, 0});
    double_link.regions.push_back({1, vocab.role_id("Table"), {1}});
    double_link.links = {{1, 0}, {1, 0}};
    CHECK_THROWS_AS(validate_page(double_link, vocab), ValidationError);
}

TEST_CASE("fuzzed pages always satisfy the row invariants") {
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    Rng rng(101);
    for (int t = 0; t < 100; ++t) {
        DocumentPage p = testutil::random_page(rng, vocab);
        RelationLabelMatrix m = build_label_matrix(p, vocab);
        CHECK_NOTHROW(m.validate());
        for (int i = 0; i < m.num_units; ++i) {
            CHECK(m.unit_target(i) >= 0);
            CHECK(m.role_target(i) >= 0);
        }
    }
}

TEST_CASE("structure comparison detects differences") {
    RoleVocab vocab = RoleVocab::comp_hrdoc();
    DocumentPage p = single_paragraph_page(3);
    DocumentStructure a = page_structure(p);
    DocumentStructure b = a;
    CHECK(same_structure(a, b));
    b.regions[0].role = vocab.role_id("Section");
    CHECK(!same_structure(a, b));
    CHECK(structure_diff(a, b).find("regions differ") != std::string::npos);
}

} // TEST_SUITE
