#include <cmath>
#include <vector>

#include "dla/model.hpp"
#include "dla/synthcorpus.hpp"
#include "doctest.h"

namespace {

dla::ModelConfig tiny_config() {
    dla::ModelConfig cfg;
    cfg.encoder.hidden = 16;
    cfg.encoder.heads = 2;
    cfg.encoder.ffn = 32;
    cfg.encoder.layers = 1;
    cfg.encoder.points = 2;
    cfg.decoder.hidden = 16;
    cfg.decoder.heads = 2;
    cfg.decoder.ffn = 32;
    cfg.decoder.layers = 2;
    cfg.decoder.points = 2;
    cfg.relation_width = 32;
    return cfg;
}

struct Fixture {
    dla::GeneratedPage page;
    std::vector<dla::BBox> lines;
    dla::ParameterStore<float> store;
    dla::DlaModel<float> model;

    Fixture() {
        dla::CorpusConfig cc;
        cc.width = 128;
        cc.height = 128;
        page = dla::generate_page(11, cc);
        for (const dla::TextLine& l : page.ann.lines) lines.push_back(l.box);
        dla::Rng rng(7);
        model = dla::DlaModel<float>::create(store, tiny_config(), rng);
    }
};

bool all_finite(const dla::Tensor<float>& t) {
    for (float v : t.data)
        if (!std::isfinite(v)) return false;
    return true;
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("forward pass wires every stage together") {
    Fixture fx;
    dla::Session<float> s(fx.store, false);
    auto im = s.g.input(dla::raster_to_tensor<float>(dla::resize_raster(fx.page.image, 64, 64)));
    auto f = dla::run_model(fx.model, s, im, fx.lines, 6);

    int N = static_cast<int>(fx.lines.size());
    int R = fx.model.vocab.num_roles();
    CHECK(f.selection.proposals.size() == 6);
    CHECK(f.bank.num_lines == N);
    CHECK(f.bank.num_graphics == 6);
    CHECK(f.bank.num_roles == R);
    REQUIRE(f.layers.size() == 2);
    for (const auto& layer : f.layers) {
        const dla::Tensor<float>& q = s.g.val(layer.queries);
        CHECK(q.dim(0) == f.bank.W());
        CHECK(q.dim(1) == 16);
        CHECK(all_finite(q));
        REQUIRE(layer.has_graph_boxes);
        REQUIRE(layer.has_role_boxes);
        CHECK(s.g.val(layer.graph_boxes).dim(0) == 6);
        CHECK(s.g.val(layer.role_boxes).dim(0) == R);
        CHECK(layer.ref_boxes.dim(0) == f.bank.W());
        CHECK(all_finite(layer.ref_boxes));
    }
}

TEST_CASE("relation prediction carries refined boxes and selection scores") {
    Fixture fx;
    dla::Session<float> s(fx.store, false);
    auto im = s.g.input(dla::raster_to_tensor<float>(dla::resize_raster(fx.page.image, 64, 64)));
    auto f = dla::run_model(fx.model, s, im, fx.lines, 5);
    dla::RelationPrediction pred = dla::predict_relations(fx.model, s, f, fx.lines);

    int N = static_cast<int>(fx.lines.size());
    int H = N + 5;
    REQUIRE(pred.num_lines() == N);
    REQUIRE(pred.num_graphics() == 5);
    CHECK(pred.unit_target.size() == static_cast<size_t>(H));
    CHECK(pred.role_target.size() == static_cast<size_t>(H));
    const dla::Tensor<float>& refs = f.layers.back().ref_boxes;
    for (int k = 0; k < 5; ++k) {
        CHECK(pred.graphics[k].box.cx == doctest::Approx(refs.at(N + k, 0)).epsilon(1e-6));
        CHECK(pred.graphics[k].box.h == doctest::Approx(refs.at(N + k, 3)).epsilon(1e-6));
        CHECK(pred.graphics[k].score == f.selection.proposals[k].score);
        CHECK(pred.graphics[k].category == f.selection.proposals[k].category);
    }
    for (int i = 0; i < H; ++i) {
        CHECK(pred.unit_target[i] >= 0);
        CHECK(pred.unit_target[i] < H);
        CHECK(pred.role_target[i] >= 0);
        CHECK(pred.role_target[i] < fx.model.vocab.num_roles());
        CHECK(std::isfinite(pred.unit_score[i]));
        CHECK(std::isfinite(pred.role_score[i]));
    }
}

TEST_CASE("inference decodes a coherent structure deterministically") {
    Fixture fx;
    dla::InferencePage a =
        dla::infer_page(fx.model, fx.store, fx.page.image, fx.lines, 4, 64, 256);
    dla::InferencePage b =
        dla::infer_page(fx.model, fx.store, fx.page.image, fx.lines, 4, 64, 256);

    CHECK(a.detections.size() == 4);
    CHECK(dla::same_structure(a.structure, b.structure));
    CHECK(a.relation.unit_target == b.relation.unit_target);
    CHECK(a.relation.role_target == b.relation.role_target);

    int R = fx.model.vocab.num_roles();
    std::vector<int> seen(fx.lines.size(), 0);
    int text_regions = 0;
    for (const dla::Region& r : a.structure.regions) {
        CHECK(r.role >= 0);
        CHECK(r.role < R);
        bool graphical = false;
        for (int uid : r.members)
            if (uid >= static_cast<int>(fx.lines.size()))
                graphical = true;
            else
                ++seen[uid];
        if (!graphical) ++text_regions;
    }
    for (int c : seen) CHECK(c == 1);
    CHECK(a.structure.reading_order.size() == static_cast<size_t>(text_regions));
    for (auto& [gid, tid] : a.structure.links) {
        CHECK(gid >= 0);
        CHECK(gid < static_cast<int>(a.structure.regions.size()));
        CHECK(tid >= 0);
        CHECK(tid < static_cast<int>(a.structure.regions.size()));
    }
}

TEST_CASE("query budget defaults follow the benchmark vocabulary") {
    CHECK(dla::default_top_k("comp-hrdoc") == 50);
    CHECK(dla::default_top_k("doclaynet") == 100);
}

} // TEST_SUITE
