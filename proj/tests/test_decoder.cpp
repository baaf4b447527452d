#include "doctest.h"

#include <cmath>

#include "dla/decoder.hpp"
#include "dla/rng.hpp"

using namespace dla;

namespace {

// small pyramid fed directly with random tokens
FeaturePyramid<double> toy_pyramid(Session<double>& s, Rng& rng, int d) {
    FeaturePyramid<double> pyr;
    pyr.level_hw = {{4, 4}, {2, 2}, {2, 2}, {1, 1}};
    for (auto& [h, w] : pyr.level_hw) {
        pyr.tokens.push_back(s.g.input(Tensor<double>::randn({h * w, d}, rng)));
        pyr.pos.push_back(s.g.input(Tensor<double>::zeros({h * w, d})));
    }
    return pyr;
}

std::vector<GraphicalProposal> toy_proposals() {
    return {{BBox(0.3, 0.3, 0.2, 0.15), 0, 0.9}, {BBox(0.7, 0.6, 0.25, 0.2), 1, 0.8}};
}

std::vector<BBox> toy_lines() {
    return {BBox(0.4, 0.1, 0.5, 0.05), BBox(0.4, 0.2, 0.5, 0.05), BBox(0.4, 0.3, 0.4, 0.05)};
}

} // namespace

TEST_SUITE("decoder") {

TEST_CASE("query bank index layout and shared content vectors") {
    Rng rng(7);
    DecoderConfig cfg;
    cfg.hidden = 16;
    ParameterStore<double> store;
    auto table = ContentTable<double>::create(store, cfg.hidden, 2, 4, rng);
    Session<double> s(store, false);
    auto bank = init_queries(s, table, toy_proposals(), toy_lines());
    CHECK(bank.num_lines == 3);
    CHECK(bank.num_graphics == 2);
    CHECK(bank.num_roles == 4);
    CHECK(bank.H() == 5);
    CHECK(bank.W() == 9);
    const Tensor<double>& c = s.g.val(bank.content);
    REQUIRE(c.shape == std::vector<int>{9, 16});
    // all text lines share one content vector
    for (int i = 1; i < 3; ++i)
        for (int d = 0; d < 16; ++d) CHECK(c.at(i, d) == c.at(0, d));
    // equal categories share initial vectors
    Session<double> s2(store, false);
    std::vector<GraphicalProposal> same_cat = {{BBox(0.3, 0.3, 0.2, 0.15), 1, 0.9},
                                               {BBox(0.7, 0.6, 0.25, 0.2), 1, 0.8}};
    auto bank2 = init_queries(s2, table, same_cat, toy_lines());
    const Tensor<double>& c2 = s2.g.val(bank2.content);
    for (int d = 0; d < 16; ++d) CHECK(c2.at(3, d) == c2.at(4, d));
    // boxes: lines, then proposals, then near-full-page role anchors
    CHECK(bank.boxes.at(0, 0) == doctest::Approx(0.4));
    CHECK(bank.boxes.at(3, 0) == doctest::Approx(0.3));
    CHECK(bank.boxes.at(5, 2) == doctest::Approx(0.98).epsilon(1e-6));
}

TEST_CASE("out-of-vocabulary proposal categories are rejected") {
    Rng rng(11);
    ParameterStore<double> store;
    auto table = ContentTable<double>::create(store, 16, 2, 3, rng);
    Session<double> s(store, false);
    std::vector<GraphicalProposal> bad = {{BBox(0.5, 0.5, 0.2, 0.2), 2, 0.9}};
    CHECK_THROWS_AS(init_queries(s, table, bad, toy_lines()), std::invalid_argument);
}

TEST_CASE("fresh decoder leaves graphical boxes at their proposals") {
    Rng rng(13);
    DecoderConfig cfg;
    cfg.hidden = 16;
    cfg.heads = 2;
    cfg.ffn = 32;
    cfg.layers = 3;
    ParameterStore<double> store;
    auto dec = Decoder<double>::create(store, cfg, 2, 4, rng);
    Session<double> s(store, false);
    auto pyr = toy_pyramid(s, rng, cfg.hidden);
    auto bank = init_queries(s, dec.table, toy_proposals(), toy_lines());
    auto outs = dec.forward(s, bank, pyr);
    REQUIRE(outs.size() == 3);
    auto props = toy_proposals();
    for (auto& out : outs) {
        REQUIRE(out.has_graph_boxes);
        const Tensor<double>& b = s.g.val(out.graph_boxes);
        for (int k = 0; k < 2; ++k) {
            CHECK(b.at(k, 0) == doctest::Approx(props[k].box.cx).epsilon(1e-6));
            CHECK(b.at(k, 1) == doctest::Approx(props[k].box.cy).epsilon(1e-6));
            CHECK(b.at(k, 2) == doctest::Approx(props[k].box.w).epsilon(1e-6));
            CHECK(b.at(k, 3) == doctest::Approx(props[k].box.h).epsilon(1e-6));
        }
    }
}

TEST_CASE("text boxes never move and refined boxes stay valid") {
    Rng rng(17);
    DecoderConfig cfg;
    cfg.hidden = 16;
    cfg.heads = 2;
    cfg.ffn = 32;
    ParameterStore<double> store;
    auto dec = Decoder<double>::create(store, cfg, 2, 4, rng);
    // non-zero delta heads so refinement actually moves boxes
    for (int li = 0; li < cfg.layers; ++li) {
        for (auto& v : store.at(dec.layers[li].box_b.w).tensor.data)
            v = rng.uniform(-0.3, 0.3);
        for (auto& v : store.at(dec.layers[li].role_b.w).tensor.data)
            v = rng.uniform(-0.3, 0.3);
    }
    Session<double> s(store, false);
    auto pyr = toy_pyramid(s, rng, cfg.hidden);
    auto bank = init_queries(s, dec.table, toy_proposals(), toy_lines());
    auto outs = dec.forward(s, bank, pyr);
    auto lines = toy_lines();
    bool moved = false;
    for (auto& out : outs) {
        for (int i = 0; i < bank.num_lines; ++i) {
            CHECK(out.ref_boxes.at(i, 0) == lines[i].cx);
            CHECK(out.ref_boxes.at(i, 1) == lines[i].cy);
            CHECK(out.ref_boxes.at(i, 2) == lines[i].w);
            CHECK(out.ref_boxes.at(i, 3) == lines[i].h);
        }
        const Tensor<double>& b = s.g.val(out.graph_boxes);
        for (int k = 0; k < 2; ++k) {
            BBox box(b.at(k, 0), b.at(k, 1), b.at(k, 2), b.at(k, 3));
            CHECK(box.valid());
        }
        const Tensor<double>& rb = s.g.val(out.role_boxes);
        REQUIRE(rb.shape == std::vector<int>{4, 4});
        for (double v : rb.data) CHECK((v > 0 && v < 1));
        if (std::abs(b.at(0, 0) - 0.3) > 1e-9) moved = true;
    }
    CHECK(moved);
}

TEST_CASE("refinement composes deltas in inverse-sigmoid space") {
    Rng rng(19);
    DecoderConfig cfg;
    cfg.hidden = 16;
    cfg.heads = 2;
    cfg.ffn = 32;
    ParameterStore<double> store;
    auto dec = Decoder<double>::create(store, cfg, 2, 3, rng);
    for (int li = 0; li < cfg.layers; ++li)
        for (auto& v : store.at(dec.layers[li].box_b.w).tensor.data)
            v = rng.uniform(-0.3, 0.3);
    Session<double> s(store, false);
    auto pyr = toy_pyramid(s, rng, cfg.hidden);
    auto bank = init_queries(s, dec.table, toy_proposals(), toy_lines());
    auto outs = dec.forward(s, bank, pyr);

    // recompute every layer's boxes from the proposal boxes and the
    // published deltas with plain scalar math
    auto props = toy_proposals();
    for (int k = 0; k < 2; ++k) {
        double comp[4] = {props[k].box.cx, props[k].box.cy, props[k].box.w, props[k].box.h};
        for (auto& out : outs) {
            const Tensor<double>& d = s.g.val(out.graph_deltas);
            const Tensor<double>& b = s.g.val(out.graph_boxes);
            for (int c = 0; c < 4; ++c) {
                double p = std::clamp(comp[c], 1e-5, 1.0 - 1e-5);
                double z = std::log(p / (1.0 - p)) + d.at(k, c);
                comp[c] = 1.0 / (1.0 + std::exp(-z));
                CHECK(b.at(k, c) == doctest::Approx(comp[c]).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("permuting text lines permutes outputs identically") {
    Rng rng(23);
    DecoderConfig cfg;
    cfg.hidden = 16;
    cfg.heads = 2;
    cfg.ffn = 32;
    ParameterStore<double> store;
    auto dec = Decoder<double>::create(store, cfg, 2, 3, rng);
    std::vector<BBox> lines = toy_lines();
    std::vector<int> perm = {2, 0, 1};
    std::vector<BBox> permuted;
    for (int i : perm) permuted.push_back(lines[i]);

    auto run = [&](const std::vector<BBox>& lb) {
        Session<double> s(store, false);
        Rng prng(999);
        auto pyr = toy_pyramid(s, prng, cfg.hidden);
        auto bank = init_queries(s, dec.table, toy_proposals(), lb);
        auto outs = dec.forward(s, bank, pyr);
        return s.g.val(outs.back().queries);
    };
    Tensor<double> qa = run(lines);
    Tensor<double> qb = run(permuted);
    REQUIRE(qa.shape == std::vector<int>{8, cfg.hidden});
    for (int i = 0; i < 3; ++i)
        for (int d = 0; d < cfg.hidden; ++d)
            CHECK(qb.at(i, d) == doctest::Approx(qa.at(perm[i], d)).epsilon(1e-9));
    // non-text rows unchanged
    for (int r = 3; r < 8; ++r)
        for (int d = 0; d < cfg.hidden; ++d)
            CHECK(qb.at(r, d) == doctest::Approx(qa.at(r, d)).epsilon(1e-9));
}

} // TEST_SUITE
