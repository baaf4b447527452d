#include "doctest.h"

#include <cmath>

#include "dla/relhead.hpp"
#include "dla/rng.hpp"

using namespace dla;

namespace {

// plain scalar reimplementation of the head on raw arrays
struct Oracle {
    int d, width;
    const ParameterStore<double>& store;
    const RelationHead<double>& head;

    std::vector<double> project(const Linear<double>& lin, const Tensor<double>& q,
                                int row) const {
        const Tensor<double>& w = store.at(lin.w).tensor;
        const Tensor<double>& b = store.at(lin.b).tensor;
        std::vector<double> out(width);
        for (int o = 0; o < width; ++o) {
            double acc = b.data[o];
            for (int i = 0; i < d; ++i) acc += q.at(row, i) * w.at(i, o);
            out[o] = acc;
        }
        return out;
    }

    // full score matrix with explicit exp/sum softmax per half
    Tensor<double> scores(const Tensor<double>& q, int H) const {
        int W = q.dim(0);
        Tensor<double> f({H, W});
        for (int i = 0; i < H; ++i) {
            auto u = project(head.rq, q, i);
            for (int j = 0; j < W; ++j) {
                auto v = project(head.rk, q, j);
                double acc = 0;
                for (int k = 0; k < width; ++k) acc += u[k] * v[k];
                f.at(i, j) = acc;
            }
        }
        Tensor<double> s({H, W});
        auto norm = [&](int i, int lo, int hi) {
            double mx = f.at(i, lo);
            for (int j = lo; j < hi; ++j) mx = std::max(mx, f.at(i, j));
            double z = 0;
            for (int j = lo; j < hi; ++j) z += std::exp(f.at(i, j) - mx);
            for (int j = lo; j < hi; ++j) s.at(i, j) = std::exp(f.at(i, j) - mx) / z;
        };
        for (int i = 0; i < H; ++i) {
            norm(i, 0, H);
            if (W > H) norm(i, H, W);
        }
        return s;
    }

    std::array<double, 4> classify(const Tensor<double>& q, int i, int j) const {
        auto u = project(head.cq, q, i);
        auto v = project(head.ck, q, j);
        const Tensor<double>& B = store.at(head.bilinear).tensor;
        const Tensor<double>& bias = store.at(head.bilinear_bias).tensor;
        std::array<double, 4> out{};
        for (int c = 0; c < 4; ++c) {
            double acc = bias.data[c];
            for (int a = 0; a < width; ++a)
                for (int b = 0; b < width; ++b) acc += u[a] * B.at(a, c * width + b) * v[b];
            out[c] = acc;
        }
        return out;
    }
};

} // namespace

TEST_SUITE("relhead") {

TEST_CASE("single unit and single role query give certain scores") {
    Rng rng(7);
    ParameterStore<double> store;
    auto head = RelationHead<double>::create(store, 8, rng, 16);
    Session<double> s(store, false);
    auto q = s.g.input(Tensor<double>::randn({2, 8}, rng));
    auto rs = head.relation_scores(s, q, 1);
    const Tensor<double>& sm = s.g.val(rs.s);
    REQUIRE(sm.shape == std::vector<int>{1, 2});
    CHECK(sm.at(0, 0) == doctest::Approx(1.0));
    CHECK(sm.at(0, 1) == doctest::Approx(1.0));
}

TEST_CASE("identical queries spread each half uniformly") {
    Rng rng(11);
    ParameterStore<double> store;
    auto head = RelationHead<double>::create(store, 8, rng, 16);
    Session<double> s(store, false);
    Tensor<double> q({7, 8});
    Rng row_rng(5);
    Tensor<double> one = Tensor<double>::randn({8}, row_rng);
    for (int i = 0; i < 7; ++i)
        for (int d = 0; d < 8; ++d) q.at(i, d) = one.data[d];
    auto rs = head.relation_scores(s, s.g.input(q), 4);
    const Tensor<double>& sm = s.g.val(rs.s);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) CHECK(sm.at(i, j) == doctest::Approx(0.25));
        for (int j = 4; j < 7; ++j) CHECK(sm.at(i, j) == doctest::Approx(1.0 / 3));
    }
}

TEST_CASE("scores and classification match the scalar oracle") {
    Rng rng(13);
    int d = 8, width = 16;
    ParameterStore<double> store;
    auto head = RelationHead<double>::create(store, d, rng, width);
    Oracle oracle{d, width, store, head};
    double worst_s = 0, worst_c = 0, worst_sum = 0;
    for (int trial = 0; trial < 25; ++trial) {
        int H = 2 + static_cast<int>(rng.uniform_int(0, 3));
        int W = H + 1 + static_cast<int>(rng.uniform_int(0, 3));
        Tensor<double> q = Tensor<double>::randn({W, d}, rng);
        Session<double> s(store, false);
        auto rs = head.relation_scores(s, s.g.input(q), H);
        const Tensor<double>& sm = s.g.val(rs.s);
        Tensor<double> want = oracle.scores(q, H);
        for (int i = 0; i < H; ++i) {
            double su = 0, sr = 0;
            for (int j = 0; j < W; ++j) {
                worst_s = std::max(worst_s, std::abs(sm.at(i, j) - want.at(i, j)));
                (j < H ? su : sr) += sm.at(i, j);
            }
            worst_sum = std::max({worst_sum, std::abs(su - 1.0), std::abs(sr - 1.0)});
        }
        std::vector<std::pair<int, int>> pairs = {{0, W - 1}, {1, 0}, {H - 1, H}};
        const Tensor<double>& lg = s.g.val(head.classify_pairs(s, s.g.input(q), pairs));
        for (size_t p = 0; p < pairs.size(); ++p) {
            auto want_c = oracle.classify(q, pairs[p].first, pairs[p].second);
            for (int c = 0; c < 4; ++c)
                worst_c = std::max(worst_c,
                                   std::abs(lg.at(static_cast<int>(p), c) - want_c[c]));
        }
    }
    CHECK(worst_s <= 1e-6);
    CHECK(worst_c <= 1e-6);
    CHECK(worst_sum <= 1e-5);
}

TEST_CASE("scores ignore per-row constant shifts in the affinities") {
    Rng rng(17);
    int d = 8, width = 16;
    ParameterStore<double> store;
    auto head = RelationHead<double>::create(store, d, rng, width);
    Tensor<double> q = Tensor<double>::randn({6, d}, rng);
    Session<double> s1(store, false);
    Tensor<double> before = s1.g.val(head.relation_scores(s1, s1.g.input(q), 4).s);
    // shifting the key bias adds a per-row constant u_i . delta to every f_ij
    for (auto& v : store.at(head.rk.b).tensor.data) v += 0.37;
    Session<double> s2(store, false);
    Tensor<double> after = s2.g.val(head.relation_scores(s2, s2.g.input(q), 4).s);
    for (size_t i = 0; i < before.data.size(); ++i)
        CHECK(after.data[i] == doctest::Approx(before.data[i]).epsilon(1e-9));
}

TEST_CASE("zero classifier logits resolve ties toward class zero") {
    Rng rng(19);
    ParameterStore<double> store;
    auto head = RelationHead<double>::create(store, 8, rng, 16);
    for (auto& v : store.at(head.bilinear).tensor.data) v = 0.0;
    Session<double> s(store, false);
    auto q = s.g.input(Tensor<double>::randn({5, 8}, rng));
    auto decision = head.predict(s, q, 3);
    for (RelationType t : decision.unit_type) CHECK(t == RelationType::None);
}

TEST_CASE("a dominant class bias wins classification") {
    Rng rng(23);
    ParameterStore<double> store;
    auto head = RelationHead<double>::create(store, 8, rng, 16);
    store.at(head.bilinear_bias).tensor.data[1] = 50.0;
    Session<double> s(store, false);
    auto q = s.g.input(Tensor<double>::randn({5, 8}, rng));
    auto decision = head.predict(s, q, 3);
    for (RelationType t : decision.unit_type) CHECK(t == RelationType::IntraRegion);
}

TEST_CASE("predictions equal a brute-force scan of the score matrix") {
    Rng rng(29);
    ParameterStore<double> store;
    auto head = RelationHead<double>::create(store, 8, rng, 16);
    for (int trial = 0; trial < 10; ++trial) {
        int H = 3 + static_cast<int>(rng.uniform_int(0, 4));
        int W = H + 2 + static_cast<int>(rng.uniform_int(0, 3));
        Tensor<double> q = Tensor<double>::randn({W, 8}, rng);
        Session<double> s(store, false);
        auto qr = s.g.input(q);
        auto decision = head.predict(s, qr, H);
        const Tensor<double>& sm = s.g.val(head.relation_scores(s, qr, H).s);
        for (int i = 0; i < H; ++i) {
            int ju = 0, jr = H;
            for (int j = 0; j < H; ++j)
                if (sm.at(i, j) > sm.at(i, ju)) ju = j;
            for (int j = H; j < W; ++j)
                if (sm.at(i, j) > sm.at(i, jr)) jr = j;
            CHECK(decision.unit_target[i] == ju);
            CHECK(decision.role_target[i] == jr - H);
            CHECK(decision.unit_score[i] == doctest::Approx(sm.at(i, ju)));
            CHECK(decision.role_score[i] == doctest::Approx(sm.at(i, jr)));
        }
    }
}

TEST_CASE("a bank without role queries yields an empty role half") {
    Rng rng(31);
    ParameterStore<double> store;
    auto head = RelationHead<double>::create(store, 8, rng, 16);
    Session<double> s(store, false);
    auto q = s.g.input(Tensor<double>::randn({4, 8}, rng));
    auto rs = head.relation_scores(s, q, 4);
    CHECK(s.g.val(rs.s).shape == std::vector<int>{4, 4});
    auto decision = head.predict(s, q, 4);
    CHECK(decision.role_target.empty());
    CHECK(decision.unit_target.size() == 4);
}

} // TEST_SUITE
