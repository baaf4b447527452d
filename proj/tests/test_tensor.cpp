#include "doctest.h"

#include "dla/nn.hpp"
#include "dla/rng.hpp"
#include "dla/tensor.hpp"

using namespace dla;

TEST_SUITE("tensor") {

TEST_CASE("softmax of a uniform vector is uniform and rows sum to one") {
    GraphD g;
    auto x = g.input(Tensor<double>::full({1, 8}, 3.25));
    auto y = g.softmax(x);
    for (int j = 0; j < 8; ++j) CHECK(g.val(y).at(0, j) == doctest::Approx(1.0 / 8));

    Rng rng(3);
    auto r = g.softmax(g.input(Tensor<double>::randn({5, 7}, rng)));
    for (int i = 0; i < 5; ++i) {
        double s = 0;
        for (int j = 0; j < 7; ++j) s += g.val(r).at(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("inverse_sigmoid inverts sigmoid across [-10,10]") {
    GraphD g;
    std::vector<double> xs;
    for (double x = -10; x <= 10; x += 0.5) xs.push_back(x);
    auto in = g.input(Tensor<double>({static_cast<int>(xs.size())}, xs));
    auto back = g.inverse_sigmoid(g.sigmoid(in));
    for (size_t i = 0; i < xs.size(); ++i)
        CHECK(g.val(back).data[i] == doctest::Approx(xs[i]).epsilon(1e-4));
}

TEST_CASE("matmul agrees with the naive triple loop") {
    Rng rng(17);
    Tensor<float> a = Tensor<float>::randn({3, 4}, rng);
    Tensor<float> b = Tensor<float>::randn({4, 2}, rng);
    GraphF g;
    auto c = g.matmul(g.input(a), g.input(b));
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) {
            double acc = 0;
            for (int k = 0; k < 4; ++k)
                acc += static_cast<double>(a.at(i, k)) * static_cast<double>(b.at(k, j));
            CHECK(std::abs(g.val(c).at(i, j) - acc) <= 1e-5);
        }
}

TEST_CASE("shape mismatches raise errors naming both shapes") {
    GraphF g;
    auto a = g.input(Tensor<float>::zeros({2, 3}));
    auto b = g.input(Tensor<float>::zeros({4, 5}));
    CHECK_THROWS_WITH_AS(g.matmul(a, b), doctest::Contains("[2,3]"), std::invalid_argument);
    CHECK_THROWS_AS(g.add(a, b), std::invalid_argument);
}

TEST_CASE("bilinear_sample hits grid cell centers exactly") {
    Rng rng(23);
    Tensor<double> map = Tensor<double>::randn({4, 6, 3}, rng);
    GraphD g;
    // cell (y=2, x=5) center in normalized coords
    Tensor<double> pts({1, 2}, {(5 + 0.5) / 6, (2 + 0.5) / 4});
    auto out = g.bilinear_sample(g.input(map), g.input(pts));
    for (int c = 0; c < 3; ++c)
        CHECK(g.val(out).at(0, c) == doctest::Approx(map.at(2, 5, c)).epsilon(1e-12));
}

TEST_CASE("bilinear_sample at a 4-cell midpoint averages them") {
    Rng rng(29);
    Tensor<double> map = Tensor<double>::randn({4, 4, 1}, rng);
    GraphD g;
    Tensor<double> pts({1, 2}, {2.0 / 4, 2.0 / 4}); // midpoint of cells (1,1),(1,2),(2,1),(2,2)
    auto out = g.bilinear_sample(g.input(map), g.input(pts));
    double want =
        (map.at(1, 1, 0) + map.at(1, 2, 0) + map.at(2, 1, 0) + map.at(2, 2, 0)) / 4;
    CHECK(g.val(out).at(0, 0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("bilinear_sample matches a scalar loop over random points") {
    Rng rng(31);
    int h = 5, w = 7, c = 2;
    Tensor<double> map = Tensor<double>::randn({h, w, c}, rng);
    Tensor<double> pts({100, 2});
    for (int p = 0; p < 100; ++p) {
        pts.at(p, 0) = rng.uniform(-0.2, 1.2);
        pts.at(p, 1) = rng.uniform(-0.2, 1.2);
    }
    GraphD g;
    auto out = g.bilinear_sample(g.input(map), g.input(pts));
    auto read = [&](int y, int x, int ch) -> double {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
        return map.at(y, x, ch);
    };
    for (int p = 0; p < 100; ++p) {
        double px = pts.at(p, 0) * w - 0.5, py = pts.at(p, 1) * h - 0.5;
        int x0 = static_cast<int>(std::floor(px)), y0 = static_cast<int>(std::floor(py));
        double wx = px - x0, wy = py - y0;
        for (int ch = 0; ch < c; ++ch) {
            double want = (1 - wy) * ((1 - wx) * read(y0, x0, ch) + wx * read(y0, x0 + 1, ch)) +
                          wy * ((1 - wx) * read(y0 + 1, x0, ch) + wx * read(y0 + 1, x0 + 1, ch));
            CHECK(std::abs(g.val(out).at(p, ch) - want) <= 1e-6);
        }
    }
}

TEST_CASE("gradient of a quadratic is exact") {
    Rng rng(37);
    Tensor<double> x = Tensor<double>::randn({6}, rng);
    double err = grad_check(
        [](GraphD& g, const std::vector<GraphD::Ref>& p) { return g.sum(g.mul(p[0], p[0])); },
        {x});
    CHECK(err <= 1e-8);
}

TEST_CASE("gradients of elementwise and shape primitives") {
    Rng rng(41);
    auto check = [&](auto build) {
        Tensor<double> x = Tensor<double>::randn({3, 4}, rng);
        Tensor<double> y = Tensor<double>::randn({3, 4}, rng);
        double err = grad_check(
            [&](GraphD& g, const std::vector<GraphD::Ref>& p) { return build(g, p[0], p[1]); },
            {x, y});
        CHECK(err <= 1e-6);
    };
    check([](GraphD& g, auto a, auto b) { return g.sum(g.mul(g.add(a, b), b)); });
    check([](GraphD& g, auto a, auto b) { return g.sum(g.mul(g.sub(a, b), a)); });
    check([](GraphD& g, auto a, auto b) {
        return g.sum(g.div(a, g.add_scalar(g.mul(b, b), 1.0)));
    });
    check([](GraphD& g, auto a, auto b) { return g.sum(g.minimum(a, b)); });
    check([](GraphD& g, auto a, auto b) { return g.sum(g.maximum(a, b)); });
    check([](GraphD& g, auto a, auto b) {
        return g.sum(g.mul(g.sigmoid(a), g.gelu(b)));
    });
    check([](GraphD& g, auto a, auto b) {
        return g.sum(g.mul(g.relu(a), g.scale(b, 0.5)));
    });
    check([](GraphD& g, auto a, auto b) {
        auto cat = g.concat_rows({a, b});
        return g.sum(g.slice_rows(cat, 1, 5));
    });
    check([](GraphD& g, auto a, auto b) {
        auto cat = g.concat_cols({a, b});
        return g.sum(g.mul(g.slice_cols(cat, 2, 6), g.slice_cols(cat, 1, 5)));
    });
    check([](GraphD& g, auto a, auto b) {
        return g.sum(g.mul(g.gather_rows(a, {2, 0, 0, 1}), g.gather_rows(b, {1, 1, 2, 0})));
    });
    check([](GraphD& g, auto a, auto b) {
        return g.sum(g.mul(g.reshape(a, {4, 3}), g.reshape(b, {4, 3})));
    });
}

TEST_CASE("gradient of linear+softmax+cross-entropy") {
    Rng rng(43);
    Tensor<double> x = Tensor<double>::randn({5, 4}, rng);
    Tensor<double> w = Tensor<double>::randn({4, 3}, rng);
    Tensor<double> b = Tensor<double>::randn({3}, rng);
    double err = grad_check(
        [](GraphD& g, const std::vector<GraphD::Ref>& p) {
            return g.cross_entropy(g.linear(p[0], p[1], p[2]), {0, 2, 1, 0, 2});
        },
        {x, w, b});
    CHECK(err <= 1e-3);
}

TEST_CASE("gradient of softmax, log_softmax, layer_norm, matmul variants") {
    Rng rng(47);
    Tensor<double> x = Tensor<double>::randn({4, 6}, rng);
    Tensor<double> w = Tensor<double>::randn({5, 6}, rng);
    Tensor<double> gam = Tensor<double>::randn({6}, rng);
    Tensor<double> bet = Tensor<double>::randn({6}, rng);
    double err = grad_check(
        [](GraphD& g, const std::vector<GraphD::Ref>& p) {
            auto att = g.softmax(g.matmul_nt(p[0], p[1]));
            auto v = g.matmul(att, g.layer_norm(p[1], p[2], p[3]));
            return g.mean(g.mul(v, v));
        },
        {x, w, gam, bet});
    CHECK(err <= 1e-3);

    err = grad_check(
        [](GraphD& g, const std::vector<GraphD::Ref>& p) {
            return g.sum(g.log_softmax(p[0]));
        },
        {x});
    CHECK(err <= 1e-3);
}

TEST_CASE("gradient of bilinear_sample in both arguments") {
    Rng rng(53);
    Tensor<double> map = Tensor<double>::randn({5, 5, 2}, rng);
    // keep probe points away from grid lines so finite differences stay smooth
    Tensor<double> pts({6, 2});
    for (int p = 0; p < 6; ++p) {
        pts.at(p, 0) = (p % 3 + 0.37) / 5.0 * 5 / 5.0 + 0.1;
        pts.at(p, 1) = (p % 2 + 0.63) / 5.0 + 0.2;
    }
    double err = grad_check(
        [](GraphD& g, const std::vector<GraphD::Ref>& p) {
            auto s = g.bilinear_sample(p[0], p[1]);
            return g.sum(g.mul(s, s));
        },
        {map, pts});
    CHECK(err <= 1e-3);
}

TEST_CASE("gradient of conv2d") {
    Rng rng(59);
    Tensor<double> x = Tensor<double>::randn({5, 6, 2}, rng);
    Tensor<double> w = Tensor<double>::randn({3, 3, 2, 4}, rng, 0.5);
    Tensor<double> b = Tensor<double>::randn({4}, rng);
    double err = grad_check(
        [](GraphD& g, const std::vector<GraphD::Ref>& p) {
            auto y = g.conv2d(p[0], p[1], p[2], 2, 1);
            return g.mean(g.mul(y, y));
        },
        {x, w, b});
    CHECK(err <= 1e-3);
}

TEST_CASE("zero-stride reductions are deterministic across runs") {
    Rng rng(61);
    Tensor<float> a = Tensor<float>::randn({40, 30}, rng);
    Tensor<float> b = Tensor<float>::randn({30, 20}, rng);
    GraphF g1, g2;
    auto r1 = g1.softmax(g1.matmul(g1.input(a), g1.input(b)));
    auto r2 = g2.softmax(g2.matmul(g2.input(a), g2.input(b)));
    CHECK(g1.val(r1).data == g2.val(r2).data);
}

TEST_CASE("cross_entropy of uniform logits is ln(num classes)") {
    GraphD g;
    auto ls = g.input(Tensor<double>::zeros({3, 7}));
    auto loss = g.cross_entropy(ls, {0, 3, 6});
    CHECK(g.val(loss).data[0] == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("non-finite detection") {
    GraphD g;
    auto x = g.input(Tensor<double>({2}, {1.0, std::numeric_limits<double>::infinity()}));
    CHECK_THROWS_AS(g.check_finite(x, "test"), std::runtime_error);
}

} // TEST_SUITE
