#include "doctest.h"

#include "dla/geometry.hpp"
#include "dla/rng.hpp"

using namespace dla;

namespace {

// area-overlap estimate on a fixed 1000x1000 grid over the two boxes' hull
double mc_iou(const BBox& a, const BBox& b) {
    double x1 = std::min(a.x1(), b.x1()), x2 = std::max(a.x2(), b.x2());
    double y1 = std::min(a.y1(), b.y1()), y2 = std::max(a.y2(), b.y2());
    int inter = 0, uni = 0;
    const int n = 1000;
    for (int iy = 0; iy < n; ++iy) {
        double y = y1 + (y2 - y1) * (iy + 0.5) / n;
        for (int ix = 0; ix < n; ++ix) {
            double x = x1 + (x2 - x1) * (ix + 0.5) / n;
            bool in_a = x >= a.x1() && x <= a.x2() && y >= a.y1() && y <= a.y2();
            bool in_b = x >= b.x1() && x <= b.x2() && y >= b.y1() && y <= b.y2();
            inter += in_a && in_b;
            uni += in_a || in_b;
        }
    }
    return uni == 0 ? 0.0 : double(inter) / uni;
}

} // namespace

TEST_SUITE("geometry") {

TEST_CASE("iou of identical boxes is 1") {
    BBox b{0.5, 0.5, 0.2, 0.3};
    CHECK(iou(b, b) == doctest::Approx(1.0));
    CHECK(giou(b, b) == doctest::Approx(1.0));
}

TEST_CASE("adjacent squares filling their hull have giou 0") {
    BBox a = BBox::from_corners(0.0, 0.0, 0.5, 1.0);
    BBox b = BBox::from_corners(0.5, 0.0, 1.0, 1.0);
    CHECK(iou(a, b) == doctest::Approx(0.0));
    CHECK(giou(a, b) == doctest::Approx(0.0));
}

TEST_CASE("quarter-area contained box has iou 0.25") {
    BBox outer = BBox::from_corners(0.0, 0.0, 1.0, 1.0);
    BBox inner = BBox::from_corners(0.0, 0.0, 0.5, 0.5);
    CHECK(iou(outer, inner) == doctest::Approx(0.25));
    CHECK(iou(inner, outer) == doctest::Approx(0.25));
}

TEST_CASE("iou matches grid rasterization on random pairs") {
    Rng rng(42);
    for (int t = 0; t < 5; ++t) {
        BBox a{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.5),
               rng.uniform(0.1, 0.5)};
        BBox b{rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7), rng.uniform(0.1, 0.5),
               rng.uniform(0.1, 0.5)};
        CHECK(iou(a, b) == doctest::Approx(mc_iou(a, b)).epsilon(1e-2));
    }
}

TEST_CASE("giou bounds and symmetry") {
    Rng rng(7);
    for (int t = 0; t < 100; ++t) {
        BBox a{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4),
               rng.uniform(0.05, 0.4)};
        BBox b{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8), rng.uniform(0.05, 0.4),
               rng.uniform(0.05, 0.4)};
        double g = giou(a, b);
        CHECK(g <= iou(a, b) + 1e-12);
        CHECK(g >= -1.0);
        CHECK(g <= 1.0);
        CHECK(giou(b, a) == doctest::Approx(g));
        CHECK(iou(b, a) == doctest::Approx(iou(a, b)));
    }
}

TEST_CASE("degenerate boxes give iou 0") {
    BBox a{0.5, 0.5, 0.0, 0.2};
    BBox b{0.5, 0.5, 0.2, 0.2};
    CHECK(iou(a, b) == doctest::Approx(0.0));
}

TEST_CASE("union_box of one box is itself") {
    BBox b{0.4, 0.6, 0.1, 0.2};
    BBox u = union_box(std::vector<BBox>{b});
    CHECK(u.x1() == doctest::Approx(b.x1()).epsilon(1e-12));
    CHECK(u.y1() == doctest::Approx(b.y1()).epsilon(1e-12));
    CHECK(u.x2() == doctest::Approx(b.x2()).epsilon(1e-12));
    CHECK(u.y2() == doctest::Approx(b.y2()).epsilon(1e-12));
}

TEST_CASE("union_box of disjoint boxes takes elementwise corner extremes") {
    BBox a = BBox::from_corners(0.1, 0.2, 0.3, 0.4);
    BBox b = BBox::from_corners(0.5, 0.6, 0.8, 0.9);
    BBox u = union_box(std::vector<BBox>{a, b});
    CHECK(u.x1() == doctest::Approx(0.1));
    CHECK(u.y1() == doctest::Approx(0.2));
    CHECK(u.x2() == doctest::Approx(0.8));
    CHECK(u.y2() == doctest::Approx(0.9));
}

TEST_CASE("union_box contains every input and is minimal") {
    Rng rng(11);
    std::vector<BBox> boxes;
    for (int i = 0; i < 100; ++i)
        boxes.push_back(BBox{rng.uniform(0.2, 0.8), rng.uniform(0.2, 0.8),
                             rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3)});
    BBox u = union_box(boxes);
    const double eps = 1e-9;
    for (const BBox& b : boxes) {
        CHECK(u.x1() <= b.x1() + eps);
        CHECK(u.y1() <= b.y1() + eps);
        CHECK(u.x2() >= b.x2() - eps);
        CHECK(u.y2() >= b.y2() - eps);
    }
    double shrink = 1e-6;
    bool touches_left = false, touches_right = false, touches_top = false, touches_bot = false;
    for (const BBox& b : boxes) {
        touches_left |= b.x1() < u.x1() + shrink;
        touches_right |= b.x2() > u.x2() - shrink;
        touches_top |= b.y1() < u.y1() + shrink;
        touches_bot |= b.y2() > u.y2() - shrink;
    }
    CHECK(touches_left);
    CHECK(touches_right);
    CHECK(touches_top);
    CHECK(touches_bot);
}

TEST_CASE("union_box rejects an empty list") {
    CHECK_THROWS_AS(union_box(std::vector<BBox>{}), std::invalid_argument);
}

} // TEST_SUITE
