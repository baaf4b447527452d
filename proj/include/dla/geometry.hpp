#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace dla {

// Axis-aligned box in center-size form, coordinates normalized to [0,1]
// relative to page width/height.
struct BBox {
    double cx = 0, cy = 0, w = 0, h = 0;

    BBox() = default;
    BBox(double cx_, double cy_, double w_, double h_) : cx(cx_), cy(cy_), w(w_), h(h_) {}

    static BBox from_corners(double x1, double y1, double x2, double y2) {
        return BBox(0.5 * (x1 + x2), 0.5 * (y1 + y2), x2 - x1, y2 - y1);
    }

    double x1() const { return cx - 0.5 * w; }
    double y1() const { return cy - 0.5 * h; }
    double x2() const { return cx + 0.5 * w; }
    double y2() const { return cy + 0.5 * h; }
    double area() const { return w > 0 && h > 0 ? w * h : 0.0; }

    bool valid() const {
        return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) &&
               cx >= 0.0 && cx <= 1.0 && cy >= 0.0 && cy <= 1.0 && w > 0.0 && w <= 1.0 &&
               h > 0.0 && h <= 1.0;
    }

    bool contains(const BBox& other) const {
        return x1() <= other.x1() + 1e-12 && y1() <= other.y1() + 1e-12 &&
               x2() >= other.x2() - 1e-12 && y2() >= other.y2() - 1e-12;
    }

    bool operator==(const BBox& o) const {
        return cx == o.cx && cy == o.cy && w == o.w && h == o.h;
    }
};

// Intersection-over-union. Degenerate zero-area operands give 0.
double iou(const BBox& a, const BBox& b);

// Generalized IoU in [-1,1]: iou minus hull dead-space ratio.
double giou(const BBox& a, const BBox& b);

// Minimal axis-aligned box covering all inputs. Throws on an empty list.
BBox union_box(std::span<const BBox> boxes);

inline BBox union_box(const std::vector<BBox>& boxes) {
    return union_box(std::span<const BBox>(boxes));
}

} // namespace dla
