#include "dla/geometry.hpp"

namespace dla {

namespace {
double intersect_area(const BBox& a, const BBox& b) {
    double ix = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
    double iy = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    return ix * iy;
}
} // namespace

double iou(const BBox& a, const BBox& b) {
    double inter = intersect_area(a, b);
    double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

double giou(const BBox& a, const BBox& b) {
    double inter = intersect_area(a, b);
    double uni = a.area() + b.area() - inter;
    double hx = std::max(a.x2(), b.x2()) - std::min(a.x1(), b.x1());
    double hy = std::max(a.y2(), b.y2()) - std::min(a.y1(), b.y1());
    double hull = hx * hy;
    double i = uni > 0.0 ? inter / uni : 0.0;
    if (hull <= 0.0) return i;
    return i - (hull - uni) / hull;
}

BBox union_box(std::span<const BBox> boxes) {
    if (boxes.empty()) throw std::invalid_argument("union_box: empty box list");
    double x1 = boxes[0].x1(), y1 = boxes[0].y1(), x2 = boxes[0].x2(), y2 = boxes[0].y2();
    for (const BBox& b : boxes.subspan(1)) {
        x1 = std::min(x1, b.x1());
        y1 = std::min(y1, b.y1());
        x2 = std::max(x2, b.x2());
        y2 = std::max(y2, b.y2());
    }
    return BBox::from_corners(x1, y1, x2, y2);
}

} // namespace dla
