#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rxpp {

// Axis-aligned box, normalized xyxy in [0,1].
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double width() const { return x2 - x1; }
    double height() const { return y2 - y1; }
    double cx() const { return 0.5 * (x1 + x2); }
    double cy() const { return 0.5 * (y1 + y2); }
    double area() const { return width() * height(); }

    bool valid() const {
        return x1 < x2 && y1 < y2 && x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0;
    }
    // strict containment of *this inside o
    bool strictly_inside(const Box& o) const {
        return x1 > o.x1 && y1 > o.y1 && x2 < o.x2 && y2 < o.y2;
    }
};

inline void require_valid_box(const Box& b, const char* where) {
    if (!(b.x1 < b.x2) || !(b.y1 < b.y2))
        throw std::invalid_argument(std::string(where) + ": degenerate box");
}

inline double iou(const Box& a, const Box& b) {
    double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
    double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    return uni <= 0.0 ? 0.0 : inter / uni;
}

inline double center_distance(const Box& a, const Box& b) {
    double dx = a.cx() - b.cx();
    double dy = a.cy() - b.cy();
    return std::sqrt(dx * dx + dy * dy);
}

}  // namespace rxpp
