#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <tuple>

namespace firepost {

/// Axis-aligned box in pixel coordinates, origin top-left, corner form.
struct BoundingBox {
    double x_min = 0.0;
    double y_min = 0.0;
    double x_max = 0.0;
    double y_max = 0.0;

    bool valid() const {
        return std::isfinite(x_min) && std::isfinite(y_min) &&
               std::isfinite(x_max) && std::isfinite(y_max) &&
               x_min < x_max && y_min < y_max;
    }

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }

    friend bool operator==(const BoundingBox& a, const BoundingBox& b) {
        return a.x_min == b.x_min && a.y_min == b.y_min &&
               a.x_max == b.x_max && a.y_max == b.y_max;
    }
};

/// Lexicographic (x_min, y_min, x_max, y_max) order; the deterministic
/// tie-break used by every sort over boxes.
inline bool box_less(const BoundingBox& a, const BoundingBox& b) {
    return std::tie(a.x_min, a.y_min, a.x_max, a.y_max) <
           std::tie(b.x_min, b.y_min, b.x_max, b.y_max);
}

inline double area(const BoundingBox& b) {
    return std::max(0.0, b.x_max - b.x_min) * std::max(0.0, b.y_max - b.y_min);
}

/// Intersection over union. Zero-area union (two degenerate boxes) maps
/// to 0 so downstream suppression and matching never see NaN.
inline double iou(const BoundingBox& a, const BoundingBox& b) {
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = area(a) + area(b) - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

/// Intersect with [0,width]x[0,height]. A box fully outside collapses to a
/// zero-area box on the nearest border.
inline BoundingBox clip_to_image(const BoundingBox& b, int width, int height) {
    const double w = static_cast<double>(width);
    const double h = static_cast<double>(height);
    return BoundingBox{
        std::clamp(b.x_min, 0.0, w),
        std::clamp(b.y_min, 0.0, h),
        std::clamp(b.x_max, 0.0, w),
        std::clamp(b.y_max, 0.0, h),
    };
}

/// One detector output: box, class label (0 = smoke, 1 = fire by the default
/// class map) and raw confidence in [0,1].
struct Detection {
    BoundingBox box;
    int class_id = 0;
    double confidence = 0.0;

    friend bool operator==(const Detection& a, const Detection& b) {
        return a.box == b.box && a.class_id == b.class_id &&
               a.confidence == b.confidence;
    }
};

/// Processing order shared by suppression, matching and label construction:
/// descending confidence, ties broken lexicographically by box then class.
inline bool detection_before(const Detection& a, const Detection& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    if (!(a.box == b.box)) return box_less(a.box, b.box);
    return a.class_id < b.class_id;
}

}  // namespace firepost
