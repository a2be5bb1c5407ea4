#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "firepost/geometry.hpp"
#include "firepost/image.hpp"
#include "firepost/imfeat.hpp"

namespace firepost {

/// Parameters of the six comparison post-detection methods.
struct BaselineConfig {
    double nms_iou = 0.45;
    double soft_nms_sigma = 0.5;
    double soft_nms_score_floor = 0.001;
    double ebf_edge_fraction_max = 0.5;
    double cbf_min_pixel_fraction = 0.05;
    double hbcf_min_color_score = 0.25;
    double scf_diagonal_factor = 2.0;
    CannyParams canny{};
};

namespace detail {

inline std::vector<std::size_t> processing_order(const std::vector<Detection>& dets) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detection_before(dets[a], dets[b]);
    });
    return order;
}

}  // namespace detail

/// Greedy per-class non-maximum suppression: keep the highest-scoring box,
/// drop same-class boxes with IoU strictly above the threshold to any kept
/// box. Output is in processing (descending-score) order.
inline std::vector<Detection> nms(const std::vector<Detection>& detections,
                                  double iou_threshold) {
    if (!(iou_threshold > 0.0)) throw std::invalid_argument("nms: iou_threshold must be > 0");
    const auto order = detail::processing_order(detections);
    std::vector<Detection> kept;
    kept.reserve(detections.size());
    for (const std::size_t i : order) {
        const Detection& d = detections[i];
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

/// Gaussian Soft-NMS: pop the current maximum, decay every remaining
/// same-class score by exp(-IoU^2 / sigma), drop boxes falling below the
/// floor. Kept boxes carry their decayed scores.
inline std::vector<Detection> soft_nms(const std::vector<Detection>& detections,
                                       double sigma = 0.5, double score_floor = 0.001) {
    if (!(sigma > 0.0)) throw std::invalid_argument("soft_nms: sigma must be > 0");
    std::vector<Detection> pool = detections;
    std::vector<Detection> kept;
    kept.reserve(pool.size());
    while (!pool.empty()) {
        std::size_t top = 0;
        for (std::size_t i = 1; i < pool.size(); ++i)
            if (detection_before(pool[i], pool[top])) top = i;
        const Detection max = pool[top];
        pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(top));
        kept.push_back(max);

        std::vector<Detection> next;
        next.reserve(pool.size());
        for (Detection& d : pool) {
            if (d.class_id == max.class_id) {
                const double v = iou(max.box, d.box);
                d.confidence *= std::exp(-(v * v) / sigma);
            }
            if (d.confidence >= score_floor) next.push_back(d);
        }
        pool = std::move(next);
    }
    return kept;
}

/// Drop detections whose crop is dominated by hard edges.
inline std::vector<Detection> edge_based_filter(const ImageBuffer& image,
                                                const std::vector<Detection>& detections,
                                                double edge_fraction_max = 0.5,
                                                const CannyParams& canny = {}) {
    std::vector<Detection> kept;
    for (const Detection& d : detections) {
        const ImageBuffer region = crop(image, clip_to_image(d.box, image.width(), image.height()));
        const EdgeMap map = canny_edges(region, canny);
        const double fraction =
            static_cast<double>(map.edge_count()) / static_cast<double>(region.pixel_count());
        if (fraction <= edge_fraction_max) kept.push_back(d);
    }
    return kept;
}

inline bool cbf_fire_pixel(const Rgb& p) { return p.r > 200 && p.g > 100 && p.b < 100; }
inline bool cbf_smoke_pixel(const Rgb& p) { return p.r < 100 && p.g < 100 && p.b > 200; }

/// RGB-threshold filter: keep a detection when at least min_pixel_fraction of
/// its crop satisfies the per-class RGB predicate.
inline std::vector<Detection> color_based_filter(const ImageBuffer& image,
                                                 const std::vector<Detection>& detections,
                                                 double min_pixel_fraction = 0.05) {
    std::vector<Detection> kept;
    for (const Detection& d : detections) {
        const ImageBuffer region = crop(image, clip_to_image(d.box, image.width(), image.height()));
        std::size_t hits = 0;
        for (const Rgb& px : region.pixels()) {
            if (d.class_id == kFireClass ? cbf_fire_pixel(px) : cbf_smoke_pixel(px)) ++hits;
        }
        const double fraction =
            static_cast<double>(hits) / static_cast<double>(region.pixel_count());
        if (fraction >= min_pixel_fraction) kept.push_back(d);
    }
    return kept;
}

/// HSV-distribution filter: keep when the crop's class color score clears the
/// threshold.
inline std::vector<Detection> histogram_color_filter(const ImageBuffer& image,
                                                     const std::vector<Detection>& detections,
                                                     double min_color_score = 0.25) {
    std::vector<Detection> kept;
    for (const Detection& d : detections) {
        const ImageBuffer region = crop(image, clip_to_image(d.box, image.width(), image.height()));
        if (color_score(region, d.class_id) >= min_color_score) kept.push_back(d);
    }
    return kept;
}

/// Cross-class co-occurrence: a fire detection survives only if some smoke
/// detection's center lies within diagonal_factor times the fire box's
/// diagonal of the fire box center, and vice versa.
inline std::vector<Detection> spatial_context_filter(const std::vector<Detection>& detections,
                                                     double diagonal_factor = 2.0) {
    auto center_distance = [](const BoundingBox& a, const BoundingBox& b) {
        const double ax = (a.x_min + a.x_max) / 2.0, ay = (a.y_min + a.y_max) / 2.0;
        const double bx = (b.x_min + b.x_max) / 2.0, by = (b.y_min + b.y_max) / 2.0;
        return std::hypot(ax - bx, ay - by);
    };
    std::vector<Detection> kept;
    for (const Detection& d : detections) {
        const int other_class = d.class_id == kFireClass ? kSmokeClass : kFireClass;
        const double reach = diagonal_factor * std::hypot(d.box.width(), d.box.height());
        bool co_occurs = false;
        for (const Detection& o : detections) {
            if (o.class_id != other_class) continue;
            if (center_distance(d.box, o.box) <= reach) {
                co_occurs = true;
                break;
            }
        }
        if (co_occurs) kept.push_back(d);
    }
    return kept;
}

}  // namespace firepost
