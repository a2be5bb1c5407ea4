#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "firepost/geometry.hpp"
#include "firepost/ingest.hpp"

namespace firepost {

/// Per-detection confidence statistics across dropout passes.
struct UncertaintyEstimate {
    double mean_confidence = 0.0;  // the primary pass confidence, by definition
    double variance = 0.0;
    int matched_passes = 0;  // passes (incl. primary) that contributed a match
};

/// Confidences gathered for one primary detection: its own confidence first,
/// then one entry per other pass (0.0 when that pass had no match).
struct CrossPassConfidences {
    std::vector<double> confidences;
    int matched_passes = 0;
};

/// Associate each primary detection with its best same-class counterpart in
/// every other pass. Greedy: primaries are processed in descending confidence
/// order and each detection of another pass is consumed at most once. A pass
/// with no match above the IoU threshold contributes confidence 0.0 -- a
/// detection that vanishes under dropout reads as maximally unstable.
inline std::vector<CrossPassConfidences> match_across_passes(
    const PassDetections& primary, const std::vector<PassDetections>& others,
    double iou_threshold = 0.5) {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0))
        throw std::invalid_argument("match_across_passes: iou_threshold must be in (0,1)");

    const std::size_t n = primary.detections.size();
    std::vector<CrossPassConfidences> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i].confidences.assign(1 + others.size(), 0.0);
        out[i].confidences[0] = primary.detections[i].confidence;
        out[i].matched_passes = 1;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detection_before(primary.detections[a], primary.detections[b]);
    });

    for (std::size_t p = 0; p < others.size(); ++p) {
        const auto& pass = others[p].detections;
        std::vector<bool> consumed(pass.size(), false);
        for (const std::size_t i : order) {
            const Detection& d = primary.detections[i];
            double best_iou = 0.0;
            std::size_t best = pass.size();
            for (std::size_t k = 0; k < pass.size(); ++k) {
                if (consumed[k] || pass[k].class_id != d.class_id) continue;
                const double v = iou(d.box, pass[k].box);
                if (v > best_iou) {
                    best_iou = v;
                    best = k;
                }
            }
            if (best < pass.size() && best_iou >= iou_threshold) {
                consumed[best] = true;
                out[i].confidences[1 + p] = pass[best].confidence;
                out[i].matched_passes += 1;
            }
        }
    }
    return out;
}

/// Mean is the primary confidence itself; the variance centers every pass
/// confidence on it: sigma^2 = (1/N) * sum_j (c_j - c_i)^2. Note this is not
/// the sample variance -- the centering value is c_i, not the pass mean.
inline UncertaintyEstimate estimate(double primary_confidence,
                                    const std::vector<double>& pass_confidences,
                                    int matched_passes = -1) {
    if (pass_confidences.empty())
        throw std::invalid_argument("estimate: pass_confidences must be nonempty");
    const double mu = primary_confidence;
    double sum = 0.0;
    for (const double c : pass_confidences) {
        const double d = c - mu;
        sum += d * d;
    }
    UncertaintyEstimate e;
    e.mean_confidence = mu;
    e.variance = sum / static_cast<double>(pass_confidences.size());
    e.matched_passes =
        matched_passes >= 0 ? matched_passes : static_cast<int>(pass_confidences.size());
    return e;
}

}  // namespace firepost
