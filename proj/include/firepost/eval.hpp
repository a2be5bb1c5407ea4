#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "firepost/crn.hpp"
#include "firepost/geometry.hpp"
#include "firepost/imfeat.hpp"
#include "firepost/ingest.hpp"

namespace firepost {

/// TP/FP flags for one image's detections at one IoU threshold, plus the
/// count of ground-truth boxes left unmatched (FN).
struct MatchResult {
    std::vector<bool> is_tp;  // aligned with the input detection order
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

/// Greedy same-class matching: detections in descending-confidence order each
/// take the unconsumed ground-truth box with the highest IoU, if that IoU
/// clears the threshold.
inline MatchResult match_detections(const std::vector<Detection>& detections,
                                    const std::vector<GroundTruthBox>& ground_truth,
                                    double iou_threshold) {
    MatchResult r;
    const std::vector<int> labels = label_detections(detections, ground_truth, iou_threshold);
    r.is_tp.resize(detections.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        r.is_tp[i] = labels[i] == 1;
        if (r.is_tp[i])
            ++r.tp;
        else
            ++r.fp;
    }
    r.fn = static_cast<int>(ground_truth.size()) - r.tp;
    return r;
}

/// Empty-denominator conventions: precision is 1.0 with no detections,
/// recall is 1.0 with no ground truth.
inline std::pair<double, double> precision_recall(int tp, int fp, int fn) {
    const double p = (tp + fp) == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp);
    const double r = (tp + fn) == 0 ? 1.0 : static_cast<double>(tp) / (tp + fn);
    return {p, r};
}

/// One image's detections paired with its ground truth.
struct EvalInstance {
    std::vector<Detection> detections;
    std::vector<GroundTruthBox> ground_truth;
};

namespace detail {

struct RankedFlag {
    double confidence;
    std::size_t instance;
    BoundingBox box;
    bool is_tp;
};

}  // namespace detail

/// All-points interpolated average precision for one class at one IoU
/// threshold. Returns nullopt when the class has no ground truth anywhere.
inline std::optional<double> average_precision(const std::vector<EvalInstance>& instances,
                                               int class_id, double iou_threshold) {
    std::size_t total_gt = 0;
    std::vector<detail::RankedFlag> ranked;
    for (std::size_t idx = 0; idx < instances.size(); ++idx) {
        const auto& inst = instances[idx];
        std::vector<Detection> dets;
        std::vector<GroundTruthBox> gts;
        for (const auto& d : inst.detections)
            if (d.class_id == class_id) dets.push_back(d);
        for (const auto& g : inst.ground_truth)
            if (g.class_id == class_id) gts.push_back(g);
        total_gt += gts.size();
        const MatchResult m = match_detections(dets, gts, iou_threshold);
        for (std::size_t i = 0; i < dets.size(); ++i)
            ranked.push_back(
                detail::RankedFlag{dets[i].confidence, idx, dets[i].box, m.is_tp[i]});
    }
    if (total_gt == 0) return std::nullopt;
    if (ranked.empty()) return 0.0;

    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const detail::RankedFlag& a, const detail::RankedFlag& b) {
                         if (a.confidence != b.confidence) return a.confidence > b.confidence;
                         if (a.instance != b.instance) return a.instance < b.instance;
                         return box_less(a.box, b.box);
                     });

    const std::size_t n = ranked.size();
    std::vector<double> precision(n), recall(n);
    int tp = 0, fp = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (ranked[k].is_tp)
            ++tp;
        else
            ++fp;
        precision[k] = static_cast<double>(tp) / static_cast<double>(tp + fp);
        recall[k] = static_cast<double>(tp) / static_cast<double>(total_gt);
    }
    // Precision envelope: max precision at any recall >= r.
    for (std::size_t k = n - 1; k-- > 0;)
        precision[k] = std::max(precision[k], precision[k + 1]);

    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        ap += (recall[k] - prev_recall) * precision[k];
        prev_recall = recall[k];
    }
    return ap;
}

/// The ten COCO-style thresholds 0.50, 0.55, ..., 0.95, built from exact
/// rationals so comparisons against hand-constructed IoUs stay predictable.
inline std::vector<double> map_50_95_thresholds() {
    std::vector<double> t;
    for (int k = 0; k < 10; ++k) t.push_back(static_cast<double>(50 + 5 * k) / 100.0);
    return t;
}

/// Mean over classes of AP at one threshold; classes without ground truth are
/// excluded (noted by the caller).
inline std::optional<double> mean_ap(const std::vector<EvalInstance>& instances,
                                     int num_classes, double iou_threshold) {
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < num_classes; ++c) {
        const auto ap = average_precision(instances, c, iou_threshold);
        if (ap.has_value()) {
            sum += *ap;
            ++counted;
        }
    }
    if (counted == 0) return std::nullopt;
    return sum / counted;
}

/// Mean over the 10 IoU thresholds of the class-mean AP.
inline std::optional<double> map_range(const std::vector<EvalInstance>& instances,
                                       int num_classes) {
    double sum = 0.0;
    int counted = 0;
    for (const double t : map_50_95_thresholds()) {
        const auto m = mean_ap(instances, num_classes, t);
        if (m.has_value()) {
            sum += *m;
            ++counted;
        }
    }
    if (counted == 0) return std::nullopt;
    return sum / counted;
}

struct ClassReport {
    std::string name;
    double precision = 1.0;
    double recall = 1.0;
    std::optional<double> ap50;
};

/// Metrics mirroring one method column of the results tables.
struct EvalReport {
    std::string method;
    std::string mode = "discard";  // how thresholded detections were handled
    double precision = 1.0;        // micro-averaged over all classes
    double recall = 1.0;
    std::optional<double> map50;
    std::optional<double> map50_95;
    std::vector<ClassReport> per_class;
    std::optional<double> avg_time_ms;
    std::vector<std::string> notes;
};

inline EvalReport evaluate(const std::vector<EvalInstance>& instances,
                           const std::vector<std::string>& class_names,
                           double iou_threshold = 0.5, const std::string& method = "",
                           const std::string& mode = "discard") {
    EvalReport rep;
    rep.method = method;
    rep.mode = mode;
    const int num_classes = static_cast<int>(class_names.size());

    int tp_all = 0, fp_all = 0, fn_all = 0;
    for (int c = 0; c < num_classes; ++c) {
        ClassReport cr;
        cr.name = class_names[static_cast<std::size_t>(c)];
        int tp = 0, fp = 0, fn = 0;
        for (const auto& inst : instances) {
            std::vector<Detection> dets;
            std::vector<GroundTruthBox> gts;
            for (const auto& d : inst.detections)
                if (d.class_id == c) dets.push_back(d);
            for (const auto& g : inst.ground_truth)
                if (g.class_id == c) gts.push_back(g);
            const MatchResult m = match_detections(dets, gts, iou_threshold);
            tp += m.tp;
            fp += m.fp;
            fn += m.fn;
        }
        std::tie(cr.precision, cr.recall) = precision_recall(tp, fp, fn);
        cr.ap50 = average_precision(instances, c, iou_threshold);
        if (!cr.ap50.has_value())
            rep.notes.push_back("class '" + cr.name +
                                "' has no ground truth; excluded from mAP");
        tp_all += tp;
        fp_all += fp;
        fn_all += fn;
        rep.per_class.push_back(std::move(cr));
    }
    std::tie(rep.precision, rep.recall) = precision_recall(tp_all, fp_all, fn_all);
    rep.map50 = mean_ap(instances, num_classes, iou_threshold);
    rep.map50_95 = map_range(instances, num_classes);
    return rep;
}

namespace detail {

inline std::string opt_to_string(const std::optional<double>& v) {
    return v.has_value() ? format_double(*v) : std::string();
}

}  // namespace detail

/// One CSV row per method; per-class columns follow the class-name order.
inline void write_report_csv(const std::vector<EvalReport>& reports, std::ostream& out) {
    out << "method,precision,recall,map50,map50_95";
    if (!reports.empty()) {
        for (const auto& cr : reports.front().per_class)
            out << "," << cr.name << "_precision," << cr.name << "_recall," << cr.name
                << "_ap50";
    }
    out << ",avg_time_ms,mode\n";
    for (const auto& r : reports) {
        out << r.method << "," << detail::format_double(r.precision) << ","
            << detail::format_double(r.recall) << "," << detail::opt_to_string(r.map50) << ","
            << detail::opt_to_string(r.map50_95);
        for (const auto& cr : r.per_class)
            out << "," << detail::format_double(cr.precision) << ","
                << detail::format_double(cr.recall) << "," << detail::opt_to_string(cr.ap50);
        out << "," << detail::opt_to_string(r.avg_time_ms) << "," << r.mode << "\n";
    }
}

inline std::string format_report_text(const EvalReport& r) {
    std::ostringstream out;
    out.setf(std::ios::fixed);
    out.precision(4);
    out << "== " << (r.method.empty() ? "evaluation" : r.method) << " (mode: " << r.mode
        << ") ==\n";
    out << "precision @ IoU 0.5: " << r.precision << "\n";
    out << "recall    @ IoU 0.5: " << r.recall << "\n";
    if (r.map50) out << "mAP@50:              " << *r.map50 << "\n";
    if (r.map50_95) out << "mAP@50-95:           " << *r.map50_95 << "\n";
    for (const auto& cr : r.per_class) {
        out << "  [" << cr.name << "] precision " << cr.precision << ", recall " << cr.recall;
        if (cr.ap50) out << ", AP@50 " << *cr.ap50;
        out << "\n";
    }
    if (r.avg_time_ms) out << "avg end-to-end time: " << *r.avg_time_ms << " ms/image\n";
    for (const auto& n : r.notes) out << "note: " << n << "\n";
    return out.str();
}

/// Accumulates wall-clock durations per pipeline stage for one image visit.
class StageClock {
  public:
    using Clock = std::chrono::steady_clock;

    class Scoped {
      public:
        Scoped(StageClock& owner, std::string stage)
            : owner_(owner), stage_(std::move(stage)), start_(Clock::now()) {}
        ~Scoped() {
            const auto end = Clock::now();
            owner_.record(stage_, std::chrono::duration<double, std::milli>(end - start_).count());
        }
        Scoped(const Scoped&) = delete;
        Scoped& operator=(const Scoped&) = delete;

      private:
        StageClock& owner_;
        std::string stage_;
        Clock::time_point start_;
      };

    Scoped scoped(std::string stage) { return Scoped(*this, std::move(stage)); }

    void record(const std::string& stage, double ms) {
        for (auto& [name, value] : stages_) {
            if (name == stage) {
                value += ms;
                return;
            }
        }
        stages_.emplace_back(stage, ms);
    }

    const std::vector<std::pair<std::string, double>>& stages() const { return stages_; }
    void reset() { stages_.clear(); }

  private:
    std::vector<std::pair<std::string, double>> stages_;  // first-seen order
};

struct StageTiming {
    std::string stage;
    double mean_ms = 0.0;
    double std_ms = 0.0;
};

struct TimingReport {
    int images = 0;
    int repetitions = 0;
    std::vector<StageTiming> stages;
    double total_mean_ms = 0.0;  // per image, all stages
    double total_std_ms = 0.0;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    if (xs.empty()) return {0.0, 0.0};
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double var = 0.0;
    for (const double x : xs) var += (x - mean) * (x - mean);
    var /= xs.size();
    return {mean, std::sqrt(var)};
}

}  // namespace detail

/// Run `visit(image_index, clock)` for every image, `repetitions` times, with
/// one untimed warm-up sweep first. Statistics are per-image over all timed
/// samples.
template <typename Visit>
TimingReport time_pipeline(Visit&& visit, int num_images, int repetitions = 3) {
    TimingReport report;
    report.images = num_images;
    report.repetitions = repetitions;
    if (num_images == 0 || repetitions <= 0) return report;

    StageClock clock;
    for (int i = 0; i < num_images; ++i) {  // warm-up, discarded
        clock.reset();
        visit(i, clock);
    }

    std::vector<std::string> stage_order;
    std::map<std::string, std::vector<double>> samples;
    std::vector<double> totals;
    for (int rep = 0; rep < repetitions; ++rep) {
        for (int i = 0; i < num_images; ++i) {
            clock.reset();
            visit(i, clock);
            double total = 0.0;
            for (const auto& [stage, ms] : clock.stages()) {
                if (samples.find(stage) == samples.end()) stage_order.push_back(stage);
                samples[stage].push_back(ms);
                total += ms;
            }
            totals.push_back(total);
        }
    }
    for (const auto& stage : stage_order) {
        auto& xs = samples[stage];
        // Stages absent on some images count as zero there.
        xs.resize(static_cast<std::size_t>(repetitions) * num_images, 0.0);
        const auto [mean, sd] = detail::mean_std(xs);
        report.stages.push_back(StageTiming{stage, mean, sd});
    }
    std::tie(report.total_mean_ms, report.total_std_ms) = detail::mean_std(totals);
    return report;
}

inline void write_timing_csv(const TimingReport& report, std::ostream& out) {
    out << "stage,mean_ms_per_image,std_ms\n";
    for (const auto& s : report.stages)
        out << s.stage << "," << detail::format_double(s.mean_ms) << ","
            << detail::format_double(s.std_ms) << "\n";
    out << "total," << detail::format_double(report.total_mean_ms) << ","
        << detail::format_double(report.total_std_ms) << "\n";
}

}  // namespace firepost
