#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include <firepost/eval.hpp>

using namespace firepost;

namespace {

Detection det(double x0, double y0, double x1, double y1, int cls, double conf) {
    return Detection{BoundingBox{x0, y0, x1, y1}, cls, conf};
}

GroundTruthBox gt(double x0, double y0, double x1, double y1, int cls) {
    return GroundTruthBox{BoundingBox{x0, y0, x1, y1}, cls};
}

}  // namespace

TEST_CASE("matching counts true and false positives per image") {
    const std::vector<GroundTruthBox> truth = {gt(0, 0, 10, 10, 1), gt(40, 40, 50, 50, 0)};
    const std::vector<Detection> dets = {
        det(0, 0, 10, 10, 1, 0.9),     // TP
        det(1, 1, 11, 11, 1, 0.8),     // duplicate of a consumed gt -> FP
        det(40, 40, 50, 50, 1, 0.7),   // wrong class -> FP
        det(100, 100, 110, 110, 0, 0.6),  // nothing there -> FP
    };
    const MatchResult m = match_detections(dets, truth, 0.5);
    CHECK(m.is_tp == std::vector<bool>{true, false, false, false});
    CHECK(m.tp == 1);
    CHECK(m.fp == 3);
    CHECK(m.fn == 1);  // the smoke box was never found
}

TEST_CASE("precision and recall use the 1.0 empty-denominator convention") {
    CHECK(precision_recall(0, 0, 0) == std::pair{1.0, 1.0});
    CHECK(precision_recall(0, 5, 0) == std::pair{0.0, 1.0});
    CHECK(precision_recall(0, 0, 3) == std::pair{1.0, 0.0});
    CHECK(precision_recall(3, 1, 1) == std::pair{0.75, 0.75});
}

TEST_CASE("average precision on a worked three-detection fixture") {
    EvalInstance inst;
    inst.ground_truth = {gt(0, 0, 10, 10, 1), gt(50, 50, 60, 60, 1)};
    inst.detections = {
        det(0, 0, 10, 10, 1, 0.9),        // TP, rank 1
        det(100, 100, 110, 110, 1, 0.8),  // FP, rank 2
        det(50, 50, 60, 60, 1, 0.7),      // TP, rank 3
    };
    // all-points interpolation: 0.5 * 1 + 0.5 * (2/3) = 5/6
    const auto ap = average_precision({inst}, 1, 0.5);
    REQUIRE(ap.has_value());
    CHECK(*ap == Catch::Approx(5.0 / 6.0).margin(1e-12));
}

TEST_CASE("average precision edge cases") {
    EvalInstance no_gt;
    no_gt.detections = {det(0, 0, 10, 10, 1, 0.9)};
    CHECK_FALSE(average_precision({no_gt}, 1, 0.5).has_value());

    EvalInstance no_dets;
    no_dets.ground_truth = {gt(0, 0, 10, 10, 1)};
    const auto ap = average_precision({no_dets}, 1, 0.5);
    REQUIRE(ap.has_value());
    CHECK(*ap == 0.0);

    CHECK_FALSE(average_precision({}, 1, 0.5).has_value());
}

TEST_CASE("detections are ranked globally across images") {
    // a confident false positive in one image poisons the precision of the
    // whole ranking, which only a pooled evaluation can see
    EvalInstance a;
    a.ground_truth = {gt(0, 0, 10, 10, 1)};
    a.detections = {det(0, 0, 10, 10, 1, 0.6)};
    EvalInstance b;
    b.detections = {det(0, 0, 10, 10, 1, 0.9)};  // FP: image b has no gt
    const auto ap = average_precision({a, b}, 1, 0.5);
    REQUIRE(ap.has_value());
    CHECK(*ap == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("confidence ties break by instance order") {
    EvalInstance first;
    first.detections = {det(200, 200, 210, 210, 1, 0.8)};  // FP
    first.ground_truth = {gt(0, 0, 10, 10, 1)};
    EvalInstance second;
    second.detections = {det(0, 0, 10, 10, 1, 0.8)};  // TP at the same confidence
    second.ground_truth = {gt(0, 0, 10, 10, 1)};
    // the earlier instance ranks first, so the FP precedes the TP
    const auto ap = average_precision({first, second}, 1, 0.5);
    REQUIRE(ap.has_value());
    CHECK(*ap == Catch::Approx(0.5 * 0.5 + 0.0).margin(1e-12));
}

TEST_CASE("ground truth is consumed per image, not globally") {
    EvalInstance a;
    a.ground_truth = {gt(0, 0, 10, 10, 1)};
    a.detections = {det(0, 0, 10, 10, 1, 0.9)};
    EvalInstance b = a;  // identical layout in a second image
    const auto ap = average_precision({a, b}, 1, 0.5);
    REQUIRE(ap.has_value());
    CHECK(*ap == 1.0);
}

TEST_CASE("the iou sweep hits each threshold step") {
    const auto thresholds = map_50_95_thresholds();
    REQUIRE(thresholds.size() == 10);
    CHECK(thresholds.front() == 0.5);
    CHECK(thresholds.back() == 0.95);
    for (std::size_t k = 0; k < thresholds.size(); ++k)
        CHECK(thresholds[k] == (50.0 + 5.0 * static_cast<double>(k)) / 100.0);
}

TEST_CASE("map over the sweep counts only thresholds the match survives") {
    EvalInstance inst;
    inst.ground_truth = {gt(0, 0, 10, 10, 1)};
    inst.detections = {det(0, 2.5, 10, 12.5, 1, 0.9)};  // IoU exactly 0.6
    const auto sweep = map_range({inst}, 2);
    REQUIRE(sweep.has_value());
    // perfect at 0.50/0.55/0.60, zero at the seven stricter thresholds
    CHECK(*sweep == Catch::Approx(0.3).margin(1e-12));
}

TEST_CASE("mean ap averages classes and skips classes without ground truth") {
    EvalInstance inst;
    inst.ground_truth = {gt(0, 0, 10, 10, 1), gt(50, 50, 60, 60, 1), gt(80, 0, 90, 10, 0)};
    inst.detections = {
        det(0, 0, 10, 10, 1, 0.9),
        det(100, 100, 110, 110, 1, 0.8),
        det(50, 50, 60, 60, 1, 0.7),
        det(80, 0, 90, 10, 0, 0.9),
    };
    const auto m = mean_ap({inst}, 2, 0.5);
    REQUIRE(m.has_value());
    CHECK(*m == Catch::Approx((5.0 / 6.0 + 1.0) / 2.0).margin(1e-12));

    // drop the smoke gt: only the fire class contributes
    EvalInstance fire_only = inst;
    fire_only.ground_truth.pop_back();
    const auto m2 = mean_ap({fire_only}, 2, 0.5);
    REQUIRE(m2.has_value());
    CHECK(*m2 == Catch::Approx(5.0 / 6.0).margin(1e-12));

    CHECK_FALSE(mean_ap({}, 2, 0.5).has_value());
}

TEST_CASE("evaluate produces micro-averaged totals and per-class notes") {
    EvalInstance inst;
    inst.ground_truth = {gt(0, 0, 10, 10, 1), gt(50, 50, 60, 60, 1)};
    inst.detections = {det(0, 0, 10, 10, 1, 0.9), det(100, 100, 110, 110, 1, 0.8)};
    const EvalReport rep = evaluate({inst}, {"smoke", "fire"}, 0.5, "primary");
    CHECK(rep.method == "primary");
    REQUIRE(rep.per_class.size() == 2);
    CHECK(rep.per_class[0].name == "smoke");
    CHECK_FALSE(rep.per_class[0].ap50.has_value());
    CHECK(rep.per_class[1].ap50.has_value());
    CHECK(rep.precision == 0.5);  // 1 TP, 1 FP
    CHECK(rep.recall == 0.5);     // 1 of 2 gt found
    REQUIRE(rep.notes.size() == 1);
    CHECK(rep.notes[0].find("smoke") != std::string::npos);
    REQUIRE(rep.map50.has_value());
    CHECK(*rep.map50 == 0.5);  // recall tops out at 0.5 with envelope precision 1
}

TEST_CASE("report csv has one column block per class") {
    EvalInstance inst;
    inst.ground_truth = {gt(0, 0, 10, 10, 1)};
    inst.detections = {det(0, 0, 10, 10, 1, 0.9)};
    EvalReport rep = evaluate({inst}, {"smoke", "fire"}, 0.5, "nms");
    rep.avg_time_ms = 1.25;
    std::ostringstream out;
    write_report_csv({rep}, out);
    const std::string text = out.str();
    CHECK(text.find("method,precision,recall,map50,map50_95,smoke_precision,smoke_recall,"
                     "smoke_ap50,fire_precision,fire_recall,fire_ap50,avg_time_ms,mode") !=
          std::string::npos);
    CHECK(text.find("\nnms,1,1,1,") != std::string::npos);
    CHECK(text.find(",1.25,discard") != std::string::npos);
    // absent optional metrics serialize as empty cells, not as text
    CHECK(text.find("nan") == std::string::npos);
}

TEST_CASE("report text names the method and lists classes") {
    EvalInstance inst;
    inst.ground_truth = {gt(0, 0, 10, 10, 1)};
    inst.detections = {det(0, 0, 10, 10, 1, 0.9)};
    const EvalReport rep = evaluate({inst}, {"smoke", "fire"}, 0.5, "soft-nms");
    const std::string text = format_report_text(rep);
    CHECK(text.find("soft-nms") != std::string::npos);
    CHECK(text.find("precision") != std::string::npos);
    CHECK(text.find("[fire]") != std::string::npos);
    CHECK(text.find("note:") != std::string::npos);
}

TEST_CASE("stage clock merges repeated stages in first-seen order") {
    StageClock clock;
    clock.record("features", 2.0);
    clock.record("refine", 1.0);
    clock.record("features", 3.0);
    REQUIRE(clock.stages().size() == 2);
    CHECK(clock.stages()[0] == std::pair<std::string, double>{"features", 5.0});
    CHECK(clock.stages()[1] == std::pair<std::string, double>{"refine", 1.0});
    clock.reset();
    CHECK(clock.stages().empty());
}

TEST_CASE("pipeline timing aggregates per-image stage samples") {
    // synthetic visitor with deterministic "durations"
    const auto report = time_pipeline(
        [](int image, StageClock& clock) {
            clock.record("uncertainty", 1.0);
            if (image == 0) clock.record("features", 4.0);
        },
        2, 3);
    CHECK(report.images == 2);
    CHECK(report.repetitions == 3);
    REQUIRE(report.stages.size() == 2);
    CHECK(report.stages[0].stage == "uncertainty");
    CHECK(report.stages[0].mean_ms == Catch::Approx(1.0).margin(1e-12));
    CHECK(report.stages[0].std_ms == Catch::Approx(0.0).margin(1e-12));
    // "features" fires on half the images; absent samples count as zero
    CHECK(report.stages[1].stage == "features");
    CHECK(report.stages[1].mean_ms == Catch::Approx(2.0).margin(1e-12));
    CHECK(report.stages[1].std_ms == Catch::Approx(2.0).margin(1e-12));
    CHECK(report.total_mean_ms == Catch::Approx(3.0).margin(1e-12));

    std::ostringstream out;
    write_timing_csv(report, out);
    CHECK(out.str().find("stage,mean_ms_per_image,std_ms") != std::string::npos);
    CHECK(out.str().find("total,3,") != std::string::npos);

    const auto empty_report = time_pipeline([](int, StageClock&) {}, 0, 3);
    CHECK(empty_report.stages.empty());
    CHECK(empty_report.total_mean_ms == 0.0);
}
