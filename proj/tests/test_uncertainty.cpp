#include <catch2/catch_amalgamated.hpp>

#include <vector>

#include <firepost/rng.hpp>
#include <firepost/uncertainty.hpp>

using namespace firepost;

TEST_CASE("variance centers on the primary confidence") {
    // five passes around a primary confidence of 0.8
    const UncertaintyEstimate e = estimate(0.8, {0.8, 0.6, 0.8, 0.6, 0.8});
    CHECK(e.mean_confidence == 0.8);
    CHECK(e.variance == Catch::Approx(0.016).margin(1e-12));
}

TEST_CASE("single pass means zero variance") {
    const UncertaintyEstimate e = estimate(0.73, {0.73});
    CHECK(e.mean_confidence == 0.73);
    CHECK(e.variance == 0.0);
}

TEST_CASE("identical confidences give zero variance") {
    const UncertaintyEstimate e = estimate(0.5, {0.5, 0.5, 0.5, 0.5});
    CHECK(e.variance == 0.0);
}

TEST_CASE("empty confidence list is rejected") {
    CHECK_THROWS_AS(estimate(0.5, {}), std::invalid_argument);
}

TEST_CASE("variance is nonnegative on random inputs") {
    Rng rng(33);
    for (int i = 0; i < 500; ++i) {
        const double c = rng.uniform();
        std::vector<double> passes;
        const int n = rng.uniform_int(1, 8);
        for (int j = 0; j < n; ++j) passes.push_back(rng.uniform());
        CHECK(estimate(c, passes).variance >= 0.0);
    }
}

namespace {

PassDetections make_pass(int index, std::vector<Detection> dets) {
    PassDetections pd;
    pd.image_id = "img";
    pd.pass_index = index;
    pd.detections = std::move(dets);
    return pd;
}

}  // namespace

TEST_CASE("cross-pass association fills per-pass confidences in input order") {
    const Detection a{BoundingBox{0, 0, 10, 10}, 1, 0.9};
    const Detection b{BoundingBox{50, 50, 60, 60}, 0, 0.4};
    const PassDetections primary = make_pass(0, {b, a});  // deliberately not sorted

    const std::vector<PassDetections> others = {
        make_pass(1, {Detection{BoundingBox{1, 0, 11, 10}, 1, 0.8},
                      Detection{BoundingBox{50, 51, 60, 61}, 0, 0.5}}),
        make_pass(2, {Detection{BoundingBox{0, 1, 10, 11}, 1, 0.7}}),
    };

    const auto cross = match_across_passes(primary, others, 0.5);
    REQUIRE(cross.size() == 2);
    // entry 0 corresponds to b (the first primary detection)
    REQUIRE(cross[0].confidences.size() == 3);
    CHECK(cross[0].confidences[0] == 0.4);
    CHECK(cross[0].confidences[1] == 0.5);
    CHECK(cross[0].confidences[2] == 0.0);  // pass 2 has no smoke box
    CHECK(cross[0].matched_passes == 2);
    REQUIRE(cross[1].confidences.size() == 3);
    CHECK(cross[1].confidences[0] == 0.9);
    CHECK(cross[1].confidences[1] == 0.8);
    CHECK(cross[1].confidences[2] == 0.7);
    CHECK(cross[1].matched_passes == 3);
}

TEST_CASE("a missing pass match contributes zero confidence") {
    const PassDetections primary =
        make_pass(0, {Detection{BoundingBox{0, 0, 10, 10}, 1, 0.8}});
    const std::vector<PassDetections> others = {make_pass(1, {})};
    const auto cross = match_across_passes(primary, others, 0.5);
    REQUIRE(cross.size() == 1);
    CHECK(cross[0].confidences == std::vector<double>{0.8, 0.0});
    const UncertaintyEstimate e =
        estimate(0.8, cross[0].confidences, cross[0].matched_passes);
    CHECK(e.variance == Catch::Approx(0.32).margin(1e-12));  // (0 + 0.64) / 2
}

TEST_CASE("association requires the class to match") {
    const PassDetections primary =
        make_pass(0, {Detection{BoundingBox{0, 0, 10, 10}, 1, 0.8}});
    const std::vector<PassDetections> others = {
        make_pass(1, {Detection{BoundingBox{0, 0, 10, 10}, 0, 0.9}})};
    const auto cross = match_across_passes(primary, others, 0.5);
    CHECK(cross[0].confidences[1] == 0.0);
}

TEST_CASE("association respects the overlap threshold") {
    const PassDetections primary =
        make_pass(0, {Detection{BoundingBox{0, 0, 10, 10}, 1, 0.8}});
    // IoU with [0,5,10,15] is 1/3: below the 0.5 threshold
    const std::vector<PassDetections> low = {
        make_pass(1, {Detection{BoundingBox{0, 5, 10, 15}, 1, 0.9}})};
    CHECK(match_across_passes(primary, low, 0.5)[0].confidences[1] == 0.0);
    // IoU with [0,0,10,5] is exactly 0.5: at-threshold associations count
    const std::vector<PassDetections> at = {
        make_pass(1, {Detection{BoundingBox{0, 0, 10, 5}, 1, 0.9}})};
    CHECK(match_across_passes(primary, at, 0.5)[0].confidences[1] == 0.9);
}

TEST_CASE("higher-confidence primaries consume counterparts first") {
    // two primaries both overlap the single pass-1 detection; the
    // higher-confidence one wins it, the other falls back to zero
    const Detection strong{BoundingBox{0, 0, 10, 10}, 1, 0.9};
    const Detection weak{BoundingBox{0, 1, 10, 11}, 1, 0.4};
    const PassDetections primary = make_pass(0, {weak, strong});
    const std::vector<PassDetections> others = {
        make_pass(1, {Detection{BoundingBox{0, 0, 10, 10}, 1, 0.85}})};
    const auto cross = match_across_passes(primary, others, 0.5);
    CHECK(cross[0].confidences[1] == 0.0);   // weak lost the counterpart
    CHECK(cross[1].confidences[1] == 0.85);  // strong consumed it
}

TEST_CASE("association rejects out-of-range thresholds") {
    const PassDetections primary = make_pass(0, {});
    CHECK_THROWS_AS(match_across_passes(primary, {}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(match_across_passes(primary, {}, 1.0), std::invalid_argument);
}
