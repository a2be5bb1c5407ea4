#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <vector>

#include <firepost/geometry.hpp>
#include <firepost/rng.hpp>

using namespace firepost;

TEST_CASE("bounding box validity and dimensions") {
    const BoundingBox b{1.0, 2.0, 4.0, 6.0};
    CHECK(b.valid());
    CHECK(b.width() == 3.0);
    CHECK(b.height() == 4.0);
    CHECK_FALSE(BoundingBox{4.0, 2.0, 1.0, 6.0}.valid());
    CHECK_FALSE(BoundingBox{1.0, 2.0, 1.0, 6.0}.valid());  // zero width
}

TEST_CASE("box area") {
    CHECK(area(BoundingBox{0, 0, 10, 10}) == 100.0);
    CHECK(area(BoundingBox{0, 0, 0, 10}) == 0.0);
    CHECK(area(BoundingBox{5, 5, 2, 8}) == 0.0);  // inverted counts as empty
}

TEST_CASE("iou of identical, disjoint and touching boxes") {
    const BoundingBox a{0, 0, 10, 10};
    CHECK(iou(a, a) == 1.0);
    CHECK(iou(a, BoundingBox{20, 20, 30, 30}) == 0.0);
    CHECK(iou(a, BoundingBox{10, 0, 20, 10}) == 0.0);   // shared edge only
    CHECK(iou(a, BoundingBox{10, 10, 20, 20}) == 0.0);  // shared corner only
}

TEST_CASE("iou of partial overlaps") {
    const BoundingBox a{0, 0, 10, 10};
    CHECK(iou(a, BoundingBox{5, 0, 15, 10}) == Catch::Approx(1.0 / 3.0).epsilon(1e-12));
    // vertical shift by a quarter: intersection 75, union 125
    CHECK(iou(a, BoundingBox{0, 2.5, 10, 12.5}) == Catch::Approx(0.6).margin(1e-15));
    // degenerate boxes have zero area and zero union
    CHECK(iou(BoundingBox{0, 0, 0, 0}, BoundingBox{0, 0, 0, 0}) == 0.0);
}

TEST_CASE("iou is symmetric and bounded on random boxes") {
    Rng rng(101);
    for (int i = 0; i < 200; ++i) {
        auto random_box = [&] {
            const double x0 = rng.uniform(0.0, 90.0);
            const double y0 = rng.uniform(0.0, 90.0);
            return BoundingBox{x0, y0, x0 + rng.uniform(0.5, 40.0),
                               y0 + rng.uniform(0.5, 40.0)};
        };
        const BoundingBox a = random_box();
        const BoundingBox b = random_box();
        const double v = iou(a, b);
        CHECK(v == iou(b, a));
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        CHECK(iou(a, a) == 1.0);
    }
}

TEST_CASE("clipping boxes to image bounds") {
    CHECK(clip_to_image(BoundingBox{-5, -5, 5, 5}, 10, 10) == BoundingBox{0, 0, 5, 5});
    CHECK(clip_to_image(BoundingBox{2, 3, 4, 5}, 10, 10) == BoundingBox{2, 3, 4, 5});
    CHECK(clip_to_image(BoundingBox{8, 8, 20, 20}, 10, 12) == BoundingBox{8, 8, 10, 12});
    // fully outside collapses onto the border
    const BoundingBox out = clip_to_image(BoundingBox{20, 20, 30, 30}, 10, 10);
    CHECK(out.x_min == 10.0);
    CHECK(out.x_max == 10.0);
}

TEST_CASE("detection processing order is confidence then box then class") {
    const Detection a{BoundingBox{0, 0, 1, 1}, 0, 0.9};
    const Detection b{BoundingBox{0, 0, 1, 1}, 0, 0.8};
    CHECK(detection_before(a, b));
    CHECK_FALSE(detection_before(b, a));

    // equal confidence: lexicographic box order breaks the tie
    const Detection c{BoundingBox{0, 0, 1, 1}, 0, 0.8};
    const Detection d{BoundingBox{0, 1, 1, 2}, 0, 0.8};
    CHECK(detection_before(c, d));
    CHECK_FALSE(detection_before(d, c));

    // equal confidence and box: class id decides
    const Detection e{BoundingBox{0, 0, 1, 1}, 1, 0.8};
    CHECK(detection_before(c, e));

    // identical detections: strict weak ordering requires false both ways
    CHECK_FALSE(detection_before(c, c));
}

TEST_CASE("sorting detections with the processing order is deterministic") {
    Rng rng(7);
    std::vector<Detection> dets;
    for (int i = 0; i < 40; ++i) {
        const double x = rng.uniform(0.0, 50.0);
        dets.push_back(Detection{BoundingBox{x, x, x + 5, x + 5},
                                 rng.bernoulli(0.5) ? 1 : 0, rng.uniform(0.0, 1.0)});
    }
    auto sorted1 = dets;
    std::sort(sorted1.begin(), sorted1.end(), detection_before);
    rng.shuffle(dets);
    std::sort(dets.begin(), dets.end(), detection_before);
    for (std::size_t i = 0; i < dets.size(); ++i) {
        CHECK(dets[i].box == sorted1[i].box);
        CHECK(dets[i].confidence == sorted1[i].confidence);
        CHECK(dets[i].class_id == sorted1[i].class_id);
    }
    for (std::size_t i = 1; i < dets.size(); ++i)
        CHECK(dets[i - 1].confidence >= dets[i].confidence);
}
