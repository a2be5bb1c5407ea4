#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include <firepost/crn.hpp>
#include <firepost/rng.hpp>

#include "test_util.hpp"

using namespace firepost;
using testutil::TempDir;

namespace {

CrnParameters random_params(Rng& rng, double scale = 0.5) {
    CrnParameters p;
    for (auto& layer : p.layers)
        for (auto& w : layer.w) w = rng.uniform(-scale, scale);
    for (auto& layer : p.layers)
        for (auto& b : layer.b) b = rng.uniform(-0.1, 0.1);
    return p;
}

FeatureVector random_features(Rng& rng) {
    FeatureVector f;
    for (std::size_t i = 0; i < 5; ++i) f[i] = rng.uniform();
    return f;
}

std::vector<LabeledExample> separable_examples(int n, std::uint64_t seed) {
    // the sign of the first feature decides the label; other features are noise
    std::vector<LabeledExample> out;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        LabeledExample ex;
        ex.label = rng.bernoulli(0.5) ? 1 : 0;
        ex.features[0] = ex.label == 1 ? rng.uniform(0.65, 1.0) : rng.uniform(0.0, 0.35);
        for (std::size_t k = 1; k < 5; ++k) ex.features[k] = rng.uniform();
        out.push_back(ex);
    }
    return out;
}

}  // namespace

TEST_CASE("network shapes and zero forward") {
    CrnParameters p = CrnParameters{};
    CHECK(p.shapes_valid());
    CHECK(p.layers[0].rows == 32);
    CHECK(p.layers[0].cols == 5);
    CHECK(p.layers[1].rows == 32);
    CHECK(p.layers[1].cols == 32);
    CHECK(p.layers[2].rows == 1);
    CHECK(p.layers[2].cols == 32);
    // all-zero parameters leave only the output sigmoid: p = 0.5 exactly
    FeatureVector f;
    f.values = {0.3, 0.1, 0.9, 0.2, 0.7};
    CHECK(forward(p, f) == 0.5);
}

TEST_CASE("sigmoid is stable at extreme inputs") {
    CHECK(sigmoid(0.0) == 0.5);
    CHECK(sigmoid(5.0) == Catch::Approx(1.0 / (1.0 + std::exp(-5.0))).margin(1e-15));
    CHECK(sigmoid(-800.0) > 0.0);
    CHECK(sigmoid(800.0) < 1.0);
    CHECK(sigmoid(21.0) > sigmoid(20.0));
    CHECK(sigmoid(-21.0) < sigmoid(-20.0));
}

TEST_CASE("binary cross-entropy values and clamping") {
    CHECK(bce_loss(0.5, 1) == Catch::Approx(std::log(2.0)).margin(1e-15));
    CHECK(bce_loss(0.5, 0) == Catch::Approx(std::log(2.0)).margin(1e-15));
    // predictions at the boundary are clamped rather than infinite
    CHECK(bce_loss(0.0, 1) == Catch::Approx(-std::log(1e-7)).margin(1e-9));
    CHECK(bce_loss(1.0, 0) == Catch::Approx(-std::log(1e-7)).epsilon(1e-6));
    CHECK(bce_loss(1.0, 1) < 1e-6);
    CHECK_THROWS_AS(bce_loss(0.5, 2), std::invalid_argument);
}

TEST_CASE("analytic gradients at zero parameters") {
    const CrnParameters p = CrnParameters{};
    FeatureVector f;
    f.values = {0.5, 0.5, 0.5, 0.5, 0.5};
    // with p = 0.5: dL/dz3 = p - y
    const CrnGradients g1 = backward(p, f, 1);
    CHECK(g1.layers[2].b[0] == Catch::Approx(-0.5).margin(1e-15));
    const CrnGradients g0 = backward(p, f, 0);
    CHECK(g0.layers[2].b[0] == Catch::Approx(0.5).margin(1e-15));
    // zero activations mean zero gradient for the hidden weights
    for (double w : g1.layers[1].w) CHECK(w == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
    Rng rng(404);
    const double h = 1e-5;
    double max_rel = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        CrnParameters p = random_params(rng);
        const FeatureVector f = random_features(rng);
        const int label = rng.bernoulli(0.5) ? 1 : 0;
        const CrnGradients g = backward(p, f, label);
        for (int layer = 0; layer < 3; ++layer) {
            auto check_one = [&](double& slot, double analytic) {
                const double saved = slot;
                slot = saved + h;
                const double up = bce_loss(forward(p, f), label);
                slot = saved - h;
                const double down = bce_loss(forward(p, f), label);
                slot = saved;
                const double numeric = (up - down) / (2.0 * h);
                const double denom = std::max(std::abs(analytic), std::abs(numeric));
                if (denom < 1e-6) return;
                max_rel = std::max(max_rel, std::abs(analytic - numeric) / denom);
            };
            // probe a spread of weights and every bias
            for (std::size_t i = 0; i < p.layers[layer].w.size(); i += 17)
                check_one(p.layers[layer].w[i], g.layers[layer].w[i]);
            for (std::size_t i = 0; i < p.layers[layer].b.size(); ++i)
                check_one(p.layers[layer].b[i], g.layers[layer].b[i]);
        }
    }
    CHECK(max_rel < 1e-4);
}

TEST_CASE("detections are labeled greedily against ground truth") {
    const std::vector<GroundTruthBox> gt = {
        GroundTruthBox{BoundingBox{0, 0, 10, 10}, 1},
        GroundTruthBox{BoundingBox{50, 50, 60, 60}, 0},
    };
    const std::vector<Detection> dets = {
        Detection{BoundingBox{0, 1, 10, 11}, 1, 0.6},    // overlaps gt0
        Detection{BoundingBox{0, 0, 10, 10}, 1, 0.9},    // exact gt0 match, higher conf
        Detection{BoundingBox{50, 50, 60, 60}, 1, 0.8},  // right box, wrong class
        Detection{BoundingBox{50, 50, 60, 60}, 0, 0.7},  // matches gt1
        Detection{BoundingBox{200, 200, 210, 210}, 0, 0.95},  // nothing nearby
    };
    const std::vector<int> labels = label_detections(dets, gt, 0.5);
    // the higher-confidence detection consumes gt0; the first one loses out
    CHECK(labels == std::vector<int>{0, 1, 0, 1, 0});
}

TEST_CASE("labels use an inclusive overlap threshold") {
    const std::vector<GroundTruthBox> gt = {GroundTruthBox{BoundingBox{0, 0, 10, 10}, 1}};
    // IoU([0,0,10,10],[0,0,10,5]) is exactly 0.5
    const std::vector<Detection> at = {Detection{BoundingBox{0, 0, 10, 5}, 1, 0.9}};
    CHECK(label_detections(at, gt, 0.5) == std::vector<int>{1});
    const std::vector<Detection> below = {Detection{BoundingBox{0, 5, 10, 15}, 1, 0.9}};
    CHECK(label_detections(below, gt, 0.5) == std::vector<int>{0});
}

TEST_CASE("training is deterministic per seed") {
    const auto examples = separable_examples(120, 9001);
    TrainConfig cfg;
    cfg.seed = 7;
    cfg.max_epochs = 12;
    const TrainResult a = train(cfg, examples);
    const TrainResult b = train(cfg, examples);
    CHECK(a.params == b.params);
    REQUIRE(a.log.size() == b.log.size());
    for (std::size_t i = 0; i < a.log.size(); ++i) {
        CHECK(a.log[i].train_bce == b.log[i].train_bce);
        CHECK(a.log[i].val_bce == b.log[i].val_bce);
    }
    cfg.seed = 8;
    const TrainResult c = train(cfg, examples);
    CHECK_FALSE(a.params == c.params);
}

TEST_CASE("training fits a separable problem") {
    const auto examples = separable_examples(400, 555);
    TrainConfig cfg;
    cfg.seed = 3;
    const TrainResult r = train(cfg, examples);
    CHECK(r.best_val_bce < 0.1);
    CHECK(r.warnings.empty());
    // the returned parameters are the best-validation snapshot
    double refit = 0.0;
    int counted = 0;
    for (const auto& s : r.log)
        if (s.epoch == r.best_epoch) {
            refit = s.val_bce;
            ++counted;
        }
    REQUIRE(counted == 1);
    CHECK(refit == r.best_val_bce);
}

TEST_CASE("early stopping halts once validation stops improving") {
    // labels independent of the features: validation loss cannot keep falling
    std::vector<LabeledExample> noise;
    Rng rng(556);
    for (int i = 0; i < 200; ++i) {
        LabeledExample ex;
        ex.label = rng.bernoulli(0.5) ? 1 : 0;
        for (std::size_t k = 0; k < 5; ++k) ex.features[k] = rng.uniform();
        noise.push_back(ex);
    }
    TrainConfig cfg;
    cfg.seed = 4;
    cfg.max_epochs = 500;
    cfg.early_stop_patience = 3;
    const TrainResult r = train(cfg, noise);
    CHECK(r.log.size() < 500);
    CHECK(static_cast<int>(r.log.size()) >= r.best_epoch);
}

TEST_CASE("degenerate training sets warn instead of failing") {
    std::vector<LabeledExample> one_class;
    Rng rng(12);
    for (int i = 0; i < 50; ++i) {
        LabeledExample ex;
        ex.label = 1;
        for (std::size_t k = 0; k < 5; ++k) ex.features[k] = rng.uniform();
        one_class.push_back(ex);
    }
    TrainConfig cfg;
    cfg.seed = 2;
    cfg.max_epochs = 200;
    const TrainResult r = train(cfg, one_class);
    bool warned = false;
    for (const auto& w : r.warnings)
        if (w.find("class") != std::string::npos) warned = true;
    CHECK(warned);
    // the network drifts toward predicting the only label it ever saw
    double mean = 0.0;
    for (const auto& ex : one_class) mean += forward(r.params, ex.features);
    mean /= static_cast<double>(one_class.size());
    CHECK(mean > 0.9);

    const TrainResult tiny = train(cfg, {one_class[0]});
    CHECK_FALSE(tiny.warnings.empty());

    CHECK_THROWS_AS(train(cfg, {}), std::invalid_argument);
}

TEST_CASE("rescoring keeps detections at or above the threshold") {
    const CrnParameters p = CrnParameters{};  // every prediction is exactly 0.5
    const std::vector<Detection> dets = {Detection{BoundingBox{0, 0, 5, 5}, 1, 0.9},
                                         Detection{BoundingBox{5, 5, 9, 9}, 0, 0.2}};
    const std::vector<FeatureVector> feats(2);
    const auto at = rescore_and_threshold(p, dets, feats, 0.5);
    REQUIRE(at.size() == 2);
    CHECK(at[0].refined_confidence == 0.5);
    CHECK(at[0].kept);  // 0.5 >= 0.5
    CHECK(at[0].detection.confidence == 0.9);  // raw confidence preserved
    const auto above = rescore_and_threshold(p, dets, feats, 0.51);
    CHECK_FALSE(above[0].kept);

    CHECK_THROWS_AS(rescore_and_threshold(p, dets, std::vector<FeatureVector>(1), 0.5),
                    std::invalid_argument);
    CHECK_THROWS_AS(rescore_and_threshold(p, dets, feats, 0.0), std::invalid_argument);
}

TEST_CASE("model files round-trip bit for bit") {
    TempDir tmp;
    Rng rng(31);
    const CrnParameters p = random_params(rng);
    const std::string path = tmp.file("model.json");
    save_model(p, path, 0.625);
    const CrnModel m = load_model(path);
    CHECK(m.tau == 0.625);
    CHECK(m.params == p);
}

TEST_CASE("model loader rejects structural problems by name") {
    TempDir tmp;
    const std::string path = tmp.file("model.json");
    Rng rng(32);
    const CrnParameters p = random_params(rng);
    save_model(p, path, 0.5);

    auto corrupt = [&](auto mutate) {
        std::ifstream in(path);
        nlohmann::json j = nlohmann::json::parse(in);
        mutate(j);
        const std::string out = tmp.file("bad.json");
        testutil::write_file(out, j.dump());
        return out;
    };

    CHECK_THROWS_WITH(load_model(corrupt([](nlohmann::json& j) { j["format_version"] = 2; })),
                      Catch::Matchers::ContainsSubstring("format_version"));
    CHECK_THROWS_WITH(
        load_model(corrupt([](nlohmann::json& j) { j["feature_order"] = {"c", "var"}; })),
        Catch::Matchers::ContainsSubstring("feature_order"));
    CHECK_THROWS_WITH(load_model(corrupt([](nlohmann::json& j) { j["tau"] = 1.5; })),
                      Catch::Matchers::ContainsSubstring("tau"));
    CHECK_THROWS_WITH(load_model(corrupt([](nlohmann::json& j) { j["layers"].erase(2); })),
                      Catch::Matchers::ContainsSubstring("layers"));
    CHECK_THROWS_WITH(load_model(corrupt([](nlohmann::json& j) { j["layers"][0]["rows"] = 16; })),
                      Catch::Matchers::ContainsSubstring("shape mismatch"));
    CHECK_THROWS_WITH(
        load_model(corrupt([](nlohmann::json& j) { j["layers"][1]["w"][4] = "oops"; })),
        Catch::Matchers::ContainsSubstring("numeric"));
    CHECK_THROWS_AS(load_model(tmp.file("missing.json")), std::runtime_error);
}

TEST_CASE("training log lists warnings, epochs and the best epoch") {
    TempDir tmp;
    const auto examples = separable_examples(60, 777);
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.max_epochs = 8;
    const TrainResult r = train(cfg, examples);
    const std::string path = tmp.file("log.csv");
    save_training_log(r, path);
    const std::string text = testutil::read_file(path);
    CHECK(text.find("epoch,train_bce,val_bce") != std::string::npos);
    CHECK(text.find("best epoch") != std::string::npos);
    CHECK(text.find("\n1,") != std::string::npos);
}
