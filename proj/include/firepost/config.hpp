#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "firepost/baselines.hpp"
#include "firepost/crn.hpp"
#include "firepost/imfeat.hpp"
#include "firepost/synthbench.hpp"

namespace firepost {

/// Every tunable in one place. File values override the defaults below;
/// command-line flags override the file.
struct RunConfig {
    std::uint64_t seed = 1234;

    struct Passes {
        int count = 5;          // dropout passes per image
        double match_iou = 0.5; // cross-pass association threshold
    } passes;

    struct Canny {
        double sigma = 1.4;
        double low = 40.0;
        double high = 100.0;
    } canny;

    struct Features {
        int glcm_levels = 8;
    } features;

    struct Crn {
        double learning_rate = 0.001;
        int batch_size = 64;
        int max_epochs = 200;
        int patience = 20;
        double tau = 0.5;       // keep threshold on refined confidence
        double label_iou = 0.5; // detection-vs-truth IoU for training labels
    } crn;

    struct Baselines {
        double nms_iou = 0.45;
        double soft_nms_sigma = 0.5;
        double soft_nms_score_floor = 0.001;
        double ebf_edge_fraction_max = 0.5;
        double cbf_min_pixel_fraction = 0.05;
        double hbcf_min_color_score = 0.25;
        double scf_diagonal_factor = 2.0;
    } baselines;

    struct Synth {
        int images = 20;
        int width = 320;
        int height = 240;
        int fire = 1;
        int smoke = 1;
        int distractors = 2;
        double sigma_loc = 1.5;
        double sigma_conf = 0.05;
        double p_miss = 0.1;
    } synth;

    struct Eval {
        double iou = 0.5;
        std::string mode = "discard";  // or "rank-all"
    } eval;

    CannyParams canny_params() const {
        CannyParams p;
        p.sigma = canny.sigma;
        p.low = canny.low;
        p.high = canny.high;
        return p;
    }

    BaselineConfig baseline_config() const {
        BaselineConfig b;
        b.nms_iou = baselines.nms_iou;
        b.soft_nms_sigma = baselines.soft_nms_sigma;
        b.soft_nms_score_floor = baselines.soft_nms_score_floor;
        b.ebf_edge_fraction_max = baselines.ebf_edge_fraction_max;
        b.cbf_min_pixel_fraction = baselines.cbf_min_pixel_fraction;
        b.hbcf_min_color_score = baselines.hbcf_min_color_score;
        b.scf_diagonal_factor = baselines.scf_diagonal_factor;
        b.canny = canny_params();
        return b;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.learning_rate = crn.learning_rate;
        t.batch_size = crn.batch_size;
        t.max_epochs = crn.max_epochs;
        t.early_stop_patience = crn.patience;
        t.seed = seed;
        return t;
    }

    SceneSpec scene_spec() const {
        SceneSpec s;
        s.width = synth.width;
        s.height = synth.height;
        s.fire_count = synth.fire;
        s.smoke_count = synth.smoke;
        s.distractor_count = synth.distractors;
        s.passes = passes.count;
        s.sigma_loc = synth.sigma_loc;
        s.sigma_conf = synth.sigma_conf;
        s.p_miss = synth.p_miss;
        s.seed = seed;
        return s;
    }
};

namespace detail {

/// Wraps one JSON object; read() marks keys consumed and finish() rejects
/// whatever was not recognized, reporting the dotted path.
class ConfigSection {
  public:
    ConfigSection(const nlohmann::json& node, std::string path)
        : node_(node), path_(std::move(path)) {
        if (!node_.is_object())
            throw std::runtime_error(where("") + "expected a JSON object");
    }

    template <typename T>
    void read(const char* key, T& target) {
        const auto it = node_.find(key);
        if (it == node_.end()) return;
        seen_.insert(key);
        try {
            target = it->get<T>();
        } catch (const nlohmann::json::exception&) {
            throw std::runtime_error(join(key) + ": wrong value type");
        }
    }

    const nlohmann::json* child(const char* key) {
        const auto it = node_.find(key);
        if (it == node_.end()) return nullptr;
        seen_.insert(key);
        return &*it;
    }

    std::string join(const std::string& key) const {
        return path_.empty() ? key : path_ + "." + key;
    }

    void finish() const {
        for (const auto& [key, value] : node_.items())
            if (seen_.find(key) == seen_.end())
                throw std::runtime_error(join(key) + ": unknown key");
    }

  private:
    std::string where(const std::string& key) const {
        const std::string p = key.empty() ? path_ : join(key);
        return p.empty() ? "" : p + ": ";
    }

    const nlohmann::json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

}  // namespace detail

inline void validate_config(const RunConfig& c) {
    auto fail = [](const std::string& msg) { throw std::invalid_argument("config: " + msg); };
    if (c.passes.count < 1) fail("passes.count must be at least 1");
    if (c.passes.match_iou <= 0.0 || c.passes.match_iou >= 1.0)
        fail("passes.match_iou must be inside (0, 1)");
    if (c.canny.sigma <= 0.0) fail("canny.sigma must be positive");
    if (c.canny.low < 0.0 || c.canny.high < c.canny.low)
        fail("canny thresholds need 0 <= low <= high");
    if (c.features.glcm_levels < 2 || c.features.glcm_levels > 256)
        fail("features.glcm_levels must be in [2, 256]");
    if (c.crn.learning_rate <= 0.0) fail("crn.learning_rate must be positive");
    if (c.crn.batch_size < 1) fail("crn.batch_size must be at least 1");
    if (c.crn.max_epochs < 1) fail("crn.max_epochs must be at least 1");
    if (c.crn.patience < 1) fail("crn.patience must be at least 1");
    if (c.crn.tau <= 0.0 || c.crn.tau >= 1.0) fail("crn.tau must be inside (0, 1)");
    if (c.crn.label_iou < 0.0 || c.crn.label_iou > 1.0) fail("crn.label_iou must be in [0, 1]");
    if (c.baselines.nms_iou < 0.0 || c.baselines.nms_iou > 1.0)
        fail("baselines.nms_iou must be in [0, 1]");
    if (c.baselines.soft_nms_sigma <= 0.0) fail("baselines.soft_nms_sigma must be positive");
    if (c.baselines.soft_nms_score_floor < 0.0 || c.baselines.soft_nms_score_floor >= 1.0)
        fail("baselines.soft_nms_score_floor must be in [0, 1)");
    if (c.baselines.ebf_edge_fraction_max < 0.0 || c.baselines.ebf_edge_fraction_max > 1.0)
        fail("baselines.ebf_edge_fraction_max must be in [0, 1]");
    if (c.baselines.cbf_min_pixel_fraction < 0.0 || c.baselines.cbf_min_pixel_fraction > 1.0)
        fail("baselines.cbf_min_pixel_fraction must be in [0, 1]");
    if (c.baselines.hbcf_min_color_score < 0.0 || c.baselines.hbcf_min_color_score > 1.0)
        fail("baselines.hbcf_min_color_score must be in [0, 1]");
    if (c.baselines.scf_diagonal_factor <= 0.0)
        fail("baselines.scf_diagonal_factor must be positive");
    if (c.synth.images < 0) fail("synth.images must not be negative");
    if (c.synth.width < 32 || c.synth.height < 32)
        fail("synth images must be at least 32x32");
    if (c.synth.fire < 0 || c.synth.smoke < 0 || c.synth.distractors < 0)
        fail("synth object counts must not be negative");
    if (c.synth.sigma_loc < 0.0 || c.synth.sigma_conf < 0.0)
        fail("synth noise sigmas must not be negative");
    if (c.synth.p_miss < 0.0 || c.synth.p_miss > 1.0) fail("synth.p_miss must be in [0, 1]");
    if (c.eval.iou < 0.0 || c.eval.iou > 1.0) fail("eval.iou must be in [0, 1]");
    if (c.eval.mode != "discard" && c.eval.mode != "rank-all")
        fail("eval.mode must be 'discard' or 'rank-all'");
}

inline RunConfig parse_config(const nlohmann::json& j) {
    RunConfig c;
    detail::ConfigSection root(j, "");
    root.read("seed", c.seed);
    if (const auto* node = root.child("passes")) {
        detail::ConfigSection s(*node, "passes");
        s.read("count", c.passes.count);
        s.read("match_iou", c.passes.match_iou);
        s.finish();
    }
    if (const auto* node = root.child("canny")) {
        detail::ConfigSection s(*node, "canny");
        s.read("sigma", c.canny.sigma);
        s.read("low", c.canny.low);
        s.read("high", c.canny.high);
        s.finish();
    }
    if (const auto* node = root.child("features")) {
        detail::ConfigSection s(*node, "features");
        s.read("glcm_levels", c.features.glcm_levels);
        s.finish();
    }
    if (const auto* node = root.child("crn")) {
        detail::ConfigSection s(*node, "crn");
        s.read("learning_rate", c.crn.learning_rate);
        s.read("batch_size", c.crn.batch_size);
        s.read("max_epochs", c.crn.max_epochs);
        s.read("patience", c.crn.patience);
        s.read("tau", c.crn.tau);
        s.read("label_iou", c.crn.label_iou);
        s.finish();
    }
    if (const auto* node = root.child("baselines")) {
        detail::ConfigSection s(*node, "baselines");
        s.read("nms_iou", c.baselines.nms_iou);
        s.read("soft_nms_sigma", c.baselines.soft_nms_sigma);
        s.read("soft_nms_score_floor", c.baselines.soft_nms_score_floor);
        s.read("ebf_edge_fraction_max", c.baselines.ebf_edge_fraction_max);
        s.read("cbf_min_pixel_fraction", c.baselines.cbf_min_pixel_fraction);
        s.read("hbcf_min_color_score", c.baselines.hbcf_min_color_score);
        s.read("scf_diagonal_factor", c.baselines.scf_diagonal_factor);
        s.finish();
    }
    if (const auto* node = root.child("synth")) {
        detail::ConfigSection s(*node, "synth");
        s.read("images", c.synth.images);
        s.read("width", c.synth.width);
        s.read("height", c.synth.height);
        s.read("fire", c.synth.fire);
        s.read("smoke", c.synth.smoke);
        s.read("distractors", c.synth.distractors);
        s.read("sigma_loc", c.synth.sigma_loc);
        s.read("sigma_conf", c.synth.sigma_conf);
        s.read("p_miss", c.synth.p_miss);
        s.finish();
    }
    if (const auto* node = root.child("eval")) {
        detail::ConfigSection s(*node, "eval");
        s.read("iou", c.eval.iou);
        s.read("mode", c.eval.mode);
        s.finish();
    }
    root.finish();
    validate_config(c);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    try {
        return parse_config(j);
    } catch (const std::runtime_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

}  // namespace firepost
