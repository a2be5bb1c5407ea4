#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "firepost/geometry.hpp"
#include "firepost/image.hpp"
#include "firepost/imfeat.hpp"
#include "firepost/ingest.hpp"
#include "firepost/rng.hpp"

namespace firepost {

/// Knobs for one synthetic scene and its simulated detector passes.
/// With sigma_loc = sigma_conf = p_miss = 0 every pass is identical and
/// true-positive boxes coincide exactly with the ground truth.
struct SceneSpec {
    int width = 320;
    int height = 240;
    int fire_count = 1;
    int smoke_count = 1;
    int distractor_count = 2;
    int passes = 5;
    double sigma_loc = 1.5;    // px translation jitter on non-primary passes
    double sigma_conf = 0.05;  // confidence jitter on non-primary passes
    double p_miss = 0.1;       // per-pass drop chance for a true detection
    std::uint64_t seed = 1234;
};

struct SyntheticScene {
    std::string image_id;
    ImageBuffer image{1, 1};
    std::vector<GroundTruthBox> ground_truth;
    std::vector<PassDetections> passes;  // pass 0 is the primary output
};

namespace detail {

inline std::uint8_t jitter_channel(int base, int amount, Rng& rng) {
    const int v = base + rng.uniform_int(-amount, amount);
    return static_cast<std::uint8_t>(std::clamp(v, 0, 255));
}

inline void fill_background(ImageBuffer& img, Rng& rng) {
    // Mottled green-brown: hue ~78, value below the flame floor, saturation
    // above the smoke ceiling, so neither color predicate fires.
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x)
            img.at(x, y) = Rgb{jitter_channel(96, 12, rng), jitter_channel(110, 12, rng),
                               jitter_channel(62, 12, rng)};
}

struct PlacedRect {
    int x0, y0, x1, y1;  // half-open pixel rect
};

inline bool rects_overlap(const PlacedRect& a, const PlacedRect& b, int pad) {
    return a.x0 - pad < b.x1 && b.x0 - pad < a.x1 && a.y0 - pad < b.y1 && b.y0 - pad < a.y1;
}

/// Find a free axis-aligned spot of the given size, or report failure after
/// a bounded number of attempts.
inline bool place_rect(int w, int h, int img_w, int img_h, Rng& rng,
                       const std::vector<PlacedRect>& taken, PlacedRect& out) {
    const int margin = 4;
    if (w + 2 * margin >= img_w || h + 2 * margin >= img_h) return false;
    for (int attempt = 0; attempt < 64; ++attempt) {
        const int x0 = margin + static_cast<int>(rng.uniform_index(
                                    static_cast<std::uint64_t>(img_w - w - 2 * margin)));
        const int y0 = margin + static_cast<int>(rng.uniform_index(
                                    static_cast<std::uint64_t>(img_h - h - 2 * margin)));
        const PlacedRect cand{x0, y0, x0 + w, y0 + h};
        bool free = true;
        for (const auto& t : taken)
            if (rects_overlap(cand, t, 6)) {
                free = false;
                break;
            }
        if (free) {
            out = cand;
            return true;
        }
    }
    return false;
}

inline void draw_flame_blob(ImageBuffer& img, const PlacedRect& r, Rng& rng) {
    const double cx = 0.5 * (r.x0 + r.x1 - 1);
    const double cy = 0.5 * (r.y0 + r.y1 - 1);
    const double rx = 0.5 * (r.x1 - r.x0);
    const double ry = 0.5 * (r.y1 - r.y0);
    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
            const double dx = (x - cx) / rx;
            const double dy = (y - cy) / ry;
            const double d2 = dx * dx + dy * dy;
            if (d2 > 1.0) continue;
            const double t = std::sqrt(d2);  // 0 at core, 1 at rim
            // Yellow core fading to orange-red rim, all inside the flame
            // color gate even with the flicker noise.
            const int red = 255;
            const int green = static_cast<int>(200.0 - 115.0 * t);
            const int blue = static_cast<int>(40.0 - 30.0 * t);
            img.at(x, y) = Rgb{jitter_channel(red, 8, rng), jitter_channel(green, 8, rng),
                               jitter_channel(blue, 8, rng)};
        }
    }
}

inline void draw_smoke_blob(ImageBuffer& img, const PlacedRect& r, Rng& rng) {
    const double cx = 0.5 * (r.x0 + r.x1 - 1);
    const double cy = 0.5 * (r.y0 + r.y1 - 1);
    const double rx = 0.5 * (r.x1 - r.x0);
    const double ry = 0.5 * (r.y1 - r.y0);
    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
            const double dx = (x - cx) / rx;
            const double dy = (y - cy) / ry;
            const double d2 = dx * dx + dy * dy;
            if (d2 > 1.0) continue;
            const double t = std::sqrt(d2);
            const int gray = static_cast<int>(185.0 - 55.0 * t);  // pale core, darker rim
            const int g = std::clamp(gray + rng.uniform_int(-8, 8), 0, 255);
            // A few counts of channel spread keeps saturation near zero.
            img.at(x, y) = Rgb{static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(g),
                               static_cast<std::uint8_t>(std::min(255, g + 4))};
        }
    }
}

/// High-contrast diagonal stripes, 4 px wide. Diagonal steps keep their full
/// gradient under the blur (axis-aligned fine patterns lose theirs to the
/// cross-direction averaging), so edges reliably cover ~45% of the crop, and
/// both stripe colors miss the flame and smoke color gates.
inline void draw_stripe_distractor(ImageBuffer& img, const PlacedRect& r, Rng& rng) {
    const int width = 4;
    const int phase = static_cast<int>(rng.uniform_index(2 * width));
    const Rgb dark{15, 10, 40};
    const Rgb light{235, 230, 255};
    for (int y = r.y0; y < r.y1; ++y) {
        for (int x = r.x0; x < r.x1; ++x) {
            const bool lit = (((x - r.x0) + (y - r.y0) + phase) / width) % 2 == 0;
            const Rgb base = lit ? light : dark;
            img.at(x, y) = Rgb{jitter_channel(base.r, 4, rng), jitter_channel(base.g, 4, rng),
                               jitter_channel(base.b, 4, rng)};
        }
    }
}

inline BoundingBox rect_to_box(const PlacedRect& r) {
    return BoundingBox{static_cast<double>(r.x0), static_cast<double>(r.y0),
                       static_cast<double>(r.x1), static_cast<double>(r.y1)};
}

inline BoundingBox translate_clip(const BoundingBox& b, double dx, double dy, int w, int h) {
    BoundingBox out{b.x_min + dx, b.y_min + dy, b.x_max + dx, b.y_max + dy};
    return clip_to_image(out, w, h);
}

}  // namespace detail

/// Deterministic scene: the same (spec.seed, index) pair always produces the
/// same pixels, ground truth and detector passes.
inline SyntheticScene generate_scene(const SceneSpec& spec, std::uint64_t index) {
    if (spec.width < 32 || spec.height < 32)
        throw std::invalid_argument("generate_scene: image must be at least 32x32");
    if (spec.passes < 1) throw std::invalid_argument("generate_scene: need at least one pass");
    Rng rng = Rng::derive(spec.seed, index);

    SyntheticScene scene;
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%05llu", static_cast<unsigned long long>(index));
    scene.image_id = id;
    scene.image = ImageBuffer(spec.width, spec.height);
    detail::fill_background(scene.image, rng);

    std::vector<detail::PlacedRect> taken;
    struct TrueObject {
        BoundingBox box;
        int class_id;
    };
    std::vector<TrueObject> objects;
    std::vector<BoundingBox> distractors;

    for (int i = 0; i < spec.fire_count; ++i) {
        const int w = 2 * rng.uniform_int(14, 26);
        const int h = 2 * rng.uniform_int(12, 22);
        detail::PlacedRect r;
        if (!detail::place_rect(w, h, spec.width, spec.height, rng, taken, r)) continue;
        taken.push_back(r);
        detail::draw_flame_blob(scene.image, r, rng);
        objects.push_back({detail::rect_to_box(r), kFireClass});
    }
    for (int i = 0; i < spec.smoke_count; ++i) {
        const int w = 2 * rng.uniform_int(16, 30);
        const int h = 2 * rng.uniform_int(12, 24);
        detail::PlacedRect r;
        if (!detail::place_rect(w, h, spec.width, spec.height, rng, taken, r)) continue;
        taken.push_back(r);
        detail::draw_smoke_blob(scene.image, r, rng);
        objects.push_back({detail::rect_to_box(r), kSmokeClass});
    }
    for (int i = 0; i < spec.distractor_count; ++i) {
        const int w = rng.uniform_int(24, 48);
        const int h = rng.uniform_int(20, 40);
        detail::PlacedRect r;
        if (!detail::place_rect(w, h, spec.width, spec.height, rng, taken, r)) continue;
        taken.push_back(r);
        detail::draw_stripe_distractor(scene.image, r, rng);
        distractors.push_back(detail::rect_to_box(r));
    }

    for (const auto& obj : objects)
        scene.ground_truth.push_back(GroundTruthBox{obj.box, obj.class_id});

    // Simulated detector: the primary pass reports every true object at its
    // exact box, plus one spurious detection per distractor. Later passes
    // jitter boxes and confidences; spurious detections flicker in and out,
    // which is what makes their cross-pass variance high.
    struct Emission {
        BoundingBox box;
        int class_id;
        double base_conf;
        bool spurious;
    };
    std::vector<Emission> emissions;
    for (const auto& obj : objects)
        emissions.push_back({obj.box, obj.class_id, rng.uniform(0.55, 0.95), false});
    for (const auto& d : distractors)
        emissions.push_back(
            {d, rng.bernoulli(0.5) ? kFireClass : kSmokeClass, rng.uniform(0.30, 0.85), true});

    const double spurious_present = std::clamp(1.0 - 4.0 * spec.p_miss, 0.0, 1.0);
    for (int pass = 0; pass < spec.passes; ++pass) {
        PassDetections pd;
        pd.image_id = scene.image_id;
        pd.pass_index = pass;
        for (const auto& e : emissions) {
            if (pass == 0) {
                pd.detections.push_back(Detection{e.box, e.class_id, e.base_conf});
                continue;
            }
            if (!e.spurious) {
                if (rng.bernoulli(spec.p_miss)) continue;
                const BoundingBox b = detail::translate_clip(
                    e.box, rng.normal(0.0, spec.sigma_loc), rng.normal(0.0, spec.sigma_loc),
                    spec.width, spec.height);
                const double c =
                    std::clamp(e.base_conf + rng.normal(0.0, spec.sigma_conf), 0.01, 0.999);
                pd.detections.push_back(Detection{b, e.class_id, c});
            } else {
                if (!rng.bernoulli(spurious_present)) continue;
                const BoundingBox b = detail::translate_clip(
                    e.box, rng.normal(0.0, 2.0 * spec.sigma_loc),
                    rng.normal(0.0, 2.0 * spec.sigma_loc), spec.width, spec.height);
                const double c = std::clamp(e.base_conf + rng.normal(0.0, 3.0 * spec.sigma_conf),
                                            0.01, 0.999);
                pd.detections.push_back(Detection{b, e.class_id, c});
            }
        }
        scene.passes.push_back(std::move(pd));
    }
    return scene;
}

/// Corpus layout on disk:
///   <dir>/images/<id>.ppm
///   <dir>/labels/<id>.txt
///   <dir>/detections/<id>.jsonl
///   <dir>/manifest.json        (paths relative to the manifest)
inline Manifest generate_corpus(const SceneSpec& spec, int images,
                                const std::filesystem::path& dir) {
    if (images < 0) throw std::invalid_argument("generate_corpus: negative image count");
    namespace fs = std::filesystem;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "labels");
    fs::create_directories(dir / "detections");

    Manifest manifest;
    manifest.class_names = {"smoke", "fire"};
    for (int i = 0; i < images; ++i) {
        const SyntheticScene scene = generate_scene(spec, static_cast<std::uint64_t>(i));
        const std::string image_rel = "images/" + scene.image_id + ".ppm";
        const std::string labels_rel = "labels/" + scene.image_id + ".txt";
        const std::string det_rel = "detections/" + scene.image_id + ".jsonl";
        save_ppm(scene.image, (dir / image_rel).string());
        save_yolo_ground_truth(scene.ground_truth, scene.image.width(), scene.image.height(),
                               (dir / labels_rel).string());
        save_detection_passes(scene.passes, (dir / det_rel).string());
        ManifestEntry entry;
        entry.image_id = scene.image_id;
        entry.image_path = image_rel;
        entry.label_path = labels_rel;
        entry.detections_path = det_rel;
        manifest.entries.push_back(std::move(entry));
    }
    save_manifest(manifest, (dir / "manifest.json").string());
    return manifest;
}

}  // namespace firepost
