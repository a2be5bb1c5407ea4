#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "firepost/image.hpp"
#include "firepost/uncertainty.hpp"

namespace firepost {

struct HsvPixel {
    double h = 0.0;  // degrees in [0,360), 0 for achromatic pixels
    double s = 0.0;  // [0,1]
    double v = 0.0;  // [0,1]
};

/// Standard hexcone RGB -> HSV.
inline HsvPixel rgb_to_hsv(const Rgb& p) {
    const double r = p.r / 255.0, g = p.g / 255.0, b = p.b / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double delta = mx - mn;
    HsvPixel out;
    out.v = mx;
    out.s = mx > 0.0 ? delta / mx : 0.0;
    if (delta > 0.0) {
        double h;
        if (mx == r)
            h = 60.0 * std::fmod((g - b) / delta, 6.0);
        else if (mx == g)
            h = 60.0 * ((b - r) / delta + 2.0);
        else
            h = 60.0 * ((r - g) / delta + 4.0);
        if (h < 0.0) h += 360.0;
        if (h >= 360.0) h -= 360.0;
        out.h = h;
    }
    return out;
}

inline bool fire_color_predicate(const HsvPixel& p) {
    const bool hue_ok = (p.h >= 0.0 && p.h <= 50.0) || (p.h >= 340.0 && p.h < 360.0);
    return hue_ok && p.s >= 0.4 && p.v >= 0.5;
}

inline bool smoke_color_predicate(const HsvPixel& p) {
    return p.s <= 0.3 && p.v >= 0.3 && p.v <= 0.9;
}

constexpr int kSmokeClass = 0;
constexpr int kFireClass = 1;

/// Fraction of crop pixels matching the class color profile: saturated
/// red-orange for fire, desaturated mid-value gray for smoke.
inline double color_score(const ImageBuffer& crop, int class_id) {
    if (crop.pixel_count() == 0) throw std::invalid_argument("color_score: empty crop");
    if (class_id != kSmokeClass && class_id != kFireClass)
        throw std::invalid_argument("color_score: unknown class " + std::to_string(class_id));
    std::size_t hits = 0;
    for (const Rgb& px : crop.pixels()) {
        const HsvPixel hsv = rgb_to_hsv(px);
        if (class_id == kFireClass ? fire_color_predicate(hsv) : smoke_color_predicate(hsv))
            ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(crop.pixel_count());
}

struct CannyParams {
    double sigma = 1.4;   // 5x5 Gaussian blur
    double low = 40.0;    // thresholds on Sobel magnitude / 4 (8-bit scale)
    double high = 100.0;
};

namespace detail {

/// Scalar field with replicate-border access.
struct Grid {
    int w = 0, h = 0;
    std::vector<double> v;
    Grid(int w_, int h_) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * h_, 0.0) {}
    double& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
    double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
    double clamped(int x, int y) const {
        x = std::clamp(x, 0, w - 1);
        y = std::clamp(y, 0, h - 1);
        return at(x, y);
    }
};

inline Grid to_gray(const ImageBuffer& img) {
    Grid g(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y)
        for (int x = 0; x < img.width(); ++x) g.at(x, y) = luma(img.at(x, y));
    return g;
}

inline Grid gaussian_blur_5x5(const Grid& in, double sigma) {
    std::array<double, 5> k{};
    double sum = 0.0;
    for (int i = -2; i <= 2; ++i) {
        k[i + 2] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += k[i + 2];
    }
    for (double& w : k) w /= sum;

    Grid tmp(in.w, in.h), out(in.w, in.h);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            double acc = 0.0;
            for (int i = -2; i <= 2; ++i) acc += k[i + 2] * in.clamped(x + i, y);
            tmp.at(x, y) = acc;
        }
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            double acc = 0.0;
            for (int i = -2; i <= 2; ++i) acc += k[i + 2] * tmp.clamped(x, y + i);
            out.at(x, y) = acc;
        }
    return out;
}

struct GradientField {
    Grid magnitude;  // Sobel magnitude / 4, roughly the 8-bit intensity scale
    Grid gx, gy;
};

inline GradientField sobel(const Grid& in) {
    GradientField f{Grid(in.w, in.h), Grid(in.w, in.h), Grid(in.w, in.h)};
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            const double tl = in.clamped(x - 1, y - 1), t = in.clamped(x, y - 1),
                         tr = in.clamped(x + 1, y - 1), l = in.clamped(x - 1, y),
                         r = in.clamped(x + 1, y), bl = in.clamped(x - 1, y + 1),
                         b = in.clamped(x, y + 1), br = in.clamped(x + 1, y + 1);
            const double gx = (tr + 2.0 * r + br) - (tl + 2.0 * l + bl);
            const double gy = (bl + 2.0 * b + br) - (tl + 2.0 * t + tr);
            f.gx.at(x, y) = gx;
            f.gy.at(x, y) = gy;
            f.magnitude.at(x, y) = std::hypot(gx, gy) / 4.0;
        }
    return f;
}

}  // namespace detail

/// Binary edge map, row-major (1 = edge pixel).
struct EdgeMap {
    int width = 0, height = 0;
    std::vector<std::uint8_t> edges;
    std::size_t edge_count() const {
        std::size_t n = 0;
        for (auto e : edges) n += e;
        return n;
    }
};

/// Classical Canny: Gaussian blur, Sobel, non-maximum suppression along the
/// quantized gradient direction, then double-threshold hysteresis with
/// 8-connectivity.
inline EdgeMap canny_edges(const ImageBuffer& crop, const CannyParams& params = {}) {
    if (!(params.high >= params.low && params.low > 0.0))
        throw std::invalid_argument("canny_edges: need high >= low > 0");

    const int w = crop.width(), h = crop.height();
    EdgeMap map{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h, 0)};

    const detail::Grid blurred = detail::gaussian_blur_5x5(detail::to_gray(crop), params.sigma);
    const detail::GradientField grad = detail::sobel(blurred);

    // Non-maximum suppression: compare against the two neighbors along the
    // gradient direction, quantized to 0/45/90/135 degrees. Neighbors outside
    // the image count as 0, plateaus (>=) survive.
    static constexpr int dir_dx[4] = {1, 1, 0, -1};
    static constexpr int dir_dy[4] = {0, 1, 1, 1};
    detail::Grid thin(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double m = grad.magnitude.at(x, y);
            if (m <= 0.0) continue;
            double angle = std::atan2(grad.gy.at(x, y), grad.gx.at(x, y));
            if (angle < 0.0) angle += 3.14159265358979323846;
            int q = static_cast<int>(angle / (3.14159265358979323846 / 4.0) + 0.5) % 4;
            const int dx = dir_dx[q], dy = dir_dy[q];
            auto mag_or_zero = [&](int xx, int yy) {
                return (xx < 0 || xx >= w || yy < 0 || yy >= h)
                           ? 0.0
                           : grad.magnitude.at(xx, yy);
            };
            if (m >= mag_or_zero(x + dx, y + dy) && m >= mag_or_zero(x - dx, y - dy))
                thin.at(x, y) = m;
        }

    // Hysteresis: flood from strong pixels through weak ones.
    std::vector<std::uint8_t> weak(static_cast<std::size_t>(w) * h, 0);
    std::deque<std::pair<int, int>> frontier;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double m = thin.at(x, y);
            if (m >= params.low) weak[static_cast<std::size_t>(y) * w + x] = 1;
            if (m >= params.high) {
                map.edges[static_cast<std::size_t>(y) * w + x] = 1;
                frontier.emplace_back(x, y);
            }
        }
    while (!frontier.empty()) {
        const auto [x, y] = frontier.front();
        frontier.pop_front();
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int xx = x + dx, yy = y + dy;
                if (xx < 0 || xx >= w || yy < 0 || yy >= h) continue;
                const std::size_t i = static_cast<std::size_t>(yy) * w + xx;
                if (weak[i] && !map.edges[i]) {
                    map.edges[i] = 1;
                    frontier.emplace_back(xx, yy);
                }
            }
    }
    return map;
}

/// Inverted, saturated edge density: 1 - min(1, fraction / 0.5). Diffuse
/// regions (few edges) score high; busy sharp regions score 0.
inline double edge_score(const ImageBuffer& crop, const CannyParams& params = {}) {
    if (crop.pixel_count() == 0) throw std::invalid_argument("edge_score: empty crop");
    const EdgeMap map = canny_edges(crop, params);
    const double fraction =
        static_cast<double>(map.edge_count()) / static_cast<double>(crop.pixel_count());
    return 1.0 - std::min(1.0, fraction / 0.5);
}

struct GlcmOffset {
    int dx = 1, dy = 0;
};

inline const std::vector<GlcmOffset>& default_glcm_offsets() {
    static const std::vector<GlcmOffset> offsets{{1, 0}, {0, 1}, {1, 1}, {1, -1}};
    return offsets;
}

/// Gray-level co-occurrence matrix over uniformly quantized intensities,
/// accumulated symmetrically over the given offsets.
struct GlcmMatrix {
    int levels = 8;
    std::vector<std::uint64_t> counts;   // levels x levels, row-major
    std::vector<double> normalized;      // sums to 1 unless uniform_fallback
    bool uniform_fallback = false;       // crop too small for every offset

    double p(int i, int j) const { return normalized[static_cast<std::size_t>(i) * levels + j]; }
};

inline GlcmMatrix glcm(const ImageBuffer& crop, int levels = 8,
                       const std::vector<GlcmOffset>& offsets = default_glcm_offsets()) {
    if (levels < 2 || levels > 256)
        throw std::invalid_argument("glcm: levels must be in [2, 256]");
    if (crop.pixel_count() == 0) throw std::invalid_argument("glcm: empty crop");

    GlcmMatrix m;
    m.levels = levels;
    m.counts.assign(static_cast<std::size_t>(levels) * levels, 0);
    m.normalized.assign(m.counts.size(), 0.0);

    const int w = crop.width(), h = crop.height();
    std::vector<int> bins(crop.pixel_count());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const int bin = std::min(levels - 1,
                                     static_cast<int>(luma(crop.at(x, y)) * levels / 256.0));
            bins[static_cast<std::size_t>(y) * w + x] = bin;
        }

    std::uint64_t total = 0;
    for (const auto& off : offsets) {
        for (int y = 0; y < h; ++y) {
            const int yy = y + off.dy;
            if (yy < 0 || yy >= h) continue;
            for (int x = 0; x < w; ++x) {
                const int xx = x + off.dx;
                if (xx < 0 || xx >= w) continue;
                const int a = bins[static_cast<std::size_t>(y) * w + x];
                const int b = bins[static_cast<std::size_t>(yy) * w + xx];
                ++m.counts[static_cast<std::size_t>(a) * levels + b];
                ++m.counts[static_cast<std::size_t>(b) * levels + a];
                total += 2;
            }
        }
    }

    if (total == 0) {
        // No offset fits inside the crop; fall back to a flagged uniform
        // distribution so texture scores stay defined.
        m.uniform_fallback = true;
        const double u = 1.0 / static_cast<double>(levels * levels);
        std::fill(m.normalized.begin(), m.normalized.end(), u);
    } else {
        for (std::size_t i = 0; i < m.counts.size(); ++i)
            m.normalized[i] = static_cast<double>(m.counts[i]) / static_cast<double>(total);
    }
    return m;
}

inline double glcm_contrast(const GlcmMatrix& m) {
    double c = 0.0;
    for (int i = 0; i < m.levels; ++i)
        for (int j = 0; j < m.levels; ++j) c += m.p(i, j) * (i - j) * (i - j);
    return c;
}

inline double glcm_homogeneity(const GlcmMatrix& m) {
    double h = 0.0;
    for (int i = 0; i < m.levels; ++i)
        for (int j = 0; j < m.levels; ++j) h += m.p(i, j) / (1.0 + (i - j) * (i - j));
    return h;
}

/// Class-conditional Haralick score: fire favors high contrast (normalized by
/// the maximum attainable (L-1)^2), smoke favors homogeneity.
inline double texture_score(const ImageBuffer& crop, int class_id, int levels = 8,
                            const std::vector<GlcmOffset>& offsets = default_glcm_offsets()) {
    if (class_id != kSmokeClass && class_id != kFireClass)
        throw std::invalid_argument("texture_score: unknown class " + std::to_string(class_id));
    const GlcmMatrix m = glcm(crop, levels, offsets);
    if (class_id == kFireClass) {
        const double denom = static_cast<double>(levels - 1) * (levels - 1);
        return std::min(1.0, glcm_contrast(m) / denom);
    }
    return std::min(1.0, glcm_homogeneity(m));
}

/// The three plausibility features of one detection crop.
struct RegionFeatures {
    double color_score = 0.0;
    double edge_score = 0.0;
    double texture_score = 0.0;
};

inline RegionFeatures region_features(const ImageBuffer& crop, int class_id,
                                      const CannyParams& canny = {}, int glcm_levels = 8) {
    return RegionFeatures{color_score(crop, class_id), edge_score(crop, canny),
                          texture_score(crop, class_id, glcm_levels)};
}

/// CRN input, in fixed order: [c, sigma^2, s, e, t].
struct FeatureVector {
    std::array<double, 5> values{};

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
    friend bool operator==(const FeatureVector& a, const FeatureVector& b) = default;
};

inline FeatureVector build_feature_vector(const Detection& det,
                                          const UncertaintyEstimate& unc,
                                          const RegionFeatures& feats) {
    FeatureVector f;
    f.values = {det.confidence, unc.variance, feats.color_score, feats.edge_score,
                feats.texture_score};
    return f;
}

/// One row of the feature dump consumed by CRN training.
struct FeatureRow {
    std::string image_id;
    int det_index = 0;
    int class_id = 0;
    FeatureVector features;
    std::optional<int> label;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// CSV layout: image_id,det_index,class,c,var,s,e,t[,label]. The label column
/// is present only when every row carries one.
inline void write_feature_csv(const std::vector<FeatureRow>& rows, std::ostream& out) {
    bool with_labels = !rows.empty();
    for (const auto& r : rows)
        if (!r.label.has_value()) with_labels = false;
    out << "image_id,det_index,class,c,var,s,e,t";
    if (with_labels) out << ",label";
    out << "\n";
    for (const auto& r : rows) {
        out << r.image_id << "," << r.det_index << "," << r.class_id;
        for (const double v : r.features.values) out << "," << detail::format_double(v);
        if (with_labels) out << "," << *r.label;
        out << "\n";
    }
}

inline void save_feature_csv(const std::vector<FeatureRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    write_feature_csv(rows, out);
}

inline std::vector<FeatureRow> parse_feature_csv(std::istream& in, const std::string& name) {
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error(name + ": empty file");
    header = detail::strip_cr(header);
    const std::string base = "image_id,det_index,class,c,var,s,e,t";
    bool with_labels;
    if (header == base)
        with_labels = false;
    else if (header == base + ",label")
        with_labels = true;
    else
        throw std::runtime_error(name + ": unexpected CSV header: " + header);

    std::vector<FeatureRow> rows;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const std::string ctx = name + ":" + std::to_string(line_no);
        std::vector<std::string> fields;
        std::stringstream ss(line);
        std::string field;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        const std::size_t expected = with_labels ? 9 : 8;
        if (fields.size() != expected)
            throw std::runtime_error(ctx + ": expected " + std::to_string(expected) +
                                     " fields, got " + std::to_string(fields.size()));
        FeatureRow r;
        r.image_id = fields[0];
        r.det_index = detail::parse_int(fields[1], ctx);
        r.class_id = detail::parse_int(fields[2], ctx);
        for (int i = 0; i < 5; ++i)
            r.features[static_cast<std::size_t>(i)] = detail::parse_double(fields[3 + i], ctx);
        if (with_labels) {
            const int label = detail::parse_int(fields[8], ctx);
            if (label != 0 && label != 1)
                throw std::runtime_error(ctx + ": label must be 0 or 1");
            r.label = label;
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<FeatureRow> load_feature_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    return parse_feature_csv(in, path);
}

}  // namespace firepost
