#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "firepost/geometry.hpp"
#include "firepost/image.hpp"

namespace firepost {

struct GroundTruthBox {
    BoundingBox box;
    int class_id = 0;
    friend bool operator==(const GroundTruthBox& a, const GroundTruthBox& b) = default;
};

struct ImageRecord {
    std::string image_id;
    std::string path;
    int width = 0;
    int height = 0;
    std::vector<GroundTruthBox> ground_truth;
};

/// Detections from one inference pass over one image. Pass 0 is the primary
/// pass whose detections get rescored.
struct PassDetections {
    std::string image_id;
    int pass_index = 0;
    std::vector<Detection> detections;
    friend bool operator==(const PassDetections& a, const PassDetections& b) = default;
};

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

inline double parse_double(const std::string& tok, const std::string& context) {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
        throw std::runtime_error(context + ": not a number: '" + tok + "'");
    return v;
}

inline int parse_int(const std::string& tok, const std::string& context) {
    int v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
        throw std::runtime_error(context + ": not an integer: '" + tok + "'");
    return v;
}

inline std::string strip_cr(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

}  // namespace detail

/// Parse YOLO-format labels: one "class cx cy w h" per line, center form,
/// normalized to [0,1]. Boxes come back in pixel corner form, clipped to the
/// image. Tolerates blank lines and CRLF endings.
inline std::vector<GroundTruthBox> load_yolo_ground_truth(const std::string& label_file,
                                                          int image_width,
                                                          int image_height,
                                                          int num_classes = 2) {
    std::ifstream in(label_file);
    if (!in) throw std::runtime_error(label_file + ": cannot open");
    std::vector<GroundTruthBox> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        const auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        const std::string ctx = label_file + ":" + std::to_string(line_no);
        if (toks.size() != 5)
            throw std::runtime_error(ctx + ": expected 5 fields, got " +
                                     std::to_string(toks.size()));
        const int cls = detail::parse_int(toks[0], ctx);
        if (cls < 0 || cls >= num_classes)
            throw std::runtime_error(ctx + ": class " + std::to_string(cls) +
                                     " outside [0," + std::to_string(num_classes) + ")");
        const double cx = detail::parse_double(toks[1], ctx);
        const double cy = detail::parse_double(toks[2], ctx);
        const double w = detail::parse_double(toks[3], ctx);
        const double h = detail::parse_double(toks[4], ctx);
        for (double v : {cx, cy, w, h}) {
            if (!(v >= 0.0 && v <= 1.0))
                throw std::runtime_error(ctx + ": normalized value out of [0,1]");
        }
        BoundingBox box{(cx - w / 2.0) * image_width, (cy - h / 2.0) * image_height,
                        (cx + w / 2.0) * image_width, (cy + h / 2.0) * image_height};
        out.push_back(GroundTruthBox{clip_to_image(box, image_width, image_height), cls});
    }
    return out;
}

inline void save_yolo_ground_truth(const std::vector<GroundTruthBox>& boxes,
                                   int image_width, int image_height,
                                   const std::string& label_file) {
    std::ofstream out(label_file);
    if (!out) throw std::runtime_error(label_file + ": cannot open for writing");
    char buf[32];
    auto fmt = [&buf](double v) {
        const auto res = std::to_chars(buf, buf + sizeof(buf), v);
        return std::string(buf, res.ptr);
    };
    for (const auto& gt : boxes) {
        const double cx = (gt.box.x_min + gt.box.x_max) / 2.0 / image_width;
        const double cy = (gt.box.y_min + gt.box.y_max) / 2.0 / image_height;
        const double w = (gt.box.x_max - gt.box.x_min) / image_width;
        const double h = (gt.box.y_max - gt.box.y_min) / image_height;
        out << gt.class_id << " " << fmt(cx) << " " << fmt(cy) << " " << fmt(w) << " "
            << fmt(h) << "\n";
    }
}

namespace detail {

inline Detection detection_from_json(const nlohmann::json& jb, const std::string& ctx,
                                     int num_classes) {
    for (const char* key : {"class", "x_min", "y_min", "x_max", "y_max", "conf"}) {
        if (!jb.contains(key))
            throw std::runtime_error(ctx + ": box missing required field '" +
                                     std::string(key) + "'");
    }
    Detection d;
    d.class_id = jb.at("class").get<int>();
    d.box = BoundingBox{jb.at("x_min").get<double>(), jb.at("y_min").get<double>(),
                        jb.at("x_max").get<double>(), jb.at("y_max").get<double>()};
    d.confidence = jb.at("conf").get<double>();
    if (d.class_id < 0 || d.class_id >= num_classes)
        throw std::runtime_error(ctx + ": class " + std::to_string(d.class_id) +
                                 " outside [0," + std::to_string(num_classes) + ")");
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0))
        throw std::runtime_error(ctx + ": conf out of [0,1]");
    if (!d.box.valid()) throw std::runtime_error(ctx + ": invalid box");
    return d;
}

}  // namespace detail

/// Parse a JSON-Lines detection dump: one object per line with image_id
/// (string), pass (int) and boxes (array of {class,x_min,y_min,x_max,y_max,
/// conf}). Lines sharing (image_id, pass) are merged; duplicate boxes are
/// kept as-is. Groups come back ordered by first appearance.
inline std::vector<PassDetections> parse_detection_passes(std::istream& in,
                                                          const std::string& name,
                                                          int num_classes = 2) {
    std::vector<PassDetections> groups;
    std::map<std::pair<std::string, int>, std::size_t> index;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const std::string ctx = name + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw std::runtime_error(ctx + ": " + e.what());
        }
        for (const char* key : {"image_id", "pass", "boxes"}) {
            if (!j.contains(key))
                throw std::runtime_error(ctx + ": missing required field '" +
                                         std::string(key) + "'");
        }
        const std::string image_id = j.at("image_id").get<std::string>();
        const int pass = j.at("pass").get<int>();
        if (pass < 0) throw std::runtime_error(ctx + ": negative pass index");

        const auto key = std::make_pair(image_id, pass);
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, groups.size());
            groups.push_back(PassDetections{image_id, pass, {}});
            it = index.find(key);
        }
        for (const auto& jb : j.at("boxes"))
            groups[it->second].detections.push_back(
                detail::detection_from_json(jb, ctx, num_classes));
    }
    return groups;
}

inline std::vector<PassDetections> load_detection_passes(const std::string& dump_file,
                                                         int num_classes = 2) {
    std::ifstream in(dump_file);
    if (!in) throw std::runtime_error(dump_file + ": cannot open");
    return parse_detection_passes(in, dump_file, num_classes);
}

inline nlohmann::json detection_to_json(const Detection& d) {
    return nlohmann::json{{"class", d.class_id}, {"x_min", d.box.x_min},
                          {"y_min", d.box.y_min}, {"x_max", d.box.x_max},
                          {"y_max", d.box.y_max}, {"conf", d.confidence}};
}

inline void write_detection_passes(const std::vector<PassDetections>& groups,
                                   std::ostream& out) {
    for (const auto& g : groups) {
        nlohmann::json j;
        j["image_id"] = g.image_id;
        j["pass"] = g.pass_index;
        auto boxes = nlohmann::json::array();
        for (const auto& d : g.detections) boxes.push_back(detection_to_json(d));
        j["boxes"] = boxes;
        out << j.dump() << "\n";
    }
}

inline void save_detection_passes(const std::vector<PassDetections>& groups,
                                  const std::string& dump_file) {
    std::ofstream out(dump_file);
    if (!out) throw std::runtime_error(dump_file + ": cannot open for writing");
    write_detection_passes(groups, out);
}

/// One dataset entry: image plus optional label and detection files.
struct ManifestEntry {
    std::string image_id;
    std::string image_path;
    std::string label_path;       // empty when absent
    std::string detections_path;  // empty when absent
};

struct Manifest {
    std::vector<std::string> class_names{"smoke", "fire"};
    std::vector<ManifestEntry> entries;
};

/// Manifest schema: {"format_version":1, "classes":[...],
/// "entries":[{"image_id","image","labels","detections"}...]} with paths
/// relative to the manifest file.
inline Manifest load_manifest(const std::string& manifest_file) {
    std::ifstream in(manifest_file);
    if (!in) throw std::runtime_error(manifest_file + ": cannot open");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(manifest_file + ": " + e.what());
    }
    Manifest m;
    if (!j.contains("format_version") || !j.at("format_version").is_number_integer() ||
        j.at("format_version").get<int>() != 1)
        throw std::runtime_error(manifest_file + ": missing or unsupported format_version");
    if (j.contains("classes")) m.class_names = j.at("classes").get<std::vector<std::string>>();
    if (m.class_names.empty())
        throw std::runtime_error(manifest_file + ": empty class list");
    if (!j.contains("entries"))
        throw std::runtime_error(manifest_file + ": missing 'entries'");
    const auto base = std::filesystem::path(manifest_file).parent_path();
    auto resolve = [&base](const std::string& p) {
        return p.empty() ? p : (base / p).string();
    };
    for (const auto& je : j.at("entries")) {
        ManifestEntry e;
        if (!je.contains("image_id") || !je.contains("image"))
            throw std::runtime_error(manifest_file + ": entry missing image_id/image");
        e.image_id = je.at("image_id").get<std::string>();
        e.image_path = resolve(je.at("image").get<std::string>());
        if (je.contains("labels") && !je.at("labels").is_null())
            e.label_path = resolve(je.at("labels").get<std::string>());
        if (je.contains("detections") && !je.at("detections").is_null())
            e.detections_path = resolve(je.at("detections").get<std::string>());
        m.entries.push_back(std::move(e));
    }
    return m;
}

inline void save_manifest(const Manifest& m, const std::string& manifest_file) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["classes"] = m.class_names;
    auto entries = nlohmann::json::array();
    for (const auto& e : m.entries) {
        nlohmann::json je;
        je["image_id"] = e.image_id;
        je["image"] = e.image_path;
        if (!e.label_path.empty()) je["labels"] = e.label_path;
        if (!e.detections_path.empty()) je["detections"] = e.detections_path;
        entries.push_back(je);
    }
    j["entries"] = entries;
    std::ofstream out(manifest_file);
    if (!out) throw std::runtime_error(manifest_file + ": cannot open for writing");
    out << j.dump(2) << "\n";
}

/// Fully loaded dataset entry: record + image + detection passes, boxes
/// clipped into the image.
struct DatasetImage {
    ImageRecord record;
    ImageBuffer image;
    std::vector<PassDetections> passes;  // sorted by pass_index, 0 first
};

struct Dataset {
    std::vector<std::string> class_names;
    std::vector<DatasetImage> images;
};

inline Dataset load_dataset(const std::string& manifest_file) {
    const Manifest m = load_manifest(manifest_file);
    Dataset ds;
    ds.class_names = m.class_names;
    const int num_classes = static_cast<int>(m.class_names.size());
    for (const auto& e : m.entries) {
        DatasetImage di;
        di.image = load_image(e.image_path);
        di.record.image_id = e.image_id;
        di.record.path = e.image_path;
        di.record.width = di.image.width();
        di.record.height = di.image.height();
        if (!e.label_path.empty())
            di.record.ground_truth = load_yolo_ground_truth(
                e.label_path, di.record.width, di.record.height, num_classes);
        if (!e.detections_path.empty()) {
            di.passes = load_detection_passes(e.detections_path, num_classes);
            for (auto& p : di.passes)
                for (auto& d : p.detections)
                    d.box = clip_to_image(d.box, di.record.width, di.record.height);
            std::sort(di.passes.begin(), di.passes.end(),
                      [](const PassDetections& a, const PassDetections& b) {
                          return a.pass_index < b.pass_index;
                      });
        }
        ds.images.push_back(std::move(di));
    }
    return ds;
}

}  // namespace firepost
