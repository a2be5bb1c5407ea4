#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "firepost/geometry.hpp"
#include "firepost/imfeat.hpp"
#include "firepost/ingest.hpp"
#include "firepost/rng.hpp"

namespace firepost {

inline constexpr int kCrnInputDim = 5;
inline constexpr int kCrnHiddenDim = 32;

/// One fully connected layer, row-major weights.
struct DenseLayer {
    int rows = 0, cols = 0;
    std::vector<double> w;  // rows x cols
    std::vector<double> b;  // rows

    static DenseLayer zeros(int rows, int cols) {
        DenseLayer l;
        l.rows = rows;
        l.cols = cols;
        l.w.assign(static_cast<std::size_t>(rows) * cols, 0.0);
        l.b.assign(static_cast<std::size_t>(rows), 0.0);
        return l;
    }

    double& at(int r, int c) { return w[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return w[static_cast<std::size_t>(r) * cols + c]; }
};

/// Weights of the 5 -> 32 -> 32 -> 1 refinement network.
struct CrnParameters {
    std::array<DenseLayer, 3> layers{
        DenseLayer::zeros(kCrnHiddenDim, kCrnInputDim),
        DenseLayer::zeros(kCrnHiddenDim, kCrnHiddenDim),
        DenseLayer::zeros(1, kCrnHiddenDim),
    };

    bool shapes_valid() const {
        const auto& l = layers;
        auto ok = [](const DenseLayer& d, int r, int c) {
            return d.rows == r && d.cols == c &&
                   d.w.size() == static_cast<std::size_t>(r) * c &&
                   d.b.size() == static_cast<std::size_t>(r);
        };
        return ok(l[0], kCrnHiddenDim, kCrnInputDim) &&
               ok(l[1], kCrnHiddenDim, kCrnHiddenDim) && ok(l[2], 1, kCrnHiddenDim);
    }

    bool all_finite() const {
        for (const auto& l : layers) {
            for (double v : l.w)
                if (!std::isfinite(v)) return false;
            for (double v : l.b)
                if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const CrnParameters& a, const CrnParameters& b) {
        for (int i = 0; i < 3; ++i)
            if (a.layers[i].w != b.layers[i].w || a.layers[i].b != b.layers[i].b)
                return false;
        return true;
    }
};

inline double sigmoid(double z) {
    double p;
    if (z >= 0.0) {
        p = 1.0 / (1.0 + std::exp(-z));
    } else {
        const double e = std::exp(z);
        p = e / (1.0 + e);
    }
    // Keep the output strictly inside (0,1) even when the logit saturates.
    if (p <= 0.0) p = std::numeric_limits<double>::min();
    if (p >= 1.0) p = std::nextafter(1.0, 0.0);
    return p;
}

namespace detail {

struct ForwardTrace {
    std::array<double, kCrnHiddenDim> h1{};
    std::array<double, kCrnHiddenDim> h2{};
    double z3 = 0.0;
    double output = 0.0;
};

inline ForwardTrace forward_trace(const CrnParameters& params, const FeatureVector& f) {
    ForwardTrace t;
    const auto& l1 = params.layers[0];
    const auto& l2 = params.layers[1];
    const auto& l3 = params.layers[2];
    for (int i = 0; i < kCrnHiddenDim; ++i) {
        double z = l1.b[static_cast<std::size_t>(i)];
        for (int j = 0; j < kCrnInputDim; ++j) z += l1.at(i, j) * f[static_cast<std::size_t>(j)];
        t.h1[static_cast<std::size_t>(i)] = z > 0.0 ? z : 0.0;
    }
    for (int i = 0; i < kCrnHiddenDim; ++i) {
        double z = l2.b[static_cast<std::size_t>(i)];
        for (int j = 0; j < kCrnHiddenDim; ++j)
            z += l2.at(i, j) * t.h1[static_cast<std::size_t>(j)];
        t.h2[static_cast<std::size_t>(i)] = z > 0.0 ? z : 0.0;
    }
    double z3 = l3.b[0];
    for (int j = 0; j < kCrnHiddenDim; ++j)
        z3 += l3.at(0, j) * t.h2[static_cast<std::size_t>(j)];
    if (!std::isfinite(z3))
        throw std::runtime_error("crn forward: non-finite activation (corrupt parameters?)");
    t.z3 = z3;
    t.output = sigmoid(z3);
    return t;
}

}  // namespace detail

/// Refined confidence: sigmoid(W3 ReLU(W2 ReLU(W1 f + b1) + b2) + b3).
inline double forward(const CrnParameters& params, const FeatureVector& f) {
    if (!params.shapes_valid()) throw std::invalid_argument("crn forward: bad shapes");
    return detail::forward_trace(params, f).output;
}

/// Binary cross-entropy with the prediction clamped to [1e-7, 1 - 1e-7].
inline double bce_loss(double prediction, int label) {
    if (label != 0 && label != 1) throw std::invalid_argument("bce_loss: label must be 0 or 1");
    const double p = std::clamp(prediction, 1e-7, 1.0 - 1e-7);
    return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

using CrnGradients = CrnParameters;

/// Exact gradients of bce_loss(forward(f)) w.r.t. every parameter. The ReLU
/// subgradient at 0 is taken as 0.
inline CrnGradients backward(const CrnParameters& params, const FeatureVector& f, int label) {
    if (label != 0 && label != 1) throw std::invalid_argument("backward: label must be 0 or 1");
    const detail::ForwardTrace t = detail::forward_trace(params, f);
    CrnGradients g;  // zero-initialized with correct shapes

    const auto& l2 = params.layers[1];
    const auto& l3 = params.layers[2];

    const double dz3 = t.output - static_cast<double>(label);
    g.layers[2].b[0] = dz3;
    for (int j = 0; j < kCrnHiddenDim; ++j)
        g.layers[2].at(0, j) = dz3 * t.h2[static_cast<std::size_t>(j)];

    std::array<double, kCrnHiddenDim> dz2{};
    for (int i = 0; i < kCrnHiddenDim; ++i) {
        if (t.h2[static_cast<std::size_t>(i)] > 0.0)
            dz2[static_cast<std::size_t>(i)] = dz3 * l3.at(0, i);
    }
    for (int i = 0; i < kCrnHiddenDim; ++i) {
        g.layers[1].b[static_cast<std::size_t>(i)] = dz2[static_cast<std::size_t>(i)];
        for (int j = 0; j < kCrnHiddenDim; ++j)
            g.layers[1].at(i, j) =
                dz2[static_cast<std::size_t>(i)] * t.h1[static_cast<std::size_t>(j)];
    }

    std::array<double, kCrnHiddenDim> dz1{};
    for (int j = 0; j < kCrnHiddenDim; ++j) {
        if (t.h1[static_cast<std::size_t>(j)] <= 0.0) continue;
        double acc = 0.0;
        for (int i = 0; i < kCrnHiddenDim; ++i)
            acc += dz2[static_cast<std::size_t>(i)] * l2.at(i, j);
        dz1[static_cast<std::size_t>(j)] = acc;
    }
    for (int i = 0; i < kCrnHiddenDim; ++i) {
        g.layers[0].b[static_cast<std::size_t>(i)] = dz1[static_cast<std::size_t>(i)];
        for (int j = 0; j < kCrnInputDim; ++j)
            g.layers[0].at(i, j) =
                dz1[static_cast<std::size_t>(i)] * f[static_cast<std::size_t>(j)];
    }
    return g;
}

/// Label detections against same-class ground truth: descending-confidence
/// greedy, each ground-truth box consumed once, IoU >= threshold gives 1.
/// Labels come back aligned with the input order.
inline std::vector<int> label_detections(const std::vector<Detection>& detections,
                                         const std::vector<GroundTruthBox>& ground_truth,
                                         double iou_threshold = 0.5) {
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detection_before(detections[a], detections[b]);
    });
    std::vector<int> labels(detections.size(), 0);
    std::vector<bool> consumed(ground_truth.size(), false);
    for (const std::size_t i : order) {
        const Detection& d = detections[i];
        double best_iou = 0.0;
        std::size_t best = ground_truth.size();
        for (std::size_t k = 0; k < ground_truth.size(); ++k) {
            if (consumed[k] || ground_truth[k].class_id != d.class_id) continue;
            const double v = iou(d.box, ground_truth[k].box);
            if (v > best_iou) {
                best_iou = v;
                best = k;
            }
        }
        if (best < ground_truth.size() && best_iou >= iou_threshold) {
            consumed[best] = true;
            labels[i] = 1;
        }
    }
    return labels;
}

struct LabeledExample {
    FeatureVector features;
    int label = 0;
};

struct TrainConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int batch_size = 64;
    int max_epochs = 200;
    int early_stop_patience = 20;
    std::uint64_t seed = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_bce = 0.0;
    double val_bce = 0.0;
};

struct TrainResult {
    CrnParameters params;  // snapshot with the best validation loss
    std::vector<EpochStats> log;
    std::vector<std::string> warnings;
    int best_epoch = 0;
    double best_val_bce = 0.0;
};

namespace detail {

inline CrnParameters he_uniform_init(Rng& rng) {
    CrnParameters p;
    for (auto& layer : p.layers) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.cols));
        for (double& w : layer.w) w = rng.uniform(-limit, limit);
        // biases start at zero
    }
    return p;
}

inline double mean_bce(const CrnParameters& params, const std::vector<LabeledExample>& set,
                       const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    double sum = 0.0;
    for (const std::size_t i : idx) sum += bce_loss(forward(params, set[i].features), set[i].label);
    return sum / static_cast<double>(idx.size());
}

struct AdamState {
    CrnParameters m, v;  // zero-initialized moments, same shapes as the weights
    long step = 0;
};

inline void adam_update(CrnParameters& params, const CrnGradients& grads, AdamState& state,
                        const TrainConfig& cfg) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (int li = 0; li < 3; ++li) {
        auto apply = [&](std::vector<double>& theta, const std::vector<double>& g,
                         std::vector<double>& m, std::vector<double>& v) {
            for (std::size_t i = 0; i < theta.size(); ++i) {
                m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                theta[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
            }
        };
        apply(params.layers[li].w, grads.layers[li].w, state.m.layers[li].w,
              state.v.layers[li].w);
        apply(params.layers[li].b, grads.layers[li].b, state.m.layers[li].b,
              state.v.layers[li].b);
    }
}

inline void accumulate(CrnGradients& into, const CrnGradients& g) {
    for (int li = 0; li < 3; ++li) {
        for (std::size_t i = 0; i < into.layers[li].w.size(); ++i)
            into.layers[li].w[i] += g.layers[li].w[i];
        for (std::size_t i = 0; i < into.layers[li].b.size(); ++i)
            into.layers[li].b[i] += g.layers[li].b[i];
    }
}

inline void scale(CrnGradients& g, double f) {
    for (int li = 0; li < 3; ++li) {
        for (double& v : g.layers[li].w) v *= f;
        for (double& v : g.layers[li].b) v *= f;
    }
}

}  // namespace detail

/// Mini-batch Adam with He-uniform init, a seeded 90/10 train/validation
/// split and early stopping on validation BCE. Deterministic: identical
/// (config, examples) produce bit-identical parameters.
inline TrainResult train(const TrainConfig& config, const std::vector<LabeledExample>& examples) {
    if (config.learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate <= 0");
    if (config.batch_size < 1) throw std::invalid_argument("train: batch_size < 1");
    if (examples.empty()) throw std::invalid_argument("train: empty training set");

    TrainResult result;
    {
        std::size_t positives = 0;
        for (const auto& e : examples) positives += e.label == 1 ? 1u : 0u;
        if (examples.size() < 2)
            result.warnings.push_back("fewer than 2 training examples");
        if (positives == 0 || positives == examples.size())
            result.warnings.push_back("degenerate single-class training set");
    }

    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng = Rng::derive(config.seed, 1);
    split_rng.shuffle(order);
    const std::size_t n_val = examples.size() / 10;
    std::vector<std::size_t> val_idx(order.end() - static_cast<std::ptrdiff_t>(n_val),
                                     order.end());
    std::vector<std::size_t> train_idx(order.begin(),
                                       order.end() - static_cast<std::ptrdiff_t>(n_val));
    const bool has_val = !val_idx.empty();
    if (!has_val)
        result.warnings.push_back("validation split empty; early stopping uses training BCE");

    Rng init_rng = Rng::derive(config.seed, 2);
    CrnParameters params = detail::he_uniform_init(init_rng);
    detail::AdamState adam;
    Rng epoch_rng = Rng::derive(config.seed, 3);

    CrnParameters best = params;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int since_best = 0;

    for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
        epoch_rng.shuffle(train_idx);
        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(train_idx.size(), start + static_cast<std::size_t>(config.batch_size));
            CrnGradients batch;  // zeros
            for (std::size_t k = start; k < end; ++k) {
                const auto& ex = examples[train_idx[k]];
                detail::accumulate(batch, backward(params, ex.features, ex.label));
            }
            detail::scale(batch, 1.0 / static_cast<double>(end - start));
            detail::adam_update(params, batch, adam, config);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_bce = detail::mean_bce(params, examples, train_idx);
        stats.val_bce = has_val ? detail::mean_bce(params, examples, val_idx) : stats.train_bce;
        result.log.push_back(stats);

        if (stats.val_bce < best_val) {
            best_val = stats.val_bce;
            best = params;
            best_epoch = epoch;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (since_best >= config.early_stop_patience) break;
    }

    result.params = best;
    result.best_epoch = best_epoch;
    result.best_val_bce = best_val;
    return result;
}

/// Detection annotated with its refined confidence and keep decision.
struct RefinedDetection {
    Detection detection;
    double refined_confidence = 0.0;
    bool kept = false;
};

/// Apply the network and the keep-at-threshold rule (kept iff refined >= tau).
/// Input order is preserved; raw confidences stay on the detection.
inline std::vector<RefinedDetection> rescore_and_threshold(
    const CrnParameters& params, const std::vector<Detection>& detections,
    const std::vector<FeatureVector>& features, double tau = 0.5) {
    if (!(tau > 0.0 && tau < 1.0))
        throw std::invalid_argument("rescore_and_threshold: tau must be in (0,1)");
    if (detections.size() != features.size())
        throw std::invalid_argument("rescore_and_threshold: size mismatch");
    std::vector<RefinedDetection> out;
    out.reserve(detections.size());
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const double refined = forward(params, features[i]);
        out.push_back(RefinedDetection{detections[i], refined, refined >= tau});
    }
    return out;
}

inline constexpr int kModelFormatVersion = 1;

/// Model file: JSON with explicit shapes and row-major weight arrays; floats
/// round-trip exactly through the serialized decimal form.
inline void save_model(const CrnParameters& params, const std::string& path, double tau = 0.5) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["feature_order"] = {"c", "var", "s", "e", "t"};
    j["tau"] = tau;
    auto layers = nlohmann::json::array();
    for (const auto& l : params.layers) {
        nlohmann::json jl;
        jl["rows"] = l.rows;
        jl["cols"] = l.cols;
        jl["w"] = l.w;
        jl["b"] = l.b;
        layers.push_back(jl);
    }
    j["layers"] = layers;
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << j.dump(2) << "\n";
}

struct CrnModel {
    CrnParameters params;
    double tau = 0.5;
};

inline CrnModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path + ": cannot open");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
    for (const char* key : {"format_version", "feature_order", "tau", "layers"}) {
        if (!j.contains(key))
            throw std::runtime_error(path + ": missing field '" + std::string(key) + "'");
    }
    if (j.at("format_version").get<int>() != kModelFormatVersion)
        throw std::runtime_error(path + ": unsupported format_version");
    const std::vector<std::string> expected_order{"c", "var", "s", "e", "t"};
    if (j.at("feature_order").get<std::vector<std::string>>() != expected_order)
        throw std::runtime_error(path + ": unexpected feature_order");

    CrnModel model;
    model.tau = j.at("tau").get<double>();
    if (!(model.tau > 0.0 && model.tau < 1.0))
        throw std::runtime_error(path + ": tau out of (0,1)");
    const auto& jlayers = j.at("layers");
    if (!jlayers.is_array() || jlayers.size() != 3)
        throw std::runtime_error(path + ": expected 3 layers");
    for (std::size_t li = 0; li < 3; ++li) {
        const auto& jl = jlayers[li];
        auto& l = model.params.layers[li];
        const int rows = jl.at("rows").get<int>();
        const int cols = jl.at("cols").get<int>();
        if (rows != l.rows || cols != l.cols)
            throw std::runtime_error(path + ": layer " + std::to_string(li) +
                                     " shape mismatch: got " + std::to_string(rows) + "x" +
                                     std::to_string(cols) + ", expected " +
                                     std::to_string(l.rows) + "x" + std::to_string(l.cols));
        const auto& jw = jl.at("w");
        const auto& jb = jl.at("b");
        if (!jw.is_array() || jw.size() != l.w.size() || !jb.is_array() ||
            jb.size() != l.b.size())
            throw std::runtime_error(path + ": layer " + std::to_string(li) +
                                     " weight array size mismatch");
        auto read_values = [&path](const nlohmann::json& src, std::vector<double>& dst) {
            for (std::size_t i = 0; i < dst.size(); ++i) {
                const auto& v = src[i];
                if (!v.is_number())
                    throw std::runtime_error(path + ": non-numeric weight entry");
                dst[i] = v.get<double>();
                if (!std::isfinite(dst[i]))
                    throw std::runtime_error(path + ": non-finite weight entry");
            }
        };
        read_values(jw, l.w);
        read_values(jb, l.b);
    }
    return model;
}

inline void save_training_log(const TrainResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    for (const auto& w : result.warnings) out << "# warning: " << w << "\n";
    out << "epoch,train_bce,val_bce\n";
    for (const auto& s : result.log)
        out << s.epoch << "," << detail::format_double(s.train_bce) << ","
            << detail::format_double(s.val_bce) << "\n";
    out << "# best epoch " << result.best_epoch << ", val_bce "
        << detail::format_double(result.best_val_bce) << "\n";
}

}  // namespace firepost
