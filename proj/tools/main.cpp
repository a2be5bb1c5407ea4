// Command-line front end: synthesize benchmark corpora, extract features,
// train and apply the confidence refinement network, run the classical
// baselines and score everything.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include <firepost/firepost.hpp>

namespace {

struct CommonFlags {
    std::string config_path;
    std::uint64_t seed = 0;
};

void apply_common(const CLI::App& app, const CommonFlags& flags, firepost::RunConfig& cfg) {
    if (app.count("--config") > 0) cfg = firepost::load_config(flags.config_path);
    if (app.count("--seed") > 0) cfg.seed = flags.seed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"post-detection analysis toolkit for fire and smoke detectors"};
    app.require_subcommand(1);
    app.fallthrough();

    CommonFlags common;
    app.add_option("--config", common.config_path, "JSON configuration file");
    app.add_option("--seed", common.seed, "override the master random seed");

    auto* synth = app.add_subcommand("synth", "generate a synthetic benchmark corpus");
    std::string synth_out;
    int synth_images = -1, synth_width = -1, synth_height = -1;
    int synth_fire = -1, synth_smoke = -1, synth_distractors = -1, synth_passes = -1;
    double synth_sigma_loc = -1.0, synth_sigma_conf = -1.0, synth_p_miss = -1.0;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--images", synth_images, "number of images");
    synth->add_option("--width", synth_width, "image width in px");
    synth->add_option("--height", synth_height, "image height in px");
    synth->add_option("--fire", synth_fire, "flame blobs per image");
    synth->add_option("--smoke", synth_smoke, "smoke blobs per image");
    synth->add_option("--distractors", synth_distractors, "distractor objects per image");
    synth->add_option("--passes", synth_passes, "simulated detector passes per image");
    synth->add_option("--sigma-loc", synth_sigma_loc, "box jitter sigma, px");
    synth->add_option("--sigma-conf", synth_sigma_conf, "confidence jitter sigma");
    synth->add_option("--p-miss", synth_p_miss, "per-pass miss probability");

    auto* extract = app.add_subcommand("extract", "compute per-detection feature vectors");
    std::string extract_manifest, extract_out;
    bool extract_labels = false;
    extract->add_option("--manifest", extract_manifest, "dataset manifest")->required();
    extract->add_option("--out", extract_out, "output feature CSV")->required();
    extract->add_flag("--labels", extract_labels, "attach 0/1 training labels from ground truth");

    auto* train = app.add_subcommand("train", "train the confidence refinement network");
    std::string train_features, train_model, train_log;
    double train_lr = -1.0, train_tau = -1.0;
    int train_batch = -1, train_epochs = -1, train_patience = -1;
    train->add_option("--features", train_features, "labeled feature CSV")->required();
    train->add_option("--model", train_model, "output model JSON")->required();
    train->add_option("--log", train_log, "optional training log CSV");
    train->add_option("--lr", train_lr, "learning rate");
    train->add_option("--batch", train_batch, "mini-batch size");
    train->add_option("--epochs", train_epochs, "maximum epochs");
    train->add_option("--patience", train_patience, "early stopping patience");
    train->add_option("--tau", train_tau, "keep threshold stored with the model");

    auto* rescore = app.add_subcommand("rescore", "refine confidences with a trained model");
    std::string rescore_manifest, rescore_model, rescore_out, rescore_mode;
    rescore->add_option("--manifest", rescore_manifest, "dataset manifest")->required();
    rescore->add_option("--model", rescore_model, "model JSON")->required();
    rescore->add_option("--out", rescore_out, "output detection dump (JSONL)")->required();
    rescore->add_option("--mode", rescore_mode, "discard or rank-all")
        ->check(CLI::IsMember({"discard", "rank-all"}));

    auto* baseline = app.add_subcommand("baseline", "apply a classical filtering baseline");
    std::string baseline_manifest, baseline_method, baseline_out;
    baseline->add_option("--manifest", baseline_manifest, "dataset manifest")->required();
    baseline->add_option("--method", baseline_method, "one of: nms, soft-nms, ebf, cbf, hbcf, scf")
        ->required()
        ->check(CLI::IsMember(firepost::baseline_method_names()));
    baseline->add_option("--out", baseline_out, "output detection dump (JSONL)")->required();

    auto* eval = app.add_subcommand("eval", "score detections against ground truth");
    std::string eval_manifest, eval_detections, eval_method = "primary", eval_mode, eval_csv;
    std::string eval_model;
    double eval_iou = -1.0;
    int eval_time_reps = 0;
    eval->add_option("--manifest", eval_manifest, "dataset manifest")->required();
    eval->add_option("--detections", eval_detections,
                     "detection dump to score (default: the manifest's own primary pass)");
    eval->add_option("--method", eval_method, "label for the report row");
    eval->add_option("--iou", eval_iou, "matching IoU threshold");
    eval->add_option("--mode", eval_mode, "discard or rank-all (report bookkeeping)")
        ->check(CLI::IsMember({"discard", "rank-all"}));
    eval->add_option("--csv", eval_csv, "append-style CSV report path");
    eval->add_option("--time", eval_time_reps, "also profile the pipeline for N repetitions");
    eval->add_option("--model", eval_model, "model JSON for the profiled refine stage");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e);
        return 0;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        firepost::RunConfig cfg;
        apply_common(app, common, cfg);

        if (synth->parsed()) {
            if (synth->count("--images")) cfg.synth.images = synth_images;
            if (synth->count("--width")) cfg.synth.width = synth_width;
            if (synth->count("--height")) cfg.synth.height = synth_height;
            if (synth->count("--fire")) cfg.synth.fire = synth_fire;
            if (synth->count("--smoke")) cfg.synth.smoke = synth_smoke;
            if (synth->count("--distractors")) cfg.synth.distractors = synth_distractors;
            if (synth->count("--passes")) cfg.passes.count = synth_passes;
            if (synth->count("--sigma-loc")) cfg.synth.sigma_loc = synth_sigma_loc;
            if (synth->count("--sigma-conf")) cfg.synth.sigma_conf = synth_sigma_conf;
            if (synth->count("--p-miss")) cfg.synth.p_miss = synth_p_miss;
            firepost::validate_config(cfg);
            const firepost::Manifest m = firepost::run_synth(cfg, synth_out);
            std::cout << "wrote " << m.entries.size() << " images under " << synth_out
                      << " (manifest.json alongside)\n";
        } else if (extract->parsed()) {
            firepost::validate_config(cfg);
            const std::size_t n =
                firepost::run_extract(extract_manifest, extract_out, cfg, extract_labels);
            std::cout << "wrote " << n << " feature rows to " << extract_out << "\n";
        } else if (train->parsed()) {
            if (train->count("--lr")) cfg.crn.learning_rate = train_lr;
            if (train->count("--batch")) cfg.crn.batch_size = train_batch;
            if (train->count("--epochs")) cfg.crn.max_epochs = train_epochs;
            if (train->count("--patience")) cfg.crn.patience = train_patience;
            if (train->count("--tau")) cfg.crn.tau = train_tau;
            firepost::validate_config(cfg);
            const firepost::TrainResult r =
                firepost::run_train(train_features, train_model, train_log, cfg);
            for (const std::string& w : r.warnings) std::cerr << "warning: " << w << "\n";
            std::cout << "trained " << r.log.size() << " epochs; best epoch " << r.best_epoch
                      << " with validation loss " << r.best_val_bce << "\n";
            std::cout << "model written to " << train_model << "\n";
        } else if (rescore->parsed()) {
            if (rescore->count("--mode")) cfg.eval.mode = rescore_mode;
            firepost::validate_config(cfg);
            const firepost::RescoreSummary s =
                firepost::run_rescore(rescore_manifest, rescore_model, rescore_out, cfg);
            std::cout << "kept " << s.kept << " of " << s.total << " detections ("
                      << cfg.eval.mode << " mode); wrote " << rescore_out << "\n";
        } else if (baseline->parsed()) {
            firepost::validate_config(cfg);
            const std::size_t kept =
                firepost::run_baseline(baseline_manifest, baseline_method, baseline_out, cfg);
            std::cout << "kept " << kept << " detections; wrote " << baseline_out << "\n";
        } else if (eval->parsed()) {
            if (eval->count("--iou")) cfg.eval.iou = eval_iou;
            if (eval->count("--mode")) cfg.eval.mode = eval_mode;
            firepost::validate_config(cfg);
            const firepost::EvalReport report =
                firepost::run_eval(eval_manifest, eval_detections, cfg, eval_method);
            std::cout << firepost::format_report_text(report);
            if (!eval_csv.empty()) {
                std::ofstream out(eval_csv);
                if (!out) throw std::runtime_error(eval_csv + ": cannot open for writing");
                firepost::write_report_csv({report}, out);
                std::cout << "report row written to " << eval_csv << "\n";
            }
            if (eval_time_reps > 0) {
                const firepost::Dataset ds = firepost::load_dataset(eval_manifest);
                firepost::CrnModel model;
                const firepost::CrnModel* model_ptr = nullptr;
                if (!eval_model.empty()) {
                    model = firepost::load_model(eval_model);
                    model_ptr = &model;
                }
                const firepost::TimingReport timing =
                    firepost::time_dataset(ds, model_ptr, cfg, eval_time_reps);
                firepost::write_timing_csv(timing, std::cout);
            }
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
