#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fakegaze/dataset.hpp"
#include "fakegaze/errors.hpp"
#include "fakegaze/inspect.hpp"
#include "fakegaze/model.hpp"
#include "fakegaze/train.hpp"
#include "fakegaze/weights_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using fakegaze::ConfigError;
using fakegaze::DataError;
using fakegaze::WeightsError;

// ---------------------------------------------------------------------------
// JSON config plumbing: every flag mirrors a config key (flag name without
// the leading dashes, '-' replaced by '_'). Precedence: built-in defaults <
// --preset-run expansion < config file < explicit flags. Unknown keys fail.

json load_config_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    json doc;
    try {
        doc = json::parse(std::string((std::istreambuf_iterator<char>(f)),
                                      std::istreambuf_iterator<char>()));
    } catch (const json::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + std::string(e.what()));
    }
    if (!doc.is_object()) throw ConfigError(path + ": config must be a JSON object");
    return doc;
}

class ConfigBinder {
public:
    void bind_int(CLI::Option* opt, const std::string& key, int& var) {
        add(opt, key, [&var, key](const json& v) {
            if (!v.is_number_integer()) {
                throw ConfigError("config key '" + key + "' must be an integer");
            }
            var = v.get<int>();
        });
    }
    void bind_u64(CLI::Option* opt, const std::string& key, std::uint64_t& var) {
        add(opt, key, [&var, key](const json& v) {
            if (!v.is_number_integer() || v.is_number_float() || v.get<std::int64_t>() < 0) {
                throw ConfigError("config key '" + key + "' must be a non-negative integer");
            }
            var = v.get<std::uint64_t>();
        });
    }
    void bind_double(CLI::Option* opt, const std::string& key, double& var) {
        add(opt, key, [&var, key](const json& v) {
            if (!v.is_number()) throw ConfigError("config key '" + key + "' must be a number");
            var = v.get<double>();
        });
    }
    void bind_string(CLI::Option* opt, const std::string& key, std::string& var) {
        add(opt, key, [&var, key](const json& v) {
            if (!v.is_string()) throw ConfigError("config key '" + key + "' must be a string");
            var = v.get<std::string>();
        });
    }

    // Applies config values for every key whose flag was not given explicitly.
    void apply(const json& doc) const {
        for (const auto& [key, value] : doc.items()) {
            const auto it = entries_.find(key);
            if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
            if (it->second.option->count() == 0) it->second.setter(value);
        }
    }

    bool config_sets(const json& doc, const std::string& key) const {
        return doc.contains(key) && entries_.count(key) > 0;
    }

private:
    struct Entry {
        CLI::Option* option;
        std::function<void(const json&)> setter;
    };

    void add(CLI::Option* opt, const std::string& key, std::function<void(const json&)> setter) {
        entries_[key] = Entry{opt, std::move(setter)};
    }

    std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Shared training-flag bundle for the train and kfold commands.

struct TrainFlags {
    std::string data;
    std::string out;
    int epochs = 15;
    int batch = 32;
    double lr = 8e-3;
    std::string lr_schedule = "cosine";
    std::string optimizer = "adam";
    double momentum = 0.9;
    double gamma = 2.0;
    double alpha = 1.0;
    int frames = 5;
    std::uint64_t seed = 0;
    std::string preset_run;

    CLI::Option* epochs_opt = nullptr;
    CLI::Option* batch_opt = nullptr;
    CLI::Option* frames_opt = nullptr;
};

void add_train_flags(CLI::App& cmd, TrainFlags& f, ConfigBinder& binder) {
    auto* data = cmd.add_option("--data", f.data, "Dataset root directory")->required();
    auto* out = cmd.add_option("--out", f.out, "Output directory")->required();
    f.epochs_opt = cmd.add_option("--epochs", f.epochs, "Training epochs");
    f.batch_opt = cmd.add_option("--batch", f.batch, "Videos per minibatch");
    auto* lr = cmd.add_option("--lr", f.lr, "Learning rate");
    auto* lr_schedule =
        cmd.add_option("--lr-schedule", f.lr_schedule, "Learning-rate schedule: constant or cosine");
    auto* optimizer = cmd.add_option("--optimizer", f.optimizer, "sgd_momentum or adam");
    auto* momentum = cmd.add_option("--momentum", f.momentum, "Momentum (sgd_momentum)");
    auto* gamma = cmd.add_option("--gamma", f.gamma, "Focal loss focusing parameter");
    auto* alpha = cmd.add_option("--alpha", f.alpha, "Focal loss class weight (1 = none)");
    f.frames_opt = cmd.add_option("--frames", f.frames, "Frames sampled per video");
    auto* seed = cmd.add_option("--seed", f.seed, "Random seed");
    auto* preset_run =
        cmd.add_option("--preset-run", f.preset_run, "Named run: fig2 or fig5");

    binder.bind_string(data, "data", f.data);
    binder.bind_string(out, "out", f.out);
    binder.bind_int(f.epochs_opt, "epochs", f.epochs);
    binder.bind_int(f.batch_opt, "batch", f.batch);
    binder.bind_double(lr, "lr", f.lr);
    binder.bind_string(lr_schedule, "lr_schedule", f.lr_schedule);
    binder.bind_string(optimizer, "optimizer", f.optimizer);
    binder.bind_double(momentum, "momentum", f.momentum);
    binder.bind_double(gamma, "gamma", f.gamma);
    binder.bind_double(alpha, "alpha", f.alpha);
    binder.bind_int(f.frames_opt, "frames", f.frames);
    binder.bind_u64(seed, "seed", f.seed);
    binder.bind_string(preset_run, "preset_run", f.preset_run);
}

fakegaze::TrainConfig make_train_config(const TrainFlags& f, const json& config) {
    fakegaze::TrainConfig cfg;
    // Preset expansion first; explicit config/flag values below overwrite it.
    if (!f.preset_run.empty()) cfg = fakegaze::preset_run(f.preset_run, cfg);
    const bool epochs_set = f.epochs_opt->count() > 0 || config.contains("epochs");
    const bool batch_set = f.batch_opt->count() > 0 || config.contains("batch");
    const bool frames_set = f.frames_opt->count() > 0 || config.contains("frames");
    if (f.preset_run.empty() || epochs_set) cfg.epochs = f.epochs;
    if (f.preset_run.empty() || batch_set) cfg.batch_size = f.batch;
    if (f.preset_run.empty() || frames_set) cfg.n_frames = f.frames;
    cfg.learning_rate = f.lr;
    cfg.lr_schedule = fakegaze::parse_lr_schedule(f.lr_schedule);
    cfg.optimizer = fakegaze::parse_optimizer(f.optimizer);
    cfg.momentum = f.momentum;
    cfg.focal.gamma = f.gamma;
    cfg.focal.alpha = f.alpha;
    cfg.seed = f.seed;
    cfg.validate();
    return cfg;
}

void ensure_directory(const std::string& path) {
    std::error_code ec;
    fs::create_directories(path, ec);
    if (ec || !fs::is_directory(path)) {
        throw DataError("cannot create output directory '" + path + "': " + ec.message());
    }
}

fakegaze::ModelSpec spec_for_fingerprint(std::uint64_t fingerprint, const std::string& origin) {
    using fakegaze::Family;
    using fakegaze::Preset;
    for (Family f : {Family::resnet, Family::xception}) {
        for (Preset p : {Preset::mini, Preset::full}) {
            const fakegaze::ModelSpec spec = fakegaze::make_spec(f, p);
            if (spec.fingerprint() == fingerprint) return spec;
        }
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint));
    throw WeightsError(origin + ": fingerprint " + buf +
                       " matches no known architecture (resnet/xception x mini/full)");
}

// Loads one video directory (frames + optional sidecar) cropped for `spec`.
fakegaze::VideoSample load_single_video(const std::string& video_dir,
                                        const fakegaze::ModelSpec& spec) {
    const fs::path dir(video_dir);
    if (!fs::is_directory(dir)) {
        throw DataError("video directory '" + video_dir + "' does not exist");
    }
    // Wrap the directory as a one-entry dataset rooted at its parent.
    fakegaze::DatasetManifest manifest;
    manifest.root = dir.parent_path().string();
    if (manifest.root.empty()) manifest.root = ".";
    fakegaze::ManifestEntry entry;
    entry.video_id = dir.filename().string();
    entry.label = 0;  // unused for prediction
    entry.has_face_sidecar = fs::is_regular_file(dir / "faces.json");
    int count = 0;
    while (true) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "frame_%05d.ppm", count);
        if (!fs::is_regular_file(dir / buf)) break;
        ++count;
    }
    if (count == 0) {
        throw DataError("video directory '" + video_dir +
                        "' has no frames (expected frame_00000.ppm ...)");
    }
    entry.frame_count = count;
    manifest.entries.push_back(entry);
    return fakegaze::load_video(manifest, 0, spec.input_h, spec.input_w);
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f << text;
    f.flush();
    if (!f) throw DataError("failed writing '" + path + "'");
}

// ---------------------------------------------------------------------------
// Commands

int cmd_gendata(const std::string& out, int videos, int frames, int size, std::uint64_t seed,
                double blend_fraction) {
    fakegaze::SyntheticConfig cfg;
    cfg.n_videos = videos;
    cfg.frames_per_video = frames;
    cfg.height = cfg.width = size;
    cfg.seed = seed;
    cfg.blend_rect_fraction = blend_fraction;
    cfg.validate();
    const fakegaze::GenerateResult result = fakegaze::generate_synthetic(cfg, out);
    int real = 0, fake = 0;
    for (const auto& e : result.manifest.entries) (e.label == 0 ? real : fake)++;
    std::printf("generated %zu videos (%d real, %d fake), %d frames each, %dx%d, at %s\n",
                result.manifest.entries.size(), real, fake, cfg.frames_per_video, cfg.width,
                cfg.height, out.c_str());
    if (result.files_written == 0) {
        std::printf("unchanged: all %d files already up to date\n", result.files_unchanged);
    } else {
        std::printf("%d files written, %d unchanged\n", result.files_written,
                    result.files_unchanged);
    }
    return 0;
}

int cmd_train(const TrainFlags& flags, const json& config, const std::string& family_name,
              const std::string& preset_name, double val_fraction) {
    const fakegaze::TrainConfig cfg = make_train_config(flags, config);
    if (!(val_fraction > 0.0) || val_fraction > 0.5) {
        throw ConfigError("val-fraction must lie in (0, 0.5]");
    }
    const fakegaze::ModelSpec spec = fakegaze::make_spec(fakegaze::parse_family(family_name),
                                                         fakegaze::parse_preset(preset_name));
    ensure_directory(flags.out);

    const fakegaze::DatasetManifest manifest = fakegaze::load_dataset(flags.data);
    const std::vector<fakegaze::VideoSample> videos =
        fakegaze::load_all_videos(manifest, spec.input_h, spec.input_w);

    std::vector<std::pair<std::string, int>> labels;
    for (const auto& v : videos) labels.emplace_back(v.video_id, v.label);
    const int k = std::max(2, static_cast<int>(std::llround(1.0 / val_fraction)));
    const fakegaze::FoldAssignment fa = fakegaze::kfold_split(labels, k, cfg.seed);
    std::vector<fakegaze::VideoSample> train_set, val_set;
    for (const auto& v : videos) {
        (fa.fold_of.at(v.video_id) == 0 ? val_set : train_set).push_back(v);
    }
    std::printf("training %s/%s on %zu videos (%zu train / %zu val), %d epochs\n",
                family_name.c_str(), preset_name.c_str(), videos.size(), train_set.size(),
                val_set.size(), cfg.epochs);

    fakegaze::Model model(spec, cfg.seed);
    fakegaze::TrainHooks hooks;
    hooks.on_epoch = [&](const fakegaze::MetricsRecord& tr, const fakegaze::MetricsRecord& va) {
        std::printf("epoch %3d/%d  train loss %.6f  val log_loss %.6f  val acc %.4f\n", tr.epoch,
                    cfg.epochs, tr.loss, va.log_loss, va.accuracy);
        std::fflush(stdout);
    };
    const fakegaze::TrainResult result = train(model, train_set, val_set, cfg, hooks);

    const fs::path out(flags.out);
    fakegaze::save_weights((out / "weights.fgwt").string(), result.best_weights);
    fakegaze::export_curves(result.log, (out / "curves.csv").string());
    write_text_file((out / "report.txt").string(), fakegaze::format_report(result.log));
    const fakegaze::OverfitReport rep = fakegaze::overfit_report(result.log);
    std::printf("best epoch %d (val log_loss %.6f); overfit: %s\n", rep.best_epoch,
                rep.best_val_log_loss, rep.overfit ? "yes" : "no");
    std::printf("wrote %s, %s, %s\n", (out / "weights.fgwt").c_str(), (out / "curves.csv").c_str(),
                (out / "report.txt").c_str());
    return 0;
}

int cmd_kfold(const TrainFlags& flags, const json& config, const std::string& preset,
              int k, int only_fold, int jobs) {
    fakegaze::TrainConfig cfg = make_train_config(flags, config);
    cfg.k_folds = k;
    cfg.validate();

    // --preset names "<model-preset>-<family|both>", e.g. mini-both.
    const std::size_t dash = preset.rfind('-');
    if (dash == std::string::npos) {
        throw ConfigError("kfold preset must look like mini-both or full-resnet, got '" + preset +
                          "'");
    }
    const fakegaze::Preset model_preset = fakegaze::parse_preset(preset.substr(0, dash));
    const std::string family_part = preset.substr(dash + 1);
    std::vector<fakegaze::ModelSpec> specs;
    if (family_part == "both") {
        specs.push_back(fakegaze::make_spec(fakegaze::Family::resnet, model_preset));
        specs.push_back(fakegaze::make_spec(fakegaze::Family::xception, model_preset));
    } else {
        specs.push_back(fakegaze::make_spec(fakegaze::parse_family(family_part), model_preset));
    }
    ensure_directory(flags.out);

    const fakegaze::DatasetManifest manifest = fakegaze::load_dataset(flags.data);
    const std::vector<fakegaze::VideoSample> videos =
        fakegaze::load_all_videos(manifest, specs[0].input_h, specs[0].input_w);

    fakegaze::KfoldOptions options;
    options.specs = specs;
    options.cfg = cfg;
    options.only_fold = only_fold;
    options.jobs = jobs;
    std::printf("k-fold run: k=%d, %zu videos, %zu backbone(s), %d epochs, jobs=%d\n", k,
                videos.size(), specs.size(), cfg.epochs, jobs);
    std::fflush(stdout);
    const fakegaze::KfoldResult result = fakegaze::run_kfold(videos, options);

    for (const auto& run : result.runs) {
        const fs::path dir =
            fs::path(flags.out) / ("fold_" + std::to_string(run.fold)) /
            fakegaze::family_name(run.family);
        ensure_directory(dir.string());
        fakegaze::save_weights((dir / "weights.fgwt").string(), run.best_weights);
        fakegaze::export_curves(run.log, (dir / "curves.csv").string());
        write_text_file((dir / "report.txt").string(), fakegaze::format_report(run.log));
        std::printf("fold %d %s: best epoch %d, val acc %.6f, val f1 %.6f\n", run.fold,
                    fakegaze::family_name(run.family), run.log.best_epoch, run.val_accuracy,
                    run.val_f1);
    }

    std::string summary = "fold,best_epoch,val_acc,val_f1\n";
    char buf[128];
    for (const auto& row : result.summary) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.6f,%.6f\n", row.fold, row.best_epoch,
                      row.val_accuracy, row.val_f1);
        summary += buf;
    }
    write_text_file((fs::path(flags.out) / "summary.csv").string(), summary);
    std::printf("%s", summary.c_str());
    std::printf("mean val_acc %.6f (std %.6f), mean val_f1 %.6f (std %.6f)\n",
                result.mean_accuracy, result.std_accuracy, result.mean_f1, result.std_f1);
    std::printf("wrote %s\n", (fs::path(flags.out) / "summary.csv").c_str());
    return 0;
}

int cmd_predict(const std::string& weights_resnet, const std::string& weights_xception,
                const std::string& ensemble_weights, const std::string& video_dir, int frames) {
    if (weights_resnet.empty() && weights_xception.empty()) {
        throw ConfigError("pass --weights-resnet and/or --weights-xception");
    }
    if (frames < 1) throw ConfigError("frames must be >= 1");
    fakegaze::EnsembleConfig ens;
    {
        const std::size_t comma = ensemble_weights.find(',');
        if (comma == std::string::npos) {
            throw ConfigError("ensemble-weights must be two comma-separated numbers, e.g. 1,1");
        }
        try {
            ens.resnet_weight = std::stod(ensemble_weights.substr(0, comma));
            ens.xception_weight = std::stod(ensemble_weights.substr(comma + 1));
        } catch (const std::exception&) {
            throw ConfigError("ensemble-weights must be two comma-separated numbers, e.g. 1,1");
        }
    }

    auto predict_one = [&](const std::string& path, fakegaze::Family family) {
        const fakegaze::ModelWeights w = fakegaze::load_weights(path);
        const fakegaze::ModelSpec spec = spec_for_fingerprint(w.fingerprint, path);
        if (spec.family != family) {
            throw WeightsError(path + ": weights are for family " +
                               fakegaze::family_name(spec.family) + ", expected " +
                               fakegaze::family_name(family));
        }
        fakegaze::Model model(spec, 0);
        model.restore(w);
        const fakegaze::VideoSample video = load_single_video(video_dir, spec);
        return std::make_pair(fakegaze::predict_video(model, video.frames, frames),
                              video.video_id);
    };

    double probability = 0.0;
    std::string video_id;
    if (!weights_resnet.empty() && !weights_xception.empty()) {
        const auto [p_resnet, id1] = predict_one(weights_resnet, fakegaze::Family::resnet);
        const auto [p_xception, id2] = predict_one(weights_xception, fakegaze::Family::xception);
        probability = fakegaze::ensemble_predict(p_resnet, p_xception, ens);
        video_id = id1;
    } else if (!weights_resnet.empty()) {
        std::tie(probability, video_id) = predict_one(weights_resnet, fakegaze::Family::resnet);
    } else {
        std::tie(probability, video_id) =
            predict_one(weights_xception, fakegaze::Family::xception);
    }
    std::printf("%s,%.6f,%s\n", video_id.c_str(), probability,
                probability >= 0.5 ? "fake" : "real");
    return 0;
}

int cmd_inspect(const std::string& weights_path, const std::string& frame_path, int layer,
                const std::string& out_path) {
    const fakegaze::ModelWeights w = fakegaze::load_weights(weights_path);
    const fakegaze::ModelSpec spec = spec_for_fingerprint(w.fingerprint, weights_path);
    fakegaze::Model model(spec, 0);
    model.restore(w);

    const fakegaze::Image frame_img = fakegaze::read_ppm(frame_path);
    // Convenience: frames of any size are center-cropped and resized to the
    // model input before inspection.
    const fakegaze::Image fitted =
        (frame_img.width == spec.input_w && frame_img.height == spec.input_h)
            ? frame_img
            : fakegaze::crop_face(frame_img, std::nullopt, spec.input_h, spec.input_w);
    const fakegaze::FeatureMapGrid grid =
        fakegaze::dump_feature_maps(model, fakegaze::image_to_tensor(fitted), layer);
    fakegaze::write_ppm(out_path, grid.grid);
    std::printf("wrote %s: layer %d of %s/%s, %zu maps in %dx%d tiles of %dx%d\n",
                out_path.c_str(), grid.layer_index, fakegaze::family_name(spec.family),
                fakegaze::preset_name(spec.preset), grid.maps.size(), grid.rows, grid.columns,
                grid.maps.front().height, grid.maps.front().width);
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Deepfake-detection training and inference toolkit"};
    app.require_subcommand(1);

    // gendata ---------------------------------------------------------------
    auto* gendata = app.add_subcommand("gendata", "Render the synthetic video corpus");
    std::string g_config, g_out;
    int g_videos = 200, g_frames = 8, g_size = 32;
    std::uint64_t g_seed = 1;
    double g_blend = 0.55;
    ConfigBinder g_binder;
    gendata->add_option("--config", g_config, "JSON config file");
    g_binder.bind_string(gendata->add_option("--out", g_out, "Output dataset root")->required(),
                         "out", g_out);
    g_binder.bind_int(gendata->add_option("--videos", g_videos, "Total videos (even)"), "videos",
                      g_videos);
    g_binder.bind_int(gendata->add_option("--frames", g_frames, "Frames per video"), "frames",
                      g_frames);
    g_binder.bind_int(gendata->add_option("--size", g_size, "Square frame side in pixels"),
                      "size", g_size);
    g_binder.bind_u64(gendata->add_option("--seed", g_seed, "Random seed"), "seed", g_seed);
    g_binder.bind_double(
        gendata->add_option("--blend-fraction", g_blend, "Tamper square side fraction"),
        "blend_fraction", g_blend);

    // train -----------------------------------------------------------------
    auto* train_cmd = app.add_subcommand("train", "Train one backbone with a held-out split");
    std::string t_config, t_model = "resnet", t_preset = "mini";
    double t_val_fraction = 0.2;
    TrainFlags t_flags;
    ConfigBinder t_binder;
    train_cmd->add_option("--config", t_config, "JSON config file");
    add_train_flags(*train_cmd, t_flags, t_binder);
    t_binder.bind_string(train_cmd->add_option("--model", t_model, "resnet or xception"), "model",
                         t_model);
    t_binder.bind_string(train_cmd->add_option("--preset", t_preset, "mini or full"), "preset",
                         t_preset);
    t_binder.bind_double(
        train_cmd->add_option("--val-fraction", t_val_fraction, "Held-out validation fraction"),
        "val_fraction", t_val_fraction);

    // kfold -----------------------------------------------------------------
    auto* kfold_cmd = app.add_subcommand("kfold", "Stratified k-fold cross-validation run");
    std::string k_config, k_preset = "mini-both";
    int k_k = 5, k_only_fold = -1;
    int k_jobs = std::max(1u, std::thread::hardware_concurrency());
    TrainFlags k_flags;
    ConfigBinder k_binder;
    kfold_cmd->add_option("--config", k_config, "JSON config file");
    add_train_flags(*kfold_cmd, k_flags, k_binder);
    k_binder.bind_int(kfold_cmd->add_option("--k", k_k, "Number of folds"), "k", k_k);
    k_binder.bind_string(
        kfold_cmd->add_option("--preset", k_preset,
                              "Backbones: <mini|full>-<resnet|xception|both>"),
        "preset", k_preset);
    k_binder.bind_int(
        kfold_cmd->add_option("--only-fold", k_only_fold, "Run a single fold (for reproduction)"),
        "only_fold", k_only_fold);
    k_binder.bind_int(kfold_cmd->add_option("--jobs", k_jobs, "Concurrent training tasks"),
                      "jobs", k_jobs);

    // predict ---------------------------------------------------------------
    auto* predict_cmd = app.add_subcommand("predict", "Score one video directory");
    std::string p_config, p_weights_resnet, p_weights_xception, p_video_dir;
    std::string p_ensemble = "1,1";
    int p_frames = 5;
    ConfigBinder p_binder;
    predict_cmd->add_option("--config", p_config, "JSON config file");
    p_binder.bind_string(
        predict_cmd->add_option("--weights-resnet", p_weights_resnet, "ResNet weights file"),
        "weights_resnet", p_weights_resnet);
    p_binder.bind_string(predict_cmd->add_option("--weights-xception", p_weights_xception,
                                                 "Xception weights file"),
                         "weights_xception", p_weights_xception);
    p_binder.bind_string(
        predict_cmd->add_option("--ensemble-weights", p_ensemble, "Soft-vote weights, e.g. 1,1"),
        "ensemble_weights", p_ensemble);
    p_binder.bind_string(
        predict_cmd->add_option("--video-dir", p_video_dir, "Directory of frame_%05d.ppm")
            ->required(),
        "video_dir", p_video_dir);
    p_binder.bind_int(predict_cmd->add_option("--frames", p_frames, "Frames sampled per video"),
                      "frames", p_frames);

    // inspect ---------------------------------------------------------------
    auto* inspect_cmd = app.add_subcommand("inspect", "Export a conv layer's feature-map grid");
    std::string i_config, i_weights, i_frame, i_out;
    int i_layer = 1;
    ConfigBinder i_binder;
    inspect_cmd->add_option("--config", i_config, "JSON config file");
    i_binder.bind_string(
        inspect_cmd->add_option("--weights", i_weights, "Weights file")->required(), "weights",
        i_weights);
    i_binder.bind_string(
        inspect_cmd->add_option("--frame", i_frame, "Input frame (PPM)")->required(), "frame",
        i_frame);
    i_binder.bind_int(inspect_cmd->add_option("--layer", i_layer, "1-based conv layer ordinal"),
                      "layer", i_layer);
    i_binder.bind_string(inspect_cmd->add_option("--out", i_out, "Output grid PPM")->required(),
                         "out", i_out);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gendata->parsed()) {
            if (!g_config.empty()) g_binder.apply(load_config_file(g_config));
            return cmd_gendata(g_out, g_videos, g_frames, g_size, g_seed, g_blend);
        }
        if (train_cmd->parsed()) {
            json cfg_doc = json::object();
            if (!t_config.empty()) {
                cfg_doc = load_config_file(t_config);
                t_binder.apply(cfg_doc);
            }
            return cmd_train(t_flags, cfg_doc, t_model, t_preset, t_val_fraction);
        }
        if (kfold_cmd->parsed()) {
            json cfg_doc = json::object();
            if (!k_config.empty()) {
                cfg_doc = load_config_file(k_config);
                k_binder.apply(cfg_doc);
            }
            return cmd_kfold(k_flags, cfg_doc, k_preset, k_k, k_only_fold, k_jobs);
        }
        if (predict_cmd->parsed()) {
            if (!p_config.empty()) p_binder.apply(load_config_file(p_config));
            return cmd_predict(p_weights_resnet, p_weights_xception, p_ensemble, p_video_dir,
                               p_frames);
        }
        if (inspect_cmd->parsed()) {
            if (!i_config.empty()) i_binder.apply(load_config_file(i_config));
            return cmd_inspect(i_weights, i_frame, i_layer, i_out);
        }
    } catch (const fakegaze::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return fakegaze::exit_code(e);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

#ifndef FAKEGAZE_CLI_NO_MAIN
int main(int argc, char** argv) { return run_cli(argc, argv); }
#endif
