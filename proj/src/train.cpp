#include "fakegaze/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <set>
#include <thread>

#include "fakegaze/autograd.hpp"
#include "fakegaze/errors.hpp"
#include "fakegaze/utils.hpp"

namespace fakegaze {

const char* optimizer_name(Optimizer o) {
    return o == Optimizer::sgd_momentum ? "sgd_momentum" : "adam";
}

Optimizer parse_optimizer(const std::string& s) {
    if (s == "sgd" || s == "sgd_momentum") return Optimizer::sgd_momentum;
    if (s == "adam") return Optimizer::adam;
    throw ConfigError("unknown optimizer '" + s + "' (expected sgd_momentum or adam)");
}

LrSchedule parse_lr_schedule(const std::string& s) {
    if (s == "constant") return LrSchedule::constant;
    if (s == "cosine") return LrSchedule::cosine;
    throw ConfigError("unknown lr schedule '" + s + "' (expected constant or cosine)");
}

double scheduled_lr(const TrainConfig& cfg, int epoch) {
    if (cfg.lr_schedule == LrSchedule::constant || cfg.epochs <= 1) return cfg.learning_rate;
    constexpr double floor_frac = 0.05;
    const double t = static_cast<double>(epoch - 1) / static_cast<double>(cfg.epochs - 1);
    const double scale =
        floor_frac + (1.0 - floor_frac) * 0.5 * (1.0 + std::cos(t * std::numbers::pi));
    return cfg.learning_rate * scale;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1, got " + std::to_string(batch_size));
    }
    if (!std::isfinite(learning_rate) || learning_rate <= 0.0) {
        throw ConfigError("learning_rate must be a positive real");
    }
    if (!(momentum >= 0.0) || momentum >= 1.0) {
        throw ConfigError("momentum must lie in [0, 1)");
    }
    if (!(adam_beta1 > 0.0) || adam_beta1 >= 1.0 || !(adam_beta2 > 0.0) || adam_beta2 >= 1.0) {
        throw ConfigError("adam betas must lie in (0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
    focal.validate();
    if (n_frames < 1) throw ConfigError("n_frames must be >= 1, got " + std::to_string(n_frames));
    if (k_folds < 2) throw ConfigError("k_folds must be >= 2, got " + std::to_string(k_folds));
}

TrainConfig preset_run(const std::string& name, TrainConfig base) {
    if (name == "fig2") {
        base.epochs = 100;
        base.batch_size = 32;
        base.n_frames = 5;
    } else if (name == "fig5") {
        base.epochs = 300;
        base.batch_size = 64;
        base.n_frames = 6;
    } else {
        throw ConfigError("unknown run preset '" + name + "' (expected fig2 or fig5)");
    }
    return base;
}

FoldAssignment kfold_split(const std::vector<std::pair<std::string, int>>& labels, int k,
                           std::uint64_t seed) {
    if (k < 2) throw ConfigError("k must be >= 2, got " + std::to_string(k));
    std::set<std::string> seen;
    std::vector<std::string> pos, neg;
    for (const auto& [id, label] : labels) {
        if (!seen.insert(id).second) throw ContractError("duplicate video id '" + id + "'");
        if (label == 1) {
            pos.push_back(id);
        } else if (label == 0) {
            neg.push_back(id);
        } else {
            throw ContractError("label for '" + id + "' must be 0 or 1, got " +
                                std::to_string(label));
        }
    }
    auto check_class = [&](const std::vector<std::string>& ids, int label) {
        if (static_cast<int>(ids.size()) < k) {
            throw ConfigError("k=" + std::to_string(k) + " exceeds the " +
                              std::to_string(ids.size()) + " videos of class " +
                              std::to_string(label));
        }
    };
    check_class(pos, 1);
    check_class(neg, 0);

    Rng rng(seed);
    rng.shuffle(pos);
    rng.shuffle(neg);
    FoldAssignment fa;
    fa.k = k;
    // Round-robin within each class; the negative rotation continues where
    // the positive one stopped so total fold sizes stay within one of each
    // other even when neither class count divides k.
    for (std::size_t i = 0; i < pos.size(); ++i) {
        fa.fold_of[pos[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
    }
    for (std::size_t i = 0; i < neg.size(); ++i) {
        fa.fold_of[neg[i]] = static_cast<int>((i + pos.size()) % static_cast<std::size_t>(k));
    }
    return fa;
}

namespace {

void check_video_set(const std::vector<VideoSample>& set, const ModelSpec& spec,
                     const char* which) {
    const Shape expect{static_cast<std::size_t>(spec.input_channels),
                       static_cast<std::size_t>(spec.input_h),
                       static_cast<std::size_t>(spec.input_w)};
    for (const auto& v : set) {
        if (v.frames.empty()) {
            throw ContractError(std::string(which) + " video '" + v.video_id + "' has no frames");
        }
        if (v.label != 0 && v.label != 1) {
            throw ContractError(std::string(which) + " video '" + v.video_id +
                                "' has non-binary label " + std::to_string(v.label));
        }
        for (const auto& f : v.frames) {
            if (!f.defined() || f.shape() != expect) {
                throw ContractError(std::string(which) + " video '" + v.video_id +
                                    "' frame shape does not match model input " +
                                    shape_to_string(expect));
            }
        }
    }
}

}  // namespace

OptimizerState::OptimizerState(const std::vector<Tensor>& params, Optimizer kind) {
    m1.reserve(params.size());
    for (const auto& p : params) m1.emplace_back(p.shape());
    if (kind == Optimizer::adam) {
        m2.reserve(params.size());
        for (const auto& p : params) m2.emplace_back(p.shape());
    }
}

void optimizer_step(const TrainConfig& cfg, double epoch_lr, OptimizerState& st,
                    std::vector<Tensor>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) {
        throw ContractError("optimizer_step: " + std::to_string(params.size()) +
                            " parameters but " + std::to_string(grads.size()) + " gradients");
    }
    const float lr = static_cast<float>(epoch_lr);
    if (cfg.optimizer == Optimizer::sgd_momentum) {
        const float mu = static_cast<float>(cfg.momentum);
        for (std::size_t t = 0; t < params.size(); ++t) {
            float* w = params[t].data();
            float* v = st.m1[t].data();
            const float* g = grads[t].data();
            const std::size_t n = params[t].numel();
            for (std::size_t i = 0; i < n; ++i) {
                v[i] = mu * v[i] + g[i];
                w[i] -= lr * v[i];
            }
        }
        return;
    }
    ++st.step;
    const float b1 = static_cast<float>(cfg.adam_beta1);
    const float b2 = static_cast<float>(cfg.adam_beta2);
    const float eps = static_cast<float>(cfg.adam_epsilon);
    const float bc1 = static_cast<float>(1.0 - std::pow(cfg.adam_beta1, st.step));
    const float bc2 = static_cast<float>(1.0 - std::pow(cfg.adam_beta2, st.step));
    for (std::size_t t = 0; t < params.size(); ++t) {
        float* w = params[t].data();
        float* m = st.m1[t].data();
        float* v = st.m2[t].data();
        const float* g = grads[t].data();
        const std::size_t n = params[t].numel();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0f - b1) * g[i];
            v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
            const float mhat = m[i] / bc1;
            const float vhat = v[i] / bc2;
            w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

MetricsRecord evaluate(Model& model, const std::vector<VideoSample>& set, const TrainConfig& cfg,
                       Split split, int epoch) {
    if (set.empty()) throw ContractError("evaluate: empty video set");
    check_video_set(set, model.spec(), "evaluate");
    std::vector<double> probs;
    std::vector<int> labels;
    probs.reserve(set.size());
    labels.reserve(set.size());
    for (const auto& v : set) {
        probs.push_back(predict_video(model, v.frames, cfg.n_frames));
        labels.push_back(v.label);
    }
    MetricsRecord r;
    r.epoch = epoch;
    r.split = split;
    r.loss = focal_loss(probs, labels, cfg.focal);
    r.log_loss = log_loss(probs, labels);
    const ConfusionCounts c = confusion(probs, labels, 0.5);
    r.f1 = f1_score(c);
    r.accuracy = accuracy(c);
    return r;
}

TrainResult train(Model& model, const std::vector<VideoSample>& train_set,
                  const std::vector<VideoSample>& val_set, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
    cfg.validate();
    if (train_set.empty()) throw ContractError("train: empty training set");
    if (val_set.empty()) throw ContractError("train: empty validation set");
    const ModelSpec& spec = model.spec();
    check_video_set(train_set, spec, "train");
    check_video_set(val_set, spec, "validation");

    std::vector<Tensor> params = model.trainable_tensors();
    OptimizerState st(params, cfg.optimizer);
    const std::size_t frame_elems = static_cast<std::size_t>(spec.input_channels) *
                                    static_cast<std::size_t>(spec.input_h) *
                                    static_cast<std::size_t>(spec.input_w);

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng rng(mix64(cfg.seed, static_cast<std::uint64_t>(epoch)));
        std::vector<std::size_t> order(train_set.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        rng.shuffle(order);
        const double epoch_lr = scheduled_lr(cfg, epoch);

        const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
        int batch_index = 0;
        for (std::size_t start = 0; start < order.size(); start += bs, ++batch_index) {
            const std::size_t end = std::min(order.size(), start + bs);
            const std::size_t n_videos = end - start;
            const std::size_t m = n_videos * static_cast<std::size_t>(cfg.n_frames);
            Tensor x({m, static_cast<std::size_t>(spec.input_channels),
                      static_cast<std::size_t>(spec.input_h),
                      static_cast<std::size_t>(spec.input_w)});
            std::vector<int> labels(m);
            std::vector<std::string> batch_ids;
            batch_ids.reserve(n_videos);
            std::size_t row = 0;
            for (std::size_t b = start; b < end; ++b) {
                const VideoSample& v = train_set[order[b]];
                batch_ids.push_back(v.video_id);
                const std::vector<int> idx =
                    sample_frames(static_cast<int>(v.frames.size()), cfg.n_frames);
                for (int fi : idx) {
                    const float* src = v.frames[static_cast<std::size_t>(fi)].data();
                    std::copy(src, src + frame_elems, x.data() + row * frame_elems);
                    labels[row] = v.label;
                    ++row;
                }
            }
            if (hooks.on_gradient_batch) hooks.on_gradient_batch(batch_ids);

            Tape tape;
            std::vector<Var> bound;
            bound.reserve(params.size());
            for (auto& p : params) bound.push_back(tape.leaf(p, true));
            Var xv = tape.leaf(x, false);
            Var logits = model.forward(tape, xv, RunMode::training, &bound);
            Var probs = tape.sigmoid(tape.reshape(logits, {m}));
            Var loss = tape.focal_loss(probs, labels, cfg.focal);
            const double loss_value = static_cast<double>(tape.value(loss).data()[0]);
            if (!std::isfinite(loss_value)) {
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) +
                                   " (lower the learning rate or gamma)");
            }
            tape.backward(loss);
            std::vector<Tensor> grads;
            grads.reserve(bound.size());
            for (const auto& bv : bound) grads.push_back(tape.grad(bv));
            optimizer_step(cfg, epoch_lr, st, params, grads);
        }

        MetricsRecord tr = evaluate(model, train_set, cfg, Split::train, epoch);
        MetricsRecord va = evaluate(model, val_set, cfg, Split::validation, epoch);
        result.log.epochs.emplace_back(tr, va);
        if (hooks.on_epoch) hooks.on_epoch(tr, va);
        if (va.log_loss < best_val) {
            best_val = va.log_loss;
            result.log.best_epoch = epoch;
            result.best_weights = model.snapshot();
        }
    }
    result.final_weights = model.snapshot();
    return result;
}

namespace {

double fold_mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

double fold_std(const std::vector<double>& xs, double mean) {
    double s = 0.0;
    for (double x : xs) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(xs.size()));
}

}  // namespace

KfoldResult run_kfold(const std::vector<VideoSample>& videos, const KfoldOptions& options) {
    const TrainConfig& cfg = options.cfg;
    cfg.validate();
    if (options.specs.empty() || options.specs.size() > 2) {
        throw ConfigError("run_kfold takes one or two backbones, got " +
                          std::to_string(options.specs.size()));
    }
    if (options.specs.size() == 2 && options.specs[0].family == options.specs[1].family) {
        throw ConfigError("the two backbones must be of different families");
    }
    if (videos.empty()) throw ContractError("run_kfold: empty video list");

    std::vector<std::pair<std::string, int>> labels;
    labels.reserve(videos.size());
    for (const auto& v : videos) labels.emplace_back(v.video_id, v.label);
    const FoldAssignment fa = kfold_split(labels, cfg.k_folds, cfg.seed);

    std::vector<int> folds;
    if (options.only_fold >= 0) {
        if (options.only_fold >= cfg.k_folds) {
            throw ConfigError("only_fold " + std::to_string(options.only_fold) +
                              " out of range 0.." + std::to_string(cfg.k_folds - 1));
        }
        folds.push_back(options.only_fold);
    } else {
        for (int f = 0; f < cfg.k_folds; ++f) folds.push_back(f);
    }

    struct Task {
        int fold;
        std::size_t spec_index;
    };
    std::vector<Task> tasks;
    for (int f : folds) {
        for (std::size_t s = 0; s < options.specs.size(); ++s) tasks.push_back({f, s});
    }

    KfoldResult result;
    result.runs.resize(tasks.size());
    std::vector<std::vector<int>> fold_val_labels(static_cast<std::size_t>(cfg.k_folds));
    for (int f : folds) {
        for (const auto& v : videos) {
            if (fa.fold_of.at(v.video_id) == f) {
                fold_val_labels[static_cast<std::size_t>(f)].push_back(v.label);
            }
        }
    }

    std::atomic<std::size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&]() {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= tasks.size()) return;
            {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (first_error) return;
            }
            try {
                const Task task = tasks[t];
                const std::uint64_t fold_seed =
                    cfg.seed ^ static_cast<std::uint64_t>(task.fold);
                std::vector<VideoSample> fold_train, fold_val;
                for (const auto& v : videos) {
                    if (fa.fold_of.at(v.video_id) == task.fold) {
                        fold_val.push_back(v);
                    } else {
                        fold_train.push_back(v);
                    }
                }
                TrainConfig task_cfg = cfg;
                task_cfg.seed = fold_seed;
                Model model(options.specs[task.spec_index], fold_seed);
                TrainResult tr = train(model, fold_train, fold_val, task_cfg);

                FoldFamilyResult& out = result.runs[t];
                out.fold = task.fold;
                out.family = options.specs[task.spec_index].family;
                out.log = std::move(tr.log);
                out.best_weights = std::move(tr.best_weights);
                model.restore(out.best_weights);
                std::vector<double> probs;
                probs.reserve(fold_val.size());
                for (const auto& v : fold_val) {
                    probs.push_back(predict_video(model, v.frames, task_cfg.n_frames));
                }
                std::vector<int> val_labels;
                val_labels.reserve(fold_val.size());
                for (const auto& v : fold_val) val_labels.push_back(v.label);
                out.val_log_loss = log_loss(probs, val_labels);
                const ConfusionCounts c = confusion(probs, val_labels, 0.5);
                out.val_f1 = f1_score(c);
                out.val_accuracy = accuracy(c);
                out.val_probs = std::move(probs);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };

    const std::size_t n_threads =
        std::min<std::size_t>(std::max(1, options.jobs), tasks.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    std::vector<double> accs, f1s;
    for (int f : folds) {
        std::vector<const FoldFamilyResult*> fold_runs;
        for (const auto& r : result.runs) {
            if (r.fold == f) fold_runs.push_back(&r);
        }
        FoldSummaryRow row;
        row.fold = f;
        row.best_epoch = fold_runs.front()->log.best_epoch;
        if (fold_runs.size() == 1) {
            row.val_accuracy = fold_runs.front()->val_accuracy;
            row.val_f1 = fold_runs.front()->val_f1;
        } else {
            // Two backbones: score the equal-weight soft vote of the best
            // checkpoints.
            const std::vector<int>& val_labels = fold_val_labels[static_cast<std::size_t>(f)];
            std::vector<double> mixed(val_labels.size());
            for (std::size_t i = 0; i < mixed.size(); ++i) {
                mixed[i] = ensemble_predict(fold_runs[0]->val_probs[i],
                                            fold_runs[1]->val_probs[i], EnsembleConfig{});
            }
            const ConfusionCounts c = confusion(mixed, val_labels, 0.5);
            row.val_accuracy = accuracy(c);
            row.val_f1 = f1_score(c);
        }
        result.summary.push_back(row);
        accs.push_back(row.val_accuracy);
        f1s.push_back(row.val_f1);
    }
    result.mean_accuracy = fold_mean(accs);
    result.std_accuracy = fold_std(accs, result.mean_accuracy);
    result.mean_f1 = fold_mean(f1s);
    result.std_f1 = fold_std(f1s, result.mean_f1);
    return result;
}

}  // namespace fakegaze
