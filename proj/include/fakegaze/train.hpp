#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fakegaze/dataset.hpp"
#include "fakegaze/loss_metrics.hpp"
#include "fakegaze/model.hpp"

namespace fakegaze {

enum class Optimizer { sgd_momentum, adam };

const char* optimizer_name(Optimizer o);
Optimizer parse_optimizer(const std::string& s);

// Per-epoch learning-rate policy. `cosine` decays from the configured rate
// to 5% of it across the run.
enum class LrSchedule { constant, cosine };

LrSchedule parse_lr_schedule(const std::string& s);

struct TrainConfig {
    int epochs = 15;
    int batch_size = 32;  // measured in videos; each contributes n_frames examples
    double learning_rate = 8e-3;
    LrSchedule lr_schedule = LrSchedule::cosine;
    Optimizer optimizer = Optimizer::adam;
    double momentum = 0.9;  // sgd_momentum only
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_epsilon = 1e-8;
    FocalParams focal;
    int n_frames = 5;
    int k_folds = 5;
    std::uint64_t seed = 0;
    // The only supported policy: keep the weights of the epoch with the
    // lowest validation log loss.

    void validate() const;  // throws ConfigError
};

// The learning rate used for epoch `epoch` (1-based) of cfg.epochs.
double scheduled_lr(const TrainConfig& cfg, int epoch);

// Optimizer slot variables, one tensor per parameter (same shapes), zero
// initialized. m2 is allocated for Adam only.
struct OptimizerState {
    std::vector<Tensor> m1;  // momentum velocity / Adam first moment
    std::vector<Tensor> m2;  // Adam second moment
    long long step = 0;

    OptimizerState(const std::vector<Tensor>& params, Optimizer kind);
};

// One in-place parameter update at learning rate `lr`.
//   sgd_momentum: v = momentum * v + g;  w -= lr * v
//   adam: first/second-moment EMAs with bias correction,
//         w -= lr * m_hat / (sqrt(v_hat) + epsilon)
void optimizer_step(const TrainConfig& cfg, double lr, OptimizerState& st,
                    std::vector<Tensor>& params, const std::vector<Tensor>& grads);

// Built-in named runs: "fig2" = {epochs 100, batch 32, n_frames 5},
// "fig5" = {epochs 300, batch 64, n_frames 6}. Other fields keep `base`.
TrainConfig preset_run(const std::string& name, TrainConfig base);

struct FoldAssignment {
    std::map<std::string, int> fold_of;
    int k = 0;
};

// Stratified assignment: within each class, a seeded shuffle followed by
// round-robin placement (the second class continues the rotation where the
// first stopped, keeping fold sizes level). Requires 2 <= k <= count of each
// class.
FoldAssignment kfold_split(const std::vector<std::pair<std::string, int>>& labels, int k,
                           std::uint64_t seed);

struct EpochLog {
    // One (train, validation) record pair per epoch, epochs numbered from 1.
    std::vector<std::pair<MetricsRecord, MetricsRecord>> epochs;
    int best_epoch = 1;  // argmin of validation log loss; ties -> earliest
};

// Full pass over `set` in inference mode: per-video predict_video
// probabilities scored by the loss-metrics module. Mutates nothing.
MetricsRecord evaluate(Model& model, const std::vector<VideoSample>& set, const TrainConfig& cfg,
                       Split split, int epoch);

struct TrainHooks {
    // Called before each gradient step with the ids of the videos whose
    // frames enter that batch (lets tests prove validation isolation).
    std::function<void(const std::vector<std::string>& video_ids)> on_gradient_batch;
    // Called after each epoch's metrics are recorded (progress reporting).
    std::function<void(const MetricsRecord& train_rec, const MetricsRecord& val_rec)> on_epoch;
};

struct TrainResult {
    ModelWeights best_weights;   // from log.best_epoch
    ModelWeights final_weights;  // after the last epoch
    EpochLog log;
};

// The epoch loop: seeded video shuffle, minibatch focal-loss steps over
// sampled frames (every sampled frame is an example carrying its video's
// label), then full-pass metrics on both splits. All cfg.epochs run; early
// stopping is checkpoint selection, never truncation. Non-finite loss aborts
// with NumericError naming the epoch and batch. The model is left at the
// final epoch; use TrainResult.best_weights for deployment.
TrainResult train(Model& model, const std::vector<VideoSample>& train_set,
                  const std::vector<VideoSample>& val_set, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

struct FoldFamilyResult {
    int fold = 0;
    Family family = Family::resnet;
    EpochLog log;
    ModelWeights best_weights;
    // Best-checkpoint validation metrics (re-evaluated from best_weights).
    double val_accuracy = 0.0, val_f1 = 0.0, val_log_loss = 0.0;
    // Best-checkpoint per-video probabilities on the held-out fold, in
    // dataset order (feeds the ensemble summary and tests).
    std::vector<double> val_probs;
};

struct FoldSummaryRow {
    int fold = 0;
    int best_epoch = 1;  // first backbone's best epoch
    // Single backbone: its best-checkpoint metrics. Two backbones: metrics
    // of the equal-weight soft-vote ensemble of the best checkpoints.
    double val_accuracy = 0.0, val_f1 = 0.0;
};

struct KfoldOptions {
    std::vector<ModelSpec> specs;  // one or two backbones (distinct families)
    TrainConfig cfg;
    int only_fold = -1;  // >= 0 restricts the run to that single fold
    int jobs = 1;        // concurrent (fold, family) training tasks
};

struct KfoldResult {
    std::vector<FoldFamilyResult> runs;  // sorted by (fold, family)
    std::vector<FoldSummaryRow> summary;
    double mean_accuracy = 0.0, std_accuracy = 0.0;
    double mean_f1 = 0.0, std_f1 = 0.0;
};

// Cross-validation driver. Fold f trains on all-but-f with derived seed
// (cfg.seed xor f) and validates on f. Tasks are independent; `jobs` > 1
// runs them on threads without changing any result byte.
KfoldResult run_kfold(const std::vector<VideoSample>& videos, const KfoldOptions& options);

}  // namespace fakegaze
