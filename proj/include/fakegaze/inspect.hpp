#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fakegaze/image.hpp"
#include "fakegaze/model.hpp"
#include "fakegaze/train.hpp"

namespace fakegaze {

// One filter's activation map rendered to 8-bit grayscale, min-max
// normalized per map (a constant map renders as mid-gray 128).
struct FeatureMap {
    int width = 0, height = 0;
    std::vector<std::uint8_t> values;
};

struct FeatureMapGrid {
    int layer_index = 1;  // 1-based convolution ordinal within the model
    std::vector<FeatureMap> maps;  // one per output channel
    int columns = 0;  // ceil(sqrt(map count))
    int rows = 0;     // ceil(map count / columns)
    Image grid;       // composite, row-major tiles, black filler cells
};

// Runs `frame` ([3 x H x W] or [1 x 3 x H x W], matching the model input)
// through the model in inference mode and renders the chosen conv layer's
// post-activation output (for a block's last conv: the block output after
// the residual add and relu). Pure observation — weights and running
// statistics are untouched. Throws ContractError for an out-of-range layer,
// message listing the valid range (e.g. "valid range 1..48").
FeatureMapGrid dump_feature_maps(ModelT<float>& model, const Tensor& frame, int layer_index);

// CSV with header
// epoch,train_loss,val_loss,train_log_loss,val_log_loss,train_f1,val_f1,train_acc,val_acc
// one row per epoch, every real value at 6 decimal places. Byte-deterministic
// for a fixed log.
std::string format_curves(const EpochLog& log);
void export_curves(const EpochLog& log, const std::string& path);

struct OverfitReport {
    int best_epoch = 1;
    int epochs_past_best = 0;
    double best_val_log_loss = 0.0;
    double final_val_log_loss = 0.0;
    double val_minus_train_log_loss = 0.0;  // at the final epoch
    double margin = 0.10;
    bool overfit = false;  // final val log loss exceeds best by more than margin
};

OverfitReport overfit_report(const EpochLog& log, double margin = 0.10);

// Plain-text training report: best epoch, final-epoch metrics, overfit flag.
std::string format_report(const EpochLog& log, double margin = 0.10);

}  // namespace fakegaze
