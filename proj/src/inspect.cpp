#include "fakegaze/inspect.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fakegaze/autograd.hpp"
#include "fakegaze/errors.hpp"

namespace fakegaze {

FeatureMapGrid dump_feature_maps(ModelT<float>& model, const Tensor& frame, int layer_index) {
    const int n_convs = model.conv_count();
    if (layer_index < 1 || layer_index > n_convs) {
        throw ContractError("layer_index " + std::to_string(layer_index) +
                            " out of range; valid range 1.." + std::to_string(n_convs));
    }
    Tensor input = frame;
    if (input.defined() && input.rank() == 3) {
        input = input.reshape({1, input.dim(0), input.dim(1), input.dim(2)});
    }
    const ModelSpec& spec = model.spec();
    const Shape expect{1, static_cast<std::size_t>(spec.input_channels),
                       static_cast<std::size_t>(spec.input_h),
                       static_cast<std::size_t>(spec.input_w)};
    if (!input.defined() || input.shape() != expect) {
        throw ContractError("frame shape " +
                            (input.defined() ? shape_to_string(input.shape()) : "(undefined)") +
                            " does not match model input " + shape_to_string(expect));
    }

    Tensor captured;
    CaptureFn<float> capture = [&](int ordinal, const Tensor& value) {
        if (ordinal == layer_index) captured = value;
    };
    Tape tape;
    Var x = tape.leaf(input, false);
    model.forward(tape, x, RunMode::inference, nullptr, capture);
    if (!captured.defined() || captured.rank() != 4) {
        throw ContractError("feature capture failed for layer " + std::to_string(layer_index));
    }

    const std::size_t channels = captured.dim(1);
    const std::size_t h = captured.dim(2);
    const std::size_t w = captured.dim(3);
    FeatureMapGrid out;
    out.layer_index = layer_index;
    out.maps.reserve(channels);
    const float* data = captured.data();
    for (std::size_t c = 0; c < channels; ++c) {
        const float* plane = data + c * h * w;
        float lo = plane[0], hi = plane[0];
        for (std::size_t i = 1; i < h * w; ++i) {
            lo = std::min(lo, plane[i]);
            hi = std::max(hi, plane[i]);
        }
        FeatureMap fm;
        fm.width = static_cast<int>(w);
        fm.height = static_cast<int>(h);
        fm.values.resize(h * w);
        if (hi > lo) {
            const float scale = 255.0f / (hi - lo);
            for (std::size_t i = 0; i < h * w; ++i) {
                fm.values[i] = static_cast<std::uint8_t>(std::clamp(
                    std::floor((plane[i] - lo) * scale + 0.5f), 0.0f, 255.0f));
            }
        } else {
            std::fill(fm.values.begin(), fm.values.end(), std::uint8_t{128});
        }
        out.maps.push_back(std::move(fm));
    }

    int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(channels))));
    while (static_cast<std::size_t>(cols) * cols < channels) ++cols;
    while (cols > 1 && static_cast<std::size_t>(cols - 1) * (cols - 1) >= channels) --cols;
    out.columns = cols;
    out.rows = static_cast<int>((channels + static_cast<std::size_t>(cols) - 1) /
                                static_cast<std::size_t>(cols));
    out.grid = Image::create(cols * static_cast<int>(w), out.rows * static_cast<int>(h));
    for (std::size_t c = 0; c < channels; ++c) {
        const int tile_x = static_cast<int>(c) % cols * static_cast<int>(w);
        const int tile_y = static_cast<int>(c) / cols * static_cast<int>(h);
        const FeatureMap& fm = out.maps[c];
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x2 = 0; x2 < w; ++x2) {
                const std::uint8_t v = fm.values[y * w + x2];
                for (int ch = 0; ch < 3; ++ch) {
                    out.grid.at(tile_x + static_cast<int>(x2), tile_y + static_cast<int>(y), ch) =
                        v;
                }
            }
        }
    }
    return out;
}

std::string format_curves(const EpochLog& log) {
    if (log.epochs.empty()) throw ContractError("cannot export an empty epoch log");
    std::string out =
        "epoch,train_loss,val_loss,train_log_loss,val_log_loss,train_f1,val_f1,train_acc,val_"
        "acc\n";
    char buf[256];
    for (std::size_t i = 0; i < log.epochs.size(); ++i) {
        const MetricsRecord& tr = log.epochs[i].first;
        const MetricsRecord& va = log.epochs[i].second;
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                      static_cast<int>(i) + 1, tr.loss, va.loss, tr.log_loss, va.log_loss, tr.f1,
                      va.f1, tr.accuracy, va.accuracy);
        out += buf;
    }
    return out;
}

void export_curves(const EpochLog& log, const std::string& path) {
    const std::string text = format_curves(log);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot open '" + path + "' for writing");
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    f.flush();
    if (!f) throw DataError("failed writing curves to '" + path + "'");
}

OverfitReport overfit_report(const EpochLog& log, double margin) {
    if (log.epochs.empty()) throw ContractError("overfit_report: empty epoch log");
    if (!(margin >= 0.0)) throw ConfigError("overfit margin must be >= 0");
    OverfitReport r;
    r.margin = margin;
    r.best_epoch = log.best_epoch;
    if (r.best_epoch < 1 || static_cast<std::size_t>(r.best_epoch) > log.epochs.size()) {
        throw ContractError("epoch log has inconsistent best_epoch " +
                            std::to_string(r.best_epoch));
    }
    r.epochs_past_best = static_cast<int>(log.epochs.size()) - r.best_epoch;
    r.best_val_log_loss = log.epochs[static_cast<std::size_t>(r.best_epoch) - 1].second.log_loss;
    const MetricsRecord& final_tr = log.epochs.back().first;
    const MetricsRecord& final_va = log.epochs.back().second;
    r.final_val_log_loss = final_va.log_loss;
    r.val_minus_train_log_loss = final_va.log_loss - final_tr.log_loss;
    r.overfit = final_va.log_loss > r.best_val_log_loss * (1.0 + margin);
    return r;
}

std::string format_report(const EpochLog& log, double margin) {
    const OverfitReport r = overfit_report(log, margin);
    const MetricsRecord& final_tr = log.epochs.back().first;
    const MetricsRecord& final_va = log.epochs.back().second;
    char buf[640];
    std::snprintf(buf, sizeof(buf),
                  "best_epoch: %d\n"
                  "best_val_log_loss: %.6f\n"
                  "epochs_past_best: %d\n"
                  "final_train: loss %.6f, log_loss %.6f, f1 %.6f, acc %.6f\n"
                  "final_val: loss %.6f, log_loss %.6f, f1 %.6f, acc %.6f\n"
                  "val_minus_train_log_loss: %.6f\n"
                  "overfit_margin: %.6f\n"
                  "overfit: %s\n",
                  r.best_epoch, r.best_val_log_loss, r.epochs_past_best, final_tr.loss,
                  final_tr.log_loss, final_tr.f1, final_tr.accuracy, final_va.loss,
                  final_va.log_loss, final_va.f1, final_va.accuracy,
                  r.val_minus_train_log_loss, r.margin, r.overfit ? "yes" : "no");
    return buf;
}

}  // namespace fakegaze
