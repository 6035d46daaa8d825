#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fakegaze/autograd.hpp"
#include "fakegaze/tensor.hpp"

namespace fakegaze {

enum class Family { resnet, xception };
enum class Preset { mini, full };

const char* family_name(Family f);
const char* preset_name(Preset p);
Family parse_family(const std::string& s);
Preset parse_preset(const std::string& s);

// Which network to build. Widths, block layout, and head are pinned by
// (family, preset) — see make_graph in model.cpp for the exact layouts:
//   resnet/full:    16 bottleneck blocks (3-4-6-3), 48 convs + 2 dense
//   xception/full:  14 residual blocks, 36 convs (34 separable + 2 regular
//                   stem convs) + 2 dense
//   resnet/mini:    4 basic blocks, 8 convs + 2 dense, widths 8-16-32
//   xception/mini:  4 blocks of separable convs, 8 convs + 2 dense, same widths
struct ModelSpec {
    Family family = Family::resnet;
    Preset preset = Preset::mini;
    int input_channels = 3;
    int input_h = 32, input_w = 32;
    int head_hidden = 32;  // width of the first dense layer; second outputs 1 logit

    // Canonical description string; its FNV-1a 64-bit hash is the weight-file
    // fingerprint, so any change to the architecture invalidates old files.
    std::string canonical() const;
    std::uint64_t fingerprint() const;
};

ModelSpec make_spec(Family f, Preset p);

struct ConvDesc {
    int in_ch = 0, out_ch = 0;
    int k = 3, stride = 1, pad = 1;
    bool separable = false;
};

// One residual unit: conv(+bn) main path with relu between convs, plus a
// shortcut (identity, or a 1x1 projection conv + bn when shape changes),
// added before the block's final relu.
struct BlockDesc {
    std::vector<ConvDesc> main;
    bool has_proj = false;
    ConvDesc proj;

    bool identity_shortcut_valid() const {
        int stride = 1;
        for (const auto& c : main) stride *= c.stride;
        return main.front().in_ch == main.back().out_ch && stride == 1;
    }
};

struct GraphDef {
    std::vector<BlockDesc> blocks;
    int head_in = 0;  // channel width feeding global average pooling
};

GraphDef make_graph(const ModelSpec& spec);

// Walks the graph verifying every block is a valid residual unit (shortcut
// output shape equals main-path output shape). Throws ContractError on any
// inconsistency; returns the number of blocks walked.
int validate_graph(const ModelSpec& spec);

// (convolution layers on main paths, dense layers). A depthwise-separable
// conv counts as one layer; 1x1 projection shortcuts are not counted, the
// usual convention when naming ResNets by depth.
std::pair<int, int> count_layers(const ModelSpec& spec);

template <typename T>
struct NamedTensorT {
    std::string name;
    TensorT<T> tensor;
    bool trainable = true;
};

// Serializable snapshot of a model's full tensor table (trainables and
// batch-norm running statistics), always 32-bit floats on disk.
struct ModelWeights {
    std::uint64_t fingerprint = 0;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

enum class RunMode { training, inference };

// Observer for feature-map inspection: called with the 1-based conv ordinal
// and that layer's post-activation output (for a block's last conv, the
// block output after the residual add and relu).
template <typename T>
using CaptureFn = std::function<void(int conv_ordinal, const TensorT<T>& value)>;

template <typename T>
class ModelT {
public:
    // Deterministic initialization: He-uniform conv/dense weights, zero
    // biases, batch-norm scale 1 / shift 0 / running mean 0 / running var 1.
    ModelT(ModelSpec spec, std::uint64_t seed);

    const ModelSpec& spec() const { return spec_; }
    const GraphDef& graph() const { return graph_; }
    std::uint64_t fingerprint() const { return fingerprint_; }
    int conv_count() const { return conv_count_; }

    std::vector<NamedTensorT<T>>& table() { return table_; }
    const std::vector<NamedTensorT<T>>& table() const { return table_; }

    // Shared handles to the trainable tensors, in stable (forward) order.
    std::vector<TensorT<T>> trainable_tensors();
    std::vector<std::string> trainable_names() const;

    // Batched forward pass [N x C x H x W] -> logits [N x 1]. When
    // bound_trainables is supplied it must align with trainable_names() (the
    // training loop and grad_check bind leaves themselves); otherwise
    // parameters enter the tape as constants. Training mode updates batch-
    // norm running statistics.
    VarT<T> forward(TapeT<T>& tape, VarT<T> x, RunMode mode,
                    const std::vector<VarT<T>>* bound_trainables = nullptr,
                    const CaptureFn<T>& capture = nullptr);

    // Single-frame logit in inference mode; frame is [3 x H x W] or
    // [1 x 3 x H x W] and must match the spec input size.
    T forward_frame(const TensorT<T>& frame);

    ModelWeights snapshot() const;
    void restore(const ModelWeights& weights);

    // Test/inspection access by name; throws ContractError if absent.
    const TensorT<T>& tensor(const std::string& name) const;

private:
    ModelSpec spec_;
    GraphDef graph_;
    std::uint64_t fingerprint_ = 0;
    int conv_count_ = 0;
    std::vector<NamedTensorT<T>> table_;
    std::vector<std::size_t> trainable_idx_;
};

using Model = ModelT<float>;
using ModelD = ModelT<double>;

// Mean of per-frame logits pushed through a sigmoid — the multi-frame fusion
// rule. Exposed separately so the arithmetic has a direct oracle.
double mean_logit_probability(const std::vector<double>& logits);

// Samples n_frames indices with the dataset module's deterministic rule,
// runs each sampled frame through the model in inference mode, and fuses
// with mean_logit_probability.
template <typename T>
double predict_video(ModelT<T>& model, const std::vector<TensorT<T>>& frames, int n_frames);

struct EnsembleConfig {
    double resnet_weight = 1.0;
    double xception_weight = 1.0;
};

// Soft vote: normalized convex combination of the two probabilities.
double ensemble_predict(double p_resnet, double p_xception, const EnsembleConfig& cfg);

}  // namespace fakegaze
