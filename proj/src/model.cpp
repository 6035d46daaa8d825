#include "fakegaze/model.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "fakegaze/dataset.hpp"
#include "fakegaze/errors.hpp"
#include "fakegaze/utils.hpp"

namespace fakegaze {

const char* family_name(Family f) {
    return f == Family::resnet ? "resnet" : "xception";
}

const char* preset_name(Preset p) {
    return p == Preset::mini ? "mini" : "full";
}

Family parse_family(const std::string& s) {
    if (s == "resnet") return Family::resnet;
    if (s == "xception") return Family::xception;
    throw ConfigError("unknown model family '" + s + "' (expected resnet or xception)");
}

Preset parse_preset(const std::string& s) {
    if (s == "mini") return Preset::mini;
    if (s == "full") return Preset::full;
    throw ConfigError("unknown preset '" + s + "' (expected mini or full)");
}

ModelSpec make_spec(Family f, Preset p) {
    ModelSpec spec;
    spec.family = f;
    spec.preset = p;
    spec.input_channels = 3;
    if (p == Preset::mini) {
        spec.input_h = spec.input_w = 32;
        spec.head_hidden = 32;
    } else {
        spec.input_h = spec.input_w = 64;
        spec.head_hidden = 256;
    }
    return spec;
}

namespace {

ConvDesc conv(int in_ch, int out_ch, int k, int stride, bool separable = false) {
    ConvDesc c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.k = k;
    c.stride = stride;
    c.pad = (k - 1) / 2;
    c.separable = separable;
    return c;
}

BlockDesc block(std::vector<ConvDesc> main) {
    BlockDesc b;
    b.main = std::move(main);
    if (!b.identity_shortcut_valid()) {
        int stride = 1;
        for (const auto& c : b.main) stride *= c.stride;
        b.has_proj = true;
        b.proj = conv(b.main.front().in_ch, b.main.back().out_ch, 1, stride);
    }
    return b;
}

GraphDef resnet_mini_graph() {
    GraphDef g;
    const int widths[4] = {8, 16, 32, 32};
    const int strides[4] = {1, 2, 2, 1};
    int in = 3;
    for (int i = 0; i < 4; ++i) {
        int out = widths[i];
        g.blocks.push_back(block({conv(in, out, 3, strides[i]), conv(out, out, 3, 1)}));
        in = out;
    }
    g.head_in = in;
    return g;
}

GraphDef xception_mini_graph() {
    GraphDef g;
    const int widths[4] = {8, 16, 32, 32};
    const int strides[4] = {1, 2, 2, 1};
    int in = 3;
    for (int i = 0; i < 4; ++i) {
        int out = widths[i];
        g.blocks.push_back(
            block({conv(in, out, 3, strides[i], true), conv(out, out, 3, 1, true)}));
        in = out;
    }
    g.head_in = in;
    return g;
}

// 16 bottleneck units in four stages of 3, 4, 6, 3 blocks. Each unit is
// 1x1 reduce -> 3x3 (carries the stage's stride in its first unit) ->
// 1x1 expand, so the main paths hold exactly 48 convolutions.
GraphDef resnet_full_graph() {
    GraphDef g;
    const int counts[4] = {3, 4, 6, 3};
    const int mids[4] = {64, 128, 256, 512};
    const int outs[4] = {256, 512, 1024, 2048};
    const int strides[4] = {1, 2, 2, 2};
    int in = 3;
    for (int s = 0; s < 4; ++s) {
        for (int b = 0; b < counts[s]; ++b) {
            int stride = b == 0 ? strides[s] : 1;
            g.blocks.push_back(block({conv(in, mids[s], 1, 1), conv(mids[s], mids[s], 3, stride),
                                      conv(mids[s], outs[s], 1, 1)}));
            in = outs[s];
        }
    }
    g.head_in = in;
    return g;
}

// 14 residual blocks: a two-conv stem (the only regular 3x3 convs), three
// downsampling entry blocks, eight width-728 middle blocks, a downsampling
// exit block, and a widening tail — 34 separable + 2 regular = 36 convs.
GraphDef xception_full_graph() {
    GraphDef g;
    g.blocks.push_back(block({conv(3, 32, 3, 2), conv(32, 64, 3, 1)}));
    const int entry[4] = {64, 128, 256, 728};
    for (int i = 0; i < 3; ++i) {
        g.blocks.push_back(
            block({conv(entry[i], entry[i + 1], 3, 1, true), conv(entry[i + 1], entry[i + 1], 3, 2, true)}));
    }
    for (int i = 0; i < 8; ++i) {
        g.blocks.push_back(block({conv(728, 728, 3, 1, true), conv(728, 728, 3, 1, true),
                                  conv(728, 728, 3, 1, true)}));
    }
    g.blocks.push_back(block({conv(728, 728, 3, 1, true), conv(728, 1024, 3, 2, true)}));
    g.blocks.push_back(block({conv(1024, 1536, 3, 1, true), conv(1536, 2048, 3, 1, true)}));
    g.head_in = 2048;
    return g;
}

std::string conv_sig(const ConvDesc& c) {
    std::ostringstream os;
    os << (c.separable ? 's' : 'c') << c.k << 'p' << c.pad << ':' << c.in_ch << '>' << c.out_ch
       << '/' << c.stride;
    return os.str();
}

std::string pname(int bi, const std::string& mid, const char* leaf) {
    return "b" + std::to_string(bi) + "/" + mid + "/" + leaf;
}

}  // namespace

GraphDef make_graph(const ModelSpec& spec) {
    if (spec.family == Family::resnet) {
        return spec.preset == Preset::mini ? resnet_mini_graph() : resnet_full_graph();
    }
    return spec.preset == Preset::mini ? xception_mini_graph() : xception_full_graph();
}

std::string ModelSpec::canonical() const {
    std::ostringstream os;
    os << "model|family=" << family_name(family) << "|preset=" << preset_name(preset)
       << "|input=" << input_channels << 'x' << input_h << 'x' << input_w << "|blocks=";
    GraphDef g = make_graph(*this);
    for (const auto& b : g.blocks) {
        os << '[';
        for (std::size_t i = 0; i < b.main.size(); ++i) {
            if (i) os << ';';
            os << conv_sig(b.main[i]);
        }
        os << (b.has_proj ? "+" + conv_sig(b.proj) : std::string("+id")) << ']';
    }
    os << "|gap|fc:" << g.head_in << '>' << head_hidden << ">1";
    return os.str();
}

std::uint64_t ModelSpec::fingerprint() const { return fnv1a64(canonical()); }

int validate_graph(const ModelSpec& spec) {
    GraphDef g = make_graph(spec);
    if (g.blocks.empty()) throw ContractError("model graph has no blocks");
    int in = spec.input_channels;
    for (std::size_t bi = 0; bi < g.blocks.size(); ++bi) {
        const BlockDesc& b = g.blocks[bi];
        const std::string where = "block " + std::to_string(bi) + ": ";
        if (b.main.empty()) throw ContractError(where + "empty main path");
        int ch = in;
        int stride = 1;
        for (const auto& c : b.main) {
            if (c.in_ch != ch) {
                throw ContractError(where + "conv expects " + std::to_string(c.in_ch) +
                                    " channels but receives " + std::to_string(ch));
            }
            if (c.pad != (c.k - 1) / 2) {
                throw ContractError(where + "conv padding does not preserve spatial size");
            }
            ch = c.out_ch;
            stride *= c.stride;
        }
        if (b.has_proj) {
            if (b.proj.in_ch != in || b.proj.out_ch != ch || b.proj.stride != stride) {
                throw ContractError(where + "projection shortcut shape mismatch");
            }
        } else if (in != ch || stride != 1) {
            throw ContractError(where + "identity shortcut shape mismatch");
        }
        in = ch;
    }
    if (g.head_in != in) throw ContractError("head width does not match final block output");
    return static_cast<int>(g.blocks.size());
}

std::pair<int, int> count_layers(const ModelSpec& spec) {
    GraphDef g = make_graph(spec);
    int convs = 0;
    for (const auto& b : g.blocks) convs += static_cast<int>(b.main.size());
    return {convs, 2};
}

template <typename T>
static void he_uniform(Rng& rng, TensorT<T>& t, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    T* p = t.data();
    for (std::size_t i = 0; i < t.numel(); ++i) p[i] = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
ModelT<T>::ModelT(ModelSpec spec, std::uint64_t seed)
    : spec_(spec), graph_(make_graph(spec)), fingerprint_(spec.fingerprint()) {
    validate_graph(spec_);
    conv_count_ = count_layers(spec_).first;
    Rng rng(seed);

    auto add = [&](std::string name, TensorT<T> t, bool trainable) {
        if (trainable) trainable_idx_.push_back(table_.size());
        table_.push_back(NamedTensorT<T>{std::move(name), std::move(t), trainable});
    };
    auto add_conv = [&](int bi, const std::string& tag, const ConvDesc& c) {
        const auto in = static_cast<std::size_t>(c.in_ch);
        const auto out = static_cast<std::size_t>(c.out_ch);
        const auto k = static_cast<std::size_t>(c.k);
        if (c.separable) {
            TensorT<T> dw({in, k, k});
            he_uniform(rng, dw, k * k);
            add(pname(bi, tag, "dw"), std::move(dw), true);
            TensorT<T> pw({out, in, 1, 1});
            he_uniform(rng, pw, in);
            add(pname(bi, tag, "pw"), std::move(pw), true);
        } else {
            TensorT<T> w({out, in, k, k});
            he_uniform(rng, w, in * k * k);
            add(pname(bi, tag, "w"), std::move(w), true);
        }
    };
    auto add_bn = [&](int bi, const std::string& tag, int ch) {
        const Shape s{static_cast<std::size_t>(ch)};
        add(pname(bi, tag, "scale"), TensorT<T>::full(s, T(1)), true);
        add(pname(bi, tag, "shift"), TensorT<T>(s), true);
        add(pname(bi, tag, "rmean"), TensorT<T>(s), false);
        add(pname(bi, tag, "rvar"), TensorT<T>::full(s, T(1)), false);
    };

    for (std::size_t bi = 0; bi < graph_.blocks.size(); ++bi) {
        const BlockDesc& b = graph_.blocks[bi];
        for (std::size_t ci = 0; ci < b.main.size(); ++ci) {
            const std::string tag = "conv" + std::to_string(ci);
            add_conv(static_cast<int>(bi), tag, b.main[ci]);
            add_bn(static_cast<int>(bi), "bn" + std::to_string(ci), b.main[ci].out_ch);
        }
        if (b.has_proj) {
            add_conv(static_cast<int>(bi), "proj", b.proj);
            add_bn(static_cast<int>(bi), "proj_bn", b.proj.out_ch);
        }
    }
    const auto head_in = static_cast<std::size_t>(graph_.head_in);
    const auto hidden = static_cast<std::size_t>(spec_.head_hidden);
    TensorT<T> w1({hidden, head_in});
    he_uniform(rng, w1, head_in);
    add("head/fc1/w", std::move(w1), true);
    add("head/fc1/b", TensorT<T>({hidden}), true);
    TensorT<T> w2({1, hidden});
    he_uniform(rng, w2, hidden);
    add("head/fc2/w", std::move(w2), true);
    add("head/fc2/b", TensorT<T>({1}), true);
}

template <typename T>
std::vector<TensorT<T>> ModelT<T>::trainable_tensors() {
    std::vector<TensorT<T>> out;
    out.reserve(trainable_idx_.size());
    for (std::size_t i : trainable_idx_) out.push_back(table_[i].tensor);
    return out;
}

template <typename T>
std::vector<std::string> ModelT<T>::trainable_names() const {
    std::vector<std::string> out;
    out.reserve(trainable_idx_.size());
    for (std::size_t i : trainable_idx_) out.push_back(table_[i].name);
    return out;
}

template <typename T>
VarT<T> ModelT<T>::forward(TapeT<T>& tape, VarT<T> x, RunMode mode,
                           const std::vector<VarT<T>>* bound_trainables,
                           const CaptureFn<T>& capture) {
    if (bound_trainables && bound_trainables->size() != trainable_idx_.size()) {
        throw ContractError("forward received " + std::to_string(bound_trainables->size()) +
                            " bound trainables but the model has " +
                            std::to_string(trainable_idx_.size()));
    }
    std::size_t pos = 0;
    std::size_t tseen = 0;
    auto param = [&](const std::string& name) -> VarT<T> {
        if (pos >= table_.size() || table_[pos].name != name || !table_[pos].trainable) {
            throw ContractError("model table walk out of sync at '" + name + "'");
        }
        VarT<T> v =
            bound_trainables ? (*bound_trainables)[tseen] : tape.constant(table_[pos].tensor);
        ++pos;
        ++tseen;
        return v;
    };
    auto buffer = [&](const std::string& name) -> TensorT<T>& {
        if (pos >= table_.size() || table_[pos].name != name || table_[pos].trainable) {
            throw ContractError("model table walk out of sync at '" + name + "'");
        }
        TensorT<T>& t = table_[pos].tensor;
        ++pos;
        return t;
    };

    const T eps = T(1e-5);
    // Running stats must track the current weights closely: an epoch is only a handful
    // of large batches here, and stale statistics make a freshly learned feature
    // invisible in inference mode long after the training-mode loss has converged.
    const T momentum = T(0.3);
    auto bn = [&](VarT<T> h, int bi, const std::string& tag) {
        VarT<T> scale = param(pname(bi, tag, "scale"));
        VarT<T> shift = param(pname(bi, tag, "shift"));
        TensorT<T>& rmean = buffer(pname(bi, tag, "rmean"));
        TensorT<T>& rvar = buffer(pname(bi, tag, "rvar"));
        return mode == RunMode::training
                   ? tape.batch_norm_train(h, scale, shift, rmean, rvar, eps, momentum)
                   : tape.batch_norm_infer(h, scale, shift, rmean, rvar, eps);
    };

    int ordinal = 0;
    for (std::size_t bj = 0; bj < graph_.blocks.size(); ++bj) {
        const int bi = static_cast<int>(bj);
        const BlockDesc& b = graph_.blocks[bj];
        VarT<T> in = x;
        VarT<T> h = x;
        for (std::size_t ci = 0; ci < b.main.size(); ++ci) {
            const ConvDesc& c = b.main[ci];
            const std::string tag = "conv" + std::to_string(ci);
            if (c.separable) {
                VarT<T> dw = param(pname(bi, tag, "dw"));
                VarT<T> pw = param(pname(bi, tag, "pw"));
                h = tape.separable_conv2d(h, dw, pw, std::nullopt, c.stride, c.stride, c.pad,
                                          c.pad);
            } else {
                VarT<T> w = param(pname(bi, tag, "w"));
                h = tape.conv2d(h, w, std::nullopt, c.stride, c.stride, c.pad, c.pad);
            }
            h = bn(h, bi, "bn" + std::to_string(ci));
            ++ordinal;
            if (ci + 1 < b.main.size()) {
                h = tape.relu(h);
                if (capture) capture(ordinal, tape.value(h));
            }
        }
        VarT<T> shortcut = in;
        if (b.has_proj) {
            VarT<T> w = param(pname(bi, "proj", "w"));
            shortcut = tape.conv2d(in, w, std::nullopt, b.proj.stride, b.proj.stride, b.proj.pad,
                                   b.proj.pad);
            shortcut = bn(shortcut, bi, "proj_bn");
        }
        h = tape.add(h, shortcut);
        h = tape.relu(h);
        if (capture) capture(ordinal, tape.value(h));
        x = h;
    }
    VarT<T> g = tape.global_avg_pool(x);
    // Fetch sequentially: argument evaluation order is unspecified, and the
    // table walk requires the declared order.
    VarT<T> fc1w = param("head/fc1/w");
    VarT<T> fc1b = param("head/fc1/b");
    VarT<T> h1 = tape.relu(tape.dense(g, fc1w, fc1b));
    VarT<T> fc2w = param("head/fc2/w");
    VarT<T> fc2b = param("head/fc2/b");
    VarT<T> logits = tape.dense(h1, fc2w, fc2b);
    if (pos != table_.size()) {
        throw ContractError("model table walk did not consume every parameter");
    }
    return logits;
}

template <typename T>
T ModelT<T>::forward_frame(const TensorT<T>& frame) {
    TensorT<T> input = frame;
    if (input.rank() == 3) {
        input = input.reshape({1, input.dim(0), input.dim(1), input.dim(2)});
    }
    const Shape expect{1, static_cast<std::size_t>(spec_.input_channels),
                       static_cast<std::size_t>(spec_.input_h),
                       static_cast<std::size_t>(spec_.input_w)};
    if (!input.defined() || input.shape() != expect) {
        throw ContractError("frame shape " +
                            (input.defined() ? shape_to_string(input.shape()) : "(undefined)") +
                            " does not match model input " + shape_to_string(expect));
    }
    TapeT<T> tape;
    VarT<T> x = tape.leaf(input, false);
    VarT<T> logits = forward(tape, x, RunMode::inference);
    return tape.value(logits).data()[0];
}

template <typename T>
ModelWeights ModelT<T>::snapshot() const {
    ModelWeights w;
    w.fingerprint = fingerprint_;
    w.tensors.reserve(table_.size());
    for (const auto& e : table_) {
        w.tensors.emplace_back(e.name, e.tensor.template cast<float>());
    }
    return w;
}

template <typename T>
void ModelT<T>::restore(const ModelWeights& weights) {
    if (weights.fingerprint != fingerprint_) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "weights fingerprint %016llx does not match model fingerprint %016llx",
                      static_cast<unsigned long long>(weights.fingerprint),
                      static_cast<unsigned long long>(fingerprint_));
        throw WeightsError(buf);
    }
    if (weights.tensors.size() != table_.size()) {
        throw WeightsError("weights hold " + std::to_string(weights.tensors.size()) +
                           " tensors but the model has " + std::to_string(table_.size()));
    }
    for (std::size_t i = 0; i < table_.size(); ++i) {
        const auto& [name, tensor] = weights.tensors[i];
        if (name != table_[i].name) {
            throw WeightsError("tensor " + std::to_string(i) + " is '" + name +
                               "' but the model expects '" + table_[i].name + "'");
        }
        if (!tensor.defined() || tensor.shape() != table_[i].tensor.shape()) {
            throw WeightsError("tensor '" + name + "' has shape " +
                               (tensor.defined() ? shape_to_string(tensor.shape()) : "(undefined)") +
                               " but the model expects " +
                               shape_to_string(table_[i].tensor.shape()));
        }
        table_[i].tensor = tensor.template cast<T>();
    }
}

template <typename T>
const TensorT<T>& ModelT<T>::tensor(const std::string& name) const {
    for (const auto& e : table_) {
        if (e.name == name) return e.tensor;
    }
    throw ContractError("model has no tensor named '" + name + "'");
}

double mean_logit_probability(const std::vector<double>& logits) {
    if (logits.empty()) throw ContractError("mean_logit_probability: empty logit list");
    double sum = 0.0;
    for (double v : logits) {
        if (!std::isfinite(v)) throw NumericError("non-finite logit in prediction");
        sum += v;
    }
    const double m = sum / static_cast<double>(logits.size());
    if (m >= 0.0) {
        return 1.0 / (1.0 + std::exp(-m));
    }
    const double e = std::exp(m);
    return e / (1.0 + e);
}

template <typename T>
double predict_video(ModelT<T>& model, const std::vector<TensorT<T>>& frames, int n_frames) {
    if (frames.empty()) throw ContractError("predict_video: empty frame list");
    if (n_frames < 1) throw ContractError("predict_video: n_frames must be >= 1");
    const ModelSpec& spec = model.spec();
    const Shape expect{static_cast<std::size_t>(spec.input_channels),
                       static_cast<std::size_t>(spec.input_h),
                       static_cast<std::size_t>(spec.input_w)};
    for (const auto& f : frames) {
        if (!f.defined() || f.shape() != expect) {
            throw ContractError("predict_video: frame shape does not match model input " +
                                shape_to_string(expect));
        }
    }
    const std::vector<int> idx = sample_frames(static_cast<int>(frames.size()), n_frames);
    const std::size_t n = idx.size();
    TensorT<T> batch({n, expect[0], expect[1], expect[2]});
    const std::size_t frame_elems = shape_numel(expect);
    for (std::size_t i = 0; i < n; ++i) {
        const T* src = frames[static_cast<std::size_t>(idx[i])].data();
        std::copy(src, src + frame_elems, batch.data() + i * frame_elems);
    }
    TapeT<T> tape;
    VarT<T> x = tape.leaf(batch, false);
    VarT<T> logits = model.forward(tape, x, RunMode::inference);
    TensorT<T> lv = tape.value(logits);
    std::vector<double> per_frame(n);
    for (std::size_t i = 0; i < n; ++i) per_frame[i] = static_cast<double>(lv.data()[i]);
    return mean_logit_probability(per_frame);
}

double ensemble_predict(double p_resnet, double p_xception, const EnsembleConfig& cfg) {
    auto check_prob = [](double p, const char* which) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0) {
            throw ContractError(std::string("ensemble_predict: ") + which +
                                " probability must lie in [0, 1]");
        }
    };
    check_prob(p_resnet, "resnet");
    check_prob(p_xception, "xception");
    if (!std::isfinite(cfg.resnet_weight) || !std::isfinite(cfg.xception_weight) ||
        cfg.resnet_weight < 0.0 || cfg.xception_weight < 0.0) {
        throw ConfigError("ensemble weights must be finite and non-negative");
    }
    const double total = cfg.resnet_weight + cfg.xception_weight;
    if (total <= 0.0) throw ConfigError("ensemble weights must not both be zero");
    return (cfg.resnet_weight * p_resnet + cfg.xception_weight * p_xception) / total;
}

template class ModelT<float>;
template class ModelT<double>;
template double predict_video<float>(ModelT<float>&, const std::vector<TensorT<float>>&, int);
template double predict_video<double>(ModelT<double>&, const std::vector<TensorT<double>>&, int);

}  // namespace fakegaze
