#include "fakegaze/nn_ops.hpp"

#include "kernels.hpp"

namespace fakegaze {

namespace {

template <typename T>
detail::ConvDims dims_for(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& bias,
                          int sy, int sx, int py, int px, const std::string& ctx) {
    if (w.rank() != 4) {
        throw ContractError(ctx + ": weights must be rank-4 OxCxKhxKw, got " +
                            shape_to_string(w.shape()));
    }
    if (sy < 1 || sx < 1 || py < 0 || px < 0) {
        throw ContractError(ctx + ": stride must be >= 1 and padding >= 0");
    }
    auto d = detail::conv_dims(x.shape(), w.dim(0), w.dim(1), w.dim(2), w.dim(3),
                               static_cast<std::size_t>(sy), static_cast<std::size_t>(sx),
                               static_cast<std::size_t>(py), static_cast<std::size_t>(px), ctx);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d.o)) {
        throw ContractError(ctx + ": bias shape " + shape_to_string(bias.shape()) +
                            " does not match " + std::to_string(d.o) + " output channels");
    }
    return d;
}

}  // namespace

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const Conv2dParamsT<T>& p) {
    const auto d = dims_for(x, p.weights, p.bias, p.stride_y, p.stride_x, p.pad_y, p.pad_x,
                            "conv2d");
    TensorT<T> y({d.n, d.o, d.ho, d.wo});
    detail::ConvScratch<T> s;
    detail::conv_fwd<T>(x.data(), p.weights.data(), p.bias.defined() ? p.bias.data() : nullptr, d,
                        y.data(), s);
    return y;
}

template <typename T>
TensorT<T> depthwise_separable_conv(const TensorT<T>& x, const DepthwiseSeparableParamsT<T>& p) {
    if (p.depthwise.rank() != 3) {
        throw ContractError("depthwise stage: depthwise weights must be rank-3 CxKhxKw, got " +
                            shape_to_string(p.depthwise.shape()));
    }
    if (x.rank() != 4) {
        throw ContractError("depthwise stage: input must be rank-4 NxCxHxW, got " +
                            shape_to_string(x.shape()));
    }
    const std::size_t c = p.depthwise.dim(0);
    if (p.stride_y < 1 || p.stride_x < 1 || p.pad_y < 0 || p.pad_x < 0) {
        throw ContractError("depthwise stage: stride must be >= 1 and padding >= 0");
    }
    auto d = detail::conv_dims(x.shape(), c, c, p.depthwise.dim(1), p.depthwise.dim(2),
                               static_cast<std::size_t>(p.stride_y),
                               static_cast<std::size_t>(p.stride_x),
                               static_cast<std::size_t>(p.pad_y),
                               static_cast<std::size_t>(p.pad_x), "depthwise stage");
    TensorT<T> mid({d.n, d.c, d.ho, d.wo});
    detail::ConvScratch<T> s;
    detail::depthwise_fwd<T>(x.data(), p.depthwise.data(), d, mid.data(), s);

    if (p.pointwise.rank() != 4 || p.pointwise.dim(2) != 1 || p.pointwise.dim(3) != 1) {
        throw ContractError("pointwise stage: weights must be rank-4 OxCx1x1, got " +
                            shape_to_string(p.pointwise.shape()));
    }
    Conv2dParamsT<T> pw;
    pw.weights = p.pointwise;
    pw.bias = p.bias;
    try {
        return conv2d(mid, pw);
    } catch (const ContractError& e) {
        throw ContractError(std::string("pointwise stage: ") + e.what());
    }
}

template <typename T>
TensorT<T> batch_norm(const TensorT<T>& x, BatchNormParamsT<T>& p) {
    if (x.rank() != 4) {
        throw ContractError("batch_norm: input must be rank-4 NxCxHxW, got " +
                            shape_to_string(x.shape()));
    }
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    for (const TensorT<T>* t : {&p.scale, &p.shift, &p.running_mean, &p.running_var}) {
        if (t->rank() != 1 || t->dim(0) != c) {
            throw ContractError("batch_norm: parameter shape " + shape_to_string(t->shape()) +
                                " does not match " + std::to_string(c) + " channels");
        }
    }
    if (!(p.epsilon > T(0))) throw ContractError("batch_norm: epsilon must be > 0");
    TensorT<T> y(x.shape());
    if (p.mode == BatchNormMode::inference) {
        detail::bn_infer_fwd<T>(x.data(), n, c, hw, p.scale.data(), p.shift.data(),
                                p.running_mean.data(), p.running_var.data(), p.epsilon, y.data());
        return y;
    }
    if (!(p.momentum > T(0) && p.momentum < T(1))) {
        throw ContractError("batch_norm: momentum must be in (0, 1)");
    }
    TensorT<T> xhat(x.shape());
    std::vector<T> invstd(c);
    std::vector<double> bmean(c), bvar(c);
    detail::bn_train_fwd<T>(x.data(), n, c, hw, p.scale.data(), p.shift.data(), p.epsilon,
                            y.data(), xhat.data(), invstd.data(), bmean.data(), bvar.data());
    T* rm = p.running_mean.data();
    T* rv = p.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        rm[ch] = (T(1) - p.momentum) * rm[ch] + p.momentum * static_cast<T>(bmean[ch]);
        rv[ch] = (T(1) - p.momentum) * rv[ch] + p.momentum * static_cast<T>(bvar[ch]);
    }
    return y;
}

template <typename T>
TensorT<T> pointwise_activation(const TensorT<T>& x, Activation kind) {
    TensorT<T> y(x.shape());
    const T* in = x.data();
    T* out = y.data();
    const std::size_t n = x.numel();
    if (kind == Activation::relu) {
        for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = detail::sigmoid_scalar(in[i]);
    }
    return y;
}

template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x) {
    if (x.rank() != 4) {
        throw ContractError("global_avg_pool: input must be rank-4 NxCxHxW, got " +
                            shape_to_string(x.shape()));
    }
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    TensorT<T> y({n, c});
    const T* in = x.data();
    T* out = y.data();
    for (std::size_t i = 0; i < n * c; ++i) {
        double acc = 0.0;
        const T* p = in + i * hw;
        for (std::size_t j = 0; j < hw; ++j) acc += static_cast<double>(p[j]);
        out[i] = static_cast<T>(acc / static_cast<double>(hw));
    }
    return y;
}

template <typename T>
TensorT<T> dense(const TensorT<T>& x, const DenseParamsT<T>& p) {
    if (x.rank() != 2 || p.weights.rank() != 2) {
        throw ContractError("dense: input and weights must be rank-2, got " +
                            shape_to_string(x.shape()) + " and " +
                            shape_to_string(p.weights.shape()));
    }
    const std::size_t n = x.dim(0), in = x.dim(1), out = p.weights.dim(0);
    if (p.weights.dim(1) != in) {
        throw ContractError("dense: input width " + std::to_string(in) +
                            " does not match weights " + shape_to_string(p.weights.shape()));
    }
    if (p.bias.defined() && (p.bias.rank() != 1 || p.bias.dim(0) != out)) {
        throw ContractError("dense: bias shape " + shape_to_string(p.bias.shape()) +
                            " does not match " + std::to_string(out) + " outputs");
    }
    TensorT<T> y({n, out});
    std::vector<T> wt(in * out);
    transpose<T>(out, in, p.weights.data(), wt.data());
    gemm<T>(n, in, out, x.data(), wt.data(), y.data(), false);
    if (p.bias.defined()) {
        T* yp = y.data();
        const T* b = p.bias.data();
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t cidx = 0; cidx < out; ++cidx) yp[r * out + cidx] += b[cidx];
        }
    }
    return y;
}

std::size_t separable_param_count(std::size_t in_ch, std::size_t out_ch, std::size_t k) {
    return in_ch * k * k + in_ch * out_ch + out_ch;
}

std::size_t full_conv_param_count(std::size_t in_ch, std::size_t out_ch, std::size_t k) {
    return out_ch * in_ch * k * k + out_ch;
}

#define FAKEGAZE_INSTANTIATE(T)                                                               \
    template TensorT<T> conv2d<T>(const TensorT<T>&, const Conv2dParamsT<T>&);                \
    template TensorT<T> depthwise_separable_conv<T>(const TensorT<T>&,                        \
                                                    const DepthwiseSeparableParamsT<T>&);     \
    template TensorT<T> batch_norm<T>(const TensorT<T>&, BatchNormParamsT<T>&);               \
    template TensorT<T> pointwise_activation<T>(const TensorT<T>&, Activation);               \
    template TensorT<T> global_avg_pool<T>(const TensorT<T>&);                                \
    template TensorT<T> dense<T>(const TensorT<T>&, const DenseParamsT<T>&);

FAKEGAZE_INSTANTIATE(float)
FAKEGAZE_INSTANTIATE(double)
#undef FAKEGAZE_INSTANTIATE

}  // namespace fakegaze
