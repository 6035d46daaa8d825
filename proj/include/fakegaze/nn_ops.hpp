#pragma once

#include <cstddef>

#include "fakegaze/tensor.hpp"

namespace fakegaze {

// Layer primitives as pure functions of (input, parameters). These are the
// inference-path entry points and the reference surface the test oracles
// target; the training path records the same underlying kernels on the
// autodiff tape (see autograd.hpp).
//
// Convolution here is cross-correlation (no kernel flip) over NCHW tensors
// with zero padding; output spatial size is floor((H + 2p - k)/s) + 1.

template <typename T>
struct Conv2dParamsT {
    TensorT<T> weights;  // [out_ch x in_ch x kh x kw]
    TensorT<T> bias;     // [out_ch]; default-constructed means "no bias"
    int stride_y = 1, stride_x = 1;
    int pad_y = 0, pad_x = 0;
};

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const Conv2dParamsT<T>& p);

// Depthwise separable convolution: a per-channel spatial filter (channel
// multiplier fixed at 1) followed by a 1x1 pointwise mix and bias. Stride and
// padding apply to the depthwise stage. The result is bit-identical to
// composing the two stages through conv2d.
template <typename T>
struct DepthwiseSeparableParamsT {
    TensorT<T> depthwise;  // [in_ch x kh x kw]
    TensorT<T> pointwise;  // [out_ch x in_ch x 1 x 1]
    TensorT<T> bias;       // [out_ch]; optional as above
    int stride_y = 1, stride_x = 1;
    int pad_y = 0, pad_x = 0;
};

template <typename T>
TensorT<T> depthwise_separable_conv(const TensorT<T>& x, const DepthwiseSeparableParamsT<T>& p);

enum class BatchNormMode { training, inference };

template <typename T>
struct BatchNormParamsT {
    TensorT<T> scale, shift;              // [ch]
    TensorT<T> running_mean, running_var; // [ch]
    T epsilon = T(1e-5);
    T momentum = T(0.1);
    BatchNormMode mode = BatchNormMode::training;
};

// Training mode normalizes with the biased batch variance over (N, H, W) and
// updates running stats as running = (1 - momentum) * running + momentum *
// batch (mean and biased variance alike). Inference mode uses only the
// running statistics.
template <typename T>
TensorT<T> batch_norm(const TensorT<T>& x, BatchNormParamsT<T>& p);

enum class Activation { relu, sigmoid };

template <typename T>
TensorT<T> pointwise_activation(const TensorT<T>& x, Activation kind);

// [N x C x H x W] -> [N x C] per-channel spatial mean.
template <typename T>
TensorT<T> global_avg_pool(const TensorT<T>& x);

template <typename T>
struct DenseParamsT {
    TensorT<T> weights;  // [out x in]
    TensorT<T> bias;     // [out]
};

// y = x * W^T + bias over [N x in] rows.
template <typename T>
TensorT<T> dense(const TensorT<T>& x, const DenseParamsT<T>& p);

// Parameter counts for a k x k layer mapping in_ch -> out_ch, used to assert
// the separable factorization is smaller whenever k > 1 and out_ch > 1.
std::size_t separable_param_count(std::size_t in_ch, std::size_t out_ch, std::size_t k);
std::size_t full_conv_param_count(std::size_t in_ch, std::size_t out_ch, std::size_t k);

using Conv2dParams = Conv2dParamsT<float>;
using DepthwiseSeparableParams = DepthwiseSeparableParamsT<float>;
using BatchNormParams = BatchNormParamsT<float>;
using DenseParams = DenseParamsT<float>;

}  // namespace fakegaze
