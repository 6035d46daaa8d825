#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fakegaze/loss_metrics.hpp"
#include "fakegaze/tensor.hpp"

namespace fakegaze {

// Lightweight handle to a tape slot. Only meaningful together with the tape
// that produced it.
template <typename T>
struct VarT {
    int slot = -1;
};

using Var = VarT<float>;
using VarD = VarT<double>;

// Reverse-mode autodiff tape. Operations execute eagerly and append their
// backward rule to the node list, so the list is topologically ordered by
// construction and backward() is a single reverse sweep. Gradients start at
// zero and accumulate additively, which handles fan-out (a value consumed
// twice receives both contributions).
//
// A tape is single-threaded and single-shot: one forward, one backward().
// Training builds a fresh tape per minibatch. Ops only record a backward node
// when an input requires gradients, so pure inference pays no tape cost.
template <typename T>
class TapeT {
public:
    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    // Registers an input. The tensor's storage is shared, not copied; leaf
    // values must not be mutated until the tape is dropped.
    VarT<T> leaf(const TensorT<T>& value, bool needs_grad);
    VarT<T> constant(const TensorT<T>& value) { return leaf(value, false); }

    // Returned tensors share the slot's storage (cheap copies).
    TensorT<T> value(VarT<T> v) const;
    TensorT<T> grad(VarT<T> v) const;
    bool needs_grad(VarT<T> v) const;

    // Reverse sweep from a scalar loss. Throws ContractError on a non-scalar
    // loss or when called twice on the same tape.
    void backward(VarT<T> loss);

    std::size_t node_count() const { return nodes_.size(); }

    // --- differentiable operations -------------------------------------
    VarT<T> matmul(VarT<T> a, VarT<T> b);
    VarT<T> add(VarT<T> a, VarT<T> b);  // same-shape elementwise
    VarT<T> relu(VarT<T> x);
    VarT<T> sigmoid(VarT<T> x);
    VarT<T> reshape(VarT<T> x, Shape shape);
    VarT<T> conv2d(VarT<T> x, VarT<T> w, std::optional<VarT<T>> bias, int stride_y, int stride_x,
                   int pad_y, int pad_x);
    // Depthwise stage only (weights [C x kh x kw], channel multiplier 1).
    VarT<T> depthwise_conv2d(VarT<T> x, VarT<T> w, int stride_y, int stride_x, int pad_y,
                             int pad_x);
    // Depthwise stage followed by 1x1 pointwise mix + bias; literally the
    // composition of the two ops above with conv2d.
    VarT<T> separable_conv2d(VarT<T> x, VarT<T> depthwise, VarT<T> pointwise,
                             std::optional<VarT<T>> bias, int stride_y, int stride_x, int pad_y,
                             int pad_x);
    // Training-mode batch norm; updates the caller's running statistics as a
    // side effect (they are buffers, not tape values).
    VarT<T> batch_norm_train(VarT<T> x, VarT<T> scale, VarT<T> shift, TensorT<T>& running_mean,
                             TensorT<T>& running_var, T epsilon, T momentum);
    VarT<T> batch_norm_infer(VarT<T> x, VarT<T> scale, VarT<T> shift,
                             const TensorT<T>& running_mean, const TensorT<T>& running_var,
                             T epsilon);
    VarT<T> global_avg_pool(VarT<T> x);
    VarT<T> dense(VarT<T> x, VarT<T> w, VarT<T> b);
    VarT<T> mean_all(VarT<T> x);  // scalar mean of all elements
    // Mean focal loss over a flat probability vector (see loss_metrics.hpp
    // for the per-sample formula and the alpha convention).
    VarT<T> focal_loss(VarT<T> probs, const std::vector<int>& labels, const FocalParams& params);

private:
    struct Slot {
        TensorT<T> value;
        TensorT<T> grad;  // allocated at backward() for needs-grad slots
        bool needs = false;
    };

    VarT<T> push(TensorT<T> value, bool needs);
    Slot& at(VarT<T> v);
    const Slot& at(VarT<T> v) const;

    std::vector<Slot> slots_;
    std::vector<std::function<void()>> nodes_;
    bool backward_done_ = false;
};

using Tape = TapeT<float>;
using TapeD = TapeT<double>;

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::vector<std::pair<std::string, double>> per_parameter_errors;
    bool passed = true;
};

template <typename T>
using ForwardFn = std::function<VarT<T>(TapeT<T>&, const std::vector<VarT<T>>&)>;

// Compares tape gradients against central finite differences
// (f(p+eps) - f(p-eps)) / (2 eps) for every scalar in every parameter.
// Relative error is |a - b| / max(1e-8, |a| + |b|); passed iff the maximum is
// below tolerance. The forward function must be deterministic — it is
// evaluated twice up front and a mismatch throws ContractError. Parameters
// are perturbed in place and restored. Meaningful tolerances require
// T = double.
template <typename T>
GradCheckReport grad_check(const ForwardFn<T>& forward, std::vector<TensorT<T>>& params,
                           double epsilon, double tolerance,
                           const std::vector<std::string>* names = nullptr);

}  // namespace fakegaze
