#include "fakegaze/autograd.hpp"

#include <cmath>

#include "kernels.hpp"

namespace fakegaze {

template <typename T>
VarT<T> TapeT<T>::push(TensorT<T> value, bool needs) {
    slots_.push_back(Slot{std::move(value), TensorT<T>(), needs});
    return VarT<T>{static_cast<int>(slots_.size()) - 1};
}

template <typename T>
typename TapeT<T>::Slot& TapeT<T>::at(VarT<T> v) {
    if (v.slot < 0 || v.slot >= static_cast<int>(slots_.size())) {
        throw ContractError("variable does not belong to this tape");
    }
    return slots_[static_cast<std::size_t>(v.slot)];
}

template <typename T>
const typename TapeT<T>::Slot& TapeT<T>::at(VarT<T> v) const {
    if (v.slot < 0 || v.slot >= static_cast<int>(slots_.size())) {
        throw ContractError("variable does not belong to this tape");
    }
    return slots_[static_cast<std::size_t>(v.slot)];
}

template <typename T>
VarT<T> TapeT<T>::leaf(const TensorT<T>& value, bool needs_grad) {
    if (!value.defined()) throw ContractError("leaf() on an undefined tensor");
    return push(value, needs_grad);
}

template <typename T>
TensorT<T> TapeT<T>::value(VarT<T> v) const {
    return at(v).value;
}

template <typename T>
TensorT<T> TapeT<T>::grad(VarT<T> v) const {
    const Slot& s = at(v);
    if (!backward_done_) throw ContractError("grad() before backward()");
    if (!s.needs) throw ContractError("grad() of a variable that does not require gradients");
    return s.grad;
}

template <typename T>
bool TapeT<T>::needs_grad(VarT<T> v) const {
    return at(v).needs;
}

template <typename T>
void TapeT<T>::backward(VarT<T> loss) {
    if (backward_done_) {
        throw ContractError("backward() called twice on the same tape; run a new forward first");
    }
    const Slot& ls = at(loss);
    if (ls.value.numel() != 1) {
        throw ContractError("backward() requires a scalar loss, got shape " +
                            shape_to_string(ls.value.shape()));
    }
    for (Slot& s : slots_) {
        if (s.needs) s.grad = TensorT<T>(s.value.shape());  // zero-initialized
    }
    backward_done_ = true;  // set before the sweep so grad() works inside closures
    Slot& lslot = at(loss);
    if (lslot.needs) lslot.grad.data()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ---------------------------------------------------------------------------
// ops

template <typename T>
VarT<T> TapeT<T>::matmul(VarT<T> a, VarT<T> b) {
    const TensorT<T> av = at(a).value, bv = at(b).value;
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        throw ContractError("matmul: incompatible shapes " + shape_to_string(av.shape()) + " x " +
                            shape_to_string(bv.shape()));
    }
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    TensorT<T> c({m, n});
    gemm<T>(m, k, n, av.data(), bv.data(), c.data(), false);
    const bool na = at(a).needs, nb = at(b).needs;
    VarT<T> out = push(std::move(c), na || nb);
    if (na || nb) {
        const int ia = a.slot, ib = b.slot, ic = out.slot;
        nodes_.push_back([this, ia, ib, ic, m, k, n, na, nb, av, bv]() {
            const T* dc = slots_[ic].grad.data();
            if (na) {
                std::vector<T> bt(n * k);
                transpose<T>(k, n, bv.data(), bt.data());
                gemm<T>(m, n, k, dc, bt.data(), slots_[ia].grad.data(), true);
            }
            if (nb) gemm_tn_acc<T>(k, m, n, av.data(), dc, slots_[ib].grad.data());
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::add(VarT<T> a, VarT<T> b) {
    const TensorT<T> av = at(a).value, bv = at(b).value;
    if (!av.same_shape(bv)) {
        throw ContractError("add: shape mismatch " + shape_to_string(av.shape()) + " vs " +
                            shape_to_string(bv.shape()));
    }
    TensorT<T> c(av.shape());
    const T* ap = av.data();
    const T* bp = bv.data();
    T* cp = c.data();
    const std::size_t count = av.numel();
    for (std::size_t i = 0; i < count; ++i) cp[i] = ap[i] + bp[i];
    const bool na = at(a).needs, nb = at(b).needs;
    VarT<T> out = push(std::move(c), na || nb);
    if (na || nb) {
        const int ia = a.slot, ib = b.slot, ic = out.slot;
        nodes_.push_back([this, ia, ib, ic, count, na, nb]() {
            const T* dc = slots_[ic].grad.data();
            if (na) {
                T* da = slots_[ia].grad.data();
                for (std::size_t i = 0; i < count; ++i) da[i] += dc[i];
            }
            if (nb) {
                T* db = slots_[ib].grad.data();
                for (std::size_t i = 0; i < count; ++i) db[i] += dc[i];
            }
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::relu(VarT<T> x) {
    const TensorT<T> xv = at(x).value;
    TensorT<T> y(xv.shape());
    const T* in = xv.data();
    T* outp = y.data();
    const std::size_t count = xv.numel();
    for (std::size_t i = 0; i < count; ++i) outp[i] = in[i] > T(0) ? in[i] : T(0);
    VarT<T> out = push(std::move(y), at(x).needs);
    if (at(x).needs) {
        const int ix = x.slot, iy = out.slot;
        nodes_.push_back([this, ix, iy, count, xv]() {
            const T* dy = slots_[iy].grad.data();
            const T* in2 = xv.data();
            T* dx = slots_[ix].grad.data();
            for (std::size_t i = 0; i < count; ++i) {
                if (in2[i] > T(0)) dx[i] += dy[i];
            }
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::sigmoid(VarT<T> x) {
    const TensorT<T> xv = at(x).value;
    TensorT<T> y(xv.shape());
    const T* in = xv.data();
    T* outp = y.data();
    const std::size_t count = xv.numel();
    for (std::size_t i = 0; i < count; ++i) outp[i] = detail::sigmoid_scalar(in[i]);
    const TensorT<T> yv = y;  // shares storage; saved for backward
    VarT<T> out = push(std::move(y), at(x).needs);
    if (at(x).needs) {
        const int ix = x.slot, iy = out.slot;
        nodes_.push_back([this, ix, iy, count, yv]() {
            const T* dy = slots_[iy].grad.data();
            const T* s = yv.data();
            T* dx = slots_[ix].grad.data();
            for (std::size_t i = 0; i < count; ++i) dx[i] += dy[i] * s[i] * (T(1) - s[i]);
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::reshape(VarT<T> x, Shape shape) {
    const TensorT<T> xv = at(x).value;
    TensorT<T> y = xv.reshape(std::move(shape));
    VarT<T> out = push(std::move(y), at(x).needs);
    if (at(x).needs) {
        const int ix = x.slot, iy = out.slot;
        const std::size_t count = xv.numel();
        nodes_.push_back([this, ix, iy, count]() {
            const T* dy = slots_[iy].grad.data();
            T* dx = slots_[ix].grad.data();
            for (std::size_t i = 0; i < count; ++i) dx[i] += dy[i];
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::conv2d(VarT<T> x, VarT<T> w, std::optional<VarT<T>> bias, int stride_y,
                         int stride_x, int pad_y, int pad_x) {
    const TensorT<T> xv = at(x).value, wv = at(w).value;
    if (wv.rank() != 4) {
        throw ContractError("conv2d: weights must be rank-4 OxCxKhxKw, got " +
                            shape_to_string(wv.shape()));
    }
    if (stride_y < 1 || stride_x < 1 || pad_y < 0 || pad_x < 0) {
        throw ContractError("conv2d: stride must be >= 1 and padding >= 0");
    }
    const auto d = detail::conv_dims(
        xv.shape(), wv.dim(0), wv.dim(1), wv.dim(2), wv.dim(3),
        static_cast<std::size_t>(stride_y), static_cast<std::size_t>(stride_x),
        static_cast<std::size_t>(pad_y), static_cast<std::size_t>(pad_x), "conv2d");
    TensorT<T> bv;
    if (bias) {
        bv = at(*bias).value;
        if (bv.rank() != 1 || bv.dim(0) != d.o) {
            throw ContractError("conv2d: bias shape " + shape_to_string(bv.shape()) +
                                " does not match " + std::to_string(d.o) + " output channels");
        }
    }
    TensorT<T> y({d.n, d.o, d.ho, d.wo});
    detail::ConvScratch<T> scratch;
    detail::conv_fwd<T>(xv.data(), wv.data(), bv.defined() ? bv.data() : nullptr, d, y.data(),
                        scratch);
    const bool nx = at(x).needs, nw = at(w).needs;
    const bool nb = bias && at(*bias).needs;
    VarT<T> out = push(std::move(y), nx || nw || nb);
    if (nx || nw || nb) {
        const int ix = x.slot, iw = w.slot, iy = out.slot;
        const int ib = bias ? bias->slot : -1;
        nodes_.push_back([this, ix, iw, ib, iy, d, nx, nw, nb, xv, wv]() {
            detail::ConvScratch<T> s;
            const T* dy = slots_[iy].grad.data();
            detail::conv_bwd<T>(xv.data(), wv.data(), dy, d,
                                nx ? slots_[ix].grad.data() : nullptr,
                                nw ? slots_[iw].grad.data() : nullptr,
                                nb ? slots_[ib].grad.data() : nullptr, s);
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::depthwise_conv2d(VarT<T> x, VarT<T> w, int stride_y, int stride_x, int pad_y,
                                   int pad_x) {
    const TensorT<T> xv = at(x).value, wv = at(w).value;
    if (wv.rank() != 3) {
        throw ContractError("depthwise stage: weights must be rank-3 CxKhxKw, got " +
                            shape_to_string(wv.shape()));
    }
    if (stride_y < 1 || stride_x < 1 || pad_y < 0 || pad_x < 0) {
        throw ContractError("depthwise stage: stride must be >= 1 and padding >= 0");
    }
    const auto d = detail::conv_dims(
        xv.shape(), wv.dim(0), wv.dim(0), wv.dim(1), wv.dim(2),
        static_cast<std::size_t>(stride_y), static_cast<std::size_t>(stride_x),
        static_cast<std::size_t>(pad_y), static_cast<std::size_t>(pad_x), "depthwise stage");
    TensorT<T> y({d.n, d.c, d.ho, d.wo});
    detail::ConvScratch<T> scratch;
    detail::depthwise_fwd<T>(xv.data(), wv.data(), d, y.data(), scratch);
    const bool nx = at(x).needs, nw = at(w).needs;
    VarT<T> out = push(std::move(y), nx || nw);
    if (nx || nw) {
        const int ix = x.slot, iw = w.slot, iy = out.slot;
        nodes_.push_back([this, ix, iw, iy, d, nx, nw, xv, wv]() {
            detail::ConvScratch<T> s;
            const T* dy = slots_[iy].grad.data();
            detail::depthwise_bwd<T>(xv.data(), wv.data(), dy, d,
                                     nx ? slots_[ix].grad.data() : nullptr,
                                     nw ? slots_[iw].grad.data() : nullptr, s);
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::separable_conv2d(VarT<T> x, VarT<T> depthwise, VarT<T> pointwise,
                                   std::optional<VarT<T>> bias, int stride_y, int stride_x,
                                   int pad_y, int pad_x) {
    VarT<T> mid = depthwise_conv2d(x, depthwise, stride_y, stride_x, pad_y, pad_x);
    try {
        return conv2d(mid, pointwise, bias, 1, 1, 0, 0);
    } catch (const ContractError& e) {
        throw ContractError(std::string("pointwise stage: ") + e.what());
    }
}

template <typename T>
VarT<T> TapeT<T>::batch_norm_train(VarT<T> x, VarT<T> scale, VarT<T> shift,
                                   TensorT<T>& running_mean, TensorT<T>& running_var, T epsilon,
                                   T momentum) {
    const TensorT<T> xv = at(x).value, sv = at(scale).value, bv = at(shift).value;
    if (xv.rank() != 4) {
        throw ContractError("batch_norm: input must be rank-4 NxCxHxW, got " +
                            shape_to_string(xv.shape()));
    }
    const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    if (sv.numel() != c || bv.numel() != c || running_mean.numel() != c ||
        running_var.numel() != c) {
        throw ContractError("batch_norm: parameter size does not match " + std::to_string(c) +
                            " channels");
    }
    if (!(epsilon > T(0)) || !(momentum > T(0) && momentum < T(1))) {
        throw ContractError("batch_norm: epsilon must be > 0 and momentum in (0, 1)");
    }
    TensorT<T> y(xv.shape());
    TensorT<T> xhat(xv.shape());
    TensorT<T> invstd({c});
    std::vector<double> bmean(c), bvar(c);
    detail::bn_train_fwd<T>(xv.data(), n, c, hw, sv.data(), bv.data(), epsilon, y.data(),
                            xhat.data(), invstd.data(), bmean.data(), bvar.data());
    T* rm = running_mean.data();
    T* rv = running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        rm[ch] = (T(1) - momentum) * rm[ch] + momentum * static_cast<T>(bmean[ch]);
        rv[ch] = (T(1) - momentum) * rv[ch] + momentum * static_cast<T>(bvar[ch]);
    }
    const bool nx = at(x).needs, ns = at(scale).needs, nb = at(shift).needs;
    VarT<T> out = push(std::move(y), nx || ns || nb);
    if (nx || ns || nb) {
        const int ix = x.slot, is = scale.slot, ib = shift.slot, iy = out.slot;
        nodes_.push_back([this, ix, is, ib, iy, n, c, hw, nx, ns, nb, xhat, invstd, sv]() {
            const T* dy = slots_[iy].grad.data();
            detail::bn_train_bwd<T>(dy, xhat.data(), invstd.data(), sv.data(), n, c, hw,
                                    nx ? slots_[ix].grad.data() : nullptr,
                                    ns ? slots_[is].grad.data() : nullptr,
                                    nb ? slots_[ib].grad.data() : nullptr);
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::batch_norm_infer(VarT<T> x, VarT<T> scale, VarT<T> shift,
                                   const TensorT<T>& running_mean, const TensorT<T>& running_var,
                                   T epsilon) {
    const TensorT<T> xv = at(x).value, sv = at(scale).value, bv = at(shift).value;
    if (xv.rank() != 4) {
        throw ContractError("batch_norm: input must be rank-4 NxCxHxW, got " +
                            shape_to_string(xv.shape()));
    }
    const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    if (sv.numel() != c || bv.numel() != c || running_mean.numel() != c ||
        running_var.numel() != c) {
        throw ContractError("batch_norm: parameter size does not match " + std::to_string(c) +
                            " channels");
    }
    TensorT<T> y(xv.shape());
    detail::bn_infer_fwd<T>(xv.data(), n, c, hw, sv.data(), bv.data(), running_mean.data(),
                            running_var.data(), epsilon, y.data());
    const bool nx = at(x).needs, ns = at(scale).needs, nb = at(shift).needs;
    VarT<T> out = push(std::move(y), nx || ns || nb);
    if (nx || ns || nb) {
        const int ix = x.slot, is = scale.slot, ib = shift.slot, iy = out.slot;
        const TensorT<T> rm = running_mean.clone();
        const TensorT<T> rv = running_var.clone();
        const T eps = epsilon;
        nodes_.push_back([this, ix, is, ib, iy, n, c, hw, nx, ns, nb, xv, sv, rm, rv, eps]() {
            const T* dy = slots_[iy].grad.data();
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T istd = static_cast<T>(
                    1.0 / std::sqrt(static_cast<double>(rv.data()[ch]) + static_cast<double>(eps)));
                const T mu = rm.data()[ch];
                const T g = sv.data()[ch] * istd;
                double dsc = 0.0, dsh = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t base = (i * c + ch) * hw;
                    for (std::size_t j = 0; j < hw; ++j) {
                        const T dyv = dy[base + j];
                        if (nx) slots_[ix].grad.data()[base + j] += dyv * g;
                        dsc += static_cast<double>(dyv) *
                               static_cast<double>((xv.data()[base + j] - mu) * istd);
                        dsh += static_cast<double>(dyv);
                    }
                }
                if (ns) slots_[is].grad.data()[ch] += static_cast<T>(dsc);
                if (nb) slots_[ib].grad.data()[ch] += static_cast<T>(dsh);
            }
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::global_avg_pool(VarT<T> x) {
    const TensorT<T> xv = at(x).value;
    if (xv.rank() != 4) {
        throw ContractError("global_avg_pool: input must be rank-4 NxCxHxW, got " +
                            shape_to_string(xv.shape()));
    }
    const std::size_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    TensorT<T> y({n, c});
    const T* in = xv.data();
    T* outp = y.data();
    for (std::size_t i = 0; i < n * c; ++i) {
        double acc = 0.0;
        const T* p = in + i * hw;
        for (std::size_t j = 0; j < hw; ++j) acc += static_cast<double>(p[j]);
        outp[i] = static_cast<T>(acc / static_cast<double>(hw));
    }
    VarT<T> out = push(std::move(y), at(x).needs);
    if (at(x).needs) {
        const int ix = x.slot, iy = out.slot;
        nodes_.push_back([this, ix, iy, n, c, hw]() {
            const T* dy = slots_[iy].grad.data();
            T* dx = slots_[ix].grad.data();
            const T inv = T(1) / static_cast<T>(hw);
            for (std::size_t i = 0; i < n * c; ++i) {
                const T g = dy[i] * inv;
                T* p = dx + i * hw;
                for (std::size_t j = 0; j < hw; ++j) p[j] += g;
            }
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::dense(VarT<T> x, VarT<T> w, VarT<T> b) {
    const TensorT<T> xv = at(x).value, wv = at(w).value, bv = at(b).value;
    if (xv.rank() != 2 || wv.rank() != 2 || xv.dim(1) != wv.dim(1)) {
        throw ContractError("dense: input " + shape_to_string(xv.shape()) +
                            " does not match weights " + shape_to_string(wv.shape()));
    }
    const std::size_t n = xv.dim(0), in = xv.dim(1), outw = wv.dim(0);
    if (bv.rank() != 1 || bv.dim(0) != outw) {
        throw ContractError("dense: bias shape " + shape_to_string(bv.shape()) +
                            " does not match " + std::to_string(outw) + " outputs");
    }
    TensorT<T> y({n, outw});
    std::vector<T> wt(in * outw);
    transpose<T>(outw, in, wv.data(), wt.data());
    gemm<T>(n, in, outw, xv.data(), wt.data(), y.data(), false);
    {
        T* yp = y.data();
        const T* bp = bv.data();
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t cidx = 0; cidx < outw; ++cidx) yp[r * outw + cidx] += bp[cidx];
        }
    }
    const bool nx = at(x).needs, nw = at(w).needs, nb = at(b).needs;
    VarT<T> out = push(std::move(y), nx || nw || nb);
    if (nx || nw || nb) {
        const int ix = x.slot, iw = w.slot, ib = b.slot, iy = out.slot;
        nodes_.push_back([this, ix, iw, ib, iy, n, in, outw, nx, nw, nb, xv, wv]() {
            const T* dy = slots_[iy].grad.data();
            if (nx) gemm<T>(n, outw, in, dy, wv.data(), slots_[ix].grad.data(), true);
            if (nw) gemm_tn_acc<T>(outw, n, in, dy, xv.data(), slots_[iw].grad.data());
            if (nb) {
                T* db = slots_[ib].grad.data();
                for (std::size_t cidx = 0; cidx < outw; ++cidx) {
                    T acc = 0;
                    for (std::size_t r = 0; r < n; ++r) acc += dy[r * outw + cidx];
                    db[cidx] += acc;
                }
            }
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::mean_all(VarT<T> x) {
    const TensorT<T> xv = at(x).value;
    const std::size_t count = xv.numel();
    double acc = 0.0;
    const T* in = xv.data();
    for (std::size_t i = 0; i < count; ++i) acc += static_cast<double>(in[i]);
    TensorT<T> y = TensorT<T>::scalar(static_cast<T>(acc / static_cast<double>(count)));
    VarT<T> out = push(std::move(y), at(x).needs);
    if (at(x).needs) {
        const int ix = x.slot, iy = out.slot;
        nodes_.push_back([this, ix, iy, count]() {
            const T g = slots_[iy].grad.data()[0] / static_cast<T>(count);
            T* dx = slots_[ix].grad.data();
            for (std::size_t i = 0; i < count; ++i) dx[i] += g;
        });
    }
    return out;
}

template <typename T>
VarT<T> TapeT<T>::focal_loss(VarT<T> probs, const std::vector<int>& labels,
                             const FocalParams& params) {
    params.validate();
    const TensorT<T> pv = at(probs).value;
    const std::size_t n = pv.numel();
    if (n == 0) throw ContractError("focal_loss: empty probabilities");
    if (labels.size() != n) {
        throw ContractError("focal_loss: probs length " + std::to_string(n) +
                            " does not match labels length " + std::to_string(labels.size()));
    }
    const T gamma = static_cast<T>(params.gamma);
    const T alpha = static_cast<T>(params.alpha);
    const T eps = static_cast<T>(params.clamp_epsilon);
    double acc = 0.0;
    std::vector<T> dp(n);
    const T* p = pv.data();
    for (std::size_t i = 0; i < n; ++i) {
        if (labels[i] != 0 && labels[i] != 1) {
            throw ContractError("focal_loss: labels must be 0 or 1");
        }
        const auto term = focal_term<T>(p[i], labels[i], gamma, alpha, eps);
        acc += static_cast<double>(term.loss);
        dp[i] = term.dloss_dp;
    }
    TensorT<T> y = TensorT<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
    VarT<T> out = push(std::move(y), at(probs).needs);
    if (at(probs).needs) {
        const int ip = probs.slot, iy = out.slot;
        auto derivs = std::make_shared<std::vector<T>>(std::move(dp));
        nodes_.push_back([this, ip, iy, n, derivs]() {
            const T g = slots_[iy].grad.data()[0] / static_cast<T>(n);
            T* dx = slots_[ip].grad.data();
            for (std::size_t i = 0; i < n; ++i) dx[i] += g * (*derivs)[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// grad_check

template <typename T>
GradCheckReport grad_check(const ForwardFn<T>& forward, std::vector<TensorT<T>>& params,
                           double epsilon, double tolerance,
                           const std::vector<std::string>* names) {
    if (!(epsilon > 0.0)) throw ContractError("grad_check: epsilon must be > 0");
    if (names && names->size() != params.size()) {
        throw ContractError("grad_check: names length does not match params");
    }

    const auto eval = [&]() -> double {
        TapeT<T> tape;
        std::vector<VarT<T>> vars;
        vars.reserve(params.size());
        for (auto& p : params) vars.push_back(tape.leaf(p, false));
        VarT<T> out = forward(tape, vars);
        const TensorT<T> v = tape.value(out);
        if (v.numel() != 1) {
            throw ContractError("grad_check: forward must return a scalar, got shape " +
                                shape_to_string(v.shape()));
        }
        return static_cast<double>(v.data()[0]);
    };

    const double base1 = eval();
    const double base2 = eval();
    if (!(base1 == base2)) {
        throw ContractError("grad_check: forward is non-deterministic (two baseline evaluations "
                            "differ)");
    }

    // Analytic gradients from one taped forward/backward.
    TapeT<T> tape;
    std::vector<VarT<T>> vars;
    vars.reserve(params.size());
    for (auto& p : params) vars.push_back(tape.leaf(p, true));
    VarT<T> out = forward(tape, vars);
    if (tape.value(out).numel() != 1) {
        throw ContractError("grad_check: forward must return a scalar");
    }
    tape.backward(out);

    GradCheckReport report;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        TensorT<T>& p = params[pi];
        const TensorT<T> analytic = tape.grad(vars[pi]);
        double param_max = 0.0;
        T* data = p.data();
        for (std::size_t j = 0; j < p.numel(); ++j) {
            const T old = data[j];
            data[j] = old + static_cast<T>(epsilon);
            const double fplus = eval();
            data[j] = old - static_cast<T>(epsilon);
            const double fminus = eval();
            data[j] = old;
            const double numeric = (fplus - fminus) / (2.0 * epsilon);
            const double a = static_cast<double>(analytic.data()[j]);
            const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
            if (rel > param_max) param_max = rel;
        }
        const std::string name = names ? (*names)[pi] : ("param" + std::to_string(pi));
        report.per_parameter_errors.emplace_back(name, param_max);
        if (param_max > report.max_relative_error) report.max_relative_error = param_max;
    }
    report.passed = report.max_relative_error < tolerance;
    return report;
}

template class TapeT<float>;
template class TapeT<double>;
template GradCheckReport grad_check<float>(const ForwardFn<float>&, std::vector<TensorT<float>>&,
                                           double, double, const std::vector<std::string>*);
template GradCheckReport grad_check<double>(const ForwardFn<double>&,
                                            std::vector<TensorT<double>>&, double, double,
                                            const std::vector<std::string>*);

}  // namespace fakegaze
