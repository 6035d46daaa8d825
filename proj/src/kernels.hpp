#pragma once

// Internal numeric kernels shared by the pure layer functions (nn_ops) and
// the autodiff tape ops (autograd). Not installed; include only from src/.
//
// Determinism: every reduction below runs sequentially in ascending index
// order per output element, so results are identical run to run for the same
// inputs and build.

#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "fakegaze/errors.hpp"
#include "fakegaze/tensor.hpp"

namespace fakegaze::detail {

struct ConvDims {
    std::size_t n, c, h, w;        // input
    std::size_t o, kh, kw;         // filters
    std::size_t sy, sx, py, px;    // stride / zero padding
    std::size_t ho, wo;            // output spatial
    std::size_t k() const { return c * kh * kw; }
    std::size_t hwo() const { return ho * wo; }
    std::size_t hwi() const { return h * w; }
};

inline ConvDims conv_dims(const Shape& xs, std::size_t o, std::size_t wc, std::size_t kh,
                          std::size_t kw, std::size_t sy, std::size_t sx, std::size_t py,
                          std::size_t px, const std::string& ctx) {
    if (xs.size() != 4) {
        throw ContractError(ctx + ": input must be rank-4 NxCxHxW, got " + shape_to_string(xs));
    }
    ConvDims d{};
    d.n = xs[0];
    d.c = xs[1];
    d.h = xs[2];
    d.w = xs[3];
    d.o = o;
    d.kh = kh;
    d.kw = kw;
    d.sy = sy;
    d.sx = sx;
    d.py = py;
    d.px = px;
    if (kh < 1 || kw < 1) throw ContractError(ctx + ": kernel extent must be >= 1");
    if (sy < 1 || sx < 1) throw ContractError(ctx + ": stride must be >= 1");
    if (d.c != wc) {
        throw ContractError(ctx + ": input has " + std::to_string(d.c) +
                            " channels but weights expect " + std::to_string(wc));
    }
    const auto hpad = static_cast<long long>(d.h) + 2 * static_cast<long long>(py);
    const auto wpad = static_cast<long long>(d.w) + 2 * static_cast<long long>(px);
    if (hpad < static_cast<long long>(kh) || wpad < static_cast<long long>(kw)) {
        throw ContractError(ctx + ": output size < 1 (padded input " + std::to_string(hpad) + "x" +
                            std::to_string(wpad) + " smaller than kernel " + std::to_string(kh) +
                            "x" + std::to_string(kw) + ")");
    }
    d.ho = static_cast<std::size_t>((hpad - static_cast<long long>(kh)) / static_cast<long long>(sy)) + 1;
    d.wo = static_cast<std::size_t>((wpad - static_cast<long long>(kw)) / static_cast<long long>(sx)) + 1;
    return d;
}

// col is (C*kh*kw) x (Ho*Wo); row index (c*kh + ki)*kw + kj matches the flat
// layout of an OxCxkhxkw weight tensor viewed as OxK.
template <typename T>
void im2col(const T* x, const ConvDims& d, T* col) {
    const std::size_t hwo = d.hwo();
    std::size_t row = 0;
    for (std::size_t c = 0; c < d.c; ++c) {
        const T* xc = x + c * d.hwi();
        for (std::size_t ki = 0; ki < d.kh; ++ki) {
            for (std::size_t kj = 0; kj < d.kw; ++kj, ++row) {
                T* out = col + row * hwo;
                for (std::size_t oy = 0; oy < d.ho; ++oy) {
                    const long long iy =
                        static_cast<long long>(oy * d.sy) + static_cast<long long>(ki) -
                        static_cast<long long>(d.py);
                    if (iy < 0 || iy >= static_cast<long long>(d.h)) {
                        std::memset(out + oy * d.wo, 0, d.wo * sizeof(T));
                        continue;
                    }
                    const T* xrow = xc + static_cast<std::size_t>(iy) * d.w;
                    for (std::size_t ox = 0; ox < d.wo; ++ox) {
                        const long long ix =
                            static_cast<long long>(ox * d.sx) + static_cast<long long>(kj) -
                            static_cast<long long>(d.px);
                        out[oy * d.wo + ox] =
                            (ix < 0 || ix >= static_cast<long long>(d.w))
                                ? T(0)
                                : xrow[static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_add(const T* col, const ConvDims& d, T* dx) {
    const std::size_t hwo = d.hwo();
    std::size_t row = 0;
    for (std::size_t c = 0; c < d.c; ++c) {
        T* xc = dx + c * d.hwi();
        for (std::size_t ki = 0; ki < d.kh; ++ki) {
            for (std::size_t kj = 0; kj < d.kw; ++kj, ++row) {
                const T* in = col + row * hwo;
                for (std::size_t oy = 0; oy < d.ho; ++oy) {
                    const long long iy =
                        static_cast<long long>(oy * d.sy) + static_cast<long long>(ki) -
                        static_cast<long long>(d.py);
                    if (iy < 0 || iy >= static_cast<long long>(d.h)) continue;
                    T* xrow = xc + static_cast<std::size_t>(iy) * d.w;
                    for (std::size_t ox = 0; ox < d.wo; ++ox) {
                        const long long ix =
                            static_cast<long long>(ox * d.sx) + static_cast<long long>(kj) -
                            static_cast<long long>(d.px);
                        if (ix < 0 || ix >= static_cast<long long>(d.w)) continue;
                        xrow[static_cast<std::size_t>(ix)] += in[oy * d.wo + ox];
                    }
                }
            }
        }
    }
}

// One sample's forward convolution: y(OxHoWo) = wmat(OxK) * col(KxHoWo) + b.
// Deliberately not inlined: the depthwise stage and the full convolution both
// route through this single compiled body, which is what makes "separable
// equals its two-stage composition" hold bit-for-bit.
template <typename T>
__attribute__((noinline)) void conv_sample_fwd(const T* x, const T* wmat, const T* bias,
                                               const ConvDims& d, T* y, std::vector<T>& colbuf) {
    const std::size_t hwo = d.hwo();
    const std::size_t k = d.k();
    const T* col = x;
    if (!(d.kh == 1 && d.kw == 1 && d.sy == 1 && d.sx == 1 && d.py == 0 && d.px == 0)) {
        colbuf.resize(k * hwo);
        im2col(x, d, colbuf.data());
        col = colbuf.data();
    }
    gemm<T>(d.o, k, hwo, wmat, col, y, false);
    if (bias) {
        for (std::size_t oc = 0; oc < d.o; ++oc) {
            T* yr = y + oc * hwo;
            const T b = bias[oc];
            for (std::size_t i = 0; i < hwo; ++i) yr[i] += b;
        }
    }
}

// One sample's backward convolution. Accumulates into whichever of dx / dw /
// db is non-null (all already zero-initialized or carrying prior fan-out
// gradient contributions).
template <typename T>
void conv_sample_bwd(const T* x, const T* wmat, const T* dy, const ConvDims& d, T* dx, T* dw,
                     T* db, std::vector<T>& colbuf, std::vector<T>& coltbuf,
                     std::vector<T>& dcolbuf) {
    const std::size_t hwo = d.hwo();
    const std::size_t k = d.k();
    const bool unit = d.kh == 1 && d.kw == 1 && d.sy == 1 && d.sx == 1 && d.py == 0 && d.px == 0;
    if (dw) {
        const T* col = x;
        if (!unit) {
            colbuf.resize(k * hwo);
            im2col(x, d, colbuf.data());
            col = colbuf.data();
        }
        coltbuf.resize(hwo * k);
        transpose<T>(k, hwo, col, coltbuf.data());
        gemm<T>(d.o, hwo, k, dy, coltbuf.data(), dw, true);
    }
    if (db) {
        for (std::size_t oc = 0; oc < d.o; ++oc) {
            const T* dyr = dy + oc * hwo;
            T acc = 0;
            for (std::size_t i = 0; i < hwo; ++i) acc += dyr[i];
            db[oc] += acc;
        }
    }
    if (dx) {
        if (unit) {
            gemm_tn_acc<T>(k, d.o, hwo, wmat, dy, dx);
        } else {
            dcolbuf.assign(k * hwo, T(0));
            gemm_tn_acc<T>(k, d.o, hwo, wmat, dy, dcolbuf.data());
            col2im_add(dcolbuf.data(), d, dx);
        }
    }
}

template <typename T>
struct ConvScratch {
    std::vector<T> col, colt, dcol;
};

// Batched forward/backward wrappers.
template <typename T>
void conv_fwd(const T* x, const T* w, const T* bias, const ConvDims& d, T* y,
              ConvScratch<T>& s) {
    const std::size_t xstep = d.c * d.hwi();
    const std::size_t ystep = d.o * d.hwo();
    for (std::size_t n = 0; n < d.n; ++n) {
        conv_sample_fwd<T>(x + n * xstep, w, bias, d, y + n * ystep, s.col);
    }
}

template <typename T>
void conv_bwd(const T* x, const T* w, const T* dy, const ConvDims& d, T* dx, T* dw, T* db,
              ConvScratch<T>& s) {
    const std::size_t xstep = d.c * d.hwi();
    const std::size_t ystep = d.o * d.hwo();
    for (std::size_t n = 0; n < d.n; ++n) {
        conv_sample_bwd<T>(x + n * xstep, w, dy + n * ystep, d, dx ? dx + n * xstep : nullptr, dw,
                           db, s.col, s.colt, s.dcol);
    }
}

// Depthwise convolution: one spatial filter per channel (multiplier 1).
// Implemented as per-(sample, channel) single-channel convolutions through
// conv_sample_fwd, i.e. the same compiled path a grouped-conv2d composition
// oracle takes.
inline ConvDims depthwise_channel_dims(const ConvDims& d) {
    ConvDims s = d;
    s.n = 1;
    s.c = 1;
    s.o = 1;
    return s;
}

template <typename T>
void depthwise_fwd(const T* x, const T* w, const ConvDims& d, T* y, ConvScratch<T>& s) {
    const ConvDims dc = depthwise_channel_dims(d);
    const std::size_t hwi = d.hwi(), hwo = d.hwo();
    for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t c = 0; c < d.c; ++c) {
            conv_sample_fwd<T>(x + (n * d.c + c) * hwi, w + c * d.kh * d.kw, nullptr, dc,
                               y + (n * d.c + c) * hwo, s.col);
        }
    }
}

template <typename T>
void depthwise_bwd(const T* x, const T* w, const T* dy, const ConvDims& d, T* dx, T* dw,
                   ConvScratch<T>& s) {
    const ConvDims dc = depthwise_channel_dims(d);
    const std::size_t hwi = d.hwi(), hwo = d.hwo();
    for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t c = 0; c < d.c; ++c) {
            conv_sample_bwd<T>(x + (n * d.c + c) * hwi, w + c * d.kh * d.kw,
                               dy + (n * d.c + c) * hwo, dc, dx ? dx + (n * d.c + c) * hwi : nullptr,
                               dw ? dw + c * d.kh * d.kw : nullptr, nullptr, s.col, s.colt, s.dcol);
        }
    }
}

// Batch norm, training mode. Normalizes each channel over (N, H, W) with the
// biased batch variance; saves xhat and 1/sqrt(var+eps) for backward; reports
// batch statistics so the caller can update running stats. Statistic sums use
// double accumulators regardless of T.
template <typename T>
void bn_train_fwd(const T* x, std::size_t n, std::size_t c, std::size_t hw, const T* scale,
                  const T* shift, T eps, T* y, T* xhat, T* invstd, double* bmean, double* bvar) {
    const std::size_t m = n * hw;
    if (m < 2) {
        throw ContractError("batch_norm training mode needs >= 2 elements per channel, got " +
                            std::to_string(m));
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const T* xp = x + (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) sum += static_cast<double>(xp[j]);
        }
        const double mean = sum / static_cast<double>(m);
        double var_sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const T* xp = x + (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                const double dv = static_cast<double>(xp[j]) - mean;
                var_sum += dv * dv;
            }
        }
        const double var = var_sum / static_cast<double>(m);
        const T istd = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        const T mu = static_cast<T>(mean);
        const T sc = scale[ch], sh = shift[ch];
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                const T xh = (x[base + j] - mu) * istd;
                xhat[base + j] = xh;
                y[base + j] = sc * xh + sh;
            }
        }
        invstd[ch] = istd;
        bmean[ch] = mean;
        bvar[ch] = var;
    }
}

template <typename T>
void bn_train_bwd(const T* dy, const T* xhat, const T* invstd, const T* scale, std::size_t n,
                  std::size_t c, std::size_t hw, T* dx, T* dscale, T* dshift) {
    const double m = static_cast<double>(n * hw);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double s1 = 0.0, s2 = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) {
                s1 += static_cast<double>(dy[base + j]);
                s2 += static_cast<double>(dy[base + j]) * static_cast<double>(xhat[base + j]);
            }
        }
        if (dshift) dshift[ch] += static_cast<T>(s1);
        if (dscale) dscale[ch] += static_cast<T>(s2);
        if (dx) {
            const T k1 = static_cast<T>(s1 / m);
            const T k2 = static_cast<T>(s2 / m);
            const T g = scale[ch] * invstd[ch];
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t base = (i * c + ch) * hw;
                for (std::size_t j = 0; j < hw; ++j) {
                    dx[base + j] += g * (dy[base + j] - k1 - xhat[base + j] * k2);
                }
            }
        }
    }
}

template <typename T>
void bn_infer_fwd(const T* x, std::size_t n, std::size_t c, std::size_t hw, const T* scale,
                  const T* shift, const T* rmean, const T* rvar, T eps, T* y) {
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T istd = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rvar[ch]) +
                                                      static_cast<double>(eps)));
        const T mu = rmean[ch], sc = scale[ch], sh = shift[ch];
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t base = (i * c + ch) * hw;
            for (std::size_t j = 0; j < hw; ++j) y[base + j] = sc * (x[base + j] - mu) * istd + sh;
        }
    }
}

template <typename T>
inline T sigmoid_scalar(T x) {
    if (x >= T(0)) {
        return T(1) / (T(1) + std::exp(-x));
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

}  // namespace fakegaze::detail
