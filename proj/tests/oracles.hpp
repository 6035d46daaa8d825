#pragma once

// Reference implementations the unit tests compare the library against.
// Everything here is written directly from the defining formulas with naive
// loops and double accumulators — no code shared with the library kernels, so
// an error in one side cannot hide in the other.

#include <cmath>
#include <cstddef>
#include <vector>

#include <fakegaze/tensor.hpp>
#include <fakegaze/utils.hpp>

namespace oracle {

using fakegaze::TensorT;

// C(m x n) = A(m x k) * B(k x n), one dot product per output element.
template <typename T>
std::vector<double> matmul(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b) {
    std::vector<double> c(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) {
                acc += static_cast<double>(a[i * k + p]) * static_cast<double>(b[p * n + j]);
            }
            c[i * n + j] = acc;
        }
    }
    return c;
}

// Direct cross-correlation over NCHW input and [out_ch x in_ch x kh x kw]
// weights with zero padding: six explicit loops, nothing shared with im2col.
template <typename T>
TensorT<double> conv2d(const TensorT<T>& x, const TensorT<T>& w, const T* bias, int stride_y,
                       int stride_x, int pad_y, int pad_x) {
    const int n = static_cast<int>(x.dim(0));
    const int ci = static_cast<int>(x.dim(1));
    const int h = static_cast<int>(x.dim(2));
    const int wd = static_cast<int>(x.dim(3));
    const int co = static_cast<int>(w.dim(0));
    const int kh = static_cast<int>(w.dim(2));
    const int kw = static_cast<int>(w.dim(3));
    const int ho = (h + 2 * pad_y - kh) / stride_y + 1;
    const int wo = (wd + 2 * pad_x - kw) / stride_x + 1;
    TensorT<double> out({static_cast<std::size_t>(n), static_cast<std::size_t>(co),
                         static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
    for (int b = 0; b < n; ++b) {
        for (int oc = 0; oc < co; ++oc) {
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = bias ? static_cast<double>(bias[oc]) : 0.0;
                    for (int ic = 0; ic < ci; ++ic) {
                        for (int ky = 0; ky < kh; ++ky) {
                            for (int kx = 0; kx < kw; ++kx) {
                                const int iy = oy * stride_y + ky - pad_y;
                                const int ix = ox * stride_x + kx - pad_x;
                                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                                const double xv = x.at({(std::size_t)b, (std::size_t)ic,
                                                        (std::size_t)iy, (std::size_t)ix});
                                const double wv = w.at({(std::size_t)oc, (std::size_t)ic,
                                                        (std::size_t)ky, (std::size_t)kx});
                                acc += xv * wv;
                            }
                        }
                    }
                    out.at({(std::size_t)b, (std::size_t)oc, (std::size_t)oy, (std::size_t)ox}) =
                        acc;
                }
            }
        }
    }
    return out;
}

// Depthwise stage: one [kh x kw] filter per channel, channel multiplier 1.
template <typename T>
TensorT<double> depthwise(const TensorT<T>& x, const TensorT<T>& w, int stride_y, int stride_x,
                          int pad_y, int pad_x) {
    const int n = static_cast<int>(x.dim(0));
    const int c = static_cast<int>(x.dim(1));
    const int h = static_cast<int>(x.dim(2));
    const int wd = static_cast<int>(x.dim(3));
    const int kh = static_cast<int>(w.dim(1));
    const int kw = static_cast<int>(w.dim(2));
    const int ho = (h + 2 * pad_y - kh) / stride_y + 1;
    const int wo = (wd + 2 * pad_x - kw) / stride_x + 1;
    TensorT<double> out({static_cast<std::size_t>(n), static_cast<std::size_t>(c),
                         static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
    for (int b = 0; b < n; ++b) {
        for (int ch = 0; ch < c; ++ch) {
            for (int oy = 0; oy < ho; ++oy) {
                for (int ox = 0; ox < wo; ++ox) {
                    double acc = 0.0;
                    for (int ky = 0; ky < kh; ++ky) {
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride_y + ky - pad_y;
                            const int ix = ox * stride_x + kx - pad_x;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                            acc += static_cast<double>(x.at({(std::size_t)b, (std::size_t)ch,
                                                             (std::size_t)iy, (std::size_t)ix})) *
                                   static_cast<double>(
                                       w.at({(std::size_t)ch, (std::size_t)ky, (std::size_t)kx}));
                        }
                    }
                    out.at({(std::size_t)b, (std::size_t)ch, (std::size_t)oy, (std::size_t)ox}) =
                        acc;
                }
            }
        }
    }
    return out;
}

// [N x C x H x W] -> [N x C] spatial mean.
template <typename T>
TensorT<double> global_avg_pool(const TensorT<T>& x) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    TensorT<double> out({n, c});
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t xx = 0; xx < w; ++xx) {
                    acc += static_cast<double>(x.at({b, ch, y, xx}));
                }
            }
            out.at({b, ch}) = acc / static_cast<double>(h * w);
        }
    }
    return out;
}

// y = x W^T + bias over [N x in] rows, [out x in] weights.
template <typename T>
TensorT<double> dense(const TensorT<T>& x, const TensorT<T>& w, const T* bias) {
    const std::size_t n = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
    TensorT<double> out({n, out_dim});
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t o = 0; o < out_dim; ++o) {
            double acc = bias ? static_cast<double>(bias[o]) : 0.0;
            for (std::size_t i = 0; i < in; ++i) {
                acc += static_cast<double>(x.at({b, i})) * static_cast<double>(w.at({o, i}));
            }
            out.at({b, o}) = acc;
        }
    }
    return out;
}

struct BatchNormRef {
    TensorT<double> output;
    std::vector<double> batch_mean, batch_var;  // biased variance
};

// Training-mode batch norm over (N, H, W) per channel.
template <typename T>
BatchNormRef batch_norm_train(const TensorT<T>& x, const T* scale, const T* shift,
                              double epsilon) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    BatchNormRef ref{TensorT<double>(x.shape()), std::vector<double>(c), std::vector<double>(c)};
    const double count = static_cast<double>(n * h * w);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx)
                    sum += static_cast<double>(x.at({b, ch, y, xx}));
        const double mean = sum / count;
        double sq = 0.0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    const double d = static_cast<double>(x.at({b, ch, y, xx})) - mean;
                    sq += d * d;
                }
        const double var = sq / count;
        ref.batch_mean[ch] = mean;
        ref.batch_var[ch] = var;
        const double inv = 1.0 / std::sqrt(var + epsilon);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xx = 0; xx < w; ++xx) {
                    const double xhat =
                        (static_cast<double>(x.at({b, ch, y, xx})) - mean) * inv;
                    ref.output.at({b, ch, y, xx}) =
                        xhat * static_cast<double>(scale[ch]) + static_cast<double>(shift[ch]);
                }
    }
    return ref;
}

// Fill a tensor with uniform values in [lo, hi) from the given stream.
template <typename T>
void fill_uniform(TensorT<T>& t, fakegaze::Rng& rng, double lo, double hi) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
        t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
    }
}

template <typename T>
double max_abs_diff(const TensorT<T>& a, const TensorT<double>& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = std::fabs(static_cast<double>(a.data()[i]) - b.data()[i]);
        if (d > worst) worst = d;
    }
    return worst;
}

}  // namespace oracle
