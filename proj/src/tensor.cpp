#include "fakegaze/tensor.hpp"

#include <cmath>
#include <cstring>

namespace fakegaze {

std::string shape_to_string(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
        if (d == 0) throw ContractError("zero-sized dimension in shape " + shape_to_string(s));
        n *= d;
    }
    return n;
}

template <typename T>
bool TensorT<T>::all_finite() const {
    const T* p = data();
    const std::size_t n = numel();
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(p[i])) return false;
    }
    return true;
}

template <typename T>
void gemm(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c,
          bool accumulate) {
    if (!accumulate) std::memset(c, 0, m * n * sizeof(T));
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            const T* brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c) {
    for (std::size_t kk = 0; kk < k; ++kk) {
        const T* arow = a + kk * m;
        const T* brow = b + kk * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = arow[i];
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out) {
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t cidx = 0; cidx < cols; ++cidx) out[cidx * rows + r] = in[r * cols + cidx];
    }
}

template class TensorT<float>;
template class TensorT<double>;

template void gemm<float>(std::size_t, std::size_t, std::size_t, const float*, const float*,
                          float*, bool);
template void gemm<double>(std::size_t, std::size_t, std::size_t, const double*, const double*,
                           double*, bool);
template void gemm_tn_acc<float>(std::size_t, std::size_t, std::size_t, const float*, const float*,
                                 float*);
template void gemm_tn_acc<double>(std::size_t, std::size_t, std::size_t, const double*,
                                  const double*, double*);
template void transpose<float>(std::size_t, std::size_t, const float*, float*);
template void transpose<double>(std::size_t, std::size_t, const double*, double*);

}  // namespace fakegaze
