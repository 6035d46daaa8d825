#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "fakegaze/errors.hpp"

namespace fakegaze {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& s);
std::size_t shape_numel(const Shape& s);

// Dense N-dimensional tensor, flat row-major storage. The shape is fixed at
// construction; reshape() returns a new tensor sharing the same storage.
// Element values are mutable through data()/at() — optimizers update weights
// in place and batch-norm maintains running statistics — but tensors handed
// across threads must be treated as read-only (see the concurrency notes in
// README.md).
//
// Two element types are compiled: float for training speed and double for
// verification (gradient checking needs the extra precision).
template <typename T>
class TensorT {
public:
    TensorT() = default;  // undefined tensor (no storage)

    explicit TensorT(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {}

    TensorT(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
        if (values.size() != shape_numel(shape_)) {
            throw ContractError("tensor data length " + std::to_string(values.size()) +
                                " does not match shape " + shape_to_string(shape_));
        }
        data_ = std::make_shared<std::vector<T>>(std::move(values));
    }

    static TensorT full(Shape shape, T value) {
        TensorT t(std::move(shape));
        for (T& v : *t.data_) v = value;
        return t;
    }

    static TensorT scalar(T value) { return full({1}, value); }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_ ? data_->size() : 0; }

    std::size_t dim(std::size_t i) const {
        if (i >= shape_.size()) {
            throw ContractError("dim index " + std::to_string(i) + " out of rank " +
                                std::to_string(shape_.size()));
        }
        return shape_[i];
    }

    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }

    // Bounds-checked element access; convenient in tests, slow in kernels.
    T& at(const std::vector<std::size_t>& idx) { return (*data_)[flat_index(idx)]; }
    const T& at(const std::vector<std::size_t>& idx) const { return (*data_)[flat_index(idx)]; }

    // New tensor sharing this tensor's storage; element count must match.
    TensorT reshape(Shape new_shape) const {
        if (shape_numel(new_shape) != numel()) {
            throw ContractError("reshape from " + shape_to_string(shape_) + " to " +
                                shape_to_string(new_shape) + " changes element count");
        }
        TensorT t;
        t.shape_ = std::move(new_shape);
        t.data_ = data_;
        t.requires_grad = requires_grad;
        return t;
    }

    // Deep copy with its own storage.
    TensorT clone() const {
        TensorT t;
        t.shape_ = shape_;
        if (data_) t.data_ = std::make_shared<std::vector<T>>(*data_);
        t.requires_grad = requires_grad;
        return t;
    }

    template <typename U>
    TensorT<U> cast() const {
        std::vector<U> out(numel());
        const T* src = data();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<U>(src[i]);
        return TensorT<U>(shape_, std::move(out));
    }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    bool all_finite() const;

    bool requires_grad = false;

private:
    std::size_t flat_index(const std::vector<std::size_t>& idx) const {
        if (idx.size() != shape_.size()) {
            throw ContractError("index rank " + std::to_string(idx.size()) +
                                " does not match tensor rank " + std::to_string(shape_.size()));
        }
        std::size_t flat = 0;
        for (std::size_t d = 0; d < idx.size(); ++d) {
            if (idx[d] >= shape_[d]) {
                throw ContractError("index out of bounds in dim " + std::to_string(d));
            }
            flat = flat * shape_[d] + idx[d];
        }
        return flat;
    }

    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

// C(m x n) = A(m x k) * B(k x n), row-major, or C += A*B when accumulate is
// set. The i-k-j loop order gives every output element a sequential,
// ascending-k reduction, so results are deterministic run to run.
template <typename T>
void gemm(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c,
          bool accumulate = false);

// C(m x n) += A^T * B where A is stored (k x m), B is (k x n). Reduction over
// k is the outer loop: still sequential ascending-k per output element.
template <typename T>
void gemm_tn_acc(std::size_t m, std::size_t k, std::size_t n, const T* a, const T* b, T* c);

// out(cols x rows) = transpose of in(rows x cols).
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* in, T* out);

}  // namespace fakegaze
