#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "eegmtl/errors.hpp"
#include "eegmtl/rng.hpp"

namespace eegmtl {

/// Extents of a dense tensor, outermost first. All extents are positive.
using Dims = std::vector<int>;

inline std::size_t dim_product(const Dims& dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string dims_str(const Dims& dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << 'x';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

inline void check_dims_positive(const Dims& dims) {
    if (dims.empty()) throw ShapeError("tensor rank must be at least 1");
    for (int d : dims) {
        if (d <= 0) throw ShapeError("tensor extents must be positive, got " + dims_str(dims));
    }
}

/// Dense row-major n-dimensional array over a single scalar type.
/// Value semantics throughout: copies are deep, storage is contiguous.
template <class S>
class Tensor {
public:
    using Scalar = S;

    Tensor() = default;

    explicit Tensor(Dims dims) : dims_(std::move(dims)) {
        check_dims_positive(dims_);
        data_.assign(dim_product(dims_), S(0));
    }

    Tensor(Dims dims, std::vector<S> data) : dims_(std::move(dims)), data_(std::move(data)) {
        check_dims_positive(dims_);
        if (dim_product(dims_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match dims " + dims_str(dims_));
        }
    }

    static Tensor full(Dims dims, S value) {
        Tensor t(std::move(dims));
        for (S& v : t.data_) v = value;
        return t;
    }

    static Tensor scalar(S value) { return Tensor({1}, {value}); }

    static Tensor of(std::initializer_list<S> values) {
        return Tensor({static_cast<int>(values.size())}, std::vector<S>(values));
    }

    int rank() const noexcept { return static_cast<int>(dims_.size()); }
    const Dims& dims() const noexcept { return dims_; }
    int dim(int i) const { return dims_.at(static_cast<std::size_t>(i)); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    S* data() noexcept { return data_.data(); }
    const S* data() const noexcept { return data_.data(); }
    std::span<S> values() noexcept { return {data_.data(), data_.size()}; }
    std::span<const S> values() const noexcept { return {data_.data(), data_.size()}; }

    S& operator[](std::size_t i) { return data_[i]; }
    const S& operator[](std::size_t i) const { return data_[i]; }

    bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

    /// Reinterpret the flat buffer under new extents; element count must match.
    Tensor reshaped(Dims new_dims) const {
        if (dim_product(new_dims) != size()) {
            throw ShapeError("cannot reshape " + dims_str(dims_) + " into " + dims_str(new_dims));
        }
        return Tensor(std::move(new_dims), data_);
    }

    template <class T>
    Tensor<T> cast() const {
        std::vector<T> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
        return Tensor<T>(dims_, std::move(out));
    }

    bool all_finite() const {
        for (S v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    void fill(S value) {
        for (S& v : data_) v = value;
    }

    void set_zero() { fill(S(0)); }

private:
    Dims dims_;
    std::vector<S> data_;
};

// ---------------------------------------------------------------------------
// Eigen views. The flat buffer of a rank-2 tensor (or any tensor viewed with
// explicit rows x cols) maps onto a row-major Eigen matrix without copying.
// ---------------------------------------------------------------------------

template <class S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
Eigen::Map<const MatRM<S>> mat_view(const Tensor<S>& t, int rows, int cols) {
    if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != t.size()) {
        throw ShapeError("mat_view " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " does not cover tensor " + dims_str(t.dims()));
    }
    return Eigen::Map<const MatRM<S>>(t.data(), rows, cols);
}

template <class S>
Eigen::Map<MatRM<S>> mat_view(Tensor<S>& t, int rows, int cols) {
    if (static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) != t.size()) {
        throw ShapeError("mat_view " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " does not cover tensor " + dims_str(t.dims()));
    }
    return Eigen::Map<MatRM<S>>(t.data(), rows, cols);
}

template <class S>
Eigen::Map<const MatRM<S>> mat_view(const Tensor<S>& t) {
    if (t.rank() != 2) throw ShapeError("rank-2 tensor required, got " + dims_str(t.dims()));
    return mat_view(t, t.dim(0), t.dim(1));
}

template <class S>
Eigen::Map<MatRM<S>> mat_view(Tensor<S>& t) {
    if (t.rank() != 2) throw ShapeError("rank-2 tensor required, got " + dims_str(t.dims()));
    return mat_view(t, t.dim(0), t.dim(1));
}

// ---------------------------------------------------------------------------
// Random fills. Counters advance one per element so a fill is reproducible
// from the stream alone.
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> random_normal(Dims dims, const RngStream& stream, double mean = 0.0, double stddev = 1.0) {
    Tensor<S> t(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<S>(mean + stddev * stream.normal(i));
    }
    return t;
}

template <class S>
Tensor<S> random_uniform(Dims dims, const RngStream& stream, double lo = 0.0, double hi = 1.0) {
    Tensor<S> t(std::move(dims));
    for (std::size_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<S>(lo + (hi - lo) * stream.uniform(i));
    }
    return t;
}

} // namespace eegmtl
