#pragma once

// Dense row-major n-d tensor with shared storage. Reshapes alias the buffer;
// every arithmetic op allocates a fresh buffer, so views never observe
// mutation. Eigen maps provide the GEMM-shaped access paths.

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace mphsir {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d < 0) throw std::invalid_argument("tensor: negative dimension");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

template <typename S>
class Tensor {
public:
    using Scalar = S;
    using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using EVec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
    using MapMat = Eigen::Map<EMat>;
    using ConstMapMat = Eigen::Map<const EMat>;
    using MapArr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    using ConstMapArr = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

    Tensor() = default;

    explicit Tensor(Shape shape)
        : shape_(std::move(shape)),
          buf_(std::make_shared<std::vector<S>>(shape_numel(shape_), S(0))) {}

    Tensor(Shape shape, std::vector<S> data) : shape_(std::move(shape)) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape_))
            throw std::invalid_argument("tensor: data length does not match shape " +
                                        shape_str(shape_));
        buf_ = std::make_shared<std::vector<S>>(std::move(data));
    }

    static Tensor full(Shape shape, S v) {
        Tensor t(std::move(shape));
        std::fill(t.buf_->begin(), t.buf_->end(), v);
        return t;
    }

    static Tensor scalar(S v) { return full({1}, v); }

    bool defined() const { return static_cast<bool>(buf_); }
    const Shape& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    std::int64_t size() const { return buf_ ? static_cast<std::int64_t>(buf_->size()) : 0; }

    S* data() { return buf_->data(); }
    const S* data() const { return buf_->data(); }
    S& operator[](std::int64_t i) { return (*buf_)[static_cast<size_t>(i)]; }
    const S& operator[](std::int64_t i) const { return (*buf_)[static_cast<size_t>(i)]; }

    // Aliasing reshape; no copy.
    Tensor reshaped(Shape shape) const {
        if (shape_numel(shape) != size())
            throw std::invalid_argument("reshape: size mismatch " + shape_str(shape_) +
                                        " -> " + shape_str(shape));
        Tensor t = *this;
        t.shape_ = std::move(shape);
        return t;
    }

    Tensor clone() const {
        Tensor t;
        t.shape_ = shape_;
        t.buf_ = std::make_shared<std::vector<S>>(*buf_);
        return t;
    }

    template <typename T>
    Tensor<T> cast() const {
        std::vector<T> out(static_cast<size_t>(size()));
        for (std::int64_t i = 0; i < size(); ++i) out[static_cast<size_t>(i)] = static_cast<T>((*this)[i]);
        return Tensor<T>(shape_, std::move(out));
    }

    // 2-d Eigen view. Requires ndim() == 2 unless rows/cols given explicitly.
    MapMat mat() {
        check_2d();
        return MapMat(data(), shape_[0], shape_[1]);
    }
    ConstMapMat mat() const {
        check_2d();
        return ConstMapMat(data(), shape_[0], shape_[1]);
    }
    MapMat mat(int rows, int cols) {
        if (static_cast<std::int64_t>(rows) * cols != size())
            throw std::invalid_argument("mat: size mismatch");
        return MapMat(data(), rows, cols);
    }
    ConstMapMat mat(int rows, int cols) const {
        if (static_cast<std::int64_t>(rows) * cols != size())
            throw std::invalid_argument("mat: size mismatch");
        return ConstMapMat(data(), rows, cols);
    }

    MapArr arr() { return MapArr(data(), size()); }
    ConstMapArr arr() const { return ConstMapArr(data(), size()); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    void check_2d() const {
        if (ndim() != 2) throw std::invalid_argument("expected 2-d tensor, got " + shape_str(shape_));
    }

    Shape shape_;
    std::shared_ptr<std::vector<S>> buf_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace mphsir
