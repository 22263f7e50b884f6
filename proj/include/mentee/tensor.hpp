#pragma once
// Dense n-dimensional arrays with row-major storage, plus the handful of
// kernels the layer implementations need: matmul, 2-d cross-correlation and
// its gradients, and Gaussian initialization. Summation order is pinned
// (row-major, reduction index innermost, ascending) so results are bitwise
// reproducible; keep it that way when touching the loops.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "mentee/errors.hpp"
#include "mentee/rng.hpp"

namespace mentee {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t e : s) n *= e;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

template <class T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

    static Tensor from(Shape shape, std::vector<T> vals) {
        if (shape_numel(shape) != vals.size())
            throw ShapeMismatch("tensor: " + shape_str(shape) + " does not hold " +
                                std::to_string(vals.size()) + " values");
        Tensor t;
        t.shape_ = std::move(shape);
        t.data_ = std::move(vals);
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t extent(std::size_t i) const { return shape_[i]; }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T& at2(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    const T& at2(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }
    const T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
    }

    auto begin() { return data_.begin(); }
    auto end() { return data_.end(); }
    auto begin() const { return data_.begin(); }
    auto end() const { return data_.end(); }

    // Same storage, new extents; element count must not change.
    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != data_.size())
            throw ShapeMismatch("reshape " + shape_str(shape_) + " -> " + shape_str(s));
        Tensor t(*this);
        t.shape_ = std::move(s);
        return t;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    Tensor& operator+=(const Tensor& o) {
        if (!same_shape(o)) throw ShapeMismatch("+=: " + shape_str(shape_) + " vs " + shape_str(o.shape_));
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    Tensor& scale(T s) {
        for (T& v : data_) v *= s;
        return *this;
    }

private:
    Shape shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <class T>
Tensor<T> zeros_like(const Tensor<T>& t) {
    return Tensor<T>(t.shape());
}

// ---------------------------------------------------------------------------
// matmul

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeMismatch("matmul expects rank-2 operands, got " + shape_str(a.shape()) +
                            " x " + shape_str(b.shape()));
    const std::size_t r = a.extent(0), k = a.extent(1), c = b.extent(1);
    if (b.extent(0) != k)
        throw ShapeMismatch("matmul inner extents: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Tensor<T> out({r, c});
    const T* ap = a.data();
    const T* bp = b.data();
    T* op = out.data();
    // i-k-j ordering: per output element the reduction still runs in
    // ascending k, identical to the naive triple loop, but the inner loop
    // is contiguous in both B and C and vectorizes.
    for (std::size_t i = 0; i < r; ++i) {
        T* orow = op + i * c;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T av = ap[i * k + kk];
            const T* brow = bp + kk * c;
            for (std::size_t j = 0; j < c; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

// matmul with A transposed: out[k1,k2] = sum_i A[i,k1] * B[i,k2]
template <class T>
Tensor<T> matmul_tn(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(0) != b.extent(0))
        throw ShapeMismatch("matmul_tn: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t n = a.extent(0), r = a.extent(1), c = b.extent(1);
    Tensor<T> out({r, c});
    const T* ap = a.data();
    const T* bp = b.data();
    T* op = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        const T* arow = ap + i * r;
        const T* brow = bp + i * c;
        for (std::size_t k1 = 0; k1 < r; ++k1) {
            const T av = arow[k1];
            T* orow = op + k1 * c;
            for (std::size_t k2 = 0; k2 < c; ++k2) orow[k2] += av * brow[k2];
        }
    }
    return out;
}

// matmul with B transposed: out[i,j] = sum_k A[i,k] * B[j,k]
template <class T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(1))
        throw ShapeMismatch("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t r = a.extent(0), k = a.extent(1), c = b.extent(0);
    Tensor<T> out({r, c});
    const T* ap = a.data();
    const T* bp = b.data();
    T* op = out.data();
    for (std::size_t i = 0; i < r; ++i) {
        const T* arow = ap + i * k;
        T* orow = op + i * c;
        for (std::size_t j = 0; j < c; ++j) {
            const T* brow = bp + j * k;
            T acc = T(0);
            for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            orow[j] = acc;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation (no kernel flip), NCHW input, FCHW filters.

inline void conv2d_check(const Shape& in, const Shape& filt, std::size_t stride, std::size_t pad,
                         std::size_t& out_h, std::size_t& out_w) {
    if (in.size() != 4 || filt.size() != 4)
        throw ShapeMismatch("conv2d expects NCHW input and FCHW filters");
    if (stride == 0) throw ShapeMismatch("conv2d: stride must be positive");
    if (in[1] != filt[1])
        throw ShapeMismatch("conv2d: input channels " + std::to_string(in[1]) +
                            " != filter channels " + std::to_string(filt[1]));
    const std::size_t h = in[2] + 2 * pad, w = in[3] + 2 * pad;
    if (h < filt[2] || w < filt[3])
        throw ShapeMismatch("conv2d: kernel larger than padded input");
    if ((h - filt[2]) % stride != 0 || (w - filt[3]) % stride != 0)
        throw ShapeMismatch("conv2d: output extent not integral for stride " + std::to_string(stride));
    out_h = (h - filt[2]) / stride + 1;
    out_w = (w - filt[3]) / stride + 1;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& filters, std::size_t stride = 1,
                 std::size_t pad = 0, bool check_finite = false) {
    std::size_t oh = 0, ow = 0;
    conv2d_check(input.shape(), filters.shape(), stride, pad, oh, ow);
    if (check_finite && (!input.all_finite() || !filters.all_finite()))
        throw NonFiniteInput("conv2d: non-finite operand");
    const std::size_t n = input.extent(0), ci = input.extent(1), h = input.extent(2), w = input.extent(3);
    const std::size_t f = filters.extent(0), kh = filters.extent(2), kw = filters.extent(3);
    Tensor<T> out({n, f, oh, ow});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t fo = 0; fo < f; ++fo)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    T acc = T(0);
                    for (std::size_t c = 0; c < ci; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(x * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                acc += input.at4(b, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                                       filters.at4(fo, c, ky, kx);
                            }
                        }
                    out.at4(b, fo, y, x) = acc;
                }
    return out;
}

// Gradients of sum(dOut .* conv2d(input, filters)) w.r.t. input and filters.
template <class T>
std::pair<Tensor<T>, Tensor<T>> conv2d_grads(const Tensor<T>& input, const Tensor<T>& filters,
                                             const Tensor<T>& d_out, std::size_t stride = 1,
                                             std::size_t pad = 0) {
    std::size_t oh = 0, ow = 0;
    conv2d_check(input.shape(), filters.shape(), stride, pad, oh, ow);
    if (d_out.shape() != Shape{input.extent(0), filters.extent(0), oh, ow})
        throw ShapeMismatch("conv2d_grads: dOut " + shape_str(d_out.shape()) + " mismatch");
    const std::size_t n = input.extent(0), ci = input.extent(1), h = input.extent(2), w = input.extent(3);
    const std::size_t f = filters.extent(0), kh = filters.extent(2), kw = filters.extent(3);
    Tensor<T> d_in(input.shape());
    Tensor<T> d_filt(filters.shape());
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t fo = 0; fo < f; ++fo)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    const T g = d_out.at4(b, fo, y, x);
                    if (g == T(0)) continue;
                    for (std::size_t c = 0; c < ci; ++c)
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const std::ptrdiff_t iy =
                                static_cast<std::ptrdiff_t>(y * stride + ky) - static_cast<std::ptrdiff_t>(pad);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const std::ptrdiff_t ix =
                                    static_cast<std::ptrdiff_t>(x * stride + kx) - static_cast<std::ptrdiff_t>(pad);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                const std::size_t uy = static_cast<std::size_t>(iy);
                                const std::size_t ux = static_cast<std::size_t>(ix);
                                d_in.at4(b, c, uy, ux) += g * filters.at4(fo, c, ky, kx);
                                d_filt.at4(fo, c, ky, kx) += g * input.at4(b, c, uy, ux);
                            }
                        }
                }
    return {std::move(d_in), std::move(d_filt)};
}

// ---------------------------------------------------------------------------
// gaussian_fill

template <class T>
Tensor<T> gaussian_fill(const Shape& shape, double mean, double std, SeededRng& rng) {
    if (std < 0) throw NegativeStd("gaussian_fill: std " + std::to_string(std));
    Tensor<T> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i)
        t[i] = static_cast<T>(mean + std * rng.next_gaussian());
    return t;
}

} // namespace mentee
