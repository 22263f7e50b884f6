#pragma once
// Temperature softmax and cross-entropy. The softmax/CE pair uses the fused
// gradient: cross_entropy returns the gradient at the logits that produced
// the probabilities, so backprop skips the softmax Jacobian on the loss path.

#include <cmath>
#include <vector>

#include "mentee/errors.hpp"
#include "mentee/tensor.hpp"

namespace mentee {

// Row-wise softmax with temperature, computed with max subtraction.
template <class T>
Tensor<T> softmax_T(const Tensor<T>& logits, double temperature) {
    if (temperature <= 0)
        throw NonPositiveTemperature("softmax_T: temperature " + std::to_string(temperature));
    if (logits.rank() != 2) throw ShapeMismatch("softmax_T expects [batch, classes]");
    const std::size_t n = logits.extent(0), d = logits.extent(1);
    Tensor<T> out(logits.shape());
    const T inv_t = static_cast<T>(1.0 / temperature);
    for (std::size_t i = 0; i < n; ++i) {
        const T* row = logits.data() + i * d;
        T* orow = out.data() + i * d;
        T mx = row[0];
        for (std::size_t j = 1; j < d; ++j) mx = row[j] > mx ? row[j] : mx;
        T sum = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            orow[j] = std::exp((row[j] - mx) * inv_t);
            sum += orow[j];
        }
        const T inv_sum = T(1) / sum;
        for (std::size_t j = 0; j < d; ++j) orow[j] *= inv_sum;
    }
    return out;
}

// Pull a gradient w.r.t. softmax_T outputs back to the logits:
// dz = (p .* (dp - <dp, p>)) / T, row-wise.
template <class T>
Tensor<T> softmax_T_backward(const Tensor<T>& probs, const Tensor<T>& d_probs, double temperature) {
    if (temperature <= 0)
        throw NonPositiveTemperature("softmax_T_backward: temperature " + std::to_string(temperature));
    if (!probs.same_shape(d_probs)) throw ShapeMismatch("softmax_T_backward: shape mismatch");
    const std::size_t n = probs.extent(0), d = probs.extent(1);
    Tensor<T> out(probs.shape());
    const T inv_t = static_cast<T>(1.0 / temperature);
    for (std::size_t i = 0; i < n; ++i) {
        const T* p = probs.data() + i * d;
        const T* g = d_probs.data() + i * d;
        T* o = out.data() + i * d;
        T dot = T(0);
        for (std::size_t j = 0; j < d; ++j) dot += g[j] * p[j];
        for (std::size_t j = 0; j < d; ++j) o[j] = p[j] * (g[j] - dot) * inv_t;
    }
    return out;
}

template <class T>
struct CeResult {
    double loss = 0;
    Tensor<T> d_logits; // fused gradient at the logits feeding the softmax
};

// Mean negative log-likelihood. `temperature` must match the softmax that
// produced `probs`; the fused gradient is (probs - onehot) / (batch * T).
template <class T>
CeResult<T> cross_entropy(const Tensor<T>& probs, const std::vector<int>& labels,
                          double temperature = 1.0) {
    if (probs.rank() != 2) throw ShapeMismatch("cross_entropy expects [batch, classes]");
    const std::size_t n = probs.extent(0), d = probs.extent(1);
    if (labels.size() != n)
        throw ShapeMismatch("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                            std::to_string(n));
    CeResult<T> res;
    res.d_logits = Tensor<T>(probs.shape());
    const T scale = static_cast<T>(1.0 / (static_cast<double>(n) * temperature));
    double loss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= d)
            throw LabelOutOfRange("cross_entropy: label " + std::to_string(y) + " for " +
                                  std::to_string(d) + " classes");
        const T* p = probs.data() + i * d;
        T* g = res.d_logits.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) g[j] = p[j] * scale;
        g[y] -= scale;
        double py = static_cast<double>(p[y]);
        if (py < 1e-30) py = 1e-30; // keep the loss finite; the gradient is exact anyway
        loss -= std::log(py);
    }
    res.loss = loss / static_cast<double>(n);
    return res;
}

} // namespace mentee
