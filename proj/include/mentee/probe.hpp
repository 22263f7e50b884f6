#pragma once
// Probes: RMSE dissimilarity between a mentor layer's and a mentee layer's
// activations, its gradient into the mentee side only, and the weighted
// three-term objective that combines label loss with probe losses.
//
// Width matching never learns a projection: the probe compares the first
// `a` components in index order, where `a` is the minimum width (flat case)
// or min(channels) * H * W (conv case, equal spatial extents required).

#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "mentee/errors.hpp"
#include "mentee/losses.hpp"
#include "mentee/tensor.hpp"

namespace mentee {

enum class ProbeGroup { body, softmax };

struct ProbeSpec {
    std::size_t mentor_layer = 0;
    std::size_t mentee_layer = 0;
    ProbeGroup group = ProbeGroup::body;
    double multiplier = 1.0; // optional per-probe weight on the beta term
};

struct ProbeSet {
    std::vector<ProbeSpec> body;
    std::optional<ProbeSpec> softmax_probe;

    void validate() const {
        for (std::size_t i = 0; i < body.size(); ++i) {
            if (body[i].multiplier < 0) throw NegativeWeight("probe multiplier < 0");
            for (std::size_t k = i + 1; k < body.size(); ++k)
                if (body[i].mentor_layer == body[k].mentor_layer &&
                    body[i].mentee_layer == body[k].mentee_layer)
                    throw ProbeShapeError("duplicate probe (" + std::to_string(body[i].mentor_layer) +
                                          "," + std::to_string(body[i].mentee_layer) + ")");
        }
    }

    std::size_t count() const { return body.size() + (softmax_probe ? 1 : 0); }
};

namespace detail {

struct MatchView {
    std::size_t batch;         // shared batch extent
    std::size_t a;             // matched components per sample
    std::size_t mentor_stride; // per-sample element count, mentor side
    std::size_t mentee_stride; // per-sample element count, mentee side
};

// Row-major layout puts channels outermost, so in both the flat and the conv
// case the matched components are the first `a` elements of each sample.
template <class T>
MatchView match_view(const Tensor<T>& mentor_act, const Tensor<T>& mentee_act) {
    if (mentor_act.rank() < 2 || mentee_act.rank() < 2)
        throw SpatialMismatch("probe: activations must carry a batch dimension");
    if (mentor_act.extent(0) != mentee_act.extent(0))
        throw BatchMismatch("probe: batch " + std::to_string(mentor_act.extent(0)) + " vs " +
                            std::to_string(mentee_act.extent(0)));
    MatchView v{};
    v.batch = mentor_act.extent(0);
    v.mentor_stride = mentor_act.size() / v.batch;
    v.mentee_stride = mentee_act.size() / v.batch;
    if (mentor_act.rank() == 2 && mentee_act.rank() == 2) {
        v.a = std::min(mentor_act.extent(1), mentee_act.extent(1));
    } else if (mentor_act.rank() == 4 && mentee_act.rank() == 4) {
        if (mentor_act.extent(2) != mentee_act.extent(2) ||
            mentor_act.extent(3) != mentee_act.extent(3))
            throw SpatialMismatch("probe: conv maps " + shape_str(mentor_act.shape()) + " vs " +
                                  shape_str(mentee_act.shape()) + " differ spatially");
        v.a = std::min(mentor_act.extent(1), mentee_act.extent(1)) * mentor_act.extent(2) *
              mentor_act.extent(3);
    } else {
        throw SpatialMismatch("probe: incomparable activation ranks " +
                              std::to_string(mentor_act.rank()) + " vs " +
                              std::to_string(mentee_act.rank()));
    }
    return v;
}

} // namespace detail

// Number of matched components `a` between two activation tensors.
template <class T>
std::size_t match_width(const Tensor<T>& mentor_act, const Tensor<T>& mentee_act) {
    return detail::match_view(mentor_act, mentee_act).a;
}

// Psi = sqrt( sum over batch and matched components of (m - s)^2 / (a * batch) ).
// Squared differences are averaged over the batch before the square root, so
// the value does not scale with batch size.
template <class T>
double probe_loss(const Tensor<T>& mentor_act, const Tensor<T>& mentee_act) {
    const auto v = detail::match_view(mentor_act, mentee_act);
    double acc = 0;
    for (std::size_t b = 0; b < v.batch; ++b) {
        const T* pm = mentor_act.data() + b * v.mentor_stride;
        const T* ps = mentee_act.data() + b * v.mentee_stride;
        for (std::size_t i = 0; i < v.a; ++i) {
            const double d = static_cast<double>(pm[i]) - static_cast<double>(ps[i]);
            acc += d * d;
        }
    }
    return std::sqrt(acc / (static_cast<double>(v.a) * static_cast<double>(v.batch)));
}

constexpr double kProbeSingularity = 1e-12;

// d Psi / d mentee_act. Matched components get (s - m) / (a * batch * Psi);
// unmatched components get exactly zero. At Psi below the singularity guard
// the gradient is defined as zero. There is no mentor gradient, by design.
template <class T>
Tensor<T> probe_grad(const Tensor<T>& mentor_act, const Tensor<T>& mentee_act) {
    const auto v = detail::match_view(mentor_act, mentee_act);
    Tensor<T> grad(mentee_act.shape());
    const double psi = probe_loss(mentor_act, mentee_act);
    if (psi < kProbeSingularity) return grad;
    const double scale = 1.0 / (static_cast<double>(v.a) * static_cast<double>(v.batch) * psi);
    for (std::size_t b = 0; b < v.batch; ++b) {
        const T* pm = mentor_act.data() + b * v.mentor_stride;
        const T* ps = mentee_act.data() + b * v.mentee_stride;
        T* pg = grad.data() + b * v.mentee_stride;
        for (std::size_t i = 0; i < v.a; ++i)
            pg[i] = static_cast<T>((static_cast<double>(ps[i]) - static_cast<double>(pm[i])) * scale);
    }
    return grad;
}

// e = alpha * L_s + beta * sum_k mult_k * Psi_k + gamma * Psi_softmax
inline double combined_loss(double label_loss, const std::vector<double>& body_losses,
                            const std::vector<double>& multipliers, double softmax_loss,
                            double alpha, double beta, double gamma) {
    if (alpha < 0 || beta < 0 || gamma < 0) throw NegativeWeight("combined_loss: negative weight");
    if (multipliers.size() != body_losses.size())
        throw ShapeMismatch("combined_loss: multiplier count");
    double probe_sum = 0;
    for (std::size_t i = 0; i < body_losses.size(); ++i)
        probe_sum += multipliers[i] * body_losses[i];
    return alpha * label_loss + beta * probe_sum + gamma * softmax_loss;
}

template <class T>
struct SoftmaxProbeResult {
    double psi = 0;
    Tensor<T> d_mentee_logits;
};

// The gamma-weighted probe between the two temperature-softened softmax
// outputs, evaluated from the raw logits of both networks. Gradient flows to
// the mentee logits only.
template <class T>
SoftmaxProbeResult<T> softmax_probe(const Tensor<T>& mentor_logits, const Tensor<T>& mentee_logits,
                                    double temperature) {
    if (mentor_logits.rank() != 2 || mentee_logits.rank() != 2 ||
        mentor_logits.extent(1) != mentee_logits.extent(1))
        throw ProbeShapeError("softmax probe needs equal class counts, got " +
                              shape_str(mentor_logits.shape()) + " vs " +
                              shape_str(mentee_logits.shape()));
    SoftmaxProbeResult<T> res;
    Tensor<T> pm = softmax_T(mentor_logits, temperature);
    Tensor<T> ps = softmax_T(mentee_logits, temperature);
    res.psi = probe_loss(pm, ps);
    Tensor<T> dp = probe_grad(pm, ps);
    res.d_mentee_logits = softmax_T_backward(ps, dp, temperature);
    return res;
}

} // namespace mentee
