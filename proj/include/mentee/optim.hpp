#pragma once
// Update rules applied to the combined gradient stream: plain SGD, SGD with
// Polyak momentum, RMSprop with Nesterov-style velocity, Adagrad with Polyak
// momentum. One OptimState per trained network; slot tensors mirror the
// trainable parameter registry.

#include <cmath>
#include <string>
#include <vector>

#include "mentee/errors.hpp"
#include "mentee/network.hpp"
#include "mentee/tensor.hpp"

namespace mentee {

enum class OptKind { sgd, polyak_sgd, rmsprop_nesterov, adagrad_polyak };

inline OptKind opt_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptKind::sgd;
    if (s == "polyak_sgd") return OptKind::polyak_sgd;
    if (s == "rmsprop_nesterov") return OptKind::rmsprop_nesterov;
    if (s == "adagrad_polyak") return OptKind::adagrad_polyak;
    throw ConfigError("unknown optimizer '" + s + "'");
}

inline std::string to_string(OptKind k) {
    switch (k) {
    case OptKind::sgd: return "sgd";
    case OptKind::polyak_sgd: return "polyak_sgd";
    case OptKind::rmsprop_nesterov: return "rmsprop_nesterov";
    case OptKind::adagrad_polyak: return "adagrad_polyak";
    }
    return "?";
}

template <class T>
class OptimState {
public:
    OptimState() = default;

    OptimState(OptKind kind, double momentum = 0.9, double rms_decay = 0.9, double epsilon = 1e-8)
        : kind_(kind), momentum_(momentum), rms_decay_(rms_decay), epsilon_(epsilon) {}

    OptKind kind() const { return kind_; }

    // Zero-initialized accumulators mirroring the registry shapes.
    static OptimState zero_like(OptKind kind, const std::vector<ParamRef<T>>& params,
                                double momentum = 0.9, double rms_decay = 0.9,
                                double epsilon = 1e-8) {
        OptimState s(kind, momentum, rms_decay, epsilon);
        s.allocate(params);
        return s;
    }

    void allocate(const std::vector<ParamRef<T>>& params) {
        velocity_.clear();
        cache_.clear();
        const bool wants_velocity = kind_ != OptKind::sgd;
        const bool wants_cache = kind_ == OptKind::rmsprop_nesterov || kind_ == OptKind::adagrad_polyak;
        for (const auto& p : params) {
            if (wants_velocity) velocity_.emplace_back(p.value->shape());
            if (wants_cache) cache_.emplace_back(p.value->shape());
        }
        slots_ = params.size();
    }

    std::size_t slot_count() const { return slots_; }
    const std::vector<Tensor<T>>& velocity() const { return velocity_; }
    const std::vector<Tensor<T>>& cache() const { return cache_; }

    // Recovery rule: accumulators go back to zero.
    void reset() {
        for (auto& v : velocity_) v.fill(T(0));
        for (auto& c : cache_) c.fill(T(0));
    }

    void step(const std::vector<ParamRef<T>>& params, double eta) {
        if (params.size() != slots_)
            throw ShapeMismatch("optim: " + std::to_string(params.size()) + " params vs " +
                                std::to_string(slots_) + " slots");
        const T lr = static_cast<T>(eta);
        const T mu = static_cast<T>(momentum_);
        const T rho = static_cast<T>(rms_decay_);
        const T eps = static_cast<T>(epsilon_);
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor<T>& w = *params[k].value;
            const Tensor<T>& g = *params[k].grad;
            if (!w.same_shape(g)) throw ShapeMismatch("optim: grad shape for " + params[k].name);
            switch (kind_) {
            case OptKind::sgd:
                for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
                break;
            case OptKind::polyak_sgd: {
                Tensor<T>& v = velocity_[k];
                if (!w.same_shape(v)) throw ShapeMismatch("optim: slot shape for " + params[k].name);
                for (std::size_t i = 0; i < w.size(); ++i) {
                    v[i] = mu * v[i] - lr * g[i];
                    w[i] += v[i];
                }
                break;
            }
            case OptKind::rmsprop_nesterov: {
                Tensor<T>& v = velocity_[k];
                Tensor<T>& c = cache_[k];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    c[i] = rho * c[i] + (T(1) - rho) * g[i] * g[i];
                    v[i] = mu * v[i] - lr * g[i] / std::sqrt(c[i] + eps);
                    w[i] += v[i];
                }
                break;
            }
            case OptKind::adagrad_polyak: {
                Tensor<T>& v = velocity_[k];
                Tensor<T>& c = cache_[k];
                for (std::size_t i = 0; i < w.size(); ++i) {
                    c[i] += g[i] * g[i];
                    v[i] = mu * v[i] - lr * g[i] / std::sqrt(c[i] + eps);
                    w[i] += v[i];
                }
                break;
            }
            }
        }
    }

private:
    OptKind kind_ = OptKind::sgd;
    double momentum_ = 0.9;
    double rms_decay_ = 0.9;
    double epsilon_ = 1e-8;
    std::size_t slots_ = 0;
    std::vector<Tensor<T>> velocity_;
    std::vector<Tensor<T>> cache_;
};

} // namespace mentee
