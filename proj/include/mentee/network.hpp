#pragma once
// Sequential layer stack with a per-layer activation cache. The cache is what
// probes read; backward accepts gradient "taps" so probe gradients can be
// injected at any layer's output alongside the loss gradient.

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mentee/layers.hpp"

namespace mentee {

// Additional gradients w.r.t. the cached output of specific layers.
template <class T>
using GradTaps = std::vector<std::pair<std::size_t, Tensor<T>>>;

template <class T>
class Network {
public:
    Network() = default;

    Network(Shape input_shape, const std::vector<LayerSpec>& specs)
        : input_shape_(std::move(input_shape)) {
        if (specs.empty()) throw ConfigError("network: no layers");
        Shape cur = input_shape_;
        for (const LayerSpec& s : specs) {
            layers_.push_back(make_layer<T>(s));
            cur = layers_.back()->build(cur);
            out_shapes_.push_back(cur);
        }
        cache_.resize(layers_.size());
    }

    std::size_t depth() const { return layers_.size(); }
    const Shape& input_shape() const { return input_shape_; }
    const Shape& out_shape(std::size_t i) const { return out_shapes_.at(i); }
    const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }
    Layer<T>& layer(std::size_t i) { return *layers_.at(i); }

    std::vector<LayerSpec> specs() const {
        std::vector<LayerSpec> out;
        for (const auto& l : layers_) out.push_back(l->spec());
        return out;
    }

    bool frozen() const { return frozen_; }
    void set_frozen(bool f) { frozen_ = f; }

    void init(SeededRng& rng) {
        for (auto& l : layers_) l->init(rng);
    }

    // Runs the batch through every layer, caching each layer's output.
    const Tensor<T>& forward(const Tensor<T>& batch, Mode mode, SeededRng* rng = nullptr,
                             bool check_finite = false) {
        if (batch.rank() != input_shape_.size() + 1 ||
            Shape(batch.shape().begin() + 1, batch.shape().end()) != input_shape_)
            throw ShapeMismatch("forward: batch " + shape_str(batch.shape()) + " does not match input " +
                                shape_str(input_shape_));
        const Tensor<T>* cur = &batch;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            cache_[i] = layers_[i]->forward(*cur, mode, rng);
            if (check_finite && !cache_[i].all_finite())
                throw NonFiniteActivation("layer " + std::to_string(i) + " (" + layers_[i]->spec().kind +
                                          ") produced non-finite values");
            cur = &cache_[i];
        }
        train_cache_ = (mode == Mode::train);
        return cache_.back();
    }

    const Tensor<T>& cache(std::size_t i) const { return cache_.at(i); }
    const Tensor<T>& output() const { return cache_.back(); }

    // Backpropagate the tap gradients through the stack, accumulating
    // parameter gradients. Taps index layer outputs. A frozen network
    // accumulates nothing.
    void backward(const GradTaps<T>& taps) {
        if (frozen_) return;
        if (!train_cache_) throw StaleCache("backward without a train-mode forward");
        for (const auto& [idx, g] : taps) {
            if (idx >= layers_.size()) throw ShapeMismatch("tap index " + std::to_string(idx));
            if (g.shape() != cache_[idx].shape())
                throw ShapeMismatch("tap " + std::to_string(idx) + ": " + shape_str(g.shape()) + " vs " +
                                    shape_str(cache_[idx].shape()));
        }
        // nothing below the lowest trainable layer receives gradients
        std::size_t lowest = layers_.size();
        for (std::size_t i = 0; i < layers_.size(); ++i)
            if (layers_[i]->trainable()) {
                lowest = i;
                break;
            }
        Tensor<T> g = zeros_like(cache_.back());
        for (std::size_t i = layers_.size(); i-- > 0;) {
            if (i < lowest) break;
            for (const auto& [idx, tap] : taps)
                if (idx == i) g += tap;
            g = layers_[i]->backward(g);
        }
        train_cache_ = false;
    }

    void zero_grads() {
        for (auto& l : layers_) l->zero_grads();
    }

    // Parameter registry in declaration order; skips frozen layers. Empty for
    // frozen networks.
    std::vector<ParamRef<T>> trainable_params() {
        if (frozen_) return {};
        std::vector<ParamRef<T>> out;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            if (layers_[i]->trainable()) layers_[i]->params(out, "layer" + std::to_string(i));
        return out;
    }

    void set_layer_trainable(std::size_t i, bool t) { layers_.at(i)->set_trainable(t); }

    // Registry regardless of freeze state (checkpoint IO).
    std::vector<ParamRef<T>> all_params() {
        std::vector<ParamRef<T>> out;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            layers_[i]->params(out, "layer" + std::to_string(i));
        return out;
    }

    std::vector<Tensor<T>*> state_buffers() {
        std::vector<Tensor<T>*> out;
        for (auto& l : layers_) l->buffers(out);
        return out;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (auto& p : all_params()) n += p.value->size();
        for (auto* b : state_buffers()) n += b->size();
        return n;
    }

    // penalty = l1*sum|w| + l2*sum w^2 over weights only; gradients
    // l1*sign(w) + 2*l2*w are accumulated into the weight grads.
    double reg_penalty(double l1, double l2) {
        if (l1 < 0 || l2 < 0) throw NegativeWeight("reg_penalty: negative coefficient");
        if (frozen_) return 0.0;
        double penalty = 0;
        for (auto& p : trainable_params()) {
            if (!p.is_weight) continue;
            Tensor<T>& w = *p.value;
            Tensor<T>& g = *p.grad;
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double wi = static_cast<double>(w[i]);
                penalty += l1 * std::abs(wi) + l2 * wi * wi;
                const double sign = wi > 0 ? 1.0 : (wi < 0 ? -1.0 : 0.0);
                g[i] += static_cast<T>(l1 * sign + 2.0 * l2 * wi);
            }
        }
        return penalty;
    }

    // Index of the last softmax layer, or depth() if none.
    std::size_t softmax_index() const {
        for (std::size_t i = layers_.size(); i-- > 0;)
            if (layers_[i]->spec().kind == "softmax") return i;
        return layers_.size();
    }

private:
    Shape input_shape_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<Shape> out_shapes_;
    std::vector<Tensor<T>> cache_;
    bool frozen_ = false;
    bool train_cache_ = false;
};

using NetworkF = Network<float>;
using NetworkD = Network<double>;

} // namespace mentee
