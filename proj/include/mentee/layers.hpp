#pragma once
// Layer zoo: Dense, Conv, ReLU, MaxPool(2x2), Dropout, BatchNorm, SoftmaxT.
// Forward caches whatever backward needs; backward accumulates parameter
// gradients in place and returns the gradient w.r.t. the layer input.

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentee/errors.hpp"
#include "mentee/losses.hpp"
#include "mentee/rng.hpp"
#include "mentee/tensor.hpp"

namespace mentee {

using json = nlohmann::json;

enum class Mode { train, eval };

struct LayerSpec {
    std::string kind; // dense|conv|relu|maxpool|dropout|batchnorm|softmax
    std::size_t units = 0;
    std::size_t filters = 0, kh = 0, kw = 0, stride = 1, pad = 0;
    double rate = 0.5;
    double eps = 1e-5, momentum = 0.9;
    double temperature = 1.0;
    double init_mean = 0.0, init_std = 0.01;

    void validate() const {
        if (kind == "dense") {
            if (units == 0) throw ConfigError("dense: units must be positive");
        } else if (kind == "conv") {
            if (filters == 0 || kh == 0 || kw == 0) throw ConfigError("conv: filters/kh/kw must be positive");
            if (stride == 0) throw ConfigError("conv: stride must be positive");
        } else if (kind == "dropout") {
            if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout: rate must be in [0,1)");
        } else if (kind == "batchnorm") {
            if (!(eps > 0)) throw ConfigError("batchnorm: eps must be positive");
            if (!(momentum >= 0 && momentum < 1)) throw ConfigError("batchnorm: momentum must be in [0,1)");
        } else if (kind == "softmax") {
            if (!(temperature > 0)) throw ConfigError("softmax: temperature must be positive");
        } else if (kind != "relu" && kind != "maxpool") {
            throw ConfigError("unknown layer kind '" + kind + "'");
        }
        if (init_std < 0) throw ConfigError(kind + ": init_std must be >= 0");
    }

    json to_json() const {
        json j;
        j["kind"] = kind;
        if (kind == "dense") {
            j["units"] = units;
            j["init_mean"] = init_mean;
            j["init_std"] = init_std;
        } else if (kind == "conv") {
            j["filters"] = filters;
            j["kh"] = kh;
            j["kw"] = kw;
            j["stride"] = stride;
            j["pad"] = pad;
            j["init_mean"] = init_mean;
            j["init_std"] = init_std;
        } else if (kind == "dropout") {
            j["rate"] = rate;
        } else if (kind == "batchnorm") {
            j["eps"] = eps;
            j["momentum"] = momentum;
        } else if (kind == "softmax") {
            j["temperature"] = temperature;
        }
        return j;
    }

    static LayerSpec from_json(const json& j);
};

template <class T>
struct ParamRef {
    std::string name;
    Tensor<T>* value = nullptr;
    Tensor<T>* grad = nullptr;
    bool is_weight = false; // l1/l2 regularization applies
};

template <class T>
class Layer {
public:
    explicit Layer(LayerSpec spec) : spec_(std::move(spec)) {}
    virtual ~Layer() = default;

    const LayerSpec& spec() const { return spec_; }

    // Materialize parameters for a per-sample input shape; returns the
    // per-sample output shape.
    virtual Shape build(const Shape& in) = 0;
    virtual void init(SeededRng&) {}
    virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, SeededRng* rng) = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    virtual void params(std::vector<ParamRef<T>>&, const std::string&) {}
    virtual void buffers(std::vector<Tensor<T>*>&) {}
    virtual void zero_grads() {}

    // Frozen layers keep parameters and state (batch-norm running statistics
    // included) bitwise unchanged by training.
    bool trainable() const { return trainable_; }
    void set_trainable(bool t) { trainable_ = t; }

protected:
    LayerSpec spec_;
    bool trainable_ = true;
};

namespace detail {

template <class T>
Tensor<T> flatten2(const Tensor<T>& x) {
    std::size_t n = x.extent(0);
    return x.reshaped({n, x.size() / n});
}

} // namespace detail

template <class T>
class DenseLayer final : public Layer<T> {
public:
    using Layer<T>::spec_;
    explicit DenseLayer(LayerSpec s) : Layer<T>(std::move(s)) {}

    Shape build(const Shape& in) override {
        in_shape_ = in;
        d_in_ = shape_numel(in);
        w_ = Tensor<T>({d_in_, spec_.units});
        b_ = Tensor<T>({spec_.units});
        dw_ = zeros_like(w_);
        db_ = zeros_like(b_);
        return {spec_.units};
    }

    void init(SeededRng& rng) override {
        w_ = gaussian_fill<T>(w_.shape(), spec_.init_mean, spec_.init_std, rng);
        b_.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, Mode, SeededRng*) override {
        x2_ = detail::flatten2(x);
        Tensor<T> y = matmul(x2_, w_);
        const std::size_t n = y.extent(0), u = spec_.units;
        for (std::size_t i = 0; i < n; ++i) {
            T* row = y.data() + i * u;
            for (std::size_t j = 0; j < u; ++j) row[j] += b_[j];
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        dw_ += matmul_tn(x2_, dy);
        const std::size_t n = dy.extent(0), u = spec_.units;
        for (std::size_t i = 0; i < n; ++i) {
            const T* row = dy.data() + i * u;
            for (std::size_t j = 0; j < u; ++j) db_[j] += row[j];
        }
        Tensor<T> dx = matmul_nt(dy, w_);
        Shape full = in_shape_;
        full.insert(full.begin(), n);
        return dx.reshaped(full);
    }

    void params(std::vector<ParamRef<T>>& out, const std::string& prefix) override {
        out.push_back({prefix + ".w", &w_, &dw_, true});
        out.push_back({prefix + ".b", &b_, &db_, false});
    }

    void zero_grads() override {
        dw_.fill(T(0));
        db_.fill(T(0));
    }

private:
    Shape in_shape_;
    std::size_t d_in_ = 0;
    Tensor<T> w_, b_, dw_, db_;
    Tensor<T> x2_;
};

template <class T>
class ConvLayer final : public Layer<T> {
public:
    using Layer<T>::spec_;
    explicit ConvLayer(LayerSpec s) : Layer<T>(std::move(s)) {}

    Shape build(const Shape& in) override {
        if (in.size() != 3) throw ShapeMismatch("conv expects [C,H,W] input, got " + shape_str(in));
        w_ = Tensor<T>({spec_.filters, in[0], spec_.kh, spec_.kw});
        b_ = Tensor<T>({spec_.filters});
        dw_ = zeros_like(w_);
        db_ = zeros_like(b_);
        std::size_t oh = 0, ow = 0;
        conv2d_check({1, in[0], in[1], in[2]}, w_.shape(), spec_.stride, spec_.pad, oh, ow);
        return {spec_.filters, oh, ow};
    }

    void init(SeededRng& rng) override {
        w_ = gaussian_fill<T>(w_.shape(), spec_.init_mean, spec_.init_std, rng);
        b_.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, Mode, SeededRng*) override {
        x_ = x;
        Tensor<T> y = conv2d(x, w_, spec_.stride, spec_.pad);
        const std::size_t n = y.extent(0), f = y.extent(1), hw = y.extent(2) * y.extent(3);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < f; ++c) {
                T* plane = y.data() + (i * f + c) * hw;
                const T bias = b_[c];
                for (std::size_t k = 0; k < hw; ++k) plane[k] += bias;
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        auto [dx, dw] = conv2d_grads(x_, w_, dy, spec_.stride, spec_.pad);
        dw_ += dw;
        const std::size_t n = dy.extent(0), f = dy.extent(1), hw = dy.extent(2) * dy.extent(3);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < f; ++c) {
                const T* plane = dy.data() + (i * f + c) * hw;
                T acc = T(0);
                for (std::size_t k = 0; k < hw; ++k) acc += plane[k];
                db_[c] += acc;
            }
        return std::move(dx);
    }

    void params(std::vector<ParamRef<T>>& out, const std::string& prefix) override {
        out.push_back({prefix + ".w", &w_, &dw_, true});
        out.push_back({prefix + ".b", &b_, &db_, false});
    }

    void zero_grads() override {
        dw_.fill(T(0));
        db_.fill(T(0));
    }

    const Tensor<T>& filters() const { return w_; }

private:
    Tensor<T> w_, b_, dw_, db_;
    Tensor<T> x_;
};

template <class T>
class ReluLayer final : public Layer<T> {
public:
    explicit ReluLayer(LayerSpec s) : Layer<T>(std::move(s)) {}

    Shape build(const Shape& in) override { return in; }

    Tensor<T> forward(const Tensor<T>& x, Mode, SeededRng*) override {
        x_ = x;
        Tensor<T> y = x;
        for (T& v : y) v = v > T(0) ? v : T(0);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (!(x_[i] > T(0))) dx[i] = T(0);
        return dx;
    }

private:
    Tensor<T> x_;
};

// 2x2 max pooling, stride 2. Ties resolve to the first index in row-major
// scan order.
template <class T>
class MaxPoolLayer final : public Layer<T> {
public:
    explicit MaxPoolLayer(LayerSpec s) : Layer<T>(std::move(s)) {}

    Shape build(const Shape& in) override {
        if (in.size() != 3) throw ShapeMismatch("maxpool expects [C,H,W], got " + shape_str(in));
        if (in[1] % 2 != 0 || in[2] % 2 != 0)
            throw ShapeMismatch("maxpool(2x2): spatial extents must be even, got " + shape_str(in));
        return {in[0], in[1] / 2, in[2] / 2};
    }

    Tensor<T> forward(const Tensor<T>& x, Mode, SeededRng*) override {
        in_shape_ = x.shape();
        const std::size_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
        Tensor<T> y({n, c, h / 2, w / 2});
        argmax_.assign(y.size(), 0);
        std::size_t o = 0;
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t yy = 0; yy + 1 < h; yy += 2)
                    for (std::size_t xx = 0; xx + 1 < w; xx += 2) {
                        std::size_t best = ((b * c + ch) * h + yy) * w + xx;
                        T bv = x[best];
                        const std::size_t cand[3] = {best + 1, best + w, best + w + 1};
                        for (std::size_t k = 0; k < 3; ++k)
                            if (x[cand[k]] > bv) {
                                bv = x[cand[k]];
                                best = cand[k];
                            }
                        y[o] = bv;
                        argmax_[o] = best;
                        ++o;
                    }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx(in_shape_);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[argmax_[i]] += dy[i];
        return dx;
    }

private:
    Shape in_shape_;
    std::vector<std::size_t> argmax_;
};

// Inverted dropout: train-mode outputs are scaled by 1/(1-rate) so eval mode
// is the identity.
template <class T>
class DropoutLayer final : public Layer<T> {
public:
    using Layer<T>::spec_;
    explicit DropoutLayer(LayerSpec s) : Layer<T>(std::move(s)) {}

    Shape build(const Shape& in) override { return in; }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, SeededRng* rng) override {
        if (mode == Mode::eval || spec_.rate == 0.0) {
            mask_ = Tensor<T>();
            return x;
        }
        if (!rng) throw Error("dropout: train-mode forward needs an rng");
        const T keep_scale = static_cast<T>(1.0 / (1.0 - spec_.rate));
        mask_ = Tensor<T>(x.shape());
        Tensor<T> y = x;
        for (std::size_t i = 0; i < y.size(); ++i) {
            const bool keep = rng->next_unit() >= spec_.rate;
            mask_[i] = keep ? keep_scale : T(0);
            y[i] *= mask_[i];
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        if (mask_.empty()) return dy; // eval-mode or rate 0: identity
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= mask_[i];
        return dx;
    }

private:
    Tensor<T> mask_;
};

// Batch normalization over features (dense input) or channels (conv input).
// Train mode normalizes with batch statistics and updates running stats;
// eval mode uses running stats.
template <class T>
class BatchNormLayer final : public Layer<T> {
public:
    using Layer<T>::spec_;
    explicit BatchNormLayer(LayerSpec s) : Layer<T>(std::move(s)) {}

    Shape build(const Shape& in) override {
        if (in.size() != 1 && in.size() != 3)
            throw ShapeMismatch("batchnorm expects [D] or [C,H,W], got " + shape_str(in));
        feat_ = in[0];
        gamma_ = Tensor<T>({feat_}, T(1));
        beta_ = Tensor<T>({feat_});
        dgamma_ = zeros_like(gamma_);
        dbeta_ = zeros_like(beta_);
        run_mean_ = Tensor<T>({feat_});
        run_var_ = Tensor<T>({feat_}, T(1));
        return in;
    }

    void init(SeededRng&) override {
        gamma_.fill(T(1));
        beta_.fill(T(0));
        run_mean_.fill(T(0));
        run_var_.fill(T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, Mode mode, SeededRng*) override {
        const std::size_t n = x.extent(0);
        const std::size_t spatial = x.size() / (n * feat_);
        const std::size_t m = n * spatial;
        Tensor<T> y(x.shape());
        // a frozen batch-norm layer must not touch its running statistics
        batch_path_ = mode == Mode::train && this->trainable_;
        if (batch_path_) {
            mean_.assign(feat_, 0.0);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t f = 0; f < feat_; ++f) {
                    const T* px = x.data() + (b * feat_ + f) * spatial;
                    double acc = 0;
                    for (std::size_t s = 0; s < spatial; ++s) acc += static_cast<double>(px[s]);
                    mean_[f] += acc;
                }
            for (std::size_t f = 0; f < feat_; ++f) mean_[f] /= static_cast<double>(m);
            var_.assign(feat_, 0.0);
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t f = 0; f < feat_; ++f) {
                    const T* px = x.data() + (b * feat_ + f) * spatial;
                    double acc = 0;
                    for (std::size_t s = 0; s < spatial; ++s) {
                        const double d = static_cast<double>(px[s]) - mean_[f];
                        acc += d * d;
                    }
                    var_[f] += acc;
                }
            for (std::size_t f = 0; f < feat_; ++f) var_[f] /= static_cast<double>(m);
            inv_std_.resize(feat_);
            for (std::size_t f = 0; f < feat_; ++f)
                inv_std_[f] = 1.0 / std::sqrt(var_[f] + spec_.eps);
            xhat_ = Tensor<T>(x.shape());
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t f = 0; f < feat_; ++f) {
                    const T* px = x.data() + (b * feat_ + f) * spatial;
                    T* ph = xhat_.data() + (b * feat_ + f) * spatial;
                    T* py = y.data() + (b * feat_ + f) * spatial;
                    const T mu = static_cast<T>(mean_[f]);
                    const T is = static_cast<T>(inv_std_[f]);
                    for (std::size_t s = 0; s < spatial; ++s) {
                        ph[s] = (px[s] - mu) * is;
                        py[s] = gamma_[f] * ph[s] + beta_[f];
                    }
                }
            const T mom = static_cast<T>(spec_.momentum);
            for (std::size_t f = 0; f < feat_; ++f) {
                run_mean_[f] = mom * run_mean_[f] + (T(1) - mom) * static_cast<T>(mean_[f]);
                run_var_[f] = mom * run_var_[f] + (T(1) - mom) * static_cast<T>(var_[f]);
            }
            m_ = m;
        } else {
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t f = 0; f < feat_; ++f) {
                    const T* px = x.data() + (b * feat_ + f) * spatial;
                    T* py = y.data() + (b * feat_ + f) * spatial;
                    const T is = T(1) / std::sqrt(run_var_[f] + static_cast<T>(spec_.eps));
                    for (std::size_t s = 0; s < spatial; ++s)
                        py[s] = gamma_[f] * (px[s] - run_mean_[f]) * is + beta_[f];
                }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        const std::size_t n = dy.extent(0);
        const std::size_t spatial = dy.size() / (n * feat_);
        if (!batch_path_) {
            // frozen layer normalized with constant running stats
            Tensor<T> dx(dy.shape());
            for (std::size_t b = 0; b < n; ++b)
                for (std::size_t f = 0; f < feat_; ++f) {
                    const T* pg = dy.data() + (b * feat_ + f) * spatial;
                    T* pd = dx.data() + (b * feat_ + f) * spatial;
                    const T scale = gamma_[f] / std::sqrt(run_var_[f] + static_cast<T>(spec_.eps));
                    for (std::size_t s = 0; s < spatial; ++s) pd[s] = pg[s] * scale;
                }
            return dx;
        }
        const double m = static_cast<double>(m_);
        // per-feature reductions of dy and dy*xhat
        std::vector<double> sum_dy(feat_, 0.0), sum_dyx(feat_, 0.0);
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t f = 0; f < feat_; ++f) {
                const T* pg = dy.data() + (b * feat_ + f) * spatial;
                const T* ph = xhat_.data() + (b * feat_ + f) * spatial;
                double a0 = 0, a1 = 0;
                for (std::size_t s = 0; s < spatial; ++s) {
                    a0 += static_cast<double>(pg[s]);
                    a1 += static_cast<double>(pg[s]) * static_cast<double>(ph[s]);
                }
                sum_dy[f] += a0;
                sum_dyx[f] += a1;
            }
        for (std::size_t f = 0; f < feat_; ++f) {
            dbeta_[f] += static_cast<T>(sum_dy[f]);
            dgamma_[f] += static_cast<T>(sum_dyx[f]);
        }
        Tensor<T> dx(dy.shape());
        for (std::size_t b = 0; b < n; ++b)
            for (std::size_t f = 0; f < feat_; ++f) {
                const T* pg = dy.data() + (b * feat_ + f) * spatial;
                const T* ph = xhat_.data() + (b * feat_ + f) * spatial;
                T* pd = dx.data() + (b * feat_ + f) * spatial;
                const double g = static_cast<double>(gamma_[f]);
                const double is = inv_std_[f];
                for (std::size_t s = 0; s < spatial; ++s) {
                    const double t = m * static_cast<double>(pg[s]) - sum_dy[f] -
                                     static_cast<double>(ph[s]) * sum_dyx[f];
                    pd[s] = static_cast<T>(g * is * t / m);
                }
            }
        return dx;
    }

    void params(std::vector<ParamRef<T>>& out, const std::string& prefix) override {
        out.push_back({prefix + ".gamma", &gamma_, &dgamma_, false});
        out.push_back({prefix + ".beta", &beta_, &dbeta_, false});
    }

    void buffers(std::vector<Tensor<T>*>& out) override {
        out.push_back(&run_mean_);
        out.push_back(&run_var_);
    }

    void zero_grads() override {
        dgamma_.fill(T(0));
        dbeta_.fill(T(0));
    }

private:
    std::size_t feat_ = 0;
    Tensor<T> gamma_, beta_, dgamma_, dbeta_;
    Tensor<T> run_mean_, run_var_;
    std::vector<double> mean_, var_, inv_std_;
    Tensor<T> xhat_;
    std::size_t m_ = 0;
    bool batch_path_ = false;
};

template <class T>
class SoftmaxLayer final : public Layer<T> {
public:
    using Layer<T>::spec_;
    explicit SoftmaxLayer(LayerSpec s) : Layer<T>(std::move(s)) {}

    Shape build(const Shape& in) override {
        if (in.size() != 1) throw ShapeMismatch("softmax expects [D], got " + shape_str(in));
        return in;
    }

    Tensor<T> forward(const Tensor<T>& x, Mode, SeededRng*) override {
        y_ = softmax_T(x, spec_.temperature);
        return y_;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        return softmax_T_backward(y_, dy, spec_.temperature);
    }

private:
    Tensor<T> y_;
};

inline LayerSpec LayerSpec::from_json(const json& j) {
    LayerSpec s;
    s.kind = j.at("kind").get<std::string>();
    static const std::vector<std::string> keys = {"kind",     "units", "filters",  "kh",          "kw",
                                                  "stride",   "pad",   "rate",     "eps",         "momentum",
                                                  "temperature", "init_mean", "init_std"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
            throw ConfigError("layer '" + s.kind + "': unknown key '" + it.key() + "'");
    }
    s.units = j.value("units", std::size_t{0});
    s.filters = j.value("filters", std::size_t{0});
    s.kh = j.value("kh", std::size_t{0});
    s.kw = j.value("kw", std::size_t{0});
    s.stride = j.value("stride", std::size_t{1});
    s.pad = j.value("pad", std::size_t{0});
    s.rate = j.value("rate", 0.5);
    s.eps = j.value("eps", 1e-5);
    s.momentum = j.value("momentum", 0.9);
    s.temperature = j.value("temperature", 1.0);
    s.init_mean = j.value("init_mean", 0.0);
    s.init_std = j.value("init_std", 0.01);
    s.validate();
    return s;
}

template <class T>
std::unique_ptr<Layer<T>> make_layer(const LayerSpec& spec) {
    spec.validate();
    if (spec.kind == "dense") return std::make_unique<DenseLayer<T>>(spec);
    if (spec.kind == "conv") return std::make_unique<ConvLayer<T>>(spec);
    if (spec.kind == "relu") return std::make_unique<ReluLayer<T>>(spec);
    if (spec.kind == "maxpool") return std::make_unique<MaxPoolLayer<T>>(spec);
    if (spec.kind == "dropout") return std::make_unique<DropoutLayer<T>>(spec);
    if (spec.kind == "batchnorm") return std::make_unique<BatchNormLayer<T>>(spec);
    if (spec.kind == "softmax") return std::make_unique<SoftmaxLayer<T>>(spec);
    throw ConfigError("unknown layer kind '" + spec.kind + "'");
}

} // namespace mentee
