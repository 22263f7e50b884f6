#pragma once
// Experiment orchestration: the mentored training loop (mentor forward in
// eval mode, mentee forward in train mode, three-term objective, single
// backward through the mentee), plain mentor training as its degenerate case,
// unsupervised gullible pretraining, classifier-head fine-tuning, NaN
// recovery, early stopping, metrics emission, and filter export.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mentee/checkpoint.hpp"
#include "mentee/config.hpp"
#include "mentee/data.hpp"
#include "mentee/metrics.hpp"
#include "mentee/network.hpp"
#include "mentee/optim.hpp"
#include "mentee/pgm.hpp"
#include "mentee/probe.hpp"
#include "mentee/schedule.hpp"
#include "mentee/validate.hpp"

namespace mentee {

namespace fs = std::filesystem;

struct EvalResult {
    double accuracy = 0;
    double mean_loss = 0;
};

inline std::size_t argmax_row(const float* row, std::size_t d) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < d; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

// Eval-mode top-1 accuracy and mean cross-entropy over a labeled dataset.
inline EvalResult evaluate(Network<float>& net, const Dataset& ds, std::size_t batch_size = 500) {
    if (ds.size() == 0) throw EmptyDataset("evaluate: dataset '" + ds.name + "' is empty");
    if (!ds.labels) throw UnlabeledDataset("evaluate: dataset '" + ds.name + "' has no labels");
    const std::size_t sm = net.softmax_index();
    if (sm >= net.depth()) throw ArchMismatch("evaluate: network has no softmax layer");
    const double temp = net.layer(sm).spec().temperature;
    EvalResult res;
    std::size_t correct = 0;
    double loss_sum = 0;
    for (std::size_t start = 0; start < ds.size(); start += batch_size) {
        const std::size_t end = std::min(ds.size(), start + batch_size);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        auto x = gather_images(ds, idx, net.input_shape());
        auto y = gather_labels(ds, idx);
        const auto& probs = net.forward(x, Mode::eval);
        loss_sum += cross_entropy(probs, y, temp).loss * static_cast<double>(idx.size());
        const std::size_t classes = probs.extent(1);
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (argmax_row(probs.data() + i * classes, classes) == static_cast<std::size_t>(y[i]))
                ++correct;
    }
    res.accuracy = static_cast<double>(correct) / static_cast<double>(ds.size());
    res.mean_loss = loss_sum / static_cast<double>(ds.size());
    return res;
}

struct RunData {
    Dataset train;
    std::optional<Dataset> test;
    PreprocessStats stats;
};

// Load, redact, and normalize the configured splits. Preprocessing is fit on
// the run's (possibly redacted) training split and applied to every split.
inline RunData load_run_data(const ExperimentConfig& cfg, bool require_train_labels) {
    if (cfg.data.train_images.empty()) throw ConfigError("data.train_images is required");
    RunData rd;
    std::optional<fs::path> train_labels;
    if (!cfg.data.train_labels.empty()) train_labels = cfg.data.train_labels;
    rd.train = load_idx(cfg.data.train_images, train_labels, cfg.data.class_count);
    if (require_train_labels && !rd.train.labels)
        throw UnlabeledDataset("this run needs train labels");
    if (cfg.data.redaction_p > 0)
        rd.train = redact(rd.train, {cfg.data.redaction_p, cfg.data.redaction_seed.value_or(cfg.seed)});
    rd.stats = fit_preprocess(rd.train, cfg.data.mean_mode);
    rd.train = apply_preprocess(rd.train, rd.stats);
    if (!cfg.data.test_images.empty()) {
        std::optional<fs::path> test_labels;
        if (!cfg.data.test_labels.empty()) test_labels = cfg.data.test_labels;
        rd.test = apply_preprocess(load_idx(cfg.data.test_images, test_labels, cfg.data.class_count),
                                   rd.stats);
    }
    return rd;
}

struct TrainOutcome {
    fs::path out_dir, metrics_csv, best_ckpt, last_ckpt, rolling_ckpt, config_snapshot;
    int epochs_run = 0;
    int recoveries = 0;
    bool has_test = false;
    double final_test_acc = 0, final_test_loss = 0;
    double best_test_acc = 0, best_test_loss = 0;
    std::vector<double> initial_psi; // epoch-0 eval-mode probe means
    std::vector<double> last_psi;    // last epoch's probe means
};

class TrainLoop {
public:
    TrainLoop(const ExperimentConfig& cfg, std::string task, Network<float> net,
              std::optional<Network<float>> mentor, RunData data, Personality personality,
              bool allow_early_stop, bool needs_init)
        : cfg_(cfg),
          task_(std::move(task)),
          net_(std::move(net)),
          mentor_(std::move(mentor)),
          data_(std::move(data)),
          personality_(personality),
          allow_early_stop_(allow_early_stop),
          needs_init_(needs_init) {}

    TrainOutcome run() {
        if (cfg_.out_dir.empty()) throw ConfigError("out_dir is required for training runs");
        fs::create_directories(cfg_.out_dir);
        TrainOutcome out;
        out.out_dir = cfg_.out_dir;
        out.metrics_csv = cfg_.out_dir / "metrics.csv";
        out.best_ckpt = cfg_.out_dir / "best.ckpt";
        out.last_ckpt = cfg_.out_dir / "last.ckpt";
        out.rolling_ckpt = cfg_.out_dir / "rolling.ckpt";
        out.config_snapshot = cfg_.out_dir / "config.json";
        write_snapshot(out.config_snapshot);

        SeededRng master(cfg_.seed);
        SeededRng init_rng = master.derive(1);
        dropout_rng_ = master.derive(2);
        if (needs_init_) net_.init(init_rng);
        if (mentor_) {
            mentor_->set_frozen(true);
            validate_probes(cfg_.probes, *mentor_, net_);
        }

        const std::size_t n_train = data_.train.size();
        if (n_train == 0) throw EmptyDataset("training split is empty");
        plan_ = BatchPlan{cfg_.batch_size, master.derive(3).seed(), false};
        const std::size_t iters_per_epoch = batch_indices(n_train, plan_, 0).size();
        const std::uint64_t total_iters =
            std::max<std::uint64_t>(1, static_cast<std::uint64_t>(cfg_.epochs) * iters_per_epoch);
        sched_ = preset(personality_, total_iters, cfg_.schedule);

        trainable_ = net_.trainable_params();
        opt_ = OptimState<float>::zero_like(cfg_.optimizer.kind, trainable_, cfg_.optimizer.momentum,
                                            cfg_.optimizer.rms_decay, cfg_.optimizer.epsilon);

        MetricsCsv csv(out.metrics_csv);
        rolling_ = ParamSnapshot<float>::capture(net_);
        save_checkpoint(net_, out.rolling_ckpt, {cfg_.seed, 0, true, {}});

        // epoch-0 evaluation row
        {
            MetricsRecord r;
            r.epoch = 0;
            r.iteration = 0;
            const auto w0 = sched_.eval(0);
            r.alpha = w0[0];
            r.beta = w0[1];
            r.gamma = w0[2];
            r.eta = cfg_.lr.lr_at(0, 0);
            if (mentor_ && cfg_.probes.count() > 0 && (w0[1] > 0 || w0[2] > 0)) {
                out.initial_psi = probe_pass(w0[1] > 0, w0[2] > 0);
                r.psi = out.initial_psi;
            }
            if (data_.test && data_.test->labels) {
                const EvalResult ev = evaluate(net_, *data_.test, cfg_.batch_size);
                r.test_acc = ev.accuracy;
                r.has_test_acc = true;
                out.has_test = true;
                best_test_loss_ = ev.mean_loss;
                best_test_acc_ = ev.accuracy;
                // the init weights are the best seen so far
                best_snap_ = rolling_;
                save_checkpoint(net_, out.best_ckpt, {cfg_.seed, 0, true, {}});
            }
            csv.append(r);
        }

        t_ = 0;
        int streak = 0;
        bool stopped = false;
        std::multiset<int> pending(cfg_.inject_nan_epochs.begin(), cfg_.inject_nan_epochs.end());

        for (int e = 0; e < cfg_.epochs && !stopped; ++e) {
            const auto epoch_start = std::chrono::steady_clock::now();
            EpochStats st;
            double eta = 0;
            // attempt the epoch; on a non-finite event restore, reduce the
            // rate, and re-run the same epoch
            while (true) {
                bool inject = false;
                if (auto it = pending.find(e); it != pending.end()) {
                    pending.erase(it);
                    inject = true;
                }
                eta = cfg_.lr.lr_at(e, recoveries_);
                st = EpochStats{};
                st.body_psi_sum.assign(cfg_.probes.body.size(), 0.0);
                const std::uint64_t t_epoch_start = t_;
                const auto batches = batch_indices(n_train, plan_, static_cast<std::uint64_t>(e));
                bool need_retry = false;
                for (std::size_t bi = 0; bi < batches.size(); ++bi) {
                    const bool poison = inject && bi + 1 == batches.size();
                    if (!step_batch(batches[bi], eta, st, poison)) {
                        need_retry = true;
                        break;
                    }
                    ++t_;
                }
                if (!need_retry) break;
                ++recoveries_;
                if (recoveries_ > 6)
                    throw UnrecoverableRun(task_ + ": giving up after " +
                                           std::to_string(recoveries_ - 1) + " recoveries");
                rolling_.restore(net_);
                opt_.reset();
                t_ = t_epoch_start;
            }
            out.epochs_run = e + 1;
            rolling_ = ParamSnapshot<float>::capture(net_);
            save_checkpoint(net_, out.rolling_ckpt, {cfg_.seed, e + 1, true, {}});

            MetricsRecord r;
            r.epoch = e + 1;
            r.iteration = t_ - 1;
            const auto w = sched_.eval(t_ - 1);
            r.alpha = w[0];
            r.beta = w[1];
            r.gamma = w[2];
            r.eta = eta;
            if (st.label_n > 0) {
                r.label_loss = st.label_loss_sum / static_cast<double>(st.label_n);
                r.has_label_loss = true;
                r.train_acc = static_cast<double>(st.correct) / static_cast<double>(st.label_n);
                r.has_train_acc = true;
            }
            for (std::size_t k = 0; k < st.body_psi_sum.size(); ++k)
                if (st.body_n > 0) r.psi.push_back(st.body_psi_sum[k] / static_cast<double>(st.body_n));
            if (st.softmax_n > 0) r.psi.push_back(st.softmax_psi_sum / static_cast<double>(st.softmax_n));
            out.last_psi = r.psi;
            r.total_loss = st.e_sum / static_cast<double>(st.n);
            r.recoveries = recoveries_;

            EvalResult ev;
            if (data_.test && data_.test->labels) {
                ev = evaluate(net_, *data_.test, cfg_.batch_size);
                r.test_acc = ev.accuracy;
                r.has_test_acc = true;
            }
            r.seconds = cfg_.deterministic
                            ? 0.0
                            : std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                            epoch_start)
                                  .count();
            csv.append(r);

            if (r.has_test_acc) {
                if (ev.mean_loss < best_test_loss_) {
                    best_test_loss_ = ev.mean_loss;
                    best_test_acc_ = ev.accuracy;
                    best_snap_ = ParamSnapshot<float>::capture(net_);
                    json m;
                    m["test_acc"] = ev.accuracy;
                    m["test_loss"] = ev.mean_loss;
                    save_checkpoint(net_, out.best_ckpt, {cfg_.seed, e + 1, true, m});
                    streak = 0;
                } else if (allow_early_stop_ && cfg_.early_stop.enabled &&
                           e >= cfg_.early_stop.from_epoch) {
                    if (++streak >= cfg_.early_stop.patience) {
                        stopped = true;
                        best_snap_.restore(net_); // hand back the best weights
                    }
                }
                out.final_test_acc = ev.accuracy;
                out.final_test_loss = ev.mean_loss;
            }
        }

        out.recoveries = recoveries_;
        out.best_test_acc = best_test_acc_;
        out.best_test_loss = best_test_loss_;
        if (stopped && data_.test && data_.test->labels) {
            const EvalResult ev = evaluate(net_, *data_.test, cfg_.batch_size);
            out.final_test_acc = ev.accuracy;
            out.final_test_loss = ev.mean_loss;
        }
        json m;
        if (out.has_test) {
            m["test_acc"] = out.final_test_acc;
            m["test_loss"] = out.final_test_loss;
        }
        save_checkpoint(net_, out.last_ckpt, {cfg_.seed, out.epochs_run, true, m});
        if (!out.has_test) fs::copy_file(out.last_ckpt, out.best_ckpt, fs::copy_options::overwrite_existing);
        return out;
    }

    Network<float>& net() { return net_; }

private:
    struct EpochStats {
        std::size_t n = 0;
        std::size_t label_n = 0;
        std::size_t correct = 0;
        double label_loss_sum = 0;
        double e_sum = 0;
        std::vector<double> body_psi_sum;
        std::size_t body_n = 0;
        double softmax_psi_sum = 0;
        std::size_t softmax_n = 0;
    };

    // The snapshot must reproduce the run, so every field the harness may
    // have overridden (grid sweeps, CLI flags) is written back resolved.
    void write_snapshot(const fs::path& path) {
        json j = cfg_.snapshot.is_object() ? cfg_.snapshot : json::object();
        j["seed"] = cfg_.seed;
        j["out_dir"] = cfg_.out_dir.string();
        j["deterministic"] = cfg_.deterministic;
        j["personality"] = to_string(personality_);
        j["epochs"] = cfg_.epochs;
        if (j.contains("data"))
            j["data"]["redaction_p"] = cfg_.data.redaction_p;
        j["early_stopping"] = {{"enabled", cfg_.early_stop.enabled},
                               {"patience", cfg_.early_stop.patience},
                               {"from_epoch", cfg_.early_stop.from_epoch}};
        std::ofstream f(path, std::ios::trunc);
        if (!f) throw Error("cannot write " + path.string());
        f << j.dump(2) << '\n';
    }

    // One optimizer step. Returns false when a non-finite event demands
    // recovery.
    bool step_batch(const std::vector<std::size_t>& idx, double eta, EpochStats& st, bool poison) {
        const auto w = sched_.eval(t_);
        const double alpha = w[0], beta = w[1], gamma = w[2];
        const bool use_body = mentor_ && !cfg_.probes.body.empty() && beta > 0;
        const bool use_softmax = mentor_ && cfg_.probes.softmax_probe && gamma > 0;
        if (use_body || use_softmax) {
            auto xm = gather_images(data_.train, idx, mentor_->input_shape());
            mentor_->forward(xm, Mode::eval);
        }
        auto x = gather_images(data_.train, idx, net_.input_shape());
        const auto& probs = net_.forward(x, Mode::train, &dropout_rng_);
        const std::size_t sm = net_.softmax_index();

        GradTaps<float> taps;
        double label_loss = 0;
        const bool has_labels = data_.train.labels.has_value();
        if (has_labels) {
            auto y = gather_labels(data_.train, idx);
            auto ce = cross_entropy(probs, y, net_.layer(sm).spec().temperature);
            label_loss = ce.loss;
            const std::size_t classes = probs.extent(1);
            for (std::size_t i = 0; i < idx.size(); ++i)
                if (argmax_row(probs.data() + i * classes, classes) ==
                    static_cast<std::size_t>(y[i]))
                    ++st.correct;
            st.label_n += idx.size();
            st.label_loss_sum += ce.loss * static_cast<double>(idx.size());
            if (alpha > 0) {
                ce.d_logits.scale(static_cast<float>(alpha));
                taps.emplace_back(sm - 1, std::move(ce.d_logits));
            }
        }

        std::vector<double> body_psi(cfg_.probes.body.size(), 0.0);
        std::vector<double> mults(cfg_.probes.body.size(), 1.0);
        double softmax_psi = 0;
        if (use_body) {
            for (std::size_t k = 0; k < cfg_.probes.body.size(); ++k) {
                const ProbeSpec& p = cfg_.probes.body[k];
                const auto& ma = mentor_->cache(p.mentor_layer);
                const auto& sa = net_.cache(p.mentee_layer);
                body_psi[k] = probe_loss(ma, sa);
                mults[k] = p.multiplier;
                auto g = probe_grad(ma, sa);
                g.scale(static_cast<float>(beta * p.multiplier));
                taps.emplace_back(p.mentee_layer, std::move(g));
                st.body_psi_sum[k] += body_psi[k] * static_cast<double>(idx.size());
            }
            st.body_n += idx.size();
        }
        if (use_softmax) {
            const auto& m_logits = mentor_->cache(mentor_->softmax_index() - 1);
            const auto& s_logits = net_.cache(sm - 1);
            auto res = softmax_probe(m_logits, s_logits, cfg_.probe_temperature);
            softmax_psi = res.psi;
            res.d_mentee_logits.scale(static_cast<float>(gamma));
            taps.emplace_back(sm - 1, std::move(res.d_mentee_logits));
            st.softmax_psi_sum += res.psi * static_cast<double>(idx.size());
            st.softmax_n += idx.size();
        }

        double e_loss = combined_loss(label_loss, body_psi, mults, softmax_psi, alpha, beta, gamma);
        if (poison) e_loss = std::numeric_limits<double>::quiet_NaN(); // fault-injection hook

        net_.zero_grads();
        net_.backward(taps);
        const double reg = net_.reg_penalty(cfg_.l1, cfg_.l2);

        // explosion detection: non-finite loss/activations, oversized or
        // non-finite gradients
        if (!std::isfinite(e_loss) || !std::isfinite(reg) || !probs.all_finite()) return false;
        double grad_sq = 0;
        for (const auto& p : trainable_)
            for (const float g : *p.grad) grad_sq += static_cast<double>(g) * static_cast<double>(g);
        if (!std::isfinite(grad_sq) || std::sqrt(grad_sq) > kGradNormLimit) return false;

        opt_.step(trainable_, eta);
        for (const auto& p : trainable_)
            if (!p.value->all_finite()) return false;
        for (const auto* b : net_.state_buffers())
            if (!b->all_finite()) return false;

        st.n += idx.size();
        st.e_sum += e_loss * static_cast<double>(idx.size());
        return true;
    }

    // Eval-mode probe means over the training split (the epoch-0 baseline).
    std::vector<double> probe_pass(bool include_body, bool include_softmax) {
        std::vector<double> body(cfg_.probes.body.size(), 0.0);
        double soft = 0;
        std::size_t total = 0;
        for (std::size_t start = 0; start < data_.train.size(); start += cfg_.batch_size) {
            const std::size_t end = std::min(data_.train.size(), start + cfg_.batch_size);
            std::vector<std::size_t> idx(end - start);
            std::iota(idx.begin(), idx.end(), start);
            auto xm = gather_images(data_.train, idx, mentor_->input_shape());
            mentor_->forward(xm, Mode::eval);
            auto x = gather_images(data_.train, idx, net_.input_shape());
            net_.forward(x, Mode::eval);
            if (include_body)
                for (std::size_t k = 0; k < cfg_.probes.body.size(); ++k) {
                    const ProbeSpec& p = cfg_.probes.body[k];
                    body[k] += probe_loss(mentor_->cache(p.mentor_layer), net_.cache(p.mentee_layer)) *
                               static_cast<double>(idx.size());
                }
            if (include_softmax && cfg_.probes.softmax_probe) {
                const auto& ml = mentor_->cache(mentor_->softmax_index() - 1);
                const auto& sl = net_.cache(net_.softmax_index() - 1);
                soft += softmax_probe(ml, sl, cfg_.probe_temperature).psi *
                        static_cast<double>(idx.size());
            }
            total += idx.size();
        }
        std::vector<double> out;
        if (include_body)
            for (double v : body) out.push_back(v / static_cast<double>(total));
        if (include_softmax && cfg_.probes.softmax_probe)
            out.push_back(soft / static_cast<double>(total));
        return out;
    }

    static constexpr double kGradNormLimit = 1e4;

    const ExperimentConfig& cfg_;
    std::string task_;
    Network<float> net_;
    std::optional<Network<float>> mentor_;
    RunData data_;
    Personality personality_;
    bool allow_early_stop_ = true;
    bool needs_init_ = true;

    SeededRng dropout_rng_{0};
    BatchPlan plan_{};
    ScheduleSet sched_;
    std::vector<ParamRef<float>> trainable_;
    OptimState<float> opt_;
    ParamSnapshot<float> rolling_, best_snap_;
    double best_test_loss_ = std::numeric_limits<double>::infinity();
    double best_test_acc_ = 0;
    int recoveries_ = 0;
    std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Task entry points

inline Network<float> build_net(const ArchCfg& arch) { return Network<float>(arch.input, arch.layers); }

// Plain supervised training of the mentor architecture (independent
// personality through the same loop).
inline TrainOutcome train_mentor(const ExperimentConfig& cfg) {
    if (!cfg.mentor_arch) throw ConfigError("train-mentor needs mentor.arch");
    RunData data = load_run_data(cfg, /*require_train_labels=*/true);
    TrainLoop loop(cfg, "train-mentor", build_net(*cfg.mentor_arch), std::nullopt, std::move(data),
                   Personality::independent, /*allow_early_stop=*/true, /*needs_init=*/true);
    return loop.run();
}

namespace harness_detail {

inline Network<float> load_mentee_start(const ExperimentConfig& cfg, bool& needs_init) {
    if (!cfg.init_checkpoint.empty()) {
        auto loaded = load_checkpoint(cfg.init_checkpoint);
        if (cfg.mentee_arch) {
            const json want = ArchCfg{cfg.mentee_arch->input, cfg.mentee_arch->layers}.to_json();
            json have;
            have["input"] = loaded.net.input_shape();
            json ls = json::array();
            for (const auto& s : loaded.net.specs()) ls.push_back(s.to_json());
            have["layers"] = ls;
            if (want != have)
                throw ArchMismatch("init_checkpoint architecture differs from mentee.arch");
        }
        needs_init = false;
        return std::move(loaded.net);
    }
    if (!cfg.mentee_arch) throw ConfigError("mentee.arch (or init_checkpoint) is required");
    needs_init = true;
    return build_net(*cfg.mentee_arch);
}

inline std::optional<Network<float>> load_mentor_if_needed(const ExperimentConfig& cfg,
                                                           Personality personality) {
    const bool wants_probes = cfg.probes.count() > 0 && personality != Personality::independent;
    if (cfg.mentor_checkpoint.empty()) {
        if (wants_probes)
            throw ConfigError("mentored personalities need mentor.checkpoint");
        return std::nullopt;
    }
    auto loaded = load_checkpoint(cfg.mentor_checkpoint);
    loaded.net.set_frozen(true);
    return std::move(loaded.net);
}

} // namespace harness_detail

// The mentored training loop: per batch, mentor forward in eval mode, mentee
// forward in train mode, weighted label/probe losses, one backward pass
// through the mentee only.
inline TrainOutcome train_mentee(const ExperimentConfig& cfg) {
    bool needs_init = true;
    Network<float> net = harness_detail::load_mentee_start(cfg, needs_init);
    auto mentor = harness_detail::load_mentor_if_needed(cfg, cfg.personality);
    RunData data = load_run_data(cfg, /*require_train_labels=*/cfg.personality != Personality::gullible);
    TrainLoop loop(cfg, "train-mentee", std::move(net), std::move(mentor), std::move(data),
                   cfg.personality, /*allow_early_stop=*/true, needs_init);
    return loop.run();
}

// Gullible pretraining: backpropagate the probe term alone; labels never read.
inline TrainOutcome pretrain_unsupervised(const ExperimentConfig& cfg) {
    if (cfg.mentor_checkpoint.empty()) throw ConfigError("pretrain-unsupervised needs mentor.checkpoint");
    if (cfg.probes.body.empty()) throw ConfigError("pretrain-unsupervised needs body probes");
    bool needs_init = true;
    Network<float> net = harness_detail::load_mentee_start(cfg, needs_init);
    auto loaded = load_checkpoint(cfg.mentor_checkpoint);
    loaded.net.set_frozen(true);
    ExperimentConfig c = cfg;
    c.data.train_labels.clear(); // the contract: labels are never read
    RunData data = load_run_data(c, /*require_train_labels=*/false);
    TrainLoop loop(cfg, "pretrain-unsupervised", std::move(net), std::move(loaded.net),
                   std::move(data), Personality::gullible, /*allow_early_stop=*/false, needs_init);
    return loop.run();
}

// Freeze everything below the final dense+softmax stack and retrain that head.
inline TrainOutcome finetune_classifier(const ExperimentConfig& cfg) {
    if (cfg.init_checkpoint.empty()) throw ConfigError("finetune-classifier needs init_checkpoint");
    auto loaded = load_checkpoint(cfg.init_checkpoint);
    RunData data = load_run_data(cfg, /*require_train_labels=*/true);

    std::vector<LayerSpec> specs = loaded.net.specs();
    std::size_t head = specs.size();
    for (std::size_t i = specs.size(); i-- > 0;)
        if (specs[i].kind == "dense") {
            head = i;
            break;
        }
    if (head == specs.size()) throw ArchMismatch("finetune-classifier: no dense layer to retrain");

    SeededRng master(cfg.seed);
    SeededRng head_rng = master.derive(4);
    Network<float>* net_ptr = &loaded.net;
    std::optional<Network<float>> rebuilt;
    if (specs[head].units != static_cast<std::size_t>(cfg.data.class_count)) {
        // class counts differ: re-initialize the head at the new width
        specs[head].units = static_cast<std::size_t>(cfg.data.class_count);
        rebuilt.emplace(loaded.net.input_shape(), specs);
        for (std::size_t i = 0; i < head; ++i) {
            std::vector<ParamRef<float>> src, dst;
            loaded.net.layer(i).params(src, "p");
            rebuilt->layer(i).params(dst, "p");
            for (std::size_t k = 0; k < src.size(); ++k) *dst[k].value = *src[k].value;
            std::vector<Tensor<float>*> sb, db;
            loaded.net.layer(i).buffers(sb);
            rebuilt->layer(i).buffers(db);
            for (std::size_t k = 0; k < sb.size(); ++k) *db[k] = *sb[k];
        }
        for (std::size_t i = head; i < specs.size(); ++i) rebuilt->layer(i).init(head_rng);
        net_ptr = &*rebuilt;
    }
    for (std::size_t i = 0; i < head; ++i) net_ptr->set_layer_trainable(i, false);

    TrainLoop loop(cfg, "finetune-classifier", std::move(*net_ptr), std::nullopt, std::move(data),
                   Personality::independent, /*allow_early_stop=*/true, /*needs_init=*/false);
    return loop.run();
}

inline EvalResult evaluate_checkpoint(const ExperimentConfig& cfg, const fs::path& ckpt) {
    auto loaded = load_checkpoint(ckpt);
    RunData data = load_run_data(cfg, /*require_train_labels=*/false);
    if (data.test && data.test->labels) return evaluate(loaded.net, *data.test, cfg.batch_size);
    if (data.train.labels) return evaluate(loaded.net, data.train, cfg.batch_size);
    throw UnlabeledDataset("evaluate needs a labeled split");
}

// Write a grayscale grid of a conv layer's filters (channel-averaged) or a
// dense layer's unit weights (reshaped to a square when possible).
inline void export_filters(const fs::path& ckpt, std::size_t layer_index, const fs::path& out_path) {
    auto loaded = load_checkpoint(ckpt);
    if (layer_index >= loaded.net.depth())
        throw NotVisualizable("layer index " + std::to_string(layer_index) + " out of range");
    const std::string kind = loaded.net.layer(layer_index).spec().kind;
    std::vector<ParamRef<float>> params;
    loaded.net.layer(layer_index).params(params, "p");
    std::vector<Tensor<float>> tiles;
    if (kind == "conv") {
        const Tensor<float>& w = *params[0].value; // [F,C,kh,kw]
        const std::size_t f = w.extent(0), c = w.extent(1), kh = w.extent(2), kw = w.extent(3);
        for (std::size_t fo = 0; fo < f; ++fo) {
            Tensor<float> tile({kh, kw});
            for (std::size_t y = 0; y < kh; ++y)
                for (std::size_t x = 0; x < kw; ++x) {
                    float acc = 0;
                    for (std::size_t ch = 0; ch < c; ++ch) acc += w.at4(fo, ch, y, x);
                    tile.at2(y, x) = acc / static_cast<float>(c);
                }
            tiles.push_back(std::move(tile));
        }
    } else if (kind == "dense") {
        const Tensor<float>& w = *params[0].value; // [D,U]
        const std::size_t d = w.extent(0), u = w.extent(1);
        const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
        if (side * side != d)
            throw NotVisualizable("dense layer input width " + std::to_string(d) + " is not square");
        for (std::size_t unit = 0; unit < u; ++unit) {
            Tensor<float> tile({side, side});
            for (std::size_t k = 0; k < d; ++k) tile[k] = w.at2(k, unit);
            tiles.push_back(std::move(tile));
        }
    } else {
        throw NotVisualizable("layer kind '" + kind + "' has no filters to export");
    }
    write_pgm(render_filter_grid(tiles), out_path);
}

// ---------------------------------------------------------------------------
// Redaction grid: the p-sweep with mentored and independent mentees.

struct GridRow {
    std::size_t p = 0;
    std::string mode; // "mentored" | "independent"
    std::uint64_t seed = 0;
    double final_test_acc = 0;
    double best_test_acc = 0;
    int epochs_run = 0;
    int recoveries = 0;
};

struct GridSummary {
    std::vector<GridRow> rows;
    fs::path csv_path;

    double mean_acc(std::size_t p, const std::string& mode) const {
        double acc = 0;
        int n = 0;
        for (const auto& r : rows)
            if (r.p == p && r.mode == mode) {
                acc += r.final_test_acc;
                ++n;
            }
        return n ? acc / n : 0.0;
    }
};

// Runs the full p-sweep for both mentored and independent mentees. Paired
// runs share the seed (hence redaction subset, initialization, and batch
// order), iteration counts, and learning-rate schedule; early stopping is
// disabled so both sides see the exact same number of iterations.
inline GridSummary redaction_grid(const ExperimentConfig& cfg) {
    if (cfg.out_dir.empty()) throw ConfigError("redaction-grid needs out_dir");
    fs::create_directories(cfg.out_dir);
    GridSummary summary;
    summary.csv_path = cfg.out_dir / "grid_summary.csv";
    std::ofstream csv(summary.csv_path, std::ios::trunc);
    csv << "p,mode,seed,final_test_acc,best_test_acc,epochs_run,recoveries\n";
    for (std::size_t p : cfg.grid.p_values) {
        for (std::uint64_t seed : cfg.grid.seeds) {
            for (const bool mentored : {true, false}) {
                ExperimentConfig run = cfg;
                run.seed = seed;
                run.data.redaction_p = p;
                run.personality = mentored ? cfg.personality : Personality::independent;
                run.early_stop.enabled = false;
                const std::string mode = mentored ? "mentored" : "independent";
                run.out_dir = cfg.out_dir /
                              ("p" + std::to_string(p) + "_" + mode + "_s" + std::to_string(seed));
                const TrainOutcome out = train_mentee(run);
                GridRow row{p, mode, seed, out.final_test_acc, out.best_test_acc, out.epochs_run,
                            out.recoveries};
                summary.rows.push_back(row);
                csv << p << ',' << mode << ',' << seed << ',' << fmt_g(row.final_test_acc) << ','
                    << fmt_g(row.best_test_acc) << ',' << row.epochs_run << ',' << row.recoveries
                    << '\n';
                csv.flush();
            }
        }
    }
    return summary;
}

} // namespace mentee
