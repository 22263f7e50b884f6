#pragma once
// Declarative experiment configuration (JSON). Parsing is strict: unknown
// keys anywhere in the document are configuration errors.

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mentee/data.hpp"
#include "mentee/errors.hpp"
#include "mentee/layers.hpp"
#include "mentee/optim.hpp"
#include "mentee/probe.hpp"
#include "mentee/schedule.hpp"

namespace mentee {

namespace cfg_detail {

inline void check_keys(const json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
}

} // namespace cfg_detail

struct ArchCfg {
    Shape input;
    std::vector<LayerSpec> layers;

    static ArchCfg from_json(const json& j, const std::string& where) {
        cfg_detail::check_keys(j, where, {"input", "layers"});
        ArchCfg a;
        a.input = j.at("input").get<Shape>();
        if (a.input.empty() || shape_numel(a.input) == 0)
            throw ConfigError(where + ": bad input shape");
        for (const auto& lj : j.at("layers")) a.layers.push_back(LayerSpec::from_json(lj));
        if (a.layers.empty()) throw ConfigError(where + ": no layers");
        return a;
    }

    json to_json() const {
        json j;
        j["input"] = input;
        json ls = json::array();
        for (const auto& l : layers) ls.push_back(l.to_json());
        j["layers"] = ls;
        return j;
    }
};

struct OptimizerCfg {
    OptKind kind = OptKind::rmsprop_nesterov;
    double momentum = 0.9;
    double rms_decay = 0.9;
    double epsilon = 1e-8;
};

struct DataCfg {
    std::string train_images, train_labels;
    std::string test_images, test_labels;
    std::size_t redaction_p = 0; // 0: no redaction
    std::optional<std::uint64_t> redaction_seed;
    MeanMode mean_mode = MeanMode::per_pixel;
    int class_count = 10;
};

struct EarlyStopCfg {
    bool enabled = true;
    int patience = 10;
    int from_epoch = 75; // never trigger before the learning-rate drop
};

struct GridCfg {
    std::vector<std::size_t> p_values = {500, 250, 100, 50, 10, 1};
    std::vector<std::uint64_t> seeds = {1, 2, 3};
};

struct GradcheckCfg {
    std::size_t batch = 4;
    std::vector<std::array<double, 3>> settings = {{1, 0, 0}, {0, 1, 0}, {1, 0.5, 0.25}};
    double tolerance = 1e-5;
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::filesystem::path out_dir;
    bool deterministic = false;
    int epochs = 150;
    std::size_t batch_size = 500;
    double l1 = 1e-4, l2 = 1e-4;
    double probe_temperature = 3.0;
    double eta0 = 0.01;
    OptimizerCfg optimizer;
    LrSchedule lr; // eta0 mirrored in
    Personality personality = Personality::obedient;
    PresetParams schedule;
    std::optional<ArchCfg> mentor_arch;
    std::string mentor_checkpoint;
    std::optional<ArchCfg> mentee_arch;
    std::string init_checkpoint;
    ProbeSet probes;
    DataCfg data;
    EarlyStopCfg early_stop;
    std::vector<int> inject_nan_epochs; // fault-injection hook for tests
    GridCfg grid;
    GradcheckCfg gradcheck;
    json snapshot; // resolved document, written next to run artifacts

    static ExperimentConfig from_json(json j);
    static ExperimentConfig load(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot read config " + path.string());
        json j;
        try {
            j = json::parse(f);
        } catch (const json::exception& e) {
            throw ConfigError(path.string() + ": " + e.what());
        }
        return from_json(std::move(j));
    }
};

inline ExperimentConfig ExperimentConfig::from_json(json j) {
    using cfg_detail::check_keys;
    check_keys(j, "config",
               {"seed", "out_dir", "deterministic", "epochs", "batch_size", "l1", "l2",
                "probe_temperature", "eta0", "optimizer", "lr", "personality", "schedule",
                "mentor", "mentee", "init_checkpoint", "probes", "data", "early_stopping",
                "inject_nan_epochs", "grid", "gradcheck"});
    ExperimentConfig c;
    c.seed = j.value("seed", std::uint64_t{1});
    c.out_dir = j.value("out_dir", std::string{});
    c.deterministic = j.value("deterministic", false);
    c.epochs = j.value("epochs", 150);
    if (c.epochs < 0) throw ConfigError("epochs must be >= 0");
    c.batch_size = j.value("batch_size", std::size_t{500});
    if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
    c.l1 = j.value("l1", 1e-4);
    c.l2 = j.value("l2", 1e-4);
    if (c.l1 < 0 || c.l2 < 0) throw ConfigError("l1/l2 must be >= 0");
    c.probe_temperature = j.value("probe_temperature", 3.0);
    if (c.probe_temperature <= 0) throw ConfigError("probe_temperature must be positive");
    c.eta0 = j.value("eta0", 0.01);
    if (c.eta0 <= 0) throw ConfigError("eta0 must be positive");

    if (j.contains("optimizer")) {
        const json& o = j["optimizer"];
        check_keys(o, "optimizer", {"kind", "momentum", "rms_decay", "epsilon"});
        c.optimizer.kind = opt_kind_from_string(o.value("kind", std::string{"rmsprop_nesterov"}));
        c.optimizer.momentum = o.value("momentum", 0.9);
        c.optimizer.rms_decay = o.value("rms_decay", 0.9);
        c.optimizer.epsilon = o.value("epsilon", 1e-8);
        if (c.optimizer.epsilon <= 0) throw ConfigError("optimizer.epsilon must be positive");
    }
    if (j.contains("lr")) {
        const json& o = j["lr"];
        check_keys(o, "lr", {"drop_epoch", "drop_factor", "recovery_factor"});
        c.lr.drop_epoch = o.value("drop_epoch", 75);
        c.lr.drop_factor = o.value("drop_factor", 100.0);
        c.lr.recovery_factor = o.value("recovery_factor", 10.0);
        if (c.lr.drop_factor < 1 || c.lr.recovery_factor < 1)
            throw ConfigError("lr factors must be >= 1");
    }
    c.lr.eta0 = c.eta0;
    c.personality = personality_from_string(j.value("personality", std::string{"obedient"}));
    if (j.contains("schedule")) {
        const json& o = j["schedule"];
        check_keys(o, "schedule", {"rho", "alpha0", "beta0", "gamma0", "gamma_scale", "ramp"});
        c.schedule.rho = o.value("rho", 0.5);
        if (!(c.schedule.rho > 0 && c.schedule.rho <= 1)) throw ConfigError("schedule.rho in (0,1]");
        c.schedule.alpha0 = o.value("alpha0", 0.1);
        c.schedule.beta0 = o.value("beta0", -1.0);
        c.schedule.gamma0 = o.value("gamma0", -1.0);
        c.schedule.gamma_scale = o.value("gamma_scale", 1.0);
        const std::string ramp = o.value("ramp", std::string{"quadratic"});
        if (ramp == "quadratic")
            c.schedule.ramp = AnnealFn::Shape::quadratic;
        else if (ramp == "linear")
            c.schedule.ramp = AnnealFn::Shape::linear;
        else
            throw ConfigError("schedule.ramp must be 'linear' or 'quadratic'");
    }
    if (j.contains("mentor")) {
        const json& o = j["mentor"];
        check_keys(o, "mentor", {"arch", "checkpoint"});
        if (o.contains("arch")) c.mentor_arch = ArchCfg::from_json(o["arch"], "mentor.arch");
        c.mentor_checkpoint = o.value("checkpoint", std::string{});
    }
    if (j.contains("mentee")) {
        const json& o = j["mentee"];
        check_keys(o, "mentee", {"arch"});
        if (o.contains("arch")) c.mentee_arch = ArchCfg::from_json(o["arch"], "mentee.arch");
    }
    c.init_checkpoint = j.value("init_checkpoint", std::string{});
    if (j.contains("probes")) {
        for (const auto& pj : j["probes"]) {
            cfg_detail::check_keys(pj, "probe", {"mentor_layer", "mentee_layer", "group", "multiplier"});
            ProbeSpec p;
            p.mentor_layer = pj.at("mentor_layer").get<std::size_t>();
            p.mentee_layer = pj.at("mentee_layer").get<std::size_t>();
            const std::string group = pj.value("group", std::string{"body"});
            p.multiplier = pj.value("multiplier", 1.0);
            if (p.multiplier < 0) throw ConfigError("probe multiplier must be >= 0");
            if (group == "body") {
                p.group = ProbeGroup::body;
                c.probes.body.push_back(p);
            } else if (group == "softmax") {
                p.group = ProbeGroup::softmax;
                if (c.probes.softmax_probe) throw ConfigError("duplicate softmax probe");
                c.probes.softmax_probe = p;
            } else {
                throw ConfigError("probe group must be 'body' or 'softmax'");
            }
        }
        c.probes.validate();
    }
    if (j.contains("data")) {
        const json& o = j["data"];
        check_keys(o, "data",
                   {"train_images", "train_labels", "test_images", "test_labels", "redaction_p",
                    "redaction_seed", "mean_mode", "class_count"});
        c.data.train_images = o.value("train_images", std::string{});
        c.data.train_labels = o.value("train_labels", std::string{});
        c.data.test_images = o.value("test_images", std::string{});
        c.data.test_labels = o.value("test_labels", std::string{});
        c.data.redaction_p = o.value("redaction_p", std::size_t{0});
        if (o.contains("redaction_seed"))
            c.data.redaction_seed = o["redaction_seed"].get<std::uint64_t>();
        const std::string mm = o.value("mean_mode", std::string{"per_pixel"});
        if (mm == "per_pixel")
            c.data.mean_mode = MeanMode::per_pixel;
        else if (mm == "global")
            c.data.mean_mode = MeanMode::global;
        else
            throw ConfigError("data.mean_mode must be 'per_pixel' or 'global'");
        c.data.class_count = o.value("class_count", 10);
        if (c.data.class_count < 2) throw ConfigError("data.class_count must be >= 2");
    }
    if (j.contains("early_stopping")) {
        const json& o = j["early_stopping"];
        check_keys(o, "early_stopping", {"enabled", "patience", "from_epoch"});
        c.early_stop.enabled = o.value("enabled", true);
        c.early_stop.patience = o.value("patience", 10);
        c.early_stop.from_epoch = o.value("from_epoch", 75);
        if (c.early_stop.patience < 1) throw ConfigError("early_stopping.patience must be >= 1");
    }
    if (j.contains("inject_nan_epochs"))
        c.inject_nan_epochs = j["inject_nan_epochs"].get<std::vector<int>>();
    if (j.contains("grid")) {
        const json& o = j["grid"];
        check_keys(o, "grid", {"p_values", "seeds"});
        if (o.contains("p_values")) c.grid.p_values = o["p_values"].get<std::vector<std::size_t>>();
        if (o.contains("seeds")) c.grid.seeds = o["seeds"].get<std::vector<std::uint64_t>>();
        if (c.grid.p_values.empty() || c.grid.seeds.empty())
            throw ConfigError("grid needs p_values and seeds");
    }
    if (j.contains("gradcheck")) {
        const json& o = j["gradcheck"];
        check_keys(o, "gradcheck", {"batch", "settings", "tolerance"});
        c.gradcheck.batch = o.value("batch", std::size_t{4});
        if (o.contains("settings")) {
            c.gradcheck.settings.clear();
            for (const auto& s : o["settings"]) {
                auto v = s.get<std::vector<double>>();
                if (v.size() != 3) throw ConfigError("gradcheck.settings entries are [alpha,beta,gamma]");
                c.gradcheck.settings.push_back({v[0], v[1], v[2]});
            }
        }
        c.gradcheck.tolerance = o.value("tolerance", 1e-5);
    }
    c.snapshot = std::move(j);
    return c;
}

} // namespace mentee
