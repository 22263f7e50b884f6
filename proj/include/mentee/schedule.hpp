#pragma once
// Annealing of the loss weights (alpha_t, beta_t, gamma_t) over iterations,
// the personality presets built from them, and the epoch-level learning-rate
// schedule with its NaN-recovery reductions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "mentee/errors.hpp"

namespace mentee {

struct AnnealFn {
    enum class Kind { constant, linear, ramp };
    enum class Shape { linear, quadratic };

    Kind kind = Kind::constant;
    double v0 = 0.0;
    double v1 = 0.0;        // linear target; ramp always targets 1
    std::uint64_t t_m = 1;  // mentoring-phase end, iterations
    Shape shape = Shape::linear; // ramp climb shape

    static AnnealFn constant(double c) { return {Kind::constant, c, c, 1, Shape::linear}; }
    static AnnealFn linear(double v0, double v1, std::uint64_t t_m) {
        return {Kind::linear, v0, v1, std::max<std::uint64_t>(t_m, 1), Shape::linear};
    }
    static AnnealFn ramp(double v0, std::uint64_t t_m, Shape shape) {
        return {Kind::ramp, v0, 1.0, std::max<std::uint64_t>(t_m, 1), shape};
    }

    double eval(std::uint64_t t) const {
        double v = v0;
        switch (kind) {
        case Kind::constant:
            v = v0;
            break;
        case Kind::linear:
            v = t >= t_m ? v1 : v0 + (v1 - v0) * (static_cast<double>(t) / static_cast<double>(t_m));
            break;
        case Kind::ramp: {
            const double u = t >= t_m ? 1.0 : static_cast<double>(t) / static_cast<double>(t_m);
            const double q = shape == Shape::quadratic ? u * u : u;
            v = v0 + (1.0 - v0) * q;
            break;
        }
        }
        return std::clamp(v, 0.0, 1.0);
    }
};

struct ScheduleSet {
    AnnealFn g_alpha = AnnealFn::constant(1.0);
    AnnealFn g_beta = AnnealFn::constant(0.0);
    AnnealFn g_gamma = AnnealFn::constant(0.0);
    double gamma_scale = 1.0; // deliberate gamma under-weighting knob

    std::array<double, 3> eval(std::uint64_t t) const {
        return {g_alpha.eval(t), g_beta.eval(t),
                std::clamp(g_gamma.eval(t) * gamma_scale, 0.0, 1.0)};
    }
};

enum class Personality { independent, adamant, obedient, gullible };

inline Personality personality_from_string(const std::string& s) {
    if (s == "independent") return Personality::independent;
    if (s == "adamant") return Personality::adamant;
    if (s == "obedient") return Personality::obedient;
    if (s == "gullible") return Personality::gullible;
    throw ConfigError("unknown personality '" + s + "'");
}

inline std::string to_string(Personality p) {
    switch (p) {
    case Personality::independent: return "independent";
    case Personality::adamant: return "adamant";
    case Personality::obedient: return "obedient";
    case Personality::gullible: return "gullible";
    }
    return "?";
}

struct PresetParams {
    double rho = 0.5;     // mentoring-phase fraction of total iterations
    double alpha0 = 0.1;  // obedient alpha start
    double beta0 = -1;    // <0 means personality default
    double gamma0 = -1;   // <0 means personality default
    double gamma_scale = 1.0;
    AnnealFn::Shape ramp = AnnealFn::Shape::quadratic;
};

// Personality presets. Obedient starts representation-heavy and hands over
// to the label loss by the end of the mentoring phase; adamant keeps the
// label loss dominant throughout; gullible learns the mentor's embedding
// only; independent ignores the mentor entirely.
inline ScheduleSet preset(Personality p, std::uint64_t total_iterations,
                          const PresetParams& pp = {}) {
    if (total_iterations == 0) throw ConfigError("preset: total_iterations must be positive");
    const std::uint64_t t_m = std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::llround(pp.rho * static_cast<double>(total_iterations))));
    ScheduleSet s;
    s.gamma_scale = pp.gamma_scale;
    switch (p) {
    case Personality::independent:
        s.g_alpha = AnnealFn::constant(1.0);
        s.g_beta = AnnealFn::constant(0.0);
        s.g_gamma = AnnealFn::constant(0.0);
        break;
    case Personality::adamant:
        s.g_alpha = AnnealFn::constant(1.0);
        s.g_beta = AnnealFn::linear(pp.beta0 < 0 ? 0.3 : pp.beta0, 0.0, t_m);
        s.g_gamma = AnnealFn::linear(pp.gamma0 < 0 ? 0.1 : pp.gamma0, 0.0, t_m);
        break;
    case Personality::obedient:
        s.g_alpha = AnnealFn::ramp(pp.alpha0, t_m, pp.ramp);
        s.g_beta = AnnealFn::linear(pp.beta0 < 0 ? 1.0 : pp.beta0, 0.0, t_m);
        s.g_gamma = AnnealFn::linear(pp.gamma0 < 0 ? 1.0 : pp.gamma0, 0.0, t_m);
        break;
    case Personality::gullible:
        s.g_alpha = AnnealFn::constant(0.0);
        s.g_beta = AnnealFn::constant(1.0);
        s.g_gamma = AnnealFn::constant(0.0);
        break;
    }
    return s;
}

struct LrSchedule {
    double eta0 = 0.01;
    int drop_epoch = 75;        // fine-tuning phase starts here
    double drop_factor = 100.0; // divide once past drop_epoch
    double recovery_factor = 10.0; // divide per NaN recovery

    double lr_at(int epoch, int recoveries) const {
        double eta = eta0 / std::pow(recovery_factor, recoveries);
        if (epoch >= drop_epoch) eta /= drop_factor;
        return eta;
    }
};

} // namespace mentee
