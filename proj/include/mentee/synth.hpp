#pragma once
// Deterministic synthetic glyph datasets in MNIST geometry (28x28 grayscale,
// 10 classes). Each sample renders a vector-stroke glyph under a seeded
// random affine transform, stroke wobble, stroke-width and intensity
// variation, and pixel noise. Two families exist so transfer experiments
// have a related-but-different second dataset: digit shapes and letter
// shapes. Written out via save_idx, the files are byte-compatible with any
// IDX reader.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "mentee/data.hpp"
#include "mentee/rng.hpp"

namespace mentee {

enum class GlyphFamily { digits, letters };

inline GlyphFamily glyph_family_from_string(const std::string& s) {
    if (s == "digits") return GlyphFamily::digits;
    if (s == "letters") return GlyphFamily::letters;
    throw ConfigError("unknown glyph family '" + s + "'");
}

struct SynthParams {
    double max_rotate = 0.24;     // radians
    double min_scale = 0.78, max_scale = 1.12;
    double max_shear = 0.18;
    double max_shift = 2.2;       // pixels
    double vertex_jitter = 0.016; // unit-box sigma
    double wobble_amp = 0.9;      // pixels
    double min_halfwidth = 0.8, max_halfwidth = 1.6;
    double pixel_noise = 14.0;    // gray levels
    double background_noise = 5.0;
};

namespace synth_detail {

using Pt = std::array<double, 2>;
using Stroke = std::vector<Pt>;
using Glyph = std::vector<Stroke>;

inline Stroke ellipse(double cx, double cy, double rx, double ry, int n = 14) {
    Stroke s;
    for (int i = 0; i <= n; ++i) {
        const double a = 2.0 * 3.14159265358979323846 * i / n;
        s.push_back({cx + rx * std::cos(a), cy + ry * std::sin(a)});
    }
    return s;
}

inline const std::vector<Glyph>& digit_glyphs() {
    static const std::vector<Glyph> glyphs = [] {
        std::vector<Glyph> g(10);
        g[0] = {ellipse(0.50, 0.50, 0.26, 0.37)};
        g[1] = {{{0.36, 0.30}, {0.52, 0.12}, {0.52, 0.88}}, {{0.38, 0.88}, {0.66, 0.88}}};
        g[2] = {{{0.28, 0.32},
                 {0.32, 0.17},
                 {0.50, 0.12},
                 {0.68, 0.17},
                 {0.72, 0.32},
                 {0.30, 0.86},
                 {0.74, 0.86}}};
        g[3] = {{{0.30, 0.17},
                 {0.52, 0.12},
                 {0.70, 0.25},
                 {0.54, 0.45},
                 {0.42, 0.48},
                 {0.56, 0.52},
                 {0.72, 0.66},
                 {0.54, 0.87},
                 {0.30, 0.81}}};
        g[4] = {{{0.60, 0.12}, {0.60, 0.88}}, {{0.60, 0.12}, {0.26, 0.58}, {0.78, 0.58}}};
        g[5] = {{{0.72, 0.12},
                 {0.32, 0.12},
                 {0.30, 0.44},
                 {0.56, 0.42},
                 {0.72, 0.56},
                 {0.70, 0.75},
                 {0.52, 0.88},
                 {0.30, 0.80}}};
        g[6] = {{{0.62, 0.12},
                 {0.42, 0.28},
                 {0.31, 0.52},
                 {0.32, 0.74},
                 {0.50, 0.88},
                 {0.66, 0.78},
                 {0.68, 0.60},
                 {0.52, 0.50},
                 {0.34, 0.58}}};
        g[7] = {{{0.28, 0.12}, {0.74, 0.12}, {0.44, 0.88}}, {{0.36, 0.50}, {0.62, 0.50}}};
        g[8] = {ellipse(0.50, 0.29, 0.17, 0.17, 12), ellipse(0.50, 0.66, 0.21, 0.21, 12)};
        g[9] = {ellipse(0.52, 0.32, 0.18, 0.19, 12), {{0.70, 0.34}, {0.66, 0.60}, {0.54, 0.88}}};
        return g;
    }();
    return glyphs;
}

inline const std::vector<Glyph>& letter_glyphs() {
    static const std::vector<Glyph> glyphs = [] {
        std::vector<Glyph> g(10);
        // A B C D E F H K L T
        g[0] = {{{0.26, 0.88}, {0.50, 0.10}, {0.74, 0.88}}, {{0.36, 0.58}, {0.64, 0.58}}};
        g[1] = {{{0.30, 0.12}, {0.30, 0.88}},
                {{0.30, 0.12}, {0.62, 0.16}, {0.66, 0.30}, {0.58, 0.46}, {0.30, 0.48}},
                {{0.30, 0.48}, {0.66, 0.52}, {0.70, 0.70}, {0.60, 0.86}, {0.30, 0.88}}};
        g[2] = {{{0.72, 0.22},
                 {0.55, 0.10},
                 {0.35, 0.16},
                 {0.26, 0.40},
                 {0.26, 0.62},
                 {0.36, 0.84},
                 {0.56, 0.90},
                 {0.72, 0.78}}};
        g[3] = {{{0.30, 0.12}, {0.30, 0.88}},
                {{0.30, 0.12}, {0.58, 0.16}, {0.72, 0.40}, {0.72, 0.62}, {0.56, 0.84}, {0.30, 0.88}}};
        g[4] = {{{0.70, 0.12}, {0.30, 0.12}, {0.30, 0.88}, {0.70, 0.88}}, {{0.30, 0.50}, {0.62, 0.50}}};
        g[5] = {{{0.70, 0.12}, {0.30, 0.12}, {0.30, 0.88}}, {{0.30, 0.50}, {0.62, 0.50}}};
        g[6] = {{{0.30, 0.12}, {0.30, 0.88}},
                {{0.70, 0.12}, {0.70, 0.88}},
                {{0.30, 0.50}, {0.70, 0.50}}};
        g[7] = {{{0.30, 0.12}, {0.30, 0.88}}, {{0.70, 0.12}, {0.30, 0.52}}, {{0.44, 0.42}, {0.72, 0.88}}};
        g[8] = {{{0.30, 0.12}, {0.30, 0.88}, {0.72, 0.88}}};
        g[9] = {{{0.26, 0.12}, {0.74, 0.12}}, {{0.50, 0.12}, {0.50, 0.88}}};
        return g;
    }();
    return glyphs;
}

} // namespace synth_detail

// Render one 28x28 glyph for `cls` using the family's stroke set.
inline void render_glyph(GlyphFamily family, int cls, SeededRng& rng, unsigned char* out28x28,
                         const SynthParams& p = {}) {
    using namespace synth_detail;
    const auto& glyph =
        (family == GlyphFamily::digits ? digit_glyphs() : letter_glyphs()).at(cls);
    constexpr int kSide = 28;
    constexpr double kBox = 24.0, kMargin = 2.0;

    // per-image transform
    const double theta = (rng.next_unit() * 2 - 1) * p.max_rotate;
    const double sx = p.min_scale + rng.next_unit() * (p.max_scale - p.min_scale);
    const double sy = p.min_scale + rng.next_unit() * (p.max_scale - p.min_scale);
    const double shear = (rng.next_unit() * 2 - 1) * p.max_shear;
    const double dx = (rng.next_unit() * 2 - 1) * p.max_shift;
    const double dy = (rng.next_unit() * 2 - 1) * p.max_shift;
    const double ct = std::cos(theta), st = std::sin(theta);
    const double wob_ax = rng.next_unit() * p.wobble_amp;
    const double wob_ay = rng.next_unit() * p.wobble_amp;
    const double wob_fx = 0.15 + rng.next_unit() * 0.3;
    const double wob_fy = 0.15 + rng.next_unit() * 0.3;
    const double wob_px = rng.next_unit() * 6.28;
    const double wob_py = rng.next_unit() * 6.28;
    const double halfwidth =
        p.min_halfwidth + rng.next_unit() * (p.max_halfwidth - p.min_halfwidth);
    const double ink_level = 190.0 + rng.next_unit() * 65.0;

    auto to_pixels = [&](Pt q) -> Pt {
        // jittered unit coords -> centered affine -> pixel coords -> wobble
        double ux = q[0] - 0.5, uy = q[1] - 0.5;
        ux *= sx;
        uy *= sy;
        ux += shear * uy;
        const double rx = ct * ux - st * uy;
        const double ry = st * ux + ct * uy;
        double px = (rx + 0.5) * kBox + kMargin + dx;
        double py = (ry + 0.5) * kBox + kMargin + dy;
        px += wob_ax * std::sin(wob_fy * py + wob_py);
        py += wob_ay * std::sin(wob_fx * px + wob_px);
        return {px, py};
    };

    std::array<double, kSide * kSide> dist;
    dist.fill(std::numeric_limits<double>::infinity());
    const double reach = halfwidth + 1.2;

    for (const Stroke& stroke : glyph) {
        // jitter the control points, then walk the polyline in ~0.5px steps
        std::vector<Pt> pts;
        pts.reserve(stroke.size());
        for (Pt q : stroke) {
            q[0] += p.vertex_jitter * rng.next_gaussian();
            q[1] += p.vertex_jitter * rng.next_gaussian();
            pts.push_back(to_pixels(q));
        }
        for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
            const double segx = pts[i + 1][0] - pts[i][0];
            const double segy = pts[i + 1][1] - pts[i][1];
            const double len = std::hypot(segx, segy);
            const int steps = std::max(1, static_cast<int>(len / 0.5));
            for (int s = 0; s <= steps; ++s) {
                const double u = static_cast<double>(s) / steps;
                const double cx = pts[i][0] + u * segx;
                const double cy = pts[i][1] + u * segy;
                const int x0 = std::max(0, static_cast<int>(cx - reach));
                const int x1 = std::min(kSide - 1, static_cast<int>(cx + reach) + 1);
                const int y0 = std::max(0, static_cast<int>(cy - reach));
                const int y1 = std::min(kSide - 1, static_cast<int>(cy + reach) + 1);
                for (int yy = y0; yy <= y1; ++yy)
                    for (int xx = x0; xx <= x1; ++xx) {
                        const double d = std::hypot(xx - cx, yy - cy);
                        double& cell = dist[yy * kSide + xx];
                        if (d < cell) cell = d;
                    }
            }
        }
    }

    constexpr double kAaBand = 0.6;
    for (int i = 0; i < kSide * kSide; ++i) {
        const double d = dist[i];
        double ink = 0.0;
        if (std::isfinite(d)) ink = std::clamp((halfwidth + kAaBand - d) / (2 * kAaBand), 0.0, 1.0);
        double v = ink * ink_level;
        v += p.pixel_noise * rng.next_gaussian() * (ink > 0 ? 1.0 : 0.0);
        v += std::abs(p.background_noise * rng.next_gaussian());
        out28x28[i] = static_cast<unsigned char>(std::clamp(v, 0.0, 255.0));
    }
}

// Balanced deterministic dataset: sample i carries class i % 10.
inline Dataset make_synth_dataset(GlyphFamily family, std::size_t n, std::uint64_t seed,
                                  const SynthParams& params = {}) {
    Dataset ds;
    ds.class_count = 10;
    ds.name = family == GlyphFamily::digits ? "synth-digits" : "synth-letters";
    ds.images = Tensor<float>({n, 1, 28, 28});
    ds.labels = std::vector<int>(n);
    SeededRng base(seed);
    std::array<unsigned char, 28 * 28> buf;
    for (std::size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 10);
        (*ds.labels)[i] = cls;
        SeededRng rng = base.derive(0x517e + i);
        render_glyph(family, cls, rng, buf.data(), params);
        for (std::size_t k = 0; k < buf.size(); ++k)
            ds.images[i * buf.size() + k] = static_cast<float>(buf[k]);
    }
    return ds;
}

} // namespace mentee
