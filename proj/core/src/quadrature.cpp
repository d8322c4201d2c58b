#include "follisim/quadrature.hpp"

#include <algorithm>
#include <cmath>

namespace follisim {

namespace {

// Nodes/weights of the 7-point Gauss-Legendre rule on [0, 1].
const std::array<double, 7> kNodes = {
    0.5 - 0.5 * 0.94910791234275852452618968404785126,
    0.5 - 0.5 * 0.74153118559939443986386477328078840,
    0.5 - 0.5 * 0.40584515137739716690660641207696146,
    0.5,
    0.5 + 0.5 * 0.40584515137739716690660641207696146,
    0.5 + 0.5 * 0.74153118559939443986386477328078840,
    0.5 + 0.5 * 0.94910791234275852452618968404785126,
};
const std::array<double, 7> kWeights = {
    0.5 * 0.12948496616886969327061143267908202,
    0.5 * 0.27970539148927666790146777142377958,
    0.5 * 0.38183005050511894495036977548897513,
    0.5 * 0.41795918367346938775510204081632653,
    0.5 * 0.38183005050511894495036977548897513,
    0.5 * 0.27970539148927666790146777142377958,
    0.5 * 0.12948496616886969327061143267908202,
};

template <typename F>
double gl7(const F& f, double a, double b) {
    const double span = b - a;
    double sum = 0.0;
    for (int i = 0; i < 7; ++i) sum += kWeights[i] * f(a + span * kNodes[i]);
    return span * sum;
}

template <typename F>
double adapt(const F& f, double a, double b, double whole, double abs_tol,
             double rel_tol, int depth, int max_depth) {
    const double m = 0.5 * (a + b);
    const double left = gl7(f, a, m);
    const double right = gl7(f, m, b);
    const double refined = left + right;
    const double err = std::abs(refined - whole);
    if (depth >= max_depth || err <= std::max(abs_tol, rel_tol * std::abs(refined))) {
        return refined;
    }
    return adapt(f, a, m, left, 0.5 * abs_tol, rel_tol, depth + 1, max_depth) +
           adapt(f, m, b, right, 0.5 * abs_tol, rel_tol, depth + 1, max_depth);
}

template <typename F>
double integrate_1d(const F& f, double a, double b, const QuadratureOptions& opts) {
    if (!(b > a)) return 0.0;
    return adapt(f, a, b, gl7(f, a, b), opts.abs_tol, opts.rel_tol, 0, opts.max_depth);
}

// Sorted interior breakpoints of [lo, hi], deduplicated to 1e-12 spacing.
std::vector<double> clip_breaks(std::vector<double> v, double lo, double hi) {
    std::sort(v.begin(), v.end());
    std::vector<double> out;
    constexpr double tol = 1e-12;
    for (double b : v) {
        if (b <= lo + tol || b >= hi - tol) continue;
        if (!out.empty() && b - out.back() <= tol) continue;
        out.push_back(b);
    }
    return out;
}

template <typename F>
double composite_1d(const F& f, double a, double b, std::vector<double> breaks,
                    double max_panel) {
    if (!(b > a)) return 0.0;
    if (!(max_panel > 0.0)) throw ConfigError("quadrature panel width must be positive");
    breaks = clip_breaks(std::move(breaks), a, b);
    double total = 0.0;
    const auto piece = [&](double lo, double hi) {
        const int n = std::max(1, static_cast<int>(std::ceil((hi - lo) / max_panel - 1e-9)));
        const double w = (hi - lo) / n;
        for (int i = 0; i < n; ++i) total += gl7(f, lo + i * w, lo + (i + 1) * w);
    };
    double lo = a;
    for (double bk : breaks) {
        piece(lo, bk);
        lo = bk;
    }
    piece(lo, b);
    return total;
}

} // namespace

const std::array<double, 7>& gl7_nodes() { return kNodes; }
const std::array<double, 7>& gl7_weights() { return kWeights; }

double adaptive_gl7(const std::function<double(double)>& f, double a, double b,
                    const QuadratureOptions& opts) {
    return integrate_1d(f, a, b, opts);
}

double composite_gl7(const std::function<double(double)>& f, double a, double b,
                     std::vector<double> breaks, double max_panel) {
    return composite_1d(f, a, b, std::move(breaks), max_panel);
}

double phase_area_scale(const ModelParams& p, Phase phase) {
    switch (phase) {
        case Phase::p1: return p.a1 * p.gamma_s;
        case Phase::p2: return (p.a2 - p.a1) * p.gamma_s;
        case Phase::p3: return p.a2 * p.gamma0();
    }
    throw Error("unknown phase");
}

namespace {

// Uncapped age shift of the phase square between the anchor and t: every
// in-phase age coordinate translates by this amount (the age velocities do
// not depend on the state).
double phase_shift(const CharContext& ctx, Phase phase, int f, double t) {
    switch (phase) {
        case Phase::p1: return p1_shift(ctx, f, t);
        case Phase::p2: return vel_ghat(ctx.params(), f) * (t - ctx.t_anchor());
        case Phase::p3: return vel_gtilde(ctx.params(), f) * (t - ctx.t_anchor());
    }
    throw Error("unknown phase");
}

} // namespace

std::vector<double> density_x_breaks(const CharContext& ctx, const InitialData& data,
                                     ComponentId comp, double t) {
    std::vector<double> breaks;
    const double shift = phase_shift(ctx, comp.phase, comp.follicle, t);
    breaks.push_back(std::min(shift, 1.0)); // the inflow front
    for (double e : data.field(comp).x_breaks()) breaks.push_back(e + shift);
    return clip_breaks(std::move(breaks), 0.0, 1.0);
}

std::vector<double> density_y_breaks(const CharContext& ctx, const InitialData& data,
                                     ComponentId comp, double t) {
    std::vector<double> breaks;
    for (double e : data.field(comp).y_breaks()) {
        breaks.push_back(
            maturity_image(ctx, comp.phase, comp.follicle, e, ctx.t_anchor(), t));
    }
    return clip_breaks(std::move(breaks), 0.0, 1.0);
}

double integrate_component(const CharContext& ctx, const InitialData& data,
                           ComponentId comp, double t,
                           const std::function<double(double, double)>& weight,
                           const QuadratureOptions& opts) {
    const int f = comp.follicle;
    const bool zero_datum = data.field(comp).is_zero();
    const double front =
        std::min(phase_shift(ctx, comp.phase, f, t), 1.0);

    // A phase-1 cycle-1 square with a zero datum stays identically zero: its
    // back face and bottom face both feed zero.
    if (zero_datum && comp.phase == Phase::p1 && comp.cycle == 1) return 0.0;
    // A zero-datum phase-2 square is fed only through its back face.
    if (zero_datum && comp.phase == Phase::p2 && front <= 1e-14) return 0.0;

    const auto value = [&](double x, double y) {
        return eval_density(ctx, data, comp, t, x, y).value * weight(x, y);
    };

    // Horizontal images of the datum's support edges (valid right of the
    // front, where the backward trace stays inside this phase square).
    const std::vector<double> y_img =
        zero_datum ? std::vector<double>{} : density_y_breaks(ctx, data, comp, t);

    const auto row_integral = [&](double x, double ylo, double yhi,
                                  bool with_images) -> double {
        if (!(yhi > ylo + 1e-15)) return 0.0;
        std::vector<double> breaks;
        if (with_images) breaks = y_img;
        return composite_1d([&](double y) { return value(x, y); }, ylo, yhi,
                            std::move(breaks), opts.max_panel);
    };

    // Integral over one column {x} x [0,1], with zero-fed regions skipped.
    const auto column = [&](double x) -> double {
        const bool in_phase = x > front; // backward trace stays in this square
        switch (comp.phase) {
            case Phase::p2:
                if (zero_datum && in_phase) return 0.0;
                return row_integral(x, 0.0, 1.0, in_phase);
            case Phase::p1: {
                if (zero_datum && in_phase) return 0.0;
                const double eta = std::clamp(p1_separatrix(ctx, f, t, x), 0.0, 1.0);
                return row_integral(x, eta, 1.0, in_phase);
            }
            case Phase::p3: {
                const double y1 =
                    std::clamp(p3_separatrix_lower(ctx, f, t, x), 0.0, 1.0);
                const double y2 =
                    std::clamp(p3_separatrix_upper(ctx, f, t, x), 0.0, 1.0);
                // Below y1: fed from the phase-1 top face. Between y1 and y2:
                // anchored in phase (right of the front) or through the back
                // face (left of it). Above y2: anchored at the zero top face.
                double sum = row_integral(x, 0.0, y1, false);
                if (!(zero_datum && in_phase)) {
                    sum += row_integral(x, y1, y2, in_phase);
                }
                return sum;
            }
        }
        throw Error("unknown phase");
    };

    std::vector<double> xbreaks{front};
    if (!zero_datum) {
        const double shift = phase_shift(ctx, comp.phase, f, t);
        for (double e : data.field(comp).x_breaks()) xbreaks.push_back(e + shift);
    }
    return composite_1d(column, 0.0, 1.0, std::move(xbreaks), opts.max_panel);
}

double follicle_maturity(const CharContext& ctx, const InitialData& data, int f,
                         double t, const QuadratureOptions& opts) {
    const ModelParams& p = ctx.params();
    double total = 0.0;
    for (int k = 1; k <= p.cycles; ++k) {
        for (Phase phase : {Phase::p1, Phase::p2, Phase::p3}) {
            const ComponentId comp{f, k, phase};
            total += integrate_component(
                ctx, data, comp, t,
                [&](double, double y) { return maturity_weight(p, phase, y); }, opts);
        }
    }
    return total;
}

std::vector<double> maturities(const CharContext& ctx, const InitialData& data,
                               double t, const QuadratureOptions& opts) {
    std::vector<double> out(ctx.params().follicles);
    for (int f = 0; f < ctx.params().follicles; ++f) {
        out[f] = follicle_maturity(ctx, data, f, t, opts);
    }
    return out;
}

double component_mass(const CharContext& ctx, const InitialData& data,
                      ComponentId comp, double t, const QuadratureOptions& opts) {
    const double scale = phase_area_scale(ctx.params(), comp.phase);
    return integrate_component(
        ctx, data, comp, t, [&](double, double) { return scale; }, opts);
}

} // namespace follisim
