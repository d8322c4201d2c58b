#include "follisim/characteristics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

namespace follisim {

namespace {

constexpr double kEventTimeTol = 1e-12; // bisection width target in s
constexpr int kMaxBisect = 90;

double range_tol(double lo, double hi) {
    return 1e-9 * std::max({std::abs(lo), std::abs(hi), 1.0});
}

} // namespace

const char* to_string(Face face) {
    switch (face) {
        case Face::none: return "none";
        case Face::age_back: return "age_back";
        case Face::age_front: return "age_front";
        case Face::mat_bottom: return "mat_bottom";
        case Face::mat_top: return "mat_top";
    }
    throw Error("unknown face");
}

const char* to_string(RegionLabel label) {
    switch (label) {
        case RegionLabel::p1_interior: return "p1_interior";
        case RegionLabel::p1_influx: return "p1_influx";
        case RegionLabel::p1_zero: return "p1_zero";
        case RegionLabel::p2_interior: return "p2_interior";
        case RegionLabel::p2_influx: return "p2_influx";
        case RegionLabel::p3_interior: return "p3_interior";
        case RegionLabel::p3_bottom_influx: return "p3_bottom_influx";
        case RegionLabel::p3_back_influx: return "p3_back_influx";
        case RegionLabel::p3_zero: return "p3_zero";
    }
    throw Error("unknown region label");
}

// ----------------------------------------------------------------------------
// CharContext.
// ----------------------------------------------------------------------------

CharContext::CharContext(const ModelParams& p, ControlCurves controls, double t_anchor,
                         double t_hi, double dt_ctrl)
    : params_(p), controls_(std::move(controls)), t_anchor_(t_anchor), t_hi_(t_hi) {
    if (!(t_hi > t_anchor)) throw Error("characteristic context needs a positive span");
    if (!(dt_ctrl > 0.0)) throw Error("control spacing must be positive");
    // Fixed integration step: min(dt_ctrl, 1e-3 * horizon), shrunk to an exact
    // divisor of dt_ctrl so control-sample times land on the integration grid.
    const double cap = 1e-3 * params_.horizon;
    const int split = std::max(1, static_cast<int>(std::ceil(dt_ctrl / cap - 1e-9)));
    step_ = dt_ctrl / split;

    const double span = t_hi_ - t_anchor_;
    const int steps = static_cast<int>(std::ceil(span / step_ - 1e-9)) + 1;
    const int halves = 2 * steps + 1;
    table_.resize(params_.follicles);
    const double src_lo = controls_.t_lo();
    const double src_hi = controls_.t_hi();
    for (int f = 0; f < params_.follicles; ++f) {
        table_[f].resize(halves);
        for (int h = 0; h < halves; ++h) {
            double s = node_time(h);
            if (s < src_lo) s = src_lo;
            if (s > src_hi) s = src_hi;
            table_[f][h] = sample_exact(f, s);
        }
    }
}

CharContext::ControlSample CharContext::sample_exact(int f, double s) const {
    ControlSample cs;
    const double U = controls_.U(s);
    cs.u = controls_.u(f, s);
    check_velocity_signs(params_, f, cs.u);
    cs.gp = gamma_plus(params_, cs.u);
    cs.gm = gamma_minus(params_, cs.u);
    cs.gbar = vel_gbar(params_, f, cs.u);
    cs.one_minus_U = 1.0 - U;
    return cs;
}

const CharContext::ControlSample& CharContext::sample_node(int f, int h) const {
    if (h < 0 || h >= static_cast<int>(table_[f].size())) {
        throw WindowExceeded("integration grid node " + std::to_string(h) +
                             " outside the tabulated range");
    }
    return table_[f][h];
}

int CharContext::grid_index_below(double s) const {
    int k = static_cast<int>(std::floor((s - t_anchor_) / step_ + 1e-12));
    while (k > 0 && grid_time(k) >= s) --k;
    while (grid_time(k + 1) < s) ++k;
    return k;
}

// ----------------------------------------------------------------------------
// Dynamics. State: (x, y, loss integral, dh/dy integral).
// ----------------------------------------------------------------------------

namespace {

struct State {
    double x, y, lam, ht;
};

struct Dyn {
    const ModelParams& p;
    Phase phase;
    int f;
    bool zero_loss;
    double tau_h;
    double axial; // constant age velocity for p3 (unused for p1)

    // Derivative of the state given the control sample at the stage time.
    inline State deriv(const CharContext::ControlSample& c, const State& z) const {
        State d;
        double gamma, dy_scale;
        if (phase == Phase::p1) {
            gamma = p.gamma_s * z.y;
            dy_scale = p.gamma_s;
            d.x = c.gbar;
        } else { // p3
            gamma = p.gamma0() * z.y + p.gamma_s;
            dy_scale = p.gamma0();
            d.x = axial;
        }
        const double h = tau_h * (c.gp - gamma) * (gamma - c.gm);
        d.y = h / dy_scale;
        d.ht = tau_h * (c.gp + c.gm - 2.0 * gamma);
        if (zero_loss) {
            d.lam = 0.0;
        } else {
            const double zz = (gamma - p.gamma_s) / p.gamma_bar;
            d.lam = p.K_lambda * c.one_minus_U * std::exp(-zz * zz);
        }
        return d;
    }
};

inline State rk4_combine(const State& z, double h, const State& k1, const State& k2,
                         const State& k3, const State& k4) {
    const double w = h / 6.0;
    return {z.x + w * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            z.y + w * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
            z.lam + w * (k1.lam + 2.0 * k2.lam + 2.0 * k3.lam + k4.lam),
            z.ht + w * (k1.ht + 2.0 * k2.ht + 2.0 * k3.ht + k4.ht)};
}

// One RK4 step using tabulated stage samples (h0: half-node of the start time,
// hd: half-node direction, +-1 per half step).
inline State rk4_step_nodes(const Dyn& dyn, const CharContext& ctx, const State& z,
                            double h, int f, int h0, int hd) {
    const auto& c0 = ctx.sample_node(f, h0);
    const auto& c1 = ctx.sample_node(f, h0 + hd);
    const auto& c2 = ctx.sample_node(f, h0 + 2 * hd);
    const State k1 = dyn.deriv(c0, z);
    const State mid1{z.x + 0.5 * h * k1.x, z.y + 0.5 * h * k1.y, 0, 0};
    const State k2 = dyn.deriv(c1, mid1);
    const State mid2{z.x + 0.5 * h * k2.x, z.y + 0.5 * h * k2.y, 0, 0};
    const State k3 = dyn.deriv(c1, mid2);
    const State end{z.x + h * k3.x, z.y + h * k3.y, 0, 0};
    const State k4 = dyn.deriv(c2, end);
    return rk4_combine(z, h, k1, k2, k3, k4);
}

// One RK4 step with exact control evaluation (off-grid times).
inline State rk4_step_exact(const Dyn& dyn, const CharContext& ctx, const State& z,
                            double s, double h, int f) {
    const auto c0 = ctx.sample_exact(f, s);
    const auto c1 = ctx.sample_exact(f, s + 0.5 * h);
    const auto c2 = ctx.sample_exact(f, s + h);
    const State k1 = dyn.deriv(c0, z);
    const State mid1{z.x + 0.5 * h * k1.x, z.y + 0.5 * h * k1.y, 0, 0};
    const State k2 = dyn.deriv(c1, mid1);
    const State mid2{z.x + 0.5 * h * k2.x, z.y + 0.5 * h * k2.y, 0, 0};
    const State k3 = dyn.deriv(c1, mid2);
    const State end{z.x + h * k3.x, z.y + h * k3.y, 0, 0};
    const State k4 = dyn.deriv(c2, end);
    return rk4_combine(z, h, k1, k2, k3, k4);
}

// Signed distance outside the given face (positive means crossed).
inline double face_excess(Face face, const State& z) {
    switch (face) {
        case Face::age_back: return -z.x;
        case Face::age_front: return z.x - 1.0;
        case Face::mat_bottom: return -z.y;
        case Face::mat_top: return z.y - 1.0;
        default: return -1.0;
    }
}

constexpr Face kFaces[4] = {Face::age_back, Face::age_front, Face::mat_bottom,
                            Face::mat_top};

struct EventHit {
    bool hit = false;
    Face face = Face::none;
    double sub = 0.0; // unsigned sub-step size from the step start
    State state{};
};

// Detects and localizes the earliest face crossing within the step from
// (s, z0) of signed size h that produced z1.
EventHit locate_event(const Dyn& dyn, const CharContext& ctx, int f, double s,
                      const State& z0, double h, const State& z1) {
    EventHit best;
    for (Face face : kFaces) {
        const double e0 = face_excess(face, z0);
        const double e1 = face_excess(face, z1);
        if (e1 <= 0.0 || e1 <= e0) continue; // not crossed outward
        double lo = 0.0, hi = std::abs(h);
        State z_hi = z1;
        if (e0 >= 0.0) {
            // Started on (or marginally past) the face moving outward: the
            // event is at the step start.
            hi = 0.0;
            z_hi = z0;
        } else {
            const double dir = h >= 0.0 ? 1.0 : -1.0;
            for (int it = 0; it < kMaxBisect && (hi - lo) > kEventTimeTol; ++it) {
                const double mid = 0.5 * (lo + hi);
                const State zm = rk4_step_exact(dyn, ctx, z0, s, dir * mid, f);
                if (face_excess(face, zm) > 0.0) {
                    hi = mid;
                    z_hi = zm;
                } else {
                    lo = mid;
                }
            }
        }
        if (!best.hit || hi < best.sub) {
            best.hit = true;
            best.face = face;
            best.sub = hi;
            best.state = z_hi;
        }
    }
    if (best.hit) {
        // Clamp exactly onto the face; nudge the companion coordinates back
        // into the square if the overshoot pushed them marginally out.
        switch (best.face) {
            case Face::age_back: best.state.x = 0.0; break;
            case Face::age_front: best.state.x = 1.0; break;
            case Face::mat_bottom: best.state.y = 0.0; break;
            case Face::mat_top: best.state.y = 1.0; break;
            default: break;
        }
        best.state.x = std::clamp(best.state.x, 0.0, 1.0);
        best.state.y = std::clamp(best.state.y, 0.0, 1.0);
    }
    return best;
}

FlowResult finish_flow(double dir, double t_end, const State& z, Face exit) {
    FlowResult r;
    r.end = {t_end, z.x, z.y};
    r.exit = exit;
    r.loss_integral = dir < 0.0 ? -z.lam : z.lam;
    r.dhdy_integral = dir < 0.0 ? -z.ht : z.ht;
    if (!std::isfinite(z.x) || !std::isfinite(z.y) || !std::isfinite(r.loss_integral) ||
        !std::isfinite(r.dhdy_integral)) {
        throw StepFailure("characteristic state stopped being finite");
    }
    return r;
}

FlowResult flow_p2(const CharContext& ctx, int f, FlowPoint start, double t_target) {
    const double ghat = vel_ghat(ctx.params(), f);
    FlowResult r;
    if (t_target < start.t) {
        const double tau0 = start.t - start.x / ghat;
        if (tau0 > t_target) {
            r.end = {tau0, 0.0, start.y};
            r.exit = Face::age_back;
        } else {
            r.end = {t_target, start.x - ghat * (start.t - t_target), start.y};
        }
    } else {
        const double tau1 = start.t + (1.0 - start.x) / ghat;
        if (tau1 < t_target) {
            r.end = {tau1, 1.0, start.y};
            r.exit = Face::age_front;
        } else {
            r.end = {t_target, start.x + ghat * (t_target - start.t), start.y};
        }
    }
    return r;
}

} // namespace

FlowResult flow(const CharContext& ctx, Phase phase, int f, FlowPoint start,
                double t_target) {
    const double tol = range_tol(ctx.t_anchor(), ctx.t_hi());
    if (start.t < ctx.t_anchor() - tol || start.t > ctx.t_hi() + tol ||
        t_target < ctx.t_anchor() - tol || t_target > ctx.t_hi() + tol) {
        std::ostringstream oss;
        oss << "flow times [" << start.t << ", " << t_target << "] outside context range ["
            << ctx.t_anchor() << ", " << ctx.t_hi() << "]";
        throw WindowExceeded(oss.str());
    }
    if (start.x < -1e-9 || start.x > 1.0 + 1e-9 || start.y < -1e-9 ||
        start.y > 1.0 + 1e-9) {
        std::ostringstream oss;
        oss << "flow start (" << start.x << ", " << start.y << ") outside the unit square";
        throw OutOfDomain(oss.str());
    }
    start.x = std::clamp(start.x, 0.0, 1.0);
    start.y = std::clamp(start.y, 0.0, 1.0);
    start.t = std::clamp(start.t, ctx.t_anchor(), ctx.t_hi());
    t_target = std::clamp(t_target, ctx.t_anchor(), ctx.t_hi());

    if (phase == Phase::p2) return flow_p2(ctx, f, start, t_target);

    if (t_target == start.t) {
        FlowResult r;
        r.end = start;
        return r;
    }
    const double dir = t_target > start.t ? 1.0 : -1.0;

    Dyn dyn{ctx.params(), phase, f, ctx.hooks().zero_loss, ctx.params().tau_h[f],
            phase == Phase::p3 ? vel_gtilde(ctx.params(), f) : 0.0};

    State z{start.x, start.y, 0.0, 0.0};
    double s = start.t;
    const double step = ctx.step();
    long guard = static_cast<long>(std::abs(t_target - start.t) / step) + 8;

    // Advance one aligned grid index per iteration; handle partial steps at
    // both ends with exact control evaluation.
    int k = static_cast<int>(std::llround((s - ctx.t_anchor()) / step));
    bool aligned = k >= 0 && ctx.grid_time(k) == s;
    if (!aligned) k = ctx.grid_index_below(s);

    while ((t_target - s) * dir > 0.0) {
        if (--guard < 0) throw StepFailure("characteristic integration exceeded its step budget");
        double s_next;
        bool fast = false;
        int h0 = 0, hd = 0;
        if (!aligned) {
            // Partial step to the neighboring grid time (or straight to the
            // target when it is closer).
            s_next = dir < 0.0 ? ctx.grid_time(k) : ctx.grid_time(k + 1);
            if ((s_next - t_target) * dir > 0.0) s_next = t_target;
        } else {
            const int k_next = dir < 0.0 ? k - 1 : k + 1;
            s_next = ctx.grid_time(k_next);
            if ((s_next - t_target) * dir > 0.0) {
                s_next = t_target;
            } else {
                fast = true;
                h0 = 2 * k;
                hd = dir < 0.0 ? -1 : 1;
            }
        }
        const double h = s_next - s;
        const State z1 = fast ? rk4_step_nodes(dyn, ctx, z, h, f, h0, hd)
                              : rk4_step_exact(dyn, ctx, z, s, h, f);
        const EventHit hit = locate_event(dyn, ctx, f, s, z, h, z1);
        if (hit.hit) {
            return finish_flow(dir, s + dir * hit.sub, hit.state, hit.face);
        }
        z = z1;
        s = s_next;
        if (fast) {
            k += dir < 0.0 ? -1 : 1;
        } else {
            k = static_cast<int>(std::llround((s - ctx.t_anchor()) / step));
            aligned = k >= 0 && ctx.grid_time(k) == s;
            if (!aligned) k = ctx.grid_index_below(s);
        }
        if (!std::isfinite(z.x) || !std::isfinite(z.y)) {
            throw StepFailure("characteristic state stopped being finite");
        }
    }
    return finish_flow(dir, t_target, z, Face::none);
}

// ----------------------------------------------------------------------------
// One-dimensional flows (age-only / maturity-only), used by the separatrix
// and entry-time helpers. The RK4 increments of the age coordinate do not
// depend on the rest of the state, so these agree with the coupled flow to
// machine precision.
// ----------------------------------------------------------------------------

namespace {

// Simpson increment of the phase-1 age velocity over [s, s+h] (matches the
// RK4 x-increment exactly because the derivative is state-independent).
inline double age_increment_nodes(const CharContext& ctx, int f, int h0, int hd,
                                  double h) {
    const double g0 = ctx.sample_node(f, h0).gbar;
    const double g1 = ctx.sample_node(f, h0 + hd).gbar;
    const double g2 = ctx.sample_node(f, h0 + 2 * hd).gbar;
    return h / 6.0 * (g0 + 4.0 * g1 + g2);
}

inline double age_increment_exact(const CharContext& ctx, int f, double s, double h) {
    const double g0 = ctx.sample_exact(f, s).gbar;
    const double g1 = ctx.sample_exact(f, s + 0.5 * h).gbar;
    const double g2 = ctx.sample_exact(f, s + h).gbar;
    return h / 6.0 * (g0 + 4.0 * g1 + g2);
}

// Generic grid marcher: calls `advance(s, h, fast, h0, hd)` for consecutive
// sub-steps covering [s_from, s_to]; `advance` returns false to stop early.
template <typename F>
void march_grid(const CharContext& ctx, double s_from, double s_to, F&& advance) {
    s_from = std::clamp(s_from, ctx.t_anchor(), ctx.t_hi());
    s_to = std::clamp(s_to, ctx.t_anchor(), ctx.t_hi());
    if (s_to == s_from) return;
    const double dir = s_to > s_from ? 1.0 : -1.0;
    const double step = ctx.step();
    double s = s_from;
    long guard = static_cast<long>(std::abs(s_to - s_from) / step) + 8;
    int k = static_cast<int>(std::llround((s - ctx.t_anchor()) / step));
    bool aligned = k >= 0 && ctx.grid_time(k) == s;
    if (!aligned) k = ctx.grid_index_below(s);
    while ((s_to - s) * dir > 0.0) {
        if (--guard < 0) throw StepFailure("grid march exceeded its step budget");
        double s_next;
        bool fast = false;
        int h0 = 0, hd = 0;
        if (!aligned) {
            s_next = dir < 0.0 ? ctx.grid_time(k) : ctx.grid_time(k + 1);
            if ((s_next - s_to) * dir > 0.0) s_next = s_to;
        } else {
            const int k_next = dir < 0.0 ? k - 1 : k + 1;
            s_next = ctx.grid_time(k_next);
            if ((s_next - s_to) * dir > 0.0) {
                s_next = s_to;
            } else {
                fast = true;
                h0 = 2 * k;
                hd = dir < 0.0 ? -1 : 1;
            }
        }
        if (!advance(s, s_next - s, fast, h0, hd)) return;
        s = s_next;
        if (fast) {
            k += dir < 0.0 ? -1 : 1;
        } else {
            k = static_cast<int>(std::llround((s - ctx.t_anchor()) / step));
            aligned = k >= 0 && ctx.grid_time(k) == s;
            if (!aligned) k = ctx.grid_index_below(s);
        }
    }
}

// Forward/backward maturity-only flow (no face events; the admissible closures
// keep the coordinate bounded on the spans we integrate).
double flow_maturity(const CharContext& ctx, Phase phase, int f, double y0,
                     double s_from, double s_to) {
    Dyn dyn{ctx.params(), phase, f, true, ctx.params().tau_h[f],
            phase == Phase::p3 ? vel_gtilde(ctx.params(), f) : 0.0};
    State z{0.5, y0, 0.0, 0.0};
    // The x component is a dummy here; face handling is disabled.
    march_grid(ctx, s_from, s_to, [&](double s, double h, bool fast, int h0, int hd) {
        z = fast ? rk4_step_nodes(dyn, ctx, z, h, f, h0, hd)
                 : rk4_step_exact(dyn, ctx, z, s, h, f);
        z.x = 0.5;
        if (!std::isfinite(z.y)) throw StepFailure("maturity flow stopped being finite");
        return true;
    });
    return z.y;
}

} // namespace

double p1_age_entry_time(const CharContext& ctx, int f, double t, double x) {
    double xx = x;
    double theta = ctx.t_anchor() - 1.0;
    bool found = false;
    march_grid(ctx, t, ctx.t_anchor(), [&](double s, double h, bool fast, int h0, int hd) {
        const double dx = fast ? age_increment_nodes(ctx, f, h0, hd, h)
                               : age_increment_exact(ctx, f, s, h);
        if (xx + dx > 0.0) {
            xx += dx;
            return true;
        }
        // Crossing within this sub-step: bisect the sub-step size.
        double lo = 0.0, hi = std::abs(h);
        for (int it = 0; it < kMaxBisect && (hi - lo) > kEventTimeTol; ++it) {
            const double mid = 0.5 * (lo + hi);
            const double dxm = age_increment_exact(ctx, f, s, -mid);
            if (xx + dxm <= 0.0) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        theta = s - hi;
        found = true;
        return false;
    });
    return found ? theta : ctx.t_anchor() - 1.0;
}

double p1_shift(const CharContext& ctx, int f, double t) {
    double xx = 0.0;
    march_grid(ctx, ctx.t_anchor(), t, [&](double s, double h, bool fast, int h0, int hd) {
        xx += fast ? age_increment_nodes(ctx, f, h0, hd, h)
                   : age_increment_exact(ctx, f, s, h);
        return xx < 2.0; // no need to integrate far past the square
    });
    return xx;
}

double p1_front(const CharContext& ctx, int f, double t) {
    return std::min(p1_shift(ctx, f, t), 1.0);
}

double p2_front(const CharContext& ctx, int f, double t) {
    return std::min(vel_ghat(ctx.params(), f) * (t - ctx.t_anchor()), 1.0);
}

double p3_front(const CharContext& ctx, int f, double t) {
    return std::min(vel_gtilde(ctx.params(), f) * (t - ctx.t_anchor()), 1.0);
}

double p1_separatrix(const CharContext& ctx, int f, double t, double x) {
    const double X = p1_front(ctx, f, t);
    double theta;
    if (x >= X) {
        theta = ctx.t_anchor();
    } else {
        theta = p1_age_entry_time(ctx, f, t, x);
        if (theta < ctx.t_anchor()) theta = ctx.t_anchor();
    }
    return flow_maturity(ctx, Phase::p1, f, 0.0, theta, t);
}

namespace {

double p3_entry_time(const CharContext& ctx, int f, double t, double x) {
    const double xf = vel_gtilde(ctx.params(), f) * (t - ctx.t_anchor());
    if (x >= xf) return ctx.t_anchor();
    return t - x / vel_gtilde(ctx.params(), f);
}

} // namespace

double p3_separatrix_lower(const CharContext& ctx, int f, double t, double x) {
    return flow_maturity(ctx, Phase::p3, f, 0.0, p3_entry_time(ctx, f, t, x), t);
}

double p3_separatrix_upper(const CharContext& ctx, int f, double t, double x) {
    return flow_maturity(ctx, Phase::p3, f, 1.0, p3_entry_time(ctx, f, t, x), t);
}

double maturity_image(const CharContext& ctx, Phase phase, int f, double y0,
                      double s_from, double s_to) {
    if (phase == Phase::p2) return y0;
    return flow_maturity(ctx, phase, f, y0, s_from, s_to);
}

// ----------------------------------------------------------------------------
// Classification.
// ----------------------------------------------------------------------------

namespace {

constexpr double kTieBand = 1e-10;

RegionLabel label_from_chain(const CharChain& chain) {
    const ChainSegment& first = chain.segments.front();
    switch (first.phase) {
        case Phase::p1:
            switch (first.entry_face) {
                case Face::none: return RegionLabel::p1_interior;
                case Face::age_back: return RegionLabel::p1_influx;
                case Face::mat_bottom: return RegionLabel::p1_zero;
                default: break;
            }
            break;
        case Phase::p2:
            return first.entry_face == Face::none ? RegionLabel::p2_interior
                                                  : RegionLabel::p2_influx;
        case Phase::p3:
            switch (first.entry_face) {
                case Face::none: return RegionLabel::p3_interior;
                case Face::age_back: return RegionLabel::p3_back_influx;
                case Face::mat_bottom: return RegionLabel::p3_bottom_influx;
                case Face::mat_top: return RegionLabel::p3_zero;
                default: break;
            }
            break;
    }
    throw Error("unexpected backward-trace outcome while labeling");
}

} // namespace

RegionLabel classify(const CharContext& ctx, ComponentId comp, double t, double x,
                     double y) {
    const int f = comp.follicle;
    const auto tie = [&]() {
        return label_from_chain(backtrace(ctx, comp, t, x, y));
    };
    switch (comp.phase) {
        case Phase::p2: {
            const double xf = p2_front(ctx, f, t);
            if (std::abs(x - xf) <= kTieBand) return tie();
            return x > xf ? RegionLabel::p2_interior : RegionLabel::p2_influx;
        }
        case Phase::p1: {
            const double X = p1_front(ctx, f, t);
            if (std::abs(x - X) <= kTieBand) return tie();
            const double eta = p1_separatrix(ctx, f, t, x);
            if (std::abs(y - eta) <= kTieBand) return tie();
            if (y < eta) return RegionLabel::p1_zero;
            return x > X ? RegionLabel::p1_interior : RegionLabel::p1_influx;
        }
        case Phase::p3: {
            const double xf = p3_front(ctx, f, t);
            const double eta1 = p3_separatrix_lower(ctx, f, t, x);
            const double eta2 = p3_separatrix_upper(ctx, f, t, x);
            if (std::abs(y - eta1) <= kTieBand || std::abs(y - eta2) <= kTieBand) {
                return tie();
            }
            if (y < eta1) return RegionLabel::p3_bottom_influx;
            if (y > eta2) return RegionLabel::p3_zero;
            if (std::abs(x - xf) <= kTieBand) return tie();
            return x > xf ? RegionLabel::p3_interior : RegionLabel::p3_back_influx;
        }
    }
    throw Error("unknown phase");
}

// ----------------------------------------------------------------------------
// Backward tracing.
// ----------------------------------------------------------------------------

CharChain backtrace(const CharContext& ctx, ComponentId comp, double t, double x,
                    double y) {
    const ModelParams& p = ctx.params();
    CharChain chain;
    chain.terminal = comp;
    chain.query = {t, x, y};

    Phase phase = comp.phase;
    int cycle = comp.cycle;
    const int f = comp.follicle;
    FlowPoint pos{t, x, y};
    int budget = 2 * p.cycles;

    for (;;) {
        const FlowResult res = flow(ctx, phase, f, pos, ctx.t_anchor());
        ChainSegment seg;
        seg.phase = phase;
        seg.cycle = cycle;
        seg.from = res.end;
        seg.to = pos;
        seg.entry_face = res.exit;
        seg.loss_integral = res.loss_integral;
        seg.dhdy_integral = res.dhdy_integral;

        if (res.exit == Face::none) {
            chain.anchor = {f, cycle, phase};
            chain.anchor_x = res.end.x;
            chain.anchor_y = res.end.y;
            chain.segments.push_back(seg);
            return chain;
        }

        bool zero = false;
        Phase next_phase = phase;
        int next_cycle = cycle;
        FlowPoint next_pos = res.end;
        switch (phase) {
            case Phase::p1:
                if (res.exit == Face::mat_bottom) {
                    zero = true;
                } else if (res.exit == Face::age_back) {
                    if (cycle == 1) {
                        zero = true;
                    } else {
                        // Mitosis inflow: the previous-cycle phase-2 front
                        // trace doubled and divided by the local age flux.
                        const auto c = ctx.sample_exact(f, res.end.t);
                        const double doubling = ctx.hooks().disable_mitosis ? 1.0 : 2.0;
                        seg.boundary_factor =
                            doubling * p.tau_g[f] / (p.a1 * c.gbar);
                        next_phase = Phase::p2;
                        next_cycle = cycle - 1;
                        next_pos = {res.end.t, 1.0, res.end.y};
                    }
                } else {
                    throw StepFailure("phase-1 backward trace exited through an outflow face");
                }
                break;
            case Phase::p2:
                if (res.exit == Face::age_back) {
                    // Phase-1 front trace scaled by the flux ratio.
                    const auto c = ctx.sample_exact(f, res.end.t);
                    seg.boundary_factor = p.a1 * c.gbar / p.tau_g[f];
                    next_phase = Phase::p1;
                    next_pos = {res.end.t, 1.0, res.end.y};
                } else {
                    throw StepFailure("phase-2 backward trace exited through an outflow face");
                }
                break;
            case Phase::p3:
                if (res.exit == Face::mat_top) {
                    zero = true;
                } else if (res.exit == Face::mat_bottom) {
                    const double ratio = p.a1 / p.a2;
                    if (res.end.x <= ratio) {
                        // Phase-1 top trace with the age dilated by a2/a1.
                        next_phase = Phase::p1;
                        next_pos = {res.end.t, std::min(res.end.x / ratio, 1.0), 1.0};
                    } else {
                        zero = true;
                    }
                } else if (res.exit == Face::age_back) {
                    if (cycle == 1) {
                        zero = true;
                    } else {
                        next_cycle = cycle - 1;
                        next_pos = {res.end.t, 1.0, res.end.y};
                    }
                } else {
                    throw StepFailure("phase-3 backward trace exited through an outflow face");
                }
                break;
        }

        chain.segments.push_back(seg);
        if (zero) {
            chain.zero = true;
            return chain;
        }
        if (--budget < 0) {
            std::ostringstream oss;
            oss << "backward trace through " << component_tag(comp) << " at (t=" << t
                << ", x=" << x << ", y=" << y << ") exceeded " << 2 * p.cycles
                << " boundary hops";
            throw ChainOverflow(oss.str());
        }
        phase = next_phase;
        cycle = next_cycle;
        pos = next_pos;
    }
}

double CharChain::damping() const {
    double total = 0.0;
    for (const auto& seg : segments) total += seg.loss_integral + seg.dhdy_integral;
    return std::exp(-total);
}

double CharChain::boundary_product() const {
    double prod = 1.0;
    for (const auto& seg : segments) prod *= seg.boundary_factor;
    return prod;
}

double CharChain::value(const InitialData& data) const {
    if (zero) return 0.0;
    const double datum = data.eval(anchor, anchor_x, anchor_y);
    if (datum == 0.0) return 0.0;
    return datum * boundary_product() * damping();
}

std::uint64_t CharChain::signature() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
        h ^= v;
        h *= 1099511628211ull;
    };
    mix(zero ? 1u : 2u);
    if (!zero) {
        mix(static_cast<std::uint64_t>(anchor.follicle + 1));
        mix(static_cast<std::uint64_t>(anchor.cycle));
        mix(static_cast<std::uint64_t>(anchor.phase));
    }
    for (const auto& seg : segments) {
        mix(static_cast<std::uint64_t>(seg.phase));
        mix(static_cast<std::uint64_t>(seg.cycle));
        mix(static_cast<std::uint64_t>(seg.entry_face) + 16u);
    }
    return h;
}

std::string CharChain::to_json() const {
    nlohmann::ordered_json j;
    j["terminal"] = component_tag(terminal);
    j["query"] = {{"t", query.t}, {"x", query.x}, {"y", query.y}};
    j["zero"] = zero;
    if (!zero) {
        j["anchor"] = {{"component", component_tag(anchor)},
                       {"x", anchor_x},
                       {"y", anchor_y}};
    }
    nlohmann::ordered_json segs = nlohmann::ordered_json::array();
    for (const auto& seg : segments) {
        nlohmann::ordered_json s;
        s["phase"] = to_string(seg.phase);
        s["cycle"] = seg.cycle;
        s["entry_face"] = to_string(seg.entry_face);
        s["from"] = {{"t", seg.from.t}, {"x", seg.from.x}, {"y", seg.from.y}};
        s["to"] = {{"t", seg.to.t}, {"x", seg.to.x}, {"y", seg.to.y}};
        s["boundary_factor"] = seg.boundary_factor;
        s["loss_integral"] = seg.loss_integral;
        s["dhdy_integral"] = seg.dhdy_integral;
        segs.push_back(std::move(s));
    }
    j["segments"] = std::move(segs);
    return j.dump(2);
}

EvalResult eval_density(const CharContext& ctx, const InitialData& data,
                        ComponentId comp, double t, double x, double y) {
    const CharChain chain = backtrace(ctx, comp, t, x, y);
    return {chain.value(data), chain.signature()};
}

// ----------------------------------------------------------------------------
// Jacobian factors.
// ----------------------------------------------------------------------------

double segment_jacobian(const CharContext& ctx, const FaceSegment& seg) {
    const ModelParams& p = ctx.params();
    const int f = seg.follicle;
    if (seg.phase == Phase::p2) {
        throw Error("phase-2 segments are rigid translations; no Jacobian factor");
    }
    double J = std::exp(seg.dhdy_integral);

    // Velocity across a face of the given phase square at time s.
    const auto face_velocity = [&](Face face, double s) -> double {
        const auto c = ctx.sample_exact(f, s);
        switch (face) {
            case Face::age_back:
            case Face::age_front:
                return seg.phase == Phase::p1 ? c.gbar : vel_gtilde(p, f);
            case Face::mat_top: {
                if (seg.phase != Phase::p1) break;
                // Normalized phase-1 maturity velocity at y = 1.
                return p.tau_h[f] * (c.gp - p.gamma_s) * (p.gamma_s - c.gm) / p.gamma_s;
            }
            case Face::mat_bottom: {
                if (seg.phase != Phase::p3) break;
                // Normalized phase-3 maturity velocity at y = 0.
                return p.tau_h[f] * (c.gp - p.gamma_s) * (p.gamma_s - c.gm) / p.gamma0();
            }
            default: break;
        }
        throw Error(std::string("no velocity factor for face ") + to_string(face) +
                    " of " + to_string(seg.phase));
    };

    if (seg.from_face != Face::none) {
        const double v = face_velocity(seg.from_face, seg.t_from);
        if (!(std::abs(v) > 0.0)) throw DegenerateVelocity("entry-face velocity vanished");
        J *= std::abs(v);
    }
    if (seg.to_face != Face::none) {
        const double v = face_velocity(seg.to_face, seg.t_to);
        if (!(std::abs(v) > 0.0)) throw DegenerateVelocity("exit-face velocity vanished");
        J /= std::abs(v);
    }
    return J * ctx.hooks().jacobian_tamper;
}

} // namespace follisim
