#include "follisim/model.hpp"

#include <cmath>
#include <sstream>

namespace follisim {

namespace {

[[noreturn]] void fail_config(const std::string& what) {
    throw ConfigError("invalid parameters: " + what);
}

void require(bool ok, const char* what) {
    if (!ok) fail_config(what);
}

} // namespace

const char* to_string(Phase phase) {
    switch (phase) {
        case Phase::p1: return "p1";
        case Phase::p2: return "p2";
        case Phase::p3: return "p3";
    }
    throw Error("unknown phase");
}

Phase phase_from_int(int value) {
    if (value < 1 || value > 3) {
        throw ConfigError("phase must be 1, 2, or 3, got " + std::to_string(value));
    }
    return static_cast<Phase>(value);
}

void ModelParams::validate() const {
    require(a1 > 0.0, "a1 must be positive");
    require(a2 > a1, "a2 must exceed a1");
    require(gamma_s > 0.0, "gamma_s must be positive");
    require(gamma_m > gamma_s, "gamma_m must exceed gamma_s");
    require(follicles >= 1, "follicles must be at least 1");
    require(cycles >= 1, "cycles must be at least 1");
    if (static_cast<int>(tau_g.size()) != follicles ||
        static_cast<int>(tau_h.size()) != follicles) {
        fail_config("tau_g and tau_h must have one entry per follicle");
    }
    for (double v : tau_g) require(v > 0.0, "tau_g entries must be positive");
    for (double v : tau_h) require(v > 0.0, "tau_h entries must be positive");
    require(g1 >= 0.0 && g1 <= 1.0, "g1 must lie in [0,1]");
    require(c1 > 0.0, "c1 must be positive");
    require(c2 > 0.0, "c2 must be positive");
    require(u_bar > 0.0, "u_bar must be positive");
    require(K_lambda >= 0.0, "K_lambda must be nonnegative");
    require(gamma_bar > 0.0, "gamma_bar must be positive");
    require(U0 >= 0.0, "U0 must be nonnegative");
    require(Us >= 0.0 && Us <= 1.0, "Us must lie in [0,1]");
    require(c >= 0.0, "c must be nonnegative");
    require(b1 >= 0.0, "b1 must be nonnegative");
    require(b2 >= 0.0, "b2 must be nonnegative");
    require(b3 > 0.0, "b3 must be positive");
    require(U0 + Us > 0.0 || Us < 1.0, "global control must be positive");
    require(horizon > 0.0, "horizon must be positive");
}

// ----------------------------------------------------------------------------
// Controls.
// ----------------------------------------------------------------------------

double global_control(const ModelParams& p, double M, double /*t*/) {
    const double e = std::exp(p.c * (M - p.m));
    return p.U0 + p.Us + (1.0 - p.Us) / (1.0 + e);
}

double global_control_dM(const ModelParams& p, double M, double /*t*/) {
    const double e = std::exp(p.c * (M - p.m));
    const double d = 1.0 + e;
    return -(1.0 - p.Us) * p.c * e / (d * d);
}

double local_gain(const ModelParams& p, double M_f) {
    const double b = p.b1 + std::exp(p.b2 * M_f) / p.b3;
    return b < 1.0 ? b : 1.0;
}

double local_gain_dMf(const ModelParams& p, double M_f) {
    const double b = p.b1 + std::exp(p.b2 * M_f) / p.b3;
    if (b >= 1.0) return 0.0;
    return p.b2 * std::exp(p.b2 * M_f) / p.b3;
}

double local_control(const ModelParams& p, double M_f, double M, double t) {
    return local_gain(p, M_f) * global_control(p, M, t);
}

double local_control_dMf(const ModelParams& p, double M_f, double M, double t) {
    return local_gain_dMf(p, M_f) * global_control(p, M, t);
}

double local_control_dM(const ModelParams& p, double M_f, double M, double t) {
    return local_gain(p, M_f) * global_control_dM(p, M, t);
}

// ----------------------------------------------------------------------------
// Original-coordinate closures.
// ----------------------------------------------------------------------------

double age_velocity(const ModelParams& p, int f, double u) {
    return p.tau_g[f] * (1.0 - p.g1 * (1.0 - u));
}

double age_velocity_du(const ModelParams& p, int f) {
    return p.tau_g[f] * p.g1;
}

double saturation(const ModelParams& p, double u) {
    return 1.0 - std::exp(-u / p.u_bar);
}

double saturation_du(const ModelParams& p, double u) {
    return std::exp(-u / p.u_bar) / p.u_bar;
}

double maturity_velocity(const ModelParams& p, int f, double gamma, double u) {
    const double q = saturation(p, u);
    return p.tau_h[f] * (-gamma * gamma + (p.c1 * gamma + p.c2) * q);
}

double maturity_velocity_dgamma(const ModelParams& p, int f, double gamma, double u) {
    const double q = saturation(p, u);
    return p.tau_h[f] * (-2.0 * gamma + p.c1 * q);
}

double maturity_velocity_du(const ModelParams& p, int f, double gamma, double u) {
    return p.tau_h[f] * (p.c1 * gamma + p.c2) * saturation_du(p, u);
}

double gamma_plus(const ModelParams& p, double u) {
    const double q = saturation(p, u);
    const double b = p.c1 * q;
    return 0.5 * (b + std::sqrt(b * b + 4.0 * p.c2 * q));
}

double gamma_minus(const ModelParams& p, double u) {
    const double q = saturation(p, u);
    const double b = p.c1 * q;
    return 0.5 * (b - std::sqrt(b * b + 4.0 * p.c2 * q));
}

double loss_rate(const ModelParams& p, double gamma, double U) {
    const double z = (gamma - p.gamma_s) / p.gamma_bar;
    return p.K_lambda * std::exp(-z * z) * (1.0 - U);
}

double loss_rate_dgamma(const ModelParams& p, double gamma, double U) {
    const double z = (gamma - p.gamma_s) / p.gamma_bar;
    return p.K_lambda * std::exp(-z * z) * (1.0 - U) * (-2.0 * z / p.gamma_bar);
}

double loss_rate_dU(const ModelParams& p, double gamma, double /*U*/) {
    const double z = (gamma - p.gamma_s) / p.gamma_bar;
    return -p.K_lambda * std::exp(-z * z);
}

// ----------------------------------------------------------------------------
// Normalized closures.
// ----------------------------------------------------------------------------

double vel_gbar(const ModelParams& p, int f, double u) {
    return age_velocity(p, f, u) / p.a1;
}

double vel_gbar_du(const ModelParams& p, int f) {
    return age_velocity_du(p, f) / p.a1;
}

double vel_ghat(const ModelParams& p, int f) {
    return p.tau_g[f] / (p.a2 - p.a1);
}

double vel_gtilde(const ModelParams& p, int f) {
    return p.tau_g[f] / p.a2;
}

double vel_hbar(const ModelParams& p, int f, double y, double u) {
    return maturity_velocity(p, f, p.gamma_s * y, u) / p.gamma_s;
}

double vel_htilde(const ModelParams& p, int f, double y, double u) {
    return maturity_velocity(p, f, p.gamma0() * y + p.gamma_s, u) / p.gamma0();
}

double vel_hbar_dy(const ModelParams& p, int f, double y, double u) {
    return maturity_velocity_dgamma(p, f, p.gamma_s * y, u);
}

double vel_htilde_dy(const ModelParams& p, int f, double y, double u) {
    return maturity_velocity_dgamma(p, f, p.gamma0() * y + p.gamma_s, u);
}

double loss_lbar(const ModelParams& p, double y, double U) {
    return loss_rate(p, p.gamma_s * y, U);
}

double loss_ltilde(const ModelParams& p, double y, double U) {
    return loss_rate(p, p.gamma0() * y + p.gamma_s, U);
}

void check_velocity_signs(const ModelParams& p, int f, double u) {
    std::ostringstream oss;
    if (!(u > 0.0) || !std::isfinite(u)) {
        oss << "local control u_" << (f + 1) << " = " << u << " is not positive";
        throw AssumptionViolated(oss.str());
    }
    if (!(age_velocity(p, f, u) > 0.0)) {
        oss << "phase-1 age velocity is not positive at u_" << (f + 1) << " = " << u;
        throw AssumptionViolated(oss.str());
    }
    const double gp = gamma_plus(p, u);
    if (!(gp > p.gamma_s)) {
        oss << "maturity velocity root gamma_plus(" << u << ") = " << gp
            << " does not exceed gamma_s = " << p.gamma_s
            << " (phase-1 maturity velocity loses positivity)";
        throw AssumptionViolated(oss.str());
    }
    if (!(gp < p.gamma_m)) {
        oss << "maturity velocity root gamma_plus(" << u << ") = " << gp
            << " reaches gamma_m = " << p.gamma_m
            << " (phase-3 top-face velocity loses negativity)";
        throw AssumptionViolated(oss.str());
    }
}

// ----------------------------------------------------------------------------
// Rescaling.
// ----------------------------------------------------------------------------

namespace {

struct Rect {
    double a_lo, a_hi, g_lo, g_hi;
};

Rect phase_rect(const ModelParams& p, Phase phase, int cycle) {
    const double base = (cycle - 1) * p.a2;
    switch (phase) {
        case Phase::p1: return {base, base + p.a1, 0.0, p.gamma_s};
        case Phase::p2: return {base + p.a1, cycle * p.a2, 0.0, p.gamma_s};
        case Phase::p3: return {base, cycle * p.a2, p.gamma_s, p.gamma_m};
    }
    throw Error("unknown phase");
}

void check_cycle(const ModelParams& p, int cycle) {
    if (cycle < 1 || cycle > p.cycles) {
        throw OutOfDomain("cycle index " + std::to_string(cycle) + " outside 1.." +
                          std::to_string(p.cycles));
    }
}

// Maps v from [lo, hi] to [0, 1]; clamps within a relative tolerance band and
// throws beyond it.
double normalize_coord(double v, double lo, double hi, const char* what) {
    const double span = hi - lo;
    const double tol = 1e-12 * std::max(std::abs(lo) + span, 1.0);
    if (v < lo - tol || v > hi + tol) {
        std::ostringstream oss;
        oss << what << " = " << v << " outside [" << lo << ", " << hi << "]";
        throw OutOfDomain(oss.str());
    }
    double s = (v - lo) / span;
    if (s < 0.0) s = 0.0;
    if (s > 1.0) s = 1.0;
    return s;
}

double denormalize_coord(double s, double lo, double hi, const char* what) {
    const double tol = 1e-12;
    if (s < -tol || s > 1.0 + tol) {
        std::ostringstream oss;
        oss << what << " = " << s << " outside [0, 1]";
        throw OutOfDomain(oss.str());
    }
    if (s < 0.0) s = 0.0;
    if (s > 1.0) s = 1.0;
    return lo + s * (hi - lo);
}

} // namespace

UnitPoint to_unit(const ModelParams& p, Phase phase, int cycle, OrigPoint pt) {
    check_cycle(p, cycle);
    const Rect r = phase_rect(p, phase, cycle);
    return {normalize_coord(pt.age, r.a_lo, r.a_hi, "age"),
            normalize_coord(pt.gamma, r.g_lo, r.g_hi, "gamma")};
}

OrigPoint from_unit(const ModelParams& p, Phase phase, int cycle, UnitPoint pt) {
    check_cycle(p, cycle);
    const Rect r = phase_rect(p, phase, cycle);
    return {denormalize_coord(pt.x, r.a_lo, r.a_hi, "x"),
            denormalize_coord(pt.y, r.g_lo, r.g_hi, "y")};
}

double maturity_weight(const ModelParams& p, Phase phase, double y) {
    switch (phase) {
        case Phase::p1: return p.a1 * p.gamma_s * p.gamma_s * y;
        case Phase::p2: return (p.a2 - p.a1) * p.gamma_s * p.gamma_s * y;
        case Phase::p3: return p.a2 * p.gamma0() * (p.gamma0() * y + p.gamma_s);
    }
    throw Error("unknown phase");
}

// ----------------------------------------------------------------------------
// Component bookkeeping.
// ----------------------------------------------------------------------------

int component_count(const ModelParams& p) {
    return p.follicles * p.cycles * 3;
}

int component_index(const ModelParams& p, ComponentId id) {
    if (id.follicle < 0 || id.follicle >= p.follicles) {
        throw OutOfDomain("follicle index " + std::to_string(id.follicle) +
                          " outside 0.." + std::to_string(p.follicles - 1));
    }
    check_cycle(p, id.cycle);
    return (id.follicle * p.cycles + (id.cycle - 1)) * 3 +
           (static_cast<int>(id.phase) - 1);
}

ComponentId component_from_index(const ModelParams& p, int index) {
    if (index < 0 || index >= component_count(p)) {
        throw OutOfDomain("component index " + std::to_string(index) + " out of range");
    }
    ComponentId id;
    id.phase = phase_from_int(index % 3 + 1);
    id.cycle = (index / 3) % p.cycles + 1;
    id.follicle = index / (3 * p.cycles);
    return id;
}

std::string component_tag(ComponentId id) {
    std::ostringstream oss;
    oss << "f" << (id.follicle + 1) << ".c" << id.cycle << "." << to_string(id.phase);
    return oss.str();
}

} // namespace follisim
