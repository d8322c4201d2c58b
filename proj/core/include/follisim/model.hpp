#pragma once

#include <string>
#include <vector>

#include "follisim/errors.hpp"

namespace follisim {

// ============================================================================
// Model description
//
// A population of n follicles, each carrying cell densities on N consecutive
// cell cycles. Every cycle k of follicle f consists of three phases:
//
//   phase 1: ages [(k-1)a2, (k-1)a2+a1], maturities [0, gamma_s]
//   phase 2: ages [(k-1)a2+a1, k a2],    maturities [0, gamma_s]
//   phase 3: ages [(k-1)a2, k a2],       maturities [gamma_s, gamma_m]
//
// Each phase rectangle is rescaled onto the unit square [0,1]^2; all
// densities live on the same normalized domain and are coupled through
// boundary conditions (mitosis at cycle transitions, phase transfers) and
// through the nonlocal controls u_f(M_f, M), U(M) computed from the maturity
// integrals of the densities themselves.
// ============================================================================

enum class Phase : int { p1 = 1, p2 = 2, p3 = 3 };

const char* to_string(Phase phase);
Phase phase_from_int(int value);

struct ModelParams {
    // Geometry of the age/maturity rectangles.
    double a1 = 1.0;      // phase-1 age width
    double a2 = 2.0;      // cycle age width (a2 > a1)
    double gamma_s = 1.0; // maturity at the phase-1/phase-3 interface
    double gamma_m = 2.0; // top maturity of phase 3

    int follicles = 2; // n
    int cycles = 2;    // N

    // Per-follicle velocity scales.
    std::vector<double> tau_g{1.0, 0.9};
    std::vector<double> tau_h{1.0, 0.95};

    // Age velocity modulation in phase 1: g_f(u) = tau_g (1 - g1 (1 - u)).
    double g1 = 0.5;

    // Maturity velocity h_f(gamma, u) = tau_h (-gamma^2 + (c1 gamma + c2) q(u))
    // with saturation q(u) = 1 - exp(-u / u_bar).
    double c1 = 1.2;
    double c2 = 0.5;
    double u_bar = 0.15;

    // Loss rate lambda(gamma, U) = K_lambda exp(-((gamma-gamma_s)/gamma_bar)^2) (1-U).
    double K_lambda = 0.6;
    double gamma_bar = 0.7;

    // Global control U(M) = U0 + Us + (1 - Us) / (1 + exp(c (M - m))).
    double U0 = 0.05;
    double Us = 0.5;
    double c = 2.0;
    double m = 0.5;

    // Local gain b(M_f) = min{ b1 + exp(b2 M_f) / b3, 1 }; u_f = b(M_f) U.
    double b1 = 0.35;
    double b2 = 2.25;
    double b3 = 8.0;

    // Time horizon of the run.
    double horizon = 1.0;

    double gamma0() const { return gamma_m - gamma_s; }

    // Throws ConfigError when the parameter set is inadmissible.
    void validate() const;
};

// ----------------------------------------------------------------------------
// Controls.
// ----------------------------------------------------------------------------

// Global control U(M, t); positive and nonincreasing in M.
double global_control(const ModelParams& p, double M, double t);
double global_control_dM(const ModelParams& p, double M, double t);

// Local gain b(M_f) (saturates at 1) and its derivative (0 past saturation).
double local_gain(const ModelParams& p, double M_f);
double local_gain_dMf(const ModelParams& p, double M_f);

// Local control u_f = b(M_f) U(M, t).
double local_control(const ModelParams& p, double M_f, double M, double t);
double local_control_dMf(const ModelParams& p, double M_f, double M, double t);
double local_control_dM(const ModelParams& p, double M_f, double M, double t);

// ----------------------------------------------------------------------------
// Closures in the original age/maturity coordinates.
// `f` is the 0-based follicle index.
// ----------------------------------------------------------------------------

// Phase-1 age velocity g_f(u) and its u-derivative.
double age_velocity(const ModelParams& p, int f, double u);
double age_velocity_du(const ModelParams& p, int f);

// Saturation q(u) = 1 - exp(-u/u_bar) and derivative.
double saturation(const ModelParams& p, double u);
double saturation_du(const ModelParams& p, double u);

// Maturity velocity h_f(gamma, u) and partial derivatives.
double maturity_velocity(const ModelParams& p, int f, double gamma, double u);
double maturity_velocity_dgamma(const ModelParams& p, int f, double gamma, double u);
double maturity_velocity_du(const ModelParams& p, int f, double gamma, double u);

// Roots of gamma -> h_f(gamma, u): h_f = tau_h (gamma_plus - gamma)(gamma - gamma_minus).
// gamma_plus(0) = 0, nondecreasing in u; gamma_minus(u) <= 0.
double gamma_plus(const ModelParams& p, double u);
double gamma_minus(const ModelParams& p, double u);

// Loss rate lambda(gamma, U) and partial derivatives.
double loss_rate(const ModelParams& p, double gamma, double U);
double loss_rate_dgamma(const ModelParams& p, double gamma, double U);
double loss_rate_dU(const ModelParams& p, double gamma, double U);

// ----------------------------------------------------------------------------
// Closures on the normalized unit squares.
// ----------------------------------------------------------------------------

double vel_gbar(const ModelParams& p, int f, double u);  // phase-1 age velocity / a1
double vel_gbar_du(const ModelParams& p, int f);
double vel_ghat(const ModelParams& p, int f);            // phase-2 age velocity, constant
double vel_gtilde(const ModelParams& p, int f);          // phase-3 age velocity, constant

double vel_hbar(const ModelParams& p, int f, double y, double u);
double vel_htilde(const ModelParams& p, int f, double y, double u);
// d/dy of the normalized maturity velocities; both equal the original-coordinate
// d h_f/d gamma evaluated at the mapped maturity.
double vel_hbar_dy(const ModelParams& p, int f, double y, double u);
double vel_htilde_dy(const ModelParams& p, int f, double y, double u);

double loss_lbar(const ModelParams& p, double y, double U);
double loss_ltilde(const ModelParams& p, double y, double U);

// Structural sign hypotheses: u > 0, g_f(u) > 0, and gamma_s < gamma_plus(u)
// < gamma_m (equivalently: the phase-1 maturity velocity is positive up to the
// interface, the phase-3 velocity is positive at the bottom face and negative
// at the top face). Throws AssumptionViolated otherwise.
void check_velocity_signs(const ModelParams& p, int f, double u);

// ----------------------------------------------------------------------------
// Coordinate rescaling between the original phase rectangles and [0,1]^2.
// `cycle` is 1-based.
// ----------------------------------------------------------------------------

struct UnitPoint {
    double x = 0.0;
    double y = 0.0;
};

struct OrigPoint {
    double age = 0.0;
    double gamma = 0.0;
};

// Throws OutOfDomain when the point lies outside its rectangle by more than a
// 1e-12 relative tolerance; results are clamped within tolerance.
UnitPoint to_unit(const ModelParams& p, Phase phase, int cycle, OrigPoint pt);
OrigPoint from_unit(const ModelParams& p, Phase phase, int cycle, UnitPoint pt);

// Maturity-integral weight of a density value at height y of the given phase
// square: the original maturity times the area element of the rescaling.
double maturity_weight(const ModelParams& p, Phase phase, double y);

// ----------------------------------------------------------------------------
// Component bookkeeping. A component is one (follicle, cycle, phase) square.
// ----------------------------------------------------------------------------

struct ComponentId {
    int follicle = 0; // 0-based
    int cycle = 1;    // 1-based
    Phase phase = Phase::p1;

    bool operator==(const ComponentId&) const = default;
};

int component_count(const ModelParams& p);
int component_index(const ModelParams& p, ComponentId id);
ComponentId component_from_index(const ModelParams& p, int index);

// Stable text tag, e.g. "f1.c2.p3" (follicle and cycle printed 1-based).
std::string component_tag(ComponentId id);

} // namespace follisim
