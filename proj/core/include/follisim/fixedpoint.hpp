#pragma once

#include <vector>

#include "follisim/quadrature.hpp"
#include "follisim/trajectory.hpp"

namespace follisim {

// ----------------------------------------------------------------------------
// Certified constants of the contraction argument.
// ----------------------------------------------------------------------------

struct ContractionConstants {
    double K = 0.0;  // a-priori bound on every follicle maturity
    double K1 = 0.0; // C^1 bound on the normalized velocity/loss closures
    double K2 = 0.0; // positive lower bound on the phase-1 transport velocities
    double delta = 0.0; // certified window length
    double T = 0.0;     // horizon the constants were computed for
    std::vector<double> C1; // per-follicle Lipschitz coefficients at t = delta
    std::vector<double> C2;
};

struct ConstantsOptions {
    int grid = 64;              // samples per axis of the sup/inf scans
    double safety_upper = 1.05; // inflation of the C^1 bound
    double safety_lower = 0.95; // deflation of the velocity lower bound
};

// Computes (K, K1, K2, delta, C1, C2) from the parameters and the initial
// data norms. The window length starts at 0.9 * min(1/(2 K1), T) and is
// halved until n * delta * max_f(C1_f(delta) + C2_f(delta)) <= 1/2. Throws
// NonpositiveK2 when the velocity lower bound is not positive.
ContractionConstants compute_constants(const ModelParams& p, const InitialData& data,
                                       const ConstantsOptions& opts = {});

// Lipschitz coefficients C1_f(t), C2_f(t) for a window of length t, given the
// certified K1/K2 and the initial data norms. Exposed for direct inspection.
void lipschitz_coefficients(const ModelParams& p, const InitialData& data, double K1,
                            double K2, double t, std::vector<double>& C1,
                            std::vector<double>& C2);

// ----------------------------------------------------------------------------
// Fixed-point solve.
// ----------------------------------------------------------------------------

struct FixedPointOptions {
    double fp_tol_factor = 1e-10;    // tolerance = factor * max(1, K)
    int fp_max_iter = 200;
    double window_safety = 1.0;      // extra multiplicative shrink on delta
    int ctrl_samples_per_window = 8; // maturity samples per window (J)
    int resample_window_cap = 8;     // windows before the datum is re-anchored
    int resample_grid = 1024;        // resolution of the re-anchor snapshot
    double guess_ramp = 0.0;         // initial-guess ramp amplitude (fraction of K)
    QuadratureOptions quad;
    Hooks hooks;
};

// Maturity moments at t = 0, straight from the data (no tracing).
std::vector<double> data_maturities(const ModelParams& p, const InitialData& data,
                                    const QuadratureOptions& opts = {});

// One application of the solution operator G: freeze the candidate maturity
// history `traj` (which must cover [anchor_time, times.back()]), solve the
// linear transport problem anchored at (anchor_time, data) along it, and
// return the maturity moments it induces. Result is [follicle][time index].
std::vector<std::vector<double>> apply_G(const ModelParams& p, const InitialData& data,
                                         const MaturityTrajectory& traj,
                                         double anchor_time,
                                         const std::vector<double>& times,
                                         const FixedPointOptions& opts = {});

struct PicardReport {
    int window = 0;
    double t_lo = 0.0;
    double t_hi = 0.0;
    int iterations = 0;
    double residual = 0.0;       // final sup distance between successive iterates
    double observed_ratio = 0.0; // largest successive-residual ratio observed
    bool converged = false;
};

struct MarchResult {
    MaturityTrajectory trajectory;
    ContractionConstants constants;
    std::vector<PicardReport> windows;
    int resamples = 0;
    double delta_used = 0.0; // actual window length after safety shrinks
    // Datum anchors, ordered by time: the first is (0, initial data); every
    // re-anchoring appends its (time, grid snapshot) pair. Density queries at
    // time t trace back to the latest anchor at or before t.
    std::vector<std::pair<double, InitialData>> anchors;
};

// Full solve on [0, p.horizon]: window-by-window Picard iteration on the
// maturity trajectory, with the datum re-anchored onto a grid snapshot every
// `resample_window_cap` windows. Throws NoConvergence when a window fails to
// meet the tolerance within fp_max_iter iterations.
MarchResult march(const ModelParams& p, const InitialData& data,
                  const FixedPointOptions& opts = {});

} // namespace follisim
