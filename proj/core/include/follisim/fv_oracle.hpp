#pragma once

#include <cstdint>
#include <vector>

#include "follisim/initial_data.hpp"
#include "follisim/model.hpp"
#include "follisim/trajectory.hpp"

namespace follisim {

// First-order finite-volume reference solver, independent of the
// characteristic machinery: dimensional splitting with donor-cell upwind
// fluxes, flux-form interface transfers between the component squares,
// exact exponential integration of the loss term, and explicit (lagged)
// controls frozen over each step. Used to cross-validate the primary solver
// and to measure convergence order; not a production path.

struct FvOptions {
    int nx = 64;
    int ny = 64;
    double cfl = 0.9;   // fraction of the stability limit
    double fixed_dt = 0.0; // 0 = automatic; a positive value must satisfy CFL
    Hooks hooks;
};

// Running conservation audit in original (dimensional) mass units.
struct FvAudit {
    double mitosis_in = 0.0;  // mass injected at next-cycle phase-1 back faces
    double mitosis_out = 0.0; // mass leaving phase-2 fronts toward those faces
    double loss = 0.0;        // mass removed by the loss term
    double system_out = 0.0;  // mass leaving the last cycle's front faces
    long steps = 0;
};

class FvSolver {
public:
    FvSolver(const ModelParams& p, const InitialData& data, FvOptions opts);

    double t() const { return t_; }
    int nx() const { return opts_.nx; }
    int ny() const { return opts_.ny; }
    const FvAudit& audit() const { return audit_; }
    const ModelParams& params() const { return params_; }

    // Cell average of one component square (i: age index, j: maturity index).
    double cell(ComponentId id, int i, int j) const;
    const std::vector<double>& cells(ComponentId id) const;

    // Midpoint-rule maturity moments / masses in original units.
    std::vector<double> maturities() const;
    double component_mass(ComponentId id) const;
    double total_mass() const;

    // Largest stable step at the current controls (before the CFL fraction).
    double stability_limit() const;

    // One step of at most dt_max (automatic CFL step when dt_max is larger).
    // Returns the step actually taken.
    double step(double dt_max);
    // March to t_end, landing on it exactly.
    void advance_to(double t_end);

private:
    struct StepControls {
        double U = 0.0;
        std::vector<double> u; // per follicle
    };
    StepControls controls_at(double t, const std::vector<double>& M) const;

    ModelParams params_;
    FvOptions opts_;
    double t_ = 0.0;
    double hx_, hy_;
    std::vector<std::vector<double>> cells_; // [component][j * nx + i]
    FvAudit audit_;
};

// Maturity trajectory recorded while marching to `horizon`. Records are taken
// at t = 0, every requested time in (0, horizon), and the horizon itself.
struct FvRecord {
    double t = 0.0;
    std::vector<double> M;
};

struct FvRunResult {
    std::vector<FvRecord> records;
    FvAudit audit;
};

FvRunResult fv_run(const ModelParams& p, const InitialData& data, double horizon,
                   const FvOptions& opts, const std::vector<double>& record_times = {});

} // namespace follisim
