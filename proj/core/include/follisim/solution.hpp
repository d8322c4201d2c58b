#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "follisim/fixedpoint.hpp"

namespace follisim {

// ----------------------------------------------------------------------------
// Test functions for the weak-form residual.
// ----------------------------------------------------------------------------

// A C^1 test function on [0, horizon] x [0,1]^2 with exact partials. An
// admissible test set vanishes at the final time of the test interval and on
// the front face x = 1 (every component), on the back face x = 0 (first-cycle
// phase-1/phase-3 components), and on both maturity faces y = 0, 1 (phase-1
// and phase-2 components); weak_residual rejects sets violating this.
struct TestFunction {
    virtual ~TestFunction() = default;
    virtual double value(double t, double x, double y) const = 0;
    virtual double dt(double t, double x, double y) const = 0;
    virtual double dx(double t, double x, double y) const = 0;
    virtual double dy(double t, double x, double y) const = 0;
};
using TestFunctionPtr = std::shared_ptr<const TestFunction>;

// One test function per component square.
class TestFunctionSet {
public:
    TestFunctionSet(int follicles, int cycles);

    void set(ComponentId id, TestFunctionPtr fn);
    const TestFunction& get(ComponentId id) const; // zero function when unset
    bool has(ComponentId id) const;

    int follicles() const { return follicles_; }
    int cycles() const { return cycles_; }

private:
    int follicles_, cycles_;
    std::vector<TestFunctionPtr> fns_;
};

// Admissible random test set: per component a product of one-dimensional
// quintic polynomial bumps in t, x and y whose root structure enforces the
// vanishing conditions listed above, with the free coefficients drawn
// deterministically from the seed in [0.3, 1.0]. Back-face and phase-3
// bottom-face values are kept strictly positive so every interface term of
// the weak identity is exercised.
TestFunctionSet make_poly_test_set(const ModelParams& p, double tau,
                                   std::uint64_t seed);

// ----------------------------------------------------------------------------
// Weak-form residual.
// ----------------------------------------------------------------------------

// Multiplies the evaluated density of one component by
// 1 + amp * (t - t0)/(tau - t0), turning an exact solution into a defective
// one (a constant scaling would stay an exact solution of the frozen-control
// system and leave the residual unchanged at short horizons).
struct DensityPerturbation {
    ComponentId comp;
    double amp = 0.0;
};

// The six contributions to the weak identity. For an exact solution paired
// with an admissible test set they sum to zero: the interface terms pair the
// upstream trace of the density against the downstream test function on the
// inflow faces where the test functions are allowed to be nonzero.
struct WeakResidual {
    double interior = 0.0;   // space-time pairing against the transport operator
    double initial = 0.0;    // datum pairing at t0
    double p3_bottom = 0.0;  // phase-1 top trace against phase-3 bottom tests
    double mitosis = 0.0;    // phase-2 front trace against next-cycle phase-1 tests
    double p3_back = 0.0;    // phase-3 front trace against next-cycle phase-3 tests
    double p1_to_p2 = 0.0;   // phase-1 front trace against phase-2 tests

    double total() const {
        return interior + initial + p3_bottom + mitosis + p3_back + p1_to_p2;
    }
    double scale() const; // largest term magnitude
};

// ----------------------------------------------------------------------------
// Bound certification.
// ----------------------------------------------------------------------------

struct BoundsReport {
    bool trajectory_ok = true;
    double min_M = 0.0;
    double max_M = 0.0;
    double K = 0.0;

    bool density_ok = true;
    double max_density = 0.0;
    double density_bound = 0.0; // smallest per-follicle bound that was enforced
    double worst_ratio = 0.0;   // max over samples of value / follicle bound
    int samples = 0;

    bool ok() const { return trajectory_ok && density_ok; }
};

// ----------------------------------------------------------------------------
// Solution handle.
// ----------------------------------------------------------------------------

// A converged solve: the maturity trajectory plus everything needed to
// evaluate the densities it induces (datum anchors, hooks, constants).
class Solution {
public:
    Solution(const ModelParams& p, InitialData data, MarchResult result, Hooks hooks);

    const ModelParams& params() const { return params_; }
    const InitialData& initial_data() const { return data0_; }
    const MaturityTrajectory& trajectory() const { return result_.trajectory; }
    const ContractionConstants& constants() const { return result_.constants; }
    const MarchResult& march_result() const { return result_; }
    const Hooks& hooks() const { return hooks_; }
    double horizon() const { return params_.horizon; }

    // Pointwise density of one component square at (t, x, y).
    double eval(ComponentId comp, double t, double x, double y) const;

    // The full backward chain at a point (diagnostics output).
    CharChain chain(ComponentId comp, double t, double x, double y) const;

    // Region label of a point.
    RegionLabel region(ComponentId comp, double t, double x, double y) const;

    // Maturity moments at t recomputed by quadrature of the densities.
    std::vector<double> maturity(double t) const;
    // Maturity moments interpolated from the converged trajectory (fast).
    std::vector<double> maturity_interp(double t) const;

    // Weak-form residual over [t0, tau] against the test set. Throws
    // InvalidTestFunction when psi violates the admissibility conditions
    // (vanishing at tau, on the front face, on the first-cycle back face and
    // on the phase-1/phase-2 maturity faces) beyond 1e-12 relative, and
    // WindowExceeded when the interval spans a datum re-anchoring.
    WeakResidual weak_residual(const TestFunctionSet& psi, double t0, double tau,
                               const QuadratureOptions& quad = {},
                               const std::optional<DensityPerturbation>& pert =
                                   std::nullopt) const;

    // Trajectory bound 0 <= M_f <= K at every trajectory sample plus the
    // sup-norm density bound at `n_samples` pseudo-random space-time points.
    BoundsReport check_bounds(int n_samples, std::uint64_t seed) const;

    // The characteristic context anchored at the latest datum at or before t.
    const CharContext& context_at(double t) const;
    // The datum paired with that context.
    const InitialData& datum_at(double t) const;

private:
    std::size_t anchor_index(double t) const;
    const CharContext& context_for_anchor(std::size_t i) const;

    ModelParams params_;
    InitialData data0_;
    MarchResult result_;
    Hooks hooks_;
    mutable std::vector<std::unique_ptr<CharContext>> ctxs_; // per anchor, lazy
};

} // namespace follisim
