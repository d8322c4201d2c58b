#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "follisim/initial_data.hpp"
#include "follisim/model.hpp"
#include "follisim/trajectory.hpp"

namespace follisim {

// Faces of a normalized phase square, plus the two non-face outcomes of an
// integration (reaching the target time).
enum class Face : int {
    none = 0,       // reached the target time strictly inside the square
    age_back = 1,   // x = 0
    age_front = 2,  // x = 1
    mat_bottom = 3, // y = 0
    mat_top = 4,    // y = 1
};

const char* to_string(Face face);

// ============================================================================
// CharContext: shared state for every characteristic computation against one
// control history. Holds the exact control curves, the aligned integration
// grid, and per-grid-node tabulations of the control-dependent closure values
// (gamma roots, phase-1 age velocity, 1-U). Tabulated values are exact closure
// evaluations at the grid times; the fixed-step integrator only ever reads
// them at those times, so no interpolation error is introduced. Off-grid times
// (partial first steps, event bisection) use the exact evaluator directly.
// ============================================================================
class CharContext {
public:
    // `t_anchor` is the datum time; `t_hi` the latest time any query may use.
    // The integration step is min(dt_ctrl, 1e-3 * horizon), shrunk to the
    // nearest exact divisor of dt_ctrl so control-sample times land on the
    // integration grid.
    CharContext(const ModelParams& p, ControlCurves controls, double t_anchor,
                double t_hi, double dt_ctrl);

    const ModelParams& params() const { return params_; }
    const Hooks& hooks() const { return controls_.hooks(); }
    const ControlCurves& controls() const { return controls_; }
    double t_anchor() const { return t_anchor_; }
    double t_hi() const { return t_hi_; }
    double step() const { return step_; }

    // Closure values derived from the controls at time s for follicle f.
    struct ControlSample {
        double u = 0.0;           // local control u_f(s)
        double gp = 0.0;          // gamma_plus(u)
        double gm = 0.0;          // gamma_minus(u)
        double gbar = 0.0;        // normalized phase-1 age velocity
        double one_minus_U = 0.0; // 1 - U(s)
    };

    // Exact evaluation at an arbitrary time (validates sign hypotheses).
    ControlSample sample_exact(int f, double s) const;

    // Tabulated evaluation at half-grid node `h` (time of node h is
    // t_anchor + h * step/2).
    const ControlSample& sample_node(int f, int h) const;
    double node_time(int h) const { return t_anchor_ + 0.5 * step_ * h; }
    int half_nodes() const { return static_cast<int>(table_[0].size()); }

    // Largest integration-grid index k with t_anchor + k*step <= s (+tol).
    int grid_index_below(double s) const;
    double grid_time(int k) const { return t_anchor_ + step_ * k; }

private:
    ModelParams params_;
    ControlCurves controls_;
    double t_anchor_;
    double t_hi_;
    double step_;
    std::vector<std::vector<ControlSample>> table_; // [follicle][half node]
};

// ============================================================================
// Characteristic flow.
// ============================================================================

struct FlowPoint {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
};

struct FlowResult {
    FlowPoint end;
    Face exit = Face::none;
    // Path integrals of the loss rate and of the y-derivative of the maturity
    // velocity, both oriented from the earlier to the later endpoint.
    double loss_integral = 0.0;
    double dhdy_integral = 0.0;
};

// Integrates the characteristic of (phase, follicle f) through `start` toward
// `t_target` (backward when t_target < start.t) with fixed-step RK4; stops at
// the first face crossing, which is located by bisection to 1e-12 in time and
// clamped exactly onto the face. Phase 2 is resolved in closed form.
FlowResult flow(const CharContext& ctx, Phase phase, int f, FlowPoint start,
                double t_target);

// Entry time theta <= t at which the phase-1 age coordinate backward from
// (t, x) reaches 0; returns t_anchor - 1 if the age reaches the anchor time
// first (age flow is independent of maturity).
double p1_age_entry_time(const CharContext& ctx, int f, double t, double x);

// Forward image at time t of the phase age front started from the anchor:
// X(t) = integral of the phase-1 age velocity (capped at 1).
double p1_front(const CharContext& ctx, int f, double t);
double p2_front(const CharContext& ctx, int f, double t);
double p3_front(const CharContext& ctx, int f, double t);

// Uncapped phase-1 age shift: the integral of the phase-1 age velocity from
// the anchor to t (every phase-1 age coordinate translates by this amount);
// values are exact up to 2, then saturate (the square has been crossed).
double p1_shift(const CharContext& ctx, int f, double t);

// Image at s_to of the maturity coordinate y0 at s_from under the in-phase
// maturity flow (x-independent); phase 2 freezes the coordinate.
double maturity_image(const CharContext& ctx, Phase phase, int f, double y0,
                      double s_from, double s_to);

// Separatrix heights at (t, x). For x below the front these follow the
// characteristic emitted from the face corner at the entry time of x; past the
// front they are constant in x (the image of the anchor-time corner).
double p1_separatrix(const CharContext& ctx, int f, double t, double x);
double p3_separatrix_lower(const CharContext& ctx, int f, double t, double x);
double p3_separatrix_upper(const CharContext& ctx, int f, double t, double x);

// ============================================================================
// Region classification.
// ============================================================================

enum class RegionLabel : int {
    p1_interior = 0,     // anchored at the datum
    p1_influx = 1,       // fed through x=0 (cycle transition)
    p1_zero = 2,         // fed by the zero condition at y=0
    p2_interior = 3,     // anchored at the datum
    p2_influx = 4,       // fed through x=0 (phase-1 front trace)
    p3_interior = 5,     // anchored at the datum
    p3_bottom_influx = 6,// fed through y=0 (phase-1 top trace)
    p3_back_influx = 7,  // fed through x=0 (previous-cycle trace)
    p3_zero = 8,         // fed by the zero condition at y=1
};

const char* to_string(RegionLabel label);

// Labels the point by the separatrix curves; points within 1e-10 of a curve
// are labeled by the outcome of the backward trace.
RegionLabel classify(const CharContext& ctx, ComponentId comp, double t, double x,
                     double y);

// ============================================================================
// Backward tracing.
// ============================================================================

struct ChainSegment {
    Phase phase = Phase::p1;
    int cycle = 1;
    FlowPoint from;              // earlier endpoint
    FlowPoint to;                // later endpoint
    Face entry_face = Face::none;// none: the segment starts at the anchor time
    // Multiplicative factor picked up entering this segment through its face
    // (1 for anchor-time entries and plain traces).
    double boundary_factor = 1.0;
    double loss_integral = 0.0;
    double dhdy_integral = 0.0;
};

struct CharChain {
    ComponentId terminal;
    FlowPoint query;
    bool zero = false;        // ended on a zero inflow condition
    ComponentId anchor;       // datum component reached when !zero
    double anchor_x = 0.0;
    double anchor_y = 0.0;
    // Ordered terminal-first: segments[0] contains the query point.
    std::vector<ChainSegment> segments;

    // Product over segments of exp(-(loss + dhdy integrals)).
    double damping() const;
    // Product of the boundary factors.
    double boundary_product() const;
    // Density value: datum at the anchor times damping times boundary factors.
    double value(const InitialData& data) const;
    // Order-sensitive structural hash: anchor kind plus the (phase, cycle,
    // entry face) sequence. Two points with equal signatures are evaluated by
    // structurally identical formulas.
    std::uint64_t signature() const;
    std::string to_json() const;
};

// Traces the characteristic through (t,x,y) of the given component backward
// through the coupled boundary conditions until it reaches the anchor time or
// a zero inflow. Throws ChainOverflow past 2N hops.
CharChain backtrace(const CharContext& ctx, ComponentId comp, double t, double x,
                    double y);

// Density evaluation plus the chain signature (shared quadrature fast path).
struct EvalResult {
    double value = 0.0;
    std::uint64_t signature = 0;
};
EvalResult eval_density(const CharContext& ctx, const InitialData& data,
                        ComponentId comp, double t, double x, double y);

// ============================================================================
// Change-of-variables factors.
// ============================================================================

// One resolved characteristic segment between two faces of a phase square,
// with enough data to evaluate the analytic Jacobian of the face-to-face map.
struct FaceSegment {
    Phase phase = Phase::p1;      // p1 or p3
    int follicle = 0;
    Face from_face = Face::none;  // none: starts at the anchor time; otherwise
                                  // the space face crossed at t_from
    Face to_face = Face::none;    // none: ends at a query time inside; otherwise
                                  // the space face crossed at t_to
    double t_from = 0.0;
    double t_to = 0.0;
    double dhdy_integral = 0.0;   // H = integral of dh/dy over [t_from, t_to]
};

// |Jacobian determinant| of the face-coordinate map associated with the
// segment: exp(H) times the velocity across the entry face (when entered
// through a space face) divided by the velocity across the exit face (when
// exited through one). Age faces carry the age velocity, maturity faces the
// maturity velocity at the face height. The test-only tamper hook multiplies
// the result.
double segment_jacobian(const CharContext& ctx, const FaceSegment& seg);

} // namespace follisim
