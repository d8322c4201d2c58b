#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "follisim/fv_oracle.hpp"
#include "follisim/solution.hpp"

namespace follisim {

// One property check: a named pass/fail with a human-readable summary of the
// measured quantities (worst ratios, sample counts, tolerances).
struct PropertyResult {
    std::string name;
    bool pass = false;
    std::string details;
};

struct VerifyOptions {
    int contraction_pairs = 20;  // random trajectory pairs for the map ratio
    int jacobian_segments = 100; // finite-difference segments across all kinds
    int residual_sets = 10;      // random test-function sets for the weak form
    int bound_samples = 10000;   // space-time samples for the sup-norm bound
    int trace_samples = 40;      // interface points for the trace relations
    int linearity_samples = 20;  // evaluation points for open-loop linearity
    int fv_grid = 32;            // reference-solver grid for the audits
    int fv_steps = 25;           // audited steps
    std::uint64_t seed = 20260816;
    QuadratureOptions quad;
    FixedPointOptions fp;
};

// Individual checks. The ones taking a Solution expect a converged march of
// the same parameters/data. All of them are deterministic in the seed.
PropertyResult contraction_check(const ModelParams& p, const InitialData& data,
                                 const VerifyOptions& opts);
PropertyResult picard_check(const ModelParams& p, const InitialData& data,
                            const VerifyOptions& opts);
PropertyResult jacobian_check(const ModelParams& p, const VerifyOptions& opts);
PropertyResult weak_residual_check(const Solution& sol, const VerifyOptions& opts);
PropertyResult residual_inflation_check(const Solution& sol,
                                        const VerifyOptions& opts);
PropertyResult bounds_check(const Solution& sol, const VerifyOptions& opts);
PropertyResult trace_check(const Solution& sol, const VerifyOptions& opts);
PropertyResult char_mass_check(const ModelParams& p, const InitialData& data,
                               const VerifyOptions& opts);
PropertyResult fv_doubling_check(const ModelParams& p, const InitialData& data,
                                 const VerifyOptions& opts);
PropertyResult fv_closed_check(const ModelParams& p, const InitialData& data,
                               const VerifyOptions& opts);
PropertyResult phase2_check(const Solution& sol, const VerifyOptions& opts);
PropertyResult linearity_check(const ModelParams& p, const VerifyOptions& opts);

// Full property suite: marches the model once, then runs every check against
// that solve (plus the self-contained ones). Order is stable.
std::vector<PropertyResult> run_verification(const ModelParams& p,
                                             const InitialData& data,
                                             const VerifyOptions& opts);

} // namespace follisim
