#pragma once

#include <array>
#include <functional>
#include <vector>

#include "follisim/characteristics.hpp"

namespace follisim {

// 7-point Gauss-Legendre rule mapped to [0, 1]; weights sum to 1.
const std::array<double, 7>& gl7_nodes();
const std::array<double, 7>& gl7_weights();

struct QuadratureOptions {
    double rel_tol = 1e-9;   // adaptive rule: acceptance threshold relative to the value
    double abs_tol = 1e-14;  // adaptive rule: absolute floor for near-zero integrals
    int max_depth = 10;      // adaptive rule: bisection depth cap per interval
    double max_panel = 0.25; // composite rule: panel width cap on unit spans
};

// Adaptive Gauss-Legendre integration of f over [a, b] (returns 0 when b <= a).
double adaptive_gl7(const std::function<double(double)>& f, double a, double b,
                    const QuadratureOptions& opts = {});

// Non-adaptive composite Gauss-Legendre rule: [a, b] is split at the interior
// breakpoints (unsorted, out-of-range entries ignored) and each piece into
// panels no wider than max_panel, with the 7-point rule per panel. Exact for
// integrands that are polynomials of degree <= 13 between breakpoints, and
// immune to the refinement noise that defeats nested adaptive rules.
double composite_gl7(const std::function<double(double)>& f, double a, double b,
                     std::vector<double> breaks, double max_panel);

// Measure scale of one normalized phase square: the Jacobian of the map from
// unit coordinates back to the original age-maturity rectangle.
double phase_area_scale(const ModelParams& p, Phase phase);

// Vertical lines across which the traced density of `comp` at time t is not
// smooth: the inflow front plus the age-shift images of the datum's support
// edges. Sorted, clipped to (0, 1).
std::vector<double> density_x_breaks(const CharContext& ctx, const InitialData& data,
                                     ComponentId comp, double t);

// Horizontal lines across which the traced density is not smooth on columns
// right of the front (where the backward trace stays in phase): the maturity
// images of the datum's support edges. Sorted, clipped to (0, 1). The
// separatrix heights are column-dependent and are not included here.
std::vector<double> density_y_breaks(const CharContext& ctx, const InitialData& data,
                                     ComponentId comp, double t);

// Integral over the unit square of the phase density at time t against the
// weight w(x, y), computed by backward tracing with the region decomposition:
// composite panels aligned to the front, the separatrices, and the datum
// support-edge images, so every panel sees an analytic integrand. Components
// with an identically-zero datum integrate only their boundary-fed regions.
double integrate_component(const CharContext& ctx, const InitialData& data,
                           ComponentId comp, double t,
                           const std::function<double(double, double)>& weight,
                           const QuadratureOptions& opts = {});

// First maturity moment of follicle f at time t in original variables,
// summed over that follicle's phase squares and cycles.
double follicle_maturity(const CharContext& ctx, const InitialData& data, int f,
                         double t, const QuadratureOptions& opts = {});

// Maturity moments of every follicle at time t.
std::vector<double> maturities(const CharContext& ctx, const InitialData& data,
                               double t, const QuadratureOptions& opts = {});

// Mass of one component at time t in original variables (zero-order moment
// with the phase measure scale), for conservation audits.
double component_mass(const CharContext& ctx, const InitialData& data,
                      ComponentId comp, double t,
                      const QuadratureOptions& opts = {});

} // namespace follisim
