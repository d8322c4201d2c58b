#pragma once

// Test-only reference implementations ("oracles") that produce expected
// values for the unit and acceptance suites. Everything here deliberately
// avoids the library code paths it is used to check: the closures are
// re-derived in 50-digit arithmetic straight from their printed definitions,
// flows are integrated with a naive fixed-step RK4 on callers' derivative
// callbacks, integrals use composite Simpson on dense grids, and the CSV
// reader is an independent minimal parser. Slow and simple on purpose.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "follisim/model.hpp"

namespace follisim::testing {

using mp50 = boost::multiprecision::cpp_bin_float_50;

// ----------------------------------------------------------------------------
// 50-digit closure oracles. Arguments are exact doubles; results are rounded
// to double at the very end, so the library value must agree to ~1 ulp of
// the function's conditioning.
// ----------------------------------------------------------------------------

double o_global_control(const ModelParams& p, double M);
double o_local_gain(const ModelParams& p, double Mf);
double o_local_control(const ModelParams& p, double Mf, double M);
double o_age_velocity(const ModelParams& p, int f, double u);
double o_saturation(const ModelParams& p, double u);
double o_maturity_velocity(const ModelParams& p, int f, double gamma, double u);
double o_gamma_plus(const ModelParams& p, double u);
double o_gamma_minus(const ModelParams& p, double u);
double o_loss_rate(const ModelParams& p, double gamma, double U);
double o_vel_hbar(const ModelParams& p, int f, double y, double u);
double o_vel_htilde(const ModelParams& p, int f, double y, double u);
double o_maturity_weight(const ModelParams& p, Phase phase, double y);

// d/dx of a closure oracle, computed in 50-digit arithmetic with a step far
// below double noise, so the result is exact to double precision.
double o_derivative(const std::function<mp50(mp50)>& f, double x);

// ----------------------------------------------------------------------------
// Exact masses and first maturity moments of the initial-data families on
// [0,1]^2 (line masses factorize; the bump and box are symmetric about their
// centers, the Gaussian moment has a closed form).
// ----------------------------------------------------------------------------

double o_polybump_line_mass(int p, double lo, double hi);
double o_gaussian_line_mass(double s0, double w);
// First moments over [0,1] of the line profiles.
double o_polybump_line_moment(int p, double lo, double hi);
double o_gaussian_line_moment(double s0, double w);

// ----------------------------------------------------------------------------
// Independent integrators.
// ----------------------------------------------------------------------------

// Fixed-step classic RK4 for y' = f(t, y).
double o_rk4(const std::function<double(double, double)>& f, double y0, double t0,
             double t1, int steps);

// Composite Simpson on [a, b].
double o_simpson(const std::function<double(double)>& f, double a, double b,
                 int panels);

// ----------------------------------------------------------------------------
// Minimal independent CSV reader (RFC-4180 quoting, LF or CRLF records).
// ----------------------------------------------------------------------------

std::vector<std::vector<std::string>> o_read_csv(std::istream& is);
std::vector<std::vector<std::string>> o_read_csv_file(const std::string& path);

// Entire file as bytes, for determinism comparisons.
std::string o_read_file(const std::string& path);

} // namespace follisim::testing
