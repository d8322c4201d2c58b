#pragma once

#include <memory>
#include <vector>

#include "follisim/model.hpp"

namespace follisim {

// Piecewise-linear per-follicle maturity curves M_f on a shared strictly
// increasing time grid. This is both the unknown of the fixed-point iteration
// and the record a converged solve hands to the solution evaluator.
class MaturityTrajectory {
public:
    MaturityTrajectory(std::vector<double> times, std::vector<std::vector<double>> values);

    // Constant trajectory M_f(t) = values[f] sampled on `samples` + 1 uniform
    // points of [t_lo, t_hi].
    static MaturityTrajectory constant(double t_lo, double t_hi, int samples,
                                       const std::vector<double>& values);

    int follicles() const { return static_cast<int>(values_.size()); }
    double t_lo() const { return times_.front(); }
    double t_hi() const { return times_.back(); }
    const std::vector<double>& times() const { return times_; }
    const std::vector<double>& samples(int f) const { return values_[f]; }

    // Piecewise-linear evaluation; throws WindowExceeded outside the covered
    // range (beyond a 1e-12 tolerance).
    double value(int f, double t) const;
    // Sum over follicles.
    double total(double t) const;
    std::vector<double> at(double t) const;

    double max_abs() const;
    double max_spacing() const;

    // Extends the trajectory by samples at strictly increasing times.
    void append(double t, const std::vector<double>& values);

    // Concatenation of `this` with `tail`; `tail` must start where `this`
    // ends (same joint time and values within tolerance).
    MaturityTrajectory joined_with(const MaturityTrajectory& tail) const;

private:
    std::size_t locate(double t) const;

    std::vector<double> times_;
    std::vector<std::vector<double>> values_; // [follicle][sample]
};

// Frozen (open-loop) control curves: when installed via Hooks, the solver and
// the finite-volume oracle read controls from these piecewise-linear tables
// instead of computing them from the maturity feedback.
struct FrozenControls {
    std::vector<double> times;
    std::vector<double> U;              // global control per time
    std::vector<std::vector<double>> u; // [follicle][time]

    static FrozenControls constant(double t_lo, double t_hi, double U_value,
                                   const std::vector<double>& u_values);

    double U_at(double t) const;
    double u_at(int f, double t) const;
    void validate(int follicles) const;
};

// Test and experiment hooks threaded through every layer.
struct Hooks {
    bool disable_mitosis = false; // cycle-transition factor 2 -> 1
    bool zero_loss = false;       // loss rate treated as identically 0
    bool closed_domain = false;   // finite volume only: zero the system-exit outfluxes
    double jacobian_tamper = 1.0; // test-only multiplier on analytic Jacobian factors
    std::shared_ptr<const FrozenControls> frozen; // open-loop controls when set
};

// Exact control evaluation for a run: closed-loop from a maturity trajectory
// through the model closures, or open-loop from frozen tables. Every
// evaluation eagerly validates the structural sign hypotheses.
class ControlCurves {
public:
    ControlCurves(const ModelParams& p, MaturityTrajectory trajectory, Hooks hooks);

    double U(double t) const;
    double u(int f, double t) const;

    double t_lo() const;
    double t_hi() const;
    const ModelParams& params() const { return params_; }
    const Hooks& hooks() const { return hooks_; }
    const MaturityTrajectory& trajectory() const { return trajectory_; }

private:
    ModelParams params_;
    MaturityTrajectory trajectory_;
    Hooks hooks_;
};

} // namespace follisim
