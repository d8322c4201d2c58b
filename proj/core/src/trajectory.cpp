#include "follisim/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace follisim {

namespace {

double window_tolerance(double t_lo, double t_hi) {
    return 1e-12 * std::max({std::abs(t_lo), std::abs(t_hi), 1.0});
}

// Piecewise-linear evaluation over a shared grid with range checking.
double pw_linear(const std::vector<double>& times, const std::vector<double>& vals,
                 double t, std::size_t* hint) {
    const double tol = window_tolerance(times.front(), times.back());
    if (t < times.front() - tol || t > times.back() + tol) {
        std::ostringstream oss;
        oss << "time " << t << " outside trajectory range [" << times.front() << ", "
            << times.back() << "]";
        throw WindowExceeded(oss.str());
    }
    if (t <= times.front()) return vals.front();
    if (t >= times.back()) return vals.back();
    std::size_t i = hint ? *hint : 0;
    if (i >= times.size() - 1 || times[i] > t) i = 0;
    // Advance the hint; fall back to binary search when far away.
    if (times[i + 1] < t && i + 8 < times.size() && times[i + 8] < t) {
        i = static_cast<std::size_t>(
                std::upper_bound(times.begin(), times.end(), t) - times.begin()) -
            1;
    } else {
        while (times[i + 1] < t) ++i;
    }
    if (hint) *hint = i;
    const double w = (t - times[i]) / (times[i + 1] - times[i]);
    return vals[i] + w * (vals[i + 1] - vals[i]);
}

void check_grid(const std::vector<double>& times) {
    if (times.size() < 2) throw Error("trajectory needs at least two samples");
    for (std::size_t i = 1; i < times.size(); ++i) {
        if (!(times[i] > times[i - 1])) {
            throw Error("trajectory times must be strictly increasing");
        }
    }
    for (double t : times) {
        if (!std::isfinite(t)) throw Error("trajectory times must be finite");
    }
}

} // namespace

MaturityTrajectory::MaturityTrajectory(std::vector<double> times,
                                       std::vector<std::vector<double>> values)
    : times_(std::move(times)), values_(std::move(values)) {
    check_grid(times_);
    if (values_.empty()) throw Error("trajectory needs at least one follicle");
    for (const auto& v : values_) {
        if (v.size() != times_.size()) {
            throw Error("trajectory value rows must match the time grid");
        }
        for (double x : v) {
            if (!std::isfinite(x)) throw Error("trajectory values must be finite");
        }
    }
}

MaturityTrajectory MaturityTrajectory::constant(double t_lo, double t_hi, int samples,
                                                const std::vector<double>& values) {
    if (samples < 1) throw Error("trajectory needs at least one interval");
    if (!(t_hi > t_lo)) throw Error("trajectory window must have positive length");
    std::vector<double> times(static_cast<std::size_t>(samples) + 1);
    for (int j = 0; j <= samples; ++j) {
        times[j] = t_lo + (t_hi - t_lo) * static_cast<double>(j) / samples;
    }
    times.back() = t_hi;
    std::vector<std::vector<double>> vals;
    vals.reserve(values.size());
    for (double v : values) {
        vals.emplace_back(times.size(), v);
    }
    return MaturityTrajectory(std::move(times), std::move(vals));
}

double MaturityTrajectory::value(int f, double t) const {
    // No shared location hint: evaluation stays safe under concurrent use.
    return pw_linear(times_, values_[f], t, nullptr);
}

double MaturityTrajectory::total(double t) const {
    double sum = 0.0;
    for (int f = 0; f < follicles(); ++f) sum += value(f, t);
    return sum;
}

std::vector<double> MaturityTrajectory::at(double t) const {
    std::vector<double> out(values_.size());
    for (int f = 0; f < follicles(); ++f) out[f] = value(f, t);
    return out;
}

double MaturityTrajectory::max_abs() const {
    double m = 0.0;
    for (const auto& row : values_) {
        for (double v : row) m = std::max(m, std::abs(v));
    }
    return m;
}

double MaturityTrajectory::max_spacing() const {
    double m = 0.0;
    for (std::size_t i = 1; i < times_.size(); ++i) {
        m = std::max(m, times_[i] - times_[i - 1]);
    }
    return m;
}

void MaturityTrajectory::append(double t, const std::vector<double>& values) {
    if (!(t > times_.back())) throw Error("appended trajectory time must increase");
    if (values.size() != values_.size()) {
        throw Error("appended trajectory sample has wrong follicle count");
    }
    times_.push_back(t);
    for (std::size_t f = 0; f < values_.size(); ++f) values_[f].push_back(values[f]);
}

MaturityTrajectory MaturityTrajectory::joined_with(const MaturityTrajectory& tail) const {
    if (tail.follicles() != follicles()) {
        throw Error("cannot join trajectories with different follicle counts");
    }
    const double tol = window_tolerance(t_lo(), tail.t_hi());
    if (std::abs(tail.t_lo() - t_hi()) > tol) {
        throw Error("joined trajectory must start at the end of the current one");
    }
    MaturityTrajectory out = *this;
    for (std::size_t j = 1; j < tail.times_.size(); ++j) {
        std::vector<double> sample(tail.values_.size());
        for (std::size_t f = 0; f < tail.values_.size(); ++f) {
            sample[f] = tail.values_[f][j];
        }
        out.append(tail.times_[j], sample);
    }
    return out;
}

std::size_t MaturityTrajectory::locate(double t) const {
    return static_cast<std::size_t>(
               std::upper_bound(times_.begin(), times_.end(), t) - times_.begin()) -
           1;
}

// ----------------------------------------------------------------------------
// FrozenControls.
// ----------------------------------------------------------------------------

FrozenControls FrozenControls::constant(double t_lo, double t_hi, double U_value,
                                        const std::vector<double>& u_values) {
    FrozenControls fc;
    fc.times = {t_lo, t_hi};
    fc.U = {U_value, U_value};
    for (double v : u_values) fc.u.push_back({v, v});
    return fc;
}

double FrozenControls::U_at(double t) const {
    std::size_t hint = 0;
    return pw_linear(times, U, t, &hint);
}

double FrozenControls::u_at(int f, double t) const {
    std::size_t hint = 0;
    return pw_linear(times, u[f], t, &hint);
}

void FrozenControls::validate(int follicles) const {
    check_grid(times);
    if (U.size() != times.size()) {
        throw ConfigError("frozen controls: U row must match the time grid");
    }
    if (static_cast<int>(u.size()) != follicles) {
        throw ConfigError("frozen controls: need one u row per follicle");
    }
    for (const auto& row : u) {
        if (row.size() != times.size()) {
            throw ConfigError("frozen controls: u rows must match the time grid");
        }
    }
}

// ----------------------------------------------------------------------------
// ControlCurves.
// ----------------------------------------------------------------------------

ControlCurves::ControlCurves(const ModelParams& p, MaturityTrajectory trajectory,
                             Hooks hooks)
    : params_(p), trajectory_(std::move(trajectory)), hooks_(std::move(hooks)) {
    if (hooks_.frozen) hooks_.frozen->validate(p.follicles);
    if (trajectory_.follicles() != p.follicles) {
        throw Error("control curves: trajectory follicle count mismatch");
    }
}

double ControlCurves::U(double t) const {
    if (hooks_.frozen) return hooks_.frozen->U_at(t);
    return global_control(params_, trajectory_.total(t), t);
}

double ControlCurves::u(int f, double t) const {
    if (hooks_.frozen) return hooks_.frozen->u_at(f, t);
    return local_control(params_, trajectory_.value(f, t), trajectory_.total(t), t);
}

double ControlCurves::t_lo() const {
    return hooks_.frozen ? hooks_.frozen->times.front() : trajectory_.t_lo();
}

double ControlCurves::t_hi() const {
    return hooks_.frozen ? hooks_.frozen->times.back() : trajectory_.t_hi();
}

} // namespace follisim
