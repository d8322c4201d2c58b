#include "follisim/fv_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "follisim/errors.hpp"

namespace follisim {

namespace {

// Measure scale of one phase square: the Jacobian of the map from unit
// coordinates back to the original age-maturity rectangle. Kept local so the
// reference solver shares nothing with the characteristic path beyond the
// model closures themselves.
double measure_scale(const ModelParams& p, Phase phase) {
    switch (phase) {
        case Phase::p1: return p.a1 * p.gamma_s;
        case Phase::p2: return (p.a2 - p.a1) * p.gamma_s;
        case Phase::p3: return p.a2 * p.gamma0();
    }
    return 0.0;
}

} // namespace

FvSolver::FvSolver(const ModelParams& p, const InitialData& data, FvOptions opts)
    : params_(p), opts_(std::move(opts)) {
    params_.validate();
    if (opts_.nx < 2 || opts_.ny < 2) {
        throw ConfigError("finite-volume grid needs at least 2 cells per axis");
    }
    if (!(opts_.cfl > 0.0) || opts_.cfl > 1.0) {
        throw ConfigError("CFL fraction must lie in (0, 1]");
    }
    if (data.follicles() != p.follicles || data.cycles() != p.cycles) {
        throw ConfigError("initial data does not match the model dimensions");
    }
    if (opts_.hooks.frozen) opts_.hooks.frozen->validate(p.follicles);
    hx_ = 1.0 / opts_.nx;
    hy_ = 1.0 / opts_.ny;
    cells_.assign(component_count(p),
                  std::vector<double>(static_cast<std::size_t>(opts_.nx) * opts_.ny));
    for (int ci = 0; ci < component_count(p); ++ci) {
        const ComponentId id = component_from_index(p, ci);
        for (int j = 0; j < opts_.ny; ++j) {
            const double y = (j + 0.5) * hy_;
            for (int i = 0; i < opts_.nx; ++i) {
                const double x = (i + 0.5) * hx_;
                cells_[ci][static_cast<std::size_t>(j) * opts_.nx + i] =
                    data.eval(id, x, y);
            }
        }
    }
}

double FvSolver::cell(ComponentId id, int i, int j) const {
    if (i < 0 || i >= opts_.nx || j < 0 || j >= opts_.ny) {
        throw ConfigError("finite-volume cell index out of range");
    }
    return cells_[component_index(params_, id)]
                 [static_cast<std::size_t>(j) * opts_.nx + i];
}

const std::vector<double>& FvSolver::cells(ComponentId id) const {
    return cells_[component_index(params_, id)];
}

std::vector<double> FvSolver::maturities() const {
    const ModelParams& p = params_;
    std::vector<double> M(p.follicles, 0.0);
    const double cell_area = hx_ * hy_;
    for (int ci = 0; ci < component_count(p); ++ci) {
        const ComponentId id = component_from_index(p, ci);
        const auto& c = cells_[ci];
        double acc = 0.0;
        for (int j = 0; j < opts_.ny; ++j) {
            const double w = maturity_weight(p, id.phase, (j + 0.5) * hy_);
            double row = 0.0;
            for (int i = 0; i < opts_.nx; ++i) {
                row += c[static_cast<std::size_t>(j) * opts_.nx + i];
            }
            acc += w * row;
        }
        M[id.follicle] += acc * cell_area;
    }
    return M;
}

double FvSolver::component_mass(ComponentId id) const {
    const auto& c = cells_[component_index(params_, id)];
    double acc = 0.0;
    for (double v : c) acc += v;
    return measure_scale(params_, id.phase) * acc * hx_ * hy_;
}

double FvSolver::total_mass() const {
    double acc = 0.0;
    for (int ci = 0; ci < component_count(params_); ++ci) {
        acc += component_mass(component_from_index(params_, ci));
    }
    return acc;
}

FvSolver::StepControls FvSolver::controls_at(double t,
                                             const std::vector<double>& M) const {
    const ModelParams& p = params_;
    StepControls c;
    c.u.resize(p.follicles);
    if (opts_.hooks.frozen) {
        c.U = opts_.hooks.frozen->U_at(t);
        for (int f = 0; f < p.follicles; ++f) c.u[f] = opts_.hooks.frozen->u_at(f, t);
    } else {
        double total = 0.0;
        for (double v : M) total += v;
        c.U = global_control(p, total, t);
        for (int f = 0; f < p.follicles; ++f) {
            c.u[f] = local_control(p, M[f], total, t);
        }
    }
    for (int f = 0; f < p.follicles; ++f) check_velocity_signs(p, f, c.u[f]);
    return c;
}

double FvSolver::stability_limit() const {
    return [this] {
        const StepControls c = controls_at(t_, maturities());
        const ModelParams& p = params_;
        double vx = 0.0, vy = 0.0;
        for (int f = 0; f < p.follicles; ++f) {
            vx = std::max({vx, vel_gbar(p, f, c.u[f]), vel_ghat(p, f),
                           vel_gtilde(p, f)});
            for (int j = 0; j <= opts_.ny; ++j) {
                const double y = j * hy_;
                vy = std::max({vy, std::abs(vel_hbar(p, f, y, c.u[f])),
                               std::abs(vel_htilde(p, f, y, c.u[f]))});
            }
        }
        if (!(vx > 0.0) || !std::isfinite(vx) || !std::isfinite(vy)) {
            throw CFLViolation("degenerate transport velocities; no stable step");
        }
        return std::min(hx_ / vx, vy > 0.0 ? hy_ / vy
                                           : std::numeric_limits<double>::infinity());
    }();
}

double FvSolver::step(double dt_max) {
    const ModelParams& p = params_;
    const int nx = opts_.nx, ny = opts_.ny;
    const auto at = [nx](int i, int j) {
        return static_cast<std::size_t>(j) * nx + i;
    };

    const StepControls c = controls_at(t_, maturities());
    double vx = 0.0, vy = 0.0;
    for (int f = 0; f < p.follicles; ++f) {
        vx = std::max({vx, vel_gbar(p, f, c.u[f]), vel_ghat(p, f), vel_gtilde(p, f)});
        for (int j = 0; j <= ny; ++j) {
            const double y = j * hy_;
            vy = std::max({vy, std::abs(vel_hbar(p, f, y, c.u[f])),
                           std::abs(vel_htilde(p, f, y, c.u[f]))});
        }
    }
    if (!(vx > 0.0) || !std::isfinite(vx) || !std::isfinite(vy)) {
        throw CFLViolation("degenerate transport velocities; no stable step");
    }
    const double limit = std::min(
        hx_ / vx, vy > 0.0 ? hy_ / vy : std::numeric_limits<double>::infinity());
    double dt = opts_.fixed_dt > 0.0 ? opts_.fixed_dt : opts_.cfl * limit;
    dt = std::min(dt, dt_max);
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw CFLViolation("nonpositive step requested");
    }
    if (dt > limit * (1.0 + 1e-12)) {
        std::ostringstream oss;
        oss << "step " << dt << " exceeds the stability limit " << limit;
        throw CFLViolation(oss.str());
    }

    const double mito = opts_.hooks.disable_mitosis ? 1.0 : 2.0;
    const int N = p.cycles;

    // ---- x sweep: donor-cell upwind, all fluxes from the pre-sweep state. ----
    {
        const std::vector<std::vector<double>> old = cells_;
        for (int f = 0; f < p.follicles; ++f) {
            const double gbar = vel_gbar(p, f, c.u[f]);
            const double ghat = vel_ghat(p, f);
            const double gtil = vel_gtilde(p, f);
            const double s1 = measure_scale(p, Phase::p1);
            const double s2 = measure_scale(p, Phase::p2);
            const double s3 = measure_scale(p, Phase::p3);
            for (int k = 1; k <= N; ++k) {
                const int i1 = component_index(p, {f, k, Phase::p1});
                const int i2 = component_index(p, {f, k, Phase::p2});
                const int i3 = component_index(p, {f, k, Phase::p3});
                const int i2prev =
                    k > 1 ? component_index(p, {f, k - 1, Phase::p2}) : -1;
                const int i3prev =
                    k > 1 ? component_index(p, {f, k - 1, Phase::p3}) : -1;
                double mito_base = 0.0, p2N_out = 0.0, p3N_out = 0.0;
                for (int j = 0; j < ny; ++j) {
                    // Phase 1: back-face influx d * (tau_g / a1) * phi2_{k-1}(1, y).
                    const double in1 =
                        k > 1 ? mito * (p.tau_g[f] / p.a1) * old[i2prev][at(nx - 1, j)]
                              : 0.0;
                    // Phase 2: back-face influx (a1 / (a2 - a1)) * gbar * phi1_k(1, y).
                    const double in2 =
                        p.a1 / (p.a2 - p.a1) * gbar * old[i1][at(nx - 1, j)];
                    // Phase 3: back-face influx gtilde * phi3_{k-1}(1, y).
                    const double in3 =
                        k > 1 ? gtil * old[i3prev][at(nx - 1, j)] : 0.0;

                    auto sweep = [&](int ci, double a, double influx,
                                     bool zero_exit) {
                        double upstream = influx; // flux across the left face
                        for (int i = 0; i < nx; ++i) {
                            const double v = old[ci][at(i, j)];
                            double out = a * v;
                            if (zero_exit && i == nx - 1) out = 0.0;
                            cells_[ci][at(i, j)] += dt / hx_ * (upstream - out);
                            upstream = out;
                        }
                    };
                    const bool closed = opts_.hooks.closed_domain;
                    sweep(i1, gbar, in1, false);
                    sweep(i2, ghat, in2, k == N && closed);
                    sweep(i3, gtil, in3, k == N && closed);

                    const double phi2_front = old[i2][at(nx - 1, j)];
                    if (k < N) {
                        mito_base += phi2_front;
                    } else if (!closed) {
                        p2N_out += ghat * phi2_front;
                        p3N_out += gtil * old[i3][at(nx - 1, j)];
                    }
                }
                if (k < N) {
                    const double base = s1 * (p.tau_g[f] / p.a1) * mito_base *
                                        hy_ * dt;
                    audit_.mitosis_in += mito * base;
                    audit_.mitosis_out += s2 * ghat * mito_base * hy_ * dt;
                } else {
                    audit_.system_out += (s2 * p2N_out + s3 * p3N_out) * hy_ * dt;
                }
            }
        }
    }

    // ---- y sweep: upwind by face-velocity sign, from the post-x state. -------
    {
        const std::vector<std::vector<double>> old = cells_;
        const double s1 = measure_scale(p, Phase::p1);
        const double s3 = measure_scale(p, Phase::p3);
        const double ratio = p.a1 / p.a2; // phase-1 top lands on [0, ratio]
        for (int f = 0; f < p.follicles; ++f) {
            std::vector<double> v1(ny + 1), v3(ny + 1);
            for (int j = 0; j <= ny; ++j) {
                v1[j] = vel_hbar(p, f, j * hy_, c.u[f]);
                v3[j] = vel_htilde(p, f, j * hy_, c.u[f]);
            }
            for (int k = 1; k <= N; ++k) {
                const int i1 = component_index(p, {f, k, Phase::p1});
                const int i3 = component_index(p, {f, k, Phase::p3});

                // Phase 1: velocity positive throughout; zero bottom inflow,
                // top outflux feeds the same cycle's phase-3 bottom row.
                std::vector<double> top_out(nx);
                for (int i = 0; i < nx; ++i) {
                    double below = 0.0; // flux across the bottom face
                    for (int j = 0; j < ny; ++j) {
                        const double out = v1[j + 1] * old[i1][at(i, j)];
                        cells_[i1][at(i, j)] += dt / hy_ * (below - out);
                        below = out;
                    }
                    top_out[i] = below; // flux across y = 1
                }

                // Phase 3: sign-aware interior upwinding; top face is inflow
                // (zero) under the sign hypotheses.
                for (int i = 0; i < nx; ++i) {
                    double below = 0.0; // bottom influx arrives via the remap
                    for (int j = 0; j < ny; ++j) {
                        double out;
                        if (j + 1 == ny) {
                            out = v3[ny] > 0.0 ? v3[ny] * old[i3][at(i, j)] : 0.0;
                            if (out != 0.0) audit_.system_out += s3 * out * hx_ * dt;
                        } else {
                            const double v = v3[j + 1];
                            out = v > 0.0 ? v * old[i3][at(i, j)]
                                          : v * old[i3][at(i, j + 1)];
                        }
                        cells_[i3][at(i, j)] += dt / hy_ * (below - out);
                        below = out;
                    }
                }

                // Conservative remap of the phase-1 top outflux onto the
                // phase-3 bottom row: column [i, i+1] * hx lands on
                // [ratio * i, ratio * (i+1)] * hx.
                for (int i = 0; i < nx; ++i) {
                    const double mass = s1 * top_out[i] * hx_ * dt;
                    if (mass == 0.0) continue;
                    const double xlo = ratio * i * hx_;
                    const double xhi = ratio * (i + 1) * hx_;
                    const int jlo = std::min(static_cast<int>(xlo / hx_), nx - 1);
                    const int jhi = std::min(static_cast<int>(xhi / hx_), nx - 1);
                    for (int ii = jlo; ii <= jhi; ++ii) {
                        const double lo = std::max(xlo, ii * hx_);
                        const double hi = std::min(xhi, (ii + 1) * hx_);
                        if (hi <= lo) continue;
                        const double w = (hi - lo) / (xhi - xlo);
                        cells_[i3][at(ii, 0)] += mass * w / (s3 * hx_ * hy_);
                    }
                }
            }
        }
    }

    // ---- loss: exact exponential decay at the cell-center rate. --------------
    if (!opts_.hooks.zero_loss) {
        for (int f = 0; f < p.follicles; ++f) {
            const double U = c.U;
            for (int k = 1; k <= N; ++k) {
                for (Phase phase : {Phase::p1, Phase::p3}) {
                    const int ci = component_index(p, {f, k, phase});
                    const double scale = measure_scale(p, phase);
                    for (int j = 0; j < ny; ++j) {
                        const double y = (j + 0.5) * hy_;
                        const double lam = phase == Phase::p1
                                               ? loss_lbar(p, y, U)
                                               : loss_ltilde(p, y, U);
                        if (lam == 0.0) continue;
                        const double factor = std::exp(-lam * dt);
                        for (int i = 0; i < nx; ++i) {
                            double& v = cells_[ci][at(i, j)];
                            audit_.loss += scale * v * (1.0 - factor) * hx_ * hy_;
                            v *= factor;
                        }
                    }
                }
            }
        }
    }

    for (const auto& comp : cells_) {
        for (double v : comp) {
            if (!std::isfinite(v)) {
                throw NonfiniteState("finite-volume state became nonfinite at t = " +
                                     std::to_string(t_ + dt));
            }
        }
    }

    t_ += dt;
    ++audit_.steps;
    return dt;
}

void FvSolver::advance_to(double t_end) {
    const double eps = 1e-12 * std::max(1.0, std::abs(t_end));
    if (t_end < t_ - eps) {
        throw ConfigError("finite-volume solver cannot march backward");
    }
    while (t_ < t_end - eps) step(t_end - t_);
    t_ = t_end;
}

FvRunResult fv_run(const ModelParams& p, const InitialData& data, double horizon,
                   const FvOptions& opts, const std::vector<double>& record_times) {
    if (!(horizon > 0.0)) throw ConfigError("finite-volume horizon must be positive");
    std::vector<double> times{0.0};
    for (double t : record_times) {
        if (t < 0.0 || t > horizon * (1.0 + 1e-12)) {
            throw ConfigError("record time outside the run horizon");
        }
        times.push_back(std::min(t, horizon));
    }
    times.push_back(horizon);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end(),
                            [&](double a, double b) {
                                return std::abs(a - b) <= 1e-12 * std::max(1.0, horizon);
                            }),
                times.end());

    FvSolver solver(p, data, opts);
    FvRunResult out;
    for (double t : times) {
        solver.advance_to(t);
        out.records.push_back({solver.t(), solver.maturities()});
    }
    out.audit = solver.audit();
    return out;
}

} // namespace follisim
