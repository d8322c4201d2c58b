#include "follisim/fixedpoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "follisim/parallel.hpp"

namespace follisim {

// ----------------------------------------------------------------------------
// Constants.
// ----------------------------------------------------------------------------

void lipschitz_coefficients(const ModelParams& p, const InitialData& data, double K1,
                            double K2, double t, std::vector<double>& C1,
                            std::vector<double>& C2) {
    if (!(t >= 0.0) || t * K1 >= 1.0) {
        throw ConfigError("Lipschitz coefficients need 0 <= t < 1/K1");
    }
    if (!(K2 > 0.0)) throw NonpositiveK2("velocity lower bound must be positive");
    const double gm2 = p.gamma_m * p.gamma_m;
    const double den = 1.0 - t * K1;

    const double A1 = p.a1 * gm2 *
                      (2.0 * K1 * K1 - t * K1 * K1 + 3.0 * K1 + t * K1 * K1 * K2 +
                       9.0 * K1 * K2) /
                      (K2 * den);
    const double A2 = 2.0 * (p.a2 - p.a1) * gm2 *
                      (K1 * K1 + 2.0 * t * K1 * K1 * K2 + 4.0 * K1 * K2) / (K2 * den);
    const double A3 = p.a2 * gm2 * (2.0 * K1 + 2.0 * t * K1 * K1) / den;

    const double B1 = p.a1 * gm2 *
                      (2.0 * K1 * K1 + 2.0 * K1 + 12.0 * K1 * K2 -
                       2.0 * t * K1 * K1 * K2) /
                      (K2 * den);
    const double B2 =
        2.0 * (p.a2 - p.a1) * gm2 * (K1 * K1 + 6.0 * K1 * K2) / (K2 * den);
    const double B3 = 4.0 * p.a2 * gm2 * K1 / den;

    C1.assign(p.follicles, 0.0);
    C2.assign(p.follicles, 0.0);
    for (int f = 0; f < p.follicles; ++f) {
        double s_bar = 0.0, s_hat = 0.0, s_til = 0.0;
        for (int k = 1; k <= p.cycles; ++k) {
            s_bar += data.sup_norm({f, k, Phase::p1});
            if (k >= 2) s_hat += data.sup_norm({f, k, Phase::p2});
            s_til += data.sup_norm({f, k, Phase::p3});
        }
        C1[f] = A1 * s_bar + A2 * s_hat + A3 * s_til;
        C2[f] = B1 * s_bar + B2 * s_hat + B3 * s_til;
    }
}

ContractionConstants compute_constants(const ModelParams& p, const InitialData& data,
                                       const ConstantsOptions& opts) {
    p.validate();
    if (opts.grid < 2) throw ConfigError("constants scan needs at least 2 samples per axis");

    ContractionConstants cc;
    cc.T = p.horizon;

    // ---- K: a-priori maturity bound from the initial masses. ----------------
    const double gm2 = p.gamma_m * p.gamma_m;
    double mass_sum = 0.0;
    for (int f = 0; f < p.follicles; ++f) {
        for (int k = 1; k <= p.cycles; ++k) {
            mass_sum += p.a1 * data.l1_norm({f, k, Phase::p1}) +
                        (p.a2 - p.a1) * data.l1_norm({f, k, Phase::p2}) +
                        p.a2 * data.l1_norm({f, k, Phase::p3});
        }
    }
    cc.K = std::ldexp(1.0, p.cycles) * gm2 * mass_sum; // 2^N * gamma_m^2 * sum
    const double K = cc.K;

    // ---- K1 / K2: scans over the compact control boxes. ---------------------
    // The closures are autonomous, so the time axis of each box collapses.
    const int g = opts.grid;
    const auto axis = [g](double lo, double hi, int i) {
        return lo + (hi - lo) * (static_cast<double>(i) / (g - 1));
    };

    double k1 = 0.0;
    double inf_gbar = std::numeric_limits<double>::infinity();
    double inf_hbar = std::numeric_limits<double>::infinity();

    for (int f = 0; f < p.follicles; ++f) {
        k1 = std::max(k1, vel_ghat(p, f));

        // || gbar_f(u_f) ||_{C^1} over (M_f, M) in [0,K]^2.
        {
            double sup_v = 0.0, sup_dmf = 0.0, sup_dm = 0.0;
            for (int i = 0; i < g; ++i) {
                const double Mf = axis(0.0, K, i);
                for (int j = 0; j < g; ++j) {
                    const double M = axis(0.0, K, j);
                    const double u = local_control(p, Mf, M, 0.0);
                    const double v = vel_gbar(p, f, u);
                    const double du = vel_gbar_du(p, f);
                    sup_v = std::max(sup_v, std::abs(v));
                    sup_dmf = std::max(sup_dmf,
                                       std::abs(du * local_control_dMf(p, Mf, M, 0.0)));
                    sup_dm = std::max(sup_dm,
                                      std::abs(du * local_control_dM(p, Mf, M, 0.0)));
                    inf_gbar = std::min(inf_gbar, v);
                }
            }
            k1 = std::max(k1, sup_v + sup_dmf + sup_dm);
        }

        // || hbar_f ||_{C^1} and || htilde_f ||_{C^1} over (y, M_f, M).
        for (int which = 0; which < 2; ++which) {
            const bool bar = which == 0;
            double sup_v = 0.0, sup_dy = 0.0, sup_dmf = 0.0, sup_dm = 0.0;
            const double gref = bar ? p.gamma_s : p.gamma0();
            for (int iy = 0; iy < g; ++iy) {
                const double y = axis(0.0, 1.0, iy);
                const double gamma = bar ? p.gamma_s * y : p.gamma0() * y + p.gamma_s;
                for (int i = 0; i < g; ++i) {
                    const double Mf = axis(0.0, K, i);
                    for (int j = 0; j < g; ++j) {
                        const double M = axis(0.0, K, j);
                        const double u = local_control(p, Mf, M, 0.0);
                        const double v = bar ? vel_hbar(p, f, y, u)
                                             : vel_htilde(p, f, y, u);
                        const double dy = bar ? vel_hbar_dy(p, f, y, u)
                                              : vel_htilde_dy(p, f, y, u);
                        const double du = maturity_velocity_du(p, f, gamma, u) / gref;
                        sup_v = std::max(sup_v, std::abs(v));
                        sup_dy = std::max(sup_dy, std::abs(dy));
                        sup_dmf = std::max(
                            sup_dmf, std::abs(du * local_control_dMf(p, Mf, M, 0.0)));
                        sup_dm = std::max(
                            sup_dm, std::abs(du * local_control_dM(p, Mf, M, 0.0)));
                        if (bar) inf_hbar = std::min(inf_hbar, v);
                    }
                }
            }
            k1 = std::max(k1, sup_v + sup_dy + sup_dmf + sup_dm);
        }
    }

    // || lbar ||_{C^1} and || ltilde ||_{C^1} over (y, M); follicle independent.
    for (int which = 0; which < 2; ++which) {
        const bool bar = which == 0;
        double sup_v = 0.0, sup_dy = 0.0, sup_dm = 0.0;
        for (int iy = 0; iy < g; ++iy) {
            const double y = axis(0.0, 1.0, iy);
            const double gamma = bar ? p.gamma_s * y : p.gamma0() * y + p.gamma_s;
            const double gref = bar ? p.gamma_s : p.gamma0();
            for (int j = 0; j < g; ++j) {
                const double M = axis(0.0, K, j);
                const double U = global_control(p, M, 0.0);
                const double v = bar ? loss_lbar(p, y, U) : loss_ltilde(p, y, U);
                sup_v = std::max(sup_v, std::abs(v));
                sup_dy = std::max(sup_dy,
                                  std::abs(loss_rate_dgamma(p, gamma, U) * gref));
                sup_dm = std::max(sup_dm, std::abs(loss_rate_dU(p, gamma, U) *
                                                   global_control_dM(p, M, 0.0)));
            }
        }
        k1 = std::max(k1, sup_v + sup_dy + sup_dm);
    }

    cc.K1 = opts.safety_upper * k1;
    const double k2_raw = std::min(inf_gbar, inf_hbar);
    cc.K2 = opts.safety_lower * k2_raw;
    if (!(cc.K2 > 0.0)) {
        std::ostringstream oss;
        oss << "transport velocity lower bound is not positive (scan infimum "
            << k2_raw << ")";
        throw NonpositiveK2(oss.str());
    }

    // ---- delta: halve until the contraction condition certifies. ------------
    double delta = 0.9 * std::min(1.0 / (2.0 * cc.K1), cc.T);
    const int n = p.follicles;
    for (int tries = 0;; ++tries) {
        if (tries > 2000 || !(delta > 0.0)) {
            throw ConfigError("window length underflowed while certifying contraction");
        }
        lipschitz_coefficients(p, data, cc.K1, cc.K2, delta, cc.C1, cc.C2);
        double worst = 0.0;
        for (int f = 0; f < n; ++f) worst = std::max(worst, cc.C1[f] + cc.C2[f]);
        if (n * delta * worst <= 0.5) break;
        delta *= 0.5;
    }
    cc.delta = delta;
    return cc;
}

// ----------------------------------------------------------------------------
// Solution operator and the Picard march.
// ----------------------------------------------------------------------------

std::vector<double> data_maturities(const ModelParams& p, const InitialData& data,
                                    const QuadratureOptions& opts) {
    std::vector<double> out(p.follicles, 0.0);
    for (int f = 0; f < p.follicles; ++f) {
        double total = 0.0;
        for (int k = 1; k <= p.cycles; ++k) {
            for (Phase phase : {Phase::p1, Phase::p2, Phase::p3}) {
                const ComponentId comp{f, k, phase};
                const ComponentField& field = data.field(comp);
                if (field.is_zero()) continue;
                total += composite_gl7(
                    [&](double x) {
                        return composite_gl7(
                            [&](double y) {
                                return field.eval(x, y) * maturity_weight(p, phase, y);
                            },
                            0.0, 1.0, field.y_breaks(), opts.max_panel);
                    },
                    0.0, 1.0, field.x_breaks(), opts.max_panel);
            }
        }
        out[f] = total;
    }
    return out;
}

std::vector<std::vector<double>> apply_G(const ModelParams& p, const InitialData& data,
                                         const MaturityTrajectory& traj,
                                         double anchor_time,
                                         const std::vector<double>& times,
                                         const FixedPointOptions& opts) {
    const double tol = 1e-12 * std::max(1.0, std::abs(traj.t_hi()));
    if (anchor_time < traj.t_lo() - tol) {
        throw WindowExceeded("anchor time precedes the candidate trajectory");
    }
    for (double t : times) {
        if (t < anchor_time - tol || t > traj.t_hi() + tol) {
            throw WindowExceeded("evaluation time outside the candidate trajectory");
        }
    }
    ControlCurves curves(p, traj, opts.hooks);
    CharContext ctx(p, std::move(curves), anchor_time, traj.t_hi(),
                    std::max(traj.max_spacing(), 1e-300));
    std::vector<std::vector<double>> out(p.follicles,
                                         std::vector<double>(times.size(), 0.0));
    // The maturity integrals are pure backtraces against immutable state, so
    // they evaluate in parallel with per-slot outputs.
    parallel_for(static_cast<std::size_t>(p.follicles) * times.size(),
                 [&](std::size_t job) {
                     const int f = static_cast<int>(job / times.size());
                     const std::size_t i = job % times.size();
                     out[f][i] = follicle_maturity(
                         ctx, data, f,
                         std::clamp(times[i], anchor_time, traj.t_hi()), opts.quad);
                 });
    return out;
}

namespace {

// Snapshot of the current solution on a uniform grid, used to re-anchor the
// datum so backward traces stay short on long runs.
InitialData resample_snapshot(const ModelParams& p, const CharContext& ctx,
                              const InitialData& datum, double t, int m) {
    InitialData snap(p);
    const int nodes = m + 1;
    for (int f = 0; f < p.follicles; ++f) {
        for (int k = 1; k <= p.cycles; ++k) {
            for (Phase phase : {Phase::p1, Phase::p2, Phase::p3}) {
                const ComponentId comp{f, k, phase};
                std::vector<double> values(static_cast<std::size_t>(nodes) * nodes);
                parallel_for(static_cast<std::size_t>(nodes) * nodes,
                             [&](std::size_t idx) {
                                 const int j = static_cast<int>(idx) / nodes;
                                 const int i = static_cast<int>(idx) % nodes;
                                 const double y = static_cast<double>(j) / m;
                                 const double x = static_cast<double>(i) / m;
                                 values[idx] =
                                     eval_density(ctx, datum, comp, t, x, y).value;
                             });
                const bool any =
                    std::any_of(values.begin(), values.end(),
                                [](double v) { return v != 0.0; });
                snap.set(comp, any ? make_grid_field(m, std::move(values))
                                   : make_zero_field());
            }
        }
    }
    return snap;
}

} // namespace

MarchResult march(const ModelParams& p, const InitialData& data,
                  const FixedPointOptions& opts) {
    p.validate();
    if (!(opts.window_safety > 0.0) || opts.window_safety > 1.0) {
        throw ConfigError("window safety factor must lie in (0, 1]");
    }
    if (opts.ctrl_samples_per_window < 1) {
        throw ConfigError("need at least one control sample per window");
    }
    if (opts.fp_max_iter < 1) throw ConfigError("need at least one Picard iteration");

    ContractionConstants cc = compute_constants(p, data);
    const double T = p.horizon;
    const int n = p.follicles;
    const double K = cc.K;
    const double tol = opts.fp_tol_factor * std::max(1.0, K);

    // Re-certify the contraction condition at the actual window length.
    double delta = cc.delta * opts.window_safety;
    for (int tries = 0;; ++tries) {
        if (tries > 2000 || !(delta > 0.0)) {
            throw ConfigError("window length underflowed while certifying contraction");
        }
        std::vector<double> c1, c2;
        lipschitz_coefficients(p, data, cc.K1, cc.K2, delta, c1, c2);
        double worst = 0.0;
        for (int f = 0; f < n; ++f) worst = std::max(worst, c1[f] + c2[f]);
        if (n * delta * worst <= 0.5) break;
        delta *= 0.5;
    }

    const int J = opts.ctrl_samples_per_window;
    const std::vector<double> M0 = data_maturities(p, data, opts.quad);

    std::vector<double> g_times{0.0};
    std::vector<std::vector<double>> g_vals(n);
    for (int f = 0; f < n; ++f) g_vals[f] = {M0[f]};

    InitialData anchor_data = data;
    double anchor_time = 0.0;
    int windows_since = 0;
    int resamples = 0;
    std::vector<PicardReport> reports;
    std::vector<std::pair<double, InitialData>> anchors;
    anchors.emplace_back(0.0, data);

    const double t_eps = 1e-12 * std::max(1.0, T);
    double t_end = 0.0;
    int w = 0;
    while (t_end < T - t_eps) {
        const double tau0 = t_end;
        const double tau1 = std::min(tau0 + delta, T);
        std::vector<double> s(J + 1);
        for (int j = 0; j <= J; ++j) {
            s[j] = tau0 + (tau1 - tau0) * (static_cast<double>(j) / J);
        }
        s[J] = tau1;

        // Initial candidate: the joint value, optionally ramped for
        // independence checks of the fixed point.
        std::vector<std::vector<double>> cand(n, std::vector<double>(J));
        for (int f = 0; f < n; ++f) {
            const double base = g_vals[f].back();
            for (int j = 1; j <= J; ++j) {
                cand[f][j - 1] = std::clamp(
                    base + opts.guess_ramp * K * (static_cast<double>(j) / J), 0.0, K);
            }
        }

        PicardReport rep;
        rep.window = w;
        rep.t_lo = tau0;
        rep.t_hi = tau1;
        double prev_res = -1.0;
        for (int iter = 1; iter <= opts.fp_max_iter; ++iter) {
            std::vector<double> times = g_times;
            std::vector<std::vector<double>> vals = g_vals;
            for (int j = 1; j <= J; ++j) {
                times.push_back(s[j]);
                for (int f = 0; f < n; ++f) vals[f].push_back(cand[f][j - 1]);
            }
            MaturityTrajectory traj(std::move(times), std::move(vals));
            ControlCurves curves(p, std::move(traj), opts.hooks);
            CharContext ctx(p, std::move(curves), anchor_time, tau1,
                            (tau1 - tau0) / J);

            double res = 0.0;
            std::vector<std::vector<double>> next(n, std::vector<double>(J));
            for (int f = 0; f < n; ++f) {
                for (int j = 1; j <= J; ++j) {
                    next[f][j - 1] =
                        follicle_maturity(ctx, anchor_data, f, s[j], opts.quad);
                    res = std::max(res, std::abs(next[f][j - 1] - cand[f][j - 1]));
                }
            }
            cand = std::move(next);
            rep.iterations = iter;
            rep.residual = res;
            if (prev_res > 0.0) {
                rep.observed_ratio = std::max(rep.observed_ratio, res / prev_res);
            }
            prev_res = res;
            if (res <= tol) {
                rep.converged = true;
                break;
            }
        }
        if (!rep.converged) {
            std::ostringstream oss;
            oss << "window " << w << " [" << tau0 << ", " << tau1
                << "] did not contract to tolerance " << tol << " within "
                << opts.fp_max_iter << " iterations (last residual " << rep.residual
                << ", observed ratio " << rep.observed_ratio << ")";
            throw NoConvergence(oss.str());
        }
        reports.push_back(rep);

        for (int j = 1; j <= J; ++j) {
            g_times.push_back(s[j]);
        }
        for (int f = 0; f < n; ++f) {
            for (int j = 1; j <= J; ++j) g_vals[f].push_back(cand[f][j - 1]);
        }
        t_end = tau1;
        ++w;
        ++windows_since;

        if (windows_since >= opts.resample_window_cap && t_end < T - t_eps) {
            MaturityTrajectory traj(g_times, g_vals);
            ControlCurves curves(p, std::move(traj), opts.hooks);
            CharContext ctx(p, std::move(curves), anchor_time, tau1,
                            (tau1 - tau0) / J);
            anchor_data =
                resample_snapshot(p, ctx, anchor_data, tau1, opts.resample_grid);
            anchor_time = tau1;
            windows_since = 0;
            ++resamples;
            anchors.emplace_back(anchor_time, anchor_data);
        }
    }

    return MarchResult{MaturityTrajectory(std::move(g_times), std::move(g_vals)),
                       std::move(cc),
                       std::move(reports),
                       resamples,
                       delta,
                       std::move(anchors)};
}

} // namespace follisim
