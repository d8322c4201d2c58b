#include "follisim/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <memory>
#include <sstream>
#include <string>

#include "follisim/util.hpp"

namespace follisim {

namespace {

std::string fmt(double v) {
    std::ostringstream oss;
    oss << std::setprecision(6) << v;
    return oss.str();
}

// Piecewise-linear trajectory starting at `start` (or a random level) and
// random-walking inside [lo, hi].
MaturityTrajectory random_trajectory(const ModelParams& p, double t_hi, double lo,
                                     double hi, Rng& rng,
                                     const std::vector<double>* start) {
    const int J = 8;
    std::vector<double> times(J + 1);
    for (int j = 0; j <= J; ++j) times[j] = t_hi * j / J;
    times[J] = t_hi;
    std::vector<std::vector<double>> vals(p.follicles, std::vector<double>(J + 1));
    for (int f = 0; f < p.follicles; ++f) {
        vals[f][0] = start ? (*start)[f] : rng.uniform(lo, hi);
        for (int j = 1; j <= J; ++j) {
            vals[f][j] = std::clamp(vals[f][j - 1] +
                                        rng.uniform(-(hi - lo) / 3.0, (hi - lo) / 3.0),
                                    lo, hi);
        }
    }
    return MaturityTrajectory(std::move(times), std::move(vals));
}

CharContext make_context(const ModelParams& p, double t_hi, Rng& rng, Hooks hooks) {
    MaturityTrajectory traj = random_trajectory(p, t_hi, 0.0, 2.0, rng, nullptr);
    ControlCurves curves(p, std::move(traj), std::move(hooks));
    return CharContext(p, std::move(curves), 0.0, t_hi, t_hi / 8.0);
}

// Synthetic smooth data with mass everywhere (Gaussian tails reach the faces).
InitialData gaussian_data(const ModelParams& p, double amp) {
    InitialData data(p);
    for (int f = 0; f < p.follicles; ++f) {
        for (int k = 1; k <= p.cycles; ++k) {
            for (Phase phase : {Phase::p1, Phase::p2, Phase::p3}) {
                const double bump = amp * (1.0 - 0.1 * f) * (1.0 - 0.05 * (k - 1));
                data.set({f, k, phase},
                         make_gaussian_field(bump, 0.55, 0.18, 0.45, 0.2));
            }
        }
    }
    return data;
}

// End of the first datum segment: weak-form and exactness checks must not
// cross a re-anchoring.
double first_segment_end(const Solution& sol) {
    const auto& anchors = sol.march_result().anchors;
    return anchors.size() > 1 ? anchors[1].first : sol.horizon();
}

} // namespace

// ---------------------------------------------------------------------------
// Contraction ratio of the solution map on random trajectory pairs.
// ---------------------------------------------------------------------------

PropertyResult contraction_check(const ModelParams& p, const InitialData& data,
                                 const VerifyOptions& opts) {
    PropertyResult res{"contraction-ratio", false, ""};
    if (data.all_zero()) {
        // K = 0 collapses the candidate set to the single zero trajectory.
        res.pass = true;
        res.details = "vacuous: zero data (worst ratio 0 over 0 pairs)";
        return res;
    }
    const ContractionConstants cc = compute_constants(p, data);
    const double delta = cc.delta;
    const std::vector<double> M0 = data_maturities(p, data, opts.quad);

    const int J = 8;
    std::vector<double> times(J + 1);
    for (int j = 0; j <= J; ++j) times[j] = delta * j / J;
    times[J] = delta;
    const std::vector<double> eval_times(times.begin() + 1, times.end());

    Rng rng(opts.seed);
    auto draw = [&]() {
        std::vector<std::vector<double>> vals(p.follicles,
                                              std::vector<double>(J + 1));
        for (int f = 0; f < p.follicles; ++f) {
            vals[f][0] = M0[f];
            for (int j = 1; j <= J; ++j) {
                vals[f][j] = std::clamp(vals[f][j - 1] +
                                            rng.uniform(-cc.K / 3.0, cc.K / 3.0),
                                        0.0, cc.K);
            }
        }
        return MaturityTrajectory(times, std::move(vals));
    };

    double worst = 0.0;
    int made = 0;
    for (int attempt = 0; made < opts.contraction_pairs && attempt < 10 * opts.contraction_pairs;
         ++attempt) {
        const MaturityTrajectory A = draw();
        const MaturityTrajectory B = draw();
        double dist_in = 0.0;
        for (int f = 0; f < p.follicles; ++f) {
            for (int j = 1; j <= J; ++j) {
                dist_in = std::max(dist_in,
                                   std::abs(A.samples(f)[j] - B.samples(f)[j]));
            }
        }
        if (dist_in < 1e-3 * std::max(1.0, cc.K)) continue;
        const auto GA = apply_G(p, data, A, 0.0, eval_times, opts.fp);
        const auto GB = apply_G(p, data, B, 0.0, eval_times, opts.fp);
        double dist_out = 0.0;
        for (int f = 0; f < p.follicles; ++f) {
            for (std::size_t j = 0; j < eval_times.size(); ++j) {
                dist_out = std::max(dist_out, std::abs(GA[f][j] - GB[f][j]));
            }
        }
        worst = std::max(worst, dist_out / dist_in);
        ++made;
    }

    res.pass = made == opts.contraction_pairs && worst <= 0.5;
    res.details = "worst ratio " + fmt(worst) + " over " + std::to_string(made) +
                  " pairs (window " + fmt(delta) + ", K " + fmt(cc.K) +
                  ", bound 0.5)";
    return res;
}

// ---------------------------------------------------------------------------
// Picard well-posedness: convergence from two distinct initial guesses.
// ---------------------------------------------------------------------------

PropertyResult picard_check(const ModelParams& p, const InitialData& data,
                            const VerifyOptions& opts) {
    PropertyResult res{"picard-wellposed", false, ""};
    FixedPointOptions a = opts.fp;
    a.guess_ramp = 0.0;
    FixedPointOptions b = opts.fp;
    b.guess_ramp = 0.5;
    const MarchResult ra = march(p, data, a);
    const MarchResult rb = march(p, data, b);

    int max_iter = 0;
    double max_residual = 0.0;
    for (const auto& w : ra.windows) {
        max_iter = std::max(max_iter, w.iterations);
        max_residual = std::max(max_residual, w.residual);
    }
    for (const auto& w : rb.windows) {
        max_iter = std::max(max_iter, w.iterations);
        max_residual = std::max(max_residual, w.residual);
    }

    double diff = 0.0;
    const int M = 200;
    for (int i = 0; i <= M; ++i) {
        const double t = p.horizon * i / M;
        for (int f = 0; f < p.follicles; ++f) {
            diff = std::max(diff, std::abs(ra.trajectory.value(f, t) -
                                           rb.trajectory.value(f, t)));
        }
    }

    res.pass = diff < 1e-9 && max_iter <= opts.fp.fp_max_iter;
    res.details = "guess difference " + fmt(diff) + " (tol 1e-9), max " +
                  std::to_string(max_iter) + " iterations, final residual " +
                  fmt(max_residual);
    return res;
}

// ---------------------------------------------------------------------------
// Analytic Jacobian factors vs finite-difference flow-map determinants.
// ---------------------------------------------------------------------------

namespace {

struct JacobianKind {
    Phase phase;
    Face entry;
    Face exit;
    const char* tag;
};

constexpr JacobianKind kJacobianKinds[9] = {
    {Phase::p1, Face::none, Face::none, "p1 slice-interior"},
    {Phase::p1, Face::age_back, Face::none, "p1 back-interior"},
    {Phase::p1, Face::none, Face::age_front, "p1 slice-front"},
    {Phase::p3, Face::none, Face::none, "p3 slice-interior"},
    {Phase::p3, Face::mat_bottom, Face::none, "p3 bottom-interior"},
    {Phase::p1, Face::none, Face::mat_top, "p1 slice-top"},
    {Phase::p1, Face::age_back, Face::mat_top, "p1 back-top"},
    {Phase::p3, Face::age_back, Face::none, "p3 back-interior"},
    {Phase::p3, Face::none, Face::age_front, "p3 slice-front"},
};

} // namespace

PropertyResult jacobian_check(const ModelParams& p, const VerifyOptions& opts) {
    PropertyResult res{"jacobian-factors", false, ""};
    Rng rng(opts.seed + 1);
    const double T = p.horizon;
    const CharContext ctx = make_context(p, T, rng, opts.fp.hooks);

    double worst = 0.0;
    std::string worst_tag = "-";
    int done = 0;
    for (int s = 0; s < opts.jacobian_segments; ++s) {
        const JacobianKind& kind = kJacobianKinds[s % 9];
        bool realized = false;
        for (int attempt = 0; attempt < 80 && !realized; ++attempt) {
            const int f = static_cast<int>(rng.below(p.follicles));

            // Base entry parameters (a0, b0): coordinates on the entry slice
            // or (time, coordinate) on the entry face.
            double a0 = 0.0, b0 = 0.0, t_from = 0.0, t_to = 0.0;
            if (kind.entry == Face::none) {
                t_from = rng.uniform(0.02 * T, 0.3 * T);
            } else {
                t_from = rng.uniform(0.02 * T, 0.25 * T);
            }
            const double span = T - t_from;
            const auto probe = ctx.sample_exact(f, t_from);
            const double gx = kind.phase == Phase::p1 ? probe.gbar : vel_gtilde(p, f);
            const double gy1 = vel_hbar(p, f, 1.0, probe.u);

            switch (kind.exit) {
                case Face::none:
                    t_to = t_from + rng.uniform(0.35, 0.85) * span;
                    break;
                default:
                    t_to = T; // target; the realized exit time comes from the flow
                    break;
            }

            // The FD stencil below displaces the entry coordinates by eps,
            // so a face-exiting start may sit close to the exit face (at a
            // short horizon it must), just not within a stencil width of it.
            constexpr double eps = 3e-5;
            double x0 = rng.uniform(0.15, 0.6);
            double y0 = rng.uniform(0.15, 0.6);
            if (kind.exit == Face::age_front) {
                x0 = 1.0 - rng.uniform(0.2, 0.7) * gx * span;
                if (x0 <= 0.02 || x0 >= 1.0 - 10.0 * eps) continue;
            }
            if (kind.exit == Face::mat_top) {
                y0 = 1.0 - rng.uniform(0.15, 0.55) * gy1 * span;
                x0 = rng.uniform(0.05, 0.3);
                if (y0 <= 0.02 || y0 >= 1.0 - 10.0 * eps) continue;
            }

            if (kind.entry == Face::none) {
                a0 = x0;
                b0 = y0;
            } else if (kind.entry == Face::age_back) {
                a0 = t_from;
                b0 = kind.exit == Face::mat_top ? y0 : rng.uniform(0.15, 0.6);
            } else { // mat_bottom (p3)
                a0 = t_from;
                b0 = rng.uniform(0.1, 0.7);
            }

            const auto start_of = [&](double a, double b) -> FlowPoint {
                switch (kind.entry) {
                    case Face::none: return {t_from, a, b};
                    case Face::age_back: return {a, 0.0, b};
                    default: return {a, b, 0.0}; // mat_bottom
                }
            };
            const auto out_of = [&](const FlowResult& r,
                                    bool& valid) -> std::pair<double, double> {
                if (kind.exit == Face::none) {
                    valid = r.exit == Face::none;
                    return {r.end.x, r.end.y};
                }
                valid = r.exit == kind.exit;
                if (kind.exit == Face::age_front) return {r.end.t, r.end.y};
                return {r.end.t, r.end.x}; // mat_top
            };

            bool valid = false;
            const FlowResult center = flow(ctx, kind.phase, f, start_of(a0, b0), t_to);
            out_of(center, valid);
            if (!valid) continue;

            if (kind.entry != Face::none && a0 - eps <= 0.0) continue;
            if (b0 - eps <= 0.0 || b0 + eps >= 1.0) continue;
            if (kind.entry == Face::none && (a0 - eps <= 0.0 || a0 + eps >= 1.0)) {
                continue;
            }

            std::pair<double, double> o[4];
            const double da[4] = {eps, -eps, 0.0, 0.0};
            const double db[4] = {0.0, 0.0, eps, -eps};
            bool all_valid = true;
            for (int q = 0; q < 4 && all_valid; ++q) {
                const FlowResult r =
                    flow(ctx, kind.phase, f, start_of(a0 + da[q], b0 + db[q]), t_to);
                o[q] = out_of(r, all_valid);
            }
            if (!all_valid) continue;

            const double d1a = (o[0].first - o[1].first) / (2.0 * eps);
            const double d2a = (o[0].second - o[1].second) / (2.0 * eps);
            const double d1b = (o[2].first - o[3].first) / (2.0 * eps);
            const double d2b = (o[2].second - o[3].second) / (2.0 * eps);
            const double fd = std::abs(d1a * d2b - d1b * d2a);

            FaceSegment seg;
            seg.phase = kind.phase;
            seg.follicle = f;
            seg.from_face = kind.entry;
            seg.to_face = kind.exit;
            seg.t_from = start_of(a0, b0).t;
            seg.t_to = kind.exit == Face::none ? t_to : center.end.t;
            seg.dhdy_integral = center.dhdy_integral;
            const double analytic = segment_jacobian(ctx, seg);

            const double rel = std::abs(fd - analytic) / std::max(analytic, 1e-300);
            if (rel > worst) {
                worst = rel;
                worst_tag = kind.tag;
            }
            realized = true;
            ++done;
        }
        if (!realized) {
            res.details = std::string("failed to realize a '") + kind.tag +
                          "' segment";
            return res;
        }
    }

    res.pass = worst < 1e-6;
    res.details = "worst relative error " + fmt(worst) + " (" + worst_tag +
                  ") over " + std::to_string(done) + " segments, tol 1e-6";
    return res;
}

// ---------------------------------------------------------------------------
// Weak-form residual against random admissible test functions.
// ---------------------------------------------------------------------------

PropertyResult weak_residual_check(const Solution& sol, const VerifyOptions& opts) {
    PropertyResult res{"weak-residual", false, ""};
    const double tau = first_segment_end(sol);
    double worst = 0.0;
    for (int s = 0; s < opts.residual_sets; ++s) {
        const TestFunctionSet psi =
            make_poly_test_set(sol.params(), tau, opts.seed + 100 + s);
        const WeakResidual r = sol.weak_residual(psi, 0.0, tau, opts.quad);
        const double rel = std::abs(r.total()) / std::max(r.scale(), 1e-300);
        worst = std::max(worst, rel);
    }
    res.pass = worst < 1e-5;
    res.details = "worst |residual|/scale " + fmt(worst) + " over " +
                  std::to_string(opts.residual_sets) + " test sets, tol 1e-5";
    return res;
}

PropertyResult residual_inflation_check(const Solution& sol,
                                        const VerifyOptions& opts) {
    PropertyResult res{"residual-inflation", false, ""};
    const ModelParams& p = sol.params();
    const double tau = first_segment_end(sol);

    ComponentId target{0, 1, Phase::p1};
    bool found = false;
    for (int ci = 0; ci < component_count(p) && !found; ++ci) {
        const ComponentId id = component_from_index(p, ci);
        if (!sol.initial_data().field(id).is_zero()) {
            target = id;
            found = true;
        }
    }
    if (!found) {
        // A perturbation of the zero field is the zero field; the property
        // holds vacuously.
        res.pass = true;
        res.details = "vacuous: zero data, nothing to perturb";
        return res;
    }

    const TestFunctionSet psi = make_poly_test_set(p, tau, opts.seed + 100);
    const WeakResidual base = sol.weak_residual(psi, 0.0, tau, opts.quad);
    const DensityPerturbation pert{target, 0.01};
    const WeakResidual bad = sol.weak_residual(psi, 0.0, tau, opts.quad, pert);

    const double rb = std::abs(base.total());
    const double rp = std::abs(bad.total());
    res.pass = rp >= 10.0 * rb && rp > 0.0;
    res.details = "perturbed |residual| " + fmt(rp) + " vs clean " + fmt(rb) +
                  " (component " + component_tag(target) + ", amp 0.01, need 10x)";
    return res;
}

// ---------------------------------------------------------------------------
// A-priori bounds.
// ---------------------------------------------------------------------------

PropertyResult bounds_check(const Solution& sol, const VerifyOptions& opts) {
    PropertyResult res{"apriori-bounds", false, ""};
    const BoundsReport rep = sol.check_bounds(opts.bound_samples, opts.seed + 3);
    res.pass = rep.ok();
    res.details = "maturity in [" + fmt(rep.min_M) + ", " + fmt(rep.max_M) +
                  "] vs K " + fmt(rep.K) + "; density max " + fmt(rep.max_density) +
                  " vs bound " + fmt(rep.density_bound) + " (worst ratio " +
                  fmt(rep.worst_ratio) + ", " + std::to_string(rep.samples) +
                  " samples)";
    return res;
}

// ---------------------------------------------------------------------------
// Interface trace relations.
// ---------------------------------------------------------------------------

PropertyResult trace_check(const Solution& sol, const VerifyOptions& opts) {
    PropertyResult res{"trace-compatibility", false, ""};
    const ModelParams& p = sol.params();
    const double tau = first_segment_end(sol);
    const double mito = sol.hooks().disable_mitosis ? 1.0 : 2.0;
    Rng rng(opts.seed + 4);

    double worst = 0.0;
    for (int s = 0; s < opts.trace_samples; ++s) {
        const int f = static_cast<int>(rng.below(p.follicles));
        const int k = 1 + static_cast<int>(rng.below(p.cycles));
        const double t = rng.uniform(0.05 * tau, tau);
        const double w = rng.uniform(0.05, 0.95);
        const int which = static_cast<int>(rng.below(4));
        double lhs = 0.0, rhs = 0.0;
        switch (which) {
            case 0: { // phase-1 front trace feeds phase 2
                const auto c = sol.context_at(t).sample_exact(f, t);
                lhs = sol.eval({f, k, Phase::p2}, t, 0.0, w);
                rhs = p.a1 * c.gbar / p.tau_g[f] *
                      sol.eval({f, k, Phase::p1}, t, 1.0, w);
                break;
            }
            case 1: { // phase-2 front trace feeds the next cycle's phase 1
                if (k == p.cycles) continue;
                const auto c = sol.context_at(t).sample_exact(f, t);
                lhs = sol.eval({f, k + 1, Phase::p1}, t, 0.0, w);
                rhs = mito * p.tau_g[f] / (p.a1 * c.gbar) *
                      sol.eval({f, k, Phase::p2}, t, 1.0, w);
                break;
            }
            case 2: { // phase-3 front trace feeds the next cycle's phase 3
                if (k == p.cycles) continue;
                lhs = sol.eval({f, k + 1, Phase::p3}, t, 0.0, w);
                rhs = sol.eval({f, k, Phase::p3}, t, 1.0, w);
                break;
            }
            default: { // phase-1 top trace feeds the phase-3 bottom
                const double ratio = p.a1 / p.a2;
                const double x = w * ratio * 0.98;
                lhs = sol.eval({f, k, Phase::p3}, t, x, 0.0);
                rhs = sol.eval({f, k, Phase::p1}, t, x / ratio, 1.0);
                break;
            }
        }
        const double err =
            std::abs(lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)});
        worst = std::max(worst, err);
    }
    res.pass = worst < 1e-8;
    res.details = "worst relative mismatch " + fmt(worst) + " over " +
                  std::to_string(opts.trace_samples) + " interface samples, tol 1e-8";
    return res;
}

// ---------------------------------------------------------------------------
// Mass conservation along characteristics (losses off, doubling off).
// ---------------------------------------------------------------------------

PropertyResult char_mass_check(const ModelParams& p, const InitialData& data,
                               const VerifyOptions& opts) {
    PropertyResult res{"mass-conservation-characteristics", false, ""};
    const double T = p.horizon;
    Hooks hooks;
    hooks.zero_loss = true;
    hooks.disable_mitosis = true;
    std::vector<double> u0(p.follicles, 0.6);
    hooks.frozen = std::make_shared<FrozenControls>(
        FrozenControls::constant(0.0, T, 0.7, u0));
    // The trajectory is a placeholder; frozen controls take precedence.
    ControlCurves curves(
        p,
        MaturityTrajectory::constant(0.0, T, 8,
                                     std::vector<double>(p.follicles, 0.5)),
        hooks);
    CharContext ctx(p, std::move(curves), 0.0, T, T / 8.0);

    double m0 = 0.0, drift = 0.0;
    for (int i = 0; i <= 4; ++i) {
        const double t = T * i / 4.0;
        double m = 0.0;
        for (int ci = 0; ci < component_count(p); ++ci) {
            m += component_mass(ctx, data, component_from_index(p, ci), t, opts.quad);
        }
        if (i == 0) {
            m0 = m;
        } else {
            drift = std::max(drift, std::abs(m - m0) / std::max(1.0, m0));
        }
    }
    res.pass = drift < 1e-6;
    res.details = "worst relative drift " + fmt(drift) + " from mass " + fmt(m0) +
                  " over 5 times, tol 1e-6";
    return res;
}

// ---------------------------------------------------------------------------
// Reference-solver audits: mitosis doubling and closed-domain conservation.
// ---------------------------------------------------------------------------

PropertyResult fv_doubling_check(const ModelParams& p, const InitialData&,
                                 const VerifyOptions& opts) {
    PropertyResult res{"fv-mitosis-doubling", false, ""};
    const InitialData data = gaussian_data(p, 0.05);
    FvOptions fo;
    fo.nx = fo.ny = opts.fv_grid;
    FvSolver solver(p, data, fo);

    double worst = 0.0;
    int audited = 0;
    for (int s = 0; s < opts.fv_steps; ++s) {
        const FvAudit before = solver.audit();
        solver.step(std::numeric_limits<double>::infinity());
        const FvAudit after = solver.audit();
        const double din = after.mitosis_in - before.mitosis_in;
        const double dout = after.mitosis_out - before.mitosis_out;
        if (dout == 0.0) continue;
        worst = std::max(worst, std::abs(din / dout - 2.0));
        ++audited;
    }
    res.pass = audited > 0 && worst < 1e-12;
    res.details = "worst |flux ratio - 2| " + fmt(worst) + " over " +
                  std::to_string(audited) + " audited steps, tol 1e-12";
    return res;
}

PropertyResult fv_closed_check(const ModelParams& p, const InitialData&,
                               const VerifyOptions& opts) {
    PropertyResult res{"fv-closed-mass", false, ""};
    const InitialData data = gaussian_data(p, 0.05);
    FvOptions fo;
    fo.nx = fo.ny = opts.fv_grid;
    fo.hooks.closed_domain = true;
    fo.hooks.zero_loss = true;
    fo.hooks.disable_mitosis = true;
    FvSolver solver(p, data, fo);

    const double m0 = solver.total_mass();
    double worst = 0.0;
    for (int s = 0; s < opts.fv_steps; ++s) {
        const double before = solver.total_mass();
        solver.step(std::numeric_limits<double>::infinity());
        const double after = solver.total_mass();
        worst = std::max(worst, std::abs(after - before) / std::max(1.0, m0));
    }
    res.pass = worst < 1e-10;
    res.details = "worst per-step mass drift " + fmt(worst) + " (mass " + fmt(m0) +
                  "), tol 1e-10";
    return res;
}

// ---------------------------------------------------------------------------
// Phase-2 pure-transport exactness.
// ---------------------------------------------------------------------------

PropertyResult phase2_check(const Solution& sol, const VerifyOptions& opts) {
    PropertyResult res{"phase2-transport", false, ""};
    const ModelParams& p = sol.params();
    const double tau = first_segment_end(sol);
    Rng rng(opts.seed + 5);

    double worst = 0.0;
    for (int s = 0; s < 40; ++s) {
        const int f = static_cast<int>(rng.below(p.follicles));
        const int k = 1 + static_cast<int>(rng.below(p.cycles));
        const double ghat = vel_ghat(p, f);
        const double t = rng.uniform(0.0, std::min(tau, 0.95 / ghat));
        const double x = rng.uniform(std::min(ghat * t + 1e-6, 1.0), 1.0);
        const double y = rng.uniform(0.0, 1.0);
        const ComponentId id{f, k, Phase::p2};
        const double got = sol.eval(id, t, x, y);
        const double want = sol.initial_data().eval(id, x - ghat * t, y);
        worst = std::max(worst,
                         std::abs(got - want) / std::max(1.0, std::abs(want)));
    }
    res.pass = worst < 1e-12;
    res.details = "worst relative error " + fmt(worst) +
                  " over 40 samples, tol 1e-12";
    return res;
}

// ---------------------------------------------------------------------------
// Open-loop linearity in the initial data.
// ---------------------------------------------------------------------------

PropertyResult linearity_check(const ModelParams& p, const VerifyOptions& opts) {
    PropertyResult res{"open-loop-linearity", false, ""};
    const double T = p.horizon;
    Hooks hooks;
    std::vector<double> u0(p.follicles);
    for (int f = 0; f < p.follicles; ++f) u0[f] = 0.55 + 0.1 * f / std::max(1, p.follicles - 1);
    hooks.frozen = std::make_shared<FrozenControls>(
        FrozenControls::constant(0.0, T, 0.7, u0));
    ControlCurves curves(
        p,
        MaturityTrajectory::constant(0.0, T, 8,
                                     std::vector<double>(p.follicles, 0.5)),
        hooks);
    CharContext ctx(p, std::move(curves), 0.0, T, T / 8.0);

    Rng rng(opts.seed + 6);
    InitialData A(p), B(p);
    for (int ci = 0; ci < component_count(p); ++ci) {
        const ComponentId id = component_from_index(p, ci);
        A.set(id, make_gaussian_field(rng.uniform(0.02, 0.08), rng.uniform(0.3, 0.7),
                                      rng.uniform(0.1, 0.25), rng.uniform(0.3, 0.7),
                                      rng.uniform(0.1, 0.25)));
        B.set(id, make_polybump_field(rng.uniform(0.02, 0.08), 3,
                                      rng.uniform(0.05, 0.2), rng.uniform(0.6, 0.9),
                                      rng.uniform(0.05, 0.2), rng.uniform(0.6, 0.9)));
    }
    const double alpha = rng.uniform(-2.0, 2.0);
    const double beta = rng.uniform(-2.0, 2.0);
    const InitialData C = InitialData::combine(alpha, A, beta, B);

    double worst = 0.0;
    for (int s = 0; s < opts.linearity_samples; ++s) {
        const ComponentId id = component_from_index(
            p, static_cast<int>(rng.below(component_count(p))));
        const double t = rng.uniform(0.0, T);
        const double x = rng.uniform(0.0, 1.0);
        const double y = rng.uniform(0.0, 1.0);
        const double va = eval_density(ctx, A, id, t, x, y).value;
        const double vb = eval_density(ctx, B, id, t, x, y).value;
        const double vc = eval_density(ctx, C, id, t, x, y).value;
        const double err = std::abs(vc - (alpha * va + beta * vb)) /
                           std::max({1.0, std::abs(alpha * va), std::abs(beta * vb)});
        worst = std::max(worst, err);
    }
    res.pass = worst < 1e-12;
    res.details = "worst relative defect " + fmt(worst) + " at alpha " + fmt(alpha) +
                  ", beta " + fmt(beta) + ", tol 1e-12";
    return res;
}

// ---------------------------------------------------------------------------
// Full suite.
// ---------------------------------------------------------------------------

std::vector<PropertyResult> run_verification(const ModelParams& p,
                                             const InitialData& data,
                                             const VerifyOptions& opts) {
    std::vector<PropertyResult> out;
    const auto guard = [&out](const char* name, auto&& fn) {
        try {
            out.push_back(fn());
        } catch (const std::exception& e) {
            out.push_back({name, false, std::string("exception: ") + e.what()});
        }
    };

    guard("contraction-ratio", [&] { return contraction_check(p, data, opts); });
    guard("picard-wellposed", [&] { return picard_check(p, data, opts); });
    guard("jacobian-factors", [&] { return jacobian_check(p, opts); });

    bool solved = false;
    try {
        const MarchResult mr = march(p, data, opts.fp);
        const Solution sol(p, data, mr, opts.fp.hooks);
        solved = true;
        guard("weak-residual", [&] { return weak_residual_check(sol, opts); });
        guard("residual-inflation",
              [&] { return residual_inflation_check(sol, opts); });
        guard("apriori-bounds", [&] { return bounds_check(sol, opts); });
        guard("trace-compatibility", [&] { return trace_check(sol, opts); });
        guard("phase2-transport", [&] { return phase2_check(sol, opts); });
    } catch (const std::exception& e) {
        if (!solved) {
            out.push_back({"solve", false, std::string("exception: ") + e.what()});
        } else {
            throw;
        }
    }

    guard("mass-conservation-characteristics",
          [&] { return char_mass_check(p, data, opts); });
    guard("fv-mitosis-doubling", [&] { return fv_doubling_check(p, data, opts); });
    guard("fv-closed-mass", [&] { return fv_closed_check(p, data, opts); });
    guard("open-loop-linearity", [&] { return linearity_check(p, opts); });
    return out;
}

} // namespace follisim
