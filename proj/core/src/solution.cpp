#include "follisim/solution.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "follisim/util.hpp"

namespace follisim {

// ----------------------------------------------------------------------------
// Test functions.
// ----------------------------------------------------------------------------

namespace {

struct ZeroTestFn final : TestFunction {
    double value(double, double, double) const override { return 0.0; }
    double dt(double, double, double) const override { return 0.0; }
    double dx(double, double, double) const override { return 0.0; }
    double dy(double, double, double) const override { return 0.0; }
};

const ZeroTestFn kZeroTestFn;

// Dense 1-D polynomial with Horner evaluation of the value and derivative.
struct Poly1 {
    std::vector<double> c; // c[0] + c[1] s + c[2] s^2 + ...

    double operator()(double s) const {
        double v = 0.0;
        for (std::size_t i = c.size(); i-- > 0;) v = v * s + c[i];
        return v;
    }
    double deriv(double s) const {
        double v = 0.0;
        for (std::size_t i = c.size(); i-- > 1;) v = v * s + c[i] * double(i);
        return v;
    }
};

Poly1 poly_mul(const Poly1& a, const Poly1& b) {
    Poly1 r;
    r.c.assign(a.c.size() + b.c.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.c.size(); ++i) {
        for (std::size_t j = 0; j < b.c.size(); ++j) r.c[i + j] += a.c[i] * b.c[j];
    }
    return r;
}

// Product of three one-dimensional polynomial factors with exact partials.
struct BumpTestFn final : TestFunction {
    Poly1 pt, px, py;

    double value(double t, double x, double y) const override {
        return pt(t) * px(x) * py(y);
    }
    double dt(double t, double x, double y) const override {
        return pt.deriv(t) * px(x) * py(y);
    }
    double dx(double t, double x, double y) const override {
        return pt(t) * px.deriv(x) * py(y);
    }
    double dy(double t, double x, double y) const override {
        return pt(t) * px(x) * py.deriv(y);
    }
};

} // namespace

TestFunctionSet::TestFunctionSet(int follicles, int cycles)
    : follicles_(follicles), cycles_(cycles),
      fns_(static_cast<std::size_t>(follicles) * cycles * 3) {
    if (follicles < 1 || cycles < 1) {
        throw ConfigError("test function set needs positive dimensions");
    }
}

namespace {
std::size_t psi_index(int follicles, int cycles, ComponentId id) {
    if (id.follicle < 0 || id.follicle >= follicles || id.cycle < 1 ||
        id.cycle > cycles) {
        throw ConfigError("test function component out of range");
    }
    return (static_cast<std::size_t>(id.follicle) * cycles + (id.cycle - 1)) * 3 +
           (static_cast<int>(id.phase) - 1);
}
} // namespace

void TestFunctionSet::set(ComponentId id, TestFunctionPtr fn) {
    fns_[psi_index(follicles_, cycles_, id)] = std::move(fn);
}

const TestFunction& TestFunctionSet::get(ComponentId id) const {
    const auto& p = fns_[psi_index(follicles_, cycles_, id)];
    return p ? *p : static_cast<const TestFunction&>(kZeroTestFn);
}

bool TestFunctionSet::has(ComponentId id) const {
    return static_cast<bool>(fns_[psi_index(follicles_, cycles_, id)]);
}

TestFunctionSet make_poly_test_set(const ModelParams& p, double tau,
                                   std::uint64_t seed) {
    TestFunctionSet set(p.follicles, p.cycles);
    Rng rng(seed);
    const auto coeffs = [&](int n) {
        Poly1 q;
        for (int i = 0; i < n; ++i) q.c.push_back(rng.uniform(0.3, 1.0));
        return q;
    };
    const Poly1 one_minus_sq{{1.0, -2.0, 1.0}};           // (1-s)^2
    const Poly1 both_ends{{0.0, 0.0, 1.0, -2.0, 1.0}};    // s^2 (1-s)^2
    for (int f = 0; f < p.follicles; ++f) {
        for (int k = 1; k <= p.cycles; ++k) {
            for (Phase phase : {Phase::p1, Phase::p2, Phase::p3}) {
                auto fn = std::make_shared<BumpTestFn>();
                // Vanishes at the final time, strictly positive before it.
                fn->pt = poly_mul(Poly1{{tau, -1.0}}, coeffs(3));
                // Vanishes at the front face x = 1; first-cycle phase-1 and
                // phase-3 components also vanish at the back face x = 0.
                const bool back_zero = k == 1 && phase != Phase::p2;
                fn->px = back_zero ? poly_mul(both_ends, coeffs(2))
                                   : poly_mul(one_minus_sq, coeffs(3));
                // Phase-1 and phase-2 components vanish at both maturity
                // faces; phase-3 stays positive at y = 0 so the bottom-face
                // interface term is exercised.
                fn->py = phase == Phase::p3 ? coeffs(3)
                                            : poly_mul(both_ends, coeffs(2));
                set.set({f, k, phase}, std::move(fn));
            }
        }
    }
    return set;
}

double WeakResidual::scale() const {
    return std::max({std::abs(interior), std::abs(initial), std::abs(p3_bottom),
                     std::abs(mitosis), std::abs(p3_back), std::abs(p1_to_p2)});
}

// ----------------------------------------------------------------------------
// Solution.
// ----------------------------------------------------------------------------

Solution::Solution(const ModelParams& p, InitialData data, MarchResult result,
                   Hooks hooks)
    : params_(p), data0_(std::move(data)), result_(std::move(result)),
      hooks_(std::move(hooks)) {
    if (result_.anchors.empty()) {
        result_.anchors.emplace_back(result_.trajectory.t_lo(), data0_);
    }
    ctxs_.resize(result_.anchors.size());
}

std::size_t Solution::anchor_index(double t) const {
    const double tol = 1e-9 * std::max(1.0, params_.horizon);
    const auto& anchors = result_.anchors;
    if (t < anchors.front().first - tol) {
        std::ostringstream oss;
        oss << "time " << t << " precedes the first datum anchor "
            << anchors.front().first;
        throw WindowExceeded(oss.str());
    }
    std::size_t i = 0;
    while (i + 1 < anchors.size() && anchors[i + 1].first <= t + tol) ++i;
    return i;
}

const CharContext& Solution::context_for_anchor(std::size_t i) const {
    if (!ctxs_[i]) {
        const double t_lo = result_.anchors[i].first;
        const double t_hi = i + 1 < result_.anchors.size()
                                ? result_.anchors[i + 1].first
                                : result_.trajectory.t_hi();
        ControlCurves curves(params_, result_.trajectory, hooks_);
        const double dt_ctrl = std::max(result_.trajectory.max_spacing(), 1e-300);
        ctxs_[i] = std::make_unique<CharContext>(params_, std::move(curves), t_lo,
                                                 t_hi, dt_ctrl);
    }
    return *ctxs_[i];
}

const CharContext& Solution::context_at(double t) const {
    return context_for_anchor(anchor_index(t));
}

const InitialData& Solution::datum_at(double t) const {
    return result_.anchors[anchor_index(t)].second;
}

double Solution::eval(ComponentId comp, double t, double x, double y) const {
    const std::size_t i = anchor_index(t);
    return eval_density(context_for_anchor(i), result_.anchors[i].second, comp, t, x,
                        y)
        .value;
}

CharChain Solution::chain(ComponentId comp, double t, double x, double y) const {
    const std::size_t i = anchor_index(t);
    return backtrace(context_for_anchor(i), comp, t, x, y);
}

RegionLabel Solution::region(ComponentId comp, double t, double x, double y) const {
    const std::size_t i = anchor_index(t);
    return classify(context_for_anchor(i), comp, t, x, y);
}

std::vector<double> Solution::maturity(double t) const {
    const std::size_t i = anchor_index(t);
    return maturities(context_for_anchor(i), result_.anchors[i].second, t);
}

std::vector<double> Solution::maturity_interp(double t) const {
    return result_.trajectory.at(t);
}

// ----------------------------------------------------------------------------
// Weak residual.
// ----------------------------------------------------------------------------

WeakResidual Solution::weak_residual(const TestFunctionSet& psi, double t0,
                                     double tau, const QuadratureOptions& quad,
                                     const std::optional<DensityPerturbation>& pert)
    const {
    const ModelParams& p = params_;
    if (!(tau > t0)) throw ConfigError("residual interval must have positive length");
    if (psi.follicles() != p.follicles || psi.cycles() != p.cycles) {
        throw ConfigError("test function set does not match the model dimensions");
    }

    const std::size_t ai = anchor_index(t0);
    const CharContext& ctx = context_for_anchor(ai);
    const InitialData& datum = result_.anchors[ai].second;
    const double tol = 1e-9 * std::max(1.0, params_.horizon);
    if (tau > ctx.t_hi() + tol) {
        throw WindowExceeded(
            "residual interval spans a datum re-anchoring; shorten the interval");
    }

    // Admissibility: sample each vanishing condition on a grid and reject
    // violations beyond 1e-12 relative to the overall sup of the set.
    {
        constexpr int n = 6; // grid points per axis: i / n, i = 0..n
        double sup = 0.0;
        double viol = 0.0;
        const char* where = nullptr;
        const auto record = [&](double v, const char* label) {
            if (std::abs(v) > viol) {
                viol = std::abs(v);
                where = label;
            }
        };
        for (int f = 0; f < p.follicles; ++f) {
            for (int k = 1; k <= p.cycles; ++k) {
                for (Phase phase : {Phase::p1, Phase::p2, Phase::p3}) {
                    const TestFunction& fn = psi.get({f, k, phase});
                    for (int i = 0; i <= n; ++i) {
                        const double a = double(i) / n;
                        for (int j = 0; j <= n; ++j) {
                            const double b = double(j) / n;
                            const double t = t0 + a * (tau - t0);
                            sup = std::max({sup, std::abs(fn.value(t, b, 0.5)),
                                            std::abs(fn.value(t, 0.5, b))});
                            record(fn.value(tau, a, b), "the final time");
                            record(fn.value(t, 1.0, b), "the front face x = 1");
                            if (k == 1 && phase != Phase::p2) {
                                record(fn.value(t, 0.0, b),
                                       "the first-cycle back face x = 0");
                            }
                            if (phase != Phase::p3) {
                                record(fn.value(t, b, 0.0),
                                       "the maturity face y = 0");
                                record(fn.value(t, b, 1.0),
                                       "the maturity face y = 1");
                            }
                        }
                    }
                }
            }
        }
        if (viol > 1e-12 * std::max(1.0, sup)) {
            std::ostringstream oss;
            oss << "test functions must vanish on " << where << " (observed "
                << viol << ")";
            throw InvalidTestFunction(oss.str());
        }
    }

    const auto pert_factor = [&](ComponentId comp, double t) -> double {
        if (!pert || !(comp == pert->comp)) return 1.0;
        return 1.0 + pert->amp * (t - t0) / (tau - t0);
    };

    // Time panels. Closed-loop controls interpolate a slowly varying maturity
    // trajectory, so their sample-time kinks are quadratically small in the
    // sample spacing and plain panels resolve them far beyond the residual
    // tolerance. Frozen control tables can be arbitrarily jagged, so their
    // knots do get their own panel boundaries.
    std::vector<double> tknots;
    if (hooks_.frozen) {
        tknots.assign(hooks_.frozen->times.begin(), hooks_.frozen->times.end());
    }
    const double tpanel = 0.25 * (tau - t0);
    const auto time_integral = [&](const std::function<double(double)>& fn) {
        return composite_gl7(fn, t0, tau, tknots, tpanel);
    };

    const double mito = hooks_.disable_mitosis ? 1.0 : 2.0;
    WeakResidual r;

    for (int f = 0; f < p.follicles; ++f) {
        const double ghat = vel_ghat(p, f);
        const double gtil = vel_gtilde(p, f);
        for (int k = 1; k <= p.cycles; ++k) {
            const ComponentId c1{f, k, Phase::p1};
            const ComponentId c2{f, k, Phase::p2};
            const ComponentId c3{f, k, Phase::p3};
            const TestFunction& s2 = psi.get(c2);
            const TestFunction& s3 = psi.get(c3);

            // ---- interior term, phase by phase. -----------------------------
            for (Phase phase : {Phase::p1, Phase::p2, Phase::p3}) {
                const ComponentId comp{f, k, phase};
                const TestFunction& s = psi.get(comp);
                r.interior += time_integral(
                    [&](double t) {
                        const auto c = ctx.sample_exact(f, t);
                        const double U = 1.0 - c.one_minus_U;
                        double a = 0.0;
                        std::function<double(double)> b, lam;
                        switch (phase) {
                            case Phase::p1:
                                a = c.gbar;
                                b = [&](double y) {
                                    const double g = p.gamma_s * y;
                                    return p.tau_h[f] * (c.gp - g) * (g - c.gm) /
                                           p.gamma_s;
                                };
                                lam = [&](double y) {
                                    return hooks_.zero_loss ? 0.0
                                                            : loss_lbar(p, y, U);
                                };
                                break;
                            case Phase::p2:
                                a = ghat;
                                b = [](double) { return 0.0; };
                                lam = [](double) { return 0.0; };
                                break;
                            case Phase::p3:
                                a = gtil;
                                b = [&](double y) {
                                    const double g = p.gamma0() * y + p.gamma_s;
                                    return p.tau_h[f] * (c.gp - g) * (g - c.gm) /
                                           p.gamma0();
                                };
                                lam = [&](double y) {
                                    return hooks_.zero_loss ? 0.0
                                                            : loss_ltilde(p, y, U);
                                };
                                break;
                        }
                        const auto weight = [&](double x, double y) {
                            return s.dt(t, x, y) + a * s.dx(t, x, y) +
                                   b(y) * s.dy(t, x, y) - lam(y) * s.value(t, x, y);
                        };
                        return pert_factor(comp, t) *
                               integrate_component(ctx, datum, comp, t, weight, quad);
                    });

                // ---- initial pairing at t0. ---------------------------------
                r.initial += integrate_component(
                    ctx, datum, comp, t0,
                    [&](double x, double y) { return s.value(t0, x, y); }, quad);
            }

            // Each interface term pairs the upstream front/top trace of the
            // density against the downstream test function on the face where
            // the latter may be nonzero; the matching outflow-face terms
            // vanish identically for admissible test sets.

            // ---- phase-1 front trace against the phase-2 back face. ----------
            r.p1_to_p2 += time_integral([&](double t) {
                const auto c = ctx.sample_exact(f, t);
                const double coupling = p.a1 * ghat * c.gbar / p.tau_g[f];
                std::vector<double> yb = density_y_breaks(ctx, datum, c1, t);
                yb.push_back(p1_separatrix(ctx, f, t, 1.0));
                return pert_factor(c1, t) * coupling *
                       composite_gl7(
                           [&](double y) {
                               const double ph =
                                   eval_density(ctx, datum, c1, t, 1.0, y).value;
                               if (ph == 0.0) return 0.0;
                               return ph * s2.value(t, 0.0, y);
                           },
                           0.0, 1.0, std::move(yb), quad.max_panel);
            });

            // ---- phase-2 front trace against the next-cycle phase-1 back
            // face (mitosis doubling). -----------------------------------------
            if (k < p.cycles) {
                const TestFunction& s1next = psi.get({f, k + 1, Phase::p1});
                r.mitosis += time_integral([&](double t) {
                    return pert_factor(c2, t) * mito * p.tau_g[f] / p.a1 *
                           composite_gl7(
                               [&](double y) {
                                   const double ph =
                                       eval_density(ctx, datum, c2, t, 1.0, y).value;
                                   if (ph == 0.0) return 0.0;
                                   return ph * s1next.value(t, 0.0, y);
                               },
                               0.0, 1.0, density_y_breaks(ctx, datum, c2, t),
                               quad.max_panel);
                });
            }

            // ---- phase-1 top trace against the phase-3 bottom face; the
            // integral runs over the upstream abscissa so the downstream one
            // is x' = (a1/a2) x. ------------------------------------------------
            r.p3_bottom += time_integral([&](double t) {
                const auto c = ctx.sample_exact(f, t);
                const double htil0 = p.tau_h[f] * (c.gp - p.gamma_s) *
                                     (p.gamma_s - c.gm) / p.gamma0();
                const double ratio = p.a1 / p.a2;
                return pert_factor(c1, t) * ratio * htil0 *
                       composite_gl7(
                           [&](double x) {
                               const double ph =
                                   eval_density(ctx, datum, c1, t, x, 1.0).value;
                               if (ph == 0.0) return 0.0;
                               return ph * s3.value(t, ratio * x, 0.0);
                           },
                           0.0, 1.0, density_x_breaks(ctx, datum, c1, t),
                           quad.max_panel);
            });

            // ---- phase-3 front trace against the next-cycle phase-3 back
            // face. --------------------------------------------------------------
            if (k < p.cycles) {
                const TestFunction& s3next = psi.get({f, k + 1, Phase::p3});
                r.p3_back += time_integral([&](double t) {
                    std::vector<double> yb = density_y_breaks(ctx, datum, c3, t);
                    yb.push_back(p3_separatrix_lower(ctx, f, t, 1.0));
                    yb.push_back(p3_separatrix_upper(ctx, f, t, 1.0));
                    return pert_factor(c3, t) * gtil *
                           composite_gl7(
                               [&](double y) {
                                   const double ph =
                                       eval_density(ctx, datum, c3, t, 1.0, y).value;
                                   if (ph == 0.0) return 0.0;
                                   return ph * s3next.value(t, 0.0, y);
                               },
                               0.0, 1.0, std::move(yb), quad.max_panel);
                });
            }
        }
    }
    return r;
}

// ----------------------------------------------------------------------------
// Bounds.
// ----------------------------------------------------------------------------

BoundsReport Solution::check_bounds(int n_samples, std::uint64_t seed) const {
    const ModelParams& p = params_;
    const ContractionConstants& cc = result_.constants;
    BoundsReport rep;
    rep.K = cc.K;
    rep.samples = n_samples;

    // Trajectory bound at every converged sample.
    const double tolM = 1e-9 * std::max(1.0, cc.K);
    rep.min_M = std::numeric_limits<double>::infinity();
    rep.max_M = -std::numeric_limits<double>::infinity();
    for (int f = 0; f < p.follicles; ++f) {
        for (double v : result_.trajectory.samples(f)) {
            rep.min_M = std::min(rep.min_M, v);
            rep.max_M = std::max(rep.max_M, v);
        }
    }
    rep.trajectory_ok = rep.min_M >= -tolM && rep.max_M <= cc.K + tolM;

    // Per-follicle sup-norm bound on the densities.
    const int N = p.cycles;
    std::vector<double> bound(p.follicles, 0.0);
    for (int f = 0; f < p.follicles; ++f) {
        const double r1 = 2.0 * cc.K1 / cc.K2 + p.a1 * cc.K1 / p.tau_g[f];
        const double r2 = 2.0 * cc.K1 / cc.K2 + 2.0 * p.tau_g[f] / (p.a1 * cc.K2);
        double base = 0.0;
        for (int k = 1; k <= N; ++k) {
            base = std::max(base,
                            std::pow(r1, N) * data0_.sup_norm({f, k, Phase::p1}));
            base = std::max(base,
                            std::pow(r2, N) * data0_.sup_norm({f, k, Phase::p2}));
            base = std::max(base, data0_.sup_norm({f, k, Phase::p3}));
        }
        bound[f] = std::exp(2.0 * (N + 1) * p.horizon * cc.K1) * base;
    }
    rep.density_bound = *std::min_element(bound.begin(), bound.end());

    Rng rng(seed);
    rep.density_ok = true;
    for (int i = 0; i < n_samples; ++i) {
        const int f = static_cast<int>(rng.below(static_cast<std::uint64_t>(p.follicles)));
        const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(p.cycles)));
        const Phase phase = phase_from_int(1 + static_cast<int>(rng.below(3)));
        const double t = rng.uniform(0.0, p.horizon);
        const double x = rng.uniform();
        const double y = rng.uniform();
        const double v = eval({f, k, phase}, t, x, y);
        rep.max_density = std::max(rep.max_density, v);
        const double ratio = bound[f] > 0.0
                                 ? v / bound[f]
                                 : (v == 0.0 ? 0.0
                                             : std::numeric_limits<double>::infinity());
        rep.worst_ratio = std::max(rep.worst_ratio, ratio);
        if (v < -1e-12 * std::max(1.0, bound[f]) || ratio > 1.0 + 1e-9) {
            rep.density_ok = false;
        }
    }
    return rep;
}

} // namespace follisim
