#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "follisim/characteristics.hpp"
#include "follisim/errors.hpp"
#include "follisim/initial_data.hpp"
#include "follisim/model.hpp"
#include "follisim/trajectory.hpp"
#include "follisim/util.hpp"
#include "oracles.hpp"

using namespace follisim;
namespace ora = follisim::testing;

namespace {

constexpr double kT = 0.005625;

// A gently varying maturity history so the control-dependent closures are
// genuinely time dependent; the tests that need an oracle re-derive the
// controls from these same samples by linear interpolation.
struct Fixture {
    ModelParams p;
    std::vector<double> times;
    std::vector<std::vector<double>> values;
    CharContext ctx;

    Fixture() : p(make_params()), ctx(make_ctx(p, times, values)) {}

    static ModelParams make_params() {
        ModelParams p;
        p.horizon = kT;
        return p;
    }

    CharContext make_ctx(const ModelParams& pp, std::vector<double>& ts,
                         std::vector<std::vector<double>>& vs) {
        const int samples = 16;
        ts.resize(samples + 1);
        vs.assign(pp.follicles, std::vector<double>(samples + 1));
        for (int i = 0; i <= samples; ++i) {
            const double t = kT * i / samples;
            ts[i] = t;
            vs[0][i] = 0.010 + 0.08 * t;
            vs[1][i] = 0.002 + 0.05 * t;
        }
        MaturityTrajectory traj(ts, vs);
        ControlCurves curves(pp, std::move(traj), Hooks{});
        return CharContext(pp, std::move(curves), 0.0, kT, kT / samples);
    }

    // Controls recomputed from the raw samples, bypassing ControlCurves.
    double u_of(int f, double t) const {
        const double Mf = interp(values[f], t);
        double M = 0.0;
        for (int g = 0; g < p.follicles; ++g) M += interp(values[g], t);
        return ora::o_local_control(p, Mf, M);
    }

    double interp(const std::vector<double>& v, double t) const {
        const auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return v.front();
        if (it == times.end()) return v.back();
        const std::size_t i = static_cast<std::size_t>(it - times.begin());
        const double w = (t - times[i - 1]) / (times[i] - times[i - 1]);
        return v[i - 1] + w * (v[i] - v[i - 1]);
    }
};

int stage_of(Phase ph) {
    switch (ph) {
        case Phase::p1: return 1;
        case Phase::p2: return 2;
        case Phase::p3: return 3;
    }
    return 0;
}

} // namespace

TEST_CASE("maturity flow matches a 10x-finer independent RK4") {
    Fixture fx;
    for (int f = 0; f < fx.p.follicles; ++f) {
        for (Phase ph : {Phase::p1, Phase::p3}) {
            for (double y0 : {0.12, 0.4, 0.83}) {
                const double got =
                    maturity_image(fx.ctx, ph, f, y0, 0.25 * kT, 0.9 * kT);
                const double want = ora::o_rk4(
                    [&](double t, double y) {
                        const double u = fx.u_of(f, t);
                        return ph == Phase::p1 ? ora::o_vel_hbar(fx.p, f, y, u)
                                               : ora::o_vel_htilde(fx.p, f, y, u);
                    },
                    y0, 0.25 * kT, 0.9 * kT, 20000);
                CHECK(std::abs(got - want) < 1e-10);
            }
        }
    }
}

TEST_CASE("phase-1 age shift matches the control integral") {
    Fixture fx;
    for (int f = 0; f < fx.p.follicles; ++f) {
        for (double t : {0.3 * kT, 0.7 * kT, kT}) {
            const double want = ora::o_simpson(
                [&](double s) {
                    return ora::o_age_velocity(fx.p, f, fx.u_of(f, s)) / fx.p.a1;
                },
                0.0, t, 20000);
            CHECK(std::abs(p1_shift(fx.ctx, f, t) - want) < 1e-10);
            CHECK(p1_front(fx.ctx, f, t) == std::min(want, 1.0));
        }

        // The constant-velocity fronts are exact algebra.
        for (double t : {0.2 * kT, 0.8 * kT}) {
            CHECK(p2_front(fx.ctx, f, t) ==
                  std::min(vel_ghat(fx.p, f) * t, 1.0));
            CHECK(p3_front(fx.ctx, f, t) ==
                  std::min(vel_gtilde(fx.p, f) * t, 1.0));
        }
    }
}

TEST_CASE("flow composition is a semigroup") {
    Fixture fx;
    Rng rng(201);
    for (int i = 0; i < 60; ++i) {
        const int f = static_cast<int>(rng.below(fx.p.follicles));
        const Phase ph = rng.below(2) == 0 ? Phase::p1 : Phase::p3;
        const double y0 = rng.uniform(0.1, 0.9);
        double t1 = rng.uniform(0.0, kT);
        double t2 = rng.uniform(0.0, kT);
        double t3 = rng.uniform(0.0, kT);
        if (t1 > t2) std::swap(t1, t2);
        if (t2 > t3) std::swap(t2, t3);
        if (t1 > t2) std::swap(t1, t2);
        const double mid = maturity_image(fx.ctx, ph, f, y0, t1, t2);
        const double two = maturity_image(fx.ctx, ph, f, mid, t2, t3);
        const double one = maturity_image(fx.ctx, ph, f, y0, t1, t3);
        CHECK(std::abs(two - one) < 1e-10);
    }
}

TEST_CASE("backward flow inverts forward flow") {
    Fixture fx;
    Rng rng(202);
    for (int i = 0; i < 60; ++i) {
        const int f = static_cast<int>(rng.below(fx.p.follicles));
        const Phase ph = rng.below(2) == 0 ? Phase::p1 : Phase::p3;
        const double y0 = rng.uniform(0.1, 0.9);
        const double t1 = rng.uniform(0.0, 0.5 * kT);
        const double t2 = rng.uniform(0.5 * kT, kT);
        const double fwd = maturity_image(fx.ctx, ph, f, y0, t1, t2);
        const double back = maturity_image(fx.ctx, ph, f, fwd, t2, t1);
        CHECK(std::abs(back - y0) < 1e-9);

        // Full (x, y) flow round trip, conditional on staying inside.
        const FlowPoint start{t1, rng.uniform(0.1, 0.9), y0};
        const FlowResult out = flow(fx.ctx, ph, f, start, t2);
        if (out.exit == Face::none) {
            const FlowResult ret = flow(fx.ctx, ph, f, out.end, t1);
            CHECK(ret.exit == Face::none);
            CHECK(std::abs(ret.end.x - start.x) < 1e-9);
            CHECK(std::abs(ret.end.y - start.y) < 1e-9);
        }
    }
}

TEST_CASE("face crossings land exactly on the face") {
    Fixture fx;
    Rng rng(203);
    int crossings = 0;
    for (int i = 0; i < 200; ++i) {
        const int f = static_cast<int>(rng.below(fx.p.follicles));
        // Start near the front so the age coordinate exits within the horizon.
        const FlowPoint start{0.0, rng.uniform(0.996, 0.9999),
                              rng.uniform(0.2, 0.8)};
        const FlowResult out = flow(fx.ctx, Phase::p1, f, start, kT);
        if (out.exit == Face::age_front) {
            ++crossings;
            CHECK(out.end.x == 1.0);
            CHECK(out.end.t > 0.0);
            CHECK(out.end.t < kT);
            // The crossing time matches the age-shift identity.
            CHECK(std::abs(p1_shift(fx.ctx, f, out.end.t) - p1_shift(fx.ctx, f, 0.0) -
                           (1.0 - start.x)) < 1e-9);
        }
    }
    CHECK(crossings > 50);
}

TEST_CASE("backward chains respect the hop budget and decrease") {
    ModelParams p;
    p.horizon = kT;
    InitialData data(p);
    data.set({0, 1, Phase::p1}, make_polybump_field(0.05, 3, 0.15, 0.85, 0.1, 0.9));
    data.set({0, 1, Phase::p3}, make_gaussian_field(0.03, 0.4, 0.15, 0.5, 0.15));
    data.set({1, 1, Phase::p1}, make_polybump_field(0.03, 3, 0.2, 0.8, 0.2, 0.8));
    MaturityTrajectory traj =
        MaturityTrajectory::constant(0.0, kT, 16, data_maturities(p, data));
    ControlCurves curves(p, std::move(traj), Hooks{});
    CharContext ctx(p, std::move(curves), 0.0, kT, kT / 16.0);

    Rng rng(204);
    for (int i = 0; i < 500; ++i) {
        const ComponentId comp =
            component_from_index(p, static_cast<int>(rng.below(component_count(p))));
        const double t = rng.uniform(0.0, kT);
        const double x = rng.uniform(0.0, 1.0);
        const double y = rng.uniform(0.0, 1.0);
        const CharChain chain = backtrace(ctx, comp, t, x, y);

        CHECK(chain.segments.size() >= 1);
        CHECK(chain.segments.size() <= static_cast<std::size_t>(2 * p.cycles));
        CHECK(chain.damping() > 0.0);
        CHECK(chain.boundary_product() > 0.0);
        for (std::size_t s = 0; s < chain.segments.size(); ++s) {
            CHECK(chain.segments[s].boundary_factor > 0.0);
            if (s + 1 < chain.segments.size()) {
                const auto& a = chain.segments[s];
                const auto& b = chain.segments[s + 1];
                const int ka = a.cycle * 4 + stage_of(a.phase);
                const int kb = b.cycle * 4 + stage_of(b.phase);
                CHECK(ka > kb);
            }
        }

        // Region classification agrees with how the trace actually entered
        // the terminal square.
        const RegionLabel label = classify(ctx, comp, t, x, y);
        const Face entry = chain.segments.front().entry_face;
        switch (label) {
            case RegionLabel::p1_interior:
            case RegionLabel::p2_interior:
            case RegionLabel::p3_interior:
                CHECK(entry == Face::none);
                CHECK_FALSE(chain.zero);
                CHECK(chain.anchor == comp);
                break;
            case RegionLabel::p1_influx:
            case RegionLabel::p2_influx:
            case RegionLabel::p3_back_influx:
                CHECK(entry == Face::age_back);
                break;
            case RegionLabel::p1_zero:
                CHECK(entry == Face::mat_bottom);
                CHECK(chain.zero);
                break;
            case RegionLabel::p3_bottom_influx:
                CHECK(entry == Face::mat_bottom);
                break;
            case RegionLabel::p3_zero:
                CHECK(entry == Face::mat_top);
                CHECK(chain.zero);
                break;
        }
    }
}

TEST_CASE("separatrix heights split the square consistently") {
    Fixture fx;
    for (int f = 0; f < fx.p.follicles; ++f) {
        for (double t : {0.4 * kT, 0.9 * kT}) {
            for (double x : {0.3, 0.9}) {
                const double s1 = p1_separatrix(fx.ctx, f, t, x);
                CHECK(s1 >= 0.0);
                CHECK(s1 <= 1.0);
                const double lo = p3_separatrix_lower(fx.ctx, f, t, x);
                const double hi = p3_separatrix_upper(fx.ctx, f, t, x);
                CHECK(lo >= 0.0);
                CHECK(lo <= hi + 1e-15);
                CHECK(hi <= 1.0);
            }
        }
    }
}
