#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "follisim/errors.hpp"
#include "follisim/fixedpoint.hpp"
#include "follisim/initial_data.hpp"
#include "follisim/model.hpp"
#include "follisim/util.hpp"
#include "oracles.hpp"

using namespace follisim;
namespace ora = follisim::testing;

namespace {

double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

} // namespace

TEST_CASE("closures match 50-digit reference on random inputs") {
    ModelParams p;
    Rng rng(101);
    for (int i = 0; i < 200; ++i) {
        const double M = rng.uniform(0.0, 0.5);
        const double Mf = rng.uniform(0.0, 0.5);
        const double u = rng.uniform(1e-3, 1.5);
        const double g = rng.uniform(0.0, p.gamma_m);
        const double U = rng.uniform(0.0, 1.0);
        const double y = rng.uniform(0.0, 1.0);
        const int f = static_cast<int>(rng.below(p.follicles));

        CHECK(rel_err(global_control(p, M, 0.0), ora::o_global_control(p, M)) <
              1e-15);
        CHECK(rel_err(local_gain(p, Mf), ora::o_local_gain(p, Mf)) < 1e-15);
        CHECK(rel_err(local_control(p, Mf, M, 0.0),
                      ora::o_local_control(p, Mf, M)) < 1e-15);
        CHECK(rel_err(age_velocity(p, f, u), ora::o_age_velocity(p, f, u)) <
              1e-15);
        CHECK(rel_err(saturation(p, u), ora::o_saturation(p, u)) < 1e-15);
        CHECK(rel_err(maturity_velocity(p, f, g, u),
                      ora::o_maturity_velocity(p, f, g, u)) < 2e-15);
        CHECK(rel_err(gamma_plus(p, u), ora::o_gamma_plus(p, u)) < 2e-15);
        CHECK(rel_err(gamma_minus(p, u), ora::o_gamma_minus(p, u)) < 2e-15);
        CHECK(rel_err(loss_rate(p, g, U), ora::o_loss_rate(p, g, U)) < 1e-15);
        CHECK(rel_err(vel_hbar(p, f, y, u), ora::o_vel_hbar(p, f, y, u)) <
              2e-15);
        CHECK(rel_err(vel_htilde(p, f, y, u), ora::o_vel_htilde(p, f, y, u)) <
              2e-15);
        CHECK(rel_err(maturity_weight(p, Phase::p1, y),
                      ora::o_maturity_weight(p, Phase::p1, y)) < 1e-15);
        CHECK(rel_err(maturity_weight(p, Phase::p2, y),
                      ora::o_maturity_weight(p, Phase::p2, y)) < 1e-15);
        CHECK(rel_err(maturity_weight(p, Phase::p3, y),
                      ora::o_maturity_weight(p, Phase::p3, y)) < 1e-15);
    }
}

TEST_CASE("analytic derivatives match 50-digit finite differences") {
    ModelParams p;
    Rng rng(102);
    for (int i = 0; i < 50; ++i) {
        const double M = rng.uniform(0.0, 0.5);
        const double u = rng.uniform(1e-2, 1.5);
        const double g = rng.uniform(0.0, p.gamma_m);
        const double U = rng.uniform(0.0, 1.0);
        const int f = static_cast<int>(rng.below(p.follicles));

        CHECK(rel_err(global_control_dM(p, M, 0.0),
                      ora::o_derivative(
                          [&](ora::mp50 x) {
                              const ora::mp50 e =
                                  exp(ora::mp50(p.c) * (x - ora::mp50(p.m)));
                              return ora::mp50(p.U0) + ora::mp50(p.Us) +
                                     (1 - ora::mp50(p.Us)) / (1 + e);
                          },
                          M)) < 1e-13);
        // The local gain saturates at 1; differentiate only clearly inside.
        if (local_gain(p, M) < 0.999) {
            CHECK(rel_err(local_gain_dMf(p, M),
                          ora::o_derivative(
                              [&](ora::mp50 x) {
                                  return ora::mp50(p.b1) +
                                         exp(ora::mp50(p.b2) * x) /
                                             ora::mp50(p.b3);
                              },
                              M)) < 1e-13);
        }
        CHECK(rel_err(saturation_du(p, u),
                      ora::o_derivative(
                          [&](ora::mp50 x) {
                              return 1 - exp(-x / ora::mp50(p.u_bar));
                          },
                          u)) < 1e-13);
        CHECK(rel_err(maturity_velocity_dgamma(p, f, g, u),
                      ora::o_derivative(
                          [&](ora::mp50 x) {
                              const ora::mp50 q =
                                  1 - exp(-ora::mp50(u) / ora::mp50(p.u_bar));
                              return ora::mp50(p.tau_h[f]) *
                                     (-x * x +
                                      (ora::mp50(p.c1) * x + ora::mp50(p.c2)) * q);
                          },
                          g)) < 1e-13);
        CHECK(rel_err(maturity_velocity_du(p, f, g, u),
                      ora::o_derivative(
                          [&](ora::mp50 x) {
                              const ora::mp50 q =
                                  1 - exp(-x / ora::mp50(p.u_bar));
                              return ora::mp50(p.tau_h[f]) *
                                     (-ora::mp50(g) * ora::mp50(g) +
                                      (ora::mp50(p.c1) * ora::mp50(g) +
                                       ora::mp50(p.c2)) *
                                          q);
                          },
                          u)) < 1e-13);
        CHECK(rel_err(loss_rate_dgamma(p, g, U),
                      ora::o_derivative(
                          [&](ora::mp50 x) {
                              const ora::mp50 z = (x - ora::mp50(p.gamma_s)) /
                                                  ora::mp50(p.gamma_bar);
                              return ora::mp50(p.K_lambda) * exp(-z * z) *
                                     (1 - ora::mp50(U));
                          },
                          g)) < 1e-13);
    }
}

TEST_CASE("gamma_plus is nondecreasing in the local control") {
    ModelParams p;
    double prev = gamma_plus(p, 0.0);
    CHECK(prev == doctest::Approx(0.0).epsilon(1e-14));
    for (int i = 1; i <= 1000; ++i) {
        const double u = 5.0 * i / 1000.0;
        const double gp = gamma_plus(p, u);
        CHECK(gp >= prev - 1e-15);
        prev = gp;
    }
}

TEST_CASE("phase-1 maturity velocity is positive below the interface") {
    ModelParams p;
    for (int iu = 1; iu <= 100; ++iu) {
        const double u = 3.0 * iu / 100.0;
        if (!(gamma_plus(p, u) > p.gamma_s)) continue;
        for (int iy = 0; iy <= 100; ++iy) {
            const double y = iy / 100.0;
            CHECK(vel_hbar(p, 0, y, u) > 0.0);
            CHECK(vel_hbar(p, 1, y, u) > 0.0);
        }
    }
}

TEST_CASE("loss rates are nonnegative and vanish exactly at full support") {
    ModelParams p;
    Rng rng(103);
    for (int i = 0; i < 200; ++i) {
        const double g = rng.uniform(0.0, p.gamma_m);
        const double U = rng.uniform(0.0, 0.999);
        CHECK(loss_rate(p, g, U) > 0.0);
        CHECK(loss_rate(p, g, 1.0) == 0.0);
        const double y = rng.uniform(0.0, 1.0);
        CHECK(loss_lbar(p, y, U) >= 0.0);
        CHECK(loss_ltilde(p, y, U) >= 0.0);
        CHECK(loss_lbar(p, y, 1.0) == 0.0);
        CHECK(loss_ltilde(p, y, 1.0) == 0.0);
    }
}

TEST_CASE("rescaling round trips to 1e-14") {
    ModelParams p;
    p.a1 = 0.7;
    p.a2 = 1.9;
    p.gamma_s = 1.3;
    p.gamma_m = 2.2;
    p.validate();
    Rng rng(104);
    for (int i = 0; i < 500; ++i) {
        const Phase ph = phase_from_int(1 + static_cast<int>(rng.below(3)));
        const int k = 1 + static_cast<int>(rng.below(p.cycles));
        const UnitPoint up{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0)};
        const OrigPoint op = from_unit(p, ph, k, up);
        const UnitPoint back = to_unit(p, ph, k, op);
        CHECK(std::abs(back.x - up.x) < 1e-14);
        CHECK(std::abs(back.y - up.y) < 1e-14);
        const OrigPoint fwd = from_unit(p, ph, k, back);
        CHECK(std::abs(fwd.age - op.age) < 1e-13 * std::max(1.0, std::abs(op.age)));
        CHECK(std::abs(fwd.gamma - op.gamma) <
              1e-13 * std::max(1.0, std::abs(op.gamma)));
    }
    CHECK_THROWS_AS(from_unit(p, Phase::p1, 0, UnitPoint{0.5, 0.5}), OutOfDomain);
    CHECK_THROWS_AS(to_unit(p, Phase::p1, 1, OrigPoint{p.a1 * 2.0, 0.5}),
                    OutOfDomain);
}

TEST_CASE("both constant age velocities equal the original speed") {
    // ghat * (a2 - a1) and gtilde * a2 both recover tau_g: with the default
    // power-of-two widths the identity is bitwise, generally it holds to a
    // rounding error.
    ModelParams p;
    for (int f = 0; f < p.follicles; ++f) {
        CHECK(vel_ghat(p, f) * (p.a2 - p.a1) == p.tau_g[f]);
        CHECK(vel_gtilde(p, f) * p.a2 == p.tau_g[f]);
    }
    ModelParams q;
    q.a1 = 0.77;
    q.a2 = 1.23;
    q.validate();
    for (int f = 0; f < q.follicles; ++f) {
        CHECK(rel_err(vel_ghat(q, f) * (q.a2 - q.a1), q.tau_g[f]) < 1e-15);
        CHECK(rel_err(vel_gtilde(q, f) * q.a2, q.tau_g[f]) < 1e-15);
    }
}

TEST_CASE("structural sign hypotheses reject a collapsed maturity root") {
    ModelParams p;
    CHECK_NOTHROW(check_velocity_signs(p, 0, 0.4));
    ModelParams bad;
    bad.c1 = 0.01;
    bad.c2 = 0.01;
    bad.validate(); // well-formed parameters, but gamma_plus(u) < gamma_s
    CHECK(gamma_plus(bad, 1.0) < bad.gamma_s);
    CHECK_THROWS_AS(check_velocity_signs(bad, 0, 1.0), AssumptionViolated);
    CHECK_THROWS_AS(check_velocity_signs(p, 0, 0.0), AssumptionViolated);
}

TEST_CASE("parameter validation rejects malformed inputs") {
    ModelParams p;
    p.a2 = p.a1;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    ModelParams q;
    q.tau_g = {1.0};
    CHECK_THROWS_AS(q.validate(), ConfigError);
    ModelParams r;
    r.horizon = 0.0;
    CHECK_THROWS_AS(r.validate(), ConfigError);
    CHECK_THROWS_AS(phase_from_int(4), ConfigError);
}

TEST_CASE("component indexing round trips and tags are stable") {
    ModelParams p;
    CHECK(component_count(p) == p.follicles * p.cycles * 3);
    for (int i = 0; i < component_count(p); ++i) {
        const ComponentId id = component_from_index(p, i);
        CHECK(component_index(p, id) == i);
    }
    CHECK(component_tag({0, 1, Phase::p1}) == "f1.c1.p1");
    CHECK(component_tag({1, 2, Phase::p3}) == "f2.c2.p3");
}

TEST_CASE("certified constants satisfy their defining inequalities") {
    ModelParams p;
    p.horizon = 0.005625;
    InitialData data(p);
    data.set({0, 1, Phase::p1}, make_polybump_field(0.05, 3, 0.15, 0.85, 0.1, 0.9));
    data.set({0, 1, Phase::p3}, make_gaussian_field(0.03, 0.4, 0.15, 0.5, 0.15));
    data.set({1, 1, Phase::p1}, make_polybump_field(0.03, 3, 0.2, 0.8, 0.2, 0.8));
    const ContractionConstants cc = compute_constants(p, data);

    CHECK(cc.K > 0.0);
    CHECK(cc.K1 > 0.0);
    CHECK(cc.K2 > 0.0);
    CHECK(cc.delta > 0.0);

    // The window is the certified seed value halved until the contraction
    // certificate holds; check both the certificate and its maximality.
    std::vector<double> C1, C2;
    lipschitz_coefficients(p, data, cc.K1, cc.K2, cc.delta, C1, C2);
    double worst = 0.0;
    for (int f = 0; f < p.follicles; ++f) worst = std::max(worst, C1[f] + C2[f]);
    CHECK(p.follicles * cc.delta * worst <= 0.5 + 1e-12);

    const double delta2 = 2.0 * cc.delta;
    const double seed = 0.9 * std::min(0.5 / cc.K1, cc.T);
    if (delta2 < seed) {
        lipschitz_coefficients(p, data, cc.K1, cc.K2, delta2, C1, C2);
        worst = 0.0;
        for (int f = 0; f < p.follicles; ++f) {
            worst = std::max(worst, C1[f] + C2[f]);
        }
        CHECK(p.follicles * delta2 * worst > 0.5);
    }

    // K dominates the initial maturities it was computed from.
    const std::vector<double> M0 = data_maturities(p, data);
    for (double m : M0) CHECK(m <= cc.K);

    // The Lipschitz coefficients grow with the window length.
    lipschitz_coefficients(p, data, cc.K1, cc.K2, cc.delta, C1, C2);
    std::vector<double> C1b, C2b;
    lipschitz_coefficients(p, data, cc.K1, cc.K2, 0.5 * cc.delta, C1b, C2b);
    for (int f = 0; f < p.follicles; ++f) {
        CHECK(C1b[f] <= C1[f]);
        CHECK(C2b[f] <= C2[f]);
        CHECK(C1b[f] > 0.0);
        CHECK(C2b[f] > 0.0);
    }
}
