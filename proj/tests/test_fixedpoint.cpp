#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "follisim/errors.hpp"
#include "follisim/fixedpoint.hpp"
#include "follisim/initial_data.hpp"
#include "follisim/quadrature.hpp"
#include "follisim/solution.hpp"
#include "follisim/trajectory.hpp"
#include "follisim/util.hpp"
#include "oracles.hpp"

using namespace follisim;
namespace ora = follisim::testing;

namespace {

constexpr double kT = 0.005625;

ModelParams default_params() {
    ModelParams p;
    p.horizon = kT;
    return p;
}

InitialData default_data(const ModelParams& p) {
    InitialData data(p);
    data.set({0, 1, Phase::p1}, make_polybump_field(0.05, 3, 0.15, 0.85, 0.1, 0.9));
    data.set({0, 1, Phase::p3}, make_gaussian_field(0.03, 0.4, 0.15, 0.5, 0.15));
    data.set({1, 1, Phase::p1}, make_polybump_field(0.03, 3, 0.2, 0.8, 0.2, 0.8));
    return data;
}

double sup_dist(const std::vector<std::vector<double>>& a,
                const std::vector<std::vector<double>>& b) {
    double d = 0.0;
    for (std::size_t f = 0; f < a.size(); ++f) {
        for (std::size_t j = 0; j < a[f].size(); ++j) {
            d = std::max(d, std::abs(a[f][j] - b[f][j]));
        }
    }
    return d;
}

// A random trajectory in the candidate set: pinned to the data moments at the
// anchor, bounded by [0, K] throughout.
MaturityTrajectory random_candidate(const ModelParams& p,
                                    const std::vector<double>& M0, double K,
                                    double t_hi, Rng& rng) {
    const int samples = 12;
    std::vector<double> times(samples + 1);
    std::vector<std::vector<double>> values(p.follicles,
                                            std::vector<double>(samples + 1));
    for (int i = 0; i <= samples; ++i) times[i] = t_hi * i / samples;
    for (int f = 0; f < p.follicles; ++f) {
        const double amp = rng.uniform(0.0, 0.45) * K;
        const double freq = rng.uniform(1.0, 6.0) / t_hi;
        const double phase = rng.uniform(0.0, 6.28318);
        for (int i = 0; i <= samples; ++i) {
            const double wiggle = i == 0 ? 0.0 : amp * std::sin(freq * times[i] + phase) *
                                                     (times[i] / t_hi);
            values[f][i] = std::clamp(M0[f] + wiggle, 0.0, K);
        }
    }
    return MaturityTrajectory(times, values);
}

} // namespace

TEST_CASE("composite panel rule is exact on aligned polynomials") {
    // Gauss-Legendre with 7 nodes integrates degree <= 13 exactly per panel;
    // a kink is handled exactly when a break lands on it.
    const auto poly = [](double x) {
        double v = 0.0;
        double xx = 1.0;
        for (int k = 0; k <= 13; ++k) {
            v += (0.3 + 0.1 * k) * xx;
            xx *= x;
        }
        return v;
    };
    // Exact antiderivative evaluated in 50-digit arithmetic.
    const double want = [&] {
        ora::mp50 s = 0;
        ora::mp50 b = 1;
        for (int k = 0; k <= 13; ++k) {
            b *= ora::mp50("0.8");
            s += ora::mp50(0.3 + 0.1 * k) * b / (k + 1);
        }
        return static_cast<double>(s);
    }();
    CHECK(std::abs(composite_gl7(poly, 0.0, 0.8, {}, 0.25) - want) <
          1e-15 * std::abs(want));

    const auto kinked = [&](double x) { return x < 0.37 ? poly(x) : 0.0; };
    const double want_kinked = [&] {
        ora::mp50 s = 0;
        ora::mp50 b = 1;
        for (int k = 0; k <= 13; ++k) {
            b *= ora::mp50("0.37");
            s += ora::mp50(0.3 + 0.1 * k) * b / (k + 1);
        }
        return static_cast<double>(s);
    }();
    CHECK(std::abs(composite_gl7(kinked, 0.0, 0.8, {0.37}, 0.25) - want_kinked) <
          1e-14 * std::abs(want_kinked));

    CHECK_THROWS_AS(composite_gl7(poly, 0.0, 1.0, {}, 0.0), ConfigError);
}

TEST_CASE("initial maturity moments match the closed-form oracle") {
    const ModelParams p = default_params();
    const InitialData data = default_data(p);
    QuadratureOptions q;
    q.max_panel = 0.125;
    const std::vector<double> got = data_maturities(p, data, q);
    REQUIRE(got.size() == 2);

    const double g0 = p.gamma_m - p.gamma_s;
    const double m1 = p.a1 * p.gamma_s * p.gamma_s * 0.05 *
                          ora::o_polybump_line_mass(3, 0.15, 0.85) *
                          ora::o_polybump_line_moment(3, 0.1, 0.9) +
                      p.a2 * g0 * 0.03 * ora::o_gaussian_line_mass(0.4, 0.15) *
                          (g0 * ora::o_gaussian_line_moment(0.5, 0.15) +
                           p.gamma_s * ora::o_gaussian_line_mass(0.5, 0.15));
    const double m2 = p.a1 * p.gamma_s * p.gamma_s * 0.03 *
                      ora::o_polybump_line_mass(3, 0.2, 0.8) *
                      ora::o_polybump_line_moment(3, 0.2, 0.8);
    CHECK(std::abs(got[0] - m1) < 1e-10 * m1);
    CHECK(std::abs(got[1] - m2) < 1e-10 * m2);
}

TEST_CASE("solution operator maps the candidate set into itself") {
    const ModelParams p = default_params();
    const InitialData data = default_data(p);
    const ContractionConstants cc = compute_constants(p, data);
    const std::vector<double> M0 = data_maturities(p, data);
    const std::vector<double> times{0.0, cc.delta / 3, 2 * cc.delta / 3, cc.delta};

    Rng rng(301);
    for (int trial = 0; trial < 4; ++trial) {
        const MaturityTrajectory cand =
            random_candidate(p, M0, cc.K, cc.delta, rng);
        const auto out = apply_G(p, data, cand, 0.0, times);
        REQUIRE(static_cast<int>(out.size()) == p.follicles);
        for (int f = 0; f < p.follicles; ++f) {
            CHECK(std::abs(out[f][0] - M0[f]) < 1e-12 * std::max(1.0, cc.K));
            for (double v : out[f]) {
                CHECK(v >= 0.0);
                CHECK(v <= cc.K);
            }
        }
    }
}

TEST_CASE("solution operator contracts on the certified window") {
    const ModelParams p = default_params();
    const InitialData data = default_data(p);
    const ContractionConstants cc = compute_constants(p, data);
    const std::vector<double> M0 = data_maturities(p, data);
    std::vector<double> times;
    for (int j = 0; j <= 6; ++j) times.push_back(cc.delta * j / 6);

    Rng rng(302);
    for (int pair = 0; pair < 5; ++pair) {
        const MaturityTrajectory a = random_candidate(p, M0, cc.K, cc.delta, rng);
        const MaturityTrajectory b = random_candidate(p, M0, cc.K, cc.delta, rng);
        double dist = 0.0;
        for (int f = 0; f < p.follicles; ++f) {
            for (double t : times) {
                dist = std::max(dist, std::abs(a.at(t)[f] - b.at(t)[f]));
            }
        }
        if (dist < 1e-9) continue;
        const auto Ga = apply_G(p, data, a, 0.0, times);
        const auto Gb = apply_G(p, data, b, 0.0, times);
        CHECK(sup_dist(Ga, Gb) <= 0.5 * dist);
    }
}

TEST_CASE("Picard residuals decrease geometrically") {
    const ModelParams p = default_params();
    const InitialData data = default_data(p);
    const ContractionConstants cc = compute_constants(p, data);
    const std::vector<double> M0 = data_maturities(p, data);
    std::vector<double> times;
    for (int j = 0; j <= 8; ++j) times.push_back(cc.delta * j / 8);

    // Independent estimate of the contraction ratio from random pairs.
    Rng rng(303);
    double rho = 0.0;
    for (int pair = 0; pair < 3; ++pair) {
        const MaturityTrajectory a = random_candidate(p, M0, cc.K, cc.delta, rng);
        const MaturityTrajectory b = random_candidate(p, M0, cc.K, cc.delta, rng);
        double dist = 0.0;
        for (int f = 0; f < p.follicles; ++f) {
            for (double t : times) {
                dist = std::max(dist, std::abs(a.at(t)[f] - b.at(t)[f]));
            }
        }
        if (dist < 1e-9) continue;
        rho = std::max(rho, sup_dist(apply_G(p, data, a, 0.0, times),
                                     apply_G(p, data, b, 0.0, times)) /
                                dist);
    }
    REQUIRE(rho > 0.0);

    // Picard iteration from a deliberately wrong constant guess.
    std::vector<std::vector<double>> cur(
        p.follicles, std::vector<double>(times.size(), 0.6 * cc.K));
    for (int f = 0; f < p.follicles; ++f) cur[f][0] = M0[f];
    std::vector<double> residuals;
    for (int it = 0; it < 8; ++it) {
        const auto next = apply_G(p, data, MaturityTrajectory(times, cur), 0.0, times);
        residuals.push_back(sup_dist(next, cur));
        cur = next;
        if (residuals.back() < 1e-13) break;
    }
    REQUIRE(residuals.size() >= 2);
    for (std::size_t i = 0; i + 1 < residuals.size(); ++i) {
        if (residuals[i] < 1e-13) break; // below quadrature noise
        CHECK(residuals[i + 1] <= (rho + 0.05) * residuals[i]);
    }
}

TEST_CASE("window marching converges and reports clean diagnostics") {
    const ModelParams p = default_params();
    const InitialData data = default_data(p);
    const MarchResult mr = march(p, data);

    CHECK(mr.delta_used > 0.0);
    CHECK(mr.resamples == 0); // two certified windows cover the horizon
    CHECK(mr.anchors.size() == 1);
    REQUIRE_FALSE(mr.windows.empty());
    for (const PicardReport& w : mr.windows) {
        CHECK(w.converged);
        CHECK(w.iterations <= 200);
        CHECK(w.residual <= 1e-10 * std::max(1.0, mr.constants.K));
        CHECK(w.observed_ratio <= 0.55);
    }
    CHECK(mr.trajectory.t_lo() == 0.0);
    CHECK(mr.trajectory.t_hi() >= kT - 1e-12);

    // The fixed point is unique: a very different initial guess lands on the
    // same trajectory.
    FixedPointOptions opts;
    opts.guess_ramp = 0.8;
    const MarchResult mr2 = march(p, data, opts);
    double dist = 0.0;
    for (int j = 0; j <= 50; ++j) {
        const double t = kT * j / 50;
        const auto a = mr.trajectory.at(t);
        const auto b = mr2.trajectory.at(t);
        for (int f = 0; f < p.follicles; ++f) {
            dist = std::max(dist, std::abs(a[f] - b[f]));
        }
    }
    CHECK(dist < 1e-9);
}

TEST_CASE("marching throws when the iteration budget is too small") {
    const ModelParams p = default_params();
    const InitialData data = default_data(p);
    FixedPointOptions opts;
    opts.fp_max_iter = 1;
    CHECK_THROWS_AS(march(p, data, opts), NoConvergence);
}

TEST_CASE("window safety factor shrinks the marching window") {
    const ModelParams p = default_params();
    const InitialData data = default_data(p);
    FixedPointOptions opts;
    opts.window_safety = 0.5;
    const MarchResult mr = march(p, data, opts);
    const MarchResult ref = march(p, data);
    CHECK(mr.delta_used <= 0.5 * ref.delta_used * (1.0 + 1e-12));
    for (const PicardReport& w : mr.windows) CHECK(w.converged);
}

TEST_CASE("datum re-anchoring keeps the trajectory consistent") {
    const ModelParams p = default_params();
    const InitialData data = default_data(p);
    FixedPointOptions opts;
    opts.resample_window_cap = 1;
    opts.resample_grid = 64;
    const MarchResult mr = march(p, data, opts);
    CHECK(mr.resamples >= 1);
    CHECK(mr.anchors.size() == static_cast<std::size_t>(mr.resamples) + 1);
    const MarchResult ref = march(p, data);
    double dist = 0.0;
    for (int j = 0; j <= 20; ++j) {
        const double t = kT * j / 20;
        const auto a = mr.trajectory.at(t);
        const auto b = ref.trajectory.at(t);
        for (int f = 0; f < p.follicles; ++f) {
            dist = std::max(dist, std::abs(a[f] - b[f]));
        }
    }
    // The re-anchored datum is a bilinear grid snapshot; its projection error
    // bounds the trajectory drift.
    CHECK(dist < 2e-4);
}

TEST_CASE("total mass is conserved with losses and mitosis disabled") {
    ModelParams p = default_params();
    InitialData data(p);
    // Compact data away from every outflow face; over two windows the
    // support cannot reach them.
    data.set({0, 1, Phase::p1}, make_polybump_field(0.05, 3, 0.3, 0.7, 0.3, 0.7));
    data.set({1, 1, Phase::p3}, make_polybump_field(0.04, 3, 0.3, 0.7, 0.3, 0.7));
    FixedPointOptions opts;
    opts.hooks.zero_loss = true;
    opts.hooks.disable_mitosis = true;
    const MarchResult mr = march(p, data, opts);
    const Solution sol(p, data, mr, opts.hooks);

    QuadratureOptions q;
    q.max_panel = 0.125;
    const auto total = [&](double t) {
        double sum = 0.0;
        for (int ci = 0; ci < component_count(p); ++ci) {
            const ComponentId id = component_from_index(p, ci);
            sum += component_mass(sol.context_at(t), sol.datum_at(t), id, t, q);
        }
        return sum;
    };
    const double m0 = total(0.0);
    REQUIRE(m0 > 0.0);
    for (double t : {0.5 * kT, kT}) {
        CHECK(std::abs(total(t) - m0) < 1e-6 * m0);
    }
}
