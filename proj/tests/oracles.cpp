#include "oracles.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <boost/math/special_functions/erf.hpp>

namespace follisim::testing {

namespace {

mp50 mq(double v) { return mp50(v); }

mp50 saturation_mp(const ModelParams& p, const mp50& u) {
    return 1 - exp(-u / mq(p.u_bar));
}

mp50 global_control_mp(const ModelParams& p, const mp50& M) {
    const mp50 e = exp(mq(p.c) * (M - mq(p.m)));
    return mq(p.U0) + mq(p.Us) + (1 - mq(p.Us)) / (1 + e);
}

mp50 local_gain_mp(const ModelParams& p, const mp50& Mf) {
    const mp50 b = mq(p.b1) + exp(mq(p.b2) * Mf) / mq(p.b3);
    return b < 1 ? b : mp50(1);
}

mp50 maturity_velocity_mp(const ModelParams& p, int f, const mp50& g,
                          const mp50& u) {
    const mp50 q = saturation_mp(p, u);
    return mq(p.tau_h[f]) * (-g * g + (mq(p.c1) * g + mq(p.c2)) * q);
}

} // namespace

double o_global_control(const ModelParams& p, double M) {
    return static_cast<double>(global_control_mp(p, mq(M)));
}

double o_local_gain(const ModelParams& p, double Mf) {
    return static_cast<double>(local_gain_mp(p, mq(Mf)));
}

double o_local_control(const ModelParams& p, double Mf, double M) {
    return static_cast<double>(local_gain_mp(p, mq(Mf)) *
                               global_control_mp(p, mq(M)));
}

double o_age_velocity(const ModelParams& p, int f, double u) {
    return static_cast<double>(mq(p.tau_g[f]) * (1 - mq(p.g1) * (1 - mq(u))));
}

double o_saturation(const ModelParams& p, double u) {
    return static_cast<double>(saturation_mp(p, mq(u)));
}

double o_maturity_velocity(const ModelParams& p, int f, double gamma, double u) {
    return static_cast<double>(maturity_velocity_mp(p, f, mq(gamma), mq(u)));
}

double o_gamma_plus(const ModelParams& p, double u) {
    const mp50 q = saturation_mp(p, mq(u));
    const mp50 b = mq(p.c1) * q;
    return static_cast<double>((b + sqrt(b * b + 4 * mq(p.c2) * q)) / 2);
}

double o_gamma_minus(const ModelParams& p, double u) {
    const mp50 q = saturation_mp(p, mq(u));
    const mp50 b = mq(p.c1) * q;
    return static_cast<double>((b - sqrt(b * b + 4 * mq(p.c2) * q)) / 2);
}

double o_loss_rate(const ModelParams& p, double gamma, double U) {
    const mp50 z = (mq(gamma) - mq(p.gamma_s)) / mq(p.gamma_bar);
    return static_cast<double>(mq(p.K_lambda) * exp(-z * z) * (1 - mq(U)));
}

double o_vel_hbar(const ModelParams& p, int f, double y, double u) {
    return static_cast<double>(
        maturity_velocity_mp(p, f, mq(p.gamma_s) * mq(y), mq(u)) / mq(p.gamma_s));
}

double o_vel_htilde(const ModelParams& p, int f, double y, double u) {
    const mp50 g0 = mq(p.gamma_m) - mq(p.gamma_s);
    return static_cast<double>(
        maturity_velocity_mp(p, f, g0 * mq(y) + mq(p.gamma_s), mq(u)) / g0);
}

double o_maturity_weight(const ModelParams& p, Phase phase, double y) {
    const mp50 gs = mq(p.gamma_s);
    const mp50 g0 = mq(p.gamma_m) - gs;
    switch (phase) {
        case Phase::p1: return static_cast<double>(mq(p.a1) * gs * gs * mq(y));
        case Phase::p2:
            return static_cast<double>((mq(p.a2) - mq(p.a1)) * gs * gs * mq(y));
        case Phase::p3:
            return static_cast<double>(mq(p.a2) * g0 * (g0 * mq(y) + gs));
    }
    throw std::logic_error("unknown phase");
}

double o_derivative(const std::function<mp50(mp50)>& f, double x) {
    // Central difference in 50-digit arithmetic. h = 1e-20 keeps the
    // truncation error ~1e-40 and the cancellation error ~1e-30, both far
    // below double resolution.
    const mp50 h("1e-20");
    const mp50 x0 = mq(x);
    return static_cast<double>((f(x0 + h) - f(x0 - h)) / (2 * h));
}

// ----------------------------------------------------------------------------
// Family masses/moments.
// ----------------------------------------------------------------------------

double o_polybump_line_mass(int p, double lo, double hi) {
    // Integral over [lo, hi] of [4 s (w - s) / w^2]^p ds with s measured from
    // lo: w * 4^p * B(p+1, p+1) = w * 4^p * (p!)^2 / (2p+1)!.
    mp50 beta = 1;
    for (int i = 1; i <= p; ++i) beta *= mq(i);
    beta *= beta;
    mp50 fact = 1;
    for (int i = 1; i <= 2 * p + 1; ++i) fact *= mq(i);
    return static_cast<double>(mq(hi - lo) * pow(mp50(4), p) * beta / fact);
}

double o_polybump_line_moment(int p, double lo, double hi) {
    // The bump is symmetric about the box center.
    return 0.5 * (lo + hi) * o_polybump_line_mass(p, lo, hi);
}

double o_gaussian_line_mass(double s0, double w) {
    const mp50 c = mq(s0), ww = mq(w);
    const mp50 rt_pi = sqrt(boost::math::constants::pi<mp50>());
    return static_cast<double>(
        ww * rt_pi / 2 *
        (boost::math::erf((1 - c) / ww) + boost::math::erf(c / ww)));
}

double o_gaussian_line_moment(double s0, double w) {
    // d/ds exp(-((s-s0)/w)^2) integrates the linear factor exactly:
    // int s g = s0 * int g + w^2/2 * (g(0) - g(1)).
    const mp50 c = mq(s0), ww = mq(w);
    const mp50 g0 = exp(-(c / ww) * (c / ww));
    const mp50 g1 = exp(-((1 - c) / ww) * ((1 - c) / ww));
    return static_cast<double>(mq(o_gaussian_line_mass(s0, w)) * c +
                               ww * ww / 2 * (g0 - g1));
}

// ----------------------------------------------------------------------------
// Integrators.
// ----------------------------------------------------------------------------

double o_rk4(const std::function<double(double, double)>& f, double y0, double t0,
             double t1, int steps) {
    const double h = (t1 - t0) / steps;
    double y = y0;
    double t = t0;
    for (int i = 0; i < steps; ++i) {
        const double k1 = f(t, y);
        const double k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        const double k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        const double k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t = t0 + (i + 1) * h;
    }
    return y;
}

double o_simpson(const std::function<double(double)>& f, double a, double b,
                 int panels) {
    const double h = (b - a) / panels;
    double sum = 0.0;
    for (int i = 0; i < panels; ++i) {
        const double lo = a + i * h;
        sum += h / 6.0 * (f(lo) + 4.0 * f(lo + 0.5 * h) + f(lo + h));
    }
    return sum;
}

// ----------------------------------------------------------------------------
// CSV.
// ----------------------------------------------------------------------------

std::vector<std::vector<std::string>> o_read_csv(std::istream& is) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool in_record = false;
    int ch;
    const auto end_field = [&] {
        row.push_back(field);
        field.clear();
    };
    const auto end_record = [&] {
        end_field();
        rows.push_back(row);
        row.clear();
        in_record = false;
    };
    while ((ch = is.get()) != EOF) {
        const char c = static_cast<char>(ch);
        if (quoted) {
            if (c == '"') {
                if (is.peek() == '"') {
                    field.push_back('"');
                    is.get();
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        in_record = true;
        if (c == '"' && field.empty()) {
            quoted = true;
        } else if (c == ',') {
            end_field();
        } else if (c == '\r') {
            if (is.peek() == '\n') is.get();
            end_record();
        } else if (c == '\n') {
            end_record();
        } else {
            field.push_back(c);
        }
    }
    if (quoted) throw std::runtime_error("unterminated quoted CSV field");
    if (in_record || !field.empty() || !row.empty()) end_record();
    return rows;
}

std::vector<std::vector<std::string>> o_read_csv_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    return o_read_csv(is);
}

std::string o_read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::ostringstream oss;
    oss << is.rdbuf();
    return oss.str();
}

} // namespace follisim::testing
