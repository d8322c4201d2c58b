#include "follisim/initial_data.hpp"

#include <cmath>
#include <stdexcept>

namespace follisim {

namespace {

class ZeroField final : public ComponentField {
public:
    double eval(double, double) const override { return 0.0; }
    double l1_norm() const override { return 0.0; }
    double sup_norm() const override { return 0.0; }
    bool is_zero() const override { return true; }
    bool is_nonnegative() const override { return true; }
};

// Integral of exp(-((s-s0)/w)^2) over [0,1].
double gaussian_line_mass(double s0, double w) {
    const double sqrt_pi = 1.7724538509055160273;
    return 0.5 * w * sqrt_pi * (std::erf((1.0 - s0) / w) + std::erf(s0 / w));
}

// Max of exp(-((s-s0)/w)^2) over [0,1].
double gaussian_line_peak(double s0, double w) {
    const double s = s0 < 0.0 ? 0.0 : (s0 > 1.0 ? 1.0 : s0);
    const double z = (s - s0) / w;
    return std::exp(-z * z);
}

class GaussianField final : public ComponentField {
public:
    GaussianField(double amp, double x0, double sx, double y0, double sy)
        : amp_(amp), x0_(x0), sx_(sx), y0_(y0), sy_(sy) {
        if (!(sx > 0.0) || !(sy > 0.0)) {
            throw ConfigError("gaussian field widths must be positive");
        }
    }

    double eval(double x, double y) const override {
        const double zx = (x - x0_) / sx_;
        const double zy = (y - y0_) / sy_;
        return amp_ * std::exp(-zx * zx - zy * zy);
    }

    double l1_norm() const override {
        return std::abs(amp_) * gaussian_line_mass(x0_, sx_) * gaussian_line_mass(y0_, sy_);
    }

    double sup_norm() const override {
        return std::abs(amp_) * gaussian_line_peak(x0_, sx_) * gaussian_line_peak(y0_, sy_);
    }

    bool is_nonnegative() const override { return amp_ >= 0.0; }

private:
    double amp_, x0_, sx_, y0_, sy_;
};

class IndicatorField final : public ComponentField {
public:
    IndicatorField(double amp, double xlo, double xhi, double ylo, double yhi)
        : amp_(amp), xlo_(xlo), xhi_(xhi), ylo_(ylo), yhi_(yhi) {
        if (!(xhi > xlo) || !(yhi > ylo)) {
            throw ConfigError("indicator field box must have positive extent");
        }
    }

    double eval(double x, double y) const override {
        return (x >= xlo_ && x <= xhi_ && y >= ylo_ && y <= yhi_) ? amp_ : 0.0;
    }

    double l1_norm() const override {
        const double xw = std::min(xhi_, 1.0) - std::max(xlo_, 0.0);
        const double yw = std::min(yhi_, 1.0) - std::max(ylo_, 0.0);
        if (xw <= 0.0 || yw <= 0.0) return 0.0;
        return std::abs(amp_) * xw * yw;
    }

    double sup_norm() const override { return std::abs(amp_); }

    bool is_nonnegative() const override { return amp_ >= 0.0; }

    std::vector<double> x_breaks() const override { return {xlo_, xhi_}; }
    std::vector<double> y_breaks() const override { return {ylo_, yhi_}; }

private:
    double amp_, xlo_, xhi_, ylo_, yhi_;
};

// Integral over its support of the 1-D bump B^p, B(s) = 4 (s-lo)(hi-s)/(hi-lo)^2:
// (hi-lo) * 4^p * p!^2 / (2p+1)!.
double bump_line_mass(int p, double lo, double hi) {
    double v = hi - lo;
    for (int i = 1; i <= p; ++i) v *= 4.0 * i * i / ((2.0 * i) * (2.0 * i + 1.0));
    return v;
}

class PolyBumpField final : public ComponentField {
public:
    PolyBumpField(double amp, int p, double xlo, double xhi, double ylo, double yhi)
        : amp_(amp), p_(p), xlo_(xlo), xhi_(xhi), ylo_(ylo), yhi_(yhi) {
        if (p < 1) throw ConfigError("polybump exponent must be at least 1");
        if (!(xhi > xlo) || !(yhi > ylo)) {
            throw ConfigError("polybump field box must have positive extent");
        }
        if (xlo < 0.0 || xhi > 1.0 || ylo < 0.0 || yhi > 1.0) {
            throw ConfigError("polybump support must lie inside [0,1]^2");
        }
    }

    double eval(double x, double y) const override {
        return amp_ * line(x, xlo_, xhi_) * line(y, ylo_, yhi_);
    }

    double l1_norm() const override {
        return std::abs(amp_) * bump_line_mass(p_, xlo_, xhi_) * bump_line_mass(p_, ylo_, yhi_);
    }

    double sup_norm() const override { return std::abs(amp_); }

    bool is_nonnegative() const override { return amp_ >= 0.0; }

    std::vector<double> x_breaks() const override { return {xlo_, xhi_}; }
    std::vector<double> y_breaks() const override { return {ylo_, yhi_}; }

private:
    double line(double s, double lo, double hi) const {
        if (s <= lo || s >= hi) return 0.0;
        const double w = hi - lo;
        const double b = 4.0 * (s - lo) * (hi - s) / (w * w);
        double v = 1.0;
        for (int i = 0; i < p_; ++i) v *= b;
        return v;
    }

    double amp_;
    int p_;
    double xlo_, xhi_, ylo_, yhi_;
};

class SumField final : public ComponentField {
public:
    explicit SumField(std::vector<std::pair<double, FieldPtr>> terms)
        : terms_(std::move(terms)) {
        for (const auto& [coef, field] : terms_) {
            (void)coef;
            if (!field) throw ConfigError("sum field has a null term");
        }
    }

    double eval(double x, double y) const override {
        double v = 0.0;
        for (const auto& [coef, field] : terms_) v += coef * field->eval(x, y);
        return v;
    }

    double l1_norm() const override {
        double v = 0.0;
        for (const auto& [coef, field] : terms_) v += std::abs(coef) * field->l1_norm();
        return v;
    }

    double sup_norm() const override {
        double v = 0.0;
        for (const auto& [coef, field] : terms_) v += std::abs(coef) * field->sup_norm();
        return v;
    }

    bool is_zero() const override {
        for (const auto& [coef, field] : terms_) {
            if (coef != 0.0 && !field->is_zero()) return false;
        }
        return true;
    }

    bool is_nonnegative() const override {
        for (const auto& [coef, field] : terms_) {
            if (field->is_zero() || coef == 0.0) continue;
            if (coef < 0.0 || !field->is_nonnegative()) return false;
        }
        return true;
    }

    std::vector<double> x_breaks() const override {
        std::vector<double> out;
        for (const auto& [coef, field] : terms_) {
            if (coef == 0.0) continue;
            const auto b = field->x_breaks();
            out.insert(out.end(), b.begin(), b.end());
        }
        return out;
    }

    std::vector<double> y_breaks() const override {
        std::vector<double> out;
        for (const auto& [coef, field] : terms_) {
            if (coef == 0.0) continue;
            const auto b = field->y_breaks();
            out.insert(out.end(), b.begin(), b.end());
        }
        return out;
    }

private:
    std::vector<std::pair<double, FieldPtr>> terms_;
};

class GridField final : public ComponentField {
public:
    GridField(int m, std::vector<double> values) : m_(m), values_(std::move(values)) {
        if (m < 1) throw ConfigError("grid field needs at least one cell per axis");
        const std::size_t expected = static_cast<std::size_t>(m + 1) * (m + 1);
        if (values_.size() != expected) {
            throw ConfigError("grid field expects " + std::to_string(expected) +
                              " node values, got " + std::to_string(values_.size()));
        }
    }

    double eval(double x, double y) const override {
        const double cx = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
        const double cy = y < 0.0 ? 0.0 : (y > 1.0 ? 1.0 : y);
        double fx = cx * m_;
        double fy = cy * m_;
        int i = static_cast<int>(fx);
        int j = static_cast<int>(fy);
        if (i >= m_) i = m_ - 1;
        if (j >= m_) j = m_ - 1;
        const double wx = fx - i;
        const double wy = fy - j;
        const double v00 = node(i, j), v10 = node(i + 1, j);
        const double v01 = node(i, j + 1), v11 = node(i + 1, j + 1);
        return (1.0 - wy) * ((1.0 - wx) * v00 + wx * v10) +
               wy * ((1.0 - wx) * v01 + wx * v11);
    }

    double l1_norm() const override {
        // Exact for nonnegative nodes: the integral of the bilinear interpolant
        // over a cell is the mean of its corners times the cell area. For
        // mixed-sign nodes this is an upper bound on the integral of |field|.
        const double cell = 1.0 / (static_cast<double>(m_) * m_);
        double total = 0.0;
        for (int j = 0; j < m_; ++j) {
            for (int i = 0; i < m_; ++i) {
                total += 0.25 * (std::abs(node(i, j)) + std::abs(node(i + 1, j)) +
                                 std::abs(node(i, j + 1)) + std::abs(node(i + 1, j + 1)));
            }
        }
        return total * cell;
    }

    double sup_norm() const override {
        double v = 0.0;
        for (double n : values_) v = std::max(v, std::abs(n));
        return v;
    }

    bool is_nonnegative() const override {
        for (double n : values_) {
            if (n < 0.0) return false;
        }
        return true;
    }

private:
    double node(int i, int j) const { return values_[static_cast<std::size_t>(j) * (m_ + 1) + i]; }

    int m_;
    std::vector<double> values_;
};

} // namespace

FieldPtr make_zero_field() { return std::make_shared<ZeroField>(); }

FieldPtr make_gaussian_field(double amp, double x0, double sx, double y0, double sy) {
    return std::make_shared<GaussianField>(amp, x0, sx, y0, sy);
}

FieldPtr make_indicator_field(double amp, double xlo, double xhi, double ylo, double yhi) {
    return std::make_shared<IndicatorField>(amp, xlo, xhi, ylo, yhi);
}

FieldPtr make_polybump_field(double amp, int p, double xlo, double xhi, double ylo,
                             double yhi) {
    return std::make_shared<PolyBumpField>(amp, p, xlo, xhi, ylo, yhi);
}

FieldPtr make_sum_field(std::vector<std::pair<double, FieldPtr>> terms) {
    return std::make_shared<SumField>(std::move(terms));
}

FieldPtr make_grid_field(int m, std::vector<double> node_values) {
    return std::make_shared<GridField>(m, std::move(node_values));
}

InitialData::InitialData(const ModelParams& p)
    : follicles_(p.follicles), cycles_(p.cycles),
      fields_(static_cast<std::size_t>(component_count(p)), make_zero_field()) {}

int InitialData::index(ComponentId id) const {
    if (id.follicle < 0 || id.follicle >= follicles_ || id.cycle < 1 ||
        id.cycle > cycles_) {
        throw OutOfDomain("component " + component_tag(id) + " out of range");
    }
    return (id.follicle * cycles_ + (id.cycle - 1)) * 3 + (static_cast<int>(id.phase) - 1);
}

void InitialData::set(ComponentId id, FieldPtr field) {
    if (!field) throw ConfigError("null initial-data field");
    fields_[index(id)] = std::move(field);
}

const ComponentField& InitialData::field(ComponentId id) const {
    return *fields_[index(id)];
}

FieldPtr InitialData::field_ptr(ComponentId id) const { return fields_[index(id)]; }

double InitialData::eval(ComponentId id, double x, double y) const {
    return fields_[index(id)]->eval(x, y);
}

double InitialData::l1_norm(ComponentId id) const { return fields_[index(id)]->l1_norm(); }

double InitialData::sup_norm(ComponentId id) const { return fields_[index(id)]->sup_norm(); }

bool InitialData::all_zero() const {
    for (const auto& f : fields_) {
        if (!f->is_zero()) return false;
    }
    return true;
}

bool InitialData::all_nonnegative() const {
    for (const auto& f : fields_) {
        if (!f->is_nonnegative()) return false;
    }
    return true;
}

InitialData InitialData::scaled(double factor) const {
    InitialData out = *this;
    for (auto& f : out.fields_) {
        f = make_sum_field({{factor, f}});
    }
    return out;
}

InitialData InitialData::combine(double alpha, const InitialData& a, double beta,
                                 const InitialData& b) {
    if (a.follicles_ != b.follicles_ || a.cycles_ != b.cycles_) {
        throw ConfigError("cannot combine initial data of different shapes");
    }
    InitialData out = a;
    for (std::size_t i = 0; i < out.fields_.size(); ++i) {
        out.fields_[i] = make_sum_field({{alpha, a.fields_[i]}, {beta, b.fields_[i]}});
    }
    return out;
}

} // namespace follisim
