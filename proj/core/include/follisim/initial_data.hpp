#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "follisim/model.hpp"

namespace follisim {

// A scalar datum on one normalized phase square [0,1]^2. Implementations are
// closed-form families with exact L1/sup norms (upper bounds for mixed-sign
// sums), plus a sampled-grid field used when a long run is re-anchored.
class ComponentField {
public:
    virtual ~ComponentField() = default;

    virtual double eval(double x, double y) const = 0;

    // Integral of |field| over [0,1]^2 (exact for single-sign fields; an upper
    // bound for mixed-sign sums).
    virtual double l1_norm() const = 0;

    // Supremum of |field| over [0,1]^2 (exact for the closed-form families; an
    // upper bound for mixed-sign sums).
    virtual double sup_norm() const = 0;

    virtual bool is_zero() const { return false; }
    virtual bool is_nonnegative() const = 0;

    // Vertical / horizontal lines inside (0,1) across which the field is not
    // smooth (support edges of the compactly supported families). Quadrature
    // aligns integration panels to these lines and to their characteristic
    // images; an empty list means the field is smooth on the whole square.
    virtual std::vector<double> x_breaks() const { return {}; }
    virtual std::vector<double> y_breaks() const { return {}; }
};

using FieldPtr = std::shared_ptr<const ComponentField>;

// The identically-zero field.
FieldPtr make_zero_field();

// amp * exp(-((x-x0)/sx)^2) * exp(-((y-y0)/sy)^2) restricted to [0,1]^2.
FieldPtr make_gaussian_field(double amp, double x0, double sx, double y0, double sy);

// amp * 1[xlo<=x<=xhi] * 1[ylo<=y<=yhi].
FieldPtr make_indicator_field(double amp, double xlo, double xhi, double ylo, double yhi);

// amp * B(x)^p * B(y)^p with B the parabolic bump 4(s-lo)(hi-s)/(hi-lo)^2 on
// its support and 0 outside; C^(p-1) smooth, peak value amp at the center.
FieldPtr make_polybump_field(double amp, int p, double xlo, double xhi, double ylo,
                             double yhi);

// Linear combination sum_i coef_i * field_i.
FieldPtr make_sum_field(std::vector<std::pair<double, FieldPtr>> terms);

// Bilinear interpolation of (m+1)x(m+1) node values over [0,1]^2; values are
// row-major with x fastest (node (i,j) at (i/m, j/m) has index j*(m+1)+i).
FieldPtr make_grid_field(int m, std::vector<double> node_values);

// One field per (follicle, cycle, phase) component; defaults to all-zero.
class InitialData {
public:
    explicit InitialData(const ModelParams& p);

    void set(ComponentId id, FieldPtr field);
    const ComponentField& field(ComponentId id) const;
    FieldPtr field_ptr(ComponentId id) const;

    double eval(ComponentId id, double x, double y) const;
    double l1_norm(ComponentId id) const;
    double sup_norm(ComponentId id) const;

    bool all_zero() const;
    bool all_nonnegative() const;

    int follicles() const { return follicles_; }
    int cycles() const { return cycles_; }

    // Data scaled by a constant factor (used by linearity checks).
    InitialData scaled(double factor) const;
    // alpha * A + beta * B (component-wise linear combination).
    static InitialData combine(double alpha, const InitialData& a, double beta,
                               const InitialData& b);

private:
    int index(ComponentId id) const;

    int follicles_;
    int cycles_;
    std::vector<FieldPtr> fields_;
};

} // namespace follisim
