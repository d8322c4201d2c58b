#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "follisim/model.hpp"
#include "follisim/trajectory.hpp"

namespace follisim {

// ----------------------------------------------------------------------------
// RFC-4180 CSV primitives. Fields containing commas, quotes or line breaks
// are quoted with embedded quotes doubled; records end in CRLF. Numbers are
// printed with format_g17 so parsing them back recovers the exact double.
// ----------------------------------------------------------------------------

std::string csv_escape(const std::string& field);

class CsvWriter {
public:
    explicit CsvWriter(std::ostream& os) : os_(os) {}
    void row(const std::vector<std::string>& fields);

private:
    std::ostream& os_;
};

// Reads one CSV record (handling quoted fields and CRLF or LF line ends).
// Returns false at end of input with no record started. Throws ConfigError
// on malformed quoting.
bool read_csv_record(std::istream& is, std::vector<std::string>& fields);

// ----------------------------------------------------------------------------
// Simulation outputs.
// ----------------------------------------------------------------------------

// One sample of the maturity time series.
struct MaturityRow {
    double t = 0.0;
    std::vector<double> M; // per follicle
};

// Maturity time series with columns t, M_1..M_n, M, u_1..u_n, U. The controls
// are recomputed from each row's maturities exactly as the solvers compute
// them (frozen tables when installed via hooks).
void write_maturity_csv(std::ostream& os, const ModelParams& p, const Hooks& hooks,
                        const std::vector<MaturityRow>& rows);

// Density snapshot with columns t, x, y, component, value; rows iterate the
// components in index order, then x, then y. The evaluator supplies the
// density of one component square at a normalized point.
using ComponentEval = std::function<double(ComponentId, double x, double y)>;
void write_snapshot_csv(std::ostream& os, const ModelParams& p, double t,
                        const std::vector<double>& xs, const std::vector<double>& ys,
                        const ComponentEval& eval);

// ----------------------------------------------------------------------------
// Open-loop control tables.
// ----------------------------------------------------------------------------

// Loads frozen control curves from CSV with header t,U,u_1,...,u_n and
// strictly increasing times. Throws ConfigError on malformed input.
FrozenControls load_frozen_controls_csv(std::istream& is, int follicles);

} // namespace follisim
