#include "follisim/io.hpp"

#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>

#include "follisim/util.hpp"

namespace follisim {

std::string format_g17(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ----------------------------------------------------------------------------
// CSV primitives.
// ----------------------------------------------------------------------------

std::string csv_escape(const std::string& field) {
    const bool needs_quotes =
        field.find_first_of(",\"\r\n") != std::string::npos;
    if (!needs_quotes) return field;
    std::string out;
    out.reserve(field.size() + 2);
    out.push_back('"');
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os_ << ',';
        os_ << csv_escape(fields[i]);
    }
    os_ << "\r\n";
}

bool read_csv_record(std::istream& is, std::vector<std::string>& fields) {
    fields.clear();
    int c = is.get();
    if (c == std::istream::traits_type::eof()) return false;
    std::string field;
    bool quoted = false;
    bool in_field = true;
    while (true) {
        if (c == std::istream::traits_type::eof()) {
            if (quoted) throw ConfigError("CSV record ends inside a quoted field");
            break;
        }
        const char ch = static_cast<char>(c);
        if (quoted) {
            if (ch == '"') {
                const int peek = is.peek();
                if (peek == '"') {
                    is.get();
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(ch);
            }
        } else if (ch == '"' && field.empty() && in_field) {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(field));
            field.clear();
            in_field = true;
        } else if (ch == '\r') {
            if (is.peek() == '\n') is.get();
            break;
        } else if (ch == '\n') {
            break;
        } else {
            field.push_back(ch);
            in_field = false;
        }
        c = is.get();
    }
    fields.push_back(std::move(field));
    return true;
}

// ----------------------------------------------------------------------------
// Simulation outputs.
// ----------------------------------------------------------------------------

void write_maturity_csv(std::ostream& os, const ModelParams& p, const Hooks& hooks,
                        const std::vector<MaturityRow>& rows) {
    CsvWriter w(os);
    std::vector<std::string> header{"t"};
    for (int f = 1; f <= p.follicles; ++f) header.push_back("M_" + std::to_string(f));
    header.push_back("M");
    for (int f = 1; f <= p.follicles; ++f) header.push_back("u_" + std::to_string(f));
    header.push_back("U");
    w.row(header);

    std::vector<std::string> cells;
    for (const MaturityRow& row : rows) {
        if (static_cast<int>(row.M.size()) != p.follicles) {
            throw ConfigError("maturity row does not match the follicle count");
        }
        double total = 0.0;
        for (double m : row.M) total += m;
        cells.clear();
        cells.push_back(format_g17(row.t));
        for (double m : row.M) cells.push_back(format_g17(m));
        cells.push_back(format_g17(total));
        if (hooks.frozen) {
            for (int f = 0; f < p.follicles; ++f) {
                cells.push_back(format_g17(hooks.frozen->u_at(f, row.t)));
            }
            cells.push_back(format_g17(hooks.frozen->U_at(row.t)));
        } else {
            for (int f = 0; f < p.follicles; ++f) {
                cells.push_back(
                    format_g17(local_control(p, row.M[f], total, row.t)));
            }
            cells.push_back(format_g17(global_control(p, total, row.t)));
        }
        w.row(cells);
    }
}

void write_snapshot_csv(std::ostream& os, const ModelParams& p, double t,
                        const std::vector<double>& xs, const std::vector<double>& ys,
                        const ComponentEval& eval) {
    CsvWriter w(os);
    w.row({"t", "x", "y", "component", "value"});
    const std::string ts = format_g17(t);
    std::vector<std::string> cells(5);
    for (int ci = 0; ci < component_count(p); ++ci) {
        const ComponentId id = component_from_index(p, ci);
        const std::string tag = component_tag(id);
        for (double x : xs) {
            const std::string xsr = format_g17(x);
            for (double y : ys) {
                cells[0] = ts;
                cells[1] = xsr;
                cells[2] = format_g17(y);
                cells[3] = tag;
                cells[4] = format_g17(eval(id, x, y));
                w.row(cells);
            }
        }
    }
}

// ----------------------------------------------------------------------------
// Open-loop control tables.
// ----------------------------------------------------------------------------

namespace {

double parse_double(const std::string& s, const char* what, std::size_t record) {
    const char* begin = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0') {
        std::ostringstream oss;
        oss << "control table record " << record << ": " << what << " '" << s
            << "' is not a number";
        throw ConfigError(oss.str());
    }
    return v;
}

} // namespace

FrozenControls load_frozen_controls_csv(std::istream& is, int follicles) {
    std::vector<std::string> fields;
    if (!read_csv_record(is, fields)) {
        throw ConfigError("control table is empty");
    }
    const std::size_t want = static_cast<std::size_t>(follicles) + 2;
    if (fields.size() != want || fields[0] != "t" || fields[1] != "U") {
        throw ConfigError(
            "control table header must be t,U,u_1,...,u_n for n follicles");
    }
    for (int f = 0; f < follicles; ++f) {
        if (fields[2 + f] != "u_" + std::to_string(f + 1)) {
            throw ConfigError(
                "control table header must be t,U,u_1,...,u_n for n follicles");
        }
    }

    FrozenControls fc;
    fc.u.resize(follicles);
    std::size_t record = 1;
    while (read_csv_record(is, fields)) {
        ++record;
        if (fields.size() == 1 && fields[0].empty()) continue; // trailing newline
        if (fields.size() != want) {
            std::ostringstream oss;
            oss << "control table record " << record << ": expected " << want
                << " fields, got " << fields.size();
            throw ConfigError(oss.str());
        }
        const double t = parse_double(fields[0], "time", record);
        if (!fc.times.empty() && !(t > fc.times.back())) {
            std::ostringstream oss;
            oss << "control table record " << record
                << ": times must be strictly increasing";
            throw ConfigError(oss.str());
        }
        fc.times.push_back(t);
        fc.U.push_back(parse_double(fields[1], "global control", record));
        for (int f = 0; f < follicles; ++f) {
            fc.u[f].push_back(parse_double(fields[2 + f], "local control", record));
        }
    }
    if (fc.times.size() < 2) {
        throw ConfigError("control table needs at least two records");
    }
    fc.validate(follicles);
    return fc;
}

} // namespace follisim
