#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "follisim/fixedpoint.hpp"
#include "follisim/fv_oracle.hpp"
#include "follisim/initial_data.hpp"
#include "follisim/model.hpp"

namespace follisim::cli {

enum class Method { chars, fv, both };

Method method_from_string(const std::string& s);
const char* to_string(Method m);

// One closed-form initial-data family bound to a component square. The
// families are evaluable at arbitrary points, so the characteristics method
// never interpolates data.
struct FieldSpec {
    std::string family; // "gaussian" | "indicator" | "polybump"
    double amp = 0.0;
    double x0 = 0.0, sx = 0.0, y0 = 0.0, sy = 0.0;     // gaussian
    double xlo = 0.0, xhi = 0.0, ylo = 0.0, yhi = 0.0; // indicator / polybump
    int p = 3;                                         // polybump smoothness
};

// A fully parsed run configuration. Loading is strict: unknown keys anywhere
// raise ConfigError, referenced files must exist, initial data must be
// nonnegative, and output times must lie in [0, horizon].
struct RunConfig {
    ModelParams params;
    std::vector<std::pair<ComponentId, FieldSpec>> fields; // omitted => zero
    Method method = Method::chars;
    std::vector<double> output_times; // sorted, deduplicated
    int grid_resolution = 64;         // snapshot cells per axis
    int maturity_samples = 65;        // rows of the maturity time series
    std::uint64_t seed = 20260816;
    FvOptions fv;
    FixedPointOptions fp; // includes quadrature options and hooks
    std::string frozen_controls_path; // resolved; empty when closed-loop

    std::string config_path; // the file this was loaded from
    std::string params_path; // empty when params were inline
};

RunConfig load_run_config(const std::string& path);

// Instantiates the configured closed-form fields (validated nonnegative).
InitialData build_initial_data(const RunConfig& cfg);

// Pretty-printed JSON echo of everything above (stable key order), used as
// the configuration section of run manifests.
std::string config_json(const RunConfig& cfg);

} // namespace follisim::cli
