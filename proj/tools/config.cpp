#include "config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "follisim/io.hpp"
#include "follisim/util.hpp"
#include "json.hpp"

namespace follisim::cli {

using nlohmann::json;
using nlohmann::ordered_json;

Method method_from_string(const std::string& s) {
    if (s == "char") return Method::chars;
    if (s == "fv") return Method::fv;
    if (s == "both") return Method::both;
    throw ConfigError("method must be one of char, fv, both (got '" + s + "')");
}

const char* to_string(Method m) {
    switch (m) {
        case Method::chars: return "char";
        case Method::fv: return "fv";
        case Method::both: return "both";
    }
    return "?";
}

namespace {

// ----------------------------------------------------------------------------
// Strict JSON access: every object must list only known keys, every value
// must have the expected type, and every error names the offending path.
// ----------------------------------------------------------------------------

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw ConfigError("config " + path + ": " + msg);
}

const json& expect_object(const json& j, const std::string& path) {
    if (!j.is_object()) fail(path, "must be a JSON object");
    return j;
}

void reject_unknown(const json& obj, const std::string& path,
                    const std::set<std::string>& known) {
    for (const auto& item : obj.items()) {
        if (!known.count(item.key())) {
            fail(path, "unknown key '" + item.key() + "'");
        }
    }
}

double get_number(const json& obj, const std::string& path, const char* key,
                  double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(path + "." + key, "must be a number");
    return v.get<double>();
}

int get_int(const json& obj, const std::string& path, const char* key,
            int fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(path + "." + key, "must be an integer");
    return v.get<int>();
}

bool get_bool(const json& obj, const std::string& path, const char* key,
              bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) fail(path + "." + key, "must be a boolean");
    return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& path, const char* key,
                       const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) fail(path + "." + key, "must be a string");
    return v.get<std::string>();
}

std::vector<double> get_number_array(const json& obj, const std::string& path,
                                     const char* key,
                                     const std::vector<double>& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_array()) fail(path + "." + key, "must be an array of numbers");
    std::vector<double> out;
    for (const json& e : v) {
        if (!e.is_number()) fail(path + "." + key, "must be an array of numbers");
        out.push_back(e.get<double>());
    }
    return out;
}

// ----------------------------------------------------------------------------
// Section parsers.
// ----------------------------------------------------------------------------

ModelParams parse_params(const json& j, const std::string& path) {
    expect_object(j, path);
    reject_unknown(j, path,
                   {"a1", "a2", "gamma_s", "gamma_m", "follicles", "cycles",
                    "tau_g", "tau_h", "g1", "c1", "c2", "u_bar", "K_lambda",
                    "gamma_bar", "U0", "Us", "c", "m", "b1", "b2", "b3",
                    "horizon"});
    ModelParams p;
    p.a1 = get_number(j, path, "a1", p.a1);
    p.a2 = get_number(j, path, "a2", p.a2);
    p.gamma_s = get_number(j, path, "gamma_s", p.gamma_s);
    p.gamma_m = get_number(j, path, "gamma_m", p.gamma_m);
    p.follicles = get_int(j, path, "follicles", p.follicles);
    p.cycles = get_int(j, path, "cycles", p.cycles);
    p.g1 = get_number(j, path, "g1", p.g1);
    p.c1 = get_number(j, path, "c1", p.c1);
    p.c2 = get_number(j, path, "c2", p.c2);
    p.u_bar = get_number(j, path, "u_bar", p.u_bar);
    p.K_lambda = get_number(j, path, "K_lambda", p.K_lambda);
    p.gamma_bar = get_number(j, path, "gamma_bar", p.gamma_bar);
    p.U0 = get_number(j, path, "U0", p.U0);
    p.Us = get_number(j, path, "Us", p.Us);
    p.c = get_number(j, path, "c", p.c);
    p.m = get_number(j, path, "m", p.m);
    p.b1 = get_number(j, path, "b1", p.b1);
    p.b2 = get_number(j, path, "b2", p.b2);
    p.b3 = get_number(j, path, "b3", p.b3);
    p.horizon = get_number(j, path, "horizon", p.horizon);
    // Per-follicle arrays default to a mild spread around 1 when omitted.
    if (j.contains("tau_g")) {
        p.tau_g = get_number_array(j, path, "tau_g", {});
    } else {
        p.tau_g.assign(p.follicles, 1.0);
        for (int f = 0; f < p.follicles; ++f) p.tau_g[f] = 1.0 - 0.1 * f;
    }
    if (j.contains("tau_h")) {
        p.tau_h = get_number_array(j, path, "tau_h", {});
    } else {
        p.tau_h.assign(p.follicles, 1.0);
        for (int f = 0; f < p.follicles; ++f) p.tau_h[f] = 1.0 - 0.05 * f;
    }
    return p;
}

ComponentId parse_component_tag(const ModelParams& p, const std::string& tag) {
    int f = 0, k = 0, ph = 0;
    char trail = '\0';
    const int got =
        std::sscanf(tag.c_str(), "f%d.c%d.p%d%c", &f, &k, &ph, &trail);
    if (got != 3) {
        throw ConfigError("initial_data key '" + tag +
                          "' is not a component tag of the form f1.c1.p1");
    }
    if (f < 1 || f > p.follicles || k < 1 || k > p.cycles || ph < 1 || ph > 3) {
        throw ConfigError("initial_data component '" + tag +
                          "' is outside the configured model dimensions");
    }
    return ComponentId{f - 1, k, phase_from_int(ph)};
}

FieldSpec parse_field_spec(const json& j, const std::string& path) {
    expect_object(j, path);
    FieldSpec spec;
    spec.family = get_string(j, path, "family", "");
    if (spec.family == "gaussian") {
        reject_unknown(j, path, {"family", "amp", "x0", "sx", "y0", "sy"});
        spec.amp = get_number(j, path, "amp", 0.0);
        spec.x0 = get_number(j, path, "x0", 0.5);
        spec.sx = get_number(j, path, "sx", 0.2);
        spec.y0 = get_number(j, path, "y0", 0.5);
        spec.sy = get_number(j, path, "sy", 0.2);
        if (!(spec.sx > 0.0) || !(spec.sy > 0.0)) {
            fail(path, "gaussian widths sx, sy must be positive");
        }
    } else if (spec.family == "indicator" || spec.family == "polybump") {
        std::set<std::string> known{"family", "amp", "xlo", "xhi", "ylo", "yhi"};
        if (spec.family == "polybump") known.insert("p");
        reject_unknown(j, path, known);
        spec.amp = get_number(j, path, "amp", 0.0);
        spec.xlo = get_number(j, path, "xlo", 0.0);
        spec.xhi = get_number(j, path, "xhi", 1.0);
        spec.ylo = get_number(j, path, "ylo", 0.0);
        spec.yhi = get_number(j, path, "yhi", 1.0);
        spec.p = get_int(j, path, "p", 3);
        if (!(spec.xlo < spec.xhi) || !(spec.ylo < spec.yhi)) {
            fail(path, "support box must satisfy xlo < xhi and ylo < yhi");
        }
        if (spec.xlo < 0.0 || spec.xhi > 1.0 || spec.ylo < 0.0 || spec.yhi > 1.0) {
            fail(path, "support box must lie inside [0,1]^2");
        }
        if (spec.p < 1) fail(path, "polybump smoothness p must be >= 1");
    } else if (spec.family.empty()) {
        fail(path, "field needs a 'family' (gaussian, indicator, polybump)");
    } else {
        fail(path, "unknown family '" + spec.family +
                       "' (expected gaussian, indicator, polybump)");
    }
    if (!(spec.amp >= 0.0)) {
        fail(path, "amplitude must be nonnegative (initial data is a density)");
    }
    return spec;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " +
                          e.what());
    }
    return j;
}

} // namespace

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    cfg.config_path = path;
    const json root = load_json_file(path);
    expect_object(root, path);
    reject_unknown(root, "top level",
                   {"params", "params_file", "initial_data", "run"});
    const std::filesystem::path dir =
        std::filesystem::path(path).parent_path();

    // --- model parameters: inline object or referenced file. -----------------
    const bool has_inline = root.contains("params");
    const bool has_file = root.contains("params_file");
    if (has_inline == has_file) {
        throw ConfigError(
            "config must provide exactly one of 'params' (inline object) and "
            "'params_file' (path)");
    }
    if (has_inline) {
        cfg.params = parse_params(root.at("params"), "params");
    } else {
        const json& v = root.at("params_file");
        if (!v.is_string()) throw ConfigError("config params_file: must be a string");
        const std::filesystem::path pp = dir / v.get<std::string>();
        cfg.params_path = pp.string();
        cfg.params = parse_params(load_json_file(cfg.params_path), "params file");
    }
    cfg.params.validate();

    // --- initial data. --------------------------------------------------------
    if (root.contains("initial_data")) {
        const json& id = expect_object(root.at("initial_data"), "initial_data");
        for (const auto& item : id.items()) {
            const ComponentId comp = parse_component_tag(cfg.params, item.key());
            cfg.fields.emplace_back(
                comp, parse_field_spec(item.value(), "initial_data." + item.key()));
        }
    }

    // --- run settings. ----------------------------------------------------------
    const json run = root.contains("run") ? root.at("run") : json::object();
    expect_object(run, "run");
    reject_unknown(run, "run",
                   {"method", "output_times", "grid_resolution",
                    "maturity_samples", "seed", "fv", "fixed_point",
                    "quadrature", "hooks"});
    cfg.method = method_from_string(get_string(run, "run", "method", "char"));
    cfg.grid_resolution = get_int(run, "run", "grid_resolution", 64);
    if (cfg.grid_resolution < 1) fail("run.grid_resolution", "must be >= 1");
    cfg.maturity_samples = get_int(run, "run", "maturity_samples", 65);
    if (cfg.maturity_samples < 2) fail("run.maturity_samples", "must be >= 2");
    if (run.contains("seed")) {
        const json& v = run.at("seed");
        if (!v.is_number_unsigned() && !v.is_number_integer()) {
            fail("run.seed", "must be a nonnegative integer");
        }
        if (v.is_number_integer() && v.get<long long>() < 0) {
            fail("run.seed", "must be a nonnegative integer");
        }
        cfg.seed = v.get<std::uint64_t>();
    }

    const double T = cfg.params.horizon;
    cfg.output_times = get_number_array(run, "run", "output_times", {T});
    const double ttol = 1e-12 * std::max(1.0, T);
    for (double& t : cfg.output_times) {
        if (t < -ttol || t > T + ttol) {
            fail("run.output_times", "time " + format_g17(t) +
                                         " outside [0, horizon]");
        }
        t = std::min(std::max(t, 0.0), T);
    }
    std::sort(cfg.output_times.begin(), cfg.output_times.end());
    cfg.output_times.erase(std::unique(cfg.output_times.begin(),
                                       cfg.output_times.end(),
                                       [&](double a, double b) {
                                           return std::abs(a - b) <= ttol;
                                       }),
                           cfg.output_times.end());
    if (cfg.output_times.empty()) fail("run.output_times", "must not be empty");

    if (run.contains("fv")) {
        const json& fv = expect_object(run.at("fv"), "run.fv");
        reject_unknown(fv, "run.fv", {"nx", "ny", "cfl", "fixed_dt"});
        cfg.fv.nx = get_int(fv, "run.fv", "nx", cfg.fv.nx);
        cfg.fv.ny = get_int(fv, "run.fv", "ny", cfg.fv.ny);
        cfg.fv.cfl = get_number(fv, "run.fv", "cfl", cfg.fv.cfl);
        cfg.fv.fixed_dt = get_number(fv, "run.fv", "fixed_dt", cfg.fv.fixed_dt);
    }
    if (run.contains("fixed_point")) {
        const json& fp = expect_object(run.at("fixed_point"), "run.fixed_point");
        reject_unknown(fp, "run.fixed_point",
                       {"fp_tol_factor", "fp_max_iter", "window_safety",
                        "ctrl_samples_per_window", "resample_window_cap",
                        "resample_grid", "guess_ramp"});
        cfg.fp.fp_tol_factor =
            get_number(fp, "run.fixed_point", "fp_tol_factor", cfg.fp.fp_tol_factor);
        cfg.fp.fp_max_iter =
            get_int(fp, "run.fixed_point", "fp_max_iter", cfg.fp.fp_max_iter);
        cfg.fp.window_safety =
            get_number(fp, "run.fixed_point", "window_safety", cfg.fp.window_safety);
        cfg.fp.ctrl_samples_per_window =
            get_int(fp, "run.fixed_point", "ctrl_samples_per_window",
                    cfg.fp.ctrl_samples_per_window);
        cfg.fp.resample_window_cap = get_int(fp, "run.fixed_point",
                                             "resample_window_cap",
                                             cfg.fp.resample_window_cap);
        cfg.fp.resample_grid =
            get_int(fp, "run.fixed_point", "resample_grid", cfg.fp.resample_grid);
        cfg.fp.guess_ramp =
            get_number(fp, "run.fixed_point", "guess_ramp", cfg.fp.guess_ramp);
    }
    if (run.contains("quadrature")) {
        const json& q = expect_object(run.at("quadrature"), "run.quadrature");
        reject_unknown(q, "run.quadrature",
                       {"rel_tol", "abs_tol", "max_depth", "max_panel"});
        cfg.fp.quad.rel_tol =
            get_number(q, "run.quadrature", "rel_tol", cfg.fp.quad.rel_tol);
        cfg.fp.quad.abs_tol =
            get_number(q, "run.quadrature", "abs_tol", cfg.fp.quad.abs_tol);
        cfg.fp.quad.max_depth =
            get_int(q, "run.quadrature", "max_depth", cfg.fp.quad.max_depth);
        cfg.fp.quad.max_panel =
            get_number(q, "run.quadrature", "max_panel", cfg.fp.quad.max_panel);
        if (!(cfg.fp.quad.max_panel > 0.0)) {
            fail("run.quadrature.max_panel", "must be positive");
        }
    }
    if (run.contains("hooks")) {
        const json& h = expect_object(run.at("hooks"), "run.hooks");
        reject_unknown(h, "run.hooks",
                       {"disable_mitosis", "zero_loss", "closed_domain",
                        "jacobian_tamper", "freeze_controls"});
        cfg.fp.hooks.disable_mitosis =
            get_bool(h, "run.hooks", "disable_mitosis", false);
        cfg.fp.hooks.zero_loss = get_bool(h, "run.hooks", "zero_loss", false);
        cfg.fp.hooks.closed_domain =
            get_bool(h, "run.hooks", "closed_domain", false);
        cfg.fp.hooks.jacobian_tamper =
            get_number(h, "run.hooks", "jacobian_tamper", 1.0);
        const std::string frozen =
            get_string(h, "run.hooks", "freeze_controls", "");
        if (!frozen.empty()) {
            cfg.frozen_controls_path = (dir / frozen).string();
        }
    }

    // --- referenced files (flag overrides happen later, in the commands). ----
    if (!cfg.frozen_controls_path.empty()) {
        std::ifstream in(cfg.frozen_controls_path);
        if (!in) {
            throw ConfigError("cannot open control table '" +
                              cfg.frozen_controls_path + "'");
        }
        cfg.fp.hooks.frozen = std::make_shared<FrozenControls>(
            load_frozen_controls_csv(in, cfg.params.follicles));
    }
    cfg.fv.hooks = cfg.fp.hooks;
    return cfg;
}

InitialData build_initial_data(const RunConfig& cfg) {
    InitialData data(cfg.params);
    for (const auto& [comp, spec] : cfg.fields) {
        FieldPtr field;
        if (spec.family == "gaussian") {
            field = make_gaussian_field(spec.amp, spec.x0, spec.sx, spec.y0, spec.sy);
        } else if (spec.family == "indicator") {
            field = make_indicator_field(spec.amp, spec.xlo, spec.xhi, spec.ylo,
                                         spec.yhi);
        } else if (spec.family == "polybump") {
            field = make_polybump_field(spec.amp, spec.p, spec.xlo, spec.xhi,
                                        spec.ylo, spec.yhi);
        } else {
            throw ConfigError("unknown initial-data family '" + spec.family + "'");
        }
        data.set(comp, std::move(field));
    }
    if (!data.all_nonnegative()) {
        throw ConfigError("initial data must be nonnegative");
    }
    return data;
}

std::string config_json(const RunConfig& cfg) {
    const ModelParams& p = cfg.params;
    ordered_json j;
    j["config_file"] = cfg.config_path;
    if (!cfg.params_path.empty()) j["params_file"] = cfg.params_path;

    ordered_json pj;
    pj["a1"] = p.a1;
    pj["a2"] = p.a2;
    pj["gamma_s"] = p.gamma_s;
    pj["gamma_m"] = p.gamma_m;
    pj["follicles"] = p.follicles;
    pj["cycles"] = p.cycles;
    pj["tau_g"] = p.tau_g;
    pj["tau_h"] = p.tau_h;
    pj["g1"] = p.g1;
    pj["c1"] = p.c1;
    pj["c2"] = p.c2;
    pj["u_bar"] = p.u_bar;
    pj["K_lambda"] = p.K_lambda;
    pj["gamma_bar"] = p.gamma_bar;
    pj["U0"] = p.U0;
    pj["Us"] = p.Us;
    pj["c"] = p.c;
    pj["m"] = p.m;
    pj["b1"] = p.b1;
    pj["b2"] = p.b2;
    pj["b3"] = p.b3;
    pj["horizon"] = p.horizon;
    j["params"] = std::move(pj);

    ordered_json fields = ordered_json::object();
    for (const auto& [comp, spec] : cfg.fields) {
        ordered_json fj;
        fj["family"] = spec.family;
        fj["amp"] = spec.amp;
        if (spec.family == "gaussian") {
            fj["x0"] = spec.x0;
            fj["sx"] = spec.sx;
            fj["y0"] = spec.y0;
            fj["sy"] = spec.sy;
        } else {
            fj["xlo"] = spec.xlo;
            fj["xhi"] = spec.xhi;
            fj["ylo"] = spec.ylo;
            fj["yhi"] = spec.yhi;
            if (spec.family == "polybump") fj["p"] = spec.p;
        }
        fields[component_tag(comp)] = std::move(fj);
    }
    j["initial_data"] = std::move(fields);

    ordered_json run;
    run["method"] = to_string(cfg.method);
    run["output_times"] = cfg.output_times;
    run["grid_resolution"] = cfg.grid_resolution;
    run["maturity_samples"] = cfg.maturity_samples;
    run["seed"] = cfg.seed;
    run["fv"] = {{"nx", cfg.fv.nx},
                 {"ny", cfg.fv.ny},
                 {"cfl", cfg.fv.cfl},
                 {"fixed_dt", cfg.fv.fixed_dt}};
    run["fixed_point"] = {
        {"fp_tol_factor", cfg.fp.fp_tol_factor},
        {"fp_max_iter", cfg.fp.fp_max_iter},
        {"window_safety", cfg.fp.window_safety},
        {"ctrl_samples_per_window", cfg.fp.ctrl_samples_per_window},
        {"resample_window_cap", cfg.fp.resample_window_cap},
        {"resample_grid", cfg.fp.resample_grid},
        {"guess_ramp", cfg.fp.guess_ramp}};
    run["quadrature"] = {{"rel_tol", cfg.fp.quad.rel_tol},
                         {"abs_tol", cfg.fp.quad.abs_tol},
                         {"max_depth", cfg.fp.quad.max_depth},
                         {"max_panel", cfg.fp.quad.max_panel}};
    ordered_json hooks;
    hooks["disable_mitosis"] = cfg.fp.hooks.disable_mitosis;
    hooks["zero_loss"] = cfg.fp.hooks.zero_loss;
    hooks["closed_domain"] = cfg.fp.hooks.closed_domain;
    hooks["jacobian_tamper"] = cfg.fp.hooks.jacobian_tamper;
    if (!cfg.frozen_controls_path.empty()) {
        hooks["freeze_controls"] = cfg.frozen_controls_path;
        const FrozenControls& fc = *cfg.fp.hooks.frozen;
        ordered_json table;
        table["times"] = fc.times;
        table["U"] = fc.U;
        table["u"] = fc.u;
        hooks["frozen_controls_table"] = std::move(table);
    } else {
        hooks["freeze_controls"] = nullptr;
    }
    run["hooks"] = std::move(hooks);
    j["run"] = std::move(run);
    return j.dump(2);
}

} // namespace follisim::cli
