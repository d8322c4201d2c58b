#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "follisim/characteristics.hpp"
#include "follisim/io.hpp"
#include "follisim/solution.hpp"
#include "follisim/util.hpp"
#include "follisim/verify.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace follisim::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// ----------------------------------------------------------------------------
// Shared pieces.
// ----------------------------------------------------------------------------

std::vector<double> maturity_times(const RunConfig& cfg) {
    const double T = cfg.params.horizon;
    const int S = cfg.maturity_samples;
    std::vector<double> times(S);
    for (int i = 0; i < S; ++i) times[i] = T * i / (S - 1);
    times.back() = T;
    return times;
}

std::ofstream open_output(const std::string& dir, const std::string& name) {
    const fs::path p = fs::path(dir) / name;
    std::ofstream os(p, std::ios::binary);
    if (!os) throw ConfigError("cannot open output file '" + p.string() + "'");
    return os;
}

ordered_json constants_json(const ContractionConstants& cc) {
    ordered_json j;
    j["K"] = cc.K;
    j["K1"] = cc.K1;
    j["K2"] = cc.K2;
    j["delta"] = cc.delta;
    j["T"] = cc.T;
    j["C1"] = cc.C1;
    j["C2"] = cc.C2;
    return j;
}

ordered_json picard_json(const MarchResult& mr) {
    ordered_json j;
    j["delta_used"] = mr.delta_used;
    j["resamples"] = mr.resamples;
    ordered_json windows = ordered_json::array();
    for (const PicardReport& w : mr.windows) {
        windows.push_back({{"window", w.window},
                           {"t_lo", w.t_lo},
                           {"t_hi", w.t_hi},
                           {"iterations", w.iterations},
                           {"residual", w.residual},
                           {"observed_ratio", w.observed_ratio},
                           {"converged", w.converged}});
    }
    j["windows"] = std::move(windows);
    ordered_json anchors = ordered_json::array();
    for (const auto& [t, datum] : mr.anchors) anchors.push_back(t);
    j["anchors"] = std::move(anchors);
    return j;
}

ordered_json audit_json(const FvAudit& a) {
    ordered_json j;
    j["mitosis_in"] = a.mitosis_in;
    j["mitosis_out"] = a.mitosis_out;
    j["loss"] = a.loss;
    j["system_out"] = a.system_out;
    j["steps"] = a.steps;
    return j;
}

void write_text(const std::string& dir, const std::string& name,
                const std::string& text) {
    std::ofstream os = open_output(dir, name);
    os << text;
    if (text.empty() || text.back() != '\n') os << '\n';
}

// Uniform cell-center coordinates of an n-cell axis.
std::vector<double> centers(int n) {
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) xs[i] = (i + 0.5) / n;
    return xs;
}

// Uniform node coordinates with m cells (m + 1 points including both faces).
std::vector<double> nodes(int m) {
    std::vector<double> xs(m + 1);
    for (int i = 0; i <= m; ++i) xs[i] = static_cast<double>(i) / m;
    return xs;
}

// Merge sorted time lists, deduplicating within an absolute tolerance.
std::vector<double> merge_times(std::vector<double> a, const std::vector<double>& b,
                                double tol) {
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end(),
                        [&](double x, double y) { return std::abs(x - y) <= tol; }),
            a.end());
    return a;
}

bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

} // namespace

RunConfig load_with_overrides(const CommonOptions& opt) {
    RunConfig cfg = load_run_config(opt.config_path);
    if (opt.method) cfg.method = *opt.method;
    if (opt.fp_tol) {
        if (!(*opt.fp_tol > 0.0)) throw ConfigError("--fp-tol must be positive");
        cfg.fp.fp_tol_factor = *opt.fp_tol;
    }
    if (opt.fp_max_iter) {
        if (*opt.fp_max_iter < 1) throw ConfigError("--fp-max-iter must be >= 1");
        cfg.fp.fp_max_iter = *opt.fp_max_iter;
    }
    if (opt.window_safety) cfg.fp.window_safety = *opt.window_safety;
    if (!opt.freeze_controls.empty()) {
        std::ifstream in(opt.freeze_controls);
        if (!in) {
            throw ConfigError("cannot open control table '" + opt.freeze_controls +
                              "'");
        }
        cfg.frozen_controls_path = opt.freeze_controls;
        cfg.fp.hooks.frozen = std::make_shared<FrozenControls>(
            load_frozen_controls_csv(in, cfg.params.follicles));
    }
    cfg.fv.hooks = cfg.fp.hooks;
    return cfg;
}

// ----------------------------------------------------------------------------
// run
// ----------------------------------------------------------------------------

int cmd_run(const CommonOptions& opt) {
    const RunConfig cfg = load_with_overrides(opt);
    const ModelParams& p = cfg.params;
    const InitialData data = build_initial_data(cfg);
    fs::create_directories(opt.out_dir);

    const std::vector<double> mat_times = maturity_times(cfg);
    const double ttol = 1e-12 * std::max(1.0, p.horizon);

    ordered_json manifest;
    manifest["artifact"] = "simulation run";
    manifest["configuration"] = ordered_json::parse(config_json(cfg));
    manifest["constants"] = constants_json(compute_constants(p, data));
    ordered_json outputs = ordered_json::object();

    const bool do_char = cfg.method != Method::fv;
    const bool do_fv = cfg.method != Method::chars;

    if (do_char) {
        MarchResult mr = march(p, data, cfg.fp);
        const Solution sol(p, data, std::move(mr), cfg.fp.hooks);
        manifest["picard"] = picard_json(sol.march_result());

        std::vector<MaturityRow> rows;
        rows.reserve(mat_times.size());
        for (double t : mat_times) rows.push_back({t, sol.trajectory().at(t)});
        {
            std::ofstream os = open_output(opt.out_dir, "maturity_char.csv");
            write_maturity_csv(os, p, cfg.fp.hooks, rows);
        }
        outputs["maturity_char"] = "maturity_char.csv";

        const std::vector<double> xs = nodes(cfg.grid_resolution);
        ordered_json snaps = ordered_json::array();
        ordered_json chains = ordered_json::array();
        for (std::size_t i = 0; i < cfg.output_times.size(); ++i) {
            const double t = cfg.output_times[i];
            const std::string name =
                "snapshot_char_" + std::to_string(i) + ".csv";
            std::ofstream os = open_output(opt.out_dir, name);
            write_snapshot_csv(os, p, t, xs, xs,
                               [&](ComponentId id, double x, double y) {
                                   return sol.eval(id, t, x, y);
                               });
            snaps.push_back({{"time", t}, {"file", name}});

            if (opt.dump_chains) {
                const std::string cname =
                    "chains_" + std::to_string(i) + ".json";
                ordered_json arr = ordered_json::array();
                for (int ci = 0; ci < component_count(p); ++ci) {
                    const ComponentId id = component_from_index(p, ci);
                    for (double x : {0.25, 0.5, 0.75}) {
                        for (double y : {0.25, 0.5, 0.75}) {
                            arr.push_back(
                                ordered_json::parse(sol.chain(id, t, x, y).to_json()));
                        }
                    }
                }
                write_text(opt.out_dir, cname, arr.dump(2));
                chains.push_back({{"time", t}, {"file", cname}});
            }
        }
        outputs["snapshots_char"] = std::move(snaps);
        if (opt.dump_chains) outputs["chains"] = std::move(chains);
    }

    if (do_fv) {
        FvSolver solver(p, data, cfg.fv);
        const std::vector<double> events =
            merge_times(mat_times, cfg.output_times, ttol);
        const std::vector<double> xs = centers(cfg.fv.nx);
        const std::vector<double> ys = centers(cfg.fv.ny);

        std::vector<MaturityRow> rows;
        ordered_json snaps = ordered_json::array();
        std::size_t next_mat = 0, next_out = 0;
        for (double t : events) {
            solver.advance_to(t);
            if (next_mat < mat_times.size() && near(mat_times[next_mat], t, ttol)) {
                rows.push_back({mat_times[next_mat], solver.maturities()});
                ++next_mat;
            }
            if (next_out < cfg.output_times.size() &&
                near(cfg.output_times[next_out], t, ttol)) {
                const std::string name =
                    "snapshot_fv_" + std::to_string(next_out) + ".csv";
                std::ofstream os = open_output(opt.out_dir, name);
                write_snapshot_csv(
                    os, p, cfg.output_times[next_out], xs, ys,
                    [&](ComponentId id, double x, double y) {
                        const int i = static_cast<int>(std::lround(x * cfg.fv.nx - 0.5));
                        const int j = static_cast<int>(std::lround(y * cfg.fv.ny - 0.5));
                        return solver.cell(id, i, j);
                    });
                snaps.push_back({{"time", cfg.output_times[next_out]}, {"file", name}});
                ++next_out;
            }
        }
        {
            std::ofstream os = open_output(opt.out_dir, "maturity_fv.csv");
            write_maturity_csv(os, p, cfg.fv.hooks, rows);
        }
        outputs["maturity_fv"] = "maturity_fv.csv";
        outputs["snapshots_fv"] = std::move(snaps);
        manifest["fv_audit"] = audit_json(solver.audit());
    }

    manifest["outputs"] = std::move(outputs);
    write_text(opt.out_dir, "manifest.json", manifest.dump(2));
    return 0;
}

// ----------------------------------------------------------------------------
// converge
// ----------------------------------------------------------------------------

int cmd_converge(const CommonOptions& opt, const std::vector<int>& resolutions) {
    if (resolutions.size() < 3) {
        throw ConfigError("convergence study needs at least three resolutions");
    }
    for (std::size_t r = 0; r < resolutions.size(); ++r) {
        if (resolutions[r] < 2) {
            throw ConfigError("resolutions must be >= 2 cells per axis");
        }
        if (r > 0 && resolutions[r] <= resolutions[r - 1]) {
            throw ConfigError("resolutions must be strictly increasing");
        }
    }
    const RunConfig cfg = load_with_overrides(opt);
    const ModelParams& p = cfg.params;
    const InitialData data = build_initial_data(cfg);
    fs::create_directories(opt.out_dir);

    MarchResult mr = march(p, data, cfg.fp);
    const Solution sol(p, data, std::move(mr), cfg.fp.hooks);
    const double ttol = 1e-12 * std::max(1.0, p.horizon);

    // errors[time index][resolution index]
    std::vector<std::vector<double>> errors(
        cfg.output_times.size(), std::vector<double>(resolutions.size(), 0.0));

    if (cfg.method != Method::chars) {
        for (std::size_t r = 0; r < resolutions.size(); ++r) {
            FvOptions fo = cfg.fv;
            fo.nx = fo.ny = resolutions[r];
            FvSolver solver(p, data, fo);
            for (std::size_t ti = 0; ti < cfg.output_times.size(); ++ti) {
                const double t = cfg.output_times[ti];
                solver.advance_to(t);
                double err = 0.0;
                const double cell_area = 1.0 / (fo.nx * static_cast<double>(fo.ny));
                for (int ci = 0; ci < component_count(p); ++ci) {
                    const ComponentId id = component_from_index(p, ci);
                    const std::vector<double>& cells = solver.cells(id);
                    for (int j = 0; j < fo.ny; ++j) {
                        const double y = (j + 0.5) / fo.ny;
                        for (int i = 0; i < fo.nx; ++i) {
                            const double x = (i + 0.5) / fo.nx;
                            err += std::abs(cells[static_cast<std::size_t>(j) *
                                                      fo.nx +
                                                  i] -
                                            sol.eval(id, t, x, y));
                        }
                    }
                }
                errors[ti][r] = err * cell_area;
            }
        }
    }
    (void)ttol;

    std::ofstream os = open_output(opt.out_dir, "converge.csv");
    CsvWriter w(os);
    w.row({"t", "h", "L1_error_vs_char", "order_estimate"});
    for (std::size_t ti = 0; ti < cfg.output_times.size(); ++ti) {
        for (std::size_t r = 0; r < resolutions.size(); ++r) {
            const double h = 1.0 / resolutions[r];
            std::string order = "nan";
            if (r > 0 && errors[ti][r] > 0.0 && errors[ti][r - 1] > 0.0) {
                const double h_prev = 1.0 / resolutions[r - 1];
                order = format_g17(std::log(errors[ti][r - 1] / errors[ti][r]) /
                                   std::log(h_prev / h));
            }
            w.row({format_g17(cfg.output_times[ti]), format_g17(h),
                   format_g17(errors[ti][r]), order});
        }
    }
    return 0;
}

// ----------------------------------------------------------------------------
// verify
// ----------------------------------------------------------------------------

int cmd_verify(const CommonOptions& opt) {
    const RunConfig cfg = load_with_overrides(opt);
    const ModelParams& p = cfg.params;
    const InitialData data = build_initial_data(cfg);
    fs::create_directories(opt.out_dir);

    VerifyOptions vo;
    vo.seed = cfg.seed;
    vo.quad = cfg.fp.quad;
    vo.fp = cfg.fp;
    const std::vector<PropertyResult> results = run_verification(p, data, vo);

    bool all_pass = true;
    ordered_json props = ordered_json::array();
    for (const PropertyResult& r : results) {
        all_pass = all_pass && r.pass;
        std::cout << "[verify] " << r.name << ": " << (r.pass ? "PASS" : "FAIL")
                  << " - " << r.details << "\n";
        props.push_back({{"property", r.name}, {"pass", r.pass}, {"details", r.details}});
    }
    ordered_json report;
    report["artifact"] = "property suite report";
    report["configuration"] = ordered_json::parse(config_json(cfg));
    report["properties"] = std::move(props);
    report["pass"] = all_pass;
    write_text(opt.out_dir, "verify_report.json", report.dump(2));
    std::cout << (all_pass ? "all properties passed" : "property failures detected")
              << "\n";
    return all_pass ? 0 : 1;
}

// ----------------------------------------------------------------------------
// constants
// ----------------------------------------------------------------------------

int cmd_constants(const CommonOptions& opt) {
    const RunConfig cfg = load_with_overrides(opt);
    const InitialData data = build_initial_data(cfg);
    const ContractionConstants cc = compute_constants(cfg.params, data);
    std::cout << "K " << format_g17(cc.K) << "\n";
    std::cout << "K1 " << format_g17(cc.K1) << "\n";
    std::cout << "K2 " << format_g17(cc.K2) << "\n";
    std::cout << "delta " << format_g17(cc.delta) << "\n";
    for (std::size_t f = 0; f < cc.C1.size(); ++f) {
        std::cout << "C1_" << (f + 1) << " " << format_g17(cc.C1[f]) << "\n";
    }
    for (std::size_t f = 0; f < cc.C2.size(); ++f) {
        std::cout << "C2_" << (f + 1) << " " << format_g17(cc.C2[f]) << "\n";
    }
    return 0;
}

} // namespace follisim::cli
