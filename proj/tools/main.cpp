#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "follisim/errors.hpp"
#include "follisim/parallel.hpp"

namespace {

using follisim::cli::CommonOptions;

void add_common_flags(CLI::App* sub, CommonOptions& common, int& threads,
                      std::string& method, bool with_dump_chains) {
    sub->add_option("--config", common.config_path, "run configuration JSON file")
        ->required();
    sub->add_option("--out", common.out_dir,
                    "output directory (created if missing; default '.')");
    sub->add_option("--method", method,
                    "solution method: char, fv, or both (overrides the config)");
    sub->add_option("--threads", threads,
                    "worker threads (0 = FOLLICLE_THREADS or all cores)");
    sub->add_option("--freeze-controls", common.freeze_controls,
                    "open-loop control table CSV (overrides the config hook)");
    sub->add_option("--fp-tol", common.fp_tol,
                    "fixed-point tolerance factor (of max(1, K))");
    sub->add_option("--fp-max-iter", common.fp_max_iter,
                    "fixed-point iteration budget per window");
    sub->add_option("--window-safety", common.window_safety,
                    "extra multiplicative shrink on the certified window");
    if (with_dump_chains) {
        sub->add_flag("--dump-chains", common.dump_chains,
                      "serialize characteristic chains at the output times");
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"multiscale follicle population simulator"};
    app.require_subcommand(1);

    CommonOptions common;
    int threads = 0;
    std::string method;
    std::vector<int> resolutions{64, 128, 256};

    CLI::App* run = app.add_subcommand(
        "run", "solve and write manifest, maturity series and snapshots");
    add_common_flags(run, common, threads, method, true);

    CLI::App* converge = app.add_subcommand(
        "converge", "grid refinement study against the characteristics solution");
    add_common_flags(converge, common, threads, method, false);
    converge
        ->add_option("--resolutions", resolutions,
                     "cells per axis, strictly increasing (need at least 3)")
        ->delimiter(',');

    CLI::App* verify =
        app.add_subcommand("verify", "run the property suite and write a report");
    add_common_flags(verify, common, threads, method, false);

    CLI::App* constants = app.add_subcommand(
        "constants", "print the certified constants K, K1, K2, delta, C1_f, C2_f");
    add_common_flags(constants, common, threads, method, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        follisim::set_parallel_threads(threads);
        if (!method.empty()) {
            common.method = follisim::cli::method_from_string(method);
        }
        if (run->parsed()) return follisim::cli::cmd_run(common);
        if (converge->parsed()) {
            return follisim::cli::cmd_converge(common, resolutions);
        }
        if (verify->parsed()) return follisim::cli::cmd_verify(common);
        if (constants->parsed()) return follisim::cli::cmd_constants(common);
        std::cerr << "error: no subcommand selected\n";
        return 2;
    } catch (const follisim::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const follisim::NonpositiveK2& e) {
        std::cerr << "assumption violated: " << e.what() << "\n";
        return 3;
    } catch (const follisim::AssumptionViolated& e) {
        std::cerr << "assumption violated: " << e.what() << "\n";
        return 3;
    } catch (const follisim::NoConvergence& e) {
        std::cerr << "no convergence: " << e.what() << "\n";
        return 4;
    } catch (const follisim::BoundViolation& e) {
        std::cerr << "bound violation: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
