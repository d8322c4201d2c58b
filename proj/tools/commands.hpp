#pragma once

#include <optional>
#include <string>
#include <vector>

#include "config.hpp"

namespace follisim::cli {

// Flag-level overrides applied on top of the loaded configuration.
struct CommonOptions {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<Method> method;
    std::string freeze_controls; // control table path; overrides the config hook
    std::optional<double> fp_tol;
    std::optional<int> fp_max_iter;
    std::optional<double> window_safety;
    bool dump_chains = false;
};

// Loads the configuration named by the options and applies the overrides.
RunConfig load_with_overrides(const CommonOptions& opt);

// Subcommand bodies. They throw the library error types; the entry point maps
// those to exit codes. Return values are exit codes for non-error outcomes
// (cmd_verify returns 1 when a property fails).
int cmd_run(const CommonOptions& opt);
int cmd_converge(const CommonOptions& opt, const std::vector<int>& resolutions);
int cmd_verify(const CommonOptions& opt);
int cmd_constants(const CommonOptions& opt);

} // namespace follisim::cli
