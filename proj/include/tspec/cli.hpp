#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>

#include "tspec/opcore.hpp"

namespace tspec {

inline constexpr std::string_view kVersion = "0.1.0";

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 1,
    kExitHypothesis = 2,
    kExitNoK0 = 3,
    kExitContinuation = 4,
};

struct PowerLaw {
    double coeff = 1.0;
    double power = 0.0;
};

struct RunConfig {
    std::string model;  // kpi | ek-gp-dark | ek-custom | gp-black

    int p = 2;
    std::optional<double> c;
    std::optional<std::filesystem::path> profile_csv;
    double shift = 0.0;
    PowerLaw capillarity{0.25, -1.0};
    PowerLaw pressure{1.0, 0.0};

    double L = 0.0;
    int n = 0;

    std::optional<double> tau_neg;
    std::optional<double> tau_ker;
    std::optional<double> tol_branch;
    std::optional<double> k_scan_max;

    std::optional<double> sigma_max;  // default 0.1 * spectral_unit
    int steps = 20;

    std::optional<double> k_min;  // defaults 0.2 k0 and 0.95 k0
    std::optional<double> k_max;
    int samples = 8;

    std::filesystem::path output_dir = ".";

    std::string echo;  // the parsed JSON document, re-serialized
};

/// Parses and validates a configuration document. Relative profile paths are
/// resolved against `base_dir`. Throws Error(ConfigError).
RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir = ".");

RunConfig load_config(const std::filesystem::path& path);

OperatorFamily build_family(const RunConfig& cfg);

int cmd_hypotheses(const RunConfig& cfg, std::ostream& err);
int cmd_spectrum(const RunConfig& cfg, double k, std::ostream& err);
int cmd_find_k0(const RunConfig& cfg, std::ostream& err);
int cmd_branch(const RunConfig& cfg, std::ostream& err);
int cmd_growth(const RunConfig& cfg, std::ostream& err);

/// Full front-end: load the config, apply overrides and dispatch.
int run_cli(const std::string& command, const std::filesystem::path& config_path, std::optional<double> k,
            std::optional<std::filesystem::path> out_dir, std::ostream& err);

}  // namespace tspec
