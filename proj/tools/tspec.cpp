#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "tspec/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Transverse instability checks for solitary waves"};
    app.set_version_flag("--version", std::string(tspec::kVersion));

    std::string command;
    std::string config;
    std::optional<double> k;
    std::optional<std::string> out;
    app.add_option("command", command, "hypotheses | spectrum | find-k0 | branch | growth")
        ->required()
        ->check(CLI::IsMember({"hypotheses", "spectrum", "find-k0", "branch", "growth"}));
    app.add_option("--config", config, "run configuration (JSON)")->required();
    app.add_option("--k", k, "wavenumber for the spectrum command (default 0)");
    app.add_option("--out", out, "output directory, overrides output_dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : tspec::kExitConfig;
    }
    std::optional<std::filesystem::path> out_dir;
    if (out) out_dir = *out;
    return tspec::run_cli(command, config, k, out_dir, std::cerr);
}
