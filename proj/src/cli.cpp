#include "tspec/cli.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tspec/bifurcation.hpp"
#include "tspec/models.hpp"
#include "tspec/parallel.hpp"

namespace tspec {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

void reject_unknown(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
    const std::set<std::string> allowed(known.begin(), known.end());
    for (const auto& [key, _] : obj.items()) {
        if (!allowed.count(key)) config_error("unknown key '" + key + "' in " + where);
    }
}

const json* section(const json& doc, const char* name) {
    if (!doc.contains(name)) return nullptr;
    const json& s = doc.at(name);
    if (!s.is_object()) config_error(std::string(name) + " must be an object");
    return &s;
}

template <class T>
std::optional<T> get_opt(const json* obj, const char* key, const std::string& where) {
    if (!obj || !obj->contains(key) || obj->at(key).is_null()) return std::nullopt;
    try {
        return obj->at(key).get<T>();
    } catch (const json::exception&) {
        config_error(where + "." + key + " has the wrong type");
    }
}

double positive(std::optional<double> v, const std::string& name) {
    if (v && !(*v > 0.0)) config_error(name + " must be positive");
    return v.value_or(0.0);
}

PowerLaw power_law(const json* params, const char* key, PowerLaw def) {
    if (!params || !params->contains(key)) return def;
    const json& s = params->at(key);
    if (!s.is_object()) config_error(std::string("model_params.") + key + " must be an object");
    reject_unknown(s, std::string("model_params.") + key, {"coeff", "power"});
    def.coeff = get_opt<double>(&s, "coeff", key).value_or(def.coeff);
    def.power = get_opt<double>(&s, "power", key).value_or(def.power);
    return def;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + path.string());
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NoSignChange:
        case ErrorKind::NoNegativeDirection:
        case ErrorKind::KernelNotSimple:
            return kExitNoK0;
        case ErrorKind::NewtonDiverged:
            return kExitContinuation;
        default:
            return kExitConfig;
    }
}

// manifest.json is written before any heavy work and rewritten at the end.
class Manifest {
public:
    Manifest(const RunConfig& cfg, std::string command)
        : path_(cfg.output_dir / "manifest.json"), start_(std::chrono::steady_clock::now()) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.output_dir, ec);
        if (ec) throw Error(ErrorKind::IoError, "cannot create " + cfg.output_dir.string() + ": " + ec.message());
        doc_["tool"] = "tspec";
        doc_["command"] = std::move(command);
        doc_["config"] = json::parse(cfg.echo);
        doc_["versions"] = {
            {"tspec", std::string(kVersion)},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                  std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
            {"compiler", __VERSION__},
        };
        doc_["threads"] = thread_count();
        doc_["status"] = "running";
        flush();
    }

    json& doc() { return doc_; }

    int finish(int code, const std::string& error = {}) {
        doc_["status"] = code == kExitOk ? "ok" : "failed";
        doc_["exit_code"] = code;
        if (!error.empty()) doc_["error"] = error;
        doc_["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        flush();
        return code;
    }

private:
    void flush() { write_text(path_, doc_.dump(2) + "\n"); }

    std::filesystem::path path_;
    std::chrono::steady_clock::time_point start_;
    json doc_;
};

template <class Body>
int guarded(const RunConfig& cfg, const char* command, std::ostream& err, Body&& body) {
    std::optional<Manifest> manifest;
    try {
        manifest.emplace(cfg, command);
    } catch (const Error& e) {
        err << "tspec: " << e.what() << "\n";
        return kExitConfig;
    }
    try {
        return manifest->finish(body(*manifest));
    } catch (const NewtonDivergedError& e) {
        manifest->doc()["failing_sigma"] = e.sigma();
        err << "tspec: " << e.what() << "\n";
        return manifest->finish(kExitContinuation, e.what());
    } catch (const Error& e) {
        err << "tspec: " << e.what() << "\n";
        return manifest->finish(exit_code_for(e.kind()), e.what());
    } catch (const std::exception& e) {
        err << "tspec: " << e.what() << "\n";
        return manifest->finish(kExitConfig, e.what());
    }
}

K0Options k0_options(const RunConfig& cfg) {
    K0Options o;
    o.tau_neg = cfg.tau_neg;
    o.tau_ker = cfg.tau_ker;
    return o;
}

json hypothesis_json(const RunConfig& cfg, const OperatorFamily& fam, const HypothesisReport& rep,
                     std::optional<double> kernel_k0) {
    json floors = json::array();
    for (const auto& f : rep.h2.floors) floors.push_back(opt_json(f));
    json j;
    j["family"] = rep.family;
    j["model"] = cfg.model;
    j["grid"] = {{"L", fam.grid.half_width}, {"n", fam.grid.n}};
    j["scale"] = fam.scale;
    j["spectral_unit"] = fam.spectral_unit;
    j["h1"] = {{"k_probe", rep.h1.k_probe},
               {"k_probe_source", cfg.k_scan_max ? "config" : "model default"},
               {"lambda_min_at_probe", rep.h1.lambda_min_at_probe},
               {"alpha_required", rep.h1.alpha_required},
               {"pass", rep.h1.pass}};
    j["h2"] = {{"k_samples", rep.h2.k_samples}, {"floors", floors}, {"pass", rep.h2.pass}};
    j["h3"] = {{"k_samples", rep.h3.k_samples},
               {"min_eig_Lprime", rep.h3.min_eig_Lprime},
               {"kernel_k0", opt_json(kernel_k0)},
               {"kernel_quadratic", opt_json(rep.h3.kernel_quadratic)},
               {"pass", rep.h3.pass}};
    j["h4"] = {{"n_negative_at_0", rep.h4.n_negative_at_0},
               {"lambda_neg", rep.h4.lambda_neg},
               {"gap", rep.h4.gap},
               {"tau_neg", rep.h4.tau_neg},
               {"tau_gap", rep.h4.tau_gap},
               {"saturated", rep.h4.saturated},
               {"indicative", true},
               {"pass", rep.h4.pass}};
    j["overall"] = rep.overall;
    return j;
}

void write_kernel_csv(const std::filesystem::path& path, const OperatorFamily& fam, const Vector& phi) {
    std::ostringstream out;
    const int n = fam.grid.n;
    out << (fam.dim_factor == 1 ? "x,U\n" : "x,U1,U2\n");
    for (int i = 0; i < n; ++i) {
        out << fmt(fam.grid.nodes[i]) << ',' << fmt(phi(i));
        if (fam.dim_factor == 2) out << ',' << fmt(phi(n + i));
        out << '\n';
    }
    write_text(path, out.str());
}

std::string k_label(double k) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%g", k);
    return buf;
}

}  // namespace

RunConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        config_error(std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) config_error("configuration must be a JSON object");
    reject_unknown(doc, "config",
                   {"model", "model_params", "grid", "tolerances", "k0_search", "branch", "growth", "output_dir"});

    RunConfig cfg;
    cfg.echo = doc.dump();
    const auto model = get_opt<std::string>(&doc, "model", "config");
    if (!model) config_error("missing 'model'");
    cfg.model = *model;
    if (cfg.model != "kpi" && cfg.model != "ek-gp-dark" && cfg.model != "ek-custom" && cfg.model != "gp-black") {
        config_error("unknown model '" + cfg.model + "'");
    }

    const json* mp = section(doc, "model_params");
    if (mp) reject_unknown(*mp, "model_params", {"p", "c", "profile_csv", "shift", "capillarity", "pressure"});
    cfg.p = get_opt<int>(mp, "p", "model_params").value_or(2);
    cfg.c = get_opt<double>(mp, "c", "model_params");
    cfg.shift = get_opt<double>(mp, "shift", "model_params").value_or(0.0);
    cfg.capillarity = power_law(mp, "capillarity", cfg.capillarity);
    cfg.pressure = power_law(mp, "pressure", cfg.pressure);
    if (auto csv = get_opt<std::string>(mp, "profile_csv", "model_params")) {
        std::filesystem::path p(*csv);
        if (p.is_relative()) p = base_dir / p;
        cfg.profile_csv = p;
    }
    if (cfg.model == "kpi" && (cfg.p < 2 || cfg.p > 4)) config_error("kpi needs p in {2, 3, 4}");
    if ((cfg.model == "ek-gp-dark" || cfg.model == "ek-custom") && !cfg.c) config_error(cfg.model + " needs model_params.c");
    if (cfg.model == "ek-custom") {
        if (!cfg.profile_csv) config_error("ek-custom needs model_params.profile_csv");
        if (!std::filesystem::is_regular_file(*cfg.profile_csv)) {
            config_error("profile file " + cfg.profile_csv->string() + " does not exist");
        }
    }

    const json* grid = section(doc, "grid");
    if (grid) reject_unknown(*grid, "grid", {"L", "n"});
    cfg.L = get_opt<double>(grid, "L", "grid").value_or(cfg.model == "kpi" ? kKpiDefaultL : kGpDefaultL);
    cfg.n = get_opt<int>(grid, "n", "grid").value_or(kDefaultN);
    if (!(cfg.L > 0.0)) config_error("grid.L must be positive");
    if (cfg.n < 3) config_error("grid.n must be at least 3");

    const json* tol = section(doc, "tolerances");
    if (tol) reject_unknown(*tol, "tolerances", {"tau_neg", "tau_ker", "tol_branch"});
    cfg.tau_neg = get_opt<double>(tol, "tau_neg", "tolerances");
    cfg.tau_ker = get_opt<double>(tol, "tau_ker", "tolerances");
    cfg.tol_branch = get_opt<double>(tol, "tol_branch", "tolerances");
    positive(cfg.tau_neg, "tolerances.tau_neg");
    positive(cfg.tau_ker, "tolerances.tau_ker");
    positive(cfg.tol_branch, "tolerances.tol_branch");

    const json* ks = section(doc, "k0_search");
    if (ks) reject_unknown(*ks, "k0_search", {"k_scan_max"});
    cfg.k_scan_max = get_opt<double>(ks, "k_scan_max", "k0_search");
    positive(cfg.k_scan_max, "k0_search.k_scan_max");

    const json* br = section(doc, "branch");
    if (br) reject_unknown(*br, "branch", {"sigma_max", "steps"});
    cfg.sigma_max = get_opt<double>(br, "sigma_max", "branch");
    cfg.steps = get_opt<int>(br, "steps", "branch").value_or(20);
    if (cfg.sigma_max && !(*cfg.sigma_max >= 0.0)) config_error("branch.sigma_max must be nonnegative");
    if (cfg.steps < 1) config_error("branch.steps must be at least 1");

    const json* gr = section(doc, "growth");
    if (gr) reject_unknown(*gr, "growth", {"k_min", "k_max", "samples"});
    cfg.k_min = get_opt<double>(gr, "k_min", "growth");
    cfg.k_max = get_opt<double>(gr, "k_max", "growth");
    cfg.samples = get_opt<int>(gr, "samples", "growth").value_or(8);
    if (cfg.samples < 0) config_error("growth.samples must be nonnegative");
    if (cfg.k_min && !(*cfg.k_min > 0.0)) config_error("growth.k_min must be positive");
    if (cfg.k_min && cfg.k_max && *cfg.k_max < *cfg.k_min) config_error("growth.k_max is below growth.k_min");

    if (auto out = get_opt<std::string>(&doc, "output_dir", "config")) cfg.output_dir = *out;
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) config_error("cannot read config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str(), path.parent_path().empty() ? "." : path.parent_path());
}

OperatorFamily build_family(const RunConfig& cfg) {
    const Grid grid = build_grid(cfg.L, cfg.n);
    OperatorFamily fam;
    if (cfg.model == "kpi") {
        KPIParams p;
        p.p = cfg.p;
        if (cfg.k_scan_max) p.k_scan_max = *cfg.k_scan_max;
        fam = kpi_family(p, grid);
    } else if (cfg.model == "gp-black") {
        GPBlackParams p;
        p.shift = cfg.shift;
        if (cfg.k_scan_max) p.k_scan_max = *cfg.k_scan_max;
        fam = gp_black_family(p, grid);
    } else {
        EKParams p;
        if (cfg.model == "ek-gp-dark") {
            p = gp_madelung_params(*cfg.c);
        } else {
            p = power_law_params(cfg.capillarity.coeff, cfg.capillarity.power, cfg.pressure.coeff, cfg.pressure.power,
                                 *cfg.c, load_profile_csv(*cfg.profile_csv));
        }
        if (cfg.k_scan_max) p.k_scan_max = *cfg.k_scan_max;
        fam = ek_family(p, grid);
    }
    return fam;
}

int cmd_hypotheses(const RunConfig& cfg, std::ostream& err) {
    return guarded(cfg, "hypotheses", err, [&](Manifest&) {
        const OperatorFamily fam = build_family(cfg);
        HypothesisOptions opts;
        opts.tau_neg = cfg.tau_neg;
        std::optional<double> kernel_k0;
        try {
            const K0Result k0 = find_k0(fam, k0_options(cfg));
            opts.kernel = std::make_pair(k0.k0, k0.kernel);
            kernel_k0 = k0.k0;
        } catch (const Error&) {
            // no kernel to test; h3 falls back to the L' samples
        }
        const HypothesisReport rep = check_hypotheses(fam, opts);
        write_text(cfg.output_dir / "hypothesis_report.json", hypothesis_json(cfg, fam, rep, kernel_k0).dump(2) + "\n");
        if (!rep.overall) {
            err << "tspec: hypotheses failed:" << (rep.h1.pass ? "" : " h1") << (rep.h2.pass ? "" : " h2")
                << (rep.h3.pass ? "" : " h3") << (rep.h4.pass ? "" : " h4") << "\n";
        }
        return rep.overall ? kExitOk : kExitHypothesis;
    });
}

int cmd_spectrum(const RunConfig& cfg, double k, std::ostream& err) {
    return guarded(cfg, "spectrum", err, [&](Manifest& m) {
        const OperatorFamily fam = build_family(cfg);
        const SpectralReport rep = spectral_report(fam, k, cfg.tau_neg.value_or(default_tau_neg(fam)), 8);
        std::ostringstream out;
        out << "index,eigenvalue\n";
        for (std::size_t i = 0; i < rep.low_eigs.size(); ++i) out << i << ',' << fmt(rep.low_eigs[i]) << '\n';
        const std::string name = "spectrum_k" + k_label(k) + ".csv";
        write_text(cfg.output_dir / name, out.str());
        m.doc()["outputs"] = {name};
        return kExitOk;
    });
}

int cmd_find_k0(const RunConfig& cfg, std::ostream& err) {
    return guarded(cfg, "find-k0", err, [&](Manifest&) {
        const OperatorFamily fam = build_family(cfg);
        const K0Result r = find_k0(fam, k0_options(cfg));
        json j;
        j["family"] = fam.name;
        j["k0"] = r.k0;
        j["gap"] = r.report.gap;
        j["kernel_file"] = "kernel.csv";
        j["kernel_eigenvalue"] = r.kernel_eig;
        j["tau_ker"] = r.tau_ker;
        j["low_eigs"] = r.report.low_eigs;
        j["n_negative"] = r.report.n_negative;
        write_text(cfg.output_dir / "k0.json", j.dump(2) + "\n");
        write_kernel_csv(cfg.output_dir / "kernel.csv", fam, r.kernel);
        return kExitOk;
    });
}

int cmd_branch(const RunConfig& cfg, std::ostream& err) {
    std::ostringstream rows;
    rows << "sigma,k,residual,norm_V\n";
    std::optional<std::filesystem::path> csv;
    const int code = guarded(cfg, "branch", err, [&](Manifest& m) {
        const OperatorFamily fam = build_family(cfg);
        const K0Result r = find_k0(fam, k0_options(cfg));
        m.doc()["k0"] = r.k0;
        const double tol = cfg.tol_branch.value_or(default_tol_branch(fam));
        m.doc()["scale"] = fam.scale;
        m.doc()["tol_branch"] = tol;
        bool all_ok = true;
        BranchOptions opts;
        opts.tol_branch = tol;
        opts.on_point = [&](const BranchPoint& p) {
            rows << fmt(p.sigma) << ',' << fmt(p.k) << ',' << fmt(p.residual) << ',' << fmt(p.V.norm()) << '\n';
            all_ok = all_ok && p.residual <= tol;
        };
        csv = cfg.output_dir / "branch.csv";
        trace_branch(fam, r.k0, r.kernel, uniform_schedule(cfg.sigma_max.value_or(0.1 * fam.spectral_unit), cfg.steps),
                     opts);
        write_text(*csv, rows.str());
        return all_ok ? kExitOk : kExitContinuation;
    });
    // rows converged before a failure are still worth keeping
    if (code == kExitContinuation && csv) {
        try {
            write_text(*csv, rows.str());
        } catch (const Error&) {
        }
    }
    return code;
}

int cmd_growth(const RunConfig& cfg, std::ostream& err) {
    return guarded(cfg, "growth", err, [&](Manifest& m) {
        std::ostringstream out;
        out << "k,sigma,residual\n";
        if (cfg.samples == 0) {
            write_text(cfg.output_dir / "growth.csv", out.str());
            return kExitOk;
        }
        const OperatorFamily fam = build_family(cfg);
        const K0Result r = find_k0(fam, k0_options(cfg));
        m.doc()["k0"] = r.k0;
        const double k_min = cfg.k_min.value_or(0.2 * r.k0);
        const double k_max = cfg.k_max.value_or(std::max(0.95 * r.k0, k_min));
        std::vector<double> ks(static_cast<std::size_t>(cfg.samples));
        for (int i = 0; i < cfg.samples; ++i) {
            ks[i] = cfg.samples == 1 ? k_min : k_min + (k_max - k_min) * i / (cfg.samples - 1);
        }
        const auto entries = growth_curve(fam, r.k0, r.kernel, ks);
        int converged = 0;
        for (const auto& e : entries) {
            out << fmt(e.k) << ',' << (e.sigma ? fmt(*e.sigma) : "") << ',' << (e.residual ? fmt(*e.residual) : "")
                << '\n';
            if (e.sigma) ++converged;
        }
        write_text(cfg.output_dir / "growth.csv", out.str());
        m.doc()["converged"] = converged;
        return 5 * converged >= 4 * cfg.samples ? kExitOk : kExitContinuation;
    });
}

int run_cli(const std::string& command, const std::filesystem::path& config_path, std::optional<double> k,
            std::optional<std::filesystem::path> out_dir, std::ostream& err) {
    RunConfig cfg;
    try {
        cfg = load_config(config_path);
    } catch (const Error& e) {
        err << "tspec: " << e.what() << "\n";
        return kExitConfig;
    }
    if (out_dir) cfg.output_dir = *out_dir;
    if (command == "hypotheses") return cmd_hypotheses(cfg, err);
    if (command == "spectrum") return cmd_spectrum(cfg, k.value_or(0.0), err);
    if (command == "find-k0") return cmd_find_k0(cfg, err);
    if (command == "branch") return cmd_branch(cfg, err);
    if (command == "growth") return cmd_growth(cfg, err);
    err << "tspec: unknown command '" << command << "'\n";
    return kExitConfig;
}

}  // namespace tspec
