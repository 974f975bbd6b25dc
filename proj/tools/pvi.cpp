// Scenario runner: solves a configured problem, runs the diagnostics and
// writes fields.csv, residuals.csv, outer_history.csv and diagnostics.json.
//
// Exit status: 0 all diagnostics pass, 1 a diagnostic failed, 2 invalid
// configuration, 3 solver non-convergence, 4 unexpected error.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>

#include "CLI11.hpp"

#include "pvi/io.hpp"
#include "pvi/runner.hpp"
#include "pvi/scenario.hpp"

namespace {

enum Exit { kPass = 0, kDiagnosticFailure = 1, kConfigError = 2, kNonConvergence = 3, kInternal = 4 };

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

// "builtin:<name>" selects a shipped scenario; anything else is a file path.
pvi::Scenario load(const Common& c) {
    const std::string prefix = "builtin:";
    pvi::Scenario s = c.config.rfind(prefix, 0) == 0 ? pvi::builtin_scenario(c.config.substr(prefix.size()))
                                                     : pvi::load_scenario(c.config);
    if (c.seed) s.seed = *c.seed;
    return s;
}

std::filesystem::path out_dir(const Common& c) {
    std::string dir = c.out;
    if (dir.empty()) {
        const char* env = std::getenv("PVI_OUT_DIR");
        dir = env && *env ? env : "pvi_out";
    }
    std::filesystem::create_directories(dir);
    return dir;
}

void write_history(const std::filesystem::path& dir, const std::vector<double>& history) {
    auto os = pvi::io::open_out((dir / "outer_history.csv").string());
    pvi::io::write_outer_history_csv(os, history);
}

int run(const Common& c) {
    const pvi::Scenario s = load(c);
    const auto dir = out_dir(c);
    pvi::RunResult r;
    try {
        r = pvi::solve_scenario(s);
    } catch (const pvi::NonConvergenceError& e) {
        write_history(dir, e.history());
        std::cerr << "pvi: " << e.what() << '\n';
        return kNonConvergence;
    }
    {
        auto os = pvi::io::open_out((dir / "fields.csv").string());
        pvi::io::write_fields_csv(os, r.trajectory);
    }
    {
        auto os = pvi::io::open_out((dir / "residuals.csv").string());
        pvi::io::write_residuals_csv(os, r.trajectory);
    }
    write_history(dir, r.history);

    std::mt19937_64 rng(s.seed);
    pvi::DiagnosticsReport rep = pvi::diagnose(s, r.trajectory, rng);
    rep.values["outer_iterations"] = r.outer_iterations;
    {
        auto os = pvi::io::open_out((dir / "diagnostics.json").string());
        pvi::io::write_diagnostics_json(os, rep);
    }
    if (!c.quiet) {
        std::cout << s.name << ": " << r.outer_iterations << " outer iteration(s), output in " << dir.string()
                  << '\n';
        for (const auto& [k, v] : rep.flags) std::cout << "  " << (v ? "pass" : "FAIL") << "  " << k << '\n';
    }
    return rep.passed() ? kPass : kDiagnosticFailure;
}

int compare(const Common& c, const std::string& mode, int levels) {
    const pvi::Scenario s = load(c);
    const auto m = pvi::parse_refine_mode(mode);
    const auto dir = out_dir(c);
    const auto rows = pvi::compare_scenario(s, m, levels);
    {
        auto os = pvi::io::open_out((dir / "convergence.csv").string());
        pvi::io::write_convergence_csv(os, mode, rows);
    }
    const bool dec = pvi::strictly_decreasing(rows);
    if (!c.quiet) {
        pvi::io::write_convergence_csv(std::cout, mode, rows);
        std::cout << (dec ? "decreasing" : "NOT decreasing") << '\n';
    }
    return dec ? kPass : kDiagnosticFailure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Parabolic variational inequality scenario runner"};
    app.require_subcommand(1);
    Common common;
    std::string mode = "constraint";
    int levels = 5;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("config", common.config, "scenario INI file or builtin:<name>")->required();
        sub->add_option("--out", common.out, "output directory (default $PVI_OUT_DIR or ./pvi_out)");
        sub->add_option("--seed", common.seed, "override the scenario seed");
        sub->add_flag("--quiet", common.quiet, "suppress the summary on stdout");
    };
    auto* run_cmd = app.add_subcommand("run", "solve a scenario and run its diagnostics");
    add_common(run_cmd);
    auto* cmp_cmd = app.add_subcommand("compare", "refinement study written to convergence.csv");
    add_common(cmp_cmd);
    cmp_cmd->add_option("--refine", mode, "time, space or constraint")
        ->check(CLI::IsMember({"time", "space", "constraint"}));
    cmp_cmd->add_option("--levels", levels, "number of refinement levels")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kPass : kConfigError;
    }

    try {
        if (run_cmd->parsed()) return run(common);
        return compare(common, mode, levels);
    } catch (const pvi::ConfigError& e) {
        std::cerr << "pvi: config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const pvi::InfeasibleError& e) {
        std::cerr << "pvi: config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const pvi::CoefficientBoundsError& e) {
        std::cerr << "pvi: config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const pvi::PreconditionError& e) {
        std::cerr << "pvi: config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const pvi::NonConvergenceError& e) {
        std::cerr << "pvi: " << e.what() << '\n';
        return kNonConvergence;
    } catch (const pvi::SolverError& e) {
        std::cerr << "pvi: " << e.what() << " (last residual " << e.last_residual() << ")\n";
        return kNonConvergence;
    } catch (const std::exception& e) {
        std::cerr << "pvi: " << e.what() << '\n';
        return kInternal;
    }
}
