// pm — partial-migration population model analysis CLI.
//
// Subcommands: validate, r0, classify, simulate, sweep, sensitivity, verify.
// Exit codes: 0 success, 1 validation/analysis failure, 2 usage error.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pm/experiment.hpp"
#include "pm/io.hpp"

namespace {

std::string fmt(double v) {
    if (std::isfinite(v) && std::abs(v) < 1e6) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.12f", v);
        return buf;
    }
    return pm::format_real(v, 12);
}

struct CommonArgs {
    std::string spec_path;
    std::string out_path;
    std::uint64_t seed = 0;
    std::size_t grid = 101;
    double phi = -1.0;
    std::size_t steps = pm::kDefaultMaxSteps;
    double tol = pm::kOrbitConvergenceTol;
    unsigned threads = 0;
    std::string mode = "phi";
};

pm::ModelSpec load_and_validate(const std::string& path) {
    pm::ModelSpec spec = pm::load_spec(path);
    auto rep = pm::validate(spec);
    if (!rep.ok()) {
        std::cerr << "spec is invalid:\n";
        for (const auto& v : rep.violations) std::cerr << "  - " << v << "\n";
        throw std::domain_error("invalid spec");
    }
    return spec;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"partial-migration population models: thresholds, dynamics, sweeps"};
    app.require_subcommand(1);

    CommonArgs args;

    auto add_spec_flag = [&](CLI::App* cmd, bool required = true) {
        auto* opt = cmd->add_option("--spec", args.spec_path, "model spec JSON file");
        if (required) opt->required();
    };

    auto* cmd_validate = app.add_subcommand("validate", "check a spec against the model assumptions");
    add_spec_flag(cmd_validate);

    auto* cmd_r0 = app.add_subcommand("r0", "basic reproduction number and growth regime");
    add_spec_flag(cmd_r0);

    auto* cmd_classify = app.add_subcommand("classify", "dominant eigenvalue, R0, and regime");
    add_spec_flag(cmd_classify);

    auto* cmd_simulate = app.add_subcommand("simulate", "iterate the (possibly nonlinear) map");
    add_spec_flag(cmd_simulate);
    cmd_simulate->add_option("--out", args.out_path, "trajectory CSV output path");
    cmd_simulate->add_option("--steps", args.steps, "maximum steps");
    cmd_simulate->add_option("--tol", args.tol, "convergence tolerance (sup-norm relative)");

    auto* cmd_sweep = app.add_subcommand("sweep", "R0 over an allocation grid");
    add_spec_flag(cmd_sweep);
    cmd_sweep->add_option("--mode", args.mode, "phi (single egg pool) or phi2 (two pools)")
        ->check(CLI::IsMember({"phi", "phi2"}));
    cmd_sweep->add_option("--grid", args.grid, "grid points per axis");
    cmd_sweep->add_option("--out", args.out_path, "sweep table CSV output path");
    cmd_sweep->add_option("--threads", args.threads, "cap on worker threads");

    auto* cmd_sensitivity = app.add_subcommand("sensitivity", "dR0/dtheta for every parameter");
    add_spec_flag(cmd_sensitivity);
    cmd_sensitivity->add_option("--out", args.out_path, "sensitivity table CSV output path");

    auto* cmd_verify = app.add_subcommand("verify", "run the invariant suites on bundled specs");
    cmd_verify->add_option("--seed", args.seed, "random seed for the property suites");
    cmd_verify->add_option("--out", args.out_path, "verification report JSON output path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (cmd_validate->parsed()) {
            pm::ModelSpec spec = pm::load_spec(args.spec_path);
            auto rep = pm::validate(spec);
            if (rep.ok()) {
                std::cout << "valid\n";
                return 0;
            }
            std::cout << "invalid:\n";
            for (const auto& v : rep.violations) std::cout << "  - " << v << "\n";
            return 1;
        }

        if (cmd_r0->parsed()) {
            pm::ModelSpec spec = load_and_validate(args.spec_path);
            const double r0 = pm::r0_closed_form(spec);
            std::cout << "R0 = " << fmt(r0) << "\n";
            std::cout << "regime = " << pm::to_string(pm::regime_of(r0)) << "\n";
            return 0;
        }

        if (cmd_classify->parsed()) {
            pm::ModelSpec spec = load_and_validate(args.spec_path);
            auto g = pm::classify(spec);
            std::cout << "lambda = " << fmt(g.lambda) << "\n";
            std::cout << "R0 = " << fmt(g.r0) << "\n";
            std::cout << "regime = " << pm::to_string(g.regime) << "\n";
            return 0;
        }

        if (cmd_simulate->parsed()) {
            pm::ScenarioConfig cfg;
            cfg.task = "simulate";
            cfg.spec = load_and_validate(args.spec_path);
            cfg.max_steps = args.steps;
            cfg.tol = args.tol;
            if (!args.out_path.empty()) cfg.out_path = args.out_path;
            auto result = pm::run_scenario(cfg);
            std::cout << "steps = " << result.summary["steps_taken"] << "\n";
            std::cout << "converged = " << (result.summary["converged"].get<bool>() ? "yes" : "no")
                      << "\n";
            std::cout << "final = [";
            const auto& fin = result.summary["final_state"];
            for (std::size_t i = 0; i < fin.size(); ++i)
                std::cout << (i ? ", " : "") << fmt(fin[i].get<double>());
            std::cout << "]\n";
            return 0;
        }

        if (cmd_sweep->parsed()) {
            pm::ScenarioConfig cfg;
            cfg.task = (args.mode == "phi") ? "sweep_phi" : "sweep_phi2";
            cfg.spec = load_and_validate(args.spec_path);
            cfg.grid = args.grid;
            cfg.threads = args.threads;
            if (!args.out_path.empty()) cfg.out_path = args.out_path;
            auto result = pm::run_scenario(cfg);
            std::cout << "rows = " << result.summary["rows"] << "\n";
            std::cout << "max R0 = " << fmt(result.summary["max_r0"].get<double>()) << "\n";
            if (result.summary.contains("argmax_phi"))
                std::cout << "argmax phi = " << fmt(result.summary["argmax_phi"].get<double>())
                          << "\n";
            if (result.summary.contains("max_on_predicted_boundary"))
                std::cout << "max on predicted boundary = "
                          << (result.summary["max_on_predicted_boundary"].get<bool>() ? "yes"
                                                                                      : "no")
                          << "\n";
            return 0;
        }

        if (cmd_sensitivity->parsed()) {
            pm::ScenarioConfig cfg;
            cfg.task = "sensitivity";
            cfg.spec = load_and_validate(args.spec_path);
            if (!args.out_path.empty()) cfg.out_path = args.out_path;
            auto result = pm::run_scenario(cfg);
            for (const auto& row : result.summary["sensitivities"])
                std::cout << row["parameter"].get<std::string>() << ": dR0 = "
                          << fmt(row["dr0"].get<double>()) << "\n";
            return 0;
        }

        if (cmd_verify->parsed()) {
            pm::ScenarioConfig cfg;
            cfg.task = "verify";
            cfg.seed = args.seed;
            cfg.out_path = args.out_path.empty() ? std::string("verify_report.json")
                                                 : args.out_path;
            auto result = pm::run_scenario(cfg);
            for (const auto& check : result.summary["checks"])
                std::cout << (check["passed"].get<bool>() ? "[pass] " : "[FAIL] ")
                          << check["name"].get<std::string>() << "\n";
            std::cout << "verdict: " << result.summary["verdict"].get<std::string>() << "\n";
            std::cout << "report: " << result.summary["out"].get<std::string>() << "\n";
            return result.passed ? 0 : 1;
        }
    } catch (const std::domain_error&) {
        return 1;  // invalid spec (already reported)
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;  // unreadable file / malformed JSON
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
