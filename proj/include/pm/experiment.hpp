#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pm/dynamics.hpp"
#include "pm/io.hpp"
#include "pm/model.hpp"
#include "pm/sampling.hpp"
#include "pm/spectral.hpp"

namespace pm {

inline constexpr const char* kToolVersion = "0.1.0";

// ---------------------------------------------------------------------------
// Sweep tables
// ---------------------------------------------------------------------------

struct SweepRow {
    std::vector<double> parameters;
    double r0 = 0.0;
    Regime regime = Regime::Threshold;
    std::string note;  // e.g. the parameter name in sensitivity tables
};

struct SweepTable {
    std::vector<std::string> parameter_names;
    std::string value_column = "r0";
    std::vector<SweepRow> rows;
    std::string spec_hash;
    std::string grid_description;

    std::string to_csv() const {
        std::ostringstream out;
        out << "# spec_hash=" << spec_hash << " grid=" << csv_field(grid_description)
            << " tool_version=" << kToolVersion << "\n";
        for (std::size_t i = 0; i < parameter_names.size(); ++i)
            out << (i ? "," : "") << csv_field(parameter_names[i]);
        out << "," << value_column << ",regime\n";
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.parameters.size(); ++i)
                out << (i ? "," : "") << format_real(row.parameters[i]);
            if (!row.note.empty()) out << csv_field(row.note);
            out << "," << format_real(row.r0) << "," << to_string(row.regime) << "\n";
        }
        return out.str();
    }
};

inline Regime regime_of(double r0) {
    if (std::abs(r0 - 1.0) <= kThresholdTolerance) return Regime::Threshold;
    return r0 < 1.0 ? Regime::Decline : Regime::Growth;
}

/// R0^{c1}(phi) over a grid in [0,1]. Checks the linearity of the convex
/// combination (least-squares line residual) and that the maximum sits at an
/// endpoint unless the two isolated reproduction numbers coincide.
inline SweepTable sweep_phi(const SingleEggSpec& spec, const std::vector<double>& grid) {
    for (double phi : grid)
        if (!(phi >= 0.0 && phi <= 1.0))
            throw std::invalid_argument("sweep_phi: grid values must lie in [0,1]");
    const double r0s = r0_isolated_closed_form(spec.migrant);
    const double r0r = r0_isolated_closed_form(spec.resident);
    SweepTable table;
    table.parameter_names = {"phi"};
    table.spec_hash = spec_hash(ModelSpec(spec));
    table.grid_description = std::to_string(grid.size()) + "-point phi grid";
    for (double phi : grid) {
        const double r0 = phi * r0s + (1.0 - phi) * r0r;
        table.rows.push_back({{phi}, r0, regime_of(r0), ""});
    }
    // linearity check: residual of the exact line through (phi, R0)
    double max_resid = 0.0;
    for (const auto& row : table.rows) {
        const double fit = r0r + (r0s - r0r) * row.parameters[0];
        max_resid = std::max(max_resid, std::abs(row.r0 - fit));
    }
    if (max_resid > 1e-10 * (1.0 + std::max(std::abs(r0s), std::abs(r0r))))
        throw std::logic_error("sweep_phi: convex-combination linearity violated");
    return table;
}

inline std::vector<double> uniform_grid(std::size_t points) {
    if (points < 2) throw std::invalid_argument("uniform_grid: need at least 2 points");
    std::vector<double> g(points);
    for (std::size_t i = 0; i < points; ++i)
        g[i] = static_cast<double>(i) / static_cast<double>(points - 1);
    return g;
}

/// Full R0^{c2} surface over grid_s x grid_r.
inline SweepTable sweep_phi2(const TwoEggSpec& spec, const std::vector<double>& grid_s,
                             const std::vector<double>& grid_r) {
    for (double p : grid_s)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("sweep_phi2: grid values must lie in [0,1]");
    for (double p : grid_r)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("sweep_phi2: grid values must lie in [0,1]");
    const double r0s = r0_isolated_closed_form(spec.migrant);
    const double r0r = r0_isolated_closed_form(spec.resident);
    SweepTable table;
    table.parameter_names = {"phi_s", "phi_r"};
    table.spec_hash = spec_hash(ModelSpec(spec));
    table.grid_description = std::to_string(grid_s.size()) + "x" +
                             std::to_string(grid_r.size()) + " allocation grid";
    for (double ps : grid_s)
        for (double pr : grid_r) {
            const double r0 = r0_two_egg_from_isolated(r0s, r0r, ps, pr);
            table.rows.push_back({{ps, pr}, r0, regime_of(r0), ""});
        }
    return table;
}

/// Central finite differences dR0/dtheta for the requested parameters.
/// Step defaults to 1e-6 relative to the parameter magnitude with a 1e-9
/// floor. Parameters whose perturbation leaves the valid region are marked in
/// the row note rather than aborting the table.
inline SweepTable sensitivity_table(const ModelSpec& spec,
                                    const std::vector<ParamHandle>& parameters,
                                    std::optional<double> step = std::nullopt) {
    require_valid(spec);
    SweepTable table;
    table.parameter_names = {"parameter"};
    table.value_column = "dr0";
    table.spec_hash = spec_hash(spec);
    table.grid_description = std::to_string(parameters.size()) + " parameters";
    for (const auto& h : parameters) {
        SweepRow row;
        row.note = h.name();
        double hstep;
        if (step) {
            hstep = *step;
        } else {
            const double mag = std::abs(detail::current_value(spec, h));
            hstep = std::max(1e-6 * mag, 1e-9);
        }
        try {
            row.r0 = sensitivity(spec, h, hstep);
            row.regime = regime_of(r0_closed_form(spec));
        } catch (const std::domain_error&) {
            row.note += " (perturbation leaves valid region)";
            row.r0 = std::numeric_limits<double>::quiet_NaN();
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

// ---------------------------------------------------------------------------
// Verification suite
// ---------------------------------------------------------------------------

struct VerifyCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct VerifyReport {
    std::uint64_t seed = 0;
    std::vector<VerifyCheck> checks;
    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
    json to_json() const {
        json j;
        j["tool_version"] = kToolVersion;
        j["seed"] = seed;
        j["verdict"] = passed() ? "pass" : "fail";
        json arr = json::array();
        for (const auto& c : checks)
            arr.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
        j["checks"] = arr;
        return j;
    }
};

/// Bundled example specs exercised by the verification suite and shipped as
/// JSON files alongside the CLI.
inline std::vector<std::pair<std::string, ModelSpec>> bundled_example_specs() {
    IsolatedSpec migrant;  // n=3, R0 = 4
    migrant.transitions = {TransitionRule::constant(0.5), TransitionRule::constant(0.4),
                           TransitionRule::constant(0.2)};
    migrant.fecundities = {3.0, 10.0};

    IsolatedSpec resident;  // n=2, R0 = 0.625
    resident.transitions = {TransitionRule::constant(0.25), TransitionRule::constant(0.2)};
    resident.fecundities = {2.0};

    IsolatedSpec bh_grow;  // R0 = 8
    bh_grow.transitions = {TransitionRule::beverton_holt(0.5, 1.0),
                           TransitionRule::beverton_holt(0.5, 1.0)};
    bh_grow.fecundities = {8.0};

    IsolatedSpec bh_decline;  // R0 = 0.8
    bh_decline.transitions = {TransitionRule::beverton_holt(0.5, 1.0),
                              TransitionRule::beverton_holt(0.5, 1.0)};
    bh_decline.fecundities = {0.8};

    SingleEggSpec coupled{migrant, resident, 0.5};
    TwoEggSpec two_egg{migrant, resident, 0.5, 0.5};

    IsolatedSpec bh_migrant;
    bh_migrant.transitions = {TransitionRule::beverton_holt(0.6, 0.5),
                              TransitionRule::beverton_holt(0.5, 1.0),
                              TransitionRule::beverton_holt(0.4, 2.0)};
    bh_migrant.fecundities = {1.0, 6.0};
    IsolatedSpec bh_resident;
    bh_resident.transitions = {TransitionRule::beverton_holt(0.5, 2.0),
                               TransitionRule::beverton_holt(0.3, 1.0)};
    bh_resident.fecundities = {5.0};
    SingleEggSpec bh_coupled{bh_migrant, bh_resident, 0.4};
    TwoEggSpec bh_two_egg{bh_migrant, bh_resident, 0.6, 0.3};

    return {
        {"migrant_linear", ModelSpec(migrant)},
        {"resident_linear", ModelSpec(resident)},
        {"isolated_bh_growth", ModelSpec(bh_grow)},
        {"isolated_bh_decline", ModelSpec(bh_decline)},
        {"single_egg_linear", ModelSpec(coupled)},
        {"two_egg_linear", ModelSpec(two_egg)},
        {"single_egg_bh", ModelSpec(bh_coupled)},
        {"two_egg_bh", ModelSpec(bh_two_egg)},
    };
}

/// Runs the module invariant suites at desk scale: closed-form/oracle
/// equivalence, the lambda/R0 trichotomy, convexity and range bounds of the
/// coupled reproduction numbers, spectral-radius monotonicity, the CLST
/// hypothesis checks on the bundled density-dependent specs, and the
/// order-interval bound. Deterministic for a fixed seed.
inline VerifyReport run_verification(std::uint64_t seed) {
    VerifyReport report;
    report.seed = seed;
    auto record = [&](const std::string& name, bool ok, const std::string& detail) {
        report.checks.push_back({name, ok, detail});
    };

    // 1. closed form vs dense next-generation oracle on random specs
    {
        SpecSampler sampler(seed);
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            ModelSpec spec;
            const std::size_t n = sampler.stage_count(), m = sampler.stage_count();
            switch (k % 3) {
                case 0: spec = sampler.isolated_constant(n); break;
                case 1: spec = sampler.single_egg_constant(n, m); break;
                default: spec = sampler.two_egg_constant(n, m); break;
            }
            const double closed = r0_closed_form(spec);
            const double oracle = r0_next_generation(spec);
            worst = std::max(worst, std::abs(closed - oracle) / (std::abs(oracle) + 1e-300));
        }
        record("closed_form_matches_next_generation", worst <= 1e-10,
               "max relative deviation " + format_real(worst, 3));
    }

    // 2. lambda / R0 ordering
    {
        SpecSampler sampler(seed + 1);
        bool ok = true;
        std::string detail = "100 random specs";
        for (int k = 0; k < 100 && ok; ++k) {
            ModelSpec spec = (k % 2 == 0)
                                 ? ModelSpec(sampler.isolated_constant(sampler.stage_count()))
                                 : ModelSpec(sampler.single_egg_constant(sampler.stage_count(),
                                                                         sampler.stage_count()));
            try {
                classify(spec);  // throws on ordering violation
            } catch (const std::logic_error& e) {
                ok = false;
                detail = e.what();
            }
        }
        record("lambda_r0_ordering", ok, detail);
    }

    // 3. convex combination of the single-pool R0 over a phi grid
    {
        SpecSampler sampler(seed + 2);
        bool ok = true;
        std::string detail = "20 random coupled specs, 101-point grid";
        for (int k = 0; k < 20 && ok; ++k) {
            SingleEggSpec s = sampler.single_egg_constant(sampler.stage_count(),
                                                          sampler.stage_count());
            try {
                sweep_phi(s, uniform_grid(101));  // throws if linearity fails
            } catch (const std::logic_error& e) {
                ok = false;
                detail = e.what();
            }
        }
        record("single_egg_convexity", ok, detail);
    }

    // 4. range bound of coupled R0 between the isolated values
    {
        SpecSampler sampler(seed + 3);
        bool ok = true;
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            TwoEggSpec s = sampler.two_egg_constant(sampler.stage_count(),
                                                    sampler.stage_count());
            const double r0s = r0_isolated_closed_form(s.migrant);
            const double r0r = r0_isolated_closed_form(s.resident);
            const double lo = std::min(r0s, r0r), hi = std::max(r0s, r0r);
            for (double ps : uniform_grid(21))
                for (double pr : uniform_grid(21)) {
                    const double v = r0_two_egg_from_isolated(r0s, r0r, ps, pr);
                    worst = std::max(worst, std::max(lo - v, v - hi));
                }
        }
        ok = worst <= 1e-10;
        record("two_egg_range_bound", ok, "max excursion " + format_real(worst, 3));
    }

    // 5. spectral radius monotone in matrix entries
    {
        SpecSampler sampler(seed + 4);
        bool ok = true;
        for (int k = 0; k < 20 && ok; ++k) {
            IsolatedSpec s = sampler.isolated_constant(sampler.stage_count());
            Matrix a = linearization(ModelSpec(s));
            const double base = dominant_eigenvalue(a);
            const std::size_t i = static_cast<std::size_t>(sampler.uniform(0, 1) * a.rows()) %
                                  a.rows();
            const std::size_t j = static_cast<std::size_t>(sampler.uniform(0, 1) * a.cols()) %
                                  a.cols();
            a(i, j) += 0.1;
            if (dominant_eigenvalue(a) < base - 1e-9) ok = false;
        }
        record("spectral_radius_monotone", ok, "20 sampled entry bumps");
    }

    // 6. CLST hypotheses on the bundled density-dependent specs
    {
        bool ok = true;
        std::string detail;
        for (const auto& [name, spec] : bundled_example_specs()) {
            if (!all_density_dependent(spec)) continue;
            const std::size_t dim = state_dimension(spec);
            auto mono = check_monotone(spec, 1000, seed + 5);
            auto sub = check_strong_sublinear(spec, dim, 200, seed + 6);
            auto pos = check_eventual_positivity(spec, dim, 50, seed + 7);
            if (!mono.passed() || !sub.passed() || !pos.passed()) {
                ok = false;
                detail = name + ": " + (!mono.passed() ? "monotonicity" :
                                        !sub.passed() ? "strong sublinearity" :
                                                        "eventual positivity") +
                         " violated";
            }
        }
        record("clst_hypotheses", ok, ok ? "bundled density-dependent specs" : detail);
    }

    // 7. trichotomy on the bundled Beverton-Holt specs
    {
        bool ok = true;
        std::string detail;
        for (const auto& [name, spec] : bundled_example_specs()) {
            if (!all_density_dependent(spec)) continue;
            TrichotomyConfig cfg;
            cfg.seed = seed + 8;
            auto rep = classify_trichotomy(spec, cfg);
            const bool expect_growth = rep.r0_at_origin > 1.0;
            const bool good = expect_growth ? rep.outcome == Outcome::PositiveFixedPoint
                                            : rep.outcome == Outcome::Extinction;
            if (!good || !rep.flags.empty()) {
                ok = false;
                detail = name + ": outcome " + to_string(rep.outcome) +
                         (rep.flags.empty() ? "" : " (" + rep.flags.front() + ")");
            }
        }
        record("trichotomy_matches_r0", ok, ok ? "bundled density-dependent specs" : detail);
    }

    // 8. order-interval bound step^2(x) <= a
    {
        bool ok = true;
        std::string detail;
        SpecSampler sampler(seed + 9);
        for (const auto& [name, spec] : bundled_example_specs()) {
            if (!all_density_dependent(spec)) continue;
            Vec a = upper_bound_vector(spec);
            const std::size_t dim = state_dimension(spec);
            for (int k = 0; k < 500 && ok; ++k) {
                Vec x(dim);
                for (double& v : x) v = std::pow(10.0, sampler.uniform(-3.0, 3.0));
                Vec y = step_n(spec, x, 2);
                for (std::size_t i = 0; i < dim; ++i)
                    if (y[i] > a[i] * (1.0 + 1e-12)) {
                        ok = false;
                        detail = name + ": coordinate " + std::to_string(i + 1) +
                                 " exceeds the bound";
                    }
            }
        }
        record("order_interval_bound", ok, ok ? "500 samples per spec" : detail);
    }

    // 9. sensitivity signs
    {
        bool ok = true;
        std::string detail;
        for (const auto& [name, spec] : bundled_example_specs()) {
            auto table = sensitivity_table(spec, all_parameters(spec));
            for (const auto& row : table.rows)
                if (!std::isnan(row.r0) && row.r0 < -1e-8) {
                    ok = false;
                    detail = name + ": " + row.note + " has negative sensitivity " +
                             format_real(row.r0, 6);
                }
        }
        record("sensitivity_nonnegative", ok, ok ? "all bundled specs, all parameters" : detail);
    }

    return report;
}

// ---------------------------------------------------------------------------
// Scenario execution
// ---------------------------------------------------------------------------

struct ScenarioConfig {
    std::string task;  // r0 | classify | simulate | sweep_phi | sweep_phi2 | sensitivity | verify
    std::optional<ModelSpec> spec;
    std::optional<std::string> out_path;
    std::uint64_t seed = 0;
    std::size_t grid = 101;
    std::size_t max_steps = kDefaultMaxSteps;
    double tol = kOrbitConvergenceTol;
    std::optional<double> phi;        // overrides the spec's allocation in sweeps
    std::optional<Vec> initial_state; // for simulate; defaults to all-ones
    std::optional<double> fd_step;    // sensitivity finite-difference step
    unsigned threads = 0;             // 0 = library default; reserved for grid tasks
};

/// Parses a scenario config document. Unknown keys are errors.
inline ScenarioConfig parse_scenario(const json& j) {
    detail::require_keys(j,
                         {"task", "spec", "spec_path", "out", "seed", "grid", "steps", "tol",
                          "phi", "x0", "fd_step", "threads"},
                         "scenario config");
    ScenarioConfig cfg;
    if (!j.contains("task") || !j.at("task").is_string())
        throw std::invalid_argument("scenario config: needs a string \"task\" field");
    cfg.task = j.at("task").get<std::string>();
    if (j.contains("spec") && j.contains("spec_path"))
        throw std::invalid_argument("scenario config: give either \"spec\" or \"spec_path\"");
    if (j.contains("spec")) cfg.spec = parse_spec(j.at("spec"));
    if (j.contains("spec_path")) cfg.spec = load_spec(j.at("spec_path").get<std::string>());
    if (j.contains("out")) cfg.out_path = j.at("out").get<std::string>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("grid")) cfg.grid = j.at("grid").get<std::size_t>();
    if (j.contains("steps")) cfg.max_steps = j.at("steps").get<std::size_t>();
    if (j.contains("tol")) cfg.tol = j.at("tol").get<double>();
    if (j.contains("phi")) cfg.phi = j.at("phi").get<double>();
    if (j.contains("x0")) cfg.initial_state = j.at("x0").get<Vec>();
    if (j.contains("fd_step")) cfg.fd_step = j.at("fd_step").get<double>();
    if (j.contains("threads")) cfg.threads = j.at("threads").get<unsigned>();
    return cfg;
}

struct ScenarioResult {
    json summary;
    bool passed = true;
};

/// Dispatches one scenario to the analysis operations. Artifact files are
/// written atomically; the returned summary carries the key results and the
/// wall time.
inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    ScenarioResult result;
    json& summary = result.summary;
    summary["task"] = cfg.task;
    summary["tool_version"] = kToolVersion;

    auto need_spec = [&]() -> const ModelSpec& {
        if (!cfg.spec)
            throw std::invalid_argument("scenario: task \"" + cfg.task + "\" needs a spec");
        require_valid(*cfg.spec);
        return *cfg.spec;
    };

    if (cfg.task == "r0") {
        const ModelSpec& spec = need_spec();
        const double r0 = r0_closed_form(spec);
        summary["r0"] = r0;
        summary["r0_next_generation"] = r0_next_generation(spec);
        summary["regime"] = to_string(regime_of(r0));
        summary["spec_hash"] = spec_hash(spec);
    } else if (cfg.task == "classify") {
        const ModelSpec& spec = need_spec();
        auto g = classify(spec);
        summary["lambda"] = g.lambda;
        summary["r0"] = g.r0;
        summary["regime"] = to_string(g.regime);
        summary["spec_hash"] = spec_hash(spec);
    } else if (cfg.task == "simulate") {
        const ModelSpec& spec = need_spec();
        Vec x0 = cfg.initial_state.value_or(Vec(state_dimension(spec), 1.0));
        Trajectory traj = simulate(spec, x0, cfg.max_steps, cfg.tol);
        summary["steps_taken"] = traj.steps_taken;
        summary["converged"] = traj.converged;
        summary["overflowed"] = traj.overflowed;
        summary["final_state"] = traj.final_state();
        summary["spec_hash"] = spec_hash(spec);
        if (cfg.out_path) {
            atomic_write(*cfg.out_path, trajectory_csv(traj));
            summary["out"] = *cfg.out_path;
        }
    } else if (cfg.task == "sweep_phi") {
        const ModelSpec& spec = need_spec();
        if (!std::holds_alternative<SingleEggSpec>(spec))
            throw std::invalid_argument("sweep_phi needs a single_egg spec");
        auto table = sweep_phi(std::get<SingleEggSpec>(spec), uniform_grid(cfg.grid));
        double best = -1.0, best_phi = 0.0;
        for (const auto& row : table.rows)
            if (row.r0 > best) {
                best = row.r0;
                best_phi = row.parameters[0];
            }
        summary["rows"] = table.rows.size();
        summary["max_r0"] = best;
        summary["argmax_phi"] = best_phi;
        summary["spec_hash"] = table.spec_hash;
        if (cfg.out_path) {
            atomic_write(*cfg.out_path, table.to_csv());
            summary["out"] = *cfg.out_path;
        }
    } else if (cfg.task == "sweep_phi2") {
        const ModelSpec& spec = need_spec();
        if (!std::holds_alternative<TwoEggSpec>(spec))
            throw std::invalid_argument("sweep_phi2 needs a two_egg spec");
        const auto& s = std::get<TwoEggSpec>(spec);
        auto table = sweep_phi2(s, uniform_grid(cfg.grid), uniform_grid(cfg.grid));
        auto surf = allocation_surface(s, cfg.grid);
        summary["rows"] = table.rows.size();
        summary["max_r0"] = surf.max_value;
        summary["r0s"] = surf.r0s;
        summary["r0r"] = surf.r0r;
        summary["corner_00"] = surf.corner_00;
        summary["corner_01"] = surf.corner_01;
        summary["corner_10"] = surf.corner_10;
        summary["corner_11"] = surf.corner_11;
        summary["max_on_predicted_boundary"] = surf.max_on_predicted_boundary;
        summary["spec_hash"] = table.spec_hash;
        if (cfg.out_path) {
            atomic_write(*cfg.out_path, table.to_csv());
            summary["out"] = *cfg.out_path;
        }
    } else if (cfg.task == "sensitivity") {
        const ModelSpec& spec = need_spec();
        auto table = sensitivity_table(spec, all_parameters(spec), cfg.fd_step);
        summary["rows"] = table.rows.size();
        summary["spec_hash"] = table.spec_hash;
        json rows = json::array();
        for (const auto& row : table.rows)
            rows.push_back({{"parameter", row.note}, {"dr0", row.r0}});
        summary["sensitivities"] = rows;
        if (cfg.out_path) {
            atomic_write(*cfg.out_path, table.to_csv());
            summary["out"] = *cfg.out_path;
        }
    } else if (cfg.task == "verify") {
        auto report = run_verification(cfg.seed);
        summary["verdict"] = report.passed() ? "pass" : "fail";
        summary["checks"] = report.to_json()["checks"];
        result.passed = report.passed();
        if (cfg.out_path) {
            atomic_write(*cfg.out_path, report.to_json().dump(2) + "\n");
            summary["out"] = *cfg.out_path;
        }
    } else {
        throw std::invalid_argument("scenario: unknown task \"" + cfg.task + "\"");
    }

    const auto t1 = std::chrono::steady_clock::now();
    summary["wall_time_seconds"] =
        std::chrono::duration_cast<std::chrono::duration<double>>(t1 - t0).count();
    return result;
}

}  // namespace pm
