#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "pm/experiment.hpp"

using namespace pm;
namespace fs = std::filesystem;

namespace {

SingleEggSpec example_single_egg() {
    IsolatedSpec migrant;  // R0 = 4
    migrant.transitions = {TransitionRule::constant(0.5), TransitionRule::constant(0.4),
                           TransitionRule::constant(0.2)};
    migrant.fecundities = {3.0, 10.0};
    IsolatedSpec resident;  // R0 = 0.625
    resident.transitions = {TransitionRule::constant(0.25), TransitionRule::constant(0.2)};
    resident.fecundities = {2.0};
    return {migrant, resident, 0.5};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("sweep_phi") {
    auto spec = example_single_egg();
    SECTION("three-point grid hits the endpoints and midpoint") {
        auto table = sweep_phi(spec, {0.0, 0.5, 1.0});
        REQUIRE(table.rows.size() == 3);
        CHECK(table.rows[0].r0 == Catch::Approx(0.625).epsilon(1e-12));
        CHECK(table.rows[1].r0 == Catch::Approx(2.3125).epsilon(1e-12));
        CHECK(table.rows[2].r0 == Catch::Approx(4.0).epsilon(1e-12));
    }
    SECTION("equal isolated R0s give a constant column") {
        SingleEggSpec eq{spec.migrant, spec.migrant, 0.5};
        auto table = sweep_phi(eq, uniform_grid(11));
        for (const auto& row : table.rows) CHECK(row.r0 == Catch::Approx(4.0).epsilon(1e-12));
    }
    SECTION("grid outside [0,1] is rejected") {
        CHECK_THROWS_AS(sweep_phi(spec, {0.0, 1.5}), std::invalid_argument);
    }
}

TEST_CASE("sweep_phi2") {
    IsolatedSpec migrant = example_single_egg().migrant;
    IsolatedSpec resident = example_single_egg().resident;
    TwoEggSpec spec{migrant, resident, 0.5, 0.5};

    SECTION("11x11 grid has 121 rows") {
        auto table = sweep_phi2(spec, uniform_grid(11), uniform_grid(11));
        CHECK(table.rows.size() == 121);
    }
    SECTION("corner identities") {
        auto table = sweep_phi2(spec, {0.0, 1.0}, {0.0, 1.0});
        // rows in (phi_s, phi_r) order: (0,0), (0,1), (1,0), (1,1)
        CHECK(table.rows[0].r0 == Catch::Approx(std::sqrt(2.5)).epsilon(1e-12));
        CHECK(table.rows[1].r0 == Catch::Approx(0.625).epsilon(1e-12));
        CHECK(table.rows[2].r0 == Catch::Approx(4.0).epsilon(1e-12));
        CHECK(table.rows[3].r0 == Catch::Approx(4.0).epsilon(1e-12));
    }
}

TEST_CASE("sensitivity_table") {
    IsolatedSpec s;
    s.transitions = {TransitionRule::constant(0.5), TransitionRule::constant(0.5)};
    s.fecundities = {2.0};
    SECTION("single f_2 row") {
        auto table = sensitivity_table(ModelSpec(s),
                                       {{ParamPopulation::Self, ParamKind::Fecundity, 2}});
        REQUIRE(table.rows.size() == 1);
        CHECK(table.rows[0].r0 == Catch::Approx(1.0).margin(1e-8));
    }
    SECTION("all parameters nonnegative on the migrant spec") {
        auto spec = ModelSpec(example_single_egg().migrant);
        auto table = sensitivity_table(spec, all_parameters(spec));
        for (const auto& row : table.rows) CHECK(row.r0 >= -1e-8);
    }
    SECTION("empty parameter list gives an empty table") {
        CHECK(sensitivity_table(ModelSpec(s), {}).rows.empty());
    }
}

TEST_CASE("scenario dispatch") {
    const fs::path dir = fs::temp_directory_path() / "pm_experiment_test";
    fs::remove_all(dir);
    fs::create_directories(dir);

    SECTION("r0 task") {
        ScenarioConfig cfg;
        cfg.task = "r0";
        cfg.spec = ModelSpec(example_single_egg().migrant);
        auto result = run_scenario(cfg);
        CHECK(result.summary["r0"].get<double>() == Catch::Approx(4.0).epsilon(1e-12));
        CHECK(result.summary["regime"] == "Growth");
        CHECK(result.summary.contains("wall_time_seconds"));
    }
    SECTION("sweep_phi task writes a csv") {
        ScenarioConfig cfg;
        cfg.task = "sweep_phi";
        cfg.spec = ModelSpec(example_single_egg());
        cfg.grid = 3;
        cfg.out_path = (dir / "sweep.csv").string();
        auto result = run_scenario(cfg);
        CHECK(result.summary["rows"] == 3);
        CHECK(result.summary["max_r0"].get<double>() == Catch::Approx(4.0).epsilon(1e-12));
        CHECK(result.summary["argmax_phi"].get<double>() == 1.0);
        std::string csv = slurp(dir / "sweep.csv");
        CHECK(csv.find("phi,r0,regime") != std::string::npos);
        CHECK(csv.find("spec_hash=") != std::string::npos);
    }
    SECTION("scenario config parsing is strict") {
        CHECK_THROWS_AS(parse_scenario(json{{"task", "r0"}, {"zzz", 1}}), std::invalid_argument);
        CHECK_THROWS_AS(parse_scenario(json{{"grid", 5}}), std::invalid_argument);
    }
    SECTION("determinism: same config and seed give identical files") {
        ScenarioConfig cfg;
        cfg.task = "verify";
        cfg.seed = 42;
        cfg.out_path = (dir / "report1.json").string();
        run_scenario(cfg);
        cfg.out_path = (dir / "report2.json").string();
        run_scenario(cfg);
        CHECK(slurp(dir / "report1.json") == slurp(dir / "report2.json"));
        CHECK_FALSE(slurp(dir / "report1.json").empty());
    }

    fs::remove_all(dir);
}

TEST_CASE("verification suite passes on bundled specs") {
    auto report = run_verification(42);
    for (const auto& check : report.checks) {
        INFO(check.name << ": " << check.detail);
        CHECK(check.passed);
    }
    CHECK(report.passed());
}
