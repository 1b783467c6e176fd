#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "pm/io.hpp"
#include "pm/sampling.hpp"

using namespace pm;
namespace fs = std::filesystem;

TEST_CASE("spec parsing") {
    SECTION("isolated round trip") {
        const std::string text = R"({
            "kind": "isolated",
            "transitions": [{"const": 0.5}, {"beverton_holt": {"b": 0.4, "c": 2.0}}],
            "fecundities": [3.0]
        })";
        ModelSpec spec = parse_spec_string(text);
        REQUIRE(std::holds_alternative<IsolatedSpec>(spec));
        const auto& s = std::get<IsolatedSpec>(spec);
        CHECK(s.stages() == 2);
        CHECK(s.transitions[0].is_constant());
        CHECK(s.transitions[1].is_beverton_holt());
        CHECK(s.fecundities[0] == 3.0);
    }
    SECTION("single egg and two egg kinds") {
        const std::string single = R"({
            "kind": "single_egg",
            "migrant": {"transitions": [{"const": 0.5}, {"const": 0.5}], "fecundities": [2.0]},
            "resident": {"transitions": [{"const": 0.25}, {"const": 0.2}], "fecundities": [2.0]},
            "phi": 0.5
        })";
        CHECK(std::holds_alternative<SingleEggSpec>(parse_spec_string(single)));

        const std::string two = R"({
            "kind": "two_egg",
            "migrant": {"transitions": [{"const": 0.5}, {"const": 0.5}], "fecundities": [2.0]},
            "resident": {"transitions": [{"const": 0.25}, {"const": 0.2}], "fecundities": [2.0]},
            "phi_s": 0.5, "phi_r": 0.5
        })";
        CHECK(std::holds_alternative<TwoEggSpec>(parse_spec_string(two)));
    }
    SECTION("unknown keys are errors") {
        CHECK_THROWS_AS(parse_spec_string(R"({
            "kind": "isolated",
            "transitions": [{"const": 0.5}, {"const": 0.5}],
            "fecundities": [2.0],
            "bonus": 1
        })"), std::invalid_argument);
        CHECK_THROWS_AS(parse_spec_string(R"({
            "kind": "isolated",
            "transitions": [{"konst": 0.5}, {"const": 0.5}],
            "fecundities": [2.0]
        })"), std::invalid_argument);
    }
    SECTION("missing or conflicting rule fields are errors") {
        CHECK_THROWS_AS(parse_spec_string(R"({
            "kind": "isolated",
            "transitions": [{}, {"const": 0.5}],
            "fecundities": [2.0]
        })"), std::invalid_argument);
        CHECK_THROWS_AS(parse_spec_string(R"({
            "kind": "isolated",
            "transitions": [{"const": 0.5, "beverton_holt": {"b": 0.5, "c": 1}}, {"const": 0.5}],
            "fecundities": [2.0]
        })"), std::invalid_argument);
    }
    SECTION("unknown kind is an error") {
        CHECK_THROWS_AS(parse_spec_string(R"({"kind": "mystery"})"), std::invalid_argument);
    }
    SECTION("parse then serialize is the identity on sampled specs") {
        SpecSampler sampler(21);
        for (int k = 0; k < 50; ++k) {
            ModelSpec spec;
            switch (k % 3) {
                case 0: spec = sampler.isolated_beverton_holt(sampler.stage_count()); break;
                case 1: spec = sampler.single_egg_constant(3, 4); break;
                default: spec = sampler.two_egg_beverton_holt(2, 5); break;
            }
            json j = spec_to_json(spec);
            ModelSpec back = parse_spec(j);
            CHECK(spec_to_json(back) == j);
            CHECK(spec_hash(back) == spec_hash(spec));
        }
    }
}

TEST_CASE("spec hashing") {
    SpecSampler sampler(22);
    IsolatedSpec a = sampler.isolated_constant(3);
    IsolatedSpec b = a;
    CHECK(spec_hash(ModelSpec(a)) == spec_hash(ModelSpec(b)));
    b.fecundities[0] += 1e-9;
    CHECK(spec_hash(ModelSpec(a)) != spec_hash(ModelSpec(b)));
    CHECK(spec_hash(ModelSpec(a)).size() == 64);
}

TEST_CASE("atomic_write") {
    const fs::path dir = fs::temp_directory_path() / "pm_io_test";
    fs::remove_all(dir);
    const fs::path target = dir / "nested" / "table.csv";
    atomic_write(target, "a,b\n1,2\n");
    std::ifstream in(target);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == "a,b\n1,2\n");
    CHECK_FALSE(fs::exists(target.string() + ".tmp"));
    fs::remove_all(dir);
}

TEST_CASE("csv quoting") {
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
}

TEST_CASE("trajectory csv") {
    Trajectory traj;
    traj.states = {{1.0, 2.0}, {0.5, 0.25}};
    std::string csv = trajectory_csv(traj);
    CHECK(csv.rfind("step,x1,x2\n", 0) == 0);
    CHECK(csv.find("0,1,2\n") != std::string::npos);
    CHECK(csv.find("1,0.5,0.25\n") != std::string::npos);
}

TEST_CASE("format_real keeps at least 12 significant digits") {
    CHECK(format_real(4.0, 12) == "4");
    CHECK(format_real(1.0 / 3.0, 12) == "0.333333333333");
    // default precision round-trips exactly
    const double v = 0.1234567890123456789;
    CHECK(std::stod(format_real(v)) == v);
}

TEST_CASE("load_spec error paths") {
    CHECK_THROWS_AS(load_spec("/nonexistent/path/spec.json"), std::runtime_error);
    const fs::path bad = fs::temp_directory_path() / "pm_bad.json";
    std::ofstream(bad) << "{not json";
    CHECK_THROWS_AS(load_spec(bad), std::runtime_error);
    fs::remove(bad);
}
