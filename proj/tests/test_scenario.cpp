#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sys/wait.h>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "../tools/policy.hpp"
#include "support/cases.hpp"

using namespace syncd;
using namespace syncd::testing;

namespace {

const std::string kDir = SYNCD_SCENARIO_DIR;

std::string scn(const std::string& name) { return kDir + "/" + name + ".scn"; }

const char* kMinimal = R"(
[meta]
time_domain = ct
tau_bar = 0.5

[target]
p = 1
modes = 0 1

[agents]
agent a
delay = 0.1
A:
  0 1 0
  0 0 1
  0 0 0
B:
  0
  0
  1
C:
  1 0 0
Cm = identity

agent b
delay = 0.2
A:
  0 1 0
  0 0 1
  0 0 0
B:
  0
  0
  1
C:
  1 0 0
Cm:
  1 0 0

[graph]
2 1 1.5

[init]
x b = 1 2 3
)";

std::string expect_parse_error(const std::string& text) {
    try {
        (void)parse_scenario_text(text, "t.scn");
    } catch (const ParseError& e) {
        return e.what();
    }
    FAIL("no ParseError for:\n" << text);
    return {};
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SYNCD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST_CASE("parser reads every section of a minimal scenario", "[scenario]") {
    const ScenarioSpec s = parse_scenario_text(kMinimal, "mini");
    CHECK(s.domain == TimeDomain::Continuous);
    CHECK(s.tau_bar == 0.5);
    REQUIRE(s.agents.size() == 2);
    CHECK(s.agents[0].id == "a");
    CHECK(s.agents[1].delay == 0.2);
    CHECK(s.agents[0].model.Cm.isIdentity());
    CHECK(s.agents[1].model.Cm.rows() == 1);
    CHECK_FALSE(s.target_n_q.has_value());
    CHECK_FALSE(s.epsilon.has_value());
    const Network net = s.network();
    CHECK(net.weight(1, 0) == 1.5);
    CHECK(net.weight(0, 1) == 0.0);
    REQUIRE(s.init_x.count("b"));
    CHECK(s.init_x.at("b")(2) == 3.0);
}

TEST_CASE("parse errors carry the offending line number", "[scenario]") {
    CHECK_THAT(expect_parse_error("[meta]\ntau_bar = abc\n"), Catch::Matchers::StartsWith("t.scn:2:"));
    CHECK_THAT(expect_parse_error("\n\n[bogus]\n"), Catch::Matchers::ContainsSubstring("t.scn:3: unknown section"));
    CHECK_THAT(expect_parse_error("tau_bar = 1\n"), Catch::Matchers::ContainsSubstring(":1: content before"));
    CHECK_THAT(expect_parse_error("[agents]\nagent x\nA:\n 1 2\n 3\n"), Catch::Matchers::ContainsSubstring(":5: ragged"));
    CHECK_THAT(expect_parse_error("[agents]\nagent x\nQ:\n 1\n"), Catch::Matchers::ContainsSubstring(":3: unknown agent matrix"));
    CHECK_THAT(expect_parse_error("[graph]\n1 1 1\n"), Catch::Matchers::ContainsSubstring(":2: self-loops"));
    CHECK_THAT(expect_parse_error("[graph]\n1 2 -1\n"), Catch::Matchers::ContainsSubstring(":2: edge weight"));
    CHECK_THAT(expect_parse_error("[meta]\ntime_domain = hybrid\n"), Catch::Matchers::ContainsSubstring(":2:"));

    std::string bad_edge = kMinimal;
    bad_edge.replace(bad_edge.find("2 1 1.5"), 7, "3 1 1.5");
    CHECK_THAT(expect_parse_error(bad_edge), Catch::Matchers::ContainsSubstring("edge endpoint exceeds"));

    std::string bad_x = kMinimal;
    bad_x.replace(bad_x.find("x b = 1 2 3"), 11, "x b = 1 2");
    CHECK_THAT(expect_parse_error(bad_x), Catch::Matchers::ContainsSubstring("wrong size"));

    std::string dt_frac = kMinimal;
    dt_frac.replace(dt_frac.find("time_domain = ct"), 16, "time_domain = dt");
    CHECK_THAT(expect_parse_error(dt_frac), Catch::Matchers::ContainsSubstring("must be integers"));

    CHECK_THROWS_AS(load_scenario("/nonexistent/file.scn"), ParseError);
}

TEST_CASE("shipped scenario files reproduce the test fixtures", "[scenario]") {
    for (int which : {1, 2}) {
        for (TimeDomain dom : {TimeDomain::Continuous, TimeDomain::Discrete}) {
            const std::string name =
                std::string("case") + std::to_string(which) + (dom == TimeDomain::Discrete ? "_dt" : "");
            CAPTURE(name);
            const ScenarioSpec spec = load_scenario(scn(name));
            const PreparedScenario ps = prepare(spec);
            const auto rd = cli::resolve_design(spec, ps.target);
            REQUIRE(rd.certificate.passed);
            const Scenario built = assemble(ps, rd.design);
            const Scenario ref = case_scenario(which, dom);
            CHECK(built.design.serialize() == ref.design.serialize());
            CHECK(built.delays == ref.delays);
            CHECK(built.tau_bar == ref.tau_bar);
            CHECK(built.horizon == ref.horizon);
            REQUIRE(built.agents.size() == ref.agents.size());
            for (std::size_t i = 0; i < ref.agents.size(); ++i) {
                CHECK(built.agents[i].A == ref.agents[i].A);
                CHECK(built.agents[i].B == ref.agents[i].B);
                CHECK(built.agents[i].C == ref.agents[i].C);
                CHECK(built.init.x[i] == ref.init.x[i]);
                for (std::size_t j = 0; j < ref.agents.size(); ++j) CHECK(built.net.weight(i, j) == ref.net.weight(i, j));
            }
        }
    }
}

TEST_CASE("prepare reports the failing stage", "[scenario]") {
    CHECK_THROWS_MATCHES(prepare(load_scenario(scn("disconnected"))), AssumptionError,
                         Catch::Matchers::Message("graph: no directed spanning tree"));
    CHECK_NOTHROW(prepare(load_scenario(scn("disconnected")), false));
    CHECK_THROWS_AS(prepare(load_scenario(scn("unstabilizable"))), AssumptionError);

    ScenarioSpec low = load_scenario(scn("case1"));
    low.target_n_q = 2; // below the triple integrator's degree
    CHECK_THROWS_AS(prepare(low), DesignError);

    ScenarioSpec eps = load_scenario(scn("case1"));
    eps.epsilon = 1.5;
    const PreparedScenario ps = prepare(eps);
    CHECK_THROWS_AS(cli::resolve_design(eps, ps.target), DesignError);

    ScenarioSpec coarse = load_scenario(scn("case1"));
    coarse.dt = 0.05;
    const PreparedScenario pc = prepare(coarse);
    CHECK_THROWS_AS(assemble(pc, cli::resolve_design(coarse, pc.target).design), AssumptionError);
}

TEST_CASE("explicit initial states override the seeded draw", "[scenario]") {
    const ScenarioSpec s = parse_scenario_text(kMinimal, "mini");
    const PreparedScenario ps = prepare(s);
    const InitialCondition ic = initial_condition(s, ps.agents);
    CHECK(ic.x[1] == (Vector(3) << 1, 2, 3).finished());
    CHECK(ic.x[0] == random_initial_condition(ps.agents, s.init_seed, s.init_scale).x[0]);
}

TEST_CASE("sweep cells are deterministic and respect the delay bound", "[scenario]") {
    for (const char* base_name : {"sweep_ct", "sweep_dt"}) {
        const ScenarioSpec base = load_scenario(scn(base_name));
        for (std::size_t n : {3u, 10u, 20u}) {
            const ScenarioSpec a = cli::sweep_cell(base, n, 2);
            const ScenarioSpec b = cli::sweep_cell(base, n, 2);
            REQUIRE(a.agents.size() == n);
            CHECK(has_spanning_tree(a.network()));
            CHECK(a.init_seed == b.init_seed);
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(a.agents[i].delay == b.agents[i].delay);
                CHECK(a.agents[i].delay < base.tau_bar);
                CHECK(a.agents[i].model.A == base.agents[i % base.agents.size()].model.A);
            }
            CHECK(laplacian(a.network()) == laplacian(b.network()));
            CHECK(cli::sweep_cell(base, n, 3).init_seed != a.init_seed);
        }
    }
}

TEST_CASE("CLI exit codes follow the failing stage", "[cli]") {
    const auto out = std::filesystem::temp_directory_path() / "syncd_cli_exit";
    const std::string bad = (std::filesystem::temp_directory_path() / "syncd_bad.scn").string();
    std::ofstream(bad) << "[meta]\ntau_bar = x\n";
    CHECK(run_cli("certify " + scn("case1")) == 0);
    CHECK(run_cli("check-agent " + scn("case2")) == 0);
    CHECK(run_cli("certify " + bad) == 2);
    CHECK(run_cli("check-agent " + scn("unstabilizable")) == 3);
    CHECK(run_cli("run " + scn("disconnected") + " --out " + out.string()) == 3);
    CHECK(run_cli("run " + scn("uncertified_ct") + " --out " + out.string()) == 5);
    CHECK(run_cli("bogus") == 1);
}
