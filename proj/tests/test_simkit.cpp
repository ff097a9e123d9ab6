#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "support/cases.hpp"

using namespace syncd;
using namespace syncd::testing;

namespace {

/// Exponential rate from the peak sync error in a window at each end of [t0, t1].
double decay_rate(const Trajectories& tr, double t0, double t1, double window) {
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        if (tr.t[k] >= t0 && tr.t[k] <= t0 + window) a = std::max(a, tr.sync_error[k]);
        if (tr.t[k] >= t1 - window && tr.t[k] <= t1) b = std::max(b, tr.sync_error[k]);
    }
    return std::log(a / b) / (t1 - t0 - window);
}

Scenario permuted(const Scenario& sc, const std::vector<std::size_t>& perm) {
    // agent i of the original becomes agent perm[i]
    Scenario out = sc;
    const std::size_t N = sc.size();
    Network net(N);
    for (std::size_t i = 0; i < N; ++i) {
        out.agents[perm[i]] = sc.agents[i];
        out.precomps[perm[i]] = sc.precomps[i];
        out.delays[perm[i]] = sc.delays[i];
        out.init.x[perm[i]] = sc.init.x[i];
        for (std::size_t j = 0; j < N; ++j)
            if (sc.net.weight(i, j) > 0) net.set_edge(perm[i], perm[j], sc.net.weight(i, j));
    }
    out.net = net;
    return out;
}

} // namespace

TEST_CASE("sync metrics", "[simkit]") {
    Trajectories tr;
    for (int k = 0; k <= 1000; ++k) {
        tr.t.push_back(0.01 * k);
        tr.sync_error.push_back(std::exp(-0.01 * k));
    }
    const auto m = sync_metrics(tr, 0.1);
    CHECK(m.decay_ratio == Catch::Approx(std::exp(-9.0)).epsilon(1e-12));
    CHECK(m.settled);

    Trajectories flat;
    flat.t = {0, 1, 2};
    flat.sync_error = {0, 0, 0};
    const auto mf = sync_metrics(flat);
    CHECK(mf.final_error == 0.0);
    CHECK(mf.settled);

    Trajectories grow;
    grow.t = {0, 1, 2};
    grow.sync_error = {1, 10, 100};
    CHECK_FALSE(sync_metrics(grow).settled);

    CHECK_THROWS(sync_metrics(Trajectories{}));
}

TEST_CASE("scenario validation", "[simkit]") {
    auto sc = case_scenario(1, TimeDomain::Continuous, 1.0);
    REQUIRE_NOTHROW(sc.validate());
    auto bad = sc;
    bad.delays[2] = 0.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad.allow_delay_at_bound = true;
    CHECK_NOTHROW(bad.validate());
    bad = sc;
    bad.delays[0] = 0.1005;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = sc;
    bad.dt = 0.05;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    auto dts = case_scenario(1, TimeDomain::Discrete, 10);
    dts.delays[0] = 1.5;
    CHECK_THROWS_AS(dts.validate(), std::invalid_argument);
}

TEST_CASE("single agent: no relative terms and v decays", "[simkit]") {
    for (auto domain : {TimeDomain::Continuous, TimeDomain::Discrete}) {
        const bool ct = domain == TimeDomain::Continuous;
        auto sc = case_scenario(1, domain, ct ? 60.0 : 3000.0);
        sc.agents.resize(1);
        sc.precomps.resize(1);
        sc.delays = {ct ? 0.1 : 1.0};
        sc.net = Network(1);
        sc.init.x.resize(1);
        sc.init.xhat = {Vector::Ones(sc.target.n())};
        sc.init.chi = {Vector::Ones(sc.target.n())};
        const auto tr = simulate(sc);
        REQUIRE_FALSE(tr.diverged);
        for (double e : tr.sync_error) CHECK(e == 0.0);
        const Vector v0 = sc.design.feedback() * tr.chi.front()[0];
        const Vector v1 = sc.design.feedback() * tr.chi.back()[0];
        CHECK(v1.norm() < 1e-3 * v0.norm());
        CHECK(tr.y.back()[0].allFinite());
    }
}

TEST_CASE("synchronized initial condition stays synchronized", "[simkit]") {
    for (auto domain : {TimeDomain::Continuous, TimeDomain::Discrete}) {
        const bool ct = domain == TimeDomain::Continuous;
        auto sc = case_scenario(2, domain, ct ? 5.0 : 200.0);
        const AgentModel same = ct ? agent_triple_integrator() : reference_agents_dt()[1];
        for (std::size_t i = 0; i < sc.size(); ++i) {
            sc.agents[i] = same;
            sc.precomps[i] = design_precompensator(same, sc.target, domain);
            sc.init.x[i] = Vector::LinSpaced(same.n(), 0.3, -0.2);
        }
        const auto tr = simulate(sc);
        for (double e : tr.sync_error) CHECK(e == 0.0);
    }
}

TEST_CASE("case 1 synchronizes with delays", "[simkit]") {
    for (auto domain : {TimeDomain::Continuous, TimeDomain::Discrete}) {
        const auto sc = case_scenario(1, domain);
        const auto tr = simulate(sc);
        const auto m = sync_metrics(tr);
        INFO("domain " << to_string(domain) << " decay " << m.decay_ratio);
        CHECK(m.settled);
        for (std::size_t k = 1; k < tr.t.size(); ++k) REQUIRE(tr.t[k] > tr.t[k - 1]);
    }
}

TEST_CASE("grid refinement changes the final error by under 5%", "[simkit]") {
    auto coarse = case_scenario(1, TimeDomain::Continuous, 20.0);
    auto fine = coarse;
    fine.dt = coarse.dt / 2;
    fine.sample_every = coarse.sample_every * 2;
    const double a = sync_metrics(simulate(coarse)).final_error;
    const double b = sync_metrics(simulate(fine)).final_error;
    INFO(a << " vs " << b);
    CHECK(std::abs(a - b) < 0.05 * b);
}

TEST_CASE("relabeling agents permutes trajectories", "[simkit]") {
    const std::vector<std::size_t> perm{2, 0, 4, 1, 3};
    for (auto domain : {TimeDomain::Continuous, TimeDomain::Discrete}) {
        const bool ct = domain == TimeDomain::Continuous;
        const auto sc = case_scenario(2, domain, ct ? 5.0 : 300.0);
        const auto a = simulate(sc);
        const auto b = simulate(permuted(sc, perm));
        REQUIRE(a.t.size() == b.t.size());
        double worst = 0.0;
        for (std::size_t k = 0; k < a.t.size(); ++k)
            for (std::size_t i = 0; i < sc.size(); ++i)
                worst = std::max(worst, (a.y[k][i] - b.y[k][perm[i]]).cwiseAbs().maxCoeff() /
                                            (1.0 + a.y[k][i].cwiseAbs().maxCoeff()));
        // only the summation order of the exchanges differs
        CHECK(worst < (ct ? 1e-9 : 1e-12));
    }
}

TEST_CASE("delay-free decay rate matches the closed-loop block spectrum", "[simkit]") {
    for (auto domain : {TimeDomain::Continuous, TimeDomain::Discrete}) {
        const bool ct = domain == TimeDomain::Continuous;
        auto sc = case_scenario(1, domain, ct ? 60.0 : 900.0);
        for (auto& d : sc.delays) d = 0.0;
        const auto cl = closedloop_nodelay(sc.design, sc.precomps, sc.net);
        REQUIRE(cl.stable);
        const double predicted = ct ? -cl.stability_indicator : -std::log(cl.stability_indicator);
        const auto tr = simulate(sc);
        const double measured = ct ? decay_rate(tr, 20.0, 60.0, 6.0) : decay_rate(tr, 300.0, 900.0, 60.0);
        INFO("domain " << to_string(domain) << " predicted " << predicted << " measured " << measured);
        CHECK(std::abs(measured - predicted) < 0.1 * predicted);
    }
}

TEST_CASE("divergence aborts with a diagnostic", "[simkit]") {
    auto sc = case_scenario(1, TimeDomain::Continuous, 30.0);
    sc.design.rho = -5.0; // positive feedback
    const auto tr = simulate(sc);
    CHECK(tr.diverged);
    CHECK(tr.diagnostic.find("divergence") != std::string::npos);
    CHECK_FALSE(sync_metrics(tr).settled);
}

TEST_CASE("trajectory export", "[simkit]") {
    const auto sc = case_scenario(1, TimeDomain::Continuous, 2.0);
    const auto tr = simulate(sc);
    std::ostringstream a, b, diff;
    write_trajectories_csv(tr, a);
    write_trajectories_csv(simulate(sc), b);
    CHECK(a.str() == b.str());
    std::istringstream in(a.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,agent,y_1,sync_error");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 3 * tr.t.size());
    write_output_differences_csv(tr, diff);
    CHECK(diff.str().rfind("t,y1_minus_y3_1,y2_minus_y3_1\n", 0) == 0);
    std::ostringstream sink;
    CHECK_THROWS(write_trajectories_csv(Trajectories{}, sink));
}
