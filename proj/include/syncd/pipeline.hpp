#pragma once

// Design -> certify -> simulate stages over a parsed scenario. Each stage throws
// the syncd::Error subclass that names it, so callers can map failures to exit
// codes. Choosing epsilon and rho is left to the caller.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "syncd/certify.hpp"
#include "syncd/scenario.hpp"
#include "syncd/simkit.hpp"

namespace syncd {

struct AgentCheck {
    std::string id;
    AssumptionReport assumptions;
    int degree = 0;
    std::string structure_error;
};

/// Assumption report and infinite-zero degree for every agent; never throws on a failed check.
inline std::vector<AgentCheck> check_agents(const ScenarioSpec& spec) {
    std::vector<AgentCheck> out;
    for (const auto& a : spec.agents) {
        AgentCheck c;
        c.id = a.id;
        c.assumptions = check_assumptions(a.model, spec.domain);
        try {
            c.degree = infinite_zero_degree(a.model);
        } catch (const DesignError& e) {
            c.structure_error = e.what();
        }
        out.push_back(std::move(c));
    }
    return out;
}

struct PreparedScenario {
    ScenarioSpec spec;
    TargetModel target;
    int max_degree = 0;
    std::vector<AgentModel> agents;
    std::vector<Precompensator> precomps;
    std::vector<VerificationReport> verification;
    Network net;
};

/// Target synthesis from the scenario; n_q defaults to the largest agent degree.
inline TargetModel resolve_target(const ScenarioSpec& spec, int max_degree) {
    try {
        if (spec.explicit_target())
            return make_target_model(*spec.target_A, *spec.target_B, *spec.target_C, spec.tau_bar, spec.domain);
        const int p = spec.target_p.value_or(static_cast<int>(spec.agents.front().model.p()));
        const int n_q = spec.target_n_q.value_or(max_degree);
        if (n_q < max_degree)
            throw DesignError("target n_q = " + std::to_string(n_q) + " is below the largest agent degree " +
                              std::to_string(max_degree));
        return make_target_model(p, n_q, spec.target_modes, spec.tau_bar, spec.domain);
    } catch (const std::invalid_argument& e) {
        throw DesignError(std::string("target: ") + e.what());
    }
}

/// Assumptions, target, precompensators and their verification, graph connectivity.
inline PreparedScenario prepare(const ScenarioSpec& spec, bool require_graph = true) {
    PreparedScenario ps;
    ps.spec = spec;
    for (const auto& c : check_agents(spec)) {
        if (!c.assumptions.ok()) throw AssumptionError("agent '" + c.id + "': " + c.assumptions.describe());
        if (!c.structure_error.empty()) throw DesignError("agent '" + c.id + "': " + c.structure_error);
        ps.max_degree = std::max(ps.max_degree, c.degree);
    }
    ps.target = resolve_target(spec, ps.max_degree);
    for (const auto& a : spec.agents) {
        if (a.model.p() != ps.target.p())
            throw DesignError("agent '" + a.id + "': output dimension differs from the target");
        Precompensator pc;
        try {
            pc = design_precompensator(a.model, ps.target, spec.domain);
        } catch (const DesignError& e) {
            throw DesignError("agent '" + a.id + "': " + e.what());
        }
        auto rep = verify_homogenization(a.model, pc, ps.target, spec.domain);
        if (!rep.passed) throw DesignError("agent '" + a.id + "': homogenization check failed: " + rep.describe());
        ps.agents.push_back(a.model);
        ps.precomps.push_back(std::move(pc));
        ps.verification.push_back(rep);
    }
    if (require_graph) {
        ps.net = spec.network();
        if (!has_spanning_tree(ps.net)) throw AssumptionError("graph: no directed spanning tree");
    }
    return ps;
}

/// Agent states drawn from the init seed, then overridden by explicit entries.
inline InitialCondition initial_condition(const ScenarioSpec& spec, const std::vector<AgentModel>& agents) {
    InitialCondition ic = random_initial_condition(agents, spec.init_seed, spec.init_scale);
    for (std::size_t i = 0; i < spec.agents.size() && i < ic.x.size(); ++i) {
        auto it = spec.init_x.find(spec.agents[i].id);
        if (it != spec.init_x.end()) ic.x[i] = it->second;
    }
    return ic;
}

/// Simulation scenario for a prepared scenario and a fixed design.
inline Scenario assemble(const PreparedScenario& ps, const ProtocolDesign& design) {
    Scenario sc;
    sc.domain = ps.spec.domain;
    sc.agents = ps.agents;
    sc.precomps = ps.precomps;
    sc.target = ps.target;
    sc.net = ps.net;
    for (const auto& a : ps.spec.agents) sc.delays.push_back(a.delay);
    sc.tau_bar = ps.spec.tau_bar;
    sc.design = design;
    sc.horizon = ps.spec.horizon;
    sc.dt = ps.spec.dt;
    sc.sample_every = ps.spec.sample_every;
    sc.init = initial_condition(ps.spec, ps.agents);
    try {
        sc.validate();
    } catch (const std::invalid_argument& e) {
        throw AssumptionError(e.what());
    }
    return sc;
}

struct RunReport {
    ProtocolDesign design;
    DelayCertificate certificate;
    std::optional<ClosedLoopBlocks> closed_loop;
    SyncMetrics metrics;
    Trajectories trajectories;
    bool simulated = false;

    [[nodiscard]] std::string summary(const PreparedScenario& ps) const {
        std::ostringstream os;
        os << std::setprecision(12);
        os << "scenario " << ps.spec.source << '\n';
        os << "time_domain " << to_string(ps.spec.domain) << '\n';
        os << "agents " << ps.agents.size() << '\n';
        os << "tau_bar " << ps.spec.tau_bar << '\n';
        os << "n_q " << ps.target.n_q << '\n';
        os << "omega_max " << ps.target.omega_max << '\n';
        os << "rho_star " << design.rho_star << '\n';
        os << "rho " << design.rho << '\n';
        os << "epsilon " << design.epsilon << '\n';
        os << "certificate " << (certificate.passed ? "pass" : "fail") << '\n';
        if (closed_loop)
            os << "delay_free_closed_loop " << (closed_loop->stable ? "stable" : "unstable") << ' '
               << closed_loop->stability_indicator << '\n';
        if (simulated) {
            os << "diverged " << (trajectories.diverged ? "true" : "false") << '\n';
            os << "initial_error " << metrics.initial_error << '\n';
            os << "final_error " << metrics.final_error << '\n';
            os << "decay_ratio " << metrics.decay_ratio << '\n';
            os << "settled " << (metrics.settled ? "true" : "false") << '\n';
        }
        return os.str();
    }
};

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
}

/// trajectories.csv, output_differences.csv, certificate.txt, summary.txt
inline void write_run_outputs(const std::filesystem::path& dir, const PreparedScenario& ps, const RunReport& r) {
    std::filesystem::create_directories(dir);
    write_text(dir / "certificate.txt", r.certificate.summary());
    write_text(dir / "summary.txt", r.summary(ps));
    if (!r.simulated) return;
    std::ostringstream tr, diff;
    write_trajectories_csv(r.trajectories, tr);
    write_output_differences_csv(r.trajectories, diff);
    write_text(dir / "trajectories.csv", tr.str());
    write_text(dir / "output_differences.csv", diff.str());
}

} // namespace syncd
