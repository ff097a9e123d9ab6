#pragma once

// CLI policy: "auto" protocol parameters and sweep cell construction.

#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "syncd/pipeline.hpp"

namespace syncd::cli {

constexpr double kRhoFactor = 1.05;

struct ResolvedDesign {
    ProtocolDesign design;
    DelayCertificate certificate;
};

/// rho auto = 1.05 rho*, epsilon auto = first certified value of the geometric search.
/// An explicit epsilon is certified as given; an explicit rho must still exceed rho*.
inline ResolvedDesign resolve_design(const ScenarioSpec& spec, const TargetModel& target) {
    const double rho_star = rho_lower_bound(spec.tau_bar, target.omega_max);
    const double rho = spec.rho.value_or(kRhoFactor * rho_star);
    if (!spec.epsilon) {
        auto sel = select_epsilon(target, spec.tau_bar, rho);
        return {std::move(sel.design), std::move(sel.certificate)};
    }
    if (*spec.epsilon > 1.0) throw DesignError("epsilon must lie in (0, 1]");
    ProtocolDesign d = design_protocol(target, spec.tau_bar, *spec.epsilon, rho);
    DelayCertificate c = certify_protocol_delay(d, spec.tau_bar);
    return {std::move(d), std::move(c)};
}

/// Same as resolve_design but an explicit rho below rho* is allowed (negative controls).
inline ResolvedDesign resolve_design_unchecked(const ScenarioSpec& spec, const TargetModel& target) {
    const double rho_star = rho_lower_bound(spec.tau_bar, target.omega_max);
    const double rho = spec.rho.value_or(kRhoFactor * rho_star);
    if (rho > rho_star) return resolve_design(spec, target);
    if (!spec.epsilon) throw DesignError("epsilon = auto needs rho > rho*");
    ProtocolDesign d = design_protocol_unchecked(target, spec.tau_bar, *spec.epsilon, rho);
    DelayCertificate c = certify_protocol_delay(d, spec.tau_bar);
    return {std::move(d), std::move(c)};
}

inline std::uint64_t cell_seed(std::uint64_t base, std::size_t n, int rep) {
    return base * 1000003ULL + static_cast<std::uint64_t>(n) * 1009ULL + static_cast<std::uint64_t>(rep);
}

/// Sweep cell: N agents cycling through the base models, a random spanning-tree
/// graph, random delays in [0, tau_bar), random initial states. Delays sit on a
/// grid of 4 dt in CT so the integrator step stays below a quarter of every delay.
inline ScenarioSpec sweep_cell(const ScenarioSpec& base, std::size_t n, int rep) {
    if (n < 2) throw std::invalid_argument("sweep: N must be >= 2");
    const std::uint64_t seed = cell_seed(base.seed, n, rep);
    std::mt19937_64 rng(seed);
    ScenarioSpec s = base;
    s.agents.clear();
    s.init_x.clear();
    s.edges.clear();
    const bool ct = base.domain == TimeDomain::Continuous;
    const double quantum = ct ? 4.0 * base.dt : 1.0;
    const long slots = std::max<long>(1, static_cast<long>(std::ceil(base.tau_bar / quantum - 1e-9)));
    for (std::size_t i = 0; i < n; ++i) {
        AgentSpec a = base.agents[i % base.agents.size()];
        a.id = std::to_string(i + 1);
        const long k = static_cast<long>(uniform_index(rng, static_cast<std::size_t>(slots)));
        a.delay = static_cast<double>(k) * quantum;
        s.agents.push_back(std::move(a));
    }
    const Network net = random_spanning_network(n, rng());
    s.graph_n = n;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (net.weight(i, j) > 0) s.edges.push_back({i, j, net.weight(i, j), 0});
    s.init_seed = rng();
    s.source = base.source + " [N=" + std::to_string(n) + " seed=" + std::to_string(rep) + "]";
    return s;
}

/// Worker count: hardware concurrency, capped by SYNCD_THREADS and by the job count.
inline unsigned thread_cap(std::size_t jobs) {
    unsigned n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SYNCD_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) n = static_cast<unsigned>(v);
        } catch (const std::exception&) {
            std::cerr << "warning: ignoring invalid SYNCD_THREADS='" << env << "'\n";
        }
    }
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

struct CellResult {
    std::size_t n = 0;
    int rep = 0;
    bool ok = false; ///< false when the cell threw; see error
    bool design_identical = false;
    SyncMetrics metrics;
    bool diverged = false;
    std::string error;
};

/// Simulates every (n, rep) cell with the fixed design. Each cell also redesigns
/// from its own prepared target and compares the serialization (scale-free guard).
/// Per-cell failures are recorded and the sweep continues.
inline std::vector<CellResult> run_sweep(const ScenarioSpec& base, const ProtocolDesign& design,
                                         const std::vector<std::size_t>& sizes, int seeds) {
    const std::string reference = design.serialize();
    std::vector<std::pair<std::size_t, int>> jobs;
    for (std::size_t n : sizes)
        for (int s = 0; s < seeds; ++s) jobs.emplace_back(n, s);
    std::vector<CellResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) {
            CellResult& c = results[k];
            c.n = jobs[k].first;
            c.rep = jobs[k].second;
            try {
                const ScenarioSpec cs = sweep_cell(base, c.n, c.rep);
                const PreparedScenario ps = prepare(cs);
                const ProtocolDesign again =
                    design_protocol_unchecked(ps.target, cs.tau_bar, design.epsilon, design.rho);
                c.design_identical = again.serialize() == reference;
                const Trajectories tr = simulate(assemble(ps, design));
                c.metrics = sync_metrics(tr);
                c.diverged = tr.diverged;
                c.ok = true;
            } catch (const std::exception& e) {
                c.error = e.what();
            }
        }
    };
    const unsigned nt = thread_cap(jobs.size());
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < nt; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return results;
}

} // namespace syncd::cli
