// syncd command-line front end: run, sweep, certify, check-agent.

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "policy.hpp"

namespace fs = std::filesystem;
using namespace syncd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;

int exit_code(Stage s) { return static_cast<int>(s); }

int cmd_run(const std::string& file, const std::string& out, bool force) {
    const ScenarioSpec spec = load_scenario(file);
    const PreparedScenario ps = prepare(spec);
    auto [design, cert] = force ? cli::resolve_design_unchecked(spec, ps.target) : cli::resolve_design(spec, ps.target);
    RunReport r;
    r.design = design;
    r.certificate = cert;
    if (ps.net.size() >= 2) r.closed_loop = closedloop_nodelay(design, ps.precomps, ps.net);
    if (!cert.passed && !force) {
        write_run_outputs(out, ps, r);
        std::cerr << "error [certificate]: " << cert.reason << '\n';
        return exit_code(Stage::Certificate);
    }
    r.trajectories = simulate(assemble(ps, design));
    r.metrics = sync_metrics(r.trajectories);
    r.simulated = true;
    write_run_outputs(out, ps, r);
    std::cout << r.summary(ps);
    if (r.trajectories.diverged) {
        std::cerr << "error [divergence]: " << r.trajectories.diagnostic << '\n';
        return exit_code(Stage::Divergence);
    }
    return cert.passed ? kExitOk : exit_code(Stage::Certificate);
}

std::vector<std::size_t> parse_sizes(const std::string& list) {
    std::vector<std::size_t> out;
    std::stringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        const long v = std::stol(tok);
        if (v < 2) throw std::invalid_argument("--n entries must be >= 2");
        out.push_back(static_cast<std::size_t>(v));
    }
    if (out.empty()) throw std::invalid_argument("--n needs at least one size");
    return out;
}

int cmd_sweep(const std::string& file, const std::string& sizes, int seeds, const std::string& out) {
    const ScenarioSpec base = load_scenario(file);
    if (seeds < 1) throw std::invalid_argument("--seeds must be >= 1");
    const auto ns = parse_sizes(sizes);
    // one design from (C, A, B) and tau_bar; no cell data enters it
    const PreparedScenario bp = prepare(base, false);
    const auto [design, cert] = cli::resolve_design(base, bp.target);
    if (!cert.passed) {
        std::cerr << "error [certificate]: " << cert.reason << '\n';
        return exit_code(Stage::Certificate);
    }
    const std::string reference = design.serialize();

    const auto results = cli::run_sweep(base, design, ns, seeds);

    fs::create_directories(out);
    std::ostringstream csv, sum;
    csv << std::setprecision(12) << "n,seed,settled,diverged,decay_ratio,final_error,design_identical,error\n";
    int settled = 0;
    bool identical = true;
    for (const auto& c : results) {
        csv << c.n << ',' << c.rep << ',' << (c.ok && c.metrics.settled) << ',' << c.diverged << ','
            << c.metrics.decay_ratio << ',' << c.metrics.final_error << ',' << c.design_identical << ",\""
            << c.error << "\"\n";
        settled += c.ok && c.metrics.settled;
        identical = identical && c.ok && c.design_identical;
    }
    sum << "cells " << results.size() << "\nsettled " << settled << "\ndesign_identical "
        << (identical ? "true" : "false") << "\nepsilon " << std::setprecision(17) << design.epsilon << "\nrho "
        << design.rho << "\n";
    write_text(fs::path(out) / "sweep.csv", csv.str());
    write_text(fs::path(out) / "sweep_summary.txt", sum.str());
    write_text(fs::path(out) / "design.txt", reference);
    write_text(fs::path(out) / "certificate.txt", cert.summary());
    std::cout << sum.str();
    if (!identical) {
        std::cerr << "error [design]: protocol design differs between sweep cells\n";
        return exit_code(Stage::Design);
    }
    if (settled != static_cast<int>(results.size())) {
        std::cerr << "error [divergence]: " << results.size() - static_cast<std::size_t>(settled)
                  << " sweep cell(s) did not synchronize\n";
        return exit_code(Stage::Divergence);
    }
    return kExitOk;
}

int cmd_certify(const std::string& file) {
    const ScenarioSpec spec = load_scenario(file);
    const PreparedScenario ps = prepare(spec, false);
    const auto [design, cert] = cli::resolve_design(spec, ps.target);
    std::cout << std::setprecision(12) << "rho_star " << design.rho_star << "\nrho " << design.rho << "\nepsilon "
              << design.epsilon << '\n'
              << cert.summary();
    const Network net = spec.network();
    if (net.size() >= 2 && has_spanning_tree(net)) {
        const auto cl = closedloop_nodelay(design, ps.precomps, net);
        std::cout << "delay_free_closed_loop " << (cl.stable ? "stable" : "unstable") << ' '
                  << cl.stability_indicator << "\nblock_union_distance " << cl.union_distance << '\n';
    }
    return cert.passed ? kExitOk : exit_code(Stage::Certificate);
}

int cmd_check_agent(const std::string& file) {
    const ScenarioSpec spec = load_scenario(file);
    const auto checks = check_agents(spec);
    int code = kExitOk;
    int max_degree = 0;
    for (const auto& c : checks) {
        std::cout << "agent " << c.id << ": " << c.assumptions.describe();
        if (c.structure_error.empty()) std::cout << " degree=" << c.degree;
        else std::cout << " structure_error=\"" << c.structure_error << '"';
        std::cout << '\n';
        if (!c.assumptions.ok()) code = exit_code(Stage::Assumption);
        else if (!c.structure_error.empty() && code == kExitOk) code = exit_code(Stage::Design);
        max_degree = std::max(max_degree, c.degree);
    }
    if (code != kExitOk) return code;
    std::cout << "max_degree " << max_degree << '\n';
    const TargetModel t = resolve_target(spec, max_degree);
    std::cout << "target n_q=" << t.n_q << " omega_max=" << t.omega_max << '\n';
    for (const auto& a : spec.agents) {
        try {
            const auto pc = design_precompensator(a.model, t, spec.domain);
            const auto rep = verify_homogenization(a.model, pc, t, spec.domain);
            std::cout << "agent " << a.id << " precompensator order=" << pc.order() << ' ' << rep.describe() << '\n';
            if (!rep.passed) code = exit_code(Stage::Design);
        } catch (const DesignError& e) {
            std::cout << "agent " << a.id << " precompensator error: " << e.what() << '\n';
            code = exit_code(Stage::Design);
        }
    }
    return code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scale-free output synchronization under input delays"};
    app.require_subcommand(1);

    std::string file, out, sizes = "3,10,20";
    int seeds = 5;
    bool force = false;

    auto* run = app.add_subcommand("run", "design, certify and simulate one scenario");
    run->add_option("file", file, "scenario file")->required();
    run->add_option("--out", out, "output directory")->required();
    run->add_flag("--force", force, "simulate even when the certificate fails (exit code still reports it)");

    auto* sweep = app.add_subcommand("sweep", "one design over random networks of several sizes");
    sweep->add_option("file", file, "base scenario file")->required();
    sweep->add_option("--n", sizes, "comma-separated network sizes");
    sweep->add_option("--seeds", seeds, "graphs per size");
    sweep->add_option("--out", out, "output directory")->required();

    auto* certify = app.add_subcommand("certify", "delay certificate of the scenario's protocol design");
    certify->add_option("file", file, "scenario file")->required();

    auto* check = app.add_subcommand("check-agent", "assumption and homogenization checks per agent");
    check->add_option("file", file, "scenario file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (*run) return cmd_run(file, out, force);
        if (*sweep) return cmd_sweep(file, sizes, seeds, out);
        if (*certify) return cmd_certify(file);
        if (*check) return cmd_check_agent(file);
    } catch (const Error& e) {
        std::cerr << "error [" << stage_name(e.stage()) << "]: " << e.what() << '\n';
        return exit_code(e.stage());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}
