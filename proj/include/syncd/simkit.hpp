#pragma once

// Closed-loop network simulation: agents, precompensators and protocols with
// per-agent input delays. Continuous time uses fixed-step RK4; discrete time is
// the exact recursion. Every step is two-phase: agents publish packets, the
// exchanges are formed, then every agent updates from its own packet sums.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "syncd/protocol.hpp"

namespace syncd {

struct InitialCondition {
    std::vector<Vector> x;    ///< agent states
    std::vector<Vector> xi;   ///< compensator states (empty = zero)
    std::vector<Vector> xhat; ///< protocol observer states (empty = zero)
    std::vector<Vector> chi;  ///< auxiliary states (empty = zero)
};

/// Portable standard normal draw (Box-Muller on the 53-bit uniform mapping).
inline double portable_normal(std::mt19937_64& rng) {
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = unit_uniform(rng);
    const double u2 = unit_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Agent states ~ scale * N(0, 1), protocol and compensator states zero.
inline InitialCondition random_initial_condition(const std::vector<AgentModel>& agents, std::uint64_t seed,
                                                 double scale = 1.0) {
    std::mt19937_64 rng(seed);
    InitialCondition ic;
    for (const auto& a : agents) {
        Vector x(a.n());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = scale * portable_normal(rng);
        ic.x.push_back(x);
    }
    return ic;
}

struct Scenario {
    TimeDomain domain = TimeDomain::Continuous;
    std::vector<AgentModel> agents;
    std::vector<Precompensator> precomps;
    TargetModel target;
    Network net;
    std::vector<double> delays; ///< seconds (CT) or steps (DT)
    double tau_bar = 0.0;
    ProtocolDesign design;
    double horizon = 10.0; ///< seconds (CT) or steps (DT)
    double dt = 1e-3;      ///< CT integration step
    int sample_every = 1;
    InitialCondition init;
    bool allow_delay_at_bound = false; ///< permit tau_i = tau_bar (negative controls only)

    [[nodiscard]] std::size_t size() const { return agents.size(); }

    [[nodiscard]] long steps() const {
        return domain == TimeDomain::Continuous ? std::lround(horizon / dt) : std::lround(horizon);
    }

    [[nodiscard]] int delay_steps(std::size_t i) const {
        return domain == TimeDomain::Continuous ? static_cast<int>(std::lround(delays[i] / dt))
                                                : static_cast<int>(std::lround(delays[i]));
    }

    /// Throws std::invalid_argument on any violated invariant.
    void validate() const {
        const std::size_t N = agents.size();
        if (N == 0) throw std::invalid_argument("scenario: no agents");
        if (precomps.size() != N || delays.size() != N || net.size() != N)
            throw std::invalid_argument("scenario: agents, precompensators, delays and graph disagree in size");
        if (init.x.size() != N) throw std::invalid_argument("scenario: initial agent states missing");
        if (!(horizon > 0.0)) throw std::invalid_argument("scenario: horizon must be positive");
        if (sample_every < 1) throw std::invalid_argument("scenario: sample_every must be >= 1");
        if (design.domain != domain || target.domain != domain)
            throw std::invalid_argument("scenario: design/target time domain mismatch");
        double min_pos = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < N; ++i) {
            agents[i].validate();
            if (init.x[i].size() != agents[i].n()) throw std::invalid_argument("scenario: initial state dimension");
            const double tau = delays[i];
            if (!(tau >= 0.0)) throw std::invalid_argument("scenario: negative delay");
            if (allow_delay_at_bound ? tau > tau_bar : tau >= tau_bar)
                throw std::invalid_argument("scenario: delay " + std::to_string(tau) + " violates tau_i < tau_bar = " +
                                            std::to_string(tau_bar));
            if (tau > 0.0) min_pos = std::min(min_pos, tau);
            if (domain == TimeDomain::Discrete && tau != std::floor(tau))
                throw std::invalid_argument("scenario: discrete delays must be integers");
        }
        if (domain == TimeDomain::Continuous) {
            if (!(dt > 0.0)) throw std::invalid_argument("scenario: dt must be positive");
            if (min_pos < std::numeric_limits<double>::infinity() && dt > min_pos / 4 + 1e-15)
                throw std::invalid_argument("scenario: dt must be <= min positive delay / 4");
            for (double tau : delays) {
                const double k = tau / dt;
                if (std::abs(k - std::round(k)) > 1e-9 * std::max(1.0, k))
                    throw std::invalid_argument("scenario: delay " + std::to_string(tau) +
                                                " is not a multiple of dt");
            }
        }
    }
};

struct Trajectories {
    std::vector<double> t;
    std::vector<std::vector<Vector>> y;    ///< [sample][agent]
    std::vector<std::vector<Vector>> xbar; ///< [sample][agent] target-coordinate state
    std::vector<std::vector<Vector>> chi;  ///< [sample][agent]
    std::vector<double> sync_error;
    bool diverged = false;
    std::string diagnostic;

    [[nodiscard]] bool empty() const { return t.empty(); }
};

inline double sync_error_of(const std::vector<Vector>& ys) {
    double e = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i)
        for (std::size_t j = i + 1; j < ys.size(); ++j) e = std::max(e, (ys[i] - ys[j]).norm());
    return e;
}

namespace detail {

/// Flat per-agent state (x, xi, xhat, chi).
struct AgentSlices {
    Eigen::Index x, xi, xhat, chi, total;
};

struct SimLayout {
    std::vector<AgentSlices> slices;
    std::vector<Eigen::Index> offset;
    Eigen::Index size = 0;

    explicit SimLayout(const Scenario& sc) {
        const Eigen::Index nt = sc.target.n();
        for (std::size_t i = 0; i < sc.size(); ++i) {
            AgentSlices s{sc.agents[i].n(), sc.precomps[i].order(), nt, nt, 0};
            s.total = s.x + s.xi + s.xhat + s.chi;
            offset.push_back(size);
            size += s.total;
            slices.push_back(s);
        }
    }

    [[nodiscard]] Vector pack(const Scenario& sc) const {
        Vector X = Vector::Zero(size);
        for (std::size_t i = 0; i < sc.size(); ++i) {
            const auto& s = slices[i];
            Eigen::Index o = offset[i];
            X.segment(o, s.x) = sc.init.x[i];
            o += s.x;
            if (i < sc.init.xi.size() && sc.init.xi[i].size() == s.xi) X.segment(o, s.xi) = sc.init.xi[i];
            o += s.xi;
            if (i < sc.init.xhat.size() && sc.init.xhat[i].size() == s.xhat) X.segment(o, s.xhat) = sc.init.xhat[i];
            o += s.xhat;
            if (i < sc.init.chi.size() && sc.init.chi[i].size() == s.chi) X.segment(o, s.chi) = sc.init.chi[i];
        }
        return X;
    }

    [[nodiscard]] Vector x(const Vector& X, std::size_t i) const { return X.segment(offset[i], slices[i].x); }
    [[nodiscard]] ProtocolState protocol(const Vector& X, std::size_t i) const {
        const auto& s = slices[i];
        const Eigen::Index o = offset[i] + s.x;
        return {X.segment(o, s.xi), X.segment(o + s.xi, s.xhat), X.segment(o + s.xi + s.xhat, s.chi)};
    }
    void store(Vector& dX, std::size_t i, const Vector& dx, const ProtocolState& ps) const {
        const auto& s = slices[i];
        Eigen::Index o = offset[i];
        dX.segment(o, s.x) = dx;
        o += s.x;
        dX.segment(o, s.xi) = ps.xi;
        o += s.xi;
        dX.segment(o, s.xhat) = ps.xhat;
        o += s.xhat;
        dX.segment(o, s.chi) = ps.chi;
    }
};

inline void record(const Scenario& sc, const SimLayout& L, const Vector& X, double t, Trajectories& tr) {
    std::vector<Vector> ys, xb, ch;
    for (std::size_t i = 0; i < sc.size(); ++i) {
        const Vector x = L.x(X, i);
        const ProtocolState ps = L.protocol(X, i);
        ys.push_back(sc.agents[i].C * x);
        Vector s(x.size() + ps.xi.size());
        s << x, ps.xi;
        xb.push_back(sc.precomps[i].theta * s);
        ch.push_back(ps.chi);
    }
    tr.t.push_back(t);
    tr.sync_error.push_back(sync_error_of(ys));
    tr.y.push_back(std::move(ys));
    tr.xbar.push_back(std::move(xb));
    tr.chi.push_back(std::move(ch));
}

inline bool diverged(const Vector& X, double limit) { return !X.allFinite() || X.cwiseAbs().maxCoeff() > limit; }

} // namespace detail

constexpr double kDivergenceLimit = 1e9;

/// Fixed-step RK4. Delays are grid multiples; the half-step stages read the
/// delayed v by cubic Hermite interpolation between grid samples.
inline Trajectories simulate_ct(const Scenario& sc) {
    if (sc.domain != TimeDomain::Continuous) throw std::invalid_argument("simulate_ct: scenario is discrete");
    sc.validate();
    const std::size_t N = sc.size();
    const detail::SimLayout L(sc);
    const double h = sc.dt;
    const long steps = sc.steps();
    const Matrix W = exchange_weights(sc.net, TimeDomain::Continuous);
    const Matrix Kv = sc.design.feedback();
    const Eigen::Index p = sc.target.p();

    std::vector<CtDelayLine> lines;
    for (std::size_t i = 0; i < N; ++i) lines.emplace_back(p, h, sc.delay_steps(i));

    std::vector<Vector> ys(N), chis(N), vds(N), zs(N), vnow(N);
    std::vector<ProtocolState> ps(N);

    // derivative at grid index k plus fraction frac; on stage 1 also returns dv for the history
    auto deriv = [&](const Vector& X, long k, double frac, std::vector<Vector>* dv_out) {
        for (std::size_t i = 0; i < N; ++i) {
            const Vector x = L.x(X, i);
            ps[i] = L.protocol(X, i);
            ys[i] = sc.agents[i].C * x;
            zs[i] = sc.agents[i].Cm * x;
            chis[i] = ps[i].chi;
            vnow[i] = Kv * ps[i].chi;
            vds[i] = lines[i].delay_steps() == 0 ? vnow[i] : lines[i].delayed(k, frac);
        }
        const auto zeta = compute_zeta(ys, W);
        const auto zh = compute_zetahat(chis, vds, W);
        Vector dX(L.size);
        for (std::size_t i = 0; i < N; ++i) {
            const ProtocolInputs in{zs[i], zeta[i], zh[i], vds[i]};
            const ProtocolOutputs out = protocol_outputs(ps[i], in, sc.design, sc.precomps[i]);
            const Vector x = L.x(X, i);
            const Vector dx = sc.agents[i].A * x + sc.agents[i].B * out.u;
            const ProtocolState dps = ct_protocol_derivative(ps[i], in, sc.design, sc.precomps[i]);
            L.store(dX, i, dx, dps);
            if (dv_out) (*dv_out)[i] = Kv * dps.chi;
        }
        return dX;
    };

    Trajectories tr;
    Vector X = L.pack(sc);
    detail::record(sc, L, X, 0.0, tr);
    std::vector<Vector> dv(N), v0(N);
    for (long k = 0; k < steps; ++k) {
        const Vector k1 = deriv(X, k, 0.0, &dv);
        for (std::size_t i = 0; i < N; ++i) lines[i].push(k, vnow[i], dv[i]);
        const Vector k2 = deriv(X + 0.5 * h * k1, k, 0.5, nullptr);
        const Vector k3 = deriv(X + 0.5 * h * k2, k, 0.5, nullptr);
        const Vector k4 = deriv(X + h * k3, k, 1.0, nullptr);
        X += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        const long kn = k + 1;
        if (detail::diverged(X, kDivergenceLimit)) {
            tr.diverged = true;
            std::ostringstream os;
            os << "divergence: state norm exceeded " << kDivergenceLimit << " at t = " << kn * h;
            tr.diagnostic = os.str();
            if (X.allFinite()) detail::record(sc, L, X, static_cast<double>(kn) * h, tr);
            return tr;
        }
        if (kn % sc.sample_every == 0 || kn == steps) detail::record(sc, L, X, static_cast<double>(kn) * h, tr);
    }
    return tr;
}

/// Exact discrete-time recursion with shift-register delays.
inline Trajectories simulate_dt(const Scenario& sc) {
    if (sc.domain != TimeDomain::Discrete) throw std::invalid_argument("simulate_dt: scenario is continuous");
    sc.validate();
    const std::size_t N = sc.size();
    const detail::SimLayout L(sc);
    const long steps = sc.steps();
    const Matrix W = exchange_weights(sc.net, TimeDomain::Discrete);
    const Matrix Kv = sc.design.feedback();
    const Eigen::Index p = sc.target.p();

    std::vector<DtDelayLine> lines;
    for (std::size_t i = 0; i < N; ++i) lines.emplace_back(p, sc.delay_steps(i));

    Trajectories tr;
    Vector X = L.pack(sc);
    detail::record(sc, L, X, 0.0, tr);
    std::vector<Vector> ys(N), chis(N), vds(N), zs(N);
    std::vector<ProtocolState> ps(N);
    for (long k = 0; k < steps; ++k) {
        for (std::size_t i = 0; i < N; ++i) {
            const Vector x = L.x(X, i);
            ps[i] = L.protocol(X, i);
            ys[i] = sc.agents[i].C * x;
            zs[i] = sc.agents[i].Cm * x;
            chis[i] = ps[i].chi;
            lines[i].push(k, Kv * ps[i].chi);
            vds[i] = lines[i].delayed(k);
        }
        const auto zeta = compute_zeta(ys, W);
        const auto zh = compute_zetahat(chis, vds, W);
        Vector Xn(L.size);
        for (std::size_t i = 0; i < N; ++i) {
            const ProtocolInputs in{zs[i], zeta[i], zh[i], vds[i]};
            const ProtocolOutputs out = protocol_outputs(ps[i], in, sc.design, sc.precomps[i]);
            const Vector x = L.x(X, i);
            L.store(Xn, i, sc.agents[i].A * x + sc.agents[i].B * out.u,
                    dt_protocol_step(ps[i], in, sc.design, sc.precomps[i]));
        }
        X = std::move(Xn);
        const long kn = k + 1;
        if (detail::diverged(X, kDivergenceLimit)) {
            tr.diverged = true;
            tr.diagnostic = "divergence: state norm exceeded 1e9 at step " + std::to_string(kn);
            if (X.allFinite()) detail::record(sc, L, X, static_cast<double>(kn), tr);
            return tr;
        }
        if (kn % sc.sample_every == 0 || kn == steps) detail::record(sc, L, X, static_cast<double>(kn), tr);
    }
    return tr;
}

inline Trajectories simulate(const Scenario& sc) {
    return sc.domain == TimeDomain::Continuous ? simulate_ct(sc) : simulate_dt(sc);
}

struct SyncMetrics {
    double initial_error = 0.0;
    double final_error = 0.0;
    double decay_ratio = 0.0;
    bool settled = false;
};

/// final_error = max sync error over the last tail_fraction of the time span;
/// decay_ratio = final_error / sync error at the first sample.
inline SyncMetrics sync_metrics(const Trajectories& tr, double tail_fraction = 0.1, double threshold = 1e-2) {
    if (tr.empty()) throw std::invalid_argument("sync_metrics: empty trajectory");
    SyncMetrics m;
    m.initial_error = tr.sync_error.front();
    const double t0 = tr.t.front(), t1 = tr.t.back();
    const double start = t1 - tail_fraction * (t1 - t0);
    for (std::size_t k = 0; k < tr.t.size(); ++k)
        if (tr.t[k] >= start) m.final_error = std::max(m.final_error, tr.sync_error[k]);
    if (m.initial_error > 0.0) m.decay_ratio = m.final_error / m.initial_error;
    else m.decay_ratio = m.final_error == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    if (tr.diverged) m.decay_ratio = std::numeric_limits<double>::infinity();
    m.settled = !tr.diverged && m.decay_ratio < threshold;
    return m;
}

/// CSV: t, agent, y_1..y_p, sync_error (one row per agent per sample, 17 significant digits).
inline void write_trajectories_csv(const Trajectories& tr, std::ostream& os) {
    if (tr.empty()) throw std::invalid_argument("export: empty trajectory");
    const Eigen::Index p = tr.y.front().front().size();
    os << "t,agent";
    for (Eigen::Index j = 1; j <= p; ++j) os << ",y_" << j;
    os << ",sync_error\n";
    os << std::setprecision(17);
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        for (std::size_t i = 0; i < tr.y[k].size(); ++i) {
            os << tr.t[k] << ',' << (i + 1);
            for (Eigen::Index j = 0; j < p; ++j) os << ',' << tr.y[k][i](j);
            os << ',' << tr.sync_error[k] << '\n';
        }
    }
}

/// CSV of output differences y_i - y_N for every agent i < N (figure regeneration).
inline void write_output_differences_csv(const Trajectories& tr, std::ostream& os) {
    if (tr.empty()) throw std::invalid_argument("export: empty trajectory");
    const std::size_t N = tr.y.front().size();
    const Eigen::Index p = tr.y.front().front().size();
    os << "t";
    for (std::size_t i = 1; i < N; ++i)
        for (Eigen::Index j = 1; j <= p; ++j) os << ",y" << i << "_minus_y" << N << "_" << j;
    os << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
        os << tr.t[k];
        for (std::size_t i = 0; i + 1 < N; ++i)
            for (Eigen::Index j = 0; j < p; ++j) os << ',' << (tr.y[k][i](j) - tr.y[k][N - 1](j));
        os << '\n';
    }
}

} // namespace syncd
