#pragma once

// Scale-free collaborative protocol for the homogenized agents.
//
// The design depends only on the target triple (C, A, B), tau_bar, epsilon and
// rho. Nothing in this header receives the number of agents, the graph or other
// agents' models, except the exchange helpers, which only form weighted sums of
// published packets.
//
// Per agent (s = d/dt or shift):
//   s xi   = A_h xi + B_h z + E_h v_d
//   s xhat = A xhat + B zh2 + F (zeta - C xhat)
//   s chi  = A chi + B v_d + xhat - zh1            (CT)
//   s chi  = A chi + B v_d + A xhat - A zh1        (DT)
//   v = -rho G chi,  v_d(t) = v(t - tau_i),  u = C_h xi + D_h v_d + Dz z
// with G = B^T P (CT) or K (DT).

#include <deque>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "syncd/homogenize.hpp"
#include "syncd/netgraph.hpp"
#include "syncd/riccati.hpp"

namespace syncd {

struct ProtocolDesign {
    TimeDomain domain = TimeDomain::Continuous;
    double epsilon = 0.0;
    double rho = 0.0;
    double tau_bar = 0.0;
    double rho_star = 0.0;
    Matrix A, B, C; ///< target triple
    Matrix P;
    Matrix gain; ///< B^T P (CT, rho applied at use) or K_eps (DT)
    Matrix F;
    double riccati_residual = 0.0;

    /// v = -rho * gain * chi
    [[nodiscard]] Matrix feedback() const { return -rho * gain; }

    /// Canonical text form, 17 significant digits; equal designs give equal strings.
    [[nodiscard]] std::string serialize() const {
        std::ostringstream os;
        os << std::setprecision(17);
        os << "domain " << to_string(domain) << "\nepsilon " << epsilon << "\nrho " << rho << "\ntau_bar " << tau_bar
           << "\n";
        auto put = [&](const char* name, const Matrix& M) {
            os << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
            for (Eigen::Index i = 0; i < M.rows(); ++i) {
                for (Eigen::Index j = 0; j < M.cols(); ++j) os << (j ? " " : "") << M(i, j);
                os << '\n';
            }
        };
        put("A", A);
        put("B", B);
        put("C", C);
        put("P", P);
        put("gain", gain);
        put("F", F);
        return os.str();
    }
};

/// F with A - F C stable with margin (CT abscissa <= -1, DT radius <= 0.5).
inline Matrix design_observer_gain(const Matrix& C, const Matrix& A, TimeDomain domain) {
    if (!is_detectable(C, A, domain)) throw DesignError("observer gain: (C, A) is not detectable");
    return margin_gain(A.transpose(), C.transpose(), domain).transpose();
}

/// Builds the protocol design. rho must exceed 1 / (2 cos(tau_bar omega_max)).
inline ProtocolDesign design_protocol(const TargetModel& target, double tau_bar, double epsilon, double rho) {
    ProtocolDesign d;
    d.domain = target.domain;
    d.epsilon = epsilon;
    d.rho = rho;
    d.tau_bar = tau_bar;
    d.rho_star = rho_lower_bound(tau_bar, target.omega_max);
    if (!(rho > d.rho_star))
        throw DesignError("rho = " + std::to_string(rho) + " must exceed rho* = " + std::to_string(d.rho_star));
    d.A = target.A;
    d.B = target.B;
    d.C = target.C;
    if (d.domain == TimeDomain::Continuous) {
        auto s = solve_care_lowgain(d.A, d.B, epsilon);
        d.P = std::move(s.P);
        d.gain = d.B.transpose() * d.P;
        d.riccati_residual = s.residual;
    } else {
        auto s = solve_dare_lowgain(d.A, d.B, epsilon);
        d.P = std::move(s.P);
        d.gain = std::move(s.K);
        d.riccati_residual = s.residual;
    }
    d.F = design_observer_gain(d.C, d.A, d.domain);
    return d;
}

/// Same as design_protocol but without the rho > rho* precondition; used for
/// negative controls that deliberately violate it.
inline ProtocolDesign design_protocol_unchecked(const TargetModel& target, double tau_bar, double epsilon, double rho) {
    ProtocolDesign d = design_protocol(target, 0.0, epsilon, std::max(rho, 0.75));
    d.rho = rho;
    d.tau_bar = tau_bar;
    d.rho_star = tau_bar * target.omega_max < std::numbers::pi / 2 ? rho_lower_bound(tau_bar, target.omega_max)
                                                                    : std::numeric_limits<double>::infinity();
    return d;
}

/// What agent i publishes: its output, chi, and its own delayed v.
struct ExchangePacket {
    Vector y;
    Vector chi;
    Vector v_delayed;
};

/// zeta_i = sum_j w_ij (y_i - y_j); w is the adjacency (CT) or the row-stochastic D (DT).
inline std::vector<Vector> compute_zeta(const std::vector<Vector>& outputs, const Matrix& weights) {
    const std::size_t N = outputs.size();
    std::vector<Vector> zeta(N);
    for (std::size_t i = 0; i < N; ++i) {
        zeta[i] = Vector::Zero(outputs[i].size());
        for (std::size_t j = 0; j < N; ++j) {
            const double w = weights(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            if (i != j && w != 0.0) zeta[i] += w * (outputs[i] - outputs[j]);
        }
    }
    return zeta;
}

inline std::vector<Vector> compute_zeta(const std::vector<Vector>& outputs, const Network& net, TimeDomain domain) {
    return compute_zeta(outputs, exchange_weights(net, domain));
}

struct ZetaHat {
    Vector chi_part; ///< sum_j w_ij (chi_i - chi_j)
    Vector v_part;   ///< sum_j w_ij (v_i(t - tau_i) - v_j(t - tau_j))
};

inline std::vector<ZetaHat> compute_zetahat(const std::vector<Vector>& chis, const std::vector<Vector>& delayed_vs,
                                            const Matrix& weights) {
    const auto a = compute_zeta(chis, weights);
    const auto b = compute_zeta(delayed_vs, weights);
    std::vector<ZetaHat> out(chis.size());
    for (std::size_t i = 0; i < chis.size(); ++i) out[i] = {a[i], b[i]};
    return out;
}

inline std::vector<ZetaHat> compute_zetahat(const std::vector<Vector>& chis, const std::vector<Vector>& delayed_vs,
                                            const Network& net, TimeDomain domain) {
    return compute_zetahat(chis, delayed_vs, exchange_weights(net, domain));
}

/// Agent-local protocol state (excluding the delay buffer).
struct ProtocolState {
    Vector xi;
    Vector xhat;
    Vector chi;
};

/// Everything one agent's update reads.
struct ProtocolInputs {
    Vector z;
    Vector zeta;
    ZetaHat zetahat;
    Vector v_delayed;
};

struct ProtocolOutputs {
    Vector u;
    Vector v;
};

inline ProtocolOutputs protocol_outputs(const ProtocolState& s, const ProtocolInputs& in, const ProtocolDesign& d,
                                        const Precompensator& pc) {
    return {pc.C_h * s.xi + pc.D_h * in.v_delayed + pc.Dz * in.z, d.feedback() * s.chi};
}

/// Time derivative of (xi, xhat, chi) in continuous time.
inline ProtocolState ct_protocol_derivative(const ProtocolState& s, const ProtocolInputs& in, const ProtocolDesign& d,
                                            const Precompensator& pc) {
    ProtocolState ds;
    ds.xi = pc.A_h * s.xi + pc.B_h * in.z + pc.E_h * in.v_delayed;
    ds.xhat = d.A * s.xhat + d.B * in.zetahat.v_part + d.F * (in.zeta - d.C * s.xhat);
    ds.chi = d.A * s.chi + d.B * in.v_delayed + s.xhat - in.zetahat.chi_part;
    return ds;
}

/// Next (xi, xhat, chi) in discrete time.
inline ProtocolState dt_protocol_step(const ProtocolState& s, const ProtocolInputs& in, const ProtocolDesign& d,
                                      const Precompensator& pc) {
    ProtocolState n;
    n.xi = pc.A_h * s.xi + pc.B_h * in.z + pc.E_h * in.v_delayed;
    n.xhat = d.A * s.xhat + d.B * in.zetahat.v_part + d.F * (in.zeta - d.C * s.xhat);
    n.chi = d.A * s.chi + d.B * in.v_delayed + d.A * s.xhat - d.A * in.zetahat.chi_part;
    return n;
}

/// Per-agent history of v for continuous time. Stores grid samples v(k h) and
/// their derivatives; off-grid reads (the RK4 half steps) use cubic Hermite
/// interpolation. History before t = 0 is a constant (default zero).
class CtDelayLine {
public:
    CtDelayLine() = default;

    CtDelayLine(Eigen::Index dim, double h, int delay_steps, Vector initial = {})
        : h_(h), delay_steps_(delay_steps), initial_(initial.size() ? std::move(initial) : Vector::Zero(dim)),
          zero_slope_(Vector::Zero(dim)) {
        if (delay_steps < 0) throw std::invalid_argument("CtDelayLine: negative delay");
    }

    [[nodiscard]] int delay_steps() const { return delay_steps_; }

    /// Records the sample at grid index k (must be called in order k = 0, 1, ...).
    void push(long k, const Vector& v, const Vector& dv) {
        if (k != next_) throw std::logic_error("CtDelayLine: samples must be pushed in grid order");
        values_.push_back(v);
        slopes_.push_back(dv);
        ++next_;
        const std::size_t keep = static_cast<std::size_t>(delay_steps_) + 2;
        while (values_.size() > keep) {
            values_.pop_front();
            slopes_.pop_front();
            ++first_;
        }
    }

    /// v(t - tau) at t = (k + frac) h with frac in [0, 1]; delay must be >= 1 step.
    [[nodiscard]] Vector delayed(long k, double frac) const {
        const long j = k - delay_steps_;
        if (frac == 0.0) return sample(j);
        if (frac == 1.0) return sample(j + 1);
        const Vector &y0 = sample(j), &y1 = sample(j + 1);
        const Vector &m0 = slope(j), &m1 = slope(j + 1);
        const double t = frac, t2 = t * t, t3 = t2 * t;
        return (2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h_ * m0 + (-2 * t3 + 3 * t2) * y1 +
               (t3 - t2) * h_ * m1;
    }

private:
    [[nodiscard]] const Vector& sample(long j) const {
        if (j < 0) return initial_;
        if (j < first_ || j >= next_) throw std::out_of_range("CtDelayLine: buffer underrun");
        return values_[static_cast<std::size_t>(j - first_)];
    }
    [[nodiscard]] const Vector& slope(long j) const {
        if (j < 0) return zero_slope_;
        if (j < first_ || j >= next_) throw std::out_of_range("CtDelayLine: buffer underrun");
        return slopes_[static_cast<std::size_t>(j - first_)];
    }

    double h_ = 0.0;
    int delay_steps_ = 0;
    Vector initial_;
    Vector zero_slope_;
    std::deque<Vector> values_, slopes_;
    long first_ = 0;
    long next_ = 0;
};

/// Shift register of v for discrete time.
class DtDelayLine {
public:
    DtDelayLine() = default;

    DtDelayLine(Eigen::Index dim, int delay_steps, Vector initial = {})
        : delay_steps_(delay_steps), initial_(initial.size() ? std::move(initial) : Vector::Zero(dim)) {
        if (delay_steps < 0) throw std::invalid_argument("DtDelayLine: negative delay");
    }

    [[nodiscard]] int delay_steps() const { return delay_steps_; }

    void push(long k, const Vector& v) {
        if (k != next_) throw std::logic_error("DtDelayLine: samples must be pushed in order");
        values_.push_back(v);
        ++next_;
        while (values_.size() > static_cast<std::size_t>(delay_steps_) + 1) {
            values_.pop_front();
            ++first_;
        }
    }

    /// v(k - tau); the sample at k itself must already be pushed when tau = 0.
    [[nodiscard]] const Vector& delayed(long k) const {
        const long j = k - delay_steps_;
        if (j < 0) return initial_;
        if (j < first_ || j >= next_) throw std::out_of_range("DtDelayLine: buffer underrun");
        return values_[static_cast<std::size_t>(j - first_)];
    }

private:
    int delay_steps_ = 0;
    Vector initial_;
    std::deque<Vector> values_;
    long first_ = 0;
    long next_ = 0;
};

} // namespace syncd
