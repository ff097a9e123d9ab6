#pragma once

// Agent validation, target-model synthesis and precompensator design.
//
// Supported agents have a uniform relative degree k: the first nonzero Markov
// parameter G = C A^{k-1} B has full row rank p. The design splits the input as
// u = R (virtual input) + N F2 x with R a right inverse and N a null-space basis
// of G, stabilizes the zero dynamics through N, appends n_q - k integrator chains
// and then chooses the chain input so that (y, y', ..., y^(n_q-1)) evolves
// exactly like the target state. Non-invertible local measurements are handled
// by a Luenberger observer whose error becomes the decaying disturbance psi.

#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>

#include "syncd/lincore.hpp"
#include "syncd/riccati.hpp"

namespace syncd {

struct AgentModel {
    Matrix A;
    Matrix B;
    Matrix C;
    Matrix Cm;

    [[nodiscard]] Eigen::Index n() const { return A.rows(); }
    [[nodiscard]] Eigen::Index m() const { return B.cols(); }
    [[nodiscard]] Eigen::Index p() const { return C.rows(); }
    [[nodiscard]] Eigen::Index q() const { return Cm.rows(); }

    void validate() const {
        if (A.rows() != A.cols()) throw std::invalid_argument("agent: A must be square");
        if (B.rows() != n() || C.cols() != n() || Cm.cols() != n())
            throw std::invalid_argument("agent: inconsistent dimensions");
        if (n() == 0 || m() == 0 || p() == 0 || q() == 0) throw std::invalid_argument("agent: empty matrix");
        if (!A.allFinite() || !B.allFinite() || !C.allFinite() || !Cm.allFinite())
            throw std::invalid_argument("agent: non-finite entry");
    }
};

struct AssumptionReport {
    bool stabilizable = false;
    bool detectable = false;
    bool right_invertible = false;
    bool measurement_detectable = false;

    [[nodiscard]] bool ok() const { return stabilizable && detectable && right_invertible && measurement_detectable; }

    [[nodiscard]] std::string describe() const {
        std::ostringstream os;
        os << "stabilizable=" << stabilizable << " detectable=" << detectable
           << " right_invertible=" << right_invertible << " measurement_detectable=" << measurement_detectable;
        return os.str();
    }
};

namespace detail {

/// Rank of the Rosenbrock pencil [sI - A, -B; C, 0] at s.
inline Eigen::Index rosenbrock_rank(const Matrix& A, const Matrix& B, const Matrix& C, Complex s) {
    const Eigen::Index n = A.rows(), m = B.cols(), p = C.rows();
    CMatrix P = CMatrix::Zero(n + p, n + m);
    P.topLeftCorner(n, n) = s * CMatrix::Identity(n, n) - A.cast<Complex>();
    P.topRightCorner(n, m) = -B.cast<Complex>();
    P.bottomLeftCorner(p, n) = C.cast<Complex>();
    return numerical_rank(P);
}

/// Deterministic sample points away from the spectrum of A.
inline std::vector<Complex> pencil_sample_points(const Matrix& A, int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Spectrum eig = spectrum(A);
    const double scale = 1.0 + A.norm();
    std::vector<Complex> pts;
    while (static_cast<int>(pts.size()) < count) {
        const double re = (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5) * 2.0 * scale;
        const double im = (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5) * 2.0 * scale;
        const Complex s(re, im);
        bool near = false;
        for (const auto& l : eig) near = near || std::abs(s - l) < 1e-3 * scale;
        if (!near) pts.push_back(s);
    }
    return pts;
}

inline Matrix matrix_power(const Matrix& A, int k) {
    Matrix R = Matrix::Identity(A.rows(), A.cols());
    for (int i = 0; i < k; ++i) R = R * A;
    return R;
}

} // namespace detail

inline AssumptionReport check_assumptions(const AgentModel& agent) {
    agent.validate();
    AssumptionReport r;
    const TimeDomain ct = TimeDomain::Continuous;
    // Continuous-time PBH tests cover the closed right half plane; the DT
    // variants are checked by the pipeline when the scenario is discrete.
    r.stabilizable = is_stabilizable(agent.A, agent.B, ct);
    r.detectable = is_detectable(agent.C, agent.A, ct);
    r.measurement_detectable = is_detectable(agent.Cm, agent.A, ct);
    const auto pts = detail::pencil_sample_points(agent.A, 3, 0x5eed);
    r.right_invertible = true;
    for (const auto& s : pts)
        r.right_invertible = r.right_invertible &&
                             detail::rosenbrock_rank(agent.A, agent.B, agent.C, s) == agent.n() + agent.p();
    return r;
}

/// Same report with the PBH tests taken over the unstable region of the given domain.
inline AssumptionReport check_assumptions(const AgentModel& agent, TimeDomain domain) {
    AssumptionReport r = check_assumptions(agent);
    r.stabilizable = is_stabilizable(agent.A, agent.B, domain);
    r.detectable = is_detectable(agent.C, agent.A, domain);
    r.measurement_detectable = is_detectable(agent.Cm, agent.A, domain);
    return r;
}

/// Order k of the first nonzero Markov parameter C A^{k-1} B, which must have full row rank.
inline int infinite_zero_degree(const Matrix& A, const Matrix& B, const Matrix& C) {
    const Eigen::Index p = C.rows();
    Matrix CAk = C;
    const double scale = std::max(1.0, C.norm() * B.norm());
    for (int k = 1; k <= A.rows(); ++k) {
        const Matrix G = CAk * B;
        const Eigen::Index r = numerical_rank(G, 1e-9);
        if (G.norm() > 1e-10 * scale && r > 0) {
            if (r < p) {
                throw DesignError("unsupported structure: first nonzero Markov parameter C A^" + std::to_string(k - 1) +
                                  " B has rank " + std::to_string(r) + " < p = " + std::to_string(p) +
                                  " (non-uniform infinite-zero structure)");
            }
            return k;
        }
        CAk = CAk * A;
    }
    throw DesignError("unsupported structure: all Markov parameters vanish (system not right-invertible)");
}

inline int infinite_zero_degree(const AgentModel& agent) { return infinite_zero_degree(agent.A, agent.B, agent.C); }

struct TargetModel {
    Matrix A;
    Matrix B;
    Matrix C;
    int n_q = 0;
    double omega_max = 0.0;
    TimeDomain domain = TimeDomain::Continuous;

    [[nodiscard]] Eigen::Index p() const { return C.rows(); }
    [[nodiscard]] Eigen::Index n() const { return A.rows(); }
};

/// Verifies every target-model condition; throws DesignError with the first violation.
inline void validate_target(const TargetModel& t, double tau_bar) {
    const Eigen::Index n = t.A.rows(), p = t.C.rows();
    if (t.A.cols() != n || t.B.rows() != n || t.C.cols() != n || t.B.cols() != p)
        throw DesignError("target: inconsistent dimensions (need square A, B n x p, C p x n)");
    if (numerical_rank(t.C) != p) throw DesignError("target: rank(C) != p");
    const int k = infinite_zero_degree(t.A, t.B, t.C);
    if (k != t.n_q) throw DesignError("target: uniform rank is " + std::to_string(k) + ", expected n_q = " + std::to_string(t.n_q));
    const Matrix G = t.C * detail::matrix_power(t.A, k - 1) * t.B;
    if (numerical_rank(G) != p) throw DesignError("target: C A^{n_q-1} B is singular");
    // a square uniform-rank system of order n has n - p n_q finite invariant zeros
    if (n != p * t.n_q) throw DesignError("target: has " + std::to_string(n - p * t.n_q) + " invariant zeros");
    for (const auto& s : detail::pencil_sample_points(t.A, 12, 0x7a46))
        if (detail::rosenbrock_rank(t.A, t.B, t.C, s) != n + p) throw DesignError("target: Rosenbrock pencil rank deficient");
    const double w = omega_max(t.A, t.domain); // throws outside the closed stability region
    if (std::abs(w - t.omega_max) > 1e-9) throw DesignError("target: stored omega_max inconsistent with A");
    if (tau_bar * w >= std::numbers::pi / 2)
        throw DesignError("target infeasible: tau_bar * omega_max = " + std::to_string(tau_bar * w) + " >= pi/2");
}

/// Companion-form target: each of the p channels realizes a monic polynomial of
/// degree n_q whose roots are the requested marginal modes (frequency 0 gives a
/// single root, a positive frequency a conjugate pair); remaining roots sit at
/// -1 (CT) or 0 (DT).
inline TargetModel make_target_model(int p, int n_q, const std::vector<double>& modes, double tau_bar,
                                     TimeDomain domain = TimeDomain::Continuous) {
    if (p < 1 || n_q < 1) throw std::invalid_argument("make_target_model: p and n_q must be positive");
    std::vector<Complex> roots;
    for (double w : modes) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("make_target_model: mode frequency must be >= 0");
        if (domain == TimeDomain::Discrete && w > std::numbers::pi)
            throw std::invalid_argument("make_target_model: discrete mode frequency must lie in [0, pi]");
        const bool real_root = w == 0.0 || (domain == TimeDomain::Discrete && w == std::numbers::pi);
        const Complex r = domain == TimeDomain::Continuous ? Complex(0.0, w) : std::polar(1.0, w);
        if (real_root) {
            roots.emplace_back(r.real(), 0.0);
        } else {
            roots.push_back(r);
            roots.push_back(std::conj(r));
        }
    }
    if (static_cast<int>(roots.size()) > n_q)
        throw DesignError("make_target_model: " + std::to_string(roots.size()) + " marginal roots exceed n_q = " +
                          std::to_string(n_q));
    while (static_cast<int>(roots.size()) < n_q) roots.emplace_back(domain == TimeDomain::Continuous ? -1.0 : 0.0, 0.0);

    std::vector<Complex> coeff{1.0}; // monic, highest degree first
    for (const auto& r : roots) {
        std::vector<Complex> next(coeff.size() + 1, 0.0);
        for (std::size_t i = 0; i < coeff.size(); ++i) {
            next[i] += coeff[i];
            next[i + 1] -= r * coeff[i];
        }
        coeff = std::move(next);
    }
    Matrix Ach = Matrix::Zero(n_q, n_q);
    for (int i = 0; i + 1 < n_q; ++i) Ach(i, i + 1) = 1.0;
    for (int j = 0; j < n_q; ++j) {
        const double c = coeff[static_cast<std::size_t>(n_q - j)].real();
        Ach(n_q - 1, j) = c == 0.0 ? 0.0 : -c; // avoid -0 in printed models
    }
    Matrix Bch = Matrix::Zero(n_q, 1);
    Bch(n_q - 1, 0) = 1.0;
    Matrix Cch = Matrix::Zero(1, n_q);
    Cch(0, 0) = 1.0;

    TargetModel t;
    t.A = block_diag(std::vector<Matrix>(static_cast<std::size_t>(p), Ach));
    t.B = block_diag(std::vector<Matrix>(static_cast<std::size_t>(p), Bch));
    t.C = block_diag(std::vector<Matrix>(static_cast<std::size_t>(p), Cch));
    t.n_q = n_q;
    t.domain = domain;
    t.omega_max = omega_max(t.A, domain);
    validate_target(t, tau_bar);
    return t;
}

/// Target from explicit matrices; n_q is detected from the Markov parameters.
inline TargetModel make_target_model(const Matrix& A, const Matrix& B, const Matrix& C, double tau_bar,
                                     TimeDomain domain = TimeDomain::Continuous) {
    TargetModel t{A, B, C, 0, 0.0, domain};
    t.n_q = infinite_zero_degree(A, B, C);
    t.omega_max = omega_max(A, domain);
    validate_target(t, tau_bar);
    return t;
}

/// Precompensator
///   s xi = A_h xi + B_h z + E_h v,   u = C_h xi + D_h v + Dz z.
/// Dz is a direct feedback from the local measurement; it is zero whenever an
/// observer is used. The maps theta / omega_map take the compensated state
/// (x, xi) to the target state xbar and to the disturbance state omega:
///   s xbar = A xbar + B (v + C_s omega),  s omega = A_s omega,  y = C xbar.
struct Precompensator {
    Matrix A_h, B_h, E_h, C_h, D_h, Dz;
    Matrix A_s, C_s;
    Matrix theta;
    Matrix omega_map;
    Matrix zero_dynamics; ///< closed-loop modes invisible at the output
    int relative_degree = 0;
    int extension = 0; ///< number of appended integrator stages per channel
    bool uses_observer = false;

    [[nodiscard]] Eigen::Index order() const { return A_h.rows(); }
};

/// Agent + precompensator as one LTI system with input v and output y; state (x, xi).
struct CompensatedSystem {
    Matrix A, B, C;
};

inline CompensatedSystem compensated_system(const AgentModel& agent, const Precompensator& pc) {
    const Eigen::Index n = agent.n(), nh = pc.order();
    CompensatedSystem s;
    s.A = Matrix::Zero(n + nh, n + nh);
    s.A.topLeftCorner(n, n) = agent.A + agent.B * pc.Dz * agent.Cm;
    s.A.topRightCorner(n, nh) = agent.B * pc.C_h;
    s.A.bottomLeftCorner(nh, n) = pc.B_h * agent.Cm;
    s.A.bottomRightCorner(nh, nh) = pc.A_h;
    s.B = Matrix::Zero(n + nh, pc.D_h.cols());
    s.B.topRows(n) = agent.B * pc.D_h;
    s.B.bottomRows(nh) = pc.E_h;
    s.C = Matrix::Zero(agent.p(), n + nh);
    s.C.leftCols(n) = agent.C;
    return s;
}

namespace detail {

/// Solves X A_s - A_t X - B_t Y = RHS, C_t X = 0 for (X, Y).
inline std::pair<Matrix, Matrix> solve_output_sylvester(const Matrix& As, const Matrix& At, const Matrix& Bt,
                                                        const Matrix& Ct, const Matrix& rhs) {
    const Eigen::Index nt = At.rows(), ns = As.rows(), p = Bt.cols();
    const Eigen::Index nx = nt * ns, ny = p * ns;
    Matrix K = Matrix::Zero(nx + Ct.rows() * ns, nx + ny);
    K.topLeftCorner(nx, nx) = kron(Matrix(As.transpose()), Matrix(Matrix::Identity(nt, nt))) -
                              kron(Matrix(Matrix::Identity(ns, ns)), At);
    K.topRightCorner(nx, ny) = -kron(Matrix(Matrix::Identity(ns, ns)), Bt);
    K.bottomLeftCorner(Ct.rows() * ns, nx) = kron(Matrix(Matrix::Identity(ns, ns)), Ct);
    Vector b = Vector::Zero(K.rows());
    b.head(nx) = Eigen::Map<const Vector>(rhs.data(), nx);
    Eigen::FullPivLU<Matrix> lu(K);
    if (lu.rank() < K.cols()) throw DesignError("precompensator: disturbance map equations are singular");
    const Vector sol = lu.solve(b);
    if ((K * sol - b).norm() > 1e-8 * (1.0 + b.norm())) throw DesignError("precompensator: disturbance map residual too large");
    Matrix X = Eigen::Map<const Matrix>(sol.data(), nt, ns);
    Matrix Y = Eigen::Map<const Matrix>(sol.data() + nx, p, ns);
    return {X, Y};
}

} // namespace detail

inline Precompensator design_precompensator(const AgentModel& agent, const TargetModel& target, TimeDomain domain) {
    agent.validate();
    if (agent.p() != target.p()) throw DesignError("precompensator: agent output dimension differs from target");
    const Eigen::Index n = agent.n(), m = agent.m(), p = agent.p(), q = agent.q();
    const Matrix &A = agent.A, &B = agent.B, &C = agent.C;
    const int k = infinite_zero_degree(agent);
    const int nq = target.n_q;
    if (k > nq)
        throw DesignError("precompensator: agent relative degree " + std::to_string(k) + " exceeds target n_q = " +
                          std::to_string(nq));
    const int d = nq - k;

    const Matrix CAk1 = C * detail::matrix_power(A, k - 1);
    const Matrix CAk = CAk1 * A;
    const Matrix G = CAk1 * B;
    const Matrix R = G.transpose() * (G * G.transpose()).inverse();
    const Matrix Nn = null_space(G);

    // zero dynamics on V = ker [C; CA; ...; CA^{k-1}]
    const Matrix V = null_space(observability_stack(C, A, k));
    const Matrix A0 = A - B * R * CAk;
    Matrix F2 = Matrix::Zero(Nn.cols(), n);
    Matrix Az = V.transpose() * A0 * V;
    if (V.cols() > 0) {
        const Matrix Bz = V.transpose() * B * Nn;
        if (Nn.cols() > 0 && is_stabilizable(Az, Bz, domain)) {
            const Matrix Fz = -margin_gain(Az, Bz, domain);
            F2 = Fz * V.transpose();
            Az = Az + Bz * Fz;
        }
        if (!is_stable(Az, domain))
            throw DesignError("unsupported structure: zero dynamics cannot be stabilized (non-minimum-phase agent)");
    }
    const Matrix Ux0 = -R * CAk + Nn * F2;

    // extended open-loop system with the chain input w
    const Eigen::Index nc = static_cast<Eigen::Index>(d) * p;
    const Eigen::Index ne = n + nc;
    Matrix S = Matrix::Zero(nc, nc), Ed = Matrix::Zero(nc, p), E1 = Matrix::Zero(nc, p);
    if (d > 0) {
        S.topRightCorner(nc - p, nc - p).setIdentity();
        Ed.bottomRows(p).setIdentity();
        E1.topRows(p).setIdentity();
    }
    Matrix Ae = Matrix::Zero(ne, ne), Bw = Matrix::Zero(ne, p), Ce = Matrix::Zero(p, ne);
    Ae.topLeftCorner(n, n) = A + B * Ux0;
    Ce.leftCols(n) = C;
    if (d > 0) {
        Ae.topRightCorner(n, nc) = B * R * E1.transpose();
        Ae.bottomRightCorner(nc, nc) = S;
        Bw.bottomRows(nc) = Ed;
    } else {
        Bw.topRows(n) = B * R;
    }
    Matrix CeAj = Ce;
    for (int j = 0; j + 1 < nq; ++j) {
        if ((CeAj * Bw).norm() > 1e-9 * (1.0 + CeAj.norm() * Bw.norm()))
            throw DesignError("precompensator: extended system lost its uniform-rank structure");
        CeAj = CeAj * Ae;
    }
    const Matrix Mw = CeAj * Bw;
    Eigen::FullPivLU<Matrix> Mlu(Mw);
    if (!Mlu.isInvertible()) throw DesignError("precompensator: extended high-frequency gain is singular");
    const Matrix Oe = observability_stack(Ce, Ae, nq);
    const Matrix Ot = observability_stack(target.C, target.A, nq);
    const Matrix Theta = Ot.fullPivLu().solve(Oe);
    const Matrix CtAt_nq1 = target.C * detail::matrix_power(target.A, nq - 1);
    const Matrix W = Mlu.solve(Matrix(CtAt_nq1 * target.A * Theta - CeAj * Ae));
    const Matrix Wv = Mlu.solve(Matrix(CtAt_nq1 * target.B));
    const Matrix Wx = W.leftCols(n), Wc = W.rightCols(nc);

    // input law u = Ux x + Uc c + Uv v
    Matrix Ux = Ux0, Uc = Matrix::Zero(m, nc), Uv = Matrix::Zero(m, p);
    if (d > 0) {
        Uc = R * E1.transpose();
    } else {
        Ux += R * Wx;
        Uv = R * Wv;
    }
    const Matrix chainA = S + Ed * Wc, chainX = Ed * Wx, chainV = Ed * Wv;

    Precompensator pc;
    pc.relative_degree = k;
    pc.extension = d;
    pc.zero_dynamics = Az;
    Eigen::FullPivLU<Matrix> CmLu(agent.Cm);
    const bool full_state = q == n && CmLu.isInvertible();
    if (full_state) {
        const Matrix Sx = CmLu.inverse();
        pc.A_h = chainA;
        pc.B_h = chainX * Sx;
        pc.E_h = chainV;
        pc.C_h = Uc;
        pc.D_h = Uv;
        pc.Dz = Ux * Sx;
        pc.A_s = Matrix::Zero(0, 0);
        pc.C_s = Matrix::Zero(p, 0);
        pc.theta = Theta;
        pc.omega_map = Matrix::Zero(0, ne);
        return pc;
    }

    if (!is_detectable(agent.Cm, A, domain)) throw AssumptionError("precompensator: (C_m, A) is not detectable");
    const Matrix L = margin_gain(A.transpose(), agent.Cm.transpose(), domain).transpose();
    const Eigen::Index nh = n + nc;
    pc.uses_observer = true;
    pc.A_h = Matrix::Zero(nh, nh);
    pc.A_h.topLeftCorner(n, n) = A + B * Ux - L * agent.Cm;
    pc.A_h.topRightCorner(n, nc) = B * Uc;
    pc.A_h.bottomLeftCorner(nc, n) = chainX;
    pc.A_h.bottomRightCorner(nc, nc) = chainA;
    pc.B_h = Matrix::Zero(nh, q);
    pc.B_h.topRows(n) = L;
    pc.E_h = Matrix::Zero(nh, p);
    pc.E_h.topRows(n) = B * Uv;
    pc.E_h.bottomRows(nc) = chainV;
    pc.C_h = Matrix::Zero(m, nh);
    pc.C_h.leftCols(n) = Ux;
    pc.C_h.rightCols(nc) = Uc;
    pc.D_h = Uv;
    pc.Dz = Matrix::Zero(m, q);

    // coordinates (x, c, e) with e = x - xhat; state order of the compensated system is (x, xhat, c)
    const CompensatedSystem cs = compensated_system(agent, pc);
    const Eigen::Index N = n + nh;
    Matrix T = Matrix::Zero(N, N);
    T.block(0, 0, n, n).setIdentity();                // x
    T.block(n, 0, n, n).setIdentity();                // xhat = x - e
    T.block(n, ne, n, n) = -Matrix::Identity(n, n);
    T.block(2 * n, n, nc, nc).setIdentity();          // c
    const Matrix Anew = T.fullPivLu().solve(Matrix(cs.A * T));
    const Matrix J = Anew.block(0, ne, ne, n);
    pc.A_s = A - L * agent.Cm;
    if ((Anew.block(ne, 0, n, ne)).norm() > 1e-9 * (1.0 + Anew.norm()))
        throw DesignError("precompensator: observer error is not autonomous");
    auto [Theta_e, Cs] = detail::solve_output_sylvester(pc.A_s, target.A, target.B, target.C, -Theta * J);
    pc.C_s = Cs;
    pc.theta = Matrix::Zero(target.n(), N);
    pc.theta.leftCols(n) = Theta.leftCols(n) + Theta_e;
    pc.theta.middleCols(n, n) = -Theta_e;
    pc.theta.rightCols(nc) = Theta.rightCols(nc);
    pc.omega_map = Matrix::Zero(n, N);
    pc.omega_map.leftCols(n).setIdentity();
    pc.omega_map.middleCols(n, n) = -Matrix::Identity(n, n);
    return pc;
}

struct VerificationOptions {
    double horizon = 10.0;  ///< CT time span or DT step count
    int samples = 50;       ///< CT step-response sample count
    double tol = 1e-8;
    std::uint64_t seed = 1;
};

struct VerificationReport {
    bool passed = false;
    double markov_deviation = 0.0;
    double step_deviation = 0.0;
    double structure_residual = 0.0;
    double initial_condition_deviation = 0.0;
    double psi_decay = 0.0; ///< |psi(end)| / |psi(0)|, 0 when psi is identically zero
    bool disturbance_stable = false;
    bool internal_stable = false;
    int markov_terms = 0;

    [[nodiscard]] std::string describe() const {
        std::ostringstream os;
        os.precision(3);
        os << (passed ? "PASS" : "FAIL") << " markov=" << markov_deviation << " step=" << step_deviation
           << " structure=" << structure_residual << " ic=" << initial_condition_deviation << " psi_decay=" << psi_decay
           << " A_s_stable=" << disturbance_stable << " internal_stable=" << internal_stable;
        return os.str();
    }
};

namespace detail {

inline Matrix expm(const Matrix& M) { return M.exp(); }

/// Zero-state unit-step response C (int_0^t e^{A s} ds) B, one row block per sample.
inline std::vector<Matrix> ct_step_response(const Matrix& A, const Matrix& B, const Matrix& C,
                                            const std::vector<double>& times) {
    const Eigen::Index n = A.rows(), m = B.cols();
    Matrix Aug = Matrix::Zero(n + m, n + m);
    Aug.topLeftCorner(n, n) = A;
    Aug.topRightCorner(n, m) = B;
    std::vector<Matrix> out;
    for (double t : times) {
        const Matrix E = expm(Matrix(Aug * t));
        out.push_back(C * E.topRightCorner(n, m));
    }
    return out;
}

} // namespace detail

/// Checks that agent + precompensator reproduce the target I/O map and that the
/// remaining mismatch is the decaying psi channel.
inline VerificationReport verify_homogenization(const AgentModel& agent, const Precompensator& pc,
                                                const TargetModel& target, TimeDomain domain,
                                                const VerificationOptions& opt = {}) {
    VerificationReport r;
    const CompensatedSystem cs = compensated_system(agent, pc);
    const Eigen::Index ncl = cs.A.rows(), nt = target.n();

    // (a) Markov parameters; equality of the first ncl + nt terms implies equal transfer matrices
    r.markov_terms = static_cast<int>(std::max<Eigen::Index>(2 * target.n_q + 4, ncl + nt));
    Matrix Mc = cs.B, Mt = target.B;
    for (int j = 0; j < r.markov_terms; ++j) {
        const Matrix a = cs.C * Mc, b = target.C * Mt;
        r.markov_deviation = std::max(r.markov_deviation, (a - b).norm() / (1.0 + b.norm()));
        Mc = cs.A * Mc;
        Mt = target.A * Mt;
    }

    // step response
    if (domain == TimeDomain::Continuous) {
        std::vector<double> times;
        for (int i = 1; i <= opt.samples; ++i) times.push_back(opt.horizon * i / opt.samples);
        const auto yc = detail::ct_step_response(cs.A, cs.B, cs.C, times);
        const auto yt = detail::ct_step_response(target.A, target.B, target.C, times);
        for (std::size_t i = 0; i < times.size(); ++i)
            r.step_deviation = std::max(r.step_deviation, (yc[i] - yt[i]).norm() / (1.0 + yt[i].norm()));
    } else {
        Matrix xc = Matrix::Zero(ncl, cs.B.cols()), xt = Matrix::Zero(nt, target.B.cols());
        const int steps = static_cast<int>(opt.horizon);
        for (int i = 0; i < steps; ++i) {
            xc = cs.A * xc + cs.B;
            xt = target.A * xt + target.B;
            const Matrix yt = target.C * xt;
            r.step_deviation = std::max(r.step_deviation, (cs.C * xc - yt).norm() / (1.0 + yt.norm()));
        }
    }

    // exact intertwining relations of the compensated state with (xbar, omega)
    const Eigen::Index ns = pc.A_s.rows();
    const double scale = 1.0 + cs.A.norm() + pc.theta.norm();
    auto acc = [&](const Matrix& M) { r.structure_residual = std::max(r.structure_residual, M.norm() / scale); };
    acc(pc.theta * cs.A - target.A * pc.theta - target.B * pc.C_s * pc.omega_map);
    acc(pc.theta * cs.B - target.B);
    acc(target.C * pc.theta - cs.C);
    if (ns > 0) {
        acc(pc.omega_map * cs.A - pc.A_s * pc.omega_map);
        acc(pc.omega_map * cs.B);
    }

    // (b) random initial condition: compensated output equals target-plus-psi model output
    std::mt19937_64 rng(opt.seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Vector s0(ncl);
    for (Eigen::Index i = 0; i < ncl; ++i) s0(i) = g(rng);
    Matrix Am = Matrix::Zero(nt + ns, nt + ns);
    Am.topLeftCorner(nt, nt) = target.A;
    Am.topRightCorner(nt, ns) = target.B * pc.C_s;
    Am.bottomRightCorner(ns, ns) = pc.A_s;
    Vector m0(nt + ns);
    m0.head(nt) = pc.theta * s0;
    m0.tail(ns) = pc.omega_map * s0;
    const double psi0 = ns > 0 ? (pc.C_s * m0.tail(ns)).norm() : 0.0;
    double psi_end = 0.0;
    const int samples = domain == TimeDomain::Continuous ? opt.samples : static_cast<int>(opt.horizon);
    Vector xs = s0, xm = m0;
    const Matrix stepC = domain == TimeDomain::Continuous ? detail::expm(Matrix(cs.A * (opt.horizon / samples))) : cs.A;
    const Matrix stepM = domain == TimeDomain::Continuous ? detail::expm(Matrix(Am * (opt.horizon / samples))) : Am;
    for (int i = 1; i <= samples; ++i) {
        xs = stepC * xs;
        xm = stepM * xm;
        const Vector ym = target.C * xm.head(nt);
        r.initial_condition_deviation =
            std::max(r.initial_condition_deviation, (cs.C * xs - ym).norm() / (1.0 + ym.norm()));
        if (ns > 0) psi_end = (pc.C_s * xm.tail(ns)).norm();
    }
    r.psi_decay = psi0 > 0.0 ? psi_end / psi0 : 0.0;
    r.disturbance_stable = is_stable(pc.A_s, domain);
    r.internal_stable = is_stable(pc.zero_dynamics, domain);
    r.passed = r.markov_deviation <= opt.tol && r.step_deviation <= opt.tol && r.structure_residual <= opt.tol &&
               r.initial_condition_deviation <= opt.tol && r.disturbance_stable && r.internal_stable;
    return r;
}

} // namespace syncd
