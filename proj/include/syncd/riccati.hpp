#pragma once

// Continuous and discrete algebraic Riccati solvers specialised to the
// low-gain family (Q = eps I, R = I), the delay-dependent lower bound on the
// protocol scaling rho, and the two low-gain robustness regions:
//   * A - rho B B^T P_eps is Hurwitz for every complex rho with Re rho >= 1/2;
//   * A + lambda B F_delta is Schur for every lambda inside Omega_delta.

#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "syncd/lincore.hpp"

namespace syncd {

struct RiccatiOptions {
    double tol = 1e-10;
    int max_iterations = 200;
};

/// General weights for the Riccati equations; defaulted to the low-gain pair
/// (eps I, I) by the *_lowgain entry points.
struct RiccatiWeights {
    Matrix Q;
    Matrix R;
};

struct CareSolution {
    Matrix P;
    double residual = 0.0;
    int iterations = 0;
};

struct DareSolution {
    Matrix P;
    Matrix K; ///< (R + B^T P B)^{-1} B^T P A
    double residual = 0.0;
    int iterations = 0;
};

struct LowGainSolutionCT {
    double epsilon = 0.0;
    Matrix P;
    double residual = 0.0;
};

struct LowGainSolutionDT {
    double epsilon = 0.0;
    Matrix P;
    Matrix K;
    double residual = 0.0;
};

namespace detail {

inline void check_riccati_shapes(const Matrix& A, const Matrix& B, const RiccatiWeights& w, const char* what) {
    require_square(A, what);
    require_finite(A, what);
    require_finite(B, what);
    if (B.rows() != A.rows()) throw std::invalid_argument(std::string(what) + ": B row count must match A");
    if (w.Q.rows() != A.rows() || w.Q.cols() != A.rows())
        throw std::invalid_argument(std::string(what) + ": Q must be n x n");
    if (w.R.rows() != B.cols() || w.R.cols() != B.cols())
        throw std::invalid_argument(std::string(what) + ": R must be m x m");
    if (Eigen::LLT<Matrix>(w.R).info() != Eigen::Success)
        throw std::invalid_argument(std::string(what) + ": R must be positive definite");
}

inline Matrix symmetrize(const Matrix& X) { return 0.5 * (X + X.transpose()); }

inline Matrix care_residual(const Matrix& A, const Matrix& G, const Matrix& Q, const Matrix& X) {
    return A.transpose() * X + X * A - X * G * X + Q;
}

inline Matrix dare_residual(const Matrix& A, const Matrix& B, const Matrix& Q, const Matrix& R, const Matrix& X) {
    const Matrix BtX = B.transpose() * X;
    const Matrix S = R + BtX * B;
    return A.transpose() * X * A - X - (BtX * A).transpose() * S.ldlt().solve(BtX * A) + Q;
}

// Matrix sign function of the Hamiltonian with determinant scaling; the
// stable invariant subspace gives the stabilizing CARE solution.
inline Matrix care_sign_seed(const Matrix& A, const Matrix& G, const Matrix& Q) {
    const Eigen::Index n = A.rows();
    Matrix Z(2 * n, 2 * n);
    Z << A, -G, -Q, -A.transpose();
    for (int k = 0; k < 100; ++k) {
        Eigen::PartialPivLU<Matrix> lu(Z);
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < 2 * n; ++i) logdet += std::log(std::abs(lu.matrixLU()(i, i)));
        if (!std::isfinite(logdet)) throw DesignError("CARE: Hamiltonian has eigenvalues on the imaginary axis");
        const double c = std::exp(logdet / static_cast<double>(2 * n));
        Matrix Zn = 0.5 * (Z / c + c * lu.inverse());
        const double change = (Zn - Z).lpNorm<1>();
        Z = std::move(Zn);
        if (change <= 1e-13 * Z.lpNorm<1>()) break;
    }
    const Matrix I = Matrix::Identity(n, n);
    Matrix lhs(2 * n, n), rhs(2 * n, n);
    lhs << Z.topRightCorner(n, n), Z.bottomRightCorner(n, n) + I;
    rhs << Z.topLeftCorner(n, n) + I, Z.bottomLeftCorner(n, n);
    return symmetrize(lhs.colPivHouseholderQr().solve(-rhs));
}

// Structure-preserving doubling; converges quadratically to the stabilizing
// DARE solution without inverting A.
inline Matrix dare_doubling_seed(const Matrix& A, const Matrix& G, const Matrix& Q) {
    const Eigen::Index n = A.rows();
    const Matrix I = Matrix::Identity(n, n);
    Matrix Ak = A, Gk = G, Hk = Q;
    for (int k = 0; k < 200; ++k) {
        Eigen::PartialPivLU<Matrix> W(I + Gk * Hk);
        const Matrix WA = W.solve(Ak);
        const Matrix WG = W.solve(Gk);
        Matrix Hn = Hk + Ak.transpose() * Hk * WA;
        Matrix Gn = Gk + Ak * WG * Ak.transpose();
        Ak = Ak * WA;
        const double change = (Hn - Hk).norm();
        Hk = symmetrize(Hn);
        Gk = symmetrize(Gn);
        if (change <= 1e-15 * std::max(1.0, Hk.norm())) break;
        if (!Hk.allFinite()) throw DesignError("DARE: doubling iteration diverged");
    }
    return Hk;
}

// Exact line search for Newton on the CARE: R(X + tN) = (1-t) R - t^2 N G N.
inline double care_line_search(const Matrix& Rk, const Matrix& V) {
    const double a = Rk.squaredNorm();
    const double b = (Rk.array() * V.array()).sum();
    const double d = V.squaredNorm();
    auto f = [&](double t) { return a * (1 - t) * (1 - t) - 2 * b * (1 - t) * t * t + d * t * t * t * t; };
    // f'(t) = c3 t^3 + c2 t^2 + c1 t + c0
    const double c3 = 4 * d, c2 = 6 * b, c1 = 2 * a - 4 * b, c0 = -2 * a;
    double best_t = 1.0, best_f = f(1.0);
    auto consider = [&](double t) {
        if (t >= 0.0 && t <= 2.0 && f(t) < best_f) {
            best_f = f(t);
            best_t = t;
        }
    };
    consider(0.0);
    consider(2.0);
    if (c3 > 0.0) {
        Matrix comp = Matrix::Zero(3, 3);
        comp(0, 0) = -c2 / c3;
        comp(0, 1) = -c1 / c3;
        comp(0, 2) = -c0 / c3;
        comp(1, 0) = 1.0;
        comp(2, 1) = 1.0;
        for (const auto& r : spectrum(comp))
            if (std::abs(r.imag()) < 1e-9 * std::max(1.0, std::abs(r.real()))) consider(r.real());
    }
    return best_t > 0.0 ? best_t : 1.0;
}

} // namespace detail

/// Stabilizing solution of A^T P + P A - P B R^{-1} B^T P + Q = 0.
/// Sign-function seed followed by Newton-Kleinman iterations with exact line search.
inline CareSolution solve_care(const Matrix& A, const Matrix& B, const RiccatiWeights& w,
                               const RiccatiOptions& opt = {}) {
    detail::check_riccati_shapes(A, B, w, "solve_care");
    if (!is_stabilizable(A, B, TimeDomain::Continuous))
        throw DesignError("CARE: (A, B) is not stabilizable");
    const Matrix G = B * w.R.ldlt().solve(B.transpose());
    const Matrix Q = detail::symmetrize(w.Q);

    CareSolution sol;
    sol.P = detail::care_sign_seed(A, G, Q);
    if (!sol.P.allFinite() || !is_hurwitz(Matrix(A - G * sol.P)))
        throw DesignError("CARE: could not obtain a stabilizing initial solution");

    Matrix Rk = detail::care_residual(A, G, Q, sol.P);
    double res = Rk.norm();
    int stalled = 0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        if (res <= opt.tol * (1.0 + sol.P.norm())) break;
        sol.iterations = it + 1;
        const Matrix Ak = A - G * sol.P;
        const Matrix N = solve_lyapunov(Ak, Rk);
        const double t = detail::care_line_search(Rk, N * G * N);
        Matrix P_next = detail::symmetrize(sol.P + t * N);
        Matrix R_next = detail::care_residual(A, G, Q, P_next);
        const double r_next = R_next.norm();
        if (!(r_next < res)) {
            if (++stalled >= 3) break;
        } else {
            stalled = 0;
        }
        if (r_next <= res) {
            sol.P = std::move(P_next);
            Rk = std::move(R_next);
            res = r_next;
        }
    }
    sol.residual = res;
    if (res > 1e3 * opt.tol * (1.0 + sol.P.norm()))
        throw DesignError("CARE: Newton iteration did not converge (residual " + std::to_string(res) + ")");
    if (!is_hurwitz(Matrix(A - G * sol.P))) throw DesignError("CARE: solution is not stabilizing");
    return sol;
}

/// Stabilizing solution of A^T P A - P - A^T P B (R + B^T P B)^{-1} B^T P A + Q = 0.
/// Doubling seed followed by Hewer (Newton) iterations.
inline DareSolution solve_dare(const Matrix& A, const Matrix& B, const RiccatiWeights& w,
                               const RiccatiOptions& opt = {}) {
    detail::check_riccati_shapes(A, B, w, "solve_dare");
    if (!is_stabilizable(A, B, TimeDomain::Discrete)) throw DesignError("DARE: (A, B) is not stabilizable");
    const Matrix G = B * w.R.ldlt().solve(B.transpose());
    const Matrix Q = detail::symmetrize(w.Q);
    auto gain = [&](const Matrix& P) -> Matrix {
        const Matrix BtP = B.transpose() * P;
        return (w.R + BtP * B).ldlt().solve(BtP * A);
    };

    DareSolution sol;
    sol.P = detail::dare_doubling_seed(A, G, Q);
    if (!sol.P.allFinite() || !is_schur(Matrix(A - B * gain(sol.P))))
        throw DesignError("DARE: could not obtain a stabilizing initial solution");

    double res = detail::dare_residual(A, B, Q, w.R, sol.P).norm();
    int stalled = 0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        if (res <= opt.tol * (1.0 + sol.P.norm())) break;
        sol.iterations = it + 1;
        const Matrix K = gain(sol.P);
        const Matrix Acl = A - B * K;
        Matrix P_next = solve_stein(Acl, Q + K.transpose() * w.R * K);
        const double r_next = detail::dare_residual(A, B, Q, w.R, P_next).norm();
        if (!(r_next < res)) {
            if (++stalled >= 3) break;
        } else {
            stalled = 0;
        }
        if (r_next <= res) {
            sol.P = std::move(P_next);
            res = r_next;
        }
    }
    sol.residual = res;
    sol.K = gain(sol.P);
    if (res > 1e3 * opt.tol * (1.0 + sol.P.norm()))
        throw DesignError("DARE: Newton iteration did not converge (residual " + std::to_string(res) + ")");
    if (!is_schur(Matrix(A - B * sol.K))) throw DesignError("DARE: solution is not stabilizing");
    return sol;
}

namespace detail {
inline void check_epsilon(double epsilon) {
    if (!(epsilon > 0.0 && epsilon <= 1.0)) throw std::invalid_argument("low-gain epsilon must lie in (0, 1]");
}
} // namespace detail

inline LowGainSolutionCT solve_care_lowgain(const Matrix& A, const Matrix& B, double epsilon,
                                            const RiccatiOptions& opt = {}) {
    detail::check_epsilon(epsilon);
    const RiccatiWeights w{epsilon * Matrix::Identity(A.rows(), A.rows()), Matrix::Identity(B.cols(), B.cols())};
    auto s = solve_care(A, B, w, opt);
    return {epsilon, std::move(s.P), s.residual};
}

inline LowGainSolutionDT solve_dare_lowgain(const Matrix& A, const Matrix& B, double epsilon,
                                            const RiccatiOptions& opt = {}) {
    detail::check_epsilon(epsilon);
    const RiccatiWeights w{epsilon * Matrix::Identity(A.rows(), A.rows()), Matrix::Identity(B.cols(), B.cols())};
    auto s = solve_dare(A, B, w, opt);
    return {epsilon, std::move(s.P), std::move(s.K), s.residual};
}

/// State-feedback gain K with a stability margin for A - B K: spectral abscissa
/// below -1 (CT) or spectral radius below 0.5 (DT). Obtained from an LQR on the
/// shifted (CT: A + I) or scaled (DT: 2A, 2B) pair with unit weights. When a
/// stable but uncontrollable mode sits inside the margin the margin is relaxed
/// step by step down to plain stabilization.
inline Matrix margin_gain(const Matrix& A, const Matrix& B, TimeDomain domain) {
    const Eigen::Index n = A.rows();
    const RiccatiWeights w{Matrix::Identity(n, n), Matrix::Identity(B.cols(), B.cols())};
    const Matrix I = Matrix::Identity(n, n);
    if (domain == TimeDomain::Continuous) {
        for (double shift : {1.0, 0.5, 0.1, 0.0}) {
            if (!is_stabilizable(A + shift * I, B, domain)) continue;
            return B.transpose() * solve_care(A + shift * I, B, w).P;
        }
    } else {
        for (double scale : {2.0, 1.5, 1.1, 1.0}) {
            if (!is_stabilizable(scale * A, scale * B, domain)) continue;
            return solve_dare(scale * A, scale * B, w).K;
        }
    }
    throw DesignError("margin_gain: pair is not stabilizable");
}

/// 1 / (2 cos(tau_bar * omega_max)); the protocol needs rho strictly above it.
inline double rho_lower_bound(double tau_bar, double omega_max) {
    if (tau_bar < 0.0 || omega_max < 0.0) throw std::invalid_argument("rho_lower_bound: negative argument");
    const double phase = tau_bar * omega_max;
    if (phase >= std::numbers::pi / 2) {
        throw DesignError("target model infeasible for this delay bound: tau_bar * omega_max = " +
                          std::to_string(phase) + " >= pi/2");
    }
    return 1.0 / (2.0 * std::cos(phase));
}

/// True iff A - rho B B^T P is Hurwitz (rho may be complex).
inline bool hurwitz_low_gain_check(const Matrix& A, const Matrix& B, const Matrix& P, Complex rho,
                                   double tol = 1e-12) {
    if (A.rows() != A.cols() || B.rows() != A.rows() || P.rows() != A.rows() || P.cols() != A.rows())
        throw std::invalid_argument("hurwitz_low_gain_check: shape mismatch");
    const CMatrix M = A.cast<Complex>() - rho * (B * B.transpose() * P).cast<Complex>();
    return is_hurwitz(M, tol);
}

/// Disc { z : |z - (1 + 1/gamma)| < sqrt(1 + gamma) / gamma } with gamma = lambda_max(B^T P B).
struct OmegaDeltaRegion {
    double gamma = 0.0;
    double center = 0.0;
    double radius = 0.0;

    static OmegaDeltaRegion from_gamma(double gamma) {
        if (!(gamma > 0.0)) throw std::invalid_argument("OmegaDeltaRegion: gamma must be positive");
        return {gamma, 1.0 + 1.0 / gamma, std::sqrt(1.0 + gamma) / gamma};
    }

    static OmegaDeltaRegion from_solution(const Matrix& B, const Matrix& P) {
        const Matrix BPB = B.transpose() * P * B;
        Eigen::SelfAdjointEigenSolver<Matrix> es(detail::symmetrize(BPB));
        return from_gamma(es.eigenvalues().maxCoeff());
    }
};

inline bool omega_delta_contains(const OmegaDeltaRegion& region, Complex lambda) {
    return std::abs(lambda - Complex(region.center, 0.0)) < region.radius;
}

} // namespace syncd
