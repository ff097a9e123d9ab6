#pragma once

// Dense linear-algebra helpers shared by every other module: spectra,
// stability predicates, Kronecker products, Lyapunov/Stein solvers and the
// marginal-frequency (omega_max) computations.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "syncd/error.hpp"

namespace syncd {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

/// Eigenvalues sorted by (Re, Im); length equals the matrix order.
using Spectrum = std::vector<Complex>;

enum class TimeDomain { Continuous, Discrete };

inline const char* to_string(TimeDomain d) { return d == TimeDomain::Continuous ? "ct" : "dt"; }

namespace detail {

template <typename Derived>
void require_square(const Eigen::MatrixBase<Derived>& M, const char* what) {
    if (M.rows() != M.cols()) {
        throw std::invalid_argument(std::string(what) + ": matrix must be square, got " +
                                    std::to_string(M.rows()) + "x" + std::to_string(M.cols()));
    }
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& M, const char* what) {
    if (!M.allFinite()) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

inline void sort_spectrum(Spectrum& s) {
    std::sort(s.begin(), s.end(), [](const Complex& a, const Complex& b) {
        if (a.real() != b.real()) return a.real() < b.real();
        return a.imag() < b.imag();
    });
}

/// Parlett-Reinsch balancing with power-of-two scaling (exact similarity, as
/// LAPACK gebal does). Reduces eigenvalue error for strongly non-normal input.
template <typename Mat>
Mat balance(Mat M) {
    using std::abs;
    const Eigen::Index n = M.rows();
    constexpr double radix = 2.0;
    bool converged = false;
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        converged = true;
        for (Eigen::Index i = 0; i < n; ++i) {
            double c = 0.0, r = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                if (j == i) continue;
                c += abs(M(j, i));
                r += abs(M(i, j));
            }
            if (c == 0.0 || r == 0.0) continue;
            double g = r / radix, f = 1.0;
            const double total = c + r;
            while (c < g) {
                f *= radix;
                c *= radix * radix;
            }
            g = r * radix;
            while (c >= g) {
                f /= radix;
                c /= radix * radix;
            }
            if ((c + r) / f < 0.95 * total) {
                converged = false;
                M.row(i) /= f;
                M.col(i) *= f;
            }
        }
    }
    return M;
}

/// Symmetric permutation that isolates eigenvalues (the permutation half of
/// LAPACK gebal). Rows whose off-diagonal part in the active block is zero move
/// to the bottom, such columns to the top; their diagonal entries are exact
/// eigenvalues. Matters for near-triangular matrices such as graph Laplacians,
/// whose eigenvalues can be too ill-conditioned for QR on the full matrix.
template <typename Mat>
Mat isolate_eigenvalues(Mat M, std::vector<typename Mat::Scalar>& isolated) {
    using S = typename Mat::Scalar;
    Eigen::Index lo = 0, hi = M.rows();
    auto swap_index = [&](Eigen::Index a, Eigen::Index b) {
        if (a == b) return;
        M.row(a).swap(M.row(b));
        M.col(a).swap(M.col(b));
    };
    auto offdiag_zero = [&](Eigen::Index k, bool row) {
        for (Eigen::Index j = lo; j < hi; ++j)
            if (j != k && (row ? M(k, j) : M(j, k)) != S(0)) return false;
        return true;
    };
    for (bool found = true; found && hi > lo;) {
        found = false;
        for (Eigen::Index i = lo; i < hi && !found; ++i)
            if (offdiag_zero(i, true)) {
                swap_index(i, --hi);
                isolated.push_back(M(hi, hi));
                found = true;
            }
        for (Eigen::Index j = lo; j < hi && !found; ++j)
            if (offdiag_zero(j, false)) {
                swap_index(j, lo);
                isolated.push_back(M(lo, lo));
                ++lo;
                found = true;
            }
    }
    return M.block(lo, lo, hi - lo, hi - lo);
}

template <typename Solver, typename Mat>
Spectrum spectrum_impl(const Mat& M) {
    require_square(M, "spectrum");
    require_finite(M, "spectrum");
    std::vector<typename Mat::Scalar> isolated;
    const Mat active = isolate_eigenvalues(M, isolated);
    Spectrum out(isolated.begin(), isolated.end());
    if (active.rows() > 0) {
        Solver es(balance(active), /*computeEigenvectors=*/false);
        if (es.info() != Eigen::Success) throw std::runtime_error("spectrum: eigenvalue iteration did not converge");
        for (Eigen::Index i = 0; i < active.rows(); ++i) out.push_back(es.eigenvalues()(i));
    }
    sort_spectrum(out);
    return out;
}

} // namespace detail

/// Eigenvalues of a real square matrix, deterministic order.
inline Spectrum spectrum(const Matrix& M) { return detail::spectrum_impl<Eigen::EigenSolver<Matrix>>(M); }

inline Spectrum spectrum(const CMatrix& M) { return detail::spectrum_impl<Eigen::ComplexEigenSolver<CMatrix>>(M); }

inline double spectral_abscissa(const Spectrum& s) {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& l : s) m = std::max(m, l.real());
    return m;
}

inline double spectral_radius(const Spectrum& s) {
    double m = 0.0;
    for (const auto& l : s) m = std::max(m, std::abs(l));
    return m;
}

/// Largest distance between two spectra after matching eigenvalue clusters.
/// Eigenvalues closer than cluster_radius are grouped and compared by multiplicity
/// and centroid; the centroid of a perturbed multiple eigenvalue is accurate to
/// roundoff even when the individual members are not. Returns +inf on a
/// multiplicity mismatch.
inline double spectrum_distance(const Spectrum& a, const Spectrum& b, double cluster_radius = 1e-5) {
    if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
    struct Cluster {
        int count_a = 0;
        int count_b = 0;
    };
    std::vector<Complex> pts(a);
    pts.insert(pts.end(), b.begin(), b.end());
    const std::size_t n = pts.size();
    std::vector<std::size_t> parent(n);
    for (std::size_t i = 0; i < n; ++i) parent[i] = i;
    auto find = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (std::abs(pts[i] - pts[j]) < cluster_radius) parent[find(i)] = find(j);
    std::vector<Cluster> clusters(n);
    std::vector<Complex> sum_a(n, 0.0), sum_b(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r = find(i);
        if (i < a.size()) {
            ++clusters[r].count_a;
            sum_a[r] += pts[i];
        } else {
            ++clusters[r].count_b;
            sum_b[r] += pts[i];
        }
    }
    double worst = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        const auto& c = clusters[r];
        if (c.count_a == 0 && c.count_b == 0) continue;
        if (c.count_a != c.count_b) return std::numeric_limits<double>::infinity();
        worst = std::max(worst, std::abs(sum_a[r] - sum_b[r]) / static_cast<double>(c.count_a));
    }
    return worst;
}

template <typename M>
bool is_hurwitz(const M& A, double tol = 0.0) {
    return A.rows() == 0 || spectral_abscissa(spectrum(A)) < -tol;
}

template <typename M>
bool is_schur(const M& A, double tol = 0.0) {
    return A.rows() == 0 || spectral_radius(spectrum(A)) < 1.0 - tol;
}

template <typename M>
bool is_stable(const M& A, TimeDomain d, double tol = 0.0) {
    return d == TimeDomain::Continuous ? is_hurwitz(A, tol) : is_schur(A, tol);
}

/// Largest frequency of a marginal (imaginary-axis) eigenvalue; 0 when A is Hurwitz.
/// Throws DesignError if an eigenvalue lies in the open right half plane beyond axis_tol.
inline double omega_max_ct(const Matrix& A, double axis_tol = 1e-8) {
    const Spectrum s = spectrum(A);
    double w = 0.0;
    for (const auto& l : s) {
        if (l.real() > axis_tol) {
            throw DesignError("omega_max: eigenvalue " + std::to_string(l.real()) + "+j" +
                              std::to_string(l.imag()) + " outside the closed left half plane");
        }
        if (std::abs(l.real()) <= axis_tol) w = std::max(w, std::abs(l.imag()));
    }
    return w;
}

/// Largest argument in [0, pi] of a unit-circle eigenvalue; 0 when A is Schur.
inline double omega_max_dt(const Matrix& A, double circle_tol = 1e-8) {
    const Spectrum s = spectrum(A);
    double w = 0.0;
    for (const auto& l : s) {
        const double r = std::abs(l);
        if (r > 1.0 + circle_tol) {
            throw DesignError("omega_max: eigenvalue with modulus " + std::to_string(r) + " outside the unit disc");
        }
        if (std::abs(r - 1.0) <= circle_tol) w = std::max(w, std::abs(std::arg(l)));
    }
    return std::min(w, std::numbers::pi);
}

inline double omega_max(const Matrix& A, TimeDomain d, double tol = 1e-8) {
    return d == TimeDomain::Continuous ? omega_max_ct(A, tol) : omega_max_dt(A, tol);
}

template <typename DA, typename DB>
auto kron(const Eigen::MatrixBase<DA>& A, const Eigen::MatrixBase<DB>& B) {
    using Scalar = typename DA::Scalar;
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> K(A.rows() * B.rows(), A.cols() * B.cols());
    for (Eigen::Index i = 0; i < A.rows(); ++i)
        for (Eigen::Index j = 0; j < A.cols(); ++j)
            K.block(i * B.rows(), j * B.cols(), B.rows(), B.cols()) = A(i, j) * B;
    return K;
}

inline Matrix block_diag(const std::vector<Matrix>& blocks) {
    Eigen::Index r = 0, c = 0;
    for (const auto& b : blocks) {
        r += b.rows();
        c += b.cols();
    }
    Matrix out = Matrix::Zero(r, c);
    r = c = 0;
    for (const auto& b : blocks) {
        out.block(r, c, b.rows(), b.cols()) = b;
        r += b.rows();
        c += b.cols();
    }
    return out;
}

/// Numerical rank with singular-value threshold tol * max(1, sigma_max).
template <typename M>
Eigen::Index numerical_rank(const M& A, double tol = 1e-9) {
    if (A.size() == 0) return 0;
    Eigen::JacobiSVD<Eigen::Matrix<typename M::Scalar, Eigen::Dynamic, Eigen::Dynamic>> svd(A);
    const auto& sv = svd.singularValues();
    const double thr = tol * std::max(1.0, static_cast<double>(sv(0)));
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > thr) ++r;
    return r;
}

/// Orthonormal basis of the right null space (columns).
inline Matrix null_space(const Matrix& A, double tol = 1e-9) {
    const Eigen::Index n = A.cols();
    if (A.rows() == 0) return Matrix::Identity(n, n);
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullV);
    const auto& sv = svd.singularValues();
    const double thr = tol * std::max(1.0, sv.size() > 0 ? sv(0) : 0.0);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i)
        if (sv(i) > thr) ++r;
    return svd.matrixV().rightCols(n - r);
}

/// Solves A^T X + X A + Q = 0 (A Hurwitz for a unique solution).
inline Matrix solve_lyapunov(const Matrix& A, const Matrix& Q) {
    const Eigen::Index n = A.rows();
    const Matrix I = Matrix::Identity(n, n);
    const Matrix At = A.transpose();
    const Matrix K = kron(I, At) + kron(At, I);
    const Vector q = Eigen::Map<const Vector>(Q.data(), n * n);
    const Vector x = K.fullPivLu().solve(-q);
    Matrix X = Eigen::Map<const Matrix>(x.data(), n, n);
    return 0.5 * (X + X.transpose());
}

/// Solves X = A^T X A + Q (A Schur for a unique solution).
inline Matrix solve_stein(const Matrix& A, const Matrix& Q) {
    const Eigen::Index n = A.rows();
    const Matrix At = A.transpose();
    const Matrix K = Matrix::Identity(n * n, n * n) - kron(At, At);
    const Vector q = Eigen::Map<const Vector>(Q.data(), n * n);
    const Vector x = K.fullPivLu().solve(q);
    Matrix X = Eigen::Map<const Matrix>(x.data(), n, n);
    return 0.5 * (X + X.transpose());
}

/// Observability-type stack [C; C A; ...; C A^{k-1}].
inline Matrix observability_stack(const Matrix& C, const Matrix& A, Eigen::Index k) {
    Matrix O(C.rows() * k, A.cols());
    Matrix row = C;
    for (Eigen::Index i = 0; i < k; ++i) {
        O.middleRows(i * C.rows(), C.rows()) = row;
        row = row * A;
    }
    return O;
}

/// PBH test: rank [lambda I - A, B] = n for every eigenvalue in the unstable region.
inline bool is_stabilizable(const Matrix& A, const Matrix& B, TimeDomain d, double tol = 1e-9) {
    const Eigen::Index n = A.rows();
    const Spectrum s = spectrum(A);
    for (const auto& l : s) {
        const bool unstable = d == TimeDomain::Continuous ? l.real() >= -tol : std::abs(l) >= 1.0 - tol;
        if (!unstable) continue;
        CMatrix pbh(n, n + B.cols());
        pbh.leftCols(n) = l * CMatrix::Identity(n, n) - A.cast<Complex>();
        pbh.rightCols(B.cols()) = B.cast<Complex>();
        if (numerical_rank(pbh, tol) < n) return false;
    }
    return true;
}

inline bool is_detectable(const Matrix& C, const Matrix& A, TimeDomain d, double tol = 1e-9) {
    return is_stabilizable(A.transpose(), C.transpose(), d, tol);
}

} // namespace syncd
