#pragma once

// Delay-stability certificates, the delay-free closed-loop block system and
// the epsilon search.
//
// A certificate for x' = A0 x + sum_i A_i x(t - tau_i) (or its shift analog)
// tracks the characteristic determinant along a homotopy that starts at the
// delay-free system and ends at the given delays:
//   CT: delays s * tau_i, s in [0, 1]
//   DT: e^{-jw tau_i} replaced by kappa e^{-jw tau_i} + (1 - kappa), kappa in [0, 1]
// Roots move continuously along either path (the DT polynomial stays monic of
// fixed degree), so the end system is stable iff the start system is stable and
// no root touches the stability boundary on the way. A touch is a zero of the
// boundary determinant on the (homotopy, frequency) rectangle. Zeros are found
// by the winding number of the determinant around each grid cell, and a
// relative floor on |det| guards against zeros sitting on grid lines.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "syncd/error.hpp"
#include "syncd/homogenize.hpp"
#include "syncd/lincore.hpp"
#include "syncd/netgraph.hpp"
#include "syncd/protocol.hpp"

namespace syncd {

struct DelayTerm {
    Matrix A;
    double tau = 0.0; ///< seconds (CT) or steps (DT)
};

struct CertifyOptions {
    int omega_points = 4001;
    int homotopy_points = 33;
    double margin_rel = 1e-6;       ///< floor on |det| relative to the grid median
    double omega_half_width = 0.0;  ///< CT only; 0 = 1.1 (|A0| + sum |A_i|), at least 1
    int refine_depth = 12;          ///< edge bisections when the phase jumps
};

struct DelayCertificate {
    bool passed = false;
    TimeDomain domain = TimeDomain::Continuous;
    std::string reason;
    double omega_lo = 0.0, omega_hi = 0.0;
    int omega_points = 0;
    int homotopy_points = 0;
    double min_abs_det = std::numeric_limits<double>::infinity();
    double median_abs_det = 0.0;
    double margin = 0.0;
    double worst_omega = 0.0;
    std::vector<double> worst_taus;
    double worst_homotopy = 0.0;
    bool crossing_found = false;
    int crossings = 0;
    int instances = 1; ///< number of delay assignments aggregated

    [[nodiscard]] std::string summary() const {
        std::ostringstream os;
        os << std::setprecision(10);
        os << "certificate " << (passed ? "PASS" : "FAIL") << '\n';
        os << "domain " << to_string(domain) << '\n';
        if (!reason.empty()) os << "reason " << reason << '\n';
        os << "omega_range " << omega_lo << ' ' << omega_hi << '\n';
        os << "omega_points " << omega_points << '\n';
        os << "homotopy_points " << homotopy_points << '\n';
        os << "instances " << instances << '\n';
        os << "min_abs_det " << min_abs_det << '\n';
        os << "median_abs_det " << median_abs_det << '\n';
        os << "margin " << margin << '\n';
        os << "boundary_crossings " << crossings << '\n';
        os << "worst_omega " << worst_omega << '\n';
        os << "worst_taus";
        for (double t : worst_taus) os << ' ' << t;
        os << '\n';
        return os.str();
    }
};

namespace detail {

inline double wrap_angle(double a) {
    while (a > std::numbers::pi) a -= 2 * std::numbers::pi;
    while (a <= -std::numbers::pi) a += 2 * std::numbers::pi;
    return a;
}

inline double sum_norms(const Matrix& A0, const std::vector<DelayTerm>& terms) {
    double s = A0.operatorNorm();
    for (const auto& t : terms) s += t.A.operatorNorm();
    return s;
}

inline void check_terms(const Matrix& A0, const std::vector<DelayTerm>& terms) {
    require_square(A0, "delay certificate");
    for (const auto& t : terms) {
        if (t.A.rows() != A0.rows() || t.A.cols() != A0.cols())
            throw std::invalid_argument("delay certificate: delayed matrix dimension mismatch");
        if (!(t.tau >= 0.0) || !std::isfinite(t.tau)) throw std::invalid_argument("delay certificate: bad delay");
    }
}

/// Sweeps det_fn(h, w) over h in [0, 1] x w in [lo, hi] and fills the certificate.
template <typename DetFn, typename TauFn>
void sweep_determinant(DetFn&& det_fn, TauFn&& taus_at, double lo, double hi, const CertifyOptions& opt,
                       DelayCertificate& cert) {
    const int H = std::max(2, opt.homotopy_points);
    const int M = std::max(3, opt.omega_points);
    cert.omega_lo = lo;
    cert.omega_hi = hi;
    cert.omega_points = M;
    cert.homotopy_points = H;
    auto h_at = [&](int k) { return static_cast<double>(k) / (H - 1); };
    auto w_at = [&](int l) { return lo + (hi - lo) * static_cast<double>(l) / (M - 1); };

    std::vector<Complex> F(static_cast<std::size_t>(H) * M);
    std::vector<double> mags;
    mags.reserve(F.size());
    std::size_t argmin = 0;
    for (int k = 0; k < H; ++k)
        for (int l = 0; l < M; ++l) {
            const std::size_t idx = static_cast<std::size_t>(k) * M + l;
            F[idx] = det_fn(h_at(k), w_at(l));
            mags.push_back(std::abs(F[idx]));
            if (mags.back() < mags[argmin]) argmin = idx;
        }
    std::vector<double> sorted(mags);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    cert.median_abs_det = sorted[sorted.size() / 2];
    cert.min_abs_det = mags[argmin];
    cert.margin = opt.margin_rel * cert.median_abs_det;
    const int kmin = static_cast<int>(argmin / static_cast<std::size_t>(M));
    cert.worst_homotopy = h_at(kmin);
    cert.worst_omega = w_at(static_cast<int>(argmin % static_cast<std::size_t>(M)));
    cert.worst_taus = taus_at(cert.worst_homotopy);

    // phase change along a straight edge, bisected while the step exceeds pi/2
    auto edge = [&](auto&& self, double h0, double w0, Complex f0, double h1, double w1, Complex f1,
                    int depth) -> double {
        if (f0 == 0.0 || f1 == 0.0) return std::numeric_limits<double>::quiet_NaN();
        const double d = wrap_angle(std::arg(f1) - std::arg(f0));
        if (std::abs(d) <= std::numbers::pi / 2 || depth == 0) return d;
        const double hm = 0.5 * (h0 + h1), wm = 0.5 * (w0 + w1);
        const Complex fm = det_fn(hm, wm);
        return self(self, h0, w0, f0, hm, wm, fm, depth - 1) + self(self, hm, wm, fm, h1, w1, f1, depth - 1);
    };

    bool located = false;
    for (int k = 0; k + 1 < H; ++k)
        for (int l = 0; l + 1 < M; ++l) {
            const double h0 = h_at(k), h1 = h_at(k + 1), w0 = w_at(l), w1 = w_at(l + 1);
            const Complex a = F[static_cast<std::size_t>(k) * M + l], b = F[static_cast<std::size_t>(k) * M + l + 1];
            const Complex c = F[static_cast<std::size_t>(k + 1) * M + l + 1], d = F[static_cast<std::size_t>(k + 1) * M + l];
            const double total = edge(edge, h0, w0, a, h0, w1, b, opt.refine_depth) +
                                 edge(edge, h0, w1, b, h1, w1, c, opt.refine_depth) +
                                 edge(edge, h1, w1, c, h1, w0, d, opt.refine_depth) +
                                 edge(edge, h1, w0, d, h0, w0, a, opt.refine_depth);
            const bool hit = std::isnan(total) || std::lround(total / (2 * std::numbers::pi)) != 0;
            if (!hit) continue;
            ++cert.crossings;
            if (!located) {
                located = true;
                cert.worst_homotopy = 0.5 * (h0 + h1);
                cert.worst_omega = 0.5 * (w0 + w1);
                cert.worst_taus = taus_at(cert.worst_homotopy);
            }
        }
    cert.crossing_found = cert.crossings > 0;
    cert.passed = !cert.crossing_found && cert.min_abs_det > cert.margin;
    if (cert.crossing_found)
        cert.reason = "characteristic root reaches the stability boundary along the delay path";
    else if (!cert.passed)
        cert.reason = "determinant below margin on the frequency grid";
}

} // namespace detail

/// Delay-independent-of-path test for x' = A0 x + sum A_i x(t - tau_i) over the
/// whole segment s * tau, s in [0, 1].
inline DelayCertificate check_delay_stability_ct(const Matrix& A0, const std::vector<DelayTerm>& terms,
                                                 const CertifyOptions& opt = {}) {
    detail::check_terms(A0, terms);
    DelayCertificate cert;
    cert.domain = TimeDomain::Continuous;
    Matrix sum = A0;
    for (const auto& t : terms) sum += t.A;
    const double W =
        opt.omega_half_width > 0.0 ? opt.omega_half_width : std::max(1.0, 1.1 * detail::sum_norms(A0, terms));
    auto taus_at = [&](double s) {
        std::vector<double> out;
        for (const auto& t : terms) out.push_back(s * t.tau);
        return out;
    };
    if (!is_hurwitz(sum)) {
        cert.omega_lo = -W;
        cert.omega_hi = W;
        cert.worst_taus = taus_at(0.0);
        cert.reason = "delay-free matrix A0 + sum A_i is not Hurwitz";
        return cert;
    }
    const Eigen::Index n = A0.rows();
    const CMatrix A0c = A0.cast<Complex>();
    std::vector<CMatrix> Ac;
    for (const auto& t : terms) Ac.push_back(t.A.cast<Complex>());
    auto det_fn = [&](double s, double w) {
        CMatrix M = Complex(0.0, w) * CMatrix::Identity(n, n) - A0c;
        for (std::size_t i = 0; i < terms.size(); ++i) M -= std::polar(1.0, -w * s * terms[i].tau) * Ac[i];
        return M.partialPivLu().determinant();
    };
    detail::sweep_determinant(det_fn, taus_at, -W, W, opt, cert);
    return cert;
}

/// Shift-operator analog on the unit circle for integer delays.
inline DelayCertificate check_delay_stability_dt(const Matrix& A0, const std::vector<DelayTerm>& terms,
                                                 const CertifyOptions& opt = {}) {
    detail::check_terms(A0, terms);
    for (const auto& t : terms)
        if (t.tau != std::floor(t.tau)) throw std::invalid_argument("delay certificate: discrete delays are integers");
    DelayCertificate cert;
    cert.domain = TimeDomain::Discrete;
    Matrix sum = A0;
    for (const auto& t : terms) sum += t.A;
    auto taus_at = [&](double) {
        std::vector<double> out;
        for (const auto& t : terms) out.push_back(t.tau);
        return out;
    };
    if (!is_schur(sum)) {
        cert.omega_lo = -std::numbers::pi;
        cert.omega_hi = std::numbers::pi;
        cert.worst_taus = taus_at(0.0);
        cert.reason = "delay-free matrix A0 + sum A_i is not Schur";
        return cert;
    }
    const Eigen::Index n = A0.rows();
    const CMatrix A0c = A0.cast<Complex>();
    std::vector<CMatrix> Ac;
    for (const auto& t : terms) Ac.push_back(t.A.cast<Complex>());
    auto det_fn = [&](double kappa, double w) {
        CMatrix M = std::polar(1.0, w) * CMatrix::Identity(n, n) - A0c;
        for (std::size_t i = 0; i < terms.size(); ++i)
            M -= (kappa * std::polar(1.0, -w * terms[i].tau) + (1.0 - kappa)) * Ac[i];
        return M.partialPivLu().determinant();
    };
    // real roots leave through z = -1; pad by half a cell so w = +-pi is inside a cell, not on its rim
    const int M = std::max(3, opt.omega_points);
    const double h = 2 * std::numbers::pi / (M - 1);
    CertifyOptions padded = opt;
    padded.omega_points = M + 1;
    detail::sweep_determinant(det_fn, taus_at, -std::numbers::pi - h / 2, std::numbers::pi + h / 2, padded, cert);
    return cert;
}

/// Spectral radius of the delay-augmented companion matrix of
/// x(k+1) = A0 x(k) + sum A_i x(k - tau_i); independent oracle for the DT certificate.
inline double dt_delay_spectral_radius(const Matrix& A0, const std::vector<DelayTerm>& terms) {
    detail::check_terms(A0, terms);
    int tmax = 0;
    for (const auto& t : terms) tmax = std::max(tmax, static_cast<int>(t.tau));
    const Eigen::Index n = A0.rows();
    const Eigen::Index N = n * (tmax + 1);
    Matrix M = Matrix::Zero(N, N);
    M.topLeftCorner(n, n) = A0;
    for (const auto& t : terms) M.block(0, n * static_cast<Eigen::Index>(t.tau), n, n) += t.A;
    if (tmax > 0) M.bottomLeftCorner(n * tmax, n * tmax).setIdentity();
    return spectral_radius(spectrum(M));
}

/// Certifies the single-agent delayed kernel x' = A x - rho B G x(t - tau) (or
/// its shift analog) for every tau in [0, tau_bar].
inline DelayCertificate certify_protocol_delay(const ProtocolDesign& d, double tau_bar, const CertifyOptions& opt = {}) {
    if (!(tau_bar >= 0.0)) throw std::invalid_argument("certify_protocol_delay: tau_bar must be >= 0");
    const Matrix A1 = d.B * d.feedback();
    if (d.domain == TimeDomain::Continuous) return check_delay_stability_ct(d.A, {{A1, tau_bar}}, opt);

    // every integer delay 0..floor(tau_bar)
    DelayCertificate agg;
    agg.domain = TimeDomain::Discrete;
    agg.passed = true;
    agg.instances = 0;
    double worst_ratio = std::numeric_limits<double>::infinity();
    for (int tau = 0; tau <= static_cast<int>(std::floor(tau_bar)); ++tau) {
        DelayCertificate c = check_delay_stability_dt(d.A, {{A1, static_cast<double>(tau)}}, opt);
        ++agg.instances;
        agg.omega_lo = c.omega_lo;
        agg.omega_hi = c.omega_hi;
        agg.omega_points = c.omega_points;
        agg.homotopy_points = c.homotopy_points;
        agg.crossings += c.crossings;
        agg.crossing_found = agg.crossing_found || c.crossing_found;
        const double ratio = c.median_abs_det > 0.0 ? c.min_abs_det / c.median_abs_det : 0.0;
        const bool take = (!c.passed && agg.passed) || (c.passed == agg.passed && ratio < worst_ratio);
        if (take) {
            worst_ratio = ratio;
            agg.min_abs_det = c.min_abs_det;
            agg.median_abs_det = c.median_abs_det;
            agg.margin = c.margin;
            agg.worst_omega = c.worst_omega;
            agg.worst_taus = c.worst_taus;
            agg.worst_homotopy = c.worst_homotopy;
            if (!c.passed) agg.reason = c.reason + " (tau = " + std::to_string(tau) + ")";
        }
        agg.passed = agg.passed && c.passed;
    }
    return agg;
}

struct EpsilonSearch {
    double eps0 = 0.5;
    double shrink = 0.5;
    int max_iters = 30;
    CertifyOptions cert;
};

struct EpsilonSelection {
    double epsilon = 0.0;
    int iterations = 0;
    ProtocolDesign design;
    DelayCertificate certificate;
};

/// Largest eps0 * shrink^k whose design passes certify_protocol_delay.
inline EpsilonSelection select_epsilon(const TargetModel& target, double tau_bar, double rho,
                                       const EpsilonSearch& search = {}) {
    if (!(search.eps0 > 0.0) || !(search.shrink > 0.0 && search.shrink < 1.0) || search.max_iters < 1)
        throw std::invalid_argument("select_epsilon: bad search parameters");
    const double rho_star = rho_lower_bound(tau_bar, target.omega_max);
    if (!(rho > rho_star))
        throw DesignError("select_epsilon: rho = " + std::to_string(rho) + " must exceed rho* = " +
                          std::to_string(rho_star));
    double eps = search.eps0;
    DelayCertificate last;
    for (int k = 0; k < search.max_iters; ++k, eps *= search.shrink) {
        ProtocolDesign d = design_protocol(target, tau_bar, eps, rho);
        DelayCertificate c = certify_protocol_delay(d, tau_bar, search.cert);
        if (c.passed) return {eps, k + 1, std::move(d), std::move(c)};
        last = std::move(c);
    }
    std::ostringstream os;
    os << "select_epsilon: no certified epsilon after " << search.max_iters << " tries (smallest "
       << eps / search.shrink << "); last failure at omega = " << last.worst_omega << ": " << last.reason;
    throw CertificateError(os.str());
}

/// Delay-free closed loop in relative coordinates (xt, ebar, e, w) with N - 1
/// copies of the target state plus the stacked disturbance states.
struct ClosedLoopBlocks {
    TimeDomain domain = TimeDomain::Continuous;
    Matrix M;
    Matrix X, Ebar, E, S; ///< diagonal blocks
    Matrix Pi;            ///< [I, -1] selector
    Matrix reduced;       ///< Lbar (CT) or Dtilde (DT)
    Spectrum spectrum;
    Spectrum block_union;
    double union_distance = 0.0;
    double stability_indicator = 0.0; ///< spectral abscissa (CT) or radius (DT)
    bool stable = false;
};

inline ClosedLoopBlocks closedloop_nodelay(const ProtocolDesign& d, const std::vector<Precompensator>& precomps,
                                           const Network& net) {
    const std::size_t N = net.size();
    if (N < 2) throw std::invalid_argument("closedloop_nodelay: need at least 2 agents");
    if (precomps.size() != N) throw std::invalid_argument("closedloop_nodelay: one precompensator per agent");
    if (!has_spanning_tree(net)) throw AssumptionError("closedloop_nodelay: no directed spanning tree");
    const bool ct = d.domain == TimeDomain::Continuous;
    const Eigen::Index n = d.A.rows(), m = static_cast<Eigen::Index>(N) - 1, q = d.B.cols();

    ClosedLoopBlocks r;
    r.domain = d.domain;
    const GraphMatrices g = graph_matrices(net);
    r.reduced = ct ? g.L_bar : g.D_tilde;
    r.Pi = Matrix::Zero(m, m + 1);
    r.Pi.leftCols(m).setIdentity();
    r.Pi.col(m).setConstant(-1.0);

    std::vector<Matrix> As, Cs;
    for (const auto& pc : precomps) {
        if (pc.C_s.rows() != q || pc.C_s.cols() != pc.A_s.rows())
            throw std::invalid_argument("closedloop_nodelay: disturbance output dimension mismatch");
        As.push_back(pc.A_s);
        Cs.push_back(pc.C_s);
    }
    r.S = block_diag(As);
    const Matrix CsAll = block_diag(Cs);
    const Eigen::Index ns = r.S.rows();

    const Matrix I_m = Matrix::Identity(m, m), I_n = Matrix::Identity(n, n);
    const Matrix BG = d.B * d.gain;
    r.X = kron(I_m, d.A - d.rho * BG);
    r.Ebar = kron(I_m, d.A - d.F * d.C);
    r.E = ct ? Matrix(kron(I_m, d.A) - kron(r.reduced, I_n)) : Matrix(kron(r.reduced, d.A));
    const Matrix psi_x = kron(r.Pi, d.B) * CsAll;
    const Matrix obs_w = ct ? r.reduced : Matrix(I_m - r.reduced);
    const Matrix psi_eb = kron(Matrix(obs_w * r.Pi), d.B) * CsAll;

    const Eigen::Index b = m * n;
    r.M = Matrix::Zero(3 * b + ns, 3 * b + ns);
    r.M.block(0, 0, b, b) = r.X;
    r.M.block(0, 2 * b, b, b) = d.rho * kron(I_m, BG);
    r.M.block(b, b, b, b) = r.Ebar;
    // the e-row picks up ebar through I in CT and through I (x) A in DT
    r.M.block(2 * b, b, b, b) = ct ? Matrix(Matrix::Identity(b, b)) : Matrix(kron(I_m, d.A));
    r.M.block(2 * b, 2 * b, b, b) = r.E;
    if (ns > 0) {
        r.M.block(0, 3 * b, b, ns) = psi_x;
        r.M.block(b, 3 * b, b, ns) = psi_eb;
        r.M.block(2 * b, 3 * b, b, ns) = psi_x;
        r.M.block(3 * b, 3 * b, ns, ns) = r.S;
    }

    r.spectrum = syncd::spectrum(r.M);
    for (const Matrix* blk : {&r.X, &r.Ebar, &r.E, &r.S}) {
        const Spectrum s = syncd::spectrum(*blk);
        r.block_union.insert(r.block_union.end(), s.begin(), s.end());
    }
    detail::sort_spectrum(r.block_union);
    r.union_distance = spectrum_distance(r.spectrum, r.block_union);
    r.stability_indicator = ct ? spectral_abscissa(r.spectrum) : spectral_radius(r.spectrum);
    r.stable = ct ? r.stability_indicator < 0.0 : r.stability_indicator < 1.0;
    return r;
}

} // namespace syncd
