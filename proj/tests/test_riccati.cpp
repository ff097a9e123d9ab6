#include <catch2/catch_amalgamated.hpp>

#include "syncd/riccati.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace syncd;
using Catch::Approx;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

Matrix oscillator() {
    Matrix A(2, 2);
    A << 0, 1, -1, 0;
    return A;
}

Matrix e2() {
    Matrix B(2, 1);
    B << 0, 1;
    return B;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix M(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) M(i, j) = g(rng);
    return M;
}

// Eigenvalues in the closed left half plane: skew part plus a nonpositive diagonal shift.
Matrix random_marginal_ct(std::mt19937_64& rng, Eigen::Index n) {
    const Matrix S = random_matrix(rng, n, n);
    Matrix A = 0.5 * (S - S.transpose());
    return A;
}

// Orthogonal matrix: eigenvalues on the unit circle.
Matrix random_orthogonal(std::mt19937_64& rng, Eigen::Index n) {
    Eigen::HouseholderQR<Matrix> qr(random_matrix(rng, n, n));
    return qr.householderQ() * Matrix::Identity(n, n);
}

double min_eig_sym(const Matrix& M) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (M + M.transpose()));
    return es.eigenvalues().minCoeff();
}

} // namespace

TEST_CASE("CARE low-gain scalar closed forms", "[riccati]") {
    SECTION("A = 0: -P^2 + eps = 0") {
        const auto s = solve_care_lowgain(scalar(0), scalar(1), 0.04);
        CHECK(s.P(0, 0) == Approx(0.2).margin(1e-12));
    }
    SECTION("A = -1: -2P - P^2 + eps = 0") {
        const auto s = solve_care_lowgain(scalar(-1), scalar(1), 0.01);
        CHECK(s.P(0, 0) == Approx(-1.0 + std::sqrt(1.01)).margin(1e-12));
        CHECK(s.P(0, 0) == Approx(0.004988).margin(1e-6));
    }
    SECTION("epsilon outside (0,1] is rejected") {
        CHECK_THROWS_AS(solve_care_lowgain(scalar(0), scalar(1), 0.0), std::invalid_argument);
        CHECK_THROWS_AS(solve_care_lowgain(scalar(0), scalar(1), 1.5), std::invalid_argument);
    }
    SECTION("unstabilizable pair is rejected") {
        Matrix A(2, 2);
        A << 0, 0, 0, 1;
        Matrix B(2, 1);
        B << 1, 0;
        CHECK_THROWS_AS(solve_care_lowgain(A, B, 0.1), DesignError);
    }
}

TEST_CASE("CARE with neutral-stable weights has P proportional to eps", "[riccati]") {
    // With A^T + A = 0 and weights (eps^2 B B^T, I), P_eps = eps I solves the equation exactly.
    const Matrix A = oscillator(), B = e2();
    auto solve = [&](double eps) {
        return solve_care(A, B, {eps * eps * B * B.transpose(), Matrix::Identity(1, 1)}).P;
    };
    const double eps = 0.01;
    const Matrix P1 = solve(eps) / eps;
    const Matrix P2 = solve(eps / 10) / (eps / 10);
    CHECK((P1 - P2).norm() < 1e-8);
    CHECK((P1 - Matrix::Identity(2, 2)).norm() < 1e-8);
}

TEST_CASE("DARE low-gain scalar closed forms", "[riccati]") {
    SECTION("A = 0 gives P = eps") {
        for (double eps : {1.0, 0.3, 1e-3}) {
            const auto s = solve_dare_lowgain(scalar(0), scalar(1), eps);
            CHECK(s.P(0, 0) == Approx(eps).margin(1e-12));
        }
    }
    SECTION("A = 1: P^2 - eps P - eps = 0, K = P / (1 + P)") {
        const double eps = 0.01;
        const auto s = solve_dare_lowgain(scalar(1), scalar(1), eps);
        const double P = (eps + std::sqrt(eps * eps + 4 * eps)) / 2;
        CHECK(s.P(0, 0) == Approx(P).margin(1e-12));
        CHECK(s.P(0, 0) == Approx(0.10512).margin(1e-5));
        CHECK(s.K(0, 0) == Approx(P / (1 + P)).margin(1e-12));
        CHECK(s.K(0, 0) == Approx(0.09512).margin(1e-5));
    }
}

TEST_CASE("Riccati solutions on random pairs", "[riccati][property]") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        const Eigen::Index n = 1 + trial % 6;
        const Eigen::Index m = 1 + trial % 3;
        const Matrix A = random_matrix(rng, n, n);
        const Matrix B = random_matrix(rng, n, m);
        Matrix prevC, prevD;
        for (double eps : {1e-4, 1e-3, 1e-2, 1e-1}) {
            const auto c = solve_care_lowgain(A, B, eps);
            CHECK(c.residual <= 1e-8 * (1 + c.P.norm()));
            CHECK((c.P - c.P.transpose()).norm() <= 1e-10 * (1 + c.P.norm()));
            CHECK(min_eig_sym(c.P) > 0);
            CHECK(is_hurwitz(Matrix(A - B * B.transpose() * c.P)));

            const auto d = solve_dare_lowgain(A, B, eps);
            CHECK(d.residual <= 1e-8 * (1 + d.P.norm()));
            CHECK(min_eig_sym(d.P) > 0);
            const Matrix K = (Matrix::Identity(m, m) + B.transpose() * d.P * B)
                                 .ldlt()
                                 .solve(B.transpose() * d.P * A);
            CHECK((K - d.K).norm() <= 1e-10 * (1 + K.norm()));
            CHECK(is_schur(Matrix(A - B * d.K)));

            // P is nondecreasing in eps
            if (prevC.size() > 0) {
                CHECK(min_eig_sym(c.P - prevC) >= -1e-8 * (1 + c.P.norm()));
                CHECK(min_eig_sym(d.P - prevD) >= -1e-8 * (1 + d.P.norm()));
            }
            prevC = c.P;
            prevD = d.P;
        }
    }
}

TEST_CASE("low-gain limit: P vanishes as eps decreases", "[riccati][property]") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 2 + trial % 5;
        const Matrix Act = random_marginal_ct(rng, n);
        const Matrix Adt = random_orthogonal(rng, n);
        const Matrix B = random_matrix(rng, n, 1 + trial % 2);
        double prev_ct = 1e300, prev_dt = 1e300;
        for (double eps : {1e-1, 1e-2, 1e-3, 1e-4}) {
            const double nc = solve_care_lowgain(Act, B, eps).P.norm();
            const double nd = solve_dare_lowgain(Adt, B, eps).P.norm();
            CHECK(nc < prev_ct);
            CHECK(nd < prev_dt);
            prev_ct = nc;
            prev_dt = nd;
        }
        CHECK(prev_ct < 0.1);
        CHECK(prev_dt < 0.1);
    }
}

TEST_CASE("rho lower bound", "[riccati]") {
    CHECK(rho_lower_bound(0.0, 3.0) == 0.5);
    CHECK(rho_lower_bound(0.5, 1.0) == Approx(1.0 / (2.0 * std::cos(0.5))).margin(1e-12));
    CHECK(rho_lower_bound(0.5, 1.0) == Approx(0.56975).margin(1e-5));
    CHECK_THROWS_AS(rho_lower_bound(1.0, std::numbers::pi / 2), DesignError);
    CHECK_THROWS_AS(rho_lower_bound(1.0, 2.0), DesignError);
}

TEST_CASE("Hurwitz robustness of low-gain feedback", "[riccati]") {
    const double eps = 0.01;
    SECTION("scalar integrator") {
        const auto s = solve_care_lowgain(scalar(0), scalar(1), eps);
        CHECK(hurwitz_low_gain_check(scalar(0), scalar(1), s.P, 0.5));
        CHECK_FALSE(hurwitz_low_gain_check(scalar(0), scalar(1), s.P, 0.0));
    }
    SECTION("oscillator with complex rho") {
        const auto s = solve_care_lowgain(oscillator(), e2(), eps);
        CHECK(hurwitz_low_gain_check(oscillator(), e2(), s.P, Complex(0.5, 0.3)));
        CHECK(hurwitz_low_gain_check(oscillator(), e2(), s.P, Complex(2.0, -4.0)));
        CHECK_FALSE(hurwitz_low_gain_check(oscillator(), e2(), s.P, 0.0));
    }
    SECTION("shape mismatch") {
        CHECK_THROWS_AS(hurwitz_low_gain_check(oscillator(), scalar(1), Matrix::Identity(2, 2), 1.0),
                        std::invalid_argument);
    }
}

TEST_CASE("Omega_delta membership", "[riccati]") {
    for (double g : {1e-3, 0.1, 1.0, 10.0, 1e3}) {
        const auto r = OmegaDeltaRegion::from_gamma(g);
        CHECK(omega_delta_contains(r, 1.0));
        CHECK_FALSE(omega_delta_contains(r, 0.0));
        CHECK(r.radius > 0);
    }
    CHECK(omega_delta_contains(OmegaDeltaRegion::from_gamma(1e-3), 0.6));
    CHECK_FALSE(omega_delta_contains(OmegaDeltaRegion::from_gamma(10.0), 0.6));
    CHECK_THROWS_AS(OmegaDeltaRegion::from_gamma(0.0), std::invalid_argument);
}

TEST_CASE("A - lambda B K is Schur inside Omega_delta", "[riccati][property]") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 2 + trial % 4;
        const Matrix A = random_orthogonal(rng, n);
        const Matrix B = random_matrix(rng, n, 1 + trial % 2);
        const auto s = solve_dare_lowgain(A, B, 1e-2);
        const auto region = OmegaDeltaRegion::from_solution(B, s.P);
        for (int k = 0; k < 40; ++k) {
            const double rad = region.radius * std::sqrt(u(rng)) * 0.999;
            const double th = 2 * std::numbers::pi * u(rng);
            const Complex lambda = Complex(region.center, 0) + std::polar(rad, th);
            REQUIRE(omega_delta_contains(region, lambda));
            const CMatrix M = A.cast<Complex>() - lambda * (B * s.K).cast<Complex>();
            CHECK(is_schur(M));
        }
    }
}
