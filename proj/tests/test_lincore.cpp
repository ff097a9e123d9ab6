#include <catch2/catch_amalgamated.hpp>

#include "syncd/lincore.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace syncd;
using Catch::Approx;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
    Eigen::Index i = 0;
    for (const auto& r : rows) {
        Eigen::Index j = 0;
        for (double v : r) M(i, j++) = v;
        ++i;
    }
    return M;
}

Matrix random_matrix(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Matrix M(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) M(i, j) = u(rng);
    return M;
}

} // namespace

TEST_CASE("spectrum of small matrices", "[lincore]") {
    SECTION("identity") {
        const auto s = spectrum(Matrix(Matrix::Identity(2, 2)));
        REQUIRE(s.size() == 2);
        CHECK(std::abs(s[0] - Complex(1, 0)) < 1e-14);
        CHECK(std::abs(s[1] - Complex(1, 0)) < 1e-14);
    }
    SECTION("rotation generator has eigenvalues +-j") {
        // lambda^2 + 1 = 0
        const auto s = spectrum(mat({{0, 1}, {-1, 0}}));
        REQUIRE(s.size() == 2);
        CHECK(std::abs(s[0] - Complex(0, -1)) < 1e-14);
        CHECK(std::abs(s[1] - Complex(0, 1)) < 1e-14);
    }
    SECTION("diagonal, sorted by real part") {
        const auto s = spectrum(mat({{0.5, 0}, {0, -2}}));
        CHECK(s[0] == Complex(-2, 0));
        CHECK(s[1] == Complex(0.5, 0));
    }
    SECTION("non-square input is rejected") {
        CHECK_THROWS_AS(spectrum(Matrix(2, 3)), std::invalid_argument);
    }
    SECTION("non-finite input is rejected") {
        Matrix M = Matrix::Identity(2, 2);
        M(0, 1) = std::nan("");
        CHECK_THROWS_AS(spectrum(M), std::invalid_argument);
    }
}

TEST_CASE("stability predicates", "[lincore]") {
    CHECK(is_hurwitz(mat({{-1}})));
    CHECK_FALSE(is_hurwitz(mat({{0, 1}, {-1, 0}})));
    CHECK(is_schur(mat({{0.9}})));
    CHECK_FALSE(is_schur(mat({{-1}})));
    CHECK_FALSE(is_hurwitz(mat({{-1}}), 2.0));
}

TEST_CASE("omega_max in continuous time", "[lincore]") {
    CHECK(omega_max_ct(mat({{-1}})) == 0.0);
    // s (s^2 + 1) = 0 -> 0, +-j
    CHECK(omega_max_ct(mat({{0, 1, 0}, {0, 0, 1}, {0, -1, 0}})) == Approx(1.0).margin(1e-12));
    CHECK(omega_max_ct(mat({{0}})) == 0.0);
    CHECK_THROWS_AS(omega_max_ct(mat({{0.1}})), DesignError);
}

TEST_CASE("omega_max in discrete time", "[lincore]") {
    CHECK(omega_max_dt(mat({{0.5}})) == 0.0);
    CHECK(omega_max_dt(mat({{0, 1}, {-1, 0}})) == Approx(std::numbers::pi / 2).margin(1e-12));
    CHECK(omega_max_dt(mat({{-1}})) == Approx(std::numbers::pi).margin(1e-12));
    CHECK_THROWS_AS(omega_max_dt(mat({{1.1}})), DesignError);
}

TEST_CASE("spectrum properties on random real matrices", "[lincore][property]") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index n = 1 + static_cast<Eigen::Index>(trial % 8);
        const Matrix M = random_matrix(rng, n);
        const auto s = spectrum(M);
        REQUIRE(s.size() == static_cast<std::size_t>(n));
        // conjugate symmetry
        for (const auto& l : s) {
            double best = 1e300;
            for (const auto& m : s) best = std::min(best, std::abs(std::conj(l) - m));
            CHECK(best < 1e-9);
        }
        // eigenpair residuals from the eigenvector solver agree with the returned spectrum
        Eigen::EigenSolver<Matrix> es(M);
        for (Eigen::Index i = 0; i < n; ++i) {
            const CVector v = es.eigenvectors().col(i);
            const Complex l = es.eigenvalues()(i);
            CHECK((M.cast<Complex>() * v - l * v).norm() <= 1e-10 * std::max(1.0, M.norm()));
        }
    }
}

TEST_CASE("omega_max is similarity invariant and zero iff Hurwitz", "[lincore][property]") {
    std::mt19937_64 rng(5);
    const Matrix A = mat({{0, 1, 0}, {0, 0, 1}, {0, -1, 0}});
    const Matrix H = mat({{-1, 2}, {0, -3}});
    for (int trial = 0; trial < 50; ++trial) {
        Matrix T = Matrix::Identity(3, 3) + 0.3 * random_matrix(rng, 3);
        const Matrix S = T * A * T.inverse();
        CHECK(omega_max_ct(S, 1e-7) == Approx(1.0).margin(1e-8));
        Matrix T2 = Matrix::Identity(2, 2) + 0.3 * random_matrix(rng, 2);
        const Matrix SH = T2 * H * T2.inverse();
        CHECK(omega_max_ct(SH) == 0.0);
        CHECK(is_hurwitz(SH));
    }
}

TEST_CASE("Lyapunov and Stein solvers", "[lincore]") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::Index n = 2 + trial % 4;
        Matrix A = random_matrix(rng, n);
        A -= (spectral_abscissa(spectrum(A)) + 0.5) * Matrix::Identity(n, n);
        const Matrix Q = Matrix::Identity(n, n);
        const Matrix X = solve_lyapunov(A, Q);
        CHECK((A.transpose() * X + X * A + Q).norm() < 1e-9);

        Matrix Ad = random_matrix(rng, n);
        Ad /= (spectral_radius(spectrum(Ad)) + 0.5);
        const Matrix Y = solve_stein(Ad, Q);
        CHECK((Ad.transpose() * Y * Ad + Q - Y).norm() < 1e-9);
    }
}

TEST_CASE("PBH stabilizability", "[lincore]") {
    CHECK_FALSE(is_stabilizable(mat({{0}}), mat({{0}}), TimeDomain::Continuous));
    CHECK(is_stabilizable(mat({{-1}}), mat({{0}}), TimeDomain::Continuous));
    CHECK(is_stabilizable(mat({{0, 1}, {0, 0}}), mat({{0}, {1}}), TimeDomain::Continuous));
    CHECK_FALSE(is_stabilizable(mat({{1.5}}), mat({{0}}), TimeDomain::Discrete));
    CHECK(is_detectable(mat({{1, 0}}), mat({{0, 1}, {0, 0}}), TimeDomain::Continuous));
}
