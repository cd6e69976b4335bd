#include "pdecl/numerics.hpp"
#include "pdecl/errors.hpp"
#include "pdecl/rng.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>

using namespace pdecl;
using namespace testsup;

namespace {

LinearMap matrix_map(const DenseMatrix& A) {
    return {A.rows(), [&A](std::span<const double> in, std::span<double> out) {
                matvec(A, in, out);
            }};
}

} // namespace

TEST_CASE("lstsq identity") {
    DenseMatrix A(2, 2);
    A(0, 0) = A(1, 1) = 1.0;
    auto [x, rep] = lstsq_solve(A, {1.0, 2.0}, 1e-10);
    CHECK(rep.converged);
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(x[1] == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("lstsq returns the minimum-norm solution on underdetermined systems") {
    DenseMatrix A(1, 2);
    A(0, 0) = A(0, 1) = 1.0;
    auto [x, rep] = lstsq_solve(A, {2.0}, 1e-12);
    CHECK(rep.converged);
    CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(x[1] == doctest::Approx(1.0).epsilon(1e-10));

    // Random wide consistent systems against the SVD minimum-norm oracle.
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        DenseMatrix B = random_matrix(4, 9, rng);
        DenseVector b = random_vector(4, rng);
        auto [w, r2] = lstsq_solve(B, b, 1e-12, 4000);
        REQUIRE(r2.converged);
        CHECK(rel_err(w, dense_min_norm_lstsq(B, b)) < 1e-8);
    }
}

TEST_CASE("lstsq matches dense normal equations on random 5x3 systems") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        DenseMatrix A = random_matrix(5, 3, rng);
        DenseVector b = random_vector(5, rng);
        auto [x, rep] = lstsq_solve(A, b, 1e-12, 1000);
        REQUIRE(rep.converged);
        CHECK(rel_err(x, dense_lstsq(A, b)) < 1e-8);
    }
}

TEST_CASE("lstsq with damping matches the damped dense oracle") {
    Rng rng(23);
    const double damping = 1e-3;
    DenseMatrix A = random_matrix(8, 6, rng);
    DenseVector b = random_vector(8, rng);
    auto [x, rep] = lstsq_solve(A, b, 1e-12, 4000, damping);
    REQUIRE(rep.converged);
    CHECK(rel_err(x, dense_lstsq(A, b, damping)) < 1e-8);
}

TEST_CASE("lstsq residual contracts") {
    Rng rng(3);
    const double tol = 1e-9;
    for (int trial = 0; trial < 12; ++trial) {
        const std::size_t m = 3 + rng.below(8);
        const std::size_t n = 3 + rng.below(8);
        DenseMatrix A = random_matrix(m, n, rng);
        for (std::size_t i = 0; i < std::min(m, n); ++i) A(i, i) += 3.0; // keep well-conditioned
        DenseVector b = random_vector(m, rng);
        auto [x, rep] = lstsq_solve(A, b, tol, 20000);
        REQUIRE(rep.converged);

        // Normal-equations residual bound holds for any shape.
        DenseVector r = matvec(A, x);
        axpy(-1.0, b, r);
        DenseVector nr = matvec_transpose(A, r);
        DenseVector atb = matvec_transpose(A, b);
        CHECK(norm2(nr) <= 10 * tol * norm2(atb));

        // Consistent square case: small primal residual too.
        if (m == n) {
            Eigen::VectorXd sv = to_eigen(A).jacobiSvd().singularValues();
            if (sv(sv.size() - 1) > 0 && sv(0) / sv(sv.size() - 1) < 1e6)
                CHECK(norm2(r) <= 10 * tol * norm2(b));
        }
    }
}

TEST_CASE("lstsq error handling") {
    DenseMatrix A(2, 2);
    A(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS((void)lstsq_solve(A, {1.0, 1.0}, 1e-8), InvalidInput);

    DenseMatrix B(1, 1);
    B(0, 0) = 1.0;
    CHECK_THROWS_AS((void)lstsq_solve(B, {1.0}, -1.0), InvalidInput);
    CHECK_THROWS_AS((void)lstsq_solve(B, {1.0, 2.0}, 1e-8), InvalidInput);

    // Hitting max_iter returns the best iterate instead of aborting.
    Rng rng(5);
    DenseMatrix C = random_matrix(12, 12, rng);
    DenseVector b = random_vector(12, rng);
    auto [x, rep] = lstsq_solve(C, b, 1e-14, 1);
    CHECK_FALSE(rep.converged);
    CHECK(rep.iterations == 1);
    CHECK(all_finite(x));
}

TEST_CASE("gmres basics") {
    DenseMatrix I(3, 3);
    for (int i = 0; i < 3; ++i) I(i, i) = 1.0;
    DenseVector b{0.5, -1.0, 2.0};
    auto [x, rep] = gmres_solve(matrix_map(I), b, 1e-12);
    CHECK(rep.converged);
    CHECK(rep.iterations == 1);
    for (int i = 0; i < 3; ++i) CHECK(x[i] == doctest::Approx(b[i]).epsilon(1e-12));

    DenseMatrix D(2, 2);
    D(0, 0) = 1.0;
    D(1, 1) = 2.0;
    auto [y, rep2] = gmres_solve(matrix_map(D), {2.0, 2.0}, 1e-12);
    CHECK(rep2.converged);
    CHECK(y[0] == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("gmres matches dense LU on random well-conditioned systems") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        DenseMatrix A = random_matrix(10, 10, rng, 0.3);
        for (int i = 0; i < 10; ++i) A(i, i) += 4.0;
        DenseVector b = random_vector(10, rng);
        auto [x, rep] = gmres_solve(matrix_map(A), b, 1e-12);
        REQUIRE(rep.converged);
        Eigen::VectorXd ref = to_eigen(A).lu().solve(to_eigen(b));
        CHECK(rel_err(x, from_eigen(ref)) < 1e-8);
    }
}

TEST_CASE("gmres reports non-convergence with a usable iterate") {
    Rng rng(29);
    DenseMatrix A = random_matrix(20, 20, rng);
    for (int i = 0; i < 20; ++i) A(i, i) += 2.0;
    DenseVector b = random_vector(20, rng);
    auto [x, rep] = gmres_solve(matrix_map(A), b, 1e-13, 3);
    CHECK_FALSE(rep.converged);
    CHECK(all_finite(x));
}

TEST_CASE("cg basics") {
    DenseMatrix A(2, 2);
    A(0, 0) = A(1, 1) = 4.0;
    auto [x, rep] = cg_solve(matrix_map(A), {8.0, 8.0}, 1e-12);
    CHECK(rep.converged);
    CHECK(x[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(x[1] == doctest::Approx(2.0).epsilon(1e-12));

    auto [z, rep0] = cg_solve(matrix_map(A), {0.0, 0.0}, 1e-12);
    CHECK(rep0.converged);
    CHECK(rep0.iterations == 0);
    CHECK(z[0] == 0.0);
    CHECK(z[1] == 0.0);
}

TEST_CASE("cg solves the 2D five-point Laplacian against a dense oracle") {
    // Interior unknowns of an 8x8 grid, standard -Laplacian stencil.
    const int n = 8;
    const int dim = n * n;
    DenseMatrix A(dim, dim);
    auto id = [&](int i, int j) { return i * n + j; };
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            A(id(i, j), id(i, j)) = 4.0;
            if (i > 0) A(id(i, j), id(i - 1, j)) = -1.0;
            if (i < n - 1) A(id(i, j), id(i + 1, j)) = -1.0;
            if (j > 0) A(id(i, j), id(i, j - 1)) = -1.0;
            if (j < n - 1) A(id(i, j), id(i, j + 1)) = -1.0;
        }
    Rng rng(41);
    DenseVector b = random_vector(dim, rng);
    auto [x, rep] = cg_solve(matrix_map(A), b, 1e-12, 2000);
    REQUIRE(rep.converged);
    Eigen::VectorXd ref = to_eigen(A).ldlt().solve(to_eigen(b));
    CHECK(rel_err(x, from_eigen(ref)) < 1e-8);
}

TEST_CASE("gmres and cg agree with dense solves on random SPD systems") {
    Rng rng(53);
    for (std::size_t dim : {5u, 17u, 50u}) {
        DenseMatrix G = random_matrix(dim, dim, rng, 1.0 / std::sqrt(double(dim)));
        DenseMatrix A(dim, dim);
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j) {
                double s = (i == j) ? 2.0 : 0.0;
                for (std::size_t k = 0; k < dim; ++k) s += G(i, k) * G(j, k);
                A(i, j) = s;
            }
        DenseVector b = random_vector(dim, rng);
        Eigen::VectorXd ref = to_eigen(A).ldlt().solve(to_eigen(b));
        auto [xg, repg] = gmres_solve(matrix_map(A), b, 1e-11, 10 * dim);
        auto [xc, repc] = cg_solve(matrix_map(A), b, 1e-11, 10 * dim);
        REQUIRE(repg.converged);
        REQUIRE(repc.converged);
        CHECK(rel_err(xg, from_eigen(ref)) < 1e-7);
        CHECK(rel_err(xc, from_eigen(ref)) < 1e-7);
    }
}

TEST_CASE("solvers are deterministic") {
    Rng rng(61);
    DenseMatrix A = random_matrix(14, 9, rng);
    DenseVector b = random_vector(14, rng);
    auto [x1, r1] = lstsq_solve(A, b, 1e-10, 500);
    auto [x2, r2] = lstsq_solve(A, b, 1e-10, 500);
    CHECK(std::memcmp(x1.data(), x2.data(), x1.size() * sizeof(double)) == 0);
    CHECK(r1.iterations == r2.iterations);

    DenseMatrix S = gram(A); // SPD 9x9
    DenseVector c = random_vector(9, rng);
    auto op = matrix_map(S);
    auto [g1, gr1] = gmres_solve(op, c, 1e-10);
    auto [g2, gr2] = gmres_solve(op, c, 1e-10);
    CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
    auto [c1, cr1] = cg_solve(op, c, 1e-10);
    auto [c2, cr2] = cg_solve(op, c, 1e-10);
    CHECK(std::memcmp(c1.data(), c2.data(), c1.size() * sizeof(double)) == 0);
    CHECK(cr1.iterations == cr2.iterations);
}

TEST_CASE("finite_difference_check") {
    auto square = [](const DenseVector& v) { return v[0] * v[0]; };
    CHECK(finite_difference_check(square, {6.0}, {3.0}, 1e-4) < 1e-6);

    auto constant = [](const DenseVector&) { return 42.0; };
    CHECK(finite_difference_check(constant, {0.0, 0.0}, {1.0, 2.0}, 1e-4) == 0.0);

    // Random quadratic form with its analytic gradient.
    Rng rng(71);
    const std::size_t n = 6;
    DenseMatrix Q = random_matrix(n, n, rng);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            const double s = 0.5 * (Q(i, j) + Q(j, i));
            Q(i, j) = Q(j, i) = s;
        }
    DenseVector x0 = random_vector(n, rng);
    auto quad = [&](const DenseVector& v) {
        DenseVector qv = matvec(Q, v);
        return 0.5 * dot(v, qv);
    };
    DenseVector grad = matvec(Q, x0);
    CHECK(finite_difference_check(quad, grad, x0, 1e-5) < 1e-6);

    CHECK_THROWS_AS((void)finite_difference_check(square, {1.0}, {1.0}, 0.0), InvalidInput);
}
