#include "pdecl/oracles.hpp"
#include "pdecl/errors.hpp"
#include "pdecl/fields.hpp"
#include "pdecl/interp2d.hpp"
#include "pdecl/rng.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>

using namespace pdecl;

namespace {

ParameterField const_beta(double value) {
    ParameterField f;
    f.kind = FieldKind::Wavespeed;
    f.nx = 16;
    f.values.assign(16, value);
    return f;
}

// Method-of-characteristics solution for beta = 1.
double characteristics(double x, double t) {
    return x > t ? std::sin(kPi * (x - t)) : std::sin(0.5 * kPi * (t - x));
}

} // namespace

TEST_CASE("Lax-Wendroff at unit CFL shifts the profile exactly") {
    const std::size_t n = 64;
    GridSolution sol = lax_wendroff_convection(const_beta(1.0), n, n);
    const double dx = 1.0 / static_cast<double>(n - 1);
    // One output step at CFL exactly 1: u(x_j, t_1) = u0(x_{j-1}).
    for (std::size_t j = 1; j < n; ++j)
        CHECK(sol.at(j, 1) ==
              doctest::Approx(std::sin(kPi * (static_cast<double>(j) - 1) * dx)).epsilon(1e-13));
}

TEST_CASE("Lax-Wendroff matches characteristics for beta = 1 at 200x200") {
    GridSolution sol = lax_wendroff_convection(const_beta(1.0), 200, 200);
    double worst = 0.0;
    for (std::size_t i = 0; i < 200; ++i)
        for (std::size_t j = 0; j < 200; ++j) {
            const double x = grid_coord_x(Problem::Convection, i, 200);
            const double t = grid_coord_y(j, 200);
            worst = std::max(worst, std::abs(sol.at(i, j) - characteristics(x, t)));
        }
    CHECK(worst < 1e-2);
}

TEST_CASE("Lax-Wendroff shows second-order convergence on smooth regions") {
    // Pure initial-condition region, clear of the derivative kink along
    // x = t (and its dispersive wake) and of the first-order outflow column.
    auto smooth_error = [](std::size_t nx, std::size_t nt) {
        GridSolution sol = lax_wendroff_convection(const_beta(1.0), nx, nt);
        double worst = 0.0;
        for (std::size_t i = 0; i < nx; ++i)
            for (std::size_t j = 0; j < nt; ++j) {
                const double x = grid_coord_x(Problem::Convection, i, nx);
                const double t = grid_coord_y(j, nt);
                if (x - t < 0.2 || x > 0.97) continue;
                worst = std::max(worst, std::abs(sol.at(i, j) - characteristics(x, t)));
            }
        return worst;
    };
    const double e1 = smooth_error(101, 67);
    const double e2 = smooth_error(201, 133);
    const double e3 = smooth_error(401, 265);
    const double order12 = std::log2(e1 / e2);
    const double order23 = std::log2(e2 / e3);
    CHECK(order12 > 1.7);
    CHECK(order12 < 2.3);
    CHECK(order23 > 1.7);
    CHECK(order23 < 2.3);
}

TEST_CASE("Lax-Wendroff input validation") {
    ParameterField bad = const_beta(0.5); // wavespeed must be >= 1
    CHECK_THROWS_AS((void)lax_wendroff_convection(bad, 50, 50), InvalidInput);
    CHECK_THROWS_AS((void)lax_wendroff_convection(const_beta(1.0), 2, 50), InvalidInput);
}

TEST_CASE("Darcy finite differences: zero forcing, manufactured solution, residual") {
    ParameterField nu;
    nu.kind = FieldKind::Diffusion;
    nu.nx = nu.ny = 17;
    nu.values.assign(17 * 17, 1.0);

    GridSolution zero = darcy_fd_solve(nu, 17, [](double, double) { return 0.0; });
    for (double v : zero.values) CHECK(v == 0.0);

    // Manufactured: -Lap u = 2 pi^2 sin sin has solution sin(pi x) sin(pi y);
    // halving h cuts the max error by about 4.
    auto manufactured_error = [](std::size_t n) {
        ParameterField one;
        one.kind = FieldKind::Diffusion;
        one.nx = one.ny = n;
        one.values.assign(n * n, 1.0);
        GridSolution sol = darcy_fd_solve(one, n, [](double x, double y) {
            return 2.0 * kPi * kPi * std::sin(kPi * x) * std::sin(kPi * y);
        });
        double worst = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                const double x = grid_coord_x(Problem::Darcy, i, n);
                const double y = grid_coord_y(j, n);
                worst = std::max(worst,
                                 std::abs(sol.at(i, j) - std::sin(kPi * x) * std::sin(kPi * y)));
            }
        return worst;
    };
    const double e1 = manufactured_error(17);
    const double e2 = manufactured_error(33);
    const double e3 = manufactured_error(65);
    CHECK(std::log2(e1 / e2) > 1.8);
    CHECK(std::log2(e2 / e3) > 1.8);

    // The discrete residual of a returned solution is at solver level.
    GrfSpec spec;
    spec.dimension = 2;
    spec.nx = spec.ny = 33;
    spec.seed = 5;
    ParameterField two = sample_darcy_coefficients(spec, 12.0, 3.0);
    GridSolution sol = darcy_fd_solve(two, 33);
    CHECK(residual_on_grid(sol, Problem::Darcy, two) < 1e-16);
}

TEST_CASE("Darcy solution inherits x/y symmetry from the coefficients") {
    const std::size_t n = 25;
    ParameterField nu;
    nu.kind = FieldKind::Diffusion;
    nu.nx = nu.ny = n;
    nu.values.resize(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            nu.values[i * n + j] = 3.0 + 9.0 * (((i * j) % 3) == 0 ? 1.0 : 0.0); // symmetric
    GridSolution sol = darcy_fd_solve(nu, n);
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            worst = std::max(worst, std::abs(sol.at(i, j) - sol.at(j, i)));
    CHECK(worst < 1e-9);
}

TEST_CASE("Burgers reference: fixed points and conservation") {
    ParameterField zero;
    zero.kind = FieldKind::InitialCondition;
    zero.periodic = true;
    zero.nx = 32;
    zero.values.assign(32, 0.0);
    GridSolution z = burgers_reference(zero, 0.01, 32, 16);
    for (double v : z.values) CHECK(v == 0.0);

    ParameterField constant = zero;
    constant.values.assign(32, 0.7);
    GridSolution c = burgers_reference(constant, 0.01, 32, 16);
    for (double v : c.values) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

    // Mass is conserved to rounding on the conservative periodic grid.
    GrfSpec spec;
    spec.nx = 64;
    spec.seed = 9;
    ParameterField ic = sample_burgers_ic(spec);
    GridSolution sol = burgers_reference(ic, 0.01, 64, 32);
    double mass0 = 0.0;
    for (std::size_t i = 0; i < 64; ++i) mass0 += sol.at(i, 0);
    double denom = std::max(std::abs(mass0), 1.0);
    for (std::size_t j = 1; j < 32; ++j) {
        double mass = 0.0;
        for (std::size_t i = 0; i < 64; ++i) mass += sol.at(i, j);
        CHECK(std::abs(mass - mass0) / denom < 1e-6);
    }

    CHECK_THROWS_AS((void)burgers_reference(ic, 0.0, 64, 32), InvalidInput);
}

TEST_CASE("scattered cubic interpolation reproduces planes and samples") {
    Rng rng(3);
    std::vector<double> xs, ys, vals;
    auto plane = [](double x, double y) { return 2.0 + 3.0 * x - 1.5 * y; };
    // Corners pin the hull to the full unit square.
    for (double cx : {0.0, 1.0})
        for (double cy : {0.0, 1.0}) {
            xs.push_back(cx);
            ys.push_back(cy);
            vals.push_back(plane(cx, cy));
        }
    for (int i = 0; i < 120; ++i) {
        xs.push_back(rng.uniform());
        ys.push_back(rng.uniform());
        vals.push_back(plane(xs.back(), ys.back()));
    }
    ScatteredCubic2D interp(xs, ys, vals);

    double worst = 0.0;
    for (int i = 0; i < 40; ++i)
        for (int j = 0; j < 40; ++j) {
            const double x = i / 39.0, y = j / 39.0;
            worst = std::max(worst, std::abs(interp(x, y) - plane(x, y)));
        }
    CHECK(worst < 1e-10);

    // Exact sample hit returns the sample value exactly.
    for (std::size_t k = 0; k < xs.size(); k += 17)
        CHECK(interp(xs[k], ys[k]) == vals[k]);
}

TEST_CASE("scattered cubic interpolation beats nearest-neighbor on smooth data") {
    Rng rng(5);
    std::vector<double> xs, ys, vals;
    auto f = [](double x, double y) { return std::sin(2 * kPi * x) * std::cos(2 * kPi * y); };
    // Perimeter samples as in real fitted-grid usage, then dense interior.
    for (int k = 0; k < 20; ++k) {
        const double s = k / 19.0;
        xs.insert(xs.end(), {s, s});
        ys.insert(ys.end(), {0.0, 1.0});
        vals.push_back(f(s, 0.0));
        vals.push_back(f(s, 1.0));
        if (k > 0 && k < 19) {
            xs.insert(xs.end(), {0.0, 1.0});
            ys.insert(ys.end(), {s, s});
            vals.push_back(f(0.0, s));
            vals.push_back(f(1.0, s));
        }
    }
    for (int i = 0; i < 400; ++i) {
        xs.push_back(rng.uniform());
        ys.push_back(rng.uniform());
        vals.push_back(f(xs.back(), ys.back()));
    }
    ScatteredCubic2D cubic(xs, ys, vals);

    double worst_cubic = 0.0, worst_nn = 0.0;
    for (int i = 0; i < 50; ++i)
        for (int j = 0; j < 50; ++j) {
            const double x = i / 49.0, y = j / 49.0;
            worst_cubic = std::max(worst_cubic, std::abs(cubic(x, y) - f(x, y)));
            double best_d = 1e300, nn = 0.0;
            for (std::size_t k = 0; k < xs.size(); ++k) {
                const double d = (xs[k] - x) * (xs[k] - x) + (ys[k] - y) * (ys[k] - y);
                if (d < best_d) {
                    best_d = d;
                    nn = vals[k];
                }
            }
            worst_nn = std::max(worst_nn, std::abs(nn - f(x, y)));
        }
    CHECK(worst_cubic < worst_nn);
}

TEST_CASE("scattered cubic interpolation rejects degenerate sample sets") {
    std::vector<double> xs, ys, vals;
    for (int i = 0; i < 20; ++i) {
        xs.push_back(i / 19.0);
        ys.push_back(0.5); // collinear
        vals.push_back(1.0);
    }
    CHECK_THROWS_AS((void)(ScatteredCubic2D{xs, ys, vals}), InvalidInput);

    xs.assign({0.1, 0.1, 0.4, 0.8});
    ys.assign({0.2, 0.2, 0.9, 0.3}); // coincident pair
    vals.assign(4, 1.0);
    CHECK_THROWS_AS((void)(ScatteredCubic2D{xs, ys, vals}), InvalidInput);
}

TEST_CASE("cubic_interpolate onto a problem grid") {
    Rng rng(7);
    std::vector<Point> pts;
    std::vector<double> vals;
    auto f = [](double x, double y) { return x * x + y; };
    for (int k = 0; k < 10; ++k) {
        const double s = k / 9.0;
        pts.push_back({s, 0.0});
        pts.push_back({s, 1.0});
        vals.push_back(f(s, 0.0));
        vals.push_back(f(s, 1.0));
        if (k > 0 && k < 9) {
            pts.push_back({0.0, s});
            pts.push_back({1.0, s});
            vals.push_back(f(0.0, s));
            vals.push_back(f(1.0, s));
        }
    }
    for (int i = 0; i < 60; ++i) {
        pts.push_back({rng.uniform(), rng.uniform()});
        vals.push_back(f(pts.back().x, pts.back().y));
    }
    GridSolution sol = cubic_interpolate(pts, vals, Problem::Convection, 25, 25);
    CHECK(sol.provenance == Provenance::Interpolation);
    double worst = 0.0;
    for (std::size_t i = 0; i < 25; ++i)
        for (std::size_t j = 0; j < 25; ++j)
            worst = std::max(worst, std::abs(sol.at(i, j) - f(i / 24.0, j / 24.0)));
    CHECK(worst < 0.05);

    CHECK_THROWS_AS(
        (void)cubic_interpolate(std::vector<Point>(4), std::vector<double>(4),
                                Problem::Convection, 5, 5),
        InvalidInput);
}

TEST_CASE("natural cubic spline interpolates and clamps") {
    std::vector<double> xs{0.0, 0.25, 0.5, 0.75, 1.0};
    std::vector<double> fs;
    for (double x : xs) fs.push_back(std::sin(2 * kPi * x));
    CubicSpline1D spline(xs, fs);
    for (std::size_t i = 0; i < xs.size(); ++i)
        CHECK(spline(xs[i]) == doctest::Approx(fs[i]).epsilon(1e-12));
    CHECK(spline(-1.0) == fs.front());
    CHECK(spline(2.0) == fs.back());
    CHECK(std::abs(spline(0.4) - std::sin(2 * kPi * 0.4)) < 0.05);
}

TEST_CASE("residual_on_grid") {
    // u = 0 for Darcy with f = 1 gives mean squared residual exactly 1.
    ParameterField nu;
    nu.kind = FieldKind::Diffusion;
    nu.nx = nu.ny = 9;
    nu.values.assign(81, 2.0);
    GridSolution zero;
    zero.n1 = zero.n2 = 9;
    zero.problem = Problem::Darcy;
    zero.values.assign(81, 0.0);
    CHECK(residual_on_grid(zero, Problem::Darcy, nu) == doctest::Approx(1.0));

    // Hand-computed convection residual on a 5x5 grid.
    ParameterField beta = const_beta(2.0);
    GridSolution u;
    u.n1 = u.n2 = 5;
    u.problem = Problem::Convection;
    u.values.resize(25);
    Rng rng(13);
    for (double& v : u.values) v = rng.normal();
    const double want = [&] {
        const double dx = 0.25, dt = 0.25;
        double sum = 0.0;
        int count = 0;
        for (int i = 1; i < 4; ++i)
            for (int j = 1; j < 4; ++j) {
                const double ut = (u.at(i, j + 1) - u.at(i, j - 1)) / (2 * dt);
                const double ux = (u.at(i + 1, j) - u.at(i - 1, j)) / (2 * dx);
                const double r = ut + 2.0 * ux;
                sum += r * r;
                ++count;
            }
        return sum / count;
    }();
    CHECK(residual_on_grid(u, Problem::Convection, beta) ==
          doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("relative_l2 basics") {
    GridSolution a;
    a.n1 = a.n2 = 4;
    a.values.assign(16, 2.0);
    GridSolution b = a;
    CHECK(relative_l2(a, b) == 0.0);
    for (double& v : a.values) v *= 2.0;
    CHECK(relative_l2(a, b) == doctest::Approx(1.0)); // homogeneity of the ratio
}

TEST_CASE("grid save/load and oracle determinism") {
    GridSolution sol = lax_wendroff_convection(const_beta(1.2), 40, 40);
    GridSolution sol2 = lax_wendroff_convection(const_beta(1.2), 40, 40);
    CHECK(sol.values == sol2.values);
}
