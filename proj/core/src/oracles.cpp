#include "pdecl/oracles.hpp"

#include "pdecl/errors.hpp"
#include "pdecl/interp2d.hpp"

#include <algorithm>
#include <cmath>

namespace pdecl {

std::string to_string(Provenance p) {
    switch (p) {
    case Provenance::LaxWendroff: return "lax-wendroff";
    case Provenance::DarcyFd: return "darcy-fd";
    case Provenance::BurgersFd: return "burgers-fd";
    case Provenance::Model: return "model";
    case Provenance::Interpolation: return "interpolation";
    }
    return "unknown";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "lax-wendroff") return Provenance::LaxWendroff;
    if (s == "darcy-fd") return Provenance::DarcyFd;
    if (s == "burgers-fd") return Provenance::BurgersFd;
    if (s == "model") return Provenance::Model;
    if (s == "interpolation") return Provenance::Interpolation;
    throw ConfigError("unknown provenance tag: " + s);
}

double grid_coord_x(Problem problem, std::size_t i, std::size_t n1) {
    if (problem == Problem::Burgers)
        return static_cast<double>(i) / static_cast<double>(n1);
    return static_cast<double>(i) / static_cast<double>(n1 - 1);
}

double grid_coord_y(std::size_t j, std::size_t n2) {
    return static_cast<double>(j) / static_cast<double>(n2 - 1);
}

std::vector<Point> grid_points(Problem problem, std::size_t n1, std::size_t n2) {
    std::vector<Point> pts;
    pts.reserve(n1 * n2);
    for (std::size_t i = 0; i < n1; ++i)
        for (std::size_t j = 0; j < n2; ++j)
            pts.push_back({grid_coord_x(problem, i, n1), grid_coord_y(j, n2)});
    return pts;
}

GridSolution lax_wendroff_convection(const ParameterField& beta, std::size_t nx,
                                     std::size_t nt) {
    if (nx < 3 || nt < 2) throw InvalidInput("lax_wendroff: grid too small");
    beta.validate();

    const double dx = 1.0 / static_cast<double>(nx - 1);
    const double dt_out = 1.0 / static_cast<double>(nt - 1);

    DenseVector beta_at(nx);
    double beta_max = 0.0;
    for (std::size_t i = 0; i < nx; ++i) {
        beta_at[i] = beta.value_at(static_cast<double>(i) * dx);
        beta_max = std::max(beta_max, beta_at[i]);
    }

    // Substeps per output step to satisfy max(beta) dt/dx <= 1.
    const double m_exact = beta_max * dt_out / dx;
    std::size_t m = static_cast<std::size_t>(std::ceil(m_exact - 1e-12));
    if (m == 0) m = 1;
    if (m > 1000000) throw ConfigError("lax_wendroff: CFL refinement out of range");
    const double dt = dt_out / static_cast<double>(m);

    GridSolution sol;
    sol.n1 = nx;
    sol.n2 = nt;
    sol.problem = Problem::Convection;
    sol.provenance = Provenance::LaxWendroff;
    sol.values.assign(nx * nt, 0.0);

    DenseVector u(nx), next(nx);
    for (std::size_t i = 0; i < nx; ++i) u[i] = convection_initial(static_cast<double>(i) * dx);
    for (std::size_t i = 0; i < nx; ++i) sol.at(i, 0) = u[i];

    double t = 0.0;
    for (std::size_t j = 1; j < nt; ++j) {
        for (std::size_t step = 0; step < m; ++step) {
            t += dt;
            for (std::size_t i = 1; i + 1 < nx; ++i) {
                const double nu = beta_at[i] * dt / dx;
                next[i] = u[i] - 0.5 * nu * (u[i + 1] - u[i - 1]) +
                          0.5 * nu * nu * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
            }
            next[0] = convection_boundary(t);
            // Outflow edge: first-order upwind.
            const double nu_last = beta_at[nx - 1] * dt / dx;
            next[nx - 1] = u[nx - 1] - nu_last * (u[nx - 1] - u[nx - 2]);
            u.swap(next);
        }
        for (std::size_t i = 0; i < nx; ++i) sol.at(i, j) = u[i];
    }
    return sol;
}

GridSolution darcy_fd_solve(const ParameterField& nu, std::size_t n,
                            const std::function<double(double, double)>& forcing) {
    if (n < 8) throw InvalidInput("darcy_fd_solve: need n >= 8");
    nu.validate();

    const std::size_t ni = n - 2; // interior unknowns per axis
    const double h = 1.0 / static_cast<double>(n - 1);

    DenseVector nu_at(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            nu_at[i * n + j] = nu.value_at(static_cast<double>(i) * h,
                                           static_cast<double>(j) * h);

    auto harm = [](double a, double b) { return 2.0 * a * b / (a + b); };

    // Matrix-free SPD operator on interior values (zero Dirichlet boundary).
    LinearMap op{ni * ni, [&, n, ni, h](std::span<const double> in, std::span<double> out) {
                     auto val = [&](std::size_t i, std::size_t j) -> double {
                         if (i == 0 || j == 0 || i == n - 1 || j == n - 1) return 0.0;
                         return in[(i - 1) * ni + (j - 1)];
                     };
                     for (std::size_t i = 1; i + 1 < n; ++i)
                         for (std::size_t j = 1; j + 1 < n; ++j) {
                             const double ne = harm(nu_at[i * n + j], nu_at[(i + 1) * n + j]);
                             const double nw = harm(nu_at[i * n + j], nu_at[(i - 1) * n + j]);
                             const double nn = harm(nu_at[i * n + j], nu_at[i * n + j + 1]);
                             const double ns = harm(nu_at[i * n + j], nu_at[i * n + j - 1]);
                             const double c = val(i, j);
                             out[(i - 1) * ni + (j - 1)] =
                                 (ne * (c - val(i + 1, j)) + nw * (c - val(i - 1, j)) +
                                  nn * (c - val(i, j + 1)) + ns * (c - val(i, j - 1))) /
                                 (h * h);
                         }
                 }};

    DenseVector rhs(ni * ni);
    for (std::size_t i = 1; i + 1 < n; ++i)
        for (std::size_t j = 1; j + 1 < n; ++j)
            rhs[(i - 1) * ni + (j - 1)] =
                forcing ? forcing(static_cast<double>(i) * h, static_cast<double>(j) * h)
                        : 1.0;

    auto [x, report] = cg_solve(op, rhs, 1e-10, 40 * n * n);
    if (!report.converged)
        throw SolverFailure("darcy_fd_solve: CG did not converge (residual " +
                            std::to_string(report.final_residual_norm) + " after " +
                            std::to_string(report.iterations) + " iterations)");

    GridSolution sol;
    sol.n1 = n;
    sol.n2 = n;
    sol.problem = Problem::Darcy;
    sol.provenance = Provenance::DarcyFd;
    sol.values.assign(n * n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i)
        for (std::size_t j = 1; j + 1 < n; ++j)
            sol.at(i, j) = x[(i - 1) * ni + (j - 1)];
    return sol;
}

namespace {

// Periodic tridiagonal solve (I - c D2) x = rhs via Thomas + Sherman-Morrison.
// D2 is the periodic second-difference operator scaled by 1/dx^2.
class PeriodicDiffusionSolver {
public:
    PeriodicDiffusionSolver(std::size_t n, double c_over_dx2)
        : n_(n), a_(-c_over_dx2), b_(1.0 + 2.0 * c_over_dx2) {}

    void solve(const DenseVector& rhs, DenseVector& x) const {
        // Sherman-Morrison: A = T + corner terms; write A = T' + u v^T.
        const std::size_t n = n_;
        const double gamma = -b_;
        DenseVector d(n, b_);
        d[0] = b_ - gamma;
        d[n - 1] = b_ - a_ * a_ / gamma;

        thomas(d, rhs, x);

        DenseVector u(n, 0.0);
        u[0] = gamma;
        u[n - 1] = a_;
        DenseVector z(n);
        thomas(d, u, z);

        const double vy = x[0] + (a_ / gamma) * x[n - 1];
        const double vz = z[0] + (a_ / gamma) * z[n - 1];
        const double factor = vy / (1.0 + vz);
        for (std::size_t i = 0; i < n; ++i) x[i] -= factor * z[i];
    }

private:
    void thomas(const DenseVector& diag, const DenseVector& rhs, DenseVector& x) const {
        const std::size_t n = n_;
        DenseVector c_prime(n), d_prime(n);
        c_prime[0] = a_ / diag[0];
        d_prime[0] = rhs[0] / diag[0];
        for (std::size_t i = 1; i < n; ++i) {
            const double m = diag[i] - a_ * c_prime[i - 1];
            c_prime[i] = a_ / m;
            d_prime[i] = (rhs[i] - a_ * d_prime[i - 1]) / m;
        }
        x.resize(n);
        x[n - 1] = d_prime[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) x[i] = d_prime[i] - c_prime[i] * x[i + 1];
    }

    std::size_t n_;
    double a_, b_;
};

} // namespace

GridSolution burgers_reference(const ParameterField& u0, double viscosity, std::size_t nx,
                               std::size_t nt) {
    if (!(viscosity > 0.0)) throw InvalidInput("burgers_reference: viscosity must be positive");
    if (nx < 4 || nt < 2) throw InvalidInput("burgers_reference: grid too small");

    const std::size_t rx = 4; // internal refinement in x
    const std::size_t nxi = rx * nx;
    const double dx = 1.0 / static_cast<double>(nxi);

    DenseVector u(nxi);
    double umax0 = 0.0;
    for (std::size_t i = 0; i < nxi; ++i) {
        u[i] = u0.value_at(static_cast<double>(i) * dx);
        umax0 = std::max(umax0, std::abs(u[i]));
    }
    const double blow_up = 10.0 * std::max(umax0, 1e-6);

    // Time step from the advective CFL and the requested refinement.
    const double dt_out = 1.0 / static_cast<double>(nt - 1);
    const double cfl_dt = 0.4 * dx / std::max(umax0, 1e-6);
    std::size_t m = static_cast<std::size_t>(std::ceil(dt_out / std::min(cfl_dt, dt_out / 4.0)));
    if (m < 4) m = 4;
    const double dt = dt_out / static_cast<double>(m);

    PeriodicDiffusionSolver diffusion(nxi, 0.5 * viscosity * dt / (dx * dx));

    GridSolution sol;
    sol.n1 = nx;
    sol.n2 = nt;
    sol.problem = Problem::Burgers;
    sol.provenance = Provenance::BurgersFd;
    sol.values.assign(nx * nt, 0.0);
    for (std::size_t i = 0; i < nx; ++i) sol.at(i, 0) = u[i * rx];

    auto convection = [&](const DenseVector& v, DenseVector& out) {
        // Conservative central difference of the flux v^2/2.
        for (std::size_t i = 0; i < nxi; ++i) {
            const double fp = v[(i + 1) % nxi] * v[(i + 1) % nxi] * 0.5;
            const double fm = v[(i + nxi - 1) % nxi] * v[(i + nxi - 1) % nxi] * 0.5;
            out[i] = (fp - fm) / (2.0 * dx);
        }
    };

    DenseVector conv_now(nxi), conv_prev(nxi), lap(nxi), rhs(nxi), unew(nxi);
    bool have_prev = false;

    for (std::size_t j = 1; j < nt; ++j) {
        for (std::size_t step = 0; step < m; ++step) {
            convection(u, conv_now);
            for (std::size_t i = 0; i < nxi; ++i) {
                const double up = u[(i + 1) % nxi], um = u[(i + nxi - 1) % nxi];
                lap[i] = (up - 2.0 * u[i] + um) / (dx * dx);
            }
            for (std::size_t i = 0; i < nxi; ++i) {
                const double conv_term = have_prev
                                             ? 1.5 * conv_now[i] - 0.5 * conv_prev[i]
                                             : conv_now[i];
                rhs[i] = u[i] + dt * (-conv_term + 0.5 * viscosity * lap[i]);
            }
            diffusion.solve(rhs, unew);
            u.swap(unew);
            conv_prev.swap(conv_now);
            have_prev = true;

            for (double v : u)
                if (!(std::abs(v) <= blow_up))
                    throw SolverFailure("burgers_reference: instability detected");
        }
        for (std::size_t i = 0; i < nx; ++i) sol.at(i, j) = u[i * rx];
    }
    return sol;
}

GridSolution cubic_interpolate(std::span<const Point> sample_points,
                               std::span<const double> sample_values, Problem problem,
                               std::size_t n1, std::size_t n2) {
    if (sample_points.size() != sample_values.size())
        throw InvalidInput("cubic_interpolate: sample length mismatch");
    if (sample_points.size() < 16)
        throw InvalidInput("cubic_interpolate: need at least 16 scattered samples");

    std::vector<double> xs(sample_points.size()), ys(sample_points.size());
    for (std::size_t i = 0; i < sample_points.size(); ++i) {
        xs[i] = sample_points[i].x;
        ys[i] = sample_points[i].y;
    }
    ScatteredCubic2D interp(xs, ys, sample_values);

    GridSolution sol;
    sol.n1 = n1;
    sol.n2 = n2;
    sol.problem = problem;
    sol.provenance = Provenance::Interpolation;
    sol.values.assign(n1 * n2, 0.0);
    for (std::size_t i = 0; i < n1; ++i) {
        const double x = grid_coord_x(problem, i, n1);
        for (std::size_t j = 0; j < n2; ++j)
            sol.at(i, j) = interp(x, grid_coord_y(j, n2));
    }
    return sol;
}

double residual_on_grid(const GridSolution& u, Problem problem, const ParameterField& phi) {
    if (u.n1 < 3 || u.n2 < 3) throw InvalidInput("residual_on_grid: grid too small");

    const std::size_t n1 = u.n1, n2 = u.n2;
    double sum = 0.0;
    std::size_t count = 0;

    switch (problem) {
    case Problem::Convection: {
        const double dx = 1.0 / static_cast<double>(n1 - 1);
        const double dt = 1.0 / static_cast<double>(n2 - 1);
        for (std::size_t i = 1; i + 1 < n1; ++i) {
            const double b = phi.value_at(static_cast<double>(i) * dx);
            for (std::size_t j = 1; j + 1 < n2; ++j) {
                const double ut = (u.at(i, j + 1) - u.at(i, j - 1)) / (2.0 * dt);
                const double ux = (u.at(i + 1, j) - u.at(i - 1, j)) / (2.0 * dx);
                const double r = ut + b * ux;
                sum += r * r;
                ++count;
            }
        }
        break;
    }
    case Problem::Darcy: {
        if (n1 != n2) throw InvalidInput("residual_on_grid: Darcy grid must be square");
        const double h = 1.0 / static_cast<double>(n1 - 1);
        auto nu_at = [&](std::size_t i, std::size_t j) {
            return phi.value_at(static_cast<double>(i) * h, static_cast<double>(j) * h);
        };
        auto harm = [](double a, double b) { return 2.0 * a * b / (a + b); };
        for (std::size_t i = 1; i + 1 < n1; ++i)
            for (std::size_t j = 1; j + 1 < n2; ++j) {
                const double c = nu_at(i, j);
                const double r =
                    (harm(c, nu_at(i + 1, j)) * (u.at(i, j) - u.at(i + 1, j)) +
                     harm(c, nu_at(i - 1, j)) * (u.at(i, j) - u.at(i - 1, j)) +
                     harm(c, nu_at(i, j + 1)) * (u.at(i, j) - u.at(i, j + 1)) +
                     harm(c, nu_at(i, j - 1)) * (u.at(i, j) - u.at(i, j - 1))) /
                        (h * h) -
                    1.0;
                sum += r * r;
                ++count;
            }
        break;
    }
    case Problem::Burgers: {
        const double dx = 1.0 / static_cast<double>(n1); // periodic in x
        const double dt = 1.0 / static_cast<double>(n2 - 1);
        const double viscosity = 0.01;
        for (std::size_t i = 0; i < n1; ++i) {
            const std::size_t ip = (i + 1) % n1, im = (i + n1 - 1) % n1;
            for (std::size_t j = 1; j + 1 < n2; ++j) {
                const double ut = (u.at(i, j + 1) - u.at(i, j - 1)) / (2.0 * dt);
                const double flux =
                    (u.at(ip, j) * u.at(ip, j) - u.at(im, j) * u.at(im, j)) / (4.0 * dx);
                const double uxx =
                    (u.at(ip, j) - 2.0 * u.at(i, j) + u.at(im, j)) / (dx * dx);
                const double r = ut + flux - viscosity * uxx;
                sum += r * r;
                ++count;
            }
        }
        break;
    }
    }
    return count > 0 ? sum / static_cast<double>(count) : 0.0;
}

double relative_l2(const GridSolution& model, const GridSolution& target) {
    if (model.n1 != target.n1 || model.n2 != target.n2)
        throw InvalidInput("relative_l2: grid shape mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < model.values.size(); ++i) {
        const double d = model.values[i] - target.values[i];
        num += d * d;
        den += target.values[i] * target.values[i];
    }
    if (den == 0.0) return std::sqrt(num);
    return std::sqrt(num / den);
}

} // namespace pdecl
