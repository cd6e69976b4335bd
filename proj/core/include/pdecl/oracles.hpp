#pragma once

#include "pdecl/param_field.hpp"
#include "pdecl/problem.hpp"

#include <functional>

namespace pdecl {

enum class Provenance { LaxWendroff, DarcyFd, BurgersFd, Model, Interpolation };

std::string to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

/// A solution sampled on a regular grid over [0,1]^2. Index (i, j) maps to
/// values[i * n2 + j]; i runs over x, j over t (or y for Darcy). Burgers
/// grids are periodic in x (x_i = i/n1); the others are inclusive
/// (x_i = i/(n1-1)).
struct GridSolution {
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    DenseVector values;
    Problem problem = Problem::Convection;
    Provenance provenance = Provenance::Model;

    double at(std::size_t i, std::size_t j) const { return values[i * n2 + j]; }
    double& at(std::size_t i, std::size_t j) { return values[i * n2 + j]; }
};

double grid_coord_x(Problem problem, std::size_t i, std::size_t n1);
double grid_coord_y(std::size_t j, std::size_t n2);
/// All grid points in index order (i-major), matching GridSolution layout.
std::vector<Point> grid_points(Problem problem, std::size_t n1, std::size_t n2);

/// Second-order Lax-Wendroff (advective form, pointwise beta) for
/// u_t + beta(x) u_x = 0 with inflow g(t) = sin(pi t/2) at x=0, first-order
/// upwind outflow at x=1, and h(x) = sin(pi x) at t=0. Time steps are
/// refined internally until max(beta) dt/dx <= 1, then subsampled onto the
/// requested grid.
GridSolution lax_wendroff_convection(const ParameterField& beta, std::size_t nx,
                                     std::size_t nt);

/// Flux-conservative 5-point discretization of -div(nu grad u) = f with
/// harmonic-mean face coefficients and zero Dirichlet boundary, solved by
/// conjugate gradient to 1e-10. `forcing` defaults to the constant 1.
GridSolution darcy_fd_solve(const ParameterField& nu, std::size_t n,
                            const std::function<double(double, double)>& forcing = {});

/// Periodic IMEX reference for Burgers: explicit second-order conservative
/// convection (Adams-Bashforth on the flux u^2/2), Crank-Nicolson diffusion,
/// internal grid at least 4x the requested resolution in x and t.
GridSolution burgers_reference(const ParameterField& u0, double viscosity, std::size_t nx,
                               std::size_t nt);

/// Scattered-data cubic interpolation onto a problem grid (triangulation
/// cubic in 2D), extrapolation clamped to the nearest sample.
GridSolution cubic_interpolate(std::span<const Point> sample_points,
                               std::span<const double> sample_values, Problem problem,
                               std::size_t n1, std::size_t n2);

/// Mean squared residual of the problem's finite-difference operator applied
/// to `u` over interior grid points. The Darcy stencil matches
/// darcy_fd_solve, so its discrete solutions have residual at rounding
/// level.
double residual_on_grid(const GridSolution& u, Problem problem,
                        const ParameterField& phi);

/// |model - target|_2 / |target|_2 over all grid points.
double relative_l2(const GridSolution& model, const GridSolution& target);

} // namespace pdecl
