#pragma once

#include "pdecl/basis_net.hpp"
#include "pdecl/param_field.hpp"
#include "pdecl/problem.hpp"

#include <span>

namespace pdecl {

enum class Stratum { Interior, Initial, Boundary };

/// I.i.d. uniform samples over the requested stratum of [0,1]^2: the open
/// interior, the t=0 edge, or the x=0 edge. Deterministic given seed.
std::vector<Point> sample_points(std::size_t n, std::uint64_t seed, Stratum stratum);

/// Point sets for one fit/loss round. Fit and loss sets are drawn from
/// independent substreams of `seed`.
struct SamplePlan {
    std::vector<Point> fit_points;
    std::vector<Point> loss_points;
    std::vector<Point> icbc_points;
    std::uint64_t seed = 0;
};

/// Convection splits icbc points between the t=0 and x=0 edges; Burgers puts
/// them all on t=0; Darcy has none (mollifier handles the boundary).
SamplePlan make_sample_plan(Problem problem, std::size_t n_fit, std::size_t n_loss,
                            std::size_t n_icbc, std::uint64_t seed);

/// Discretized constraint for one parameter field: interior PDE rows, plus
/// optional initial/boundary regression rows kept separate so callers can
/// stack them or route them to the EqQP loss block.
struct ConstraintSystem {
    DenseMatrix matrix; // n x N
    DenseVector rhs;    // n
    std::vector<Point> points;
    DenseMatrix icbc_matrix; // 0 rows when unused
    DenseVector icbc_rhs;
    std::vector<Point> icbc_points;

    /// [matrix; icbc_matrix], [rhs; icbc_rhs]
    std::pair<DenseMatrix, DenseVector> stacked() const;
};

/// Linear functional of a per-point jet; one constraint row is
/// row[i] = value*f_i + dx*∂x f_i + dy*∂y f_i + dxx*∂xx f_i + dyy*∂yy f_i
/// (seed 0 carries x, seed 1 carries t or y). Shared between assembly and
/// the reverse pass, which turns a row cotangent into jet adjoints.
struct RowFunctional {
    double value = 0.0;
    double dx = 0.0, dy = 0.0;
    double dxx = 0.0, dyy = 0.0;

    double apply(const JetBundle& jet, std::size_t i) const;
    void fill_row(const JetBundle& jet, std::span<double> row) const;
    /// Reverse of fill_row: given the cotangent of one assembled row,
    /// accumulate adj[slot][i] += coeff[slot] * cot_row[i]. Slots absent
    /// from `adj` (because its order is lower) must have zero coefficients.
    void accumulate_adjoint(std::span<const double> cot_row, JetBundle& adj) const;
};

/// Interior operator row for u_t + beta(x) u_x = 0 at a point.
RowFunctional convection_row(double beta_at_point);
/// Plain value row for initial/boundary regression.
RowFunctional value_row();
/// Interior Darcy row -nu Lap(g) - grad(nu).grad(g) acting on a MOLLIFIED jet g.
RowFunctional darcy_row_mollified(double nu, double gnu_x, double gnu_y);
/// Same row pulled back through the mollifier, acting on the raw jet.
RowFunctional darcy_row_raw(double nu, double gnu_x, double gnu_y, Point pt);

/// Jet of m(x,y) * f with m = sin(pi x) sin(pi y), by the product rule.
/// Expects seed 0 = x, seed 1 = y, order 2.
JetBundle mollify(const JetBundle& jet, Point pt);

/// m(x, y), exactly zero on the boundary of the unit square.
double mollifier_value(Point pt);

/// Smoothed finite-difference gradient of a 2D coefficient field.
struct VectorField {
    ParameterField x_component;
    ParameterField y_component;
};
VectorField coefficient_gradient(const ParameterField& nu, double smoothing_radius);

ConstraintSystem assemble_convection(const ParameterField& beta, const SamplePlan& plan,
                                     std::span<const JetBundle> interior_jets,
                                     std::span<const JetBundle> icbc_jets);

/// `mollified_jets` must already be mollified (see mollify); rhs is the
/// constant forcing 1.
ConstraintSystem assemble_darcy(const ParameterField& nu, const VectorField& grad_nu,
                                const SamplePlan& plan,
                                std::span<const JetBundle> mollified_jets);

/// Convenience that mollifies raw jets internally.
ConstraintSystem assemble_darcy_raw(const ParameterField& nu, const VectorField& grad_nu,
                                    const SamplePlan& plan,
                                    std::span<const JetBundle> raw_jets);

/// Residual and exact Jacobian of the discretized Burgers system at omega:
/// interior rows u_t + u u_x - viscosity u_xx on fit points, then initial
/// rows u(x,0) - u0(x) on icbc points. The residual is quadratic in omega,
/// so the Jacobian is exact.
struct BurgersSystem {
    DenseVector residual;
    DenseMatrix jacobian;
    std::size_t interior_rows = 0;
};
BurgersSystem burgers_residual_and_jacobian(const DenseVector& omega,
                                            std::span<const JetBundle> interior_jets,
                                            std::span<const JetBundle> ic_jets,
                                            const ParameterField& u0, double viscosity,
                                            const SamplePlan& plan);

/// Jets of the basis network at the given domain points, through the
/// problem's input encoding. `order` 0 gives value-only bundles.
std::vector<JetBundle> problem_jets(const NetworkParams& params, Problem problem,
                                    const ParameterField& phi, std::span<const Point> pts,
                                    const EncodingConfig& cfg, int order);

} // namespace pdecl
