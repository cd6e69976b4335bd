#pragma once

#include "pdecl/pde_operators.hpp"

#include <functional>
#include <optional>

namespace pdecl {

enum class FitMode { Linear, Eqqp, Nonlinear };

std::string to_string(FitMode m);
FitMode fit_mode_from_string(const std::string& s);

/// The weights of the optimal linear combination of basis functions, with
/// solver diagnostics. `multipliers` holds the EqQP dual when applicable.
struct CombinationWeights {
    DenseVector omega;
    DenseVector multipliers;
    SolveReport report;
    FitMode fit_mode = FitMode::Linear;
};

/// omega = argmin |A w - b|^2 + damping |w|^2 via the iterative least-squares
/// solver. Underdetermined consistent systems come back with residual below
/// tol (the hard-constraint regime).
CombinationWeights fit_linear(const DenseMatrix& A, const DenseVector& b, double tol,
                              double damping = 0.0, std::size_t max_iter = 0);

/// Equality-constrained QP: min |B w - y|^2 s.t. A w = 0, solved through its
/// KKT system [[B^T B, A^T], [A, 0]] [w; mu] = [B^T y; 0] with GMRES. A
/// singular or stalled KKT retries with eps = 1e-10 added to both diagonal
/// blocks (the (2,2) block with negative sign, keeping the system
/// quasi-definite). An empty constraint reduces to fit_linear on (B, y).
CombinationWeights fit_eqqp(const DenseMatrix& loss_matrix, const DenseVector& loss_rhs,
                            const DenseMatrix& constraint_matrix, double tol,
                            std::size_t max_iter = 0);

struct ResidualEval {
    DenseVector residual;
    DenseMatrix jacobian;
};
using ResidualFn = std::function<ResidualEval(const DenseVector&)>;

/// Levenberg-Marquardt: solves (J^T J + mu I) step = -J^T r with conjugate
/// gradient, mu scaled x10 on reject and /10 on accept from 1e-3. Stops at
/// |J^T r| <= tol (1 + |r|) or after max_outer iterations; 20 consecutive
/// rejected steps end the solve with converged=false.
CombinationWeights fit_nonlinear(const ResidualFn& fn, DenseVector omega0, double tol,
                                 std::size_t max_outer);

/// Adjoint of the damped least-squares fit at omega, from the stationarity
/// condition A^T(A w - b) + damping w = 0:
///   (A^T A + damping I) lambda = upstream
///   cotangent_b = A lambda
///   cotangent_A = -(r lambda^T + (A lambda) omega^T),  r = A omega - b.
/// For a square consistent system (r = 0) this is exactly the linear-system
/// implicit derivative.
struct AdjointState {
    DenseVector lambda;
    DenseMatrix cotangent_A;
    DenseVector cotangent_b;
};
AdjointState vjp_linear(const DenseMatrix& A, const DenseVector& b, const DenseVector& omega,
                        const DenseVector& upstream, double tol, double damping = 0.0);

/// Adjoint of fit_eqqp via the transpose KKT solve K [p; q] = [upstream; 0];
/// cotangents follow the same outer-product pattern as vjp_linear.
struct EqqpAdjoint {
    DenseVector p;
    DenseVector q;
    DenseMatrix cot_loss_matrix;
    DenseVector cot_loss_rhs;
    DenseMatrix cot_constraint;
};
EqqpAdjoint vjp_eqqp(const DenseMatrix& loss_matrix, const DenseVector& loss_rhs,
                     const DenseMatrix& constraint_matrix, const CombinationWeights& solution,
                     const DenseVector& upstream, double tol);

/// Gauss-Newton implicit adjoint at a converged nonlinear fit: solves
/// (J^T J + damping I) p = upstream and returns the residual cotangent
/// rbar = -J p to be pushed through d(residual)/d(theta). Exact as the
/// converged residual approaches zero; solver iterations are never
/// differentiated through.
DenseVector vjp_nonlinear_residual(const DenseMatrix& jacobian, const DenseVector& upstream,
                                   double tol, double damping = 0.0);

/// A trained (or in-training) model for one parameter field: evaluable at
/// any domain point as u(x) = sum_i omega_i f_theta^i(x), mollified for
/// Darcy. `direct` marks soft-baseline checkpoints whose network output is
/// the solution itself.
struct SolutionField {
    NetworkParams params;
    CombinationWeights weights;
    Problem problem = Problem::Convection;
    ParameterField phi;
    bool mollified = false;
    bool direct = false;
    EncodingConfig encoding;

    double evaluate(Point pt) const;
    DenseVector evaluate(std::span<const Point> pts) const;
};

struct InferOptions {
    std::size_t subset_size = 0;
    std::uint64_t seed = 0;
    double tol = 1e-8;
    double damping = 0.0;
    std::size_t max_iter = 0;
    std::size_t n_icbc = 100;          // icbc rows added for convection/Burgers
    double icbc_weight = 1.0;          // least-squares weight on icbc rows
    std::size_t max_outer = 100;       // LM budget for Burgers
    std::optional<FitMode> mode;       // defaults to the problem's mode
};

/// Samples subset_size of the test points without replacement, refits omega
/// on that subset (plus fresh icbc rows where the problem has them), stores
/// the weights in `field`, and evaluates the model at every test point.
std::pair<DenseVector, CombinationWeights> infer(SolutionField& field,
                                                 std::span<const Point> test_points,
                                                 const InferOptions& opts);

/// Linear mode used by the problem's PDE-CL by default.
FitMode default_fit_mode(Problem problem);

} // namespace pdecl
