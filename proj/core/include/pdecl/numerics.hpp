#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace pdecl {

using DenseVector = std::vector<double>;

/// Row-major dense matrix of 64-bit floats. Rows are assembled per sampled
/// point, so row-major keeps assembly and row access contiguous.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    /// Stack rows of `other` below this matrix (column counts must agree).
    void append_rows(const DenseMatrix& other);

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Outcome of an iterative solve. `final_residual_norm` is the norm the
/// stopping test used and `rhs_norm` the norm it was measured against, so
/// converged implies final_residual_norm <= tol * rhs_norm.
struct SolveReport {
    std::size_t iterations = 0;
    double final_residual_norm = 0.0;
    double rhs_norm = 0.0;
    bool converged = false;
    std::string method;
};

/// Matrix-free linear operator on length-`dim` vectors.
struct LinearMap {
    std::size_t dim = 0;
    std::function<void(std::span<const double>, std::span<double>)> apply;
};

// ---- small dense kernels ----

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double norm_inf(std::span<const double> a);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void scale(double alpha, std::span<double> x);
bool all_finite(std::span<const double> a);
void check_finite(std::span<const double> a, const char* what);

/// y = A x
void matvec(const DenseMatrix& A, std::span<const double> x, std::span<double> y);
/// y = A^T x
void matvec_transpose(const DenseMatrix& A, std::span<const double> x, std::span<double> y);
DenseVector matvec(const DenseMatrix& A, const DenseVector& x);
DenseVector matvec_transpose(const DenseMatrix& A, const DenseVector& x);

/// C = A^T A  (symmetric; used to cheapen repeated normal-equation products)
DenseMatrix gram(const DenseMatrix& A);

/// In-place lower Cholesky of a symmetric positive-definite matrix.
/// Returns false if a non-positive pivot is hit.
bool cholesky_in_place(DenseMatrix& A);
/// Solve L L^T x = b given the lower factor from cholesky_in_place.
DenseVector cholesky_solve(const DenseMatrix& L, const DenseVector& b);

// ---- iterative solvers ----

/// Damped linear least squares: minimizes |A x - b|^2 + damping |x|^2 by
/// conjugate gradient on the normal equations (CGLS). Starting from x = 0 the
/// iterates stay in range(A^T), so consistent underdetermined systems
/// converge to the minimum-norm solution. Stops when either
///   |A^T(Ax-b) + damping x| <= tol * |A^T b|   (least-squares test), or
///   |Ax - b| <= tol * |b|                      (consistent-system test).
/// Never throws on non-convergence: the best iterate is returned with
/// converged=false.
std::pair<DenseVector, SolveReport> lstsq_solve(const DenseMatrix& A,
                                                const DenseVector& b,
                                                double tol = 1e-8,
                                                std::size_t max_iter = 0,
                                                double damping = 0.0);

/// GMRES (restart cycle length 200) for a general square operator.
std::pair<DenseVector, SolveReport> gmres_solve(const LinearMap& op,
                                                const DenseVector& b,
                                                double tol = 1e-8,
                                                std::size_t max_iter = 0);

/// Conjugate gradient for a symmetric positive (semi-)definite operator.
std::pair<DenseVector, SolveReport> cg_solve(const LinearMap& op,
                                             const DenseVector& b,
                                             double tol = 1e-8,
                                             std::size_t max_iter = 0);

/// Max relative discrepancy between `grad` and the central-difference
/// gradient of `f` at `x`, normalized by the largest entry magnitude of
/// either gradient (0 when both vanish).
double finite_difference_check(const std::function<double(const DenseVector&)>& f,
                               const DenseVector& grad,
                               const DenseVector& x,
                               double step);

} // namespace pdecl
