#include "pdecl/numerics.hpp"

#include "pdecl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace pdecl {

void DenseMatrix::append_rows(const DenseMatrix& other) {
    if (other.rows() == 0) return;
    if (rows_ == 0 && cols_ == 0) {
        *this = other;
        return;
    }
    if (other.cols() != cols_)
        throw InvalidInput("append_rows: column mismatch");
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
    rows_ += other.rows_;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double norm_inf(std::span<const double> a) {
    double m = 0.0;
    for (double v : a) m = std::max(m, std::abs(v));
    return m;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

void scale(double alpha, std::span<double> x) {
    for (double& v : x) v *= alpha;
}

bool all_finite(std::span<const double> a) {
    for (double v : a)
        if (!std::isfinite(v)) return false;
    return true;
}

void check_finite(std::span<const double> a, const char* what) {
    if (!all_finite(a))
        throw InvalidInput(std::string(what) + ": non-finite entries");
}

void matvec(const DenseMatrix& A, std::span<const double> x, std::span<double> y) {
    const std::size_t m = A.rows(), n = A.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = A.data().data() + i * n;
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += row[j] * x[j];
        y[i] = s;
    }
}

void matvec_transpose(const DenseMatrix& A, std::span<const double> x, std::span<double> y) {
    const std::size_t m = A.rows(), n = A.cols();
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = A.data().data() + i * n;
        const double xi = x[i];
        for (std::size_t j = 0; j < n; ++j) y[j] += row[j] * xi;
    }
}

DenseVector matvec(const DenseMatrix& A, const DenseVector& x) {
    DenseVector y(A.rows());
    matvec(A, std::span<const double>(x), std::span<double>(y));
    return y;
}

DenseVector matvec_transpose(const DenseMatrix& A, const DenseVector& x) {
    DenseVector y(A.cols());
    matvec_transpose(A, std::span<const double>(x), std::span<double>(y));
    return y;
}

DenseMatrix gram(const DenseMatrix& A) {
    const std::size_t m = A.rows(), n = A.cols();
    DenseMatrix G(n, n, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
        const double* row = A.data().data() + r * n;
        for (std::size_t i = 0; i < n; ++i) {
            const double ri = row[i];
            if (ri == 0.0) continue;
            double* gi = G.data().data() + i * n;
            for (std::size_t j = i; j < n; ++j) gi[j] += ri * row[j];
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) G(i, j) = G(j, i);
    return G;
}

bool cholesky_in_place(DenseMatrix& A) {
    const std::size_t n = A.rows();
    for (std::size_t j = 0; j < n; ++j) {
        double d = A(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= A(j, k) * A(j, k);
        if (!(d > 0.0)) return false;
        const double ljj = std::sqrt(d);
        A(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = A(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= A(i, k) * A(j, k);
            A(i, j) = s / ljj;
        }
        for (std::size_t k = j + 1; k < n; ++k) A(j, k) = 0.0;
    }
    return true;
}

DenseVector cholesky_solve(const DenseMatrix& L, const DenseVector& b) {
    const std::size_t n = L.rows();
    DenseVector y(b);
    for (std::size_t i = 0; i < n; ++i) {
        double s = y[i];
        for (std::size_t k = 0; k < i; ++k) s -= L(i, k) * y[k];
        y[i] = s / L(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= L(k, ii) * y[k];
        y[ii] = s / L(ii, ii);
    }
    return y;
}

std::pair<DenseVector, SolveReport> lstsq_solve(const DenseMatrix& A,
                                                const DenseVector& b,
                                                double tol,
                                                std::size_t max_iter,
                                                double damping) {
    const std::size_t m = A.rows(), n = A.cols();
    if (m == 0 || n == 0) throw InvalidInput("lstsq_solve: empty matrix");
    if (b.size() != m) throw InvalidInput("lstsq_solve: rhs length mismatch");
    if (!(tol > 0.0)) throw InvalidInput("lstsq_solve: tol must be positive");
    if (damping < 0.0) throw InvalidInput("lstsq_solve: negative damping");
    check_finite(A.data(), "lstsq_solve matrix");
    check_finite(b, "lstsq_solve rhs");
    if (max_iter == 0) max_iter = 10 * std::max(m, n);

    SolveReport report;
    report.method = "cgls";

    DenseVector x(n, 0.0);
    DenseVector r(b);                       // r = b - A x
    DenseVector s = matvec_transpose(A, r); // s = A^T r - damping x
    DenseVector p(s);
    DenseVector q(m);

    const double b_norm = norm2(b);
    const double atb_norm = norm2(s);
    report.rhs_norm = atb_norm;

    // Frobenius norm of the damped operator [A; sqrt(damping) I].
    double a_fro = 0.0;
    for (double v : A.data()) a_fro += v * v;
    a_fro = std::sqrt(a_fro + damping * static_cast<double>(n));

    double gamma = dot(s, s);
    double r_norm = b_norm;
    double s_norm = std::sqrt(gamma);

    // LSQR-style tests: the least-squares criterion is scaled by the current
    // residual, so consistent systems keep iterating until the primal
    // residual itself reaches tolerance.
    auto stop_ls = [&] { return s_norm <= tol * a_fro * r_norm; };
    auto stop_consistent = [&] { return r_norm <= tol * b_norm; };

    if (atb_norm == 0.0) {
        // b orthogonal to range(A): x = 0 is the least-squares solution.
        report.converged = true;
        return {x, report};
    }

    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        if (stop_ls() || stop_consistent()) break;
        matvec(A, p, q);
        const double delta = dot(q, q) + damping * dot(p, p);
        if (delta <= 0.0) break; // p in the null space; nothing left to gain
        const double alpha = gamma / delta;
        axpy(alpha, p, x);
        axpy(-alpha, q, r);
        if ((it + 1) % 50 == 0) {
            // Refresh the residual recurrences to cap rounding drift.
            r = b;
            DenseVector ax(m);
            matvec(A, x, std::span<double>(ax));
            axpy(-1.0, ax, r);
        }
        matvec_transpose(A, r, std::span<double>(s));
        if (damping != 0.0) axpy(-damping, x, s);
        const double gamma_next = dot(s, s);
        const double beta = gamma_next / gamma;
        gamma = gamma_next;
        s_norm = std::sqrt(gamma);
        r_norm = norm2(r);
        for (std::size_t j = 0; j < n; ++j) p[j] = s[j] + beta * p[j];
    }

    report.iterations = it;
    if (stop_ls()) {
        report.converged = true;
        report.final_residual_norm = s_norm;
        report.rhs_norm = a_fro * r_norm;
    } else if (stop_consistent()) {
        report.converged = true;
        report.final_residual_norm = r_norm; // the consistent-system test was the binding one
        report.rhs_norm = b_norm;
    } else {
        report.converged = false;
        report.final_residual_norm = s_norm;
    }
    return {x, report};
}

std::pair<DenseVector, SolveReport> cg_solve(const LinearMap& op,
                                             const DenseVector& b,
                                             double tol,
                                             std::size_t max_iter) {
    const std::size_t n = op.dim;
    if (b.size() != n) throw InvalidInput("cg_solve: rhs length mismatch");
    if (!(tol > 0.0)) throw InvalidInput("cg_solve: tol must be positive");
    check_finite(b, "cg_solve rhs");
    if (max_iter == 0) max_iter = 10 * n + 10;

    SolveReport report;
    report.method = "cg";
    const double b_norm = norm2(b);
    report.rhs_norm = b_norm;

    DenseVector x(n, 0.0);
    if (b_norm == 0.0) {
        report.converged = true;
        return {x, report};
    }

    DenseVector r(b); // r = b - A*0
    DenseVector p(r);
    DenseVector ap(n);
    double rho = dot(r, r);

    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        if (std::sqrt(rho) <= tol * b_norm) break;
        op.apply(p, ap);
        const double pap = dot(p, ap);
        if (pap <= 0.0) break; // operator not SPD along p; keep best iterate
        const double alpha = rho / pap;
        axpy(alpha, p, x);
        axpy(-alpha, ap, r);
        const double rho_next = dot(r, r);
        const double beta = rho_next / rho;
        rho = rho_next;
        for (std::size_t j = 0; j < n; ++j) p[j] = r[j] + beta * p[j];
    }

    report.iterations = it;
    report.final_residual_norm = std::sqrt(rho);
    report.converged = report.final_residual_norm <= tol * b_norm;
    return {x, report};
}

namespace {

// One GMRES cycle of at most `m` Arnoldi steps, starting from x (updated in
// place). Returns the final residual norm estimate.
double gmres_cycle(const LinearMap& op, const DenseVector& b, DenseVector& x,
                   std::size_t m, double abs_tol, std::size_t& iters_done) {
    const std::size_t n = op.dim;
    DenseVector r(n);
    op.apply(x, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    double beta = norm2(r);
    if (beta <= abs_tol || beta == 0.0) return beta;

    std::vector<DenseVector> V;
    V.reserve(m + 1);
    V.push_back(r);
    scale(1.0 / beta, V[0]);

    // Hessenberg columns, Givens rotations, and the rotated rhs.
    std::vector<DenseVector> H;
    DenseVector cs(m, 0.0), sn(m, 0.0), g(m + 1, 0.0);
    g[0] = beta;

    std::size_t k = 0;
    double res = beta;
    for (; k < m; ++k) {
        DenseVector w(n);
        op.apply(V[k], w);
        DenseVector h(k + 2, 0.0);
        for (std::size_t i = 0; i <= k; ++i) { // modified Gram-Schmidt
            h[i] = dot(w, V[i]);
            axpy(-h[i], V[i], w);
        }
        const double h_next = norm2(w); // subdiagonal before rotations
        h[k + 1] = h_next;
        for (std::size_t i = 0; i < k; ++i) {
            const double t = cs[i] * h[i] + sn[i] * h[i + 1];
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
            h[i] = t;
        }
        const double denom = std::hypot(h[k], h[k + 1]);
        if (denom == 0.0) { H.push_back(h); ++k; break; }
        cs[k] = h[k] / denom;
        sn[k] = h[k + 1] / denom;
        h[k] = denom;
        h[k + 1] = 0.0;
        g[k + 1] = -sn[k] * g[k];
        g[k] = cs[k] * g[k];
        H.push_back(h);
        res = std::abs(g[k + 1]);
        ++iters_done;
        if (res <= abs_tol) { ++k; break; }
        if (h_next == 0.0) { ++k; break; } // happy breakdown
        DenseVector v(w);
        scale(1.0 / h_next, v);
        V.push_back(std::move(v));
    }

    // Back-substitute y from the triangularized system, then update x.
    DenseVector y(k, 0.0);
    for (std::size_t ii = k; ii-- > 0;) {
        double s = g[ii];
        for (std::size_t j = ii + 1; j < k; ++j) s -= H[j][ii] * y[j];
        y[ii] = s / H[ii][ii];
    }
    for (std::size_t j = 0; j < k; ++j) axpy(y[j], V[j], x);

    op.apply(x, r);
    for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    return norm2(r);
}

} // namespace

std::pair<DenseVector, SolveReport> gmres_solve(const LinearMap& op,
                                                const DenseVector& b,
                                                double tol,
                                                std::size_t max_iter) {
    const std::size_t n = op.dim;
    if (b.size() != n) throw InvalidInput("gmres_solve: rhs length mismatch");
    if (!(tol > 0.0)) throw InvalidInput("gmres_solve: tol must be positive");
    check_finite(b, "gmres_solve rhs");
    if (max_iter == 0) max_iter = std::max<std::size_t>(10 * n, 100);

    constexpr std::size_t kRestart = 200;

    SolveReport report;
    report.method = "gmres";
    const double b_norm = norm2(b);
    report.rhs_norm = b_norm;

    DenseVector x(n, 0.0);
    if (b_norm == 0.0) {
        report.converged = true;
        return {x, report};
    }
    const double abs_tol = tol * b_norm;

    std::size_t iters = 0;
    double res = b_norm;
    while (iters < max_iter) {
        const std::size_t cycle = std::min(kRestart, max_iter - iters);
        res = gmres_cycle(op, b, x, cycle, abs_tol, iters);
        if (res <= abs_tol) break;
    }

    report.iterations = iters;
    report.final_residual_norm = res;
    report.converged = res <= abs_tol;
    return {x, report};
}

double finite_difference_check(const std::function<double(const DenseVector&)>& f,
                               const DenseVector& grad,
                               const DenseVector& x,
                               double step) {
    if (!(step > 0.0)) throw InvalidInput("finite_difference_check: step must be positive");
    if (grad.size() != x.size())
        throw InvalidInput("finite_difference_check: gradient length mismatch");

    DenseVector fd(x.size());
    DenseVector xp(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        xp[i] = x[i] + step;
        const double fp = f(xp);
        xp[i] = x[i] - step;
        const double fm = f(xp);
        xp[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw InvalidInput("finite_difference_check: non-finite function value");
        fd[i] = (fp - fm) / (2.0 * step);
    }

    const double denom = std::max(norm_inf(grad), norm_inf(fd));
    if (denom == 0.0) return 0.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i)
        worst = std::max(worst, std::abs(grad[i] - fd[i]));
    return worst / denom;
}

} // namespace pdecl
