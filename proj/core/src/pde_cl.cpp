#include "pdecl/pde_cl.hpp"

#include "pdecl/errors.hpp"
#include "pdecl/rng.hpp"

#include <algorithm>
#include <cmath>

namespace pdecl {

std::string to_string(FitMode m) {
    switch (m) {
    case FitMode::Linear: return "linear";
    case FitMode::Eqqp: return "eqqp";
    case FitMode::Nonlinear: return "nonlinear";
    }
    return "unknown";
}

FitMode fit_mode_from_string(const std::string& s) {
    if (s == "linear") return FitMode::Linear;
    if (s == "eqqp") return FitMode::Eqqp;
    if (s == "nonlinear") return FitMode::Nonlinear;
    throw ConfigError("unknown fit mode: " + s);
}

FitMode default_fit_mode(Problem problem) {
    return problem == Problem::Burgers ? FitMode::Nonlinear : FitMode::Linear;
}

CombinationWeights fit_linear(const DenseMatrix& A, const DenseVector& b, double tol,
                              double damping, std::size_t max_iter) {
    CombinationWeights w;
    w.fit_mode = FitMode::Linear;
    auto [omega, report] = lstsq_solve(A, b, tol, max_iter, damping);
    w.omega = std::move(omega);
    w.report = std::move(report);
    return w;
}

namespace {

// KKT operator for min |B w - y|^2 s.t. A w = 0:
//   [ B^T B + eps I   A^T  ] [w ]   [B^T y]
//   [ A              -eps I] [mu] = [  0  ]
struct KktOperator {
    const DenseMatrix& B;
    const DenseMatrix& A;
    double eps = 0.0;

    std::size_t n() const { return A.cols(); }
    std::size_t m() const { return A.rows(); }

    LinearMap map() const {
        const std::size_t N = n(), M = m();
        return {N + M, [this, N, M](std::span<const double> in, std::span<double> out) {
                    DenseVector w(in.begin(), in.begin() + N);
                    DenseVector Bw(B.rows());
                    matvec(B, w, std::span<double>(Bw));
                    DenseVector BtBw(N);
                    matvec_transpose(B, Bw, std::span<double>(BtBw));
                    DenseVector Aw(M);
                    matvec(A, w, std::span<double>(Aw));
                    // A^T mu
                    DenseVector mu(in.begin() + N, in.end());
                    DenseVector Atmu(N);
                    matvec_transpose(A, mu, std::span<double>(Atmu));
                    for (std::size_t i = 0; i < N; ++i)
                        out[i] = BtBw[i] + Atmu[i] + eps * w[i];
                    for (std::size_t i = 0; i < M; ++i)
                        out[N + i] = Aw[i] - eps * mu[i];
                }};
    }
};

std::pair<DenseVector, SolveReport> solve_kkt(const DenseMatrix& B, const DenseMatrix& A,
                                              const DenseVector& rhs, double tol,
                                              std::size_t max_iter, bool& damped) {
    KktOperator kkt{B, A, 0.0};
    auto [z, report] = gmres_solve(kkt.map(), rhs, tol, max_iter);
    damped = false;
    if (!report.converged) {
        KktOperator kkt_damped{B, A, 1e-10};
        auto [z2, report2] = gmres_solve(kkt_damped.map(), rhs, tol, max_iter);
        if (report2.converged || report2.final_residual_norm < report.final_residual_norm) {
            damped = true;
            report2.method = "gmres-kkt-damped";
            return {std::move(z2), std::move(report2)};
        }
    }
    report.method = damped ? "gmres-kkt-damped" : "gmres-kkt";
    return {std::move(z), std::move(report)};
}

} // namespace

CombinationWeights fit_eqqp(const DenseMatrix& loss_matrix, const DenseVector& loss_rhs,
                            const DenseMatrix& constraint_matrix, double tol,
                            std::size_t max_iter) {
    if (loss_matrix.rows() != loss_rhs.size())
        throw InvalidInput("fit_eqqp: loss rhs length mismatch");

    if (constraint_matrix.rows() == 0) {
        CombinationWeights w = fit_linear(loss_matrix, loss_rhs, tol, 0.0, max_iter);
        w.fit_mode = FitMode::Eqqp;
        return w;
    }
    if (loss_matrix.cols() != constraint_matrix.cols())
        throw InvalidInput("fit_eqqp: loss/constraint width mismatch");

    const std::size_t N = constraint_matrix.cols();
    const std::size_t M = constraint_matrix.rows();
    if (max_iter == 0) max_iter = 10 * (N + M);

    DenseVector rhs(N + M, 0.0);
    DenseVector bty = matvec_transpose(loss_matrix, loss_rhs);
    std::copy(bty.begin(), bty.end(), rhs.begin());

    bool damped = false;
    auto [z, report] = solve_kkt(loss_matrix, constraint_matrix, rhs, tol, max_iter, damped);

    CombinationWeights w;
    w.fit_mode = FitMode::Eqqp;
    w.omega.assign(z.begin(), z.begin() + N);
    w.multipliers.assign(z.begin() + N, z.end());
    w.report = std::move(report);
    return w;
}

CombinationWeights fit_nonlinear(const ResidualFn& fn, DenseVector omega0, double tol,
                                 std::size_t max_outer) {
    if (max_outer == 0) throw InvalidInput("fit_nonlinear: max_outer must be >= 1");
    if (!(tol > 0.0)) throw InvalidInput("fit_nonlinear: tol must be positive");

    CombinationWeights w;
    w.fit_mode = FitMode::Nonlinear;
    w.report.method = "levenberg-marquardt";

    DenseVector x = std::move(omega0);
    ResidualEval cur = fn(x);
    const std::size_t N = x.size();
    double f = dot(cur.residual, cur.residual);
    double mu = 1e-3;
    std::size_t rejects_in_a_row = 0;
    std::size_t outer = 0;
    bool converged = false;

    DenseVector g(N);

    for (; outer < max_outer; ++outer) {
        matvec_transpose(cur.jacobian, cur.residual, std::span<double>(g));
        const double g_norm = norm2(g);
        const double r_norm = std::sqrt(f);
        w.report.final_residual_norm = g_norm;
        w.report.rhs_norm = 1.0 + r_norm;
        if (g_norm <= tol * (1.0 + r_norm)) {
            converged = true;
            break;
        }

        // (J^T J + mu I) step = -g, matrix-free CG on the Gauss-Newton model.
        const DenseMatrix& J = cur.jacobian;
        const double mu_now = mu;
        LinearMap gn{N, [&J, mu_now](std::span<const double> in, std::span<double> out) {
                         DenseVector jp(J.rows());
                         matvec(J, in, std::span<double>(jp));
                         matvec_transpose(J, jp, out);
                         for (std::size_t i = 0; i < out.size(); ++i)
                             out[i] += mu_now * in[i];
                     }};
        DenseVector neg_g(g);
        scale(-1.0, neg_g);
        auto [step, step_report] = cg_solve(gn, neg_g, 1e-12, 20 * N);

        DenseVector trial(x);
        axpy(1.0, step, trial);
        ResidualEval next = fn(trial);
        const double f_trial = dot(next.residual, next.residual);
        if (f_trial < f) {
            x = std::move(trial);
            cur = std::move(next);
            f = f_trial;
            mu = std::max(mu / 10.0, 1e-14);
            rejects_in_a_row = 0;
        } else {
            mu *= 10.0;
            if (++rejects_in_a_row >= 20) break; // stagnation
        }
    }

    w.omega = std::move(x);
    w.report.iterations = outer;
    w.report.converged = converged;
    return w;
}

AdjointState vjp_linear(const DenseMatrix& A, const DenseVector& b, const DenseVector& omega,
                        const DenseVector& upstream, double tol, double damping) {
    const std::size_t m = A.rows(), n = A.cols();
    if (upstream.size() != n) throw InvalidInput("vjp_linear: upstream length mismatch");
    if (omega.size() != n) throw InvalidInput("vjp_linear: omega length mismatch");
    if (b.size() != m) throw InvalidInput("vjp_linear: rhs length mismatch");

    // Form the Gram operator once; the adjoint solve reuses it every CG step.
    DenseMatrix G = gram(A);
    for (std::size_t i = 0; i < n; ++i) G(i, i) += damping;
    LinearMap op{n, [&G](std::span<const double> in, std::span<double> out) {
                     matvec(G, in, out);
                 }};
    auto [lambda, report] = cg_solve(op, upstream, tol, 20 * n);

    AdjointState adj;
    adj.lambda = std::move(lambda);
    adj.cotangent_b = matvec(A, adj.lambda);

    DenseVector r = matvec(A, omega);
    axpy(-1.0, b, r);

    adj.cotangent_A = DenseMatrix(m, n);
    for (std::size_t i = 0; i < m; ++i) {
        double* row = adj.cotangent_A.data().data() + i * n;
        const double ri = r[i];
        const double ali = adj.cotangent_b[i]; // (A lambda)_i
        for (std::size_t j = 0; j < n; ++j)
            row[j] = -(ri * adj.lambda[j] + ali * omega[j]);
    }
    return adj;
}

EqqpAdjoint vjp_eqqp(const DenseMatrix& loss_matrix, const DenseVector& loss_rhs,
                     const DenseMatrix& constraint_matrix, const CombinationWeights& solution,
                     const DenseVector& upstream, double tol) {
    const std::size_t N = loss_matrix.cols();
    if (upstream.size() != N) throw InvalidInput("vjp_eqqp: upstream length mismatch");

    EqqpAdjoint adj;

    if (constraint_matrix.rows() == 0) {
        AdjointState lin =
            vjp_linear(loss_matrix, loss_rhs, solution.omega, upstream, tol, 0.0);
        adj.p = std::move(lin.lambda);
        adj.q.clear();
        adj.cot_loss_matrix = std::move(lin.cotangent_A);
        adj.cot_loss_rhs = std::move(lin.cotangent_b);
        adj.cot_constraint = DenseMatrix(0, N);
        return adj;
    }

    const std::size_t M = constraint_matrix.rows();
    DenseVector rhs(N + M, 0.0);
    std::copy(upstream.begin(), upstream.end(), rhs.begin());

    // The KKT matrix is symmetric, so the transpose solve reuses it; match
    // the forward pass's damping decision.
    bool forward_damped = solution.report.method == "gmres-kkt-damped";
    KktOperator kkt{loss_matrix, constraint_matrix, forward_damped ? 1e-10 : 0.0};
    auto [z, report] = gmres_solve(kkt.map(), rhs, tol, 10 * (N + M));
    if (!report.converged && !forward_damped) {
        KktOperator kkt2{loss_matrix, constraint_matrix, 1e-10};
        auto [z2, report2] = gmres_solve(kkt2.map(), rhs, tol, 10 * (N + M));
        if (report2.converged || report2.final_residual_norm < report.final_residual_norm)
            z = std::move(z2);
    }

    adj.p.assign(z.begin(), z.begin() + N);
    adj.q.assign(z.begin() + N, z.end());

    const DenseVector& omega = solution.omega;
    const DenseVector& mu = solution.multipliers;

    // cot_A = -(mu p^T + q omega^T)
    adj.cot_constraint = DenseMatrix(M, N);
    for (std::size_t i = 0; i < M; ++i) {
        double* row = adj.cot_constraint.data().data() + i * N;
        for (std::size_t j = 0; j < N; ++j)
            row[j] = -(mu[i] * adj.p[j] + adj.q[i] * omega[j]);
    }

    // cot_B = -((B omega - y) p^T + (B p) omega^T); cot_y = B p
    DenseVector r_loss = matvec(loss_matrix, omega);
    axpy(-1.0, loss_rhs, r_loss);
    DenseVector Bp = matvec(loss_matrix, adj.p);
    const std::size_t K = loss_matrix.rows();
    adj.cot_loss_matrix = DenseMatrix(K, N);
    for (std::size_t i = 0; i < K; ++i) {
        double* row = adj.cot_loss_matrix.data().data() + i * N;
        for (std::size_t j = 0; j < N; ++j)
            row[j] = -(r_loss[i] * adj.p[j] + Bp[i] * omega[j]);
    }
    adj.cot_loss_rhs = std::move(Bp);
    return adj;
}

DenseVector vjp_nonlinear_residual(const DenseMatrix& jacobian, const DenseVector& upstream,
                                   double tol, double damping) {
    const std::size_t n = jacobian.cols();
    if (upstream.size() != n)
        throw InvalidInput("vjp_nonlinear_residual: upstream length mismatch");
    DenseMatrix G = gram(jacobian);
    for (std::size_t i = 0; i < n; ++i) G(i, i) += damping;
    LinearMap op{n, [&G](std::span<const double> in, std::span<double> out) {
                     matvec(G, in, out);
                 }};
    auto [p, report] = cg_solve(op, upstream, tol, 20 * n);
    DenseVector rbar = matvec(jacobian, p);
    scale(-1.0, rbar);
    return rbar;
}

double SolutionField::evaluate(Point pt) const {
    EncodedPoint enc = encode_point(problem, phi, pt, encoding);
    DenseVector v = eval(params, enc.input);
    double u;
    if (direct) {
        u = v[0];
    } else {
        u = dot(v, weights.omega);
    }
    if (mollified) u *= mollifier_value(pt);
    return u;
}

DenseVector SolutionField::evaluate(std::span<const Point> pts) const {
    DenseVector out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = evaluate(pts[i]);
    return out;
}

std::pair<DenseVector, CombinationWeights> infer(SolutionField& field,
                                                 std::span<const Point> test_points,
                                                 const InferOptions& opts) {
    if (opts.subset_size == 0) throw InvalidInput("infer: subset_size must be >= 1");
    if (opts.subset_size > test_points.size())
        throw InvalidInput("infer: subset_size exceeds the number of test points");
    if (field.direct) {
        // Soft models have no weights to refit.
        CombinationWeights none;
        return {field.evaluate(test_points), none};
    }

    Rng rng(opts.seed);
    auto idx = rng.sample_without_replacement(test_points.size(), opts.subset_size);
    std::sort(idx.begin(), idx.end());

    SamplePlan plan;
    plan.seed = opts.seed;
    plan.fit_points.reserve(idx.size());
    for (std::size_t i : idx) plan.fit_points.push_back(test_points[i]);

    const FitMode mode = opts.mode.value_or(default_fit_mode(field.problem));
    const EncodingConfig& cfg = field.encoding;
    CombinationWeights fitted;

    switch (field.problem) {
    case Problem::Convection: {
        const std::size_t n_bc = opts.n_icbc / 2;
        const std::size_t n_ic = opts.n_icbc - n_bc;
        if (n_ic > 0)
            plan.icbc_points = sample_points(n_ic, derive_seed(opts.seed, 101), Stratum::Initial);
        if (n_bc > 0) {
            auto bc = sample_points(n_bc, derive_seed(opts.seed, 102), Stratum::Boundary);
            plan.icbc_points.insert(plan.icbc_points.end(), bc.begin(), bc.end());
        }

        auto interior = problem_jets(field.params, field.problem, field.phi, plan.fit_points,
                                     cfg, 1);
        auto icbc = problem_jets(field.params, field.problem, field.phi, plan.icbc_points,
                                 cfg, 0);
        ConstraintSystem sys = assemble_convection(field.phi, plan, interior, icbc);
        if (mode == FitMode::Eqqp && plan.fit_points.size() < field.params.output_size()) {
            fitted = fit_eqqp(sys.icbc_matrix, sys.icbc_rhs, sys.matrix, opts.tol,
                              opts.max_iter);
        } else {
            if (opts.icbc_weight != 1.0) {
                scale(opts.icbc_weight, sys.icbc_matrix.data());
                scale(opts.icbc_weight, sys.icbc_rhs);
            }
            auto [A, b] = sys.stacked();
            fitted = fit_linear(A, b, opts.tol, opts.damping, opts.max_iter);
        }
        break;
    }
    case Problem::Darcy: {
        VectorField grad_nu = coefficient_gradient(field.phi, 1.0);
        auto raw = problem_jets(field.params, field.problem, field.phi, plan.fit_points,
                                cfg, 2);
        ConstraintSystem sys = assemble_darcy_raw(field.phi, grad_nu, plan, raw);
        fitted = fit_linear(sys.matrix, sys.rhs, opts.tol, opts.damping, opts.max_iter);
        break;
    }
    case Problem::Burgers: {
        if (opts.n_icbc > 0)
            plan.icbc_points =
                sample_points(opts.n_icbc, derive_seed(opts.seed, 101), Stratum::Initial);
        auto interior = problem_jets(field.params, field.problem, field.phi, plan.fit_points,
                                     cfg, 2);
        auto ic = problem_jets(field.params, field.problem, field.phi, plan.icbc_points,
                               cfg, 0);
        const double viscosity = 0.01;
        ResidualFn fn = [&](const DenseVector& w) {
            BurgersSystem sys =
                burgers_residual_and_jacobian(w, interior, ic, field.phi, viscosity, plan);
            return ResidualEval{std::move(sys.residual), std::move(sys.jacobian)};
        };
        fitted = fit_nonlinear(fn, DenseVector(field.params.output_size(), 0.0), opts.tol,
                               opts.max_outer);
        break;
    }
    }

    field.weights = fitted;
    return {field.evaluate(test_points), fitted};
}

} // namespace pdecl
