#include "pdecl/training.hpp"

#include "pdecl/errors.hpp"
#include "pdecl/rng.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace pdecl {

namespace {

JetBundle zero_adjoint(std::size_t width, int order) {
    JetBundle adj;
    adj.order = order;
    adj.values.assign(width, 0.0);
    if (order >= 1) adj.first = {DenseVector(width, 0.0), DenseVector(width, 0.0)};
    if (order == 2) adj.second = {DenseVector(width, 0.0), DenseVector(width, 0.0)};
    return adj;
}

// Re-runs the recorded forward pass at a point and pushes a jet adjoint into
// the parameter gradient.
struct AdjointAccumulator {
    const NetworkParams& params;
    Problem problem;
    const ParameterField& phi;
    const EncodingConfig& enc;
    ParamGradient* grad;
    JetTape tape;

    void add(Point pt, int order, const JetBundle& adj) {
        if (!grad) return;
        EncodedPoint e = encode_point(problem, phi, pt, enc);
        eval_jet_recording(params, e.input,
                           order > 0 ? e.seeds : std::vector<DerivSeed>{}, order, tape);
        backprop_from_tape(params, tape, adj, *grad);
    }
};

} // namespace

std::vector<std::size_t> TrainConfig::layer_sizes() const {
    std::vector<std::size_t> sizes{encoded_input_size(problem, encoding)};
    sizes.insert(sizes.end(), hidden_layers.begin(), hidden_layers.end());
    // The hard model's affine N-wide head contracted with omega is an affine
    // scalar map of the last hidden features, so the soft baseline trains
    // that scalar head directly: same trunk, same function class.
    sizes.push_back(soft ? 1 : basis_size);
    return sizes;
}

AdamState make_adam_state(const NetworkParams& params) {
    AdamState s;
    s.m = zero_gradient_like(params);
    s.v = zero_gradient_like(params);
    s.step = 0;
    return s;
}

void adam_update(NetworkParams& params, AdamState& state, const ParamGradient& grad,
                 double lr, double beta1, double beta2, double eps) {
    state.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t l = 0; l < params.layer_count(); ++l) {
        auto upd = [&](DenseVector& theta, const DenseVector& g, DenseVector& m,
                       DenseVector& v) {
            for (std::size_t i = 0; i < theta.size(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        };
        upd(params.weights[l].data(), grad.weights[l].data(), state.m.weights[l].data(),
            state.v.weights[l].data());
        upd(params.biases[l], grad.biases[l], state.m.biases[l], state.v.biases[l]);
    }
}

// ---------------------------------------------------------------------------
// Bilevel loss (hard constraint)
// ---------------------------------------------------------------------------

double hard_loss_and_gradient(const NetworkParams& params, const ParameterField& phi,
                              const TrainConfig& cfg, std::uint64_t plan_seed,
                              ParamGradient* grad) {
    const std::size_t N = params.output_size();
    const FitMode mode = cfg.fit_mode.value_or(default_fit_mode(cfg.problem));
    SamplePlan plan =
        make_sample_plan(cfg.problem, cfg.n_fit, cfg.n_loss, cfg.n_icbc, plan_seed);
    AdjointAccumulator acc{params, cfg.problem, phi, cfg.encoding, grad, {}};

    switch (cfg.problem) {
    case Problem::Convection: {
        const int order = 1;
        auto fit_jets = problem_jets(params, cfg.problem, phi, plan.fit_points,
                                     cfg.encoding, order);
        auto icbc_jets = problem_jets(params, cfg.problem, phi, plan.icbc_points,
                                      cfg.encoding, 0);
        auto loss_jets = problem_jets(params, cfg.problem, phi, plan.loss_points,
                                      cfg.encoding, order);
        ConstraintSystem sys = assemble_convection(phi, plan, fit_jets, icbc_jets);

        SamplePlan loss_plan;
        loss_plan.fit_points = plan.loss_points;
        loss_plan.icbc_points = plan.icbc_points;
        ConstraintSystem outer = assemble_convection(phi, loss_plan, loss_jets, icbc_jets);

        // Weighted least squares on the icbc block: PDE rows carry the
        // basis-derivative scale, so unweighted stacking lets the fit drift
        // off the boundary data.
        const double wic = cfg.icbc_weight;
        if (wic != 1.0) {
            scale(wic, sys.icbc_matrix.data());
            scale(wic, sys.icbc_rhs);
            scale(wic, outer.icbc_matrix.data());
            scale(wic, outer.icbc_rhs);
        }
        auto [Ap, bp] = outer.stacked();

        CombinationWeights w;
        DenseMatrix A;
        DenseVector b;
        if (mode == FitMode::Eqqp) {
            if (plan.fit_points.size() >= N)
                throw ConfigError("eqqp fit requires n_fit < basis size");
            w = fit_eqqp(sys.icbc_matrix, sys.icbc_rhs, sys.matrix, cfg.solver_tol,
                         cfg.solver_max_iter);
        } else {
            std::tie(A, b) = sys.stacked();
            w = fit_linear(A, b, cfg.solver_tol, cfg.damping, cfg.solver_max_iter);
        }
        if (!all_finite(w.omega))
            throw SolverFailure("convection fit produced non-finite weights");

        DenseVector rp = matvec(Ap, w.omega);
        axpy(-1.0, bp, rp);
        const double rows = static_cast<double>(Ap.rows());
        const double loss = dot(rp, rp) / rows;
        if (!grad) return loss;

        DenseVector upstream = matvec_transpose(Ap, rp);
        scale(2.0 / rows, upstream);

        // Implicit path: cotangents of the inner system's rows.
        const std::size_t n_fit = plan.fit_points.size();
        const std::size_t n_icbc = plan.icbc_points.size();
        DenseMatrix cot_interior, cot_icbc;
        if (mode == FitMode::Eqqp) {
            EqqpAdjoint ea = vjp_eqqp(sys.icbc_matrix, sys.icbc_rhs, sys.matrix, w, upstream,
                                      cfg.solver_tol);
            cot_interior = std::move(ea.cot_constraint);
            cot_icbc = std::move(ea.cot_loss_matrix);
        } else {
            AdjointState la = vjp_linear(A, b, w.omega, upstream, cfg.solver_tol, cfg.damping);
            cot_interior = DenseMatrix(n_fit, N);
            cot_icbc = DenseMatrix(n_icbc, N);
            for (std::size_t j = 0; j < n_fit; ++j)
                std::copy_n(la.cotangent_A.row(j).begin(), N, cot_interior.row(j).begin());
            for (std::size_t k = 0; k < n_icbc; ++k)
                std::copy_n(la.cotangent_A.row(n_fit + k).begin(), N,
                            cot_icbc.row(k).begin());
        }

        for (std::size_t j = 0; j < n_fit; ++j) {
            JetBundle adj = zero_adjoint(N, order);
            convection_row(phi.value_at(plan.fit_points[j].x))
                .accumulate_adjoint(cot_interior.row(j), adj);
            acc.add(plan.fit_points[j], order, adj);
        }

        // Explicit path through the outer rows: cot_A' = (2/rows) r' w^T.
        DenseVector tmp(N);
        for (std::size_t j = 0; j < plan.loss_points.size(); ++j) {
            const double c = 2.0 * rp[j] / rows;
            for (std::size_t i = 0; i < N; ++i) tmp[i] = c * w.omega[i];
            JetBundle adj = zero_adjoint(N, order);
            convection_row(phi.value_at(plan.loss_points[j].x)).accumulate_adjoint(tmp, adj);
            acc.add(plan.loss_points[j], order, adj);
        }
        // icbc points sit in both systems; merge their two cotangents. The
        // assembled rows are wic * value, so the jet adjoint scales the same
        // way.
        RowFunctional icbc_row = value_row();
        icbc_row.value = wic;
        for (std::size_t k = 0; k < n_icbc; ++k) {
            JetBundle adj = zero_adjoint(N, 0);
            icbc_row.accumulate_adjoint(cot_icbc.row(k), adj);
            const double c = 2.0 * rp[plan.loss_points.size() + k] / rows;
            for (std::size_t i = 0; i < N; ++i) tmp[i] = c * w.omega[i];
            icbc_row.accumulate_adjoint(tmp, adj);
            acc.add(plan.icbc_points[k], 0, adj);
        }
        return loss;
    }

    case Problem::Darcy: {
        const int order = 2;
        VectorField grad_nu = coefficient_gradient(phi, 1.0);
        auto fit_jets = problem_jets(params, cfg.problem, phi, plan.fit_points,
                                     cfg.encoding, order);
        auto loss_jets = problem_jets(params, cfg.problem, phi, plan.loss_points,
                                      cfg.encoding, order);
        ConstraintSystem sys = assemble_darcy_raw(phi, grad_nu, plan, fit_jets);

        SamplePlan loss_plan;
        loss_plan.fit_points = plan.loss_points;
        ConstraintSystem outer = assemble_darcy_raw(phi, grad_nu, loss_plan, loss_jets);

        CombinationWeights w = fit_linear(sys.matrix, sys.rhs, cfg.solver_tol, cfg.damping,
                                          cfg.solver_max_iter);
        if (!all_finite(w.omega)) throw SolverFailure("darcy fit produced non-finite weights");

        DenseVector rp = matvec(outer.matrix, w.omega);
        axpy(-1.0, outer.rhs, rp);
        const double rows = static_cast<double>(outer.matrix.rows());
        const double loss = dot(rp, rp) / rows;
        if (!grad) return loss;

        DenseVector upstream = matvec_transpose(outer.matrix, rp);
        scale(2.0 / rows, upstream);
        AdjointState la =
            vjp_linear(sys.matrix, sys.rhs, w.omega, upstream, cfg.solver_tol, cfg.damping);

        auto row_at = [&](Point p) {
            return darcy_row_raw(phi.value_at(p.x, p.y),
                                 grad_nu.x_component.value_at(p.x, p.y),
                                 grad_nu.y_component.value_at(p.x, p.y), p);
        };
        for (std::size_t j = 0; j < plan.fit_points.size(); ++j) {
            JetBundle adj = zero_adjoint(N, order);
            row_at(plan.fit_points[j]).accumulate_adjoint(la.cotangent_A.row(j), adj);
            acc.add(plan.fit_points[j], order, adj);
        }
        DenseVector tmp(N);
        for (std::size_t j = 0; j < plan.loss_points.size(); ++j) {
            const double c = 2.0 * rp[j] / rows;
            for (std::size_t i = 0; i < N; ++i) tmp[i] = c * w.omega[i];
            JetBundle adj = zero_adjoint(N, order);
            row_at(plan.loss_points[j]).accumulate_adjoint(tmp, adj);
            acc.add(plan.loss_points[j], order, adj);
        }
        return loss;
    }

    case Problem::Burgers: {
        const int order = 2;
        auto fit_jets = problem_jets(params, cfg.problem, phi, plan.fit_points,
                                     cfg.encoding, order);
        auto ic_jets = problem_jets(params, cfg.problem, phi, plan.icbc_points,
                                    cfg.encoding, 0);
        auto loss_jets = problem_jets(params, cfg.problem, phi, plan.loss_points,
                                      cfg.encoding, order);

        const double visc = cfg.burgers_viscosity;
        ResidualFn fn = [&](const DenseVector& omega) {
            BurgersSystem s =
                burgers_residual_and_jacobian(omega, fit_jets, ic_jets, phi, visc, plan);
            return ResidualEval{std::move(s.residual), std::move(s.jacobian)};
        };
        CombinationWeights w =
            fit_nonlinear(fn, DenseVector(N, 0.0), cfg.solver_tol, cfg.lm_max_outer);
        if (!all_finite(w.omega))
            throw SolverFailure("burgers fit produced non-finite weights");

        SamplePlan loss_plan;
        loss_plan.fit_points = plan.loss_points;
        BurgersSystem outer =
            burgers_residual_and_jacobian(w.omega, loss_jets, {}, phi, visc, loss_plan);
        const double rows = static_cast<double>(outer.residual.size());
        const double loss = dot(outer.residual, outer.residual) / rows;
        if (!grad) return loss;

        DenseVector upstream = matvec_transpose(outer.jacobian, outer.residual);
        scale(2.0 / rows, upstream);

        BurgersSystem fit_sys =
            burgers_residual_and_jacobian(w.omega, fit_jets, ic_jets, phi, visc, plan);
        DenseVector rbar =
            vjp_nonlinear_residual(fit_sys.jacobian, upstream, cfg.solver_tol, cfg.damping);

        auto interior_adjoint = [&](const JetBundle& jet, double rb, JetBundle& adj) {
            const double u = dot(jet.values, w.omega);
            const double ux = dot(jet.first[0], w.omega);
            for (std::size_t i = 0; i < N; ++i) {
                adj.values[i] += rb * ux * w.omega[i];
                adj.first[0][i] += rb * u * w.omega[i];
                adj.first[1][i] += rb * w.omega[i];
                adj.second[0][i] += -visc * rb * w.omega[i];
            }
        };

        for (std::size_t j = 0; j < plan.fit_points.size(); ++j) {
            JetBundle adj = zero_adjoint(N, order);
            interior_adjoint(fit_jets[j], rbar[j], adj);
            acc.add(plan.fit_points[j], order, adj);
        }
        for (std::size_t k = 0; k < plan.icbc_points.size(); ++k) {
            const double rb = rbar[plan.fit_points.size() + k];
            JetBundle adj = zero_adjoint(N, 0);
            for (std::size_t i = 0; i < N; ++i) adj.values[i] += rb * w.omega[i];
            acc.add(plan.icbc_points[k], 0, adj);
        }
        for (std::size_t j = 0; j < plan.loss_points.size(); ++j) {
            const double rb = 2.0 * outer.residual[j] / rows;
            JetBundle adj = zero_adjoint(N, order);
            interior_adjoint(loss_jets[j], rb, adj);
            acc.add(plan.loss_points[j], order, adj);
        }
        return loss;
    }
    }
    throw ConfigError("hard_loss_and_gradient: unknown problem");
}

// ---------------------------------------------------------------------------
// Soft baseline loss
// ---------------------------------------------------------------------------

double soft_loss_and_gradient(const NetworkParams& params, const ParameterField& phi,
                              const TrainConfig& cfg, std::uint64_t plan_seed,
                              ParamGradient* grad) {
    if (params.output_size() != 1)
        throw ConfigError("soft_loss_and_gradient: expected a scalar-output network");
    SamplePlan plan =
        make_sample_plan(cfg.problem, cfg.n_fit, cfg.n_loss, cfg.n_icbc, plan_seed);
    AdjointAccumulator acc{params, cfg.problem, phi, cfg.encoding, grad, {}};

    // The soft model sees residuals at every interior point (fit + loss).
    std::vector<Point> interior = plan.fit_points;
    interior.insert(interior.end(), plan.loss_points.begin(), plan.loss_points.end());
    const double n_int = static_cast<double>(interior.size());
    const int order = operator_jet_order(cfg.problem);

    VectorField grad_nu;
    if (cfg.problem == Problem::Darcy) grad_nu = coefficient_gradient(phi, 1.0);

    double loss_pde = 0.0;
    JetTape tape;
    std::vector<JetBundle> interior_jets;
    interior_jets.reserve(interior.size());
    for (const Point& pt : interior) {
        EncodedPoint e = encode_point(cfg.problem, phi, pt, cfg.encoding);
        interior_jets.push_back(eval_jet_recording(params, e.input, e.seeds, order, tape));
    }

    std::vector<double> rho(interior.size(), 0.0);
    for (std::size_t j = 0; j < interior.size(); ++j) {
        const JetBundle& jet = interior_jets[j];
        const Point pt = interior[j];
        switch (cfg.problem) {
        case Problem::Convection:
            rho[j] = jet.first[1][0] + phi.value_at(pt.x) * jet.first[0][0];
            break;
        case Problem::Darcy:
            rho[j] = darcy_row_raw(phi.value_at(pt.x, pt.y),
                                   grad_nu.x_component.value_at(pt.x, pt.y),
                                   grad_nu.y_component.value_at(pt.x, pt.y), pt)
                         .apply(jet, 0) -
                     1.0;
            break;
        case Problem::Burgers:
            rho[j] = jet.first[1][0] + jet.values[0] * jet.first[0][0] -
                     cfg.burgers_viscosity * jet.second[0][0];
            break;
        }
        loss_pde += rho[j] * rho[j];
    }
    loss_pde /= n_int;

    // icbc regression (empty for Darcy; the mollifier enforces its boundary).
    double loss_icbc = 0.0;
    std::vector<double> icbc_err(plan.icbc_points.size(), 0.0);
    std::vector<JetBundle> icbc_jets;
    icbc_jets.reserve(plan.icbc_points.size());
    for (std::size_t k = 0; k < plan.icbc_points.size(); ++k) {
        const Point pt = plan.icbc_points[k];
        EncodedPoint e = encode_point(cfg.problem, phi, pt, cfg.encoding);
        icbc_jets.push_back(eval_jet_recording(params, e.input, {}, 0, tape));
        double target = 0.0;
        if (cfg.problem == Problem::Convection)
            target = pt.y == 0.0 ? convection_initial(pt.x) : convection_boundary(pt.y);
        else
            target = phi.value_at(pt.x); // Burgers initial condition
        icbc_err[k] = icbc_jets[k].values[0] - target;
        loss_icbc += icbc_err[k] * icbc_err[k];
    }
    if (!plan.icbc_points.empty()) loss_icbc /= static_cast<double>(plan.icbc_points.size());

    const double loss = loss_pde + loss_icbc;
    if (!grad) return loss;

    for (std::size_t j = 0; j < interior.size(); ++j) {
        const JetBundle& jet = interior_jets[j];
        const Point pt = interior[j];
        const double c = 2.0 * rho[j] / n_int;
        JetBundle adj = zero_adjoint(1, order);
        switch (cfg.problem) {
        case Problem::Convection:
            adj.first[1][0] = c;
            adj.first[0][0] = c * phi.value_at(pt.x);
            break;
        case Problem::Darcy: {
            const double cot[1] = {c};
            darcy_row_raw(phi.value_at(pt.x, pt.y),
                          grad_nu.x_component.value_at(pt.x, pt.y),
                          grad_nu.y_component.value_at(pt.x, pt.y), pt)
                .accumulate_adjoint(cot, adj);
            break;
        }
        case Problem::Burgers:
            adj.values[0] = c * jet.first[0][0];
            adj.first[0][0] = c * jet.values[0];
            adj.first[1][0] = c;
            adj.second[0][0] = -c * cfg.burgers_viscosity;
            break;
        }
        acc.add(pt, order, adj);
    }
    for (std::size_t k = 0; k < plan.icbc_points.size(); ++k) {
        JetBundle adj = zero_adjoint(1, 0);
        adj.values[0] = 2.0 * icbc_err[k] / static_cast<double>(plan.icbc_points.size());
        acc.add(plan.icbc_points[k], 0, adj);
    }
    return loss;
}

// ---------------------------------------------------------------------------
// Steps and the training loop
// ---------------------------------------------------------------------------

namespace {

double batched_step(NetworkParams& params, AdamState& adam,
                    std::span<const ParameterField> phi_batch, const TrainConfig& cfg,
                    std::uint64_t step_seed, bool soft) {
    if (phi_batch.empty()) throw InvalidInput("train step: empty batch");

    ParamGradient grad = zero_gradient_like(params);
    double loss_sum = 0.0;
    std::size_t ok = 0;
    for (std::size_t b = 0; b < phi_batch.size(); ++b) {
        const std::uint64_t plan_seed = derive_seed(step_seed, b);
        try {
            ParamGradient g = zero_gradient_like(params);
            const double loss =
                soft ? soft_loss_and_gradient(params, phi_batch[b], cfg, plan_seed, &g)
                     : hard_loss_and_gradient(params, phi_batch[b], cfg, plan_seed, &g);
            if (!std::isfinite(loss)) throw SolverFailure("non-finite loss");
            gradient_axpy(1.0, g, grad);
            loss_sum += loss;
            ++ok;
        } catch (const Error&) {
            // Skip this instance; the step fails only if every one failed.
        }
    }
    if (ok == 0) throw SolverFailure("train step: every instance in the batch failed");

    gradient_scale(1.0 / static_cast<double>(ok), grad);
    if (cfg.learning_rate > 0.0)
        adam_update(params, adam, grad, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2,
                    cfg.adam_eps);
    return loss_sum / static_cast<double>(ok);
}

} // namespace

double hard_train_step(NetworkParams& params, AdamState& adam,
                       std::span<const ParameterField> phi_batch, const TrainConfig& cfg,
                       std::uint64_t step_seed) {
    return batched_step(params, adam, phi_batch, cfg, step_seed, false);
}

double soft_train_step(NetworkParams& params, AdamState& adam,
                       std::span<const ParameterField> phi_batch, const TrainConfig& cfg,
                       std::uint64_t step_seed) {
    return batched_step(params, adam, phi_batch, cfg, step_seed, true);
}

GridSolution compute_oracle(Problem problem, const ParameterField& phi, std::size_t n1,
                            std::size_t n2, double burgers_viscosity) {
    switch (problem) {
    case Problem::Convection: return lax_wendroff_convection(phi, n1, n2);
    case Problem::Darcy:
        if (n1 != n2) throw InvalidInput("compute_oracle: Darcy grid must be square");
        return darcy_fd_solve(phi, n1);
    case Problem::Burgers: return burgers_reference(phi, burgers_viscosity, n1, n2);
    }
    throw ConfigError("compute_oracle: unknown problem");
}

TrainResult train(const TrainConfig& cfg, const Dataset& train_data, const Dataset* test_data,
                  const TrainState* resume, const TrainCallbacks& callbacks) {
    if (train_data.split != Split::Train)
        throw InvalidInput("train: dataset is not a train split");
    if (train_data.size() == 0) throw InvalidInput("train: empty dataset");
    if (cfg.fit_mode == FitMode::Eqqp && cfg.n_fit >= cfg.basis_size)
        throw ConfigError("train: eqqp mode requires n_fit < basis size");

    TrainResult result;
    if (resume) {
        result.params = resume->params;
        result.adam = resume->adam;
    } else {
        result.params = init_params(cfg.layer_sizes(), derive_seed(cfg.seed, 1),
                                    Activation::Tanh, cfg.first_layer_scale);
        result.adam = make_adam_state(result.params);
    }
    const std::size_t first_step = resume ? resume->next_step : 0;

    // Precompute test oracles once.
    std::vector<GridSolution> oracles;
    if (test_data && cfg.eval_every > 0) {
        oracles.reserve(test_data->size());
        for (const auto& phi : test_data->parameter_fields)
            oracles.push_back(compute_oracle(cfg.problem, phi, cfg.grid_n1, cfg.grid_n2,
                                             cfg.burgers_viscosity));
    }

    const std::size_t steps_per_epoch =
        std::max<std::size_t>(1, train_data.size() / std::max<std::size_t>(1, cfg.batch_size));

    // Per-epoch instance order, recomputable from the step index alone so
    // interrupted runs resume on the exact same schedule.
    std::size_t cached_epoch = SIZE_MAX;
    std::vector<std::size_t> order;
    auto batch_for_step = [&](std::size_t step) {
        const std::size_t epoch = step / steps_per_epoch;
        if (epoch != cached_epoch) {
            Rng rng(derive_seed(cfg.seed, 5000 + epoch));
            order = rng.sample_without_replacement(train_data.size(), train_data.size());
            cached_epoch = epoch;
        }
        const std::size_t pos = (step % steps_per_epoch) * cfg.batch_size;
        std::vector<ParameterField> batch;
        for (std::size_t b = 0; b < cfg.batch_size && pos + b < order.size(); ++b)
            batch.push_back(train_data.parameter_fields[order[pos + b]]);
        return batch;
    };

    auto maybe_eval = [&](std::size_t step_done) -> std::optional<Metrics> {
        if (!test_data || cfg.eval_every == 0 || step_done % cfg.eval_every != 0)
            return std::nullopt;
        Model model{result.params, cfg.problem, cfg.soft, cfg.encoding};
        InferOptions opts;
        opts.subset_size = std::min(cfg.infer_subset, cfg.grid_n1 * cfg.grid_n2);
        opts.seed = derive_seed(cfg.seed, 9000 + step_done);
        opts.tol = cfg.solver_tol;
        opts.damping = cfg.damping;
        opts.max_iter = cfg.solver_max_iter;
        opts.n_icbc = cfg.infer_icbc;
        opts.icbc_weight = cfg.icbc_weight;
        opts.max_outer = cfg.lm_max_outer;
        Metrics m = evaluate(model, *test_data, oracles, opts, cfg.grid_n1, cfg.grid_n2);
        m.step = step_done;
        return m;
    };

    std::size_t consecutive_failures = 0;
    for (std::size_t step = first_step; step < cfg.steps; ++step) {
        auto batch = batch_for_step(step);
        const std::uint64_t step_seed = derive_seed(cfg.seed, 1000000 + step);
        HistoryEntry entry;
        entry.step = step + 1;
        try {
            entry.loss = cfg.soft ? soft_train_step(result.params, result.adam, batch, cfg,
                                                    step_seed)
                                  : hard_train_step(result.params, result.adam, batch, cfg,
                                                    step_seed);
            consecutive_failures = 0;
        } catch (const Error&) {
            if (++consecutive_failures >= 3) throw;
            continue;
        }
        entry.metrics = maybe_eval(step + 1);
        result.history.entries.push_back(entry);
        if (callbacks.on_entry)
            callbacks.on_entry(TrainState{result.params, result.adam, step + 1}, entry);
        if (entry.metrics && callbacks.on_checkpoint)
            callbacks.on_checkpoint(TrainState{result.params, result.adam, step + 1});
    }
    if (callbacks.on_checkpoint)
        callbacks.on_checkpoint(TrainState{result.params, result.adam, cfg.steps});
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation and studies
// ---------------------------------------------------------------------------

std::size_t worker_count() {
    if (const char* env = std::getenv("PDECL_THREADS")) {
        const long v = std::atol(env);
        if (v >= 1) return static_cast<std::size_t>(v);
    }
    return 1;
}

GridSolution model_on_grid(const Model& model, const ParameterField& phi,
                           const InferOptions& infer_opts, std::size_t n1, std::size_t n2) {
    SolutionField field{model.params, {}, model.problem, phi,
                        model.problem == Problem::Darcy, model.soft, model.encoding};
    auto pts = grid_points(model.problem, n1, n2);
    InferOptions opts = infer_opts;
    opts.subset_size = std::min(opts.subset_size, pts.size());
    auto [values, weights] = infer(field, pts, opts);

    GridSolution sol;
    sol.n1 = n1;
    sol.n2 = n2;
    sol.problem = model.problem;
    sol.provenance = Provenance::Model;
    sol.values = std::move(values);
    return sol;
}

Metrics evaluate(const Model& model, const Dataset& test_data,
                 std::span<const GridSolution> oracle_solutions, const InferOptions& infer_opts,
                 std::size_t grid_n1, std::size_t grid_n2) {
    if (oracle_solutions.size() != test_data.size())
        throw InvalidInput("evaluate: need one oracle solution per test instance");

    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t m = test_data.size();
    Metrics metrics;
    metrics.per_instance_l2.assign(m, 0.0);
    metrics.per_instance_residual.assign(m, 0.0);

    auto eval_instance = [&](std::size_t i) {
        const ParameterField& phi = test_data.parameter_fields[i];
        InferOptions opts = infer_opts;
        opts.seed = derive_seed(infer_opts.seed, i);
        GridSolution pred = model_on_grid(model, phi, opts, grid_n1, grid_n2);
        metrics.per_instance_l2[i] = relative_l2(pred, oracle_solutions[i]);
        metrics.per_instance_residual[i] = residual_on_grid(pred, model.problem, phi);
    };

    const std::size_t workers = std::min(worker_count(), m);
    if (workers <= 1) {
        for (std::size_t i = 0; i < m; ++i) eval_instance(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < m; i = next.fetch_add(1))
                    eval_instance(i);
            });
        for (auto& t : pool) t.join();
    }

    auto mean_std = [](const std::vector<double>& v, double& mean, double& std_out) {
        mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        std_out = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    };
    mean_std(metrics.per_instance_l2, metrics.relative_l2_mean, metrics.relative_l2_std);
    mean_std(metrics.per_instance_residual, metrics.residual_mean, metrics.residual_std);
    metrics.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return metrics;
}

FittedUnfittedReport fitted_vs_unfitted_histogram(const Model& model,
                                                  const ParameterField& phi,
                                                  const GridSolution& oracle,
                                                  std::size_t n_fit_points,
                                                  std::uint64_t seed,
                                                  const InferOptions& infer_opts) {
    const std::size_t n_grid = oracle.n1 * oracle.n2;
    if (n_fit_points > n_grid)
        throw InvalidInput("fitted_vs_unfitted: more fit points than grid points");

    SolutionField field{model.params, {}, model.problem, phi,
                        model.problem == Problem::Darcy, model.soft, model.encoding};
    auto pts = grid_points(model.problem, oracle.n1, oracle.n2);
    InferOptions opts = infer_opts;
    opts.subset_size = n_fit_points;
    opts.seed = seed;
    auto [values, weights] = infer(field, pts, opts);

    std::vector<bool> fitted(n_grid, false);
    {
        Rng rng(seed);
        for (std::size_t i : rng.sample_without_replacement(n_grid, n_fit_points))
            fitted[i] = true;
    }

    FittedUnfittedReport report;
    for (std::size_t i = 0; i < n_grid; ++i) {
        const double err = std::abs(values[i] - oracle.values[i]);
        (fitted[i] ? report.fitted_errors : report.unfitted_errors).push_back(err);
    }

    auto median = [](std::vector<double> v) {
        if (v.empty()) return 0.0;
        std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
        return v[v.size() / 2];
    };
    report.median_fitted = median(report.fitted_errors);
    report.median_unfitted = median(report.unfitted_errors);

    double max_err = 0.0;
    for (double e : report.fitted_errors) max_err = std::max(max_err, e);
    for (double e : report.unfitted_errors) max_err = std::max(max_err, e);
    if (max_err == 0.0) max_err = 1.0;
    const std::size_t n_bins = 40;
    report.bin_edges.resize(n_bins + 1);
    for (std::size_t b = 0; b <= n_bins; ++b)
        report.bin_edges[b] = max_err * static_cast<double>(b) / static_cast<double>(n_bins);
    report.fitted_bins.assign(n_bins, 0);
    report.unfitted_bins.assign(n_bins, 0);
    auto bin_of = [&](double e) {
        auto b = static_cast<std::size_t>(e / max_err * static_cast<double>(n_bins));
        return std::min(b, n_bins - 1);
    };
    for (double e : report.fitted_errors) report.fitted_bins[bin_of(e)]++;
    for (double e : report.unfitted_errors) report.unfitted_bins[bin_of(e)]++;
    return report;
}

std::vector<AblationEntry> interpolation_ablation(
    const Model& model, const ParameterField& phi, std::size_t fit_count,
    std::span<const std::pair<std::size_t, std::size_t>> grids, std::uint64_t seed,
    const InferOptions& infer_opts) {
    if (grids.empty()) throw InvalidInput("interpolation_ablation: no query grids");

    // Fit on points sampled from the first (base) grid.
    const auto [base_n1, base_n2] = grids[0];
    SolutionField field{model.params, {}, model.problem, phi,
                        model.problem == Problem::Darcy, model.soft, model.encoding};
    auto base_pts = grid_points(model.problem, base_n1, base_n2);
    InferOptions opts = infer_opts;
    opts.subset_size = std::min(fit_count, base_pts.size());
    opts.seed = seed;
    auto [base_values, weights] = infer(field, base_pts, opts);

    std::vector<Point> fit_pts;
    std::vector<double> fit_vals;
    {
        Rng rng(seed);
        for (std::size_t i : rng.sample_without_replacement(base_pts.size(), opts.subset_size)) {
            fit_pts.push_back(base_pts[i]);
            fit_vals.push_back(base_values[i]);
        }
    }

    std::vector<AblationEntry> entries;
    for (const auto& [n1, n2] : grids) {
        GridSolution oracle = compute_oracle(model.problem, phi, n1, n2);
        GridSolution interp = cubic_interpolate(fit_pts, fit_vals, model.problem, n1, n2);

        GridSolution pred;
        pred.n1 = n1;
        pred.n2 = n2;
        pred.problem = model.problem;
        pred.provenance = Provenance::Model;
        pred.values = field.evaluate(grid_points(model.problem, n1, n2));

        AblationEntry e;
        e.n1 = n1;
        e.n2 = n2;
        e.model_rel_l2 = relative_l2(pred, oracle);
        e.interpolation_rel_l2 = relative_l2(interp, oracle);
        entries.push_back(e);
    }
    return entries;
}

double time_fit_linear(std::size_t n, std::size_t basis_size, std::uint64_t seed) {
    Rng rng(derive_seed(seed, n * 131 + basis_size));
    DenseMatrix A(n, basis_size);
    for (double& v : A.data()) v = 0.3 * rng.normal();
    for (std::size_t i = 0; i < std::min(n, basis_size); ++i) A(i, i) += 3.0;
    DenseVector b(n);
    for (double& v : b) v = rng.normal();

    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        auto w = fit_linear(A, b, 1e-8);
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!all_finite(w.omega)) throw SolverFailure("time_fit_linear: bad solve");
        best = std::min(best, dt);
    }
    return best;
}

double time_lax_wendroff(std::size_t nx, std::size_t nt) {
    ParameterField beta;
    beta.kind = FieldKind::Wavespeed;
    beta.nx = 16;
    beta.ny = 1;
    beta.values.assign(16, 1.5);

    double best = 1e300;
    for (int rep = 0; rep < 3; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        auto sol = lax_wendroff_convection(beta, nx, nt);
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!all_finite(sol.values)) throw SolverFailure("time_lax_wendroff: bad solve");
        best = std::min(best, dt);
    }
    return best;
}

std::vector<ComplexityEntry> complexity_report(
    std::size_t n, std::size_t basis_size,
    std::span<const std::pair<std::size_t, std::size_t>> grid_shapes) {
    std::vector<ComplexityEntry> entries;
    const double big = static_cast<double>(std::max(n, basis_size));
    const double small = static_cast<double>(std::min(n, basis_size));
    const double pdecl_ops = big * big * small;
    const double fit_seconds = time_fit_linear(n, basis_size);

    for (const auto& [n1, n2] : grid_shapes) {
        ComplexityEntry e;
        e.grid_n1 = n1;
        e.grid_n2 = n2;
        e.pdecl_ops = pdecl_ops;
        e.solver_ops = static_cast<double>(n1) * static_cast<double>(n2);
        e.verdict = pdecl_ops < e.solver_ops ? "pde-cl"
                    : pdecl_ops > e.solver_ops ? "solver"
                                               : "equal";
        e.measured_fit_seconds = fit_seconds;
        e.measured_solver_seconds = time_lax_wendroff(n1, n2);
        entries.push_back(e);
    }
    return entries;
}

} // namespace pdecl
