#include "pdecl/training.hpp"
#include "pdecl/errors.hpp"
#include "pdecl/rng.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <cstring>

using namespace pdecl;
using namespace testsup;

namespace {

ParameterField toy_beta(std::uint64_t seed) {
    GrfSpec spec;
    spec.nx = 32;
    spec.seed = seed;
    return make_beta(sample_grf_1d(spec));
}

ParameterField toy_nu(std::uint64_t seed) {
    GrfSpec spec;
    spec.dimension = 2;
    spec.nx = spec.ny = 9;
    spec.seed = seed;
    return sample_darcy_coefficients(spec, 12.0, 3.0);
}

ParameterField toy_u0(std::uint64_t seed) {
    GrfSpec spec;
    spec.nx = 32;
    spec.seed = seed;
    return sample_burgers_ic(spec);
}

// Finite-difference check of d(loss)/d(theta) for one problem/mode setup.
double bilevel_fd_gap(const TrainConfig& cfg, const ParameterField& phi,
                      std::uint64_t plan_seed, double fd_step) {
    NetworkParams params = init_params(cfg.layer_sizes(), derive_seed(cfg.seed, 1),
                                       Activation::Tanh, cfg.first_layer_scale);
    REQUIRE(param_count(params) <= 100);

    ParamGradient grad = zero_gradient_like(params);
    const bool soft = cfg.soft;
    (void)(soft ? soft_loss_and_gradient(params, phi, cfg, plan_seed, &grad)
                : hard_loss_and_gradient(params, phi, cfg, plan_seed, &grad));

    NetworkParams probe = params;
    auto loss_at = [&](const DenseVector& theta) {
        assign_params(probe, theta);
        return soft ? soft_loss_and_gradient(probe, phi, cfg, plan_seed, nullptr)
                    : hard_loss_and_gradient(probe, phi, cfg, plan_seed, nullptr);
    };
    return finite_difference_check(loss_at, flatten_gradient(grad), flatten_params(params),
                                   fd_step);
}

// Toy setups under 100 parameters. The trunk width matches the basis size so
// the inner (damped) fit stays well-conditioned: a narrower trunk makes the
// Gram matrix rank-deficient and the finite-difference probe of the bilevel
// loss picks up 1/damping-scale curvature noise.
TrainConfig toy_config(Problem problem) {
    TrainConfig cfg;
    cfg.problem = problem;
    cfg.basis_size = problem == Problem::Darcy ? 7 : 8;
    cfg.hidden_layers = {problem == Problem::Darcy ? std::size_t{7} : std::size_t{8}};
    cfg.n_fit = 5;
    cfg.n_loss = 6;
    cfg.n_icbc = 4;
    cfg.solver_tol = 1e-13;
    cfg.damping = 1e-7;
    cfg.solver_max_iter = 20000;
    cfg.first_layer_scale = 5.0;
    cfg.seed = 42;
    return cfg;
}

} // namespace

TEST_CASE("layer sizes: hard models get the basis head, soft models a scalar head") {
    TrainConfig cfg;
    cfg.problem = Problem::Convection;
    cfg.basis_size = 32;
    cfg.hidden_layers = {16, 16};
    CHECK(cfg.layer_sizes() == std::vector<std::size_t>{2, 16, 16, 32});
    cfg.soft = true;
    CHECK(cfg.layer_sizes() == std::vector<std::size_t>{2, 16, 16, 1});

    cfg.problem = Problem::Burgers;
    cfg.soft = false;
    cfg.encoding.burgers_cond_samples = 8;
    CHECK(cfg.layer_sizes().front() == 3 + 8);
}

TEST_CASE("bilevel gradient matches finite differences: convection, linear mode") {
    TrainConfig cfg = toy_config(Problem::Convection);
    const double gap = bilevel_fd_gap(cfg, toy_beta(3), 77, 1e-5);
    CHECK(gap < 1e-4);
}

TEST_CASE("bilevel gradient matches finite differences: convection, eqqp mode") {
    TrainConfig cfg = toy_config(Problem::Convection);
    cfg.fit_mode = FitMode::Eqqp;
    const double gap = bilevel_fd_gap(cfg, toy_beta(4), 78, 1e-5);
    CHECK(gap < 1e-4);
}

TEST_CASE("bilevel gradient matches finite differences: darcy") {
    TrainConfig cfg = toy_config(Problem::Darcy);
    cfg.n_icbc = 0;
    // Darcy operator rows are O(100), so the Gram matrix is ~1e5 in scale;
    // damping is raised to keep eps * cond of the adjoint solve below the
    // 1e-4 comparison level (still ~1e-10 relative to the Gram scale).
    cfg.damping = 3e-5;
    const double gap = bilevel_fd_gap(cfg, toy_nu(5), 79, 1e-5);
    CHECK(gap < 1e-4);
}

TEST_CASE("soft gradient matches finite differences") {
    TrainConfig cfg = toy_config(Problem::Convection);
    cfg.soft = true;
    const double gap = bilevel_fd_gap(cfg, toy_beta(6), 80, 1e-5);
    CHECK(gap < 1e-4);

    TrainConfig darcy = toy_config(Problem::Darcy);
    darcy.soft = true;
    darcy.n_icbc = 0;
    CHECK(bilevel_fd_gap(darcy, toy_nu(7), 81, 1e-5) < 1e-4);

    TrainConfig burgers = toy_config(Problem::Burgers);
    burgers.soft = true;
    burgers.encoding.burgers_cond_samples = 4;
    CHECK(bilevel_fd_gap(burgers, toy_u0(8), 82, 1e-5) < 1e-4);
}

TEST_CASE("burgers hard loss is finite and trains downward") {
    TrainConfig cfg = toy_config(Problem::Burgers);
    cfg.encoding.burgers_cond_samples = 4;
    cfg.basis_size = 12;
    cfg.n_fit = 8;
    cfg.n_loss = 8;
    cfg.n_icbc = 6;
    cfg.solver_tol = 1e-10;
    cfg.lm_max_outer = 60;
    cfg.learning_rate = 3e-3;

    NetworkParams params = init_params(cfg.layer_sizes(), 3);
    AdamState adam = make_adam_state(params);
    ParameterField u0 = toy_u0(9);
    std::vector<ParameterField> batch{u0};

    double first = 0.0, last = 0.0;
    for (int step = 0; step < 40; ++step) {
        const double loss =
            hard_train_step(params, adam, batch, cfg, derive_seed(7, 500)); // fixed plan
        if (step == 0) first = loss;
        last = loss;
        REQUIRE(std::isfinite(loss));
    }
    CHECK(last < first);
}

TEST_CASE("zero learning rate leaves parameters unchanged but reports the loss") {
    TrainConfig cfg = toy_config(Problem::Convection);
    cfg.learning_rate = 0.0;
    NetworkParams params = init_params(cfg.layer_sizes(), 11);
    DenseVector before = flatten_params(params);
    AdamState adam = make_adam_state(params);
    std::vector<ParameterField> batch{toy_beta(12)};
    const double loss = hard_train_step(params, adam, batch, cfg, 99);
    CHECK(std::isfinite(loss));
    CHECK(loss > 0.0);
    CHECK(flatten_params(params) == before);
}

TEST_CASE("hard training keeps the fit-point residual small when n_fit < N") {
    // The stacked system has n_fit + n_icbc = 56 rows; exact interpolation
    // needs the basis to span at least that many function dimensions, which
    // the affine head gives only when the last hidden width is >= 56.
    TrainConfig cfg;
    cfg.problem = Problem::Convection;
    cfg.basis_size = 64;
    cfg.hidden_layers = {64};
    cfg.n_fit = 8;
    cfg.n_loss = 20;
    cfg.n_icbc = 4;
    cfg.solver_tol = 1e-10;
    cfg.damping = 0.0;
    cfg.solver_max_iter = 100000;
    cfg.learning_rate = 1e-3;
    cfg.first_layer_scale = 6.0;
    cfg.seed = 5;

    NetworkParams params = init_params(cfg.layer_sizes(), derive_seed(cfg.seed, 1),
                                       Activation::Tanh, cfg.first_layer_scale);
    AdamState adam = make_adam_state(params);
    ParameterField beta = toy_beta(21);
    std::vector<ParameterField> batch{beta};

    for (int step = 0; step < 5; ++step) {
        const std::uint64_t step_seed = derive_seed(cfg.seed, 1000000 + step);
        (void)hard_train_step(params, adam, batch, cfg, step_seed);

        // Reproduce the step's fit with the post-step parameters.
        SamplePlan plan = make_sample_plan(cfg.problem, cfg.n_fit, cfg.n_loss, cfg.n_icbc,
                                           derive_seed(step_seed, 0));
        auto fit_jets = problem_jets(params, cfg.problem, beta, plan.fit_points,
                                     cfg.encoding, 1);
        auto icbc_jets = problem_jets(params, cfg.problem, beta, plan.icbc_points,
                                      cfg.encoding, 0);
        ConstraintSystem sys = assemble_convection(beta, plan, fit_jets, icbc_jets);
        auto [A, b] = sys.stacked();
        CombinationWeights w = fit_linear(A, b, cfg.solver_tol, cfg.damping,
                                          cfg.solver_max_iter);
        DenseVector r = matvec(A, w.omega);
        axpy(-1.0, b, r);
        CHECK(norm2(r) / std::max(norm2(b), 1.0) <= 10.0 * cfg.solver_tol);
    }
}

TEST_CASE("train: zero steps, determinism, and eqqp validation") {
    TrainConfig cfg = toy_config(Problem::Convection);
    cfg.steps = 0;
    Dataset data = build_dataset(Problem::Convection, 3, 7, Split::Train, 32, 32);
    TrainResult r0 = train(cfg, data);
    CHECK(r0.history.entries.empty());
    CHECK(flatten_params(r0.params) ==
          flatten_params(init_params(cfg.layer_sizes(), derive_seed(cfg.seed, 1),
                                     Activation::Tanh, cfg.first_layer_scale)));

    cfg.steps = 6;
    cfg.learning_rate = 1e-3;
    TrainResult a = train(cfg, data);
    TrainResult b = train(cfg, data);
    REQUIRE(a.history.entries.size() == b.history.entries.size());
    for (std::size_t i = 0; i < a.history.entries.size(); ++i)
        CHECK(a.history.entries[i].loss == b.history.entries[i].loss);
    CHECK(flatten_params(a.params) == flatten_params(b.params));

    TrainConfig bad = cfg;
    bad.fit_mode = FitMode::Eqqp;
    bad.n_fit = 99; // >= basis_size
    CHECK_THROWS_AS((void)train(bad, data), ConfigError);
}

TEST_CASE("train resumes bit-exactly from a saved state") {
    TrainConfig cfg = toy_config(Problem::Convection);
    cfg.steps = 8;
    cfg.learning_rate = 2e-3;
    Dataset data = build_dataset(Problem::Convection, 4, 19, Split::Train, 32, 32);

    TrainResult full = train(cfg, data);

    TrainConfig half = cfg;
    half.steps = 4;
    TrainResult part = train(half, data);
    TrainState state{part.params, part.adam, 4};
    TrainResult rest = train(cfg, data, nullptr, &state);

    CHECK(flatten_params(rest.params) == flatten_params(full.params));
    REQUIRE(rest.history.entries.size() == 4);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK(rest.history.entries[i].loss == full.history.entries[4 + i].loss);
}

TEST_CASE("evaluate computes relative L2 and residual metrics per instance") {
    TrainConfig cfg = toy_config(Problem::Convection);
    cfg.basis_size = 16;
    cfg.hidden_layers = {10};
    Model model{init_params(cfg.layer_sizes(), 3), Problem::Convection, false, cfg.encoding};

    Dataset test = build_dataset(Problem::Convection, 3, 50, Split::Test, 24, 24);
    std::vector<GridSolution> oracles;
    for (const auto& phi : test.parameter_fields)
        oracles.push_back(compute_oracle(Problem::Convection, phi, 24, 24));

    InferOptions opts;
    opts.subset_size = 30;
    opts.n_icbc = 12;
    opts.seed = 3;
    Metrics m = evaluate(model, test, oracles, opts, 24, 24);
    CHECK(m.per_instance_l2.size() == 3);
    CHECK(m.per_instance_residual.size() == 3);
    CHECK(m.relative_l2_mean > 0.0);
    CHECK(std::isfinite(m.residual_mean));

    // Deterministic under identical inputs.
    Metrics m2 = evaluate(model, test, oracles, opts, 24, 24);
    CHECK(m.per_instance_l2 == m2.per_instance_l2);

    std::vector<GridSolution> short_oracles(oracles.begin(), oracles.end() - 1);
    CHECK_THROWS_AS((void)evaluate(model, test, short_oracles, opts, 24, 24), InvalidInput);
}

TEST_CASE("fitted_vs_unfitted partitions the grid") {
    TrainConfig cfg = toy_config(Problem::Convection);
    cfg.basis_size = 16;
    cfg.hidden_layers = {10};
    Model model{init_params(cfg.layer_sizes(), 5), Problem::Convection, false, cfg.encoding};
    ParameterField beta = toy_beta(31);
    GridSolution oracle = compute_oracle(Problem::Convection, beta, 20, 20);

    InferOptions opts;
    opts.subset_size = 50;
    opts.n_icbc = 12;
    FittedUnfittedReport rep =
        fitted_vs_unfitted_histogram(model, beta, oracle, 50, 7, opts);
    CHECK(rep.fitted_errors.size() == 50);
    CHECK(rep.unfitted_errors.size() == 350);
    CHECK(rep.fitted_bins.size() == 40);

    // Fitting on every grid point leaves the unfitted set empty.
    FittedUnfittedReport all =
        fitted_vs_unfitted_histogram(model, beta, oracle, 400, 7, opts);
    CHECK(all.unfitted_errors.empty());
    CHECK(all.fitted_errors.size() == 400);

    CHECK_THROWS_AS(
        (void)fitted_vs_unfitted_histogram(model, beta, oracle, 401, 7, opts),
        InvalidInput);
}

TEST_CASE("complexity report reproduces the crossover arithmetic") {
    std::vector<std::pair<std::size_t, std::size_t>> grids{{1000, 1000}, {2000, 2000}};
    auto entries = complexity_report(100, 100, grids);
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].pdecl_ops == doctest::Approx(1e6));
    CHECK(entries[0].solver_ops == doctest::Approx(1e6));
    CHECK(entries[0].verdict == "equal");
    CHECK(entries[1].verdict == "pde-cl");
    CHECK(entries[0].measured_fit_seconds > 0.0);
    CHECK(entries[0].measured_solver_seconds > 0.0);
}

TEST_CASE("adam matches the reference update on a hand example") {
    NetworkParams net = init_params({1, 1}, 0);
    net.weights[0](0, 0) = 1.0;
    net.biases[0][0] = 0.0;
    AdamState state = make_adam_state(net);
    ParamGradient g = zero_gradient_like(net);
    g.weights[0](0, 0) = 0.5;

    adam_update(net, state, g, 0.1, 0.9, 0.999, 1e-8);
    // Step 1: mhat = g, vhat = g^2, update = lr * g / (|g| + eps).
    CHECK(net.weights[0](0, 0) ==
          doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
}
