#pragma once

#include "pdecl/fields.hpp"
#include "pdecl/oracles.hpp"
#include "pdecl/pde_cl.hpp"

#include <optional>

namespace pdecl {

/// Adam moments, shape-congruent with the network parameters.
struct AdamState {
    ParamGradient m;
    ParamGradient v;
    std::size_t step = 0;
};

AdamState make_adam_state(const NetworkParams& params);
void adam_update(NetworkParams& params, AdamState& state, const ParamGradient& grad,
                 double lr, double beta1, double beta2, double eps);

struct TrainConfig {
    Problem problem = Problem::Convection;
    bool soft = false;                       // soft-constrained baseline when true
    std::optional<FitMode> fit_mode;         // default: problem mode; Eqqp requires n_fit < N

    std::size_t basis_size = 100;            // N
    std::vector<std::size_t> hidden_layers = {64, 64, 64};

    std::size_t n_fit = 200;
    std::size_t n_loss = 100;
    std::size_t n_icbc = 100;
    double icbc_weight = 1.0; // least-squares weight on icbc rows vs PDE rows
    std::size_t batch_size = 1;
    std::size_t steps = 1000;

    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    double solver_tol = 1e-8;
    double damping = 1e-10;
    std::size_t solver_max_iter = 0;         // 0 = solver default
    std::size_t lm_max_outer = 40;
    double burgers_viscosity = 0.01;

    std::uint64_t seed = 0;
    std::size_t eval_every = 0;              // 0 disables periodic evaluation
    double first_layer_scale = 1.0;          // init band widening (see init_params)

    std::size_t grid_n1 = 50;                // evaluation grid
    std::size_t grid_n2 = 50;
    std::size_t infer_subset = 400;
    std::size_t infer_icbc = 100;

    EncodingConfig encoding;
    DatasetOptions dataset;

    /// Layer sizes of the model this config trains (soft models append a
    /// final scalar head).
    std::vector<std::size_t> layer_sizes() const;
};

struct Metrics {
    double relative_l2_mean = 0.0;
    double relative_l2_std = 0.0;
    double residual_mean = 0.0;
    double residual_std = 0.0;
    std::vector<double> per_instance_l2;
    std::vector<double> per_instance_residual;
    std::size_t step = 0;
    double wall_time_seconds = 0.0;
};

struct HistoryEntry {
    std::size_t step = 0;
    double loss = 0.0;
    std::optional<Metrics> metrics;
};

struct TrainHistory {
    std::vector<HistoryEntry> entries;
};

/// A trained model: network plus the problem/encoding it was trained for.
struct Model {
    NetworkParams params;
    Problem problem = Problem::Convection;
    bool soft = false;
    EncodingConfig encoding;
};

/// Bilevel loss of one parameter field at fixed sample seed: fit omega on
/// the fit points, evaluate |A' omega - b'|^2 (mean over outer rows) on the
/// loss points, and optionally accumulate d(loss)/d(theta) through both the
/// explicit path (A', b') and the implicit path (omega via the PDE-CL
/// adjoint). This is the quantity the finite-difference gradient tests probe.
double hard_loss_and_gradient(const NetworkParams& params, const ParameterField& phi,
                              const TrainConfig& cfg, std::uint64_t plan_seed,
                              ParamGradient* grad);

/// Pointwise-residual baseline loss (PDE residual on fit+loss points plus
/// icbc regression) for the soft model, with optional gradient.
double soft_loss_and_gradient(const NetworkParams& params, const ParameterField& phi,
                              const TrainConfig& cfg, std::uint64_t plan_seed,
                              ParamGradient* grad);

/// One Adam step over a batch. Fields whose solves fail are skipped; the
/// step throws SolverFailure only if every field in the batch failed.
double hard_train_step(NetworkParams& params, AdamState& adam,
                       std::span<const ParameterField> phi_batch, const TrainConfig& cfg,
                       std::uint64_t step_seed);
double soft_train_step(NetworkParams& params, AdamState& adam,
                       std::span<const ParameterField> phi_batch, const TrainConfig& cfg,
                       std::uint64_t step_seed);

struct TrainState {
    NetworkParams params;
    AdamState adam;
    std::size_t next_step = 0;
};

struct TrainCallbacks {
    std::function<void(const TrainState&, const HistoryEntry&)> on_entry;
    std::function<void(const TrainState&)> on_checkpoint; // at eval points and at the end
};

struct TrainResult {
    NetworkParams params;
    AdamState adam;
    TrainHistory history;
};

/// Runs cfg.steps training steps over shuffled batches. Evaluates on
/// `test_data` every eval_every steps (oracle solutions are computed once,
/// up front). Resumable: passing `resume` continues from a saved state and
/// reproduces the uninterrupted run exactly (per-step seeds are derived,
/// not consumed from shared state). Aborts after 3 consecutive failed steps.
TrainResult train(const TrainConfig& cfg, const Dataset& train_data,
                  const Dataset* test_data = nullptr, const TrainState* resume = nullptr,
                  const TrainCallbacks& callbacks = {});

/// Target solution for one instance on the requested grid.
GridSolution compute_oracle(Problem problem, const ParameterField& phi, std::size_t n1,
                            std::size_t n2, double burgers_viscosity = 0.01);

/// Relative L2 and residual metrics of a model over a test set. Instances
/// fan out over PDECL_THREADS workers with deterministic result order.
Metrics evaluate(const Model& model, const Dataset& test_data,
                 std::span<const GridSolution> oracle_solutions, const InferOptions& infer,
                 std::size_t grid_n1, std::size_t grid_n2);

/// Model solution sampled on the problem grid.
GridSolution model_on_grid(const Model& model, const ParameterField& phi,
                           const InferOptions& infer, std::size_t n1, std::size_t n2);

struct FittedUnfittedReport {
    std::vector<double> fitted_errors;
    std::vector<double> unfitted_errors;
    double median_fitted = 0.0;
    double median_unfitted = 0.0;
    std::vector<double> bin_edges;
    std::vector<std::size_t> fitted_bins;
    std::vector<std::size_t> unfitted_bins;
};

/// Fits the PDE-CL on n_fit_points grid points, evaluates everywhere on the
/// oracle grid, and partitions the pointwise absolute error by membership.
FittedUnfittedReport fitted_vs_unfitted_histogram(const Model& model,
                                                  const ParameterField& phi,
                                                  const GridSolution& oracle,
                                                  std::size_t n_fit_points,
                                                  std::uint64_t seed,
                                                  const InferOptions& infer);

struct AblationEntry {
    std::size_t n1 = 0, n2 = 0;
    double model_rel_l2 = 0.0;
    double interpolation_rel_l2 = 0.0;
};

/// Appendix-style basis-quality study: fit omega on fit_count points of a
/// base grid, then compare direct model evaluation against cubic
/// interpolation of the fitted-point values, both against the oracle, on
/// each query grid.
std::vector<AblationEntry> interpolation_ablation(const Model& model,
                                                  const ParameterField& phi,
                                                  std::size_t fit_count,
                                                  std::span<const std::pair<std::size_t, std::size_t>> grids,
                                                  std::uint64_t seed,
                                                  const InferOptions& infer);

struct ComplexityEntry {
    std::size_t grid_n1 = 0, grid_n2 = 0;
    double pdecl_ops = 0.0; // max(n,N)^2 min(n,N)
    double solver_ops = 0.0; // n1 * n2
    std::string verdict;    // "pde-cl", "solver", or "equal"
    double measured_fit_seconds = 0.0;
    double measured_solver_seconds = 0.0;
};

std::vector<ComplexityEntry> complexity_report(std::size_t n, std::size_t basis_size,
                                               std::span<const std::pair<std::size_t, std::size_t>> grid_shapes);

/// Median-of-3 wall time of fit_linear on a well-conditioned random n x N
/// system (benchmark helper for the complexity study).
double time_fit_linear(std::size_t n, std::size_t basis_size, std::uint64_t seed = 0);
double time_lax_wendroff(std::size_t nx, std::size_t nt);

/// Worker count from PDECL_THREADS (>= 1, default 1).
std::size_t worker_count();

} // namespace pdecl
