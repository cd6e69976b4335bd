// pdecl: train, evaluate, and study neural basis models with hard PDE
// constraints. Subcommands: generate-data, train, evaluate, infer, report.

#include "pdecl/errors.hpp"
#include "pdecl/io.hpp"
#include "pdecl/rng.hpp"
#include "pdecl/training.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pdecl;

namespace {

std::pair<std::size_t, std::size_t> parse_grid(const std::string& s) {
    const auto x = s.find('x');
    if (x == std::string::npos)
        throw ConfigError("grid must look like 100x100: " + s);
    try {
        const long a = std::stol(s.substr(0, x));
        const long b = std::stol(s.substr(x + 1));
        if (a < 2 || b < 2) throw ConfigError("grid sides must be >= 2: " + s);
        return {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
    } catch (const std::invalid_argument&) {
        throw ConfigError("grid must look like 100x100: " + s);
    }
}

std::vector<std::pair<std::size_t, std::size_t>> parse_grid_list(const std::string& s) {
    std::vector<std::pair<std::size_t, std::size_t>> grids;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        const auto comma = s.find(',', pos);
        const std::string item =
            comma == std::string::npos ? s.substr(pos) : s.substr(pos, comma - pos);
        if (!item.empty()) grids.push_back(parse_grid(item));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (grids.empty()) throw ConfigError("empty grid list");
    return grids;
}

TrainConfig train_config_from(ConfigFile& cfg) {
    TrainConfig tc;
    tc.problem = problem_from_string(cfg.str("problem"));
    const std::string mode = cfg.str("mode", "hard");
    if (mode != "hard" && mode != "soft") throw ConfigError("mode must be hard or soft");
    tc.soft = mode == "soft";
    if (cfg.has("fit_mode")) tc.fit_mode = fit_mode_from_string(cfg.str("fit_mode"));

    tc.basis_size = static_cast<std::size_t>(cfg.integer("basis_size", 100));
    if (cfg.has("hidden")) {
        tc.hidden_layers.clear();
        for (const auto& h : cfg.list("hidden"))
            tc.hidden_layers.push_back(static_cast<std::size_t>(std::stol(h)));
    }
    tc.n_fit = static_cast<std::size_t>(cfg.integer("n_fit", 200));
    tc.n_loss = static_cast<std::size_t>(cfg.integer("n_loss", 100));
    tc.n_icbc = static_cast<std::size_t>(cfg.integer("n_icbc", 100));
    tc.batch_size = static_cast<std::size_t>(cfg.integer("batch_size", 1));
    tc.steps = static_cast<std::size_t>(cfg.integer("steps", 1000));
    tc.learning_rate = cfg.real("learning_rate", 1e-3);
    tc.adam_beta1 = cfg.real("adam_beta1", 0.9);
    tc.adam_beta2 = cfg.real("adam_beta2", 0.999);
    tc.adam_eps = cfg.real("adam_eps", 1e-8);
    tc.solver_tol = cfg.real("solver_tol", 1e-8);
    tc.damping = cfg.real("damping", 1e-10);
    tc.solver_max_iter = static_cast<std::size_t>(cfg.integer("solver_max_iter", 0));
    tc.lm_max_outer = static_cast<std::size_t>(cfg.integer("lm_max_outer", 40));
    tc.burgers_viscosity = cfg.real("burgers_viscosity", 0.01);
    tc.seed = static_cast<std::uint64_t>(cfg.integer("seed", 0));
    tc.eval_every = static_cast<std::size_t>(cfg.integer("eval_every", 0));
    tc.first_layer_scale = cfg.real("first_layer_scale", 1.0);
    tc.icbc_weight = cfg.real("icbc_weight", 1.0);
    if (cfg.has("grid")) {
        auto [a, b] = parse_grid(cfg.str("grid"));
        tc.grid_n1 = a;
        tc.grid_n2 = b;
    }
    tc.infer_subset = static_cast<std::size_t>(cfg.integer("infer_subset", 400));
    tc.infer_icbc = static_cast<std::size_t>(cfg.integer("infer_icbc", 100));
    tc.encoding.burgers_cond_samples =
        static_cast<std::size_t>(cfg.integer("burgers_cond_samples", 16));
    tc.encoding.darcy_nu_low = cfg.real("darcy_low", 3.0);
    tc.encoding.darcy_nu_high = cfg.real("darcy_high", 12.0);
    tc.dataset.darcy_low = tc.encoding.darcy_nu_low;
    tc.dataset.darcy_high = tc.encoding.darcy_nu_high;
    tc.dataset.length_scale = cfg.real("length_scale", 0.2);
    return tc;
}

std::string oracle_cache_path(const std::string& dir, Problem problem, std::uint64_t seed,
                              std::size_t n1, std::size_t n2) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "oracle_%s_%llu_%zux%zu_v1.grid",
                  to_string(problem).c_str(), static_cast<unsigned long long>(seed), n1, n2);
    return (fs::path(dir) / buf).string();
}

GridSolution cached_oracle(const std::string& cache_dir, Problem problem,
                           const ParameterField& phi, std::uint64_t seed, std::size_t n1,
                           std::size_t n2) {
    fs::create_directories(cache_dir);
    const std::string path = oracle_cache_path(cache_dir, problem, seed, n1, n2);
    if (fs::exists(path)) return load_grid(path);
    GridSolution sol = compute_oracle(problem, phi, n1, n2);
    save_grid(path, sol);
    return sol;
}

int cmd_generate_data(const std::string& config_path,
                      const std::vector<std::string>& overrides) {
    ConfigFile cfg = ConfigFile::load(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);

    const Problem problem = problem_from_string(cfg.str("problem"));
    const std::string output = cfg.str("output");
    std::size_t grid_n1 = 100, grid_n2 = 100;
    if (cfg.has("grid")) std::tie(grid_n1, grid_n2) = parse_grid(cfg.str("grid"));
    const auto train_size = static_cast<std::size_t>(cfg.integer("train_size", 1000));
    const auto test_size = static_cast<std::size_t>(cfg.integer("test_size", 50));
    const auto train_seed = static_cast<std::uint64_t>(cfg.integer("train_base_seed", 0));
    const auto test_seed = static_cast<std::uint64_t>(cfg.integer("test_base_seed", 0));
    DatasetOptions opts;
    opts.darcy_high = cfg.real("darcy_high", 12.0);
    opts.darcy_low = cfg.real("darcy_low", 3.0);
    opts.length_scale = cfg.real("length_scale", 0.2);
    cfg.finish();

    Dataset train = build_dataset(problem, train_size, train_seed, Split::Train, grid_n1,
                                  grid_n2, opts);
    Dataset test;
    const Dataset* test_ptr = nullptr;
    if (test_size > 0) {
        test = build_dataset(problem, test_size, test_seed, Split::Test, grid_n1, grid_n2,
                             opts);
        test_ptr = &test;
    }
    write_dataset_dir(output, train, test_ptr);
    std::cout << "wrote " << train.size() + (test_ptr ? test.size() : 0) << " instances to "
              << output << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& mode_flag) {
    ConfigFile cfg = ConfigFile::load(config_path);
    for (const auto& o : overrides) cfg.apply_override(o);
    if (!mode_flag.empty()) cfg.apply_override("mode=" + mode_flag);

    const std::string dataset_dir = cfg.str("dataset");
    const std::string output = cfg.str("output");
    const std::string resume_path = cfg.str("resume", "");
    TrainConfig tc = train_config_from(cfg);
    cfg.finish();

    fs::create_directories(output);
    Dataset train_data = load_dataset_dir(dataset_dir, Split::Train);
    Dataset test_data;
    const Dataset* test_ptr = nullptr;
    if (tc.eval_every > 0) {
        test_data = load_dataset_dir(dataset_dir, Split::Test);
        test_ptr = &test_data;
    }

    TrainState resume_state;
    const TrainState* resume_ptr = nullptr;
    if (!resume_path.empty()) {
        Checkpoint ckpt = load_checkpoint(resume_path);
        if (!ckpt.has_trainer_state)
            throw ConfigError("checkpoint has no trainer state; cannot resume: " + resume_path);
        if (ckpt.model.problem != tc.problem || ckpt.model.soft != tc.soft)
            throw ConfigError("checkpoint problem/mode does not match config");
        resume_state.params = std::move(ckpt.model.params);
        resume_state.adam = std::move(ckpt.adam);
        resume_state.next_step = ckpt.next_step;
        resume_ptr = &resume_state;
    }

    const std::string ckpt_path = (fs::path(output) / "checkpoint.ckpt").string();
    TrainCallbacks callbacks;
    callbacks.on_checkpoint = [&](const TrainState& state) {
        Checkpoint ckpt;
        ckpt.model = Model{state.params, tc.problem, tc.soft, tc.encoding};
        ckpt.has_trainer_state = true;
        ckpt.adam = state.adam;
        ckpt.next_step = state.next_step;
        save_checkpoint(ckpt_path, ckpt);
    };

    TrainResult result = train(tc, train_data, test_ptr, resume_ptr, callbacks);

    // Final checkpoint and history (history covers this invocation's steps).
    Checkpoint final_ckpt;
    final_ckpt.model = Model{result.params, tc.problem, tc.soft, tc.encoding};
    final_ckpt.has_trainer_state = true;
    final_ckpt.adam = result.adam;
    final_ckpt.next_step = tc.steps;
    save_checkpoint(ckpt_path, final_ckpt);

    const std::string history_path = (fs::path(output) / "history.jsonl").string();
    if (resume_ptr) {
        std::ofstream out(history_path, std::ios::app);
        for (const auto& e : result.history.entries) out << history_entry_json(e) << '\n';
    } else {
        write_history(history_path, result.history);
    }

    if (!result.history.entries.empty())
        std::cout << "final loss " << result.history.entries.back().loss << " after "
                  << tc.steps << " steps\n";
    std::cout << "checkpoint: " << ckpt_path << "\n";
    return 0;
}

InferOptions infer_options_for(const Model& model, std::size_t subset, std::size_t icbc,
                               std::uint64_t seed, double icbc_weight = 1.0) {
    InferOptions opts;
    opts.subset_size = subset;
    opts.n_icbc = icbc;
    opts.icbc_weight = icbc_weight;
    opts.seed = seed;
    opts.tol = 1e-8;
    opts.damping = model.problem == Problem::Darcy ? 1e-10 : 0.0;
    opts.max_outer = 100;
    return opts;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& dataset_dir,
                 const std::string& split_name, const std::string& output,
                 const std::string& grid_spec, std::size_t subset, std::size_t icbc,
                 std::uint64_t seed, bool export_grids) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Dataset data = load_dataset_dir(dataset_dir, split_from_string(split_name));
    if (data.problem != ckpt.model.problem)
        throw InvalidInput("dataset problem does not match checkpoint problem");
    auto [n1, n2] = parse_grid(grid_spec);

    fs::create_directories(output);
    const std::string cache_dir = (fs::path(output) / "oracle_cache").string();
    std::vector<GridSolution> oracles;
    oracles.reserve(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        oracles.push_back(cached_oracle(cache_dir, data.problem, data.parameter_fields[i],
                                        data.seeds[i], n1, n2));

    InferOptions opts = infer_options_for(ckpt.model, subset, icbc, seed);
    Metrics metrics = evaluate(ckpt.model, data, oracles, opts, n1, n2);

    const std::string metrics_path = (fs::path(output) / "metrics.jsonl").string();
    std::ofstream out(metrics_path, std::ios::trunc);
    if (!out) throw IoError("cannot write metrics: " + metrics_path);
    for (std::size_t i = 0; i < data.size(); ++i) {
        json line{{"instance", i},
                  {"seed", data.seeds[i]},
                  {"relative_l2", metrics.per_instance_l2[i]},
                  {"residual", metrics.per_instance_residual[i]}};
        out << line.dump() << '\n';
    }
    out << R"({"summary": )" << metrics_json(metrics) << "}\n";

    if (export_grids) {
        const fs::path grid_dir = fs::path(output) / "grids";
        fs::create_directories(grid_dir);
        for (std::size_t i = 0; i < data.size(); ++i) {
            InferOptions per = opts;
            per.seed = derive_seed(seed, i);
            GridSolution pred =
                model_on_grid(ckpt.model, data.parameter_fields[i], per, n1, n2);
            GridSolution diff = pred;
            for (std::size_t k = 0; k < diff.values.size(); ++k)
                diff.values[k] -= oracles[i].values[k];
            auto stem = [&](const char* tag) {
                return (grid_dir / ("instance_" + std::to_string(i) + "_" + tag)).string();
            };
            save_grid(stem("target") + ".grid", oracles[i]);
            save_grid(stem("prediction") + ".grid", pred);
            save_grid(stem("difference") + ".grid", diff);
            export_grid_csv(stem("target") + ".csv", oracles[i]);
            export_grid_csv(stem("prediction") + ".csv", pred);
            export_grid_csv(stem("difference") + ".csv", diff);
        }
    }

    std::cout << "relative_l2 " << metrics.relative_l2_mean << " +/- "
              << metrics.relative_l2_std << "  residual " << metrics.residual_mean << " +/- "
              << metrics.residual_std << "\n";
    std::cout << "metrics: " << metrics_path << "\n";
    return 0;
}

int cmd_infer(const std::string& checkpoint_path, const std::string& dataset_dir,
              const std::string& split_name, std::size_t instance, const std::string& output,
              const std::string& grid_spec, std::size_t subset, std::size_t icbc,
              std::uint64_t seed) {
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Dataset data = load_dataset_dir(dataset_dir, split_from_string(split_name));
    if (instance >= data.size())
        throw InvalidInput("instance index out of range (dataset has " +
                           std::to_string(data.size()) + ")");
    auto [n1, n2] = parse_grid(grid_spec);

    InferOptions opts = infer_options_for(ckpt.model, subset, icbc, seed);
    GridSolution pred = model_on_grid(ckpt.model, data.parameter_fields[instance], opts, n1, n2);

    fs::create_directories(output);
    const std::string stem =
        (fs::path(output) / ("prediction_instance_" + std::to_string(instance))).string();
    save_grid(stem + ".grid", pred);
    export_grid_csv(stem + ".csv", pred);
    std::cout << "wrote " << stem << ".grid and .csv\n";
    return 0;
}

int cmd_report(const std::string& study, const std::string& checkpoint_path,
               const std::string& dataset_dir, const std::string& split_name,
               std::size_t instance, std::size_t fit_points, const std::string& grid_spec,
               const std::string& grids_spec, std::size_t n, std::size_t basis,
               std::uint64_t seed, const std::string& output) {
    if (study != "complexity" && study != "fitted-vs-unfitted" && study != "interpolation")
        throw ConfigError("unknown study '" + study +
                          "' (valid: fitted-vs-unfitted, interpolation, complexity)");
    fs::create_directories(output);

    if (study == "complexity") {
        auto grids = parse_grid_list(grids_spec.empty() ? grid_spec : grids_spec);
        auto entries = complexity_report(n, basis, grids);
        const std::string path = (fs::path(output) / "complexity.jsonl").string();
        std::ofstream out(path, std::ios::trunc);
        for (const auto& e : entries) {
            json line{{"grid", {e.grid_n1, e.grid_n2}},
                      {"pdecl_ops", e.pdecl_ops},
                      {"solver_ops", e.solver_ops},
                      {"verdict", e.verdict},
                      {"measured_fit_seconds", e.measured_fit_seconds},
                      {"measured_solver_seconds", e.measured_solver_seconds}};
            out << line.dump() << '\n';
            std::cout << e.grid_n1 << "x" << e.grid_n2 << ": pde-cl ops " << e.pdecl_ops
                      << " vs solver ops " << e.solver_ops << " -> " << e.verdict << "\n";
        }
        std::cout << "report: " << path << "\n";
        return 0;
    }

    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    Dataset data = load_dataset_dir(dataset_dir, split_from_string(split_name));
    if (instance >= data.size()) throw InvalidInput("instance index out of range");
    const ParameterField& phi = data.parameter_fields[instance];
    InferOptions opts = infer_options_for(ckpt.model, fit_points, 100, seed);

    if (study == "fitted-vs-unfitted") {
        auto [n1, n2] = parse_grid(grid_spec);
        GridSolution oracle = compute_oracle(ckpt.model.problem, phi, n1, n2);
        auto report =
            fitted_vs_unfitted_histogram(ckpt.model, phi, oracle, fit_points, seed, opts);
        const std::string path = (fs::path(output) / "fitted_vs_unfitted.jsonl").string();
        std::ofstream out(path, std::ios::trunc);
        json line{{"fit_points", fit_points},
                  {"grid", {n1, n2}},
                  {"median_fitted", report.median_fitted},
                  {"median_unfitted", report.median_unfitted},
                  {"fitted_count", report.fitted_errors.size()},
                  {"unfitted_count", report.unfitted_errors.size()},
                  {"bin_edges", report.bin_edges},
                  {"fitted_bins", report.fitted_bins},
                  {"unfitted_bins", report.unfitted_bins}};
        out << line.dump() << '\n';
        std::cout << "median error fitted " << report.median_fitted << " / unfitted "
                  << report.median_unfitted << " (" << report.fitted_errors.size() << "/"
                  << report.unfitted_errors.size() << " points)\nreport: " << path << "\n";
        return 0;
    }

    if (study == "interpolation") {
        auto grids = parse_grid_list(grids_spec.empty() ? grid_spec : grids_spec);
        auto entries = interpolation_ablation(ckpt.model, phi, fit_points, grids, seed, opts);
        const std::string path = (fs::path(output) / "interpolation.jsonl").string();
        std::ofstream out(path, std::ios::trunc);
        for (const auto& e : entries) {
            json line{{"grid", {e.n1, e.n2}},
                      {"model_rel_l2", e.model_rel_l2},
                      {"interpolation_rel_l2", e.interpolation_rel_l2}};
            out << line.dump() << '\n';
            std::cout << e.n1 << "x" << e.n2 << ": model " << e.model_rel_l2
                      << " vs interpolation " << e.interpolation_rel_l2 << "\n";
        }
        std::cout << "report: " << path << "\n";
        return 0;
    }

    throw ConfigError("unknown study '" + study +
                      "' (valid: fitted-vs-unfitted, interpolation, complexity)");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural PDE bases with hard-constrained optimization layers"};
    app.require_subcommand(1);

    std::string config_path, mode_flag;
    std::vector<std::string> overrides;

    auto* gen = app.add_subcommand("generate-data", "sample PDE-parameter datasets");
    gen->add_option("--config", config_path, "config file")->required();
    gen->add_option("--set", overrides, "override config keys (key=value)");

    auto* tr = app.add_subcommand("train", "train a model");
    tr->add_option("--config", config_path, "config file")->required();
    tr->add_option("--set", overrides, "override config keys (key=value)");
    tr->add_option("--mode", mode_flag, "hard or soft (overrides config)");

    std::string checkpoint_path, dataset_dir, output_dir, split_name = "test";
    std::string grid_spec = "50x50", grids_spec;
    std::size_t subset = 400, icbc = 100, instance = 0, fit_points = 750;
    std::size_t comp_n = 100, comp_basis = 100;
    std::uint64_t seed = 1;
    bool export_grids = false;

    auto* ev = app.add_subcommand("evaluate", "metrics of a checkpoint on a test set");
    ev->add_option("--checkpoint", checkpoint_path)->required();
    ev->add_option("--dataset", dataset_dir)->required();
    ev->add_option("--split", split_name, "train or test");
    ev->add_option("--output", output_dir)->required();
    ev->add_option("--grid", grid_spec, "evaluation grid, e.g. 50x50");
    ev->add_option("--subset", subset, "points used to fit the PDE-CL");
    ev->add_option("--icbc", icbc, "icbc rows added to the fit");
    ev->add_option("--seed", seed);
    ev->add_flag("--export-grids", export_grids, "write target/prediction/difference grids");

    auto* inf = app.add_subcommand("infer", "predict one instance on a grid");
    inf->add_option("--checkpoint", checkpoint_path)->required();
    inf->add_option("--dataset", dataset_dir)->required();
    inf->add_option("--split", split_name);
    inf->add_option("--instance", instance);
    inf->add_option("--output", output_dir)->required();
    inf->add_option("--grid", grid_spec);
    inf->add_option("--subset", subset);
    inf->add_option("--icbc", icbc);
    inf->add_option("--seed", seed);

    std::string study;
    auto* rep = app.add_subcommand("report", "fitted-vs-unfitted, interpolation, complexity");
    rep->add_option("--study", study)->required();
    rep->add_option("--checkpoint", checkpoint_path);
    rep->add_option("--dataset", dataset_dir);
    rep->add_option("--split", split_name);
    rep->add_option("--instance", instance);
    rep->add_option("--fit-points", fit_points);
    rep->add_option("--grid", grid_spec);
    rep->add_option("--grids", grids_spec, "comma-separated, e.g. 100x100,1000x1000");
    rep->add_option("--n", comp_n, "constraint rows (complexity study)");
    rep->add_option("--N", comp_basis, "basis size (complexity study)");
    rep->add_option("--seed", seed);
    rep->add_option("--output", output_dir)->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate_data(config_path, overrides);
        if (tr->parsed()) return cmd_train(config_path, overrides, mode_flag);
        if (ev->parsed())
            return cmd_evaluate(checkpoint_path, dataset_dir, split_name, output_dir,
                                grid_spec, subset, icbc, seed, export_grids);
        if (inf->parsed())
            return cmd_infer(checkpoint_path, dataset_dir, split_name, instance, output_dir,
                             grid_spec, subset, icbc, seed);
        if (rep->parsed())
            return cmd_report(study, checkpoint_path, dataset_dir, split_name, instance,
                              fit_points, grid_spec, grids_spec, comp_n, comp_basis, seed,
                              output_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.category() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
