#include "pdecl/io.hpp"
#include "pdecl/errors.hpp"
#include "pdecl/rng.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace pdecl;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("pdecl_test_" + std::to_string(Rng(std::random_device{}()).next_u64()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str(const std::string& name = "") const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("config parsing: sections, types, overrides, unknown keys") {
    ConfigFile cfg = ConfigFile::from_text(
        "problem = convection  # comment\n"
        "steps = 20\n"
        "[solver]\n"
        "tol = 1e-9\n"
        "verbose = true\n"
        "hidden = 32, 16,8\n");

    CHECK(cfg.str("problem") == "convection");
    CHECK(cfg.integer("steps", 0) == 20);
    CHECK(cfg.real("solver.tol", 0.0) == doctest::Approx(1e-9));
    CHECK(cfg.flag("solver.verbose", false));
    CHECK(cfg.list("solver.hidden") == std::vector<std::string>{"32", "16", "8"});
    CHECK_NOTHROW(cfg.finish());

    ConfigFile bad = ConfigFile::from_text("problme = convection\n");
    CHECK_THROWS_AS(bad.finish(), ConfigError); // typo never passes silently
    try {
        bad.finish();
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("problme") != std::string::npos);
    }

    ConfigFile types = ConfigFile::from_text("steps = abc\n");
    CHECK_THROWS_AS((void)types.integer("steps", 0), ConfigError);

    CHECK_THROWS_AS(ConfigFile::from_text("a = 1\na = 2\n"), ConfigError);
    CHECK_THROWS_AS(ConfigFile::from_text("novalue\n"), ConfigError);

    ConfigFile ov = ConfigFile::from_text("steps = 20\n");
    ov.apply_override("steps=50");
    CHECK(ov.integer("steps", 0) == 50);
    CHECK_THROWS_AS(ov.apply_override("nonsense"), ConfigError);
}

TEST_CASE("checkpoint round-trips bit-exactly, with and without trainer state") {
    TempDir dir;
    Checkpoint ckpt;
    ckpt.model.params = init_params({3, 12, 9}, 77);
    ckpt.model.problem = Problem::Darcy;
    ckpt.model.soft = false;
    ckpt.model.encoding.darcy_nu_low = 2.5;
    ckpt.model.encoding.darcy_nu_high = 11.0;

    const std::string path = dir.str("model.ckpt");
    save_checkpoint(path, ckpt);
    Checkpoint back = load_checkpoint(path);
    CHECK(flatten_params(back.model.params) == flatten_params(ckpt.model.params));
    CHECK(back.model.problem == Problem::Darcy);
    CHECK(back.model.encoding.darcy_nu_low == 2.5);
    CHECK_FALSE(back.has_trainer_state);

    ckpt.has_trainer_state = true;
    ckpt.adam = make_adam_state(ckpt.model.params);
    ckpt.adam.m.weights[0](0, 0) = 0.25;
    ckpt.adam.step = 7;
    ckpt.next_step = 9;
    save_checkpoint(path, ckpt);
    Checkpoint back2 = load_checkpoint(path);
    REQUIRE(back2.has_trainer_state);
    CHECK(back2.adam.m.weights[0](0, 0) == 0.25);
    CHECK(back2.adam.step == 7);
    CHECK(back2.next_step == 9);

    // Header fields cross-checked against an independent parse.
    {
        std::ifstream in(path, std::ios::binary);
        char magic[8];
        in.read(magic, 8);
        CHECK(std::string(magic, 8) == "PDCLCKP1");
        std::uint32_t version, problem;
        in.read(reinterpret_cast<char*>(&version), 4);
        in.read(reinterpret_cast<char*>(&problem), 4);
        CHECK(version == 1);
        CHECK(problem == static_cast<std::uint32_t>(Problem::Darcy));
    }
}

TEST_CASE("checkpoint loading refuses corrupt and truncated files") {
    TempDir dir;
    Checkpoint ckpt;
    ckpt.model.params = init_params({2, 4, 3}, 1);
    const std::string path = dir.str("model.ckpt");
    save_checkpoint(path, ckpt);

    // Truncate.
    const std::string full = slurp(path);
    std::ofstream(dir.str("short.ckpt"), std::ios::binary)
        << full.substr(0, full.size() / 2);
    CHECK_THROWS_AS((void)load_checkpoint(dir.str("short.ckpt")), IoError);

    // Bad magic.
    std::string corrupt = full;
    corrupt[0] = 'X';
    std::ofstream(dir.str("bad.ckpt"), std::ios::binary) << corrupt;
    CHECK_THROWS_AS((void)load_checkpoint(dir.str("bad.ckpt")), IoError);

    // Unsupported version.
    std::string vbad = full;
    vbad[8] = 9; // first byte of the little-endian version field
    std::ofstream(dir.str("vbad.ckpt"), std::ios::binary) << vbad;
    CHECK_THROWS_AS((void)load_checkpoint(dir.str("vbad.ckpt")), IoError);

    CHECK_THROWS_AS((void)load_checkpoint(dir.str("missing.ckpt")), IoError);
}

TEST_CASE("dataset directory round-trip and byte-identical regeneration") {
    TempDir dir;
    Dataset train = build_dataset(Problem::Convection, 5, 7, Split::Train, 24, 24);
    Dataset test = build_dataset(Problem::Convection, 2, 7, Split::Test, 24, 24);
    write_dataset_dir(dir.str("data"), train, &test);

    Dataset train_back = load_dataset_dir(dir.str("data"), Split::Train);
    CHECK(train_back.size() == 5);
    CHECK(train_back.seeds == train.seeds);
    for (std::size_t i = 0; i < 5; ++i)
        CHECK(train_back.parameter_fields[i].values == train.parameter_fields[i].values);

    Dataset test_back = load_dataset_dir(dir.str("data"), Split::Test);
    CHECK(test_back.size() == 2);

    // Regeneration is byte-identical (manifest and instance files).
    write_dataset_dir(dir.str("data2"), train, &test);
    CHECK(slurp(dir.str("data/manifest.json")) == slurp(dir.str("data2/manifest.json")));
    CHECK(slurp(dir.str("data/train_000003.pfield")) ==
          slurp(dir.str("data2/train_000003.pfield")));
}

TEST_CASE("grid round-trip, csv export, and difference arithmetic on a 3x3 toy") {
    TempDir dir;
    GridSolution g;
    g.n1 = g.n2 = 3;
    g.problem = Problem::Convection;
    g.provenance = Provenance::Model;
    g.values = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    save_grid(dir.str("a.grid"), g);
    GridSolution back = load_grid(dir.str("a.grid"));
    CHECK(back.values == g.values);
    CHECK(back.provenance == Provenance::Model);

    GridSolution target = g;
    for (double& v : target.values) v += 0.5;
    GridSolution diff = g;
    for (std::size_t i = 0; i < diff.values.size(); ++i)
        diff.values[i] -= target.values[i];
    for (double v : diff.values) CHECK(v == doctest::Approx(-0.5));

    export_grid_csv(dir.str("a.csv"), g);
    std::string csv = slurp(dir.str("a.csv"));
    CHECK(csv == "1,2,3\n4,5,6\n7,8,9\n");
}

TEST_CASE("history and metrics serialize as line-delimited json") {
    Metrics m;
    m.relative_l2_mean = 0.05;
    m.per_instance_l2 = {0.04, 0.06};
    m.per_instance_residual = {0.1, 0.2};
    m.step = 12;
    HistoryEntry e{12, 0.5, m};
    const std::string line = history_entry_json(e);
    CHECK(line.find("\"step\":12") != std::string::npos);
    CHECK(line.find("relative_l2_mean") != std::string::npos);
    HistoryEntry plain{3, 1.25, std::nullopt};
    CHECK(history_entry_json(plain).find("metrics") == std::string::npos);
}

#ifdef PDECL_CLI_PATH

namespace {

int run_cli(const std::string& args, const TempDir& dir, std::string* out = nullptr) {
    const std::string log = dir.str("cli_out.txt");
    const std::string cmd = std::string(PDECL_CLI_PATH) + " " + args + " > " + log + " 2>&1";
    const int rc = std::system(cmd.c_str());
    if (out) *out = slurp(log);
    return WEXITSTATUS(rc);
}

} // namespace

TEST_CASE("cli end-to-end: generate, train, evaluate, infer, report") {
    TempDir dir;
    {
        std::ofstream cfg(dir.str("data.cfg"));
        cfg << "problem = convection\n"
            << "output = " << dir.str("data") << "\n"
            << "grid = 24x24\n"
            << "train_size = 4\n"
            << "test_size = 2\n"
            << "train_base_seed = 3\n"
            << "test_base_seed = 3\n";
    }
    std::string out;
    REQUIRE(run_cli("generate-data --config " + dir.str("data.cfg"), dir, &out) == 0);
    CHECK(fs::exists(dir.str("data/manifest.json")));

    // Idempotent regeneration.
    const std::string manifest_before = slurp(dir.str("data/manifest.json"));
    REQUIRE(run_cli("generate-data --config " + dir.str("data.cfg"), dir, &out) == 0);
    CHECK(slurp(dir.str("data/manifest.json")) == manifest_before);

    {
        std::ofstream cfg(dir.str("train.cfg"));
        cfg << "problem = convection\n"
            << "dataset = " << dir.str("data") << "\n"
            << "output = " << dir.str("run") << "\n"
            << "basis_size = 12\n"
            << "hidden = 8\n"
            << "n_fit = 10\nn_loss = 8\nn_icbc = 6\n"
            << "steps = 3\n"
            << "grid = 24x24\n"
            << "seed = 1\n";
    }
    REQUIRE(run_cli("train --config " + dir.str("train.cfg"), dir, &out) == 0);
    CHECK(fs::exists(dir.str("run/checkpoint.ckpt")));
    CHECK(fs::exists(dir.str("run/history.jsonl")));

    // Soft mode via the --mode flag.
    {
        std::ofstream cfg(dir.str("train_soft.cfg"));
        cfg << "problem = convection\n"
            << "dataset = " << dir.str("data") << "\n"
            << "output = " << dir.str("run_soft") << "\n"
            << "basis_size = 12\nhidden = 8\n"
            << "n_fit = 10\nn_loss = 8\nn_icbc = 6\nsteps = 2\nseed = 1\n";
    }
    REQUIRE(run_cli("train --config " + dir.str("train_soft.cfg") + " --mode soft", dir,
                    &out) == 0);

    REQUIRE(run_cli("evaluate --checkpoint " + dir.str("run/checkpoint.ckpt") +
                        " --dataset " + dir.str("data") + " --output " + dir.str("eval") +
                        " --grid 24x24 --subset 40 --icbc 10 --export-grids",
                    dir, &out) == 0);
    CHECK(fs::exists(dir.str("eval/metrics.jsonl")));
    CHECK(fs::exists(dir.str("eval/oracle_cache")));
    CHECK(fs::exists(dir.str("eval/grids/instance_0_difference.csv")));

    REQUIRE(run_cli("infer --checkpoint " + dir.str("run/checkpoint.ckpt") + " --dataset " +
                        dir.str("data") + " --instance 0 --output " + dir.str("pred") +
                        " --grid 24x24 --subset 40",
                    dir, &out) == 0);
    CHECK(fs::exists(dir.str("pred/prediction_instance_0.csv")));

    REQUIRE(run_cli("report --study complexity --n 64 --N 64 --grids 512x512,1024x1024 "
                    "--output " +
                        dir.str("rep"),
                    dir, &out) == 0);
    CHECK(fs::exists(dir.str("rep/complexity.jsonl")));

    // Unknown study and unknown config key produce categorized errors.
    CHECK(run_cli("report --study nonsense --output " + dir.str("rep"), dir, &out) == 1);
    CHECK(out.find("error: config") != std::string::npos);

    {
        std::ofstream cfg(dir.str("typo.cfg"));
        cfg << "problem = convection\noutput = " << dir.str("d2") << "\ntrain_sikes = 4\n";
    }
    CHECK(run_cli("generate-data --config " + dir.str("typo.cfg"), dir, &out) == 1);
    CHECK(out.find("error: config") != std::string::npos);
    CHECK(out.find("train_sikes") != std::string::npos);
}

TEST_CASE("cli train resumes from a checkpoint") {
    TempDir dir;
    {
        std::ofstream cfg(dir.str("data.cfg"));
        cfg << "problem = convection\noutput = " << dir.str("data")
            << "\ngrid = 20x20\ntrain_size = 3\ntest_size = 1\n";
    }
    std::string out;
    REQUIRE(run_cli("generate-data --config " + dir.str("data.cfg"), dir, &out) == 0);

    auto train_cfg = [&](const std::string& name, int steps, const std::string& outdir,
                         const std::string& resume) {
        std::ofstream cfg(dir.str(name));
        cfg << "problem = convection\ndataset = " << dir.str("data") << "\noutput = "
            << dir.str(outdir) << "\nbasis_size = 10\nhidden = 6\n"
            << "n_fit = 8\nn_loss = 6\nn_icbc = 4\nsteps = " << steps << "\nseed = 2\n";
        if (!resume.empty()) cfg << "resume = " << dir.str(resume) << "\n";
    };

    train_cfg("full.cfg", 6, "full", "");
    REQUIRE(run_cli("train --config " + dir.str("full.cfg"), dir, &out) == 0);

    train_cfg("half.cfg", 3, "half", "");
    REQUIRE(run_cli("train --config " + dir.str("half.cfg"), dir, &out) == 0);
    train_cfg("rest.cfg", 6, "half", "half/checkpoint.ckpt");
    REQUIRE(run_cli("train --config " + dir.str("rest.cfg"), dir, &out) == 0);

    Checkpoint full = load_checkpoint(dir.str("full/checkpoint.ckpt"));
    Checkpoint resumed = load_checkpoint(dir.str("half/checkpoint.ckpt"));
    CHECK(flatten_params(full.model.params) == flatten_params(resumed.model.params));
}

#endif // PDECL_CLI_PATH
