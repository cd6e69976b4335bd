#include "pdecl/io.hpp"

#include "pdecl/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace pdecl {

static_assert(std::endian::native == std::endian::little,
              "file formats assume a little-endian host");

// ---- config ----------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

} // namespace

ConfigFile ConfigFile::from_text(const std::string& text) {
    ConfigFile cfg;
    std::istringstream in(text);
    std::string line, section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (!section.empty()) key = section + "." + key;
        if (cfg.values_.count(key))
            throw ConfigError("config: duplicate key '" + key + "'");
        cfg.values_[key] = value;
    }
    return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file: " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

bool ConfigFile::has(const std::string& key) const { return values_.count(key) > 0; }

std::string ConfigFile::str(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    consumed_.insert(key);
    return it->second;
}

std::string ConfigFile::str(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    return str(key);
}

long long ConfigFile::integer(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    const std::string v = str(key);
    try {
        std::size_t pos = 0;
        const long long out = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not an integer: " + v);
    }
}

double ConfigFile::real(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const std::string v = str(key);
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' is not a number: " + v);
    }
}

bool ConfigFile::flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const std::string v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: key '" + key + "' is not a boolean: " + v);
}

std::vector<std::string> ConfigFile::list(const std::string& key) {
    std::vector<std::string> out;
    if (!has(key)) return out;
    std::string v = str(key);
    std::size_t pos = 0;
    while (pos <= v.size()) {
        const auto comma = v.find(',', pos);
        const std::string item =
            trim(comma == std::string::npos ? v.substr(pos) : v.substr(pos, comma - pos));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

void ConfigFile::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must look like key=value: " + assignment);
    const std::string key = trim(assignment.substr(0, eq));
    values_[key] = trim(assignment.substr(eq + 1));
    consumed_.erase(key);
}

void ConfigFile::finish() const {
    for (const auto& [key, value] : values_)
        if (!consumed_.count(key))
            throw ConfigError("config: unknown key '" + key + "'");
}

// ---- low-level binary helpers ----------------------------------------------

namespace {

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void get_bytes(std::istream& in, void* p, std::size_t n, const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n)
        throw IoError(std::string("truncated file while reading ") + what);
}

void put_u32(std::ostream& out, std::uint32_t v) { put_bytes(out, &v, 4); }
void put_u64(std::ostream& out, std::uint64_t v) { put_bytes(out, &v, 8); }
void put_f64(std::ostream& out, double v) { put_bytes(out, &v, 8); }

std::uint32_t get_u32(std::istream& in, const char* what) {
    std::uint32_t v;
    get_bytes(in, &v, 4, what);
    return v;
}
std::uint64_t get_u64(std::istream& in, const char* what) {
    std::uint64_t v;
    get_bytes(in, &v, 8, what);
    return v;
}
double get_f64(std::istream& in, const char* what) {
    double v;
    get_bytes(in, &v, 8, what);
    return v;
}

void put_doubles(std::ostream& out, const DenseVector& v) {
    put_u64(out, v.size());
    put_bytes(out, v.data(), v.size() * sizeof(double));
}

DenseVector get_doubles(std::istream& in, const char* what) {
    const std::uint64_t n = get_u64(in, what);
    if (n > (1ull << 32)) throw IoError(std::string("implausible array length in ") + what);
    DenseVector v(n);
    get_bytes(in, v.data(), n * sizeof(double), what);
    return v;
}

void check_magic(std::istream& in, const char* magic, const char* what) {
    char buf[8];
    get_bytes(in, buf, 8, what);
    if (std::memcmp(buf, magic, 8) != 0)
        throw IoError(std::string(what) + ": bad magic (not a " + what + " file)");
}

void put_gradient(std::ostream& out, const ParamGradient& g) {
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        put_doubles(out, g.weights[l].data());
        put_doubles(out, g.biases[l]);
    }
}

void get_gradient(std::istream& in, ParamGradient& g, const char* what) {
    for (std::size_t l = 0; l < g.weights.size(); ++l) {
        DenseVector w = get_doubles(in, what);
        if (w.size() != g.weights[l].data().size())
            throw IoError(std::string(what) + ": trainer state shape mismatch");
        g.weights[l].data() = std::move(w);
        DenseVector b = get_doubles(in, what);
        if (b.size() != g.biases[l].size())
            throw IoError(std::string(what) + ": trainer state shape mismatch");
        g.biases[l] = std::move(b);
    }
}

} // namespace

// ---- checkpoints -----------------------------------------------------------

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    const NetworkParams& p = ckpt.model.params;

    out.write("PDCLCKP1", 8);
    put_u32(out, 1); // format version
    put_u32(out, static_cast<std::uint32_t>(ckpt.model.problem));
    put_u32(out, ckpt.model.soft ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(p.activation));
    put_u64(out, p.seed);
    put_u32(out, static_cast<std::uint32_t>(ckpt.model.encoding.burgers_cond_samples));
    put_f64(out, ckpt.model.encoding.darcy_nu_low);
    put_f64(out, ckpt.model.encoding.darcy_nu_high);

    put_u32(out, static_cast<std::uint32_t>(p.layer_sizes.size()));
    for (std::size_t s : p.layer_sizes) put_u64(out, s);
    for (std::size_t l = 0; l < p.layer_count(); ++l) {
        put_doubles(out, p.weights[l].data());
        put_doubles(out, p.biases[l]);
    }

    put_u32(out, ckpt.has_trainer_state ? 1 : 0);
    if (ckpt.has_trainer_state) {
        put_gradient(out, ckpt.adam.m);
        put_gradient(out, ckpt.adam.v);
        put_u64(out, ckpt.adam.step);
        put_u64(out, ckpt.next_step);
    }
    if (!out) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    check_magic(in, "PDCLCKP1", "checkpoint");
    const std::uint32_t version = get_u32(in, "checkpoint version");
    if (version != 1)
        throw IoError("checkpoint: unsupported format version " + std::to_string(version));

    Checkpoint ckpt;
    ckpt.model.problem = static_cast<Problem>(get_u32(in, "checkpoint problem"));
    ckpt.model.soft = get_u32(in, "checkpoint mode") != 0;
    const auto activation = static_cast<Activation>(get_u32(in, "checkpoint activation"));
    const std::uint64_t seed = get_u64(in, "checkpoint seed");
    ckpt.model.encoding.burgers_cond_samples = get_u32(in, "checkpoint encoding");
    ckpt.model.encoding.darcy_nu_low = get_f64(in, "checkpoint encoding");
    ckpt.model.encoding.darcy_nu_high = get_f64(in, "checkpoint encoding");

    const std::uint32_t n_layers = get_u32(in, "checkpoint layer count");
    if (n_layers < 2 || n_layers > 64) throw IoError("checkpoint: implausible layer count");
    std::vector<std::size_t> sizes(n_layers);
    for (auto& s : sizes) s = get_u64(in, "checkpoint layer sizes");

    NetworkParams params;
    params.layer_sizes = sizes;
    params.activation = activation;
    params.seed = seed;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        DenseMatrix W(sizes[l + 1], sizes[l]);
        DenseVector w = get_doubles(in, "checkpoint weights");
        if (w.size() != W.data().size()) throw IoError("checkpoint: weight shape mismatch");
        W.data() = std::move(w);
        params.weights.push_back(std::move(W));
        DenseVector b = get_doubles(in, "checkpoint biases");
        if (b.size() != sizes[l + 1]) throw IoError("checkpoint: bias shape mismatch");
        params.biases.push_back(std::move(b));
    }
    ckpt.model.params = std::move(params);

    ckpt.has_trainer_state = get_u32(in, "checkpoint trainer flag") != 0;
    if (ckpt.has_trainer_state) {
        ckpt.adam = make_adam_state(ckpt.model.params);
        get_gradient(in, ckpt.adam.m, "checkpoint adam state");
        get_gradient(in, ckpt.adam.v, "checkpoint adam state");
        ckpt.adam.step = get_u64(in, "checkpoint adam step");
        ckpt.next_step = get_u64(in, "checkpoint step");
    }
    return ckpt;
}

// ---- dataset files ----------------------------------------------------------

void save_field(const std::string& path, const ParameterField& field, Problem problem) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write field file: " + path);
    out.write("PDCLFLD1", 8);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(problem));
    put_u32(out, static_cast<std::uint32_t>(field.kind));
    put_u32(out, static_cast<std::uint32_t>(field.interpolation));
    put_u32(out, field.periodic ? 1 : 0);
    put_u64(out, field.nx);
    put_u64(out, field.ny);
    put_u64(out, field.seed);
    put_doubles(out, field.values);
    if (!out) throw IoError("failed writing field file: " + path);
}

ParameterField load_field(const std::string& path, Problem* problem_out) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open field file: " + path);
    check_magic(in, "PDCLFLD1", "field");
    if (get_u32(in, "field version") != 1) throw IoError("field: unsupported version");
    const auto problem = static_cast<Problem>(get_u32(in, "field problem"));
    if (problem_out) *problem_out = problem;

    ParameterField f;
    f.kind = static_cast<FieldKind>(get_u32(in, "field kind"));
    f.interpolation = static_cast<Interpolation>(get_u32(in, "field interpolation"));
    f.periodic = get_u32(in, "field periodic") != 0;
    f.nx = get_u64(in, "field nx");
    f.ny = get_u64(in, "field ny");
    f.seed = get_u64(in, "field seed");
    f.values = get_doubles(in, "field values");
    if (f.values.size() != f.nx * f.ny) throw IoError("field: value count mismatch");
    return f;
}

namespace {

std::string instance_filename(Split split, std::size_t index) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%06zu.pfield", split == Split::Train ? "train" : "test",
                  index);
    return buf;
}

} // namespace

void write_dataset_dir(const std::string& dir, const Dataset& train, const Dataset* test) {
    fs::create_directories(dir);
    std::vector<std::string> written;
    try {
        json manifest;
        manifest["format_version"] = 1;
        manifest["problem"] = to_string(train.problem);
        json instances = json::array();

        auto emit = [&](const Dataset& ds) {
            for (std::size_t i = 0; i < ds.size(); ++i) {
                const std::string name = instance_filename(ds.split, i);
                const std::string path = (fs::path(dir) / name).string();
                save_field(path, ds.parameter_fields[i], ds.problem);
                written.push_back(path);
                instances.push_back({{"file", name},
                                     {"seed", ds.seeds[i]},
                                     {"split", to_string(ds.split)}});
            }
        };
        emit(train);
        if (test) emit(*test);

        manifest["instances"] = instances;
        const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
        std::ofstream out(manifest_path, std::ios::trunc);
        if (!out) throw IoError("cannot write manifest: " + manifest_path);
        out << manifest.dump(2) << "\n";
        if (!out) throw IoError("failed writing manifest: " + manifest_path);
    } catch (...) {
        for (const auto& p : written) {
            std::error_code ec;
            fs::remove(p, ec);
        }
        throw;
    }
}

Dataset load_dataset_dir(const std::string& dir, Split split) {
    const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open manifest: " + manifest_path);
    json manifest;
    try {
        in >> manifest;
    } catch (const json::exception& e) {
        throw IoError("bad manifest: " + std::string(e.what()));
    }

    Dataset ds;
    ds.problem = problem_from_string(manifest.at("problem").get<std::string>());
    ds.split = split;
    for (const auto& inst : manifest.at("instances")) {
        if (split_from_string(inst.at("split").get<std::string>()) != split) continue;
        const std::string path = (fs::path(dir) / inst.at("file").get<std::string>()).string();
        Problem problem;
        ds.parameter_fields.push_back(load_field(path, &problem));
        if (problem != ds.problem) throw IoError("field/manifest problem mismatch: " + path);
        ds.seeds.push_back(inst.at("seed").get<std::uint64_t>());
    }
    if (ds.parameter_fields.empty())
        throw IoError("dataset has no instances for split '" + to_string(split) + "'");
    return ds;
}

// ---- grids -------------------------------------------------------------------

void save_grid(const std::string& path, const GridSolution& grid) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write grid file: " + path);
    out.write("PDCLGRD1", 8);
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(grid.problem));
    put_u32(out, static_cast<std::uint32_t>(grid.provenance));
    put_u64(out, grid.n1);
    put_u64(out, grid.n2);
    put_doubles(out, grid.values);
    if (!out) throw IoError("failed writing grid file: " + path);
}

GridSolution load_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open grid file: " + path);
    check_magic(in, "PDCLGRD1", "grid");
    if (get_u32(in, "grid version") != 1) throw IoError("grid: unsupported version");
    GridSolution g;
    g.problem = static_cast<Problem>(get_u32(in, "grid problem"));
    g.provenance = static_cast<Provenance>(get_u32(in, "grid provenance"));
    g.n1 = get_u64(in, "grid n1");
    g.n2 = get_u64(in, "grid n2");
    g.values = get_doubles(in, "grid values");
    if (g.values.size() != g.n1 * g.n2) throw IoError("grid: value count mismatch");
    return g;
}

void export_grid_csv(const std::string& path, const GridSolution& grid) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write csv: " + path);
    out.precision(17);
    for (std::size_t i = 0; i < grid.n1; ++i) {
        for (std::size_t j = 0; j < grid.n2; ++j) {
            if (j) out << ',';
            out << grid.at(i, j);
        }
        out << '\n';
    }
    if (!out) throw IoError("failed writing csv: " + path);
}

// ---- history / metrics -------------------------------------------------------

std::string metrics_json(const Metrics& m) {
    json j{{"relative_l2_mean", m.relative_l2_mean},
           {"relative_l2_std", m.relative_l2_std},
           {"residual_mean", m.residual_mean},
           {"residual_std", m.residual_std},
           {"step", m.step},
           {"wall_time_seconds", m.wall_time_seconds},
           {"per_instance_l2", m.per_instance_l2},
           {"per_instance_residual", m.per_instance_residual}};
    return j.dump();
}

std::string history_entry_json(const HistoryEntry& e) {
    json j{{"step", e.step}, {"loss", e.loss}};
    if (e.metrics) j["metrics"] = json::parse(metrics_json(*e.metrics));
    return j.dump();
}

void write_history(const std::string& path, const TrainHistory& history) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write history: " + path);
    for (const auto& e : history.entries) out << history_entry_json(e) << '\n';
    if (!out) throw IoError("failed writing history: " + path);
}

} // namespace pdecl
