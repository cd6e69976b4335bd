#pragma once

#include "pdecl/oracles.hpp"
#include "pdecl/training.hpp"

#include <map>
#include <set>
#include <string>

namespace pdecl {

// ---- strict key=value config ----------------------------------------------

/// Human-editable nested key-value text: `key = value` lines, `[section]`
/// headers prefixing subsequent keys as `section.key`, `#` comments. Every
/// key must be consumed by a typed getter before finish(); leftovers are
/// config errors, so typos never pass silently.
class ConfigFile {
public:
    static ConfigFile load(const std::string& path);
    static ConfigFile from_text(const std::string& text);

    bool has(const std::string& key) const;
    std::string str(const std::string& key);
    std::string str(const std::string& key, const std::string& fallback);
    long long integer(const std::string& key, long long fallback);
    double real(const std::string& key, double fallback);
    bool flag(const std::string& key, bool fallback);
    std::vector<std::string> list(const std::string& key); // comma-separated

    /// Apply a "key=value" override (CLI --set).
    void apply_override(const std::string& assignment);

    /// Throws ConfigError naming any key no getter consumed.
    void finish() const;

private:
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

// ---- checkpoints -----------------------------------------------------------

/// A model checkpoint, optionally carrying trainer state for exact resume.
struct Checkpoint {
    Model model;
    bool has_trainer_state = false;
    AdamState adam;
    std::size_t next_step = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// ---- dataset files ---------------------------------------------------------

void save_field(const std::string& path, const ParameterField& field, Problem problem);
ParameterField load_field(const std::string& path, Problem* problem_out = nullptr);

/// Writes one .pfield file per instance plus manifest.json covering both
/// splits (test may be null). Cleans up partial output on failure.
void write_dataset_dir(const std::string& dir, const Dataset& train, const Dataset* test);
Dataset load_dataset_dir(const std::string& dir, Split split);

// ---- grids and metrics -----------------------------------------------------

void save_grid(const std::string& path, const GridSolution& grid);
GridSolution load_grid(const std::string& path);
/// One row per x grid line, comma-separated.
void export_grid_csv(const std::string& path, const GridSolution& grid);

/// Line-delimited JSON records.
std::string history_entry_json(const HistoryEntry& entry);
std::string metrics_json(const Metrics& metrics);
void write_history(const std::string& path, const TrainHistory& history);

} // namespace pdecl
