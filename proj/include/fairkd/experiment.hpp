#pragma once

#include "fairkd/data.hpp"
#include "fairkd/training.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fairkd {

struct TabularSource {
    std::filesystem::path path;
    std::optional<std::filesystem::path> test_path;  // split `path` when absent
    TabularSchema schema;
};

// One JSON document drives every command. Exactly one of `synthetic` and
// `tabular` is set. All seeds are derived from `seed` by labeled hashing;
// the synthetic block carries no seed of its own.
struct ExperimentConfig {
    int schema_version = 1;
    std::uint64_t seed = 0;
    std::optional<SynthConfig> synthetic;
    std::optional<TabularSource> tabular;
    double test_fraction = 0.2;
    TrainConfig train;
    std::vector<double> ablation_grid{0.6, 0.8, 1.0};
    std::filesystem::path output_dir = "runs/default";
    std::vector<std::string> report_formats{"json", "table"};

    TabularSchema schema() const;
    void validate() const;
};

ExperimentConfig parse_experiment_config(std::string_view json_text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Canonical form (sorted keys, output_dir omitted); hashed into the manifest.
std::string canonical_config_json(const ExperimentConfig& cfg);

std::string run_record_to_json(const RunRecord& record);
std::string sha256_hex(std::string_view bytes);

enum class Phase { base, teacher0, teacher1, student };
Phase parse_phase(std::string_view name);
std::string_view phase_name(Phase phase);

// Per-phase seed derived from the root seed.
std::uint64_t phase_seed(const ExperimentConfig& cfg, std::string_view label);

// Each command writes its outputs under `out`, re-reads and validates them,
// and records their hashes in `out`/manifest.json. Errors throw.
void cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out);
void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out, Phase phase);
void cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& out,
              const std::filesystem::path& checkpoint, const std::filesystem::path& dataset);
void cmd_ablate(const ExperimentConfig& cfg, const std::filesystem::path& out);

}  // namespace fairkd
