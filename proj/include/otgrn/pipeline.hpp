#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "otgrn/nri.hpp"
#include "otgrn/simulate.hpp"
#include "otgrn/transport.hpp"

namespace otgrn {

/// Fully resolved experiment configuration. Exactly one of the dataset /
/// simulate sources is active. Every field has a concrete value after
/// resolution so the report can echo the entire configuration.
struct PipelineConfig {
    std::string out_dir;
    uint64_t master_seed = 0;
    int n_seeds = 10;

    bool use_simulation = false;
    std::string grn = "mcad-like";  // builtin name or path to a GRN JSON
    SimulationConfig sim;

    std::string train_manifest;      // dataset mode
    std::string truth_adjacency;     // dataset mode
    TransportConfig transport;
    NriConfig nri;
};

/// Merges defaults, the config file, and CLI overrides (highest
/// precedence last) and validates the result. Throws ConfigError on
/// conflicting keys, e.g. both "dataset" and "simulate" blocks.
PipelineConfig resolve_pipeline_config(const nlohmann::json& file_config,
                                       const nlohmann::json& overrides);

/// JSON echo of every resolved value, suitable for --dry-run and for
/// embedding in reports.
nlohmann::json pipeline_config_to_json(const PipelineConfig& cfg);

struct PipelineResult {
    nlohmann::json summary;  // resolved config + metrics + stage timings
    nlohmann::json metrics;  // timing-free, byte-comparable across reruns
};

/// Runs simulate (optional), transport, stitch, infer over n_seeds seeds,
/// and evaluate; writes all stage outputs plus summary.json and
/// metrics.json under cfg.out_dir.
PipelineResult run_pipeline(const PipelineConfig& cfg);

/// Loads a gamma matrix written by the transport stage.
Eigen::MatrixXd load_matrix_csv(const std::filesystem::path& path);
void save_matrix_csv(const Eigen::MatrixXd& m, const std::filesystem::path& path);

/// Resolves a GRN argument: builtin name or path to a JSON file.
GrnDefinition resolve_grn(const std::string& name_or_path);

}  // namespace otgrn
