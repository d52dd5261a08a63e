#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "otgrn/datamodel.hpp"

namespace otgrn {

/// Settings for the stochastic Hill-kinetics simulator and the
/// snapshot assembly step. Defaults target desk-scale runs.
struct SimulationConfig {
    int n_cells = 800;
    int n_steps = 1000;
    double dt = 0.01;
    double noise_sigma = 0.05;
    std::vector<int> retained_times = {0, 50, 100, 400, 600, 650, 1000};
    double train_fraction = 0.75;
    uint64_t master_seed = 0;

    void validate() const;
};

enum class HillMode { activate, inhibit };

/// Hill response in [0,1]: x^n/(K^n+x^n) for activation, K^n/(K^n+x^n)
/// for inhibition. Requires x >= 0, K > 0, n >= 1.
double hill_term(double x, double K, double n, HillMode mode);

/// Euler-Maruyama integration of
///   dx_r = (m_r * f_r(regulators) - delta_r * x_r) dt + sigma sqrt(dt) xi
/// where f_r combines the Hill terms of gene r's regulators by min (AND)
/// or max (OR); genes without regulators produce at full rate. Expression
/// is clamped at 0. Initial state is uniform in [0,1] per gene. Output is
/// bit-identical for identical (grn, cfg); each cell has its own RNG
/// stream so the result does not depend on the thread count.
TrajectorySet simulate_trajectories(const GrnDefinition& grn, const SimulationConfig& cfg);

struct AssembledDataset {
    SnapshotDataset train;
    SnapshotDataset test;
    /// Retained-time subsample of the input trajectories, all cells in
    /// original order and unshuffled; the datasets' cell_ids index into it.
    TrajectorySet truth;
};

/// Keeps only the retained time indices, splits cells by trajectory into
/// train/test (floor rule, remainder to test), and independently shuffles
/// the cell columns of every snapshot with per-(snapshot, split) seeds.
AssembledDataset assemble_dataset(const TrajectorySet& traj, const SimulationConfig& cfg);

/// Bundled stand-in networks: "mcad-like" (5 genes) and "vsc-like"
/// (8 genes), dominated by mutual-inhibition pairs in the style of the
/// curated networks they replace.
GrnDefinition builtin_grn(std::string_view name);

}  // namespace otgrn
