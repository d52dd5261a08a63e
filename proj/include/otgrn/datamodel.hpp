#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "otgrn/common.hpp"

namespace otgrn {

/// One gene-expression snapshot: rows are genes, columns are cells.
/// Entries are nonnegative simulated expression levels; `time` is the
/// sampling time in simulation-time units. `cell_ids` names each column
/// so that shuffled snapshots can still be matched to their source cells.
struct ExpressionMatrix {
    Eigen::MatrixXd values;
    double time = 0.0;
    std::vector<int> cell_ids;

    int genes() const { return static_cast<int>(values.rows()); }
    int cells() const { return static_cast<int>(values.cols()); }
    void validate() const;
};

/// Ordered snapshots of one experiment. All snapshots share the gene set
/// and gene ordering; timestamps increase strictly.
struct SnapshotDataset {
    enum class Split { train, test, all };

    std::vector<ExpressionMatrix> snapshots;
    std::vector<std::string> gene_names;
    Split split_tag = Split::all;

    int genes() const { return static_cast<int>(gene_names.size()); }
    int times() const { return static_cast<int>(snapshots.size()); }
    void validate() const;
};

/// Per-cell expression sequences, indexed [trajectory, time, gene] with
/// the gene axis contiguous. `trajectory_ids` identifies each trajectory
/// (the originating cell) so reconstructions can be matched to truth.
struct TrajectorySet {
    enum class Origin { ground_truth, reconstructed };

    std::vector<double> values;
    std::vector<double> timestamps;
    std::vector<int> trajectory_ids;
    Origin origin = Origin::ground_truth;
    int n_trajectories = 0;
    int n_times = 0;
    int n_genes = 0;

    static TrajectorySet create(int n_traj, std::vector<double> timestamps, int n_genes,
                                Origin origin);

    double at(int p, int i, int r) const {
        return values[(static_cast<size_t>(p) * n_times + i) * n_genes + r];
    }
    double& at(int p, int i, int r) {
        return values[(static_cast<size_t>(p) * n_times + i) * n_genes + r];
    }
    /// Gene-expression vector of trajectory p at time index i.
    Eigen::Map<const Eigen::VectorXd> point(int p, int i) const {
        return {values.data() + (static_cast<size_t>(p) * n_times + i) * n_genes,
                n_genes};
    }
    void validate() const;
};

enum class EdgeSign { activate, inhibit };
enum class RuleCombine { AND, OR };

struct GrnEdge {
    std::string source;
    std::string target;
    EdgeSign sign = EdgeSign::activate;
};

/// Kinetic rule for one gene. Regulator index sets are derived from the
/// edge list; the remaining fields parameterize the Hill dynamics.
struct GeneKinetics {
    std::vector<int> activators;
    std::vector<int> inhibitors;
    RuleCombine combine = RuleCombine::AND;
    double hill_n = 4.0;
    double hill_k = 0.5;
    double max_rate = 1.0;
    double decay = 1.0;
};

/// Ground-truth directed regulatory graph plus the kinetics used to
/// simulate it. Self loops are rejected; every edge endpoint must be a
/// named gene.
struct GrnDefinition {
    std::vector<std::string> gene_names;
    std::vector<GrnEdge> edges;
    std::vector<GeneKinetics> kinetics;  // indexed like gene_names

    int genes() const { return static_cast<int>(gene_names.size()); }
    int gene_index(const std::string& name) const;
    /// Sign-agnostic binary adjacency, entry (r,s)=1 iff edge r->s exists.
    Eigen::MatrixXi adjacency_matrix() const;
    void validate() const;
};

/// g x g matrix of directed edge-existence probabilities; diagonal is 0.
struct EdgeProbabilityMatrix {
    Eigen::MatrixXd probs;

    int genes() const { return static_cast<int>(probs.rows()); }
    void validate() const;
};

// ---- Serialization ----------------------------------------------------
//
// Dataset manifest: JSON {"gene_names": [...], "snapshots":
// [{"time": t, "file": "..._snap_000.csv"}, ...]}; snapshot files live
// next to the manifest. Snapshot CSV: header row of cell ids, first
// column gene name, locale-independent '.' decimals with exact
// round-trip formatting.

SnapshotDataset load_dataset(const std::filesystem::path& manifest_path);
void save_dataset(const SnapshotDataset& ds, const std::filesystem::path& manifest_path);

GrnDefinition load_grn(const std::filesystem::path& path);
void save_grn(const GrnDefinition& grn, const std::filesystem::path& path);

// Trajectory CSV: columns (trajectory_id, time_index, gene_0 ... gene_{g-1}).
// The header's gene names are returned through gene_names_out when given.
TrajectorySet load_trajectories_csv(const std::filesystem::path& path,
                                    TrajectorySet::Origin origin,
                                    std::vector<std::string>* gene_names_out = nullptr);
void save_trajectories_csv(const TrajectorySet& traj, const std::filesystem::path& path,
                           const std::vector<std::string>& gene_names);

// Adjacency CSV: gene-name header row and row labels, 0/1 entries,
// rows = source gene, columns = target gene.
Eigen::MatrixXi load_adjacency_csv(const std::filesystem::path& path);
void save_adjacency_csv(const Eigen::MatrixXi& adj, const std::vector<std::string>& gene_names,
                        const std::filesystem::path& path);

// Edge-score CSV: (source_gene, target_gene, probability) for every
// ordered off-diagonal pair.
EdgeProbabilityMatrix load_edges_csv(const std::filesystem::path& path,
                                     const std::vector<std::string>& gene_names);
void save_edges_csv(const EdgeProbabilityMatrix& edges,
                    const std::vector<std::string>& gene_names,
                    const std::filesystem::path& path);

}  // namespace otgrn
