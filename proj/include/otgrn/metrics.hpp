#pragma once

#include <Eigen/Dense>

#include "otgrn/datamodel.hpp"

namespace otgrn {

/// Rank-based AUROC over the g(g-1) ordered off-diagonal pairs,
/// Mann-Whitney tie convention (each tied positive-negative pair counts
/// one half). Throws on degenerate truth.
double auroc(const EdgeProbabilityMatrix& scores, const Eigen::MatrixXi& truth);

/// Area under the precision-recall curve by average-precision summation;
/// equal scores are processed as one threshold block.
double auprc(const EdgeProbabilityMatrix& scores, const Eigen::MatrixXi& truth);

/// Early precision rate: precision among the top-k scored ordered pairs
/// (k = number of true edges) divided by the random-predictor precision
/// k/(g(g-1)). Ties at the cut resolve by lowest (source, target) index.
double epr(const EdgeProbabilityMatrix& scores, const Eigen::MatrixXi& truth);

struct PpcorResult {
    EdgeProbabilityMatrix scores;
    /// Set when the pooled covariance was singular and a 1e-8 ridge was
    /// applied.
    bool ridge_applied = false;
};

/// Partial-correlation baseline: pools all cells across snapshots,
/// inverts the gene-gene covariance, and scores |rho_rs| with
/// rho_rs = -P_rs / sqrt(P_rr P_ss). Deterministic and symmetric.
PpcorResult ppcor_baseline(const SnapshotDataset& ds);

struct MetricsReport {
    double auroc = 0.0;
    double auprc = 0.0;
    double epr = 0.0;
    int n_genes = 0;
    int k_edges = 0;
};

MetricsReport evaluate(const EdgeProbabilityMatrix& scores, const Eigen::MatrixXi& truth);

}  // namespace otgrn
