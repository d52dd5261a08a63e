#pragma once

#include <Eigen/Dense>
#include <utility>

#include "otgrn/datamodel.hpp"

namespace otgrn {

/// Pairwise Euclidean distances between source and target cells in
/// expression space; rows index source cells, columns target cells.
struct CostMatrix {
    Eigen::MatrixXd values;

    int source_cells() const { return static_cast<int>(values.rows()); }
    int target_cells() const { return static_cast<int>(values.cols()); }
    void validate() const;
};

enum class MarginalMode { balanced, relaxed_source, relaxed_both };

/// Entropic coupling between two snapshots. `gamma(p,q)` is the mass
/// moved from source cell p to target cell q.
struct TransportPlan {
    Eigen::MatrixXd gamma;
    double epsilon = 0.0;
    double source_time = 0.0;
    double target_time = 0.0;
    MarginalMode mode = MarginalMode::balanced;
    bool converged = false;
    int iterations = 0;
    /// Sup-norm violation of the hard marginal constraints (both sides in
    /// balanced mode, target side only when the source is relaxed).
    double marginal_error = 0.0;

    void validate() const;
};

/// Per-source-cell growth rates: scaled row sums of the plan, normalized
/// so the balanced case gives 1 for every cell.
struct GrowthVector {
    Eigen::VectorXd values;

    void validate() const;
};

struct TransportConfig {
    /// Entropic regularization; <= 0 selects 0.05 * mean(M).
    double epsilon = -1.0;
    /// KL marginal penalty; +inf selects balanced (hard-constraint) mode.
    double marginal_penalty = 1.0;
    /// Relax both marginals instead of the source side only.
    bool relax_both_sides = false;
    int max_inner_iters = 2000;
    /// Tolerance on the sup-norm change of the log scaling vectors.
    double inner_tol = 1e-8;
    /// Balanced-mode convergence additionally requires the marginal
    /// violation to fall below this; near-degenerate instances can stall
    /// with tiny per-sweep updates while the marginals are still off.
    double marginal_tol = 1e-7;
    /// Force the direct exp(-M/eps) kernel; by default the solver picks
    /// the log-domain path whenever eps < 0.01 * mean(M) or the kernel
    /// would underflow.
    bool force_direct_kernel = false;
    /// Force the log-domain path regardless of epsilon.
    bool force_log_domain = false;
    int growth_iters = 3;
    /// Relative-change threshold on the growth vector between reweighting
    /// rounds.
    double growth_tol = 1e-4;
    /// Optional per-gene z-scoring before cost computation.
    bool zscore_genes = false;

    bool balanced() const { return std::isinf(marginal_penalty); }
    void validate() const;
};

/// Resolves the automatic epsilon rule for a given cost matrix.
double resolve_epsilon(const CostMatrix& M, const TransportConfig& cfg);

CostMatrix compute_cost_matrix(const ExpressionMatrix& source, const ExpressionMatrix& target);

/// Sinkhorn solve with uniform marginals 1/c_i and 1/c_{i+1}.
TransportPlan solve_entropic_ot(const CostMatrix& M, const TransportConfig& cfg);

/// Sinkhorn solve with an explicit source marginal (target stays uniform).
TransportPlan solve_entropic_ot(const CostMatrix& M, const TransportConfig& cfg,
                                const Eigen::VectorXd& source_marginal);

GrowthVector growth_rates(const TransportPlan& plan);

/// WOT loop: entropic solve, growth-rate extraction, and source-marginal
/// reweighting by g_p^dt, repeated growth_iters times (at least one
/// solve) or until the growth vector stops changing.
std::pair<TransportPlan, GrowthVector> wot_solve(const ExpressionMatrix& source,
                                                 const ExpressionMatrix& target,
                                                 const TransportConfig& cfg);

/// Objective value sum(gamma*M) + eps*sum(gamma*log(gamma)), with
/// 0 log 0 = 0.
double entropic_objective(const TransportPlan& plan, const CostMatrix& M);

/// Transport cost sum(gamma*M) without the entropy term.
double transport_cost(const TransportPlan& plan, const CostMatrix& M);

}  // namespace otgrn
