#pragma once

#include <optional>
#include <vector>

#include "otgrn/datamodel.hpp"
#include "otgrn/transport.hpp"

namespace otgrn {

/// Chains per-pair argmax successors into cell-level trajectories rooted
/// at the t_0 cells. Ties break to the lowest column index; merging
/// trajectories are kept as-is. Output values are always columns of the
/// input snapshots.
TrajectorySet stitch_trajectories(const SnapshotDataset& ds,
                                  const std::vector<TransportPlan>& plans);

/// Baseline stitching with uniformly random successors (fixed seed).
TrajectorySet stitch_random(const SnapshotDataset& ds, uint64_t seed);

struct TransitionError {
    double mean = 0.0;
    double stddev = 0.0;
};

/// Normalized reconstruction error (1/g)*||vhat - v||_2 per transition,
/// reported as mean and standard deviation over cells for each time
/// index i >= 1. Trajectories are matched to truth by trajectory id.
std::vector<TransitionError> reconstruction_error(const TrajectorySet& reconstructed,
                                                  const TrajectorySet& truth);

/// Random-matching baseline computable from truth alone: the value at
/// each time index i >= 1 is a uniformly random truth trajectory's value
/// at that time (fixed seed).
std::vector<TransitionError> random_matching_error(const TrajectorySet& truth, uint64_t seed);

struct TrajectoryEvalReport {
    std::vector<TransitionError> wot;
    std::vector<TransitionError> ot;  // empty when no second plan set given
    std::vector<TransitionError> random;
    double wot_mean = 0.0;
    double ot_mean = 0.0;
    double random_mean = 0.0;
};

/// Convenience evaluation used by the CLI and the acceptance suite:
/// stitches with the supplied plan sets plus the random baseline and
/// summarizes all of them against the truth.
TrajectoryEvalReport evaluate_reconstruction(const SnapshotDataset& ds,
                                             const TrajectorySet& truth,
                                             const std::vector<TransportPlan>& wot_plans,
                                             const std::vector<TransportPlan>* ot_plans,
                                             uint64_t random_seed);

}  // namespace otgrn
