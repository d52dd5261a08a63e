#include "otgrn/trajectory.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

namespace otgrn {

namespace {

void check_plans(const SnapshotDataset& ds, const std::vector<TransportPlan>& plans) {
    ds.validate();
    if (plans.size() + 1 != ds.snapshots.size())
        throw Error("need one transport plan per consecutive snapshot pair");
    for (size_t i = 0; i < plans.size(); ++i) {
        if (plans[i].gamma.rows() != ds.snapshots[i].cells() ||
            plans[i].gamma.cols() != ds.snapshots[i + 1].cells())
            throw Error("plan dimensions do not match snapshot cell counts");
    }
}

TrajectorySet stitch_with_successor(
    const SnapshotDataset& ds,
    const std::function<int(int step, int current)>& successor) {
    const int k = ds.times();
    const int g = ds.genes();
    const int roots = ds.snapshots[0].cells();
    std::vector<double> ts(k);
    for (int i = 0; i < k; ++i) ts[i] = ds.snapshots[i].time;
    TrajectorySet out =
        TrajectorySet::create(roots, std::move(ts), g, TrajectorySet::Origin::reconstructed);
    if (!ds.snapshots[0].cell_ids.empty()) out.trajectory_ids = ds.snapshots[0].cell_ids;

    for (int p = 0; p < roots; ++p) {
        int current = p;
        for (int r = 0; r < g; ++r) out.at(p, 0, r) = ds.snapshots[0].values(r, p);
        for (int i = 0; i + 1 < k; ++i) {
            current = successor(i, current);
            for (int r = 0; r < g; ++r)
                out.at(p, i + 1, r) = ds.snapshots[i + 1].values(r, current);
        }
    }
    out.validate();
    return out;
}

}  // namespace

TrajectorySet stitch_trajectories(const SnapshotDataset& ds,
                                  const std::vector<TransportPlan>& plans) {
    check_plans(ds, plans);
    return stitch_with_successor(ds, [&](int step, int current) {
        const auto row = plans[step].gamma.row(current);
        int best = 0;
        double best_val = row[0];
        for (int q = 1; q < row.size(); ++q) {
            if (row[q] > best_val) {
                best_val = row[q];
                best = q;
            }
        }
        if (!(best_val > 0.0))
            throw NumericError("transport plan row is all zeros; no admissible successor");
        return best;
    });
}

TrajectorySet stitch_random(const SnapshotDataset& ds, uint64_t seed) {
    ds.validate();
    const int k = ds.times();
    std::vector<std::mt19937_64> streams;
    streams.reserve(k - 1);
    for (int i = 0; i + 1 < k; ++i)
        streams.emplace_back(derive_seed(seed, "random_stitch", static_cast<uint64_t>(i)));
    std::vector<std::uniform_int_distribution<int>> dists;
    for (int i = 0; i + 1 < k; ++i)
        dists.emplace_back(0, ds.snapshots[i + 1].cells() - 1);
    return stitch_with_successor(
        ds, [&](int step, int) { return dists[step](streams[step]); });
}

std::vector<TransitionError> reconstruction_error(const TrajectorySet& reconstructed,
                                                  const TrajectorySet& truth) {
    reconstructed.validate();
    truth.validate();
    if (reconstructed.n_times != truth.n_times || reconstructed.n_genes != truth.n_genes)
        throw Error("shape mismatch between reconstructed and truth trajectories");

    std::unordered_map<int, int> truth_row;
    for (int p = 0; p < truth.n_trajectories; ++p)
        truth_row[truth.trajectory_ids[p]] = p;
    std::vector<int> match(reconstructed.n_trajectories);
    for (int p = 0; p < reconstructed.n_trajectories; ++p) {
        auto it = truth_row.find(reconstructed.trajectory_ids[p]);
        if (it == truth_row.end())
            throw Error("unmatched trajectory identity: " +
                        std::to_string(reconstructed.trajectory_ids[p]));
        match[p] = it->second;
    }

    const int g = reconstructed.n_genes;
    std::vector<TransitionError> out(reconstructed.n_times - 1);
    for (int i = 1; i < reconstructed.n_times; ++i) {
        double sum = 0.0, sum_sq = 0.0;
        for (int p = 0; p < reconstructed.n_trajectories; ++p) {
            const double err =
                (reconstructed.point(p, i) - truth.point(match[p], i)).norm() / g;
            sum += err;
            sum_sq += err * err;
        }
        const int n = reconstructed.n_trajectories;
        const double mean = sum / n;
        out[i - 1].mean = mean;
        out[i - 1].stddev = std::sqrt(std::max(sum_sq / n - mean * mean, 0.0));
    }
    return out;
}

std::vector<TransitionError> random_matching_error(const TrajectorySet& truth,
                                                   uint64_t seed) {
    truth.validate();
    const int g = truth.n_genes;
    const int n = truth.n_trajectories;
    std::vector<TransitionError> out(truth.n_times - 1);
    for (int i = 1; i < truth.n_times; ++i) {
        std::mt19937_64 rng(derive_seed(seed, "random_match", static_cast<uint64_t>(i)));
        std::uniform_int_distribution<int> pick(0, n - 1);
        double sum = 0.0, sum_sq = 0.0;
        for (int p = 0; p < n; ++p) {
            const int q = pick(rng);
            const double err = (truth.point(q, i) - truth.point(p, i)).norm() / g;
            sum += err;
            sum_sq += err * err;
        }
        const double mean = sum / n;
        out[i - 1].mean = mean;
        out[i - 1].stddev = std::sqrt(std::max(sum_sq / n - mean * mean, 0.0));
    }
    return out;
}

TrajectoryEvalReport evaluate_reconstruction(const SnapshotDataset& ds,
                                             const TrajectorySet& truth,
                                             const std::vector<TransportPlan>& wot_plans,
                                             const std::vector<TransportPlan>* ot_plans,
                                             uint64_t random_seed) {
    TrajectoryEvalReport report;
    auto average = [](const std::vector<TransitionError>& errs) {
        double s = 0.0;
        for (const auto& e : errs) s += e.mean;
        return errs.empty() ? 0.0 : s / errs.size();
    };
    report.wot = reconstruction_error(stitch_trajectories(ds, wot_plans), truth);
    report.wot_mean = average(report.wot);
    if (ot_plans != nullptr) {
        report.ot = reconstruction_error(stitch_trajectories(ds, *ot_plans), truth);
        report.ot_mean = average(report.ot);
    }
    report.random = reconstruction_error(stitch_random(ds, random_seed), truth);
    report.random_mean = average(report.random);
    return report;
}

}  // namespace otgrn
