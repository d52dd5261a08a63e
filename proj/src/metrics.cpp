#include "otgrn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace otgrn {

namespace {

struct ScoredPair {
    double score;
    int label;
    int source;
    int target;
};

std::vector<ScoredPair> collect_pairs(const EdgeProbabilityMatrix& scores,
                                      const Eigen::MatrixXi& truth) {
    scores.validate();
    const int g = scores.genes();
    if (truth.rows() != g || truth.cols() != g)
        throw Error("score/truth shape mismatch");
    std::vector<ScoredPair> pairs;
    pairs.reserve(static_cast<size_t>(g) * (g - 1));
    int positives = 0;
    for (int r = 0; r < g; ++r)
        for (int s = 0; s < g; ++s) {
            if (r == s) continue;
            const int label = truth(r, s) != 0 ? 1 : 0;
            positives += label;
            pairs.push_back({scores.probs(r, s), label, r, s});
        }
    if (positives == 0 || positives == static_cast<int>(pairs.size()))
        throw Error("degenerate truth: need at least one edge and one non-edge");
    return pairs;
}

}  // namespace

double auroc(const EdgeProbabilityMatrix& scores, const Eigen::MatrixXi& truth) {
    std::vector<ScoredPair> pairs = collect_pairs(scores, truth);
    std::sort(pairs.begin(), pairs.end(),
              [](const ScoredPair& a, const ScoredPair& b) { return a.score < b.score; });

    // Mann-Whitney statistic via a single ascending sweep over tie blocks.
    double u = 0.0;
    int64_t pos_total = 0, neg_total = 0;
    size_t i = 0;
    int64_t neg_below = 0;
    while (i < pairs.size()) {
        size_t j = i;
        int64_t pos_here = 0, neg_here = 0;
        while (j < pairs.size() && pairs[j].score == pairs[i].score) {
            pos_here += pairs[j].label;
            neg_here += 1 - pairs[j].label;
            ++j;
        }
        u += static_cast<double>(pos_here) * neg_below +
             0.5 * static_cast<double>(pos_here) * static_cast<double>(neg_here);
        neg_below += neg_here;
        pos_total += pos_here;
        neg_total += neg_here;
        i = j;
    }
    return u / (static_cast<double>(pos_total) * static_cast<double>(neg_total));
}

double auprc(const EdgeProbabilityMatrix& scores, const Eigen::MatrixXi& truth) {
    std::vector<ScoredPair> pairs = collect_pairs(scores, truth);
    std::sort(pairs.begin(), pairs.end(),
              [](const ScoredPair& a, const ScoredPair& b) { return a.score > b.score; });
    int64_t pos_total = 0;
    for (const auto& p : pairs) pos_total += p.label;

    double area = 0.0;
    int64_t tp = 0, fp = 0;
    double recall_prev = 0.0;
    size_t i = 0;
    while (i < pairs.size()) {
        size_t j = i;
        while (j < pairs.size() && pairs[j].score == pairs[i].score) {
            tp += pairs[j].label;
            fp += 1 - pairs[j].label;
            ++j;
        }
        const double recall = static_cast<double>(tp) / pos_total;
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        area += (recall - recall_prev) * precision;
        recall_prev = recall;
        i = j;
    }
    return area;
}

double epr(const EdgeProbabilityMatrix& scores, const Eigen::MatrixXi& truth) {
    std::vector<ScoredPair> pairs = collect_pairs(scores, truth);
    int64_t k = 0;
    for (const auto& p : pairs) k += p.label;
    std::sort(pairs.begin(), pairs.end(), [](const ScoredPair& a, const ScoredPair& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.source != b.source) return a.source < b.source;
        return a.target < b.target;
    });
    int64_t tp = 0;
    for (int64_t i = 0; i < k; ++i) tp += pairs[static_cast<size_t>(i)].label;
    const double precision = static_cast<double>(tp) / static_cast<double>(k);
    const double random_precision =
        static_cast<double>(k) / static_cast<double>(pairs.size());
    return precision / random_precision;
}

PpcorResult ppcor_baseline(const SnapshotDataset& ds) {
    ds.validate();
    const int g = ds.genes();
    int64_t n_cells = 0;
    for (const auto& snap : ds.snapshots) n_cells += snap.cells();
    if (n_cells <= g)
        throw Error("ppcor needs more pooled cells than genes");

    Eigen::MatrixXd pooled(g, n_cells);
    int64_t col = 0;
    for (const auto& snap : ds.snapshots) {
        pooled.middleCols(col, snap.cells()) = snap.values;
        col += snap.cells();
    }
    const Eigen::VectorXd mean = pooled.rowwise().mean();
    const Eigen::MatrixXd centered = pooled.colwise() - mean;
    Eigen::MatrixXd cov =
        centered * centered.transpose() / static_cast<double>(n_cells - 1);

    PpcorResult result;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(cov);
    if (!lu.isInvertible()) {
        result.ridge_applied = true;
        cov += 1e-8 * Eigen::MatrixXd::Identity(g, g);
        lu.compute(cov);
        if (!lu.isInvertible())
            throw NumericError("pooled covariance singular even after ridge");
    }
    const Eigen::MatrixXd precision = lu.inverse();

    result.scores.probs = Eigen::MatrixXd::Zero(g, g);
    for (int r = 0; r < g; ++r)
        for (int s = 0; s < g; ++s) {
            if (r == s) continue;
            const double rho =
                -precision(r, s) / std::sqrt(precision(r, r) * precision(s, s));
            // Clamp roundoff excursions outside [-1, 1].
            result.scores.probs(r, s) = std::min(std::abs(rho), 1.0);
        }
    // Exact symmetry regardless of inverse roundoff.
    for (int r = 0; r < g; ++r)
        for (int s = r + 1; s < g; ++s)
            result.scores.probs(s, r) = result.scores.probs(r, s);
    result.scores.validate();
    return result;
}

MetricsReport evaluate(const EdgeProbabilityMatrix& scores, const Eigen::MatrixXi& truth) {
    MetricsReport report;
    report.auroc = auroc(scores, truth);
    report.auprc = auprc(scores, truth);
    report.epr = epr(scores, truth);
    report.n_genes = scores.genes();
    report.k_edges = truth.sum() - truth.diagonal().sum();
    return report;
}

}  // namespace otgrn
