// Acceptance suite: runs every gate the project must clear and prints
// one PASS/FAIL line per criterion. Exit code 0 iff all criteria pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "otgrn/gradcheck.hpp"
#include "otgrn/metrics.hpp"
#include "otgrn/pipeline.hpp"
#include "otgrn/trajectory.hpp"

using namespace otgrn;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

class Timer {
   public:
    Timer() : start_(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    }

   private:
    std::chrono::steady_clock::time_point start_;
};

void report(int criterion, bool pass, const std::string& what, const std::string& detail,
            double seconds) {
    if (!pass) ++g_failures;
    std::printf("%s criterion %d: %s (%s) [%.1fs]\n", pass ? "PASS" : "FAIL", criterion,
                what.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return buf;
}

// ---- criterion 1: Sinkhorn vs brute-force LP ------------------------------

double lp_optimum(const Eigen::MatrixXd& M) {
    const int n = static_cast<int>(M.rows());
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double cost = 0.0;
        for (int i = 0; i < n; ++i) cost += M(i, perm[i]);
        best = std::min(best, cost / n);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

void criterion_1() {
    Timer timer;
    std::mt19937_64 rng(20260801);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> size_dist(2, 5);
    double worst_gap = 0.0, worst_marginal = 0.0;
    bool pass = true;
    for (int instance = 0; instance < 50; ++instance) {
        const int n = size_dist(rng);
        const int g = 3;
        Eigen::MatrixXd xa(g, n), xb(g, n);
        for (int r = 0; r < g; ++r)
            for (int c = 0; c < n; ++c) {
                xa(r, c) = unif(rng);
                xb(r, c) = unif(rng);
            }
        ExpressionMatrix a, b;
        a.values = xa;
        b.values = xb;
        a.time = 0.0;
        b.time = 1.0;
        CostMatrix M = compute_cost_matrix(a, b);

        TransportConfig cfg;
        cfg.marginal_penalty = std::numeric_limits<double>::infinity();
        cfg.epsilon = 0.01 * M.values.mean();
        cfg.force_log_domain = true;
        cfg.inner_tol = 1e-12;
        cfg.max_inner_iters = 500000;
        TransportPlan plan = solve_entropic_ot(M, cfg);

        const double lp = lp_optimum(M.values);
        const double cost = transport_cost(plan, M);
        const double gap = (cost - lp) / lp;
        worst_gap = std::max(worst_gap, gap);
        const double marg = std::max(
            (plan.gamma.rowwise().sum().array() - 1.0 / n).abs().maxCoeff(),
            (plan.gamma.colwise().sum().array() - 1.0 / n).abs().maxCoeff());
        worst_marginal = std::max(worst_marginal, marg);
        pass = pass && gap <= 0.02 && marg <= 1e-6;
    }
    const double secs = timer.seconds();
    pass = pass && secs < 5.0;
    report(1, pass, "Sinkhorn cost within 2% of brute-force LP on 50 instances",
           fmt("worst gap %.4f%%, worst marginal violation %.2e", 100.0 * worst_gap,
               worst_marginal),
           secs);
}

// ---- criterion 2: gradient fidelity ------------------------------------

void criterion_2() {
    Timer timer;
    double worst = 0.0;
    std::string worst_name;
    for (const auto& entry : gradcheck_primitives(12345)) {
        if (entry.max_rel_error > worst) {
            worst = entry.max_rel_error;
            worst_name = entry.name;
        }
    }
    GradCheckEntry toy = gradcheck_nri_toy(12345);
    if (toy.max_rel_error > worst) {
        worst = toy.max_rel_error;
        worst_name = toy.name;
    }
    const double secs = timer.seconds();
    const bool pass = worst < 1e-4 && secs < 30.0;
    report(2, pass, "all primitives and the 3-gene model loss pass finite differences",
           fmt("worst relative error %.2e (%s)", worst, worst_name.c_str()), secs);
}

// ---- criterion 3: trajectory reconstruction quality ------------------------

void criterion_3() {
    Timer timer;
    SimulationConfig sim;
    sim.master_seed = 7;
    GrnDefinition grn = builtin_grn("mcad-like");
    AssembledDataset built = assemble_dataset(simulate_trajectories(grn, sim), sim);

    TransportConfig wot_cfg;  // defaults: unbalanced, growth reweighting
    TransportConfig ot_cfg;
    ot_cfg.marginal_penalty = std::numeric_limits<double>::infinity();

    const int n_pairs = built.train.times() - 1;
    std::vector<TransportPlan> wot_plans(n_pairs), ot_plans(n_pairs);
    parallel_for(n_pairs, [&](int i) {
        wot_plans[i] =
            wot_solve(built.train.snapshots[i], built.train.snapshots[i + 1], wot_cfg).first;
        ot_plans[i] = solve_entropic_ot(
            compute_cost_matrix(built.train.snapshots[i], built.train.snapshots[i + 1]),
            ot_cfg);
    });
    TrajectoryEvalReport report_data =
        evaluate_reconstruction(built.train, built.truth, wot_plans, &ot_plans, 99);

    bool wot_below_random_everywhere = true;
    int ordering_hits = 0;
    for (int i = 0; i < n_pairs; ++i) {
        wot_below_random_everywhere =
            wot_below_random_everywhere && report_data.wot[i].mean < report_data.random[i].mean;
        if (report_data.wot[i].mean <= report_data.ot[i].mean &&
            report_data.ot[i].mean <= report_data.random[i].mean)
            ++ordering_hits;
    }
    const bool ratio_ok = report_data.wot_mean < 0.6 * report_data.random_mean;
    const double secs = timer.seconds();
    const bool pass =
        wot_below_random_everywhere && ratio_ok && ordering_hits >= 5 && secs < 120.0;
    report(3, pass, "growth-reweighted stitching beats the random baseline",
           fmt("mean error %.4f vs ot %.4f vs random %.4f, ordering holds on %d/%d",
               report_data.wot_mean, report_data.ot_mean, report_data.random_mean,
               ordering_hits, n_pairs),
           secs);
}

// ---- criteria 4 + 5a: end-to-end inference --------------------------------

Eigen::MatrixXi permute_truth(const Eigen::MatrixXi& truth, std::mt19937_64& rng) {
    const int g = static_cast<int>(truth.rows());
    std::vector<int> slots;
    std::vector<int> values;
    for (int r = 0; r < g; ++r)
        for (int s = 0; s < g; ++s) {
            if (r == s) continue;
            slots.push_back(r * g + s);
            values.push_back(truth(r, s));
        }
    std::shuffle(values.begin(), values.end(), rng);
    Eigen::MatrixXi permuted = Eigen::MatrixXi::Zero(g, g);
    for (size_t i = 0; i < slots.size(); ++i)
        permuted(slots[i] / g, slots[i] % g) = values[i];
    return permuted;
}

struct EndToEndResult {
    double auroc_mean = 0.0;
    double epr_mean = 0.0;
    double null_se = 0.0;
    bool significant = false;
};

EndToEndResult run_end_to_end(const std::string& grn_name, uint64_t master_seed,
                              int n_seeds) {
    GrnDefinition grn = builtin_grn(grn_name);
    SimulationConfig sim;
    sim.master_seed = master_seed;
    AssembledDataset built = assemble_dataset(simulate_trajectories(grn, sim), sim);

    TransportConfig tcfg;
    const int n_pairs = built.train.times() - 1;
    std::vector<TransportPlan> plans(n_pairs);
    parallel_for(n_pairs, [&](int i) {
        plans[i] =
            wot_solve(built.train.snapshots[i], built.train.snapshots[i + 1], tcfg).first;
    });
    TrajectorySet stitched = stitch_trajectories(built.train, plans);

    NriConfig nri;
    nri.encoder_kind = NriConfig::Encoder::gin;
    nri.hidden_dim = 64;
    nri.epochs = 300;
    nri.batch_size = 128;
    nri.lr = 1e-3;

    const Eigen::MatrixXi truth = grn.adjacency_matrix();
    std::vector<double> aurocs(n_seeds), eprs(n_seeds);
    std::vector<EdgeProbabilityMatrix> edge_sets(n_seeds);
    parallel_for(n_seeds, [&](int i) {
        NriConfig cfg = nri;
        cfg.seed = derive_seed(master_seed, "nri_seed", static_cast<uint64_t>(i));
        NriTrainResult result = train_nri(stitched, cfg);
        edge_sets[i] = result.edges;
        aurocs[i] = auroc(result.edges, truth);
        eprs[i] = epr(result.edges, truth);
    });

    EndToEndResult out;
    for (int i = 0; i < n_seeds; ++i) {
        out.auroc_mean += aurocs[i];
        out.epr_mean += eprs[i];
    }
    out.auroc_mean /= n_seeds;
    out.epr_mean /= n_seeds;

    // Shuffled-truth null: AUROC of each seed's scores against adjacency
    // matrices with the same edge count but permuted positions.
    std::mt19937_64 rng(derive_seed(master_seed, "null"));
    std::vector<double> null_values;
    for (int i = 0; i < n_seeds; ++i)
        for (int rep = 0; rep < 40; ++rep)
            null_values.push_back(auroc(edge_sets[i], permute_truth(truth, rng)));
    double null_mean = 0.0;
    for (double v : null_values) null_mean += v;
    null_mean /= null_values.size();
    double null_var = 0.0;
    for (double v : null_values) null_var += (v - null_mean) * (v - null_mean);
    null_var /= null_values.size();
    // Standard error of an n_seeds-mean under the null.
    out.null_se = std::sqrt(null_var / n_seeds);
    out.significant = out.auroc_mean - 0.5 >= 3.0 * out.null_se;
    return out;
}

void criteria_4_and_5(const EndToEndResult& mcad, const EndToEndResult& vsc,
                      double secs_4) {
    const bool pass4 = mcad.auroc_mean >= 0.65 && vsc.auroc_mean >= 0.65 &&
                       mcad.significant && vsc.significant && secs_4 < 1800.0;
    report(4, pass4, "10-seed inference clears AUROC 0.65 on both bundled networks",
           fmt("mcad %.4f (3se null %.4f), vsc %.4f (3se null %.4f)", mcad.auroc_mean,
               3.0 * mcad.null_se, vsc.auroc_mean, 3.0 * vsc.null_se),
           secs_4);

    Timer timer;
    // Monte-Carlo EPR of uniform-random scores against the 5-gene truth.
    GrnDefinition grn = builtin_grn("mcad-like");
    const Eigen::MatrixXi truth = grn.adjacency_matrix();
    const int g = grn.genes();
    std::mt19937_64 rng(515151);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    double mean_epr = 0.0;
    const int reps = 1000;
    for (int rep = 0; rep < reps; ++rep) {
        EdgeProbabilityMatrix scores;
        scores.probs = Eigen::MatrixXd::Zero(g, g);
        for (int r = 0; r < g; ++r)
            for (int s = 0; s < g; ++s)
                if (r != s) scores.probs(r, s) = unif(rng);
        mean_epr += epr(scores, truth);
    }
    mean_epr /= reps;
    const bool pass5 =
        mcad.epr_mean > 1.0 && std::abs(mean_epr - 1.0) <= 0.05;
    report(5, pass5, "pipeline EPR beats random and the metric is calibrated",
           fmt("pipeline epr %.3f, random-score epr %.4f", mcad.epr_mean, mean_epr),
           timer.seconds());
}

// ---- criterion 6: metric oracles ----------------------------------------

double auroc_oracle(const Eigen::MatrixXd& scores, const Eigen::MatrixXi& truth) {
    const int g = static_cast<int>(truth.rows());
    std::vector<double> pos, neg;
    for (int r = 0; r < g; ++r)
        for (int s = 0; s < g; ++s) {
            if (r == s) continue;
            (truth(r, s) ? pos : neg).push_back(scores(r, s));
        }
    double wins = 0.0;
    for (double p : pos)
        for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    return wins / (static_cast<double>(pos.size()) * neg.size());
}

double auprc_oracle(const Eigen::MatrixXd& scores, const Eigen::MatrixXi& truth) {
    const int g = static_cast<int>(truth.rows());
    std::vector<std::pair<double, int>> pairs;
    int pos_total = 0;
    for (int r = 0; r < g; ++r)
        for (int s = 0; s < g; ++s) {
            if (r == s) continue;
            pairs.emplace_back(scores(r, s), truth(r, s));
            pos_total += truth(r, s);
        }
    std::vector<double> thresholds;
    for (const auto& p : pairs) thresholds.push_back(p.first);
    std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
    double area = 0.0, recall_prev = 0.0;
    for (double thr : thresholds) {
        int tp = 0, fp = 0;
        for (const auto& p : pairs)
            if (p.first >= thr) p.second ? ++tp : ++fp;
        const double recall = static_cast<double>(tp) / pos_total;
        area += (recall - recall_prev) * (static_cast<double>(tp) / (tp + fp));
        recall_prev = recall;
    }
    return area;
}

double epr_oracle(const Eigen::MatrixXd& scores, const Eigen::MatrixXi& truth) {
    const int g = static_cast<int>(truth.rows());
    struct Row {
        double score;
        int r, s, label;
    };
    std::vector<Row> rows;
    int k = 0;
    for (int r = 0; r < g; ++r)
        for (int s = 0; s < g; ++s) {
            if (r == s) continue;
            rows.push_back({scores(r, s), r, s, truth(r, s)});
            k += truth(r, s);
        }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.r != b.r) return a.r < b.r;
        return a.s < b.s;
    });
    int tp = 0;
    for (int i = 0; i < k; ++i) tp += rows[i].label;
    return (static_cast<double>(tp) / k) / (static_cast<double>(k) / rows.size());
}

void criterion_6() {
    Timer timer;
    std::mt19937_64 rng(606060);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> size_dist(5, 8);
    double auroc_diff = 0.0, auprc_diff = 0.0, epr_diff = 0.0;
    for (int instance = 0; instance < 100; ++instance) {
        const int g = size_dist(rng);
        EdgeProbabilityMatrix scores;
        scores.probs = Eigen::MatrixXd::Zero(g, g);
        Eigen::MatrixXi truth = Eigen::MatrixXi::Zero(g, g);
        int positives = 0;
        for (int r = 0; r < g; ++r)
            for (int s = 0; s < g; ++s) {
                if (r == s) continue;
                // Quantized scores on half the instances to exercise ties.
                const double v = unif(rng);
                scores.probs(r, s) = instance % 2 == 0 ? v : std::round(v * 5.0) / 5.0;
                truth(r, s) = unif(rng) < 0.3 ? 1 : 0;
                positives += truth(r, s);
            }
        if (positives == 0) truth(0, 1) = 1;
        if (positives == g * (g - 1)) truth(1, 0) = 0;

        auroc_diff = std::max(auroc_diff,
                              std::abs(auroc(scores, truth) - auroc_oracle(scores.probs, truth)));
        auprc_diff = std::max(auprc_diff,
                              std::abs(auprc(scores, truth) - auprc_oracle(scores.probs, truth)));
        epr_diff =
            std::max(epr_diff, std::abs(epr(scores, truth) - epr_oracle(scores.probs, truth)));
    }
    const bool pass = auroc_diff == 0.0 && epr_diff == 0.0 && auprc_diff <= 1e-12;
    report(6, pass, "metrics match brute-force oracles on 100 random instances",
           fmt("max diffs auroc %.1e auprc %.1e epr %.1e", auroc_diff, auprc_diff, epr_diff),
           timer.seconds());
}

// ---- criterion 7: ppcor baseline ------------------------------------------

void criterion_7() {
    Timer timer;
    std::mt19937_64 rng(707070);
    std::normal_distribution<double> normal(0.0, 1.0);

    // g = 2: partial correlation reduces to Pearson correlation.
    const int n = 600;
    SnapshotDataset two;
    two.gene_names = {"a", "b"};
    for (int snap = 0; snap < 2; ++snap) {
        ExpressionMatrix m;
        m.time = snap;
        m.values.resize(2, n / 2);
        for (int c = 0; c < n / 2; ++c) {
            const double x = std::abs(normal(rng)) + 0.05;
            m.values(0, c) = x;
            m.values(1, c) = std::abs(0.5 * x + 0.4 * std::abs(normal(rng))) + 0.05;
        }
        two.snapshots.push_back(std::move(m));
    }
    PpcorResult pearson_case = ppcor_baseline(two);
    Eigen::MatrixXd pooled(2, n);
    pooled << two.snapshots[0].values, two.snapshots[1].values;
    const Eigen::VectorXd mean = pooled.rowwise().mean();
    const Eigen::MatrixXd centered = pooled.colwise() - mean;
    const double pearson =
        centered.row(0).dot(centered.row(1)) /
        std::sqrt(centered.row(0).squaredNorm() * centered.row(1).squaredNorm());
    const double pearson_diff =
        std::abs(pearson_case.scores.probs(0, 1) - std::abs(pearson));

    // Determinism and symmetry on a 5-gene dataset.
    SnapshotDataset five;
    for (int r = 0; r < 5; ++r) five.gene_names.push_back("g" + std::to_string(r));
    for (int snap = 0; snap < 3; ++snap) {
        ExpressionMatrix m;
        m.time = snap;
        m.values.resize(5, 50);
        for (int r = 0; r < 5; ++r)
            for (int c = 0; c < 50; ++c) m.values(r, c) = std::abs(normal(rng));
        five.snapshots.push_back(std::move(m));
    }
    PpcorResult a = ppcor_baseline(five);
    PpcorResult b = ppcor_baseline(five);
    const bool deterministic = (a.scores.probs - b.scores.probs).cwiseAbs().maxCoeff() == 0.0;
    const bool symmetric =
        (a.scores.probs - a.scores.probs.transpose()).cwiseAbs().maxCoeff() == 0.0;

    const bool pass = pearson_diff <= 1e-12 && deterministic && symmetric;
    report(7, pass, "partial-correlation baseline is deterministic, symmetric, Pearson at g=2",
           fmt("pearson diff %.1e, deterministic %d, symmetric %d", pearson_diff,
               deterministic, symmetric),
           timer.seconds());
}

// ---- criterion 8: reproducibility ----------------------------------------

void criterion_8() {
    Timer timer;
    const fs::path out = fs::temp_directory_path() / "otgrn_acceptance_repro";
    fs::remove_all(out);
    nlohmann::json cfg_json = {
        {"out", out.string()},
        {"master_seed", 42},
        {"n_seeds", 2},
        {"simulate", {{"grn", "mcad-like"}, {"n_cells", 120}, {"n_steps", 200},
                      {"retained_times", {0, 40, 100, 200}}}},
        {"nri", {{"hidden_dim", 16}, {"epochs", 20}, {"batch_size", 32}}}};
    PipelineConfig cfg = resolve_pipeline_config(cfg_json, nlohmann::json::object());

    auto metrics_bytes = [&] {
        run_pipeline(cfg);
        std::ifstream in(out / "metrics.json", std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    const std::string first = metrics_bytes();
    const std::string second = metrics_bytes();
    const bool pass = !first.empty() && first == second;
    report(8, pass, "identical config and master seed give byte-identical summary metrics",
           fmt("%zu bytes, identical %d", first.size(), first == second), timer.seconds());
    fs::remove_all(out);
}

}  // namespace

int main() {
    std::printf("acceptance suite, %d worker threads\n", max_threads());
    criterion_1();
    criterion_2();
    criterion_3();

    Timer timer_4;
    EndToEndResult mcad = run_end_to_end("mcad-like", 1001, 10);
    EndToEndResult vsc = run_end_to_end("vsc-like", 2002, 10);
    criteria_4_and_5(mcad, vsc, timer_4.seconds());

    criterion_6();
    criterion_7();
    criterion_8();

    if (g_failures == 0) {
        std::printf("all criteria passed\n");
        return 0;
    }
    std::printf("%d criteria failed\n", g_failures);
    return 1;
}
