#include "otgrn/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>

namespace otgrn {

void SimulationConfig::validate() const {
    if (n_cells < 2) throw ConfigError("n_cells must be >= 2");
    if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
    if (noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
    if (retained_times.size() < 2) throw ConfigError("k >= 2 retained times required");
    for (size_t i = 0; i < retained_times.size(); ++i) {
        int t = retained_times[i];
        if (t < 0 || t > n_steps)
            throw ConfigError("retained time outside [0, n_steps]");
        if (i > 0 && retained_times[i] <= retained_times[i - 1])
            throw ConfigError("retained times not strictly increasing");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train_fraction must be in (0,1)");
}

double hill_term(double x, double K, double n, HillMode mode) {
    if (!(x >= 0.0)) throw Error("hill_term requires x >= 0");
    if (!(K > 0.0)) throw Error("hill_term requires K > 0");
    if (!(n >= 1.0)) throw Error("hill_term requires n >= 1");
    const double xn = std::pow(x, n);
    const double kn = std::pow(K, n);
    return mode == HillMode::activate ? xn / (kn + xn) : kn / (kn + xn);
}

namespace {

// Box-Muller keeps normal draws bit-stable across standard library
// versions.
class NormalStream {
   public:
    explicit NormalStream(uint64_t seed) : rng_(seed) {}

    double uniform() {
        // in (0,1]
        return (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

   private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Production term for gene r at state x: Hill responses of its
// regulators combined by min (AND) or max (OR). No regulators means
// constitutive full-rate production.
double production_input(const GeneKinetics& k, const Eigen::VectorXd& x) {
    const size_t n_reg = k.activators.size() + k.inhibitors.size();
    if (n_reg == 0) return 1.0;
    double acc = k.combine == RuleCombine::AND ? 1.0 : 0.0;
    auto fold = [&](double term) {
        acc = k.combine == RuleCombine::AND ? std::min(acc, term) : std::max(acc, term);
    };
    for (int s : k.activators)
        fold(hill_term(x[s], k.hill_k, k.hill_n, HillMode::activate));
    for (int s : k.inhibitors)
        fold(hill_term(x[s], k.hill_k, k.hill_n, HillMode::inhibit));
    return acc;
}

}  // namespace

TrajectorySet simulate_trajectories(const GrnDefinition& grn, const SimulationConfig& cfg) {
    grn.validate();
    cfg.validate();
    const int g = grn.genes();
    const int n_times = cfg.n_steps + 1;

    std::vector<double> ts(n_times);
    for (int i = 0; i < n_times; ++i) ts[i] = i * cfg.dt;
    TrajectorySet traj =
        TrajectorySet::create(cfg.n_cells, std::move(ts), g, TrajectorySet::Origin::ground_truth);

    const double noise_scale = cfg.noise_sigma * std::sqrt(cfg.dt);
    std::atomic<bool> blew_up{false};

    parallel_for(cfg.n_cells, [&](int cell) {
        NormalStream rng(derive_seed(cfg.master_seed, "cell", static_cast<uint64_t>(cell)));
        Eigen::VectorXd x(g);
        for (int r = 0; r < g; ++r) x[r] = rng.uniform();
        for (int r = 0; r < g; ++r) traj.at(cell, 0, r) = x[r];

        Eigen::VectorXd drift(g);
        for (int step = 1; step <= cfg.n_steps; ++step) {
            for (int r = 0; r < g; ++r) {
                const GeneKinetics& k = grn.kinetics[r];
                drift[r] = k.max_rate * production_input(k, x) - k.decay * x[r];
            }
            for (int r = 0; r < g; ++r) {
                double next = x[r] + drift[r] * cfg.dt;
                if (cfg.noise_sigma > 0.0) next += noise_scale * rng.normal();
                x[r] = std::max(next, 0.0);
                if (!std::isfinite(x[r])) blew_up.store(true);
                traj.at(cell, step, r) = x[r];
            }
            if (blew_up.load()) return;
        }
    });
    if (blew_up.load())
        throw NumericError("simulation produced non-finite state; reduce dt");
    return traj;
}

namespace {

SnapshotDataset build_split(const TrajectorySet& traj, const SimulationConfig& cfg,
                            const std::vector<std::string>& gene_names,
                            const std::vector<int>& cells, SnapshotDataset::Split split,
                            const char* split_tag) {
    SnapshotDataset ds;
    ds.gene_names = gene_names;
    ds.split_tag = split;
    const int g = traj.n_genes;
    for (size_t si = 0; si < cfg.retained_times.size(); ++si) {
        const int t = cfg.retained_times[si];
        std::vector<int> order(cells.size());
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(derive_seed(cfg.master_seed, std::string("shuffle_") + split_tag,
                                        static_cast<uint64_t>(si)));
        std::shuffle(order.begin(), order.end(), rng);

        ExpressionMatrix m;
        m.time = traj.timestamps[t];
        m.values.resize(g, static_cast<int>(cells.size()));
        m.cell_ids.resize(cells.size());
        for (size_t c = 0; c < cells.size(); ++c) {
            const int cell = cells[order[c]];
            m.cell_ids[c] = traj.trajectory_ids[cell];
            for (int r = 0; r < g; ++r)
                m.values(r, static_cast<int>(c)) = traj.at(cell, t, r);
        }
        ds.snapshots.push_back(std::move(m));
    }
    return ds;
}

}  // namespace

AssembledDataset assemble_dataset(const TrajectorySet& traj, const SimulationConfig& cfg) {
    traj.validate();
    cfg.validate();
    if (cfg.retained_times.back() >= traj.n_times)
        throw ConfigError("retained time index exceeds trajectory length");

    const int n = traj.n_trajectories;
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed(cfg.master_seed, "split"));
    std::shuffle(order.begin(), order.end(), rng);
    const int n_train = static_cast<int>(std::floor(cfg.train_fraction * n));
    std::vector<int> train_cells(order.begin(), order.begin() + n_train);
    std::vector<int> test_cells(order.begin() + n_train, order.end());
    if (train_cells.size() < 2 || test_cells.size() < 2)
        throw ConfigError("fewer than 2 cells in a split; increase n_cells");
    std::sort(train_cells.begin(), train_cells.end());
    std::sort(test_cells.begin(), test_cells.end());

    std::vector<std::string> gene_names(traj.n_genes);
    for (int r = 0; r < traj.n_genes; ++r) gene_names[r] = "gene_" + std::to_string(r);

    AssembledDataset out;
    out.train = build_split(traj, cfg, gene_names, train_cells,
                            SnapshotDataset::Split::train, "train");
    out.test =
        build_split(traj, cfg, gene_names, test_cells, SnapshotDataset::Split::test, "test");

    const int k = static_cast<int>(cfg.retained_times.size());
    std::vector<double> ts(k);
    for (int i = 0; i < k; ++i) ts[i] = traj.timestamps[cfg.retained_times[i]];
    out.truth = TrajectorySet::create(n, std::move(ts), traj.n_genes,
                                      TrajectorySet::Origin::ground_truth);
    out.truth.trajectory_ids = traj.trajectory_ids;
    for (int p = 0; p < n; ++p)
        for (int i = 0; i < k; ++i)
            for (int r = 0; r < traj.n_genes; ++r)
                out.truth.at(p, i, r) = traj.at(p, cfg.retained_times[i], r);

    out.train.validate();
    out.test.validate();
    out.truth.validate();
    return out;
}

GrnDefinition builtin_grn(std::string_view name) {
    GrnDefinition grn;
    auto add_edge = [&](const char* src, const char* dst, EdgeSign sign) {
        grn.edges.push_back({src, dst, sign});
    };
    if (name == "mcad-like") {
        // Three-gene mutual-antagonism core with two reporter genes.
        grn.gene_names = {"GA", "GB", "GC", "GD", "GE"};
        add_edge("GA", "GB", EdgeSign::inhibit);
        add_edge("GB", "GA", EdgeSign::inhibit);
        add_edge("GA", "GC", EdgeSign::inhibit);
        add_edge("GC", "GA", EdgeSign::inhibit);
        add_edge("GB", "GC", EdgeSign::inhibit);
        add_edge("GC", "GB", EdgeSign::inhibit);
        add_edge("GB", "GD", EdgeSign::activate);
        add_edge("GC", "GE", EdgeSign::activate);
    } else if (name == "vsc-like") {
        // Ladder of cross-repressing pairs, all edges inhibitory.
        grn.gene_names = {"GA", "GB", "GC", "GD", "GE", "GF", "GG", "GH"};
        add_edge("GA", "GB", EdgeSign::inhibit);
        add_edge("GB", "GA", EdgeSign::inhibit);
        add_edge("GC", "GD", EdgeSign::inhibit);
        add_edge("GD", "GC", EdgeSign::inhibit);
        add_edge("GE", "GF", EdgeSign::inhibit);
        add_edge("GF", "GE", EdgeSign::inhibit);
        add_edge("GG", "GH", EdgeSign::inhibit);
        add_edge("GH", "GG", EdgeSign::inhibit);
        add_edge("GB", "GC", EdgeSign::inhibit);
        add_edge("GC", "GB", EdgeSign::inhibit);
        add_edge("GF", "GG", EdgeSign::inhibit);
        add_edge("GG", "GF", EdgeSign::inhibit);
    } else {
        throw ConfigError("unknown builtin GRN: " + std::string(name));
    }
    grn.kinetics.assign(grn.gene_names.size(), GeneKinetics{});
    for (const auto& e : grn.edges) {
        int src = grn.gene_index(e.source);
        int dst = grn.gene_index(e.target);
        if (e.sign == EdgeSign::activate)
            grn.kinetics[dst].activators.push_back(src);
        else
            grn.kinetics[dst].inhibitors.push_back(src);
    }
    grn.validate();
    return grn;
}

}  // namespace otgrn
