#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "otgrn/simulate.hpp"

using namespace otgrn;

namespace {

GrnDefinition chain_grn() {
    // A -> B activation, no regulators on A.
    GrnDefinition grn;
    grn.gene_names = {"A", "B"};
    grn.edges = {{"A", "B", EdgeSign::activate}};
    grn.kinetics.assign(2, GeneKinetics{});
    grn.kinetics[1].activators = {0};
    return grn;
}

GrnDefinition edgeless_grn(double max_rate, double decay) {
    GrnDefinition grn;
    grn.gene_names = {"A", "B"};
    grn.kinetics.assign(2, GeneKinetics{});
    for (auto& k : grn.kinetics) {
        k.max_rate = max_rate;
        k.decay = decay;
    }
    return grn;
}

// Column multiset comparison via sorted column fingerprints.
std::multiset<std::string> column_multiset(const ExpressionMatrix& m) {
    std::multiset<std::string> out;
    for (int c = 0; c < m.cells(); ++c) {
        std::string key;
        for (int r = 0; r < m.genes(); ++r) key += format_double(m.values(r, c)) + "|";
        out.insert(key);
    }
    return out;
}

}  // namespace

TEST_CASE("hill_term half saturation and limits") {
    for (double n : {1.0, 2.0, 4.0}) {
        CHECK(hill_term(0.5, 0.5, n, HillMode::activate) == doctest::Approx(0.5));
        CHECK(hill_term(0.5, 0.5, n, HillMode::inhibit) == doctest::Approx(0.5));
    }
    CHECK(hill_term(0.0, 1.0, 4.0, HillMode::activate) == 0.0);
    CHECK(hill_term(0.0, 1.0, 4.0, HillMode::inhibit) == 1.0);
    CHECK(hill_term(2.0, 1.0, 4.0, HillMode::activate) == doctest::Approx(16.0 / 17.0));
}

TEST_CASE("hill_term is monotone in x") {
    double prev_a = -1.0, prev_i = 2.0;
    for (double x = 0.0; x <= 3.0; x += 0.05) {
        const double a = hill_term(x, 0.7, 3.0, HillMode::activate);
        const double i = hill_term(x, 0.7, 3.0, HillMode::inhibit);
        CHECK(a >= prev_a);
        CHECK(i <= prev_i);
        prev_a = a;
        prev_i = i;
    }
}

TEST_CASE("hill_term domain enforcement") {
    CHECK_THROWS_AS(hill_term(-0.1, 1.0, 2.0, HillMode::activate), Error);
    CHECK_THROWS_AS(hill_term(1.0, 0.0, 2.0, HillMode::activate), Error);
    CHECK_THROWS_AS(hill_term(1.0, 1.0, 0.5, HillMode::activate), Error);
}

TEST_CASE("noise-free decay follows the Euler recurrence exactly") {
    SimulationConfig cfg;
    cfg.n_cells = 3;
    cfg.n_steps = 200;
    cfg.dt = 0.01;
    cfg.noise_sigma = 0.0;
    cfg.retained_times = {0, 200};
    cfg.master_seed = 4;
    GrnDefinition grn = edgeless_grn(0.0, 1.0);  // m=0, delta=1
    TrajectorySet traj = simulate_trajectories(grn, cfg);
    const double factor = std::pow(1.0 - cfg.dt, cfg.n_steps);
    for (int cell = 0; cell < cfg.n_cells; ++cell)
        for (int r = 0; r < 2; ++r) {
            const double x0 = traj.at(cell, 0, r);
            CHECK(traj.at(cell, cfg.n_steps, r) ==
                  doctest::Approx(x0 * factor).epsilon(1e-12));
        }
}

TEST_CASE("same seed gives bitwise-identical trajectories") {
    SimulationConfig cfg;
    cfg.n_cells = 5;
    cfg.n_steps = 50;
    cfg.retained_times = {0, 50};
    cfg.master_seed = 99;
    GrnDefinition grn = builtin_grn("mcad-like");
    TrajectorySet a = simulate_trajectories(grn, cfg);
    TrajectorySet b = simulate_trajectories(grn, cfg);
    REQUIRE(a.values.size() == b.values.size());
    for (size_t i = 0; i < a.values.size(); ++i) CHECK(a.values[i] == b.values[i]);
}

TEST_CASE("noise-free 2-gene chain matches an independent scalar integrator") {
    SimulationConfig cfg;
    cfg.n_cells = 2;
    cfg.n_steps = 400;
    cfg.dt = 0.005;
    cfg.noise_sigma = 0.0;
    cfg.retained_times = {0, 400};
    cfg.master_seed = 123;
    GrnDefinition grn = chain_grn();
    TrajectorySet traj = simulate_trajectories(grn, cfg);

    for (int cell = 0; cell < cfg.n_cells; ++cell) {
        // Independent explicit-Euler loop written directly from the
        // kinetic definitions.
        double a = traj.at(cell, 0, 0);
        double b = traj.at(cell, 0, 1);
        const GeneKinetics& ka = grn.kinetics[0];
        const GeneKinetics& kb = grn.kinetics[1];
        for (int step = 0; step < cfg.n_steps; ++step) {
            const double hill =
                std::pow(a, kb.hill_n) /
                (std::pow(kb.hill_k, kb.hill_n) + std::pow(a, kb.hill_n));
            const double da = ka.max_rate * 1.0 - ka.decay * a;
            const double db = kb.max_rate * hill - kb.decay * b;
            a = std::max(a + da * cfg.dt, 0.0);
            b = std::max(b + db * cfg.dt, 0.0);
        }
        CHECK(std::abs(traj.at(cell, cfg.n_steps, 0) - a) < 1e-9);
        CHECK(std::abs(traj.at(cell, cfg.n_steps, 1) - b) < 1e-9);
    }
}

TEST_CASE("expression stays nonnegative under heavy noise") {
    SimulationConfig cfg;
    cfg.n_cells = 10;
    cfg.n_steps = 100;
    cfg.noise_sigma = 1.5;
    cfg.retained_times = {0, 100};
    cfg.master_seed = 8;
    TrajectorySet traj = simulate_trajectories(builtin_grn("mcad-like"), cfg);
    for (double v : traj.values) CHECK(v >= 0.0);
}

TEST_CASE("assemble_dataset rejects fewer than 2 retained times") {
    SimulationConfig cfg;
    cfg.retained_times = {0};
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("shuffling preserves each snapshot's column multiset") {
    SimulationConfig cfg;
    cfg.n_cells = 24;
    cfg.n_steps = 60;
    cfg.retained_times = {0, 30, 60};
    cfg.master_seed = 21;
    GrnDefinition grn = builtin_grn("mcad-like");
    TrajectorySet traj = simulate_trajectories(grn, cfg);
    AssembledDataset built = assemble_dataset(traj, cfg);

    // Union of train/test columns at each retained time equals the truth
    // columns at that time.
    for (size_t i = 0; i < cfg.retained_times.size(); ++i) {
        std::multiset<std::string> split_cols = column_multiset(built.train.snapshots[i]);
        for (const auto& key : column_multiset(built.test.snapshots[i]))
            split_cols.insert(key);
        std::multiset<std::string> truth_cols;
        for (int p = 0; p < built.truth.n_trajectories; ++p) {
            std::string key;
            for (int r = 0; r < built.truth.n_genes; ++r)
                key += format_double(built.truth.at(p, static_cast<int>(i), r)) + "|";
            truth_cols.insert(key);
        }
        CHECK(split_cols == truth_cols);
    }
}

TEST_CASE("split is a partition with the floor rule, remainder to test") {
    SimulationConfig cfg;
    cfg.n_cells = 10;
    cfg.n_steps = 10;
    cfg.retained_times = {0, 10};
    cfg.train_fraction = 0.75;
    cfg.master_seed = 3;
    TrajectorySet traj = simulate_trajectories(builtin_grn("mcad-like"), cfg);
    AssembledDataset built = assemble_dataset(traj, cfg);
    CHECK(built.train.snapshots[0].cells() == 7);
    CHECK(built.test.snapshots[0].cells() == 3);

    std::vector<int> all_ids = built.train.snapshots[0].cell_ids;
    all_ids.insert(all_ids.end(), built.test.snapshots[0].cell_ids.begin(),
                   built.test.snapshots[0].cell_ids.end());
    std::sort(all_ids.begin(), all_ids.end());
    std::vector<int> expected(10);
    for (int i = 0; i < 10; ++i) expected[i] = i;
    CHECK(all_ids == expected);
}

TEST_CASE("truth is the unshuffled retained-time subsample") {
    SimulationConfig cfg;
    cfg.n_cells = 6;
    cfg.n_steps = 40;
    cfg.retained_times = {0, 15, 40};
    cfg.master_seed = 13;
    GrnDefinition grn = builtin_grn("mcad-like");
    TrajectorySet traj = simulate_trajectories(grn, cfg);
    AssembledDataset built = assemble_dataset(traj, cfg);
    REQUIRE(built.truth.n_trajectories == 6);
    REQUIRE(built.truth.n_times == 3);
    for (int p = 0; p < 6; ++p)
        for (size_t i = 0; i < cfg.retained_times.size(); ++i)
            for (int r = 0; r < traj.n_genes; ++r)
                CHECK(built.truth.at(p, static_cast<int>(i), r) ==
                      traj.at(p, cfg.retained_times[i], r));
    CHECK(built.truth.timestamps[1] == traj.timestamps[15]);

    // Dataset cell_ids point back into the truth rows: the column content
    // must match the named trajectory at that time.
    for (size_t i = 0; i < cfg.retained_times.size(); ++i)
        for (int c = 0; c < built.train.snapshots[i].cells(); ++c) {
            const int id = built.train.snapshots[i].cell_ids[c];
            for (int r = 0; r < traj.n_genes; ++r)
                CHECK(built.train.snapshots[i].values(r, c) ==
                      built.truth.at(id, static_cast<int>(i), r));
        }
}

TEST_CASE("assemble_dataset errors when a split would be degenerate") {
    SimulationConfig cfg;
    cfg.n_cells = 3;
    cfg.n_steps = 10;
    cfg.retained_times = {0, 10};
    cfg.train_fraction = 0.75;  // 2 train / 1 test
    TrajectorySet traj = simulate_trajectories(builtin_grn("mcad-like"), cfg);
    CHECK_THROWS_AS(assemble_dataset(traj, cfg), ConfigError);
}

TEST_CASE("builtin networks validate and have the documented shapes") {
    GrnDefinition mcad = builtin_grn("mcad-like");
    CHECK(mcad.genes() == 5);
    CHECK(mcad.adjacency_matrix().sum() == 8);
    GrnDefinition vsc = builtin_grn("vsc-like");
    CHECK(vsc.genes() == 8);
    CHECK(vsc.adjacency_matrix().sum() == 12);
    CHECK_THROWS_AS(builtin_grn("nope"), ConfigError);
}

TEST_CASE("overflowing state is reported as a numeric error") {
    SimulationConfig cfg;
    cfg.n_cells = 2;
    cfg.n_steps = 60;
    cfg.dt = 10.0;
    cfg.noise_sigma = 0.0;
    cfg.retained_times = {0, 60};
    GrnDefinition grn = edgeless_grn(1e308, 1.0);
    CHECK_THROWS_AS(simulate_trajectories(grn, cfg), NumericError);
}
