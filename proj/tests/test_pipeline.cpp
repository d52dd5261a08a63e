#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "otgrn/pipeline.hpp"

using namespace otgrn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / "otgrn_test_pipeline" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

json tiny_config(const fs::path& out) {
    return json{{"out", out.string()},
                {"master_seed", 11},
                {"n_seeds", 2},
                {"simulate",
                 {{"grn", "mcad-like"},
                  {"n_cells", 16},
                  {"n_steps", 40},
                  {"retained_times", {0, 20, 40}}}},
                {"nri",
                 {{"hidden_dim", 6},
                  {"epochs", 3},
                  {"batch_size", 8},
                  {"lr", 5e-3}}}};
}

}  // namespace

TEST_CASE("config resolution applies defaults, file values, and overrides in order") {
    json file = tiny_config(scratch_dir("resolve"));
    file["transport"] = {{"epsilon", "auto"}, {"lambda", "inf"}};
    json overrides = {{"n_seeds", 3}, {"nri", {{"epochs", 5}}}};
    PipelineConfig cfg = resolve_pipeline_config(file, overrides);
    CHECK(cfg.n_seeds == 3);
    CHECK(cfg.nri.epochs == 5);
    CHECK(cfg.nri.hidden_dim == 6);
    CHECK(cfg.master_seed == 11);
    CHECK(cfg.transport.balanced());
    CHECK(cfg.transport.epsilon <= 0.0);
    CHECK(cfg.use_simulation);

    // Echo contains every resolved default.
    json echo = pipeline_config_to_json(cfg);
    CHECK(echo["nri"]["decoder_dropout"] == 0.5);
    CHECK(echo["transport"]["growth_iters"] == 3);
    CHECK(echo["transport"]["epsilon"] == "auto");
    CHECK(echo["simulate"]["n_cells"] == 16);
}

TEST_CASE("dataset and simulate blocks together are a config conflict") {
    json file = tiny_config(scratch_dir("conflict"));
    file["dataset"] = {{"train_manifest", "x.json"}, {"truth_adjacency", "y.csv"}};
    CHECK_THROWS_AS(resolve_pipeline_config(file, json::object()), ConfigError);
    try {
        resolve_pipeline_config(file, json::object());
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("dataset") != std::string::npos);
        CHECK(msg.find("simulate") != std::string::npos);
    }
}

TEST_CASE("missing output directory is a config error") {
    json file = tiny_config(scratch_dir("noout"));
    file.erase("out");
    CHECK_THROWS_AS(resolve_pipeline_config(file, json::object()), ConfigError);
}

TEST_CASE("dataset mode requires manifest and truth paths") {
    json file;
    file["out"] = scratch_dir("ds").string();
    file["dataset"] = {{"train_manifest", "m.json"}};
    CHECK_THROWS_AS(resolve_pipeline_config(file, json::object()), ConfigError);
}

TEST_CASE("tiny pipeline runs end to end and writes every stage output") {
    const fs::path out = scratch_dir("run");
    PipelineConfig cfg = resolve_pipeline_config(tiny_config(out), json::object());
    PipelineResult result = run_pipeline(cfg);

    CHECK(fs::exists(out / "dataset" / "train_manifest.json"));
    CHECK(fs::exists(out / "dataset" / "test_manifest.json"));
    CHECK(fs::exists(out / "dataset" / "truth_trajectories.csv"));
    CHECK(fs::exists(out / "dataset" / "truth_adjacency.csv"));
    CHECK(fs::exists(out / "transport" / "plan_0.csv"));
    CHECK(fs::exists(out / "transport" / "plan_1.csv"));
    CHECK(fs::exists(out / "transport" / "growth_1.csv"));
    CHECK(fs::exists(out / "transport" / "convergence.json"));
    CHECK(fs::exists(out / "trajectories.csv"));
    CHECK(fs::exists(out / "infer" / "edges_seed_0.csv"));
    CHECK(fs::exists(out / "infer" / "edges_seed_1.csv"));
    CHECK(fs::exists(out / "infer" / "metrics_seed_1.json"));
    CHECK(fs::exists(out / "metrics.json"));
    CHECK(fs::exists(out / "summary.json"));

    CHECK(result.summary.contains("stage_seconds"));
    CHECK_FALSE(result.metrics.contains("stage_seconds"));
    CHECK(result.metrics["per_seed"].size() == 2);
    for (const char* key : {"auroc_mean", "auroc_std", "auprc_mean", "auprc_std",
                            "epr_mean", "epr_std"})
        CHECK(result.metrics["aggregate"].contains(key));
}

TEST_CASE("summary aggregates match an independent aggregation of per-seed files") {
    const fs::path out = scratch_dir("agg");
    PipelineConfig cfg = resolve_pipeline_config(tiny_config(out), json::object());
    cfg.n_seeds = 3;
    PipelineResult result = run_pipeline(cfg);

    std::vector<double> aurocs;
    for (int i = 0; i < 3; ++i) {
        std::ifstream in(out / "infer" / ("metrics_seed_" + std::to_string(i) + ".json"));
        json seed_metrics = json::parse(in);
        aurocs.push_back(seed_metrics.at("auroc").get<double>());
    }
    double mean = 0.0;
    for (double a : aurocs) mean += a;
    mean /= aurocs.size();
    double var = 0.0;
    for (double a : aurocs) var += (a - mean) * (a - mean);
    const double stddev = std::sqrt(var / aurocs.size());
    CHECK(result.metrics["aggregate"]["auroc_mean"].get<double>() ==
          doctest::Approx(mean).epsilon(1e-12));
    CHECK(result.metrics["aggregate"]["auroc_std"].get<double>() ==
          doctest::Approx(stddev).epsilon(1e-12));
}

TEST_CASE("pipeline reruns are byte-identical on the metrics report") {
    const fs::path out_a = scratch_dir("det_a");
    const fs::path out_b = scratch_dir("det_b");
    json base = tiny_config(out_a);
    PipelineResult a = run_pipeline(resolve_pipeline_config(base, json::object()));
    base["out"] = out_b.string();
    PipelineResult b = run_pipeline(resolve_pipeline_config(base, json::object()));

    json metrics_a = a.metrics;
    json metrics_b = b.metrics;
    // The resolved config echoes the differing out dirs; metrics proper
    // must match byte for byte.
    metrics_a.erase("resolved_config");
    metrics_b.erase("resolved_config");
    CHECK(metrics_a.dump() == metrics_b.dump());
}

TEST_CASE("pipeline consumes a pre-simulated dataset in dataset mode") {
    const fs::path sim_out = scratch_dir("pre_sim");
    PipelineConfig sim_cfg = resolve_pipeline_config(tiny_config(sim_out), json::object());
    run_pipeline(sim_cfg);

    const fs::path out = scratch_dir("ds_mode");
    json file = {{"out", out.string()},
                 {"master_seed", 5},
                 {"n_seeds", 1},
                 {"dataset",
                  {{"train_manifest", (sim_out / "dataset" / "train_manifest.json").string()},
                   {"truth_adjacency", (sim_out / "dataset" / "truth_adjacency.csv").string()}}},
                 {"nri", {{"hidden_dim", 6}, {"epochs", 2}, {"batch_size", 8}}}};
    PipelineResult result = run_pipeline(resolve_pipeline_config(file, json::object()));
    CHECK(result.metrics["per_seed"].size() == 1);
    CHECK(result.metrics["n_genes"] == 5);
}

TEST_CASE("matrix csv round-trip") {
    Eigen::MatrixXd m(2, 3);
    m << 0.1, 0.2, 0.3, 1.0 / 3.0, 2.0 / 3.0, 1e-17;
    const fs::path path = scratch_dir("mat") / "m.csv";
    save_matrix_csv(m, path);
    Eigen::MatrixXd loaded = load_matrix_csv(path);
    CHECK((loaded - m).cwiseAbs().maxCoeff() == 0.0);
}
