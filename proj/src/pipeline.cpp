#include "otgrn/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "otgrn/metrics.hpp"
#include "otgrn/trajectory.hpp"

namespace otgrn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class StageTimer {
   public:
    explicit StageTimer(json& sink) : sink_(sink) {}

    template <typename F>
    auto run(const std::string& stage, F&& fn) {
        const auto start = std::chrono::steady_clock::now();
        try {
            if constexpr (std::is_void_v<decltype(fn())>) {
                fn();
                record(stage, start);
            } else {
                auto out = fn();
                record(stage, start);
                return out;
            }
        } catch (const Error& e) {
            throw Error("stage '" + stage + "' failed: " + e.what());
        }
    }

   private:
    void record(const std::string& stage, std::chrono::steady_clock::time_point start) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        sink_[stage] = secs;
    }
    json& sink_;
};

void apply_common_keys(PipelineConfig& cfg, const json& j) {
    if (j.contains("out")) cfg.out_dir = j.at("out").get<std::string>();
    if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<uint64_t>();
    if (j.contains("n_seeds")) cfg.n_seeds = j.at("n_seeds").get<int>();
}

void apply_simulate_block(PipelineConfig& cfg, const json& s) {
    if (s.contains("grn")) cfg.grn = s.at("grn").get<std::string>();
    if (s.contains("n_cells")) cfg.sim.n_cells = s.at("n_cells").get<int>();
    if (s.contains("n_steps")) cfg.sim.n_steps = s.at("n_steps").get<int>();
    if (s.contains("dt")) cfg.sim.dt = s.at("dt").get<double>();
    if (s.contains("noise_sigma")) cfg.sim.noise_sigma = s.at("noise_sigma").get<double>();
    if (s.contains("retained_times"))
        cfg.sim.retained_times = s.at("retained_times").get<std::vector<int>>();
    if (s.contains("train_fraction"))
        cfg.sim.train_fraction = s.at("train_fraction").get<double>();
}

void apply_transport_block(PipelineConfig& cfg, const json& t) {
    if (t.contains("epsilon")) {
        if (t.at("epsilon").is_string()) {
            if (t.at("epsilon").get<std::string>() != "auto")
                throw ConfigError("transport.epsilon must be 'auto' or a number");
            cfg.transport.epsilon = -1.0;
        } else {
            cfg.transport.epsilon = t.at("epsilon").get<double>();
        }
    }
    if (t.contains("lambda")) {
        if (t.at("lambda").is_string()) {
            if (t.at("lambda").get<std::string>() != "inf")
                throw ConfigError("transport.lambda must be 'inf' or a number");
            cfg.transport.marginal_penalty = std::numeric_limits<double>::infinity();
        } else {
            cfg.transport.marginal_penalty = t.at("lambda").get<double>();
        }
    }
    if (t.contains("relax_both_sides"))
        cfg.transport.relax_both_sides = t.at("relax_both_sides").get<bool>();
    if (t.contains("max_inner_iters"))
        cfg.transport.max_inner_iters = t.at("max_inner_iters").get<int>();
    if (t.contains("inner_tol")) cfg.transport.inner_tol = t.at("inner_tol").get<double>();
    if (t.contains("growth_iters")) cfg.transport.growth_iters = t.at("growth_iters").get<int>();
    if (t.contains("growth_tol")) cfg.transport.growth_tol = t.at("growth_tol").get<double>();
    if (t.contains("zscore_genes")) cfg.transport.zscore_genes = t.at("zscore_genes").get<bool>();
}

void apply_nri_block(PipelineConfig& cfg, const json& v) {
    if (v.contains("encoder")) {
        const std::string enc = v.at("encoder").get<std::string>();
        if (enc == "gin")
            cfg.nri.encoder_kind = NriConfig::Encoder::gin;
        else if (enc == "mlp")
            cfg.nri.encoder_kind = NriConfig::Encoder::mlp;
        else
            throw ConfigError("nri.encoder must be 'gin' or 'mlp'");
    }
    if (v.contains("hidden_dim")) cfg.nri.hidden_dim = v.at("hidden_dim").get<int>();
    if (v.contains("encoder_dropout"))
        cfg.nri.encoder_dropout = v.at("encoder_dropout").get<double>();
    if (v.contains("decoder_dropout"))
        cfg.nri.decoder_dropout = v.at("decoder_dropout").get<double>();
    if (v.contains("gumbel_tau")) cfg.nri.gumbel_tau = v.at("gumbel_tau").get<double>();
    if (v.contains("gumbel_tau_final"))
        cfg.nri.gumbel_tau_final = v.at("gumbel_tau_final").get<double>();
    if (v.contains("anneal_tau")) cfg.nri.anneal_tau = v.at("anneal_tau").get<bool>();
    if (v.contains("smoothness_coeff"))
        cfg.nri.smoothness_coeff = v.at("smoothness_coeff").get<double>();
    if (v.contains("recon_sigma2")) cfg.nri.recon_sigma2 = v.at("recon_sigma2").get<double>();
    if (v.contains("epochs")) cfg.nri.epochs = v.at("epochs").get<int>();
    if (v.contains("lr")) cfg.nri.lr = v.at("lr").get<double>();
    if (v.contains("batch_size")) cfg.nri.batch_size = v.at("batch_size").get<int>();
}

void apply_config_json(PipelineConfig& cfg, const json& j, bool& saw_dataset,
                       bool& saw_simulate) {
    apply_common_keys(cfg, j);
    if (j.contains("simulate")) {
        saw_simulate = true;
        cfg.use_simulation = true;
        apply_simulate_block(cfg, j.at("simulate"));
    }
    if (j.contains("dataset")) {
        saw_dataset = true;
        cfg.use_simulation = false;
        const json& d = j.at("dataset");
        if (d.contains("train_manifest"))
            cfg.train_manifest = d.at("train_manifest").get<std::string>();
        if (d.contains("truth_adjacency"))
            cfg.truth_adjacency = d.at("truth_adjacency").get<std::string>();
    }
    if (j.contains("transport")) apply_transport_block(cfg, j.at("transport"));
    if (j.contains("nri")) apply_nri_block(cfg, j.at("nri"));
}

}  // namespace

PipelineConfig resolve_pipeline_config(const json& file_config, const json& overrides) {
    PipelineConfig cfg;
    cfg.use_simulation = true;  // default experiment simulates the bundled network
    bool saw_dataset = false;
    bool saw_simulate = false;
    apply_config_json(cfg, file_config, saw_dataset, saw_simulate);
    apply_config_json(cfg, overrides, saw_dataset, saw_simulate);

    if (saw_dataset && saw_simulate)
        throw ConfigError(
            "config conflict: both 'dataset' and 'simulate' blocks given; provide exactly "
            "one input source");
    if (cfg.out_dir.empty()) throw ConfigError("missing output directory ('out')");
    if (!cfg.use_simulation) {
        if (cfg.train_manifest.empty())
            throw ConfigError("dataset mode needs dataset.train_manifest");
        if (cfg.truth_adjacency.empty())
            throw ConfigError("dataset mode needs dataset.truth_adjacency");
    }
    if (cfg.n_seeds < 1) throw ConfigError("n_seeds must be >= 1");
    cfg.sim.master_seed = cfg.master_seed;
    cfg.sim.validate();
    cfg.transport.validate();
    cfg.nri.validate();
    return cfg;
}

json pipeline_config_to_json(const PipelineConfig& cfg) {
    json j;
    j["out"] = cfg.out_dir;
    j["master_seed"] = cfg.master_seed;
    j["n_seeds"] = cfg.n_seeds;
    if (cfg.use_simulation) {
        j["simulate"] = {{"grn", cfg.grn},
                         {"n_cells", cfg.sim.n_cells},
                         {"n_steps", cfg.sim.n_steps},
                         {"dt", cfg.sim.dt},
                         {"noise_sigma", cfg.sim.noise_sigma},
                         {"retained_times", cfg.sim.retained_times},
                         {"train_fraction", cfg.sim.train_fraction}};
    } else {
        j["dataset"] = {{"train_manifest", cfg.train_manifest},
                        {"truth_adjacency", cfg.truth_adjacency}};
    }
    j["transport"] = {
        {"epsilon", cfg.transport.epsilon > 0.0 ? json(cfg.transport.epsilon) : json("auto")},
        {"lambda", cfg.transport.balanced() ? json("inf") : json(cfg.transport.marginal_penalty)},
        {"relax_both_sides", cfg.transport.relax_both_sides},
        {"max_inner_iters", cfg.transport.max_inner_iters},
        {"inner_tol", cfg.transport.inner_tol},
        {"growth_iters", cfg.transport.growth_iters},
        {"growth_tol", cfg.transport.growth_tol},
        {"zscore_genes", cfg.transport.zscore_genes}};
    j["nri"] = {{"encoder", cfg.nri.encoder_kind == NriConfig::Encoder::gin ? "gin" : "mlp"},
                {"hidden_dim", cfg.nri.hidden_dim},
                {"edge_types", cfg.nri.edge_types},
                {"encoder_dropout", cfg.nri.encoder_dropout},
                {"decoder_dropout", cfg.nri.decoder_dropout},
                {"gumbel_tau", cfg.nri.gumbel_tau},
                {"gumbel_tau_final", cfg.nri.gumbel_tau_final},
                {"anneal_tau", cfg.nri.anneal_tau},
                {"smoothness_coeff", cfg.nri.smoothness_coeff},
                {"recon_sigma2", cfg.nri.recon_sigma2},
                {"epochs", cfg.nri.epochs},
                {"lr", cfg.nri.lr},
                {"batch_size", cfg.nri.batch_size}};
    return j;
}

Eigen::MatrixXd load_matrix_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open matrix CSV: " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        size_t pos = 0;
        while (pos <= line.size()) {
            size_t comma = line.find(',', pos);
            if (comma == std::string::npos) comma = line.size();
            row.push_back(parse_double(std::string_view(line).substr(pos, comma - pos)));
            pos = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw IoError("ragged matrix CSV: " + path.string());
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw IoError("empty matrix CSV: " + path.string());
    Eigen::MatrixXd m(rows.size(), rows.front().size());
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < rows[r].size(); ++c)
            m(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
    return m;
}

void save_matrix_csv(const Eigen::MatrixXd& m, const fs::path& path) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write matrix CSV: " + path.string());
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) {
            if (c > 0) out << ',';
            out << format_double(m(r, c));
        }
        out << '\n';
    }
}

GrnDefinition resolve_grn(const std::string& name_or_path) {
    if (name_or_path == "mcad-like" || name_or_path == "vsc-like")
        return builtin_grn(name_or_path);
    if (!fs::exists(name_or_path))
        throw ConfigError("unknown GRN: '" + name_or_path +
                          "' is neither a builtin name nor an existing file");
    return load_grn(name_or_path);
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    json timings;
    StageTimer timer(timings);

    SnapshotDataset train;
    Eigen::MatrixXi truth_adj;
    if (cfg.use_simulation) {
        auto assembled = timer.run("simulate", [&] {
            GrnDefinition grn = resolve_grn(cfg.grn);
            truth_adj = grn.adjacency_matrix();
            TrajectorySet full = simulate_trajectories(grn, cfg.sim);
            AssembledDataset built = assemble_dataset(full, cfg.sim);
            built.train.gene_names = grn.gene_names;
            built.test.gene_names = grn.gene_names;
            fs::create_directories(out / "dataset");
            save_dataset(built.train, out / "dataset" / "train_manifest.json");
            save_dataset(built.test, out / "dataset" / "test_manifest.json");
            std::vector<std::string> gene_names = built.train.gene_names;
            save_trajectories_csv(built.truth, out / "dataset" / "truth_trajectories.csv",
                                  gene_names);
            save_adjacency_csv(truth_adj, grn.gene_names, out / "dataset" / "truth_adjacency.csv");
            return built;
        });
        train = std::move(assembled.train);
    } else {
        timer.run("load", [&] {
            train = load_dataset(cfg.train_manifest);
            truth_adj = load_adjacency_csv(cfg.truth_adjacency);
            if (truth_adj.rows() != train.genes())
                throw ConfigError("truth adjacency size does not match dataset genes");
        });
    }

    const int n_pairs = train.times() - 1;
    std::vector<TransportPlan> plans(n_pairs);
    timer.run("transport", [&] {
        fs::create_directories(out / "transport");
        json report = json::array();
        std::vector<GrowthVector> growth(n_pairs);
        parallel_for(n_pairs, [&](int i) {
            auto [plan, g] = wot_solve(train.snapshots[i], train.snapshots[i + 1], cfg.transport);
            plans[i] = std::move(plan);
            growth[i] = std::move(g);
        });
        for (int i = 0; i < n_pairs; ++i) {
            save_matrix_csv(plans[i].gamma, out / "transport" / ("plan_" + std::to_string(i) + ".csv"));
            save_matrix_csv(growth[i].values, out / "transport" / ("growth_" + std::to_string(i) + ".csv"));
            report.push_back({{"pair", i},
                              {"epsilon", plans[i].epsilon},
                              {"iterations", plans[i].iterations},
                              {"converged", plans[i].converged},
                              {"marginal_error", plans[i].marginal_error}});
        }
        std::ofstream conv(out / "transport" / "convergence.json");
        conv << report.dump(2) << "\n";
    });

    TrajectorySet stitched = timer.run("stitch", [&] {
        TrajectorySet s = stitch_trajectories(train, plans);
        save_trajectories_csv(s, out / "trajectories.csv", train.gene_names);
        return s;
    });

    std::vector<MetricsReport> per_seed(cfg.n_seeds);
    std::vector<NriTrainResult> runs(cfg.n_seeds);
    timer.run("infer", [&] {
        fs::create_directories(out / "infer");
        parallel_for(cfg.n_seeds, [&](int i) {
            NriConfig nri = cfg.nri;
            nri.seed = derive_seed(cfg.master_seed, "nri_seed", static_cast<uint64_t>(i));
            runs[i] = train_nri(stitched, nri);
        });
        for (int i = 0; i < cfg.n_seeds; ++i) {
            save_edges_csv(runs[i].edges, train.gene_names,
                           out / "infer" / ("edges_seed_" + std::to_string(i) + ".csv"));
            json log = json::array();
            for (const auto& e : runs[i].log)
                log.push_back({{"epoch", e.epoch},
                               {"nll", e.nll},
                               {"kl", e.kl},
                               {"smooth", e.smooth},
                               {"total", e.total}});
            std::ofstream lf(out / "infer" / ("train_log_seed_" + std::to_string(i) + ".json"));
            lf << log.dump(2) << "\n";
        }
    });

    json metrics;
    timer.run("evaluate", [&] {
        json seeds = json::array();
        for (int i = 0; i < cfg.n_seeds; ++i) {
            per_seed[i] = evaluate(runs[i].edges, truth_adj);
            seeds.push_back({{"seed_index", i},
                             {"auroc", per_seed[i].auroc},
                             {"auprc", per_seed[i].auprc},
                             {"epr", per_seed[i].epr}});
            std::ofstream mf(out / "infer" / ("metrics_seed_" + std::to_string(i) + ".json"));
            mf << seeds.back().dump(2) << "\n";
        }
        auto aggregate = [&](auto getter) {
            double mean = 0.0;
            for (const auto& m : per_seed) mean += getter(m);
            mean /= cfg.n_seeds;
            double var = 0.0;
            for (const auto& m : per_seed) {
                const double d = getter(m) - mean;
                var += d * d;
            }
            return std::pair<double, double>(mean, std::sqrt(var / cfg.n_seeds));
        };
        auto [am, as] = aggregate([](const MetricsReport& m) { return m.auroc; });
        auto [pm, ps] = aggregate([](const MetricsReport& m) { return m.auprc; });
        auto [em, es] = aggregate([](const MetricsReport& m) { return m.epr; });
        metrics["per_seed"] = seeds;
        metrics["aggregate"] = {{"auroc_mean", am}, {"auroc_std", as},
                                {"auprc_mean", pm}, {"auprc_std", ps},
                                {"epr_mean", em},   {"epr_std", es}};
        metrics["n_genes"] = per_seed.front().n_genes;
        metrics["k_edges"] = per_seed.front().k_edges;
        metrics["resolved_config"] = pipeline_config_to_json(cfg);
    });

    PipelineResult result;
    result.metrics = metrics;
    result.summary = metrics;
    result.summary["stage_seconds"] = timings;

    std::ofstream mf(out / "metrics.json", std::ios::binary);
    mf << result.metrics.dump(2) << "\n";
    std::ofstream sf(out / "summary.json", std::ios::binary);
    sf << result.summary.dump(2) << "\n";
    return result;
}

}  // namespace otgrn
