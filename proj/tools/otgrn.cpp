// otgrn: snapshot simulation, entropic transport, trajectory stitching,
// edge inference, and scoring for gene-regulatory-network experiments.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "otgrn/gradcheck.hpp"
#include "otgrn/metrics.hpp"
#include "otgrn/pipeline.hpp"
#include "otgrn/trajectory.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace otgrn;

namespace {

constexpr const char* kVersion = "0.1.0";

std::vector<int> parse_retain(const std::string& csv) {
    std::vector<int> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    return out;
}

void write_json(const fs::path& path, const json& j) {
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

TransportConfig transport_config_from_flags(const std::string& epsilon,
                                            const std::string& lambda, int growth_iters,
                                            int max_iters, double tol, bool zscore) {
    TransportConfig cfg;
    if (epsilon != "auto") cfg.epsilon = parse_double(epsilon);
    if (lambda == "inf")
        cfg.marginal_penalty = std::numeric_limits<double>::infinity();
    else
        cfg.marginal_penalty = parse_double(lambda);
    cfg.growth_iters = growth_iters;
    cfg.max_inner_iters = max_iters;
    cfg.inner_tol = tol;
    cfg.zscore_genes = zscore;
    return cfg;
}

json transition_errors_to_json(const std::vector<TransitionError>& errs) {
    json arr = json::array();
    for (size_t i = 0; i < errs.size(); ++i)
        arr.push_back({{"transition", i + 1}, {"mean", errs[i].mean}, {"stddev", errs[i].stddev}});
    return arr;
}

int run(int argc, char** argv) {
    CLI::App app{"Trajectory reconstruction and network inference from expression snapshots"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    // --- simulate ---------------------------------------------------------
    auto* sim_cmd = app.add_subcommand(
        "simulate", "Simulate a GRN and write shuffled train/test snapshot datasets");
    std::string sim_grn = "mcad-like";
    SimulationConfig sim_cfg;
    std::string sim_retain = "0,50,100,400,600,650,1000";
    std::string sim_out;
    uint64_t sim_seed = 0;
    sim_cmd->add_option("--grn", sim_grn, "Builtin name (mcad-like, vsc-like) or GRN JSON path");
    sim_cmd->add_option("--cells", sim_cfg.n_cells, "Number of simulated cells");
    sim_cmd->add_option("--steps", sim_cfg.n_steps, "Number of integration steps");
    sim_cmd->add_option("--dt", sim_cfg.dt, "Integration step size");
    sim_cmd->add_option("--noise", sim_cfg.noise_sigma, "Diffusion noise level");
    sim_cmd->add_option("--retain", sim_retain, "Comma-separated retained step indices");
    sim_cmd->add_option("--train-fraction", sim_cfg.train_fraction, "Train split fraction");
    sim_cmd->add_option("--seed", sim_seed, "Master seed");
    sim_cmd->add_option("--out", sim_out, "Output directory")->required();

    // --- transport ----------------------------------------------------------
    auto* tr_cmd = app.add_subcommand(
        "transport", "Solve entropic OT with growth reweighting between consecutive snapshots");
    std::string tr_dataset, tr_out;
    std::string tr_epsilon = "auto";
    std::string tr_lambda = "1";
    int tr_growth_iters = 3;
    int tr_max_iters = 2000;
    double tr_tol = 1e-8;
    bool tr_zscore = false;
    tr_cmd->add_option("--dataset", tr_dataset, "Dataset manifest JSON")->required();
    tr_cmd->add_option("--epsilon", tr_epsilon, "Entropic regularization ('auto' or a number)");
    tr_cmd->add_option("--lambda", tr_lambda, "Marginal penalty ('inf' for balanced)");
    tr_cmd->add_option("--growth-iters", tr_growth_iters, "Growth reweighting rounds");
    tr_cmd->add_option("--max-iters", tr_max_iters, "Max Sinkhorn iterations");
    tr_cmd->add_option("--tol", tr_tol, "Scaling-vector convergence tolerance");
    tr_cmd->add_flag("--zscore", tr_zscore, "Z-score genes before the cost computation");
    tr_cmd->add_option("--out", tr_out, "Output directory")->required();

    // --- stitch -------------------------------------------------------------
    auto* st_cmd =
        app.add_subcommand("stitch", "Chain transport plans into cell-level trajectories");
    std::string st_dataset, st_plans, st_out;
    st_cmd->add_option("--dataset", st_dataset, "Dataset manifest JSON")->required();
    st_cmd->add_option("--plans", st_plans, "Directory with plan_<i>.csv files")->required();
    st_cmd->add_option("--out", st_out, "Output trajectory CSV")->required();

    // --- eval-traj ------------------------------------------------------------
    auto* ev_cmd = app.add_subcommand(
        "eval-traj", "Score reconstructed trajectories against ground truth");
    std::string ev_recon, ev_truth, ev_out, ev_ot;
    uint64_t ev_seed = 0;
    ev_cmd->add_option("--reconstructed", ev_recon, "Reconstructed trajectory CSV")->required();
    ev_cmd->add_option("--truth", ev_truth, "Ground-truth trajectory CSV")->required();
    ev_cmd->add_option("--ot", ev_ot, "Optional second trajectory CSV (plain-OT variant)");
    ev_cmd->add_option("--random-seed", ev_seed, "Seed for the random-matching baseline");
    ev_cmd->add_option("--out", ev_out, "Output report JSON")->required();

    // --- infer ---------------------------------------------------------------
    auto* in_cmd =
        app.add_subcommand("infer", "Train the edge-inference model on trajectories");
    std::string in_traj, in_out, in_log;
    std::string in_encoder = "gin";
    NriConfig in_cfg;
    in_cmd->add_option("--trajectories", in_traj, "Trajectory CSV")->required();
    in_cmd->add_option("--encoder", in_encoder, "Encoder kind: gin or mlp");
    in_cmd->add_option("--hidden", in_cfg.hidden_dim, "Hidden width");
    in_cmd->add_option("--epochs", in_cfg.epochs, "Training epochs");
    in_cmd->add_option("--lr", in_cfg.lr, "Learning rate");
    in_cmd->add_option("--batch", in_cfg.batch_size, "Batch size");
    in_cmd->add_option("--tau", in_cfg.gumbel_tau, "Gumbel softmax temperature");
    in_cmd->add_option("--smoothness", in_cfg.smoothness_coeff, "Smoothness coefficient");
    in_cmd->add_option("--sigma2", in_cfg.recon_sigma2, "Reconstruction variance");
    in_cmd->add_option("--seed", in_cfg.seed, "Training seed");
    in_cmd->add_option("--out", in_out, "Output edge CSV")->required();
    in_cmd->add_option("--log", in_log, "Training log JSON (default: alongside --out)");

    // --- evaluate --------------------------------------------------------------
    auto* me_cmd =
        app.add_subcommand("evaluate", "Score an edge CSV against a truth adjacency CSV");
    std::string me_edges, me_truth, me_out;
    me_cmd->add_option("--edges", me_edges, "Edge probability CSV")->required();
    me_cmd->add_option("--truth", me_truth, "Truth adjacency CSV")->required();
    me_cmd->add_option("--out", me_out, "Output metrics JSON")->required();

    // --- pipeline ---------------------------------------------------------------
    auto* pl_cmd = app.add_subcommand("pipeline", "Run the full experiment from a config file");
    std::string pl_config, pl_out;
    bool pl_dry = false;
    uint64_t pl_seed = 0;
    bool pl_seed_set = false;
    int pl_nseeds = 0;
    int pl_epochs = 0;
    pl_cmd->add_option("--config", pl_config, "Experiment config JSON")->required();
    pl_cmd->add_option("--out", pl_out, "Override output directory");
    pl_cmd->add_option("--seed", pl_seed, "Override master seed")
        ->each([&](const std::string&) { pl_seed_set = true; });
    pl_cmd->add_option("--n-seeds", pl_nseeds, "Override number of inference seeds");
    pl_cmd->add_option("--epochs", pl_epochs, "Override training epochs");
    pl_cmd->add_flag("--dry-run", pl_dry, "Print the resolved config without executing");

    // Hidden maintenance command.
    auto* gc_cmd = app.add_subcommand("gradcheck", "Run the finite-difference suite");
    gc_cmd->group("");
    uint64_t gc_seed = 12345;
    gc_cmd->add_option("--seed", gc_seed, "RNG seed for the random instances");

    CLI11_PARSE(app, argc, argv);

    if (sim_cmd->parsed()) {
        sim_cfg.retained_times = parse_retain(sim_retain);
        sim_cfg.master_seed = sim_seed;
        GrnDefinition grn = resolve_grn(sim_grn);
        TrajectorySet full = simulate_trajectories(grn, sim_cfg);
        AssembledDataset built = assemble_dataset(full, sim_cfg);
        built.train.gene_names = grn.gene_names;
        built.test.gene_names = grn.gene_names;
        const fs::path out(sim_out);
        save_dataset(built.train, out / "train_manifest.json");
        save_dataset(built.test, out / "test_manifest.json");
        save_trajectories_csv(built.truth, out / "truth_trajectories.csv",
                              built.train.gene_names);
        save_adjacency_csv(grn.adjacency_matrix(), grn.gene_names,
                           out / "truth_adjacency.csv");
        std::printf("wrote %d train / %d test cells, %d snapshots to %s\n",
                    built.train.snapshots[0].cells(), built.test.snapshots[0].cells(),
                    built.train.times(), sim_out.c_str());
    } else if (tr_cmd->parsed()) {
        TransportConfig cfg = transport_config_from_flags(tr_epsilon, tr_lambda,
                                                          tr_growth_iters, tr_max_iters,
                                                          tr_tol, tr_zscore);
        SnapshotDataset ds = load_dataset(tr_dataset);
        const int n_pairs = ds.times() - 1;
        std::vector<TransportPlan> plans(n_pairs);
        std::vector<GrowthVector> growth(n_pairs);
        parallel_for(n_pairs, [&](int i) {
            auto [plan, g] = wot_solve(ds.snapshots[i], ds.snapshots[i + 1], cfg);
            plans[i] = std::move(plan);
            growth[i] = std::move(g);
        });
        const fs::path out(tr_out);
        fs::create_directories(out);
        json report = json::array();
        for (int i = 0; i < n_pairs; ++i) {
            save_matrix_csv(plans[i].gamma, out / ("plan_" + std::to_string(i) + ".csv"));
            save_matrix_csv(growth[i].values, out / ("growth_" + std::to_string(i) + ".csv"));
            report.push_back({{"pair", i},
                              {"epsilon", plans[i].epsilon},
                              {"iterations", plans[i].iterations},
                              {"converged", plans[i].converged},
                              {"marginal_error", plans[i].marginal_error}});
        }
        write_json(out / "convergence.json", report);
        std::printf("wrote %d transport plans to %s\n", n_pairs, tr_out.c_str());
    } else if (st_cmd->parsed()) {
        SnapshotDataset ds = load_dataset(st_dataset);
        std::vector<TransportPlan> plans;
        for (int i = 0; i + 1 < ds.times(); ++i) {
            TransportPlan plan;
            plan.gamma =
                load_matrix_csv(fs::path(st_plans) / ("plan_" + std::to_string(i) + ".csv"));
            plan.mode = MarginalMode::relaxed_source;
            plan.source_time = ds.snapshots[i].time;
            plan.target_time = ds.snapshots[i + 1].time;
            plans.push_back(std::move(plan));
        }
        TrajectorySet stitched = stitch_trajectories(ds, plans);
        save_trajectories_csv(stitched, st_out, ds.gene_names);
        std::printf("stitched %d trajectories over %d time points\n",
                    stitched.n_trajectories, stitched.n_times);
    } else if (ev_cmd->parsed()) {
        TrajectorySet recon =
            load_trajectories_csv(ev_recon, TrajectorySet::Origin::reconstructed);
        TrajectorySet truth =
            load_trajectories_csv(ev_truth, TrajectorySet::Origin::ground_truth);
        json report;
        report["wot"] = transition_errors_to_json(reconstruction_error(recon, truth));
        if (!ev_ot.empty()) {
            TrajectorySet ot =
                load_trajectories_csv(ev_ot, TrajectorySet::Origin::reconstructed);
            report["ot"] = transition_errors_to_json(reconstruction_error(ot, truth));
        }
        report["random"] = transition_errors_to_json(random_matching_error(truth, ev_seed));
        write_json(ev_out, report);
        std::printf("wrote reconstruction report to %s\n", ev_out.c_str());
    } else if (in_cmd->parsed()) {
        if (in_encoder == "gin")
            in_cfg.encoder_kind = NriConfig::Encoder::gin;
        else if (in_encoder == "mlp")
            in_cfg.encoder_kind = NriConfig::Encoder::mlp;
        else
            throw ConfigError("--encoder must be gin or mlp");
        std::vector<std::string> gene_names;
        TrajectorySet traj =
            load_trajectories_csv(in_traj, TrajectorySet::Origin::reconstructed, &gene_names);
        NriTrainResult result = train_nri(traj, in_cfg);
        save_edges_csv(result.edges, gene_names, in_out);
        json log = json::array();
        for (const auto& e : result.log)
            log.push_back({{"epoch", e.epoch},
                           {"nll", e.nll},
                           {"kl", e.kl},
                           {"smooth", e.smooth},
                           {"total", e.total}});
        const fs::path log_path =
            in_log.empty() ? fs::path(in_out).replace_extension(".train_log.json")
                           : fs::path(in_log);
        write_json(log_path, log);
        std::printf("wrote edge probabilities to %s\n", in_out.c_str());
    } else if (me_cmd->parsed()) {
        Eigen::MatrixXi truth = load_adjacency_csv(me_truth);
        // Gene names come from the truth CSV header.
        std::ifstream in(me_truth);
        std::string header;
        std::getline(in, header);
        std::vector<std::string> gene_names;
        std::stringstream ss(header);
        std::string field;
        bool first = true;
        while (std::getline(ss, field, ',')) {
            if (!first) gene_names.push_back(field);
            first = false;
        }
        EdgeProbabilityMatrix edges = load_edges_csv(me_edges, gene_names);
        MetricsReport report = evaluate(edges, truth);
        write_json(me_out, json{{"auroc", report.auroc},
                                {"auprc", report.auprc},
                                {"epr", report.epr},
                                {"n_genes", report.n_genes},
                                {"k_edges", report.k_edges}});
        std::printf("auroc %.4f  auprc %.4f  epr %.4f\n", report.auroc, report.auprc,
                    report.epr);
    } else if (pl_cmd->parsed()) {
        std::ifstream in(pl_config);
        if (!in) throw IoError("cannot open config: " + pl_config);
        json file_config;
        try {
            file_config = json::parse(in);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("cannot parse config JSON: ") + e.what());
        }
        json overrides = json::object();
        if (!pl_out.empty()) overrides["out"] = pl_out;
        if (pl_seed_set) overrides["master_seed"] = pl_seed;
        if (pl_nseeds > 0) overrides["n_seeds"] = pl_nseeds;
        if (pl_epochs > 0) overrides["nri"] = json{{"epochs", pl_epochs}};
        PipelineConfig cfg = resolve_pipeline_config(file_config, overrides);
        if (pl_dry) {
            std::cout << pipeline_config_to_json(cfg).dump(2) << "\n";
            return 0;
        }
        PipelineResult result = run_pipeline(cfg);
        std::cout << result.summary["aggregate"].dump(2) << "\n";
    } else if (gc_cmd->parsed()) {
        double worst = 0.0;
        for (const auto& entry : gradcheck_primitives(gc_seed)) {
            std::printf("%-18s max relative error %.3e\n", entry.name.c_str(),
                        entry.max_rel_error);
            worst = std::max(worst, entry.max_rel_error);
        }
        GradCheckEntry toy = gradcheck_nri_toy(gc_seed);
        std::printf("%-18s max relative error %.3e\n", toy.name.c_str(), toy.max_rel_error);
        worst = std::max(worst, toy.max_rel_error);
        std::printf("worst overall: %.3e (threshold 1e-4)\n", worst);
        return worst < 1e-4 ? 0 : 3;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 3;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
