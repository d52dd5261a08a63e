#include "otgrn/datamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace otgrn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write file: " + path.string());
    out << content;
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> non_empty_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

}  // namespace

void ExpressionMatrix::validate() const {
    if (values.rows() < 2) throw Error("expression matrix needs g >= 2 genes");
    if (values.cols() < 1) throw Error("expression matrix needs c >= 1 cells");
    if (!values.allFinite()) throw Error("non-finite expression value");
    if ((values.array() < 0.0).any()) throw Error("negative expression value");
    if (!cell_ids.empty() && static_cast<int>(cell_ids.size()) != cells())
        throw Error("cell_ids length does not match cell count");
}

void SnapshotDataset::validate() const {
    if (snapshots.size() < 2) throw Error("k >= 2 snapshots required");
    if (gene_names.empty()) throw Error("empty gene list");
    std::set<std::string> unique(gene_names.begin(), gene_names.end());
    if (unique.size() != gene_names.size()) throw Error("duplicate gene name");
    for (size_t i = 0; i < snapshots.size(); ++i) {
        snapshots[i].validate();
        if (snapshots[i].genes() != genes())
            throw Error("gene-count mismatch across snapshots");
        if (i > 0 && !(snapshots[i].time > snapshots[i - 1].time))
            throw Error("timestamps not increasing");
    }
}

TrajectorySet TrajectorySet::create(int n_traj, std::vector<double> ts, int g,
                                    Origin org) {
    TrajectorySet out;
    out.n_trajectories = n_traj;
    out.n_times = static_cast<int>(ts.size());
    out.n_genes = g;
    out.timestamps = std::move(ts);
    out.origin = org;
    out.values.assign(static_cast<size_t>(n_traj) * out.n_times * g, 0.0);
    out.trajectory_ids.resize(n_traj);
    for (int p = 0; p < n_traj; ++p) out.trajectory_ids[p] = p;
    return out;
}

void TrajectorySet::validate() const {
    if (n_trajectories < 1 || n_times < 1 || n_genes < 1)
        throw Error("empty trajectory set");
    if (values.size() != static_cast<size_t>(n_trajectories) * n_times * n_genes)
        throw Error("trajectory value buffer size mismatch");
    if (static_cast<int>(timestamps.size()) != n_times)
        throw Error("trajectory timestamps length mismatch");
    if (static_cast<int>(trajectory_ids.size()) != n_trajectories)
        throw Error("trajectory_ids length mismatch");
    for (double v : values)
        if (!std::isfinite(v)) throw Error("non-finite trajectory value");
}

int GrnDefinition::gene_index(const std::string& name) const {
    auto it = std::find(gene_names.begin(), gene_names.end(), name);
    if (it == gene_names.end()) throw Error("unknown gene: " + name);
    return static_cast<int>(it - gene_names.begin());
}

Eigen::MatrixXi GrnDefinition::adjacency_matrix() const {
    const int g = genes();
    Eigen::MatrixXi adj = Eigen::MatrixXi::Zero(g, g);
    for (const auto& e : edges) adj(gene_index(e.source), gene_index(e.target)) = 1;
    adj.diagonal().setZero();
    return adj;
}

void GrnDefinition::validate() const {
    if (gene_names.empty()) throw Error("GRN has no genes");
    std::set<std::string> unique(gene_names.begin(), gene_names.end());
    if (unique.size() != gene_names.size()) throw Error("duplicate gene name in GRN");
    for (const auto& e : edges) {
        if (e.source == e.target) throw Error("self-loop edge on " + e.source);
        gene_index(e.source);
        gene_index(e.target);
    }
    if (kinetics.size() != gene_names.size())
        throw Error("kinetics must cover every gene");
    for (const auto& k : kinetics) {
        if (!(k.hill_n >= 1.0)) throw Error("Hill coefficient must be >= 1");
        if (!(k.hill_k > 0.0)) throw Error("half-saturation K must be > 0");
        if (!(k.max_rate >= 0.0) || !(k.decay >= 0.0))
            throw Error("negative kinetic rate");
    }
}

void EdgeProbabilityMatrix::validate() const {
    if (probs.rows() != probs.cols() || probs.rows() < 2)
        throw Error("edge probability matrix must be square, g >= 2");
    const int g = genes();
    for (int r = 0; r < g; ++r) {
        if (probs(r, r) != 0.0) throw Error("edge probability diagonal must be 0");
        for (int s = 0; s < g; ++s) {
            if (r == s) continue;
            double v = probs(r, s);
            if (!std::isfinite(v) || v < 0.0 || v > 1.0)
                throw Error("edge probability outside [0,1]");
        }
    }
}

// ---- Dataset manifest + snapshot CSV -----------------------------------

namespace {

ExpressionMatrix load_snapshot_csv(const fs::path& path, double time,
                                   const std::vector<std::string>& gene_names) {
    auto lines = non_empty_lines(read_text_file(path));
    if (lines.size() < 2) throw IoError("snapshot CSV too short: " + path.string());
    auto header = split_csv_line(lines[0]);
    if (header.size() < 2) throw IoError("snapshot CSV has no cells: " + path.string());
    const int n_cells = static_cast<int>(header.size()) - 1;
    const int g = static_cast<int>(gene_names.size());
    if (static_cast<int>(lines.size()) - 1 != g)
        throw IoError("snapshot CSV gene rows do not match manifest gene list: " +
                      path.string());

    ExpressionMatrix m;
    m.time = time;
    m.values.resize(g, n_cells);
    m.cell_ids.resize(n_cells);
    for (int c = 0; c < n_cells; ++c) {
        const std::string& id = header[c + 1];
        // Cell ids are written as cell_<n>; fall back to the column index
        // for externally produced files.
        if (id.rfind("cell_", 0) == 0) {
            try {
                m.cell_ids[c] = std::stoi(id.substr(5));
            } catch (...) {
                m.cell_ids[c] = c;
            }
        } else {
            m.cell_ids[c] = c;
        }
    }
    for (int r = 0; r < g; ++r) {
        auto fields = split_csv_line(lines[r + 1]);
        if (static_cast<int>(fields.size()) != n_cells + 1)
            throw IoError("ragged snapshot CSV row in " + path.string());
        if (fields[0] != gene_names[r])
            throw IoError("gene order mismatch in " + path.string() + ": expected " +
                          gene_names[r] + ", got " + fields[0]);
        for (int c = 0; c < n_cells; ++c) {
            double v = parse_double(fields[c + 1]);
            if (!std::isfinite(v)) throw Error("non-finite entry in " + path.string());
            m.values(r, c) = v;
        }
    }
    return m;
}

void save_snapshot_csv(const ExpressionMatrix& m,
                       const std::vector<std::string>& gene_names,
                       const fs::path& path) {
    std::string out = "gene";
    for (int c = 0; c < m.cells(); ++c) {
        int id = m.cell_ids.empty() ? c : m.cell_ids[c];
        out += ",cell_" + std::to_string(id);
    }
    out += "\n";
    for (int r = 0; r < m.genes(); ++r) {
        out += gene_names[r];
        for (int c = 0; c < m.cells(); ++c) out += "," + format_double(m.values(r, c));
        out += "\n";
    }
    write_text_file(path, out);
}

}  // namespace

SnapshotDataset load_dataset(const fs::path& manifest_path) {
    if (!fs::exists(manifest_path))
        throw IoError("missing manifest: " + manifest_path.string());
    json j;
    try {
        j = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw IoError("cannot parse manifest " + manifest_path.string() + ": " + e.what());
    }
    if (!j.contains("gene_names") || !j.contains("snapshots"))
        throw IoError("manifest missing gene_names/snapshots: " + manifest_path.string());

    SnapshotDataset ds;
    ds.gene_names = j.at("gene_names").get<std::vector<std::string>>();
    const fs::path dir = manifest_path.parent_path();
    for (const auto& snap : j.at("snapshots")) {
        double t = snap.at("time").get<double>();
        fs::path file = dir / snap.at("file").get<std::string>();
        if (!fs::exists(file)) throw IoError("missing snapshot file: " + file.string());
        ds.snapshots.push_back(load_snapshot_csv(file, t, ds.gene_names));
    }
    ds.validate();
    return ds;
}

void save_dataset(const SnapshotDataset& ds, const fs::path& manifest_path) {
    ds.validate();
    const fs::path dir = manifest_path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    const std::string stem = manifest_path.stem().string();

    json j;
    j["gene_names"] = ds.gene_names;
    j["snapshots"] = json::array();
    for (size_t i = 0; i < ds.snapshots.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_snap_%03zu.csv", stem.c_str(), i);
        save_snapshot_csv(ds.snapshots[i], ds.gene_names, dir / name);
        j["snapshots"].push_back({{"time", ds.snapshots[i].time}, {"file", name}});
    }
    write_text_file(manifest_path, j.dump(2) + "\n");
}

// ---- GRN JSON -----------------------------------------------------------

GrnDefinition load_grn(const fs::path& path) {
    if (!fs::exists(path)) throw IoError("missing GRN file: " + path.string());
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IoError("cannot parse GRN " + path.string() + ": " + e.what());
    }

    GrnDefinition grn;
    grn.gene_names = j.at("genes").get<std::vector<std::string>>();
    for (const auto& e : j.at("edges")) {
        GrnEdge edge;
        edge.source = e.at("source").get<std::string>();
        edge.target = e.at("target").get<std::string>();
        std::string sign = e.at("sign").get<std::string>();
        if (sign == "activate")
            edge.sign = EdgeSign::activate;
        else if (sign == "inhibit")
            edge.sign = EdgeSign::inhibit;
        else
            throw IoError("unknown edge sign: " + sign);
        grn.edges.push_back(edge);
    }
    grn.kinetics.resize(grn.gene_names.size());
    const json& kin = j.at("kinetics");
    for (int r = 0; r < grn.genes(); ++r) {
        const std::string& name = grn.gene_names[r];
        if (!kin.contains(name)) throw IoError("kinetics missing for gene " + name);
        const json& k = kin.at(name);
        GeneKinetics& gk = grn.kinetics[r];
        std::string comb = k.value("combine", "AND");
        if (comb == "AND")
            gk.combine = RuleCombine::AND;
        else if (comb == "OR")
            gk.combine = RuleCombine::OR;
        else
            throw IoError("unknown combine rule: " + comb);
        gk.hill_n = k.value("hill_n", 4.0);
        gk.hill_k = k.value("hill_k", 0.5);
        gk.max_rate = k.value("max_rate", 1.0);
        gk.decay = k.value("decay", 1.0);
    }
    // Regulator sets come from the edge list.
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

void save_grn(const GrnDefinition& grn, const fs::path& path) {
    grn.validate();
    json j;
    j["genes"] = grn.gene_names;
    j["edges"] = json::array();
    for (const auto& e : grn.edges)
        j["edges"].push_back({{"source", e.source},
                              {"target", e.target},
                              {"sign", e.sign == EdgeSign::activate ? "activate" : "inhibit"}});
    j["kinetics"] = json::object();
    for (int r = 0; r < grn.genes(); ++r) {
        const GeneKinetics& k = grn.kinetics[r];
        j["kinetics"][grn.gene_names[r]] = {
            {"combine", k.combine == RuleCombine::AND ? "AND" : "OR"},
            {"hill_n", k.hill_n},
            {"hill_k", k.hill_k},
            {"max_rate", k.max_rate},
            {"decay", k.decay}};
    }
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    write_text_file(path, j.dump(2) + "\n");
}

// ---- Trajectory CSV -------------------------------------------------------

TrajectorySet load_trajectories_csv(const fs::path& path, TrajectorySet::Origin origin,
                                    std::vector<std::string>* gene_names_out) {
    auto lines = non_empty_lines(read_text_file(path));
    if (lines.size() < 2) throw IoError("trajectory CSV too short: " + path.string());
    auto header = split_csv_line(lines[0]);
    if (header.size() < 3 || header[0] != "trajectory_id" || header[1] != "time_index")
        throw IoError("bad trajectory CSV header in " + path.string());
    const int g = static_cast<int>(header.size()) - 2;
    if (gene_names_out != nullptr)
        gene_names_out->assign(header.begin() + 2, header.end());

    struct Row {
        int id;
        int time;
        std::vector<double> vals;
    };
    std::vector<Row> rows;
    int max_time = 0;
    for (size_t i = 1; i < lines.size(); ++i) {
        auto fields = split_csv_line(lines[i]);
        if (static_cast<int>(fields.size()) != g + 2)
            throw IoError("ragged trajectory CSV row in " + path.string());
        Row row;
        row.id = static_cast<int>(parse_double(fields[0]));
        row.time = static_cast<int>(parse_double(fields[1]));
        row.vals.resize(g);
        for (int r = 0; r < g; ++r) row.vals[r] = parse_double(fields[r + 2]);
        max_time = std::max(max_time, row.time);
        rows.push_back(std::move(row));
    }
    const int k = max_time + 1;
    std::vector<int> ids;
    for (const auto& r : rows)
        if (std::find(ids.begin(), ids.end(), r.id) == ids.end()) ids.push_back(r.id);

    std::vector<double> ts(k);
    for (int i = 0; i < k; ++i) ts[i] = static_cast<double>(i);
    TrajectorySet out = TrajectorySet::create(static_cast<int>(ids.size()), ts, g, origin);
    out.trajectory_ids = ids;
    std::vector<std::vector<bool>> seen(ids.size(), std::vector<bool>(k, false));
    for (const auto& row : rows) {
        auto it = std::find(ids.begin(), ids.end(), row.id);
        int p = static_cast<int>(it - ids.begin());
        if (row.time < 0 || row.time >= k)
            throw IoError("trajectory time index out of range in " + path.string());
        for (int r = 0; r < g; ++r) out.at(p, row.time, r) = row.vals[r];
        seen[p][row.time] = true;
    }
    for (const auto& s : seen)
        for (bool b : s)
            if (!b) throw IoError("trajectory CSV has missing time points: " + path.string());
    out.validate();
    return out;
}

void save_trajectories_csv(const TrajectorySet& traj, const fs::path& path,
                           const std::vector<std::string>& gene_names) {
    traj.validate();
    if (static_cast<int>(gene_names.size()) != traj.n_genes)
        throw Error("gene name count does not match trajectory genes");
    std::string out = "trajectory_id,time_index";
    for (const auto& n : gene_names) out += "," + n;
    out += "\n";
    for (int p = 0; p < traj.n_trajectories; ++p)
        for (int i = 0; i < traj.n_times; ++i) {
            out += std::to_string(traj.trajectory_ids[p]) + "," + std::to_string(i);
            for (int r = 0; r < traj.n_genes; ++r)
                out += "," + format_double(traj.at(p, i, r));
            out += "\n";
        }
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    write_text_file(path, out);
}

// ---- Adjacency + edge-score CSV -------------------------------------------

Eigen::MatrixXi load_adjacency_csv(const fs::path& path) {
    auto lines = non_empty_lines(read_text_file(path));
    if (lines.size() < 2) throw IoError("adjacency CSV too short: " + path.string());
    auto header = split_csv_line(lines[0]);
    const int g = static_cast<int>(header.size()) - 1;
    if (g < 2 || static_cast<int>(lines.size()) - 1 != g)
        throw IoError("adjacency CSV must be square: " + path.string());
    Eigen::MatrixXi adj(g, g);
    for (int r = 0; r < g; ++r) {
        auto fields = split_csv_line(lines[r + 1]);
        if (static_cast<int>(fields.size()) != g + 1)
            throw IoError("ragged adjacency CSV row in " + path.string());
        for (int s = 0; s < g; ++s) {
            double v = parse_double(fields[s + 1]);
            if (v != 0.0 && v != 1.0) throw IoError("adjacency entries must be 0/1");
            adj(r, s) = static_cast<int>(v);
        }
    }
    return adj;
}

void save_adjacency_csv(const Eigen::MatrixXi& adj, const std::vector<std::string>& gene_names,
                        const fs::path& path) {
    const int g = static_cast<int>(adj.rows());
    if (adj.cols() != g || static_cast<int>(gene_names.size()) != g)
        throw Error("adjacency shape/gene-name mismatch");
    std::string out = "source";
    for (const auto& n : gene_names) out += "," + n;
    out += "\n";
    for (int r = 0; r < g; ++r) {
        out += gene_names[r];
        for (int s = 0; s < g; ++s) out += "," + std::to_string(adj(r, s));
        out += "\n";
    }
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    write_text_file(path, out);
}

EdgeProbabilityMatrix load_edges_csv(const fs::path& path,
                                     const std::vector<std::string>& gene_names) {
    auto lines = non_empty_lines(read_text_file(path));
    if (lines.empty()) throw IoError("empty edge CSV: " + path.string());
    auto header = split_csv_line(lines[0]);
    if (header.size() != 3 || header[0] != "source_gene")
        throw IoError("bad edge CSV header in " + path.string());
    const int g = static_cast<int>(gene_names.size());
    auto index_of = [&](const std::string& name) {
        auto it = std::find(gene_names.begin(), gene_names.end(), name);
        if (it == gene_names.end()) throw IoError("unknown gene in edge CSV: " + name);
        return static_cast<int>(it - gene_names.begin());
    };
    EdgeProbabilityMatrix m;
    m.probs = Eigen::MatrixXd::Zero(g, g);
    for (size_t i = 1; i < lines.size(); ++i) {
        auto fields = split_csv_line(lines[i]);
        if (fields.size() != 3) throw IoError("ragged edge CSV row in " + path.string());
        m.probs(index_of(fields[0]), index_of(fields[1])) = parse_double(fields[2]);
    }
    m.validate();
    return m;
}

void save_edges_csv(const EdgeProbabilityMatrix& edges,
                    const std::vector<std::string>& gene_names, const fs::path& path) {
    edges.validate();
    const int g = edges.genes();
    if (static_cast<int>(gene_names.size()) != g)
        throw Error("edge matrix/gene-name mismatch");
    std::string out = "source_gene,target_gene,probability\n";
    for (int r = 0; r < g; ++r)
        for (int s = 0; s < g; ++s) {
            if (r == s) continue;
            out += gene_names[r] + "," + gene_names[s] + "," +
                   format_double(edges.probs(r, s)) + "\n";
        }
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    write_text_file(path, out);
}

}  // namespace otgrn
