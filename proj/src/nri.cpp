#include "otgrn/nri.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace otgrn {

using ad::Tensor;

void NriConfig::validate() const {
    if (hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (edge_types != 2) throw ConfigError("edge_types is fixed at 2");
    if (encoder_dropout < 0.0 || encoder_dropout >= 1.0 || decoder_dropout < 0.0 ||
        decoder_dropout >= 1.0)
        throw ConfigError("dropout rates must be in [0,1)");
    if (!(gumbel_tau > 0.0)) throw ConfigError("gumbel_tau must be > 0");
    if (anneal_tau && !(gumbel_tau_final > 0.0))
        throw ConfigError("gumbel_tau_final must be > 0");
    if (!(recon_sigma2 > 0.0)) throw ConfigError("recon_sigma2 must be > 0");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (kl_prior.size() != 2) throw ConfigError("kl_prior needs one entry per edge type");
    double total = 0.0;
    for (double p : kl_prior) {
        if (!(p > 0.0)) throw ConfigError("kl_prior entries must be > 0");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("kl_prior must sum to 1");
}

void EdgeLogits::validate() const {
    if (genes < 1) throw Error("EdgeLogits needs at least one gene");
    if (values.rows() != pairs()) throw Error("EdgeLogits row count mismatch");
    if (!values.allFinite()) throw NumericError("non-finite edge logit");
}

NriModel::NriModel(int genes, int times, const NriConfig& cfg, uint64_t param_seed)
    : genes_(genes), times_(times), cfg_(cfg) {
    if (genes < 1) throw ConfigError("need at least one gene");
    if (times < 2) throw ConfigError("need at least two time points");
    cfg.validate();
    std::mt19937_64 rng(param_seed);
    const int h = cfg.hidden_dim;
    emb_ = ad::make_mlp(times, h, h, rng);
    edge1_ = ad::make_mlp(2 * h, h, h, rng);
    node1_ = ad::make_mlp(h, h, h, rng);
    gin_ = ad::make_mlp(h, h, h, rng);
    edge2_ = ad::make_mlp(2 * h, h, cfg.edge_types, rng);
    dec_edge_ = ad::make_mlp(2, h, h, rng);
    dec_node_ = ad::make_mlp(h, h, 1, rng);
    // Start with gates mostly open. If the initial edge posterior sits
    // near "absent", the decoder messages never receive gradient and the
    // posterior collapses before the message networks can learn.
    edge2_.l2.bias.node()->value[0] += 1.0;
    edge2_.l2.bias.node()->value[1] -= 1.0;
}

std::vector<Tensor> NriModel::parameters() const {
    std::vector<Tensor> out;
    emb_.collect_params(out);
    if (cfg_.encoder_kind == NriConfig::Encoder::mlp) {
        edge1_.collect_params(out);
        node1_.collect_params(out);
    } else {
        gin_.collect_params(out);
    }
    edge2_.collect_params(out);
    dec_edge_.collect_params(out);
    dec_node_.collect_params(out);
    return out;
}

NriModel::Batch NriModel::make_batch(const TrajectorySet& traj,
                                     const std::vector<int>& indices) const {
    if (indices.empty()) throw Error("empty batch");
    if (traj.n_genes != genes_ || traj.n_times != times_)
        throw Error("trajectory shape does not match model");
    const int B = static_cast<int>(indices.size());
    Batch batch;
    batch.batch_size = B;

    ad::RowMat feats(B * genes_, times_);
    for (int b = 0; b < B; ++b)
        for (int r = 0; r < genes_; ++r)
            for (int i = 0; i < times_; ++i)
                feats(b * genes_ + r, i) = traj.at(indices[b], i, r);
    batch.node_features = Tensor::constant(feats);

    batch.step_values.reserve(times_);
    for (int i = 0; i < times_; ++i) {
        ad::RowMat v(B, genes_);
        for (int b = 0; b < B; ++b)
            for (int r = 0; r < genes_; ++r) v(b, r) = traj.at(indices[b], i, r);
        batch.step_values.push_back(Tensor::constant(v));
    }
    return batch;
}

namespace {

// Row index tables for one batch: node rows are b*g + r, edge slots are
// b*P + e with pairs in lexicographic (r, s) order, s != r.
struct PairIndex {
    std::vector<int> source_rows;  // node row of the pair's first gene
    std::vector<int> target_rows;  // node row of the pair's second gene
    std::vector<int> agg_rows;     // node row receiving the pair's message
};

PairIndex build_pair_index(int B, int g) {
    PairIndex idx;
    const size_t n = static_cast<size_t>(B) * g * (g - 1);
    idx.source_rows.reserve(n);
    idx.target_rows.reserve(n);
    idx.agg_rows.reserve(n);
    for (int b = 0; b < B; ++b)
        for (int r = 0; r < g; ++r)
            for (int s = 0; s < g; ++s) {
                if (s == r) continue;
                idx.source_rows.push_back(b * g + r);
                idx.target_rows.push_back(b * g + s);
                idx.agg_rows.push_back(b * g + r);
            }
    return idx;
}

}  // namespace

Tensor NriModel::encode(const Batch& batch, bool training, uint64_t dropout_seed) const {
    const int B = batch.batch_size;
    const double rate = training ? cfg_.encoder_dropout : 0.0;
    const PairIndex idx = build_pair_index(B, genes_);

    Tensor h = emb_.apply(batch.node_features, rate, derive_seed(dropout_seed, "emb"));
    if (cfg_.encoder_kind == NriConfig::Encoder::mlp) {
        // f_emb -> f_e1 -> f_v1 -> f_e2 message passing on the complete graph.
        Tensor pair_in =
            ad::concat_cols(ad::gather_rows(h, idx.source_rows),
                            ad::gather_rows(h, idx.target_rows));
        Tensor h_edge = edge1_.apply(pair_in, rate, derive_seed(dropout_seed, "e1"));
        Tensor agg = ad::scatter_sum_rows(h_edge, idx.agg_rows, B * genes_);
        h = node1_.apply(agg, rate, derive_seed(dropout_seed, "v1"));
    } else {
        // GIN update: MLP((1 + eps) h_r + sum_{s != r} h_s).
        Tensor neighbor_sum =
            ad::scatter_sum_rows(ad::gather_rows(h, idx.target_rows), idx.agg_rows,
                                 B * genes_);
        Tensor gin_in = ad::add(ad::scale(h, 1.0 + cfg_.gin_epsilon), neighbor_sum);
        h = gin_.apply(gin_in, rate, derive_seed(dropout_seed, "gin"));
    }
    Tensor pair_in2 = ad::concat_cols(ad::gather_rows(h, idx.source_rows),
                                      ad::gather_rows(h, idx.target_rows));
    return edge2_.apply(pair_in2, rate, derive_seed(dropout_seed, "e2"));
}

Eigen::MatrixXd NriModel::sample_gumbel(int rows, int cols, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::MatrixXd noise(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
            // Draw in (0,1) to keep both logs finite.
            double u;
            do {
                u = unif(rng);
            } while (u <= 0.0);
            noise(i, j) = -std::log(-std::log(u));
        }
    return noise;
}

Tensor NriModel::gumbel_softmax(const Tensor& logits, double tau,
                                const Eigen::MatrixXd& noise) {
    if (tau < 0.0) throw Error("gumbel_softmax temperature must be >= 0");
    if (noise.rows() != logits.rows() || noise.cols() != logits.cols())
        throw Error("gumbel noise shape mismatch");
    if (tau == 0.0) {
        // Hard limit: exact one-hot at the argmax, no gradient path.
        ad::RowMat hard = ad::RowMat::Zero(logits.rows(), logits.cols());
        for (int i = 0; i < logits.rows(); ++i) {
            int best = 0;
            double best_v = logits.matrix()(i, 0) + noise(i, 0);
            for (int j = 1; j < logits.cols(); ++j) {
                const double v = logits.matrix()(i, j) + noise(i, j);
                if (v > best_v) {
                    best_v = v;
                    best = j;
                }
            }
            hard(i, best) = 1.0;
        }
        return Tensor::constant(hard);
    }
    Tensor shifted = ad::add(logits, Tensor::constant(noise));
    return ad::softmax_rows(ad::scale(shifted, 1.0 / tau));
}

Tensor NriModel::decode_step(const Tensor& values_i, const Tensor& edge_present,
                             bool training, uint64_t dropout_seed) const {
    const int B = values_i.rows();
    if (values_i.cols() != genes_) throw Error("decode_step value shape mismatch");
    if (edge_present.rows() != B * pairs() || edge_present.cols() != 1)
        throw Error("decode_step edge shape mismatch");
    const double rate = training ? cfg_.decoder_dropout : 0.0;
    const PairIndex idx = build_pair_index(B, genes_);

    Tensor flat = ad::reshape(values_i, B * genes_, 1);
    Tensor msg_in;
    if (pairs() > 0) {
        msg_in = ad::concat_cols(ad::gather_rows(flat, idx.source_rows),
                                 ad::gather_rows(flat, idx.target_rows));
    } else {
        msg_in = Tensor::constant(0, 2, 0.0);
    }
    Tensor msg = dec_edge_.apply(msg_in, rate, derive_seed(dropout_seed, "dec_e"));
    Tensor gated = ad::mul_rows(msg, edge_present);
    Tensor agg = ad::scatter_sum_rows(gated, idx.agg_rows, B * genes_);
    Tensor delta = dec_node_.apply(agg, rate, derive_seed(dropout_seed, "dec_v"));
    return ad::add(values_i, ad::reshape(delta, B, genes_));
}

NriModel::LossParts NriModel::loss(const Batch& batch, const Tensor& logits,
                                   const std::vector<Tensor>& predictions) const {
    const int B = batch.batch_size;
    if (static_cast<int>(predictions.size()) != times_ - 1)
        throw Error("expected one prediction per transition");

    // Gaussian NLL with fixed variance, averaged over trajectories.
    Tensor sq_sum;
    for (int i = 0; i + 1 < times_; ++i) {
        Tensor diff = ad::sub(predictions[i], batch.step_values[i + 1]);
        Tensor term = ad::sum(ad::mul(diff, diff));
        sq_sum = i == 0 ? term : ad::add(sq_sum, term);
    }
    const double nll_const =
        0.5 * std::log(2.0 * M_PI * cfg_.recon_sigma2) * (times_ - 1) * genes_;
    Tensor nll =
        ad::add_scalar(ad::scale(sq_sum, 1.0 / (2.0 * cfg_.recon_sigma2 * B)), nll_const);

    // KL of the edge posterior to the categorical prior, summed over
    // ordered pairs, averaged over trajectories.
    Tensor q = ad::softmax_rows(logits);
    ad::RowMat log_prior(logits.rows(), cfg_.edge_types);
    for (int t = 0; t < cfg_.edge_types; ++t)
        log_prior.col(t).setConstant(std::log(cfg_.kl_prior[t]));
    Tensor kl_terms = ad::mul(q, ad::sub(ad::log(q), Tensor::constant(log_prior)));
    Tensor kl = ad::scale(ad::sum(kl_terms), 1.0 / B);

    // Graph-density regularizer on the edge-present probability.
    Tensor smooth = ad::scale(ad::mean(ad::slice_cols(q, 0, 1)), cfg_.smoothness_coeff);

    LossParts parts;
    parts.total = ad::add(ad::add(nll, kl), smooth);
    parts.nll = nll.value_scalar();
    parts.kl = kl.value_scalar();
    parts.smooth = smooth.value_scalar();
    parts.total_value = parts.total.value_scalar();
    return parts;
}

NriTrainResult train_nri(const TrajectorySet& trajectories, const NriConfig& cfg) {
    trajectories.validate();
    cfg.validate();
    if (trajectories.n_times < 2) throw Error("training needs k >= 2 time points");
    const int n = trajectories.n_trajectories;
    const int g = trajectories.n_genes;

    NriModel model(g, trajectories.n_times, cfg, derive_seed(cfg.seed, "params"));
    std::vector<Tensor> params = model.parameters();
    ad::AdamState adam;

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    NriTrainResult result;
    const int P = model.pairs();
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double tau = cfg.gumbel_tau;
        if (cfg.anneal_tau && cfg.epochs > 1)
            tau += (cfg.gumbel_tau_final - cfg.gumbel_tau) * epoch / (cfg.epochs - 1);

        std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, "shuffle", epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        TrainLogEntry entry;
        entry.epoch = epoch;
        int batches = 0;
        for (int start = 0; start < n; start += cfg.batch_size, ++batches) {
            const int stop = std::min(start + cfg.batch_size, n);
            std::vector<int> chunk(order.begin() + start, order.begin() + stop);
            const int B = static_cast<int>(chunk.size());
            const uint64_t step_seed =
                derive_seed(cfg.seed, "step", static_cast<uint64_t>(epoch) * 1000003 + batches);
            try {
                NriModel::Batch batch = model.make_batch(trajectories, chunk);
                Tensor logits = model.encode(batch, true, derive_seed(step_seed, "enc"));
                Tensor z_present;
                if (epoch < cfg.warmup_epochs) {
                    z_present = Tensor::constant(B * P, 1, 1.0);
                } else {
                    Eigen::MatrixXd noise = NriModel::sample_gumbel(
                        B * P, cfg.edge_types, derive_seed(step_seed, "gumbel"));
                    Tensor z = NriModel::gumbel_softmax(logits, tau, noise);
                    z_present = ad::slice_cols(z, 0, 1);
                }
                std::vector<Tensor> preds;
                preds.reserve(trajectories.n_times - 1);
                for (int i = 0; i + 1 < trajectories.n_times; ++i)
                    preds.push_back(model.decode_step(batch.step_values[i], z_present, true,
                                                      derive_seed(step_seed, "dec", i)));
                NriModel::LossParts parts = model.loss(batch, logits, preds);
                ad::backward(parts.total);
                ad::adam_step(params, adam, cfg.lr);
                entry.nll += parts.nll;
                entry.kl += parts.kl;
                entry.smooth += parts.smooth;
                entry.total += parts.total_value;
            } catch (const NumericError& e) {
                throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                                   ": " + e.what());
            }
        }
        entry.nll /= batches;
        entry.kl /= batches;
        entry.smooth /= batches;
        entry.total /= batches;
        result.log.push_back(entry);
    }

    // Edge probabilities: softmax of the mean encoder logits over all
    // trajectories, "edge present" coordinate.
    Eigen::MatrixXd logit_sum = Eigen::MatrixXd::Zero(P, cfg.edge_types);
    std::iota(order.begin(), order.end(), 0);
    for (int start = 0; start < n; start += cfg.batch_size) {
        const int stop = std::min(start + cfg.batch_size, n);
        std::vector<int> chunk(order.begin() + start, order.begin() + stop);
        NriModel::Batch batch = model.make_batch(trajectories, chunk);
        Tensor logits = model.encode(batch, false, 0);
        const auto m = logits.matrix();
        for (int b = 0; b < static_cast<int>(chunk.size()); ++b)
            logit_sum += m.middleRows(b * P, P);
    }
    logit_sum /= static_cast<double>(n);

    result.edges.probs = Eigen::MatrixXd::Zero(g, g);
    for (int e = 0; e < P; ++e) {
        const double a = logit_sum(e, 0);
        const double b = logit_sum(e, 1);
        const double m = std::max(a, b);
        const double pa = std::exp(a - m);
        const double pb = std::exp(b - m);
        result.edges.probs(model.pair_source(e), model.pair_target(e)) = pa / (pa + pb);
    }
    result.edges.validate();
    return result;
}

}  // namespace otgrn
