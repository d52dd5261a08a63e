#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "otgrn/autodiff.hpp"
#include "otgrn/datamodel.hpp"

namespace otgrn {

struct NriConfig {
    enum class Encoder { mlp, gin };

    Encoder encoder_kind = Encoder::gin;
    int hidden_dim = 256;
    int edge_types = 2;  // edge present / absent
    double encoder_dropout = 0.3;
    double decoder_dropout = 0.5;
    double gumbel_tau = 0.5;
    double gumbel_tau_final = 0.1;
    bool anneal_tau = true;
    double smoothness_coeff = -500.0;
    std::vector<double> kl_prior = {0.5, 0.5};
    /// Epochs trained with every gate forced open before Gumbel gating
    /// starts. Without this the decoder messages never learn: untrained
    /// messages raise the reconstruction error, the posterior shuts all
    /// gates, and no gradient reaches the message networks again.
    int warmup_epochs = 30;
    double recon_sigma2 = 5e-5;
    int epochs = 500;
    double lr = 1e-3;
    int batch_size = 128;
    uint64_t seed = 0;
    double gin_epsilon = 0.0;

    void validate() const;
};

/// Encoder output over ordered gene pairs. Row e of `values` holds the
/// two edge-type scores of pair (source_of(e) -> target_of(e)); diagonal
/// pairs have no row, so every reduction over rows excludes it. Edge-type
/// column 0 means "edge present".
struct EdgeLogits {
    int genes = 0;
    Eigen::MatrixXd values;  // [g*(g-1), edge_types]

    int pairs() const { return genes * (genes - 1); }
    int source_of(int e) const { return e / (genes - 1); }
    int target_of(int e) const {
        const int r = source_of(e);
        const int s = e % (genes - 1);
        return s < r ? s : s + 1;
    }
    int pair_index(int r, int s) const {
        return r * (genes - 1) + (s < r ? s : s - 1);
    }
    void validate() const;
};

/// Message-passing structural-inference model: encoder from trajectories
/// to per-pair edge logits, Gumbel-softmax edge sampling, and a residual
/// one-step decoder gated by the sampled edges.
class NriModel {
   public:
    NriModel(int genes, int times, const NriConfig& cfg, uint64_t param_seed);

    /// Dense view of a set of trajectories used for one forward pass.
    struct Batch {
        int batch_size = 0;
        ad::Tensor node_features;            // [B*g, k]
        std::vector<ad::Tensor> step_values; // k tensors of shape [B, g]
    };
    Batch make_batch(const TrajectorySet& traj, const std::vector<int>& indices) const;

    /// Per-ordered-pair edge-type logits, [B*pairs, edge_types]. Row
    /// b*pairs + e corresponds to sample b and pair e (EdgeLogits order).
    ad::Tensor encode(const Batch& batch, bool training, uint64_t dropout_seed) const;

    /// Relaxed one-hot samples softmax((logits + noise)/tau); tau == 0
    /// returns the exact hard one-hot at the argmax (no gradient).
    static ad::Tensor gumbel_softmax(const ad::Tensor& logits, double tau,
                                     const Eigen::MatrixXd& noise);
    static Eigen::MatrixXd sample_gumbel(int rows, int cols, uint64_t seed);

    /// One-step residual prediction of the next expression values:
    /// vhat(b,r) = v(b,r) + f_v(sum_{s != r} z(r,s) f_e(v(b,r), v(b,s))).
    /// `edge_present` is the [B*pairs, 1] "edge present" coordinate.
    ad::Tensor decode_step(const ad::Tensor& values_i, const ad::Tensor& edge_present,
                           bool training, uint64_t dropout_seed) const;

    struct LossParts {
        ad::Tensor total;
        double nll = 0.0;
        double kl = 0.0;
        double smooth = 0.0;
        double total_value = 0.0;
    };
    /// Gaussian reconstruction NLL (fixed variance) + KL of the edge
    /// posterior to the prior + smoothness_coeff * mean edge-present
    /// probability. All terms are averaged over the batch.
    LossParts loss(const Batch& batch, const ad::Tensor& logits,
                   const std::vector<ad::Tensor>& predictions) const;

    std::vector<ad::Tensor> parameters() const;

    int genes() const { return genes_; }
    int times() const { return times_; }
    int pairs() const { return genes_ * (genes_ - 1); }
    int pair_source(int e) const { return e / (genes_ - 1); }
    int pair_target(int e) const {
        const int r = pair_source(e);
        const int s = e % (genes_ - 1);
        return s < r ? s : s + 1;
    }

   private:
    int genes_;
    int times_;
    NriConfig cfg_;
    ad::Mlp emb_;       // node embedding, k -> H
    ad::Mlp edge1_;     // node-to-edge, 2H -> H (mlp encoder)
    ad::Mlp node1_;     // edge-to-node, H -> H (mlp encoder)
    ad::Mlp gin_;       // GIN update, H -> H (gin encoder)
    ad::Mlp edge2_;     // edge scorer, 2H -> edge_types
    ad::Mlp dec_edge_;  // decoder messages, 2 -> H
    ad::Mlp dec_node_;  // decoder update, H -> 1
};

struct TrainLogEntry {
    int epoch = 0;
    double nll = 0.0;
    double kl = 0.0;
    double smooth = 0.0;
    double total = 0.0;
};

struct NriTrainResult {
    EdgeProbabilityMatrix edges;
    std::vector<TrainLogEntry> log;
};

/// Minibatch Adam training; returns the softmax of the mean encoder
/// logits over all trajectories as the edge probability matrix. Output
/// is a pure function of (trajectories, cfg).
NriTrainResult train_nri(const TrajectorySet& trajectories, const NriConfig& cfg);

}  // namespace otgrn
