#include "otgrn/gradcheck.hpp"

#include <cmath>
#include <random>

#include "otgrn/nri.hpp"

namespace otgrn {

using ad::RowMat;
using ad::Tensor;

double finite_diff_max_rel_error(const std::function<Tensor()>& forward,
                                 const std::vector<Tensor>& params, double h) {
    Tensor loss = forward();
    ad::backward(loss);
    std::vector<Eigen::ArrayXd> analytic;
    double gmax = 0.0;
    for (const auto& p : params) {
        analytic.push_back(p.node()->grad);
        gmax = std::max(gmax, p.node()->grad.abs().maxCoeff());
    }
    const double floor = 1e-6 * std::max(1.0, gmax);

    double max_rel = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Eigen::ArrayXd& vals = params[pi].node()->value;
        for (int64_t i = 0; i < vals.size(); ++i) {
            const double saved = vals[i];
            vals[i] = saved + h;
            const double f_plus = forward().value_scalar();
            vals[i] = saved - h;
            const double f_minus = forward().value_scalar();
            vals[i] = saved;
            const double fd = (f_plus - f_minus) / (2.0 * h);
            const double a = analytic[pi][i];
            const double rel = std::abs(a - fd) / std::max({std::abs(a), std::abs(fd), floor});
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

namespace {

RowMat random_mat(int rows, int cols, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> unif(lo, hi);
    RowMat m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = unif(rng);
    return m;
}

GradCheckEntry check_one(const std::string& name, const std::vector<Tensor>& params,
                         const std::function<Tensor()>& forward) {
    return {name, finite_diff_max_rel_error(forward, params)};
}

// Reduces any tensor to a scalar with nonuniform weights so that every
// output element influences the checked loss.
Tensor weighted_sum(const Tensor& t, uint64_t salt) {
    std::mt19937_64 rng(salt);
    RowMat w = random_mat(t.rows(), t.cols(), rng, 0.5, 1.5);
    return ad::sum(ad::mul(t, Tensor::constant(w)));
}

}  // namespace

std::vector<GradCheckEntry> gradcheck_primitives(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<GradCheckEntry> out;

    {
        Tensor a = Tensor::param(random_mat(3, 4, rng, -1.0, 1.0));
        Tensor b = Tensor::param(random_mat(3, 4, rng, -1.0, 1.0));
        out.push_back(check_one("add", {a, b}, [&] { return weighted_sum(ad::add(a, b), 1); }));
        out.push_back(check_one("sub", {a, b}, [&] { return weighted_sum(ad::sub(a, b), 2); }));
        out.push_back(check_one("mul", {a, b}, [&] { return weighted_sum(ad::mul(a, b), 3); }));
        out.push_back(
            check_one("scale", {a}, [&] { return weighted_sum(ad::scale(a, -1.7), 4); }));
        out.push_back(check_one("add_scalar", {a},
                                [&] { return weighted_sum(ad::add_scalar(a, 0.3), 5); }));
    }
    {
        Tensor a = Tensor::param(random_mat(3, 5, rng, -1.0, 1.0));
        Tensor b = Tensor::param(random_mat(5, 2, rng, -1.0, 1.0));
        out.push_back(
            check_one("matmul", {a, b}, [&] { return weighted_sum(ad::matmul(a, b), 6); }));
    }
    {
        Tensor x = Tensor::param(random_mat(4, 3, rng, -1.0, 1.0));
        Tensor b = Tensor::param(random_mat(1, 3, rng, -1.0, 1.0));
        out.push_back(
            check_one("add_bias", {x, b}, [&] { return weighted_sum(ad::add_bias(x, b), 7); }));
    }
    {
        Tensor a = Tensor::param(random_mat(3, 2, rng, -1.0, 1.0));
        Tensor b = Tensor::param(random_mat(3, 3, rng, -1.0, 1.0));
        out.push_back(check_one("concat_cols", {a, b},
                                [&] { return weighted_sum(ad::concat_cols(a, b), 8); }));
        out.push_back(check_one("slice_cols", {b},
                                [&] { return weighted_sum(ad::slice_cols(b, 1, 2), 9); }));
    }
    {
        Tensor x = Tensor::param(random_mat(4, 3, rng, -1.0, 1.0));
        std::vector<int> gather_idx = {2, 0, 3, 0, 1};
        out.push_back(check_one("gather_rows", {x}, [&] {
            return weighted_sum(ad::gather_rows(x, gather_idx), 10);
        }));
        Tensor y = Tensor::param(random_mat(5, 3, rng, -1.0, 1.0));
        std::vector<int> scatter_idx = {0, 1, 1, 2, 0};
        out.push_back(check_one("scatter_sum_rows", {y}, [&] {
            return weighted_sum(ad::scatter_sum_rows(y, scatter_idx, 3), 11);
        }));
        Tensor w = Tensor::param(random_mat(4, 1, rng, 0.2, 1.2));
        out.push_back(check_one("mul_rows", {x, w},
                                [&] { return weighted_sum(ad::mul_rows(x, w), 12); }));
    }
    {
        // Keep relu inputs away from the kink at 0.
        RowMat m = random_mat(3, 4, rng, 0.1, 1.0);
        std::uniform_int_distribution<int> coin(0, 1);
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j)
                if (coin(rng)) m(i, j) = -m(i, j);
        Tensor x = Tensor::param(m);
        out.push_back(check_one("relu", {x}, [&] { return weighted_sum(ad::relu(x), 13); }));
        out.push_back(check_one("tanh", {x}, [&] { return weighted_sum(ad::tanh(x), 14); }));
        out.push_back(check_one("exp", {x}, [&] { return weighted_sum(ad::exp(x), 15); }));
    }
    {
        Tensor x = Tensor::param(random_mat(3, 4, rng, 0.2, 1.5));
        out.push_back(check_one("log", {x}, [&] { return weighted_sum(ad::log(x), 16); }));
    }
    {
        Tensor x = Tensor::param(random_mat(4, 3, rng, -2.0, 2.0));
        out.push_back(check_one("softmax_rows", {x}, [&] {
            return weighted_sum(ad::softmax_rows(x), 17);
        }));
        out.push_back(check_one("sum", {x}, [&] { return ad::sum(x); }));
        out.push_back(check_one("mean", {x}, [&] { return ad::mean(x); }));
        out.push_back(check_one("reshape", {x}, [&] {
            return weighted_sum(ad::reshape(x, 3, 4), 18);
        }));
        out.push_back(check_one("dropout", {x}, [&] {
            return weighted_sum(ad::dropout(x, 0.4, 99), 19);
        }));
    }
    return out;
}

GradCheckEntry gradcheck_nri_toy(uint64_t seed) {
    // 3-gene toy with every loss term active, dropout on, and a fixed
    // Gumbel draw so the loss is a deterministic function of the
    // parameters. A larger sigma^2 keeps the loss scale friendly to
    // central differences.
    NriConfig cfg;
    cfg.encoder_kind = NriConfig::Encoder::gin;
    cfg.hidden_dim = 5;
    cfg.encoder_dropout = 0.25;
    cfg.decoder_dropout = 0.25;
    cfg.gumbel_tau = 0.7;
    cfg.anneal_tau = false;
    cfg.smoothness_coeff = -5.0;
    cfg.recon_sigma2 = 0.1;
    cfg.epochs = 1;
    cfg.batch_size = 2;

    const int g = 3;
    const int k = 4;
    const int B = 2;
    TrajectorySet traj = TrajectorySet::create(B, {0.0, 0.5, 1.0, 1.5}, g,
                                               TrajectorySet::Origin::reconstructed);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (auto& v : traj.values) v = unif(rng);

    NriModel model(g, k, cfg, derive_seed(seed, "toy_params"));
    std::vector<int> indices = {0, 1};
    const Eigen::MatrixXd noise =
        NriModel::sample_gumbel(B * model.pairs(), cfg.edge_types, derive_seed(seed, "toy_noise"));

    auto forward = [&]() {
        NriModel::Batch batch = model.make_batch(traj, indices);
        Tensor logits = model.encode(batch, true, 1234);
        Tensor z = NriModel::gumbel_softmax(logits, cfg.gumbel_tau, noise);
        Tensor z_present = ad::slice_cols(z, 0, 1);
        std::vector<Tensor> preds;
        for (int i = 0; i + 1 < k; ++i)
            preds.push_back(model.decode_step(batch.step_values[i], z_present, true,
                                              5678 + static_cast<uint64_t>(i)));
        return model.loss(batch, logits, preds).total;
    };
    return {"nri_toy_loss", finite_diff_max_rel_error(forward, model.parameters())};
}

}  // namespace otgrn
