#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "otgrn/common.hpp"

namespace otgrn::ad {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One recorded operation on the tape: the forward value plus the rule
/// that scatters the output gradient back to the parents. Creation order
/// is a topological order of the graph, so the backward sweep can walk
/// nodes by descending sequence number and visit each exactly once.
struct Node {
    int rows = 0;
    int cols = 0;
    Eigen::ArrayXd value;  // flat, row-major
    Eigen::ArrayXd grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(const Node&)> backprop;
    uint64_t seq = 0;
    const char* op = "leaf";

    void ensure_grad() {
        if (grad.size() != value.size()) grad = Eigen::ArrayXd::Zero(value.size());
    }
};

/// Value-semantic handle to a tape node. All tensors are 2-d; scalars are
/// 1x1. Data is stored flat in row-major order and double precision.
class Tensor {
   public:
    Tensor() = default;

    static Tensor constant(const RowMat& m);
    static Tensor constant(int rows, int cols, double fill = 0.0);
    static Tensor scalar(double v);
    /// Trainable leaf: participates in backward and adam_step.
    static Tensor param(const RowMat& m);

    bool defined() const { return node_ != nullptr; }
    int rows() const { return node_->rows; }
    int cols() const { return node_->cols; }
    int64_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    Eigen::Map<const RowMat> matrix() const {
        return {node_->value.data(), node_->rows, node_->cols};
    }
    Eigen::Map<RowMat> matrix_mut() {
        return {node_->value.data(), node_->rows, node_->cols};
    }
    Eigen::Map<const RowMat> grad_matrix() const {
        node_->ensure_grad();
        return {node_->grad.data(), node_->rows, node_->cols};
    }
    double value_scalar() const;

    void zero_grad() { node_->grad.setZero(); }

    std::shared_ptr<Node> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

   private:
    std::shared_ptr<Node> node_;
};

// ---- Primitives ---------------------------------------------------------
// Every primitive checks shape compatibility, verifies the forward value
// is finite, and records an exact backward rule.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
/// Adds a [1,n] bias row to every row of a [m,n] tensor.
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, int first_col, int n_cols);
/// out.row(i) = x.row(index[i]); backward scatter-adds.
Tensor gather_rows(const Tensor& x, std::vector<int> index);
/// out has `out_rows` rows; out.row(index[i]) += x.row(i).
Tensor scatter_sum_rows(const Tensor& x, std::vector<int> index, int out_rows);
/// Scales row i of x by w(i,0); w must be [m,1].
Tensor mul_rows(const Tensor& x, const Tensor& w);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor softmax_rows(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, int rows, int cols);
/// Inverted dropout with an explicit seed; rate 0 is the identity.
Tensor dropout(const Tensor& x, double rate, uint64_t seed);

/// Reverse-mode sweep from a scalar loss. Gradients of every reachable
/// node are zeroed first, then accumulated; each node's backward rule
/// runs exactly once.
void backward(const Tensor& loss);

// ---- Optimizer ------------------------------------------------------------

struct AdamState {
    std::vector<Eigen::ArrayXd> m;
    std::vector<Eigen::ArrayXd> v;
    int64_t t = 0;
};

/// Standard Adam with bias correction. Consumes and zeroes the parameter
/// gradients; throws NumericError on non-finite gradients.
void adam_step(std::vector<Tensor>& params, AdamState& state, double lr,
               double beta1 = 0.9, double beta2 = 0.999, double eps_adam = 1e-8);

// ---- MLP composition helpers ----------------------------------------------

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [1, out]

    Tensor operator()(const Tensor& x) const { return add_bias(matmul(x, weight), bias); }
};

/// Glorot-uniform initialized linear layer.
Linear make_linear(int in_dim, int out_dim, std::mt19937_64& rng);

/// Two-layer perceptron with ReLU hidden activation.
struct Mlp {
    Linear l1;
    Linear l2;

    Tensor operator()(const Tensor& x) const { return l2(relu(l1(x))); }
    /// Dropout applied to the hidden activation (training only).
    Tensor apply(const Tensor& x, double dropout_rate, uint64_t dropout_seed) const {
        Tensor h = relu(l1(x));
        if (dropout_rate > 0.0) h = dropout(h, dropout_rate, dropout_seed);
        return l2(h);
    }
    void collect_params(std::vector<Tensor>& out) const {
        out.push_back(l1.weight);
        out.push_back(l1.bias);
        out.push_back(l2.weight);
        out.push_back(l2.bias);
    }
};

Mlp make_mlp(int in_dim, int hidden_dim, int out_dim, std::mt19937_64& rng);

}  // namespace otgrn::ad
