#include "otgrn/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace otgrn::ad {

namespace {

std::atomic<uint64_t> g_seq{1};

std::shared_ptr<Node> new_node(int rows, int cols, const char* op) {
    auto n = std::make_shared<Node>();
    n->rows = rows;
    n->cols = cols;
    n->value.resize(static_cast<int64_t>(rows) * cols);
    n->seq = g_seq.fetch_add(1);
    n->op = op;
    return n;
}

void check_finite(const Node& n) {
    if (!n.value.isFinite().all())
        throw NumericError(std::string("non-finite value in forward op '") + n.op + "'");
}

void check_grad_finite(const Node& n) {
    if (!n.grad.isFinite().all())
        throw NumericError(std::string("non-finite gradient in backward of op '") + n.op +
                           "'");
}

Eigen::Map<RowMat> mat(Node& n) { return {n.value.data(), n.rows, n.cols}; }
Eigen::Map<const RowMat> mat(const Node& n) { return {n.value.data(), n.rows, n.cols}; }
Eigen::Map<RowMat> gmat(Node& n) {
    n.ensure_grad();
    return {n.grad.data(), n.rows, n.cols};
}
Eigen::Map<const RowMat> gmat_const(const Node& n) {
    return {n.grad.data(), n.rows, n.cols};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw Error(std::string("shape mismatch in ") + op);
}

Tensor finish(std::shared_ptr<Node> n, std::vector<std::shared_ptr<Node>> parents,
              std::function<void(const Node&)> backprop) {
    check_finite(*n);
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->requires_grad;
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return Tensor::wrap(std::move(n));
}

}  // namespace

Tensor Tensor::constant(const RowMat& m) {
    auto n = new_node(static_cast<int>(m.rows()), static_cast<int>(m.cols()), "constant");
    mat(*n) = m;
    check_finite(*n);
    return wrap(std::move(n));
}

Tensor Tensor::constant(int rows, int cols, double fill) {
    auto n = new_node(rows, cols, "constant");
    n->value.setConstant(fill);
    check_finite(*n);
    return wrap(std::move(n));
}

Tensor Tensor::scalar(double v) { return constant(1, 1, v); }

Tensor Tensor::param(const RowMat& m) {
    auto n = new_node(static_cast<int>(m.rows()), static_cast<int>(m.cols()), "param");
    mat(*n) = m;
    check_finite(*n);
    n->requires_grad = true;
    n->ensure_grad();
    return wrap(std::move(n));
}

double Tensor::value_scalar() const {
    if (size() != 1) throw Error("value_scalar on non-scalar tensor");
    return node_->value[0];
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto n = new_node(a.rows(), a.cols(), "add");
    n->value = a.node()->value + b.node()->value;
    return finish(std::move(n), {a.node(), b.node()}, [](const Node& out) {
        if (out.parents[0]->requires_grad) out.parents[0]->ensure_grad(), out.parents[0]->grad += out.grad;
        if (out.parents[1]->requires_grad) out.parents[1]->ensure_grad(), out.parents[1]->grad += out.grad;
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto n = new_node(a.rows(), a.cols(), "sub");
    n->value = a.node()->value - b.node()->value;
    return finish(std::move(n), {a.node(), b.node()}, [](const Node& out) {
        if (out.parents[0]->requires_grad) out.parents[0]->ensure_grad(), out.parents[0]->grad += out.grad;
        if (out.parents[1]->requires_grad) out.parents[1]->ensure_grad(), out.parents[1]->grad -= out.grad;
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto n = new_node(a.rows(), a.cols(), "mul");
    n->value = a.node()->value * b.node()->value;
    return finish(std::move(n), {a.node(), b.node()}, [](const Node& out) {
        auto& pa = *out.parents[0];
        auto& pb = *out.parents[1];
        if (pa.requires_grad) pa.ensure_grad(), pa.grad += out.grad * pb.value;
        if (pb.requires_grad) pb.ensure_grad(), pb.grad += out.grad * pa.value;
    });
}

Tensor scale(const Tensor& a, double c) {
    if (!std::isfinite(c)) throw NumericError("non-finite scale factor");
    auto n = new_node(a.rows(), a.cols(), "scale");
    n->value = a.node()->value * c;
    return finish(std::move(n), {a.node()}, [c](const Node& out) {
        out.parents[0]->ensure_grad();
        out.parents[0]->grad += out.grad * c;
    });
}

Tensor add_scalar(const Tensor& a, double c) {
    if (!std::isfinite(c)) throw NumericError("non-finite scalar addend");
    auto n = new_node(a.rows(), a.cols(), "add_scalar");
    n->value = a.node()->value + c;
    return finish(std::move(n), {a.node()}, [](const Node& out) {
        out.parents[0]->ensure_grad();
        out.parents[0]->grad += out.grad;
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw Error("shape mismatch in matmul");
    auto n = new_node(a.rows(), b.cols(), "matmul");
    mat(*n) = a.matrix() * b.matrix();
    return finish(std::move(n), {a.node(), b.node()}, [](const Node& out) {
        auto& pa = *out.parents[0];
        auto& pb = *out.parents[1];
        auto g = gmat_const(out);
        if (pa.requires_grad) {
            pa.ensure_grad();
            gmat(pa) += g * mat(pb).transpose();
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            gmat(pb) += mat(pa).transpose() * g;
        }
    });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols())
        throw Error("bias must be [1, cols] in add_bias");
    auto n = new_node(x.rows(), x.cols(), "add_bias");
    mat(*n) = x.matrix().rowwise() + bias.matrix().row(0);
    return finish(std::move(n), {x.node(), bias.node()}, [](const Node& out) {
        auto& px = *out.parents[0];
        auto& pb = *out.parents[1];
        auto g = gmat_const(out);
        if (px.requires_grad) px.ensure_grad(), px.grad += out.grad;
        if (pb.requires_grad) {
            pb.ensure_grad();
            gmat(pb).row(0) += g.colwise().sum();
        }
    });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw Error("row mismatch in concat_cols");
    auto n = new_node(a.rows(), a.cols() + b.cols(), "concat_cols");
    mat(*n).leftCols(a.cols()) = a.matrix();
    mat(*n).rightCols(b.cols()) = b.matrix();
    const int ac = a.cols();
    return finish(std::move(n), {a.node(), b.node()}, [ac](const Node& out) {
        auto& pa = *out.parents[0];
        auto& pb = *out.parents[1];
        auto g = gmat_const(out);
        if (pa.requires_grad) {
            pa.ensure_grad();
            gmat(pa) += g.leftCols(ac);
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            gmat(pb) += g.rightCols(out.cols - ac);
        }
    });
}

Tensor slice_cols(const Tensor& x, int first_col, int n_cols) {
    if (first_col < 0 || n_cols < 1 || first_col + n_cols > x.cols())
        throw Error("slice_cols out of range");
    auto n = new_node(x.rows(), n_cols, "slice_cols");
    mat(*n) = x.matrix().middleCols(first_col, n_cols);
    return finish(std::move(n), {x.node()}, [first_col, n_cols](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        gmat(px).middleCols(first_col, n_cols) += gmat_const(out);
    });
}

Tensor gather_rows(const Tensor& x, std::vector<int> index) {
    for (int i : index)
        if (i < 0 || i >= x.rows()) throw Error("gather_rows index out of range");
    auto n = new_node(static_cast<int>(index.size()), x.cols(), "gather_rows");
    for (size_t i = 0; i < index.size(); ++i) mat(*n).row(static_cast<int>(i)) = x.matrix().row(index[i]);
    return finish(std::move(n), {x.node()}, [idx = std::move(index)](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        auto g = gmat_const(out);
        auto pg = gmat(px);
        for (size_t i = 0; i < idx.size(); ++i) pg.row(idx[i]) += g.row(static_cast<int>(i));
    });
}

Tensor scatter_sum_rows(const Tensor& x, std::vector<int> index, int out_rows) {
    if (static_cast<int>(index.size()) != x.rows())
        throw Error("scatter_sum_rows needs one index per row");
    for (int i : index)
        if (i < 0 || i >= out_rows) throw Error("scatter_sum_rows index out of range");
    auto n = new_node(out_rows, x.cols(), "scatter_sum_rows");
    n->value.setZero();
    for (size_t i = 0; i < index.size(); ++i)
        mat(*n).row(index[i]) += x.matrix().row(static_cast<int>(i));
    return finish(std::move(n), {x.node()}, [idx = std::move(index)](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        auto g = gmat_const(out);
        auto pg = gmat(px);
        for (size_t i = 0; i < idx.size(); ++i) pg.row(static_cast<int>(i)) += g.row(idx[i]);
    });
}

Tensor mul_rows(const Tensor& x, const Tensor& w) {
    if (w.cols() != 1 || w.rows() != x.rows()) throw Error("mul_rows weight must be [rows, 1]");
    auto n = new_node(x.rows(), x.cols(), "mul_rows");
    mat(*n) = x.matrix().array().colwise() * w.matrix().col(0).array();
    return finish(std::move(n), {x.node(), w.node()}, [](const Node& out) {
        auto& px = *out.parents[0];
        auto& pw = *out.parents[1];
        auto g = gmat_const(out);
        if (px.requires_grad) {
            px.ensure_grad();
            gmat(px).array() += g.array().colwise() * mat(pw).col(0).array();
        }
        if (pw.requires_grad) {
            pw.ensure_grad();
            gmat(pw).col(0).array() += (g.array() * mat(px).array()).rowwise().sum();
        }
    });
}

Tensor relu(const Tensor& x) {
    auto n = new_node(x.rows(), x.cols(), "relu");
    n->value = x.node()->value.max(0.0);
    return finish(std::move(n), {x.node()}, [](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        px.grad += out.grad * (px.value > 0.0).cast<double>();
    });
}

Tensor tanh(const Tensor& x) {
    auto n = new_node(x.rows(), x.cols(), "tanh");
    n->value = x.node()->value.tanh();
    return finish(std::move(n), {x.node()}, [](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        px.grad += out.grad * (1.0 - out.value.square());
    });
}

Tensor exp(const Tensor& x) {
    auto n = new_node(x.rows(), x.cols(), "exp");
    n->value = x.node()->value.exp();
    return finish(std::move(n), {x.node()}, [](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        px.grad += out.grad * out.value;
    });
}

Tensor log(const Tensor& x) {
    auto n = new_node(x.rows(), x.cols(), "log");
    n->value = x.node()->value.log();
    return finish(std::move(n), {x.node()}, [](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        px.grad += out.grad / px.value;
        check_grad_finite(px);
    });
}

Tensor softmax_rows(const Tensor& x) {
    auto n = new_node(x.rows(), x.cols(), "softmax_rows");
    auto out = mat(*n);
    auto in = x.matrix();
    for (int i = 0; i < x.rows(); ++i) {
        const double c = in.row(i).maxCoeff();
        out.row(i) = (in.row(i).array() - c).exp();
        out.row(i) /= out.row(i).sum();
    }
    return finish(std::move(n), {x.node()}, [](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        auto y = mat(out);
        auto g = gmat_const(out);
        auto pg = gmat(px);
        for (int i = 0; i < out.rows; ++i) {
            const double dot = (g.row(i).array() * y.row(i).array()).sum();
            pg.row(i).array() += y.row(i).array() * (g.row(i).array() - dot);
        }
    });
}

Tensor sum(const Tensor& x) {
    auto n = new_node(1, 1, "sum");
    n->value[0] = x.node()->value.sum();
    return finish(std::move(n), {x.node()}, [](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        px.grad += out.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    if (x.size() == 0) throw Error("mean of empty tensor");
    auto n = new_node(1, 1, "mean");
    n->value[0] = x.node()->value.mean();
    const double inv = 1.0 / static_cast<double>(x.size());
    return finish(std::move(n), {x.node()}, [inv](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        px.grad += out.grad[0] * inv;
    });
}

Tensor reshape(const Tensor& x, int rows, int cols) {
    if (static_cast<int64_t>(rows) * cols != x.size()) throw Error("reshape size mismatch");
    auto n = new_node(rows, cols, "reshape");
    n->value = x.node()->value;
    return finish(std::move(n), {x.node()}, [](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        px.grad += out.grad;
    });
}

Tensor dropout(const Tensor& x, double rate, uint64_t seed) {
    if (rate < 0.0 || rate >= 1.0) throw Error("dropout rate must be in [0,1)");
    if (rate == 0.0) return x;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::ArrayXd mask(x.size());
    const double keep_scale = 1.0 / (1.0 - rate);
    for (int64_t i = 0; i < x.size(); ++i)
        mask[i] = unif(rng) < rate ? 0.0 : keep_scale;
    auto n = new_node(x.rows(), x.cols(), "dropout");
    n->value = x.node()->value * mask;
    return finish(std::move(n), {x.node()}, [mask = std::move(mask)](const Node& out) {
        auto& px = *out.parents[0];
        px.ensure_grad();
        px.grad += out.grad * mask;
    });
}

void backward(const Tensor& loss) {
    if (!loss.defined()) throw Error("backward on empty tensor (detached graph)");
    if (loss.size() != 1) throw Error("backward requires a scalar loss");

    // Creation order is already topological; collect reachable nodes and
    // sweep by descending sequence number.
    std::vector<Node*> reachable;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{loss.node().get()};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        reachable.push_back(n);
        for (const auto& p : n->parents)
            if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(reachable.begin(), reachable.end(),
              [](const Node* a, const Node* b) { return a->seq > b->seq; });

    for (Node* n : reachable) {
        n->ensure_grad();
        n->grad.setZero();
    }
    loss.node()->grad[0] = 1.0;
    for (Node* n : reachable) {
        if (n->backprop && n->requires_grad) {
            n->backprop(*n);
            check_grad_finite(*n);
        }
    }
}

void adam_step(std::vector<Tensor>& params, AdamState& state, double lr, double beta1,
               double beta2, double eps_adam) {
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.emplace_back(Eigen::ArrayXd::Zero(p.size()));
            state.v.emplace_back(Eigen::ArrayXd::Zero(p.size()));
        }
    }
    if (state.m.size() != params.size()) throw Error("adam state size mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Node& n = *params[i].node();
        n.ensure_grad();
        if (!n.grad.isFinite().all())
            throw NumericError("non-finite gradient in adam_step");
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * n.grad;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * n.grad.square();
        n.value -= lr * (state.m[i] / bc1) / ((state.v[i] / bc2).sqrt() + eps_adam);
        n.grad.setZero();
    }
}

Linear make_linear(int in_dim, int out_dim, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    const double bound = std::sqrt(6.0 / (in_dim + out_dim));
    RowMat w(in_dim, out_dim);
    for (int i = 0; i < in_dim; ++i)
        for (int j = 0; j < out_dim; ++j) w(i, j) = bound * unif(rng);
    // Small nonzero bias init; an all-zero bias can park relu chains
    // exactly on the kink, where one-sided losses defeat gradient checks.
    RowMat b(1, out_dim);
    for (int j = 0; j < out_dim; ++j) b(0, j) = 0.1 * unif(rng);
    Linear l;
    l.weight = Tensor::param(w);
    l.bias = Tensor::param(b);
    return l;
}

Mlp make_mlp(int in_dim, int hidden_dim, int out_dim, std::mt19937_64& rng) {
    Mlp mlp;
    mlp.l1 = make_linear(in_dim, hidden_dim, rng);
    mlp.l2 = make_linear(hidden_dim, out_dim, rng);
    return mlp;
}

}  // namespace otgrn::ad
