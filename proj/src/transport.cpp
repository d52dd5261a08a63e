#include "otgrn/transport.hpp"

#include <cmath>
#include <limits>

namespace otgrn {

void CostMatrix::validate() const {
    if (values.rows() < 1 || values.cols() < 1) throw Error("empty cost matrix");
    if (!values.allFinite()) throw Error("non-finite cost entry");
    if ((values.array() < 0.0).any()) throw Error("negative cost entry");
}

void TransportPlan::validate() const {
    if (gamma.rows() < 1 || gamma.cols() < 1) throw Error("empty transport plan");
    if (!gamma.allFinite()) throw NumericError("non-finite transport plan entry");
    if ((gamma.array() < 0.0).any()) throw NumericError("negative transport plan entry");
    // Marginal invariants apply once the solver reports convergence; a
    // plan flagged non-converged carries that information itself.
    if (!converged) return;
    const double mass = gamma.sum();
    if (mode == MarginalMode::balanced) {
        const int n = static_cast<int>(gamma.rows());
        const int m = static_cast<int>(gamma.cols());
        double err = std::max(
            (gamma.rowwise().sum().array() - 1.0 / n).abs().maxCoeff(),
            (gamma.colwise().sum().array() - 1.0 / m).abs().maxCoeff());
        if (err > 1e-6) throw NumericError("balanced plan marginals violate tolerance");
    } else if (std::abs(mass - 1.0) > 0.1) {
        throw NumericError("unbalanced plan mass drifted more than 10% from 1");
    }
}

void GrowthVector::validate() const {
    if (!values.allFinite()) throw NumericError("non-finite growth rate");
    if ((values.array() < 0.0).any()) throw NumericError("negative growth rate");
}

void TransportConfig::validate() const {
    if (!(marginal_penalty > 0.0)) throw ConfigError("marginal penalty must be > 0");
    if (max_inner_iters < 1) throw ConfigError("max_inner_iters must be >= 1");
    if (!(inner_tol > 0.0)) throw ConfigError("inner_tol must be > 0");
    if (growth_iters < 0) throw ConfigError("growth_iters must be >= 0");
    if (!(growth_tol > 0.0)) throw ConfigError("growth_tol must be > 0");
}

double resolve_epsilon(const CostMatrix& M, const TransportConfig& cfg) {
    if (cfg.epsilon > 0.0) return cfg.epsilon;
    const double mean = M.values.mean();
    if (!(mean > 0.0))
        // Degenerate all-zero costs: any positive epsilon gives the
        // entropy maximizer.
        return 1.0;
    return 0.05 * mean;
}

CostMatrix compute_cost_matrix(const ExpressionMatrix& source,
                               const ExpressionMatrix& target) {
    if (source.genes() != target.genes())
        throw Error("gene-dimension mismatch between snapshots");
    CostMatrix M;
    const int n = source.cells();
    const int m = target.cells();
    M.values.resize(n, m);
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < m; ++q)
            M.values(p, q) = (source.values.col(p) - target.values.col(q)).norm();
    M.validate();
    return M;
}

namespace {

struct SinkhornResult {
    Eigen::MatrixXd gamma;
    bool converged = false;
    int iterations = 0;
};

// Direct-kernel scaling loop on K = exp(-M/eps). Throws when the kernel
// underflows to an all-zero row or column. In balanced mode convergence
// additionally requires the marginal violation to fall under
// marginal_tol: on near-degenerate instances the scaling vectors can
// move by less than inner_tol per sweep long before the marginals are
// satisfied.
SinkhornResult sinkhorn_direct(const Eigen::MatrixXd& M, const Eigen::VectorXd& mu,
                               const Eigen::VectorXd& nu, double eps, double source_exponent,
                               double target_exponent, int max_iters, double tol,
                               double marginal_tol) {
    const int n = static_cast<int>(M.rows());
    const int m = static_cast<int>(M.cols());
    // std::exp underflows honestly; Eigen's vectorized exp clamps instead.
    Eigen::MatrixXd K(n, m);
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < m; ++q) K(p, q) = std::exp(-M(p, q) / eps);
    if ((K.rowwise().maxCoeff().array() == 0.0).any() ||
        (K.colwise().maxCoeff().array() == 0.0).any())
        throw NumericError(
            "Sinkhorn kernel underflowed to zero; epsilon too small relative to costs");

    const bool balanced = source_exponent == 1.0 && target_exponent == 1.0;
    Eigen::VectorXd u = Eigen::VectorXd::Ones(n);
    Eigen::VectorXd v = Eigen::VectorXd::Ones(m);
    SinkhornResult res;
    for (int it = 0; it < max_iters; ++it) {
        Eigen::VectorXd u_new = (mu.array() / (K * v).array());
        if (source_exponent != 1.0) u_new = u_new.array().pow(source_exponent);
        Eigen::VectorXd v_new = (nu.array() / (K.transpose() * u_new).array());
        if (target_exponent != 1.0) v_new = v_new.array().pow(target_exponent);
        if (!u_new.allFinite() || !v_new.allFinite())
            throw NumericError("Sinkhorn scaling overflow; use log-domain mode");
        double delta = 0.0;
        for (int p = 0; p < n; ++p)
            delta = std::max(delta, std::abs(std::log(u_new[p] / u[p])));
        for (int q = 0; q < m; ++q)
            delta = std::max(delta, std::abs(std::log(v_new[q] / v[q])));
        u = u_new;
        v = v_new;
        res.iterations = it + 1;
        if (delta < tol) {
            if (!balanced) {
                res.converged = true;
                break;
            }
            // Column sums equal nu by construction after the v update;
            // only the row side carries residual error.
            const double row_err =
                (u.array() * (K * v).array() - mu.array()).abs().maxCoeff();
            if (row_err <= marginal_tol) {
                res.converged = true;
                break;
            }
        }
    }
    res.gamma = u.asDiagonal() * K * v.asDiagonal();
    return res;
}

// log(sum_i exp(col[i] + shift[i])) over one contiguous column.
inline double logsumexp_shifted(const double* col, const double* shift, int len) {
    double c = col[0] + shift[0];
    for (int i = 1; i < len; ++i) c = std::max(c, col[i] + shift[i]);
    double acc = 0.0;
    for (int i = 0; i < len; ++i) acc += std::exp(col[i] + shift[i] - c);
    return c + std::log(acc);
}

// Log-domain scaling loop; stable for arbitrarily small epsilon. Same
// balanced-mode stopping rule as the direct kernel. Works on contiguous
// columns of logK and its transpose, with no per-iteration temporaries;
// small stalled instances may need millions of sweeps.
SinkhornResult sinkhorn_log(const Eigen::MatrixXd& M, const Eigen::VectorXd& mu,
                            const Eigen::VectorXd& nu, double eps, double source_exponent,
                            double target_exponent, int max_iters, double tol,
                            double marginal_tol) {
    const int n = static_cast<int>(M.rows());
    const int m = static_cast<int>(M.cols());
    const Eigen::MatrixXd logK = -M / eps;
    const Eigen::MatrixXd logKt = logK.transpose();
    const Eigen::VectorXd log_mu = mu.array().log();
    const Eigen::VectorXd log_nu = nu.array().log();
    const bool balanced = source_exponent == 1.0 && target_exponent == 1.0;

    Eigen::VectorXd log_u = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd log_v = Eigen::VectorXd::Zero(m);
    SinkhornResult res;
    for (int it = 0; it < max_iters; ++it) {
        double delta = 0.0;
        for (int p = 0; p < n; ++p) {
            const double next =
                source_exponent *
                (log_mu[p] - logsumexp_shifted(logKt.col(p).data(), log_v.data(), m));
            delta = std::max(delta, std::abs(next - log_u[p]));
            log_u[p] = next;
        }
        for (int q = 0; q < m; ++q) {
            const double next =
                target_exponent *
                (log_nu[q] - logsumexp_shifted(logK.col(q).data(), log_u.data(), n));
            delta = std::max(delta, std::abs(next - log_v[q]));
            log_v[q] = next;
        }
        res.iterations = it + 1;
        if (delta < tol) {
            if (!balanced) {
                res.converged = true;
                break;
            }
            double row_err = 0.0;
            for (int p = 0; p < n; ++p) {
                const double log_row =
                    log_u[p] + logsumexp_shifted(logKt.col(p).data(), log_v.data(), m);
                row_err = std::max(row_err, std::abs(std::exp(log_row) - mu[p]));
            }
            if (row_err <= marginal_tol) {
                res.converged = true;
                break;
            }
        }
    }
    res.gamma.resize(n, m);
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < m; ++q)
            res.gamma(p, q) = std::exp(log_u[p] + logK(p, q) + log_v[q]);
    return res;
}

TransportPlan solve_with_marginals(const CostMatrix& M, const TransportConfig& cfg,
                                   const Eigen::VectorXd& mu, const Eigen::VectorXd& nu) {
    M.validate();
    cfg.validate();
    const double eps = resolve_epsilon(M, cfg);

    // Unbalanced KL relaxation raises the scaling update to
    // lambda/(lambda+eps); the hard side keeps exponent 1. The iteration
    // ends on the target update, so the plan's column marginals (and the
    // total mass in source-relaxed mode) track nu exactly at convergence.
    double src_exp = 1.0;
    double tgt_exp = 1.0;
    MarginalMode mode = MarginalMode::balanced;
    if (!cfg.balanced()) {
        const double relaxed = cfg.marginal_penalty / (cfg.marginal_penalty + eps);
        src_exp = relaxed;
        if (cfg.relax_both_sides) {
            tgt_exp = relaxed;
            mode = MarginalMode::relaxed_both;
        } else {
            mode = MarginalMode::relaxed_source;
        }
    }

    if (cfg.force_direct_kernel && cfg.force_log_domain)
        throw ConfigError("cannot force both Sinkhorn kernel modes");
    const double mean_cost = M.values.mean();
    const bool use_log =
        cfg.force_log_domain ||
        (!cfg.force_direct_kernel &&
         (eps < 0.01 * mean_cost || M.values.maxCoeff() / eps > 500.0));
    SinkhornResult res =
        use_log ? sinkhorn_log(M.values, mu, nu, eps, src_exp, tgt_exp,
                               cfg.max_inner_iters, cfg.inner_tol, cfg.marginal_tol)
                : sinkhorn_direct(M.values, mu, nu, eps, src_exp, tgt_exp,
                                  cfg.max_inner_iters, cfg.inner_tol, cfg.marginal_tol);

    TransportPlan plan;
    plan.gamma = std::move(res.gamma);
    plan.epsilon = eps;
    plan.mode = mode;
    plan.converged = res.converged;
    plan.iterations = res.iterations;
    double col_err = (plan.gamma.colwise().sum().transpose() - nu).cwiseAbs().maxCoeff();
    double row_err = (plan.gamma.rowwise().sum() - mu).cwiseAbs().maxCoeff();
    plan.marginal_error = mode == MarginalMode::balanced ? std::max(col_err, row_err)
                          : mode == MarginalMode::relaxed_source ? col_err
                                                                 : 0.0;
    // Checked against the actual marginals here; TransportPlan::validate
    // assumes the uniform marginals of the standard problem.
    if (!plan.gamma.allFinite() || (plan.gamma.array() < 0.0).any())
        throw NumericError("invalid transport plan entries");
    if (plan.converged) {
        if (mode == MarginalMode::balanced && plan.marginal_error > 1e-6)
            throw NumericError("balanced plan marginals violate tolerance");
        if (mode != MarginalMode::balanced && std::abs(plan.gamma.sum() - 1.0) > 0.1)
            throw NumericError("unbalanced plan mass drifted more than 10% from 1");
    }
    return plan;
}

}  // namespace

TransportPlan solve_entropic_ot(const CostMatrix& M, const TransportConfig& cfg) {
    const int n = M.source_cells();
    Eigen::VectorXd mu = Eigen::VectorXd::Constant(n, 1.0 / n);
    return solve_entropic_ot(M, cfg, mu);
}

TransportPlan solve_entropic_ot(const CostMatrix& M, const TransportConfig& cfg,
                                const Eigen::VectorXd& source_marginal) {
    if (source_marginal.size() != M.source_cells())
        throw Error("source marginal length mismatch");
    if (!source_marginal.allFinite() || (source_marginal.array() <= 0.0).any())
        throw NumericError("source marginal must be positive and finite");
    const int m = M.target_cells();
    Eigen::VectorXd nu = Eigen::VectorXd::Constant(m, 1.0 / m);
    return solve_with_marginals(M, cfg, source_marginal, nu);
}

GrowthVector growth_rates(const TransportPlan& plan) {
    plan.validate();
    GrowthVector g;
    g.values = plan.gamma.rowwise().sum() * static_cast<double>(plan.gamma.rows());
    g.validate();
    return g;
}

namespace {

// Pooled per-gene standardization across the two snapshots. Shifted to
// keep values nonnegative so the z-scored snapshots remain valid
// ExpressionMatrix instances.
std::pair<ExpressionMatrix, ExpressionMatrix> zscore_pair(const ExpressionMatrix& a,
                                                          const ExpressionMatrix& b) {
    const int g = a.genes();
    Eigen::MatrixXd pooled(g, a.cells() + b.cells());
    pooled << a.values, b.values;
    ExpressionMatrix za = a;
    ExpressionMatrix zb = b;
    for (int r = 0; r < g; ++r) {
        const double mean = pooled.row(r).mean();
        double var = (pooled.row(r).array() - mean).square().mean();
        const double sd = std::sqrt(std::max(var, 1e-12));
        za.values.row(r) = (a.values.row(r).array() - mean) / sd;
        zb.values.row(r) = (b.values.row(r).array() - mean) / sd;
    }
    const double shift =
        std::max(0.0, -std::min(za.values.minCoeff(), zb.values.minCoeff()));
    za.values.array() += shift;
    zb.values.array() += shift;
    return {std::move(za), std::move(zb)};
}

}  // namespace

std::pair<TransportPlan, GrowthVector> wot_solve(const ExpressionMatrix& source,
                                                 const ExpressionMatrix& target,
                                                 const TransportConfig& cfg) {
    const double delta_t = target.time - source.time;
    if (!(delta_t > 0.0)) throw Error("wot_solve requires target time > source time");
    CostMatrix M;
    if (cfg.zscore_genes) {
        auto [zs, zt] = zscore_pair(source, target);
        M = compute_cost_matrix(zs, zt);
    } else {
        M = compute_cost_matrix(source, target);
    }
    const int n = M.source_cells();

    Eigen::VectorXd mu = Eigen::VectorXd::Constant(n, 1.0 / n);
    TransportPlan plan = solve_entropic_ot(M, cfg, mu);
    plan.source_time = source.time;
    plan.target_time = target.time;
    GrowthVector g = growth_rates(plan);

    for (int it = 1; it < cfg.growth_iters; ++it) {
        Eigen::VectorXd weights = g.values.array().pow(delta_t);
        const double total = weights.sum();
        if (!(total > 0.0)) throw NumericError("degenerate growth vector: all rates zero");
        mu = weights / total;
        // Keep the reference marginal strictly positive for the KL term.
        mu = mu.cwiseMax(1e-300);
        mu /= mu.sum();

        TransportPlan next = solve_entropic_ot(M, cfg, mu);
        next.source_time = source.time;
        next.target_time = target.time;
        GrowthVector g_next = growth_rates(next);
        double rel = 0.0;
        for (int p = 0; p < n; ++p) {
            double denom = std::max(std::abs(g.values[p]), 1e-12);
            rel = std::max(rel, std::abs(g_next.values[p] - g.values[p]) / denom);
        }
        plan = std::move(next);
        g = std::move(g_next);
        if (rel < cfg.growth_tol) break;
    }
    return {std::move(plan), std::move(g)};
}

double transport_cost(const TransportPlan& plan, const CostMatrix& M) {
    return (plan.gamma.array() * M.values.array()).sum();
}

double entropic_objective(const TransportPlan& plan, const CostMatrix& M) {
    double obj = transport_cost(plan, M);
    const double eps = plan.epsilon;
    for (int p = 0; p < plan.gamma.rows(); ++p)
        for (int q = 0; q < plan.gamma.cols(); ++q) {
            const double v = plan.gamma(p, q);
            if (v > 0.0) obj += eps * v * std::log(v);
        }
    return obj;
}

}  // namespace otgrn
