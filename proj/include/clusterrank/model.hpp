#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clusterrank/data.hpp"
#include "clusterrank/errors.hpp"
#include "clusterrank/math.hpp"
#include "clusterrank/parallel.hpp"
#include "clusterrank/quadrature.hpp"

namespace clusterrank {

/// Parameters of the random-intercept logistic model: one fixed effect per
/// cluster plus the random-effect scale in unconstrained log form.
struct ModelParams {
    std::map<Id, double> beta;
    double log_sigma = 0.0;

    double sigma() const { return std::exp(log_sigma); }
    double sigma2() const { return std::exp(2.0 * log_sigma); }
};

struct FitOptions {
    int quadrature_order = 30;
    bool adaptive = true;  // recenter the rule at each expert's conditional mode
    int max_iterations = 200;
    double gradient_tol = 1e-6;
    double beta_cap = 15.0;  // clamp for quasi-separated clusters
    int threads = 0;         // 0 = hardware concurrency
    std::optional<ModelParams> init;
};

struct FitResult {
    ModelParams params;
    double loglik = 0.0;
    Eigen::MatrixXd hessian;  // over (clusters() order, log_sigma)
    bool converged = false;
    int iterations = 0;
    std::vector<Id> separation_flags;  // sorted cluster ids fitted at +-beta_cap

    bool is_separated(Id cluster) const {
        return std::binary_search(separation_flags.begin(), separation_flags.end(), cluster);
    }
};

namespace detail {

// Scale cap for the adaptive recentering. Laplace scaling alone leaves the
// rule too wide for weakly informative experts once sigma is large; capping
// near max(1, sigma/2) keeps the order-30 rule inside its fast-convergence
// regime across sigma^2 <= 16 without hurting the small-sigma case. Both the
// cap and the min against the Laplace scale are smooth (power-8 softmax /
// softmin), so the likelihood stays differentiable everywhere.
constexpr double kScaleBlend = 8.0;

inline double adaptive_scale_cap(double sigma) {
    return std::pow(1.0 + std::pow(0.5 * sigma, kScaleBlend), 1.0 / kScaleBlend);
}

// Conditional mode of one expert's joint log-density: bracketed Newton on the
// strictly decreasing score, with bisection whenever a step leaves the
// bracket. Plain Newton oscillates here when the score has long flat
// stretches between saturated ratings.
inline double conditional_mode(std::span<const std::pair<std::uint32_t, std::uint8_t>> row,
                               std::span<const double> beta_by_pos, double sigma2) {
    const auto score = [&](double b) {
        double s = -b / sigma2;
        for (const auto& [j, y] : row) s += static_cast<double>(y) - logistic(beta_by_pos[j] + b);
        return s;
    };
    double lo = -1.0, hi = 1.0;
    while (score(lo) <= 0.0) lo *= 2.0;
    while (score(hi) >= 0.0) hi *= 2.0;
    double m = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        double s = -m / sigma2;
        double curv = -1.0 / sigma2;
        for (const auto& [j, y] : row) {
            const double p = logistic(beta_by_pos[j] + m);
            s += static_cast<double>(y) - p;
            curv -= p * (1.0 - p);
        }
        if (s > 0.0)
            lo = m;
        else
            hi = m;
        double cand = m - s / curv;
        if (!(cand > lo && cand < hi)) cand = 0.5 * (lo + hi);
        const double step = cand - m;
        m = cand;
        if (std::abs(step) <= 1e-13 * (1.0 + std::abs(m))) break;
    }
    return m;
}

struct ExpertTerms {
    double loglik = 0.0;
    // gradient wrt each rated cluster's beta (row order) and log_sigma
    std::vector<double> d_beta;
    double d_log_sigma = 0.0;
};

// Marginal log-likelihood contribution of one expert and, when `want_grad`,
// its exact gradient. The adaptive path recenters the rule at the expert's
// conditional mode with a capped Laplace scale; the gradient follows the
// chain rule through the mode and scale, so it differentiates exactly what
// the likelihood path computes.
inline ExpertTerms expert_terms(std::span<const std::pair<std::uint32_t, std::uint8_t>> row,
                                std::span<const double> beta_by_pos, double log_sigma,
                                const QuadratureRule& rule, bool want_grad) {
    static const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    static const double log_sqrt_pi = 0.5 * std::log(std::numbers::pi);

    const int nq = rule.order;
    const std::size_t r = row.size();
    const double sigma = std::exp(log_sigma);
    const double sigma2 = sigma * sigma;

    ExpertTerms out;
    if (want_grad) out.d_beta.assign(r, 0.0);

    std::vector<double> logterm(nq);
    std::vector<double> bnodes(nq);

    double m = 0.0, tau = 0.0;
    double u = 0.0;           // negative curvature of the joint log-density at the mode
    double tau_laplace = 0.0;
    double cap = 0.0;
    double soft = 0.0;        // 1 + (tau_laplace / cap)^kScaleBlend
    std::vector<double> p_mode;

    if (rule.adaptive) {
        m = conditional_mode(row, beta_by_pos, sigma2);
        u = 1.0 / sigma2;
        p_mode.resize(r);
        for (std::size_t k = 0; k < r; ++k) {
            const double p = logistic(beta_by_pos[row[k].first] + m);
            p_mode[k] = p;
            u += p * (1.0 - p);
        }
        tau_laplace = 1.0 / std::sqrt(u);
        cap = adaptive_scale_cap(sigma);
        soft = 1.0 + std::pow(tau_laplace / cap, kScaleBlend);
        tau = tau_laplace * std::pow(soft, -1.0 / kScaleBlend);

        const double log_tau_sqrt2 = std::log(tau) + 0.5 * std::log(2.0);
        for (int q = 0; q < nq; ++q) {
            const double b = m + tau * std::numbers::sqrt2 * rule.nodes[q];
            bnodes[q] = b;
            double s = -half_log_2pi - log_sigma - b * b / (2.0 * sigma2);
            for (const auto& [j, y] : row) s += log_bernoulli(y, beta_by_pos[j] + b);
            logterm[q] = std::log(rule.weights[q]) + rule.nodes[q] * rule.nodes[q] + s + log_tau_sqrt2;
        }
    } else {
        for (int q = 0; q < nq; ++q) {
            const double b = sigma * std::numbers::sqrt2 * rule.nodes[q];
            bnodes[q] = b;
            double s = 0.0;
            for (const auto& [j, y] : row) s += log_bernoulli(y, beta_by_pos[j] + b);
            logterm[q] = std::log(rule.weights[q]) - log_sqrt_pi + s;
        }
    }

    out.loglik = log_sum_exp(logterm);
    if (!want_grad) return out;

    // Posterior node weights.
    std::vector<double> pq(nq);
    for (int q = 0; q < nq; ++q) pq[q] = std::exp(logterm[q] - out.loglik);

    if (!rule.adaptive) {
        for (int q = 0; q < nq; ++q) {
            const double b = bnodes[q];
            double resid_sum = 0.0;
            for (std::size_t k = 0; k < r; ++k) {
                const double resid = static_cast<double>(row[k].second) - logistic(beta_by_pos[row[k].first] + b);
                out.d_beta[k] += pq[q] * resid;
                resid_sum += resid;
            }
            out.d_log_sigma += pq[q] * b * resid_sum;
        }
        return out;
    }

    // Sensitivity of the mode: m solves score(m; theta) = 0.
    std::vector<double> dm_beta(r);
    double dudm = 0.0;
    for (std::size_t k = 0; k < r; ++k) {
        const double pk = p_mode[k];
        dm_beta[k] = -pk * (1.0 - pk) / u;
        dudm += pk * (1.0 - pk) * (1.0 - 2.0 * pk);
    }
    const double dm_ls = (2.0 * m / sigma2) / u;

    // tau = softmin(tau_laplace, cap(sigma)); chain rule through both arms.
    const double dtau_dtL = std::pow(tau / tau_laplace, kScaleBlend + 1.0);
    const double dtau_dcap = std::pow(tau / cap, kScaleBlend + 1.0);
    const double dcap_dls = std::pow(0.5 * sigma / cap, kScaleBlend - 1.0) * 0.5 * sigma;
    const double dtL = -0.5 * tau_laplace * tau_laplace * tau_laplace;  // d tau_L / d u
    std::vector<double> dtau_beta(r);
    for (std::size_t k = 0; k < r; ++k) {
        const double pk = p_mode[k];
        const double du = pk * (1.0 - pk) * (1.0 - 2.0 * pk) + dudm * dm_beta[k];
        dtau_beta[k] = dtau_dtL * dtL * du;
    }
    const double du_ls = -2.0 / sigma2 + dudm * dm_ls;
    const double dtau_ls = dtau_dtL * dtL * du_ls + dtau_dcap * dcap_dls;

    double ex_score = 0.0;        // E[ d/db joint log-density at nodes ]
    double ex_score_x = 0.0;      // E[ same * sqrt2 * x_q ]
    for (int q = 0; q < nq; ++q) {
        const double b = bnodes[q];
        double resid_sum = 0.0;
        for (std::size_t k = 0; k < r; ++k) {
            const double resid = static_cast<double>(row[k].second) - logistic(beta_by_pos[row[k].first] + b);
            out.d_beta[k] += pq[q] * resid;
            resid_sum += resid;
        }
        out.d_log_sigma += pq[q] * (b * b / sigma2 - 1.0);
        const double score_b = resid_sum - b / sigma2;
        ex_score += pq[q] * score_b;
        ex_score_x += pq[q] * score_b * std::numbers::sqrt2 * rule.nodes[q];
    }
    for (std::size_t k = 0; k < r; ++k)
        out.d_beta[k] += ex_score * dm_beta[k] + (ex_score_x + 1.0 / tau) * dtau_beta[k];
    out.d_log_sigma += ex_score * dm_ls + (ex_score_x + 1.0 / tau) * dtau_ls;
    return out;
}

// Adds `term` to `acc` under frequency-weight semantics: an integral weight
// enters as that many repeated additions, which reproduces physical
// replication of the expert bit for bit.
template <class AddFn>
inline void apply_weight(double w, AddFn&& add) {
    double ip;
    if (std::modf(w, &ip) == 0.0 && ip >= 1.0 && ip <= 16777216.0) {
        const long reps = static_cast<long>(ip);
        for (long k = 0; k < reps; ++k) add(1.0);
    } else {
        add(w);
    }
}

// Total weighted log-likelihood (and gradient over cluster order + log_sigma
// when `grad` is non-null) at beta aligned with data.clusters().
inline double total_loglik(const RatingsTable& data, std::span<const double> beta_by_pos,
                           double log_sigma, const QuadratureRule& rule,
                           std::vector<double>* grad) {
    if (grad) grad->assign(data.cluster_count() + 1, 0.0);
    double total = 0.0;
    for (std::size_t e = 0; e < data.expert_count(); ++e) {
        const auto row = data.row(e);
        const ExpertTerms t = expert_terms(row, beta_by_pos, log_sigma, rule, grad != nullptr);
        apply_weight(data.weight_at(e), [&](double s) {
            total += s * t.loglik;
            if (grad) {
                for (std::size_t k = 0; k < row.size(); ++k)
                    (*grad)[row[k].first] += s * t.d_beta[k];
                (*grad)[data.cluster_count()] += s * t.d_log_sigma;
            }
        });
    }
    if (!std::isfinite(total)) throw numeric_error("log-likelihood is not finite");
    return total;
}

inline std::vector<double> beta_aligned_with(const RatingsTable& data, const ModelParams& params) {
    std::vector<double> beta(data.cluster_count());
    for (std::size_t j = 0; j < data.cluster_count(); ++j) {
        const auto it = params.beta.find(data.clusters()[j]);
        if (it == params.beta.end())
            throw model_mismatch_error("no beta for rated cluster " +
                                       std::to_string(data.clusters()[j]));
        beta[j] = it->second;
    }
    return beta;
}

inline void validate_rule(const QuadratureRule& rule) {
    if (rule.order < 1 || rule.nodes.size() != static_cast<std::size_t>(rule.order) ||
        rule.weights.size() != static_cast<std::size_t>(rule.order))
        throw std::invalid_argument("quadrature rule is malformed");
}

inline void validate_params(const ModelParams& params) {
    if (!std::isfinite(params.log_sigma))
        throw std::invalid_argument("log_sigma must be finite");
}

}  // namespace detail

/// Marginal log-likelihood of the model: sum over experts of the weighted
/// log of the Bernoulli product integrated against the normal random effect,
/// each integral approximated by the given Gauss-Hermite rule.
inline double log_likelihood(const ModelParams& params, const RatingsTable& data,
                             const QuadratureRule& rule) {
    detail::validate_rule(rule);
    detail::validate_params(params);
    const auto beta = detail::beta_aligned_with(data, params);
    return detail::total_loglik(data, beta, params.log_sigma, rule, nullptr);
}

/// Analytic gradient of log_likelihood over (clusters() order, log_sigma).
inline std::vector<double> log_likelihood_gradient(const ModelParams& params,
                                                   const RatingsTable& data,
                                                   const QuadratureRule& rule) {
    detail::validate_rule(rule);
    detail::validate_params(params);
    const auto beta = detail::beta_aligned_with(data, params);
    std::vector<double> grad;
    detail::total_loglik(data, beta, params.log_sigma, rule, &grad);
    return grad;
}

namespace detail {

// Bounds keeping Newton iterates in numerically sane territory.
constexpr double kLogSigmaMin = -12.0;
constexpr double kLogSigmaMax = 6.0;

struct FitEngine {
    const RatingsTable& data;
    QuadratureRule rule;
    std::vector<std::size_t> free_idx;  // positions into (beta..., log_sigma)
    std::vector<double> theta;          // full parameter vector, beta then log_sigma
    int threads = 1;

    double loglik(const std::vector<double>& full) const {
        return total_loglik(data, std::span(full.data(), data.cluster_count()),
                            full[data.cluster_count()], rule, nullptr);
    }

    Eigen::VectorXd free_gradient(const std::vector<double>& full) const {
        std::vector<double> g;
        total_loglik(data, std::span(full.data(), data.cluster_count()),
                     full[data.cluster_count()], rule, &g);
        Eigen::VectorXd out(free_idx.size());
        for (std::size_t k = 0; k < free_idx.size(); ++k) out[k] = g[free_idx[k]];
        return out;
    }

    // Central differences of the analytic gradient, column by column.
    Eigen::MatrixXd free_hessian(const std::vector<double>& full) const {
        const std::size_t nf = free_idx.size();
        Eigen::MatrixXd h(nf, nf);
        parallel_for(nf, threads, [&](std::size_t k) {
            std::vector<double> pert = full;
            const double step = 1e-4 * std::max(1.0, std::abs(full[free_idx[k]]));
            pert[free_idx[k]] = full[free_idx[k]] + step;
            const Eigen::VectorXd gp = free_gradient(pert);
            pert[free_idx[k]] = full[free_idx[k]] - step;
            const Eigen::VectorXd gm = free_gradient(pert);
            h.col(k) = (gp - gm) / (2.0 * step);
        });
        return 0.5 * (h + h.transpose());
    }
};

}  // namespace detail

/// Maximum-likelihood fit by safeguarded Newton-Raphson: analytic gradient,
/// numerically differenced Hessian, step halving, and a diagonally damped
/// direction whenever the Hessian is not negative definite. Clusters rated
/// unanimously 0 or 1 are held at -+beta_cap and excluded from convergence
/// checks; everything else is reported as estimated.
inline FitResult fit_ml(const RatingsTable& data, const FitOptions& options = {}) {
    if (data.empty()) throw std::invalid_argument("fit_ml: empty data");
    if (options.quadrature_order < 1) throw std::invalid_argument("fit_ml: quadrature order must be >= 1");
    if (options.max_iterations < 1) throw std::invalid_argument("fit_ml: max_iterations must be >= 1");
    if (!(options.gradient_tol > 0.0)) throw std::invalid_argument("fit_ml: gradient_tol must be positive");

    const std::size_t nc = data.cluster_count();
    const auto raw = data.cluster_counts();
    const auto wc = data.weighted_cluster_counts();

    detail::FitEngine eng{data, gauss_hermite(options.quadrature_order, options.adaptive)};
    eng.threads = static_cast<int>(resolve_threads(options.threads));
    eng.theta.assign(nc + 1, 0.0);

    std::vector<Id> separated;
    for (std::size_t j = 0; j < nc; ++j) {
        const bool all_zero = raw.ones[j] == 0;
        const bool all_one = raw.ones[j] == raw.total[j];
        if (all_zero || all_one) {
            separated.push_back(data.clusters()[j]);
            eng.theta[j] = all_zero ? -options.beta_cap : options.beta_cap;
        } else {
            // Haldane-corrected empirical logit start (weighted counts).
            eng.theta[j] = logit((wc.ones[j] + 0.5) / (wc.total[j] + 1.0));
            eng.free_idx.push_back(j);
        }
    }
    eng.free_idx.push_back(nc);  // log_sigma
    eng.theta[nc] = 0.0;

    if (options.init) {
        detail::validate_params(*options.init);
        for (const std::size_t k : eng.free_idx)
            if (k < nc) {
                const auto it = options.init->beta.find(data.clusters()[k]);
                if (it != options.init->beta.end()) eng.theta[k] = it->second;
            }
        eng.theta[nc] = std::clamp(options.init->log_sigma, detail::kLogSigmaMin, detail::kLogSigmaMax);
    }

    double ll = eng.loglik(eng.theta);
    bool converged = false;
    int iterations = 0;

    for (int it = 0; it < options.max_iterations; ++it) {
        iterations = it;
        const Eigen::VectorXd g = eng.free_gradient(eng.theta);
        if (g.lpNorm<Eigen::Infinity>() <= options.gradient_tol) {
            converged = true;
            break;
        }
        const Eigen::MatrixXd h = eng.free_hessian(eng.theta);

        // Newton direction from -H; damp the diagonal until positive definite.
        Eigen::VectorXd dir;
        Eigen::LLT<Eigen::MatrixXd> llt(-h);
        if (llt.info() == Eigen::Success) {
            dir = llt.solve(g);
        } else {
            double lambda = 1e-3 * std::max(1.0, h.diagonal().cwiseAbs().maxCoeff());
            for (int tries = 0; tries < 60; ++tries) {
                Eigen::LLT<Eigen::MatrixXd> damped(
                    (-h + lambda * Eigen::MatrixXd::Identity(h.rows(), h.cols())).eval());
                if (damped.info() == Eigen::Success) {
                    dir = damped.solve(g);
                    break;
                }
                lambda *= 10.0;
            }
            if (dir.size() == 0) dir = g;  // last resort: steepest ascent
        }

        const double slope = g.dot(dir);
        double step = 1.0;
        bool accepted = false;
        for (int halving = 0; halving < 50; ++halving) {
            std::vector<double> cand = eng.theta;
            for (std::size_t k = 0; k < eng.free_idx.size(); ++k)
                cand[eng.free_idx[k]] += step * dir[static_cast<Eigen::Index>(k)];
            cand[nc] = std::clamp(cand[nc], detail::kLogSigmaMin, detail::kLogSigmaMax);
            const double cand_ll = eng.loglik(cand);
            if (cand_ll > ll + 1e-4 * step * slope) {
                eng.theta = std::move(cand);
                ll = cand_ll;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // No ascent along the damped Newton direction; re-check the
            // gradient and stop rather than loop on a stagnant point.
            converged = eng.free_gradient(eng.theta).lpNorm<Eigen::Infinity>() <=
                        10.0 * options.gradient_tol;
            break;
        }
    }

    FitResult res;
    for (std::size_t j = 0; j < nc; ++j) res.params.beta[data.clusters()[j]] = eng.theta[j];
    res.params.log_sigma = eng.theta[nc];
    res.loglik = ll;
    res.converged = converged;
    res.iterations = iterations;
    res.separation_flags = std::move(separated);

    // Observed-information Hessian over the full (beta..., log_sigma) order.
    std::vector<std::size_t> all_idx(nc + 1);
    for (std::size_t k = 0; k <= nc; ++k) all_idx[k] = k;
    detail::FitEngine full_eng{data, eng.rule, std::move(all_idx), {}, eng.threads};
    res.hessian = full_eng.free_hessian(eng.theta);
    return res;
}

/// Covariance of the free parameters of a converged fit: the negated inverse
/// of the observed-information Hessian restricted to non-separated clusters
/// plus log_sigma. Exposes the (beta_j, sigma^2) block the interval
/// construction needs, with the sigma^2 = exp(2 log_sigma) Jacobian applied.
class FitCovariance {
public:
    explicit FitCovariance(const FitResult& fit) {
        sigma2_ = fit.params.sigma2();
        std::size_t pos = 0;
        std::vector<std::size_t> keep;
        for (const auto& [id, b] : fit.params.beta) {
            if (!fit.is_separated(id)) {
                index_[id] = keep.size();
                keep.push_back(pos);
            }
            ++pos;
        }
        keep.push_back(fit.params.beta.size());  // log_sigma
        Eigen::MatrixXd a(keep.size(), keep.size());
        for (std::size_t r = 0; r < keep.size(); ++r)
            for (std::size_t c = 0; c < keep.size(); ++c)
                a(r, c) = -fit.hessian(keep[r], keep[c]);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
        if (ldlt.info() == Eigen::Success) {
            cov_ = ldlt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
            valid_ = cov_.allFinite();
        }
    }

    bool valid() const { return valid_; }
    bool has_cluster(Id cluster) const { return index_.count(cluster) > 0; }

    /// 2x2 covariance of (beta_j, sigma^2).
    Eigen::Matrix2d beta_sigma2_block(Id cluster) const {
        const auto it = index_.find(cluster);
        if (it == index_.end())
            throw std::invalid_argument("no covariance for cluster " + std::to_string(cluster));
        const Eigen::Index j = static_cast<Eigen::Index>(it->second);
        const Eigen::Index s = cov_.rows() - 1;
        const double jac = 2.0 * sigma2_;  // d sigma^2 / d log_sigma
        Eigen::Matrix2d out;
        out(0, 0) = cov_(j, j);
        out(0, 1) = out(1, 0) = cov_(j, s) * jac;
        out(1, 1) = cov_(s, s) * jac * jac;
        return out;
    }

private:
    std::map<Id, std::size_t> index_;
    Eigen::MatrixXd cov_;
    double sigma2_ = 0.0;
    bool valid_ = false;
};

}  // namespace clusterrank
