#pragma once

// Independent oracle implementations used only by tests: brute-force
// integration and grid search sharing no code with the library's quadrature
// or Newton paths.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "clusterrank/data.hpp"
#include "clusterrank/math.hpp"
#include "clusterrank/model.hpp"
#include "clusterrank/rng.hpp"

namespace oracles {

using clusterrank::Id;
using clusterrank::ModelParams;
using clusterrank::Rating;
using clusterrank::RatingsTable;

/// Log-likelihood by fine trapezoid integration of the marginal integrand
/// over b in [-span*sigma, span*sigma], in log space.
inline double trapezoid_loglik(const ModelParams& params, const RatingsTable& data,
                               int points = 4001, double span = 10.0) {
    const double sigma = params.sigma();
    const double lo = -span * sigma, hi = span * sigma;
    const double step = (hi - lo) / (points - 1);
    const double log_norm = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sigma);

    std::vector<double> beta(data.cluster_count());
    for (std::size_t j = 0; j < data.cluster_count(); ++j)
        beta[j] = params.beta.at(data.clusters()[j]);

    double total = 0.0;
    std::vector<double> logterm(points);
    for (std::size_t e = 0; e < data.expert_count(); ++e) {
        for (int i = 0; i < points; ++i) {
            const double b = lo + i * step;
            double g = log_norm - b * b / (2.0 * sigma * sigma);
            for (const auto& [j, y] : data.row(e)) g += clusterrank::log_bernoulli(y, beta[j] + b);
            // trapezoid end weights
            if (i == 0 || i == points - 1) g += std::log(0.5);
            logterm[i] = g;
        }
        const double li = clusterrank::log_sum_exp(logterm) + std::log(step);
        total += data.weight_at(e) * li;
    }
    return total;
}

/// Coordinate-wise grid-search maximizer over (beta..., log_sigma) driven
/// purely by the trapezoid likelihood. Brackets recenter on the incumbent,
/// expand when the optimum sits on an edge, and shrink otherwise.
struct GridSearchResult {
    std::vector<double> beta;  // in data.clusters() order
    double log_sigma = 0.0;
    double loglik = -std::numeric_limits<double>::infinity();
};

inline GridSearchResult grid_search_ml(const RatingsTable& data, double beta_lo = -8.0,
                                       double beta_hi = 8.0, double ls_lo = -5.0,
                                       double ls_hi = 2.5) {
    const std::size_t nc = data.cluster_count();
    std::vector<double> x(nc + 1, 0.0);
    std::vector<double> lo(nc + 1, beta_lo), hi(nc + 1, beta_hi);
    lo[nc] = ls_lo;
    hi[nc] = ls_hi;

    const auto eval = [&](const std::vector<double>& v) {
        ModelParams p;
        for (std::size_t j = 0; j < nc; ++j) p.beta[data.clusters()[j]] = v[j];
        p.log_sigma = v[nc];
        return trapezoid_loglik(p, data);
    };

    double best = eval(x);
    const int grid = 21;
    for (int cycle = 0; cycle < 120; ++cycle) {
        double widest = 0.0;
        for (std::size_t k = 0; k <= nc; ++k) {
            double w = hi[k] - lo[k];
            widest = std::max(widest, w);
            std::vector<double> cand = x;
            int best_i = -1;
            for (int i = 0; i < grid; ++i) {
                cand[k] = lo[k] + w * i / (grid - 1);
                const double v = eval(cand);
                if (v > best) {
                    best = v;
                    best_i = i;
                    x[k] = cand[k];
                }
            }
            if (best_i == 0 || best_i == grid - 1) {
                // optimum at the edge: recenter and widen
                lo[k] = x[k] - w;
                hi[k] = x[k] + w;
            } else {
                const double step = w / (grid - 1);
                lo[k] = x[k] - 2.0 * step;
                hi[k] = x[k] + 2.0 * step;
            }
            if (k == nc) {
                lo[k] = std::max(lo[k], -8.0);
                hi[k] = std::min(hi[k], 3.0);
            }
        }
        if (widest < 1e-7) break;
    }

    GridSearchResult res;
    res.beta.assign(x.begin(), x.begin() + nc);
    res.log_sigma = x[nc];
    res.loglik = best;
    return res;
}

/// Central finite differences of an arbitrary scalar function.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double orig = x[k];
        x[k] = orig + h;
        const double up = f(x);
        x[k] = orig - h;
        const double dn = f(x);
        x[k] = orig;
        g[k] = (up - dn) / (2.0 * h);
    }
    return g;
}

/// Newton polish of the grid-search result, driven entirely by finite
/// differences of a fine trapezoid likelihood (no shared code with the
/// production path). Returns the refined optimum and the FD Hessian there,
/// whose smallest curvature tells whether the instance is identified well
/// enough for parameter-level comparisons.
struct RefinedOracle {
    GridSearchResult fit;
    Eigen::MatrixXd neg_hessian;  // -H at the optimum
    double min_curvature = 0.0;
};

inline RefinedOracle refine_ml(const RatingsTable& data, const GridSearchResult& start) {
    const std::size_t n = data.cluster_count() + 1;
    const auto eval = [&](const std::vector<double>& v) {
        ModelParams p;
        for (std::size_t j = 0; j + 1 < n; ++j) p.beta[data.clusters()[j]] = v[j];
        p.log_sigma = v[n - 1];
        return trapezoid_loglik(p, data, 20001, 12.0);
    };

    std::vector<double> x(start.beta);
    x.push_back(start.log_sigma);
    double fx = eval(x);
    const double h = 1e-4;
    Eigen::MatrixXd hess(n, n);

    for (int iter = 0; iter < 60; ++iter) {
        const auto g = finite_difference_gradient(eval, x, h);
        double gmax = 0.0;
        for (const double v : g) gmax = std::max(gmax, std::abs(v));
        // second differences
        for (std::size_t k = 0; k < n; ++k) {
            auto xp = x;
            xp[k] += h;
            const double fp = eval(xp);
            xp[k] = x[k] - h;
            const double fm = eval(xp);
            hess(k, k) = (fp - 2.0 * fx + fm) / (h * h);
            for (std::size_t l = k + 1; l < n; ++l) {
                auto xx = x;
                xx[k] += h;
                xx[l] += h;
                const double fpp = eval(xx);
                xx[l] = x[l] - h;
                const double fpm = eval(xx);
                xx[k] = x[k] - h;
                const double fmm = eval(xx);
                xx[l] = x[l] + h;
                const double fmp = eval(xx);
                hess(k, l) = hess(l, k) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            }
        }
        if (gmax < 1e-7) break;

        Eigen::VectorXd gv(n);
        for (std::size_t k = 0; k < n; ++k) gv[k] = g[k];
        Eigen::MatrixXd a = -hess;
        double lambda = 0.0;
        Eigen::VectorXd dir;
        for (int tries = 0; tries < 40; ++tries) {
            Eigen::LLT<Eigen::MatrixXd> llt(
                (a + lambda * Eigen::MatrixXd::Identity(n, n)).eval());
            if (llt.info() == Eigen::Success) {
                dir = llt.solve(gv);
                break;
            }
            lambda = lambda == 0.0 ? 1e-6 : lambda * 10.0;
        }
        if (dir.size() == 0) break;
        double step = 1.0;
        bool moved = false;
        for (int halving = 0; halving < 40; ++halving) {
            auto cand = x;
            for (std::size_t k = 0; k < n; ++k) cand[k] += step * dir[k];
            const double fc = eval(cand);
            if (fc > fx) {
                x = std::move(cand);
                fx = fc;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) break;
    }

    RefinedOracle out;
    out.fit.beta.assign(x.begin(), x.end() - 1);
    out.fit.log_sigma = x.back();
    out.fit.loglik = fx;
    out.neg_hessian = -hess;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.neg_hessian);
    out.min_curvature = es.eigenvalues().minCoeff();
    return out;
}

struct Toy {
    RatingsTable table;
    ModelParams params;
};

/// Random small dataset with a parameter point; mirrors the scale of the
/// worked examples (few experts, few clusters).
inline Toy random_toy(clusterrank::RandomStream& rng, double sigma2, int max_clusters = 6,
                      int max_experts = 8) {
    const int nc = 2 + static_cast<int>(rng.uniform_below(max_clusters - 1));
    const int ne = 2 + static_cast<int>(rng.uniform_below(max_experts - 1));
    ModelParams params;
    std::vector<double> beta(nc);
    for (int j = 0; j < nc; ++j) {
        beta[j] = rng.normal(0.0, 1.8);
        params.beta[j] = beta[j];
    }
    params.log_sigma = 0.5 * std::log(sigma2);
    std::vector<Rating> entries;
    for (int e = 0; e < ne; ++e) {
        const int r = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(nc)));
        const auto picked =
            rng.sample_indices(static_cast<std::uint32_t>(nc), static_cast<std::uint32_t>(r));
        const double b = rng.normal(0.0, std::sqrt(sigma2));
        for (const std::uint32_t j : picked) {
            const double p = clusterrank::logistic(beta[j] + b);
            entries.push_back({e, static_cast<Id>(j),
                               static_cast<std::uint8_t>(rng.uniform() < p ? 1 : 0)});
        }
    }
    return {RatingsTable::from_entries(std::move(entries)), std::move(params)};
}

/// True when some cluster's ratings are unanimous (ML estimate unbounded).
inline bool has_separation(const RatingsTable& t) {
    const auto c = t.cluster_counts();
    for (std::size_t j = 0; j < t.cluster_count(); ++j)
        if (c.ones[j] == 0 || c.ones[j] == c.total[j]) return true;
    return false;
}

/// True when the grid-search optimum sits away from the upper search edges,
/// so the instance has a finite MLE both routes can agree on. (The sigma -> 0
/// boundary needs no exclusion: both routes then agree on the sigma^2 scale.)
inline bool interior(const GridSearchResult& r, double beta_limit = 6.0, double ls_limit = 2.0) {
    for (const double b : r.beta)
        if (std::abs(b) > beta_limit) return false;
    return r.log_sigma <= ls_limit;
}

}  // namespace oracles
