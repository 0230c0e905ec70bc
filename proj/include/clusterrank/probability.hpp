#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "clusterrank/math.hpp"
#include "clusterrank/quadrature.hpp"
#include "clusterrank/rng.hpp"

namespace clusterrank {

/// Marginal success probability: Monte Carlo average of logistic(beta + b)
/// over Q draws b ~ N(0, sigma2). Exact logistic(beta) when sigma2 is 0.
inline double success_probability(double beta, double sigma2, long q, RandomStream& rng) {
    if (sigma2 < 0.0) throw std::invalid_argument("success_probability: sigma2 must be >= 0");
    if (q < 1) throw std::invalid_argument("success_probability: Q must be >= 1");
    if (sigma2 == 0.0) return logistic(beta);
    const double sigma = std::sqrt(sigma2);
    double sum = 0.0;
    for (long i = 0; i < q; ++i) sum += logistic(beta + sigma * rng.normal());
    return sum / static_cast<double>(q);
}

/// Deterministic evaluation of the same integral by Gauss-Hermite quadrature;
/// the independent cross-check route for the Monte Carlo estimator.
inline double success_probability_quadrature(double beta, double sigma2,
                                             const QuadratureRule& rule) {
    if (sigma2 < 0.0) throw std::invalid_argument("success_probability_quadrature: sigma2 must be >= 0");
    if (sigma2 == 0.0) return logistic(beta);
    const double scale = std::sqrt(2.0 * sigma2);
    double sum = 0.0;
    for (int i = 0; i < rule.order; ++i)
        sum += rule.weights[i] * logistic(beta + scale * rule.nodes[i]);
    return sum / std::sqrt(std::numbers::pi);
}

/// P and its derivatives in (beta, sigma2), all three integrals estimated in
/// one pass over the same Q normal draws.
struct SuccessStats {
    double prob = 0.0;
    double d_beta = 0.0;
    double d_sigma2 = 0.0;
};

inline SuccessStats success_stats(double beta, double sigma2, long q, RandomStream& rng) {
    if (!(sigma2 > 0.0)) throw std::invalid_argument("success_stats: sigma2 must be > 0");
    if (q < 1) throw std::invalid_argument("success_stats: Q must be >= 1");
    const double sigma = std::sqrt(sigma2);
    SuccessStats s;
    for (long i = 0; i < q; ++i) {
        const double b = sigma * rng.normal();
        const double p = logistic(beta + b);
        s.prob += p;
        s.d_beta += p * (1.0 - p);
        s.d_sigma2 += p * (b * b - sigma2) / (2.0 * sigma2 * sigma2);
    }
    const double inv_q = 1.0 / static_cast<double>(q);
    s.prob *= inv_q;
    s.d_beta *= inv_q;
    s.d_sigma2 *= inv_q;
    return s;
}

struct ConfidenceInterval {
    double lower = 0.0;
    double upper = 0.0;
    bool degenerate = false;
};

/// Delta-method confidence interval for the success probability on the logit
/// scale. `cov` is the covariance of (beta_hat, sigma2_hat) from the subset
/// fit; a probability that is numerically 0 or 1 (separation-clamped effect)
/// yields the degenerate interval [0,0] or [1,1] instead of NaN bounds.
struct DeltaCi {
    ConfidenceInterval interval;
    double prob = 0.0;  // the point estimate the interval is centered on
};

inline DeltaCi delta_method_ci(double beta_hat, double sigma2_hat, const Eigen::Matrix2d& cov,
                               long q, double level, RandomStream& rng) {
    if (!(level > 0.0 && level < 1.0))
        throw std::invalid_argument("delta_method_ci: level must be in (0,1)");
    if (!(sigma2_hat >= 0.0)) throw std::invalid_argument("delta_method_ci: sigma2 must be >= 0");
    const double tol = 1e-9 * std::max(1.0, std::max(std::abs(cov(0, 0)), std::abs(cov(1, 1))));
    if (cov(0, 0) < -tol || cov(1, 1) < -tol || std::abs(cov(0, 1) - cov(1, 0)) > tol)
        throw std::invalid_argument("delta_method_ci: covariance must be symmetric PSD");

    SuccessStats s;
    if (sigma2_hat > 0.0) {
        s = success_stats(beta_hat, sigma2_hat, q, rng);
    } else {
        s.prob = logistic(beta_hat);
        s.d_beta = s.prob * (1.0 - s.prob);
        s.d_sigma2 = 0.0;
    }

    DeltaCi out;
    out.prob = s.prob;
    constexpr double eps = 1e-12;
    if (s.prob <= eps || s.prob >= 1.0 - eps) {
        const bool high = s.prob >= 0.5;
        out.prob = high ? 1.0 : 0.0;
        out.interval = {out.prob, out.prob, true};
        return out;
    }
    const double scale = 1.0 / (s.prob * (1.0 - s.prob));
    const Eigen::Vector2d grad(scale * s.d_beta, scale * s.d_sigma2);
    const double var_gamma = std::max(0.0, grad.dot(cov * grad));
    const double gamma = logit(s.prob);
    const double half = normal_quantile(0.5 * (1.0 + level)) * std::sqrt(var_gamma);
    out.interval = {logistic(gamma - half), logistic(gamma + half), false};
    return out;
}

enum class CiMode { average, union_, intersection };

/// Combines the W per-permutation intervals: bound-wise mean, the enclosing
/// union, or the intersection (clipped and flagged when empty).
inline ConfidenceInterval combine_cis(std::span<const ConfidenceInterval> intervals, CiMode mode) {
    if (intervals.empty()) throw std::invalid_argument("combine_cis: no intervals");
    ConfidenceInterval out;
    switch (mode) {
        case CiMode::average: {
            double lo = 0.0, hi = 0.0;
            for (const auto& ci : intervals) {
                lo += ci.lower;
                hi += ci.upper;
            }
            out.lower = lo / static_cast<double>(intervals.size());
            out.upper = hi / static_cast<double>(intervals.size());
            break;
        }
        case CiMode::union_: {
            out.lower = intervals[0].lower;
            out.upper = intervals[0].upper;
            for (const auto& ci : intervals) {
                out.lower = std::min(out.lower, ci.lower);
                out.upper = std::max(out.upper, ci.upper);
            }
            break;
        }
        case CiMode::intersection: {
            out.lower = intervals[0].lower;
            out.upper = intervals[0].upper;
            for (const auto& ci : intervals) {
                out.lower = std::max(out.lower, ci.lower);
                out.upper = std::min(out.upper, ci.upper);
            }
            if (out.lower > out.upper) {
                const double mid = 0.5 * (out.lower + out.upper);
                out.lower = out.upper = mid;
                out.degenerate = true;
            }
            break;
        }
    }
    return out;
}

}  // namespace clusterrank
