#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "clusterrank/data.hpp"
#include "clusterrank/math.hpp"
#include "clusterrank/model.hpp"
#include "clusterrank/probability.hpp"
#include "clusterrank/quadrature.hpp"
#include "clusterrank/rng.hpp"
#include "clusterrank/splitproc.hpp"

namespace clusterrank {

struct CheckOutcome {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct SelfCheckOptions {
    std::uint64_t seed = 20240101;
    // Test hook: deliberately corrupts the analytic gradient inside the
    // gradient check so the check's power can be demonstrated.
    bool inject_gradient_bug = false;
};

namespace detail {

struct ToyData {
    RatingsTable table;
    ModelParams params;
};

// Small random dataset plus a parameter point to evaluate at.
inline ToyData random_toy(RandomStream& rng, double sigma2, int max_clusters = 6,
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
        const auto picked = rng.sample_indices(static_cast<std::uint32_t>(nc),
                                               static_cast<std::uint32_t>(r));
        const double b = rng.normal(0.0, 3.5);
        for (const std::uint32_t j : picked) {
            const double p = logistic(beta[j] + b);
            entries.push_back({e, static_cast<Id>(j),
                               static_cast<std::uint8_t>(rng.uniform() < p ? 1 : 0)});
        }
    }
    return {RatingsTable::from_entries(std::move(entries)), std::move(params)};
}

template <class Fn>
inline CheckOutcome run_check(const std::string& name, Fn&& fn) {
    CheckOutcome out;
    out.name = name;
    try {
        out.pass = fn(out.detail);
    } catch (const std::exception& e) {
        out.pass = false;
        out.detail = std::string("exception: ") + e.what();
    }
    return out;
}

}  // namespace detail

/// Fast oracle suite: every check recomputes its expectation from an
/// independent route (closed forms, finite differences, brute-force
/// enumeration) and compares against the production path.
inline std::vector<CheckOutcome> run_selfchecks(const SelfCheckOptions& options = {}) {
    std::vector<CheckOutcome> results;

    results.push_back(detail::run_check("gauss-hermite rule sanity", [&](std::string& detail) {
        const auto r1 = gauss_hermite(1);
        const auto r2 = gauss_hermite(2);
        const double sqrt_pi = std::sqrt(std::numbers::pi);
        bool ok = std::abs(r1.nodes[0]) < 1e-15 && std::abs(r1.weights[0] - sqrt_pi) < 1e-12;
        ok = ok && std::abs(r2.nodes[0] + 1.0 / std::numbers::sqrt2) < 1e-12 &&
             std::abs(r2.nodes[1] - 1.0 / std::numbers::sqrt2) < 1e-12;
        for (const int order : {5, 20, 30, 50}) {
            const auto rule = gauss_hermite(order);
            double wsum = 0.0, m4 = 0.0;
            for (int i = 0; i < order; ++i) {
                wsum += rule.weights[i];
                m4 += rule.weights[i] * std::pow(rule.nodes[i], 4);
            }
            ok = ok && std::abs(wsum - sqrt_pi) < 1e-12 * sqrt_pi;
            if (order >= 20) ok = ok && std::abs(m4 - 0.75 * sqrt_pi) < 1e-10;
        }
        detail = "orders 1,2 closed forms; weight sums; x^4 moment";
        return ok;
    }));

    results.push_back(detail::run_check("analytic gradient vs finite differences", [&](std::string& detail) {
        RandomStream rng(derive_seed(options.seed, std::uint64_t{1}));
        const QuadratureRule rule = gauss_hermite(30, true);
        double worst = 0.0;
        for (int trial = 0; trial < 20; ++trial) {
            const double sigma2 = 0.5 + rng.uniform() * 15.5;
            auto toy = detail::random_toy(rng, sigma2);
            auto grad = log_likelihood_gradient(toy.params, toy.table, rule);
            if (options.inject_gradient_bug) grad[0] += 1e-3;
            const double h = 1e-5;
            std::size_t k = 0;
            for (auto& [id, b] : toy.params.beta) {
                ModelParams up = toy.params, dn = toy.params;
                up.beta[id] = b + h;
                dn.beta[id] = b - h;
                const double fd =
                    (log_likelihood(up, toy.table, rule) - log_likelihood(dn, toy.table, rule)) /
                    (2.0 * h);
                worst = std::max(worst, std::abs(grad[k] - fd) / std::max(std::abs(fd), 1e-8));
                ++k;
            }
            ModelParams up = toy.params, dn = toy.params;
            up.log_sigma += h;
            dn.log_sigma -= h;
            const double fd =
                (log_likelihood(up, toy.table, rule) - log_likelihood(dn, toy.table, rule)) /
                (2.0 * h);
            worst = std::max(worst, std::abs(grad[k] - fd) / std::max(std::abs(fd), 1e-8));
        }
        std::ostringstream ss;
        ss << "worst relative mismatch " << worst;
        detail = ss.str();
        return worst <= 1e-4;
    }));

    results.push_back(detail::run_check("quadrature order convergence", [&](std::string& detail) {
        RandomStream rng(derive_seed(options.seed, std::uint64_t{2}));
        double worst = 0.0;
        for (int trial = 0; trial < 12; ++trial) {
            const double sigma2 = trial % 2 == 0 ? 16.0 : 4.0;
            const auto toy = detail::random_toy(rng, sigma2, 3, 4);
            const double ll50 = log_likelihood(toy.params, toy.table, gauss_hermite(50, true));
            const double ll30 = log_likelihood(toy.params, toy.table, gauss_hermite(30, true));
            worst = std::max(worst, std::abs(ll30 - ll50));
        }
        std::ostringstream ss;
        ss << "worst |ll(30) - ll(50)| = " << worst;
        detail = ss.str();
        return worst < 1e-6;
    }));

    results.push_back(detail::run_check("monte carlo matches quadrature", [&](std::string& detail) {
        RandomStream rng(derive_seed(options.seed, std::uint64_t{3}));
        const QuadratureRule rule = gauss_hermite(50);
        const long q = 20000;
        double worst_ratio = 0.0;
        for (int trial = 0; trial < 12; ++trial) {
            const double beta = rng.normal(0.0, 2.0);
            const double sigma2 = 0.5 + rng.uniform() * 15.5;
            RandomStream draw_rng(derive_seed(options.seed, std::uint64_t{3}, trial));
            const double mc = success_probability(beta, sigma2, q, draw_rng);
            const double gh = success_probability_quadrature(beta, sigma2, rule);
            const double se = std::sqrt(std::max(mc * (1.0 - mc), 1e-6) / q);
            worst_ratio = std::max(worst_ratio, std::abs(mc - gh) / (4.0 * se));
        }
        std::ostringstream ss;
        ss << "worst |MC - GH| / (4 SE) = " << worst_ratio;
        detail = ss.str();
        return worst_ratio <= 1.0;
    }));

    results.push_back(detail::run_check("single-subset procedure equals full ML", [&](std::string& detail) {
        RandomStream rng(derive_seed(options.seed, std::uint64_t{4}));
        auto toy = detail::random_toy(rng, 4.0);
        FitOptions fit_opts;
        fit_opts.threads = 1;
        const FitResult ml = fit_ml(toy.table, fit_opts);
        PartitionSpec spec;
        spec.subset_size = toy.table.cluster_count();  // degenerate S = 1
        spec.permutations = 1;
        spec.mc_draws = 200;
        spec.seed = options.seed;
        const ProcedureResult proc = run_procedure(toy.table, spec, fit_opts);
        bool ok = proc.pooled.sigma2 == ml.params.sigma2();
        for (const auto& [id, b] : ml.params.beta) ok = ok && proc.pooled.beta.at(id) == b;
        ok = ok && proc.permutations[0].subset_fits[0].fit.loglik == ml.loglik;
        detail = "pooled estimates bit-identical to fit_ml";
        return ok;
    }));

    results.push_back(detail::run_check("partitions are disjoint and exhaustive", [&](std::string& detail) {
        RandomStream rng(derive_seed(options.seed, std::uint64_t{5}));
        for (int trial = 0; trial < 50; ++trial) {
            const std::size_t n = 5 + rng.uniform_below(200);
            const std::size_t nk = 2 + rng.uniform_below(std::min<std::uint64_t>(n - 1, 40) - 1);
            std::vector<Id> ids(n);
            for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<Id>(1000 + 7 * i);
            const Partition p = make_partition(ids, nk, rng);
            std::vector<Id> flat;
            for (const auto& s : p.subsets) flat.insert(flat.end(), s.begin(), s.end());
            std::sort(flat.begin(), flat.end());
            if (flat != ids) return false;
            if (p.subsets.size() != (n + nk - 1) / nk) return false;
        }
        detail = "50 random partitions, multiset equality";
        return true;
    }));

    results.push_back(detail::run_check("integer weights replicate experts", [&](std::string& detail) {
        std::vector<Rating> base{{100, 0, 1}, {100, 1, 0}, {200, 0, 0}, {200, 1, 1}, {300, 0, 1}};
        std::map<Id, double> w{{100, 1.0}, {200, 3.0}, {300, 1.0}};
        const auto weighted = RatingsTable::from_entries(base, w);
        std::vector<Rating> rep = base;
        for (Id clone : {201, 202}) {
            rep.push_back({clone, 0, 0});
            rep.push_back({clone, 1, 1});
        }
        const auto replicated = RatingsTable::from_entries(rep);
        ModelParams params;
        params.beta[0] = 0.4;
        params.beta[1] = -0.9;
        params.log_sigma = 0.3;
        const QuadratureRule rule = gauss_hermite(30, true);
        const bool ok = log_likelihood(params, weighted, rule) ==
                        log_likelihood(params, replicated, rule);
        detail = "weight 3 == three physical copies, bit-exact";
        return ok;
    }));

    results.push_back(detail::run_check("interval combination is nested", [&](std::string& detail) {
        RandomStream rng(derive_seed(options.seed, std::uint64_t{6}));
        for (int trial = 0; trial < 200; ++trial) {
            // Families sharing a common point, like interval estimates of one
            // quantity; the intersection is then nonempty and never clipped.
            const double t = rng.uniform();
            std::vector<ConfidenceInterval> cis(2 + rng.uniform_below(10));
            for (auto& ci : cis)
                ci = {t * (1.0 - rng.uniform()), t + (1.0 - t) * rng.uniform(), false};
            const auto avg = combine_cis(cis, CiMode::average);
            const auto uni = combine_cis(cis, CiMode::union_);
            const auto inter = combine_cis(cis, CiMode::intersection);
            if (inter.degenerate) return false;
            const double eps = 1e-12;
            if (!(uni.lower <= avg.lower + eps && avg.lower <= inter.lower + eps)) return false;
            if (!(inter.upper <= avg.upper + eps && avg.upper <= uni.upper + eps)) return false;
        }
        detail = "200 random overlapping interval families";
        return true;
    }));

    return results;
}

}  // namespace clusterrank
