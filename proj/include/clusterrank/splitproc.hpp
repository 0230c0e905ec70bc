#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "clusterrank/data.hpp"
#include "clusterrank/errors.hpp"
#include "clusterrank/model.hpp"
#include "clusterrank/parallel.hpp"
#include "clusterrank/probability.hpp"
#include "clusterrank/rng.hpp"

namespace clusterrank {

/// Settings of the permutational-splitting procedure.
struct PartitionSpec {
    std::size_t subset_size = 30;  // N_k
    int permutations = 20;         // W
    long mc_draws = 10000;         // Q
    std::uint64_t seed = 0;
    double ci_level = 0.95;
    CiMode ci_mode = CiMode::average;
    bool bonferroni = false;  // per-permutation level 1 - (1-ci_level)/W
};

struct Partition {
    std::vector<std::vector<Id>> subsets;  // disjoint, exhaustive; each sorted
};

struct SubsetFit {
    std::size_t subset_index = 0;
    FitResult fit;
    std::size_t expert_count = 0;
};

struct PermutationResult {
    Partition partition;
    std::vector<SubsetFit> subset_fits;
    double sigma2_w = 0.0;             // mean of converged subset sigma2 estimates
    std::map<Id, double> beta_w;
    int nonconverged_subsets = 0;
};

struct PooledEstimates {
    std::map<Id, double> beta;
    double sigma2 = 0.0;
};

struct SuccessEstimate {
    Id cluster_id = 0;
    double beta_hat = 0.0;
    double prob_hat = 0.0;
    double ci_lower = 0.0;
    double ci_upper = 0.0;
    int rank = 0;
    bool flagged_separation = false;
    bool ci_degenerate = false;
};

/// Uniformly random partition: Fisher-Yates permutation of the cluster ids
/// chopped into consecutive blocks of subset_size, the last block taking the
/// remainder.
inline Partition make_partition(std::span<const Id> cluster_ids, std::size_t subset_size,
                                RandomStream& rng) {
    if (subset_size < 2) throw std::invalid_argument("make_partition: subset size must be >= 2");
    if (cluster_ids.size() <= subset_size)
        throw std::invalid_argument("make_partition: subset size must be smaller than the cluster set");
    std::vector<Id> ids(cluster_ids.begin(), cluster_ids.end());
    rng.shuffle(ids);
    Partition p;
    for (std::size_t start = 0; start < ids.size(); start += subset_size) {
        const std::size_t stop = std::min(start + subset_size, ids.size());
        std::vector<Id> block(ids.begin() + start, ids.begin() + stop);
        std::sort(block.begin(), block.end());
        p.subsets.push_back(std::move(block));
    }
    return p;
}

namespace detail {

inline void check_partition_covers(const Partition& partition, const RatingsTable& data) {
    std::vector<Id> all;
    for (const auto& s : partition.subsets) all.insert(all.end(), s.begin(), s.end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end())
        throw invalid_partition_error("partition subsets overlap");
    if (all != data.clusters())
        throw invalid_partition_error("partition does not cover exactly the clusters in the data");
}

inline SubsetFit fit_one_subset(const RatingsTable& data, const Partition& partition,
                                std::size_t k, const FitOptions& options) {
    const RatingsTable sub = data.restricted_to(partition.subsets[k]);
    if (sub.empty()) throw invalid_partition_error("subset " + std::to_string(k) + " has no ratings");
    SubsetFit sf;
    sf.subset_index = k;
    sf.expert_count = sub.expert_count();
    sf.fit = fit_ml(sub, options);
    return sf;
}

inline PermutationResult assemble_permutation(Partition partition, std::vector<SubsetFit> fits) {
    PermutationResult res;
    res.partition = std::move(partition);
    res.subset_fits = std::move(fits);
    double sum = 0.0;
    int used = 0;
    double sum_all = 0.0;
    for (const auto& sf : res.subset_fits) {
        const double s2 = sf.fit.params.sigma2();
        sum_all += s2;
        if (sf.fit.converged) {
            sum += s2;
            ++used;
        } else {
            ++res.nonconverged_subsets;
        }
        for (const auto& [id, b] : sf.fit.params.beta) res.beta_w[id] = b;
    }
    // Mean over converged subsets; falls back to all subsets when none
    // converged so downstream stays finite (the count is reported).
    res.sigma2_w = used > 0 ? sum / used : sum_all / static_cast<double>(res.subset_fits.size());
    return res;
}

}  // namespace detail

/// Step 2 for one partition: fit every subset by ML on the data restricted to
/// its clusters (experts with no rating there are dropped), then pool the
/// per-subset variance estimates.
inline PermutationResult fit_permutation(const RatingsTable& data, const Partition& partition,
                                         const FitOptions& options = {}) {
    detail::check_partition_covers(partition, data);
    FitOptions inner = options;
    inner.threads = 1;
    std::vector<SubsetFit> fits(partition.subsets.size());
    parallel_for(partition.subsets.size(), options.threads,
                 [&](std::size_t k) { fits[k] = detail::fit_one_subset(data, partition, k, inner); });
    return detail::assemble_permutation(partition, std::move(fits));
}

struct ProcedureResult {
    PooledEstimates pooled;
    std::vector<PermutationResult> permutations;
    std::vector<SuccessEstimate> estimates;  // ranked by prob_hat, descending
    int nonconverged_subset_fits = 0;
    int total_subset_fits = 0;
    int invalid_covariance_fits = 0;
};

enum class RankKey { prob_hat, ci_lower };

/// Deterministic ranking: descending by key, ties by ascending cluster id.
/// Returns a re-ranked copy.
inline std::vector<SuccessEstimate> rank_clusters(std::vector<SuccessEstimate> estimates,
                                                  RankKey key = RankKey::prob_hat) {
    if (estimates.empty()) throw std::invalid_argument("rank_clusters: no estimates");
    std::sort(estimates.begin(), estimates.end(),
              [key](const SuccessEstimate& a, const SuccessEstimate& b) {
                  const double ka = key == RankKey::prob_hat ? a.prob_hat : a.ci_lower;
                  const double kb = key == RankKey::prob_hat ? b.prob_hat : b.ci_lower;
                  if (ka != kb) return ka > kb;
                  return a.cluster_id < b.cluster_id;
              });
    for (std::size_t i = 0; i < estimates.size(); ++i) estimates[i].rank = static_cast<int>(i + 1);
    return estimates;
}

/// The full procedure: W permutations of the cluster set, each partitioned
/// and fitted subset by subset, estimates pooled across permutations, success
/// probabilities by stochastic integration, and per-cluster intervals
/// combined across permutations. Deterministic for a fixed seed regardless
/// of thread count: permutation w draws from hash(seed, w), the Monte Carlo
/// stream of cluster j in permutation w from hash(seed, w, j).
inline ProcedureResult run_procedure(const RatingsTable& data, const PartitionSpec& spec,
                                     const FitOptions& options = {}) {
    if (spec.permutations < 1) throw std::invalid_argument("run_procedure: W must be >= 1");
    if (spec.mc_draws < 1) throw std::invalid_argument("run_procedure: Q must be >= 1");
    if (spec.subset_size < 2) throw std::invalid_argument("run_procedure: N_k must be >= 2");
    if (!(spec.ci_level > 0.0 && spec.ci_level < 1.0))
        throw std::invalid_argument("run_procedure: ci_level must be in (0,1)");

    const std::size_t n_clusters = data.cluster_count();
    const std::size_t w_count = static_cast<std::size_t>(spec.permutations);
    const bool single_subset = spec.subset_size >= n_clusters;  // degenerate S=1: plain ML

    std::vector<Partition> partitions(w_count);
    for (std::size_t w = 0; w < w_count; ++w) {
        RandomStream rng(derive_seed(spec.seed, w));
        if (single_subset) {
            partitions[w].subsets = {data.clusters()};
        } else {
            partitions[w] = make_partition(data.clusters(), spec.subset_size, rng);
        }
    }

    // All (permutation, subset) fits as one flat task list.
    FitOptions inner = options;
    inner.threads = 1;
    std::vector<std::pair<std::size_t, std::size_t>> tasks;
    std::vector<std::size_t> offsets(w_count);
    for (std::size_t w = 0; w < w_count; ++w) {
        offsets[w] = tasks.size();
        for (std::size_t k = 0; k < partitions[w].subsets.size(); ++k) tasks.emplace_back(w, k);
    }
    std::vector<SubsetFit> fits(tasks.size());
    parallel_for(tasks.size(), options.threads, [&](std::size_t t) {
        const auto [w, k] = tasks[t];
        fits[t] = detail::fit_one_subset(data, partitions[w], k, inner);
    });

    ProcedureResult res;
    res.total_subset_fits = static_cast<int>(tasks.size());
    res.permutations.reserve(w_count);
    for (std::size_t w = 0; w < w_count; ++w) {
        const std::size_t count = partitions[w].subsets.size();
        std::vector<SubsetFit> own(fits.begin() + offsets[w], fits.begin() + offsets[w] + count);
        res.permutations.push_back(detail::assemble_permutation(std::move(partitions[w]), std::move(own)));
        res.nonconverged_subset_fits += res.permutations.back().nonconverged_subsets;
    }

    // Step 4 pooling.
    for (const Id id : data.clusters()) {
        double sum = 0.0;
        for (const auto& perm : res.permutations) sum += perm.beta_w.at(id);
        res.pooled.beta[id] = sum / static_cast<double>(w_count);
    }
    {
        double sum = 0.0;
        for (const auto& perm : res.permutations) sum += perm.sigma2_w;
        res.pooled.sigma2 = sum / static_cast<double>(w_count);
    }

    // Covariances, one per subset fit.
    std::vector<std::optional<FitCovariance>> covs(fits.size());
    parallel_for(fits.size(), options.threads,
                 [&](std::size_t t) { covs[t].emplace(fits[t].fit); });
    std::vector<int> cov_invalid(fits.size(), 0);
    for (std::size_t t = 0; t < fits.size(); ++t)
        if (!covs[t]->valid()) cov_invalid[t] = 1;
    for (const int v : cov_invalid) res.invalid_covariance_fits += v;

    // Cluster -> flat fit index, per permutation.
    std::vector<std::map<Id, std::size_t>> fit_of_cluster(w_count);
    for (std::size_t t = 0; t < fits.size(); ++t) {
        const auto [w, k] = tasks[t];
        for (const auto& [id, b] : fits[t].fit.params.beta) fit_of_cluster[w][id] = t;
    }

    const double level = spec.bonferroni
                             ? 1.0 - (1.0 - spec.ci_level) / static_cast<double>(w_count)
                             : spec.ci_level;

    // Steps 4-5 per cluster: point estimates from (beta_wj, sigma2_w), the
    // interval of permutation w from the subset fit containing the cluster.
    std::vector<SuccessEstimate> estimates(n_clusters);
    parallel_for(n_clusters, options.threads, [&](std::size_t jpos) {
        const Id j = data.clusters()[jpos];
        SuccessEstimate est;
        est.cluster_id = j;
        est.beta_hat = res.pooled.beta.at(j);

        double prob_sum = 0.0;
        bool flagged = false;
        std::vector<ConfidenceInterval> cis;
        cis.reserve(w_count);
        for (std::size_t w = 0; w < w_count; ++w) {
            const std::size_t t = fit_of_cluster[w].at(j);
            const double beta_wj = res.permutations[w].beta_w.at(j);
            RandomStream point_rng(derive_seed(spec.seed, w, jpos));
            prob_sum += success_probability(beta_wj, res.permutations[w].sigma2_w,
                                            spec.mc_draws, point_rng);
            if (fits[t].fit.is_separated(j)) {
                flagged = true;
                continue;
            }
            if (!covs[t]->valid() || !covs[t]->has_cluster(j)) continue;
            const Eigen::Matrix2d cov = covs[t]->beta_sigma2_block(j);
            RandomStream ci_rng(derive_seed(spec.seed, w, jpos, std::size_t{1}));
            cis.push_back(delta_method_ci(beta_wj, fits[t].fit.params.sigma2(), cov,
                                          spec.mc_draws, level, ci_rng)
                              .interval);
        }
        est.prob_hat = prob_sum / static_cast<double>(w_count);
        est.flagged_separation = flagged;
        if (flagged) {
            const bool high = est.beta_hat > 0.0;
            est.ci_lower = est.ci_upper = high ? 1.0 : 0.0;
            est.ci_degenerate = true;
        } else if (cis.empty()) {
            est.ci_lower = est.ci_upper = est.prob_hat;
            est.ci_degenerate = true;
        } else {
            const ConfidenceInterval ci = combine_cis(cis, spec.ci_mode);
            est.ci_lower = ci.lower;
            est.ci_upper = ci.upper;
            est.ci_degenerate = ci.degenerate;
        }
        estimates[jpos] = est;
    });

    res.estimates = rank_clusters(std::move(estimates), RankKey::prob_hat);
    return res;
}

}  // namespace clusterrank
