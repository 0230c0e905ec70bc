#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "clusterrank/data.hpp"
#include "clusterrank/model.hpp"
#include "clusterrank/parallel.hpp"
#include "clusterrank/probability.hpp"
#include "clusterrank/rng.hpp"
#include "clusterrank/splitproc.hpp"

namespace clusterrank {

/// Simulation design mirroring the reference evaluation: fixed cluster
/// effects drawn once, fresh experts (random effects and rating counts)
/// per replication, and both full ML and the splitting procedure fitted
/// to every generated data set.
struct SimConfig {
    int n_clusters = 50;
    int n_experts = 147;
    double beta_mean = -2.0;
    double beta_var = 2.0;       // variance of the cluster-effect draws
    double sigma2_true = 12.25;  // inter-expert variance
    double ratings_mean = 25.0;  // Poisson rate for ratings per expert
    int ratings_min = 8;
    int ratings_max = 50;
    int replications = 200;
    PartitionSpec split_spec{.subset_size = 5, .permutations = 20, .mc_draws = 10000};
    FitOptions fit_options{};
    std::uint64_t master_seed = 0;
};

namespace detail {

// Sub-stream tags under the master seed.
constexpr std::uint64_t kSimBetaStream = 0;
constexpr std::uint64_t kSimDataStream = 1;
constexpr std::uint64_t kSimMlProbStream = 2;
constexpr std::uint64_t kSimMlCiStream = 3;
constexpr std::uint64_t kSimSplitStream = 4;

inline void validate_sim_config(const SimConfig& c) {
    if (c.n_clusters < 2) throw std::invalid_argument("sim: need at least 2 clusters");
    if (c.n_experts < 1) throw std::invalid_argument("sim: need at least 1 expert");
    if (c.replications < 1) throw std::invalid_argument("sim: replications must be >= 1");
    if (!(c.beta_var >= 0.0) || !(c.sigma2_true >= 0.0))
        throw std::invalid_argument("sim: variances must be non-negative");
    if (!(c.ratings_mean > 0.0)) throw std::invalid_argument("sim: ratings_mean must be positive");
    if (c.ratings_min < 1 || c.ratings_min > c.ratings_max || c.ratings_max > c.n_clusters)
        throw std::invalid_argument("sim: need 1 <= ratings_min <= ratings_max <= n_clusters");
}

}  // namespace detail

/// One vector of true cluster effects, drawn once and held fixed across all
/// replications of a study.
inline std::vector<double> draw_true_betas(const SimConfig& config, RandomStream& rng) {
    detail::validate_sim_config(config);
    std::vector<double> betas(config.n_clusters);
    const double sd = std::sqrt(config.beta_var);
    for (double& b : betas) b = rng.normal(config.beta_mean, sd);
    return betas;
}

/// One replication's data set: every expert gets a rating count from the
/// truncated Poisson (resampled until within range), a fresh random effect,
/// and a uniform without-replacement sample of clusters to rate.
inline RatingsTable generate_dataset(const SimConfig& config, const std::vector<double>& true_betas,
                                     int replication_index) {
    detail::validate_sim_config(config);
    if (true_betas.size() != static_cast<std::size_t>(config.n_clusters))
        throw std::invalid_argument("generate_dataset: true_betas must cover n_clusters");
    RandomStream rng(derive_seed(config.master_seed, detail::kSimDataStream,
                                 static_cast<std::uint64_t>(replication_index)));
    const double sigma = std::sqrt(config.sigma2_true);
    std::vector<Rating> entries;
    entries.reserve(static_cast<std::size_t>(config.n_experts * config.ratings_mean));
    for (int e = 0; e < config.n_experts; ++e) {
        const int ni = rng.truncated_poisson(config.ratings_mean, config.ratings_min, config.ratings_max);
        const double b = sigma > 0.0 ? rng.normal(0.0, sigma) : 0.0;
        const auto picked = rng.sample_indices(static_cast<std::uint32_t>(config.n_clusters),
                                               static_cast<std::uint32_t>(ni));
        for (const std::uint32_t j : picked) {
            const double p = logistic(true_betas[j] + b);
            entries.push_back({static_cast<Id>(e), static_cast<Id>(j),
                               static_cast<std::uint8_t>(rng.uniform() < p ? 1 : 0)});
        }
    }
    return RatingsTable::from_entries(std::move(entries));
}

struct SimClusterRow {
    Id cluster_id = 0;
    double beta_true = 0.0;
    double prob_true = 0.0;
    double beta_ml_mean = 0.0;
    double beta_split_mean = 0.0;
    double prob_ml_mean = 0.0;
    double prob_split_mean = 0.0;
    double coverage_ml = 0.0;
    double coverage_split = 0.0;
    double noncov_above_ml = 0.0;  // truth below the interval
    double noncov_above_split = 0.0;
    double noncov_below_ml = 0.0;  // truth above the interval
    double noncov_below_split = 0.0;
    double reldiff_ml_mean = 0.0;  // mean (beta_hat - beta) / beta
    double reldiff_split_mean = 0.0;
};

struct SimReport {
    std::vector<SimClusterRow> rows;  // cluster id order
    double sigma2_true = 0.0;
    double sigma2_ml_mean = 0.0;
    double sigma2_split_mean = 0.0;
    int replications_run = 0;
    int ml_nonconverged = 0;  // excluded from the ML averages
    SimConfig config;
};

/// Runs the whole study: generate, fit both ways, estimate probabilities and
/// intervals, and aggregate bias, probability and coverage summaries.
/// Replications are independent parallel tasks with per-replication seeds.
inline SimReport run_study(const SimConfig& config) {
    detail::validate_sim_config(config);
    RandomStream beta_rng(derive_seed(config.master_seed, detail::kSimBetaStream));
    const std::vector<double> betas = draw_true_betas(config, beta_rng);

    const QuadratureRule truth_rule = gauss_hermite(50);
    const int nc = config.n_clusters;
    const int reps = config.replications;
    const double level = config.split_spec.ci_level;
    const long q = config.split_spec.mc_draws;

    struct RepOutcome {
        bool ml_converged = false;
        double sigma2_ml = 0.0;
        double sigma2_split = 0.0;
        std::vector<double> beta_ml, prob_ml, lo_ml, hi_ml;
        std::vector<double> beta_split, prob_split, lo_split, hi_split;
    };
    std::vector<RepOutcome> outcomes(reps);

    FitOptions inner = config.fit_options;
    inner.threads = 1;
    PartitionSpec split = config.split_spec;

    parallel_for(static_cast<std::size_t>(reps), config.fit_options.threads, [&](std::size_t r) {
        RepOutcome& out = outcomes[r];
        const RatingsTable data = generate_dataset(config, betas, static_cast<int>(r));

        const FitResult ml = fit_ml(data, inner);
        out.ml_converged = ml.converged;
        if (ml.converged) {
            out.sigma2_ml = ml.params.sigma2();
            const FitCovariance cov(ml);
            out.beta_ml.resize(nc);
            out.prob_ml.resize(nc);
            out.lo_ml.resize(nc);
            out.hi_ml.resize(nc);
            for (int j = 0; j < nc; ++j) {
                const Id id = static_cast<Id>(j);
                const double bj = ml.params.beta.at(id);
                out.beta_ml[j] = bj;
                RandomStream prob_rng(derive_seed(config.master_seed, detail::kSimMlProbStream, r, j));
                out.prob_ml[j] = success_probability(bj, out.sigma2_ml, q, prob_rng);
                if (!ml.is_separated(id) && cov.valid() && cov.has_cluster(id)) {
                    RandomStream ci_rng(derive_seed(config.master_seed, detail::kSimMlCiStream, r, j));
                    const DeltaCi ci = delta_method_ci(bj, out.sigma2_ml, cov.beta_sigma2_block(id),
                                                       q, level, ci_rng);
                    out.lo_ml[j] = ci.interval.lower;
                    out.hi_ml[j] = ci.interval.upper;
                } else {
                    out.lo_ml[j] = out.hi_ml[j] = bj > 0.0 ? 1.0 : 0.0;
                }
            }
        }

        PartitionSpec rep_spec = split;
        rep_spec.seed = derive_seed(config.master_seed, detail::kSimSplitStream, r);
        const ProcedureResult proc = run_procedure(data, rep_spec, inner);
        out.sigma2_split = proc.pooled.sigma2;
        out.beta_split.resize(nc);
        out.prob_split.resize(nc);
        out.lo_split.resize(nc);
        out.hi_split.resize(nc);
        for (const SuccessEstimate& est : proc.estimates) {
            const int j = static_cast<int>(est.cluster_id);
            out.beta_split[j] = est.beta_hat;
            out.prob_split[j] = est.prob_hat;
            out.lo_split[j] = est.ci_lower;
            out.hi_split[j] = est.ci_upper;
        }
    });

    SimReport report;
    report.config = config;
    report.sigma2_true = config.sigma2_true;
    report.replications_run = reps;
    report.rows.resize(nc);

    int ml_used = 0;
    double s2_ml = 0.0, s2_split = 0.0;
    for (const RepOutcome& out : outcomes) {
        if (out.ml_converged) {
            ++ml_used;
            s2_ml += out.sigma2_ml;
        }
        s2_split += out.sigma2_split;
    }
    report.ml_nonconverged = reps - ml_used;
    report.sigma2_ml_mean = ml_used > 0 ? s2_ml / ml_used : 0.0;
    report.sigma2_split_mean = s2_split / reps;

    for (int j = 0; j < nc; ++j) {
        SimClusterRow& row = report.rows[j];
        row.cluster_id = static_cast<Id>(j);
        row.beta_true = betas[j];
        row.prob_true = success_probability_quadrature(betas[j], config.sigma2_true, truth_rule);
        double nml = 0.0;
        for (const RepOutcome& out : outcomes) {
            if (out.ml_converged) {
                nml += 1.0;
                row.beta_ml_mean += out.beta_ml[j];
                row.prob_ml_mean += out.prob_ml[j];
                if (row.beta_true != 0.0)
                    row.reldiff_ml_mean += (out.beta_ml[j] - row.beta_true) / row.beta_true;
                if (row.prob_true < out.lo_ml[j])
                    row.noncov_above_ml += 1.0;
                else if (row.prob_true > out.hi_ml[j])
                    row.noncov_below_ml += 1.0;
                else
                    row.coverage_ml += 1.0;
            }
            row.beta_split_mean += out.beta_split[j];
            row.prob_split_mean += out.prob_split[j];
            if (row.beta_true != 0.0)
                row.reldiff_split_mean += (out.beta_split[j] - row.beta_true) / row.beta_true;
            if (row.prob_true < out.lo_split[j])
                row.noncov_above_split += 1.0;
            else if (row.prob_true > out.hi_split[j])
                row.noncov_below_split += 1.0;
            else
                row.coverage_split += 1.0;
        }
        if (nml > 0.0) {
            row.beta_ml_mean /= nml;
            row.prob_ml_mean /= nml;
            row.reldiff_ml_mean /= nml;
            row.coverage_ml /= nml;
            row.noncov_above_ml /= nml;
            row.noncov_below_ml /= nml;
        }
        row.beta_split_mean /= reps;
        row.prob_split_mean /= reps;
        row.reldiff_split_mean /= reps;
        row.coverage_split /= reps;
        row.noncov_above_split /= reps;
        row.noncov_below_split /= reps;
    }
    return report;
}

}  // namespace clusterrank
