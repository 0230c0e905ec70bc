#pragma once

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "clusterrank/format.hpp"
#include "clusterrank/simstudy.hpp"

namespace clusterrank {

inline nlohmann::json sim_config_json(const SimConfig& c) {
    return {
        {"n_clusters", c.n_clusters},
        {"n_experts", c.n_experts},
        {"beta_mean", c.beta_mean},
        {"beta_var", c.beta_var},
        {"sigma2_true", c.sigma2_true},
        {"ratings_mean", c.ratings_mean},
        {"ratings_min", c.ratings_min},
        {"ratings_max", c.ratings_max},
        {"replications", c.replications},
        {"master_seed", c.master_seed},
        {"split",
         {{"nk", c.split_spec.subset_size},
          {"permutations", c.split_spec.permutations},
          {"mc_draws", c.split_spec.mc_draws},
          {"ci_level", c.split_spec.ci_level},
          {"bonferroni", c.split_spec.bonferroni}}},
        {"fit",
         {{"quadrature_order", c.fit_options.quadrature_order},
          {"adaptive", c.fit_options.adaptive},
          {"max_iterations", c.fit_options.max_iterations},
          {"gradient_tol", c.fit_options.gradient_tol},
          {"beta_cap", c.fit_options.beta_cap}}},
    };
}

namespace detail {

inline std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::invalid_argument("cannot write file: " + path);
    return f;
}

inline void write_meta(std::ofstream& f, const SimReport& report) {
    f << "# clusterrank simulation report\n";
    f << "# config: " << sim_config_json(report.config).dump() << "\n";
}

}  // namespace detail

/// Cluster-effect estimates, sorted by true success probability (descending).
inline void write_sim_estimates_csv(const SimReport& report, const std::string& path) {
    auto rows = report.rows;
    std::sort(rows.begin(), rows.end(), [](const SimClusterRow& a, const SimClusterRow& b) {
        if (a.prob_true != b.prob_true) return a.prob_true > b.prob_true;
        return a.cluster_id < b.cluster_id;
    });
    auto f = detail::open_out(path);
    detail::write_meta(f, report);
    f << "cluster_id,beta_true,beta_ml_mean,beta_split_mean\n";
    for (const auto& r : rows)
        f << r.cluster_id << ',' << fmt_double(r.beta_true) << ',' << fmt_double(r.beta_ml_mean)
          << ',' << fmt_double(r.beta_split_mean) << "\n";
}

/// Success probabilities and interval coverage, sorted by true probability.
inline void write_sim_probabilities_csv(const SimReport& report, const std::string& path) {
    auto rows = report.rows;
    std::sort(rows.begin(), rows.end(), [](const SimClusterRow& a, const SimClusterRow& b) {
        if (a.prob_true != b.prob_true) return a.prob_true > b.prob_true;
        return a.cluster_id < b.cluster_id;
    });
    auto f = detail::open_out(path);
    detail::write_meta(f, report);
    f << "rank,cluster_id,prob_true,prob_ml_mean,prob_split_mean,"
         "coverage_ml,coverage_split,noncov_above_ml,noncov_above_split,"
         "noncov_below_ml,noncov_below_split\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        f << (i + 1) << ',' << r.cluster_id << ',' << fmt_double(r.prob_true) << ','
          << fmt_double(r.prob_ml_mean) << ',' << fmt_double(r.prob_split_mean) << ','
          << fmt_double(r.coverage_ml) << ',' << fmt_double(r.coverage_split) << ','
          << fmt_double(r.noncov_above_ml) << ',' << fmt_double(r.noncov_above_split) << ','
          << fmt_double(r.noncov_below_ml) << ',' << fmt_double(r.noncov_below_split) << "\n";
    }
}

/// Mean relative differences (beta_hat - beta) / beta per cluster for both
/// methods, in cluster order; input for external plotting.
inline void write_sim_relative_differences_csv(const SimReport& report, const std::string& path) {
    auto f = detail::open_out(path);
    detail::write_meta(f, report);
    f << "cluster_id,reldiff_ml_mean,reldiff_split_mean\n";
    for (const auto& r : report.rows)
        f << r.cluster_id << ',' << fmt_double(r.reldiff_ml_mean) << ','
          << fmt_double(r.reldiff_split_mean) << "\n";
}

inline void write_sim_summary_json(const SimReport& report, const std::string& path) {
    nlohmann::json j{
        {"config", sim_config_json(report.config)},
        {"sigma2_true", report.sigma2_true},
        {"sigma2_ml_mean", report.sigma2_ml_mean},
        {"sigma2_split_mean", report.sigma2_split_mean},
        {"replications_run", report.replications_run},
        {"ml_nonconverged", report.ml_nonconverged},
    };
    auto f = detail::open_out(path);
    f << j.dump(2) << "\n";
}

}  // namespace clusterrank
