#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "clusterrank/errors.hpp"

namespace clusterrank {

using Id = std::int64_t;

struct Rating {
    Id expert = 0;
    Id cluster = 0;
    std::uint8_t value = 0;  // 0 or 1
};

/// Sparse binary ratings indexed by (expert, cluster), with optional
/// per-expert frequency weights. Expert and cluster indexes are kept in
/// ascending id order, so every derived quantity is independent of the
/// order entries arrived in.
class RatingsTable {
public:
    RatingsTable() = default;

    static RatingsTable from_entries(std::vector<Rating> entries,
                                     std::optional<std::map<Id, double>> weights = std::nullopt) {
        RatingsTable t;
        t.build(std::move(entries), std::move(weights));
        return t;
    }

    const std::vector<Rating>& entries() const { return entries_; }
    const std::vector<Id>& experts() const { return experts_; }
    const std::vector<Id>& clusters() const { return clusters_; }

    std::size_t expert_count() const { return experts_.size(); }
    std::size_t cluster_count() const { return clusters_.size(); }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    bool has_weights() const { return !weights_.empty(); }

    /// Weight of the expert at position `pos` in experts(); 1 when unweighted.
    double weight_at(std::size_t pos) const { return weights_.empty() ? 1.0 : weights_[pos]; }

    std::map<Id, double> weights_map() const {
        std::map<Id, double> m;
        for (std::size_t i = 0; i < experts_.size(); ++i) m[experts_[i]] = weight_at(i);
        return m;
    }

    /// Ratings of one expert as (cluster position, value) pairs, cluster
    /// positions referring to clusters() order.
    std::span<const std::pair<std::uint32_t, std::uint8_t>> row(std::size_t expert_pos) const {
        return {rows_[expert_pos].data(), rows_[expert_pos].size()};
    }

    std::size_t expert_position(Id expert) const {
        const auto it = std::lower_bound(experts_.begin(), experts_.end(), expert);
        if (it == experts_.end() || *it != expert)
            throw std::invalid_argument("unknown expert id " + std::to_string(expert));
        return static_cast<std::size_t>(it - experts_.begin());
    }

    std::size_t cluster_position(Id cluster) const {
        const auto it = std::lower_bound(clusters_.begin(), clusters_.end(), cluster);
        if (it == clusters_.end() || *it != cluster)
            throw std::invalid_argument("unknown cluster id " + std::to_string(cluster));
        return static_cast<std::size_t>(it - clusters_.begin());
    }

    /// Raw per-cluster totals: ratings received and 1-ratings received.
    struct ClusterCounts {
        std::vector<std::uint32_t> total;
        std::vector<std::uint32_t> ones;
    };
    ClusterCounts cluster_counts() const {
        ClusterCounts c;
        c.total.assign(clusters_.size(), 0);
        c.ones.assign(clusters_.size(), 0);
        for (std::size_t e = 0; e < rows_.size(); ++e)
            for (const auto& [j, y] : rows_[e]) {
                ++c.total[j];
                c.ones[j] += y;
            }
        return c;
    }

    /// Weighted per-cluster totals (frequency weights; all 1 when unweighted).
    struct WeightedCounts {
        std::vector<double> total;
        std::vector<double> ones;
    };
    WeightedCounts weighted_cluster_counts() const {
        WeightedCounts c;
        c.total.assign(clusters_.size(), 0.0);
        c.ones.assign(clusters_.size(), 0.0);
        for (std::size_t e = 0; e < rows_.size(); ++e) {
            const double w = weight_at(e);
            for (const auto& [j, y] : rows_[e]) {
                c.total[j] += w;
                if (y) c.ones[j] += w;
            }
        }
        return c;
    }

    /// Proportion of 1-ratings per cluster, in clusters() order (unweighted).
    std::vector<double> observed_probabilities() const {
        const auto c = cluster_counts();
        std::vector<double> p(clusters_.size());
        for (std::size_t j = 0; j < p.size(); ++j)
            p[j] = static_cast<double>(c.ones[j]) / static_cast<double>(c.total[j]);
        return p;
    }

    /// Table restricted to the given clusters. Experts with no rating among
    /// them are dropped; retained experts keep their original weights.
    RatingsTable restricted_to(std::span<const Id> keep) const {
        std::unordered_set<Id> wanted(keep.begin(), keep.end());
        std::vector<Rating> sub;
        for (const Rating& r : entries_)
            if (wanted.count(r.cluster)) sub.push_back(r);
        std::optional<std::map<Id, double>> w;
        if (has_weights()) {
            std::unordered_set<Id> present;
            for (const Rating& r : sub) present.insert(r.expert);
            std::map<Id, double> wm;
            for (std::size_t i = 0; i < experts_.size(); ++i)
                if (present.count(experts_[i])) wm[experts_[i]] = weights_[i];
            w = std::move(wm);
        }
        return from_entries(std::move(sub), std::move(w));
    }

private:
    void build(std::vector<Rating> entries, std::optional<std::map<Id, double>> weights) {
        if (entries.empty()) throw std::invalid_argument("RatingsTable: no entries");
        for (const Rating& r : entries)
            if (r.value > 1)
                throw std::invalid_argument("RatingsTable: rating must be 0 or 1 (expert " +
                                            std::to_string(r.expert) + ", cluster " +
                                            std::to_string(r.cluster) + ")");

        entries_ = std::move(entries);

        experts_.reserve(entries_.size());
        clusters_.reserve(entries_.size());
        for (const Rating& r : entries_) {
            experts_.push_back(r.expert);
            clusters_.push_back(r.cluster);
        }
        std::sort(experts_.begin(), experts_.end());
        experts_.erase(std::unique(experts_.begin(), experts_.end()), experts_.end());
        std::sort(clusters_.begin(), clusters_.end());
        clusters_.erase(std::unique(clusters_.begin(), clusters_.end()), clusters_.end());

        rows_.assign(experts_.size(), {});
        for (const Rating& r : entries_) {
            const std::size_t e = expert_position(r.expert);
            const std::size_t j = cluster_position(r.cluster);
            rows_[e].emplace_back(static_cast<std::uint32_t>(j), r.value);
        }
        for (auto& row : rows_) {
            std::sort(row.begin(), row.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
            for (std::size_t k = 1; k < row.size(); ++k)
                if (row[k].first == row[k - 1].first)
                    throw std::invalid_argument(
                        "RatingsTable: duplicate (expert, cluster) pair for cluster id " +
                        std::to_string(clusters_[row[k].first]));
        }

        if (weights) {
            weights_.resize(experts_.size());
            for (std::size_t i = 0; i < experts_.size(); ++i) {
                const auto it = weights->find(experts_[i]);
                if (it == weights->end())
                    throw std::invalid_argument("RatingsTable: missing weight for expert " +
                                                std::to_string(experts_[i]));
                if (!(it->second > 0.0))
                    throw std::invalid_argument("RatingsTable: weight must be positive for expert " +
                                                std::to_string(experts_[i]));
                weights_[i] = it->second;
            }
        }
    }

    std::vector<Rating> entries_;
    std::vector<Id> experts_;
    std::vector<Id> clusters_;
    std::vector<double> weights_;  // aligned with experts_; empty = unweighted
    std::vector<std::vector<std::pair<std::uint32_t, std::uint8_t>>> rows_;
};

}  // namespace clusterrank
