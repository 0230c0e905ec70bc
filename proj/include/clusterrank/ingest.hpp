#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "clusterrank/data.hpp"
#include "clusterrank/errors.hpp"

namespace clusterrank {

struct CsvFormat {
    char delimiter = ',';
    std::string expert_col = "expert_id";
    std::string cluster_col = "cluster_id";
    std::string rating_col = "rating";
    std::string weight_col = "weight";
};

/// A loaded table plus the token maps behind its dense ids: expert/cluster id
/// k in the table is tokens[k] in the source file.
struct LoadedRatings {
    RatingsTable table;
    std::vector<std::string> expert_tokens;
    std::vector<std::string> cluster_tokens;
};

namespace detail {

inline std::string trim(std::string s) {
    const auto notspace = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), notspace));
    s.erase(std::find_if(s.rbegin(), s.rend(), notspace).base(), s.end());
    return s;
}

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, delim)) out.push_back(trim(field));
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

inline bool is_integer_token(const std::string& s) {
    if (s.empty() || s.size() > 18) return false;  // 18 digits always fit an int64
    std::size_t i = s[0] == '-' ? 1 : 0;
    if (i == s.size()) return false;
    for (; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

/// Dense ids in deterministic token order: numeric when every token is an
/// integer, lexicographic otherwise.
inline std::vector<std::string> sorted_tokens(const std::unordered_set<std::string>& tokens) {
    std::vector<std::string> out(tokens.begin(), tokens.end());
    const bool numeric = std::all_of(out.begin(), out.end(), is_integer_token);
    if (numeric) {
        std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
            const long long ia = std::stoll(a), ib = std::stoll(b);
            if (ia != ib) return ia < ib;
            return a < b;
        });
    } else {
        std::sort(out.begin(), out.end());
    }
    return out;
}

inline std::size_t require_column(const std::vector<std::string>& header, const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
        throw parse_error("missing required column '" + name + "' in header", 1);
    return static_cast<std::size_t>(it - header.begin());
}

}  // namespace detail

/// Reads a ratings CSV (header row naming the expert, cluster and rating
/// columns) into a validated table. Ids are re-indexed densely in sorted
/// token order; the returned token maps translate back. Malformed rows,
/// ratings outside {0,1} and duplicate (expert, cluster) pairs are rejected
/// with their line number.
inline LoadedRatings load_ratings(const std::string& path, const CsvFormat& format = {}) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open ratings file: " + path);

    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) throw std::invalid_argument("empty ratings file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++lineno;
    const auto header = detail::split_line(line, format.delimiter);
    const std::size_t ecol = detail::require_column(header, format.expert_col);
    const std::size_t ccol = detail::require_column(header, format.cluster_col);
    const std::size_t rcol = detail::require_column(header, format.rating_col);

    struct Row {
        std::string expert, cluster;
        std::uint8_t value;
        long line;
    };
    std::vector<Row> rows;
    std::unordered_set<std::string> expert_tokens, cluster_tokens;

    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = detail::split_line(line, format.delimiter);
        if (fields.size() != header.size())
            throw parse_error("expected " + std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()),
                              lineno);
        const std::string& rating = fields[rcol];
        std::uint8_t value;
        if (rating == "0")
            value = 0;
        else if (rating == "1")
            value = 1;
        else
            throw parse_error("rating must be 0 or 1, got '" + rating + "'", lineno);
        if (fields[ecol].empty()) throw parse_error("empty expert id", lineno);
        if (fields[ccol].empty()) throw parse_error("empty cluster id", lineno);
        rows.push_back({fields[ecol], fields[ccol], value, lineno});
        expert_tokens.insert(fields[ecol]);
        cluster_tokens.insert(fields[ccol]);
    }
    if (rows.empty()) throw std::invalid_argument("ratings file has no data rows: " + path);

    LoadedRatings out;
    out.expert_tokens = detail::sorted_tokens(expert_tokens);
    out.cluster_tokens = detail::sorted_tokens(cluster_tokens);
    std::unordered_map<std::string, Id> eid, cid;
    for (std::size_t i = 0; i < out.expert_tokens.size(); ++i)
        eid[out.expert_tokens[i]] = static_cast<Id>(i);
    for (std::size_t i = 0; i < out.cluster_tokens.size(); ++i)
        cid[out.cluster_tokens[i]] = static_cast<Id>(i);

    std::vector<Rating> entries;
    entries.reserve(rows.size());
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(rows.size() * 2);
    for (const Row& r : rows) {
        const Id e = eid[r.expert];
        const Id c = cid[r.cluster];
        const std::uint64_t key =
            (static_cast<std::uint64_t>(e) << 32) | static_cast<std::uint64_t>(c);
        if (!seen.insert(key).second)
            throw parse_error("duplicate rating for expert '" + r.expert + "', cluster '" +
                                  r.cluster + "'",
                              r.line);
        entries.push_back({e, c, r.value});
    }
    out.table = RatingsTable::from_entries(std::move(entries));
    return out;
}

/// Writes a table back to CSV with its numeric ids. Loading the result again
/// reproduces the table exactly.
inline void save_ratings(const RatingsTable& table, const std::string& path,
                         const CsvFormat& format = {}) {
    std::ofstream outf(path);
    if (!outf) throw std::invalid_argument("cannot write ratings file: " + path);
    const char d = format.delimiter;
    outf << format.expert_col << d << format.cluster_col << d << format.rating_col << "\n";
    for (const Rating& r : table.entries())
        outf << r.expert << d << r.cluster << d << static_cast<int>(r.value) << "\n";
}

/// Case-study frequency weights (the weighting in the likelihood's weighted
/// form): w_i = N / |Lambda_i| with N the number of distinct clusters and
/// |Lambda_i| the number of clusters expert i rated.
inline std::map<Id, double> compute_weights(const RatingsTable& table) {
    const double n = static_cast<double>(table.cluster_count());
    std::map<Id, double> w;
    for (std::size_t e = 0; e < table.expert_count(); ++e)
        w[table.experts()[e]] = n / static_cast<double>(table.row(e).size());
    return w;
}

/// Optional weights CSV: expert_id, weight. Tokens must match the ratings
/// file; weights must be positive.
inline std::map<Id, double> load_weights(const std::string& path,
                                         const std::vector<std::string>& expert_tokens,
                                         const CsvFormat& format = {}) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open weights file: " + path);
    std::unordered_map<std::string, Id> eid;
    for (std::size_t i = 0; i < expert_tokens.size(); ++i)
        eid[expert_tokens[i]] = static_cast<Id>(i);

    std::string line;
    long lineno = 0;
    if (!std::getline(in, line)) throw std::invalid_argument("empty weights file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++lineno;
    const auto header = detail::split_line(line, format.delimiter);
    const std::size_t ecol = detail::require_column(header, format.expert_col);
    const std::size_t wcol = detail::require_column(header, format.weight_col);

    std::map<Id, double> out;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = detail::split_line(line, format.delimiter);
        if (fields.size() != header.size())
            throw parse_error("expected " + std::to_string(header.size()) + " fields, got " +
                                  std::to_string(fields.size()),
                              lineno);
        const auto it = eid.find(fields[ecol]);
        if (it == eid.end())
            throw parse_error("weight for unknown expert '" + fields[ecol] + "'", lineno);
        double w = 0.0;
        const std::string& ws = fields[wcol];
        const auto [p, ec] = std::from_chars(ws.data(), ws.data() + ws.size(), w);
        if (ec != std::errc{} || p != ws.data() + ws.size() || !(w > 0.0))
            throw parse_error("weight must be a positive number, got '" + ws + "'", lineno);
        if (!out.emplace(it->second, w).second)
            throw parse_error("duplicate weight for expert '" + fields[ecol] + "'", lineno);
    }
    if (out.empty()) throw std::invalid_argument("weights file has no data rows: " + path);
    return out;
}

}  // namespace clusterrank
