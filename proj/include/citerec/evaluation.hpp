#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "citerec/common.hpp"
#include "citerec/corpus.hpp"
#include "citerec/retrieval.hpp"
#include "json.hpp"

namespace citerec {

enum class ApNormalizer {
  relevant_count,  ///< 1/|R_i|, even when |R_i| > k
  min_k_relevant,  ///< 1/min(k, |R_i|), the common alternative
};

struct EvalOptions {
  /// Score missing ranks of short lists as non-relevant instead of failing.
  bool pad = false;
  ApNormalizer normalizer = ApNormalizer::relevant_count;
};

namespace detail {

struct QueryView {
  const RankedList* list;
  const std::vector<std::string>* truth;
};

/// Queries in ascending id order, each paired with its ground truth.
inline std::vector<QueryView> align(const std::vector<RankedList>& recs, const GroundTruth& truth, std::size_t k,
                                    const EvalOptions& opt) {
  std::vector<QueryView> out;
  out.reserve(recs.size());
  for (const auto& l : recs) {
    auto it = truth.find(l.query_id);
    if (it == truth.end()) throw Error("query '" + l.query_id + "' has no ground truth");
    if (it->second.empty()) throw Error("query '" + l.query_id + "' has an empty ground-truth set");
    if (!std::is_sorted(it->second.begin(), it->second.end()))
      throw Error("ground truth for '" + l.query_id + "' is not sorted");
    if (l.items.size() < k && !opt.pad)
      throw Error("list for query '" + l.query_id + "' has " + std::to_string(l.items.size()) +
                  " items, fewer than k=" + std::to_string(k));
    out.push_back({&l, &it->second});
  }
  std::sort(out.begin(), out.end(),
            [](const QueryView& a, const QueryView& b) { return a.list->query_id < b.list->query_id; });
  return out;
}

inline bool relevant(const std::vector<std::string>& truth, const std::string& id) {
  return std::binary_search(truth.begin(), truth.end(), id);
}

template <class F>
double mean_over(const std::vector<QueryView>& qs, F&& per_query) {
  if (qs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& q : qs) s += per_query(q);
  return s / static_cast<double>(qs.size());
}

}  // namespace detail

/// |top-k ∩ truth| for one list; `truth` must be sorted.
inline std::size_t hits_at_k(const RankedList& list, const std::vector<std::string>& truth, std::size_t k) {
  std::size_t h = 0;
  for (std::size_t j = 0; j < std::min(k, list.items.size()); ++j) h += detail::relevant(truth, list.items[j].id);
  return h;
}

/// (1/|R|) sum_{j<=k} P@j rel(j), or 1/min(k,|R|) under the alternative.
inline double average_precision_at_k(const RankedList& list, const std::vector<std::string>& truth, std::size_t k,
                                     ApNormalizer norm = ApNormalizer::relevant_count) {
  // Extended precision so short hand-checkable cases round to the nearest
  // double of the exact rational.
  std::size_t h = 0;
  long double s = 0.0L;
  for (std::size_t j = 0; j < std::min(k, list.items.size()); ++j) {
    if (detail::relevant(truth, list.items[j].id)) {
      ++h;
      s += static_cast<long double>(h) / static_cast<long double>(j + 1);
    }
  }
  const std::size_t denom = norm == ApNormalizer::relevant_count ? truth.size() : std::min(k, truth.size());
  return static_cast<double>(s / static_cast<long double>(denom));
}

inline double precision_at_k(const std::vector<RankedList>& recs, const GroundTruth& truth, std::size_t k,
                             const EvalOptions& opt = {}) {
  if (k < 1) throw ConfigError("k must be >= 1");
  auto qs = detail::align(recs, truth, k, opt);
  return detail::mean_over(qs, [&](const detail::QueryView& q) {
    return static_cast<double>(hits_at_k(*q.list, *q.truth, k)) / static_cast<double>(k);
  });
}

inline double recall_at_k(const std::vector<RankedList>& recs, const GroundTruth& truth, std::size_t k,
                          const EvalOptions& opt = {}) {
  if (k < 1) throw ConfigError("k must be >= 1");
  auto qs = detail::align(recs, truth, k, opt);
  return detail::mean_over(qs, [&](const detail::QueryView& q) {
    return static_cast<double>(hits_at_k(*q.list, *q.truth, k)) / static_cast<double>(q.truth->size());
  });
}

inline double map_at_k(const std::vector<RankedList>& recs, const GroundTruth& truth, std::size_t k,
                       const EvalOptions& opt = {}) {
  if (k < 1) throw ConfigError("k must be >= 1");
  auto qs = detail::align(recs, truth, k, opt);
  return detail::mean_over(
      qs, [&](const detail::QueryView& q) { return average_precision_at_k(*q.list, *q.truth, k, opt.normalizer); });
}

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double map = 0.0;
  std::size_t hits = 0;  ///< total over queries
};

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::map<std::size_t, Metrics> per_k;
  std::size_t n_queries = 0;
  /// k -> (query id, AP@k), in ascending query id order.
  std::map<std::size_t, std::vector<std::pair<std::string, double>>> per_query_ap;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["n_queries"] = n_queries;
    for (auto k : ks) {
      const auto& m = per_k.at(k);
      const auto s = std::to_string(k);
      j["precision@" + s] = m.precision;
      j["recall@" + s] = m.recall;
      j["map@" + s] = m.map;
    }
    return j;
  }

  void write_ap(std::ostream& out, std::size_t k) const {
    for (const auto& [q, ap] : per_query_ap.at(k)) out << q << '\t' << format_double(ap) << '\n';
  }

  friend bool operator==(const MetricsReport& a, const MetricsReport& b) {
    if (a.ks != b.ks || a.n_queries != b.n_queries || a.per_query_ap != b.per_query_ap) return false;
    for (auto k : a.ks) {
      const auto &x = a.per_k.at(k), &y = b.per_k.at(k);
      if (x.precision != y.precision || x.recall != y.recall || x.map != y.map || x.hits != y.hits) return false;
    }
    return true;
  }
};

/// Precision, recall and MAP at every cutoff, plus per-query AP. Sums run
/// over queries in ascending id order, so results do not depend on list order.
inline MetricsReport evaluate_run(const std::vector<RankedList>& recs, const GroundTruth& truth,
                                  std::vector<std::size_t> ks = {10, 15, 20}, const EvalOptions& opt = {}) {
  if (ks.empty()) throw ConfigError("no cutoffs given");
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  if (ks.front() < 1) throw ConfigError("k must be >= 1");
  auto qs = detail::align(recs, truth, ks.back(), opt);

  MetricsReport r;
  r.ks = ks;
  r.n_queries = qs.size();
  for (auto k : ks) {
    Metrics m;
    double p = 0.0, rc = 0.0, ap_sum = 0.0;
    auto& aps = r.per_query_ap[k];
    for (const auto& q : qs) {
      const auto h = hits_at_k(*q.list, *q.truth, k);
      m.hits += h;
      p += static_cast<double>(h) / static_cast<double>(k);
      rc += static_cast<double>(h) / static_cast<double>(q.truth->size());
      const double ap = average_precision_at_k(*q.list, *q.truth, k, opt.normalizer);
      ap_sum += ap;
      aps.emplace_back(q.list->query_id, ap);
    }
    if (!qs.empty()) {
      const auto n = static_cast<double>(qs.size());
      m.precision = p / n;
      m.recall = rc / n;
      m.map = ap_sum / n;
    }
    r.per_k[k] = m;
  }
  return r;
}

}  // namespace citerec
