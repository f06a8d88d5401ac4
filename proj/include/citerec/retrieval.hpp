#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "citerec/common.hpp"
#include "citerec/embedding_table.hpp"
#include "citerec/text_embed.hpp"

namespace citerec {

/// Cosine similarity, clamped to [-1, 1]. A zero vector scores 0 against
/// anything, so empty documents sort last instead of failing.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("cosine of vectors with different dimensions");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

inline double cosine(const SparseVector& a, const SparseVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

struct ScoredId {
  std::string id;
  double score = 0.0;
  friend bool operator==(const ScoredId&, const ScoredId&) = default;
};

struct RankedList {
  std::string query_id;
  std::vector<ScoredId> items;  ///< score descending, ties by ascending id
  bool truncated = false;       ///< fewer candidates than requested k
};

/// Dense candidates with norms cached once.
class DenseCandidates {
 public:
  using Query = std::span<const double>;

  explicit DenseCandidates(const EmbeddingTable& table) : table_(table), norms_(table.size()) {
    for (std::size_t i = 0; i < table.size(); ++i) norms_[i] = table.row(i).norm();
  }

  std::size_t size() const { return table_.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(table_.dim()); }
  const std::string& id(std::size_t i) const { return table_.ids()[i]; }
  const EmbeddingTable& table() const { return table_; }

  double score(std::size_t i, std::span<const double> q, double q_norm) const {
    if (q_norm == 0.0 || norms_[i] == 0.0) return 0.0;
    auto c = table_.span(i);
    double ab = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) ab += c[k] * q[k];
    return std::clamp(ab / (norms_[i] * q_norm), -1.0, 1.0);
  }

  double query_norm(std::span<const double> q) const {
    if (q.size() != dim())
      throw ConfigError("query has dim " + std::to_string(q.size()) + ", candidates have " + std::to_string(dim()));
    double s = 0.0;
    for (double v : q) s += v * v;
    return std::sqrt(s);
  }

 private:
  const EmbeddingTable& table_;
  std::vector<double> norms_;
};

/// Sparse (TF-IDF) candidates with norms cached once.
class SparseCandidates {
 public:
  using Query = const SparseVector&;

  explicit SparseCandidates(const SparseTable& table) : table_(table), norms_(table.size()) {
    for (std::size_t i = 0; i < table.size(); ++i) norms_[i] = table.rows[i].norm();
  }

  std::size_t size() const { return table_.size(); }
  const std::string& id(std::size_t i) const { return table_.ids[i]; }
  const SparseTable& table() const { return table_; }

  double score(std::size_t i, const SparseVector& q, double q_norm) const {
    if (q_norm == 0.0 || norms_[i] == 0.0) return 0.0;
    return std::clamp(dot(table_.rows[i], q) / (norms_[i] * q_norm), -1.0, 1.0);
  }

  double query_norm(const SparseVector& q) const {
    if (q.dim != table_.dim) throw ConfigError("sparse query dimension mismatch");
    return q.norm();
  }

 private:
  const SparseTable& table_;
  std::vector<double> norms_;
};

namespace detail {

inline bool ranks_before(const ScoredId& a, const ScoredId& b) {
  return a.score > b.score || (a.score == b.score && a.id < b.id);
}

}  // namespace detail

/// Exact top-k by cosine over every candidate. Ties go to the smaller id,
/// which makes the order total and independent of candidate order.
template <class Candidates, class Query>
RankedList rank(std::string query_id, const Query& query, const Candidates& candidates, std::size_t k) {
  if constexpr (std::is_base_of_v<Eigen::MatrixBase<Query>, Query>) {
    const Eigen::RowVectorXd q = query;
    return rank(std::move(query_id), std::span<const double>(q.data(), static_cast<std::size_t>(q.size())),
                candidates, k);
  } else {
    if (k < 1) throw ConfigError("k must be >= 1");
    const double qn = candidates.query_norm(query);
    RankedList out{std::move(query_id), {}, k > candidates.size()};
    const std::size_t keep = std::min(k, candidates.size());
    auto& heap = out.items;  // worst kept item at the front
    heap.reserve(keep + 1);
    auto worse_first = [](const ScoredId& a, const ScoredId& b) { return detail::ranks_before(a, b); };
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      ScoredId s{candidates.id(i), candidates.score(i, query, qn)};
      if (heap.size() < keep) {
        heap.push_back(std::move(s));
        std::push_heap(heap.begin(), heap.end(), worse_first);
      } else if (detail::ranks_before(s, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), worse_first);
        heap.back() = std::move(s);
        std::push_heap(heap.begin(), heap.end(), worse_first);
      }
    }
    std::sort(heap.begin(), heap.end(), detail::ranks_before);
    return out;
  }
}

/// Ranks every row of `queries` against `candidates`.
inline std::vector<RankedList> rank_all(const EmbeddingTable& queries, const EmbeddingTable& candidates,
                                        std::size_t k) {
  DenseCandidates c(candidates);
  std::vector<RankedList> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out.push_back(rank(queries.ids()[i], queries.span(i), c, k));
  return out;
}

inline std::vector<RankedList> rank_all(const SparseTable& queries, const SparseTable& candidates, std::size_t k) {
  SparseCandidates c(candidates);
  std::vector<RankedList> out;
  out.reserve(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out.push_back(rank(queries.ids[i], queries.rows[i], c, k));
  return out;
}

// Recommendations file: <query_id>\t<cand1>:<score1> <cand2>:<score2> ...
// with scores printed to six decimals.

inline void write_recommendations(std::ostream& out, const std::vector<RankedList>& lists) {
  for (const auto& l : lists) {
    out << l.query_id << '\t';
    for (std::size_t i = 0; i < l.items.size(); ++i)
      out << (i ? " " : "") << l.items[i].id << ':' << format_fixed(l.items[i].score, 6);
    out << '\n';
  }
}

inline std::vector<RankedList> read_recommendations(std::istream& in, const std::string& source = "<stream>") {
  std::vector<RankedList> lists;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto fail = [&](const std::string& m) { return LoadError(source + ":" + std::to_string(lineno) + ": " + m); };
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw fail("expected '<query>\\t<items>'");
    RankedList l{line.substr(0, tab), {}, false};
    for (auto f : split_ws(std::string_view(line).substr(tab + 1))) {
      auto colon = f.rfind(':');
      double score = 0.0;
      if (colon == std::string_view::npos || colon == 0 || !parse_double(f.substr(colon + 1), score))
        throw fail("bad item '" + std::string(f) + "'");
      l.items.push_back({std::string(f.substr(0, colon)), score});
    }
    lists.push_back(std::move(l));
  }
  return lists;
}

}  // namespace citerec
