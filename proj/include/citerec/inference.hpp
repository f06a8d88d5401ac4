#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "citerec/common.hpp"
#include "citerec/embedding_table.hpp"
#include "citerec/fusion.hpp"
#include "citerec/retrieval.hpp"
#include "citerec/text_embed.hpp"

namespace citerec {

/// A per-paper representation: dense rows, or sparse TF-IDF rows.
using Representation = std::variant<EmbeddingTable, SparseTable>;

inline std::size_t size_of(const Representation& r) {
  return std::visit([](const auto& t) { return t.size(); }, r);
}

inline const std::vector<std::string>& ids_of(const Representation& r) {
  if (auto* d = std::get_if<EmbeddingTable>(&r)) return d->ids();
  return std::get<SparseTable>(r).ids;
}

inline Eigen::Index dim_of(const Representation& r) {
  if (auto* d = std::get_if<EmbeddingTable>(&r)) return d->dim();
  return static_cast<Eigen::Index>(std::get<SparseTable>(r).dim);
}

/// Dense rows for `ids` in order; sparse rows are expanded.
inline Eigen::MatrixXd dense_rows(const Representation& r, const std::vector<std::string>& ids) {
  if (auto* d = std::get_if<EmbeddingTable>(&r)) return d->gather(ids);
  const auto& s = std::get<SparseTable>(r);
  std::unordered_map<std::string, std::size_t> at;
  for (std::size_t i = 0; i < s.size(); ++i) at.emplace(s.ids[i], i);
  Eigen::MatrixXd m(static_cast<Eigen::Index>(ids.size()), static_cast<Eigen::Index>(s.dim));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = at.find(ids[i]);
    if (it == at.end()) throw LoadError("no text vector for id '" + ids[i] + "'");
    m.row(static_cast<Eigen::Index>(i)) = s.rows[it->second].to_dense();
  }
  return m;
}

inline std::vector<RankedList> rank_all(const Representation& queries, const Representation& candidates,
                                        std::size_t k) {
  if (queries.index() != candidates.index())
    throw ConfigError("queries and candidates use different representations");
  if (auto* q = std::get_if<EmbeddingTable>(&queries)) return rank_all(*q, std::get<EmbeddingTable>(candidates), k);
  return rank_all(std::get<SparseTable>(queries), std::get<SparseTable>(candidates), k);
}

// Sparse file: "<count> <dim> sparse" header, then <id>\t<index>:<weight> ...

inline void write_sparse(std::ostream& out, const SparseTable& t) {
  out << t.size() << ' ' << t.dim << " sparse\n";
  for (std::size_t i = 0; i < t.size(); ++i) {
    out << t.ids[i] << '\t';
    const auto& e = t.rows[i].entries;
    for (std::size_t j = 0; j < e.size(); ++j) out << (j ? " " : "") << e[j].first << ':' << format_double(e[j].second);
    out << '\n';
  }
}

inline SparseTable read_sparse(std::istream& in, const std::string& source = "<stream>") {
  std::string line;
  std::size_t count = 0;
  SparseTable t;
  auto fail = [&](std::size_t l, const std::string& m) { return LoadError(source + ":" + std::to_string(l) + ": " + m); };
  if (!std::getline(in, line)) throw fail(1, "missing header");
  auto h = split_ws(line);
  if (h.size() != 3 || h[2] != "sparse" || !parse_int(h[0], count) || !parse_int(h[1], t.dim))
    throw fail(1, "expected '<count> <dim> sparse'");
  for (std::size_t r = 0; r < count; ++r) {
    if (!std::getline(in, line)) throw fail(r + 2, "truncated");
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw fail(r + 2, "expected '<id>\\t<entries>'");
    SparseVector v{t.dim, {}};
    for (auto f : split_ws(std::string_view(line).substr(tab + 1))) {
      auto c = f.find(':');
      std::uint32_t idx = 0;
      double w = 0.0;
      if (c == std::string_view::npos || !parse_int(f.substr(0, c), idx) || !parse_double(f.substr(c + 1), w) ||
          idx >= t.dim || (!v.entries.empty() && idx <= v.entries.back().first) || !std::isfinite(w))
        throw fail(r + 2, "bad entry '" + std::string(f) + "'");
      v.entries.emplace_back(idx, w);
    }
    t.ids.push_back(line.substr(0, tab));
    t.rows.push_back(std::move(v));
  }
  return t;
}

/// Writes `<path>.emb` (dense) or `<path>.sparse` and returns the path used.
inline std::filesystem::path save_representation(std::filesystem::path stem, const Representation& r) {
  const bool dense = std::holds_alternative<EmbeddingTable>(r);
  stem += dense ? ".emb" : ".sparse";
  std::ofstream out(stem);
  if (!out) throw Error("cannot write " + stem.string());
  if (dense) write_embeddings(out, std::get<EmbeddingTable>(r));
  else write_sparse(out, std::get<SparseTable>(r));
  return stem;
}

/// Loads whichever of `<stem>.emb` / `<stem>.sparse` exists.
inline Representation load_representation(std::filesystem::path stem) {
  auto dense = stem, sparse = stem;
  dense += ".emb";
  sparse += ".sparse";
  if (std::filesystem::exists(dense)) return load_dense_embeddings(dense);
  std::ifstream in(sparse);
  if (!in) throw LoadError("neither " + dense.string() + " nor " + sparse.string() + " exists");
  return read_sparse(in, sparse.string());
}

// ---------------------------------------------------------------------------
// Node-embedding estimation for papers outside the citation graph

struct NeighborEstimate {
  std::string query_id;
  std::vector<std::string> neighbor_ids;  ///< most similar first
  std::vector<double> similarities;
  Eigen::RowVectorXd estimated_vector;
};

struct InferenceOptions {
  std::size_t neighbors = 5;
  /// Weight neighbors by (positive) similarity instead of a plain mean.
  bool similarity_weighted = false;
};

/// Mean node vector of the `N` training papers most similar in text to the
/// query. Ties in similarity go to the smaller id.
template <class Candidates, class Query>
NeighborEstimate estimate_node_embedding(std::string query_id, const Query& query, const Candidates& train_text,
                                         const EmbeddingTable& train_nodes, const InferenceOptions& opt = {}) {
  if (train_text.size() == 0 || train_nodes.empty()) throw ConfigError("empty training tables");
  if (opt.neighbors < 1) throw ConfigError("neighbor count must be >= 1");
  auto ranked = rank(std::move(query_id), query, train_text, opt.neighbors);
  NeighborEstimate e;
  e.query_id = std::move(ranked.query_id);
  e.estimated_vector = Eigen::RowVectorXd::Zero(train_nodes.dim());
  double total = 0.0;
  for (const auto& item : ranked.items) {
    e.neighbor_ids.push_back(item.id);
    e.similarities.push_back(item.score);
    const double w = opt.similarity_weighted ? std::max(item.score, 0.0) : 1.0;
    e.estimated_vector += w * train_nodes.row(item.id);
    total += w;
  }
  if (total > 0.0) {
    e.estimated_vector /= total;
  } else {
    // Every neighbor had non-positive similarity; fall back to the plain mean.
    e.estimated_vector.setZero();
    for (const auto& id : e.neighbor_ids) e.estimated_vector += train_nodes.row(id);
    e.estimated_vector /= static_cast<double>(e.neighbor_ids.size());
  }
  return e;
}

/// Estimates a node vector for every paper of `query_text`.
inline EmbeddingTable estimate_node_embeddings(const Representation& query_text, const Representation& train_text,
                                               const EmbeddingTable& train_nodes, const InferenceOptions& opt = {}) {
  if (query_text.index() != train_text.index())
    throw ConfigError("query and training text use different representations");
  for (const auto& id : ids_of(train_text))
    if (!train_nodes.contains(id)) throw ConfigError("training paper '" + id + "' has no node embedding");
  EmbeddingTable out(train_nodes.dim());
  out.reserve(size_of(query_text));
  if (auto* q = std::get_if<EmbeddingTable>(&query_text)) {
    DenseCandidates c(std::get<EmbeddingTable>(train_text));
    for (std::size_t i = 0; i < q->size(); ++i)
      out.add(q->ids()[i], estimate_node_embedding(q->ids()[i], q->span(i), c, train_nodes, opt).estimated_vector);
  } else {
    const auto& qs = std::get<SparseTable>(query_text);
    SparseCandidates c(std::get<SparseTable>(train_text));
    for (std::size_t i = 0; i < qs.size(); ++i)
      out.add(qs.ids[i], estimate_node_embedding(qs.ids[i], qs.rows[i], c, train_nodes, opt).estimated_vector);
  }
  return out;
}

namespace detail {

inline Representation fuse_views(const Representation& text, const std::vector<std::string>& ids,
                                  const Eigen::MatrixXd& nodes, const FusionModel& model,
                                  const FusionStrategy& strategy, const char* stage) {
  switch (strategy.kind) {
    case FusionKind::text_only: return text;
    case FusionKind::node_only: return EmbeddingTable(ids, nodes);
    case FusionKind::simple_concat: return EmbeddingTable(ids, fuse(dense_rows(text, ids), nodes, strategy));
    case FusionKind::projected_concat:
    case FusionKind::linear_combination: {
      if (!has_projection(model))
        throw PipelineError(stage, std::string("strategy ") + to_string(strategy.kind) +
                                       " requires a fitted CCA or DCCA model");
      const Eigen::MatrixXd xp = project(model, dense_rows(text, ids), Side::x);
      const Eigen::MatrixXd yp = project(model, nodes, Side::y);
      return EmbeddingTable(ids, fuse(xp, yp, strategy));
    }
  }
  throw ConfigError("unknown fusion strategy");
}

}  // namespace detail

/// Fused representation of the training papers (the retrieval candidates).
inline Representation embed_train_set(const Representation& train_text, const EmbeddingTable& train_nodes,
                                      const FusionModel& model, const FusionStrategy& strategy) {
  const auto& ids = ids_of(train_text);
  Eigen::MatrixXd nodes;
  if (strategy.kind != FusionKind::text_only) nodes = train_nodes.gather(ids);
  return detail::fuse_views(train_text, ids, nodes, model, strategy, "train-fusion");
}

struct TestEmbeddings {
  Representation fused;
  EmbeddingTable node_estimates;
};

/// Text vector -> node estimate -> projection -> fusion, for every test
/// paper. Reads no citation data of the test papers.
inline TestEmbeddings embed_test_set(const Representation& test_text, const Representation& train_text,
                                     const EmbeddingTable& train_nodes, const FusionModel& model,
                                     const FusionStrategy& strategy, const InferenceOptions& opt = {}) {
  TestEmbeddings out;
  const auto& ids = ids_of(test_text);
  Eigen::MatrixXd nodes;
  if (strategy.kind != FusionKind::text_only) {
    out.node_estimates = estimate_node_embeddings(test_text, train_text, train_nodes, opt);
    nodes = out.node_estimates.matrix();
  }
  out.fused = detail::fuse_views(test_text, ids, nodes, model, strategy, "infer");
  return out;
}

/// As above, but the neighbor search runs on a separate text representation
/// (`neighbor_test` against `neighbor_train`) while fusion uses `test_text`.
inline TestEmbeddings embed_test_set(const Representation& test_text, const Representation& neighbor_test,
                                     const Representation& neighbor_train, const EmbeddingTable& train_nodes,
                                     const FusionModel& model, const FusionStrategy& strategy,
                                     const InferenceOptions& opt = {}) {
  TestEmbeddings out;
  const auto& ids = ids_of(test_text);
  Eigen::MatrixXd nodes;
  if (strategy.kind != FusionKind::text_only) {
    out.node_estimates = estimate_node_embeddings(neighbor_test, neighbor_train, train_nodes, opt);
    nodes = out.node_estimates.gather(ids);
  }
  out.fused = detail::fuse_views(test_text, ids, nodes, model, strategy, "infer");
  return out;
}

}  // namespace citerec
