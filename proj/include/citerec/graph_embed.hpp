#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "citerec/common.hpp"
#include "citerec/corpus.hpp"
#include "citerec/embedding_table.hpp"

namespace citerec {

using NodeId = std::uint32_t;

enum class WalkDirection { directed, undirected };
enum class WalkMethod { deepwalk, node2vec };

inline const char* to_string(WalkDirection d) { return d == WalkDirection::directed ? "directed" : "undirected"; }
inline const char* to_string(WalkMethod m) { return m == WalkMethod::deepwalk ? "deepwalk" : "node2vec"; }

inline WalkDirection parse_walk_direction(const std::string& s) {
  if (s == "directed") return WalkDirection::directed;
  if (s == "undirected") return WalkDirection::undirected;
  throw ConfigError("unknown walk direction '" + s + "'");
}

inline WalkMethod parse_walk_method(const std::string& s) {
  if (s == "deepwalk") return WalkMethod::deepwalk;
  if (s == "node2vec") return WalkMethod::node2vec;
  throw ConfigError("unknown walk method '" + s + "'");
}

/// Directed citation graph over training papers. Edges point from the
/// citing paper to the cited one. Adjacency lists are sorted and free of
/// self-loops and duplicates.
class CitationGraph {
 public:
  CitationGraph() = default;

  CitationGraph(std::vector<std::string> nodes, std::vector<std::pair<NodeId, NodeId>> edges)
      : nodes_(std::move(nodes)) {
    const auto n = nodes_.size();
    for (NodeId i = 0; i < n; ++i)
      if (!index_.emplace(nodes_[i], i).second) throw ConfigError("duplicate node '" + nodes_[i] + "'");
    out_.resize(n);
    in_.resize(n);
    und_.resize(n);
    for (auto [u, v] : edges) {
      if (u >= n || v >= n) throw ConfigError("edge endpoint out of range");
      if (u == v) continue;
      out_[u].push_back(v);
      in_[v].push_back(u);
    }
    for (std::size_t i = 0; i < n; ++i) {
      sort_unique(out_[i]);
      sort_unique(in_[i]);
      edge_count_ += out_[i].size();
      std::set_union(out_[i].begin(), out_[i].end(), in_[i].begin(), in_[i].end(),
                     std::back_inserter(und_[i]));
    }
  }

  /// One node per paper (isolated papers included), one edge per reference
  /// that points at another paper of `train`.
  static CitationGraph from_corpus(const Corpus& train) {
    std::vector<std::string> nodes = train.ids();
    std::unordered_map<std::string, NodeId> idx;
    for (NodeId i = 0; i < nodes.size(); ++i) idx.emplace(nodes[i], i);
    std::vector<std::pair<NodeId, NodeId>> edges;
    edges.reserve(train.edge_count());
    for (const auto& [id, p] : train) {
      const NodeId u = idx.at(id);
      for (const auto& r : p.references)
        if (auto it = idx.find(r); it != idx.end()) edges.emplace_back(u, it->second);
    }
    return CitationGraph(std::move(nodes), std::move(edges));
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t edge_count() const noexcept { return edge_count_; }
  const std::vector<std::string>& nodes() const noexcept { return nodes_; }
  const std::string& name(NodeId i) const { return nodes_.at(i); }
  std::optional<NodeId> index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::span<const NodeId> out_neighbors(NodeId i) const { return out_.at(i); }
  std::span<const NodeId> in_neighbors(NodeId i) const { return in_.at(i); }
  std::span<const NodeId> neighbors(NodeId i, WalkDirection dir) const {
    return dir == WalkDirection::directed ? std::span<const NodeId>(out_.at(i))
                                          : std::span<const NodeId>(und_.at(i));
  }
  bool adjacent(NodeId from, NodeId to, WalkDirection dir) const {
    auto n = neighbors(from, dir);
    return std::binary_search(n.begin(), n.end(), to);
  }

 private:
  static void sort_unique(std::vector<NodeId>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }

  std::vector<std::string> nodes_;
  std::unordered_map<std::string, NodeId> index_;
  std::vector<std::vector<NodeId>> out_, in_, und_;
  std::size_t edge_count_ = 0;
};

inline CitationGraph build_citation_graph(const Corpus& train) {
  return CitationGraph::from_corpus(train);
}

struct WalkConfig {
  int walks_per_node = 200;
  int walk_length = 80;
  double p = 4.0;  ///< return parameter
  double q = 2.0;  ///< in-out parameter
  std::uint64_t seed = 1;
  WalkDirection direction = WalkDirection::directed;
  WalkMethod method = WalkMethod::node2vec;
  int workers = 1;

  void validate() const {
    if (walks_per_node < 1) throw ConfigError("walks_per_node must be >= 1");
    if (walk_length < 1) throw ConfigError("walk_length must be >= 1");
    if (!(p > 0.0) || !(q > 0.0)) throw ConfigError("p and q must be > 0");
    if (workers < 1) throw ConfigError("workers must be >= 1");
  }
};

/// Unnormalized second-order transition weights out of `curr`, having
/// arrived from `prev`: 1/p to return to prev, 1 for nodes adjacent to prev,
/// 1/q for everything further away. Without a previous node (first step,
/// or DeepWalk) every weight is 1. A node without neighbors yields an empty
/// list.
inline std::vector<std::pair<NodeId, double>> transition_weights(const CitationGraph& g,
                                                                 std::optional<NodeId> prev,
                                                                 NodeId curr,
                                                                 const WalkConfig& cfg) {
  auto nbrs = g.neighbors(curr, cfg.direction);
  std::vector<std::pair<NodeId, double>> w;
  w.reserve(nbrs.size());
  if (!prev || cfg.method == WalkMethod::deepwalk) {
    for (auto x : nbrs) w.emplace_back(x, 1.0);
    return w;
  }
  const double inv_p = 1.0 / cfg.p, inv_q = 1.0 / cfg.q;
  for (auto x : nbrs) {
    if (x == *prev)
      w.emplace_back(x, inv_p);
    else if (g.adjacent(*prev, x, cfg.direction))
      w.emplace_back(x, 1.0);
    else
      w.emplace_back(x, inv_q);
  }
  return w;
}

/// Flat storage for variable-length walks.
class WalkCorpus {
 public:
  WalkCorpus() { offsets_.push_back(0); }

  void append(std::span<const NodeId> walk) {
    tokens_.insert(tokens_.end(), walk.begin(), walk.end());
    offsets_.push_back(tokens_.size());
  }
  void append(const WalkCorpus& other) {
    for (std::size_t i = 0; i < other.size(); ++i) append(other.walk(i));
  }

  std::size_t size() const noexcept { return offsets_.size() - 1; }
  bool empty() const noexcept { return size() == 0; }
  std::size_t token_count() const noexcept { return tokens_.size(); }
  std::span<const NodeId> walk(std::size_t i) const {
    return {tokens_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  friend bool operator==(const WalkCorpus& a, const WalkCorpus& b) {
    return a.tokens_ == b.tokens_ && a.offsets_ == b.offsets_;
  }

 private:
  std::vector<NodeId> tokens_;
  std::vector<std::size_t> offsets_;
};

namespace detail {

inline void walk_from(const CitationGraph& g, NodeId start, std::uint64_t walk_index,
                      const WalkConfig& cfg, std::vector<NodeId>& walk) {
  Rng rng(mix_seed({cfg.seed, start, walk_index}));
  walk.clear();
  walk.push_back(start);
  while (walk.size() < static_cast<std::size_t>(cfg.walk_length)) {
    std::optional<NodeId> prev;
    if (walk.size() >= 2) prev = walk[walk.size() - 2];
    auto w = transition_weights(g, prev, walk.back(), cfg);
    if (w.empty()) break;
    double total = 0.0;
    for (const auto& [_, x] : w) total += x;
    double u = rng.uniform() * total;
    std::size_t pick = w.size() - 1;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (u < w[i].second) {
        pick = i;
        break;
      }
      u -= w[i].second;
    }
    walk.push_back(w[pick].first);
  }
}

}  // namespace detail

/// `walks_per_node` walks from every node, ordered pass by pass (all nodes
/// for pass 0, then pass 1, ...). Each walk draws from its own stream seeded
/// by (seed, start node, pass), so the result does not depend on `workers`.
inline WalkCorpus generate_walks(const CitationGraph& g, const WalkConfig& cfg) {
  cfg.validate();
  if (g.size() == 0) throw ConfigError("cannot generate walks on an empty graph");
  const std::size_t n = g.size();
  const std::size_t total = n * static_cast<std::size_t>(cfg.walks_per_node);
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), total);

  std::vector<WalkCorpus> parts(workers);
  auto run = [&](std::size_t w) {
    std::vector<NodeId> walk;
    const std::size_t lo = total * w / workers, hi = total * (w + 1) / workers;
    for (std::size_t k = lo; k < hi; ++k) {
      detail::walk_from(g, static_cast<NodeId>(k % n), k / n, cfg, walk);
      parts[w].append(walk);
    }
  };
  if (workers == 1) {
    run(0);
    return std::move(parts[0]);
  }
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(run, w);
  }
  WalkCorpus out;
  for (const auto& p : parts) out.append(p);
  return out;
}

/// One walk per line, node ids separated by spaces.
inline void write_walks(std::ostream& out, const WalkCorpus& walks, const CitationGraph& g) {
  for (std::size_t i = 0; i < walks.size(); ++i) {
    auto w = walks.walk(i);
    for (std::size_t j = 0; j < w.size(); ++j) out << (j ? " " : "") << g.name(w[j]);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Skip-Gram with negative sampling

struct SkipGramConfig {
  int dim = 128;
  int window = 10;
  int negatives = 5;
  int epochs = 5;
  double initial_lr = 0.025;
  std::uint64_t seed = 1;
  /// 1 = deterministic. More workers update shared vectors without locks.
  int workers = 1;

  void validate() const {
    if (dim < 1) throw ConfigError("skip-gram dim must be >= 1");
    if (window < 1) throw ConfigError("skip-gram window must be >= 1");
    if (negatives < 1) throw ConfigError("skip-gram negatives must be >= 1");
    if (epochs < 1) throw ConfigError("skip-gram epochs must be >= 1");
    if (!(initial_lr > 0.0)) throw ConfigError("skip-gram learning rate must be > 0");
    if (workers < 1) throw ConfigError("skip-gram workers must be >= 1");
  }
};

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Stateful trainer so callers can inspect vectors between epochs.
///
/// For every (center, context) pair inside the window it ascends
///   log s(u_ctx . v_ctr) + sum_neg log s(-u_neg . v_ctr)
/// with negatives drawn from count^0.75. The learning rate decays linearly
/// over all planned epochs, floored at initial_lr * 1e-4.
class SkipGramTrainer {
 public:
  SkipGramTrainer(const WalkCorpus& walks, std::size_t vocab_size, const SkipGramConfig& cfg)
      : walks_(walks), cfg_(cfg), counts_(vocab_size, 0) {
    cfg_.validate();
    if (walks.empty() || walks.token_count() == 0) throw ConfigError("skip-gram needs non-empty walks");
    for (std::size_t i = 0; i < walks.size(); ++i)
      for (auto t : walks.walk(i)) {
        if (t >= vocab_size) throw ConfigError("walk token outside vocabulary");
        ++counts_[t];
      }
    noise_cdf_.resize(vocab_size);
    double acc = 0.0;
    for (std::size_t i = 0; i < vocab_size; ++i) {
      acc += std::pow(static_cast<double>(counts_[i]), 0.75);
      noise_cdf_[i] = acc;
    }
    if (acc == 0.0) throw ConfigError("skip-gram vocabulary is empty");

    const auto dim = static_cast<Eigen::Index>(cfg_.dim);
    input_.resize(static_cast<Eigen::Index>(vocab_size), dim);
    output_ = RowMatrix::Zero(static_cast<Eigen::Index>(vocab_size), dim);
    Rng rng(mix_seed({cfg_.seed, 0x1417}));
    for (Eigen::Index i = 0; i < input_.size(); ++i)
      input_.data()[i] = (rng.uniform() - 0.5) / static_cast<double>(cfg_.dim);
    planned_ = static_cast<double>(walks.token_count()) * cfg_.epochs;
  }

  void run_epoch() {
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(cfg_.workers), walks_.size());
    if (workers <= 1) {
      Rng rng(mix_seed({cfg_.seed, static_cast<std::uint64_t>(epoch_), 0}));
      train_range<false>(0, walks_.size(), rng);
    } else {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([this, w, workers] {
          Rng rng(mix_seed({cfg_.seed, static_cast<std::uint64_t>(epoch_), w}));
          train_range<true>(walks_.size() * w / workers, walks_.size() * (w + 1) / workers, rng);
        });
    }
    ++epoch_;
  }

  void train() {
    while (epoch_ < cfg_.epochs) run_epoch();
  }

  int epochs_done() const noexcept { return epoch_; }
  const RowMatrix& input_vectors() const noexcept { return input_; }
  const RowMatrix& output_vectors() const noexcept { return output_; }
  std::size_t count(NodeId i) const { return counts_.at(i); }

  /// Center vectors of every token that occurs in the walks.
  EmbeddingTable table(const std::vector<std::string>& names) const {
    EmbeddingTable t(cfg_.dim);
    for (std::size_t i = 0; i < counts_.size(); ++i)
      if (counts_[i] > 0) t.add(names.at(i), input_.row(static_cast<Eigen::Index>(i)));
    return t;
  }

 private:
  template <bool Shared>
  static double load(double& x) {
    if constexpr (Shared) return std::atomic_ref<double>(x).load(std::memory_order_relaxed);
    else return x;
  }
  template <bool Shared>
  static void store(double& x, double v) {
    if constexpr (Shared) std::atomic_ref<double>(x).store(v, std::memory_order_relaxed);
    else x = v;
  }

  NodeId sample_noise(Rng& rng) const {
    const double u = rng.uniform() * noise_cdf_.back();
    auto it = std::upper_bound(noise_cdf_.begin(), noise_cdf_.end(), u);
    return static_cast<NodeId>(std::min<std::ptrdiff_t>(it - noise_cdf_.begin(),
                                                        static_cast<std::ptrdiff_t>(noise_cdf_.size()) - 1));
  }

  template <bool Shared>
  void train_range(std::size_t lo, std::size_t hi, Rng& rng) {
    const auto dim = static_cast<std::size_t>(cfg_.dim);
    std::vector<double> grad(dim);
    const double floor_lr = cfg_.initial_lr * 1e-4;
    for (std::size_t wi = lo; wi < hi; ++wi) {
      auto walk = walks_.walk(wi);
      for (std::size_t pos = 0; pos < walk.size(); ++pos) {
        const double done = processed_.fetch_add(1, std::memory_order_relaxed);
        const double lr = std::max(cfg_.initial_lr * (1.0 - done / planned_), floor_lr);
        const std::size_t from = pos >= static_cast<std::size_t>(cfg_.window) ? pos - cfg_.window : 0;
        const std::size_t to = std::min(walk.size(), pos + cfg_.window + 1);
        double* center = input_.data() + walk[pos] * dim;
        for (std::size_t c = from; c < to; ++c) {
          if (c == pos) continue;
          const NodeId context = walk[c];
          std::fill(grad.begin(), grad.end(), 0.0);
          for (int d = 0; d <= cfg_.negatives; ++d) {
            NodeId target = context;
            double label = 1.0;
            if (d > 0) {
              target = sample_noise(rng);
              if (target == context) continue;
              label = 0.0;
            }
            double* out = output_.data() + target * dim;
            double f = 0.0;
            for (std::size_t k = 0; k < dim; ++k) f += load<Shared>(center[k]) * load<Shared>(out[k]);
            const double g = (label - 1.0 / (1.0 + std::exp(-f))) * lr;
            for (std::size_t k = 0; k < dim; ++k) {
              const double o = load<Shared>(out[k]);
              grad[k] += g * o;
              store<Shared>(out[k], o + g * load<Shared>(center[k]));
            }
          }
          for (std::size_t k = 0; k < dim; ++k) store<Shared>(center[k], load<Shared>(center[k]) + grad[k]);
        }
      }
    }
  }

  const WalkCorpus& walks_;
  SkipGramConfig cfg_;
  std::vector<std::size_t> counts_;
  std::vector<double> noise_cdf_;
  RowMatrix input_, output_;
  double planned_ = 0.0;
  std::atomic<std::uint64_t> processed_{0};
  int epoch_ = 0;
};

/// Trains node vectors on `walks`; `names[i]` is the id of token i.
inline EmbeddingTable train_skipgram(const WalkCorpus& walks, const std::vector<std::string>& names,
                                     const SkipGramConfig& cfg) {
  SkipGramTrainer trainer(walks, names.size(), cfg);
  trainer.train();
  return trainer.table(names);
}

/// Mean full-softmax negative log-likelihood of every (center, context)
/// pair in the window. Quadratic in the vocabulary; meant for tiny graphs.
inline double full_softmax_loss(const WalkCorpus& walks, const RowMatrix& input,
                                const RowMatrix& output, int window) {
  double loss = 0.0;
  std::size_t pairs = 0;
  const Eigen::MatrixXd logits_all = input * output.transpose();
  for (std::size_t wi = 0; wi < walks.size(); ++wi) {
    auto w = walks.walk(wi);
    for (std::size_t pos = 0; pos < w.size(); ++pos) {
      const auto row = logits_all.row(w[pos]);
      const double mx = row.maxCoeff();
      const double lse = mx + std::log((row.array() - mx).exp().sum());
      const std::size_t from = pos >= static_cast<std::size_t>(window) ? pos - window : 0;
      const std::size_t to = std::min(w.size(), pos + window + 1);
      for (std::size_t c = from; c < to; ++c) {
        if (c == pos) continue;
        loss += lse - row(w[c]);
        ++pairs;
      }
    }
  }
  return pairs ? loss / static_cast<double>(pairs) : 0.0;
}

}  // namespace citerec
