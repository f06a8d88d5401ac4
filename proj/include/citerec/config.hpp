#pragma once

// Run configuration: one flat, sectioned key-value file (INI syntax) whose
// keys double as dotted command-line flags. Every key is registered once
// below; parsing, printing, flag generation and stage hashing all walk the
// same registry, so a new key cannot be half-wired.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "citerec/common.hpp"
#include "citerec/corpus.hpp"
#include "citerec/dcca.hpp"
#include "citerec/evaluation.hpp"
#include "citerec/fusion.hpp"
#include "citerec/graph_embed.hpp"
#include "citerec/inference.hpp"

namespace citerec {

enum class TextModel { tfidf, external };
enum class FusionMethod { none, cca, dcca };
/// Which text vectors drive the neighbor search for test node estimates.
enum class NeighborText { text, tfidf };

struct RunConfig {
  struct Paths {
    std::string corpus;
    std::string work_dir = "work";
  } paths;

  PruneOptions prune;
  SplitOptions split;

  struct Text {
    TextModel model = TextModel::tfidf;
    std::string external_path;
    std::size_t min_df = 5;
  } text;

  struct Graph {
    WalkMethod method = WalkMethod::node2vec;
    int walks_per_node = 200;
    int walk_length = 80;
    double p = 4.0;
    double q = 2.0;
    WalkDirection direction = WalkDirection::directed;
    int dim = 128;
    int window = 10;
    int negatives = 5;
    int epochs = 5;
    double lr = 0.025;
    int workers = 1;
  } graph;

  struct Fusion {
    FusionMethod method = FusionMethod::dcca;
    Eigen::Index d = 128;
    double reg = 1e-4;
    bool standardize = true;
    std::vector<Eigen::Index> hidden = {128};
    Activation activation = Activation::sigmoid;
    int epochs = 20;
    Eigen::Index batch = 256;
    double lr = 1e-3;
    bool align = true;
    FusionKind strategy = FusionKind::projected_concat;
    double alpha = 0.5;
  } fusion;

  struct Inference {
    std::size_t neighbors = 5;
    bool weighted = false;
    NeighborText neighbor_text = NeighborText::text;
  } inference;

  struct Eval {
    std::vector<std::size_t> ks = {10, 15, 20};
    bool pad = false;
    ApNormalizer normalizer = ApNormalizer::relevant_count;
  } eval;

  struct Run {
    std::uint64_t seed = 1;
    /// Forces single-worker training wherever workers would race.
    bool deterministic = false;
  } run;

  int effective_graph_workers() const { return run.deterministic ? 1 : graph.workers; }
  std::size_t max_k() const { return *std::max_element(eval.ks.begin(), eval.ks.end()); }

  WalkConfig walk_config() const {
    WalkConfig w;
    w.walks_per_node = graph.walks_per_node;
    w.walk_length = graph.walk_length;
    w.p = graph.p;
    w.q = graph.q;
    w.seed = mix_seed({run.seed, 0x77616c6bULL});
    w.direction = graph.direction;
    w.method = graph.method;
    w.workers = effective_graph_workers();
    return w;
  }

  SkipGramConfig skipgram_config() const {
    SkipGramConfig s;
    s.dim = graph.dim;
    s.window = graph.window;
    s.negatives = graph.negatives;
    s.epochs = graph.epochs;
    s.initial_lr = graph.lr;
    s.seed = mix_seed({run.seed, 0x7367ULL});
    s.workers = effective_graph_workers();
    return s;
  }

  CcaOptions cca_options() const { return {fusion.d, fusion.reg, fusion.standardize}; }

  DccaOptions dcca_options() const {
    DccaOptions o;
    o.hidden = fusion.hidden;
    o.hidden_activation = fusion.activation;
    o.d = fusion.d;
    o.epochs = fusion.epochs;
    o.batch = fusion.batch;
    o.reg = fusion.reg;
    o.lr = fusion.lr;
    o.seed = mix_seed({run.seed, 0x64636361ULL});
    o.standardize = fusion.standardize;
    o.align_outputs = fusion.align;
    return o;
  }

  FusionStrategy strategy() const { return {fusion.strategy, fusion.alpha}; }
  InferenceOptions inference_options() const { return {inference.neighbors, inference.weighted}; }
  EvalOptions eval_options() const { return {eval.pad, eval.normalizer}; }

  void validate() const;
};

// ---------------------------------------------------------------------------
// Value codecs

namespace detail {

inline std::string trimmed(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class Int>
Int parse_int_value(const std::string& key, const std::string& text) {
  Int v{};
  if (!parse_int(trimmed(text), v)) throw ConfigError(key + ": expected an integer, got '" + text + "'");
  return v;
}

inline double parse_double_value(const std::string& key, const std::string& text) {
  double v = 0;
  if (!parse_double(trimmed(text), v)) throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

inline bool parse_bool_value(const std::string& key, const std::string& text) {
  const auto t = trimmed(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

template <class Int>
std::vector<Int> parse_int_list(const std::string& key, const std::string& text) {
  std::vector<Int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (trimmed(item).empty()) continue;
    out.push_back(parse_int_value<Int>(key, item));
  }
  return out;
}

template <class Int>
std::string join_ints(const std::vector<Int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string bool_text(bool b) { return b ? "true" : "false"; }

}  // namespace detail

inline const char* to_string(TextModel m) { return m == TextModel::tfidf ? "tfidf" : "external"; }
inline const char* to_string(NeighborText n) { return n == NeighborText::text ? "text" : "tfidf"; }
inline const char* to_string(ApNormalizer n) {
  return n == ApNormalizer::relevant_count ? "relevant" : "min_k_relevant";
}
inline const char* to_string(FusionMethod m) {
  switch (m) {
    case FusionMethod::none: return "none";
    case FusionMethod::cca: return "cca";
    case FusionMethod::dcca: return "dcca";
  }
  return "?";
}

inline FusionMethod parse_fusion_method(const std::string& s) {
  if (s == "none") return FusionMethod::none;
  if (s == "cca") return FusionMethod::cca;
  if (s == "dcca") return FusionMethod::dcca;
  throw ConfigError("unknown fusion method '" + s + "' (none, cca, dcca)");
}

// ---------------------------------------------------------------------------
// Key registry

struct ConfigKey {
  std::string name;   ///< "section.key"
  std::string stage;  ///< pipeline stage whose outputs depend on this key ("" = none)
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;

  std::string section() const { return name.substr(0, name.find('.')); }
  std::string leaf() const { return name.substr(name.find('.') + 1); }
};

inline const std::vector<ConfigKey>& config_keys() {
  using C = RunConfig;
  using detail::bool_text;
  using detail::parse_bool_value;
  using detail::parse_double_value;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto add = [&](std::string name, std::string stage, std::string help, std::function<std::string(const C&)> get,
                   std::function<void(C&, const std::string&)> set) {
      k.push_back({std::move(name), std::move(stage), std::move(help), std::move(get), std::move(set)});
    };
    auto num = [](double v) { return format_double(v); };

    add("paths.corpus", "prepare", "corpus file, one JSON object per line",
        [](const C& c) { return c.paths.corpus; }, [](C& c, const std::string& v) { c.paths.corpus = v; });
    add("paths.work_dir", "", "directory holding every stage artifact (default work)",
        [](const C& c) { return c.paths.work_dir; }, [](C& c, const std::string& v) { c.paths.work_dir = v; });

    add("prune.min_in", "prepare", "minimum in-corpus citations received (default 15)",
        [](const C& c) { return std::to_string(c.prune.min_in); },
        [](C& c, const std::string& v) { c.prune.min_in = detail::parse_int_value<int>("prune.min_in", v); });
    add("prune.min_out", "prepare", "minimum references made (default 20)",
        [](const C& c) { return std::to_string(c.prune.min_out); },
        [](C& c, const std::string& v) { c.prune.min_out = detail::parse_int_value<int>("prune.min_out", v); });
    add("prune.iterate", "prepare", "repeat pruning until nothing changes (default false: one pass)",
        [](const C& c) { return bool_text(c.prune.iterate); },
        [](C& c, const std::string& v) { c.prune.iterate = parse_bool_value("prune.iterate", v); });

    add("split.train_end", "prepare", "last training year, inclusive (default 2013)",
        [](const C& c) { return std::to_string(c.split.train_end_year); },
        [](C& c, const std::string& v) { c.split.train_end_year = detail::parse_int_value<int>("split.train_end", v); });
    add("split.test_start", "prepare", "first test year (default 2014)",
        [](const C& c) { return std::to_string(c.split.test_start_year); },
        [](C& c, const std::string& v) {
          c.split.test_start_year = detail::parse_int_value<int>("split.test_start", v);
        });
    add("split.test_end", "prepare", "last test year, inclusive (default 2017)",
        [](const C& c) { return std::to_string(c.split.test_end_year); },
        [](C& c, const std::string& v) { c.split.test_end_year = detail::parse_int_value<int>("split.test_end", v); });

    add("text.model", "embed-text", "tfidf or external (default tfidf)",
        [](const C& c) { return std::string(to_string(c.text.model)); },
        [](C& c, const std::string& v) {
          if (v == "tfidf") c.text.model = TextModel::tfidf;
          else if (v == "external") c.text.model = TextModel::external;
          else throw ConfigError("text.model: expected tfidf or external, got '" + v + "'");
        });
    add("text.external_path", "embed-text", "embedding file covering train and test papers (text.model=external)",
        [](const C& c) { return c.text.external_path; }, [](C& c, const std::string& v) { c.text.external_path = v; });
    add("text.min_df", "embed-text", "TF-IDF minimum document frequency (default 5)",
        [](const C& c) { return std::to_string(c.text.min_df); },
        [](C& c, const std::string& v) { c.text.min_df = detail::parse_int_value<std::size_t>("text.min_df", v); });

    add("graph.method", "embed-graph", "node2vec or deepwalk (default node2vec)",
        [](const C& c) { return std::string(to_string(c.graph.method)); },
        [](C& c, const std::string& v) { c.graph.method = parse_walk_method(v); });
    add("graph.walks_per_node", "embed-graph", "walks started at every node (default 200)",
        [](const C& c) { return std::to_string(c.graph.walks_per_node); },
        [](C& c, const std::string& v) {
          c.graph.walks_per_node = detail::parse_int_value<int>("graph.walks_per_node", v);
        });
    add("graph.walk_length", "embed-graph", "nodes per walk (default 80)",
        [](const C& c) { return std::to_string(c.graph.walk_length); },
        [](C& c, const std::string& v) { c.graph.walk_length = detail::parse_int_value<int>("graph.walk_length", v); });
    add("graph.p", "embed-graph", "return parameter (default 4)", [=](const C& c) { return num(c.graph.p); },
        [](C& c, const std::string& v) { c.graph.p = parse_double_value("graph.p", v); });
    add("graph.q", "embed-graph", "in-out parameter (default 2)", [=](const C& c) { return num(c.graph.q); },
        [](C& c, const std::string& v) { c.graph.q = parse_double_value("graph.q", v); });
    add("graph.direction", "embed-graph", "directed or undirected walks (default directed)",
        [](const C& c) { return std::string(to_string(c.graph.direction)); },
        [](C& c, const std::string& v) { c.graph.direction = parse_walk_direction(v); });
    add("graph.dim", "embed-graph", "node embedding width (default 128)",
        [](const C& c) { return std::to_string(c.graph.dim); },
        [](C& c, const std::string& v) { c.graph.dim = detail::parse_int_value<int>("graph.dim", v); });
    add("graph.window", "embed-graph", "skip-gram window (default 10)",
        [](const C& c) { return std::to_string(c.graph.window); },
        [](C& c, const std::string& v) { c.graph.window = detail::parse_int_value<int>("graph.window", v); });
    add("graph.negatives", "embed-graph", "negative samples per pair (default 5)",
        [](const C& c) { return std::to_string(c.graph.negatives); },
        [](C& c, const std::string& v) { c.graph.negatives = detail::parse_int_value<int>("graph.negatives", v); });
    add("graph.epochs", "embed-graph", "passes over the walks (default 5)",
        [](const C& c) { return std::to_string(c.graph.epochs); },
        [](C& c, const std::string& v) { c.graph.epochs = detail::parse_int_value<int>("graph.epochs", v); });
    add("graph.lr", "embed-graph", "initial skip-gram learning rate, decays linearly (default 0.025)",
        [=](const C& c) { return num(c.graph.lr); },
        [](C& c, const std::string& v) { c.graph.lr = parse_double_value("graph.lr", v); });
    add("graph.workers", "embed-graph", "walk and training threads; >1 is not bit-reproducible (default 1)",
        [](const C& c) { return std::to_string(c.graph.workers); },
        [](C& c, const std::string& v) { c.graph.workers = detail::parse_int_value<int>("graph.workers", v); });

    add("fusion.method", "train-fusion", "none, cca or dcca (default dcca)",
        [](const C& c) { return std::string(to_string(c.fusion.method)); },
        [](C& c, const std::string& v) { c.fusion.method = parse_fusion_method(v); });
    add("fusion.d", "train-fusion", "shared subspace width (default 128)",
        [](const C& c) { return std::to_string(c.fusion.d); },
        [](C& c, const std::string& v) { c.fusion.d = detail::parse_int_value<Eigen::Index>("fusion.d", v); });
    add("fusion.reg", "train-fusion", "ridge added to both covariance matrices (default 1e-4)",
        [=](const C& c) { return num(c.fusion.reg); },
        [](C& c, const std::string& v) { c.fusion.reg = parse_double_value("fusion.reg", v); });
    add("fusion.standardize", "train-fusion", "z-score both views with training statistics (default true)",
        [](const C& c) { return bool_text(c.fusion.standardize); },
        [](C& c, const std::string& v) { c.fusion.standardize = parse_bool_value("fusion.standardize", v); });
    add("fusion.hidden", "train-fusion", "DCCA hidden layer widths, comma separated, empty for none (default 128)",
        [](const C& c) { return detail::join_ints(c.fusion.hidden); },
        [](C& c, const std::string& v) { c.fusion.hidden = detail::parse_int_list<Eigen::Index>("fusion.hidden", v); });
    add("fusion.activation", "train-fusion", "DCCA hidden activation: sigmoid, relu or linear (default sigmoid)",
        [](const C& c) { return std::string(to_string(c.fusion.activation)); },
        [](C& c, const std::string& v) { c.fusion.activation = parse_activation(v); });
    add("fusion.epochs", "train-fusion", "DCCA epochs (default 20)",
        [](const C& c) { return std::to_string(c.fusion.epochs); },
        [](C& c, const std::string& v) { c.fusion.epochs = detail::parse_int_value<int>("fusion.epochs", v); });
    add("fusion.batch", "train-fusion", "DCCA minibatch size (default 256)",
        [](const C& c) { return std::to_string(c.fusion.batch); },
        [](C& c, const std::string& v) { c.fusion.batch = detail::parse_int_value<Eigen::Index>("fusion.batch", v); });
    add("fusion.lr", "train-fusion", "DCCA Adam learning rate (default 1e-3)",
        [=](const C& c) { return num(c.fusion.lr); },
        [](C& c, const std::string& v) { c.fusion.lr = parse_double_value("fusion.lr", v); });
    add("fusion.align", "train-fusion", "fit a linear CCA on the DCCA outputs (default true)",
        [](const C& c) { return bool_text(c.fusion.align); },
        [](C& c, const std::string& v) { c.fusion.align = parse_bool_value("fusion.align", v); });
    add("fusion.strategy", "train-fusion",
        "text_only, node_only, simple_concat, projected_concat or linear_combination (default projected_concat)",
        [](const C& c) { return std::string(to_string(c.fusion.strategy)); },
        [](C& c, const std::string& v) { c.fusion.strategy = parse_fusion_kind(v); });
    add("fusion.alpha", "train-fusion", "text weight of linear_combination (default 0.5)",
        [=](const C& c) { return num(c.fusion.alpha); },
        [](C& c, const std::string& v) { c.fusion.alpha = parse_double_value("fusion.alpha", v); });

    add("inference.neighbors", "infer", "training papers averaged per test node estimate (default 5)",
        [](const C& c) { return std::to_string(c.inference.neighbors); },
        [](C& c, const std::string& v) {
          c.inference.neighbors = detail::parse_int_value<std::size_t>("inference.neighbors", v);
        });
    add("inference.weighted", "infer", "weight neighbors by similarity (default false: plain mean)",
        [](const C& c) { return bool_text(c.inference.weighted); },
        [](C& c, const std::string& v) { c.inference.weighted = parse_bool_value("inference.weighted", v); });
    add("inference.neighbor_text", "infer",
        "text vectors for the neighbor search: text (the fused view) or tfidf (default text)",
        [](const C& c) { return std::string(to_string(c.inference.neighbor_text)); },
        [](C& c, const std::string& v) {
          if (v == "text") c.inference.neighbor_text = NeighborText::text;
          else if (v == "tfidf") c.inference.neighbor_text = NeighborText::tfidf;
          else throw ConfigError("inference.neighbor_text: expected text or tfidf, got '" + v + "'");
        });

    add("eval.ks", "rank", "cutoffs, comma separated; the largest sets the list length (default 10,15,20)",
        [](const C& c) { return detail::join_ints(c.eval.ks); },
        [](C& c, const std::string& v) { c.eval.ks = detail::parse_int_list<std::size_t>("eval.ks", v); });
    add("eval.pad", "evaluate", "score short lists as padded with misses instead of failing (default false)",
        [](const C& c) { return bool_text(c.eval.pad); },
        [](C& c, const std::string& v) { c.eval.pad = parse_bool_value("eval.pad", v); });
    add("eval.normalizer", "evaluate", "AP normalizer: relevant (1/|R|) or min_k_relevant (default relevant)",
        [](const C& c) { return std::string(to_string(c.eval.normalizer)); },
        [](C& c, const std::string& v) {
          if (v == "relevant") c.eval.normalizer = ApNormalizer::relevant_count;
          else if (v == "min_k_relevant") c.eval.normalizer = ApNormalizer::min_k_relevant;
          else throw ConfigError("eval.normalizer: expected relevant or min_k_relevant, got '" + v + "'");
        });

    add("run.seed", "seed", "seed for walks, skip-gram and DCCA (default 1)",
        [](const C& c) { return std::to_string(c.run.seed); },
        [](C& c, const std::string& v) { c.run.seed = detail::parse_int_value<std::uint64_t>("run.seed", v); });
    add("run.deterministic", "seed", "force single-worker training (default false)",
        [](const C& c) { return bool_text(c.run.deterministic); },
        [](C& c, const std::string& v) { c.run.deterministic = parse_bool_value("run.deterministic", v); });
    return k;
  }();
  return keys;
}

inline const ConfigKey& config_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return k;
  throw ConfigError("unknown config key '" + name + "'");
}

inline void set_config_value(RunConfig& c, const std::string& name, const std::string& value) {
  config_key(name).set(c, detail::trimmed(value));
}

inline std::string get_config_value(const RunConfig& c, const std::string& name) { return config_key(name).get(c); }

inline void RunConfig::validate() const {
  if (prune.min_in < 0 || prune.min_out < 0) throw ConfigError("prune thresholds must be >= 0");
  if (!(split.train_end_year < split.test_start_year && split.test_start_year <= split.test_end_year))
    throw ConfigError("split years must satisfy train_end < test_start <= test_end");
  if (text.model == TextModel::external && text.external_path.empty())
    throw ConfigError("text.model=external needs text.external_path");
  if (text.min_df < 1) throw ConfigError("text.min_df must be >= 1");
  walk_config().validate();
  skipgram_config().validate();
  if (fusion.d < 1) throw ConfigError("fusion.d must be >= 1");
  if (!(fusion.reg >= 0.0)) throw ConfigError("fusion.reg must be >= 0");
  if (fusion.epochs < 1) throw ConfigError("fusion.epochs must be >= 1");
  if (fusion.batch < 2) throw ConfigError("fusion.batch must be >= 2");
  if (!(fusion.lr > 0.0)) throw ConfigError("fusion.lr must be > 0");
  for (auto h : fusion.hidden)
    if (h < 1) throw ConfigError("fusion.hidden widths must be >= 1");
  if (!(fusion.alpha >= 0.0 && fusion.alpha <= 1.0)) throw ConfigError("fusion.alpha must lie in [0, 1]");
  if (strategy().needs_projection() && fusion.method == FusionMethod::none)
    throw ConfigError(std::string("fusion.strategy=") + to_string(fusion.strategy) +
                      " needs fusion.method cca or dcca");
  if (inference.neighbors < 1) throw ConfigError("inference.neighbors must be >= 1");
  if (eval.ks.empty()) throw ConfigError("eval.ks must name at least one cutoff");
  for (auto k : eval.ks)
    if (k < 1) throw ConfigError("eval.ks entries must be >= 1");
}

// ---------------------------------------------------------------------------
// File format

/// Applies every key of an INI file on top of `base`. Unknown sections or
/// keys are errors, so a typo cannot silently fall back to a default.
inline RunConfig parse_config(std::istream& in, RunConfig base = {}, const std::string& source = "<stream>") {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(source + ": " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  for (const auto& [section, body] : tree) {
    if (body.empty())
      throw ConfigError(source + ": key '" + section + "' outside a section");
    for (const auto& [key, value] : body) {
      const auto name = section + "." + key;
      try {
        set_config_value(base, name, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(source + ": " + e.what());
      }
    }
  }
  return base;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config(in, std::move(base), path.string());
}

/// Canonical text: every key in registry order. With `comments`, each key
/// is preceded by its help line.
inline void write_config(std::ostream& out, const RunConfig& c, bool comments = false) {
  std::string section;
  for (const auto& k : config_keys()) {
    if (k.section() != section) {
      if (!section.empty()) out << '\n';
      section = k.section();
      out << '[' << section << "]\n";
    }
    if (comments) out << "; " << k.help << '\n';
    out << k.leaf() << " = " << k.get(c) << '\n';
  }
}

inline std::string config_text(const RunConfig& c) {
  std::ostringstream out;
  write_config(out, c);
  return out.str();
}

}  // namespace citerec
