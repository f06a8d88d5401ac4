#pragma once

// Stage orchestration. Each stage reads its predecessors' files from the
// work directory, writes its own, and leaves a `<stage>.manifest.json`
// recording the stage hash, the hashes of every upstream stage, the full
// configuration, per-output content hashes, wall time and peak memory.
// A stage refuses to start when an upstream manifest is missing or was
// produced under a configuration that differs in a key that matters.

#include <sys/resource.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "citerec/config.hpp"
#include "citerec/corpus.hpp"
#include "citerec/evaluation.hpp"
#include "citerec/fusion.hpp"
#include "citerec/graph_embed.hpp"
#include "citerec/inference.hpp"
#include "citerec/retrieval.hpp"
#include "citerec/text_embed.hpp"
#include "json.hpp"

namespace citerec {

namespace fs = std::filesystem;

struct StageSpec {
  std::string name;
  std::vector<std::string> upstream;  ///< direct predecessors
};

inline const std::vector<StageSpec>& pipeline_stages() {
  static const std::vector<StageSpec> stages = {
      {"prepare", {}},
      {"embed-text", {"prepare"}},
      {"embed-graph", {"prepare"}},
      {"train-fusion", {"embed-text", "embed-graph"}},
      {"infer", {"train-fusion"}},
      {"rank", {"infer"}},
      {"evaluate", {"rank"}},
      {"grid-pq", {"embed-text"}},
      {"grid-alpha", {"train-fusion"}},
  };
  return stages;
}

inline const StageSpec& stage_spec(const std::string& name) {
  for (const auto& s : pipeline_stages())
    if (s.name == name) return s;
  throw ConfigError("unknown stage '" + name + "'");
}

/// The stage plus all of its transitive predecessors, in pipeline order.
inline std::vector<std::string> stage_closure(const std::string& name) {
  std::set<std::string> seen;
  std::function<void(const std::string&)> visit = [&](const std::string& s) {
    if (!seen.insert(s).second) return;
    for (const auto& u : stage_spec(s).upstream) visit(u);
  };
  visit(name);
  std::vector<std::string> out;
  for (const auto& s : pipeline_stages())
    if (seen.count(s.name)) out.push_back(s.name);
  return out;
}

namespace detail {

/// Keys read directly by a stage. Grid verbs sweep some keys themselves
/// but still depend on the rest of their section.
inline bool stage_reads(const std::string& stage, const ConfigKey& k) {
  const auto& s = k.stage;
  if (s == stage) return true;
  if (s == "seed") return stage == "embed-graph" || stage == "train-fusion" || stage == "grid-pq";
  if (stage == "grid-pq")
    return (s == "embed-graph" && k.name != "graph.p" && k.name != "graph.q" && k.name != "graph.method") ||
           s == "infer" || s == "rank" || s == "evaluate";
  if (stage == "grid-alpha") return s == "infer" || s == "rank" || s == "evaluate";
  return false;
}

inline std::string key_value_for_hash(const RunConfig& cfg, const ConfigKey& k) {
  if (k.name == "graph.workers") return std::to_string(cfg.effective_graph_workers());
  if (k.name == "run.deterministic") return "-";  // folded into graph.workers
  return k.get(cfg);
}

inline std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot read " + path.string());
  std::uint64_t h = fnv1a("");
  char buf[1 << 16];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) h = fnv1a(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
  return to_hex(h);
}

inline long peak_rss_kb() {
  rusage u{};
  getrusage(RUSAGE_SELF, &u);
  return u.ru_maxrss;
}

}  // namespace detail

/// Hash of every configuration value that can change the stage's outputs,
/// chained with the hashes of its predecessors.
inline std::string stage_hash(const RunConfig& cfg, const std::string& stage) {
  std::uint64_t h = fnv1a("citerec-stage " + stage + "\n");
  for (const auto& k : config_keys())
    if (detail::stage_reads(stage, k)) h = fnv1a(k.name + "=" + detail::key_value_for_hash(cfg, k) + "\n", h);
  for (const auto& u : stage_spec(stage).upstream) h = fnv1a(u + ":" + stage_hash(cfg, u) + "\n", h);
  return to_hex(h);
}

inline nlohmann::ordered_json config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& k : config_keys()) j[k.name] = k.get(cfg);
  return j;
}

// ---------------------------------------------------------------------------
// Work directory

class Workspace {
 public:
  explicit Workspace(fs::path dir) : dir_(std::move(dir)) {}

  const fs::path& dir() const noexcept { return dir_; }
  fs::path operator/(const std::string& name) const { return dir_ / name; }
  fs::path manifest(const std::string& stage) const { return dir_ / (stage + ".manifest.json"); }

  nlohmann::json read_manifest(const std::string& stage) const {
    std::ifstream in(manifest(stage));
    if (!in) throw LoadError("missing manifest " + manifest(stage).string());
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw LoadError("unreadable manifest " + manifest(stage).string() + ": " + e.what());
    }
  }

  /// Saves a representation under `stem`, removing a stale file of the
  /// other kind so loaders never pick up an old run.
  std::string save(const std::string& stem, const Representation& r) const {
    fs::remove(dir_ / (stem + ".emb"));
    fs::remove(dir_ / (stem + ".sparse"));
    return save_representation(dir_ / stem, r).filename().string();
  }

  Representation load(const std::string& stem) const { return load_representation(dir_ / stem); }

 private:
  fs::path dir_;
};

/// Throws unless every transitive predecessor of `stage` has a manifest
/// whose hash matches the current configuration.
inline void check_upstream(const RunConfig& cfg, const Workspace& ws, const std::string& stage) {
  for (const auto& u : stage_closure(stage)) {
    if (u == stage) continue;
    if (!fs::exists(ws.manifest(u)))
      throw PipelineError(stage, "upstream stage '" + u + "' has not been run in " + ws.dir().string() +
                                     " (no " + ws.manifest(u).filename().string() + ")");
    const auto m = ws.read_manifest(u);
    const auto expected = stage_hash(cfg, u);
    const auto found = m.value("config_hash", std::string());
    if (found == expected) continue;
    std::string why;
    const auto& recorded = m.contains("config") ? m["config"] : nlohmann::json::object();
    for (const auto& s : stage_closure(u))
      for (const auto& k : config_keys()) {
        if (!detail::stage_reads(s, k)) continue;
        const auto now = k.get(cfg);
        const auto then = recorded.contains(k.name) ? recorded[k.name].get<std::string>() : std::string("<absent>");
        if (now != then && why.find(k.name + ":") == std::string::npos)
          why += "\n  " + k.name + ": artifacts have '" + then + "', current config has '" + now + "'";
      }
    if (why.empty()) why = "\n  (no differing key found; the manifest may come from another version)";
    throw PipelineError(stage, "config hash mismatch with upstream stage '" + u + "' (artifacts " + found +
                                   ", current " + expected + "); rerun '" + u +
                                   "' or restore its configuration. Differences:" + why);
  }
}

namespace detail {

/// Runs `body` as stage `stage`: validates the config, checks predecessors,
/// and on success writes the manifest. Any failure leaves no manifest and
/// surfaces as a PipelineError tagged with the stage name.
template <class Body>
auto run_stage(const RunConfig& cfg, const std::string& stage, std::ostream& log, Body&& body) {
  const auto start = std::chrono::steady_clock::now();
  Workspace ws(cfg.paths.work_dir);
  try {
    cfg.validate();
    fs::create_directories(ws.dir());
    check_upstream(cfg, ws, stage);
    fs::remove(ws.manifest(stage));
    log << "[" << stage << "] start\n";
    std::vector<std::string> outputs;
    auto result = body(ws, outputs);

    nlohmann::ordered_json m;
    m["stage"] = stage;
    m["config_hash"] = stage_hash(cfg, stage);
    nlohmann::ordered_json up = nlohmann::ordered_json::object();
    for (const auto& u : stage_closure(stage))
      if (u != stage) up[u] = stage_hash(cfg, u);
    m["upstream"] = up;
    m["config"] = config_json(cfg);
    nlohmann::ordered_json files = nlohmann::ordered_json::object();
    for (const auto& f : outputs) files[f] = file_digest(ws / f);
    m["outputs"] = files;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    m["wall_seconds"] = secs;
    m["peak_rss_kb"] = peak_rss_kb();
    std::ofstream out(ws.manifest(stage));
    if (!out) throw Error("cannot write " + ws.manifest(stage).string());
    out << m.dump(2) << '\n';
    log << "[" << stage << "] done in " << format_fixed(secs, 2) << " s\n";
    return result;
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(stage, e.what());
  }
}

inline std::map<std::string, std::string> document_texts(const Corpus& c) {
  std::map<std::string, std::string> docs;
  for (const auto& [id, p] : c) docs.emplace(id, p.text());
  return docs;
}

inline Corpus load_stage_corpus(const Workspace& ws, const std::string& name) {
  return load_corpus(ws / name).corpus;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

inline EmbeddingTable restrict_to(const EmbeddingTable& source, const std::vector<std::string>& ids,
                                  const std::string& what) {
  for (const auto& id : ids)
    if (!source.contains(id)) throw Error(what + " has no vector for paper '" + id + "'");
  return EmbeddingTable(ids, source.gather(ids));
}

inline std::string primary_k_key(const RunConfig& cfg) {
  const auto& ks = cfg.eval.ks;
  return std::to_string(std::find(ks.begin(), ks.end(), 10) != ks.end() ? 10 : *std::min_element(ks.begin(), ks.end()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stages

inline StatsReport cmd_prepare(const RunConfig& cfg, std::ostream& log) {
  return detail::run_stage(cfg, "prepare", log, [&](const Workspace& ws, std::vector<std::string>& outputs) {
    if (cfg.paths.corpus.empty()) throw ConfigError("paths.corpus is not set");
    auto parsed = load_corpus(cfg.paths.corpus);
    parsed.report.print(log);
    if (parsed.corpus.empty()) throw Error("corpus " + cfg.paths.corpus + " has no usable records");
    const auto pruned = prune(parsed.corpus, cfg.prune);
    const auto split = temporal_split(pruned, cfg.split);
    if (split.train.empty()) throw Error("no training papers after pruning and splitting");
    if (split.ground_truth.empty()) throw Error("no test paper cites a training paper");
    const auto stats = corpus_stats(split);

    save_corpus(ws / "train.jsonl", split.train);
    save_corpus(ws / "test.jsonl", split.test);
    {
      std::ofstream gt(ws / "ground_truth.tsv");
      write_ground_truth(gt, split.ground_truth);
    }
    nlohmann::ordered_json j;
    auto part = [](const PartitionStats& s) {
      return nlohmann::ordered_json{{"papers", s.papers}, {"citations", s.citations}, {"avg_citations", s.avg_citations}};
    };
    j["records"] = {{"lines", parsed.report.lines}, {"accepted", parsed.report.accepted},
                    {"incomplete", parsed.report.incomplete}, {"malformed", parsed.report.malformed},
                    {"duplicate", parsed.report.duplicate}};
    j["pruned"] = {{"papers", pruned.size()}, {"citations", pruned.edge_count()}};
    j["train"] = part(stats.train);
    j["test"] = part(stats.test);
    detail::write_text_file(ws / "stats.json", j.dump(2) + "\n");
    log << "[prepare] pruned " << pruned.size() << " papers / " << pruned.edge_count() << " citations; train "
        << stats.train.papers << " / " << stats.train.citations << "; test " << stats.test.papers << " / "
        << stats.test.citations << "\n";
    outputs = {"train.jsonl", "test.jsonl", "ground_truth.tsv", "stats.json"};
    return stats;
  });
}

inline void cmd_embed_text(const RunConfig& cfg, std::ostream& log) {
  detail::run_stage(cfg, "embed-text", log, [&](const Workspace& ws, std::vector<std::string>& outputs) {
    const auto train = detail::document_texts(detail::load_stage_corpus(ws, "train.jsonl"));
    const auto test = detail::document_texts(detail::load_stage_corpus(ws, "test.jsonl"));
    const auto tfidf = fit_tfidf(train, cfg.text.min_df);
    {
      std::ofstream out(ws / "tfidf_vocab.tsv");
      write_tfidf(out, tfidf);
    }
    outputs.push_back("tfidf_vocab.tsv");
    log << "[embed-text] TF-IDF vocabulary: " << tfidf.dim() << " terms\n";
    const Representation tf_train = tfidf_embed_all(train, tfidf), tf_test = tfidf_embed_all(test, tfidf);
    fs::remove(ws / "tfidf_train.sparse");
    fs::remove(ws / "tfidf_test.sparse");
    if (cfg.text.model == TextModel::tfidf) {
      outputs.push_back(ws.save("text_train", tf_train));
      outputs.push_back(ws.save("text_test", tf_test));
    } else {
      const auto ext = load_dense_embeddings(cfg.text.external_path);
      log << "[embed-text] external embeddings: " << ext.size() << " x " << ext.dim() << "\n";
      std::vector<std::string> train_ids, test_ids;
      for (const auto& [id, _] : train) train_ids.push_back(id);
      for (const auto& [id, _] : test) test_ids.push_back(id);
      outputs.push_back(ws.save("text_train", detail::restrict_to(ext, train_ids, cfg.text.external_path)));
      outputs.push_back(ws.save("text_test", detail::restrict_to(ext, test_ids, cfg.text.external_path)));
      outputs.push_back(ws.save("tfidf_train", tf_train));
      outputs.push_back(ws.save("tfidf_test", tf_test));
    }
    return 0;
  });
}

inline EmbeddingTable train_node_embeddings(const CitationGraph& graph, const RunConfig& cfg, std::ostream& log,
                                            const std::string& stage) {
  const auto walks = generate_walks(graph, cfg.walk_config());
  log << "[" << stage << "] " << walks.size() << " walks over " << graph.size() << " nodes\n";
  return train_skipgram(walks, graph.nodes(), cfg.skipgram_config());
}

inline void cmd_embed_graph(const RunConfig& cfg, std::ostream& log) {
  detail::run_stage(cfg, "embed-graph", log, [&](const Workspace& ws, std::vector<std::string>& outputs) {
    const auto graph = build_citation_graph(detail::load_stage_corpus(ws, "train.jsonl"));
    const auto nodes = train_node_embeddings(graph, cfg, log, "embed-graph");
    save_embeddings(ws / "node_train.emb", nodes);
    outputs.push_back("node_train.emb");
    return 0;
  });
}

inline void cmd_train_fusion(const RunConfig& cfg, std::ostream& log) {
  detail::run_stage(cfg, "train-fusion", log, [&](const Workspace& ws, std::vector<std::string>& outputs) {
    const auto text = ws.load("text_train");
    const auto& ids = ids_of(text);
    const auto nodes = detail::restrict_to(load_dense_embeddings(ws / "node_train.emb"), ids, "node_train.emb");
    FusionModel model;
    switch (cfg.fusion.method) {
      case FusionMethod::none: log << "[train-fusion] method none: no model fitted\n"; break;
      case FusionMethod::cca: {
        auto m = fit_cca(dense_rows(text, ids), nodes.matrix(), cfg.cca_options());
        log << "[train-fusion] CCA total correlation " << format_fixed(m.correlations.sum(), 6) << "\n";
        model = std::move(m);
        break;
      }
      case FusionMethod::dcca:
        model = fit_dcca(dense_rows(text, ids), nodes.matrix(), cfg.dcca_options(), [&](int epoch, double obj) {
          log << "[train-fusion] DCCA epoch " << epoch << " objective " << format_fixed(obj, 6) << "\n";
        });
        break;
    }
    save_fusion_model(ws / "fusion_model.txt", model);
    outputs.push_back("fusion_model.txt");
    outputs.push_back(ws.save("train_fused", embed_train_set(text, nodes, model, cfg.strategy())));
    return 0;
  });
}

namespace detail {

inline TestEmbeddings infer_test(const RunConfig& cfg, const Workspace& ws, const FusionModel& model,
                                 const FusionStrategy& strategy) {
  const auto test_text = ws.load("text_test");
  const auto train_text = ws.load("text_train");
  const auto nodes = load_dense_embeddings(ws / "node_train.emb");
  if (cfg.inference.neighbor_text == NeighborText::tfidf && cfg.text.model == TextModel::external)
    return embed_test_set(test_text, ws.load("tfidf_test"), ws.load("tfidf_train"), nodes, model, strategy,
                          cfg.inference_options());
  return embed_test_set(test_text, train_text, nodes, model, strategy, cfg.inference_options());
}

}  // namespace detail

inline void cmd_infer(const RunConfig& cfg, std::ostream& log) {
  detail::run_stage(cfg, "infer", log, [&](const Workspace& ws, std::vector<std::string>& outputs) {
    const auto model = load_fusion_model(ws / "fusion_model.txt");
    const auto out = detail::infer_test(cfg, ws, model, cfg.strategy());
    outputs.push_back(ws.save("test_fused", out.fused));
    fs::remove(ws / "test_node_estimates.emb");
    if (!out.node_estimates.empty()) {
      save_embeddings(ws / "test_node_estimates.emb", out.node_estimates);
      outputs.push_back("test_node_estimates.emb");
    }
    log << "[infer] " << size_of(out.fused) << " test papers, fused width " << dim_of(out.fused) << "\n";
    return 0;
  });
}

namespace detail {

inline std::vector<RankedList> rank_disjoint(const Representation& queries, const Representation& candidates,
                                             std::size_t k) {
  const auto& cand = ids_of(candidates);
  const std::set<std::string> pool(cand.begin(), cand.end());
  for (const auto& q : ids_of(queries))
    if (pool.count(q)) throw Error("query paper '" + q + "' is also a retrieval candidate");
  return rank_all(queries, candidates, k);
}

inline void write_report(const Workspace& ws, const MetricsReport& r, const std::string& prefix,
                         std::vector<std::string>& outputs) {
  write_text_file(ws / (prefix + "metrics.json"), r.to_json().dump(2) + "\n");
  outputs.push_back(prefix + "metrics.json");
  for (auto k : r.ks) {
    const auto name = prefix + "ap@" + std::to_string(k) + ".tsv";
    std::ofstream out(ws / name);
    r.write_ap(out, k);
    outputs.push_back(name);
  }
}

inline std::string summary_line(const MetricsReport& r) {
  std::string s;
  for (auto k : r.ks) {
    const auto& m = r.per_k.at(k);
    s += " P@" + std::to_string(k) + "=" + format_fixed(m.precision, 4) + " R@" + std::to_string(k) + "=" +
         format_fixed(m.recall, 4) + " MAP@" + std::to_string(k) + "=" + format_fixed(m.map, 4);
  }
  return s;
}

}  // namespace detail

inline void cmd_rank(const RunConfig& cfg, std::ostream& log) {
  detail::run_stage(cfg, "rank", log, [&](const Workspace& ws, std::vector<std::string>& outputs) {
    const auto recs = detail::rank_disjoint(ws.load("test_fused"), ws.load("train_fused"), cfg.max_k());
    std::ofstream out(ws / "recommendations.tsv");
    write_recommendations(out, recs);
    out.close();
    outputs.push_back("recommendations.tsv");
    log << "[rank] " << recs.size() << " lists of up to " << cfg.max_k() << "\n";
    return 0;
  });
}

inline MetricsReport cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  return detail::run_stage(cfg, "evaluate", log, [&](const Workspace& ws, std::vector<std::string>& outputs) {
    std::ifstream rin(ws / "recommendations.tsv"), tin(ws / "ground_truth.tsv");
    if (!rin || !tin) throw LoadError("missing recommendations.tsv or ground_truth.tsv in " + ws.dir().string());
    const auto recs = read_recommendations(rin, "recommendations.tsv");
    const auto truth = read_ground_truth(tin, "ground_truth.tsv");
    auto report = evaluate_run(recs, truth, cfg.eval.ks, cfg.eval_options());
    detail::write_report(ws, report, "", outputs);
    log << "[evaluate] " << report.n_queries << " queries:" << detail::summary_line(report) << "\n";
    return report;
  });
}

inline MetricsReport cmd_pipeline(const RunConfig& cfg, std::ostream& log) {
  cmd_prepare(cfg, log);
  cmd_embed_text(cfg, log);
  cmd_embed_graph(cfg, log);
  cmd_train_fusion(cfg, log);
  cmd_infer(cfg, log);
  cmd_rank(cfg, log);
  return cmd_evaluate(cfg, log);
}

// ---------------------------------------------------------------------------
// Grid searches

inline const std::vector<double>& pq_grid() {
  static const std::vector<double> g = {0.25, 0.5, 1.0, 2.0, 4.0};
  return g;
}

inline const std::vector<double>& alpha_grid() {
  static const std::vector<double> g = {0.1, 0.25, 0.5, 0.75, 0.9};
  return g;
}

struct GridPqRow {
  double p = 0, q = 0;
  MetricsReport report;
};

struct GridPqResult {
  std::vector<GridPqRow> rows;  ///< p-major, ascending
  std::size_t best = 0;
  std::size_t k = 10;           ///< cutoff whose MAP picks the best cell
};

/// Index of the highest MAP@k; ties go to the smaller p, then smaller q
/// (rows arrive in that order, so the first maximum wins).
inline std::size_t best_grid_cell(const std::vector<GridPqRow>& rows, std::size_t k) {
  if (rows.empty()) throw ConfigError("empty grid");
  std::size_t best = 0;
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].report.per_k.at(k).map > rows[best].report.per_k.at(k).map) best = i;
  return best;
}

/// Node2vec over the p, q grid with node-only retrieval for each cell.
inline GridPqResult cmd_grid_pq(const RunConfig& cfg, std::ostream& log) {
  return detail::run_stage(cfg, "grid-pq", log, [&](const Workspace& ws, std::vector<std::string>& outputs) {
    const auto graph = build_citation_graph(detail::load_stage_corpus(ws, "train.jsonl"));
    std::ifstream tin(ws / "ground_truth.tsv");
    const auto truth = read_ground_truth(tin, "ground_truth.tsv");
    const bool tfidf_neighbors =
        cfg.inference.neighbor_text == NeighborText::tfidf && cfg.text.model == TextModel::external;
    const auto test_text = ws.load("text_test");
    const auto neighbor_test = tfidf_neighbors ? ws.load("tfidf_test") : test_text;
    const auto neighbor_train = ws.load(tfidf_neighbors ? "tfidf_train" : "text_train");
    GridPqResult result;
    result.k = static_cast<std::size_t>(std::stoul(detail::primary_k_key(cfg)));
    for (double p : pq_grid())
      for (double q : pq_grid()) {
        RunConfig cell = cfg;
        cell.graph.method = WalkMethod::node2vec;
        cell.graph.p = p;
        cell.graph.q = q;
        const auto nodes = train_node_embeddings(graph, cell, log, "grid-pq");
        // Node-only retrieval: estimated test vectors against training vectors.
        const auto te = embed_test_set(test_text, neighbor_test, neighbor_train, nodes, {},
                                       {FusionKind::node_only}, cfg.inference_options());
        const auto recs = detail::rank_disjoint(te.fused, Representation(nodes), cfg.max_k());
        GridPqRow row{p, q, evaluate_run(recs, truth, cfg.eval.ks, cfg.eval_options())};
        log << "[grid-pq] p=" << format_double(p) << " q=" << format_double(q) << detail::summary_line(row.report)
            << "\n";
        result.rows.push_back(std::move(row));
      }
    result.best = best_grid_cell(result.rows, result.k);

    std::ostringstream tsv;
    tsv << "p\tq";
    for (auto k : cfg.eval.ks) tsv << "\tprecision@" << k << "\trecall@" << k << "\tmap@" << k;
    tsv << '\n';
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : result.rows) {
      tsv << format_double(r.p) << '\t' << format_double(r.q);
      for (auto k : r.report.ks) {
        const auto& m = r.report.per_k.at(k);
        tsv << '\t' << format_double(m.precision) << '\t' << format_double(m.recall) << '\t' << format_double(m.map);
      }
      tsv << '\n';
      auto j = r.report.to_json();
      j["p"] = r.p;
      j["q"] = r.q;
      rows.push_back(j);
    }
    const auto& b = result.rows[result.best];
    nlohmann::ordered_json summary;
    summary["selection"] = "max map@" + std::to_string(result.k) + ", ties to smaller p then smaller q";
    summary["best"] = {{"p", b.p}, {"q", b.q}, {"map@" + std::to_string(result.k), b.report.per_k.at(result.k).map}};
    summary["rows"] = rows;
    detail::write_text_file(ws / "grid_pq.tsv", tsv.str());
    detail::write_text_file(ws / "grid_pq.json", summary.dump(2) + "\n");
    outputs = {"grid_pq.tsv", "grid_pq.json"};
    log << "[grid-pq] best p=" << format_double(b.p) << " q=" << format_double(b.q) << "\n";
    return result;
  });
}

struct GridAlphaRow {
  double alpha = 0;
  MetricsReport report;
};

/// Linear combination over the alpha grid using the trained fusion model.
inline std::vector<GridAlphaRow> cmd_grid_alpha(const RunConfig& cfg, std::ostream& log) {
  return detail::run_stage(cfg, "grid-alpha", log, [&](const Workspace& ws, std::vector<std::string>& outputs) {
    const auto model = load_fusion_model(ws / "fusion_model.txt");
    if (!has_projection(model))
      throw Error("the alpha grid needs a fitted CCA or DCCA model (fusion.method is none)");
    std::ifstream tin(ws / "ground_truth.tsv");
    const auto truth = read_ground_truth(tin, "ground_truth.tsv");
    const auto train_text = ws.load("text_train");
    const auto nodes = load_dense_embeddings(ws / "node_train.emb");
    // The node estimates do not depend on alpha; compute them once.
    const auto base = detail::infer_test(cfg, ws, model, {FusionKind::projected_concat});
    const auto test_text = ws.load("text_test");
    const auto& test_ids = ids_of(test_text);
    const Eigen::MatrixXd test_nodes = base.node_estimates.gather(test_ids);

    std::vector<GridAlphaRow> rows;
    std::ostringstream tsv;
    tsv << "alpha";
    for (auto k : cfg.eval.ks) tsv << "\tprecision@" << k << "\trecall@" << k << "\tmap@" << k;
    tsv << '\n';
    for (double a : alpha_grid()) {
      const FusionStrategy s{FusionKind::linear_combination, a};
      const auto train = embed_train_set(train_text, nodes, model, s);
      const auto test = detail::fuse_views(test_text, test_ids, test_nodes, model, s, "grid-alpha");
      const auto recs = detail::rank_disjoint(test, train, cfg.max_k());
      GridAlphaRow row{a, evaluate_run(recs, truth, cfg.eval.ks, cfg.eval_options())};
      detail::write_report(ws, row.report, "alpha_" + format_double(a) + "_", outputs);
      tsv << format_double(a);
      for (auto k : row.report.ks) {
        const auto& m = row.report.per_k.at(k);
        tsv << '\t' << format_double(m.precision) << '\t' << format_double(m.recall) << '\t' << format_double(m.map);
      }
      tsv << '\n';
      log << "[grid-alpha] alpha=" << format_double(a) << detail::summary_line(row.report) << "\n";
      rows.push_back(std::move(row));
    }
    detail::write_text_file(ws / "grid_alpha.tsv", tsv.str());
    outputs.push_back("grid_alpha.tsv");
    return rows;
  });
}

}  // namespace citerec
