// citerec: command-line driver for the recommendation pipeline.
//
//   citerec pipeline --config run.ini
//   citerec prepare --paths.corpus dblp.jsonl --paths.work_dir work
//   citerec grid-pq --config run.ini --run.deterministic true
//
// Every config key is also a flag (--section.key VALUE); flags override the
// config file. Exit status: 0 on success, 1 for a failed stage, 2 for a bad
// configuration or command line.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "citerec/citerec.hpp"

namespace {

using namespace citerec;

struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;  // key -> raw flag text
  bool deterministic = false;

  void attach(CLI::App& cmd) {
    cmd.add_option("-c,--config", file, "run configuration file (INI)");
    cmd.add_flag("--deterministic", deterministic, "shorthand for --run.deterministic true");
    for (const auto& k : config_keys()) {
      auto* opt = cmd.add_option_function<std::string>(
          "--" + k.name, [this, name = k.name](const std::string& v) { values[name] = v; }, k.help);
      opt->type_name("VALUE");
    }
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!file.empty()) cfg = load_config(file);
    for (const auto& [k, v] : values) set_config_value(cfg, k, v);
    if (deterministic) cfg.run.deterministic = true;
    return cfg;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"Multi-view citation recommendation: text and citation-graph embeddings fused by (deep) CCA"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "citerec 1.0");

  struct Verb {
    const char* name;
    const char* help;
  };
  const Verb verbs[] = {
      {"prepare", "parse, prune and split the corpus"},
      {"embed-text", "fit TF-IDF (or load external vectors) for train and test papers"},
      {"embed-graph", "random walks and skip-gram over the training citation graph"},
      {"train-fusion", "fit CCA or DCCA and fuse the training views"},
      {"infer", "estimate test node vectors and fuse the test views"},
      {"rank", "rank training papers for every test paper"},
      {"evaluate", "precision, recall and MAP at each cutoff"},
      {"pipeline", "run every stage from prepare to evaluate"},
      {"grid-pq", "node2vec grid over p and q with node-only retrieval"},
      {"grid-alpha", "linear-combination grid over alpha"},
      {"config", "print the resolved configuration with documentation"},
  };

  std::map<std::string, ConfigFlags> flags;
  std::map<std::string, CLI::App*> commands;
  for (const auto& v : verbs) {
    auto* cmd = app.add_subcommand(v.name, v.help);
    flags[v.name].attach(*cmd);
    commands[v.name] = cmd;
  }

  SyntheticOptions synth;
  std::string synth_out;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic two-signal corpus");
  synth_cmd->add_option("-o,--out", synth_out, "output corpus file")->required();
  synth_cmd->add_option("--papers", synth.papers, "number of papers")->capture_default_str();
  synth_cmd->add_option("--topics", synth.topics, "text topics")->capture_default_str();
  synth_cmd->add_option("--communities", synth.communities, "graph communities")->capture_default_str();
  synth_cmd->add_option("--references", synth.references, "references drawn per paper")->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed, "generator seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  if (synth_cmd->parsed()) {
    const auto corpus = make_synthetic_corpus(synth);
    std::ofstream out(synth_out);
    if (!out) throw Error("cannot write " + synth_out);
    write_corpus(out, Corpus(corpus.papers));
    std::cerr << "wrote " << corpus.papers.size() << " papers to " << synth_out << "\n";
    return 0;
  }

  std::string verb;
  for (const auto& [name, cmd] : commands)
    if (cmd->parsed()) verb = name;
  const RunConfig cfg = flags[verb].resolve();
  auto& log = std::cerr;

  if (verb == "config") {
    write_config(std::cout, cfg, true);
    return 0;
  }
  if (verb == "prepare") cmd_prepare(cfg, log);
  else if (verb == "embed-text") cmd_embed_text(cfg, log);
  else if (verb == "embed-graph") cmd_embed_graph(cfg, log);
  else if (verb == "train-fusion") cmd_train_fusion(cfg, log);
  else if (verb == "infer") cmd_infer(cfg, log);
  else if (verb == "rank") cmd_rank(cfg, log);
  else if (verb == "evaluate") std::cout << cmd_evaluate(cfg, log).to_json().dump(2) << "\n";
  else if (verb == "pipeline") std::cout << cmd_pipeline(cfg, log).to_json().dump(2) << "\n";
  else if (verb == "grid-pq") {
    const auto r = cmd_grid_pq(cfg, log);
    const auto& b = r.rows[r.best];
    std::cout << "best p=" << format_double(b.p) << " q=" << format_double(b.q) << " map@" << r.k << "="
              << format_double(b.report.per_k.at(r.k).map) << "\n";
  } else if (verb == "grid-alpha") {
    for (const auto& row : cmd_grid_alpha(cfg, log))
      std::cout << "alpha=" << format_double(row.alpha) << " " << row.report.to_json().dump() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const citerec::PipelineError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const citerec::ConfigError& e) {
    std::cerr << "error: [config] " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
