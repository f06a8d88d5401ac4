#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "citerec/pipeline.hpp"

using namespace citerec;

namespace {

RunConfig parse(const std::string& text, RunConfig base = {}) {
  std::stringstream in(text);
  return parse_config(in, std::move(base));
}

}  // namespace

TEST(RunConfig, DefaultsAreTheReferenceSettings) {
  RunConfig c;
  EXPECT_EQ(c.prune.min_in, 15);
  EXPECT_EQ(c.prune.min_out, 20);
  EXPECT_FALSE(c.prune.iterate);
  EXPECT_EQ(c.split.train_end_year, 2013);
  EXPECT_EQ(c.split.test_start_year, 2014);
  EXPECT_EQ(c.split.test_end_year, 2017);
  EXPECT_EQ(c.text.min_df, 5u);
  EXPECT_EQ(c.graph.walks_per_node, 200);
  EXPECT_EQ(c.graph.walk_length, 80);
  EXPECT_EQ(c.graph.window, 10);
  EXPECT_EQ(c.graph.dim, 128);
  EXPECT_EQ(c.graph.p, 4.0);
  EXPECT_EQ(c.graph.q, 2.0);
  EXPECT_EQ(c.fusion.d, 128);
  EXPECT_EQ(c.fusion.hidden, (std::vector<Eigen::Index>{128}));
  EXPECT_EQ(c.fusion.activation, Activation::sigmoid);
  EXPECT_EQ(c.fusion.epochs, 20);
  EXPECT_EQ(c.fusion.batch, 256);
  EXPECT_EQ(c.inference.neighbors, 5u);
  EXPECT_FALSE(c.inference.weighted);
  EXPECT_EQ(c.eval.ks, (std::vector<std::size_t>{10, 15, 20}));
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(alpha_grid(), (std::vector<double>{0.1, 0.25, 0.5, 0.75, 0.9}));
  EXPECT_EQ(pq_grid(), (std::vector<double>{0.25, 0.5, 1, 2, 4}));
}

TEST(RunConfig, RegistryIsCompleteAndConsistent) {
  std::set<std::string> names;
  RunConfig c;
  for (const auto& k : config_keys()) {
    EXPECT_TRUE(names.insert(k.name).second) << k.name;
    EXPECT_NE(k.name.find('.'), std::string::npos) << k.name;
    EXPECT_FALSE(k.help.empty()) << k.name;
    // Setting a key to its own printed value is a no-op.
    const auto before = config_text(c);
    set_config_value(c, k.name, k.get(c));
    EXPECT_EQ(config_text(c), before) << k.name;
  }
  EXPECT_GE(names.size(), 40u);
}

TEST(RunConfig, TextRoundTrip) {
  RunConfig c;
  c.paths.corpus = "/data/dblp v10.jsonl";
  c.graph.p = 0.25;
  c.graph.direction = WalkDirection::undirected;
  c.fusion.method = FusionMethod::cca;
  c.fusion.hidden = {};
  c.fusion.reg = 1.0 / 3.0;
  c.fusion.strategy = FusionKind::linear_combination;
  c.eval.ks = {5, 50};
  c.run.seed = 18446744073709551615ULL;
  const auto text = config_text(c);
  const auto back = parse(text);
  EXPECT_EQ(config_text(back), text);
  EXPECT_EQ(back.fusion.reg, 1.0 / 3.0);
  EXPECT_TRUE(back.fusion.hidden.empty());
  EXPECT_EQ(back.paths.corpus, "/data/dblp v10.jsonl");

  std::ostringstream documented;
  write_config(documented, c, true);
  EXPECT_EQ(config_text(parse(documented.str())), text);
}

TEST(RunConfig, FileOverridesOnlyNamedKeys) {
  auto c = parse("[graph]\np = 1\nq = 0.5\n\n[fusion]\nmethod = cca\nhidden = 64, 32\n");
  EXPECT_EQ(c.graph.p, 1.0);
  EXPECT_EQ(c.graph.q, 0.5);
  EXPECT_EQ(c.graph.walk_length, 80);
  EXPECT_EQ(c.fusion.method, FusionMethod::cca);
  EXPECT_EQ(c.fusion.hidden, (std::vector<Eigen::Index>{64, 32}));
}

TEST(RunConfig, RejectsUnknownAndMalformedInput) {
  EXPECT_THROW(parse("[graph]\npp = 1\n"), ConfigError);
  EXPECT_THROW(parse("[grpah]\np = 1\n"), ConfigError);
  EXPECT_THROW(parse("seed = 3\n"), ConfigError);
  EXPECT_THROW(parse("[graph]\np = four\n"), ConfigError);
  EXPECT_THROW(parse("[graph]\ndim = 12.5\n"), ConfigError);
  EXPECT_THROW(parse("[fusion]\nmethod = pca\n"), ConfigError);
  EXPECT_THROW(parse("[fusion]\nstandardize = maybe\n"), ConfigError);
  EXPECT_THROW(parse("[graph\np = 1\n"), ConfigError);
  try {
    parse("[graph]\nwalk_length = x\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("graph.walk_length"), std::string::npos) << e.what();
  }
}

TEST(RunConfig, Validation) {
  auto bad = [](auto mutate) {
    RunConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  bad([](RunConfig& c) { c.fusion.method = FusionMethod::none; });  // projected_concat needs a model
  bad([](RunConfig& c) { c.fusion.alpha = 1.5; });
  bad([](RunConfig& c) { c.split.test_start_year = 2013; });
  bad([](RunConfig& c) { c.graph.p = 0; });
  bad([](RunConfig& c) { c.graph.dim = 0; });
  bad([](RunConfig& c) { c.text.model = TextModel::external; });
  bad([](RunConfig& c) { c.eval.ks.clear(); });
  bad([](RunConfig& c) { c.inference.neighbors = 0; });
  RunConfig ok;
  ok.fusion.method = FusionMethod::none;
  ok.fusion.strategy = FusionKind::simple_concat;
  EXPECT_NO_THROW(ok.validate());
}

TEST(RunConfig, DeterministicForcesOneWorker) {
  RunConfig c;
  c.graph.workers = 4;
  EXPECT_EQ(c.walk_config().workers, 4);
  c.run.deterministic = true;
  EXPECT_EQ(c.walk_config().workers, 1);
  EXPECT_EQ(c.skipgram_config().workers, 1);
  EXPECT_EQ(c.walk_config().p, 4.0);
  EXPECT_EQ(c.skipgram_config().dim, 128);
  EXPECT_EQ(c.dcca_options().hidden, c.fusion.hidden);
}

TEST(StageHash, ChangesFollowTheDependencyGraph) {
  const RunConfig base;
  auto changed = [&](auto mutate) {
    RunConfig c = base;
    mutate(c);
    std::set<std::string> out;
    for (const auto& s : pipeline_stages())
      if (stage_hash(c, s.name) != stage_hash(base, s.name)) out.insert(s.name);
    return out;
  };
  using S = std::set<std::string>;
  const S after_graph{"embed-graph", "train-fusion", "infer", "rank", "evaluate", "grid-alpha"};
  EXPECT_EQ(changed([](RunConfig& c) { c.graph.dim = 64; }), (S{"embed-graph", "train-fusion", "infer", "rank",
                                                                  "evaluate", "grid-alpha", "grid-pq"}));
  // p and q are swept by the grid, so they do not invalidate it.
  EXPECT_EQ(changed([](RunConfig& c) { c.graph.p = 1; }), after_graph);
  EXPECT_EQ(changed([](RunConfig& c) { c.prune.min_in = 3; }),
            (S{"prepare", "embed-text", "embed-graph", "train-fusion", "infer", "rank", "evaluate", "grid-pq",
               "grid-alpha"}));
  EXPECT_EQ(changed([](RunConfig& c) { c.text.min_df = 2; }),
            (S{"embed-text", "train-fusion", "infer", "rank", "evaluate", "grid-pq", "grid-alpha"}));
  EXPECT_EQ(changed([](RunConfig& c) { c.eval.pad = true; }), (S{"evaluate", "grid-pq", "grid-alpha"}));
  EXPECT_EQ(changed([](RunConfig& c) { c.inference.neighbors = 3; }), (S{"infer", "rank", "evaluate", "grid-pq",
                                                                         "grid-alpha"}));
  EXPECT_TRUE(changed([](RunConfig& c) { c.paths.work_dir = "elsewhere"; }).empty());
  // Deterministic mode only matters through the worker count.
  EXPECT_TRUE(changed([](RunConfig& c) { c.run.deterministic = true; }).empty());
  EXPECT_FALSE(changed([](RunConfig& c) { c.graph.workers = 4; }).empty());
  for (const auto& s : pipeline_stages()) EXPECT_EQ(stage_hash(base, s.name).size(), 16u);
}

TEST(StageClosure, ListsPredecessorsInOrder) {
  EXPECT_EQ(stage_closure("train-fusion"),
            (std::vector<std::string>{"prepare", "embed-text", "embed-graph", "train-fusion"}));
  EXPECT_EQ(stage_closure("prepare"), (std::vector<std::string>{"prepare"}));
  EXPECT_THROW(stage_closure("cook"), ConfigError);
}
