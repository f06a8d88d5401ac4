#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "citerec/retrieval.hpp"

using namespace citerec;

namespace {

EmbeddingTable random_table(Rng& rng, std::size_t n, Eigen::Index dim, const std::string& prefix = "c") {
  EmbeddingTable t(dim);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::RowVectorXd v(dim);
    for (Eigen::Index j = 0; j < dim; ++j) v(j) = rng.normal();
    t.add(prefix + std::to_string(i), v);
  }
  return t;
}

// Exhaustive oracle: score everything, full sort, cut at k.
std::vector<ScoredId> brute_force(const Eigen::RowVectorXd& q, const EmbeddingTable& c, std::size_t k) {
  std::vector<ScoredId> all;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double s = q.dot(c.row(i)) / (q.norm() * c.row(i).norm());
    all.push_back({c.ids()[i], std::clamp(s, -1.0, 1.0)});
  }
  std::sort(all.begin(), all.end(), [](const ScoredId& a, const ScoredId& b) {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

std::vector<std::string> ids(const RankedList& l) {
  std::vector<std::string> out;
  for (const auto& s : l.items) out.push_back(s.id);
  return out;
}

}  // namespace

TEST(Cosine, BasicValues) {
  std::vector<double> a{1, 0}, b{0, 1}, c{-1, 0}, z{0, 0};
  EXPECT_EQ(cosine(a, a), 1.0);
  EXPECT_EQ(cosine(a, b), 0.0);
  EXPECT_EQ(cosine(a, c), -1.0);
  EXPECT_EQ(cosine(a, z), 0.0);
  std::vector<double> big{1e200, 1e200};
  EXPECT_LE(cosine(big, std::vector<double>{1, 1}), 1.0);
  EXPECT_THROW(cosine(a, std::vector<double>{1, 2, 3}), ConfigError);

  SparseVector sa{5, {{1, 2.0}, {3, 1.0}}}, sb{5, {{3, 4.0}}}, sz{5, {}};
  EXPECT_NEAR(cosine(sa, sb), 1.0 / std::sqrt(5.0), 1e-15);
  EXPECT_EQ(cosine(sa, sz), 0.0);
}

TEST(Rank, QueryEqualToCandidateComesFirst) {
  Rng rng(1);
  auto c = random_table(rng, 20, 6);
  Eigen::RowVectorXd q = c.row(7);
  auto l = rank("q", q, DenseCandidates(c), 5);
  EXPECT_EQ(l.items[0].id, "c7");
  EXPECT_NEAR(l.items[0].score, 1.0, 1e-15);
  EXPECT_FALSE(l.truncated);
}

TEST(Rank, MatchesExhaustiveSort) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto c = random_table(rng, 5 + rng.below(40), 4);
    Eigen::RowVectorXd q = Eigen::RowVectorXd::Zero(4);
    for (Eigen::Index j = 0; j < 4; ++j) q(j) = rng.normal();
    const std::size_t k = 1 + rng.below(10);
    auto l = rank("q", q, DenseCandidates(c), k);
    auto expected = brute_force(q, c, k);
    ASSERT_EQ(l.items.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
      EXPECT_EQ(l.items[i].id, expected[i].id);
      EXPECT_NEAR(l.items[i].score, expected[i].score, 1e-12);
    }
  }
}

TEST(Rank, HandBuiltTopThree) {
  Eigen::MatrixXd m(5, 2);
  m << 1, 0, 0.9, 0.1, 0, 1, -1, 0, 0.5, 0.5;
  EmbeddingTable c({"a", "b", "c", "d", "e"}, m);
  auto l = rank("q", Eigen::RowVector2d(1, 0), DenseCandidates(c), 3);
  EXPECT_EQ(ids(l), (std::vector<std::string>{"a", "b", "e"}));
}

TEST(Rank, TiesBreakByIdAndIgnoreCandidateOrder) {
  Eigen::MatrixXd m(4, 2);
  m << 1, 1, 2, 2, 1, 1, 0, 1;
  EmbeddingTable fwd({"z", "b", "m", "a"}, m);
  EmbeddingTable rev({"a", "m", "b", "z"}, m.colwise().reverse());
  auto l1 = rank("q", Eigen::RowVector2d(1, 1), DenseCandidates(fwd), 4);
  auto l2 = rank("q", Eigen::RowVector2d(1, 1), DenseCandidates(rev), 4);
  EXPECT_EQ(ids(l1), (std::vector<std::string>{"b", "m", "z", "a"}));
  EXPECT_EQ(l1.items, l2.items);
}

TEST(Rank, ScaleInvarianceAndPrefixProperty) {
  Rng rng(3);
  auto c = random_table(rng, 60, 8);
  Eigen::RowVectorXd q(8);
  for (Eigen::Index j = 0; j < 8; ++j) q(j) = rng.normal();
  DenseCandidates dc(c);
  auto base = rank("q", q, dc, 20);
  auto scaled = rank("q", Eigen::RowVectorXd(10.0 * q), dc, 20);
  EXPECT_EQ(ids(base), ids(scaled));
  for (std::size_t k = 1; k < 20; ++k) {
    auto shorter = rank("q", q, dc, k);
    EXPECT_TRUE(std::equal(shorter.items.begin(), shorter.items.end(), base.items.begin()));
  }
  // Scores never increase down the list.
  for (std::size_t i = 1; i < base.items.size(); ++i) EXPECT_GE(base.items[i - 1].score, base.items[i].score);
}

TEST(Rank, KBeyondCandidatesReturnsAllFlagged) {
  Rng rng(4);
  auto c = random_table(rng, 3, 2);
  auto l = rank("q", Eigen::RowVector2d(1, 0), DenseCandidates(c), 10);
  EXPECT_EQ(l.items.size(), 3u);
  EXPECT_TRUE(l.truncated);
  EXPECT_THROW(rank("q", Eigen::RowVector2d(1, 0), DenseCandidates(c), 0), ConfigError);
  EXPECT_THROW(rank("q", Eigen::RowVector3d(1, 0, 0), DenseCandidates(c), 2), ConfigError);
}

TEST(Rank, ZeroVectorsRankLast) {
  Eigen::MatrixXd m(3, 2);
  m << 0, 0, -1, 0.2, 1, 0;
  EmbeddingTable c({"a", "b", "c"}, m);
  auto l = rank("q", Eigen::RowVector2d(1, 0), DenseCandidates(c), 3);
  EXPECT_EQ(ids(l), (std::vector<std::string>{"c", "a", "b"}));
}

TEST(Rank, SparseAgreesWithDense) {
  Rng rng(5);
  SparseTable st;
  st.dim = 30;
  for (int i = 0; i < 40; ++i) {
    SparseVector v{30, {}};
    for (std::uint32_t j = 0; j < 30; ++j)
      if (rng.uniform() < 0.2) v.entries.emplace_back(j, rng.uniform() + 0.1);
    st.ids.push_back("p" + std::to_string(i));
    st.rows.push_back(v);
  }
  SparseTable qs = st;
  qs.ids = {"q0"};
  qs.rows = {st.rows[3]};
  auto sparse = rank_all(qs, st, 10);
  auto dense = rank_all(densify(qs), densify(st), 10);
  ASSERT_EQ(sparse.size(), 1u);
  EXPECT_EQ(ids(sparse[0]), ids(dense[0]));
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(sparse[0].items[i].score, dense[0].items[i].score, 1e-12);
}

TEST(RecommendationsFile, FormatAndRoundTrip) {
  std::vector<RankedList> lists{{"q1", {{"a", 0.5}, {"b:x", 0.25}}, false}, {"q2", {{"c", -1.0 / 3.0}}, false}};
  std::stringstream buf;
  write_recommendations(buf, lists);
  EXPECT_EQ(buf.str(), "q1\ta:0.500000 b:x:0.250000\nq2\tc:-0.333333\n");
  auto back = read_recommendations(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].items[1].id, "b:x");
  EXPECT_EQ(back[1].items[0].score, -0.333333);
  std::stringstream bad("q1\ta\n");
  EXPECT_THROW(read_recommendations(bad), LoadError);
}
