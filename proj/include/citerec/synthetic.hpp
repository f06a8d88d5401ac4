#pragma once

// Synthetic corpora with a known citation mechanism.
//
// Every paper belongs to one text topic and one graph community. Its words
// mix a topic vocabulary, a community vocabulary and shared background
// noise; its references go to older papers of the same (topic, community)
// cell, with some leakage to papers that share only the topic or only the
// community. Text sees the topic clearly and the community faintly, while
// the citation graph sees the cells, so each view carries part of the
// signal that decides who cites whom.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "citerec/common.hpp"
#include "citerec/corpus.hpp"

namespace citerec {

struct SyntheticOptions {
  std::size_t papers = 2000;
  int topics = 6;
  int communities = 6;
  int topic_words = 40;
  int community_words = 40;
  int background_words = 400;
  int title_tokens = 8;
  int abstract_tokens = 60;
  /// Token shares; the rest of each document is background noise.
  double topic_share = 0.3;
  double community_share = 0.1;
  int references = 20;
  /// Reference mix: same cell, same topic only, same community only; the
  /// remainder goes to uniformly random older papers.
  double cite_cell = 0.6;
  double cite_topic = 0.15;
  double cite_community = 0.15;
  int first_year = 2000;
  int last_year = 2017;
  std::uint64_t seed = 1;
};

namespace detail {

/// Lowercase alphabetic token for vocabulary slot `i`.
inline std::string synthetic_word(std::size_t i) {
  std::string s = "zq";
  do {
    s += static_cast<char>('a' + i % 26);
    i /= 26;
  } while (i > 0);
  return s;
}

}  // namespace detail

struct SyntheticPaperInfo {
  int topic = 0;
  int community = 0;
};

struct SyntheticCorpus {
  std::vector<Paper> papers;                 ///< in publication order
  std::vector<SyntheticPaperInfo> labels;    ///< parallel to `papers`
};

inline SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& o) {
  if (o.papers < 2 || o.topics < 1 || o.communities < 1) throw ConfigError("synthetic corpus too small");
  if (o.first_year > o.last_year) throw ConfigError("synthetic years reversed");
  if (o.cite_cell + o.cite_topic + o.cite_community > 1.0 + 1e-12)
    throw ConfigError("synthetic citation shares exceed 1");
  Rng rng(o.seed);
  SyntheticCorpus out;
  const auto n = o.papers;
  const std::size_t width = 1 + static_cast<std::size_t>(std::to_string(n).size());
  const int years = o.last_year - o.first_year + 1;

  const std::size_t topic_base = 0;
  const std::size_t community_base = topic_base + static_cast<std::size_t>(o.topics * o.topic_words);
  const std::size_t background_base =
      community_base + static_cast<std::size_t>(o.communities * o.community_words);

  auto draw_text = [&](int topic, int community, int tokens) {
    std::string text;
    for (int t = 0; t < tokens; ++t) {
      const double u = rng.uniform();
      std::size_t w;
      if (u < o.topic_share)
        w = topic_base + static_cast<std::size_t>(topic * o.topic_words) + rng.below(o.topic_words);
      else if (u < o.topic_share + o.community_share)
        w = community_base + static_cast<std::size_t>(community * o.community_words) + rng.below(o.community_words);
      else
        w = background_base + rng.below(o.background_words);
      if (!text.empty()) text += ' ';
      text += detail::synthetic_word(w);
    }
    return text;
  };

  for (std::size_t i = 0; i < n; ++i) {
    Paper p;
    std::string num = std::to_string(i);
    p.id = "s" + std::string(width - num.size(), '0') + num;
    SyntheticPaperInfo info{static_cast<int>(rng.below(o.topics)), static_cast<int>(rng.below(o.communities))};
    p.year = o.first_year + static_cast<int>(i * static_cast<std::size_t>(years) / n);
    p.title = draw_text(info.topic, info.community, o.title_tokens);
    p.abstract = draw_text(info.topic, info.community, o.abstract_tokens);

    // Candidate pools among strictly older papers.
    std::vector<std::size_t> cell, topic, community;
    for (std::size_t j = 0; j < i; ++j) {
      const auto& l = out.labels[j];
      if (out.papers[j].year >= p.year) break;
      const bool st = l.topic == info.topic, sc = l.community == info.community;
      if (st && sc) cell.push_back(j);
      else if (st) topic.push_back(j);
      else if (sc) community.push_back(j);
    }
    std::size_t older = 0;
    while (older < i && out.papers[older].year < p.year) ++older;
    for (int r = 0; r < o.references && older > 0; ++r) {
      const double u = rng.uniform();
      const std::vector<std::size_t>* pool = nullptr;
      if (u < o.cite_cell) pool = &cell;
      else if (u < o.cite_cell + o.cite_topic) pool = &topic;
      else if (u < o.cite_cell + o.cite_topic + o.cite_community) pool = &community;
      std::size_t j;
      if (pool && !pool->empty()) j = (*pool)[rng.below(pool->size())];
      else j = rng.below(older);
      p.references.push_back(out.papers[j].id);
    }
    detail::normalize_references(p);
    out.papers.push_back(std::move(p));
    out.labels.push_back(info);
  }
  return out;
}

}  // namespace citerec
