#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "citerec/common.hpp"
#include "citerec/embedding_table.hpp"

namespace citerec {

/// English stopword list, version 1. Alphabetic entries of the common
/// NLTK list; contraction fragments ("don", "ll", "ve") are kept because
/// apostrophes split them off during preprocessing.
inline const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "i",        "me",       "my",       "myself",  "we",      "our",     "ours",    "ourselves",
      "you",      "your",     "yours",    "yourself", "yourselves", "he",  "him",     "his",
      "himself",  "she",      "her",      "hers",    "herself", "it",      "its",     "itself",
      "they",     "them",     "their",    "theirs",  "themselves", "what", "which",   "who",
      "whom",     "this",     "that",     "these",   "those",   "am",      "is",      "are",
      "was",      "were",     "be",       "been",    "being",   "have",    "has",     "had",
      "having",   "do",       "does",     "did",     "doing",   "a",       "an",      "the",
      "and",      "but",      "if",       "or",      "because", "as",      "until",   "while",
      "of",       "at",       "by",       "for",     "with",    "about",   "against", "between",
      "into",     "through",  "during",   "before",  "after",   "above",   "below",   "to",
      "from",     "up",       "down",     "in",      "out",     "on",      "off",     "over",
      "under",    "again",    "further",  "then",    "once",    "here",    "there",   "when",
      "where",    "why",      "how",      "all",     "any",     "both",    "each",    "few",
      "more",     "most",     "other",    "some",    "such",    "no",      "nor",     "not",
      "only",     "own",      "same",     "so",      "than",    "too",     "very",    "s",
      "t",        "can",      "will",     "just",    "don",     "should",  "now",     "d",
      "ll",       "m",        "o",        "re",      "ve",      "y",       "ain",     "aren",
      "couldn",   "didn",     "doesn",    "hadn",    "hasn",    "haven",   "isn",     "ma",
      "mightn",   "mustn",    "needn",    "shan",    "shouldn", "wasn",    "weren",   "won",
      "wouldn"};
  return words;
}

/// Lowercases, turns every non-ASCII-letter byte into a separator, splits,
/// and drops stopwords. "Graph2Vec 2017" -> {"graph", "vec"}.
inline std::vector<std::string> preprocess(std::string_view text) {
  const auto& stop = stopwords();
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty() && !stop.count(cur)) tokens.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else if (c >= 'a' && c <= 'z') {
      cur.push_back(static_cast<char>(c));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

/// Sparse vector with strictly increasing indices and non-zero weights.
struct SparseVector {
  std::size_t dim = 0;
  std::vector<std::pair<std::uint32_t, double>> entries;

  double squared_norm() const {
    double s = 0.0;
    for (const auto& [_, w] : entries) s += w * w;
    return s;
  }
  double norm() const { return std::sqrt(squared_norm()); }

  Eigen::RowVectorXd to_dense() const {
    Eigen::RowVectorXd v = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (const auto& [i, w] : entries) v(i) = w;
    return v;
  }
};

inline double dot(const SparseVector& a, const SparseVector& b) {
  double s = 0.0;
  auto i = a.entries.begin(), j = b.entries.begin();
  while (i != a.entries.end() && j != b.entries.end()) {
    if (i->first < j->first) {
      ++i;
    } else if (j->first < i->first) {
      ++j;
    } else {
      s += i->second * j->second;
      ++i;
      ++j;
    }
  }
  return s;
}

/// Row-aligned ids and sparse vectors of one dimension.
struct SparseTable {
  std::size_t dim = 0;
  std::vector<std::string> ids;
  std::vector<SparseVector> rows;

  std::size_t size() const { return ids.size(); }
};

inline EmbeddingTable densify(const SparseTable& t) {
  EmbeddingTable out(static_cast<Eigen::Index>(t.dim));
  out.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out.add(t.ids[i], t.rows[i].to_dense());
  return out;
}

struct Vocabulary {
  std::vector<std::string> terms;  ///< lexicographic
  std::unordered_map<std::string, std::uint32_t> term_index;
  std::vector<std::size_t> doc_freq;  ///< aligned with `terms`
  std::size_t n_docs = 0;

  std::size_t size() const { return terms.size(); }
};

/// Sublinear TF-IDF: weight(t, d) = (1 + ln count) * ln(N / df(t)).
class TfidfModel {
 public:
  TfidfModel() = default;

  /// Builds from a vocabulary whose terms are sorted and unique.
  explicit TfidfModel(Vocabulary vocab) : vocab_(std::move(vocab)) {
    if (vocab_.n_docs == 0) throw ConfigError("TF-IDF model needs N >= 1");
    if (vocab_.terms.size() != vocab_.doc_freq.size())
      throw ConfigError("term and document-frequency lists differ in length");
    vocab_.term_index.clear();
    idf_.resize(vocab_.size());
    for (std::uint32_t i = 0; i < vocab_.size(); ++i) {
      const auto df = vocab_.doc_freq[i];
      if (df == 0 || df > vocab_.n_docs)
        throw ConfigError("document frequency of '" + vocab_.terms[i] + "' out of range");
      if (i > 0 && !(vocab_.terms[i - 1] < vocab_.terms[i]))
        throw ConfigError("vocabulary terms must be sorted and unique");
      vocab_.term_index.emplace(vocab_.terms[i], i);
      idf_[i] = std::log(static_cast<double>(vocab_.n_docs) / static_cast<double>(df));
    }
  }

  const Vocabulary& vocabulary() const noexcept { return vocab_; }
  std::size_t dim() const noexcept { return vocab_.size(); }
  double idf(std::size_t index) const { return idf_.at(index); }

  SparseVector embed(std::string_view text) const {
    std::map<std::uint32_t, int> counts;
    for (const auto& tok : preprocess(text)) {
      auto it = vocab_.term_index.find(tok);
      if (it != vocab_.term_index.end()) ++counts[it->second];
    }
    SparseVector v{dim(), {}};
    v.entries.reserve(counts.size());
    for (const auto& [idx, c] : counts) {
      const double w = (1.0 + std::log(static_cast<double>(c))) * idf_[idx];
      if (w != 0.0) v.entries.emplace_back(idx, w);
    }
    return v;
  }

 private:
  Vocabulary vocab_;
  std::vector<double> idf_;
};

/// Fits the vocabulary on training documents, keeping terms whose document
/// frequency is at least `min_df`.
inline TfidfModel fit_tfidf(std::span<const std::string> docs, std::size_t min_df = 5) {
  if (docs.empty()) throw FitError("TF-IDF fit needs at least one document");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& d : docs) {
    auto toks = preprocess(d);
    std::sort(toks.begin(), toks.end());
    toks.erase(std::unique(toks.begin(), toks.end()), toks.end());
    for (auto& t : toks) ++df[std::move(t)];
  }
  Vocabulary v;
  v.n_docs = docs.size();
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [t, f] : df)
    if (f >= min_df) kept.emplace_back(t, f);
  if (kept.empty())
    throw FitError("empty vocabulary: no term reaches document frequency " + std::to_string(min_df));
  std::sort(kept.begin(), kept.end());
  for (auto& [t, f] : kept) {
    v.terms.push_back(std::move(t));
    v.doc_freq.push_back(f);
  }
  return TfidfModel(std::move(v));
}

inline TfidfModel fit_tfidf(const std::map<std::string, std::string>& docs, std::size_t min_df = 5) {
  std::vector<std::string> texts;
  texts.reserve(docs.size());
  for (const auto& [_, t] : docs) texts.push_back(t);
  return fit_tfidf(std::span<const std::string>(texts), min_df);
}

inline SparseVector tfidf_embed(std::string_view doc, const TfidfModel& model) {
  return model.embed(doc);
}

inline SparseTable tfidf_embed_all(const std::map<std::string, std::string>& docs,
                                   const TfidfModel& model) {
  SparseTable t;
  t.dim = model.dim();
  for (const auto& [id, text] : docs) {
    t.ids.push_back(id);
    t.rows.push_back(model.embed(text));
  }
  return t;
}

// Vocabulary file: first line <N>, then one <term>\t<df> line per term.

inline void write_tfidf(std::ostream& out, const TfidfModel& model) {
  const auto& v = model.vocabulary();
  out << v.n_docs << '\n';
  for (std::size_t i = 0; i < v.size(); ++i) out << v.terms[i] << '\t' << v.doc_freq[i] << '\n';
}

inline TfidfModel read_tfidf(std::istream& in, const std::string& source = "<stream>") {
  Vocabulary v;
  std::string line;
  if (!std::getline(in, line) || !parse_int(split_ws(line).empty() ? "" : split_ws(line)[0], v.n_docs))
    throw LoadError(source + ":1: expected document count header");
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    std::size_t df = 0;
    if (tab == std::string::npos || tab == 0 ||
        !parse_int(std::string_view(line).substr(tab + 1), df))
      throw LoadError(source + ":" + std::to_string(lineno) + ": expected '<term>\\t<df>'");
    v.terms.push_back(line.substr(0, tab));
    v.doc_freq.push_back(df);
  }
  try {
    return TfidfModel(std::move(v));
  } catch (const ConfigError& e) {
    throw LoadError(source + ": " + e.what());
  }
}

}  // namespace citerec
