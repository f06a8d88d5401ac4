#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "citerec/common.hpp"
#include "json.hpp"

namespace citerec {

struct Paper {
  std::string id;
  std::string title;
  std::string abstract;
  int year = 0;
  /// Outgoing citations, sorted and unique; never contains `id`.
  std::vector<std::string> references;
  // Carried through for round-tripping, not used by any model.
  std::vector<std::string> authors;
  std::string venue;

  /// Title and abstract joined by a single space.
  std::string text() const { return title + " " + abstract; }
};

namespace detail {

inline void normalize_references(Paper& p) {
  auto& r = p.references;
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  r.erase(std::remove(r.begin(), r.end(), p.id), r.end());
}

}  // namespace detail

/// Papers keyed by id. Iteration is in id order, which makes every derived
/// artifact independent of input line order.
class Corpus {
 public:
  using Map = std::map<std::string, Paper>;

  Corpus() = default;
  explicit Corpus(std::vector<Paper> papers) {
    for (auto& p : papers) {
      if (p.id.empty()) throw ConfigError("paper with empty id");
      detail::normalize_references(p);
      std::string id = p.id;
      if (papers_.count(id)) throw ConfigError("duplicate paper id '" + id + "'");
      papers_.emplace(std::move(id), std::move(p));
    }
    recount();
  }

  std::size_t size() const noexcept { return papers_.size(); }
  bool empty() const noexcept { return papers_.empty(); }
  /// Citation links whose citing and cited papers are both in this corpus.
  std::size_t edge_count() const noexcept { return edge_count_; }

  bool contains(const std::string& id) const { return papers_.count(id) != 0; }
  const Paper* find(const std::string& id) const {
    auto it = papers_.find(id);
    return it == papers_.end() ? nullptr : &it->second;
  }
  const Paper& at(const std::string& id) const {
    auto* p = find(id);
    if (!p) throw Error("paper '" + id + "' not in corpus");
    return *p;
  }

  Map::const_iterator begin() const { return papers_.begin(); }
  Map::const_iterator end() const { return papers_.end(); }

  std::vector<std::string> ids() const {
    std::vector<std::string> out;
    out.reserve(size());
    for (const auto& [id, _] : papers_) out.push_back(id);
    return out;
  }

  /// Ids in this corpus cited by `p`.
  std::vector<std::string> internal_references(const Paper& p) const {
    std::vector<std::string> out;
    for (const auto& r : p.references)
      if (contains(r)) out.push_back(r);
    return out;
  }

 private:
  void recount() {
    edge_count_ = 0;
    for (const auto& [_, p] : papers_)
      for (const auto& r : p.references) edge_count_ += contains(r) ? 1 : 0;
  }

  Map papers_;
  std::size_t edge_count_ = 0;
};

/// Test paper id -> cited training ids (sorted, non-empty).
using GroundTruth = std::map<std::string, std::vector<std::string>>;

struct SplitCorpus {
  Corpus train;
  Corpus test;
  GroundTruth ground_truth;
};

// ---------------------------------------------------------------------------
// Parsing

struct RecordError {
  std::size_t line = 0;
  std::string message;
};

struct ParseReport {
  std::size_t lines = 0;       ///< non-blank lines seen
  std::size_t accepted = 0;
  std::size_t incomplete = 0;  ///< missing or empty required field
  std::size_t malformed = 0;   ///< not valid JSON or wrong field types
  std::size_t duplicate = 0;   ///< id already seen; first occurrence wins
  std::vector<RecordError> errors;

  std::size_t rejected() const { return incomplete + malformed + duplicate; }

  void print(std::ostream& out) const {
    out << "records: " << lines << " accepted: " << accepted << " rejected: " << rejected()
        << " (incomplete " << incomplete << ", malformed " << malformed << ", duplicate "
        << duplicate << ")\n";
  }
};

struct ParseResult {
  Corpus corpus;
  ParseReport report;
};

namespace detail {

enum class FieldStatus { ok, missing, bad_type };

inline FieldStatus get_string(const nlohmann::json& j, const char* key, std::string& out) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return FieldStatus::missing;
  if (!it->is_string()) return FieldStatus::bad_type;
  out = it->get<std::string>();
  return out.empty() ? FieldStatus::missing : FieldStatus::ok;
}

}  // namespace detail

/// Reads one JSON object per line. Records missing a required field (or
/// carrying it empty) are dropped as incomplete; unparsable lines are
/// dropped as malformed. Neither aborts the parse.
inline ParseResult parse_corpus(std::istream& in, std::size_t max_logged_errors = 100) {
  using nlohmann::json;
  using detail::FieldStatus;
  ParseReport report;
  std::vector<Paper> papers;
  std::unordered_map<std::string, bool> seen;
  auto reject = [&](std::size_t& counter, std::size_t line, std::string msg) {
    ++counter;
    if (report.errors.size() < max_logged_errors) report.errors.push_back({line, std::move(msg)});
  };

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ++report.lines;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) {
      reject(report.malformed, lineno, "not a JSON object");
      continue;
    }
    Paper p;
    bool bad_type = false;
    std::string missing;
    auto take = [&](const char* key, std::string& out) {
      switch (detail::get_string(j, key, out)) {
        case FieldStatus::ok: break;
        case FieldStatus::missing: if (missing.empty()) missing = key; break;
        case FieldStatus::bad_type: bad_type = true; break;
      }
    };
    take("id", p.id);
    take("title", p.title);
    take("abstract", p.abstract);

    if (auto it = j.find("year"); it == j.end() || it->is_null()) {
      if (missing.empty()) missing = "year";
    } else if (it->is_number_integer()) {
      p.year = it->get<int>();
    } else {
      bad_type = true;
    }

    if (auto it = j.find("references"); it == j.end() || it->is_null()) {
      if (missing.empty()) missing = "references";
    } else if (it->is_array()) {
      for (const auto& r : *it) {
        if (!r.is_string()) {
          bad_type = true;
          break;
        }
        p.references.push_back(r.get<std::string>());
      }
    } else {
      bad_type = true;
    }

    if (auto it = j.find("authors"); it != j.end() && it->is_array())
      for (const auto& a : *it)
        if (a.is_string()) p.authors.push_back(a.get<std::string>());
    if (auto it = j.find("venue"); it != j.end() && it->is_string()) p.venue = it->get<std::string>();

    if (bad_type) {
      reject(report.malformed, lineno, "field has the wrong type");
      continue;
    }
    if (!missing.empty()) {
      reject(report.incomplete, lineno, "missing or empty field '" + missing + "'");
      continue;
    }
    if (!seen.emplace(p.id, true).second) {
      reject(report.duplicate, lineno, "duplicate id '" + p.id + "'");
      continue;
    }
    ++report.accepted;
    papers.push_back(std::move(p));
  }
  return {Corpus(std::move(papers)), std::move(report)};
}

inline ParseResult load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open corpus file " + path.string());
  return parse_corpus(in);
}

inline void write_corpus(std::ostream& out, const Corpus& corpus) {
  for (const auto& [id, p] : corpus) {
    nlohmann::json j = {{"id", p.id},     {"title", p.title},
                        {"abstract", p.abstract}, {"year", p.year},
                        {"references", p.references}};
    if (!p.authors.empty()) j["authors"] = p.authors;
    if (!p.venue.empty()) j["venue"] = p.venue;
    out << j.dump() << '\n';
  }
}

inline void save_corpus(const std::filesystem::path& path, const Corpus& corpus) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_corpus(out, corpus);
}

// ---------------------------------------------------------------------------
// Pruning and splitting

struct PruneOptions {
  int min_in = 15;
  int min_out = 20;
  /// Repeat until no paper is removed. Off by default: one pass with
  /// degrees taken from the input graph.
  bool iterate = false;
};

namespace detail {

inline Corpus prune_once(const Corpus& corpus, int min_in, int min_out, bool& removed_any) {
  std::unordered_map<std::string, int> in_deg;
  for (const auto& [id, p] : corpus)
    for (const auto& r : p.references)
      if (corpus.contains(r)) ++in_deg[r];

  std::vector<const Paper*> keep;
  for (const auto& [id, p] : corpus) {
    const auto out_deg = static_cast<int>(p.references.size());
    auto it = in_deg.find(id);
    int in = it == in_deg.end() ? 0 : it->second;
    if (in >= min_in && out_deg >= min_out) keep.push_back(&p);
  }
  removed_any = keep.size() != corpus.size();

  std::unordered_map<std::string, bool> kept;
  for (auto* p : keep) kept.emplace(p->id, true);
  std::vector<Paper> out;
  out.reserve(keep.size());
  for (auto* p : keep) {
    Paper q = *p;
    std::erase_if(q.references, [&](const std::string& r) { return !kept.count(r); });
    out.push_back(std::move(q));
  }
  return Corpus(std::move(out));
}

}  // namespace detail

/// Drops papers cited by fewer than `min_in` papers of the corpus or listing
/// fewer than `min_out` references, then restricts surviving reference lists
/// to surviving ids. Citations from outside the corpus are invisible, while
/// a paper's own reference list is complete, so the two degrees are counted
/// differently.
inline Corpus prune(const Corpus& corpus, const PruneOptions& opt = {}) {
  if (opt.min_in < 0 || opt.min_out < 0) throw ConfigError("prune thresholds must be >= 0");
  bool removed = false;
  Corpus out = detail::prune_once(corpus, opt.min_in, opt.min_out, removed);
  while (opt.iterate && removed) out = detail::prune_once(out, opt.min_in, opt.min_out, removed);
  return out;
}

struct SplitOptions {
  int train_end_year = 2013;
  int test_start_year = 2014;
  int test_end_year = 2017;
};

/// Temporal split. Test papers keep their raw references; the ground truth
/// is their intersection with the training ids, and papers with an empty
/// intersection are dropped from the test set.
inline SplitCorpus temporal_split(const Corpus& corpus, const SplitOptions& opt = {}) {
  if (!(opt.train_end_year < opt.test_start_year && opt.test_start_year <= opt.test_end_year))
    throw ConfigError("split years must satisfy train_end < test_start <= test_end");

  std::unordered_map<std::string, bool> train_ids;
  for (const auto& [id, p] : corpus)
    if (p.year <= opt.train_end_year) train_ids.emplace(id, true);

  std::vector<Paper> train, test;
  GroundTruth truth;
  for (const auto& [id, p] : corpus) {
    if (p.year <= opt.train_end_year) {
      Paper q = p;
      std::erase_if(q.references, [&](const std::string& r) { return !train_ids.count(r); });
      train.push_back(std::move(q));
    } else if (p.year >= opt.test_start_year && p.year <= opt.test_end_year) {
      std::vector<std::string> cited;
      for (const auto& r : p.references)
        if (train_ids.count(r)) cited.push_back(r);
      if (cited.empty()) continue;
      truth.emplace(id, std::move(cited));
      test.push_back(p);
    }
  }
  return {Corpus(std::move(train)), Corpus(std::move(test)), std::move(truth)};
}

struct PartitionStats {
  std::size_t papers = 0;
  std::size_t citations = 0;
  /// citations / papers; 0 for an empty partition.
  double avg_citations = 0.0;
};

struct StatsReport {
  PartitionStats train;
  PartitionStats test;  ///< citations = ground-truth links
};

inline PartitionStats partition_stats(std::size_t papers, std::size_t citations) {
  return {papers, citations,
          papers == 0 ? 0.0 : static_cast<double>(citations) / static_cast<double>(papers)};
}

inline StatsReport corpus_stats(const SplitCorpus& split) {
  std::size_t gt = 0;
  for (const auto& [_, refs] : split.ground_truth) gt += refs.size();
  return {partition_stats(split.train.size(), split.train.edge_count()),
          partition_stats(split.test.size(), gt)};
}

// Ground truth file: <query_id>\t<id1> <id2> ...

inline void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
  for (const auto& [q, refs] : truth) {
    out << q << '\t';
    for (std::size_t i = 0; i < refs.size(); ++i) out << (i ? " " : "") << refs[i];
    out << '\n';
  }
}

inline GroundTruth read_ground_truth(std::istream& in, const std::string& source = "<stream>") {
  GroundTruth truth;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0)
      throw LoadError(source + ":" + std::to_string(lineno) + ": expected '<query>\\t<ids>'");
    std::vector<std::string> refs;
    for (auto f : split_ws(std::string_view(line).substr(tab + 1))) refs.emplace_back(f);
    std::sort(refs.begin(), refs.end());
    if (!truth.emplace(line.substr(0, tab), std::move(refs)).second)
      throw LoadError(source + ":" + std::to_string(lineno) + ": duplicate query");
  }
  return truth;
}

}  // namespace citerec
