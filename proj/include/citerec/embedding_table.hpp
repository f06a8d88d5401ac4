#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "citerec/common.hpp"

namespace citerec {

/// Id-indexed collection of dense vectors sharing one dimension.
///
/// Rows are kept in insertion order and stored contiguously (row-major), so
/// `row(i)` is a cheap view. Every component is finite and every id unique;
/// `add` enforces both.
class EmbeddingTable {
 public:
  using RowView = Eigen::Map<const Eigen::RowVectorXd>;

  EmbeddingTable() = default;
  explicit EmbeddingTable(Eigen::Index dim) : dim_(dim) {
    if (dim < 0) throw ConfigError("embedding dimension must be non-negative");
  }

  /// Builds a table from `ids.size()` rows of `rows`.
  EmbeddingTable(std::vector<std::string> ids, const Eigen::MatrixXd& rows) : dim_(rows.cols()) {
    if (static_cast<Eigen::Index>(ids.size()) != rows.rows())
      throw ConfigError("id count does not match row count");
    reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i)
      add(std::move(ids[i]), rows.row(static_cast<Eigen::Index>(i)));
  }

  Eigen::Index dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }
  const std::vector<std::string>& ids() const noexcept { return ids_; }

  void reserve(std::size_t n) {
    ids_.reserve(n);
    data_.reserve(n * static_cast<std::size_t>(dim_));
    index_.reserve(n);
  }

  template <class Derived>
  void add(std::string id, const Eigen::MatrixBase<Derived>& v) {
    if (v.size() != dim_)
      throw ConfigError("vector for '" + id + "' has " + std::to_string(v.size()) +
                        " components, table dim is " + std::to_string(dim_));
    if (id.empty()) throw ConfigError("empty embedding id");
    for (Eigen::Index j = 0; j < v.size(); ++j)
      if (!std::isfinite(v(j))) throw ConfigError("non-finite component in vector '" + id + "'");
    if (!index_.emplace(id, ids_.size()).second)
      throw ConfigError("duplicate embedding id '" + id + "'");
    for (Eigen::Index j = 0; j < v.size(); ++j) data_.push_back(v(j));
    ids_.push_back(std::move(id));
  }

  void add(std::string id, std::span<const double> v) {
    add(std::move(id), Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }

  std::optional<std::size_t> find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  RowView row(std::size_t i) const {
    return RowView(data_.data() + i * static_cast<std::size_t>(dim_), dim_);
  }
  RowView row(const std::string& id) const {
    auto i = find(id);
    if (!i) throw LoadError("no embedding for id '" + id + "'");
    return row(*i);
  }
  std::span<const double> span(std::size_t i) const {
    return {data_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }

  /// Copy of all rows as an n x dim matrix, in table order.
  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(size()), dim_);
    for (std::size_t i = 0; i < size(); ++i) m.row(static_cast<Eigen::Index>(i)) = row(i);
    return m;
  }

  /// Rows for `ids`, in the given order. Throws if any id is missing.
  Eigen::MatrixXd gather(const std::vector<std::string>& ids) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(ids.size()), dim_);
    for (std::size_t i = 0; i < ids.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = row(ids[i]);
    return m;
  }

  friend bool operator==(const EmbeddingTable& a, const EmbeddingTable& b) {
    return a.dim_ == b.dim_ && a.ids_ == b.ids_ && a.data_ == b.data_;
  }

 private:
  Eigen::Index dim_ = 0;
  std::vector<std::string> ids_;
  std::vector<double> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Interchange format:
//   line 1:  <count> <dim>
//   then:    <id>\t<v1> <v2> ... <vdim>     (exactly `count` rows)
// Values are written in shortest round-trip decimal form.

inline void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& id = table.ids()[i];
    if (id.find_first_of("\t\n\r") != std::string::npos)
      throw ConfigError("embedding id contains a tab or newline: '" + id + "'");
    out << id << '\t';
    auto v = table.span(i);
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (j) out << ' ';
      out << format_double(v[j]);
    }
    out << '\n';
  }
}

/// Parses an interchange stream. Fails atomically: any bad row aborts the
/// whole load with a message naming the line and id.
inline EmbeddingTable read_embeddings(std::istream& in, const std::string& source = "<stream>") {
  auto fail = [&](std::size_t line, const std::string& msg) -> LoadError {
    return LoadError(source + ":" + std::to_string(line) + ": " + msg);
  };
  std::string line;
  if (!std::getline(in, line)) throw fail(1, "missing '<count> <dim>' header");
  auto head = split_ws(line);
  std::size_t count = 0;
  long long dim = 0;
  if (head.size() != 2 || !parse_int(head[0], count) || !parse_int(head[1], dim) || dim < 0)
    throw fail(1, "malformed header '" + line + "', expected '<count> <dim>'");

  EmbeddingTable table(static_cast<Eigen::Index>(dim));
  table.reserve(count);
  std::vector<double> values(static_cast<std::size_t>(dim));
  std::size_t lineno = 1;
  while (table.size() < count) {
    if (!std::getline(in, line))
      throw fail(lineno + 1, "expected " + std::to_string(count) + " rows, found " +
                                 std::to_string(table.size()));
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) throw fail(lineno, "expected '<id>\\t<values>'");
    std::string id = line.substr(0, tab);
    auto fields = split_ws(std::string_view(line).substr(tab + 1));
    if (fields.size() != values.size())
      throw fail(lineno, "row '" + id + "' has " + std::to_string(fields.size()) +
                             " values, header declares " + std::to_string(dim));
    for (std::size_t j = 0; j < fields.size(); ++j) {
      if (!parse_double(fields[j], values[j]))
        throw fail(lineno, "row '" + id + "' has unparsable value '" + std::string(fields[j]) + "'");
      if (!std::isfinite(values[j])) throw fail(lineno, "row '" + id + "' has a non-finite value");
    }
    if (table.contains(id)) throw fail(lineno, "duplicate id '" + id + "'");
    table.add(std::move(id), std::span<const double>(values));
  }
  while (std::getline(in, line)) {
    ++lineno;
    if (!split_ws(line).empty())
      throw fail(lineno, "extra row beyond declared count " + std::to_string(count));
  }
  return table;
}

inline EmbeddingTable load_dense_embeddings(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open embedding file " + path.string());
  return read_embeddings(in, path.string());
}

inline void save_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_embeddings(out, table);
  if (!out) throw Error("write failed for " + path.string());
}

}  // namespace citerec
