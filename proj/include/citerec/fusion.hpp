#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <variant>

#include "citerec/cca.hpp"
#include "citerec/common.hpp"
#include "citerec/dcca.hpp"

namespace citerec {

enum class FusionKind {
  text_only,           ///< text view alone (baseline, no fusion)
  node_only,           ///< node view alone (baseline, no fusion)
  simple_concat,       ///< [X | Y] on unprojected views
  projected_concat,    ///< [X' | Y']
  linear_combination,  ///< alpha X' + (1 - alpha) Y'
};

inline const char* to_string(FusionKind k) {
  switch (k) {
    case FusionKind::text_only: return "text_only";
    case FusionKind::node_only: return "node_only";
    case FusionKind::simple_concat: return "simple_concat";
    case FusionKind::projected_concat: return "projected_concat";
    case FusionKind::linear_combination: return "linear_combination";
  }
  return "?";
}

inline FusionKind parse_fusion_kind(const std::string& s) {
  for (auto k : {FusionKind::text_only, FusionKind::node_only, FusionKind::simple_concat,
                 FusionKind::projected_concat, FusionKind::linear_combination})
    if (s == to_string(k)) return k;
  throw ConfigError("unknown fusion strategy '" + s + "'");
}

struct FusionStrategy {
  FusionKind kind = FusionKind::projected_concat;
  double alpha = 0.5;  ///< used by linear_combination only

  bool needs_projection() const {
    return kind == FusionKind::projected_concat || kind == FusionKind::linear_combination;
  }

  /// Output width for the given input widths.
  Eigen::Index output_dim(Eigen::Index dx, Eigen::Index dy) const {
    switch (kind) {
      case FusionKind::text_only: return dx;
      case FusionKind::node_only: return dy;
      case FusionKind::simple_concat:
      case FusionKind::projected_concat: return dx + dy;
      case FusionKind::linear_combination: return dx;
    }
    return 0;
  }
};

/// Row-wise fusion of two views describing the same papers.
inline Eigen::MatrixXd fuse(const Eigen::MatrixXd& xp, const Eigen::MatrixXd& yp, const FusionStrategy& s) {
  if (xp.rows() != yp.rows()) throw ConfigError("fused views have different row counts");
  switch (s.kind) {
    case FusionKind::text_only: return xp;
    case FusionKind::node_only: return yp;
    case FusionKind::simple_concat:
    case FusionKind::projected_concat: {
      Eigen::MatrixXd z(xp.rows(), xp.cols() + yp.cols());
      z << xp, yp;
      return z;
    }
    case FusionKind::linear_combination:
      if (xp.cols() != yp.cols()) throw ConfigError("linear combination needs projections of equal width");
      if (!(s.alpha >= 0.0 && s.alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
      if (s.alpha == 1.0) return xp;
      if (s.alpha == 0.0) return yp;
      return s.alpha * xp + (1.0 - s.alpha) * yp;
  }
  throw ConfigError("unknown fusion strategy");
}

/// No model (raw views), CCA, or DCCA.
using FusionModel = std::variant<std::monostate, CcaModel, DccaModel>;

inline bool has_projection(const FusionModel& m) { return !std::holds_alternative<std::monostate>(m); }

inline Eigen::MatrixXd project(const FusionModel& model, const Eigen::MatrixXd& view, Side side) {
  return std::visit(
      [&](const auto& m) -> Eigen::MatrixXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, std::monostate>)
          throw ConfigError("no fusion model fitted; cannot project");
        else
          return m.project(view, side);
      },
      model);
}

inline Eigen::MatrixXd project(const CcaModel& m, const Eigen::MatrixXd& view, Side side) {
  return m.project(view, side);
}
inline Eigen::MatrixXd project(const DccaModel& m, const Eigen::MatrixXd& view, Side side) {
  return m.project(view, side);
}

// ---------------------------------------------------------------------------
// Model file
//
//   citerec-fusion-model 1
//   kind <none|cca|dcca>
//   scalar <name> <value>            (any number)
//   matrix <name> <rows> <cols>      followed by <rows> lines of <cols> values
//   end
//
// Values use shortest round-trip decimal, so a reload projects bit-identically.

struct ModelContainer {
  std::string kind;
  std::map<std::string, std::string> scalars;
  std::map<std::string, Eigen::MatrixXd> matrices;

  const std::string& scalar(const std::string& k) const {
    auto it = scalars.find(k);
    if (it == scalars.end()) throw LoadError("model file lacks scalar '" + k + "'");
    return it->second;
  }
  double number(const std::string& k) const {
    double v = 0.0;
    if (!parse_double(scalar(k), v)) throw LoadError("model scalar '" + k + "' is not a number");
    return v;
  }
  long long integer(const std::string& k) const {
    long long v = 0;
    if (!parse_int(scalar(k), v)) throw LoadError("model scalar '" + k + "' is not an integer");
    return v;
  }
  const Eigen::MatrixXd& matrix(const std::string& k) const {
    auto it = matrices.find(k);
    if (it == matrices.end()) throw LoadError("model file lacks matrix '" + k + "'");
    return it->second;
  }
  Eigen::RowVectorXd row_vector(const std::string& k) const {
    const auto& m = matrix(k);
    if (m.rows() != 1) throw LoadError("model matrix '" + k + "' must have one row");
    return m;
  }
};

inline void write_container(std::ostream& out, const ModelContainer& c) {
  out << "citerec-fusion-model 1\nkind " << c.kind << '\n';
  for (const auto& [k, v] : c.scalars) out << "scalar " << k << ' ' << v << '\n';
  for (const auto& [k, m] : c.matrices) {
    out << "matrix " << k << ' ' << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
      out << '\n';
    }
  }
  out << "end\n";
}

inline ModelContainer read_container(std::istream& in) {
  ModelContainer c;
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    return true;
  };
  auto fail = [&](const std::string& msg) { return LoadError("model line " + std::to_string(lineno) + ": " + msg); };
  if (!next() || line != "citerec-fusion-model 1") throw fail("not a fusion model file");
  bool ended = false;
  while (next()) {
    auto f = split_ws(line);
    if (f.empty()) continue;
    if (f[0] == "end") {
      ended = true;
      break;
    }
    if (f[0] == "kind" && f.size() == 2) {
      c.kind = std::string(f[1]);
    } else if (f[0] == "scalar" && f.size() == 3) {
      c.scalars[std::string(f[1])] = std::string(f[2]);
    } else if (f[0] == "matrix" && f.size() == 4) {
      Eigen::Index rows = 0, cols = 0;
      if (!parse_int(f[2], rows) || !parse_int(f[3], cols) || rows < 0 || cols < 0) throw fail("bad matrix shape");
      Eigen::MatrixXd m(rows, cols);
      const std::string name(f[1]);
      for (Eigen::Index i = 0; i < rows; ++i) {
        if (!next()) throw fail("truncated matrix '" + name + "'");
        auto vals = split_ws(line);
        if (static_cast<Eigen::Index>(vals.size()) != cols) throw fail("matrix row has wrong arity");
        for (Eigen::Index j = 0; j < cols; ++j)
          if (!parse_double(vals[static_cast<std::size_t>(j)], m(i, j))) throw fail("bad number");
      }
      c.matrices.emplace(name, std::move(m));
    } else {
      throw fail("unrecognized record '" + line + "'");
    }
  }
  if (!ended) throw LoadError("model file truncated (no 'end')");
  return c;
}

namespace detail {

inline void put_standardizer(ModelContainer& c, const std::string& p, const Standardizer& s) {
  c.matrices[p + ".mean"] = s.mean;
  c.matrices[p + ".scale"] = s.scale;
}

inline Standardizer get_standardizer(const ModelContainer& c, const std::string& p) {
  Standardizer s;
  s.mean = c.row_vector(p + ".mean");
  s.scale = c.row_vector(p + ".scale");
  if (s.mean.size() != s.scale.size()) throw LoadError("standardizer width mismatch in " + p);
  return s;
}

inline void put_cca(ModelContainer& c, const std::string& p, const CcaModel& m) {
  c.scalars[p + "d"] = std::to_string(m.d);
  c.scalars[p + "reg"] = format_double(m.reg);
  put_standardizer(c, p + "sx", m.sx);
  put_standardizer(c, p + "sy", m.sy);
  c.matrices[p + "wx"] = m.wx;
  c.matrices[p + "wy"] = m.wy;
  c.matrices[p + "correlations"] = m.correlations.transpose();
}

inline CcaModel get_cca(const ModelContainer& c, const std::string& p) {
  CcaModel m;
  m.d = c.integer(p + "d");
  m.reg = c.number(p + "reg");
  m.sx = get_standardizer(c, p + "sx");
  m.sy = get_standardizer(c, p + "sy");
  m.wx = c.matrix(p + "wx");
  m.wy = c.matrix(p + "wy");
  m.correlations = c.row_vector(p + "correlations").transpose();
  if (m.wx.rows() != m.sx.dim() || m.wy.rows() != m.sy.dim() || m.wx.cols() != m.wy.cols())
    throw LoadError("inconsistent CCA shapes");
  return m;
}

inline void put_mlp(ModelContainer& c, const std::string& p, const Mlp& net) {
  c.scalars[p + ".layers"] = std::to_string(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto k = p + "." + std::to_string(i);
    c.scalars[k + ".act"] = to_string(net.layers[i].act);
    c.matrices[k + ".w"] = net.layers[i].w;
    c.matrices[k + ".b"] = net.layers[i].b;
  }
}

inline Mlp get_mlp(const ModelContainer& c, const std::string& p) {
  Mlp net;
  const auto n = c.integer(p + ".layers");
  for (long long i = 0; i < n; ++i) {
    const auto k = p + "." + std::to_string(i);
    DenseLayer l;
    l.act = parse_activation(c.scalar(k + ".act"));
    l.w = c.matrix(k + ".w");
    l.b = c.row_vector(k + ".b");
    if (l.b.size() != l.w.cols()) throw LoadError("bias width mismatch in " + k);
    if (!net.layers.empty() && net.layers.back().w.cols() != l.w.rows())
      throw LoadError("layer shapes do not chain at " + k);
    net.layers.push_back(std::move(l));
  }
  return net;
}

}  // namespace detail

inline void write_fusion_model(std::ostream& out, const FusionModel& model) {
  ModelContainer c;
  if (std::holds_alternative<std::monostate>(model)) {
    c.kind = "none";
  } else if (auto* cca = std::get_if<CcaModel>(&model)) {
    c.kind = "cca";
    detail::put_cca(c, "", *cca);
  } else {
    const auto& d = std::get<DccaModel>(model);
    c.kind = "dcca";
    c.scalars["reg"] = format_double(d.reg);
    detail::put_standardizer(c, "sx", d.sx);
    detail::put_standardizer(c, "sy", d.sy);
    detail::put_mlp(c, "net_x", d.net_x);
    detail::put_mlp(c, "net_y", d.net_y);
    Eigen::RowVectorXd log(static_cast<Eigen::Index>(d.train_log.size()));
    for (std::size_t i = 0; i < d.train_log.size(); ++i) log(static_cast<Eigen::Index>(i)) = d.train_log[i];
    c.matrices["train_log"] = log;
    c.scalars["aligned"] = d.alignment ? "1" : "0";
    if (d.alignment) detail::put_cca(c, "align.", *d.alignment);
  }
  write_container(out, c);
}

inline FusionModel read_fusion_model(std::istream& in) {
  const auto c = read_container(in);
  if (c.kind == "none") return std::monostate{};
  if (c.kind == "cca") return detail::get_cca(c, "");
  if (c.kind == "dcca") {
    DccaModel d;
    d.reg = c.number("reg");
    d.sx = detail::get_standardizer(c, "sx");
    d.sy = detail::get_standardizer(c, "sy");
    d.net_x = detail::get_mlp(c, "net_x");
    d.net_y = detail::get_mlp(c, "net_y");
    const auto& log = c.matrix("train_log");
    d.train_log.assign(log.data(), log.data() + log.size());
    if (c.scalar("aligned") == "1") d.alignment = detail::get_cca(c, "align.");
    return d;
  }
  throw LoadError("unknown model kind '" + c.kind + "'");
}

inline void save_fusion_model(const std::filesystem::path& path, const FusionModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_fusion_model(out, model);
}

inline FusionModel load_fusion_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open model file " + path.string());
  return read_fusion_model(in);
}

}  // namespace citerec
