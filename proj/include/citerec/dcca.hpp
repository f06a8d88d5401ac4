#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "citerec/cca.hpp"
#include "citerec/common.hpp"

namespace citerec {

struct CorrelationResult {
  double loss = 0.0;              ///< -sum of canonical correlations
  Eigen::MatrixXd grad_h1;        ///< d loss / d H1
  Eigen::MatrixXd grad_h2;        ///< d loss / d H2
  Eigen::VectorXd correlations;   ///< descending
};

namespace detail {

inline bool lexicographically_less(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  if (a.cols() != b.cols()) return a.cols() < b.cols();
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

inline CorrelationResult correlation_objective_ordered(const Eigen::MatrixXd& h1, const Eigen::MatrixXd& h2,
                                                       double reg) {
  const double scale = 1.0 / static_cast<double>(h1.rows() - 1);
  const Eigen::MatrixXd c1 = h1.rowwise() - h1.colwise().mean();
  const Eigen::MatrixXd c2 = h2.rowwise() - h2.colwise().mean();
  Eigen::MatrixXd s11 = scale * c1.transpose() * c1;
  Eigen::MatrixXd s22 = scale * c2.transpose() * c2;
  s11.diagonal().array() += reg;
  s22.diagonal().array() += reg;
  const Eigen::MatrixXd s12 = scale * c1.transpose() * c2;

  const Eigen::MatrixXd k1 = inverse_sqrt_spd(s11, "first-view output covariance");
  const Eigen::MatrixXd k2 = inverse_sqrt_spd(s22, "second-view output covariance");
  const Eigen::MatrixXd t = k1 * s12 * k2;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::MatrixXd& u = svd.matrixU();
  const Eigen::MatrixXd& v = svd.matrixV();
  const Eigen::VectorXd& sv = svd.singularValues();

  // Gradients of sum(sv) with respect to the three covariance blocks.
  const Eigen::MatrixXd d12 = k1 * u * v.transpose() * k2;
  const Eigen::MatrixXd d11 = -0.5 * k1 * u * sv.asDiagonal() * u.transpose() * k1;
  const Eigen::MatrixXd d22 = -0.5 * k2 * v * sv.asDiagonal() * v.transpose() * k2;

  CorrelationResult r;
  r.correlations = sv;
  r.loss = -sv.sum();
  r.grad_h1 = -scale * (2.0 * c1 * d11 + c2 * d12.transpose());
  r.grad_h2 = -scale * (2.0 * c2 * d22 + c1 * d12);
  return r;
}

}  // namespace detail

/// Negative total canonical correlation between two batches of outputs and
/// its closed-form gradient. Covariances are regularized by reg * I.
/// Symmetric in its arguments bit for bit: the pair is evaluated in a
/// canonical order and the gradients swapped back.
inline CorrelationResult correlation_objective(const Eigen::MatrixXd& h1, const Eigen::MatrixXd& h2,
                                               double reg) {
  if (h1.rows() != h2.rows() || h1.cols() != h2.cols())
    throw ConfigError("correlation objective needs two n x d matrices of the same shape");
  if (h1.rows() < 2) throw ConfigError("correlation objective needs n >= 2");
  if (reg < 0.0) throw ConfigError("regularizer must be >= 0");
  if (detail::lexicographically_less(h2, h1)) {
    auto r = detail::correlation_objective_ordered(h2, h1, reg);
    std::swap(r.grad_h1, r.grad_h2);
    return r;
  }
  return detail::correlation_objective_ordered(h1, h2, reg);
}

/// Sum of the regularized canonical correlations between two output sets.
inline double total_correlation(const Eigen::MatrixXd& h1, const Eigen::MatrixXd& h2, double reg) {
  return -correlation_objective(h1, h2, reg).loss;
}

// ---------------------------------------------------------------------------
// Fully connected networks

enum class Activation { linear, sigmoid, relu };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::sigmoid: return "sigmoid";
    case Activation::relu: return "relu";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "linear") return Activation::linear;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "'");
}

struct DenseLayer {
  Eigen::MatrixXd w;  ///< in x out
  Eigen::RowVectorXd b;
  Activation act = Activation::linear;
};

class Mlp {
 public:
  std::vector<DenseLayer> layers;

  /// [in -> hidden... (hidden_act) -> out (linear)], Glorot-uniform weights,
  /// zero biases.
  static Mlp make(Eigen::Index in, const std::vector<Eigen::Index>& hidden, Eigen::Index out,
                  Activation hidden_act, Rng& rng) {
    Mlp net;
    Eigen::Index prev = in;
    auto add = [&](Eigen::Index width, Activation act) {
      DenseLayer l;
      const double bound = std::sqrt(6.0 / static_cast<double>(prev + width));
      l.w.resize(prev, width);
      for (Eigen::Index i = 0; i < l.w.size(); ++i) l.w.data()[i] = (2.0 * rng.uniform() - 1.0) * bound;
      l.b = Eigen::RowVectorXd::Zero(width);
      l.act = act;
      net.layers.push_back(std::move(l));
      prev = width;
    };
    for (auto h : hidden) add(h, hidden_act);
    add(out, Activation::linear);
    return net;
  }

  Eigen::Index input_dim() const { return layers.empty() ? 0 : layers.front().w.rows(); }
  Eigen::Index output_dim() const { return layers.empty() ? 0 : layers.back().w.cols(); }

  struct Trace {
    std::vector<Eigen::MatrixXd> outputs;  ///< outputs[0] is the input
  };

  struct Gradients {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::RowVectorXd> b;
  };

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    Trace t;
    return forward(x, t);
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Trace& trace) const {
    if (x.cols() != input_dim())
      throw ConfigError("network input has " + std::to_string(x.cols()) + " columns, expected " +
                        std::to_string(input_dim()));
    trace.outputs.clear();
    trace.outputs.push_back(x);
    for (const auto& l : layers) {
      Eigen::MatrixXd z = (trace.outputs.back() * l.w).rowwise() + l.b;
      switch (l.act) {
        case Activation::linear: break;
        case Activation::sigmoid: z = (1.0 + (-z.array()).exp()).inverse().matrix(); break;
        case Activation::relu: z = z.cwiseMax(0.0); break;
      }
      trace.outputs.push_back(std::move(z));
    }
    return trace.outputs.back();
  }

  Gradients backward(const Trace& trace, const Eigen::MatrixXd& d_out) const {
    Gradients g;
    g.w.resize(layers.size());
    g.b.resize(layers.size());
    Eigen::MatrixXd delta = d_out;
    for (std::size_t li = layers.size(); li-- > 0;) {
      const auto& l = layers[li];
      const Eigen::MatrixXd& z = trace.outputs[li + 1];
      switch (l.act) {
        case Activation::linear: break;
        case Activation::sigmoid: delta.array() *= z.array() * (1.0 - z.array()); break;
        case Activation::relu: delta.array() *= (z.array() > 0.0).cast<double>(); break;
      }
      g.w[li] = trace.outputs[li].transpose() * delta;
      g.b[li] = delta.colwise().sum();
      if (li > 0) delta = delta * l.w.transpose();
    }
    return g;
  }

  bool finite() const {
    for (const auto& l : layers)
      if (!l.w.allFinite() || !l.b.allFinite()) return false;
    return true;
  }
};

/// Adam over an ordered list of parameter blocks; block i must keep its
/// size across calls.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void begin_step() { ++t_; }

  template <class Param, class Grad>
  void update(std::size_t block, Param& param, const Grad& grad) {
    if (block >= m_.size()) {
      m_.resize(block + 1);
      v_.resize(block + 1);
    }
    if (m_[block].size() == 0) {
      m_[block] = Eigen::ArrayXd::Zero(param.size());
      v_[block] = Eigen::ArrayXd::Zero(param.size());
    }
    Eigen::Map<Eigen::ArrayXd> p(param.data(), param.size());
    Eigen::Map<const Eigen::ArrayXd> g(grad.data(), grad.size());
    m_[block] = beta1_ * m_[block] + (1.0 - beta1_) * g;
    v_[block] = beta2_ * v_[block] + (1.0 - beta2_) * g.square();
    const double c1 = 1.0 - std::pow(beta1_, t_), c2 = 1.0 - std::pow(beta2_, t_);
    p -= lr_ * (m_[block] / c1) / ((v_[block] / c2).sqrt() + eps_);
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Eigen::ArrayXd> m_, v_;
};

// ---------------------------------------------------------------------------
// Deep CCA

struct DccaOptions {
  std::vector<Eigen::Index> hidden = {128};
  Activation hidden_activation = Activation::sigmoid;
  Eigen::Index d = 128;  ///< output width of both networks
  int epochs = 20;
  Eigen::Index batch = 256;
  double reg = 1e-4;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  bool standardize = true;
  /// Fit a final linear CCA on the trained outputs so that projected
  /// coordinates are paired by canonical direction.
  bool align_outputs = true;
};

struct DccaModel {
  Standardizer sx, sy;
  Mlp net_x, net_y;
  double reg = 1e-4;
  std::vector<double> train_log;  ///< full-data objective after each epoch
  std::optional<CcaModel> alignment;

  Eigen::Index d() const { return net_x.output_dim(); }
  Eigen::Index input_dim(Side side) const {
    return side == Side::x ? net_x.input_dim() : net_y.input_dim();
  }

  /// Network outputs before alignment.
  Eigen::MatrixXd raw_project(const Eigen::MatrixXd& view, Side side) const {
    const auto& s = side == Side::x ? sx : sy;
    const auto& net = side == Side::x ? net_x : net_y;
    if (view.cols() != net.input_dim())
      throw ConfigError("projection input has " + std::to_string(view.cols()) + " columns, model expects " +
                        std::to_string(net.input_dim()));
    return net.forward(s.apply(view));
  }

  Eigen::MatrixXd project(const Eigen::MatrixXd& view, Side side) const {
    Eigen::MatrixXd h = raw_project(view, side);
    return alignment ? alignment->project(h, side) : h;
  }
};

using EpochCallback = std::function<void(int epoch, double objective)>;

inline DccaModel fit_dcca(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const DccaOptions& opt = {},
                          const EpochCallback& on_epoch = {}) {
  const Eigen::Index n = x.rows();
  if (y.rows() != n) throw ConfigError("views have different sample counts");
  if (opt.d < 1) throw ConfigError("DCCA output dimension must be >= 1");
  if (opt.epochs < 1) throw ConfigError("DCCA epochs must be >= 1");
  if (!(opt.lr > 0.0)) throw ConfigError("DCCA learning rate must be > 0");
  if (opt.reg < 0.0) throw ConfigError("DCCA regularizer must be >= 0");
  const Eigen::Index batch = std::min(opt.batch, n);
  if (batch <= opt.d)
    throw ConfigError("DCCA batch size (" + std::to_string(batch) + ") must exceed the output dimension (" +
                      std::to_string(opt.d) + ")");

  DccaModel m;
  m.reg = opt.reg;
  m.sx = opt.standardize ? Standardizer::fit(x) : Standardizer::identity(x.cols());
  m.sy = opt.standardize ? Standardizer::fit(y) : Standardizer::identity(y.cols());
  const Eigen::MatrixXd xs = m.sx.apply(x), ys = m.sy.apply(y);
  Rng init_x(mix_seed({opt.seed, 11})), init_y(mix_seed({opt.seed, 12}));
  m.net_x = Mlp::make(x.cols(), opt.hidden, opt.d, opt.hidden_activation, init_x);
  m.net_y = Mlp::make(y.cols(), opt.hidden, opt.d, opt.hidden_activation, init_y);

  Adam adam(opt.lr);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const Eigen::Index n_batches = std::max<Eigen::Index>(1, n / batch);

  auto apply = [&](Mlp& net, const Mlp::Gradients& g, std::size_t base) {
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
      adam.update(base + 2 * li, net.layers[li].w, g.w[li]);
      adam.update(base + 2 * li + 1, net.layers[li].b, g.b[li]);
    }
  };

  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    Rng rng(mix_seed({opt.seed, static_cast<std::uint64_t>(epoch), 13}));
    rng.shuffle(order);
    for (Eigen::Index b = 0; b < n_batches; ++b) {
      // The remainder rides along with the last batch.
      const Eigen::Index lo = b * batch, hi = b + 1 == n_batches ? n : lo + batch;
      Eigen::MatrixXd xb(hi - lo, x.cols()), yb(hi - lo, y.cols());
      for (Eigen::Index i = lo; i < hi; ++i) {
        xb.row(i - lo) = xs.row(order[static_cast<std::size_t>(i)]);
        yb.row(i - lo) = ys.row(order[static_cast<std::size_t>(i)]);
      }
      Mlp::Trace tx, ty;
      const Eigen::MatrixXd h1 = m.net_x.forward(xb, tx), h2 = m.net_y.forward(yb, ty);
      CorrelationResult r;
      try {
        r = correlation_objective(h1, h2, opt.reg);
      } catch (const FitError& e) {
        throw FitError("DCCA epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b + 1) + ": " +
                       e.what());
      }
      if (!std::isfinite(r.loss))
        throw FitError("DCCA epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b + 1) +
                       ": non-finite objective");
      const auto gx = m.net_x.backward(tx, r.grad_h1);
      const auto gy = m.net_y.backward(ty, r.grad_h2);
      adam.begin_step();
      apply(m.net_x, gx, 0);
      apply(m.net_y, gy, 2 * m.net_x.layers.size());
    }
    if (!m.net_x.finite() || !m.net_y.finite())
      throw FitError("DCCA epoch " + std::to_string(epoch + 1) + ": non-finite weights");
    const double obj = correlation_objective(m.net_x.forward(xs), m.net_y.forward(ys), opt.reg).loss;
    m.train_log.push_back(obj);
    if (on_epoch) on_epoch(epoch + 1, obj);
  }

  if (opt.align_outputs) {
    CcaOptions co;
    co.d = std::min(opt.d, n - 1);
    co.reg = opt.reg;
    co.standardize = true;
    m.alignment = fit_cca(m.net_x.forward(xs), m.net_y.forward(ys), co);
  }
  return m;
}

}  // namespace citerec
