#pragma once

#include <Eigen/Dense>

#include <string>

#include "citerec/common.hpp"

namespace citerec {

enum class Side { x, y };

/// Per-feature z-scoring with statistics from the training rows.
/// Constant features keep scale 1 so they map to 0.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;

  static Standardizer identity(Eigen::Index dim) {
    return {Eigen::RowVectorXd::Zero(dim), Eigen::RowVectorXd::Ones(dim)};
  }

  static Standardizer fit(const Eigen::MatrixXd& x, bool scale_features = true) {
    Standardizer s;
    s.mean = x.colwise().mean();
    s.scale = Eigen::RowVectorXd::Ones(x.cols());
    if (scale_features && x.rows() > 1) {
      Eigen::RowVectorXd var =
          (x.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(x.rows() - 1);
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (var(j) > 0.0) s.scale(j) = std::sqrt(var(j));
    }
    return s;
  }

  Eigen::Index dim() const { return mean.size(); }

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean).array().rowwise() / scale.array();
  }
};

/// Sample covariance of two row-sample matrices that are already centered.
inline Eigen::MatrixXd cross_covariance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return a.transpose() * b / static_cast<double>(a.rows() - 1);
}

/// S^{-1/2} for a symmetric positive definite S. Throws FitError when S is
/// numerically singular.
inline Eigen::MatrixXd inverse_sqrt_spd(const Eigen::MatrixXd& s, const char* what = "covariance") {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
  if (es.info() != Eigen::Success) throw FitError(std::string("eigendecomposition of ") + what + " failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double tol = 1e-12 * std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() <= tol)
    throw FitError(std::string(what) +
                   " is rank deficient; use a covariance regularizer reg > 0");
  return es.eigenvectors() * ev.cwiseSqrt().cwiseInverse().asDiagonal() * es.eigenvectors().transpose();
}

struct CcaOptions {
  Eigen::Index d = 128;
  double reg = 1e-4;
  bool standardize = true;
};

/// Linear CCA projections. Projection of a view is
///   ((view - mean) / scale) * W
/// and column j of the projected views has correlation `correlations(j)`
/// on the fitting data.
struct CcaModel {
  Eigen::Index d = 0;
  double reg = 0.0;
  Standardizer sx, sy;
  Eigen::MatrixXd wx, wy;
  Eigen::VectorXd correlations;  ///< descending

  Eigen::Index input_dim(Side side) const { return side == Side::x ? wx.rows() : wy.rows(); }

  Eigen::MatrixXd project(const Eigen::MatrixXd& view, Side side) const {
    const auto& s = side == Side::x ? sx : sy;
    const auto& w = side == Side::x ? wx : wy;
    if (view.cols() != w.rows())
      throw ConfigError("projection input has " + std::to_string(view.cols()) + " columns, model expects " +
                        std::to_string(w.rows()));
    return s.apply(view) * w;
  }
};

/// Fits CCA by whitening: T = Sxx^{-1/2} Sxy Syy^{-1/2}, whose singular
/// values are the canonical correlations and whose singular vectors, mapped
/// back through the whitening, are the projection directions. `reg` is added
/// to the diagonals of Sxx and Syy.
inline CcaModel fit_cca(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const CcaOptions& opt = {}) {
  const Eigen::Index n = x.rows();
  if (y.rows() != n) throw ConfigError("views have different sample counts");
  if (n < 2) throw ConfigError("CCA needs at least 2 samples");
  if (x.cols() < 1 || y.cols() < 1) throw ConfigError("views must have at least one feature");
  if (opt.d < 1 || opt.d > std::min({x.cols(), y.cols(), n - 1}))
    throw ConfigError("CCA dimension d=" + std::to_string(opt.d) + " must be in [1, min(d_x, d_y, n-1)=" +
                      std::to_string(std::min({x.cols(), y.cols(), n - 1})) + "]");
  if (opt.reg < 0.0) throw ConfigError("CCA regularizer must be >= 0");

  CcaModel m;
  m.d = opt.d;
  m.reg = opt.reg;
  m.sx = Standardizer::fit(x, opt.standardize);
  m.sy = Standardizer::fit(y, opt.standardize);
  const Eigen::MatrixXd xc = m.sx.apply(x), yc = m.sy.apply(y);

  Eigen::MatrixXd sxx = cross_covariance(xc, xc), syy = cross_covariance(yc, yc);
  sxx.diagonal().array() += opt.reg;
  syy.diagonal().array() += opt.reg;
  const Eigen::MatrixXd sxy = cross_covariance(xc, yc);

  const Eigen::MatrixXd kx = inverse_sqrt_spd(sxx, "text-view covariance");
  const Eigen::MatrixXd ky = inverse_sqrt_spd(syy, "node-view covariance");
  const Eigen::MatrixXd t = kx * sxy * ky;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(t, Eigen::ComputeThinU | Eigen::ComputeThinV);
  m.correlations = svd.singularValues().head(opt.d);
  m.wx = kx * svd.matrixU().leftCols(opt.d);
  m.wy = ky * svd.matrixV().leftCols(opt.d);
  return m;
}

}  // namespace citerec
