#include "dmavae/baselines.hpp"

#include <cmath>

#include "dmavae/error.hpp"

namespace dmavae::baselines {

OlsFit ols(const Matrix& x, const Vector& y) {
  require(x.rows() == y.size(), ErrorKind::Shape, "ols: design and response lengths differ");
  require(x.cols() >= 1, ErrorKind::Shape, "ols: empty design");
  require(x.allFinite() && y.allFinite(), ErrorKind::Domain, "ols: non-finite input");
  if (x.rows() < x.cols()) fail(ErrorKind::SingularDesign, "ols: fewer rows than columns");
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  // Relative threshold on the R diagonal; a constant column next to the
  // intercept lands far below it.
  qr.setThreshold(1e-10);
  if (qr.rank() < x.cols())
    fail(ErrorKind::SingularDesign, "ols: design matrix is rank deficient (rank " + std::to_string(qr.rank()) +
                                        " < " + std::to_string(x.cols()) + ")");
  OlsFit fit;
  fit.coef = qr.solve(y);
  const Vector resid = y - x * fit.coef;
  const auto dof = x.rows() - x.cols();
  fit.residual_var = dof > 0 ? resid.squaredNorm() / static_cast<double>(dof) : 0.0;
  // (X'X)^-1 = P R^-1 R^-T P'.
  const auto p = x.cols();
  const Matrix r = qr.matrixR().topLeftCorner(p, p).triangularView<Eigen::Upper>();
  const Matrix rinv = r.triangularView<Eigen::Upper>().solve(Matrix::Identity(p, p));
  const Matrix cov_perm = rinv * rinv.transpose();
  const Matrix cov = qr.colsPermutation() * cov_perm * qr.colsPermutation().transpose();
  fit.se = (fit.residual_var * cov.diagonal().array()).sqrt().matrix();
  return fit;
}

LsemFit lsem_fit(const scm::Dataset& d) {
  require(d.m_kind != VarKind::Categorical, ErrorKind::Unsupported, "LSEM needs a continuous or binary mediator");
  const auto n = static_cast<Eigen::Index>(d.size());
  Matrix xm(n, 2), xy(n, 3);
  Vector m(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = d.t[static_cast<std::size_t>(i)];
    m(i) = d.m[static_cast<std::size_t>(i)];
    y(i) = d.y[static_cast<std::size_t>(i)];
    xm.row(i) << 1.0, t;
    xy.row(i) << 1.0, t, m(i);
  }
  const OlsFit fm = ols(xm, m);
  const OlsFit fy = ols(xy, y);
  LsemFit f;
  f.m_intercept = fm.coef(0);
  f.a = fm.coef(1);
  f.se_a = fm.se(1);
  f.m_residual_var = fm.residual_var;
  f.y_intercept = fy.coef(0);
  f.c_prime = fy.coef(1);
  f.b = fy.coef(2);
  f.se_c_prime = fy.se(1);
  f.se_b = fy.se(2);
  f.y_residual_var = fy.residual_var;
  f.n = d.size();
  return f;
}

estimate::EffectEstimate lsem_effects(const LsemFit& f) {
  estimate::EffectEstimate e;
  e.nde = f.c_prime;
  e.nie = f.a * f.b;
  e.nie_r = -(f.a * f.b);
  e.te = e.nde - e.nie_r;
  e.se_nde = f.se_c_prime;
  // Delta method for the product a b.
  e.se_nie = std::sqrt(f.b * f.b * f.se_a * f.se_a + f.a * f.a * f.se_b * f.se_b);
  e.se_nie_r = e.se_nie;
  e.se_te = std::sqrt(e.se_nde * e.se_nde + e.se_nie * e.se_nie);
  return e;
}

}  // namespace dmavae::baselines
