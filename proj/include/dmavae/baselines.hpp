#pragma once

#include <Eigen/Dense>

#include "dmavae/estimate.hpp"
#include "dmavae/scm.hpp"

namespace dmavae::baselines {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct OlsFit {
  Vector coef;
  Vector se;             // conventional standard errors
  double residual_var = 0.0;  // RSS / (n - p)
};

// Least squares by column-pivoted Householder QR. Throws SingularDesign when
// the design is rank deficient or has fewer rows than columns.
OlsFit ols(const Matrix& design, const Vector& response);

struct LsemFit {
  double m_intercept = 0.0;
  double a = 0.0;
  double y_intercept = 0.0;
  double c_prime = 0.0;
  double b = 0.0;
  double se_a = 0.0;
  double se_c_prime = 0.0;
  double se_b = 0.0;
  double m_residual_var = 0.0;
  double y_residual_var = 0.0;
  std::size_t n = 0;
};

// M ~ 1 + T and Y ~ 1 + T + M. Binary columns are fitted as linear
// probabilities; categorical mediators are rejected.
LsemFit lsem_fit(const scm::Dataset& data);

// Product of coefficients: nde = c', nie = a b, nie_r = -a b, te = nde - nie_r.
estimate::EffectEstimate lsem_effects(const LsemFit& fit);

}  // namespace dmavae::baselines
