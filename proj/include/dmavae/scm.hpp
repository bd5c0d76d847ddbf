#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dmavae/kinds.hpp"

namespace dmavae::scm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Linear-index structural causal model over treatment T, mediator M, outcome Y,
// proxies X and up to four latent confounder blocks:
//   z_tm -> {T, M},  z_ty -> {T, Y},  z_my -> {M, Y},  z_shared -> {T, M, Y}.
// Every latent block also feeds the proxies through the mixing map
//   X = A [z_tm; z_ty; z_my; z_shared] + sigma_x * noise.
//
//   T ~ Bern(logistic(w_tm.z_tm + w_ty.z_ty + w_shared.z_shared + t_intercept))
//   M = m_intercept + a T + g_m.z_tm + h_m.z_my + s_m.z_shared  (+ sigma_m noise,
//       or through a logistic link when M is binary)
//   Y = y_intercept + c T + b M + k T M + g_y.z_ty + h_y.z_my + s_y.z_shared
//       (+ sigma_y noise, or through a logistic link when Y is binary)
struct ScmSpec {
  int d_tm = 1;
  int d_ty = 1;
  int d_my = 1;
  int d_shared = 0;
  int d_x = 6;

  double sigma_x = 0.1;
  std::uint64_t mixing_seed = 7;
  double mixing_low = 0.5;
  double mixing_high = 1.5;
  std::optional<Matrix> mixing;  // explicit d_x x latent_dim map; generated when empty

  Vector w_tm = Vector::Constant(1, 0.6);
  Vector w_ty = Vector::Constant(1, 0.6);
  Vector w_shared;
  double t_intercept = 0.0;

  VarKind m_kind = VarKind::Continuous;
  double a = 0.5;
  Vector g_m = Vector::Constant(1, 0.8);
  Vector h_m = Vector::Constant(1, 0.8);
  Vector s_m;
  double m_intercept = 0.0;
  double sigma_m = 0.5;

  VarKind y_kind = VarKind::Continuous;
  double c = 0.8;
  double b = 1.0;
  double k = 0.0;
  Vector g_y = Vector::Constant(1, 0.8);
  Vector h_y = Vector::Constant(1, 0.8);
  Vector s_y;
  double y_intercept = 0.0;
  double sigma_y = 0.5;

  std::uint64_t seed = 2023;

  int latent_dim() const { return d_tm + d_ty + d_my + d_shared; }
  bool is_linear_continuous() const {
    return m_kind == VarKind::Continuous && y_kind == VarKind::Continuous;
  }
};

ScmSpec default_spec();

// Throws ErrorKind::Spec describing the first violated invariant.
void validate(const ScmSpec& spec);

// The proxy mixing map A, d_x x latent_dim, columns ordered [tm, ty, my, shared].
Matrix mixing_map(const ScmSpec& spec);

enum class OracleMethod { ClosedForm, MonteCarlo, Enumeration };

std::string_view to_string(OracleMethod method) noexcept;
OracleMethod parse_oracle_method(std::string_view text);

struct GroundTruthEffects {
  double nde = 0.0;
  double nie = 0.0;
  double nie_r = 0.0;
  double te = 0.0;
  OracleMethod method = OracleMethod::ClosedForm;
  double se_nde = 0.0;
  double se_nie = 0.0;
  double se_nie_r = 0.0;
  double se_te = 0.0;
  std::size_t n_mc = 0;
  std::uint64_t seed = 0;
};

struct Dataset {
  std::vector<int> t;
  std::vector<double> m;  // class index for categorical mediators
  std::vector<double> y;
  Matrix x;               // d_x x n, one record per column
  VarKind m_kind = VarKind::Continuous;
  VarKind y_kind = VarKind::Continuous;
  int m_classes = 0;      // number of levels, categorical only
  std::optional<GroundTruthEffects> truth;
  std::uint64_t seed = 0;

  std::size_t size() const { return t.size(); }
  int x_dim() const { return static_cast<int>(x.rows()); }
};

// Throws ErrorKind::Spec when the dataset violates its invariants.
void validate(const Dataset& data);

// Pure function of (spec, n, seed). Attaches the spec's default ground truth.
Dataset sample_dataset(const ScmSpec& spec, std::size_t n, std::uint64_t seed);

inline constexpr std::size_t kDefaultMonteCarloUnits = 1'000'000;

// closed_form:  linear continuous M and Y without interaction.
// enumeration:  binary M; exact sums over mediator values and Gauss-Hermite
//               product quadrature over the Gaussian latents.
// monte_carlo:  shared-noise unit-level counterfactuals.
GroundTruthEffects oracle_effects(const ScmSpec& spec, OracleMethod method,
                                  std::size_t n_mc = kDefaultMonteCarloUnits,
                                  std::uint64_t seed = 0);

// Closed form when it applies, otherwise enumeration for binary mediators
// with small latent dimension, otherwise Monte Carlo keyed by spec.seed.
GroundTruthEffects default_oracle(const ScmSpec& spec);

enum class CaseId { Full, Fig1b, Case1, Case2, Case3, Case4, Case5, Case6 };

std::string_view to_string(CaseId id) noexcept;
CaseId parse_case_id(std::string_view text);
const std::vector<CaseId>& generalisation_cases();  // case1..case6

// case1: z_tm only   case2: z_ty only   case3: z_my only
// case4: z_tm+z_ty   case5: z_tm+z_my   case6: z_ty+z_my
// full:  all three   fig1b: one shared block feeding T, M and Y
ScmSpec case_spec(CaseId id, const ScmSpec& base);

// Gauss-Hermite rule for E[f(Z)], Z ~ N(0,1): nodes and weights summing to 1.
std::pair<Vector, Vector> gauss_hermite_normal(int n_nodes);

}  // namespace dmavae::scm
