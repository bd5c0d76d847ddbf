#include "dmavae/scm.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "dmavae/error.hpp"
#include "dmavae/nn.hpp"
#include "dmavae/rng.hpp"

namespace dmavae::scm {

using nn::logistic;

ScmSpec default_spec() { return ScmSpec{}; }

namespace {

void check_coeffs(const Vector& v, int dim, const char* name) {
  if (v.size() != dim) {
    std::ostringstream os;
    os << "coefficient vector " << name << " has length " << v.size() << ", latent block has dim " << dim;
    fail(ErrorKind::Spec, os.str());
  }
  require(v.allFinite(), ErrorKind::Spec, std::string("coefficient vector ") + name + " is not finite");
}

// Latent draw for one unit, split into blocks.
struct Latents {
  Vector tm, ty, my, shared;
};

struct Structural {
  const ScmSpec& s;

  double treatment_index(const Latents& z) const {
    double v = s.t_intercept;
    if (s.d_tm) v += s.w_tm.dot(z.tm);
    if (s.d_ty) v += s.w_ty.dot(z.ty);
    if (s.d_shared) v += s.w_shared.dot(z.shared);
    return v;
  }
  double mediator_index(double t, const Latents& z) const {
    double v = s.m_intercept + s.a * t;
    if (s.d_tm) v += s.g_m.dot(z.tm);
    if (s.d_my) v += s.h_m.dot(z.my);
    if (s.d_shared) v += s.s_m.dot(z.shared);
    return v;
  }
  double outcome_index(double t, double m, const Latents& z) const {
    double v = s.y_intercept + s.c * t + s.b * m + s.k * t * m;
    if (s.d_ty) v += s.g_y.dot(z.ty);
    if (s.d_my) v += s.h_y.dot(z.my);
    if (s.d_shared) v += s.s_y.dot(z.shared);
    return v;
  }
  // Unit-level mediator given its exogenous noise (normal draw or uniform).
  double mediator(double t, const Latents& z, double noise) const {
    const double idx = mediator_index(t, z);
    if (s.m_kind == VarKind::Continuous) return idx + s.sigma_m * noise;
    return noise < logistic(idx) ? 1.0 : 0.0;
  }
  double outcome(double t, double m, const Latents& z, double noise) const {
    const double idx = outcome_index(t, m, z);
    if (s.y_kind == VarKind::Continuous) return idx + s.sigma_y * noise;
    return noise < logistic(idx) ? 1.0 : 0.0;
  }
  double outcome_mean(double t, double m, const Latents& z) const {
    const double idx = outcome_index(t, m, z);
    return s.y_kind == VarKind::Continuous ? idx : logistic(idx);
  }
};

Latents split_latents(const ScmSpec& s, const Vector& z) {
  Latents out;
  Eigen::Index o = 0;
  out.tm = z.segment(o, s.d_tm); o += s.d_tm;
  out.ty = z.segment(o, s.d_ty); o += s.d_ty;
  out.my = z.segment(o, s.d_my); o += s.d_my;
  out.shared = z.segment(o, s.d_shared);
  return out;
}

class Accumulator {
 public:
  void add(double v) {
    ++n_;
    const double d = v - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (v - mean_);
  }
  double mean() const { return mean_; }
  double standard_error() const {
    if (n_ < 2) return 0.0;
    return std::sqrt(m2_ / static_cast<double>(n_ - 1) / static_cast<double>(n_));
  }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

GroundTruthEffects closed_form(const ScmSpec& spec) {
  if (!spec.is_linear_continuous() || spec.k != 0.0)
    fail(ErrorKind::Unsupported, "closed_form oracle requires continuous M and Y without T x M interaction");
  GroundTruthEffects g;
  g.method = OracleMethod::ClosedForm;
  g.nde = spec.c;
  g.nie = spec.a * spec.b;
  g.nie_r = -(spec.a * spec.b);
  g.te = g.nde - g.nie_r;
  return g;
}

GroundTruthEffects monte_carlo(const ScmSpec& spec, std::size_t n_mc, std::uint64_t seed) {
  require(n_mc >= 2, ErrorKind::Argument, "monte_carlo oracle needs at least two units");
  const Structural eq{spec};
  Rng rng = make_rng(seed, {0x6d63ULL});
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;
  const bool cont_m = spec.m_kind == VarKind::Continuous;
  const bool cont_y = spec.y_kind == VarKind::Continuous;
  Accumulator nde, nie, nie_r, te;
  Vector zv(spec.latent_dim());
  for (std::size_t i = 0; i < n_mc; ++i) {
    for (Eigen::Index j = 0; j < zv.size(); ++j) zv(j) = normal(rng);
    const Latents z = split_latents(spec, zv);
    const double noise_m = cont_m ? normal(rng) : uniform(rng);
    const double noise_y = cont_y ? normal(rng) : uniform(rng);
    const double m0 = eq.mediator(0.0, z, noise_m);
    const double m1 = eq.mediator(1.0, z, noise_m);
    const double y00 = eq.outcome(0.0, m0, z, noise_y);
    const double y10 = eq.outcome(1.0, m0, z, noise_y);
    const double y01 = eq.outcome(0.0, m1, z, noise_y);
    const double y11 = eq.outcome(1.0, m1, z, noise_y);
    nde.add(y10 - y00);
    nie.add(y01 - y00);
    nie_r.add(y10 - y11);
    te.add(y11 - y00);
  }
  GroundTruthEffects g;
  g.method = OracleMethod::MonteCarlo;
  g.nde = nde.mean();
  g.nie = nie.mean();
  g.nie_r = nie_r.mean();
  g.te = g.nde - g.nie_r;
  g.se_nde = nde.standard_error();
  g.se_nie = nie.standard_error();
  g.se_nie_r = nie_r.standard_error();
  g.se_te = te.standard_error();
  g.n_mc = n_mc;
  g.seed = seed;
  return g;
}

GroundTruthEffects enumeration(const ScmSpec& spec) {
  if (spec.m_kind != VarKind::Binary)
    fail(ErrorKind::Unsupported, "enumeration oracle requires a binary mediator");
  const int dim = spec.latent_dim();
  require(dim <= 8, ErrorKind::Unsupported, "enumeration oracle supports at most 8 latent dimensions");
  constexpr double kBudget = 2.0e6;
  const int per_dim = dim == 0 ? 1 : std::clamp(static_cast<int>(std::floor(std::pow(kBudget, 1.0 / dim))), 6, 64);
  const auto [nodes, weights] = gauss_hermite_normal(per_dim);
  const Structural eq{spec};

  std::vector<int> index(dim, 0);
  Vector zv(dim);
  double nde = 0.0, nie = 0.0, nie_r = 0.0;
  while (true) {
    double w = 1.0;
    for (int j = 0; j < dim; ++j) {
      zv(j) = nodes(index[j]);
      w *= weights(index[j]);
    }
    const Latents z = split_latents(spec, zv);
    const double p0 = logistic(eq.mediator_index(0.0, z));
    const double p1 = logistic(eq.mediator_index(1.0, z));
    // E[Y(t, M(t')) | z] = sum over m of P(M(t') = m | z) E[Y | t, m, z]
    auto ey = [&](double t, double p) {
      return (1.0 - p) * eq.outcome_mean(t, 0.0, z) + p * eq.outcome_mean(t, 1.0, z);
    };
    const double y00 = ey(0.0, p0), y10 = ey(1.0, p0), y01 = ey(0.0, p1), y11 = ey(1.0, p1);
    nde += w * (y10 - y00);
    nie += w * (y01 - y00);
    nie_r += w * (y10 - y11);
    int j = 0;
    for (; j < dim; ++j) {
      if (++index[j] < per_dim) break;
      index[j] = 0;
    }
    if (j == dim) break;
  }
  GroundTruthEffects g;
  g.method = OracleMethod::Enumeration;
  g.nde = nde;
  g.nie = nie;
  g.nie_r = nie_r;
  g.te = g.nde - g.nie_r;
  return g;
}

}  // namespace

void validate(const ScmSpec& s) {
  require(s.d_tm >= 0 && s.d_ty >= 0 && s.d_my >= 0 && s.d_shared >= 0, ErrorKind::Spec,
          "latent dims must be >= 0");
  require(s.d_x >= 1, ErrorKind::Spec, "d_x must be >= 1");
  require(s.d_x >= s.latent_dim(), ErrorKind::Spec,
          "d_x must be at least the total latent dimension so the proxies can carry every confounder");
  require(s.sigma_x > 0 && s.sigma_m > 0 && s.sigma_y > 0, ErrorKind::Spec, "noise scales must be > 0");
  require(s.m_kind != VarKind::Categorical && s.y_kind != VarKind::Categorical, ErrorKind::Spec,
          "synthetic M and Y must be continuous or binary");
  require(s.mixing_low <= s.mixing_high, ErrorKind::Spec, "mixing_low must not exceed mixing_high");
  check_coeffs(s.w_tm, s.d_tm, "w_tm");
  check_coeffs(s.w_ty, s.d_ty, "w_ty");
  check_coeffs(s.w_shared, s.d_shared, "w_shared");
  check_coeffs(s.g_m, s.d_tm, "g_m");
  check_coeffs(s.h_m, s.d_my, "h_m");
  check_coeffs(s.s_m, s.d_shared, "s_m");
  check_coeffs(s.g_y, s.d_ty, "g_y");
  check_coeffs(s.h_y, s.d_my, "h_y");
  check_coeffs(s.s_y, s.d_shared, "s_y");
  for (double v : {s.t_intercept, s.a, s.m_intercept, s.c, s.b, s.k, s.y_intercept})
    require(std::isfinite(v), ErrorKind::Spec, "structural coefficients must be finite");
  if (s.mixing) {
    require(s.mixing->rows() == s.d_x && s.mixing->cols() == s.latent_dim(), ErrorKind::Spec,
            "explicit mixing map must be d_x x latent_dim");
  }
  if (s.latent_dim() > 0) {
    const Matrix a = mixing_map(s);
    Eigen::ColPivHouseholderQR<Matrix> qr(a);
    require(qr.rank() == a.cols(), ErrorKind::Spec, "mixing map must have full column rank");
  }
}

Matrix mixing_map(const ScmSpec& s) {
  if (s.mixing) return *s.mixing;
  Rng rng = make_rng(s.mixing_seed, {0x6d6978ULL});
  std::uniform_real_distribution<double> dist(s.mixing_low, s.mixing_high);
  Matrix a(s.d_x, s.latent_dim());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) a(i, j) = dist(rng);
  return a;
}

std::string_view to_string(OracleMethod method) noexcept {
  switch (method) {
    case OracleMethod::ClosedForm: return "closed_form";
    case OracleMethod::MonteCarlo: return "monte_carlo";
    case OracleMethod::Enumeration: return "enumeration";
  }
  return "closed_form";
}

OracleMethod parse_oracle_method(std::string_view text) {
  if (text == "closed_form") return OracleMethod::ClosedForm;
  if (text == "monte_carlo") return OracleMethod::MonteCarlo;
  if (text == "enumeration") return OracleMethod::Enumeration;
  fail(ErrorKind::Argument, "unknown oracle method '" + std::string(text) + "'");
}

void validate(const Dataset& d) {
  const std::size_t n = d.t.size();
  require(n >= 1, ErrorKind::Spec, "dataset is empty");
  require(d.m.size() == n && d.y.size() == n && static_cast<std::size_t>(d.x.cols()) == n, ErrorKind::Spec,
          "dataset columns have different lengths");
  require(d.x.rows() >= 1, ErrorKind::Spec, "dataset has no proxy columns");
  require(d.x.allFinite(), ErrorKind::Spec, "proxy values must be finite");
  require(d.y_kind != VarKind::Categorical, ErrorKind::Spec, "categorical outcomes are not supported");
  if (d.m_kind == VarKind::Categorical) require(d.m_classes >= 2, ErrorKind::Spec, "categorical mediator needs >= 2 classes");
  for (std::size_t i = 0; i < n; ++i) {
    require(d.t[i] == 0 || d.t[i] == 1, ErrorKind::Spec, "treatment must be 0 or 1");
    require(std::isfinite(d.m[i]) && std::isfinite(d.y[i]), ErrorKind::Spec, "mediator/outcome must be finite");
    if (d.m_kind == VarKind::Binary) require(d.m[i] == 0.0 || d.m[i] == 1.0, ErrorKind::Spec, "binary mediator must be 0 or 1");
    if (d.m_kind == VarKind::Categorical)
      require(d.m[i] >= 0 && d.m[i] < d.m_classes && d.m[i] == std::floor(d.m[i]), ErrorKind::Spec,
              "categorical mediator must be a class index");
    if (d.y_kind == VarKind::Binary) require(d.y[i] == 0.0 || d.y[i] == 1.0, ErrorKind::Spec, "binary outcome must be 0 or 1");
  }
}

Dataset sample_dataset(const ScmSpec& spec, std::size_t n, std::uint64_t seed) {
  require(n >= 1, ErrorKind::Argument, "sample_dataset: n must be >= 1");
  validate(spec);
  const Matrix a = mixing_map(spec);
  const Structural eq{spec};
  Rng rng = make_rng(seed, {0x73616dULL});
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform;

  Dataset d;
  d.m_kind = spec.m_kind;
  d.y_kind = spec.y_kind;
  d.seed = seed;
  d.t.resize(n);
  d.m.resize(n);
  d.y.resize(n);
  d.x.resize(spec.d_x, static_cast<Eigen::Index>(n));
  Vector zv(spec.latent_dim());
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < zv.size(); ++j) zv(j) = normal(rng);
    const Latents z = split_latents(spec, zv);
    auto col = d.x.col(static_cast<Eigen::Index>(i));
    if (zv.size() > 0) col = a * zv; else col.setZero();
    for (Eigen::Index j = 0; j < col.size(); ++j) col(j) += spec.sigma_x * normal(rng);
    const int t = uniform(rng) < logistic(eq.treatment_index(z)) ? 1 : 0;
    const double noise_m = spec.m_kind == VarKind::Continuous ? normal(rng) : uniform(rng);
    const double noise_y = spec.y_kind == VarKind::Continuous ? normal(rng) : uniform(rng);
    d.t[i] = t;
    d.m[i] = eq.mediator(t, z, noise_m);
    d.y[i] = eq.outcome(t, d.m[i], z, noise_y);
  }
  d.truth = default_oracle(spec);
  return d;
}

GroundTruthEffects oracle_effects(const ScmSpec& spec, OracleMethod method, std::size_t n_mc,
                                  std::uint64_t seed) {
  validate(spec);
  switch (method) {
    case OracleMethod::ClosedForm: return closed_form(spec);
    case OracleMethod::MonteCarlo: return monte_carlo(spec, n_mc, seed);
    case OracleMethod::Enumeration: return enumeration(spec);
  }
  fail(ErrorKind::Argument, "unknown oracle method");
}

GroundTruthEffects default_oracle(const ScmSpec& spec) {
  if (spec.is_linear_continuous() && spec.k == 0.0) return oracle_effects(spec, OracleMethod::ClosedForm);
  if (spec.m_kind == VarKind::Binary && spec.latent_dim() <= 4)
    return oracle_effects(spec, OracleMethod::Enumeration);
  return oracle_effects(spec, OracleMethod::MonteCarlo, kDefaultMonteCarloUnits, spec.seed);
}

std::string_view to_string(CaseId id) noexcept {
  switch (id) {
    case CaseId::Full: return "full";
    case CaseId::Fig1b: return "fig1b";
    case CaseId::Case1: return "case1";
    case CaseId::Case2: return "case2";
    case CaseId::Case3: return "case3";
    case CaseId::Case4: return "case4";
    case CaseId::Case5: return "case5";
    case CaseId::Case6: return "case6";
  }
  return "full";
}

CaseId parse_case_id(std::string_view text) {
  for (CaseId id : {CaseId::Full, CaseId::Fig1b, CaseId::Case1, CaseId::Case2, CaseId::Case3, CaseId::Case4,
                    CaseId::Case5, CaseId::Case6}) {
    if (to_string(id) == text) return id;
  }
  fail(ErrorKind::Argument, "unknown case id '" + std::string(text) + "'");
}

const std::vector<CaseId>& generalisation_cases() {
  static const std::vector<CaseId> cases{CaseId::Case1, CaseId::Case2, CaseId::Case3,
                                         CaseId::Case4, CaseId::Case5, CaseId::Case6};
  return cases;
}

namespace {

// Enables a block at the base dimension (or 1), reusing base coefficients when
// they fit and broadcasting a default otherwise.
void enable(int& dim, int base_dim, std::initializer_list<std::pair<Vector*, double>> coeffs) {
  dim = base_dim > 0 ? base_dim : 1;
  for (auto [v, fallback] : coeffs) {
    if (v->size() != dim) *v = Vector::Constant(dim, v->size() > 0 ? (*v)(0) : fallback);
  }
}

void disable(int& dim, std::initializer_list<Vector*> coeffs) {
  dim = 0;
  for (Vector* v : coeffs) v->resize(0);
}

}  // namespace

ScmSpec case_spec(CaseId id, const ScmSpec& base) {
  validate(base);
  ScmSpec s = base;
  bool tm = false, ty = false, my = false, shared = false;
  switch (id) {
    case CaseId::Full: tm = ty = my = true; break;
    case CaseId::Fig1b: shared = true; break;
    case CaseId::Case1: tm = true; break;
    case CaseId::Case2: ty = true; break;
    case CaseId::Case3: my = true; break;
    case CaseId::Case4: tm = ty = true; break;
    case CaseId::Case5: tm = my = true; break;
    case CaseId::Case6: ty = my = true; break;
  }
  if (tm) enable(s.d_tm, base.d_tm, {{&s.w_tm, 0.6}, {&s.g_m, 0.8}});
  else disable(s.d_tm, {&s.w_tm, &s.g_m});
  if (ty) enable(s.d_ty, base.d_ty, {{&s.w_ty, 0.6}, {&s.g_y, 0.8}});
  else disable(s.d_ty, {&s.w_ty, &s.g_y});
  if (my) enable(s.d_my, base.d_my, {{&s.h_m, 0.8}, {&s.h_y, 0.8}});
  else disable(s.d_my, {&s.h_m, &s.h_y});
  if (shared) enable(s.d_shared, base.d_shared, {{&s.w_shared, 0.6}, {&s.s_m, 0.8}, {&s.s_y, 0.8}});
  else disable(s.d_shared, {&s.w_shared, &s.s_m, &s.s_y});
  if (s.mixing && s.mixing->cols() != s.latent_dim()) s.mixing.reset();
  validate(s);
  return s;
}

std::pair<Vector, Vector> gauss_hermite_normal(int n_nodes) {
  require(n_nodes >= 1, ErrorKind::Argument, "gauss_hermite_normal: need at least one node");
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
  Matrix jacobi = Matrix::Zero(n_nodes, n_nodes);
  for (int i = 1; i < n_nodes; ++i) {
    jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
  Vector nodes = eig.eigenvalues();
  Vector weights = eig.eigenvectors().row(0).transpose().array().square();
  weights /= weights.sum();
  return {nodes, weights};
}

}  // namespace dmavae::scm
