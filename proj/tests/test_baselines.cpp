#include "doctest.h"

#include <cmath>

#include "dmavae/baselines.hpp"
#include "dmavae/error.hpp"
#include "dmavae/scm.hpp"

using namespace dmavae;
using baselines::Matrix;
using baselines::Vector;

namespace {

// Normal equations in long double with Gaussian elimination and partial pivoting.
std::vector<long double> normal_equations_oracle(const Matrix& X, const Vector& y) {
  const int p = static_cast<int>(X.cols());
  std::vector<std::vector<long double>> a(p, std::vector<long double>(p + 1, 0.0L));
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < p; ++j)
      for (Eigen::Index r = 0; r < X.rows(); ++r) a[i][j] += static_cast<long double>(X(r, i)) * X(r, j);
    for (Eigen::Index r = 0; r < X.rows(); ++r) a[i][p] += static_cast<long double>(X(r, i)) * y(r);
  }
  for (int c = 0; c < p; ++c) {
    int piv = c;
    for (int r = c + 1; r < p; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    for (int r = 0; r < p; ++r) {
      if (r == c) continue;
      const long double f = a[r][c] / a[c][c];
      for (int k = c; k <= p; ++k) a[r][k] -= f * a[c][k];
    }
  }
  std::vector<long double> out(p);
  for (int i = 0; i < p; ++i) out[i] = a[i][p] / a[i][i];
  return out;
}

scm::Dataset noiseless(std::size_t n) {
  scm::Dataset d;
  d.x = Matrix::Zero(1, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    // M disturbance sums to zero within each arm (n a multiple of 4), so a is exact.
    const int t = static_cast<int>(i % 2);
    const double m = 0.5 * t + ((i / 2) % 2 ? -0.7 : 0.7);
    d.t.push_back(t);
    d.m.push_back(m);
    d.y.push_back(0.8 * t + 1.0 * m);
  }
  return d;
}

}  // namespace

TEST_CASE("ols: intercept-only design returns the constant") {
  const Matrix X = Matrix::Ones(5, 1);
  const Vector y = Vector::Constant(5, 3.25);
  const auto fit = baselines::ols(X, y);
  CHECK(fit.coef(0) == doctest::Approx(3.25).epsilon(1e-15));
}

TEST_CASE("ols: exact line is interpolated") {
  Matrix X(4, 2);
  Vector y(4);
  for (int i = 0; i < 4; ++i) {
    X(i, 0) = 1;
    X(i, 1) = i - 1.5;
    y(i) = 2 * X(i, 1) + 1;
  }
  const auto fit = baselines::ols(X, y);
  CHECK(std::abs(fit.coef(0) - 1) < 1e-14);
  CHECK(std::abs(fit.coef(1) - 2) < 1e-14);
}

TEST_CASE("ols: random 200x3 system matches the extended-precision oracle") {
  std::mt19937_64 g(17);
  std::normal_distribution<double> nd;
  for (int trial = 0; trial < 5; ++trial) {
    Matrix X(200, 3);
    Vector y(200);
    for (int i = 0; i < 200; ++i) {
      X(i, 0) = 1;
      X(i, 1) = nd(g);
      X(i, 2) = 0.3 * X(i, 1) + nd(g);
      y(i) = 0.5 - X(i, 1) + 2 * X(i, 2) + nd(g);
    }
    const auto fit = baselines::ols(X, y);
    const auto oracle = normal_equations_oracle(X, y);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(fit.coef(j) - static_cast<double>(oracle[j])) < 1e-8);
    CHECK(fit.se.minCoeff() > 0);
  }
}

TEST_CASE("ols: rank-deficient and short designs are rejected") {
  Matrix X(6, 2);
  X.col(0).setOnes();
  X.col(1).setConstant(2.0);
  try {
    baselines::ols(X, Vector::Ones(6));
    FAIL("expected singular design");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::SingularDesign);
  }
  CHECK_THROWS_AS(baselines::ols(Matrix::Ones(1, 2), Vector::Ones(1)), Error);
}

TEST_CASE("lsem: noiseless structural data is recovered exactly") {
  const auto fit = baselines::lsem_fit(noiseless(400));
  CHECK(std::abs(fit.a - 0.5) < 1e-12);
  CHECK(std::abs(fit.b - 1.0) < 1e-12);
  CHECK(std::abs(fit.c_prime - 0.8) < 1e-12);
  auto d = noiseless(400);
  for (std::size_t i = 0; i < d.size(); ++i) d.m[i] = 0.5 * d.t[i];
  for (std::size_t i = 0; i < d.size(); ++i) d.y[i] = 0.8 * d.t[i] + d.m[i] + (i % 3 == 0 ? 0.1 : -0.05);
  // M collinear with T makes the outcome design singular.
  CHECK_THROWS_AS(baselines::lsem_fit(d), Error);
}

TEST_CASE("lsem: constant treatment is a singular design") {
  auto d = noiseless(50);
  for (auto& t : d.t) t = 1;
  CHECK_THROWS_AS(baselines::lsem_fit(d), Error);
}

TEST_CASE("lsem: unconfounded default data recovers (a, b, c')") {
  auto spec = scm::default_spec();
  spec.w_tm.setZero();
  spec.w_ty.setZero();
  spec.g_m.setZero();
  spec.h_m.setZero();
  spec.g_y.setZero();
  spec.h_y.setZero();
  const auto d = scm::sample_dataset(spec, 10000, 21);
  const auto fit = baselines::lsem_fit(d);
  CHECK(std::abs(fit.a - 0.5) < 0.05);
  CHECK(std::abs(fit.b - 1.0) < 0.05);
  CHECK(std::abs(fit.c_prime - 0.8) < 0.05);
}

// The confounders pull c' up through z_ty and down through the M collider on
// z_my; on the default spec the net limit is about 0.85, roughly 2 SE at
// n = 1e4, so the check uses 1e5 records.
TEST_CASE("lsem: confounding biases c' by more than 3 standard errors") {
  const auto d = scm::sample_dataset(scm::default_spec(), 100000, 22);
  const auto fit = baselines::lsem_fit(d);
  CHECK(std::abs(fit.c_prime - 0.8) > 3 * fit.se_c_prime);
  CHECK(fit.c_prime > 0.8);
}

TEST_CASE("ols: standard errors match the explicit inverse") {
  const auto d = scm::sample_dataset(scm::default_spec(), 2000, 23);
  Matrix X(2000, 3);
  Vector y(2000);
  for (int i = 0; i < 2000; ++i) {
    X.row(i) << 1.0, d.t[static_cast<std::size_t>(i)], d.m[static_cast<std::size_t>(i)];
    y(i) = d.y[static_cast<std::size_t>(i)];
  }
  const auto fit = baselines::ols(X, y);
  const Matrix inv = (X.transpose() * X).inverse();
  for (int j = 0; j < 3; ++j) CHECK(fit.se(j) == doctest::Approx(std::sqrt(fit.residual_var * inv(j, j))).epsilon(1e-9));
}

TEST_CASE("lsem: categorical mediators are unsupported") {
  auto d = noiseless(20);
  d.m_kind = VarKind::Categorical;
  d.m_classes = 2;
  for (auto& m : d.m) m = m > 0 ? 1 : 0;
  CHECK_THROWS_AS(baselines::lsem_fit(d), Error);
}

TEST_CASE("lsem_effects: product of coefficients") {
  baselines::LsemFit f;
  f.a = 0.5;
  f.b = 1.0;
  f.c_prime = 0.8;
  auto e = baselines::lsem_effects(f);
  CHECK(e.nde == doctest::Approx(0.8));
  CHECK(e.nie == doctest::Approx(0.5));
  CHECK(e.nie_r == doctest::Approx(-0.5));
  CHECK(e.te == doctest::Approx(1.3));
  CHECK(e.te == e.nde - e.nie_r);
  f.a = 0;
  e = baselines::lsem_effects(f);
  CHECK(e.nie == 0);
  CHECK(e.te == e.nde);
}
