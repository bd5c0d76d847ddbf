#include "doctest.h"

#include <cmath>
#include <numeric>

#include "dmavae/error.hpp"
#include "dmavae/scm.hpp"

using namespace dmavae;
using namespace dmavae::scm;

namespace {

ScmSpec all_binary(const ScmSpec& base) {
  ScmSpec s = base;
  s.m_kind = VarKind::Binary;
  s.y_kind = VarKind::Binary;
  return s;
}

bool within(double a, double b, double se, double k = 3.0) { return std::abs(a - b) <= k * se; }

}  // namespace

TEST_CASE("default spec is valid and fully confounded") {
  const auto s = default_spec();
  CHECK_NOTHROW(validate(s));
  CHECK(s.d_tm == 1);
  CHECK(s.d_ty == 1);
  CHECK(s.d_my == 1);
  CHECK(s.d_x == 6);
  const Matrix a = mixing_map(s);
  CHECK(a.rows() == 6);
  CHECK(a.cols() == 3);
  CHECK(a.minCoeff() >= 0.5);
  CHECK(a.maxCoeff() <= 1.5);
  CHECK(mixing_map(s) == a);
}

TEST_CASE("validate rejects broken specs") {
  auto s = default_spec();
  s.sigma_m = 0.0;
  CHECK_THROWS_AS(validate(s), Error);
  s = default_spec();
  s.d_x = 2;
  CHECK_THROWS_AS(validate(s), Error);
  s = default_spec();
  s.mixing = Matrix::Ones(6, 3);  // rank one
  CHECK_THROWS_AS(validate(s), Error);
  s = default_spec();
  s.g_m = Vector::Constant(2, 0.8);
  CHECK_THROWS_AS(validate(s), Error);
  try {
    validate(s);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Spec);
  }
}

TEST_CASE("sample_dataset: symmetric treatment when all coefficients vanish") {
  auto s = default_spec();
  s.w_tm.setZero();
  s.w_ty.setZero();
  const auto d = sample_dataset(s, 10000, 11);
  const double mean = std::accumulate(d.t.begin(), d.t.end(), 0.0) / 10000.0;
  CHECK(mean == doctest::Approx(0.5).epsilon(0.04));
  CHECK(std::abs(mean - 0.5) <= 0.02);
}

TEST_CASE("sample_dataset: attaches closed-form truth for the linear spec") {
  const auto d = sample_dataset(default_spec(), 50, 1);
  REQUIRE(d.truth);
  CHECK(d.truth->method == OracleMethod::ClosedForm);
  CHECK(d.truth->nde == doctest::Approx(0.8));
  CHECK(d.truth->nie == doctest::Approx(0.5));
  CHECK(d.truth->te == doctest::Approx(1.3));
  CHECK_NOTHROW(validate(d));
  CHECK(d.x_dim() == 6);
}

TEST_CASE("sample_dataset: pure function of spec, n and seed") {
  const auto s = all_binary(default_spec());
  const auto a = sample_dataset(s, 300, 5);
  const auto b = sample_dataset(s, 300, 5);
  CHECK(a.t == b.t);
  CHECK(a.m == b.m);
  CHECK(a.y == b.y);
  CHECK((a.x.array() == b.x.array()).all());
  const auto c = sample_dataset(s, 300, 6);
  CHECK((c.x.array() != a.x.array()).any());
  for (double v : a.m) CHECK((v == 0.0 || v == 1.0));
  CHECK_THROWS_AS(sample_dataset(s, 0, 5), Error);
  auto bad = s;
  bad.sigma_x = -1;
  CHECK_THROWS_AS(sample_dataset(bad, 3, 5), Error);
}

TEST_CASE("sample_dataset: proxies follow the mixing map") {
  auto s = default_spec();
  s.sigma_x = 1e-9;
  const auto d = sample_dataset(s, 200, 3);
  const Matrix a = mixing_map(s);
  // Every proxy column lies in the span of A.
  Eigen::ColPivHouseholderQR<Matrix> qr(a);
  const Matrix z = qr.solve(d.x);
  CHECK((a * z - d.x).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("oracle_effects: closed form") {
  const auto g = oracle_effects(default_spec(), OracleMethod::ClosedForm);
  CHECK(g.nde == 0.8);
  CHECK(g.nie == 0.5);
  CHECK(g.nie_r == -0.5);
  CHECK(g.te == doctest::Approx(1.3));
  CHECK(g.te == g.nde - g.nie_r);
  auto s = default_spec();
  s.a = 0.0;
  const auto z = oracle_effects(s, OracleMethod::ClosedForm);
  CHECK(z.nie == 0.0);
  CHECK(z.nie_r == 0.0);
  CHECK(z.te == z.nde);
}

TEST_CASE("oracle_effects: unsupported requests") {
  auto s = default_spec();
  s.k = 0.3;
  try {
    oracle_effects(s, OracleMethod::ClosedForm);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Unsupported);
  }
  CHECK_THROWS_AS(oracle_effects(all_binary(default_spec()), OracleMethod::ClosedForm), Error);
  CHECK_THROWS_AS(oracle_effects(default_spec(), OracleMethod::Enumeration), Error);
  CHECK_THROWS_AS(parse_oracle_method("bootstrap"), Error);
}

TEST_CASE("oracle_effects: Monte Carlo converges to the closed form") {
  const auto s = default_spec();
  const auto mc = oracle_effects(s, OracleMethod::MonteCarlo, 1'000'000, 3);
  CHECK(mc.method == OracleMethod::MonteCarlo);
  CHECK(mc.n_mc == 1'000'000);
  CHECK(mc.te == mc.nde - mc.nie_r);
  // Linear specs give zero-variance unit contrasts, so tolerate rounding as well.
  CHECK(std::abs(mc.nde - 0.8) <= 3 * mc.se_nde + 1e-12);
  CHECK(std::abs(mc.nie - 0.5) <= 3 * mc.se_nie + 1e-12);
  CHECK(std::abs(mc.nie_r + 0.5) <= 3 * mc.se_nie_r + 1e-12);
}

TEST_CASE("oracle_effects: Monte Carlo agrees with enumeration on all-binary specs") {
  for (double k : {0.0, 0.7}) {
    CAPTURE(k);
    auto s = all_binary(default_spec());
    s.k = k;
    s.a = 1.0;
    s.b = 1.2;
    const auto ex = oracle_effects(s, OracleMethod::Enumeration);
    const auto mc = oracle_effects(s, OracleMethod::MonteCarlo, 2'000'000, 9);
    CHECK(ex.te == ex.nde - ex.nie_r);
    CHECK(within(mc.nde, ex.nde, mc.se_nde));
    CHECK(within(mc.nie, ex.nie, mc.se_nie));
    CHECK(within(mc.nie_r, ex.nie_r, mc.se_nie_r));
    CHECK(mc.se_nde > 0);
  }
}

TEST_CASE("oracle_effects: continuous outcome with binary mediator has a linear answer") {
  // E[Y(t, M(t'))] = c t + b P(M(t') = 1) on average, with no interaction.
  auto s = default_spec();
  s.m_kind = VarKind::Binary;
  const auto ex = oracle_effects(s, OracleMethod::Enumeration);
  CHECK(ex.nde == doctest::Approx(0.8).epsilon(1e-10));
  CHECK(ex.nie == doctest::Approx(-ex.nie_r).epsilon(1e-12));
  CHECK(ex.nie > 0);
}

TEST_CASE("disabling a confounder type equals zeroing its coefficients") {
  auto zeroed = all_binary(default_spec());
  zeroed.g_y.setZero();
  zeroed.w_ty.setZero();
  auto disabled = case_spec(CaseId::Case5, all_binary(default_spec()));
  REQUIRE(disabled.d_ty == 0);
  // Keep the same proxy map restricted to the surviving blocks.
  const Matrix a = mixing_map(zeroed);
  Matrix kept(a.rows(), 2);
  kept << a.col(0), a.col(2);
  disabled.mixing = kept;
  const auto e1 = oracle_effects(zeroed, OracleMethod::Enumeration);
  const auto e2 = oracle_effects(disabled, OracleMethod::Enumeration);
  CHECK(e1.nde == doctest::Approx(e2.nde).epsilon(1e-12));
  CHECK(e1.nie == doctest::Approx(e2.nie).epsilon(1e-12));
  CHECK(e1.nie_r == doctest::Approx(e2.nie_r).epsilon(1e-12));

  auto lin = default_spec();
  lin.g_m.setZero();
  lin.w_tm.setZero();
  const auto c1 = oracle_effects(lin, OracleMethod::ClosedForm);
  const auto c2 = oracle_effects(case_spec(CaseId::Case6, default_spec()), OracleMethod::ClosedForm);
  CHECK(c1.nde == c2.nde);
  CHECK(c1.nie == c2.nie);
  CHECK(c1.te == c2.te);
}

TEST_CASE("case_spec") {
  const auto base = default_spec();
  const auto full = case_spec(CaseId::Full, base);
  CHECK(full.d_tm > 0);
  CHECK(full.d_ty > 0);
  CHECK(full.d_my > 0);
  const auto c1 = case_spec(CaseId::Case1, base);
  CHECK(c1.d_tm == 1);
  CHECK(c1.d_ty == 0);
  CHECK(c1.d_my == 0);
  CHECK(c1.w_ty.size() == 0);
  const auto fig = case_spec(CaseId::Fig1b, base);
  CHECK(fig.d_shared == 1);
  CHECK(fig.latent_dim() == 1);
  CHECK(fig.w_shared.size() == 1);
  CHECK(fig.s_m.size() == 1);
  CHECK(fig.s_y.size() == 1);
  const int expected[6][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1}};
  for (std::size_t i = 0; i < 6; ++i) {
    const auto s = case_spec(generalisation_cases()[i], base);
    CHECK(s.d_tm == expected[i][0]);
    CHECK(s.d_ty == expected[i][1]);
    CHECK(s.d_my == expected[i][2]);
    CHECK_NOTHROW(sample_dataset(s, 10, 1));
  }
  CHECK_THROWS_AS(parse_case_id("case7"), Error);
  CHECK(parse_case_id("case4") == CaseId::Case4);
}

TEST_CASE("gauss_hermite_normal integrates low moments exactly") {
  const auto [x, w] = gauss_hermite_normal(8);
  CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(w.dot(x) == doctest::Approx(0.0).scale(1.0).epsilon(1e-13));
  CHECK(w.dot(x.array().square().matrix()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w.dot(x.array().pow(4).matrix()) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(w.dot(x.array().pow(6).matrix()) == doctest::Approx(15.0).epsilon(1e-12));
  CHECK_THROWS_AS(gauss_hermite_normal(0), Error);
}
