#include "doctest.h"

#include <cmath>

#include "dmavae/error.hpp"
#include "dmavae/estimate.hpp"
#include "dmavae/model.hpp"
#include "dmavae/scm.hpp"
#include "model_fixtures.hpp"

using namespace dmavae;
using namespace dmavae::model;
using estimate::EstimateOptions;
using estimate::estimate_effects;

namespace {

ModelConfig small(VarKind m_kind = VarKind::Continuous, VarKind y_kind = VarKind::Continuous, int classes = 0) {
  ModelConfig c;
  c.x_dim = 6;
  c.m_kind = m_kind;
  c.m_classes = classes;
  c.y_kind = y_kind;
  c.hidden = {8, 8};
  return c;
}

scm::Dataset data_for(const ModelConfig& c, std::size_t n, std::uint64_t seed) {
  auto spec = scm::default_spec();
  spec.m_kind = c.m_kind == VarKind::Binary ? VarKind::Binary : VarKind::Continuous;
  spec.y_kind = c.y_kind;
  auto d = scm::sample_dataset(spec, n, seed);
  if (c.m_kind == VarKind::Categorical) {
    d.m_kind = VarKind::Categorical;
    d.m_classes = c.m_classes;
    for (auto& v : d.m) v = static_cast<double>((static_cast<long>(std::floor(std::abs(v) * 3))) % c.m_classes);
  }
  return d;
}

// Output bias of the last layer of a network.
double& out_bias(nn::Mlp& net, int row = 0) { return net.bias(net.layer_count() - 1).value(row, 0); }

Eigen::VectorXd ref_mlp(const nn::Mlp& net, Eigen::VectorXd a) {
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    Eigen::VectorXd h(net.weight(l).value.rows());
    for (int i = 0; i < h.size(); ++i) {
      double s = net.bias(l).value(i, 0);
      for (int j = 0; j < a.size(); ++j) s += net.weight(l).value(i, j) * a(j);
      h(i) = (l + 1 < net.layer_count()) ? (s > 0 ? s : std::exp(s) - 1.0) : s;
    }
    a = h;
  }
  return a;
}

}  // namespace

TEST_CASE("estimate: constant outcome decoder gives zero effects") {
  for (auto mk : {VarKind::Continuous, VarKind::Binary}) {
    auto cfg = small(mk);
    auto m = make_dmavae(cfg);
    fixtures::jitter(m, 3);
    for (int arm = 0; arm < 2; ++arm) {
      for (auto* p : m.y_decoder(arm).parameters()) p->value.setZero();
      out_bias(m.y_decoder(arm)) = 2.5;
    }
    const auto d = data_for(cfg, 40, 1);
    const auto e = estimate_effects(m, d, {.n_samples = 5, .seed = 2});
    CHECK(e.nde == 0.0);
    CHECK(e.nie == 0.0);
    CHECK(e.nie_r == 0.0);
    CHECK(e.te == 0.0);
  }
}

TEST_CASE("estimate: arm-only outcome difference with arm-independent mediator") {
  for (auto mk : {VarKind::Continuous, VarKind::Binary, VarKind::Categorical}) {
    auto cfg = small(mk, VarKind::Continuous, mk == VarKind::Categorical ? 3 : 0);
    auto m = make_dmavae(cfg);
    fixtures::jitter(m, 4);
    // Same mediator decoder for both arms.
    auto p0 = m.m_decoder(0).parameters();
    auto p1 = m.m_decoder(1).parameters();
    for (std::size_t i = 0; i < p0.size(); ++i) p1[i]->value = p0[i]->value;
    for (int arm = 0; arm < 2; ++arm) {
      for (auto* p : m.y_decoder(arm).parameters()) p->value.setZero();
      out_bias(m.y_decoder(arm)) = arm == 1 ? 0.8 : 0.1;
    }
    const auto d = data_for(cfg, 30, 5);
    const auto e = estimate_effects(m, d, {.n_samples = 4, .seed = 9});
    CHECK(e.nde == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(e.nie_r == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(e.nie) < 1e-12);
    CHECK(e.te == e.nde - e.nie_r);
  }
}

TEST_CASE("expected_y: zero model and per-arm constants") {
  auto m = make_dmavae(small());
  m.zero_parameters();
  Rng rng = make_rng(1);
  const auto z = draw_noise(m.layout(), 3, rng);
  const RowVector mv = RowVector::Constant(3, 0.4);
  CHECK(estimate::expected_y(m, 0, mv, z).isZero());
  auto mb = make_dmavae(small(VarKind::Continuous, VarKind::Binary));
  mb.zero_parameters();
  CHECK(estimate::expected_y(mb, 1, mv, z).isApprox(RowVector::Constant(3, 0.5)));
  out_bias(m.y_decoder(0)) = 1.0;
  out_bias(m.y_decoder(1)) = 3.0;
  const RowVector diff = estimate::expected_y(m, 1, mv, z) - estimate::expected_y(m, 0, mv, z);
  CHECK(diff.isApprox(RowVector::Constant(3, 2.0)));
  CHECK_THROWS_AS(estimate::expected_y(m, 2, mv, z), Error);
}

TEST_CASE("expected_y: seeded model matches the loop oracle") {
  auto m = make_dmavae(small());
  fixtures::jitter(m, 0);
  Rng rng = make_rng(5);
  const auto z = draw_noise(m.layout(), 4, rng);
  RowVector mv(4);
  mv << -1.0, 0.0, 0.5, 2.0;
  const int ty = m.layout().block_index("TY"), my = m.layout().block_index("MY");
  for (int arm = 0; arm < 2; ++arm) {
    const RowVector got = estimate::expected_y(m, arm, mv, z);
    for (int i = 0; i < 4; ++i) {
      Eigen::VectorXd in(1 + z[ty].rows() + z[my].rows());
      in << mv(i), z[ty].col(i), z[my].col(i);
      CHECK(got(i) == doctest::Approx(ref_mlp(m.y_decoder(arm), in)(0)).epsilon(1e-12));
    }
  }
}

TEST_CASE("mediator_dist equals decode_m") {
  auto m = make_dmavae(small(VarKind::Categorical, VarKind::Continuous, 4));
  fixtures::jitter(m, 6);
  Rng rng = make_rng(2);
  const auto z = draw_noise(m.layout(), 5, rng);
  for (int arm = 0; arm < 2; ++arm) CHECK(estimate::mediator_dist(m, arm, z).logits == m.decode_m(arm, z).logits);
}

TEST_CASE("estimate: argument and kind errors") {
  auto m = make_dmavae(small());
  const auto d = data_for(small(), 10, 1);
  CHECK_THROWS_AS(estimate_effects(m, d, {.n_samples = 0}), Error);
  auto mb = make_dmavae(small(VarKind::Binary));
  try {
    estimate_effects(mb, d);
    FAIL("expected a kind mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Model);
  }
}

TEST_CASE("estimate: deterministic, chunk-independent, te identity") {
  for (auto mk : {VarKind::Continuous, VarKind::Binary, VarKind::Categorical}) {
    auto cfg = small(mk, VarKind::Binary, mk == VarKind::Categorical ? 3 : 0);
    auto m = make_dmavae(cfg);
    fixtures::jitter(m, 8, 0.3);
    const auto d = data_for(cfg, 50, 3);
    const auto a = estimate_effects(m, d, {.n_samples = 7, .seed = 1, .chunk = 64});
    const auto b = estimate_effects(m, d, {.n_samples = 7, .seed = 1, .chunk = 3});
    // Chunk width changes matmul kernels, so only rounding-level agreement.
    CHECK(a.nde == doctest::Approx(b.nde).epsilon(1e-12));
    CHECK(a.nie == doctest::Approx(b.nie).epsilon(1e-12));
    CHECK(a.nie_r == doctest::Approx(b.nie_r).epsilon(1e-12));
    CHECK(a.se_nde == doctest::Approx(b.se_nde).epsilon(1e-10));
    const auto again = estimate_effects(m, d, {.n_samples = 7, .seed = 1, .chunk = 64});
    CHECK(again.nde == a.nde);
    CHECK(again.nie_r == a.nie_r);
    CHECK(a.te == a.nde - a.nie_r);
    CHECK(a.se_nde >= 0);
    CHECK(a.se_nie >= 0);
    CHECK(a.se_nie_r >= 0);
    CHECK(a.n_samples == 7);
    const auto c = estimate_effects(m, d, {.n_samples = 7, .seed = 2});
    CHECK(c.nde != a.nde);
  }
}

TEST_CASE("estimate: binary enumeration agrees with mediator sampling") {
  auto cfg = small(VarKind::Binary);
  auto m = make_dmavae(cfg);
  fixtures::jitter(m, 10, 0.5);
  const auto d = data_for(cfg, 200, 4);
  const auto exact = estimate_effects(m, d, {.n_samples = 50, .seed = 3});
  const auto sampled =
      estimate_effects(m, d, {.n_samples = 400, .seed = 4, .mediator = estimate::MediatorMode::Sample});
  CHECK(std::abs(exact.nde - sampled.nde) < 3 * std::hypot(exact.se_nde, sampled.se_nde));
  CHECK(std::abs(exact.nie - sampled.nie) < 3 * std::hypot(exact.se_nie, sampled.se_nie));
  CHECK(std::abs(exact.nie_r - sampled.nie_r) < 3 * std::hypot(exact.se_nie_r, sampled.se_nie_r));
}

TEST_CASE("estimate: doubling n_samples moves estimates by less than 3 SE over 20 seeds") {
  auto cfg = small();
  auto m = make_dmavae(cfg);
  fixtures::jitter(m, 12, 0.3);
  const auto d = data_for(cfg, 100, 6);
  int v_nde = 0, v_nie = 0, v_nie_r = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto a = estimate_effects(m, d, {.n_samples = 10, .seed = s});
    const auto b = estimate_effects(m, d, {.n_samples = 20, .seed = 1000 + s});
    v_nde += std::abs(a.nde - b.nde) >= 3 * a.se_nde;
    v_nie_r += std::abs(a.nie_r - b.nie_r) >= 3 * a.se_nie_r;
    v_nie += std::abs(a.nie - b.nie) >= 3 * a.se_nie;
  }
  MESSAGE("violations nde " << v_nde << " nie " << v_nie << " nie_r " << v_nie_r);
  CHECK(v_nde <= 2);
  CHECK(v_nie <= 2);
  CHECK(v_nie_r <= 2);
}

TEST_CASE("estimate: cmavae and json record") {
  auto cfg = small();
  auto m = make_cmavae(cfg);
  fixtures::jitter(m, 13);
  const auto d = data_for(cfg, 20, 7);
  const auto e = estimate_effects(m, d, {.n_samples = 3, .seed = 5});
  CHECK(std::isfinite(e.nde));
  const auto js = estimate::to_json(e);
  for (const char* key : {"\"nde\"", "\"nie\"", "\"nie_r\"", "\"te\"", "\"se_nde\"", "\"se_nie\"", "\"se_nie_r\"",
                          "\"n_samples\"", "\"seed\""})
    CHECK(js.find(key) != std::string::npos);
}
