#include "doctest.h"

#include <cmath>
#include <random>
#include <vector>

#include "dmavae/error.hpp"
#include "dmavae/nn.hpp"

using namespace dmavae;
using namespace dmavae::nn;

namespace {

// Plain-loop forward pass, independent of the Eigen implementation.
std::vector<double> reference_forward(const Mlp& net, std::vector<double> a) {
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    const Matrix& w = net.weight(l).value;
    const Matrix& b = net.bias(l).value;
    std::vector<double> h(w.rows());
    for (int i = 0; i < w.rows(); ++i) {
      double s = b(i, 0);
      for (int j = 0; j < w.cols(); ++j) s += w(i, j) * a[j];
      if (l + 1 < net.layer_count()) s = s > 0 ? s : std::exp(s) - 1.0;
      h[i] = s;
    }
    a = h;
  }
  return a;
}

}  // namespace

TEST_CASE("mlp_forward: zero parameters give a zero logit") {
  Mlp net("t", {3, 4, 1});
  net.zero_parameters();
  Vector x(3);
  x << 0.3, -2.0, 5.0;
  CHECK(net(x)(0) == 0.0);
  CHECK(logistic(net(x)(0)) == 0.5);
}

TEST_CASE("mlp_forward: single affine layer") {
  Mlp net("affine", {1, 1});
  net.weight(0).value(0, 0) = 2.0;
  net.bias(0).value(0, 0) = 1.0;
  CHECK(net(Vector::Constant(1, 3.0))(0) == doctest::Approx(7.0));
}

TEST_CASE("mlp_forward: seeded two-layer net matches the loop oracle") {
  Mlp net("n", {5, 7, 3});
  Rng rng = make_rng(0);
  net.init_uniform(rng);
  const Vector ones = Vector::Ones(5);
  const Vector out = net(ones);
  const auto ref = reference_forward(net, std::vector<double>(5, 1.0));
  REQUIRE(out.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(out(i) == doctest::Approx(ref[i]).epsilon(1e-13));
}

TEST_CASE("mlp_forward: determinism and shape errors") {
  Mlp net("n", {4, 8, 8, 2});
  Rng rng = make_rng(11);
  net.init_uniform(rng);
  Matrix x = Matrix::Random(4, 17);
  const Matrix a = net.forward(x);
  const Matrix b = net.forward(x);
  CHECK((a.array() == b.array()).all());
  CHECK_THROWS_AS(net.forward(Matrix::Zero(3, 2)), Error);
}

TEST_CASE("initialization is bounded by the fan-in/fan-out limit with zero biases") {
  Mlp net("n", {10, 30, 4});
  Rng rng = make_rng(3);
  net.init_uniform(rng);
  CHECK(net.weight(0).value.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 40.0));
  CHECK(net.weight(1).value.cwiseAbs().maxCoeff() <= std::sqrt(6.0 / 34.0));
  CHECK(net.bias(0).value.isZero());
}

TEST_CASE("gaussian_reparam") {
  Vector mu(2), sigma(2), eps(2);
  mu << 1, 2;
  sigma << 0.5, 2;
  eps << 1, -1;
  const Vector z = gaussian_reparam(mu, sigma, eps);
  CHECK(z(0) == doctest::Approx(1.5));
  CHECK(z(1) == doctest::Approx(0.0));
  CHECK(gaussian_reparam(mu, sigma, Vector::Zero(2)) == mu);
  CHECK(gaussian_reparam(Vector::Zero(2), Vector::Ones(2), eps) == eps);
  CHECK_THROWS_AS(gaussian_reparam(mu, Vector::Zero(2), eps), Error);
}

TEST_CASE("kl_std_normal") {
  CHECK(kl_std_normal(Vector::Zero(3), Vector::Ones(3)) == 0.0);
  CHECK(kl_std_normal(Vector::Ones(1), Vector::Ones(1)) == doctest::Approx(0.5));
  CHECK(kl_std_normal(Vector::Zero(1), Vector::Constant(1, 2.0)) ==
        doctest::Approx(0.5 * (4.0 - 1.0 - std::log(4.0))));
  CHECK(kl_std_normal(Vector::Zero(1), Vector::Constant(1, 2.0)) == doctest::Approx(0.806853).epsilon(1e-6));
  CHECK_THROWS_AS(kl_std_normal(Vector::Zero(1), Vector::Constant(1, -1.0)), Error);

  std::mt19937_64 gen(5);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.05, 4.0);
  for (int rep = 0; rep < 200; ++rep) {
    Vector mu(3), s(3);
    for (int j = 0; j < 3; ++j) {
      mu(j) = nd(gen);
      s(j) = ud(gen);
    }
    CHECK(kl_std_normal(mu, s) >= 0.0);
  }
}

TEST_CASE("bernoulli_nll") {
  CHECK(bernoulli_nll(0.0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(bernoulli_nll(0.0, 0) == doctest::Approx(std::log(2.0)));
  CHECK(bernoulli_nll(2.0, 1) == doctest::Approx(std::log1p(std::exp(-2.0))));
  CHECK(bernoulli_nll(2.0, 1) == doctest::Approx(0.126928).epsilon(1e-6));
  for (double l : {-500.0, -50.0, 50.0, 500.0})
    for (int y : {0, 1}) CHECK(std::isfinite(bernoulli_nll(l, y)));
  CHECK(bernoulli_nll(500.0, 0) == doctest::Approx(500.0));
  CHECK_THROWS_AS(bernoulli_nll(0.0, 2), Error);
}

TEST_CASE("gaussian_nll") {
  CHECK(gaussian_nll(0, 1, 0) == doctest::Approx(0.918939).epsilon(1e-6));
  for (double t : {-3.0, 0.25, 9.0}) CHECK(gaussian_nll(t, 1, t) == doctest::Approx(kHalfLog2Pi));
  CHECK(gaussian_nll(0, 1, 2) == doctest::Approx(2.918939).epsilon(1e-6));
  CHECK(gaussian_nll(1.0, 0.7, 1.0) < gaussian_nll(1.0, 0.7, 1.3));
  CHECK_THROWS_AS(gaussian_nll(0, 0, 1), Error);
}

TEST_CASE("gaussian head clamps log-variance") {
  Matrix raw(2, 3);
  raw << 1, 2, 3, -20, 0.5, 20;
  const GaussianHead h = split_gaussian_head(raw);
  CHECK(h.logvar(0, 0) == kLogVarMin);
  CHECK(h.logvar(0, 2) == kLogVarMax);
  CHECK(h.active(0, 1) == 1.0);
  CHECK(h.active(0, 0) == 0.0);
  CHECK((h.sigma().array() > 0).all());
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradient is a fixed point") {
    Parameter p{"p", Matrix::Constant(2, 2, 0.7), Matrix::Zero(2, 2)};
    Adam opt({&p});
    opt.step();
    CHECK(p.value.isApproxToConstant(0.7));
    CHECK(opt.first_moments()[0].isZero());
    CHECK(opt.second_moments()[0].isZero());
    CHECK(opt.step_count() == 1);
  }
  SUBCASE("one and two steps with unit gradient") {
    Parameter p{"p", Matrix::Zero(1, 1), Matrix::Ones(1, 1)};
    Adam opt({&p}, {1e-3, 0.9, 0.999, 1e-8});
    CHECK(opt.step_count() == 0);
    CHECK(opt.first_moments()[0].isZero());
    opt.step();
    // m_hat = v_hat = 1 -> step = lr / (1 + eps)
    CHECK(p.value(0, 0) == doctest::Approx(-1e-3 / (1.0 + 1e-8)).epsilon(1e-12));
    opt.step();
    CHECK(std::abs(p.value(0, 0) + 0.002) < 1e-6);
    CHECK(opt.step_count() == 2);
  }
  SUBCASE("non-finite gradient names the parameter") {
    Parameter p{"enc_TM.l0.w", Matrix::Zero(1, 1), Matrix::Constant(1, 1, NAN)};
    Adam opt({&p});
    try {
      opt.step();
      FAIL("expected a training error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Training);
      CHECK(std::string(e.what()).find("enc_TM.l0.w") != std::string::npos);
    }
    CHECK(opt.step_count() == 0);
  }
}

TEST_CASE("grad_check: quadratic and KL") {
  Parameter theta{"theta", Matrix::Constant(1, 1, 3.0), Matrix::Zero(1, 1)};
  LossFn quad = [&](bool with_grad) {
    const double v = theta.value(0, 0);
    if (with_grad) theta.grad(0, 0) = v;
    return 0.5 * v * v;
  };
  std::vector<Parameter*> params{&theta};
  const auto r = grad_check(quad, params);
  CHECK(r.max_relative_error < 1e-9);
  CHECK(r.worst_analytic == doctest::Approx(3.0));

  Parameter mu{"mu", Matrix::Constant(1, 1, 1.0), Matrix::Zero(1, 1)};
  LossFn kl = [&](bool with_grad) {
    if (with_grad) mu.grad(0, 0) = mu.value(0, 0);  // d/dmu of the KL at sigma = 1
    return kl_std_normal(mu.value.col(0), Vector::Ones(1));
  };
  std::vector<Parameter*> kl_params{&mu};
  const auto rk = grad_check(kl, kl_params);
  CHECK(rk.worst_analytic == doctest::Approx(1.0));
  CHECK(rk.max_relative_error < 1e-8);
}

TEST_CASE("mlp backward matches finite differences on random inputs") {
  for (auto act : {Activation::Elu, Activation::Tanh}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      Mlp net("n", {3, 6, 5, 2}, act);
      Rng rng = make_rng(seed);
      net.init_uniform(rng);
      for (auto* p : net.parameters()) {
        std::normal_distribution<double> nd(0.0, 0.1);
        for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += nd(rng);
      }
      std::mt19937_64 g(seed);
      std::normal_distribution<double> nd;
      Matrix x(3, 9), target(2, 9);
      for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = nd(g);
      for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = nd(g);
      auto params = net.parameters();
      LossFn fn = [&](bool with_grad) {
        Mlp::Tape tape;
        const Matrix out = net.forward(x, tape);
        const Matrix r = out - target;
        if (with_grad) {
          for (auto* p : params) p->grad.setZero();
          net.backward(tape, r);
        }
        return 0.5 * r.squaredNorm();
      };
      CHECK(grad_check(fn, params).max_relative_error < 1e-6);
    }
  }
}
