#include "dmavae/estimate.hpp"

#include <cmath>
#include <random>

#include "dmavae/error.hpp"
#include "dmavae/format.hpp"
#include "dmavae/rng.hpp"
#include "dmavae/train.hpp"
#include "json.hpp"

namespace dmavae::estimate {

using model::Latents;
using model::Matrix;
using model::RowVector;

namespace {

constexpr std::uint64_t kRecordKey = 0x657374ULL;

struct Sums {
  double sum = 0.0, sum_sq = 0.0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
  }
};

double mean_of(const Sums& s, std::size_t n) { return s.sum / static_cast<double>(n); }

double se_of(const Sums& s, std::size_t n) {
  if (n < 2) return 0.0;
  const double nn = static_cast<double>(n);
  const double mean = s.sum / nn;
  const double var = std::max(0.0, (s.sum_sq - nn * mean * mean) / (nn - 1.0));
  return std::sqrt(var / nn);
}

// Softmax over each column.
Matrix softmax_cols(const Matrix& logits) {
  Matrix p = logits;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    const double mx = p.col(j).maxCoeff();
    p.col(j) = (p.col(j).array() - mx).exp().matrix();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

// Per-column E[Y(t, M(t'))] needed by the estimator.
struct Contrasts {
  RowVector y00, y10, y01, y11;  // y_ab = E[Y | T = a, M ~ p(M | T = b)]
};

Contrasts evaluate_chunk(const model::LatentModel& mdl, const Latents& z, const RowVector& u0,
                         const RowVector& u1, MediatorMode mode) {
  const auto kind = mdl.config().m_kind;
  const Eigen::Index cols = z.front().cols();
  const auto d0 = mdl.decode_m(0, z);
  const auto d1 = mdl.decode_m(1, z);
  Contrasts c;
  auto with_m = [&](const RowVector& m0, const RowVector& m1) {
    c.y00 = mdl.expected_y(0, m0, z);
    c.y10 = mdl.expected_y(1, m0, z);
    c.y01 = mdl.expected_y(0, m1, z);
    c.y11 = mdl.expected_y(1, m1, z);
  };
  if (kind == VarKind::Continuous) {
    // u0/u1 hold standard-normal draws here.
    with_m(d0.mean.row(0) + d0.sigma.row(0).cwiseProduct(u0), d1.mean.row(0) + d1.sigma.row(0).cwiseProduct(u1));
    return c;
  }
  const Matrix p0 = kind == VarKind::Binary ? Matrix(d0.logits.unaryExpr([](double l) { return nn::logistic(l); }))
                                            : softmax_cols(d0.logits);
  const Matrix p1 = kind == VarKind::Binary ? Matrix(d1.logits.unaryExpr([](double l) { return nn::logistic(l); }))
                                            : softmax_cols(d1.logits);
  if (mode == MediatorMode::Sample) {
    // u0/u1 hold uniforms; invert the mediator CDF.
    auto draw = [&](const Matrix& p, const RowVector& u) {
      RowVector m(cols);
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (kind == VarKind::Binary) {
          m(j) = u(j) < p(0, j) ? 1.0 : 0.0;
          continue;
        }
        double acc = 0.0;
        Eigen::Index k = 0;
        for (; k + 1 < p.rows(); ++k) {
          acc += p(k, j);
          if (u(j) < acc) break;
        }
        m(j) = static_cast<double>(k);
      }
      return m;
    };
    with_m(draw(p0, u0), draw(p1, u1));
    return c;
  }
  c.y00 = c.y10 = c.y01 = c.y11 = RowVector::Zero(cols);
  const int levels = kind == VarKind::Binary ? 2 : mdl.config().m_classes;
  for (int level = 0; level < levels; ++level) {
    const RowVector mv = RowVector::Constant(cols, level);
    RowVector w0, w1;
    if (kind == VarKind::Binary) {
      w0 = level == 1 ? RowVector(p0.row(0)) : RowVector((1.0 - p0.row(0).array()).matrix());
      w1 = level == 1 ? RowVector(p1.row(0)) : RowVector((1.0 - p1.row(0).array()).matrix());
    } else {
      w0 = p0.row(level);
      w1 = p1.row(level);
    }
    const RowVector e0 = mdl.expected_y(0, mv, z);
    const RowVector e1 = mdl.expected_y(1, mv, z);
    c.y00 += w0.cwiseProduct(e0);
    c.y10 += w0.cwiseProduct(e1);
    c.y01 += w1.cwiseProduct(e0);
    c.y11 += w1.cwiseProduct(e1);
  }
  return c;
}

}  // namespace

EffectEstimate estimate_effects(const model::LatentModel& mdl, const scm::Dataset& data,
                                const EstimateOptions& opt) {
  require(opt.n_samples >= 1, ErrorKind::Argument, "n_samples must be >= 1");
  require(opt.chunk >= 1, ErrorKind::Argument, "chunk must be >= 1");
  train::check_compatible(mdl, data);
  const std::size_t n = data.size();
  require(n >= 1, ErrorKind::Argument, "dataset is empty");
  const auto& layout = mdl.layout();
  const int s = opt.n_samples;
  const bool continuous_m = mdl.config().m_kind == VarKind::Continuous;
  const bool draws_m = continuous_m || opt.mediator == MediatorMode::Sample;

  Sums nde, nie, nie_r, te;
  for (std::size_t lo = 0; lo < n; lo += opt.chunk) {
    const std::size_t hi = std::min(n, lo + opt.chunk);
    const auto rows = static_cast<Eigen::Index>(hi - lo);
    const auto posts = mdl.encode(data.x.middleCols(static_cast<Eigen::Index>(lo), rows));
    const Eigen::Index cols = rows * s;
    Latents z(layout.blocks.size());
    for (std::size_t b = 0; b < z.size(); ++b) z[b].resize(layout.blocks[b].dim, cols);
    RowVector u0(cols), u1(cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      Rng rng = make_rng(opt.seed, {kRecordKey, lo + static_cast<std::size_t>(r)});
      std::normal_distribution<double> normal;
      std::uniform_real_distribution<double> uniform;
      for (int k = 0; k < s; ++k) {
        const Eigen::Index col = r * s + k;
        for (std::size_t b = 0; b < z.size(); ++b) {
          for (Eigen::Index j = 0; j < z[b].rows(); ++j) {
            const double sigma = std::exp(0.5 * posts[b].logvar(j, r));
            z[b](j, col) = posts[b].mean(j, r) + sigma * normal(rng);
          }
        }
        if (draws_m) {
          u0(col) = continuous_m ? normal(rng) : uniform(rng);
          u1(col) = continuous_m ? normal(rng) : uniform(rng);
        }
      }
    }
    const auto c = evaluate_chunk(mdl, z, u0, u1, opt.mediator);
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto seg = [&](const RowVector& v) { return v.segment(r * s, s).mean(); };
      const double y00 = seg(c.y00), y10 = seg(c.y10), y01 = seg(c.y01), y11 = seg(c.y11);
      nde.add(y10 - y00);
      nie.add(y01 - y00);
      nie_r.add(y10 - y11);
      te.add((y10 - y00) - (y10 - y11));
    }
  }
  EffectEstimate e;
  e.nde = mean_of(nde, n);
  e.nie = mean_of(nie, n);
  e.nie_r = mean_of(nie_r, n);
  e.te = e.nde - e.nie_r;
  e.se_nde = se_of(nde, n);
  e.se_nie = se_of(nie, n);
  e.se_nie_r = se_of(nie_r, n);
  e.se_te = se_of(te, n);
  e.n_samples = s;
  e.seed = opt.seed;
  require(std::isfinite(e.nde) && std::isfinite(e.nie) && std::isfinite(e.nie_r), ErrorKind::Model,
          "effect estimate is not finite");
  return e;
}

RowVector expected_y(const model::LatentModel& mdl, int t, const RowVector& m, const Latents& z) {
  return mdl.expected_y(t, m, z);
}

model::DistParams mediator_dist(const model::LatentModel& mdl, int t, const Latents& z) {
  return mdl.decode_m(t, z);
}

std::string to_json(const EffectEstimate& e) {
  nlohmann::ordered_json j;
  j["nde"] = e.nde;
  j["nie"] = e.nie;
  j["nie_r"] = e.nie_r;
  j["te"] = e.te;
  j["se_nde"] = e.se_nde;
  j["se_nie"] = e.se_nie;
  j["se_nie_r"] = e.se_nie_r;
  j["se_te"] = e.se_te;
  j["n_samples"] = e.n_samples;
  j["seed"] = e.seed;
  return j.dump(2);
}

}  // namespace dmavae::estimate
