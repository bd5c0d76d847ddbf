#include "dmavae/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "dmavae/error.hpp"
#include "dmavae/format.hpp"
#include "dmavae/rng.hpp"

namespace dmavae::train {

namespace {
constexpr std::uint64_t kShuffleKey = 0x73687566ULL;
constexpr std::uint64_t kNoiseKey = 0x6e6f6973ULL;
}  // namespace

void validate(const TrainConfig& c, std::size_t n) {
  require(c.epochs >= 1, ErrorKind::Config, "epochs must be >= 1");
  require(c.batch_size >= 1, ErrorKind::Config, "batch size must be >= 1");
  require(static_cast<std::size_t>(c.batch_size) <= n, ErrorKind::Config,
          "batch size " + std::to_string(c.batch_size) + " exceeds dataset size " + std::to_string(n));
  require(c.lr > 0 && std::isfinite(c.lr), ErrorKind::Config, "learning rate must be > 0");
  require(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1, ErrorKind::Config,
          "Adam betas must lie in [0, 1)");
  require(c.eps > 0, ErrorKind::Config, "Adam epsilon must be > 0");
  require(c.patience >= 0, ErrorKind::Config, "patience must be >= 0");
}

void check_compatible(const model::LatentModel& m, const scm::Dataset& d) {
  const auto& c = m.config();
  require(d.x_dim() == c.x_dim, ErrorKind::Model,
          "dataset has " + std::to_string(d.x_dim()) + " proxies, model expects " + std::to_string(c.x_dim));
  require(d.m_kind == c.m_kind, ErrorKind::Model,
          "mediator kind mismatch: dataset " + std::string(to_string(d.m_kind)) + ", model " +
              std::string(to_string(c.m_kind)));
  require(d.y_kind == c.y_kind, ErrorKind::Model,
          "outcome kind mismatch: dataset " + std::string(to_string(d.y_kind)) + ", model " +
              std::string(to_string(c.y_kind)));
  if (c.m_kind == VarKind::Categorical)
    require(d.m_classes == c.m_classes, ErrorKind::Model, "mediator class count differs from the model");
}

model::Batch make_batch(const scm::Dataset& d, const std::vector<std::size_t>& idx) {
  model::Batch b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.x.resize(d.x.rows(), n);
  b.t.resize(idx.size());
  b.m.resize(n);
  b.y.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t i = idx[static_cast<std::size_t>(j)];
    b.x.col(j) = d.x.col(static_cast<Eigen::Index>(i));
    b.t[static_cast<std::size_t>(j)] = d.t[i];
    b.m(j) = d.m[i];
    b.y(j) = d.y[i];
  }
  return b;
}

model::Batch full_batch(const scm::Dataset& d) {
  std::vector<std::size_t> idx(d.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(d, idx);
}

TrainTrace train(model::LatentModel& m, const scm::Dataset& d, const TrainConfig& c) {
  validate(c, d.size());
  check_compatible(m, d);
  scm::validate(d);

  nn::Adam adam(m.parameters(), {c.lr, c.beta1, c.beta2, c.eps});
  const std::size_t n = d.size();
  const std::size_t bs = static_cast<std::size_t>(c.batch_size);
  const std::size_t n_batches = (n + bs - 1) / bs;
  const std::size_t blocks = m.block_count();

  TrainTrace trace;
  std::vector<std::size_t> order(n);
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < c.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = make_rng(c.seed, {kShuffleKey, static_cast<std::uint64_t>(epoch)});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochStats stats;
    stats.epoch = epoch + 1;
    double kl[3] = {0, 0, 0};
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
      const std::size_t lo = bi * bs, hi = std::min(n, lo + bs);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(lo),
                                         order.begin() + static_cast<std::ptrdiff_t>(hi));
      const auto batch = make_batch(d, idx);
      Rng noise_rng = make_rng(c.seed, {kNoiseKey, static_cast<std::uint64_t>(epoch), bi});
      const auto eps = model::draw_noise(m.layout(), idx.size(), noise_rng);
      model::LossTerms terms;
      try {
        terms = m.loss_and_grad(batch, eps);
        if (!std::isfinite(terms.loss)) fail(ErrorKind::Training, "non-finite loss");
        adam.step();
      } catch (const Error& e) {
        std::ostringstream os;
        os << "epoch " << epoch + 1 << ", batch " << bi + 1 << ": " << e.what();
        fail(ErrorKind::Training, os.str());
      }
      ++trace.steps;
      // Weighted by batch size so that the epoch figures are per-record means.
      const double w = static_cast<double>(idx.size()) / static_cast<double>(n);
      stats.loss += w * terms.loss;
      stats.elbo += w * terms.elbo;
      for (std::size_t b = 0; b < blocks && b < 3; ++b) kl[b] += w * terms.kl[b];
    }
    // Dmavae blocks are ordered [TM, MY, TY].
    stats.kl_tm = kl[0];
    stats.kl_my = kl[1];
    stats.kl_ty = kl[2];
    trace.epochs.push_back(stats);

    if (c.patience > 0) {
      if (stats.loss < best) {
        best = stats.loss;
        since_best = 0;
      } else if (++since_best >= c.patience) {
        trace.stopped_early = true;
        break;
      }
    }
  }
  return trace;
}

void write_trace_csv(const TrainTrace& trace, std::ostream& out) {
  out << "epoch,loss,elbo,kl_tm,kl_my,kl_ty\n";
  for (const auto& e : trace.epochs) {
    out << e.epoch << ',' << fmt::real(e.loss) << ',' << fmt::real(e.elbo) << ',' << fmt::real(e.kl_tm) << ','
        << fmt::real(e.kl_my) << ',' << fmt::real(e.kl_ty) << '\n';
  }
}

}  // namespace dmavae::train
