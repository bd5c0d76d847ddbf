#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dmavae/model.hpp"
#include "dmavae/scm.hpp"

namespace dmavae::train {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 256;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  int patience = 0;  // 0 disables early stopping on the training loss
};

void validate(const TrainConfig& config, std::size_t n);

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double elbo = 0.0;
  // Mean KL of the TM, MY and TY blocks; a single-block model reports its KL as kl_tm.
  double kl_tm = 0.0;
  double kl_my = 0.0;
  double kl_ty = 0.0;
};

struct TrainTrace {
  std::vector<EpochStats> epochs;
  std::int64_t steps = 0;
  bool stopped_early = false;
};

// Checks that dataset kinds and proxy dimension match the model.
void check_compatible(const model::LatentModel& model, const scm::Dataset& data);

// Rows `idx` of the dataset as a model batch.
model::Batch make_batch(const scm::Dataset& data, const std::vector<std::size_t>& idx);
model::Batch full_batch(const scm::Dataset& data);

// Adam over shuffled mini-batches; shuffle keyed by (seed, epoch), noise by
// (seed, epoch, batch).
TrainTrace train(model::LatentModel& model, const scm::Dataset& data, const TrainConfig& config);

void write_trace_csv(const TrainTrace& trace, std::ostream& out);

}  // namespace dmavae::train
