#pragma once

#include <cstdint>
#include <string>

#include "dmavae/model.hpp"
#include "dmavae/scm.hpp"

namespace dmavae::estimate {

struct EffectEstimate {
  double nde = 0.0;
  double nie = 0.0;
  double nie_r = 0.0;
  double te = 0.0;  // always nde - nie_r
  double se_nde = 0.0;
  double se_nie = 0.0;
  double se_nie_r = 0.0;
  double se_te = 0.0;
  int n_samples = 0;
  std::uint64_t seed = 0;
};

enum class MediatorMode {
  Auto,    // continuous: one draw per arm; binary and categorical: exact sum over values
  Sample,  // one mediator draw per arm for every kind
};

struct EstimateOptions {
  int n_samples = 100;
  std::uint64_t seed = 0;
  MediatorMode mediator = MediatorMode::Auto;
  std::size_t chunk = 64;  // records evaluated together; other widths differ only by rounding
};

// Posterior-aggregated Monte Carlo estimate over every record of `data`.
// Standard errors are taken across per-record averages.
EffectEstimate estimate_effects(const model::LatentModel& model, const scm::Dataset& data,
                                const EstimateOptions& options = {});

// E[Y | T = t, M = m, z] per column of z.
model::RowVector expected_y(const model::LatentModel& model, int t, const model::RowVector& m,
                            const model::Latents& z);
// p(M | T = t, z); identical to the mediator decoder.
model::DistParams mediator_dist(const model::LatentModel& model, int t, const model::Latents& z);

std::string to_json(const EffectEstimate& e);

}  // namespace dmavae::estimate
