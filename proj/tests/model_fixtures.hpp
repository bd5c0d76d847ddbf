#pragma once

#include <random>

#include "dmavae/model.hpp"

namespace fixtures {

using dmavae::VarKind;
using dmavae::model::Batch;
using dmavae::model::Matrix;

inline Batch random_batch(int n, int x_dim, VarKind m_kind, int m_classes, VarKind y_kind, std::uint64_t seed) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> bit(0, 1);
  Batch b;
  b.x.resize(x_dim, n);
  for (Eigen::Index i = 0; i < b.x.size(); ++i) b.x.data()[i] = nd(g);
  b.t.resize(n);
  b.m.resize(n);
  b.y.resize(n);
  for (int i = 0; i < n; ++i) {
    b.t[i] = bit(g);
    switch (m_kind) {
      case VarKind::Continuous: b.m(i) = nd(g); break;
      case VarKind::Binary: b.m(i) = bit(g); break;
      case VarKind::Categorical: b.m(i) = std::uniform_int_distribution<int>(0, m_classes - 1)(g); break;
    }
    b.y(i) = y_kind == VarKind::Continuous ? nd(g) : bit(g);
  }
  return b;
}

// Perturbs every parameter so that no bias sits exactly at zero.
inline void jitter(dmavae::model::LatentModel& model, std::uint64_t seed, double scale = 0.1) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> nd(0.0, scale);
  for (auto* p : model.parameters())
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] += nd(g);
}

}  // namespace fixtures
