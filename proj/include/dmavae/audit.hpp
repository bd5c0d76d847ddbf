#pragma once

#include <cstdint>
#include <string>

#include "dmavae/estimate.hpp"

namespace dmavae::audit {

inline constexpr double kDefaultTau = 0.05;

struct AuditReport {
  double nde = 0.0;
  double nie = 0.0;
  double tau = kDefaultTau;
  bool direct_flag = false;
  bool indirect_flag = false;
  std::size_t n = 0;
  std::uint64_t seed = 0;
};

// Flags compare effect magnitudes with tau, so the verdict does not depend on
// which group is coded as treated.
bool flag(double effect, double tau);
AuditReport make_report(const estimate::EffectEstimate& e, double tau, std::size_t n);
std::string to_json(const AuditReport& r);

}  // namespace dmavae::audit
