#include "dmavae/audit.hpp"

#include <cmath>

#include "dmavae/error.hpp"
#include "json.hpp"

namespace dmavae::audit {

bool flag(double effect, double tau) {
  require(tau > 0 && std::isfinite(tau), ErrorKind::Argument, "tau must be > 0");
  return std::abs(effect) > tau;
}

AuditReport make_report(const estimate::EffectEstimate& e, double tau, std::size_t n) {
  AuditReport r;
  r.nde = e.nde;
  r.nie = e.nie;
  r.tau = tau;
  r.direct_flag = flag(e.nde, tau);
  r.indirect_flag = flag(e.nie, tau);
  r.n = n;
  r.seed = e.seed;
  return r;
}

std::string to_json(const AuditReport& r) {
  nlohmann::ordered_json j;
  j["nde"] = r.nde;
  j["nie"] = r.nie;
  j["tau"] = r.tau;
  j["direct_flag"] = r.direct_flag;
  j["indirect_flag"] = r.indirect_flag;
  j["n"] = r.n;
  j["seed"] = r.seed;
  return j.dump(2) + "\n";
}

}  // namespace dmavae::audit
