#include <charconv>
#include <cmath>
#include <limits>

#include "dmavae/error.hpp"
#include "dmavae/format.hpp"
#include "dmavae/kinds.hpp"

namespace dmavae {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::Spec: return "spec error";
    case ErrorKind::Argument: return "argument error";
    case ErrorKind::Model: return "model error";
    case ErrorKind::Training: return "training error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Parse: return "parse error";
    case ErrorKind::Ingestion: return "ingestion error";
    case ErrorKind::Unsupported: return "unsupported method";
    case ErrorKind::SingularDesign: return "singular design";
    case ErrorKind::UndefinedMetric: return "undefined metric";
    case ErrorKind::Aggregation: return "aggregation error";
    case ErrorKind::Config: return "config error";
  }
  return "error";
}

std::string_view to_string(VarKind kind) noexcept {
  switch (kind) {
    case VarKind::Continuous: return "continuous";
    case VarKind::Binary: return "binary";
    case VarKind::Categorical: return "categorical";
  }
  return "continuous";
}

VarKind parse_var_kind(std::string_view text) {
  if (text == "continuous") return VarKind::Continuous;
  if (text == "binary") return VarKind::Binary;
  if (text == "categorical") return VarKind::Categorical;
  fail(ErrorKind::Parse, "unknown variable kind '" + std::string(text) + "'");
}

}  // namespace dmavae

namespace dmavae::fmt {

std::string real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_real(const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  if (!text.empty() && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last)
    fail(ErrorKind::Parse, "not a number: '" + text + "'");
  return v;
}

}  // namespace dmavae::fmt
