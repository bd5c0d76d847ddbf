#include "dmavae/adult.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "dmavae/error.hpp"
#include "dmavae/format.hpp"
#include "dmavae/io.hpp"
#include "json.hpp"

namespace dmavae::adult {

using json = nlohmann::ordered_json;

namespace {

const std::string kTreatment = "sex";
const std::string kMediator = "occupation";
const std::string kOutcome = "income";

std::string normalise_name(std::string s) {
  s = io::trim(s);
  for (auto& ch : s) {
    ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (ch == '_' || ch == ' ') ch = '-';
  }
  if (s == "class" || s == "salary") s = kOutcome;
  return s;
}

std::string clean_value(const std::string& column, std::string v) {
  v = io::trim(v);
  if (column == kOutcome && !v.empty() && v.back() == '.') v.pop_back();
  return v;
}

[[noreturn]] void ingest_fail(const std::string& msg) { fail(ErrorKind::Ingestion, msg); }

}  // namespace

std::string_view to_string(Role r) noexcept {
  switch (r) {
    case Role::Treatment: return "treatment";
    case Role::Mediator: return "mediator";
    case Role::Outcome: return "outcome";
    case Role::NumericProxy: return "numeric_proxy";
    case Role::CategoricalProxy: return "categorical_proxy";
    case Role::Dropped: return "dropped";
  }
  return "?";
}

Role parse_role(std::string_view text) {
  for (Role r : {Role::Treatment, Role::Mediator, Role::Outcome, Role::NumericProxy, Role::CategoricalProxy,
                 Role::Dropped})
    if (text == to_string(r)) return r;
  fail(ErrorKind::Parse, "unknown column role '" + std::string(text) + "'");
}

const std::vector<std::string>& standard_columns() {
  static const std::vector<std::string> cols{
      "age",          "workclass",    "fnlwgt",         "education",      "education-num",
      "marital-status", "occupation", "relationship",   "race",           "sex",
      "capital-gain", "capital-loss", "hours-per-week", "native-country", "income"};
  return cols;
}

bool is_numeric_column(const std::string& name) {
  static const std::set<std::string> numeric{"age",          "fnlwgt",       "education-num",
                                             "capital-gain", "capital-loss", "hours-per-week"};
  return numeric.count(name) > 0;
}

int ColumnMapping::width() const {
  switch (role) {
    case Role::NumericProxy: return 1;
    case Role::CategoricalProxy: return static_cast<int>(levels.size());
    default: return 0;
  }
}

const ColumnMapping& AdultMapping::column(const std::string& name) const {
  for (const auto& c : columns)
    if (c.name == name) return c;
  ingest_fail("mapping has no column '" + name + "'");
}

int AdultMapping::proxy_width() const {
  int w = 0;
  for (const auto& c : columns) w += c.width();
  return w;
}

namespace {

int level_index(const ColumnMapping& c, const std::string& v) {
  const auto it = std::lower_bound(c.levels.begin(), c.levels.end(), v);
  if (it == c.levels.end() || *it != v) ingest_fail("column '" + c.name + "': unknown level '" + v + "'");
  return static_cast<int>(it - c.levels.begin());
}

}  // namespace

std::vector<double> AdultMapping::encode(const std::string& name, const std::string& raw) const {
  const auto& c = column(name);
  const std::string v = clean_value(c.name, raw);
  switch (c.role) {
    case Role::Treatment:
    case Role::Outcome:
      level_index(c, v);
      return {v == c.positive ? 1.0 : 0.0};
    case Role::Mediator: return {static_cast<double>(level_index(c, v))};
    case Role::NumericProxy: {
      double x = 0;
      try {
        x = fmt::parse_real(v);
      } catch (const Error&) {
        ingest_fail("column '" + c.name + "': not a number: '" + v + "'");
      }
      return {(x - c.mean) / c.std};
    }
    case Role::CategoricalProxy: {
      std::vector<double> onehot(c.levels.size(), 0.0);
      onehot[static_cast<std::size_t>(level_index(c, v))] = 1.0;
      return onehot;
    }
    case Role::Dropped: return {};
  }
  return {};
}

std::string AdultMapping::decode(const std::string& name, const std::vector<double>& code) const {
  const auto& c = column(name);
  auto need = [&](std::size_t n) {
    if (code.size() != n) ingest_fail("column '" + c.name + "': code has the wrong width");
  };
  switch (c.role) {
    case Role::Treatment:
    case Role::Outcome: {
      need(1);
      require(c.levels.size() == 2, ErrorKind::Ingestion, "column '" + c.name + "' is not binary");
      if (code[0] == 1.0) return c.positive;
      return c.levels[0] == c.positive ? c.levels[1] : c.levels[0];
    }
    case Role::Mediator: {
      need(1);
      const auto k = static_cast<std::size_t>(code[0]);
      require(code[0] >= 0 && k < c.levels.size(), ErrorKind::Ingestion, "mediator code out of range");
      return c.levels[k];
    }
    case Role::NumericProxy: {
      need(1);
      double v = code[0] * c.std + c.mean;
      // Cancellation leaves residue where the value is exactly zero.
      if (std::abs(v) < 1e-9 * std::max(std::abs(c.mean), c.std)) v = 0.0;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.12g", v);
      return buf;
    }
    case Role::CategoricalProxy: {
      need(c.levels.size());
      const auto it = std::find(code.begin(), code.end(), 1.0);
      require(it != code.end(), ErrorKind::Ingestion, "column '" + c.name + "': one-hot code has no hot entry");
      return c.levels[static_cast<std::size_t>(it - code.begin())];
    }
    case Role::Dropped: break;
  }
  ingest_fail("column '" + c.name + "' is dropped");
}

RawTable parse_raw(std::istream& in, const std::string& source) {
  RawTable t;
  std::string line;
  int no = 0;
  bool have_columns = false;
  std::vector<std::size_t> missing_count;
  std::size_t total = 0;
  while (std::getline(in, line)) {
    ++no;
    const std::string trimmed = io::trim(line);
    if (trimmed.empty() || trimmed.front() == '|') continue;
    auto fields = io::split(trimmed, ',');
    if (!have_columns) {
      have_columns = true;
      const std::string first = normalise_name(fields[0]);
      const auto& std_cols = standard_columns();
      if (std::find(std_cols.begin(), std_cols.end(), first) != std_cols.end()) {
        // Header row.
        std::set<std::string> seen;
        for (const auto& f : fields) {
          const std::string name = normalise_name(f);
          if (std::find(std_cols.begin(), std_cols.end(), name) == std_cols.end())
            ingest_fail(source + ":" + std::to_string(no) + ": unknown column '" + io::trim(f) + "'");
          if (!seen.insert(name).second)
            ingest_fail(source + ":" + std::to_string(no) + ": duplicate column '" + name + "'");
          t.columns.push_back(name);
        }
        for (const auto& req : {kTreatment, kMediator, kOutcome})
          if (!seen.count(req)) ingest_fail(source + ": required column '" + req + "' is missing");
        missing_count.assign(t.columns.size(), 0);
        continue;
      }
      t.columns = std_cols;
      missing_count.assign(t.columns.size(), 0);
    }
    if (fields.size() != t.columns.size())
      ingest_fail(source + ":" + std::to_string(no) + ": expected " + std::to_string(t.columns.size()) +
                  " fields, got " + std::to_string(fields.size()));
    ++total;
    bool missing = false;
    for (std::size_t j = 0; j < fields.size(); ++j) {
      fields[j] = clean_value(t.columns[j], fields[j]);
      if (fields[j] == "?" || fields[j].empty()) {
        missing = true;
        ++missing_count[j];
      }
    }
    if (missing) {
      ++t.dropped_missing;
      continue;
    }
    t.rows.push_back(std::move(fields));
  }
  if (!have_columns) ingest_fail(source + ": no data");
  for (std::size_t j = 0; j < t.columns.size(); ++j)
    if (total > 0 && missing_count[j] == total) ingest_fail(source + ": column '" + t.columns[j] + "' is all missing");
  if (t.rows.empty()) ingest_fail(source + ": no complete records");
  return t;
}

RawTable read_raw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return parse_raw(in, path.string());
}

AdultMapping fit_mapping(const RawTable& t, const std::vector<std::string>& drop) {
  std::set<std::string> dropped;
  for (const auto& d : drop) {
    const std::string name = normalise_name(d);
    if (std::find(t.columns.begin(), t.columns.end(), name) == t.columns.end())
      ingest_fail("cannot drop unknown column '" + d + "'");
    if (name == kTreatment || name == kMediator || name == kOutcome)
      ingest_fail("column '" + name + "' cannot be dropped");
    dropped.insert(name);
  }
  AdultMapping m;
  for (std::size_t j = 0; j < t.columns.size(); ++j) {
    ColumnMapping c;
    c.name = t.columns[j];
    if (c.name == kTreatment) c.role = Role::Treatment;
    else if (c.name == kMediator) c.role = Role::Mediator;
    else if (c.name == kOutcome) c.role = Role::Outcome;
    else if (dropped.count(c.name)) c.role = Role::Dropped;
    else c.role = is_numeric_column(c.name) ? Role::NumericProxy : Role::CategoricalProxy;

    if (c.role == Role::NumericProxy) {
      long double s = 0, ss = 0;
      for (const auto& r : t.rows) {
        double x = 0;
        try {
          x = fmt::parse_real(r[j]);
        } catch (const Error&) {
          ingest_fail("column '" + c.name + "': not a number: '" + r[j] + "'");
        }
        s += x;
        ss += static_cast<long double>(x) * x;
      }
      const auto n = static_cast<long double>(t.rows.size());
      c.mean = static_cast<double>(s / n);
      const double var = static_cast<double>(ss / n - (s / n) * (s / n));
      c.std = var > 0 ? std::sqrt(var) : 1.0;
    } else if (c.role != Role::Dropped) {
      std::set<std::string> levels;
      for (const auto& r : t.rows) levels.insert(r[j]);
      c.levels.assign(levels.begin(), levels.end());
    }
    if (c.role == Role::Treatment) {
      c.positive = "Female";
      if (c.levels.size() != 2 || !std::binary_search(c.levels.begin(), c.levels.end(), c.positive))
        ingest_fail("column 'sex' must hold exactly the levels Female and Male");
    }
    if (c.role == Role::Outcome) {
      c.positive = ">50K";
      if (c.levels.size() != 2 || !std::binary_search(c.levels.begin(), c.levels.end(), c.positive))
        ingest_fail("column 'income' must hold exactly the levels <=50K and >50K");
    }
    if (c.role == Role::Mediator && c.levels.size() < 2) ingest_fail("column 'occupation' needs at least two levels");
    m.columns.push_back(std::move(c));
  }
  return m;
}

scm::Dataset encode(const RawTable& t, const AdultMapping& m) {
  require(t.columns.size() == m.columns.size(), ErrorKind::Ingestion, "mapping and table have different columns");
  for (std::size_t j = 0; j < t.columns.size(); ++j)
    require(t.columns[j] == m.columns[j].name, ErrorKind::Ingestion,
            "mapping column " + std::to_string(j) + " is '" + m.columns[j].name + "', table has '" + t.columns[j] + "'");
  scm::Dataset d;
  d.m_kind = VarKind::Categorical;
  d.y_kind = VarKind::Binary;
  const auto n = t.rows.size();
  const int width = m.proxy_width();
  require(width >= 1, ErrorKind::Ingestion, "no proxy columns left");
  d.x.resize(width, static_cast<Eigen::Index>(n));
  d.t.resize(n);
  d.m.resize(n);
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Index row = 0;
    for (std::size_t j = 0; j < t.columns.size(); ++j) {
      const auto& c = m.columns[j];
      const auto code = m.encode(c.name, t.rows[i][j]);
      switch (c.role) {
        case Role::Treatment: d.t[i] = static_cast<int>(code[0]); break;
        case Role::Mediator: d.m[i] = code[0]; break;
        case Role::Outcome: d.y[i] = code[0]; break;
        case Role::Dropped: break;
        default:
          for (double v : code) d.x(row++, static_cast<Eigen::Index>(i)) = v;
      }
    }
  }
  d.m_classes = static_cast<int>(m.column(kMediator).levels.size());
  scm::validate(d);
  return d;
}

std::string mapping_json(const AdultMapping& m) {
  json j;
  j["format"] = "dmavae-adult-mapping";
  j["version"] = 1;
  json cols = json::array();
  for (const auto& c : m.columns) {
    json e{{"name", c.name}, {"role", std::string(to_string(c.role))}};
    if (c.role == Role::NumericProxy) {
      e["mean"] = c.mean;
      e["std"] = c.std;
    } else if (c.role != Role::Dropped) {
      e["levels"] = c.levels;
    }
    if (!c.positive.empty()) e["positive"] = c.positive;
    cols.push_back(std::move(e));
  }
  j["columns"] = std::move(cols);
  j["proxy_width"] = m.proxy_width();
  return j.dump(2) + "\n";
}

AdultMapping mapping_from_json(const std::string& text) {
  AdultMapping m;
  try {
    const auto j = json::parse(text);
    require(j.value("format", "") == "dmavae-adult-mapping", ErrorKind::Parse, "not an Adult mapping file");
    require(j.at("version").get<int>() == 1, ErrorKind::Parse, "unsupported mapping version");
    for (const auto& e : j.at("columns")) {
      ColumnMapping c;
      c.name = e.at("name").get<std::string>();
      c.role = parse_role(e.at("role").get<std::string>());
      c.mean = e.value("mean", 0.0);
      c.std = e.value("std", 1.0);
      if (e.contains("levels")) c.levels = e.at("levels").get<std::vector<std::string>>();
      require(std::is_sorted(c.levels.begin(), c.levels.end()), ErrorKind::Parse,
              "levels of '" + c.name + "' are not sorted");
      c.positive = e.value("positive", "");
      m.columns.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("mapping: ") + e.what());
  }
  return m;
}

Ingested ingest(const std::filesystem::path& path, const std::optional<AdultMapping>& mapping,
                const std::vector<std::string>& drop) {
  const RawTable t = read_raw(path);
  Ingested out;
  out.mapping = mapping ? *mapping : fit_mapping(t, drop);
  out.data = encode(t, out.mapping);
  out.dropped_missing = t.dropped_missing;
  return out;
}

}  // namespace dmavae::adult
