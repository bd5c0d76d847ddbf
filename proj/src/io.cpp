#include "dmavae/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "dmavae/error.hpp"
#include "dmavae/format.hpp"
#include "json.hpp"

namespace dmavae::io {

using json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source) {
  std::vector<KeyValue> out;
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Parse, source + ":" + std::to_string(no) + ": expected 'key = value'");
    KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), no};
    if (kv.key.empty()) fail(ErrorKind::Parse, source + ":" + std::to_string(no) + ": empty key");
    out.push_back(std::move(kv));
  }
  return out;
}

std::vector<KeyValue> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  return parse_key_values(in, path.string());
}

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> out;
  if (trim(text).empty()) return out;
  for (const auto& part : split(text, ',')) out.push_back(fmt::parse_real(trim(part)));
  return out;
}

std::uint64_t parse_u64(const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    fail(ErrorKind::Parse, "not a non-negative integer: '" + text + "'");
  return v;
}

int parse_int(const std::string& text) {
  const std::string t = trim(text);
  int v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    fail(ErrorKind::Parse, "not an integer: '" + text + "'");
  return v;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  if (trim(text).empty()) return out;
  for (const auto& part : split(text, ',')) out.push_back(parse_int(part));
  return out;
}

bool parse_bool(const std::string& text) {
  const std::string t = trim(text);
  if (t == "1" || t == "true" || t == "yes" || t == "on") return true;
  if (t == "0" || t == "false" || t == "no" || t == "off") return false;
  fail(ErrorKind::Parse, "not a boolean: '" + text + "'");
}

namespace {

scm::Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const scm::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string join(const scm::Vector& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += fmt::real(v(i));
  }
  return out;
}

[[noreturn]] void rethrow_at(const KeyValue& kv, const std::string& source, const Error& e) {
  fail(ErrorKind::Parse, source + ":" + std::to_string(kv.line) + ": key '" + kv.key + "': " + e.what());
}

}  // namespace

scm::ScmSpec spec_from_key_values(const std::vector<KeyValue>& kvs, const scm::ScmSpec& base) {
  scm::ScmSpec s = base;
  std::set<std::string> seen;
  std::vector<double> mixing;
  bool has_mixing = false;
  using Vec = scm::Vector scm::ScmSpec::*;
  static const std::map<std::string, int scm::ScmSpec::*> ints{
      {"d_tm", &scm::ScmSpec::d_tm}, {"d_ty", &scm::ScmSpec::d_ty}, {"d_my", &scm::ScmSpec::d_my},
      {"d_shared", &scm::ScmSpec::d_shared}, {"d_x", &scm::ScmSpec::d_x}};
  static const std::map<std::string, double scm::ScmSpec::*> reals{
      {"sigma_x", &scm::ScmSpec::sigma_x},     {"mixing_low", &scm::ScmSpec::mixing_low},
      {"mixing_high", &scm::ScmSpec::mixing_high}, {"t_intercept", &scm::ScmSpec::t_intercept},
      {"a", &scm::ScmSpec::a},                 {"m_intercept", &scm::ScmSpec::m_intercept},
      {"sigma_m", &scm::ScmSpec::sigma_m},     {"c", &scm::ScmSpec::c},
      {"b", &scm::ScmSpec::b},                 {"k", &scm::ScmSpec::k},
      {"y_intercept", &scm::ScmSpec::y_intercept}, {"sigma_y", &scm::ScmSpec::sigma_y}};
  static const std::map<std::string, Vec> vecs{
      {"w_tm", &scm::ScmSpec::w_tm}, {"w_ty", &scm::ScmSpec::w_ty}, {"w_shared", &scm::ScmSpec::w_shared},
      {"g_m", &scm::ScmSpec::g_m},   {"h_m", &scm::ScmSpec::h_m},   {"s_m", &scm::ScmSpec::s_m},
      {"g_y", &scm::ScmSpec::g_y},   {"h_y", &scm::ScmSpec::h_y},   {"s_y", &scm::ScmSpec::s_y}};
  for (const auto& kv : kvs) {
    if (!seen.insert(kv.key).second)
      fail(ErrorKind::Parse, "spec:" + std::to_string(kv.line) + ": duplicate key '" + kv.key + "'");
    try {
      if (auto it = ints.find(kv.key); it != ints.end()) s.*(it->second) = parse_int(kv.value);
      else if (auto it2 = reals.find(kv.key); it2 != reals.end()) s.*(it2->second) = fmt::parse_real(kv.value);
      else if (auto it3 = vecs.find(kv.key); it3 != vecs.end()) s.*(it3->second) = to_vector(parse_real_list(kv.value));
      else if (kv.key == "mixing_seed") s.mixing_seed = parse_u64(kv.value);
      else if (kv.key == "seed") s.seed = parse_u64(kv.value);
      else if (kv.key == "m_kind") s.m_kind = parse_var_kind(kv.value);
      else if (kv.key == "y_kind") s.y_kind = parse_var_kind(kv.value);
      else if (kv.key == "mixing") {
        mixing = parse_real_list(kv.value);
        has_mixing = true;
      } else {
        fail(ErrorKind::Parse, "unknown key");
      }
    } catch (const Error& e) {
      rethrow_at(kv, "spec", e);
    }
  }
  // Broadcast defaults for any coefficient vector left at the wrong length.
  auto fit = [&](const char* key, scm::Vector& v, int dim) {
    if (seen.count(key) || v.size() == dim) return;
    const double fill = v.size() > 0 ? v(0) : (std::string(key).front() == 'w' ? 0.6 : 0.8);
    v = scm::Vector::Constant(dim, fill);
  };
  fit("w_tm", s.w_tm, s.d_tm);
  fit("w_ty", s.w_ty, s.d_ty);
  fit("w_shared", s.w_shared, s.d_shared);
  fit("g_m", s.g_m, s.d_tm);
  fit("h_m", s.h_m, s.d_my);
  fit("s_m", s.s_m, s.d_shared);
  fit("g_y", s.g_y, s.d_ty);
  fit("h_y", s.h_y, s.d_my);
  fit("s_y", s.s_y, s.d_shared);
  if (has_mixing) {
    const auto rows = s.d_x, cols = s.latent_dim();
    require(static_cast<int>(mixing.size()) == rows * cols, ErrorKind::Parse,
            "spec: mixing needs d_x * latent_dim = " + std::to_string(rows * cols) + " values");
    scm::Matrix a(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) a(i, j) = mixing[static_cast<std::size_t>(i * cols + j)];
    s.mixing = a;
  } else if (s.mixing && (s.mixing->rows() != s.d_x || s.mixing->cols() != s.latent_dim())) {
    s.mixing.reset();
  }
  scm::validate(s);
  return s;
}

scm::ScmSpec read_spec(const fs::path& path) { return spec_from_key_values(read_key_values(path)); }

void write_spec(const scm::ScmSpec& s, std::ostream& out) {
  out << "d_tm = " << s.d_tm << "\n"
      << "d_ty = " << s.d_ty << "\n"
      << "d_my = " << s.d_my << "\n"
      << "d_shared = " << s.d_shared << "\n"
      << "d_x = " << s.d_x << "\n"
      << "sigma_x = " << fmt::real(s.sigma_x) << "\n"
      << "mixing_seed = " << s.mixing_seed << "\n"
      << "mixing_low = " << fmt::real(s.mixing_low) << "\n"
      << "mixing_high = " << fmt::real(s.mixing_high) << "\n";
  if (s.mixing) {
    std::string flat;
    for (Eigen::Index i = 0; i < s.mixing->rows(); ++i)
      for (Eigen::Index j = 0; j < s.mixing->cols(); ++j) {
        if (!flat.empty()) flat += ", ";
        flat += fmt::real((*s.mixing)(i, j));
      }
    out << "mixing = " << flat << "\n";
  }
  out << "w_tm = " << join(s.w_tm) << "\n"
      << "w_ty = " << join(s.w_ty) << "\n"
      << "w_shared = " << join(s.w_shared) << "\n"
      << "t_intercept = " << fmt::real(s.t_intercept) << "\n"
      << "m_kind = " << to_string(s.m_kind) << "\n"
      << "a = " << fmt::real(s.a) << "\n"
      << "g_m = " << join(s.g_m) << "\n"
      << "h_m = " << join(s.h_m) << "\n"
      << "s_m = " << join(s.s_m) << "\n"
      << "m_intercept = " << fmt::real(s.m_intercept) << "\n"
      << "sigma_m = " << fmt::real(s.sigma_m) << "\n"
      << "y_kind = " << to_string(s.y_kind) << "\n"
      << "c = " << fmt::real(s.c) << "\n"
      << "b = " << fmt::real(s.b) << "\n"
      << "k = " << fmt::real(s.k) << "\n"
      << "g_y = " << join(s.g_y) << "\n"
      << "h_y = " << join(s.h_y) << "\n"
      << "s_y = " << join(s.s_y) << "\n"
      << "y_intercept = " << fmt::real(s.y_intercept) << "\n"
      << "sigma_y = " << fmt::real(s.sigma_y) << "\n"
      << "seed = " << s.seed << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) fail(ErrorKind::Io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension();
  p += ".truth.json";
  return p;
}

std::string truth_json(const scm::Dataset& d) {
  json j;
  j["n"] = d.size();
  j["m_kind"] = std::string(to_string(d.m_kind));
  j["y_kind"] = std::string(to_string(d.y_kind));
  j["m_classes"] = d.m_classes;
  j["seed"] = d.seed;
  if (d.truth) {
    const auto& t = *d.truth;
    j["nde"] = t.nde;
    j["nie"] = t.nie;
    j["nie_r"] = t.nie_r;
    j["te"] = t.te;
    j["method"] = std::string(scm::to_string(t.method));
    j["se"] = {{"nde", t.se_nde}, {"nie", t.se_nie}, {"nie_r", t.se_nie_r}, {"te", t.se_te}};
    j["n_mc"] = t.n_mc;
    j["oracle_seed"] = t.seed;
  }
  return j.dump(2) + "\n";
}

void write_dataset(const scm::Dataset& d, const fs::path& csv) {
  scm::validate(d);
  std::string out = "t,m,y";
  for (int j = 1; j <= d.x_dim(); ++j) out += ",x" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < d.size(); ++i) {
    out += std::to_string(d.t[i]);
    out += ',';
    out += fmt::real(d.m[i]);
    out += ',';
    out += fmt::real(d.y[i]);
    for (Eigen::Index j = 0; j < d.x.rows(); ++j) {
      out += ',';
      out += fmt::real(d.x(j, static_cast<Eigen::Index>(i)));
    }
    out += '\n';
  }
  write_text(csv, out);
  write_text(sidecar_path(csv), truth_json(d));
}

scm::Dataset read_dataset(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) fail(ErrorKind::Io, "cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::Parse, csv.string() + ": empty file");
  const auto header = split(trim(line), ',');
  require(header.size() >= 4 && header[0] == "t" && header[1] == "m" && header[2] == "y", ErrorKind::Parse,
          csv.string() + ": header must start with t,m,y followed by x1..xD");
  const int dx = static_cast<int>(header.size()) - 3;
  for (int j = 0; j < dx; ++j)
    require(header[3 + j] == "x" + std::to_string(j + 1), ErrorKind::Parse,
            csv.string() + ": unexpected column '" + header[3 + j] + "'");
  scm::Dataset d;
  std::vector<std::vector<double>> cols;
  int no = 1;
  while (std::getline(in, line)) {
    ++no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (static_cast<int>(cells.size()) != dx + 3)
      fail(ErrorKind::Parse, csv.string() + ":" + std::to_string(no) + ": expected " + std::to_string(dx + 3) +
                                 " fields, got " + std::to_string(cells.size()));
    try {
      const double t = fmt::parse_real(trim(cells[0]));
      require(t == 0.0 || t == 1.0, ErrorKind::Parse, "t must be 0 or 1");
      d.t.push_back(static_cast<int>(t));
      d.m.push_back(fmt::parse_real(trim(cells[1])));
      d.y.push_back(fmt::parse_real(trim(cells[2])));
      std::vector<double> x(static_cast<std::size_t>(dx));
      for (int j = 0; j < dx; ++j) x[static_cast<std::size_t>(j)] = fmt::parse_real(trim(cells[3 + j]));
      cols.push_back(std::move(x));
    } catch (const Error& e) {
      fail(ErrorKind::Parse, csv.string() + ":" + std::to_string(no) + ": " + e.what());
    }
  }
  require(!d.t.empty(), ErrorKind::Parse, csv.string() + ": no records");
  d.x.resize(dx, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i)
    for (int j = 0; j < dx; ++j) d.x(j, static_cast<Eigen::Index>(i)) = cols[i][static_cast<std::size_t>(j)];

  const fs::path side = sidecar_path(csv);
  if (fs::exists(side)) {
    json j;
    try {
      j = json::parse(read_text(side));
      d.m_kind = parse_var_kind(j.at("m_kind").get<std::string>());
      d.y_kind = parse_var_kind(j.at("y_kind").get<std::string>());
      d.m_classes = j.value("m_classes", 0);
      d.seed = j.value("seed", std::uint64_t{0});
      if (j.contains("nde")) {
        scm::GroundTruthEffects t;
        t.nde = j.at("nde").get<double>();
        t.nie = j.at("nie").get<double>();
        t.nie_r = j.at("nie_r").get<double>();
        t.te = j.at("te").get<double>();
        t.method = scm::parse_oracle_method(j.at("method").get<std::string>());
        if (j.contains("se")) {
          t.se_nde = j["se"].value("nde", 0.0);
          t.se_nie = j["se"].value("nie", 0.0);
          t.se_nie_r = j["se"].value("nie_r", 0.0);
          t.se_te = j["se"].value("te", 0.0);
        }
        t.n_mc = j.value("n_mc", std::size_t{0});
        t.seed = j.value("oracle_seed", std::uint64_t{0});
        d.truth = t;
      }
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, side.string() + ": " + e.what());
    }
  } else {
    // No sidecar: a column holding only 0/1 is taken as binary.
    auto binary = [](const std::vector<double>& v) {
      return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0 || x == 1.0; });
    };
    d.m_kind = binary(d.m) ? VarKind::Binary : VarKind::Continuous;
    d.y_kind = binary(d.y) ? VarKind::Binary : VarKind::Continuous;
  }
  try {
    scm::validate(d);
  } catch (const Error& e) {
    fail(ErrorKind::Parse, csv.string() + ": " + e.what());
  }
  return d;
}

namespace {

json config_json(const model::ModelConfig& c) {
  json j;
  j["architecture"] = std::string(model::to_string(c.architecture));
  j["x_dim"] = c.x_dim;
  j["m_kind"] = std::string(to_string(c.m_kind));
  j["m_classes"] = c.m_classes;
  j["y_kind"] = std::string(to_string(c.y_kind));
  j["dim_tm"] = c.dim_tm;
  j["dim_my"] = c.dim_my;
  j["dim_ty"] = c.dim_ty;
  j["dim_z"] = c.dim_z;
  j["hidden"] = c.hidden;
  j["activation"] = std::string(nn::to_string(c.activation));
  j["aux_weight"] = c.aux_weight;
  j["seed"] = c.seed;
  return j;
}

model::ModelConfig config_from_json(const json& j) {
  model::ModelConfig c;
  c.architecture = model::parse_architecture(j.at("architecture").get<std::string>());
  c.x_dim = j.at("x_dim").get<int>();
  c.m_kind = parse_var_kind(j.at("m_kind").get<std::string>());
  c.m_classes = j.at("m_classes").get<int>();
  c.y_kind = parse_var_kind(j.at("y_kind").get<std::string>());
  c.dim_tm = j.at("dim_tm").get<int>();
  c.dim_my = j.at("dim_my").get<int>();
  c.dim_ty = j.at("dim_ty").get<int>();
  c.dim_z = j.at("dim_z").get<int>();
  c.hidden = j.at("hidden").get<std::vector<int>>();
  c.activation = nn::parse_activation(j.at("activation").get<std::string>());
  c.aux_weight = j.value("aux_weight", 1.0);
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const model::LatentModel& m, const train::TrainConfig& tc, const fs::path& path) {
  json j;
  j["format"] = "dmavae-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = config_json(m.config());
  j["train"] = {{"epochs", tc.epochs}, {"batch_size", tc.batch_size}, {"lr", tc.lr},   {"beta1", tc.beta1},
                {"beta2", tc.beta2},   {"eps", tc.eps},               {"seed", tc.seed}, {"patience", tc.patience}};
  json params = json::array();
  for (const auto* p : m.parameters()) {
    json e;
    e["name"] = p->name;
    e["rows"] = p->value.rows();
    e["cols"] = p->value.cols();
    // column-major, as stored
    e["data"] = std::vector<double>(p->value.data(), p->value.data() + p->value.size());
    params.push_back(std::move(e));
  }
  j["parameters"] = std::move(params);
  write_text(path, j.dump() + "\n");
}

model::LatentModel load_checkpoint(const fs::path& path, train::TrainConfig* tc) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  try {
    require(j.value("format", "") == "dmavae-checkpoint", ErrorKind::Parse, "not a model checkpoint");
    const int version = j.at("version").get<int>();
    require(version == kCheckpointVersion, ErrorKind::Parse,
            "unsupported checkpoint version " + std::to_string(version));
    auto m = model::make_model(config_from_json(j.at("config")));
    if (tc) {
      const auto& t = j.at("train");
      tc->epochs = t.at("epochs").get<int>();
      tc->batch_size = t.at("batch_size").get<int>();
      tc->lr = t.at("lr").get<double>();
      tc->beta1 = t.at("beta1").get<double>();
      tc->beta2 = t.at("beta2").get<double>();
      tc->eps = t.at("eps").get<double>();
      tc->seed = t.at("seed").get<std::uint64_t>();
      tc->patience = t.at("patience").get<int>();
    }
    auto params = m.parameters();
    const auto& arr = j.at("parameters");
    require(arr.size() == params.size(), ErrorKind::Parse, "parameter count does not match the model");
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& e = arr[i];
      require(e.at("name").get<std::string>() == params[i]->name, ErrorKind::Parse,
              "parameter " + std::to_string(i) + " is '" + e.at("name").get<std::string>() + "', expected '" +
                  params[i]->name + "'");
      require(e.at("rows").get<Eigen::Index>() == params[i]->value.rows() &&
                  e.at("cols").get<Eigen::Index>() == params[i]->value.cols(),
              ErrorKind::Parse, "parameter " + params[i]->name + " has the wrong shape");
      const auto data = e.at("data").get<std::vector<double>>();
      require(static_cast<Eigen::Index>(data.size()) == params[i]->value.size(), ErrorKind::Parse,
              "parameter " + params[i]->name + " has the wrong element count");
      std::copy(data.begin(), data.end(), params[i]->value.data());
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, path.string() + ": " + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Parse) fail(ErrorKind::Parse, path.string() + ": " + e.what());
    throw;
  }
}

}  // namespace dmavae::io
