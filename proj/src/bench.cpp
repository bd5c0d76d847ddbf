#include "dmavae/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "dmavae/baselines.hpp"
#include "dmavae/error.hpp"
#include "dmavae/format.hpp"
#include "dmavae/io.hpp"
#include "dmavae/rng.hpp"
#include "json.hpp"

namespace dmavae::bench {

using json = nlohmann::ordered_json;

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::Dmavae: return "dmavae";
    case Method::Cmavae: return "cmavae";
    case Method::Lsem: return "lsem";
  }
  return "?";
}

std::string_view to_string(Target t) noexcept {
  switch (t) {
    case Target::Nde: return "nde";
    case Target::NieR: return "nie_r";
    case Target::Te: return "te";
  }
  return "?";
}

std::string_view to_string(CellStatus s) noexcept {
  switch (s) {
    case CellStatus::Ok: return "ok";
    case CellStatus::AbsoluteError: return "abs_error";
    case CellStatus::Failed: return "failed";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  for (Method m : {Method::Dmavae, Method::Cmavae, Method::Lsem})
    if (text == to_string(m)) return m;
  fail(ErrorKind::Parse, "unknown method '" + std::string(text) + "'");
}

Target parse_target(std::string_view text) {
  for (Target t : {Target::Nde, Target::NieR, Target::Te})
    if (text == to_string(t)) return t;
  fail(ErrorKind::Parse, "unknown target '" + std::string(text) + "'");
}

CellStatus parse_cell_status(std::string_view text) {
  for (CellStatus s : {CellStatus::Ok, CellStatus::AbsoluteError, CellStatus::Failed})
    if (text == to_string(s)) return s;
  fail(ErrorKind::Parse, "unknown cell status '" + std::string(text) + "'");
}

namespace {

bool same_real(double a, double b) {
  return std::memcmp(&a, &b, sizeof a) == 0 || (std::isnan(a) && std::isnan(b));
}

double pick(const estimate::EffectEstimate& e, Target t) {
  switch (t) {
    case Target::Nde: return e.nde;
    case Target::NieR: return e.nie_r;
    case Target::Te: return e.te;
  }
  return 0.0;
}

double pick(const scm::GroundTruthEffects& g, Target t) {
  switch (t) {
    case Target::Nde: return g.nde;
    case Target::NieR: return g.nie_r;
    case Target::Te: return g.te;
  }
  return 0.0;
}

}  // namespace

bool CellRecord::operator==(const CellRecord& o) const {
  return method == o.method && case_id == o.case_id && n == o.n && rep == o.rep && target == o.target &&
         same_real(estimate, o.estimate) && same_real(truth, o.truth) && same_real(bias_pct, o.bias_pct) &&
         status == o.status;
}

void validate(const BenchSpec& s) {
  require(s.repetitions >= 1, ErrorKind::Config, "bench: repetitions must be >= 1");
  require(!s.methods.empty(), ErrorKind::Config, "bench: no methods");
  require(!s.targets.empty(), ErrorKind::Config, "bench: no targets");
  require(!s.cases.empty(), ErrorKind::Config, "bench: no cases");
  require(!s.sizes.empty(), ErrorKind::Config, "bench: no sample sizes");
  for (auto n : s.sizes) require(n >= 2, ErrorKind::Config, "bench: sample sizes must be >= 2");
  require(s.n_samples >= 1, ErrorKind::Config, "bench: n_samples must be >= 1");
  require(s.workers >= 1, ErrorKind::Config, "bench: workers must be >= 1");
  require(s.train.epochs >= 1, ErrorKind::Config, "bench: epochs must be >= 1");
  scm::validate(s.base);
}

double estimation_bias(double estimate, double truth) {
  if (truth == 0.0) fail(ErrorKind::UndefinedMetric, "estimation bias is undefined for a zero true effect");
  return std::abs((estimate - truth) / truth) * 100.0;
}

MeanStd aggregate(const std::vector<double>& v) {
  if (v.empty()) fail(ErrorKind::Aggregation, "cannot aggregate an empty cell");
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size()))};
}

std::uint64_t dataset_seed(std::uint64_t master, scm::CaseId id, std::size_t n, int rep) {
  return derive_seed(master, {0x64617461, static_cast<std::uint64_t>(id), n, static_cast<std::uint64_t>(rep)});
}

std::uint64_t method_seed(std::uint64_t master, scm::CaseId id, std::size_t n, int rep, Method m) {
  return derive_seed(master, {0x6d657468, static_cast<std::uint64_t>(id), n, static_cast<std::uint64_t>(rep),
                              static_cast<std::uint64_t>(m)});
}

estimate::EffectEstimate fit_method(Method method, const scm::Dataset& data, const BenchSpec& spec,
                                    std::uint64_t seed) {
  if (method == Method::Lsem) return baselines::lsem_effects(baselines::lsem_fit(data));
  model::ModelConfig mc = spec.model;
  mc.architecture = method == Method::Dmavae ? model::Architecture::Dmavae : model::Architecture::Cmavae;
  mc.x_dim = data.x_dim();
  mc.m_kind = data.m_kind;
  mc.m_classes = data.m_classes;
  mc.y_kind = data.y_kind;
  mc.seed = derive_seed(seed, {1});
  auto m = model::make_model(mc);
  train::TrainConfig tc = spec.train;
  tc.seed = derive_seed(seed, {2});
  tc.batch_size = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(tc.batch_size), data.size()));
  train::train(m, data, tc);
  estimate::EstimateOptions eo;
  eo.n_samples = spec.n_samples;
  eo.seed = derive_seed(seed, {3});
  return estimate::estimate_effects(m, data, eo);
}

namespace {

struct Job {
  scm::CaseId id;
  std::size_t n;
  int rep;
};

std::vector<CellRecord> run_job(const BenchSpec& spec, const scm::ScmSpec& case_spec, const Job& job) {
  std::vector<CellRecord> out;
  std::optional<scm::Dataset> data;
  std::string data_error;
  try {
    data = scm::sample_dataset(case_spec, job.n, dataset_seed(spec.master_seed, job.id, job.n, job.rep));
  } catch (const std::exception& e) {
    data_error = e.what();
  }
  for (Method m : spec.methods) {
    std::optional<estimate::EffectEstimate> est;
    std::string err = data_error;
    if (data) {
      try {
        est = fit_method(m, *data, spec, method_seed(spec.master_seed, job.id, job.n, job.rep, m));
      } catch (const std::exception& e) {
        err = e.what();
      }
    }
    for (Target t : spec.targets) {
      CellRecord r;
      r.method = m;
      r.case_id = job.id;
      r.n = job.n;
      r.rep = job.rep;
      r.target = t;
      r.truth = data && data->truth ? pick(*data->truth, t) : std::nan("");
      if (est && std::isfinite(pick(*est, t))) {
        r.estimate = pick(*est, t);
        if (r.truth == 0.0) {
          r.status = CellStatus::AbsoluteError;
          r.bias_pct = std::abs(r.estimate - r.truth);
        } else {
          r.bias_pct = estimation_bias(r.estimate, r.truth);
        }
      } else {
        r.status = CellStatus::Failed;
        r.estimate = est ? pick(*est, t) : std::nan("");
        r.bias_pct = std::nan("");
        r.message = est ? "non-finite estimate" : err;
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

}  // namespace

BenchReport run_benchmark(const BenchSpec& spec) {
  validate(spec);
  std::map<scm::CaseId, scm::ScmSpec> specs;
  for (auto id : spec.cases) specs.emplace(id, scm::case_spec(id, spec.base));
  std::vector<Job> jobs;
  for (auto id : spec.cases)
    for (auto n : spec.sizes)
      for (int r = 0; r < spec.repetitions; ++r) jobs.push_back({id, n, r});

  std::vector<std::vector<CellRecord>> slots(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < jobs.size();)
      slots[i] = run_job(spec, specs.at(jobs[i].id), jobs[i]);
  };
  const int nworkers = std::min<int>(spec.workers, static_cast<int>(jobs.size()));
  if (nworkers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < nworkers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  BenchReport report;
  report.spec = spec;
  for (auto& s : slots)
    for (auto& r : s) report.cells.push_back(std::move(r));
  report.aggregates = aggregate_cells(spec, report.cells);
  return report;
}

std::vector<Aggregate> aggregate_cells(const BenchSpec& spec, const std::vector<CellRecord>& cells) {
  using Key = std::tuple<int, int, std::size_t, int>;
  std::map<Key, std::vector<double>> ok;
  std::vector<Key> order;
  for (const auto& c : cells) {
    Key k{static_cast<int>(c.method), static_cast<int>(c.case_id), c.n, static_cast<int>(c.target)};
    auto [it, fresh] = ok.try_emplace(k);
    if (fresh) order.push_back(k);
    if (c.status == CellStatus::Ok) it->second.push_back(c.bias_pct);
  }
  std::sort(order.begin(), order.end());
  std::vector<Aggregate> out;
  for (const auto& k : order) {
    Aggregate a;
    a.method = static_cast<Method>(std::get<0>(k));
    a.case_id = static_cast<scm::CaseId>(std::get<1>(k));
    a.n = std::get<2>(k);
    a.target = static_cast<Target>(std::get<3>(k));
    const auto& v = ok.at(k);
    a.count = static_cast<int>(v.size());
    a.expected = spec.repetitions;
    if (v.empty()) {
      a.mean_bias_pct = a.std_bias_pct = std::nan("");
    } else {
      const auto ms = aggregate(v);
      a.mean_bias_pct = ms.mean;
      a.std_bias_pct = ms.std;
    }
    out.push_back(a);
  }
  return out;
}

static constexpr const char* kCellsHeader = "method,case,n,rep,target,estimate,truth,bias_pct,status";

void write_cells_csv(const std::vector<CellRecord>& cells, std::ostream& out) {
  out << kCellsHeader << '\n';
  for (const auto& c : cells)
    out << to_string(c.method) << ',' << scm::to_string(c.case_id) << ',' << c.n << ',' << c.rep << ','
        << to_string(c.target) << ',' << fmt::real(c.estimate) << ',' << fmt::real(c.truth) << ','
        << fmt::real(c.bias_pct) << ',' << to_string(c.status) << '\n';
}

std::vector<CellRecord> read_cells_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || io::trim(line) != kCellsHeader)
    fail(ErrorKind::Parse, "cells.csv: bad header");
  std::vector<CellRecord> out;
  int no = 1;
  while (std::getline(in, line)) {
    ++no;
    if (io::trim(line).empty()) continue;
    const auto f = io::split(io::trim(line), ',');
    try {
      require(f.size() == 9, ErrorKind::Parse, "expected 9 fields");
      CellRecord c;
      c.method = parse_method(f[0]);
      c.case_id = scm::parse_case_id(f[1]);
      c.n = static_cast<std::size_t>(io::parse_u64(f[2]));
      c.rep = io::parse_int(f[3]);
      c.target = parse_target(f[4]);
      c.estimate = fmt::parse_real(f[5]);
      c.truth = fmt::parse_real(f[6]);
      c.bias_pct = fmt::parse_real(f[7]);
      c.status = parse_cell_status(f[8]);
      out.push_back(std::move(c));
    } catch (const Error& e) {
      fail(ErrorKind::Parse, "cells.csv:" + std::to_string(no) + ": " + e.what());
    }
  }
  return out;
}

void write_aggregates_csv(const std::vector<Aggregate>& aggs, std::ostream& out) {
  out << "method,case,n,target,mean_bias_pct,std_bias_pct,count\n";
  for (const auto& a : aggs)
    out << to_string(a.method) << ',' << scm::to_string(a.case_id) << ',' << a.n << ',' << to_string(a.target)
        << ',' << fmt::real(a.mean_bias_pct) << ',' << fmt::real(a.std_bias_pct) << ',' << a.count << '\n';
}

namespace {

std::string fnv1a(const std::string& text, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string cells_text(const BenchReport& r) {
  std::ostringstream ss;
  write_cells_csv(r.cells, ss);
  return ss.str();
}

std::string aggregates_text(const BenchReport& r) {
  std::ostringstream ss;
  write_aggregates_csv(r.aggregates, ss);
  return ss.str();
}

json real_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

std::string report_hash(const BenchReport& r) { return fnv1a(cells_text(r) + aggregates_text(r)); }

std::string report_json(const BenchReport& r) {
  const auto& s = r.spec;
  json j;
  j["format"] = "dmavae-bench-report";
  j["hash"] = report_hash(r);
  std::ostringstream spec_text;
  io::write_spec(s.base, spec_text);
  json spec;
  spec["base"] = spec_text.str();
  spec["cases"] = json::array();
  for (auto c : s.cases) spec["cases"].push_back(std::string(scm::to_string(c)));
  spec["sizes"] = s.sizes;
  spec["repetitions"] = s.repetitions;
  spec["methods"] = json::array();
  for (auto m : s.methods) spec["methods"].push_back(std::string(to_string(m)));
  spec["targets"] = json::array();
  for (auto t : s.targets) spec["targets"].push_back(std::string(to_string(t)));
  spec["master_seed"] = s.master_seed;
  spec["n_samples"] = s.n_samples;
  spec["model"] = {{"hidden", s.model.hidden},
                   {"activation", std::string(nn::to_string(s.model.activation))},
                   {"dim_tm", s.model.dim_tm},
                   {"dim_my", s.model.dim_my},
                   {"dim_ty", s.model.dim_ty},
                   {"dim_z", s.model.dim_z},
                   {"aux_weight", s.model.aux_weight}};
  spec["train"] = {{"epochs", s.train.epochs},   {"batch_size", s.train.batch_size}, {"lr", s.train.lr},
                   {"beta1", s.train.beta1},     {"beta2", s.train.beta2},           {"eps", s.train.eps},
                   {"patience", s.train.patience}};
  j["spec"] = std::move(spec);

  json seeds = json::array();
  for (auto id : s.cases)
    for (auto n : s.sizes)
      for (int rep = 0; rep < s.repetitions; ++rep) {
        json e{{"case", std::string(scm::to_string(id))}, {"n", n}, {"rep", rep},
               {"dataset_seed", dataset_seed(s.master_seed, id, n, rep)}};
        for (auto m : s.methods) e[std::string(to_string(m)) + "_seed"] = method_seed(s.master_seed, id, n, rep, m);
        seeds.push_back(std::move(e));
      }
  j["seeds"] = std::move(seeds);

  json cells = json::array();
  for (const auto& c : r.cells) {
    json e{{"method", std::string(to_string(c.method))},
           {"case", std::string(scm::to_string(c.case_id))},
           {"n", c.n},
           {"rep", c.rep},
           {"target", std::string(to_string(c.target))},
           {"estimate", real_or_null(c.estimate)},
           {"truth", real_or_null(c.truth)},
           {"bias_pct", real_or_null(c.bias_pct)},
           {"status", std::string(to_string(c.status))}};
    if (!c.message.empty()) e["message"] = c.message;
    cells.push_back(std::move(e));
  }
  j["cells"] = std::move(cells);
  json aggs = json::array();
  for (const auto& a : r.aggregates)
    aggs.push_back({{"method", std::string(to_string(a.method))},
                    {"case", std::string(scm::to_string(a.case_id))},
                    {"n", a.n},
                    {"target", std::string(to_string(a.target))},
                    {"mean_bias_pct", real_or_null(a.mean_bias_pct)},
                    {"std_bias_pct", real_or_null(a.std_bias_pct)},
                    {"count", a.count},
                    {"expected", a.expected},
                    {"flagged", a.flagged()}});
  j["aggregates"] = std::move(aggs);
  return j.dump(2) + "\n";
}

std::string bias_svg(const BenchReport& r, Target target) {
  struct Series {
    std::string label;
    std::vector<const Aggregate*> points;
  };
  std::vector<Series> series;
  std::map<std::pair<int, int>, std::size_t> index;
  double xmin = 1e300, xmax = -1e300, ymax = 0.0;
  for (const auto& a : r.aggregates) {
    if (a.target != target || !std::isfinite(a.mean_bias_pct)) continue;
    const std::pair<int, int> key{static_cast<int>(a.method), static_cast<int>(a.case_id)};
    auto [it, fresh] = index.try_emplace(key, series.size());
    if (fresh) {
      std::string label(to_string(a.method));
      if (r.spec.cases.size() > 1) label += " / " + std::string(scm::to_string(a.case_id));
      series.push_back({label, {}});
    }
    series[it->second].points.push_back(&a);
    xmin = std::min(xmin, static_cast<double>(a.n));
    xmax = std::max(xmax, static_cast<double>(a.n));
    ymax = std::max(ymax, a.mean_bias_pct + a.std_bias_pct);
  }
  if (series.empty()) return {};
  if (xmax == xmin) {
    xmin -= 1.0;
    xmax += 1.0;
  }
  if (ymax <= 0.0) ymax = 1.0;
  ymax *= 1.1;

  const double W = 640, H = 420, L = 70, R = 170, T = 40, B = 60;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - y / ymax * (H - T - B); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  char buf[256];
  std::string s;
  s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" viewBox=\"0 0 640 420\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
                "Estimation bias (%%) for %s</text>\n",
                (L + W - R) / 2, std::string(to_string(target)).c_str());
  s += buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, H - B,
                W - R, H - B);
  s += buf;
  std::snprintf(buf, sizeof buf, "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"black\"/>\n", L, T, L,
                H - B);
  s += buf;
  for (int i = 0; i <= 5; ++i) {
    const double y = ymax * i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"#ddd\"/>"
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">%.3g</text>\n",
                  L, py(y), W - R, py(y), L - 6, py(y) + 4, y);
    s += buf;
  }
  std::vector<std::size_t> xs;
  for (const auto& se : series)
    for (const auto* p : se.points) xs.push_back(p->n);
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  for (auto x : xs) {
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">%zu</text>\n",
                  px(static_cast<double>(x)), H - B + 16, x);
    s += buf;
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%g\" y=\"%g\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">n</text>\n",
                (L + W - R) / 2, H - 18);
  s += buf;
  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* col = colors[k % 10];
    auto pts = series[k].points;
    std::sort(pts.begin(), pts.end(), [](auto* a, auto* b) { return a->n < b->n; });
    std::string path;
    for (const auto* p : pts) {
      std::snprintf(buf, sizeof buf, "%s%g,%g", path.empty() ? "" : " ", px(static_cast<double>(p->n)),
                    py(p->mean_bias_pct));
      path += buf;
    }
    s += "<g class=\"series\" data-label=\"" + series[k].label + "\">\n";
    std::snprintf(buf, sizeof buf, "<polyline fill=\"none\" stroke=\"%s\" stroke-width=\"2\" points=\"", col);
    s += buf + path + "\"/>\n";
    for (const auto* p : pts) {
      const double x = px(static_cast<double>(p->n));
      const double lo = std::max(0.0, p->mean_bias_pct - p->std_bias_pct), hi = p->mean_bias_pct + p->std_bias_pct;
      std::snprintf(buf, sizeof buf,
                    "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\"/>"
                    "<circle cx=\"%g\" cy=\"%g\" r=\"3\" fill=\"%s\"/>\n",
                    x, py(lo), x, py(hi), col, x, py(p->mean_bias_pct), col);
      s += buf;
    }
    s += "</g>\n";
    const double ly = T + 10 + 18.0 * static_cast<double>(k);
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%g\" y1=\"%g\" x2=\"%g\" y2=\"%g\" stroke=\"%s\" stroke-width=\"2\"/>"
                  "<text x=\"%g\" y=\"%g\" font-family=\"sans-serif\" font-size=\"11\">",
                  W - R + 12, ly, W - R + 32, ly, col, W - R + 38, ly + 4);
    s += buf + series[k].label + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

std::vector<std::filesystem::path> emit_report(const BenchReport& r, const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  auto put = [&](const std::string& name, const std::string& text) {
    const auto p = dir / name;
    io::write_text(p, text);
    written.push_back(p);
  };
  put("cells.csv", cells_text(r));
  put("aggregates.csv", aggregates_text(r));
  put("report.json", report_json(r));
  for (Target t : {Target::Nde, Target::NieR, Target::Te}) {
    const auto svg = bias_svg(r, t);
    if (!svg.empty()) put("bias_" + std::string(to_string(t)) + ".svg", svg);
  }
  return written;
}

}  // namespace dmavae::bench
