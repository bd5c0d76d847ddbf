#include "dmavae/dmavae.h"

#include <cstring>
#include <optional>
#include <sstream>
#include <string>

#include "dmavae/adult.hpp"
#include "dmavae/audit.hpp"
#include "dmavae/baselines.hpp"
#include "dmavae/bench.hpp"
#include "dmavae/error.hpp"
#include "dmavae/estimate.hpp"
#include "dmavae/format.hpp"
#include "dmavae/io.hpp"
#include "dmavae/model.hpp"
#include "dmavae/scm.hpp"
#include "dmavae/train.hpp"

using namespace dmavae;

struct dmavae_spec {
  scm::ScmSpec spec;
};

struct dmavae_dataset {
  scm::Dataset data;
};

struct dmavae_model {
  model::LatentModel model;
  train::TrainConfig train;
};

struct dmavae_options {
  model::ModelConfig model;
  std::optional<int> dim_z;
  train::TrainConfig train;
  estimate::EstimateOptions estimate;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> model_seed, train_seed, estimate_seed, master_seed;
  std::vector<scm::CaseId> cases{scm::CaseId::Full};
  std::vector<std::size_t> sizes{2000, 5000, 10000};
  int repetitions = 10;
  std::vector<bench::Method> methods{bench::Method::Dmavae, bench::Method::Cmavae, bench::Method::Lsem};
  std::vector<bench::Target> targets{bench::Target::Nde, bench::Target::NieR, bench::Target::Te};
  int workers = 1;
  double tau = audit::kDefaultTau;
  std::vector<std::string> adult_drop;

  model::ModelConfig model_config(const scm::Dataset& d) const {
    model::ModelConfig c = model;
    c.x_dim = d.x_dim();
    c.m_kind = d.m_kind;
    c.m_classes = d.m_classes;
    c.y_kind = d.y_kind;
    c.dim_z = dim_z.value_or(c.dim_tm + c.dim_my + c.dim_ty);
    c.seed = model_seed.value_or(seed);
    return c;
  }
  train::TrainConfig train_config() const {
    train::TrainConfig t = train;
    t.seed = train_seed.value_or(seed);
    return t;
  }
  estimate::EstimateOptions estimate_options() const {
    estimate::EstimateOptions e = estimate;
    e.seed = estimate_seed.value_or(seed);
    return e;
  }
};

namespace {

thread_local std::string g_last_error;

dmavae_status status_of(ErrorKind k) { return static_cast<dmavae_status>(static_cast<int>(k) + 1); }

dmavae_status set_error(dmavae_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
dmavae_status guard(F&& f) {
  try {
    g_last_error.clear();
    f();
    return DMAVAE_OK;
  } catch (const Error& e) {
    return set_error(status_of(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(DMAVAE_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(DMAVAE_ERR_INTERNAL, e.what());
  }
}

#define DMAVAE_REQUIRE_ARG(p) \
  if (!(p)) return set_error(DMAVAE_ERR_NULL_ARGUMENT, std::string(__func__) + ": " #p " is NULL")

dmavae_status put_text(const std::string& text, char* buf, std::size_t cap, std::size_t* len) {
  if (len) *len = text.size();
  if (!buf || cap < text.size() + 1) return set_error(DMAVAE_ERR_BUFFER_TOO_SMALL, "buffer too small");
  std::memcpy(buf, text.c_str(), text.size() + 1);
  return DMAVAE_OK;
}

dmavae_effects to_c(const estimate::EffectEstimate& e) {
  return {e.nde, e.nie, e.nie_r, e.te, e.se_nde, e.se_nie, e.se_nie_r, e.se_te, e.n_samples, e.seed};
}

estimate::EffectEstimate from_c(const dmavae_effects& e) {
  estimate::EffectEstimate o;
  o.nde = e.nde;
  o.nie = e.nie;
  o.nie_r = e.nie_r;
  o.te = e.te;
  o.se_nde = e.se_nde;
  o.se_nie = e.se_nie;
  o.se_nie_r = e.se_nie_r;
  o.se_te = e.se_te;
  o.n_samples = e.n_samples;
  o.seed = e.seed;
  return o;
}

dmavae_truth to_c(const scm::GroundTruthEffects& g) {
  return {g.nde,    g.nie,    g.nie_r,  g.te, g.se_nde, g.se_nie, g.se_nie_r, g.se_te,
          static_cast<dmavae_oracle>(static_cast<int>(g.method)), g.n_mc, g.seed};
}

template <class T, class F>
std::vector<T> parse_list(const std::string& text, F&& one) {
  std::vector<T> out;
  for (const auto& part : io::split(text, ',')) {
    const auto p = io::trim(part);
    if (!p.empty()) out.push_back(one(p));
  }
  return out;
}

const char* kOptionKeys =
    "seed\narchitecture\ndim_tm\ndim_my\ndim_ty\ndim_z\nhidden\nactivation\naux_weight\nmodel_seed\n"
    "epochs\nbatch_size\nlr\nbeta1\nbeta2\nadam_eps\npatience\ntrain_seed\n"
    "n_samples\nestimate_seed\nmediator\nchunk\n"
    "cases\nsizes\nreps\nmethods\ntargets\nmaster_seed\nworkers\n"
    "tau\nadult_drop\n";

void set_option(dmavae_options& o, const std::string& key, const std::string& v) {
  if (key == "seed") o.seed = io::parse_u64(v);
  else if (key == "architecture") o.model.architecture = model::parse_architecture(io::trim(v));
  else if (key == "dim_tm") o.model.dim_tm = io::parse_int(v);
  else if (key == "dim_my") o.model.dim_my = io::parse_int(v);
  else if (key == "dim_ty") o.model.dim_ty = io::parse_int(v);
  else if (key == "dim_z") o.dim_z = io::parse_int(v);
  else if (key == "hidden") o.model.hidden = io::parse_int_list(v);
  else if (key == "activation") o.model.activation = nn::parse_activation(io::trim(v));
  else if (key == "aux_weight") o.model.aux_weight = fmt::parse_real(io::trim(v));
  else if (key == "model_seed") o.model_seed = io::parse_u64(v);
  else if (key == "epochs") o.train.epochs = io::parse_int(v);
  else if (key == "batch_size") o.train.batch_size = io::parse_int(v);
  else if (key == "lr") o.train.lr = fmt::parse_real(io::trim(v));
  else if (key == "beta1") o.train.beta1 = fmt::parse_real(io::trim(v));
  else if (key == "beta2") o.train.beta2 = fmt::parse_real(io::trim(v));
  else if (key == "adam_eps") o.train.eps = fmt::parse_real(io::trim(v));
  else if (key == "patience") o.train.patience = io::parse_int(v);
  else if (key == "train_seed") o.train_seed = io::parse_u64(v);
  else if (key == "n_samples") o.estimate.n_samples = io::parse_int(v);
  else if (key == "estimate_seed") o.estimate_seed = io::parse_u64(v);
  else if (key == "mediator") {
    const auto m = io::trim(v);
    if (m == "auto") o.estimate.mediator = estimate::MediatorMode::Auto;
    else if (m == "sample") o.estimate.mediator = estimate::MediatorMode::Sample;
    else fail(ErrorKind::Parse, "mediator must be auto or sample");
  } else if (key == "chunk") {
    const int c = io::parse_int(v);
    require(c >= 1, ErrorKind::Parse, "chunk must be >= 1");
    o.estimate.chunk = static_cast<std::size_t>(c);
  } else if (key == "cases") o.cases = parse_list<scm::CaseId>(v, [](const std::string& s) { return scm::parse_case_id(s); });
  else if (key == "sizes")
    o.sizes = parse_list<std::size_t>(v, [](const std::string& s) { return static_cast<std::size_t>(io::parse_u64(s)); });
  else if (key == "reps") o.repetitions = io::parse_int(v);
  else if (key == "methods") o.methods = parse_list<bench::Method>(v, [](const std::string& s) { return bench::parse_method(s); });
  else if (key == "targets") o.targets = parse_list<bench::Target>(v, [](const std::string& s) { return bench::parse_target(s); });
  else if (key == "master_seed") o.master_seed = io::parse_u64(v);
  else if (key == "workers") o.workers = io::parse_int(v);
  else if (key == "tau") o.tau = fmt::parse_real(io::trim(v));
  else if (key == "adult_drop") o.adult_drop = parse_list<std::string>(v, [](const std::string& s) { return s; });
  else fail(ErrorKind::Config, "unknown option '" + key + "'");
}

}  // namespace

extern "C" {

const char* dmavae_last_error(void) { return g_last_error.c_str(); }

const char* dmavae_status_string(dmavae_status s) {
  switch (s) {
    case DMAVAE_OK: return "ok";
    case DMAVAE_ERR_NULL_ARGUMENT: return "null argument";
    case DMAVAE_ERR_BUFFER_TOO_SMALL: return "buffer too small";
    case DMAVAE_ERR_INTERNAL: return "internal error";
    default:
      if (s > DMAVAE_OK && s < DMAVAE_ERR_NULL_ARGUMENT) return to_string(static_cast<ErrorKind>(s - 1));
      return "unknown status";
  }
}

dmavae_status dmavae_options_create(dmavae_options** out) {
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] { *out = new dmavae_options(); });
}

dmavae_status dmavae_options_set(dmavae_options* o, const char* key, const char* value) {
  DMAVAE_REQUIRE_ARG(o);
  DMAVAE_REQUIRE_ARG(key);
  DMAVAE_REQUIRE_ARG(value);
  return guard([&] {
    try {
      set_option(*o, key, value);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::Config) throw;
      fail(ErrorKind::Parse, "option '" + std::string(key) + "': " + e.what());
    }
  });
}

const char* dmavae_options_keys(void) { return kOptionKeys; }

void dmavae_options_free(dmavae_options* o) { delete o; }

dmavae_status dmavae_spec_default(dmavae_spec** out) {
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] { *out = new dmavae_spec{scm::default_spec()}; });
}

dmavae_status dmavae_spec_load(const char* path, dmavae_spec** out) {
  DMAVAE_REQUIRE_ARG(path);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] { *out = new dmavae_spec{io::read_spec(path)}; });
}

dmavae_status dmavae_spec_save(const dmavae_spec* s, const char* path) {
  DMAVAE_REQUIRE_ARG(s);
  DMAVAE_REQUIRE_ARG(path);
  return guard([&] {
    std::ostringstream ss;
    io::write_spec(s->spec, ss);
    io::write_text(path, ss.str());
  });
}

dmavae_status dmavae_spec_set(dmavae_spec* s, const char* key, const char* value) {
  DMAVAE_REQUIRE_ARG(s);
  DMAVAE_REQUIRE_ARG(key);
  DMAVAE_REQUIRE_ARG(value);
  return guard([&] { s->spec = io::spec_from_key_values({{key, value, 0}}, s->spec); });
}

dmavae_status dmavae_spec_case(const dmavae_spec* base, const char* case_id, dmavae_spec** out) {
  DMAVAE_REQUIRE_ARG(base);
  DMAVAE_REQUIRE_ARG(case_id);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] { *out = new dmavae_spec{scm::case_spec(scm::parse_case_id(case_id), base->spec)}; });
}

dmavae_status dmavae_spec_oracle(const dmavae_spec* s, const char* method, std::size_t n_mc, std::uint64_t seed,
                                 dmavae_truth* out) {
  DMAVAE_REQUIRE_ARG(s);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] {
    const auto g = method ? scm::oracle_effects(s->spec, scm::parse_oracle_method(method),
                                                n_mc ? n_mc : scm::kDefaultMonteCarloUnits, seed)
                          : scm::default_oracle(s->spec);
    *out = to_c(g);
  });
}

void dmavae_spec_free(dmavae_spec* s) { delete s; }

dmavae_status dmavae_dataset_sample(const dmavae_spec* s, std::size_t n, std::uint64_t seed, dmavae_dataset** out) {
  DMAVAE_REQUIRE_ARG(s);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] {
    require(n >= 1, ErrorKind::Argument, "n must be >= 1");
    *out = new dmavae_dataset{scm::sample_dataset(s->spec, n, seed)};
  });
}

dmavae_status dmavae_dataset_load(const char* path, dmavae_dataset** out) {
  DMAVAE_REQUIRE_ARG(path);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] { *out = new dmavae_dataset{io::read_dataset(path)}; });
}

dmavae_status dmavae_dataset_save(const dmavae_dataset* d, const char* path) {
  DMAVAE_REQUIRE_ARG(d);
  DMAVAE_REQUIRE_ARG(path);
  return guard([&] { io::write_dataset(d->data, path); });
}

dmavae_status dmavae_dataset_info_get(const dmavae_dataset* d, dmavae_dataset_info* out) {
  DMAVAE_REQUIRE_ARG(d);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] {
    dmavae_dataset_info i{};
    i.n = d->data.size();
    i.x_dim = d->data.x_dim();
    i.m_kind = static_cast<dmavae_kind>(static_cast<int>(d->data.m_kind));
    i.y_kind = static_cast<dmavae_kind>(static_cast<int>(d->data.y_kind));
    i.m_classes = d->data.m_classes;
    i.has_truth = d->data.truth.has_value();
    if (d->data.truth) i.truth = to_c(*d->data.truth);
    i.seed = d->data.seed;
    *out = i;
  });
}

dmavae_status dmavae_dataset_ingest_adult(const char* raw, const char* mapping_in, const char* mapping_out,
                                          const dmavae_options* opts, dmavae_dataset** out) {
  DMAVAE_REQUIRE_ARG(raw);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] {
    std::optional<adult::AdultMapping> mapping;
    if (mapping_in) mapping = adult::mapping_from_json(io::read_text(mapping_in));
    auto in = adult::ingest(raw, mapping, opts ? opts->adult_drop : std::vector<std::string>{});
    if (mapping_out) io::write_text(mapping_out, adult::mapping_json(in.mapping));
    *out = new dmavae_dataset{std::move(in.data)};
  });
}

void dmavae_dataset_free(dmavae_dataset* d) { delete d; }

dmavae_status dmavae_model_create(const dmavae_options* o, const dmavae_dataset* d, dmavae_model** out) {
  DMAVAE_REQUIRE_ARG(o);
  DMAVAE_REQUIRE_ARG(d);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] { *out = new dmavae_model{model::make_model(o->model_config(d->data)), o->train_config()}; });
}

dmavae_status dmavae_model_train(dmavae_model* m, const dmavae_dataset* d, const dmavae_options* o,
                                 const char* trace_csv) {
  DMAVAE_REQUIRE_ARG(m);
  DMAVAE_REQUIRE_ARG(d);
  DMAVAE_REQUIRE_ARG(o);
  return guard([&] {
    const auto tc = o->train_config();
    const auto trace = train::train(m->model, d->data, tc);
    m->train = tc;
    if (trace_csv) {
      std::ostringstream ss;
      train::write_trace_csv(trace, ss);
      io::write_text(trace_csv, ss.str());
    }
  });
}

dmavae_status dmavae_model_save(const dmavae_model* m, const char* path) {
  DMAVAE_REQUIRE_ARG(m);
  DMAVAE_REQUIRE_ARG(path);
  return guard([&] { io::save_checkpoint(m->model, m->train, path); });
}

dmavae_status dmavae_model_load(const char* path, dmavae_model** out) {
  DMAVAE_REQUIRE_ARG(path);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] {
    train::TrainConfig tc;
    auto m = io::load_checkpoint(path, &tc);
    *out = new dmavae_model{std::move(m), tc};
  });
}

void dmavae_model_free(dmavae_model* m) { delete m; }

dmavae_status dmavae_estimate(const dmavae_model* m, const dmavae_dataset* d, const dmavae_options* o,
                              dmavae_effects* out) {
  DMAVAE_REQUIRE_ARG(m);
  DMAVAE_REQUIRE_ARG(d);
  DMAVAE_REQUIRE_ARG(o);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] { *out = to_c(estimate::estimate_effects(m->model, d->data, o->estimate_options())); });
}

dmavae_status dmavae_lsem(const dmavae_dataset* d, dmavae_effects* out) {
  DMAVAE_REQUIRE_ARG(d);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] { *out = to_c(baselines::lsem_effects(baselines::lsem_fit(d->data))); });
}

dmavae_status dmavae_effects_json(const dmavae_effects* e, char* buf, std::size_t cap, std::size_t* len) {
  DMAVAE_REQUIRE_ARG(e);
  std::string text;
  const auto s = guard([&] { text = estimate::to_json(from_c(*e)); });
  return s == DMAVAE_OK ? put_text(text, buf, cap, len) : s;
}

dmavae_status dmavae_audit_json(const dmavae_audit_report* r, char* buf, std::size_t cap, std::size_t* len) {
  DMAVAE_REQUIRE_ARG(r);
  audit::AuditReport a;
  a.nde = r->nde;
  a.nie = r->nie;
  a.tau = r->tau;
  a.direct_flag = r->direct_flag != 0;
  a.indirect_flag = r->indirect_flag != 0;
  a.n = r->n;
  a.seed = r->seed;
  std::string text;
  const auto s = guard([&] { text = audit::to_json(a); });
  return s == DMAVAE_OK ? put_text(text, buf, cap, len) : s;
}

dmavae_status dmavae_bench_run(const dmavae_spec* base, const dmavae_options* o, const char* out_dir,
                               dmavae_bench_summary* out) {
  DMAVAE_REQUIRE_ARG(base);
  DMAVAE_REQUIRE_ARG(o);
  DMAVAE_REQUIRE_ARG(out_dir);
  return guard([&] {
    bench::BenchSpec s;
    s.base = base->spec;
    s.cases = o->cases;
    s.sizes = o->sizes;
    s.repetitions = o->repetitions;
    s.methods = o->methods;
    s.targets = o->targets;
    s.master_seed = o->master_seed.value_or(o->seed);
    s.model = o->model;
    s.model.dim_z = o->dim_z.value_or(s.model.dim_tm + s.model.dim_my + s.model.dim_ty);
    s.train = o->train;
    s.n_samples = o->estimate.n_samples;
    s.workers = o->workers;
    const auto r = bench::run_benchmark(s);
    bench::emit_report(r, out_dir);
    if (out) {
      dmavae_bench_summary sum{};
      sum.cells = r.cells.size();
      for (const auto& c : r.cells) sum.failed_cells += c.status == bench::CellStatus::Failed;
      for (const auto& a : r.aggregates) sum.flagged_aggregates += a.flagged();
      const auto h = bench::report_hash(r);
      std::memcpy(sum.hash, h.c_str(), std::min<std::size_t>(h.size(), 16));
      sum.hash[16] = '\0';
      *out = sum;
    }
  });
}

dmavae_status dmavae_audit(const dmavae_model* m, const dmavae_dataset* d, const dmavae_options* o,
                           dmavae_audit_report* out) {
  DMAVAE_REQUIRE_ARG(m);
  DMAVAE_REQUIRE_ARG(d);
  DMAVAE_REQUIRE_ARG(o);
  DMAVAE_REQUIRE_ARG(out);
  return guard([&] {
    const auto e = estimate::estimate_effects(m->model, d->data, o->estimate_options());
    const auto r = audit::make_report(e, o->tau, d->data.size());
    *out = {r.nde, r.nie, r.tau, r.direct_flag, r.indirect_flag, r.n, r.seed};
  });
}

}  // extern "C"
