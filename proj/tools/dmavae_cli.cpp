// Command-line front end. Talks to the library only through the C interface.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dmavae/dmavae.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int code;
  std::string message;
};

int exit_code_for(dmavae_status s) {
  switch (s) {
    case DMAVAE_ERR_PARSE:
    case DMAVAE_ERR_IO:
    case DMAVAE_ERR_CONFIG:
    case DMAVAE_ERR_ARGUMENT:
    case DMAVAE_ERR_SPEC:
    case DMAVAE_ERR_INGESTION:
    case DMAVAE_ERR_NULL_ARGUMENT: return kExitUsage;
    default: return kExitRuntime;
  }
}

void check(dmavae_status s, const std::string& what) {
  if (s != DMAVAE_OK)
    throw Failure{exit_code_for(s), what + ": " + dmavae_status_string(s) + ": " + dmavae_last_error()};
}

[[noreturn]] void usage(const std::string& msg) { throw Failure{kExitUsage, msg}; }

template <class T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using Spec = Handle<dmavae_spec, dmavae_spec_free>;
using Dataset = Handle<dmavae_dataset, dmavae_dataset_free>;
using Model = Handle<dmavae_model, dmavae_model_free>;
using Options = Handle<dmavae_options, dmavae_options_free>;

const std::vector<std::string> kModelKeys{"architecture", "dim_tm",     "dim_my",     "dim_ty",    "dim_z",
                                          "hidden",       "activation", "aux_weight", "model_seed"};
const std::vector<std::string> kTrainKeys{"epochs", "batch_size", "lr",       "beta1",
                                          "beta2",  "adam_eps",   "patience", "train_seed"};
const std::vector<std::string> kEstimateKeys{"n_samples", "estimate_seed", "mediator", "chunk"};
const std::vector<std::string> kBenchKeys{"cases", "sizes", "reps", "methods", "targets", "master_seed", "workers"};
const std::vector<std::string> kAuditKeys{"tau", "adult_drop"};

const std::map<std::string, std::string> kHelp{
    {"architecture", "dmavae | cmavae"},
    {"dim_tm", "size of the T-M confounder block"},
    {"dim_my", "size of the M-Y confounder block"},
    {"dim_ty", "size of the T-Y confounder block"},
    {"dim_z", "latent size of the single-block model"},
    {"hidden", "hidden layer widths, comma separated"},
    {"activation", "elu | relu | tanh"},
    {"aux_weight", "weight of the T, M and Y predictor terms in the loss"},
    {"model_seed", "parameter initialisation seed"},
    {"epochs", "passes over the data"},
    {"batch_size", "records per step"},
    {"lr", "Adam step size"},
    {"beta1", "Adam first-moment decay"},
    {"beta2", "Adam second-moment decay"},
    {"adam_eps", "Adam epsilon"},
    {"patience", "stop after this many epochs without improvement (0 = off)"},
    {"train_seed", "shuffling and noise seed"},
    {"n_samples", "latent draws per record"},
    {"estimate_seed", "estimation seed"},
    {"mediator", "auto | sample"},
    {"chunk", "records evaluated together"},
    {"cases", "full, fig1b, case1..case6, comma separated"},
    {"sizes", "dataset sizes, comma separated"},
    {"reps", "repetitions per case and size"},
    {"methods", "dmavae, cmavae, lsem, comma separated"},
    {"targets", "nde, nie_r, te, comma separated"},
    {"master_seed", "seed all bench cells derive from"},
    {"workers", "parallel bench jobs"},
    {"tau", "flag threshold on effect magnitude (default 0.05)"},
    {"adult_drop", "Adult columns to leave out, comma separated"},
};

// String-valued options forwarded verbatim to dmavae_options_set.
struct LibOptions {
  std::map<std::string, std::string> values;
  std::vector<std::pair<std::string, CLI::Option*>> opts;

  void add(CLI::App* app, const std::vector<std::string>& keys, const std::string& group) {
    for (const auto& k : keys) {
      auto* o = app->add_option("--" + k, values[k], kHelp.at(k))->group(group);
      opts.emplace_back(k, o);
    }
  }
  void apply(dmavae_options* target) const {
    for (const auto& [k, o] : opts)
      if (o->count() > 0) check(dmavae_options_set(target, k.c_str(), values.at(k).c_str()), "option --" + k);
  }
};

struct Globals {
  std::string seed;
  std::string out;
  std::string config;
};

std::vector<std::pair<std::string, std::string>> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) usage("cannot open config file " + path);
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  int no = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) usage(path + ":" + std::to_string(no) + ": expected 'key = value'");
    kv.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

// Config keys fill every option that was not given on the command line.
// Keys that belong to another subcommand are ignored so that one file can
// serve the whole pipeline.
void apply_config(CLI::App& app, CLI::App* sub, const std::string& path) {
  for (const auto& [key, value] : read_config(path)) {
    const std::string name = "--" + key;
    CLI::Option* opt = sub ? sub->get_option_no_throw(name) : nullptr;
    if (!opt) opt = app.get_option_no_throw(name);
    if (!opt) {
      bool elsewhere = false;
      for (auto* other : app.get_subcommands({})) elsewhere = elsewhere || other->get_option_no_throw(name);
      if (!elsewhere) usage(path + ": unknown config key '" + key + "'");
      continue;
    }
    if (key == "config") usage(path + ": config files cannot include other config files");
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{kExitUsage, "cannot write " + path};
  out << text;
}

std::string effects_json(const dmavae_effects& e) {
  std::size_t len = 0;
  dmavae_effects_json(&e, nullptr, 0, &len);
  std::string buf(len + 1, '\0');
  check(dmavae_effects_json(&e, buf.data(), buf.size(), &len), "effects");
  buf.resize(len);
  return buf;
}

std::string audit_json(const dmavae_audit_report& r) {
  std::size_t len = 0;
  dmavae_audit_json(&r, nullptr, 0, &len);
  std::string buf(len + 1, '\0');
  check(dmavae_audit_json(&r, buf.data(), buf.size(), &len), "audit");
  buf.resize(len);
  return buf;
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty()) usage(flag + " is required");
  std::ifstream in(path);
  if (!in) usage(flag + ": cannot open " + path);
}

void make_options(Options& opts, const Globals& g, const LibOptions& lib) {
  check(dmavae_options_create(opts.out()), "options");
  if (!g.seed.empty()) check(dmavae_options_set(opts.get(), "seed", g.seed.c_str()), "--seed");
  lib.apply(opts.get());
}

std::uint64_t seed_value(const Globals& g) {
  if (g.seed.empty()) return 0;
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(g.seed, &pos);
    if (pos != g.seed.size() || g.seed.front() == '-') throw std::invalid_argument("seed");
    return v;
  } catch (const std::exception&) {
    usage("--seed must be a non-negative integer");
  }
}

void load_spec(Spec& spec, const std::string& path) {
  if (path.empty()) check(dmavae_spec_default(spec.out()), "spec");
  else check(dmavae_spec_load(path.c_str(), spec.out()), "spec " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mediation analysis with disentangled latent confounders"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "seed for the selected stage (config key: seed)");
  app.add_option("--out", g.out, "output path or directory (config key: out)");
  app.add_option("--config", g.config, "flat 'key = value' file; flags override it");

  // generate
  auto* gen = app.add_subcommand("generate", "sample a synthetic dataset with its ground truth");
  std::string gen_spec;
  std::string gen_n = "1000";
  gen->add_option("--spec", gen_spec, "spec file (default spec when omitted)");
  gen->add_option("--n", gen_n, "number of records");

  // train
  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  std::string tr_data, tr_trace;
  LibOptions tr_lib;
  tr->add_option("--data", tr_data, "dataset csv");
  tr->add_option("--trace", tr_trace, "write the per-epoch trace csv here");
  tr_lib.add(tr, kModelKeys, "Model");
  tr_lib.add(tr, kTrainKeys, "Training");

  // estimate
  auto* est = app.add_subcommand("estimate", "estimate NDE, NIE, NIE_r and TE");
  std::string est_data, est_ckpt, est_method = "model";
  LibOptions est_lib;
  est->add_option("--data", est_data, "dataset csv");
  est->add_option("--checkpoint", est_ckpt, "trained model checkpoint");
  est->add_option("--method", est_method, "model | lsem");
  est_lib.add(est, kEstimateKeys, "Estimation");

  // bench
  auto* be = app.add_subcommand("bench", "run the benchmark grid and write report files");
  std::string be_spec;
  LibOptions be_lib;
  be->add_option("--spec", be_spec, "base spec file (default spec when omitted)");
  be_lib.add(be, kModelKeys, "Model");
  be_lib.add(be, kTrainKeys, "Training");
  be_lib.add(be, {"n_samples"}, "Estimation");
  be_lib.add(be, kBenchKeys, "Benchmark");

  // audit
  auto* au = app.add_subcommand("audit", "direct and indirect discrimination audit");
  std::string au_data, au_adult, au_map_in, au_map_out, au_ckpt, au_trace;
  LibOptions au_lib;
  au->add_option("--data", au_data, "encoded dataset csv");
  au->add_option("--adult", au_adult, "raw Adult census file");
  au->add_option("--mapping-in", au_map_in, "reuse saved Adult encodings");
  au->add_option("--mapping-out", au_map_out, "write the Adult encodings here");
  au->add_option("--checkpoint", au_ckpt, "trained model; trains in place when omitted");
  au->add_option("--trace", au_trace, "training trace csv when training in place");
  au_lib.add(au, kModelKeys, "Model");
  au_lib.add(au, kTrainKeys, "Training");
  au_lib.add(au, kEstimateKeys, "Estimation");
  au_lib.add(au, kAuditKeys, "Audit");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int rc = app.exit(e);
      return rc == 0 ? kExitOk : kExitUsage;
    }
    CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
    if (!g.config.empty()) apply_config(app, sub, g.config);

    if (sub == gen) {
      Spec spec;
      load_spec(spec, gen_spec);
      std::size_t n = 0;
      try {
        n = std::stoull(gen_n);
      } catch (const std::exception&) {
        usage("--n must be a positive integer");
      }
      if (n == 0) usage("--n must be a positive integer");
      const std::string out = g.out.empty() ? "data.csv" : g.out;
      Dataset d;
      check(dmavae_dataset_sample(spec.get(), n, seed_value(g), d.out()), "generate");
      check(dmavae_dataset_save(d.get(), out.c_str()), "write " + out);
      std::cout << "wrote " << out << " (" << n << " records)\n";
    } else if (sub == tr) {
      require_file(tr_data, "--data");
      Options opts;
      make_options(opts, g, tr_lib);
      Dataset d;
      check(dmavae_dataset_load(tr_data.c_str(), d.out()), "dataset " + tr_data);
      Model m;
      check(dmavae_model_create(opts.get(), d.get(), m.out()), "model");
      check(dmavae_model_train(m.get(), d.get(), opts.get(), tr_trace.empty() ? nullptr : tr_trace.c_str()), "train");
      const std::string out = g.out.empty() ? "model.json" : g.out;
      check(dmavae_model_save(m.get(), out.c_str()), "write " + out);
      std::cout << "wrote " << out << "\n";
    } else if (sub == est) {
      require_file(est_data, "--data");
      Dataset d;
      check(dmavae_dataset_load(est_data.c_str(), d.out()), "dataset " + est_data);
      dmavae_effects e{};
      if (est_method == "lsem") {
        check(dmavae_lsem(d.get(), &e), "lsem");
      } else if (est_method == "model") {
        require_file(est_ckpt, "--checkpoint");
        Options opts;
        make_options(opts, g, est_lib);
        Model m;
        check(dmavae_model_load(est_ckpt.c_str(), m.out()), "checkpoint " + est_ckpt);
        check(dmavae_estimate(m.get(), d.get(), opts.get(), &e), "estimate");
      } else {
        usage("--method must be model or lsem");
      }
      const auto js = effects_json(e);
      if (!g.out.empty()) write_file(g.out, js);
      std::cout << js << "\n";
    } else if (sub == be) {
      Spec spec;
      load_spec(spec, be_spec);
      Options opts;
      make_options(opts, g, be_lib);
      const std::string out = g.out.empty() ? "bench_out" : g.out;
      dmavae_bench_summary s{};
      check(dmavae_bench_run(spec.get(), opts.get(), out.c_str(), &s), "bench");
      std::cout << "wrote " << out << ": " << s.cells << " cells, " << s.failed_cells << " failed, "
                << s.flagged_aggregates << " flagged aggregates, hash " << s.hash << "\n";
    } else if (sub == au) {
      if (au_data.empty() == au_adult.empty()) usage("audit needs exactly one of --data and --adult");
      Options opts;
      make_options(opts, g, au_lib);
      Dataset d;
      if (!au_adult.empty()) {
        require_file(au_adult, "--adult");
        if (!au_map_in.empty()) require_file(au_map_in, "--mapping-in");
        check(dmavae_dataset_ingest_adult(au_adult.c_str(), au_map_in.empty() ? nullptr : au_map_in.c_str(),
                                          au_map_out.empty() ? nullptr : au_map_out.c_str(), opts.get(), d.out()),
              "ingest " + au_adult);
      } else {
        require_file(au_data, "--data");
        check(dmavae_dataset_load(au_data.c_str(), d.out()), "dataset " + au_data);
      }
      Model m;
      if (!au_ckpt.empty()) {
        require_file(au_ckpt, "--checkpoint");
        check(dmavae_model_load(au_ckpt.c_str(), m.out()), "checkpoint " + au_ckpt);
      } else {
        check(dmavae_model_create(opts.get(), d.get(), m.out()), "model");
        check(dmavae_model_train(m.get(), d.get(), opts.get(), au_trace.empty() ? nullptr : au_trace.c_str()),
              "train");
      }
      dmavae_audit_report r{};
      check(dmavae_audit(m.get(), d.get(), opts.get(), &r), "audit");
      const auto js = audit_json(r);
      if (!g.out.empty()) write_file(g.out, js);
      std::cout << js << "\n";
    }
    return kExitOk;
  } catch (const Failure& f) {
    std::cerr << "dmavae: " << f.message << "\n";
    return f.code;
  } catch (const CLI::Error& e) {
    std::cerr << "dmavae: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "dmavae: " << e.what() << "\n";
    return kExitRuntime;
  }
}
