#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dmavae/dmavae.h"
#include "json.hpp"

namespace fs = std::filesystem;

namespace {

struct Scratch {
  fs::path dir;
  explicit Scratch(const std::string& name) : dir(fs::temp_directory_path() / ("dmavae_cli_" + name)) {
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& f) const { return (dir / f).string(); }
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const Scratch& s, const std::string& args) {
  const std::string out = s / "stdout.txt", err = s / "stderr.txt";
  const std::string cmd = std::string("\"") + DMAVAE_CLI_PATH + "\" " + args + " >\"" + out + "\" 2>\"" + err + "\"";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return {WEXITSTATUS(status), slurp(out), slurp(err)};
}

std::size_t count_lines(const std::string& text) {
  std::size_t n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("cli generate: layout, determinism and ground truth sidecar") {
  Scratch s("generate");
  REQUIRE(cli(s, "generate --n 100 --seed 11 --out " + (s / "a.csv")).code == 0);
  REQUIRE(cli(s, "generate --n 100 --seed 11 --out " + (s / "b.csv")).code == 0);
  const auto a = slurp(s / "a.csv");
  CHECK(count_lines(a) == 101);
  CHECK(a == slurp(s / "b.csv"));
  CHECK(slurp(s / "a.truth.json") == slurp(s / "b.truth.json"));
  const auto t = nlohmann::json::parse(slurp(s / "a.truth.json"));
  CHECK(t.at("nde").get<double>() == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(t.at("nie").get<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(t.at("nie_r").get<double>() == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(t.at("te").get<double>() == doctest::Approx(1.3).epsilon(1e-12));
  REQUIRE(cli(s, "generate --n 100 --seed 12 --out " + (s / "c.csv")).code == 0);
  CHECK(slurp(s / "c.csv") != a);
}

TEST_CASE("cli train then estimate equals the in-process pipeline") {
  Scratch s("pipeline");
  const std::string data = s / "d.csv", ckpt = s / "m.json";
  REQUIRE(cli(s, "generate --n 5000 --seed 21 --out " + data).code == 0);
  const std::string hyper = "--epochs 3 --batch_size 256 --model_seed 5 --train_seed 6";
  REQUIRE(cli(s, "train --data " + data + " " + hyper + " --out " + ckpt).code == 0);
  const std::string first = slurp(ckpt);
  REQUIRE(cli(s, "train --data " + data + " " + hyper + " --out " + ckpt).code == 0);
  CHECK(slurp(ckpt) == first);
  const auto est = cli(s, "estimate --data " + data + " --checkpoint " + ckpt + " --n_samples 20 --seed 7");
  REQUIRE(est.code == 0);

  // Same stages in this process on a freshly sampled dataset.
  dmavae_spec* spec = nullptr;
  dmavae_dataset* d = nullptr;
  dmavae_options* o = nullptr;
  dmavae_model* m = nullptr;
  REQUIRE(dmavae_spec_default(&spec) == DMAVAE_OK);
  REQUIRE(dmavae_dataset_sample(spec, 5000, 21, &d) == DMAVAE_OK);
  REQUIRE(dmavae_options_create(&o) == DMAVAE_OK);
  for (auto [k, v] : std::vector<std::pair<const char*, const char*>>{
           {"epochs", "3"}, {"batch_size", "256"}, {"model_seed", "5"}, {"train_seed", "6"},
           {"n_samples", "20"}, {"seed", "7"}})
    REQUIRE(dmavae_options_set(o, k, v) == DMAVAE_OK);
  REQUIRE(dmavae_model_create(o, d, &m) == DMAVAE_OK);
  REQUIRE(dmavae_model_train(m, d, o, nullptr) == DMAVAE_OK);
  dmavae_effects e{};
  REQUIRE(dmavae_estimate(m, d, o, &e) == DMAVAE_OK);
  std::vector<char> buf(4096);
  std::size_t len = 0;
  REQUIRE(dmavae_effects_json(&e, buf.data(), buf.size(), &len) == DMAVAE_OK);
  CHECK(est.out == std::string(buf.data(), len) + "\n");
  const auto j = nlohmann::json::parse(est.out);
  CHECK(j.at("nde").get<double>() == e.nde);
  CHECK(j.at("nie_r").get<double>() == e.nie_r);
  dmavae_model_free(m);
  dmavae_options_free(o);
  dmavae_dataset_free(d);
  dmavae_spec_free(spec);

  const auto lsem = cli(s, "estimate --method lsem --data " + data + " --out " + (s / "lsem.json"));
  REQUIRE(lsem.code == 0);
  CHECK(slurp(s / "lsem.json") + "\n" == lsem.out);
}

TEST_CASE("cli estimate with mismatched kinds exits 1") {
  Scratch s("mismatch");
  {
    std::ofstream spec(s / "binary.spec");
    spec << "m_kind = binary\n";
  }
  REQUIRE(cli(s, "generate --n 200 --seed 1 --out " + (s / "cont.csv")).code == 0);
  REQUIRE(cli(s, "generate --spec " + (s / "binary.spec") + " --n 200 --seed 1 --out " + (s / "bin.csv")).code == 0);
  REQUIRE(cli(s, "train --data " + (s / "cont.csv") + " --epochs 1 --batch_size 50 --out " + (s / "m.json")).code ==
          0);
  const auto r = cli(s, "estimate --data " + (s / "bin.csv") + " --checkpoint " + (s / "m.json"));
  CHECK(r.code == 1);
  CHECK(r.err.find("kind mismatch") != std::string::npos);
}

TEST_CASE("cli bench with one cell writes all report files") {
  Scratch s("bench");
  const std::string out = s / "report";
  const auto r = cli(s, "bench --cases full --sizes 300 --reps 1 --methods lsem --targets nde --seed 3 --out " + out);
  REQUIRE(r.code == 0);
  for (const char* f : {"cells.csv", "aggregates.csv", "report.json", "bias_nde.svg"}) CHECK(fs::exists(fs::path(out) / f));
  CHECK(count_lines(slurp(out + "/cells.csv")) == 2);
  const auto first = slurp(out + "/report.json");
  REQUIRE(cli(s, "bench --cases full --sizes 300 --reps 1 --methods lsem --targets nde --seed 3 --out " + out).code ==
          0);
  CHECK(slurp(out + "/report.json") == first);
}

TEST_CASE("cli usage errors exit 2") {
  Scratch s("usage");
  CHECK(cli(s, "").code == 2);
  CHECK(cli(s, "frobnicate").code == 2);
  CHECK(cli(s, "train --data " + (s / "missing.csv")).code == 2);
  CHECK(cli(s, "train").code == 2);
  CHECK(cli(s, "generate --n zero").code == 2);
  {
    std::ofstream spec(s / "bad.spec");
    spec << "a = 0.5\nbogus = 1\n";
  }
  const auto bad = cli(s, "generate --spec " + (s / "bad.spec") + " --n 10 --out " + (s / "x.csv"));
  CHECK(bad.code == 2);
  CHECK(bad.err.find(":2") != std::string::npos);
  CHECK(bad.err.find("bogus") != std::string::npos);
  {
    std::ofstream csv(s / "broken.csv");
    csv << "t,m,y,x1\n0,1.0\n";
  }
  CHECK(cli(s, "estimate --method lsem --data " + (s / "broken.csv")).code == 2);
  CHECK(cli(s, "train --data " + (s / "broken.csv") + " --epochs nope").code == 2);
  CHECK(cli(s, "--help").code == 0);
}

TEST_CASE("cli config file: flags override, foreign keys are ignored") {
  Scratch s("config");
  {
    std::ofstream cfg(s / "run.cfg");
    cfg << "# shared by every stage\nn = 40\nseed = 9\nepochs = 2\nout = " << (s / "cfg.csv") << "\n";
  }
  REQUIRE(cli(s, "--config " + (s / "run.cfg") + " generate").code == 0);
  CHECK(count_lines(slurp(s / "cfg.csv")) == 41);
  REQUIRE(cli(s, "--config " + (s / "run.cfg") + " generate --n 30 --out " + (s / "flag.csv")).code == 0);
  CHECK(count_lines(slurp(s / "flag.csv")) == 31);
  REQUIRE(cli(s, "generate --n 40 --seed 9 --out " + (s / "same.csv")).code == 0);
  CHECK(slurp(s / "same.csv") == slurp(s / "cfg.csv"));
  {
    std::ofstream cfg(s / "bad.cfg");
    cfg << "no_such_option = 1\n";
  }
  CHECK(cli(s, "--config " + (s / "bad.cfg") + " generate").code == 2);
  CHECK(cli(s, "--config " + (s / "absent.cfg") + " generate").code == 2);
}

TEST_CASE("cli audit: report fields and Adult ingestion") {
  Scratch s("audit");
  {
    std::ofstream raw(s / "adult.data");
    const char* rows[] = {
        "39, State-gov, 77516, Bachelors, 13, Never-married, Adm-clerical, Not-in-family, White, Male, 2174, 0, 40, "
        "United-States, <=50K",
        "50, Self-emp-not-inc, 83311, Bachelors, 13, Married-civ-spouse, Exec-managerial, Husband, White, Male, 0, 0, "
        "13, United-States, >50K",
        "38, Private, 215646, HS-grad, 9, Divorced, Handlers-cleaners, Not-in-family, White, Female, 0, 0, 40, "
        "United-States, <=50K",
        "53, Private, 234721, 11th, 7, Married-civ-spouse, Handlers-cleaners, Wife, Black, Female, 0, 0, 40, Cuba, "
        ">50K",
        "28, ?, 338409, Bachelors, 13, Married-civ-spouse, Prof-specialty, Wife, Black, Female, 0, 0, 40, Cuba, "
        "<=50K"};
    for (int rep = 0; rep < 10; ++rep)
      for (const char* r : rows) raw << r << "\n";
  }
  const std::string common = " --epochs 2 --batch_size 8 --n_samples 3 --seed 4";
  const auto r = cli(s, "audit --adult " + (s / "adult.data") + " --mapping-out " + (s / "map.json") + common +
                            " --out " + (s / "audit.json"));
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(s / "audit.json"));
  for (const char* k : {"nde", "nie", "tau", "direct_flag", "indirect_flag", "n", "seed"}) CHECK(j.contains(k));
  CHECK(j.at("n").get<int>() == 40);
  CHECK(j.at("tau").get<double>() == 0.05);
  CHECK(j.at("direct_flag").get<bool>() == (std::abs(j.at("nde").get<double>()) > 0.05));
  CHECK(fs::exists(s / "map.json"));
  const auto again = cli(s, "audit --adult " + (s / "adult.data") + " --mapping-in " + (s / "map.json") + common);
  REQUIRE(again.code == 0);
  CHECK(again.out == r.out);
  const auto high = cli(s, "audit --adult " + (s / "adult.data") + common + " --tau 10");
  REQUIRE(high.code == 0);
  const auto jh = nlohmann::json::parse(high.out);
  CHECK_FALSE(jh.at("direct_flag").get<bool>());
  CHECK_FALSE(jh.at("indirect_flag").get<bool>());
  CHECK(cli(s, "audit --adult " + (s / "adult.data") + common + " --tau 0").code == 2);
  CHECK(cli(s, "audit" + common).code == 2);
}
