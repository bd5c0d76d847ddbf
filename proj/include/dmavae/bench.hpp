#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dmavae/estimate.hpp"
#include "dmavae/model.hpp"
#include "dmavae/scm.hpp"
#include "dmavae/train.hpp"

namespace dmavae::bench {

enum class Method { Dmavae, Cmavae, Lsem };
enum class Target { Nde, NieR, Te };

std::string_view to_string(Method m) noexcept;
std::string_view to_string(Target t) noexcept;
Method parse_method(std::string_view text);
Target parse_target(std::string_view text);

// CMAVAE gets as many latent dimensions as the three DMAVAE blocks together.
inline model::ModelConfig default_model() {
  model::ModelConfig c;
  c.dim_z = c.dim_tm + c.dim_my + c.dim_ty;
  return c;
}

struct BenchSpec {
  scm::ScmSpec base = scm::default_spec();
  std::vector<scm::CaseId> cases{scm::CaseId::Full};
  std::vector<std::size_t> sizes{2000, 5000, 10000};
  int repetitions = 10;
  std::vector<Method> methods{Method::Dmavae, Method::Cmavae, Method::Lsem};
  std::vector<Target> targets{Target::Nde, Target::NieR, Target::Te};
  std::uint64_t master_seed = 0;
  model::ModelConfig model = default_model();  // kinds and x_dim are filled per dataset
  train::TrainConfig train;  // seed is derived per cell
  int n_samples = 100;
  int workers = 1;
};

void validate(const BenchSpec& spec);

enum class CellStatus {
  Ok,
  AbsoluteError,  // truth was 0; bias_pct holds |estimate - truth|
  Failed,
};

std::string_view to_string(CellStatus s) noexcept;
CellStatus parse_cell_status(std::string_view text);

struct CellRecord {
  Method method = Method::Lsem;
  scm::CaseId case_id = scm::CaseId::Full;
  std::size_t n = 0;
  int rep = 0;
  Target target = Target::Nde;
  double estimate = 0.0;
  double truth = 0.0;
  double bias_pct = 0.0;
  CellStatus status = CellStatus::Ok;
  std::string message;  // failure text, not part of cells.csv

  bool operator==(const CellRecord& o) const;
};

struct Aggregate {
  Method method = Method::Lsem;
  scm::CaseId case_id = scm::CaseId::Full;
  std::size_t n = 0;
  Target target = Target::Nde;
  double mean_bias_pct = 0.0;
  double std_bias_pct = 0.0;
  int count = 0;     // cells with status ok
  int expected = 0;  // repetitions
  bool flagged() const { return count != expected; }
};

struct BenchReport {
  BenchSpec spec;
  std::vector<CellRecord> cells;
  std::vector<Aggregate> aggregates;
};

// |(estimate - truth) / truth| * 100; UndefinedMetric when truth is 0.
double estimation_bias(double estimate, double truth);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};
MeanStd aggregate(const std::vector<double>& values);

// Seeds for one grid cell, independent of the order cells are run in.
std::uint64_t dataset_seed(std::uint64_t master, scm::CaseId id, std::size_t n, int rep);
std::uint64_t method_seed(std::uint64_t master, scm::CaseId id, std::size_t n, int rep, Method m);

// Fits one method and returns its effect estimate.
estimate::EffectEstimate fit_method(Method method, const scm::Dataset& data, const BenchSpec& spec,
                                    std::uint64_t seed);

BenchReport run_benchmark(const BenchSpec& spec);
std::vector<Aggregate> aggregate_cells(const BenchSpec& spec, const std::vector<CellRecord>& cells);

void write_cells_csv(const std::vector<CellRecord>& cells, std::ostream& out);
std::vector<CellRecord> read_cells_csv(std::istream& in);
void write_aggregates_csv(const std::vector<Aggregate>& aggs, std::ostream& out);
std::string report_json(const BenchReport& report);
// FNV-1a over cells.csv and aggregates.csv.
std::string report_hash(const BenchReport& report);
std::string bias_svg(const BenchReport& report, Target target);

// cells.csv, aggregates.csv, report.json and one bias_<target>.svg per
// target with at least one aggregate.
std::vector<std::filesystem::path> emit_report(const BenchReport& report, const std::filesystem::path& dir);

}  // namespace dmavae::bench
