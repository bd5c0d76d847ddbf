#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dmavae/scm.hpp"

// Ingestion of the UCI Adult census file into a mediation dataset:
// T = sex (Female = 1), M = occupation (categorical), Y = income (>50K = 1),
// every other column a proxy. Numeric proxies are z-scored, categorical
// proxies one-hot encoded over their sorted levels.
namespace dmavae::adult {

enum class Role { Treatment, Mediator, Outcome, NumericProxy, CategoricalProxy, Dropped };

std::string_view to_string(Role role) noexcept;
Role parse_role(std::string_view text);

// The 15 columns of the standard layout, in file order.
const std::vector<std::string>& standard_columns();
bool is_numeric_column(const std::string& name);

struct ColumnMapping {
  std::string name;
  Role role = Role::Dropped;
  std::vector<std::string> levels;  // categorical columns, sorted
  double mean = 0.0;                // numeric proxies
  double std = 1.0;
  std::string positive;             // treatment / outcome level coded 1

  int width() const;  // proxy columns contributed
};

struct AdultMapping {
  std::vector<ColumnMapping> columns;  // source order

  const ColumnMapping& column(const std::string& name) const;
  int proxy_width() const;
  // Encodes one cell into its proxy block (one value or a one-hot row), or
  // into the 0/1 code or level index for T, M and Y.
  std::vector<double> encode(const std::string& column, const std::string& value) const;
  // Inverse of encode; z-scored numbers are mapped back to the nearest
  // representable value.
  std::string decode(const std::string& column, const std::vector<double>& code) const;
};

struct RawTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;  // complete rows only
  std::size_t dropped_missing = 0;
};

// Standard 15-column layout or a header row naming the columns. Lines
// starting with `|` are skipped; trailing `.` on income labels (the test
// split) is removed; rows containing `?` are dropped.
RawTable read_raw(const std::filesystem::path& path);
RawTable parse_raw(std::istream& in, const std::string& source);

// Levels and standardisation fitted on the table. Columns in `drop` are
// assigned Role::Dropped.
AdultMapping fit_mapping(const RawTable& table, const std::vector<std::string>& drop = {});
scm::Dataset encode(const RawTable& table, const AdultMapping& mapping);

std::string mapping_json(const AdultMapping& mapping);
AdultMapping mapping_from_json(const std::string& text);

struct Ingested {
  scm::Dataset data;
  AdultMapping mapping;
  std::size_t dropped_missing = 0;
};

// Fits a fresh mapping unless one is given (for example to encode the test
// split with the training encodings).
Ingested ingest(const std::filesystem::path& path, const std::optional<AdultMapping>& mapping = std::nullopt,
                const std::vector<std::string>& drop = {});

}  // namespace dmavae::adult
