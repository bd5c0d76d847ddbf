#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dmavae/model.hpp"
#include "dmavae/scm.hpp"
#include "dmavae/train.hpp"

namespace dmavae::io {

namespace fs = std::filesystem;

// Flat `key = value` text. `#` starts a comment; blank lines are ignored.
struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<KeyValue> parse_key_values(std::istream& in, const std::string& source);
std::vector<KeyValue> read_key_values(const fs::path& path);

std::vector<double> parse_real_list(const std::string& text);
std::vector<int> parse_int_list(const std::string& text);
std::vector<std::string> split(const std::string& text, char sep);
std::string trim(const std::string& text);
std::uint64_t parse_u64(const std::string& text);
int parse_int(const std::string& text);
bool parse_bool(const std::string& text);

// Recognised keys mirror ScmSpec fields; vectors are comma lists and
// `mixing` is row-major. Coefficient vectors that are not given are
// broadcast from their default to the block dimension.
scm::ScmSpec spec_from_key_values(const std::vector<KeyValue>& kv, const scm::ScmSpec& base = scm::default_spec());
scm::ScmSpec read_spec(const fs::path& path);
void write_spec(const scm::ScmSpec& spec, std::ostream& out);

// Dataset CSV `t,m,y,x1..xD` plus `<stem>.truth.json` holding kinds and,
// when known, the ground truth.
fs::path sidecar_path(const fs::path& csv);
void write_dataset(const scm::Dataset& data, const fs::path& csv);
scm::Dataset read_dataset(const fs::path& csv);
std::string truth_json(const scm::Dataset& data);

// Versioned JSON checkpoint: manifest (config, training config) and every
// parameter array in model order.
inline constexpr int kCheckpointVersion = 1;
void save_checkpoint(const model::LatentModel& model, const train::TrainConfig& train, const fs::path& path);
model::LatentModel load_checkpoint(const fs::path& path, train::TrainConfig* train = nullptr);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace dmavae::io
