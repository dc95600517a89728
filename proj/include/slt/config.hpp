#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "slt/corpus.hpp"
#include "slt/model.hpp"
#include "slt/train.hpp"
#include "slt/translate.hpp"

namespace slt {

/// One cell of an ablation grid: a name plus dot-key overrides.
struct AblationCell {
  std::string name;
  nlohmann::json overrides = nlohmann::json::object();
};

struct AblationGrid {
  std::string name;
  std::vector<AblationCell> cells;
};

/// Everything a run depends on. The JSON form has one object per section:
/// corpus, model, gathering, cptcn, attention, train, decode, ablation.
struct RunConfig {
  CorpusConfig corpus;
  ModelConfig model;
  std::uint64_t model_seed = 0;
  TrainConfig train;
  DecodeConfig decode;
  std::vector<AblationGrid> grids;

  /// Model config with vocab sizes and input width taken from the corpus.
  ModelConfig model_config() const;
  /// Cross-section checks (corpus long enough for the gathering window, ...).
  void validate() const;
};

nlohmann::json to_json(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys throw ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Applies "section.key" = value. The value text is parsed as JSON when
/// possible and as a bare string otherwise; it must match the type of the
/// existing entry. Unknown keys throw ConfigError.
void apply_override(nlohmann::json& config, const std::string& dotted_key, const std::string& value);
/// Same, with an already typed value.
void apply_override(nlohmann::json& config, const std::string& dotted_key, const nlohmann::json& value);
inline void apply_override(nlohmann::json& config, const std::string& dotted_key, const char* value) {
  apply_override(config, dotted_key, std::string(value));
}

/// Canonical text: sorted keys, no whitespace.
std::string canonical_json(const nlohmann::json& j);
/// FNV-1a 64 of the canonical text.
std::uint64_t config_digest(const nlohmann::json& j);
std::string digest_hex(std::uint64_t digest);

RunConfig load_run_config(const std::string& path);

}  // namespace slt
