#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "notecode/classifier.hpp"
#include "notecode/langmodel.hpp"

namespace notecode::config {

// Every pipeline knob in one place. Defaults are the published settings
// scaled for a desk run; the full-size LM architecture is available through
// langmodel::canonical_lm_config().
struct PipelineConfig {
  std::uint64_t seed = 42;

  // Label selection and splits.
  int top_k = 10;                         // label-set size
  std::vector<int> top_k_presets{10, 50};  // supported presets
  double lm_test_fraction = 0.1;   // language model corpus split, 90:10
  double clf_test_fraction = 0.2;  // classifier corpus split, 80:20

  // Vocabulary.
  int vocab_max_size = 60000;  // non-special entries; specials are prepended
  int vocab_min_freq = 2;
  bool remove_stopwords = false;

  langmodel::LMConfig lm;
  langmodel::LmTrainConfig lm_train;
  classifier::ClfConfig clf;

  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& config);

// Strict parse: unknown keys anywhere in the document are rejected
// (ConfigError), missing keys fall back to defaults.
PipelineConfig from_json(const nlohmann::json& j);

PipelineConfig load_config(const std::string& path);

// Pretty-printed defaults (the `config-dump` output).
std::string default_config_dump();

}  // namespace notecode::config
