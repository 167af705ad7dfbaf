#include "notecode/config.hpp"

#include <fstream>
#include <set>
#include <string>

#include "notecode/errors.hpp"

namespace notecode::config {

namespace {

// Strictness lives here: nested from_json adapters tolerate missing keys,
// so unknown keys are caught by walking the document against these tables.
void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& context) {
  if (!j.is_object()) throw ConfigError("config: '" + context + "' must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key))
      throw ConfigError("config: unknown key '" + key + "' in " + context);
  }
}

const std::set<std::string> kDropoutKeys{"p_encoder", "p_input",  "p_weight",
                                         "p_hidden",  "p_output", "p_classifier"};
const std::set<std::string> kLmKeys{"vocab_size", "embed_dim",  "hidden_dim",
                                    "num_layers", "bptt_len",   "batch_size",
                                    "dropout",    "tie_weights", "seed"};
const std::set<std::string> kLmTrainKeys{"epochs",   "stage_a_epochs", "lr_head",
                                         "lr_other", "momentum",       "clip_norm",
                                         "shuffle_blocks", "seed"};
const std::set<std::string> kClfKeys{"num_classes", "head_hidden_dim", "max_doc_len",
                                     "epochs",      "batch_size",      "lr_head",
                                     "lr_other",    "momentum",        "clip_norm",
                                     "dropout",     "unfreeze_at",     "seed"};
const std::set<std::string> kTopKeys{"seed",
                                     "top_k",
                                     "top_k_presets",
                                     "lm_test_fraction",
                                     "clf_test_fraction",
                                     "vocab_max_size",
                                     "vocab_min_freq",
                                     "remove_stopwords",
                                     "lm",
                                     "lm_train",
                                     "clf"};

}  // namespace

void PipelineConfig::validate() const {
  if (top_k < 1) throw ConfigError("config: top_k must be >= 1");
  if (top_k_presets.empty()) throw ConfigError("config: top_k_presets must be non-empty");
  for (int k : top_k_presets)
    if (k < 1) throw ConfigError("config: top_k_presets entries must be >= 1");
  if (lm_test_fraction <= 0.0 || lm_test_fraction >= 1.0)
    throw ConfigError("config: lm_test_fraction must lie in (0,1)");
  if (clf_test_fraction <= 0.0 || clf_test_fraction >= 1.0)
    throw ConfigError("config: clf_test_fraction must lie in (0,1)");
  if (vocab_max_size < 1) throw ConfigError("config: vocab_max_size must be >= 1");
  if (vocab_min_freq < 1) throw ConfigError("config: vocab_min_freq must be >= 1");
  lm.dropout.validate();
  lm_train.validate();
  // lm.validate() needs a concrete vocab_size, which is only known once a
  // vocabulary exists; clf.validate() needs num_classes. Both run at stage
  // entry. The shared dropout/range checks still run here.
  if (lm.embed_dim < 1 || lm.hidden_dim < 1)
    throw ConfigError("config: model dims must be positive");
  if (lm.num_layers < 1) throw ConfigError("config: num_layers must be >= 1");
  if (lm.bptt_len < 2) throw ConfigError("config: bptt_len must be >= 2");
  if (lm.batch_size < 1 || clf.batch_size < 1)
    throw ConfigError("config: batch sizes must be >= 1");
  clf.dropout.validate();
  if (clf.epochs < 1) throw ConfigError("config: classifier epochs must be >= 1");
  if (clf.lr_head <= 0.0 || clf.lr_other <= 0.0)
    throw ConfigError("config: learning rates must be positive");
}

nlohmann::json to_json(const PipelineConfig& config) {
  return {{"seed", config.seed},
          {"top_k", config.top_k},
          {"top_k_presets", config.top_k_presets},
          {"lm_test_fraction", config.lm_test_fraction},
          {"clf_test_fraction", config.clf_test_fraction},
          {"vocab_max_size", config.vocab_max_size},
          {"vocab_min_freq", config.vocab_min_freq},
          {"remove_stopwords", config.remove_stopwords},
          {"lm", config.lm},
          {"lm_train", config.lm_train},
          {"clf", config.clf}};
}

PipelineConfig from_json(const nlohmann::json& j) {
  check_keys(j, kTopKeys, "top level");
  if (j.contains("lm")) {
    check_keys(j.at("lm"), kLmKeys, "lm");
    if (j.at("lm").contains("dropout")) check_keys(j.at("lm").at("dropout"), kDropoutKeys, "lm.dropout");
  }
  if (j.contains("lm_train")) check_keys(j.at("lm_train"), kLmTrainKeys, "lm_train");
  if (j.contains("clf")) {
    check_keys(j.at("clf"), kClfKeys, "clf");
    if (j.at("clf").contains("dropout"))
      check_keys(j.at("clf").at("dropout"), kDropoutKeys, "clf.dropout");
  }

  PipelineConfig config;
  const PipelineConfig defaults;
  config.seed = j.value("seed", defaults.seed);
  config.top_k = j.value("top_k", defaults.top_k);
  config.top_k_presets = j.value("top_k_presets", defaults.top_k_presets);
  config.lm_test_fraction = j.value("lm_test_fraction", defaults.lm_test_fraction);
  config.clf_test_fraction = j.value("clf_test_fraction", defaults.clf_test_fraction);
  config.vocab_max_size = j.value("vocab_max_size", defaults.vocab_max_size);
  config.vocab_min_freq = j.value("vocab_min_freq", defaults.vocab_min_freq);
  config.remove_stopwords = j.value("remove_stopwords", defaults.remove_stopwords);
  if (j.contains("lm")) config.lm = j.at("lm").get<langmodel::LMConfig>();
  if (j.contains("lm_train")) config.lm_train = j.at("lm_train").get<langmodel::LmTrainConfig>();
  if (j.contains("clf")) config.clf = j.at("clf").get<classifier::ClfConfig>();
  config.validate();
  return config;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  return from_json(j);
}

std::string default_config_dump() {
  return to_json(PipelineConfig{}).dump(2) + "\n";
}

}  // namespace notecode::config
