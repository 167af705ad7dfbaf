#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "notecode/config.hpp"
#include "notecode/ingest.hpp"
#include "notecode/synth.hpp"
#include "notecode/textprep.hpp"

namespace notecode::pipeline {

// Each stage reads files, writes files, and returns a JSON summary (row
// counts and settings) for the caller to log. Outputs are byte-identical
// across reruns with identical inputs and seeds.

struct PrepareOptions {
  std::string notes_csv;
  std::string codes_csv;
  ingest::CodeKind kind = ingest::CodeKind::diagnosis;
  int top_k = 10;
  double test_fraction = 0.2;
  std::uint64_t seed = 42;
  std::string out_dir;
};
// Writes train.jsonl, test.jsonl, label_map.json under out_dir.
nlohmann::json cmd_prepare(const PrepareOptions& options);

struct VocabOptions {
  std::vector<std::string> corpus_paths;  // JSONL corpora (one stream per doc)
  std::vector<std::string> text_paths;    // raw text files (one stream each)
  int max_size = 60000;
  int min_freq = 2;
  bool remove_stopwords = false;
  std::string out_path;
};
nlohmann::json cmd_vocab(const VocabOptions& options);

struct PretrainOptions {
  std::string text_path;  // general-domain raw text
  config::PipelineConfig config;
  std::string out_path;  // full LM checkpoint; losses at <out_path>.loss.csv
};
nlohmann::json cmd_pretrain_lm(const PretrainOptions& options);

struct FinetuneOptions {
  std::string pretrained_path;  // LM checkpoint from pretrain
  std::string corpus_path;      // labeled JSONL; only the text is used
  std::string vocab_path;       // optional; empty = build from the corpus
  config::PipelineConfig config;
  std::string out_path;  // encoder snapshot; losses at <out_path>.loss.csv
};
nlohmann::json cmd_finetune_lm(const FinetuneOptions& options);

struct TrainClfOptions {
  std::string encoder_path;
  std::string corpus_path;        // train corpus (label_map.json beside it)
  std::string valid_corpus_path;  // optional held-out corpus for the history
  config::PipelineConfig config;
  std::string out_path;  // classifier checkpoint; history at <out_path>.history.csv
};
nlohmann::json cmd_train_clf(const TrainClfOptions& options);

struct EvalOptions {
  std::string model_path;
  std::string corpus_path;  // label_map.json beside it
  std::string out_prefix;   // evalmetrics file set + predictions.jsonl
};
nlohmann::json cmd_eval(const EvalOptions& options);

struct SynthOptions {
  synth::SyntheticSpec spec;
  double test_fraction = 0.2;
  std::string out_dir;  // corpus/train/test.jsonl, label_map.json, general.txt
};
nlohmann::json cmd_synth(const SynthOptions& options);

struct TfidfOptions {
  std::string corpus_path;
  std::string vocab_path;
  std::string out_path;
};
nlohmann::json cmd_tfidf(const TfidfOptions& options);

// Shared text plumbing (exposed for tests and bindings).

// fixup + tokenize, whole file as one stream.
std::vector<std::string> tokenize_text_file(const std::string& path, bool remove_stopwords);

// Documents of a labeled corpus as token lists, file order preserved.
std::vector<std::vector<std::string>> tokenize_corpus_file(const std::string& path,
                                                           bool remove_stopwords);

// Numericalized documents; a document with no surviving tokens becomes a
// single unk so downstream consumers never see an empty sequence.
std::vector<std::vector<int>> numericalize_docs(const std::vector<std::vector<std::string>>& docs,
                                                const textprep::Vocabulary& vocab);

}  // namespace notecode::pipeline
