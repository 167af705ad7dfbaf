#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "notecode/errors.hpp"
#include "notecode/ingest.hpp"

namespace notecode::synth {

// Recipe for a fully seeded synthetic corpus: each document of class k draws
// every token from the class-k distribution with probability `signal`, else
// from a shared Zipf background. signal 1 makes classes token-disjoint;
// signal 0 makes them indistinguishable.
struct SyntheticSpec {
  int num_classes = 10;
  int vocab_size = 200;  // distinct word types: class markers first, then background
  int tokens_per_doc = 60;
  int docs_per_class = 200;
  double signal = 0.5;
  int markers_per_class = 2;   // size of each class's private token set
  int general_tokens = 50000;  // unlabeled background-only text for pretraining
  std::uint64_t seed = 13;

  void validate() const;
  int class_set_size() const { return markers_per_class; }
};

struct SyntheticCorpus {
  ingest::LabeledCorpus corpus;  // class-major order, labels "class0".."class<K-1>"
  std::string general_text;      // newline-wrapped background tokens
};

// Word type for vocabulary index i.
std::string synth_token(int index);

// Unnormalized-then-normalized token distributions over the whole vocabulary.
// Background mass is Zipf (1/rank) over the non-class tokens; each class set
// is uniform within itself. token_distribution mixes them at `signal`;
// general_distribution is the class-marginal mix (uniform over every marker),
// i.e. the labeled corpus's unconditional token distribution — the general
// text speaks the same language but carries no label structure.
std::vector<double> background_distribution(const SyntheticSpec& spec);
std::vector<double> class_distribution(const SyntheticSpec& spec, int k);
std::vector<double> token_distribution(const SyntheticSpec& spec, int k);
std::vector<double> general_distribution(const SyntheticSpec& spec);

SyntheticCorpus make_synthetic(const SyntheticSpec& spec);

// Writes corpus.jsonl, general.txt, and label_map.json under out_dir.
void write_synthetic(const SyntheticCorpus& corpus, const std::string& out_dir);

}  // namespace notecode::synth
