#include "notecode/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "notecode/rng.hpp"

namespace notecode::synth {

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw ConfigError("synth: num_classes must be >= 2");
  if (markers_per_class < 1) throw ConfigError("synth: markers_per_class must be >= 1");
  if (vocab_size < 2 * num_classes * markers_per_class)
    throw ConfigError("synth: vocab_size must leave room for background tokens");
  if (tokens_per_doc < 1) throw ConfigError("synth: tokens_per_doc must be >= 1");
  if (docs_per_class < 1) throw ConfigError("synth: docs_per_class must be >= 1");
  if (signal < 0.0 || signal > 1.0) throw ConfigError("synth: signal must be in [0,1]");
  if (general_tokens < 1) throw ConfigError("synth: general_tokens must be >= 1");
}

std::string synth_token(int index) { return "w" + std::to_string(index); }

// Vocabulary layout: indices [k*c, (k+1)*c) belong to class k where
// c = class_set_size(); the remainder [K*c, V) is shared background.
std::vector<double> background_distribution(const SyntheticSpec& spec) {
  spec.validate();
  std::vector<double> dist(static_cast<std::size_t>(spec.vocab_size), 0.0);
  const int begin = spec.num_classes * spec.class_set_size();
  double total = 0.0;
  for (int i = begin; i < spec.vocab_size; ++i) {
    const double w = 1.0 / static_cast<double>(i - begin + 1);  // Zipf by rank
    dist[static_cast<std::size_t>(i)] = w;
    total += w;
  }
  for (double& w : dist) w /= total;
  return dist;
}

std::vector<double> class_distribution(const SyntheticSpec& spec, int k) {
  spec.validate();
  if (k < 0 || k >= spec.num_classes) throw IndexError("synth: class index out of range");
  std::vector<double> dist(static_cast<std::size_t>(spec.vocab_size), 0.0);
  const int c = spec.class_set_size();
  for (int i = k * c; i < (k + 1) * c; ++i)
    dist[static_cast<std::size_t>(i)] = 1.0 / static_cast<double>(c);
  return dist;
}

std::vector<double> token_distribution(const SyntheticSpec& spec, int k) {
  std::vector<double> background = background_distribution(spec);
  std::vector<double> class_dist = class_distribution(spec, k);
  std::vector<double> mixed(background.size());
  for (std::size_t i = 0; i < mixed.size(); ++i)
    mixed[i] = spec.signal * class_dist[i] + (1.0 - spec.signal) * background[i];
  return mixed;
}

std::vector<double> general_distribution(const SyntheticSpec& spec) {
  std::vector<double> mixed = background_distribution(spec);
  for (double& w : mixed) w *= 1.0 - spec.signal;
  const int markers = spec.num_classes * spec.class_set_size();
  for (int i = 0; i < markers; ++i)
    mixed[static_cast<std::size_t>(i)] += spec.signal / static_cast<double>(markers);
  return mixed;
}

namespace {

// Cumulative weights for inverse-CDF sampling.
std::vector<double> cumulative(const std::vector<double>& dist) {
  std::vector<double> cum(dist.size());
  double run = 0.0;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    run += dist[i];
    cum[i] = run;
  }
  cum.back() = 1.0;  // absorb rounding
  return cum;
}

int sample(const std::vector<double>& cum, Rng& rng) {
  const double u = rng.next_double();
  const auto it = std::upper_bound(cum.begin(), cum.end(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - cum.begin(),
                                                   static_cast<std::ptrdiff_t>(cum.size()) - 1));
}

}  // namespace

SyntheticCorpus make_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticCorpus out;
  for (int k = 0; k < spec.num_classes; ++k)
    out.corpus.label_map.codes.push_back("class" + std::to_string(k));

  const std::vector<double> background_cum = cumulative(background_distribution(spec));
  std::vector<std::vector<double>> class_cum;
  for (int k = 0; k < spec.num_classes; ++k)
    class_cum.push_back(cumulative(class_distribution(spec, k)));

  Rng rng(spec.seed);
  long long next_id = 1;
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int d = 0; d < spec.docs_per_class; ++d) {
      std::string text;
      for (int t = 0; t < spec.tokens_per_doc; ++t) {
        const bool from_class = rng.bernoulli(spec.signal);
        const int token =
            sample(from_class ? class_cum[static_cast<std::size_t>(k)] : background_cum, rng);
        if (!text.empty()) text += ' ';
        text += synth_token(token);
      }
      out.corpus.examples.push_back(ingest::Example{next_id++, std::move(text), k});
    }
  }

  // Unlabeled general-domain text: the class-marginal distribution (same
  // language as the documents, no label structure), 20 tokens per line.
  const std::vector<double> general_cum = cumulative(general_distribution(spec));
  Rng general_rng(spec.seed + 1);
  for (int t = 0; t < spec.general_tokens; ++t) {
    if (t > 0) out.general_text += (t % 20 == 0) ? '\n' : ' ';
    out.general_text += synth_token(sample(general_cum, general_rng));
  }
  out.general_text += '\n';
  return out;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  ingest::write_corpus(corpus.corpus, (dir / "corpus.jsonl").string());
  ingest::write_label_map(corpus.corpus.label_map, (dir / "label_map.json").string());
  std::ofstream general(dir / "general.txt", std::ios::binary);
  if (!general) throw IoError("cannot write " + (dir / "general.txt").string());
  general << corpus.general_text;
}

}  // namespace notecode::synth
