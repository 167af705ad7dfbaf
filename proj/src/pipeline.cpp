#include "notecode/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "notecode/classifier.hpp"
#include "notecode/errors.hpp"
#include "notecode/evalmetrics.hpp"
#include "notecode/langmodel.hpp"

namespace notecode::pipeline {

namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Labeled corpus plus the label_map.json expected beside it.
ingest::LabeledCorpus read_corpus_with_labels(const std::string& corpus_path) {
  const fs::path label_path = fs::path(corpus_path).parent_path() / "label_map.json";
  ingest::LabelMap label_map = ingest::read_label_map(label_path.string());
  return ingest::read_corpus(corpus_path, label_map, ingest::CodeKind::diagnosis);
}

// Token-position split of an LM stream: the leading (1 - fraction) trains,
// the tail validates. Chronological, not shuffled — continuity matters.
std::pair<std::vector<int>, std::vector<int>> split_stream(const std::vector<int>& stream,
                                                           double fraction) {
  if (fraction <= 0.0 || fraction >= 1.0)
    throw ConfigError("lm_test_fraction must lie in (0,1)");
  const long long n = static_cast<long long>(stream.size());
  if (n < 4) throw DataError("token stream too short to split");
  long long valid_n = std::llround(static_cast<double>(n) * fraction);
  valid_n = std::clamp<long long>(valid_n, 1, n - 1);
  std::vector<int> train(stream.begin(), stream.begin() + (n - valid_n));
  std::vector<int> valid(stream.begin() + (n - valid_n), stream.end());
  return {std::move(train), std::move(valid)};
}

nlohmann::json losses_to_json(const std::vector<evalmetrics::EpochLoss>& losses) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : losses)
    rows.push_back({{"epoch", row.epoch},
                    {"train_loss", row.train_loss},
                    {"valid_loss", row.valid_loss}});
  return rows;
}

std::string fmt6(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.6f", v);
  return buffer;
}

void write_history_csv(const std::vector<classifier::ClfEpochStats>& history,
                       const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "epoch,train_loss,valid_loss,train_accuracy,valid_accuracy\n";
  for (const auto& row : history)
    out << row.epoch << ',' << fmt6(row.train_loss) << ',' << fmt6(row.valid_loss) << ','
        << fmt6(row.train_accuracy) << ',' << fmt6(row.valid_accuracy) << '\n';
}

// Classifier view of a labeled corpus: numericalized non-empty documents.
classifier::NumericCorpus numeric_corpus(const ingest::LabeledCorpus& corpus,
                                         const textprep::Vocabulary& vocab,
                                         bool remove_stopwords) {
  classifier::NumericCorpus out;
  for (const auto& example : corpus.examples) {
    std::vector<std::string> tokens = textprep::tokenize(textprep::fixup(example.text, remove_stopwords));
    out.docs.push_back(numericalize_docs({tokens}, vocab).front());
    out.labels.push_back(example.label);
  }
  return out;
}

}  // namespace

std::vector<std::string> tokenize_text_file(const std::string& path, bool remove_stopwords) {
  return textprep::tokenize(textprep::fixup(read_file(path), remove_stopwords));
}

std::vector<std::vector<std::string>> tokenize_corpus_file(const std::string& path,
                                                           bool remove_stopwords) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<std::string>> docs;
  std::string line;
  long long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!row.contains("text"))
      throw SchemaError(path + " line " + std::to_string(line_no) + ": missing 'text'");
    docs.push_back(
        textprep::tokenize(textprep::fixup(row.at("text").get<std::string>(), remove_stopwords)));
  }
  return docs;
}

std::vector<std::vector<int>> numericalize_docs(const std::vector<std::vector<std::string>>& docs,
                                                const textprep::Vocabulary& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(docs.size());
  for (const auto& tokens : docs) {
    std::vector<int> ids = textprep::numericalize(tokens, vocab);
    if (ids.empty()) ids.push_back(0);  // unk placeholder, never empty
    out.push_back(std::move(ids));
  }
  return out;
}

nlohmann::json cmd_prepare(const PrepareOptions& options) {
  if (options.top_k < 1) throw ConfigError("prepare: top-k must be >= 1");
  ingest::NotesLoadResult notes = ingest::load_notes(options.notes_csv);
  ingest::CodesLoadResult codes = ingest::load_codes(options.codes_csv, options.kind);
  ingest::FilterPrimaryResult primaries = ingest::filter_primary(codes.records);
  ingest::TopCodesResult top = ingest::top_k_codes(primaries.primaries, options.top_k);
  ingest::JoinResult joined =
      ingest::join_and_filter(notes.records, primaries.primaries, top.codes, options.kind);
  auto [train, test] = ingest::split(joined.corpus, options.test_fraction, options.seed);

  fs::create_directories(options.out_dir);
  const fs::path dir(options.out_dir);
  ingest::write_corpus(train, (dir / "train.jsonl").string());
  ingest::write_corpus(test, (dir / "test.jsonl").string());
  ingest::write_label_map(joined.corpus.label_map, (dir / "label_map.json").string());

  std::vector<long long> per_label(joined.corpus.label_map.codes.size(), 0);
  for (const auto& example : joined.corpus.examples)
    ++per_label[static_cast<std::size_t>(example.label)];

  return {{"notes_rows", notes.records.size()},
          {"notes_dropped_null_key", notes.dropped_null_key},
          {"code_rows", codes.records.size()},
          {"codes_dropped_null_key", codes.dropped_null_key},
          {"codes_dropped_empty_code", codes.dropped_empty_code},
          {"primary_duplicates_dropped", primaries.duplicates_dropped},
          {"labels", joined.corpus.label_map.codes},
          {"fewer_than_k", top.fewer_than_k},
          {"dropped_no_primary", joined.dropped_no_primary},
          {"dropped_not_in_top_k", joined.dropped_not_in_top_k},
          {"dropped_empty_text", joined.dropped_empty_text},
          {"examples", joined.corpus.examples.size()},
          {"examples_per_label", per_label},
          {"train_examples", train.examples.size()},
          {"test_examples", test.examples.size()}};
}

nlohmann::json cmd_vocab(const VocabOptions& options) {
  std::vector<std::vector<std::string>> streams;
  for (const auto& path : options.corpus_paths) {
    auto docs = tokenize_corpus_file(path, options.remove_stopwords);
    std::move(docs.begin(), docs.end(), std::back_inserter(streams));
  }
  for (const auto& path : options.text_paths)
    streams.push_back(tokenize_text_file(path, options.remove_stopwords));
  if (streams.empty()) throw ConfigError("vocab: no input corpus or text given");

  long long tokens = 0;
  for (const auto& stream : streams) tokens += static_cast<long long>(stream.size());
  textprep::Vocabulary vocab = textprep::build_vocab(streams, options.max_size, options.min_freq);
  textprep::save_vocab(vocab, options.out_path);
  return {{"streams", streams.size()},
          {"tokens", tokens},
          {"vocab_size", vocab.size()},
          {"fingerprint", vocab.fingerprint()}};
}

nlohmann::json cmd_pretrain_lm(const PretrainOptions& options) {
  const config::PipelineConfig& pc = options.config;
  pc.validate();
  std::vector<std::string> tokens = tokenize_text_file(options.text_path, pc.remove_stopwords);
  if (tokens.empty()) throw DataError("pretrain: no tokens in " + options.text_path);
  textprep::Vocabulary vocab =
      textprep::build_vocab({tokens}, pc.vocab_max_size, pc.vocab_min_freq);
  std::vector<int> stream = textprep::numericalize(tokens, vocab);
  auto [train_stream, valid_stream] = split_stream(stream, pc.lm_test_fraction);

  langmodel::LMConfig lm_config = pc.lm;
  lm_config.vocab_size = vocab.size();
  lm_config.validate();
  langmodel::LmModel<float> model = langmodel::init_lm<float>(lm_config);
  langmodel::LmTrainConfig tc = pc.lm_train;
  tc.stage_a_epochs = 0;  // scratch training has no frozen stage
  auto history = langmodel::train_lm(model, train_stream, valid_stream, tc);

  langmodel::save_lm(model, vocab, options.out_path);
  evalmetrics::write_loss_csv(history, options.out_path + ".loss.csv");
  return {{"tokens", stream.size()},
          {"train_tokens", train_stream.size()},
          {"valid_tokens", valid_stream.size()},
          {"vocab_size", vocab.size()},
          {"epochs", history.size()},
          {"losses", losses_to_json(history)},
          {"valid_perplexity", langmodel::perplexity(model, valid_stream)}};
}

nlohmann::json cmd_finetune_lm(const FinetuneOptions& options) {
  const config::PipelineConfig& pc = options.config;
  pc.validate();
  langmodel::LoadedLm<float> pretrained = langmodel::load_lm<float>(options.pretrained_path);

  auto docs = tokenize_corpus_file(options.corpus_path, pc.remove_stopwords);
  if (docs.empty()) throw DataError("finetune: empty corpus " + options.corpus_path);
  textprep::Vocabulary vocab =
      options.vocab_path.empty()
          ? textprep::build_vocab(docs, pc.vocab_max_size, pc.vocab_min_freq)
          : textprep::load_vocab(options.vocab_path);

  // Shared-vocabulary fraction, for the transfer-quality log line.
  long long shared = 0;
  for (const auto& token : vocab.itos)
    shared += pretrained.vocab.stoi_map.count(token) ? 1 : 0;

  langmodel::LmModel<float> model =
      langmodel::transfer_remap(pretrained.model, pretrained.vocab, vocab);

  std::vector<int> stream;
  for (const auto& doc : docs) {
    std::vector<int> ids = textprep::numericalize(doc, vocab);
    stream.insert(stream.end(), ids.begin(), ids.end());
  }
  auto [train_stream, valid_stream] = split_stream(stream, pc.lm_test_fraction);
  auto history = langmodel::train_lm(model, train_stream, valid_stream, pc.lm_train);

  langmodel::save_encoder(model, vocab, options.out_path);
  evalmetrics::write_loss_csv(history, options.out_path + ".loss.csv");
  return {{"tokens", stream.size()},
          {"train_tokens", train_stream.size()},
          {"valid_tokens", valid_stream.size()},
          {"vocab_size", vocab.size()},
          {"shared_vocab_fraction",
           static_cast<double>(shared) / static_cast<double>(vocab.size())},
          {"epochs", history.size()},
          {"losses", losses_to_json(history)},
          {"valid_perplexity", langmodel::perplexity(model, valid_stream)}};
}

nlohmann::json cmd_train_clf(const TrainClfOptions& options) {
  const config::PipelineConfig& pc = options.config;
  pc.validate();
  langmodel::EncoderSnapshot encoder = langmodel::load_encoder(options.encoder_path);
  textprep::Vocabulary vocab = textprep::vocab_from_itos(encoder.vocab_itos);

  ingest::LabeledCorpus corpus = read_corpus_with_labels(options.corpus_path);
  const int k = corpus.label_map.size();
  classifier::ClfConfig clf_config = pc.clf;
  if (clf_config.num_classes == 0) clf_config.num_classes = k;
  if (clf_config.num_classes != k)
    throw ConfigError("train-clf: config num_classes " + std::to_string(clf_config.num_classes) +
                      " disagrees with label map size " + std::to_string(k));

  classifier::NumericCorpus train = numeric_corpus(corpus, vocab, pc.remove_stopwords);
  classifier::NumericCorpus valid;
  if (!options.valid_corpus_path.empty())
    valid = numeric_corpus(read_corpus_with_labels(options.valid_corpus_path), vocab,
                           pc.remove_stopwords);

  classifier::ClassifierModel<float> model =
      classifier::init_classifier<float>(encoder, clf_config);
  auto history = classifier::train_classifier(model, train, valid);

  classifier::save_classifier(model, options.out_path);
  write_history_csv(history, options.out_path + ".history.csv");
  nlohmann::json history_json = nlohmann::json::array();
  for (const auto& row : history)
    history_json.push_back({{"epoch", row.epoch},
                            {"train_loss", row.train_loss},
                            {"valid_loss", row.valid_loss},
                            {"train_accuracy", row.train_accuracy},
                            {"valid_accuracy", row.valid_accuracy}});
  return {{"train_examples", train.docs.size()},
          {"valid_examples", valid.docs.size()},
          {"num_classes", k},
          {"epochs", history.size()},
          {"history", history_json}};
}

nlohmann::json cmd_eval(const EvalOptions& options) {
  classifier::ClassifierModel<float> model =
      classifier::load_classifier<float>(options.model_path);
  textprep::Vocabulary vocab = textprep::vocab_from_itos(model.vocab_itos);

  ingest::LabeledCorpus corpus = read_corpus_with_labels(options.corpus_path);
  if (corpus.label_map.size() != model.config.num_classes)
    throw DataError("eval: label map size " + std::to_string(corpus.label_map.size()) +
                    " disagrees with the model's " + std::to_string(model.config.num_classes));
  classifier::NumericCorpus data = numeric_corpus(corpus, vocab, false);

  const int k = model.config.num_classes;
  std::vector<int> preds;
  std::vector<std::vector<double>> scores;
  for (const auto& doc : data.docs) {
    auto [pred, probs] = classifier::predict(model, doc);
    preds.push_back(pred);
    scores.push_back(std::move(probs));
  }

  evalmetrics::ConfusionMatrix cm = evalmetrics::confusion(preds, data.labels, k);
  evalmetrics::MetricsReport report = evalmetrics::summary(cm);
  report.n_examples = static_cast<long long>(data.docs.size());
  evalmetrics::MacroAucResult auc = evalmetrics::macro_auc(scores, data.labels, k);
  report.per_class_auc = auc.per_class;
  report.macro_auc = auc.value;
  report.undefined_auc_classes = auc.undefined_classes;
  std::vector<evalmetrics::RocCurve> curves;
  for (int c = 0; c < k; ++c) curves.push_back(evalmetrics::roc_ovr(scores, data.labels, c));
  evalmetrics::export_report(report, cm, curves, {}, options.out_prefix);

  // Per-example outputs beside the aggregate report.
  const std::string pred_path = options.out_prefix + "predictions.jsonl";
  std::ofstream pred_out(pred_path, std::ios::binary);
  if (!pred_out) throw IoError("cannot write " + pred_path);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    nlohmann::json row = {{"hadm_id", corpus.examples[i].hadm_id},
                          {"label", data.labels[i]},
                          {"pred", preds[i]},
                          {"probs", scores[i]}};
    pred_out << row.dump() << '\n';
  }

  return {{"examples", data.docs.size()},
          {"accuracy", report.accuracy},
          {"macro_f1", report.macro_f1},
          {"macro_auc", auc.value.has_value() ? nlohmann::json(*auc.value) : nlohmann::json()}};
}

nlohmann::json cmd_synth(const SynthOptions& options) {
  synth::SyntheticCorpus generated = synth::make_synthetic(options.spec);
  synth::write_synthetic(generated, options.out_dir);
  auto [train, test] = ingest::split(generated.corpus, options.test_fraction, options.spec.seed);
  const fs::path dir(options.out_dir);
  ingest::write_corpus(train, (dir / "train.jsonl").string());
  ingest::write_corpus(test, (dir / "test.jsonl").string());
  return {{"classes", options.spec.num_classes},
          {"documents", generated.corpus.examples.size()},
          {"train_examples", train.examples.size()},
          {"test_examples", test.examples.size()},
          {"general_tokens", options.spec.general_tokens},
          {"signal", options.spec.signal}};
}

nlohmann::json cmd_tfidf(const TfidfOptions& options) {
  textprep::Vocabulary vocab = textprep::load_vocab(options.vocab_path);
  auto docs = tokenize_corpus_file(options.corpus_path, false);
  if (docs.empty()) throw DataError("tfidf: empty corpus " + options.corpus_path);
  textprep::TfidfMatrix matrix = textprep::tfidf(docs, vocab);
  textprep::export_tfidf(matrix, vocab, options.out_path);
  return {{"documents", matrix.n_docs}, {"entries", matrix.entries.size()}};
}

}  // namespace notecode::pipeline
