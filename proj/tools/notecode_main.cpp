// notecode: stage-wise CLI over the note-to-code pipeline. Every stage reads
// and writes files; summaries and diagnostics go to stderr only.
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "notecode/config.hpp"
#include "notecode/errors.hpp"
#include "notecode/pipeline.hpp"

namespace {

using notecode::ConfigError;
using notecode::IoError;
using notecode::ParseError;

// Dotted-path override: "lm.embed_dim=64". Values parse as JSON literals,
// falling back to a plain string; strict config parsing catches bad keys.
void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::parse_error&) {
    value = raw;
  }
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    if (dot == std::string::npos) {
      (*node)[key.substr(start)] = value;
      return;
    }
    node = &(*node)[key.substr(start, dot - start)];
    start = dot + 1;
  }
}

// Config file (if any) + --set overrides, parsed strictly.
notecode::config::PipelineConfig resolve_config(const std::string& config_path,
                                                const std::vector<std::string>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path, std::ios::binary);
    if (!in) throw IoError("cannot open config file: " + config_path);
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError("config " + config_path + ": " + e.what());
    }
  }
  for (const auto& assignment : overrides) apply_override(doc, assignment);
  return notecode::config::from_json(doc);
}

void log_summary(const nlohmann::json& summary) { std::cerr << summary.dump(2) << '\n'; }

int run_guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"note-to-code pipeline"};
  app.require_subcommand(1);

  // Shared config plumbing: stages accept --config plus any number of
  // --set key=value overrides (flags win over the file).
  std::string config_path;
  std::vector<std::string> overrides;
  auto add_config_flags = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "pipeline config JSON");
    cmd->add_option("--set", overrides, "override a config key, e.g. --set lm.embed_dim=64");
  };

  int exit_code = 0;
  auto guard = [&](const std::function<void()>& body) {
    return [&, body]() { exit_code = run_guarded(body); };
  };

  // prepare
  notecode::pipeline::PrepareOptions prepare;
  std::string prepare_kind = "diagnosis";
  auto* cmd_prepare = app.add_subcommand("prepare", "join notes with primary codes, split, write corpora");
  cmd_prepare->add_option("--notes", prepare.notes_csv, "notes CSV")->required();
  cmd_prepare->add_option("--codes", prepare.codes_csv, "code assignments CSV")->required();
  cmd_prepare->add_option("--kind", prepare_kind, "diagnosis|procedure")
      ->check(CLI::IsMember({"diagnosis", "procedure"}));
  cmd_prepare->add_option("--top-k", prepare.top_k, "label-set size");
  cmd_prepare->add_option("--split", prepare.test_fraction, "test fraction");
  cmd_prepare->add_option("--seed", prepare.seed, "shuffle seed");
  cmd_prepare->add_option("--out", prepare.out_dir, "output directory")->required();
  cmd_prepare->callback(guard([&] {
    prepare.kind = prepare_kind == "procedure" ? notecode::ingest::CodeKind::procedure
                                               : notecode::ingest::CodeKind::diagnosis;
    log_summary(notecode::pipeline::cmd_prepare(prepare));
  }));

  // vocab
  notecode::pipeline::VocabOptions vocab;
  auto* cmd_vocab = app.add_subcommand("vocab", "build a vocabulary from corpora and text files");
  cmd_vocab->add_option("--corpus", vocab.corpus_paths, "labeled corpus JSONL (repeatable)");
  cmd_vocab->add_option("--text", vocab.text_paths, "raw text file (repeatable)");
  cmd_vocab->add_option("--max-size", vocab.max_size, "maximum non-special entries");
  cmd_vocab->add_option("--min-freq", vocab.min_freq, "minimum token frequency");
  cmd_vocab->add_flag("--remove-stopwords", vocab.remove_stopwords, "drop stopwords");
  cmd_vocab->add_option("--out", vocab.out_path, "vocabulary file")->required();
  cmd_vocab->callback(guard([&] { log_summary(notecode::pipeline::cmd_vocab(vocab)); }));

  // pretrain-lm
  notecode::pipeline::PretrainOptions pretrain;
  auto* cmd_pretrain = app.add_subcommand("pretrain-lm", "train the general-domain language model");
  cmd_pretrain->add_option("--text", pretrain.text_path, "general-domain text")->required();
  add_config_flags(cmd_pretrain);
  cmd_pretrain->add_option("--out", pretrain.out_path, "LM checkpoint path")->required();
  cmd_pretrain->callback(guard([&] {
    pretrain.config = resolve_config(config_path, overrides);
    log_summary(notecode::pipeline::cmd_pretrain_lm(pretrain));
  }));

  // finetune-lm
  notecode::pipeline::FinetuneOptions finetune;
  auto* cmd_finetune = app.add_subcommand("finetune-lm", "fine-tune the LM on a target corpus");
  cmd_finetune->add_option("--pretrained", finetune.pretrained_path, "LM checkpoint")->required();
  cmd_finetune->add_option("--corpus", finetune.corpus_path, "target corpus JSONL")->required();
  cmd_finetune->add_option("--vocab", finetune.vocab_path,
                           "target vocabulary (default: build from the corpus)");
  add_config_flags(cmd_finetune);
  cmd_finetune->add_option("--out", finetune.out_path, "encoder snapshot path")->required();
  cmd_finetune->callback(guard([&] {
    finetune.config = resolve_config(config_path, overrides);
    log_summary(notecode::pipeline::cmd_finetune_lm(finetune));
  }));

  // train-clf
  notecode::pipeline::TrainClfOptions train_clf;
  auto* cmd_train_clf = app.add_subcommand("train-clf", "train the classifier on an encoder");
  cmd_train_clf->add_option("--encoder", train_clf.encoder_path, "encoder snapshot")->required();
  cmd_train_clf->add_option("--corpus", train_clf.corpus_path, "train corpus JSONL")->required();
  cmd_train_clf->add_option("--valid", train_clf.valid_corpus_path,
                            "held-out corpus for per-epoch history");
  add_config_flags(cmd_train_clf);
  cmd_train_clf->add_option("--out", train_clf.out_path, "classifier checkpoint path")->required();
  cmd_train_clf->callback(guard([&] {
    train_clf.config = resolve_config(config_path, overrides);
    log_summary(notecode::pipeline::cmd_train_clf(train_clf));
  }));

  // eval
  notecode::pipeline::EvalOptions eval;
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a classifier and export metrics");
  cmd_eval->add_option("--model", eval.model_path, "classifier checkpoint")->required();
  cmd_eval->add_option("--corpus", eval.corpus_path, "evaluation corpus JSONL")->required();
  cmd_eval->add_option("--out-prefix", eval.out_prefix, "output path prefix")->required();
  cmd_eval->callback(guard([&] { log_summary(notecode::pipeline::cmd_eval(eval)); }));

  // synth
  notecode::pipeline::SynthOptions synth;
  auto* cmd_synth = app.add_subcommand("synth", "generate a synthetic labeled corpus + general text");
  cmd_synth->add_option("--classes", synth.spec.num_classes, "number of classes");
  cmd_synth->add_option("--vocab-size", synth.spec.vocab_size, "word types");
  cmd_synth->add_option("--tokens-per-doc", synth.spec.tokens_per_doc, "document length");
  cmd_synth->add_option("--docs-per-class", synth.spec.docs_per_class, "documents per class");
  cmd_synth->add_option("--signal", synth.spec.signal, "class-signal strength in [0,1]");
  cmd_synth->add_option("--markers-per-class", synth.spec.markers_per_class,
                        "private token types per class");
  cmd_synth->add_option("--general-tokens", synth.spec.general_tokens, "general text size");
  cmd_synth->add_option("--seed", synth.spec.seed, "generator seed");
  cmd_synth->add_option("--test-fraction", synth.test_fraction, "test split fraction");
  cmd_synth->add_option("--out", synth.out_dir, "output directory")->required();
  cmd_synth->callback(guard([&] { log_summary(notecode::pipeline::cmd_synth(synth)); }));

  // tfidf
  notecode::pipeline::TfidfOptions tfidf;
  auto* cmd_tfidf = app.add_subcommand("tfidf", "export TF-IDF features for a corpus");
  cmd_tfidf->add_option("--corpus", tfidf.corpus_path, "corpus JSONL")->required();
  cmd_tfidf->add_option("--vocab", tfidf.vocab_path, "vocabulary file")->required();
  cmd_tfidf->add_option("--out", tfidf.out_path, "output CSV")->required();
  cmd_tfidf->callback(guard([&] { log_summary(notecode::pipeline::cmd_tfidf(tfidf)); }));

  // config-dump
  std::string dump_path;
  auto* cmd_dump = app.add_subcommand("config-dump", "print the default configuration");
  cmd_dump->add_option("--out", dump_path, "write to a file instead of stdout");
  cmd_dump->callback(guard([&] {
    const std::string dump = notecode::config::default_config_dump();
    if (dump_path.empty()) {
      std::cout << dump;
    } else {
      std::ofstream out(dump_path, std::ios::binary);
      if (!out) throw IoError("cannot write " + dump_path);
      out << dump;
    }
  }));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Normalize CLI11's parse-error codes to the documented contract:
    // 0 for --help and friends, 1 for any flag/usage validation error.
    return app.exit(e) == 0 ? 0 : 1;
  }
  return exit_code;
}
