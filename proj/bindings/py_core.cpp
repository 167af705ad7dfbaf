// Python bindings over the pipeline: text prep, vocabulary, TF-IDF, metrics,
// and the stage commands. Structured results cross as plain dicts/lists.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "notecode/config.hpp"
#include "notecode/errors.hpp"
#include "notecode/evalmetrics.hpp"
#include "notecode/pipeline.hpp"
#include "notecode/synth.hpp"
#include "notecode/textprep.hpp"

namespace py = pybind11;
using namespace notecode;

namespace {

py::object json_to_py(const nlohmann::json& j) {
  switch (j.type()) {
    case nlohmann::json::value_t::null:
      return py::none();
    case nlohmann::json::value_t::boolean:
      return py::bool_(j.get<bool>());
    case nlohmann::json::value_t::number_integer:
      return py::int_(j.get<long long>());
    case nlohmann::json::value_t::number_unsigned:
      return py::int_(j.get<unsigned long long>());
    case nlohmann::json::value_t::number_float:
      return py::float_(j.get<double>());
    case nlohmann::json::value_t::string:
      return py::str(j.get<std::string>());
    case nlohmann::json::value_t::array: {
      py::list out;
      for (const auto& item : j) out.append(json_to_py(item));
      return out;
    }
    case nlohmann::json::value_t::object: {
      py::dict out;
      for (const auto& [key, value] : j.items()) out[py::str(key)] = json_to_py(value);
      return out;
    }
    default:
      return py::none();
  }
}

config::PipelineConfig parse_config(const std::string& config_json) {
  if (config_json.empty()) return config::PipelineConfig{};
  return config::from_json(nlohmann::json::parse(config_json));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "note-to-code pipeline core";

  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const IoError& e) {
      PyErr_SetString(PyExc_OSError, e.what());
    } catch (const std::runtime_error& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  // Text preparation.
  m.def("fixup", &textprep::fixup, py::arg("text"), py::arg("remove_stopwords") = false,
        "Lowercase, replace de-identification spans, strip punctuation.");
  m.def(
      "tokenize", [](const std::string& cleaned) { return textprep::tokenize(cleaned); },
      py::arg("cleaned"), "Whitespace-split a fixed-up string.");

  py::class_<textprep::Vocabulary>(m, "Vocabulary")
      .def_readonly("itos", &textprep::Vocabulary::itos)
      .def("stoi", &textprep::Vocabulary::stoi, py::arg("token"))
      .def("__len__", &textprep::Vocabulary::size)
      .def("fingerprint", &textprep::Vocabulary::fingerprint)
      .def("numericalize",
           [](const textprep::Vocabulary& v, const std::vector<std::string>& tokens) {
             return textprep::numericalize(tokens, v);
           })
      .def("denumericalize", [](const textprep::Vocabulary& v, const std::vector<int>& ids) {
        return textprep::denumericalize(ids, v);
      });
  m.def(
      "build_vocab",
      [](const std::vector<std::vector<std::string>>& streams, int max_size, int min_freq) {
        return textprep::build_vocab(streams, max_size, min_freq);
      },
      py::arg("token_streams"), py::arg("max_size") = 60000, py::arg("min_freq") = 2);
  m.def("save_vocab", &textprep::save_vocab, py::arg("vocab"), py::arg("path"));
  m.def("load_vocab", &textprep::load_vocab, py::arg("path"));

  m.def(
      "tfidf",
      [](const std::vector<std::vector<std::string>>& docs, const textprep::Vocabulary& vocab) {
        std::vector<std::tuple<int, int, double>> out;
        for (const auto& entry : textprep::tfidf(docs, vocab).entries)
          out.emplace_back(entry.doc, entry.term, entry.value);
        return out;
      },
      py::arg("docs"), py::arg("vocab"), "Sparse (doc, term, value) triples.");

  // Metrics on predictions.
  m.def(
      "evaluate_predictions",
      [](const std::vector<int>& preds, const std::vector<int>& truths,
         const std::vector<std::vector<double>>& scores, int k) {
        evalmetrics::ConfusionMatrix cm = evalmetrics::confusion(preds, truths, k);
        evalmetrics::MetricsReport report = evalmetrics::summary(cm);
        nlohmann::json out = {{"accuracy", report.accuracy},
                              {"macro_precision", report.macro_precision},
                              {"macro_recall", report.macro_recall},
                              {"macro_f1", report.macro_f1}};
        if (!scores.empty()) {
          evalmetrics::MacroAucResult auc = evalmetrics::macro_auc(scores, truths, k);
          out["macro_auc"] = auc.value ? nlohmann::json(*auc.value) : nlohmann::json(nullptr);
          out["undefined_auc_classes"] = auc.undefined_classes;
        }
        return json_to_py(out);
      },
      py::arg("preds"), py::arg("truths"), py::arg("scores") = std::vector<std::vector<double>>{},
      py::arg("k") = 0);

  m.def("default_config_json",
        [] { return config::default_config_dump(); });

  // Pipeline stages; config_json "" means defaults.
  m.def(
      "prepare",
      [](const std::string& notes, const std::string& codes, const std::string& kind, int top_k,
         double test_fraction, std::uint64_t seed, const std::string& out_dir) {
        pipeline::PrepareOptions options;
        options.notes_csv = notes;
        options.codes_csv = codes;
        options.kind = kind == "procedure" ? ingest::CodeKind::procedure
                                           : ingest::CodeKind::diagnosis;
        options.top_k = top_k;
        options.test_fraction = test_fraction;
        options.seed = seed;
        options.out_dir = out_dir;
        return json_to_py(pipeline::cmd_prepare(options));
      },
      py::arg("notes"), py::arg("codes"), py::arg("kind") = "diagnosis", py::arg("top_k") = 10,
      py::arg("test_fraction") = 0.2, py::arg("seed") = 42, py::arg("out_dir") = ".");

  m.def(
      "synth",
      [](int classes, int vocab_size, int tokens_per_doc, int docs_per_class, double signal,
         int markers_per_class, int general_tokens, std::uint64_t seed, double test_fraction,
         const std::string& out_dir) {
        pipeline::SynthOptions options;
        options.spec.num_classes = classes;
        options.spec.vocab_size = vocab_size;
        options.spec.tokens_per_doc = tokens_per_doc;
        options.spec.docs_per_class = docs_per_class;
        options.spec.signal = signal;
        options.spec.markers_per_class = markers_per_class;
        options.spec.general_tokens = general_tokens;
        options.spec.seed = seed;
        options.test_fraction = test_fraction;
        options.out_dir = out_dir;
        return json_to_py(pipeline::cmd_synth(options));
      },
      py::arg("classes") = 10, py::arg("vocab_size") = 200, py::arg("tokens_per_doc") = 60,
      py::arg("docs_per_class") = 200, py::arg("signal") = 0.5, py::arg("markers_per_class") = 2,
      py::arg("general_tokens") = 50000, py::arg("seed") = 13, py::arg("test_fraction") = 0.2,
      py::arg("out_dir") = ".");

  m.def(
      "build_vocab_files",
      [](const std::vector<std::string>& corpus_paths, const std::vector<std::string>& text_paths,
         int max_size, int min_freq, bool remove_stopwords, const std::string& out_path) {
        pipeline::VocabOptions options;
        options.corpus_paths = corpus_paths;
        options.text_paths = text_paths;
        options.max_size = max_size;
        options.min_freq = min_freq;
        options.remove_stopwords = remove_stopwords;
        options.out_path = out_path;
        return json_to_py(pipeline::cmd_vocab(options));
      },
      py::arg("corpus_paths") = std::vector<std::string>{},
      py::arg("text_paths") = std::vector<std::string>{}, py::arg("max_size") = 60000,
      py::arg("min_freq") = 2, py::arg("remove_stopwords") = false, py::arg("out_path") = "");

  m.def(
      "pretrain_lm",
      [](const std::string& text, const std::string& config_json, const std::string& out) {
        pipeline::PretrainOptions options;
        options.text_path = text;
        options.config = parse_config(config_json);
        options.out_path = out;
        return json_to_py(pipeline::cmd_pretrain_lm(options));
      },
      py::arg("text"), py::arg("config_json") = "", py::arg("out") = "lm.ckpt");

  m.def(
      "finetune_lm",
      [](const std::string& pretrained, const std::string& corpus, const std::string& vocab,
         const std::string& config_json, const std::string& out) {
        pipeline::FinetuneOptions options;
        options.pretrained_path = pretrained;
        options.corpus_path = corpus;
        options.vocab_path = vocab;
        options.config = parse_config(config_json);
        options.out_path = out;
        return json_to_py(pipeline::cmd_finetune_lm(options));
      },
      py::arg("pretrained"), py::arg("corpus"), py::arg("vocab") = "",
      py::arg("config_json") = "", py::arg("out") = "encoder.ckpt");

  m.def(
      "train_clf",
      [](const std::string& encoder, const std::string& corpus, const std::string& valid,
         const std::string& config_json, const std::string& out) {
        pipeline::TrainClfOptions options;
        options.encoder_path = encoder;
        options.corpus_path = corpus;
        options.valid_corpus_path = valid;
        options.config = parse_config(config_json);
        options.out_path = out;
        return json_to_py(pipeline::cmd_train_clf(options));
      },
      py::arg("encoder"), py::arg("corpus"), py::arg("valid") = "", py::arg("config_json") = "",
      py::arg("out") = "classifier.ckpt");

  m.def(
      "evaluate",
      [](const std::string& model, const std::string& corpus, const std::string& out_prefix) {
        pipeline::EvalOptions options;
        options.model_path = model;
        options.corpus_path = corpus;
        options.out_prefix = out_prefix;
        return json_to_py(pipeline::cmd_eval(options));
      },
      py::arg("model"), py::arg("corpus"), py::arg("out_prefix") = "");

  m.def(
      "tfidf_files",
      [](const std::string& corpus, const std::string& vocab, const std::string& out) {
        pipeline::TfidfOptions options;
        options.corpus_path = corpus;
        options.vocab_path = vocab;
        options.out_path = out;
        return json_to_py(pipeline::cmd_tfidf(options));
      },
      py::arg("corpus"), py::arg("vocab"), py::arg("out"));
}
