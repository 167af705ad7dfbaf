#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "notecode/errors.hpp"

namespace notecode::textprep {

inline constexpr const char* kUnkToken = "xxunk";
inline constexpr const char* kPadToken = "xxpad";
inline constexpr const char* kDeidToken = "xxdeid";

// The stop-word list shipped with the tool. Off by default for the neural
// path, on for the TF-IDF exporter.
const std::unordered_set<std::string>& default_stopwords();

// FNV-1a over an ordered token list (newline-separated stream).
std::uint64_t fingerprint_tokens(const std::vector<std::string>& itos);

// Deterministic cleaning: lowercase; replace [** ... **] de-identification
// spans with the xxdeid sentinel; map every character that is not a letter,
// digit or whitespace to a space; collapse whitespace runs and trim;
// optionally drop stop words.
std::string fixup(std::string_view text, bool remove_stopwords = false);

// Whitespace split of fixup-cleaned text, order preserved.
std::vector<std::string> tokenize(std::string_view cleaned);

// Ordered token list with unk at index 0 and pad at index 1. Lookup of any
// unknown token yields 0.
struct Vocabulary {
  std::vector<std::string> itos;
  std::unordered_map<std::string, int> stoi_map;
  int max_size = 60000;
  int min_freq = 2;

  int stoi(std::string_view token) const {
    auto it = stoi_map.find(std::string(token));
    return it == stoi_map.end() ? 0 : it->second;
  }
  int size() const { return static_cast<int>(itos.size()); }

  // FNV-1a over the ordered token list; used to pair encoders with the
  // vocabulary they were trained on.
  std::uint64_t fingerprint() const;
};

// Count tokens across the streams, keep those with count >= min_freq,
// order by descending count with lexicographic tie-break, truncate to
// max_size, and prepend the unk/pad specials.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& token_streams,
                       int max_size = 60000, int min_freq = 2);

// Rebuild a Vocabulary from an ordered token list (e.g. one embedded in a
// checkpoint). The list must start with the unk/pad specials.
Vocabulary vocab_from_itos(std::vector<std::string> itos);

std::vector<int> numericalize(const std::vector<std::string>& tokens, const Vocabulary& vocab);

// Inverse of numericalize on in-vocabulary ids; out-of-range id -> IndexError.
std::vector<std::string> denumericalize(const std::vector<int>& ids, const Vocabulary& vocab);

void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

// Sparse TF-IDF triples over vocabulary terms (specials excluded):
// tf = raw count in the document, idf = ln((1+N)/(1+df)) + 1.
struct TfidfEntry {
  int doc;
  int term;  // vocabulary index, >= 2
  double value;
};

struct TfidfMatrix {
  int n_docs = 0;
  std::vector<TfidfEntry> entries;  // sorted by (doc, term); zeros omitted
};

TfidfMatrix tfidf(const std::vector<std::vector<std::string>>& docs, const Vocabulary& vocab);

// CSV export: header doc_index,term,value with the term spelled out.
void export_tfidf(const TfidfMatrix& matrix, const Vocabulary& vocab, const std::string& path);

}  // namespace notecode::textprep
