#include "notecode/textprep.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace notecode::textprep {

const std::unordered_set<std::string>& default_stopwords() {
  static const std::unordered_set<std::string> words = {
      "a",     "an",    "and",   "are",   "as",    "at",    "be",    "been",
      "but",   "by",    "for",   "from",  "had",   "has",   "have",  "he",
      "her",   "his",   "if",    "in",    "into",  "is",    "it",    "its",
      "no",    "not",   "of",    "on",    "or",    "she",   "so",    "such",
      "that",  "the",   "their", "then",  "there", "these", "they",  "this",
      "to",    "was",   "were",  "which", "will",  "with"};
  return words;
}

std::string fixup(std::string_view text, bool remove_stopwords) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char ch : text)
    lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));

  // De-identification spans: [** ... **] -> xxdeid. Unterminated openers are
  // left for the punctuation pass to dissolve.
  std::string deided;
  deided.reserve(lowered.size());
  std::size_t pos = 0;
  while (pos < lowered.size()) {
    std::size_t open = lowered.find("[**", pos);
    if (open == std::string::npos) {
      deided.append(lowered, pos, std::string::npos);
      break;
    }
    std::size_t close = lowered.find("**]", open + 3);
    if (close == std::string::npos) {
      deided.append(lowered, pos, std::string::npos);
      break;
    }
    deided.append(lowered, pos, open - pos);
    deided.append(kDeidToken);
    pos = close + 3;
  }

  std::string spaced;
  spaced.reserve(deided.size());
  for (char ch : deided) {
    const unsigned char u = static_cast<unsigned char>(ch);
    if (std::isalnum(u) || std::isspace(u))
      spaced.push_back(std::isspace(u) ? ' ' : ch);
    else
      spaced.push_back(' ');
  }

  std::string out;
  out.reserve(spaced.size());
  std::istringstream stream(spaced);
  std::string token;
  while (stream >> token) {
    if (remove_stopwords && default_stopwords().count(token)) continue;
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view cleaned) {
  std::vector<std::string> tokens;
  std::istringstream stream{std::string(cleaned)};
  std::string token;
  while (stream >> token) tokens.push_back(token);
  return tokens;
}

std::uint64_t fingerprint_tokens(const std::vector<std::string>& itos) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](unsigned char byte) {
    h ^= byte;
    h *= 0x100000001b3ull;
  };
  for (const auto& token : itos) {
    for (char ch : token) mix(static_cast<unsigned char>(ch));
    mix('\n');
  }
  return h;
}

std::uint64_t Vocabulary::fingerprint() const { return fingerprint_tokens(itos); }

Vocabulary build_vocab(const std::vector<std::vector<std::string>>& token_streams,
                       int max_size, int min_freq) {
  if (max_size < 1) throw ConfigError("build_vocab: max_size must be >= 1");
  if (min_freq < 1) throw ConfigError("build_vocab: min_freq must be >= 1");

  std::unordered_map<std::string, long long> counts;
  for (const auto& stream : token_streams)
    for (const auto& token : stream) ++counts[token];

  std::vector<std::pair<std::string, long long>> kept;
  kept.reserve(counts.size());
  for (auto& kv : counts)
    if (kv.second >= min_freq) kept.emplace_back(kv.first, kv.second);
  std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int>(kept.size()) > max_size) kept.resize(static_cast<std::size_t>(max_size));

  Vocabulary vocab;
  vocab.max_size = max_size;
  vocab.min_freq = min_freq;
  vocab.itos.reserve(kept.size() + 2);
  vocab.itos.push_back(kUnkToken);
  vocab.itos.push_back(kPadToken);
  for (auto& kv : kept) vocab.itos.push_back(std::move(kv.first));
  for (int i = 0; i < static_cast<int>(vocab.itos.size()); ++i)
    vocab.stoi_map[vocab.itos[static_cast<std::size_t>(i)]] = i;
  return vocab;
}

Vocabulary vocab_from_itos(std::vector<std::string> itos) {
  if (itos.size() < 2 || itos[0] != kUnkToken || itos[1] != kPadToken)
    throw ParseError("token list must start with the xxunk and xxpad specials");
  Vocabulary vocab;
  vocab.itos = std::move(itos);
  for (int i = 0; i < static_cast<int>(vocab.itos.size()); ++i)
    vocab.stoi_map[vocab.itos[static_cast<std::size_t>(i)]] = i;
  return vocab;
}

std::vector<int> numericalize(const std::vector<std::string>& tokens, const Vocabulary& vocab) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& token : tokens) ids.push_back(vocab.stoi(token));
  return ids;
}

std::vector<std::string> denumericalize(const std::vector<int>& ids, const Vocabulary& vocab) {
  std::vector<std::string> tokens;
  tokens.reserve(ids.size());
  for (int id : ids) {
    if (id < 0 || id >= vocab.size())
      throw IndexError("denumericalize: id " + std::to_string(id) + " out of range");
    tokens.push_back(vocab.itos[static_cast<std::size_t>(id)]);
  }
  return tokens;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open vocab file for writing: " + path);
  for (const auto& token : vocab.itos) out << token << '\n';
  if (!out) throw IoError("failed writing vocab file: " + path);
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open vocab file: " + path);
  std::vector<std::string> itos;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    itos.push_back(line);
  }
  try {
    return vocab_from_itos(std::move(itos));
  } catch (const ParseError&) {
    throw ParseError("vocab file must start with the xxunk and xxpad lines: " + path);
  }
}

TfidfMatrix tfidf(const std::vector<std::vector<std::string>>& docs, const Vocabulary& vocab) {
  if (docs.empty()) throw DataError("tfidf: need at least one document");
  const int n_docs = static_cast<int>(docs.size());

  // Document frequency per vocabulary term (specials excluded).
  std::unordered_map<int, int> df;
  std::vector<std::map<int, long long>> term_counts(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& token : docs[d]) {
      const int id = vocab.stoi(token);
      if (id < 2) continue;
      ++term_counts[d][id];
    }
    for (const auto& kv : term_counts[d]) ++df[kv.first];
  }

  TfidfMatrix matrix;
  matrix.n_docs = n_docs;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    for (const auto& [term, count] : term_counts[d]) {
      const double idf =
          std::log((1.0 + n_docs) / (1.0 + static_cast<double>(df[term]))) + 1.0;
      matrix.entries.push_back(
          {static_cast<int>(d), term, static_cast<double>(count) * idf});
    }
  }
  return matrix;
}

void export_tfidf(const TfidfMatrix& matrix, const Vocabulary& vocab, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open tfidf file for writing: " + path);
  out << "doc_index,term,value\n";
  char buf[64];
  for (const auto& entry : matrix.entries) {
    std::snprintf(buf, sizeof(buf), "%.6f", entry.value);
    out << entry.doc << ',' << vocab.itos[static_cast<std::size_t>(entry.term)] << ',' << buf
        << '\n';
  }
  if (!out) throw IoError("failed writing tfidf file: " + path);
}

}  // namespace notecode::textprep
