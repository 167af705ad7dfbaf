#include "notecode/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "notecode/rng.hpp"

namespace notecode::ingest {

namespace {

std::string lower_copy(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim_copy(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

long long parse_ll(const std::string& cell, const char* what, std::size_t row) {
  const std::string trimmed = trim_copy(cell);
  try {
    std::size_t used = 0;
    long long v = std::stoll(trimmed, &used);
    if (used != trimmed.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("row ") + std::to_string(row) + ": cannot parse " + what +
                     " from '" + cell + "'");
  }
}

// Composite admission key; subject and admission ids are positive so this
// cannot collide.
std::uint64_t admission_key(long long subject_id, long long hadm_id) {
  return (static_cast<std::uint64_t>(subject_id) << 32) ^ static_cast<std::uint64_t>(hadm_id);
}

}  // namespace

std::string to_string(CodeKind kind) {
  return kind == CodeKind::diagnosis ? "diagnosis" : "procedure";
}

CodeKind code_kind_from_string(const std::string& s) {
  if (s == "diagnosis") return CodeKind::diagnosis;
  if (s == "procedure") return CodeKind::procedure;
  throw ConfigError("unknown code kind: '" + s + "' (expected diagnosis or procedure)");
}

int LabelMap::index_of(const std::string& code) const {
  for (std::size_t i = 0; i < codes.size(); ++i)
    if (codes[i] == code) return static_cast<int>(i);
  return -1;
}

int CsvTable::column(const std::string& name) const {
  const std::string want = lower_copy(name);
  for (std::size_t i = 0; i < header.size(); ++i)
    if (lower_copy(header[i]) == want) return static_cast<int>(i);
  return -1;
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open csv file: " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool in_quotes = false;
  bool row_has_data = false;

  std::size_t i = 0;
  const std::size_t n = data.size();
  while (i < n) {
    const char c = data[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < n && data[i + 1] == '"') {  // escaped quote
          cell.push_back('"');
          i += 2;
        } else {
          in_quotes = false;
          ++i;
        }
      } else {
        cell.push_back(c);
        ++i;
      }
    } else if (c == '"') {
      in_quotes = true;
      row_has_data = true;
      ++i;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      row_has_data = true;
      ++i;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < n && data[i + 1] == '\n') ++i;
      ++i;
      if (row_has_data || !cell.empty()) {
        row.push_back(std::move(cell));
        cell.clear();
        rows.push_back(std::move(row));
        row.clear();
        row_has_data = false;
      }
    } else {
      cell.push_back(c);
      row_has_data = true;
      ++i;
    }
  }
  if (in_quotes) throw ParseError("unterminated quoted cell in " + path);
  if (row_has_data || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("csv file has no header row: " + path);

  CsvTable table;
  table.header = std::move(rows.front());
  table.rows.assign(std::make_move_iterator(rows.begin() + 1),
                    std::make_move_iterator(rows.end()));
  return table;
}

NotesLoadResult load_notes(const std::string& path) {
  CsvTable table = read_csv(path);
  for (const char* name : {"SUBJECT_ID", "HADM_ID", "TEXT"})
    if (table.column(name) < 0)
      throw SchemaError(std::string("notes file missing required column ") + name + ": " + path);
  const int c_subj = table.column("SUBJECT_ID");
  const int c_hadm = table.column("HADM_ID");
  const int c_text = table.column("TEXT");
  const int c_cat = table.column("CATEGORY");  // optional

  NotesLoadResult result;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto cell = [&](int c) -> std::string {
      return (c >= 0 && c < static_cast<int>(row.size())) ? row[static_cast<std::size_t>(c)] : "";
    };
    if (trim_copy(cell(c_subj)).empty() || trim_copy(cell(c_hadm)).empty()) {
      ++result.dropped_null_key;
      continue;
    }
    NoteRecord rec;
    rec.subject_id = parse_ll(cell(c_subj), "SUBJECT_ID", r + 1);
    rec.hadm_id = parse_ll(cell(c_hadm), "HADM_ID", r + 1);
    rec.category = cell(c_cat);
    rec.text = cell(c_text);
    result.records.push_back(std::move(rec));
  }
  return result;
}

CodesLoadResult load_codes(const std::string& path, CodeKind kind) {
  CsvTable table = read_csv(path);
  for (const char* name : {"SUBJECT_ID", "HADM_ID", "SEQ_NUM", "ICD9_CODE"})
    if (table.column(name) < 0)
      throw SchemaError(std::string("codes file missing required column ") + name + ": " + path);
  const int c_subj = table.column("SUBJECT_ID");
  const int c_hadm = table.column("HADM_ID");
  const int c_seq = table.column("SEQ_NUM");
  const int c_code = table.column("ICD9_CODE");

  CodesLoadResult result;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    auto cell = [&](int c) -> std::string {
      return (c >= 0 && c < static_cast<int>(row.size())) ? row[static_cast<std::size_t>(c)] : "";
    };
    if (trim_copy(cell(c_subj)).empty() || trim_copy(cell(c_hadm)).empty()) {
      ++result.dropped_null_key;
      continue;
    }
    const std::string code = trim_copy(cell(c_code));
    if (code.empty()) {
      ++result.dropped_empty_code;
      continue;
    }
    CodeAssignment rec;
    rec.subject_id = parse_ll(cell(c_subj), "SUBJECT_ID", r + 1);
    rec.hadm_id = parse_ll(cell(c_hadm), "HADM_ID", r + 1);
    rec.seq_num = static_cast<int>(parse_ll(cell(c_seq), "SEQ_NUM", r + 1));
    rec.code = code;
    rec.kind = kind;
    result.records.push_back(std::move(rec));
  }
  return result;
}

FilterPrimaryResult filter_primary(const std::vector<CodeAssignment>& codes) {
  FilterPrimaryResult result;
  std::unordered_set<std::uint64_t> seen_diag, seen_proc;
  for (const auto& code : codes) {
    if (code.seq_num != 1) continue;
    auto& seen = code.kind == CodeKind::diagnosis ? seen_diag : seen_proc;
    if (!seen.insert(admission_key(code.subject_id, code.hadm_id)).second) {
      ++result.duplicates_dropped;
      continue;
    }
    result.primaries.push_back(code);
  }
  return result;
}

TopCodesResult top_k_codes(const std::vector<CodeAssignment>& primaries, int k) {
  if (k < 1) throw ConfigError("top_k_codes: k must be >= 1");
  std::unordered_map<std::string, long long> counts;
  for (const auto& code : primaries) ++counts[code.code];

  std::vector<std::pair<std::string, long long>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  TopCodesResult result;
  result.fewer_than_k = static_cast<int>(ranked.size()) < k;
  const std::size_t take = std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(k));
  result.codes.reserve(take);
  for (std::size_t i = 0; i < take; ++i) result.codes.push_back(ranked[i].first);
  return result;
}

JoinResult join_and_filter(const std::vector<NoteRecord>& notes,
                           const std::vector<CodeAssignment>& primaries,
                           const std::vector<std::string>& top_codes, CodeKind kind) {
  if (top_codes.empty()) throw ConfigError("join_and_filter: top_codes must be non-empty");

  std::unordered_map<std::string, int> label_of;
  for (std::size_t i = 0; i < top_codes.size(); ++i)
    label_of[top_codes[i]] = static_cast<int>(i);

  std::unordered_map<std::uint64_t, const CodeAssignment*> primary_of;
  for (const auto& code : primaries) {
    if (code.kind != kind) continue;
    primary_of.emplace(admission_key(code.subject_id, code.hadm_id), &code);
  }

  JoinResult result;
  result.corpus.kind = kind;
  result.corpus.label_map.codes = top_codes;
  for (const auto& note : notes) {
    auto it = primary_of.find(admission_key(note.subject_id, note.hadm_id));
    if (it == primary_of.end()) {
      ++result.dropped_no_primary;
      continue;
    }
    auto label_it = label_of.find(it->second->code);
    if (label_it == label_of.end()) {
      ++result.dropped_not_in_top_k;
      continue;
    }
    if (trim_copy(note.text).empty()) {
      ++result.dropped_empty_text;
      continue;
    }
    result.corpus.examples.push_back({note.hadm_id, note.text, label_it->second});
  }
  if (result.corpus.examples.empty())
    throw DataError("join_and_filter: no examples survived the join and label filter");
  return result;
}

std::pair<LabeledCorpus, LabeledCorpus> split(const LabeledCorpus& corpus, double test_fraction,
                                              std::uint64_t seed) {
  const std::size_t n = corpus.examples.size();
  if (n < 2) throw DataError("split: need at least 2 examples");
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ConfigError("split: test_fraction must lie in (0,1)");

  auto test_n = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * test_fraction));
  test_n = std::clamp<std::size_t>(test_n, 1, n - 1);

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  LabeledCorpus train, test;
  train.label_map = corpus.label_map;
  train.kind = corpus.kind;
  test.label_map = corpus.label_map;
  test.kind = corpus.kind;
  for (std::size_t i = 0; i < n - test_n; ++i)
    train.examples.push_back(corpus.examples[order[i]]);
  for (std::size_t i = n - test_n; i < n; ++i)
    test.examples.push_back(corpus.examples[order[i]]);
  return {std::move(train), std::move(test)};
}

void write_corpus(const LabeledCorpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open corpus file for writing: " + path);
  for (const auto& example : corpus.examples) {
    nlohmann::json line = {
        {"hadm_id", example.hadm_id}, {"label", example.label}, {"text", example.text}};
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("failed writing corpus file: " + path);
}

LabeledCorpus read_corpus(const std::string& path, const LabelMap& label_map, CodeKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file: " + path);
  LabeledCorpus corpus;
  corpus.label_map = label_map;
  corpus.kind = kind;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError("corpus line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.contains("hadm_id") || !obj.contains("label") || !obj.contains("text"))
      throw SchemaError("corpus line " + std::to_string(line_no) +
                        ": expected hadm_id, label, text");
    Example example;
    example.hadm_id = obj["hadm_id"].get<long long>();
    example.label = obj["label"].get<int>();
    example.text = obj["text"].get<std::string>();
    if (label_map.size() > 0 && (example.label < 0 || example.label >= label_map.size()))
      throw DataError("corpus line " + std::to_string(line_no) + ": label " +
                      std::to_string(example.label) + " outside the label map");
    corpus.examples.push_back(std::move(example));
  }
  return corpus;
}

void write_label_map(const LabelMap& label_map, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open label map file for writing: " + path);
  out << nlohmann::json(label_map.codes).dump(2) << '\n';
  if (!out) throw IoError("failed writing label map file: " + path);
}

LabelMap read_label_map(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open label map file: " + path);
  nlohmann::json arr;
  try {
    in >> arr;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("label map file: ") + e.what());
  }
  if (!arr.is_array()) throw SchemaError("label map file must hold a JSON array: " + path);
  LabelMap label_map;
  for (const auto& item : arr) label_map.codes.push_back(item.get<std::string>());
  return label_map;
}

}  // namespace notecode::ingest
