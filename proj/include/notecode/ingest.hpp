#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "notecode/errors.hpp"

namespace notecode::ingest {

enum class CodeKind { diagnosis, procedure };

std::string to_string(CodeKind kind);
CodeKind code_kind_from_string(const std::string& s);

struct NoteRecord {
  long long subject_id = 0;
  long long hadm_id = 0;  // admission key, > 0
  std::string category;
  std::string text;
};

struct CodeAssignment {
  long long subject_id = 0;
  long long hadm_id = 0;
  int seq_num = 0;  // 1 = primary
  std::string code;
  CodeKind kind = CodeKind::diagnosis;
};

struct LabelMap {
  std::vector<std::string> codes;  // ordered; index_of(codes[i]) == i

  int index_of(const std::string& code) const;
  int size() const { return static_cast<int>(codes.size()); }
};

struct Example {
  long long hadm_id = 0;
  std::string text;
  int label = 0;  // in [0, K)
};

struct LabeledCorpus {
  std::vector<Example> examples;
  LabelMap label_map;
  CodeKind kind = CodeKind::diagnosis;
};

// ---------------------------------------------------------------------------
// CSV parsing (RFC-4180: quoted cells, "" escapes, embedded newlines)
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Case-insensitive header lookup; -1 when absent.
  int column(const std::string& name) const;
};

CsvTable read_csv(const std::string& path);

// ---------------------------------------------------------------------------
// Loaders
// ---------------------------------------------------------------------------

struct NotesLoadResult {
  std::vector<NoteRecord> records;
  int dropped_null_key = 0;  // rows with an empty subject/admission key
};

struct CodesLoadResult {
  std::vector<CodeAssignment> records;
  int dropped_null_key = 0;
  int dropped_empty_code = 0;
};

// Required columns (case-insensitive): SUBJECT_ID, HADM_ID, TEXT.
// Optional: CATEGORY. Missing required column -> SchemaError naming it.
NotesLoadResult load_notes(const std::string& path);

// Required columns: SUBJECT_ID, HADM_ID, SEQ_NUM, ICD9_CODE.
CodesLoadResult load_codes(const std::string& path, CodeKind kind);

// ---------------------------------------------------------------------------
// Label selection and joining
// ---------------------------------------------------------------------------

struct FilterPrimaryResult {
  std::vector<CodeAssignment> primaries;  // seq_num == 1, one per admission
  int duplicates_dropped = 0;             // extra seq 1 rows beyond the first
};

FilterPrimaryResult filter_primary(const std::vector<CodeAssignment>& codes);

struct TopCodesResult {
  std::vector<std::string> codes;  // descending count, ties by code ascending
  bool fewer_than_k = false;
};

TopCodesResult top_k_codes(const std::vector<CodeAssignment>& primaries, int k);

struct JoinResult {
  LabeledCorpus corpus;
  int dropped_no_primary = 0;     // notes whose admission has no primary code
  int dropped_not_in_top_k = 0;   // admission's code outside the label set
  int dropped_empty_text = 0;
};

// Inner join of notes with primary codes on (subject_id, hadm_id); each
// surviving note becomes one example labeled by its admission's code.
// Zero surviving examples -> DataError.
JoinResult join_and_filter(const std::vector<NoteRecord>& notes,
                           const std::vector<CodeAssignment>& primaries,
                           const std::vector<std::string>& top_codes,
                           CodeKind kind);

// Seeded uniform shuffle then prefix/suffix cut. Test size is
// round(n * test_fraction) clamped to [1, n-1]; n < 2 -> DataError.
std::pair<LabeledCorpus, LabeledCorpus> split(const LabeledCorpus& corpus,
                                              double test_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Corpus file formats
// ---------------------------------------------------------------------------

// One JSON object per line: {"hadm_id":..., "label":..., "text":...}.
void write_corpus(const LabeledCorpus& corpus, const std::string& path);
LabeledCorpus read_corpus(const std::string& path, const LabelMap& label_map, CodeKind kind);

// JSON array of code strings.
void write_label_map(const LabelMap& label_map, const std::string& path);
LabelMap read_label_map(const std::string& path);

}  // namespace notecode::ingest
