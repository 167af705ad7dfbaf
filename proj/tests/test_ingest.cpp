#include "notecode/ingest.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <doctest.h>

#include "test_util.hpp"

using namespace notecode;
using namespace notecode::ingest;
using testutil::TempDir;
using testutil::write_file;

namespace {

CodeAssignment code(long long subject, long long hadm, int seq, const std::string& c,
                    CodeKind kind = CodeKind::diagnosis) {
  return CodeAssignment{subject, hadm, seq, c, kind};
}

NoteRecord note(long long subject, long long hadm, const std::string& text) {
  return NoteRecord{subject, hadm, "", text};
}

// Multiset view of a corpus for the split-partition checks.
std::multiset<std::pair<long long, std::string>> members(const LabeledCorpus& corpus) {
  std::multiset<std::pair<long long, std::string>> out;
  for (const auto& ex : corpus.examples) out.insert({ex.hadm_id, ex.text});
  return out;
}

}  // namespace

TEST_CASE("read_csv handles quoting, escapes and embedded newlines") {
  TempDir dir("ingest-csv");
  const std::string path = dir.file("t.csv");
  write_file(path,
             "A,B\r\n"
             "1,\"line one\nline two\"\n"
             "2,\"he said \"\"hi\"\"\"\n");
  CsvTable table = read_csv(path);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0][1] == "line one\nline two");
  CHECK(table.rows[1][1] == "he said \"hi\"");
  CHECK(table.column("a") == 0);  // case-insensitive
  CHECK(table.column("missing") == -1);
}

TEST_CASE("read_csv rejects malformed input") {
  TempDir dir("ingest-csv-bad");
  const std::string unterminated = dir.file("u.csv");
  write_file(unterminated, "A,B\n1,\"oops\n");
  CHECK_THROWS_AS(read_csv(unterminated), ParseError);
  CHECK_THROWS_AS(read_csv(dir.file("absent.csv")), IoError);
}

TEST_CASE("load_notes parses well-formed files") {
  TempDir dir("ingest-notes");
  const std::string path = dir.file("notes.csv");

  SUBCASE("three rows give three records") {
    write_file(path,
               "SUBJECT_ID,HADM_ID,CATEGORY,TEXT\n"
               "1,100,Discharge,\"chest pain\"\n"
               "2,200,Discharge,\"fever\"\n"
               "3,300,Nursing,\"cough\"\n");
    NotesLoadResult result = load_notes(path);
    REQUIRE(result.records.size() == 3);
    CHECK(result.records[0].subject_id == 1);
    CHECK(result.records[0].hadm_id == 100);
    CHECK(result.records[2].category == "Nursing");
    CHECK(result.dropped_null_key == 0);
  }

  SUBCASE("embedded newline inside a quoted TEXT cell stays one record") {
    write_file(path,
               "SUBJECT_ID,HADM_ID,TEXT\n"
               "1,100,\"first line\nsecond line\"\n");
    NotesLoadResult result = load_notes(path);
    REQUIRE(result.records.size() == 1);
    CHECK(result.records[0].text == "first line\nsecond line");
  }

  SUBCASE("header match is case-insensitive") {
    write_file(path, "subject_id,hadm_id,text\n1,100,hello\n");
    CHECK(load_notes(path).records.size() == 1);
  }

  SUBCASE("rows with a null admission key are dropped and counted") {
    write_file(path,
               "SUBJECT_ID,HADM_ID,TEXT\n"
               "1,100,kept\n"
               "2,,dropped\n");
    NotesLoadResult result = load_notes(path);
    CHECK(result.records.size() == 1);
    CHECK(result.dropped_null_key == 1);
  }
}

TEST_CASE("load_notes names the missing column") {
  TempDir dir("ingest-notes-schema");
  const std::string path = dir.file("notes.csv");
  write_file(path, "SUBJECT_ID,TEXT\n1,hello\n");
  try {
    load_notes(path);
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("HADM_ID") != std::string::npos);
  }
}

TEST_CASE("load_codes parses assignments") {
  TempDir dir("ingest-codes");
  const std::string path = dir.file("codes.csv");

  SUBCASE("a primary diagnosis row") {
    write_file(path, "SUBJECT_ID,HADM_ID,SEQ_NUM,ICD9_CODE\n2,100,1,4019\n");
    CodesLoadResult result = load_codes(path, CodeKind::diagnosis);
    REQUIRE(result.records.size() == 1);
    CHECK(result.records[0].subject_id == 2);
    CHECK(result.records[0].hadm_id == 100);
    CHECK(result.records[0].seq_num == 1);
    CHECK(result.records[0].code == "4019");
    CHECK(result.records[0].kind == CodeKind::diagnosis);
  }

  SUBCASE("unparsable seq_num reports the row number") {
    write_file(path, "SUBJECT_ID,HADM_ID,SEQ_NUM,ICD9_CODE\n2,100,abc,4019\n");
    try {
      load_codes(path, CodeKind::diagnosis);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("row") != std::string::npos);
    }
  }

  SUBCASE("empty file with header gives an empty list") {
    write_file(path, "SUBJECT_ID,HADM_ID,SEQ_NUM,ICD9_CODE\n");
    CHECK(load_codes(path, CodeKind::procedure).records.empty());
  }
}

TEST_CASE("filter_primary keeps exactly the seq 1 assignments") {
  SUBCASE("drops non-primary rows") {
    auto result = filter_primary({code(1, 10, 1, "A"), code(1, 10, 2, "B")});
    REQUIRE(result.primaries.size() == 1);
    CHECK(result.primaries[0].code == "A");
    CHECK(result.duplicates_dropped == 0);
  }

  SUBCASE("empty input, empty output") {
    CHECK(filter_primary({}).primaries.empty());
  }

  SUBCASE("duplicate seq 1 rows keep the first in file order") {
    auto result = filter_primary({code(1, 10, 1, "A"), code(1, 10, 1, "B")});
    REQUIRE(result.primaries.size() == 1);
    CHECK(result.primaries[0].code == "A");
    CHECK(result.duplicates_dropped == 1);
  }
}

TEST_CASE("top_k_codes orders by count then code") {
  // counts {A:5, B:3, C:3, D:1}
  std::vector<CodeAssignment> primaries;
  long long hadm = 1;
  for (int i = 0; i < 5; ++i) primaries.push_back(code(1, hadm++, 1, "A"));
  for (int i = 0; i < 3; ++i) primaries.push_back(code(1, hadm++, 1, "B"));
  for (int i = 0; i < 3; ++i) primaries.push_back(code(1, hadm++, 1, "C"));
  primaries.push_back(code(1, hadm++, 1, "D"));

  SUBCASE("k=2 picks the top counts, ties by code ascending") {
    auto result = top_k_codes(primaries, 2);
    CHECK(result.codes == std::vector<std::string>{"A", "B"});
    CHECK_FALSE(result.fewer_than_k);
  }

  SUBCASE("k=1 with a single code returns it") {
    auto result = top_k_codes({code(1, 1, 1, "X")}, 1);
    CHECK(result.codes == std::vector<std::string>{"X"});
  }

  SUBCASE("pure tie breaks lexicographically") {
    auto result = top_k_codes({code(1, 1, 1, "B"), code(1, 2, 1, "B"),
                               code(1, 3, 1, "A"), code(1, 4, 1, "A")},
                              2);
    CHECK(result.codes == std::vector<std::string>{"A", "B"});
  }

  SUBCASE("fewer distinct codes than k returns all with a warning flag") {
    auto result = top_k_codes(primaries, 10);
    CHECK(result.codes.size() == 4);
    CHECK(result.fewer_than_k);
  }

  SUBCASE("output is invariant under input permutation") {
    auto baseline = top_k_codes(primaries, 3);
    std::vector<CodeAssignment> reversed(primaries.rbegin(), primaries.rend());
    CHECK(top_k_codes(reversed, 3).codes == baseline.codes);
  }
}

TEST_CASE("join_and_filter labels notes by their admission's primary code") {
  const std::vector<std::string> top_codes = {"A", "B"};

  SUBCASE("two notes of one admission become two examples with the same label") {
    JoinResult result = join_and_filter({note(1, 10, "first note"), note(1, 10, "second note")},
                                        {code(1, 10, 1, "B")}, top_codes, CodeKind::diagnosis);
    REQUIRE(result.corpus.examples.size() == 2);
    CHECK(result.corpus.examples[0].label == 1);
    CHECK(result.corpus.examples[1].label == 1);
    CHECK(result.corpus.label_map.codes == top_codes);
  }

  SUBCASE("notes without a primary code row are excluded") {
    JoinResult result = join_and_filter({note(1, 10, "kept"), note(2, 20, "orphan")},
                                        {code(1, 10, 1, "A")}, top_codes, CodeKind::diagnosis);
    CHECK(result.corpus.examples.size() == 1);
    CHECK(result.dropped_no_primary == 1);
  }

  SUBCASE("codes outside the label set are excluded") {
    JoinResult result = join_and_filter({note(1, 10, "kept"), note(2, 20, "rare code")},
                                        {code(1, 10, 1, "A"), code(2, 20, 1, "Z")}, top_codes,
                                        CodeKind::diagnosis);
    CHECK(result.corpus.examples.size() == 1);
    CHECK(result.dropped_not_in_top_k == 1);
  }

  SUBCASE("empty-text notes are dropped and counted") {
    JoinResult result = join_and_filter({note(1, 10, ""), note(2, 20, "kept")},
                                        {code(1, 10, 1, "A"), code(2, 20, 1, "B")}, top_codes,
                                        CodeKind::diagnosis);
    CHECK(result.corpus.examples.size() == 1);
    CHECK(result.dropped_empty_text == 1);
  }

  SUBCASE("zero survivors is an error") {
    CHECK_THROWS_AS(join_and_filter({note(1, 10, "x")}, {code(2, 20, 1, "A")}, top_codes,
                                    CodeKind::diagnosis),
                    DataError);
  }

  SUBCASE("labels are never fabricated") {
    JoinResult result = join_and_filter(
        {note(1, 10, "a"), note(2, 20, "b"), note(3, 30, "c")},
        {code(1, 10, 1, "A"), code(2, 20, 1, "B"), code(3, 30, 1, "A")}, top_codes,
        CodeKind::diagnosis);
    for (const auto& ex : result.corpus.examples) {
      REQUIRE(ex.label >= 0);
      REQUIRE(ex.label < static_cast<int>(top_codes.size()));
      const std::string& c = result.corpus.label_map.codes[static_cast<std::size_t>(ex.label)];
      CHECK(std::find(top_codes.begin(), top_codes.end(), c) != top_codes.end());
    }
  }
}

TEST_CASE("split cuts a seeded shuffle") {
  LabeledCorpus corpus;
  corpus.label_map.codes = {"A", "B"};
  for (int i = 0; i < 10; ++i)
    corpus.examples.push_back(Example{100 + i, "doc " + std::to_string(i), i % 2});

  SUBCASE("n=10 at fraction 0.2 gives sizes (8, 2)") {
    auto [train, test] = split(corpus, 0.2, 42);
    CHECK(train.examples.size() == 8);
    CHECK(test.examples.size() == 2);
  }

  SUBCASE("fraction 0.99 clamps to (1, 9)") {
    auto [train, test] = split(corpus, 0.99, 42);
    CHECK(train.examples.size() == 1);
    CHECK(test.examples.size() == 9);
  }

  SUBCASE("same seed reproduces identical member lists") {
    auto [train1, test1] = split(corpus, 0.3, 7);
    auto [train2, test2] = split(corpus, 0.3, 7);
    REQUIRE(train1.examples.size() == train2.examples.size());
    for (std::size_t i = 0; i < train1.examples.size(); ++i) {
      CHECK(train1.examples[i].hadm_id == train2.examples[i].hadm_id);
      CHECK(train1.examples[i].text == train2.examples[i].text);
    }
  }

  SUBCASE("train and test partition the corpus") {
    auto [train, test] = split(corpus, 0.3, 99);
    auto all = members(train);
    for (const auto& m : members(test)) all.insert(m);
    CHECK(all == members(corpus));
    // Disjointness: hadm_ids are unique here, so set sizes add up.
    std::set<long long> train_ids, test_ids;
    for (const auto& ex : train.examples) train_ids.insert(ex.hadm_id);
    for (const auto& ex : test.examples) test_ids.insert(ex.hadm_id);
    for (long long id : test_ids) CHECK(train_ids.count(id) == 0);
  }

  SUBCASE("per-label counts are conserved") {
    auto [train, test] = split(corpus, 0.4, 5);
    std::map<int, int> counts;
    for (const auto& ex : train.examples) counts[ex.label]++;
    for (const auto& ex : test.examples) counts[ex.label]++;
    CHECK(counts[0] == 5);
    CHECK(counts[1] == 5);
  }

  SUBCASE("fewer than two examples is an error") {
    LabeledCorpus tiny;
    tiny.label_map.codes = {"A"};
    tiny.examples.push_back(Example{1, "only", 0});
    CHECK_THROWS_AS(split(tiny, 0.5, 1), DataError);
  }
}

TEST_CASE("corpus and label map files round-trip") {
  TempDir dir("ingest-files");
  LabeledCorpus corpus;
  corpus.label_map.codes = {"4019", "42731"};
  corpus.examples.push_back(Example{100, "chest pain \"quoted\"\nwith newline", 0});
  corpus.examples.push_back(Example{200, "fever", 1});

  const std::string corpus_path = dir.file("corpus.jsonl");
  const std::string map_path = dir.file("label_map.json");
  write_corpus(corpus, corpus_path);
  write_label_map(corpus.label_map, map_path);

  LabelMap label_map = read_label_map(map_path);
  CHECK(label_map.codes == corpus.label_map.codes);
  CHECK(label_map.index_of("42731") == 1);
  CHECK(label_map.index_of("nope") == -1);

  LabeledCorpus loaded = read_corpus(corpus_path, label_map, CodeKind::diagnosis);
  REQUIRE(loaded.examples.size() == 2);
  CHECK(loaded.examples[0].hadm_id == 100);
  CHECK(loaded.examples[0].text == corpus.examples[0].text);
  CHECK(loaded.examples[0].label == 0);
  CHECK(loaded.examples[1].label == 1);

  // Byte determinism of the writers.
  const std::string again = dir.file("corpus2.jsonl");
  write_corpus(corpus, again);
  CHECK(testutil::read_file(corpus_path) == testutil::read_file(again));
}
