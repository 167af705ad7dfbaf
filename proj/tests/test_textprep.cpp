#include "notecode/textprep.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "test_util.hpp"

using namespace notecode;
using namespace notecode::textprep;
using testutil::TempDir;

TEST_CASE("fixup lowercases, strips punctuation and collapses whitespace") {
  CHECK(fixup("Pt c/o SOB; BP 120/80.") == "pt c o sob bp 120 80");
  CHECK(fixup("a\t b\n\n  c ") == "a b c");
  CHECK(fixup("") == "");
  CHECK(fixup("   \n\t ") == "");
}

TEST_CASE("fixup replaces de-identification spans with a single marker") {
  CHECK(fixup("Seen by [**First Name8 (NamePattern2) **] on [**2137-5-9**].") ==
        "seen by xxdeid on xxdeid");
  // An unterminated opener has no span to replace; its brackets dissolve.
  CHECK(fixup("start [** trailing") == "start trailing");
}

TEST_CASE("fixup is idempotent") {
  const std::string raw = "Dr. [**Last Name**] noted: BP 120/80, HR 72!";
  const std::string once = fixup(raw);
  CHECK(fixup(once) == once);
}

TEST_CASE("fixup can drop stopwords") {
  CHECK(fixup("The patient is stable.", true) == "patient stable");
  CHECK(fixup("The patient is stable.", false) == "the patient is stable");
  CHECK(default_stopwords().count("the") == 1);
  CHECK(default_stopwords().count("patient") == 0);
}

TEST_CASE("tokenize splits cleaned text on spaces") {
  CHECK(tokenize("pt c o sob") == std::vector<std::string>{"pt", "c", "o", "sob"});
  CHECK(tokenize("").empty());
}

TEST_CASE("build_vocab orders by frequency then token and reserves specials") {
  // counts: b 3, a 3, c 2, d 1
  std::vector<std::vector<std::string>> streams = {
      {"b", "a", "b", "c"}, {"a", "b", "a", "c", "d"}};
  Vocabulary vocab = build_vocab(streams, 60000, 2);
  CHECK(vocab.itos == std::vector<std::string>{kUnkToken, kPadToken, "a", "b", "c"});
  CHECK(vocab.stoi(kUnkToken) == 0);
  CHECK(vocab.stoi(kPadToken) == 1);
  CHECK(vocab.stoi("a") == 2);
  CHECK(vocab.stoi("d") == 0);      // below min_freq -> unknown
  CHECK(vocab.stoi("absent") == 0); // never seen -> unknown
  CHECK(vocab.size() == 5);
}

TEST_CASE("build_vocab min_freq boundary keeps exactly the threshold") {
  std::vector<std::vector<std::string>> streams = {{"x", "x", "y"}};
  Vocabulary vocab = build_vocab(streams, 60000, 2);
  CHECK(vocab.stoi("x") == 2);
  CHECK(vocab.stoi("y") == 0);
}

TEST_CASE("build_vocab caps the size at max_size plus the two specials") {
  // 70000 distinct tokens, each twice; tie-broken lexicographically the
  // smallest 60000 survive the cap.
  std::vector<std::vector<std::string>> streams(1);
  streams[0].reserve(140000);
  for (int i = 0; i < 70000; ++i) {
    char name[16];
    std::snprintf(name, sizeof(name), "t%05d", i);
    streams[0].push_back(name);
    streams[0].push_back(name);
  }
  Vocabulary vocab = build_vocab(streams, 60000, 2);
  CHECK(vocab.size() == 60002);
  CHECK(vocab.itos[2] == "t00000");
  CHECK(vocab.stoi("t59999") == 60001);
  CHECK(vocab.stoi("t60000") == 0);
}

TEST_CASE("build_vocab validates its knobs") {
  CHECK_THROWS_AS(build_vocab({{"a"}}, 0, 1), ConfigError);
  CHECK_THROWS_AS(build_vocab({{"a"}}, 10, 0), ConfigError);
}

TEST_CASE("numericalize maps unknowns to id 0 and round-trips known tokens") {
  Vocabulary vocab = build_vocab({{"alpha", "alpha", "beta", "beta"}}, 100, 2);
  std::vector<std::string> tokens = {"alpha", "mystery", "beta"};
  std::vector<int> ids = numericalize(tokens, vocab);
  CHECK(ids == std::vector<int>{2, 0, 3});
  CHECK(denumericalize(ids, vocab) ==
        std::vector<std::string>{"alpha", kUnkToken, "beta"});

  // Full round trip when every token is in-vocabulary.
  std::vector<std::string> known = {"beta", "alpha", "alpha"};
  CHECK(denumericalize(numericalize(known, vocab), vocab) == known);

  CHECK_THROWS_AS(denumericalize({99}, vocab), IndexError);
  CHECK_THROWS_AS(denumericalize({-1}, vocab), IndexError);
}

TEST_CASE("vocab files round-trip and keep the fingerprint") {
  TempDir dir("textprep-vocab");
  Vocabulary vocab = build_vocab({{"one", "one", "two", "two", "two"}}, 100, 2);
  const std::string path = dir.file("vocab.txt");
  save_vocab(vocab, path);
  Vocabulary loaded = load_vocab(path);
  CHECK(loaded.itos == vocab.itos);
  CHECK(loaded.fingerprint() == vocab.fingerprint());

  const std::string bad = dir.file("bad.txt");
  testutil::write_file(bad, "nope\nxxpad\n");
  CHECK_THROWS_AS(load_vocab(bad), ParseError);
  CHECK_THROWS_AS(load_vocab(dir.file("missing.txt")), IoError);
}

TEST_CASE("fingerprints differ when any token differs") {
  const std::uint64_t base = fingerprint_tokens({"xxunk", "xxpad", "a"});
  CHECK(fingerprint_tokens({"xxunk", "xxpad", "a"}) == base);
  CHECK(fingerprint_tokens({"xxunk", "xxpad", "b"}) != base);
  CHECK(fingerprint_tokens({"xxunk", "xxpad"}) != base);
}

TEST_CASE("tfidf matches hand-computed values") {
  // d0 = [a b a], d1 = [b c]; df: a 1, b 2, c 1; N = 2.
  std::vector<std::vector<std::string>> docs = {{"a", "b", "a"}, {"b", "c"}};
  Vocabulary vocab = build_vocab(docs, 100, 1);
  TfidfMatrix matrix = tfidf(docs, vocab);
  CHECK(matrix.n_docs == 2);
  REQUIRE(matrix.entries.size() == 4);

  const double idf_rare = std::log(3.0 / 2.0) + 1.0;  // df 1
  const double idf_both = std::log(3.0 / 3.0) + 1.0;  // df 2 -> exactly 1

  CHECK(matrix.entries[0].doc == 0);
  CHECK(vocab.itos[static_cast<std::size_t>(matrix.entries[0].term)] == "a");
  CHECK(matrix.entries[0].value == doctest::Approx(2.0 * idf_rare).epsilon(1e-12));

  CHECK(matrix.entries[1].doc == 0);
  CHECK(vocab.itos[static_cast<std::size_t>(matrix.entries[1].term)] == "b");
  CHECK(matrix.entries[1].value == doctest::Approx(idf_both).epsilon(1e-12));

  CHECK(matrix.entries[2].doc == 1);
  CHECK(vocab.itos[static_cast<std::size_t>(matrix.entries[2].term)] == "b");
  CHECK(matrix.entries[2].value == doctest::Approx(idf_both).epsilon(1e-12));

  CHECK(matrix.entries[3].doc == 1);
  CHECK(vocab.itos[static_cast<std::size_t>(matrix.entries[3].term)] == "c");
  CHECK(matrix.entries[3].value == doctest::Approx(idf_rare).epsilon(1e-12));
}

TEST_CASE("tfidf ignores out-of-vocabulary tokens and validates input") {
  Vocabulary vocab = build_vocab({{"a", "a"}}, 100, 2);
  TfidfMatrix matrix = tfidf({{"zzz", "a"}}, vocab);
  REQUIRE(matrix.entries.size() == 1);
  CHECK(vocab.itos[static_cast<std::size_t>(matrix.entries[0].term)] == "a");
  // A term appearing in the only document: tf 1, idf ln(2/2)+1 = 1.
  CHECK(matrix.entries[0].value == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(tfidf({}, vocab), DataError);
}

TEST_CASE("export_tfidf spells out the term and six decimals") {
  TempDir dir("textprep-tfidf");
  std::vector<std::vector<std::string>> docs = {{"a", "b", "a"}, {"b", "c"}};
  Vocabulary vocab = build_vocab(docs, 100, 1);
  const std::string path = dir.file("tfidf.csv");
  export_tfidf(tfidf(docs, vocab), vocab, path);
  CHECK(testutil::read_file(path) ==
        "doc_index,term,value\n"
        "0,a,2.810930\n"
        "0,b,1.000000\n"
        "1,b,1.000000\n"
        "1,c,1.405465\n");
}
