#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "bgmhan/bpe.hpp"
#include "bgmhan/errors.hpp"
#include "bgmhan/prng.hpp"
#include "bpe_oracle.hpp"
#include "doctest.h"

using namespace bgmhan;

namespace {

std::string random_text(Rng& rng, const std::string& alphabet, std::size_t max_len) {
  const std::size_t len = rng.index(max_len + 1);
  std::string out;
  for (std::size_t i = 0; i < len; ++i) out += alphabet[rng.index(alphabet.size())];
  return out;
}

std::string temp_path(const std::string& stem) {
  return "bgmhan_test_" + stem + ".vocab";
}

struct FileGuard {
  std::string path;
  ~FileGuard() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("repeated run merges once under non-overlapping counting") {
  // "aaaa" holds two non-overlapping (a,a) occurrences, enough to merge.
  BpeVocab v = train_bpe("aaaa", 2);
  REQUIRE(v.merges().size() == 1);
  CHECK(v.merges()[0] == std::make_pair(std::string("a"), std::string("a")));
  std::vector<std::string> expect = {"<unk>", "NaN", "a", "aa"};
  CHECK(v.symbols() == expect);
}

TEST_CASE("triple run counts a single pair and exhausts early") {
  // "aaa" holds only one non-overlapping (a,a) occurrence, below the
  // frequency-2 bar, so no merge happens even though the budget allows one.
  BpeVocab v = train_bpe("aaa", 2);
  CHECK(v.merges().empty());
  CHECK(v.size() == 3);  // <unk>, NaN, a
}

TEST_CASE("alternating corpus merges the frequent ordered pair") {
  BpeVocab v = train_bpe("abab", 3);
  REQUIRE(v.merges().size() == 1);
  CHECK(v.merges()[0] == std::make_pair(std::string("a"), std::string("b")));
  TokenSequence seq = encode("abab", v);
  REQUIRE(seq.ids.size() == 2);
  CHECK(seq.ids[0] == seq.ids[1]);
  CHECK(decode(seq, v) == "abab");
}

TEST_CASE("target equal to base alphabet learns zero merges") {
  BpeVocab v = train_bpe("abc cba", 4);  // base chars: space, a, b, c
  CHECK(v.merges().empty());
  CHECK(v.size() == 6);  // 2 reserved + 4 base
}

TEST_CASE("training rejects empty corpus and undersized target") {
  CHECK_THROWS_AS(train_bpe("", 5), TrainError);
  CHECK_THROWS_AS(train_bpe("ab", 1), ConfigError);
}

TEST_CASE("encode basics") {
  BpeVocab v = train_bpe("abab", 3);
  CHECK(encode("", v).ids.empty());

  TokenSequence ab = encode("ab", v);
  REQUIRE(ab.ids.size() == 1);
  CHECK(v.symbols()[static_cast<std::size_t>(ab.ids[0])] == "ab");

  TokenSequence unk = encode("z", v);
  REQUIRE(unk.ids.size() == 1);
  CHECK(unk.ids[0] == BpeVocab::kUnkId);
}

TEST_CASE("the word NaN is one reserved token") {
  BpeVocab v = train_bpe("Nanny and a NaN value", 30);
  TokenSequence seq = encode("NaN", v);
  REQUIRE(seq.ids.size() == 1);
  CHECK(seq.ids[0] == BpeVocab::kNanId);
  CHECK(decode(seq, v) == "NaN");
  // Longer words containing the letters go through the normal path.
  CHECK(encode("NaNs", v).ids.size() > 1);
}

TEST_CASE("decode round-trips and rejects bad ids") {
  BpeVocab v = train_bpe("hello world hold the door", 20);
  TokenSequence seq = encode("hello world", v);
  CHECK(decode(seq, v) == "hello world");
  CHECK(decode(TokenSequence{}, v).empty());

  TokenSequence bad;
  bad.ids = {static_cast<int>(v.size())};
  CHECK_THROWS_AS(decode(bad, v), ContractError);
}

TEST_CASE("whitespace never participates in merges") {
  // Four "a b" boundaries would be the top pair if spaces could merge.
  BpeVocab v = train_bpe("a ba ba ba b", 20);
  for (const auto& [l, r] : v.merges()) {
    CHECK(l.find(' ') == std::string::npos);
    CHECK(r.find(' ') == std::string::npos);
  }
  TokenSequence seq = encode("a ba ba ba b", v);
  CHECK(decode(seq, v) == "a ba ba ba b");
}

TEST_CASE("merge list is a valid derivation") {
  BpeVocab v = train_bpe("the cat sat on the mat with the other cat", 15);
  std::set<std::string> known;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i >= 2 && v.symbols()[i].size() == 1) known.insert(v.symbols()[i]);
  }
  for (const auto& [l, r] : v.merges()) {
    CHECK(known.count(l) == 1);
    CHECK(known.count(r) == 1);
    known.insert(l + r);
  }
  for (std::size_t i = 2; i < v.size(); ++i) CHECK(known.count(v.symbols()[i]) == 1);
}

TEST_CASE("matches the naive reference on random corpora") {
  Rng rng(2024);
  const std::string letters = "abcde";
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n_letters = 2 + rng.index(4);
    std::string alphabet = letters.substr(0, n_letters) + " ";
    std::string corpus;
    do {
      corpus = random_text(rng, alphabet, 200);
    } while (corpus.find_first_not_of(' ') == std::string::npos);

    std::set<char> base(corpus.begin(), corpus.end());
    const std::size_t target = base.size() + rng.index(11);

    OracleBpe expect = oracle_train_bpe(corpus, target);
    BpeVocab got = train_bpe(corpus, target);

    REQUIRE(got.merges() == expect.merges);
    std::set<std::string> got_symbols(got.symbols().begin() + 2, got.symbols().end());
    REQUIRE(got_symbols == expect.vocab);
  }
}

TEST_CASE("1000 in-alphabet strings round-trip exactly") {
  Rng rng(7);
  const std::string alphabet = "abcdef .";
  std::string corpus = random_text(rng, alphabet, 500) + alphabet;  // cover every char
  BpeVocab v = train_bpe(corpus, corpus.size());

  for (int trial = 0; trial < 1000; ++trial) {
    const std::string text = random_text(rng, alphabet, 60);
    TokenSequence seq = encode(text, v);
    CHECK(decode(seq, v) == text);
  }
}

TEST_CASE("token count shrinks monotonically with vocabulary budget") {
  Rng rng(99);
  const std::string alphabet = "abcd ";
  const std::string corpus = random_text(rng, alphabet, 400) + alphabet;
  const std::string text = random_text(rng, alphabet, 200);

  std::set<char> base(corpus.begin(), corpus.end());
  std::size_t prev = static_cast<std::size_t>(-1);
  for (std::size_t extra = 0; extra <= 50; ++extra) {
    BpeVocab v = train_bpe(corpus, base.size() + extra);
    const std::size_t count = encode(text, v).ids.size();
    CHECK(count <= prev);
    prev = count;
  }
}

TEST_CASE("encode is deterministic") {
  BpeVocab v = train_bpe("deterministic encode check check", 20);
  TokenSequence a = encode("deterministic check", v);
  TokenSequence b = encode("deterministic check", v);
  CHECK(a.ids == b.ids);
}

TEST_CASE("char vocabulary has no merges and encodes per character") {
  BpeVocab v = char_vocab("abab");
  CHECK(v.merges().empty());
  TokenSequence seq = encode("abab", v);
  CHECK(seq.ids.size() == 4);
  CHECK(decode(seq, v) == "abab");
}

TEST_CASE("save and load reproduce encode exactly") {
  FileGuard guard{temp_path("roundtrip")};
  Rng rng(31);
  const std::string alphabet = "abcde ";
  const std::string corpus = random_text(rng, alphabet, 300) + alphabet;
  BpeVocab v = train_bpe(corpus, corpus.size());
  save_vocab(v, guard.path);
  BpeVocab loaded = load_vocab(guard.path);

  CHECK(loaded.symbols() == v.symbols());
  CHECK(loaded.merges() == v.merges());
  for (int trial = 0; trial < 100; ++trial) {
    const std::string text = random_text(rng, alphabet, 80);
    CHECK(encode(text, loaded).ids == encode(text, v).ids);
  }
}

TEST_CASE("vocab file with zero merges loads as base characters") {
  FileGuard guard{temp_path("nomerge")};
  {
    std::ofstream out(guard.path);
    out << "bpe-vocab v1\ntarget 2\nsymbols 4\n<unk>\nNaN\na\nb\nmerges 0\n";
  }
  BpeVocab v = load_vocab(guard.path);
  CHECK(v.merges().empty());
  CHECK(v.size() == 4);
  CHECK(encode("ab", v).ids.size() == 2);
}

TEST_CASE("vocab file validation failures carry line numbers") {
  FileGuard guard{temp_path("bad")};

  auto write_file = [&](const std::string& body) {
    std::ofstream out(guard.path);
    out << body;
  };

  write_file("bpe-vocab v1\ntarget 3\nsymbols 4\n<unk>\nNaN\na\nb\nmerges 1\na q\n");
  try {
    load_vocab(guard.path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    std::string msg = e.what();
    CHECK(msg.find("line 9") != std::string::npos);
    CHECK(msg.find("unknown symbol") != std::string::npos);
  }

  write_file("bpe-vocab v1\ntarget 3\nsymbols 4\n<unk>\nNaN\na\nb\nmerges 1\na b\n");
  CHECK_THROWS_AS(load_vocab(guard.path), ParseError);  // "ab" missing from table

  write_file("not a vocab\n");
  CHECK_THROWS_AS(load_vocab(guard.path), ParseError);

  write_file("bpe-vocab v1\ntarget 2\nsymbols 5\n<unk>\nNaN\na\n");
  CHECK_THROWS_AS(load_vocab(guard.path), ParseError);  // truncated symbol table

  CHECK_THROWS_AS(load_vocab("does_not_exist.vocab"), IoError);
}

TEST_CASE("whitespace symbols survive the file format") {
  FileGuard guard{temp_path("ws")};
  BpeVocab v = train_bpe("one two\tthree\nfour", 30);
  save_vocab(v, guard.path);
  BpeVocab loaded = load_vocab(guard.path);
  const std::string text = "one\ttwo three";
  CHECK(decode(encode(text, loaded), loaded) == text);
  CHECK(encode(text, loaded).ids == encode(text, v).ids);
}
