#include <random>
#include <set>

#include "doctest.h"
#include "test_util.hpp"
#include "textgcn/corpus.hpp"
#include "textgcn/error.hpp"

using namespace textgcn;

namespace {

std::vector<std::string> S(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

}  // namespace

TEST_SUITE("corpus") {

TEST_CASE("tokenize basic sentence") {
  CHECK(tokenize("John feels happy", testutil::plain_preproc()) == S({"john", "feels", "happy"}));
}

TEST_CASE("tokenize empty string") { CHECK(tokenize("", PreprocConfig{}).empty()); }

TEST_CASE("tokenize keeps apostrophes and drops other punctuation") {
  CHECK(tokenize("Don't stop!!", testutil::plain_preproc()) == S({"don't", "stop"}));
  CHECK(tokenize("a,b;c-d\te", testutil::plain_preproc()) == S({"a", "b", "c", "d", "e"}));
}

TEST_CASE("tokenize stopword handling") {
  PreprocConfig p;  // english, stopwords default on
  CHECK(tokenize("the cat is on the mat", p) == S({"cat", "mat"}));
  p.stopwords = {"cat"};
  CHECK(tokenize("the cat is on the mat", p) == S({"the", "is", "on", "the", "mat"}));
  PreprocConfig other;
  other.language = "chinese";
  CHECK(tokenize("the cat", other) == S({"the", "cat"}));
}

TEST_CASE("tokenize switches") {
  PreprocConfig p = testutil::plain_preproc();
  p.lowercase = false;
  CHECK(tokenize("Hello World", p) == S({"Hello", "World"}));
  p.clean_chars = false;
  CHECK(tokenize("a.b c!", p) == S({"a.b", "c!"}));
}

TEST_CASE("tokenize passes UTF-8 through untouched") {
  CHECK(tokenize("\xE4\xBD\xA0\xE5\xA5\xBD \xE4\xB8\x96\xE7\x95\x8C", testutil::plain_preproc()) ==
        S({"\xE4\xBD\xA0\xE5\xA5\xBD", "\xE4\xB8\x96\xE7\x95\x8C"}));
}

TEST_CASE("tokenize is idempotent on its own output") {
  std::mt19937_64 rng(2);
  const std::string alphabet = "abcXYZ 09'.,!?-\t";
  std::uniform_int_distribution<std::size_t> pick(0, alphabet.size() - 1);
  PreprocConfig p;  // everything on
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    for (int k = 0; k < 40; ++k) s += alphabet[pick(rng)];
    auto once = tokenize(s, p);
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    CHECK(tokenize(joined, p) == once);
  }
}

TEST_CASE("load_corpus builds vocabulary and documents") {
  auto dir = testutil::temp_dir("corpus_load");
  testutil::write_file(dir / "meta.tsv", "x1\ttrain\tpos\nx2\ttest\tneg\n");
  testutil::write_file(dir / "text.txt", "A b.\na c\n");
  PreprocConfig p;
  p.remove_stopwords = false;  // "a" is an English stopword
  p.min_word_freq = 1;
  auto c = load_corpus(dir / "meta.tsv", dir / "text.txt", p);
  CHECK(c.num_docs() == 2);
  CHECK(c.vocab_size() == 3);
  CHECK(c.vocabulary.words() == S({"a", "b", "c"}));
  CHECK(c.labels == S({"neg", "pos"}));
  CHECK(c.documents[0].label == 1);
  CHECK(c.documents[1].split == Split::kTest);
  CHECK(c.documents[0].tokens == std::vector<std::uint32_t>{0, 1});
  // vocabulary round trip
  for (std::size_t i = 0; i < c.vocab_size(); ++i) CHECK(c.vocabulary.index(c.vocabulary.word(i)) == i);
  // byte-determinism on reload
  CHECK(load_corpus(dir / "meta.tsv", dir / "text.txt", p) == c);
}

TEST_CASE("load_corpus empty files") {
  auto dir = testutil::temp_dir("corpus_empty");
  testutil::write_file(dir / "meta.tsv", "");
  testutil::write_file(dir / "text.txt", "");
  auto c = load_corpus(dir / "meta.tsv", dir / "text.txt", PreprocConfig{});
  CHECK(c.num_docs() == 0);
  CHECK(c.vocab_size() == 0);
}

TEST_CASE("load_corpus errors") {
  auto dir = testutil::temp_dir("corpus_errors");
  testutil::write_file(dir / "meta.tsv", "a\ttrain\tx\nb\ttrain\ty\nc\ttest\tx\n");
  testutil::write_file(dir / "text.txt", "one\ntwo\n");
  CHECK_THROWS_AS(load_corpus(dir / "meta.tsv", dir / "text.txt", PreprocConfig{}), LoadError);

  testutil::write_file(dir / "meta2.tsv", "a\tdev\tx\n");
  testutil::write_file(dir / "text2.txt", "one\n");
  CHECK_THROWS_AS(load_corpus(dir / "meta2.tsv", dir / "text2.txt", PreprocConfig{}), LoadError);

  testutil::write_file(dir / "meta3.tsv", "a\ttrain\tx\na\ttest\ty\n");
  testutil::write_file(dir / "text3.txt", "one\ntwo\n");
  CHECK_THROWS_AS(load_corpus(dir / "meta3.tsv", dir / "text3.txt", PreprocConfig{}), LoadError);

  CHECK_THROWS_AS(load_corpus(dir / "missing.tsv", dir / "text.txt", PreprocConfig{}), LoadError);
}

TEST_CASE("documents emptied by preprocessing stay with a warning") {
  auto c = testutil::toy_corpus({"alpha beta", "!!! ...", "beta"});
  CHECK(c.num_docs() == 3);
  CHECK(c.documents[1].tokens.empty());
  REQUIRE(c.warnings.size() == 1);
  CHECK(c.warnings[0].find("d1") != std::string::npos);
}

TEST_CASE("min_word_freq drops rare words") {
  PreprocConfig p = testutil::plain_preproc();
  p.min_word_freq = 2;
  std::vector<RawDocument> docs = {{"a", "x y", "l", Split::kTrain}, {"b", "x z", "l", Split::kTest}};
  auto c = build_corpus(docs, p);
  CHECK(c.vocabulary.words() == S({"x"}));
  for (const auto& d : c.documents)
    for (auto t : d.tokens) CHECK(t < c.vocab_size());
}

TEST_CASE("default min_word_freq depends on corpus size") {
  PreprocConfig p;
  CHECK(p.effective_min_word_freq(4999) == 1);
  CHECK(p.effective_min_word_freq(5000) == 5);
  p.min_word_freq = 3;
  CHECK(p.effective_min_word_freq(10) == 3);
}

TEST_CASE("sample_limited_split counts and determinism") {
  std::vector<std::string> texts(200, "w");
  auto c = testutil::toy_corpus(texts, 2);
  auto s = sample_limited_split(c, 0.01, 7);
  CHECK(s.indices_with_split(Split::kTrain).size() == 2);
  CHECK(s.indices_with_split(Split::kTest).size() == 198);
  auto again = sample_limited_split(c, 0.01, 7);
  for (std::size_t i = 0; i < c.num_docs(); ++i) CHECK(again.documents[i].split == s.documents[i].split);

  auto all = sample_limited_split(c, 1.0, 3);
  CHECK(all.indices_with_split(Split::kTrain).size() == 200);

  CHECK_THROWS_AS(sample_limited_split(c, 0.0, 1), ArgumentError);
  CHECK_THROWS_AS(sample_limited_split(c, 1.5, 1), ArgumentError);
}

TEST_CASE("stratified sampling covers every label when feasible") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const int n_labels = 2 + trial % 4;
    std::vector<std::string> texts(60, "w");
    auto c = testutil::toy_corpus(texts, n_labels);
    auto s = sample_limited_split(c, 0.07, rng());
    std::set<std::uint32_t> covered;
    for (auto i : s.indices_with_split(Split::kTrain)) covered.insert(s.documents[i].label);
    CHECK(s.indices_with_split(Split::kTrain).size() == 5);  // ceil(0.07 * 60) = ceil(4.2)
    CHECK(covered.size() == static_cast<std::size_t>(std::min(n_labels, 5)));
  }
}

}  // TEST_SUITE
