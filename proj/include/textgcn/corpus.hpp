#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace textgcn {

enum class Split { kTrain, kTest };

std::string_view to_string(Split s);
Split parse_split(std::string_view token);  // throws LoadError

struct PreprocConfig {
  bool lowercase = true;
  bool clean_chars = true;
  // Unset means "decide from the language": on for English, off otherwise.
  std::optional<bool> remove_stopwords;
  std::string language = "english";
  // Unset means 5 for corpora with at least 5000 documents, 1 otherwise.
  std::optional<int> min_word_freq;
  // Replaces the built-in English list when non-empty.
  std::vector<std::string> stopwords;

  bool stopwords_enabled() const;
  int effective_min_word_freq(std::size_t n_docs) const;
};

const std::unordered_set<std::string>& english_stopwords();

/// Lowercase (ASCII), replace everything except letters, digits and
/// apostrophes with spaces, split on whitespace, drop stopwords. Bytes >= 0x80
/// count as letters so pre-segmented UTF-8 text passes through intact.
std::vector<std::string> tokenize(std::string_view text, const PreprocConfig& preproc);

class Vocabulary {
 public:
  Vocabulary() = default;
  /// Words are indexed in the given order; duplicates are rejected.
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return index_to_word_.size(); }
  const std::string& word(std::size_t index) const { return index_to_word_.at(index); }
  std::optional<std::size_t> find(std::string_view word) const;
  std::size_t index(std::string_view word) const;  // throws ArgumentError if absent
  const std::vector<std::string>& words() const { return index_to_word_; }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.index_to_word_ == b.index_to_word_;
  }

 private:
  std::vector<std::string> index_to_word_;
  std::unordered_map<std::string, std::size_t> word_to_index_;
};

struct TokenizedDocument {
  std::string doc_id;
  std::vector<std::uint32_t> tokens;
  std::uint32_t label = 0;
  Split split = Split::kTrain;

  friend bool operator==(const TokenizedDocument&, const TokenizedDocument&) = default;
};

struct Corpus {
  std::vector<TokenizedDocument> documents;
  Vocabulary vocabulary;
  std::vector<std::string> labels;
  std::vector<std::string> warnings;

  std::size_t num_docs() const { return documents.size(); }
  std::size_t vocab_size() const { return vocabulary.size(); }
  std::size_t num_labels() const { return labels.size(); }

  std::vector<std::size_t> indices_with_split(Split s) const;

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.documents == b.documents && a.vocabulary == b.vocabulary && a.labels == b.labels;
  }
};

/// Builds a corpus from already-split raw lines. Shared by load_corpus and tests.
struct RawDocument {
  std::string doc_id;
  std::string text;
  std::string label;
  Split split = Split::kTrain;
};
Corpus build_corpus(const std::vector<RawDocument>& docs, const PreprocConfig& preproc);

/// Meta file: `doc_id<TAB>split<TAB>label` per line; text file: one document
/// per line, same order.
Corpus load_corpus(const std::filesystem::path& meta_path, const std::filesystem::path& text_path,
                   const PreprocConfig& preproc);

/// Reassigns splits: ceil(train_fraction * D) training documents chosen with
/// `seed`, the rest test. With `stratified`, every label gets at least one
/// training document while the budget allows.
Corpus sample_limited_split(const Corpus& corpus, double train_fraction, std::uint64_t seed,
                            bool stratified = true);

}  // namespace textgcn
