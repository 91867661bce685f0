#include "textgcn/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "textgcn/error.hpp"
#include "textgcn/rng.hpp"

namespace textgcn {

std::string_view to_string(Split s) { return s == Split::kTrain ? "train" : "test"; }

Split parse_split(std::string_view token) {
  if (token == "train") return Split::kTrain;
  if (token == "test") return Split::kTest;
  throw LoadError("unknown split token '" + std::string(token) + "'");
}

bool PreprocConfig::stopwords_enabled() const {
  if (remove_stopwords) return *remove_stopwords;
  return language == "english" || language == "en";
}

int PreprocConfig::effective_min_word_freq(std::size_t n_docs) const {
  if (min_word_freq) return *min_word_freq;
  return n_docs >= 5000 ? 5 : 1;
}

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
         c == '\'' || c >= 0x80;
}

bool is_space(unsigned char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, const PreprocConfig& preproc) {
  std::string buf(text);
  if (preproc.lowercase) {
    for (auto& ch : buf) {
      auto c = static_cast<unsigned char>(ch);
      if (c >= 'A' && c <= 'Z') ch = static_cast<char>(c - 'A' + 'a');
    }
  }
  if (preproc.clean_chars) {
    for (auto& ch : buf)
      if (!is_word_byte(static_cast<unsigned char>(ch))) ch = ' ';
  }

  const bool drop_stop = preproc.stopwords_enabled();
  std::unordered_set<std::string> custom;
  if (drop_stop && !preproc.stopwords.empty())
    custom.insert(preproc.stopwords.begin(), preproc.stopwords.end());
  const auto& stop = custom.empty() ? english_stopwords() : custom;

  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < buf.size()) {
    while (i < buf.size() && is_space(static_cast<unsigned char>(buf[i]))) ++i;
    std::size_t j = i;
    while (j < buf.size() && !is_space(static_cast<unsigned char>(buf[j]))) ++j;
    if (j > i) {
      std::string tok = buf.substr(i, j - i);
      if (!drop_stop || !stop.contains(tok)) out.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

// ----------------------------------------------------------------- Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> words) : index_to_word_(std::move(words)) {
  word_to_index_.reserve(index_to_word_.size());
  for (std::size_t i = 0; i < index_to_word_.size(); ++i) {
    if (!word_to_index_.emplace(index_to_word_[i], i).second)
      throw ArgumentError("duplicate vocabulary word '" + index_to_word_[i] + "'");
  }
}

std::optional<std::size_t> Vocabulary::find(std::string_view word) const {
  auto it = word_to_index_.find(std::string(word));
  if (it == word_to_index_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::index(std::string_view word) const {
  auto idx = find(word);
  if (!idx) throw ArgumentError("word '" + std::string(word) + "' not in vocabulary");
  return *idx;
}

// --------------------------------------------------------------------- Corpus

std::vector<std::size_t> Corpus::indices_with_split(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < documents.size(); ++i)
    if (documents[i].split == s) out.push_back(i);
  return out;
}

Corpus build_corpus(const std::vector<RawDocument>& docs, const PreprocConfig& preproc) {
  Corpus corpus;

  std::set<std::string> seen_ids;
  std::set<std::string> label_set;
  for (const auto& d : docs) {
    if (!seen_ids.insert(d.doc_id).second)
      throw LoadError("duplicate doc_id '" + d.doc_id + "'");
    label_set.insert(d.label);
  }
  corpus.labels.assign(label_set.begin(), label_set.end());
  std::map<std::string, std::uint32_t> label_index;
  for (std::uint32_t i = 0; i < corpus.labels.size(); ++i) label_index[corpus.labels[i]] = i;

  std::vector<std::vector<std::string>> tokens;
  tokens.reserve(docs.size());
  std::map<std::string, std::size_t> freq;
  for (const auto& d : docs) {
    tokens.push_back(tokenize(d.text, preproc));
    for (const auto& t : tokens.back()) ++freq[t];
  }

  const auto min_freq = static_cast<std::size_t>(std::max(1, preproc.effective_min_word_freq(docs.size())));
  // std::map iteration gives a byte-sorted, reproducible vocabulary order.
  std::vector<std::string> words;
  for (const auto& [w, n] : freq)
    if (n >= min_freq) words.push_back(w);
  corpus.vocabulary = Vocabulary(std::move(words));

  corpus.documents.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    TokenizedDocument td;
    td.doc_id = docs[i].doc_id;
    td.label = label_index.at(docs[i].label);
    td.split = docs[i].split;
    for (const auto& t : tokens[i])
      if (auto idx = corpus.vocabulary.find(t)) td.tokens.push_back(static_cast<std::uint32_t>(*idx));
    if (td.tokens.empty())
      corpus.warnings.push_back("document '" + td.doc_id + "' has no tokens after preprocessing");
    corpus.documents.push_back(std::move(td));
  }
  return corpus;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

}  // namespace

Corpus load_corpus(const std::filesystem::path& meta_path, const std::filesystem::path& text_path,
                   const PreprocConfig& preproc) {
  const auto meta = read_lines(meta_path);
  const auto text = read_lines(text_path);
  if (meta.size() != text.size()) {
    std::ostringstream msg;
    msg << "line count mismatch: " << meta_path.string() << " has " << meta.size() << ", "
        << text_path.string() << " has " << text.size();
    throw LoadError(msg.str());
  }
  std::vector<RawDocument> docs;
  docs.reserve(meta.size());
  for (std::size_t i = 0; i < meta.size(); ++i) {
    const auto& line = meta[i];
    auto t1 = line.find('\t');
    auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw LoadError(meta_path.string() + ":" + std::to_string(i + 1) +
                      ": expected doc_id<TAB>split<TAB>label");
    }
    RawDocument d;
    d.doc_id = line.substr(0, t1);
    d.split = parse_split(std::string_view(line).substr(t1 + 1, t2 - t1 - 1));
    d.label = line.substr(t2 + 1);
    d.text = text[i];
    docs.push_back(std::move(d));
  }
  return build_corpus(docs, preproc);
}

Corpus sample_limited_split(const Corpus& corpus, double train_fraction, std::uint64_t seed,
                            bool stratified) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0))
    throw ArgumentError("train_fraction must lie in (0, 1]");
  const std::size_t n = corpus.num_docs();
  // The small slack keeps products like 0.07 * 100 from rounding up to 8.
  auto n_train = static_cast<std::size_t>(std::ceil(train_fraction * static_cast<double>(n) - 1e-9));
  n_train = std::min(n_train, n);

  Rng rng(derive_seed({seed, 0x5eed5011ULL}));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  shuffle(order.begin(), order.end(), rng);

  std::vector<bool> chosen(n, false);
  std::size_t picked = 0;
  if (stratified) {
    // First shuffled document of each label, taking labels in a seeded order.
    std::vector<std::ptrdiff_t> first_of(corpus.num_labels(), -1);
    for (auto i : order) {
      auto lbl = corpus.documents[i].label;
      if (first_of[lbl] < 0) first_of[lbl] = static_cast<std::ptrdiff_t>(i);
    }
    std::vector<std::size_t> label_order(corpus.num_labels());
    for (std::size_t i = 0; i < label_order.size(); ++i) label_order[i] = i;
    shuffle(label_order.begin(), label_order.end(), rng);
    for (auto lbl : label_order) {
      if (picked == n_train) break;
      if (first_of[lbl] < 0) continue;
      chosen[static_cast<std::size_t>(first_of[lbl])] = true;
      ++picked;
    }
  }
  for (auto i : order) {
    if (picked == n_train) break;
    if (!chosen[i]) {
      chosen[i] = true;
      ++picked;
    }
  }

  Corpus out = corpus;
  for (std::size_t i = 0; i < n; ++i) out.documents[i].split = chosen[i] ? Split::kTrain : Split::kTest;
  return out;
}

}  // namespace textgcn
