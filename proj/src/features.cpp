#include "textgcn/features.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace textgcn {

FeatureMatrix onehot_features(sparse::Index n_nodes) {
  if (n_nodes < 0) throw ArgumentError("n_nodes must be non-negative");
  FeatureMatrix f;
  f.kind = FeatureKind::kOneHot;
  f.n_nodes = n_nodes;
  f.dim = n_nodes;
  return f;
}

FeatureMatrix dense_features(sparse::DenseMatrix data) {
  if (!data.all_finite()) throw ArgumentError("dense features contain non-finite values");
  FeatureMatrix f;
  f.kind = FeatureKind::kDense;
  f.n_nodes = data.rows();
  f.dim = data.cols();
  f.data = std::move(data);
  return f;
}

sparse::DenseMatrix propagate(const sparse::CsrMatrix& a_hat, const FeatureMatrix& x) {
  if (a_hat.cols() != x.n_nodes) throw ArgumentError("feature rows do not match adjacency");
  if (x.is_one_hot()) return a_hat.to_dense();
  return sparse::spmm(a_hat, x.data);
}

std::vector<std::string> node_keys(const Corpus& corpus) {
  std::vector<std::string> keys;
  keys.reserve(corpus.num_docs() + corpus.vocab_size());
  for (const auto& d : corpus.documents) keys.push_back("doc:" + d.doc_id);
  for (const auto& w : corpus.vocabulary.words()) keys.push_back("word:" + w);
  return keys;
}

namespace {

using Kind = FeatureLoadError::Kind;

[[noreturn]] void fail(Kind kind, const std::filesystem::path& path, const std::string& msg) {
  throw FeatureLoadError(kind, path.string() + ": " + msg);
}

}  // namespace

FeatureLoadResult load_embedding_file(const std::filesystem::path& path,
                                      const std::vector<std::string>& keys,
                                      const FeatureLoadOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Kind::kMalformed, path, "cannot open feature file");

  std::string line;
  std::getline(in, line);
  std::istringstream header(line);
  std::string tag;
  long long n_rows = -1;
  long long dim = -1;
  if (!(header >> tag >> n_rows >> dim) || tag != "FEAT" || n_rows < 0 || dim < 0)
    fail(Kind::kMalformed, path, "bad header '" + line + "', expected 'FEAT n_nodes dim'");

  const auto n_nodes = static_cast<long long>(keys.size());
  // A short file is diagnosed below by naming the first missing key.
  if (n_rows > n_nodes) {
    fail(Kind::kCountMismatch, path,
         "header declares " + std::to_string(n_rows) + " nodes but the graph has " +
             std::to_string(n_nodes));
  }

  std::unordered_map<std::string, std::size_t> slot;
  slot.reserve(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) slot.emplace(keys[i], i);

  FeatureLoadResult result;
  sparse::DenseMatrix data(n_nodes, dim);
  std::vector<bool> filled(keys.size(), false);
  for (long long r = 0; r < n_rows; ++r) {
    if (!std::getline(in, line))
      fail(Kind::kMalformed, path, "expected " + std::to_string(n_rows) + " rows, found " +
                                       std::to_string(r));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(Kind::kMalformed, path, "row " + std::to_string(r + 1) + " has no TAB");
    const std::string key = line.substr(0, tab);
    auto it = slot.find(key);
    if (it == slot.end()) fail(Kind::kUnknownKey, path, "unknown node key '" + key + "'");
    if (filled[it->second]) fail(Kind::kDuplicateKey, path, "duplicate node key '" + key + "'");
    filled[it->second] = true;

    auto out = data.row(static_cast<sparse::Index>(it->second));
    const char* p = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    for (long long c = 0; c < dim; ++c) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      double v = 0.0;
      auto res = std::from_chars(p, end, v);
      if (res.ec == std::errc::result_out_of_range) {
        fail(Kind::kNonFinite, path, "non-finite value for '" + key + "'");
      }
      if (res.ec != std::errc()) {
        // from_chars parses "nan"/"inf" successfully, so this is a real format error.
        fail(Kind::kMalformed, path, "row '" + key + "' has fewer than " + std::to_string(dim) + " values");
      }
      if (!std::isfinite(v)) fail(Kind::kNonFinite, path, "non-finite value for '" + key + "'");
      out[static_cast<std::size_t>(c)] = v;
      p = res.ptr;
    }
    while (p < end && (*p == ' ' || *p == '\t')) ++p;
    if (p != end) fail(Kind::kMalformed, path, "row '" + key + "' has more than " + std::to_string(dim) + " values");
  }

  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (filled[i]) continue;
    const bool is_word = keys[i].rfind("word:", 0) == 0;
    if (!(is_word && options.zero_fill_missing_words))
      fail(Kind::kMissingKey, path, "missing node key '" + keys[i] + "'");
    result.warnings.push_back("zero vector substituted for missing key '" + keys[i] + "'");
  }

  result.features = dense_features(std::move(data));
  return result;
}

FeatureLoadResult load_embedding_file(const std::filesystem::path& path, const Corpus& corpus,
                                      const TextGraph& graph, const FeatureLoadOptions& options) {
  if (graph.num_docs() != corpus.num_docs() || graph.num_words() != corpus.vocab_size())
    throw ArgumentError("graph was not built from this corpus");
  return load_embedding_file(path, node_keys(corpus), options);
}

void write_embedding_file(const std::filesystem::path& path, const std::vector<std::string>& keys,
                          const sparse::DenseMatrix& data) {
  if (static_cast<sparse::Index>(keys.size()) != data.rows())
    throw ArgumentError("one key per feature row required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write '" + path.string() + "'");
  out << "FEAT " << data.rows() << ' ' << data.cols() << '\n';
  for (sparse::Index r = 0; r < data.rows(); ++r) {
    out << keys[static_cast<std::size_t>(r)] << '\t';
    for (sparse::Index c = 0; c < data.cols(); ++c) {
      if (c) out << ' ';
      out << sparse::format_double(data(r, c));
    }
    out << '\n';
  }
  if (!out) throw LoadError("failed writing '" + path.string() + "'");
}

}  // namespace textgcn
