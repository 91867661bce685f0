#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "textgcn/corpus.hpp"
#include "textgcn/error.hpp"
#include "textgcn/sparse.hpp"
#include "textgcn/textgraph.hpp"

namespace textgcn {

enum class FeatureKind { kOneHot, kDense };

/// Initial node features H0. One-hot features are the N x N identity and are
/// never materialized; `data` is empty for them.
struct FeatureMatrix {
  FeatureKind kind = FeatureKind::kOneHot;
  sparse::Index n_nodes = 0;
  sparse::Index dim = 0;
  sparse::DenseMatrix data;

  bool is_one_hot() const { return kind == FeatureKind::kOneHot; }
};

FeatureMatrix onehot_features(sparse::Index n_nodes);
FeatureMatrix dense_features(sparse::DenseMatrix data);

/// a_hat * H0. For one-hot input this is a_hat itself, densified.
sparse::DenseMatrix propagate(const sparse::CsrMatrix& a_hat, const FeatureMatrix& x);

/// `doc:<doc_id>` for documents then `word:<word>` for the vocabulary, in graph
/// node order.
std::vector<std::string> node_keys(const Corpus& corpus);

class FeatureLoadError : public LoadError {
 public:
  enum class Kind { kMalformed, kCountMismatch, kMissingKey, kDuplicateKey, kUnknownKey, kNonFinite };

  FeatureLoadError(Kind kind, const std::string& what) : LoadError(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct FeatureLoadOptions {
  // Substitute a zero row for word keys absent from the file instead of failing.
  bool zero_fill_missing_words = false;
};

struct FeatureLoadResult {
  FeatureMatrix features;
  std::vector<std::string> warnings;
};

/// Reads the `FEAT n_nodes dim` file format and reorders rows by node key so
/// row i is graph node i. Row order in the file does not matter.
FeatureLoadResult load_embedding_file(const std::filesystem::path& path,
                                      const std::vector<std::string>& keys,
                                      const FeatureLoadOptions& options = {});

FeatureLoadResult load_embedding_file(const std::filesystem::path& path, const Corpus& corpus,
                                      const TextGraph& graph,
                                      const FeatureLoadOptions& options = {});

void write_embedding_file(const std::filesystem::path& path, const std::vector<std::string>& keys,
                          const sparse::DenseMatrix& data);

}  // namespace textgcn
