#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "textgcn/corpus.hpp"
#include "textgcn/sparse.hpp"

namespace textgcn {

/// Edge families included in the graph. Each variant strictly extends the
/// previous one: word-doc, then word-word, then doc-doc.
enum class EdgeConfig { kD2W, kD2W_W2W, kD2W_W2W_D2D };

std::string_view to_string(EdgeConfig c);    // "d2w", "d2w+w2w", "d2w+w2w+d2d"
EdgeConfig parse_edge_config(std::string_view s);  // also accepts "+w2w", "+w2w+d2d"

/// Sliding-window co-occurrence counts. Counting is by presence: a word seen
/// several times in one window counts once for that window.
struct PmiStats {
  std::int64_t window_size = 0;
  std::int64_t total_windows = 0;
  std::vector<std::int64_t> word_window_count;

  struct PairCount {
    std::uint32_t word_i;  // word_i < word_j
    std::uint32_t word_j;
    std::int64_t windows;
  };
  // Sorted by (word_i, word_j); only pairs seen together at least once.
  std::vector<PairCount> pair_window_count;

  /// Symmetric lookup; 0 for pairs that never share a window.
  std::int64_t pair_count(std::uint32_t i, std::uint32_t j) const;
};

struct WordEdge {
  std::uint32_t word_i;
  std::uint32_t word_j;
  double weight;
};

struct DocWordEdge {
  std::uint32_t doc;
  std::uint32_t word;
  double weight;
};

struct DocEdge {
  std::uint32_t doc_a;
  std::uint32_t doc_b;
  double weight;
};

/// Windows of `window_size` tokens, stride 1, never crossing documents. A
/// document of at most `window_size` tokens is one window; an empty document
/// contributes none.
PmiStats count_windows(const Corpus& corpus, std::int64_t window_size);

/// Unordered word pairs (i < j) with strictly positive PMI (natural log).
std::vector<WordEdge> pmi_edges(const PmiStats& stats);

/// tf(d, m) * log(D / df(m)) with raw counts; zero weights omitted.
std::vector<DocWordEdge> tfidf_edges(const Corpus& corpus);

/// Jaccard similarity of distinct-word sets for doc pairs a < b, kept when
/// similarity >= threshold. Pairs of two empty documents are skipped.
std::vector<DocEdge> jaccard_doc_edges(const Corpus& corpus, double threshold);

struct GraphBuildParams {
  std::int64_t window_size = 20;
  double jaccard_threshold = 0.2;
};

/// Corpus-level graph: nodes 0..D-1 are documents in corpus order, D..D+M-1
/// are vocabulary words. Adjacency is symmetric with an empty diagonal.
class TextGraph {
 public:
  TextGraph(std::size_t n_docs, std::size_t n_words, EdgeConfig config, GraphBuildParams params,
            sparse::CooMatrix adjacency);

  std::size_t num_docs() const { return n_docs_; }
  std::size_t num_words() const { return n_words_; }
  std::size_t num_nodes() const { return n_docs_ + n_words_; }
  std::size_t doc_node(std::size_t doc) const { return doc; }
  std::size_t word_node(std::size_t word) const { return n_docs_ + word; }

  EdgeConfig edge_config() const { return config_; }
  const GraphBuildParams& params() const { return params_; }
  const sparse::CooMatrix& adjacency() const { return adjacency_; }

  /// Symmetrically normalized adjacency with self-loops; computed once.
  const sparse::CsrMatrix& normalized_adjacency() const;

 private:
  std::size_t n_docs_;
  std::size_t n_words_;
  EdgeConfig config_;
  GraphBuildParams params_;
  sparse::CooMatrix adjacency_;
  struct NormCache {
    std::once_flag once;
    sparse::CsrMatrix matrix;
  };
  // Shared so copies of an immutable graph reuse one normalization.
  std::shared_ptr<NormCache> norm_cache_ = std::make_shared<NormCache>();
};

TextGraph build_graph(const Corpus& corpus, EdgeConfig config, GraphBuildParams params = {});

inline const sparse::CsrMatrix& normalized_adjacency(const TextGraph& graph) {
  return graph.normalized_adjacency();
}

/// `# N D M edge_config window_size jaccard_threshold` followed by the COO body.
void write_graph(std::ostream& out, const TextGraph& graph);
void write_graph(const std::filesystem::path& path, const TextGraph& graph);
TextGraph read_graph(std::istream& in);
TextGraph read_graph(const std::filesystem::path& path);

}  // namespace textgcn
