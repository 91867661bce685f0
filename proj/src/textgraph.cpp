#include "textgcn/textgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "textgcn/error.hpp"

namespace textgcn {

std::string_view to_string(EdgeConfig c) {
  switch (c) {
    case EdgeConfig::kD2W:
      return "d2w";
    case EdgeConfig::kD2W_W2W:
      return "d2w+w2w";
    case EdgeConfig::kD2W_W2W_D2D:
      return "d2w+w2w+d2d";
  }
  return "?";
}

EdgeConfig parse_edge_config(std::string_view s) {
  if (s == "d2w" || s == "d2w_only" || s == "D2W_ONLY") return EdgeConfig::kD2W;
  if (s == "d2w+w2w" || s == "+w2w" || s == "D2W_W2W") return EdgeConfig::kD2W_W2W;
  if (s == "d2w+w2w+d2d" || s == "+w2w+d2d" || s == "D2W_W2W_D2D") return EdgeConfig::kD2W_W2W_D2D;
  throw ArgumentError("unknown edge config '" + std::string(s) + "'");
}

std::int64_t PmiStats::pair_count(std::uint32_t i, std::uint32_t j) const {
  if (i > j) std::swap(i, j);
  auto it = std::lower_bound(pair_window_count.begin(), pair_window_count.end(), std::pair{i, j},
                             [](const PairCount& p, const std::pair<std::uint32_t, std::uint32_t>& k) {
                               return p.word_i != k.first ? p.word_i < k.first : p.word_j < k.second;
                             });
  if (it == pair_window_count.end() || it->word_i != i || it->word_j != j) return 0;
  return it->windows;
}

PmiStats count_windows(const Corpus& corpus, std::int64_t window_size) {
  if (window_size < 1) throw ArgumentError("window_size must be >= 1");
  PmiStats stats;
  stats.window_size = window_size;
  stats.word_window_count.assign(corpus.vocab_size(), 0);

  std::unordered_map<std::uint64_t, std::int64_t> pairs;
  std::vector<std::uint32_t> distinct;
  for (const auto& doc : corpus.documents) {
    const auto len = static_cast<std::int64_t>(doc.tokens.size());
    if (len == 0) continue;
    const std::int64_t n_windows = len <= window_size ? 1 : len - window_size + 1;
    const std::int64_t span = std::min(len, window_size);
    for (std::int64_t start = 0; start < n_windows; ++start) {
      distinct.assign(doc.tokens.begin() + start, doc.tokens.begin() + start + span);
      std::sort(distinct.begin(), distinct.end());
      distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
      for (std::size_t a = 0; a < distinct.size(); ++a) {
        ++stats.word_window_count[distinct[a]];
        for (std::size_t b = a + 1; b < distinct.size(); ++b)
          ++pairs[(static_cast<std::uint64_t>(distinct[a]) << 32) | distinct[b]];
      }
    }
    stats.total_windows += n_windows;
  }

  stats.pair_window_count.reserve(pairs.size());
  for (const auto& [key, n] : pairs)
    stats.pair_window_count.push_back(
        {static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key & 0xffffffffu), n});
  std::sort(stats.pair_window_count.begin(), stats.pair_window_count.end(),
            [](const auto& a, const auto& b) {
              return a.word_i != b.word_i ? a.word_i < b.word_i : a.word_j < b.word_j;
            });
  return stats;
}

std::vector<WordEdge> pmi_edges(const PmiStats& stats) {
  std::vector<WordEdge> edges;
  if (stats.total_windows == 0) return edges;
  const auto total = static_cast<double>(stats.total_windows);
  for (const auto& p : stats.pair_window_count) {
    if (p.windows == 0) continue;
    const double p_ij = static_cast<double>(p.windows) / total;
    const double p_i = static_cast<double>(stats.word_window_count[p.word_i]) / total;
    const double p_j = static_cast<double>(stats.word_window_count[p.word_j]) / total;
    const double pmi = std::log(p_ij / (p_i * p_j));
    if (pmi > 0.0) edges.push_back({p.word_i, p.word_j, pmi});
  }
  return edges;
}

std::vector<DocWordEdge> tfidf_edges(const Corpus& corpus) {
  const std::size_t n_docs = corpus.num_docs();
  std::vector<std::int64_t> df(corpus.vocab_size(), 0);
  std::vector<std::vector<std::pair<std::uint32_t, std::int64_t>>> tf(n_docs);
  std::vector<std::uint32_t> sorted;
  for (std::size_t d = 0; d < n_docs; ++d) {
    sorted = corpus.documents[d].tokens;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t k = 0; k < sorted.size();) {
      std::size_t e = k;
      while (e < sorted.size() && sorted[e] == sorted[k]) ++e;
      tf[d].emplace_back(sorted[k], static_cast<std::int64_t>(e - k));
      ++df[sorted[k]];
      k = e;
    }
  }
  std::vector<DocWordEdge> edges;
  for (std::size_t d = 0; d < n_docs; ++d) {
    for (const auto& [word, count] : tf[d]) {
      const double idf = std::log(static_cast<double>(n_docs) / static_cast<double>(df[word]));
      const double w = static_cast<double>(count) * idf;
      if (w > 0.0) edges.push_back({static_cast<std::uint32_t>(d), word, w});
    }
  }
  return edges;
}

std::vector<DocEdge> jaccard_doc_edges(const Corpus& corpus, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw ArgumentError("jaccard threshold must lie in [0, 1]");
  const std::size_t n_docs = corpus.num_docs();

  std::vector<std::vector<std::uint32_t>> sets(n_docs);
  std::vector<std::vector<std::uint32_t>> postings(corpus.vocab_size());
  for (std::size_t d = 0; d < n_docs; ++d) {
    auto& s = sets[d];
    s = corpus.documents[d].tokens;
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
    for (auto w : s) postings[w].push_back(static_cast<std::uint32_t>(d));
  }

  // Overlaps come from the inverted index; pairs with no shared word have
  // similarity 0 and never produce a positive-weight edge.
  std::vector<DocEdge> edges;
  std::vector<std::uint32_t> overlap(n_docs, 0);
  std::vector<std::uint32_t> touched;
  for (std::size_t a = 0; a < n_docs; ++a) {
    touched.clear();
    for (auto w : sets[a]) {
      const auto& post = postings[w];
      auto it = std::upper_bound(post.begin(), post.end(), static_cast<std::uint32_t>(a));
      for (; it != post.end(); ++it) {
        if (overlap[*it]++ == 0) touched.push_back(*it);
      }
    }
    std::sort(touched.begin(), touched.end());
    for (auto b : touched) {
      const double inter = overlap[b];
      const double uni = static_cast<double>(sets[a].size() + sets[b].size()) - inter;
      const double j = inter / uni;
      if (j >= threshold) edges.push_back({static_cast<std::uint32_t>(a), b, j});
      overlap[b] = 0;
    }
  }
  return edges;
}

// ------------------------------------------------------------------ TextGraph

TextGraph::TextGraph(std::size_t n_docs, std::size_t n_words, EdgeConfig config,
                     GraphBuildParams params, sparse::CooMatrix adjacency)
    : n_docs_(n_docs),
      n_words_(n_words),
      config_(config),
      params_(params),
      adjacency_(std::move(adjacency)) {
  const auto n = static_cast<sparse::Index>(num_nodes());
  if (adjacency_.rows() != n || adjacency_.cols() != n)
    throw StructuralError("adjacency shape does not match D + M");
}

const sparse::CsrMatrix& TextGraph::normalized_adjacency() const {
  std::call_once(norm_cache_->once,
                 [this] { norm_cache_->matrix = sparse::sym_normalize(adjacency_); });
  return norm_cache_->matrix;
}

TextGraph build_graph(const Corpus& corpus, EdgeConfig config, GraphBuildParams params) {
  const std::size_t n_docs = corpus.num_docs();
  const std::size_t n_words = corpus.vocab_size();
  const auto n = static_cast<sparse::Index>(n_docs + n_words);
  sparse::CooMatrix adj(n, n);
  auto add_edge = [&](std::size_t u, std::size_t v, double w) {
    adj.add(static_cast<sparse::Index>(u), static_cast<sparse::Index>(v), w);
    adj.add(static_cast<sparse::Index>(v), static_cast<sparse::Index>(u), w);
  };

  for (const auto& e : tfidf_edges(corpus)) add_edge(e.doc, n_docs + e.word, e.weight);
  if (config != EdgeConfig::kD2W) {
    for (const auto& e : pmi_edges(count_windows(corpus, params.window_size)))
      add_edge(n_docs + e.word_i, n_docs + e.word_j, e.weight);
  }
  if (config == EdgeConfig::kD2W_W2W_D2D) {
    for (const auto& e : jaccard_doc_edges(corpus, params.jaccard_threshold))
      add_edge(e.doc_a, e.doc_b, e.weight);
  }
  adj.finalize();
  return TextGraph(n_docs, n_words, config, params, std::move(adj));
}

// -------------------------------------------------------------- serialization

void write_graph(std::ostream& out, const TextGraph& graph) {
  out << "# " << graph.num_nodes() << ' ' << graph.num_docs() << ' ' << graph.num_words() << ' '
      << to_string(graph.edge_config()) << ' ' << graph.params().window_size << ' '
      << sparse::format_double(graph.params().jaccard_threshold) << '\n';
  sparse::write_coo(out, graph.adjacency());
}

void write_graph(const std::filesystem::path& path, const TextGraph& graph) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write graph file '" + path.string() + "'");
  write_graph(out, graph);
  if (!out) throw LoadError("failed writing graph file '" + path.string() + "'");
}

TextGraph read_graph(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.empty() || line[0] != '#')
    throw LoadError("graph file must start with a '# N D M ...' header");
  std::istringstream header(line.substr(1));
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t m = 0;
  std::string config;
  GraphBuildParams params;
  if (!(header >> n >> d >> m >> config >> params.window_size >> params.jaccard_threshold) ||
      n != d + m)
    throw LoadError("bad graph header: '" + line + "'");
  auto coo = sparse::read_coo(in);
  coo.finalize();
  return TextGraph(d, m, parse_edge_config(config), params, std::move(coo));
}

TextGraph read_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open graph file '" + path.string() + "'");
  return read_graph(in);
}

}  // namespace textgcn
