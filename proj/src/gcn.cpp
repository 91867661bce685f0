#include "textgcn/gcn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "textgcn/error.hpp"
#include "textgcn/rng.hpp"

namespace textgcn::gcn {

void TrainConfig::validate() const {
  if (n_layers < 1 || n_layers > 5) throw ArgumentError("n_layers must be in 1..5");
  if (hidden_dim < 1) throw ArgumentError("hidden_dim must be positive");
  if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ArgumentError("dropout must lie in [0, 1)");
  if (!(l2_weight >= 0.0)) throw ArgumentError("l2_weight must be non-negative");
  if (max_epochs < 1) throw ArgumentError("max_epochs must be positive");
  if (patience < 1) throw ArgumentError("patience must be positive");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ArgumentError("val_fraction must lie in [0, 1)");
}

// ------------------------------------------------------------------- GcnModel

GcnModel::GcnModel(std::vector<DenseMatrix> weights) : weights_(std::move(weights)) {
  for (std::size_t l = 1; l < weights_.size(); ++l)
    if (weights_[l - 1].cols() != weights_[l].rows())
      throw ArgumentError("consecutive weight matrices have incompatible shapes");
}

std::vector<Index> GcnModel::dims() const {
  std::vector<Index> d;
  if (weights_.empty()) return d;
  d.push_back(weights_.front().rows());
  for (const auto& w : weights_) d.push_back(w.cols());
  return d;
}

std::vector<Index> layer_dims(Index input_dim, int n_layers, Index hidden_dim, Index n_classes) {
  if (n_layers < 1) throw ArgumentError("n_layers must be >= 1");
  std::vector<Index> dims{input_dim};
  for (int l = 1; l < n_layers; ++l) dims.push_back(hidden_dim);
  dims.push_back(n_classes);
  return dims;
}

GcnModel init_model(std::span<const Index> dims, std::uint64_t seed) {
  if (dims.size() < 2) throw ArgumentError("init_model needs at least two dims");
  std::vector<DenseMatrix> weights;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Index fan_in = dims[l];
    const Index fan_out = dims[l + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Rng rng(derive_seed({seed, 0x1417ULL, l}));
    DenseMatrix w(fan_in, fan_out);
    for (auto& v : w.values()) v = (2.0 * uniform01(rng) - 1.0) * limit;
    weights.push_back(std::move(w));
  }
  return GcnModel(std::move(weights));
}

// -------------------------------------------------------------------- forward

DenseMatrix softmax_rows(const DenseMatrix& logits) {
  DenseMatrix out(logits.rows(), logits.cols());
  for (Index r = 0; r < logits.rows(); ++r) {
    auto in = logits.row(r);
    auto dst = out.row(r);
    if (in.empty()) continue;
    const double mx = *std::max_element(in.begin(), in.end());
    double sum = 0.0;
    for (std::size_t c = 0; c < in.size(); ++c) {
      dst[c] = std::exp(in[c] - mx);
      sum += dst[c];
    }
    for (auto& v : dst) v /= sum;
  }
  return out;
}

namespace {

// Keep-mask scale of element `index`: 0 with probability p, else 1 / (1 - p).
double dropout_scale(std::uint64_t seed, std::uint64_t index, double p) {
  return uniform01_at(seed, index) < p ? 0.0 : 1.0 / (1.0 - p);
}

std::vector<double> dropout_scales(std::size_t n, double p, std::uint64_t seed) {
  std::vector<double> s(n);
  for (std::size_t k = 0; k < n; ++k) s[k] = dropout_scale(seed, k, p);
  return s;
}

// Scales for the diagonal of an implicit n x n identity input; element (i, i)
// draws exactly as it would in the materialized matrix.
std::vector<double> diagonal_dropout_scales(std::size_t n, double p, std::uint64_t seed) {
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) s[i] = dropout_scale(seed, i * n + i, p);
  return s;
}

}  // namespace

ForwardCache forward(const GcnModel& model, const CsrMatrix& a_hat, const FeatureMatrix& x,
                     const ForwardOptions& options) {
  const Index n = a_hat.rows();
  const std::size_t n_layers = model.num_layers();
  if (n_layers == 0) throw ArgumentError("model has no layers");
  if (a_hat.cols() != n) throw ArgumentError("a_hat must be square");
  if (x.n_nodes != n) throw ArgumentError("feature rows do not match the adjacency");
  if (x.dim != model.weights().front().rows())
    throw ArgumentError("feature dim " + std::to_string(x.dim) + " does not match model input dim " +
                        std::to_string(model.weights().front().rows()));

  const bool drop = options.train_mode && options.dropout > 0.0;
  ForwardCache cache;
  cache.model = &model;
  cache.model_version = model.version();
  cache.n_nodes = n;
  cache.one_hot_input = x.is_one_hot();
  cache.inputs.resize(n_layers);
  cache.keep_scale.resize(n_layers);

  DenseMatrix hidden;  // H(l) for l >= 1
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& w = model.weights()[l];
    const std::uint64_t layer_seed = derive_seed({options.dropout_seed, 0xd50ULL, l});
    DenseMatrix transformed;  // X(l) W(l)
    if (l == 0 && x.is_one_hot()) {
      // X = diag(scale); X W scales the rows of W.
      cache.onehot_scale = drop ? diagonal_dropout_scales(static_cast<std::size_t>(n), options.dropout, layer_seed)
                                : std::vector<double>(static_cast<std::size_t>(n), 1.0);
      if (drop) cache.keep_scale[0] = cache.onehot_scale;
      transformed = w;
      for (Index r = 0; r < n; ++r) {
        const double s = cache.onehot_scale[static_cast<std::size_t>(r)];
        for (auto& v : transformed.row(r)) v *= s;
      }
    } else {
      DenseMatrix input = l == 0 ? x.data : std::move(hidden);
      if (drop) {
        cache.keep_scale[l] = dropout_scales(input.size(), options.dropout, layer_seed);
        auto& vals = input.values();
        for (std::size_t k = 0; k < vals.size(); ++k) vals[k] *= cache.keep_scale[l][k];
      }
      transformed = sparse::matmul(input, w);
      cache.inputs[l] = std::move(input);
    }
    DenseMatrix pre = sparse::spmm(a_hat, transformed);
    if (l + 1 < n_layers) {
      hidden = pre;
      for (auto& v : hidden.values()) v = std::max(v, 0.0);
    } else {
      cache.output = softmax_rows(pre);
    }
    cache.pre_activations.push_back(std::move(pre));
  }
  return cache;
}

double masked_cross_entropy(const DenseMatrix& z, std::span<const std::uint32_t> labels,
                            std::span<const std::size_t> mask) {
  if (mask.empty()) throw ArgumentError("loss needs at least one labelled document");
  double loss = 0.0;
  for (auto d : mask) {
    if (d >= labels.size() || static_cast<Index>(d) >= z.rows())
      throw ArgumentError("mask index is not a document node");
    const auto y = labels[d];
    if (static_cast<Index>(y) >= z.cols()) throw ArgumentError("label index out of range");
    loss -= std::log(z(static_cast<Index>(d), static_cast<Index>(y)));
  }
  return loss;
}

double squared_weight_norm(const GcnModel& model) {
  double s = 0.0;
  for (const auto& w : model.weights())
    for (double v : w.values()) s += v * v;
  return s;
}

// ------------------------------------------------------------------- backward

std::vector<DenseMatrix> backward(const GcnModel& model, const CsrMatrix& a_hat,
                                  const ForwardCache& cache, std::span<const std::uint32_t> labels,
                                  std::span<const std::size_t> mask, double l2_weight) {
  if (cache.model != &model || cache.model_version != model.version() ||
      cache.n_nodes != a_hat.rows() || cache.pre_activations.size() != model.num_layers())
    throw ContractError("forward cache does not belong to this model state");
  if (mask.empty()) throw ArgumentError("backward needs at least one labelled document");

  const std::size_t n_layers = model.num_layers();
  const Index n = cache.n_nodes;
  const Index n_classes = cache.output.cols();

  // d loss / d pre-activation of the last layer: (Z - Y) on masked rows.
  DenseMatrix delta(n, n_classes);
  for (auto d : mask) {
    const auto row = static_cast<Index>(d);
    for (Index c = 0; c < n_classes; ++c) delta(row, c) = cache.output(row, c);
    delta(row, static_cast<Index>(labels[d])) -= 1.0;
  }

  std::vector<DenseMatrix> grads(n_layers);
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& w = model.weights()[l];
    // A_hat is symmetric, so A_hat^T delta = A_hat delta.
    DenseMatrix d_transformed = sparse::spmm(a_hat, delta);
    if (l == 0 && cache.one_hot_input) {
      grads[0] = d_transformed;
      for (Index r = 0; r < n; ++r) {
        const double s = cache.onehot_scale[static_cast<std::size_t>(r)];
        for (auto& v : grads[0].row(r)) v *= s;
      }
    } else {
      grads[l] = sparse::matmul_tn(cache.inputs[l], d_transformed);
    }
    if (l2_weight > 0.0) {
      auto& g = grads[l].values();
      const auto& wv = w.values();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += 2.0 * l2_weight * wv[k];
    }
    if (l == 0) break;

    DenseMatrix d_input = sparse::matmul_nt(d_transformed, w);
    auto& dv = d_input.values();
    if (!cache.keep_scale[l].empty())
      for (std::size_t k = 0; k < dv.size(); ++k) dv[k] *= cache.keep_scale[l][k];
    const auto& pre = cache.pre_activations[l - 1].values();
    for (std::size_t k = 0; k < dv.size(); ++k)
      if (!(pre[k] > 0.0)) dv[k] = 0.0;
    delta = std::move(d_input);
  }
  return grads;
}

// ----------------------------------------------------------------------- Adam

void adam_step(AdamState& state, GcnModel& model, const std::vector<DenseMatrix>& grads,
               double learning_rate) {
  if (grads.size() != model.num_layers()) throw ArgumentError("one gradient per layer required");
  if (state.first_moment.empty()) {
    for (const auto& w : model.weights()) {
      state.first_moment.emplace_back(w.rows(), w.cols());
      state.second_moment.emplace_back(w.rows(), w.cols());
    }
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  auto& weights = model.mutable_weights();
  for (std::size_t l = 0; l < weights.size(); ++l) {
    auto& w = weights[l].values();
    const auto& g = grads[l].values();
    auto& m = state.first_moment[l].values();
    auto& v = state.second_moment[l].values();
    if (g.size() != w.size() || m.size() != w.size()) throw ArgumentError("gradient shape mismatch");
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / bc1;
      const double v_hat = v[k] / bc2;
      w[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

// -------------------------------------------------------------------- training

bool EarlyStopper::update(int epoch, double loss) {
  if (!has_best_ || loss < best_loss_) {
    has_best_ = true;
    best_loss_ = loss;
    best_epoch_ = epoch;
    bad_epochs_ = 0;
    return false;
  }
  ++bad_epochs_;
  return bad_epochs_ >= patience_;
}

TrainValSplit carve_validation(const Corpus& corpus, double val_fraction, std::uint64_t seed) {
  auto train_docs = corpus.indices_with_split(Split::kTrain);
  TrainValSplit out;
  const std::size_t n = train_docs.size();
  const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n) + 1e-9));
  if (n_val == 0) {
    out.train = std::move(train_docs);
    return out;
  }

  Rng rng(derive_seed({seed, 0x7a1ULL}));
  shuffle(train_docs.begin(), train_docs.end(), rng);
  std::vector<std::vector<std::size_t>> by_label(corpus.num_labels());
  for (auto d : train_docs) by_label[corpus.documents[d].label].push_back(d);

  // Largest-remainder proportional quotas, each label keeping one train doc.
  std::vector<std::size_t> quota(by_label.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t l = 0; l < by_label.size(); ++l) {
    const double exact = static_cast<double>(n_val) * static_cast<double>(by_label[l].size()) /
                         static_cast<double>(n);
    quota[l] = static_cast<std::size_t>(std::floor(exact));
    remainders.emplace_back(exact - static_cast<double>(quota[l]), l);
    assigned += quota[l];
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n_val && k < remainders.size(); ++k, ++assigned)
    ++quota[remainders[k].second];
  for (std::size_t l = 0; l < by_label.size(); ++l)
    quota[l] = std::min(quota[l], by_label[l].empty() ? 0 : by_label[l].size() - 1);

  std::vector<bool> is_val(corpus.num_docs(), false);
  for (std::size_t l = 0; l < by_label.size(); ++l)
    for (std::size_t k = 0; k < quota[l]; ++k) is_val[by_label[l][k]] = true;
  for (auto d : corpus.indices_with_split(Split::kTrain)) (is_val[d] ? out.val : out.train).push_back(d);
  return out;
}

std::vector<std::uint32_t> argmax_rows(const DenseMatrix& z, std::span<const std::size_t> rows) {
  std::vector<std::uint32_t> out;
  out.reserve(rows.size());
  for (auto r : rows) {
    auto row = z.row(static_cast<Index>(r));
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out.push_back(static_cast<std::uint32_t>(best));
  }
  return out;
}

std::vector<std::uint32_t> predict(const GcnModel& model, const CsrMatrix& a_hat,
                                   const FeatureMatrix& x, std::span<const std::size_t> doc_indices) {
  auto cache = forward(model, a_hat, x);
  return argmax_rows(cache.output, doc_indices);
}

namespace {

double accuracy_on(const DenseMatrix& z, std::span<const std::uint32_t> labels,
                   std::span<const std::size_t> docs) {
  if (docs.empty()) return 0.0;
  auto pred = argmax_rows(z, docs);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) hit += pred[i] == labels[docs[i]];
  return static_cast<double>(hit) / static_cast<double>(docs.size());
}

}  // namespace

TrainResult train(const TextGraph& graph, const FeatureMatrix& x, const Corpus& corpus,
                  const TrainConfig& config) {
  config.validate();
  if (graph.num_docs() != corpus.num_docs() || graph.num_words() != corpus.vocab_size())
    throw ArgumentError("graph was not built from this corpus");
  const auto& a_hat = graph.normalized_adjacency();

  const auto split = carve_validation(corpus, config.val_fraction, config.seed);
  if (split.train.empty()) throw ArgumentError("empty training set");

  std::vector<std::uint32_t> labels(corpus.num_docs());
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) labels[d] = corpus.documents[d].label;

  const auto dims = layer_dims(x.dim, config.n_layers, config.hidden_dim,
                               static_cast<Index>(corpus.num_labels()));
  TrainResult result;
  GcnModel model = init_model(dims, derive_seed({config.seed, 0x1a1ULL}));
  AdamState adam;
  EarlyStopper stopper(config.patience);
  GcnModel best = model;
  result.history.n_train_docs = split.train.size();
  result.history.n_val_docs = split.val.size();
  // Without validation documents the training loss (eval mode) is monitored.
  const auto& monitor_docs = split.val.empty() ? split.train : split.val;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    ForwardOptions fo;
    fo.train_mode = true;
    fo.dropout = config.dropout;
    fo.dropout_seed = derive_seed({config.seed, 0xe90cULL, static_cast<std::uint64_t>(epoch)});
    auto cache = forward(model, a_hat, x, fo);
    double train_loss = masked_cross_entropy(cache.output, labels, split.train);
    if (config.l2_weight > 0.0) train_loss += config.l2_weight * squared_weight_norm(model);
    auto grads = backward(model, a_hat, cache, labels, split.train, config.l2_weight);
    adam_step(adam, model, grads, config.learning_rate);

    auto eval = forward(model, a_hat, x);
    const double val_loss = masked_cross_entropy(eval.output, labels, monitor_docs);
    result.history.train_loss.push_back(train_loss);
    result.history.val_loss.push_back(val_loss);
    result.history.val_accuracy.push_back(accuracy_on(eval.output, labels, monitor_docs));
    result.history.stop_epoch = epoch;

    const bool stop = stopper.update(epoch, val_loss);
    if (stopper.improved()) best = model;
    if (stop) break;
  }
  result.history.best_epoch = stopper.best_epoch();
  result.model = std::move(best);
  return result;
}

// ---------------------------------------------------------------- checkpoints

void save_checkpoint(std::ostream& out, const GcnModel& model) {
  const auto dims = model.dims();
  out << "GCN " << model.num_layers();
  for (auto d : dims) out << ' ' << d;
  out << '\n';
  for (const auto& w : model.weights()) {
    for (Index r = 0; r < w.rows(); ++r) {
      auto row = w.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) {
        if (c) out << ' ';
        out << sparse::format_double(row[c]);
      }
      out << '\n';
    }
  }
}

void save_checkpoint(const std::filesystem::path& path, const GcnModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write checkpoint '" + path.string() + "'");
  save_checkpoint(out, model);
  if (!out) throw LoadError("failed writing checkpoint '" + path.string() + "'");
}

GcnModel load_checkpoint(std::istream& in) {
  std::string line;
  std::getline(in, line);
  std::istringstream header(line);
  std::string tag;
  std::size_t n_layers = 0;
  if (!(header >> tag >> n_layers) || tag != "GCN" || n_layers == 0)
    throw LoadError("bad checkpoint header '" + line + "'");
  std::vector<Index> dims(n_layers + 1);
  for (auto& d : dims)
    if (!(header >> d) || d <= 0) throw LoadError("bad checkpoint dims in '" + line + "'");

  std::vector<DenseMatrix> weights;
  for (std::size_t l = 0; l < n_layers; ++l) {
    DenseMatrix w(dims[l], dims[l + 1]);
    for (Index r = 0; r < w.rows(); ++r) {
      if (!std::getline(in, line)) throw LoadError("checkpoint truncated");
      const char* p = line.data();
      const char* end = p + line.size();
      for (auto& v : w.row(r)) {
        while (p < end && *p == ' ') ++p;
        auto res = std::from_chars(p, end, v);
        if (res.ec != std::errc()) throw LoadError("bad checkpoint value in layer " + std::to_string(l));
        p = res.ptr;
      }
    }
    if (!w.all_finite()) throw LoadError("checkpoint contains non-finite weights");
    weights.push_back(std::move(w));
  }
  return GcnModel(std::move(weights));
}

GcnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint '" + path.string() + "'");
  return load_checkpoint(in);
}

}  // namespace textgcn::gcn
