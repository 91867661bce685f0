#pragma once

// Multi-layer GCN over a fixed normalized adjacency:
//   H(l+1) = ReLU(A_hat H(l) W(l))   for hidden layers
//   Z      = softmax(A_hat H(L) W(L))
// trained full-batch on the masked (labelled documents) cross-entropy with
// hand-derived gradients and Adam.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "textgcn/corpus.hpp"
#include "textgcn/features.hpp"
#include "textgcn/sparse.hpp"
#include "textgcn/textgraph.hpp"

namespace textgcn::gcn {

using sparse::CsrMatrix;
using sparse::DenseMatrix;
using sparse::Index;

struct TrainConfig {
  int n_layers = 2;
  Index hidden_dim = 200;
  double learning_rate = 0.02;
  double dropout = 0.5;
  double l2_weight = 0.0;
  int max_epochs = 200;
  int patience = 10;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;  // throws ArgumentError
};

class GcnModel {
 public:
  GcnModel() = default;
  explicit GcnModel(std::vector<DenseMatrix> weights);

  std::size_t num_layers() const { return weights_.size(); }
  std::vector<Index> dims() const;
  const std::vector<DenseMatrix>& weights() const { return weights_; }
  std::vector<DenseMatrix>& mutable_weights() {
    ++version_;
    return weights_;
  }

  /// Bumped on every mutation; forward caches remember the version they saw.
  std::uint64_t version() const { return version_; }

  friend bool operator==(const GcnModel& a, const GcnModel& b) { return a.weights_ == b.weights_; }

 private:
  std::vector<DenseMatrix> weights_;
  std::uint64_t version_ = 0;
};

/// [input, hidden x (n_layers - 1), n_classes]
std::vector<Index> layer_dims(Index input_dim, int n_layers, Index hidden_dim, Index n_classes);

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), seeded.
GcnModel init_model(std::span<const Index> dims, std::uint64_t seed);

/// Everything backward() needs from one forward pass.
struct ForwardCache {
  // inputs[l] is the (dropped-out) input to layer l. Empty for a one-hot
  // first layer, whose input is diag(onehot_scale).
  std::vector<DenseMatrix> inputs;
  std::vector<double> onehot_scale;
  // keep_scale[l][k] is the inverted-dropout factor applied to element k of
  // layer l's input (0 or 1/(1-p)); empty when dropout was off.
  std::vector<std::vector<double>> keep_scale;
  std::vector<DenseMatrix> pre_activations;  // A_hat X(l) W(l)
  DenseMatrix output;                        // row-wise softmax of the last

  std::uint64_t model_version = 0;
  const GcnModel* model = nullptr;
  Index n_nodes = 0;
  bool one_hot_input = false;
};

struct ForwardOptions {
  bool train_mode = false;
  double dropout = 0.5;
  std::uint64_t dropout_seed = 0;
};

ForwardCache forward(const GcnModel& model, const CsrMatrix& a_hat, const FeatureMatrix& x,
                     const ForwardOptions& options = {});

/// Row-wise softmax with max subtraction.
DenseMatrix softmax_rows(const DenseMatrix& logits);

/// -sum over masked documents of ln Z[d, label_d]. `labels` is indexed by
/// document (node) index; entries outside the mask are ignored.
double masked_cross_entropy(const DenseMatrix& z, std::span<const std::uint32_t> labels,
                            std::span<const std::size_t> mask);

/// sum over layers of ||W||_F^2
double squared_weight_norm(const GcnModel& model);

/// Gradient of masked_cross_entropy + l2_weight * squared_weight_norm.
std::vector<DenseMatrix> backward(const GcnModel& model, const CsrMatrix& a_hat,
                                  const ForwardCache& cache, std::span<const std::uint32_t> labels,
                                  std::span<const std::size_t> mask, double l2_weight = 0.0);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::int64_t step = 0;
  std::vector<DenseMatrix> first_moment;
  std::vector<DenseMatrix> second_moment;
};

void adam_step(AdamState& state, GcnModel& model, const std::vector<DenseMatrix>& grads,
               double learning_rate);

/// Stops once the monitored loss has failed to improve for `patience`
/// consecutive epochs.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience) : patience_(patience) {}

  /// Records `loss` for `epoch` (1-based); true when training should stop.
  bool update(int epoch, double loss);
  bool improved() const { return bad_epochs_ == 0; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int bad_epochs_ = 0;
  int best_epoch_ = 0;
  double best_loss_ = 0.0;
  bool has_best_ = false;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;
  int stop_epoch = 0;  // last epoch run, 1-based
  int best_epoch = 0;  // epoch whose weights were returned, 1-based
  std::size_t n_train_docs = 0;
  std::size_t n_val_docs = 0;

  friend bool operator==(const TrainHistory&, const TrainHistory&) = default;
};

struct TrainResult {
  GcnModel model;
  TrainHistory history;
};

/// Seeded, label-stratified hold-out of floor(val_fraction * |train|)
/// training documents. Every label keeps at least one training document.
struct TrainValSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
TrainValSplit carve_validation(const Corpus& corpus, double val_fraction, std::uint64_t seed);

TrainResult train(const TextGraph& graph, const FeatureMatrix& x, const Corpus& corpus,
                  const TrainConfig& config);

/// Argmax of each row; ties go to the lowest label index.
std::vector<std::uint32_t> argmax_rows(const DenseMatrix& z, std::span<const std::size_t> rows);

std::vector<std::uint32_t> predict(const GcnModel& model, const CsrMatrix& a_hat,
                                   const FeatureMatrix& x, std::span<const std::size_t> doc_indices);

// Checkpoint: `GCN L d0 d1 ... dL`, then the rows of each weight matrix.
void save_checkpoint(std::ostream& out, const GcnModel& model);
void save_checkpoint(const std::filesystem::path& path, const GcnModel& model);
GcnModel load_checkpoint(std::istream& in);
GcnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace textgcn::gcn
