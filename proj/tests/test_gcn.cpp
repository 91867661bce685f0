#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "textgcn/error.hpp"
#include "textgcn/gcn.hpp"

using namespace textgcn;
using namespace textgcn::gcn;

namespace {

oracle::Dense rows_of(const DenseMatrix& m) {
  oracle::Dense d = oracle::zeros(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) d[r][c] = m(r, c);
  return d;
}

Corpus separable_corpus(int per_class, int test_per_class = 0) {
  auto dir = testutil::temp_dir("gcn_separable_" + std::to_string(per_class) + "_" + std::to_string(test_per_class));
  auto [meta, text] = testutil::write_separable_corpus(dir, per_class, test_per_class);
  return load_corpus(meta, text, testutil::plain_preproc());
}

}  // namespace

TEST_SUITE("gcn") {

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_layers = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("default hyperparameters") {
  TrainConfig c;
  CHECK(c.n_layers == 2);
  CHECK(c.hidden_dim == 200);
  CHECK(c.learning_rate == 0.02);
  CHECK(c.dropout == 0.5);
  CHECK(c.max_epochs == 200);
  CHECK(c.patience == 10);
}

TEST_CASE("init_model shapes, determinism and range") {
  std::vector<Index> small{4, 2};
  CHECK(init_model(small, 42) == init_model(small, 42));
  CHECK_FALSE(init_model(small, 42) == init_model(small, 43));
  std::vector<Index> dims{100, 200, 5};
  auto m = init_model(dims, 1);
  REQUIRE(m.num_layers() == 2);
  CHECK(m.weights()[0].rows() == 100);
  CHECK(m.weights()[0].cols() == 200);
  CHECK(m.weights()[1].rows() == 200);
  CHECK(m.weights()[1].cols() == 5);
  CHECK(m.dims() == dims);
  const double bound = std::sqrt(6.0 / 300.0);
  for (double v : m.weights()[0].values()) CHECK(std::abs(v) <= bound);
  CHECK(layer_dims(10, 3, 7, 2) == std::vector<Index>{10, 7, 7, 2});
  CHECK(layer_dims(10, 1, 7, 2) == std::vector<Index>{10, 2});
}

TEST_CASE("single layer with zero weights gives uniform output") {
  GcnModel m({DenseMatrix(3, 4)});
  auto cache = forward(m, sparse::CsrMatrix::identity(3), onehot_features(3));
  for (double v : cache.output.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("two-layer forward matches the dense oracle") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 10; ++trial) {
    auto a_hat = sparse::sym_normalize(testutil::random_symmetric(rng, 4, 0.7));
    DenseMatrix h0(4, 3);
    for (auto& v : h0.values()) v = g(rng);
    std::vector<Index> dims{3, 5, 2};
    auto model = init_model(dims, rng());
    auto got = forward(model, a_hat, dense_features(h0)).output;
    auto expect = oracle::gcn_forward(rows_of(a_hat.to_dense()), rows_of(h0),
                                      {rows_of(model.weights()[0]), rows_of(model.weights()[1])});
    double diff = 0.0;
    for (Index r = 0; r < 4; ++r)
      for (Index c = 0; c < 2; ++c) diff = std::max(diff, std::abs(got(r, c) - expect[r][c]));
    CHECK(diff < 1e-12);

    // one-hot input against an explicit identity
    std::vector<Index> odims{4, 3, 2};
    auto om = init_model(odims, rng());
    auto oh = forward(om, a_hat, onehot_features(4)).output;
    auto oexpect = oracle::gcn_forward(rows_of(a_hat.to_dense()), rows_of(DenseMatrix::identity(4)),
                                       {rows_of(om.weights()[0]), rows_of(om.weights()[1])});
    for (Index r = 0; r < 4; ++r)
      for (Index c = 0; c < 2; ++c) CHECK(std::abs(oh(r, c) - oexpect[r][c]) < 1e-12);
  }
}

TEST_CASE("forward rejects mismatched dimensions") {
  GcnModel m({DenseMatrix(3, 2)});
  CHECK_THROWS_AS(forward(m, sparse::CsrMatrix::identity(4), onehot_features(4)), ArgumentError);
  CHECK_THROWS_AS(forward(m, sparse::CsrMatrix::identity(3), onehot_features(4)), ArgumentError);
}

TEST_CASE("softmax rows are distributions") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 30.0);
  DenseMatrix logits(50, 4);
  for (auto& v : logits.values()) v = g(rng);
  auto z = softmax_rows(logits);
  for (Index r = 0; r < z.rows(); ++r) {
    double s = 0.0;
    for (double v : z.row(r)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  DenseMatrix huge(1, 2, {1000.0, 999.0});
  CHECK(softmax_rows(huge).all_finite());
}

TEST_CASE("masked cross entropy examples") {
  std::vector<std::uint32_t> labels{2, 0, 1, 3};
  std::vector<std::size_t> one{0};
  DenseMatrix uniform(4, 4, 0.25);
  CHECK(masked_cross_entropy(uniform, labels, one) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  std::vector<std::size_t> all{0, 1, 2, 3};
  CHECK(masked_cross_entropy(uniform, labels, all) == doctest::Approx(4.0 * std::log(4.0)));

  DenseMatrix perfect(1, 3, {0.0, 1.0, 0.0});
  std::vector<std::uint32_t> y1{1};
  std::vector<std::size_t> m0{0};
  CHECK(masked_cross_entropy(perfect, y1, m0) == 0.0);

  std::vector<std::size_t> empty;
  CHECK_THROWS_AS(masked_cross_entropy(uniform, labels, empty), ArgumentError);

  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 20; ++trial) {
    DenseMatrix logits(5, 3);
    for (auto& v : logits.values()) v = g(rng);
    auto z = softmax_rows(logits);
    std::vector<std::uint32_t> y{0, 2, 1, 1, 0};
    std::vector<std::size_t> mask{0, 2, 4};
    double expect = 0.0;
    for (auto d : mask) expect -= std::log(z(static_cast<Index>(d), y[d]));
    const double got = masked_cross_entropy(z, y, mask);
    CHECK(std::abs(got - expect) < 1e-12);
    CHECK(got >= 0.0);
  }
}

TEST_CASE("gradients match central finite differences") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 30; ++trial) {
    const int layers = 1 + trial % 3;
    auto c = testutil::random_grad_case(rng, 10, 3, layers, trial % 2 == 0, trial % 5 == 0 ? 0.01 : 0.0);
    CHECK(testutil::gradient_relative_error(c) < 1e-5);
  }
}

TEST_CASE("gradient ignores labels of unmasked documents") {
  std::mt19937_64 rng(3);
  auto c = testutil::random_grad_case(rng, 8, 3, 2, true);
  std::set<std::size_t> masked(c.mask.begin(), c.mask.end());
  auto cache = forward(c.model, c.a_hat, c.x);
  auto before = backward(c.model, c.a_hat, cache, c.labels, c.mask);
  auto labels = c.labels;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (!masked.count(i)) labels[i] = (labels[i] + 1) % 2;
  CHECK(backward(c.model, c.a_hat, cache, labels, c.mask) == before);
}

TEST_CASE("gradient at zero weights with one-hot input") {
  std::mt19937_64 rng(10);
  const int n = 5;
  const int f = 3;
  auto a_hat = sparse::sym_normalize(testutil::random_symmetric(rng, n, 0.6));
  GcnModel m({DenseMatrix(n, f)});
  std::vector<std::uint32_t> labels{0, 2, 1, 0, 1};
  std::vector<std::size_t> mask{0, 1, 3};
  auto cache = forward(m, a_hat, onehot_features(n));
  auto grads = backward(m, a_hat, cache, labels, mask);
  // delta = (uniform - Y) on masked rows; dW = A_hat delta
  oracle::Dense delta = oracle::zeros(n, f);
  for (auto d : mask)
    for (int k = 0; k < f; ++k) delta[d][k] = 1.0 / f - (labels[d] == static_cast<std::uint32_t>(k) ? 1.0 : 0.0);
  auto expect = oracle::multiply(rows_of(a_hat.to_dense()), delta);
  for (int r = 0; r < n; ++r)
    for (int k = 0; k < f; ++k) CHECK(std::abs(grads[0](r, k) - expect[r][k]) < 1e-14);
}

TEST_CASE("backward rejects a stale cache") {
  std::mt19937_64 rng(4);
  auto c = testutil::random_grad_case(rng, 6, 3, 2, false);
  auto cache = forward(c.model, c.a_hat, c.x);
  c.model.mutable_weights()[0](0, 0) += 1.0;
  CHECK_THROWS_AS(backward(c.model, c.a_hat, cache, c.labels, c.mask), ContractError);
  GcnModel other = c.model;
  auto fresh = forward(c.model, c.a_hat, c.x);
  CHECK_THROWS_AS(backward(other, c.a_hat, fresh, c.labels, c.mask), ContractError);
}

TEST_CASE("dropout is unbiased in expectation") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> g;
  auto a_hat = sparse::sym_normalize(testutil::random_symmetric(rng, 6, 0.5));
  DenseMatrix h0(6, 4);
  for (auto& v : h0.values()) v = g(rng);
  std::vector<Index> dims{4, 3};
  auto model = init_model(dims, 5);
  const auto x = dense_features(h0);
  const auto eval = forward(model, a_hat, x).pre_activations[0];
  DenseMatrix mean(eval.rows(), eval.cols());
  const int n_seeds = 10000;
  for (int s = 0; s < n_seeds; ++s) {
    ForwardOptions fo;
    fo.train_mode = true;
    fo.dropout = 0.5;
    fo.dropout_seed = static_cast<std::uint64_t>(s);
    const auto pre = forward(model, a_hat, x, fo).pre_activations[0];
    for (std::size_t k = 0; k < mean.size(); ++k) mean.values()[k] += pre.values()[k] / n_seeds;
  }
  double diff = 0.0;
  double norm = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    diff += std::pow(mean.values()[k] - eval.values()[k], 2);
    norm += std::pow(eval.values()[k], 2);
  }
  CHECK(std::sqrt(diff / norm) < 0.02);
}

TEST_CASE("train mode without dropout equals eval mode") {
  std::mt19937_64 rng(5);
  auto c = testutil::random_grad_case(rng, 8, 3, 2, true);
  ForwardOptions fo;
  fo.train_mode = true;
  fo.dropout = 0.0;
  CHECK(forward(c.model, c.a_hat, c.x, fo).output == forward(c.model, c.a_hat, c.x).output);
}

TEST_CASE("adam first step and fixed point") {
  GcnModel m({DenseMatrix(1, 1, 0.0)});
  AdamState st;
  adam_step(st, m, {DenseMatrix(1, 1, 1.0)}, 0.02);
  CHECK(m.weights()[0](0, 0) == doctest::Approx(-0.02).epsilon(1e-6));
  CHECK(st.step == 1);

  GcnModel z({DenseMatrix(2, 2, {1.0, -2.0, 3.0, 0.5})});
  const GcnModel before = z;
  AdamState zs;
  adam_step(zs, z, {DenseMatrix(2, 2)}, 0.02);
  CHECK(z == before);
}

TEST_CASE("adam trajectories are reproducible") {
  auto run = [] {
    std::mt19937_64 rng(9);
    auto c = testutil::random_grad_case(rng, 8, 3, 2, true);
    AdamState st;
    for (int k = 0; k < 20; ++k) {
      auto cache = forward(c.model, c.a_hat, c.x);
      adam_step(st, c.model, backward(c.model, c.a_hat, cache, c.labels, c.mask), 0.02);
    }
    return c.model;
  };
  CHECK(run() == run());
}

TEST_CASE("early stopping with strictly worsening loss stops at epoch 11") {
  EarlyStopper s(10);
  int stopped = 0;
  for (int epoch = 1; epoch <= 200; ++epoch)
    if (s.update(epoch, static_cast<double>(epoch))) {
      stopped = epoch;
      break;
    }
  CHECK(stopped == 11);
  CHECK(s.best_epoch() == 1);
  CHECK(s.best_loss() == 1.0);
}

TEST_CASE("early stopping resets on improvement") {
  EarlyStopper s(3);
  CHECK_FALSE(s.update(1, 5.0));
  CHECK_FALSE(s.update(2, 6.0));
  CHECK_FALSE(s.update(3, 6.0));
  CHECK_FALSE(s.update(4, 4.0));
  CHECK(s.improved());
  CHECK_FALSE(s.update(5, 4.0));
  CHECK_FALSE(s.update(6, 4.5));
  CHECK(s.update(7, 4.1));
  CHECK(s.best_epoch() == 4);
}

TEST_CASE("validation carve-out") {
  auto c = separable_corpus(20);
  auto split = carve_validation(c, 0.1, 3);
  CHECK(split.val.size() == 4);
  CHECK(split.train.size() == 36);
  std::set<std::uint32_t> val_labels;
  for (auto d : split.val) val_labels.insert(c.documents[d].label);
  CHECK(val_labels.size() == 2);
  auto again = carve_validation(c, 0.1, 3);
  CHECK(again.val == split.val);
  CHECK(carve_validation(separable_corpus(2), 0.1, 3).val.empty());
  auto none = carve_validation(c, 0.0, 3);
  CHECK(none.val.empty());
  CHECK(none.train.size() == 40);
}

TEST_CASE("argmax and prediction rules") {
  DenseMatrix z(2, 3, {0.1, 0.7, 0.2, 0.5, 0.5, 0.0});
  std::vector<std::size_t> rows{0, 1};
  CHECK(argmax_rows(z, rows) == std::vector<std::uint32_t>{1, 0});

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  DenseMatrix logits(20, 4);
  for (auto& v : logits.values()) v = g(rng);
  DenseMatrix shifted = logits;
  for (Index r = 0; r < 20; ++r)
    for (auto& v : shifted.row(r)) v += 3.0 * static_cast<double>(r) - 10.0;
  std::vector<std::size_t> all(20);
  std::iota(all.begin(), all.end(), 0);
  CHECK(argmax_rows(softmax_rows(logits), all) == argmax_rows(softmax_rows(shifted), all));
  CHECK(argmax_rows(logits, all) == argmax_rows(shifted, all));
}

TEST_CASE("training overfits a separable corpus") {
  auto c = separable_corpus(5);
  auto g = build_graph(c, EdgeConfig::kD2W_W2W);
  TrainConfig cfg;
  cfg.seed = 1;
  auto x = onehot_features(static_cast<Index>(g.num_nodes()));
  auto res = train(g, x, c, cfg);
  CHECK(res.history.stop_epoch <= 200);
  CHECK(res.history.best_epoch >= 1);
  CHECK(res.history.train_loss.size() == static_cast<std::size_t>(res.history.stop_epoch));
  auto train_docs = c.indices_with_split(Split::kTrain);
  auto pred = predict(res.model, g.normalized_adjacency(), x, train_docs);
  for (std::size_t i = 0; i < train_docs.size(); ++i) CHECK(pred[i] == c.documents[train_docs[i]].label);
  CHECK(res.history.val_loss[static_cast<std::size_t>(res.history.best_epoch - 1)] < res.history.val_loss.front());
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto c = separable_corpus(5, 2);
  auto g = build_graph(c, EdgeConfig::kD2W_W2W_D2D);
  TrainConfig cfg;
  cfg.hidden_dim = 16;
  cfg.max_epochs = 30;
  cfg.seed = 11;
  auto x = onehot_features(static_cast<Index>(g.num_nodes()));
  auto a = train(g, x, c, cfg);
  auto b = train(g, x, c, cfg);
  CHECK(a.history == b.history);
  CHECK(a.model == b.model);
  cfg.seed = 12;
  CHECK_FALSE(train(g, x, c, cfg).model == a.model);
}

TEST_CASE("train rejects a graph from another corpus") {
  auto c = separable_corpus(5);
  auto other = testutil::toy_corpus({"a b", "c d"});
  auto g = build_graph(other, EdgeConfig::kD2W);
  CHECK_THROWS_AS(train(g, onehot_features(static_cast<Index>(g.num_nodes())), c, TrainConfig{}), ArgumentError);
}

TEST_CASE("checkpoint round trip") {
  std::vector<Index> dims{5, 4, 3};
  auto m = init_model(dims, 8);
  std::stringstream ss;
  save_checkpoint(ss, m);
  CHECK(load_checkpoint(ss) == m);
  auto dir = testutil::temp_dir("gcn_ckpt");
  save_checkpoint(dir / "m.ckpt", m);
  CHECK(load_checkpoint(dir / "m.ckpt") == m);
  std::stringstream bad("GCN 1 2\n1 2\n");
  CHECK_THROWS_AS(load_checkpoint(bad), LoadError);
  std::stringstream truncated("GCN 1 2 1\n1\n");
  CHECK_THROWS_AS(load_checkpoint(truncated), LoadError);
}

}  // TEST_SUITE
