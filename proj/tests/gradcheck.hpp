#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "test_util.hpp"
#include "textgcn/features.hpp"
#include "textgcn/gcn.hpp"

namespace testutil {

struct GradCase {
  textgcn::gcn::GcnModel model;
  textgcn::sparse::CsrMatrix a_hat;
  textgcn::FeatureMatrix x;
  std::vector<std::uint32_t> labels;
  std::vector<std::size_t> mask;
  double l2 = 0.0;
};

/// Random instance with N <= max_n nodes, F <= max_f classes, L layers.
inline GradCase random_grad_case(std::mt19937_64& rng, int max_n, int max_f, int n_layers,
                                 bool one_hot, double l2 = 0.0) {
  using textgcn::sparse::DenseMatrix;
  using textgcn::sparse::Index;
  std::uniform_int_distribution<int> nd(2, max_n);
  std::uniform_int_distribution<int> fd(2, max_f);
  std::uniform_int_distribution<int> hd(2, 4);
  std::normal_distribution<double> g;
  GradCase c;
  const int n = nd(rng);
  const int f = fd(rng);
  c.a_hat = textgcn::sparse::sym_normalize(random_symmetric(rng, n, 0.5));
  if (one_hot) {
    c.x = textgcn::onehot_features(n);
  } else {
    DenseMatrix h(n, 3);
    for (auto& v : h.values()) v = g(rng);
    c.x = textgcn::dense_features(std::move(h));
  }
  std::vector<Index> dims{c.x.dim};
  for (int l = 1; l < n_layers; ++l) dims.push_back(hd(rng));
  dims.push_back(f);
  c.model = textgcn::gcn::init_model(dims, rng());
  // scale up so ReLU units are not all tiny
  for (auto& w : c.model.mutable_weights())
    for (auto& v : w.values()) v *= 2.0;
  std::uniform_int_distribution<int> label(0, f - 1);
  c.labels.resize(static_cast<std::size_t>(n));
  for (auto& y : c.labels) y = static_cast<std::uint32_t>(label(rng));
  std::bernoulli_distribution pick(0.6);
  for (int i = 0; i < n; ++i)
    if (pick(rng)) c.mask.push_back(static_cast<std::size_t>(i));
  if (c.mask.empty()) c.mask.push_back(0);
  c.l2 = l2;
  return c;
}

inline double grad_case_loss(const GradCase& c, const textgcn::gcn::GcnModel& m) {
  auto cache = textgcn::gcn::forward(m, c.a_hat, c.x);
  return textgcn::gcn::masked_cross_entropy(cache.output, c.labels, c.mask) +
         c.l2 * textgcn::gcn::squared_weight_norm(m);
}

/// ||g_analytic - g_fd|| / ||g_fd|| over all weights, central differences.
inline double gradient_relative_error(const GradCase& c, double eps = 1e-6) {
  auto cache = textgcn::gcn::forward(c.model, c.a_hat, c.x);
  auto analytic = textgcn::gcn::backward(c.model, c.a_hat, cache, c.labels, c.mask, c.l2);
  double diff2 = 0.0;
  double norm2 = 0.0;
  textgcn::gcn::GcnModel probe = c.model;
  for (std::size_t l = 0; l < probe.num_layers(); ++l) {
    const std::size_t n = probe.weights()[l].size();
    for (std::size_t k = 0; k < n; ++k) {
      const double orig = c.model.weights()[l].values()[k];
      probe.mutable_weights()[l].values()[k] = orig + eps;
      const double up = grad_case_loss(c, probe);
      probe.mutable_weights()[l].values()[k] = orig - eps;
      const double down = grad_case_loss(c, probe);
      probe.mutable_weights()[l].values()[k] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double d = analytic[l].values()[k] - fd;
      diff2 += d * d;
      norm2 += fd * fd;
    }
  }
  if (norm2 == 0.0) return std::sqrt(diff2);
  return std::sqrt(diff2 / norm2);
}

}  // namespace testutil
