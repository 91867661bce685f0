#include "textgcn/metrics.hpp"

#include "textgcn/error.hpp"

namespace textgcn::metrics {

EvalResult evaluate(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gold,
                    std::size_t n_classes) {
  if (pred.size() != gold.size()) throw ArgumentError("pred and gold lengths differ");
  if (pred.empty()) throw ArgumentError("cannot evaluate zero predictions");

  EvalResult r;
  r.confusion.assign(n_classes, std::vector<std::int64_t>(n_classes, 0));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] >= n_classes || gold[i] >= n_classes) throw ArgumentError("label index out of range");
    ++r.confusion[gold[i]][pred[i]];
  }

  std::int64_t correct = 0;
  const auto total = static_cast<double>(pred.size());
  double macro_sum = 0.0;
  std::size_t macro_count = 0;
  double weighted_sum = 0.0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const std::int64_t tp = r.confusion[c][c];
    std::int64_t support = 0;
    std::int64_t predicted = 0;
    for (std::size_t k = 0; k < n_classes; ++k) {
      support += r.confusion[c][k];
      predicted += r.confusion[k][c];
    }
    correct += tp;
    if (support == 0 && predicted == 0) continue;
    const double precision = predicted ? static_cast<double>(tp) / static_cast<double>(predicted) : 0.0;
    const double recall = support ? static_cast<double>(tp) / static_cast<double>(support) : 0.0;
    const double f1 = precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
    macro_sum += f1;
    ++macro_count;
    weighted_sum += f1 * static_cast<double>(support);
  }
  r.accuracy = static_cast<double>(correct) / total;
  r.macro_f1 = macro_count ? macro_sum / static_cast<double>(macro_count) : 0.0;
  r.weighted_f1 = weighted_sum / total;
  return r;
}

}  // namespace textgcn::metrics
