#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace textgcn::metrics {

struct EvalResult {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  // confusion[gold][pred]
  std::vector<std::vector<std::int64_t>> confusion;

  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

/// Accuracy, macro F1 and support-weighted F1. Zero divisions in precision or
/// recall resolve to 0. Macro F1 averages over classes that occur in the gold
/// labels or the predictions; classes absent from both are left out.
EvalResult evaluate(std::span<const std::uint32_t> pred, std::span<const std::uint32_t> gold,
                    std::size_t n_classes);

}  // namespace textgcn::metrics
