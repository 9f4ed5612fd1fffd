#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pathomil/matrix.hpp"

namespace pathomil {

struct MetricsReport {
  std::array<std::array<size_t, 3>, 3> confusion{};  // [true][predicted]
  double accuracy = 0.0;
  std::array<double, 3> precision{};
  std::array<double, 3> recall{};
  std::array<double, 3> f1{};
  double macro_f1 = 0.0;
  double auc_macro_ovr = 0.0;
  size_t n_samples = 0;
};

// Predicted class = argmax probability (lowest index wins ties). Per-class
// precision/recall/F1 use the 0/0 -> 0 convention; macro-F1 is the unweighted
// mean over all three classes.
MetricsReport evaluate_metrics(const DenseMatrix& probs,
                               const std::vector<uint8_t>& labels);

// Macro one-vs-rest AUC via the rank (Mann-Whitney) formulation with 0.5
// credit for score ties. Classes lacking both a positive and a negative are
// skipped; errors if no class is scorable.
double roc_auc_macro_ovr(const DenseMatrix& probs,
                         const std::vector<uint8_t>& labels);

// Fold assignment: per class, indices are shuffled by a canonical sub-stream
// and dealt round-robin, so per-class fold counts differ by at most 1.
struct FoldAssignment {
  std::vector<std::vector<size_t>> folds;  // dataset indices, ascending
};

FoldAssignment stratified_kfold(const std::vector<uint8_t>& labels, size_t k,
                                uint64_t seed);

}  // namespace pathomil
