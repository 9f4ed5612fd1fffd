#include "pathomil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pathomil/errors.hpp"
#include "pathomil/rng.hpp"

namespace pathomil {

namespace {

void check_inputs(const DenseMatrix& probs, const std::vector<uint8_t>& labels) {
  if (probs.rows == 0) {
    throw ContractError("metrics: empty prediction set");
  }
  if (probs.cols != 3) {
    throw ContractError("metrics: expected 3 class columns, got " +
                        std::to_string(probs.cols));
  }
  if (labels.size() != probs.rows) {
    throw ContractError("metrics: label count mismatch");
  }
  for (uint8_t y : labels) {
    if (y >= 3) {
      throw ContractError("metrics: label " + std::to_string(y) +
                          " outside {0,1,2}");
    }
  }
}

size_t argmax_row(const double* row, size_t n) {
  size_t best = 0;
  for (size_t c = 1; c < n; ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

double safe_ratio(double num, double den) {
  return den > 0.0 ? num / den : 0.0;
}

}  // namespace

MetricsReport evaluate_metrics(const DenseMatrix& probs,
                               const std::vector<uint8_t>& labels) {
  check_inputs(probs, labels);
  MetricsReport report;
  report.n_samples = probs.rows;
  for (size_t i = 0; i < probs.rows; ++i) {
    const size_t pred = argmax_row(probs.row(i), probs.cols);
    ++report.confusion[labels[i]][pred];
  }
  size_t trace = 0;
  for (size_t c = 0; c < 3; ++c) trace += report.confusion[c][c];
  report.accuracy = double(trace) / double(report.n_samples);

  double f1_sum = 0.0;
  for (size_t c = 0; c < 3; ++c) {
    size_t tp = report.confusion[c][c];
    size_t pred_c = 0, true_c = 0;
    for (size_t o = 0; o < 3; ++o) {
      pred_c += report.confusion[o][c];
      true_c += report.confusion[c][o];
    }
    report.precision[c] = safe_ratio(double(tp), double(pred_c));
    report.recall[c] = safe_ratio(double(tp), double(true_c));
    report.f1[c] = safe_ratio(2.0 * report.precision[c] * report.recall[c],
                              report.precision[c] + report.recall[c]);
    f1_sum += report.f1[c];
  }
  report.macro_f1 = f1_sum / 3.0;
  report.auc_macro_ovr = roc_auc_macro_ovr(probs, labels);
  return report;
}

double roc_auc_macro_ovr(const DenseMatrix& probs,
                         const std::vector<uint8_t>& labels) {
  check_inputs(probs, labels);
  const size_t m = probs.rows;
  double auc_sum = 0.0;
  size_t scored = 0;
  std::vector<size_t> order(m);
  std::vector<double> ranks(m);
  for (size_t c = 0; c < 3; ++c) {
    size_t n_pos = 0;
    for (uint8_t y : labels) n_pos += (y == c);
    const size_t n_neg = m - n_pos;
    if (n_pos == 0 || n_neg == 0) continue;

    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return probs.at(a, c) < probs.at(b, c);
    });
    // Average ranks across ties (1-based), giving tied pairs 0.5 credit.
    size_t i = 0;
    while (i < m) {
      size_t j = i;
      while (j + 1 < m && probs.at(order[j + 1], c) == probs.at(order[i], c)) {
        ++j;
      }
      const double avg_rank = 0.5 * double(i + 1 + j + 1);
      for (size_t t = i; t <= j; ++t) ranks[order[t]] = avg_rank;
      i = j + 1;
    }
    double pos_rank_sum = 0.0;
    for (size_t t = 0; t < m; ++t) {
      if (labels[t] == c) pos_rank_sum += ranks[t];
    }
    const double u =
        pos_rank_sum - double(n_pos) * double(n_pos + 1) / 2.0;
    auc_sum += u / (double(n_pos) * double(n_neg));
    ++scored;
  }
  if (scored == 0) {
    throw ContractError(
        "roc_auc_macro_ovr: no class has both positives and negatives");
  }
  return auc_sum / double(scored);
}

FoldAssignment stratified_kfold(const std::vector<uint8_t>& labels, size_t k,
                                uint64_t seed) {
  if (k < 2) {
    throw ContractError("stratified_kfold: k must be >= 2");
  }
  FoldAssignment assignment;
  assignment.folds.assign(k, {});
  for (size_t c = 0; c < 3; ++c) {
    std::vector<size_t> members;
    for (size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= 3) {
        throw ContractError("stratified_kfold: label out of range");
      }
      if (labels[i] == c) members.push_back(i);
    }
    RngStream rng(derive_seed(seed, 100 + c));
    rng.shuffle(members);
    for (size_t i = 0; i < members.size(); ++i) {
      assignment.folds[i % k].push_back(members[i]);
    }
  }
  for (auto& fold : assignment.folds) {
    std::sort(fold.begin(), fold.end());
  }
  return assignment;
}

}  // namespace pathomil
