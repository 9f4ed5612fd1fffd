#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pathomil/matrix.hpp"

namespace pathomil {

// Gradient-boosted trees over a multiclass softmax log-loss: one tree per
// class per round, exact greedy split search, second-order leaf weights.
struct GBDTConfig {
  size_t n_rounds = 200;
  double learning_rate = 0.1;
  size_t max_depth = 6;
  double lambda = 1.0;            // L2 penalty on leaf weights
  double gamma_leaf = 0.0;        // per-leaf penalty subtracted from gains
  double min_child_hessian = 1.0; // minimum hessian mass per child
  size_t n_classes = 3;
};

struct TreeNode {
  bool is_leaf = true;
  float weight = 0.0f;       // leaf payload
  uint16_t feature = 0;      // split payload: feature index
  float threshold = 0.0f;    // split payload: go left iff x[feature] < threshold
  int32_t left = -1;
  int32_t right = -1;
};

struct Tree {
  std::vector<TreeNode> nodes;  // pre-order, root at 0
  double predict(const double* x, size_t dim) const;
};

struct TreeEnsemble {
  GBDTConfig config;
  std::vector<std::string> feature_names;  // length = feature count
  std::vector<Tree> trees;                 // round-major: trees[r*K + c]

  size_t n_features() const { return feature_names.size(); }
};

// p = softmax(logits); g_c = p_c - 1[label=c]; h_c = p_c(1-p_c) floored at
// 1e-16 so leaf weights stay finite.
void softmax_grad_hess(const double* logits, size_t n_classes, size_t label,
                       double* g, double* h);

struct SplitCandidate {
  double gain = 0.0;
  float threshold = 0.0f;
};

// `values` ascending, with g/h aligned to the same order. Candidates are
// midpoints between distinct consecutive values; gain is the exact
// second-order objective improvement minus gamma_leaf; children must carry at
// least min_child_hessian hessian mass. Returns nullopt when the best gain
// is <= 0 or no candidate exists.
std::optional<SplitCandidate> find_best_split(
    const std::vector<double>& values, const std::vector<double>& g,
    const std::vector<double>& h, double lambda, double gamma_leaf,
    double min_child_hessian);

// Exact greedy recursion over the referenced sample rows; ties in gain are
// broken toward the lowest feature index.
Tree build_tree(const DenseMatrix& X, const std::vector<size_t>& rows,
                const std::vector<double>& g, const std::vector<double>& h,
                const GBDTConfig& cfg);

struct EnsembleTrainResult {
  TreeEnsemble ensemble;
  // round_losses[0] is the loss of the all-zero model; entry r+1 is the loss
  // after round r. Non-increasing on separable data.
  std::vector<double> round_losses;
};

EnsembleTrainResult train_ensemble(const DenseMatrix& X,
                                   const std::vector<uint8_t>& labels,
                                   const GBDTConfig& cfg,
                                   std::vector<std::string> feature_names = {});

struct EnsemblePrediction {
  std::vector<double> logits;
  std::vector<double> probs;
};

EnsemblePrediction predict_ensemble(const TreeEnsemble& ens, const double* x,
                                    size_t dim);

double multiclass_log_loss(const DenseMatrix& logits,
                           const std::vector<uint8_t>& labels);

// Ensemble container "PGB1": magic | u32 LE JSON header length | JSON
// (config, feature names, tree count) | per tree, pre-order node records
// { u8 leaf flag; leaf: f32 weight | internal: u16 feature + f32 threshold }.
std::vector<uint8_t> serialize_ensemble(const TreeEnsemble& ens);
TreeEnsemble deserialize_ensemble(const std::vector<uint8_t>& bytes);
void save_ensemble(const TreeEnsemble& ens, const std::string& path);
TreeEnsemble load_ensemble(const std::string& path);

// --- MIL-derived slide descriptor -----------------------------------------

inline constexpr size_t kEnhancedFeatureCount = 23;

const std::array<std::string, kEnhancedFeatureCount>& enhanced_feature_names();

// Fixed-order descriptor over one bag's MIL outputs:
//   [0-2] class logits, [3-5] class probabilities, [6] ln(1+n),
//   [7-19] attention statistics (mean, std, min, max, median, skewness,
//          excess kurtosis, entropy in nats, entropy normalized by ln n,
//          top-1 weight, top-5 mass, top-10 mass, Gini coefficient),
//   [20-22] attention q25, q75, IQR (type-7 quantiles).
// The attention vector must sum to 1 within 1e-6.
std::array<double, kEnhancedFeatureCount> build_enhanced_features(
    const std::array<double, 3>& logits, const std::array<double, 3>& probs,
    const std::vector<double>& attention);

}  // namespace pathomil
