#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathomil/bag.hpp"
#include "pathomil/gbdt.hpp"
#include "pathomil/manifest.hpp"
#include "pathomil/metrics.hpp"
#include "pathomil/models.hpp"

namespace pathomil {

// Optimization settings for one model family. Defaults mirror the published
// training recipes for each head.
struct TrainConfig {
  ModelKind kind = ModelKind::kClamSB;
  double lr = 3e-5;
  double reg = 1e-4;  // L2 weight decay applied through the optimizer
  double dropout = 0.4;
  size_t max_epochs = 100;
  size_t warmup_epochs = 5;
  double bag_weight = 0.5;  // bag loss share; 1-bag_weight goes to instances
  size_t top_b = 8;         // pseudo-labeled instances per side
  FocalLossConfig focal;
  size_t patience = 20;  // early-stop epochs without val-loss improvement
  uint64_t seed = 42;

  // Network shape knobs; feat_dim is always taken from the data.
  ClamDims clam_dims;
  AbmilDims abmil_dims;

  static TrainConfig clam_defaults();
  static TrainConfig abmil_defaults();
};

struct EpochStats {
  size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct TrainResult {
  MilModel model;  // parameters of the best validation epoch
  std::vector<EpochStats> history;
  size_t best_epoch = 0;
  double best_val_loss = 0.0;
  std::vector<double> class_weights;  // the multi-head model's loss weights
};

// One optimizer step per bag; epoch order reshuffled per epoch; early
// stopping on validation loss with the configured patience; returns the
// best-validation parameters. With an empty validation set the training
// loss drives early stopping instead. Three derived sub-streams of
// cfg.seed drive initialization (0), epoch shuffling (1), and dropout (2).
TrainResult train_model(const std::vector<const FeatureBag*>& train_bags,
                        const std::vector<const FeatureBag*>& val_bags,
                        const TrainConfig& cfg);

// Inverse-class-frequency weights scaled to mean 1 over all classes; classes
// absent from `labels` get weight 0.
std::vector<double> inverse_frequency_weights(
    const std::vector<uint8_t>& labels, size_t n_classes = 3);

DenseMatrix predict_probs(const MilModel& model,
                          const std::vector<const FeatureBag*>& bags);

MetricsReport evaluate_model(const MilModel& model,
                             const std::vector<const FeatureBag*>& bags);

struct FoldResult {
  size_t fold = 0;
  uint64_t fold_seed = 0;
  MetricsReport metrics;
  TrainResult train;
  std::vector<size_t> val_indices;  // indices into the input bag list
};

struct CVResult {
  std::vector<FoldResult> folds;
  double mean_accuracy = 0.0;
  double mean_auc = 0.0;
  double mean_macro_f1 = 0.0;
};

// Stratified k-fold: each fold is held out once (doubling as the
// early-stopping validation set) while the rest trains a fresh model with
// fold seed derive_seed(cfg.seed, 1000 + fold). `jobs` > 1 trains folds on
// worker threads without changing any result. If `splits` is given (aligned
// with `bags`), any test-split entry is rejected — test data must never
// reach training.
CVResult cross_validate(const std::vector<const FeatureBag*>& bags,
                        const TrainConfig& cfg, size_t k, size_t jobs = 1,
                        const std::vector<Split>* splits = nullptr);

// Report of k fold rows plus their arithmetic mean, with the full config
// echoed, serialized as indented JSON with sorted keys so equal runs
// produce equal bytes.
std::string cv_report_json(const CVResult& result, const TrainConfig& cfg,
                           size_t k);

std::string history_to_csv(const std::vector<EpochStats>& history);

// Per-bag 23-value descriptors from the MIL model's eval-mode outputs,
// ready for the boosted-tree stage.
DenseMatrix enhanced_features_for_bags(
    const MilModel& model, const std::vector<const FeatureBag*>& bags);

}  // namespace pathomil
