#include "pathomil/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "pathomil/errors.hpp"
#include "pathomil/nn.hpp"
#include "pathomil/rng.hpp"

namespace pathomil {

using nlohmann::json;

TrainConfig TrainConfig::clam_defaults() {
  TrainConfig cfg;
  cfg.kind = ModelKind::kClamSB;
  cfg.lr = 3e-5;
  cfg.reg = 1e-4;
  cfg.dropout = 0.4;
  cfg.max_epochs = 100;
  cfg.warmup_epochs = 5;
  cfg.bag_weight = 0.5;
  cfg.top_b = 8;
  cfg.patience = 20;
  return cfg;
}

TrainConfig TrainConfig::abmil_defaults() {
  TrainConfig cfg;
  cfg.kind = ModelKind::kAbmil;
  cfg.lr = 4e-4;
  cfg.reg = 1e-4;
  cfg.dropout = 0.4;
  cfg.max_epochs = 20;
  cfg.warmup_epochs = 0;
  cfg.patience = 5;
  return cfg;
}

std::vector<double> inverse_frequency_weights(
    const std::vector<uint8_t>& labels, size_t n_classes) {
  std::vector<size_t> counts(n_classes, 0);
  for (uint8_t y : labels) {
    if (y >= n_classes) {
      throw ContractError("inverse_frequency_weights: label out of range");
    }
    ++counts[y];
  }
  std::vector<double> weights(n_classes, 0.0);
  double sum = 0.0;
  for (size_t c = 0; c < n_classes; ++c) {
    if (counts[c] > 0) weights[c] = 1.0 / double(counts[c]);
    sum += weights[c];
  }
  if (sum == 0.0) {
    throw ContractError("inverse_frequency_weights: empty label set");
  }
  const double scale = double(n_classes) / sum;
  for (double& w : weights) w *= scale;
  return weights;
}

namespace {

size_t checked_feat_dim(const std::vector<const FeatureBag*>& train_bags,
                        const std::vector<const FeatureBag*>& val_bags) {
  const size_t dim = train_bags.front()->feature_dim();
  for (const auto* bags : {&train_bags, &val_bags}) {
    for (const FeatureBag* bag : *bags) {
      if (bag->feature_dim() != dim) {
        throw ContractError("train_model: bag \"" + bag->slide_id +
                            "\" has feature dim " +
                            std::to_string(bag->feature_dim()) +
                            ", expected " + std::to_string(dim));
      }
      if (bag->n_instances() == 0) {
        throw ContractError("train_model: bag \"" + bag->slide_id +
                            "\" is empty");
      }
      if (bag->label >= 3) {
        throw ContractError("train_model: bag \"" + bag->slide_id +
                            "\" has label outside {0,1,2}");
      }
    }
  }
  return dim;
}

struct BagLoss {
  double loss = 0.0;
  std::vector<double> logits;
};

BagLoss eval_bag_loss(const MilModel& model, const FeatureBag& bag,
                      const TrainConfig& cfg,
                      const std::vector<double>& class_weights) {
  if (model_kind(model) == ModelKind::kClamSB) {
    ClamLossConfig loss_cfg{cfg.focal, cfg.bag_weight, cfg.top_b};
    const auto v = clam_sb_eval_loss(bag.features,
                                     std::get<ClamSBParams>(model), bag.label,
                                     loss_cfg);
    return {v.total_loss, v.logits};
  }
  const auto v = abmil_eval_loss(bag.features, std::get<AbmilParams>(model),
                                 bag.label, class_weights);
  return {v.loss, v.logits};
}

}  // namespace

TrainResult train_model(const std::vector<const FeatureBag*>& train_bags,
                        const std::vector<const FeatureBag*>& val_bags,
                        const TrainConfig& cfg) {
  if (train_bags.empty()) {
    throw ContractError("train_model: empty training set");
  }
  const size_t feat_dim = checked_feat_dim(train_bags, val_bags);

  RngStream init_rng(derive_seed(cfg.seed, 0));
  RngStream shuffle_rng(derive_seed(cfg.seed, 1));
  RngStream dropout_rng(derive_seed(cfg.seed, 2));

  std::vector<uint8_t> train_labels;
  for (const FeatureBag* bag : train_bags) train_labels.push_back(bag->label);

  TrainResult result;
  if (cfg.kind == ModelKind::kClamSB) {
    ClamDims dims = cfg.clam_dims;
    dims.feat_dim = feat_dim;
    result.model = ClamSBParams::init(dims, cfg.dropout, init_rng);
  } else {
    AbmilDims dims = cfg.abmil_dims;
    dims.feat_dim = feat_dim;
    result.model = AbmilParams::init(dims, cfg.dropout, init_rng);
    result.class_weights = inverse_frequency_weights(train_labels);
  }
  MilModel params = result.model;

  const ClamLossConfig clam_loss_cfg{cfg.focal, cfg.bag_weight, cfg.top_b};
  auto views_of = [](MilModel& m) {
    return m.index() == 0 ? std::get<ClamSBParams>(m).views()
                          : std::get<AbmilParams>(m).views();
  };
  AdamHyper hyper;
  hyper.base_lr = cfg.lr;
  hyper.weight_decay_l2 = cfg.reg;
  hyper.warmup_epochs = cfg.warmup_epochs;
  AdamState adam(total_size(views_of(params)), hyper);

  std::vector<size_t> order(train_bags.size());
  std::iota(order.begin(), order.end(), size_t{0});

  double best_val_loss = std::numeric_limits<double>::infinity();
  size_t epochs_since_best = 0;

  for (size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double train_loss_sum = 0.0;
    for (size_t idx : order) {
      const FeatureBag& bag = *train_bags[idx];
      double step_loss;
      if (cfg.kind == ModelKind::kClamSB) {
        auto& p = std::get<ClamSBParams>(params);
        const ClamForward fwd =
            clam_sb_forward(bag.features, p, RunMode::kTrain, dropout_rng);
        ClamBackwardResult bwd =
            clam_sb_backward(bag.features, p, fwd, bag.label, clam_loss_cfg);
        step_loss = bwd.total_loss;
        adam_step(p.views(), bwd.grads.views(), adam, epoch);
      } else {
        auto& p = std::get<AbmilParams>(params);
        const AbmilForward fwd =
            abmil_forward(bag.features, p, RunMode::kTrain, dropout_rng);
        AbmilBackwardResult bwd = abmil_backward(bag.features, p, fwd,
                                                 bag.label,
                                                 result.class_weights);
        step_loss = bwd.loss;
        adam_step(p.views(), bwd.grads.views(), adam, epoch);
      }
      if (!std::isfinite(step_loss)) {
        throw NumericError("train_model: non-finite loss on bag \"" +
                           bag.slide_id + "\" at epoch " +
                           std::to_string(epoch));
      }
      train_loss_sum += step_loss;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = train_loss_sum / double(train_bags.size());
    if (!val_bags.empty()) {
      double val_loss_sum = 0.0;
      size_t correct = 0;
      for (const FeatureBag* bag : val_bags) {
        const BagLoss v = eval_bag_loss(params, *bag, cfg, result.class_weights);
        val_loss_sum += v.loss;
        const size_t pred = size_t(std::max_element(v.logits.begin(),
                                                    v.logits.end()) -
                                   v.logits.begin());
        correct += (pred == bag->label);
      }
      stats.val_loss = val_loss_sum / double(val_bags.size());
      stats.val_acc = double(correct) / double(val_bags.size());
      if (!std::isfinite(stats.val_loss)) {
        throw NumericError("train_model: non-finite validation loss at epoch " +
                           std::to_string(epoch));
      }
    } else {
      stats.val_loss = stats.train_loss;
      stats.val_acc = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.push_back(stats);

    if (stats.val_loss < best_val_loss) {
      best_val_loss = stats.val_loss;
      result.model = params;
      result.best_epoch = epoch;
      result.best_val_loss = best_val_loss;
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= cfg.patience) break;
    }
  }
  return result;
}

DenseMatrix predict_probs(const MilModel& model,
                          const std::vector<const FeatureBag*>& bags) {
  DenseMatrix probs(bags.size(), model_n_classes(model));
  for (size_t i = 0; i < bags.size(); ++i) {
    std::vector<double> p = mil_logits(model, bags[i]->features);
    p = softmax(p);
    std::copy(p.begin(), p.end(), probs.row(i));
  }
  return probs;
}

MetricsReport evaluate_model(const MilModel& model,
                             const std::vector<const FeatureBag*>& bags) {
  if (bags.empty()) {
    throw ContractError("evaluate_model: empty bag set");
  }
  std::vector<uint8_t> labels;
  for (const FeatureBag* bag : bags) labels.push_back(bag->label);
  return evaluate_metrics(predict_probs(model, bags), labels);
}

CVResult cross_validate(const std::vector<const FeatureBag*>& bags,
                        const TrainConfig& cfg, size_t k, size_t jobs,
                        const std::vector<Split>* splits) {
  if (bags.size() < k) {
    throw ContractError("cross_validate: fewer bags than folds");
  }
  if (splits != nullptr) {
    if (splits->size() != bags.size()) {
      throw ContractError("cross_validate: split list length mismatch");
    }
    for (size_t i = 0; i < splits->size(); ++i) {
      if ((*splits)[i] == Split::kTest) {
        throw ContractError(
            "cross_validate: test-split bag \"" + bags[i]->slide_id +
            "\" must not enter cross-validation training");
      }
    }
  }
  std::vector<uint8_t> labels;
  for (const FeatureBag* bag : bags) labels.push_back(bag->label);
  const FoldAssignment assignment = stratified_kfold(labels, k, cfg.seed);

  CVResult result;
  result.folds.resize(k);

  auto run_fold = [&](size_t fold) {
    FoldResult& fr = result.folds[fold];
    fr.fold = fold;
    fr.fold_seed = derive_seed(cfg.seed, 1000 + fold);
    fr.val_indices = assignment.folds[fold];

    std::vector<uint8_t> in_val(bags.size(), 0);
    for (size_t idx : fr.val_indices) in_val[idx] = 1;
    std::vector<const FeatureBag*> train_bags, val_bags;
    for (size_t i = 0; i < bags.size(); ++i) {
      (in_val[i] ? val_bags : train_bags).push_back(bags[i]);
    }
    for (const FeatureBag* vb : val_bags) {
      for (const FeatureBag* tb : train_bags) {
        if (tb == vb) {
          throw ContractError("cross_validate: bag \"" + vb->slide_id +
                              "\" appears in both train and validation sets");
        }
      }
    }

    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = fr.fold_seed;
    try {
      fr.train = train_model(train_bags, val_bags, fold_cfg);
    } catch (const std::exception& e) {
      throw NumericError("cross_validate: fold " + std::to_string(fold) +
                         ": " + e.what());
    }
    fr.metrics = evaluate_model(fr.train.model, val_bags);
  };

  if (jobs <= 1) {
    for (size_t fold = 0; fold < k; ++fold) run_fold(fold);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(k);
    for (size_t start = 0; start < k; start += jobs) {
      const size_t end = std::min(k, start + jobs);
      for (size_t fold = start; fold < end; ++fold) {
        workers.emplace_back([&, fold] {
          try {
            run_fold(fold);
          } catch (...) {
            errors[fold] = std::current_exception();
          }
        });
      }
      for (auto& w : workers) w.join();
      workers.clear();
      for (size_t fold = start; fold < end; ++fold) {
        if (errors[fold]) std::rethrow_exception(errors[fold]);
      }
    }
  }

  for (const FoldResult& fr : result.folds) {
    result.mean_accuracy += fr.metrics.accuracy;
    result.mean_auc += fr.metrics.auc_macro_ovr;
    result.mean_macro_f1 += fr.metrics.macro_f1;
  }
  result.mean_accuracy /= double(k);
  result.mean_auc /= double(k);
  result.mean_macro_f1 /= double(k);
  return result;
}

std::string cv_report_json(const CVResult& result, const TrainConfig& cfg,
                           size_t k) {
  json config;
  config["model"] = model_kind_name(cfg.kind);
  config["lr"] = cfg.lr;
  config["reg"] = cfg.reg;
  config["dropout"] = cfg.dropout;
  config["max_epochs"] = cfg.max_epochs;
  config["warmup_epochs"] = cfg.warmup_epochs;
  config["bag_weight"] = cfg.bag_weight;
  config["top_b"] = cfg.top_b;
  config["focal_gamma"] = cfg.focal.gamma;
  config["focal_eps"] = cfg.focal.smoothing_eps;
  config["focal_alpha"] = cfg.focal.alpha;
  config["patience"] = cfg.patience;
  config["seed"] = cfg.seed;
  config["folds"] = k;

  json folds = json::array();
  for (const FoldResult& fr : result.folds) {
    json confusion = json::array();
    for (const auto& row : fr.metrics.confusion) {
      confusion.push_back(json(row));
    }
    folds.push_back(json{{"fold", fr.fold},
                         {"accuracy", fr.metrics.accuracy},
                         {"auc", fr.metrics.auc_macro_ovr},
                         {"macro_f1", fr.metrics.macro_f1},
                         {"confusion", std::move(confusion)},
                         {"n_val", fr.metrics.n_samples},
                         {"best_epoch", fr.train.best_epoch},
                         {"epochs_run", fr.train.history.size()}});
  }
  const json report{{"config", std::move(config)},
                    {"folds", std::move(folds)},
                    {"mean",
                     json{{"accuracy", result.mean_accuracy},
                          {"auc", result.mean_auc},
                          {"macro_f1", result.mean_macro_f1}}}};
  return report.dump(2) + "\n";
}

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string history_to_csv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,train_loss,val_loss,val_acc\n";
  for (const EpochStats& s : history) {
    out += std::to_string(s.epoch) + "," + fmt_double(s.train_loss) + "," +
           fmt_double(s.val_loss) + "," + fmt_double(s.val_acc) + "\n";
  }
  return out;
}

DenseMatrix enhanced_features_for_bags(
    const MilModel& model, const std::vector<const FeatureBag*>& bags) {
  DenseMatrix out(bags.size(), kEnhancedFeatureCount);
  for (size_t i = 0; i < bags.size(); ++i) {
    const std::vector<double> logits = mil_logits(model, bags[i]->features);
    const std::vector<double> probs = softmax(logits);
    const std::vector<double> attention =
        extract_attention(model, bags[i]->features);
    if (logits.size() != 3) {
      throw ContractError("enhanced_features_for_bags: expected 3 classes");
    }
    const auto feats = build_enhanced_features(
        {logits[0], logits[1], logits[2]}, {probs[0], probs[1], probs[2]},
        attention);
    std::copy(feats.begin(), feats.end(), out.row(i));
  }
  return out;
}

}  // namespace pathomil
