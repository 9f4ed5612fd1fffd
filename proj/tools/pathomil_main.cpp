// pathomil: tissue segmentation, patch bags, attention-MIL training, and
// boosted-tree staging over slide-level feature bags, behind one
// deterministic command-line surface.
//
// Exit codes: 0 success, 1 usage error, 2 I/O or format error,
// 3 numeric/training failure. Errors print one "error: ..." line to stderr.

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "pathomil/bag.hpp"
#include "pathomil/errors.hpp"
#include "pathomil/gbdt.hpp"
#include "pathomil/harness.hpp"
#include "pathomil/heatmap.hpp"
#include "pathomil/image.hpp"
#include "pathomil/io_util.hpp"
#include "pathomil/manifest.hpp"
#include "pathomil/metrics.hpp"
#include "pathomil/model_io.hpp"
#include "pathomil/models.hpp"
#include "pathomil/patches.hpp"
#include "pathomil/segment.hpp"
#include "pathomil/synthetic.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pathomil;

namespace {

// ---------------------------------------------------------------------------
// shared helpers

struct LoadedDataset {
  std::vector<FeatureBag> bags;
  std::vector<Split> splits;
  std::vector<const FeatureBag*> ptrs() const {
    std::vector<const FeatureBag*> out;
    out.reserve(bags.size());
    for (const auto& b : bags) out.push_back(&b);
    return out;
  }
};

LoadedDataset load_bags(const DatasetManifest& manifest,
                        const std::vector<size_t>& indices) {
  LoadedDataset ds;
  ds.bags.reserve(indices.size());
  for (size_t idx : indices) {
    const ManifestEntry& entry = manifest.entries[idx];
    FeatureBag bag = load_bag(entry.bag_path);
    if (bag.slide_id != entry.slide_id) {
      throw FormatError("manifest entry \"" + entry.slide_id +
                        "\" points at bag \"" + bag.slide_id + "\" (" +
                        entry.bag_path + ")");
    }
    if (bag.label != entry.label) {
      throw FormatError("manifest label " + std::to_string(entry.label) +
                        " disagrees with bag label " +
                        std::to_string(bag.label) + " for slide \"" +
                        entry.slide_id + "\"");
    }
    ds.bags.push_back(std::move(bag));
    ds.splits.push_back(entry.split);
  }
  return ds;
}

std::vector<size_t> non_test_indices(const DatasetManifest& manifest) {
  std::vector<size_t> out;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].split != Split::kTest) out.push_back(i);
  }
  return out;
}

void require_test_only(const DatasetManifest& manifest, const char* command) {
  if (manifest.entries.empty()) {
    throw ContractError(std::string(command) + ": manifest has no entries");
  }
  for (const ManifestEntry& entry : manifest.entries) {
    if (entry.split != Split::kTest) {
      throw ContractError(std::string(command) + ": slide \"" +
                          entry.slide_id + "\" has split \"" +
                          split_name(entry.split) +
                          "\"; evaluation requires a test-only manifest");
    }
  }
}

std::string metrics_to_json(const MetricsReport& report) {
  json confusion = json::array();
  for (const auto& row : report.confusion) confusion.push_back(json(row));
  const json doc{{"accuracy", report.accuracy},
                 {"auc_macro_ovr", report.auc_macro_ovr},
                 {"macro_f1", report.macro_f1},
                 {"precision", report.precision},
                 {"recall", report.recall},
                 {"f1", report.f1},
                 {"confusion", std::move(confusion)},
                 {"n_samples", report.n_samples}};
  return doc.dump(2) + "\n";
}

// Hyperparameter flags shared by train and cv; unset flags fall back to the
// chosen model family's published defaults.
struct HyperFlags {
  std::optional<double> lr, reg, dropout, bag_weight, gamma, smoothing_eps;
  std::optional<size_t> max_epochs, warmup_epochs, top_b, patience;

  void attach(CLI::App* cmd) {
    cmd->add_option("--lr", lr,
                    "Learning rate (default 3e-5 clam-sb, 4e-4 abmil)");
    cmd->add_option("--reg", reg, "L2 weight decay (default 1e-4)");
    cmd->add_option("--dropout", dropout, "Dropout rate (default 0.4)");
    cmd->add_option("--max-epochs", max_epochs,
                    "Epoch budget (default 100 clam-sb, 20 abmil)");
    cmd->add_option("--warmup-epochs", warmup_epochs,
                    "Linear LR warmup epochs (default 5 clam-sb, 0 abmil)");
    cmd->add_option("--bag-weight", bag_weight,
                    "Bag-loss share for clam-sb (default 0.5)");
    cmd->add_option("--top-b", top_b,
                    "Pseudo-labeled instances per side for clam-sb "
                    "(default 8)");
    cmd->add_option("--focal-gamma", gamma,
                    "Focal focusing exponent for clam-sb (default 2)");
    cmd->add_option("--smoothing-eps", smoothing_eps,
                    "Label smoothing factor for clam-sb (default 0.1)");
    cmd->add_option("--patience", patience,
                    "Early-stop patience (default 20 clam-sb, 5 abmil)");
  }

  TrainConfig resolve(const std::string& model_name, uint64_t seed) const {
    const auto kind = model_kind_from_name(model_name);
    if (!kind) {
      throw ContractError("unknown model \"" + model_name +
                          "\"; expected clam-sb or abmil");
    }
    TrainConfig cfg = *kind == ModelKind::kClamSB
                          ? TrainConfig::clam_defaults()
                          : TrainConfig::abmil_defaults();
    cfg.seed = seed;
    if (lr) cfg.lr = *lr;
    if (reg) cfg.reg = *reg;
    if (dropout) cfg.dropout = *dropout;
    if (max_epochs) cfg.max_epochs = *max_epochs;
    if (warmup_epochs) cfg.warmup_epochs = *warmup_epochs;
    if (bag_weight) cfg.bag_weight = *bag_weight;
    if (top_b) cfg.top_b = *top_b;
    if (gamma) cfg.focal.gamma = *gamma;
    if (smoothing_eps) cfg.focal.smoothing_eps = *smoothing_eps;
    if (patience) cfg.patience = *patience;
    return cfg;
  }
};

size_t find_mask_level(const ImagePyramid& pyr, const RasterImage& mask_gray) {
  for (size_t l = 0; l < pyr.levels.size(); ++l) {
    if (pyr.levels[l].width == mask_gray.width &&
        pyr.levels[l].height == mask_gray.height) {
      return l;
    }
  }
  throw FormatError("mask dimensions " + std::to_string(mask_gray.width) +
                    "x" + std::to_string(mask_gray.height) +
                    " match no pyramid level of the slide");
}

// ---------------------------------------------------------------------------
// subcommand options

struct SegmentArgs {
  std::string slide, mask_out, overlay_out;
  double downsample = 32.0;
  double blur_sigma = 2.0;
  int close_kernel = 5;
  int open_kernel = 3;
  size_t min_area = 500;
  double overlay_alpha = 0.5;
};

int run_segment(const SegmentArgs& args) {
  const RasterImage slide = read_pnm(args.slide);
  if (slide.channels != 3) {
    throw FormatError("segment: slide must be a 3-channel PPM");
  }
  const ImagePyramid pyr = build_pyramid(slide, 16);
  SegmentationConfig cfg;
  cfg.target_downsample = args.downsample;
  cfg.blur_sigma_base = args.blur_sigma;
  cfg.close_kernel = args.close_kernel;
  cfg.open_kernel = args.open_kernel;
  cfg.min_component_area_px = args.min_area;
  const SegmentResult result = segment_tissue(pyr, cfg);
  write_pnm(mask_to_gray(result.mask), args.mask_out);
  if (!args.overlay_out.empty()) {
    const RasterImage overlay =
        render_mask_overlay(pyr.levels[result.level], result.mask,
                            {0, 200, 0}, args.overlay_alpha);
    write_pnm(overlay, args.overlay_out);
  }
  std::cout << "mask level " << result.level << " ("
            << result.mask.width << "x" << result.mask.height
            << "), tissue area " << result.mask.area() << " px, sigma "
            << result.sigma_used
            << (result.degenerate ? ", DEGENERATE (empty mask)" : "")
            << "\n";
  return 0;
}

struct PatchArgs {
  std::string slide, mask, out, slide_id, features_from, grid_out;
  size_t patch_size = 256;
  double coverage = 0.5;
  int label = 0;
};

int run_patch(const PatchArgs& args) {
  const RasterImage slide = read_pnm(args.slide);
  if (slide.channels != 3) {
    throw FormatError("patch: slide must be a 3-channel PPM");
  }
  const RasterImage mask_gray = read_pnm(args.mask);
  if (mask_gray.channels != 1) {
    throw FormatError("patch: mask must be a single-channel PGM");
  }
  const ImagePyramid pyr = build_pyramid(slide, 16);
  const size_t level = find_mask_level(pyr, mask_gray);
  const BinaryMask mask = gray_to_mask(mask_gray, level);
  const PatchGrid grid = extract_patch_grid(mask, slide.width, slide.height,
                                            args.patch_size, args.coverage);
  if (!args.grid_out.empty()) {
    write_file_atomic(args.grid_out, patch_grid_to_text(grid));
  }
  if (grid.coords.empty()) {
    throw ContractError("patch: no patch passed the coverage threshold");
  }

  FeatureBag bag;
  bag.slide_id = args.slide_id.empty() ? fs::path(args.slide).stem().string()
                                       : args.slide_id;
  bag.label = static_cast<uint8_t>(args.label);
  bag.coords = grid.coords;
  if (args.features_from.empty()) {
    bag.features = handcrafted_patch_features(slide, mask, grid);
  } else {
    const FeatureBag external = load_bag(args.features_from);
    if (external.coords != grid.coords) {
      throw FormatError(
          "patch: external bag's patch coordinates do not match the "
          "extracted grid (" +
          std::to_string(external.coords.size()) + " vs " +
          std::to_string(grid.coords.size()) + " patches)");
    }
    bag.features = external.features;
  }
  save_bag(bag, args.out);
  std::cout << "wrote " << bag.n_instances() << " patches ("
            << bag.feature_dim() << "-dim) to " << args.out << "\n";
  return 0;
}

struct SynthArgs {
  std::string out;
  uint64_t seed = 42;
  std::vector<size_t> bags_per_class{105, 21, 84};
  size_t dim = 64;
  size_t min_instances = 50;
  size_t max_instances = 200;
  double signal_fraction = 0.2;
  double noise_sigma = 1.0;
  // Optional synthetic slide raster.
  std::string slide_out, slide_truth_out;
  size_t slide_size = 4096;
  size_t slide_blobs = 3;
  bool all_tissue = false;
};

int run_synth(const SynthArgs& args) {
  if (args.bags_per_class.size() != 3) {
    throw ContractError("synth: --bags expects exactly 3 counts");
  }
  SyntheticSpec spec;
  spec.bags_per_class = {args.bags_per_class[0], args.bags_per_class[1],
                         args.bags_per_class[2]};
  spec.feature_dim = args.dim;
  spec.min_instances = args.min_instances;
  spec.max_instances = args.max_instances;
  spec.signal_fraction = args.signal_fraction;
  spec.noise_sigma = args.noise_sigma;
  spec.seed = args.seed;
  const SyntheticDataset ds = generate_synthetic_dataset(spec);
  write_synthetic_dataset(ds, args.out);
  std::cout << "wrote " << ds.bags.size() << " bags to " << args.out << "\n";

  if (!args.slide_out.empty()) {
    SlideSpec slide_spec;
    slide_spec.width = args.slide_size;
    slide_spec.height = args.slide_size;
    slide_spec.n_blobs = args.slide_blobs;
    slide_spec.all_tissue = args.all_tissue;
    slide_spec.seed = args.seed;
    const SyntheticSlide slide = make_synthetic_slide(slide_spec);
    write_pnm(slide.image, args.slide_out);
    if (!args.slide_truth_out.empty()) {
      write_pnm(mask_to_gray(slide.tissue_truth), args.slide_truth_out);
    }
    std::cout << "wrote synthetic slide (" << slide.image.width << "x"
              << slide.image.height << ") to " << args.slide_out << "\n";
  }
  return 0;
}

struct TrainArgs {
  std::string manifest, model = "clam-sb", out, history_out;
  uint64_t seed = 42;
  HyperFlags hyper;
};

int run_train(const TrainArgs& args) {
  const TrainConfig cfg = args.hyper.resolve(args.model, args.seed);
  const DatasetManifest manifest = load_manifest(args.manifest);

  std::vector<size_t> train_idx = manifest.indices_with_split(Split::kTrain);
  std::vector<size_t> val_idx = manifest.indices_with_split(Split::kVal);
  if (train_idx.empty()) {
    throw ContractError("train: manifest has no train-split entries");
  }
  const LoadedDataset train_ds = load_bags(manifest, train_idx);
  LoadedDataset val_ds = load_bags(manifest, val_idx);

  std::vector<const FeatureBag*> train_ptrs = train_ds.ptrs();
  std::vector<const FeatureBag*> val_ptrs = val_ds.ptrs();
  if (val_ptrs.empty()) {
    // No val split: hold out a stratified fifth of the training entries.
    std::vector<uint8_t> labels;
    for (const auto* b : train_ptrs) labels.push_back(b->label);
    const FoldAssignment folds = stratified_kfold(labels, 5, cfg.seed);
    std::vector<uint8_t> held(train_ptrs.size(), 0);
    for (size_t idx : folds.folds[0]) held[idx] = 1;
    std::vector<const FeatureBag*> kept;
    for (size_t i = 0; i < train_ptrs.size(); ++i) {
      (held[i] ? val_ptrs : kept).push_back(train_ptrs[i]);
    }
    train_ptrs = std::move(kept);
    std::cout << "no val split in manifest; holding out " << val_ptrs.size()
              << " of " << labels.size() << " training bags for early stopping"
              << "\n";
  }

  const TrainResult result = train_model(train_ptrs, val_ptrs, cfg);
  save_model(result.model, cfg.seed, args.out);
  if (!args.history_out.empty()) {
    write_file_atomic(args.history_out, history_to_csv(result.history));
  }
  std::cout << "trained " << model_kind_name(cfg.kind) << " for "
            << result.history.size() << " epochs; best epoch "
            << result.best_epoch << " (val loss " << result.best_val_loss
            << "); model written to " << args.out << "\n";
  return 0;
}

struct CvArgs {
  std::string manifest, model = "clam-sb", out;
  size_t folds = 5;
  size_t jobs = 1;
  uint64_t seed = 42;
  HyperFlags hyper;
};

int run_cv(const CvArgs& args) {
  const TrainConfig cfg = args.hyper.resolve(args.model, args.seed);
  const DatasetManifest manifest = load_manifest(args.manifest);
  const LoadedDataset ds = load_bags(manifest, non_test_indices(manifest));
  if (ds.bags.empty()) {
    throw ContractError("cv: manifest has no non-test entries");
  }
  const CVResult result =
      cross_validate(ds.ptrs(), cfg, args.folds, args.jobs, &ds.splits);
  write_file_atomic(args.out, cv_report_json(result, cfg, args.folds));
  std::cout << "cv mean accuracy " << result.mean_accuracy << ", mean AUC "
            << result.mean_auc << ", mean macro-F1 " << result.mean_macro_f1
            << "; report written to " << args.out << "\n";
  return 0;
}

struct EvalArgs {
  std::string model, manifest, out;
};

int run_eval(const EvalArgs& args) {
  const MilModel model = load_model(args.model);
  const DatasetManifest manifest = load_manifest(args.manifest);
  require_test_only(manifest, "eval");
  std::vector<size_t> all(manifest.entries.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  const LoadedDataset ds = load_bags(manifest, all);
  const MetricsReport report = evaluate_model(model, ds.ptrs());
  write_file_atomic(args.out, metrics_to_json(report));
  std::cout << "eval accuracy " << report.accuracy << ", AUC "
            << report.auc_macro_ovr << ", macro-F1 " << report.macro_f1
            << " on " << report.n_samples << " test bags; metrics written to "
            << args.out << "\n";
  return 0;
}

struct HeatmapArgs {
  std::string model, bag, slide, out, side_out;
  double alpha = 0.4;
  std::string mode = "gaussian";
  double sigma = 1.0;
  int class_index = -1;
  size_t patch_size = 256;
};

int run_heatmap(const HeatmapArgs& args) {
  const MilModel model = load_model(args.model);
  const FeatureBag bag = load_bag(args.bag);
  const RasterImage slide = read_pnm(args.slide);
  if (slide.channels != 3) {
    throw FormatError("heatmap: slide must be a 3-channel PPM");
  }
  std::optional<size_t> class_index;
  if (args.class_index >= 0) class_index = size_t(args.class_index);
  const std::vector<double> attention =
      extract_attention(model, bag.features, class_index);
  const HeatGrid grid = scores_to_grid(bag.coords, attention, slide.width,
                                       slide.height, args.patch_size);
  const ImagePyramid pyr = build_pyramid(slide, 16);
  HeatmapRenderConfig cfg;
  cfg.alpha = args.alpha;
  cfg.mode = args.mode == "bilinear" ? ResampleMode::kBilinear
                                     : ResampleMode::kGaussianThenBilinear;
  cfg.sigma = args.sigma;
  const HeatmapRender render = render_heatmap(pyr, grid, cfg);
  write_pnm(render.overlay, args.out);
  if (!args.side_out.empty()) {
    write_file_atomic(args.side_out, heatmap_sidecar_text(render));
  }
  std::cout << "heatmap rendered at level " << render.level << " ("
            << render.overlay.width << "x" << render.overlay.height
            << ") to " << args.out << "\n";
  return 0;
}

struct GbdtTrainArgs {
  std::string model, manifest, out;
  size_t rounds = 200;
  double lr = 0.1;
  size_t depth = 6;
  double lambda = 1.0;
  double gamma_leaf = 0.0;
  double min_child_hessian = 1.0;
};

int run_gbdt_train(const GbdtTrainArgs& args) {
  const MilModel model = load_model(args.model);
  const DatasetManifest manifest = load_manifest(args.manifest);
  const LoadedDataset ds = load_bags(manifest, non_test_indices(manifest));
  if (ds.bags.size() < 2) {
    throw ContractError("gbdt-train: need at least 2 non-test bags");
  }
  const DenseMatrix X = enhanced_features_for_bags(model, ds.ptrs());
  std::vector<uint8_t> labels;
  for (const auto& b : ds.bags) labels.push_back(b.label);

  GBDTConfig cfg;
  cfg.n_rounds = args.rounds;
  cfg.learning_rate = args.lr;
  cfg.max_depth = args.depth;
  cfg.lambda = args.lambda;
  cfg.gamma_leaf = args.gamma_leaf;
  cfg.min_child_hessian = args.min_child_hessian;
  const auto& names = enhanced_feature_names();
  const EnsembleTrainResult result = train_ensemble(
      X, labels, cfg, std::vector<std::string>(names.begin(), names.end()));
  save_ensemble(result.ensemble, args.out);
  std::cout << "boosted " << result.ensemble.trees.size() << " trees over "
            << ds.bags.size() << " bags; train log-loss "
            << result.round_losses.front() << " -> "
            << result.round_losses.back() << "; ensemble written to "
            << args.out << "\n";
  return 0;
}

struct GbdtEvalArgs {
  std::string model, ensemble, manifest, out;
};

int run_gbdt_eval(const GbdtEvalArgs& args) {
  const MilModel model = load_model(args.model);
  const TreeEnsemble ensemble = load_ensemble(args.ensemble);
  const DatasetManifest manifest = load_manifest(args.manifest);
  require_test_only(manifest, "gbdt-eval");
  std::vector<size_t> all(manifest.entries.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = i;
  const LoadedDataset ds = load_bags(manifest, all);
  const DenseMatrix X = enhanced_features_for_bags(model, ds.ptrs());

  DenseMatrix probs(ds.bags.size(), ensemble.config.n_classes);
  std::vector<uint8_t> labels;
  for (size_t i = 0; i < ds.bags.size(); ++i) {
    const EnsemblePrediction pred = predict_ensemble(ensemble, X.row(i), X.cols);
    std::copy(pred.probs.begin(), pred.probs.end(), probs.row(i));
    labels.push_back(ds.bags[i].label);
  }
  const MetricsReport report = evaluate_metrics(probs, labels);
  write_file_atomic(args.out, metrics_to_json(report));
  std::cout << "gbdt-eval accuracy " << report.accuracy << ", AUC "
            << report.auc_macro_ovr << ", macro-F1 " << report.macro_f1
            << " on " << report.n_samples << " test bags; metrics written to "
            << args.out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Training allocates and frees many short-lived buffers just above the
  // default mmap threshold; keep them on the heap so free() stays cheap.
  mallopt(M_MMAP_THRESHOLD, 64 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 64 * 1024 * 1024);
#endif
  CLI::App app{"pathomil: slide-level risk classification toolkit"};
  app.set_config("--config", "", "TOML config file (flags override it)");
  app.require_subcommand(1);
  // Accept `--config` both before and after the subcommand name, and let
  // config files carry per-subcommand sections like [train]. Subcommands
  // inherit both settings at creation time.
  app.fallthrough();
  app.configurable();

  SegmentArgs segment_args;
  auto* segment_cmd =
      app.add_subcommand("segment", "Segment tissue in a slide raster");
  segment_cmd->add_option("--slide", segment_args.slide, "Input slide PPM")
      ->required();
  segment_cmd
      ->add_option("--mask-out", segment_args.mask_out, "Output mask PGM")
      ->required();
  segment_cmd->add_option("--overlay-out", segment_args.overlay_out,
                          "Optional mask-overlay PPM");
  segment_cmd->add_option("--downsample", segment_args.downsample,
                          "Target downsample factor (default 32)");
  segment_cmd->add_option("--blur-sigma", segment_args.blur_sigma,
                          "Base blur sigma before level scaling (default 2)");
  segment_cmd->add_option("--close", segment_args.close_kernel,
                          "Closing kernel size (default 5)");
  segment_cmd->add_option("--open", segment_args.open_kernel,
                          "Opening kernel size (default 3)");
  segment_cmd->add_option("--min-area", segment_args.min_area,
                          "Minimum component area in px (default 500)");
  segment_cmd->add_option("--overlay-alpha", segment_args.overlay_alpha,
                          "Overlay tint alpha (default 0.5)");

  PatchArgs patch_args;
  auto* patch_cmd = app.add_subcommand(
      "patch", "Extract a patch grid and write a feature bag");
  patch_cmd->add_option("--slide", patch_args.slide, "Input slide PPM")
      ->required();
  patch_cmd->add_option("--mask", patch_args.mask, "Tissue mask PGM")
      ->required();
  patch_cmd->add_option("--out", patch_args.out, "Output bag file")
      ->required();
  patch_cmd->add_option("--slide-id", patch_args.slide_id,
                        "Slide id stored in the bag (default: slide stem)");
  patch_cmd->add_option("--label", patch_args.label,
                        "Bag label 0|1|2 (default 0)")
      ->check(CLI::Range(0, 2));
  patch_cmd->add_option("--patch-size", patch_args.patch_size,
                        "Patch edge in level-0 px (default 256)");
  patch_cmd->add_option("--coverage", patch_args.coverage,
                        "Tissue coverage threshold (default 0.5)");
  patch_cmd->add_option("--features-from", patch_args.features_from,
                        "Attach features from this existing bag instead of "
                        "computing the handcrafted descriptor");
  patch_cmd->add_option("--grid-out", patch_args.grid_out,
                        "Optional patch-coordinate text file");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand(
      "synth", "Generate a deterministic synthetic bag dataset");
  synth_cmd->add_option("--out", synth_args.out, "Output directory")
      ->required();
  synth_cmd->add_option("--seed", synth_args.seed, "Master seed (default 42)");
  synth_cmd
      ->add_option("--bags", synth_args.bags_per_class,
                   "Bags per class (default 105 21 84)")
      ->expected(3);
  synth_cmd->add_option("--dim", synth_args.dim,
                        "Feature dimension (default 64)");
  synth_cmd->add_option("--min-instances", synth_args.min_instances,
                        "Minimum instances per bag (default 50)");
  synth_cmd->add_option("--max-instances", synth_args.max_instances,
                        "Maximum instances per bag (default 200)");
  synth_cmd->add_option("--signal-fraction", synth_args.signal_fraction,
                        "Fraction of signal instances (default 0.2)");
  synth_cmd->add_option("--noise-sigma", synth_args.noise_sigma,
                        "Instance noise sigma (default 1)");
  synth_cmd->add_option("--slide", synth_args.slide_out,
                        "Also write a synthetic slide PPM here");
  synth_cmd->add_option("--slide-truth", synth_args.slide_truth_out,
                        "Write the slide's tissue truth mask PGM here");
  synth_cmd->add_option("--slide-size", synth_args.slide_size,
                        "Synthetic slide edge in px (default 4096)");
  synth_cmd->add_option("--slide-blobs", synth_args.slide_blobs,
                        "Tissue blob count (default 3)");
  synth_cmd->add_flag("--all-tissue", synth_args.all_tissue,
                      "Paint the whole synthetic slide as tissue");

  TrainArgs train_args;
  auto* train_cmd =
      app.add_subcommand("train", "Train an attention-MIL model");
  train_cmd->add_option("--manifest", train_args.manifest, "Dataset manifest")
      ->required();
  train_cmd->add_option("--model", train_args.model,
                        "Model kind: clam-sb | abmil (default clam-sb)");
  train_cmd->add_option("--out", train_args.out, "Output model file")
      ->required();
  train_cmd->add_option("--history", train_args.history_out,
                        "Optional training-history CSV");
  train_cmd->add_option("--seed", train_args.seed, "Master seed (default 42)");
  train_args.hyper.attach(train_cmd);

  CvArgs cv_args;
  auto* cv_cmd =
      app.add_subcommand("cv", "Stratified k-fold cross-validation");
  cv_cmd->add_option("--manifest", cv_args.manifest, "Dataset manifest")
      ->required();
  cv_cmd->add_option("--model", cv_args.model,
                     "Model kind: clam-sb | abmil (default clam-sb)");
  cv_cmd->add_option("--out", cv_args.out, "Output report JSON")->required();
  cv_cmd->add_option("--folds", cv_args.folds, "Fold count (default 5)");
  cv_cmd->add_option("--jobs", cv_args.jobs,
                     "Parallel fold workers; results are identical for any "
                     "value (default 1)");
  cv_cmd->add_option("--seed", cv_args.seed, "Master seed (default 42)");
  cv_args.hyper.attach(cv_cmd);

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand(
      "eval", "Evaluate a model on a test-only manifest");
  eval_cmd->add_option("--model", eval_args.model, "Model file")->required();
  eval_cmd->add_option("--manifest", eval_args.manifest, "Test manifest")
      ->required();
  eval_cmd->add_option("--out", eval_args.out, "Output metrics JSON")
      ->required();

  HeatmapArgs heatmap_args;
  auto* heatmap_cmd = app.add_subcommand(
      "heatmap", "Render an attention heatmap overlay for one bag");
  heatmap_cmd->add_option("--model", heatmap_args.model, "Model file")
      ->required();
  heatmap_cmd->add_option("--bag", heatmap_args.bag, "Bag file")->required();
  heatmap_cmd->add_option("--slide", heatmap_args.slide, "Slide PPM")
      ->required();
  heatmap_cmd->add_option("--out", heatmap_args.out, "Output overlay PPM")
      ->required();
  heatmap_cmd->add_option("--side", heatmap_args.side_out,
                          "Optional side text file (score range, level)");
  heatmap_cmd->add_option("--alpha", heatmap_args.alpha,
                          "Overlay alpha (default 0.4)");
  heatmap_cmd
      ->add_option("--mode", heatmap_args.mode,
                   "gaussian (smooth then upsample) | bilinear "
                   "(default gaussian)")
      ->check(CLI::IsMember({"gaussian", "bilinear"}));
  heatmap_cmd->add_option("--sigma", heatmap_args.sigma,
                          "Smoothing sigma in grid cells (default 1)");
  heatmap_cmd->add_option("--class", heatmap_args.class_index,
                          "Attention class for the multi-head model "
                          "(default: predicted class)");
  heatmap_cmd->add_option("--patch-size", heatmap_args.patch_size,
                          "Patch edge used for the grid (default 256)");

  GbdtTrainArgs gbdt_train_args;
  auto* gbdt_train_cmd = app.add_subcommand(
      "gbdt-train", "Train the boosted-tree stage on MIL-derived features");
  gbdt_train_cmd
      ->add_option("--model", gbdt_train_args.model, "MIL model file")
      ->required();
  gbdt_train_cmd
      ->add_option("--manifest", gbdt_train_args.manifest, "Dataset manifest")
      ->required();
  gbdt_train_cmd->add_option("--out", gbdt_train_args.out, "Output ensemble")
      ->required();
  gbdt_train_cmd->add_option("--rounds", gbdt_train_args.rounds,
                             "Boosting rounds (default 200)");
  gbdt_train_cmd->add_option("--lr", gbdt_train_args.lr,
                             "Learning rate (default 0.1)");
  gbdt_train_cmd->add_option("--depth", gbdt_train_args.depth,
                             "Maximum tree depth (default 6)");
  gbdt_train_cmd->add_option("--lambda", gbdt_train_args.lambda,
                             "L2 leaf penalty (default 1)");
  gbdt_train_cmd->add_option("--gamma-leaf", gbdt_train_args.gamma_leaf,
                             "Per-leaf penalty (default 0)");
  gbdt_train_cmd->add_option("--min-child-hessian",
                             gbdt_train_args.min_child_hessian,
                             "Minimum child hessian mass (default 1)");

  GbdtEvalArgs gbdt_eval_args;
  auto* gbdt_eval_cmd = app.add_subcommand(
      "gbdt-eval", "Evaluate the boosted-tree stage on a test-only manifest");
  gbdt_eval_cmd->add_option("--model", gbdt_eval_args.model, "MIL model file")
      ->required();
  gbdt_eval_cmd
      ->add_option("--ensemble", gbdt_eval_args.ensemble, "Ensemble file")
      ->required();
  gbdt_eval_cmd
      ->add_option("--manifest", gbdt_eval_args.manifest, "Test manifest")
      ->required();
  gbdt_eval_cmd->add_option("--out", gbdt_eval_args.out,
                            "Output metrics JSON")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    // An unknown subcommand surfaces as a generic "subcommand required"
    // error while the stray token sits in remaining(); name the token.
    const std::vector<std::string> extras = app.remaining(true);
    if (!extras.empty()) {
      std::cerr << "error: unknown subcommand or argument \"" << extras.front()
                << "\"\n";
    } else {
      std::cerr << "error: " << e.what() << "\n";
    }
    return 1;
  }

  try {
    if (segment_cmd->parsed()) return run_segment(segment_args);
    if (patch_cmd->parsed()) return run_patch(patch_args);
    if (synth_cmd->parsed()) return run_synth(synth_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (cv_cmd->parsed()) return run_cv(cv_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (heatmap_cmd->parsed()) return run_heatmap(heatmap_args);
    if (gbdt_train_cmd->parsed()) return run_gbdt_train(gbdt_train_args);
    if (gbdt_eval_cmd->parsed()) return run_gbdt_eval(gbdt_eval_args);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
