#include "pathomil/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "pathomil/errors.hpp"
#include "pathomil/io_util.hpp"
#include "pathomil/rng.hpp"

namespace pathomil {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void validate_spec(const SyntheticSpec& spec) {
  if (spec.feature_dim < 3) {
    throw ContractError(
        "synthetic: feature_dim must be >= 3 so the three class signatures "
        "can be pairwise orthogonal");
  }
  if (spec.min_instances < 1 || spec.max_instances < spec.min_instances) {
    throw ContractError("synthetic: need 1 <= min_instances <= max_instances");
  }
  if (!(spec.signal_fraction >= 0.0 && spec.signal_fraction <= 1.0)) {
    throw ContractError("synthetic: signal_fraction must lie in [0, 1]");
  }
  if (!(spec.noise_sigma >= 0.0)) {
    throw ContractError("synthetic: noise_sigma must be nonnegative");
  }
}

std::string bag_id(size_t global_index, size_t label) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "syn_%04zu_c%zu", global_index, label);
  return buf;
}

SyntheticBag make_bag(const SyntheticSpec& spec, size_t global_index,
                      size_t label) {
  RngStream rng(derive_seed(spec.seed, global_index));
  const size_t range = spec.max_instances - spec.min_instances + 1;
  const size_t n =
      spec.min_instances + (range > 1 ? rng.bounded(range) : 0);
  const size_t n_signal =
      static_cast<size_t>(std::ceil(spec.signal_fraction * double(n)));

  SyntheticBag sb;
  sb.signal_flags.assign(n, 0);
  std::fill(sb.signal_flags.begin(),
            sb.signal_flags.begin() + std::min(n_signal, n), uint8_t{1});
  rng.shuffle(sb.signal_flags);

  sb.bag.slide_id = bag_id(global_index, label);
  sb.bag.label = static_cast<uint8_t>(label);
  const size_t grid_w =
      static_cast<size_t>(std::ceil(std::sqrt(double(n))));
  sb.bag.coords.resize(n);
  for (size_t i = 0; i < n; ++i) {
    sb.bag.coords[i] = {static_cast<uint32_t>((i % grid_w) * 256),
                        static_cast<uint32_t>((i / grid_w) * 256)};
  }

  sb.bag.features = DenseMatrix(n, spec.feature_dim);
  for (size_t i = 0; i < n; ++i) {
    double* row = sb.bag.features.row(i);
    for (size_t j = 0; j < spec.feature_dim; ++j) {
      row[j] = rng.gaussian() * spec.noise_sigma;
    }
    if (sb.signal_flags[i]) {
      row[label] += 1.0;  // unit canonical basis signature for this class
    }
  }
  return sb;
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec) {
  validate_spec(spec);
  SyntheticDataset ds;
  size_t global_index = 0;
  for (size_t label = 0; label < spec.bags_per_class.size(); ++label) {
    for (size_t k = 0; k < spec.bags_per_class[label]; ++k, ++global_index) {
      ds.bags.push_back(make_bag(spec, global_index, label));
      const FeatureBag& bag = ds.bags.back().bag;
      ManifestEntry entry;
      entry.slide_id = bag.slide_id;
      entry.bag_path = "bags/" + bag.slide_id + ".bag";
      entry.label = bag.label;
      entry.split = Split::kTrain;
      ds.manifest.entries.push_back(std::move(entry));
    }
  }
  return ds;
}

void write_synthetic_dataset(const SyntheticDataset& ds,
                             const std::string& out_dir) {
  const fs::path root(out_dir);
  fs::create_directories(root / "bags");

  DatasetManifest manifest = ds.manifest;
  for (size_t i = 0; i < ds.bags.size(); ++i) {
    const fs::path bag_path = root / manifest.entries[i].bag_path;
    save_bag(ds.bags[i].bag, bag_path.string());
    manifest.entries[i].bag_path = bag_path.string();
  }
  save_manifest(manifest, (root / "manifest.json").string());

  json masks = json::object();
  for (const auto& sb : ds.bags) {
    json flags = json::array();
    for (uint8_t f : sb.signal_flags) flags.push_back(int(f));
    masks[sb.bag.slide_id] = std::move(flags);
  }
  const std::string text = masks.dump(2) + "\n";
  write_file_atomic((root / "signal_masks.json").string(),
                    std::vector<uint8_t>(text.begin(), text.end()));
}

SyntheticSlide make_synthetic_slide(const SlideSpec& spec) {
  if (spec.width == 0 || spec.height == 0) {
    throw ContractError("make_synthetic_slide: empty canvas");
  }
  if (!spec.all_tissue &&
      (spec.min_radius <= 0 || spec.max_radius < spec.min_radius)) {
    throw ContractError("make_synthetic_slide: need 0 < min_radius <= max_radius");
  }
  RngStream rng(spec.seed);

  SyntheticSlide out;
  out.tissue_truth = BinaryMask(spec.width, spec.height, 0);

  if (spec.all_tissue) {
    for (size_t y = 0; y < spec.height; ++y) {
      for (size_t x = 0; x < spec.width; ++x) out.tissue_truth.set(x, y, true);
    }
  } else {
    for (size_t b = 0; b < spec.n_blobs; ++b) {
      const double r =
          spec.min_radius + rng.uniform01() * (spec.max_radius - spec.min_radius);
      const double span_x = std::max(0.0, double(spec.width) - 2.0 * r);
      const double span_y = std::max(0.0, double(spec.height) - 2.0 * r);
      const double cx = r + rng.uniform01() * span_x;
      const double cy = r + rng.uniform01() * span_y;
      const double r2 = r * r;
      const size_t x0 = static_cast<size_t>(std::max(0.0, std::floor(cx - r)));
      const size_t x1 = std::min(spec.width - 1,
                                 static_cast<size_t>(std::ceil(cx + r)));
      const size_t y0 = static_cast<size_t>(std::max(0.0, std::floor(cy - r)));
      const size_t y1 = std::min(spec.height - 1,
                                 static_cast<size_t>(std::ceil(cy + r)));
      for (size_t y = y0; y <= y1; ++y) {
        const double dy = (double(y) + 0.5) - cy;
        for (size_t x = x0; x <= x1; ++x) {
          const double dx = (double(x) + 0.5) - cx;
          if (dx * dx + dy * dy <= r2) out.tissue_truth.set(x, y, true);
        }
      }
    }
  }

  // Per-8x8-block brightness offsets: coarse texture that survives pyramid
  // block-averaging, keeping the saturation histogram multi-bin at the
  // segmentation level.
  constexpr size_t kBlock = 8;
  constexpr double kBlockAmp = 16.0;
  constexpr double kPixelAmp = 6.0;
  const size_t blocks_x = (spec.width + kBlock - 1) / kBlock;
  const size_t blocks_y = (spec.height + kBlock - 1) / kBlock;
  std::vector<int> block_offset(blocks_x * blocks_y);
  for (size_t i = 0; i < block_offset.size(); ++i) {
    block_offset[i] =
        static_cast<int>(std::lround((rng.uniform01() * 2.0 - 1.0) * kBlockAmp));
  }

  constexpr int kTissue[3] = {232, 158, 196};
  constexpr int kBackground[3] = {235, 235, 235};

  out.image = RasterImage(spec.width, spec.height, 3);
  for (size_t y = 0; y < spec.height; ++y) {
    for (size_t x = 0; x < spec.width; ++x) {
      const int* base = out.tissue_truth.at(x, y) ? kTissue : kBackground;
      const int db = block_offset[(y / kBlock) * blocks_x + (x / kBlock)];
      for (size_t c = 0; c < 3; ++c) {
        const int dp = static_cast<int>(
            std::lround((rng.uniform01() * 2.0 - 1.0) * kPixelAmp));
        out.image.at(x, y, c) =
            static_cast<uint8_t>(std::clamp(base[c] + db + dp, 0, 255));
      }
    }
  }
  return out;
}

}  // namespace pathomil
