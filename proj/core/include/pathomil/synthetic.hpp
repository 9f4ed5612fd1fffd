#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pathomil/bag.hpp"
#include "pathomil/image.hpp"
#include "pathomil/manifest.hpp"
#include "pathomil/segment.hpp"

namespace pathomil {

// Deterministic synthetic bag collection: class-c bags carry a fraction of
// "signal" instances drawn around the class signature vector (a canonical
// unit basis vector); the remainder is pure noise. Everything is a pure
// function of `seed` via the canonical PRNG, one derived sub-stream per bag.
struct SyntheticSpec {
  std::array<size_t, 3> bags_per_class{105, 21, 84};
  size_t feature_dim = 64;
  size_t min_instances = 50;
  size_t max_instances = 200;
  double signal_fraction = 0.2;
  double noise_sigma = 1.0;
  uint64_t seed = 42;
};

struct SyntheticBag {
  FeatureBag bag;
  std::vector<uint8_t> signal_flags;  // per instance: 1 = carries signature
};

struct SyntheticDataset {
  std::vector<SyntheticBag> bags;  // class 0 bags first, then 1, then 2
  DatasetManifest manifest;        // bag_path = "bags/<slide_id>.bag"
};

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec);

// Writes out_dir/bags/<slide_id>.bag for every bag, out_dir/manifest.json,
// and out_dir/signal_masks.json ({slide_id: [0|1, ...]}).
void write_synthetic_dataset(const SyntheticDataset& ds,
                             const std::string& out_dir);

// Synthetic slide raster: soft pink tissue blobs on a near-white background,
// textured with per-8x8-block brightness offsets (so tissue/background modes
// stay distinguishable after pyramid downsampling) plus per-pixel speckle.
// The returned truth mask marks painted tissue at level 0.
struct SlideSpec {
  size_t width = 4096;
  size_t height = 4096;
  size_t n_blobs = 3;
  double min_radius = 700.0;
  double max_radius = 1000.0;
  bool all_tissue = false;  // paint the whole canvas as tissue (no blobs)
  uint64_t seed = 7;
};

struct SyntheticSlide {
  RasterImage image;       // RGB
  BinaryMask tissue_truth; // level 0
};

SyntheticSlide make_synthetic_slide(const SlideSpec& spec);

}  // namespace pathomil
