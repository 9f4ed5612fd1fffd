#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "pathomil/matrix.hpp"
#include "pathomil/segment.hpp"

namespace pathomil {

// Non-overlapping patch grid at level 0. Coordinates are top-left corners,
// multiples of patch_size, fully inside the level-0 bounds, sorted
// row-major.
struct PatchGrid {
  size_t patch_size = 256;
  size_t level = 0;  // extraction level of the coordinates
  double coverage_threshold = 0.5;
  std::vector<std::pair<uint32_t, uint32_t>> coords;
};

// Keeps a grid cell iff the tissue fraction of its footprint projected onto
// the mask's level is >= coverage_threshold.
PatchGrid extract_patch_grid(const BinaryMask& mask, size_t level0_width,
                             size_t level0_height, size_t patch_size = 256,
                             double coverage_threshold = 0.5);

// Plain-text form: one "x y" pair per line, row-major order.
std::string patch_grid_to_text(const PatchGrid& grid);

// Number of feature columns produced by handcrafted_patch_features.
inline constexpr size_t kHandcraftedFeatureDim = 30;

// Fixed-order per-patch descriptor on the level-0 slide raster:
//   [0..7]   8-bin hue histogram (45 degree bins, fraction of pixels)
//   [8..15]  8-bin saturation histogram (bins of 32)
//   [16..23] 8-bin value histogram (bins of 32)
//   [24]     mean saturation / 255
//   [25]     std of saturation / 255
//   [26]     mean value / 255
//   [27]     std of value / 255
//   [28]     mean morphological-gradient magnitude of saturation / 255
//   [29]     tissue fraction of the patch footprint in the mask
// Every entry lies in [0, 1].
DenseMatrix handcrafted_patch_features(const RasterImage& slide,
                                       const BinaryMask& mask,
                                       const PatchGrid& grid);

}  // namespace pathomil
