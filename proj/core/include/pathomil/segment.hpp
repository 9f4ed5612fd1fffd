#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "pathomil/image.hpp"

namespace pathomil {

// Tissue mask at a stated pyramid level. Bits are 0/1 per pixel.
struct BinaryMask {
  size_t width = 0;
  size_t height = 0;
  size_t level = 0;
  bool min_area_applied = false;
  std::vector<uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(size_t w, size_t h, size_t lvl)
      : width(w), height(h), level(lvl), bits(w * h, 0) {}

  uint8_t at(size_t x, size_t y) const { return bits[y * width + x]; }
  void set(size_t x, size_t y, uint8_t v) { bits[y * width + x] = v; }
  size_t area() const;
};

// Mask <-> 0/255 gray raster conversions (PGM-facing).
RasterImage mask_to_gray(const BinaryMask& mask);
BinaryMask gray_to_mask(const RasterImage& gray, size_t level);

// Separable Gaussian blur, kernel radius ceil(3 sigma), kernel renormalized
// where it overhangs the border. Intermediate math in double; one rounding
// (half up) at the end.
RasterImage gaussian_blur(const RasterImage& img, double sigma);

// Hue/saturation/value planes of an RGB image. Hue uses the standard
// hexagonal formula in [0, 360) degrees (0 where the pixel is gray);
// saturation is round(255 * (max-min)/max) (0 where max = 0); value is the
// channel max, i.e. 255 * V where V = max/255.
struct HsvPlanes {
  std::vector<float> hue_degrees;
  RasterImage saturation;
  RasterImage value;
};

HsvPlanes rgb_to_hsv(const RasterImage& img);

std::array<uint64_t, 256> histogram(const RasterImage& gray);

// Threshold maximizing between-class variance over classes {<= t}, {> t},
// computed with exact integer arithmetic; ties break toward the smallest t.
// Foreground is value > t. When the histogram has all its mass in one bin
// the result is that bin with `degenerate` set (the foreground is empty).
struct OtsuResult {
  int threshold = 0;
  bool degenerate = false;
};

OtsuResult otsu_threshold(const std::array<uint64_t, 256>& hist);

enum class MorphOp { kErode, kDilate, kOpen, kClose, kGradient };

// Grayscale morphology with a square structuring element of odd size k and
// edge replication at the borders; gradient = dilate - erode. Works on
// masks through their 0/255 gray form.
RasterImage morph(const RasterImage& gray, MorphOp op, int k);
BinaryMask morph(const BinaryMask& mask, MorphOp op, int k);

// Removes 8-connected components with pixel count < min_area.
BinaryMask filter_small_components(const BinaryMask& mask, size_t min_area);

struct SegmentationConfig {
  double target_downsample = 32.0;
  double blur_sigma_base = 2.0;   // scaled by level_width/1024, clamped [0.5, 4]
  int close_kernel = 5;
  int open_kernel = 3;
  size_t min_component_area_px = 500;
  double coverage_threshold = 0.5;  // used downstream by the patch grid
};

struct SegmentResult {
  BinaryMask mask;
  size_t level = 0;
  double sigma_used = 0.0;
  bool degenerate = false;  // both threshold channels were degenerate
};

// Full tissue segmentation: pick the level for the target downsample, blur
// the level view, take the saturation channel, threshold it and its
// morphological gradient, OR the two masks, close(5) then open(3), and
// drop small components.
SegmentResult segment_tissue(const ImagePyramid& pyr,
                             const SegmentationConfig& cfg);

// Masked pixels blended with a tint at the given alpha (round half up);
// unmasked pixels pass through.
RasterImage render_mask_overlay(const RasterImage& level_view,
                                const BinaryMask& mask,
                                const std::array<uint8_t, 3>& tint,
                                double alpha);

}  // namespace pathomil
