#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pathomil/image.hpp"

namespace pathomil {

// Patch-score grid over a slide: one cell per patch_size block at level 0,
// min-max normalized to [0,1] over the occupied cells.
struct HeatGrid {
  size_t gw = 0;
  size_t gh = 0;
  std::vector<double> values;  // row-major, [0,1]
  double raw_min = 0.0;        // score range before normalization
  double raw_max = 0.0;

  double at(size_t x, size_t y) const { return values[y * gw + x]; }
};

// Each coord's cell receives its score; untouched cells stay 0. Occupied
// cells are then min-max normalized (all scores equal -> all 0.5).
HeatGrid scores_to_grid(const std::vector<std::pair<uint32_t, uint32_t>>& coords,
                        const std::vector<double>& scores, size_t image_width,
                        size_t image_height, size_t patch_size);

enum class ResampleMode { kGaussianThenBilinear, kBilinear };

// Real-valued image produced by optionally Gaussian-smoothing the grid
// (sigma in grid cells, truncated renormalized kernel) and bilinear
// upsampling with corner alignment. Output values clamped to [0,1].
struct RealImage {
  size_t width = 0;
  size_t height = 0;
  std::vector<double> values;

  double at(size_t x, size_t y) const { return values[y * width + x]; }
};

RealImage resample_grid(const HeatGrid& grid, size_t target_w, size_t target_h,
                        ResampleMode mode, double sigma = 1.0);

// Piecewise-linear jet colormap through the anchor table
//   0:(0,0,0.5) 0.125:(0,0,1) 0.375:(0,1,1) 0.625:(1,1,0) 0.875:(1,0,0)
//   1:(0.5,0,0),
// channels scaled by 255 and rounded half up. v is clamped to [0,1].
std::array<uint8_t, 3> jet_color(double v);

// out = round((1-alpha) * slide + alpha * jet(heat)) per channel.
RasterImage overlay_heatmap(const RasterImage& slide, const RealImage& heat,
                            double alpha);

struct HeatmapRenderConfig {
  double alpha = 0.4;
  ResampleMode mode = ResampleMode::kGaussianThenBilinear;
  double sigma = 1.0;  // in grid cells
  size_t max_render_side = 4096;
};

struct HeatmapRender {
  RasterImage overlay;
  size_t level = 0;     // pyramid level the overlay was rendered at
  double raw_min = 0.0; // normalization range recorded for the side file
  double raw_max = 0.0;
};

// Renders the overlay at the highest-resolution pyramid level whose longer
// side fits max_render_side.
HeatmapRender render_heatmap(const ImagePyramid& pyramid, const HeatGrid& grid,
                             const HeatmapRenderConfig& cfg);

// "min <raw_min> max <raw_max> level <level>\n" side-file payload.
std::string heatmap_sidecar_text(const HeatmapRender& render);

}  // namespace pathomil
