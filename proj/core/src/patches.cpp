#include "pathomil/patches.hpp"

#include <cmath>
#include <string>

#include "pathomil/errors.hpp"

namespace pathomil {

namespace {

// Tissue fraction of the level-0 rectangle [x0, x0+size) x [y0, y0+size)
// projected onto the mask level (downsample factor 2^level). Mask pixels
// partially covered by the rectangle contribute proportionally.
double footprint_coverage(const BinaryMask& mask, size_t x0, size_t y0,
                          size_t size) {
  const double f = static_cast<double>(size_t{1} << mask.level);
  const double gx0 = static_cast<double>(x0) / f;
  const double gy0 = static_cast<double>(y0) / f;
  const double gx1 = static_cast<double>(x0 + size) / f;
  const double gy1 = static_cast<double>(y0 + size) / f;
  const size_t cx0 = static_cast<size_t>(std::floor(gx0));
  const size_t cy0 = static_cast<size_t>(std::floor(gy0));
  const size_t cx1 = std::min(mask.width, static_cast<size_t>(std::ceil(gx1)));
  const size_t cy1 = std::min(mask.height, static_cast<size_t>(std::ceil(gy1)));

  double covered = 0.0;
  double total = (gx1 - gx0) * (gy1 - gy0);
  for (size_t cy = cy0; cy < cy1; ++cy) {
    double oy = std::min(gy1, static_cast<double>(cy + 1)) -
                std::max(gy0, static_cast<double>(cy));
    for (size_t cx = cx0; cx < cx1; ++cx) {
      if (!mask.at(cx, cy)) continue;
      double ox = std::min(gx1, static_cast<double>(cx + 1)) -
                  std::max(gx0, static_cast<double>(cx));
      covered += ox * oy;
    }
  }
  return total > 0.0 ? covered / total : 0.0;
}

}  // namespace

PatchGrid extract_patch_grid(const BinaryMask& mask, size_t level0_width,
                             size_t level0_height, size_t patch_size,
                             double coverage_threshold) {
  if (patch_size == 0) {
    throw ContractError("extract_patch_grid: patch size must be positive");
  }
  PatchGrid grid;
  grid.patch_size = patch_size;
  grid.level = 0;
  grid.coverage_threshold = coverage_threshold;
  for (size_t y = 0; y + patch_size <= level0_height; y += patch_size) {
    for (size_t x = 0; x + patch_size <= level0_width; x += patch_size) {
      if (footprint_coverage(mask, x, y, patch_size) >= coverage_threshold) {
        grid.coords.emplace_back(static_cast<uint32_t>(x),
                                 static_cast<uint32_t>(y));
      }
    }
  }
  return grid;
}

std::string patch_grid_to_text(const PatchGrid& grid) {
  std::string out;
  for (const auto& [x, y] : grid.coords) {
    out += std::to_string(x);
    out += ' ';
    out += std::to_string(y);
    out += '\n';
  }
  return out;
}

DenseMatrix handcrafted_patch_features(const RasterImage& slide,
                                       const BinaryMask& mask,
                                       const PatchGrid& grid) {
  if (slide.channels != 3) {
    throw ContractError("handcrafted_patch_features: slide must be RGB");
  }
  const size_t ps = grid.patch_size;
  DenseMatrix features(grid.coords.size(), kHandcraftedFeatureDim);

  RasterImage patch(ps, ps, 3);
  for (size_t row = 0; row < grid.coords.size(); ++row) {
    const auto [px, py] = grid.coords[row];
    if (px + ps > slide.width || py + ps > slide.height) {
      throw ContractError("handcrafted_patch_features: patch at (" +
                          std::to_string(px) + ", " + std::to_string(py) +
                          ") exceeds slide bounds");
    }
    for (size_t y = 0; y < ps; ++y) {
      const uint8_t* src = &slide.data[((py + y) * slide.width + px) * 3];
      std::copy(src, src + ps * 3, &patch.data[y * ps * 3]);
    }
    HsvPlanes hsv = rgb_to_hsv(patch);
    double* out = features.row(row);

    const double inv_n = 1.0 / static_cast<double>(ps * ps);
    for (size_t i = 0; i < ps * ps; ++i) {
      size_t hue_bin = std::min<size_t>(
          7, static_cast<size_t>(hsv.hue_degrees[i] / 45.0f));
      out[hue_bin] += inv_n;
      out[8 + hsv.saturation.data[i] / 32] += inv_n;
      out[16 + hsv.value.data[i] / 32] += inv_n;
    }

    double s_mean = 0.0, v_mean = 0.0;
    for (size_t i = 0; i < ps * ps; ++i) {
      s_mean += hsv.saturation.data[i];
      v_mean += hsv.value.data[i];
    }
    s_mean *= inv_n;
    v_mean *= inv_n;
    double s_var = 0.0, v_var = 0.0;
    for (size_t i = 0; i < ps * ps; ++i) {
      double ds = hsv.saturation.data[i] - s_mean;
      double dv = hsv.value.data[i] - v_mean;
      s_var += ds * ds;
      v_var += dv * dv;
    }
    s_var *= inv_n;
    v_var *= inv_n;
    out[24] = s_mean / 255.0;
    out[25] = std::sqrt(s_var) / 255.0;
    out[26] = v_mean / 255.0;
    out[27] = std::sqrt(v_var) / 255.0;

    RasterImage grad = morph(hsv.saturation, MorphOp::kGradient, 3);
    double g_mean = 0.0;
    for (uint8_t g : grad.data) g_mean += g;
    out[28] = g_mean * inv_n / 255.0;

    out[29] = footprint_coverage(mask, px, py, ps);
  }
  return features;
}

}  // namespace pathomil
