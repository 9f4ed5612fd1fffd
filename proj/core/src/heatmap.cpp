#include "pathomil/heatmap.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "pathomil/errors.hpp"

namespace pathomil {

HeatGrid scores_to_grid(const std::vector<std::pair<uint32_t, uint32_t>>& coords,
                        const std::vector<double>& scores, size_t image_width,
                        size_t image_height, size_t patch_size) {
  if (coords.size() != scores.size()) {
    throw ContractError("scores_to_grid: coord/score count mismatch");
  }
  if (patch_size == 0 || image_width == 0 || image_height == 0) {
    throw ContractError("scores_to_grid: empty geometry");
  }
  HeatGrid grid;
  grid.gw = (image_width + patch_size - 1) / patch_size;
  grid.gh = (image_height + patch_size - 1) / patch_size;
  grid.values.assign(grid.gw * grid.gh, 0.0);
  std::vector<uint8_t> occupied(grid.gw * grid.gh, 0);

  for (size_t i = 0; i < coords.size(); ++i) {
    if (!std::isfinite(scores[i])) {
      throw ContractError("scores_to_grid: non-finite score");
    }
    const size_t cx = coords[i].first / patch_size;
    const size_t cy = coords[i].second / patch_size;
    if (coords[i].first >= image_width || coords[i].second >= image_height) {
      throw ContractError("scores_to_grid: coordinate (" +
                          std::to_string(coords[i].first) + ", " +
                          std::to_string(coords[i].second) +
                          ") outside the image");
    }
    grid.values[cy * grid.gw + cx] = scores[i];
    occupied[cy * grid.gw + cx] = 1;
  }

  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (size_t i = 0; i < grid.values.size(); ++i) {
    if (!occupied[i]) continue;
    if (!any) {
      lo = hi = grid.values[i];
      any = true;
    } else {
      lo = std::min(lo, grid.values[i]);
      hi = std::max(hi, grid.values[i]);
    }
  }
  grid.raw_min = lo;
  grid.raw_max = hi;
  if (!any) return grid;  // fully empty grid stays all zero
  for (size_t i = 0; i < grid.values.size(); ++i) {
    if (!occupied[i]) {
      grid.values[i] = 0.0;
    } else if (hi == lo) {
      grid.values[i] = 0.5;
    } else {
      grid.values[i] = (grid.values[i] - lo) / (hi - lo);
    }
  }
  return grid;
}

namespace {

std::vector<double> gaussian_blur_grid(const std::vector<double>& values,
                                       size_t w, size_t h, double sigma) {
  const int radius = int(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
  }
  auto pass = [&](const std::vector<double>& src, size_t n_outer,
                  size_t n_inner, size_t outer_stride, size_t inner_stride) {
    std::vector<double> dst(src.size());
    for (size_t o = 0; o < n_outer; ++o) {
      for (size_t i = 0; i < n_inner; ++i) {
        double acc = 0.0, wsum = 0.0;
        for (int k = -radius; k <= radius; ++k) {
          const long long j = (long long)i + k;
          if (j < 0 || j >= (long long)n_inner) continue;  // renormalized edge
          const double kw = kernel[k + radius];
          acc += kw * src[o * outer_stride + size_t(j) * inner_stride];
          wsum += kw;
        }
        dst[o * outer_stride + i * inner_stride] = acc / wsum;
      }
    }
    return dst;
  };
  std::vector<double> tmp = pass(values, h, w, w, 1);  // rows
  return pass(tmp, w, h, 1, w);                        // cols
}

}  // namespace

RealImage resample_grid(const HeatGrid& grid, size_t target_w, size_t target_h,
                        ResampleMode mode, double sigma) {
  if (grid.gw == 0 || grid.gh == 0) {
    throw ContractError("resample_grid: empty grid");
  }
  if (target_w < grid.gw || target_h < grid.gh) {
    throw ContractError("resample_grid: target smaller than grid");
  }
  std::vector<double> source = grid.values;
  if (mode == ResampleMode::kGaussianThenBilinear && sigma > 0.0) {
    source = gaussian_blur_grid(source, grid.gw, grid.gh, sigma);
  }

  RealImage out;
  out.width = target_w;
  out.height = target_h;
  out.values.resize(target_w * target_h);
  for (size_t y = 0; y < target_h; ++y) {
    const double sy = target_h > 1
                          ? double(y) * double(grid.gh - 1) / double(target_h - 1)
                          : 0.0;
    const size_t y0 = size_t(std::floor(sy));
    const size_t y1 = std::min(y0 + 1, grid.gh - 1);
    const double fy = sy - double(y0);
    for (size_t x = 0; x < target_w; ++x) {
      const double sx =
          target_w > 1 ? double(x) * double(grid.gw - 1) / double(target_w - 1)
                       : 0.0;
      const size_t x0 = size_t(std::floor(sx));
      const size_t x1 = std::min(x0 + 1, grid.gw - 1);
      const double fx = sx - double(x0);
      const double top = source[y0 * grid.gw + x0] * (1.0 - fx) +
                         source[y0 * grid.gw + x1] * fx;
      const double bottom = source[y1 * grid.gw + x0] * (1.0 - fx) +
                            source[y1 * grid.gw + x1] * fx;
      out.values[y * target_w + x] =
          std::clamp(top * (1.0 - fy) + bottom * fy, 0.0, 1.0);
    }
  }
  return out;
}

std::array<uint8_t, 3> jet_color(double v) {
  struct Anchor {
    double v, r, g, b;
  };
  static constexpr Anchor kAnchors[] = {
      {0.0, 0.0, 0.0, 0.5}, {0.125, 0.0, 0.0, 1.0}, {0.375, 0.0, 1.0, 1.0},
      {0.625, 1.0, 1.0, 0.0}, {0.875, 1.0, 0.0, 0.0}, {1.0, 0.5, 0.0, 0.0}};
  v = std::clamp(v, 0.0, 1.0);
  size_t hi = 1;
  while (kAnchors[hi].v < v) ++hi;
  const Anchor& a = kAnchors[hi - 1];
  const Anchor& b = kAnchors[hi];
  const double t = (v - a.v) / (b.v - a.v);
  auto channel = [t](double ca, double cb) {
    return uint8_t(std::floor((ca + t * (cb - ca)) * 255.0 + 0.5));
  };
  return {channel(a.r, b.r), channel(a.g, b.g), channel(a.b, b.b)};
}

RasterImage overlay_heatmap(const RasterImage& slide, const RealImage& heat,
                            double alpha) {
  if (slide.channels != 3) {
    throw ContractError("overlay_heatmap: slide must be RGB");
  }
  if (slide.width != heat.width || slide.height != heat.height) {
    throw ContractError("overlay_heatmap: slide is " +
                        std::to_string(slide.width) + "x" +
                        std::to_string(slide.height) + " but heat image is " +
                        std::to_string(heat.width) + "x" +
                        std::to_string(heat.height));
  }
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw ContractError("overlay_heatmap: alpha outside [0, 1]");
  }
  RasterImage out(slide.width, slide.height, 3);
  for (size_t y = 0; y < slide.height; ++y) {
    for (size_t x = 0; x < slide.width; ++x) {
      const std::array<uint8_t, 3> jet = jet_color(heat.at(x, y));
      for (size_t c = 0; c < 3; ++c) {
        const double blended = (1.0 - alpha) * double(slide.at(x, y, c)) +
                               alpha * double(jet[c]);
        out.at(x, y, c) = uint8_t(std::floor(blended + 0.5));
      }
    }
  }
  return out;
}

HeatmapRender render_heatmap(const ImagePyramid& pyramid, const HeatGrid& grid,
                             const HeatmapRenderConfig& cfg) {
  size_t level = pyramid.levels.size();
  for (size_t l = 0; l < pyramid.levels.size(); ++l) {
    const RasterImage& img = pyramid.levels[l];
    if (std::max(img.width, img.height) <= cfg.max_render_side) {
      level = l;
      break;
    }
  }
  if (level == pyramid.levels.size()) {
    level = pyramid.levels.size() - 1;  // smallest level still too big
  }
  const RasterImage& base = pyramid.levels[level];
  const RealImage heat =
      resample_grid(grid, base.width, base.height, cfg.mode, cfg.sigma);
  HeatmapRender render;
  render.overlay = overlay_heatmap(base, heat, cfg.alpha);
  render.level = level;
  render.raw_min = grid.raw_min;
  render.raw_max = grid.raw_max;
  return render;
}

namespace {

std::string fmt_double(double v) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string heatmap_sidecar_text(const HeatmapRender& render) {
  return "min " + fmt_double(render.raw_min) + " max " +
         fmt_double(render.raw_max) + " level " +
         std::to_string(render.level) + "\n";
}

}  // namespace pathomil
