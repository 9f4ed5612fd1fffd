#include "pathomil/segment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/multiprecision/cpp_int.hpp>

#include "pathomil/errors.hpp"

namespace pathomil {

namespace {

using boost::multiprecision::int128_t;
using boost::multiprecision::uint256_t;

std::vector<double> gaussian_kernel(double sigma) {
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<size_t>(i + radius)] =
        std::exp(-0.5 * (static_cast<double>(i) / sigma) *
                 (static_cast<double>(i) / sigma));
  }
  double sum = std::accumulate(k.begin(), k.end(), 0.0);
  for (double& w : k) w /= sum;
  return k;
}

uint8_t round_half_up_u8(double v) {
  double r = std::floor(v + 0.5);
  if (r < 0.0) r = 0.0;
  if (r > 255.0) r = 255.0;
  return static_cast<uint8_t>(r);
}

}  // namespace

size_t BinaryMask::area() const {
  size_t n = 0;
  for (uint8_t b : bits) n += (b != 0);
  return n;
}

RasterImage mask_to_gray(const BinaryMask& mask) {
  RasterImage img(mask.width, mask.height, 1);
  for (size_t i = 0; i < mask.bits.size(); ++i) {
    img.data[i] = mask.bits[i] ? 255 : 0;
  }
  return img;
}

BinaryMask gray_to_mask(const RasterImage& gray, size_t level) {
  if (gray.channels != 1) {
    throw ContractError("gray_to_mask: image must be single-channel");
  }
  BinaryMask mask(gray.width, gray.height, level);
  for (size_t i = 0; i < gray.data.size(); ++i) {
    mask.bits[i] = gray.data[i] ? 1 : 0;
  }
  return mask;
}

RasterImage gaussian_blur(const RasterImage& img, double sigma) {
  if (sigma <= 0.0) {
    throw ContractError("gaussian_blur: sigma must be positive");
  }
  std::vector<double> kernel = gaussian_kernel(sigma);
  int radius = (static_cast<int>(kernel.size()) - 1) / 2;
  const int w = static_cast<int>(img.width);
  const int h = static_cast<int>(img.height);
  const int ch = static_cast<int>(img.channels);

  // Horizontal pass into a double buffer; border taps renormalize over the
  // in-bounds weights.
  std::vector<double> mid(img.data.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int lo = std::max(-radius, -x);
      int hi = std::min(radius, w - 1 - x);
      double wsum = 0.0;
      for (int i = lo; i <= hi; ++i) wsum += kernel[static_cast<size_t>(i + radius)];
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = lo; i <= hi; ++i) {
          acc += kernel[static_cast<size_t>(i + radius)] *
                 img.data[static_cast<size_t>(((y * w) + x + i) * ch + c)];
        }
        mid[static_cast<size_t>(((y * w) + x) * ch + c)] = acc / wsum;
      }
    }
  }

  // Vertical pass, then the single rounding to 8 bits.
  RasterImage out(img.width, img.height, img.channels);
  for (int y = 0; y < h; ++y) {
    int lo = std::max(-radius, -y);
    int hi = std::min(radius, h - 1 - y);
    double wsum = 0.0;
    for (int i = lo; i <= hi; ++i) wsum += kernel[static_cast<size_t>(i + radius)];
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int i = lo; i <= hi; ++i) {
          acc += kernel[static_cast<size_t>(i + radius)] *
                 mid[static_cast<size_t>((((y + i) * w) + x) * ch + c)];
        }
        out.data[static_cast<size_t>(((y * w) + x) * ch + c)] =
            round_half_up_u8(acc / wsum);
      }
    }
  }
  return out;
}

HsvPlanes rgb_to_hsv(const RasterImage& img) {
  if (img.channels != 3) {
    throw ContractError("rgb_to_hsv: input must have 3 channels");
  }
  HsvPlanes out;
  out.hue_degrees.resize(img.pixel_count());
  out.saturation = RasterImage(img.width, img.height, 1);
  out.value = RasterImage(img.width, img.height, 1);
  for (size_t i = 0; i < img.pixel_count(); ++i) {
    double r = img.data[3 * i + 0];
    double g = img.data[3 * i + 1];
    double b = img.data[3 * i + 2];
    double mx = std::max({r, g, b});
    double mn = std::min({r, g, b});
    double delta = mx - mn;
    double hue = 0.0;
    if (delta > 0.0) {
      if (mx == r) {
        hue = 60.0 * std::fmod((g - b) / delta, 6.0);
      } else if (mx == g) {
        hue = 60.0 * ((b - r) / delta + 2.0);
      } else {
        hue = 60.0 * ((r - g) / delta + 4.0);
      }
      if (hue < 0.0) hue += 360.0;
    }
    out.hue_degrees[i] = static_cast<float>(hue);
    out.saturation.data[i] =
        (mx <= 0.0) ? 0 : round_half_up_u8(255.0 * delta / mx);
    out.value.data[i] = static_cast<uint8_t>(mx);
  }
  return out;
}

std::array<uint64_t, 256> histogram(const RasterImage& gray) {
  if (gray.channels != 1) {
    throw ContractError("histogram: image must be single-channel");
  }
  std::array<uint64_t, 256> hist{};
  for (uint8_t v : gray.data) ++hist[v];
  return hist;
}

OtsuResult otsu_threshold(const std::array<uint64_t, 256>& hist) {
  uint64_t total = 0;
  uint64_t weighted_total = 0;
  int lowest = -1, highest = -1;
  for (int v = 0; v < 256; ++v) {
    if (hist[static_cast<size_t>(v)] > 0) {
      if (lowest < 0) lowest = v;
      highest = v;
    }
    total += hist[static_cast<size_t>(v)];
    weighted_total += hist[static_cast<size_t>(v)] * static_cast<uint64_t>(v);
  }
  if (total == 0) {
    throw ContractError("otsu_threshold: empty histogram");
  }
  if (lowest == highest) {
    return OtsuResult{lowest, true};
  }

  // Between-class variance at threshold t is proportional to
  //   A(t)^2 / D(t),  A = total*cum0 - weighted_total*w0,  D = w0*w1,
  // all in exact integers. Ratios are compared by cross-multiplying
  // A^2 * D' against A'^2 * D in 256-bit arithmetic, so the argmax and the
  // smallest-t tie-break are exact for any pixel counts.
  uint64_t w0 = 0;
  uint64_t cum0 = 0;
  int best_t = lowest;
  uint256_t best_num = 0;
  uint64_t best_den = 1;
  bool have_best = false;
  for (int t = 0; t < 255; ++t) {
    w0 += hist[static_cast<size_t>(t)];
    cum0 += hist[static_cast<size_t>(t)] * static_cast<uint64_t>(t);
    uint64_t w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    int128_t a = int128_t(total) * cum0 - int128_t(weighted_total) * w0;
    uint256_t a_abs = uint256_t(a < 0 ? -a : a);
    uint256_t num = a_abs * a_abs;
    uint64_t den = w0 * w1;
    if (!have_best || num * best_den > best_num * den) {
      have_best = true;
      best_num = num;
      best_den = den;
      best_t = t;
    }
  }
  return OtsuResult{best_t, false};
}

RasterImage morph(const RasterImage& gray, MorphOp op, int k) {
  if (gray.channels != 1) {
    throw ContractError("morph: image must be single-channel");
  }
  if (k < 3 || k % 2 == 0) {
    throw ContractError("morph: kernel size must be odd and >= 3");
  }
  auto run = [&](const RasterImage& src, bool take_max) {
    const int w = static_cast<int>(src.width);
    const int h = static_cast<int>(src.height);
    const int r = k / 2;
    RasterImage dst(src.width, src.height, 1);
    // Separable min/max filter (square structuring element): rows, then
    // columns. Edge replication = clamping the window to the image.
    RasterImage mid(src.width, src.height, 1);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int lo = std::max(0, x - r), hi = std::min(w - 1, x + r);
        uint8_t v = src.at(static_cast<size_t>(lo), static_cast<size_t>(y));
        for (int i = lo + 1; i <= hi; ++i) {
          uint8_t s = src.at(static_cast<size_t>(i), static_cast<size_t>(y));
          v = take_max ? std::max(v, s) : std::min(v, s);
        }
        mid.at(static_cast<size_t>(x), static_cast<size_t>(y)) = v;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int lo = std::max(0, y - r), hi = std::min(h - 1, y + r);
        uint8_t v = mid.at(static_cast<size_t>(x), static_cast<size_t>(lo));
        for (int i = lo + 1; i <= hi; ++i) {
          uint8_t s = mid.at(static_cast<size_t>(x), static_cast<size_t>(i));
          v = take_max ? std::max(v, s) : std::min(v, s);
        }
        dst.at(static_cast<size_t>(x), static_cast<size_t>(y)) = v;
      }
    }
    return dst;
  };

  switch (op) {
    case MorphOp::kErode:
      return run(gray, false);
    case MorphOp::kDilate:
      return run(gray, true);
    case MorphOp::kOpen:
      return run(run(gray, false), true);
    case MorphOp::kClose:
      return run(run(gray, true), false);
    case MorphOp::kGradient: {
      RasterImage d = run(gray, true);
      RasterImage e = run(gray, false);
      RasterImage out(gray.width, gray.height, 1);
      for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = static_cast<uint8_t>(d.data[i] - e.data[i]);
      }
      return out;
    }
  }
  throw ContractError("morph: unknown operation");
}

BinaryMask morph(const BinaryMask& mask, MorphOp op, int k) {
  RasterImage gray = morph(mask_to_gray(mask), op, k);
  BinaryMask out = gray_to_mask(gray, mask.level);
  out.min_area_applied = mask.min_area_applied;
  return out;
}

BinaryMask filter_small_components(const BinaryMask& mask, size_t min_area) {
  BinaryMask out = mask;
  out.min_area_applied = true;
  if (min_area == 0 || mask.bits.empty()) return out;

  const int w = static_cast<int>(mask.width);
  const int h = static_cast<int>(mask.height);
  std::vector<int32_t> label(mask.bits.size(), -1);
  std::vector<size_t> stack;
  int32_t next_label = 0;
  std::vector<size_t> areas;
  for (size_t start = 0; start < mask.bits.size(); ++start) {
    if (!mask.bits[start] || label[start] >= 0) continue;
    size_t area = 0;
    stack.push_back(start);
    label[start] = next_label;
    while (!stack.empty()) {
      size_t idx = stack.back();
      stack.pop_back();
      ++area;
      int x = static_cast<int>(idx % mask.width);
      int y = static_cast<int>(idx / mask.width);
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          size_t nidx = static_cast<size_t>(ny) * mask.width +
                        static_cast<size_t>(nx);
          if (mask.bits[nidx] && label[nidx] < 0) {
            label[nidx] = next_label;
            stack.push_back(nidx);
          }
        }
      }
    }
    areas.push_back(area);
    ++next_label;
  }
  for (size_t i = 0; i < out.bits.size(); ++i) {
    if (out.bits[i] && areas[static_cast<size_t>(label[i])] < min_area) {
      out.bits[i] = 0;
    }
  }
  return out;
}

SegmentResult segment_tissue(const ImagePyramid& pyr,
                             const SegmentationConfig& cfg) {
  SegmentResult result;
  result.level = best_level_for_downsample(pyr, cfg.target_downsample);
  const RasterImage& view = pyr.levels[result.level];
  if (view.channels != 3) {
    throw ContractError("segment_tissue: pyramid must hold RGB images");
  }

  double sigma = cfg.blur_sigma_base * static_cast<double>(view.width) / 1024.0;
  sigma = std::clamp(sigma, 0.5, 4.0);
  result.sigma_used = sigma;

  RasterImage blurred = gaussian_blur(view, sigma);
  HsvPlanes hsv = rgb_to_hsv(blurred);
  const RasterImage& sat = hsv.saturation;

  OtsuResult t_sat = otsu_threshold(histogram(sat));
  RasterImage grad = morph(sat, MorphOp::kGradient, 3);
  OtsuResult t_grad = otsu_threshold(histogram(grad));
  result.degenerate = t_sat.degenerate && t_grad.degenerate;

  BinaryMask mask(view.width, view.height, result.level);
  if (!result.degenerate) {
    for (size_t i = 0; i < mask.bits.size(); ++i) {
      bool fg_sat = !t_sat.degenerate &&
                    sat.data[i] > static_cast<uint8_t>(t_sat.threshold);
      bool fg_grad = !t_grad.degenerate &&
                     grad.data[i] > static_cast<uint8_t>(t_grad.threshold);
      mask.bits[i] = (fg_sat || fg_grad) ? 1 : 0;
    }
    mask = morph(mask, MorphOp::kClose, cfg.close_kernel);
    mask = morph(mask, MorphOp::kOpen, cfg.open_kernel);
    mask = filter_small_components(mask, cfg.min_component_area_px);
  } else {
    mask.min_area_applied = true;
  }
  result.mask = std::move(mask);
  return result;
}

RasterImage render_mask_overlay(const RasterImage& level_view,
                                const BinaryMask& mask,
                                const std::array<uint8_t, 3>& tint,
                                double alpha) {
  if (level_view.width != mask.width || level_view.height != mask.height) {
    throw ContractError("render_mask_overlay: image/mask dimension mismatch");
  }
  if (level_view.channels != 3) {
    throw ContractError("render_mask_overlay: image must be RGB");
  }
  RasterImage out = level_view;
  for (size_t y = 0; y < mask.height; ++y) {
    for (size_t x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      for (size_t c = 0; c < 3; ++c) {
        double blended = (1.0 - alpha) * level_view.at(x, y, c) +
                         alpha * static_cast<double>(tint[c]);
        out.at(x, y, c) = round_half_up_u8(blended);
      }
    }
  }
  return out;
}

}  // namespace pathomil
