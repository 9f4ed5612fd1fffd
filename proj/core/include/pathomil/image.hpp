#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pathomil {

// 8-bit raster, row-major, interleaved channels (3 = RGB, 1 = gray).
struct RasterImage {
  size_t width = 0;
  size_t height = 0;
  size_t channels = 1;
  std::vector<uint8_t> data;

  RasterImage() = default;
  RasterImage(size_t w, size_t h, size_t c, uint8_t fill = 0)
      : width(w), height(h), channels(c), data(w * h * c, fill) {}

  uint8_t& at(size_t x, size_t y, size_t c = 0) {
    return data[(y * width + x) * channels + c];
  }
  uint8_t at(size_t x, size_t y, size_t c = 0) const {
    return data[(y * width + x) * channels + c];
  }
  size_t pixel_count() const { return width * height; }
};

// Binary PPM (P6, RGB) and PGM (P5, gray) with maxval 255. The reader
// dispatches on the magic; the writer picks the format from the channel
// count.
RasterImage read_pnm(const std::string& path);
RasterImage decode_pnm(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> encode_pnm(const RasterImage& img);
void write_pnm(const RasterImage& img, const std::string& path);

// Power-of-two pyramid: level 0 is the source; level l halves the previous
// dimensions (ceil) and each pixel is the mean of its 2x2 source block
// (ragged edges average the available pixels), rounded half up.
struct ImagePyramid {
  std::vector<RasterImage> levels;

  size_t downsample_of(size_t level) const { return size_t{1} << level; }
};

ImagePyramid build_pyramid(const RasterImage& img, size_t max_levels);

// Largest level whose downsample factor 2^l does not exceed `requested`;
// level 0 when requested < 1.
size_t best_level_for_downsample(const ImagePyramid& pyr, double requested);

}  // namespace pathomil
