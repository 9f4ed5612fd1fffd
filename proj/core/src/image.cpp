#include "pathomil/image.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "pathomil/errors.hpp"
#include "pathomil/io_util.hpp"

namespace pathomil {

namespace {

// Skips whitespace and '#' comment lines between PNM header tokens.
void skip_pnm_separators(const std::vector<uint8_t>& bytes, size_t& pos) {
  while (pos < bytes.size()) {
    uint8_t c = bytes[pos];
    if (std::isspace(c)) {
      ++pos;
    } else if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
}

size_t read_pnm_number(const std::vector<uint8_t>& bytes, size_t& pos,
                       const char* what) {
  skip_pnm_separators(bytes, pos);
  if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
    throw FormatError(std::string("PNM header: expected ") + what +
                      " at byte offset " + std::to_string(pos));
  }
  size_t value = 0;
  while (pos < bytes.size() && std::isdigit(bytes[pos])) {
    value = value * 10 + (bytes[pos] - '0');
    if (value > (size_t{1} << 31)) {
      throw FormatError(std::string("PNM header: ") + what + " out of range");
    }
    ++pos;
  }
  return value;
}

}  // namespace

RasterImage decode_pnm(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' ||
      (bytes[1] != '5' && bytes[1] != '6')) {
    throw FormatError("not a binary PGM (P5) or PPM (P6) file");
  }
  RasterImage img;
  img.channels = (bytes[1] == '6') ? 3 : 1;
  size_t pos = 2;
  img.width = read_pnm_number(bytes, pos, "width");
  img.height = read_pnm_number(bytes, pos, "height");
  size_t maxval = read_pnm_number(bytes, pos, "maxval");
  if (maxval != 255) {
    throw FormatError("PNM maxval " + std::to_string(maxval) +
                      " unsupported (need 255)");
  }
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw FormatError("PNM header: expected single separator before pixels");
  }
  ++pos;
  size_t need = img.width * img.height * img.channels;
  if (bytes.size() - pos < need) {
    throw FormatError("PNM pixel data truncated: need " +
                      std::to_string(need) + " bytes, have " +
                      std::to_string(bytes.size() - pos));
  }
  img.data.assign(bytes.begin() + static_cast<ptrdiff_t>(pos),
                  bytes.begin() + static_cast<ptrdiff_t>(pos + need));
  return img;
}

RasterImage read_pnm(const std::string& path) {
  return decode_pnm(read_file(path));
}

std::vector<uint8_t> encode_pnm(const RasterImage& img) {
  if (img.channels != 1 && img.channels != 3) {
    throw ContractError("encode_pnm: image must have 1 or 3 channels");
  }
  if (img.data.size() != img.width * img.height * img.channels) {
    throw ContractError("encode_pnm: pixel buffer does not match dimensions");
  }
  std::string header = (img.channels == 3 ? "P6\n" : "P5\n") +
                       std::to_string(img.width) + " " +
                       std::to_string(img.height) + "\n255\n";
  std::vector<uint8_t> out;
  out.reserve(header.size() + img.data.size());
  out.insert(out.end(), header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

void write_pnm(const RasterImage& img, const std::string& path) {
  write_file_atomic(path, encode_pnm(img));
}

ImagePyramid build_pyramid(const RasterImage& img, size_t max_levels) {
  if (img.width == 0 || img.height == 0) {
    throw ContractError("build_pyramid: empty image");
  }
  ImagePyramid pyr;
  pyr.levels.push_back(img);
  while (pyr.levels.size() < max_levels) {
    const RasterImage& prev = pyr.levels.back();
    if (prev.width == 1 && prev.height == 1) break;
    RasterImage next((prev.width + 1) / 2, (prev.height + 1) / 2,
                     prev.channels);
    for (size_t y = 0; y < next.height; ++y) {
      for (size_t x = 0; x < next.width; ++x) {
        size_t x0 = 2 * x, y0 = 2 * y;
        size_t x1 = std::min(x0 + 2, prev.width);
        size_t y1 = std::min(y0 + 2, prev.height);
        for (size_t c = 0; c < prev.channels; ++c) {
          unsigned sum = 0, count = 0;
          for (size_t yy = y0; yy < y1; ++yy) {
            for (size_t xx = x0; xx < x1; ++xx) {
              sum += prev.at(xx, yy, c);
              ++count;
            }
          }
          // Mean of available pixels, rounded half up.
          next.at(x, y, c) = static_cast<uint8_t>((2 * sum + count) / (2 * count));
        }
      }
    }
    pyr.levels.push_back(std::move(next));
  }
  return pyr;
}

size_t best_level_for_downsample(const ImagePyramid& pyr, double requested) {
  if (requested < 1.0 || pyr.levels.empty()) return 0;
  size_t best = 0;
  for (size_t l = 0; l < pyr.levels.size(); ++l) {
    if (static_cast<double>(pyr.downsample_of(l)) <= requested) {
      best = l;
    }
  }
  return best;
}

}  // namespace pathomil
