#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pathomil/matrix.hpp"

namespace pathomil {

// One slide's instance bag: label, per-patch level-0 coordinates, and the
// dense instance-feature matrix.
struct FeatureBag {
  std::string slide_id;
  uint8_t label = 0;  // 0 low / 1 medium / 2 high
  std::vector<std::pair<uint32_t, uint32_t>> coords;
  DenseMatrix features;  // n x d

  size_t n_instances() const { return features.rows; }
  size_t feature_dim() const { return features.cols; }
};

// Bag container format "BAG1", all integers little-endian:
//   "BAG1" | u32 version=1 | u32 n | u32 d | u8 label | 3 zero pad bytes |
//   u16 slide_id length | slide_id UTF-8 bytes |
//   n x (u32 x, u32 y) | n*d f32 row-major features.
// Features are stored as 32-bit floats; a write->read round trip reproduces
// the bag with features rounded to f32, and a second write is byte-stable.
std::vector<uint8_t> write_bag(const FeatureBag& bag);
FeatureBag read_bag(const std::vector<uint8_t>& bytes);

void save_bag(const FeatureBag& bag, const std::string& path);
FeatureBag load_bag(const std::string& path);

}  // namespace pathomil
