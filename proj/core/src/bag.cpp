#include "pathomil/bag.hpp"

#include <limits>

#include "pathomil/errors.hpp"
#include "pathomil/io_util.hpp"

namespace pathomil {

namespace {
constexpr char kMagic[4] = {'B', 'A', 'G', '1'};
constexpr uint32_t kVersion = 1;
}  // namespace

std::vector<uint8_t> write_bag(const FeatureBag& bag) {
  if (bag.coords.size() != bag.features.rows) {
    throw ContractError("write_bag: coords count " +
                        std::to_string(bag.coords.size()) +
                        " does not match feature rows " +
                        std::to_string(bag.features.rows));
  }
  if (bag.slide_id.size() > std::numeric_limits<uint16_t>::max()) {
    throw ContractError("write_bag: slide_id longer than 65535 bytes");
  }
  if (bag.features.rows > std::numeric_limits<uint32_t>::max() ||
      bag.features.cols > std::numeric_limits<uint32_t>::max()) {
    throw ContractError("write_bag: bag dimensions exceed u32 range");
  }

  std::vector<uint8_t> out;
  out.reserve(4 + 4 + 4 + 4 + 4 + 2 + bag.slide_id.size() +
              bag.coords.size() * 8 + bag.features.data.size() * 4);
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u32le(out, kVersion);
  put_u32le(out, static_cast<uint32_t>(bag.features.rows));
  put_u32le(out, static_cast<uint32_t>(bag.features.cols));
  out.push_back(bag.label);
  out.push_back(0);
  out.push_back(0);
  out.push_back(0);
  put_u16le(out, static_cast<uint16_t>(bag.slide_id.size()));
  out.insert(out.end(), bag.slide_id.begin(), bag.slide_id.end());
  for (const auto& [x, y] : bag.coords) {
    put_u32le(out, x);
    put_u32le(out, y);
  }
  for (double v : bag.features.data) {
    put_f32le(out, static_cast<float>(v));
  }
  return out;
}

FeatureBag read_bag(const std::vector<uint8_t>& bytes) {
  ByteReader r{bytes.data(), bytes.size(), 0};
  uint8_t magic[4];
  for (auto& m : magic) m = r.u8("bag magic");
  if (magic[0] != 'B' || magic[1] != 'A' || magic[2] != 'G' ||
      magic[3] != '1') {
    throw FormatError("read_bag: bad magic, expected \"BAG1\"");
  }
  const uint32_t version = r.u32le("bag version");
  if (version != kVersion) {
    throw FormatError("read_bag: unsupported version " +
                      std::to_string(version));
  }
  const uint32_t n = r.u32le("instance count");
  const uint32_t d = r.u32le("feature dim");
  FeatureBag bag;
  bag.label = r.u8("bag label");
  for (int i = 0; i < 3; ++i) {
    const uint8_t pad = r.u8("header padding");
    if (pad != 0) {
      throw FormatError("read_bag: nonzero header padding byte");
    }
  }
  const uint16_t id_len = r.u16le("slide id length");
  bag.slide_id = r.bytes(id_len, "slide id");
  bag.coords.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    const uint32_t x = r.u32le("patch x");
    const uint32_t y = r.u32le("patch y");
    bag.coords[i] = {x, y};
  }
  bag.features = DenseMatrix(n, d);
  for (size_t i = 0; i < bag.features.data.size(); ++i) {
    bag.features.data[i] = static_cast<double>(r.f32le("feature value"));
  }
  if (r.pos != bytes.size()) {
    throw FormatError("read_bag: " +
                      std::to_string(bytes.size() - r.pos) +
                      " trailing bytes after feature payload");
  }
  return bag;
}

void save_bag(const FeatureBag& bag, const std::string& path) {
  write_file_atomic(path, write_bag(bag));
}

FeatureBag load_bag(const std::string& path) {
  return read_bag(read_file(path));
}

}  // namespace pathomil
