#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pathomil {

enum class Split : uint8_t { kTrain, kVal, kTest, kUnassigned };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct ManifestEntry {
  std::string slide_id;
  std::string bag_path;  // resolved to an absolute-ish path at load time
  uint8_t label = 0;
  Split split = Split::kUnassigned;
};

// A dataset manifest is a JSON array of entry records:
//   [{"slide_id": ..., "bag_path": ..., "label": 0|1|2,
//     "split": "train"|"val"|"test"|"unassigned"}, ...]
// Relative bag paths are resolved against the manifest's directory.
struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<size_t> indices_with_split(Split s) const;
  // label -> count over all entries
  std::vector<size_t> class_counts(size_t n_classes = 3) const;
};

// Validates entries (unique slide ids, labels in range, known split names,
// bag files present on disk) and resolves relative paths.
DatasetManifest load_manifest(const std::string& path);

// check_paths=false skips the bag-file existence check (used right before the
// bags are written).
DatasetManifest parse_manifest(const std::string& json_text,
                               const std::string& base_dir,
                               bool check_paths = true);

void save_manifest(const DatasetManifest& manifest, const std::string& path);

}  // namespace pathomil
