#include "pathomil/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "pathomil/errors.hpp"
#include "pathomil/io_util.hpp"

namespace pathomil {

namespace fs = std::filesystem;
using nlohmann::json;

const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
    case Split::kUnassigned: return "unassigned";
  }
  throw ContractError("split_name: invalid split value");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  if (name == "unassigned") return Split::kUnassigned;
  throw FormatError("manifest: unknown split \"" + name + "\"");
}

std::vector<size_t> DatasetManifest::indices_with_split(Split s) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].split == s) out.push_back(i);
  }
  return out;
}

std::vector<size_t> DatasetManifest::class_counts(size_t n_classes) const {
  std::vector<size_t> counts(n_classes, 0);
  for (const auto& e : entries) {
    if (e.label >= n_classes) {
      throw ContractError("manifest: label " + std::to_string(e.label) +
                          " out of range for " + std::to_string(n_classes) +
                          " classes");
    }
    ++counts[e.label];
  }
  return counts;
}

DatasetManifest parse_manifest(const std::string& json_text,
                               const std::string& base_dir, bool check_paths) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("manifest: invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) {
    throw FormatError("manifest: top-level JSON value must be an array");
  }
  DatasetManifest manifest;
  std::unordered_set<std::string> seen_ids;
  for (const auto& item : doc) {
    if (!item.is_object()) {
      throw FormatError("manifest: entry is not a JSON object");
    }
    ManifestEntry entry;
    try {
      entry.slide_id = item.at("slide_id").get<std::string>();
      entry.bag_path = item.at("bag_path").get<std::string>();
      const int64_t label = item.at("label").get<int64_t>();
      if (label < 0 || label > 2) {
        throw FormatError("manifest: label " + std::to_string(label) +
                          " outside {0,1,2} for slide \"" + entry.slide_id +
                          "\"");
      }
      entry.label = static_cast<uint8_t>(label);
      entry.split = split_from_name(item.at("split").get<std::string>());
    } catch (const json::exception& e) {
      throw FormatError(std::string("manifest: malformed entry: ") + e.what());
    }
    if (!seen_ids.insert(entry.slide_id).second) {
      throw FormatError("manifest: duplicate slide_id \"" + entry.slide_id +
                        "\"");
    }
    fs::path p(entry.bag_path);
    if (p.is_relative() && !base_dir.empty()) {
      p = fs::path(base_dir) / p;
    }
    entry.bag_path = p.lexically_normal().string();
    if (check_paths && !fs::exists(entry.bag_path)) {
      throw FormatError("manifest: bag file missing for slide \"" +
                        entry.slide_id + "\": " + entry.bag_path);
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

DatasetManifest load_manifest(const std::string& path) {
  const std::vector<uint8_t> raw = read_file(path);
  const std::string text(raw.begin(), raw.end());
  const std::string base = fs::path(path).parent_path().string();
  return parse_manifest(text, base);
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  json doc = json::array();
  const fs::path base = fs::path(path).parent_path();
  for (const auto& e : manifest.entries) {
    // Store paths relative to the manifest when possible so the dataset
    // directory stays relocatable.
    fs::path p(e.bag_path);
    std::string stored = p.string();
    if (!base.empty()) {
      std::error_code ec;
      const fs::path rel = fs::relative(p, base, ec);
      if (!ec && !rel.empty() && rel.native()[0] != '.') {
        stored = rel.string();
      }
    }
    doc.push_back(json{{"slide_id", e.slide_id},
                       {"bag_path", stored},
                       {"label", static_cast<int>(e.label)},
                       {"split", split_name(e.split)}});
  }
  const std::string text = doc.dump(2) + "\n";
  write_file_atomic(path, std::vector<uint8_t>(text.begin(), text.end()));
}

}  // namespace pathomil
