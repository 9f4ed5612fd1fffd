#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathomil/models.hpp"

namespace pathomil {

// Model container format "PMD1": 4-byte magic "PMD1", u32 little-endian
// JSON-header length, the JSON header (model kind, layer widths,
// hyperparameters, training seed, and the parameter table with shapes in
// order), then each parameter tensor as little-endian 32-bit floats in the
// header-declared order.
std::vector<uint8_t> serialize_model(const MilModel& model, uint64_t seed);
MilModel deserialize_model(const std::vector<uint8_t>& bytes,
                           uint64_t* seed_out = nullptr);

void save_model(const MilModel& model, uint64_t seed, const std::string& path);
MilModel load_model(const std::string& path, uint64_t* seed_out = nullptr);

}  // namespace pathomil
