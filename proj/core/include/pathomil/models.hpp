#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "pathomil/abmil.hpp"
#include "pathomil/clam.hpp"

namespace pathomil {

enum class ModelKind { kClamSB, kAbmil };

const char* model_kind_name(ModelKind kind);
std::optional<ModelKind> model_kind_from_name(const std::string& name);

using MilModel = std::variant<ClamSBParams, AbmilParams>;

ModelKind model_kind(const MilModel& model);
size_t model_feat_dim(const MilModel& model);
size_t model_n_classes(const MilModel& model);

// Deterministic eval-mode logits for one bag.
std::vector<double> mil_logits(const MilModel& model, const DenseMatrix& bag);

// Attention weights over a bag's instances (sum to 1). The single-branch
// model has one attention vector and ignores `class_index`; the multi-head
// model returns the per-class row for `class_index`, defaulting to the
// predicted class.
std::vector<double> extract_attention(
    const MilModel& model, const DenseMatrix& bag,
    std::optional<size_t> class_index = std::nullopt);

}  // namespace pathomil
