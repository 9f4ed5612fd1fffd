#include "pathomil/models.hpp"

#include <algorithm>

#include "pathomil/errors.hpp"

namespace pathomil {

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kClamSB:
      return "clam-sb";
    case ModelKind::kAbmil:
      return "abmil";
  }
  return "unknown";
}

std::optional<ModelKind> model_kind_from_name(const std::string& name) {
  if (name == "clam-sb") return ModelKind::kClamSB;
  if (name == "abmil") return ModelKind::kAbmil;
  return std::nullopt;
}

ModelKind model_kind(const MilModel& model) {
  return std::holds_alternative<ClamSBParams>(model) ? ModelKind::kClamSB
                                                     : ModelKind::kAbmil;
}

size_t model_feat_dim(const MilModel& model) {
  if (const auto* clam = std::get_if<ClamSBParams>(&model)) {
    return clam->dims.feat_dim;
  }
  return std::get<AbmilParams>(model).dims.feat_dim;
}

size_t model_n_classes(const MilModel& model) {
  if (const auto* clam = std::get_if<ClamSBParams>(&model)) {
    return clam->dims.n_classes;
  }
  return std::get<AbmilParams>(model).dims.n_classes;
}

std::vector<double> mil_logits(const MilModel& model, const DenseMatrix& bag) {
  RngStream unused(0);
  if (const auto* clam = std::get_if<ClamSBParams>(&model)) {
    return clam_sb_forward(bag, *clam, RunMode::kEval, unused).logits;
  }
  const auto& abmil = std::get<AbmilParams>(model);
  return abmil_forward(bag, abmil, RunMode::kEval, unused).logits;
}

std::vector<double> extract_attention(const MilModel& model,
                                      const DenseMatrix& bag,
                                      std::optional<size_t> class_index) {
  RngStream unused(0);
  if (const auto* clam = std::get_if<ClamSBParams>(&model)) {
    return clam_sb_forward(bag, *clam, RunMode::kEval, unused).attention;
  }
  const auto& abmil = std::get<AbmilParams>(model);
  AbmilForward f = abmil_forward(bag, abmil, RunMode::kEval, unused);
  size_t c;
  if (class_index.has_value()) {
    c = *class_index;
    if (c >= abmil.dims.n_classes) {
      throw ContractError("extract_attention: class index out of range");
    }
  } else {
    c = static_cast<size_t>(
        std::max_element(f.logits.begin(), f.logits.end()) - f.logits.begin());
  }
  std::vector<double> row(f.attention.cols);
  for (size_t i = 0; i < row.size(); ++i) {
    row[i] = f.attention.at(c, i);
  }
  return row;
}

}  // namespace pathomil
