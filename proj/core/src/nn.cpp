#include "pathomil/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "pathomil/errors.hpp"

namespace pathomil {

namespace {
constexpr double kLogClamp = 1e-12;
const double kGeluCoeff = std::sqrt(2.0 / std::numbers::pi);
}  // namespace

std::vector<double> affine(const std::vector<double>& x, const AffineParams& p) {
  if (x.size() != p.in_dim()) {
    throw ContractError("affine: input has " + std::to_string(x.size()) +
                        " entries, layer expects " + std::to_string(p.in_dim()));
  }
  std::vector<double> y = matvec(p.weight, x);
  for (size_t i = 0; i < y.size(); ++i) {
    y[i] += p.bias[i];
  }
  return y;
}

DenseMatrix affine_rows(const DenseMatrix& x, const AffineParams& p) {
  if (x.cols != p.in_dim()) {
    throw ContractError("affine_rows: input has " + std::to_string(x.cols) +
                        " columns, layer expects " + std::to_string(p.in_dim()));
  }
  DenseMatrix y = matmul_nt(x, p.weight);
  for (size_t r = 0; r < y.rows; ++r) {
    double* row = y.row(r);
    for (size_t c = 0; c < y.cols; ++c) {
      row[c] += p.bias[c];
    }
  }
  return y;
}

double gelu(double x) {
  double inner = kGeluCoeff * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_grad(double x) {
  double u = kGeluCoeff * (x + 0.044715 * x * x * x);
  double t = std::tanh(u);
  double du = kGeluCoeff * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

double gelu_exact(double x) {
  return x * 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
}

void gelu_inplace(DenseMatrix& m) {
  for (double& x : m.data) x = gelu(x);
}

void gelu_inplace(std::vector<double>& v) {
  for (double& x : v) x = gelu(x);
}

namespace {
using ArrMap = Eigen::Map<Eigen::ArrayXd>;
using CArrMap = Eigen::Map<const Eigen::ArrayXd>;

// tanh via exp so the whole pass stays on SIMD-friendly primitives:
// tanh(u) = 1 - 2/(exp(2u) + 1). Exact at both infinities, NaN-free, and
// within a couple of ulp of std::tanh everywhere.
Eigen::ArrayXd tanh_of(const Eigen::ArrayXd& u) {
  return 1.0 - 2.0 / ((2.0 * u).exp() + 1.0);
}
}  // namespace

void gelu_mask_apply(const double* pre, const double* mask, double* out,
                     size_t n) {
  if (n == 0) return;
  CArrMap x(pre, static_cast<Eigen::Index>(n));
  CArrMap m(mask, static_cast<Eigen::Index>(n));
  ArrMap o(out, static_cast<Eigen::Index>(n));
  Eigen::ArrayXd t = tanh_of(kGeluCoeff * (x + 0.044715 * x.cube()));
  o = 0.5 * x * (1.0 + t) * m;
}

void gelu_mask_backward(const double* pre, const double* mask,
                        const double* upstream, double* d_pre, size_t n) {
  if (n == 0) return;
  CArrMap x(pre, static_cast<Eigen::Index>(n));
  CArrMap m(mask, static_cast<Eigen::Index>(n));
  CArrMap up(upstream, static_cast<Eigen::Index>(n));
  ArrMap d(d_pre, static_cast<Eigen::Index>(n));
  Eigen::ArrayXd t = tanh_of(kGeluCoeff * (x + 0.044715 * x.cube()));
  Eigen::ArrayXd du = kGeluCoeff * (1.0 + 3.0 * 0.044715 * x.square());
  d = up * m * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t.square()) * du);
}

std::vector<double> softmax(const std::vector<double>& v) {
  if (v.empty()) {
    throw ContractError("softmax: empty input");
  }
  double mx = *std::max_element(v.begin(), v.end());
  std::vector<double> p(v.size());
  double sum = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    p[i] = std::exp(v[i] - mx);
    sum += p[i];
  }
  for (double& x : p) x /= sum;
  return p;
}

std::vector<double> dropout_mask(size_t size, double rate, RunMode mode,
                                 RngStream& rng) {
  if (rate >= 1.0) {
    throw ContractError("dropout: rate must be < 1");
  }
  std::vector<double> mask(size, 1.0);
  if (mode == RunMode::kEval || rate <= 0.0) {
    return mask;
  }
  double scale = 1.0 / (1.0 - rate);
  for (size_t i = 0; i < size; ++i) {
    mask[i] = (rng.uniform01() < rate) ? 0.0 : scale;
  }
  return mask;
}

std::vector<double> dropout(const std::vector<double>& v, double rate,
                            RunMode mode, RngStream& rng) {
  std::vector<double> mask = dropout_mask(v.size(), rate, mode, rng);
  std::vector<double> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = v[i] * mask[i];
  }
  return out;
}

SmoothedTarget smooth_labels(size_t class_index, double eps, size_t k) {
  if (k < 2) {
    throw ContractError("smooth_labels: need at least 2 classes");
  }
  if (class_index >= k) {
    throw ContractError("smooth_labels: class " + std::to_string(class_index) +
                        " out of range for K=" + std::to_string(k));
  }
  if (eps < 0.0 || eps >= 1.0) {
    throw ContractError("smooth_labels: eps must lie in [0, 1)");
  }
  SmoothedTarget t;
  t.distribution.assign(k, eps / static_cast<double>(k));
  t.distribution[class_index] += 1.0 - eps;
  return t;
}

LossGrad focal_loss(const std::vector<double>& logits,
                    const SmoothedTarget& target, size_t target_class,
                    const FocalLossConfig& cfg) {
  const size_t k = logits.size();
  if (target.distribution.size() != k) {
    throw ContractError("focal_loss: target/logit length mismatch");
  }
  if (target_class >= k) {
    throw ContractError("focal_loss: target class out of range");
  }
  if (cfg.alpha.size() != k) {
    throw ContractError("focal_loss: alpha length mismatch");
  }
  if (cfg.gamma < 0.0) {
    throw ContractError("focal_loss: gamma must be nonnegative");
  }

  std::vector<double> p = softmax(logits);
  const double alpha_t = cfg.alpha[target_class];
  const double pt = p[target_class];
  const double one_minus_pt = 1.0 - pt;

  // Cross-entropy against the smoothed target, with clamped logs. Classes
  // whose probability hit the clamp contribute a constant, so their log
  // term has zero derivative; `live[c]` records that.
  double ce = 0.0;
  std::vector<uint8_t> live(k, 1);
  for (size_t c = 0; c < k; ++c) {
    double pc = p[c];
    if (pc < kLogClamp) {
      pc = kLogClamp;
      live[c] = 0;
    }
    ce -= target.distribution[c] * std::log(pc);
  }

  const double focal_factor =
      (cfg.gamma == 0.0) ? 1.0 : std::pow(one_minus_pt, cfg.gamma);
  LossGrad out;
  out.loss = alpha_t * focal_factor * ce;
  out.grad_logits.assign(k, 0.0);

  // d ce / d z_k = sum_c y'_c (p_k - [c == k]) over live classes.
  double live_mass = 0.0;  // sum of y'_c over classes with live log terms
  for (size_t c = 0; c < k; ++c) {
    if (live[c]) live_mass += target.distribution[c];
  }

  // d focal_factor / d z_k = -gamma (1 - p_t)^(gamma-1) * p_t (delta_tk - p_k).
  double focal_prefix = 0.0;
  if (cfg.gamma > 0.0 && one_minus_pt > 0.0) {
    focal_prefix = cfg.gamma * std::pow(one_minus_pt, cfg.gamma - 1.0);
  }

  for (size_t c = 0; c < k; ++c) {
    double dce = live_mass * p[c] - (live[c] ? target.distribution[c] : 0.0);
    double delta = (c == target_class) ? 1.0 : 0.0;
    double dfactor = -focal_prefix * pt * (delta - p[c]);
    out.grad_logits[c] = alpha_t * (dfactor * ce + focal_factor * dce);
  }
  return out;
}

LossGrad weighted_cross_entropy(const std::vector<double>& logits,
                                size_t class_index,
                                const std::vector<double>& class_weights) {
  const size_t k = logits.size();
  if (class_index >= k) {
    throw ContractError("weighted_cross_entropy: class out of range");
  }
  if (class_weights.size() != k) {
    throw ContractError("weighted_cross_entropy: weight length mismatch");
  }
  for (double w : class_weights) {
    if (w <= 0.0) {
      throw ContractError("weighted_cross_entropy: weights must be positive");
    }
  }
  std::vector<double> p = softmax(logits);
  const double w = class_weights[class_index];
  const double py = p[class_index];
  LossGrad out;
  out.grad_logits.assign(k, 0.0);
  if (py < kLogClamp) {
    // Clamped: the loss is locally constant in the logits.
    out.loss = -w * std::log(kLogClamp);
    return out;
  }
  out.loss = -w * std::log(py);
  for (size_t c = 0; c < k; ++c) {
    double delta = (c == class_index) ? 1.0 : 0.0;
    out.grad_logits[c] = w * (p[c] - delta);
  }
  return out;
}

ParamView view_of(const std::string& name, DenseMatrix& m) {
  return ParamView{name, m.data.data(), m.rows, m.cols};
}

ParamView view_of(const std::string& name, std::vector<double>& v) {
  return ParamView{name, v.data(), v.size(), 1};
}

size_t total_size(const std::vector<ParamView>& views) {
  size_t n = 0;
  for (const auto& v : views) n += v.size();
  return n;
}

void adam_step(double* params, const double* grads, size_t n, AdamState& state,
               size_t epoch) {
  if (state.m.size() != n) {
    throw ContractError("adam_step: state sized for " +
                        std::to_string(state.m.size()) + " parameters, got " +
                        std::to_string(n));
  }
  const AdamHyper& h = state.hyper;
  double lr = h.base_lr;
  if (h.warmup_epochs > 0) {
    double ramp = static_cast<double>(epoch + 1) /
                  static_cast<double>(h.warmup_epochs);
    lr *= std::min(1.0, ramp);
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (size_t i = 0; i < n; ++i) {
    double g = grads[i] + h.weight_decay_l2 * params[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    double m_hat = state.m[i] / bc1;
    double v_hat = state.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + h.eps_num);
  }
}

void adam_step(const std::vector<ParamView>& params,
               const std::vector<ParamView>& grads, AdamState& state,
               size_t epoch) {
  if (params.size() != grads.size()) {
    throw ContractError("adam_step: parameter/gradient tensor count mismatch");
  }
  if (state.m.size() != total_size(params)) {
    throw ContractError("adam_step: state size does not match parameters");
  }
  // The flat state spans the concatenated views; carve it per tensor. The
  // epoch-scaled lr and bias correction must be identical across tensors,
  // so the step counter is bumped once and shared.
  const AdamHyper& h = state.hyper;
  double lr = h.base_lr;
  if (h.warmup_epochs > 0) {
    double ramp = static_cast<double>(epoch + 1) /
                  static_cast<double>(h.warmup_epochs);
    lr *= std::min(1.0, ramp);
  }
  state.step_count += 1;
  const double t = static_cast<double>(state.step_count);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  size_t offset = 0;
  for (size_t vi = 0; vi < params.size(); ++vi) {
    const ParamView& pv = params[vi];
    const ParamView& gv = grads[vi];
    if (pv.size() != gv.size()) {
      throw ContractError("adam_step: tensor " + pv.name +
                          " gradient shape mismatch");
    }
    for (size_t i = 0; i < pv.size(); ++i) {
      double g = gv.data[i] + h.weight_decay_l2 * pv.data[i];
      double& m = state.m[offset + i];
      double& v = state.v[offset + i];
      m = h.beta1 * m + (1.0 - h.beta1) * g;
      v = h.beta2 * v + (1.0 - h.beta2) * g * g;
      double m_hat = m / bc1;
      double v_hat = v / bc2;
      pv.data[i] -= lr * m_hat / (std::sqrt(v_hat) + h.eps_num);
    }
    offset += pv.size();
  }
}

std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h) {
  std::vector<double> grad(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    double fp = f(x);
    x[i] = orig - h;
    double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_grad: non-finite function value at "
                         "coordinate " + std::to_string(i));
    }
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

}  // namespace pathomil
