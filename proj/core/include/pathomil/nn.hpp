#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pathomil/matrix.hpp"
#include "pathomil/rng.hpp"

namespace pathomil {

// Whether stochastic layers (dropout) are active.
enum class RunMode { kTrain, kEval };

// Fully connected layer: y = weight * x + bias, weight is (out x in).
struct AffineParams {
  DenseMatrix weight;
  std::vector<double> bias;

  AffineParams() = default;
  AffineParams(size_t out, size_t in)
      : weight(out, in), bias(out, 0.0) {}

  size_t in_dim() const { return weight.cols; }
  size_t out_dim() const { return weight.rows; }
};

// y = W x + b.
std::vector<double> affine(const std::vector<double>& x, const AffineParams& p);

// Row-wise affine over a batch: Y = X W^T + 1 b^T (X is n x in, Y is n x out).
DenseMatrix affine_rows(const DenseMatrix& x, const AffineParams& p);

// Gaussian Error Linear Unit, tanh form:
//   gelu(x) = 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
// This form is normative for both forward and backward passes; the exact
// x * Phi(x) form agrees within 2e-3 on [-5, 5] and is kept as a test oracle.
double gelu(double x);
double gelu_grad(double x);
// Exact CDF form, used only to cross-check the tanh approximation.
double gelu_exact(double x);
void gelu_inplace(DenseMatrix& m);
void gelu_inplace(std::vector<double>& v);

// Bulk fused passes over contiguous buffers (all four spans must have the
// same length). These evaluate the same tanh-form GELU as gelu()/gelu_grad()
// but batched, so the hot paths avoid per-element libm calls.
//   out[i] = gelu(pre[i]) * mask[i]
void gelu_mask_apply(const double* pre, const double* mask, double* out,
                     size_t n);
//   d_pre[i] = upstream[i] * mask[i] * gelu_grad(pre[i])
void gelu_mask_backward(const double* pre, const double* mask,
                        const double* upstream, double* d_pre, size_t n);

// Numerically stable softmax (max subtraction). Throws on empty input.
std::vector<double> softmax(const std::vector<double>& v);

// Inverted-dropout mask: each entry is 0 with probability `rate`, else
// 1/(1-rate). Eval mode (or rate 0) yields all-ones. One uniform draw is
// consumed per entry, in order. rate must be < 1.
std::vector<double> dropout_mask(size_t size, double rate, RunMode mode,
                                 RngStream& rng);

// v scaled elementwise by a fresh dropout mask.
std::vector<double> dropout(const std::vector<double>& v, double rate,
                            RunMode mode, RngStream& rng);

// Soft target distribution: (1 - eps) * onehot + eps / K.
struct SmoothedTarget {
  std::vector<double> distribution;
};

SmoothedTarget smooth_labels(size_t class_index, double eps, size_t k);

// Class-imbalance loss configuration: per-class positive weights alpha,
// focusing exponent gamma, and the label-smoothing factor.
struct FocalLossConfig {
  std::vector<double> alpha{1.0, 3.0, 1.0};
  double gamma = 2.0;
  double smoothing_eps = 0.1;
};

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad_logits;
};

// Focal loss over softmax probabilities combined with a smoothed target:
//   loss = -alpha_t (1 - p_t)^gamma * sum_c y'_c log p_c,
// where p_t is the probability of the hard target class and y' is the
// smoothed distribution. Logs are clamped at 1e-12; the returned gradient
// is the exact analytic gradient of the clamped expression.
LossGrad focal_loss(const std::vector<double>& logits,
                    const SmoothedTarget& target, size_t target_class,
                    const FocalLossConfig& cfg);

// loss = -w_y log softmax(logits)[y], with the same log clamping.
LossGrad weighted_cross_entropy(const std::vector<double>& logits,
                                size_t class_index,
                                const std::vector<double>& class_weights);

// A named window onto one parameter tensor inside a model, used to drive
// the optimizer, the gradient checker, and serialization over every model
// uniformly and in one documented order.
struct ParamView {
  std::string name;
  double* data = nullptr;
  size_t rows = 0;
  size_t cols = 0;  // 1 for bias vectors

  size_t size() const { return rows * cols; }
};

ParamView view_of(const std::string& name, DenseMatrix& m);
ParamView view_of(const std::string& name, std::vector<double>& v);
size_t total_size(const std::vector<ParamView>& views);

struct AdamHyper {
  double base_lr = 3e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_num = 1e-8;
  double weight_decay_l2 = 1e-4;
  size_t warmup_epochs = 5;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  size_t step_count = 0;
  AdamHyper hyper;

  AdamState(size_t n_params, const AdamHyper& h)
      : m(n_params, 0.0), v(n_params, 0.0), hyper(h) {}
};

// One Adam update over a flat parameter span. The effective learning rate
// is base_lr * min(1, (epoch + 1) / warmup_epochs) (base_lr when warmup is
// 0); the L2 term adds weight_decay_l2 * theta to the gradient before the
// moment updates.
void adam_step(double* params, const double* grads, size_t n, AdamState& state,
               size_t epoch);

// Same update applied across a list of parameter tensors (grads must mirror
// params in order and shape); the AdamState spans their concatenation.
void adam_step(const std::vector<ParamView>& params,
               const std::vector<ParamView>& grads, AdamState& state,
               size_t epoch);

// Central finite differences (f(x + h e_i) - f(x - h e_i)) / 2h. Throws
// NumericError if f evaluates to a non-finite value.
std::vector<double> finite_diff_grad(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-5);

}  // namespace pathomil
