#pragma once

#include <cstdint>
#include <vector>

#include "pathomil/attention.hpp"
#include "pathomil/matrix.hpp"
#include "pathomil/nn.hpp"
#include "pathomil/rng.hpp"

namespace pathomil {

// Layer widths of the single-branch clustering-constrained attention model.
// Defaults give the full-size network; tests shrink them so exhaustive
// finite differencing stays cheap.
struct ClamDims {
  size_t feat_dim = 1024;
  size_t encoder_dim = 512;
  size_t attention_hidden = 384;
  size_t classifier_hidden = 256;
  size_t n_classes = 3;
  size_t instance_out = 2;  // binary pseudo-label head width
};

struct ClamSBParams {
  ClamDims dims;
  double dropout_rate = 0.4;

  AffineParams encoder;              // feat_dim -> encoder_dim
  GatedAttentionParams attention;    // encoder_dim -> attention_hidden -> 1
  AffineParams classifier_hidden;    // encoder_dim -> classifier_hidden
  AffineParams classifier_out;       // classifier_hidden -> n_classes
  std::vector<AffineParams> instance_heads;  // n_classes x (encoder_dim -> 2)

  // Xavier-uniform weights and zero biases from the given stream, except
  // classifier_out which starts at zero so an untrained model emits exactly
  // zero logits. Tensors are initialized in the same fixed order that
  // views() reports.
  static ClamSBParams init(const ClamDims& dims, double dropout_rate,
                           RngStream& rng);

  // Same shapes, all values zero: the gradient accumulator.
  static ClamSBParams zeros_like(const ClamSBParams& other);

  // Every parameter tensor in the canonical order used by the optimizer,
  // the gradient checker, and the model file format.
  std::vector<ParamView> views();
};

// Intermediate activations of one forward pass, kept for the backward pass.
struct ClamForward {
  DenseMatrix encoder_pre;       // n x encoder_dim, pre-activation
  DenseMatrix encoder_mask;      // n x encoder_dim, dropout mask (0 or scale)
  DenseMatrix encoded;           // n x encoder_dim, after activation+dropout
  GatedAttentionCache attention_cache;
  std::vector<double> raw_scores;   // n
  std::vector<double> attention;    // n, softmax weights
  std::vector<double> pooled;       // encoder_dim
  std::vector<double> cls_pre;      // classifier_hidden, pre-activation
  std::vector<double> cls_mask;     // classifier_hidden, dropout mask
  std::vector<double> cls_hidden;   // classifier_hidden, after act+dropout
  std::vector<double> logits;       // n_classes
};

// Full forward pass: encoder affine -> GELU -> dropout -> gated attention
// (1 score per instance) -> softmax pool -> two-layer classifier with GELU
// and dropout between. In train mode the RNG supplies the encoder mask
// first (row-major) and the classifier mask second.
ClamForward clam_sb_forward(const DenseMatrix& bag, const ClamSBParams& p,
                            RunMode mode, RngStream& rng);

// Auxiliary instance-clustering loss. The B' = min(top_b, n/2) most
// attended instances are pseudo-labeled positive (class 1), the B' least
// attended negative (class 0), and a 2-way cross-entropy is taken under
// the bag class's instance head, averaged over the 2B' rows. Ties are
// broken by instance index. Bags with fewer than 2 instances are skipped
// with zero loss.
struct InstanceLossResult {
  double loss = 0.0;
  bool skipped = false;
  DenseMatrix d_encoded;     // n x encoder_dim (unscaled)
  AffineParams head_grads;   // gradient of instance_heads[bag_class]
};

InstanceLossResult clam_instance_loss(const std::vector<double>& attention,
                                      const DenseMatrix& encoded,
                                      size_t bag_class, const ClamSBParams& p,
                                      size_t top_b);

struct ClamLossConfig {
  FocalLossConfig focal;
  double bag_weight = 0.5;
  size_t top_b = 8;
};

struct ClamBackwardResult {
  double total_loss = 0.0;
  double bag_loss = 0.0;
  double instance_loss = 0.0;
  ClamSBParams grads;
};

// Exact reverse-mode gradients of
//   total = bag_weight * focal(bag) + (1 - bag_weight) * instance loss
// through every parameter, using the cached activations of the matching
// forward call.
ClamBackwardResult clam_sb_backward(const DenseMatrix& bag,
                                    const ClamSBParams& p,
                                    const ClamForward& fwd, size_t bag_class,
                                    const ClamLossConfig& loss_cfg);

// Loss-only evaluation (eval-mode forward, no gradient work): used for
// validation scoring during training.
struct ClamLossValue {
  double total_loss = 0.0;
  double bag_loss = 0.0;
  double instance_loss = 0.0;
  std::vector<double> logits;
};

ClamLossValue clam_sb_eval_loss(const DenseMatrix& bag, const ClamSBParams& p,
                                size_t bag_class,
                                const ClamLossConfig& loss_cfg);

}  // namespace pathomil
