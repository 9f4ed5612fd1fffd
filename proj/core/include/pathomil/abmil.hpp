#pragma once

#include <cstdint>
#include <vector>

#include "pathomil/attention.hpp"
#include "pathomil/matrix.hpp"
#include "pathomil/nn.hpp"
#include "pathomil/rng.hpp"

namespace pathomil {

// Layer widths of the gated multi-head attention model. Defaults give the
// full-size network; the attention space defaults to 256 with the head
// count and widths configurable.
struct AbmilDims {
  size_t feat_dim = 768;
  size_t n_heads = 8;
  size_t head_hidden = 256;
  size_t bottleneck_dim = 512;
  size_t n_classes = 3;
};

struct AbmilParams {
  AbmilDims dims;
  double dropout_rate = 0.4;

  // Each head maps instances to one raw score per class.
  std::vector<GatedAttentionParams> heads;  // feat -> head_hidden -> n_classes
  AffineParams bottleneck;                  // feat -> bottleneck_dim
  std::vector<AffineParams> class_scorers;  // n_classes x (bottleneck -> 1)

  // Xavier-uniform weights and zero biases, except the class scorers which
  // start at zero so an untrained model emits exactly zero logits. Tensors
  // are initialized in the same fixed order that views() reports.
  static AbmilParams init(const AbmilDims& dims, double dropout_rate,
                          RngStream& rng);
  static AbmilParams zeros_like(const AbmilParams& other);
  std::vector<ParamView> views();
};

struct AbmilForward {
  std::vector<GatedAttentionCache> head_caches;  // one per head
  DenseMatrix raw_scores;     // n x n_classes, head-averaged
  DenseMatrix attention;      // n_classes x n, each row softmaxed over instances
  DenseMatrix bag_vectors;    // n_classes x feat_dim, attention-pooled inputs
  DenseMatrix bottleneck_pre;   // n_classes x bottleneck_dim
  DenseMatrix bottleneck_mask;  // n_classes x bottleneck_dim
  DenseMatrix bottleneck_out;   // n_classes x bottleneck_dim
  std::vector<double> logits;   // n_classes
};

// Forward pass: per head, gated attention produces one raw score per class
// and instance; scores are averaged across heads; each class's scores are
// softmaxed over instances into a per-class attention row; each row pools
// the ORIGINAL instance features into a class bag vector; a shared
// bottleneck (affine -> GELU -> dropout) transforms each bag vector; one
// scalar scorer per class yields the logits. In train mode the RNG supplies
// the three bottleneck masks in class order.
AbmilForward abmil_forward(const DenseMatrix& bag, const AbmilParams& p,
                           RunMode mode, RngStream& rng);

struct AbmilBackwardResult {
  double loss = 0.0;
  AbmilParams grads;
};

// Exact reverse-mode gradients of the weighted cross-entropy loss through
// every parameter.
AbmilBackwardResult abmil_backward(const DenseMatrix& bag,
                                   const AbmilParams& p,
                                   const AbmilForward& fwd, size_t bag_class,
                                   const std::vector<double>& class_weights);

// Loss-only evaluation used for validation scoring.
struct AbmilLossValue {
  double loss = 0.0;
  std::vector<double> logits;
};

AbmilLossValue abmil_eval_loss(const DenseMatrix& bag, const AbmilParams& p,
                               size_t bag_class,
                               const std::vector<double>& class_weights);

}  // namespace pathomil
