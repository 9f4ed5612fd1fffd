#pragma once

#include <vector>

#include "pathomil/matrix.hpp"
#include "pathomil/nn.hpp"

namespace pathomil {

// Gated attention block: a tanh feature branch modulated elementwise by a
// sigmoid gate, followed by a linear scoring map.
//   g_i = tanh(W_f h_i + b_f) .* sigmoid(W_g h_i + b_g)
//   score_i = W_s g_i + b_s
struct GatedAttentionParams {
  AffineParams feature;  // hidden x in, tanh branch
  AffineParams gate;     // hidden x in, sigmoid branch
  AffineParams score;    // score_out x hidden

  size_t in_dim() const { return feature.in_dim(); }
  size_t hidden_dim() const { return feature.out_dim(); }
  size_t score_dim() const { return score.out_dim(); }
};

// Per-instance raw attention scores for a bag H (n x in); returns n x
// score_out. Scores are raw (pre-softmax).
DenseMatrix gated_attention_scores(const DenseMatrix& h,
                                   const GatedAttentionParams& p);

// Intermediate activations needed by the backward pass. The nonlinearity
// values are stored so the backward pass reuses them instead of recomputing
// the transcendentals.
struct GatedAttentionCache {
  DenseMatrix feature_pre;  // n x hidden, pre-tanh
  DenseMatrix gate_pre;     // n x hidden, pre-sigmoid
  DenseMatrix tanh_vals;    // n x hidden, tanh(feature_pre)
  DenseMatrix sig_vals;     // n x hidden, sigmoid(gate_pre)
  DenseMatrix gated;        // n x hidden, tanh .* sigmoid
};

DenseMatrix gated_attention_scores(const DenseMatrix& h,
                                   const GatedAttentionParams& p,
                                   GatedAttentionCache* cache);

// Backward through the block: given d(scores) (n x score_out), accumulates
// parameter gradients into `grads` and, when non-null, adds the gradient
// with respect to the input bag into `d_input` (n x in).
void gated_attention_backward(const DenseMatrix& h,
                              const GatedAttentionParams& p,
                              const GatedAttentionCache& cache,
                              const DenseMatrix& d_scores,
                              GatedAttentionParams& grads,
                              DenseMatrix* d_input);

// Softmax the raw scores over instances and pool: S = sum_i a_i h_i.
struct PoolResult {
  std::vector<double> weights;  // n, sums to 1
  std::vector<double> pooled;   // d
};

PoolResult attention_pool(const DenseMatrix& h,
                          const std::vector<double>& raw_scores);

// Backward through softmax given d(weights): returns d(raw_scores).
std::vector<double> softmax_backward(const std::vector<double>& weights,
                                     const std::vector<double>& d_weights);

}  // namespace pathomil
