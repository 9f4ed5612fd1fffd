#include "pathomil/attention.hpp"

#include <Eigen/Core>
#include <cmath>

#include "pathomil/errors.hpp"

namespace pathomil {

namespace {
using ArrMap = Eigen::Map<Eigen::ArrayXd>;
using CArrMap = Eigen::Map<const Eigen::ArrayXd>;

ArrMap arr(DenseMatrix& m) {
  return ArrMap(m.data.data(), static_cast<Eigen::Index>(m.size()));
}
CArrMap arr(const DenseMatrix& m) {
  return CArrMap(m.data.data(), static_cast<Eigen::Index>(m.size()));
}
}  // namespace

DenseMatrix gated_attention_scores(const DenseMatrix& h,
                                   const GatedAttentionParams& p) {
  return gated_attention_scores(h, p, nullptr);
}

DenseMatrix gated_attention_scores(const DenseMatrix& h,
                                   const GatedAttentionParams& p,
                                   GatedAttentionCache* cache) {
  if (h.rows == 0) {
    throw ContractError("gated_attention_scores: empty bag");
  }
  if (h.cols != p.in_dim()) {
    throw ContractError("gated_attention_scores: bag feature width " +
                        std::to_string(h.cols) + " does not match block input " +
                        std::to_string(p.in_dim()));
  }
  const DenseMatrix feature_pre = affine_rows(h, p.feature);
  const DenseMatrix gate_pre = affine_rows(h, p.gate);
  DenseMatrix tanh_vals(h.rows, p.hidden_dim());
  DenseMatrix sig_vals(h.rows, p.hidden_dim());
  DenseMatrix gated(h.rows, p.hidden_dim());
  // tanh via exp keeps the pass on SIMD-friendly primitives:
  // tanh(u) = 1 - 2/(exp(2u) + 1), exact at both infinities and NaN-free.
  // The exp expressions are evaluated into Eigen-allocated temporaries: an
  // aligned destination keeps the scalar/packet element split fixed, so the
  // values never depend on where the caller's buffers landed in memory.
  const Eigen::ArrayXd t = 1.0 - 2.0 / ((2.0 * arr(feature_pre)).exp() + 1.0);
  const Eigen::ArrayXd s = 1.0 / (1.0 + (-arr(gate_pre)).exp());
  arr(tanh_vals) = t;
  arr(sig_vals) = s;
  arr(gated) = t * s;
  DenseMatrix scores = affine_rows(gated, p.score);
  if (cache != nullptr) {
    cache->feature_pre = std::move(feature_pre);
    cache->gate_pre = std::move(gate_pre);
    cache->tanh_vals = std::move(tanh_vals);
    cache->sig_vals = std::move(sig_vals);
    cache->gated = std::move(gated);
  }
  return scores;
}

void gated_attention_backward(const DenseMatrix& h,
                              const GatedAttentionParams& p,
                              const GatedAttentionCache& cache,
                              const DenseMatrix& d_scores,
                              GatedAttentionParams& grads,
                              DenseMatrix* d_input) {
  // score = gated * Ws^T + bs
  add_matmul_tn(grads.score.weight, d_scores, cache.gated);
  for (size_t r = 0; r < d_scores.rows; ++r) {
    const double* row = d_scores.row(r);
    for (size_t c = 0; c < d_scores.cols; ++c) {
      grads.score.bias[c] += row[c];
    }
  }
  const DenseMatrix d_gated = matmul(d_scores, p.score.weight);

  // gated = tanh(feature_pre) .* sigmoid(gate_pre); the forward pass cached
  // both nonlinearity values, so no transcendentals are recomputed here.
  DenseMatrix d_feature_pre(d_gated.rows, d_gated.cols);
  DenseMatrix d_gate_pre(d_gated.rows, d_gated.cols);
  {
    CArrMap t = arr(cache.tanh_vals);
    CArrMap s = arr(cache.sig_vals);
    CArrMap dg = arr(d_gated);
    arr(d_feature_pre) = dg * s * (1.0 - t.square());
    arr(d_gate_pre) = dg * t * s * (1.0 - s);
  }

  add_matmul_tn(grads.feature.weight, d_feature_pre, h);
  add_matmul_tn(grads.gate.weight, d_gate_pre, h);
  for (size_t r = 0; r < d_feature_pre.rows; ++r) {
    for (size_t c = 0; c < d_feature_pre.cols; ++c) {
      grads.feature.bias[c] += d_feature_pre.at(r, c);
      grads.gate.bias[c] += d_gate_pre.at(r, c);
    }
  }
  if (d_input != nullptr) {
    add_matmul(*d_input, d_feature_pre, p.feature.weight);
    add_matmul(*d_input, d_gate_pre, p.gate.weight);
  }
}

PoolResult attention_pool(const DenseMatrix& h,
                          const std::vector<double>& raw_scores) {
  if (h.rows == 0) {
    throw ContractError("attention_pool: empty bag");
  }
  if (raw_scores.size() != h.rows) {
    throw ContractError("attention_pool: score count " +
                        std::to_string(raw_scores.size()) +
                        " does not match bag size " + std::to_string(h.rows));
  }
  PoolResult out;
  out.weights = softmax(raw_scores);
  out.pooled.assign(h.cols, 0.0);
  for (size_t i = 0; i < h.rows; ++i) {
    const double a = out.weights[i];
    const double* row = h.row(i);
    for (size_t c = 0; c < h.cols; ++c) {
      out.pooled[c] += a * row[c];
    }
  }
  return out;
}

std::vector<double> softmax_backward(const std::vector<double>& weights,
                                     const std::vector<double>& d_weights) {
  if (weights.size() != d_weights.size()) {
    throw ContractError("softmax_backward: size mismatch");
  }
  double dot = 0.0;
  for (size_t i = 0; i < weights.size(); ++i) {
    dot += weights[i] * d_weights[i];
  }
  std::vector<double> d_raw(weights.size());
  for (size_t i = 0; i < weights.size(); ++i) {
    d_raw[i] = weights[i] * (d_weights[i] - dot);
  }
  return d_raw;
}

}  // namespace pathomil
