#include "pathomil/clam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pathomil/errors.hpp"

namespace pathomil {

namespace {

constexpr double kLogClamp = 1e-12;

// Xavier-uniform fill: w ~ U(-sqrt(6/(fan_in+fan_out)), +...), biases stay 0.
void xavier_fill(AffineParams& p, RngStream& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(p.in_dim() + p.out_dim()));
  for (double& w : p.weight.data) {
    w = (2.0 * rng.uniform01() - 1.0) * limit;
  }
}

void xavier_fill(GatedAttentionParams& p, RngStream& rng) {
  xavier_fill(p.feature, rng);
  xavier_fill(p.gate, rng);
  xavier_fill(p.score, rng);
}

}  // namespace

ClamSBParams ClamSBParams::init(const ClamDims& dims, double dropout_rate,
                                RngStream& rng) {
  ClamSBParams p;
  p.dims = dims;
  p.dropout_rate = dropout_rate;
  p.encoder = AffineParams(dims.encoder_dim, dims.feat_dim);
  p.attention.feature = AffineParams(dims.attention_hidden, dims.encoder_dim);
  p.attention.gate = AffineParams(dims.attention_hidden, dims.encoder_dim);
  p.attention.score = AffineParams(1, dims.attention_hidden);
  p.classifier_hidden = AffineParams(dims.classifier_hidden, dims.encoder_dim);
  p.classifier_out = AffineParams(dims.n_classes, dims.classifier_hidden);
  p.instance_heads.assign(dims.n_classes,
                          AffineParams(dims.instance_out, dims.encoder_dim));

  xavier_fill(p.encoder, rng);
  xavier_fill(p.attention, rng);
  xavier_fill(p.classifier_hidden, rng);
  // classifier_out stays zero: an untrained model scores every class 0.
  for (auto& head : p.instance_heads) {
    xavier_fill(head, rng);
  }
  return p;
}

ClamSBParams ClamSBParams::zeros_like(const ClamSBParams& other) {
  ClamSBParams p;
  p.dims = other.dims;
  p.dropout_rate = other.dropout_rate;
  p.encoder = AffineParams(other.encoder.out_dim(), other.encoder.in_dim());
  p.attention.feature = AffineParams(other.attention.feature.out_dim(),
                                     other.attention.feature.in_dim());
  p.attention.gate = AffineParams(other.attention.gate.out_dim(),
                                  other.attention.gate.in_dim());
  p.attention.score = AffineParams(other.attention.score.out_dim(),
                                   other.attention.score.in_dim());
  p.classifier_hidden = AffineParams(other.classifier_hidden.out_dim(),
                                     other.classifier_hidden.in_dim());
  p.classifier_out = AffineParams(other.classifier_out.out_dim(),
                                  other.classifier_out.in_dim());
  p.instance_heads.assign(
      other.instance_heads.size(),
      AffineParams(other.instance_heads[0].out_dim(),
                   other.instance_heads[0].in_dim()));
  return p;
}

std::vector<ParamView> ClamSBParams::views() {
  std::vector<ParamView> v;
  v.push_back(view_of("encoder.weight", encoder.weight));
  v.push_back(view_of("encoder.bias", encoder.bias));
  v.push_back(view_of("attention.feature.weight", attention.feature.weight));
  v.push_back(view_of("attention.feature.bias", attention.feature.bias));
  v.push_back(view_of("attention.gate.weight", attention.gate.weight));
  v.push_back(view_of("attention.gate.bias", attention.gate.bias));
  v.push_back(view_of("attention.score.weight", attention.score.weight));
  v.push_back(view_of("attention.score.bias", attention.score.bias));
  v.push_back(view_of("classifier_hidden.weight", classifier_hidden.weight));
  v.push_back(view_of("classifier_hidden.bias", classifier_hidden.bias));
  v.push_back(view_of("classifier_out.weight", classifier_out.weight));
  v.push_back(view_of("classifier_out.bias", classifier_out.bias));
  for (size_t i = 0; i < instance_heads.size(); ++i) {
    std::string base = "instance_heads." + std::to_string(i);
    v.push_back(view_of(base + ".weight", instance_heads[i].weight));
    v.push_back(view_of(base + ".bias", instance_heads[i].bias));
  }
  return v;
}

ClamForward clam_sb_forward(const DenseMatrix& bag, const ClamSBParams& p,
                            RunMode mode, RngStream& rng) {
  if (bag.rows == 0) {
    throw ContractError("clam_sb_forward: empty bag");
  }
  if (bag.cols != p.dims.feat_dim) {
    throw ContractError("clam_sb_forward: bag feature width " +
                        std::to_string(bag.cols) + " does not match model " +
                        std::to_string(p.dims.feat_dim));
  }
  ClamForward f;

  f.encoder_pre = affine_rows(bag, p.encoder);
  std::vector<double> mask1 =
      dropout_mask(f.encoder_pre.size(), p.dropout_rate, mode, rng);
  f.encoder_mask = DenseMatrix(f.encoder_pre.rows, f.encoder_pre.cols);
  f.encoder_mask.data = std::move(mask1);
  f.encoded = DenseMatrix(f.encoder_pre.rows, f.encoder_pre.cols);
  gelu_mask_apply(f.encoder_pre.data.data(), f.encoder_mask.data.data(),
                  f.encoded.data.data(), f.encoded.size());

  DenseMatrix scores =
      gated_attention_scores(f.encoded, p.attention, &f.attention_cache);
  f.raw_scores.assign(scores.data.begin(), scores.data.end());

  PoolResult pool = attention_pool(f.encoded, f.raw_scores);
  f.attention = std::move(pool.weights);
  f.pooled = std::move(pool.pooled);

  f.cls_pre = affine(f.pooled, p.classifier_hidden);
  f.cls_mask = dropout_mask(f.cls_pre.size(), p.dropout_rate, mode, rng);
  f.cls_hidden.resize(f.cls_pre.size());
  gelu_mask_apply(f.cls_pre.data(), f.cls_mask.data(), f.cls_hidden.data(),
                  f.cls_pre.size());
  f.logits = affine(f.cls_hidden, p.classifier_out);
  return f;
}

InstanceLossResult clam_instance_loss(const std::vector<double>& attention,
                                      const DenseMatrix& encoded,
                                      size_t bag_class, const ClamSBParams& p,
                                      size_t top_b) {
  const size_t n = encoded.rows;
  if (attention.size() != n) {
    throw ContractError("clam_instance_loss: attention/bag size mismatch");
  }
  if (bag_class >= p.instance_heads.size()) {
    throw ContractError("clam_instance_loss: bag class out of range");
  }
  InstanceLossResult out;
  out.head_grads = AffineParams(p.dims.instance_out, p.dims.encoder_dim);
  out.d_encoded = DenseMatrix(n, encoded.cols);
  const size_t b_eff = std::min(top_b, n / 2);
  if (n < 2 || b_eff == 0) {
    out.skipped = true;
    return out;
  }

  // Rank instances by attention; ties fall back to the instance index so
  // selection is deterministic.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    if (attention[a] != attention[b]) return attention[a] > attention[b];
    return a < b;
  });

  // (instance, pseudo-label): top block positive, bottom block negative.
  std::vector<std::pair<size_t, size_t>> selected;
  selected.reserve(2 * b_eff);
  for (size_t i = 0; i < b_eff; ++i) {
    selected.emplace_back(order[i], 1);
  }
  std::vector<size_t> bottom(n);
  std::iota(bottom.begin(), bottom.end(), 0);
  std::sort(bottom.begin(), bottom.end(), [&](size_t a, size_t b) {
    if (attention[a] != attention[b]) return attention[a] < attention[b];
    return a < b;
  });
  for (size_t i = 0; i < b_eff; ++i) {
    selected.emplace_back(bottom[i], 0);
  }

  const AffineParams& head = p.instance_heads[bag_class];
  const double inv_count = 1.0 / static_cast<double>(selected.size());
  std::vector<double> x(encoded.cols);
  for (const auto& [idx, label] : selected) {
    const double* row = encoded.row(idx);
    x.assign(row, row + encoded.cols);
    std::vector<double> z = affine(x, head);
    std::vector<double> prob = softmax(z);
    double py = std::max(prob[label], kLogClamp);
    out.loss += -std::log(py) * inv_count;
    if (prob[label] >= kLogClamp) {
      for (size_t c = 0; c < z.size(); ++c) {
        double dz = (prob[c] - (c == label ? 1.0 : 0.0)) * inv_count;
        out.head_grads.bias[c] += dz;
        double* gw = out.head_grads.weight.row(c);
        double* de = out.d_encoded.row(idx);
        const double* wrow = head.weight.row(c);
        for (size_t j = 0; j < encoded.cols; ++j) {
          gw[j] += dz * row[j];
          de[j] += dz * wrow[j];
        }
      }
    }
  }
  return out;
}

ClamBackwardResult clam_sb_backward(const DenseMatrix& bag,
                                    const ClamSBParams& p,
                                    const ClamForward& fwd, size_t bag_class,
                                    const ClamLossConfig& loss_cfg) {
  if (bag_class >= p.dims.n_classes) {
    throw ContractError("clam_sb_backward: bag class out of range");
  }
  if (fwd.encoded.rows != bag.rows) {
    throw ContractError("clam_sb_backward: cache does not match bag");
  }
  ClamBackwardResult out;
  out.grads = ClamSBParams::zeros_like(p);

  // Bag-level loss and its gradient at the logits.
  SmoothedTarget target = smooth_labels(bag_class, loss_cfg.focal.smoothing_eps,
                                        p.dims.n_classes);
  LossGrad bag_lg = focal_loss(fwd.logits, target, bag_class, loss_cfg.focal);
  out.bag_loss = bag_lg.loss;

  const double bw = loss_cfg.bag_weight;
  std::vector<double> d_logits(bag_lg.grad_logits.size());
  for (size_t i = 0; i < d_logits.size(); ++i) {
    d_logits[i] = bw * bag_lg.grad_logits[i];
  }

  // classifier_out: logits = Wo * cls_hidden + bo
  for (size_t r = 0; r < p.classifier_out.out_dim(); ++r) {
    out.grads.classifier_out.bias[r] += d_logits[r];
    double* gw = out.grads.classifier_out.weight.row(r);
    for (size_t c = 0; c < p.classifier_out.in_dim(); ++c) {
      gw[c] += d_logits[r] * fwd.cls_hidden[c];
    }
  }
  std::vector<double> d_hidden = matvec_t(p.classifier_out.weight, d_logits);

  // classifier dropout + GELU
  std::vector<double> d_cls_pre(d_hidden.size());
  gelu_mask_backward(fwd.cls_pre.data(), fwd.cls_mask.data(), d_hidden.data(),
                     d_cls_pre.data(), d_hidden.size());

  // classifier_hidden: cls_pre = Wh * pooled + bh
  for (size_t r = 0; r < p.classifier_hidden.out_dim(); ++r) {
    out.grads.classifier_hidden.bias[r] += d_cls_pre[r];
    double* gw = out.grads.classifier_hidden.weight.row(r);
    for (size_t c = 0; c < p.classifier_hidden.in_dim(); ++c) {
      gw[c] += d_cls_pre[r] * fwd.pooled[c];
    }
  }
  std::vector<double> d_pooled = matvec_t(p.classifier_hidden.weight, d_cls_pre);

  // pool: S = sum_i a_i encoded_i
  const size_t n = bag.rows;
  const size_t enc_dim = p.dims.encoder_dim;
  std::vector<double> d_attention(n, 0.0);
  DenseMatrix d_encoded(n, enc_dim);
  for (size_t i = 0; i < n; ++i) {
    const double* erow = fwd.encoded.row(i);
    double* drow = d_encoded.row(i);
    double acc = 0.0;
    for (size_t c = 0; c < enc_dim; ++c) {
      acc += erow[c] * d_pooled[c];
      drow[c] += fwd.attention[i] * d_pooled[c];
    }
    d_attention[i] = acc;
  }

  // softmax over raw scores
  std::vector<double> d_raw = softmax_backward(fwd.attention, d_attention);
  DenseMatrix d_scores(n, 1);
  for (size_t i = 0; i < n; ++i) d_scores.at(i, 0) = d_raw[i];
  gated_attention_backward(fwd.encoded, p.attention, fwd.attention_cache,
                           d_scores, out.grads.attention, &d_encoded);

  // Instance-clustering loss; selection depends on attention ranks only, so
  // its gradient flows through the encoded features and the chosen head.
  InstanceLossResult inst = clam_instance_loss(
      fwd.attention, fwd.encoded, bag_class, p, loss_cfg.top_b);
  out.instance_loss = inst.loss;
  const double iw = 1.0 - bw;
  if (!inst.skipped && iw != 0.0) {
    auto& head_grads = out.grads.instance_heads[bag_class];
    for (size_t i = 0; i < head_grads.weight.size(); ++i) {
      head_grads.weight.data[i] += iw * inst.head_grads.weight.data[i];
    }
    for (size_t i = 0; i < head_grads.bias.size(); ++i) {
      head_grads.bias[i] += iw * inst.head_grads.bias[i];
    }
    for (size_t i = 0; i < d_encoded.size(); ++i) {
      d_encoded.data[i] += iw * inst.d_encoded.data[i];
    }
  }

  // encoder dropout + GELU
  DenseMatrix d_enc_pre(n, enc_dim);
  gelu_mask_backward(fwd.encoder_pre.data.data(), fwd.encoder_mask.data.data(),
                     d_encoded.data.data(), d_enc_pre.data.data(),
                     d_enc_pre.size());

  // encoder: enc_pre = bag * We^T + be
  add_matmul_tn(out.grads.encoder.weight, d_enc_pre, bag);
  for (size_t r = 0; r < n; ++r) {
    const double* row = d_enc_pre.row(r);
    for (size_t c = 0; c < enc_dim; ++c) {
      out.grads.encoder.bias[c] += row[c];
    }
  }

  out.total_loss = bw * out.bag_loss + iw * out.instance_loss;
  return out;
}

ClamLossValue clam_sb_eval_loss(const DenseMatrix& bag, const ClamSBParams& p,
                                size_t bag_class,
                                const ClamLossConfig& loss_cfg) {
  RngStream unused(0);
  ClamForward f = clam_sb_forward(bag, p, RunMode::kEval, unused);
  SmoothedTarget target = smooth_labels(bag_class, loss_cfg.focal.smoothing_eps,
                                        p.dims.n_classes);
  LossGrad bag_lg = focal_loss(f.logits, target, bag_class, loss_cfg.focal);
  InstanceLossResult inst = clam_instance_loss(
      f.attention, f.encoded, bag_class, p, loss_cfg.top_b);
  ClamLossValue out;
  out.bag_loss = bag_lg.loss;
  out.instance_loss = inst.loss;
  out.total_loss = loss_cfg.bag_weight * bag_lg.loss +
                   (1.0 - loss_cfg.bag_weight) * inst.loss;
  out.logits = std::move(f.logits);
  return out;
}

}  // namespace pathomil
