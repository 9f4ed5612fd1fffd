#include "pathomil/abmil.hpp"

#include <cmath>
#include <string>

#include "pathomil/errors.hpp"

namespace pathomil {

namespace {

void xavier_fill(AffineParams& p, RngStream& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(p.in_dim() + p.out_dim()));
  for (double& w : p.weight.data) {
    w = (2.0 * rng.uniform01() - 1.0) * limit;
  }
}

}  // namespace

AbmilParams AbmilParams::init(const AbmilDims& dims, double dropout_rate,
                              RngStream& rng) {
  AbmilParams p;
  p.dims = dims;
  p.dropout_rate = dropout_rate;
  p.heads.resize(dims.n_heads);
  for (auto& head : p.heads) {
    head.feature = AffineParams(dims.head_hidden, dims.feat_dim);
    head.gate = AffineParams(dims.head_hidden, dims.feat_dim);
    head.score = AffineParams(dims.n_classes, dims.head_hidden);
  }
  p.bottleneck = AffineParams(dims.bottleneck_dim, dims.feat_dim);
  p.class_scorers.assign(dims.n_classes, AffineParams(1, dims.bottleneck_dim));

  for (auto& head : p.heads) {
    xavier_fill(head.feature, rng);
    xavier_fill(head.gate, rng);
    xavier_fill(head.score, rng);
  }
  xavier_fill(p.bottleneck, rng);
  // class_scorers stay zero: an untrained model scores every class 0.
  return p;
}

AbmilParams AbmilParams::zeros_like(const AbmilParams& other) {
  AbmilParams p;
  p.dims = other.dims;
  p.dropout_rate = other.dropout_rate;
  p.heads.resize(other.heads.size());
  for (size_t k = 0; k < p.heads.size(); ++k) {
    const auto& src = other.heads[k];
    p.heads[k].feature = AffineParams(src.feature.out_dim(), src.feature.in_dim());
    p.heads[k].gate = AffineParams(src.gate.out_dim(), src.gate.in_dim());
    p.heads[k].score = AffineParams(src.score.out_dim(), src.score.in_dim());
  }
  p.bottleneck =
      AffineParams(other.bottleneck.out_dim(), other.bottleneck.in_dim());
  p.class_scorers.assign(
      other.class_scorers.size(),
      AffineParams(other.class_scorers[0].out_dim(),
                   other.class_scorers[0].in_dim()));
  return p;
}

std::vector<ParamView> AbmilParams::views() {
  std::vector<ParamView> v;
  for (size_t k = 0; k < heads.size(); ++k) {
    std::string base = "heads." + std::to_string(k);
    v.push_back(view_of(base + ".feature.weight", heads[k].feature.weight));
    v.push_back(view_of(base + ".feature.bias", heads[k].feature.bias));
    v.push_back(view_of(base + ".gate.weight", heads[k].gate.weight));
    v.push_back(view_of(base + ".gate.bias", heads[k].gate.bias));
    v.push_back(view_of(base + ".score.weight", heads[k].score.weight));
    v.push_back(view_of(base + ".score.bias", heads[k].score.bias));
  }
  v.push_back(view_of("bottleneck.weight", bottleneck.weight));
  v.push_back(view_of("bottleneck.bias", bottleneck.bias));
  for (size_t c = 0; c < class_scorers.size(); ++c) {
    std::string base = "class_scorers." + std::to_string(c);
    v.push_back(view_of(base + ".weight", class_scorers[c].weight));
    v.push_back(view_of(base + ".bias", class_scorers[c].bias));
  }
  return v;
}

AbmilForward abmil_forward(const DenseMatrix& bag, const AbmilParams& p,
                           RunMode mode, RngStream& rng) {
  if (bag.rows == 0) {
    throw ContractError("abmil_forward: empty bag");
  }
  if (bag.cols != p.dims.feat_dim) {
    throw ContractError("abmil_forward: bag feature width " +
                        std::to_string(bag.cols) + " does not match model " +
                        std::to_string(p.dims.feat_dim));
  }
  const size_t n = bag.rows;
  const size_t n_classes = p.dims.n_classes;
  AbmilForward f;
  f.head_caches.resize(p.heads.size());

  // Head-averaged raw score per instance and class.
  f.raw_scores = DenseMatrix(n, n_classes);
  for (size_t k = 0; k < p.heads.size(); ++k) {
    DenseMatrix s = gated_attention_scores(bag, p.heads[k], &f.head_caches[k]);
    for (size_t i = 0; i < s.size(); ++i) {
      f.raw_scores.data[i] += s.data[i];
    }
  }
  const double inv_heads = 1.0 / static_cast<double>(p.heads.size());
  for (double& x : f.raw_scores.data) x *= inv_heads;

  // Per-class softmax over instances; pool the original features.
  f.attention = DenseMatrix(n_classes, n);
  f.bag_vectors = DenseMatrix(n_classes, bag.cols);
  std::vector<double> column(n);
  for (size_t c = 0; c < n_classes; ++c) {
    for (size_t i = 0; i < n; ++i) column[i] = f.raw_scores.at(i, c);
    std::vector<double> weights = softmax(column);
    double* bagv = f.bag_vectors.row(c);
    for (size_t i = 0; i < n; ++i) {
      f.attention.at(c, i) = weights[i];
      const double* row = bag.row(i);
      for (size_t j = 0; j < bag.cols; ++j) {
        bagv[j] += weights[i] * row[j];
      }
    }
  }

  // Shared bottleneck per class vector, then one scalar scorer per class.
  f.bottleneck_pre = affine_rows(f.bag_vectors, p.bottleneck);
  f.bottleneck_mask = DenseMatrix(n_classes, p.dims.bottleneck_dim);
  f.bottleneck_mask.data =
      dropout_mask(f.bottleneck_mask.size(), p.dropout_rate, mode, rng);
  f.bottleneck_out = DenseMatrix(n_classes, p.dims.bottleneck_dim);
  gelu_mask_apply(f.bottleneck_pre.data.data(), f.bottleneck_mask.data.data(),
                  f.bottleneck_out.data.data(), f.bottleneck_out.size());
  f.logits.resize(n_classes);
  for (size_t c = 0; c < n_classes; ++c) {
    const AffineParams& scorer = p.class_scorers[c];
    double z = scorer.bias[0];
    const double* w = scorer.weight.row(0);
    const double* x = f.bottleneck_out.row(c);
    for (size_t j = 0; j < p.dims.bottleneck_dim; ++j) {
      z += w[j] * x[j];
    }
    f.logits[c] = z;
  }
  return f;
}

AbmilBackwardResult abmil_backward(const DenseMatrix& bag,
                                   const AbmilParams& p,
                                   const AbmilForward& fwd, size_t bag_class,
                                   const std::vector<double>& class_weights) {
  const size_t n = bag.rows;
  const size_t n_classes = p.dims.n_classes;
  if (fwd.attention.cols != n) {
    throw ContractError("abmil_backward: cache does not match bag");
  }
  AbmilBackwardResult out;
  out.grads = AbmilParams::zeros_like(p);

  LossGrad lg = weighted_cross_entropy(fwd.logits, bag_class, class_weights);
  out.loss = lg.loss;

  // Scorers and bottleneck, one class row at a time.
  DenseMatrix d_bag_vectors(n_classes, bag.cols);
  DenseMatrix d_bn_pre(n_classes, p.dims.bottleneck_dim);
  for (size_t c = 0; c < n_classes; ++c) {
    const double dl = lg.grad_logits[c];
    const AffineParams& scorer = p.class_scorers[c];
    AffineParams& d_scorer = out.grads.class_scorers[c];
    const double* x = fwd.bottleneck_out.row(c);
    double* gw = d_scorer.weight.row(0);
    for (size_t j = 0; j < p.dims.bottleneck_dim; ++j) {
      gw[j] += dl * x[j];
    }
    d_scorer.bias[0] += dl;
    const double* w = scorer.weight.row(0);
    double* dpre = d_bn_pre.row(c);
    for (size_t j = 0; j < p.dims.bottleneck_dim; ++j) {
      dpre[j] = dl * w[j];
    }
  }
  gelu_mask_backward(fwd.bottleneck_pre.data.data(),
                     fwd.bottleneck_mask.data.data(), d_bn_pre.data.data(),
                     d_bn_pre.data.data(), d_bn_pre.size());
  add_matmul_tn(out.grads.bottleneck.weight, d_bn_pre, fwd.bag_vectors);
  for (size_t c = 0; c < n_classes; ++c) {
    const double* dpre = d_bn_pre.row(c);
    for (size_t j = 0; j < p.dims.bottleneck_dim; ++j) {
      out.grads.bottleneck.bias[j] += dpre[j];
    }
  }
  add_matmul(d_bag_vectors, d_bn_pre, p.bottleneck.weight);

  // Pooling and per-class softmax back to the head-averaged raw scores.
  DenseMatrix d_raw(n, n_classes);
  std::vector<double> weights(n), d_weights(n);
  for (size_t c = 0; c < n_classes; ++c) {
    const double* dbv = d_bag_vectors.row(c);
    for (size_t i = 0; i < n; ++i) {
      weights[i] = fwd.attention.at(c, i);
      const double* row = bag.row(i);
      double acc = 0.0;
      for (size_t j = 0; j < bag.cols; ++j) {
        acc += row[j] * dbv[j];
      }
      d_weights[i] = acc;
    }
    std::vector<double> d_col = softmax_backward(weights, d_weights);
    for (size_t i = 0; i < n; ++i) {
      d_raw.at(i, c) = d_col[i];
    }
  }

  // Heads share the averaged score gradient.
  const double inv_heads = 1.0 / static_cast<double>(p.heads.size());
  DenseMatrix d_scores = d_raw;
  for (double& x : d_scores.data) x *= inv_heads;
  for (size_t k = 0; k < p.heads.size(); ++k) {
    gated_attention_backward(bag, p.heads[k], fwd.head_caches[k], d_scores,
                             out.grads.heads[k], nullptr);
  }
  return out;
}

AbmilLossValue abmil_eval_loss(const DenseMatrix& bag, const AbmilParams& p,
                               size_t bag_class,
                               const std::vector<double>& class_weights) {
  RngStream unused(0);
  AbmilForward f = abmil_forward(bag, p, RunMode::kEval, unused);
  LossGrad lg = weighted_cross_entropy(f.logits, bag_class, class_weights);
  AbmilLossValue out;
  out.loss = lg.loss;
  out.logits = std::move(f.logits);
  return out;
}

}  // namespace pathomil
