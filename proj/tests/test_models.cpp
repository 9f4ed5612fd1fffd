// Attention-MIL model tests: the gated attention block, both model heads,
// exact backward passes cross-checked against central finite differences,
// and the PMD1 model container round trip.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "pathomil/abmil.hpp"
#include "pathomil/attention.hpp"
#include "pathomil/clam.hpp"
#include "pathomil/errors.hpp"
#include "pathomil/matrix.hpp"
#include "pathomil/model_io.hpp"
#include "pathomil/models.hpp"
#include "pathomil/nn.hpp"
#include "pathomil/rng.hpp"

using namespace pathomil;

namespace {

DenseMatrix random_matrix(size_t r, size_t c, RngStream& rng,
                          double scale = 1.0) {
  DenseMatrix m(r, c);
  for (double& v : m.data) v = rng.gaussian() * scale;
  return m;
}

std::vector<double> flatten(std::vector<ParamView> views) {
  std::vector<double> flat;
  for (const ParamView& v : views) {
    flat.insert(flat.end(), v.data, v.data + v.size());
  }
  return flat;
}

void unflatten(const std::vector<double>& flat, std::vector<ParamView> views) {
  size_t pos = 0;
  for (ParamView& v : views) {
    std::copy(flat.begin() + pos, flat.begin() + pos + v.size(), v.data);
    pos += v.size();
  }
  REQUIRE(pos == flat.size());
}

// Largest relative error between an analytic gradient and its finite
// difference, using max(1,|a|,|b|) in the denominator so near-zero entries
// compare absolutely.
double max_rel_err(const std::vector<double>& analytic,
                   const std::vector<double>& fd) {
  REQUIRE(analytic.size() == fd.size());
  double worst = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({1.0, std::abs(analytic[i]), std::abs(fd[i])});
    worst = std::max(worst, std::abs(analytic[i] - fd[i]) / denom);
  }
  return worst;
}

ClamDims small_clam_dims(size_t feat) {
  ClamDims d;
  d.feat_dim = feat;
  d.encoder_dim = 6;
  d.attention_hidden = 4;
  d.classifier_hidden = 5;
  d.n_classes = 3;
  d.instance_out = 2;
  return d;
}

AbmilDims small_abmil_dims(size_t feat) {
  AbmilDims d;
  d.feat_dim = feat;
  d.n_heads = 2;
  d.head_hidden = 4;
  d.bottleneck_dim = 5;
  d.n_classes = 3;
  return d;
}

}  // namespace

// ---------------------------------------------------------------------------
// gated attention block

TEST_CASE("gated attention with zero gate branch halves the tanh branch") {
  RngStream rng(21);
  GatedAttentionParams p;
  p.feature = AffineParams(3, 4);
  p.gate = AffineParams(3, 4);  // zero weights, zero bias -> sigmoid(0) = 0.5
  p.score = AffineParams(2, 3);
  for (double& v : p.feature.weight.data) v = rng.gaussian();
  for (double& v : p.score.weight.data) v = rng.gaussian();
  p.score.bias = {0.1, -0.2};

  const DenseMatrix h = random_matrix(5, 4, rng);
  const DenseMatrix scores = gated_attention_scores(h, p);
  for (size_t i = 0; i < 5; ++i) {
    std::vector<double> hi(h.row(i), h.row(i) + 4);
    std::vector<double> t = affine(hi, p.feature);
    for (double& v : t) v = 0.5 * std::tanh(v);
    const std::vector<double> expect = affine(t, p.score);
    for (size_t j = 0; j < 2; ++j) {
      CHECK(scores.at(i, j) == doctest::Approx(expect[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("gated attention with zero feature branch emits the score bias") {
  RngStream rng(22);
  GatedAttentionParams p;
  p.feature = AffineParams(3, 4);  // zero -> tanh(0) = 0, so gated vector is 0
  p.gate = AffineParams(3, 4);
  for (double& v : p.gate.weight.data) v = rng.gaussian();
  p.score = AffineParams(1, 3);
  for (double& v : p.score.weight.data) v = rng.gaussian();
  p.score.bias = {0.7};

  const DenseMatrix h = random_matrix(6, 4, rng);
  const DenseMatrix scores = gated_attention_scores(h, p);
  for (size_t i = 0; i < 6; ++i) {
    CHECK(scores.at(i, 0) == doctest::Approx(0.7).epsilon(1e-14));
  }
}

TEST_CASE("gated attention matches an independent dense evaluation") {
  RngStream rng(23);
  GatedAttentionParams p;
  p.feature = AffineParams(2, 3);
  p.gate = AffineParams(2, 3);
  p.score = AffineParams(1, 2);
  for (double& v : p.feature.weight.data) v = rng.gaussian();
  for (double& v : p.gate.weight.data) v = rng.gaussian();
  for (double& v : p.score.weight.data) v = rng.gaussian();
  p.feature.bias = {0.1, -0.3};
  p.gate.bias = {0.2, 0.4};
  p.score.bias = {-0.05};

  const DenseMatrix h = random_matrix(2, 3, rng);
  const DenseMatrix scores = gated_attention_scores(h, p);
  for (size_t i = 0; i < 2; ++i) {
    for (size_t j = 0; j < 1; ++j) {
      double acc = p.score.bias[j];
      for (size_t k = 0; k < 2; ++k) {
        double ft = p.feature.bias[k];
        double gt = p.gate.bias[k];
        for (size_t c = 0; c < 3; ++c) {
          ft += p.feature.weight.at(k, c) * h.at(i, c);
          gt += p.gate.weight.at(k, c) * h.at(i, c);
        }
        acc += p.score.weight.at(j, k) * std::tanh(ft) *
               (1.0 / (1.0 + std::exp(-gt)));
      }
      CHECK(scores.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("gated attention backward matches finite differences") {
  RngStream rng(24);
  GatedAttentionParams p;
  p.feature = AffineParams(3, 4);
  p.gate = AffineParams(3, 4);
  p.score = AffineParams(2, 3);
  for (double& v : p.feature.weight.data) v = rng.gaussian() * 0.5;
  for (double& v : p.gate.weight.data) v = rng.gaussian() * 0.5;
  for (double& v : p.score.weight.data) v = rng.gaussian() * 0.5;
  for (double& v : p.feature.bias) v = rng.gaussian() * 0.1;
  for (double& v : p.gate.bias) v = rng.gaussian() * 0.1;
  for (double& v : p.score.bias) v = rng.gaussian() * 0.1;

  const DenseMatrix h = random_matrix(4, 4, rng);
  const DenseMatrix d_scores = random_matrix(4, 2, rng);

  // Scalar objective: sum of d_scores .* scores.
  auto objective = [&](const GatedAttentionParams& q, const DenseMatrix& hh) {
    const DenseMatrix s = gated_attention_scores(hh, q);
    double acc = 0.0;
    for (size_t i = 0; i < s.data.size(); ++i) acc += s.data[i] * d_scores.data[i];
    return acc;
  };

  GatedAttentionCache cache;
  (void)gated_attention_scores(h, p, &cache);
  GatedAttentionParams grads;
  grads.feature = AffineParams(3, 4);
  grads.gate = AffineParams(3, 4);
  grads.score = AffineParams(2, 3);
  DenseMatrix d_input(4, 4);
  gated_attention_backward(h, p, cache, d_scores, grads, &d_input);

  // Parameter gradients, tensor by tensor.
  struct TensorRef {
    double* data;
    size_t n;
    double* grad;
  };
  std::vector<TensorRef> tensors{
      {p.feature.weight.data.data(), 12, grads.feature.weight.data.data()},
      {p.feature.bias.data(), 3, grads.feature.bias.data()},
      {p.gate.weight.data.data(), 12, grads.gate.weight.data.data()},
      {p.gate.bias.data(), 3, grads.gate.bias.data()},
      {p.score.weight.data.data(), 6, grads.score.weight.data.data()},
      {p.score.bias.data(), 2, grads.score.bias.data()},
  };
  for (const TensorRef& t : tensors) {
    std::vector<double> x(t.data, t.data + t.n);
    const std::vector<double> fd = finite_diff_grad(
        [&](const std::vector<double>& xs) {
          std::copy(xs.begin(), xs.end(), t.data);
          const double val = objective(p, h);
          std::copy(x.begin(), x.end(), t.data);
          return val;
        },
        x);
    const std::vector<double> analytic(t.grad, t.grad + t.n);
    CHECK(max_rel_err(analytic, fd) < 1e-6);
  }

  // Input gradient.
  std::vector<double> hx = h.data;
  const std::vector<double> fd_in = finite_diff_grad(
      [&](const std::vector<double>& xs) {
        DenseMatrix hh = h;
        hh.data = xs;
        return objective(p, hh);
      },
      hx);
  CHECK(max_rel_err(d_input.data, fd_in) < 1e-6);
}

TEST_CASE("attention_pool closed forms") {
  RngStream rng(25);
  const DenseMatrix h1 = random_matrix(1, 3, rng);
  const PoolResult single = attention_pool(h1, {0.37});
  CHECK(single.weights[0] == doctest::Approx(1.0).epsilon(1e-14));
  for (size_t j = 0; j < 3; ++j) {
    CHECK(single.pooled[j] == doctest::Approx(h1.at(0, j)).epsilon(1e-14));
  }

  const DenseMatrix h2 = random_matrix(2, 3, rng);
  const PoolResult equal = attention_pool(h2, {1.2, 1.2});
  for (size_t j = 0; j < 3; ++j) {
    CHECK(equal.pooled[j] ==
          doctest::Approx((h2.at(0, j) + h2.at(1, j)) / 2).epsilon(1e-13));
  }

  const PoolResult twothirds = attention_pool(h2, {std::log(2.0), 0.0});
  CHECK(twothirds.weights[0] == doctest::Approx(2.0 / 3).epsilon(1e-13));
  CHECK(twothirds.weights[1] == doctest::Approx(1.0 / 3).epsilon(1e-13));
  for (size_t j = 0; j < 3; ++j) {
    CHECK(twothirds.pooled[j] ==
          doctest::Approx((2 * h2.at(0, j) + h2.at(1, j)) / 3).epsilon(1e-12));
  }

  // Shift invariance of the weights.
  const PoolResult shifted = attention_pool(h2, {std::log(2.0) + 5, 5.0});
  CHECK(shifted.weights[0] ==
        doctest::Approx(twothirds.weights[0]).epsilon(1e-13));

  CHECK_THROWS_AS((void)attention_pool(DenseMatrix(), {}), ContractError);
}

// ---------------------------------------------------------------------------
// CLAM-SB

TEST_CASE("clam untrained logits are exactly zero") {
  RngStream rng(31);
  const ClamDims dims = small_clam_dims(7);
  ClamSBParams p = ClamSBParams::init(dims, 0.0, rng);
  const DenseMatrix bag = random_matrix(5, 7, rng);
  RngStream fwd_rng(1);
  const ClamForward fwd = clam_sb_forward(bag, p, RunMode::kEval, fwd_rng);
  for (double logit : fwd.logits) CHECK(logit == 0.0);
}

TEST_CASE("clam attention is uniform over identical instances") {
  RngStream rng(32);
  const ClamDims dims = small_clam_dims(7);
  ClamSBParams p = ClamSBParams::init(dims, 0.0, rng);
  DenseMatrix bag(6, 7);
  for (size_t i = 0; i < 6; ++i) {
    for (size_t j = 0; j < 7; ++j) bag.at(i, j) = 0.3 * (j + 1);
  }
  RngStream fwd_rng(1);
  const ClamForward fwd = clam_sb_forward(bag, p, RunMode::kEval, fwd_rng);
  for (double a : fwd.attention) {
    CHECK(a == doctest::Approx(1.0 / 6).epsilon(1e-12));
  }
}

TEST_CASE("clam attention permutes with the bag and pool is invariant") {
  RngStream rng(33);
  const ClamDims dims = small_clam_dims(6);
  ClamSBParams p = ClamSBParams::init(dims, 0.0, rng);
  const DenseMatrix bag = random_matrix(5, 6, rng);
  DenseMatrix reversed(5, 6);
  for (size_t i = 0; i < 5; ++i) {
    for (size_t j = 0; j < 6; ++j) reversed.at(i, j) = bag.at(4 - i, j);
  }
  RngStream r1(1), r2(1);
  const ClamForward f1 = clam_sb_forward(bag, p, RunMode::kEval, r1);
  const ClamForward f2 = clam_sb_forward(reversed, p, RunMode::kEval, r2);
  double sum = 0.0;
  for (size_t i = 0; i < 5; ++i) {
    CHECK(f1.attention[i] == doctest::Approx(f2.attention[4 - i]).epsilon(1e-12));
    sum += f1.attention[i];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  for (size_t c = 0; c < 3; ++c) {
    CHECK(f1.logits[c] == doctest::Approx(f2.logits[c]).epsilon(1e-10));
  }
}

TEST_CASE("clam instance loss pseudo-labels 2*min(B, n/2) instances") {
  RngStream rng(34);
  const ClamDims dims = small_clam_dims(6);
  ClamSBParams p = ClamSBParams::init(dims, 0.0, rng);

  auto nonzero_rows = [](const DenseMatrix& m) {
    size_t count = 0;
    for (size_t i = 0; i < m.rows; ++i) {
      double norm = 0.0;
      for (size_t j = 0; j < m.cols; ++j) norm += std::abs(m.at(i, j));
      if (norm > 0.0) ++count;
    }
    return count;
  };

  // n=20, B=8 -> exactly 16 instances receive gradients.
  {
    const DenseMatrix encoded = random_matrix(20, dims.encoder_dim, rng);
    std::vector<double> attention(20);
    for (double& a : attention) a = rng.uniform01();
    const InstanceLossResult r =
        clam_instance_loss(attention, encoded, 0, p, 8);
    CHECK(!r.skipped);
    CHECK(nonzero_rows(r.d_encoded) == 16);
  }

  // n=10, B=8 -> B' = 5 -> 10 instances.
  {
    const DenseMatrix encoded = random_matrix(10, dims.encoder_dim, rng);
    std::vector<double> attention(10);
    for (double& a : attention) a = rng.uniform01();
    const InstanceLossResult r =
        clam_instance_loss(attention, encoded, 1, p, 8);
    CHECK(!r.skipped);
    CHECK(nonzero_rows(r.d_encoded) == 10);
  }

  // n=1 -> skipped with zero loss.
  {
    const DenseMatrix encoded = random_matrix(1, dims.encoder_dim, rng);
    const InstanceLossResult r =
        clam_instance_loss({1.0}, encoded, 0, p, 8);
    CHECK(r.skipped);
    CHECK(r.loss == 0.0);
  }
}

TEST_CASE("clam instance loss vanishes under a saturated instance head") {
  RngStream rng(35);
  ClamDims dims = small_clam_dims(6);
  ClamSBParams p = ClamSBParams::init(dims, 0.0, rng);

  // Build encodings whose head outputs a +50 margin for the correct
  // pseudo-label: head weight row differences aligned with attention order.
  DenseMatrix encoded(8, dims.encoder_dim);
  std::vector<double> attention(8);
  for (size_t i = 0; i < 8; ++i) {
    attention[i] = static_cast<double>(i);  // top half = indices 4..7
    for (size_t j = 0; j < dims.encoder_dim; ++j) encoded.at(i, j) = 0.0;
    encoded.at(i, 0) = (i >= 4) ? 1.0 : -1.0;
  }
  AffineParams& head = p.instance_heads[2];
  for (double& v : head.weight.data) v = 0.0;
  head.weight.at(0, 0) = -25.0;  // class-0 (negative) logit
  head.weight.at(1, 0) = 25.0;   // class-1 (positive) logit
  head.bias = {0.0, 0.0};
  // Positive rows (encoded +1) get logits (-25, +25): +50 margin for label 1;
  // negative rows get (+25, -25): +50 margin for label 0.
  const InstanceLossResult r = clam_instance_loss(attention, encoded, 2, p, 4);
  CHECK(!r.skipped);
  CHECK(r.loss < 1e-10);
}

TEST_CASE("clam total loss composition and bag_weight extremes") {
  RngStream rng(36);
  const ClamDims dims = small_clam_dims(6);
  ClamSBParams p = ClamSBParams::init(dims, 0.3, rng);
  const DenseMatrix bag = random_matrix(7, 6, rng);

  ClamLossConfig cfg;
  cfg.top_b = 3;
  cfg.bag_weight = 0.5;
  RngStream fr(5);
  const ClamForward fwd = clam_sb_forward(bag, p, RunMode::kTrain, fr);
  const ClamBackwardResult bwd = clam_sb_backward(bag, p, fwd, 1, cfg);
  CHECK(bwd.total_loss ==
        doctest::Approx(0.5 * bwd.bag_loss + 0.5 * bwd.instance_loss)
            .epsilon(1e-14));
  CHECK(std::abs(bwd.total_loss -
                 (bwd.bag_loss + bwd.instance_loss) / 2.0) < 1e-12);

  // bag_weight = 1: instance heads receive no gradient.
  ClamLossConfig bag_only = cfg;
  bag_only.bag_weight = 1.0;
  RngStream fr2(5);
  const ClamForward fwd2 = clam_sb_forward(bag, p, RunMode::kTrain, fr2);
  const ClamBackwardResult b2 = clam_sb_backward(bag, p, fwd2, 1, bag_only);
  for (const AffineParams& head : b2.grads.instance_heads) {
    for (double g : head.weight.data) CHECK(g == 0.0);
    for (double g : head.bias) CHECK(g == 0.0);
  }
}

TEST_CASE("clam gradient vanishes at a saturated correct prediction") {
  RngStream rng(37);
  const ClamDims dims = small_clam_dims(6);
  ClamSBParams p = ClamSBParams::init(dims, 0.0, rng);
  // classifier_out starts zero, so logits equal its bias exactly.
  p.classifier_out.bias = {50.0, -50.0, -50.0};

  ClamLossConfig cfg;
  cfg.bag_weight = 1.0;  // silence the instance branch
  cfg.focal.alpha = {1, 1, 1};
  cfg.focal.gamma = 2.0;
  cfg.focal.smoothing_eps = 0.0;

  const DenseMatrix bag = random_matrix(6, 6, rng);
  RngStream fr(1);
  const ClamForward fwd = clam_sb_forward(bag, p, RunMode::kEval, fr);
  ClamSBParams params_copy = p;
  const ClamBackwardResult bwd = clam_sb_backward(bag, p, fwd, 0, cfg);
  CHECK(bwd.total_loss < 1e-10);
  double norm = 0.0;
  ClamSBParams grads = bwd.grads;
  for (const ParamView& v : grads.views()) {
    for (size_t i = 0; i < v.size(); ++i) norm += v.data[i] * v.data[i];
  }
  CHECK(std::sqrt(norm) < 1e-8);
}

TEST_CASE("clam backward matches finite differences (eval and train mode)") {
  RngStream master(38);
  for (int trial = 0; trial < 4; ++trial) {
    const size_t feat = 5 + master.bounded(3);
    const size_t n = 4 + master.bounded(3);
    const ClamDims dims = small_clam_dims(feat);
    const uint64_t init_seed = master.next_u64();
    RngStream init(init_seed);
    // Dropout active in the train-mode trials only.
    const bool train = trial % 2 == 1;
    ClamSBParams p = ClamSBParams::init(dims, train ? 0.25 : 0.0, init);
    // Give the zero-initialized output layer some signal so its gradient
    // path is exercised away from the stationary point.
    for (double& v : p.classifier_out.weight.data) v = master.gaussian() * 0.3;
    const DenseMatrix bag = random_matrix(n, feat, master);
    const size_t bag_class = master.bounded(3);
    ClamLossConfig cfg;
    cfg.top_b = 2;
    const uint64_t fwd_seed = master.next_u64();
    const RunMode mode = train ? RunMode::kTrain : RunMode::kEval;

    RngStream fr(fwd_seed);
    const ClamForward fwd = clam_sb_forward(bag, p, mode, fr);
    const ClamBackwardResult bwd = clam_sb_backward(bag, p, fwd, bag_class, cfg);

    const std::vector<double> x0 = flatten(p.views());
    const std::vector<double> analytic =
        flatten(const_cast<ClamSBParams&>(bwd.grads).views());
    const std::vector<double> fd = finite_diff_grad(
        [&](const std::vector<double>& x) {
          ClamSBParams q = p;
          unflatten(x, q.views());
          RngStream r(fwd_seed);  // identical dropout masks every call
          const ClamForward f = clam_sb_forward(bag, q, mode, r);
          return clam_sb_backward(bag, q, f, bag_class, cfg).total_loss;
        },
        x0);
    CHECK(max_rel_err(analytic, fd) < 1e-4);
  }
}

TEST_CASE("clam eval loss matches backward loss on the same parameters") {
  RngStream rng(39);
  const ClamDims dims = small_clam_dims(6);
  ClamSBParams p = ClamSBParams::init(dims, 0.4, rng);
  const DenseMatrix bag = random_matrix(9, 6, rng);
  ClamLossConfig cfg;
  cfg.top_b = 3;
  RngStream fr(2);
  const ClamForward fwd = clam_sb_forward(bag, p, RunMode::kEval, fr);
  const ClamBackwardResult bwd = clam_sb_backward(bag, p, fwd, 2, cfg);
  const ClamLossValue ev = clam_sb_eval_loss(bag, p, 2, cfg);
  CHECK(ev.total_loss == doctest::Approx(bwd.total_loss).epsilon(1e-13));
  CHECK(ev.bag_loss == doctest::Approx(bwd.bag_loss).epsilon(1e-13));
  CHECK(ev.instance_loss == doctest::Approx(bwd.instance_loss).epsilon(1e-13));
}

// ---------------------------------------------------------------------------
// ABMIL

TEST_CASE("abmil single-instance bag gives unit attention rows") {
  RngStream rng(41);
  const AbmilDims dims = small_abmil_dims(6);
  AbmilParams p = AbmilParams::init(dims, 0.0, rng);
  const DenseMatrix bag = random_matrix(1, 6, rng);
  RngStream fr(1);
  const AbmilForward fwd = abmil_forward(bag, p, RunMode::kEval, fr);
  for (size_t c = 0; c < 3; ++c) {
    CHECK(fwd.attention.at(c, 0) == doctest::Approx(1.0).epsilon(1e-14));
    for (size_t j = 0; j < 6; ++j) {
      CHECK(fwd.bag_vectors.at(c, j) ==
            doctest::Approx(bag.at(0, j)).epsilon(1e-13));
    }
  }
}

TEST_CASE("abmil zero score maps give uniform attention and mean pooling") {
  RngStream rng(42);
  const AbmilDims dims = small_abmil_dims(5);
  AbmilParams p = AbmilParams::init(dims, 0.0, rng);
  for (GatedAttentionParams& head : p.heads) {
    for (double& v : head.score.weight.data) v = 0.0;
    for (double& v : head.score.bias) v = 0.0;
  }
  const DenseMatrix bag = random_matrix(4, 5, rng);
  RngStream fr(1);
  const AbmilForward fwd = abmil_forward(bag, p, RunMode::kEval, fr);
  for (size_t c = 0; c < 3; ++c) {
    for (size_t i = 0; i < 4; ++i) {
      CHECK(fwd.attention.at(c, i) == doctest::Approx(0.25).epsilon(1e-12));
    }
    for (size_t j = 0; j < 5; ++j) {
      double mean = 0.0;
      for (size_t i = 0; i < 4; ++i) mean += bag.at(i, j);
      mean /= 4.0;
      CHECK(fwd.bag_vectors.at(c, j) == doctest::Approx(mean).epsilon(1e-12));
    }
  }
}

TEST_CASE("abmil attention rows sum to 1 and bag vectors stay in bounds") {
  RngStream rng(43);
  const AbmilDims dims = small_abmil_dims(6);
  AbmilParams p = AbmilParams::init(dims, 0.0, rng);
  const DenseMatrix bag = random_matrix(7, 6, rng);
  RngStream fr(1);
  const AbmilForward fwd = abmil_forward(bag, p, RunMode::kEval, fr);
  for (size_t c = 0; c < 3; ++c) {
    double sum = 0.0;
    for (size_t i = 0; i < 7; ++i) sum += fwd.attention.at(c, i);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
    for (size_t j = 0; j < 6; ++j) {
      double lo = bag.at(0, j), hi = bag.at(0, j);
      for (size_t i = 1; i < 7; ++i) {
        lo = std::min(lo, bag.at(i, j));
        hi = std::max(hi, bag.at(i, j));
      }
      CHECK(fwd.bag_vectors.at(c, j) >= lo - 1e-12);
      CHECK(fwd.bag_vectors.at(c, j) <= hi + 1e-12);
    }
  }
}

TEST_CASE("abmil untrained logits are exactly zero") {
  RngStream rng(44);
  const AbmilDims dims = small_abmil_dims(6);
  AbmilParams p = AbmilParams::init(dims, 0.0, rng);
  const DenseMatrix bag = random_matrix(5, 6, rng);
  RngStream fr(1);
  const AbmilForward fwd = abmil_forward(bag, p, RunMode::kEval, fr);
  for (double logit : fwd.logits) CHECK(logit == 0.0);
}

TEST_CASE("abmil backward matches finite differences (eval and train mode)") {
  RngStream master(45);
  for (int trial = 0; trial < 4; ++trial) {
    const size_t feat = 5 + master.bounded(3);  // spec example uses 5x12
    const size_t n = 4 + master.bounded(3);
    const AbmilDims dims = small_abmil_dims(feat);
    RngStream init(master.next_u64());
    const bool train = trial % 2 == 1;
    AbmilParams p = AbmilParams::init(dims, train ? 0.25 : 0.0, init);
    for (AffineParams& scorer : p.class_scorers) {
      for (double& v : scorer.weight.data) v = master.gaussian() * 0.3;
    }
    const DenseMatrix bag = random_matrix(n, feat, master);
    const size_t bag_class = master.bounded(3);
    const std::vector<double> weights{1.0, 2.0, 0.7};
    const uint64_t fwd_seed = master.next_u64();
    const RunMode mode = train ? RunMode::kTrain : RunMode::kEval;

    RngStream fr(fwd_seed);
    const AbmilForward fwd = abmil_forward(bag, p, mode, fr);
    const AbmilBackwardResult bwd =
        abmil_backward(bag, p, fwd, bag_class, weights);

    const std::vector<double> x0 = flatten(p.views());
    const std::vector<double> analytic =
        flatten(const_cast<AbmilParams&>(bwd.grads).views());
    const std::vector<double> fd = finite_diff_grad(
        [&](const std::vector<double>& x) {
          AbmilParams q = p;
          unflatten(x, q.views());
          RngStream r(fwd_seed);
          const AbmilForward f = abmil_forward(bag, q, mode, r);
          return abmil_backward(bag, q, f, bag_class, weights).loss;
        },
        x0);
    CHECK(max_rel_err(analytic, fd) < 1e-4);
  }
}

TEST_CASE("abmil 5x12 bag with 2 heads matches finite differences") {
  RngStream master(46);
  AbmilDims dims;
  dims.feat_dim = 12;
  dims.n_heads = 2;
  dims.head_hidden = 4;
  dims.bottleneck_dim = 6;
  dims.n_classes = 3;
  RngStream init(master.next_u64());
  AbmilParams p = AbmilParams::init(dims, 0.0, init);
  for (AffineParams& scorer : p.class_scorers) {
    for (double& v : scorer.weight.data) v = master.gaussian() * 0.3;
  }
  const DenseMatrix bag = random_matrix(5, 12, master);
  const std::vector<double> weights{1.0, 1.0, 1.0};
  RngStream fr(3);
  const AbmilForward fwd = abmil_forward(bag, p, RunMode::kEval, fr);
  const AbmilBackwardResult bwd = abmil_backward(bag, p, fwd, 1, weights);
  const std::vector<double> x0 = flatten(p.views());
  const std::vector<double> analytic =
      flatten(const_cast<AbmilParams&>(bwd.grads).views());
  const std::vector<double> fd = finite_diff_grad(
      [&](const std::vector<double>& x) {
        AbmilParams q = p;
        unflatten(x, q.views());
        RngStream r(3);
        const AbmilForward f = abmil_forward(bag, q, RunMode::kEval, r);
        return abmil_backward(bag, q, f, 1, weights).loss;
      },
      x0);
  CHECK(max_rel_err(analytic, fd) < 1e-4);
}

// ---------------------------------------------------------------------------
// model facade + serialization

TEST_CASE("model kind names round trip") {
  CHECK(model_kind_from_name("clam-sb") == ModelKind::kClamSB);
  CHECK(model_kind_from_name("abmil") == ModelKind::kAbmil);
  CHECK(!model_kind_from_name("mystery").has_value());
  CHECK(std::string(model_kind_name(ModelKind::kClamSB)) == "clam-sb");
  CHECK(std::string(model_kind_name(ModelKind::kAbmil)) == "abmil");
}

TEST_CASE("extract_attention semantics for both model kinds") {
  RngStream rng(51);
  const ClamDims cdims = small_clam_dims(6);
  MilModel clam = ClamSBParams::init(cdims, 0.0, rng);

  DenseMatrix identical(4, 6);
  for (size_t i = 0; i < 4; ++i)
    for (size_t j = 0; j < 6; ++j) identical.at(i, j) = 0.1 * (j + 1);
  const std::vector<double> a = extract_attention(clam, identical);
  for (double w : a) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));

  const AbmilDims adims = small_abmil_dims(6);
  MilModel abmil = AbmilParams::init(adims, 0.0, rng);
  const DenseMatrix bag = random_matrix(5, 6, rng);
  for (size_t c = 0; c < 3; ++c) {
    const std::vector<double> row = extract_attention(abmil, bag, c);
    double sum = 0.0;
    for (double w : row) sum += w;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-10));
  }
  // Default class = predicted class.
  const std::vector<double> def = extract_attention(abmil, bag);
  const std::vector<double> logits = mil_logits(abmil, bag);
  const size_t pred =
      std::max_element(logits.begin(), logits.end()) - logits.begin();
  const std::vector<double> expl = extract_attention(abmil, bag, pred);
  for (size_t i = 0; i < def.size(); ++i) {
    CHECK(def[i] == doctest::Approx(expl[i]).epsilon(1e-14));
  }
  CHECK_THROWS_AS((void)extract_attention(abmil, bag, size_t{3}),
                  ContractError);
}

TEST_CASE("PMD1 round trip is byte-stable and preserves eval outputs") {
  RngStream rng(52);
  const ClamDims cdims = small_clam_dims(9);
  MilModel clam = ClamSBParams::init(cdims, 0.2, rng);
  const AbmilDims adims = small_abmil_dims(8);
  MilModel abmil = AbmilParams::init(adims, 0.1, rng);

  for (const MilModel* model : {&clam, &abmil}) {
    const std::vector<uint8_t> bytes = serialize_model(*model, 777);
    uint64_t seed = 0;
    const MilModel restored = deserialize_model(bytes, &seed);
    CHECK(seed == 777);
    CHECK(model_kind(restored) == model_kind(*model));
    const std::vector<uint8_t> bytes2 = serialize_model(restored, 777);
    CHECK(bytes == bytes2);

    const size_t feat = model_feat_dim(*model);
    const DenseMatrix bag = random_matrix(6, feat, rng);
    const std::vector<double> l1 = mil_logits(*model, bag);
    const std::vector<double> l2 = mil_logits(restored, bag);
    for (size_t c = 0; c < 3; ++c) {
      // Parameters are stored as f32, so logits agree to f32 precision.
      CHECK(l1[c] == doctest::Approx(l2[c]).epsilon(1e-5));
    }
  }
}

TEST_CASE("PMD1 rejects corrupt containers") {
  RngStream rng(53);
  MilModel m = ClamSBParams::init(small_clam_dims(5), 0.0, rng);
  std::vector<uint8_t> bytes = serialize_model(m, 1);

  std::vector<uint8_t> bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS((void)deserialize_model(bad_magic), FormatError);

  std::vector<uint8_t> truncated(bytes.begin(), bytes.begin() + bytes.size() / 2);
  CHECK_THROWS_AS((void)deserialize_model(truncated), FormatError);

  std::vector<uint8_t> trailing = bytes;
  trailing.push_back(0);
  CHECK_THROWS_AS((void)deserialize_model(trailing), FormatError);
}
