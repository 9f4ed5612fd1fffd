#include "pathomil/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "pathomil/errors.hpp"
#include "pathomil/io_util.hpp"
#include "pathomil/nn.hpp"

namespace pathomil {

using nlohmann::json;

double Tree::predict(const double* x, size_t dim) const {
  if (nodes.empty()) return 0.0;
  int32_t idx = 0;
  while (!nodes[idx].is_leaf) {
    const TreeNode& node = nodes[idx];
    if (node.feature >= dim) {
      throw ContractError("Tree::predict: split feature " +
                          std::to_string(node.feature) +
                          " outside input dimension " + std::to_string(dim));
    }
    idx = x[node.feature] < double(node.threshold) ? node.left : node.right;
  }
  return double(nodes[idx].weight);
}

void softmax_grad_hess(const double* logits, size_t n_classes, size_t label,
                       double* g, double* h) {
  const std::vector<double> p =
      softmax(std::vector<double>(logits, logits + n_classes));
  for (size_t c = 0; c < n_classes; ++c) {
    g[c] = p[c] - (c == label ? 1.0 : 0.0);
    h[c] = std::max(p[c] * (1.0 - p[c]), 1e-16);
  }
}

namespace {

double leaf_objective(double G, double H, double lambda) {
  return -0.5 * G * G / (H + lambda);
}

}  // namespace

std::optional<SplitCandidate> find_best_split(
    const std::vector<double>& values, const std::vector<double>& g,
    const std::vector<double>& h, double lambda, double gamma_leaf,
    double min_child_hessian) {
  const size_t n = values.size();
  if (g.size() != n || h.size() != n) {
    throw ContractError("find_best_split: value/gradient length mismatch");
  }
  if (n < 2) return std::nullopt;

  const double G = std::accumulate(g.begin(), g.end(), 0.0);
  const double H = std::accumulate(h.begin(), h.end(), 0.0);
  const double parent = leaf_objective(G, H, lambda);

  std::optional<SplitCandidate> best;
  double gl = 0.0, hl = 0.0;
  for (size_t i = 0; i + 1 < n; ++i) {
    gl += g[i];
    hl += h[i];
    if (values[i] >= values[i + 1]) continue;  // no boundary between equals
    const double gr = G - gl;
    const double hr = H - hl;
    if (hl < min_child_hessian || hr < min_child_hessian) continue;
    const float threshold =
        static_cast<float>(0.5 * (values[i] + values[i + 1]));
    // The stored 32-bit threshold must reproduce this partition at predict
    // time; skip candidates where rounding crosses a sample value.
    if (!(values[i] < double(threshold) && double(threshold) <= values[i + 1])) {
      continue;
    }
    // Splitting lowers the (negative) objective; the gain is how much.
    const double gain = parent - leaf_objective(gl, hl, lambda) -
                        leaf_objective(gr, hr, lambda) - gamma_leaf;
    if (!best || gain > best->gain) {
      best = SplitCandidate{gain, threshold};
    }
  }
  if (best && best->gain <= 0.0) return std::nullopt;
  return best;
}

namespace {

int32_t build_tree_rec(const DenseMatrix& X, std::vector<size_t>& rows,
                       size_t begin, size_t end, const std::vector<double>& g,
                       const std::vector<double>& h, const GBDTConfig& cfg,
                       size_t depth, std::vector<TreeNode>& nodes) {
  double G = 0.0, H = 0.0;
  for (size_t i = begin; i < end; ++i) {
    G += g[rows[i]];
    H += h[rows[i]];
  }

  const int32_t idx = static_cast<int32_t>(nodes.size());
  nodes.emplace_back();
  nodes[idx].weight = static_cast<float>(-G / (H + cfg.lambda));

  if (depth >= cfg.max_depth || end - begin < 2) return idx;

  struct Best {
    double gain;
    size_t feature;
    float threshold;
  };
  std::optional<Best> best;
  std::vector<double> col_values(end - begin), col_g(end - begin),
      col_h(end - begin);
  std::vector<size_t> order(end - begin);
  for (size_t j = 0; j < X.cols; ++j) {
    std::iota(order.begin(), order.end(), begin);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      const double va = X.at(rows[a], j), vb = X.at(rows[b], j);
      if (va != vb) return va < vb;
      return rows[a] < rows[b];
    });
    for (size_t i = 0; i < order.size(); ++i) {
      const size_t row = rows[order[i]];
      col_values[i] = X.at(row, j);
      col_g[i] = g[row];
      col_h[i] = h[row];
    }
    const auto cand = find_best_split(col_values, col_g, col_h, cfg.lambda,
                                      cfg.gamma_leaf, cfg.min_child_hessian);
    if (cand && (!best || cand->gain > best->gain)) {
      best = Best{cand->gain, j, cand->threshold};
    }
  }
  if (!best) return idx;

  const auto mid = std::partition(
      rows.begin() + begin, rows.begin() + end, [&](size_t row) {
        return X.at(row, best->feature) < double(best->threshold);
      });
  const size_t split_at = static_cast<size_t>(mid - rows.begin());
  if (split_at == begin || split_at == end) return idx;  // degenerate guard
  // Deterministic recursion order regardless of partition's internal order.
  std::sort(rows.begin() + begin, rows.begin() + split_at);
  std::sort(rows.begin() + split_at, rows.begin() + end);

  nodes[idx].is_leaf = false;
  nodes[idx].feature = static_cast<uint16_t>(best->feature);
  nodes[idx].threshold = best->threshold;
  const int32_t left =
      build_tree_rec(X, rows, begin, split_at, g, h, cfg, depth + 1, nodes);
  nodes[idx].left = left;
  const int32_t right =
      build_tree_rec(X, rows, split_at, end, g, h, cfg, depth + 1, nodes);
  nodes[idx].right = right;
  return idx;
}

}  // namespace

Tree build_tree(const DenseMatrix& X, const std::vector<size_t>& rows,
                const std::vector<double>& g, const std::vector<double>& h,
                const GBDTConfig& cfg) {
  if (rows.empty()) {
    throw ContractError("build_tree: no samples");
  }
  if (X.cols > 65536) {
    throw ContractError("build_tree: more than 65536 features");
  }
  Tree tree;
  std::vector<size_t> work = rows;
  build_tree_rec(X, work, 0, work.size(), g, h, cfg, 0, tree.nodes);
  return tree;
}

double multiclass_log_loss(const DenseMatrix& logits,
                           const std::vector<uint8_t>& labels) {
  if (logits.rows != labels.size() || logits.rows == 0) {
    throw ContractError("multiclass_log_loss: shape mismatch or empty input");
  }
  double total = 0.0;
  for (size_t i = 0; i < logits.rows; ++i) {
    const std::vector<double> p = softmax(
        std::vector<double>(logits.row(i), logits.row(i) + logits.cols));
    total += -std::log(std::max(p[labels[i]], 1e-300));
  }
  return total / double(logits.rows);
}

EnsembleTrainResult train_ensemble(const DenseMatrix& X,
                                   const std::vector<uint8_t>& labels,
                                   const GBDTConfig& cfg,
                                   std::vector<std::string> feature_names) {
  if (X.rows < 2) {
    throw ContractError("train_ensemble: need at least 2 samples");
  }
  if (labels.size() != X.rows) {
    throw ContractError("train_ensemble: label count mismatch");
  }
  if (!all_finite(X.data)) {
    throw NumericError("train_ensemble: non-finite feature value");
  }
  for (uint8_t y : labels) {
    if (y >= cfg.n_classes) {
      throw ContractError("train_ensemble: label out of range");
    }
  }
  if (feature_names.empty()) {
    for (size_t j = 0; j < X.cols; ++j) {
      feature_names.push_back("f" + std::to_string(j));
    }
  }
  if (feature_names.size() != X.cols) {
    throw ContractError("train_ensemble: feature name count mismatch");
  }

  EnsembleTrainResult result;
  result.ensemble.config = cfg;
  result.ensemble.feature_names = std::move(feature_names);

  const size_t m = X.rows;
  const size_t K = cfg.n_classes;
  DenseMatrix logits(m, K);
  result.round_losses.push_back(multiclass_log_loss(logits, labels));

  std::vector<size_t> all_rows(m);
  std::iota(all_rows.begin(), all_rows.end(), size_t{0});
  DenseMatrix g(m, K), h(m, K);

  for (size_t round = 0; round < cfg.n_rounds; ++round) {
    for (size_t i = 0; i < m; ++i) {
      softmax_grad_hess(logits.row(i), K, labels[i], g.row(i), h.row(i));
    }
    for (size_t c = 0; c < K; ++c) {
      std::vector<double> gc(m), hc(m);
      for (size_t i = 0; i < m; ++i) {
        gc[i] = g.at(i, c);
        hc[i] = h.at(i, c);
      }
      Tree tree = build_tree(X, all_rows, gc, hc, cfg);
      for (size_t i = 0; i < m; ++i) {
        logits.at(i, c) += cfg.learning_rate * tree.predict(X.row(i), X.cols);
      }
      result.ensemble.trees.push_back(std::move(tree));
    }
    result.round_losses.push_back(multiclass_log_loss(logits, labels));
  }
  return result;
}

EnsemblePrediction predict_ensemble(const TreeEnsemble& ens, const double* x,
                                    size_t dim) {
  if (dim != ens.n_features()) {
    throw ContractError("predict_ensemble: expected " +
                        std::to_string(ens.n_features()) + " features, got " +
                        std::to_string(dim));
  }
  const size_t K = ens.config.n_classes;
  EnsemblePrediction out;
  out.logits.assign(K, 0.0);
  for (size_t t = 0; t < ens.trees.size(); ++t) {
    out.logits[t % K] += ens.config.learning_rate * ens.trees[t].predict(x, dim);
  }
  out.probs = softmax(out.logits);
  return out;
}

// --- PGB1 container --------------------------------------------------------

namespace {

void serialize_node(const Tree& tree, int32_t idx, std::vector<uint8_t>& out) {
  const TreeNode& node = tree.nodes[idx];
  out.push_back(node.is_leaf ? 1 : 0);
  if (node.is_leaf) {
    put_f32le(out, node.weight);
  } else {
    put_u16le(out, node.feature);
    put_f32le(out, node.threshold);
    serialize_node(tree, node.left, out);
    serialize_node(tree, node.right, out);
  }
}

int32_t deserialize_node(ByteReader& r, Tree& tree) {
  const uint8_t flag = r.u8("tree node flag");
  if (flag > 1) {
    throw FormatError("ensemble: invalid node flag " + std::to_string(flag));
  }
  const int32_t idx = static_cast<int32_t>(tree.nodes.size());
  tree.nodes.emplace_back();
  if (flag == 1) {
    tree.nodes[idx].weight = r.f32le("leaf weight");
  } else {
    tree.nodes[idx].is_leaf = false;
    tree.nodes[idx].feature = r.u16le("split feature");
    tree.nodes[idx].threshold = r.f32le("split threshold");
    const int32_t left = deserialize_node(r, tree);
    tree.nodes[idx].left = left;
    const int32_t right = deserialize_node(r, tree);
    tree.nodes[idx].right = right;
  }
  return idx;
}

}  // namespace

std::vector<uint8_t> serialize_ensemble(const TreeEnsemble& ens) {
  json header;
  header["config"] = {{"n_rounds", ens.config.n_rounds},
                      {"learning_rate", ens.config.learning_rate},
                      {"max_depth", ens.config.max_depth},
                      {"lambda", ens.config.lambda},
                      {"gamma_leaf", ens.config.gamma_leaf},
                      {"min_child_hessian", ens.config.min_child_hessian},
                      {"n_classes", ens.config.n_classes}};
  header["feature_names"] = ens.feature_names;
  header["n_trees"] = ens.trees.size();
  const std::string header_text = header.dump();

  std::vector<uint8_t> out;
  out.push_back('P');
  out.push_back('G');
  out.push_back('B');
  out.push_back('1');
  put_u32le(out, static_cast<uint32_t>(header_text.size()));
  out.insert(out.end(), header_text.begin(), header_text.end());
  for (const Tree& tree : ens.trees) {
    if (tree.nodes.empty()) {
      throw ContractError("serialize_ensemble: empty tree");
    }
    serialize_node(tree, 0, out);
  }
  return out;
}

TreeEnsemble deserialize_ensemble(const std::vector<uint8_t>& bytes) {
  ByteReader r{bytes.data(), bytes.size(), 0};
  uint8_t magic[4];
  for (auto& m : magic) m = r.u8("ensemble magic");
  if (magic[0] != 'P' || magic[1] != 'G' || magic[2] != 'B' ||
      magic[3] != '1') {
    throw FormatError("ensemble: bad magic, expected \"PGB1\"");
  }
  const uint32_t header_len = r.u32le("ensemble header length");
  const std::string header_text = r.bytes(header_len, "ensemble header");
  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("ensemble: invalid header JSON: ") +
                      e.what());
  }

  TreeEnsemble ens;
  try {
    const json& cfg = header.at("config");
    ens.config.n_rounds = cfg.at("n_rounds").get<size_t>();
    ens.config.learning_rate = cfg.at("learning_rate").get<double>();
    ens.config.max_depth = cfg.at("max_depth").get<size_t>();
    ens.config.lambda = cfg.at("lambda").get<double>();
    ens.config.gamma_leaf = cfg.at("gamma_leaf").get<double>();
    ens.config.min_child_hessian = cfg.at("min_child_hessian").get<double>();
    ens.config.n_classes = cfg.at("n_classes").get<size_t>();
    ens.feature_names =
        header.at("feature_names").get<std::vector<std::string>>();
    const size_t n_trees = header.at("n_trees").get<size_t>();
    ens.trees.resize(n_trees);
  } catch (const json::exception& e) {
    throw FormatError(std::string("ensemble: malformed header: ") + e.what());
  }
  for (Tree& tree : ens.trees) {
    deserialize_node(r, tree);
  }
  if (r.pos != bytes.size()) {
    throw FormatError("ensemble: " + std::to_string(bytes.size() - r.pos) +
                      " trailing bytes after tree payload");
  }
  return ens;
}

void save_ensemble(const TreeEnsemble& ens, const std::string& path) {
  write_file_atomic(path, serialize_ensemble(ens));
}

TreeEnsemble load_ensemble(const std::string& path) {
  return deserialize_ensemble(read_file(path));
}

// --- MIL-derived slide descriptor -----------------------------------------

const std::array<std::string, kEnhancedFeatureCount>& enhanced_feature_names() {
  static const std::array<std::string, kEnhancedFeatureCount> names = {
      "logit_low",      "logit_medium",   "logit_high",    "prob_low",
      "prob_medium",    "prob_high",      "log_patch_count", "att_mean",
      "att_std",        "att_min",        "att_max",       "att_median",
      "att_skewness",   "att_kurtosis",   "att_entropy",   "att_entropy_norm",
      "att_top1",       "att_top5_mass",  "att_top10_mass", "att_gini",
      "att_q25",        "att_q75",        "att_iqr"};
  return names;
}

namespace {

// Linear interpolation between order statistics (the common spreadsheet /
// NumPy default), on an ascending-sorted vector.
double quantile_type7(const std::vector<double>& sorted, double q) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double pos = q * double(n - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - double(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

}  // namespace

std::array<double, kEnhancedFeatureCount> build_enhanced_features(
    const std::array<double, 3>& logits, const std::array<double, 3>& probs,
    const std::vector<double>& attention) {
  const size_t n = attention.size();
  if (n == 0) {
    throw ContractError("build_enhanced_features: empty attention vector");
  }
  double sum = 0.0;
  for (double a : attention) sum += a;
  if (std::abs(sum - 1.0) > 1e-6) {
    throw ContractError(
        "build_enhanced_features: attention weights sum to " +
        std::to_string(sum) + ", expected 1 within 1e-6");
  }

  const double mean = sum / double(n);
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double a : attention) {
    const double d = a - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= double(n);
  m3 /= double(n);
  m4 /= double(n);
  const double stddev = std::sqrt(m2);
  // A constant weight vector can still show ~1-ulp deviations because the
  // mean itself rounds; treat spread that small as zero variance so the
  // shape statistics report their degenerate-case convention instead of
  // rounding-noise sign artifacts.
  const bool degenerate = stddev <= 1e-12 * std::max(std::abs(mean), 1e-300);
  const double skew = degenerate ? 0.0 : m3 / (stddev * stddev * stddev);
  const double kurt = degenerate ? 0.0 : m4 / (m2 * m2) - 3.0;

  double entropy = 0.0;
  for (double a : attention) {
    if (a > 0.0) entropy -= a * std::log(a);
  }
  const double entropy_norm = n > 1 ? entropy / std::log(double(n)) : 0.0;

  std::vector<double> asc(attention);
  std::sort(asc.begin(), asc.end());
  const double top1 = asc.back();
  double top5 = 0.0, top10 = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double a = asc[n - 1 - i];
    if (i < 5) top5 += a;
    if (i < 10) top10 += a;
  }
  // Gini over nonnegative weights summing to 1: (2*sum(i*a_(i)) - (n+1))/n
  // with 1-based ranks over the ascending order.
  double rank_sum = 0.0;
  for (size_t i = 0; i < n; ++i) {
    rank_sum += double(i + 1) * asc[i];
  }
  const double gini = (2.0 * rank_sum - double(n + 1) * sum) / (double(n) * sum);

  const double q25 = quantile_type7(asc, 0.25);
  const double median = quantile_type7(asc, 0.5);
  const double q75 = quantile_type7(asc, 0.75);

  std::array<double, kEnhancedFeatureCount> out{};
  out[0] = logits[0];
  out[1] = logits[1];
  out[2] = logits[2];
  out[3] = probs[0];
  out[4] = probs[1];
  out[5] = probs[2];
  out[6] = std::log1p(double(n));
  out[7] = mean;
  out[8] = stddev;
  out[9] = asc.front();
  out[10] = asc.back();
  out[11] = median;
  out[12] = skew;
  out[13] = kurt;
  out[14] = entropy;
  out[15] = entropy_norm;
  out[16] = top1;
  out[17] = top5;
  out[18] = top10;
  out[19] = gini;
  out[20] = q25;
  out[21] = q75;
  out[22] = q75 - q25;
  for (double v : out) {
    if (!std::isfinite(v)) {
      throw NumericError("build_enhanced_features: non-finite output value");
    }
  }
  return out;
}

}  // namespace pathomil
