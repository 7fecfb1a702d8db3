#include "gcm/convxgb.hpp"

#include "gcm/error.hpp"
#include "gcm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gcm {

ConvParams init_conv(Eigen::Index filters, Eigen::Index width, std::uint64_t seed) {
  require(filters >= 1 && width >= 1, ErrorCode::InvalidSpec, "conv needs at least one filter of width >= 1");
  Rng rng(derive_seed(seed, "conv-init"));
  ConvParams p;
  p.kernels = glorot_uniform(filters, width, rng);
  p.bias = Vector::Zero(filters);
  return p;
}

namespace {

void check_conv(std::span<const double> input, const ConvParams& params) {
  require(params.width() >= 1 && params.filters() >= 1, ErrorCode::InvalidSpec, "empty conv kernel bank");
  require(params.bias.size() == params.filters(), ErrorCode::DimensionMismatch, "conv bias length != filters");
  require(params.pool_window >= 1 && params.pool_stride >= 1, ErrorCode::InvalidSpec, "pool window and stride >= 1");
  require(input.size() >= static_cast<std::size_t>(params.width()), ErrorCode::InputTooShort,
          "input shorter than the conv kernel");
}

Matrix conv_pre(std::span<const double> input, const ConvParams& params) {
  const auto k = params.width();
  const auto out_len = static_cast<Eigen::Index>(input.size()) - k + 1;
  Matrix pre(params.filters(), out_len);
  for (Eigen::Index f = 0; f < params.filters(); ++f) {
    for (Eigen::Index i = 0; i < out_len; ++i) {
      double s = params.bias[f];
      for (Eigen::Index j = 0; j < k; ++j) s += input[static_cast<std::size_t>(i + j)] * params.kernels(f, j);
      pre(f, i) = s;
    }
  }
  return pre;
}

std::size_t pool_count(std::size_t len, std::size_t stride) { return (len + stride - 1) / stride; }

}  // namespace

Matrix conv1d_relu(std::span<const double> input, const ConvParams& params) {
  check_conv(input, params);
  return conv_pre(input, params).cwiseMax(0.0);
}

std::vector<double> maxpool(std::span<const double> map, std::size_t window, std::size_t stride) {
  require(window >= 1 && stride >= 1, ErrorCode::InvalidSpec, "pool window and stride >= 1");
  std::vector<double> out;
  out.reserve(pool_count(map.size(), stride));
  for (std::size_t start = 0; start < map.size(); start += stride) {
    const std::size_t end = std::min(map.size(), start + window);
    out.push_back(*std::max_element(map.begin() + static_cast<std::ptrdiff_t>(start),
                                    map.begin() + static_cast<std::ptrdiff_t>(end)));
  }
  return out;
}

std::vector<double> reshape_features(std::span<const std::vector<double>> maps) {
  std::vector<double> out;
  for (const auto& m : maps) out.insert(out.end(), m.begin(), m.end());
  return out;
}

std::size_t conv_feature_length(std::size_t input_length, const ConvParams& params) {
  require(input_length >= static_cast<std::size_t>(params.width()), ErrorCode::InputTooShort,
          "input shorter than the conv kernel");
  const std::size_t out_len = input_length - static_cast<std::size_t>(params.width()) + 1;
  return static_cast<std::size_t>(params.filters()) * pool_count(out_len, params.pool_stride);
}

ConvForward conv_forward(std::span<const double> input, const ConvParams& params) {
  check_conv(input, params);
  ConvForward fw;
  fw.pre = conv_pre(input, params);
  const auto out_len = static_cast<std::size_t>(fw.pre.cols());
  const std::size_t per_filter = pool_count(out_len, params.pool_stride);
  fw.features.resize(static_cast<Eigen::Index>(per_filter) * params.filters());
  fw.argmax.resize(static_cast<std::size_t>(fw.features.size()));
  std::size_t o = 0;
  for (Eigen::Index f = 0; f < fw.pre.rows(); ++f) {
    for (std::size_t start = 0; start < out_len; start += params.pool_stride, ++o) {
      const std::size_t end = std::min(out_len, start + params.pool_window);
      std::size_t best = start;
      for (std::size_t j = start + 1; j < end; ++j) {
        if (std::max(fw.pre(f, static_cast<Eigen::Index>(j)), 0.0) >
            std::max(fw.pre(f, static_cast<Eigen::Index>(best)), 0.0)) {
          best = j;
        }
      }
      fw.argmax[o] = static_cast<std::size_t>(f) * out_len + best;
      fw.features[static_cast<Eigen::Index>(o)] = std::max(fw.pre(f, static_cast<Eigen::Index>(best)), 0.0);
    }
  }
  return fw;
}

Matrix conv_features(const Matrix& rows, const ConvParams& params) {
  const std::size_t len = conv_feature_length(static_cast<std::size_t>(rows.cols()), params);
  Matrix out(rows.rows(), static_cast<Eigen::Index>(len));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const std::span<const double> row(rows.data() + i * rows.cols(), static_cast<std::size_t>(rows.cols()));
    out.row(i) = conv_forward(row, params).features.transpose();
  }
  return out;
}

ConvGradient conv_backward(const ConvForward& fw, std::span<const double> input, const ConvParams& params,
                           const Vector& d_features, Vector* d_input) {
  require(d_features.size() == fw.features.size(), ErrorCode::DimensionMismatch, "feature gradient length");
  ConvGradient g{Matrix::Zero(params.filters(), params.width()), Vector::Zero(params.filters())};
  if (d_input) *d_input = Vector::Zero(static_cast<Eigen::Index>(input.size()));
  const auto out_len = static_cast<std::size_t>(fw.pre.cols());
  for (std::size_t o = 0; o < fw.argmax.size(); ++o) {
    const auto f = static_cast<Eigen::Index>(fw.argmax[o] / out_len);
    const auto i = static_cast<Eigen::Index>(fw.argmax[o] % out_len);
    if (fw.pre(f, i) <= 0.0) continue;
    const double d = d_features[static_cast<Eigen::Index>(o)];
    g.d_bias[f] += d;
    for (Eigen::Index j = 0; j < params.width(); ++j) {
      g.d_kernels(f, j) += d * input[static_cast<std::size_t>(i + j)];
      if (d_input) (*d_input)[i + j] += d * params.kernels(f, j);
    }
  }
  return g;
}

// ---- trees ------------------------------------------------------------

double soft_threshold(double g, double alpha) {
  const double mag = std::max(std::abs(g) - alpha, 0.0);
  return g < 0.0 ? -mag : mag;
}

double leaf_weight(double grad_sum, double hess_sum, double zeta, double alpha) {
  require(hess_sum + zeta > 0.0, ErrorCode::DegenerateDenominator, "leaf weight needs H + zeta > 0");
  return -soft_threshold(grad_sum, alpha) / (hess_sum + zeta);
}

namespace {

double leaf_score(double g, double h, double zeta, double alpha) {
  const double t = soft_threshold(g, alpha);
  return t * t / (h + zeta);
}

}  // namespace

double split_gain(double grad_left, double hess_left, double grad_right, double hess_right, double zeta,
                  double delta, double alpha) {
  require(hess_left + zeta > 0.0 && hess_right + zeta > 0.0, ErrorCode::DegenerateDenominator,
          "split gain needs H + zeta > 0 on both sides");
  return 0.5 * (leaf_score(grad_left, hess_left, zeta, alpha) + leaf_score(grad_right, hess_right, zeta, alpha) -
                leaf_score(grad_left + grad_right, hess_left + hess_right, zeta, alpha)) -
         delta;
}

double Tree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right);
  }
  return nodes[i].weight;
}

std::size_t Tree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

std::size_t Tree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {  // children always follow their parent
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return best;
}

namespace {

using SortedColumns = std::vector<std::vector<std::uint32_t>>;

SortedColumns sort_columns(const Matrix& x) {
  SortedColumns cols(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index f = 0; f < x.cols(); ++f) {
    auto& idx = cols[static_cast<std::size_t>(f)];
    idx.resize(static_cast<std::size_t>(x.rows()));
    std::iota(idx.begin(), idx.end(), 0u);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) { return x(a, f) < x(b, f); });
  }
  return cols;
}

struct SplitChoice {
  double gain = -std::numeric_limits<double>::infinity();
  int feature = -1;
  double threshold = 0.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const SortedColumns& sorted, const GradHessBatch& gh, const TreeParams& p,
              unsigned threads)
      : x_(x), sorted_(sorted), gh_(gh), p_(p), threads_(threads),
        node_of_(static_cast<std::size_t>(x.rows()), 0) {}

  Tree build() {
    std::vector<std::uint32_t> all(static_cast<std::size_t>(x_.rows()));
    std::iota(all.begin(), all.end(), 0u);
    grow(all, 0);
    return std::move(tree_);
  }

 private:
  int grow(const std::vector<std::uint32_t>& members, std::size_t depth) {
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    double g = 0.0, h = 0.0;
    for (auto i : members) {
      g += gh_.grad[i];
      h += gh_.hess[i];
      node_of_[i] = id;
    }
    SplitChoice best;
    if (depth < p_.max_depth && members.size() >= 2) best = find_split(id, g, h);
    if (best.feature < 0) {
      tree_.nodes[static_cast<std::size_t>(id)].weight = leaf_weight(g, h, p_.zeta, p_.alpha);
      return id;
    }
    std::vector<std::uint32_t> left, right;
    for (auto i : members) {
      (x_(i, best.feature) < best.threshold ? left : right).push_back(i);
    }
    tree_.nodes[static_cast<std::size_t>(id)].feature = best.feature;
    tree_.nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
    const int l = grow(left, depth + 1);
    const int r = grow(right, depth + 1);
    tree_.nodes[static_cast<std::size_t>(id)].left = l;
    tree_.nodes[static_cast<std::size_t>(id)].right = r;
    return id;
  }

  SplitChoice find_split(int id, double g_total, double h_total) {
    const auto features = static_cast<std::size_t>(x_.cols());
    std::vector<SplitChoice> per_feature(features);
    const double parent = leaf_score(g_total, h_total, p_.zeta, p_.alpha);
    parallel_for(features, threads_, [&](std::size_t f) {
      SplitChoice& best = per_feature[f];
      const auto fi = static_cast<Eigen::Index>(f);
      double gl = 0.0, hl = 0.0;
      bool have_prev = false;
      double prev = 0.0;
      for (auto i : sorted_[f]) {
        if (node_of_[i] != id) continue;
        const double v = x_(i, fi);
        if (have_prev && v > prev) {
          const double gr = g_total - gl, hr = h_total - hl;
          if (hl + p_.zeta > 0.0 && hr + p_.zeta > 0.0) {
            const double sl = leaf_score(gl, hl, p_.zeta, p_.alpha);
            const double sr = leaf_score(gr, hr, p_.zeta, p_.alpha);
            const double gain = 0.5 * (sl + sr - parent) - p_.delta;
            // Guard against rounding noise turning a zero-gain split positive.
            const double tol = 1e-12 * (sl + sr + parent);
            if (gain > p_.min_gain + tol && gain > best.gain) {
              double t = prev + 0.5 * (v - prev);
              if (!(t > prev)) t = v;
              best = {gain, static_cast<int>(f), t};
            }
          }
        }
        gl += gh_.grad[i];
        hl += gh_.hess[i];
        prev = v;
        have_prev = true;
      }
    });
    SplitChoice best;
    for (const auto& c : per_feature) {
      if (c.feature >= 0 && c.gain > best.gain) best = c;
    }
    return best;
  }

  const Matrix& x_;
  const SortedColumns& sorted_;
  const GradHessBatch& gh_;
  const TreeParams& p_;
  unsigned threads_;
  std::vector<int> node_of_;
  Tree tree_;
};

void check_tree_inputs(const Matrix& samples, const GradHessBatch& grads, const TreeParams& params) {
  require(samples.rows() >= 1, ErrorCode::InvalidSpec, "grow_tree needs at least one sample");
  require(grads.grad.size() == static_cast<std::size_t>(samples.rows()) && grads.hess.size() == grads.grad.size(),
          ErrorCode::LengthMismatch, "gradient batch length != sample count");
  require(params.zeta >= 0.0 && params.alpha >= 0.0, ErrorCode::InvalidSpec, "zeta and alpha must be >= 0");
}

}  // namespace

Tree grow_tree(const Matrix& samples, const GradHessBatch& grads, const TreeParams& params, unsigned threads) {
  check_tree_inputs(samples, grads, params);
  const SortedColumns sorted = sort_columns(samples);
  return TreeBuilder(samples, sorted, grads, params, threads).build();
}

// ---- boosting ---------------------------------------------------------

namespace {

double total_loss(BoostLoss loss, const Matrix& scores, std::span<const double> y) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    const double yi = y[static_cast<std::size_t>(i)];
    switch (loss) {
      case BoostLoss::Logistic:
        s -= yi > 0.5 ? log_sigmoid(scores(i, 0)) : log_sigmoid(-scores(i, 0));
        break;
      case BoostLoss::Squared:
        s += 0.5 * (scores(i, 0) - yi) * (scores(i, 0) - yi);
        break;
      case BoostLoss::Softmax: {
        const double m = scores.row(i).maxCoeff();
        const double lse = m + std::log((scores.row(i).array() - m).exp().sum());
        s += lse - scores(i, static_cast<Eigen::Index>(yi));
        break;
      }
    }
  }
  return s;
}

GradHessBatch gradients(BoostLoss loss, const Matrix& scores, std::span<const double> y, Eigen::Index output) {
  const auto n = static_cast<std::size_t>(scores.rows());
  GradHessBatch gh{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    switch (loss) {
      case BoostLoss::Logistic: {
        const double p = sigmoid(scores(r, 0));
        gh.grad[i] = p - y[i];
        gh.hess[i] = p * (1.0 - p);
        break;
      }
      case BoostLoss::Squared:
        gh.grad[i] = scores(r, 0) - y[i];
        gh.hess[i] = 1.0;
        break;
      case BoostLoss::Softmax: {
        const Vector p = softmax(scores.row(r).transpose());
        gh.grad[i] = p[output] - (static_cast<Eigen::Index>(y[i]) == output ? 1.0 : 0.0);
        gh.hess[i] = p[output] * (1.0 - p[output]);
        break;
      }
    }
  }
  return gh;
}

double tree_penalty(const Tree& t, const BoostParams& p) {
  double s = 0.0;
  for (const auto& n : t.nodes) {
    if (!n.is_leaf()) continue;
    const double w = p.eta * n.weight;
    s += p.delta + 0.5 * p.zeta * w * w + p.alpha * std::abs(w);
  }
  return s;
}

}  // namespace

BoostFit boost_fit(const Matrix& features, std::span<const double> targets, const BoostParams& params,
                   std::size_t num_classes, unsigned threads) {
  require(params.rounds >= 1, ErrorCode::InvalidSpec, "boosting needs rounds >= 1");
  require(params.eta > 0.0 && params.eta <= 1.0, ErrorCode::InvalidSpec, "shrinkage must lie in (0, 1]");
  require(params.delta >= 0.0, ErrorCode::InvalidSpec, "leaf penalty must be >= 0");
  require(targets.size() == static_cast<std::size_t>(features.rows()), ErrorCode::LengthMismatch,
          "targets length != sample count");
  require(features.rows() >= 1 && features.cols() >= 1, ErrorCode::InvalidSpec, "boosting needs samples and features");
  if (params.loss != BoostLoss::Squared) {
    const std::size_t classes = params.loss == BoostLoss::Logistic ? 2 : num_classes;
    require(classes >= 2, ErrorCode::InvalidSpec, "classification needs >= 2 classes");
    for (double y : targets) {
      require(y >= 0.0 && y < static_cast<double>(classes) && y == std::floor(y), ErrorCode::LabelOutOfRange,
              "class target outside [0, classes)");
    }
  }

  BoostFit fit;
  auto& ens = fit.ensemble;
  ens.loss = params.loss;
  ens.eta = params.eta;
  ens.outputs = params.loss == BoostLoss::Softmax ? num_classes : 1;
  ens.features = static_cast<std::size_t>(features.cols());

  const TreeParams tp{params.max_depth, params.min_gain, params.zeta, params.delta, params.alpha};
  const SortedColumns sorted = sort_columns(features);
  const auto outputs = static_cast<Eigen::Index>(ens.outputs);
  Matrix scores = Matrix::Constant(features.rows(), outputs, ens.base_score);
  double penalty = 0.0;
  double objective = total_loss(params.loss, scores, targets);
  fit.objective.push_back(objective);

  for (std::size_t r = 0; r < params.rounds; ++r) {
    std::vector<Tree> trees;
    Matrix next = scores;
    double added = 0.0;
    for (Eigen::Index k = 0; k < outputs; ++k) {
      const GradHessBatch gh = gradients(params.loss, scores, targets, k);
      check_tree_inputs(features, gh, tp);
      Tree t = TreeBuilder(features, sorted, gh, tp, threads).build();
      for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const std::span<const double> row(features.data() + i * features.cols(),
                                          static_cast<std::size_t>(features.cols()));
        next(i, k) += params.eta * t.predict(row);
      }
      added += tree_penalty(t, params);
      trees.push_back(std::move(t));
    }
    const double candidate = total_loss(params.loss, next, targets) + penalty + added;
    if (!(candidate <= objective)) break;
    scores = std::move(next);
    penalty += added;
    objective = candidate;
    ens.rounds.push_back(std::move(trees));
    fit.objective.push_back(objective);
  }
  return fit;
}

Vector boost_scores(const BoostedEnsemble& ensemble, std::span<const double> x) {
  require(x.size() == ensemble.features, ErrorCode::DimensionMismatch, "feature length != ensemble input width");
  Vector s = Vector::Constant(static_cast<Eigen::Index>(ensemble.outputs), ensemble.base_score);
  for (const auto& round : ensemble.rounds) {
    for (std::size_t k = 0; k < round.size(); ++k) s[static_cast<Eigen::Index>(k)] += ensemble.eta * round[k].predict(x);
  }
  return s;
}

int boost_predict(const BoostedEnsemble& ensemble, std::span<const double> x) {
  const Vector s = boost_scores(ensemble, x);
  switch (ensemble.loss) {
    case BoostLoss::Logistic:
      return sigmoid(s[0]) >= 0.5 ? 1 : 0;
    case BoostLoss::Squared:
      return static_cast<int>(std::lround(s[0]));
    case BoostLoss::Softmax:
      break;
  }
  Eigen::Index best = 0;
  for (Eigen::Index k = 1; k < s.size(); ++k) {
    if (s[k] > s[best]) best = k;
  }
  return static_cast<int>(best);
}

std::vector<int> boost_predict(const BoostedEnsemble& ensemble, const Matrix& features) {
  std::vector<int> out(static_cast<std::size_t>(features.rows()));
  for (Eigen::Index i = 0; i < features.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = boost_predict(
        ensemble, std::span<const double>(features.data() + i * features.cols(), static_cast<std::size_t>(features.cols())));
  }
  return out;
}

}  // namespace gcm
