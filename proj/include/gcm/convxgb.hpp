#pragma once

#include "gcm/linalg.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gcm {

// ---- convolutional front end -------------------------------------------

struct ConvParams {
  Matrix kernels;  // filters x K
  Vector bias;     // filters
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;

  Eigen::Index filters() const { return kernels.rows(); }
  Eigen::Index width() const { return kernels.cols(); }
  friend bool operator==(const ConvParams& a, const ConvParams& b) {
    return same_values(a.kernels, b.kernels) && same_values(a.bias, b.bias) && a.pool_window == b.pool_window &&
           a.pool_stride == b.pool_stride;
  }
};

ConvParams init_conv(Eigen::Index filters, Eigen::Index width, std::uint64_t seed);

/// Valid 1D convolution plus ReLU; one row per filter, L - K + 1 columns.
Matrix conv1d_relu(std::span<const double> input, const ConvParams& params);

/// Non-overlapping window maxima; a short tail window passes its own maximum.
std::vector<double> maxpool(std::span<const double> map, std::size_t window = 2, std::size_t stride = 2);

/// Concatenation of the maps in order.
std::vector<double> reshape_features(std::span<const std::vector<double>> maps);

/// Length of the conv -> pool -> reshape vector for an input of length L.
std::size_t conv_feature_length(std::size_t input_length, const ConvParams& params);

struct ConvForward {
  Matrix pre;                         // filters x (L - K + 1), before ReLU
  std::vector<std::size_t> argmax;    // per output feature, flat index into pre
  Vector features;                    // pooled maps, filter-major
};

ConvForward conv_forward(std::span<const double> input, const ConvParams& params);

/// Row-wise conv -> ReLU -> pool -> reshape.
Matrix conv_features(const Matrix& rows, const ConvParams& params);

struct ConvGradient {
  Matrix d_kernels;
  Vector d_bias;
};

/// Gradients given dLoss/d(features). Pool ties route to the first maximum.
ConvGradient conv_backward(const ConvForward& fw, std::span<const double> input, const ConvParams& params,
                           const Vector& d_features, Vector* d_input = nullptr);

// ---- second-order boosted trees ----------------------------------------

/// Soft-threshold: sign(g) * max(|g| - alpha, 0).
double soft_threshold(double g, double alpha);

/// -soft_threshold(G, alpha) / (H + zeta).
double leaf_weight(double grad_sum, double hess_sum, double zeta, double alpha = 0.0);

/// 1/2 [S(G_L,H_L) + S(G_R,H_R) - S(G_L+G_R,H_L+H_R)] - delta with
/// S(G,H) = soft_threshold(G, alpha)^2 / (H + zeta).
double split_gain(double grad_left, double hess_left, double grad_right, double hess_right, double zeta,
                  double delta, double alpha = 0.0);

struct GradHessBatch {
  std::vector<double> grad;
  std::vector<double> hess;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double weight = 0.0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Regression tree; node 0 is the root. x[feature] < threshold goes left.
struct Tree {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const;
  std::size_t leaf_count() const;
  std::size_t depth() const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct TreeParams {
  std::size_t max_depth = 4;
  double min_gain = 0.0;
  double zeta = 1.0;
  double delta = 0.5;
  double alpha = 0.0;
};

/// Exact greedy growth over all features and midpoints between distinct
/// sorted values. Gain ties keep the lowest feature, then the lowest threshold.
Tree grow_tree(const Matrix& samples, const GradHessBatch& grads, const TreeParams& params, unsigned threads = 1);

enum class BoostLoss { Logistic, Softmax, Squared };

struct BoostParams {
  BoostLoss loss = BoostLoss::Logistic;
  std::size_t rounds = 100;
  double eta = 0.3;
  std::size_t max_depth = 4;
  double zeta = 1.0;
  double delta = 0.5;
  double alpha = 0.6;
  double min_gain = 0.0;

  friend bool operator==(const BoostParams&, const BoostParams&) = default;
};

struct BoostedEnsemble {
  BoostLoss loss = BoostLoss::Logistic;
  double eta = 0.3;
  double base_score = 0.0;
  std::size_t outputs = 1;  // classes for softmax, else 1
  std::size_t features = 0;
  std::vector<std::vector<Tree>> rounds;  // rounds[r][output]

  friend bool operator==(const BoostedEnsemble&, const BoostedEnsemble&) = default;
};

struct BoostFit {
  BoostedEnsemble ensemble;
  /// Regularized objective before any tree, then after each accepted round.
  std::vector<double> objective;
};

/// Targets are class indices for logistic/softmax and real values for squared
/// loss. A round whose trees would raise the regularized objective
/// (loss + per tree: delta*T + zeta/2 * sum (eta w)^2 + alpha * sum |eta w|)
/// is discarded and boosting stops.
BoostFit boost_fit(const Matrix& features, std::span<const double> targets, const BoostParams& params,
                   std::size_t num_classes = 2, unsigned threads = 1);

/// base_score + sum over rounds of eta * tree(x), one entry per output.
Vector boost_scores(const BoostedEnsemble& ensemble, std::span<const double> x);

/// Logistic: 1 iff sigmoid(score) >= 0.5. Softmax: argmax, lowest on ties.
/// Squared: the rounded score.
int boost_predict(const BoostedEnsemble& ensemble, std::span<const double> x);
std::vector<int> boost_predict(const BoostedEnsemble& ensemble, const Matrix& features);

}  // namespace gcm
