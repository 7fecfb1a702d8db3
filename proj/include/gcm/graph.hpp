#pragma once

#include "gcm/data.hpp"
#include "gcm/linalg.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace gcm {

/// Thresholded cosine-similarity graph over utterances. No self-loops.
struct GraphContext {
  std::size_t nodes = 0;
  std::vector<std::uint8_t> adjacency;  // nodes x nodes, row-major 0/1
  std::vector<std::vector<std::size_t>> neighbor_lists;
  double threshold = 0.7;

  bool edge(std::size_t i, std::size_t j) const { return adjacency[i * nodes + j] != 0; }
  std::size_t edge_count() const;  // undirected edges
};

double cosine_similarity(std::span<const double> u, std::span<const double> v);
inline double cosine_similarity(const Vector& u, const Vector& v) {
  return cosine_similarity(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
                           std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
}

/// Edge (i, j), i != j, iff cos(row_i, row_j) >= threshold.
GraphContext build_adjacency(const FeatureMatrix& features, double threshold);

enum class AggregatorKind { Mean, Lstm };

/// Single-layer LSTM cell; gate blocks stacked as [input, forget, cell, output].
struct LstmCell {
  Matrix w_input;   // 4H x in
  Matrix w_hidden;  // 4H x H
  Vector bias;      // 4H

  Eigen::Index hidden() const { return w_hidden.cols(); }
};

/// One sample-and-aggregate layer. The LSTM aggregator maps its final state
/// to the neighborhood vector through `agg_weight`/`agg_bias`; the update maps
/// concat(self, neighborhood) through `weight`/`bias`.
struct FreLayer {
  LstmCell lstm;
  Matrix agg_weight;  // in x H
  Vector agg_bias;    // in
  Matrix weight;      // out x 2*in
  Vector bias;        // out

  Eigen::Index input_dim() const { return weight.cols() / 2; }
  Eigen::Index output_dim() const { return weight.rows(); }
};

struct AggregatorParams {
  AggregatorKind kind = AggregatorKind::Lstm;
  std::vector<FreLayer> layers;
  Matrix transform_weight;  // out x dim(h_K)
  Vector transform_bias;

  std::size_t depth() const { return layers.size(); }
  Eigen::Index input_dim() const { return layers.front().input_dim(); }
  Eigen::Index embedding_dim() const { return layers.back().output_dim(); }
  Eigen::Index output_dim() const { return transform_weight.rows(); }

  /// Same shapes, all zeros (gradient accumulator).
  AggregatorParams zeros_like() const;
  /// this += scale * other, parameter by parameter.
  void axpy(double scale, const AggregatorParams& other);
  std::vector<double*> parameter_pointers();
  bool all_finite() const;

  friend bool operator==(const AggregatorParams&, const AggregatorParams&);
};

AggregatorParams init_aggregator(AggregatorKind kind, Eigen::Index input_dim, Eigen::Index hidden_dim,
                                 std::size_t depth, Eigen::Index output_dim, std::uint64_t seed);

/// Mean: elementwise average. LSTM: runs the layer's cell over the states in
/// the given order and returns sigmoid(agg_weight * h_last + agg_bias).
Vector aggregate(std::span<const Vector> neighbor_states, const AggregatorParams& params, std::size_t layer);

/// Everything the backward pass needs from one recalibration forward pass.
struct FreForward {
  struct LstmStep {
    Vector gates;  // activated [i, f, g, o]
    Vector c;
    Vector h;
  };
  struct NodeCache {
    std::vector<std::size_t> sampled;  // neighbor order fed to the aggregator
    std::vector<LstmStep> steps;
    Vector neighborhood;  // aggregated neighborhood vector
    Vector activated;     // sigmoid(pre) before normalization
    double norm = 0.0;
  };
  std::vector<Matrix> states;  // states[k] = h_k for all nodes; states[0] = input
  std::vector<std::vector<NodeCache>> caches;  // [layer][node]
  Matrix output;               // sigmoid(W_T h_K + b_T)

  const Matrix& embeddings() const { return states.back(); }
};

/// Per node, per layer: sample <= fanout neighbors, aggregate, update with
/// sigmoid(W_k concat(h_{k-1}, h_N) + b_k), L2-normalize. Sampling and LSTM
/// order are seeded by a hash of the node's input row, so permuting input
/// rows permutes the output rows. Isolated nodes aggregate a zero vector.
FreForward fre_forward(const FeatureMatrix& features, const GraphContext& graph, const AggregatorParams& params,
                       std::span<const std::size_t> fanouts, std::uint64_t seed, unsigned threads = 1);

FeatureMatrix recalibrate(const FeatureMatrix& features, const GraphContext& graph, const AggregatorParams& params,
                          std::span<const std::size_t> fanouts, std::uint64_t seed, unsigned threads = 1);

/// Gradient of a loss w.r.t. every parameter given dLoss/d(h_K) for all nodes
/// and, optionally, dLoss/d(output).
AggregatorParams fre_backward(const FreForward& forward, const AggregatorParams& params,
                              const Matrix& d_embeddings, const Matrix* d_output = nullptr);

struct GraphLossConfig {
  std::size_t walk_length = 5;
  std::size_t walks_per_node = 10;
  std::size_t negatives = 5;  // Q
  std::uint64_t seed = 0;
};

/// -log sigmoid(z_u.z_v) - Q * mean_n log sigmoid(-z_u.z_n)
double graph_loss(const Vector& z_u, const Vector& z_v, std::span<const Vector> negatives, std::size_t q);

struct GraphLossGradient {
  Vector d_u;
  Vector d_v;
  std::vector<Vector> d_negatives;
};
GraphLossGradient graph_loss_gradient(const Vector& z_u, const Vector& z_v, std::span<const Vector> negatives,
                                      std::size_t q);

struct FreTrainingResult {
  AggregatorParams params;
  std::vector<double> epoch_losses;  // mean graph loss per epoch, before that epoch's update
};

/// Unsupervised training: positive pairs from random walks, Q uniform
/// negatives per pair, one full-graph gradient step per epoch.
FreTrainingResult train_fre(const FeatureMatrix& features, const GraphContext& graph, AggregatorParams params,
                            const GraphLossConfig& loss_cfg, std::span<const std::size_t> fanouts,
                            std::size_t epochs, double learning_rate);

}  // namespace gcm
