#pragma once

#include "gcm/data.hpp"
#include "gcm/linalg.hpp"
#include "gcm/random.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace gcm {

/// Binary selection over feature columns.
class FeatureMask {
 public:
  FeatureMask() = default;
  explicit FeatureMask(std::vector<std::uint8_t> bits);
  static FeatureMask all_ones(std::size_t size);
  static FeatureMask from_string(std::string_view bits);

  std::size_t size() const { return bits_.size(); }
  std::size_t selected() const { return selected_; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool on);
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::vector<std::size_t> indices() const;
  std::string to_string() const;

  friend bool operator==(const FeatureMask& a, const FeatureMask& b) { return a.bits_ == b.bits_; }

 private:
  std::vector<std::uint8_t> bits_;
  std::size_t selected_ = 0;
};

/// Columns of `features` where the mask is set; an empty mask is an error.
Matrix apply_mask(const Matrix& features, const FeatureMask& mask);

// ---- schedules ---------------------------------------------------------

/// alpha - t * alpha / T
double r1_schedule(double t, double total, double alpha);

struct AbhcSchedule {
  double p = 2.0;  // shaping constant P
  std::size_t t_max = 100;
  double beta_min = 0.01;
  double beta_max = 0.1;
  double flip_fraction = 0.1;  // expected flips at N_hc = 1, as a fraction of D

  friend bool operator==(const AbhcSchedule&, const AbhcSchedule&) = default;
};

struct AbhcRates {
  double n_hc;
  double beta_hc;
};

/// N_hc = 1 - t^(1/P) / T_max^(1/P); beta_hc = beta_min + t (beta_max - beta_min) / T_max.
AbhcRates abhc_schedules(double t, const AbhcSchedule& schedule);

// ---- HOA position update -----------------------------------------------

/// One coordinate of the sine/cosine move toward the destination.
double update_position(double position, double destination, double r1, double r2, double r3, double r4);

inline constexpr double kPositionBound = 4.0;

struct HoaState {
  Matrix positions;          // agents x D
  Vector destination;        // best-so-far position
  FeatureMask best_mask;
  double best_fitness = -std::numeric_limits<double>::infinity();
  std::size_t iteration = 0;  // t
  std::size_t total_iterations = 100;  // T
  double alpha = 2.0;
};

/// Moves every agent coordinate with r2 ~ U[0, 2pi], r3 ~ U[0, 2],
/// r4 ~ U[0, 1] and r1 from r1_schedule(t, T, alpha); clamps to [-4, 4].
HoaState hoa_step(HoaState state, Rng& rng);

/// bit_j = 1 with probability sigmoid(position_j); an all-zero draw forces the
/// largest-probability bit on (lowest index on ties).
FeatureMask binarize(const Vector& position, Rng& rng);

// ---- fitness -----------------------------------------------------------

struct FitnessSpec {
  std::size_t k = 5;
  double weight = 0.9;  // omega_f: accuracy weight vs. sparsity bonus
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;

  friend bool operator==(const FitnessSpec&, const FitnessSpec&) = default;
};

/// Majority vote of the k nearest training rows (Euclidean); ties go to the
/// smallest class index. Distance ties keep the lower training index.
int knn_predict(const Matrix& train, std::span<const int> train_labels, std::span<const double> query,
                std::size_t k, int num_classes);

/// Holds the stratified train/validation split used by every fitness call.
class FitnessContext {
 public:
  FitnessContext(const FeatureMatrix& features, std::span<const int> labels, int num_classes,
                 const FitnessSpec& spec);

  /// weight * KNN validation accuracy + (1 - weight) * (1 - selected / D).
  double operator()(const FeatureMask& mask) const;

  std::size_t dimensions() const { return dims_; }
  double accuracy(const FeatureMask& mask) const;

 private:
  Matrix features_;
  std::vector<int> labels_;
  std::vector<std::size_t> train_idx_;
  std::vector<std::size_t> val_idx_;
  int num_classes_;
  std::size_t dims_;
  FitnessSpec spec_;
};

double fitness(const FeatureMask& mask, const FeatureMatrix& features, std::span<const int> labels,
               const FitnessSpec& spec, int num_classes = 0);

using FitnessFn = std::function<double(const FeatureMask&)>;

// ---- local search and full selection -----------------------------------

struct AbhcResult {
  FeatureMask mask;
  double fitness;
  std::vector<double> trace;  // incumbent fitness after each iteration
};

/// Adaptive beta-hill-climbing from `start`: per iteration, flip bits with
/// expected count max(1, round(N_hc * flip_fraction * D)), reset each bit to a
/// fresh uniform bit with probability beta_hc, accept when fitness >= incumbent.
AbhcResult abhc_search(const FeatureMask& start, const FitnessFn& fitness, const AbhcSchedule& schedule, Rng& rng);

struct SelectionConfig {
  std::size_t agents = 4;
  std::size_t iterations = 100;
  double alpha = 2.0;
  FitnessSpec fitness;
  AbhcSchedule schedule;
  std::uint64_t seed = 0;

  friend bool operator==(const SelectionConfig&, const SelectionConfig&) = default;
};

struct SelectionResult {
  FeatureMask mask;
  double fitness = 0.0;
  FeatureMask hoa_mask;  // best mask before local search
  double hoa_fitness = 0.0;
  std::vector<double> trace;  // best fitness per HOA iteration, then per AbhC iteration
};

/// Seed of the local-search stream used by select_features.
std::uint64_t abhc_stream_seed(std::uint64_t seed);

/// HOA over continuous positions with binarized evaluation, then AbhC
/// refinement of the best mask. Fitness of agents within one iteration may be
/// evaluated on `threads` workers; reduction is in agent order.
SelectionResult select_features(std::size_t dimensions, const FitnessFn& fitness, const SelectionConfig& config,
                                unsigned threads = 1);

SelectionResult select_features(const FeatureMatrix& features, std::span<const int> labels, int num_classes,
                                const SelectionConfig& config, unsigned threads = 1);

}  // namespace gcm
