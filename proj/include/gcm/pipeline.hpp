#pragma once

#include "gcm/convxgb.hpp"
#include "gcm/data.hpp"
#include "gcm/encoder.hpp"
#include "gcm/graph.hpp"
#include "gcm/hoa.hpp"
#include "gcm/metrics.hpp"

#include <array>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace gcm {

enum class Task { SentimentBinary, EmotionMulticlass };

struct FreConfig {
  bool enabled = true;
  double threshold = 0.7;  // K_threshold
  AggregatorKind aggregator = AggregatorKind::Lstm;
  std::size_t depth = 2;
  std::vector<std::size_t> fanouts{10, 5};
  Eigen::Index hidden_dim = 32;
  Eigen::Index output_dim = 0;  // 0: same as the modality's input width
  std::size_t walk_length = 5;
  std::size_t walks_per_node = 10;
  std::size_t negatives = 5;
  std::size_t epochs = 50;
  double learning_rate = 5.0;

  friend bool operator==(const FreConfig&, const FreConfig&) = default;
};

struct EncoderConfig {
  Eigen::Index hidden = 300;
  Eigen::Index dense = 100;  // d
  double gru_dropout = 0.5;
  double dense_dropout = 0.7;
  std::size_t segment_length = 10;  // utterances per sequence
  std::size_t epochs = 10;
  double learning_rate = 1e-3;

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

struct HoaConfig {
  bool enabled = true;
  SelectionConfig selection;  // its seed is derived from the pipeline seed

  friend bool operator==(const HoaConfig&, const HoaConfig&) = default;
};

struct ConvConfig {
  Eigen::Index filters = 4;
  Eigen::Index width = 3;
  std::size_t pool_window = 2;
  std::size_t pool_stride = 2;

  friend bool operator==(const ConvConfig&, const ConvConfig&) = default;
};

struct PipelineConfig {
  Task task = Task::SentimentBinary;
  std::uint64_t seed = 0;
  FreConfig fre;
  EncoderConfig encoder;
  bool icim_enabled = true;
  HoaConfig hoa;
  ConvConfig conv;
  BoostParams boost;  // `loss` follows `task`

  /// Throws ConfigInvalid on out-of-range values.
  void validate() const;

  friend bool operator==(const PipelineConfig&, const PipelineConfig&) = default;
};

/// Strict JSON: missing keys keep their defaults, unknown keys and wrong
/// types throw ConfigInvalid.
PipelineConfig parse_config(const std::string& json_text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_json(const PipelineConfig& config);

/// Small hidden sizes and short schedules for tests and quick runs.
PipelineConfig desk_config();

struct ModalityModel {
  Eigen::Index input_dim = 0;
  AggregatorParams fre;  // unused when FRE is disabled
  Vector input_mean;     // encoder-input standardization, from training rows
  Vector input_scale;
  EncoderParams encoder;

  friend bool operator==(const ModalityModel& a, const ModalityModel& b) {
    return a.input_dim == b.input_dim && a.fre == b.fre && same_values(a.input_mean, b.input_mean) &&
           same_values(a.input_scale, b.input_scale) && a.encoder == b.encoder;
  }
};

struct TrainedModel {
  static constexpr int kFormatVersion = 1;

  PipelineConfig config;
  int num_classes = 2;
  std::array<ModalityModel, 3> modalities;  // text, audio, visual
  FeatureMask mask;  // over fused columns
  ConvParams conv;
  BoostedEnsemble ensemble;

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

struct StageRecord {
  std::string stage;
  std::string detail;  // shapes and training metrics
};

struct TrainOptions {
  unsigned threads = 1;
  std::function<void(const StageRecord&)> log;
};

struct TrainResult {
  TrainedModel model;
  std::vector<StageRecord> stages;
  MetricsReport training_metrics;
};

/// FRE -> encoder -> ICIM -> HOA -> ConvXGB.
TrainResult train_pipeline(const ModalityBundle& bundle, const PipelineConfig& config, const TrainOptions& options = {});

/// Fused (and masked, when `apply_selection`) features for every utterance.
Matrix fused_features(const TrainedModel& model, const ModalityBundle& bundle, bool apply_selection,
                      unsigned threads = 1);

std::vector<int> predict(const TrainedModel& model, const ModalityBundle& bundle, unsigned threads = 1);
MetricsReport evaluate(const TrainedModel& model, const ModalityBundle& bundle, unsigned threads = 1);

std::string model_json(const TrainedModel& model);
TrainedModel parse_model(const std::string& json_text);
void save_model(const TrainedModel& model, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

/// Multi-line human-readable description.
std::string model_summary(const TrainedModel& model);

}  // namespace gcm
