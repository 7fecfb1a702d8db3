#pragma once

#include "gcm/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

namespace gcm {

/// Utterances x feature dimensions for one modality. Values are finite and
/// held in double precision; cols >= 1 even when there are no rows.
class FeatureMatrix {
 public:
  FeatureMatrix() : values_(0, 1) {}
  explicit FeatureMatrix(Matrix values);
  FeatureMatrix(std::size_t rows, std::size_t cols, std::span<const double> row_major);

  std::size_t rows() const { return static_cast<std::size_t>(values_.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(values_.cols()); }
  const Matrix& values() const { return values_; }
  double operator()(std::size_t r, std::size_t c) const { return values_(r, c); }
  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols(), cols()};
  }

  /// Rows in the given order (indices may repeat).
  FeatureMatrix select_rows(std::span<const std::size_t> indices) const;

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
    return a.values_.rows() == b.values_.rows() && a.values_.cols() == b.values_.cols() &&
           a.values_ == b.values_;
  }

 private:
  Matrix values_;
};

enum class FileFormat { Csv, Gcmf };

FeatureMatrix parse_feature_file(const std::filesystem::path& path, FileFormat format);
void write_feature_file(const FeatureMatrix& matrix, const std::filesystem::path& path, FileFormat format);

// In-memory codecs behind the file functions.
std::vector<std::uint8_t> encode_gcmf(const FeatureMatrix& matrix);
FeatureMatrix decode_gcmf(std::span<const std::uint8_t> bytes);
std::string encode_csv(const FeatureMatrix& matrix);
FeatureMatrix decode_csv(std::string_view text);

struct ModalityBundle {
  FeatureMatrix text;
  FeatureMatrix audio;
  FeatureMatrix visual;
  std::vector<int> labels;
  int num_classes = 2;

  std::size_t size() const { return labels.size(); }
  /// Rows in the given order across all three modalities and labels.
  ModalityBundle select(std::span<const std::size_t> indices) const;
};

/// Throws RowMismatch, LabelOutOfRange or NonFiniteValue.
void validate_bundle(const ModalityBundle& bundle);

struct SyntheticSpec {
  std::size_t utterances = 300;
  std::size_t text_dims = 16;
  std::size_t audio_dims = 16;
  std::size_t visual_dims = 16;
  int classes = 2;
  double separation = 6.0;
  double noise = 1.0;
  std::uint64_t seed = 0;
};

/// Per (class, modality) mean = separation * random unit direction; rows are
/// mean + noise * N(0, I). Labels are balanced (within one) and shuffled.
ModalityBundle generate_synthetic_dataset(const SyntheticSpec& spec);

/// Stratified split; rows keep their original relative order.
std::pair<ModalityBundle, ModalityBundle> train_test_split(const ModalityBundle& bundle, double test_fraction,
                                                          std::uint64_t seed);

/// One integer per line; blank lines are skipped.
std::vector<int> parse_labels(std::string_view text);
std::vector<int> read_labels(const std::filesystem::path& path);

/// Bundle directory: text.gcmf, audio.gcmf, visual.gcmf, labels.csv.
void write_bundle(const ModalityBundle& bundle, const std::filesystem::path& dir);
ModalityBundle read_bundle(const std::filesystem::path& dir, int num_classes = 0);

}  // namespace gcm
