#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace gcm {

struct LabelMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;  // count in `actual`

  friend bool operator==(const LabelMetrics&, const LabelMetrics&) = default;
};

struct MetricsReport {
  double accuracy = 0.0;
  std::vector<LabelMetrics> per_label;
  double macro_f1 = 0.0;     // over classes present in `actual`
  double weighted_f1 = 0.0;  // support-weighted
  std::vector<std::vector<std::size_t>> confusion;  // [actual][predicted]

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Zero-denominator precision, recall and F1 are 0. Throws LengthMismatch on
/// unequal or empty inputs and LabelOutOfRange for labels outside [0, classes).
MetricsReport compute_metrics(std::span<const int> predicted, std::span<const int> actual, int num_classes);

/// Keys: accuracy, per_label, macro_f1, weighted_f1, confusion.
std::string metrics_json(const MetricsReport& report);

}  // namespace gcm
