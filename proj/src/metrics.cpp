#include "gcm/metrics.hpp"

#include "gcm/error.hpp"

#include <json.hpp>

namespace gcm {

MetricsReport compute_metrics(std::span<const int> predicted, std::span<const int> actual, int num_classes) {
  require(predicted.size() == actual.size() && !actual.empty(), ErrorCode::LengthMismatch,
          "predicted and actual must have equal, non-zero length");
  require(num_classes >= 1, ErrorCode::InvalidSpec, "num_classes must be >= 1");
  const auto c = static_cast<std::size_t>(num_classes);
  MetricsReport r;
  r.confusion.assign(c, std::vector<std::size_t>(c, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    require(actual[i] >= 0 && actual[i] < num_classes && predicted[i] >= 0 && predicted[i] < num_classes,
            ErrorCode::LabelOutOfRange, "label outside [0, num_classes)");
    ++r.confusion[static_cast<std::size_t>(actual[i])][static_cast<std::size_t>(predicted[i])];
    correct += actual[i] == predicted[i];
  }
  const auto n = static_cast<double>(actual.size());
  r.accuracy = static_cast<double>(correct) / n;

  std::size_t present = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t tp = r.confusion[k][k], fp = 0, fn = 0;
    for (std::size_t j = 0; j < c; ++j) {
      if (j == k) continue;
      fp += r.confusion[j][k];
      fn += r.confusion[k][j];
    }
    LabelMetrics m;
    m.support = tp + fn;
    m.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (m.support > 0) {
      ++present;
      r.macro_f1 += m.f1;
      r.weighted_f1 += m.f1 * static_cast<double>(m.support);
    }
    r.per_label.push_back(m);
  }
  r.macro_f1 /= static_cast<double>(present);
  r.weighted_f1 /= n;
  return r;
}

std::string metrics_json(const MetricsReport& report) {
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  auto& labels = j["per_label"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < report.per_label.size(); ++k) {
    const auto& m = report.per_label[k];
    labels.push_back({{"label", k}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
                      {"support", m.support}});
  }
  j["macro_f1"] = report.macro_f1;
  j["weighted_f1"] = report.weighted_f1;
  j["confusion"] = report.confusion;
  return j.dump(2) + "\n";
}

}  // namespace gcm
