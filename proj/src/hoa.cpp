#include "gcm/hoa.hpp"

#include "gcm/error.hpp"
#include "gcm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace gcm {

FeatureMask::FeatureMask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) {
    b = b ? 1 : 0;
    selected_ += b;
  }
}

FeatureMask FeatureMask::all_ones(std::size_t size) { return FeatureMask(std::vector<std::uint8_t>(size, 1)); }

FeatureMask FeatureMask::from_string(std::string_view bits) {
  std::vector<std::uint8_t> out;
  out.reserve(bits.size());
  for (char c : bits) {
    if (c != '0' && c != '1') fail(ErrorCode::Malformed, "mask string may only contain '0' and '1'");
    out.push_back(c == '1');
  }
  return FeatureMask(std::move(out));
}

void FeatureMask::set(std::size_t i, bool on) {
  const std::uint8_t v = on ? 1 : 0;
  if (bits_[i] != v) {
    selected_ = on ? selected_ + 1 : selected_ - 1;
    bits_[i] = v;
  }
}

std::vector<std::size_t> FeatureMask::indices() const {
  std::vector<std::size_t> out;
  out.reserve(selected_);
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) out.push_back(i);
  }
  return out;
}

std::string FeatureMask::to_string() const {
  std::string s(bits_.size(), '0');
  for (std::size_t i = 0; i < bits_.size(); ++i) {
    if (bits_[i]) s[i] = '1';
  }
  return s;
}

Matrix apply_mask(const Matrix& features, const FeatureMask& mask) {
  require(static_cast<std::size_t>(features.cols()) == mask.size(), ErrorCode::DimensionMismatch,
          "mask length does not match the feature width");
  require(mask.selected() > 0, ErrorCode::EmptyMask, "mask selects no columns");
  const auto idx = mask.indices();
  Matrix out(features.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    out.col(static_cast<Eigen::Index>(j)) = features.col(static_cast<Eigen::Index>(idx[j]));
  }
  return out;
}

double r1_schedule(double t, double total, double alpha) { return alpha - t * alpha / total; }

AbhcRates abhc_schedules(double t, const AbhcSchedule& s) {
  const double n = 1.0 - std::pow(t, 1.0 / s.p) / std::pow(static_cast<double>(s.t_max), 1.0 / s.p);
  const double beta = s.beta_min + t * (s.beta_max - s.beta_min) / static_cast<double>(s.t_max);
  return {n, beta};
}

double update_position(double position, double destination, double r1, double r2, double r3, double r4) {
  const double wave = r4 < 0.5 ? std::sin(r2) : std::cos(r2);
  return position + r1 * wave * std::abs(r3 * destination - position);
}

HoaState hoa_step(HoaState state, Rng& rng) {
  const double r1 = r1_schedule(static_cast<double>(state.iteration), static_cast<double>(state.total_iterations),
                                state.alpha);
  Matrix& p = state.positions;
  require(state.destination.size() == p.cols(), ErrorCode::DimensionMismatch, "destination width mismatch");
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (Eigen::Index j = 0; j < p.cols(); ++j) {
      const double r2 = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const double r3 = uniform(rng, 0.0, 2.0);
      const double r4 = uniform01(rng);
      p(i, j) = std::clamp(update_position(p(i, j), state.destination[j], r1, r2, r3, r4), -kPositionBound,
                           kPositionBound);
    }
  }
  return state;
}

FeatureMask binarize(const Vector& position, Rng& rng) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(position.size()));
  bool any = false;
  for (Eigen::Index j = 0; j < position.size(); ++j) {
    bits[static_cast<std::size_t>(j)] = uniform01(rng) < sigmoid(position[j]);
    any = any || bits[static_cast<std::size_t>(j)];
  }
  if (!any && position.size() > 0) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < position.size(); ++j) {
      if (sigmoid(position[j]) > sigmoid(position[best])) best = j;
    }
    bits[static_cast<std::size_t>(best)] = 1;
  }
  return FeatureMask(std::move(bits));
}

int knn_predict(const Matrix& train, std::span<const int> train_labels, std::span<const double> query,
                std::size_t k, int num_classes) {
  require(static_cast<std::size_t>(train.rows()) == train_labels.size(), ErrorCode::RowMismatch,
          "training rows != labels");
  require(static_cast<std::size_t>(train.cols()) == query.size(), ErrorCode::DimensionMismatch,
          "query width != training width");
  require(train.rows() > 0 && k >= 1, ErrorCode::InvalidSpec, "KNN needs training rows and k >= 1");
  const Eigen::Map<const Eigen::RowVectorXd> q(query.data(), static_cast<Eigen::Index>(query.size()));
  const Eigen::VectorXd dist = (train.rowwise() - q).rowwise().squaredNorm();
  std::vector<std::pair<double, std::size_t>> order(static_cast<std::size_t>(train.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = {dist[static_cast<Eigen::Index>(i)], i};
  const std::size_t kk = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end());
  std::vector<int> votes(static_cast<std::size_t>(num_classes), 0);
  for (std::size_t i = 0; i < kk; ++i) {
    const int label = train_labels[order[i].second];
    require(label >= 0 && label < num_classes, ErrorCode::LabelOutOfRange, "label outside [0, num_classes)");
    ++votes[static_cast<std::size_t>(label)];
  }
  return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

FitnessContext::FitnessContext(const FeatureMatrix& features, std::span<const int> labels, int num_classes,
                               const FitnessSpec& spec)
    : features_(features.values()), labels_(labels.begin(), labels.end()), dims_(features.cols()), spec_(spec) {
  require(features.rows() == labels.size(), ErrorCode::RowMismatch, "feature rows != labels");
  require(spec.k >= 1 && spec.k % 2 == 1, ErrorCode::InvalidSpec, "k must be odd and >= 1");
  require(spec.weight >= 0.0 && spec.weight <= 1.0, ErrorCode::InvalidSpec, "fitness weight must lie in [0, 1]");
  require(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0, ErrorCode::InvalidSpec,
          "validation fraction must lie in (0, 1)");
  num_classes_ = num_classes > 0 ? num_classes : *std::max_element(labels_.begin(), labels_.end()) + 1;

  Rng rng(derive_seed(spec.seed, "fitness-split"));
  for (int c = 0; c < num_classes_; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels_.size(); ++i) {
      if (labels_[i] == c) members.push_back(i);
    }
    shuffle(std::span<std::size_t>(members), rng);
    auto n_val = static_cast<std::size_t>(std::llround(spec.validation_fraction * static_cast<double>(members.size())));
    if (members.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, members.size() - 1);
    val_idx_.insert(val_idx_.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_idx_.insert(train_idx_.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  std::sort(val_idx_.begin(), val_idx_.end());
  std::sort(train_idx_.begin(), train_idx_.end());
  require(!val_idx_.empty() && !train_idx_.empty(), ErrorCode::InvalidSpec,
          "too few rows for a train/validation split");
}

double FitnessContext::accuracy(const FeatureMask& mask) const {
  require(mask.size() == dims_, ErrorCode::DimensionMismatch, "mask length does not match the feature width");
  require(mask.selected() >= 1, ErrorCode::EmptyMask, "fitness needs at least one selected feature");
  const auto cols = mask.indices();
  Matrix train(static_cast<Eigen::Index>(train_idx_.size()), static_cast<Eigen::Index>(cols.size()));
  std::vector<int> train_labels(train_idx_.size());
  for (std::size_t i = 0; i < train_idx_.size(); ++i) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      train(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          features_(static_cast<Eigen::Index>(train_idx_[i]), static_cast<Eigen::Index>(cols[j]));
    }
    train_labels[i] = labels_[train_idx_[i]];
  }
  std::size_t correct = 0;
  std::vector<double> query(cols.size());
  for (std::size_t v : val_idx_) {
    for (std::size_t j = 0; j < cols.size(); ++j) {
      query[j] = features_(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(cols[j]));
    }
    if (knn_predict(train, train_labels, query, spec_.k, num_classes_) == labels_[v]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(val_idx_.size());
}

double FitnessContext::operator()(const FeatureMask& mask) const {
  const double acc = accuracy(mask);
  const double sparsity = 1.0 - static_cast<double>(mask.selected()) / static_cast<double>(dims_);
  return spec_.weight * acc + (1.0 - spec_.weight) * sparsity;
}

double fitness(const FeatureMask& mask, const FeatureMatrix& features, std::span<const int> labels,
               const FitnessSpec& spec, int num_classes) {
  require(mask.selected() >= 1, ErrorCode::EmptyMask, "fitness needs at least one selected feature");
  return FitnessContext(features, labels, num_classes, spec)(mask);
}

AbhcResult abhc_search(const FeatureMask& start, const FitnessFn& fitness, const AbhcSchedule& schedule, Rng& rng) {
  require(schedule.t_max >= 1 && schedule.p >= 1.0, ErrorCode::InvalidSpec, "AbhC needs T_max >= 1 and P >= 1");
  require(0.0 <= schedule.beta_min && schedule.beta_min <= schedule.beta_max && schedule.beta_max <= 1.0,
          ErrorCode::InvalidSpec, "AbhC beta bounds must satisfy 0 <= min <= max <= 1");
  require(start.selected() >= 1, ErrorCode::EmptyMask, "AbhC start mask must select a feature");
  const std::size_t dims = start.size();
  AbhcResult res{start, fitness(start), {}};
  std::vector<std::size_t> slots(dims);
  for (std::size_t t = 1; t <= schedule.t_max; ++t) {
    const AbhcRates rates = abhc_schedules(static_cast<double>(t), schedule);
    const auto flips = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(rates.n_hc * schedule.flip_fraction * static_cast<double>(dims))), 1,
        dims);
    FeatureMask cand = res.mask;
    // N-operator: flip `flips` distinct positions.
    std::iota(slots.begin(), slots.end(), 0);
    for (std::size_t i = 0; i < flips; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, dims - i));
      std::swap(slots[i], slots[j]);
      cand.set(slots[i], !cand[slots[i]]);
    }
    // beta-operator: uniform reset per bit.
    for (std::size_t j = 0; j < dims; ++j) {
      if (uniform01(rng) < rates.beta_hc) cand.set(j, uniform01(rng) < 0.5);
    }
    if (cand.selected() == 0) cand.set(static_cast<std::size_t>(uniform_index(rng, dims)), true);
    const double f = fitness(cand);
    if (f >= res.fitness) {
      res.mask = std::move(cand);
      res.fitness = f;
    }
    res.trace.push_back(res.fitness);
  }
  return res;
}

std::uint64_t abhc_stream_seed(std::uint64_t seed) { return derive_seed(seed, "abhc"); }

SelectionResult select_features(std::size_t dimensions, const FitnessFn& fitness, const SelectionConfig& cfg,
                                unsigned threads) {
  require(cfg.agents >= 1 && cfg.iterations >= 1, ErrorCode::InvalidSpec, "HOA needs agents >= 1, iterations >= 1");
  require(dimensions >= 1, ErrorCode::InvalidSpec, "HOA needs at least one dimension");
  HoaState state;
  state.total_iterations = cfg.iterations;
  state.alpha = cfg.alpha;
  state.positions.resize(static_cast<Eigen::Index>(cfg.agents), static_cast<Eigen::Index>(dimensions));
  Rng init_rng(derive_seed(cfg.seed, "hoa-init"));
  for (Eigen::Index i = 0; i < state.positions.size(); ++i) {
    state.positions.data()[i] = uniform(init_rng, -kPositionBound, kPositionBound);
  }
  state.destination = state.positions.row(0).transpose();
  Rng step_rng(derive_seed(cfg.seed, "hoa-step"));
  Rng bin_rng(derive_seed(cfg.seed, "hoa-binarize"));

  SelectionResult out;
  std::vector<FeatureMask> masks(cfg.agents);
  std::vector<double> scores(cfg.agents);
  for (std::size_t t = 0; t < cfg.iterations; ++t) {
    if (t > 0) {
      state.iteration = t;
      state = hoa_step(std::move(state), step_rng);
    }
    for (std::size_t i = 0; i < cfg.agents; ++i) {
      masks[i] = binarize(state.positions.row(static_cast<Eigen::Index>(i)).transpose(), bin_rng);
    }
    parallel_for(cfg.agents, threads, [&](std::size_t i) { scores[i] = fitness(masks[i]); });
    for (std::size_t i = 0; i < cfg.agents; ++i) {
      if (scores[i] > state.best_fitness) {
        state.best_fitness = scores[i];
        state.best_mask = masks[i];
        state.destination = state.positions.row(static_cast<Eigen::Index>(i)).transpose();
      }
    }
    out.trace.push_back(state.best_fitness);
  }
  out.hoa_mask = state.best_mask;
  out.hoa_fitness = state.best_fitness;

  Rng abhc_rng(abhc_stream_seed(cfg.seed));
  AbhcResult local = abhc_search(state.best_mask, fitness, cfg.schedule, abhc_rng);
  out.trace.insert(out.trace.end(), local.trace.begin(), local.trace.end());
  out.mask = std::move(local.mask);
  out.fitness = local.fitness;
  return out;
}

SelectionResult select_features(const FeatureMatrix& features, std::span<const int> labels, int num_classes,
                                const SelectionConfig& config, unsigned threads) {
  const FitnessContext ctx(features, labels, num_classes, config.fitness);
  return select_features(
      features.cols(), [&ctx](const FeatureMask& m) { return ctx(m); }, config, threads);
}

}  // namespace gcm
