#include "gcm/pipeline.hpp"

#include "gcm/error.hpp"
#include "gcm/icim.hpp"
#include "gcm/parallel.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace gcm {

PipelineConfig desk_config() {
  PipelineConfig c;
  c.fre.hidden_dim = 16;
  c.fre.epochs = 20;
  c.encoder.hidden = 16;
  c.encoder.dense = 8;
  c.encoder.epochs = 10;
  c.encoder.learning_rate = 5e-3;
  c.hoa.selection.iterations = 20;
  c.hoa.selection.schedule.t_max = 20;
  c.boost.rounds = 50;
  return c;
}

namespace {

constexpr std::array<const char*, 3> kNames{"text", "audio", "visual"};

const FeatureMatrix& modality(const ModalityBundle& b, std::size_t m) {
  return m == 0 ? b.text : m == 1 ? b.audio : b.visual;
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

struct Segment {
  Eigen::Index start;
  Eigen::Index length;
};

std::vector<Segment> segments(Eigen::Index rows, std::size_t length) {
  std::vector<Segment> out;
  const auto len = static_cast<Eigen::Index>(length);
  for (Eigen::Index s = 0; s < rows; s += len) out.push_back({s, std::min(len, rows - s)});
  return out;
}

std::uint64_t fre_sample_seed(std::uint64_t seed, std::size_t m) { return derive_seed(seed, "fre-sample", m); }

Matrix fuse(const std::array<Matrix, 3>& d, bool icim) {
  if (icim) return fuse_enriched(d[0], d[1], d[2]);
  Matrix out(d[0].rows(), d[0].cols() + d[1].cols() + d[2].cols());
  out << d[0], d[1], d[2];
  return out;
}

void fit_standardizer(ModalityModel& mm, const Matrix& g) {
  mm.input_mean = g.colwise().mean().transpose();
  mm.input_scale.resize(g.cols());
  for (Eigen::Index j = 0; j < g.cols(); ++j) {
    const double sd = std::sqrt((g.col(j).array() - mm.input_mean[j]).square().mean());
    mm.input_scale[j] = sd > 1e-12 ? 1.0 / sd : 1.0;
  }
}

Matrix standardize(const ModalityModel& mm, const Matrix& g) {
  return ((g.rowwise() - mm.input_mean.transpose()).array().rowwise() * mm.input_scale.transpose().array()).matrix();
}

/// Standardized FRE output (or raw features when FRE is off) for one modality.
Matrix encoder_input(const TrainedModel& model, const FeatureMatrix& x, std::size_t m, unsigned threads) {
  const auto& cfg = model.config.fre;
  const auto& mm = model.modalities[m];
  if (!cfg.enabled) return standardize(mm, x.values());
  const GraphContext graph = build_adjacency(x, cfg.threshold);
  return standardize(
      mm, recalibrate(x, graph, mm.fre, cfg.fanouts, fre_sample_seed(model.config.seed, m), threads).values());
}

/// Eval-mode encoder + fusion over consecutive segments.
Matrix fuse_sequences(const TrainedModel& model, const std::array<Matrix, 3>& g, unsigned threads) {
  const auto segs = segments(g[0].rows(), model.config.encoder.segment_length);
  std::vector<Matrix> parts(segs.size());
  parallel_for(segs.size(), threads, [&](std::size_t s) {
    std::array<Matrix, 3> d;
    for (std::size_t m = 0; m < 3; ++m) {
      d[m] = encoder_forward(g[m].middleRows(segs[s].start, segs[s].length), model.modalities[m].encoder, Mode::Eval, 0)
                 .output;
    }
    parts[s] = fuse(d, model.config.icim_enabled);
  });
  Matrix out(g[0].rows(), parts.empty() ? 0 : parts[0].cols());
  for (std::size_t s = 0; s < segs.size(); ++s) out.middleRows(segs[s].start, segs[s].length) = parts[s];
  return out;
}

// ---- supervised phase ---------------------------------------------------

/// Adam over a fixed list of parameter tensors.
class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  void step(const std::vector<std::pair<double*, Eigen::Index>>& params,
            const std::vector<std::pair<double*, Eigen::Index>>& grads) {
    if (m_.empty()) {
      for (const auto& [p, n] : params) {
        m_.emplace_back(static_cast<std::size_t>(n), 0.0);
        v_.emplace_back(static_cast<std::size_t>(n), 0.0);
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      double* p = params[k].first;
      const double* g = grads[k].first;
      for (Eigen::Index i = 0; i < params[k].second; ++i) {
        auto& m = m_[k][static_cast<std::size_t>(i)];
        auto& v = v_[k][static_cast<std::size_t>(i)];
        m = kBeta1 * m + (1.0 - kBeta1) * g[i];
        v = kBeta2 * v + (1.0 - kBeta2) * g[i] * g[i];
        p[i] -= lr_ * (m / c1) / (std::sqrt(v / c2) + 1e-8);
      }
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  double lr_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct LinearHead {
  Matrix weight;  // classes x features
  Vector bias;
};

std::vector<std::pair<double*, Eigen::Index>> tensors(std::array<EncoderParams, 3>& enc, ConvParams& conv,
                                                      LinearHead& head) {
  std::vector<std::pair<double*, Eigen::Index>> out;
  for (auto& e : enc) e.visit([&](double* p, Eigen::Index n) { out.emplace_back(p, n); });
  out.emplace_back(conv.kernels.data(), conv.kernels.size());
  out.emplace_back(conv.bias.data(), conv.bias.size());
  out.emplace_back(head.weight.data(), head.weight.size());
  out.emplace_back(head.bias.data(), head.bias.size());
  return out;
}

/// Encoders, conv and a temporary softmax head trained with cross-entropy.
/// The attention blocks of the fused vector are treated as constants.
double supervised_phase(TrainedModel& model, const std::array<Matrix, 3>& g, std::span<const int> labels,
                        unsigned threads) {
  const auto& cfg = model.config;
  const auto segs = segments(g[0].rows(), cfg.encoder.segment_length);
  const Eigen::Index d = cfg.encoder.dense;
  const std::uint64_t seed = derive_seed(cfg.seed, "supervised");

  std::array<EncoderParams, 3> enc;
  for (std::size_t m = 0; m < 3; ++m) enc[m] = model.modalities[m].encoder;
  const std::size_t fused = static_cast<std::size_t>((cfg.icim_enabled ? 9 : 3) * d);
  const auto feat = static_cast<Eigen::Index>(conv_feature_length(fused, model.conv));
  Rng head_rng(derive_seed(seed, "head"));
  LinearHead head{glorot_uniform(model.num_classes, feat, head_rng), Vector::Zero(model.num_classes)};
  Adam adam(cfg.encoder.learning_rate);

  std::vector<std::size_t> order(segs.size());
  double last_loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.encoder.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng order_rng(derive_seed(seed, "order", epoch));
    shuffle(std::span<std::size_t>(order), order_rng);
    double epoch_loss = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const Segment seg = segs[order[step]];
      const std::uint64_t step_seed = derive_seed(seed, "dropout", epoch * segs.size() + order[step]);
      std::array<EncoderForward, 3> fw;
      parallel_for(3, threads, [&](std::size_t m) {
        fw[m] = encoder_forward(g[m].middleRows(seg.start, seg.length), enc[m], Mode::Train, derive_seed(step_seed, m));
      });
      const Matrix h = fuse({fw[0].output, fw[1].output, fw[2].output}, cfg.icim_enabled);

      ConvParams d_conv{Matrix::Zero(model.conv.filters(), model.conv.width()), Vector::Zero(model.conv.filters()),
                        model.conv.pool_window, model.conv.pool_stride};
      LinearHead d_head{Matrix::Zero(head.weight.rows(), head.weight.cols()), Vector::Zero(head.bias.size())};
      Matrix d_h(h.rows(), h.cols());
      const double inv = 1.0 / static_cast<double>(seg.length);
      for (Eigen::Index i = 0; i < h.rows(); ++i) {
        const std::span<const double> row(h.data() + i * h.cols(), static_cast<std::size_t>(h.cols()));
        const ConvForward cf = conv_forward(row, model.conv);
        const Vector p = softmax(head.weight * cf.features + head.bias);
        const int y = labels[static_cast<std::size_t>(seg.start + i)];
        epoch_loss -= std::log(std::max(p[y], 1e-300));
        Vector d_logits = p * inv;
        d_logits[y] -= inv;
        d_head.weight += d_logits * cf.features.transpose();
        d_head.bias += d_logits;
        const Vector d_feat = head.weight.transpose() * d_logits;
        Vector d_row;
        const ConvGradient cg = conv_backward(cf, row, model.conv, d_feat, &d_row);
        d_conv.kernels += cg.d_kernels;
        d_conv.bias += cg.d_bias;
        d_h.row(i) = d_row.transpose();
      }
      std::array<EncoderParams, 3> grads;
      parallel_for(3, threads, [&](std::size_t m) {
        grads[m] = encoder_backward(fw[m], enc[m], d_h.middleCols(static_cast<Eigen::Index>(m) * d, d));
      });
      adam.step(tensors(enc, model.conv, head), tensors(grads, d_conv, d_head));
    }
    last_loss = epoch_loss / static_cast<double>(g[0].rows());
  }
  for (std::size_t m = 0; m < 3; ++m) model.modalities[m].encoder = std::move(enc[m]);
  return last_loss;
}

void check_bundle(const TrainedModel& model, const ModalityBundle& bundle) {
  validate_bundle(bundle);
  require(bundle.size() >= 1, ErrorCode::InvalidSpec, "bundle has no utterances");
  for (std::size_t m = 0; m < 3; ++m) {
    require(static_cast<Eigen::Index>(modality(bundle, m).cols()) == model.modalities[m].input_dim,
            ErrorCode::DimensionMismatch,
            std::string(kNames[m]) + " width does not match the model (" + std::to_string(modality(bundle, m).cols()) +
                " vs " + std::to_string(model.modalities[m].input_dim) + ")");
  }
}

}  // namespace

TrainResult train_pipeline(const ModalityBundle& bundle, const PipelineConfig& config, const TrainOptions& options) {
  config.validate();
  validate_bundle(bundle);
  require(bundle.size() >= 2, ErrorCode::InvalidSpec, "training needs at least two utterances");
  require(config.task != Task::SentimentBinary || bundle.num_classes == 2, ErrorCode::ConfigInvalid,
          "sentiment-binary needs exactly two classes");
  const unsigned threads = options.threads;

  TrainResult result;
  auto log = [&](std::string stage, std::string detail) {
    result.stages.push_back({std::move(stage), std::move(detail)});
    if (options.log) options.log(result.stages.back());
  };

  TrainedModel& model = result.model;
  model.config = config;
  model.config.boost.loss = config.task == Task::SentimentBinary ? BoostLoss::Logistic : BoostLoss::Softmax;
  model.num_classes = bundle.num_classes;
  const std::uint64_t seed = config.seed;

  // FRE
  std::array<Matrix, 3> g;
  for (std::size_t m = 0; m < 3; ++m) {
    const FeatureMatrix& x = modality(bundle, m);
    auto& mm = model.modalities[m];
    mm.input_dim = static_cast<Eigen::Index>(x.cols());
    if (!config.fre.enabled) {
      fit_standardizer(mm, x.values());
      g[m] = standardize(mm, x.values());
      log("fre", std::string(kNames[m]) + ": disabled, passthrough " + shape(g[m]));
      continue;
    }
    const Eigen::Index out_dim = config.fre.output_dim > 0 ? config.fre.output_dim : mm.input_dim;
    mm.fre = init_aggregator(config.fre.aggregator, mm.input_dim, config.fre.hidden_dim, config.fre.depth, out_dim,
                             derive_seed(seed, "fre-init", m));
    const GraphContext graph = build_adjacency(x, config.fre.threshold);
    std::string detail = std::string(kNames[m]) + ": graph " + std::to_string(graph.nodes) + " nodes, " +
                         std::to_string(graph.edge_count()) + " edges";
    if (graph.edge_count() > 0 && config.fre.epochs > 0) {
      const GraphLossConfig loss{config.fre.walk_length, config.fre.walks_per_node, config.fre.negatives,
                                 derive_seed(seed, "fre-loss", m)};
      auto trained = train_fre(x, graph, mm.fre, loss, config.fre.fanouts, config.fre.epochs, config.fre.learning_rate);
      mm.fre = std::move(trained.params);
      detail += ", graph loss " + fmt(trained.epoch_losses.front()) + " -> " + fmt(trained.epoch_losses.back());
    } else {
      detail += ", training skipped";
    }
    g[m] = recalibrate(x, graph, mm.fre, config.fre.fanouts, fre_sample_seed(seed, m), threads).values();
    fit_standardizer(mm, g[m]);
    g[m] = standardize(mm, g[m]);
    log("fre", detail + ", output " + shape(g[m]));
  }

  // Encoder (+ conv front end, trained jointly)
  for (std::size_t m = 0; m < 3; ++m) {
    model.modalities[m].encoder =
        init_encoder(g[m].cols(), config.encoder.hidden, config.encoder.dense, config.encoder.gru_dropout,
                     config.encoder.dense_dropout, derive_seed(seed, "encoder-init", m));
  }
  model.conv = init_conv(config.conv.filters, config.conv.width, derive_seed(seed, "conv-init"));
  model.conv.pool_window = config.conv.pool_window;
  model.conv.pool_stride = config.conv.pool_stride;
  const double ce = supervised_phase(model, g, bundle.labels, threads);
  log("encoder", "Bi-GRU hidden " + std::to_string(config.encoder.hidden) + ", d " +
                     std::to_string(config.encoder.dense) + ", " + std::to_string(config.encoder.epochs) +
                     " epochs, final cross-entropy " + fmt(ce));

  // ICIM
  const Matrix h = fuse_sequences(model, g, threads);
  log("icim", std::string(config.icim_enabled ? "enabled" : "disabled") + ", fused " + shape(h));

  // HOA
  if (config.hoa.enabled) {
    SelectionConfig sel = config.hoa.selection;
    sel.seed = derive_seed(seed, "hoa");
    sel.fitness.seed = derive_seed(seed, "hoa-fitness");
    const SelectionResult picked = select_features(FeatureMatrix(h), bundle.labels, bundle.num_classes, sel, threads);
    model.mask = picked.mask;
    log("hoa", "selected " + std::to_string(model.mask.selected()) + "/" + std::to_string(model.mask.size()) +
                   ", fitness " + fmt(picked.hoa_fitness) + " -> " + fmt(picked.fitness));
  } else {
    model.mask = FeatureMask::all_ones(static_cast<std::size_t>(h.cols()));
    log("hoa", "disabled, all " + std::to_string(h.cols()) + " columns kept");
  }
  require(model.mask.selected() >= static_cast<std::size_t>(model.conv.width()), ErrorCode::InputTooShort,
          "selected feature count is below the conv width");

  // ConvXGB
  const Matrix z = conv_features(apply_mask(h, model.mask), model.conv);
  const std::vector<double> targets(bundle.labels.begin(), bundle.labels.end());
  BoostFit fit = boost_fit(z, targets, model.config.boost, static_cast<std::size_t>(bundle.num_classes), threads);
  model.ensemble = std::move(fit.ensemble);
  const std::vector<int> pred = boost_predict(model.ensemble, z);
  result.training_metrics = compute_metrics(pred, bundle.labels, bundle.num_classes);
  log("convxgb", "conv features " + shape(z) + ", " + std::to_string(model.ensemble.rounds.size()) +
                     " rounds, objective " + fmt(fit.objective.front()) + " -> " + fmt(fit.objective.back()) +
                     ", training accuracy " + fmt(result.training_metrics.accuracy));
  return result;
}

Matrix fused_features(const TrainedModel& model, const ModalityBundle& bundle, bool apply_selection,
                      unsigned threads) {
  check_bundle(model, bundle);
  std::array<Matrix, 3> g;
  for (std::size_t m = 0; m < 3; ++m) g[m] = encoder_input(model, modality(bundle, m), m, threads);
  Matrix h = fuse_sequences(model, g, threads);
  return apply_selection ? apply_mask(h, model.mask) : h;
}

std::vector<int> predict(const TrainedModel& model, const ModalityBundle& bundle, unsigned threads) {
  return boost_predict(model.ensemble, conv_features(fused_features(model, bundle, true, threads), model.conv));
}

MetricsReport evaluate(const TrainedModel& model, const ModalityBundle& bundle, unsigned threads) {
  require(bundle.num_classes <= model.num_classes, ErrorCode::DimensionMismatch,
          "bundle has more classes than the model");
  return compute_metrics(predict(model, bundle, threads), bundle.labels, model.num_classes);
}

std::string model_summary(const TrainedModel& model) {
  const auto& c = model.config;
  std::ostringstream s;
  s << "format_version " << TrainedModel::kFormatVersion << "\n";
  s << "task " << (c.task == Task::SentimentBinary ? "sentiment-binary" : "emotion-multiclass") << ", "
    << model.num_classes << " classes, seed " << c.seed << "\n";
  for (std::size_t m = 0; m < 3; ++m) {
    const auto& mm = model.modalities[m];
    s << kNames[m] << ": input " << mm.input_dim;
    if (c.fre.enabled) {
      s << ", FRE depth " << mm.fre.depth() << " -> " << mm.fre.output_dim();
    } else {
      s << ", FRE off";
    }
    s << ", Bi-GRU " << mm.encoder.forward.hidden_dim() << ", dense " << mm.encoder.dense.weight.rows() << "\n";
  }
  s << "ICIM " << (c.icim_enabled ? "on" : "off") << ", fused width " << model.mask.size() << "\n";
  s << "HOA " << (c.hoa.enabled ? "on" : "off") << ", mask " << model.mask.selected() << "/" << model.mask.size()
    << " selected\n";
  s << "conv " << model.conv.filters() << " filters x " << model.conv.width() << ", pool " << model.conv.pool_window
    << "/" << model.conv.pool_stride << "\n";
  std::size_t leaves = 0;
  for (const auto& r : model.ensemble.rounds) {
    for (const auto& t : r) leaves += t.leaf_count();
  }
  s << "ensemble " << model.ensemble.rounds.size() << " rounds x " << model.ensemble.outputs << " outputs, " << leaves
    << " leaves, eta " << model.ensemble.eta << ", " << model.ensemble.features << " input features\n";
  return s.str();
}

}  // namespace gcm
