#include "gcm/error.hpp"
#include "gcm/pipeline.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <sstream>

namespace gcm {

using Json = nlohmann::ordered_json;

namespace {

// ---- config ----------------------------------------------------------

/// Reads keys from one JSON object and rejects any it was not asked about.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorCode::ConfigInvalid, path_ + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::invalid_argument("boolean");
      } else if constexpr (std::is_unsigned_v<T>) {
        if (!it->is_number_unsigned()) throw std::invalid_argument("non-negative integer");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw std::invalid_argument("integer");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw std::invalid_argument("number");
      }
      out = it->template get<T>();
    } catch (const std::exception& e) {
      fail(ErrorCode::ConfigInvalid, path_ + "." + key + ": expected " + e.what());
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) fail(ErrorCode::ConfigInvalid, "unknown key " + path_ + "." + k);
    }
  }

  const std::string& path() const { return path_; }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string task_name(Task t) { return t == Task::SentimentBinary ? "sentiment-binary" : "emotion-multiclass"; }

Task parse_task(const std::string& s) {
  if (s == "sentiment-binary") return Task::SentimentBinary;
  if (s == "emotion-multiclass") return Task::EmotionMulticlass;
  fail(ErrorCode::ConfigInvalid, "unknown task '" + s + "'");
}

std::string aggregator_name(AggregatorKind k) { return k == AggregatorKind::Lstm ? "lstm" : "mean"; }

AggregatorKind parse_aggregator(const std::string& s) {
  if (s == "lstm") return AggregatorKind::Lstm;
  if (s == "mean") return AggregatorKind::Mean;
  fail(ErrorCode::ConfigInvalid, "unknown aggregator '" + s + "'");
}

Json config_to_json(const PipelineConfig& c) {
  const auto& f = c.fre;
  const auto& e = c.encoder;
  const auto& s = c.hoa.selection;
  const auto& b = c.boost;
  return Json{
      {"task", task_name(c.task)},
      {"seed", c.seed},
      {"fre",
       {{"enabled", f.enabled},
        {"threshold", f.threshold},
        {"aggregator", aggregator_name(f.aggregator)},
        {"depth", f.depth},
        {"fanouts", f.fanouts},
        {"hidden_dim", f.hidden_dim},
        {"output_dim", f.output_dim},
        {"walk_length", f.walk_length},
        {"walks_per_node", f.walks_per_node},
        {"negatives", f.negatives},
        {"epochs", f.epochs},
        {"learning_rate", f.learning_rate}}},
      {"encoder",
       {{"hidden", e.hidden},
        {"dense", e.dense},
        {"gru_dropout", e.gru_dropout},
        {"dense_dropout", e.dense_dropout},
        {"segment_length", e.segment_length},
        {"epochs", e.epochs},
        {"learning_rate", e.learning_rate}}},
      {"icim", {{"enabled", c.icim_enabled}}},
      {"hoa",
       {{"enabled", c.hoa.enabled},
        {"agents", s.agents},
        {"iterations", s.iterations},
        {"alpha", s.alpha},
        {"knn_k", s.fitness.k},
        {"fitness_weight", s.fitness.weight},
        {"validation_fraction", s.fitness.validation_fraction},
        {"abhc_iterations", s.schedule.t_max},
        {"abhc_p", s.schedule.p},
        {"beta_min", s.schedule.beta_min},
        {"beta_max", s.schedule.beta_max},
        {"flip_fraction", s.schedule.flip_fraction}}},
      {"conv",
       {{"filters", c.conv.filters},
        {"width", c.conv.width},
        {"pool_window", c.conv.pool_window},
        {"pool_stride", c.conv.pool_stride}}},
      {"boost",
       {{"rounds", b.rounds},
        {"eta", b.eta},
        {"max_depth", b.max_depth},
        {"zeta", b.zeta},
        {"delta", b.delta},
        {"alpha", b.alpha},
        {"min_gain", b.min_gain}}},
  };
}

PipelineConfig config_from_json(const Json& j) {
  PipelineConfig c;
  ObjectReader root(j, "config");
  std::string task = task_name(c.task);
  root.read("task", task);
  c.task = parse_task(task);
  root.read("seed", c.seed);

  if (const Json* fj = root.child("fre")) {
    ObjectReader r(*fj, "fre");
    auto& f = c.fre;
    std::string agg = aggregator_name(f.aggregator);
    r.read("enabled", f.enabled);
    r.read("threshold", f.threshold);
    r.read("aggregator", agg);
    f.aggregator = parse_aggregator(agg);
    r.read("depth", f.depth);
    r.read("fanouts", f.fanouts);
    r.read("hidden_dim", f.hidden_dim);
    r.read("output_dim", f.output_dim);
    r.read("walk_length", f.walk_length);
    r.read("walks_per_node", f.walks_per_node);
    r.read("negatives", f.negatives);
    r.read("epochs", f.epochs);
    r.read("learning_rate", f.learning_rate);
    r.finish();
  }
  if (const Json* ej = root.child("encoder")) {
    ObjectReader r(*ej, "encoder");
    auto& e = c.encoder;
    r.read("hidden", e.hidden);
    r.read("dense", e.dense);
    r.read("gru_dropout", e.gru_dropout);
    r.read("dense_dropout", e.dense_dropout);
    r.read("segment_length", e.segment_length);
    r.read("epochs", e.epochs);
    r.read("learning_rate", e.learning_rate);
    r.finish();
  }
  if (const Json* ij = root.child("icim")) {
    ObjectReader r(*ij, "icim");
    r.read("enabled", c.icim_enabled);
    r.finish();
  }
  if (const Json* hj = root.child("hoa")) {
    ObjectReader r(*hj, "hoa");
    auto& s = c.hoa.selection;
    r.read("enabled", c.hoa.enabled);
    r.read("agents", s.agents);
    r.read("iterations", s.iterations);
    r.read("alpha", s.alpha);
    r.read("knn_k", s.fitness.k);
    r.read("fitness_weight", s.fitness.weight);
    r.read("validation_fraction", s.fitness.validation_fraction);
    r.read("abhc_iterations", s.schedule.t_max);
    r.read("abhc_p", s.schedule.p);
    r.read("beta_min", s.schedule.beta_min);
    r.read("beta_max", s.schedule.beta_max);
    r.read("flip_fraction", s.schedule.flip_fraction);
    r.finish();
  }
  if (const Json* cj = root.child("conv")) {
    ObjectReader r(*cj, "conv");
    r.read("filters", c.conv.filters);
    r.read("width", c.conv.width);
    r.read("pool_window", c.conv.pool_window);
    r.read("pool_stride", c.conv.pool_stride);
    r.finish();
  }
  if (const Json* bj = root.child("boost")) {
    ObjectReader r(*bj, "boost");
    auto& b = c.boost;
    r.read("rounds", b.rounds);
    r.read("eta", b.eta);
    r.read("max_depth", b.max_depth);
    r.read("zeta", b.zeta);
    r.read("delta", b.delta);
    r.read("alpha", b.alpha);
    r.read("min_gain", b.min_gain);
    r.finish();
  }
  root.finish();
  c.boost.loss = c.task == Task::SentimentBinary ? BoostLoss::Logistic : BoostLoss::Softmax;
  c.validate();
  return c;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot write " + path.string());
  out << text;
  if (!out.flush()) fail(ErrorCode::Io, "write failed for " + path.string());
}

// ---- model -----------------------------------------------------------

template <class Derived>
Json matrix_json(const Eigen::MatrixBase<Derived>& m) {
  Json data = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Json vector_json(const Vector& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

Matrix json_matrix(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || !data.is_array() || data.size() != static_cast<std::size_t>(rows * cols)) {
    fail(ErrorCode::Malformed, "matrix shape does not match its data");
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = data[static_cast<std::size_t>(i)].get<double>();
  return m;
}

Vector json_vector(const Json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Json gru_json(const GruParams& g) {
  return Json{{"w_input", matrix_json(g.w_input)}, {"w_hidden", matrix_json(g.w_hidden)}, {"bias", vector_json(g.bias)}};
}

GruParams json_gru(const Json& j, Direction d) {
  return GruParams{json_matrix(j.at("w_input")), json_matrix(j.at("w_hidden")), json_vector(j.at("bias")), d};
}

Json fre_json(const AggregatorParams& p) {
  Json layers = Json::array();
  for (const auto& l : p.layers) {
    layers.push_back({{"lstm",
                       {{"w_input", matrix_json(l.lstm.w_input)},
                        {"w_hidden", matrix_json(l.lstm.w_hidden)},
                        {"bias", vector_json(l.lstm.bias)}}},
                      {"agg_weight", matrix_json(l.agg_weight)},
                      {"agg_bias", vector_json(l.agg_bias)},
                      {"weight", matrix_json(l.weight)},
                      {"bias", vector_json(l.bias)}});
  }
  return Json{{"kind", aggregator_name(p.kind)},
              {"layers", std::move(layers)},
              {"transform_weight", matrix_json(p.transform_weight)},
              {"transform_bias", vector_json(p.transform_bias)}};
}

AggregatorParams json_fre(const Json& j) {
  AggregatorParams p;
  p.kind = parse_aggregator(j.at("kind").get<std::string>());
  for (const auto& l : j.at("layers")) {
    FreLayer layer;
    const auto& c = l.at("lstm");
    layer.lstm = LstmCell{json_matrix(c.at("w_input")), json_matrix(c.at("w_hidden")), json_vector(c.at("bias"))};
    layer.agg_weight = json_matrix(l.at("agg_weight"));
    layer.agg_bias = json_vector(l.at("agg_bias"));
    layer.weight = json_matrix(l.at("weight"));
    layer.bias = json_vector(l.at("bias"));
    p.layers.push_back(std::move(layer));
  }
  p.transform_weight = json_matrix(j.at("transform_weight"));
  p.transform_bias = json_vector(j.at("transform_bias"));
  return p;
}

Json tree_node_json(const Tree& t, std::size_t i) {
  const auto& n = t.nodes.at(i);
  if (n.is_leaf()) return Json{{"weight", n.weight}};
  return Json{{"feature", n.feature},
              {"threshold", n.threshold},
              {"left", tree_node_json(t, static_cast<std::size_t>(n.left))},
              {"right", tree_node_json(t, static_cast<std::size_t>(n.right))}};
}

int json_tree_node(const Json& j, Tree& t, std::size_t depth) {
  if (depth > 64) fail(ErrorCode::Malformed, "tree nesting too deep");
  const int id = static_cast<int>(t.nodes.size());
  t.nodes.emplace_back();
  if (j.contains("weight")) {
    t.nodes.back().weight = j.at("weight").get<double>();
    return id;
  }
  const int feature = j.at("feature").get<int>();
  if (feature < 0) fail(ErrorCode::Malformed, "negative split feature");
  const double threshold = j.at("threshold").get<double>();
  const int l = json_tree_node(j.at("left"), t, depth + 1);
  const int r = json_tree_node(j.at("right"), t, depth + 1);
  auto& n = t.nodes[static_cast<std::size_t>(id)];
  n.feature = feature;
  n.threshold = threshold;
  n.left = l;
  n.right = r;
  return id;
}

std::string loss_name(BoostLoss l) {
  switch (l) {
    case BoostLoss::Logistic:
      return "logistic";
    case BoostLoss::Softmax:
      return "softmax";
    case BoostLoss::Squared:
      break;
  }
  return "squared";
}

BoostLoss parse_loss(const std::string& s) {
  if (s == "logistic") return BoostLoss::Logistic;
  if (s == "softmax") return BoostLoss::Softmax;
  if (s == "squared") return BoostLoss::Squared;
  fail(ErrorCode::Malformed, "unknown loss '" + s + "'");
}

constexpr std::array<const char*, 3> kModalityNames{"text", "audio", "visual"};

TrainedModel model_from_json(const Json& j) {
  TrainedModel m;
  try {
    m.config = config_from_json(j.at("config"));
  } catch (const Error& e) {
    fail(ErrorCode::Malformed, std::string("embedded config: ") + e.what());
  }
  m.num_classes = j.at("num_classes").get<int>();
  const auto& mods = j.at("modalities");
  if (!mods.is_array() || mods.size() != 3) fail(ErrorCode::Malformed, "expected three modalities");
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& mj = mods[i];
    auto& mm = m.modalities[i];
    mm.input_dim = mj.at("input_dim").get<Eigen::Index>();
    if (!mj.at("fre").is_null()) mm.fre = json_fre(mj.at("fre"));
    mm.input_mean = json_vector(mj.at("input_mean"));
    mm.input_scale = json_vector(mj.at("input_scale"));
    const auto& ej = mj.at("encoder");
    mm.encoder.forward = json_gru(ej.at("forward"), Direction::Forward);
    mm.encoder.backward = json_gru(ej.at("backward"), Direction::Backward);
    mm.encoder.dense.weight = json_matrix(ej.at("dense").at("weight"));
    mm.encoder.dense.bias = json_vector(ej.at("dense").at("bias"));
    mm.encoder.dense.dropout = ej.at("dense").at("dropout").get<double>();
    mm.encoder.input_dropout = ej.at("input_dropout").get<double>();
  }
  m.mask = FeatureMask::from_string(j.at("mask").get<std::string>());
  const auto& cj = j.at("conv");
  m.conv.kernels = json_matrix(cj.at("kernels"));
  m.conv.bias = json_vector(cj.at("bias"));
  m.conv.pool_window = cj.at("pool_window").get<std::size_t>();
  m.conv.pool_stride = cj.at("pool_stride").get<std::size_t>();
  const auto& bj = j.at("ensemble");
  auto& e = m.ensemble;
  e.loss = parse_loss(bj.at("loss").get<std::string>());
  e.eta = bj.at("eta").get<double>();
  e.base_score = bj.at("base_score").get<double>();
  e.outputs = bj.at("outputs").get<std::size_t>();
  e.features = bj.at("features").get<std::size_t>();
  for (const auto& round : bj.at("rounds")) {
    std::vector<Tree> trees;
    for (const auto& tj : round) {
      Tree t;
      json_tree_node(tj, t, 0);
      trees.push_back(std::move(t));
    }
    if (trees.size() != e.outputs) fail(ErrorCode::Malformed, "round tree count != ensemble outputs");
    e.rounds.push_back(std::move(trees));
  }
  return m;
}

}  // namespace

void PipelineConfig::validate() const {
  auto check = [](bool ok, const std::string& what) { require(ok, ErrorCode::ConfigInvalid, what); };
  check(fre.threshold > 0.0 && fre.threshold <= 1.0, "fre.threshold must lie in (0, 1]");
  check(fre.depth >= 1 && fre.fanouts.size() == fre.depth, "fre.fanouts needs one entry per layer");
  for (auto f : fre.fanouts) check(f >= 1, "fre.fanouts entries must be >= 1");
  check(fre.hidden_dim >= 1 && fre.output_dim >= 0, "fre dimensions must be positive");
  check(fre.walk_length >= 1, "fre.walk_length must be >= 1");
  check(fre.learning_rate >= 0.0, "fre.learning_rate must be >= 0");
  check(encoder.hidden >= 1 && encoder.dense >= 1, "encoder sizes must be >= 1");
  check(encoder.gru_dropout >= 0.0 && encoder.gru_dropout < 1.0, "encoder.gru_dropout must lie in [0, 1)");
  check(encoder.dense_dropout >= 0.0 && encoder.dense_dropout < 1.0, "encoder.dense_dropout must lie in [0, 1)");
  check(encoder.segment_length >= 1, "encoder.segment_length must be >= 1");
  check(encoder.learning_rate > 0.0, "encoder.learning_rate must be > 0");
  const auto& s = hoa.selection;
  check(s.agents >= 1 && s.iterations >= 1, "hoa agents and iterations must be >= 1");
  check(s.fitness.k >= 1 && s.fitness.k % 2 == 1, "hoa.knn_k must be odd");
  check(s.fitness.weight >= 0.0 && s.fitness.weight <= 1.0, "hoa.fitness_weight must lie in [0, 1]");
  check(s.fitness.validation_fraction > 0.0 && s.fitness.validation_fraction < 1.0,
        "hoa.validation_fraction must lie in (0, 1)");
  check(s.schedule.t_max >= 1 && s.schedule.p >= 1.0, "hoa.abhc_iterations >= 1 and abhc_p >= 1");
  check(0.0 <= s.schedule.beta_min && s.schedule.beta_min <= s.schedule.beta_max && s.schedule.beta_max <= 1.0,
        "hoa beta bounds must satisfy 0 <= beta_min <= beta_max <= 1");
  check(s.schedule.flip_fraction > 0.0 && s.schedule.flip_fraction <= 1.0, "hoa.flip_fraction must lie in (0, 1]");
  check(conv.filters >= 1 && conv.width >= 1, "conv filters and width must be >= 1");
  check(conv.pool_window >= 1 && conv.pool_stride >= 1, "conv pool window and stride must be >= 1");
  check(boost.rounds >= 1 && boost.eta > 0.0 && boost.eta <= 1.0, "boost needs rounds >= 1 and eta in (0, 1]");
  check(boost.zeta >= 0.0 && boost.delta >= 0.0 && boost.alpha >= 0.0, "boost penalties must be >= 0");
}

PipelineConfig parse_config(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::ConfigInvalid, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

PipelineConfig load_config(const std::filesystem::path& path) { return parse_config(read_text(path)); }

std::string config_json(const PipelineConfig& config) { return config_to_json(config).dump(2) + "\n"; }

std::string model_json(const TrainedModel& model) {
  Json mods = Json::array();
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& mm = model.modalities[i];
    const auto& enc = mm.encoder;
    mods.push_back({{"name", kModalityNames[i]},
                    {"input_dim", mm.input_dim},
                    {"fre", mm.fre.layers.empty() ? Json(nullptr) : fre_json(mm.fre)},
                    {"input_mean", vector_json(mm.input_mean)},
                    {"input_scale", vector_json(mm.input_scale)},
                    {"encoder",
                     {{"forward", gru_json(enc.forward)},
                      {"backward", gru_json(enc.backward)},
                      {"dense",
                       {{"weight", matrix_json(enc.dense.weight)},
                        {"bias", vector_json(enc.dense.bias)},
                        {"dropout", enc.dense.dropout}}},
                      {"input_dropout", enc.input_dropout}}}});
  }
  Json rounds = Json::array();
  for (const auto& round : model.ensemble.rounds) {
    Json trees = Json::array();
    for (const auto& t : round) trees.push_back(tree_node_json(t, 0));
    rounds.push_back(std::move(trees));
  }
  const Json j{
      {"format_version", TrainedModel::kFormatVersion},
      {"config", config_to_json(model.config)},
      {"num_classes", model.num_classes},
      {"modalities", std::move(mods)},
      {"mask", model.mask.to_string()},
      {"conv",
       {{"kernels", matrix_json(model.conv.kernels)},
        {"bias", vector_json(model.conv.bias)},
        {"pool_window", model.conv.pool_window},
        {"pool_stride", model.conv.pool_stride}}},
      {"ensemble",
       {{"loss", loss_name(model.ensemble.loss)},
        {"eta", model.ensemble.eta},
        {"base_score", model.ensemble.base_score},
        {"outputs", model.ensemble.outputs},
        {"features", model.ensemble.features},
        {"rounds", std::move(rounds)}}},
  };
  return j.dump(1) + "\n";
}

TrainedModel parse_model(const std::string& json_text) {
  Json j;
  try {
    j = Json::parse(json_text);
  } catch (const Json::parse_error& e) {
    fail(ErrorCode::Malformed, std::string("model file is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("format_version") || !j["format_version"].is_number_integer()) {
    fail(ErrorCode::Malformed, "model file lacks an integer format_version");
  }
  const int version = j["format_version"].get<int>();
  if (version != TrainedModel::kFormatVersion) {
    fail(ErrorCode::VersionMismatch, "unsupported model format_version " + std::to_string(version));
  }
  try {
    return model_from_json(j);
  } catch (const Json::exception& e) {
    fail(ErrorCode::Malformed, std::string("model file: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Malformed) throw;
    fail(ErrorCode::Malformed, std::string("model file: ") + e.what());
  }
}

void save_model(const TrainedModel& model, const std::filesystem::path& path) { write_text(model_json(model), path); }

TrainedModel load_model(const std::filesystem::path& path) { return parse_model(read_text(path)); }

}  // namespace gcm
