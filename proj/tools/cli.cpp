#include "cli.hpp"

#include "gcm/error.hpp"
#include "gcm/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

namespace gcm {
namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
  unsigned threads = 1;
};

void add_common(CLI::App& cmd, Common& c, bool config_required = false) {
  cmd.add_option("--seed", c.seed, "Master seed (overrides the config)");
  auto* cfg = cmd.add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
  if (config_required) cfg->required();
  cmd.add_option("--out", c.out, "Output path");
  cmd.add_option("--threads", c.threads, "Worker threads")->check(CLI::Range(1u, 256u));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to `path`, or to `out` when the path is empty.
void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text) || !f.flush()) fail(ErrorCode::Io, "cannot write " + path);
}

SyntheticSpec synthetic_spec(const std::string& path) {
  SyntheticSpec s;
  if (path.empty()) return s;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::ConfigInvalid, std::string("synthetic config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::ConfigInvalid, "synthetic config must be an object");
  try {
    for (const auto& [k, v] : j.items()) {
      if (k == "utterances") s.utterances = v.get<std::size_t>();
      else if (k == "text_dims") s.text_dims = v.get<std::size_t>();
      else if (k == "audio_dims") s.audio_dims = v.get<std::size_t>();
      else if (k == "visual_dims") s.visual_dims = v.get<std::size_t>();
      else if (k == "classes") s.classes = v.get<int>();
      else if (k == "separation") s.separation = v.get<double>();
      else if (k == "noise") s.noise = v.get<double>();
      else if (k == "seed") s.seed = v.get<std::uint64_t>();
      else fail(ErrorCode::ConfigInvalid, "unknown key '" + k + "' in synthetic config");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigInvalid, std::string("synthetic config: ") + e.what());
  }
  return s;
}

FileFormat format_for(const std::string& path) {
  return std::filesystem::path(path).extension() == ".csv" ? FileFormat::Csv : FileFormat::Gcmf;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal sentiment and emotion pipeline", "gcmnet"};
  app.require_subcommand(1);

  Common synth_c, train_c, eval_c, select_c, inspect_c;

  auto* synth = app.add_subcommand("synth", "Write a synthetic bundle directory");
  add_common(*synth, synth_c);
  std::optional<std::size_t> utterances, dims;
  std::optional<int> classes;
  double test_fraction = 0.0;
  synth->add_option("--utterances", utterances, "Utterance count");
  synth->add_option("--classes", classes, "Class count");
  synth->add_option("--dims", dims, "Feature width for every modality");
  synth->add_option("--test-fraction", test_fraction, "Also write a stratified held-out split")
      ->check(CLI::Range(0.0, 0.99));

  auto* train = app.add_subcommand("train", "Train a model from a config and a bundle");
  add_common(*train, train_c, true);
  std::string train_bundle, train_metrics;
  train->add_option("--bundle", train_bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--metrics", train_metrics, "Training metrics JSON (default: stdout)");

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a bundle");
  add_common(*eval, eval_c);
  std::string eval_model, eval_bundle;
  eval->add_option("--model", eval_model, "Model file")->required()->check(CLI::ExistingFile);
  eval->add_option("--bundle", eval_bundle, "Bundle directory")->required()->check(CLI::ExistingDirectory);

  auto* select = app.add_subcommand("select", "Run feature selection on one feature file");
  add_common(*select, select_c);
  std::string features_path, labels_path;
  select->add_option("--features", features_path, "Feature file (.gcmf or .csv)")->required()->check(CLI::ExistingFile);
  select->add_option("--labels", labels_path, "Labels file, one integer per line")
      ->required()
      ->check(CLI::ExistingFile);

  auto* inspect = app.add_subcommand("inspect", "Print a model summary");
  add_common(*inspect, inspect_c);
  std::string inspect_model;
  inspect->add_option("--model", inspect_model, "Model file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error: " << e.what() << "\n";
    const CLI::App* where = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << where->help();
    return 1;
  }

  try {
    if (synth->parsed()) {
      if (synth_c.out.empty()) throw UsageError("synth needs --out <dir>");
      SyntheticSpec spec = synthetic_spec(synth_c.config);
      if (synth_c.seed) spec.seed = *synth_c.seed;
      if (utterances) spec.utterances = *utterances;
      if (classes) spec.classes = *classes;
      if (dims) spec.text_dims = spec.audio_dims = spec.visual_dims = *dims;
      const ModalityBundle bundle = generate_synthetic_dataset(spec);
      const std::filesystem::path dir(synth_c.out);
      if (test_fraction > 0.0) {
        const auto [tr, te] = train_test_split(bundle, test_fraction, spec.seed);
        write_bundle(tr, dir / "train");
        write_bundle(te, dir / "test");
        out << "wrote " << tr.size() << " train and " << te.size() << " test utterances to " << dir.string() << "\n";
      } else {
        write_bundle(bundle, dir);
        out << "wrote " << bundle.size() << " utterances to " << dir.string() << "\n";
      }
    } else if (train->parsed()) {
      if (train_c.out.empty()) throw UsageError("train needs --out <model file>");
      PipelineConfig cfg = load_config(train_c.config);
      if (train_c.seed) cfg.seed = *train_c.seed;
      const ModalityBundle bundle = read_bundle(train_bundle);
      TrainOptions opts;
      opts.threads = train_c.threads;
      opts.log = [&err](const StageRecord& r) { err << "[" << r.stage << "] " << r.detail << "\n"; };
      const TrainResult res = train_pipeline(bundle, cfg, opts);
      save_model(res.model, train_c.out);
      emit(metrics_json(res.training_metrics), train_metrics, out);
    } else if (eval->parsed()) {
      const TrainedModel model = load_model(eval_model);
      const ModalityBundle bundle = read_bundle(eval_bundle, model.num_classes);
      emit(metrics_json(evaluate(model, bundle, eval_c.threads)), eval_c.out, out);
    } else if (select->parsed()) {
      PipelineConfig cfg = select_c.config.empty() ? PipelineConfig{} : load_config(select_c.config);
      if (select_c.seed) cfg.seed = *select_c.seed;
      const FeatureMatrix features = parse_feature_file(features_path, format_for(features_path));
      const std::vector<int> labels = read_labels(labels_path);
      SelectionConfig sel = cfg.hoa.selection;
      sel.seed = derive_seed(cfg.seed, "hoa");
      sel.fitness.seed = derive_seed(cfg.seed, "hoa-fitness");
      const SelectionResult res = select_features(features, labels, 0, sel, select_c.threads);
      emit(res.mask.to_string() + "\n", select_c.out, out);
      err << "selected " << res.mask.selected() << "/" << res.mask.size() << ", fitness " << res.fitness << "\n";
    } else if (inspect->parsed()) {
      emit(model_summary(load_model(inspect_model)), inspect_c.out, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"gcmnet"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace gcm
