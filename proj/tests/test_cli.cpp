#include "cli.hpp"
#include "gcm/data.hpp"
#include "gcm/pipeline.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = gcm::run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("gcm_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  const fs::path dir = temp_dir("usage");
  gcm::write_bundle(gcm::generate_synthetic_dataset(gcm::SyntheticSpec{.utterances = 10}), dir / "b");
  const auto missing = run({"train", "--bundle", (dir / "b").string(), "--out", (dir / "m.json").string()});
  EXPECT_EQ(missing.code, 1);
  EXPECT_NE(missing.err.find("--config"), std::string::npos);
  EXPECT_EQ(run({"train", "--config", (dir / "nope.json").string(), "--bundle", (dir / "b").string()}).code, 1);
  EXPECT_EQ(run({"synth", "--seed", "1"}).code, 1);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(run({"--help"}).code, 0); }

TEST(Cli, SynthIsDeterministic) {
  const fs::path dir = temp_dir("synth");
  ASSERT_EQ(run({"synth", "--seed", "7", "--utterances", "30", "--out", (dir / "a").string()}).code, 0);
  ASSERT_EQ(run({"synth", "--seed", "7", "--utterances", "30", "--out", (dir / "b").string()}).code, 0);
  for (const char* f : {"text.gcmf", "audio.gcmf", "visual.gcmf", "labels.csv"}) {
    EXPECT_FALSE(slurp(dir / "a" / f).empty()) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  ASSERT_EQ(run({"synth", "--seed", "8", "--utterances", "30", "--out", (dir / "c").string()}).code, 0);
  EXPECT_NE(slurp(dir / "a" / "text.gcmf"), slurp(dir / "c" / "text.gcmf"));
}

TEST(Cli, SynthConfigIsStrict) {
  const fs::path dir = temp_dir("synthcfg");
  std::ofstream(dir / "bad.json") << R"({"utterances": 20, "colour": 3})";
  EXPECT_EQ(run({"synth", "--config", (dir / "bad.json").string(), "--out", (dir / "x").string()}).code, 2);
}

TEST(Cli, TrainEvalInspectSelect) {
  const fs::path dir = temp_dir("e2e");
  ASSERT_EQ(run({"synth", "--seed", "4", "--test-fraction", "0.2", "--out", (dir / "data").string()}).code, 0);
  std::ofstream(dir / "config.json") << gcm::config_json(gcm::desk_config());

  const auto tr = run({"train", "--config", (dir / "config.json").string(), "--bundle", (dir / "data" / "train").string(),
                       "--out", (dir / "model.json").string(), "--metrics", (dir / "train_metrics.json").string()});
  ASSERT_EQ(tr.code, 0) << tr.err;
  for (const char* stage : {"[fre]", "[encoder]", "[icim]", "[hoa]", "[convxgb]"}) {
    EXPECT_NE(tr.err.find(stage), std::string::npos) << stage;
  }
  EXPECT_TRUE(fs::exists(dir / "train_metrics.json"));

  const auto ev = run({"eval", "--model", (dir / "model.json").string(), "--bundle", (dir / "data" / "test").string(),
                       "--out", (dir / "metrics.json").string()});
  ASSERT_EQ(ev.code, 0) << ev.err;
  const auto metrics = nlohmann::json::parse(slurp(dir / "metrics.json"));
  EXPECT_GE(metrics["accuracy"].get<double>(), 0.95);

  const auto in = run({"inspect", "--model", (dir / "model.json").string()});
  ASSERT_EQ(in.code, 0);
  EXPECT_NE(in.out.find("format_version 1"), std::string::npos);

  std::ofstream(dir / "broken.json") << slurp(dir / "model.json").substr(0, 100);
  EXPECT_EQ(run({"inspect", "--model", (dir / "broken.json").string()}).code, 2);

  const auto sel = run({"select", "--features", (dir / "data" / "train" / "text.gcmf").string(), "--labels",
                        (dir / "data" / "train" / "labels.csv").string(), "--seed", "3"});
  ASSERT_EQ(sel.code, 0) << sel.err;
  ASSERT_EQ(sel.out.size(), 17u);
  EXPECT_EQ(sel.out.find_first_not_of("01"), 16u);
  EXPECT_NE(sel.out.find('1'), std::string::npos);
}
