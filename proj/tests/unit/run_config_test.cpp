#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "run_config.hpp"

namespace pdda::cli {
namespace {

std::string error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

TEST(RunConfig, DefaultsCoverEveryKeyOnce) {
  std::set<std::string> names;
  for (const auto& k : config_keys()) {
    EXPECT_TRUE(names.insert(std::string(k.name)).second) << k.name;
    EXPECT_FALSE(k.doc.empty()) << k.name;
  }
  for (const char* required : {"R", "tau", "patch_size", "s_fraction", "t_star", "projection_mode",
                               "keeper_mask", "grad_through_score", "schedule", "T", "seed",
                               "train_size", "val_size", "test_size", "score_epochs", "score_lr",
                               "classifier_epochs", "out"}) {
    EXPECT_TRUE(names.count(required)) << required;
  }
  const RunConfig cfg;
  EXPECT_EQ(cfg.real("R"), 0.3);
  EXPECT_EQ(cfg.count("T"), 100u);
  EXPECT_EQ(cfg.get("schedule"), "linear");
  EXPECT_TRUE(cfg.boolean("grad_through_score"));
}

TEST(RunConfig, CanonicalTextRoundTrips) {
  RunConfig cfg;
  cfg.set("R", "0.25000");
  cfg.set("grad_through_score", "no");
  cfg.set("methods", " pdda_full , source_only ");
  const std::string text = cfg.to_text();
  EXPECT_NE(text.find("R = 0.25\n"), std::string::npos);
  EXPECT_NE(text.find("grad_through_score = false\n"), std::string::npos);
  EXPECT_NE(text.find("methods = pdda_full,source_only\n"), std::string::npos);
  EXPECT_NE(text.find("input =\n"), std::string::npos);
  const RunConfig back = RunConfig::parse(text);
  EXPECT_TRUE(back == cfg);
  EXPECT_EQ(back.to_text(), text);

  // canonical order follows config_keys()
  std::size_t pos = 0;
  for (const auto& k : config_keys()) {
    const auto at = text.find(std::string(k.name) + " =", pos);
    ASSERT_NE(at, std::string::npos) << k.name;
    pos = at;
  }
}

TEST(RunConfig, ParseCommentsBlankLinesAndSpacing) {
  const auto cfg = RunConfig::parse("# header\n\n  R=2  \ntau = 0.1 # trailing\nkeeper_mask = f2\n");
  EXPECT_EQ(cfg.real("R"), 2.0);
  EXPECT_EQ(cfg.real("tau"), 0.1);
  EXPECT_EQ(guidance_config(cfg).keepers.semantic, false);
}

TEST(RunConfig, ErrorsNameKeyAndLine) {
  auto parse = [](const char* text) { return error_of([&] { RunConfig::parse(text, "run.cfg"); }); };
  EXPECT_NE(parse("R = 1\nbogus = 3\n").find("run.cfg:2"), std::string::npos);
  EXPECT_NE(parse("R = 1\nbogus = 3\n").find("'bogus'"), std::string::npos);
  EXPECT_NE(parse("R = abc\n").find("config key 'R'"), std::string::npos);
  EXPECT_NE(parse("R = 1\nR = 2\n").find("repeated"), std::string::npos);
  EXPECT_NE(parse("just words\n").find("run.cfg:1"), std::string::npos);
  EXPECT_NE(parse("T = -4\n").find("'T'"), std::string::npos);
  EXPECT_NE(parse("R = inf\n").find("'R'"), std::string::npos);
  EXPECT_NE(parse("schedule = quadratic\n").find("'schedule'"), std::string::npos);
  EXPECT_NE(parse("methods = pdda_full,tent\n").find("'methods'"), std::string::npos);
  EXPECT_NE(parse("severities = 3,6\n").find("'severities'"), std::string::npos);
  EXPECT_NE(parse("grad_through_score = maybe\n").find("'grad_through_score'"), std::string::npos);

  RunConfig cfg;
  EXPECT_NE(error_of([&] { cfg.set("nope=1"); }).find("'nope'"), std::string::npos);
  EXPECT_NE(error_of([&] { cfg.set("no equals sign"); }).find("key=value"), std::string::npos);
  EXPECT_NE(error_of([&] { cfg.get("nope"); }).find("'nope'"), std::string::npos);
}

TEST(RunConfig, LayeringKeepsLaterValues) {
  RunConfig cfg;
  cfg.apply_text("R = 1\ntau = 0.2\n");
  cfg.apply_text("R = 3\n");
  cfg.set("tau=0.7");
  EXPECT_EQ(cfg.real("R"), 3.0);
  EXPECT_EQ(cfg.real("tau"), 0.7);
}

TEST(RunConfig, DerivedSettings) {
  RunConfig cfg;
  cfg.set("severities", "1,3");
  cfg.set("corruptions", "contrast,pixelate");
  const auto c = corruptions(cfg);
  ASSERT_EQ(c.size(), 4u);
  EXPECT_EQ(c[0].kind, CorruptionKind::contrast);
  EXPECT_EQ(c[0].severity, 1);
  EXPECT_EQ(c[3].kind, CorruptionKind::pixelate);
  EXPECT_EQ(c[3].severity, 3);
  EXPECT_EQ(methods(cfg).size(), 7u);
  EXPECT_EQ(diagnose_modes(cfg).size(), 3u);
  EXPECT_EQ(score_train_options(cfg).batch_size, 4u);
  EXPECT_EQ(score_train_options(cfg).epochs, 60u);
  EXPECT_EQ(classifier_train_options(cfg).epochs, 20u);
  EXPECT_EQ(dataset_sizes(cfg).test, 512u);
  EXPECT_EQ(schedule(cfg).steps(), 100u);

  cfg.set("out", "/tmp/x");
  EXPECT_EQ(resolve_path(cfg, "dataset"), std::filesystem::path("/tmp/x/dataset.ckpt"));
  cfg.set("dataset", "/abs/data.ckpt");
  EXPECT_EQ(resolve_path(cfg, "dataset"), std::filesystem::path("/abs/data.ckpt"));

  cfg.set("tau", "0");
  EXPECT_NE(error_of([&] { guidance_config(cfg); }).find("tau"), std::string::npos);
  cfg.set("tau", "0.5");
  cfg.set("T", "1");
  EXPECT_NE(error_of([&] { schedule(cfg); }).find("'T'"), std::string::npos);
}

TEST(RunConfig, LoadFromFile) {
  const auto path = std::filesystem::temp_directory_path() / "pdda_run_config_test.cfg";
  std::ofstream(path) << "R = 0.5\n";
  EXPECT_EQ(RunConfig::load(path).real("R"), 0.5);
  std::ofstream(path) << "R = 0.5\nwhat = 1\n";
  const auto msg = error_of([&] { RunConfig::load(path); });
  EXPECT_NE(msg.find(path.string() + ":2"), std::string::npos) << msg;
  EXPECT_THROW(RunConfig::load(path.string() + ".missing"), Error);
}

}  // namespace
}  // namespace pdda::cli
