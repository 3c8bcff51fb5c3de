#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "tforge/config.hpp"

using namespace tforge;
using namespace tforge::config;
namespace fs = std::filesystem;

namespace {

fs::path write_temp(const std::string& name, const std::string& content) {
  const fs::path p = fs::temp_directory_path() / name;
  std::ofstream(p, std::ios::binary) << content;
  return p;
}

}  // namespace

TEST_CASE("defaults") {
  const AppConfig cfg;
  CHECK(cfg.get("train.group_size") == "8");
  CHECK(cfg.source("train.group_size") == "default");
  CHECK(cfg.get("reward.gate_threshold") == "0.5");
  CHECK(cfg.brevity == "one sentence");
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("precedence: flag over env over file over default") {
  const fs::path file = write_temp("tforge_prec.toml", "[train]\nseed = 5\nsteps = 40\ngroup_size = 6\n");
  AppConfig cfg;
  apply_file(cfg, file);
  const std::map<std::string, std::string> env{{"TFORGE_TRAIN_STEPS", "70"}, {"TFORGE_TRAIN_SEED", "6"}};
  apply_env(cfg, [&](const char* n) -> const char* {
    const auto it = env.find(n);
    return it == env.end() ? nullptr : it->second.c_str();
  });
  cfg.set("train.seed", "9", "flag --seed");
  CHECK(cfg.train.seed == 9);
  CHECK(cfg.source("train.seed") == "flag --seed");
  CHECK(cfg.train.steps == 70);
  CHECK(cfg.source("train.steps") == "env TFORGE_TRAIN_STEPS");
  CHECK(cfg.train.group_size == 6);
  CHECK(cfg.source("train.group_size").rfind("file ", 0) == 0);
  CHECK(cfg.source("train.clip_eps") == "default");
  fs::remove(file);
}

TEST_CASE("printed config loads back to the same values") {
  AppConfig cfg;
  cfg.set("train.clip_eps", "0.3", "flag");
  cfg.set("reward.l1_missing_point_penalty", "12", "flag");
  cfg.set("train.order", "dcA", "flag");
  cfg.set("prompt.brevity", "the shorter the better", "flag");
  cfg.set("reward.sim", "false", "flag");
  const fs::path file = write_temp("tforge_round.toml", to_toml(cfg));
  AppConfig back;
  apply_file(back, file);
  for (const auto& key : config_keys()) {
    CAPTURE(key);
    CHECK(back.get(key) == cfg.get(key));
  }
  CHECK(back.train_config().order.code() == "dcA");
  CHECK_FALSE(back.reward_config().ablation.sim);
  fs::remove(file);
}

TEST_CASE("config errors name the key") {
  AppConfig cfg;
  auto message = [&](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::Config);
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(message([&] { cfg.set("train.bogus", "1", "flag"); }).find("train.bogus") != std::string::npos);
  CHECK(message([&] { cfg.set("train.steps", "many", "flag"); }).find("train.steps") != std::string::npos);

  const fs::path unknown = write_temp("tforge_unknown.toml", "[train]\nwarp = 3\n");
  CHECK(message([&] { apply_file(cfg, unknown); }).find("train.warp") != std::string::npos);
  const fs::path broken = write_temp("tforge_broken.toml", "[train]\nseed = \n");
  CHECK(message([&] { apply_file(cfg, broken); }).find(":2") != std::string::npos);
  const fs::path typed = write_temp("tforge_typed.toml", "[train]\nsteps = \"ten\"\n");
  CHECK(message([&] { apply_file(cfg, typed); }).find("train.steps") != std::string::npos);
  fs::remove(unknown);
  fs::remove(broken);
  fs::remove(typed);

  AppConfig bad;
  bad.set("embedding.provider", "external", "flag");
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.set("embedding.url", "http://127.0.0.1:9/embed", "flag");
  CHECK_NOTHROW(bad.validate());
}

TEST_CASE("JSON config files") {
  const fs::path file = write_temp("tforge_cfg.json", R"({"train":{"steps":12,"optimizer":"sgd"},"reward":{"gate":false}})");
  AppConfig cfg;
  apply_file(cfg, file);
  CHECK(cfg.train.steps == 12);
  CHECK(cfg.train_config().optimizer == grpo::OptimizerKind::Sgd);
  CHECK_FALSE(cfg.reward_config().ablation.gate);
  fs::remove(file);
}

TEST_CASE("brevity presets") {
  CHECK(resolve_brevity("one-sentence") == "one sentence");
  CHECK(resolve_brevity("shorter-better") == "the shorter the better");
  CHECK(resolve_brevity("in five words") == "in five words");
  CHECK(brevity_presets().size() == 2);
}

TEST_CASE("env names") {
  CHECK(env_name("train.group_size") == "TFORGE_TRAIN_GROUP_SIZE");
  CHECK(env_name("output.dir") == "TFORGE_OUTPUT_DIR");
}

TEST_CASE("make_provider") {
  EmbeddingSettings s;
  CHECK(make_provider(s)->id() == "hashed-bow");
  s.provider = embedding::EmbedderId::External;
  s.url = "http://127.0.0.1:9/embed";
  CHECK(make_provider(s)->id() == "external");
  s.fallback = true;
  s.timeout_ms = 300;
  const auto p = make_provider(s);
  CHECK(p->embed("red box").size() == 256);
}
