#ifndef TFORGE_CONFIG_HPP
#define TFORGE_CONFIG_HPP

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "tforge/embedding.hpp"
#include "tforge/grpo.hpp"
#include "tforge/reward.hpp"

namespace tforge::config {

struct EmbeddingSettings {
  embedding::EmbedderId provider = embedding::EmbedderId::HashedBow;
  std::string url;
  int timeout_ms = 5000;
  /// Fall back to the hashed embedder when the external provider fails.
  bool fallback = false;
  int dim = 256;
  std::uint64_t seed = 0;
};

/// Named brevity suffixes. The default is "one-sentence".
struct BrevityPreset {
  std::string_view name;
  std::string_view text;
};
const std::vector<BrevityPreset>& brevity_presets();
/// Preset name to its text; anything else is taken as literal suffix text.
std::string resolve_brevity(std::string_view text_or_preset);

/// Every setting of the tool with the source it came from.
///
/// Keys are "section.name". Precedence is flag > env > file > default; apply sources in
/// that reverse order. Env names are TFORGE_<SECTION>_<NAME> in upper case.
struct AppConfig {
  grpo::TrainConfig train;
  /// Ablation toggles live in train.ablation; see reward_config().
  reward::RewardConfig reward;
  EmbeddingSettings embedding;
  std::string brevity = "one sentence";
  std::string out_dir = "out";

  AppConfig();

  /// Sets one key from its text form. Throws Config naming the key on bad input.
  void set(std::string_view key, std::string_view value, std::string source);
  /// TOML literal of the current value.
  std::string get(std::string_view key) const;
  const std::string& source(std::string_view key) const;

  /// Reward settings with the ablation toggles and embedder applied.
  reward::RewardConfig reward_config() const;
  /// TrainConfig ready for run_experiment.
  grpo::TrainConfig train_config() const;

  /// Throws Config with a field-level message.
  void validate() const;

 private:
  std::map<std::string, std::string, std::less<>> sources_;
};

/// All keys in print order.
std::vector<std::string> config_keys();
std::string env_name(std::string_view key);

/// TOML (default) or JSON (".json" extension) file. Unknown keys are Config errors.
void apply_file(AppConfig& cfg, const std::filesystem::path& file);
void apply_env(AppConfig& cfg,
               const std::function<const char*(const char*)>& lookup = [](const char* n) {
                 return std::getenv(n);
               });

/// TOML document that loads back to the same configuration; each value carries a
/// `# source:` comment.
std::string to_toml(const AppConfig& cfg);

/// Builds the embedding provider described by `settings` (with fallback wrapping when
/// enabled). The returned provider owns its dependencies.
std::unique_ptr<embedding::EmbeddingProvider> make_provider(const EmbeddingSettings& settings);

}  // namespace tforge::config

#endif  // TFORGE_CONFIG_HPP
