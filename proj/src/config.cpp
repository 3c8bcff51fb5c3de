#include "tforge/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

#include "tforge/error.hpp"
#include "tforge/numfmt.hpp"
#include "tforge/text.hpp"

namespace tforge::config {

namespace {

enum class Kind { Bool, Int, Float, String };

struct Field {
  std::string key;
  Kind kind;
  std::function<std::string(const AppConfig&)> get;
  std::function<void(AppConfig&, std::string_view)> set;
};

[[noreturn]] void fail(std::string_view key, const std::string& why) {
  throw Error(ErrorKind::Config, std::string(key) + ": " + why);
}

std::string float_literal(double v) {
  std::string s = format_number(v);
  if (s.find_first_of(".eni") == std::string::npos) s += ".0";
  return s;
}

std::string string_literal(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

template <typename T>
T parse_value(std::string_view key, std::string_view v) {
  v = text::trim(v);
  if constexpr (std::is_same_v<T, bool>) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    fail(key, "expected true or false, got '" + std::string(v) + "'");
  } else if constexpr (std::is_same_v<T, double>) {
    double out = 0.0;
    const char* first = v.data();
    if (!v.empty() && v.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
      fail(key, "expected a number, got '" + std::string(v) + "'");
    }
    return out;
  } else {
    T out{};
    const char* first = v.data();
    if (!v.empty() && v.front() == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, v.data() + v.size(), out);
    if (ec == std::errc::result_out_of_range) fail(key, "value out of range");
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
      fail(key, "expected an integer, got '" + std::string(v) + "'");
    }
    return out;
  }
}

template <typename T, typename Ref>
Field number_field(std::string key, Ref ref) {
  Field f{key, std::is_same_v<T, double> ? Kind::Float : Kind::Int, {}, {}};
  f.get = [ref](const AppConfig& c) {
    const T v = ref(const_cast<AppConfig&>(c));
    if constexpr (std::is_same_v<T, double>) {
      return float_literal(v);
    } else {
      return std::to_string(v);
    }
  };
  f.set = [ref, key](AppConfig& c, std::string_view v) { ref(c) = parse_value<T>(key, v); };
  return f;
}

template <typename Ref>
Field bool_field(std::string key, Ref ref) {
  Field f{key, Kind::Bool, {}, {}};
  f.get = [ref](const AppConfig& c) {
    return std::string(ref(const_cast<AppConfig&>(c)) ? "true" : "false");
  };
  f.set = [ref, key](AppConfig& c, std::string_view v) { ref(c) = parse_value<bool>(key, v); };
  return f;
}

/// String-valued setting with custom conversion.
Field text_field(std::string key, std::function<std::string(const AppConfig&)> get,
                 std::function<void(AppConfig&, std::string_view)> set) {
  Field f{key, Kind::String, {}, {}};
  f.get = [get](const AppConfig& c) { return string_literal(get(c)); };
  f.set = [set, key](AppConfig& c, std::string_view v) {
    try {
      set(c, v);
    } catch (const Error& e) {
      fail(key, e.what());
    }
  };
  return f;
}

using geometry::L1Options;

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    // train
    f.push_back(number_field<int>("train.group_size", [](AppConfig& c) -> int& { return c.train.group_size; }));
    f.push_back(number_field<double>("train.clip_eps", [](AppConfig& c) -> double& { return c.train.clip_eps; }));
    f.push_back(number_field<double>("train.kl_beta", [](AppConfig& c) -> double& { return c.train.kl_beta; }));
    f.push_back(number_field<double>("train.learning_rate", [](AppConfig& c) -> double& { return c.train.learning_rate; }));
    f.push_back(number_field<int>("train.steps", [](AppConfig& c) -> int& { return c.train.steps; }));
    f.push_back(number_field<std::uint64_t>("train.seed", [](AppConfig& c) -> std::uint64_t& { return c.train.seed; }));
    f.push_back(text_field(
        "train.order", [](const AppConfig& c) { return c.train.order.code(); },
        [](AppConfig& c, std::string_view v) { c.train.order = response::SectionOrder::from_code(v); }));
    f.push_back(number_field<double>("train.brevity_train_prob", [](AppConfig& c) -> double& { return c.train.brevity_train_prob; }));
    f.push_back(number_field<int>("train.epochs", [](AppConfig& c) -> int& { return c.train.epochs; }));
    f.push_back(text_field(
        "train.logprob_norm",
        [](const AppConfig& c) {
          return std::string(c.train.logprob_norm == grpo::LogProbNorm::TokenMean ? "token-mean"
                                                                                  : "sequence-sum");
        },
        [](AppConfig& c, std::string_view v) {
          if (v == "token-mean") {
            c.train.logprob_norm = grpo::LogProbNorm::TokenMean;
          } else if (v == "sequence-sum") {
            c.train.logprob_norm = grpo::LogProbNorm::SequenceSum;
          } else {
            throw Error(ErrorKind::Config, "expected token-mean or sequence-sum");
          }
        }));
    f.push_back(text_field(
        "train.optimizer",
        [](const AppConfig& c) {
          return std::string(c.train.optimizer == grpo::OptimizerKind::Adam ? "adam" : "sgd");
        },
        [](AppConfig& c, std::string_view v) {
          if (v == "adam") {
            c.train.optimizer = grpo::OptimizerKind::Adam;
          } else if (v == "sgd") {
            c.train.optimizer = grpo::OptimizerKind::Sgd;
          } else {
            throw Error(ErrorKind::Config, "expected adam or sgd");
          }
        }));
    f.push_back(number_field<double>("train.adv_eps", [](AppConfig& c) -> double& { return c.train.adv_eps; }));
    f.push_back(number_field<int>("train.n_tasks", [](AppConfig& c) -> int& { return c.train.n_tasks; }));
    f.push_back(number_field<int>("train.eval_samples", [](AppConfig& c) -> int& { return c.train.eval_samples; }));
    f.push_back(number_field<int>("train.threads", [](AppConfig& c) -> int& { return c.train.threads; }));
    // policy
    f.push_back(number_field<int>("policy.vocab", [](AppConfig& c) -> int& { return c.train.shape.vocab; }));
    f.push_back(number_field<int>("policy.max_concise", [](AppConfig& c) -> int& { return c.train.shape.max_concise; }));
    f.push_back(number_field<int>("policy.max_detailed", [](AppConfig& c) -> int& { return c.train.shape.max_detailed; }));
    f.push_back(number_field<int>("policy.coord_bins", [](AppConfig& c) -> int& { return c.train.shape.coord_bins; }));
    f.push_back(number_field<int>("policy.len_buckets", [](AppConfig& c) -> int& { return c.train.shape.len_buckets; }));
    f.push_back(number_field<int>("policy.image_size", [](AppConfig& c) -> int& { return c.train.shape.image_size; }));
    f.push_back(number_field<double>("policy.concise_stop", [](AppConfig& c) -> double& { return c.train.prior.concise_stop; }));
    f.push_back(number_field<double>("policy.detailed_stop", [](AppConfig& c) -> double& { return c.train.prior.detailed_stop; }));
    f.push_back(number_field<double>("policy.concise_relevance", [](AppConfig& c) -> double& { return c.train.prior.concise_relevance; }));
    f.push_back(number_field<double>("policy.detailed_relevance", [](AppConfig& c) -> double& { return c.train.prior.detailed_relevance; }));
    f.push_back(number_field<double>("policy.copy", [](AppConfig& c) -> double& { return c.train.prior.copy; }));
    f.push_back(number_field<double>("policy.answer_base", [](AppConfig& c) -> double& { return c.train.prior.answer_base; }));
    f.push_back(number_field<double>("policy.answer_evidence", [](AppConfig& c) -> double& { return c.train.prior.answer_evidence; }));
    f.push_back(number_field<double>("policy.brevity", [](AppConfig& c) -> double& { return c.train.prior.brevity; }));
    // reward
    f.push_back(number_field<double>("reward.iou_binary_threshold", [](AppConfig& c) -> double& { return c.reward.iou_binary_threshold; }));
    f.push_back(number_field<double>("reward.l1_binary_threshold", [](AppConfig& c) -> double& { return c.reward.l1_binary_threshold; }));
    f.push_back(number_field<double>("reward.gate_threshold", [](AppConfig& c) -> double& { return c.reward.gate_threshold; }));
    f.push_back(bool_field("reward.stray_text_voids_format", [](AppConfig& c) -> bool& { return c.reward.stray_text_voids_format; }));
    f.push_back(text_field(
        "reward.tokenizer", [](const AppConfig& c) { return std::string(text::to_string(c.reward.tokenizer_id)); },
        [](AppConfig& c, std::string_view v) { c.reward.tokenizer_id = text::tokenizer_from_string(v); }));
    f.push_back(bool_field("reward.distill", [](AppConfig& c) -> bool& { return c.train.ablation.distill; }));
    f.push_back(bool_field("reward.gate", [](AppConfig& c) -> bool& { return c.train.ablation.gate; }));
    f.push_back(bool_field("reward.sim", [](AppConfig& c) -> bool& { return c.train.ablation.sim; }));
    f.push_back(bool_field("reward.concise", [](AppConfig& c) -> bool& { return c.train.ablation.concise; }));
    f.push_back(text_field(
        "reward.l1_pairing",
        [](const AppConfig& c) {
          return std::string(c.reward.l1.pairing == L1Options::Pairing::Positional ? "positional" : "strict");
        },
        [](AppConfig& c, std::string_view v) {
          if (v == "positional") {
            c.reward.l1.pairing = L1Options::Pairing::Positional;
          } else if (v == "strict") {
            c.reward.l1.pairing = L1Options::Pairing::Strict;
          } else {
            throw Error(ErrorKind::Config, "expected positional or strict");
          }
        }));
    f.push_back(text_field(
        "reward.l1_aggregation",
        [](const AppConfig& c) {
          return std::string(c.reward.l1.aggregation == L1Options::Aggregation::Mean ? "mean" : "sum");
        },
        [](AppConfig& c, std::string_view v) {
          if (v == "mean") {
            c.reward.l1.aggregation = L1Options::Aggregation::Mean;
          } else if (v == "sum") {
            c.reward.l1.aggregation = L1Options::Aggregation::Sum;
          } else {
            throw Error(ErrorKind::Config, "expected mean or sum");
          }
        }));
    f.push_back(bool_field("reward.l1_include_points", [](AppConfig& c) -> bool& { return c.reward.l1.include_points; }));
    f.push_back(number_field<double>("reward.l1_missing_point_penalty", [](AppConfig& c) -> double& { return c.reward.l1.missing_point_penalty; }));
    // embedding
    f.push_back(text_field(
        "embedding.provider", [](const AppConfig& c) { return std::string(embedding::to_string(c.embedding.provider)); },
        [](AppConfig& c, std::string_view v) { c.embedding.provider = embedding::embedder_from_string(v); }));
    f.push_back(text_field(
        "embedding.url", [](const AppConfig& c) { return c.embedding.url; },
        [](AppConfig& c, std::string_view v) { c.embedding.url = std::string(v); }));
    f.push_back(number_field<int>("embedding.timeout_ms", [](AppConfig& c) -> int& { return c.embedding.timeout_ms; }));
    f.push_back(bool_field("embedding.fallback", [](AppConfig& c) -> bool& { return c.embedding.fallback; }));
    f.push_back(number_field<int>("embedding.dim", [](AppConfig& c) -> int& { return c.embedding.dim; }));
    f.push_back(number_field<std::uint64_t>("embedding.seed", [](AppConfig& c) -> std::uint64_t& { return c.embedding.seed; }));
    // prompt and output
    f.push_back(text_field(
        "prompt.brevity", [](const AppConfig& c) { return c.brevity; },
        [](AppConfig& c, std::string_view v) { c.brevity = resolve_brevity(v); }));
    f.push_back(text_field(
        "output.dir", [](const AppConfig& c) { return c.out_dir; },
        [](AppConfig& c, std::string_view v) { c.out_dir = std::string(v); }));
    return f;
  }();
  return all;
}

const Field& find_field(std::string_view key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw Error(ErrorKind::Config, "unknown setting '" + std::string(key) + "'");
}

const std::string kDefaultSource = "default";

std::string toml_scalar_text(const Field& f, const toml::node& n) {
  switch (f.kind) {
    case Kind::Bool:
      if (auto v = n.value_exact<bool>()) return *v ? "true" : "false";
      break;
    case Kind::Int:
      if (auto v = n.value_exact<std::int64_t>()) return std::to_string(*v);
      break;
    case Kind::Float:
      if (n.is_integer()) return std::to_string(*n.value_exact<std::int64_t>());
      if (auto v = n.value_exact<double>()) return format_number(*v);
      break;
    case Kind::String:
      if (auto v = n.value_exact<std::string>()) return *v;
      break;
  }
  fail(f.key, "wrong value type");
}

std::string json_scalar_text(const Field& f, const nlohmann::json& n) {
  switch (f.kind) {
    case Kind::Bool:
      if (n.is_boolean()) return n.get<bool>() ? "true" : "false";
      break;
    case Kind::Int:
      if (n.is_number_integer()) return n.dump();
      break;
    case Kind::Float:
      if (n.is_number_integer()) return n.dump();
      if (n.is_number_float()) return format_number(n.get<double>());
      // JSON has no NaN literal
      if (n.is_string() && n.get<std::string>() == "nan") return "nan";
      break;
    case Kind::String:
      if (n.is_string()) return n.get<std::string>();
      break;
  }
  fail(f.key, "wrong value type");
}

}  // namespace

const std::vector<BrevityPreset>& brevity_presets() {
  static const std::vector<BrevityPreset> presets{
      {"one-sentence", "one sentence"},
      {"shorter-better", "the shorter the better"},
  };
  return presets;
}

std::string resolve_brevity(std::string_view text_or_preset) {
  for (const auto& p : brevity_presets()) {
    if (p.name == text_or_preset) return std::string(p.text);
  }
  return std::string(text_or_preset);
}

AppConfig::AppConfig() {
  // use every core unless told otherwise; results do not depend on it
  train.threads = 0;
}

void AppConfig::set(std::string_view key, std::string_view value, std::string source) {
  const Field& f = find_field(key);
  f.set(*this, value);
  sources_.insert_or_assign(f.key, std::move(source));
}

std::string AppConfig::get(std::string_view key) const { return find_field(key).get(*this); }

const std::string& AppConfig::source(std::string_view key) const {
  const Field& f = find_field(key);
  const auto it = sources_.find(f.key);
  return it == sources_.end() ? kDefaultSource : it->second;
}

reward::RewardConfig AppConfig::reward_config() const {
  reward::RewardConfig r = reward;
  r.ablation = train.ablation;
  r.embedder_id = embedding.provider;
  return r;
}

grpo::TrainConfig AppConfig::train_config() const { return train; }

void AppConfig::validate() const {
  train.validate();
  reward_config().validate();
  if (reward.tokenizer_id == text::TokenizerId::Custom) {
    fail("reward.tokenizer", "'custom' tokenizers are only available through the library API");
  }
  if (embedding.provider == embedding::EmbedderId::External && embedding.url.empty()) {
    fail("embedding.url", "required when embedding.provider is external");
  }
  if (embedding.timeout_ms <= 0) fail("embedding.timeout_ms", "must be > 0");
  if (embedding.dim < 1) fail("embedding.dim", "must be >= 1");
  if (train.seed > std::uint64_t(std::numeric_limits<std::int64_t>::max())) {
    fail("train.seed", "must fit in a signed 64-bit integer");
  }
  if (embedding.seed > std::uint64_t(std::numeric_limits<std::int64_t>::max())) {
    fail("embedding.seed", "must fit in a signed 64-bit integer");
  }
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

std::string env_name(std::string_view key) {
  std::string out = "TFORGE_";
  for (char c : key) out += c == '.' ? '_' : char(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

void apply_file(AppConfig& cfg, const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error(ErrorKind::Config, "cannot read config file " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string content = buf.str();
  const std::string source = "file " + file.string();

  auto apply = [&](const std::string& section, const std::string& name, auto&& to_text) {
    const std::string key = section + "." + name;
    const Field& f = find_field(key);
    cfg.set(key, to_text(f), source);
  };

  if (file.extension() == ".json") {
    const auto j = nlohmann::json::parse(content, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw Error(ErrorKind::Config, file.string() + ": not a JSON object");
    }
    for (const auto& [section, table] : j.items()) {
      if (!table.is_object()) throw Error(ErrorKind::Config, section + ": expected a table");
      for (const auto& [name, value] : table.items()) {
        apply(section, name, [&](const Field& f) { return json_scalar_text(f, value); });
      }
    }
    return;
  }

  toml::table doc;
  try {
    doc = toml::parse(content, file.string());
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << file.string() << ":" << e.source().begin.line << ": " << e.description();
    throw Error(ErrorKind::Config, msg.str());
  }
  for (const auto& [section, node] : doc) {
    const auto* table = node.as_table();
    if (!table) throw Error(ErrorKind::Config, std::string(section.str()) + ": expected a table");
    for (const auto& [name, value] : *table) {
      apply(std::string(section.str()), std::string(name.str()),
            [&](const Field& f) { return toml_scalar_text(f, value); });
    }
  }
}

void apply_env(AppConfig& cfg, const std::function<const char*(const char*)>& lookup) {
  for (const auto& f : fields()) {
    const std::string name = env_name(f.key);
    if (const char* v = lookup(name.c_str())) cfg.set(f.key, v, "env " + name);
  }
}

std::string to_toml(const AppConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    const auto dot = f.key.find('.');
    const std::string s = f.key.substr(0, dot);
    if (s != section) {
      if (!section.empty()) out << '\n';
      out << '[' << s << "]\n";
      section = s;
    }
    out << f.key.substr(dot + 1) << " = " << f.get(cfg) << "  # source: " << cfg.source(f.key)
        << '\n';
  }
  return out.str();
}

std::unique_ptr<embedding::EmbeddingProvider> make_provider(const EmbeddingSettings& settings) {
  auto hashed = [&] { return std::make_unique<embedding::HashedBowEmbedder>(settings.dim, settings.seed); };
  if (settings.provider == embedding::EmbedderId::HashedBow) return hashed();
  auto http = std::make_unique<embedding::HttpEmbeddingProvider>(
      embedding::HttpProviderOptions{settings.url, std::chrono::milliseconds(settings.timeout_ms)});
  if (!settings.fallback) return http;
  return std::make_unique<embedding::FallbackEmbeddingProvider>(std::move(http), hashed());
}

}  // namespace tforge::config
