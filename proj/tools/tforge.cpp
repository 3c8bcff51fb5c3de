// tforge: reward scoring, toy GRPO training and benchmark evaluation.
//
// Exit codes: 0 success, 1 empty or degenerate result, 2 fatal input/config error.

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include "tforge/config.hpp"
#include "tforge/error.hpp"
#include "tforge/eval.hpp"
#include "tforge/experiment.hpp"
#include "tforge/numfmt.hpp"

using namespace tforge;

namespace {

constexpr int kOk = 0;
constexpr int kEmpty = 1;
constexpr int kFatal = 2;

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::EmptySplit:
    case ErrorKind::UndefinedFactor:
    case ErrorKind::DegenerateEmbedding:
    case ErrorKind::UndefinedDenominator:
      return kEmpty;
    default:
      return kFatal;
  }
}

/// Flags that map onto config keys; applied last so they win over file and env.
struct Overrides {
  std::vector<std::pair<std::string, std::string>> values;

  void add(const std::string& key, const std::string& value, const std::string& flag) {
    values.emplace_back(key, value);
    flags.push_back(flag);
  }
  std::vector<std::string> flags;
};

int worker_count(int threads, std::size_t jobs) {
  int n = threads;
  if (n == 0) n = int(std::max(1U, std::thread::hardware_concurrency()));
  return std::max(1, std::min(n, int(jobs)));
}

std::vector<eval::RecordScore> score_all(const std::vector<eval::EvalRecord>& records,
                                         const config::AppConfig& cfg,
                                         const embedding::EmbeddingProvider& provider) {
  std::vector<eval::RecordScore> scores(records.size());
  const reward::RewardConfig rcfg = cfg.reward_config();
  const int workers = worker_count(cfg.train.threads, records.size());
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = std::size_t(w); i < records.size(); i += std::size_t(workers)) {
            scores[i] = eval::score_record(records[i], rcfg, cfg.train.order, provider);
          }
        } catch (...) {
          errors[std::size_t(w)] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  // reports list records by id; ties keep input order
  std::stable_sort(scores.begin(), scores.end(),
                   [](const auto& a, const auto& b) { return a.id < b.id; });
  return scores;
}

void report_skipped(const eval::IngestResult& in) {
  for (const auto& d : in.diagnostics) std::cerr << "skipped " << d << '\n';
}

std::ofstream open_out(const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + file.string());
  return out;
}

void make_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
}

int cmd_score(const config::AppConfig& cfg, const std::string& input, const std::string& gt,
              const std::string& output) {
  std::optional<eval::Overlay> overlay;
  if (!gt.empty()) overlay = eval::load_overlay(gt);
  const eval::IngestResult in = eval::ingest(input, overlay ? &*overlay : nullptr);
  report_skipped(in);
  const auto provider = config::make_provider(cfg.embedding);
  const auto scores = score_all(in.records, cfg, *provider);

  std::ofstream file;
  if (!output.empty()) file = open_out(output);
  std::ostream& out = output.empty() ? std::cout : file;
  std::size_t diagnostics = 0;
  double r_train = 0.0;
  for (const auto& s : scores) {
    out << eval::to_json(s).dump() << '\n';
    diagnostics += s.breakdown.diagnostics.size();
    r_train += s.breakdown.r_train;
  }
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failed for " + (output.empty() ? "stdout" : output));
  std::cerr << "scored " << scores.size() << " records, skipped " << in.skipped << ", "
            << diagnostics << " diagnostics";
  if (!scores.empty()) {
    std::cerr << ", mean r_train " << format_fixed(r_train / double(scores.size()), 4);
  }
  std::cerr << '\n';
  return scores.empty() ? kEmpty : kOk;
}

int cmd_train_toy(const config::AppConfig& cfg) {
  const grpo::TrainConfig train = cfg.train_config();
  const auto provider = config::make_provider(cfg.embedding);
  const std::filesystem::path dir = cfg.out_dir;
  make_dir(dir);
  std::ofstream log = open_out(dir / "run_log.jsonl");
  const grpo::RunReport report = grpo::run_experiment(train, *provider, &log);
  log.flush();
  if (!log) throw Error(ErrorKind::Io, "write failed for run_log.jsonl");

  nlohmann::ordered_json j = grpo::to_json(report);
  j["order"] = train.order.code();
  j["seed"] = train.seed;
  std::ofstream rep = open_out(dir / "report.json");
  rep << j.dump(2) << '\n';

  for (const auto& e : report.final_eval) {
    std::cout << e.label << ": mean_len_c=" << format_fixed(e.mean_len_c, 3)
              << " mean_len_d=" << format_fixed(e.mean_len_d, 3)
              << " success_rate=" << format_fixed(e.success_rate, 4) << '\n';
  }
  return kOk;
}

int cmd_eval(const config::AppConfig& cfg, const std::string& input, const std::string& baseline) {
  const eval::IngestResult in = eval::ingest(input);
  report_skipped(in);
  if (in.records.empty()) {
    throw Error(ErrorKind::EmptySplit, "no valid records in " + input);
  }
  const auto provider = config::make_provider(cfg.embedding);
  const auto scores = score_all(in.records, cfg, *provider);
  const auto metrics = eval::aggregate_splits(scores);

  std::vector<eval::ComparisonRow> rows;
  if (!baseline.empty()) {
    std::ifstream bf(baseline, std::ios::binary);
    if (!bf) throw Error(ErrorKind::Io, "cannot read " + baseline);
    const auto bj = nlohmann::json::parse(bf, nullptr, false);
    if (bj.is_discarded()) throw Error(ErrorKind::MalformedPayload, baseline + ": invalid JSON");
    const auto& splits = bj.contains("splits") ? bj["splits"] : bj;
    for (const auto& sj : splits.is_array() ? splits : nlohmann::json::array({splits})) {
      const auto base = eval::split_metrics_from_json(sj);
      for (const auto& m : metrics) {
        if (m.split == base.split) rows.push_back(eval::compare(base, m));
      }
    }
  }

  std::set<std::string> suffixes;
  for (const auto& r : in.records) {
    if (r.brevity_suffix) suffixes.insert(*r.brevity_suffix);
  }
  nlohmann::ordered_json meta;
  meta["input"] = std::filesystem::path(input).filename().string();
  meta["brevity"] = cfg.brevity;
  meta["brevity_source"] = cfg.source("prompt.brevity");
  meta["record_brevity_suffixes"] = suffixes;
  meta["order"] = cfg.train.order.code();
  meta["tokenizer"] = text::to_string(cfg.reward.tokenizer_id);
  meta["records"] = in.records.size();
  meta["skipped"] = in.skipped;
  meta["skipped_lines"] = in.diagnostics;

  eval::emit_report(cfg.out_dir, scores, metrics, rows, meta);

  bool degenerate = false;
  for (const auto& m : metrics) {
    std::cout << m.split << ": n=" << m.n << " cIoU=" << format_number(m.ciou)
              << " gIoU=" << format_number(m.giou) << " mean_tokens=" << format_number(m.mean_tokens)
              << " median_tokens=" << format_number(m.median_tokens) << '\n';
    for (const auto& d : m.diagnostics) std::cerr << d << '\n';
    degenerate = degenerate || m.degenerate();
  }
  for (const auto& r : rows) std::cout << r.split << ": " << eval::format_subrow(r) << '\n';
  return degenerate ? kEmpty : kOk;
}

std::vector<eval::SplitMetrics> load_metrics(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path);
  const auto j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::MalformedPayload, path + ": invalid JSON");
  std::vector<eval::SplitMetrics> out;
  const auto& splits = j.is_object() && j.contains("splits") ? j["splits"] : j;
  if (splits.is_array()) {
    for (const auto& s : splits) out.push_back(eval::split_metrics_from_json(s));
  } else {
    out.push_back(eval::split_metrics_from_json(splits));
  }
  return out;
}

int cmd_compare(const config::AppConfig& cfg, const std::string& base_path,
                const std::string& cand_path) {
  const auto base = load_metrics(base_path);
  const auto cand = load_metrics(cand_path);
  std::vector<eval::ComparisonRow> rows;
  for (const auto& b : base) {
    for (const auto& c : cand) {
      if (b.split == c.split) rows.push_back(eval::compare(b, c));
    }
  }
  if (rows.empty()) {
    throw Error(ErrorKind::EmptySplit, "no split appears in both reports");
  }
  for (const auto& r : rows) {
    std::cout << r.split << ": " << eval::format_subrow(r) << " (tokens "
              << format_fixed(r.baseline_tokens, 1) << " -> " << format_fixed(r.candidate_tokens, 1)
              << ", gIoU " << (r.delta_giou >= 0.0 ? "+" : "") << format_fixed(r.delta_giou, 1)
              << ")\n";
  }
  if (cfg.source("output.dir") != "default") {
    make_dir(cfg.out_dir);
    eval::write_comparison_csv(std::filesystem::path(cfg.out_dir) / "comparison.csv", rows);
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tforge: reward scoring, toy GRPO training and benchmark evaluation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  bool print_config = false;
  Overrides ov;
  app.add_option("--config", config_path, "TOML or JSON config file")->check(CLI::ExistingFile);
  app.add_flag("--print-config", print_config, "print the effective configuration and exit");

  auto value_flag = [&](const std::string& name, const std::string& key, const std::string& help) {
    return app.add_option_function<std::string>(
        name, [&ov, key, name](const std::string& v) { ov.add(key, v, name); }, help);
  };
  auto bool_flag = [&](const std::string& name, const std::string& key, const std::string& value,
                       const std::string& help) {
    return app.add_flag_callback(name, [&ov, key, value, name] { ov.add(key, value, name); }, help);
  };
  value_flag("--seed", "train.seed", "master seed");
  value_flag("--steps", "train.steps", "training steps");
  value_flag("--order", "train.order", "section order")
      ->check(CLI::IsMember({"cAd", "Acd", "dcA", "cdA"}));
  bool_flag("--no-gate", "reward.gate", "false", "add the distillation reward regardless of IoU");
  bool_flag("--no-sim", "reward.sim", "false", "force the similarity factor to 1");
  bool_flag("--no-concise", "reward.concise", "false", "force the conciseness factor to 1");
  bool_flag("--no-distill", "reward.distill", "false", "drop the distillation reward");
  value_flag("--brevity", "prompt.brevity",
             "brevity suffix text or preset (one-sentence, shorter-better)");
  value_flag("--embedder", "embedding.provider", "embedding provider")
      ->check(CLI::IsMember({"hashed-bow", "external"}));
  value_flag("--embed-url", "embedding.url", "external embedding endpoint");
  bool_flag("--embed-fallback", "embedding.fallback", "true",
            "fall back to the hashed embedder when the external one fails");
  value_flag("--threads", "train.threads", "worker threads (0 = all cores)");
  value_flag("--out-dir", "output.dir", "output directory");
  app.add_option_function<std::vector<std::string>>(
      "--set",
      [&ov](const std::vector<std::string>& items) {
        for (const auto& item : items) {
          const auto eq = item.find('=');
          if (eq == std::string::npos) {
            throw CLI::ValidationError("--set", "expected key=value, got '" + item + "'");
          }
          ov.add(item.substr(0, eq), item.substr(eq + 1), "--set");
        }
      },
      "override any setting, e.g. --set train.steps=500");

  std::string input, gt, output, baseline, base_report, cand_report;
  auto* score = app.add_subcommand("score", "score generations and print reward breakdowns");
  score->add_option("input", input, "records (JSONL)")->required();
  score->add_option("--gt", gt, "ground truth JSONL merged by record id");
  score->add_option("-o,--output", output, "write breakdowns here instead of stdout");
  auto* train = app.add_subcommand("train-toy", "train the toy policy with GRPO");
  auto* evalc = app.add_subcommand("eval", "compute split metrics and write CSV reports");
  evalc->add_option("input", input, "prediction records (JSONL)")->required();
  evalc->add_option("--baseline", baseline, "metrics.json to compare each split against");
  auto* compare = app.add_subcommand("compare", "token reduction factor and accuracy deltas");
  compare->add_option("baseline", base_report, "baseline metrics JSON")->required();
  compare->add_option("candidate", cand_report, "candidate metrics JSON")->required();
  auto* printc = app.add_subcommand("print-config", "print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kFatal;
  }

  try {
    config::AppConfig cfg;
    if (!config_path.empty()) config::apply_file(cfg, config_path);
    config::apply_env(cfg);
    for (std::size_t i = 0; i < ov.values.size(); ++i) {
      cfg.set(ov.values[i].first, ov.values[i].second, "flag " + ov.flags[i]);
    }
    cfg.validate();

    if (print_config || printc->parsed()) {
      std::cout << config::to_toml(cfg);
      return kOk;
    }
    if (score->parsed()) return cmd_score(cfg, input, gt, output);
    if (train->parsed()) return cmd_train_toy(cfg);
    if (evalc->parsed()) return cmd_eval(cfg, input, baseline);
    if (compare->parsed()) return cmd_compare(cfg, base_report, cand_report);
  } catch (const Error& e) {
    std::cerr << "tforge: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "tforge: " << e.what() << '\n';
    return kFatal;
  }
  return kFatal;
}
