// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "generators.hpp"
#include "surrogate_fixture.hpp"
#include "tforge/eval.hpp"
#include "tforge/experiment.hpp"
#include "tforge/reward.hpp"

using namespace tforge;
namespace fs = std::filesystem;
using response::SectionOrder;
using response::StructuredResponse;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string shell_quote(const fs::path& p) { return "\"" + p.string() + "\""; }

/// Runs a shell command and returns (exit status, stdout).
std::pair<int, std::string> run(const std::string& cmd) {
  std::string out;
  FILE* pipe = popen((cmd + " 2>/dev/null").c_str(), "r");
  if (!pipe) return {-1, out};
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  const int status = pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "tforge_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---------------------------------------------------------------------------------------
// Straight-line reference for the reward, written without the library's helpers.

const char* const kWords[] = {"red", "box", "left", "cup", "table", "hand", "near", "edge",
                              "blue", "glass", "holds", "the", "drink", "top", "2"};

std::string words(gen::Rng& rng, int n) {
  std::string s;
  for (int i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += kWords[gen::integer(rng, 0, int(std::size(kWords)) - 1)];
  }
  return s;
}

struct RefBox {
  double x1, y1, x2, y2;
};

double ref_iou(RefBox a, RefBox b) {
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  const double uni = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double ref_cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double dot = 0, aa = 0, bb = 0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return std::clamp(dot / std::sqrt(aa * bb), -1.0, 1.0);
}

RefBox random_int_box(gen::Rng& rng) {
  const int x1 = gen::integer(rng, 0, 50), y1 = gen::integer(rng, 0, 50);
  return {double(x1), double(y1), double(x1 + gen::integer(rng, 1, 30)), double(y1 + gen::integer(rng, 1, 30))};
}

Outcome reward_exactness() {
  const auto t0 = std::chrono::steady_clock::now();
  gen::Rng rng(1001);
  const embedding::HashedBowEmbedder emb;
  const reward::RewardConfig cfg;
  double worst = 0.0;
  int cases = 0;
  for (; cases < 200; ++cases) {
    const RefBox gt = random_int_box(rng);
    // a third of predictions are small perturbations so the accuracy terms fire
    RefBox pred = random_int_box(rng);
    if (cases % 3 == 0) pred = {gt.x1 + gen::integer(rng, -3, 3), gt.y1 + gen::integer(rng, -3, 3), gt.x2, gt.y2};
    const int nc = gen::integer(rng, 1, 12), nd = gen::integer(rng, 1, 40);
    const std::string c = words(rng, nc), d = words(rng, nd);
    const bool drop_concise = cases % 10 == 7, drop_answer = cases % 10 == 9;

    std::string text;
    if (!drop_concise) text += "<think>" + c + "</think>";
    if (!drop_answer) {
      text += "<answer>{\"bbox\":[" + std::to_string(int(pred.x1)) + "," + std::to_string(int(pred.y1)) + "," +
              std::to_string(int(pred.x2)) + "," + std::to_string(int(pred.y2)) + "]}</answer>";
    }
    text += "<d_think>" + d + "</d_think>";

    const geometry::Answer gt_answer{geometry::make_box(gt.x1, gt.y1, gt.x2, gt.y2), {}};
    const auto got = reward::total_reward(response::parse(text), gt_answer, SectionOrder::training(), cfg, emb);

    const int format = (drop_concise || drop_answer) ? 0 : 1;
    double iou = 0.0, l1 = 0.0;
    int iou_b = 0, l1_b = 0;
    if (!drop_answer) {
      iou = ref_iou(pred, gt);
      l1 = (std::abs(pred.x1 - gt.x1) + std::abs(pred.y1 - gt.y1) + std::abs(pred.x2 - gt.x2) +
            std::abs(pred.y2 - gt.y2)) / 4.0;
      iou_b = iou >= 0.5 ? 1 : 0;
      l1_b = l1 <= 10.0 ? 1 : 0;
    }
    const double r_task = format + iou_b + l1_b;
    const double s_concise = std::max(0.0, 1.0 - double(nc) / double(nd));
    double r_distill = 0.0;
    if (!drop_concise) r_distill = ref_cosine(emb.embed(c), emb.embed(d)) * s_concise;
    const double r_train = r_task + (iou > 0.5 ? r_distill : 0.0);

    for (double e : {std::abs(got.r_task - r_task), std::abs(got.r_distill - r_distill),
                     std::abs(got.r_train - r_train),
                     std::abs(reward::conciseness_score(std::size_t(nc), std::size_t(nd)) - s_concise)}) {
      worst = std::max(worst, e);
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << cases << " cases, max abs error " << worst << ", " << secs << " s";
  return {worst <= 1e-12 && secs < 1.0, os.str()};
}

Outcome gate_exactness() {
  gen::Rng rng(1002);
  const embedding::HashedBowEmbedder emb;
  const reward::RewardConfig cfg;
  const geometry::Answer gt{geometry::make_box(0.0, 0.0, 10.0, 10.0), {}};
  long below = 0, above = 0, violations = 0;
  for (int i = 0; i < 12000; ++i) {
    // heights on a 0.25 lattice put many cases exactly on IoU 0.5
    const double h = gen::integer(rng, 1, 60) * 0.25;
    const double x = gen::coin(rng) ? 0.0 : gen::integer(rng, 0, 12) * 0.5;
    StructuredResponse r;
    r.order = SectionOrder::training();
    r.concise = words(rng, gen::integer(rng, 1, 8));
    r.detailed = words(rng, gen::integer(rng, 1, 30));
    r.answer = geometry::Answer{geometry::make_box(x, 0.0, x + 10.0, h), {}};
    const auto b = reward::total_reward(response::parse(response::serialize(r)), gt, r.order, cfg, emb);
    if (b.iou_value <= 0.5) {
      ++below;
      if (!(b.r_train == b.r_task)) ++violations;
    } else {
      ++above;
      if (b.s_sim * b.s_concise != 0.0 && !(b.r_train > b.r_task)) ++violations;
    }
  }
  std::ostringstream os;
  os << below + above << " cases (" << below << " at or below the gate, " << above << " above), "
     << violations << " violations";
  return {violations == 0 && below > 0 && above > 0 && below + above >= 10000, os.str()};
}

Outcome geometry_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  gen::Rng rng(1003);
  constexpr int kScale = 100, kExtent = 10, kSide = kScale * kExtent;
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const geometry::Boxd a = gen::box(rng, kExtent), b = gen::box(rng, kExtent);
    long inter = 0, uni = 0;
    for (int r = 0; r < kSide; ++r) {
      const double cy = (r + 0.5) / kScale;
      const bool ya = a.min().y() <= cy && cy < a.max().y();
      const bool yb = b.min().y() <= cy && cy < b.max().y();
      if (!ya && !yb) continue;
      for (int c = 0; c < kSide; ++c) {
        const double cx = (c + 0.5) / kScale;
        const bool ia = ya && a.min().x() <= cx && cx < a.max().x();
        const bool ib = yb && b.min().x() <= cx && cx < b.max().x();
        inter += ia && ib;
        uni += ia || ib;
      }
    }
    const double brute = uni ? double(inter) / double(uni) : 0.0;
    worst = std::max(worst, std::abs(brute - geometry::box_iou(a, b)));
  }
  long mask_mismatches = 0;
  for (int i = 0; i < 500; ++i) {
    const int w = gen::integer(rng, 1, 40), h = gen::integer(rng, 1, 40);
    const auto ga = gen::grid(rng, w, h, gen::uniform(rng, 0, 1));
    const auto gb = gen::grid(rng, w, h, gen::uniform(rng, 0, 1));
    std::uint64_t inter = 0, uni = 0;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        inter += ga(r, c) && gb(r, c);
        uni += ga(r, c) || gb(r, c);
      }
    }
    const auto o = geometry::mask_iou(geometry::Mask::from_grid(ga), geometry::Mask::from_grid(gb));
    const double expected = uni ? double(inter) / double(uni) : 1.0;
    if (o.intersection != inter || o.union_count != uni || o.iou != expected) ++mask_mismatches;
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "1000 box pairs, max |box_iou - raster| " << worst << "; 500 masks, " << mask_mismatches
     << " mismatches; " << secs << " s";
  return {worst <= 0.02 && mask_mismatches == 0 && secs < 30.0, os.str()};
}

eval::RecordScore record(std::uint64_t inter, std::uint64_t uni) {
  eval::RecordScore s;
  s.id = std::to_string(inter) + "/" + std::to_string(uni);
  s.split = "fixture";
  s.intersection = inter;
  s.union_count = uni;
  s.iou = uni ? double(inter) / double(uni) : 1.0;
  return s;
}

Outcome split_metrics() {
  const std::vector<eval::RecordScore> two{record(50, 150), record(0, 100)};
  const auto m = eval::aggregate(two, "fixture");
  const bool ok = m.ciou == 0.2 && m.giou == 1.0 / 6.0;
  gen::Rng rng(1004);
  int single_mismatch = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto uni = std::uint64_t(gen::integer(rng, 1, 1 << 20));
    const auto inter = std::uint64_t(gen::integer(rng, 0, int(uni)));
    const std::vector<eval::RecordScore> one{record(inter, uni)};
    const auto s = eval::aggregate(one, "single");
    if (s.ciou != s.giou) ++single_mismatch;
  }
  std::ostringstream os;
  os.precision(17);
  os << "cIoU " << m.ciou << ", gIoU " << m.giou << "; " << single_mismatch
     << " single-record splits with cIoU != gIoU";
  return {ok && single_mismatch == 0, os.str()};
}

Outcome advantage_sweep() {
  grpo::TrainConfig cfg;
  cfg.steps = 500;
  cfg.eval_samples = 8;
  const embedding::HashedBowEmbedder emb;
  long groups = 0, flat = 0, bad = 0;
  grpo::run_experiment(cfg, emb, nullptr, [&](int, const grpo::GroupRollout& g) {
    ++groups;
    const double mean_r = g.rewards.mean();
    const double std_r = std::sqrt((g.rewards.array() - mean_r).square().mean());
    if (std_r > cfg.adv_eps) {
      const double mean_a = g.advantages.mean();
      const double std_a = std::sqrt((g.advantages.array() - mean_a).square().mean());
      if (std::abs(mean_a) > 1e-9 || std::abs(std_a - 1.0) > 1e-9) ++bad;
    } else {
      ++flat;
      if (!g.advantages.isZero(0.0)) ++bad;
    }
  });
  std::ostringstream os;
  os << groups << " groups over 500 steps (" << flat << " zero-variance), " << bad << " violations";
  return {bad == 0 && groups == 500L * cfg.n_tasks, os.str()};
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  gen::Rng rng(1006);
  double worst = 0.0;
  int max_params = 0;
  for (int i = 0; i < 50; ++i) {
    const auto sc = gen::surrogate_case(rng);
    max_params = std::max(max_params, int(sc.theta.size()));
    worst = std::max(worst, gen::gradient_error(sc));
  }
  const double secs = seconds_since(t0);
  std::ostringstream os;
  os << "50 configurations (<= " << max_params << " params), max relative error " << worst << ", "
     << secs << " s";
  return {worst <= 1e-5 && max_params <= 20 && secs < 10.0, os.str()};
}

struct ToyResult {
  grpo::EvalSummary infer;
  double seconds = 0.0;
};

ToyResult toy_run(const std::function<void(grpo::TrainConfig&)>& tweak) {
  grpo::TrainConfig cfg;
  tweak(cfg);
  const embedding::HashedBowEmbedder emb;
  const auto t0 = std::chrono::steady_clock::now();
  const auto report = grpo::run_experiment(cfg, emb);
  return {report.eval("infer"), seconds_since(t0)};
}

Outcome compression_direction() {
  const auto on = toy_run([](grpo::TrainConfig&) {});
  const auto off = toy_run([](grpo::TrainConfig& c) { c.ablation.distill = false; });
  const auto again = toy_run([](grpo::TrainConfig&) {});
  const bool deterministic = again.infer.mean_len_c == on.infer.mean_len_c &&
                             again.infer.success_rate == on.infer.success_rate;
  std::ostringstream os;
  os << "tau_c " << on.infer.mean_len_c << " (on) vs " << off.infer.mean_len_c << " (off), success "
     << on.infer.success_rate << " vs " << off.infer.success_rate << ", slowest run "
     << std::max(on.seconds, off.seconds) << " s";
  return {on.infer.mean_len_c <= 0.5 * off.infer.mean_len_c &&
              on.infer.success_rate >= off.infer.success_rate - 0.05 && deterministic &&
              std::max(on.seconds, off.seconds) < 60.0,
          os.str()};
}

Outcome order_direction() {
  std::ostringstream os;
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto first = toy_run([&](grpo::TrainConfig& c) { c.seed = seed; });
    const auto inverted = toy_run([&](grpo::TrainConfig& c) {
      c.seed = seed;
      c.order = SectionOrder::from_code("dcA");
    });
    ok = ok && first.infer.mean_len_c < inverted.infer.mean_len_c;
    os << (seed ? "; " : "") << "seed " << seed << ": cAd " << first.infer.mean_len_c << " vs dcA "
       << inverted.infer.mean_len_c;
  }
  return {ok, os.str()};
}

Outcome compare_arithmetic() {
  const std::string fixtures = TFORGE_FIXTURES;
  const auto [status, out] = run(std::string("\"") + TFORGE_BINARY + "\" compare " +
                                 shell_quote(fixtures + "/compare_baseline.json") + " " +
                                 shell_quote(fixtures + "/compare_candidate.json"));
  const bool ok = status == 0 && out.find("4.9×↓, +3.9") != std::string::npos;
  std::string line = out.substr(0, out.find('\n'));
  return {ok, "exit " + std::to_string(status) + ": " + line};
}

Outcome parser_totality() {
  gen::Rng rng(1010);
  long crashes = 0;
  for (int i = 0; i < 100000; ++i) {
    const std::string s = gen::fuzz_bytes(rng, 64);
    try {
      if (response::parse(s).raw != s) ++crashes;
    } catch (...) {
      ++crashes;
    }
  }
  long broken = 0;
  int trips = 0;
  for (const auto& code : gen::order_codes()) {
    const SectionOrder order = SectionOrder::from_code(code);
    for (int i = 0; i < 250; ++i, ++trips) {
      const StructuredResponse r = gen::response(rng, order);
      const std::string text = response::serialize(r);
      const StructuredResponse back = response::parse(text);
      if (!back.diagnostics.empty() || !back.same_structure(r) || response::serialize(back) != text) ++broken;
    }
  }
  std::ostringstream os;
  os << "100000 fuzz inputs, " << crashes << " failures; " << trips << " round trips over 4 orders, "
     << broken << " mismatches";
  return {crashes == 0 && broken == 0, os.str()};
}

Outcome determinism() {
  const std::string bin = std::string("\"") + TFORGE_BINARY + "\"";
  const fs::path a = scratch("train_a"), b = scratch("train_b");
  const int s1 = run(bin + " train-toy --seed 0 --out-dir " + shell_quote(a)).first;
  const int s2 = run(bin + " train-toy --seed 0 --out-dir " + shell_quote(b)).first;
  const std::string log_a = slurp(a / "run_log.jsonl");
  const bool logs_equal = s1 == 0 && s2 == 0 && !log_a.empty() && log_a == slurp(b / "run_log.jsonl");

  const fs::path input = fs::path(TFORGE_FIXTURES) / "eval_records.jsonl";
  const fs::path e1 = scratch("eval_a"), e2 = scratch("eval_b");
  const int s3 = run(bin + " eval " + shell_quote(input) + " --out-dir " + shell_quote(e1)).first;
  const int s4 = run(bin + " eval " + shell_quote(input) + " --out-dir " + shell_quote(e2)).first;
  int csvs = 0, differing = 0;
  for (const auto& entry : fs::directory_iterator(e1)) {
    if (entry.path().extension() != ".csv") continue;
    ++csvs;
    if (slurp(entry.path()) != slurp(e2 / entry.path().filename())) ++differing;
  }
  std::ostringstream os;
  os << "run logs " << (logs_equal ? "identical" : "differ") << " (" << log_a.size() << " bytes); " << csvs
     << " eval CSVs, " << differing << " differ";
  return {logs_equal && s3 == 0 && s4 == 0 && csvs > 0 && differing == 0, os.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"reward formula exactness", reward_exactness},
      {"gate exactness", gate_exactness},
      {"geometry oracle equivalence", geometry_oracle},
      {"cIoU/gIoU correctness", split_metrics},
      {"advantage normalization", advantage_sweep},
      {"surrogate gradient check", gradient_check},
      {"thought-compression direction", compression_direction},
      {"order-ablation direction", order_direction},
      {"comparison arithmetic", compare_arithmetic},
      {"parser totality and round trip", parser_totality},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << " -- "
              << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
