#include "tforge/toy_policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tforge/embedding.hpp"
#include "tforge/error.hpp"

namespace tforge::grpo {

using response::Section;

namespace {

constexpr std::array<const char*, 16> kWords = {
    "red", "blue", "left", "right", "top",  "bottom", "small", "large",
    "near", "far", "car",  "dog",   "tree", "window", "person", "sign"};

int rationale_index(Section s) { return s == Section::Concise ? 0 : 1; }

int dominant_token(const std::vector<int>& tokens, int vocab) {
  std::vector<int> counts(std::size_t(vocab), 0);
  for (int t : tokens) ++counts[std::size_t(t)];
  return int(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::string join_words(const std::vector<int>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += token_word(tokens[i]);
  }
  return out;
}

}  // namespace

double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  using embedding::splitmix64;
  return splitmix64(splitmix64(splitmix64(splitmix64(master) ^ a) ^ b) ^ c);
}

std::string token_word(int token) {
  if (token >= 0 && token < int(kWords.size())) return kWords[std::size_t(token)];
  return "w" + std::to_string(token);
}

std::vector<ToyTask> make_toy_tasks(int count, const PolicyShape& shape, std::uint64_t seed) {
  if (count <= 0) throw Error(ErrorKind::Config, "need at least one toy task");
  if (shape.vocab < 2) throw Error(ErrorKind::Config, "toy vocabulary needs at least 2 tokens");
  std::mt19937_64 rng(derive_seed(seed, 0x7a5c));
  std::vector<int> perm(std::size_t(shape.vocab));
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = shape.vocab - 1; i > 0; --i) {
    const int j = int(uniform01(rng) * (i + 1));
    std::swap(perm[std::size_t(i)], perm[std::size_t(j)]);
  }
  const ToyPolicy layout(shape, count);
  std::vector<ToyTask> tasks;
  for (int t = 0; t < count; ++t) {
    ToyTask task;
    task.id = t;
    task.instruction = {t};
    task.width = task.height = shape.image_size;
    for (int c = 0; c < 4; ++c) {
      task.gt_bins[std::size_t(c)] = int(uniform01(rng) * shape.coord_bins);
    }
    task.gt.box = geometry::make_box(layout.bin_coordinate(0, task.gt_bins[0]),
                                     layout.bin_coordinate(1, task.gt_bins[1]),
                                     layout.bin_coordinate(2, task.gt_bins[2]),
                                     layout.bin_coordinate(3, task.gt_bins[3]));
    task.relevant_tokens = {perm[std::size_t((2 * t) % shape.vocab)],
                            perm[std::size_t((2 * t + 1) % shape.vocab)]};
    tasks.push_back(std::move(task));
  }
  return tasks;
}

ToyPolicy::ToyPolicy(PolicyShape shape, int n_tasks) : shape_(shape), n_tasks_(n_tasks) {
  if (n_tasks <= 0 || shape.vocab < 1 || shape.max_concise < 1 || shape.max_detailed < 1 ||
      shape.coord_bins < 1 || shape.len_buckets < 1 || shape.image_size < 2) {
    throw Error(ErrorKind::Config, "invalid toy policy shape");
  }
  const int v = shape.vocab;
  const int b = shape.len_buckets + 1;
  token_offset_ = 0;
  stop_offset_ = token_offset_ + 2 * n_tasks * (v + 1) * v;
  stop_mode_offset_ = stop_offset_ + b * (shape.max_concise + shape.max_detailed) * 2;
  brevity_offset_ = stop_mode_offset_ + 2 * (shape.max_concise + shape.max_detailed) * 2;
  answer_offset_ = brevity_offset_ + 2 * 2;
  const int total = answer_offset_ + n_tasks * 2 * 4 * shape.coord_bins;
  theta_ = Eigen::VectorXd::Zero(total);
}

int ToyPolicy::token_base(Section s, int task, int ctx_token) const {
  const int v = shape_.vocab;
  return token_offset_ + ((rationale_index(s) * n_tasks_ + task) * (v + 1) + ctx_token) * v;
}

int ToyPolicy::stop_base(Section s, int len_bucket, int position) const {
  const int b = shape_.len_buckets + 1;
  const int section_offset = s == Section::Concise ? 0 : b * shape_.max_concise * 2;
  const int max_len = s == Section::Concise ? shape_.max_concise : shape_.max_detailed;
  return stop_offset_ + section_offset + (len_bucket * max_len + position) * 2;
}

int ToyPolicy::stop_mode_base(Section s, Mode mode, int position) const {
  const int section_offset = s == Section::Concise ? 0 : 2 * shape_.max_concise * 2;
  const int max_len = s == Section::Concise ? shape_.max_concise : shape_.max_detailed;
  const int m = mode == Mode::Train ? 0 : 1;
  return stop_mode_offset_ + section_offset + (m * max_len + position) * 2;
}

int ToyPolicy::brevity_base(Section s) const {
  return brevity_offset_ + rationale_index(s) * 2;
}

int ToyPolicy::answer_base(int task, int evidence, int coord) const {
  return answer_offset_ + ((task * 2 + evidence) * 4 + coord) * shape_.coord_bins;
}

int ToyPolicy::length_bucket(std::size_t length) const {
  if (length == 0) return 0;
  int bucket = 1;
  while (bucket < shape_.len_buckets && (std::size_t(1) << bucket) <= length) ++bucket;
  return bucket;
}

double ToyPolicy::bin_coordinate(int coord, int bin) const {
  const double step = double(shape_.image_size) / (2.0 * shape_.coord_bins);
  if (coord < 2) return bin * step;
  return double(shape_.image_size) / 2.0 + (bin + 1) * step;
}

ToyPolicy ToyPolicy::pretrained(const PolicyShape& shape, const std::vector<ToyTask>& tasks,
                                const PolicyPrior& prior) {
  ToyPolicy policy(shape, int(tasks.size()));
  Eigen::VectorXd& th = policy.theta_;
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  for (Section s : {Section::Concise, Section::Detailed}) {
    const double relevance =
        s == Section::Concise ? prior.concise_relevance : prior.detailed_relevance;
    for (const ToyTask& task : tasks) {
      for (int ctx = 0; ctx <= shape.vocab; ++ctx) {
        const int base = policy.token_base(s, task.id, ctx);
        for (int r : task.relevant_tokens) th[base + r] += relevance;
        if (ctx < shape.vocab) th[base + ctx] += prior.copy;
      }
    }
    const int max_len = s == Section::Concise ? shape.max_concise : shape.max_detailed;
    const double stop = logit(s == Section::Concise ? prior.concise_stop : prior.detailed_stop);
    for (int b = 0; b <= shape.len_buckets; ++b) {
      for (int pos = 0; pos < max_len; ++pos) th[policy.stop_base(s, b, pos) + 1] = stop;
    }
  }
  th[policy.brevity_base(Section::Concise) + 1] = prior.brevity;
  for (const ToyTask& task : tasks) {
    for (int ev = 0; ev < 2; ++ev) {
      for (int c = 0; c < 4; ++c) {
        th[policy.answer_base(task.id, ev, c) + task.gt_bins[std::size_t(c)]] +=
            ev ? prior.answer_evidence : prior.answer_base;
      }
    }
  }
  return policy;
}

Eigen::VectorXd ToyPolicy::probs(const Eigen::VectorXd& theta, const Decision& d) {
  Eigen::VectorXd logits = theta.segment(d.bases[0], d.n_actions);
  for (int g = 1; g < d.n_groups; ++g) logits += theta.segment(d.bases[std::size_t(g)], d.n_actions);
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

double ToyPolicy::log_prob(const Eigen::VectorXd& theta, const Decision& d) {
  Eigen::VectorXd logits = theta.segment(d.bases[0], d.n_actions);
  for (int g = 1; g < d.n_groups; ++g) logits += theta.segment(d.bases[std::size_t(g)], d.n_actions);
  const double m = logits.maxCoeff();
  return logits[d.action] - m - std::log((logits.array() - m).exp().sum());
}

Decision ToyPolicy::decide(std::array<int, 3> bases, int n_groups, int n_actions,
                           std::mt19937_64& rng) const {
  Decision d{bases, n_groups, n_actions, 0, 0.0};
  const Eigen::VectorXd p = probs(theta_, d);
  const double u = uniform01(rng);
  double acc = 0.0;
  d.action = n_actions - 1;
  for (int a = 0; a < n_actions; ++a) {
    acc += p[a];
    if (u < acc) {
      d.action = a;
      break;
    }
  }
  d.logp = log_prob(theta_, d);
  return d;
}

Decision ToyPolicy::forced(std::array<int, 3> bases, int n_groups, int n_actions,
                           int action) const {
  Decision d{bases, n_groups, n_actions, action, 0.0};
  d.logp = log_prob(theta_, d);
  return d;
}

Trajectory ToyPolicy::sample(const ToyTask& task, const response::SectionOrder& order, Mode mode,
                             bool brevity, std::mt19937_64& rng,
                             const ForcedSections& forced_sections) const {
  Trajectory out;
  out.brevity = brevity;
  bool have_concise = false;
  bool have_detailed = false;
  std::vector<Section> emitted;

  auto relevant = [&](const std::vector<int>& tokens) {
    return std::any_of(tokens.begin(), tokens.end(), [&](int t) {
      return std::find(task.relevant_tokens.begin(), task.relevant_tokens.end(), t) !=
             task.relevant_tokens.end();
    });
  };

  for (Section s : order.sections()) {
    if (s == Section::Detailed && mode == Mode::Inference) continue;
    emitted.push_back(s);
    if (s == Section::Answer) {
      const bool evidence = (have_concise && relevant(out.concise)) ||
                            (have_detailed && relevant(out.detailed));
      for (int c = 0; c < 4; ++c) {
        const Decision d = decide({answer_base(task.id, evidence ? 1 : 0, c), 0, 0}, 1,
                                  shape_.coord_bins, rng);
        out.answer_bins[std::size_t(c)] = d.action;
        out.decisions.push_back(d);
      }
      continue;
    }
    const bool is_concise = s == Section::Concise;
    const std::vector<int>* prev = nullptr;
    if (is_concise && have_detailed) prev = &out.detailed;
    if (!is_concise && have_concise) prev = &out.concise;
    const int ctx_token = prev ? dominant_token(*prev, shape_.vocab) : shape_.vocab;
    const int bucket = prev ? length_bucket(prev->size()) : 0;
    const int max_len = is_concise ? shape_.max_concise : shape_.max_detailed;
    const auto& forced_tokens = is_concise ? forced_sections.concise : forced_sections.detailed;
    std::vector<int>& tokens = is_concise ? out.concise : out.detailed;
    if (forced_tokens && (forced_tokens->empty() || int(forced_tokens->size()) > max_len)) {
      throw Error(ErrorKind::InvalidInput, "forced rationale length out of range");
    }

    for (int pos = 0;; ++pos) {
      if (pos >= max_len) break;
      if (pos >= 1) {
        // the brevity offset only enters the logits when the flag is set
        const std::array<int, 3> stop_bases{stop_base(s, bucket, pos),
                                            stop_mode_base(s, mode, pos), brevity_base(s)};
        const int groups = brevity ? 3 : 2;
        Decision d = forced_tokens
                         ? forced(stop_bases, groups, 2, pos >= int(forced_tokens->size()) ? 1 : 0)
                         : decide(stop_bases, groups, 2, rng);
        out.decisions.push_back(d);
        if (d.action == 1) break;
      }
      const std::array<int, 3> token_bases{token_base(s, task.id, ctx_token), 0, 0};
      if (forced_tokens) {
        const int tok = (*forced_tokens)[std::size_t(pos)];
        if (tok < 0 || tok >= shape_.vocab) {
          throw Error(ErrorKind::InvalidInput, "forced token out of vocabulary");
        }
        out.decisions.push_back(forced(token_bases, 1, shape_.vocab, tok));
        tokens.push_back(tok);
      } else {
        const Decision d = decide(token_bases, 1, shape_.vocab, rng);
        tokens.push_back(d.action);
        out.decisions.push_back(d);
      }
    }
    (is_concise ? have_concise : have_detailed) = true;
  }

  response::StructuredResponse resp;
  resp.order = response::SectionOrder(emitted);
  if (have_concise) resp.concise = join_words(out.concise);
  if (have_detailed) resp.detailed = join_words(out.detailed);
  geometry::Answer answer;
  answer.box = geometry::make_box(bin_coordinate(0, out.answer_bins[0]),
                                  bin_coordinate(1, out.answer_bins[1]),
                                  bin_coordinate(2, out.answer_bins[2]),
                                  bin_coordinate(3, out.answer_bins[3]));
  resp.answer = answer;
  out.text = response::serialize(resp);
  return out;
}

}  // namespace tforge::grpo
