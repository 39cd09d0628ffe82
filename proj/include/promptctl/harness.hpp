#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "promptctl/errors.hpp"
#include "promptctl/lmsystem.hpp"
#include "promptctl/promptopt.hpp"
#include "promptctl/rng.hpp"

namespace promptctl {

enum class Provenance { kGroundTruth, kTopRank, kUniformRank };

// One steering task: make y the greedy continuation of some prompt + x0.
// base_* fields describe y under the empty prompt; rank is 1-indexed over the
// descending model distribution with ties broken by token id. Ground-truth
// pairs carry the corpus window they were cut from.
struct ControlPair {
  TokenSequence x0;
  TokenId y = 0;
  Provenance provenance = Provenance::kGroundTruth;
  std::size_t provenance_value = 0;  // n_top for top-rank rows, drawn rank for uniform-rank
  double base_logprob = 0.0;
  std::size_t base_rank = 0;
  std::size_t corpus_line = 0;
  std::size_t corpus_offset = 0;
};

struct ControlDataset {
  std::vector<ControlPair> pairs;
  std::string corpus_id;
  std::string lm_id;
  std::uint64_t seed = 0;
};

inline std::size_t rank_of(const std::vector<double>& dist, TokenId y) {
  const double py = dist[static_cast<std::size_t>(y)];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < dist.size(); ++j) {
    const TokenId tid = static_cast<TokenId>(j);
    if (dist[j] > py || (dist[j] == py && tid < y)) ++rank;
  }
  return rank;
}

namespace detail {

inline void fill_base_stats(ControlPair& pair, const LmInterface& lm) {
  const auto logits = lm.next_logits(pair.x0);
  const auto logp = log_softmax(std::vector<double>(logits));
  pair.base_logprob = logp[static_cast<std::size_t>(pair.y)];
  std::vector<double> dist(logits.size());
  for (std::size_t i = 0; i < dist.size(); ++i) dist[i] = logp[i];
  pair.base_rank = rank_of(dist, pair.y);
}

// A corpus window of w tokens in [lo, hi] with one following token available.
struct WindowDraw {
  std::size_t line = 0;
  std::size_t start = 0;
  std::size_t len = 0;
};

inline WindowDraw draw_window(const Corpus& corpus, std::size_t lo, std::size_t hi, Rng& rng,
                              const std::vector<std::size_t>& eligible) {
  const std::size_t line = eligible[rng.uniform_int(eligible.size())];
  const std::size_t line_len = corpus.lines[line].size();
  const std::size_t max_w = std::min(hi, line_len - 1);
  const std::size_t w = lo + rng.uniform_int(max_w - lo + 1);
  const std::size_t start = rng.uniform_int(line_len - w);
  return {line, start, w};
}

inline std::vector<std::size_t> eligible_lines(const Corpus& corpus, std::size_t lo) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.lines.size(); ++i)
    if (corpus.lines[i].size() >= lo + 1) out.push_back(i);
  if (out.empty())
    throw ArgumentError("dataset builder: no corpus line long enough for the state range");
  return out;
}

}  // namespace detail

// (x0, y) cut directly from the corpus: x0 is a window whose length is drawn
// uniformly from [lo, hi] (clipped per line), y the token that follows it.
inline ControlDataset build_ground_truth_dataset(const Corpus& corpus, const LmInterface& lm,
                                                 std::size_t n, std::size_t lo, std::size_t hi,
                                                 std::uint64_t seed) {
  if (lo < 1 || hi < lo) throw ArgumentError("build_ground_truth_dataset: bad state length range");
  const auto eligible = detail::eligible_lines(corpus, lo);
  Rng rng(seed);
  ControlDataset ds;
  ds.seed = seed;
  ds.lm_id = lm.id();
  ds.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = detail::draw_window(corpus, lo, hi, rng, eligible);
    const auto& line = corpus.lines[w.line];
    ControlPair pair;
    pair.x0.assign(line.begin() + static_cast<std::ptrdiff_t>(w.start),
                   line.begin() + static_cast<std::ptrdiff_t>(w.start + w.len));
    pair.y = line[w.start + w.len];
    pair.provenance = Provenance::kGroundTruth;
    pair.corpus_line = w.line;
    pair.corpus_offset = w.start;
    detail::fill_base_stats(pair, lm);
    ds.pairs.push_back(std::move(pair));
  }
  return ds;
}

// Sampled states, each paired with its n_top most likely next tokens
// (ranks 1..n_top, ties by token id).
inline ControlDataset build_top_n_dataset(const Corpus& corpus, const LmInterface& lm,
                                          std::size_t num_states, std::size_t n_top,
                                          std::uint64_t seed, std::size_t lo = 8,
                                          std::size_t hi = 16) {
  if (n_top > lm.vocab_size()) throw ArgumentError("build_top_n_dataset: n_top > |V|");
  if (lo < 1 || hi < lo) throw ArgumentError("build_top_n_dataset: bad state length range");
  const auto eligible = detail::eligible_lines(corpus, lo);
  Rng rng(seed);
  ControlDataset ds;
  ds.seed = seed;
  ds.lm_id = lm.id();
  for (std::size_t s = 0; s < num_states; ++s) {
    const auto w = detail::draw_window(corpus, lo, hi, rng, eligible);
    const auto& line = corpus.lines[w.line];
    const TokenSequence x0(line.begin() + static_cast<std::ptrdiff_t>(w.start),
                           line.begin() + static_cast<std::ptrdiff_t>(w.start + w.len));
    const auto dist = lm.next_distribution(x0);
    std::vector<std::size_t> order(dist.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    for (std::size_t r = 0; r < n_top; ++r) {
      ControlPair pair;
      pair.x0 = x0;
      pair.y = static_cast<TokenId>(order[r]);
      pair.provenance = Provenance::kTopRank;
      pair.provenance_value = n_top;
      pair.corpus_line = w.line;
      pair.corpus_offset = w.start;
      detail::fill_base_stats(pair, lm);
      ds.pairs.push_back(std::move(pair));
    }
  }
  return ds;
}

// Sampled states paired with the token at a uniformly drawn rank of the model
// distribution, so hard targets are as common as easy ones.
inline ControlDataset build_uniform_rank_dataset(const Corpus& corpus, const LmInterface& lm,
                                                 std::size_t n, std::uint64_t seed,
                                                 std::size_t lo = 8, std::size_t hi = 16) {
  if (lo < 1 || hi < lo) throw ArgumentError("build_uniform_rank_dataset: bad state length range");
  const auto eligible = detail::eligible_lines(corpus, lo);
  Rng rng(seed);
  ControlDataset ds;
  ds.seed = seed;
  ds.lm_id = lm.id();
  ds.pairs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = detail::draw_window(corpus, lo, hi, rng, eligible);
    const auto& line = corpus.lines[w.line];
    const TokenSequence x0(line.begin() + static_cast<std::ptrdiff_t>(w.start),
                           line.begin() + static_cast<std::ptrdiff_t>(w.start + w.len));
    const std::size_t rank = 1 + rng.uniform_int(lm.vocab_size());
    const auto dist = lm.next_distribution(x0);
    std::vector<std::size_t> order(dist.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dist[a] > dist[b]; });
    ControlPair pair;
    pair.x0 = x0;
    pair.y = static_cast<TokenId>(order[rank - 1]);
    pair.provenance = Provenance::kUniformRank;
    pair.provenance_value = rank;
    pair.corpus_line = w.line;
    pair.corpus_offset = w.start;
    detail::fill_base_stats(pair, lm);
    ds.pairs.push_back(std::move(pair));
  }
  return ds;
}

struct PairOutcome {
  bool success = false;
  std::size_t required_k = 0;  // 0 means the empty prompt already works
  TokenSequence prompt;
  TokenId y = 0;
  double base_logprob = 0.0;
  std::size_t base_rank = 0;
  std::string failure_reason;
};

struct KEpsPoint {
  std::size_t k = 0;
  double epsilon = 0.0;
};

struct TokenCount {
  TokenId id = 0;
  std::uint64_t count = 0;
};

struct LogLinearFit {
  bool valid = false;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

struct ReplayCheck {
  std::size_t checked = 0;
  std::size_t passed = 0;
};

// Published full-scale measurements kept for context in every report; nothing
// in this toolkit asserts against them.
struct ReferenceBaseline {
  const char* name;
  double epsilon_at_k10;
};

inline const std::vector<ReferenceBaseline>& reference_baselines() {
  static const std::vector<ReferenceBaseline> v = {
      {"falcon7b_ground_truth", 1.0 - 0.9716},
      {"falcon7b_top75", 1.0 - 0.8939},
      {"falcon7b_uniform_rank", 1.0 - 0.4643},
  };
  return v;
}

struct KEpsReport {
  std::vector<std::size_t> schedule;  // prompt lengths attempted, ascending
  std::vector<KEpsPoint> per_k;       // includes the k = 0 baseline row
  std::vector<PairOutcome> per_pair;
  std::vector<TokenCount> token_frequency;  // over successful prompts
  LogLinearFit fit;
  ReplayCheck replay;
  std::string corpus_id;
  std::string lm_id;
  std::uint64_t seed = 0;
};

// Least squares of log(epsilon) against k over the points with epsilon > 0.
inline LogLinearFit fit_log_linear(const std::vector<KEpsPoint>& points) {
  LogLinearFit fit;
  std::vector<double> xs, ys;
  for (const auto& p : points) {
    if (p.epsilon > 0.0) {
      xs.push_back(static_cast<double>(p.k));
      ys.push_back(std::log(p.epsilon));
    }
  }
  fit.points = xs.size();
  if (xs.size() < 2) return fit;
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx == 0.0) return fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  fit.valid = true;
  return fit;
}

struct MeasureOptions {
  BackoffSchedule schedule;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  GcgOptions gcg;
};

inline BackoffSchedule split_schedule(const std::vector<std::size_t>& ks) {
  BackoffSchedule s;
  s.greedy_ks.clear();
  s.gcg_ks.clear();
  for (std::size_t k : ks) (k <= 3 ? s.greedy_ks : s.gcg_ks).push_back(k);
  return s;
}

// epsilon(k): the fraction of pairs not reached by any prompt of length <= k.
// Bookkeeping is cumulative, so the curve is monotone by construction: a pair
// solved at length j counts as solved for every k >= j, and the empty prompt
// (k = 0) is checked first. One worker per pair at most; outcomes are merged
// in dataset order, so worker count never changes any output byte. At least
// 10% of successes are replayed through the state machine afterwards.
inline KEpsReport measure_k_epsilon(const ControlDataset& dataset, const LmInterface& lm,
                                    const MeasureOptions& opts = {}) {
  std::vector<std::size_t> schedule;
  for (std::size_t k : opts.schedule.greedy_ks) schedule.push_back(k);
  for (std::size_t k : opts.schedule.gcg_ks) schedule.push_back(k);
  std::sort(schedule.begin(), schedule.end());
  if (schedule.empty()) throw ArgumentError("measure_k_epsilon: empty schedule");

  KEpsReport report;
  report.schedule = schedule;
  report.corpus_id = dataset.corpus_id;
  report.lm_id = dataset.lm_id.empty() ? lm.id() : dataset.lm_id;
  report.seed = opts.seed;
  report.per_pair.resize(dataset.pairs.size());

  auto solve_one = [&](std::size_t index) {
    const ControlPair& pair = dataset.pairs[index];
    PairOutcome out;
    out.y = pair.y;
    out.base_logprob = pair.base_logprob;
    out.base_rank = pair.base_rank;
    if (!pair.x0.empty() && argmax_token(lm.next_distribution(pair.x0)) == pair.y) {
      out.success = true;
      out.required_k = 0;
      report.per_pair[index] = std::move(out);
      return;
    }
    const BackoffResult res = back_off_prompt(pair.x0, pair.y, lm, opts.schedule,
                                              Rng::mix(opts.seed, index), opts.gcg);
    out.success = res.success;
    if (res.success) {
      out.required_k = res.required_k;
      out.prompt = res.outcome.prompt;
    } else {
      out.failure_reason = res.failure_reason;
    }
    report.per_pair[index] = std::move(out);
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min(opts.workers, dataset.pairs.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < dataset.pairs.size(); ++i) solve_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= dataset.pairs.size()) return;
          solve_one(i);
        }
      });
    for (auto& t : pool) t.join();
  }

  // cumulative epsilon rows, k = 0 first
  std::vector<std::size_t> ks;
  ks.push_back(0);
  ks.insert(ks.end(), schedule.begin(), schedule.end());
  const double n = static_cast<double>(std::max<std::size_t>(1, report.per_pair.size()));
  for (std::size_t k : ks) {
    std::size_t unsolved = 0;
    for (const auto& p : report.per_pair)
      if (!(p.success && p.required_k <= k)) ++unsolved;
    report.per_k.push_back({k, static_cast<double>(unsolved) / n});
  }

  std::map<TokenId, std::uint64_t> freq;
  for (const auto& p : report.per_pair)
    if (p.success)
      for (TokenId t : p.prompt) ++freq[t];
  for (const auto& [id, count] : freq) report.token_frequency.push_back({id, count});
  std::stable_sort(report.token_frequency.begin(), report.token_frequency.end(),
                   [](const TokenCount& a, const TokenCount& b) { return a.count > b.count; });

  report.fit = fit_log_linear(report.per_k);

  // replay every 10th success end to end through the state machine
  std::size_t seen = 0;
  for (std::size_t i = 0; i < report.per_pair.size(); ++i) {
    const auto& p = report.per_pair[i];
    if (!p.success) continue;
    if (seen++ % 10 != 0) continue;
    ++report.replay.checked;
    const TokenSequence target{p.y};
    if (is_output_reached(dataset.pairs[i].x0, p.prompt, target, lm)) ++report.replay.passed;
  }
  return report;
}

// Synthetic training text: a few fixed template sentences over the vocabulary,
// emitted with token-level noise. Handy for memorization experiments.
inline Corpus make_synthetic_corpus(std::size_t vocab_size, std::size_t n_lines,
                                    std::size_t line_len, double noise, std::uint64_t seed) {
  if (vocab_size < 2) throw ArgumentError("make_synthetic_corpus: need at least two tokens");
  if (!(noise >= 0.0 && noise <= 1.0))
    throw ArgumentError("make_synthetic_corpus: noise must be in [0, 1]");
  Rng rng(seed);
  const std::size_t n_templates = std::min<std::size_t>(8, vocab_size);
  std::vector<TokenSequence> templates(n_templates);
  for (std::size_t t = 0; t < n_templates; ++t) {
    templates[t].resize(line_len);
    // deterministic stride walk; stride odd so every token appears
    const std::size_t stride = 2 * t + 1;
    std::size_t cur = (t * 7) % vocab_size;
    for (std::size_t i = 0; i < line_len; ++i) {
      templates[t][i] = static_cast<TokenId>(cur);
      cur = (cur + stride) % vocab_size;
    }
  }
  Corpus corpus;
  corpus.lines.reserve(n_lines);
  for (std::size_t i = 0; i < n_lines; ++i) {
    TokenSequence line = templates[i % n_templates];
    for (auto& tok : line)
      if (rng.uniform() < noise) tok = static_cast<TokenId>(rng.uniform_int(vocab_size));
    corpus.lines.push_back(std::move(line));
  }
  return corpus;
}

}  // namespace promptctl
