#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "promptctl/errors.hpp"
#include "promptctl/lmsystem.hpp"
#include "promptctl/rng.hpp"

namespace promptctl {

struct TraceStep {
  std::size_t step = 0;
  TokenSequence prompt;
  double logprob = 0.0;
};

// Success means the optimized prompt makes y the greedy continuation of
// prompt + x0, not merely likely.
struct OptimizeOutcome {
  TokenSequence prompt;
  double achieved_logprob = 0.0;
  bool success = false;
  std::uint64_t evaluations = 0;
  std::vector<TraceStep> trace;
};

namespace detail {
inline double logprob_of(const std::vector<double>& logits, TokenId y) {
  return log_softmax(std::vector<double>(logits))[static_cast<std::size_t>(y)];
}
}  // namespace detail

// Build the prompt back to front: at each step try every vocabulary token as
// the new front token and keep the one that most raises log P(y | prompt+x0).
// Exactly k * |V| model evaluations; ties keep the lowest token id. Success is
// read off the winning scan of the last step, so no extra evaluation happens.
inline OptimizeOutcome greedy_back_generate(const TokenSequence& x0, TokenId y, std::size_t k,
                                            const LmInterface& lm) {
  const std::size_t vocab = lm.vocab_size();
  validate_tokens(x0, vocab);
  if (y < 0 || static_cast<std::size_t>(y) >= vocab)
    throw ArgumentError("greedy_back_generate: target out of range");

  OptimizeOutcome out;
  if (k == 0) {
    if (x0.empty()) throw ArgumentError("greedy_back_generate: empty prompt and empty x0");
    const auto logits = lm.next_logits(x0);
    out.achieved_logprob = detail::logprob_of(logits, y);
    out.success = argmax_token(logits) == y;
    out.evaluations = 1;
    return out;
  }

  TokenSequence prompt;
  TokenId final_argmax = -1;
  for (std::size_t step = 0; step < k; ++step) {
    double best_lp = kNegInf;
    TokenId best_tok = 0;
    TokenId best_argmax = -1;
    TokenSequence seq;
    seq.reserve(1 + prompt.size() + x0.size());
    for (std::size_t cand = 0; cand < vocab; ++cand) {
      seq.clear();
      seq.push_back(static_cast<TokenId>(cand));
      seq.insert(seq.end(), prompt.begin(), prompt.end());
      seq.insert(seq.end(), x0.begin(), x0.end());
      const auto logits = lm.next_logits(seq);
      ++out.evaluations;
      const double lp = detail::logprob_of(logits, y);
      if (lp > best_lp) {  // strict: lowest candidate id wins ties
        best_lp = lp;
        best_tok = static_cast<TokenId>(cand);
        best_argmax = argmax_token(logits);
      }
    }
    prompt.insert(prompt.begin(), best_tok);
    final_argmax = best_argmax;
    out.trace.push_back({step + 1, prompt, best_lp});
    out.achieved_logprob = best_lp;
  }
  out.prompt = prompt;
  out.success = final_argmax == y;
  return out;
}

struct GcgOptions {
  std::size_t batch = 0;       // 0: derived from k and k_sub
  std::size_t k_sub = 0;       // 0: derived from |V|
  std::size_t iterations = 34;
  std::uint64_t seed = 0;
  bool exhaustive = false;     // enumerate every (position, candidate) swap each iteration
};

inline std::size_t gcg_default_k_sub(std::size_t vocab) {
  return std::min<std::size_t>(128, std::max<std::size_t>(4, vocab / 4));
}

inline std::size_t gcg_default_batch(std::size_t k, std::size_t k_sub) {
  return std::min<std::size_t>(768, std::max<std::size_t>(1, k * k_sub));
}

// Coordinate-swap search guided by first-order scores: per position, candidate
// tokens are ranked by embedding-row dot gradient of log P(y | prompt + x0);
// each iteration evaluates a batch of single-token swaps and keeps the best
// variant. Exhaustive mode sweeps all (position, candidate) pairs plus the
// incumbent, so the objective never degrades there.
inline OptimizeOutcome gcg(const TokenSequence& x0, TokenId y, std::size_t k,
                           const GradientLm& lm, GcgOptions opts = {}) {
  const std::size_t vocab = lm.vocab_size();
  validate_tokens(x0, vocab);
  if (y < 0 || static_cast<std::size_t>(y) >= vocab)
    throw ArgumentError("gcg: target out of range");
  if (k == 0) throw ArgumentError("gcg: k must be >= 1");

  const std::size_t k_sub = opts.k_sub ? std::min(opts.k_sub, vocab) : gcg_default_k_sub(vocab);
  const std::size_t batch = opts.batch ? opts.batch : gcg_default_batch(k, k_sub);

  Rng rng(opts.seed);
  OptimizeOutcome out;
  TokenSequence prompt(k);
  for (auto& t : prompt) t = static_cast<TokenId>(rng.uniform_int(vocab));

  auto with_x0 = [&](const TokenSequence& p) {
    TokenSequence seq = p;
    seq.insert(seq.end(), x0.begin(), x0.end());
    return seq;
  };

  auto logits_now = lm.next_logits(with_x0(prompt));
  ++out.evaluations;
  double current_lp = detail::logprob_of(logits_now, y);
  TokenId current_argmax = argmax_token(logits_now);
  out.trace.push_back({0, prompt, current_lp});

  std::vector<std::vector<TokenId>> cand_sets(k, std::vector<TokenId>(k_sub));
  TokenSequence variant;
  for (std::size_t iter = 1; iter <= opts.iterations; ++iter) {
    const GradientReport rep = lm.loss_and_input_grads(with_x0(prompt), y);
    ++out.evaluations;

    // first-order score of swapping position i to token j:
    // embed_j . d log P / d e_i  (the gradient report carries d loss = -d log P)
    const Matrix& table = lm.embedding_table();
    std::vector<double> scores(vocab);
    std::vector<std::size_t> order(vocab);
    for (std::size_t i = 0; i < k; ++i) {
      const auto gi = rep.embed_grads.row(i);
      for (std::size_t j = 0; j < vocab; ++j) scores[j] = -dot(table.row(j), gi);
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(),
                       [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
      for (std::size_t j = 0; j < k_sub; ++j)
        cand_sets[i][j] = static_cast<TokenId>(order[j]);
    }

    double best_lp = kNegInf;
    TokenSequence best_prompt;
    TokenId best_argmax = -1;
    auto consider = [&](const TokenSequence& p) {
      const auto logits = lm.next_logits(with_x0(p));
      ++out.evaluations;
      const double lp = detail::logprob_of(logits, y);
      if (lp > best_lp) {  // strict: first among equals wins
        best_lp = lp;
        best_prompt = p;
        best_argmax = argmax_token(logits);
      }
    };

    if (opts.exhaustive) {
      consider(prompt);  // incumbent: exhaustive sweeps never lose ground
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k_sub; ++j) {
          variant = prompt;
          variant[i] = cand_sets[i][j];
          consider(variant);
        }
    } else {
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t i = rng.uniform_int(k);
        const std::size_t j = rng.uniform_int(k_sub);
        variant = prompt;
        variant[i] = cand_sets[i][j];
        consider(variant);
      }
    }

    prompt = best_prompt;
    current_lp = best_lp;
    current_argmax = best_argmax;
    out.trace.push_back({iter, prompt, current_lp});
  }

  out.prompt = prompt;
  out.achieved_logprob = current_lp;
  out.success = current_argmax == y;
  return out;
}

// One schedule step of the back-off search.
struct BackoffAttempt {
  std::size_t k = 0;
  std::string method;
  bool success = false;
  double logprob = 0.0;
};

struct BackoffResult {
  bool success = false;
  std::size_t required_k = 0;  // meaningful only when success
  OptimizeOutcome outcome;     // the successful attempt, or the last one tried
  std::vector<BackoffAttempt> attempts;
  std::string failure_reason;
};

struct BackoffSchedule {
  std::vector<std::size_t> greedy_ks = {1, 2, 3};
  std::vector<std::size_t> gcg_ks = {4, 6, 8, 10};
};

// Escalating search: cheap greedy construction at short lengths, swap search
// at longer ones, stopping at the first prompt that makes y the greedy
// continuation. Models without gradients simply skip the swap stage.
inline BackoffResult back_off_prompt(const TokenSequence& x0, TokenId y, const LmInterface& lm,
                                     const BackoffSchedule& schedule = {}, std::uint64_t seed = 0,
                                     GcgOptions gcg_base = {}) {
  BackoffResult res;
  for (std::size_t k : schedule.greedy_ks) {
    OptimizeOutcome out = greedy_back_generate(x0, y, k, lm);
    res.attempts.push_back({k, "greedy", out.success, out.achieved_logprob});
    if (out.success) {
      res.success = true;
      res.required_k = k;
      res.outcome = std::move(out);
      return res;
    }
    res.outcome = std::move(out);
  }

  const auto* glm = dynamic_cast<const GradientLm*>(&lm);
  if (glm == nullptr) {
    if (!schedule.gcg_ks.empty())
      res.failure_reason = "model has no gradients; swap-search lengths skipped";
    else
      res.failure_reason = "schedule exhausted";
    return res;
  }

  for (std::size_t k : schedule.gcg_ks) {
    GcgOptions opts = gcg_base;
    opts.seed = Rng::mix(seed, k);
    OptimizeOutcome out = gcg(x0, y, k, *glm, opts);
    res.attempts.push_back({k, "gcg", out.success, out.achieved_logprob});
    if (out.success) {
      res.success = true;
      res.required_k = k;
      res.outcome = std::move(out);
      return res;
    }
    res.outcome = std::move(out);
  }
  res.failure_reason = "schedule exhausted";
  return res;
}

}  // namespace promptctl
