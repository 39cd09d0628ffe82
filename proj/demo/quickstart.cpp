// A tour of the toolkit on desk-scale objects: certify an unreachable
// attention target, confirm it by search, then steer a tiny language model.
#include <cstdio>

#include "promptctl/harness.hpp"
#include "promptctl/promptopt.hpp"
#include "promptctl/reachability.hpp"
#include "promptctl/toylm.hpp"

using namespace promptctl;

int main() {
  // --- 1. an unreachability certificate for one attention block ----------

  Rng rng(7);
  AttentionParams params;
  params.w_q = Matrix::random_normal(4, 3, rng, 0.6);
  params.w_key = Matrix::random_normal(4, 3, rng, 0.6);
  params.w_v = Matrix::random_normal(4, 4, rng, 0.6);

  ControlInstance inst;
  inst.x0 = Matrix::random_normal(3, 4, rng, 0.8);
  inst.k = 2;      // the adversary may prepend two rows
  inst.m_u = 0.1;  // each of norm at most 0.1
  const Matrix y_max = self_attention(inst.x0, params);
  inst.y_star = add(y_max, Matrix::random_normal(3, 4, rng, 2.0));

  const Certificate cert = certify_unreachable(inst, params);
  std::printf("certificate verdict: %s\n",
              cert.verdict == Verdict::kUnreachable ? "unreachable" : "inconclusive");
  for (const auto& row : cert.per_row)
    std::printf("  row %zu: residual %.4f vs budget %.4f%s\n", row.row, row.lhs, row.rhs,
                row.triggered ? "  <- triggers" : "");

  // a seeded search oracle agrees: no admissible prefix comes close
  const Matrix candidates = make_candidate_set(Matrix::random_normal(32, 4, rng), inst.m_u);
  const OracleResult oracle = brute_force_reach(inst, params, candidates, 5000, 1);
  std::printf("search over %llu probes: best residual %.4f (reached: %s)\n\n",
              static_cast<unsigned long long>(oracle.searched), oracle.best_residual,
              oracle.reached ? "yes" : "no");

  // --- 2. prompting a small model into a chosen continuation -------------

  const Corpus corpus = make_synthetic_corpus(16, 12, 10, 0.05, 3);
  TransformerConfig config;
  config.vocab_size = 16;
  config.d_model = 16;
  config.d_key = 8;
  config.n_layers = 1;
  config.max_len = 24;
  const ToyTransformerLm lm(train(config, corpus, 1200, 0.2, 8, 3));

  const TokenSequence x0 = {corpus.lines[0][0], corpus.lines[0][1]};
  const TokenId wanted = corpus.lines[3][5];
  std::printf("state [%d %d], wanted next token %d\n", x0[0], x0[1], wanted);

  const BackoffResult res = back_off_prompt(x0, wanted, lm);
  if (res.success) {
    std::printf("steered with a length-%zu prompt:", res.required_k);
    for (TokenId t : res.outcome.prompt) std::printf(" %d", t);
    std::printf("  (log P = %.3f)\n", res.outcome.achieved_logprob);
  } else {
    std::printf("not steered: %s\n", res.failure_reason.c_str());
  }

  // --- 3. how controllable is the model overall? -------------------------

  const ControlDataset dataset = build_ground_truth_dataset(corpus, lm, 40, 3, 6, 11);
  MeasureOptions opts;
  opts.schedule = split_schedule({1, 2, 4});
  opts.seed = 11;
  const KEpsReport report = measure_k_epsilon(dataset, lm, opts);
  std::printf("\nk-epsilon over %zu corpus pairs:\n", report.per_pair.size());
  for (const auto& pt : report.per_k)
    std::printf("  k = %zu: epsilon = %.3f\n", pt.k, pt.epsilon);
  return 0;
}
