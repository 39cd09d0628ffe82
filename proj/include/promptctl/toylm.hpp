#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "promptctl/attention.hpp"
#include "promptctl/errors.hpp"
#include "promptctl/lmsystem.hpp"
#include "promptctl/matrix.hpp"
#include "promptctl/rng.hpp"

namespace promptctl {

// Decoder-only transformer small enough to train on one core, with exact
// hand-written reverse-mode gradients. No layer norm, ReLU MLPs, learned
// absolute positions, tied nothing.
struct TransformerConfig {
  std::size_t vocab_size = 64;
  std::size_t d_model = 32;
  std::size_t d_key = 16;
  std::size_t n_layers = 2;
  std::size_t max_len = 64;

  void validate() const {
    if (vocab_size == 0 || d_model == 0 || d_key == 0 || max_len == 0)
      throw ArgumentError("TransformerConfig: zero dimension");
  }
};

struct TransformerLayer {
  AttentionParams attn;  // w_v maps d_model -> d_model so the residual adds up
  Matrix mlp_w1;         // d_model x 4 d_model
  Matrix mlp_w2;         // 4 d_model x d_model
};

struct TransformerParams {
  TransformerConfig config;
  Matrix embed;      // vocab x d_model
  Matrix pos_embed;  // max_len x d_model
  std::vector<TransformerLayer> layers;
  Matrix unembed;    // d_model x vocab
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

inline TransformerParams init_params(const TransformerConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  TransformerParams p;
  p.config = config;
  p.seed = seed;
  const double embed_std = 0.5;
  const double weight_std = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  p.embed = Matrix::random_normal(config.vocab_size, config.d_model, rng, embed_std);
  p.pos_embed = Matrix::random_normal(config.max_len, config.d_model, rng, embed_std);
  p.layers.resize(config.n_layers);
  for (auto& layer : p.layers) {
    layer.attn.w_q = Matrix::random_normal(config.d_model, config.d_key, rng, weight_std);
    layer.attn.w_key = Matrix::random_normal(config.d_model, config.d_key, rng, weight_std);
    layer.attn.w_v = Matrix::random_normal(config.d_model, config.d_model, rng, weight_std);
    layer.mlp_w1 = Matrix::random_normal(config.d_model, 4 * config.d_model, rng, weight_std);
    layer.mlp_w2 = Matrix::random_normal(4 * config.d_model, config.d_model, rng,
                                         weight_std / 2.0);
  }
  p.unembed = Matrix::random_normal(config.d_model, config.vocab_size, rng, weight_std);
  return p;
}

namespace detail {

struct LayerCache {
  Matrix x_in;   // n x d
  Matrix q, k;   // n x d_key
  Matrix v;      // n x d
  Matrix p;      // n x n causal attention weights
  Matrix x_mid;  // after the attention residual
  Matrix h_pre;  // n x 4d
  Matrix h;      // relu(h_pre)
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix x_final;              // n x d
  std::vector<double> logits;  // vocab, last position only
};

inline void check_input(const TransformerParams& params, const TokenSequence& tokens) {
  if (tokens.empty()) throw ArgumentError("toy transformer: empty input");
  if (tokens.size() > params.config.max_len)
    throw ArgumentError("toy transformer: input longer than max_len");
  validate_tokens(tokens, params.config.vocab_size);
}

inline ForwardCache forward_cached(const TransformerParams& params, const TokenSequence& tokens) {
  check_input(params, tokens);
  const std::size_t n = tokens.size();
  const std::size_t d = params.config.d_model;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(params.config.d_key));

  ForwardCache cache;
  Matrix x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto e = params.embed.row(static_cast<std::size_t>(tokens[i]));
    const auto pe = params.pos_embed.row(i);
    for (std::size_t j = 0; j < d; ++j) x(i, j) = e[j] + pe[j];
  }

  cache.layers.resize(params.layers.size());
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const TransformerLayer& layer = params.layers[li];
    LayerCache& lc = cache.layers[li];
    lc.x_in = x;
    lc.q = matmul(x, layer.attn.w_q);
    lc.k = matmul(x, layer.attn.w_key);
    lc.v = matmul(x, layer.attn.w_v);

    // causal attention: row i sees columns 0..i
    lc.p = Matrix(n, n);
    std::vector<double> srow(n);
    for (std::size_t i = 0; i < n; ++i) {
      double mx = kNegInf;
      for (std::size_t j = 0; j <= i; ++j) {
        srow[j] = dot(lc.q.row(i), lc.k.row(j)) * inv_sqrt;
        mx = std::max(mx, srow[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        srow[j] = std::exp(srow[j] - mx);
        denom += srow[j];
      }
      for (std::size_t j = 0; j <= i; ++j) lc.p(i, j) = srow[j] / denom;
    }

    lc.x_mid = x;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        const double w = lc.p(i, j);
        for (std::size_t c = 0; c < d; ++c) lc.x_mid(i, c) += w * lc.v(j, c);
      }

    lc.h_pre = matmul(lc.x_mid, layer.mlp_w1);
    lc.h = lc.h_pre;
    for (double& v : lc.h.data) v = v > 0.0 ? v : 0.0;  // subgradient 0 at 0
    x = lc.x_mid;
    const Matrix mlp_out = matmul(lc.h, layer.mlp_w2);
    add_in_place(x, mlp_out);
  }

  cache.x_final = x;
  cache.logits.assign(params.config.vocab_size, 0.0);
  const auto last = cache.x_final.row(n - 1);
  for (std::size_t j = 0; j < d; ++j) {
    const double xv = last[j];
    const double* urow = params.unembed.data.data() + j * params.unembed.cols;
    for (std::size_t v = 0; v < params.config.vocab_size; ++v) cache.logits[v] += xv * urow[v];
  }
  return cache;
}

}  // namespace detail

inline std::vector<double> forward_logits(const TransformerParams& params,
                                          const TokenSequence& tokens) {
  return detail::forward_cached(params, tokens).logits;
}

// Gradients for every parameter, same shapes as TransformerParams.
struct ParamGrads {
  Matrix embed;
  Matrix pos_embed;
  std::vector<TransformerLayer> layers;
  Matrix unembed;

  static ParamGrads zeros_like(const TransformerParams& p) {
    ParamGrads g;
    g.embed = Matrix(p.embed.rows, p.embed.cols);
    g.pos_embed = Matrix(p.pos_embed.rows, p.pos_embed.cols);
    g.layers.resize(p.layers.size());
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
      const auto& l = p.layers[i];
      g.layers[i].attn.w_q = Matrix(l.attn.w_q.rows, l.attn.w_q.cols);
      g.layers[i].attn.w_key = Matrix(l.attn.w_key.rows, l.attn.w_key.cols);
      g.layers[i].attn.w_v = Matrix(l.attn.w_v.rows, l.attn.w_v.cols);
      g.layers[i].mlp_w1 = Matrix(l.mlp_w1.rows, l.mlp_w1.cols);
      g.layers[i].mlp_w2 = Matrix(l.mlp_w2.rows, l.mlp_w2.cols);
    }
    g.unembed = Matrix(p.unembed.rows, p.unembed.cols);
    return g;
  }
};

namespace detail {

// Cross-entropy of `target` at the last position, backpropagated through the
// whole stack. Returns the loss; adds parameter gradients into `grads` when
// given one; writes d(loss)/d(input embedding) into `input_grads` when given
// one. Exact reverse-mode, including through the causal softmax.
inline double backward(const TransformerParams& params, const TokenSequence& tokens,
                       TokenId target, const ForwardCache& cache, ParamGrads* grads,
                       Matrix* input_grads) {
  if (target < 0 || static_cast<std::size_t>(target) >= params.config.vocab_size)
    throw ArgumentError("toy transformer: target token out of range");
  const std::size_t n = tokens.size();
  const std::size_t d = params.config.d_model;
  const std::size_t vocab = params.config.vocab_size;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(params.config.d_key));

  const double lse = log_sum_exp(cache.logits);
  const double loss = lse - cache.logits[static_cast<std::size_t>(target)];

  std::vector<double> dlogits(vocab);
  for (std::size_t v = 0; v < vocab; ++v) dlogits[v] = std::exp(cache.logits[v] - lse);
  dlogits[static_cast<std::size_t>(target)] -= 1.0;

  Matrix dx(n, d);
  const auto last = cache.x_final.row(n - 1);
  for (std::size_t j = 0; j < d; ++j) {
    const double* urow = params.unembed.data.data() + j * params.unembed.cols;
    double s = 0.0;
    for (std::size_t v = 0; v < vocab; ++v) s += urow[v] * dlogits[v];
    dx(n - 1, j) = s;
    if (grads) {
      double* gurow = grads->unembed.data.data() + j * grads->unembed.cols;
      const double xv = last[j];
      for (std::size_t v = 0; v < vocab; ++v) gurow[v] += xv * dlogits[v];
    }
  }

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const TransformerLayer& layer = params.layers[li];
    const LayerCache& lc = cache.layers[li];

    // x_out = x_mid + relu(x_mid W1) W2
    Matrix dh = matmul_nt(dx, layer.mlp_w2);  // n x 4d, dM = dx
    for (std::size_t i = 0; i < dh.data.size(); ++i)
      if (lc.h_pre.data[i] <= 0.0) dh.data[i] = 0.0;
    if (grads) {
      add_in_place(grads->layers[li].mlp_w2, matmul_tn(lc.h, dx));
      add_in_place(grads->layers[li].mlp_w1, matmul_tn(lc.x_mid, dh));
    }
    Matrix dx_mid = dx;  // residual path
    add_in_place(dx_mid, matmul_nt(dh, layer.mlp_w1));

    // x_mid = x_in + P V
    const Matrix& da = dx_mid;
    Matrix dv(n, d);
    Matrix dp(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        const double pij = lc.p(i, j);
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
          dv(j, c) += pij * da(i, c);
          s += da(i, c) * lc.v(j, c);
        }
        dp(i, j) = s;
      }

    // softmax backward, causal rows
    Matrix ds(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      double inner = 0.0;
      for (std::size_t j = 0; j <= i; ++j) inner += dp(i, j) * lc.p(i, j);
      for (std::size_t j = 0; j <= i; ++j) ds(i, j) = lc.p(i, j) * (dp(i, j) - inner);
    }

    Matrix dq(n, params.config.d_key);
    Matrix dk(n, params.config.d_key);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        const double g = ds(i, j) * inv_sqrt;
        for (std::size_t c = 0; c < params.config.d_key; ++c) {
          dq(i, c) += g * lc.k(j, c);
          dk(j, c) += g * lc.q(i, c);
        }
      }

    if (grads) {
      add_in_place(grads->layers[li].attn.w_q, matmul_tn(lc.x_in, dq));
      add_in_place(grads->layers[li].attn.w_key, matmul_tn(lc.x_in, dk));
      add_in_place(grads->layers[li].attn.w_v, matmul_tn(lc.x_in, dv));
    }

    Matrix dx_in = dx_mid;  // residual path
    add_in_place(dx_in, matmul_nt(dq, layer.attn.w_q));
    add_in_place(dx_in, matmul_nt(dk, layer.attn.w_key));
    add_in_place(dx_in, matmul_nt(dv, layer.attn.w_v));
    dx = std::move(dx_in);
  }

  if (grads) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t tok = static_cast<std::size_t>(tokens[i]);
      for (std::size_t j = 0; j < d; ++j) {
        grads->embed(tok, j) += dx(i, j);
        grads->pos_embed(i, j) += dx(i, j);
      }
    }
  }
  if (input_grads) *input_grads = std::move(dx);
  return loss;
}

}  // namespace detail

// LmInterface adapter over TransformerParams; also exposes exact input
// gradients for prompt optimization.
class ToyTransformerLm final : public GradientLm {
 public:
  explicit ToyTransformerLm(TransformerParams params, std::string label = "toylm")
      : params_(std::move(params)), label_(std::move(label)) {}

  const TransformerParams& params() const { return params_; }

  std::size_t vocab_size() const override { return params_.config.vocab_size; }

  std::vector<double> next_logits(const TokenSequence& state) const override {
    return forward_logits(params_, state);
  }

  std::vector<double> next_distribution(const TokenSequence& state) const override {
    auto logits = next_logits(state);
    const double lse = log_sum_exp(logits);
    for (double& v : logits) v = std::exp(v - lse);
    return logits;
  }

  std::string id() const override { return label_; }

  const Matrix& embedding_table() const override { return params_.embed; }

  GradientReport loss_and_input_grads(const TokenSequence& state, TokenId target) const override {
    const auto cache = detail::forward_cached(params_, state);
    GradientReport report;
    report.loss = detail::backward(params_, state, target, cache, nullptr, &report.embed_grads);
    return report;
  }

 private:
  TransformerParams params_;
  std::string label_;
};

// Plain SGD on next-token cross entropy over seeded corpus windows. Each
// example predicts one position from up to max_len - 1 preceding tokens;
// batch gradients are averaged. steps == 0 returns the seeded init untouched.
inline TransformerParams train(const TransformerConfig& config, const Corpus& corpus,
                               std::size_t steps, double lr, std::size_t batch,
                               std::uint64_t seed) {
  config.validate();
  if (batch == 0) throw ArgumentError("train: batch must be >= 1");
  if (!(lr > 0.0)) throw ArgumentError("train: lr must be > 0");

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < corpus.lines.size(); ++i) {
    validate_tokens(corpus.lines[i], config.vocab_size);
    if (corpus.lines[i].size() >= 2) eligible.push_back(i);
  }
  if (eligible.empty()) throw ArgumentError("train: corpus has no line with two tokens");

  TransformerParams params = init_params(config, seed);
  Rng rng(Rng::mix(seed, 0x7261696eull));

  auto apply = [&](Matrix& p, const Matrix& g, double scale) { axpy_in_place(p, -scale, g); };

  for (std::size_t step = 0; step < steps; ++step) {
    ParamGrads grads = ParamGrads::zeros_like(params);
    for (std::size_t b = 0; b < batch; ++b) {
      const auto& line = corpus.lines[eligible[rng.uniform_int(eligible.size())]];
      const std::size_t pos = 1 + rng.uniform_int(line.size() - 1);
      const std::size_t start = pos > config.max_len - 1 ? pos - (config.max_len - 1) : 0;
      const TokenSequence context(line.begin() + static_cast<std::ptrdiff_t>(start),
                                  line.begin() + static_cast<std::ptrdiff_t>(pos));
      const auto cache = detail::forward_cached(params, context);
      const double loss = detail::backward(params, context, line[pos], cache, &grads, nullptr);
      if (!std::isfinite(loss))
        throw NumericError("train: loss diverged, lower the learning rate", loss);
    }
    const double scale = lr / static_cast<double>(batch);
    apply(params.embed, grads.embed, scale);
    apply(params.pos_embed, grads.pos_embed, scale);
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
      apply(params.layers[li].attn.w_q, grads.layers[li].attn.w_q, scale);
      apply(params.layers[li].attn.w_key, grads.layers[li].attn.w_key, scale);
      apply(params.layers[li].attn.w_v, grads.layers[li].attn.w_v, scale);
      apply(params.layers[li].mlp_w1, grads.layers[li].mlp_w1, scale);
      apply(params.layers[li].mlp_w2, grads.layers[li].mlp_w2, scale);
    }
    apply(params.unembed, grads.unembed, scale);
    params.step = step + 1;
  }
  return params;
}

// Mean cross entropy over every predictable position of the corpus.
inline double mean_corpus_loss(const TransformerParams& params, const Corpus& corpus) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& line : corpus.lines) {
    for (std::size_t pos = 1; pos < line.size(); ++pos) {
      const std::size_t start =
          pos > params.config.max_len - 1 ? pos - (params.config.max_len - 1) : 0;
      const TokenSequence context(line.begin() + static_cast<std::ptrdiff_t>(start),
                                  line.begin() + static_cast<std::ptrdiff_t>(pos));
      const auto logits = forward_logits(params, context);
      const double lse = log_sum_exp(logits);
      total += lse - logits[static_cast<std::size_t>(line[pos])];
      ++count;
    }
  }
  if (count == 0) throw ArgumentError("mean_corpus_loss: nothing to score");
  return total / static_cast<double>(count);
}

}  // namespace promptctl
