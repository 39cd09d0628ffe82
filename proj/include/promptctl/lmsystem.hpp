#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "promptctl/errors.hpp"
#include "promptctl/matrix.hpp"

namespace promptctl {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

struct Vocab {
  std::vector<std::string> symbols;
  std::unordered_map<std::string, TokenId> index;

  static Vocab from_symbols(std::vector<std::string> symbols) {
    Vocab v;
    v.symbols = std::move(symbols);
    for (std::size_t i = 0; i < v.symbols.size(); ++i) {
      auto [it, inserted] = v.index.emplace(v.symbols[i], static_cast<TokenId>(i));
      if (!inserted) throw ArgumentError("Vocab: duplicate symbol: " + v.symbols[i]);
    }
    return v;
  }

  std::size_t size() const { return symbols.size(); }

  TokenId id_of(const std::string& symbol) const {
    auto it = index.find(symbol);
    if (it == index.end()) throw ArgumentError("Vocab: unknown symbol: " + symbol);
    return it->second;
  }

  const std::string& symbol(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= symbols.size())
      throw ArgumentError("Vocab: token id out of range");
    return symbols[static_cast<std::size_t>(id)];
  }
};

// One whitespace-separated symbol stream per line.
struct Corpus {
  std::vector<TokenSequence> lines;
};

inline std::vector<std::string> split_whitespace(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

// Vocabulary in first-appearance order over the whole text.
inline Vocab vocab_from_corpus_text(const std::string& text) {
  Vocab v;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    for (auto& tok : split_whitespace(line)) {
      if (v.index.emplace(tok, static_cast<TokenId>(v.symbols.size())).second)
        v.symbols.push_back(tok);
    }
  }
  return v;
}

inline Corpus parse_corpus(const std::string& text, const Vocab& vocab) {
  Corpus c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto toks = split_whitespace(line);
    if (toks.empty()) continue;
    TokenSequence seq;
    seq.reserve(toks.size());
    for (auto& t : toks) seq.push_back(vocab.id_of(t));
    c.lines.push_back(std::move(seq));
  }
  return c;
}

inline std::string corpus_to_text(const Corpus& corpus, const Vocab& vocab) {
  std::string out;
  for (const auto& line : corpus.lines) {
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (i) out += ' ';
      out += vocab.symbol(line[i]);
    }
    out += '\n';
  }
  return out;
}

// Abstract next-token model: a conditional distribution over a fixed
// vocabulary given the tokens so far.
class LmInterface {
 public:
  virtual ~LmInterface() = default;
  virtual std::size_t vocab_size() const = 0;
  // Unnormalized is fine for logits; next_distribution must sum to 1.
  virtual std::vector<double> next_logits(const TokenSequence& state) const = 0;
  virtual std::vector<double> next_distribution(const TokenSequence& state) const = 0;
  virtual std::string id() const = 0;
};

// A model that can also differentiate the log-probability of a continuation
// with respect to its input embeddings.
struct GradientReport {
  double loss = 0.0;     // -log P(target | state)
  Matrix embed_grads;    // d(loss)/d(input embedding), one row per state position
};

class GradientLm : public LmInterface {
 public:
  virtual const Matrix& embedding_table() const = 0;
  virtual GradientReport loss_and_input_grads(const TokenSequence& state,
                                              TokenId target) const = 0;
};

inline void validate_tokens(const TokenSequence& seq, std::size_t vocab_size) {
  for (TokenId t : seq)
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size)
      throw ArgumentError("token id out of range for vocabulary");
}

// Lowest index wins ties, everywhere a distribution gets decoded.
inline TokenId argmax_token(const std::vector<double>& values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return static_cast<TokenId>(best);
}

inline std::vector<double> log_softmax(std::vector<double> logits) {
  const double lse = log_sum_exp(logits);
  for (double& v : logits) v -= lse;
  return logits;
}

// One step of the token state machine: append the given control token, or,
// with no input, the greedily decoded next token. The state only ever grows.
inline TokenSequence transition(const TokenSequence& state, std::optional<TokenId> input,
                                const LmInterface& lm) {
  TokenSequence next = state;
  if (input.has_value()) {
    if (*input < 0 || static_cast<std::size_t>(*input) >= lm.vocab_size())
      throw ArgumentError("transition: input token out of range");
    next.push_back(*input);
    return next;
  }
  if (state.empty()) throw ArgumentError("transition: cannot decode from an empty state");
  next.push_back(argmax_token(lm.next_distribution(state)));
  return next;
}

// The observable part of the state: its last r tokens.
inline TokenSequence readout(const TokenSequence& state, std::size_t r) {
  if (r > state.size()) throw ArgumentError("readout: window exceeds state length");
  return TokenSequence(state.end() - static_cast<std::ptrdiff_t>(r), state.end());
}

// Prepend the control u to the imposed block x0, then decode r tokens greedily.
inline TokenSequence generate(const TokenSequence& x0, const TokenSequence& u, std::size_t r,
                              const LmInterface& lm) {
  if (r < 1) throw ArgumentError("generate: need r >= 1");
  validate_tokens(x0, lm.vocab_size());
  validate_tokens(u, lm.vocab_size());
  TokenSequence state = u;
  state.insert(state.end(), x0.begin(), x0.end());
  for (std::size_t i = 0; i < r; ++i) state = transition(state, std::nullopt, lm);
  return readout(state, r);
}

inline bool is_output_reached(const TokenSequence& x0, const TokenSequence& u,
                              const TokenSequence& y_star, const LmInterface& lm) {
  if (y_star.empty()) throw ArgumentError("is_output_reached: empty target");
  validate_tokens(y_star, lm.vocab_size());
  return generate(x0, u, y_star.size(), lm) == y_star;
}

// Add-constant-smoothed bigram model: P(b | ...a) proportional to
// count(a,b) + smoothing. Conditions on the last token only.
class BigramLm final : public LmInterface {
 public:
  BigramLm(std::size_t vocab_size, Matrix counts, double smoothing, std::string label)
      : vocab_(vocab_size), counts_(std::move(counts)), smoothing_(smoothing),
        label_(std::move(label)) {
    require_shape(counts_.rows == vocab_ && counts_.cols == vocab_,
                  "BigramLm: counts must be vocab x vocab");
    if (!(smoothing_ > 0.0)) throw ArgumentError("BigramLm: smoothing must be > 0");
    if (!counts_.all_finite()) throw ArgumentError("BigramLm: counts must be finite");
    for (double c : counts_.data)
      if (c < 0.0) throw ArgumentError("BigramLm: counts must be >= 0");
    row_totals_.resize(vocab_, 0.0);
    for (std::size_t a = 0; a < vocab_; ++a)
      for (std::size_t b = 0; b < vocab_; ++b) row_totals_[a] += counts_(a, b);
  }

  static BigramLm from_corpus(const Corpus& corpus, std::size_t vocab_size, double smoothing) {
    bool any = false;
    Matrix counts(vocab_size, vocab_size);
    for (const auto& line : corpus.lines) {
      validate_tokens(line, vocab_size);
      for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        counts(static_cast<std::size_t>(line[i]), static_cast<std::size_t>(line[i + 1])) += 1.0;
        any = true;
      }
    }
    if (!any) throw ArgumentError("BigramLm: corpus has no adjacent token pairs");
    return BigramLm(vocab_size, std::move(counts), smoothing, "bigram");
  }

  std::size_t vocab_size() const override { return vocab_; }

  std::vector<double> next_distribution(const TokenSequence& state) const override {
    if (state.empty()) throw ArgumentError("BigramLm: empty state has no context");
    validate_tokens(state, vocab_);
    const std::size_t a = static_cast<std::size_t>(state.back());
    const double denom = row_totals_[a] + smoothing_ * static_cast<double>(vocab_);
    std::vector<double> p(vocab_);
    for (std::size_t b = 0; b < vocab_; ++b) p[b] = (counts_(a, b) + smoothing_) / denom;
    return p;
  }

  std::vector<double> next_logits(const TokenSequence& state) const override {
    auto p = next_distribution(state);
    for (double& v : p) v = std::log(v);
    return p;
  }

  std::string id() const override { return label_; }

 private:
  std::size_t vocab_;
  Matrix counts_;
  double smoothing_;
  std::string label_;
  std::vector<double> row_totals_;
};

}  // namespace promptctl
