#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "promptctl/attention.hpp"
#include "promptctl/errors.hpp"
#include "promptctl/harness.hpp"
#include "promptctl/lmsystem.hpp"
#include "promptctl/matrix.hpp"
#include "promptctl/promptopt.hpp"
#include "promptctl/reachability.hpp"
#include "promptctl/toylm.hpp"

namespace promptctl {

using json = nlohmann::json;

// ---- file io ----------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Write to a temp file in the same directory, then rename over the target, so
// no reader ever sees a half-written file.
inline void write_text_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp);
    out << content;
    if (!out) throw IoError("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

inline json read_json_file(const std::string& path) {
  return json::parse(read_text_file(path));
}

inline void write_json_file_atomic(const std::string& path, const json& j, int indent = 2) {
  write_text_file_atomic(path, j.dump(indent) + "\n");
}

// ---- numcore ----------------------------------------------------------

inline void to_json(json& j, const Matrix& m) {
  j = json{{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

// Accepts the canonical {rows, cols, data} object or nested row arrays, the
// latter being the convenient form for hand-written instance files.
inline void from_json(const json& j, Matrix& m) {
  Matrix parsed;
  if (j.is_array()) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.front().size() : 0;
    std::vector<double> flat;
    flat.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ArgumentError("Matrix: ragged rows in serialized data");
      flat.insert(flat.end(), row.begin(), row.end());
    }
    parsed = Matrix(r, c, std::move(flat));
  } else {
    parsed = Matrix(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                    j.at("data").get<std::vector<double>>());
  }
  if (!parsed.all_finite()) throw ArgumentError("Matrix: non-finite entry in serialized data");
  m = std::move(parsed);
}

// ---- attention --------------------------------------------------------

inline void to_json(json& j, const AttentionParams& p) {
  j = json{{"w_q", p.w_q},       {"w_key", p.w_key}, {"w_v", p.w_v},
           {"d_in", p.d_in()},   {"d_key", p.d_key()}, {"d_out", p.d_out()}};
}

inline void from_json(const json& j, AttentionParams& p) {
  j.at("w_q").get_to(p.w_q);
  j.at("w_key").get_to(p.w_key);
  j.at("w_v").get_to(p.w_v);
  p.validate();
}

inline void to_json(json& j, const BoundQuantities& b) {
  j = json{{"g", b.g},
           {"log_g", b.log_g},
           {"alpha", b.alpha},
           {"sigma_q", b.sigma_q},
           {"sigma_key", b.sigma_key},
           {"sigma_v", b.sigma_v},
           {"m_u", b.m_u},
           {"m_x", b.m_x},
           {"beta", b.beta},
           {"gamma", b.gamma},
           {"log_gamma", b.log_gamma},
           {"k", b.k},
           {"linear_overflow", b.linear_overflow}};
}

// Non-finite doubles serialize as JSON null; accept both directions.
namespace detail {
inline double json_double(const json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}
inline std::vector<double> json_double_vec(const json& j) {
  std::vector<double> out;
  out.reserve(j.size());
  for (const auto& v : j) out.push_back(json_double(v));
  return out;
}
}  // namespace detail

inline void from_json(const json& j, BoundQuantities& b) {
  b.g = detail::json_double_vec(j.at("g"));
  b.log_g = detail::json_double_vec(j.at("log_g"));
  b.alpha = detail::json_double(j.at("alpha"));
  b.sigma_q = j.at("sigma_q").get<double>();
  b.sigma_key = j.at("sigma_key").get<double>();
  b.sigma_v = j.at("sigma_v").get<double>();
  b.m_u = j.at("m_u").get<double>();
  b.m_x = j.at("m_x").get<double>();
  b.beta = detail::json_double_vec(j.at("beta"));
  b.gamma = detail::json_double_vec(j.at("gamma"));
  b.log_gamma = detail::json_double_vec(j.at("log_gamma"));
  b.k = j.at("k").get<std::size_t>();
  b.linear_overflow = j.at("linear_overflow").get<bool>();
}

// ---- reachability -----------------------------------------------------

inline void to_json(json& j, const ControlInstance& inst) {
  j = json{{"x0", inst.x0}, {"y_star", inst.y_star}, {"k", inst.k}, {"m_u", inst.m_u}};
}

inline void from_json(const json& j, ControlInstance& inst) {
  j.at("x0").get_to(inst.x0);
  j.at("y_star").get_to(inst.y_star);
  inst.k = j.at("k").get<std::size_t>();
  inst.m_u = j.at("m_u").get<double>();
}

inline const char* verdict_name(Verdict v) {
  return v == Verdict::kUnreachable ? "unreachable" : "inconclusive";
}

inline void to_json(json& j, const CertificateRow& r) {
  j = json{{"row", r.row},         {"lhs", r.lhs},         {"rhs", r.rhs},
           {"log_lhs", r.log_lhs}, {"log_rhs", r.log_rhs}, {"triggered", r.triggered}};
}

inline void from_json(const json& j, CertificateRow& r) {
  r.row = j.at("row").get<std::size_t>();
  r.lhs = detail::json_double(j.at("lhs"));
  r.rhs = detail::json_double(j.at("rhs"));
  r.log_lhs = detail::json_double(j.at("log_lhs"));
  r.log_rhs = detail::json_double(j.at("log_rhs"));
  r.triggered = j.at("triggered").get<bool>();
}

inline void to_json(json& j, const Certificate& c) {
  j = json{{"verdict", verdict_name(c.verdict)},
           {"restated_agrees", c.restated_agrees},
           {"per_row", c.per_row},
           {"bounds", c.bounds}};
}

inline void from_json(const json& j, Certificate& c) {
  const std::string v = j.at("verdict").get<std::string>();
  if (v == "unreachable")
    c.verdict = Verdict::kUnreachable;
  else if (v == "inconclusive")
    c.verdict = Verdict::kInconclusive;
  else
    throw ArgumentError("Certificate: unknown verdict: " + v);
  c.restated_agrees = j.at("restated_agrees").get<bool>();
  c.per_row = j.at("per_row").get<std::vector<CertificateRow>>();
  j.at("bounds").get_to(c.bounds);
}

inline void to_json(json& j, const OracleResult& r) {
  j = json{{"best_residual", r.best_residual},
           {"best_u", r.best_u},
           {"searched", r.searched},
           {"reached", r.reached}};
}

inline void from_json(const json& j, OracleResult& r) {
  r.best_residual = j.at("best_residual").get<double>();
  j.at("best_u").get_to(r.best_u);
  r.searched = j.at("searched").get<std::uint64_t>();
  r.reached = j.at("reached").get<bool>();
}

// ---- lmsystem / toylm -------------------------------------------------

inline void to_json(json& j, const TransformerConfig& c) {
  j = json{{"vocab_size", c.vocab_size},
           {"d_model", c.d_model},
           {"d_key", c.d_key},
           {"n_layers", c.n_layers},
           {"max_len", c.max_len}};
}

inline void from_json(const json& j, TransformerConfig& c) {
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.d_model = j.at("d_model").get<std::size_t>();
  c.d_key = j.at("d_key").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.validate();
}

inline json checkpoint_to_json(const TransformerParams& params, const Vocab& vocab) {
  json layers = json::array();
  for (const auto& l : params.layers) {
    layers.push_back(json{{"w_q", l.attn.w_q},
                          {"w_key", l.attn.w_key},
                          {"w_v", l.attn.w_v},
                          {"mlp_w1", l.mlp_w1},
                          {"mlp_w2", l.mlp_w2}});
  }
  return json{{"config", params.config},
              {"seed", params.seed},
              {"step", params.step},
              {"matrices",
               json{{"embed", params.embed},
                    {"pos_embed", params.pos_embed},
                    {"layers", layers},
                    {"unembed", params.unembed}}},
              {"vocab", vocab.symbols}};
}

struct Checkpoint {
  TransformerParams params;
  Vocab vocab;
};

inline Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint ck;
  j.at("config").get_to(ck.params.config);
  ck.params.seed = j.at("seed").get<std::uint64_t>();
  ck.params.step = j.at("step").get<std::uint64_t>();
  const json& m = j.at("matrices");
  m.at("embed").get_to(ck.params.embed);
  m.at("pos_embed").get_to(ck.params.pos_embed);
  m.at("unembed").get_to(ck.params.unembed);
  for (const auto& lj : m.at("layers")) {
    TransformerLayer layer;
    lj.at("w_q").get_to(layer.attn.w_q);
    lj.at("w_key").get_to(layer.attn.w_key);
    lj.at("w_v").get_to(layer.attn.w_v);
    lj.at("mlp_w1").get_to(layer.mlp_w1);
    lj.at("mlp_w2").get_to(layer.mlp_w2);
    ck.params.layers.push_back(std::move(layer));
  }
  if (ck.params.layers.size() != ck.params.config.n_layers)
    throw ArgumentError("checkpoint: layer count does not match config");
  ck.vocab = Vocab::from_symbols(j.at("vocab").get<std::vector<std::string>>());
  if (ck.vocab.size() != ck.params.config.vocab_size)
    throw ArgumentError("checkpoint: vocab size does not match config");
  return ck;
}

inline void save_checkpoint(const std::string& path, const TransformerParams& params,
                            const Vocab& vocab) {
  write_json_file_atomic(path, checkpoint_to_json(params, vocab));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(read_json_file(path));
}

// ---- promptopt --------------------------------------------------------

inline void to_json(json& j, const TraceStep& t) {
  j = json{{"step", t.step}, {"prompt", t.prompt}, {"logprob", t.logprob}};
}

inline void from_json(const json& j, TraceStep& t) {
  t.step = j.at("step").get<std::size_t>();
  t.prompt = j.at("prompt").get<TokenSequence>();
  t.logprob = detail::json_double(j.at("logprob"));
}

inline void to_json(json& j, const OptimizeOutcome& o) {
  j = json{{"prompt", o.prompt},
           {"achieved_logprob", o.achieved_logprob},
           {"success", o.success},
           {"evaluations", o.evaluations},
           {"trace", o.trace}};
}

inline void from_json(const json& j, OptimizeOutcome& o) {
  o.prompt = j.at("prompt").get<TokenSequence>();
  o.achieved_logprob = detail::json_double(j.at("achieved_logprob"));
  o.success = j.at("success").get<bool>();
  o.evaluations = j.at("evaluations").get<std::uint64_t>();
  o.trace = j.at("trace").get<std::vector<TraceStep>>();
}

// ---- harness ----------------------------------------------------------

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kGroundTruth: return "ground_truth";
    case Provenance::kTopRank: return "top_rank";
    case Provenance::kUniformRank: return "uniform_rank";
  }
  return "ground_truth";
}

inline Provenance provenance_from_name(const std::string& s) {
  if (s == "ground_truth") return Provenance::kGroundTruth;
  if (s == "top_rank") return Provenance::kTopRank;
  if (s == "uniform_rank") return Provenance::kUniformRank;
  throw ArgumentError("unknown provenance: " + s);
}

inline void to_json(json& j, const ControlPair& p) {
  j = json{{"x0", p.x0},
           {"y", p.y},
           {"provenance", provenance_name(p.provenance)},
           {"provenance_value", p.provenance_value},
           {"base_logprob", p.base_logprob},
           {"base_rank", p.base_rank}};
  if (p.provenance == Provenance::kGroundTruth)
    j["offset"] = json{{"line", p.corpus_line}, {"start", p.corpus_offset}};
}

inline void from_json(const json& j, ControlPair& p) {
  p.x0 = j.at("x0").get<TokenSequence>();
  p.y = j.at("y").get<TokenId>();
  p.provenance = provenance_from_name(j.at("provenance").get<std::string>());
  p.provenance_value = j.value("provenance_value", std::size_t{0});
  p.base_logprob = detail::json_double(j.at("base_logprob"));
  p.base_rank = j.at("base_rank").get<std::size_t>();
  if (j.contains("offset")) {
    p.corpus_line = j["offset"].at("line").get<std::size_t>();
    p.corpus_offset = j["offset"].at("start").get<std::size_t>();
  }
}

// One pair per line; metadata travels in a sidecar written by the CLI.
// First line is a metadata header; every following line is one pair. Files
// without a header (pair objects only) still load, with empty metadata.
inline std::string dataset_to_jsonl(const ControlDataset& ds) {
  std::string out = json{{"corpus_id", ds.corpus_id}, {"lm_id", ds.lm_id}, {"seed", ds.seed}}.dump();
  out += '\n';
  for (const auto& p : ds.pairs) {
    out += json(p).dump();
    out += '\n';
  }
  return out;
}

inline ControlDataset dataset_from_jsonl(const std::string& text) {
  ControlDataset ds;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.contains("x0")) {
      ds.pairs.push_back(j.get<ControlPair>());
    } else {
      ds.corpus_id = j.value("corpus_id", std::string{});
      ds.lm_id = j.value("lm_id", std::string{});
      ds.seed = j.value("seed", std::uint64_t{0});
    }
  }
  return ds;
}

inline void save_dataset(const std::string& path, const ControlDataset& ds) {
  write_text_file_atomic(path, dataset_to_jsonl(ds));
}

inline ControlDataset load_dataset(const std::string& path) {
  return dataset_from_jsonl(read_text_file(path));
}

inline void to_json(json& j, const PairOutcome& p) {
  j = json{{"success", p.success},
           {"required_k", p.success ? json(p.required_k) : json(nullptr)},
           {"prompt", p.prompt},
           {"y", p.y},
           {"base_logprob", p.base_logprob},
           {"base_rank", p.base_rank}};
  if (!p.success && !p.failure_reason.empty()) j["failure_reason"] = p.failure_reason;
}

inline void from_json(const json& j, PairOutcome& p) {
  p.success = j.at("success").get<bool>();
  p.required_k = j.at("required_k").is_null() ? 0 : j.at("required_k").get<std::size_t>();
  p.prompt = j.at("prompt").get<TokenSequence>();
  p.y = j.at("y").get<TokenId>();
  p.base_logprob = detail::json_double(j.at("base_logprob"));
  p.base_rank = j.at("base_rank").get<std::size_t>();
  p.failure_reason = j.value("failure_reason", std::string{});
}

inline void to_json(json& j, const KEpsPoint& p) {
  j = json{{"k", p.k}, {"epsilon", p.epsilon}};
}

inline void from_json(const json& j, KEpsPoint& p) {
  p.k = j.at("k").get<std::size_t>();
  p.epsilon = j.at("epsilon").get<double>();
}

inline void to_json(json& j, const TokenCount& t) {
  j = json{{"id", t.id}, {"count", t.count}};
}

inline void from_json(const json& j, TokenCount& t) {
  t.id = j.at("id").get<TokenId>();
  t.count = j.at("count").get<std::uint64_t>();
}

inline void to_json(json& j, const LogLinearFit& f) {
  j = json{{"valid", f.valid},
           {"slope", f.slope},
           {"intercept", f.intercept},
           {"r2", f.r2},
           {"points", f.points}};
}

inline void from_json(const json& j, LogLinearFit& f) {
  f.valid = j.at("valid").get<bool>();
  f.slope = detail::json_double(j.at("slope"));
  f.intercept = detail::json_double(j.at("intercept"));
  f.r2 = detail::json_double(j.at("r2"));
  f.points = j.at("points").get<std::size_t>();
}

inline void to_json(json& j, const ReplayCheck& r) {
  j = json{{"checked", r.checked}, {"passed", r.passed}};
}

inline void from_json(const json& j, ReplayCheck& r) {
  r.checked = j.at("checked").get<std::size_t>();
  r.passed = j.at("passed").get<std::size_t>();
}

inline void to_json(json& j, const KEpsReport& r) {
  json baselines = json::object();
  for (const auto& b : reference_baselines()) baselines[b.name] = b.epsilon_at_k10;
  j = json{{"schedule", r.schedule},
           {"per_k", r.per_k},
           {"per_pair", r.per_pair},
           {"token_frequency", r.token_frequency},
           {"fit", r.fit},
           {"replay", r.replay},
           {"corpus_id", r.corpus_id},
           {"lm_id", r.lm_id},
           {"seed", r.seed},
           {"reference_epsilon_at_k10", baselines},
           {"reference_note", "published full-scale measurements; recorded for context, never asserted"}};
}

inline void from_json(const json& j, KEpsReport& r) {
  r.schedule = j.at("schedule").get<std::vector<std::size_t>>();
  r.per_k = j.at("per_k").get<std::vector<KEpsPoint>>();
  r.per_pair = j.at("per_pair").get<std::vector<PairOutcome>>();
  r.token_frequency = j.at("token_frequency").get<std::vector<TokenCount>>();
  j.at("fit").get_to(r.fit);
  j.at("replay").get_to(r.replay);
  r.corpus_id = j.at("corpus_id").get<std::string>();
  r.lm_id = j.at("lm_id").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace promptctl
