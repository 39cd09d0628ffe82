#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "promptctl/harness.hpp"
#include "promptctl/promptopt.hpp"
#include "promptctl/reachability.hpp"
#include "promptctl/reports.hpp"
#include "promptctl/serialize.hpp"
#include "promptctl/toylm.hpp"
#include "promptctl/version.hpp"

namespace pc = promptctl;
using pc::json;

namespace {

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  const json j = pc::read_json_file(path);
  if (!j.is_object()) throw pc::ArgumentError("config must be a JSON object: " + path);
  return j;
}

// Flags beat the config file; the config file beats built-in defaults.
template <typename T>
void merge(const CLI::App& cmd, const std::string& flag, const json& cfg, const char* key,
           T& value) {
  if (cmd.count(flag) == 0 && cfg.contains(key)) value = cfg.at(key).get<T>();
}

std::uint64_t parse_u64(const std::string& text, const std::string& what) {
  if (text.empty() || !std::all_of(text.begin(), text.end(),
                                   [](unsigned char c) { return std::isdigit(c); }))
    throw pc::ArgumentError(what + " is not a non-negative integer: " + text);
  return std::stoull(text);
}

// --seed flag, then the SEED environment variable, then the config file, then 0.
std::uint64_t resolve_seed(const CLI::App& cmd, std::uint64_t flag_value, const json& cfg) {
  if (cmd.count("--seed") > 0) return flag_value;
  if (const char* env = std::getenv("SEED")) return parse_u64(env, "SEED environment variable");
  if (cfg.contains("seed")) return cfg.at("seed").get<std::uint64_t>();
  return flag_value;
}

std::vector<std::size_t> parse_schedule(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    const std::uint64_t k = parse_u64(part, "schedule entry");
    if (k == 0) throw pc::ArgumentError("schedule entries must be >= 1");
    ks.push_back(static_cast<std::size_t>(k));
  }
  if (ks.empty()) throw pc::ArgumentError("schedule is empty");
  return ks;
}

json run_stamp(const char* subcommand, std::uint64_t seed, json config) {
  return json{{"tool", "promptctl"},   {"version", pc::kVersion}, {"build", pc::kBuildId},
              {"subcommand", subcommand}, {"seed", seed},         {"config", std::move(config)}};
}

void emit(const json& j, const std::string& out_path) {
  if (out_path.empty())
    std::cout << j.dump(2) << '\n';
  else
    pc::write_json_file_atomic(out_path, j);
}

pc::Vocab numbered_vocab(std::size_t n) {
  std::vector<std::string> symbols;
  symbols.reserve(n);
  for (std::size_t i = 0; i < n; ++i) symbols.push_back("t" + std::to_string(i));
  return pc::Vocab::from_symbols(std::move(symbols));
}

json symbols_of(const pc::TokenSequence& prompt, const pc::Vocab& vocab) {
  json arr = json::array();
  for (pc::TokenId t : prompt) arr.push_back(vocab.symbol(t));
  return arr;
}

// ---- train -------------------------------------------------------------

struct TrainArgs {
  std::string config_path, corpus_path, out_path;
  bool synthetic = false;
  std::size_t vocab_size = 64, corpus_lines = 40, line_len = 12;
  double noise = 0.06;
  std::size_t d_model = 32, d_key = 16, layers = 2, max_len = 64;
  std::size_t steps = 1000, batch = 16;
  double lr = 0.2;
  std::uint64_t seed = 0;
};

int run_train(const CLI::App& cmd, TrainArgs a) {
  const json cfg = load_config(a.config_path);
  merge(cmd, "--corpus", cfg, "corpus", a.corpus_path);
  merge(cmd, "--synthetic", cfg, "synthetic", a.synthetic);
  merge(cmd, "--vocab-size", cfg, "vocab_size", a.vocab_size);
  merge(cmd, "--corpus-lines", cfg, "corpus_lines", a.corpus_lines);
  merge(cmd, "--line-len", cfg, "line_len", a.line_len);
  merge(cmd, "--noise", cfg, "noise", a.noise);
  merge(cmd, "--d-model", cfg, "d_model", a.d_model);
  merge(cmd, "--d-key", cfg, "d_key", a.d_key);
  merge(cmd, "--layers", cfg, "layers", a.layers);
  merge(cmd, "--max-len", cfg, "max_len", a.max_len);
  merge(cmd, "--steps", cfg, "steps", a.steps);
  merge(cmd, "--batch", cfg, "batch", a.batch);
  merge(cmd, "--lr", cfg, "lr", a.lr);
  merge(cmd, "--out", cfg, "out", a.out_path);
  a.seed = resolve_seed(cmd, a.seed, cfg);
  if (a.out_path.empty()) throw pc::ArgumentError("train: --out is required");

  pc::Vocab vocab;
  pc::Corpus corpus;
  if (!a.corpus_path.empty()) {
    const std::string text = pc::read_text_file(a.corpus_path);
    vocab = pc::vocab_from_corpus_text(text);
    corpus = pc::parse_corpus(text, vocab);
  } else if (a.synthetic) {
    corpus = pc::make_synthetic_corpus(a.vocab_size, a.corpus_lines, a.line_len, a.noise, a.seed);
    vocab = numbered_vocab(a.vocab_size);
  } else {
    throw pc::ArgumentError("train: provide --corpus FILE or --synthetic");
  }

  pc::TransformerConfig config;
  config.vocab_size = vocab.size();
  config.d_model = a.d_model;
  config.d_key = a.d_key;
  config.n_layers = a.layers;
  config.max_len = a.max_len;

  const pc::TransformerParams params = pc::train(config, corpus, a.steps, a.lr, a.batch, a.seed);

  json ck = pc::checkpoint_to_json(params, vocab);
  ck["run"] = run_stamp(
      "train", a.seed,
      json{{"corpus", a.corpus_path}, {"synthetic", a.synthetic}, {"vocab_size", vocab.size()},
           {"corpus_lines", a.corpus_lines}, {"line_len", a.line_len}, {"noise", a.noise},
           {"d_model", a.d_model}, {"d_key", a.d_key}, {"layers", a.layers},
           {"max_len", a.max_len}, {"steps", a.steps}, {"lr", a.lr}, {"batch", a.batch},
           {"out", a.out_path}});
  pc::write_json_file_atomic(a.out_path, ck);
  std::cout << "wrote " << a.out_path << "; mean corpus loss "
            << pc::mean_corpus_loss(params, corpus) << '\n';
  return 0;
}

// ---- bound / reach -----------------------------------------------------

struct BoundArgs {
  std::string instance_path, out_path;
};

int run_bound(const BoundArgs& a) {
  const json j = pc::read_json_file(a.instance_path);
  const auto inst = j.get<pc::ControlInstance>();
  const auto params = j.at("params").get<pc::AttentionParams>();
  json out = pc::certify_unreachable(inst, params);
  out["run"] = run_stamp("bound", 0, json{{"instance", a.instance_path}, {"out", a.out_path}});
  emit(out, a.out_path);
  return 0;
}

struct ReachArgs {
  std::string instance_path, out_path;
  std::uint64_t budget = 100000;
  std::uint64_t seed = 0;
};

int run_reach(const CLI::App& cmd, ReachArgs a) {
  const json j = pc::read_json_file(a.instance_path);
  const auto inst = j.get<pc::ControlInstance>();
  const auto params = j.at("params").get<pc::AttentionParams>();
  const auto raw = j.at("candidates").get<pc::Matrix>();
  merge(cmd, "--budget", j, "budget", a.budget);
  a.seed = resolve_seed(cmd, a.seed, j);

  const pc::Matrix candidates = pc::make_candidate_set(raw, inst.m_u);
  json out = pc::brute_force_reach(inst, params, candidates, a.budget, a.seed);
  out["run"] = run_stamp("reach", a.seed,
                         json{{"instance", a.instance_path}, {"budget", a.budget},
                              {"out", a.out_path}});
  emit(out, a.out_path);
  return 0;
}

// ---- optimize ------------------------------------------------------------

struct OptimizeArgs {
  std::string config_path, model_path, instance_path, out_path;
  std::string method = "backoff";
  std::string schedule = "1,2,3,4,6,8,10";
  std::size_t k = 10;
  std::size_t gcg_batch = 0, gcg_topk = 0, gcg_iters = 34;
  bool exhaustive = false;
  std::uint64_t seed = 0;
};

int run_optimize(const CLI::App& cmd, OptimizeArgs a) {
  const json cfg = load_config(a.config_path);
  merge(cmd, "--model", cfg, "model", a.model_path);
  merge(cmd, "--instance", cfg, "instance", a.instance_path);
  merge(cmd, "--method", cfg, "method", a.method);
  merge(cmd, "--schedule", cfg, "schedule", a.schedule);
  merge(cmd, "--k", cfg, "k", a.k);
  merge(cmd, "--gcg-batch", cfg, "gcg_batch", a.gcg_batch);
  merge(cmd, "--gcg-topk", cfg, "gcg_topk", a.gcg_topk);
  merge(cmd, "--gcg-iters", cfg, "gcg_iters", a.gcg_iters);
  merge(cmd, "--gcg-exhaustive", cfg, "gcg_exhaustive", a.exhaustive);
  merge(cmd, "--out", cfg, "out", a.out_path);
  a.seed = resolve_seed(cmd, a.seed, cfg);
  if (a.model_path.empty()) throw pc::ArgumentError("optimize: --model is required");
  if (a.instance_path.empty()) throw pc::ArgumentError("optimize: --instance is required");

  const pc::Checkpoint ck = pc::load_checkpoint(a.model_path);
  const pc::ToyTransformerLm lm(ck.params);
  const json ij = pc::read_json_file(a.instance_path);
  const auto x0 = ij.at("x0").get<pc::TokenSequence>();
  const auto y = ij.at("y").get<pc::TokenId>();

  pc::GcgOptions gopts;
  gopts.batch = a.gcg_batch;
  gopts.k_sub = a.gcg_topk;
  gopts.iterations = a.gcg_iters;
  gopts.seed = a.seed;
  gopts.exhaustive = a.exhaustive;

  json out;
  if (a.method == "greedy" || a.method == "gcg") {
    const pc::OptimizeOutcome outcome = a.method == "greedy"
                                            ? pc::greedy_back_generate(x0, y, a.k, lm)
                                            : pc::gcg(x0, y, a.k, lm, gopts);
    out = outcome;
    out["prompt_symbols"] = symbols_of(outcome.prompt, ck.vocab);
  } else {
    const pc::BackoffSchedule schedule = pc::split_schedule(parse_schedule(a.schedule));
    const pc::BackoffResult res = pc::back_off_prompt(x0, y, lm, schedule, a.seed, gopts);
    json attempts = json::array();
    for (const auto& at : res.attempts)
      attempts.push_back(json{
          {"k", at.k}, {"method", at.method}, {"success", at.success}, {"logprob", at.logprob}});
    out = json{{"success", res.success},
               {"required_k", res.success ? json(res.required_k) : json(nullptr)},
               {"outcome", res.outcome},
               {"attempts", std::move(attempts)}};
    if (!res.success) out["failure_reason"] = res.failure_reason;
    out["prompt_symbols"] = symbols_of(res.outcome.prompt, ck.vocab);
  }
  out["method"] = a.method;
  out["run"] = run_stamp("optimize", a.seed,
                         json{{"model", a.model_path}, {"instance", a.instance_path},
                              {"method", a.method}, {"k", a.k}, {"schedule", a.schedule},
                              {"gcg_batch", a.gcg_batch}, {"gcg_topk", a.gcg_topk},
                              {"gcg_iters", a.gcg_iters}, {"gcg_exhaustive", a.exhaustive},
                              {"out", a.out_path}});
  emit(out, a.out_path);
  return 0;
}

// ---- kepsilon ------------------------------------------------------------

struct KepsArgs {
  std::string config_path, model_path, dataset_path, build_kind, corpus_path, out_dir;
  std::string schedule = "1,2,3,4,6,8,10";
  bool synthetic = false;
  std::size_t pairs = 500, state_lo = 8, state_hi = 16;
  std::size_t top_n = 8, num_states = 0;
  std::size_t corpus_lines = 40, line_len = 12;
  double noise = 0.06;
  std::size_t workers = 1;
  std::size_t gcg_batch = 0, gcg_topk = 0, gcg_iters = 34;
  std::uint64_t seed = 0;
};

int run_kepsilon(const CLI::App& cmd, KepsArgs a) {
  const json cfg = load_config(a.config_path);
  merge(cmd, "--model", cfg, "model", a.model_path);
  merge(cmd, "--dataset", cfg, "dataset", a.dataset_path);
  merge(cmd, "--build", cfg, "build", a.build_kind);
  merge(cmd, "--corpus", cfg, "corpus", a.corpus_path);
  merge(cmd, "--synthetic", cfg, "synthetic", a.synthetic);
  merge(cmd, "--pairs", cfg, "pairs", a.pairs);
  merge(cmd, "--state-lo", cfg, "state_lo", a.state_lo);
  merge(cmd, "--state-hi", cfg, "state_hi", a.state_hi);
  merge(cmd, "--top-n", cfg, "top_n", a.top_n);
  merge(cmd, "--num-states", cfg, "num_states", a.num_states);
  merge(cmd, "--corpus-lines", cfg, "corpus_lines", a.corpus_lines);
  merge(cmd, "--line-len", cfg, "line_len", a.line_len);
  merge(cmd, "--noise", cfg, "noise", a.noise);
  merge(cmd, "--schedule", cfg, "schedule", a.schedule);
  merge(cmd, "--workers", cfg, "workers", a.workers);
  merge(cmd, "--gcg-batch", cfg, "gcg_batch", a.gcg_batch);
  merge(cmd, "--gcg-topk", cfg, "gcg_topk", a.gcg_topk);
  merge(cmd, "--gcg-iters", cfg, "gcg_iters", a.gcg_iters);
  merge(cmd, "--out", cfg, "out", a.out_dir);
  a.seed = resolve_seed(cmd, a.seed, cfg);
  if (a.model_path.empty()) throw pc::ArgumentError("kepsilon: --model is required");
  if (a.out_dir.empty()) throw pc::ArgumentError("kepsilon: --out is required");

  const pc::Checkpoint ck = pc::load_checkpoint(a.model_path);
  const pc::ToyTransformerLm lm(ck.params);

  pc::ControlDataset ds;
  bool built = false;
  if (!a.dataset_path.empty()) {
    ds = pc::load_dataset(a.dataset_path);
  } else if (!a.build_kind.empty()) {
    pc::Corpus corpus;
    if (!a.corpus_path.empty()) {
      corpus = pc::parse_corpus(pc::read_text_file(a.corpus_path), ck.vocab);
    } else if (a.synthetic) {
      corpus = pc::make_synthetic_corpus(lm.vocab_size(), a.corpus_lines, a.line_len, a.noise,
                                         a.seed);
    } else {
      throw pc::ArgumentError("kepsilon: --build needs --corpus FILE or --synthetic");
    }
    if (a.build_kind == "ground-truth") {
      ds = pc::build_ground_truth_dataset(corpus, lm, a.pairs, a.state_lo, a.state_hi, a.seed);
    } else if (a.build_kind == "top-n") {
      const std::size_t states =
          a.num_states ? a.num_states : (a.pairs + a.top_n - 1) / std::max<std::size_t>(1, a.top_n);
      ds = pc::build_top_n_dataset(corpus, lm, states, a.top_n, a.seed, a.state_lo, a.state_hi);
    } else {
      ds = pc::build_uniform_rank_dataset(corpus, lm, a.pairs, a.seed, a.state_lo, a.state_hi);
    }
    ds.corpus_id = a.corpus_path.empty() ? "synthetic" : a.corpus_path;
    built = true;
  } else {
    throw pc::ArgumentError("kepsilon: provide --dataset FILE or --build KIND");
  }

  pc::MeasureOptions opts;
  opts.schedule = pc::split_schedule(parse_schedule(a.schedule));
  opts.seed = a.seed;
  opts.workers = a.workers;
  opts.gcg.batch = a.gcg_batch;
  opts.gcg.k_sub = a.gcg_topk;
  opts.gcg.iterations = a.gcg_iters;

  const pc::KEpsReport report = pc::measure_k_epsilon(ds, lm, opts);
  const auto files = pc::emit_reports(report, a.out_dir, &ck.vocab);

  json manifest{{"files", files}, {"out_dir", a.out_dir}};
  if (built) {
    pc::save_dataset((std::filesystem::path(a.out_dir) / "dataset.jsonl").string(), ds);
    manifest["dataset"] = "dataset.jsonl";
  }
  manifest["run"] = run_stamp(
      "kepsilon", a.seed,
      json{{"model", a.model_path}, {"dataset", a.dataset_path}, {"build", a.build_kind},
           {"corpus", a.corpus_path}, {"synthetic", a.synthetic}, {"pairs", a.pairs},
           {"state_lo", a.state_lo}, {"state_hi", a.state_hi}, {"top_n", a.top_n},
           {"num_states", a.num_states}, {"corpus_lines", a.corpus_lines},
           {"line_len", a.line_len}, {"noise", a.noise}, {"schedule", a.schedule},
           {"workers", a.workers}, {"gcg_batch", a.gcg_batch}, {"gcg_topk", a.gcg_topk},
           {"gcg_iters", a.gcg_iters}, {"out", a.out_dir}});
  pc::write_json_file_atomic((std::filesystem::path(a.out_dir) / "manifest.json").string(),
                             manifest);

  std::cout << "wrote " << files.size() << " report files to " << a.out_dir << "; epsilon(k="
            << report.per_k.back().k << ") = " << report.per_k.back().epsilon << "; replay "
            << report.replay.passed << "/" << report.replay.checked << '\n';
  return 0;
}

// ---- report --------------------------------------------------------------

struct ReportArgs {
  std::string from_path, model_path, out_dir;
};

int run_report(const ReportArgs& a) {
  pc::KEpsReport report;
  pc::from_json(pc::read_json_file(a.from_path), report);
  pc::Checkpoint ck;
  const pc::Vocab* vocab = nullptr;
  if (!a.model_path.empty()) {
    ck = pc::load_checkpoint(a.model_path);
    vocab = &ck.vocab;
  }
  const auto files = pc::emit_reports(report, a.out_dir, vocab);
  json manifest{{"files", files}, {"out_dir", a.out_dir}};
  manifest["run"] = run_stamp("report", report.seed,
                              json{{"from", a.from_path}, {"model", a.model_path},
                                   {"out", a.out_dir}});
  pc::write_json_file_atomic((std::filesystem::path(a.out_dir) / "manifest.json").string(),
                             manifest);
  std::cout << "wrote " << files.size() << " report files to " << a.out_dir << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prompt controllability toolkit: certificates, optimizers, k-epsilon harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version",
                       std::string("promptctl ") + pc::kVersion + " (" + pc::kBuildId + ")");
  app.footer(
      "Seed precedence: --seed flag, then the SEED environment variable, then the config\n"
      "file, then 0. Every output embeds the resolved configuration under \"run\".");

  TrainArgs ta;
  CLI::App* train = app.add_subcommand("train", "train the toy transformer, write a checkpoint");
  train->add_option("--config", ta.config_path, "JSON config file");
  train->add_option("--corpus", ta.corpus_path, "training text, one symbol sequence per line");
  train->add_flag("--synthetic", ta.synthetic, "use a generated template corpus instead");
  train->add_option("--vocab-size", ta.vocab_size, "synthetic vocabulary size")
      ->capture_default_str();
  train->add_option("--corpus-lines", ta.corpus_lines, "synthetic corpus lines")
      ->capture_default_str();
  train->add_option("--line-len", ta.line_len, "synthetic line length")->capture_default_str();
  train->add_option("--noise", ta.noise, "synthetic token noise rate")->capture_default_str();
  train->add_option("--d-model", ta.d_model, "embedding width")->capture_default_str();
  train->add_option("--d-key", ta.d_key, "attention key width")->capture_default_str();
  train->add_option("--layers", ta.layers, "transformer layers")->capture_default_str();
  train->add_option("--max-len", ta.max_len, "positional table length")->capture_default_str();
  train->add_option("--steps", ta.steps, "SGD steps")->capture_default_str();
  train->add_option("--lr", ta.lr, "learning rate")->capture_default_str();
  train->add_option("--batch", ta.batch, "windows per step")->capture_default_str();
  train->add_option("--seed", ta.seed, "RNG seed");
  train->add_option("--out", ta.out_path, "checkpoint path to write");

  BoundArgs ba;
  CLI::App* bound = app.add_subcommand("bound", "evaluate the unreachability certificate");
  bound->add_option("--instance", ba.instance_path, "instance JSON {x0, y_star, k, m_u, params}")
      ->required();
  bound->add_option("--out", ba.out_path, "output path (default: stdout)");

  ReachArgs ra;
  CLI::App* reach = app.add_subcommand("reach", "brute-force reachability search");
  reach
      ->add_option("--instance", ra.instance_path,
                   "instance JSON; also carries {candidates, budget, seed}")
      ->required();
  reach->add_option("--budget", ra.budget, "probe budget")->capture_default_str();
  reach->add_option("--seed", ra.seed, "RNG seed for sampling mode");
  reach->add_option("--out", ra.out_path, "output path (default: stdout)");

  OptimizeArgs oa;
  CLI::App* optimize = app.add_subcommand("optimize", "search for a steering prompt");
  optimize->add_option("--config", oa.config_path, "JSON config file");
  optimize->add_option("--model", oa.model_path, "checkpoint path");
  optimize->add_option("--instance", oa.instance_path, "instance JSON {x0: [ids], y: id}");
  optimize->add_option("--method", oa.method, "search method")
      ->check(CLI::IsMember({"greedy", "gcg", "backoff"}))
      ->capture_default_str();
  optimize->add_option("--k", oa.k, "prompt length for greedy/gcg")->capture_default_str();
  optimize->add_option("--schedule", oa.schedule, "backoff prompt lengths, comma-separated")
      ->capture_default_str();
  optimize->add_option("--gcg-batch", oa.gcg_batch, "swap candidates sampled per iteration");
  optimize->add_option("--gcg-topk", oa.gcg_topk, "gradient-ranked candidates per position");
  optimize->add_option("--gcg-iters", oa.gcg_iters, "swap iterations")->capture_default_str();
  optimize->add_flag("--gcg-exhaustive", oa.exhaustive, "enumerate every swap each iteration");
  optimize->add_option("--seed", oa.seed, "RNG seed");
  optimize->add_option("--out", oa.out_path, "output path (default: stdout)");

  KepsArgs ka;
  CLI::App* kepsilon = app.add_subcommand("kepsilon", "measure k-epsilon controllability");
  kepsilon->add_option("--config", ka.config_path, "JSON config file");
  kepsilon->add_option("--model", ka.model_path, "checkpoint path");
  kepsilon->add_option("--dataset", ka.dataset_path, "dataset JSONL to measure");
  kepsilon->add_option("--build", ka.build_kind, "build the dataset first")
      ->check(CLI::IsMember({"ground-truth", "top-n", "uniform-rank"}));
  kepsilon->add_option("--corpus", ka.corpus_path, "corpus text for --build");
  kepsilon->add_flag("--synthetic", ka.synthetic, "build from a generated template corpus");
  kepsilon->add_option("--pairs", ka.pairs, "dataset size for --build")->capture_default_str();
  kepsilon->add_option("--state-lo", ka.state_lo, "min initial state length")
      ->capture_default_str();
  kepsilon->add_option("--state-hi", ka.state_hi, "max initial state length")
      ->capture_default_str();
  kepsilon->add_option("--top-n", ka.top_n, "targets per state for --build top-n")
      ->capture_default_str();
  kepsilon->add_option("--num-states", ka.num_states, "states for --build top-n (0: pairs/top-n)");
  kepsilon->add_option("--corpus-lines", ka.corpus_lines, "synthetic corpus lines")
      ->capture_default_str();
  kepsilon->add_option("--line-len", ka.line_len, "synthetic line length")->capture_default_str();
  kepsilon->add_option("--noise", ka.noise, "synthetic token noise rate")->capture_default_str();
  kepsilon->add_option("--schedule", ka.schedule, "prompt lengths, comma-separated")
      ->capture_default_str();
  kepsilon->add_option("--workers", ka.workers, "parallel per-pair workers")
      ->capture_default_str();
  kepsilon->add_option("--gcg-batch", ka.gcg_batch, "swap candidates sampled per iteration");
  kepsilon->add_option("--gcg-topk", ka.gcg_topk, "gradient-ranked candidates per position");
  kepsilon->add_option("--gcg-iters", ka.gcg_iters, "swap iterations")->capture_default_str();
  kepsilon->add_option("--seed", ka.seed, "RNG seed");
  kepsilon->add_option("--out", ka.out_dir, "report directory");

  ReportArgs pa;
  CLI::App* report = app.add_subcommand("report", "re-emit report files from a saved report.json");
  report->add_option("--from", pa.from_path, "saved report.json")->required();
  report->add_option("--model", pa.model_path, "checkpoint path, for token symbols");
  report->add_option("--out", pa.out_dir, "report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed()) return run_train(*train, ta);
    if (bound->parsed()) return run_bound(ba);
    if (reach->parsed()) return run_reach(*reach, ra);
    if (optimize->parsed()) return run_optimize(*optimize, oa);
    if (kepsilon->parsed()) return run_kepsilon(*kepsilon, ka);
    if (report->parsed()) return run_report(pa);
  } catch (const std::exception& e) {
    std::cerr << "promptctl: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
