#pragma once

// Run configuration files and the run/sweep commands behind the CLI.
//
// Configuration is a single JSON document:
//
//   {
//     "task":      {"kind", "modulus", "bits", "success_prob", "vocab_size",
//                   "dataset_size", "seed", "feature_dim"},
//     "policy":    {"vocab_size", "max_output_len", "prompt_feature_dim",
//                   "embed_dim", "hidden_dim", "init_scale"},
//     "train":     {"epochs", "steps_per_epoch", "max_steps", "batch_size",
//                   "g_on", "g_off", "recency_k", "mu", "e_off",
//                   "learning_rate",
//                   "lr_schedule", "optimizer", "adam_beta1", "adam_beta2",
//                   "adam_epsilon", "temperature", "strategy",
//                   "replay_capacity", "normalizer", "grouping",
//                   "clip_epsilon", "kl_beta", "off_weight", "token_norm",
//                   "effective_mode", "rollout_threads"},
//     "output":    {"dir", "wallclock_in_csv", "dump_buffer",
//                   "save_checkpoint"},
//     "seeds":     [0, 1, ...],
//     "sweep":     {"strategy": [...], "g_off": [...], "grouping": [...],
//                   "normalizer": [...]}
//   }
//
// Every key is optional; omitted keys take the defaults of the structs
// below. Unknown keys are rejected.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "repo/policy.hpp"
#include "repo/tasks.hpp"
#include "repo/trainer.hpp"

namespace repo::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kOutDirEnv = "REPO_OUT_DIR";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OutputOptions {
  std::string dir = "out";
  bool wallclock_in_csv = false;
  bool dump_buffer = false;
  bool save_checkpoint = true;
};

struct SweepAxes {
  std::vector<std::string> strategy;
  std::vector<std::uint64_t> g_off;
  std::vector<std::string> grouping;
  std::vector<std::string> normalizer;
};

struct RunSpec {
  tasks::TaskSpec task;
  policy::PolicyConfig policy;
  trainer::TrainConfig train;
  OutputOptions output;
  std::vector<std::uint64_t> seeds{0};
  SweepAxes sweep;
};

namespace detail {

/// Reads fields of one JSON object, remembering which keys were consumed.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + ": expected an object");
  }

  template <typename T>
  bool get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return false;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
    return true;
  }

  template <typename Enum, typename Parse>
  void get_enum(const char* key, Enum& out, Parse parse) {
    std::string s;
    if (!get(key, s)) return;
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where(key) + ": " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Reader child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where(k) + ": unknown key");
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

inline RunSpec parse_run_spec(const json& root) {
  RunSpec spec;
  detail::Reader r(root, "");

  auto t = r.child("task");
  t.get_enum("kind", spec.task.kind, tasks::task_kind_from_string);
  t.get("modulus", spec.task.modulus);
  t.get("bits", spec.task.bits);
  t.get("success_prob", spec.task.success_prob);
  const bool task_vocab = t.get("vocab_size", spec.task.vocab_size);
  t.get("dataset_size", spec.task.dataset_size);
  t.get("seed", spec.task.seed);
  t.get("feature_dim", spec.task.feature_dim);
  t.finish();

  auto p = r.child("policy");
  const bool policy_vocab = p.get("vocab_size", spec.policy.vocab_size);
  p.get("max_output_len", spec.policy.max_output_len);
  const bool explicit_dim = p.get("prompt_feature_dim", spec.policy.prompt_feature_dim);
  p.get("embed_dim", spec.policy.embed_dim);
  p.get("hidden_dim", spec.policy.hidden_dim);
  p.get("init_scale", spec.policy.init_scale);
  p.finish();

  if (spec.task.kind == tasks::TaskKind::ControlledDifficulty) {
    if (policy_vocab && !task_vocab) spec.task.vocab_size = spec.policy.vocab_size;
    if (!policy_vocab) spec.policy.vocab_size = spec.task.vocab_size;
    if (spec.task.vocab_size != spec.policy.vocab_size)
      throw ConfigError("task.vocab_size and policy.vocab_size must agree for controlled_difficulty");
  } else if (!policy_vocab) {
    spec.policy.vocab_size = tasks::min_vocab_size(spec.task);
  }
  if (!explicit_dim) spec.policy.prompt_feature_dim = tasks::feature_dim(spec.task);

  auto tr = r.child("train");
  auto& c = spec.train;
  tr.get("epochs", c.epochs);
  tr.get("steps_per_epoch", c.steps_per_epoch);
  tr.get("max_steps", c.max_steps);
  tr.get("batch_size", c.batch_size);
  tr.get("g_on", c.g_on);
  tr.get("g_off", c.g_off);
  tr.get("recency_k", c.recency_k);
  tr.get("mu", c.mu);
  if (!tr.get("e_off", c.e_off)) c.e_off = c.epochs;
  tr.get("learning_rate", c.learning_rate);
  tr.get_enum("lr_schedule", c.lr_schedule, trainer::schedule_from_string);
  tr.get_enum("optimizer", c.optimizer.kind, trainer::optimizer_from_string);
  tr.get("adam_beta1", c.optimizer.beta1);
  tr.get("adam_beta2", c.optimizer.beta2);
  tr.get("adam_epsilon", c.optimizer.epsilon);
  tr.get("temperature", c.temperature);
  tr.get_enum("strategy", c.strategy, replay::strategy_from_string);
  tr.get("replay_capacity", c.replay_capacity);
  tr.get_enum("normalizer", c.advantage.normalizer, advantage::normalizer_from_string);
  tr.get_enum("grouping", c.advantage.grouping, advantage::grouping_from_string);
  tr.get("clip_epsilon", c.objective.clip_epsilon);
  tr.get("kl_beta", c.objective.kl_beta);
  tr.get("off_weight", c.objective.off_weight);
  const bool explicit_norm = tr.has("token_norm");
  tr.get_enum("token_norm", c.objective.token_norm, objective::token_norm_from_string);
  tr.get_enum("effective_mode", c.effective_mode, trainer::effective_mode_from_string);
  tr.get("rollout_threads", c.rollout_threads);
  tr.finish();
  // Dr. GRPO pairs mean-only advantages with a constant token normalizer.
  if (!explicit_norm && c.advantage.normalizer == advantage::Normalizer::DrGrpo)
    c.objective.token_norm = objective::TokenNorm::DrGrpoConstant;

  auto o = r.child("output");
  o.get("dir", spec.output.dir);
  o.get("wallclock_in_csv", spec.output.wallclock_in_csv);
  o.get("dump_buffer", spec.output.dump_buffer);
  o.get("save_checkpoint", spec.output.save_checkpoint);
  o.finish();

  r.get("seeds", spec.seeds);

  auto s = r.child("sweep");
  s.get("strategy", spec.sweep.strategy);
  s.get("g_off", spec.sweep.g_off);
  s.get("grouping", spec.sweep.grouping);
  s.get("normalizer", spec.sweep.normalizer);
  s.finish();
  r.finish();

  try {
    spec.task.validate();
    spec.policy.validate();
    spec.train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (spec.policy.vocab_size < tasks::min_vocab_size(spec.task))
    throw ConfigError("policy.vocab_size " + std::to_string(spec.policy.vocab_size) + " cannot express answers; need >= " +
                      std::to_string(tasks::min_vocab_size(spec.task)));
  if (spec.seeds.empty()) throw ConfigError("seeds: list must be non-empty");
  return spec;
}

inline RunSpec parse_run_spec_text(const std::string& text, const std::string& source = "<config>") {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = detail::line_col(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
  }
  try {
    return parse_run_spec(root);
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

inline RunSpec load_run_spec(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_run_spec_text(ss.str(), path);
}

/// Effective configuration with all defaults resolved. Feeding it back to
/// parse_run_spec reproduces the same RunSpec.
inline json to_json(const RunSpec& s) {
  json j;
  j["task"] = {{"kind", tasks::to_string(s.task.kind)},
               {"modulus", s.task.modulus},
               {"bits", s.task.bits},
               {"success_prob", s.task.success_prob},
               {"vocab_size", s.task.vocab_size},
               {"dataset_size", s.task.dataset_size},
               {"seed", s.task.seed},
               {"feature_dim", s.task.feature_dim}};
  j["policy"] = {{"vocab_size", s.policy.vocab_size},         {"max_output_len", s.policy.max_output_len},
                 {"prompt_feature_dim", s.policy.prompt_feature_dim}, {"embed_dim", s.policy.embed_dim},
                 {"hidden_dim", s.policy.hidden_dim},         {"init_scale", s.policy.init_scale}};
  const auto& c = s.train;
  j["train"] = {{"epochs", c.epochs},
                {"steps_per_epoch", c.steps_per_epoch},
                {"max_steps", c.max_steps},
                {"batch_size", c.batch_size},
                {"g_on", c.g_on},
                {"g_off", c.g_off},
                {"recency_k", c.recency_k},
                {"mu", c.mu},
                {"e_off", c.e_off},
                {"learning_rate", c.learning_rate},
                {"lr_schedule", trainer::to_string(c.lr_schedule)},
                {"optimizer", trainer::to_string(c.optimizer.kind)},
                {"adam_beta1", c.optimizer.beta1},
                {"adam_beta2", c.optimizer.beta2},
                {"adam_epsilon", c.optimizer.epsilon},
                {"temperature", c.temperature},
                {"strategy", replay::to_string(c.strategy)},
                {"replay_capacity", c.replay_capacity},
                {"normalizer", advantage::to_string(c.advantage.normalizer)},
                {"grouping", advantage::to_string(c.advantage.grouping)},
                {"clip_epsilon", c.objective.clip_epsilon},
                {"kl_beta", c.objective.kl_beta},
                {"off_weight", c.objective.off_weight},
                {"token_norm", objective::to_string(c.objective.token_norm)},
                {"effective_mode", trainer::to_string(c.effective_mode)},
                {"rollout_threads", c.rollout_threads}};
  j["output"] = {{"dir", s.output.dir},
                 {"wallclock_in_csv", s.output.wallclock_in_csv},
                 {"dump_buffer", s.output.dump_buffer},
                 {"save_checkpoint", s.output.save_checkpoint}};
  j["seeds"] = s.seeds;
  j["sweep"] = {{"strategy", s.sweep.strategy},
                {"g_off", s.sweep.g_off},
                {"grouping", s.sweep.grouping},
                {"normalizer", s.sweep.normalizer}};
  return j;
}

struct SeedOutcome {
  std::uint64_t seed = 0;
  trainer::RunSummary summary;
  double mean_step_ns = 0.0;
};

inline json summary_json(const SeedOutcome& o) {
  const auto& s = o.summary;
  return {{"seed", o.seed},
          {"steps", s.steps},
          {"effective_step_pct", s.effective_step_pct},
          {"final_train_accuracy", s.final_train_accuracy},
          {"final_mean_reward", s.final_mean_reward},
          {"total_wall_clock_ns", s.total_wall_clock_ns},
          {"timing",
           {{"sampling_ns", s.sampling_ns},
            {"scoring_ns", s.scoring_ns},
            {"update_ns", s.update_ns},
            {"mean_step_ns", o.mean_step_ns}}}};
}

/// Trains one seed and writes its per-seed artifacts into `dir`.
inline SeedOutcome run_seed(const RunSpec& spec, std::uint64_t seed, const fs::path& dir,
                            const std::vector<tasks::PromptFeatures>& dataset) {
  policy::PolicyConfig pc = spec.policy;
  pc.seed = seed;
  trainer::TrainConfig tc = spec.train;
  tc.seed = seed;
  auto result = trainer::train(tc, dataset, policy::init_policy(pc), replay::ReplayBuffer(tc.replay_capacity));

  const std::string tag = std::to_string(seed);
  {
    std::ofstream os(dir / ("metrics_" + tag + ".csv"), std::ios::binary);
    trainer::write_metrics_csv(os, result.metrics, spec.output.wallclock_in_csv);
    if (!os) throw std::runtime_error("failed writing metrics for seed " + tag);
  }
  {
    std::ofstream os(dir / ("timing_" + tag + ".csv"), std::ios::binary);
    trainer::write_timing_csv(os, result.metrics);
  }
  if (spec.output.save_checkpoint) policy::save_checkpoint((dir / ("checkpoint_" + tag + ".bin")).string(), result.params);
  if (spec.output.dump_buffer) {
    std::ofstream os(dir / ("buffer_" + tag + ".jsonl"), std::ios::binary);
    result.buffer.dump_jsonl(os);
  }

  SeedOutcome out;
  out.seed = seed;
  out.summary = result.metrics.summary;
  out.mean_step_ns = out.summary.steps
                         ? static_cast<double>(out.summary.total_wall_clock_ns) / static_cast<double>(out.summary.steps)
                         : 0.0;
  return out;
}

/// Trains every seed of `spec` into `dir`; writes dataset.jsonl and summary.json.
inline std::vector<SeedOutcome> run_all_seeds(const RunSpec& spec, const fs::path& dir, std::ostream& log) {
  fs::create_directories(dir);
  const auto dataset = tasks::generate_dataset(spec.task);
  {
    std::ofstream os(dir / "dataset.jsonl", std::ios::binary);
    tasks::dump_jsonl(os, dataset);
  }
  std::vector<SeedOutcome> outcomes;
  json runs = json::array();
  for (auto seed : spec.seeds) {
    outcomes.push_back(run_seed(spec, seed, dir, dataset));
    const auto& s = outcomes.back().summary;
    log << dir.string() << " seed " << seed << ": steps " << s.steps << ", effective " << s.effective_step_pct
        << ", final reward " << s.final_mean_reward << ", accuracy " << s.final_train_accuracy << '\n';
    runs.push_back(summary_json(outcomes.back()));
  }
  double eff = 0.0, acc = 0.0, rew = 0.0, step_ns = 0.0;
  for (const auto& o : outcomes) {
    eff += o.summary.effective_step_pct;
    acc += o.summary.final_train_accuracy;
    rew += o.summary.final_mean_reward;
    step_ns += o.mean_step_ns;
  }
  const double n = static_cast<double>(outcomes.size());
  json summary;
  summary["config"] = to_json(spec);
  summary["runs"] = runs;
  summary["mean"] = {{"effective_step_pct", eff / n},
                     {"final_train_accuracy", acc / n},
                     {"final_mean_reward", rew / n},
                     {"mean_step_ns", step_ns / n}};
  std::ofstream os(dir / "summary.json", std::ios::binary);
  os << summary.dump(2) << '\n';
  return outcomes;
}

struct CommandOptions {
  std::optional<std::string> out_dir;
  std::optional<std::vector<std::uint64_t>> seeds;
};

/// Output directory precedence: --out, then $REPO_OUT_DIR, then the config.
inline void apply_overrides(RunSpec& spec, const CommandOptions& opts) {
  if (const char* env = std::getenv(kOutDirEnv); env && *env) spec.output.dir = env;
  if (opts.out_dir) spec.output.dir = *opts.out_dir;
  if (opts.seeds) {
    if (opts.seeds->empty()) throw ConfigError("--seed: list must be non-empty");
    spec.seeds = *opts.seeds;
  }
}

inline int cmd_run(const std::string& config_path, const CommandOptions& opts, std::ostream& log, std::ostream& err) {
  try {
    RunSpec spec = load_run_spec(config_path);
    apply_overrides(spec, opts);
    run_all_seeds(spec, spec.output.dir, log);
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "run failed: " << e.what() << '\n';
    return 1;
  }
}

inline const std::vector<std::string>& sweep_axis_names() {
  static const std::vector<std::string> names{"strategy", "g_off", "grouping", "normalizer"};
  return names;
}

/// Variants along one axis as (label, spec) pairs.
inline std::vector<std::pair<std::string, RunSpec>> sweep_variants(const RunSpec& base, const std::string& axis) {
  std::vector<std::pair<std::string, RunSpec>> out;
  auto add = [&](const std::string& label, auto&& mutate) {
    RunSpec s = base;
    try {
      mutate(s);
      s.train.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("sweep." + axis + " value '" + label + "': " + e.what());
    }
    out.emplace_back(label, std::move(s));
  };
  if (axis == "strategy") {
    for (const auto& v : base.sweep.strategy)
      add(v, [&](RunSpec& s) { s.train.strategy = replay::strategy_from_string(v); });
  } else if (axis == "g_off") {
    for (auto v : base.sweep.g_off) add(std::to_string(v), [&](RunSpec& s) { s.train.g_off = v; });
  } else if (axis == "grouping") {
    for (const auto& v : base.sweep.grouping)
      add(v, [&](RunSpec& s) { s.train.advantage.grouping = advantage::grouping_from_string(v); });
  } else if (axis == "normalizer") {
    for (const auto& v : base.sweep.normalizer)
      add(v, [&](RunSpec& s) {
        s.train.advantage.normalizer = advantage::normalizer_from_string(v);
        s.train.objective.token_norm = s.train.advantage.normalizer == advantage::Normalizer::DrGrpo
                                           ? objective::TokenNorm::DrGrpoConstant
                                           : objective::TokenNorm::PerSequence;
      });
  } else {
    throw ConfigError("unknown sweep axis '" + axis + "'");
  }
  if (out.empty()) throw ConfigError("sweep." + axis + ": axis list is empty");
  return out;
}

inline constexpr const char* kSweepCsvHeader =
    "axis,variant,seed,steps,effective_step_pct,final_mean_reward,final_train_accuracy,mean_step_ns,sampling_ns,"
    "scoring_ns,update_ns";

inline int cmd_sweep(const std::string& config_path, const std::string& axis, const CommandOptions& opts,
                     std::ostream& log, std::ostream& err) {
  try {
    RunSpec spec = load_run_spec(config_path);
    apply_overrides(spec, opts);
    const auto variants = sweep_variants(spec, axis);
    const fs::path root = spec.output.dir;
    fs::create_directories(root);
    std::ofstream table(root / ("sweep_" + axis + ".csv"), std::ios::binary);
    table << kSweepCsvHeader << '\n';
    for (const auto& [label, vspec] : variants) {
      RunSpec v = vspec;
      v.output.dir = (root / (axis + "_" + label)).string();
      for (const auto& o : run_all_seeds(v, v.output.dir, log)) {
        const auto& s = o.summary;
        table << axis << ',' << label << ',' << o.seed << ',' << s.steps << ','
              << trainer::format_double(s.effective_step_pct) << ',' << trainer::format_double(s.final_mean_reward)
              << ',' << trainer::format_double(s.final_train_accuracy) << ','
              << trainer::format_double(o.mean_step_ns) << ',' << s.sampling_ns << ',' << s.scoring_ns << ','
              << s.update_ns << '\n';
      }
    }
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "sweep failed: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace repo::experiment
