#pragma once

// Training loop: per step snapshot the behavior policy, sample on-policy
// groups, optionally retrieve replayed groups, run mu optimizer iterations
// on the combined objective, then append the new samples to the buffer.

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "repo/advantage.hpp"
#include "repo/objective.hpp"
#include "repo/policy.hpp"
#include "repo/replay.hpp"
#include "repo/rollout.hpp"
#include "repo/tasks.hpp"

namespace repo::trainer {

using policy::PolicyParameters;
using tasks::PromptFeatures;

enum class OptimizerKind { Sgd, Adam };
enum class LrSchedule { Constant, Cosine };

/// AnyAdvantage: a step is effective when any advantage it uses is nonzero.
/// PerPrompt: each (step, prompt) pair is counted separately.
enum class EffectiveMode { AnyAdvantage, PerPrompt };

inline std::string to_string(OptimizerKind k) { return k == OptimizerKind::Sgd ? "sgd" : "adam"; }
inline std::string to_string(LrSchedule s) { return s == LrSchedule::Constant ? "constant" : "cosine"; }
inline std::string to_string(EffectiveMode m) { return m == EffectiveMode::AnyAdvantage ? "any" : "per_prompt"; }

inline OptimizerKind optimizer_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::Sgd;
  if (s == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + s + "'");
}
inline LrSchedule schedule_from_string(const std::string& s) {
  if (s == "constant") return LrSchedule::Constant;
  if (s == "cosine") return LrSchedule::Cosine;
  throw std::invalid_argument("unknown lr_schedule '" + s + "'");
}
inline EffectiveMode effective_mode_from_string(const std::string& s) {
  if (s == "any") return EffectiveMode::AnyAdvantage;
  if (s == "per_prompt") return EffectiveMode::PerPrompt;
  throw std::invalid_argument("unknown effective_mode '" + s + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  std::uint64_t epochs = 3;
  std::uint64_t steps_per_epoch = 0;  // 0: ceil(dataset / batch_size)
  std::uint64_t max_steps = 0;        // 0: no cap
  std::uint64_t batch_size = 8;
  std::uint64_t g_on = 8;
  std::uint64_t g_off = 8;
  std::uint64_t recency_k = 0;  // recency strategy: samples retrieved, 0: g_off
  std::uint64_t mu = 1;
  std::uint64_t e_off = 3;  // first epoch (1-based) using the replay term; epochs + 1 disables it
  double learning_rate = 1e-3;
  LrSchedule lr_schedule = LrSchedule::Constant;
  OptimizerConfig optimizer;
  double temperature = 1.0;
  replay::StrategyKind strategy = replay::StrategyKind::Recency;
  std::uint64_t replay_capacity = 0;  // per prompt, 0: unlimited
  advantage::AdvantageMode advantage;
  objective::ObjectiveConfig objective;
  EffectiveMode effective_mode = EffectiveMode::AnyAdvantage;
  std::uint64_t rollout_threads = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
    if (e_off < 1 || e_off > epochs + 1) throw std::invalid_argument("train.e_off must be in [1, epochs + 1]");
    if (mu < 1) throw std::invalid_argument("train.mu must be >= 1");
    if (g_on < 2) throw std::invalid_argument("train.g_on must be >= 2");
    if (g_off < 1) throw std::invalid_argument("train.g_off must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train.batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("train.learning_rate must be > 0");
    if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("train.temperature must be >= 0");
    if (rollout_threads < 1) throw std::invalid_argument("train.rollout_threads must be >= 1");
    objective.validate();
  }
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SGD or bias-corrected Adam. Moment state persists across calls.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& cfg, const PolicyParameters& like)
      : cfg_(cfg), m_(policy::zeros_like(like)), v_(policy::zeros_like(like)) {}

  std::uint64_t steps() const { return t_; }

  void apply_update(PolicyParameters& params, const PolicyParameters& grad, double lr) {
    std::vector<const diff::Tensor*> gs;
    grad.for_each([&](const char*, const diff::Tensor& t) { gs.push_back(&t); });
    std::vector<diff::Tensor*> ps, ms, vs;
    params.for_each([&](const char* name, diff::Tensor& t) {
      const diff::Tensor& g = *gs.at(ps.size());
      if (g.shape() != t.shape())
        throw diff::ShapeError(std::string("gradient shape mismatch for ") + name + ": " +
                               diff::shape_string(g.shape()) + " vs " + diff::shape_string(t.shape()));
      for (std::size_t i = 0; i < g.size(); ++i)
        if (!std::isfinite(g[i]))
          throw NonFiniteGradient(std::string("non-finite gradient in ") + name + "[" + std::to_string(i) +
                                  "] = " + std::to_string(g[i]) + " at optimizer step " + std::to_string(t_ + 1));
      ps.push_back(&t);
    });
    m_.for_each([&](const char*, diff::Tensor& t) { ms.push_back(&t); });
    v_.for_each([&](const char*, diff::Tensor& t) { vs.push_back(&t); });

    ++t_;
    if (cfg_.kind == OptimizerKind::Sgd) {
      for (std::size_t k = 0; k < ps.size(); ++k)
        for (std::size_t i = 0; i < ps[k]->size(); ++i) (*ps[k])[i] -= lr * (*gs[k])[i];
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < ps.size(); ++k)
      for (std::size_t i = 0; i < ps[k]->size(); ++i) {
        const double g = (*gs[k])[i];
        double& m = (*ms[k])[i];
        double& v = (*vs[k])[i];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g * g;
        (*ps[k])[i] -= lr * (m / c1) / (std::sqrt(v / c2) + cfg_.epsilon);
      }
  }

 private:
  OptimizerConfig cfg_;
  PolicyParameters m_, v_;
  std::uint64_t t_ = 0;
};

struct StepRecord {
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;  // global, 1-based
  double mean_on_reward = 0.0;
  double mean_off_reward = std::numeric_limits<double>::quiet_NaN();  // NaN when nothing was replayed
  double loss = 0.0;       // at the first inner iteration
  bool effective = false;
  std::uint64_t buffer_size = 0;  // after this step's insertion
  double clipped_fraction = 0.0;
  std::int64_t elapsed_ns = 0;

  bool replay_active = false;
  std::uint64_t batch_prompts = 0;
  std::uint64_t effective_prompts = 0;
  std::uint64_t uniform_on_groups = 0;
  std::uint64_t off_samples = 0;
  double max_abs_union_mean = 0.0;  // mixed grouping only
  std::int64_t sampling_ns = 0;
  std::int64_t scoring_ns = 0;
  std::int64_t update_ns = 0;
};

struct RunSummary {
  double effective_step_pct = 0.0;  // fraction in [0, 1]
  double final_train_accuracy = 0.0;
  double final_mean_reward = 0.0;
  std::uint64_t steps = 0;
  std::int64_t total_wall_clock_ns = 0;
  std::int64_t sampling_ns = 0;
  std::int64_t scoring_ns = 0;
  std::int64_t update_ns = 0;
};

struct RunMetrics {
  std::vector<StepRecord> steps;
  RunSummary summary;
};

using StepObserver = std::function<void(const StepRecord&, const PolicyParameters&)>;

/// Greedy-decoding accuracy over a prompt set.
inline double greedy_accuracy(const PolicyParameters& params, const std::vector<PromptFeatures>& dataset) {
  if (dataset.empty()) return 0.0;
  double hits = 0.0;
  for (const auto& p : dataset) hits += tasks::reward(p, policy::decode_greedy(params, p));
  return hits / static_cast<double>(dataset.size());
}

inline double learning_rate_at(const TrainConfig& cfg, std::uint64_t step, std::uint64_t total_steps) {
  if (cfg.lr_schedule == LrSchedule::Constant || total_steps <= 1) return cfg.learning_rate;
  const double progress = static_cast<double>(step - 1) / static_cast<double>(total_steps);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// Fixed epoch/step layout over a dataset.
class BatchSchedule {
 public:
  BatchSchedule(const TrainConfig& cfg, std::size_t dataset_size)
      : batch_size_(cfg.batch_size), seed_(cfg.seed), n_(dataset_size) {
    if (n_ == 0) throw std::invalid_argument("dataset must be non-empty");
    steps_per_epoch_ = cfg.steps_per_epoch ? cfg.steps_per_epoch : (n_ + cfg.batch_size - 1) / cfg.batch_size;
    total_ = cfg.epochs * steps_per_epoch_;
    if (cfg.max_steps) total_ = std::min(total_, cfg.max_steps);
  }

  std::uint64_t steps_per_epoch() const { return steps_per_epoch_; }
  std::uint64_t total_steps() const { return total_; }

  /// Shuffled order for a 1-based epoch.
  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const {
    std::vector<std::size_t> order(n_);
    for (std::size_t i = 0; i < n_; ++i) order[i] = i;
    RngStream rng(seed_, {0x65706f6368ULL, epoch});
    for (std::size_t i = n_; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    return order;
  }

  /// Dataset indices of step `step_in_epoch` (0-based); wraps around the order.
  std::vector<std::size_t> batch(const std::vector<std::size_t>& order, std::uint64_t step_in_epoch) const {
    std::vector<std::size_t> out;
    const std::size_t b = std::min<std::size_t>(batch_size_, n_);
    for (std::size_t k = 0; k < b; ++k) out.push_back(order[(step_in_epoch * b + k) % n_]);
    return out;
  }

 private:
  std::uint64_t batch_size_;
  std::uint64_t seed_;
  std::size_t n_;
  std::uint64_t steps_per_epoch_ = 0;
  std::uint64_t total_ = 0;
};

namespace detail {

using Clock = std::chrono::steady_clock;
inline std::int64_t ns_since(Clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now() - t0).count();
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline void summarize(RunMetrics& m, const TrainConfig& cfg, const PolicyParameters& params,
                      const std::vector<PromptFeatures>& dataset) {
  auto& s = m.summary;
  s.steps = m.steps.size();
  std::uint64_t eff = 0, eff_prompts = 0, prompts = 0;
  for (const auto& r : m.steps) {
    eff += r.effective ? 1 : 0;
    eff_prompts += r.effective_prompts;
    prompts += r.batch_prompts;
    s.total_wall_clock_ns += r.elapsed_ns;
    s.sampling_ns += r.sampling_ns;
    s.scoring_ns += r.scoring_ns;
    s.update_ns += r.update_ns;
  }
  if (cfg.effective_mode == EffectiveMode::AnyAdvantage)
    s.effective_step_pct = s.steps ? static_cast<double>(eff) / static_cast<double>(s.steps) : 0.0;
  else
    s.effective_step_pct = prompts ? static_cast<double>(eff_prompts) / static_cast<double>(prompts) : 0.0;

  const std::size_t window = std::max<std::size_t>(1, m.steps.size() / 10);
  double acc = 0.0;
  std::size_t cnt = 0;
  for (std::size_t i = m.steps.size() - std::min(window, m.steps.size()); i < m.steps.size(); ++i, ++cnt)
    acc += m.steps[i].mean_on_reward;
  s.final_mean_reward = cnt ? acc / static_cast<double>(cnt) : 0.0;
  s.final_train_accuracy = greedy_accuracy(params, dataset);
}

}  // namespace detail

class Trainer {
 public:
  Trainer(TrainConfig cfg, std::vector<PromptFeatures> dataset, PolicyParameters init,
          replay::ReplayBuffer buffer = replay::ReplayBuffer{})
      : cfg_(std::move(cfg)),
        dataset_(std::move(dataset)),
        params_(std::move(init)),
        reference_(params_),
        buffer_(std::move(buffer)),
        optimizer_(cfg_.optimizer, params_),
        schedule_(cfg_, dataset_.size()) {
    cfg_.validate();
    if (buffer_.size() == 0 && cfg_.replay_capacity) buffer_ = replay::ReplayBuffer(cfg_.replay_capacity);
  }

  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainConfig& config() const { return cfg_; }
  const PolicyParameters& params() const { return params_; }
  const replay::ReplayBuffer& buffer() const { return buffer_; }
  const BatchSchedule& schedule() const { return schedule_; }
  const std::vector<PromptFeatures>& dataset() const { return dataset_; }

  /// One full step over the given dataset indices.
  StepRecord train_step(std::uint64_t epoch, std::uint64_t global_step, const std::vector<std::size_t>& batch) {
    const auto t_start = detail::Clock::now();
    StepRecord rec;
    rec.epoch = epoch;
    rec.step = global_step;
    rec.batch_prompts = batch.size();
    rec.replay_active = epoch >= cfg_.e_off;

    std::vector<const PromptFeatures*> prompts;
    for (auto i : batch) prompts.push_back(&dataset_.at(i));

    // Behavior snapshot and on-policy rollouts.
    const PolicyParameters old = params_;
    auto t0 = detail::Clock::now();
    const auto on_groups = rollout::sample_groups(old, prompts, cfg_.g_on, cfg_.temperature, global_step, cfg_.seed,
                                                  cfg_.rollout_threads);
    rec.sampling_ns = detail::ns_since(t0);

    // Rewards, replay retrieval and advantages.
    t0 = detail::Clock::now();
    std::vector<rollout::Group> off_groups(prompts.size());
    std::vector<advantage::AdvantageSet> on_adv(prompts.size());
    std::vector<double> on_rewards, off_rewards;
    const replay::ReplayStrategy strategy{cfg_.strategy, derive_seed(cfg_.seed, {0x737472ULL, global_step})};
    for (std::size_t q = 0; q < prompts.size(); ++q) {
      const auto& on = on_groups[q];
      for (double r : on.rewards()) on_rewards.push_back(r);
      if (advantage::group_stats(on.rewards()).std < advantage::kZeroStdThreshold) ++rec.uniform_on_groups;
      bool any = false;
      if (rec.replay_active) {
        off_groups[q] = buffer_.retrieve(prompts[q]->prompt_id, strategy, retrieve_count());
        for (const auto& s : off_groups[q].samples) {
          const double recomputed = tasks::reward(*prompts[q], s.tokens);
          if (recomputed != s.reward)
            throw replay::IntegrityError("replayed sample of prompt " + std::to_string(s.prompt_id) + " born at step " +
                                         std::to_string(s.born_step) + " has stored reward " + std::to_string(s.reward) +
                                         " but rescores to " + std::to_string(recomputed));
          off_rewards.push_back(s.reward);
        }
        rec.off_samples += off_groups[q].size();
        const auto [a_on, a_off] = advantage::assign_advantages(on, off_groups[q], cfg_.advantage);
        on_adv[q] = a_on;
        any = a_on.any_nonzero() || a_off.any_nonzero();
        if (cfg_.advantage.grouping == advantage::Grouping::Mixed && !a_off.empty()) {
          double sum = 0.0;
          for (double v : a_on.values) sum += v;
          for (double v : a_off.values) sum += v;
          const double mean = sum / static_cast<double>(a_on.size() + a_off.size());
          rec.max_abs_union_mean = std::max(rec.max_abs_union_mean, std::abs(mean));
        }
      } else {
        on_adv[q] = advantage::group_advantages(on.rewards(), cfg_.advantage.normalizer);
        any = on_adv[q].any_nonzero();
      }
      if (any) ++rec.effective_prompts;
    }
    rec.effective = rec.effective_prompts > 0;
    rec.mean_on_reward = detail::mean_of(on_rewards);
    rec.mean_off_reward = detail::mean_of(off_rewards);
    rec.scoring_ns = detail::ns_since(t0);

    // mu optimizer iterations against the fixed snapshot.
    t0 = detail::Clock::now();
    const double lr = learning_rate_at(cfg_, global_step, schedule_.total_steps());
    const double inv_b = 1.0 / static_cast<double>(prompts.size());
    for (std::uint64_t it = 0; it < cfg_.mu; ++it) {
      PolicyParameters grad = policy::zeros_like(params_);
      double loss = 0.0;
      std::size_t tokens = 0, clipped = 0;
      for (std::size_t q = 0; q < prompts.size(); ++q) {
        const objective::SurrogateResult r =
            rec.replay_active
                ? objective::repo_objective(params_, old, *prompts[q], on_groups[q], off_groups[q], cfg_.advantage,
                                            cfg_.objective)
                : objective::grpo_objective(params_, old, reference_, *prompts[q], on_groups[q], on_adv[q],
                                            cfg_.objective);
        policy::axpy(grad, inv_b, r.gradient);
        loss += inv_b * r.loss;
        tokens += r.token_count;
        clipped += r.clipped_count;
      }
      if (it == 0) {
        rec.loss = loss;
        rec.clipped_fraction = tokens ? static_cast<double>(clipped) / static_cast<double>(tokens) : 0.0;
      }
      optimizer_.apply_update(params_, grad, lr);
    }
    rec.update_ns = detail::ns_since(t0);

    for (const auto& g : on_groups) buffer_.insert(g);
    rec.buffer_size = buffer_.size();
    rec.elapsed_ns = detail::ns_since(t_start);
    return rec;
  }

  RunMetrics train(const StepObserver& observer = {}) {
    RunMetrics m;
    std::uint64_t global = 0;
    for (std::uint64_t epoch = 1; epoch <= cfg_.epochs && global < schedule_.total_steps(); ++epoch) {
      const auto order = schedule_.epoch_order(epoch);
      for (std::uint64_t s = 0; s < schedule_.steps_per_epoch() && global < schedule_.total_steps(); ++s) {
        ++global;
        m.steps.push_back(train_step(epoch, global, schedule_.batch(order, s)));
        if (observer) observer(m.steps.back(), params_);
      }
    }
    detail::summarize(m, cfg_, params_, dataset_);
    return m;
  }

 private:
  std::uint64_t retrieve_count() const {
    return cfg_.strategy == replay::StrategyKind::Recency && cfg_.recency_k ? cfg_.recency_k : cfg_.g_off;
  }

  TrainConfig cfg_;
  std::vector<PromptFeatures> dataset_;
  PolicyParameters params_;
  PolicyParameters reference_;
  replay::ReplayBuffer buffer_;
  Optimizer optimizer_;
  BatchSchedule schedule_;
};

struct TrainResult {
  PolicyParameters params;
  RunMetrics metrics;
  replay::ReplayBuffer buffer;
};

inline TrainResult train(const TrainConfig& cfg, const std::vector<PromptFeatures>& dataset,
                         const PolicyParameters& init, const replay::ReplayBuffer& buffer = replay::ReplayBuffer{},
                         const StepObserver& observer = {}) {
  Trainer t(cfg, dataset, init, buffer);
  RunMetrics m = t.train(observer);
  return {t.params(), std::move(m), t.buffer()};
}

/// Plain GRPO with no replay buffer at all: the baseline the gated trainer
/// must reduce to when the replay epoch is never reached.
inline TrainResult train_grpo(const TrainConfig& cfg, const std::vector<PromptFeatures>& dataset,
                              const PolicyParameters& init, const StepObserver& observer = {}) {
  cfg.validate();
  PolicyParameters params = init;
  const PolicyParameters reference = init;
  Optimizer opt(cfg.optimizer, params);
  BatchSchedule sched(cfg, dataset.size());
  RunMetrics m;
  std::uint64_t global = 0;
  for (std::uint64_t epoch = 1; epoch <= cfg.epochs && global < sched.total_steps(); ++epoch) {
    const auto order = sched.epoch_order(epoch);
    for (std::uint64_t s = 0; s < sched.steps_per_epoch() && global < sched.total_steps(); ++s) {
      ++global;
      StepRecord rec;
      rec.epoch = epoch;
      rec.step = global;
      const auto idx = sched.batch(order, s);
      rec.batch_prompts = idx.size();
      const PolicyParameters old = params;
      std::vector<rollout::Group> groups;
      std::vector<advantage::AdvantageSet> adv;
      double reward_sum = 0.0;
      for (auto i : idx) {
        groups.push_back(rollout::sample_group(old, dataset[i], cfg.g_on, cfg.temperature, global, cfg.seed));
        adv.push_back(advantage::group_advantages(groups.back().rewards(), cfg.advantage.normalizer));
        if (adv.back().any_nonzero()) ++rec.effective_prompts;
        for (double r : groups.back().rewards()) reward_sum += r;
      }
      rec.effective = rec.effective_prompts > 0;
      rec.mean_on_reward = reward_sum / static_cast<double>(idx.size() * cfg.g_on);
      const double inv_b = 1.0 / static_cast<double>(idx.size());
      for (std::uint64_t it = 0; it < cfg.mu; ++it) {
        PolicyParameters grad = policy::zeros_like(params);
        double loss = 0.0;
        for (std::size_t q = 0; q < idx.size(); ++q) {
          const auto r = objective::grpo_objective(params, old, reference, dataset[idx[q]], groups[q], adv[q],
                                                   cfg.objective);
          policy::axpy(grad, inv_b, r.gradient);
          loss += inv_b * r.loss;
        }
        if (it == 0) rec.loss = loss;
        opt.apply_update(params, grad, learning_rate_at(cfg, global, sched.total_steps()));
      }
      m.steps.push_back(rec);
      if (observer) observer(rec, params);
    }
  }
  detail::summarize(m, cfg, params, dataset);
  return {params, std::move(m), replay::ReplayBuffer{}};
}

// Metrics CSV

inline constexpr const char* kMetricsCsvHeader =
    "epoch,step,mean_on_reward,mean_off_reward,loss,effective,buffer_size,clipped_fraction,elapsed_ns";

/// Shortest round-trip decimal form; "nan" for NaN.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// With `wallclock` false the elapsed_ns column is written as 0 so that
/// reruns produce identical bytes; timings then live in the summary.
inline void write_metrics_csv(std::ostream& os, const RunMetrics& m, bool wallclock) {
  os << kMetricsCsvHeader << '\n';
  for (const auto& r : m.steps) {
    os << r.epoch << ',' << r.step << ',' << format_double(r.mean_on_reward) << ','
       << format_double(r.mean_off_reward) << ',' << format_double(r.loss) << ',' << (r.effective ? 1 : 0) << ','
       << r.buffer_size << ',' << format_double(r.clipped_fraction) << ',' << (wallclock ? r.elapsed_ns : 0) << '\n';
  }
}

/// Per-step timing split, always wall-clock.
inline void write_timing_csv(std::ostream& os, const RunMetrics& m) {
  os << "step,sampling_ns,scoring_ns,update_ns,elapsed_ns\n";
  for (const auto& r : m.steps)
    os << r.step << ',' << r.sampling_ns << ',' << r.scoring_ns << ',' << r.update_ns << ',' << r.elapsed_ns << '\n';
}

}  // namespace repo::trainer
