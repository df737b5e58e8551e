// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Oracles here are written independently of the library internals.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "repo/experiment.hpp"
#include "test_support.hpp"

using namespace repo;
using policy::PolicyParameters;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

const fs::path kWork = fs::current_path() / "acceptance_out";

fs::path config(const char* name) { return fs::path(REPO_CONFIG_DIR) / name; }

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + REPO_CLI_PATH + "\" " + args + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quoted(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

bool near_clip_boundary(const objective::SurrogateResult& r, double eps, double margin) {
  for (const auto& row : r.ratios)
    for (double x : row)
      if (std::abs(x - (1.0 - eps)) < margin || std::abs(x - (1.0 + eps)) < margin) return true;
  return false;
}

/// REINFORCE oracle: (1/G) sum_i (1/|o_i|) sum_t A_i grad log pi(o_i,t).
PolicyParameters reinforce_gradient(const PolicyParameters& p, const tasks::PromptFeatures& q, const rollout::Group& g,
                                    const std::vector<double>& adv) {
  PolicyParameters out = policy::zeros_like(p);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto& tok = g.samples[i].tokens;
    for (std::size_t t = 0; t < tok.size(); ++t)
      policy::axpy(out, adv[i] / (static_cast<double>(g.size()) * static_cast<double>(tok.size())),
                   fixtures::token_score_gradient(p, q, tok, t));
  }
  return out;
}

// 1. Finite-difference gradient checks.
Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const double h = 1e-5, tol = 1e-4;
  std::size_t graphs = 0, logprob = 0, losses = 0, failures = 0;
  double worst = 0.0;
  auto record = [&](const diff::GradientCheckReport& r) {
    worst = std::max(worst, r.worst());
    if (!r.passed) ++failures;
  };

  for (std::uint64_t seed = 0; seed < 100; ++seed, ++graphs) {
    const auto first = fixtures::kForcedFirstOps[seed % std::size(fixtures::kForcedFirstOps)];
    const auto rg = fixtures::random_graph(1000 + seed, 3 + static_cast<int>(seed % 3), first);
    record(diff::check_gradient(rg.graph, rg.bindings, rg.wrt, h, tol));
  }

  for (std::uint64_t seed = 0; seed < 50; ++seed, ++logprob) {
    const auto cfg = fixtures::small_policy_config(seed, seed % 2);
    const auto p = policy::init_policy(cfg);
    RngStream rng(seed, {0x6c70ULL});
    const auto q = fixtures::random_prompt(seed, cfg.prompt_feature_dim, rng);
    const auto out = fixtures::random_tokens(cfg, rng);
    std::vector<double> w(out.size());
    for (auto& v : w) v = rng.uniform(-1, 1);
    const auto g = policy::build_log_prob_graph(cfg, q, out, true);
    auto b = p.bindings();
    b.emplace(policy::kTokenWeights, diff::Tensor::matrix(1, w.size(), w));
    record(diff::check_gradient(g.graph, b, p.names(), h, tol));
  }

  // Full surrogate: clipped on-policy term, KL penalty and replayed term.
  for (std::uint64_t seed = 0; losses < 50 && seed < 500; ++seed) {
    const auto theta = policy::init_policy(fixtures::small_policy_config(seed, seed % 2));
    const auto old = fixtures::perturbed(theta, 0.05, seed + 1);
    const auto behind = fixtures::perturbed(theta, 0.08, seed + 2);
    RngStream rng(seed, {0x6c6f7373ULL});
    const auto q = fixtures::random_prompt(seed, theta.config.prompt_feature_dim, rng);
    const auto on = rollout::sample_group(old, q, 3, 1.0, 1, seed);
    auto off = rollout::sample_group(behind, q, 3, 1.0, 0, seed);
    off.origin = rollout::Origin::OffPolicy;
    advantage::AdvantageSet a_on, a_off;
    for (int i = 0; i < 3; ++i) {
      a_on.values.push_back(rng.uniform(-1.5, 1.5));
      a_off.values.push_back(rng.uniform(-1.5, 1.5));
    }
    objective::ObjectiveConfig cfg;
    cfg.kl_beta = seed % 2 ? 0.04 : 0.0;
    cfg.off_weight = seed % 3 ? 1.0 : 0.5;
    if (seed % 4 == 3) cfg.token_norm = objective::TokenNorm::DrGrpoConstant;
    auto eval = [&](const PolicyParameters& live) {
      auto r = objective::grpo_objective(live, old, behind, q, on, a_on, cfg);
      r += objective::off_policy_objective(live, q, off, a_off, cfg);
      return r;
    };
    // Central differences straddling a clip kink are not a gradient test.
    if (near_clip_boundary(eval(theta), cfg.clip_epsilon, 1e-3)) continue;
    ++losses;
    record(diff::check_gradient_fn([&](const diff::Bindings& b) { return eval(fixtures::params_from(theta, b)).loss; },
                                   [&](const diff::Bindings& b) {
                                     return fixtures::gradient_map(eval(fixtures::params_from(theta, b)).gradient);
                                   },
                                   theta.bindings(), theta.names(), h, tol));
  }

  const double secs = seconds_since(t0);
  const std::size_t total = graphs + logprob + losses;
  return {failures == 0 && total >= 100 && losses == 50 && secs < 60.0,
          std::to_string(total) + " cases (" + std::to_string(graphs) + " graphs, " + std::to_string(logprob) +
              " policy log-probs, " + std::to_string(losses) + " surrogate losses), " + std::to_string(failures) +
              " failures, max rel err " + fmt(worst, 3) + ", " + fmt(secs, 3) + " s"};
}

// 2. Ratios and gradient right after the snapshot sync.
Outcome ratio_identity_at_sync() {
  double worst_ratio = 0.0, worst_grad = 0.0;
  std::size_t cases = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed, ++cases) {
    // A policy that has already moved away from initialization.
    const auto theta = fixtures::perturbed(policy::init_policy(fixtures::small_policy_config(seed, seed % 2)), 0.3, seed);
    const PolicyParameters old = theta;  // theta_old <- theta
    RngStream rng(seed, {0x73796e63ULL});
    const auto q = fixtures::random_prompt(seed, theta.config.prompt_feature_dim, rng);
    const auto g = rollout::sample_group(old, q, 5, 1.0, 1, seed);
    advantage::AdvantageSet adv;
    for (std::size_t i = 0; i < g.size(); ++i) adv.values.push_back(rng.uniform(-2, 2));
    const auto res = objective::on_policy_objective(theta, old, q, g, adv, objective::ObjectiveConfig{});
    for (const auto& row : res.ratios)
      for (double r : row) worst_ratio = std::max(worst_ratio, std::abs(r - 1.0));
    PolicyParameters grad_j = policy::zeros_like(theta);
    policy::axpy(grad_j, -1.0, res.gradient);
    worst_grad = std::max(worst_grad, fixtures::max_abs_diff(grad_j, reinforce_gradient(theta, q, g, adv.values)));
  }
  return {worst_ratio <= 1e-12 && worst_grad <= 1e-8,
          std::to_string(cases) + " groups, max |ratio - 1| " + fmt(worst_ratio, 3) + ", max gradient deviation " +
              fmt(worst_grad, 3)};
}

// 3. Per-token off-policy gradient is the ratio times the on-policy one.
Outcome off_on_gradient_ratio() {
  double worst = 0.0;
  std::size_t cases = 0, tokens = 0, clipped = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed, ++cases) {
    const auto theta = policy::init_policy(fixtures::small_policy_config(seed, seed % 2));
    const auto theta_off = fixtures::perturbed(theta, 0.03, seed + 7);
    RngStream rng(seed, {0x726174ULL});
    const auto q = fixtures::random_prompt(seed, theta.config.prompt_feature_dim, rng);
    auto off = rollout::sample_group(theta_off, q, 1, 1.0, 1, seed);
    off.origin = rollout::Origin::OffPolicy;
    rollout::Group on = off;
    on.origin = rollout::Origin::OnPolicy;
    const advantage::AdvantageSet adv{{rng.uniform(0.2, 1.5) * (seed % 3 ? 1.0 : -1.0)}};
    const objective::ObjectiveConfig cfg;
    // theta == theta_old on the on-policy side.
    const auto r_on = objective::on_policy_objective(theta, theta, q, on, adv, cfg);
    const auto r_off = objective::off_policy_objective(theta, q, off, adv, cfg);
    const auto& tok = off.samples[0].tokens;
    const auto g_on = objective::per_token_gradients(theta, q, tok, r_on.token_weights[0]);
    const auto g_off = objective::per_token_gradients(theta, q, tok, r_off.token_weights[0]);
    for (std::size_t t = 0; t < tok.size(); ++t, ++tokens) {
      // Independent ratio: live over stored behavior probability.
      const double ratio = std::exp(policy::sequence_log_probs(theta, q, tok).values[t] -
                                    off.samples[0].behavior_log_probs.values[t]);
      if (objective::clip_active(ratio, adv.values[0], cfg.clip_epsilon)) ++clipped;
      PolicyParameters scaled = policy::zeros_like(theta);
      policy::axpy(scaled, ratio, g_on[t]);
      worst = std::max(worst, fixtures::max_abs_diff(g_off[t], scaled));
    }
  }
  return {worst <= 1e-8 && cases >= 50 && clipped == 0,
          std::to_string(cases) + " cases, " + std::to_string(tokens) + " tokens, " + std::to_string(clipped) +
              " clipped, max |g_off - r g_on| " + fmt(worst, 3)};
}

// 4. Advantage moments; uniform rewards give zero advantages and zero gradient.
Outcome advantage_properties() {
  double worst_mean = 0.0, worst_std = 0.0;
  std::size_t checked = 0;
  RngStream rng(44);
  auto moments = [&](const std::vector<double>& rewards, const std::vector<double>& adv) {
    if (pop_std(rewards) <= 1e-8) return;
    ++checked;
    worst_mean = std::max(worst_mean, std::abs(mean(adv)));
    worst_std = std::max(worst_std, std::abs(pop_std(adv) - 1.0));
  };
  auto draw = [&](std::size_t n) {
    std::vector<double> r(n);
    const bool binary = rng.below(2);
    for (auto& x : r) x = binary ? static_cast<double>(rng.below(2)) : rng.uniform(-3, 3);
    return r;
  };
  for (int i = 0; i < 2000; ++i) {
    const auto on = draw(2 + rng.below(15)), off = draw(rng.below(9));
    moments(on, advantage::group_advantages(on, advantage::Normalizer::Grpo).values);
    const auto [s_on, s_off] = advantage::assign_advantages(on, off, {advantage::Normalizer::Grpo, advantage::Grouping::Split});
    moments(on, s_on.values);
    if (off.size() >= 2) moments(off, s_off.values);
    const auto [m_on, m_off] = advantage::assign_advantages(on, off, {advantage::Normalizer::Grpo, advantage::Grouping::Mixed});
    std::vector<double> union_r = on, union_a = m_on.values;
    union_r.insert(union_r.end(), off.begin(), off.end());
    union_a.insert(union_a.end(), m_off.values.begin(), m_off.values.end());
    moments(union_r, union_a);
  }

  std::size_t uniform_cases = 0, nonzero_adv = 0, nonzero_grad = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed, ++uniform_cases) {
    const double value = seed % 3 == 0 ? 0.0 : seed % 3 == 1 ? 1.0 : 0.37;
    const auto theta = policy::init_policy(fixtures::small_policy_config(seed, seed % 2));
    const auto live = fixtures::perturbed(theta, 0.1, seed + 3);
    RngStream r2(seed, {0x756e69ULL});
    const auto q = fixtures::random_prompt(seed, theta.config.prompt_feature_dim, r2);
    auto on = rollout::sample_group(theta, q, 4, 1.0, 2, seed);
    auto off = rollout::sample_group(fixtures::perturbed(theta, 0.1, seed + 4), q, 3, 1.0, 1, seed);
    off.origin = rollout::Origin::OffPolicy;
    for (auto& s : on.samples) s.reward = value;
    for (auto& s : off.samples) s.reward = value;
    const auto adv = advantage::group_advantages(on.rewards(), advantage::Normalizer::Grpo);
    for (double a : adv.values) nonzero_adv += a != 0.0;
    const objective::ObjectiveConfig cfg;
    if (!fixtures::all_zero(objective::on_policy_objective(live, theta, q, on, adv, cfg).gradient)) ++nonzero_grad;
    for (auto grouping : {advantage::Grouping::Split, advantage::Grouping::Mixed}) {
      const auto r = objective::repo_objective(live, theta, q, on, off, {advantage::Normalizer::Grpo, grouping}, cfg);
      if (!fixtures::all_zero(r.gradient)) ++nonzero_grad;
    }
  }
  return {worst_mean <= 1e-9 && worst_std <= 1e-9 && nonzero_adv == 0 && nonzero_grad == 0,
          std::to_string(checked) + " groups, max |mean| " + fmt(worst_mean, 3) + ", max |std - 1| " + fmt(worst_std, 3) +
              "; " + std::to_string(uniform_cases) + " uniform cases, " + std::to_string(nonzero_adv) +
              " nonzero advantages, " + std::to_string(nonzero_grad) + " nonzero gradients"};
}

// 5. Replay selections against exhaustive enumeration.
Outcome replay_oracle() {
  const auto t0 = Clock::now();
  std::size_t cases = 0, mismatches = 0;
  std::string first_error;
  const std::size_t per_step[] = {1, 2, 3};
  for (std::size_t n = 1; n <= 12; ++n)
    for (std::size_t span : per_step)
      for (std::uint64_t pattern = 0; pattern < (std::uint64_t{1} << n); ++pattern) {
        std::vector<rollout::Sample> stored;
        for (std::size_t i = 0; i < n; ++i)
          stored.push_back(fixtures::make_sample(0, static_cast<double>(pattern >> i & 1U), i / span + 1, i));
        const auto buf = fixtures::buffer_of(stored);
        for (auto kind : {replay::StrategyKind::FullScope, replay::StrategyKind::Recency,
                          replay::StrategyKind::RewardOriented, replay::StrategyKind::VarianceDriven})
          for (std::size_t k = 1; k <= 6; ++k) {
            ++cases;
            const auto err = fixtures::check_retrieval(stored, buf, kind, k);
            if (!err.empty()) {
              if (mismatches++ == 0)
                first_error = "; first: n=" + std::to_string(n) + " pattern=" + std::to_string(pattern) +
                              " k=" + std::to_string(k) + " " + err;
            }
          }
      }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 120.0,
          std::to_string(cases) + " selections, " + std::to_string(mismatches) + " mismatches, " + fmt(secs, 3) + " s" +
              first_error};
}

// 6. Closed replay gate reduces to plain GRPO bit for bit.
Outcome grpo_reduction() {
  tasks::TaskSpec spec;
  spec.modulus = 5;
  spec.dataset_size = 12;
  spec.seed = 6;
  const auto data = tasks::generate_dataset(spec);
  policy::PolicyConfig pc;
  pc.vocab_size = tasks::min_vocab_size(spec);
  pc.max_output_len = 2;
  pc.prompt_feature_dim = tasks::feature_dim(spec);
  pc.embed_dim = 6;
  pc.hidden_dim = 6;
  pc.seed = 6;
  trainer::TrainConfig cfg;
  cfg.epochs = 40;
  cfg.max_steps = 100;
  cfg.batch_size = 4;
  cfg.g_on = 4;
  cfg.g_off = 4;
  cfg.mu = 2;
  cfg.e_off = cfg.epochs + 1;
  cfg.objective.kl_beta = 0.0;
  cfg.learning_rate = 0.05;
  cfg.optimizer.kind = trainer::OptimizerKind::Adam;
  cfg.strategy = replay::StrategyKind::Recency;
  cfg.seed = 6;
  const auto init = policy::init_policy(pc);

  std::vector<PolicyParameters> gated, plain;
  trainer::train(cfg, data, init, replay::ReplayBuffer{},
                 [&](const trainer::StepRecord&, const PolicyParameters& p) { gated.push_back(p); });
  trainer::train_grpo(cfg, data, init, [&](const trainer::StepRecord&, const PolicyParameters& p) { plain.push_back(p); });
  std::size_t identical = 0;
  for (std::size_t i = 0; i < std::min(gated.size(), plain.size()); ++i) {
    if (!(gated[i] == plain[i])) break;
    ++identical;
  }
  const bool moved = !gated.empty() && !(gated.back() == init);
  return {gated.size() == 100 && plain.size() == 100 && identical == 100 && moved,
          std::to_string(identical) + " of " + std::to_string(gated.size()) + " steps bit-identical"};
}

struct Pair {
  trainer::TrainResult grpo, repo;
};

/// Trains one seed of `spec` twice: as configured and with the replay gate closed.
Pair train_both(const experiment::RunSpec& spec, std::uint64_t seed) {
  const auto data = tasks::generate_dataset(spec.task);
  policy::PolicyConfig pc = spec.policy;
  pc.seed = seed;
  trainer::TrainConfig cfg = spec.train;
  cfg.seed = seed;
  const auto init = policy::init_policy(pc);
  Pair out;
  out.repo = trainer::train(cfg, data, init);
  cfg.e_off = cfg.epochs + 1;
  out.grpo = trainer::train(cfg, data, init);
  return out;
}

// 7. Replay raises the share of effective steps on a hard task.
Outcome effective_step_direction() {
  const auto t0 = Clock::now();
  const auto spec = experiment::load_run_spec(config("effective_steps.json").string());
  std::size_t wins = 0;
  bool hard_enough = true;
  std::vector<double> grpo_pct, repo_pct, uniform_share;
  for (auto seed : spec.seeds) {
    const auto p = train_both(spec, seed);
    double uniform = 0.0, groups = 0.0;
    for (const auto& r : p.grpo.metrics.steps) {
      uniform += static_cast<double>(r.uniform_on_groups);
      groups += static_cast<double>(r.batch_prompts);
    }
    uniform_share.push_back(uniform / groups);
    hard_enough = hard_enough && uniform / groups >= 0.5 && p.grpo.metrics.steps.size() == 200;
    grpo_pct.push_back(p.grpo.metrics.summary.effective_step_pct);
    repo_pct.push_back(p.repo.metrics.summary.effective_step_pct);
    if (repo_pct.back() > grpo_pct.back()) ++wins;
  }
  const double secs = seconds_since(t0);
  std::string per_seed;
  for (std::size_t i = 0; i < grpo_pct.size(); ++i)
    per_seed += (i ? ", " : "") + fmt(100 * grpo_pct[i], 3) + "->" + fmt(100 * repo_pct[i], 3);
  return {wins >= 4 && hard_enough && secs < 300.0,
          "RePO ahead on " + std::to_string(wins) + "/" + std::to_string(spec.seeds.size()) + " seeds; effective % " +
              per_seed + "; uniform on-policy share " + fmt(100 * mean(uniform_share), 3) + "%, min " +
              fmt(100 * *std::min_element(uniform_share.begin(), uniform_share.end()), 3) + "%; " + fmt(secs, 3) + " s"};
}

// 8. Both methods learn modular addition; replay does not hurt.
Outcome end_to_end_learning() {
  const auto t0 = Clock::now();
  const auto spec = experiment::load_run_spec(config("learning.json").string());
  std::size_t grpo_ok = 0, repo_ok = 0;
  std::vector<double> grpo_final, repo_final, start;
  for (auto seed : spec.seeds) {
    const auto p = train_both(spec, seed);
    grpo_final.push_back(p.grpo.metrics.summary.final_mean_reward);
    repo_final.push_back(p.repo.metrics.summary.final_mean_reward);
    double first = 0.0;
    for (std::size_t i = 0; i < 10; ++i) first += p.grpo.metrics.steps[i].mean_on_reward / 10.0;
    start.push_back(first);
    grpo_ok += grpo_final.back() >= 0.9 && p.grpo.metrics.steps.size() <= 500;
    repo_ok += repo_final.back() >= 0.9 && p.repo.metrics.steps.size() <= 500;
  }
  const double secs = seconds_since(t0);
  const double chance = 1.0 / static_cast<double>(spec.policy.vocab_size);
  const bool near_chance = mean(start) < 0.3;
  return {grpo_ok >= 4 && repo_ok >= 4 && mean(repo_final) >= mean(grpo_final) - 0.02 && near_chance && secs < 600.0,
          "reward " + fmt(mean(start), 3) + " (chance " + fmt(chance, 3) + ") -> GRPO " + fmt(mean(grpo_final)) +
              ", RePO " + fmt(mean(repo_final)) + "; >= 0.9 on GRPO " + std::to_string(grpo_ok) + ", RePO " +
              std::to_string(repo_ok) + " of " + std::to_string(spec.seeds.size()) + " seeds; " + fmt(secs, 3) + " s"};
}

// 9. Split and mixed grouping both run under the sweep command.
Outcome split_vs_mixed() {
  const auto dir = kWork / "grouping";
  fs::remove_all(dir);
  const int rc = run_cli("sweep " + quoted(config("grouping_sweep.json")) + " --axis grouping --out " + quoted(dir));
  const auto spec = experiment::load_run_spec(config("grouping_sweep.json").string());
  bool files = rc == 0;
  for (const char* mode : {"split", "mixed"})
    for (auto seed : spec.seeds)
      files = files && fs::exists(dir / (std::string("grouping_") + mode) / ("metrics_" + std::to_string(seed) + ".csv"));
  files = files && fs::exists(dir / "sweep_grouping.csv");

  // Union advantages of every mixed-mode step, recomputed from the groups the step used.
  double worst = 0.0;
  std::size_t steps = 0;
  std::map<std::string, double> reward;
  for (const auto& [label, v] : experiment::sweep_variants(spec, "grouping")) {
    for (auto seed : v.seeds) {
      policy::PolicyConfig pc = v.policy;
      pc.seed = seed;
      trainer::TrainConfig cfg = v.train;
      cfg.seed = seed;
      const auto r = trainer::train(cfg, tasks::generate_dataset(v.task), policy::init_policy(pc));
      reward[label] += r.metrics.summary.final_mean_reward / static_cast<double>(v.seeds.size());
      if (label != "mixed") continue;
      for (const auto& rec : r.metrics.steps)
        if (rec.replay_active && rec.off_samples > 0) {
          ++steps;
          worst = std::max(worst, rec.max_abs_union_mean);
        }
    }
  }
  RngStream rng(9);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> on(2 + rng.below(8)), off(1 + rng.below(8));
    for (auto& x : on) x = static_cast<double>(rng.below(2));
    for (auto& x : off) x = static_cast<double>(rng.below(2));
    const auto [a, b] = advantage::assign_advantages(on, off, {advantage::Normalizer::Grpo, advantage::Grouping::Mixed});
    std::vector<double> u = a.values;
    u.insert(u.end(), b.values.begin(), b.values.end());
    worst = std::max(worst, std::abs(mean(u)));
  }
  return {files && steps > 0 && worst <= 1e-9,
          "sweep rc " + std::to_string(rc) + ", " + std::to_string(steps) + " mixed steps with replay, max |union mean| " +
              fmt(worst, 3) + "; final reward split " + fmt(reward["split"]) + ", mixed " + fmt(reward["mixed"]) +
              " (reported)"};
}

json read_summary(const fs::path& dir) { return json::parse(slurp(dir / "summary.json")); }

// 10. Timing split and replay overhead.
Outcome cost_accounting() {
  const auto base = kWork / "cost";
  fs::remove_all(base);
  fs::create_directories(base);
  json cfg = json::parse(slurp(config("cost.json")));
  const auto grpo_cfg = base / "cost_grpo.json";
  json closed = cfg;
  closed["train"]["e_off"] = cfg["train"]["epochs"].get<int>() + 1;
  std::ofstream(grpo_cfg) << closed.dump(2);

  const int rc_repo = run_cli("run " + quoted(config("cost.json")) + " --out " + quoted(base / "repo"));
  const int rc_grpo = run_cli("run " + quoted(grpo_cfg) + " --out " + quoted(base / "grpo"));
  if (rc_repo != 0 || rc_grpo != 0)
    return {false, "run failed: rc " + std::to_string(rc_repo) + "/" + std::to_string(rc_grpo)};
  const auto repo = read_summary(base / "repo"), grpo = read_summary(base / "grpo");
  bool split = true;
  for (const auto* s : {&repo, &grpo})
    for (const auto& run : (*s)["runs"])
      for (const char* key : {"sampling_ns", "scoring_ns", "update_ns", "mean_step_ns"})
        split = split && run["timing"].contains(key) && run["timing"][key].get<double>() > 0.0;
  if (!split) return {false, "summary.json lacks a positive sampling/scoring/update split"};

  auto part = [](const json& s, const char* key) { return s["runs"][0]["timing"][key].get<double>(); };
  const double g_step = grpo["mean"]["mean_step_ns"].get<double>(), r_step = repo["mean"]["mean_step_ns"].get<double>();
  const double overhead = r_step / g_step - 1.0;
  std::ostringstream os;
  os << "g_on = g_off = " << cfg["train"]["g_on"] << "; per step GRPO " << fmt(g_step / 1e6, 3) << " ms, RePO "
     << fmt(r_step / 1e6, 3) << " ms, overhead " << fmt(100 * overhead, 3) << "% (reference figure 15%, not asserted); "
     << "RePO run totals sampling/scoring/update " << fmt(part(repo, "sampling_ns") / 1e6, 3) << "/"
     << fmt(part(repo, "scoring_ns") / 1e6, 3) << "/" << fmt(part(repo, "update_ns") / 1e6, 3) << " ms";
  return {true, os.str()};
}

// 11. Reruns write identical bytes.
Outcome determinism() {
  const auto dir = kWork / "determinism";
  fs::remove_all(dir);
  int rc = 0;
  for (const char* sub : {"a", "b"})
    rc |= run_cli("run " + quoted(config("smoke.json")) + " --seed 0,5 --out " + quoted(dir / sub));
  if (rc != 0) return {false, "run failed"};
  std::size_t same = 0, compared = 0;
  for (const char* f : {"metrics_0.csv", "metrics_5.csv", "checkpoint_0.bin", "checkpoint_5.bin", "dataset.jsonl"}) {
    ++compared;
    const auto a = slurp(dir / "a" / f);
    same += !a.empty() && a == slurp(dir / "b" / f);
  }
  return {same == compared, std::to_string(same) + "/" + std::to_string(compared) + " artifacts byte-identical"};
}

}  // namespace

int main() {
  fs::create_directories(kWork);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"1 gradient correctness", gradient_correctness},
      {"2 ratio identity at sync", ratio_identity_at_sync},
      {"3 off/on gradient ratio", off_on_gradient_ratio},
      {"4 advantage properties", advantage_properties},
      {"5 replay oracle equivalence", replay_oracle},
      {"6 GRPO reduction", grpo_reduction},
      {"7 effective-step direction", effective_step_direction},
      {"8 end-to-end learning", end_to_end_learning},
      {"9 split vs mixed", split_vs_mixed},
      {"10 cost accounting", cost_accounting},
      {"11 determinism", determinism},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << name << ": " << o.detail << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : "all criteria passed") << std::endl;
  return failed ? 1 : 0;
}
