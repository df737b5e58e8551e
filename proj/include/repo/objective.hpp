#pragma once

// Clipped surrogate objectives for on-policy, replayed (off-policy), and
// KL-penalized group updates.
//
// Every objective here has the form
//   J = (1/G) sum_i norm_i sum_t f(log pi_theta(o_it)),
// so its gradient is sum_i sum_t (dJ/dlog pi_it) * grad log pi_it. The
// per-token weights dJ/dlog pi are computed in closed form and the
// log-probability gradients come from the policy's differentiable graph.

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "repo/advantage.hpp"
#include "repo/policy.hpp"
#include "repo/rollout.hpp"

namespace repo::objective {

using advantage::AdvantageSet;
using policy::PolicyParameters;
using rollout::Group;
using tasks::PromptFeatures;

enum class TokenNorm {
  PerSequence,     // 1 / |o_i|
  DrGrpoConstant,  // 1 / max_output_len
};

inline std::string to_string(TokenNorm n) { return n == TokenNorm::PerSequence ? "per_sequence" : "dr_grpo_constant"; }
inline TokenNorm token_norm_from_string(const std::string& s) {
  if (s == "per_sequence") return TokenNorm::PerSequence;
  if (s == "dr_grpo_constant") return TokenNorm::DrGrpoConstant;
  throw std::invalid_argument("unknown token_norm '" + s + "'");
}

struct ObjectiveConfig {
  double clip_epsilon = 0.2;
  double kl_beta = 0.0;
  double off_weight = 1.0;
  TokenNorm token_norm = TokenNorm::PerSequence;

  void validate() const {
    if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0)) throw std::invalid_argument("clip_epsilon must be in (0, 1)");
    if (!(kl_beta >= 0.0) || !std::isfinite(kl_beta)) throw std::invalid_argument("kl_beta must be >= 0");
    if (!(off_weight >= 0.0) || !std::isfinite(off_weight)) throw std::invalid_argument("off_weight must be >= 0");
  }
};

/// min(r A, clip(r, 1 - eps, 1 + eps) A)
inline double clipped_term(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

/// True when the clipped branch is strictly smaller, i.e. the token sends no
/// gradient.
inline bool clip_active(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return clipped * advantage < ratio * advantage;
}

/// Unbiased nonnegative KL estimate for one token: r - log r - 1 with
/// r = pi_ref / pi_theta.
inline double k3_estimate(double live_log_prob, double ref_log_prob) {
  const double log_r = ref_log_prob - live_log_prob;
  return std::exp(log_r) - log_r - 1.0;
}

struct SurrogateResult {
  double objective = 0.0;  // J
  double loss = 0.0;       // -J
  PolicyParameters gradient;  // d loss / d theta
  std::vector<std::vector<double>> ratios;         // per sample, per token
  std::vector<std::vector<double>> token_weights;  // dJ / d log pi, per sample, per token
  std::size_t token_count = 0;
  std::size_t clipped_count = 0;
  double kl_sum = 0.0;  // sum of per-token k3 estimates

  double clipped_fraction() const {
    return token_count ? static_cast<double>(clipped_count) / static_cast<double>(token_count) : 0.0;
  }

  /// Adds another result's value and gradient; diagnostics are concatenated.
  SurrogateResult& operator+=(const SurrogateResult& o) {
    objective += o.objective;
    loss += o.loss;
    policy::axpy(gradient, 1.0, o.gradient);
    ratios.insert(ratios.end(), o.ratios.begin(), o.ratios.end());
    token_weights.insert(token_weights.end(), o.token_weights.begin(), o.token_weights.end());
    token_count += o.token_count;
    clipped_count += o.clipped_count;
    kl_sum += o.kl_sum;
    return *this;
  }
};

inline SurrogateResult empty_result(const PolicyParameters& like) {
  SurrogateResult r;
  r.gradient = policy::zeros_like(like);
  return r;
}

namespace detail {

inline double token_normalizer(const ObjectiveConfig& cfg, const PolicyParameters& live, std::size_t len) {
  return cfg.token_norm == TokenNorm::PerSequence ? 1.0 / static_cast<double>(len)
                                                  : 1.0 / static_cast<double>(live.config.max_output_len);
}

/// Shared body: `behavior[i]` are the ratio denominators of sample i,
/// `reference` (optional) the KL reference log-probs. The result is scaled
/// by `weight` (value and gradient).
inline SurrogateResult clipped_surrogate(const PolicyParameters& live, const PromptFeatures& prompt, const Group& group,
                                         const AdvantageSet& adv, const std::vector<std::vector<double>>& behavior,
                                         const ObjectiveConfig& cfg, double weight,
                                         const std::vector<std::vector<double>>* reference = nullptr) {
  cfg.validate();
  if (adv.size() != group.size())
    throw std::invalid_argument("advantage count " + std::to_string(adv.size()) + " does not match group size " +
                                std::to_string(group.size()));
  SurrogateResult res = empty_result(live);
  if (group.empty()) return res;
  const double inv_g = 1.0 / static_cast<double>(group.size());

  for (std::size_t i = 0; i < group.size(); ++i) {
    const auto& s = group.samples[i];
    const auto& denom = behavior[i];
    if (denom.size() != s.tokens.size())
      throw std::invalid_argument("sample " + std::to_string(i) + " of prompt " + std::to_string(group.prompt_id) +
                                  " has " + std::to_string(denom.size()) + " behavior log-probs for " +
                                  std::to_string(s.tokens.size()) + " tokens");
    const auto live_lp = policy::sequence_log_probs(live, prompt, s.tokens).values;
    const double norm = weight * inv_g * token_normalizer(cfg, live, s.tokens.size());
    const double a = adv.values[i];

    std::vector<double> ratios(s.tokens.size()), weights(s.tokens.size());
    double inner = 0.0;
    for (std::size_t t = 0; t < s.tokens.size(); ++t) {
      const double r = std::exp(live_lp[t] - denom[t]);
      ratios[t] = r;
      double term = clipped_term(r, a, cfg.clip_epsilon);
      // d(r A)/d log pi = r A on the unclipped branch, zero when clipped.
      double w = 0.0;
      if (clip_active(r, a, cfg.clip_epsilon)) ++res.clipped_count;
      else w = r * a;
      if (reference && cfg.kl_beta != 0.0) {
        const double lref = (*reference)[i][t];
        const double k3 = k3_estimate(live_lp[t], lref);
        res.kl_sum += k3;
        term -= cfg.kl_beta * k3;
        // d k3 / d log pi = 1 - pi_ref / pi_theta
        w -= cfg.kl_beta * (1.0 - std::exp(lref - live_lp[t]));
      }
      inner += term;
      weights[t] = norm * w;
    }
    res.objective += norm * inner;
    res.token_count += s.tokens.size();
    policy::accumulate_weighted_log_prob_gradient(live, prompt, s.tokens, weights, res.gradient, -1.0);
    res.ratios.push_back(std::move(ratios));
    res.token_weights.push_back(std::move(weights));
  }
  res.loss = -res.objective;
  return res;
}

inline std::vector<std::vector<double>> score_group(const PolicyParameters& params, const PromptFeatures& prompt,
                                                    const Group& group) {
  std::vector<std::vector<double>> out;
  out.reserve(group.size());
  for (const auto& s : group.samples) out.push_back(policy::sequence_log_probs(params, prompt, s.tokens).values);
  return out;
}

}  // namespace detail

/// On-policy clipped objective, ratios against the behavior snapshot.
inline SurrogateResult on_policy_objective(const PolicyParameters& live, const PolicyParameters& old,
                                           const PromptFeatures& prompt, const Group& on_group,
                                           const AdvantageSet& adv, const ObjectiveConfig& cfg) {
  return detail::clipped_surrogate(live, prompt, on_group, adv, detail::score_group(old, prompt, on_group), cfg, 1.0);
}

/// Replay objective, ratios against each sample's stored generation
/// log-probabilities, scaled by off_weight. An empty group contributes zero.
inline SurrogateResult off_policy_objective(const PolicyParameters& live, const PromptFeatures& prompt,
                                            const Group& off_group, const AdvantageSet& adv,
                                            const ObjectiveConfig& cfg) {
  std::vector<std::vector<double>> behavior;
  behavior.reserve(off_group.size());
  for (const auto& s : off_group.samples) {
    if (s.behavior_log_probs.size() != s.tokens.size())
      throw std::invalid_argument("off-policy sample of prompt " + std::to_string(s.prompt_id) +
                                  " is missing behavior log-probabilities");
    behavior.push_back(s.behavior_log_probs.values);
  }
  return detail::clipped_surrogate(live, prompt, off_group, adv, behavior, cfg, cfg.off_weight);
}

/// On-policy term plus replay term with advantages assigned per `mode`.
inline SurrogateResult repo_objective(const PolicyParameters& live, const PolicyParameters& old,
                                      const PromptFeatures& prompt, const Group& on_group, const Group& off_group,
                                      const advantage::AdvantageMode& mode, const ObjectiveConfig& cfg) {
  if (!off_group.empty() && off_group.prompt_id != on_group.prompt_id)
    throw std::invalid_argument("on- and off-policy groups belong to different prompts");
  const auto [on_adv, off_adv] = advantage::assign_advantages(on_group, off_group, mode);
  SurrogateResult res = on_policy_objective(live, old, prompt, on_group, on_adv, cfg);
  if (!off_group.empty()) res += off_policy_objective(live, prompt, off_group, off_adv, cfg);
  return res;
}

/// On-policy clipped objective minus kl_beta times the per-token k3 KL
/// estimate against `ref`. With kl_beta == 0 this is on_policy_objective.
inline SurrogateResult grpo_objective(const PolicyParameters& live, const PolicyParameters& old,
                                      const PolicyParameters& ref, const PromptFeatures& prompt,
                                      const Group& on_group, const AdvantageSet& adv, const ObjectiveConfig& cfg) {
  if (cfg.kl_beta == 0.0) return on_policy_objective(live, old, prompt, on_group, adv, cfg);
  const auto ref_lp = detail::score_group(ref, prompt, on_group);
  return detail::clipped_surrogate(live, prompt, on_group, adv, detail::score_group(old, prompt, on_group), cfg, 1.0,
                                   &ref_lp);
}

/// Gradient of each token's contribution w_t * log pi(o_t | ...) taken alone.
inline std::vector<PolicyParameters> per_token_gradients(const PolicyParameters& live, const PromptFeatures& prompt,
                                                         const TokenSequence& tokens,
                                                         const std::vector<double>& token_weights) {
  std::vector<PolicyParameters> out;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    std::vector<double> w(tokens.size(), 0.0);
    w[t] = token_weights.at(t);
    PolicyParameters g = policy::zeros_like(live);
    policy::accumulate_weighted_log_prob_gradient(live, prompt, tokens, w, g);
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace repo::objective
