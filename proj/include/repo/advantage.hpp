#pragma once

// Group-relative advantage estimation.

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "repo/rollout.hpp"

namespace repo::advantage {

enum class Normalizer {
  Grpo,    // (R - mean) / std
  DrGrpo,  // R - mean
};

enum class Grouping {
  Split,  // on- and off-policy groups normalized separately
  Mixed,  // normalized over their union
};

struct AdvantageMode {
  Normalizer normalizer = Normalizer::Grpo;
  Grouping grouping = Grouping::Split;
};

inline std::string to_string(Normalizer n) { return n == Normalizer::Grpo ? "grpo" : "dr_grpo"; }
inline std::string to_string(Grouping g) { return g == Grouping::Split ? "split" : "mixed"; }

inline Normalizer normalizer_from_string(const std::string& s) {
  if (s == "grpo") return Normalizer::Grpo;
  if (s == "dr_grpo") return Normalizer::DrGrpo;
  throw std::invalid_argument("unknown advantage normalizer '" + s + "'");
}

inline Grouping grouping_from_string(const std::string& s) {
  if (s == "split") return Grouping::Split;
  if (s == "mixed") return Grouping::Mixed;
  throw std::invalid_argument("unknown advantage grouping '" + s + "'");
}

/// Below this population std a group counts as reward-uniform.
inline constexpr double kZeroStdThreshold = 1e-8;

/// One advantage per sample, shared by all of that sample's tokens.
struct AdvantageSet {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }
  bool any_nonzero() const {
    for (double v : values)
      if (v != 0.0) return true;
    return false;
  }
};

struct GroupStats {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline GroupStats group_stats(const std::vector<double>& rewards) {
  GroupStats s;
  const double n = static_cast<double>(rewards.size());
  s.mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double acc = 0.0;
  for (double r : rewards) acc += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(acc / n);
  return s;
}

inline AdvantageSet group_advantages(const std::vector<double>& rewards, Normalizer normalizer) {
  if (rewards.empty()) throw std::invalid_argument("group_advantages needs at least one reward");
  const GroupStats s = group_stats(rewards);
  AdvantageSet out;
  out.values.assign(rewards.size(), 0.0);
  if (s.std < kZeroStdThreshold) return out;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    const double centered = rewards[i] - s.mean;
    out.values[i] = normalizer == Normalizer::Grpo ? centered / s.std : centered;
  }
  return out;
}

inline std::pair<AdvantageSet, AdvantageSet> assign_advantages(const std::vector<double>& on_rewards,
                                                               const std::vector<double>& off_rewards,
                                                               const AdvantageMode& mode) {
  if (on_rewards.empty()) throw std::invalid_argument("on-policy group must be non-empty");
  if (off_rewards.empty()) return {group_advantages(on_rewards, mode.normalizer), {}};
  if (mode.grouping == Grouping::Split)
    return {group_advantages(on_rewards, mode.normalizer), group_advantages(off_rewards, mode.normalizer)};

  std::vector<double> all = on_rewards;
  all.insert(all.end(), off_rewards.begin(), off_rewards.end());
  const AdvantageSet u = group_advantages(all, mode.normalizer);
  const auto split = u.values.begin() + static_cast<std::ptrdiff_t>(on_rewards.size());
  return {AdvantageSet{{u.values.begin(), split}}, AdvantageSet{{split, u.values.end()}}};
}

inline std::pair<AdvantageSet, AdvantageSet> assign_advantages(const rollout::Group& on_group,
                                                               const rollout::Group& off_group,
                                                               const AdvantageMode& mode) {
  return assign_advantages(on_group.rewards(), off_group.rewards(), mode);
}

}  // namespace repo::advantage
