#pragma once

// Per-prompt replay buffer of past on-policy samples and the retrieval
// strategies that form off-policy groups from it.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "repo/rng.hpp"
#include "repo/rollout.hpp"

namespace repo::replay {

using rollout::Group;
using rollout::Origin;
using rollout::Sample;

enum class StrategyKind { None, Random, FullScope, Recency, RewardOriented, VarianceDriven };

inline std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::None: return "none";
    case StrategyKind::Random: return "random";
    case StrategyKind::FullScope: return "full_scope";
    case StrategyKind::Recency: return "recency";
    case StrategyKind::RewardOriented: return "reward_oriented";
    case StrategyKind::VarianceDriven: return "variance_driven";
  }
  throw std::invalid_argument("unknown replay strategy kind " + std::to_string(static_cast<int>(k)));
}

inline StrategyKind strategy_from_string(const std::string& s) {
  if (s == "none" || s == "no") return StrategyKind::None;
  if (s == "random") return StrategyKind::Random;
  if (s == "full_scope") return StrategyKind::FullScope;
  if (s == "recency") return StrategyKind::Recency;
  if (s == "reward_oriented") return StrategyKind::RewardOriented;
  if (s == "variance_driven") return StrategyKind::VarianceDriven;
  throw std::invalid_argument("unknown replay strategy '" + s + "'");
}

struct ReplayStrategy {
  StrategyKind kind = StrategyKind::Recency;
  std::uint64_t rng_seed = 0;  // used by Random only
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Population variance.
inline double population_variance(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return acc / static_cast<double>(xs.size());
}

class ReplayBuffer {
 public:
  /// capacity_per_prompt == 0 means unlimited.
  explicit ReplayBuffer(std::size_t capacity_per_prompt = 0) : capacity_(capacity_per_prompt) {}

  std::size_t capacity_per_prompt() const { return capacity_; }

  void insert(const Group& group) {
    if (group.origin != Origin::OnPolicy)
      throw std::invalid_argument("only on-policy groups may be inserted into the replay buffer");
    auto& list = store_[group.prompt_id];
    for (const auto& s : group.samples) {
      if (s.prompt_id != group.prompt_id)
        throw std::invalid_argument("sample prompt_id " + std::to_string(s.prompt_id) +
                                    " does not match group prompt_id " + std::to_string(group.prompt_id));
      if (!list.empty() && s.born_step < list.back().sample.born_step)
        throw std::invalid_argument("born_step must be non-decreasing within a prompt");
      list.push_back(Entry{s, next_index_[group.prompt_id]++});
      ++total_inserted_;
      if (capacity_ && list.size() > capacity_) list.pop_front();
    }
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& [_, l] : store_) n += l.size();
    return n;
  }

  std::size_t size(std::uint64_t prompt_id) const {
    auto it = store_.find(prompt_id);
    return it == store_.end() ? 0 : it->second.size();
  }

  std::size_t total_inserted() const { return total_inserted_; }

  /// Stored samples for a prompt in append order.
  std::vector<Sample> samples(std::uint64_t prompt_id) const {
    std::vector<Sample> out;
    if (auto it = store_.find(prompt_id); it != store_.end())
      for (const auto& e : it->second) out.push_back(e.sample);
    return out;
  }

  /// Off-policy group for `prompt_id`, or an empty group when the strategy is
  /// `none` or fewer than two samples are stored. Selected samples are
  /// returned in append order.
  Group retrieve(std::uint64_t prompt_id, const ReplayStrategy& strategy, std::size_t g_off) const {
    if (g_off < 1) throw std::invalid_argument("g_off must be >= 1");
    Group out;
    out.prompt_id = prompt_id;
    out.origin = Origin::OffPolicy;

    if (static_cast<int>(strategy.kind) < static_cast<int>(StrategyKind::None) ||
        static_cast<int>(strategy.kind) > static_cast<int>(StrategyKind::VarianceDriven))
      throw std::invalid_argument("unknown replay strategy kind " + std::to_string(static_cast<int>(strategy.kind)));
    auto it = store_.find(prompt_id);
    if (strategy.kind == StrategyKind::None || it == store_.end() || it->second.size() < 2) return out;
    const auto& list = it->second;
    const std::size_t n = list.size();
    const std::size_t k = std::min(g_off, n);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto more_recent = [&](std::size_t a, std::size_t b) {
      const auto& ea = list[a];
      const auto& eb = list[b];
      if (ea.sample.born_step != eb.sample.born_step) return ea.sample.born_step > eb.sample.born_step;
      return ea.insertion > eb.insertion;
    };

    std::vector<std::size_t> chosen;
    switch (strategy.kind) {
      case StrategyKind::None:
        break;
      case StrategyKind::FullScope:
        chosen = order;
        break;
      case StrategyKind::Recency:
        std::sort(order.begin(), order.end(), more_recent);
        chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        break;
      case StrategyKind::RewardOriented:
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
          if (list[a].sample.reward != list[b].sample.reward) return list[a].sample.reward > list[b].sample.reward;
          return more_recent(a, b);
        });
        chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        break;
      case StrategyKind::Random: {
        RngStream rng(strategy.rng_seed, {0x7265706cULL, prompt_id});
        for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.below(n - i)]);
        chosen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
        break;
      }
      case StrategyKind::VarianceDriven:
        chosen = variance_driven(list, k, more_recent);
        break;
    }

    std::sort(chosen.begin(), chosen.end());
    for (auto i : chosen) out.samples.push_back(list[i].sample);
    return out;
  }

  /// JSON lines, one per stored sample, prompts ascending then append order.
  void dump_jsonl(std::ostream& os) const {
    for (const auto& [pid, list] : store_)
      for (const auto& e : list) {
        nlohmann::json j;
        j["prompt_id"] = pid;
        j["tokens"] = e.sample.tokens;
        j["behavior_log_probs"] = e.sample.behavior_log_probs.values;
        j["reward"] = e.sample.reward;
        j["born_step"] = e.sample.born_step;
        os << j.dump() << '\n';
      }
  }

 private:
  struct Entry {
    Sample sample;
    std::uint64_t insertion = 0;
  };

  // The maximum-variance subset of size k takes the j smallest and k - j
  // largest rewards for some j. Within one reward value the most recent
  // samples are used.
  template <typename Recency>
  static std::vector<std::size_t> variance_driven(const std::deque<Entry>& list, std::size_t k, Recency more_recent) {
    const std::size_t n = list.size();
    std::vector<double> sorted;
    sorted.reserve(n);
    for (const auto& e : list) sorted.push_back(e.sample.reward);
    std::sort(sorted.begin(), sorted.end());

    std::vector<double> best;
    double best_var = -1.0;
    for (std::size_t j = 0; j <= k; ++j) {
      std::vector<double> pick(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(j));
      pick.insert(pick.end(), sorted.end() - static_cast<std::ptrdiff_t>(k - j), sorted.end());
      const double v = population_variance(pick);
      if (v > best_var) {
        best_var = v;
        best = std::move(pick);
      }
    }

    std::map<double, std::size_t> need;
    for (double r : best) ++need[r];
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), more_recent);
    std::vector<std::size_t> chosen;
    for (auto i : order) {
      auto it = need.find(list[i].sample.reward);
      if (it != need.end() && it->second > 0) {
        --it->second;
        chosen.push_back(i);
      }
    }
    return chosen;
  }

  std::size_t capacity_;
  std::map<std::uint64_t, std::deque<Entry>> store_;
  std::map<std::uint64_t, std::uint64_t> next_index_;
  std::size_t total_inserted_ = 0;
};

}  // namespace repo::replay
