#pragma once

// On-policy group sampling.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "repo/policy.hpp"
#include "repo/rng.hpp"
#include "repo/tasks.hpp"

namespace repo::rollout {

using policy::PolicyParameters;
using policy::TokenLogProbs;
using tasks::PromptFeatures;

struct Sample {
  std::uint64_t prompt_id = 0;
  TokenSequence tokens;
  TokenLogProbs behavior_log_probs;  // log pi at generation time, per token
  double reward = 0.0;
  std::uint64_t born_step = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class Origin { OnPolicy, OffPolicy };

struct Group {
  std::uint64_t prompt_id = 0;
  std::vector<Sample> samples;
  Origin origin = Origin::OnPolicy;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  std::vector<double> rewards() const {
    std::vector<double> r;
    r.reserve(samples.size());
    for (const auto& s : samples) r.push_back(s.reward);
    return r;
  }

  friend bool operator==(const Group&, const Group&) = default;
};

/// Stream key for one sample; independent of how prompts are scheduled.
inline RngStream sample_stream(std::uint64_t seed, std::uint64_t step, std::uint64_t prompt_id,
                               std::uint64_t index) {
  return RngStream(seed, {0x726f6c6cULL, step, prompt_id, index});
}

inline Group sample_group(const PolicyParameters& snapshot, const PromptFeatures& prompt, std::size_t g_on,
                          double temperature, std::uint64_t step, std::uint64_t seed) {
  if (g_on < 1) throw std::invalid_argument("g_on must be >= 1");
  Group g;
  g.prompt_id = prompt.prompt_id;
  g.origin = Origin::OnPolicy;
  g.samples.reserve(g_on);
  for (std::size_t i = 0; i < g_on; ++i) {
    RngStream rng = sample_stream(seed, step, prompt.prompt_id, i);
    auto out = policy::sample_output(snapshot, prompt, temperature, rng);
    Sample s;
    s.prompt_id = prompt.prompt_id;
    s.reward = tasks::reward(prompt, out.tokens);
    s.tokens = std::move(out.tokens);
    s.behavior_log_probs = std::move(out.log_probs);
    s.born_step = step;
    g.samples.push_back(std::move(s));
  }
  return g;
}

/// Samples one group per prompt, optionally across threads. Output order
/// follows `prompts` regardless of the thread count.
inline std::vector<Group> sample_groups(const PolicyParameters& snapshot, const std::vector<const PromptFeatures*>& prompts,
                                        std::size_t g_on, double temperature, std::uint64_t step, std::uint64_t seed,
                                        std::size_t threads = 1) {
  std::vector<Group> out(prompts.size());
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < prompts.size(); i += stride)
      out[i] = sample_group(snapshot, *prompts[i], g_on, temperature, step, seed);
  };
  threads = std::max<std::size_t>(1, std::min(threads, prompts.size()));
  if (threads == 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::jthread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      try {
        work(t, threads);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

}  // namespace repo::rollout
