#include <algorithm>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "repo/replay.hpp"
#include "test_support.hpp"

using namespace repo;
using namespace repo::replay;
using fixtures::make_sample;

namespace {

Group group_of(std::uint64_t pid, std::size_t n, std::uint64_t born, double reward = 1.0) {
  Group g;
  g.prompt_id = pid;
  for (std::size_t i = 0; i < n; ++i) g.samples.push_back(make_sample(pid, reward, born, i));
  return g;
}

std::vector<std::uint64_t> born_steps(const Group& g) {
  std::vector<std::uint64_t> out;
  for (const auto& s : g.samples) out.push_back(s.born_step);
  return out;
}

}  // namespace

TEST(Insert, OccupancyCountsSamples) {
  ReplayBuffer buf;
  buf.insert(group_of(3, 8, 1));
  EXPECT_EQ(buf.size(), 8u);
  EXPECT_EQ(buf.size(3), 8u);
  EXPECT_EQ(buf.size(4), 0u);
}

TEST(Insert, CapacityEvictsOldestFirst) {
  ReplayBuffer buf(16);
  for (std::uint64_t step = 1; step <= 3; ++step) buf.insert(group_of(0, 8, step));
  EXPECT_EQ(buf.size(0), 16u);
  EXPECT_EQ(buf.total_inserted(), 24u);
  for (const auto& s : buf.samples(0)) EXPECT_GE(s.born_step, 2u);
}

TEST(Insert, PreservesLogProbsBitExactly) {
  ReplayBuffer buf;
  Group g = group_of(1, 2, 1);
  g.samples[0].behavior_log_probs.values = {-0.1234567890123456789, -1e-300};
  buf.insert(g);
  EXPECT_EQ(buf.samples(1)[0].behavior_log_probs, g.samples[0].behavior_log_probs);
}

TEST(Insert, RejectsInconsistentGroups) {
  ReplayBuffer buf;
  Group off = group_of(0, 2, 1);
  off.origin = rollout::Origin::OffPolicy;
  EXPECT_THROW(buf.insert(off), std::invalid_argument);
  Group wrong = group_of(0, 2, 1);
  wrong.samples[1].prompt_id = 5;
  EXPECT_THROW(buf.insert(wrong), std::invalid_argument);
  buf.insert(group_of(0, 2, 4));
  EXPECT_THROW(buf.insert(group_of(0, 2, 3)), std::invalid_argument);
}

TEST(Retrieve, RecencyTakesNewestSteps) {
  std::vector<rollout::Sample> stored;
  for (std::uint64_t step = 1; step <= 5; ++step) stored.push_back(make_sample(0, 1.0, step));
  const auto g = fixtures::buffer_of(stored).retrieve(0, {StrategyKind::Recency, 0}, 2);
  EXPECT_EQ(born_steps(g), (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(g.origin, rollout::Origin::OffPolicy);
}

TEST(Retrieve, RewardOrientedTakesNewestWinners) {
  const std::vector<double> rewards{0, 1, 0, 1, 1};
  std::vector<rollout::Sample> stored;
  for (std::size_t i = 0; i < rewards.size(); ++i) stored.push_back(make_sample(0, rewards[i], i + 1));
  const auto g = fixtures::buffer_of(stored).retrieve(0, {StrategyKind::RewardOriented, 0}, 2);
  EXPECT_EQ(born_steps(g), (std::vector<std::uint64_t>{4, 5}));
  for (const auto& s : g.samples) EXPECT_EQ(s.reward, 1.0);
}

TEST(Retrieve, VarianceDrivenBalancesBinaryRewards) {
  const std::vector<double> rewards{1, 1, 1, 0};
  std::vector<rollout::Sample> stored;
  for (std::size_t i = 0; i < rewards.size(); ++i) stored.push_back(make_sample(0, rewards[i], i + 1));
  const auto g = fixtures::buffer_of(stored).retrieve(0, {StrategyKind::VarianceDriven, 0}, 2);
  ASSERT_EQ(g.size(), 2u);
  std::multiset<double> got{g.samples[0].reward, g.samples[1].reward};
  EXPECT_EQ(got, (std::multiset<double>{0.0, 1.0}));
  // The newest reward-1 sample is the one from step 3.
  EXPECT_EQ(born_steps(g), (std::vector<std::uint64_t>{3, 4}));
}

TEST(Retrieve, VarianceDrivenBalanceProperty) {
  for (std::size_t ones = 0; ones <= 8; ++ones)
    for (std::size_t k = 2; k <= 8; ++k) {
      std::vector<rollout::Sample> stored;
      for (std::size_t i = 0; i < 8; ++i) stored.push_back(make_sample(0, i < ones ? 1.0 : 0.0, i + 1));
      const auto g = fixtures::buffer_of(stored).retrieve(0, {StrategyKind::VarianceDriven, 0}, k);
      std::size_t got_ones = 0;
      for (const auto& s : g.samples) got_ones += s.reward == 1.0 ? 1 : 0;
      const std::size_t zeros = 8 - ones;
      if (ones >= (k + 1) / 2 && zeros >= (k + 1) / 2) {
        EXPECT_TRUE(got_ones == k / 2 || got_ones == (k + 1) / 2) << ones << " ones, k=" << k;
      } else {
        // The scarce class is taken in full.
        const std::size_t expect = ones < (k + 1) / 2 ? ones : k - zeros;
        EXPECT_EQ(got_ones, expect) << ones << " ones, k=" << k;
      }
    }
}

TEST(Retrieve, FullScopeReturnsEverything) {
  std::vector<rollout::Sample> stored;
  for (std::uint64_t i = 0; i < 12; ++i) stored.push_back(make_sample(0, static_cast<double>(i % 2), i / 3 + 1, i));
  const auto buf = fixtures::buffer_of(stored);
  EXPECT_EQ(buf.retrieve(0, {StrategyKind::FullScope, 0}, 4).size(), 12u);
}

TEST(Retrieve, EmptyBelowTwoSamplesOrNoneStrategy) {
  ReplayBuffer buf;
  EXPECT_TRUE(buf.retrieve(0, {StrategyKind::Recency, 0}, 4).empty());
  buf.insert(group_of(0, 1, 1));
  EXPECT_TRUE(buf.retrieve(0, {StrategyKind::FullScope, 0}, 4).empty());
  buf.insert(group_of(0, 3, 2));
  EXPECT_TRUE(buf.retrieve(0, {StrategyKind::None, 0}, 4).empty());
  EXPECT_EQ(buf.retrieve(0, {StrategyKind::Recency, 0}, 4).size(), 4u);
  EXPECT_THROW(buf.retrieve(0, {StrategyKind::Recency, 0}, 0), std::invalid_argument);
  EXPECT_THROW(buf.retrieve(0, {static_cast<StrategyKind>(42), 0}, 1), std::invalid_argument);
}

TEST(Retrieve, DoesNotMutate) {
  std::vector<rollout::Sample> stored;
  for (std::uint64_t i = 0; i < 9; ++i) stored.push_back(make_sample(0, static_cast<double>(i % 3 == 0), i / 2 + 1, i));
  const auto buf = fixtures::buffer_of(stored);
  std::stringstream before, after;
  buf.dump_jsonl(before);
  for (auto kind : {StrategyKind::Random, StrategyKind::FullScope, StrategyKind::Recency, StrategyKind::RewardOriented,
                    StrategyKind::VarianceDriven})
    buf.retrieve(0, {kind, 3}, 4);
  buf.dump_jsonl(after);
  EXPECT_EQ(before.str(), after.str());
}

TEST(Retrieve, RandomIsKeyedAndValid) {
  std::vector<rollout::Sample> stored;
  for (std::uint64_t i = 0; i < 10; ++i) stored.push_back(make_sample(0, 1.0, i + 1, i));
  const auto buf = fixtures::buffer_of(stored);
  const auto a = buf.retrieve(0, {StrategyKind::Random, 5}, 4);
  EXPECT_EQ(a, buf.retrieve(0, {StrategyKind::Random, 5}, 4));
  const auto idx = fixtures::indices_of(stored, a);
  EXPECT_EQ(idx.size(), 4u);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 4u);
  bool differs = false;
  for (std::uint64_t seed = 6; seed < 16; ++seed) differs = differs || buf.retrieve(0, {StrategyKind::Random, seed}, 4) != a;
  EXPECT_TRUE(differs);
}

TEST(Retrieve, MatchesBruteForceOnSmallBuffers) {
  std::size_t cases = 0, mismatches = 0;
  for (std::size_t n = 2; n <= 8; ++n)
    for (std::uint64_t pattern = 0; pattern < (std::uint64_t{1} << n); ++pattern) {
      std::vector<rollout::Sample> stored;
      for (std::size_t i = 0; i < n; ++i)
        stored.push_back(make_sample(0, static_cast<double>(pattern >> i & 1U), i / 2 + 1, i));
      const auto buf = fixtures::buffer_of(stored);
      for (auto kind : {StrategyKind::FullScope, StrategyKind::Recency, StrategyKind::RewardOriented,
                        StrategyKind::VarianceDriven})
        for (std::size_t k = 1; k <= 6; ++k) {
          ++cases;
          const auto err = fixtures::check_retrieval(stored, buf, kind, k);
          if (!err.empty()) {
            ++mismatches;
            if (mismatches < 5) ADD_FAILURE() << "n=" << n << " pattern=" << pattern << " k=" << k << ": " << err;
          }
        }
    }
  EXPECT_EQ(mismatches, 0u) << "of " << cases;
}

TEST(Retrieve, MatchesBruteForceOnRandomLargerBuffers) {
  RngStream rng(20);
  std::size_t mismatches = 0;
  for (int c = 0; c < 12; ++c) {
    const std::size_t n = 13 + rng.below(8);
    std::vector<rollout::Sample> stored;
    std::uint64_t born = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (i && rng.below(3) == 0) ++born;
      stored.push_back(make_sample(0, static_cast<double>(rng.below(2)), born, i));
    }
    const auto buf = fixtures::buffer_of(stored);
    for (auto kind : {StrategyKind::Recency, StrategyKind::RewardOriented, StrategyKind::VarianceDriven})
      for (std::size_t k = 1; k <= 8; ++k) {
        const auto err = fixtures::check_retrieval(stored, buf, kind, k);
        if (!err.empty() && mismatches++ < 5) ADD_FAILURE() << "n=" << n << " k=" << k << ": " << err;
      }
  }
  EXPECT_EQ(mismatches, 0u);
}

TEST(Dump, JsonLinesCarryAllFields) {
  ReplayBuffer buf;
  buf.insert(group_of(2, 2, 7, 0.0));
  std::stringstream ss;
  buf.dump_jsonl(ss);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(ss, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"prompt_id", "tokens", "behavior_log_probs", "reward", "born_step"})
      EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["born_step"], 7);
    ++lines;
  }
  EXPECT_EQ(lines, 2u);
}

TEST(Strategy, NamesRoundTrip) {
  for (auto kind : {StrategyKind::None, StrategyKind::Random, StrategyKind::FullScope, StrategyKind::Recency,
                    StrategyKind::RewardOriented, StrategyKind::VarianceDriven})
    EXPECT_EQ(strategy_from_string(to_string(kind)), kind);
  EXPECT_EQ(strategy_from_string("no"), StrategyKind::None);
  EXPECT_THROW(strategy_from_string("fifo"), std::invalid_argument);
}
