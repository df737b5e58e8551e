#pragma once

// Synthetic prompt sets with deterministic 0/1 verifiable rewards.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "repo/rng.hpp"
#include "repo/types.hpp"

namespace repo::tasks {

enum class TaskKind { ModularAddition, Parity, ControlledDifficulty };

inline std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::ModularAddition: return "modular_addition";
    case TaskKind::Parity: return "parity";
    case TaskKind::ControlledDifficulty: return "controlled_difficulty";
  }
  return "?";
}

inline TaskKind task_kind_from_string(const std::string& s) {
  if (s == "modular_addition") return TaskKind::ModularAddition;
  if (s == "parity") return TaskKind::Parity;
  if (s == "controlled_difficulty") return TaskKind::ControlledDifficulty;
  throw std::invalid_argument("unknown task kind '" + s + "'");
}

struct TaskSpec {
  TaskKind kind = TaskKind::ModularAddition;
  std::uint64_t modulus = 7;      // modular_addition
  std::uint64_t bits = 4;         // parity
  double success_prob = 0.5;      // controlled_difficulty
  std::uint64_t vocab_size = 8;   // controlled_difficulty: size of the token space
  std::uint64_t dataset_size = 64;
  std::uint64_t seed = 0;
  // 0 selects the natural one-hot width; smaller values hash into that many buckets.
  std::uint64_t feature_dim = 0;

  void validate() const {
    if (dataset_size < 1) throw std::invalid_argument("task.dataset_size must be >= 1");
    switch (kind) {
      case TaskKind::ModularAddition:
        if (modulus < 2) throw std::invalid_argument("task.modulus must be >= 2");
        break;
      case TaskKind::Parity:
        if (bits < 1 || bits > 20) throw std::invalid_argument("task.bits must be in [1, 20]");
        break;
      case TaskKind::ControlledDifficulty:
        if (!(success_prob >= 0.0 && success_prob <= 1.0))
          throw std::invalid_argument("task.success_prob must be in [0, 1]");
        if (vocab_size < 2) throw std::invalid_argument("task.vocab_size must be >= 2");
        break;
    }
  }
};

struct PromptFeatures {
  std::uint64_t prompt_id = 0;
  TaskKind kind = TaskKind::ModularAddition;
  std::vector<double> features;
  TokenSequence ground_truth;
  // controlled_difficulty only: first tokens that earn reward 1, ascending.
  TokenSequence winning_tokens;

  friend bool operator==(const PromptFeatures&, const PromptFeatures&) = default;
};

/// One-hot width before hashing.
inline std::uint64_t natural_feature_dim(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::ModularAddition: return spec.modulus * spec.modulus;
    case TaskKind::Parity: return std::uint64_t{1} << spec.bits;
    case TaskKind::ControlledDifficulty: return spec.dataset_size;
  }
  return 0;
}

inline std::uint64_t feature_dim(const TaskSpec& spec) {
  return spec.feature_dim ? spec.feature_dim : natural_feature_dim(spec);
}

/// Smallest vocabulary that can express every correct answer.
inline std::uint64_t min_vocab_size(const TaskSpec& spec) {
  switch (spec.kind) {
    case TaskKind::ModularAddition: return spec.modulus + 1;
    case TaskKind::Parity: return 3;
    case TaskKind::ControlledDifficulty: return spec.vocab_size;
  }
  return 2;
}

/// Answer values v are written as the single token v + 1.
inline Token encode_answer(std::uint64_t value) { return static_cast<Token>(value + 1); }

inline std::vector<double> one_hot(std::uint64_t index, std::uint64_t dim) {
  std::vector<double> v(dim, 0.0);
  v[index % dim] = 1.0;
  return v;
}

inline PromptFeatures modular_addition_prompt(std::uint64_t id, std::uint64_t a, std::uint64_t b,
                                              std::uint64_t modulus, std::uint64_t dim = 0) {
  PromptFeatures p;
  p.prompt_id = id;
  p.kind = TaskKind::ModularAddition;
  p.features = one_hot(a * modulus + b, dim ? dim : modulus * modulus);
  p.ground_truth = {encode_answer((a + b) % modulus)};
  return p;
}

/// bits[0] is the most significant bit of the encoded pattern.
inline PromptFeatures parity_prompt(std::uint64_t id, const std::vector<int>& bits,
                                    std::uint64_t dim = 0) {
  std::uint64_t pattern = 0;
  int parity = 0;
  for (int b : bits) {
    pattern = (pattern << 1) | static_cast<std::uint64_t>(b & 1);
    parity ^= b & 1;
  }
  PromptFeatures p;
  p.prompt_id = id;
  p.kind = TaskKind::Parity;
  p.features = one_hot(pattern, dim ? dim : (std::uint64_t{1} << bits.size()));
  p.ground_truth = {encode_answer(static_cast<std::uint64_t>(parity))};
  return p;
}

inline std::vector<PromptFeatures> generate_dataset(const TaskSpec& spec) {
  spec.validate();
  const std::uint64_t dim = feature_dim(spec);
  std::vector<PromptFeatures> out;
  out.reserve(spec.dataset_size);
  for (std::uint64_t id = 0; id < spec.dataset_size; ++id) {
    RngStream rng(spec.seed, {0x7461736bULL, id});
    switch (spec.kind) {
      case TaskKind::ModularAddition: {
        const auto a = rng.below(spec.modulus);
        const auto b = rng.below(spec.modulus);
        out.push_back(modular_addition_prompt(id, a, b, spec.modulus, dim));
        break;
      }
      case TaskKind::Parity: {
        std::vector<int> bits(spec.bits);
        for (auto& b : bits) b = static_cast<int>(rng.below(2));
        out.push_back(parity_prompt(id, bits, dim));
        break;
      }
      case TaskKind::ControlledDifficulty: {
        const auto winners = static_cast<std::uint64_t>(
            std::llround(spec.success_prob * static_cast<double>(spec.vocab_size)));
        // Partial Fisher-Yates over the token ids.
        std::vector<Token> ids(spec.vocab_size);
        for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
        for (std::uint64_t i = 0; i < winners; ++i)
          std::swap(ids[i], ids[i + rng.below(spec.vocab_size - i)]);
        PromptFeatures p;
        p.prompt_id = id;
        p.kind = TaskKind::ControlledDifficulty;
        p.features = one_hot(id, dim);
        p.winning_tokens.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(winners));
        std::sort(p.winning_tokens.begin(), p.winning_tokens.end());
        if (!p.winning_tokens.empty()) p.ground_truth = {p.winning_tokens.front()};
        out.push_back(std::move(p));
        break;
      }
    }
  }
  return out;
}

inline double reward(const PromptFeatures& prompt, const TokenSequence& output) {
  if (prompt.kind == TaskKind::ControlledDifficulty) {
    if (output.empty()) return 0.0;
    return std::binary_search(prompt.winning_tokens.begin(), prompt.winning_tokens.end(), output.front())
               ? 1.0
               : 0.0;
  }
  return truncate_at_eos(output) == prompt.ground_truth ? 1.0 : 0.0;
}

// JSON lines: {"prompt_id", "kind", "features", "ground_truth"[, "winning_tokens"]}

inline nlohmann::json to_json(const PromptFeatures& p) {
  nlohmann::json j;
  j["prompt_id"] = p.prompt_id;
  j["kind"] = to_string(p.kind);
  j["features"] = p.features;
  j["ground_truth"] = p.ground_truth;
  if (p.kind == TaskKind::ControlledDifficulty) j["winning_tokens"] = p.winning_tokens;
  return j;
}

inline PromptFeatures prompt_from_json(const nlohmann::json& j) {
  PromptFeatures p;
  p.prompt_id = j.at("prompt_id").get<std::uint64_t>();
  p.kind = j.contains("kind") ? task_kind_from_string(j.at("kind").get<std::string>())
                              : TaskKind::ModularAddition;
  p.features = j.at("features").get<std::vector<double>>();
  p.ground_truth = j.at("ground_truth").get<TokenSequence>();
  if (j.contains("winning_tokens")) p.winning_tokens = j.at("winning_tokens").get<TokenSequence>();
  return p;
}

inline void dump_jsonl(std::ostream& os, const std::vector<PromptFeatures>& dataset) {
  for (const auto& p : dataset) os << to_json(p).dump() << '\n';
}

inline std::vector<PromptFeatures> load_jsonl(std::istream& is) {
  std::vector<PromptFeatures> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(prompt_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace repo::tasks
