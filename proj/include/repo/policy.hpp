#pragma once

// Autoregressive categorical policy over a small token vocabulary.
//
//   x_t      = PE[t] + TE[o_{t-1}] + q * PromptEmb       (o_{-1} = end-of-sequence id)
//   h_t      = x_t                                       (hidden_dim == 0)
//            = tanh(x_t * W + b)                         (hidden_dim  > 0)
//   logits_t = h_t * OutProj
//
// The direct scoring path and the graph path run the same kernels in the
// same order, so their log-probabilities agree bit for bit.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "repo/diff.hpp"
#include "repo/rng.hpp"
#include "repo/tasks.hpp"
#include "repo/types.hpp"

namespace repo::policy {

using diff::Tensor;
using tasks::PromptFeatures;

struct PolicyConfig {
  std::uint64_t vocab_size = 8;
  std::uint64_t max_output_len = 1;
  std::uint64_t prompt_feature_dim = 1;
  std::uint64_t embed_dim = 16;
  std::uint64_t hidden_dim = 0;
  double init_scale = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (vocab_size < 2) throw std::invalid_argument("policy.vocab_size must be >= 2");
    if (max_output_len < 1) throw std::invalid_argument("policy.max_output_len must be >= 1");
    if (prompt_feature_dim < 1) throw std::invalid_argument("policy.prompt_feature_dim must be >= 1");
    if (embed_dim < 1) throw std::invalid_argument("policy.embed_dim must be >= 1");
    if (!(init_scale > 0.0) || !std::isfinite(init_scale))
      throw std::invalid_argument("policy.init_scale must be > 0");
  }

  std::uint64_t output_input_dim() const { return hidden_dim ? hidden_dim : embed_dim; }

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

inline constexpr const char* kPromptEmbedding = "prompt_embedding";
inline constexpr const char* kTokenEmbedding = "token_embedding";
inline constexpr const char* kPositionEmbedding = "position_embedding";
inline constexpr const char* kHiddenWeight = "hidden_weight";
inline constexpr const char* kHiddenBias = "hidden_bias";
inline constexpr const char* kOutputProjection = "output_projection";

/// Parameter tensors of the policy. Also used for gradients and optimizer
/// moments, which share the layout.
struct PolicyParameters {
  struct Hidden {
    Tensor weight;  // [embed_dim x hidden_dim]
    Tensor bias;    // [1 x hidden_dim]
    friend bool operator==(const Hidden&, const Hidden&) = default;
  };

  PolicyConfig config;
  Tensor prompt_embedding;    // [prompt_feature_dim x embed_dim]
  Tensor token_embedding;     // [vocab_size x embed_dim]
  Tensor position_embedding;  // [max_output_len x embed_dim]
  std::optional<Hidden> hidden;
  Tensor output_projection;   // [(hidden_dim or embed_dim) x vocab_size]

  /// Visits tensors in declaration order with their names.
  template <typename F>
  void for_each(F&& f) {
    f(kPromptEmbedding, prompt_embedding);
    f(kTokenEmbedding, token_embedding);
    f(kPositionEmbedding, position_embedding);
    if (hidden) {
      f(kHiddenWeight, hidden->weight);
      f(kHiddenBias, hidden->bias);
    }
    f(kOutputProjection, output_projection);
  }
  template <typename F>
  void for_each(F&& f) const {
    const_cast<PolicyParameters&>(*this).for_each(
        [&](const char* name, Tensor& t) { f(name, static_cast<const Tensor&>(t)); });
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for_each([&](const char* n, const Tensor&) { out.emplace_back(n); });
    return out;
  }

  diff::Bindings bindings() const {
    diff::Bindings b;
    for_each([&](const char* n, const Tensor& t) { b.emplace(n, t); });
    return b;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&](const char*, const Tensor& t) { n += t.size(); });
    return n;
  }

  bool all_finite() const {
    bool ok = true;
    for_each([&](const char*, const Tensor& t) { ok = ok && t.all_finite(); });
    return ok;
  }

  friend bool operator==(const PolicyParameters&, const PolicyParameters&) = default;
};

/// Same layout and shapes, all entries zero.
inline PolicyParameters zeros_like(const PolicyParameters& p) {
  PolicyParameters z = p;
  z.for_each([](const char*, Tensor& t) { std::fill(t.values().begin(), t.values().end(), 0.0); });
  return z;
}

/// dst += scale * src
inline void axpy(PolicyParameters& dst, double scale, const PolicyParameters& src) {
  std::vector<const Tensor*> srcs;
  src.for_each([&](const char*, const Tensor& t) { srcs.push_back(&t); });
  std::size_t k = 0;
  dst.for_each([&](const char* name, Tensor& t) {
    const Tensor& s = *srcs.at(k++);
    if (s.shape() != t.shape()) throw diff::ShapeError(std::string("axpy shape mismatch on ") + name);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += scale * s[i];
  });
}

/// Adds a named gradient map into a parameter-shaped accumulator.
inline void accumulate(PolicyParameters& dst, const diff::GradientMap& grads, double scale = 1.0) {
  dst.for_each([&](const char* name, Tensor& t) {
    auto it = grads.find(name);
    if (it == grads.end()) return;
    for (std::size_t i = 0; i < t.size(); ++i) t[i] += scale * it->second[i];
  });
}

inline PolicyParameters init_policy(const PolicyConfig& config) {
  config.validate();
  RngStream rng(config.seed, {0x706f6c6963ULL});
  auto draw = [&](diff::Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(-config.init_scale, config.init_scale);
    return t;
  };
  PolicyParameters p;
  p.config = config;
  p.prompt_embedding = draw({config.prompt_feature_dim, config.embed_dim});
  p.token_embedding = draw({config.vocab_size, config.embed_dim});
  p.position_embedding = draw({config.max_output_len, config.embed_dim});
  if (config.hidden_dim) {
    PolicyParameters::Hidden h;
    h.weight = draw({config.embed_dim, config.hidden_dim});
    h.bias = draw({1, config.hidden_dim});
    p.hidden = std::move(h);
  }
  p.output_projection = draw({config.output_input_dim(), config.vocab_size});
  return p;
}

/// Per-token log pi(o_t | q, o_<t), one entry per generated token.
struct TokenLogProbs {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double total() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
  friend bool operator==(const TokenLogProbs&, const TokenLogProbs&) = default;
};

inline void check_output(const PolicyConfig& config, const PromptFeatures& prompt, const TokenSequence& output) {
  if (prompt.features.size() != config.prompt_feature_dim)
    throw std::invalid_argument("prompt " + std::to_string(prompt.prompt_id) + " has " +
                                std::to_string(prompt.features.size()) + " features, policy expects " +
                                std::to_string(config.prompt_feature_dim));
  if (output.size() > config.max_output_len)
    throw std::invalid_argument("output length " + std::to_string(output.size()) + " exceeds max_output_len " +
                                std::to_string(config.max_output_len));
  for (Token t : output)
    if (t >= config.vocab_size)
      throw std::out_of_range("token " + std::to_string(t) + " out of range for vocab_size " +
                              std::to_string(config.vocab_size));
}

/// Previous-token ids fed to each position.
inline std::vector<std::size_t> shifted_inputs(const TokenSequence& output) {
  std::vector<std::size_t> prev(output.size(), kEndOfSequence);
  for (std::size_t t = 1; t < output.size(); ++t) prev[t] = output[t - 1];
  return prev;
}

namespace detail {

inline Tensor prompt_row(const PromptFeatures& prompt) {
  return Tensor::matrix(1, prompt.features.size(), prompt.features);
}

/// Logits for the given positions and previous tokens, [len x vocab].
inline Tensor logits(const PolicyParameters& p, const Tensor& prompt_proj, std::span<const std::size_t> positions,
                     std::span<const std::size_t> prev) {
  namespace k = diff::kernels;
  Tensor x = k::broadcast_add(k::add(k::gather_rows(p.position_embedding, positions),
                                     k::gather_rows(p.token_embedding, prev)),
                              prompt_proj);
  if (p.hidden) x = k::tanh(k::broadcast_add(k::matmul(x, p.hidden->weight), p.hidden->bias));
  return k::matmul(x, p.output_projection);
}

}  // namespace detail

/// Exact per-token log-probabilities of `output` given `prompt`.
inline TokenLogProbs sequence_log_probs(const PolicyParameters& params, const PromptFeatures& prompt,
                                        const TokenSequence& output) {
  check_output(params.config, prompt, output);
  if (output.empty()) return {};
  std::vector<std::size_t> positions(output.size());
  for (std::size_t t = 0; t < positions.size(); ++t) positions[t] = t;
  const auto prev = shifted_inputs(output);
  const Tensor proj = diff::kernels::matmul(detail::prompt_row(prompt), params.prompt_embedding);
  const Tensor lp = diff::kernels::log_softmax_pick(detail::logits(params, proj, positions, prev),
                                                    std::span<const std::size_t>(output));
  return {lp.values()};
}

/// Full next-token log-distribution after a prefix.
inline std::vector<double> next_token_log_probs(const PolicyParameters& params, const PromptFeatures& prompt,
                                                const TokenSequence& prefix) {
  check_output(params.config, prompt, prefix);
  if (prefix.size() >= params.config.max_output_len)
    throw std::invalid_argument("prefix already at max_output_len");
  const Tensor proj = diff::kernels::matmul(detail::prompt_row(prompt), params.prompt_embedding);
  const std::size_t pos[1] = {prefix.size()};
  const std::size_t prev[1] = {prefix.empty() ? kEndOfSequence : prefix.back()};
  return diff::kernels::log_softmax(detail::logits(params, proj, pos, prev)).values();
}

struct SampledOutput {
  TokenSequence tokens;
  TokenLogProbs log_probs;
};

/// Draws tokens from softmax(logits / temperature) until end-of-sequence or
/// max_output_len. temperature == 0 decodes greedily (lowest id wins ties).
/// Returned log-probabilities are always those of the untempered policy.
inline SampledOutput sample_output(const PolicyParameters& params, const PromptFeatures& prompt,
                                   double temperature, RngStream& rng) {
  if (!(temperature >= 0.0) || !std::isfinite(temperature))
    throw std::invalid_argument("temperature must be finite and >= 0");
  check_output(params.config, prompt, {});
  const PolicyConfig& cfg = params.config;
  const Tensor proj = diff::kernels::matmul(detail::prompt_row(prompt), params.prompt_embedding);

  SampledOutput out;
  Token prev = kEndOfSequence;
  for (std::size_t t = 0; t < cfg.max_output_len; ++t) {
    const std::size_t pos[1] = {t};
    const std::size_t prv[1] = {prev};
    const Tensor logits = detail::logits(params, proj, pos, prv);
    const Tensor logp = diff::kernels::log_softmax(logits);

    Token chosen = 0;
    if (temperature == 0.0) {
      for (std::size_t v = 1; v < cfg.vocab_size; ++v)
        if (logits[v] > logits[chosen]) chosen = v;
    } else {
      Tensor scaled = logits;
      for (auto& v : scaled.values()) v /= temperature;
      const Tensor tlp = diff::kernels::log_softmax(scaled);
      const double u = rng.uniform();
      double cdf = 0.0;
      chosen = cfg.vocab_size - 1;
      for (std::size_t v = 0; v < cfg.vocab_size; ++v) {
        cdf += std::exp(tlp[v]);
        if (u < cdf) {
          chosen = v;
          break;
        }
      }
    }
    out.tokens.push_back(chosen);
    out.log_probs.values.push_back(logp[chosen]);
    if (chosen == kEndOfSequence) break;
    prev = chosen;
  }
  return out;
}

/// Greedy decoding.
inline TokenSequence decode_greedy(const PolicyParameters& params, const PromptFeatures& prompt) {
  RngStream unused(0);
  return sample_output(params, prompt, 0.0, unused).tokens;
}

/// Differentiable form of sequence_log_probs: the returned graph takes the
/// policy tensors as named inputs. Its root is the [T x 1] column of token
/// log-probabilities, or with `weighted`, the scalar sum_t w_t log p_t where
/// w is bound as input "token_weights" of shape [1 x T].
struct LogProbGraph {
  diff::Graph graph;
  diff::NodeId log_probs = 0;
  std::size_t length = 0;
};

inline constexpr const char* kTokenWeights = "token_weights";

inline LogProbGraph build_log_prob_graph(const PolicyConfig& config, const PromptFeatures& prompt,
                                         const TokenSequence& output, bool weighted = false) {
  check_output(config, prompt, output);
  if (output.empty()) throw std::invalid_argument("cannot build a log-prob graph for an empty output");
  LogProbGraph g;
  auto& gr = g.graph;
  g.length = output.size();
  const auto q = gr.constant(detail::prompt_row(prompt));
  const auto pe = gr.input(kPromptEmbedding, {config.prompt_feature_dim, config.embed_dim});
  const auto te = gr.input(kTokenEmbedding, {config.vocab_size, config.embed_dim});
  const auto pos = gr.input(kPositionEmbedding, {config.max_output_len, config.embed_dim});
  std::vector<std::size_t> positions(output.size());
  for (std::size_t t = 0; t < positions.size(); ++t) positions[t] = t;

  auto x = gr.broadcast_add(gr.add(gr.gather_rows(pos, positions), gr.gather_rows(te, shifted_inputs(output))),
                            gr.matmul(q, pe));
  if (config.hidden_dim) {
    const auto w = gr.input(kHiddenWeight, {config.embed_dim, config.hidden_dim});
    const auto b = gr.input(kHiddenBias, {1, config.hidden_dim});
    x = gr.tanh(gr.broadcast_add(gr.matmul(x, w), b));
  }
  const auto out = gr.input(kOutputProjection, {config.output_input_dim(), config.vocab_size});
  g.log_probs = gr.log_softmax_pick(gr.matmul(x, out), std::vector<std::size_t>(output.begin(), output.end()));
  if (weighted) {
    const auto w = gr.input(kTokenWeights, {1, output.size()});
    gr.sum(gr.matmul(w, g.log_probs));
  }
  return g;
}

/// d/dtheta sum_t w_t log pi(o_t | q, o_<t), accumulated into `grad` with `scale`.
inline void accumulate_weighted_log_prob_gradient(const PolicyParameters& params, const PromptFeatures& prompt,
                                                  const TokenSequence& output, const std::vector<double>& weights,
                                                  PolicyParameters& grad, double scale = 1.0) {
  if (weights.size() != output.size()) throw std::invalid_argument("one weight per token required");
  if (output.empty()) return;
  if (std::all_of(weights.begin(), weights.end(), [](double w) { return w == 0.0; })) return;
  const LogProbGraph g = build_log_prob_graph(params.config, prompt, output, /*weighted=*/true);
  diff::Bindings b = params.bindings();
  b.emplace(kTokenWeights, Tensor::matrix(1, weights.size(), weights));
  accumulate(grad, g.graph.gradient(b, params.names()), scale);
}

// Checkpoint file: "REPOCKPT", u32 version, u64 vocab/max_len/feature_dim/
// embed/hidden, f64 init_scale, u64 seed, then every tensor entry as a
// little-endian f64 in declaration order.

inline constexpr char kCheckpointMagic[8] = {'R', 'E', 'P', 'O', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void write_le(std::ostream& os, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(buf, sizeof(U));
}

template <typename T>
T read_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw std::runtime_error("checkpoint truncated");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const PolicyParameters& p) {
  os.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  detail::write_le(os, kCheckpointVersion);
  const auto& c = p.config;
  for (std::uint64_t v : {c.vocab_size, c.max_output_len, c.prompt_feature_dim, c.embed_dim, c.hidden_dim})
    detail::write_le(os, v);
  detail::write_le(os, c.init_scale);
  detail::write_le(os, c.seed);
  p.for_each([&](const char*, const Tensor& t) {
    for (double v : t.values()) detail::write_le(os, v);
  });
}

inline PolicyParameters read_checkpoint(std::istream& is) {
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("not a policy checkpoint (bad magic)");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  PolicyConfig c;
  c.vocab_size = detail::read_le<std::uint64_t>(is);
  c.max_output_len = detail::read_le<std::uint64_t>(is);
  c.prompt_feature_dim = detail::read_le<std::uint64_t>(is);
  c.embed_dim = detail::read_le<std::uint64_t>(is);
  c.hidden_dim = detail::read_le<std::uint64_t>(is);
  c.init_scale = detail::read_le<double>(is);
  c.seed = detail::read_le<std::uint64_t>(is);
  c.validate();
  PolicyParameters p = init_policy(c);
  p.for_each([&](const char*, Tensor& t) {
    for (auto& v : t.values()) v = detail::read_le<double>(is);
  });
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("trailing bytes after checkpoint");
  return p;
}

inline void save_checkpoint(const std::string& path, const PolicyParameters& p) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_checkpoint(os, p);
}

inline PolicyParameters load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path + "'");
  return read_checkpoint(is);
}

}  // namespace repo::policy
