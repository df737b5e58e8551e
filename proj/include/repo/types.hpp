#pragma once

#include <cstddef>
#include <vector>

namespace repo {

using Token = std::size_t;
using TokenSequence = std::vector<Token>;

/// Token id 0 terminates an output. It doubles as the start symbol fed to
/// the first decoding position.
inline constexpr Token kEndOfSequence = 0;

/// Strips everything from the first end-of-sequence token on.
inline TokenSequence truncate_at_eos(const TokenSequence& tokens) {
  TokenSequence out;
  for (Token t : tokens) {
    if (t == kEndOfSequence) break;
    out.push_back(t);
  }
  return out;
}

}  // namespace repo
