#pragma once

#include "cotlab/vocab.hpp"

#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cotlab::cli {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitConfig = 2;    // ConfigError, InputError
inline constexpr int kExitIo = 3;        // IoError, BackendError
inline constexpr int kExitMismatch = 4;  // verify found differences

// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// One line per example, each token once: specials as <name>, normal ids as
// decimals, supervised positions suffixed with '*'. Lines start with a
// bracketed label; '#' lines are comments.
std::string annotate_tokens(std::span<const TokenId> tokens, std::span<const std::uint8_t> mask,
                            const Vocabulary& vocab);
// Recovers the token ids from an annotated view.
std::vector<TokenId> tokens_from_annotation(std::string_view text);

}  // namespace cotlab::cli
