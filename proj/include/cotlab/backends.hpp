#pragma once

#include "cotlab/eval.hpp"

#include <memory>
#include <string>
#include <unordered_map>

namespace cotlab {

namespace detail {
class ChildProcess;
}

// Replays the ground-truth CoT completion of every prompt it was built from.
// Under force_answer it continues with the answer tail instead.
class OracleBackend final : public GenerationBackend {
public:
    explicit OracleBackend(std::span<const EvalPrompt> prompts);
    TokenId next_token(std::span<const TokenId> prefix) override;
    bool thread_safe() const noexcept override { return true; }

private:
    std::unordered_map<std::string, std::vector<TokenId>> completions_;
};

// Always well-formed, never thinks, and picks the answer token uniformly from
// the normal ids by hashing the prefix with `seed`.
class RandomBackend final : public GenerationBackend {
public:
    RandomBackend(const Vocabulary& vocab, std::uint64_t seed) : vocab_(vocab), seed_(seed) {}
    TokenId next_token(std::span<const TokenId> prefix) override;
    bool thread_safe() const noexcept override { return true; }

private:
    Vocabulary vocab_;
    std::uint64_t seed_;
};

// Talks to an external process over stdin/stdout, one JSON object per line:
// the harness writes {"tokens":[...]} and expects {"next": id} back.
class StdioBackend final : public GenerationBackend {
public:
    explicit StdioBackend(const std::string& command);
    ~StdioBackend() override;
    TokenId next_token(std::span<const TokenId> prefix) override;

private:
    std::unique_ptr<detail::ChildProcess> child_;
};

}  // namespace cotlab
