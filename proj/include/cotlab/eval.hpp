#pragma once

#include "cotlab/sequence.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cotlab {

// K-1 rendered context examples followed by the query input segment.
struct EvalPrompt {
    std::uint64_t prompt_id = 0;
    std::vector<TokenId> context_tokens;
    std::vector<TokenId> query_segment;  // inp_start, x..., inp_end
    std::vector<TokenId> ground_truth_chain;
    SequenceMeta meta;

    // bos + context + query: what a backend sees before any forced token.
    std::vector<TokenId> tokens() const;
    bool operator==(const EvalPrompt&) const = default;
};

// Requires K >= 2 and every example rendered with CoT.
EvalPrompt make_eval_prompt(const Sequence& seq, const Vocabulary& vocab);

// Per context example: does it still carry a thinking segment?
std::vector<bool> context_cot_flags(const EvalPrompt& prompt, const Vocabulary& vocab);
std::uint32_t count_cot_context(const EvalPrompt& prompt, const Vocabulary& vocab);

// K' distinct CoT context examples, uniformly without replacement, from a
// stream derived from (seed, prompt_id). Indices are into the context.
std::vector<std::uint32_t> strip_selection(const EvalPrompt& prompt, std::uint32_t k_prime,
                                           std::uint64_t seed, const Vocabulary& vocab);
// Re-renders the listed context examples as standard examples.
EvalPrompt strip_selected(const EvalPrompt& prompt, std::span<const std::uint32_t> indices,
                          const Vocabulary& vocab);
EvalPrompt strip_cot(const EvalPrompt& prompt, std::uint32_t k_prime, std::uint64_t seed,
                     const Vocabulary& vocab);

enum class Strategy { force_think, force_answer, no_forcing };

std::string_view strategy_name(Strategy s) noexcept;
// Accepts think / answer / none and the full names.
Strategy parse_strategy(std::string_view text);

struct ForcingConfig {
    Strategy strategy = Strategy::force_think;
    // Cap on backend-generated tokens; unset means C + 6.
    std::optional<std::uint32_t> budget;
};

std::uint32_t effective_budget(const ForcingConfig& forcing, const EvalPrompt& prompt);

// Greedy single-step generation. The harness resends the full prefix on
// every call.
class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual TokenId next_token(std::span<const TokenId> prefix) = 0;
    // True if next_token may be called concurrently.
    virtual bool thread_safe() const noexcept { return false; }
};

// Returns the forced token (if any) followed by everything the backend
// produced, stopping after eos or when the budget is spent.
std::vector<TokenId> force_generate(GenerationBackend& backend, const EvalPrompt& prompt,
                                    const ForcingConfig& forcing);

// First (ans_start, t, ans_end) window; nullopt is a format failure.
std::optional<TokenId> extract_answer(std::span<const TokenId> generated);

// Tokens after the first think_start up to the next non-normal token.
std::vector<TokenId> extract_thinking(std::span<const TokenId> generated, const Vocabulary& vocab);

// Positional alignment against the C-1 ground-truth intermediates. Missing
// thoughts are wrong; a surplus marks the last intermediate wrong.
std::vector<bool> score_steps(std::span<const TokenId> thinking,
                              std::span<const TokenId> ground_truth_chain);

struct PromptRecord {
    std::uint64_t prompt_id = 0;
    std::optional<TokenId> predicted;
    bool indicator = false;
    std::vector<TokenId> generated;
    std::vector<bool> step_correct;
    std::vector<bool> step_in_dag;
    std::uint32_t cot_context = 0;
    std::optional<std::string> error;
};

struct EvalReport {
    Strategy strategy = Strategy::force_think;
    std::vector<PromptRecord> records;
    double accuracy = 0.0;
    std::uint64_t matched = 0;
    std::uint64_t format_failures = 0;
    std::uint64_t backend_failures = 0;
};

// Records come back in prompt order. Per-prompt backend failures are recorded
// and scored 0; BackendError is thrown only if every prompt fails. Prompts run
// on up to `workers` threads when the backend is thread-safe.
EvalReport evaluate(GenerationBackend& backend, std::span<const EvalPrompt> prompts,
                    const ForcingConfig& forcing, const Vocabulary& vocab, unsigned workers = 1);

// counts[answer_correct][step1_correct][step2_correct]; prompts with fewer
// than two intermediate steps land in `missing`.
struct StepGrid {
    std::array<std::array<std::array<std::uint64_t, 2>, 2>, 2> counts{};
    std::uint64_t missing = 0;
};

// counts[answer_correct][step_correct][step_in_dag] for one intermediate step;
// prompts without that step land in `missing`.
struct StepDagTable {
    std::uint32_t step = 0;
    std::array<std::array<std::array<std::uint64_t, 2>, 2>, 2> counts{};
    std::uint64_t missing = 0;
};

// Works on any record type with indicator, step_correct and step_in_dag.
template <typename Record>
StepGrid step_grid_of(std::span<const Record> records) {
    StepGrid g;
    for (const auto& rec : records) {
        if (rec.step_correct.size() < 2) {
            ++g.missing;
            continue;
        }
        ++g.counts[rec.indicator][rec.step_correct[0]][rec.step_correct[1]];
    }
    return g;
}

template <typename Record>
std::vector<StepDagTable> step_dag_breakdown_of(std::span<const Record> records) {
    std::size_t max_steps = 0;
    for (const auto& rec : records) max_steps = std::max(max_steps, rec.step_correct.size());
    std::vector<StepDagTable> tables(max_steps);
    for (std::size_t s = 0; s < max_steps; ++s) {
        auto& t = tables[s];
        t.step = static_cast<std::uint32_t>(s + 1);
        for (const auto& rec : records) {
            if (rec.step_correct.size() <= s || rec.step_in_dag.size() <= s) {
                ++t.missing;
                continue;
            }
            ++t.counts[rec.indicator][rec.step_correct[s]][rec.step_in_dag[s]];
        }
    }
    return tables;
}

inline StepGrid step_grid(const EvalReport& report) {
    return step_grid_of(std::span<const PromptRecord>(report.records));
}
inline std::vector<StepDagTable> step_dag_breakdown(const EvalReport& report) {
    return step_dag_breakdown_of(std::span<const PromptRecord>(report.records));
}

// {"step_grid": ..., "step_dag": [...]} with one cell object per count.
nlohmann::ordered_json step_tables_to_json(const StepGrid& grid,
                                           const std::vector<StepDagTable>& tables);

nlohmann::ordered_json eval_prompt_to_json(const EvalPrompt& prompt);
EvalPrompt eval_prompt_from_json(const nlohmann::json& j);
nlohmann::ordered_json report_to_json(const EvalReport& report, bool include_records = true);

}  // namespace cotlab
