#pragma once

#include "cotlab/dag.hpp"
#include "cotlab/eval.hpp"
#include "cotlab/recipe.hpp"
#include "cotlab/rng.hpp"

#include <json.hpp>

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cotlab {

namespace detail {
class ChildProcess;
}

// Lowercase ASCII, non-empty.
using Word = std::string;

bool is_word(std::string_view text) noexcept;

// W letters, i.i.d. by default; `distinct` draws without replacement (W <= 26).
Word random_word(std::uint32_t w, Xoshiro256& rng, bool distinct = false);

// Moves a lowercase letter `k` places forward, wrapping z to a.
char shift_char(char c, int k = 1);

// Tail of each parent from floor(len/2), concatenated in parent order, each
// letter shifted forward by one.
Word string_transform(std::span<const Word> parents);

struct ChatTemplates {
    std::string system_prompt =
        "You are given examples of a puzzle. Each question lists some input words, and a fixed "
        "hidden rule turns them into a final answer word. Some examples show intermediate steps "
        "before the final answer. Work out the rule from the examples and answer the last "
        "question in the same format.";
    // {inputs} is replaced by the input words joined with input_separator.
    std::string question_template = "Input words: {inputs}\nWhat is the final answer?";
    std::string input_separator = ", ";
    std::string think_open = "<|im_start|>think\n";
    std::string think_close;
    std::string answer_marker = "<|im_start|>final answer\n";
};

// Non-empty fields, a {inputs} placeholder, and no wording that gives the
// transform away. Throws ConfigError.
void validate_templates(const ChatTemplates& t);

struct LangSymConfig {
    std::vector<std::uint32_t> n_choices{4};
    std::vector<std::uint32_t> m_choices{2};
    std::vector<std::uint32_t> c_choices{3};
    std::uint32_t k = 40;
    std::uint32_t w = 8;
    std::uint64_t t = 1000;
    Recipe recipe;
    std::uint64_t master_seed = 0;
    bool distinct_chars = false;
    bool shuffle = false;
    std::uint64_t shard_size = 10000;
    ChatTemplates templates;
    // Character caps for eval completions.
    std::uint32_t think_budget = 1000;
    std::uint32_t answer_budget = 100;

    void validate() const;
    std::uint64_t prompt_seed(std::uint64_t j) const noexcept;
    std::uint64_t shuffle_seed() const noexcept { return master_seed + 1; }
};

nlohmann::ordered_json langsym_config_to_json(const LangSymConfig& cfg);
LangSymConfig langsym_config_from_json(const nlohmann::json& j);

struct ChatMessage {
    std::string role;
    std::string content;
    bool operator==(const ChatMessage&) const = default;
};

struct LangSymMeta {
    std::uint32_t n = 0, m = 0, c = 0, k = 0, w = 0;
    double r_cot = 0.0;
    Dag dag;
    std::vector<std::vector<Word>> inputs;  // per example
    std::vector<std::vector<Word>> chains;  // per example, C words
    std::vector<bool> cot_flags;
    std::uint64_t seed = 0;
    bool operator==(const LangSymMeta&) const = default;
};

// system, then K (user, assistant) pairs.
struct ChatPrompt {
    std::uint64_t prompt_id = 0;
    std::vector<ChatMessage> messages;
    LangSymMeta meta;
    bool operator==(const ChatPrompt&) const = default;
};

std::string render_question(const ChatTemplates& t, std::span<const Word> inputs);
std::string render_answer(const ChatTemplates& t, std::span<const Word> chain, bool cot);

// The C chain words for one input vector.
std::vector<Word> compute_word_chain(const Dag& dag, std::span<const Word> inputs);

// Draw order from the stream seeded with cfg.prompt_seed(j): N, M, C choice
// indices; DAG parents; then per example its N words letter by letter,
// followed by u.
ChatPrompt generate_langsym_prompt(const LangSymConfig& cfg, std::uint64_t j);
std::vector<std::uint64_t> langsym_output_order(const LangSymConfig& cfg);
void generate_langsym_dataset(const LangSymConfig& cfg,
                              const std::function<void(ChatPrompt&&)>& sink);

// First \boxed{...} whose contents are a word.
std::optional<Word> extract_langsym_answer(std::string_view text);
// "Step i: word" matches for i = 1, 2, ... until the numbering breaks.
std::vector<Word> extract_steps(std::string_view text);

nlohmann::ordered_json chat_prompt_to_json(const ChatPrompt& p);
ChatPrompt chat_prompt_from_json(const nlohmann::json& j);

// ---- evaluation ----

// Context assistant turns currently carrying steps.
std::uint32_t count_cot_context(const ChatPrompt& p);
// Re-renders K' CoT context examples (all but the last) as standard ones,
// chosen uniformly without replacement from a stream derived from
// (seed, prompt_id).
ChatPrompt strip_cot(const ChatPrompt& p, std::uint32_t k_prime, std::uint64_t seed,
                     const ChatTemplates& t);

class TextBackend {
public:
    virtual ~TextBackend() = default;
    // The last message may be a partial assistant turn to continue.
    virtual std::string complete(std::span<const ChatMessage> messages) = 0;
};

// Continues with the ground-truth CoT answer of the prompts it was built from.
class OracleTextBackend final : public TextBackend {
public:
    OracleTextBackend(std::span<const ChatPrompt> prompts, const ChatTemplates& t);
    std::string complete(std::span<const ChatMessage> messages) override;

private:
    std::unordered_map<std::string, std::vector<Word>> chains_;
    ChatTemplates templates_;
};

// External process: writes {"messages":[...]} lines, reads {"completion": "..."}.
class StdioTextBackend final : public TextBackend {
public:
    explicit StdioTextBackend(const std::string& command);
    ~StdioTextBackend() override;
    std::string complete(std::span<const ChatMessage> messages) override;

private:
    std::unique_ptr<detail::ChildProcess> child_;
};

// Messages sent for the final example: everything up to and including the
// last user turn, plus a partial assistant turn holding the forced marker.
std::vector<ChatMessage> langsym_eval_messages(const ChatPrompt& p, Strategy s,
                                               const ChatTemplates& t);

struct LangSymRecord {
    std::uint64_t prompt_id = 0;
    std::optional<Word> predicted;
    bool indicator = false;
    std::string completion;  // forced marker + capped backend text
    std::vector<bool> step_correct;
    std::vector<bool> step_in_dag;
    std::uint32_t cot_context = 0;
    std::optional<std::string> error;
};

struct LangSymReport {
    Strategy strategy = Strategy::force_think;
    std::vector<LangSymRecord> records;
    double accuracy = 0.0;
    std::uint64_t matched = 0;
    std::uint64_t format_failures = 0;
    std::uint64_t backend_failures = 0;
};

// `max_chars` unset means think_budget, or answer_budget under force_answer.
LangSymReport evaluate_langsym(TextBackend& backend, std::span<const ChatPrompt> prompts,
                               Strategy strategy, std::optional<std::uint32_t> max_chars,
                               const LangSymConfig& cfg);

nlohmann::ordered_json langsym_report_to_json(const LangSymReport& r, bool include_records = true);

}  // namespace cotlab
