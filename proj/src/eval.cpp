#include "cotlab/eval.hpp"

#include "cotlab/errors.hpp"
#include "cotlab/rng.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

namespace cotlab {

namespace {

std::vector<ParsedExample> parse_context(const EvalPrompt& prompt, const Vocabulary& vocab) {
    std::vector<ParsedExample> out;
    std::size_t pos = 0;
    while (pos < prompt.context_tokens.size())
        out.push_back(parse_example(prompt.context_tokens, pos, vocab));
    return out;
}

std::vector<TokenId> full_chain(const ParsedExample& ex) {
    std::vector<TokenId> chain = ex.thoughts;
    chain.push_back(ex.answer);
    return chain;
}

nlohmann::ordered_json cube_to_json(
    const std::array<std::array<std::array<std::uint64_t, 2>, 2>, 2>& c, const char* second,
    const char* third) {
    nlohmann::ordered_json out = nlohmann::ordered_json::array();
    for (int a = 1; a >= 0; --a)
        for (int s = 1; s >= 0; --s)
            for (int t = 1; t >= 0; --t)
                out.push_back({{"answer_correct", a == 1},
                               {second, s == 1},
                               {third, t == 1},
                               {"count", c[a][s][t]}});
    return out;
}

}  // namespace

std::vector<TokenId> EvalPrompt::tokens() const {
    std::vector<TokenId> out;
    out.reserve(1 + context_tokens.size() + query_segment.size());
    out.push_back(id_of(Special::bos));
    out.insert(out.end(), context_tokens.begin(), context_tokens.end());
    out.insert(out.end(), query_segment.begin(), query_segment.end());
    return out;
}

EvalPrompt make_eval_prompt(const Sequence& seq, const Vocabulary& vocab) {
    const auto examples = parse_sequence(seq.tokens, vocab);
    if (examples.size() < 2)
        throw InputError("eval prompt needs K >= 2 examples, sequence " +
                         std::to_string(seq.seq_id) + " has " + std::to_string(examples.size()));
    for (const auto& ex : examples)
        if (!ex.is_cot)
            throw InputError("sequence " + std::to_string(seq.seq_id) +
                             " is not rendered entirely with CoT examples");

    EvalPrompt p;
    p.prompt_id = seq.seq_id;
    p.meta = seq.meta;
    std::vector<std::uint8_t> mask;
    for (std::size_t i = 0; i + 1 < examples.size(); ++i)
        append_example(p.context_tokens, mask, examples[i].inputs, full_chain(examples[i]), true,
                       vocab);
    const auto& query = examples.back();
    p.query_segment.push_back(id_of(Special::inp_start));
    p.query_segment.insert(p.query_segment.end(), query.inputs.begin(), query.inputs.end());
    p.query_segment.push_back(id_of(Special::inp_end));
    p.ground_truth_chain = full_chain(query);
    return p;
}

std::vector<bool> context_cot_flags(const EvalPrompt& prompt, const Vocabulary& vocab) {
    std::vector<bool> flags;
    for (const auto& ex : parse_context(prompt, vocab)) flags.push_back(ex.is_cot);
    return flags;
}

std::uint32_t count_cot_context(const EvalPrompt& prompt, const Vocabulary& vocab) {
    const auto flags = context_cot_flags(prompt, vocab);
    return static_cast<std::uint32_t>(std::count(flags.begin(), flags.end(), true));
}

std::vector<std::uint32_t> strip_selection(const EvalPrompt& prompt, std::uint32_t k_prime,
                                           std::uint64_t seed, const Vocabulary& vocab) {
    const auto flags = context_cot_flags(prompt, vocab);
    std::vector<std::uint32_t> cot_idx;
    for (std::uint32_t i = 0; i < flags.size(); ++i)
        if (flags[i]) cot_idx.push_back(i);
    if (k_prime > cot_idx.size())
        throw InputError("K' = " + std::to_string(k_prime) + " exceeds the " +
                         std::to_string(cot_idx.size()) + " CoT context examples of prompt " +
                         std::to_string(prompt.prompt_id));
    Xoshiro256 rng(derive_seed(seed, Stream::strip, prompt.prompt_id));
    std::vector<std::uint32_t> picked;
    for (auto i : sample_without_replacement(rng, static_cast<std::uint32_t>(cot_idx.size()), k_prime))
        picked.push_back(cot_idx[i]);
    std::sort(picked.begin(), picked.end());
    return picked;
}

EvalPrompt strip_selected(const EvalPrompt& prompt, std::span<const std::uint32_t> indices,
                          const Vocabulary& vocab) {
    const auto examples = parse_context(prompt, vocab);
    std::vector<bool> strip(examples.size(), false);
    for (auto i : indices) {
        if (i >= examples.size())
            throw InputError("strip index " + std::to_string(i) + " is outside the context");
        strip[i] = true;
    }
    EvalPrompt out = prompt;
    out.context_tokens.clear();
    std::vector<std::uint8_t> mask;
    for (std::size_t i = 0; i < examples.size(); ++i)
        append_example(out.context_tokens, mask, examples[i].inputs, full_chain(examples[i]),
                       examples[i].is_cot && !strip[i], vocab);
    return out;
}

EvalPrompt strip_cot(const EvalPrompt& prompt, std::uint32_t k_prime, std::uint64_t seed,
                     const Vocabulary& vocab) {
    if (k_prime == 0) {
        // Still validates the context.
        parse_context(prompt, vocab);
        return prompt;
    }
    return strip_selected(prompt, strip_selection(prompt, k_prime, seed, vocab), vocab);
}

std::string_view strategy_name(Strategy s) noexcept {
    switch (s) {
        case Strategy::force_think: return "force_think";
        case Strategy::force_answer: return "force_answer";
        case Strategy::no_forcing: return "no_forcing";
    }
    return "?";
}

Strategy parse_strategy(std::string_view text) {
    if (text == "think" || text == "force_think") return Strategy::force_think;
    if (text == "answer" || text == "force_answer") return Strategy::force_answer;
    if (text == "none" || text == "no_forcing") return Strategy::no_forcing;
    throw ConfigError("unknown forcing strategy '" + std::string(text) +
                      "' (expected think, answer or none)");
}

std::uint32_t effective_budget(const ForcingConfig& forcing, const EvalPrompt& prompt) {
    if (forcing.budget) {
        if (*forcing.budget == 0) throw ConfigError("generation budget must be >= 1");
        return *forcing.budget;
    }
    return static_cast<std::uint32_t>(prompt.ground_truth_chain.size()) + 6;
}

std::vector<TokenId> force_generate(GenerationBackend& backend, const EvalPrompt& prompt,
                                    const ForcingConfig& forcing) {
    const std::uint32_t budget = effective_budget(forcing, prompt);
    auto prefix = prompt.tokens();
    std::vector<TokenId> out;
    out.reserve(budget + 1);
    if (forcing.strategy != Strategy::no_forcing) {
        const TokenId forced = id_of(forcing.strategy == Strategy::force_think ? Special::think_start
                                                                                : Special::ans_start);
        prefix.push_back(forced);
        out.push_back(forced);
    }
    for (std::uint32_t i = 0; i < budget; ++i) {
        TokenId t;
        try {
            t = backend.next_token(prefix);
        } catch (const std::exception& e) {
            throw BackendError("prompt " + std::to_string(prompt.prompt_id) + ": " + e.what());
        }
        prefix.push_back(t);
        out.push_back(t);
        if (t == id_of(Special::eos)) break;
    }
    return out;
}

std::optional<TokenId> extract_answer(std::span<const TokenId> generated) {
    for (std::size_t i = 0; i + 2 < generated.size(); ++i)
        if (generated[i] == id_of(Special::ans_start) && generated[i + 2] == id_of(Special::ans_end))
            return generated[i + 1];
    return std::nullopt;
}

std::vector<TokenId> extract_thinking(std::span<const TokenId> generated, const Vocabulary& vocab) {
    std::vector<TokenId> out;
    auto it = std::find(generated.begin(), generated.end(), id_of(Special::think_start));
    if (it == generated.end()) return out;
    for (++it; it != generated.end() && vocab.is_normal(*it); ++it) out.push_back(*it);
    return out;
}

std::vector<bool> score_steps(std::span<const TokenId> thinking,
                              std::span<const TokenId> ground_truth_chain) {
    const std::size_t steps = ground_truth_chain.empty() ? 0 : ground_truth_chain.size() - 1;
    std::vector<bool> correct(steps, false);
    for (std::size_t i = 0; i < steps && i < thinking.size(); ++i)
        correct[i] = thinking[i] == ground_truth_chain[i];
    if (thinking.size() > steps && steps > 0) correct[steps - 1] = false;
    return correct;
}

EvalReport evaluate(GenerationBackend& backend, std::span<const EvalPrompt> prompts,
                    const ForcingConfig& forcing, const Vocabulary& vocab, unsigned workers) {
    if (prompts.empty()) throw InputError("evaluate: no prompts");
    EvalReport report;
    report.strategy = forcing.strategy;
    report.records.resize(prompts.size());

    auto run_one = [&](std::size_t i) {
        const auto& p = prompts[i];
        auto& rec = report.records[i];
        rec.prompt_id = p.prompt_id;
        rec.cot_context = count_cot_context(p, vocab);
        rec.step_in_dag = steps_feeding_answer(p.meta.dag);
        try {
            rec.generated = force_generate(backend, p, forcing);
        } catch (const BackendError& e) {
            rec.error = e.what();
        }
        rec.predicted = extract_answer(rec.generated);
        rec.indicator = rec.predicted && *rec.predicted == p.ground_truth_chain.back();
        rec.step_correct = score_steps(extract_thinking(rec.generated, vocab), p.ground_truth_chain);
    };

    const unsigned threads =
        backend.thread_safe() ? std::max(1U, std::min<unsigned>(workers, prompts.size())) : 1U;
    if (threads == 1) {
        for (std::size_t i = 0; i < prompts.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        std::exception_ptr failure;
        std::atomic<bool> failed{false};
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t i; (i = next.fetch_add(1)) < prompts.size();) {
                    try {
                        run_one(i);
                    } catch (...) {
                        if (!failed.exchange(true)) failure = std::current_exception();
                        return;
                    }
                }
            });
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    for (const auto& rec : report.records) {
        if (rec.error) ++report.backend_failures;
        if (rec.predicted) ++report.matched;
        else ++report.format_failures;
    }
    if (report.backend_failures == prompts.size())
        throw BackendError("every prompt failed; first error: " + *report.records.front().error);
    std::uint64_t hits = 0;
    for (const auto& rec : report.records) hits += rec.indicator ? 1 : 0;
    report.accuracy = static_cast<double>(hits) / static_cast<double>(prompts.size());
    return report;
}

nlohmann::ordered_json step_tables_to_json(const StepGrid& grid,
                                           const std::vector<StepDagTable>& tables) {
    nlohmann::ordered_json j;
    j["step_grid"] = {{"cells", cube_to_json(grid.counts, "step1_correct", "step2_correct")},
                      {"missing", grid.missing}};
    auto arr = nlohmann::ordered_json::array();
    for (const auto& t : tables)
        arr.push_back({{"step", t.step},
                       {"cells", cube_to_json(t.counts, "step_correct", "in_dag")},
                       {"missing", t.missing}});
    j["step_dag"] = std::move(arr);
    return j;
}

nlohmann::ordered_json eval_prompt_to_json(const EvalPrompt& prompt) {
    return {{"prompt_id", prompt.prompt_id},
            {"context_tokens", prompt.context_tokens},
            {"query_segment", prompt.query_segment},
            {"ground_truth_chain", prompt.ground_truth_chain},
            {"meta", meta_to_json(prompt.meta)}};
}

EvalPrompt eval_prompt_from_json(const nlohmann::json& j) {
    EvalPrompt p;
    try {
        p.prompt_id = j.at("prompt_id").get<std::uint64_t>();
        p.context_tokens = j.at("context_tokens").get<std::vector<TokenId>>();
        p.query_segment = j.at("query_segment").get<std::vector<TokenId>>();
        p.ground_truth_chain = j.at("ground_truth_chain").get<std::vector<TokenId>>();
        p.meta = meta_from_json(j.at("meta"));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed eval prompt: ") + e.what());
    }
    if (p.ground_truth_chain.empty()) throw InputError("eval prompt has an empty ground truth");
    return p;
}

nlohmann::ordered_json report_to_json(const EvalReport& report, bool include_records) {
    nlohmann::ordered_json j;
    j["strategy"] = strategy_name(report.strategy);
    j["prompts"] = report.records.size();
    j["accuracy"] = report.accuracy;
    j["matched"] = report.matched;
    j["format_failures"] = report.format_failures;
    j["backend_failures"] = report.backend_failures;

    j.update(step_tables_to_json(step_grid(report), step_dag_breakdown(report)));

    if (include_records) {
        auto recs = nlohmann::ordered_json::array();
        for (const auto& r : report.records) {
            nlohmann::ordered_json rj;
            rj["prompt_id"] = r.prompt_id;
            rj["predicted"] = r.predicted ? nlohmann::ordered_json(*r.predicted)
                                          : nlohmann::ordered_json("FORMAT_FAILURE");
            rj["indicator"] = r.indicator ? 1 : 0;
            rj["generated"] = r.generated;
            rj["step_correct"] = r.step_correct;
            rj["step_in_dag"] = r.step_in_dag;
            rj["cot_context"] = r.cot_context;
            if (r.error) rj["error"] = *r.error;
            recs.push_back(std::move(rj));
        }
        j["records"] = std::move(recs);
    }
    return j;
}

}  // namespace cotlab
