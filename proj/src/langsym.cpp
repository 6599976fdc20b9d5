#include "cotlab/langsym.hpp"

#include "cotlab/errors.hpp"
#include "process.hpp"

#include <algorithm>
#include <cctype>
#include <regex>
#include <set>

namespace cotlab {

namespace {

void require_choices(const std::vector<std::uint32_t>& choices, const char* name) {
    if (choices.empty()) throw ConfigError(std::string("choice set '") + name + "' is empty");
    for (auto v : choices)
        if (v == 0) throw ConfigError(std::string("choice set '") + name + "' contains 0");
}

std::vector<std::uint32_t> choices_from_json(const nlohmann::json& j, const char* name) {
    try {
        if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return {j.get<std::uint32_t>()};
        return j.get<std::vector<std::uint32_t>>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(std::string("'") + name + "' must be a positive integer or a list of them");
    }
}

std::string lower(std::string s) {
    for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return s;
}

// Prompt-identity key for the oracle: every message before the final answer.
std::string messages_key(std::span<const ChatMessage> messages) {
    std::string key;
    for (const auto& m : messages) {
        key += m.role;
        key += '\x1f';
        key += m.content;
        key += '\x1e';
    }
    return key;
}

std::size_t example_count(const ChatPrompt& p) {
    if (p.messages.size() < 3 || p.messages.size() % 2 == 0 || p.messages[0].role != "system")
        throw InputError("prompt " + std::to_string(p.prompt_id) +
                         ": expected a system message followed by user/assistant pairs");
    const std::size_t k = (p.messages.size() - 1) / 2;
    if (p.meta.chains.size() != k || p.meta.cot_flags.size() != k)
        throw InputError("prompt " + std::to_string(p.prompt_id) + ": meta does not match messages");
    return k;
}

std::vector<bool> score_word_steps(std::span<const Word> steps, std::span<const Word> chain) {
    const std::size_t n = chain.empty() ? 0 : chain.size() - 1;
    std::vector<bool> correct(n, false);
    for (std::size_t i = 0; i < n && i < steps.size(); ++i) correct[i] = steps[i] == chain[i];
    if (steps.size() > n && n > 0) correct[n - 1] = false;
    return correct;
}

}  // namespace

bool is_word(std::string_view text) noexcept {
    return !text.empty() &&
           std::all_of(text.begin(), text.end(), [](char ch) { return ch >= 'a' && ch <= 'z'; });
}

Word random_word(std::uint32_t w, Xoshiro256& rng, bool distinct) {
    if (w == 0) throw InputError("word length must be >= 1");
    Word out(w, 'a');
    if (distinct) {
        if (w > 26) throw InputError("distinct-letter words are at most 26 letters long");
        const auto letters = sample_without_replacement(rng, 26, w);
        for (std::uint32_t i = 0; i < w; ++i) out[i] = static_cast<char>('a' + letters[i]);
    } else {
        for (auto& ch : out) ch = static_cast<char>('a' + uniform_index(rng, 26));
    }
    return out;
}

char shift_char(char c, int k) {
    if (c < 'a' || c > 'z') throw InputError(std::string("cannot shift non-letter '") + c + "'");
    return static_cast<char>('a' + (((c - 'a' + k) % 26) + 26) % 26);
}

Word string_transform(std::span<const Word> parents) {
    if (parents.empty()) throw InputError("string_transform needs at least one parent word");
    Word out;
    for (const auto& w : parents) {
        if (!is_word(w)) throw InputError("parent '" + w + "' is not a lowercase word");
        out.append(w, w.size() / 2);
    }
    for (auto& ch : out) ch = shift_char(ch, 1);
    return out;
}

void validate_templates(const ChatTemplates& t) {
    if (t.system_prompt.empty()) throw ConfigError("system_prompt is empty");
    if (t.question_template.empty()) throw ConfigError("question_template is empty");
    if (t.question_template.find("{inputs}") == std::string::npos)
        throw ConfigError("question_template has no {inputs} placeholder");
    if (t.think_open.empty()) throw ConfigError("think_open is empty");
    if (t.answer_marker.empty()) throw ConfigError("answer_marker is empty");
    for (const auto* text : {&t.system_prompt, &t.question_template}) {
        const auto low = lower(*text);
        for (const char* banned : {"slice", "half", "offset", "shift", "+1"})
            if (low.find(banned) != std::string::npos)
                throw ConfigError(std::string("task text must not mention '") + banned + "'");
    }
}

void LangSymConfig::validate() const {
    require_choices(n_choices, "n");
    require_choices(m_choices, "m");
    require_choices(c_choices, "c");
    if (k == 0) throw ConfigError("k must be >= 1");
    if (w < 2) throw ConfigError("w must be >= 2");
    if (distinct_chars && w > 26) throw ConfigError("distinct_chars needs w <= 26");
    if (t == 0) throw ConfigError("t must be >= 1");
    if (shard_size == 0) throw ConfigError("shard_size must be >= 1");
    if (think_budget == 0 || answer_budget == 0) throw ConfigError("budgets must be >= 1");
    validate_templates(templates);
}

std::uint64_t LangSymConfig::prompt_seed(std::uint64_t j) const noexcept {
    return derive_seed(master_seed, Stream::langsym_prompt, j);
}

nlohmann::ordered_json langsym_config_to_json(const LangSymConfig& cfg) {
    const auto& t = cfg.templates;
    return {{"n", cfg.n_choices},
            {"m", cfg.m_choices},
            {"c", cfg.c_choices},
            {"k", cfg.k},
            {"w", cfg.w},
            {"t", cfg.t},
            {"recipe", recipe_to_json(cfg.recipe)},
            {"master_seed", cfg.master_seed},
            {"distinct_chars", cfg.distinct_chars},
            {"shuffle", cfg.shuffle},
            {"shard_size", cfg.shard_size},
            {"think_budget", cfg.think_budget},
            {"answer_budget", cfg.answer_budget},
            {"templates",
             {{"system_prompt", t.system_prompt},
              {"question_template", t.question_template},
              {"input_separator", t.input_separator},
              {"think_open", t.think_open},
              {"think_close", t.think_close},
              {"answer_marker", t.answer_marker}}}};
}

LangSymConfig langsym_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("langsym config must be a JSON object");
    static const std::set<std::string> known = {
        "n",       "m",          "c",            "k",             "w",        "t",
        "recipe",  "master_seed", "distinct_chars", "shuffle",     "shard_size",
        "templates", "think_budget", "answer_budget"};
    static const std::set<std::string> known_templates = {
        "system_prompt", "question_template", "input_separator",
        "think_open",    "think_close",       "answer_marker"};
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw ConfigError("unknown langsym config key '" + key + "'");

    LangSymConfig cfg;
    try {
        if (j.contains("n")) cfg.n_choices = choices_from_json(j.at("n"), "n");
        if (j.contains("m")) cfg.m_choices = choices_from_json(j.at("m"), "m");
        if (j.contains("c")) cfg.c_choices = choices_from_json(j.at("c"), "c");
        if (j.contains("k")) cfg.k = j.at("k").get<std::uint32_t>();
        if (j.contains("w")) cfg.w = j.at("w").get<std::uint32_t>();
        if (j.contains("t")) cfg.t = j.at("t").get<std::uint64_t>();
        if (j.contains("recipe")) cfg.recipe = recipe_from_json(j.at("recipe"));
        if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
        if (j.contains("distinct_chars")) cfg.distinct_chars = j.at("distinct_chars").get<bool>();
        if (j.contains("shuffle")) cfg.shuffle = j.at("shuffle").get<bool>();
        if (j.contains("shard_size")) cfg.shard_size = j.at("shard_size").get<std::uint64_t>();
        if (j.contains("think_budget")) cfg.think_budget = j.at("think_budget").get<std::uint32_t>();
        if (j.contains("answer_budget"))
            cfg.answer_budget = j.at("answer_budget").get<std::uint32_t>();
        if (j.contains("templates")) {
            const auto& tj = j.at("templates");
            if (!tj.is_object()) throw ConfigError("templates must be an object");
            for (const auto& [key, _] : tj.items())
                if (!known_templates.contains(key))
                    throw ConfigError("unknown template key '" + key + "'");
            auto& t = cfg.templates;
            auto take = [&](const char* key, std::string& field) {
                if (tj.contains(key)) field = tj.at(key).get<std::string>();
            };
            take("system_prompt", t.system_prompt);
            take("question_template", t.question_template);
            take("input_separator", t.input_separator);
            take("think_open", t.think_open);
            take("think_close", t.think_close);
            take("answer_marker", t.answer_marker);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad langsym config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

std::string render_question(const ChatTemplates& t, std::span<const Word> inputs) {
    std::string joined;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (i > 0) joined += t.input_separator;
        joined += inputs[i];
    }
    std::string out = t.question_template;
    for (std::size_t pos = 0; (pos = out.find("{inputs}", pos)) != std::string::npos;) {
        out.replace(pos, 8, joined);
        pos += joined.size();
    }
    return out;
}

std::string render_answer(const ChatTemplates& t, std::span<const Word> chain, bool cot) {
    if (chain.empty()) throw InputError("render_answer: empty chain");
    std::string out;
    if (cot) {
        out += t.think_open;
        for (std::size_t i = 0; i + 1 < chain.size(); ++i)
            out += "Step " + std::to_string(i + 1) + ": " + chain[i] + "\n";
        out += t.think_close;
    }
    out += t.answer_marker;
    out += "\\boxed{" + chain.back() + "}";
    return out;
}

std::vector<Word> compute_word_chain(const Dag& dag, std::span<const Word> inputs) {
    if (inputs.size() != dag.n_inputs)
        throw InputError("compute_word_chain: expected " + std::to_string(dag.n_inputs) + " inputs");
    std::vector<Word> nodes(inputs.begin(), inputs.end());
    std::vector<Word> parents;
    for (const auto& ps : dag.parents) {
        parents.clear();
        for (auto idx : ps) parents.push_back(nodes[idx]);
        nodes.push_back(string_transform(parents));
    }
    return {nodes.begin() + dag.n_inputs, nodes.end()};
}

ChatPrompt generate_langsym_prompt(const LangSymConfig& cfg, std::uint64_t j) {
    if (j >= cfg.t)
        throw InputError("generate_langsym_prompt: index " + std::to_string(j) +
                         " must be < T = " + std::to_string(cfg.t));
    ChatPrompt p;
    p.prompt_id = j;
    auto& m = p.meta;
    m.seed = cfg.prompt_seed(j);
    Xoshiro256 rng(m.seed);
    m.n = cfg.n_choices[uniform_index(rng, cfg.n_choices.size())];
    m.m = cfg.m_choices[uniform_index(rng, cfg.m_choices.size())];
    m.c = cfg.c_choices[uniform_index(rng, cfg.c_choices.size())];
    m.k = cfg.k;
    m.w = cfg.w;
    m.dag = sample_dag(m.n, m.m, m.c, rng);
    m.r_cot = r_cot(cfg.recipe, j, cfg.t);

    p.messages.push_back({"system", cfg.templates.system_prompt});
    for (std::uint32_t i = 0; i < cfg.k; ++i) {
        std::vector<Word> nodes;
        for (std::uint32_t x = 0; x < m.n; ++x)
            nodes.push_back(random_word(cfg.w, rng, cfg.distinct_chars));
        const double u = uniform_open01(rng);
        auto chain = compute_word_chain(m.dag, nodes);
        std::vector<Word> inputs = std::move(nodes);
        const bool cot = m.r_cot >= u;
        p.messages.push_back({"user", render_question(cfg.templates, inputs)});
        p.messages.push_back({"assistant", render_answer(cfg.templates, chain, cot)});
        m.inputs.push_back(std::move(inputs));
        m.chains.push_back(std::move(chain));
        m.cot_flags.push_back(cot);
    }
    return p;
}

std::vector<std::uint64_t> langsym_output_order(const LangSymConfig& cfg) {
    if (cfg.shuffle) {
        Xoshiro256 rng(cfg.shuffle_seed());
        return random_permutation(rng, cfg.t);
    }
    std::vector<std::uint64_t> order(cfg.t);
    for (std::uint64_t i = 0; i < cfg.t; ++i) order[i] = i;
    return order;
}

void generate_langsym_dataset(const LangSymConfig& cfg,
                              const std::function<void(ChatPrompt&&)>& sink) {
    cfg.validate();
    for (std::uint64_t j : langsym_output_order(cfg)) sink(generate_langsym_prompt(cfg, j));
}

std::optional<Word> extract_langsym_answer(std::string_view text) {
    static constexpr std::string_view open = "\\boxed{";
    for (std::size_t pos = text.find(open); pos != std::string_view::npos;
         pos = text.find(open, pos + 1)) {
        const std::size_t start = pos + open.size();
        const std::size_t close = text.find('}', start);
        if (close == std::string_view::npos) break;
        const auto inner = text.substr(start, close - start);
        if (is_word(inner)) return Word(inner);
    }
    return std::nullopt;
}

std::vector<Word> extract_steps(std::string_view text) {
    static const std::regex step_re(R"(Step (\d+): ([a-z]+))");
    std::vector<Word> out;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), step_re); it != std::sregex_iterator();
         ++it) {
        const auto& match = *it;
        if (match[1].length() > 9 || std::stoul(match[1].str()) != out.size() + 1) break;
        out.push_back(match[2].str());
    }
    return out;
}

nlohmann::ordered_json chat_prompt_to_json(const ChatPrompt& p) {
    auto msgs = nlohmann::ordered_json::array();
    for (const auto& m : p.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    const auto& m = p.meta;
    return {{"prompt_id", p.prompt_id},
            {"messages", std::move(msgs)},
            {"meta",
             {{"n", m.n},
              {"m", m.m},
              {"c", m.c},
              {"k", m.k},
              {"w", m.w},
              {"r_cot", m.r_cot},
              {"dag", dag_to_json(m.dag)},
              {"inputs", m.inputs},
              {"chains", m.chains},
              {"cot_flags", m.cot_flags},
              {"seed", m.seed}}}};
}

ChatPrompt chat_prompt_from_json(const nlohmann::json& j) {
    ChatPrompt p;
    try {
        p.prompt_id = j.at("prompt_id").get<std::uint64_t>();
        for (const auto& mj : j.at("messages"))
            p.messages.push_back({mj.at("role").get<std::string>(), mj.at("content").get<std::string>()});
        const auto& mj = j.at("meta");
        auto& m = p.meta;
        m.n = mj.at("n").get<std::uint32_t>();
        m.m = mj.at("m").get<std::uint32_t>();
        m.c = mj.at("c").get<std::uint32_t>();
        m.k = mj.at("k").get<std::uint32_t>();
        m.w = mj.at("w").get<std::uint32_t>();
        m.r_cot = mj.at("r_cot").get<double>();
        m.dag = dag_from_json(mj.at("dag"));
        m.inputs = mj.at("inputs").get<std::vector<std::vector<Word>>>();
        m.chains = mj.at("chains").get<std::vector<std::vector<Word>>>();
        m.cot_flags = mj.at("cot_flags").get<std::vector<bool>>();
        if (mj.contains("seed")) m.seed = mj.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed langsym prompt: ") + e.what());
    }
    example_count(p);
    for (const auto& chain : p.meta.chains)
        if (chain.size() != p.meta.c) throw InputError("langsym prompt chain length differs from c");
    return p;
}

std::uint32_t count_cot_context(const ChatPrompt& p) {
    const std::size_t k = example_count(p);
    return static_cast<std::uint32_t>(
        std::count(p.meta.cot_flags.begin(), p.meta.cot_flags.begin() + (k - 1), true));
}

ChatPrompt strip_cot(const ChatPrompt& p, std::uint32_t k_prime, std::uint64_t seed,
                     const ChatTemplates& t) {
    const std::size_t k = example_count(p);
    std::vector<std::uint32_t> cot_idx;
    for (std::uint32_t i = 0; i + 1 < k; ++i)
        if (p.meta.cot_flags[i]) cot_idx.push_back(i);
    if (k_prime > cot_idx.size())
        throw InputError("K' = " + std::to_string(k_prime) + " exceeds the " +
                         std::to_string(cot_idx.size()) + " CoT context examples of prompt " +
                         std::to_string(p.prompt_id));
    if (k_prime == 0) return p;
    Xoshiro256 rng(derive_seed(seed, Stream::strip, p.prompt_id));
    ChatPrompt out = p;
    for (auto s : sample_without_replacement(rng, static_cast<std::uint32_t>(cot_idx.size()), k_prime)) {
        const auto i = cot_idx[s];
        out.messages[2 + 2 * i].content = render_answer(t, p.meta.chains[i], false);
        out.meta.cot_flags[i] = false;
    }
    return out;
}

std::vector<ChatMessage> langsym_eval_messages(const ChatPrompt& p, Strategy s,
                                               const ChatTemplates& t) {
    example_count(p);
    std::vector<ChatMessage> out(p.messages.begin(), p.messages.end() - 1);
    if (s == Strategy::force_think) out.push_back({"assistant", t.think_open});
    if (s == Strategy::force_answer) out.push_back({"assistant", t.answer_marker});
    return out;
}

OracleTextBackend::OracleTextBackend(std::span<const ChatPrompt> prompts, const ChatTemplates& t)
    : templates_(t) {
    for (const auto& p : prompts) {
        example_count(p);
        chains_[messages_key(std::span(p.messages).first(p.messages.size() - 1))] =
            p.meta.chains.back();
    }
}

std::string OracleTextBackend::complete(std::span<const ChatMessage> messages) {
    std::string prefix;
    if (!messages.empty() && messages.back().role == "assistant") {
        prefix = messages.back().content;
        messages = messages.first(messages.size() - 1);
    }
    const auto it = chains_.find(messages_key(messages));
    if (it == chains_.end()) throw BackendError("oracle has no completion for this prompt");
    const auto full = render_answer(templates_, it->second, true);
    if (full.compare(0, prefix.size(), prefix) == 0) return full.substr(prefix.size());
    if (prefix == templates_.answer_marker)
        return render_answer(templates_, it->second, false).substr(prefix.size());
    return {};
}

StdioTextBackend::StdioTextBackend(const std::string& command)
    : child_(std::make_unique<detail::ChildProcess>(command)) {}

StdioTextBackend::~StdioTextBackend() = default;

std::string StdioTextBackend::complete(std::span<const ChatMessage> messages) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    const std::string reply = child_->exchange(nlohmann::json{{"messages", msgs}}.dump());
    try {
        return nlohmann::json::parse(reply).at("completion").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("bad reply '" + reply.substr(0, 80) + "': " + e.what());
    }
}

LangSymReport evaluate_langsym(TextBackend& backend, std::span<const ChatPrompt> prompts,
                               Strategy strategy, std::optional<std::uint32_t> max_chars,
                               const LangSymConfig& cfg) {
    if (prompts.empty()) throw InputError("evaluate_langsym: no prompts");
    if (max_chars && *max_chars == 0) throw ConfigError("character budget must be >= 1");
    const std::uint32_t cap =
        max_chars.value_or(strategy == Strategy::force_answer ? cfg.answer_budget : cfg.think_budget);

    LangSymReport report;
    report.strategy = strategy;
    for (const auto& p : prompts) {
        LangSymRecord rec;
        rec.prompt_id = p.prompt_id;
        rec.cot_context = count_cot_context(p);
        rec.step_in_dag = steps_feeding_answer(p.meta.dag);
        const auto messages = langsym_eval_messages(p, strategy, cfg.templates);
        if (strategy != Strategy::no_forcing) rec.completion = messages.back().content;
        try {
            auto text = backend.complete(messages);
            if (text.size() > cap) text.resize(cap);
            rec.completion += text;
        } catch (const std::exception& e) {
            rec.error = "prompt " + std::to_string(p.prompt_id) + ": " + e.what();
        }
        const auto& chain = p.meta.chains.back();
        rec.predicted = extract_langsym_answer(rec.completion);
        rec.indicator = rec.predicted && *rec.predicted == chain.back();
        rec.step_correct = score_word_steps(extract_steps(rec.completion), chain);
        report.records.push_back(std::move(rec));
    }
    std::uint64_t hits = 0;
    for (const auto& rec : report.records) {
        if (rec.error) ++report.backend_failures;
        if (rec.predicted) ++report.matched;
        else ++report.format_failures;
        hits += rec.indicator ? 1 : 0;
    }
    if (report.backend_failures == prompts.size())
        throw BackendError("every prompt failed; first error: " + *report.records.front().error);
    report.accuracy = static_cast<double>(hits) / static_cast<double>(prompts.size());
    return report;
}

nlohmann::ordered_json langsym_report_to_json(const LangSymReport& r, bool include_records) {
    nlohmann::ordered_json j;
    j["strategy"] = strategy_name(r.strategy);
    j["prompts"] = r.records.size();
    j["accuracy"] = r.accuracy;
    j["matched"] = r.matched;
    j["format_failures"] = r.format_failures;
    j["backend_failures"] = r.backend_failures;
    const std::span<const LangSymRecord> recs(r.records);
    j.update(step_tables_to_json(step_grid_of(recs), step_dag_breakdown_of(recs)));
    if (include_records) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& rec : r.records) {
            nlohmann::ordered_json rj;
            rj["prompt_id"] = rec.prompt_id;
            rj["predicted"] = rec.predicted ? *rec.predicted : "FORMAT_FAILURE";
            rj["indicator"] = rec.indicator ? 1 : 0;
            rj["completion"] = rec.completion;
            rj["step_correct"] = rec.step_correct;
            rj["step_in_dag"] = rec.step_in_dag;
            rj["cot_context"] = rec.cot_context;
            if (rec.error) rj["error"] = *rec.error;
            arr.push_back(std::move(rj));
        }
        j["records"] = std::move(arr);
    }
    return j;
}

}  // namespace cotlab
