#include "cotlab/cli.hpp"

#include "cotlab/backends.hpp"
#include "cotlab/dataset.hpp"
#include "cotlab/errors.hpp"
#include "cotlab/eval.hpp"
#include "cotlab/langsym.hpp"
#include "cotlab/recipe.hpp"
#include "cotlab/sequence.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

namespace cotlab::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

nlohmann::json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void write_json_file(const std::string& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

// "a.b.c=value"; the value is parsed as JSON when possible, else kept as a string.
void apply_override(nlohmann::json& cfg, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("--set expects key=value, got '" + assignment + "'");
    const auto key = assignment.substr(0, eq);
    const auto text = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception&) {
        value = text;
    }
    nlohmann::json* node = &cfg;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const auto part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("bad override key '" + key + "'");
        if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        if (node->is_null()) *node = nlohmann::json::object();
        start = dot + 1;
    }
}

std::uint64_t fresh_seed() {
    std::random_device rd;
    return (std::uint64_t{rd()} << 32) ^ rd();
}

// Flag wins, then the config; otherwise a fresh seed is drawn and reported.
std::uint64_t resolve_seed(nlohmann::json& cfg, const char* key, const CLI::App& app,
                           std::uint64_t flag, std::ostream& err) {
    if (app.count("--seed") > 0) cfg[key] = flag;
    if (!cfg.contains(key)) {
        cfg[key] = fresh_seed();
        err << "note: no seed given, using " << cfg[key].get<std::uint64_t>()
            << " (recorded in the manifest)\n";
    }
    return cfg[key].get<std::uint64_t>();
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

void print_rows(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& rows) {
    std::size_t width = 0;
    for (const auto& [k, _] : rows) width = std::max(width, k.size());
    for (const auto& [k, v] : rows) out << std::left << std::setw(static_cast<int>(width) + 2) << k << v << '\n';
}

// ---- options ----

struct GenOptions {
    std::string config_path;
    std::string out_dir;
    unsigned workers = 1;
    std::uint64_t seed = 0;
    std::uint64_t t = 0;
    std::uint32_t k = 0;
    std::uint32_t w = 0;
    std::uint64_t shard_size = 0;
    std::string alpha;
    std::vector<std::string> overrides;
};

struct StripOptions {
    std::string in_dir, out_dir;
    std::uint32_t k_prime = 0;
    std::uint64_t seed = 0;
};

struct EvalOptions {
    std::string prompts_dir;
    std::string backend = "oracle";
    std::string command;
    std::string strategy = "think";
    std::uint32_t budget = 0;
    std::string report_path;
    unsigned workers = 1;
    std::uint64_t seed = 0;
    bool no_records = false;
};

struct BudgetOptions {
    std::string alpha = "1";
    double a = 1.0, b = 0.0;
    std::uint64_t n = 4, c = 4, k = 40, t = 1000;
    std::string format = "both";
};

struct InspectOptions {
    std::string in_dir;
    std::uint64_t index = 0;
    bool raw = false;
};

struct VerifyOptions {
    std::string dir;
    std::uint64_t sample = 0;
    std::uint64_t seed = 0;
    unsigned workers = 1;
};

void add_gen_options(CLI::App* sub, GenOptions& o, bool langsym) {
    sub->add_option("--config", o.config_path, "JSON config file; flags override it");
    sub->add_option("--out", o.out_dir, "Output directory")->required();
    sub->add_option("--workers", o.workers, "Parallel shard writers")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "master_seed");
    sub->add_option("--t", o.t, "Number of sequences");
    sub->add_option("--k", o.k, "Examples per sequence");
    sub->add_option("--alpha", o.alpha, "Recipe exponent (number or inf)");
    sub->add_option("--shard-size", o.shard_size, "Records per shard file");
    sub->add_flag("--shuffle", "Shuffle output order");
    if (langsym) {
        sub->add_option("--w", o.w, "Word length");
        sub->add_flag("--distinct-chars", "Draw word letters without replacement");
    }
    sub->add_option("--set", o.overrides, "key=value override, dotted keys reach nested fields");
}

nlohmann::json gen_config(const CLI::App& sub, const GenOptions& o, bool langsym,
                          std::ostream& err) {
    nlohmann::json cfg = o.config_path.empty() ? nlohmann::json::object() : load_json_file(o.config_path);
    if (!cfg.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& a : o.overrides) apply_override(cfg, a);
    if (sub.count("--t")) cfg["t"] = o.t;
    if (sub.count("--k")) cfg["k"] = o.k;
    if (sub.count("--shard-size")) cfg["shard_size"] = o.shard_size;
    if (sub.count("--shuffle")) cfg["shuffle"] = true;
    if (sub.count("--alpha")) {
        if (!cfg.contains("recipe") || !cfg["recipe"].is_object()) cfg["recipe"] = nlohmann::json::object();
        cfg["recipe"]["alpha"] = o.alpha;
    }
    if (langsym) {
        if (sub.count("--w")) cfg["w"] = o.w;
        if (sub.count("--distinct-chars")) cfg["distinct_chars"] = true;
    }
    resolve_seed(cfg, "master_seed", sub, o.seed, err);
    return cfg;
}

void print_manifest_summary(std::ostream& out, const Manifest& m, const std::string& dir) {
    std::uint64_t shards = 0;
    for (const auto& f : m.outputs) shards += f.path.starts_with("shard-") ? 1 : 0;
    print_rows(out, {{"kind", std::string(kind_name(m.spec.kind))},
                     {"directory", dir},
                     {"records", std::to_string(m.records)},
                     {"shards", std::to_string(shards)},
                     {"master_seed", m.spec.config.at("master_seed").dump()},
                     {"seconds", fixed(m.wall_clock_seconds, 3)}});
}

// ---- subcommands ----

int cmd_gen(const CLI::App& sub, const GenOptions& o, DatasetKind kind, std::ostream& out,
            std::ostream& err) {
    const bool langsym = kind == DatasetKind::langsym;
    DatasetSpec spec{kind, gen_config(sub, o, langsym, err), std::nullopt};
    const auto m = write_dataset(spec, o.out_dir, o.workers);
    print_manifest_summary(out, m, o.out_dir);
    return kExitOk;
}

int cmd_strip(const CLI::App& sub, StripOptions o, std::ostream& out, std::ostream& err) {
    const auto start = Clock::now();
    const auto src = read_manifest(o.in_dir);
    if (sub.count("--seed") == 0) {
        o.seed = fresh_seed();
        err << "note: no seed given, using " << o.seed << " (recorded in the manifest)\n";
    }
    std::vector<std::string> records;
    records.reserve(src.records);
    DatasetSpec spec{src.spec.kind, src.spec.config, StripParams{o.k_prime, o.seed}};
    if (src.spec.kind == DatasetKind::abstract) {
        spec.kind = DatasetKind::abstract_eval;
        const Vocabulary vocab(config_from_json(src.spec.config).vocab_size);
        for_each_record(o.in_dir, src, [&](const nlohmann::json& j) {
            const auto prompt = make_eval_prompt(sequence_from_json(j), vocab);
            records.push_back(eval_prompt_to_json(strip_cot(prompt, o.k_prime, o.seed, vocab)).dump());
        });
    } else if (src.spec.kind == DatasetKind::langsym) {
        spec.kind = DatasetKind::langsym_eval;
        const auto cfg = langsym_config_from_json(src.spec.config);
        for_each_record(o.in_dir, src, [&](const nlohmann::json& j) {
            records.push_back(
                chat_prompt_to_json(strip_cot(chat_prompt_from_json(j), o.k_prime, o.seed, cfg.templates))
                    .dump());
        });
    } else {
        throw InputError("strip-cot needs a generated abstract or langsym dataset, got " +
                         std::string(kind_name(src.spec.kind)));
    }
    const auto m = write_records(spec, o.out_dir, records, src.order, seconds_since(start));
    print_manifest_summary(out, m, o.out_dir);
    out << "k_prime  " << o.k_prime << "\nstrip_seed  " << o.seed << '\n';
    return kExitOk;
}

void print_step_grid(std::ostream& out, const StepGrid& g) {
    out << "answer  step1  step2  count\n";
    for (int a = 1; a >= 0; --a)
        for (int s1 = 1; s1 >= 0; --s1)
            for (int s2 = 1; s2 >= 0; --s2)
                out << std::left << std::setw(8) << (a ? "right" : "wrong") << std::setw(7)
                    << (s1 ? "right" : "wrong") << std::setw(7) << (s2 ? "right" : "wrong")
                    << g.counts[a][s1][s2] << '\n';
    out << "fewer than two steps: " << g.missing << '\n';
}

template <typename Report>
void print_eval_summary(std::ostream& out, const Report& r, const StepGrid& grid) {
    print_rows(out, {{"strategy", std::string(strategy_name(r.strategy))},
                     {"prompts", std::to_string(r.records.size())},
                     {"accuracy", fixed(r.accuracy)},
                     {"matched", std::to_string(r.matched)},
                     {"format_failures", std::to_string(r.format_failures)},
                     {"backend_failures", std::to_string(r.backend_failures)}});
    print_step_grid(out, grid);
}

void emit_report(const std::string& path, const nlohmann::ordered_json& j, std::ostream& out) {
    if (path.empty()) out << j.dump(2) << '\n';
    else write_json_file(path, j);
}

int cmd_eval(const CLI::App& sub, const EvalOptions& o, std::ostream& out, std::ostream& err) {
    const auto m = read_manifest(o.prompts_dir);
    if (m.spec.kind != DatasetKind::abstract_eval)
        throw InputError("eval needs an abstract_eval dataset (run strip-cot first), got " +
                         std::string(kind_name(m.spec.kind)));
    const auto cfg = config_from_json(m.spec.config);
    const auto world = World::from_config(cfg);

    std::vector<EvalPrompt> prompts;
    prompts.reserve(m.records);
    for_each_record(o.prompts_dir, m, [&](const nlohmann::json& j) {
        auto p = eval_prompt_from_json(j);
        const std::span<const TokenId> q(p.query_segment);
        if (q.size() < 2) throw InputError("prompt " + std::to_string(p.prompt_id) + ": empty query");
        if (compute_chain(world, p.meta.dag, p.meta.proc_ids, q.subspan(1, q.size() - 2)) !=
            p.ground_truth_chain)
            throw InputError("prompt " + std::to_string(p.prompt_id) +
                             ": ground truth disagrees with the manifest config");
        prompts.push_back(std::move(p));
    });

    ForcingConfig forcing{parse_strategy(o.strategy), std::nullopt};
    if (sub.count("--budget")) forcing.budget = o.budget;

    nlohmann::ordered_json head;
    head["dataset"] = o.prompts_dir;
    head["backend"] = o.backend;
    std::unique_ptr<GenerationBackend> backend;
    if (o.backend == "oracle") {
        backend = std::make_unique<OracleBackend>(prompts);
    } else if (o.backend == "random") {
        std::uint64_t seed = o.seed;
        if (sub.count("--seed") == 0) {
            seed = fresh_seed();
            err << "note: no seed given, using " << seed << " (recorded in the report)\n";
        }
        head["seed"] = seed;
        backend = std::make_unique<RandomBackend>(world.vocab, seed);
    } else if (o.backend == "stdio") {
        if (o.command.empty()) throw ConfigError("--backend stdio needs --command");
        head["command"] = o.command;
        backend = std::make_unique<StdioBackend>(o.command);
    } else {
        throw ConfigError("unknown backend '" + o.backend + "'");
    }
    head["budget"] = forcing.budget ? nlohmann::ordered_json(*forcing.budget) : nlohmann::ordered_json("C+6");

    const auto report = evaluate(*backend, prompts, forcing, world.vocab, o.workers);
    auto j = head;
    j.update(report_to_json(report, !o.no_records));
    emit_report(o.report_path, j, out);
    if (!o.report_path.empty()) print_eval_summary(out, report, step_grid(report));
    return kExitOk;
}

int cmd_eval_langsym(const CLI::App& sub, const EvalOptions& o, std::ostream& out) {
    const auto m = read_manifest(o.prompts_dir);
    if (m.spec.kind != DatasetKind::langsym_eval)
        throw InputError("eval-langsym needs a langsym_eval dataset (run strip-cot first), got " +
                         std::string(kind_name(m.spec.kind)));
    const auto cfg = langsym_config_from_json(m.spec.config);
    std::vector<ChatPrompt> prompts;
    prompts.reserve(m.records);
    for_each_record(o.prompts_dir, m, [&](const nlohmann::json& j) {
        auto p = chat_prompt_from_json(j);
        if (compute_word_chain(p.meta.dag, p.meta.inputs.back()) != p.meta.chains.back())
            throw InputError("prompt " + std::to_string(p.prompt_id) + ": ground truth is inconsistent");
        prompts.push_back(std::move(p));
    });

    nlohmann::ordered_json head;
    head["dataset"] = o.prompts_dir;
    head["backend"] = o.backend;
    std::unique_ptr<TextBackend> backend;
    if (o.backend == "oracle") {
        backend = std::make_unique<OracleTextBackend>(prompts, cfg.templates);
    } else if (o.backend == "stdio-text") {
        if (o.command.empty()) throw ConfigError("--backend stdio-text needs --command");
        head["command"] = o.command;
        backend = std::make_unique<StdioTextBackend>(o.command);
    } else {
        throw ConfigError("unknown text backend '" + o.backend + "'");
    }
    std::optional<std::uint32_t> cap;
    if (sub.count("--budget")) cap = o.budget;
    const auto strategy = parse_strategy(o.strategy);
    head["budget_chars"] =
        cap.value_or(strategy == Strategy::force_answer ? cfg.answer_budget : cfg.think_budget);

    const auto report = evaluate_langsym(*backend, prompts, strategy, cap, cfg);
    auto j = head;
    j.update(langsym_report_to_json(report, !o.no_records));
    emit_report(o.report_path, j, out);
    if (!o.report_path.empty())
        print_eval_summary(out, report, step_grid_of(std::span<const LangSymRecord>(report.records)));
    return kExitOk;
}

int cmd_budget(const BudgetOptions& o, std::ostream& out) {
    const Recipe recipe{Exponent::parse(o.alpha), o.a, o.b};
    const auto report = expected_tokens(recipe, o.n, o.c, o.k, o.t);
    const auto baseline = expected_tokens(Recipe{Exponent::infinity(), 1.0, 0.0}, o.n, o.c, o.k, o.t);
    const double ratio = report.expected_tokens / baseline.expected_tokens;
    auto j = budget_to_json(report);
    j["no_cot_tokens"] = baseline.expected_tokens;
    j["ratio_to_no_cot"] = ratio;

    if (o.format != "table") out << j.dump(2) << '\n';
    if (o.format == "both") out << '\n';
    if (o.format != "json") {
        char buf[64];
        auto num = [&](double v) {
            std::snprintf(buf, sizeof buf, "%.6f", v);
            return std::string(buf);
        };
        const auto& approx = report.expected_cot_examples_approx;
        print_rows(out, {{"alpha", recipe.alpha.to_string()},
                         {"a", num(o.a)},
                         {"b", num(o.b)},
                         {"N C K T", std::to_string(o.n) + " " + std::to_string(o.c) + " " +
                                         std::to_string(o.k) + " " + std::to_string(o.t)},
                         {"cot examples (exact)", num(report.expected_cot_examples_exact)},
                         {"cot examples (approx)", approx ? num(*approx) : "n/a"},
                         {"standard examples", num(report.expected_standard_examples)},
                         {"expected tokens", num(report.expected_tokens)},
                         {"no-CoT tokens", num(baseline.expected_tokens)},
                         {"ratio to no-CoT", num(ratio)}});
    }
    return kExitOk;
}

nlohmann::json record_at(const std::string& dir, const Manifest& m, std::uint64_t index) {
    if (index >= m.records)
        throw InputError("index " + std::to_string(index) + " is past the " +
                         std::to_string(m.records) + " records");
    std::optional<nlohmann::json> found;
    std::uint64_t pos = 0;
    // Skip whole shards by their recorded counts.
    Manifest one = m;
    one.outputs.clear();
    for (const auto& f : m.outputs) {
        if (!f.path.starts_with("shard-")) continue;
        if (index < pos + f.count) {
            one.outputs.push_back(f);
            break;
        }
        pos += f.count;
    }
    for_each_record(dir, one, [&](const nlohmann::json& j) {
        if (pos++ == index) found = j;
    });
    if (!found) throw InputError("record " + std::to_string(index) + " not found");
    return *found;
}

std::string dag_lines(const Dag& dag) {
    std::ostringstream s;
    for (std::uint32_t c = 0; c < dag.n_chain; ++c) {
        s << "# node " << dag.n_inputs + c << " (y" << c + 1 << ") <-";
        for (auto p : dag.parents[c]) s << ' ' << p;
        s << '\n';
    }
    return s.str();
}

template <typename T>
std::string join(const std::vector<T>& v, const char* sep = " ") {
    std::ostringstream s;
    for (std::size_t i = 0; i < v.size(); ++i) s << (i ? sep : "") << v[i];
    return s.str();
}

int cmd_inspect(const InspectOptions& o, std::ostream& out) {
    const auto m = read_manifest(o.in_dir);
    const auto j = record_at(o.in_dir, m, o.index);
    if (o.raw) {
        out << j.dump(2) << '\n';
        return kExitOk;
    }
    switch (m.spec.kind) {
        case DatasetKind::abstract: {
            const Vocabulary vocab(config_from_json(m.spec.config).vocab_size);
            const auto seq = sequence_from_json(j);
            const auto& mt = seq.meta;
            out << "# seq_id " << seq.seq_id << "  n " << mt.n << "  m " << mt.m << "  c " << mt.c
                << "  k " << mt.k << "  r_cot " << mt.r_cot << "  seed " << mt.seed << '\n'
                << "# processors " << join(mt.proc_ids) << '\n'
                << dag_lines(mt.dag) << annotate_tokens(seq.tokens, seq.loss_mask, vocab);
            break;
        }
        case DatasetKind::abstract_eval: {
            const Vocabulary vocab(config_from_json(m.spec.config).vocab_size);
            const auto p = eval_prompt_from_json(j);
            const auto toks = p.tokens();
            out << "# prompt_id " << p.prompt_id << "  cot context " << count_cot_context(p, vocab)
                << "  ground truth " << join(p.ground_truth_chain) << '\n'
                << dag_lines(p.meta.dag)
                << annotate_tokens(toks, std::vector<std::uint8_t>(toks.size(), 0), vocab);
            break;
        }
        case DatasetKind::langsym:
        case DatasetKind::langsym_eval: {
            const auto p = chat_prompt_from_json(j);
            out << "# prompt_id " << p.prompt_id << "  n " << p.meta.n << "  m " << p.meta.m
                << "  c " << p.meta.c << "  k " << p.meta.k << "  r_cot " << p.meta.r_cot
                << "  cot context " << count_cot_context(p) << '\n'
                << "# answer chain " << join(p.meta.chains.back()) << '\n'
                << dag_lines(p.meta.dag);
            for (const auto& msg : p.messages) out << "=== " << msg.role << " ===\n" << msg.content << '\n';
            break;
        }
    }
    return kExitOk;
}

int cmd_verify(const VerifyOptions& o, std::ostream& out) {
    const auto r = verify_dataset(o.dir, o.sample, o.seed, o.workers);
    out << "regenerated shards: " << join(r.regenerated_shards, ", ") << '\n';
    for (const auto& f : r.hash_mismatches) out << "hash mismatch: " << f << '\n';
    for (const auto& f : r.regeneration_mismatches) out << "regeneration mismatch: " << f << '\n';
    out << (r.ok() ? "OK" : "FAILED") << '\n';
    return r.ok() ? kExitOk : kExitMismatch;
}

}  // namespace

std::string annotate_tokens(std::span<const TokenId> tokens, std::span<const std::uint8_t> mask,
                            const Vocabulary& vocab) {
    std::vector<std::string> lines;
    std::string line;
    bool has_think = false;
    std::size_t example = 0;
    auto flush = [&](bool closed) {
        if (line.empty()) return;
        std::string label;
        if (!closed) label = "[query]";
        else label = "[ex " + std::to_string(example++) + (has_think ? " cot]" : " std]");
        lines.push_back(label + line);
        line.clear();
        has_think = false;
    };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto t = tokens[i];
        std::string word;
        if (const auto role = vocab.special_role(t)) word = "<" + std::string(special_name(*role)) + ">";
        else word = std::to_string(t);
        if (i < mask.size() && mask[i]) word += '*';
        if (i == 0 && t == id_of(Special::bos)) {
            lines.push_back("[start] " + word);
            continue;
        }
        line += ' ';
        line += word;
        if (t == id_of(Special::think_start)) has_think = true;
        if (t == id_of(Special::eos)) flush(true);
    }
    flush(false);
    std::string out;
    for (const auto& l : lines) out += l + '\n';
    return out;
}

std::vector<TokenId> tokens_from_annotation(std::string_view text) {
    std::vector<TokenId> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::size_t pos = 0;
        if (line[0] == '[') {
            pos = line.find(']');
            if (pos == std::string::npos) throw InputError("unterminated label: " + line);
            ++pos;
        }
        std::istringstream words(line.substr(pos));
        std::string w;
        while (words >> w) {
            if (!w.empty() && w.back() == '*') w.pop_back();
            if (w.size() > 2 && w.front() == '<' && w.back() == '>') {
                const auto name = w.substr(1, w.size() - 2);
                bool ok = false;
                for (auto s : kAllSpecials)
                    if (special_name(s) == name) {
                        out.push_back(id_of(s));
                        ok = true;
                    }
                if (!ok) throw InputError("unknown special token " + w);
            } else {
                try {
                    std::size_t used = 0;
                    const auto v = std::stoul(w, &used);
                    if (used != w.size()) throw InputError("bad token " + w);
                    out.push_back(static_cast<TokenId>(v));
                } catch (const std::logic_error&) {
                    throw InputError("bad token " + w);
                }
            }
        }
    }
    return out;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Seeded generator and evaluation harness for CoT in-context datasets", "cotlab"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    GenOptions gen_abstract, gen_langsym;
    auto* sub_ga = app.add_subcommand("gen-abstract", "Generate an abstract-token dataset");
    add_gen_options(sub_ga, gen_abstract, false);
    auto* sub_gl = app.add_subcommand("gen-langsym", "Generate a LangSym chat dataset");
    add_gen_options(sub_gl, gen_langsym, true);

    StripOptions strip;
    auto* sub_strip = app.add_subcommand("strip-cot", "Turn a dataset into eval prompts with K' stripped examples");
    sub_strip->add_option("--in", strip.in_dir, "Source dataset directory")->required();
    sub_strip->add_option("--out", strip.out_dir, "Output directory")->required();
    sub_strip->add_option("--k-prime", strip.k_prime, "Context CoT examples to strip")->required();
    sub_strip->add_option("--seed", strip.seed, "Selection seed");

    EvalOptions ev, evl;
    auto add_eval = [](CLI::App* sub, EvalOptions& o, const std::vector<std::string>& backends) {
        sub->add_option("--prompts", o.prompts_dir, "Eval dataset directory")->required();
        sub->add_option("--backend", o.backend, "Backend")->check(CLI::IsMember(backends));
        sub->add_option("--command", o.command, "Shell command for stdio backends");
        sub->add_option("--strategy", o.strategy, "think, answer or none");
        sub->add_option("--budget", o.budget, "Generation cap")->check(CLI::PositiveNumber);
        sub->add_option("--report", o.report_path, "Report JSON path (stdout when omitted)");
        sub->add_flag("--no-records", o.no_records, "Leave per-prompt records out of the report");
    };
    auto* sub_eval = app.add_subcommand("eval", "Evaluate abstract eval prompts");
    add_eval(sub_eval, ev, {"oracle", "random", "stdio"});
    sub_eval->add_option("--workers", ev.workers, "Threads for thread-safe backends")->check(CLI::PositiveNumber);
    sub_eval->add_option("--seed", ev.seed, "Seed for the random backend");
    auto* sub_evl = app.add_subcommand("eval-langsym", "Evaluate LangSym eval prompts");
    evl.backend = "stdio-text";
    add_eval(sub_evl, evl, {"oracle", "stdio-text"});

    BudgetOptions bud;
    auto* sub_budget = app.add_subcommand("budget", "Expected CoT examples and tokens for a recipe");
    sub_budget->add_option("--alpha", bud.alpha, "Exponent, a number or inf");
    sub_budget->add_option("--a", bud.a, "Recipe scale");
    sub_budget->add_option("--b", bud.b, "Recipe offset");
    sub_budget->add_option("--n", bud.n, "Inputs per example");
    sub_budget->add_option("--c", bud.c, "Chain length");
    sub_budget->add_option("--k", bud.k, "Examples per sequence");
    sub_budget->add_option("--t", bud.t, "Number of sequences");
    sub_budget->add_option("--format", bud.format, "json, table or both")
        ->check(CLI::IsMember({"json", "table", "both"}));

    InspectOptions insp;
    auto* sub_inspect = app.add_subcommand("inspect", "Pretty-print one record with delimiters annotated");
    sub_inspect->add_option("--in", insp.in_dir, "Dataset directory")->required();
    sub_inspect->add_option("--index", insp.index, "Record position in output order");
    sub_inspect->add_flag("--json", insp.raw, "Print the raw JSON record");

    VerifyOptions ver;
    auto* sub_verify = app.add_subcommand("verify", "Rehash outputs and regenerate sampled shards");
    sub_verify->add_option("--dir,dir", ver.dir, "Dataset directory")->required();
    sub_verify->add_option("--sample", ver.sample, "Shards to regenerate, 0 means all");
    sub_verify->add_option("--seed", ver.seed, "Shard sampling seed");
    sub_verify->add_option("--workers", ver.workers, "Threads")->check(CLI::PositiveNumber);

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sub_ga->parsed()) return cmd_gen(*sub_ga, gen_abstract, DatasetKind::abstract, out, err);
        if (sub_gl->parsed()) return cmd_gen(*sub_gl, gen_langsym, DatasetKind::langsym, out, err);
        if (sub_strip->parsed()) return cmd_strip(*sub_strip, strip, out, err);
        if (sub_eval->parsed()) return cmd_eval(*sub_eval, ev, out, err);
        if (sub_evl->parsed()) return cmd_eval_langsym(*sub_evl, evl, out);
        if (sub_budget->parsed()) return cmd_budget(bud, out);
        if (sub_inspect->parsed()) return cmd_inspect(insp, out);
        if (sub_verify->parsed()) return cmd_verify(ver, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const BackendError& e) {
        err << "backend error: " << e.what() << '\n';
        return kExitIo;
    } catch (const nlohmann::json::exception& e) {
        err << "input error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

}  // namespace cotlab::cli
