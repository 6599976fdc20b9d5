// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "chain_oracle.hpp"
#include "cotlab/backends.hpp"
#include "cotlab/cli.hpp"
#include "cotlab/dataset.hpp"
#include "cotlab/eval.hpp"
#include "cotlab/langsym.hpp"
#include "sequence_checks.hpp"
#include "stats.hpp"
#include "temp_dir.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

using namespace cotlab;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void fail(const std::string& why) {
        if (pass) detail.clear();
        pass = false;
        if (!detail.empty()) detail += "; ";
        detail += why;
    }
    void note(const std::string& text) {
        if (!pass) return;
        if (!detail.empty()) detail += "; ";
        detail += text;
    }
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

int failures = 0;

void criterion(const std::string& name, double limit_seconds, const std::function<Outcome()>& fn) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = fn();
    } catch (const std::exception& e) {
        o.fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs >= limit_seconds) o.fail("runtime " + fmt("%.2f", secs) + " s over the limit");
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " [" << fmt("%.2f", secs) << " s / "
              << fmt("%g", limit_seconds) << " s] " << o.detail << std::endl;
}

nlohmann::json budget_json(const std::string& alpha, std::uint64_t t) {
    std::ostringstream out, err;
    const int code = cli::run({"budget", "--alpha", alpha, "--n", "4", "--c", "4", "--k", "40",
                               "--t", std::to_string(t), "--format", "json"},
                              out, err);
    if (code != 0) throw std::runtime_error("budget exited " + std::to_string(code) + ": " + err.str());
    return nlohmann::json::parse(out.str());
}

DatasetConfig base_config(std::uint64_t seed) {
    DatasetConfig cfg;
    cfg.k = 40;
    cfg.master_seed = seed;
    return cfg;
}

// Oracle output with roughly 30% of normal tokens replaced, chosen by a hash
// of the prefix so runs are reproducible.
class NoisyBackend final : public GenerationBackend {
public:
    NoisyBackend(std::span<const EvalPrompt> prompts, const Vocabulary& vocab)
        : inner_(prompts), vocab_(vocab) {}
    TokenId next_token(std::span<const TokenId> prefix) override {
        const TokenId t = inner_.next_token(prefix);
        std::uint64_t h = 0x9e3779b97f4a7c15ULL;
        for (TokenId x : prefix) h = mix64(h ^ x);
        if (!vocab_.is_normal(t) || h % 10 >= 3) return t;
        return vocab_.first_normal() + static_cast<TokenId>((h >> 8) % vocab_.normal_count());
    }
    bool thread_safe() const noexcept override { return true; }

private:
    OracleBackend inner_;
    Vocabulary vocab_;
};

// Oracle text completions with some step and answer words garbled.
class NoisyTextBackend final : public TextBackend {
public:
    NoisyTextBackend(std::span<const ChatPrompt> prompts, const ChatTemplates& t) : inner_(prompts, t) {}
    std::string complete(std::span<const ChatMessage> messages) override {
        auto text = inner_.complete(messages);
        std::uint64_t h = mix64(++calls_);
        for (std::size_t pos = 0; (pos = text.find(": ", pos)) != std::string::npos; pos += 2, h = mix64(h))
            if (h % 3 == 0 && pos + 2 < text.size()) text[pos + 2] = text[pos + 2] == 'a' ? 'b' : 'a';
        const auto box = text.find("\\boxed{");
        if (box != std::string::npos && mix64(h) % 4 == 0) text[box + 7] = text[box + 7] == 'a' ? 'b' : 'a';
        return text;
    }

private:
    OracleTextBackend inner_;
    std::uint64_t calls_ = 0;
};

// Checks that the grid and the per-step tables split the prompts exactly and
// agree with each other and with the raw records.
template <typename Record>
void check_tables(std::span<const Record> records, Outcome& o, const std::string& label) {
    const auto grid = step_grid_of(records);
    const auto tables = step_dag_breakdown_of(records);
    const std::uint64_t n = records.size();

    std::uint64_t total = grid.missing;
    for (int a = 0; a < 2; ++a)
        for (int s1 = 0; s1 < 2; ++s1)
            for (int s2 = 0; s2 < 2; ++s2) total += grid.counts[a][s1][s2];
    if (total != n) o.fail(label + ": grid sums to " + std::to_string(total));

    std::size_t max_steps = 0;
    for (const auto& r : records) max_steps = std::max(max_steps, r.step_correct.size());
    if (tables.size() != max_steps) o.fail(label + ": table count");

    for (const auto& t : tables) {
        std::uint64_t sum = t.missing;
        for (int a = 0; a < 2; ++a)
            for (int s = 0; s < 2; ++s)
                for (int d = 0; d < 2; ++d) sum += t.counts[a][s][d];
        if (sum != n) o.fail(label + ": step " + std::to_string(t.step) + " table sums to " + std::to_string(sum));

        // Recount from the records.
        std::array<std::array<std::array<std::uint64_t, 2>, 2>, 2> direct{};
        std::uint64_t missing = 0;
        for (const auto& r : records) {
            if (r.step_correct.size() < t.step) {
                ++missing;
                continue;
            }
            ++direct[r.indicator][r.step_correct[t.step - 1]][r.step_in_dag[t.step - 1]];
        }
        if (direct != t.counts || missing != t.missing)
            o.fail(label + ": step " + std::to_string(t.step) + " table differs from a recount");
    }

    // Grid margins against the step tables, restricted to prompts with two or more steps.
    if (tables.size() >= 2) {
        for (int a = 0; a < 2; ++a)
            for (int s = 0; s < 2; ++s) {
                std::uint64_t g1 = grid.counts[a][s][0] + grid.counts[a][s][1];
                std::uint64_t g2 = grid.counts[a][0][s] + grid.counts[a][1][s];
                std::uint64_t t1 = 0, t2 = 0;
                for (const auto& r : records) {
                    if (r.step_correct.size() < 2 || r.indicator != (a == 1)) continue;
                    t1 += r.step_correct[0] == (s == 1);
                    t2 += r.step_correct[1] == (s == 1);
                }
                if (g1 != t1 || g2 != t2) o.fail(label + ": grid margins disagree with the records");
            }
    }

    // Answer margin equals the accuracy numerator.
    std::uint64_t hits = 0, grid_hits = 0;
    for (const auto& r : records) hits += r.indicator;
    for (int s1 = 0; s1 < 2; ++s1)
        for (int s2 = 0; s2 < 2; ++s2) grid_hits += grid.counts[1][s1][s2];
    std::uint64_t missing_hits = 0;
    for (const auto& r : records) missing_hits += (r.step_correct.size() < 2 && r.indicator);
    if (grid_hits + missing_hits != hits) o.fail(label + ": answer margin");
}

}  // namespace

int main() {
    std::cout << "acceptance run, " << kToolVersion << std::endl;

    criterion("token-budget theorem", 1.0, [] {
        Outcome o;
        const double t0 = budget_json("0", 1000).at("expected_tokens").get<double>();
        const double tinf = budget_json("inf", 1000).at("expected_tokens").get<double>();
        const double ratio = t0 / tinf;
        if (!(ratio >= 1.498 && ratio <= 1.500)) o.fail("ratio " + fmt("%.6f", ratio) + " outside [1.498, 1.500]");
        o.note("tokens(0)/tokens(inf) = " + fmt("%.6f", ratio));
        for (const char* alpha : {"0.5", "1", "2"}) {
            const auto j = budget_json(alpha, 1000);
            const double exact = j.at("expected_cot_examples_exact").get<double>();
            const double approx = j.at("expected_cot_examples_approx").get<double>();
            const double rel = std::abs(exact - approx) / exact;
            if (rel > 1e-3) o.fail("alpha " + std::string(alpha) + " relative error " + fmt("%.3g", rel));
            o.note("alpha " + std::string(alpha) + " rel err " + fmt("%.2e", rel));
        }
        return o;
    });

    criterion("alpha 2 vs inf token ratio at T = 6.4e6", 1.0, [] {
        Outcome o;
        const double t2 = budget_json("2", 6400000).at("expected_tokens").get<double>();
        const double tinf = budget_json("inf", 6400000).at("expected_tokens").get<double>();
        const double ratio = t2 / tinf;
        if (std::abs(ratio - 1.16) > 0.01) o.fail("ratio " + fmt("%.6f", ratio) + " not within 1.16 +/- 0.01");
        o.note("ratio " + fmt("%.6f", ratio));
        return o;
    });

    criterion("Monte-Carlo CoT example counts", 120.0, [] {
        Outcome o;
        constexpr std::uint64_t T = 10000;
        const std::vector<std::pair<std::string, Exponent>> alphas = {
            {"0", Exponent(0)}, {"0.5", Exponent(0.5)}, {"1", Exponent(1)}, {"2", Exponent(2)},
            {"inf", Exponent::infinity()}};
        auto cfg = base_config(20240101);
        cfg.t = T;
        const auto world = World::from_config(cfg);
        for (const auto& [label, alpha] : alphas) {
            cfg.recipe = Recipe{alpha, 1.0, 0.0};
            std::uint64_t observed = 0;
            generate_dataset(cfg, world, [&](Sequence&& s) {
                for (bool f : s.meta.cot_flags) observed += f;
            });
            const double expected = expected_cot_examples(cfg.recipe, cfg.k, T).exact;
            double var = 0.0;
            for (std::uint64_t j = 0; j < T; ++j) {
                const double r = r_cot(cfg.recipe, j, T);
                var += cfg.k * r * (1.0 - r);
            }
            const double sigma = std::sqrt(var);
            const double z = sigma > 0 ? (static_cast<double>(observed) - expected) / sigma : 0.0;
            if (std::abs(static_cast<double>(observed) - expected) > 4.0 * sigma)
                o.fail("alpha " + label + ": observed " + std::to_string(observed) + ", expected " +
                       fmt("%.1f", expected) + ", z " + fmt("%.2f", z));
            if (label == "0" && observed != cfg.k * T) o.fail("alpha 0 is not exactly K*T");
            if (label == "inf" && observed != 0) o.fail("alpha inf is not exactly 0");
            o.note("alpha " + label + " obs " + std::to_string(observed) + " z " + fmt("%+.2f", z));
        }
        return o;
    });

    criterion("structural invariants on 1e4 sequences", 120.0, [] {
        Outcome o;
        auto cfg = base_config(777);
        cfg.t = 10000;
        cfg.n_choices = {2, 4, 6};
        cfg.m_choices = {1, 2, 4};
        cfg.c_choices = {1, 2, 4, 6};
        cfg.recipe = Recipe{Exponent(1), 1.0, 0.0};
        const auto world = World::from_config(cfg);
        const cotlab::test::DenseOracle oracle(world.embedding);
        std::uint64_t bad = 0, checked = 0;
        std::string first;
        generate_dataset(cfg, world, [&](Sequence&& s) {
            ++checked;
            const auto why = cotlab::test::check_sequence(s, world, oracle);
            if (!why.empty() && bad++ == 0) first = why;
        });
        if (bad) o.fail(std::to_string(bad) + " violations, first: " + first);
        o.note(std::to_string(checked) + " sequences checked");
        return o;
    });

    criterion("oracle and random evaluation", 120.0, [] {
        Outcome o;
        auto cfg = base_config(4242);
        cfg.t = 1000;
        cfg.recipe = Recipe{Exponent(0), 1.0, 0.0};
        const auto world = World::from_config(cfg);
        std::vector<EvalPrompt> base;
        generate_dataset(cfg, world, [&](Sequence&& s) { base.push_back(make_eval_prompt(s, world.vocab)); });

        const double p = 1.0 / world.vocab.normal_count();
        const auto [lo, hi] = cotlab::test::binomial_interval(base.size(), p, 0.99);
        std::uint64_t random_total = 0;
        for (std::uint32_t kp : {0U, 10U, 20U, 30U, 39U}) {
            std::vector<EvalPrompt> prompts;
            prompts.reserve(base.size());
            for (const auto& b : base) prompts.push_back(strip_cot(b, kp, 99, world.vocab));
            for (const auto& q : prompts)
                if (count_cot_context(q, world.vocab) != cfg.k - 1 - kp) o.fail("strip count at K' " + std::to_string(kp));
            OracleBackend oracle_backend(prompts);
            for (auto s : {Strategy::force_think, Strategy::force_answer, Strategy::no_forcing}) {
                const auto rep = evaluate(oracle_backend, prompts, {s, std::nullopt}, world.vocab);
                if (rep.accuracy != 1.0)
                    o.fail("oracle K' " + std::to_string(kp) + " " + std::string(strategy_name(s)) +
                           " accuracy " + fmt("%.4f", rep.accuracy));
                RandomBackend random_backend(world.vocab, 1000 + kp * 10 + static_cast<int>(s));
                const auto rr = evaluate(random_backend, prompts, {s, std::nullopt}, world.vocab);
                const std::uint64_t hits = std::llround(rr.accuracy * prompts.size());
                random_total += hits;
                if (hits < lo || hits > hi)
                    o.fail("random K' " + std::to_string(kp) + " " + std::string(strategy_name(s)) + ": " +
                           std::to_string(hits) + " hits outside [" + std::to_string(lo) + ", " +
                           std::to_string(hi) + "]");
            }
        }
        o.note("oracle 1.0 on 15 runs; random hits per run within [" + std::to_string(lo) + ", " +
               std::to_string(hi) + "], total " + std::to_string(random_total) + " of 15000");
        return o;
    });

    criterion("chain_token matches a dense reimplementation", 10.0, [] {
        Outcome o;
        std::uint64_t mismatches = 0, n = 0;
        Xoshiro256 rng(31337);
        for (std::uint64_t w = 0; w < 4; ++w) {
            DatasetConfig cfg;
            cfg.dim = 10;
            cfg.master_seed = 500 + w;
            cfg.mlp_depth = w < 2 ? 1 : 2;
            cfg.cache_size = 64;
            cfg.vocab_size = w % 2 == 0 ? 1024 : 97;
            const auto world = World::from_config(cfg);
            const cotlab::test::DenseOracle oracle(world.embedding);
            for (int i = 0; i < 250; ++i, ++n) {
                const auto& mlp = world.cache[uniform_index(rng, world.cache.size())];
                std::vector<TokenId> parents(1 + uniform_index(rng, 6));
                for (auto& t : parents)
                    t = world.vocab.first_normal() + static_cast<TokenId>(uniform_index(rng, world.vocab.normal_count()));
                if (chain_token(mlp, world.embedding, world.vocab, parents) != oracle.token(mlp, parents)) ++mismatches;
            }
        }
        if (mismatches) o.fail(std::to_string(mismatches) + " of " + std::to_string(n) + " differ");
        o.note(std::to_string(n) + " instances, d = 10");
        return o;
    });

    criterion("LangSym ground truth, round trip, closure", 30.0, [] {
        Outcome o;
        const auto got = string_transform(std::vector<Word>{"aghmarib", "aribbsjc"});
        if (got != "bsjcctkd") o.fail("transform gave " + got);

        LangSymConfig cfg;
        cfg.t = 1000;
        cfg.k = 10;
        cfg.w = 8;
        cfg.m_choices = {2};
        cfg.n_choices = {2, 3, 4, 5};
        cfg.c_choices = {1, 2, 3, 4};
        cfg.master_seed = 99;
        cfg.recipe = Recipe{Exponent(1), 1.0, 0.0};
        std::uint64_t round_trip_bad = 0, closure_bad = 0, words = 0;
        generate_langsym_dataset(cfg, [&](ChatPrompt&& p) {
            if (chat_prompt_from_json(nlohmann::json::parse(chat_prompt_to_json(p).dump())) != p) ++round_trip_bad;
            for (std::uint32_t i = 0; i < p.meta.k; ++i) {
                const auto& chain = p.meta.chains[i];
                const auto& text = p.messages[2 + 2 * i].content;
                if (compute_word_chain(p.meta.dag, p.meta.inputs[i]) != chain) ++round_trip_bad;
                if (text != render_answer(cfg.templates, chain, p.meta.cot_flags[i])) ++round_trip_bad;
                const auto answer = extract_langsym_answer(text);
                if (!answer || *answer != chain.back()) ++round_trip_bad;
                const auto steps = extract_steps(text);
                const std::vector<Word> want =
                    p.meta.cot_flags[i] ? std::vector<Word>(chain.begin(), chain.end() - 1) : std::vector<Word>{};
                if (steps != want) ++round_trip_bad;
                for (const auto& w : chain) {
                    ++words;
                    if (w.size() != 8) ++closure_bad;
                }
            }
        });
        if (round_trip_bad) o.fail(std::to_string(round_trip_bad) + " round-trip failures");
        if (closure_bad) o.fail(std::to_string(closure_bad) + " chain words not of length 8");
        o.note("1000 prompts, " + std::to_string(words) + " chain words of length 8");
        return o;
    });

    criterion("DAG sampling and step tables", 60.0, [] {
        Outcome o;
        constexpr std::uint64_t kDags = 10000;
        Xoshiro256 rng(2718);
        // Pooled over nodes: each node's statistic uses the without-replacement
        // covariance, so (P-1)/P * sum (O-E)^2 / (n q (1-q)) is chi-square with P-1 dof.
        double stat = 0.0, dof = 0.0;
        std::uint64_t invalid = 0;
        for (auto [n, m, c] : {std::tuple{4u, 2u, 4u}, std::tuple{4u, 4u, 4u}, std::tuple{3u, 1u, 5u},
                               std::tuple{6u, 3u, 3u}}) {
            std::vector<std::vector<double>> counts(c);
            for (std::uint32_t k = 0; k < c; ++k) counts[k].assign(n + k, 0.0);
            for (std::uint64_t i = 0; i < kDags / 4; ++i) {
                const auto dag = sample_dag(n, m, c, rng);
                if (validate_dag(dag)) ++invalid;
                for (std::uint32_t k = 0; k < c; ++k)
                    for (auto p : dag.parents[k]) counts[k][p] += 1.0;
            }
            for (std::uint32_t k = 0; k < c; ++k) {
                const double pool = n + k;
                const double fan = std::min(m, n);
                const double q = fan / pool;
                if (q >= 1.0) continue;  // every candidate is always chosen
                const double draws = kDags / 4;
                double s = 0.0;
                for (double x : counts[k]) s += (x - draws * q) * (x - draws * q) / (draws * q * (1 - q));
                stat += s * (pool - 1) / pool;
                dof += pool - 1;
            }
        }
        const double crit = cotlab::test::chi_square_critical(dof, 0.01);
        if (invalid) o.fail(std::to_string(invalid) + " invalid DAGs");
        if (stat >= crit) o.fail("chi-square " + fmt("%.1f", stat) + " >= " + fmt("%.1f", crit));
        o.note("10000 DAGs valid; chi-square " + fmt("%.1f", stat) + " < " + fmt("%.1f", crit) + " (" +
               fmt("%g", dof) + " dof)");

        // Abstract tables from a noisy backend so every cell can fill.
        auto cfg = base_config(55);
        cfg.t = 600;
        cfg.k = 8;
        cfg.c_choices = {1, 2, 3, 5};
        cfg.m_choices = {1, 2};
        cfg.recipe = Recipe{Exponent(0), 1.0, 0.0};
        const auto world = World::from_config(cfg);
        std::vector<EvalPrompt> prompts;
        generate_dataset(cfg, world, [&](Sequence&& s) {
            prompts.push_back(strip_cot(make_eval_prompt(s, world.vocab), 3, 1, world.vocab));
        });
        NoisyBackend noisy(prompts, world.vocab);
        const auto rep = evaluate(noisy, prompts, {Strategy::force_think, std::nullopt}, world.vocab);
        for (const auto& r : rep.records)
            if (r.step_in_dag != steps_feeding_answer(prompts[r.prompt_id].meta.dag)) o.fail("step_in_dag");
        check_tables(std::span<const PromptRecord>(rep.records), o, "abstract");
        o.note("abstract accuracy " + fmt("%.3f", rep.accuracy));

        LangSymConfig lcfg;
        lcfg.t = 300;
        lcfg.k = 6;
        lcfg.c_choices = {1, 3, 4};
        lcfg.master_seed = 8;
        lcfg.recipe = Recipe{Exponent(0), 1.0, 0.0};
        std::vector<ChatPrompt> lp;
        generate_langsym_dataset(lcfg, [&](ChatPrompt&& p) { lp.push_back(strip_cot(p, 2, 3, lcfg.templates)); });
        NoisyTextBackend noisy_text(lp, lcfg.templates);
        const auto lrep = evaluate_langsym(noisy_text, lp, Strategy::force_think, std::nullopt, lcfg);
        check_tables(std::span<const LangSymRecord>(lrep.records), o, "langsym");
        o.note("langsym accuracy " + fmt("%.3f", lrep.accuracy) + "; tables partition exactly");
        return o;
    });

    criterion("shard regeneration is worker-count independent", 120.0, [] {
        Outcome o;
        auto cfg = base_config(31);
        cfg.t = 1600;
        cfg.shard_size = 200;
        cfg.shuffle = true;
        cfg.recipe = Recipe{Exponent(1), 1.0, 0.0};
        LangSymConfig lcfg;
        lcfg.t = 1600;
        lcfg.shard_size = 200;
        lcfg.shuffle = true;
        lcfg.master_seed = 32;
        lcfg.recipe = Recipe{Exponent(1), 1.0, 0.0};
        const std::vector<DatasetSpec> specs = {
            {DatasetKind::abstract, config_to_json(cfg), std::nullopt},
            {DatasetKind::langsym, langsym_config_to_json(lcfg), std::nullopt}};
        std::uint64_t files = 0;
        for (const auto& spec : specs) {
            ::test::TempDir one, eight;
            const auto m1 = write_dataset(spec, one.path(), 1);
            const auto m8 = write_dataset(spec, eight.path(), 8);
            if (m1.outputs.size() != m8.outputs.size()) o.fail("output lists differ");
            for (std::size_t i = 0; i < std::min(m1.outputs.size(), m8.outputs.size()); ++i, ++files)
                if (m1.outputs[i].sha256 != m8.outputs[i].sha256 || m1.outputs[i].path != m8.outputs[i].path)
                    o.fail(std::string(kind_name(spec.kind)) + " " + m1.outputs[i].path + " differs");
            for (unsigned workers : {1U, 8U}) {
                const auto v = verify_dataset(one.path(), 0, 0, workers);
                if (!v.ok()) o.fail(std::string(kind_name(spec.kind)) + " regeneration with " + std::to_string(workers) + " workers");
                if (v.regenerated_shards.size() != m1.outputs.size() - (spec.kind == DatasetKind::abstract ? 2 : 0))
                    o.fail("not every shard regenerated");
            }
        }
        o.note(std::to_string(files) + " files identical across 1 and 8 workers; all shards regenerate");
        return o;
    });

    std::cout << (failures ? "FAILED: " + std::to_string(failures) + " criteria" : std::string("ALL PASS"))
              << std::endl;
    return failures ? 1 : 0;
}
