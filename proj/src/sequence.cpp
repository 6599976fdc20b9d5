#include "cotlab/sequence.hpp"

#include "cotlab/errors.hpp"
#include "cotlab/rng.hpp"

#include <algorithm>
#include <set>
#include <string>

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

void require_normal(std::span<const TokenId> ids, const Vocabulary& vocab, const char* what) {
    for (TokenId t : ids)
        if (!vocab.is_normal(t))
            throw InputError(std::string(what) + " contains non-normal token " + std::to_string(t));
}

}  // namespace

void DatasetConfig::validate() const {
    if (vocab_size < kMinVocabSize)
        throw ConfigError("vocab_size must be >= " + std::to_string(kMinVocabSize));
    if (dim == 0) throw ConfigError("dim must be >= 1");
    require_choices(n_choices, "n");
    require_choices(m_choices, "m");
    require_choices(c_choices, "c");
    if (k == 0) throw ConfigError("k must be >= 1");
    if (t == 0) throw ConfigError("t must be >= 1");
    if (cache_size == 0) throw ConfigError("cache_size must be >= 1");
    if (mlp_depth == 0) throw ConfigError("mlp_depth must be >= 1");
    if (!(leaky_slope > 0.0 && leaky_slope <= 1.0))
        throw ConfigError("leaky_slope must lie in (0, 1]");
    if (shard_size == 0) throw ConfigError("shard_size must be >= 1");
}

std::uint64_t DatasetConfig::embedding_seed() const noexcept {
    return derive_seed(master_seed, Stream::embedding, 0);
}
std::uint64_t DatasetConfig::cache_seed() const noexcept {
    return derive_seed(master_seed, Stream::processor_cache, 0);
}
std::uint64_t DatasetConfig::sequence_seed(std::uint64_t j) const noexcept {
    return derive_seed(master_seed, Stream::sequence, j);
}

nlohmann::ordered_json config_to_json(const DatasetConfig& cfg) {
    return {{"vocab_size", cfg.vocab_size},
            {"dim", cfg.dim},
            {"n", cfg.n_choices},
            {"m", cfg.m_choices},
            {"c", cfg.c_choices},
            {"k", cfg.k},
            {"t", cfg.t},
            {"recipe", recipe_to_json(cfg.recipe)},
            {"cache_size", cfg.cache_size},
            {"mlp_depth", cfg.mlp_depth},
            {"leaky_slope", cfg.leaky_slope},
            {"master_seed", cfg.master_seed},
            {"shuffle", cfg.shuffle},
            {"shard_size", cfg.shard_size}};
}

DatasetConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("dataset config must be a JSON object");
    static const std::set<std::string> known = {
        "vocab_size", "dim",        "n",           "m",           "c",       "k",         "t",
        "recipe",     "cache_size", "mlp_depth",   "leaky_slope", "master_seed", "shuffle",
        "shard_size"};
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw ConfigError("unknown dataset config key '" + key + "'");

    DatasetConfig cfg;
    try {
        if (j.contains("vocab_size")) cfg.vocab_size = j.at("vocab_size").get<TokenId>();
        if (j.contains("dim")) cfg.dim = j.at("dim").get<std::uint32_t>();
        if (j.contains("n")) cfg.n_choices = choices_from_json(j.at("n"), "n");
        if (j.contains("m")) cfg.m_choices = choices_from_json(j.at("m"), "m");
        if (j.contains("c")) cfg.c_choices = choices_from_json(j.at("c"), "c");
        if (j.contains("k")) cfg.k = j.at("k").get<std::uint32_t>();
        if (j.contains("t")) cfg.t = j.at("t").get<std::uint64_t>();
        if (j.contains("recipe")) cfg.recipe = recipe_from_json(j.at("recipe"));
        if (j.contains("cache_size")) cfg.cache_size = j.at("cache_size").get<std::uint32_t>();
        if (j.contains("mlp_depth")) cfg.mlp_depth = j.at("mlp_depth").get<std::uint32_t>();
        if (j.contains("leaky_slope")) cfg.leaky_slope = j.at("leaky_slope").get<double>();
        if (j.contains("master_seed")) cfg.master_seed = j.at("master_seed").get<std::uint64_t>();
        if (j.contains("shuffle")) cfg.shuffle = j.at("shuffle").get<bool>();
        if (j.contains("shard_size")) cfg.shard_size = j.at("shard_size").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad dataset config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

World World::from_config(const DatasetConfig& cfg) {
    cfg.validate();
    Vocabulary vocab(cfg.vocab_size);
    auto embedding = sample_embedding_matrix(vocab, cfg.dim, cfg.embedding_seed());
    auto cache = new_cache(cfg.cache_size, cfg.dim, cfg.mlp_depth, cfg.leaky_slope, cfg.cache_seed());
    return World{vocab, std::move(embedding), std::move(cache)};
}

std::vector<TokenId> render_standard_example(std::span<const TokenId> inputs, TokenId answer,
                                             const Vocabulary& vocab) {
    std::vector<TokenId> tokens;
    std::vector<std::uint8_t> mask;
    const TokenId chain[] = {answer};
    append_example(tokens, mask, inputs, chain, false, vocab);
    return tokens;
}

std::vector<TokenId> render_cot_example(std::span<const TokenId> inputs,
                                        std::span<const TokenId> chain, const Vocabulary& vocab) {
    std::vector<TokenId> tokens;
    std::vector<std::uint8_t> mask;
    append_example(tokens, mask, inputs, chain, true, vocab);
    return tokens;
}

void append_example(std::vector<TokenId>& tokens, std::vector<std::uint8_t>& mask,
                    std::span<const TokenId> inputs, std::span<const TokenId> chain, bool as_cot,
                    const Vocabulary& vocab) {
    if (inputs.empty()) throw InputError("example needs at least one input token");
    if (chain.empty()) throw InputError("example needs at least one chain token");
    require_normal(inputs, vocab, "inputs");
    require_normal(chain, vocab, "chain");

    auto push = [&](TokenId t, bool supervised) {
        tokens.push_back(t);
        mask.push_back(supervised ? 1 : 0);
    };
    push(id_of(Special::inp_start), false);
    for (TokenId x : inputs) push(x, false);
    push(id_of(Special::inp_end), false);
    if (as_cot) {
        push(id_of(Special::think_start), true);
        for (std::size_t i = 0; i + 1 < chain.size(); ++i) push(chain[i], true);
        push(id_of(Special::think_end), true);
    }
    push(id_of(Special::ans_start), true);
    push(chain.back(), true);
    push(id_of(Special::ans_end), true);
    push(id_of(Special::eos), true);
}

ParsedExample parse_example(std::span<const TokenId> tokens, std::size_t& pos,
                            const Vocabulary& vocab) {
    auto fail = [&](const std::string& what) -> InputError {
        return InputError("malformed example at token " + std::to_string(pos) + ": " + what);
    };
    auto expect = [&](Special s) {
        if (pos >= tokens.size() || tokens[pos] != id_of(s))
            throw fail("expected <" + std::string(special_name(s)) + ">");
        ++pos;
    };
    auto take_normals = [&](std::vector<TokenId>& out) {
        while (pos < tokens.size() && vocab.is_normal(tokens[pos])) out.push_back(tokens[pos++]);
    };

    ParsedExample ex;
    expect(Special::inp_start);
    take_normals(ex.inputs);
    if (ex.inputs.empty()) throw fail("no input tokens");
    expect(Special::inp_end);
    if (pos < tokens.size() && tokens[pos] == id_of(Special::think_start)) {
        ++pos;
        ex.is_cot = true;
        take_normals(ex.thoughts);
        expect(Special::think_end);
    }
    expect(Special::ans_start);
    if (pos >= tokens.size() || !vocab.is_normal(tokens[pos])) throw fail("missing answer token");
    ex.answer = tokens[pos++];
    expect(Special::ans_end);
    expect(Special::eos);
    return ex;
}

std::vector<ParsedExample> parse_sequence(std::span<const TokenId> tokens,
                                          const Vocabulary& vocab) {
    if (tokens.empty() || tokens[0] != id_of(Special::bos))
        throw InputError("sequence must start with <bos>");
    std::vector<ParsedExample> out;
    std::size_t pos = 1;
    while (pos < tokens.size()) out.push_back(parse_example(tokens, pos, vocab));
    return out;
}

std::vector<TokenId> compute_chain(const World& world, const Dag& dag,
                                   std::span<const std::uint32_t> proc_ids,
                                   std::span<const TokenId> inputs) {
    if (inputs.size() != dag.n_inputs)
        throw InputError("compute_chain: got " + std::to_string(inputs.size()) +
                         " inputs for a DAG with N = " + std::to_string(dag.n_inputs));
    if (proc_ids.size() != dag.n_chain)
        throw InputError("compute_chain: need one processor per chain token");
    std::vector<TokenId> nodes(inputs.begin(), inputs.end());
    nodes.reserve(dag.node_count());
    std::vector<TokenId> parent_tokens(dag.fan_in);
    for (std::uint32_t c = 1; c <= dag.n_chain; ++c) {
        const auto& parents = dag.parents[c - 1];
        for (std::size_t i = 0; i < parents.size(); ++i) parent_tokens[i] = nodes[parents[i]];
        nodes.push_back(
            chain_token(world.cache[proc_ids[c - 1]], world.embedding, world.vocab, parent_tokens));
    }
    return std::vector<TokenId>(nodes.begin() + dag.n_inputs, nodes.end());
}

Sequence generate_sequence(const DatasetConfig& cfg, std::uint64_t j, const World& world) {
    if (j >= cfg.t)
        throw InputError("generate_sequence: index " + std::to_string(j) + " must be < T = " +
                         std::to_string(cfg.t));
    const auto& vocab = world.vocab;
    Sequence seq;
    seq.seq_id = j;
    auto& meta = seq.meta;
    meta.seed = cfg.sequence_seed(j);
    Xoshiro256 rng(meta.seed);

    meta.n = cfg.n_choices[uniform_index(rng, cfg.n_choices.size())];
    meta.m = cfg.m_choices[uniform_index(rng, cfg.m_choices.size())];
    meta.c = cfg.c_choices[uniform_index(rng, cfg.c_choices.size())];
    meta.k = cfg.k;
    meta.dag = sample_dag(meta.n, meta.m, meta.c, rng);
    meta.proc_ids = sample_processors(world.cache, meta.c, rng);
    meta.r_cot = r_cot(cfg.recipe, j, cfg.t);

    const std::size_t expected_len = 1 + std::size_t{cfg.k} * (meta.n + meta.c + 7);
    seq.tokens.reserve(expected_len);
    seq.loss_mask.reserve(expected_len);
    seq.tokens.push_back(id_of(Special::bos));
    seq.loss_mask.push_back(0);

    seq.examples.reserve(cfg.k);
    meta.cot_flags.reserve(cfg.k);
    for (std::uint32_t i = 0; i < cfg.k; ++i) {
        Example ex;
        ex.inputs.resize(meta.n);
        for (auto& x : ex.inputs)
            x = vocab.first_normal() + static_cast<TokenId>(uniform_index(rng, vocab.normal_count()));
        ex.uniform_draw = uniform_open01(rng);
        ex.is_cot = meta.r_cot >= ex.uniform_draw;
        ex.chain = compute_chain(world, meta.dag, meta.proc_ids, ex.inputs);
        append_example(seq.tokens, seq.loss_mask, ex.inputs, ex.chain, ex.is_cot, vocab);
        meta.cot_flags.push_back(ex.is_cot);
        seq.examples.push_back(std::move(ex));
    }
    return seq;
}

std::vector<std::uint64_t> output_order(const DatasetConfig& cfg) {
    if (cfg.shuffle) {
        Xoshiro256 rng(cfg.shuffle_seed());
        return random_permutation(rng, cfg.t);
    }
    std::vector<std::uint64_t> order(cfg.t);
    for (std::uint64_t i = 0; i < cfg.t; ++i) order[i] = i;
    return order;
}

void generate_dataset(const DatasetConfig& cfg, const World& world,
                      const std::function<void(Sequence&&)>& sink) {
    cfg.validate();
    for (std::uint64_t j : output_order(cfg)) sink(generate_sequence(cfg, j, world));
}

nlohmann::ordered_json meta_to_json(const SequenceMeta& meta) {
    return {{"n", meta.n},
            {"m", meta.m},
            {"c", meta.c},
            {"k", meta.k},
            {"r_cot", meta.r_cot},
            {"dag", dag_to_json(meta.dag)},
            {"proc_ids", meta.proc_ids},
            {"cot_flags", meta.cot_flags},
            {"seed", meta.seed}};
}

SequenceMeta meta_from_json(const nlohmann::json& j) {
    SequenceMeta meta;
    try {
        meta.n = j.at("n").get<std::uint32_t>();
        meta.m = j.at("m").get<std::uint32_t>();
        meta.c = j.at("c").get<std::uint32_t>();
        meta.k = j.at("k").get<std::uint32_t>();
        meta.r_cot = j.at("r_cot").get<double>();
        meta.proc_ids = j.at("proc_ids").get<std::vector<std::uint32_t>>();
        meta.cot_flags = j.at("cot_flags").get<std::vector<bool>>();
        if (j.contains("seed")) meta.seed = j.at("seed").get<std::uint64_t>();
        meta.dag = dag_from_json(j.at("dag"));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed sequence meta: ") + e.what());
    }
    return meta;
}

nlohmann::ordered_json sequence_to_json(const Sequence& seq) {
    return {{"seq_id", seq.seq_id},
            {"tokens", seq.tokens},
            {"loss_mask", seq.loss_mask},
            {"meta", meta_to_json(seq.meta)}};
}

Sequence sequence_from_json(const nlohmann::json& j) {
    Sequence seq;
    try {
        seq.seq_id = j.at("seq_id").get<std::uint64_t>();
        seq.tokens = j.at("tokens").get<std::vector<TokenId>>();
        seq.loss_mask = j.at("loss_mask").get<std::vector<std::uint8_t>>();
        seq.meta = meta_from_json(j.at("meta"));
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed sequence record: ") + e.what());
    }
    if (seq.loss_mask.size() != seq.tokens.size())
        throw InputError("sequence " + std::to_string(seq.seq_id) +
                         ": loss_mask length differs from tokens length");
    return seq;
}

}  // namespace cotlab
