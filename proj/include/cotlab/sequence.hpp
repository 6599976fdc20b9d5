#pragma once

#include "cotlab/dag.hpp"
#include "cotlab/recipe.hpp"
#include "cotlab/token_processor.hpp"
#include "cotlab/vocab.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace cotlab {

struct DatasetConfig {
    TokenId vocab_size = 1024;
    std::uint32_t dim = 10;
    std::vector<std::uint32_t> n_choices{4};
    std::vector<std::uint32_t> m_choices{4};
    std::vector<std::uint32_t> c_choices{4};
    std::uint32_t k = 40;
    std::uint64_t t = 1000;
    Recipe recipe;
    std::uint32_t cache_size = 1024;
    std::uint32_t mlp_depth = kDefaultMlpDepth;
    double leaky_slope = kDefaultLeakySlope;
    std::uint64_t master_seed = 0;
    bool shuffle = false;
    std::uint64_t shard_size = 10000;

    // Throws ConfigError on the first invalid field.
    void validate() const;

    std::uint64_t embedding_seed() const noexcept;
    std::uint64_t cache_seed() const noexcept;
    std::uint64_t sequence_seed(std::uint64_t j) const noexcept;
    // Output-order shuffle uses master_seed + 1.
    std::uint64_t shuffle_seed() const noexcept { return master_seed + 1; }
};

nlohmann::ordered_json config_to_json(const DatasetConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
DatasetConfig config_from_json(const nlohmann::json& j);

// The per-dataset hidden state every sequence draws on: vocabulary, data
// embeddings and the processor cache. Immutable once built.
struct World {
    Vocabulary vocab;
    EmbeddingMatrix embedding;
    TokenProcessorCache cache;

    static World from_config(const DatasetConfig& cfg);
};

struct Example {
    std::vector<TokenId> inputs;
    std::vector<TokenId> chain;  // chain.back() is the answer
    bool is_cot = false;
    double uniform_draw = 0.0;
};

struct SequenceMeta {
    std::uint32_t n = 0;
    std::uint32_t m = 0;  // sampled M before clamping; dag.fan_in is the clamped value
    std::uint32_t c = 0;
    std::uint32_t k = 0;
    double r_cot = 0.0;
    Dag dag;
    std::vector<std::uint32_t> proc_ids;
    std::vector<bool> cot_flags;
    std::uint64_t seed = 0;

    bool operator==(const SequenceMeta&) const = default;
};

struct Sequence {
    std::uint64_t seq_id = 0;
    std::vector<TokenId> tokens;
    std::vector<std::uint8_t> loss_mask;
    SequenceMeta meta;
    // Full generation record; populated by generate_sequence, empty when the
    // sequence was loaded from disk.
    std::vector<Example> examples;
};

// (inp_start, x..., inp_end, ans_start, y_C, ans_end, eos): N + 6 tokens.
std::vector<TokenId> render_standard_example(std::span<const TokenId> inputs, TokenId answer,
                                             const Vocabulary& vocab);
// (inp_start, x..., inp_end, think_start, y_1..y_{C-1}, think_end,
//  ans_start, y_C, ans_end, eos): N + C + 7 tokens.
std::vector<TokenId> render_cot_example(std::span<const TokenId> inputs,
                                        std::span<const TokenId> chain, const Vocabulary& vocab);

// Appends one rendered example and its loss mask. Supervised positions:
// standard -> ans_start, y_C, ans_end, eos (4);
// CoT -> think_start, y_1..y_C, think_end, ans_start, ans_end, eos (C + 5).
void append_example(std::vector<TokenId>& tokens, std::vector<std::uint8_t>& mask,
                    std::span<const TokenId> inputs, std::span<const TokenId> chain, bool as_cot,
                    const Vocabulary& vocab);

struct ParsedExample {
    std::vector<TokenId> inputs;
    std::vector<TokenId> thoughts;  // y_1..y_{C-1}; empty for standard examples
    TokenId answer = 0;
    bool is_cot = false;

    bool operator==(const ParsedExample&) const = default;
};

// Parses one example starting at tokens[pos]; advances pos past its eos.
ParsedExample parse_example(std::span<const TokenId> tokens, std::size_t& pos,
                            const Vocabulary& vocab);
// Parses bos followed by examples until the end. Throws InputError on any
// structural deviation.
std::vector<ParsedExample> parse_sequence(std::span<const TokenId> tokens,
                                          const Vocabulary& vocab);

// Recomputes the C chain tokens for one input vector from the DAG and the
// sequence's processors.
std::vector<TokenId> compute_chain(const World& world, const Dag& dag,
                                   std::span<const std::uint32_t> proc_ids,
                                   std::span<const TokenId> inputs);

// Draw order from the stream seeded with cfg.sequence_seed(j):
//   N, M, C choice indices; DAG parents for chain nodes 1..C; C processor
//   indices; then for each of the K examples its N input tokens followed by
//   its uniform draw u. Example i is CoT iff r_cot(j) >= u.
Sequence generate_sequence(const DatasetConfig& cfg, std::uint64_t j, const World& world);

// Output position -> seq_id. Identity unless cfg.shuffle.
std::vector<std::uint64_t> output_order(const DatasetConfig& cfg);

// Streams all T sequences to `sink` in output order.
void generate_dataset(const DatasetConfig& cfg, const World& world,
                      const std::function<void(Sequence&&)>& sink);

nlohmann::ordered_json meta_to_json(const SequenceMeta& meta);
SequenceMeta meta_from_json(const nlohmann::json& j);
nlohmann::ordered_json sequence_to_json(const Sequence& seq);
Sequence sequence_from_json(const nlohmann::json& j);

}  // namespace cotlab
