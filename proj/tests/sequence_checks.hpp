#pragma once

#include "chain_oracle.hpp"
#include "cotlab/sequence.hpp"

#include <numeric>
#include <string>

namespace cotlab::test {

// Returns an empty string when every structural invariant holds for `seq`,
// otherwise a description of the first violation.
inline std::string check_sequence(const Sequence& seq, const World& world,
                                  const DenseOracle& oracle) {
    const auto& m = seq.meta;
    const std::string where = "seq " + std::to_string(seq.seq_id) + ": ";
    if (seq.tokens.empty() || seq.tokens[0] != id_of(Special::bos)) return where + "no bos";
    if (m.cot_flags.size() != m.k) return where + "cot_flags size";

    std::size_t want_len = 1, want_mask = 0;
    for (bool cot : m.cot_flags) {
        want_len += cot ? m.n + m.c + 7 : m.n + 6;
        want_mask += cot ? m.c + 5 : 4;
    }
    if (seq.tokens.size() != want_len) return where + "length formula";
    if (seq.loss_mask.size() != want_len) return where + "mask length";
    if (std::accumulate(seq.loss_mask.begin(), seq.loss_mask.end(), std::size_t{0}) != want_mask)
        return where + "mask count";

    // Walk example boundaries from the flags alone.
    std::size_t pos = 1;
    for (bool cot : m.cot_flags) {
        for (std::size_t i = 0; i < m.n + 2; ++i)
            if (seq.loss_mask[pos + i] != 0) return where + "supervised prompt token";
        pos += cot ? m.n + m.c + 7 : m.n + 6;
        if (seq.tokens[pos - 1] != id_of(Special::eos)) return where + "example boundary";
    }
    if (seq.loss_mask[0] != 0) return where + "supervised bos";

    const auto parsed = parse_sequence(seq.tokens, world.vocab);
    if (parsed.size() != m.k) return where + "parsed example count";
    std::vector<TokenId> tokens{id_of(Special::bos)};
    std::vector<std::uint8_t> mask{0};
    for (std::size_t i = 0; i < parsed.size(); ++i) {
        const auto& ex = parsed[i];
        if (ex.is_cot != m.cot_flags[i]) return where + "parsed cot flag";
        if (ex.inputs.size() != m.n) return where + "parsed input count";
        const auto chain = oracle.chain(world.cache, m.dag, m.proc_ids, ex.inputs);
        if (chain.back() != ex.answer) return where + "answer differs from recomputed chain";
        if (ex.is_cot && !std::equal(ex.thoughts.begin(), ex.thoughts.end(), chain.begin(),
                                     chain.end() - 1))
            return where + "thoughts differ from recomputed chain";
        if (ex.is_cot && ex.thoughts.size() + 1 != chain.size()) return where + "thought count";
        append_example(tokens, mask, ex.inputs, chain, ex.is_cot, world.vocab);
    }
    if (tokens != seq.tokens || mask != seq.loss_mask) return where + "parse-render mismatch";
    return {};
}

}  // namespace cotlab::test
