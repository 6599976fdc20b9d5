#pragma once

#include "cotlab/rng.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cotlab {

using NodeIndex = std::uint32_t;

// Topologically sorted causal structure for one sequence.
//
// Nodes 0..N-1 are the inputs; chain node c (1-based) is node N + c - 1.
// parents[c - 1] lists the nodes chain node c reads from, sorted ascending.
struct Dag {
    std::uint32_t n_inputs = 0;
    std::uint32_t n_chain = 0;
    std::uint32_t fan_in = 0;
    std::vector<std::vector<NodeIndex>> parents;

    NodeIndex chain_node(std::uint32_t c) const noexcept { return n_inputs + c - 1; }
    NodeIndex answer_node() const noexcept { return chain_node(n_chain); }
    std::uint32_t node_count() const noexcept { return n_inputs + n_chain; }

    bool operator==(const Dag&) const = default;
};

// fan_in = min(M, N); chain node c draws fan_in distinct parents uniformly
// from nodes [0, N + c - 1). Throws ConfigError if any argument is zero.
Dag sample_dag(std::uint32_t n_inputs, std::uint32_t max_parents, std::uint32_t n_chain,
               Xoshiro256& rng);

struct DagViolation {
    enum class Kind { shape, fan_in, parent_count, topology, duplicate_parent };
    Kind kind;
    std::uint32_t chain_node = 0;  // 1-based; 0 when the violation is global
    std::string message;
};

// First violated structural invariant, or nullopt for a well-formed DAG.
std::optional<DagViolation> validate_dag(const Dag& dag);

// reach[i] is true iff the answer node is reachable from chain node i + 1,
// for the C - 1 intermediate steps.
std::vector<bool> steps_feeding_answer(const Dag& dag);

nlohmann::ordered_json dag_to_json(const Dag& dag);
// Throws InputError on missing fields or a DAG that fails validation.
Dag dag_from_json(const nlohmann::json& j);

}  // namespace cotlab
