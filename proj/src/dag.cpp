#include "cotlab/dag.hpp"

#include "cotlab/errors.hpp"

#include <algorithm>

namespace cotlab {

Dag sample_dag(std::uint32_t n_inputs, std::uint32_t max_parents, std::uint32_t n_chain,
               Xoshiro256& rng) {
    if (n_inputs == 0 || max_parents == 0 || n_chain == 0)
        throw ConfigError("sample_dag: N, M and C must all be >= 1");
    Dag dag;
    dag.n_inputs = n_inputs;
    dag.n_chain = n_chain;
    dag.fan_in = std::min(max_parents, n_inputs);
    dag.parents.reserve(n_chain);
    for (std::uint32_t c = 1; c <= n_chain; ++c) {
        auto chosen = sample_without_replacement(rng, dag.chain_node(c), dag.fan_in);
        std::sort(chosen.begin(), chosen.end());
        dag.parents.push_back(std::move(chosen));
    }
    return dag;
}

std::optional<DagViolation> validate_dag(const Dag& dag) {
    using Kind = DagViolation::Kind;
    if (dag.n_inputs == 0 || dag.n_chain == 0)
        return DagViolation{Kind::shape, 0, "n_inputs and n_chain must be >= 1"};
    if (dag.parents.size() != dag.n_chain)
        return DagViolation{Kind::shape, 0,
                            "expected " + std::to_string(dag.n_chain) + " parent lists, found " +
                                std::to_string(dag.parents.size())};
    if (dag.fan_in == 0 || dag.fan_in > dag.n_inputs)
        return DagViolation{Kind::fan_in, 0,
                            "fan_in " + std::to_string(dag.fan_in) + " outside [1, n_inputs]"};

    std::vector<bool> seen;
    for (std::uint32_t c = 1; c <= dag.n_chain; ++c) {
        const auto& list = dag.parents[c - 1];
        if (list.size() != dag.fan_in)
            return DagViolation{Kind::parent_count, c,
                                "chain node " + std::to_string(c) + " has " +
                                    std::to_string(list.size()) + " parents, expected " +
                                    std::to_string(dag.fan_in)};
        const NodeIndex limit = dag.chain_node(c);
        seen.assign(limit, false);
        for (NodeIndex p : list) {
            if (p >= limit)
                return DagViolation{Kind::topology, c,
                                    "chain node " + std::to_string(c) + " (node " +
                                        std::to_string(limit) + ") lists parent " +
                                        std::to_string(p) + " which is not earlier"};
            if (seen[p])
                return DagViolation{Kind::duplicate_parent, c,
                                    "chain node " + std::to_string(c) + " lists parent " +
                                        std::to_string(p) + " twice"};
            seen[p] = true;
        }
    }
    return std::nullopt;
}

std::vector<bool> steps_feeding_answer(const Dag& dag) {
    // Nodes are topologically sorted, so one backward sweep from the answer
    // marks every ancestor.
    std::vector<bool> ancestor(dag.node_count(), false);
    ancestor[dag.answer_node()] = true;
    for (std::uint32_t c = dag.n_chain; c >= 1; --c) {
        if (!ancestor[dag.chain_node(c)]) continue;
        for (NodeIndex p : dag.parents[c - 1]) ancestor[p] = true;
    }
    std::vector<bool> steps(dag.n_chain - 1);
    for (std::uint32_t c = 1; c < dag.n_chain; ++c) steps[c - 1] = ancestor[dag.chain_node(c)];
    return steps;
}

nlohmann::ordered_json dag_to_json(const Dag& dag) {
    return {{"n_inputs", dag.n_inputs},
            {"n_chain", dag.n_chain},
            {"fan_in", dag.fan_in},
            {"parents", dag.parents}};
}

Dag dag_from_json(const nlohmann::json& j) {
    Dag dag;
    try {
        dag.n_inputs = j.at("n_inputs").get<std::uint32_t>();
        dag.n_chain = j.at("n_chain").get<std::uint32_t>();
        dag.fan_in = j.at("fan_in").get<std::uint32_t>();
        dag.parents = j.at("parents").get<std::vector<std::vector<NodeIndex>>>();
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed dag: ") + e.what());
    }
    if (auto v = validate_dag(dag)) throw InputError("invalid dag: " + v->message);
    return dag;
}

}  // namespace cotlab
