#include "cotlab/backends.hpp"

#include "cotlab/errors.hpp"
#include "cotlab/rng.hpp"
#include "process.hpp"

#include <algorithm>

namespace cotlab {

namespace {

std::string key_of(std::span<const TokenId> tokens) {
    return std::string(reinterpret_cast<const char*>(tokens.data()), tokens.size_bytes());
}

// Index just past the last inp_end, i.e. where generation starts.
std::size_t generation_start(std::span<const TokenId> prefix) {
    const auto it = std::find(prefix.rbegin(), prefix.rend(), id_of(Special::inp_end));
    if (it == prefix.rend()) throw BackendError("prefix has no query segment");
    return static_cast<std::size_t>(prefix.rend() - it);
}

}  // namespace

OracleBackend::OracleBackend(std::span<const EvalPrompt> prompts) {
    for (const auto& p : prompts) {
        const auto& chain = p.ground_truth_chain;
        std::vector<TokenId> tail{id_of(Special::think_start)};
        tail.insert(tail.end(), chain.begin(), chain.end() - 1);
        tail.insert(tail.end(), {id_of(Special::think_end), id_of(Special::ans_start), chain.back(),
                                 id_of(Special::ans_end), id_of(Special::eos)});
        completions_[key_of(p.tokens())] = std::move(tail);
    }
}

TokenId OracleBackend::next_token(std::span<const TokenId> prefix) {
    const std::size_t start = generation_start(prefix);
    const auto it = completions_.find(key_of(prefix.first(start)));
    if (it == completions_.end()) throw BackendError("oracle has no completion for this prompt");
    const auto& tail = it->second;
    const auto generated = prefix.subspan(start);

    std::size_t offset = 0;
    if (!generated.empty() && generated[0] == id_of(Special::ans_start))
        offset = tail.size() - 4;  // skip straight to the answer tail
    const std::size_t pos = offset + generated.size();
    return pos < tail.size() ? tail[pos] : id_of(Special::eos);
}

TokenId RandomBackend::next_token(std::span<const TokenId> prefix) {
    const TokenId last = prefix.empty() ? id_of(Special::eos) : prefix.back();
    if (vocab_.is_normal(last)) return id_of(Special::ans_end);
    switch (static_cast<Special>(last)) {
        case Special::inp_end:
        case Special::think_end: return id_of(Special::ans_start);
        case Special::think_start: return id_of(Special::think_end);
        case Special::ans_start: {
            std::uint64_t h = seed_;
            for (TokenId t : prefix) h = mix64(h ^ t);
            Xoshiro256 rng(h);
            return vocab_.first_normal() +
                   static_cast<TokenId>(uniform_index(rng, vocab_.normal_count()));
        }
        default: return id_of(Special::eos);
    }
}

StdioBackend::StdioBackend(const std::string& command)
    : child_(std::make_unique<detail::ChildProcess>(command)) {}

StdioBackend::~StdioBackend() = default;

TokenId StdioBackend::next_token(std::span<const TokenId> prefix) {
    const nlohmann::json request = {{"tokens", std::vector<TokenId>(prefix.begin(), prefix.end())}};
    const std::string reply = child_->exchange(request.dump());
    try {
        return nlohmann::json::parse(reply).at("next").get<TokenId>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError("bad reply '" + reply.substr(0, 80) + "': " + e.what());
    }
}

}  // namespace cotlab
