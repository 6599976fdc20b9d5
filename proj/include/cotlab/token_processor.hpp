#pragma once

#include "cotlab/rng.hpp"
#include "cotlab/vocab.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cotlab {

inline constexpr double kDefaultLeakySlope = 0.01;
inline constexpr std::uint32_t kDefaultMlpDepth = 1;

// Bias-free MLP with `depth` square layers. LeakyReLU sits between layers;
// the last layer is linear because chain_token applies the activation after
// averaging over parents. The slope is kept at f32 precision, matching the
// on-disk format.
class Mlp {
public:
    Mlp(std::uint32_t dim, std::uint32_t depth, double slope, std::vector<float> weights);

    std::uint32_t dim() const noexcept { return dim_; }
    std::uint32_t depth() const noexcept { return depth_; }
    double slope() const noexcept { return slope_; }
    std::span<const float> weights() const noexcept { return weights_; }
    // Row-major dim x dim block of layer `l`.
    std::span<const float> layer(std::uint32_t l) const noexcept {
        return std::span<const float>(weights_).subspan(std::size_t{l} * dim_ * dim_,
                                                        std::size_t{dim_} * dim_);
    }

    double activate(double v) const noexcept { return v >= 0.0 ? v : slope_ * v; }

    // out = W_depth(... phi(W_1 x)). `in` and `out` have length dim.
    void apply(std::span<const double> in, std::span<double> out) const;

    bool operator==(const Mlp&) const = default;

private:
    std::uint32_t dim_;
    std::uint32_t depth_;
    double slope_;
    std::vector<float> weights_;
};

class TokenProcessorCache {
public:
    TokenProcessorCache(std::uint64_t seed, std::vector<Mlp> processors);

    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t size() const noexcept { return processors_.size(); }
    const Mlp& operator[](std::size_t i) const { return processors_.at(i); }
    std::span<const Mlp> processors() const noexcept { return processors_; }

    bool operator==(const TokenProcessorCache&) const = default;

private:
    std::uint64_t seed_;
    std::vector<Mlp> processors_;
};

// Weights are N(0, 1), filled processor by processor, layer by layer,
// row-major, from one Xoshiro256 stream seeded with `seed`.
TokenProcessorCache new_cache(std::uint32_t cache_size, std::uint32_t dim, std::uint32_t depth,
                              double slope, std::uint64_t seed);

// C uniform draws with replacement of cache indices.
std::vector<std::uint32_t> sample_processors(const TokenProcessorCache& cache,
                                             std::uint32_t n_chain, Xoshiro256& rng);

// One chain token: average the MLP outputs over the parents' embedding rows,
// apply LeakyReLU, and return the normal token whose embedding row has the
// largest dot product with the result. Ties go to the smallest id.
TokenId chain_token(const Mlp& mlp, const EmbeddingMatrix& e, const Vocabulary& vocab,
                    std::span<const TokenId> parent_ids);

// Binary layout, little-endian: "CILMLP01", u64 seed, u32 count, u32 dim,
// u32 depth, f32 slope, then every weight as f32 in generation order.
std::string cache_bytes(const TokenProcessorCache& cache);
void write_cache(const TokenProcessorCache& cache, const std::filesystem::path& path);
TokenProcessorCache read_cache(const std::filesystem::path& path);

}  // namespace cotlab
