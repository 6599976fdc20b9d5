#include "cotlab/token_processor.hpp"

#include "binary_io.hpp"
#include "cotlab/errors.hpp"

#include <algorithm>
#include <string>

namespace cotlab {

namespace {
constexpr std::string_view kCacheMagic = "CILMLP01";

void check_slope(double slope) {
    if (!(slope > 0.0 && slope <= 1.0))
        throw ConfigError("LeakyReLU slope must lie in (0, 1], got " + std::to_string(slope));
}
}  // namespace

Mlp::Mlp(std::uint32_t dim, std::uint32_t depth, double slope, std::vector<float> weights)
    : dim_(dim),
      depth_(depth),
      slope_(static_cast<float>(slope)),
      weights_(std::move(weights)) {
    if (dim == 0 || depth == 0) throw ConfigError("MLP dim and depth must be >= 1");
    check_slope(slope);
    if (weights_.size() != std::size_t{depth} * dim * dim)
        throw InputError("MLP weight count does not match depth * dim * dim");
}

void Mlp::apply(std::span<const double> in, std::span<double> out) const {
    thread_local std::vector<double> cur, next;
    cur.assign(in.begin(), in.end());
    next.resize(dim_);
    for (std::uint32_t l = 0; l < depth_; ++l) {
        if (l > 0)
            for (auto& v : cur) v = activate(v);
        const auto w = layer(l);
        for (std::uint32_t r = 0; r < dim_; ++r) {
            double acc = 0.0;
            for (std::uint32_t c = 0; c < dim_; ++c) acc += double{w[r * dim_ + c]} * cur[c];
            next[r] = acc;
        }
        cur.swap(next);
    }
    std::copy(cur.begin(), cur.end(), out.begin());
}

TokenProcessorCache::TokenProcessorCache(std::uint64_t seed, std::vector<Mlp> processors)
    : seed_(seed), processors_(std::move(processors)) {
    if (processors_.empty()) throw ConfigError("token processor cache must not be empty");
    const auto& first = processors_.front();
    for (const auto& p : processors_)
        if (p.dim() != first.dim() || p.depth() != first.depth() || p.slope() != first.slope())
            throw ConfigError("all cached processors must share dim, depth and slope");
}

TokenProcessorCache new_cache(std::uint32_t cache_size, std::uint32_t dim, std::uint32_t depth,
                              double slope, std::uint64_t seed) {
    if (cache_size == 0) throw ConfigError("cache_size must be >= 1");
    if (dim == 0 || depth == 0) throw ConfigError("MLP dim and depth must be >= 1");
    check_slope(slope);
    const std::size_t per_mlp = std::size_t{depth} * dim * dim;
    std::vector<float> all(per_mlp * cache_size);
    Xoshiro256 rng(seed);
    fill_standard_normal<float>(rng, all);

    std::vector<Mlp> mlps;
    mlps.reserve(cache_size);
    for (std::uint32_t i = 0; i < cache_size; ++i) {
        auto first = all.begin() + static_cast<std::ptrdiff_t>(i * per_mlp);
        mlps.emplace_back(dim, depth, slope,
                          std::vector<float>(first, first + static_cast<std::ptrdiff_t>(per_mlp)));
    }
    return TokenProcessorCache(seed, std::move(mlps));
}

std::vector<std::uint32_t> sample_processors(const TokenProcessorCache& cache,
                                             std::uint32_t n_chain, Xoshiro256& rng) {
    if (n_chain == 0) throw ConfigError("sample_processors: C must be >= 1");
    std::vector<std::uint32_t> ids(n_chain);
    for (auto& id : ids) id = static_cast<std::uint32_t>(uniform_index(rng, cache.size()));
    return ids;
}

TokenId chain_token(const Mlp& mlp, const EmbeddingMatrix& e, const Vocabulary& vocab,
                    std::span<const TokenId> parent_ids) {
    if (parent_ids.empty()) throw InputError("chain_token: parent list is empty");
    if (e.rows() != vocab.size()) throw InputError("chain_token: embedding rows != vocab size");
    if (e.dim() != mlp.dim()) throw InputError("chain_token: embedding dim != MLP dim");
    const std::uint32_t d = e.dim();

    std::vector<double> x(d), h(d), mean(d, 0.0);
    for (TokenId p : parent_ids) {
        if (!vocab.contains(p))
            throw InputError("chain_token: parent id " + std::to_string(p) + " out of range");
        const auto row = e.row(p);
        std::copy(row.begin(), row.end(), x.begin());
        mlp.apply(x, h);
        for (std::uint32_t k = 0; k < d; ++k) mean[k] += h[k];
    }
    const double m = static_cast<double>(parent_ids.size());
    for (auto& v : mean) v = mlp.activate(v / m);

    // Score every normal row, one embedding column at a time.
    const std::uint32_t rows = e.rows();
    const std::uint32_t first = vocab.first_normal();
    thread_local std::vector<double> scores;
    scores.assign(rows, 0.0);
    const auto cols = e.columns();
    for (std::uint32_t k = 0; k < d; ++k) {
        const double* col = cols.data() + std::size_t{k} * rows;
        const double hk = mean[k];
        for (std::uint32_t t = first; t < rows; ++t) scores[t] += col[t] * hk;
    }
    TokenId best = first;
    for (std::uint32_t t = first + 1; t < rows; ++t)
        if (scores[t] > scores[best]) best = t;
    return best;
}

std::string cache_bytes(const TokenProcessorCache& cache) {
    const auto& first = cache[0];
    detail::ByteWriter w;
    w.magic(kCacheMagic);
    w.u64(cache.seed());
    w.u32(static_cast<std::uint32_t>(cache.size()));
    w.u32(first.dim());
    w.u32(first.depth());
    w.f32(static_cast<float>(first.slope()));
    for (const auto& mlp : cache.processors())
        for (float v : mlp.weights()) w.f32(v);
    return w.bytes();
}

void write_cache(const TokenProcessorCache& cache, const std::filesystem::path& path) {
    detail::save_bytes(cache_bytes(cache), path);
}

TokenProcessorCache read_cache(const std::filesystem::path& path) {
    auto r = detail::ByteReader::load(path);
    r.expect_magic(kCacheMagic);
    const auto seed = r.u64();
    const auto count = r.u32();
    const auto dim = r.u32();
    const auto depth = r.u32();
    const double slope = r.f32();
    const std::size_t per_mlp = std::size_t{depth} * dim * dim;
    if (r.remaining() != per_mlp * count * 4) throw IoError(r.source() + ": payload size mismatch");
    std::vector<Mlp> mlps;
    mlps.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        std::vector<float> w(per_mlp);
        for (auto& v : w) v = r.f32();
        mlps.emplace_back(dim, depth, slope, std::move(w));
    }
    return TokenProcessorCache(seed, std::move(mlps));
}

}  // namespace cotlab
