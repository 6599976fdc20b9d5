#include "cotlab/vocab.hpp"

#include "binary_io.hpp"
#include "cotlab/errors.hpp"
#include "cotlab/rng.hpp"

#include <numeric>
#include <string>

namespace cotlab {

namespace {
constexpr std::string_view kEmbeddingMagic = "CILEMB01";
constexpr std::size_t kEmbeddingReserved = 8;
}  // namespace

std::string_view special_name(Special s) noexcept {
    switch (s) {
        case Special::pad: return "pad";
        case Special::bos: return "bos";
        case Special::eos: return "eos";
        case Special::inp_start: return "inp_start";
        case Special::inp_end: return "inp_end";
        case Special::think_start: return "think_start";
        case Special::think_end: return "think_end";
        case Special::ans_start: return "ans_start";
        case Special::ans_end: return "ans_end";
    }
    return "?";
}

Vocabulary::Vocabulary(TokenId size) : size_(size) {
    if (size < kMinVocabSize)
        throw ConfigError("vocabulary size must be at least " + std::to_string(kMinVocabSize) +
                          ", got " + std::to_string(size));
}

std::optional<Special> Vocabulary::special_role(TokenId t) const noexcept {
    if (!is_special(t)) return std::nullopt;
    return static_cast<Special>(t);
}

std::vector<TokenId> Vocabulary::normal_ids() const {
    std::vector<TokenId> ids(normal_count());
    std::iota(ids.begin(), ids.end(), first_normal());
    return ids;
}

Vocabulary new_vocabulary(TokenId size) { return Vocabulary(size); }

EmbeddingMatrix::EmbeddingMatrix(std::uint32_t rows, std::uint32_t dim, std::uint64_t seed,
                                 std::vector<float> data)
    : rows_(rows), dim_(dim), seed_(seed), data_(std::move(data)) {
    if (rows == 0 || dim == 0) throw ConfigError("embedding matrix needs rows >= 1 and dim >= 1");
    if (data_.size() != std::size_t{rows} * dim)
        throw InputError("embedding data has " + std::to_string(data_.size()) +
                         " entries, expected " + std::to_string(std::size_t{rows} * dim));
    columns_.resize(data_.size());
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = 0; k < dim; ++k) columns_[k * rows + r] = data_[r * dim + k];
}

EmbeddingMatrix sample_embedding_matrix(const Vocabulary& vocab, std::uint32_t dim,
                                        std::uint64_t seed) {
    if (dim == 0) throw ConfigError("embedding dimension must be >= 1");
    std::vector<float> data(std::size_t{vocab.size()} * dim);
    Xoshiro256 rng(seed);
    fill_standard_normal<float>(rng, data);
    return EmbeddingMatrix(vocab.size(), dim, seed, std::move(data));
}

std::string embedding_bytes(const EmbeddingMatrix& e) {
    detail::ByteWriter w;
    w.magic(kEmbeddingMagic);
    w.u64(e.seed());
    w.u32(e.rows());
    w.u32(e.dim());
    w.zeros(kEmbeddingReserved);
    for (float v : e.data()) w.f32(v);
    return w.bytes();
}

void write_embedding(const EmbeddingMatrix& e, const std::filesystem::path& path) {
    detail::save_bytes(embedding_bytes(e), path);
}

EmbeddingMatrix read_embedding(const std::filesystem::path& path) {
    auto r = detail::ByteReader::load(path);
    r.expect_magic(kEmbeddingMagic);
    const auto seed = r.u64();
    const auto rows = r.u32();
    const auto dim = r.u32();
    r.skip(kEmbeddingReserved);
    const std::size_t count = std::size_t{rows} * dim;
    if (r.remaining() != count * 4) throw IoError(r.source() + ": payload size mismatch");
    std::vector<float> data(count);
    for (auto& v : data) v = r.f32();
    return EmbeddingMatrix(rows, dim, seed, std::move(data));
}

}  // namespace cotlab
