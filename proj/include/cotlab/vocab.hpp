#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cotlab {

using TokenId = std::uint32_t;

// The nine delimiter roles. The enumerator value is also the token id:
// special tokens always occupy ids 0..8 in this order.
enum class Special : TokenId {
    pad = 0,
    bos = 1,
    eos = 2,
    inp_start = 3,
    inp_end = 4,
    think_start = 5,
    think_end = 6,
    ans_start = 7,
    ans_end = 8,
};

inline constexpr TokenId kSpecialCount = 9;
inline constexpr TokenId kMinVocabSize = kSpecialCount + 1;

inline constexpr std::array<Special, kSpecialCount> kAllSpecials = {
    Special::pad,        Special::bos,       Special::eos,       Special::inp_start, Special::inp_end,
    Special::think_start, Special::think_end, Special::ans_start, Special::ans_end,
};

constexpr TokenId id_of(Special s) noexcept { return static_cast<TokenId>(s); }

std::string_view special_name(Special s) noexcept;

class Vocabulary {
public:
    // Throws ConfigError when size < 10.
    explicit Vocabulary(TokenId size);

    TokenId size() const noexcept { return size_; }
    TokenId id(Special s) const noexcept { return id_of(s); }

    TokenId first_normal() const noexcept { return kSpecialCount; }
    TokenId normal_count() const noexcept { return size_ - kSpecialCount; }

    bool is_special(TokenId t) const noexcept { return t < kSpecialCount; }
    bool is_normal(TokenId t) const noexcept { return t >= kSpecialCount && t < size_; }
    bool contains(TokenId t) const noexcept { return t < size_; }

    std::optional<Special> special_role(TokenId t) const noexcept;

    std::vector<TokenId> normal_ids() const;

    bool operator==(const Vocabulary&) const = default;

private:
    TokenId size_;
};

Vocabulary new_vocabulary(TokenId size);

// Hidden data embeddings E_data: one row per vocabulary id, i.i.d. N(0, 1)
// entries filled row-major from Xoshiro256 seeded with `seed`.
class EmbeddingMatrix {
public:
    EmbeddingMatrix(std::uint32_t rows, std::uint32_t dim, std::uint64_t seed,
                    std::vector<float> data);

    std::uint32_t rows() const noexcept { return rows_; }
    std::uint32_t dim() const noexcept { return dim_; }
    std::uint64_t seed() const noexcept { return seed_; }

    std::span<const float> data() const noexcept { return data_; }
    std::span<const float> row(TokenId t) const noexcept {
        return std::span<const float>(data_).subspan(std::size_t{t} * dim_, dim_);
    }

    // Dimension-major double copy: column k lives at [k * rows, (k + 1) * rows).
    // Lets the chain-token argmax sweep all rows with unit stride.
    std::span<const double> columns() const noexcept { return columns_; }

    bool operator==(const EmbeddingMatrix& other) const {
        return rows_ == other.rows_ && dim_ == other.dim_ && seed_ == other.seed_ &&
               data_ == other.data_;
    }

private:
    std::uint32_t rows_;
    std::uint32_t dim_;
    std::uint64_t seed_;
    std::vector<float> data_;
    std::vector<double> columns_;
};

// Throws ConfigError when dim == 0.
EmbeddingMatrix sample_embedding_matrix(const Vocabulary& vocab, std::uint32_t dim,
                                        std::uint64_t seed);

// Binary layout, little-endian: "CILEMB01", u64 seed, u32 rows, u32 dim,
// 8 zero bytes, then rows*dim f32 row-major.
std::string embedding_bytes(const EmbeddingMatrix& e);
void write_embedding(const EmbeddingMatrix& e, const std::filesystem::path& path);
EmbeddingMatrix read_embedding(const std::filesystem::path& path);

}  // namespace cotlab
