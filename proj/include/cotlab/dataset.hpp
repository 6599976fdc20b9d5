#pragma once

#include "cotlab/langsym.hpp"
#include "cotlab/sequence.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cotlab {

inline constexpr std::string_view kToolVersion = "cotlab 1.0.0";

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

enum class DatasetKind { abstract, abstract_eval, langsym, langsym_eval };

std::string_view kind_name(DatasetKind k) noexcept;
DatasetKind parse_kind(std::string_view text);

struct StripParams {
    std::uint32_t k_prime = 0;
    std::uint64_t seed = 0;
    bool operator==(const StripParams&) const = default;
};

// Everything needed to regenerate a dataset bit-exactly. Eval kinds are
// all-CoT source datasets turned into prompts and stripped with `strip`.
struct DatasetSpec {
    DatasetKind kind = DatasetKind::abstract;
    nlohmann::json config;  // DatasetConfig or LangSymConfig as JSON
    std::optional<StripParams> strip;

    std::uint64_t record_count() const;
    std::uint64_t shard_size() const;
    std::uint64_t shard_count() const;
};

struct OutputFile {
    std::string path;  // relative to the dataset directory
    std::string sha256;
    std::uint64_t count = 0;
};

struct Manifest {
    std::string tool_version{kToolVersion};
    DatasetSpec spec;
    std::vector<OutputFile> outputs;
    nlohmann::json order;  // {"shuffle", "seed", "sha256"}
    std::uint64_t records = 0;
    double wall_clock_seconds = 0.0;
};

nlohmann::ordered_json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
Manifest read_manifest(const std::filesystem::path& dir);

std::string shard_name(std::uint64_t shard);

// Regenerates one shard's JSON-lines content from the spec alone.
class ShardRenderer {
public:
    explicit ShardRenderer(const DatasetSpec& spec);
    ~ShardRenderer();
    ShardRenderer(const ShardRenderer&) = delete;
    ShardRenderer& operator=(const ShardRenderer&) = delete;

    std::string render(std::uint64_t shard) const;
    std::uint64_t shard_records(std::uint64_t shard) const;
    // Side artifacts (embedding.bin, processors.bin) as (name, bytes).
    std::vector<std::pair<std::string, std::string>> side_files() const;
    // Output position -> record index before shuffling.
    const std::vector<std::uint64_t>& order() const noexcept { return order_; }

private:
    struct State;
    DatasetSpec spec_;
    std::vector<std::uint64_t> order_;
    std::unique_ptr<State> state_;
};

// Renders every shard on up to `workers` threads and writes the directory.
// Output bytes do not depend on `workers`.
Manifest write_dataset(const DatasetSpec& spec, const std::filesystem::path& dir,
                       unsigned workers = 1);

// Writes records produced elsewhere (used when transforming an existing
// dataset). `records` must already be in output order.
Manifest write_records(const DatasetSpec& spec, const std::filesystem::path& dir,
                       const std::vector<std::string>& records, const nlohmann::json& order,
                       double wall_clock_seconds);

// Streams the records of every shard in order.
void for_each_record(const std::filesystem::path& dir, const Manifest& m,
                     const std::function<void(const nlohmann::json&)>& fn);

struct VerifyReport {
    std::vector<std::string> hash_mismatches;
    std::vector<std::string> regeneration_mismatches;
    std::vector<std::uint64_t> regenerated_shards;
    bool ok() const noexcept { return hash_mismatches.empty() && regeneration_mismatches.empty(); }
};

// Rehashes every listed file, then regenerates `sample` shards (all when
// sample is 0 or exceeds the shard count) chosen with `seed`.
VerifyReport verify_dataset(const std::filesystem::path& dir, std::uint64_t sample,
                            std::uint64_t seed, unsigned workers = 1);

}  // namespace cotlab
