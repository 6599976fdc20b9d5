#include "cotlab/dataset.hpp"

#include "cotlab/errors.hpp"
#include "cotlab/eval.hpp"
#include "binary_io.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

namespace cotlab {

namespace {

constexpr const char* kManifestName = "manifest.json";

std::string to_hex(const unsigned char* data, std::size_t n) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(2 * n, '0');
    for (std::size_t i = 0; i < n; ++i) {
        out[2 * i] = digits[data[i] >> 4];
        out[2 * i + 1] = digits[data[i] & 0xF];
    }
    return out;
}

class Sha256 {
public:
    Sha256() : ctx_(EVP_MD_CTX_new()) {
        if (!ctx_ || EVP_DigestInit_ex(ctx_, EVP_sha256(), nullptr) != 1)
            throw IoError("sha256 init failed");
    }
    ~Sha256() { EVP_MD_CTX_free(ctx_); }
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    void update(const void* data, std::size_t n) {
        if (EVP_DigestUpdate(ctx_, data, n) != 1) throw IoError("sha256 update failed");
    }
    std::string hex() {
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int len = 0;
        if (EVP_DigestFinal_ex(ctx_, md, &len) != 1) throw IoError("sha256 final failed");
        return to_hex(md, len);
    }

private:
    EVP_MD_CTX* ctx_;
};

bool is_abstract(DatasetKind k) noexcept {
    return k == DatasetKind::abstract || k == DatasetKind::abstract_eval;
}
bool is_eval(DatasetKind k) noexcept {
    return k == DatasetKind::abstract_eval || k == DatasetKind::langsym_eval;
}

std::string order_hash(const std::vector<std::uint64_t>& order) {
    Sha256 h;
    for (auto v : order) {
        unsigned char le[8];
        for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
        h.update(le, 8);
    }
    return h.hex();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    detail::save_bytes(text, path);
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// is rethrown after all threads stop.
template <typename Fn>
void parallel_for(std::uint64_t n, unsigned workers, Fn fn) {
    if (n < workers) workers = static_cast<unsigned>(std::max<std::uint64_t>(n, 1));
    workers = std::max(1U, workers);
    if (workers == 1) {
        for (std::uint64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::uint64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mu;
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const auto i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mu);
                    if (!error) error = std::current_exception();
                    next.store(n);
                    return;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

nlohmann::ordered_json canonical_config(DatasetKind kind, const nlohmann::json& config) {
    if (is_abstract(kind)) return config_to_json(config_from_json(config));
    return langsym_config_to_json(langsym_config_from_json(config));
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
    Sha256 h;
    h.update(bytes.data(), bytes.size());
    return h.hex();
}

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Sha256 h;
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (in.gcount() > 0) h.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    if (in.bad()) throw IoError("read failed: " + path.string());
    return h.hex();
}

std::string_view kind_name(DatasetKind k) noexcept {
    switch (k) {
        case DatasetKind::abstract: return "abstract";
        case DatasetKind::abstract_eval: return "abstract_eval";
        case DatasetKind::langsym: return "langsym";
        case DatasetKind::langsym_eval: return "langsym_eval";
    }
    return "?";
}

DatasetKind parse_kind(std::string_view text) {
    for (auto k : {DatasetKind::abstract, DatasetKind::abstract_eval, DatasetKind::langsym,
                   DatasetKind::langsym_eval})
        if (kind_name(k) == text) return k;
    throw InputError("unknown dataset kind '" + std::string(text) + "'");
}

std::uint64_t DatasetSpec::record_count() const {
    return is_abstract(kind) ? config_from_json(config).t : langsym_config_from_json(config).t;
}

std::uint64_t DatasetSpec::shard_size() const {
    return is_abstract(kind) ? config_from_json(config).shard_size
                             : langsym_config_from_json(config).shard_size;
}

std::uint64_t DatasetSpec::shard_count() const {
    const auto n = record_count();
    const auto s = shard_size();
    return (n + s - 1) / s;
}

std::string shard_name(std::uint64_t shard) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "shard-%05llu.jsonl", static_cast<unsigned long long>(shard));
    return buf;
}

nlohmann::ordered_json manifest_to_json(const Manifest& m) {
    nlohmann::ordered_json outputs = nlohmann::ordered_json::array();
    for (const auto& o : m.outputs)
        outputs.push_back({{"path", o.path}, {"sha256", o.sha256}, {"count", o.count}});
    nlohmann::ordered_json strip = nullptr;
    if (m.spec.strip) strip = {{"k_prime", m.spec.strip->k_prime}, {"seed", m.spec.strip->seed}};
    return {{"tool_version", m.tool_version},
            {"kind", kind_name(m.spec.kind)},
            {"config", m.spec.config},
            {"strip", strip},
            {"order", m.order},
            {"records", m.records},
            {"outputs", outputs},
            {"wall_clock_seconds", m.wall_clock_seconds}};
}

Manifest manifest_from_json(const nlohmann::json& j) {
    Manifest m;
    try {
        m.tool_version = j.at("tool_version").get<std::string>();
        m.spec.kind = parse_kind(j.at("kind").get<std::string>());
        m.spec.config = j.at("config");
        if (j.contains("strip") && !j.at("strip").is_null())
            m.spec.strip = StripParams{j.at("strip").at("k_prime").get<std::uint32_t>(),
                                       j.at("strip").at("seed").get<std::uint64_t>()};
        m.order = j.at("order");
        m.records = j.at("records").get<std::uint64_t>();
        for (const auto& o : j.at("outputs"))
            m.outputs.push_back({o.at("path").get<std::string>(), o.at("sha256").get<std::string>(),
                                 o.at("count").get<std::uint64_t>()});
        m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("malformed manifest: ") + e.what());
    }
    if (is_eval(m.spec.kind) && !m.spec.strip)
        throw InputError("eval manifest lacks strip parameters");
    return m;
}

Manifest read_manifest(const std::filesystem::path& dir) {
    const auto path = dir / kManifestName;
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    return manifest_from_json(j);
}

// ---- rendering ----

struct ShardRenderer::State {
    std::optional<DatasetConfig> abstract_cfg;
    std::optional<World> world;
    std::optional<LangSymConfig> langsym_cfg;
    std::uint64_t records = 0;
    std::uint64_t shard_size = 1;
};

ShardRenderer::ShardRenderer(const DatasetSpec& spec) : spec_(spec), state_(std::make_unique<State>()) {
    if (is_eval(spec_.kind) && !spec_.strip)
        throw ConfigError("eval datasets need strip parameters");
    if (is_abstract(spec_.kind)) {
        auto cfg = config_from_json(spec_.config);
        state_->records = cfg.t;
        state_->shard_size = cfg.shard_size;
        order_ = output_order(cfg);
        state_->world = World::from_config(cfg);
        state_->abstract_cfg = std::move(cfg);
    } else {
        auto cfg = langsym_config_from_json(spec_.config);
        state_->records = cfg.t;
        state_->shard_size = cfg.shard_size;
        order_ = langsym_output_order(cfg);
        state_->langsym_cfg = std::move(cfg);
    }
}

ShardRenderer::~ShardRenderer() = default;

std::uint64_t ShardRenderer::shard_records(std::uint64_t shard) const {
    const auto begin = shard * state_->shard_size;
    if (begin >= state_->records) return 0;
    return std::min(state_->shard_size, state_->records - begin);
}

std::string ShardRenderer::render(std::uint64_t shard) const {
    const auto begin = shard * state_->shard_size;
    const auto count = shard_records(shard);
    std::string out;
    for (std::uint64_t pos = begin; pos < begin + count; ++pos) {
        const auto j = order_[pos];
        nlohmann::ordered_json rec;
        switch (spec_.kind) {
            case DatasetKind::abstract:
                rec = sequence_to_json(generate_sequence(*state_->abstract_cfg, j, *state_->world));
                break;
            case DatasetKind::abstract_eval: {
                const auto& vocab = state_->world->vocab;
                auto seq = generate_sequence(*state_->abstract_cfg, j, *state_->world);
                auto prompt = make_eval_prompt(seq, vocab);
                rec = eval_prompt_to_json(
                    strip_cot(prompt, spec_.strip->k_prime, spec_.strip->seed, vocab));
                break;
            }
            case DatasetKind::langsym:
                rec = chat_prompt_to_json(generate_langsym_prompt(*state_->langsym_cfg, j));
                break;
            case DatasetKind::langsym_eval: {
                const auto& cfg = *state_->langsym_cfg;
                rec = chat_prompt_to_json(strip_cot(generate_langsym_prompt(cfg, j),
                                                    spec_.strip->k_prime, spec_.strip->seed,
                                                    cfg.templates));
                break;
            }
        }
        out += rec.dump();
        out += '\n';
    }
    return out;
}

std::vector<std::pair<std::string, std::string>> ShardRenderer::side_files() const {
    if (!state_->world) return {};
    return {{"embedding.bin", embedding_bytes(state_->world->embedding)},
            {"processors.bin", cache_bytes(state_->world->cache)}};
}

// ---- writing ----

namespace {

nlohmann::ordered_json order_json(const DatasetSpec& spec, const std::vector<std::uint64_t>& order) {
    const bool shuffle = spec.config.value("shuffle", false);
    const auto seed = spec.config.value("master_seed", std::uint64_t{0}) + 1;
    return {{"shuffle", shuffle}, {"seed", seed}, {"sha256", order_hash(order)}};
}

void finish_manifest(Manifest& m, const std::filesystem::path& dir) {
    write_text(dir / kManifestName, manifest_to_json(m).dump(2) + "\n");
}

}  // namespace

Manifest write_dataset(const DatasetSpec& spec_in, const std::filesystem::path& dir,
                       unsigned workers) {
    const auto start = std::chrono::steady_clock::now();
    DatasetSpec spec = spec_in;
    spec.config = canonical_config(spec.kind, spec.config);
    ShardRenderer renderer(spec);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    Manifest m;
    m.spec = spec;
    m.records = spec.record_count();
    for (const auto& [name, bytes] : renderer.side_files()) {
        write_text(dir / name, bytes);
        m.outputs.push_back({name, sha256_hex(bytes), 0});
    }

    const auto shards = spec.shard_count();
    std::vector<OutputFile> shard_files(shards);
    parallel_for(shards, workers, [&](std::uint64_t s) {
        const auto text = renderer.render(s);
        const auto name = shard_name(s);
        write_text(dir / name, text);
        shard_files[s] = {name, sha256_hex(text), renderer.shard_records(s)};
    });
    m.outputs.insert(m.outputs.end(), shard_files.begin(), shard_files.end());
    m.order = order_json(spec, renderer.order());
    m.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    finish_manifest(m, dir);
    return m;
}

Manifest write_records(const DatasetSpec& spec_in, const std::filesystem::path& dir,
                       const std::vector<std::string>& records, const nlohmann::json& order,
                       double wall_clock_seconds) {
    DatasetSpec spec = spec_in;
    spec.config = canonical_config(spec.kind, spec.config);
    if (records.size() != spec.record_count())
        throw InputError("record count does not match the dataset config");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

    Manifest m;
    m.spec = spec;
    m.records = records.size();
    m.order = order;
    if (is_abstract(spec.kind)) {
        ShardRenderer renderer(spec);
        for (const auto& [name, bytes] : renderer.side_files()) {
            write_text(dir / name, bytes);
            m.outputs.push_back({name, sha256_hex(bytes), 0});
        }
    }
    const auto size = spec.shard_size();
    for (std::uint64_t s = 0; s < spec.shard_count(); ++s) {
        std::string text;
        const auto end = std::min<std::uint64_t>(records.size(), (s + 1) * size);
        for (auto i = s * size; i < end; ++i) {
            text += records[i];
            text += '\n';
        }
        const auto name = shard_name(s);
        write_text(dir / name, text);
        m.outputs.push_back({name, sha256_hex(text), end - s * size});
    }
    m.wall_clock_seconds = wall_clock_seconds;
    finish_manifest(m, dir);
    return m;
}

void for_each_record(const std::filesystem::path& dir, const Manifest& m,
                     const std::function<void(const nlohmann::json&)>& fn) {
    for (const auto& o : m.outputs) {
        if (!o.path.starts_with("shard-")) continue;
        const auto path = dir / o.path;
        std::ifstream in(path);
        if (!in) throw IoError("cannot open " + path.string());
        std::string line;
        std::uint64_t n = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw InputError(path.string() + ":" + std::to_string(n + 1) + ": " + e.what());
            }
            fn(j);
            ++n;
        }
        if (n != o.count)
            throw InputError(path.string() + ": expected " + std::to_string(o.count) +
                             " records, found " + std::to_string(n));
    }
}

// ---- verification ----

VerifyReport verify_dataset(const std::filesystem::path& dir, std::uint64_t sample,
                            std::uint64_t seed, unsigned workers) {
    const auto m = read_manifest(dir);
    VerifyReport report;
    for (const auto& o : m.outputs) {
        const auto path = dir / o.path;
        if (!std::filesystem::exists(path)) {
            report.hash_mismatches.push_back(o.path + " (missing)");
            continue;
        }
        if (sha256_file(path) != o.sha256) report.hash_mismatches.push_back(o.path);
    }

    ShardRenderer renderer(m.spec);
    if (nlohmann::json(order_json(m.spec, renderer.order())) != m.order)
        report.regeneration_mismatches.push_back("order");
    for (const auto& [name, bytes] : renderer.side_files()) {
        auto it = std::find_if(m.outputs.begin(), m.outputs.end(),
                               [&](const OutputFile& o) { return o.path == name; });
        if (it == m.outputs.end() || it->sha256 != sha256_hex(bytes))
            report.regeneration_mismatches.push_back(name);
    }

    std::vector<const OutputFile*> shard_files;
    for (const auto& o : m.outputs)
        if (o.path.starts_with("shard-")) shard_files.push_back(&o);
    const std::uint64_t expected_shards = m.spec.shard_count();
    if (shard_files.size() != expected_shards) {
        report.regeneration_mismatches.push_back("shard count");
        return report;
    }

    std::vector<std::uint64_t> chosen;
    if (sample == 0 || sample >= expected_shards) {
        chosen.resize(expected_shards);
        for (std::uint64_t s = 0; s < expected_shards; ++s) chosen[s] = s;
    } else {
        Xoshiro256 rng(seed);
        for (auto s : sample_without_replacement(rng, static_cast<std::uint32_t>(expected_shards),
                                                 static_cast<std::uint32_t>(sample)))
            chosen.push_back(s);
        std::sort(chosen.begin(), chosen.end());
    }

    std::vector<char> bad(chosen.size(), 0);
    parallel_for(chosen.size(), workers, [&](std::uint64_t i) {
        const auto s = chosen[i];
        const auto* o = shard_files[s];
        bad[i] = o->path != shard_name(s) || sha256_hex(renderer.render(s)) != o->sha256;
    });
    for (std::size_t i = 0; i < chosen.size(); ++i)
        if (bad[i]) report.regeneration_mismatches.push_back(shard_name(chosen[i]));
    report.regenerated_shards = std::move(chosen);
    return report;
}

}  // namespace cotlab
