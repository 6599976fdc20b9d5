#include "cotlab/dataset.hpp"
#include "cotlab/errors.hpp"
#include "temp_dir.hpp"

#include <doctest.h>

using namespace cotlab;

namespace {

DatasetConfig small_abstract() {
    DatasetConfig cfg;
    cfg.vocab_size = 64;
    cfg.dim = 6;
    cfg.cache_size = 16;
    cfg.k = 5;
    cfg.t = 25;
    cfg.shard_size = 10;
    cfg.master_seed = 3;
    cfg.recipe = Recipe{Exponent(1), 1.0, 0.0};
    return cfg;
}

LangSymConfig small_langsym() {
    LangSymConfig cfg;
    cfg.k = 4;
    cfg.t = 23;
    cfg.shard_size = 7;
    cfg.master_seed = 11;
    cfg.shuffle = true;
    return cfg;
}

DatasetSpec abstract_spec(const DatasetConfig& cfg) {
    return {DatasetKind::abstract, config_to_json(cfg), std::nullopt};
}

std::vector<nlohmann::json> records_of(const std::filesystem::path& dir) {
    std::vector<nlohmann::json> out;
    for_each_record(dir, read_manifest(dir), [&](const nlohmann::json& j) { out.push_back(j); });
    return out;
}

void flip_byte(const std::filesystem::path& p, std::size_t at) {
    auto text = test::slurp(p);
    text[at] = static_cast<char>(text[at] ^ 0x01);
    test::spit(p, text);
}

}  // namespace

TEST_CASE("sha256 test vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq") ==
          "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1");
    test::TempDir dir;
    test::spit(dir / "f", std::string(100000, 'a'));
    CHECK(sha256_file(dir / "f") == sha256_hex(std::string(100000, 'a')));
}

TEST_CASE("kind names and shard names") {
    for (auto k : {DatasetKind::abstract, DatasetKind::abstract_eval, DatasetKind::langsym,
                   DatasetKind::langsym_eval})
        CHECK(parse_kind(kind_name(k)) == k);
    CHECK_THROWS_AS(parse_kind("tokens"), InputError);
    CHECK(shard_name(0) == "shard-00000.jsonl");
    CHECK(shard_name(123) == "shard-00123.jsonl");
}

TEST_CASE("abstract dataset on disk matches in-memory generation") {
    const auto cfg = small_abstract();
    test::TempDir dir;
    const auto m = write_dataset(abstract_spec(cfg), dir.path());
    CHECK(m.records == 25);
    REQUIRE(m.outputs.size() == 5);
    CHECK(m.outputs[0].path == "embedding.bin");
    CHECK(m.outputs[1].path == "processors.bin");
    CHECK(m.outputs[2].count == 10);
    CHECK(m.outputs[3].count == 10);
    CHECK(m.outputs[4].count == 5);
    for (const auto& o : m.outputs) CHECK(sha256_file(dir / o.path) == o.sha256);

    const auto world = World::from_config(cfg);
    CHECK(read_embedding(dir / "embedding.bin").data().size() == world.embedding.data().size());
    std::vector<std::string> expected;
    generate_dataset(cfg, world,
                     [&](Sequence&& s) { expected.push_back(sequence_to_json(s).dump()); });
    const auto got = records_of(dir.path());
    REQUIRE(got.size() == expected.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == nlohmann::json::parse(expected[i]));
}

TEST_CASE("output bytes do not depend on the worker count") {
    auto cfg = small_abstract();
    cfg.shuffle = true;
    cfg.shard_size = 4;
    test::TempDir a, b;
    const auto ma = write_dataset(abstract_spec(cfg), a.path(), 1);
    const auto mb = write_dataset(abstract_spec(cfg), b.path(), 4);
    REQUIRE(ma.outputs.size() == mb.outputs.size());
    for (std::size_t i = 0; i < ma.outputs.size(); ++i) {
        CHECK(ma.outputs[i].path == mb.outputs[i].path);
        CHECK(ma.outputs[i].sha256 == mb.outputs[i].sha256);
    }
    CHECK(ma.order == mb.order);
    CHECK(ma.order.at("shuffle") == true);
    CHECK(ma.order.at("seed") == cfg.master_seed + 1);
}

TEST_CASE("manifest round trip") {
    test::TempDir dir;
    auto spec = DatasetSpec{DatasetKind::langsym_eval, langsym_config_to_json(small_langsym()),
                            StripParams{2, 99}};
    auto cfg = small_langsym();
    cfg.recipe = Recipe{Exponent(0), 1.0, 0.0};
    spec.config = langsym_config_to_json(cfg);
    const auto m = write_dataset(spec, dir.path());
    const auto back = read_manifest(dir.path());
    CHECK(manifest_to_json(back) == manifest_to_json(m));
    CHECK(back.spec.strip == StripParams{2, 99});
    CHECK(back.tool_version == kToolVersion);

    auto j = nlohmann::json(manifest_to_json(m));
    j["strip"] = nullptr;
    CHECK_THROWS_AS(manifest_from_json(j), InputError);
    j.erase("outputs");
    CHECK_THROWS_AS(manifest_from_json(j), InputError);
}

TEST_CASE("langsym dataset follows the shuffled output order") {
    const auto cfg = small_langsym();
    test::TempDir dir;
    write_dataset({DatasetKind::langsym, langsym_config_to_json(cfg), std::nullopt}, dir.path(), 2);
    const auto got = records_of(dir.path());
    const auto order = langsym_output_order(cfg);
    REQUIRE(got.size() == cfg.t);
    for (std::size_t pos = 0; pos < got.size(); ++pos) {
        const auto p = chat_prompt_from_json(got[pos]);
        CHECK(p.prompt_id == order[pos]);
        CHECK(p == generate_langsym_prompt(cfg, order[pos]));
    }
}

TEST_CASE("eval kinds hold stripped prompts") {
    auto cfg = small_abstract();
    cfg.recipe = Recipe{Exponent(0), 1.0, 0.0};
    test::TempDir dir;
    write_dataset({DatasetKind::abstract_eval, config_to_json(cfg), StripParams{3, 5}}, dir.path());
    const auto world = World::from_config(cfg);
    const auto got = records_of(dir.path());
    REQUIRE(got.size() == cfg.t);
    for (std::size_t j = 0; j < got.size(); ++j) {
        const auto p = eval_prompt_from_json(got[j]);
        CHECK(count_cot_context(p, world.vocab) == cfg.k - 1 - 3);
        const auto expect =
            strip_cot(make_eval_prompt(generate_sequence(cfg, j, world), world.vocab), 3, 5,
                      world.vocab);
        CHECK(p == expect);
    }

    // A source with standard examples cannot become eval prompts.
    cfg.recipe = Recipe{Exponent(1), 1.0, 0.0};
    test::TempDir bad;
    CHECK_THROWS_AS(
        write_dataset({DatasetKind::abstract_eval, config_to_json(cfg), StripParams{0, 0}},
                      bad.path()),
        InputError);
    CHECK_THROWS_AS(ShardRenderer({DatasetKind::abstract_eval, config_to_json(cfg), std::nullopt}),
                    ConfigError);
}

TEST_CASE("write_records reproduces write_dataset bytes") {
    auto cfg = small_langsym();
    cfg.recipe = Recipe{Exponent(0), 1.0, 0.0};
    const DatasetSpec spec{DatasetKind::langsym_eval, langsym_config_to_json(cfg), StripParams{1, 8}};
    test::TempDir a, b;
    const auto ma = write_dataset(spec, a.path());
    std::vector<std::string> lines;
    for (const auto& r : records_of(a.path())) lines.push_back(r.dump());
    // Re-dump from parsed JSON must be stable, including key order.
    std::vector<std::string> ordered;
    for_each_record(a.path(), ma, [&](const nlohmann::json& j) {
        ordered.push_back(chat_prompt_to_json(chat_prompt_from_json(j)).dump());
    });
    const auto mb = write_records(spec, b.path(), ordered, ma.order, 0.0);
    REQUIRE(ma.outputs.size() == mb.outputs.size());
    for (std::size_t i = 0; i < ma.outputs.size(); ++i)
        CHECK(ma.outputs[i].sha256 == mb.outputs[i].sha256);
    CHECK(verify_dataset(b.path(), 0, 0).ok());
    CHECK_THROWS_AS(write_records(spec, b.path(), {"{}"}, ma.order, 0.0), InputError);
}

TEST_CASE("verify detects tampering") {
    auto cfg = small_abstract();
    test::TempDir dir;
    write_dataset(abstract_spec(cfg), dir.path());

    auto clean = verify_dataset(dir.path(), 0, 0, 2);
    CHECK(clean.ok());
    CHECK(clean.regenerated_shards == std::vector<std::uint64_t>{0, 1, 2});

    auto sampled = verify_dataset(dir.path(), 2, 42);
    CHECK(sampled.ok());
    CHECK(sampled.regenerated_shards.size() == 2);

    SUBCASE("byte flip in a shard") {
        flip_byte(dir / "shard-00001.jsonl", 20);
        const auto r = verify_dataset(dir.path(), 0, 0);
        CHECK_FALSE(r.ok());
        CHECK(r.hash_mismatches == std::vector<std::string>{"shard-00001.jsonl"});
        CHECK(r.regeneration_mismatches.empty());
    }
    SUBCASE("byte flip in a side file") {
        flip_byte(dir / "processors.bin", 40);
        const auto r = verify_dataset(dir.path(), 0, 0);
        CHECK(r.hash_mismatches == std::vector<std::string>{"processors.bin"});
    }
    SUBCASE("missing shard") {
        std::filesystem::remove(dir / "shard-00002.jsonl");
        CHECK(verify_dataset(dir.path(), 0, 0).hash_mismatches.size() == 1);
    }
    SUBCASE("consistent rewrite of a shard and its hash") {
        auto m = read_manifest(dir.path());
        auto text = test::slurp(dir / "shard-00000.jsonl");
        text.insert(text.begin() + 1, ' ');
        test::spit(dir / "shard-00000.jsonl", text);
        m.outputs[2].sha256 = sha256_hex(text);
        test::spit(dir / "manifest.json", manifest_to_json(m).dump(2));
        const auto r = verify_dataset(dir.path(), 0, 0);
        CHECK(r.hash_mismatches.empty());
        CHECK(r.regeneration_mismatches == std::vector<std::string>{"shard-00000.jsonl"});
    }
    SUBCASE("config edited after generation") {
        auto m = read_manifest(dir.path());
        m.spec.config["master_seed"] = 4;
        test::spit(dir / "manifest.json", manifest_to_json(m).dump(2));
        const auto r = verify_dataset(dir.path(), 0, 0);
        CHECK(r.hash_mismatches.empty());
        CHECK(r.regeneration_mismatches.size() >= 3);
    }
}

TEST_CASE("unreadable inputs") {
    test::TempDir dir;
    CHECK_THROWS_AS(read_manifest(dir.path()), IoError);
    test::spit(dir / "manifest.json", "{not json");
    CHECK_THROWS_AS(read_manifest(dir.path()), InputError);
}
