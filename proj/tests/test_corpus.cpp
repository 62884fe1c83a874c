#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "vulnbench/common.hpp"
#include "vulnbench/corpus.hpp"

using namespace vulnbench;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = VULNBENCH_FIXTURES_DIR;

fs::path temp_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    out << content;
}

std::string sven_like_record(int index, bool vulnerable) {
    std::string label = vulnerable ? "vulnerable" : "non_vulnerable";
    std::string id = (vulnerable ? "v-" : "f-") + std::to_string(index);
    std::string code = vulnerable ? "system(input_" + std::to_string(index) + ");"
                                  : "execv(path_" + std::to_string(index) + ", argv);";
    return R"({"id": ")" + id + R"(", "cwe": "CWE-78", "label": ")" + label +
           R"(", "code": ")" + code + R"(", "language": "c", "pair_id": "p)" +
           std::to_string(index) + R"(", "source": "sven_like"})";
}

}  // namespace

TEST_CASE("cwe ids normalize zero padding and carry built-in names") {
    CweId a = CweId::parse("CWE-078");
    CweId b = CweId::parse("cwe-78");
    CweId c = CweId::parse("78");
    CHECK(a == b);
    CHECK(b == c);
    CHECK(a.to_string() == "CWE-78");
    CHECK(a.canonical_name == "OS Command Injection");
    CHECK(CweId::parse("CWE-190").display() == "CWE-190: Integer Overflow or Wraparound");
    CHECK(CweId::parse("CWE-1234").canonical_name.empty());
    CHECK_THROWS_AS(CweId::parse("CWE-"), ValidationError);
    CHECK_THROWS_AS(CweId::parse("not-a-cwe"), ValidationError);
    CHECK_THROWS_AS(CweId::from_number(0), ValidationError);
}

TEST_CASE("sven-like corpus of 95+95 loads with the right manifest") {
    fs::path dir = temp_dir("vulnbench_sven_like");
    std::string jsonl;
    for (int i = 0; i < 95; ++i) {
        jsonl += sven_like_record(i, true) + "\n";
        jsonl += sven_like_record(i, false) + "\n";
    }
    write(dir / "corpus.jsonl", jsonl);
    write(dir / "corpus.manifest.json",
          R"({"cwe": "CWE-78", "total": 190, "vulnerable": 95, "non_vulnerable": 95})");

    auto slices = corpus::load_corpus(dir / "corpus.jsonl", corpus::CorpusFormat::jsonl);
    REQUIRE(slices.size() == 1);
    const corpus::CorpusSlice& slice = slices.front();
    CHECK(slice.cwe.number == 78);
    CHECK(slice.manifest_counts.total == 190);
    CHECK(slice.manifest_counts.vulnerable == 95);
    CHECK(slice.manifest_counts.non_vulnerable == 95);
    CHECK(slice.pairs.size() == 95);

    // deterministic ordering by id
    for (size_t i = 1; i < slice.samples.size(); ++i) {
        CHECK(slice.samples[i - 1].id < slice.samples[i].id);
    }
}

TEST_CASE("manifest mismatch is an error") {
    fs::path dir = temp_dir("vulnbench_manifest_mismatch");
    write(dir / "corpus.jsonl", sven_like_record(0, true) + "\n" + sven_like_record(0, false) + "\n");
    write(dir / "corpus.manifest.json",
          R"({"cwe": "CWE-78", "total": 3, "vulnerable": 2, "non_vulnerable": 1})");
    CHECK_THROWS_WITH_AS(corpus::load_corpus(dir / "corpus.jsonl", corpus::CorpusFormat::jsonl),
                         doctest::Contains("manifest mismatch"), ValidationError);
}

TEST_CASE("empty file yields an empty slice list") {
    fs::path dir = temp_dir("vulnbench_empty");
    write(dir / "corpus.jsonl", "");
    CHECK(corpus::load_corpus(dir / "corpus.jsonl", corpus::CorpusFormat::jsonl).empty());
}

TEST_CASE("three-record fixture: one pair, one unpaired, all kept") {
    auto slices = corpus::load_corpus(kFixtures / "corpus" / "pairs_small.jsonl",
                                      corpus::CorpusFormat::jsonl);
    REQUIRE(slices.size() == 1);
    const corpus::CorpusSlice& slice = slices.front();
    CHECK(slice.samples.size() == 3);
    REQUIRE(slice.pairs.size() == 1);
    CHECK(slice.pairs.front().pair_id == "p-1");
    auto pairing = corpus::build_pairs(slice);
    CHECK(pairing.pairs.size() == 1);
    REQUIRE(pairing.unpaired_ids.size() == 1);
    CHECK(pairing.unpaired_ids.front() == "s-003");
}

TEST_CASE("malformed and inconsistent records report their line") {
    fs::path dir = temp_dir("vulnbench_bad_records");

    write(dir / "bad.jsonl", "{\"id\": \"x\"\n");
    CHECK_THROWS_WITH_AS(corpus::load_corpus(dir / "bad.jsonl", corpus::CorpusFormat::jsonl),
                         doctest::Contains("line 1"), ParseError);

    write(dir / "dup.jsonl", sven_like_record(1, true) + "\n" + sven_like_record(1, true) + "\n");
    CHECK_THROWS_WITH_AS(corpus::load_corpus(dir / "dup.jsonl", corpus::CorpusFormat::jsonl),
                         doctest::Contains("duplicate"), ValidationError);

    // dangling pair: pair_id with a single member
    write(dir / "dangling.jsonl", sven_like_record(2, true) + "\n");
    CHECK_THROWS_WITH_AS(corpus::load_corpus(dir / "dangling.jsonl", corpus::CorpusFormat::jsonl),
                         doctest::Contains("members"), ValidationError);

    // empty code violates the sample invariant
    write(dir / "empty_code.jsonl",
          R"({"id": "e", "cwe": "CWE-78", "label": "vulnerable", "code": ""})"
          "\n");
    CHECK_THROWS_AS(corpus::load_corpus(dir / "empty_code.jsonl", corpus::CorpusFormat::jsonl),
                    ParseError);
}

TEST_CASE("same-label pair is rejected and names the pair id") {
    fs::path dir = temp_dir("vulnbench_same_label");
    std::string a =
        R"({"id": "a", "cwe": "CWE-78", "label": "vulnerable", "code": "x();", "pair_id": "pX"})";
    std::string b =
        R"({"id": "b", "cwe": "CWE-78", "label": "vulnerable", "code": "y();", "pair_id": "pX"})";
    write(dir / "corpus.jsonl", a + "\n" + b + "\n");
    CHECK_THROWS_WITH_AS(corpus::load_corpus(dir / "corpus.jsonl", corpus::CorpusFormat::jsonl),
                         doctest::Contains("pX"), ValidationError);
}

TEST_CASE("filter_by_cwe matches padded queries and absent cwes") {
    auto slices = corpus::load_corpus(kFixtures / "corpus" / "four_cwe.jsonl",
                                      corpus::CorpusFormat::jsonl);
    REQUIRE(slices.size() == 4);

    auto padded = corpus::filter_by_cwe(slices, CweId::parse("CWE-078"));
    CHECK(padded.samples.size() == 2);
    CHECK(padded.cwe.number == 78);

    auto absent = corpus::filter_by_cwe(slices, CweId::parse("CWE-999"));
    CHECK(absent.empty());

    // brute-force oracle: scan every sample in every slice
    auto filtered = corpus::filter_by_cwe(slices, CweId::from_number(416));
    std::set<std::string> expected;
    for (const auto& slice : slices) {
        for (const auto& sample : slice.samples) {
            if (sample.cwe.number == 416) {
                expected.insert(sample.id);
            }
        }
    }
    std::set<std::string> got;
    for (const auto& sample : filtered.samples) {
        CHECK(sample.cwe.number == 416);
        got.insert(sample.id);
    }
    CHECK(got == expected);
}

TEST_CASE("pair labels are opposite and cwes equal across all loaded pairs") {
    for (const char* file : {"pairs_small.jsonl", "four_cwe.jsonl"}) {
        auto slices = corpus::load_corpus(kFixtures / "corpus" / file,
                                          corpus::CorpusFormat::jsonl);
        for (const auto& slice : slices) {
            std::set<std::string> used;
            for (const auto& pair : slice.pairs) {
                const auto& vuln = slice.vulnerable_of(pair);
                const auto& fixed = slice.fixed_of(pair);
                CHECK(vuln.label == corpus::Label::vulnerable);
                CHECK(fixed.label == corpus::Label::non_vulnerable);
                CHECK(vuln.cwe == fixed.cwe);
                // pairs partition the samples: no sample in two pairs
                CHECK(used.insert(vuln.id).second);
                CHECK(used.insert(fixed.id).second);
            }
        }
    }
}

TEST_CASE("round trip: load, serialize, load again is identical") {
    auto slices = corpus::load_corpus(kFixtures / "corpus" / "four_cwe.jsonl",
                                      corpus::CorpusFormat::jsonl);
    fs::path dir = temp_dir("vulnbench_roundtrip");
    corpus::serialize_corpus(slices, dir / "again.jsonl");
    auto reloaded = corpus::load_corpus(dir / "again.jsonl", corpus::CorpusFormat::jsonl);
    REQUIRE(reloaded.size() == slices.size());
    for (size_t i = 0; i < slices.size(); ++i) {
        CHECK(reloaded[i].cwe == slices[i].cwe);
        REQUIRE(reloaded[i].samples.size() == slices[i].samples.size());
        for (size_t j = 0; j < slices[i].samples.size(); ++j) {
            const auto& a = slices[i].samples[j];
            const auto& b = reloaded[i].samples[j];
            CHECK(a.id == b.id);
            CHECK(a.code == b.code);
            CHECK(a.label == b.label);
            CHECK(a.pair_id == b.pair_id);
            CHECK(a.language_tag == b.language_tag);
        }
        CHECK(reloaded[i].pairs.size() == slices[i].pairs.size());
    }

    // serializing twice is byte-identical
    corpus::serialize_corpus(reloaded, dir / "twice.jsonl");
    CHECK(read_file(dir / "again.jsonl") == read_file(dir / "twice.jsonl"));
}

TEST_CASE("directory tree loader pairs matching stems") {
    auto slices = corpus::load_corpus(kFixtures / "juliet_tree",
                                      corpus::CorpusFormat::directory_tree);
    REQUIRE(slices.size() == 2);

    auto cwe78 = corpus::filter_by_cwe(slices, CweId::from_number(78));
    CHECK(cwe78.samples.size() == 4);
    CHECK(cwe78.pairs.size() == 2);
    for (const auto& sample : cwe78.samples) {
        CHECK(sample.source == corpus::Source::juliet_like);
        CHECK(sample.language_tag == "c");
    }

    auto cwe190 = corpus::filter_by_cwe(slices, CweId::from_number(190));
    CHECK(cwe190.pairs.size() == 1);
    CHECK(cwe190.pairs.front().pair_id == "fscanf_multiply_81");
}

TEST_CASE("contrastive selection by selector, forced choice, and seed") {
    auto slices = corpus::load_corpus(kFixtures / "juliet_tree",
                                      corpus::CorpusFormat::directory_tree);
    auto cwe78 = corpus::filter_by_cwe(slices, CweId::from_number(78));

    auto picked = corpus::select_contrastive_pair(cwe78, CweId::from_number(78),
                                                  std::string("execv_53"));
    CHECK(picked.pair.scenario_id == "execv_53");
    CHECK(picked.pair.vulnerable_code.find("badSink") != std::string::npos);
    CHECK(picked.pair.fixed_code.find("goodG2B") != std::string::npos);
    CHECK_FALSE(picked.seed.has_value());

    // single-scenario slice: forced choice without a selector
    auto cwe190 = corpus::filter_by_cwe(slices, CweId::from_number(190));
    auto forced = corpus::select_contrastive_pair(cwe190, CweId::from_number(190));
    CHECK(forced.pair.scenario_id == "fscanf_multiply_81");

    // two scenarios, fixed seed: identical choice across runs, seed recorded
    auto first = corpus::select_contrastive_pair(cwe78, CweId::from_number(78), std::nullopt, 9);
    auto second = corpus::select_contrastive_pair(cwe78, CweId::from_number(78), std::nullopt, 9);
    CHECK(first.pair.scenario_id == second.pair.scenario_id);
    CHECK(first.seed == 9);

    CHECK_THROWS_AS(corpus::select_contrastive_pair(cwe78, CweId::from_number(78),
                                                    std::string("no_such_scenario")),
                    ValidationError);
    corpus::CorpusSlice empty;
    empty.cwe = CweId::from_number(416);
    CHECK_THROWS_AS(corpus::select_contrastive_pair(empty, CweId::from_number(416)),
                    ValidationError);
}

TEST_CASE("derived ids are stable hashes of cwe, label, and code") {
    fs::path dir = temp_dir("vulnbench_derived_id");
    write(dir / "corpus.jsonl",
          R"({"cwe": "CWE-78", "label": "vulnerable", "code": "system(x);"})"
          "\n");
    auto slices = corpus::load_corpus(dir / "corpus.jsonl", corpus::CorpusFormat::jsonl);
    REQUIRE(slices.front().samples.size() == 1);
    std::string id = slices.front().samples.front().id;
    CHECK(id == corpus::CodeSample::derived_id(CweId::from_number(78),
                                               corpus::Label::vulnerable, "system(x);"));
    CHECK(id.size() == 16);
}
