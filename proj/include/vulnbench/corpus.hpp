#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vulnbench/cwe.hpp"

namespace vulnbench::corpus {

enum class Label { vulnerable, non_vulnerable };
enum class Source { sven_like, cvefixes_like, juliet_like, custom };

std::string to_string(Label label);
Label parse_label(std::string_view text);
std::string to_string(Source source);
Source parse_source(std::string_view text);

/// File path + line range of the known flaw, used by the SA judging rule.
struct LocationHint {
    std::string path;
    int line_start = 0;
    int line_end = 0;
};

struct CodeSample {
    std::string id;
    CweId cwe;
    Label label = Label::vulnerable;
    std::string code;
    std::string language_tag;
    std::optional<std::string> pair_id;
    Source source = Source::custom;
    std::optional<LocationHint> location_hint;

    /// Stable id for samples that arrive without one: sha256(cwe, label, code).
    static std::string derived_id(const CweId& cwe, Label label, std::string_view code);
};

struct SamplePair {
    std::string pair_id;
    std::string vulnerable_id;
    std::string fixed_id;
};

struct ManifestCounts {
    int total = 0;
    int vulnerable = 0;
    int non_vulnerable = 0;
};

struct CorpusSlice {
    CweId cwe;
    std::vector<CodeSample> samples;  // ordered by id
    std::vector<SamplePair> pairs;
    ManifestCounts manifest_counts;

    const CodeSample* find(std::string_view id) const;
    const CodeSample& vulnerable_of(const SamplePair& pair) const;
    const CodeSample& fixed_of(const SamplePair& pair) const;
    bool empty() const { return samples.empty(); }
};

/// A contrastive synthetic pair picked from a Juliet-style corpus (Phase 1).
struct SyntheticPair {
    CweId cwe;
    std::string vulnerable_code;
    std::string fixed_code;
    std::string scenario_id;
};

/// Selection result; seed is recorded when the scenario was drawn at random.
struct ContrastiveSelection {
    SyntheticPair pair;
    std::optional<std::uint64_t> seed;
};

enum class CorpusFormat { jsonl, directory_tree };

/// Loads and validates a corpus. JSONL: one CodeSample object per line, with
/// an optional sibling `<stem>.manifest.json` holding declared counts.
/// directory_tree: `<root>/<cwe>/<label>/<id>.<ext>` with an optional
/// `<root>/manifest.json`; samples sharing a file stem across the two label
/// directories of a CWE are paired under that stem.
std::vector<CorpusSlice> load_corpus(const std::filesystem::path& path, CorpusFormat format);

/// Canonical JSONL re-serialization (used by the round-trip property and the
/// CLI). One record per line, samples in slice order, slices ordered by CWE.
void serialize_corpus(const std::vector<CorpusSlice>& slices, const std::filesystem::path& path);

/// Slice for one CWE; zero-padded and unpadded queries are equivalent.
/// Absent CWE yields an empty slice (never an error).
CorpusSlice filter_by_cwe(const std::vector<CorpusSlice>& slices, const CweId& cwe);

struct PairingResult {
    std::vector<SamplePair> pairs;
    std::vector<std::string> unpaired_ids;  // reported, the samples stay in the slice
};

/// Materializes every well-formed pair in the slice. Throws on a pair_id with
/// two same-label members. Unpaired samples are legal (CVEFixes-like data).
PairingResult build_pairs(const CorpusSlice& slice);

/// Picks one scenario pair for the CWE. A selector (exact scenario id, or a
/// unique substring of one) makes the choice deterministic; otherwise the
/// scenario is drawn with the given seed and the seed is recorded.
ContrastiveSelection select_contrastive_pair(const CorpusSlice& juliet_slice, const CweId& cwe,
                                             const std::optional<std::string>& scenario_selector =
                                                 std::nullopt,
                                             std::uint64_t seed = 0);

}  // namespace vulnbench::corpus
