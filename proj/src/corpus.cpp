#include "vulnbench/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vulnbench/common.hpp"

namespace vulnbench::corpus {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Label label) {
    return label == Label::vulnerable ? "vulnerable" : "non_vulnerable";
}

Label parse_label(std::string_view text) {
    std::string t = to_lower(trim(text));
    if (t == "vulnerable") {
        return Label::vulnerable;
    }
    if (t == "non_vulnerable" || t == "non-vulnerable" || t == "fixed") {
        return Label::non_vulnerable;
    }
    throw ValidationError("unknown label: '" + std::string(text) + "'");
}

std::string to_string(Source source) {
    switch (source) {
        case Source::sven_like: return "sven_like";
        case Source::cvefixes_like: return "cvefixes_like";
        case Source::juliet_like: return "juliet_like";
        case Source::custom: return "custom";
    }
    return "custom";
}

Source parse_source(std::string_view text) {
    std::string t = to_lower(trim(text));
    if (t == "sven_like") return Source::sven_like;
    if (t == "cvefixes_like") return Source::cvefixes_like;
    if (t == "juliet_like") return Source::juliet_like;
    if (t == "custom" || t.empty()) return Source::custom;
    throw ValidationError("unknown source: '" + std::string(text) + "'");
}

std::string CodeSample::derived_id(const CweId& cwe, Label label, std::string_view code) {
    std::string material = cwe.to_string() + "\x1f" + to_string(label) + "\x1f" + std::string(code);
    return sha256_hex(material).substr(0, 16);
}

const CodeSample* CorpusSlice::find(std::string_view id) const {
    for (const CodeSample& sample : samples) {
        if (sample.id == id) {
            return &sample;
        }
    }
    return nullptr;
}

const CodeSample& CorpusSlice::vulnerable_of(const SamplePair& pair) const {
    const CodeSample* sample = find(pair.vulnerable_id);
    if (sample == nullptr) {
        throw ValidationError("pair " + pair.pair_id + " references unknown sample " +
                              pair.vulnerable_id);
    }
    return *sample;
}

const CodeSample& CorpusSlice::fixed_of(const SamplePair& pair) const {
    const CodeSample* sample = find(pair.fixed_id);
    if (sample == nullptr) {
        throw ValidationError("pair " + pair.pair_id + " references unknown sample " +
                              pair.fixed_id);
    }
    return *sample;
}

namespace {

CodeSample sample_from_json(const json& record, size_t lineno) {
    auto fail = [&](const std::string& what) -> ParseError {
        return ParseError(what, "line " + std::to_string(lineno));
    };
    if (!record.is_object()) {
        throw fail("record is not a JSON object");
    }
    CodeSample sample;
    try {
        sample.cwe = record.contains("cwe") && record.at("cwe").is_number()
                         ? CweId::from_number(record.at("cwe").get<int>())
                         : CweId::parse(record.at("cwe").get<std::string>());
        sample.label = parse_label(record.at("label").get<std::string>());
        sample.code = record.at("code").get<std::string>();
        if (record.contains("language") && !record.at("language").is_null()) {
            sample.language_tag = record.at("language").get<std::string>();
        }
        if (record.contains("pair_id") && !record.at("pair_id").is_null()) {
            sample.pair_id = record.at("pair_id").get<std::string>();
        }
        if (record.contains("source") && !record.at("source").is_null()) {
            sample.source = parse_source(record.at("source").get<std::string>());
        }
        if (record.contains("location_hint") && !record.at("location_hint").is_null()) {
            const json& hint = record.at("location_hint");
            LocationHint h;
            h.path = hint.at("path").get<std::string>();
            h.line_start = hint.at("line_start").get<int>();
            h.line_end = hint.at("line_end").get<int>();
            sample.location_hint = h;
        }
        if (record.contains("id") && !record.at("id").is_null()) {
            sample.id = record.at("id").get<std::string>();
        } else {
            sample.id = CodeSample::derived_id(sample.cwe, sample.label, sample.code);
        }
    } catch (const json::exception& e) {
        throw fail(std::string("bad record field: ") + e.what());
    } catch (const ValidationError& e) {
        throw fail(e.what());
    }
    if (sample.code.empty()) {
        throw fail("sample code is empty");
    }
    return sample;
}

json sample_to_json(const CodeSample& sample) {
    json record;
    record["id"] = sample.id;
    record["cwe"] = sample.cwe.to_string();
    record["label"] = to_string(sample.label);
    record["code"] = sample.code;
    record["language"] = sample.language_tag;
    record["pair_id"] = sample.pair_id.has_value() ? json(*sample.pair_id) : json(nullptr);
    record["source"] = to_string(sample.source);
    if (sample.location_hint.has_value()) {
        record["location_hint"] = {{"path", sample.location_hint->path},
                                   {"line_start", sample.location_hint->line_start},
                                   {"line_end", sample.location_hint->line_end}};
    } else {
        record["location_hint"] = nullptr;
    }
    return record;
}

std::map<int, ManifestCounts> load_manifests(const fs::path& manifest_path) {
    std::map<int, ManifestCounts> out;
    auto content = read_file_if_exists(manifest_path);
    if (!content.has_value()) {
        return out;
    }
    json parsed = json::parse(*content);
    json entries = parsed.is_array() ? parsed : json::array({parsed});
    for (const json& entry : entries) {
        CweId cwe = entry.at("cwe").is_number() ? CweId::from_number(entry.at("cwe").get<int>())
                                                : CweId::parse(entry.at("cwe").get<std::string>());
        ManifestCounts counts;
        counts.total = entry.at("total").get<int>();
        counts.vulnerable = entry.at("vulnerable").get<int>();
        counts.non_vulnerable = entry.at("non_vulnerable").get<int>();
        out[cwe.number] = counts;
    }
    return out;
}

/// Groups validated samples into slices, builds pairs, checks manifests.
std::vector<CorpusSlice> assemble_slices(std::vector<CodeSample> samples,
                                         const std::map<int, ManifestCounts>& manifests) {
    std::set<std::string> ids;
    std::map<std::string, int> pair_cwe;  // pair_id -> cwe, to catch cross-CWE pairs
    for (const CodeSample& sample : samples) {
        if (!ids.insert(sample.id).second) {
            throw ValidationError("duplicate sample id: " + sample.id);
        }
        if (sample.pair_id.has_value()) {
            auto [it, inserted] = pair_cwe.emplace(*sample.pair_id, sample.cwe.number);
            if (!inserted && it->second != sample.cwe.number) {
                throw ValidationError("pair_id " + *sample.pair_id + " spans CWEs " +
                                      std::to_string(it->second) + " and " +
                                      std::to_string(sample.cwe.number));
            }
        }
    }

    std::map<int, CorpusSlice> by_cwe;
    for (CodeSample& sample : samples) {
        CorpusSlice& slice = by_cwe[sample.cwe.number];
        slice.cwe = sample.cwe;
        slice.samples.push_back(std::move(sample));
    }

    std::vector<CorpusSlice> slices;
    for (auto& [number, slice] : by_cwe) {
        std::sort(slice.samples.begin(), slice.samples.end(),
                  [](const CodeSample& a, const CodeSample& b) { return a.id < b.id; });
        int vulnerable = 0;
        for (const CodeSample& sample : slice.samples) {
            if (sample.label == Label::vulnerable) {
                ++vulnerable;
            }
        }
        ManifestCounts counted;
        counted.total = static_cast<int>(slice.samples.size());
        counted.vulnerable = vulnerable;
        counted.non_vulnerable = counted.total - vulnerable;

        auto declared = manifests.find(number);
        if (declared != manifests.end()) {
            const ManifestCounts& m = declared->second;
            if (m.total != counted.total || m.vulnerable != counted.vulnerable ||
                m.non_vulnerable != counted.non_vulnerable) {
                std::ostringstream msg;
                msg << "manifest mismatch for " << slice.cwe.to_string() << ": declared ("
                    << m.total << ", " << m.vulnerable << ", " << m.non_vulnerable
                    << ") but counted (" << counted.total << ", " << counted.vulnerable << ", "
                    << counted.non_vulnerable << ")";
                throw ValidationError(msg.str());
            }
        }
        slice.manifest_counts = counted;
        slice.pairs = build_pairs(slice).pairs;
        slices.push_back(std::move(slice));
    }
    return slices;
}

std::vector<CodeSample> read_jsonl_samples(const fs::path& path) {
    std::string content = read_file(path);
    std::vector<CodeSample> samples;
    size_t lineno = 0;
    for (const std::string& line : split_lines(content)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("malformed JSON record: ") + e.what(),
                             "line " + std::to_string(lineno));
        }
        samples.push_back(sample_from_json(record, lineno));
    }
    return samples;
}

std::string extension_language(const fs::path& file) {
    std::string ext = to_lower(file.extension().string());
    if (ext == ".c") return "c";
    if (ext == ".cc" || ext == ".cpp" || ext == ".cxx") return "cpp";
    if (ext == ".py") return "py";
    if (ext == ".java") return "java";
    return ext.empty() ? "" : ext.substr(1);
}

std::vector<CodeSample> read_tree_samples(const fs::path& root) {
    if (!fs::is_directory(root)) {
        throw EnvironmentError("not a directory: " + root.string());
    }
    std::vector<CodeSample> samples;
    std::vector<fs::path> cwe_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) {
            cwe_dirs.push_back(entry.path());
        }
    }
    std::sort(cwe_dirs.begin(), cwe_dirs.end());
    for (const fs::path& cwe_dir : cwe_dirs) {
        CweId cwe = CweId::parse(cwe_dir.filename().string());
        // Stems present under both labels form a pair named by the stem.
        std::map<std::string, int> stem_count;
        for (Label label : {Label::vulnerable, Label::non_vulnerable}) {
            fs::path label_dir = cwe_dir / to_string(label);
            if (!fs::is_directory(label_dir)) {
                continue;
            }
            for (const auto& entry : fs::directory_iterator(label_dir)) {
                if (entry.is_regular_file()) {
                    stem_count[entry.path().stem().string()] += 1;
                }
            }
        }
        for (Label label : {Label::vulnerable, Label::non_vulnerable}) {
            fs::path label_dir = cwe_dir / to_string(label);
            if (!fs::is_directory(label_dir)) {
                continue;
            }
            std::vector<fs::path> files;
            for (const auto& entry : fs::directory_iterator(label_dir)) {
                if (entry.is_regular_file()) {
                    files.push_back(entry.path());
                }
            }
            std::sort(files.begin(), files.end());
            for (const fs::path& file : files) {
                CodeSample sample;
                sample.cwe = cwe;
                sample.label = label;
                sample.code = read_file(file);
                if (sample.code.empty()) {
                    throw ValidationError("empty sample file: " + file.string());
                }
                std::string stem = file.stem().string();
                sample.id = cwe.to_string() + "/" + to_string(label) + "/" + stem;
                sample.language_tag = extension_language(file);
                sample.source = Source::juliet_like;
                if (stem_count[stem] == 2) {
                    sample.pair_id = stem;
                }
                samples.push_back(std::move(sample));
            }
        }
    }
    return samples;
}

}  // namespace

std::vector<CorpusSlice> load_corpus(const fs::path& path, CorpusFormat format) {
    std::vector<CodeSample> samples;
    std::map<int, ManifestCounts> manifests;
    if (format == CorpusFormat::jsonl) {
        samples = read_jsonl_samples(path);
        fs::path manifest = path;
        manifest.replace_extension(".manifest.json");
        manifests = load_manifests(manifest);
    } else {
        samples = read_tree_samples(path);
        manifests = load_manifests(path / "manifest.json");
    }
    return assemble_slices(std::move(samples), manifests);
}

void serialize_corpus(const std::vector<CorpusSlice>& slices, const fs::path& path) {
    std::ostringstream out;
    std::vector<const CorpusSlice*> ordered;
    ordered.reserve(slices.size());
    for (const CorpusSlice& slice : slices) {
        ordered.push_back(&slice);
    }
    std::sort(ordered.begin(), ordered.end(),
              [](const CorpusSlice* a, const CorpusSlice* b) { return a->cwe < b->cwe; });
    for (const CorpusSlice* slice : ordered) {
        for (const CodeSample& sample : slice->samples) {
            out << sample_to_json(sample).dump() << "\n";
        }
    }
    write_file_atomic(path, out.str());
}

CorpusSlice filter_by_cwe(const std::vector<CorpusSlice>& slices, const CweId& cwe) {
    for (const CorpusSlice& slice : slices) {
        if (slice.cwe == cwe) {
            return slice;
        }
    }
    CorpusSlice empty;
    empty.cwe = cwe;
    return empty;
}

PairingResult build_pairs(const CorpusSlice& slice) {
    PairingResult result;
    std::map<std::string, std::vector<const CodeSample*>> groups;
    for (const CodeSample& sample : slice.samples) {
        if (sample.pair_id.has_value()) {
            groups[*sample.pair_id].push_back(&sample);
        } else {
            result.unpaired_ids.push_back(sample.id);
        }
    }
    for (const auto& [pair_id, members] : groups) {
        if (members.size() != 2) {
            throw ValidationError("pair_id " + pair_id + " has " +
                                  std::to_string(members.size()) + " members, expected 2");
        }
        if (members[0]->label == members[1]->label) {
            throw ValidationError("pair_id " + pair_id + " has two '" +
                                  to_string(members[0]->label) + "' members");
        }
        if (members[0]->cwe != members[1]->cwe) {
            throw ValidationError("pair_id " + pair_id + " spans CWEs");
        }
        SamplePair pair;
        pair.pair_id = pair_id;
        const CodeSample* vuln = members[0]->label == Label::vulnerable ? members[0] : members[1];
        const CodeSample* fixed = members[0]->label == Label::vulnerable ? members[1] : members[0];
        pair.vulnerable_id = vuln->id;
        pair.fixed_id = fixed->id;
        result.pairs.push_back(std::move(pair));
    }
    std::sort(result.pairs.begin(), result.pairs.end(),
              [](const SamplePair& a, const SamplePair& b) { return a.pair_id < b.pair_id; });
    return result;
}

ContrastiveSelection select_contrastive_pair(const CorpusSlice& juliet_slice, const CweId& cwe,
                                             const std::optional<std::string>& scenario_selector,
                                             std::uint64_t seed) {
    if (juliet_slice.cwe != cwe) {
        throw ValidationError("slice is for " + juliet_slice.cwe.to_string() + ", not " +
                              cwe.to_string());
    }
    if (juliet_slice.pairs.empty()) {
        throw ValidationError("no scenario available for " + cwe.to_string());
    }

    const SamplePair* chosen = nullptr;
    std::optional<std::uint64_t> recorded_seed;
    if (scenario_selector.has_value()) {
        std::vector<const SamplePair*> matches;
        for (const SamplePair& pair : juliet_slice.pairs) {
            if (pair.pair_id == *scenario_selector) {
                matches = {&pair};
                break;
            }
            if (pair.pair_id.find(*scenario_selector) != std::string::npos) {
                matches.push_back(&pair);
            }
        }
        if (matches.empty()) {
            throw ValidationError("no scenario matches selector '" + *scenario_selector +
                                  "' for " + cwe.to_string());
        }
        if (matches.size() > 1) {
            throw ValidationError("selector '" + *scenario_selector + "' is ambiguous (" +
                                  std::to_string(matches.size()) + " scenarios)");
        }
        chosen = matches.front();
    } else {
        std::mt19937_64 rng(seed);
        std::uniform_int_distribution<size_t> dist(0, juliet_slice.pairs.size() - 1);
        chosen = &juliet_slice.pairs[dist(rng)];
        recorded_seed = seed;
    }

    SyntheticPair pair;
    pair.cwe = cwe;
    pair.scenario_id = chosen->pair_id;
    pair.vulnerable_code = juliet_slice.vulnerable_of(*chosen).code;
    pair.fixed_code = juliet_slice.fixed_of(*chosen).code;
    if (pair.vulnerable_code == pair.fixed_code) {
        throw ValidationError("scenario " + pair.scenario_id +
                              " has identical vulnerable and fixed bodies");
    }
    return ContrastiveSelection{std::move(pair), recorded_seed};
}

}  // namespace vulnbench::corpus
