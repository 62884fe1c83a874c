#include "vulnbench/sa_bridge.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vulnbench/common.hpp"

namespace vulnbench::sa {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(RunStatus status) {
    switch (status) {
        case RunStatus::completed: return "completed";
        case RunStatus::unsupported: return "unsupported";
        case RunStatus::errored: return "errored";
    }
    return "completed";
}

RuleCweMap RuleCweMap::load(const fs::path& path) {
    RuleCweMap map;
    size_t lineno = 0;
    for (const std::string& raw : split_lines(read_file(path))) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::vector<std::string> fields;
        size_t start = 0;
        while (true) {
            size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) {
                break;
            }
            start = tab + 1;
        }
        if (fields.size() != 3) {
            throw ParseError("rule map line needs tool<TAB>rule<TAB>cwe[,cwe...]",
                             "line " + std::to_string(lineno));
        }
        std::vector<CweId> cwes;
        std::istringstream in(fields[2]);
        std::string item;
        while (std::getline(in, item, ',')) {
            cwes.push_back(CweId::parse(item));
        }
        map.add(trim(fields[0]), trim(fields[1]), std::move(cwes));
    }
    return map;
}

void RuleCweMap::add(const std::string& tool, const std::string& rule_id,
                     std::vector<CweId> cwes) {
    if (cwes.empty()) {
        throw ValidationError("rule " + rule_id + " maps to no CWE");
    }
    by_tool_[tool][rule_id] = std::move(cwes);
}

std::optional<std::vector<CweId>> RuleCweMap::lookup(const std::string& tool,
                                                     const std::string& rule_id) const {
    auto tool_it = by_tool_.find(tool);
    if (tool_it == by_tool_.end()) {
        return std::nullopt;
    }
    auto rule_it = tool_it->second.find(rule_id);
    if (rule_it == tool_it->second.end()) {
        return std::nullopt;
    }
    return rule_it->second;
}

namespace {

std::string sample_id_from_uri(const std::string& uri) {
    return fs::path(uri).stem().string();
}

/// Pulls CWE ids out of SARIF taxa arrays ({"id": "78"} under a CWE taxonomy).
std::vector<CweId> cwes_from_taxa(const json& taxa) {
    std::vector<CweId> out;
    for (const json& taxon : taxa) {
        std::string id = taxon.value("id", "");
        if (id.empty()) {
            continue;
        }
        std::string tool_component;
        if (taxon.contains("toolComponent")) {
            tool_component = taxon["toolComponent"].value("name", "");
        }
        bool looks_like_cwe = starts_with(to_lower(id), "cwe") ||
                              to_lower(tool_component).find("cwe") != std::string::npos;
        if (!looks_like_cwe) {
            continue;
        }
        try {
            out.push_back(CweId::parse(id));
        } catch (const ValidationError&) {
            // non-numeric taxon id; skip
        }
    }
    return out;
}

}  // namespace

IngestResult ingest_sarif(const fs::path& path, const RuleCweMap* rule_map) {
    IngestResult result;
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw ParseError(std::string("not valid JSON: ") + e.what(), path.string());
    }
    if (!doc.contains("runs") || !doc["runs"].is_array()) {
        throw ParseError("missing runs array", "/runs");
    }

    for (size_t run_index = 0; run_index < doc["runs"].size(); ++run_index) {
        const json& run = doc["runs"][run_index];
        std::string pointer = "/runs/" + std::to_string(run_index);
        if (!run.contains("tool") || !run["tool"].contains("driver")) {
            throw ParseError("missing tool.driver", pointer + "/tool/driver");
        }
        std::string tool = run["tool"]["driver"].value("name", "");
        if (tool.empty()) {
            throw ParseError("tool.driver.name is empty", pointer + "/tool/driver/name");
        }

        // rule metadata that carries CWE relationships, keyed by ruleId
        std::map<std::string, std::vector<CweId>> rule_taxa;
        if (run["tool"]["driver"].contains("rules")) {
            for (const json& rule : run["tool"]["driver"]["rules"]) {
                std::string rule_id = rule.value("id", "");
                std::vector<CweId> cwes;
                if (rule.contains("relationships")) {
                    for (const json& rel : rule["relationships"]) {
                        if (rel.contains("target")) {
                            std::string id = rel["target"].value("id", "");
                            if (!id.empty()) {
                                try {
                                    cwes.push_back(CweId::parse(id));
                                } catch (const ValidationError&) {
                                }
                            }
                        }
                    }
                }
                if (!rule_id.empty() && !cwes.empty()) {
                    rule_taxa[rule_id] = std::move(cwes);
                }
            }
        }

        std::map<std::string, std::vector<Finding>> by_sample;
        // artifacts listed without results still yield (empty) tool runs
        if (run.contains("artifacts")) {
            for (const json& artifact : run["artifacts"]) {
                if (artifact.contains("location")) {
                    std::string uri = artifact["location"].value("uri", "");
                    if (!uri.empty()) {
                        by_sample.emplace(sample_id_from_uri(uri), std::vector<Finding>{});
                    }
                }
            }
        }

        if (!run.contains("results")) {
            throw ParseError("missing results array", pointer + "/results");
        }
        for (size_t i = 0; i < run["results"].size(); ++i) {
            const json& res = run["results"][i];
            std::string res_pointer = pointer + "/results/" + std::to_string(i);
            Finding finding;
            finding.tool = tool;
            finding.rule_id = res.value("ruleId", "");
            if (res.contains("message") && res["message"].is_object()) {
                finding.message = res["message"].value("text", "");
            }
            finding.severity = res.value("level", "");

            if (!res.contains("locations") || res["locations"].empty()) {
                throw ParseError("result has no locations", res_pointer + "/locations");
            }
            const json& loc = res["locations"][0];
            if (!loc.contains("physicalLocation")) {
                throw ParseError("location has no physicalLocation",
                                 res_pointer + "/locations/0/physicalLocation");
            }
            const json& phys = loc["physicalLocation"];
            finding.path = phys.contains("artifactLocation")
                               ? phys["artifactLocation"].value("uri", "")
                               : "";
            if (finding.path.empty()) {
                throw ParseError("artifactLocation.uri is empty",
                                 res_pointer + "/locations/0/physicalLocation/artifactLocation");
            }
            if (phys.contains("region")) {
                finding.line_start = phys["region"].value("startLine", 1);
                finding.line_end = phys["region"].value("endLine", finding.line_start);
            }
            if (finding.line_end < finding.line_start) {
                throw ParseError("region endLine precedes startLine",
                                 res_pointer + "/locations/0/physicalLocation/region");
            }

            if (res.contains("taxa")) {
                finding.cwe_ids = cwes_from_taxa(res["taxa"]);
            }
            if (finding.cwe_ids.empty()) {
                auto rule_it = rule_taxa.find(finding.rule_id);
                if (rule_it != rule_taxa.end()) {
                    finding.cwe_ids = rule_it->second;
                }
            }
            if (finding.cwe_ids.empty() && rule_map != nullptr) {
                if (auto mapped = rule_map->lookup(tool, finding.rule_id)) {
                    finding.cwe_ids = *mapped;
                }
            }
            if (finding.cwe_ids.empty()) {
                result.warnings.push_back("no CWE mapping for rule '" + finding.rule_id +
                                          "' (" + tool + "); finding kept with empty cwe_ids");
            }
            by_sample[sample_id_from_uri(finding.path)].push_back(std::move(finding));
        }

        for (auto& [sample_id, findings] : by_sample) {
            ToolRun tool_run;
            tool_run.tool = tool;
            tool_run.sample_id = sample_id;
            tool_run.findings = std::move(findings);
            tool_run.status = RunStatus::completed;
            result.runs.push_back(std::move(tool_run));
        }
    }
    return result;
}

IngestResult ingest_findings_jsonl(const fs::path& path) {
    IngestResult result;
    std::map<std::pair<std::string, std::string>, ToolRun> runs;
    size_t lineno = 0;
    for (const std::string& line : split_lines(read_file(path))) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad findings record: ") + e.what(),
                             "line " + std::to_string(lineno));
        }
        std::string tool = record.at("tool").get<std::string>();
        std::string sample_id = record.at("sample_id").get<std::string>();
        auto key = std::make_pair(tool, sample_id);
        auto [it, inserted] = runs.try_emplace(key);
        ToolRun& run = it->second;
        if (inserted) {
            run.tool = tool;
            run.sample_id = sample_id;
            run.status = RunStatus::completed;
        }
        if (record.contains("status")) {
            std::string status = record.at("status").get<std::string>();
            if (status == "unsupported") run.status = RunStatus::unsupported;
            else if (status == "errored") run.status = RunStatus::errored;
            else if (status != "completed")
                throw ParseError("unknown status '" + status + "'",
                                 "line " + std::to_string(lineno));
            continue;
        }
        Finding finding;
        finding.tool = tool;
        finding.rule_id = record.value("rule_id", "");
        if (record.contains("cwe") && !record.at("cwe").is_null()) {
            const json& cwe = record.at("cwe");
            if (cwe.is_array()) {
                for (const json& item : cwe) {
                    finding.cwe_ids.push_back(item.is_number()
                                                  ? CweId::from_number(item.get<int>())
                                                  : CweId::parse(item.get<std::string>()));
                }
            } else if (cwe.is_number()) {
                finding.cwe_ids.push_back(CweId::from_number(cwe.get<int>()));
            } else {
                finding.cwe_ids.push_back(CweId::parse(cwe.get<std::string>()));
            }
        } else {
            result.warnings.push_back("finding without cwe at line " + std::to_string(lineno));
        }
        finding.path = record.value("path", "");
        finding.line_start = record.value("line_start", 1);
        finding.line_end = record.value("line_end", finding.line_start);
        if (finding.line_end < finding.line_start) {
            throw ParseError("line_end precedes line_start", "line " + std::to_string(lineno));
        }
        finding.severity = record.value("severity", "");
        finding.message = record.value("message", "");
        run.findings.push_back(std::move(finding));
    }
    for (auto& [key, run] : runs) {
        if (run.status != RunStatus::completed && !run.findings.empty()) {
            throw ValidationError("run " + run.tool + "/" + run.sample_id +
                                  " is " + to_string(run.status) + " but carries findings");
        }
        result.runs.push_back(std::move(run));
    }
    return result;
}

namespace {

bool paths_match(const std::string& finding_path, const std::string& hint_path) {
    if (finding_path == hint_path) {
        return true;
    }
    // tolerate prefix differences: compare by filename
    return fs::path(finding_path).filename() == fs::path(hint_path).filename();
}

}  // namespace

verdict::VerdictValue judge_sample(const corpus::CodeSample& sample, const ToolRun& run,
                                   const CweId& target, CweMatchMode mode,
                                   const CweFamilyTable* family) {
    if (run.sample_id != sample.id) {
        throw ValidationError("tool run is for sample " + run.sample_id + ", not " + sample.id);
    }
    const CweFamilyTable& table = family != nullptr ? *family : CweFamilyTable::bundled();
    for (const Finding& finding : run.findings) {
        bool cwe_match = false;
        for (const CweId& found : finding.cwe_ids) {
            if (mode == CweMatchMode::strict ? found == target : table.matches(target, found)) {
                cwe_match = true;
                break;
            }
        }
        if (!cwe_match) {
            continue;
        }
        if (sample.location_hint.has_value()) {
            const corpus::LocationHint& hint = *sample.location_hint;
            bool lines_intersect = finding.line_start <= hint.line_end &&
                                   hint.line_start <= finding.line_end;
            if (paths_match(finding.path, hint.path) && lines_intersect) {
                return verdict::VerdictValue::vulnerable;
            }
        } else {
            // no line-level truth: any finding in the sample's file counts
            return verdict::VerdictValue::vulnerable;
        }
    }
    return verdict::VerdictValue::non_vulnerable;
}

ToolEvaluation tool_confusion(const corpus::CorpusSlice& slice, const std::vector<ToolRun>& runs,
                              const CweId& target, CweMatchMode mode,
                              const CweFamilyTable* family) {
    std::map<std::string, const ToolRun*> by_sample;
    for (const ToolRun& run : runs) {
        if (!by_sample.emplace(run.sample_id, &run).second) {
            throw ValidationError("duplicate tool run for sample " + run.sample_id);
        }
    }

    ToolEvaluation evaluation;
    int completed = 0;
    for (const corpus::CodeSample& sample : slice.samples) {
        verdict::VerdictValue prediction = verdict::VerdictValue::non_vulnerable;
        auto it = by_sample.find(sample.id);
        if (it != by_sample.end() && it->second->status == RunStatus::completed) {
            prediction = judge_sample(sample, *it->second, target, mode, family);
            ++completed;
        } else {
            // missing or unsupported: tools default to a negative prediction
            ++evaluation.unsupported_runs;
        }
        evaluation.predictions[sample.id] = prediction;
        evaluation.counts.add(verdict::score(prediction, sample.label));
    }
    evaluation.pairwise_acc = metrics::pairwise_accuracy(slice.pairs, evaluation.predictions);
    evaluation.excluded = completed == 0 && !slice.samples.empty();
    return evaluation;
}

}  // namespace vulnbench::sa
