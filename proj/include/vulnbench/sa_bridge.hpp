#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vulnbench/corpus.hpp"
#include "vulnbench/cwe.hpp"
#include "vulnbench/metrics.hpp"
#include "vulnbench/verdict.hpp"

namespace vulnbench::sa {

struct Finding {
    std::string tool;
    std::string rule_id;
    std::vector<CweId> cwe_ids;  // may be empty when no mapping exists
    std::string path;
    int line_start = 1;
    int line_end = 1;
    std::string severity;
    std::string message;
};

enum class RunStatus { completed, unsupported, errored };

std::string to_string(RunStatus status);

struct ToolRun {
    std::string tool;
    std::string sample_id;
    std::vector<Finding> findings;  // empty for unsupported/errored runs
    RunStatus status = RunStatus::completed;
};

/// Per-tool rule_id -> CWE list, for analyzers whose SARIF carries no
/// taxonomy references. Data file: `tool<TAB>rule_id<TAB>cwe[,cwe...]`.
class RuleCweMap {
public:
    static RuleCweMap load(const std::filesystem::path& path);
    void add(const std::string& tool, const std::string& rule_id, std::vector<CweId> cwes);
    std::optional<std::vector<CweId>> lookup(const std::string& tool,
                                             const std::string& rule_id) const;

private:
    std::map<std::string, std::map<std::string, std::vector<CweId>>> by_tool_;
};

struct IngestResult {
    std::vector<ToolRun> runs;
    std::vector<std::string> warnings;  // e.g. unmapped rules kept with empty cwe_ids
};

/// SARIF 2.1.0 ingestion: one ToolRun per (tool, artifact); the sample id is
/// the artifact's file stem. CWE ids come from taxonomy references (taxa)
/// when present, else from the rule map. Schema violations throw a ParseError
/// carrying the JSON pointer.
IngestResult ingest_sarif(const std::filesystem::path& path,
                          const RuleCweMap* rule_map = nullptr);

/// Generic findings JSONL: {tool, sample_id, rule_id, cwe, path, line_start,
/// line_end, severity, message}; rows with a "status" field mark
/// unsupported/errored runs.
IngestResult ingest_findings_jsonl(const std::filesystem::path& path);

enum class CweMatchMode { strict, family };

/// The tool-side TP rule: vulnerable iff some finding maps to the target CWE
/// (family mode counts descendants) AND the location matches - the finding
/// range must intersect the sample's location hint when one exists; without
/// a hint any finding in the sample's file suffices. Tools never abstain.
verdict::VerdictValue judge_sample(const corpus::CodeSample& sample, const ToolRun& run,
                                   const CweId& target,
                                   CweMatchMode mode = CweMatchMode::family,
                                   const CweFamilyTable* family = nullptr);

struct ToolEvaluation {
    metrics::ConfusionCounts counts;
    std::map<std::string, verdict::VerdictValue> predictions;
    std::optional<double> pairwise_acc;  // unset for unpaired slices
    int unsupported_runs = 0;
    bool excluded = false;  // whole slice unsupported for this tool
};

/// Confusion counts for one tool over one slice. Missing runs count as
/// non-vulnerable predictions (tools default to negative on unsupported
/// input); a duplicate run for one sample is an error.
ToolEvaluation tool_confusion(const corpus::CorpusSlice& slice,
                              const std::vector<ToolRun>& runs, const CweId& target,
                              CweMatchMode mode = CweMatchMode::family,
                              const CweFamilyTable* family = nullptr);

}  // namespace vulnbench::sa
