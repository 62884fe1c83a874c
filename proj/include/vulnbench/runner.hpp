#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vulnbench/corpus.hpp"
#include "vulnbench/gateway.hpp"
#include "vulnbench/metrics.hpp"
#include "vulnbench/sa_bridge.hpp"
#include "vulnbench/strategy.hpp"
#include "vulnbench/verdict.hpp"

namespace vulnbench::runner {

enum class GatewayMode { live, mock, cache_only };

std::string to_string(GatewayMode mode);
GatewayMode parse_gateway_mode(std::string_view text);

/// Declarative experiment manifest (YAML on disk; canonical printed form for
/// hashing). Trial seeds derive as seed + trial index.
struct ExperimentConfig {
    std::filesystem::path corpus_path;
    corpus::CorpusFormat corpus_format = corpus::CorpusFormat::jsonl;
    std::vector<CweId> cwes;
    std::vector<strategy::StrategySetting> strategies;
    std::vector<std::string> models;
    int trials = 3;
    std::int64_t seed = 0;
    GatewayMode gateway_mode = GatewayMode::mock;
    std::filesystem::path output_dir;
    std::filesystem::path store_dir;
    std::optional<std::filesystem::path> transcript_path;
    std::optional<std::filesystem::path> cache_dir;
    bool mock_synthesize = false;
    /// Tag experiment shape for the basic strategy: <answer> tags on,
    /// verbosity clause off.
    bool tag_mode = false;
    int max_in_flight = 4;
    std::optional<int> subset;  // evaluate only the first N samples per slice
    std::optional<std::filesystem::path> sa_findings;  // findings JSONL for deltas
    std::optional<std::filesystem::path> juliet_path;  // Phase-1 corpus (directory tree)
    std::optional<std::string> scenario_selector;
    std::string forge_model = "gpt-4";

    static ExperimentConfig from_yaml_file(const std::filesystem::path& path);
    static ExperimentConfig from_yaml_string(const std::string& text);
    void validate() const;
    /// Sorted `key: value` lines; the canonical form backing config_hash().
    std::string canonical_string() const;
    std::string config_hash() const;
};

struct RunRecord {
    std::string sample_id;
    strategy::StrategySetting strategy;
    std::string model;
    int trial = 1;
    verdict::VerdictValue verdict = verdict::VerdictValue::abstain;
    verdict::ParseRule rule_used = verdict::ParseRule::none;
    std::string response_ref;  // gateway cache key
    long latency_ms = 0;
    long prompt_tokens = 0;
    long completion_tokens = 0;
    std::string error;  // per-item failure; empty on success

    std::string key() const;
    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& record);
};

struct AggregateKey {
    strategy::StrategySetting strategy;
    std::string model;
    CweId cwe;

    std::string label() const;
    friend bool operator<(const AggregateKey& a, const AggregateKey& b) {
        if (a.strategy.rank() != b.strategy.rank()) return a.strategy.rank() < b.strategy.rank();
        if (a.model != b.model) return a.model < b.model;
        return a.cwe < b.cwe;
    }
};

struct RunOutput {
    std::vector<RunRecord> records;  // canonical order
    std::map<AggregateKey, metrics::TrialAggregate> aggregates;
    int item_errors = 0;
    std::string config_hash;
};

std::vector<RunRecord> load_records(const std::filesystem::path& path);
void save_records(const std::vector<RunRecord>& records, const std::filesystem::path& path);

/// Renders, completes, parses, and scores each trial x strategy x model x
/// sample cell. Records persist incrementally to <output>/records.jsonl and
/// the run resumes from whatever is already there (idempotent by record key).
RunOutput run_experiment(const ExperimentConfig& config, gateway::Gateway& gw);

/// Recomputes aggregates from persisted records (the `score` path).
RunOutput aggregate_records(const ExperimentConfig& config,
                            const std::vector<corpus::CorpusSlice>& slices,
                            std::vector<RunRecord> records);

struct DeltaRow {
    AggregateKey key;
    metrics::MetricSet subject;
    std::optional<metrics::DeltaSet> vs_prompt_baseline;
    std::optional<metrics::DeltaSet> vs_sa_baseline;
    std::string sa_tool;  // which analyzer provided the SA baseline
};

/// Per-(strategy, model, cwe) deltas against the basic-prompt aggregate on
/// the same slice and against the strongest analyzer for the CWE.
std::vector<DeltaRow> compare_to_baselines(
    const std::map<AggregateKey, metrics::TrialAggregate>& aggregates,
    const std::map<std::pair<std::string, int>, metrics::MetricSet>& basic_by_model_cwe,
    const std::map<int, std::pair<std::string, metrics::MetricSet>>& sa_by_cwe);

struct Top2Matrix {
    std::vector<strategy::StrategySetting> rows;
    std::vector<std::pair<std::string, int>> columns;  // (model, cwe number)
    std::vector<std::vector<int>> cells;               // [row][column]

    int column_sum(size_t column) const;
};

/// Per (model, cwe) column: rank strategies by mean pairwise accuracy
/// descending (ties: F1 descending, then strategy rank) and count the top
/// two. Every column contributes exactly 2. Throws when a column has fewer
/// than two strategies.
Top2Matrix top2_frequency(const std::map<AggregateKey, metrics::TrialAggregate>& aggregates);

/// Mean rendered-prompt token counts per (strategy, cwe) under the reference
/// tokenizer; pure rendering, no gateway involved.
std::vector<metrics::CostRecord> cost_report(const ExperimentConfig& config,
                                             const std::vector<corpus::CorpusSlice>& slices);

/// Writes metrics.csv, deltas.csv, top2.csv, cost.csv, report.md, and the
/// canonical records.jsonl into the output directory. Byte-identical for
/// identical inputs.
void emit_reports(const ExperimentConfig& config, const RunOutput& output);

/// Loads the evaluation slices for the config (filter + optional subset).
std::vector<corpus::CorpusSlice> load_config_slices(const ExperimentConfig& config);

/// Template acquisition for one (strategy, cwe): the store copy when present,
/// otherwise forged on the spot (throws when forging needs a gateway the mode
/// does not provide).
strategy::PromptTemplate acquire_template(const ExperimentConfig& config,
                                          const strategy::StrategySetting& setting,
                                          const CweId& cwe, gateway::Gateway& gw,
                                          const std::vector<corpus::CorpusSlice>& slices);

}  // namespace vulnbench::runner
