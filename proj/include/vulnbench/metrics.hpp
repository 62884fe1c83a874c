#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vulnbench/corpus.hpp"
#include "vulnbench/strategy_setting.hpp"
#include "vulnbench/verdict.hpp"

namespace vulnbench::metrics {

struct ConfusionCounts {
    long tp = 0;
    long fp = 0;
    long tn = 0;
    long fn = 0;
    long abstain_pos = 0;
    long abstain_neg = 0;

    long decided() const { return tp + fp + tn + fn; }
    long total() const { return decided() + abstain_pos + abstain_neg; }
    void add(verdict::Outcome outcome);
};

/// Each metric is a real in [0,1] when defined. pairwise_acc stays unset for
/// unpaired slices; rate metrics stay unset when their denominator vanishes
/// with tp > 0 impossible (see compute_metrics).
struct MetricSet {
    std::optional<double> acc;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> fpr;
    std::optional<double> fnr;
    std::optional<double> pairwise_acc;
    std::optional<double> abstain_rate;
};

/// Names of the MetricSet fields, in report column order.
const std::vector<std::string>& metric_names();
std::optional<double> metric_by_name(const MetricSet& set, const std::string& name);
void set_metric_by_name(MetricSet& set, const std::string& name, std::optional<double> value);

/// Accuracy counts abstentions against the model; precision/recall/F1/FPR/FNR
/// are over decided samples only, with abstain_rate reported alongside.
/// Zero denominators with tp == 0 yield the defined value 0 for
/// precision/recall/f1; other vanishing denominators leave the metric unset.
/// Throws on an all-zero confusion.
MetricSet compute_metrics(const ConfusionCounts& counts);

/// Fraction of pairs whose vulnerable member was predicted vulnerable AND
/// fixed member predicted non-vulnerable. Abstain on either member fails the
/// pair. Empty pair list -> nullopt (undefined, not 0). Missing verdicts throw.
std::optional<double> pairwise_accuracy(
    const std::vector<corpus::SamplePair>& pairs,
    const std::map<std::string, verdict::VerdictValue>& verdicts);

struct TrialAggregate {
    std::vector<MetricSet> per_trial;
    MetricSet mean;
    int trial_count = 0;
};

/// Metric-level arithmetic mean (mean of per-trial metrics, never metrics of
/// pooled confusions). All trials must agree on which metrics are defined.
TrialAggregate average_trials(const std::vector<MetricSet>& per_trial);

/// Signed per-metric differences, subject minus baseline, in percentage
/// points. A field is set iff both inputs define it.
struct DeltaSet {
    std::optional<double> acc;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
    std::optional<double> fpr;
    std::optional<double> fnr;
    std::optional<double> pairwise_acc;
    std::optional<double> abstain_rate;
};

DeltaSet delta(const MetricSet& subject, const MetricSet& baseline);
std::optional<double> delta_by_name(const DeltaSet& set, const std::string& name);

/// Single-metric delta in percentage points; throws when either side leaves
/// the metric undefined.
double delta_metric(const MetricSet& subject, const MetricSet& baseline,
                    const std::string& name);

/// For FNR/FPR a negative delta is the improvement; positive for the rest.
bool delta_is_improvement(const std::string& metric_name, double delta_points);

/// Internal-identity checks over a reported metric set (acc vs rates on a
/// balanced slice, recall+fnr, unit intervals). Returns human-readable notes;
/// empty means consistent within tol.
std::vector<std::string> consistency_notes(const MetricSet& set, bool balanced,
                                           double tol = 0.005);

// --- token accounting ---

using TokenizerFn = std::function<std::size_t(const std::string&)>;

/// Registers an external tokenizer adapter under an id.
void register_tokenizer(const std::string& tokenizer_id, TokenizerFn fn);

/// Deterministic token count. The built-in "reference" tokenizer emits one
/// token per word-character run, one per other printable character, and a
/// single terminal group for non-empty text; the character classes ship in
/// data/tokenizer_classes.tsv. Throws on an unknown tokenizer id.
std::size_t count_tokens(const std::string& text, const std::string& tokenizer_id = "reference");

inline constexpr const char* kReferenceTokenizerId = "reference";

enum class SampleScope { subset_23, full };

std::string to_string(SampleScope scope);

struct CostRecord {
    strategy::StrategySetting strategy;
    CweId cwe;
    SampleScope scope = SampleScope::full;
    double mean_tokens = 0.0;
    std::string tokenizer_id = kReferenceTokenizerId;
};

}  // namespace vulnbench::metrics
