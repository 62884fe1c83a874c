#include "vulnbench/metrics.hpp"

#include <cmath>
#include <mutex>
#include <sstream>

#include "vulnbench/common.hpp"

namespace vulnbench::metrics {

void ConfusionCounts::add(verdict::Outcome outcome) {
    switch (outcome) {
        case verdict::Outcome::tp: ++tp; break;
        case verdict::Outcome::fp: ++fp; break;
        case verdict::Outcome::tn: ++tn; break;
        case verdict::Outcome::fn: ++fn; break;
        case verdict::Outcome::abstain_pos: ++abstain_pos; break;
        case verdict::Outcome::abstain_neg: ++abstain_neg; break;
    }
}

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {"acc",          "precision", "recall",
                                                   "f1",           "fpr",       "fnr",
                                                   "pairwise_acc", "abstain_rate"};
    return names;
}

std::optional<double> metric_by_name(const MetricSet& set, const std::string& name) {
    if (name == "acc") return set.acc;
    if (name == "precision") return set.precision;
    if (name == "recall") return set.recall;
    if (name == "f1") return set.f1;
    if (name == "fpr") return set.fpr;
    if (name == "fnr") return set.fnr;
    if (name == "pairwise_acc") return set.pairwise_acc;
    if (name == "abstain_rate") return set.abstain_rate;
    throw ValidationError("unknown metric: " + name);
}

void set_metric_by_name(MetricSet& set, const std::string& name, std::optional<double> value) {
    if (name == "acc") set.acc = value;
    else if (name == "precision") set.precision = value;
    else if (name == "recall") set.recall = value;
    else if (name == "f1") set.f1 = value;
    else if (name == "fpr") set.fpr = value;
    else if (name == "fnr") set.fnr = value;
    else if (name == "pairwise_acc") set.pairwise_acc = value;
    else if (name == "abstain_rate") set.abstain_rate = value;
    else throw ValidationError("unknown metric: " + name);
}

MetricSet compute_metrics(const ConfusionCounts& c) {
    if (c.total() == 0) {
        throw ValidationError("empty confusion counts");
    }
    MetricSet m;
    // ratio with the tp==0 zero-fill convention for zero denominators
    auto zero_filled = [&](long num, long den) -> std::optional<double> {
        if (den > 0) {
            return static_cast<double>(num) / static_cast<double>(den);
        }
        if (c.tp == 0) {
            return 0.0;
        }
        return std::nullopt;
    };
    auto plain = [](long num, long den) -> std::optional<double> {
        if (den > 0) {
            return static_cast<double>(num) / static_cast<double>(den);
        }
        return std::nullopt;
    };

    m.acc = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
    m.precision = zero_filled(c.tp, c.tp + c.fp);
    m.recall = zero_filled(c.tp, c.tp + c.fn);
    m.f1 = zero_filled(2 * c.tp, 2 * c.tp + c.fp + c.fn);
    m.fpr = plain(c.fp, c.fp + c.tn);
    m.fnr = plain(c.fn, c.fn + c.tp);
    m.abstain_rate = static_cast<double>(c.abstain_pos + c.abstain_neg) /
                     static_cast<double>(c.total());
    return m;
}

std::optional<double> pairwise_accuracy(
    const std::vector<corpus::SamplePair>& pairs,
    const std::map<std::string, verdict::VerdictValue>& verdicts) {
    if (pairs.empty()) {
        return std::nullopt;
    }
    auto lookup = [&](const std::string& id) {
        auto it = verdicts.find(id);
        if (it == verdicts.end()) {
            throw ValidationError("missing verdict for sample " + id);
        }
        return it->second;
    };
    long correct = 0;
    for (const corpus::SamplePair& pair : pairs) {
        verdict::VerdictValue on_vulnerable = lookup(pair.vulnerable_id);
        verdict::VerdictValue on_fixed = lookup(pair.fixed_id);
        if (on_vulnerable == verdict::VerdictValue::vulnerable &&
            on_fixed == verdict::VerdictValue::non_vulnerable) {
            ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

TrialAggregate average_trials(const std::vector<MetricSet>& per_trial) {
    if (per_trial.empty()) {
        throw ValidationError("average_trials needs at least one trial");
    }
    TrialAggregate aggregate;
    aggregate.per_trial = per_trial;
    aggregate.trial_count = static_cast<int>(per_trial.size());
    for (const std::string& name : metric_names()) {
        bool first_defined = metric_by_name(per_trial.front(), name).has_value();
        double sum = 0.0;
        for (size_t i = 0; i < per_trial.size(); ++i) {
            auto value = metric_by_name(per_trial[i], name);
            if (value.has_value() != first_defined) {
                throw ValidationError("metric '" + name +
                                      "' is defined in some trials but not others");
            }
            if (value.has_value()) {
                sum += *value;
            }
        }
        if (first_defined) {
            set_metric_by_name(aggregate.mean, name,
                               sum / static_cast<double>(per_trial.size()));
        }
    }
    return aggregate;
}

DeltaSet delta(const MetricSet& subject, const MetricSet& baseline) {
    DeltaSet out;
    auto assign = [&](std::optional<double> DeltaSet::*field, const std::string& name) {
        auto s = metric_by_name(subject, name);
        auto b = metric_by_name(baseline, name);
        if (s.has_value() && b.has_value()) {
            out.*field = (*s - *b) * 100.0;
        }
    };
    assign(&DeltaSet::acc, "acc");
    assign(&DeltaSet::precision, "precision");
    assign(&DeltaSet::recall, "recall");
    assign(&DeltaSet::f1, "f1");
    assign(&DeltaSet::fpr, "fpr");
    assign(&DeltaSet::fnr, "fnr");
    assign(&DeltaSet::pairwise_acc, "pairwise_acc");
    assign(&DeltaSet::abstain_rate, "abstain_rate");
    return out;
}

std::optional<double> delta_by_name(const DeltaSet& set, const std::string& name) {
    if (name == "acc") return set.acc;
    if (name == "precision") return set.precision;
    if (name == "recall") return set.recall;
    if (name == "f1") return set.f1;
    if (name == "fpr") return set.fpr;
    if (name == "fnr") return set.fnr;
    if (name == "pairwise_acc") return set.pairwise_acc;
    if (name == "abstain_rate") return set.abstain_rate;
    throw ValidationError("unknown metric: " + name);
}

double delta_metric(const MetricSet& subject, const MetricSet& baseline,
                    const std::string& name) {
    auto s = metric_by_name(subject, name);
    auto b = metric_by_name(baseline, name);
    if (!s.has_value() || !b.has_value()) {
        throw ValidationError("metric '" + name + "' undefined on one side of the delta");
    }
    return (*s - *b) * 100.0;
}

bool delta_is_improvement(const std::string& metric_name, double delta_points) {
    if (metric_name == "fnr" || metric_name == "fpr" || metric_name == "abstain_rate") {
        return delta_points < 0.0;
    }
    return delta_points > 0.0;
}

std::vector<std::string> consistency_notes(const MetricSet& set, bool balanced, double tol) {
    std::vector<std::string> notes;
    for (const std::string& name : metric_names()) {
        auto value = metric_by_name(set, name);
        if (value.has_value() && (*value < -tol || *value > 1.0 + tol)) {
            notes.push_back(name + "=" + format_fixed(*value, 3) + " is outside [0,1]");
        }
    }
    if (balanced && set.acc.has_value() && set.fnr.has_value() && set.fpr.has_value()) {
        double implied = 1.0 - (*set.fnr + *set.fpr) / 2.0;
        if (std::abs(implied - *set.acc) > tol) {
            notes.push_back("acc=" + format_fixed(*set.acc, 3) +
                            " is inconsistent with fnr/fpr on a balanced slice (implies acc=" +
                            format_fixed(implied, 3) + ")");
        }
    }
    if (set.recall.has_value() && set.fnr.has_value() &&
        std::abs(*set.recall + *set.fnr - 1.0) > tol) {
        notes.push_back("recall+fnr=" + format_fixed(*set.recall + *set.fnr, 3) +
                        " differs from 1");
    }
    return notes;
}

namespace {

struct ReferenceClasses {
    std::string word_chars;
    bool terminal_group = true;
};

ReferenceClasses load_reference_classes() {
    ReferenceClasses classes;
    classes.word_chars =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789_";
    auto content = read_file_if_exists(data_dir() / "tokenizer_classes.tsv");
    if (!content.has_value()) {
        return classes;
    }
    for (const std::string& raw : split_lines(*content)) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            continue;
        }
        std::string key = trim(line.substr(0, tab));
        std::string value = trim(line.substr(tab + 1));
        if (key == "word_chars") {
            // value is a space-separated list of chars and a-b ranges
            std::string chars;
            std::istringstream in(value);
            std::string item;
            while (in >> item) {
                if (item.size() == 3 && item[1] == '-') {
                    for (char c = item[0]; c <= item[2]; ++c) {
                        chars.push_back(c);
                    }
                } else {
                    chars += item;
                }
            }
            if (!chars.empty()) {
                classes.word_chars = chars;
            }
        } else if (key == "terminal_group") {
            classes.terminal_group = value != "0";
        }
    }
    return classes;
}

std::size_t reference_count(const std::string& text) {
    static const ReferenceClasses classes = load_reference_classes();
    if (text.empty()) {
        return 0;
    }
    auto is_word = [&](char c) {
        return classes.word_chars.find(c) != std::string::npos;
    };
    std::size_t tokens = 0;
    size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            ++i;
            continue;
        }
        if (is_word(text[i])) {
            ++tokens;
            while (i < text.size() && is_word(text[i])) {
                ++i;
            }
        } else {
            ++tokens;  // every other printable byte is its own token
            ++i;
        }
    }
    if (classes.terminal_group) {
        ++tokens;
    }
    return tokens;
}

std::map<std::string, TokenizerFn>& tokenizer_registry() {
    static std::map<std::string, TokenizerFn> registry = {
        {kReferenceTokenizerId, reference_count}};
    return registry;
}

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

void register_tokenizer(const std::string& tokenizer_id, TokenizerFn fn) {
    std::lock_guard<std::mutex> lock(registry_mutex());
    tokenizer_registry()[tokenizer_id] = std::move(fn);
}

std::size_t count_tokens(const std::string& text, const std::string& tokenizer_id) {
    TokenizerFn fn;
    {
        std::lock_guard<std::mutex> lock(registry_mutex());
        auto it = tokenizer_registry().find(tokenizer_id);
        if (it == tokenizer_registry().end()) {
            throw ValidationError("unknown tokenizer: " + tokenizer_id);
        }
        fn = it->second;
    }
    return fn(text);
}

std::string to_string(SampleScope scope) {
    return scope == SampleScope::subset_23 ? "subset_23" : "full";
}

}  // namespace vulnbench::metrics
