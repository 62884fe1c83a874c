#include "vulnbench/runner.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "vulnbench/common.hpp"

namespace vulnbench::runner {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(GatewayMode mode) {
    switch (mode) {
        case GatewayMode::live: return "live";
        case GatewayMode::mock: return "mock";
        case GatewayMode::cache_only: return "cache_only";
    }
    return "mock";
}

GatewayMode parse_gateway_mode(std::string_view text) {
    std::string t = to_lower(trim(text));
    if (t == "live") return GatewayMode::live;
    if (t == "mock") return GatewayMode::mock;
    if (t == "cache_only" || t == "cache-only") return GatewayMode::cache_only;
    throw ValidationError("unknown gateway mode: '" + std::string(text) + "'");
}

// --- config ---

ExperimentConfig ExperimentConfig::from_yaml_file(const fs::path& path) {
    auto content = read_file(path);
    try {
        return from_yaml_string(content);
    } catch (const YAML::Exception& e) {
        throw ParseError(std::string("bad config: ") + e.what(), path.string());
    }
}

ExperimentConfig ExperimentConfig::from_yaml_string(const std::string& text) {
    YAML::Node root = YAML::Load(text);
    ExperimentConfig config;
    if (root["corpus"]) config.corpus_path = root["corpus"].as<std::string>();
    if (root["corpus_format"]) {
        std::string format = root["corpus_format"].as<std::string>();
        if (format == "jsonl") config.corpus_format = corpus::CorpusFormat::jsonl;
        else if (format == "directory_tree")
            config.corpus_format = corpus::CorpusFormat::directory_tree;
        else throw ValidationError("unknown corpus_format: " + format);
    }
    if (root["cwes"]) {
        for (const auto& node : root["cwes"]) {
            config.cwes.push_back(CweId::parse(node.as<std::string>()));
        }
    }
    if (root["strategies"]) {
        for (const auto& node : root["strategies"]) {
            config.strategies.push_back(strategy::StrategySetting::parse(node.as<std::string>()));
        }
    }
    if (root["models"]) {
        for (const auto& node : root["models"]) {
            config.models.push_back(node.as<std::string>());
        }
    }
    if (root["trials"]) config.trials = root["trials"].as<int>();
    if (root["seed"]) config.seed = root["seed"].as<std::int64_t>();
    if (root["gateway"]) config.gateway_mode = parse_gateway_mode(root["gateway"].as<std::string>());
    if (root["output"]) config.output_dir = root["output"].as<std::string>();
    if (root["store"]) config.store_dir = root["store"].as<std::string>();
    if (root["transcript"]) config.transcript_path = fs::path(root["transcript"].as<std::string>());
    if (root["cache_dir"]) config.cache_dir = fs::path(root["cache_dir"].as<std::string>());
    if (root["mock_synthesize"]) config.mock_synthesize = root["mock_synthesize"].as<bool>();
    if (root["tag_mode"]) config.tag_mode = root["tag_mode"].as<bool>();
    if (root["max_in_flight"]) config.max_in_flight = root["max_in_flight"].as<int>();
    if (root["subset"] && !root["subset"].IsNull()) config.subset = root["subset"].as<int>();
    if (root["sa_findings"]) config.sa_findings = fs::path(root["sa_findings"].as<std::string>());
    if (root["juliet"]) config.juliet_path = fs::path(root["juliet"].as<std::string>());
    if (root["scenario_selector"])
        config.scenario_selector = root["scenario_selector"].as<std::string>();
    if (root["forge_model"]) config.forge_model = root["forge_model"].as<std::string>();
    return config;
}

void ExperimentConfig::validate() const {
    if (trials < 1) {
        throw ValidationError("trials must be >= 1, got " + std::to_string(trials));
    }
    if (cwes.empty()) throw ValidationError("config needs at least one cwe");
    if (strategies.empty()) throw ValidationError("config needs at least one strategy");
    if (models.empty()) throw ValidationError("config needs at least one model");
    for (const strategy::StrategySetting& setting : strategies) {
        if (!setting.valid()) {
            throw ValidationError("invalid strategy setting in config");
        }
    }
    if (corpus_path.empty()) throw ValidationError("config needs a corpus path");
    if (output_dir.empty()) throw ValidationError("config needs an output dir");
    if (store_dir.empty()) throw ValidationError("config needs a template store dir");
    if (max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
    if (subset.has_value() && *subset < 1) throw ValidationError("subset must be >= 1");
    if (gateway_mode == GatewayMode::mock && !transcript_path.has_value() && !mock_synthesize) {
        throw ValidationError("mock gateway needs a transcript or mock_synthesize: true");
    }
}

std::string ExperimentConfig::canonical_string() const {
    std::map<std::string, std::string> kv;
    kv["corpus"] = corpus_path.string();
    kv["corpus_format"] =
        corpus_format == corpus::CorpusFormat::jsonl ? "jsonl" : "directory_tree";
    auto join = [](const auto& items, auto fn) {
        std::string out = "[";
        bool first = true;
        for (const auto& item : items) {
            if (!first) out += ", ";
            out += fn(item);
            first = false;
        }
        return out + "]";
    };
    kv["cwes"] = join(cwes, [](const CweId& cwe) { return cwe.to_string(); });
    kv["strategies"] =
        join(strategies, [](const strategy::StrategySetting& s) { return s.to_string(); });
    kv["models"] = join(models, [](const std::string& m) { return m; });
    kv["trials"] = std::to_string(trials);
    kv["seed"] = std::to_string(seed);
    kv["gateway"] = to_string(gateway_mode);
    kv["output"] = output_dir.string();
    kv["store"] = store_dir.string();
    if (transcript_path) kv["transcript"] = transcript_path->string();
    if (cache_dir) kv["cache_dir"] = cache_dir->string();
    kv["mock_synthesize"] = mock_synthesize ? "true" : "false";
    kv["tag_mode"] = tag_mode ? "true" : "false";
    kv["max_in_flight"] = std::to_string(max_in_flight);
    if (subset) kv["subset"] = std::to_string(*subset);
    if (sa_findings) kv["sa_findings"] = sa_findings->string();
    if (juliet_path) kv["juliet"] = juliet_path->string();
    if (scenario_selector) kv["scenario_selector"] = *scenario_selector;
    kv["forge_model"] = forge_model;

    std::string out;
    for (const auto& [key, value] : kv) {
        out += key + ": " + value + "\n";
    }
    return out;
}

std::string ExperimentConfig::config_hash() const {
    return sha256_hex(canonical_string()).substr(0, 16);
}

// --- records ---

std::string RunRecord::key() const {
    return sample_id + "|" + strategy.to_string() + "|" + model + "|" + std::to_string(trial);
}

json RunRecord::to_json() const {
    json record;
    record["sample_id"] = sample_id;
    record["strategy"] = strategy.to_string();
    record["model"] = model;
    record["trial"] = trial;
    record["verdict"] = verdict::to_string(verdict);
    record["rule_used"] = verdict::to_string(rule_used);
    record["response_ref"] = response_ref;
    record["latency_ms"] = latency_ms;
    record["prompt_tokens"] = prompt_tokens;
    record["completion_tokens"] = completion_tokens;
    if (!error.empty()) {
        record["error"] = error;
    }
    return record;
}

RunRecord RunRecord::from_json(const json& record) {
    RunRecord out;
    out.sample_id = record.at("sample_id").get<std::string>();
    out.strategy = strategy::StrategySetting::parse(record.at("strategy").get<std::string>());
    out.model = record.at("model").get<std::string>();
    out.trial = record.at("trial").get<int>();
    out.verdict = verdict::parse_verdict_value(record.at("verdict").get<std::string>());
    std::string rule = record.at("rule_used").get<std::string>();
    if (rule == "answer_tag") out.rule_used = verdict::ParseRule::answer_tag;
    else if (rule == "final_line") out.rule_used = verdict::ParseRule::final_line;
    else if (rule == "body_scan") out.rule_used = verdict::ParseRule::body_scan;
    else out.rule_used = verdict::ParseRule::none;
    out.response_ref = record.value("response_ref", "");
    out.latency_ms = record.value("latency_ms", 0L);
    out.prompt_tokens = record.value("prompt_tokens", 0L);
    out.completion_tokens = record.value("completion_tokens", 0L);
    out.error = record.value("error", "");
    return out;
}

std::string AggregateKey::label() const {
    return strategy.to_string() + "/" + model + "/" + cwe.to_string();
}

std::vector<RunRecord> load_records(const fs::path& path) {
    std::vector<RunRecord> records;
    auto content = read_file_if_exists(path);
    if (!content.has_value()) {
        return records;
    }
    size_t lineno = 0;
    for (const std::string& line : split_lines(*content)) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        try {
            records.push_back(RunRecord::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad run record: ") + e.what(),
                             "line " + std::to_string(lineno));
        }
    }
    return records;
}

namespace {

void sort_canonical(std::vector<RunRecord>& records) {
    std::sort(records.begin(), records.end(), [](const RunRecord& a, const RunRecord& b) {
        if (a.trial != b.trial) return a.trial < b.trial;
        if (a.strategy.rank() != b.strategy.rank()) return a.strategy.rank() < b.strategy.rank();
        if (a.model != b.model) return a.model < b.model;
        return a.sample_id < b.sample_id;
    });
}

}  // namespace

void save_records(const std::vector<RunRecord>& records, const fs::path& path) {
    std::ostringstream out;
    for (const RunRecord& record : records) {
        out << record.to_json().dump() << "\n";
    }
    write_file_atomic(path, out.str());
}

// --- slices & templates ---

std::vector<corpus::CorpusSlice> load_config_slices(const ExperimentConfig& config) {
    std::vector<corpus::CorpusSlice> all = corpus::load_corpus(config.corpus_path,
                                                               config.corpus_format);
    std::vector<corpus::CorpusSlice> slices;
    for (const CweId& cwe : config.cwes) {
        corpus::CorpusSlice slice = corpus::filter_by_cwe(all, cwe);
        if (slice.empty()) {
            throw ValidationError("corpus has no samples for " + cwe.to_string());
        }
        if (config.subset.has_value() && static_cast<size_t>(*config.subset) < slice.samples.size()) {
            slice.samples.resize(static_cast<size_t>(*config.subset));
            // keep only pairs whose two members survived the cut
            std::set<std::string> kept;
            for (const corpus::CodeSample& sample : slice.samples) {
                kept.insert(sample.id);
            }
            std::vector<corpus::SamplePair> pairs;
            for (const corpus::SamplePair& pair : slice.pairs) {
                if (kept.count(pair.vulnerable_id) != 0 && kept.count(pair.fixed_id) != 0) {
                    pairs.push_back(pair);
                }
            }
            slice.pairs = std::move(pairs);
            slice.manifest_counts.total = static_cast<int>(slice.samples.size());
            slice.manifest_counts.vulnerable = 0;
            for (const corpus::CodeSample& sample : slice.samples) {
                if (sample.label == corpus::Label::vulnerable) {
                    ++slice.manifest_counts.vulnerable;
                }
            }
            slice.manifest_counts.non_vulnerable =
                slice.manifest_counts.total - slice.manifest_counts.vulnerable;
        }
        slices.push_back(std::move(slice));
    }
    return slices;
}

namespace {

bool setting_needs_gateway(const strategy::StrategySetting& setting) {
    using strategy::Category;
    using strategy::Setting;
    if (setting.category == Category::basic) return false;
    if (setting.category == Category::nl) {
        return setting.setting == Setting::s1 || setting.setting == Setting::s2;
    }
    return setting.setting != Setting::s0;  // nl_cot s1-s3 run Phases 2-3
}

const corpus::CorpusSlice* slice_for(const std::vector<corpus::CorpusSlice>& slices,
                                     const CweId& cwe) {
    for (const corpus::CorpusSlice& slice : slices) {
        if (slice.cwe == cwe) {
            return &slice;
        }
    }
    return nullptr;
}

std::vector<strategy::ResolvedPair> pick_fewshot_pairs(const corpus::CorpusSlice& slice,
                                                       std::uint64_t seed) {
    if (slice.pairs.size() < 3) {
        throw ValidationError("nl-s2 needs at least 3 pairs in the slice for " +
                              slice.cwe.to_string());
    }
    std::vector<corpus::SamplePair> pairs = slice.pairs;
    std::mt19937_64 rng(seed);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    std::vector<strategy::ResolvedPair> out;
    for (size_t i = 0; i < 3; ++i) {
        out.push_back(strategy::resolve_pair(slice, pairs[i]));
    }
    return out;
}

}  // namespace

strategy::PromptTemplate acquire_template(const ExperimentConfig& config,
                                          const strategy::StrategySetting& setting,
                                          const CweId& cwe, gateway::Gateway& gw,
                                          const std::vector<corpus::CorpusSlice>& slices) {
    strategy::TemplateStore store(config.store_dir);
    strategy::PromptTemplate tmpl;
    if (store.has(cwe, setting)) {
        tmpl = store.load(cwe, setting);
    } else {
        if (setting_needs_gateway(setting) && config.gateway_mode == GatewayMode::cache_only &&
            !config.cache_dir.has_value()) {
            throw EnvironmentError("missing template for " + setting.to_string() + " / " +
                                   cwe.to_string() + " and no gateway to forge it");
        }
        strategy::ForgeInputs inputs;
        inputs.profile = gateway::ModelProfile::for_name(config.forge_model);
        inputs.seed = static_cast<std::uint64_t>(config.seed);
        inputs.scenario_selector = config.scenario_selector;
        if (setting.category == strategy::Category::nl_cot &&
            setting.setting != strategy::Setting::s0) {
            if (!config.juliet_path.has_value()) {
                throw EnvironmentError("missing template for " + setting.to_string() + " / " +
                                       cwe.to_string() +
                                       " and no Phase-1 corpus configured (juliet)");
            }
            auto juliet = corpus::load_corpus(*config.juliet_path,
                                              corpus::CorpusFormat::directory_tree);
            inputs.juliet_slice = corpus::filter_by_cwe(juliet, cwe);
        }
        if (setting.category == strategy::Category::nl &&
            setting.setting == strategy::Setting::s2) {
            const corpus::CorpusSlice* slice = slice_for(slices, cwe);
            if (slice == nullptr) {
                throw ValidationError("no slice for " + cwe.to_string());
            }
            inputs.fewshot_pairs =
                pick_fewshot_pairs(*slice, static_cast<std::uint64_t>(config.seed));
        }
        tmpl = strategy::forge_template(setting, cwe, gw, store, inputs);
    }
    if (setting.category == strategy::Category::basic && config.tag_mode) {
        // tag experiment: answer tags on, verbosity clause off
        tmpl.tag_mode = true;
        tmpl.verbosity_clause.reset();
    }
    return tmpl;
}

// --- experiment execution ---

RunOutput run_experiment(const ExperimentConfig& config, gateway::Gateway& gw) {
    config.validate();
    std::vector<corpus::CorpusSlice> slices = load_config_slices(config);
    fs::create_directories(config.output_dir);
    fs::path records_path = config.output_dir / "records.jsonl";

    std::map<std::string, RunRecord> done;
    for (RunRecord& record : load_records(records_path)) {
        done.emplace(record.key(), std::move(record));
    }

    // templates up front, so a missing template fails the run before any call
    std::map<std::pair<int, int>, strategy::PromptTemplate> templates;  // (strategy rank, cwe)
    for (const strategy::StrategySetting& setting : config.strategies) {
        for (const CweId& cwe : config.cwes) {
            templates.emplace(std::make_pair(setting.rank(), cwe.number),
                              acquire_template(config, setting, cwe, gw, slices));
        }
    }

    int item_errors = 0;
    std::ofstream journal(records_path, std::ios::app);
    if (!journal) {
        throw EnvironmentError("cannot append to " + records_path.string());
    }

    for (int trial = 1; trial <= config.trials; ++trial) {
        for (const strategy::StrategySetting& setting : config.strategies) {
            for (const std::string& model : config.models) {
                gateway::ModelProfile profile = gateway::ModelProfile::for_name(model);
                for (const corpus::CorpusSlice& slice : slices) {
                    const strategy::PromptTemplate& tmpl =
                        templates.at(std::make_pair(setting.rank(), slice.cwe.number));
                    std::vector<const corpus::CodeSample*> missing;
                    std::vector<gateway::CompletionRequest> requests;
                    for (const corpus::CodeSample& sample : slice.samples) {
                        RunRecord probe;
                        probe.sample_id = sample.id;
                        probe.strategy = setting;
                        probe.model = model;
                        probe.trial = trial;
                        if (done.count(probe.key()) != 0) {
                            continue;
                        }
                        strategy::RenderedPrompt rendered = strategy::render(tmpl, sample);
                        gateway::CompletionRequest request;
                        request.profile = profile;
                        request.prompt_text = std::move(rendered.text);
                        request.purpose = gateway::Purpose::evaluate;
                        request.sampling_seed =
                            static_cast<std::uint64_t>(config.seed) + static_cast<std::uint64_t>(trial);
                        missing.push_back(&sample);
                        requests.push_back(std::move(request));
                    }
                    if (requests.empty()) {
                        continue;
                    }
                    std::vector<gateway::BatchOutcome> outcomes =
                        gw.run_batch(requests, config.max_in_flight);
                    for (size_t i = 0; i < outcomes.size(); ++i) {
                        RunRecord record;
                        record.sample_id = missing[i]->id;
                        record.strategy = setting;
                        record.model = model;
                        record.trial = trial;
                        record.response_ref = gateway::Gateway::cache_key(requests[i]);
                        if (outcomes[i].ok()) {
                            const gateway::CompletionResult& result = *outcomes[i].result;
                            verdict::ParsedResponse parsed = verdict::parse_response(
                                gateway::strip_reasoning(result.text), tmpl.tag_mode);
                            record.verdict = parsed.verdict;
                            record.rule_used = parsed.rule_used;
                            record.latency_ms = result.latency_ms;
                            record.prompt_tokens = result.prompt_tokens;
                            record.completion_tokens = result.completion_tokens;
                        } else {
                            record.error = outcomes[i].error;
                            record.verdict = verdict::VerdictValue::abstain;
                            record.rule_used = verdict::ParseRule::none;
                            ++item_errors;
                        }
                        journal << record.to_json().dump() << "\n";
                        done.emplace(record.key(), std::move(record));
                    }
                    journal.flush();
                }
            }
        }
    }
    journal.close();

    std::vector<RunRecord> records;
    records.reserve(done.size());
    for (auto& [key, record] : done) {
        records.push_back(record);
    }
    RunOutput output = aggregate_records(config, slices, std::move(records));
    output.item_errors = item_errors;
    save_records(output.records, records_path);  // canonical rewrite
    return output;
}

RunOutput aggregate_records(const ExperimentConfig& config,
                            const std::vector<corpus::CorpusSlice>& slices,
                            std::vector<RunRecord> records) {
    sort_canonical(records);

    std::map<std::string, std::pair<const corpus::CodeSample*, const corpus::CorpusSlice*>> index;
    for (const corpus::CorpusSlice& slice : slices) {
        for (const corpus::CodeSample& sample : slice.samples) {
            index[sample.id] = {&sample, &slice};
        }
    }

    // (strategy, model, cwe, trial) -> verdict per sample
    struct TrialCell {
        metrics::ConfusionCounts counts;
        std::map<std::string, verdict::VerdictValue> verdicts;
    };
    std::map<AggregateKey, std::map<int, TrialCell>> cells;
    for (const RunRecord& record : records) {
        auto it = index.find(record.sample_id);
        if (it == index.end()) {
            throw ValidationError("record references sample '" + record.sample_id +
                                  "' which is not in the configured corpus");
        }
        const corpus::CodeSample* sample = it->second.first;
        const corpus::CorpusSlice* slice = it->second.second;
        AggregateKey key{record.strategy, record.model, slice->cwe};
        TrialCell& cell = cells[key][record.trial];
        cell.counts.add(verdict::score(record.verdict, sample->label));
        cell.verdicts[record.sample_id] = record.verdict;
    }

    RunOutput output;
    output.records = std::move(records);
    output.config_hash = config.config_hash();
    for (auto& [key, trials] : cells) {
        const corpus::CorpusSlice* slice = slice_for(slices, key.cwe);
        std::vector<metrics::MetricSet> per_trial;
        for (auto& [trial, cell] : trials) {
            metrics::MetricSet set = metrics::compute_metrics(cell.counts);
            if (slice != nullptr && !slice->pairs.empty()) {
                set.pairwise_acc = metrics::pairwise_accuracy(slice->pairs, cell.verdicts);
            }
            per_trial.push_back(std::move(set));
        }
        output.aggregates.emplace(key, metrics::average_trials(per_trial));
    }
    for (const RunRecord& record : output.records) {
        if (!record.error.empty()) {
            ++output.item_errors;
        }
    }
    return output;
}

// --- baselines & matrices ---

std::vector<DeltaRow> compare_to_baselines(
    const std::map<AggregateKey, metrics::TrialAggregate>& aggregates,
    const std::map<std::pair<std::string, int>, metrics::MetricSet>& basic_by_model_cwe,
    const std::map<int, std::pair<std::string, metrics::MetricSet>>& sa_by_cwe) {
    std::vector<DeltaRow> rows;
    for (const auto& [key, aggregate] : aggregates) {
        DeltaRow row;
        row.key = key;
        row.subject = aggregate.mean;
        auto basic = basic_by_model_cwe.find({key.model, key.cwe.number});
        if (basic != basic_by_model_cwe.end() &&
            key.strategy.category != strategy::Category::basic) {
            row.vs_prompt_baseline = metrics::delta(row.subject, basic->second);
        }
        auto sa = sa_by_cwe.find(key.cwe.number);
        if (sa != sa_by_cwe.end()) {
            row.sa_tool = sa->second.first;
            row.vs_sa_baseline = metrics::delta(row.subject, sa->second.second);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Top2Matrix top2_frequency(const std::map<AggregateKey, metrics::TrialAggregate>& aggregates) {
    Top2Matrix matrix;
    std::set<int> strategy_ranks;
    std::set<std::pair<std::string, int>> columns;
    for (const auto& [key, aggregate] : aggregates) {
        strategy_ranks.insert(key.strategy.rank());
        columns.insert({key.model, key.cwe.number});
    }
    for (int rank : strategy_ranks) {
        matrix.rows.push_back(strategy::StrategySetting::all()[static_cast<size_t>(rank)]);
    }
    matrix.columns.assign(columns.begin(), columns.end());
    matrix.cells.assign(matrix.rows.size(), std::vector<int>(matrix.columns.size(), 0));

    for (size_t col = 0; col < matrix.columns.size(); ++col) {
        struct Entry {
            size_t row;
            double pairwise;
            double f1;
            int rank;
        };
        std::vector<Entry> entries;
        for (size_t row = 0; row < matrix.rows.size(); ++row) {
            AggregateKey key{matrix.rows[row], matrix.columns[col].first,
                             CweId::from_number(matrix.columns[col].second)};
            auto it = aggregates.find(key);
            if (it == aggregates.end()) {
                continue;
            }
            const metrics::MetricSet& mean = it->second.mean;
            entries.push_back(Entry{row, mean.pairwise_acc.value_or(-1.0),
                                    mean.f1.value_or(-1.0), matrix.rows[row].rank()});
        }
        if (entries.size() < 2) {
            throw ValidationError("top-2 ranking needs at least 2 strategies per column; " +
                                  matrix.columns[col].first + "/CWE-" +
                                  std::to_string(matrix.columns[col].second) + " has " +
                                  std::to_string(entries.size()));
        }
        std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
            if (a.pairwise != b.pairwise) return a.pairwise > b.pairwise;
            if (a.f1 != b.f1) return a.f1 > b.f1;
            return a.rank < b.rank;
        });
        matrix.cells[entries[0].row][col] += 1;
        matrix.cells[entries[1].row][col] += 1;
    }
    return matrix;
}

int Top2Matrix::column_sum(size_t column) const {
    int sum = 0;
    for (const std::vector<int>& row : cells) {
        sum += row[column];
    }
    return sum;
}

std::vector<metrics::CostRecord> cost_report(const ExperimentConfig& config,
                                             const std::vector<corpus::CorpusSlice>& slices) {
    std::vector<metrics::CostRecord> records;
    strategy::TemplateStore store(config.store_dir);
    for (const corpus::CorpusSlice& slice : slices) {
        for (const strategy::StrategySetting& setting : config.strategies) {
            strategy::PromptTemplate tmpl;
            if (store.has(slice.cwe, setting)) {
                tmpl = store.load(slice.cwe, setting);
            } else if (!setting_needs_gateway(setting)) {
                switch (setting.category) {
                    case strategy::Category::basic:
                        tmpl = strategy::assemble_template(setting, slice.cwe, std::nullopt, {});
                        break;
                    case strategy::Category::nl:
                        tmpl = strategy::assemble_template(
                            setting, slice.cwe,
                            setting.setting == strategy::Setting::s0
                                ? strategy::s0_instruction(slice.cwe)
                                : strategy::mitre_instruction(slice.cwe),
                            {});
                        break;
                    case strategy::Category::nl_cot:
                        tmpl = strategy::assemble_template(
                            setting, slice.cwe, strategy::mitre_instruction(slice.cwe),
                            {strategy::mitre_demonstrative_exemplar(slice.cwe)});
                        break;
                }
            } else {
                throw EnvironmentError("missing template for " + setting.to_string() + " / " +
                                       slice.cwe.to_string() + "; forge it first");
            }
            double total = 0.0;
            for (const corpus::CodeSample& sample : slice.samples) {
                total += static_cast<double>(strategy::render(tmpl, sample).token_estimate);
            }
            metrics::CostRecord record;
            record.strategy = setting;
            record.cwe = slice.cwe;
            record.scope = slice.samples.size() == 23 ? metrics::SampleScope::subset_23
                                                      : metrics::SampleScope::full;
            record.mean_tokens = slice.samples.empty()
                                     ? 0.0
                                     : total / static_cast<double>(slice.samples.size());
            records.push_back(std::move(record));
        }
    }
    return records;
}

// --- report emission ---

namespace {

std::string percent1(std::optional<double> value) {
    if (!value.has_value()) {
        return "";
    }
    return format_fixed(*value * 100.0, 1);
}

std::string fixed_or_blank(std::optional<double> value, int decimals) {
    return value.has_value() ? format_fixed(*value, decimals) : "";
}

std::string delta1(std::optional<double> points, const std::string& metric) {
    if (!points.has_value()) {
        return "";
    }
    std::string text = format_fixed(*points, 1);
    if (*points > 0) {
        text = "+" + text;
    }
    if (metrics::delta_is_improvement(metric, *points)) {
        text += " (improvement)";
    }
    return text;
}

struct SaTableRow {
    std::string tool;
    CweId cwe;
    metrics::ConfusionCounts counts;
    metrics::MetricSet metrics_set;
    std::optional<double> pairwise;
    bool excluded = false;
};

struct SaData {
    std::vector<SaTableRow> rows;
    // per cwe: strongest tool baseline (highest pairwise, then acc, then name)
    std::map<int, std::pair<std::string, metrics::MetricSet>> baseline_by_cwe;
};

SaData evaluate_sa(const ExperimentConfig& config,
                   const std::vector<corpus::CorpusSlice>& slices) {
    SaData data;
    if (!config.sa_findings.has_value()) {
        return data;
    }
    sa::IngestResult ingested = sa::ingest_findings_jsonl(*config.sa_findings);
    std::map<std::string, std::vector<sa::ToolRun>> by_tool;
    for (sa::ToolRun& run : ingested.runs) {
        by_tool[run.tool].push_back(std::move(run));
    }
    for (const corpus::CorpusSlice& slice : slices) {
        for (const auto& [tool, runs] : by_tool) {
            sa::ToolEvaluation evaluation = sa::tool_confusion(slice, runs, slice.cwe);
            SaTableRow row;
            row.tool = tool;
            row.cwe = slice.cwe;
            row.counts = evaluation.counts;
            row.metrics_set = metrics::compute_metrics(evaluation.counts);
            row.metrics_set.pairwise_acc = evaluation.pairwise_acc;
            row.pairwise = evaluation.pairwise_acc;
            row.excluded = evaluation.excluded;
            data.rows.push_back(std::move(row));
        }
    }
    for (const SaTableRow& row : data.rows) {
        if (row.excluded) {
            continue;
        }
        auto it = data.baseline_by_cwe.find(row.cwe.number);
        if (it == data.baseline_by_cwe.end()) {
            data.baseline_by_cwe[row.cwe.number] = {row.tool, row.metrics_set};
            continue;
        }
        const metrics::MetricSet& current = it->second.second;
        double row_pair = row.metrics_set.pairwise_acc.value_or(-1.0);
        double cur_pair = current.pairwise_acc.value_or(-1.0);
        double row_acc = row.metrics_set.acc.value_or(-1.0);
        double cur_acc = current.acc.value_or(-1.0);
        if (row_pair > cur_pair || (row_pair == cur_pair && row_acc > cur_acc) ||
            (row_pair == cur_pair && row_acc == cur_acc && row.tool < it->second.first)) {
            it->second = {row.tool, row.metrics_set};
        }
    }
    return data;
}

}  // namespace

void emit_reports(const ExperimentConfig& config, const RunOutput& output) {
    fs::create_directories(config.output_dir);
    std::vector<corpus::CorpusSlice> slices = load_config_slices(config);

    save_records(output.records, config.output_dir / "records.jsonl");

    // metrics.csv
    {
        std::ostringstream csv;
        csv << "strategy,model,cwe,trials,acc,precision,recall,f1,fpr,fnr,pairwise_acc,"
               "abstain_rate\n";
        for (const auto& [key, aggregate] : output.aggregates) {
            csv << key.strategy.to_string() << ',' << key.model << ',' << key.cwe.to_string()
                << ',' << aggregate.trial_count;
            for (const std::string& name : metrics::metric_names()) {
                csv << ',' << fixed_or_blank(metrics::metric_by_name(aggregate.mean, name), 6);
            }
            csv << "\n";
        }
        write_file_atomic(config.output_dir / "metrics.csv", csv.str());
    }

    SaData sa_data = evaluate_sa(config, slices);

    std::map<std::pair<std::string, int>, metrics::MetricSet> basic_by_model_cwe;
    for (const auto& [key, aggregate] : output.aggregates) {
        if (key.strategy.category == strategy::Category::basic) {
            basic_by_model_cwe[{key.model, key.cwe.number}] = aggregate.mean;
        }
    }
    std::vector<DeltaRow> delta_rows =
        compare_to_baselines(output.aggregates, basic_by_model_cwe, sa_data.baseline_by_cwe);

    static const std::vector<std::string> kDeltaMetrics = {"pairwise_acc", "acc", "f1", "fnr",
                                                           "fpr"};
    // deltas.csv
    {
        std::ostringstream csv;
        csv << "strategy,model,cwe,metric,subject_pct,delta_vs_prompt,improved_vs_prompt,"
               "sa_tool,delta_vs_sa,improved_vs_sa\n";
        for (const DeltaRow& row : delta_rows) {
            for (const std::string& metric : kDeltaMetrics) {
                auto subject = metrics::metric_by_name(row.subject, metric);
                if (!subject.has_value()) {
                    continue;
                }
                std::optional<double> vs_prompt;
                if (row.vs_prompt_baseline.has_value()) {
                    vs_prompt = metrics::delta_by_name(*row.vs_prompt_baseline, metric);
                }
                std::optional<double> vs_sa;
                if (row.vs_sa_baseline.has_value()) {
                    vs_sa = metrics::delta_by_name(*row.vs_sa_baseline, metric);
                }
                csv << row.key.strategy.to_string() << ',' << row.key.model << ','
                    << row.key.cwe.to_string() << ',' << metric << ','
                    << percent1(subject) << ','
                    << (vs_prompt ? format_fixed(*vs_prompt, 1) : "") << ','
                    << (vs_prompt ? (metrics::delta_is_improvement(metric, *vs_prompt) ? "yes"
                                                                                       : "no")
                                  : "")
                    << ',' << row.sa_tool << ',' << (vs_sa ? format_fixed(*vs_sa, 1) : "") << ','
                    << (vs_sa ? (metrics::delta_is_improvement(metric, *vs_sa) ? "yes" : "no")
                              : "")
                    << "\n";
            }
        }
        write_file_atomic(config.output_dir / "deltas.csv", csv.str());
    }

    // top2.csv
    std::optional<Top2Matrix> top2;
    std::string top2_note;
    try {
        top2 = top2_frequency(output.aggregates);
    } catch (const ValidationError& e) {
        top2_note = e.what();
    }
    {
        std::ostringstream csv;
        csv << "strategy";
        if (top2.has_value()) {
            for (const auto& [model, cwe] : top2->columns) {
                csv << ',' << model << "|CWE-" << cwe;
            }
            csv << "\n";
            for (size_t row = 0; row < top2->rows.size(); ++row) {
                csv << top2->rows[row].to_string();
                for (size_t col = 0; col < top2->columns.size(); ++col) {
                    csv << ',' << top2->cells[row][col];
                }
                csv << "\n";
            }
        } else {
            csv << "\n";
        }
        write_file_atomic(config.output_dir / "top2.csv", csv.str());
    }

    // cost.csv
    std::vector<metrics::CostRecord> costs;
    std::string cost_note;
    try {
        costs = cost_report(config, slices);
    } catch (const Error& e) {
        cost_note = e.what();
    }
    {
        std::ostringstream csv;
        csv << "cwe,strategy,scope,mean_tokens,tokenizer\n";
        for (const metrics::CostRecord& record : costs) {
            csv << record.cwe.to_string() << ',' << record.strategy.to_string() << ','
                << metrics::to_string(record.scope) << ',' << format_fixed(record.mean_tokens, 1)
                << ',' << record.tokenizer_id << "\n";
        }
        write_file_atomic(config.output_dir / "cost.csv", csv.str());
    }

    // report.md
    std::ostringstream md;
    md << "# Evaluation report\n\n";
    md << "- config hash: `" << output.config_hash << "`\n";
    md << "- corpus: `" << config.corpus_path.string() << "`\n";
    md << "- gateway mode: " << to_string(config.gateway_mode) << "\n";
    md << "- trials: " << config.trials << " (seed " << config.seed << ")\n";
    if (output.item_errors > 0) {
        md << "- per-item failures: " << output.item_errors << "\n";
    }
    md << "\n## Strategy metrics\n\nPercent, one decimal, averaged over trials.\n\n";
    md << "| Strategy | Model | CWE | Pairwise Acc | Acc | F1 | FNR | FPR | Abstain |\n";
    md << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& [key, aggregate] : output.aggregates) {
        const metrics::MetricSet& mean = aggregate.mean;
        md << "| " << key.strategy.to_string() << " | " << key.model << " | "
           << key.cwe.to_string() << " | " << percent1(mean.pairwise_acc) << " | "
           << percent1(mean.acc) << " | " << percent1(mean.f1) << " | " << percent1(mean.fnr)
           << " | " << percent1(mean.fpr) << " | " << percent1(mean.abstain_rate) << " |\n";
    }

    md << "\n## Deltas vs baselines\n\n";
    md << "Signed percentage points, subject minus baseline; for FNR/FPR a negative delta is "
          "the improvement. Deltas are computed from the stored metric values only; reference "
          "rows that fail internal-consistency checks are listed under Anomalies and excluded "
          "from comparison rather than matched.\n\n";
    md << "| Strategy | Model | CWE | Metric | Subject | Delta vs basic prompt | SA tool | "
          "Delta vs SA |\n";
    md << "|---|---|---|---|---|---|---|---|\n";
    for (const DeltaRow& row : delta_rows) {
        for (const std::string& metric : kDeltaMetrics) {
            auto subject = metrics::metric_by_name(row.subject, metric);
            if (!subject.has_value()) {
                continue;
            }
            std::optional<double> vs_prompt;
            std::optional<double> vs_sa;
            if (row.vs_prompt_baseline.has_value()) {
                vs_prompt = metrics::delta_by_name(*row.vs_prompt_baseline, metric);
            }
            if (row.vs_sa_baseline.has_value()) {
                vs_sa = metrics::delta_by_name(*row.vs_sa_baseline, metric);
            }
            if (!vs_prompt.has_value() && !vs_sa.has_value()) {
                continue;
            }
            md << "| " << row.key.strategy.to_string() << " | " << row.key.model << " | "
               << row.key.cwe.to_string() << " | " << metric << " | " << percent1(subject)
               << " | " << delta1(vs_prompt, metric) << " | " << row.sa_tool << " | "
               << delta1(vs_sa, metric) << " |\n";
        }
    }

    md << "\n## Top-2 frequency\n\n";
    if (top2.has_value()) {
        md << "Count of appearances in the top two strategies per (model, CWE) column, ranked "
              "by pairwise accuracy (ties: F1, then strategy order). Every column sums to 2.\n\n";
        md << "| Strategy |";
        for (const auto& [model, cwe] : top2->columns) {
            md << ' ' << model << " / CWE-" << cwe << " |";
        }
        md << "\n|---|";
        for (size_t col = 0; col < top2->columns.size(); ++col) {
            md << "---|";
        }
        md << "\n";
        for (size_t row = 0; row < top2->rows.size(); ++row) {
            md << "| " << top2->rows[row].to_string() << " |";
            for (size_t col = 0; col < top2->columns.size(); ++col) {
                md << ' ' << top2->cells[row][col] << " |";
            }
            md << "\n";
        }
    } else {
        md << "Not computed: " << top2_note << "\n";
    }

    if (!sa_data.rows.empty()) {
        md << "\n## Static analysis baseline\n\n";
        md << "| Tool | CWE | Acc. | Prec. | Rec. | F1 | TP | FP | TN | FN | FPR | FNR | "
              "Pair. Acc. | Total |\n";
        md << "|---|---|---|---|---|---|---|---|---|---|---|---|---|---|\n";
        for (const SaTableRow& row : sa_data.rows) {
            if (row.excluded) {
                md << "| " << row.tool << " | " << row.cwe.to_string()
                   << " | excluded (no completed runs) |||||||||||||\n";
                continue;
            }
            const metrics::MetricSet& m = row.metrics_set;
            md << "| " << row.tool << " | " << row.cwe.to_string() << " | "
               << fixed_or_blank(m.acc, 2) << " | " << fixed_or_blank(m.precision, 2) << " | "
               << fixed_or_blank(m.recall, 3) << " | " << fixed_or_blank(m.f1, 2) << " | "
               << row.counts.tp << " | " << row.counts.fp << " | " << row.counts.tn << " | "
               << row.counts.fn << " | " << fixed_or_blank(m.fpr, 3) << " | "
               << fixed_or_blank(m.fnr, 3) << " | " << fixed_or_blank(row.pairwise, 3) << " | "
               << row.counts.total() << " |\n";
        }
    }

    md << "\n## Cost\n\n";
    md << "Mean rendered-prompt token counts per strategy under the reference tokenizer "
          "(deterministic class-based splitter). These counts are not comparable to provider "
          "BPE tokenizers, so externally published token figures are not reproduced here; only "
          "the relative ordering across strategies is meaningful.\n\n";
    if (!costs.empty()) {
        md << "| CWE | Strategy | Scope | Mean tokens |\n|---|---|---|---|\n";
        for (const metrics::CostRecord& record : costs) {
            md << "| " << record.cwe.to_string() << " | " << record.strategy.to_string() << " | "
               << metrics::to_string(record.scope) << " | " << format_fixed(record.mean_tokens, 1)
               << " |\n";
        }
    } else if (!cost_note.empty()) {
        md << "Not computed: " << cost_note << "\n";
    }

    md << "\n## Anomalies\n\n";
    std::vector<std::string> anomalies;
    for (const auto& [key, aggregate] : output.aggregates) {
        const corpus::CorpusSlice* slice = slice_for(slices, key.cwe);
        bool balanced = slice != nullptr && slice->manifest_counts.vulnerable ==
                                                slice->manifest_counts.non_vulnerable;
        for (const std::string& note : metrics::consistency_notes(aggregate.mean, balanced)) {
            anomalies.push_back(key.label() + ": " + note);
        }
    }
    for (const SaTableRow& row : sa_data.rows) {
        if (row.excluded) {
            anomalies.push_back(row.tool + "/" + row.cwe.to_string() +
                                ": excluded (no completed runs for the slice)");
        }
    }
    if (anomalies.empty()) {
        md << "None detected.\n";
    } else {
        for (const std::string& anomaly : anomalies) {
            md << "- " << anomaly << "\n";
        }
    }

    write_file_atomic(config.output_dir / "report.md", md.str());
}

}  // namespace vulnbench::runner
