#include <cstdlib>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "vulnbench/common.hpp"
#include "vulnbench/corpus.hpp"
#include "vulnbench/gateway.hpp"
#include "vulnbench/runner.hpp"
#include "vulnbench/sa_bridge.hpp"
#include "vulnbench/strategy.hpp"

namespace {

using namespace vulnbench;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitPartial = 2;
constexpr int kExitEnvironment = 3;

struct GlobalOptions {
    std::string config_path;
    bool offline = false;
    std::optional<std::int64_t> seed;
};

runner::ExperimentConfig load_config(const GlobalOptions& options) {
    if (options.config_path.empty()) {
        throw ValidationError("this command needs --config <file.yaml>");
    }
    runner::ExperimentConfig config =
        runner::ExperimentConfig::from_yaml_file(options.config_path);
    if (options.seed.has_value()) {
        config.seed = *options.seed;
    }
    if (options.offline && config.gateway_mode == runner::GatewayMode::live) {
        config.gateway_mode = runner::GatewayMode::cache_only;
    }
    return config;
}

gateway::Gateway build_gateway(const runner::ExperimentConfig& config) {
    std::shared_ptr<gateway::Provider> provider;
    switch (config.gateway_mode) {
        case runner::GatewayMode::mock: {
            auto missing = config.mock_synthesize
                               ? gateway::MockProvider::MissingPolicy::synthesize
                               : gateway::MockProvider::MissingPolicy::error;
            if (config.transcript_path.has_value()) {
                provider = std::make_shared<gateway::MockProvider>(
                    gateway::MockProvider::from_transcript(*config.transcript_path, missing));
            } else {
                provider = std::make_shared<gateway::MockProvider>(missing);
            }
            break;
        }
        case runner::GatewayMode::cache_only:
            provider = std::make_shared<gateway::NullProvider>();
            break;
        case runner::GatewayMode::live: {
            const char* base = std::getenv("VULNBENCH_BASE_URL");
            provider = std::make_shared<gateway::HttpProvider>(
                "openai", base != nullptr && *base != '\0' ? base : "https://api.openai.com");
            break;
        }
    }
    return gateway::Gateway(provider, config.cache_dir);
}

int cmd_forge(const GlobalOptions& options) {
    runner::ExperimentConfig config = load_config(options);
    config.validate();
    gateway::Gateway gw = build_gateway(config);
    auto slices = runner::load_config_slices(config);
    for (const strategy::StrategySetting& setting : config.strategies) {
        for (const CweId& cwe : config.cwes) {
            strategy::PromptTemplate tmpl =
                runner::acquire_template(config, setting, cwe, gw, slices);
            auto issues = strategy::lint(tmpl);
            if (!issues.empty()) {
                throw ValidationError("forged template fails lint: " + issues.front());
            }
            std::cout << "forged " << setting.to_string() << " for " << cwe.to_string() << "\n";
        }
    }
    return kExitOk;
}

int cmd_run(const GlobalOptions& options) {
    runner::ExperimentConfig config = load_config(options);
    gateway::Gateway gw = build_gateway(config);
    runner::RunOutput output = runner::run_experiment(config, gw);
    runner::emit_reports(config, output);
    std::cout << "records: " << output.records.size()
              << ", aggregates: " << output.aggregates.size()
              << ", item errors: " << output.item_errors << "\n";
    std::cout << "reports in " << config.output_dir.string() << "\n";
    return output.item_errors > 0 ? kExitPartial : kExitOk;
}

int cmd_score_or_report(const GlobalOptions& options) {
    runner::ExperimentConfig config = load_config(options);
    config.validate();
    auto slices = runner::load_config_slices(config);
    auto records = runner::load_records(config.output_dir / "records.jsonl");
    if (records.empty()) {
        throw EnvironmentError("no records found under " + config.output_dir.string());
    }
    runner::RunOutput output = runner::aggregate_records(config, slices, std::move(records));
    runner::emit_reports(config, output);
    std::cout << "reports in " << config.output_dir.string() << "\n";
    return output.item_errors > 0 ? kExitPartial : kExitOk;
}

int cmd_sa_import(const GlobalOptions& options, const std::vector<std::string>& sarif_paths,
                  const std::string& findings_path, const std::string& rulemap_path) {
    runner::ExperimentConfig config = load_config(options);
    config.validate();
    auto slices = runner::load_config_slices(config);

    sa::RuleCweMap rule_map;
    bool have_map = !rulemap_path.empty();
    if (have_map) {
        rule_map = sa::RuleCweMap::load(rulemap_path);
    }

    std::vector<sa::ToolRun> runs;
    std::vector<std::string> warnings;
    for (const std::string& path : sarif_paths) {
        sa::IngestResult result = sa::ingest_sarif(path, have_map ? &rule_map : nullptr);
        for (auto& run : result.runs) runs.push_back(std::move(run));
        for (auto& warning : result.warnings) warnings.push_back(std::move(warning));
    }
    if (!findings_path.empty()) {
        sa::IngestResult result = sa::ingest_findings_jsonl(findings_path);
        for (auto& run : result.runs) runs.push_back(std::move(run));
        for (auto& warning : result.warnings) warnings.push_back(std::move(warning));
    }
    if (runs.empty()) {
        throw ValidationError("sa import needs --sarif and/or --findings input");
    }
    for (const std::string& warning : warnings) {
        std::cerr << "warning: " << warning << "\n";
    }

    std::map<std::string, std::vector<sa::ToolRun>> by_tool;
    for (sa::ToolRun& run : runs) {
        by_tool[run.tool].push_back(std::move(run));
    }

    std::filesystem::create_directories(config.output_dir);
    std::ostringstream csv;
    std::ostringstream normalized;
    csv << "tool,cwe,acc,precision,recall,f1,tp,fp,tn,fn,fpr,fnr,pairwise_acc,total,excluded\n";
    for (const auto& [tool, tool_runs] : by_tool) {
        for (const sa::ToolRun& run : tool_runs) {
            for (const sa::Finding& finding : run.findings) {
                nlohmann::json record = {{"tool", finding.tool},
                                         {"sample_id", run.sample_id},
                                         {"rule_id", finding.rule_id},
                                         {"path", finding.path},
                                         {"line_start", finding.line_start},
                                         {"line_end", finding.line_end},
                                         {"severity", finding.severity},
                                         {"message", finding.message}};
                nlohmann::json cwes = nlohmann::json::array();
                for (const CweId& cwe : finding.cwe_ids) {
                    cwes.push_back(cwe.to_string());
                }
                record["cwe"] = cwes;
                normalized << record.dump() << "\n";
            }
        }
        for (const corpus::CorpusSlice& slice : slices) {
            sa::ToolEvaluation evaluation = sa::tool_confusion(slice, tool_runs, slice.cwe);
            metrics::MetricSet m = metrics::compute_metrics(evaluation.counts);
            auto cell = [](std::optional<double> v) {
                return v.has_value() ? format_fixed(*v, 6) : std::string();
            };
            csv << tool << ',' << slice.cwe.to_string() << ',' << cell(m.acc) << ','
                << cell(m.precision) << ',' << cell(m.recall) << ',' << cell(m.f1) << ','
                << evaluation.counts.tp << ',' << evaluation.counts.fp << ','
                << evaluation.counts.tn << ',' << evaluation.counts.fn << ',' << cell(m.fpr)
                << ',' << cell(m.fnr) << ',' << cell(evaluation.pairwise_acc) << ','
                << evaluation.counts.total() << ',' << (evaluation.excluded ? "yes" : "no")
                << "\n";
        }
    }
    write_file_atomic(config.output_dir / "sa_metrics.csv", csv.str());
    write_file_atomic(config.output_dir / "sa_runs.jsonl", normalized.str());
    std::cout << "sa_metrics.csv and sa_runs.jsonl in " << config.output_dir.string() << "\n";
    return kExitOk;
}

int cmd_cost(const GlobalOptions& options) {
    runner::ExperimentConfig config = load_config(options);
    config.validate();
    auto slices = runner::load_config_slices(config);
    auto costs = runner::cost_report(config, slices);
    std::filesystem::create_directories(config.output_dir);
    std::ostringstream csv;
    csv << "cwe,strategy,scope,mean_tokens,tokenizer\n";
    for (const metrics::CostRecord& record : costs) {
        csv << record.cwe.to_string() << ',' << record.strategy.to_string() << ','
            << metrics::to_string(record.scope) << ',' << format_fixed(record.mean_tokens, 1)
            << ',' << record.tokenizer_id << "\n";
    }
    write_file_atomic(config.output_dir / "cost.csv", csv.str());
    std::cout << "cost.csv in " << config.output_dir.string() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CWE-specific prompting strategies vs static-analyzer baselines"};
    app.require_subcommand(1);

    GlobalOptions options;
    app.add_option("--config", options.config_path, "experiment config (YAML)");
    app.add_flag("--offline", options.offline, "never touch the network (live -> cache_only)");
    std::int64_t seed_value = 0;
    CLI::Option* seed_opt =
        app.add_option("--seed", seed_value, "override the config seed");

    CLI::App* forge = app.add_subcommand("forge", "run Phases 1-4 and fill the template store");
    CLI::App* run = app.add_subcommand("run", "evaluate strategies x models x samples");
    CLI::App* score = app.add_subcommand("score", "recompute metrics from persisted records");
    CLI::App* compare =
        app.add_subcommand("compare", "recompute metrics and baseline deltas from records");
    CLI::App* sa_cmd = app.add_subcommand("sa", "static-analyzer utilities");
    sa_cmd->require_subcommand(1);
    CLI::App* sa_import = sa_cmd->add_subcommand("import", "ingest SARIF / findings JSONL");
    std::vector<std::string> sarif_paths;
    std::string findings_path;
    std::string rulemap_path;
    sa_import->add_option("--sarif", sarif_paths, "SARIF 2.1.0 files");
    sa_import->add_option("--findings", findings_path, "generic findings JSONL");
    sa_import->add_option("--rulemap", rulemap_path, "rule-to-CWE map (TSV)");
    CLI::App* cost = app.add_subcommand("cost", "token-cost report for rendered prompts");
    CLI::App* report = app.add_subcommand("report", "re-emit all report files from records");

    CLI11_PARSE(app, argc, argv);
    if (!seed_opt->empty()) {
        options.seed = seed_value;
    }

    try {
        if (forge->parsed()) return cmd_forge(options);
        if (run->parsed()) return cmd_run(options);
        if (score->parsed() || compare->parsed() || report->parsed()) {
            return cmd_score_or_report(options);
        }
        if (sa_import->parsed()) {
            return cmd_sa_import(options, sarif_paths, findings_path, rulemap_path);
        }
        if (cost->parsed()) return cmd_cost(options);
        throw ValidationError("no command given");
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const EnvironmentError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEnvironment;
    } catch (const GatewayError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEnvironment;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEnvironment;
    }
}
