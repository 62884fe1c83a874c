#include "vulnbench/strategy.hpp"

#include <algorithm>
#include <ctime>
#include <mutex>
#include <sstream>

#include "vulnbench/common.hpp"
#include "vulnbench/metrics.hpp"

namespace vulnbench::strategy {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(InstructionSource source) {
    switch (source) {
        case InstructionSource::model_intrinsic: return "model_intrinsic";
        case InstructionSource::model_fewshot_sven: return "model_fewshot_sven";
        case InstructionSource::mitre_verbatim: return "mitre_verbatim";
        case InstructionSource::model_from_mitre: return "model_from_mitre";
    }
    return "mitre_verbatim";
}

std::string to_string(InstructionFormat format) {
    switch (format) {
        case InstructionFormat::checks: return "checks";
        case InstructionFormat::freeform: return "freeform";
        case InstructionFormat::prose: return "prose";
    }
    return "prose";
}

InstructionSource parse_instruction_source(std::string_view text) {
    std::string t = to_lower(trim(text));
    if (t == "model_intrinsic") return InstructionSource::model_intrinsic;
    if (t == "model_fewshot_sven") return InstructionSource::model_fewshot_sven;
    if (t == "mitre_verbatim") return InstructionSource::mitre_verbatim;
    if (t == "model_from_mitre") return InstructionSource::model_from_mitre;
    throw ValidationError("unknown instruction source: '" + std::string(text) + "'");
}

InstructionFormat parse_instruction_format(std::string_view text) {
    std::string t = to_lower(trim(text));
    if (t == "checks") return InstructionFormat::checks;
    if (t == "freeform") return InstructionFormat::freeform;
    if (t == "prose") return InstructionFormat::prose;
    throw ValidationError("unknown instruction format: '" + std::string(text) + "'");
}

void validate_instruction(const InstructionDoc& doc) {
    if (trim(doc.text).empty()) {
        throw ValidationError("instruction text is empty");
    }
    if (doc.format == InstructionFormat::checks &&
        doc.text.find("Test 1 -") == std::string::npos) {
        throw ValidationError("checks-format instructions must enumerate 'Test 1 -', 'Test 2 -', ...");
    }
}

std::string to_string(Polarity polarity) {
    return polarity == Polarity::vulnerable ? "vulnerable" : "fixed";
}

std::string to_string(ExemplarOrigin origin) {
    return origin == ExemplarOrigin::juliet_pair ? "juliet_pair" : "mitre_demonstrative";
}

namespace {

std::string code_block(const char* open, const char* close, const std::string& body) {
    std::string code = body;
    while (!code.empty() && code.back() == '\n') {
        code.pop_back();
    }
    return std::string(open) + "\n" + code + "\n" + close;
}

std::string recurring_question(InstructionFormat format) {
    std::string basis = format == InstructionFormat::checks ? "tests" : "instructions";
    return "Q: Check for any vulnerable sections of code in the new example, then determine "
           "whether the new example is vulnerable or non-vulnerable based on the " +
           basis + ".";
}

std::string instruction_header(InstructionFormat format) {
    return format == InstructionFormat::checks ? "Use the following tests:"
                                               : "Use the following instructions:";
}

std::string s0_question(const CweId& cwe) {
    return "Q: Is the new example vulnerable or non-vulnerable to " + cwe.display() + "?";
}

std::string join_parts(const std::vector<std::string>& parts) {
    std::string out;
    for (const std::string& part : parts) {
        if (part.empty()) {
            continue;
        }
        if (!out.empty()) {
            out += "\n\n";
        }
        out += part;
    }
    return out;
}

size_t count_occurrences(const std::string& text, const std::string& needle) {
    size_t count = 0;
    size_t pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

std::string now_iso8601() {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

std::string PromptTemplate::text() const {
    std::vector<std::string> parts;
    parts.push_back(preamble);

    std::string question = final_question;
    if (verbosity_clause.has_value()) {
        question += " " + *verbosity_clause;
    }
    if (tag_mode) {
        question += std::string(" ") + kTagClause;
    }

    std::string slot_block = std::string(kNewExampleStart) + "\n" + kNewExampleSlot + "\n" +
                             kNewExampleEnd;

    if (setting.category == Category::basic) {
        parts.push_back(slot_block);
        parts.push_back(question);
        parts.push_back(kYourAnswer);
        return join_parts(parts);
    }

    if (setting.setting != Setting::s0 || setting.category == Category::nl_cot) {
        if (instruction.has_value()) {
            parts.push_back(instruction_header(instruction->format));
            parts.push_back(instruction->text);
        }
    }
    for (const ExemplarBlock& block : exemplars) {
        parts.push_back(block.question);
        parts.push_back(code_block(kExampleStart, kExampleEnd, block.exemplar.code));
        parts.push_back(kYourAnswer);
        parts.push_back(block.exemplar.reasoning);
    }
    parts.push_back(question);
    parts.push_back(slot_block);
    parts.push_back(kYourAnswer);
    return join_parts(parts);
}

MitreEntry load_mitre_entry(const CweId& cwe) {
    fs::path path = data_dir() / "mitre" / ("cwe-" + std::to_string(cwe.number) + ".json");
    auto content = read_file_if_exists(path);
    if (!content.has_value()) {
        throw EnvironmentError("no bundled MITRE entry for " + cwe.to_string() + " at " +
                               path.string());
    }
    json parsed = json::parse(*content);
    MitreEntry entry;
    entry.cwe = CweId::parse(parsed.at("cwe").get<std::string>());
    entry.name = parsed.at("name").get<std::string>();
    entry.description = parsed.at("description").get<std::string>();
    entry.demonstrative_example = parsed.value("demonstrative_example", "");
    entry.demonstrative_reasoning = parsed.value("demonstrative_reasoning", "");
    entry.provenance = parsed.value("provenance", "");
    return entry;
}

InstructionDoc mitre_instruction(const CweId& cwe) {
    MitreEntry entry = load_mitre_entry(cwe);
    InstructionDoc doc;
    doc.cwe = cwe;
    doc.text = entry.description;
    doc.source = InstructionSource::mitre_verbatim;
    doc.format = InstructionFormat::prose;
    doc.provenance_note = entry.provenance;
    return doc;
}

CoTExemplar mitre_demonstrative_exemplar(const CweId& cwe) {
    MitreEntry entry = load_mitre_entry(cwe);
    if (entry.demonstrative_example.empty() || entry.demonstrative_reasoning.empty()) {
        throw EnvironmentError("bundled MITRE entry for " + cwe.to_string() +
                               " has no demonstrative example");
    }
    CoTExemplar exemplar;
    exemplar.code = entry.demonstrative_example;
    exemplar.reasoning = entry.demonstrative_reasoning;
    exemplar.polarity = Polarity::vulnerable;
    exemplar.origin = ExemplarOrigin::mitre_demonstrative;
    return exemplar;
}

InstructionDoc s0_instruction(const CweId& cwe) {
    InstructionDoc doc;
    doc.cwe = cwe;
    doc.text = cwe.display();
    doc.source = InstructionSource::mitre_verbatim;
    doc.format = InstructionFormat::prose;
    doc.provenance_note = "CWE id and canonical name from the MITRE dictionary";
    return doc;
}

ResolvedPair resolve_pair(const corpus::CorpusSlice& slice, const corpus::SamplePair& pair) {
    return ResolvedPair{slice.vulnerable_of(pair), slice.fixed_of(pair)};
}

std::string phase2_prompt(const CweId& cwe, const Phase2Mode& mode) {
    std::string display = cwe.display();
    std::string base = "You are a security expert in vulnerability detection. You specialize in "
                       "identifying " +
                       display +
                       ". Give a set of instructions that can be used in a code review in order "
                       "to identify " +
                       display + ".";
    if (std::holds_alternative<IntrinsicMode>(mode)) {
        return base;
    }
    if (const auto* fewshot = std::get_if<FewshotMode>(&mode)) {
        if (fewshot->pairs.size() != 3) {
            throw ValidationError("fewshot mode needs exactly 3 pairs, got " +
                                  std::to_string(fewshot->pairs.size()));
        }
        std::ostringstream out;
        out << base << "\n\nBase the instructions on the following example pairs from the "
                       "validation set.";
        int index = 0;
        for (const ResolvedPair& pair : fewshot->pairs) {
            if (pair.vulnerable.cwe != cwe || pair.fixed.cwe != cwe) {
                throw ValidationError("fewshot pair is not for " + cwe.to_string());
            }
            ++index;
            out << "\n\nPair " << index << "\nVulnerable:\n"
                << trim(pair.vulnerable.code) << "\nFixed:\n" << trim(pair.fixed.code);
        }
        return out.str();
    }
    const auto& from_mitre = std::get<FromMitreMode>(mode);
    return base + "\n\nUse the following official description:\n\n" + from_mitre.mitre_text +
           "\n\nDemonstrative examples:\n\n" + from_mitre.demo_examples;
}

std::string phase2_reformat_prompt(const std::string& raw_instructions,
                                   InstructionFormat format) {
    std::string kind = format == InstructionFormat::checks ? "checks" : "freeform";
    fs::path path = data_dir() / "format_exemplars" / ("cwe-416-" + kind + ".txt");
    std::string exemplar = read_file(path);
    return "You are a security expert in vulnerability detection. Reformat the following "
           "instructions so that their structure matches the exemplar. The exemplar serves as a "
           "template only for formatting; keep the technical content of the instructions "
           "unchanged.\n\nInstructions:\n\n" +
           trim(raw_instructions) + "\n\nExemplar (CWE-416):\n\n" + trim(exemplar);
}

InstructionDoc forge_phase2_instructions(const CweId& cwe, gateway::Gateway& gw,
                                         const Phase2Mode& mode, InstructionFormat format,
                                         const gateway::ModelProfile& profile) {
    std::string outgoing = phase2_prompt(cwe, mode);
    gateway::CompletionRequest request;
    request.profile = profile;
    request.prompt_text = outgoing;
    request.purpose = gateway::Purpose::forge_phase2;
    gateway::CompletionResult raw = gw.complete(request);
    if (trim(raw.text).empty()) {
        throw GatewayError("phase 2 returned an empty completion for " + cwe.to_string());
    }

    gateway::CompletionRequest reformat;
    reformat.profile = profile;
    reformat.prompt_text = phase2_reformat_prompt(raw.text, format);
    reformat.purpose = gateway::Purpose::forge_phase2;
    gateway::CompletionResult formatted = gw.complete(reformat);
    if (trim(formatted.text).empty()) {
        throw GatewayError("phase 2 reformat returned an empty completion for " +
                           cwe.to_string());
    }

    InstructionDoc doc;
    doc.cwe = cwe;
    doc.text = trim(formatted.text);
    doc.format = format;
    doc.provenance_note = profile.name;
    if (std::holds_alternative<IntrinsicMode>(mode)) {
        doc.source = InstructionSource::model_intrinsic;
    } else if (std::holds_alternative<FewshotMode>(mode)) {
        doc.source = InstructionSource::model_fewshot_sven;
    } else {
        doc.source = InstructionSource::model_from_mitre;
    }
    validate_instruction(doc);
    return doc;
}

std::string phase3_prompt(const InstructionDoc& instructions,
                          const corpus::SyntheticPair& pair) {
    if (instructions.cwe != pair.cwe) {
        throw ValidationError("instructions are for " + instructions.cwe.to_string() +
                              " but the pair is for " + pair.cwe.to_string());
    }
    std::string display = pair.cwe.display();
    return "You are a security expert in vulnerability detection. You specialize in identifying " +
           display +
           ". You are given a vulnerable function and a fixed function, as well as a set of "
           "instructions that can be used to identify " +
           display + ".\n\nVulnerable: " + trim(pair.vulnerable_code) +
           "\n\nFixed: " + trim(pair.fixed_code) +
           "\n\nGiven the above functions and the following instructions: " +
           trim(instructions.text) +
           "\n\n1) Illustrate how the vulnerable function is vulnerable based on the "
           "instructions.\n\n2) Illustrate how the fixed function is non-vulnerable based on the "
           "instructions.";
}

std::optional<std::pair<std::string, std::string>> split_phase3_completion(
    const std::string& text) {
    std::vector<std::string> lines = split_lines(text);
    std::optional<size_t> first_marker;
    std::optional<size_t> second_marker;
    for (size_t i = 0; i < lines.size(); ++i) {
        std::string t = trim(lines[i]);
        if (!first_marker.has_value() && starts_with(t, "1)")) {
            first_marker = i;
        } else if (first_marker.has_value() && starts_with(t, "2)")) {
            second_marker = i;
            break;
        }
    }
    if (!first_marker.has_value() || !second_marker.has_value()) {
        return std::nullopt;
    }
    auto collect = [&](size_t begin, size_t end, const char* marker) {
        std::string out;
        for (size_t i = begin; i < end; ++i) {
            std::string line = lines[i];
            if (i == begin) {
                line = trim(line).substr(std::string(marker).size());
            }
            if (!out.empty()) {
                out += "\n";
            }
            out += line;
        }
        return trim(out);
    };
    std::string part1 = collect(*first_marker, *second_marker, "1)");
    std::string part2 = collect(*second_marker, lines.size(), "2)");
    if (part1.empty() || part2.empty()) {
        return std::nullopt;
    }
    return std::make_pair(part1, part2);
}

Phase3Result forge_phase3_cot(const InstructionDoc& instructions,
                              const corpus::SyntheticPair& pair, gateway::Gateway& gw,
                              const gateway::ModelProfile& profile) {
    gateway::CompletionRequest request;
    request.profile = profile;
    request.prompt_text = phase3_prompt(instructions, pair);
    request.purpose = gateway::Purpose::forge_phase3;
    gateway::CompletionResult completion = gw.complete(request);

    Phase3Result result;
    result.raw_completion = completion.text;
    auto parts = split_phase3_completion(completion.text);
    if (!parts.has_value()) {
        result.needs_review = true;
        return result;
    }
    CoTExemplar vulnerable;
    vulnerable.code = pair.vulnerable_code;
    vulnerable.reasoning = parts->first;
    vulnerable.polarity = Polarity::vulnerable;
    vulnerable.origin = ExemplarOrigin::juliet_pair;
    CoTExemplar fixed;
    fixed.code = pair.fixed_code;
    fixed.reasoning = parts->second;
    fixed.polarity = Polarity::fixed;
    fixed.origin = ExemplarOrigin::juliet_pair;
    result.exemplars = std::make_pair(std::move(vulnerable), std::move(fixed));
    return result;
}

PromptTemplate assemble_template(const StrategySetting& setting, const CweId& cwe,
                                 std::optional<InstructionDoc> instruction,
                                 std::vector<CoTExemplar> exemplars) {
    if (!setting.valid()) {
        throw ValidationError("invalid strategy setting");
    }
    PromptTemplate tmpl;
    tmpl.setting = setting;
    tmpl.cwe = cwe;

    if (setting.category == Category::basic) {
        if (instruction.has_value() || !exemplars.empty()) {
            throw ValidationError("basic templates take no instruction and no exemplars");
        }
        tmpl.final_question = kBasicQuestion;
        tmpl.verbosity_clause = kVerbosityClause;
        return tmpl;
    }

    if (!instruction.has_value()) {
        throw ValidationError(setting.to_string() + " needs an instruction");
    }
    if (instruction->cwe != cwe) {
        throw ValidationError("instruction is for " + instruction->cwe.to_string() + ", not " +
                              cwe.to_string());
    }
    validate_instruction(*instruction);
    tmpl.preamble = kPreamble;
    tmpl.instruction = std::move(instruction);

    if (setting.category == Category::nl) {
        if (!exemplars.empty()) {
            throw ValidationError("nl templates take no exemplars");
        }
        tmpl.final_question = setting.setting == Setting::s0
                                  ? s0_question(cwe)
                                  : recurring_question(tmpl.instruction->format);
        return tmpl;
    }

    // nl_cot
    std::string question = recurring_question(tmpl.instruction->format);
    if (setting.setting == Setting::s0) {
        if (exemplars.size() != 1) {
            throw ValidationError("nl_cot s0 takes exactly one exemplar, got " +
                                  std::to_string(exemplars.size()));
        }
        if (exemplars.front().origin != ExemplarOrigin::mitre_demonstrative) {
            throw ValidationError("the nl_cot s0 exemplar must be the MITRE demonstrative one");
        }
    } else {
        if (exemplars.size() != 2) {
            throw ValidationError(setting.to_string() + " takes exactly two exemplars, got " +
                                  std::to_string(exemplars.size()));
        }
        if (exemplars[0].polarity == exemplars[1].polarity) {
            throw ValidationError("contrastive exemplars need one vulnerable and one fixed member");
        }
        // contrastive order: vulnerable strictly before fixed
        if (exemplars[0].polarity != Polarity::vulnerable) {
            std::swap(exemplars[0], exemplars[1]);
        }
    }
    for (CoTExemplar& exemplar : exemplars) {
        if (trim(exemplar.reasoning).empty()) {
            throw ValidationError("exemplar reasoning is empty");
        }
        tmpl.exemplars.push_back(ExemplarBlock{question, std::move(exemplar)});
    }
    tmpl.final_question = question;
    return tmpl;
}

RenderedPrompt render(const PromptTemplate& tmpl, const corpus::CodeSample& sample) {
    if (sample.code.empty()) {
        throw ValidationError("sample " + sample.id + " has empty code");
    }
    std::string text = tmpl.text();
    std::string slot = std::string(kNewExampleSlot) + "\n";
    size_t pos = text.find(slot);
    if (pos == std::string::npos) {
        throw ValidationError("template has no new-example slot");
    }
    std::string code = sample.code;
    if (code.empty() || code.back() != '\n') {
        code += "\n";
    }
    text.replace(pos, slot.size(), code);

    RenderedPrompt rendered;
    rendered.text = std::move(text);
    rendered.strategy = tmpl.setting;
    rendered.cwe = tmpl.cwe;
    rendered.sample_id = sample.id;
    rendered.token_estimate = metrics::count_tokens(rendered.text);
    return rendered;
}

RenderedPrompt basic_prompt(const corpus::CodeSample& sample, bool verbosity_instruction,
                            bool tag_mode) {
    PromptTemplate tmpl;
    tmpl.setting = StrategySetting{Category::basic, Setting::not_applicable};
    tmpl.cwe = sample.cwe;
    tmpl.final_question = kBasicQuestion;
    if (verbosity_instruction) {
        tmpl.verbosity_clause = kVerbosityClause;
    }
    tmpl.tag_mode = tag_mode;
    return render(tmpl, sample);
}

std::vector<std::string> lint(const PromptTemplate& tmpl) {
    std::vector<std::string> issues;
    if (!tmpl.setting.valid()) {
        issues.push_back("invalid setting");
        return issues;
    }
    switch (tmpl.setting.category) {
        case Category::basic:
            if (tmpl.instruction.has_value()) issues.push_back("basic carries an instruction");
            if (!tmpl.exemplars.empty()) issues.push_back("basic carries exemplars");
            break;
        case Category::nl:
            if (!tmpl.instruction.has_value()) issues.push_back("nl lacks an instruction");
            if (!tmpl.exemplars.empty()) issues.push_back("nl carries exemplars");
            break;
        case Category::nl_cot:
            if (!tmpl.instruction.has_value()) issues.push_back("nl_cot lacks an instruction");
            if (tmpl.setting.setting == Setting::s0) {
                if (tmpl.exemplars.size() != 1) {
                    issues.push_back("nl_cot s0 needs exactly one exemplar");
                }
            } else if (tmpl.exemplars.size() != 2) {
                issues.push_back("contrastive settings need exactly two exemplars");
            } else if (tmpl.exemplars[0].exemplar.polarity != Polarity::vulnerable ||
                       tmpl.exemplars[1].exemplar.polarity != Polarity::fixed) {
                issues.push_back("contrastive exemplars must run vulnerable then fixed");
            }
            break;
    }
    return issues;
}

std::vector<std::string> lint_rendered(const std::string& text, const StrategySetting& setting) {
    std::vector<std::string> issues;
    size_t expected_examples = 0;
    if (setting.category == Category::nl_cot) {
        expected_examples = setting.setting == Setting::s0 ? 1 : 2;
    }
    if (count_occurrences(text, kExampleStart) != expected_examples ||
        count_occurrences(text, kExampleEnd) != expected_examples) {
        issues.push_back("wrong number of exemplar blocks");
    }
    if (count_occurrences(text, kNewExampleStart) != 1 ||
        count_occurrences(text, kNewExampleEnd) != 1) {
        issues.push_back("the new-example block must appear exactly once");
    }
    std::string trimmed = trim(text);
    if (trimmed.size() < std::string(kYourAnswer).size() ||
        trimmed.substr(trimmed.size() - std::string(kYourAnswer).size()) != kYourAnswer) {
        issues.push_back("prompt must end with the answer cue");
    }
    bool needs_instruction_header =
        (setting.category == Category::nl && setting.setting != Setting::s0) ||
        setting.category == Category::nl_cot;
    if (needs_instruction_header && text.find("Use the following") == std::string::npos) {
        issues.push_back("instruction header missing");
    }
    if (setting.category != Category::basic && !starts_with(text, kPreamble)) {
        issues.push_back("preamble missing");
    }
    return issues;
}

// --- template store ---

namespace {

constexpr const char* kCodeMarker = "<<<CODE>>>";
constexpr const char* kReasoningMarker = "<<<REASONING>>>";

std::string serialize_exemplar(const CoTExemplar& exemplar) {
    return std::string(kCodeMarker) + "\n" + exemplar.code + "\n" + kReasoningMarker + "\n" +
           exemplar.reasoning + "\n";
}

CoTExemplar parse_exemplar(const std::string& content, Polarity polarity,
                           ExemplarOrigin origin) {
    size_t code_at = content.find(kCodeMarker);
    size_t reasoning_at = content.find(kReasoningMarker);
    if (code_at == std::string::npos || reasoning_at == std::string::npos ||
        reasoning_at < code_at) {
        throw ParseError("exemplar file lacks code/reasoning markers", "");
    }
    CoTExemplar exemplar;
    size_t code_begin = code_at + std::string(kCodeMarker).size() + 1;
    exemplar.code = trim(content.substr(code_begin, reasoning_at - code_begin));
    exemplar.reasoning =
        trim(content.substr(reasoning_at + std::string(kReasoningMarker).size() + 1));
    exemplar.polarity = polarity;
    exemplar.origin = origin;
    return exemplar;
}

std::mutex& store_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

TemplateStore::TemplateStore(fs::path root) : root_(std::move(root)) {}

fs::path TemplateStore::dir_for(const CweId& cwe, const StrategySetting& setting) const {
    return root_ / cwe.to_string() /
           (strategy::to_string(setting.category) + "-" + strategy::to_string(setting.setting));
}

bool TemplateStore::has(const CweId& cwe, const StrategySetting& setting) const {
    return fs::exists(dir_for(cwe, setting) / "meta.json");
}

void TemplateStore::save(const PromptTemplate& tmpl, const ForgeMeta& meta) const {
    std::lock_guard<std::mutex> lock(store_mutex());
    fs::path dir = dir_for(tmpl.cwe, tmpl.setting);
    fs::create_directories(dir);

    json meta_json;
    meta_json["cwe"] = tmpl.cwe.to_string();
    meta_json["setting"] = tmpl.setting.to_string();
    meta_json["model"] = meta.model_name;
    meta_json["parameters"] = meta.parameters;
    meta_json["created_at"] = meta.created_at.empty() ? now_iso8601() : meta.created_at;
    meta_json["needs_review"] = meta.needs_review;
    meta_json["tag_mode"] = tmpl.tag_mode;
    json hashes = meta.input_hashes;

    if (tmpl.instruction.has_value()) {
        fs::path instruction_path = dir / "instruction.txt";
        auto existing_meta = read_file_if_exists(dir / "meta.json");
        if (existing_meta.has_value()) {
            json old = json::parse(*existing_meta);
            if (old.value("instruction_source", "") == "mitre_verbatim") {
                auto existing = read_file_if_exists(instruction_path);
                if (existing.has_value() && *existing != tmpl.instruction->text) {
                    throw ValidationError("mitre_verbatim instructions are immutable once stored");
                }
            }
        }
        write_file_atomic(instruction_path, tmpl.instruction->text);
        meta_json["instruction_source"] = to_string(tmpl.instruction->source);
        meta_json["instruction_format"] = to_string(tmpl.instruction->format);
        meta_json["instruction_provenance"] = tmpl.instruction->provenance_note;
        hashes["instruction"] = sha256_hex(tmpl.instruction->text);
    }

    for (const ExemplarBlock& block : tmpl.exemplars) {
        const CoTExemplar& exemplar = block.exemplar;
        std::string file =
            exemplar.polarity == Polarity::vulnerable ? "exemplar-vuln.txt" : "exemplar-fixed.txt";
        write_file_atomic(dir / file, serialize_exemplar(exemplar));
        std::string key = exemplar.polarity == Polarity::vulnerable ? "exemplar_vuln"
                                                                    : "exemplar_fixed";
        hashes[key] = sha256_hex(exemplar.code + "\x1f" + exemplar.reasoning);
        meta_json[key + "_origin"] = to_string(exemplar.origin);
    }

    std::string text = tmpl.text();
    write_file_atomic(dir / "template.txt", text);
    hashes["template"] = sha256_hex(text);
    meta_json["input_hashes"] = hashes;
    write_file_atomic(dir / "meta.json", meta_json.dump(2) + "\n");
}

PromptTemplate TemplateStore::load(const CweId& cwe, const StrategySetting& setting) const {
    fs::path dir = dir_for(cwe, setting);
    auto meta_content = read_file_if_exists(dir / "meta.json");
    if (!meta_content.has_value()) {
        throw EnvironmentError("no stored template for " + cwe.to_string() + " / " +
                               setting.to_string());
    }
    json meta = json::parse(*meta_content);
    if (meta.value("needs_review", false)) {
        throw ValidationError("stored template for " + cwe.to_string() + " / " +
                              setting.to_string() + " is flagged for manual review");
    }

    std::optional<InstructionDoc> instruction;
    if (auto text = read_file_if_exists(dir / "instruction.txt")) {
        InstructionDoc doc;
        doc.cwe = cwe;
        doc.text = *text;
        doc.source = parse_instruction_source(meta.value("instruction_source", "mitre_verbatim"));
        doc.format = parse_instruction_format(meta.value("instruction_format", "prose"));
        doc.provenance_note = meta.value("instruction_provenance", "");
        instruction = std::move(doc);
    }

    std::vector<CoTExemplar> exemplars;
    if (auto content = read_file_if_exists(dir / "exemplar-vuln.txt")) {
        std::string origin = meta.value("exemplar_vuln_origin", "juliet_pair");
        exemplars.push_back(parse_exemplar(*content, Polarity::vulnerable,
                                           origin == "mitre_demonstrative"
                                               ? ExemplarOrigin::mitre_demonstrative
                                               : ExemplarOrigin::juliet_pair));
    }
    if (auto content = read_file_if_exists(dir / "exemplar-fixed.txt")) {
        exemplars.push_back(
            parse_exemplar(*content, Polarity::fixed, ExemplarOrigin::juliet_pair));
    }
    PromptTemplate tmpl = assemble_template(setting, cwe, std::move(instruction),
                                            std::move(exemplars));
    tmpl.tag_mode = meta.value("tag_mode", false);
    return tmpl;
}

PromptTemplate forge_template(const StrategySetting& setting, const CweId& cwe,
                              gateway::Gateway& gw, const TemplateStore& store,
                              const ForgeInputs& inputs) {
    if (!setting.valid()) {
        throw ValidationError("invalid strategy setting");
    }
    ForgeMeta meta;
    meta.model_name = inputs.profile.name;
    meta.parameters = gateway::HttpProvider::build_wire_json(inputs.profile, "-", std::nullopt);
    meta.parameters.erase("messages");
    meta.created_at = now_iso8601();

    std::optional<InstructionDoc> instruction;
    std::vector<CoTExemplar> exemplars;

    auto forge_contrastive = [&](const Phase2Mode& mode, InstructionFormat format) {
        instruction = forge_phase2_instructions(cwe, gw, mode, format, inputs.profile);
        corpus::ContrastiveSelection selection = corpus::select_contrastive_pair(
            inputs.juliet_slice, cwe, inputs.scenario_selector, inputs.seed);
        if (selection.seed.has_value()) {
            meta.input_hashes["scenario_seed"] = std::to_string(*selection.seed);
        }
        meta.input_hashes["scenario_id"] = selection.pair.scenario_id;
        Phase3Result phase3 = forge_phase3_cot(*instruction, selection.pair, gw, inputs.profile);
        if (phase3.needs_review) {
            // keep the whole completion next to the setting for a human pass
            fs::path dir = store.dir_for(cwe, setting);
            fs::create_directories(dir);
            write_file_atomic(dir / "phase3-raw.txt", phase3.raw_completion);
            json flag = {{"cwe", cwe.to_string()},
                         {"setting", setting.to_string()},
                         {"model", inputs.profile.name},
                         {"created_at", meta.created_at},
                         {"needs_review", true}};
            write_file_atomic(dir / "meta.json", flag.dump(2) + "\n");
            throw GatewayError("phase 3 completion for " + cwe.to_string() + " / " +
                               setting.to_string() +
                               " has no 1)/2) markers; stored raw and flagged for manual review");
        }
        exemplars.push_back(phase3.exemplars->first);
        exemplars.push_back(phase3.exemplars->second);
    };

    switch (setting.category) {
        case Category::basic:
            break;
        case Category::nl:
            switch (setting.setting) {
                case Setting::s0: instruction = s0_instruction(cwe); break;
                case Setting::s1:
                    instruction = forge_phase2_instructions(cwe, gw, IntrinsicMode{},
                                                            InstructionFormat::checks,
                                                            inputs.profile);
                    break;
                case Setting::s2:
                    instruction = forge_phase2_instructions(
                        cwe, gw, FewshotMode{inputs.fewshot_pairs}, InstructionFormat::checks,
                        inputs.profile);
                    break;
                case Setting::s3: instruction = mitre_instruction(cwe); break;
                default: throw ValidationError("invalid nl setting");
            }
            break;
        case Category::nl_cot:
            switch (setting.setting) {
                case Setting::s0:
                    instruction = mitre_instruction(cwe);
                    exemplars.push_back(mitre_demonstrative_exemplar(cwe));
                    break;
                case Setting::s1:
                    forge_contrastive(IntrinsicMode{}, InstructionFormat::checks);
                    break;
                case Setting::s2: {
                    MitreEntry entry = load_mitre_entry(cwe);
                    forge_contrastive(
                        FromMitreMode{entry.description, entry.demonstrative_example},
                        InstructionFormat::checks);
                    break;
                }
                case Setting::s3:
                    forge_contrastive(IntrinsicMode{}, InstructionFormat::freeform);
                    break;
                default: throw ValidationError("invalid nl_cot setting");
            }
            break;
    }

    PromptTemplate tmpl = assemble_template(setting, cwe, std::move(instruction),
                                            std::move(exemplars));
    store.save(tmpl, meta);
    return tmpl;
}

}  // namespace vulnbench::strategy
