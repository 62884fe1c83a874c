#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "vulnbench/corpus.hpp"
#include "vulnbench/cwe.hpp"
#include "vulnbench/gateway.hpp"
#include "vulnbench/strategy_setting.hpp"

namespace vulnbench::strategy {

// Fixed prompt fragments. These define the rendered-prompt shape and are the
// anchor points for the template snapshot tests.
inline constexpr const char* kPreamble =
    "You are a security expert. You will analyze new examples for vulnerabilities.";
inline constexpr const char* kBasicQuestion = "Is the example vulnerable or non-vulnerable?";
inline constexpr const char* kVerbosityClause = "Do not provide any extra information.";
inline constexpr const char* kTagClause =
    "Provide your final answer inside <answer></answer> tags.";
inline constexpr const char* kExampleStart = "<EXAMPLE START>";
inline constexpr const char* kExampleEnd = "<EXAMPLE END>";
inline constexpr const char* kNewExampleStart = "<NEW EXAMPLE START>";
inline constexpr const char* kNewExampleEnd = "<NEW EXAMPLE END>";
inline constexpr const char* kYourAnswer = "Your answer:";
inline constexpr const char* kNewExampleSlot = "{{NEW_EXAMPLE}}";

enum class InstructionSource {
    model_intrinsic,     // NL S1, NL+CoT S1/S3
    model_fewshot_sven,  // NL S2
    mitre_verbatim,      // NL S0/S3, NL+CoT S0
    model_from_mitre,    // NL+CoT S2
};
enum class InstructionFormat { checks, freeform, prose };

std::string to_string(InstructionSource source);
std::string to_string(InstructionFormat format);
InstructionSource parse_instruction_source(std::string_view text);
InstructionFormat parse_instruction_format(std::string_view text);

struct InstructionDoc {
    CweId cwe;
    std::string text;
    InstructionSource source = InstructionSource::mitre_verbatim;
    InstructionFormat format = InstructionFormat::prose;
    std::string provenance_note;
};

/// Throws when the doc violates its format contract (checks-format docs must
/// carry the enumerated "Test 1 -", "Test 2 -", ... list).
void validate_instruction(const InstructionDoc& doc);

enum class Polarity { vulnerable, fixed };
enum class ExemplarOrigin { juliet_pair, mitre_demonstrative };

std::string to_string(Polarity polarity);
std::string to_string(ExemplarOrigin origin);

struct CoTExemplar {
    std::string code;
    std::string reasoning;
    Polarity polarity = Polarity::vulnerable;
    ExemplarOrigin origin = ExemplarOrigin::juliet_pair;
};

struct ExemplarBlock {
    std::string question;
    CoTExemplar exemplar;
};

struct PromptTemplate {
    StrategySetting setting;
    CweId cwe;
    std::string preamble;
    std::optional<InstructionDoc> instruction;
    std::vector<ExemplarBlock> exemplars;  // contrastive order: vulnerable first
    std::string final_question;
    std::optional<std::string> verbosity_clause;
    bool tag_mode = false;

    /// Full prompt text with the kNewExampleSlot placeholder between the
    /// new-example delimiters. Deterministic.
    std::string text() const;
};

struct RenderedPrompt {
    std::string text;
    StrategySetting strategy;
    CweId cwe;
    std::string sample_id;
    std::size_t token_estimate = 0;
};

// --- bundled MITRE content (data/mitre/cwe-<n>.json) ---

struct MitreEntry {
    CweId cwe;
    std::string name;
    std::string description;
    std::string demonstrative_example;
    std::string demonstrative_reasoning;
    std::string provenance;
};

MitreEntry load_mitre_entry(const CweId& cwe);
InstructionDoc mitre_instruction(const CweId& cwe);
CoTExemplar mitre_demonstrative_exemplar(const CweId& cwe);
/// The NL S0 "instruction": just the CWE id and canonical name as signal.
InstructionDoc s0_instruction(const CweId& cwe);

// --- the 4-phase forge pipeline ---

struct ResolvedPair {
    corpus::CodeSample vulnerable;
    corpus::CodeSample fixed;
};
ResolvedPair resolve_pair(const corpus::CorpusSlice& slice, const corpus::SamplePair& pair);

struct IntrinsicMode {};
struct FewshotMode {
    std::vector<ResolvedPair> pairs;  // exactly 3, from the SVEN-like validation set
};
struct FromMitreMode {
    std::string mitre_text;
    std::string demo_examples;
};
using Phase2Mode = std::variant<IntrinsicMode, FewshotMode, FromMitreMode>;

/// Outgoing Phase-2 prompt ("You are a security expert in vulnerability
/// detection. ... Give a set of instructions that can be used in a code
/// review ..."); pure, exposed so transcripts and tests can address it.
std::string phase2_prompt(const CweId& cwe, const Phase2Mode& mode);
/// The post-processing step: reformat raw instructions against the bundled
/// CWE-416 exemplar for the target format.
std::string phase2_reformat_prompt(const std::string& raw_instructions,
                                   InstructionFormat format);

InstructionDoc forge_phase2_instructions(const CweId& cwe, gateway::Gateway& gw,
                                         const Phase2Mode& mode,
                                         InstructionFormat format = InstructionFormat::checks,
                                         const gateway::ModelProfile& profile =
                                             gateway::ModelProfile::for_name("gpt-4"));

/// Outgoing Phase-3 prompt interpolating the CWE id, both pair bodies, and
/// the Phase-2 instruction text.
std::string phase3_prompt(const InstructionDoc& instructions,
                          const corpus::SyntheticPair& pair);

/// Splits a Phase-3 completion on its "1)" / "2)" markers.
std::optional<std::pair<std::string, std::string>> split_phase3_completion(
    const std::string& text);

struct Phase3Result {
    std::optional<std::pair<CoTExemplar, CoTExemplar>> exemplars;  // vulnerable, fixed
    std::string raw_completion;
    bool needs_review = false;  // completion had no 1)/2) markers; kept whole
};

Phase3Result forge_phase3_cot(const InstructionDoc& instructions,
                              const corpus::SyntheticPair& pair, gateway::Gateway& gw,
                              const gateway::ModelProfile& profile =
                                  gateway::ModelProfile::for_name("gpt-4"));

/// Deterministic Phase-4 assembly. Validates the per-setting invariants
/// (basic: nothing attached; nl: instruction only; nl_cot s0: one
/// demonstrative exemplar; nl_cot s1-s3: one vulnerable + one fixed exemplar,
/// reordered vulnerable-first when given swapped).
PromptTemplate assemble_template(const StrategySetting& setting, const CweId& cwe,
                                 std::optional<InstructionDoc> instruction,
                                 std::vector<CoTExemplar> exemplars);

/// Pure: inserts the sample between the new-example delimiters and estimates
/// tokens with the reference tokenizer.
RenderedPrompt render(const PromptTemplate& tmpl, const corpus::CodeSample& sample);

/// The vanilla prompt: code first, then the question. Default flags follow
/// the evaluated shape: verbosity clause on, tags off.
RenderedPrompt basic_prompt(const corpus::CodeSample& sample, bool verbosity_instruction = true,
                            bool tag_mode = false);

/// Structural checks over a template / a rendered text: exemplar-block
/// counts, instruction presence, final-question suffix. Empty result = clean.
std::vector<std::string> lint(const PromptTemplate& tmpl);
std::vector<std::string> lint_rendered(const std::string& text, const StrategySetting& setting);

// --- content-addressed template store ---

struct ForgeMeta {
    std::string model_name;
    nlohmann::json parameters;
    std::string created_at;  // ISO-8601 UTC
    nlohmann::json input_hashes;
    bool needs_review = false;
};

/// On-disk layout: <root>/<cwe>/<category>-<setting>/{instruction.txt,
/// exemplar-vuln.txt, exemplar-fixed.txt, template.txt, meta.json}.
/// Saves serialize per (cwe, setting); mitre_verbatim instructions are
/// immutable once stored.
class TemplateStore {
public:
    explicit TemplateStore(std::filesystem::path root);

    std::filesystem::path dir_for(const CweId& cwe, const StrategySetting& setting) const;
    bool has(const CweId& cwe, const StrategySetting& setting) const;
    void save(const PromptTemplate& tmpl, const ForgeMeta& meta) const;
    PromptTemplate load(const CweId& cwe, const StrategySetting& setting) const;

    const std::filesystem::path& root() const { return root_; }

private:
    std::filesystem::path root_;
};

/// Everything the forge needs besides the gateway: the Juliet-style slice for
/// Phase 1, the few-shot pairs for NL S2, and the forge model profile.
struct ForgeInputs {
    corpus::CorpusSlice juliet_slice;  // may be empty for settings that skip Phase 1
    std::optional<std::string> scenario_selector;
    std::uint64_t seed = 0;
    std::vector<ResolvedPair> fewshot_pairs;
    gateway::ModelProfile profile = gateway::ModelProfile::for_name("gpt-4");
};

/// Runs Phases 1-4 for one (setting, cwe), persists the result, and returns
/// the template. Settings without model-made content (basic, nl-s0, nl-s3,
/// nl_cot-s0) never touch the gateway.
PromptTemplate forge_template(const StrategySetting& setting, const CweId& cwe,
                              gateway::Gateway& gw, const TemplateStore& store,
                              const ForgeInputs& inputs);

}  // namespace vulnbench::strategy
