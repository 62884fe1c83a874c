#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "vulnbench/corpus.hpp"

namespace vulnbench::verdict {

enum class VerdictValue { vulnerable, non_vulnerable, abstain };

std::string to_string(VerdictValue value);
VerdictValue parse_verdict_value(std::string_view text);

enum class ParseRule { answer_tag, final_line, body_scan, none };

std::string to_string(ParseRule rule);

struct ParsedResponse {
    VerdictValue verdict = VerdictValue::abstain;
    std::string rationale;  // response text minus the verdict sentence
    ParseRule rule_used = ParseRule::none;
};

/// The fixed, versioned phrase lexicon: one phrase per line, tab-separated
/// polarity column ("negative" before "positive" never matters — negative
/// phrases always take precedence during matching).
class VerdictLexicon {
public:
    static VerdictLexicon load(const std::filesystem::path& path);
    static const VerdictLexicon& bundled();

    const std::vector<std::string>& negative_phrases() const { return negative_; }
    const std::vector<std::string>& positive_phrases() const { return positive_; }

private:
    std::vector<std::string> negative_;
    std::vector<std::string> positive_;
};

/// Extracts a verdict from free-text model output. Never throws; contradictory
/// or absent signals yield abstain. Scope priority: last <answer> block (when
/// tag_mode), then the final non-empty line, then the whole text. Negated
/// phrases are matched before bare "vulnerable" so they never misfire.
ParsedResponse parse_response(const std::string& text, bool tag_mode,
                              const VerdictLexicon& lexicon = VerdictLexicon::bundled());

enum class Outcome { tp, fp, tn, fn, abstain_pos, abstain_neg };

std::string to_string(Outcome outcome);

/// Total on VerdictValue x Label; abstentions keep the truth polarity.
Outcome score(VerdictValue verdict, corpus::Label truth);

enum class AnnotationCategory { LR, L_notR, notL_R, notL_notR };

std::string to_string(AnnotationCategory category);
AnnotationCategory category_from_flags(bool verdict_correct, bool reasoning_correct);

/// One row of the manual response analysis. L (label correctness) is
/// recomputable; R (reasoning correctness) is a human judgment.
struct AnnotationRecord {
    std::string sample_id;
    AnnotationCategory category = AnnotationCategory::LR;
    std::string annotator;
    std::string note;
};

/// Builds a record for a sample of a completed run; throws on unknown ids.
AnnotationRecord annotate(const std::set<std::string>& known_sample_ids,
                          const std::string& sample_id, bool verdict_correct,
                          bool reasoning_correct, const std::string& annotator,
                          const std::string& note);

void save_annotations(const std::vector<AnnotationRecord>& records,
                      const std::filesystem::path& path);
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path);

}  // namespace vulnbench::verdict
