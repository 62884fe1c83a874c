#include "vulnbench/verdict.hpp"

#include <algorithm>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vulnbench/common.hpp"

namespace vulnbench::verdict {

using nlohmann::json;

std::string to_string(VerdictValue value) {
    switch (value) {
        case VerdictValue::vulnerable: return "vulnerable";
        case VerdictValue::non_vulnerable: return "non_vulnerable";
        case VerdictValue::abstain: return "abstain";
    }
    return "abstain";
}

VerdictValue parse_verdict_value(std::string_view text) {
    std::string t = to_lower(trim(text));
    if (t == "vulnerable") return VerdictValue::vulnerable;
    if (t == "non_vulnerable" || t == "non-vulnerable") return VerdictValue::non_vulnerable;
    if (t == "abstain") return VerdictValue::abstain;
    throw ValidationError("unknown verdict: '" + std::string(text) + "'");
}

std::string to_string(ParseRule rule) {
    switch (rule) {
        case ParseRule::answer_tag: return "answer_tag";
        case ParseRule::final_line: return "final_line";
        case ParseRule::body_scan: return "body_scan";
        case ParseRule::none: return "none";
    }
    return "none";
}

VerdictLexicon VerdictLexicon::load(const std::filesystem::path& path) {
    VerdictLexicon lexicon;
    std::string content = read_file(path);
    size_t lineno = 0;
    for (const std::string& raw : split_lines(content)) {
        ++lineno;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') {
            continue;
        }
        size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw ParseError("lexicon line needs '<phrase>\\t<polarity>'",
                             "line " + std::to_string(lineno));
        }
        std::string phrase = to_lower(trim(line.substr(0, tab)));
        std::string polarity = to_lower(trim(line.substr(tab + 1)));
        if (phrase.empty()) {
            throw ParseError("empty phrase", "line " + std::to_string(lineno));
        }
        if (polarity == "negative") {
            lexicon.negative_.push_back(phrase);
        } else if (polarity == "positive") {
            lexicon.positive_.push_back(phrase);
        } else {
            throw ParseError("polarity must be 'negative' or 'positive'",
                             "line " + std::to_string(lineno));
        }
    }
    return lexicon;
}

const VerdictLexicon& VerdictLexicon::bundled() {
    static const VerdictLexicon lexicon = load(data_dir() / "verdict_lexicon.txt");
    return lexicon;
}

namespace {

struct Span {
    size_t begin;
    size_t end;
};

bool is_word_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

/// Finds word-bounded, case-insensitive occurrences of `phrase` in `text`.
/// A single space in the phrase matches any whitespace run.
std::vector<Span> find_phrase(const std::string& lower_text, const std::string& phrase) {
    std::vector<Span> spans;
    size_t pos = 0;
    while (pos < lower_text.size()) {
        // candidate start: match phrase token by token
        size_t t = pos;
        size_t p = 0;
        bool matched = true;
        while (p < phrase.size()) {
            if (phrase[p] == ' ') {
                size_t ws = t;
                while (ws < lower_text.size() &&
                       std::isspace(static_cast<unsigned char>(lower_text[ws]))) {
                    ++ws;
                }
                if (ws == t) {
                    matched = false;
                    break;
                }
                t = ws;
                ++p;
            } else {
                if (t >= lower_text.size() || lower_text[t] != phrase[p]) {
                    matched = false;
                    break;
                }
                ++t;
                ++p;
            }
        }
        if (matched) {
            bool left_ok = pos == 0 || !is_word_char(lower_text[pos - 1]);
            bool right_ok = t >= lower_text.size() || !is_word_char(lower_text[t]);
            if (left_ok && right_ok) {
                spans.push_back({pos, t});
                pos = t;
                continue;
            }
        }
        ++pos;
    }
    return spans;
}

bool overlaps(const Span& a, const Span& b) {
    return a.begin < b.end && b.begin < a.end;
}

enum class ScopeSignal { none, vulnerable, non_vulnerable, contradiction };

struct ScopeResult {
    ScopeSignal signal = ScopeSignal::none;
    std::optional<Span> first_match;  // relative to the scope string
};

ScopeResult classify_scope(const std::string& scope, const VerdictLexicon& lexicon) {
    std::string lower = to_lower(scope);
    std::vector<Span> negative;
    for (const std::string& phrase : lexicon.negative_phrases()) {
        for (const Span& span : find_phrase(lower, phrase)) {
            negative.push_back(span);
        }
    }
    std::vector<Span> positive;
    for (const std::string& phrase : lexicon.positive_phrases()) {
        for (const Span& span : find_phrase(lower, phrase)) {
            bool masked = std::any_of(negative.begin(), negative.end(),
                                      [&](const Span& n) { return overlaps(span, n); });
            if (!masked) {
                positive.push_back(span);
            }
        }
    }
    ScopeResult result;
    auto earliest = [](const std::vector<Span>& spans) {
        return std::min_element(spans.begin(), spans.end(),
                                [](const Span& a, const Span& b) { return a.begin < b.begin; });
    };
    if (!negative.empty() && !positive.empty()) {
        result.signal = ScopeSignal::contradiction;
        result.first_match = *earliest(negative);
    } else if (!negative.empty()) {
        result.signal = ScopeSignal::non_vulnerable;
        result.first_match = *earliest(negative);
    } else if (!positive.empty()) {
        result.signal = ScopeSignal::vulnerable;
        result.first_match = *earliest(positive);
    }
    return result;
}

/// Last <answer>...</answer> block, case-insensitive tags.
std::optional<Span> last_answer_block(const std::string& text) {
    static const std::regex open_re("<answer>", std::regex::icase);
    static const std::regex close_re("</answer>", std::regex::icase);
    std::optional<Span> block;
    auto begin = std::sregex_iterator(text.begin(), text.end(), open_re);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        size_t content_start = static_cast<size_t>(it->position()) + it->length();
        std::smatch close;
        std::string rest = text.substr(content_start);
        if (std::regex_search(rest, close, close_re)) {
            size_t content_end = content_start + static_cast<size_t>(close.position());
            block = Span{content_start, content_end};
        }
    }
    return block;
}

std::string remove_range(const std::string& text, size_t begin, size_t end) {
    std::string out = text.substr(0, begin) + text.substr(std::min(end, text.size()));
    return trim(out);
}

/// Extent of the line containing `offset`.
Span line_around(const std::string& text, size_t offset) {
    size_t begin = text.rfind('\n', offset == 0 ? 0 : offset - 1);
    begin = begin == std::string::npos ? 0 : begin + 1;
    size_t end = text.find('\n', offset);
    end = end == std::string::npos ? text.size() : end + 1;
    return {begin, end};
}

}  // namespace

ParsedResponse parse_response(const std::string& text, bool tag_mode,
                              const VerdictLexicon& lexicon) {
    ParsedResponse parsed;
    auto conclude = [&](ScopeSignal signal, ParseRule rule, std::string rationale) {
        parsed.rule_used = rule;
        parsed.rationale = std::move(rationale);
        switch (signal) {
            case ScopeSignal::vulnerable: parsed.verdict = VerdictValue::vulnerable; break;
            case ScopeSignal::non_vulnerable: parsed.verdict = VerdictValue::non_vulnerable; break;
            default: parsed.verdict = VerdictValue::abstain; break;
        }
    };

    if (tag_mode) {
        if (auto block = last_answer_block(text)) {
            std::string content = text.substr(block->begin, block->end - block->begin);
            ScopeResult r = classify_scope(content, lexicon);
            if (r.signal != ScopeSignal::none) {
                // rationale: everything outside the answer block (tags included)
                size_t tag_open = text.rfind('<', block->begin == 0 ? 0 : block->begin - 1);
                size_t tag_close = text.find('>', block->end);
                std::string rationale =
                    remove_range(text, tag_open == std::string::npos ? block->begin : tag_open,
                                 tag_close == std::string::npos ? block->end : tag_close + 1);
                conclude(r.signal, ParseRule::answer_tag, std::move(rationale));
                return parsed;
            }
        }
    }

    std::vector<std::string> lines = split_lines(text);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        if (trim(*it).empty()) {
            continue;
        }
        ScopeResult r = classify_scope(*it, lexicon);
        if (r.signal != ScopeSignal::none) {
            size_t line_offset = text.rfind(*it);
            Span extent = line_around(text, line_offset);
            conclude(r.signal, ParseRule::final_line, remove_range(text, extent.begin, extent.end));
            return parsed;
        }
        break;  // only the final non-empty line is in scope here
    }

    ScopeResult r = classify_scope(text, lexicon);
    if (r.signal != ScopeSignal::none) {
        Span extent = line_around(text, r.first_match->begin);
        conclude(r.signal, ParseRule::body_scan, remove_range(text, extent.begin, extent.end));
        return parsed;
    }

    parsed.verdict = VerdictValue::abstain;
    parsed.rule_used = ParseRule::none;
    parsed.rationale = trim(text);
    return parsed;
}

std::string to_string(Outcome outcome) {
    switch (outcome) {
        case Outcome::tp: return "tp";
        case Outcome::fp: return "fp";
        case Outcome::tn: return "tn";
        case Outcome::fn: return "fn";
        case Outcome::abstain_pos: return "abstain_pos";
        case Outcome::abstain_neg: return "abstain_neg";
    }
    return "tp";
}

Outcome score(VerdictValue verdict, corpus::Label truth) {
    bool truth_vulnerable = truth == corpus::Label::vulnerable;
    switch (verdict) {
        case VerdictValue::vulnerable:
            return truth_vulnerable ? Outcome::tp : Outcome::fp;
        case VerdictValue::non_vulnerable:
            return truth_vulnerable ? Outcome::fn : Outcome::tn;
        case VerdictValue::abstain:
            return truth_vulnerable ? Outcome::abstain_pos : Outcome::abstain_neg;
    }
    return Outcome::abstain_neg;
}

std::string to_string(AnnotationCategory category) {
    switch (category) {
        case AnnotationCategory::LR: return "LR";
        case AnnotationCategory::L_notR: return "L_notR";
        case AnnotationCategory::notL_R: return "notL_R";
        case AnnotationCategory::notL_notR: return "notL_notR";
    }
    return "LR";
}

AnnotationCategory category_from_flags(bool verdict_correct, bool reasoning_correct) {
    if (verdict_correct) {
        return reasoning_correct ? AnnotationCategory::LR : AnnotationCategory::L_notR;
    }
    return reasoning_correct ? AnnotationCategory::notL_R : AnnotationCategory::notL_notR;
}

AnnotationRecord annotate(const std::set<std::string>& known_sample_ids,
                          const std::string& sample_id, bool verdict_correct,
                          bool reasoning_correct, const std::string& annotator,
                          const std::string& note) {
    if (known_sample_ids.find(sample_id) == known_sample_ids.end()) {
        throw ValidationError("unknown sample: " + sample_id);
    }
    AnnotationRecord record;
    record.sample_id = sample_id;
    record.category = category_from_flags(verdict_correct, reasoning_correct);
    record.annotator = annotator;
    record.note = note;
    return record;
}

void save_annotations(const std::vector<AnnotationRecord>& records,
                      const std::filesystem::path& path) {
    std::ostringstream out;
    for (const AnnotationRecord& record : records) {
        json line = {{"sample_id", record.sample_id},
                     {"category", to_string(record.category)},
                     {"annotator", record.annotator},
                     {"note", record.note}};
        out << line.dump() << "\n";
    }
    write_file_atomic(path, out.str());
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& path) {
    std::vector<AnnotationRecord> records;
    size_t lineno = 0;
    for (const std::string& line : split_lines(read_file(path))) {
        ++lineno;
        if (trim(line).empty()) {
            continue;
        }
        json parsed;
        try {
            parsed = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(std::string("bad annotation record: ") + e.what(),
                             "line " + std::to_string(lineno));
        }
        AnnotationRecord record;
        record.sample_id = parsed.at("sample_id").get<std::string>();
        std::string cat = parsed.at("category").get<std::string>();
        if (cat == "LR") record.category = AnnotationCategory::LR;
        else if (cat == "L_notR") record.category = AnnotationCategory::L_notR;
        else if (cat == "notL_R") record.category = AnnotationCategory::notL_R;
        else if (cat == "notL_notR") record.category = AnnotationCategory::notL_notR;
        else throw ParseError("unknown category: " + cat, "line " + std::to_string(lineno));
        record.annotator = parsed.value("annotator", "");
        record.note = parsed.value("note", "");
        records.push_back(std::move(record));
    }
    return records;
}

}  // namespace vulnbench::verdict
