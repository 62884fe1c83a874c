#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <random>
#include <set>

#include "vulnbench/common.hpp"
#include "vulnbench/verdict.hpp"

using namespace vulnbench;
using verdict::ParseRule;
using verdict::VerdictValue;

TEST_CASE("final line phrases") {
    auto parsed = verdict::parse_response("The example is non-vulnerable.", false);
    CHECK(parsed.verdict == VerdictValue::non_vulnerable);
    CHECK(parsed.rule_used == ParseRule::final_line);

    parsed = verdict::parse_response("Looking at the sink...\nThe example is vulnerable.", false);
    CHECK(parsed.verdict == VerdictValue::vulnerable);
    CHECK(parsed.rule_used == ParseRule::final_line);
    CHECK(parsed.rationale == "Looking at the sink...");
}

TEST_CASE("answer tags win under tag mode") {
    std::string text = "Reasoning about the example...\n<answer>vulnerable</answer>\nthanks";
    auto parsed = verdict::parse_response(text, true);
    CHECK(parsed.verdict == VerdictValue::vulnerable);
    CHECK(parsed.rule_used == ParseRule::answer_tag);

    // the LAST tag pair decides
    std::string two = "<answer>vulnerable</answer> ... <answer>non-vulnerable</answer>";
    CHECK(verdict::parse_response(two, true).verdict == VerdictValue::non_vulnerable);

    // without tag mode the tag content is just text; final line has no phrase,
    // so the body scan decides
    auto untagged = verdict::parse_response(text, false);
    CHECK(untagged.rule_used == ParseRule::body_scan);
}

TEST_CASE("negated forms never misfire as vulnerable") {
    for (const char* text : {
             "This is non-vulnerable.",
             "this is NON-VULNERABLE",
             "The function is non vulnerable.",
             "Verdict: not vulnerable",
             "It is nonvulnerable.",
             "non_vulnerable",
         }) {
        CAPTURE(text);
        auto parsed = verdict::parse_response(text, false);
        CHECK(parsed.verdict == VerdictValue::non_vulnerable);
    }
    // word-boundary: "invulnerable" is not a verdict phrase
    CHECK(verdict::parse_response("The fortress is invulnerable.", false).verdict ==
          VerdictValue::abstain);
}

TEST_CASE("contradiction and absence both abstain") {
    auto both = verdict::parse_response(
        "It might be vulnerable; then again it is non-vulnerable", false);
    CHECK(both.verdict == VerdictValue::abstain);
    // contradiction detected within the final-line scope, rule recorded
    CHECK(both.rule_used == ParseRule::final_line);

    auto nothing = verdict::parse_response("I cannot tell anything about this code.", false);
    CHECK(nothing.verdict == VerdictValue::abstain);
    CHECK(nothing.rule_used == ParseRule::none);

    auto empty = verdict::parse_response("", false);
    CHECK(empty.verdict == VerdictValue::abstain);
    CHECK(empty.rule_used == ParseRule::none);
}

TEST_CASE("body scan is the fallback scope") {
    std::string text = "The code is vulnerable to injection.\nMore discussion follows.\nBye.";
    auto parsed = verdict::parse_response(text, false);
    CHECK(parsed.verdict == VerdictValue::vulnerable);
    CHECK(parsed.rule_used == ParseRule::body_scan);
    CHECK(parsed.rationale.find("vulnerable") == std::string::npos);
}

TEST_CASE("rule_used none iff abstain, except recorded contradictions") {
    for (const char* text : {
             "The example is non-vulnerable.",
             "vulnerable",
             "no idea",
             "it is vulnerable and also non-vulnerable",
             "<answer>non-vulnerable</answer>",
         }) {
        for (bool tag_mode : {false, true}) {
            auto parsed = verdict::parse_response(text, tag_mode);
            if (parsed.rule_used == ParseRule::none) {
                CHECK(parsed.verdict == VerdictValue::abstain);
            } else if (parsed.verdict == VerdictValue::abstain) {
                // contradiction: detecting rule recorded
                CHECK(parsed.rule_used != ParseRule::none);
            }
        }
    }
}

TEST_CASE("fuzzed planted phrases parse without misfires") {
    std::mt19937 rng(4242);
    std::vector<std::string> negatives = {"non-vulnerable", "not vulnerable", "non vulnerable"};
    std::vector<std::string> prefixes = {"The example is ", "Verdict: ", "My analysis says ",
                                         "After checking every sink, it is ",
                                         "I believe this sample is "};
    std::vector<std::string> suffixes = {".", "", " overall.", " based on the tests."};
    std::vector<std::string> fillers = {
        "The function reads input from a file.",
        "There is a bounds check on line 3.",
        "Command construction happens in the sink.",
        "No sanitizer is visible in this fragment.",
    };
    std::uniform_int_distribution<size_t> pick_prefix(0, prefixes.size() - 1);
    std::uniform_int_distribution<size_t> pick_suffix(0, suffixes.size() - 1);
    std::uniform_int_distribution<size_t> pick_filler(0, fillers.size() - 1);
    std::uniform_int_distribution<size_t> pick_negative(0, negatives.size() - 1);
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> filler_lines(0, 3);

    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
        bool plant_negative = coin(rng) == 1;
        std::string phrase = plant_negative ? negatives[pick_negative(rng)] : "vulnerable";
        std::string sentence = prefixes[pick_prefix(rng)] + phrase + suffixes[pick_suffix(rng)];
        std::string text;
        int lines = filler_lines(rng);
        for (int l = 0; l < lines; ++l) {
            text += fillers[pick_filler(rng)] + "\n";
        }
        text += sentence;
        auto parsed = verdict::parse_response(text, false);
        if (plant_negative) {
            // a planted negated phrase must never read as vulnerable
            REQUIRE(parsed.verdict == VerdictValue::non_vulnerable);
        } else {
            REQUIRE(parsed.verdict == VerdictValue::vulnerable);
        }
        ++checked;
    }
    CHECK(checked == 1000);
}

TEST_CASE("scoring is total and keeps truth polarity for abstentions") {
    using corpus::Label;
    using verdict::Outcome;
    CHECK(verdict::score(VerdictValue::vulnerable, Label::vulnerable) == Outcome::tp);
    CHECK(verdict::score(VerdictValue::vulnerable, Label::non_vulnerable) == Outcome::fp);
    CHECK(verdict::score(VerdictValue::non_vulnerable, Label::non_vulnerable) == Outcome::tn);
    CHECK(verdict::score(VerdictValue::non_vulnerable, Label::vulnerable) == Outcome::fn);
    CHECK(verdict::score(VerdictValue::abstain, Label::vulnerable) == Outcome::abstain_pos);
    CHECK(verdict::score(VerdictValue::abstain, Label::non_vulnerable) == Outcome::abstain_neg);

    // the six outcomes partition VerdictValue x Label
    std::set<verdict::Outcome> seen;
    for (auto v : {VerdictValue::vulnerable, VerdictValue::non_vulnerable, VerdictValue::abstain}) {
        for (auto t : {Label::vulnerable, Label::non_vulnerable}) {
            seen.insert(verdict::score(v, t));
        }
    }
    CHECK(seen.size() == 6);
}

TEST_CASE("annotation categories") {
    using verdict::AnnotationCategory;
    CHECK(verdict::category_from_flags(true, true) == AnnotationCategory::LR);
    CHECK(verdict::category_from_flags(true, false) == AnnotationCategory::L_notR);
    CHECK(verdict::category_from_flags(false, true) == AnnotationCategory::notL_R);
    CHECK(verdict::category_from_flags(false, false) == AnnotationCategory::notL_notR);

    std::set<std::string> known = {"s-1", "s-2"};
    auto record = verdict::annotate(known, "s-1", true, false, "reviewer-a", "right label");
    CHECK(record.category == AnnotationCategory::L_notR);
    CHECK_THROWS_AS(verdict::annotate(known, "s-404", true, true, "reviewer-a", ""),
                    ValidationError);
}

TEST_CASE("annotation store round-trips and counts add up") {
    std::set<std::string> known;
    std::vector<verdict::AnnotationRecord> records;
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int i = 0; i < 46; ++i) {
        std::string id = "s-" + std::to_string(i);
        known.insert(id);
        records.push_back(
            verdict::annotate(known, id, coin(rng) == 1, coin(rng) == 1, "reviewer-b", ""));
    }
    auto path = std::filesystem::temp_directory_path() / "vulnbench_annotations.jsonl";
    verdict::save_annotations(records, path);
    auto loaded = verdict::load_annotations(path);
    REQUIRE(loaded.size() == 46);
    std::map<verdict::AnnotationCategory, int> histogram;
    for (const auto& record : loaded) {
        histogram[record.category] += 1;
    }
    int total = 0;
    for (const auto& [category, count] : histogram) {
        total += count;
    }
    CHECK(total == 46);
    std::filesystem::remove(path);
}
