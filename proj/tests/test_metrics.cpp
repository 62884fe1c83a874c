#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <map>
#include <random>

#include "vulnbench/common.hpp"
#include "vulnbench/metrics.hpp"

using namespace vulnbench;
using metrics::ConfusionCounts;
using metrics::MetricSet;

namespace {

// Independent formula evaluation used as the duplicate-implementation oracle.
struct OracleMetrics {
    double acc, precision, recall, f1, fpr, fnr;
    bool precision_ok, recall_ok, f1_ok, fpr_ok, fnr_ok;
};

OracleMetrics oracle(long tp, long fp, long tn, long fn) {
    OracleMetrics m{};
    double total = static_cast<double>(tp + fp + tn + fn);
    m.acc = (tp + tn) / total;
    m.precision_ok = tp + fp > 0 || tp == 0;
    m.precision = tp + fp > 0 ? tp / static_cast<double>(tp + fp) : 0.0;
    m.recall_ok = tp + fn > 0 || tp == 0;
    m.recall = tp + fn > 0 ? tp / static_cast<double>(tp + fn) : 0.0;
    m.f1_ok = 2 * tp + fp + fn > 0 || tp == 0;
    m.f1 = 2 * tp + fp + fn > 0 ? 2.0 * tp / static_cast<double>(2 * tp + fp + fn) : 0.0;
    m.fpr_ok = fp + tn > 0;
    m.fpr = m.fpr_ok ? fp / static_cast<double>(fp + tn) : 0.0;
    m.fnr_ok = fn + tp > 0;
    m.fnr = m.fnr_ok ? fn / static_cast<double>(fn + tp) : 0.0;
    return m;
}

ConfusionCounts counts(long tp, long fp, long tn, long fn, long ap = 0, long an = 0) {
    ConfusionCounts c;
    c.tp = tp;
    c.fp = fp;
    c.tn = tn;
    c.fn = fn;
    c.abstain_pos = ap;
    c.abstain_neg = an;
    return c;
}

// Published analyzer rows: counts plus the rounded values and the decimals
// each column was printed with.
struct PublishedRow {
    const char* tool;
    int cwe;
    long tp, fp, tn, fn;
    double acc, prec, rec, f1, fpr, fnr;
    int d_acc, d_prec, d_rec, d_f1, d_fpr, d_fnr;
};

const PublishedRow kPublishedRows[] = {
    {"CodeGuru", 190, 0, 0, 38, 38, 0.50, 0.0, 0.0, 0.00, 0.000, 1.000, 2, 1, 1, 2, 3, 3},
    {"CodeGuru", 416, 0, 0, 57, 57, 0.50, 0.0, 0.0, 0.00, 0.000, 1.000, 2, 1, 1, 2, 3, 3},
    {"CodeGuru", 78, 6, 9, 86, 89, 0.48, 0.4, 0.063, 0.11, 0.095, 0.937, 2, 1, 3, 2, 3, 3},
    {"CodeGuru", 476, 1, 0, 70, 69, 0.51, 1.0, 0.014, 0.03, 0.000, 0.986, 2, 1, 3, 2, 3, 3},
    {"Semgrep", 190, 0, 0, 38, 38, 0.50, 0.0, 0.0, 0.00, 0.000, 1.000, 2, 1, 1, 2, 3, 3},
    {"Semgrep", 416, 0, 0, 57, 57, 0.50, 0.0, 0.0, 0.00, 0.000, 1.000, 2, 1, 1, 2, 3, 3},
    {"Semgrep", 78, 4, 1, 94, 91, 0.52, 0.8, 0.04, 0.08, 0.010, 0.957, 2, 1, 2, 2, 3, 3},
    {"Semgrep", 476, 0, 2, 68, 70, 0.49, 0.0, 0.0, 0.00, 0.028, 1.000, 2, 1, 1, 2, 3, 3},
    {"SonarQube", 190, 0, 0, 38, 38, 0.50, 0.0, 0.0, 0.00, 0.000, 1.000, 2, 1, 1, 2, 3, 3},
    {"SonarQube", 416, 0, 0, 57, 57, 0.50, 0.0, 0.0, 0.00, 0.000, 1.000, 2, 1, 1, 2, 3, 3},
    {"SonarQube", 78, 0, 0, 95, 95, 0.50, 0.0, 0.0, 0.00, 0.000, 1.000, 2, 1, 1, 2, 3, 3},
    {"SonarQube", 476, 0, 0, 70, 70, 0.50, 0.0, 0.0, 0.00, 0.000, 1.000, 2, 1, 1, 2, 3, 3},
    {"CodeQL", 78, 0, 0, 95, 95, 0.50, 0.0, 0.0, 0.00, 0.000, 1.000, 2, 1, 1, 2, 3, 3},
};

bool close_after_rounding(double computed, double published, int decimals) {
    return std::abs(round_to(computed, decimals) - published) <= 0.005 + 1e-12;
}

}  // namespace

TEST_CASE("analyzer table rows reproduce from raw counts") {
    for (const PublishedRow& row : kPublishedRows) {
        CAPTURE(row.tool);
        CAPTURE(row.cwe);
        MetricSet m = metrics::compute_metrics(counts(row.tp, row.fp, row.tn, row.fn));
        REQUIRE(m.acc.has_value());
        CHECK(close_after_rounding(*m.acc, row.acc, row.d_acc));
        CHECK(close_after_rounding(m.precision.value(), row.prec, row.d_prec));
        CHECK(close_after_rounding(m.recall.value(), row.rec, row.d_rec));
        CHECK(close_after_rounding(m.f1.value(), row.f1, row.d_f1));
        CHECK(close_after_rounding(m.fpr.value(), row.fpr, row.d_fpr));
        CHECK(close_after_rounding(m.fnr.value(), row.fnr, row.d_fnr));
    }
}

TEST_CASE("zero-tp rows take the defined 0 values") {
    MetricSet m = metrics::compute_metrics(counts(0, 0, 38, 38));
    CHECK(*m.acc == doctest::Approx(0.50));
    CHECK(*m.precision == 0.0);
    CHECK(*m.recall == 0.0);
    CHECK(*m.f1 == 0.0);
    CHECK(*m.fnr == doctest::Approx(1.0));
}

TEST_CASE("abstentions penalize accuracy but not the rate metrics") {
    // 4 decided + 2 abstains: acc over 6, rates over the decided 4
    MetricSet m = metrics::compute_metrics(counts(2, 1, 1, 0, 1, 1));
    CHECK(*m.acc == doctest::Approx(3.0 / 6.0));
    CHECK(*m.precision == doctest::Approx(2.0 / 3.0));
    CHECK(*m.recall == doctest::Approx(1.0));
    CHECK(*m.abstain_rate == doctest::Approx(2.0 / 6.0));
    CHECK(*m.fpr == doctest::Approx(1.0 / 2.0));
    CHECK(*m.fnr == doctest::Approx(0.0));
}

TEST_CASE("empty confusion is an error") {
    CHECK_THROWS_AS(metrics::compute_metrics(ConfusionCounts{}), ValidationError);
}

TEST_CASE("random counts match the independent formula oracle") {
    std::mt19937 rng(20240901);
    std::uniform_int_distribution<long> dist(0, 50);
    for (int i = 0; i < 500; ++i) {
        long tp = dist(rng), fp = dist(rng), tn = dist(rng), fn = dist(rng);
        if (tp + fp + tn + fn == 0) {
            continue;
        }
        MetricSet m = metrics::compute_metrics(counts(tp, fp, tn, fn));
        OracleMetrics o = oracle(tp, fp, tn, fn);
        CHECK(*m.acc == doctest::Approx(o.acc));
        if (o.precision_ok) CHECK(m.precision.value() == doctest::Approx(o.precision));
        if (o.recall_ok) CHECK(m.recall.value() == doctest::Approx(o.recall));
        if (o.f1_ok) CHECK(m.f1.value() == doctest::Approx(o.f1));
        CHECK(m.fpr.has_value() == o.fpr_ok);
        if (o.fpr_ok) CHECK(*m.fpr == doctest::Approx(o.fpr));
        CHECK(m.fnr.has_value() == o.fnr_ok);
        if (o.fnr_ok) CHECK(*m.fnr == doctest::Approx(o.fnr));
        if (o.recall_ok && o.fnr_ok) {
            CHECK(m.recall.value() + m.fnr.value() == doctest::Approx(1.0));
        }
    }
}

namespace {

corpus::SamplePair make_pair(int index) {
    corpus::SamplePair pair;
    pair.pair_id = "p" + std::to_string(index);
    pair.vulnerable_id = "v" + std::to_string(index);
    pair.fixed_id = "f" + std::to_string(index);
    return pair;
}

}  // namespace

TEST_CASE("pairwise accuracy over the three canonical pair outcomes") {
    std::vector<corpus::SamplePair> pairs = {make_pair(1), make_pair(2), make_pair(3)};
    std::map<std::string, verdict::VerdictValue> verdicts = {
        // pair 1: vulnerable right, fixed wrong -> incorrect
        {"v1", verdict::VerdictValue::vulnerable},
        {"f1", verdict::VerdictValue::vulnerable},
        // pair 2: vulnerable wrong -> incorrect
        {"v2", verdict::VerdictValue::non_vulnerable},
        {"f2", verdict::VerdictValue::non_vulnerable},
        // pair 3: both right -> correct
        {"v3", verdict::VerdictValue::vulnerable},
        {"f3", verdict::VerdictValue::non_vulnerable},
    };
    auto result = metrics::pairwise_accuracy(pairs, verdicts);
    REQUIRE(result.has_value());
    CHECK(*result == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("pairwise accuracy: abstain fails the pair, empty list is undefined") {
    std::vector<corpus::SamplePair> pairs = {make_pair(1)};
    std::map<std::string, verdict::VerdictValue> verdicts = {
        {"v1", verdict::VerdictValue::vulnerable},
        {"f1", verdict::VerdictValue::abstain},
    };
    CHECK(*metrics::pairwise_accuracy(pairs, verdicts) == 0.0);
    CHECK_FALSE(metrics::pairwise_accuracy({}, verdicts).has_value());
    std::map<std::string, verdict::VerdictValue> missing = {
        {"v1", verdict::VerdictValue::vulnerable}};
    CHECK_THROWS_AS(metrics::pairwise_accuracy(pairs, missing), ValidationError);
}

TEST_CASE("pairwise accuracy equals brute force on random paired slices") {
    std::mt19937 rng(77);
    std::uniform_int_distribution<int> pair_count(1, 50);
    std::uniform_int_distribution<int> verdict_die(0, 2);
    auto roll = [&]() {
        switch (verdict_die(rng)) {
            case 0: return verdict::VerdictValue::vulnerable;
            case 1: return verdict::VerdictValue::non_vulnerable;
            default: return verdict::VerdictValue::abstain;
        }
    };
    for (int round = 0; round < 200; ++round) {
        int n = pair_count(rng);
        std::vector<corpus::SamplePair> pairs;
        std::map<std::string, verdict::VerdictValue> verdicts;
        for (int i = 0; i < n; ++i) {
            pairs.push_back(make_pair(i));
            verdicts[pairs.back().vulnerable_id] = roll();
            verdicts[pairs.back().fixed_id] = roll();
        }
        long correct = 0;
        for (const corpus::SamplePair& pair : pairs) {
            if (verdicts[pair.vulnerable_id] == verdict::VerdictValue::vulnerable &&
                verdicts[pair.fixed_id] == verdict::VerdictValue::non_vulnerable) {
                ++correct;
            }
        }
        double expected = static_cast<double>(correct) / n;
        CHECK(*metrics::pairwise_accuracy(pairs, verdicts) == doctest::Approx(expected));
    }
}

TEST_CASE("trial averaging is metric-level") {
    MetricSet a, b, c;
    a.acc = 0.5; a.pairwise_acc = 0.4;
    b.acc = 0.6; b.pairwise_acc = 0.5;
    c.acc = 0.7; c.pairwise_acc = 0.6;
    auto aggregate = metrics::average_trials({a, b, c});
    CHECK(aggregate.trial_count == 3);
    CHECK(*aggregate.mean.acc == doctest::Approx(0.6));
    CHECK(*aggregate.mean.pairwise_acc == doctest::Approx(0.5));

    auto same = metrics::average_trials({a, a, a});
    CHECK(*same.mean.acc == doctest::Approx(*a.acc));
    CHECK(*same.mean.pairwise_acc == doctest::Approx(*a.pairwise_acc));

    MetricSet undefined_pair;
    undefined_pair.acc = 0.5;
    CHECK_THROWS_AS(metrics::average_trials({a, undefined_pair}), ValidationError);
    CHECK_THROWS_AS(metrics::average_trials({}), ValidationError);
}

TEST_CASE("delta arithmetic in percentage points") {
    MetricSet subject, baseline;
    subject.pairwise_acc = 0.604;
    baseline.pairwise_acc = 0.491;
    CHECK(round_to(metrics::delta_metric(subject, baseline, "pairwise_acc"), 1) ==
          doctest::Approx(11.3));

    MetricSet fnr_subject, fnr_sa;
    fnr_subject.fnr = 0.624;
    fnr_sa.fnr = 1.000;
    double d = metrics::delta_metric(fnr_subject, fnr_sa, "fnr");
    CHECK(round_to(d, 1) == doctest::Approx(-37.6));
    CHECK(metrics::delta_is_improvement("fnr", d));
    CHECK_FALSE(metrics::delta_is_improvement("pairwise_acc", -1.0));

    auto deltas = metrics::delta(subject, subject);
    CHECK(*deltas.pairwise_acc == doctest::Approx(0.0));
    CHECK_FALSE(deltas.acc.has_value());
    CHECK_THROWS_AS(metrics::delta_metric(subject, baseline, "acc"), ValidationError);
}

TEST_CASE("consistency notes flag impossible balanced rows") {
    MetricSet consistent;
    consistent.acc = 0.604;
    consistent.fnr = 0.396;
    consistent.fpr = 0.396;
    CHECK(metrics::consistency_notes(consistent, true).empty());

    // a row claiming acc 0.80 alongside 39.6/39.6 rates cannot be balanced
    MetricSet inconsistent = consistent;
    inconsistent.acc = 0.80;
    auto notes = metrics::consistency_notes(inconsistent, true);
    REQUIRE_FALSE(notes.empty());
    CHECK(notes.front().find("inconsistent") != std::string::npos);

    // unbalanced slices are not held to the identity
    CHECK(metrics::consistency_notes(inconsistent, false).empty());
}

TEST_CASE("reference tokenizer") {
    CHECK(metrics::count_tokens("") == 0);
    // int | a | = | 0 | ; | terminal group
    CHECK(metrics::count_tokens("int a = 0;") == 6);
    CHECK(metrics::count_tokens("int a = 0;") == metrics::count_tokens("int a = 0;"));
    CHECK_THROWS_AS(metrics::count_tokens("x", "no-such-tokenizer"), ValidationError);

    metrics::register_tokenizer("halved", [](const std::string& text) {
        return text.size() / 2;
    });
    CHECK(metrics::count_tokens("abcdef", "halved") == 3);
}

TEST_CASE("tokenizer is additive over newline-joined fragments") {
    std::string a = "void f(int x)";
    std::string b = "return x + 1;";
    size_t terminal = 1;
    CHECK(metrics::count_tokens(a + "\n" + b) ==
          metrics::count_tokens(a) - terminal + metrics::count_tokens(b));
}
