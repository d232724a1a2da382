// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include <doctest.h>

#include <cmath>

#include "cxr/error.hpp"
#include "cxr/metrics.hpp"
#include "cxr/random.hpp"

using namespace cxr;

namespace {

// Pairwise oracle: share of (positive, negative) pairs ranked correctly,
// ties counting half.
double auc_oracle(const std::vector<double>& s, const std::vector<Label>& y) {
    double good = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (y[i] != Label::kPneumonia) continue;
        for (std::size_t j = 0; j < s.size(); ++j) {
            if (y[j] != Label::kNormal) continue;
            pairs += 1;
            good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
        }
    }
    return good / pairs;
}

int pct(double v) { return static_cast<int>(std::lround(v * 100)); }

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("reconstructed classification report") {
    auto cm = ConfusionMatrix::from_counts(185, 49, 12, 378);
    CHECK(cm.total() == 624);
    auto r = report(cm);
    struct Row {
        const ClassMetrics& m;
        int p, rc, f1;
        std::uint64_t support;
    };
    for (const Row& row : {Row{r.normal(), 95, 79, 86, 234}, Row{r.pneumonia(), 88, 97, 93, 390},
                           Row{r.macro_avg, 92, 88, 89, 624}, Row{r.weighted_avg, 91, 90, 90, 624}}) {
        CHECK(std::abs(pct(row.m.precision) - row.p) <= 1);
        CHECK(std::abs(pct(row.m.recall) - row.rc) <= 1);
        CHECK(std::abs(pct(row.m.f1) - row.f1) <= 1);
        CHECK(row.m.support == row.support);
    }
    CHECK(std::abs(pct(r.accuracy) - 90) <= 1);
    CHECK(r.pneumonia().precision == doctest::Approx(378.0 / 427.0));
    CHECK(r.normal().recall == doctest::Approx(185.0 / 234.0));
    CHECK(r.weighted_avg.recall == doctest::Approx(r.accuracy));
}

TEST_CASE("weighted recall equals accuracy on random matrices") {
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
        auto cm = ConfusionMatrix::from_counts(rng.below(50) + 1, rng.below(50), rng.below(50), rng.below(50) + 1);
        auto r = report(cm);
        CHECK(r.weighted_avg.recall == doctest::Approx(r.accuracy).epsilon(1e-12));
    }
}

TEST_CASE("zero denominators are flagged") {
    auto r = report(ConfusionMatrix::from_counts(10, 0, 5, 0));
    CHECK(r.pneumonia().precision == 0.0);
    CHECK(r.pneumonia().precision_undefined);
    CHECK(r.pneumonia().recall == 0.0);
    CHECK_FALSE(r.pneumonia().recall_undefined);
    CHECK_FALSE(r.normal().precision_undefined);
}

TEST_CASE("confusion from label lists") {
    std::vector<Label> y{Label::kNormal, Label::kNormal, Label::kPneumonia, Label::kPneumonia};
    std::vector<Label> p{Label::kNormal, Label::kPneumonia, Label::kPneumonia, Label::kPneumonia};
    auto cm = confusion(y, p);
    CHECK(cm.counts[0][0] == 1);
    CHECK(cm.counts[0][1] == 1);
    CHECK(cm.counts[1][1] == 2);
    std::vector<Label> short_p{Label::kNormal};
    CHECK_THROWS_AS(confusion(y, short_p), Error);
}

TEST_CASE("f_beta") {
    CHECK(f_beta(0.5, 0.5, 1) == doctest::Approx(0.5));
    CHECK(f_beta(0.8, 0.6, 1) == 2 * 0.8 * 0.6 / (0.8 + 0.6));
    CHECK(f_beta(0.6, 0.9, 2) == doctest::Approx(5 * 0.6 * 0.9 / (4 * 0.6 + 0.9)));
    // Recall weighs more at beta 2.
    CHECK(f_beta(0.6, 0.9, 2) > f_beta(0.9, 0.6, 2));
    CHECK(f_beta(0.0, 0.0, 2) == 0.0);
    CHECK_THROWS_AS(f_beta(0.5, 0.5, 0), Error);
}

TEST_CASE("roc_auc matches the pairwise oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        std::vector<double> s;
        std::vector<Label> y;
        for (int i = 0; i < 200; ++i) {
            bool pos = rng.coin();
            y.push_back(pos ? Label::kPneumonia : Label::kNormal);
            // Coarse scores force plenty of ties.
            double v = std::round((rng.uniform() + (pos ? 0.3 : 0.0)) * 20) / 20;
            s.push_back(v);
        }
        CHECK(std::abs(roc_auc(s, y) - auc_oracle(s, y)) <= 1e-9);
        std::vector<double> t;
        for (double v : s) t.push_back(std::exp(3 * v) - 7);
        CHECK(std::abs(roc_auc(t, y) - roc_auc(s, y)) <= 1e-12);
    }
}

TEST_CASE("roc_auc edge cases") {
    std::vector<double> s{0.1, 0.9};
    std::vector<Label> one{Label::kNormal, Label::kNormal};
    CHECK_THROWS_AS(roc_auc(s, one), Error);
    std::vector<Label> y{Label::kNormal, Label::kPneumonia};
    CHECK(roc_auc(s, y) == 1.0);
    std::vector<double> flipped{0.9, 0.1};
    CHECK(roc_auc(flipped, y) == 0.0);
}

TEST_CASE("report renderings") {
    auto r = report(ConfusionMatrix::from_counts(185, 49, 12, 378));
    auto text = render_report_text(r);
    CHECK(text.find("Normal") != std::string::npos);
    CHECK(text.find("weighted avg") != std::string::npos);
    CHECK(text.find("624") != std::string::npos);
    auto kv = render_report_kv(r);
    CHECK(kv.find("accuracy=") != std::string::npos);
}

}  // TEST_SUITE
