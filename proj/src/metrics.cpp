// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#include "cxr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <vector>

#include "cxr/error.hpp"

namespace cxr {

std::string_view label_name(Label label) {
    switch (label) {
    case Label::kNormal: return "normal";
    case Label::kPneumonia: return "pneumonia";
    case Label::kUnlabeled: return "unlabeled";
    }
    return "unlabeled";
}

std::optional<Label> label_from_name(std::string_view name) {
    if (name == "normal" || name == "Normal" || name == "NORMAL" || name == "0") return Label::kNormal;
    if (name == "pneumonia" || name == "Pneumonia" || name == "PNEUMONIA" || name == "1") return Label::kPneumonia;
    if (name == "unlabeled") return Label::kUnlabeled;
    return std::nullopt;
}

std::uint64_t ConfusionMatrix::total() const {
    return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

ConfusionMatrix ConfusionMatrix::from_counts(std::uint64_t nn, std::uint64_t np, std::uint64_t pn, std::uint64_t pp) {
    ConfusionMatrix cm;
    cm.counts = {{{nn, np}, {pn, pp}}};
    return cm;
}

ConfusionMatrix confusion(std::span<const Label> labels, std::span<const Label> predictions) {
    require(labels.size() == predictions.size(), ErrorCode::kInvalidArgument,
            "labels and predictions differ in length (" + std::to_string(labels.size()) + " vs " +
                std::to_string(predictions.size()) + ")");
    require(!labels.empty(), ErrorCode::kInvalidArgument, "no samples to evaluate");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        require(labels[i] != Label::kUnlabeled && predictions[i] != Label::kUnlabeled, ErrorCode::kInvalidArgument,
                "unlabeled sample at index " + std::to_string(i));
        ++cm.counts[class_index(labels[i])][class_index(predictions[i])];
    }
    return cm;
}

ClassificationReport report(const ConfusionMatrix& cm) {
    require(cm.total() > 0, ErrorCode::kInvalidArgument, "empty confusion matrix");
    ClassificationReport r;
    r.total = cm.total();
    for (std::size_t c = 0; c < 2; ++c) {
        auto& m = r.per_class[c];
        std::uint64_t tp = cm.counts[c][c];
        std::uint64_t predicted = cm.counts[0][c] + cm.counts[1][c];
        std::uint64_t actual = cm.counts[c][0] + cm.counts[c][1];
        m.support = actual;
        m.precision_undefined = predicted == 0;
        m.recall_undefined = actual == 0;
        m.precision = predicted ? static_cast<double>(tp) / predicted : 0.0;
        m.recall = actual ? static_cast<double>(tp) / actual : 0.0;
        m.f1 = f_beta(m.precision, m.recall, 1.0);
    }
    r.accuracy = static_cast<double>(cm.correct()) / r.total;

    auto& macro = r.macro_avg;
    auto& weighted = r.weighted_avg;
    macro.support = weighted.support = r.total;
    for (const auto& m : r.per_class) {
        double wgt = static_cast<double>(m.support) / r.total;
        macro.precision += m.precision / 2.0;
        macro.recall += m.recall / 2.0;
        macro.f1 += m.f1 / 2.0;
        weighted.precision += m.precision * wgt;
        weighted.recall += m.recall * wgt;
        weighted.f1 += m.f1 * wgt;
        macro.precision_undefined = macro.precision_undefined || m.precision_undefined;
        macro.recall_undefined = macro.recall_undefined || m.recall_undefined;
    }
    weighted.precision_undefined = macro.precision_undefined;
    weighted.recall_undefined = macro.recall_undefined;
    return r;
}

double f_beta(double precision, double recall, double beta) {
    require(std::isfinite(beta) && beta > 0.0, ErrorCode::kInvalidArgument, "beta must be > 0");
    const double b2 = beta * beta;
    const double denom = b2 * precision + recall;
    if (denom <= 0.0) return 0.0;
    return (1.0 + b2) * precision * recall / denom;
}

double roc_auc(std::span<const double> scores, std::span<const Label> labels) {
    require(scores.size() == labels.size(), ErrorCode::kInvalidArgument, "scores and labels differ in length");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

    // Mann-Whitney U from average ranks; tied groups share their mean rank,
    // which is the half-credit rule.
    double positive_rank_sum = 0.0;
    std::uint64_t pos = 0, neg = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            Label l = labels[order[t]];
            require(l != Label::kUnlabeled, ErrorCode::kInvalidArgument, "unlabeled sample in AUC input");
            if (l == Label::kPneumonia) {
                positive_rank_sum += avg_rank;
                ++pos;
            } else {
                ++neg;
            }
        }
        i = j;
    }
    require(pos > 0 && neg > 0, ErrorCode::kInvalidArgument, "AUC is undefined unless both classes are present");
    double u = positive_rank_sum - static_cast<double>(pos) * (pos + 1) / 2.0;
    return u / (static_cast<double>(pos) * static_cast<double>(neg));
}

namespace {

std::string pct(double v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.0f", v * 100.0);
    return buf;
}

std::string row(const std::string& name, const std::string& p, const std::string& r, const std::string& f,
                std::uint64_t support) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-14s%10s%10s%10s%10llu\n", name.c_str(), p.c_str(), r.c_str(), f.c_str(),
                  static_cast<unsigned long long>(support));
    return buf;
}

void kv_class(std::string& out, const std::string& prefix, const ClassMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s.precision=%.17g\n%s.recall=%.17g\n%s.f1=%.17g\n%s.support=%llu\n",
                  prefix.c_str(), m.precision, prefix.c_str(), m.recall, prefix.c_str(), m.f1, prefix.c_str(),
                  static_cast<unsigned long long>(m.support));
    out += buf;
    if (m.precision_undefined) out += prefix + ".precision_undefined=1\n";
    if (m.recall_undefined) out += prefix + ".recall_undefined=1\n";
}

}  // namespace

std::string render_report_text(const ClassificationReport& r) {
    char head[128];
    std::snprintf(head, sizeof head, "%-14s%10s%10s%10s%10s\n", "", "precision", "recall", "f1-score", "support");
    std::string out = head;
    out += row("Normal", pct(r.normal().precision), pct(r.normal().recall), pct(r.normal().f1), r.normal().support);
    out += row("Pneumonia", pct(r.pneumonia().precision), pct(r.pneumonia().recall), pct(r.pneumonia().f1),
               r.pneumonia().support);
    out += "\n";
    out += row("accuracy", "", "", pct(r.accuracy), r.total);
    out += row("macro avg", pct(r.macro_avg.precision), pct(r.macro_avg.recall), pct(r.macro_avg.f1), r.total);
    out += row("weighted avg", pct(r.weighted_avg.precision), pct(r.weighted_avg.recall), pct(r.weighted_avg.f1),
               r.total);
    return out;
}

std::string render_report_kv(const ClassificationReport& r) {
    std::string out;
    kv_class(out, "normal", r.normal());
    kv_class(out, "pneumonia", r.pneumonia());
    char buf[64];
    std::snprintf(buf, sizeof buf, "accuracy=%.17g\n", r.accuracy);
    out += buf;
    kv_class(out, "macro_avg", r.macro_avg);
    kv_class(out, "weighted_avg", r.weighted_avg);
    return out;
}

}  // namespace cxr
