// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "cxr/labels.hpp"

namespace cxr {

struct ConfusionMatrix {
    // counts[actual][predicted] over {Normal, Pneumonia}.
    std::array<std::array<std::uint64_t, 2>, 2> counts{};

    std::uint64_t total() const;
    std::uint64_t correct() const { return counts[0][0] + counts[1][1]; }

    static ConfusionMatrix from_counts(std::uint64_t normal_as_normal, std::uint64_t normal_as_pneumonia,
                                       std::uint64_t pneumonia_as_normal, std::uint64_t pneumonia_as_pneumonia);
};

ConfusionMatrix confusion(std::span<const Label> labels, std::span<const Label> predictions);

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::uint64_t support = 0;
    // Set when the corresponding denominator was zero and the value was
    // reported as 0.
    bool precision_undefined = false;
    bool recall_undefined = false;
};

struct ClassificationReport {
    std::array<ClassMetrics, 2> per_class{};
    double accuracy = 0.0;
    ClassMetrics macro_avg;
    ClassMetrics weighted_avg;
    std::uint64_t total = 0;

    const ClassMetrics& normal() const { return per_class[0]; }
    const ClassMetrics& pneumonia() const { return per_class[1]; }
};

ClassificationReport report(const ConfusionMatrix& cm);

// (1 + b^2) P R / (b^2 P + R); 0 when the denominator is 0.
double f_beta(double precision, double recall, double beta);

// Area under the ROC curve with Pneumonia as the positive class; ties in
// score earn half credit.
double roc_auc(std::span<const double> scores, std::span<const Label> labels);

// Aligned plain-text table: per class, accuracy, macro avg, weighted avg,
// rates as whole percentages.
std::string render_report_text(const ClassificationReport& r);
// key=value lines with full-precision values.
std::string render_report_kv(const ClassificationReport& r);

}  // namespace cxr
