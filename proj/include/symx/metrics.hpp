#pragma once

#include <array>
#include <span>
#include <utility>
#include <vector>

#include "symx/corpus.hpp"
#include "symx/errors.hpp"

namespace symx {

/// 3x3 confusion matrix over {-1, 0, 1}, indexed (gold, predicted).
class ConfusionMatrix3 {
public:
    static int index(Label l) { return static_cast<int>(l) + 1; }

    void add(Label gold, Label predicted, long n = 1) {
        counts_[index(gold)][index(predicted)] += n;
    }

    long at(Label gold, Label predicted) const {
        return counts_[index(gold)][index(predicted)];
    }

    long total() const {
        long t = 0;
        for (const auto& row : counts_)
            for (long c : row) t += c;
        return t;
    }

    long trace() const {
        return counts_[0][0] + counts_[1][1] + counts_[2][2];
    }

    bool operator==(const ConfusionMatrix3&) const = default;

private:
    std::array<std::array<long, 3>, 3> counts_{};
};

struct MetricSet {
    double accuracy = 0.0;
    double precision_weighted = 0.0;
    double recall_weighted = 0.0;
    double f1_weighted = 0.0;
    long support = 0;
};

ConfusionMatrix3 tally(std::span<const std::pair<Label, Label>> pairs);

/// Accuracy plus support-weighted one-vs-rest precision/recall/F1.
/// Classes with a zero denominator contribute 0. Throws EmptyMatrix.
MetricSet compute_metrics(const ConfusionMatrix3& m);

enum class AverageMode { SymptomMean, SupportWeighted };

/// Cross-symptom average; SymptomMean is the plain arithmetic mean
/// used for the report's average row. Throws EmptyList.
MetricSet aggregate(std::span<const MetricSet> per_symptom,
                    AverageMode mode = AverageMode::SymptomMean);

} // namespace symx
