#include "symx/metrics.hpp"

namespace symx {

namespace {
constexpr Label kClasses[] = {Label::Absent, Label::Unknown, Label::Present};
}

ConfusionMatrix3 tally(std::span<const std::pair<Label, Label>> pairs) {
    ConfusionMatrix3 m;
    for (const auto& [gold, pred] : pairs)
        m.add(gold, pred);
    return m;
}

MetricSet compute_metrics(const ConfusionMatrix3& m) {
    const long total = m.total();
    if (total == 0)
        throw EmptyMatrix();

    MetricSet out;
    out.support = total;
    out.accuracy = static_cast<double>(m.trace()) / static_cast<double>(total);

    for (Label c : kClasses) {
        long tp = m.at(c, c);
        long fp = 0, fn = 0, support = 0;
        for (Label other : kClasses) {
            support += m.at(c, other);
            if (other != c) {
                fp += m.at(other, c);
                fn += m.at(c, other);
            }
        }
        double precision = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
        double recall = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
        double f1 = (precision + recall > 0.0)
                        ? 2.0 * precision * recall / (precision + recall)
                        : 0.0;
        double weight = static_cast<double>(support) / static_cast<double>(total);
        out.precision_weighted += weight * precision;
        out.recall_weighted += weight * recall;
        out.f1_weighted += weight * f1;
    }
    return out;
}

MetricSet aggregate(std::span<const MetricSet> per_symptom, AverageMode mode) {
    if (per_symptom.empty())
        throw EmptyList();

    MetricSet out;
    double weight_sum = 0.0;
    for (const auto& m : per_symptom) {
        double w = (mode == AverageMode::SupportWeighted)
                       ? static_cast<double>(m.support)
                       : 1.0;
        out.accuracy += w * m.accuracy;
        out.precision_weighted += w * m.precision_weighted;
        out.recall_weighted += w * m.recall_weighted;
        out.f1_weighted += w * m.f1_weighted;
        out.support += m.support;
        weight_sum += w;
    }
    if (weight_sum > 0.0) {
        out.accuracy /= weight_sum;
        out.precision_weighted /= weight_sum;
        out.recall_weighted /= weight_sum;
        out.f1_weighted /= weight_sum;
    }
    return out;
}

} // namespace symx
