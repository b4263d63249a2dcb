#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symx/engine.hpp"
#include "symx/metrics.hpp"

namespace symx {

struct EvalOutcome {
    MetricSet metrics;
    std::vector<ClassificationResult> per_note;
};

struct SplitComparison {
    MetricSet initial;
    MetricSet post;
};

struct SymptomReport {
    std::string symptom_id;
    SplitComparison single; // TestSingle split
    SplitComparison multi;  // MultiSymptom split
};

struct EvaluationReport {
    std::vector<SymptomReport> per_symptom; // one row per symptom, corpus order
    SymptomReport averages;                 // arithmetic mean across symptoms
    nlohmann::json metadata;                // prompt versions, config digest
};

struct TrendPoint {
    int epoch = 0;
    double accuracy = 0.0;
};

struct TrendSeries {
    std::string symptom_id;
    std::vector<TrendPoint> points; // best training accuracy at each epoch end
};

/// Classifies every note of `split` labeled for the symptom and scores
/// against gold. Throws NoNotesInSplit.
EvalOutcome evaluate_prompt(const Corpus& corpus, const Gateway& gateway,
                            const std::string& symptom_id, const PromptCandidate& prompt,
                            Split split, int parallelism = 1);

/// Initial-vs-post comparison across both held-out splits for every run.
/// Symptoms without a multi-symptom note get zero-support multi cells.
EvaluationReport compare_runs(const Corpus& corpus, const Gateway& gateway,
                              std::span<const RefinementRun> runs, int parallelism = 1,
                              AverageMode average_mode = AverageMode::SymptomMean);

/// Markdown table: one row per symptom plus the average row, Init/Post
/// pairs for all four metrics on both splits, two-decimal half-up
/// rounding, the better of each Init/Post pair in bold.
std::string export_report_markdown(const EvaluationReport& report);

/// CSV: symptom, split, phase, accuracy, precision_w, recall_w, f1_w, support.
std::string export_report_csv(const EvaluationReport& report);

TrendSeries trend_of(const RefinementRun& run);

/// CSV of per-symptom series plus an AGGREGATE series (mean and stddev
/// across symptoms per epoch, shorter runs carrying their last value
/// forward): symptom, epoch, accuracy, stddev (empty for symptom rows).
std::string export_trends_csv(std::span<const RefinementRun> runs);

/// Two-decimal half-up fixed-point formatting ("0.5667" -> "0.57").
std::string format_round2(double v);

} // namespace symx
