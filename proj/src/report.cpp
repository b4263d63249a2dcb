#include "symx/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace symx {

using nlohmann::json;

std::string format_round2(double v) {
    // Half-up; the epsilon absorbs binary representation error (0.565 is
    // stored as 0.56499...).
    double rounded = std::floor(v * 100.0 + 0.5 + 1e-9) / 100.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", rounded);
    return buf;
}

EvalOutcome evaluate_prompt(const Corpus& corpus, const Gateway& gateway,
                            const std::string& symptom_id, const PromptCandidate& prompt,
                            Split split, int parallelism) {
    auto notes = corpus.notes_for(symptom_id, split);
    if (notes.empty())
        throw NoNotesInSplit("symptom '" + symptom_id + "' has no notes in split '" +
                             split_name(split) + "'");
    const Symptom& symptom = corpus.symptom(symptom_id);

    EvalOutcome out;
    out.per_note = classify_notes(gateway, prompt, symptom, notes, parallelism);
    std::vector<std::pair<Label, Label>> pairs;
    pairs.reserve(notes.size());
    for (size_t i = 0; i < notes.size(); ++i)
        pairs.emplace_back(notes[i]->labels.at(symptom_id), out.per_note[i].predicted);
    out.metrics = compute_metrics(tally(pairs));
    return out;
}

EvaluationReport compare_runs(const Corpus& corpus, const Gateway& gateway,
                              std::span<const RefinementRun> runs, int parallelism,
                              AverageMode average_mode) {
    if (runs.empty())
        throw EmptyList();

    auto find_run = [&](const std::string& symptom_id) -> const RefinementRun& {
        for (const auto& r : runs)
            if (r.symptom_id == symptom_id) return r;
        throw MissingRun(symptom_id);
    };

    auto eval_or_empty = [&](const std::string& symptom_id, const PromptCandidate& prompt,
                              Split split) -> MetricSet {
        if (corpus.notes_for(symptom_id, split).empty())
            return MetricSet{}; // zero-support cell
        return evaluate_prompt(corpus, gateway, symptom_id, prompt, split, parallelism).metrics;
    };

    EvaluationReport report;
    report.metadata = json::object();
    json prompts = json::object();

    // Report rows follow corpus symptom order, restricted to symptoms with runs.
    for (const auto& symptom : corpus.symptoms()) {
        bool has_run = std::any_of(runs.begin(), runs.end(), [&](const RefinementRun& r) {
            return r.symptom_id == symptom.id;
        });
        if (!has_run) continue;
        const RefinementRun& run = find_run(symptom.id);

        PromptCandidate initial{run.initial_prompt, PromptCandidate::Origin::Initial, {}, {}};
        const PromptCandidate& post = run.best_prompt;

        SymptomReport row;
        row.symptom_id = symptom.id;
        row.single.initial = eval_or_empty(symptom.id, initial, Split::TestSingle);
        row.single.post = eval_or_empty(symptom.id, post, Split::TestSingle);
        row.multi.initial = eval_or_empty(symptom.id, initial, Split::Multi);
        row.multi.post = eval_or_empty(symptom.id, post, Split::Multi);
        report.per_symptom.push_back(std::move(row));

        prompts[symptom.id] = {{"initial", run.initial_prompt},
                               {"post", run.best_prompt.text},
                               {"best_accuracy", run.best_accuracy},
                               {"status", run_status_name(run.status)}};
    }
    if (report.per_symptom.empty())
        throw MissingRun("(no run matches any corpus symptom)");

    auto column = [&](auto proj) {
        std::vector<MetricSet> col;
        for (const auto& row : report.per_symptom)
            col.push_back(proj(row));
        return aggregate(col, average_mode);
    };
    report.averages.symptom_id = "Average Score";
    report.averages.single.initial = column([](const SymptomReport& r) { return r.single.initial; });
    report.averages.single.post = column([](const SymptomReport& r) { return r.single.post; });
    report.averages.multi.initial = column([](const SymptomReport& r) { return r.multi.initial; });
    report.averages.multi.post = column([](const SymptomReport& r) { return r.multi.post; });

    report.metadata["prompts"] = std::move(prompts);
    report.metadata["symptoms"] = report.per_symptom.size();
    return report;
}

namespace {

const char* kMetricNames[] = {"Accuracy", "Precision", "Recall", "F1"};

double metric_value(const MetricSet& m, int metric) {
    switch (metric) {
    case 0: return m.accuracy;
    case 1: return m.precision_weighted;
    case 2: return m.recall_weighted;
    default: return m.f1_weighted;
    }
}

// Init/Post cell pair with the better (post wins ties) value bolded.
std::string md_pair(const MetricSet& init, const MetricSet& post, int metric) {
    std::string a = format_round2(metric_value(init, metric));
    std::string b = format_round2(metric_value(post, metric));
    if (std::stod(b) >= std::stod(a))
        return a + " | **" + b + "**";
    return "**" + a + "** | " + b;
}

std::string md_row(const SymptomReport& row, const std::string& name) {
    std::string out = "| " + name + " ";
    for (const auto* split : {&row.single, &row.multi})
        for (int metric = 0; metric < 4; ++metric)
            out += "| " + md_pair(split->initial, split->post, metric) + " ";
    out += "|";
    return out;
}

} // namespace

std::string export_report_markdown(const EvaluationReport& report) {
    std::string out;
    out += "| Symptom ";
    for (const char* split : {"Single", "Multi"})
        for (const char* metric : kMetricNames) {
            out += "| ";
            out += split;
            out += " ";
            out += metric;
            out += " Init. | ";
            out += split;
            out += " ";
            out += metric;
            out += " Post. ";
        }
    out += "|\n|";
    for (int i = 0; i < 17; ++i)
        out += "---|";
    out += "\n";
    for (const auto& row : report.per_symptom)
        out += md_row(row, row.symptom_id) + "\n";
    out += md_row(report.averages, "**Average Score**") + "\n";
    return out;
}

std::string export_report_csv(const EvaluationReport& report) {
    std::string out = "symptom,split,phase,accuracy,precision_w,recall_w,f1_w,support\n";
    auto emit = [&](const std::string& name, const char* split, const char* phase,
                    const MetricSet& m) {
        out += name;
        out += ",";
        out += split;
        out += ",";
        out += phase;
        for (int metric = 0; metric < 4; ++metric)
            out += "," + format_round2(metric_value(m, metric));
        out += "," + std::to_string(m.support) + "\n";
    };
    auto emit_row = [&](const SymptomReport& row, const std::string& name) {
        emit(name, "single", "initial", row.single.initial);
        emit(name, "single", "post", row.single.post);
        emit(name, "multi", "initial", row.multi.initial);
        emit(name, "multi", "post", row.multi.post);
    };
    for (const auto& row : report.per_symptom)
        emit_row(row, row.symptom_id);
    emit_row(report.averages, "AVERAGE");
    return out;
}

TrendSeries trend_of(const RefinementRun& run) {
    TrendSeries series;
    series.symptom_id = run.symptom_id;
    double best = 0.0;
    for (const auto& epoch : run.epochs) {
        if (epoch.outcome == EpochOutcome::Improved && !epoch.rounds.empty())
            best = epoch.rounds.back().accuracy;
        series.points.push_back({epoch.epoch, best});
    }
    return series;
}

std::string export_trends_csv(std::span<const RefinementRun> runs) {
    if (runs.empty())
        throw EmptyList();

    std::vector<TrendSeries> series;
    size_t max_epochs = 0;
    for (const auto& run : runs) {
        series.push_back(trend_of(run));
        max_epochs = std::max(max_epochs, series.back().points.size());
    }

    char buf[32];
    auto fmt4 = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.4f", v);
        return std::string(buf);
    };

    std::string out = "symptom,epoch,accuracy,stddev\n";
    for (const auto& s : series)
        for (const auto& p : s.points)
            out += s.symptom_id + "," + std::to_string(p.epoch) + "," + fmt4(p.accuracy) + ",\n";

    // Shorter runs carry their final value forward into the aggregate.
    for (size_t e = 0; e < max_epochs; ++e) {
        std::vector<double> values;
        for (const auto& s : series) {
            if (s.points.empty()) continue;
            size_t idx = std::min(e, s.points.size() - 1);
            values.push_back(s.points[idx].accuracy);
        }
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= static_cast<double>(values.size());
        double var = 0.0;
        for (double v : values) var += (v - mean) * (v - mean);
        var /= static_cast<double>(values.size());
        out += "AGGREGATE," + std::to_string(e + 1) + "," + fmt4(mean) + "," +
               fmt4(std::sqrt(var)) + "\n";
    }
    return out;
}

} // namespace symx
