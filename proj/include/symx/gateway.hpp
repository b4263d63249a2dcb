#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "symx/backend.hpp"
#include "symx/corpus.hpp"

namespace symx {

struct PromptCandidate {
    enum class Origin { Initial, TeacherRefined };

    std::string text;
    Origin origin = Origin::Initial;
    std::optional<int> epoch; // absent for Initial
    std::optional<int> round;

    bool operator==(const PromptCandidate&) const = default;
};

enum class ParseStatus { Clean, RecoveredAfterRetry, Failed };

const char* parse_status_name(ParseStatus s);
ParseStatus parse_status_from_string(const std::string& s);

struct ClassificationResult {
    std::string note_id;
    std::string symptom_id;
    Label predicted = Label::Unknown;
    std::string reasoning;
    ParseStatus parse_status = ParseStatus::Clean;
    std::string raw_response; // verbatim, kept for audit

    bool operator==(const ClassificationResult&) const = default;
};

struct ReasoningExcerpt {
    std::string note_id;
    Label gold = Label::Unknown;
    Label predicted = Label::Unknown;
    std::string reasoning;
};

struct TeacherContext {
    PromptCandidate optimal_prompt;
    double peak_accuracy = 0.0;
    std::vector<ReasoningExcerpt> reasonings;       // most recent first
    std::vector<std::pair<std::string, double>> failed_history; // (prompt text, accuracy)
};

struct ConsistencyDisagreement {
    std::string note_id;
    std::vector<Label> labels; // one per repetition
};

struct ConsistencyReport {
    int repetitions = 0;
    long notes_total = 0;
    long notes_consistent = 0;
    double agreement = 0.0; // notes_consistent / notes_total
    std::vector<ConsistencyDisagreement> disagreements;
};

struct GatewayOptions {
    int reasoning_char_budget = 8000;
};

/// Student classification and teacher refinement on top of abstract chat
/// backends. All prompt assembly is deterministic given the same inputs.
class Gateway {
public:
    Gateway(ChatBackend& student, BackendEndpoint student_endpoint, SamplingConfig student_sampling,
            ChatBackend& teacher, BackendEndpoint teacher_endpoint, SamplingConfig teacher_sampling,
            GatewayOptions options = {});

    /// Classifies one (note, symptom) pair with the given prompt. Malformed
    /// model output never throws: one retry with a format reminder, then
    /// predicted=Unknown with parse_status=Failed.
    ClassificationResult classify(const PromptCandidate& prompt, const Symptom& symptom,
                                  const ClinicalNote& note) const;

    /// Asks the teacher for one refined prompt. The result must be non-empty
    /// and differ from the optimal prompt and every failed-history entry;
    /// one retry, then DegenerateRefinement.
    PromptCandidate refine(const TeacherContext& ctx, int epoch, int round) const;

    ConsistencyReport consistency_check(const PromptCandidate& prompt, const Symptom& symptom,
                                        const std::vector<const ClinicalNote*>& notes,
                                        int repetitions) const;

    /// The student request body text for a (prompt, symptom, note) triple.
    static std::vector<ChatMessage> student_messages(const PromptCandidate& prompt,
                                                     const Symptom& symptom,
                                                     const ClinicalNote& note);

    /// The teacher meta-prompt containing all four context elements.
    static std::string teacher_message(const TeacherContext& ctx, int reasoning_char_budget);

    static std::string format_accuracy(double accuracy);

private:
    ChatBackend& student_;
    BackendEndpoint student_endpoint_;
    SamplingConfig student_sampling_;
    ChatBackend& teacher_;
    BackendEndpoint teacher_endpoint_;
    SamplingConfig teacher_sampling_;
    GatewayOptions options_;
};

/// Extracts (label, reasoning) from a student reply. Case-insensitive,
/// tolerant of surrounding prose; nullopt when no legal LABEL is found.
std::optional<std::pair<Label, std::string>> parse_student_reply(const std::string& raw);

/// Classifies every note with `prompt`, up to `parallelism` calls in
/// flight. Results come back in note order regardless of scheduling.
std::vector<ClassificationResult> classify_notes(const Gateway& gateway,
                                                 const PromptCandidate& prompt,
                                                 const Symptom& symptom,
                                                 const std::vector<const ClinicalNote*>& notes,
                                                 int parallelism);

} // namespace symx
