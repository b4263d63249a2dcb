#include "symx/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdio>
#include <thread>

namespace symx {

const char* parse_status_name(ParseStatus s) {
    switch (s) {
    case ParseStatus::Clean: return "clean";
    case ParseStatus::RecoveredAfterRetry: return "recovered_after_retry";
    case ParseStatus::Failed: return "failed";
    }
    return "?";
}

ParseStatus parse_status_from_string(const std::string& s) {
    if (s == "clean") return ParseStatus::Clean;
    if (s == "recovered_after_retry") return ParseStatus::RecoveredAfterRetry;
    if (s == "failed") return ParseStatus::Failed;
    throw Error("unknown parse status '" + s + "'");
}

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::optional<Label> label_from_word(const std::string& word) {
    if (word == "present" || word == "1" || word == "+1") return Label::Present;
    if (word == "absent" || word == "negated" || word == "-1") return Label::Absent;
    if (word == "unknown" || word == "0") return Label::Unknown;
    return std::nullopt;
}

} // namespace

std::optional<std::pair<Label, std::string>> parse_student_reply(const std::string& raw) {
    const std::string low = lower(raw);

    std::optional<Label> label;
    size_t pos = 0;
    while ((pos = low.find("label", pos)) != std::string::npos) {
        size_t p = pos + 5;
        while (p < low.size() && (low[p] == ' ' || low[p] == '\t')) ++p;
        if (p < low.size() && (low[p] == ':' || low[p] == '=')) {
            ++p;
            while (p < low.size() && !std::isalnum(static_cast<unsigned char>(low[p])) &&
                   low[p] != '-' && low[p] != '+' && low[p] != '\n')
                ++p;
            size_t end = p;
            while (end < low.size() && (std::isalnum(static_cast<unsigned char>(low[end])) ||
                                        low[end] == '-' || low[end] == '+'))
                ++end;
            if (auto l = label_from_word(low.substr(p, end - p))) {
                label = l;
                break;
            }
        }
        pos += 5;
    }
    if (!label)
        return std::nullopt;

    std::string reasoning;
    if (auto rp = low.find("reasoning"); rp != std::string::npos) {
        size_t p = rp + 9;
        while (p < raw.size() && (raw[p] == ' ' || raw[p] == '\t')) ++p;
        if (p < raw.size() && (raw[p] == ':' || raw[p] == '='))
            reasoning = trim(raw.substr(p + 1));
    }
    return std::make_pair(*label, std::move(reasoning));
}

Gateway::Gateway(ChatBackend& student, BackendEndpoint student_endpoint,
                 SamplingConfig student_sampling, ChatBackend& teacher,
                 BackendEndpoint teacher_endpoint, SamplingConfig teacher_sampling,
                 GatewayOptions options)
    : student_(student), student_endpoint_(std::move(student_endpoint)),
      student_sampling_(student_sampling), teacher_(teacher),
      teacher_endpoint_(std::move(teacher_endpoint)), teacher_sampling_(teacher_sampling),
      options_(options) {}

std::vector<ChatMessage> Gateway::student_messages(const PromptCandidate& prompt,
                                                   const Symptom& symptom,
                                                   const ClinicalNote& note) {
    std::string instructions = prompt.text;
    // The prompt may carry a {symptom} placeholder; literal prompts pass through.
    if (auto p = instructions.find("{symptom}"); p != std::string::npos)
        instructions.replace(p, 9, symptom.display_name);

    std::string body;
    body += "Target symptom: " + symptom.display_name + "\n\n";
    body += "Clinical note:\n" + note.text + "\n\n";
    body += "Answer with exactly two lines:\n";
    body += "LABEL: present | absent | unknown\n";
    body += "REASONING: <why you decided>\n";

    return {{"system", instructions}, {"user", body}};
}

std::string Gateway::format_accuracy(double accuracy) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", accuracy);
    return buf;
}

std::string Gateway::teacher_message(const TeacherContext& ctx, int reasoning_char_budget) {
    std::string msg;
    msg += "You refine instruction prompts for a clinical symptom-extraction assistant.\n";
    msg += "The assistant labels one target symptom per note as present, absent or unknown.\n\n";

    msg += "Optimal prompt (best found so far):\n";
    msg += ctx.optimal_prompt.text + "\n\n";

    msg += "Peak accuracy with the optimal prompt: " + format_accuracy(ctx.peak_accuracy) + "\n\n";

    msg += "Assistant reasoning on misclassified training notes (gold vs predicted):\n";
    if (ctx.reasonings.empty()) {
        msg += "(none recorded)\n";
    } else {
        int used = 0;
        for (const auto& r : ctx.reasonings) {
            std::string line = "- note " + r.note_id + ": gold=" + label_name(r.gold) +
                               " predicted=" + label_name(r.predicted) + " reasoning: " +
                               r.reasoning + "\n";
            if (used + static_cast<int>(line.size()) > reasoning_char_budget && used > 0)
                break;
            msg += line;
            used += static_cast<int>(line.size());
        }
    }
    msg += "\n";

    msg += "Prompts already tested and failed this epoch (accuracy):\n";
    if (ctx.failed_history.empty()) {
        msg += "(none yet)\n";
    } else {
        for (const auto& [text, acc] : ctx.failed_history)
            msg += "- (" + format_accuracy(acc) + ") " + text + "\n";
    }
    msg += "\n";

    msg += "Write exactly one new prompt that improves on the optimal prompt. ";
    msg += "It must differ from every prompt listed above. ";
    msg += "Reply with the new prompt text only.\n";
    return msg;
}

ClassificationResult Gateway::classify(const PromptCandidate& prompt, const Symptom& symptom,
                                       const ClinicalNote& note) const {
    if (note.text.empty())
        throw Error("note '" + note.note_id + "' has empty text");

    ChatRequest request{student_endpoint_.model_name, student_messages(prompt, symptom, note),
                        student_sampling_};

    ClassificationResult result;
    result.note_id = note.note_id;
    result.symptom_id = symptom.id;

    std::string raw = student_.complete(request);
    if (auto parsed = parse_student_reply(raw)) {
        result.predicted = parsed->first;
        result.reasoning = parsed->second;
        result.parse_status = ParseStatus::Clean;
        result.raw_response = raw;
        return result;
    }

    // One retry carrying the malformed reply plus a format reminder.
    request.messages.push_back({"assistant", raw});
    request.messages.push_back(
        {"user", "Your reply did not follow the required format. Answer again with exactly:\n"
                 "LABEL: present | absent | unknown\nREASONING: <why>"});
    std::string retry_raw = student_.complete(request);
    result.raw_response = raw + "\n---\n" + retry_raw;
    if (auto parsed = parse_student_reply(retry_raw)) {
        result.predicted = parsed->first;
        result.reasoning = parsed->second;
        result.parse_status = ParseStatus::RecoveredAfterRetry;
    } else {
        result.predicted = Label::Unknown;
        result.parse_status = ParseStatus::Failed;
    }
    return result;
}

PromptCandidate Gateway::refine(const TeacherContext& ctx, int epoch, int round) const {
    ChatRequest request{teacher_endpoint_.model_name,
                        {{"user", teacher_message(ctx, options_.reasoning_char_budget)}},
                        teacher_sampling_};

    auto already_tested = [&](const std::string& text) {
        if (text == ctx.optimal_prompt.text) return true;
        return std::any_of(ctx.failed_history.begin(), ctx.failed_history.end(),
                           [&](const auto& e) { return e.first == text; });
    };

    std::string last_text;
    for (int attempt = 0; attempt < 2; ++attempt) {
        std::string text = trim(teacher_.complete(request));
        last_text = text;
        if (!text.empty() && !already_tested(text)) {
            PromptCandidate out;
            out.text = std::move(text);
            out.origin = PromptCandidate::Origin::TeacherRefined;
            out.epoch = epoch;
            out.round = round;
            return out;
        }
        request.messages.push_back({"assistant", text});
        request.messages.push_back(
            {"user", "That prompt was already tested (or empty). Produce a genuinely new prompt, "
                     "different from every prompt shown above."});
    }
    throw DegenerateRefinement("teacher repeated an already-tested prompt twice (epoch " +
                                   std::to_string(epoch) + ", round " + std::to_string(round) + ")",
                               last_text);
}

ConsistencyReport Gateway::consistency_check(const PromptCandidate& prompt,
                                             const Symptom& symptom,
                                             const std::vector<const ClinicalNote*>& notes,
                                             int repetitions) const {
    if (repetitions < 2)
        throw Error("consistency check needs at least 2 repetitions");

    ConsistencyReport report;
    report.repetitions = repetitions;
    report.notes_total = static_cast<long>(notes.size());

    for (const ClinicalNote* note : notes) {
        std::vector<Label> labels;
        labels.reserve(repetitions);
        for (int r = 0; r < repetitions; ++r)
            labels.push_back(classify(prompt, symptom, *note).predicted);
        bool consistent = std::all_of(labels.begin(), labels.end(),
                                      [&](Label l) { return l == labels.front(); });
        if (consistent)
            ++report.notes_consistent;
        else
            report.disagreements.push_back({note->note_id, std::move(labels)});
    }
    report.agreement = report.notes_total
                           ? static_cast<double>(report.notes_consistent) / report.notes_total
                           : 1.0;
    return report;
}

std::vector<ClassificationResult> classify_notes(const Gateway& gateway,
                                                 const PromptCandidate& prompt,
                                                 const Symptom& symptom,
                                                 const std::vector<const ClinicalNote*>& notes,
                                                 int parallelism) {
    std::vector<ClassificationResult> results(notes.size());
    if (parallelism <= 1 || notes.size() <= 1) {
        for (size_t i = 0; i < notes.size(); ++i)
            results[i] = gateway.classify(prompt, symptom, *notes[i]);
        return results;
    }

    std::atomic<size_t> next{0};
    std::mutex error_mutex;
    std::exception_ptr first_error;
    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= notes.size()) return;
            try {
                results[i] = gateway.classify(prompt, symptom, *notes[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    int n = std::min<int>(parallelism, static_cast<int>(notes.size()));
    threads.reserve(n);
    for (int t = 0; t < n; ++t)
        threads.emplace_back(worker);
    for (auto& t : threads)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
    return results;
}

} // namespace symx
