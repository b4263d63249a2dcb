#pragma once

// Shared synthetic corpora and deterministic mock backends for the test
// suites. Notes carry machine-readable markers (GOLD=, IDX=, COUNT=) so
// mock students can hit any target accuracy exactly.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symx/backend.hpp"
#include "symx/corpus.hpp"
#include "symx/gateway.hpp"

namespace symx::testing {

inline const std::vector<std::pair<std::string, std::string>>& reference_symptoms() {
    static const std::vector<std::pair<std::string, std::string>> v = {
        {"urgency", "Urgency"},
        {"cystitis", "Cystitis"},
        {"urinary_obstruction", "Urinary Obstruction"},
        {"dysuria", "Dysuria"},
        {"erectile_dysfunction", "Erectile Dysfunction"},
        {"rectal_bleeding", "Rectal Bleeding"},
        {"stricture", "Stricture"},
        {"nocturia", "Nocturia"},
        {"proctitis", "Proctitis"},
        {"hematuria", "Hematuria"},
        {"urothelial_carcinoma", "Urothelial Carcinoma"},
        {"incontinence", "Incontinence"}};
    return v;
}

inline Label cycle_label(int i) {
    switch (i % 3) {
    case 0: return Label::Present;
    case 1: return Label::Absent;
    default: return Label::Unknown;
    }
}

inline std::string note_text(const std::string& symptom_id, Label gold, int idx, int count) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "Synthetic clinical note about %s. GOLD=%s IDX=%02d COUNT=%02d",
                  symptom_id.c_str(), label_name(gold), idx, count);
    return buf;
}

/// The reference corpus: 20 train + 5 test notes per symptom (15 + 4
/// for urothelial carcinoma) and 375 multi-symptom notes.
inline nlohmann::json reference_corpus_json() {
    using nlohmann::json;
    json j;
    j["provenance"] = "synthetic fixture";
    j["symptoms"] = json::array();
    for (const auto& [id, name] : reference_symptoms())
        j["symptoms"].push_back({{"id", id}, {"display_name", name}});
    j["notes"] = json::array();

    auto add_note = [&](const std::string& note_id, const std::string& text, const char* split,
                        const std::map<std::string, int>& labels) {
        json lab = json::object();
        for (const auto& [sid, v] : labels)
            lab[sid] = v;
        j["notes"].push_back({{"note_id", note_id},
                              {"text", text},
                              {"split", split},
                              {"labels", std::move(lab)}});
    };

    for (const auto& [sid, _] : reference_symptoms()) {
        const bool uc = sid == "urothelial_carcinoma";
        const int n_train = uc ? 15 : 20;
        const int n_test = uc ? 4 : 5;
        for (int i = 0; i < n_train; ++i) {
            Label gold = cycle_label(i);
            char id[64];
            std::snprintf(id, sizeof(id), "%s-train-%02d", sid.c_str(), i);
            add_note(id, note_text(sid, gold, i, n_train), "train",
                     {{sid, static_cast<int>(gold)}});
        }
        for (int i = 0; i < n_test; ++i) {
            Label gold = cycle_label(i);
            char id[64];
            std::snprintf(id, sizeof(id), "%s-test-%02d", sid.c_str(), i);
            add_note(id, note_text(sid, gold, i, n_test), "test_single",
                     {{sid, static_cast<int>(gold)}});
        }
    }
    const auto& symptoms = reference_symptoms();
    for (int i = 0; i < 375; ++i) {
        // 1..10 distinct symptoms per multi note, deterministic.
        int count = 1 + (i * 7) % 10;
        std::map<std::string, int> labels;
        std::string text = "Synthetic multi-symptom note.";
        for (int k = 0; k < count; ++k) {
            const auto& sid = symptoms[(i + k * 5) % symptoms.size()].first;
            Label gold = cycle_label(i + k);
            labels[sid] = static_cast<int>(gold);
            text += " " + sid + ":GOLD=" + label_name(gold);
        }
        char id[32];
        std::snprintf(id, sizeof(id), "multi-%03d", i);
        add_note(id, text, "multi", labels);
    }
    return j;
}

inline Corpus reference_corpus() { return Corpus::from_json(reference_corpus_json()); }

/// Writes manifest + notes JSONL for a corpus json under `dir`; returns
/// the manifest path.
inline std::filesystem::path write_corpus_files(const nlohmann::json& corpus,
                                                const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream notes(dir / "notes.jsonl");
        for (const auto& n : corpus.at("notes"))
            notes << n.dump() << "\n";
    }
    nlohmann::json manifest = {{"provenance", corpus.value("provenance", std::string{})},
                               {"symptoms", corpus.at("symptoms")},
                               {"notes_file", "notes.jsonl"}};
    auto path = dir / "manifest.json";
    std::ofstream mf(path);
    mf << manifest.dump(2) << "\n";
    return path;
}

// --- marker parsing for mock backends ---

inline std::string marker(const std::string& text, const std::string& key) {
    auto p = text.find(key + "=");
    if (p == std::string::npos) return {};
    p += key.size() + 1;
    auto e = p;
    while (e < text.size() && text[e] != ' ' && text[e] != '\n') ++e;
    return text.substr(p, e - p);
}

inline Label wrong_label(Label gold) {
    return gold == Label::Present ? Label::Absent : Label::Present;
}

inline std::string envelope(Label l, const std::string& reasoning = "synthetic reasoning") {
    return std::string("LABEL: ") + label_name(l) + "\nREASONING: " + reasoning;
}

/// Student backend whose round accuracy is dictated by an "ACC=<v>"
/// marker inside the prompt text (system message): the first
/// round(v * COUNT) notes by IDX get the gold label, the rest a wrong
/// one. Pure function of the request.
inline std::string accuracy_marker_student(const ChatRequest& req) {
    std::string system, user;
    for (const auto& m : req.messages) {
        if (m.role == "system") system = m.content;
        if (m.role == "user" && user.empty()) user = m.content;
    }
    double acc = 1.0;
    if (auto a = marker(system, "ACC"); !a.empty())
        acc = std::stod(a);

    std::string g = marker(user, "GOLD");
    Label gold = g == "present" ? Label::Present : g == "absent" ? Label::Absent : Label::Unknown;
    int idx = 0, count = 1;
    if (auto s = marker(user, "IDX"); !s.empty()) idx = std::stoi(s);
    if (auto s = marker(user, "COUNT"); !s.empty()) count = std::stoi(s);

    int correct = static_cast<int>(std::lround(acc * count));
    Label reply = idx < correct ? gold : wrong_label(gold);
    return envelope(reply, std::string("note idx ") + std::to_string(idx));
}

/// Student that always answers the gold label for the target symptom,
/// including on multi-symptom notes.
inline std::string gold_student(const ChatRequest& req) {
    std::string user;
    for (const auto& m : req.messages)
        if (m.role == "user") { user = m.content; break; }

    // Recover the symptom id from the "Target symptom:" line so multi-note
    // markers ("<sid>:GOLD=...") resolve per symptom.
    std::string sid;
    if (auto p = user.find("Target symptom: "); p != std::string::npos) {
        auto e = user.find('\n', p);
        sid = user.substr(p + 16, e - (p + 16));
        for (auto& c : sid)
            c = c == ' ' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    std::string g;
    if (!sid.empty())
        if (auto p = user.find(sid + ":GOLD="); p != std::string::npos)
            g = marker(user.substr(p), sid + ":GOLD");
    if (g.empty())
        g = marker(user, "GOLD");
    Label l = g == "present" ? Label::Present : g == "absent" ? Label::Absent : Label::Unknown;
    return envelope(l);
}

/// Counts failed-history entries in a teacher meta-prompt; used by
/// landscape teachers to stay a pure function of the request.
inline int failed_count_in(const std::string& meta) {
    if (meta.find("(none yet)") != std::string::npos) return 0;
    int n = 0;
    size_t p = 0;
    auto anchor = meta.find("failed this epoch");
    if (anchor == std::string::npos) return 0;
    p = anchor;
    while ((p = meta.find("\n- (", p)) != std::string::npos) {
        ++n;
        p += 4;
    }
    return n;
}

inline double peak_in(const std::string& meta) {
    auto p = meta.find("Peak accuracy with the optimal prompt: ");
    if (p == std::string::npos) return 0.0;
    return std::stod(meta.substr(p + 39));
}

/// Teacher for a constant landscape: every suggestion is a fresh prompt
/// that scores `acc`.
inline FunctionBackend::Fn constant_landscape_teacher(double acc) {
    return [acc](const ChatRequest& req) {
        const std::string& meta = req.messages.front().content;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "ACC=%.4f candidate-%d peak-%.4f", acc,
                      failed_count_in(meta) + 1, peak_in(meta));
        return std::string(buf);
    };
}

/// Staircase landscape: the teacher's `step_round`-th suggestion of each
/// epoch scores peak+delta (capped at `ceiling`), the others score peak.
inline FunctionBackend::Fn staircase_teacher(double delta, double ceiling, int step_round = 3) {
    return [=](const ChatRequest& req) {
        const std::string& meta = req.messages.front().content;
        double peak = peak_in(meta);
        int k = failed_count_in(meta) + 1;
        double acc = (k == step_round) ? std::min(peak + delta, ceiling) : peak;
        char buf[96];
        std::snprintf(buf, sizeof(buf), "ACC=%.4f candidate-%d peak-%.4f", acc, k, peak);
        return std::string(buf);
    };
}

/// Everything needed to drive the engine against scripted behavior.
struct MockRig {
    FunctionBackend student;
    FunctionBackend teacher;
    Gateway gateway;

    MockRig(FunctionBackend::Fn student_fn, FunctionBackend::Fn teacher_fn,
            GatewayOptions options = {})
        : student(std::move(student_fn)), teacher(std::move(teacher_fn)),
          gateway(student, BackendEndpoint{"", "mock-student", ""},
                  SamplingConfig{0.2, 0.1, 1024, {}}, teacher,
                  BackendEndpoint{"", "mock-teacher", ""}, SamplingConfig{2.0, 0.9, 1024, {}},
                  options) {}
};

} // namespace symx::testing
