#include "symx/engine.hpp"

#include <ctime>
#include <fstream>

#include "symx/metrics.hpp"

namespace symx {

using nlohmann::json;

const char* run_status_name(RunStatus s) {
    switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::TerminatedExhausted: return "terminated_exhausted";
    case RunStatus::TerminatedMaxEpochs: return "terminated_max_epochs";
    case RunStatus::TerminatedPerfect: return "terminated_perfect";
    }
    return "?";
}

static RunStatus run_status_from_string(const std::string& s) {
    if (s == "running") return RunStatus::Running;
    if (s == "terminated_exhausted") return RunStatus::TerminatedExhausted;
    if (s == "terminated_max_epochs") return RunStatus::TerminatedMaxEpochs;
    if (s == "terminated_perfect") return RunStatus::TerminatedPerfect;
    throw CorruptCheckpoint("unknown run status '" + s + "'");
}

// --- serialization ---

namespace {

std::string now_iso8601() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%FT%TZ", &tm);
    return buf;
}

json candidate_to_json(const PromptCandidate& c) {
    json j = {{"text", c.text},
              {"origin", c.origin == PromptCandidate::Origin::Initial ? "initial"
                                                                      : "teacher_refined"}};
    if (c.epoch) j["epoch"] = *c.epoch;
    if (c.round) j["round"] = *c.round;
    return j;
}

PromptCandidate candidate_from_json(const json& j) {
    PromptCandidate c;
    c.text = j.at("text").get<std::string>();
    c.origin = j.at("origin").get<std::string>() == "initial"
                   ? PromptCandidate::Origin::Initial
                   : PromptCandidate::Origin::TeacherRefined;
    if (j.contains("epoch")) c.epoch = j["epoch"].get<int>();
    if (j.contains("round")) c.round = j["round"].get<int>();
    return c;
}

json result_to_json(const ClassificationResult& r) {
    return {{"note_id", r.note_id},
            {"symptom_id", r.symptom_id},
            {"predicted", static_cast<int>(r.predicted)},
            {"reasoning", r.reasoning},
            {"parse_status", parse_status_name(r.parse_status)},
            {"raw_response", r.raw_response}};
}

ClassificationResult result_from_json(const json& j) {
    ClassificationResult r;
    r.note_id = j.at("note_id").get<std::string>();
    r.symptom_id = j.at("symptom_id").get<std::string>();
    r.predicted = label_from_int(j.at("predicted").get<long long>());
    r.reasoning = j.at("reasoning").get<std::string>();
    r.parse_status = parse_status_from_string(j.at("parse_status").get<std::string>());
    r.raw_response = j.at("raw_response").get<std::string>();
    return r;
}

json round_to_json(const RoundRecord& r) {
    json per_note = json::array();
    for (const auto& res : r.per_note)
        per_note.push_back(result_to_json(res));
    return {{"epoch", r.epoch},         {"round", r.round},
            {"candidate", candidate_to_json(r.candidate)},
            {"per_note", std::move(per_note)},
            {"accuracy", r.accuracy},   {"improved", r.improved},
            {"degenerate", r.degenerate}};
}

RoundRecord round_from_json(const json& j) {
    RoundRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.round = j.at("round").get<int>();
    r.candidate = candidate_from_json(j.at("candidate"));
    for (const auto& res : j.at("per_note"))
        r.per_note.push_back(result_from_json(res));
    r.accuracy = j.at("accuracy").get<double>();
    r.improved = j.at("improved").get<bool>();
    r.degenerate = j.value("degenerate", false);
    return r;
}

json failed_to_json(const std::vector<std::pair<std::string, double>>& failed) {
    json out = json::array();
    for (const auto& [text, acc] : failed)
        out.push_back({{"prompt", text}, {"accuracy", acc}});
    return out;
}

std::vector<std::pair<std::string, double>> failed_from_json(const json& j) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& e : j)
        out.emplace_back(e.at("prompt").get<std::string>(), e.at("accuracy").get<double>());
    return out;
}

json epoch_to_json(const EpochRecord& e) {
    json rounds = json::array();
    for (const auto& r : e.rounds)
        rounds.push_back(round_to_json(r));
    return {{"epoch", e.epoch},
            {"rounds", std::move(rounds)},
            {"outcome", e.outcome == EpochOutcome::Improved ? "improved" : "exhausted"},
            {"failed_history", failed_to_json(e.failed_history)}};
}

EpochRecord epoch_from_json(const json& j) {
    EpochRecord e;
    e.epoch = j.at("epoch").get<int>();
    for (const auto& r : j.at("rounds"))
        e.rounds.push_back(round_from_json(r));
    e.outcome = j.at("outcome").get<std::string>() == "improved" ? EpochOutcome::Improved
                                                                 : EpochOutcome::Exhausted;
    e.failed_history = failed_from_json(j.at("failed_history"));
    return e;
}

} // namespace

json to_json(const RefinementRun& run) {
    json epochs = json::array();
    for (const auto& e : run.epochs)
        epochs.push_back(epoch_to_json(e));
    return {{"symptom_id", run.symptom_id},
            {"initial_prompt", run.initial_prompt},
            {"best_prompt", candidate_to_json(run.best_prompt)},
            {"best_accuracy", run.best_accuracy},
            {"epochs", std::move(epochs)},
            {"status", run_status_name(run.status)},
            {"config", {{"max_epochs", run.config.max_epochs},
                        {"max_rounds", run.config.max_rounds},
                        {"parallelism", run.config.parallelism}}},
            {"started_at", run.started_at},
            {"finished_at", run.finished_at}};
}

RefinementRun run_from_json(const json& j) {
    RefinementRun run;
    run.symptom_id = j.at("symptom_id").get<std::string>();
    run.initial_prompt = j.at("initial_prompt").get<std::string>();
    run.best_prompt = candidate_from_json(j.at("best_prompt"));
    run.best_accuracy = j.at("best_accuracy").get<double>();
    for (const auto& e : j.at("epochs"))
        run.epochs.push_back(epoch_from_json(e));
    run.status = run_status_from_string(j.at("status").get<std::string>());
    const auto& cfg = j.at("config");
    run.config.max_epochs = cfg.at("max_epochs").get<int>();
    run.config.max_rounds = cfg.at("max_rounds").get<int>();
    run.config.parallelism = cfg.value("parallelism", 1);
    run.started_at = j.value("started_at", std::string{});
    run.finished_at = j.value("finished_at", std::string{});
    return run;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f)
            throw Error("cannot write '" + tmp.string() + "'");
        f << content;
    }
    std::filesystem::rename(tmp, path);
}

// --- engine ---

struct RefinementEngine::State {
    RefinementRun run;
    int cur_epoch = 1;
    std::vector<RoundRecord> cur_rounds;
    std::vector<std::pair<std::string, double>> cur_failed;
    std::optional<PromptCandidate> pending;
    std::vector<ClassificationResult> optimal_results; // last evaluation of the optimal prompt

    const Symptom* symptom = nullptr;                  // rebuilt after load
    std::vector<const ClinicalNote*> train_notes;
};

RefinementEngine::RefinementEngine(const Corpus& corpus, Gateway& gateway, EngineConfig config)
    : corpus_(corpus), gateway_(gateway), config_(config) {}

namespace {

class RunLog {
public:
    explicit RunLog(const std::filesystem::path& path) {
        if (!path.empty()) {
            std::filesystem::create_directories(path.parent_path().empty()
                                                    ? std::filesystem::path(".")
                                                    : path.parent_path());
            out_.open(path, std::ios::app);
        }
    }

    void event(json j) {
        if (!out_.is_open()) return;
        j["ts"] = now_iso8601();
        out_ << j.dump() << "\n";
        out_.flush();
    }

private:
    std::ofstream out_;
};

json results_digest(const std::vector<ClassificationResult>& results) {
    int absent = 0, unknown = 0, present = 0, failed = 0;
    for (const auto& r : results) {
        switch (r.predicted) {
        case Label::Absent: ++absent; break;
        case Label::Unknown: ++unknown; break;
        case Label::Present: ++present; break;
        }
        if (r.parse_status == ParseStatus::Failed) ++failed;
    }
    return {{"absent", absent}, {"unknown", unknown}, {"present", present},
            {"parse_failed", failed}};
}

} // namespace

RefinementRun RefinementEngine::run(const std::string& symptom_id,
                                    const std::string& initial_prompt,
                                    const RunPersistence& persist) {
    State st;
    st.run.symptom_id = symptom_id;
    st.run.initial_prompt = initial_prompt;
    st.run.best_prompt = PromptCandidate{initial_prompt, PromptCandidate::Origin::Initial, {}, {}};
    st.run.best_accuracy = 0.0; // best performance starts at zero
    st.run.config = config_;
    st.run.started_at = now_iso8601();
    return drive(st, persist);
}

RefinementRun RefinementEngine::resume(const std::filesystem::path& checkpoint_file,
                                       const RunPersistence& persist) {
    std::ifstream f(checkpoint_file);
    if (!f)
        throw CorruptCheckpoint("cannot open checkpoint '" + checkpoint_file.string() + "'");
    json j = json::parse(f, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw CorruptCheckpoint("checkpoint '" + checkpoint_file.string() + "' is not valid JSON");

    State st;
    try {
        if (j.at("format_version").get<int>() != kCheckpointFormatVersion)
            throw CorruptCheckpoint("unsupported checkpoint format version");
        st.run = run_from_json(j.at("run"));
        if (j.contains("cursor") && !j["cursor"].is_null()) {
            const auto& cur = j["cursor"];
            st.cur_epoch = cur.at("epoch").get<int>();
            for (const auto& r : cur.at("rounds"))
                st.cur_rounds.push_back(round_from_json(r));
            st.cur_failed = failed_from_json(cur.at("failed_history"));
            if (cur.contains("pending") && !cur["pending"].is_null())
                st.pending = candidate_from_json(cur["pending"]);
            for (const auto& r : cur.at("optimal_results"))
                st.optimal_results.push_back(result_from_json(r));
        }
    } catch (const CorruptCheckpoint&) {
        throw;
    } catch (const std::exception& e) {
        throw CorruptCheckpoint("checkpoint '" + checkpoint_file.string() + "': " + e.what());
    }

    if (!st.run.config.semantically_equal(config_))
        throw ConfigMismatch("checkpoint was written with MaxEpochs=" +
                             std::to_string(st.run.config.max_epochs) + ", MaxRounds=" +
                             std::to_string(st.run.config.max_rounds) +
                             "; supplied config differs");

    if (st.run.status != RunStatus::Running)
        return st.run; // terminated runs resume to themselves

    return drive(st, persist);
}

RefinementRun RefinementEngine::drive(State& st, const RunPersistence& persist) {
    st.symptom = &corpus_.symptom(st.run.symptom_id);
    st.train_notes = corpus_.notes_for(st.run.symptom_id, Split::Train);
    if (st.train_notes.empty())
        throw NoTrainingNotes(st.run.symptom_id);

    RunLog log(persist.log_file);
    log.event({{"event", "run_started"},
               {"symptom", st.run.symptom_id},
               {"epoch", st.cur_epoch},
               {"resumed", !st.cur_rounds.empty() || !st.run.epochs.empty()}});

    auto save_checkpoint = [&] {
        if (persist.checkpoint_file.empty()) return;
        json cursor;
        if (st.run.status == RunStatus::Running) {
            json rounds = json::array();
            for (const auto& r : st.cur_rounds)
                rounds.push_back(round_to_json(r));
            json optimal = json::array();
            for (const auto& r : st.optimal_results)
                optimal.push_back(result_to_json(r));
            cursor = {{"epoch", st.cur_epoch},
                      {"rounds", std::move(rounds)},
                      {"failed_history", failed_to_json(st.cur_failed)},
                      {"pending", st.pending ? candidate_to_json(*st.pending) : json()},
                      {"optimal_results", std::move(optimal)}};
        }
        json j = {{"format_version", kCheckpointFormatVersion},
                  {"run", to_json(st.run)},
                  {"cursor", std::move(cursor)}};
        write_file_atomic(persist.checkpoint_file, j.dump(2));
    };

    auto teacher_context = [&] {
        TeacherContext ctx;
        ctx.optimal_prompt = st.run.best_prompt;
        ctx.peak_accuracy = st.run.best_accuracy;
        ctx.failed_history = st.cur_failed;
        // Misclassified training notes under the optimal prompt, most recent first.
        for (auto it = st.optimal_results.rbegin(); it != st.optimal_results.rend(); ++it) {
            const ClinicalNote* note = nullptr;
            for (const auto* n : st.train_notes)
                if (n->note_id == it->note_id) { note = n; break; }
            if (!note) continue;
            Label gold = note->labels.at(st.run.symptom_id);
            if (gold != it->predicted)
                ctx.reasonings.push_back({it->note_id, gold, it->predicted, it->reasoning});
        }
        return ctx;
    };

    // Accuracy already on record for a repeated prompt text, 0 if never seen.
    auto known_accuracy = [&](const std::string& text) {
        if (text == st.run.best_prompt.text) return st.run.best_accuracy;
        for (const auto& [t, acc] : st.cur_failed)
            if (t == text) return acc;
        return 0.0;
    };

    auto close_epoch = [&](EpochOutcome outcome) {
        EpochRecord rec;
        rec.epoch = st.cur_epoch;
        rec.rounds = std::move(st.cur_rounds);
        rec.outcome = outcome;
        rec.failed_history = st.cur_failed;
        log.event({{"event", "epoch_finished"},
                   {"epoch", rec.epoch},
                   {"outcome", outcome == EpochOutcome::Improved ? "improved" : "exhausted"},
                   {"rounds", rec.rounds.size()}});
        st.run.epochs.push_back(std::move(rec));
        st.cur_rounds.clear();
        st.cur_failed.clear();
    };

    auto finish = [&](RunStatus status) {
        st.run.status = status;
        st.run.finished_at = now_iso8601();
        log.event({{"event", "run_finished"},
                   {"status", run_status_name(status)},
                   {"best_accuracy", st.run.best_accuracy}});
        save_checkpoint();
    };

    save_checkpoint(); // abort before round 1 must still be resumable

    while (st.run.status == RunStatus::Running) {
        const int epoch = st.cur_epoch;
        const int round = static_cast<int>(st.cur_rounds.size()) + 1;

        // Obtain this round's candidate: the initial prompt opens epoch 1;
        // every other round evaluates a fresh teacher refinement.
        if (!st.pending) {
            if (epoch == 1 && round == 1) {
                st.pending = PromptCandidate{st.run.initial_prompt,
                                             PromptCandidate::Origin::Initial, {}, {}};
            } else {
                try {
                    st.pending = gateway_.refine(teacher_context(), epoch, round);
                } catch (const DegenerateRefinement& e) {
                    // The degenerate suggestion consumes the round and is
                    // re-appended to the failed history.
                    RoundRecord rr;
                    rr.epoch = epoch;
                    rr.round = round;
                    rr.candidate = PromptCandidate{e.repeated_text,
                                                   PromptCandidate::Origin::TeacherRefined,
                                                   epoch, round};
                    rr.accuracy = known_accuracy(e.repeated_text);
                    rr.degenerate = true;
                    log.event({{"event", "round_degenerate"},
                               {"epoch", epoch},
                               {"round", round}});
                    st.cur_rounds.push_back(std::move(rr));
                    st.cur_failed.emplace_back(e.repeated_text,
                                               st.cur_rounds.back().accuracy);
                    if (round >= config_.max_rounds) {
                        close_epoch(EpochOutcome::Exhausted);
                        finish(RunStatus::TerminatedExhausted);
                    } else {
                        save_checkpoint();
                    }
                    continue;
                }
                save_checkpoint();
            }
        }

        PromptCandidate candidate = *st.pending;
        st.pending.reset();
        log.event({{"event", "round_started"},
                   {"epoch", epoch},
                   {"round", round},
                   {"candidate_origin", candidate.origin == PromptCandidate::Origin::Initial
                                            ? "initial" : "teacher_refined"}});

        auto results = classify_notes(gateway_, candidate, *st.symptom, st.train_notes,
                                      config_.parallelism);
        std::vector<std::pair<Label, Label>> pairs;
        pairs.reserve(results.size());
        for (size_t i = 0; i < results.size(); ++i)
            pairs.emplace_back(st.train_notes[i]->labels.at(st.run.symptom_id),
                               results[i].predicted);
        const double accuracy = compute_metrics(tally(pairs)).accuracy;
        const bool improved = accuracy > st.run.best_accuracy; // strict

        RoundRecord rr;
        rr.epoch = epoch;
        rr.round = round;
        rr.candidate = candidate;
        rr.per_note = results;
        rr.accuracy = accuracy;
        rr.improved = improved;
        log.event({{"event", "round_finished"},
                   {"epoch", epoch},
                   {"round", round},
                   {"accuracy", accuracy},
                   {"improved", improved},
                   {"digest", results_digest(results)},
                   {"decision", improved ? "accept" : "reject"}});
        st.cur_rounds.push_back(std::move(rr));

        if (improved) {
            st.run.best_prompt = candidate;
            st.run.best_accuracy = accuracy;
            st.optimal_results = std::move(results);
            close_epoch(EpochOutcome::Improved);
            if (st.run.best_accuracy >= 1.0)
                finish(RunStatus::TerminatedPerfect);
            else if (epoch >= config_.max_epochs)
                finish(RunStatus::TerminatedMaxEpochs);
            else {
                ++st.cur_epoch;
                save_checkpoint();
            }
        } else {
            st.cur_failed.emplace_back(candidate.text, accuracy);
            if (epoch == 1 && round == 1) {
                // Baseline evaluation of the initial (= current optimal) prompt:
                // its reasonings feed the first teacher call even without improvement.
                st.optimal_results = std::move(results);
            }
            if (round >= config_.max_rounds) {
                close_epoch(EpochOutcome::Exhausted);
                finish(RunStatus::TerminatedExhausted);
            } else {
                save_checkpoint();
            }
        }
    }
    return st.run;
}

} // namespace symx
