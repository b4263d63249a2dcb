#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "symx/config.hpp"
#include "symx/corpus.hpp"
#include "symx/engine.hpp"
#include "symx/report.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitBackend = 4;

struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void fail(int code, const std::string& kind, const std::string& message) {
    json err = {{"error", kind}, {"message", message}};
    std::cerr << err.dump() << "\n";
    throw CliError{code, message};
}

int classify_exit(const std::exception& e) {
    if (dynamic_cast<const symx::BackendUnreachable*>(&e) ||
        dynamic_cast<const symx::AuthMissing*>(&e) ||
        dynamic_cast<const symx::TimeoutError*>(&e) ||
        dynamic_cast<const symx::DegenerateRefinement*>(&e))
        return kExitBackend;
    if (dynamic_cast<const symx::Error*>(&e))
        return kExitData;
    return kExitConfig;
}

const char* error_kind(const std::exception& e) {
    if (dynamic_cast<const symx::AuthMissing*>(&e)) return "AuthMissing";
    if (dynamic_cast<const symx::BackendUnreachable*>(&e)) return "BackendUnreachable";
    if (dynamic_cast<const symx::TimeoutError*>(&e)) return "Timeout";
    if (dynamic_cast<const symx::DegenerateRefinement*>(&e)) return "DegenerateRefinement";
    if (dynamic_cast<const symx::MalformedRecord*>(&e)) return "MalformedRecord";
    if (dynamic_cast<const symx::DuplicateNoteId*>(&e)) return "DuplicateNoteId";
    if (dynamic_cast<const symx::UnknownSymptomId*>(&e)) return "UnknownSymptomId";
    if (dynamic_cast<const symx::IllegalLabelValue*>(&e)) return "IllegalLabelValue";
    if (dynamic_cast<const symx::NoTrainingNotes*>(&e)) return "NoTrainingNotes";
    if (dynamic_cast<const symx::NoNotesInSplit*>(&e)) return "NoNotesInSplit";
    if (dynamic_cast<const symx::MissingRun*>(&e)) return "MissingRun";
    if (dynamic_cast<const symx::CorruptCheckpoint*>(&e)) return "CorruptCheckpoint";
    if (dynamic_cast<const symx::ConfigMismatch*>(&e)) return "ConfigMismatch";
    return "Error";
}

int cmd_validate(const fs::path& manifest) {
    symx::Corpus corpus = symx::Corpus::load(manifest);
    auto totals = corpus.counts();
    std::cout << totals.train + totals.test_single << " single-symptom ("
              << totals.train << " train / " << totals.test_single << " test), "
              << totals.multi << " multi\n";
    for (const auto& [sid, c] : corpus.counts_by_symptom())
        std::cout << "  " << sid << ": train=" << c.train << " test_single=" << c.test_single
                  << " multi=" << c.multi << "\n";
    return kExitOk;
}

struct Backends {
    std::unique_ptr<symx::ChatBackend> student;
    std::unique_ptr<symx::ChatBackend> teacher;
    std::unique_ptr<symx::Gateway> gateway;
};

Backends open_gateway(const symx::RunConfig& cfg) {
    Backends b;
    b.student = symx::make_backend(cfg.student);
    b.teacher = symx::make_backend(cfg.teacher);
    b.gateway = std::make_unique<symx::Gateway>(
        *b.student, cfg.student.endpoint, cfg.student.sampling, *b.teacher,
        cfg.teacher.endpoint, cfg.teacher.sampling,
        symx::GatewayOptions{cfg.reasoning_char_budget});
    return b;
}

int cmd_refine(const symx::RunConfig& cfg, std::vector<std::string> symptom_filter,
               bool resume, bool force) {
    symx::Corpus corpus = symx::Corpus::load(cfg.corpus_manifest);
    auto prompts = cfg.load_prompts();

    std::vector<std::string> selected;
    if (symptom_filter.empty()) {
        for (const auto& s : corpus.symptoms())
            selected.push_back(s.id);
    } else {
        for (const auto& sid : symptom_filter) {
            corpus.symptom(sid); // throws UnknownSymptomId
            selected.push_back(sid);
        }
    }
    for (const auto& sid : selected)
        if (!prompts.count(sid))
            fail(kExitConfig, "MissingPrompt", "no initial prompt for symptom '" + sid + "'");

    symx::EngineConfig engine_cfg{cfg.max_epochs, cfg.max_rounds, cfg.parallelism};

    std::mutex console;
    std::exception_ptr first_error;
    std::mutex error_mutex;
    std::atomic<size_t> next{0};

    auto worker = [&] {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= selected.size()) return;
            const std::string& sid = selected[i];
            try {
                // Each symptom owns its backends so mock scripts don't interleave.
                Backends b = open_gateway(cfg);
                symx::RefinementEngine engine(corpus, *b.gateway, engine_cfg);

                fs::path dir = cfg.output_dir / sid;
                fs::create_directories(dir);
                fs::path run_file = dir / "run.json";
                fs::path checkpoint = dir / "checkpoint.json";
                symx::RunPersistence persist{checkpoint, dir / "log.jsonl"};

                if (fs::exists(run_file) && !force) {
                    std::lock_guard<std::mutex> lock(console);
                    std::cout << sid << ": run.json already exists, skipping (use --force to redo)\n";
                    continue;
                }

                symx::RefinementRun run =
                    (resume && fs::exists(checkpoint))
                        ? engine.resume(checkpoint, persist)
                        : engine.run(sid, prompts.at(sid), persist);

                symx::write_file_atomic(run_file, symx::to_json(run).dump(2));
                std::lock_guard<std::mutex> lock(console);
                std::cout << sid << ": " << symx::run_status_name(run.status)
                          << " best_accuracy=" << run.best_accuracy << " epochs="
                          << run.epochs.size() << "\n";
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    int jobs = std::min<int>(cfg.jobs, static_cast<int>(selected.size()));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int t = 0; t < jobs; ++t)
            threads.emplace_back(worker);
        for (auto& t : threads)
            t.join();
    }
    if (first_error)
        std::rethrow_exception(first_error);
    return kExitOk;
}

int cmd_evaluate(const symx::RunConfig& cfg, fs::path runs_dir, bool force) {
    symx::Corpus corpus = symx::Corpus::load(cfg.corpus_manifest);
    if (runs_dir.empty())
        runs_dir = cfg.output_dir;

    std::vector<symx::RefinementRun> runs;
    for (const auto& s : corpus.symptoms()) {
        fs::path run_file = runs_dir / s.id / "run.json";
        if (!fs::exists(run_file)) continue;
        std::ifstream f(run_file);
        runs.push_back(symx::run_from_json(json::parse(f)));
    }
    if (runs.empty())
        throw symx::MissingRun("(no run.json files under '" + runs_dir.string() + "')");

    for (const char* name : {"report.csv", "report.md", "trends.csv"})
        if (fs::exists(cfg.output_dir / name) && !force)
            fail(kExitConfig, "OutputExists",
                 std::string(name) + " already exists in '" + cfg.output_dir.string() +
                     "' (use --force to overwrite)");

    Backends b = open_gateway(cfg);
    auto report = symx::compare_runs(corpus, *b.gateway, runs, cfg.parallelism);

    fs::create_directories(cfg.output_dir);
    symx::write_file_atomic(cfg.output_dir / "report.csv", symx::export_report_csv(report));
    symx::write_file_atomic(cfg.output_dir / "report.md", symx::export_report_markdown(report));
    symx::write_file_atomic(cfg.output_dir / "trends.csv", symx::export_trends_csv(runs));
    std::cout << "wrote report.csv, report.md, trends.csv to " << cfg.output_dir.string() << "\n";
    return kExitOk;
}

int cmd_consistency(const symx::RunConfig& cfg, const std::string& symptom_id,
                    const fs::path& prompt_file, int repetitions) {
    symx::Corpus corpus = symx::Corpus::load(cfg.corpus_manifest);
    const symx::Symptom& symptom = corpus.symptom(symptom_id);

    std::ifstream pf(prompt_file);
    if (!pf)
        fail(kExitConfig, "Error", "cannot open prompt file '" + prompt_file.string() + "'");
    std::string prompt_text((std::istreambuf_iterator<char>(pf)),
                            std::istreambuf_iterator<char>());
    if (prompt_text.empty())
        fail(kExitConfig, "Error", "prompt file is empty");

    Backends b = open_gateway(cfg);
    auto notes = corpus.notes_for(symptom_id, symx::Split::Train);
    symx::PromptCandidate prompt{prompt_text, symx::PromptCandidate::Origin::Initial, {}, {}};
    auto report = b.gateway->consistency_check(prompt, symptom, notes, repetitions);

    std::cout << "agreement " << report.agreement << " (" << report.notes_consistent << "/"
              << report.notes_total << " notes consistent over " << report.repetitions
              << " repetitions)\n";
    for (const auto& d : report.disagreements) {
        std::cout << "  " << d.note_id << ":";
        for (auto l : d.labels)
            std::cout << " " << symx::label_name(l);
        std::cout << "\n";
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Teacher-student prompt refinement for clinical symptom extraction"};
    app.require_subcommand(1);

    std::string config_path;
    std::string manifest_path;
    std::vector<std::string> symptoms;
    std::string runs_dir;
    std::string prompt_file;
    int repetitions = 3;
    bool resume = false, force = false;
    std::string symptom;

    auto* validate = app.add_subcommand("validate", "Validate a corpus and print split counts");
    validate->add_option("manifest", manifest_path, "Corpus manifest file")->required();

    auto* refine = app.add_subcommand("refine", "Run prompt refinement per symptom");
    refine->add_option("--config", config_path, "Config file (JSON)")->required();
    refine->add_option("--symptom", symptoms, "Restrict to these symptom ids");
    refine->add_flag("--resume", resume, "Resume from checkpoints where present");
    refine->add_flag("--force", force, "Redo symptoms with completed run files");

    auto* evaluate = app.add_subcommand("evaluate", "Evaluate initial vs refined prompts");
    evaluate->add_option("--config", config_path, "Config file (JSON)")->required();
    evaluate->add_option("--runs", runs_dir, "Directory holding <symptom>/run.json");
    evaluate->add_flag("--force", force, "Overwrite existing report files");

    auto* consistency = app.add_subcommand("consistency", "Repetition agreement check");
    consistency->add_option("--config", config_path, "Config file (JSON)")->required();
    consistency->add_option("--symptom", symptom, "Symptom id")->required();
    consistency->add_option("--prompt-file", prompt_file, "File holding the prompt text")
        ->required();
    consistency->add_option("--repetitions", repetitions, "Repetitions (>= 2)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    try {
        if (validate->parsed())
            return cmd_validate(manifest_path);

        symx::RunConfig cfg;
        try {
            cfg = symx::RunConfig::load(config_path);
        } catch (const std::exception& e) {
            json err = {{"error", "ConfigError"}, {"message", e.what()}};
            std::cerr << err.dump() << "\n";
            return kExitConfig;
        }
        if (refine->parsed())
            return cmd_refine(cfg, symptoms, resume, force);
        if (evaluate->parsed())
            return cmd_evaluate(cfg, runs_dir, force);
        if (consistency->parsed()) {
            if (repetitions < 2)
                fail(kExitConfig, "Error", "--repetitions must be >= 2");
            return cmd_consistency(cfg, symptom, prompt_file, repetitions);
        }
    } catch (const CliError& e) {
        return e.code;
    } catch (const std::exception& e) {
        json err = {{"error", error_kind(e)}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return classify_exit(e);
    }
    return kExitOk;
}
