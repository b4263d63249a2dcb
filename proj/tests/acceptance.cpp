// Acceptance suite: one pass/fail line per criterion, nonzero exit on
// any failure. Run with --write-golden to regenerate the frozen report
// files (review the diff before committing).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <vector>

#include "support/fixtures.hpp"
#include "support/metric_oracle.hpp"
#include "symx/engine.hpp"
#include "symx/report.hpp"

using namespace symx;
using symx::testing::MockRig;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

struct Check {
    std::ostringstream why;
    bool ok = true;

    void require(bool cond, const std::string& message) {
        if (!cond) {
            ok = false;
            if (why.tellp() > 0) why << "; ";
            why << message;
        }
    }
    void close(double value, double expected, double tol, const std::string& what) {
        if (std::fabs(value - expected) > tol) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s: got %.12g, expected %.12g (tol %g)",
                          what.c_str(), value, expected, tol);
            require(false, buf);
        }
    }
};

void criterion(int number, const std::string& title, double budget_seconds,
               const std::function<void(Check&)>& body) {
    Check c;
    auto t0 = Clock::now();
    try {
        body(c);
    } catch (const std::exception& e) {
        c.require(false, std::string("exception: ") + e.what());
    }
    double elapsed = std::chrono::duration<double>(Clock::now() - t0).count();
    if (budget_seconds > 0 && elapsed > budget_seconds) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "took %.2fs, budget %.0fs", elapsed, budget_seconds);
        c.require(false, buf);
    }
    if (c.ok) {
        std::printf("[PASS] criterion %d: %s (%.2fs)\n", number, title.c_str(), elapsed);
    } else {
        ++failures;
        std::printf("[FAIL] criterion %d: %s -- %s\n", number, title.c_str(),
                    c.why.str().c_str());
    }
}

bool metrics_equal(const MetricSet& a, const MetricSet& b, double tol) {
    return std::fabs(a.accuracy - b.accuracy) <= tol &&
           std::fabs(a.precision_weighted - b.precision_weighted) <= tol &&
           std::fabs(a.recall_weighted - b.recall_weighted) <= tol &&
           std::fabs(a.f1_weighted - b.f1_weighted) <= tol && a.support == b.support;
}

void metrics_vs_oracle() {
    criterion(1, "metrics match a brute-force oracle", 10.0, [](Check& c) {
        const Label labels[3] = {Label::Absent, Label::Unknown, Label::Present};
        long cases = 0;

        // Exhaustive over every (gold, pred) vector of length 1..4.
        for (int n = 1; n <= 4; ++n) {
            long combos = 1;
            for (int i = 0; i < 2 * n; ++i) combos *= 3;
            for (long code = 0; code < combos; ++code) {
                long rest = code;
                std::vector<std::pair<Label, Label>> pairs(n);
                for (int i = 0; i < n; ++i) {
                    pairs[i].first = labels[rest % 3];
                    rest /= 3;
                    pairs[i].second = labels[rest % 3];
                    rest /= 3;
                }
                auto got = compute_metrics(tally(pairs));
                auto want = testing::oracle_metrics(pairs);
                if (!metrics_equal(got, want, 1e-12)) {
                    c.require(false, "exhaustive case diverged at n=" + std::to_string(n));
                    return;
                }
                c.close(got.recall_weighted, got.accuracy, 1e-12,
                        "weighted recall == accuracy");
                ++cases;
            }
        }

        // 1000 random vectors up to length 12.
        std::mt19937 rng(20260826);
        std::uniform_int_distribution<int> len(1, 12), lab(0, 2);
        for (int t = 0; t < 1000; ++t) {
            int n = len(rng);
            std::vector<std::pair<Label, Label>> pairs(n);
            for (auto& p : pairs)
                p = {labels[lab(rng)], labels[lab(rng)]};
            auto got = compute_metrics(tally(pairs));
            auto want = testing::oracle_metrics(pairs);
            if (!metrics_equal(got, want, 1e-12)) {
                c.require(false, "random case diverged at trial " + std::to_string(t));
                return;
            }
            c.close(got.recall_weighted, got.accuracy, 1e-12, "weighted recall == accuracy");
            ++cases;
        }
        c.require(cases > 7000, "unexpected case count");
    });
}

void refinement_traces() {
    criterion(2, "constant and staircase landscapes produce the exact traces", 5.0,
              [](Check& c) {
        Corpus corpus = testing::reference_corpus();

        int teacher_calls = 0;
        FunctionBackend::Fn constant = testing::constant_landscape_teacher(0.5);
        MockRig flat(testing::accuracy_marker_student,
                     [&](const ChatRequest& req) { ++teacher_calls; return constant(req); });
        RefinementEngine flat_engine(corpus, flat.gateway, EngineConfig{10, 16, 1});
        auto run = flat_engine.run("urgency", "ACC=0.5000 initial prompt");

        c.require(run.status == RunStatus::TerminatedExhausted, "constant: not exhausted");
        c.require(run.epochs.size() == 2, "constant: epoch count");
        size_t rounds = 0;
        for (const auto& e : run.epochs) rounds += e.rounds.size();
        c.require(rounds == 17, "constant: expected 1 baseline + 16 rounds, got " +
                                    std::to_string(rounds));
        c.require(teacher_calls == 16, "constant: expected 16 teacher calls, got " +
                                           std::to_string(teacher_calls));
        c.close(run.best_accuracy, 0.5, 1e-12, "constant: best accuracy");

        MockRig stairs(testing::accuracy_marker_student, testing::staircase_teacher(0.1, 0.9));
        RefinementEngine stairs_engine(corpus, stairs.gateway, EngineConfig{10, 16, 1});
        auto climb = stairs_engine.run("urgency", "ACC=0.5000 initial prompt");

        std::vector<double> bests;
        for (const auto& e : climb.epochs)
            if (e.outcome == EpochOutcome::Improved)
                bests.push_back(e.rounds.back().accuracy);
        c.require(bests.size() == 5, "staircase: expected 5 improving epochs, got " +
                                         std::to_string(bests.size()));
        for (size_t i = 0; i < bests.size() && i < 5; ++i)
            c.close(bests[i], 0.5 + 0.1 * i, 1e-9, "staircase: best after epoch " +
                                                       std::to_string(i + 1));
        c.require(climb.status == RunStatus::TerminatedExhausted, "staircase: terminal status");
    });
}

void tie_rule() {
    criterion(3, "equal accuracy never replaces the optimal prompt", 5.0, [](Check& c) {
        Corpus corpus = testing::reference_corpus();
        MockRig rig(testing::accuracy_marker_student, testing::constant_landscape_teacher(0.5));
        RefinementEngine engine(corpus, rig.gateway, EngineConfig{2, 4, 1});
        auto run = engine.run("urgency", "ACC=0.5000 initial prompt");

        c.require(run.best_prompt.text == "ACC=0.5000 initial prompt",
                  "optimal prompt was replaced on a tie");
        c.require(run.epochs.size() == 2, "epoch count");
        c.require(run.epochs[1].failed_history.size() == run.epochs[1].rounds.size(),
                  "every tie must enter the failed history");
        for (const auto& [text, acc] : run.epochs[1].failed_history)
            c.require(acc <= run.best_accuracy + 1e-12, "failed entry above best accuracy");
    });
}

void meta_prompt_contents() {
    criterion(4, "teacher meta-prompt carries all four context elements", 5.0, [](Check& c) {
        TeacherContext ctx;
        ctx.optimal_prompt = {"the optimal prompt text", PromptCandidate::Origin::Initial, {}, {}};
        ctx.peak_accuracy = 0.7345;
        ctx.reasonings = {{"note-7", Label::Present, Label::Absent, "missed the hint"},
                          {"note-3", Label::Absent, Label::Present, "over-read the negation"}};
        ctx.failed_history = {{"first failed prompt", 0.61}, {"second failed prompt", 0.64}};

        std::string meta = Gateway::teacher_message(ctx, 8000);
        c.require(meta.find("the optimal prompt text") != std::string::npos,
                  "optimal prompt missing");
        c.require(meta.find("Peak accuracy with the optimal prompt: 0.7345") != std::string::npos,
                  "peak accuracy missing");
        c.require(meta.find("missed the hint") != std::string::npos, "reasoning missing");
        c.require(meta.find("gold=present predicted=absent") != std::string::npos,
                  "gold/predicted pair missing");
        c.require(meta.find("first failed prompt") != std::string::npos &&
                      meta.find("second failed prompt") != std::string::npos,
                  "failed history missing");
        c.require(meta.find("(0.6100)") != std::string::npos, "failed accuracy missing");
        c.require(meta == Gateway::teacher_message(ctx, 8000), "meta-prompt not deterministic");
    });
}

void interrupt_resume() {
    criterion(5, "interrupted runs resume to the uninterrupted trace, all symptoms", 30.0,
              [](Check& c) {
        Corpus corpus = testing::reference_corpus();
        auto dir = fs::temp_directory_path() / "symx_acceptance_resume";
        fs::remove_all(dir);
        fs::create_directories(dir);

        auto strip = [](nlohmann::json j) {
            j.erase("started_at");
            j.erase("finished_at");
            return j;
        };

        int sidx = 0;
        for (const auto& s : corpus.symptoms()) {
            MockRig ref(testing::accuracy_marker_student, testing::staircase_teacher(0.1, 0.8));
            RefinementEngine ref_engine(corpus, ref.gateway, EngineConfig{10, 16, 1});
            auto reference = ref_engine.run(s.id, "ACC=0.5000 initial prompt");

            // Interrupt after a symptom-dependent number of student calls.
            int interrupt_after = 7 + 13 * sidx++;
            int calls = 0;
            FunctionBackend::Fn failing = [&](const ChatRequest& req) -> std::string {
                if (++calls > interrupt_after)
                    throw BackendUnreachable("injected outage");
                return testing::accuracy_marker_student(req);
            };
            MockRig cut(failing, testing::staircase_teacher(0.1, 0.8));
            RefinementEngine cut_engine(corpus, cut.gateway, EngineConfig{10, 16, 1});
            RunPersistence persist{dir / (s.id + ".checkpoint.json"), {}};

            bool threw = false;
            try {
                cut_engine.run(s.id, "ACC=0.5000 initial prompt", persist);
            } catch (const BackendUnreachable&) {
                threw = true;
            }
            c.require(threw, s.id + ": outage did not interrupt the run");
            c.require(fs::exists(persist.checkpoint_file), s.id + ": no checkpoint written");

            MockRig redo(testing::accuracy_marker_student, testing::staircase_teacher(0.1, 0.8));
            RefinementEngine redo_engine(corpus, redo.gateway, EngineConfig{10, 16, 1});
            auto resumed = redo_engine.resume(persist.checkpoint_file, persist);
            if (strip(to_json(resumed)) != strip(to_json(reference))) {
                c.require(false, s.id + ": resumed run differs from the reference");
                return;
            }
        }
    });
}

void corpus_arithmetic() {
    criterion(6, "corpus splits add up to the corpus totals", 5.0, [](Check& c) {
        Corpus corpus = testing::reference_corpus();
        auto totals = corpus.counts();
        c.require(totals.train == 235, "train count");
        c.require(totals.test_single == 59, "test_single count");
        c.require(totals.train + totals.test_single == 294, "single-symptom total");
        c.require(totals.multi == 375, "multi count");

        long train_sum = 0, test_sum = 0;
        for (const auto& [sid, counts] : corpus.counts_by_symptom()) {
            train_sum += counts.train;
            test_sum += counts.test_single;
        }
        c.require(train_sum == totals.train, "per-symptom train sum");
        c.require(test_sum == totals.test_single, "per-symptom test sum");
    });
}

void report_golden(bool write_golden) {
    criterion(7, "report exports match the frozen golden files", 20.0, [&](Check& c) {
        Corpus corpus = testing::reference_corpus();

        std::vector<RefinementRun> runs;
        for (const auto& s : corpus.symptoms()) {
            RefinementRun run;
            run.symptom_id = s.id;
            run.initial_prompt = "ACC=0.0000 bad prompt";
            run.best_prompt = {"gold prompt", PromptCandidate::Origin::TeacherRefined, 2, 3};
            run.best_accuracy = 1.0;
            run.status = RunStatus::TerminatedPerfect;
            run.epochs = {
                EpochRecord{1,
                            {RoundRecord{1, 1,
                                         {run.initial_prompt, PromptCandidate::Origin::Initial,
                                          {}, {}},
                                         {}, 0.4, true}},
                            EpochOutcome::Improved, {}},
                EpochRecord{2, {RoundRecord{2, 1, run.best_prompt, {}, 1.0, true}},
                            EpochOutcome::Improved, {}}};
            runs.push_back(std::move(run));
        }

        // Gold for the refined prompt; a hedging always-unknown student for
        // the initial one, so the initial metrics take varied mid-range
        // values and exercise the rounding path.
        FunctionBackend::Fn student = [](const ChatRequest& req) {
            if (req.messages.front().content.find("gold prompt") != std::string::npos)
                return testing::gold_student(req);
            return testing::envelope(Label::Unknown);
        };
        MockRig rig(student, [](const ChatRequest&) -> std::string {
            throw Error("teacher unused");
        });
        auto report = compare_runs(corpus, rig.gateway, runs, 4);
        auto md = export_report_markdown(report);
        auto csv = export_report_csv(report);

        fs::path golden = SYMX_GOLDEN_DIR;
        if (write_golden) {
            fs::create_directories(golden);
            std::ofstream(golden / "report.md") << md;
            std::ofstream(golden / "report.csv") << csv;
            std::cout << "  (golden files rewritten under " << golden << ")\n";
        }

        auto slurp = [](const fs::path& p) {
            std::ifstream f(p);
            std::stringstream ss;
            ss << f.rdbuf();
            return ss.str();
        };
        c.require(fs::exists(golden / "report.md"), "golden report.md missing");
        c.require(fs::exists(golden / "report.csv"), "golden report.csv missing");
        if (!c.ok) return;
        c.require(md == slurp(golden / "report.md"), "report.md differs from golden");
        c.require(csv == slurp(golden / "report.csv"), "report.csv differs from golden");
    });
}

void fuzz_student_replies() {
    criterion(8, "malformed student replies never crash classification", 20.0, [](Check& c) {
        Corpus corpus = testing::reference_corpus();
        const Symptom& symptom = corpus.symptom("urgency");
        const ClinicalNote* note = corpus.notes_for("urgency", Split::Train).front();
        PromptCandidate prompt{"fuzz prompt", PromptCandidate::Origin::Initial, {}, {}};

        std::mt19937 rng(97);
        const std::string pool =
            "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 \n\t:=+-*.,"
            "LABELREASONINGpresentabsentunknown";
        std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
        std::uniform_int_distribution<int> len(0, 120);

        std::string current;
        FunctionBackend student([&](const ChatRequest&) { return current; });
        Gateway gateway(student, BackendEndpoint{"", "fuzz", ""}, SamplingConfig{},
                        student, BackendEndpoint{"", "fuzz", ""}, SamplingConfig{});

        for (int t = 0; t < 10000; ++t) {
            current.clear();
            int n = len(rng);
            for (int i = 0; i < n; ++i)
                current += pool[pick(rng)];
            ClassificationResult r = gateway.classify(prompt, symptom, *note);
            if (r.parse_status == ParseStatus::Failed && r.predicted != Label::Unknown) {
                c.require(false, "failed parse did not default to unknown at trial " +
                                     std::to_string(t));
                return;
            }
        }
    });
}

void consistency_agreement() {
    criterion(9, "a deterministic student yields perfect repetition agreement", 5.0,
              [](Check& c) {
        Corpus corpus = testing::reference_corpus();
        MockRig rig(testing::gold_student,
                    [](const ChatRequest&) -> std::string { throw Error("teacher unused"); });
        auto notes = corpus.notes_for("urgency", Split::Train);
        auto report = rig.gateway.consistency_check(
            {"p", PromptCandidate::Origin::Initial, {}, {}}, corpus.symptom("urgency"), notes, 3);
        c.require(report.repetitions == 3, "repetition count");
        c.require(report.notes_total == 20, "note count");
        c.close(report.agreement, 1.0, 1e-12, "agreement");
        c.require(report.disagreements.empty(), "unexpected disagreements");
    });
}

} // namespace

int main(int argc, char** argv) {
    bool write_golden = false;
    for (int i = 1; i < argc; ++i)
        if (std::string(argv[i]) == "--write-golden")
            write_golden = true;

    metrics_vs_oracle();
    refinement_traces();
    tie_rule();
    meta_prompt_contents();
    interrupt_resume();
    corpus_arithmetic();
    report_golden(write_golden);
    fuzz_student_replies();
    consistency_agreement();

    if (failures) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all 9 criteria passed\n");
    return 0;
}
