// Python bindings for the main operations: corpus loading, metric
// scoring, the chat gateway on mock or callable backends, the
// refinement engine and the report exports.

#include <memory>

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "symx/config.hpp"
#include "symx/engine.hpp"
#include "symx/report.hpp"

namespace py = pybind11;
using namespace symx;

namespace {

/// Owns both backends plus the gateway on top of them, since the C++
/// Gateway only holds references.
struct ChatModels {
    std::unique_ptr<ChatBackend> student;
    std::unique_ptr<ChatBackend> teacher;
    std::unique_ptr<Gateway> gateway;

    ChatModels(std::unique_ptr<ChatBackend> s, std::unique_ptr<ChatBackend> t,
               GatewayOptions options)
        : student(std::move(s)), teacher(std::move(t)),
          gateway(std::make_unique<Gateway>(*student, BackendEndpoint{"", "student", ""},
                                            SamplingConfig{0.2, 0.1, 1024, {}}, *teacher,
                                            BackendEndpoint{"", "teacher", ""},
                                            SamplingConfig{2.0, 0.9, 1024, {}}, options)) {}
};

py::dict request_to_dict(const ChatRequest& req) {
    py::list messages;
    for (const auto& m : req.messages) {
        py::dict d;
        d["role"] = m.role;
        d["content"] = m.content;
        messages.append(d);
    }
    py::dict out;
    out["model"] = req.model;
    out["messages"] = messages;
    out["temperature"] = req.sampling.temperature;
    out["top_p"] = req.sampling.top_p;
    return out;
}

/// Wraps a Python callable (request dict -> reply string) as a backend.
/// Engine entry points drop the GIL, so the wrapper re-acquires it.
std::unique_ptr<ChatBackend> callable_backend(py::function fn) {
    return std::make_unique<FunctionBackend>([fn = std::move(fn)](const ChatRequest& req) {
        py::gil_scoped_acquire gil;
        return py::cast<std::string>(fn(request_to_dict(req)));
    });
}

std::shared_ptr<ChatModels> models_from_callables(py::function student, py::function teacher,
                                                  int reasoning_char_budget) {
    return std::make_shared<ChatModels>(callable_backend(std::move(student)),
                                        callable_backend(std::move(teacher)),
                                        GatewayOptions{reasoning_char_budget});
}

std::shared_ptr<ChatModels> models_from_scripts(const std::filesystem::path& student,
                                                const std::filesystem::path& teacher,
                                                int reasoning_char_budget) {
    return std::make_shared<ChatModels>(ScriptBackend::load(student), ScriptBackend::load(teacher),
                                        GatewayOptions{reasoning_char_budget});
}

MetricSet score_pairs(const std::vector<std::pair<int, int>>& pairs) {
    std::vector<std::pair<Label, Label>> typed;
    typed.reserve(pairs.size());
    for (auto [g, p] : pairs)
        typed.emplace_back(label_from_int(g), label_from_int(p));
    return compute_metrics(tally(typed));
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Teacher-student prompt refinement for clinical symptom extraction";

    py::register_exception<Error>(m, "SymxError");

    py::enum_<Label>(m, "Label")
        .value("ABSENT", Label::Absent)
        .value("UNKNOWN", Label::Unknown)
        .value("PRESENT", Label::Present);

    py::enum_<Split>(m, "Split")
        .value("TRAIN", Split::Train)
        .value("TEST_SINGLE", Split::TestSingle)
        .value("MULTI", Split::Multi);

    py::enum_<RunStatus>(m, "RunStatus")
        .value("RUNNING", RunStatus::Running)
        .value("TERMINATED_EXHAUSTED", RunStatus::TerminatedExhausted)
        .value("TERMINATED_MAX_EPOCHS", RunStatus::TerminatedMaxEpochs)
        .value("TERMINATED_PERFECT", RunStatus::TerminatedPerfect);

    py::enum_<ParseStatus>(m, "ParseStatus")
        .value("CLEAN", ParseStatus::Clean)
        .value("RECOVERED_AFTER_RETRY", ParseStatus::RecoveredAfterRetry)
        .value("FAILED", ParseStatus::Failed);

    py::class_<Symptom>(m, "Symptom")
        .def_readonly("id", &Symptom::id)
        .def_readonly("display_name", &Symptom::display_name);

    py::class_<ClinicalNote>(m, "ClinicalNote")
        .def_readonly("note_id", &ClinicalNote::note_id)
        .def_readonly("text", &ClinicalNote::text)
        .def_readonly("split", &ClinicalNote::split)
        .def_readonly("labels", &ClinicalNote::labels);

    py::class_<SplitCounts>(m, "SplitCounts")
        .def_readonly("train", &SplitCounts::train)
        .def_readonly("test_single", &SplitCounts::test_single)
        .def_readonly("multi", &SplitCounts::multi);

    py::class_<Corpus>(m, "Corpus")
        .def_static("load", &Corpus::load, py::arg("manifest_path"))
        .def("counts", &Corpus::counts)
        .def("symptoms", &Corpus::symptoms)
        .def("symptom", &Corpus::symptom, py::return_value_policy::reference_internal)
        .def("notes_for",
             [](const Corpus& c, const std::string& symptom_id, Split split) {
                 std::vector<ClinicalNote> out;
                 for (const ClinicalNote* n : c.notes_for(symptom_id, split))
                     out.push_back(*n);
                 return out;
             },
             py::arg("symptom_id"), py::arg("split"));

    py::class_<MetricSet>(m, "MetricSet")
        .def_readonly("accuracy", &MetricSet::accuracy)
        .def_readonly("precision_weighted", &MetricSet::precision_weighted)
        .def_readonly("recall_weighted", &MetricSet::recall_weighted)
        .def_readonly("f1_weighted", &MetricSet::f1_weighted)
        .def_readonly("support", &MetricSet::support)
        .def("__repr__", [](const MetricSet& s) {
            return "MetricSet(accuracy=" + std::to_string(s.accuracy) +
                   ", f1_weighted=" + std::to_string(s.f1_weighted) + ")";
        });

    m.def("score", &score_pairs, py::arg("pairs"),
          "Metrics for a list of (gold, predicted) label-value pairs.");

    py::class_<PromptCandidate>(m, "PromptCandidate")
        .def(py::init([](const std::string& text) {
                 return PromptCandidate{text, PromptCandidate::Origin::Initial, {}, {}};
             }),
             py::arg("text"))
        .def_readonly("text", &PromptCandidate::text);

    py::class_<ClassificationResult>(m, "ClassificationResult")
        .def_readonly("note_id", &ClassificationResult::note_id)
        .def_readonly("predicted", &ClassificationResult::predicted)
        .def_readonly("reasoning", &ClassificationResult::reasoning)
        .def_readonly("parse_status", &ClassificationResult::parse_status)
        .def_readonly("raw_response", &ClassificationResult::raw_response);

    py::class_<ChatModels, std::shared_ptr<ChatModels>>(m, "ChatModels")
        .def_static("from_callables", &models_from_callables, py::arg("student"),
                    py::arg("teacher"), py::arg("reasoning_char_budget") = 8000,
                    "Backends from Python callables taking a request dict and "
                    "returning the reply text.")
        .def_static("from_scripts", &models_from_scripts, py::arg("student_script"),
                    py::arg("teacher_script"), py::arg("reasoning_char_budget") = 8000)
        .def("classify",
             [](const ChatModels& models, const std::string& prompt, const Symptom& symptom,
                const ClinicalNote& note) {
                 py::gil_scoped_release release;
                 return models.gateway->classify(
                     {prompt, PromptCandidate::Origin::Initial, {}, {}}, symptom, note);
             },
             py::arg("prompt"), py::arg("symptom"), py::arg("note"));

    py::class_<EngineConfig>(m, "EngineConfig")
        .def(py::init([](int max_epochs, int max_rounds, int parallelism) {
                 return EngineConfig{max_epochs, max_rounds, parallelism};
             }),
             py::arg("max_epochs") = 10, py::arg("max_rounds") = 16, py::arg("parallelism") = 1)
        .def_readwrite("max_epochs", &EngineConfig::max_epochs)
        .def_readwrite("max_rounds", &EngineConfig::max_rounds)
        .def_readwrite("parallelism", &EngineConfig::parallelism);

    py::class_<RefinementRun>(m, "RefinementRun")
        .def_readonly("symptom_id", &RefinementRun::symptom_id)
        .def_readonly("initial_prompt", &RefinementRun::initial_prompt)
        .def_readonly("best_accuracy", &RefinementRun::best_accuracy)
        .def_readonly("status", &RefinementRun::status)
        .def_property_readonly("best_prompt",
                               [](const RefinementRun& r) { return r.best_prompt.text; })
        .def_property_readonly("epoch_count",
                               [](const RefinementRun& r) { return r.epochs.size(); })
        .def("to_json", [](const RefinementRun& r) { return to_json(r).dump(2); });

    m.def("run_from_json",
          [](const std::string& text) { return run_from_json(nlohmann::json::parse(text)); },
          py::arg("text"));

    py::class_<RefinementEngine>(m, "RefinementEngine")
        .def(py::init([](const Corpus& corpus, std::shared_ptr<ChatModels> models,
                         const EngineConfig& config) {
                 return new RefinementEngine(corpus, *models->gateway, config);
             }),
             py::arg("corpus"), py::arg("models"), py::arg("config") = EngineConfig{},
             py::keep_alive<1, 2>(), py::keep_alive<1, 3>())
        .def("run",
             [](RefinementEngine& engine, const std::string& symptom_id,
                const std::string& initial_prompt,
                const std::optional<std::filesystem::path>& checkpoint,
                const std::optional<std::filesystem::path>& log) {
                 // pathlib has no empty path ('' becomes '.'), hence optionals.
                 RunPersistence persist{checkpoint.value_or(""), log.value_or("")};
                 py::gil_scoped_release release;
                 return engine.run(symptom_id, initial_prompt, persist);
             },
             py::arg("symptom_id"), py::arg("initial_prompt"),
             py::arg("checkpoint") = py::none(), py::arg("log") = py::none())
        .def("resume",
             [](RefinementEngine& engine, const std::filesystem::path& checkpoint,
                const std::optional<std::filesystem::path>& log) {
                 RunPersistence persist{checkpoint, log.value_or("")};
                 py::gil_scoped_release release;
                 return engine.resume(checkpoint, persist);
             },
             py::arg("checkpoint"), py::arg("log") = py::none());

    py::class_<EvaluationReport>(m, "EvaluationReport")
        .def_property_readonly("symptom_ids", [](const EvaluationReport& r) {
            std::vector<std::string> out;
            for (const auto& row : r.per_symptom)
                out.push_back(row.symptom_id);
            return out;
        });

    m.def("evaluate_prompt",
          [](const Corpus& corpus, std::shared_ptr<ChatModels> models,
             const std::string& symptom_id, const std::string& prompt, Split split,
             int parallelism) {
              py::gil_scoped_release release;
              auto out = evaluate_prompt(corpus, *models->gateway, symptom_id,
                                         {prompt, PromptCandidate::Origin::Initial, {}, {}},
                                         split, parallelism);
              return std::make_pair(out.metrics, out.per_note);
          },
          py::arg("corpus"), py::arg("models"), py::arg("symptom_id"), py::arg("prompt"),
          py::arg("split"), py::arg("parallelism") = 1);

    m.def("compare_runs",
          [](const Corpus& corpus, std::shared_ptr<ChatModels> models,
             const std::vector<RefinementRun>& runs, int parallelism) {
              py::gil_scoped_release release;
              return compare_runs(corpus, *models->gateway, runs, parallelism);
          },
          py::arg("corpus"), py::arg("models"), py::arg("runs"), py::arg("parallelism") = 1);

    m.def("export_report_markdown", &export_report_markdown, py::arg("report"));
    m.def("export_report_csv", &export_report_csv, py::arg("report"));
    m.def("export_trends_csv",
          [](const std::vector<RefinementRun>& runs) { return export_trends_csv(runs); },
          py::arg("runs"));
    m.def("format_round2", &format_round2, py::arg("value"));
    m.def("teacher_message",
          [](const std::string& optimal_prompt, double peak_accuracy,
             const std::vector<std::pair<std::string, double>>& failed_history,
             int reasoning_char_budget) {
              TeacherContext ctx;
              ctx.optimal_prompt = {optimal_prompt, PromptCandidate::Origin::Initial, {}, {}};
              ctx.peak_accuracy = peak_accuracy;
              ctx.failed_history = failed_history;
              return Gateway::teacher_message(ctx, reasoning_char_budget);
          },
          py::arg("optimal_prompt"), py::arg("peak_accuracy"),
          py::arg("failed_history") = std::vector<std::pair<std::string, double>>{},
          py::arg("reasoning_char_budget") = 8000);
}
