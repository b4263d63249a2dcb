"""Teacher-student prompt refinement for clinical symptom extraction."""

from symx._core import (
    ChatModels,
    ClassificationResult,
    ClinicalNote,
    Corpus,
    EngineConfig,
    EvaluationReport,
    Label,
    MetricSet,
    ParseStatus,
    PromptCandidate,
    RefinementEngine,
    RefinementRun,
    RunStatus,
    Split,
    SplitCounts,
    Symptom,
    SymxError,
    compare_runs,
    evaluate_prompt,
    export_report_csv,
    export_report_markdown,
    export_trends_csv,
    format_round2,
    run_from_json,
    score,
    teacher_message,
)

__all__ = [
    "ChatModels",
    "ClassificationResult",
    "ClinicalNote",
    "Corpus",
    "EngineConfig",
    "EvaluationReport",
    "Label",
    "MetricSet",
    "ParseStatus",
    "PromptCandidate",
    "RefinementEngine",
    "RefinementRun",
    "RunStatus",
    "Split",
    "SplitCounts",
    "Symptom",
    "SymxError",
    "compare_runs",
    "evaluate_prompt",
    "export_report_csv",
    "export_report_markdown",
    "export_trends_csv",
    "format_round2",
    "run_from_json",
    "score",
    "teacher_message",
]
