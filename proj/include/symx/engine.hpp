#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "symx/corpus.hpp"
#include "symx/gateway.hpp"

namespace symx {

struct RoundRecord {
    int epoch = 0;
    int round = 0;
    PromptCandidate candidate;
    std::vector<ClassificationResult> per_note; // empty for degenerate rounds
    double accuracy = 0.0;
    bool improved = false;
    bool degenerate = false; // teacher failed to produce a new prompt

    bool operator==(const RoundRecord&) const = default;
};

enum class EpochOutcome { Improved, Exhausted };

struct EpochRecord {
    int epoch = 0;
    std::vector<RoundRecord> rounds;
    EpochOutcome outcome = EpochOutcome::Exhausted;
    std::vector<std::pair<std::string, double>> failed_history;

    bool operator==(const EpochRecord&) const = default;
};

enum class RunStatus { Running, TerminatedExhausted, TerminatedMaxEpochs, TerminatedPerfect };

const char* run_status_name(RunStatus s);

struct EngineConfig {
    int max_epochs = 10;
    int max_rounds = 16;
    int parallelism = 1; // concurrent classify calls within a round

    /// Only the loop-shaping fields; parallelism may differ across resumes.
    bool semantically_equal(const EngineConfig& other) const {
        return max_epochs == other.max_epochs && max_rounds == other.max_rounds;
    }
};

struct RefinementRun {
    std::string symptom_id;
    std::string initial_prompt;
    PromptCandidate best_prompt;
    double best_accuracy = 0.0;
    std::vector<EpochRecord> epochs;
    RunStatus status = RunStatus::Running;
    EngineConfig config;
    std::string started_at;
    std::string finished_at;
};

nlohmann::json to_json(const RefinementRun& run);
RefinementRun run_from_json(const nlohmann::json& j);

/// Where a run writes its checkpoint and append-only event log.
/// Empty paths disable persistence (in-memory runs for tests).
struct RunPersistence {
    std::filesystem::path checkpoint_file;
    std::filesystem::path log_file;
};

/// Per-symptom epoch/round loop with strict-improvement acceptance,
/// failed-prompt bookkeeping and round-granular checkpointing.
class RefinementEngine {
public:
    RefinementEngine(const Corpus& corpus, Gateway& gateway, EngineConfig config);

    /// Runs refinement to termination. Gateway transport errors abort the
    /// run, leaving a resumable checkpoint when persistence is enabled.
    RefinementRun run(const std::string& symptom_id, const std::string& initial_prompt,
                      const RunPersistence& persist = {});

    /// Continues an aborted run from its checkpoint. An already-terminated
    /// checkpoint is returned unchanged. Throws CorruptCheckpoint or
    /// ConfigMismatch.
    RefinementRun resume(const std::filesystem::path& checkpoint_file,
                         const RunPersistence& persist = {});

    static constexpr int kCheckpointFormatVersion = 1;

private:
    struct State;

    RefinementRun drive(State& st, const RunPersistence& persist);

    const Corpus& corpus_;
    Gateway& gateway_;
    EngineConfig config_;
};

/// Atomic write (temp file + rename) used for checkpoints and run files.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

} // namespace symx
