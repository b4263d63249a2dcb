#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "symx/backend.hpp"

namespace symx {

struct BackendConfig {
    std::string type = "http"; // "http" | "mock"
    BackendEndpoint endpoint;
    std::filesystem::path script; // mock script path (type == "mock")
    SamplingConfig sampling;
};

/// Operator configuration loaded from a JSON file. All refinement
/// hyperparameters carry their standard defaults and are overridable.
struct RunConfig {
    std::filesystem::path corpus_manifest;
    std::filesystem::path prompts_file; // JSON: symptom id -> initial prompt text
    BackendConfig student;              // defaults: temperature 0.2, top_p 0.1
    BackendConfig teacher;              // defaults: temperature 2.0, top_p 0.9
    int max_epochs = 10;
    int max_rounds = 16;
    int jobs = 1;        // concurrent symptom refinements
    int parallelism = 1; // concurrent classify calls within a round
    int reasoning_char_budget = 8000;
    int note_excerpt_chars = 160;
    std::filesystem::path output_dir = "out";
    std::optional<long> seed;

    /// Throws symx::Error on malformed config or illegal limits.
    static RunConfig load(const std::filesystem::path& path);

    std::map<std::string, std::string> load_prompts() const;
};

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config);

} // namespace symx
