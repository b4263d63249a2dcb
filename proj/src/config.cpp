#include "symx/config.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

namespace symx {

using nlohmann::json;

namespace {

BackendConfig parse_backend(const json& j, const std::filesystem::path& config_dir,
                            double default_temperature, double default_top_p) {
    BackendConfig out;
    out.sampling.temperature = default_temperature;
    out.sampling.top_p = default_top_p;
    if (j.is_null()) return out;

    out.type = j.value("type", std::string("http"));
    if (out.type != "http" && out.type != "mock")
        throw Error("backend type must be 'http' or 'mock', got '" + out.type + "'");

    out.endpoint.base_url = j.value("base_url", std::string{});
    out.endpoint.model_name = j.value("model", std::string{});
    out.endpoint.auth_ref = j.value("auth_env", std::string{});
    out.endpoint.timeout = std::chrono::milliseconds(j.value("timeout_ms", 60000));
    out.endpoint.max_retries = j.value("max_retries", 2);
    if (out.endpoint.max_retries < 0)
        throw Error("max_retries must be >= 0");
    if (out.endpoint.timeout.count() <= 0)
        throw Error("timeout_ms must be > 0");

    if (j.contains("script")) {
        std::filesystem::path p = j["script"].get<std::string>();
        out.script = p.is_relative() ? config_dir / p : p;
    }
    if (out.type == "mock" && out.script.empty())
        throw Error("mock backend needs a 'script' path");

    if (j.contains("sampling")) {
        const auto& s = j["sampling"];
        out.sampling.temperature = s.value("temperature", out.sampling.temperature);
        out.sampling.top_p = s.value("top_p", out.sampling.top_p);
        out.sampling.max_output_tokens = s.value("max_output_tokens", 1024);
        if (s.contains("seed") && !s["seed"].is_null())
            out.sampling.seed = s["seed"].get<long>();
    }
    if (out.sampling.temperature < 0)
        throw Error("temperature must be >= 0");
    if (out.sampling.top_p <= 0 || out.sampling.top_p > 1)
        throw Error("top_p must be in (0, 1]");
    if (out.sampling.max_output_tokens <= 0)
        throw Error("max_output_tokens must be > 0");
    return out;
}

} // namespace

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f)
        throw Error("cannot open config file '" + path.string() + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw Error("config '" + path.string() + "': " + e.what());
    }

    const auto dir = path.parent_path();
    auto resolve = [&](const std::string& p) -> std::filesystem::path {
        std::filesystem::path fp = p;
        return fp.is_relative() ? dir / fp : fp;
    };

    RunConfig cfg;
    if (!j.contains("corpus") || !j["corpus"].is_string())
        throw Error("config needs a 'corpus' manifest path");
    cfg.corpus_manifest = resolve(j["corpus"].get<std::string>());
    if (j.contains("prompts"))
        cfg.prompts_file = resolve(j["prompts"].get<std::string>());

    cfg.student = parse_backend(j.value("student", json()), dir, 0.2, 0.1);
    cfg.teacher = parse_backend(j.value("teacher", json()), dir, 2.0, 0.9);

    cfg.max_epochs = j.value("max_epochs", 10);
    cfg.max_rounds = j.value("max_rounds", 16);
    cfg.jobs = j.value("jobs", 1);
    cfg.parallelism = j.value("parallelism", 1);
    cfg.reasoning_char_budget = j.value("reasoning_char_budget", 8000);
    cfg.note_excerpt_chars = j.value("note_excerpt_chars", 160);
    if (j.contains("output_dir"))
        cfg.output_dir = resolve(j["output_dir"].get<std::string>());
    if (j.contains("seed") && !j["seed"].is_null())
        cfg.seed = j["seed"].get<long>();

    for (auto [name, v] : std::initializer_list<std::pair<const char*, int>>{
             {"max_epochs", cfg.max_epochs},
             {"max_rounds", cfg.max_rounds},
             {"jobs", cfg.jobs},
             {"parallelism", cfg.parallelism},
             {"reasoning_char_budget", cfg.reasoning_char_budget}})
        if (v < 1)
            throw Error(std::string("config '") + name + "' must be >= 1");
    return cfg;
}

std::map<std::string, std::string> RunConfig::load_prompts() const {
    if (prompts_file.empty())
        throw Error("config has no 'prompts' file");
    std::ifstream f(prompts_file);
    if (!f)
        throw Error("cannot open prompts file '" + prompts_file.string() + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw Error("prompts '" + prompts_file.string() + "': " + e.what());
    }
    if (!j.is_object())
        throw Error("prompts file must map symptom id -> prompt text");
    std::map<std::string, std::string> out;
    for (const auto& [sid, text] : j.items()) {
        if (!text.is_string() || text.get<std::string>().empty())
            throw Error("prompt for '" + sid + "' must be a non-empty string");
        out[sid] = text.get<std::string>();
    }
    return out;
}

std::unique_ptr<ChatBackend> make_backend(const BackendConfig& config) {
    if (config.type == "mock")
        return ScriptBackend::load(config.script);
    return std::make_unique<HttpChatBackend>(config.endpoint);
}

} // namespace symx
