#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "symx/errors.hpp"

namespace symx {

struct SamplingConfig {
    double temperature = 0.2;
    double top_p = 0.1;
    int max_output_tokens = 1024;
    std::optional<long> seed;
};

struct BackendEndpoint {
    std::string base_url;
    std::string model_name;
    std::string auth_ref;  // env var holding the credential; empty = no auth
    std::chrono::milliseconds timeout{60000};
    int max_retries = 2;
};

struct ChatMessage {
    std::string role;
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    SamplingConfig sampling;
};

/// Abstract chat-completion transport. Implementations must be safe to
/// call from multiple threads.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    /// Returns the generated text. Throws BackendUnreachable, AuthMissing
    /// or TimeoutError on transport problems.
    virtual std::string complete(const ChatRequest& request) = 0;
};

/// HTTP JSON chat-completion client (OpenAI-style wire contract, local
/// inference servers included). Transient transport failures are retried
/// with exponential backoff up to endpoint.max_retries.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(BackendEndpoint endpoint,
                             std::chrono::milliseconds backoff_base = std::chrono::seconds(1));

    std::string complete(const ChatRequest& request) override;

    const BackendEndpoint& endpoint() const { return endpoint_; }

private:
    BackendEndpoint endpoint_;
    std::chrono::milliseconds backoff_base_;
};

/// Scriptable mock backend driven by a list of rules. Each rule matches
/// requests whose flattened content contains `contains` (empty = match
/// anything) and serves its responses in order; the last response of a
/// rule repeats once exhausted unless `once` entries remain elsewhere.
class ScriptBackend : public ChatBackend {
public:
    struct Rule {
        std::string contains;
        std::vector<std::string> responses;
        size_t next = 0;
        bool repeat_last = true;
    };

    explicit ScriptBackend(std::vector<Rule> rules);

    /// Loads a JSON script file: [{"contains": "...", "responses": [...],
    /// "repeat_last": true}, ...] (a bare "response" string also works).
    static std::unique_ptr<ScriptBackend> load(const std::filesystem::path& path);

    std::string complete(const ChatRequest& request) override;

private:
    std::vector<Rule> rules_;
    std::mutex mutex_;
};

/// Adapter for in-test lambdas.
class FunctionBackend : public ChatBackend {
public:
    using Fn = std::function<std::string(const ChatRequest&)>;
    explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}

    std::string complete(const ChatRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

/// Concatenated message contents, used for content-predicate matching.
std::string flatten_request(const ChatRequest& request);

} // namespace symx
