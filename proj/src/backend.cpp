#include "symx/backend.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace symx {

using nlohmann::json;

std::string flatten_request(const ChatRequest& request) {
    std::string out;
    for (const auto& m : request.messages) {
        out += m.role;
        out += ": ";
        out += m.content;
        out += "\n";
    }
    return out;
}

// --- HttpChatBackend ---

HttpChatBackend::HttpChatBackend(BackendEndpoint endpoint,
                                 std::chrono::milliseconds backoff_base)
    : endpoint_(std::move(endpoint)), backoff_base_(backoff_base) {}

namespace {

// Splits "http://host:port/prefix" into client base and path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& url) {
    auto scheme_end = url.find("://");
    size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = url.find('/', host_start);
    if (path_start == std::string::npos)
        return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/')
        prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

json request_body(const ChatRequest& request) {
    json messages = json::array();
    for (const auto& m : request.messages)
        messages.push_back({{"role", m.role}, {"content", m.content}});
    json body = {{"model", request.model},
                 {"messages", std::move(messages)},
                 {"temperature", request.sampling.temperature},
                 {"top_p", request.sampling.top_p},
                 {"max_tokens", request.sampling.max_output_tokens}};
    if (request.sampling.seed)
        body["seed"] = *request.sampling.seed;
    return body;
}

std::string extract_text(const std::string& body) {
    json j = json::parse(body, nullptr, false);
    if (j.is_discarded())
        throw BackendUnreachable("backend returned non-JSON body");
    // Chat-completion shape first, plain completion as fallback.
    if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
        const auto& choice = j["choices"][0];
        if (choice.contains("message") && choice["message"].contains("content"))
            return choice["message"]["content"].get<std::string>();
        if (choice.contains("text"))
            return choice["text"].get<std::string>();
    }
    throw BackendUnreachable("backend response has no choices[0].message.content");
}

} // namespace

std::string HttpChatBackend::complete(const ChatRequest& request) {
    std::string bearer;
    if (!endpoint_.auth_ref.empty()) {
        const char* cred = std::getenv(endpoint_.auth_ref.c_str());
        if (!cred || !*cred)
            throw AuthMissing(endpoint_.auth_ref);
        bearer = cred;
    }

    auto [base, prefix] = split_base_url(endpoint_.base_url);
    const std::string path = prefix + "/v1/chat/completions";
    const std::string body = request_body(request).dump();

    std::string last_error;
    auto backoff = backoff_base_;
    for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        httplib::Client client(base);
        client.set_connection_timeout(endpoint_.timeout);
        client.set_read_timeout(endpoint_.timeout);
        httplib::Headers headers;
        if (!bearer.empty())
            headers.emplace("Authorization", "Bearer " + bearer);

        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            if (res.error() == httplib::Error::ConnectionTimeout ||
                res.error() == httplib::Error::Read)
                last_error = "timeout: " + last_error;
            continue; // transient transport failure
        }
        if (res->status >= 500) { // server hiccup, retryable
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw BackendUnreachable("backend returned HTTP " + std::to_string(res->status) +
                                     ": " + res->body.substr(0, 200));
        return extract_text(res->body);
    }
    if (last_error.rfind("timeout", 0) == 0)
        throw TimeoutError("backend '" + endpoint_.base_url + "' timed out after " +
                           std::to_string(endpoint_.max_retries + 1) + " attempts");
    throw BackendUnreachable("backend '" + endpoint_.base_url + "' unreachable after " +
                             std::to_string(endpoint_.max_retries + 1) +
                             " attempts: " + last_error);
}

// --- ScriptBackend ---

ScriptBackend::ScriptBackend(std::vector<Rule> rules) : rules_(std::move(rules)) {}

std::unique_ptr<ScriptBackend> ScriptBackend::load(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f)
        throw Error("cannot open mock script '" + path.string() + "'");
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw Error("mock script '" + path.string() + "': " + e.what());
    }
    if (!j.is_array())
        throw Error("mock script must be a JSON array of rules");

    std::vector<Rule> rules;
    for (const auto& r : j) {
        Rule rule;
        rule.contains = r.value("contains", std::string{});
        if (r.contains("responses"))
            rule.responses = r["responses"].get<std::vector<std::string>>();
        else if (r.contains("response"))
            rule.responses = {r["response"].get<std::string>()};
        else
            throw Error("mock script rule needs 'response' or 'responses'");
        rule.repeat_last = r.value("repeat_last", true);
        rules.push_back(std::move(rule));
    }
    return std::make_unique<ScriptBackend>(std::move(rules));
}

std::string ScriptBackend::complete(const ChatRequest& request) {
    const std::string flat = flatten_request(request);
    std::lock_guard<std::mutex> lock(mutex_);
    for (auto& rule : rules_) {
        if (!rule.contains.empty() && flat.find(rule.contains) == std::string::npos)
            continue;
        if (rule.next < rule.responses.size())
            return rule.responses[rule.next++];
        if (rule.repeat_last && !rule.responses.empty())
            return rule.responses.back();
    }
    throw BackendUnreachable("mock script has no rule matching the request");
}

} // namespace symx
