#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cmath>
#include <thread>

#include "spark/backend.hpp"
#include "spark/errors.hpp"

namespace spark {

namespace {

struct SplitUrl {
    std::string origin;
    std::string path;
};

SplitUrl split_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint must start with http:// or https://: " + endpoint);
    const auto path_start = endpoint.find('/', scheme_end + 3);
    SplitUrl u;
    u.origin = endpoint.substr(0, path_start);
    std::string path = path_start == std::string::npos ? std::string() : endpoint.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    if (!path.ends_with("/chat/completions")) path += "/chat/completions";
    u.path = path;
    return u;
}

bool is_transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

OpenAIBackend::OpenAIBackend(OpenAIConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleep_(std::move(sleeper)) {
    if (!sleep_) sleep_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    auto u = split_endpoint(config_.endpoint);
    origin_ = std::move(u.origin);
    path_ = std::move(u.path);
}

nlohmann::json OpenAIBackend::build_payload(const ChatRequest& request) const {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) messages.push_back({{"role", m.role}, {"content", m.content}});
    return {
        {"model", config_.model},
        {"messages", std::move(messages)},
        {"temperature", request.decoding.temperature},
        {"max_tokens", request.decoding.max_tokens},
    };
}

ChatResponse OpenAIBackend::complete(const ChatRequest& request) {
    const std::string body = build_payload(request).dump();
    const auto timeout = request.decoding.request_timeout;

    httplib::Client client(origin_);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(config_.connect_timeout).count(),
                                  0);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    std::string last_error;
    const int attempts = std::max(0, request.decoding.retry_budget) + 1;
    const auto started = std::chrono::steady_clock::now();
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            const double scale = std::pow(config_.backoff_factor, attempt - 1);
            sleep_(std::chrono::milliseconds(
                static_cast<long long>(static_cast<double>(config_.backoff_initial.count()) * scale)));
        }

        auto res = client.Post(path_, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 500);
            if (is_transient_status(res->status)) continue;
            throw BackendUnavailable("chat completion rejected: " + last_error);
        }

        try {
            const auto j = nlohmann::json::parse(res->body);
            const auto& content = j.at("choices").at(0).at("message").at("content");
            ChatResponse out;
            out.text = content.is_null() ? std::string() : content.get<std::string>();
            if (j.contains("usage") && j["usage"].is_object()) {
                out.prompt_tokens = j["usage"].value("prompt_tokens", std::uint64_t{0});
                out.completion_tokens = j["usage"].value("completion_tokens", std::uint64_t{0});
            }
            out.attempts = attempt + 1;
            out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                                started);
            return out;
        } catch (const nlohmann::json::exception& e) {
            last_error = std::string("malformed response body: ") + e.what();
        }
    }
    throw BackendUnavailable("chat completion failed after " + std::to_string(attempts) + " attempt(s): " + last_error);
}

}  // namespace spark
