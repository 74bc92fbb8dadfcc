#pragma once

// Local chat-completions stub for backend tests. Responses are queued as
// (status, body) pairs; once the queue runs dry every request gets `fallback`.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <deque>
#include <mutex>
#include <thread>

#include "json.hpp"

namespace spark::test {

struct SeenRequest {
    std::string path;
    std::string body;
    std::string authorization;  // empty when absent
};

inline std::string completion_body(const std::string& content, int prompt_tokens = 11, int completion_tokens = 7) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
                          {"usage", {{"prompt_tokens", prompt_tokens}, {"completion_tokens", completion_tokens}}}}
        .dump();
}

class StubServer {
public:
    using Responder = std::function<std::pair<int, std::string>(const nlohmann::json& request)>;

    StubServer() {
        server_.Post(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
            std::pair<int, std::string> reply;
            {
                std::lock_guard lock(mu_);
                seen_.push_back({req.path, req.body, req.get_header_value("Authorization")});
                if (!queue_.empty()) {
                    reply = queue_.front();
                    queue_.pop_front();
                } else if (responder_) {
                    reply = responder_(nlohmann::json::parse(req.body, nullptr, false));
                } else {
                    reply = {500, "no scripted response"};
                }
            }
            res.status = reply.first;
            res.set_content(reply.second, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    StubServer(const StubServer&) = delete;
    StubServer& operator=(const StubServer&) = delete;

    std::string endpoint(const std::string& path = "/v1") const {
        return "http://127.0.0.1:" + std::to_string(port_) + path;
    }

    void enqueue(int status, std::string body) {
        std::lock_guard lock(mu_);
        queue_.emplace_back(status, std::move(body));
    }
    void respond_with(Responder r) {
        std::lock_guard lock(mu_);
        responder_ = std::move(r);
    }
    std::vector<SeenRequest> seen() const {
        std::lock_guard lock(mu_);
        return seen_;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mu_;
    std::deque<std::pair<int, std::string>> queue_;
    Responder responder_;
    std::vector<SeenRequest> seen_;
};

}  // namespace spark::test
