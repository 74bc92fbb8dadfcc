#pragma once

// Chat-completion abstraction shared by the ROUTE, DIRECTIVE and EDIT roles.

#include <chrono>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spark/locality.hpp"
#include "spark/program.hpp"
#include "spark/util.hpp"

namespace spark {

enum class Role : std::uint8_t { kRoute, kDirective, kEdit };

std::string_view to_string(Role r) noexcept;
std::optional<Role> role_from_string(std::string_view s) noexcept;

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

/// Decoding settings. One instance serves every role in a run.
struct DecodingSettings {
    double temperature = 0.7;
    int max_tokens = 8192;
    std::chrono::milliseconds request_timeout{std::chrono::minutes(10)};
    int retry_budget = 3;
};

struct ChatRequest {
    Role role = Role::kRoute;
    std::vector<ChatMessage> messages;
    DecodingSettings decoding;

    // Request context for simulated editors. Never sent over the wire.
    std::optional<Factor> factor;
    std::string parent_program;
};

struct ChatResponse {
    std::string text;
    std::chrono::milliseconds latency{0};
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    int attempts = 1;
};

class ChatBackend {
public:
    virtual ~ChatBackend() = default;

    /// Throws BackendUnavailable when no response can be obtained.
    virtual ChatResponse complete(const ChatRequest& request) = 0;

    /// Resumable state for checkpoints; stateless backends return null.
    virtual nlohmann::json save_state() const { return nullptr; }
    virtual void load_state(const nlohmann::json&) {}
};

/// Replays queued responses per role. Thread-safe.
class ScriptedBackend : public ChatBackend {
public:
    ScriptedBackend() = default;
    explicit ScriptedBackend(std::map<Role, std::vector<std::string>> script);
    ScriptedBackend(ScriptedBackend&& other) noexcept;

    /// Loads {"ROUTE": [...], "DIRECTIVE": [...], "EDIT": [...]}.
    static ScriptedBackend from_json(const nlohmann::json& j);

    void push(Role role, std::string response);

    /// Throws ScriptExhausted when the role's queue is empty.
    ChatResponse complete(const ChatRequest& request) override;

    std::size_t calls() const;
    std::size_t calls(Role role) const;
    /// Every request seen so far, in order.
    std::vector<ChatRequest> requests() const;

    nlohmann::json save_state() const override;
    void load_state(const nlohmann::json& state) override;

private:
    mutable std::mutex mu_;
    std::map<Role, std::vector<std::string>> script_;
    std::map<Role, std::size_t> cursor_;
    std::vector<ChatRequest> log_;
};

/// Parameters of the simulated editor. Each edit touches a set of scopes
/// (factor regions and/or frozen scaffolding); every touched scope
/// independently stays executable with probability `p_valid`, so an edit
/// touching k scopes is feasible with probability p_valid^k.
struct MockEditorConfig {
    double p_valid = 0.75;
    /// Free-form edits only: probability the edit is entangled.
    double entangle_prob = 0.5;
    /// Scopes an entangled free-form edit touches: 2 (both factor regions) or
    /// 3 (both regions plus scaffolding).
    int entangled_scopes = 3;
    /// Factor-conditioned edits: probability of also touching the other region.
    double leak_prob = 0.0;
    /// Probability that an executable in-region edit adds a scoring token.
    double improve_prob = 0.5;
    /// ROUTE responses: probability of an unparseable answer.
    double route_invalid_prob = 0.0;
    std::string operator_token = "head";
    std::string action_token = "gate";
    std::uint64_t seed = 7;
};

/// Marker embedded in defect lines; one per hook kind, e.g.
/// "spark-mock-defect:syntax".
std::string mock_defect_marker(std::string_view kind);

/// Produces mock edits of tagged programs by inserting one line per touched
/// scope. Defect lines carry mock_defect_marker() text so validator hooks with
/// matching forbidden substrings reject them.
class MockEditor {
public:
    MockEditor(MockEditorConfig config, TagConfig tags);

    const MockEditorConfig& config() const noexcept { return config_; }
    const TagConfig& tags() const noexcept { return tags_; }

    /// Scopes for a factor-conditioned edit (factor set) or a free-form edit.
    RegionSet draw_scopes(std::optional<Factor> factor, Rng& rng) const;
    /// Returns the edited program text.
    std::string apply(const TaggedProgram& parent, RegionSet scopes, Rng& rng, std::uint64_t& counter) const;

private:
    MockEditorConfig config_;
    TagConfig tags_;
};

/// Simulated LLM: random factor tokens, a fixed directive, and MockEditor edits
/// of the parent program carried in the request context. Thread-safe and
/// bit-reproducible for a fixed seed.
class StochasticBackend : public ChatBackend {
public:
    StochasticBackend(MockEditorConfig config, TagConfig tags);

    ChatResponse complete(const ChatRequest& request) override;

    nlohmann::json save_state() const override;
    void load_state(const nlohmann::json& state) override;

private:
    mutable std::mutex mu_;
    MockEditor editor_;
    Rng rng_;
    std::uint64_t counter_ = 0;
};

struct OpenAIConfig {
    /// Base URL such as "https://api.example.com/v1"; "/chat/completions" is appended
    /// unless already present.
    std::string endpoint;
    std::string model;
    std::string api_key;  // empty: no Authorization header
    std::chrono::milliseconds connect_timeout{std::chrono::seconds(10)};
    std::chrono::milliseconds backoff_initial{std::chrono::seconds(2)};
    double backoff_factor = 2.0;
};

/// OpenAI-compatible chat-completions client (non-streaming). Transient
/// failures (transport errors, 408, 429, 5xx, malformed bodies) are retried up
/// to the request's retry budget with exponential backoff.
class OpenAIBackend : public ChatBackend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit OpenAIBackend(OpenAIConfig config, Sleeper sleeper = {});

    ChatResponse complete(const ChatRequest& request) override;

    /// Request body for the wire: {model, messages, temperature, max_tokens}.
    nlohmann::json build_payload(const ChatRequest& request) const;

private:
    OpenAIConfig config_;
    Sleeper sleep_;
    std::string origin_;  // scheme://host[:port]
    std::string path_;
};

}  // namespace spark
