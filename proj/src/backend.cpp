#include "spark/backend.hpp"

#include <algorithm>
#include <array>

#include "spark/errors.hpp"
#include "spark/util.hpp"

namespace spark {

std::string_view to_string(Role r) noexcept {
    switch (r) {
        case Role::kRoute: return "ROUTE";
        case Role::kDirective: return "DIRECTIVE";
        case Role::kEdit: return "EDIT";
    }
    return "ROUTE";
}

std::optional<Role> role_from_string(std::string_view s) noexcept {
    const std::string up = to_upper_ascii(s);
    if (up == "ROUTE") return Role::kRoute;
    if (up == "DIRECTIVE") return Role::kDirective;
    if (up == "EDIT") return Role::kEdit;
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// ScriptedBackend

ScriptedBackend::ScriptedBackend(std::map<Role, std::vector<std::string>> script) : script_(std::move(script)) {}

ScriptedBackend::ScriptedBackend(ScriptedBackend&& other) noexcept {
    std::lock_guard lock(other.mu_);
    script_ = std::move(other.script_);
    cursor_ = std::move(other.cursor_);
    log_ = std::move(other.log_);
}

ScriptedBackend ScriptedBackend::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("script must be a JSON object keyed by role");
    std::map<Role, std::vector<std::string>> script;
    for (const auto& [key, value] : j.items()) {
        const auto role = role_from_string(key);
        if (!role) throw ConfigError("unknown role in script: " + key);
        if (!value.is_array()) throw ConfigError("script entry for " + key + " must be an array");
        for (const auto& v : value) {
            if (!v.is_string()) throw ConfigError("script responses must be strings");
            script[*role].push_back(v.get<std::string>());
        }
    }
    return ScriptedBackend(std::move(script));
}

void ScriptedBackend::push(Role role, std::string response) {
    std::lock_guard lock(mu_);
    script_[role].push_back(std::move(response));
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
    std::lock_guard lock(mu_);
    log_.push_back(request);
    auto& queue = script_[request.role];
    auto& pos = cursor_[request.role];
    if (pos >= queue.size()) {
        throw ScriptExhausted("scripted backend exhausted for role " + std::string(to_string(request.role)));
    }
    ChatResponse r;
    r.text = queue[pos++];
    return r;
}

std::size_t ScriptedBackend::calls() const {
    std::lock_guard lock(mu_);
    return log_.size();
}

std::size_t ScriptedBackend::calls(Role role) const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(
        std::count_if(log_.begin(), log_.end(), [&](const ChatRequest& r) { return r.role == role; }));
}

std::vector<ChatRequest> ScriptedBackend::requests() const {
    std::lock_guard lock(mu_);
    return log_;
}

nlohmann::json ScriptedBackend::save_state() const {
    std::lock_guard lock(mu_);
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [role, pos] : cursor_) j[std::string(to_string(role))] = pos;
    return j;
}

void ScriptedBackend::load_state(const nlohmann::json& state) {
    std::lock_guard lock(mu_);
    cursor_.clear();
    if (!state.is_object()) return;
    for (const auto& [key, value] : state.items()) {
        if (auto role = role_from_string(key)) cursor_[*role] = value.get<std::size_t>();
    }
}

// ---------------------------------------------------------------------------
// MockEditor

std::string mock_defect_marker(std::string_view kind) { return "spark-mock-defect:" + std::string(kind); }

MockEditor::MockEditor(MockEditorConfig config, TagConfig tags) : config_(std::move(config)), tags_(std::move(tags)) {}

RegionSet MockEditor::draw_scopes(std::optional<Factor> factor, Rng& rng) const {
    RegionSet scopes;
    if (factor) {
        scopes.insert(region_of(*factor));
        if (rng.bernoulli(config_.leak_prob)) scopes.insert(region_of(other(*factor)));
        return scopes;
    }
    if (rng.bernoulli(config_.entangle_prob)) {
        scopes.insert(Region::kOperator);
        scopes.insert(Region::kAction);
        if (config_.entangled_scopes >= 3) scopes.insert(Region::kFrozen);
    } else {
        scopes.insert(rng.bernoulli(0.5) ? Region::kOperator : Region::kAction);
    }
    return scopes;
}

namespace {

std::string leading_ws(std::string_view line) {
    const auto n = line.find_first_not_of(" \t");
    return std::string(line.substr(0, n == std::string_view::npos ? line.size() : n));
}

}  // namespace

std::string MockEditor::apply(const TaggedProgram& parent, RegionSet scopes, Rng& rng,
                              std::uint64_t& counter) const {
    static constexpr std::array<std::string_view, 3> kDefectKinds{"syntax", "interface", "semantic"};

    struct Insertion {
        std::size_t at;
        std::string line;
    };
    std::vector<Insertion> inserts;
    const auto& rm = parent.regions();
    const auto lines = parent.lines();

    for (Region scope : {Region::kOperator, Region::kAction, Region::kFrozen}) {
        if (!scopes.contains(scope)) continue;
        const std::uint64_t n = ++counter;
        const bool executable = rng.bernoulli(config_.p_valid);

        std::size_t at;
        std::string indent;
        if (scope == Region::kFrozen) {
            at = std::min(rm.open_tag_line(Factor::kOperator), rm.open_tag_line(Factor::kAction));
            indent = leading_ws(lines[at]);
        } else {
            const Factor f = scope == Region::kOperator ? Factor::kOperator : Factor::kAction;
            at = rm.close_tag_line(f);
            const auto body = rm.span(f);
            indent = leading_ws(body.empty() ? lines[at] : lines[body.end - 1]);
        }

        std::string text;
        if (!executable) {
            const auto kind = kDefectKinds[rng.index(kDefectKinds.size())];
            text = "raise RuntimeError(\"" + mock_defect_marker(kind) + "\")  # mock edit " + std::to_string(n);
        } else if (scope == Region::kFrozen) {
            text = "# scaffolding revision " + std::to_string(n);
        } else {
            const bool improve = rng.bernoulli(config_.improve_prob);
            const std::string& token = scope == Region::kOperator ? config_.operator_token : config_.action_token;
            const std::string callee = improve ? token : std::string("tweak");
            text = "x = " + callee + "_" + std::to_string(n) + "(x)  # mock edit " + std::to_string(n);
        }
        inserts.push_back({at, indent + text});
    }

    std::vector<std::string> out(lines.begin(), lines.end());
    std::sort(inserts.begin(), inserts.end(), [](const Insertion& a, const Insertion& b) { return a.at > b.at; });
    for (auto& ins : inserts) out.insert(out.begin() + static_cast<std::ptrdiff_t>(ins.at), std::move(ins.line));

    NormalizedText nt{std::move(out), parent.normalized().final_newline};
    return nt.serialize();
}

// ---------------------------------------------------------------------------
// StochasticBackend

StochasticBackend::StochasticBackend(MockEditorConfig config, TagConfig tags)
    : editor_(config, std::move(tags)), rng_(config.seed) {}

ChatResponse StochasticBackend::complete(const ChatRequest& request) {
    std::lock_guard lock(mu_);
    ChatResponse r;
    switch (request.role) {
        case Role::kRoute:
            if (rng_.bernoulli(editor_.config().route_invalid_prob)) {
                r.text = "Probably the operator side, but it is hard to say.";
            } else {
                r.text = rng_.bernoulli(0.5) ? "OPERATOR" : "ACTION";
            }
            break;
        case Role::kDirective: {
            const std::string factor = request.factor ? std::string(to_string(*request.factor)) : "program";
            r.text = "Make one focused refinement to the " + factor + " region guided by the recent outcomes.";
            break;
        }
        case Role::kEdit: {
            TaggedProgram parent = [&] {
                try {
                    return TaggedProgram::parse(request.parent_program, editor_.tags());
                } catch (const SparkError& e) {
                    throw PreconditionError(std::string("stochastic backend: unparseable parent program: ") +
                                            e.what());
                }
            }();
            const RegionSet scopes = editor_.draw_scopes(request.factor, rng_);
            const std::string child = editor_.apply(parent, scopes, rng_, counter_);
            r.text = "Here is the updated program.\n\n```python\n" + child + (child.ends_with('\n') ? "" : "\n") +
                     "```\n";
            break;
        }
    }
    return r;
}

nlohmann::json StochasticBackend::save_state() const {
    std::lock_guard lock(mu_);
    return {{"rng", rng_.save_state()}, {"counter", counter_}};
}

void StochasticBackend::load_state(const nlohmann::json& state) {
    std::lock_guard lock(mu_);
    rng_.load_state(state.at("rng").get<std::string>());
    counter_ = state.at("counter").get<std::uint64_t>();
}

}  // namespace spark
