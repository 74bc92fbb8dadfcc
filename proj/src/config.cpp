#include "spark/config.hpp"

#include <cstdlib>
#include <set>
#include <sstream>

#include "spark/errors.hpp"
#include "spark/util.hpp"
#include "toml.hpp"

namespace spark {

namespace {

using namespace std::chrono_literals;

// Reads one TOML table, recording type and range problems instead of
// throwing so that every invalid field can be reported at once.
class Section {
public:
    Section(const toml::table* table, std::string name, std::vector<std::string>& errors)
        : table_(table), name_(std::move(name)), errors_(errors) {}

    bool present() const { return table_ != nullptr; }

    Section sub(std::string_view key) {
        seen_.insert(std::string(key));
        const toml::node* n = table_ ? table_->get(key) : nullptr;
        if (n && !n->is_table()) {
            error(key, "must be a table");
            n = nullptr;
        }
        return Section(n ? n->as_table() : nullptr, path(key), errors_);
    }

    const toml::array* array_of_tables(std::string_view key) {
        seen_.insert(std::string(key));
        const toml::node* n = table_ ? table_->get(key) : nullptr;
        if (!n) return nullptr;
        if (!n->is_array_of_tables()) {
            error(key, "must be an array of tables");
            return nullptr;
        }
        return n->as_array();
    }

    template <typename T>
    std::optional<T> get(std::string_view key) {
        seen_.insert(std::string(key));
        const toml::node* n = table_ ? table_->get(key) : nullptr;
        if (!n) return std::nullopt;
        if constexpr (std::is_same_v<T, std::string>) {
            if (auto v = n->value_exact<std::string>()) return *v;
            error(key, "must be a string");
        } else if constexpr (std::is_same_v<T, bool>) {
            if (auto v = n->value_exact<bool>()) return *v;
            error(key, "must be a boolean");
        } else if constexpr (std::is_same_v<T, double>) {
            if (n->is_floating_point() || n->is_integer()) return n->value<double>();
            error(key, "must be a number");
        } else if constexpr (std::is_same_v<T, std::int64_t>) {
            if (auto v = n->value_exact<std::int64_t>()) return *v;
            error(key, "must be an integer");
        } else if constexpr (std::is_same_v<T, std::vector<std::string>>) {
            if (const auto* arr = n->as_array()) {
                std::vector<std::string> out;
                for (const auto& el : *arr) {
                    if (auto s = el.value_exact<std::string>()) {
                        out.push_back(*s);
                    } else {
                        error(key, "must be an array of strings");
                        return std::nullopt;
                    }
                }
                return out;
            }
            error(key, "must be an array of strings");
        }
        return std::nullopt;
    }

    void str(std::string_view key, std::string& out) {
        if (auto v = get<std::string>(key)) out = *v;
    }
    void flag(std::string_view key, bool& out) {
        if (auto v = get<bool>(key)) out = *v;
    }
    void strings(std::string_view key, std::vector<std::string>& out) {
        if (auto v = get<std::vector<std::string>>(key)) out = *v;
    }
    template <typename U>
    void count(std::string_view key, U& out, std::int64_t min = 0) {
        if (auto v = get<std::int64_t>(key)) {
            if (*v < min) {
                error(key, "must be at least " + std::to_string(min));
            } else {
                out = static_cast<U>(*v);
            }
        }
    }
    void number(std::string_view key, double& out, std::optional<double> lo = std::nullopt,
                std::optional<double> hi = std::nullopt) {
        if (auto v = get<double>(key)) {
            if (!std::isfinite(*v) || (lo && *v < *lo) || (hi && *v > *hi)) {
                std::string range = "must be a finite number";
                if (lo && hi) range = "must lie in [" + fmt_num(*lo) + ", " + fmt_num(*hi) + "]";
                else if (lo) range = "must be at least " + fmt_num(*lo);
                error(key, range);
            } else {
                out = *v;
            }
        }
    }
    void seconds(std::string_view key, std::chrono::milliseconds& out) {
        if (auto v = get<double>(key)) {
            if (!(*v > 0) || !std::isfinite(*v)) {
                error(key, "must be a positive number of seconds");
            } else {
                out = std::chrono::milliseconds(static_cast<std::int64_t>(*v * 1000.0));
            }
        }
    }

    void error(std::string_view key, const std::string& msg) { errors_.push_back(path(key) + " " + msg); }

    /// Reports keys that were never read.
    void finish() {
        if (!table_) return;
        for (const auto& [k, v] : *table_) {
            if (!seen_.count(std::string(k.str()))) errors_.push_back(path(k.str()) + " is not a recognised setting");
        }
    }

    std::string path(std::string_view key) const {
        return name_.empty() ? std::string(key) : name_ + "." + std::string(key);
    }

private:
    static std::string fmt_num(double x) {
        std::ostringstream os;
        os << x;
        return os.str();
    }

    const toml::table* table_;
    std::string name_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

}  // namespace

RunConfig parse_run_config(std::string_view toml_text, const std::filesystem::path& base_dir) {
    toml::table doc;
    try {
        doc = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        std::ostringstream os;
        os << "config is not valid TOML: " << e.description() << " (line " << e.source().begin.line << ", column "
           << e.source().begin.column << ")";
        throw ConfigError(os.str());
    }

    std::vector<std::string> errors;
    RunConfig c;
    Section root(&doc, "", errors);

    // [run]
    Section run = root.sub("run");
    if (auto mode = run.get<std::string>("mode")) {
        if (auto m = run_mode_from_string(*mode)) c.loop.mode = *m;
        else run.error("mode", "must be one of SPARK, SPARK_NO_ASR, SPARK_NO_RC, FREEFORM");
    }
    run.count("budget", c.loop.budget, 1);
    if (auto cap = run.get<std::int64_t>("attempt_cap")) {
        if (*cap < 0) run.error("attempt_cap", "must be non-negative (0 disables the cap)");
        else c.loop.attempt_cap = *cap == 0 ? std::nullopt : std::optional<std::uint64_t>(*cap);
    }
    run.count("seed", c.loop.seed);
    run.count("k", c.loop.k, 1);
    run.count("k_prime", c.loop.k_prime, 1);
    run.count("r_asr", c.loop.operators.r_asr, 1);
    bool cascade = true;
    run.flag("cascade", cascade);
    double threshold = -100.0;
    run.number("cascade_threshold", threshold);
    c.loop.cascade_threshold = cascade ? std::optional<double>(threshold) : std::nullopt;
    std::string seed_program, trace, checkpoint, scratch;
    run.str("seed_program", seed_program);
    run.str("trace", trace);
    run.str("checkpoint", checkpoint);
    run.str("scratch_dir", scratch);
    run.count("checkpoint_every", c.loop.checkpoint_every, 1);
    run.flag("record_timing", c.loop.record_timing);
    run.str("candidate_suffix", c.candidate_suffix);
    if (seed_program.empty()) errors.push_back("run.seed_program is required");
    c.seed_program = resolve(base_dir, seed_program);
    c.loop.trace_path = resolve(base_dir, trace.empty() ? "trace.jsonl" : trace);
    c.loop.checkpoint_path = resolve(base_dir, checkpoint);
    c.scratch_dir = resolve(base_dir, scratch.empty() ? "scratch" : scratch);
    run.finish();

    // [archive]
    Section arch = root.sub("archive");
    arch.count("islands", c.loop.archive.islands, 1);
    arch.count("population_cap", c.loop.archive.population_cap, 1);
    arch.count("archive_cap", c.loop.archive.archive_cap, 1);
    arch.count("migration_period", c.loop.archive.migration_period, 1);
    arch.count("top_k", c.loop.archive.top_k);
    arch.count("diverse_k", c.loop.archive.diverse_k);
    arch.number("uniform_parent_prob", c.loop.archive.uniform_parent_prob, 0.0, 1.0);
    Section binning = arch.sub("binning");
    auto& b = c.loop.archive.binning;
    binning.count("fitness_bins", b.fitness_bins, 1);
    binning.number("fitness_min", b.fitness_min);
    binning.number("fitness_max", b.fitness_max);
    binning.count("macs_bins", b.macs_bins, 1);
    binning.number("macs_min", b.macs_min);
    binning.number("macs_max", b.macs_max);
    binning.finish();
    arch.finish();
    if (!(b.fitness_max > b.fitness_min)) errors.push_back("archive.binning.fitness_max must exceed fitness_min");
    if (!(b.macs_min > 0)) errors.push_back("archive.binning.macs_min must be positive");
    if (!(b.macs_max > b.macs_min)) errors.push_back("archive.binning.macs_max must exceed macs_min");

    // [tags]
    Section tags = root.sub("tags");
    auto& t = c.loop.operators.tags;
    tags.str("operator_open", t.operator_tags.open);
    tags.str("operator_close", t.operator_tags.close);
    tags.str("action_open", t.action_tags.open);
    tags.str("action_close", t.action_tags.close);
    tags.finish();
    try {
        t.validate();
    } catch (const ConfigError& e) {
        errors.push_back(std::string("tags: ") + e.what());
    }

    // [prompts]
    Section prompts = root.sub("prompts");
    for (const char* name : {"system", "route", "directive", "edit", "freeform"}) {
        std::string p;
        prompts.str(name, p);
        if (!p.empty()) c.prompt_files[name] = resolve(base_dir, p);
    }
    prompts.count("directive_char_limit", c.loop.operators.directive_char_limit, 1);
    prompts.count("inspiration_char_budget", c.loop.operators.inspiration_char_budget, 1);
    prompts.finish();

    // [backend]
    Section be = root.sub("backend");
    if (auto kind = be.get<std::string>("kind")) {
        if (*kind == "openai") c.backend.kind = BackendKind::kOpenAI;
        else if (*kind == "scripted") c.backend.kind = BackendKind::kScripted;
        else if (*kind == "stochastic") c.backend.kind = BackendKind::kStochastic;
        else be.error("kind", "must be one of openai, scripted, stochastic");
    }
    auto& dec = c.loop.operators.decoding;
    be.number("temperature", dec.temperature, 0.0, 2.0);
    be.count("max_tokens", dec.max_tokens, 1);
    be.seconds("request_timeout_s", dec.request_timeout);
    be.count("retry_budget", dec.retry_budget, 0);
    be.str("endpoint", c.backend.openai.endpoint);
    be.str("model", c.backend.openai.model);
    be.str("api_key_env", c.backend.api_key_env);
    be.seconds("connect_timeout_s", c.backend.openai.connect_timeout);
    be.seconds("backoff_initial_s", c.backend.openai.backoff_initial);
    be.number("backoff_factor", c.backend.openai.backoff_factor, 1.0);
    std::string script;
    be.str("script", script);
    c.backend.script = resolve(base_dir, script);
    Section mock = be.sub("mock");
    auto& m = c.backend.mock;
    mock.number("p_valid", m.p_valid, 0.0, 1.0);
    mock.number("entangle_prob", m.entangle_prob, 0.0, 1.0);
    mock.count("entangled_scopes", m.entangled_scopes, 2);
    mock.number("leak_prob", m.leak_prob, 0.0, 1.0);
    mock.number("improve_prob", m.improve_prob, 0.0, 1.0);
    mock.number("route_invalid_prob", m.route_invalid_prob, 0.0, 1.0);
    mock.str("operator_token", m.operator_token);
    mock.str("action_token", m.action_token);
    mock.count("seed", m.seed);
    mock.finish();
    be.finish();
    if (m.entangled_scopes > 3) errors.push_back("backend.mock.entangled_scopes must be 2 or 3");
    if (c.backend.kind == BackendKind::kOpenAI) {
        if (c.backend.openai.endpoint.empty()) errors.push_back("backend.endpoint is required for kind = \"openai\"");
        else if (!c.backend.openai.endpoint.starts_with("http://") && !c.backend.openai.endpoint.starts_with("https://"))
            errors.push_back("backend.endpoint must start with http:// or https://");
        if (c.backend.openai.model.empty()) errors.push_back("backend.model is required for kind = \"openai\"");
    }
    if (c.backend.kind == BackendKind::kScripted && c.backend.script.empty()) {
        errors.push_back("backend.script is required for kind = \"scripted\"");
    }

    // [evaluator]
    Section ev = root.sub("evaluator");
    if (auto kind = ev.get<std::string>("kind")) {
        if (*kind == "command") c.evaluator_kind = EvaluatorKind::kCommand;
        else if (*kind == "synthetic") c.evaluator_kind = EvaluatorKind::kSynthetic;
        else ev.error("kind", "must be one of command, synthetic");
    }
    ev.strings("command", c.evaluator.command);
    ev.seconds("full_timeout_s", c.evaluator.full_timeout);
    std::chrono::milliseconds prelim{0};
    ev.seconds("prelim_timeout_s", prelim);
    if (prelim.count() > 0) c.evaluator.prelim_timeout = prelim;
    std::string wd;
    ev.str("working_dir", wd);
    c.evaluator.working_dir = resolve(base_dir, wd);
    ev.strings("env_passthrough", c.evaluator.env_passthrough);
    Section syn = ev.sub("synthetic");
    auto& s = c.synthetic;
    syn.str("action_token", s.action_token);
    syn.str("operator_token", s.operator_token);
    syn.number("action_increment", s.action_increment);
    syn.number("operator_increment", s.operator_increment);
    syn.count("line_cap", s.line_cap);
    syn.number("line_penalty", s.line_penalty, 0.0);
    syn.count("macs_base", s.macs_base);
    syn.count("macs_per_line", s.macs_per_line);
    syn.count("params_base", s.params_base);
    syn.count("params_per_line", s.params_per_line);
    syn.number("noise", s.noise, 0.0, 1.0);
    syn.count("noise_seed", s.noise_seed);
    syn.flag("prelim", s.prelim);
    syn.finish();
    ev.finish();
    if (c.evaluator_kind == EvaluatorKind::kCommand && c.evaluator.command.empty()) {
        errors.push_back("evaluator.command is required for kind = \"command\"");
    }

    // [[hooks]]
    if (const auto* hooks = root.array_of_tables("hooks")) {
        std::size_t i = 0;
        for (const auto& node : *hooks) {
            Section h(node.as_table(), "hooks[" + std::to_string(i++) + "]", errors);
            ValidatorHook hook;
            if (auto kind = h.get<std::string>("kind")) {
                if (auto k = hook_kind_from_string(*kind)) hook.kind = *k;
                else h.error("kind", "must be one of syntax, interface, semantic");
            } else {
                h.error("kind", "is required");
            }
            h.strings("command", hook.command);
            h.seconds("timeout_s", hook.timeout);
            h.strings("required_symbols", hook.required_symbols);
            h.strings("forbidden_substrings", hook.forbidden_substrings);
            h.finish();
            if (!hook.required_symbols.empty() && hook.kind != HookKind::kInterface) {
                h.error("required_symbols", "applies to interface hooks only");
            }
            c.hooks.push_back(std::move(hook));
        }
    }
    root.finish();

    c.evaluator.scratch_dir = c.scratch_dir;
    c.evaluator.candidate_suffix = c.candidate_suffix;

    if (!errors.empty()) {
        std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                          (errors.size() == 1 ? "" : "s") + "):";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    auto base = path.parent_path();
    if (base.empty()) base = ".";
    return parse_run_config(text, base);
}

std::unique_ptr<ChatBackend> make_backend(const RunConfig& config) {
    switch (config.backend.kind) {
        case BackendKind::kScripted: {
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(read_file(config.backend.script));
            } catch (const nlohmann::json::exception& e) {
                throw ConfigError("backend script is not valid JSON: " + std::string(e.what()));
            }
            return std::make_unique<ScriptedBackend>(ScriptedBackend::from_json(j));
        }
        case BackendKind::kStochastic:
            return std::make_unique<StochasticBackend>(config.backend.mock, config.loop.operators.tags);
        case BackendKind::kOpenAI: {
            OpenAIConfig oc = config.backend.openai;
            if (!config.backend.api_key_env.empty()) {
                if (const char* key = std::getenv(config.backend.api_key_env.c_str())) oc.api_key = key;
            }
            return std::make_unique<OpenAIBackend>(std::move(oc));
        }
    }
    throw ConfigError("unknown backend kind");
}

std::unique_ptr<Evaluator> make_evaluator(const RunConfig& config) {
    if (config.evaluator_kind == EvaluatorKind::kSynthetic) return std::make_unique<SyntheticEvaluator>(config.synthetic);
    return std::make_unique<CommandEvaluator>(config.evaluator);
}

FeasibilityChecker make_checker(const RunConfig& config) {
    return FeasibilityChecker(config.loop.operators.tags, config.hooks, config.scratch_dir, config.candidate_suffix);
}

}  // namespace spark
