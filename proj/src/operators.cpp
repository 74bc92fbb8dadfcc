#include "spark/operators.hpp"

#include <fmt/format.h>

#include <algorithm>

#include "spark/errors.hpp"
#include "spark/feasibility.hpp"
#include "spark/util.hpp"

namespace spark {

namespace {

constexpr std::string_view kSystem =
    "You are an expert machine-learning engineer revising a neural architecture program.\n"
    "The program contains two tagged regions. The OPERATOR region defines module parameterization and\n"
    "structure; the ACTION region defines how operators are invoked and wired. Everything outside the\n"
    "two regions, the tag lines included, is fixed scaffolding.";

constexpr std::string_view kRoute =
    "Decide which factor of the program below should be revised next.\n\n"
    "Search signals:\n{SIGNALS}\n\n"
    "Current program:\n```python\n{PARENT_PROGRAM}```\n\n"
    "Reference programs from the archive:\n{INSPIRATIONS}\n\n"
    "Answer with exactly one token: OPERATOR or ACTION.";

constexpr std::string_view kDirective =
    "The next revision will modify only the {FACTOR} region of the program below.\n\n"
    "Search signals:\n{SIGNALS}\n\n"
    "Current program:\n```python\n{PARENT_PROGRAM}```\n\n"
    "Write one short, concrete refinement instruction for the {FACTOR} region. Do not mention region tags.\n"
    "Reply with the instruction only.";

constexpr std::string_view kEdit =
    "Revise the program below following this instruction:\n{DIRECTIVE}\n\n"
    "Current program:\n```python\n{PARENT_PROGRAM}```\n\n"
    "Reference programs from the archive:\n{INSPIRATIONS}\n\n"
    "Output the complete program in a single fenced code block. Modify only the {FACTOR} region.\n"
    "Keep all tags and everything else byte-identical.";

constexpr std::string_view kFreeform =
    "Improve the program below.\n\n"
    "Search signals:\n{SIGNALS}\n\n"
    "Current program:\n```python\n{PARENT_PROGRAM}```\n\n"
    "Reference programs from the archive:\n{INSPIRATIONS}\n\n"
    "Output the complete program in a single fenced code block and keep all region tags.";

bool is_placeholder_char(char c) { return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_'; }

// Marker with comment leaders and trailers removed, e.g. "<SPARK:OPERATOR>".
std::string marker_core(std::string_view marker) {
    std::string_view t = trim(marker);
    const auto b = t.find_first_not_of("#/;*-!% \t");
    if (b == std::string_view::npos) return {};
    t = t.substr(b);
    const auto e = t.find_last_not_of("*/ \t");
    return std::string(t.substr(0, e + 1));
}

void erase_all(std::string& s, std::string_view needle, bool& changed) {
    if (needle.empty()) return;
    for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos)) {
        s.erase(pos, needle.size());
        changed = true;
    }
}

std::string fmt_fitness(double f) { return fmt::format("{:.4f}", f); }

std::vector<ChatMessage> messages_for(const OperatorSettings& s, std::string user) {
    std::vector<ChatMessage> m;
    if (!s.prompts.system.empty()) m.push_back({"system", s.prompts.system});
    m.push_back({"user", std::move(user)});
    return m;
}

ChatResponse call(ChatBackend& backend, Role role, std::vector<ChatMessage> messages, const OperatorSettings& s,
                  const EvolutionContext& ctx, std::optional<Factor> factor, CallStats& stats) {
    ChatRequest req;
    req.role = role;
    req.messages = std::move(messages);
    req.decoding = s.decoding;
    req.factor = factor;
    req.parent_program = ctx.parent->text();
    ChatResponse r = backend.complete(req);
    stats.add(r);
    return r;
}

std::string signals_for(const EvolutionContext& ctx) {
    std::string out = "Recent evaluated fitness (oldest first):";
    if (ctx.recent_outcomes.empty()) out += " none";
    for (std::size_t i = 0; i < ctx.recent_outcomes.size(); ++i) {
        out += (i == 0 ? " " : ", ") + fmt_fitness(ctx.recent_outcomes[i]);
    }
    out += "\n";
    out += format_signals(compute_stagnation(ctx.recent_outcomes), ctx.proposal_summary);
    return out;
}

}  // namespace

PromptTemplates PromptTemplates::defaults() {
    return {std::string(kSystem), std::string(kRoute), std::string(kDirective), std::string(kEdit),
            std::string(kFreeform)};
}

PromptTemplates PromptTemplates::load(const std::map<std::string, std::filesystem::path>& overrides) {
    PromptTemplates t = defaults();
    for (const auto& [name, path] : overrides) {
        if (path.empty()) continue;
        std::string text = read_file(path);
        validate_utf8(text);
        if (name == "system") t.system = std::move(text);
        else if (name == "route") t.route = std::move(text);
        else if (name == "directive") t.directive = std::move(text);
        else if (name == "edit") t.edit = std::move(text);
        else if (name == "freeform") t.freeform = std::move(text);
        else throw ConfigError("unknown prompt template: " + name);
    }
    return t;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t j = i + 1;
            while (j < tmpl.size() && is_placeholder_char(tmpl[j])) ++j;
            if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
                const auto it = values.find(std::string(tmpl.substr(i + 1, j - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = j + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

EvolutionContext build_context(const Archive& archive, std::size_t island, Rng& rng,
                               std::span<const double> evaluated_history, std::size_t k,
                               const ProposalBuffer& q_prop) {
    if (archive.empty()) throw PreconditionError("build_context needs a non-empty archive; evaluate the seed first");
    const ArchiveSample sample = archive.sample(island, rng);
    EvolutionContext ctx;
    ctx.parent = sample.parent->program;
    ctx.parent_descriptor = sample.parent->descriptor;
    for (const Elite* e : sample.inspirations) ctx.inspirations.push_back({e->program, e->descriptor});
    const std::size_t n = std::min(k, evaluated_history.size());
    ctx.recent_outcomes.assign(evaluated_history.end() - static_cast<std::ptrdiff_t>(n), evaluated_history.end());
    ctx.proposal_summary = summarize(q_prop);
    return ctx;
}

void CallStats::add(const ChatResponse& r) {
    ++calls;
    prompt_tokens += r.prompt_tokens;
    completion_tokens += r.completion_tokens;
    latency += r.latency;
}

RouteResult asr_route(ChatBackend& backend, const EvolutionContext& ctx, const OperatorSettings& s,
                      CallStats& stats) {
    if (s.r_asr < 1) throw PreconditionError("router retries must be at least 1");
    const std::string prompt = render_template(
        s.prompts.route, {{"PARENT_PROGRAM", ctx.parent->text()},
                          {"SIGNALS", signals_for(ctx)},
                          {"INSPIRATIONS", format_inspirations(ctx.inspirations, s.tags, s.inspiration_char_budget)}});
    RouteResult r;
    for (int attempt = 0; attempt < s.r_asr; ++attempt) {
        const ChatResponse resp = call(backend, Role::kRoute, messages_for(s, prompt), s, ctx, std::nullopt, stats);
        ++r.calls;
        if (auto f = try_parse_factor_token(resp.text)) {
            r.factor = *f;
            return r;
        }
    }
    r.factor = Factor::kAction;
    r.fallback = true;
    return r;
}

std::string sanitize_directive(std::string_view raw, const TagConfig& tags, std::size_t limit) {
    // Drop fence lines, then any stray fence runs.
    std::string text;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        auto nl = raw.find('\n', pos);
        if (nl == std::string_view::npos) nl = raw.size();
        const std::string_view line = raw.substr(pos, nl - pos);
        const std::string_view t = trim(line);
        if (!t.starts_with("```") && !t.starts_with("~~~")) {
            text.append(line);
            text.push_back('\n');
        }
        pos = nl + 1;
    }

    std::vector<std::string> needles;
    for (std::string_view m : tags.all()) {
        needles.emplace_back(trim(m));
        if (auto core = marker_core(m); !core.empty()) needles.push_back(std::move(core));
    }
    needles.emplace_back("```");
    needles.emplace_back("~~~");
    for (bool changed = true; changed;) {
        changed = false;
        for (const auto& n : needles) erase_all(text, n, changed);
    }

    std::string out;
    bool pending_space = false;
    for (char c : text) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out.push_back(c);
    }

    if (out.size() > limit) {
        std::size_t cut = limit;
        while (cut > 0 && (static_cast<unsigned char>(out[cut]) & 0xC0) == 0x80) --cut;
        out.resize(cut);
        while (!out.empty() && out.back() == ' ') out.pop_back();
    }
    return out;
}

std::string format_signals(const StagnationSignal& stagnation, const ProposalSummary& summary) {
    std::string out;
    if (stagnation.window < 2) {
        out += "Stagnation: not enough evaluated candidates yet\n";
    } else if (stagnation.stagnant) {
        out += fmt::format("Stagnation: stagnant (best-so-far improvement {} over the last {} evaluated)\n",
                           fmt_fitness(stagnation.improvement), stagnation.window);
    } else {
        out += fmt::format("Stagnation: improving (best-so-far improvement {} over the last {} evaluated)\n",
                           fmt_fitness(stagnation.improvement), stagnation.window);
    }
    out += fmt::format("Recent proposals: {}, failure rate {:.2f}", summary.window, summary.failure_rate);
    if (!summary.dominant.empty()) {
        out += ", dominant failure types:";
        for (std::size_t i = 0; i < summary.dominant.size(); ++i) {
            out += (i == 0 ? " " : ", ") + std::string(to_string(summary.dominant[i]));
        }
    }
    out += "\n";
    return out;
}

Directive default_directive(Factor factor) { return {std::string(kDefaultDirective), factor, true}; }

Directive rc_directive(ChatBackend& backend, Factor factor, const EvolutionContext& ctx, const OperatorSettings& s,
                       CallStats& stats) {
    const std::string prompt = render_template(s.prompts.directive, {{"PARENT_PROGRAM", ctx.parent->text()},
                                                                     {"FACTOR", std::string(to_string(factor))},
                                                                     {"SIGNALS", signals_for(ctx)}});
    const ChatResponse resp = call(backend, Role::kDirective, messages_for(s, prompt), s, ctx, factor, stats);
    std::string text = sanitize_directive(resp.text, s.tags, s.directive_char_limit);
    if (text.empty()) return default_directive(factor);
    return {std::move(text), factor, false};
}

EditResult sar_edit(ChatBackend& backend, Factor factor, const Directive& directive, const EvolutionContext& ctx,
                    const OperatorSettings& s, CallStats& stats) {
    if (directive.factor != factor) throw PreconditionError("directive was issued for a different factor");
    const std::string prompt = render_template(
        s.prompts.edit, {{"PARENT_PROGRAM", ctx.parent->text()},
                         {"FACTOR", std::string(to_string(factor))},
                         {"DIRECTIVE", directive.text},
                         {"INSPIRATIONS", format_inspirations(ctx.inspirations, s.tags, s.inspiration_char_budget)}});
    const ChatResponse resp = call(backend, Role::kEdit, messages_for(s, prompt), s, ctx, factor, stats);
    return {classify_editor_output(resp.text, s.tags), resp.text};
}

EditResult freeform_edit(ChatBackend& backend, const EvolutionContext& ctx, const OperatorSettings& s,
                         CallStats& stats) {
    const std::string prompt = render_template(
        s.prompts.freeform,
        {{"PARENT_PROGRAM", ctx.parent->text()},
         {"SIGNALS", signals_for(ctx)},
         {"INSPIRATIONS", format_inspirations(ctx.inspirations, s.tags, s.inspiration_char_budget)}});
    const ChatResponse resp = call(backend, Role::kEdit, messages_for(s, prompt), s, ctx, std::nullopt, stats);
    return {classify_editor_output(resp.text, s.tags), resp.text};
}

std::string format_inspirations(std::span<const Inspiration> inspirations, const TagConfig& tags,
                                std::size_t char_budget) {
    if (inspirations.empty()) return "(none)\n";
    auto header = [](std::size_t i, const Inspiration& insp) {
        return fmt::format("### Program {} (fitness {}, macs {})\n", i + 1, fmt_fitness(insp.descriptor.fitness),
                           insp.descriptor.macs);
    };

    std::string full;
    for (std::size_t i = 0; i < inspirations.size(); ++i) {
        full += header(i, inspirations[i]) + "```python\n" + inspirations[i].program->text() + "```\n";
    }
    if (full.size() <= char_budget) return full;

    // Over budget: region bodies only, dropping trailing programs that do not fit.
    std::string out;
    for (std::size_t i = 0; i < inspirations.size(); ++i) {
        std::string block = header(i, inspirations[i]);
        for (Factor f : kAllFactors) {
            const auto& m = tags.markers(f);
            block += "```python\n" + m.open + "\n";
            for (const auto& line : inspirations[i].program->body(f)) block += line + "\n";
            block += m.close + "\n```\n";
        }
        if (out.size() + block.size() > char_budget && !out.empty()) break;
        out += block;
    }
    return out;
}

}  // namespace spark
