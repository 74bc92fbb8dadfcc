#pragma once

// The three factor-conditioned steps (route, directive, scoped edit), the
// free-form edit used by the baseline mode, and prompt assembly.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spark/archive.hpp"
#include "spark/backend.hpp"
#include "spark/program.hpp"
#include "spark/proposals.hpp"

namespace spark {

inline constexpr std::string_view kDefaultDirective = "make one conservative in-scope improvement";

/// Templates use `{NAME}` placeholders: PARENT_PROGRAM, FACTOR, DIRECTIVE,
/// INSPIRATIONS, SIGNALS.
struct PromptTemplates {
    std::string system;
    std::string route;
    std::string directive;
    std::string edit;
    std::string freeform;

    static PromptTemplates defaults();
    /// Replaces the templates whose paths are non-empty with file contents.
    static PromptTemplates load(const std::map<std::string, std::filesystem::path>& overrides);
};

/// Single pass over the template: each `{NAME}` with a known NAME is replaced;
/// unknown placeholders stay verbatim and substituted text is never rescanned.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

struct Inspiration {
    std::shared_ptr<const TaggedProgram> program;
    Descriptor descriptor;
};

struct EvolutionContext {
    std::shared_ptr<const TaggedProgram> parent;
    Descriptor parent_descriptor;
    std::vector<double> recent_outcomes;  // last k evaluated fitness values, oldest first
    std::vector<Inspiration> inspirations;
    ProposalSummary proposal_summary;
};

/// Samples parent and inspirations from `island` and attaches the recent
/// evaluated outcomes (tail of `evaluated_history`, at most k) and the
/// summary of `q_prop`. Throws PreconditionError on an empty archive.
EvolutionContext build_context(const Archive& archive, std::size_t island, Rng& rng,
                               std::span<const double> evaluated_history, std::size_t k,
                               const ProposalBuffer& q_prop);

struct OperatorSettings {
    TagConfig tags;
    PromptTemplates prompts = PromptTemplates::defaults();
    DecodingSettings decoding;
    int r_asr = 3;
    std::size_t directive_char_limit = 1000;
    /// Above this many characters inspirations are reduced to region bodies.
    std::size_t inspiration_char_budget = 24000;
};

/// Backend usage accumulated over one step.
struct CallStats {
    std::size_t calls = 0;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    std::chrono::milliseconds latency{0};

    void add(const ChatResponse& r);
};

struct RouteResult {
    Factor factor = Factor::kAction;
    int calls = 0;
    bool fallback = false;  // no parseable token within the retry budget
};

/// Up to r_asr ROUTE calls with the same prompt; the first exact factor token
/// wins, otherwise ACTION.
RouteResult asr_route(ChatBackend& backend, const EvolutionContext& ctx, const OperatorSettings& s,
                      CallStats& stats);

struct Directive {
    std::string text;
    Factor factor = Factor::kAction;
    bool defaulted = false;  // sanitization left nothing, or the step was skipped
};

/// Markdown fences and region-tag strings removed, whitespace collapsed,
/// truncated to `limit` bytes on a UTF-8 boundary. May return "".
std::string sanitize_directive(std::string_view raw, const TagConfig& tags, std::size_t limit);

std::string format_signals(const StagnationSignal& stagnation, const ProposalSummary& summary);

/// One DIRECTIVE call carrying the stagnation and failure signals.
Directive rc_directive(ChatBackend& backend, Factor factor, const EvolutionContext& ctx, const OperatorSettings& s,
                       CallStats& stats);

Directive default_directive(Factor factor);

struct EditResult {
    std::optional<std::string> program;  // empty: FAIL (no tagged program in the response)
    std::string response;
};

/// Single EDIT call scoped to `factor`. Throws PreconditionError if the
/// directive was issued for another factor.
EditResult sar_edit(ChatBackend& backend, Factor factor, const Directive& directive, const EvolutionContext& ctx,
                    const OperatorSettings& s, CallStats& stats);

/// Single unscoped EDIT call (baseline mode).
EditResult freeform_edit(ChatBackend& backend, const EvolutionContext& ctx, const OperatorSettings& s,
                         CallStats& stats);

/// Inspirations block for prompts, honouring the character budget.
std::string format_inspirations(std::span<const Inspiration> inspirations, const TagConfig& tags,
                                std::size_t char_budget);

}  // namespace spark
