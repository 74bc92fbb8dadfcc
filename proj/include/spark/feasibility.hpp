#pragma once

// Staged feasibility pipeline: tags, factor locality, then external
// syntax / interface / semantic hooks. The first failing stage wins.

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "spark/locality.hpp"
#include "spark/process.hpp"
#include "spark/program.hpp"

namespace spark {

enum class FailureType : std::uint8_t {
    kTagViolation,
    kNotFactorLocal,
    kSyntax,
    kInterface,
    kSemantic,
    kEditorFail,
    kTimeout,
    kEvaluatorError,
};

inline constexpr std::size_t kFailureTypeCount = 8;

std::string_view to_string(FailureType t) noexcept;
std::optional<FailureType> failure_type_from_string(std::string_view s) noexcept;

enum class HookKind : std::uint8_t { kSyntax, kInterface, kSemantic };

std::string_view to_string(HookKind k) noexcept;
std::optional<HookKind> hook_kind_from_string(std::string_view s) noexcept;

/// One validation hook. The command, when present, is run with the candidate
/// file path appended as its last argument: exit 0 passes, anything else
/// fails, and exceeding the timeout is a TIMEOUT failure.
struct ValidatorHook {
    HookKind kind = HookKind::kSyntax;
    std::vector<std::string> command;
    std::chrono::milliseconds timeout{std::chrono::seconds(60)};
    /// INTERFACE only: identifiers that must appear verbatim in frozen lines.
    std::vector<std::string> required_symbols;
    /// Candidate fails if any line contains one of these (checked in-process).
    std::vector<std::string> forbidden_substrings;
};

struct FeasibilityResult {
    std::optional<FailureType> failure;  // empty on PASS
    std::string detail;                  // hook stderr or parse message
    LocalityVerdict verdict;
    std::optional<TaggedProgram> child;  // set whenever the child parsed

    bool passed() const noexcept { return !failure.has_value(); }
};

class FeasibilityChecker {
public:
    /// Candidate files for command hooks are written into `scratch_dir` with
    /// the given file suffix.
    FeasibilityChecker(TagConfig tags, std::vector<ValidatorHook> hooks, std::filesystem::path scratch_dir,
                       std::string candidate_suffix = ".py", ProcessOptions base_options = {});

    /// Stages, in order: (a) normalize + parse tags, (b) factor locality when
    /// `enforce_locality`, (c) SYNTAX, (d) INTERFACE, (e) SEMANTIC hooks.
    /// Throws ConfigError if a hook command cannot be executed.
    FeasibilityResult check(const TaggedProgram& parent, std::string_view child_text,
                            std::optional<Factor> selected, bool enforce_locality = true) const;

    const std::vector<ValidatorHook>& hooks() const noexcept { return hooks_; }
    const TagConfig& tags() const noexcept { return tags_; }

    /// Writes the candidate's normalized text to the scratch file and returns its path.
    std::filesystem::path materialize(const TaggedProgram& candidate) const;

private:
    TagConfig tags_;
    std::vector<ValidatorHook> hooks_;  // stable-sorted by kind
    std::filesystem::path scratch_dir_;
    std::string suffix_;
    ProcessOptions base_options_;
};

/// Extracts the candidate program from an EDIT response: the last complete
/// fenced code block, or the whole response when there is no complete block.
/// Returns nullopt (EDITOR_FAIL) when the result does not carry all four
/// region tags.
std::optional<std::string> classify_editor_output(std::string_view response, const TagConfig& tags);

/// Last complete ``` / ~~~ fenced block, if any.
std::optional<std::string> last_fenced_block(std::string_view text);

}  // namespace spark
