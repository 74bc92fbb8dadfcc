#include "spark/feasibility.hpp"

#include <algorithm>
#include <array>

#include "spark/util.hpp"

namespace spark {

namespace {

constexpr std::array<std::string_view, kFailureTypeCount> kFailureNames{
    "TAG_VIOLATION", "NOT_FACTOR_LOCAL", "SYNTAX", "INTERFACE",
    "SEMANTIC",      "EDITOR_FAIL",      "TIMEOUT", "EVALUATOR_ERROR",
};

FailureType failure_for(HookKind k) noexcept {
    switch (k) {
        case HookKind::kSyntax: return FailureType::kSyntax;
        case HookKind::kInterface: return FailureType::kInterface;
        case HookKind::kSemantic: return FailureType::kSemantic;
    }
    return FailureType::kSemantic;
}

}  // namespace

std::string_view to_string(FailureType t) noexcept { return kFailureNames[static_cast<std::size_t>(t)]; }

std::optional<FailureType> failure_type_from_string(std::string_view s) noexcept {
    for (std::size_t i = 0; i < kFailureNames.size(); ++i) {
        if (kFailureNames[i] == s) return static_cast<FailureType>(i);
    }
    return std::nullopt;
}

std::string_view to_string(HookKind k) noexcept {
    switch (k) {
        case HookKind::kSyntax: return "syntax";
        case HookKind::kInterface: return "interface";
        case HookKind::kSemantic: return "semantic";
    }
    return "syntax";
}

std::optional<HookKind> hook_kind_from_string(std::string_view s) noexcept {
    const std::string up = to_upper_ascii(s);
    if (up == "SYNTAX") return HookKind::kSyntax;
    if (up == "INTERFACE") return HookKind::kInterface;
    if (up == "SEMANTIC") return HookKind::kSemantic;
    return std::nullopt;
}

FeasibilityChecker::FeasibilityChecker(TagConfig tags, std::vector<ValidatorHook> hooks,
                                       std::filesystem::path scratch_dir, std::string candidate_suffix,
                                       ProcessOptions base_options)
    : tags_(std::move(tags)),
      hooks_(std::move(hooks)),
      scratch_dir_(std::move(scratch_dir)),
      suffix_(std::move(candidate_suffix)),
      base_options_(std::move(base_options)) {
    std::stable_sort(hooks_.begin(), hooks_.end(),
                     [](const ValidatorHook& a, const ValidatorHook& b) { return a.kind < b.kind; });
}

std::filesystem::path FeasibilityChecker::materialize(const TaggedProgram& candidate) const {
    auto path = scratch_dir_ / ("candidate" + suffix_);
    write_file(path, candidate.text());
    return path;
}

FeasibilityResult FeasibilityChecker::check(const TaggedProgram& parent, std::string_view child_text,
                                            std::optional<Factor> selected, bool enforce_locality) const {
    FeasibilityResult r;

    // (a) template: normalization and tag structure
    try {
        r.child.emplace(TaggedProgram::parse(child_text, tags_));
    } catch (const TagParseError& e) {
        r.verdict = unparseable_verdict(selected, e.what());
        r.failure = FailureType::kTagViolation;
        r.detail = e.what();
        return r;
    } catch (const EncodingError& e) {
        r.verdict = unparseable_verdict(selected, e.what());
        r.failure = FailureType::kTagViolation;
        r.detail = e.what();
        return r;
    }
    const TaggedProgram& child = *r.child;

    // (b) factor locality; always computed, enforced only when asked
    r.verdict = check_factor_local(parent, child, selected);
    if (enforce_locality && !r.verdict.is_factor_local) {
        r.failure = FailureType::kNotFactorLocal;
        const auto names = r.verdict.touched_regions.names();
        r.detail = "touched:";
        for (const auto& n : names) r.detail += " " + n;
        return r;
    }

    // (c)-(e) hooks, already ordered by kind
    std::optional<std::filesystem::path> file;
    for (const auto& hook : hooks_) {
        for (const auto& bad : hook.forbidden_substrings) {
            for (std::size_t i = 0; i < child.line_count(); ++i) {
                if (child.lines()[i].find(bad) != std::string::npos) {
                    r.failure = failure_for(hook.kind);
                    r.detail = "line " + std::to_string(i + 1) + " contains forbidden text '" + bad + "'";
                    return r;
                }
            }
        }
        if (hook.kind == HookKind::kInterface && !hook.required_symbols.empty()) {
            const auto frozen = child.frozen_lines();
            for (const auto& sym : hook.required_symbols) {
                const bool present = std::any_of(frozen.begin(), frozen.end(), [&](std::string_view l) {
                    return l.find(sym) != std::string_view::npos;
                });
                if (!present) {
                    r.failure = FailureType::kInterface;
                    r.detail = "required symbol missing from frozen scaffolding: " + sym;
                    return r;
                }
            }
        }
        if (hook.command.empty()) continue;

        if (!file) file = materialize(child);
        auto argv = hook.command;
        argv.push_back(file->string());
        ProcessOptions opts = base_options_;
        opts.timeout = hook.timeout;
        const ProcessResult pr = run_process(argv, opts);
        if (pr.timed_out) {
            r.failure = FailureType::kTimeout;
            r.detail = std::string(to_string(hook.kind)) + " hook timed out";
            return r;
        }
        if (pr.exit_code != 0) {
            r.failure = failure_for(hook.kind);
            r.detail = pr.err.empty() ? "exit status " + std::to_string(pr.exit_code) : pr.err;
            return r;
        }
    }
    return r;
}

std::optional<std::string> last_fenced_block(std::string_view text) {
    std::optional<std::string> last;
    std::string current;
    bool inside = false;
    std::string_view fence;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string_view line = text.substr(pos, nl - pos);
        const std::string_view t = trim(line);
        if (!inside) {
            if (t.starts_with("```") || t.starts_with("~~~")) {
                inside = true;
                fence = t.substr(0, 3);
                current.clear();
            }
        } else if (t == fence) {
            inside = false;
            last = current;
        } else {
            current.append(line);
            current.push_back('\n');
        }
        pos = nl + 1;
    }
    return last;
}

std::optional<std::string> classify_editor_output(std::string_view response, const TagConfig& tags) {
    if (trim(response).empty()) return std::nullopt;
    std::string program = last_fenced_block(response).value_or(std::string(response));
    if (!has_region_tags(program, tags)) return std::nullopt;
    return program;
}

}  // namespace spark
