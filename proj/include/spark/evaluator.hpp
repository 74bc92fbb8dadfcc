#pragma once

// Evaluation contract: a program in, fitness and cost descriptors out.

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spark/archive.hpp"
#include "spark/feasibility.hpp"
#include "spark/program.hpp"

namespace spark {

enum class EvalStage : std::uint8_t { kPrelim, kFull };
std::string_view to_string(EvalStage s) noexcept;  // "prelim" | "full"

struct EvaluationOutcome {
    std::optional<Descriptor> descriptor;  // set on success
    std::optional<FailureType> failure;    // TIMEOUT or EVALUATOR_ERROR
    std::string detail;

    bool ok() const noexcept { return descriptor.has_value(); }
};

class Evaluator {
public:
    virtual ~Evaluator() = default;
    virtual EvaluationOutcome evaluate(const TaggedProgram& program, EvalStage stage) = 0;
    /// Whether a cheap preliminary stage exists for cascade gating.
    virtual bool supports_prelim() const { return false; }
};

/// Subprocess evaluator. Invoked as `command... --stage prelim|full <file>`;
/// stdout must hold exactly one JSON object:
///   {"status":"ok","fitness":x,"descriptors":{"macs":n,"params":n}}
///   {"status":"error","type":"..."}
/// The prelim stage may omit descriptors.
struct EvaluatorSpec {
    std::vector<std::string> command;
    std::chrono::milliseconds full_timeout{std::chrono::hours(2)};
    std::optional<std::chrono::milliseconds> prelim_timeout;  // unset: no prelim stage
    std::filesystem::path working_dir;
    std::vector<std::string> env_passthrough;
    std::filesystem::path scratch_dir;
    std::string candidate_suffix = ".py";
};

class CommandEvaluator : public Evaluator {
public:
    explicit CommandEvaluator(EvaluatorSpec spec);
    EvaluationOutcome evaluate(const TaggedProgram& program, EvalStage stage) override;
    bool supports_prelim() const override { return spec_.prelim_timeout.has_value(); }

private:
    EvaluatorSpec spec_;
};

/// Parses the evaluator's stdout. Exposed for tests.
EvaluationOutcome parse_evaluator_output(std::string_view stdout_text, EvalStage stage);

/// Deterministic stand-in task scored from region-body text.
///   fitness = clamp(action_increment * #action_token in ACTION body
///                   + operator_increment * #operator_token in OPERATOR body
///                   - line_penalty * max(0, body_lines - line_cap), 0, 1)
///             (+ uniform noise in [-noise, noise] keyed on seed and digest)
///   macs    = macs_base + macs_per_line * body_lines
///   params  = params_base + params_per_line * body_lines
/// body_lines counts non-blank lines of both bodies; tokens are counted as
/// non-overlapping substrings.
struct SyntheticTask {
    std::string action_token = "gate";
    std::string operator_token = "head";
    double action_increment = 0.05;
    double operator_increment = 0.02;
    std::size_t line_cap = 40;
    double line_penalty = 0.01;
    std::uint64_t macs_base = 600000;
    std::uint64_t macs_per_line = 1000;
    std::uint64_t params_base = 50000;
    std::uint64_t params_per_line = 500;
    double noise = 0.0;
    std::uint64_t noise_seed = 0;
    /// Preliminary-stage score; the prelim stage reports the same fitness.
    bool prelim = true;
};

Descriptor synthetic_score(const TaggedProgram& program, const SyntheticTask& task);

class SyntheticEvaluator : public Evaluator {
public:
    explicit SyntheticEvaluator(SyntheticTask task) : task_(std::move(task)) {}
    EvaluationOutcome evaluate(const TaggedProgram& program, EvalStage stage) override;
    bool supports_prelim() const override { return task_.prelim; }
    const SyntheticTask& task() const noexcept { return task_; }

private:
    SyntheticTask task_;
};

}  // namespace spark
