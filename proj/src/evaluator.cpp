#include "spark/evaluator.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "spark/errors.hpp"
#include "spark/process.hpp"
#include "spark/util.hpp"

namespace spark {

std::string_view to_string(EvalStage s) noexcept { return s == EvalStage::kPrelim ? "prelim" : "full"; }

namespace {

EvaluationOutcome eval_error(std::string detail) {
    EvaluationOutcome o;
    o.failure = FailureType::kEvaluatorError;
    o.detail = std::move(detail);
    return o;
}

std::optional<std::uint64_t> non_negative_int(const nlohmann::json& v) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        const auto x = v.get<std::int64_t>();
        if (x >= 0) return static_cast<std::uint64_t>(x);
        return std::nullopt;
    }
    if (v.is_number_float()) {
        const double x = v.get<double>();
        if (std::isfinite(x) && x >= 0 && x == std::floor(x) && x < 1.8e19) return static_cast<std::uint64_t>(x);
    }
    return std::nullopt;
}

}  // namespace

EvaluationOutcome parse_evaluator_output(std::string_view stdout_text, EvalStage stage) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(stdout_text);
    } catch (const nlohmann::json::parse_error& e) {
        return eval_error(std::string("evaluator output is not a single JSON object: ") + e.what());
    }
    if (!j.is_object()) return eval_error("evaluator output is not a JSON object");
    const auto status = j.value("status", std::string());
    if (status == "error") {
        const auto type = j.contains("type") && j["type"].is_string() ? j["type"].get<std::string>() : "unspecified";
        return eval_error("evaluator reported error: " + type);
    }
    if (status != "ok") return eval_error("evaluator status must be \"ok\" or \"error\"");
    if (!j.contains("fitness") || !j["fitness"].is_number()) return eval_error("evaluator output lacks numeric fitness");

    Descriptor d;
    d.fitness = j["fitness"].get<double>();
    const bool has_desc = j.contains("descriptors") && j["descriptors"].is_object();
    if (has_desc) {
        const auto& desc = j["descriptors"];
        if (desc.contains("macs")) {
            const auto m = non_negative_int(desc["macs"]);
            if (!m) return eval_error("descriptors.macs must be a non-negative integer");
            d.macs = *m;
        } else if (stage == EvalStage::kFull) {
            return eval_error("full-stage output lacks descriptors.macs");
        }
        if (desc.contains("params")) {
            const auto p = non_negative_int(desc["params"]);
            if (!p) return eval_error("descriptors.params must be a non-negative integer");
            d.params = *p;
        }
    } else if (stage == EvalStage::kFull) {
        return eval_error("full-stage output lacks descriptors");
    }
    EvaluationOutcome o;
    o.descriptor = d;
    return o;
}

CommandEvaluator::CommandEvaluator(EvaluatorSpec spec) : spec_(std::move(spec)) {
    if (spec_.command.empty()) throw ConfigError("evaluator.command must not be empty");
}

EvaluationOutcome CommandEvaluator::evaluate(const TaggedProgram& program, EvalStage stage) {
    const auto path = spec_.scratch_dir / ("eval_candidate" + spec_.candidate_suffix);
    write_file(path, program.text());

    auto argv = spec_.command;
    argv.emplace_back("--stage");
    argv.emplace_back(to_string(stage));
    argv.push_back(path.string());

    ProcessOptions opts;
    opts.timeout = stage == EvalStage::kPrelim && spec_.prelim_timeout ? *spec_.prelim_timeout : spec_.full_timeout;
    opts.working_dir = spec_.working_dir;
    opts.env_passthrough = spec_.env_passthrough;

    const ProcessResult pr = run_process(argv, opts);
    if (pr.timed_out) {
        EvaluationOutcome o;
        o.failure = FailureType::kTimeout;
        o.detail = std::string(to_string(stage)) + " evaluation timed out";
        return o;
    }
    if (pr.exit_code != 0) {
        std::string detail = "evaluator exited with status " + std::to_string(pr.exit_code);
        if (!pr.err.empty()) detail += ": " + pr.err.substr(0, 2000);
        return eval_error(std::move(detail));
    }
    return parse_evaluator_output(pr.out, stage);
}

namespace {

std::size_t count_occurrences(std::span<const std::string> lines, std::string_view token) {
    if (token.empty()) return 0;
    std::size_t n = 0;
    for (const auto& line : lines) {
        for (auto pos = line.find(token); pos != std::string::npos; pos = line.find(token, pos + token.size())) ++n;
    }
    return n;
}

std::size_t non_blank(std::span<const std::string> lines) {
    return static_cast<std::size_t>(
        std::count_if(lines.begin(), lines.end(), [](const std::string& l) { return !trim(l).empty(); }));
}

}  // namespace

Descriptor synthetic_score(const TaggedProgram& program, const SyntheticTask& task) {
    const auto op = program.body(Factor::kOperator);
    const auto act = program.body(Factor::kAction);
    const std::size_t lines = non_blank(op) + non_blank(act);

    double f = task.action_increment * static_cast<double>(count_occurrences(act, task.action_token)) +
               task.operator_increment * static_cast<double>(count_occurrences(op, task.operator_token));
    if (lines > task.line_cap) f -= task.line_penalty * static_cast<double>(lines - task.line_cap);
    if (task.noise > 0.0) {
        Rng rng(task.noise_seed ^ fnv1a64(program.digest()));
        f += task.noise * (2.0 * rng.uniform01() - 1.0);
    }

    Descriptor d;
    d.fitness = std::clamp(f, 0.0, 1.0);
    d.macs = task.macs_base + task.macs_per_line * lines;
    d.params = task.params_base + task.params_per_line * lines;
    return d;
}

EvaluationOutcome SyntheticEvaluator::evaluate(const TaggedProgram& program, EvalStage) {
    EvaluationOutcome o;
    o.descriptor = synthetic_score(program, task_);
    return o;
}

}  // namespace spark
