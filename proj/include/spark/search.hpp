#pragma once

// The evolutionary search loop: seed evaluation, per-attempt stepping,
// feasibility, cascade gating, archive updates, migration, trace and
// checkpoints.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spark/archive.hpp"
#include "spark/backend.hpp"
#include "spark/evaluator.hpp"
#include "spark/feasibility.hpp"
#include "spark/operators.hpp"
#include "spark/proposals.hpp"

namespace spark {

enum class RunMode : std::uint8_t { kSpark, kSparkNoAsr, kSparkNoRc, kFreeform };

std::string_view to_string(RunMode m) noexcept;
std::optional<RunMode> run_mode_from_string(std::string_view s) noexcept;

struct BudgetLedger {
    std::uint64_t attempts = 0;
    std::uint64_t n_eval = 0;
    std::uint64_t budget = 100;
    std::optional<std::uint64_t> attempt_cap = 100;

    bool exhausted() const noexcept { return n_eval >= budget || (attempt_cap && attempts >= *attempt_cap); }
};

enum class CascadeDecision : std::uint8_t { kProceed, kCull };

/// CULL iff score <= threshold; an absent threshold disables the gate.
CascadeDecision cascade_gate(double score, std::optional<double> threshold) noexcept;

struct LoopConfig {
    RunMode mode = RunMode::kSpark;
    std::uint64_t budget = 100;
    std::optional<std::uint64_t> attempt_cap = 100;
    std::size_t k = 3;
    std::size_t k_prime = 10;
    OperatorSettings operators;
    ArchiveConfig archive;
    std::optional<double> cascade_threshold = -100.0;
    std::uint64_t seed = 0;

    std::filesystem::path trace_path;
    std::filesystem::path checkpoint_path;  // empty: no checkpoints
    std::uint64_t checkpoint_every = 10;
    /// Wall-clock fields are written as 0 unless set, keeping traces reproducible.
    bool record_timing = false;
    /// Pause after this many attempts in total, checkpointing first.
    std::optional<std::uint64_t> stop_after;

    void validate() const;
};

struct RunResult {
    BudgetLedger ledger;
    bool paused = false;  // stopped by stop_after rather than by the budget
    std::optional<Elite> best;
    Descriptor seed_descriptor;
    std::uint64_t trace_lines = 0;
    std::uint64_t migrations = 0;
};

/// Append-only JSONL writer. Every line is flushed; write errors throw TraceError.
class TraceSink {
public:
    /// `keep_lines`: when set, an existing file is cut to that many lines and
    /// appended to; otherwise the file is truncated.
    TraceSink(std::filesystem::path path, std::optional<std::uint64_t> keep_lines = std::nullopt);
    void write(const nlohmann::ordered_json& record);
    std::uint64_t lines() const noexcept { return lines_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::uint64_t lines_ = 0;
};

class SearchLoop {
public:
    SearchLoop(LoopConfig config, ChatBackend& backend, Evaluator& evaluator, const FeasibilityChecker& checker,
               TaggedProgram seed);

    /// Fresh run. Throws SeedInfeasible when the seed cannot be evaluated,
    /// BackendUnavailable when the editor is unreachable, TraceError on I/O.
    RunResult run();
    /// Continues from the checkpoint at config.checkpoint_path.
    RunResult resume();

    const Archive& archive() const noexcept { return archive_; }
    const BudgetLedger& ledger() const noexcept { return ledger_; }
    const ProposalBuffer& proposals() const noexcept { return q_prop_; }

private:
    void evaluate_seed();
    void attempt(TraceSink& trace);
    RunResult loop(TraceSink& trace);
    void save_checkpoint(std::uint64_t trace_lines) const;
    void load_checkpoint();

    LoopConfig config_;
    ChatBackend& backend_;
    Evaluator& evaluator_;
    const FeasibilityChecker& checker_;
    std::shared_ptr<const TaggedProgram> seed_;

    Archive archive_;
    BudgetLedger ledger_;
    ProposalBuffer q_prop_;
    std::vector<double> history_;  // fitness of every evaluated candidate, seed first
    Rng rng_;
    Descriptor seed_descriptor_;
    std::uint64_t migrations_ = 0;
    std::uint64_t resume_trace_lines_ = 0;
};

}  // namespace spark
