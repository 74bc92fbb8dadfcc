#pragma once

// Trace metrics, the locality audit over a corpus of program pairs, and the
// stochastic-editor simulation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spark/backend.hpp"
#include "spark/feasibility.hpp"
#include "spark/locality.hpp"
#include "spark/search.hpp"

namespace spark {

struct TraceRecord {
    std::uint64_t iteration = 0;
    std::string mode;
    std::string outcome;  // PASS | FAIL | CULLED
    std::optional<FailureType> failure;
    std::optional<double> fitness;
    std::optional<std::uint64_t> macs;
    bool entangled = false;
    bool is_factor_local = false;
    std::optional<std::uint64_t> n_eval;
};

/// Throws TraceError naming the 1-based line of the first malformed record.
std::vector<TraceRecord> read_trace(const std::filesystem::path& path);
std::vector<TraceRecord> parse_trace(std::string_view jsonl);

/// Per-attempt series. A proposal is valid when it passed feasibility and
/// entered scoring (PASS or CULLED); best-so-far covers evaluated (PASS)
/// candidates only.
struct MetricsSeries {
    std::vector<std::uint64_t> iteration;
    std::vector<std::optional<double>> best_so_far;
    std::vector<std::optional<std::uint64_t>> best_macs;
    std::vector<double> valid_rate;
    std::vector<double> entanglement_rate;          // cumulative
    std::vector<double> rolling_entanglement_rate;  // over the last `window` attempts
    std::vector<std::uint64_t> evaluations;         // n_eval after the attempt
    std::vector<std::array<std::uint64_t, kFailureTypeCount>> failure_counts;  // cumulative

    std::size_t size() const noexcept { return iteration.size(); }
};

MetricsSeries compute_metrics(const std::vector<TraceRecord>& trace, std::size_t window = 10);

struct ReportSummary {
    std::uint64_t attempts = 0;
    std::uint64_t valid = 0;
    std::uint64_t evaluations_used = 0;  // including the seed
    std::optional<double> best_fitness;
    std::optional<std::uint64_t> best_macs;
    std::optional<std::uint64_t> best_attempt;
    std::optional<std::uint64_t> evaluations_to_best;
    double valid_rate = 0.0;
    double entanglement_rate = 0.0;
    std::optional<double> efficiency_ratio;
    std::optional<std::string> efficiency_display;  // e.g. "28.1×"
};

/// `reference_evals`: evaluation count of a reference method; the ratio is
/// reference / evaluations-to-best.
ReportSummary summarize(const std::vector<TraceRecord>& trace, std::optional<double> reference_evals);

/// Rounds half-up to one decimal and appends "×".
std::string format_ratio(double ratio);

nlohmann::ordered_json to_json(const ReportSummary& s);
std::string metrics_csv(const MetricsSeries& m);
std::string metrics_gnuplot(const MetricsSeries& m);

/// Mean / min / max of best-so-far, valid rate and entanglement rate across
/// several traces, aligned by attempt index.
std::string aggregate_csv(const std::vector<MetricsSeries>& runs);

/// Writes metrics.csv, metrics.dat and summary.json (plus aggregate.csv and
/// aggregate.dat for several traces) into out_dir. Returns the summary JSON.
nlohmann::ordered_json write_report(const std::vector<std::filesystem::path>& traces,
                                    const std::filesystem::path& out_dir, std::optional<double> reference_evals);

// ---------------------------------------------------------------------------

struct AuditPair {
    std::string id;
    std::filesystem::path parent;
    std::filesystem::path child;
    std::optional<Factor> factor;
    std::optional<bool> label_entangled;
};

/// JSONL manifest, one {"id","parent","child","factor"?,"entangled"?} per line;
/// paths resolve against the manifest's directory.
std::vector<AuditPair> read_manifest(const std::filesystem::path& manifest);

struct AuditResult {
    std::vector<nlohmann::ordered_json> verdicts;
    EntanglementRate rate;
    std::size_t labelled = 0;
    std::size_t label_agreement = 0;
    std::size_t labelled_entangled = 0;
};

AuditResult run_audit(const std::vector<AuditPair>& pairs, const TagConfig& tags);

// ---------------------------------------------------------------------------

struct SimulationConfig {
    double p_valid = 0.8;
    std::vector<int> ks{1, 2, 3};
    std::size_t trials = 2000;
    std::uint64_t seed = 1;

    // Mode-gap runs.
    std::vector<std::uint64_t> seeds;  // empty: skip
    std::uint64_t attempts = 100;
    double entangle_prob = 0.5;
    int entangled_scopes = 3;
    std::filesystem::path out_dir;  // traces land here when set

    void validate() const;
};

struct FeasibilityRow {
    int k = 1;
    std::size_t trials = 0;
    std::size_t passed = 0;
    double measured = 0.0;
    double analytic = 0.0;
};

struct ModeGapRow {
    std::uint64_t seed = 0;
    double spark_valid_rate = 0.0;
    double freeform_valid_rate = 0.0;
    double spark_entanglement = 0.0;
    double freeform_entanglement = 0.0;
    std::optional<double> spark_best;
    std::optional<double> freeform_best;

    double gap() const noexcept { return spark_valid_rate - freeform_valid_rate; }
};

struct SimulationResult {
    std::vector<FeasibilityRow> table;
    std::vector<ModeGapRow> mode_gap;
};

/// Tagged program used by the simulator and as a default seed.
std::string simulation_seed_program();

/// Edits touching k scopes are pushed through the feasibility pipeline with
/// validator hooks that reject mock defects; the measured pass rate is
/// compared to p_valid^k. Mode-gap runs execute full SPARK and FREEFORM
/// searches against the stochastic editor and the synthetic evaluator.
SimulationResult simulate(const SimulationConfig& config, const std::filesystem::path& scratch_dir);

/// One hook per kind, each rejecting its mock defect marker.
std::vector<ValidatorHook> mock_validator_hooks();

}  // namespace spark
