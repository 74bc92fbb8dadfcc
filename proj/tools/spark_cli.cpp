// spark: command-line entry point (run, report, audit, simulate, validate-config).

#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

#include "CLI11.hpp"
#include "spark/config.hpp"
#include "spark/errors.hpp"
#include "spark/report.hpp"
#include "spark/search.hpp"
#include "spark/util.hpp"

namespace {

enum Exit : int {
    kOk = 0,
    kFailure = 1,
    kConfig = 2,
    kBackend = 3,
    kSeedInfeasible = 4,
    kTraceIo = 5,
};

int cmd_run(const std::string& config_path, bool resume, const std::string& trace_out,
            std::optional<std::uint64_t> stop_after) {
    spark::RunConfig cfg = spark::load_run_config(config_path);
    if (!trace_out.empty()) cfg.loop.trace_path = trace_out;
    if (stop_after) cfg.loop.stop_after = *stop_after;
    if (resume && cfg.loop.checkpoint_path.empty()) throw spark::ConfigError("--resume needs run.checkpoint in the config");
    cfg.loop.operators.prompts = spark::PromptTemplates::load(cfg.prompt_files);

    const auto seed = [&] {
        const std::string text = spark::read_file(cfg.seed_program);
        try {
            return spark::TaggedProgram::parse(text, cfg.loop.operators.tags);
        } catch (const spark::SparkError& e) {
            throw spark::ConfigError("seed program " + cfg.seed_program.string() + ": " + e.what());
        }
    }();
    auto backend = spark::make_backend(cfg);
    auto evaluator = spark::make_evaluator(cfg);
    const auto checker = spark::make_checker(cfg);

    spark::SearchLoop loop(cfg.loop, *backend, *evaluator, checker, seed);
    const spark::RunResult r = resume ? loop.resume() : loop.run();

    const auto& best = *r.best;
    fmt::print("{} after {} attempts, {} evaluations (budget {})\n", r.paused ? "paused" : "finished",
               r.ledger.attempts, r.ledger.n_eval, r.ledger.budget);
    fmt::print("best: fitness {:.4f}, macs {}, digest {}, found at attempt {}\n", best.descriptor.fitness,
               best.descriptor.macs, best.digest(), best.iteration);
    fmt::print("trace: {} ({} records)\n", cfg.loop.trace_path.string(), r.trace_lines);

    auto best_path = cfg.loop.trace_path;
    best_path.replace_extension(".best" + cfg.candidate_suffix);
    spark::write_file(best_path, best.program->text());
    fmt::print("best program: {}\n", best_path.string());
    return kOk;
}

int cmd_report(const std::vector<std::string>& traces, std::optional<double> reference, const std::string& out) {
    std::vector<std::filesystem::path> paths(traces.begin(), traces.end());
    const auto summary = spark::write_report(paths, out, reference);
    auto show = [](const nlohmann::ordered_json& s) {
        if (s["no_valid_candidates"].get<bool>()) {
            fmt::print("best fitness: none (no valid candidates)\n");
        } else {
            fmt::print("best fitness: {} (attempt {}, evaluation {}, macs {})\n", s["best_fitness"].get<double>(),
                       s["best_attempt"].get<std::uint64_t>(), s["evaluations_to_best"].get<std::uint64_t>(),
                       s["best_macs"].get<std::uint64_t>());
        }
        fmt::print("attempts: {}, valid rate: {:.4f}, entanglement rate: {:.4f}, evaluations used: {}\n",
                   s["attempts"].get<std::uint64_t>(), s["valid_rate"].get<double>(),
                   s["entanglement_rate"].get<double>(), s["evaluations_used"].get<std::uint64_t>());
        if (!s["efficiency_display"].is_null()) {
            fmt::print("efficiency ratio: {}\n", s["efficiency_display"].get<std::string>());
        }
    };
    if (summary.contains("runs")) {
        for (const auto& r : summary["runs"]) {
            fmt::print("== {}\n", r["trace"].get<std::string>());
            show(r);
        }
        fmt::print("aggregate over {} traces written to {}\n", traces.size(), out);
    } else {
        show(summary);
    }
    return kOk;
}

int cmd_audit(const std::string& manifest, const std::string& out, const std::string& config_path) {
    spark::TagConfig tags;
    if (!config_path.empty()) tags = spark::load_run_config(config_path).loop.operators.tags;
    const auto result = spark::run_audit(spark::read_manifest(manifest), tags);
    std::string jsonl;
    for (const auto& v : result.verdicts) jsonl += v.dump() + "\n";
    if (out.empty()) {
        std::cout << jsonl;
    } else {
        spark::write_file(out, jsonl);
    }
    fmt::print(stderr, "pairs: {}, entangled: {}, entanglement rate: {:.4f}\n", result.rate.total,
               result.rate.entangled, result.rate.rate);
    if (result.labelled > 0) {
        fmt::print(stderr, "labels: {} of {} verdicts agree ({} labelled entangled)\n", result.label_agreement,
                   result.labelled, result.labelled_entangled);
    }
    return kOk;
}

int cmd_simulate(const spark::SimulationConfig& sc, bool json) {
    std::filesystem::path scratch = sc.out_dir.empty() ? std::filesystem::temp_directory_path() / "spark-simulate"
                                                       : sc.out_dir;
    std::filesystem::create_directories(scratch);
    const auto r = spark::simulate(sc, scratch);
    if (json) {
        nlohmann::ordered_json j;
        j["p_valid"] = sc.p_valid;
        j["trials"] = sc.trials;
        for (const auto& row : r.table) {
            j["feasibility"].push_back(
                {{"k", row.k}, {"passed", row.passed}, {"measured", row.measured}, {"analytic", row.analytic}});
        }
        for (const auto& g : r.mode_gap) {
            j["mode_gap"].push_back({{"seed", g.seed},
                                     {"spark_valid_rate", g.spark_valid_rate},
                                     {"freeform_valid_rate", g.freeform_valid_rate},
                                     {"gap", g.gap()},
                                     {"spark_entanglement_rate", g.spark_entanglement},
                                     {"freeform_entanglement_rate", g.freeform_entanglement}});
        }
        std::cout << j.dump(2) << "\n";
        return kOk;
    }
    fmt::print("feasibility under the p_v^k model (p_v = {}, {} trials per k)\n", sc.p_valid, sc.trials);
    fmt::print("{:>3} {:>10} {:>10} {:>10}\n", "k", "measured", "analytic", "passed");
    for (const auto& row : r.table) {
        fmt::print("{:>3} {:>10.4f} {:>10.4f} {:>10}\n", row.k, row.measured, row.analytic, row.passed);
    }
    if (!r.mode_gap.empty()) {
        fmt::print("\nSPARK vs FREEFORM cumulative valid rate after {} attempts (entangle prob {})\n", sc.attempts,
                   sc.entangle_prob);
        fmt::print("{:>6} {:>8} {:>10} {:>8} {:>12} {:>14}\n", "seed", "spark", "freeform", "gap", "spark_ent",
                   "freeform_ent");
        for (const auto& g : r.mode_gap) {
            fmt::print("{:>6} {:>8.3f} {:>10.3f} {:>8.3f} {:>12.3f} {:>14.3f}\n", g.seed, g.spark_valid_rate,
                       g.freeform_valid_rate, g.gap(), g.spark_entanglement, g.freeform_entanglement);
        }
    }
    return kOk;
}

int cmd_validate(const std::string& config_path) {
    const auto cfg = spark::load_run_config(config_path);
    spark::PromptTemplates::load(cfg.prompt_files);
    fmt::print("{}: ok (mode {}, budget {}, attempt cap {})\n", config_path, spark::to_string(cfg.loop.mode),
               cfg.loop.budget, cfg.loop.attempt_cap ? std::to_string(*cfg.loop.attempt_cap) : "none");
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Factor-conditioned program evolution with an islanded quality-diversity archive"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging on stderr");

    std::string config_path, trace_out;
    bool resume = false;
    std::optional<std::uint64_t> stop_after;
    auto* run = app.add_subcommand("run", "Run a search from a TOML config");
    run->add_option("--config", config_path, "Run configuration")->required()->check(CLI::ExistingFile);
    run->add_flag("--resume", resume, "Continue from the configured checkpoint");
    run->add_option("--trace-out", trace_out, "Override the trace path");
    run->add_option("--stop-after", stop_after, "Pause (with a checkpoint) after this many attempts");

    std::vector<std::string> traces;
    std::optional<double> reference;
    std::string report_out = ".";
    auto* report = app.add_subcommand("report", "Metrics and summary from one or more traces");
    report->add_option("traces", traces, "Trace files (JSONL)")->required()->check(CLI::ExistingFile);
    report->add_option("--reference-evals", reference, "Evaluations used by a reference method")
        ->check(CLI::PositiveNumber);
    report->add_option("--out", report_out, "Output directory");

    std::string manifest, audit_out, audit_config;
    auto* audit = app.add_subcommand("audit", "Locality verdicts over a manifest of program pairs");
    audit->add_option("manifest", manifest, "JSONL manifest")->required()->check(CLI::ExistingFile);
    audit->add_option("--out", audit_out, "Write per-pair verdicts here instead of stdout");
    audit->add_option("--config", audit_config, "Take tag strings from a run configuration")
        ->check(CLI::ExistingFile);

    spark::SimulationConfig sim;
    bool sim_json = false;
    std::string sim_out;
    auto* simulate = app.add_subcommand("simulate", "Stochastic-editor feasibility table and mode-gap runs");
    simulate->add_option("--p-valid", sim.p_valid, "Per-scope validity probability");
    simulate->add_option("--ks", sim.ks, "Scope counts to measure")->delimiter(',');
    simulate->add_option("--trials", sim.trials, "Trials per k");
    simulate->add_option("--seed", sim.seed, "Seed for the feasibility table");
    simulate->add_option("--seeds", sim.seeds, "Seeds for SPARK vs FREEFORM runs")->delimiter(',');
    simulate->add_option("--attempts", sim.attempts, "Attempts per mode-gap run");
    simulate->add_option("--entangle-prob", sim.entangle_prob, "Free-form entanglement probability");
    simulate->add_option("--entangled-scopes", sim.entangled_scopes, "Scopes an entangled edit touches (2 or 3)");
    simulate->add_option("--out", sim_out, "Directory for simulation traces");
    simulate->add_flag("--json", sim_json, "Print JSON instead of tables");

    std::string validate_path;
    auto* validate = app.add_subcommand("validate-config", "Check a run configuration");
    validate->add_option("--config", validate_path, "Run configuration")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // --help and friends exit 0; usage mistakes share the config status.
        return app.exit(e) == 0 ? kOk : kConfig;
    }

    auto logger = spdlog::stderr_color_mt("spark");
    spdlog::set_default_logger(logger);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*run) return cmd_run(config_path, resume, trace_out, stop_after);
        if (*report) return cmd_report(traces, reference, report_out);
        if (*audit) return cmd_audit(manifest, audit_out, audit_config);
        if (*simulate) {
            sim.out_dir = sim_out;
            return cmd_simulate(sim, sim_json);
        }
        if (*validate) return cmd_validate(validate_path);
    } catch (const spark::ConfigError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kConfig;
    } catch (const spark::InvalidFactorToken& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kConfig;
    } catch (const spark::BackendUnavailable& e) {
        fmt::print(stderr, "editor backend unavailable: {}\n", e.what());
        return kBackend;
    } catch (const spark::ScriptExhausted& e) {
        fmt::print(stderr, "editor backend unavailable: {}\n", e.what());
        return kBackend;
    } catch (const spark::SeedInfeasible& e) {
        fmt::print(stderr, "seed infeasible: {}\n", e.what());
        return kSeedInfeasible;
    } catch (const spark::TraceError& e) {
        fmt::print(stderr, "trace error: {}\n", e.what());
        return kTraceIo;
    } catch (const spark::SparkError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return kFailure;
    } catch (const std::filesystem::filesystem_error& e) {
        fmt::print(stderr, "i/o error: {}\n", e.what());
        return kTraceIo;
    }
    return kFailure;
}
