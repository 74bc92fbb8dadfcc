#include "spark/search.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <sstream>

#include "spark/errors.hpp"
#include "spark/util.hpp"

namespace spark {

std::string_view to_string(RunMode m) noexcept {
    switch (m) {
        case RunMode::kSpark: return "SPARK";
        case RunMode::kSparkNoAsr: return "SPARK_NO_ASR";
        case RunMode::kSparkNoRc: return "SPARK_NO_RC";
        case RunMode::kFreeform: return "FREEFORM";
    }
    return "SPARK";
}

std::optional<RunMode> run_mode_from_string(std::string_view s) noexcept {
    const std::string up = to_upper_ascii(trim(s));
    if (up == "SPARK") return RunMode::kSpark;
    if (up == "SPARK_NO_ASR") return RunMode::kSparkNoAsr;
    if (up == "SPARK_NO_RC") return RunMode::kSparkNoRc;
    if (up == "FREEFORM") return RunMode::kFreeform;
    return std::nullopt;
}

CascadeDecision cascade_gate(double score, std::optional<double> threshold) noexcept {
    if (threshold && score <= *threshold) return CascadeDecision::kCull;
    return CascadeDecision::kProceed;
}

void LoopConfig::validate() const {
    if (budget == 0) throw ConfigError("budget must be at least 1");
    if (attempt_cap && *attempt_cap == 0) throw ConfigError("attempt_cap must be positive when set");
    if (k == 0) throw ConfigError("k must be positive");
    if (k_prime == 0) throw ConfigError("k_prime must be positive");
    if (operators.r_asr < 1) throw ConfigError("r_asr must be at least 1");
    if (checkpoint_every == 0) throw ConfigError("checkpoint_every must be positive");
    if (trace_path.empty()) throw ConfigError("trace path must be set");
    archive.validate();
}

// ---------------------------------------------------------------------------

TraceSink::TraceSink(std::filesystem::path path, std::optional<std::uint64_t> keep_lines) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    if (keep_lines) {
        std::ifstream in(path_, std::ios::binary);
        if (!in) throw TraceError("cannot reopen trace " + path_.string());
        std::string kept, line;
        std::uint64_t n = 0;
        while (n < *keep_lines && std::getline(in, line)) {
            kept += line;
            kept += '\n';
            ++n;
        }
        if (n < *keep_lines) {
            throw TraceError("trace " + path_.string() + " has fewer lines than the checkpoint records");
        }
        in.close();
        write_file(path_, kept);
        lines_ = n;
        out_.open(path_, std::ios::binary | std::ios::app);
    } else {
        out_.open(path_, std::ios::binary | std::ios::trunc);
    }
    if (!out_) throw TraceError("cannot open trace " + path_.string());
}

void TraceSink::write(const nlohmann::ordered_json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
    if (!out_) throw TraceError("write to trace " + path_.string() + " failed");
    ++lines_;
}

// ---------------------------------------------------------------------------

SearchLoop::SearchLoop(LoopConfig config, ChatBackend& backend, Evaluator& evaluator,
                       const FeasibilityChecker& checker, TaggedProgram seed)
    : config_(std::move(config)),
      backend_(backend),
      evaluator_(evaluator),
      checker_(checker),
      seed_(std::make_shared<const TaggedProgram>(std::move(seed))),
      archive_(config_.archive),
      q_prop_(config_.k_prime),
      rng_(config_.seed) {
    config_.validate();
    ledger_.budget = config_.budget;
    ledger_.attempt_cap = config_.attempt_cap;
}

void SearchLoop::evaluate_seed() {
    const EvaluationOutcome out = evaluator_.evaluate(*seed_, EvalStage::kFull);
    if (!out.ok()) {
        throw SeedInfeasible("seed evaluation failed (" +
                             std::string(out.failure ? to_string(*out.failure) : "EVALUATOR_ERROR") +
                             "): " + out.detail);
    }
    seed_descriptor_ = *out.descriptor;
    for (std::size_t i = 0; i < archive_.island_count(); ++i) {
        const auto r = archive_.try_insert(i, seed_, seed_descriptor_, 0);
        if (r.action == ArchiveAction::kInvalid) throw SeedInfeasible("seed fitness is not a finite number");
    }
    ledger_.n_eval = 1;
    history_.push_back(seed_descriptor_.fitness);
    spdlog::info("seed evaluated: fitness {:.4f}, macs {}", seed_descriptor_.fitness, seed_descriptor_.macs);
}

RunResult SearchLoop::run() {
    evaluate_seed();
    TraceSink trace(config_.trace_path);
    return loop(trace);
}

RunResult SearchLoop::resume() {
    if (config_.checkpoint_path.empty()) throw ConfigError("resume needs a checkpoint path");
    load_checkpoint();
    TraceSink trace(config_.trace_path, resume_trace_lines_);
    spdlog::info("resumed at attempt {} (n_eval {})", ledger_.attempts, ledger_.n_eval);
    return loop(trace);
}

RunResult SearchLoop::loop(TraceSink& trace) {
    RunResult result;
    while (!ledger_.exhausted()) {
        if (config_.stop_after && ledger_.attempts >= *config_.stop_after) {
            result.paused = true;
            break;
        }
        attempt(trace);
        if (!config_.checkpoint_path.empty() && ledger_.attempts % config_.checkpoint_every == 0) {
            save_checkpoint(trace.lines());
        }
    }
    if (result.paused && !config_.checkpoint_path.empty()) save_checkpoint(trace.lines());

    result.ledger = ledger_;
    result.best = archive_.best();
    result.seed_descriptor = seed_descriptor_;
    result.trace_lines = trace.lines();
    result.migrations = migrations_;
    return result;
}

namespace {

nlohmann::ordered_json opt_str(const std::optional<std::string>& s) {
    return s ? nlohmann::ordered_json(*s) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void SearchLoop::attempt(TraceSink& trace) {
    const auto started = std::chrono::steady_clock::now();
    const std::uint64_t t = ledger_.attempts + 1;
    const std::size_t island = static_cast<std::size_t>((t - 1) % archive_.island_count());

    const EvolutionContext ctx = build_context(archive_, island, rng_, history_, config_.k, q_prop_);
    CallStats stats;

    std::optional<Factor> factor;
    std::optional<Directive> directive;
    std::optional<RouteResult> route;
    EditResult edit;
    switch (config_.mode) {
        case RunMode::kSpark:
            route = asr_route(backend_, ctx, config_.operators, stats);
            factor = route->factor;
            directive = rc_directive(backend_, *factor, ctx, config_.operators, stats);
            break;
        case RunMode::kSparkNoAsr:
            factor = kAllFactors[rng_.index(kAllFactors.size())];
            directive = rc_directive(backend_, *factor, ctx, config_.operators, stats);
            break;
        case RunMode::kSparkNoRc:
            route = asr_route(backend_, ctx, config_.operators, stats);
            factor = route->factor;
            directive = default_directive(*factor);
            break;
        case RunMode::kFreeform:
            break;
    }
    if (factor) {
        edit = sar_edit(backend_, *factor, *directive, ctx, config_.operators, stats);
    } else {
        edit = freeform_edit(backend_, ctx, config_.operators, stats);
    }

    std::optional<FailureType> failure;
    std::string detail;
    LocalityVerdict verdict;
    std::shared_ptr<const TaggedProgram> child;
    if (!edit.program) {
        failure = FailureType::kEditorFail;
        detail = "editor response carried no tagged program";
        verdict = unparseable_verdict(factor, detail);
    } else {
        FeasibilityResult fr = checker_.check(*ctx.parent, *edit.program, factor, config_.mode != RunMode::kFreeform);
        verdict = fr.verdict;
        failure = fr.failure;
        detail = fr.detail;
        if (fr.child) child = std::make_shared<const TaggedProgram>(std::move(*fr.child));
    }

    std::string outcome = "FAIL";
    std::optional<double> prelim_fitness;
    std::optional<Descriptor> scored;
    std::optional<InsertResult> inserted;
    if (!failure) {
        bool culled = false;
        if (config_.cascade_threshold && evaluator_.supports_prelim()) {
            const EvaluationOutcome pre = evaluator_.evaluate(*child, EvalStage::kPrelim);
            if (!pre.ok()) {
                failure = pre.failure.value_or(FailureType::kEvaluatorError);
                detail = pre.detail;
            } else {
                prelim_fitness = pre.descriptor->fitness;
                culled = cascade_gate(*prelim_fitness, config_.cascade_threshold) == CascadeDecision::kCull;
            }
        }
        if (!failure && culled) {
            outcome = "CULLED";
        } else if (!failure) {
            const EvaluationOutcome full = evaluator_.evaluate(*child, EvalStage::kFull);
            if (!full.ok()) {
                failure = full.failure.value_or(FailureType::kEvaluatorError);
                detail = full.detail;
            } else {
                outcome = "PASS";
                scored = *full.descriptor;
                ++ledger_.n_eval;
                history_.push_back(scored->fitness);
                inserted = archive_.try_insert(island, child, *scored, t);
            }
        }
    }

    ledger_.attempts = t;
    q_prop_.push({t, factor, !failure, failure});

    std::optional<MigrationReport> migration;
    if (archive_.migration_due(t)) {
        migration = archive_.migrate(t);
        ++migrations_;
    }

    const Elite& best = archive_.best();
    const auto wall = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);

    nlohmann::ordered_json rec;
    rec["iteration"] = t;
    rec["mode"] = to_string(config_.mode);
    rec["factor"] = opt_str(factor ? std::optional<std::string>(std::string(to_string(*factor))) : std::nullopt);
    rec["directive_digest"] = opt_str(directive ? std::optional<std::string>(hex_digest(directive->text)) : std::nullopt);
    rec["outcome"] = outcome;
    rec["failure_type"] = opt_str(failure ? std::optional<std::string>(std::string(to_string(*failure))) : std::nullopt);
    rec["fitness"] = scored ? nlohmann::ordered_json(scored->fitness) : nlohmann::ordered_json(nullptr);
    rec["macs"] = scored ? nlohmann::ordered_json(scored->macs) : nlohmann::ordered_json(nullptr);
    rec["archive_action"] =
        opt_str(inserted ? std::optional<std::string>(std::string(to_string(inserted->action))) : std::nullopt);
    rec["entangled"] = verdict.entangled;
    rec["is_factor_local"] = verdict.is_factor_local;
    rec["wall_ms"] = config_.record_timing ? wall.count() : 0;

    rec["n_eval"] = ledger_.n_eval;
    rec["island"] = island;
    rec["parent_digest"] = ctx.parent->digest();
    rec["child_digest"] = opt_str(child ? std::optional<std::string>(child->digest()) : std::nullopt);
    rec["touched_regions"] = verdict.touched_regions.names();
    rec["parse_failure"] = verdict.parse_failure;
    rec["detail"] = detail.substr(0, 2000);
    rec["route_calls"] = route ? route->calls : 0;
    rec["route_fallback"] = route ? route->fallback : false;
    rec["directive"] = opt_str(directive ? std::optional<std::string>(directive->text) : std::nullopt);
    rec["directive_defaulted"] = directive ? directive->defaulted : false;
    rec["prelim_fitness"] = prelim_fitness ? nlohmann::ordered_json(*prelim_fitness) : nlohmann::ordered_json(nullptr);
    rec["params"] = scored && scored->params ? nlohmann::ordered_json(*scored->params) : nlohmann::ordered_json(nullptr);
    if (inserted && inserted->key) {
        rec["cell"] = {inserted->key->fitness_bin, inserted->key->macs_bin};
    } else {
        rec["cell"] = nullptr;
    }
    rec["best_fitness"] = best.descriptor.fitness;
    rec["best_macs"] = best.descriptor.macs;
    rec["llm_calls"] = stats.calls;
    rec["prompt_tokens"] = stats.prompt_tokens;
    rec["completion_tokens"] = stats.completion_tokens;
    rec["llm_latency_ms"] = config_.record_timing ? stats.latency.count() : 0;
    if (migration) {
        nlohmann::ordered_json offers = nlohmann::ordered_json::array();
        for (const auto& m : migration->offers) {
            offers.push_back({{"from", m.from}, {"to", m.to}, {"digest", m.digest}, {"action", to_string(m.action)}});
        }
        rec["migration"] = std::move(offers);
    } else {
        rec["migration"] = nullptr;
    }
    trace.write(rec);

    spdlog::debug("attempt {}: {} {} n_eval={} best={:.4f}", t, outcome,
                  failure ? to_string(*failure) : std::string_view("-"), ledger_.n_eval, best.descriptor.fitness);
}

void SearchLoop::save_checkpoint(std::uint64_t trace_lines) const {
    nlohmann::json j;
    j["version"] = 1;
    j["mode"] = to_string(config_.mode);
    j["seed"] = config_.seed;
    j["attempts"] = ledger_.attempts;
    j["n_eval"] = ledger_.n_eval;
    j["trace_lines"] = trace_lines;
    j["history"] = history_;
    j["q_prop"] = q_prop_.to_json();
    j["archive"] = archive_.to_json();
    j["rng"] = rng_.save_state();
    j["backend"] = backend_.save_state();
    j["migrations"] = migrations_;
    j["seed_program"] = seed_->raw_text();
    j["seed_descriptor"] = {{"fitness", seed_descriptor_.fitness}, {"macs", seed_descriptor_.macs}};
    if (seed_descriptor_.params) j["seed_descriptor"]["params"] = *seed_descriptor_.params;

    auto tmp = config_.checkpoint_path;
    tmp += ".tmp";
    write_file(tmp, j.dump());
    std::error_code ec;
    std::filesystem::rename(tmp, config_.checkpoint_path, ec);
    if (ec) throw TraceError("cannot write checkpoint " + config_.checkpoint_path.string() + ": " + ec.message());
}

void SearchLoop::load_checkpoint() {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(config_.checkpoint_path));
    } catch (const ConfigError& e) {
        throw TraceError(std::string("cannot read checkpoint: ") + e.what());
    } catch (const nlohmann::json::exception& e) {
        throw TraceError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
    try {
        if (j.at("version").get<int>() != 1) throw TraceError("unsupported checkpoint version");
        if (j.at("mode").get<std::string>() != to_string(config_.mode) ||
            j.at("seed").get<std::uint64_t>() != config_.seed) {
            throw ConfigError("checkpoint was written by a run with a different mode or seed");
        }
        const auto& tags = checker_.tags();
        if (TaggedProgram::parse(j.at("seed_program").get<std::string>(), tags).digest() != seed_->digest()) {
            throw ConfigError("checkpoint was written for a different seed program");
        }
        ledger_.attempts = j.at("attempts").get<std::uint64_t>();
        ledger_.n_eval = j.at("n_eval").get<std::uint64_t>();
        resume_trace_lines_ = j.at("trace_lines").get<std::uint64_t>();
        history_ = j.at("history").get<std::vector<double>>();
        q_prop_ = ProposalBuffer::from_json(j.at("q_prop"), config_.k_prime);
        archive_ = Archive::from_json(j.at("archive"), config_.archive, tags);
        rng_.load_state(j.at("rng").get<std::string>());
        backend_.load_state(j.at("backend"));
        migrations_ = j.at("migrations").get<std::uint64_t>();
        const auto& sd = j.at("seed_descriptor");
        seed_descriptor_.fitness = sd.at("fitness").get<double>();
        seed_descriptor_.macs = sd.at("macs").get<std::uint64_t>();
        if (sd.contains("params")) seed_descriptor_.params = sd["params"].get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw TraceError(std::string("checkpoint is malformed: ") + e.what());
    }
}

}  // namespace spark
