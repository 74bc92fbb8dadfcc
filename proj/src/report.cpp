#include "spark/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "spark/errors.hpp"
#include "spark/util.hpp"

namespace spark {

namespace {

TraceRecord parse_record(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("record is not a JSON object");
    TraceRecord r;
    const auto& it = j.at("iteration");
    if (!it.is_number_unsigned()) throw std::invalid_argument("iteration must be a non-negative integer");
    r.iteration = it.get<std::uint64_t>();
    r.mode = j.value("mode", std::string());
    r.outcome = j.at("outcome").get<std::string>();
    if (r.outcome != "PASS" && r.outcome != "FAIL" && r.outcome != "CULLED") {
        throw std::invalid_argument("unknown outcome '" + r.outcome + "'");
    }
    if (const auto& ft = j.at("failure_type"); !ft.is_null()) {
        r.failure = failure_type_from_string(ft.get<std::string>());
        if (!r.failure) throw std::invalid_argument("unknown failure_type");
    }
    if (const auto& f = j.at("fitness"); !f.is_null()) r.fitness = f.get<double>();
    if (const auto& m = j.at("macs"); !m.is_null()) r.macs = m.get<std::uint64_t>();
    r.entangled = j.at("entangled").get<bool>();
    r.is_factor_local = j.at("is_factor_local").get<bool>();
    if (j.contains("n_eval") && !j["n_eval"].is_null()) r.n_eval = j["n_eval"].get<std::uint64_t>();
    if (r.outcome == "FAIL" && r.fitness) throw std::invalid_argument("FAIL record carries a fitness");
    return r;
}

std::string num(double x) { return fmt::format("{}", x); }

template <typename T>
std::string opt_num(const std::optional<T>& x, std::string_view missing) {
    return x ? fmt::format("{}", *x) : std::string(missing);
}

}  // namespace

std::vector<TraceRecord> parse_trace(std::string_view jsonl) {
    std::vector<TraceRecord> out;
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < jsonl.size()) {
        auto nl = jsonl.find('\n', pos);
        if (nl == std::string_view::npos) nl = jsonl.size();
        const std::string_view line = jsonl.substr(pos, nl - pos);
        ++line_no;
        pos = nl + 1;
        if (trim(line).empty()) continue;
        try {
            out.push_back(parse_record(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw TraceError("trace line " + std::to_string(line_no) + " is malformed: " + e.what());
        }
    }
    return out;
}

std::vector<TraceRecord> read_trace(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const ConfigError& e) {
        throw TraceError(e.what());
    }
    return parse_trace(text);
}

MetricsSeries compute_metrics(const std::vector<TraceRecord>& trace, std::size_t window) {
    MetricsSeries m;
    std::optional<double> best;
    std::optional<std::uint64_t> best_macs;
    std::uint64_t valid = 0, entangled = 0, passes = 0;
    std::array<std::uint64_t, kFailureTypeCount> counts{};
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const auto& r = trace[i];
        if (r.outcome == "PASS" || r.outcome == "CULLED") ++valid;
        if (r.outcome == "PASS") ++passes;
        if (r.entangled) ++entangled;
        if (r.failure) ++counts[static_cast<std::size_t>(*r.failure)];
        if (r.outcome == "PASS" && r.fitness) {
            const std::uint64_t mc = r.macs.value_or(0);
            if (!best || *r.fitness > *best || (*r.fitness == *best && mc < *best_macs)) {
                best = *r.fitness;
                best_macs = mc;
            }
        }
        const double n = static_cast<double>(i + 1);
        m.iteration.push_back(r.iteration);
        m.best_so_far.push_back(best);
        m.best_macs.push_back(best_macs);
        m.valid_rate.push_back(static_cast<double>(valid) / n);
        m.entanglement_rate.push_back(static_cast<double>(entangled) / n);
        const std::size_t lo = i + 1 > window ? i + 1 - window : 0;
        const auto in_window = std::count_if(trace.begin() + static_cast<std::ptrdiff_t>(lo),
                                             trace.begin() + static_cast<std::ptrdiff_t>(i + 1),
                                             [](const TraceRecord& x) { return x.entangled; });
        m.rolling_entanglement_rate.push_back(static_cast<double>(in_window) / static_cast<double>(i + 1 - lo));
        m.evaluations.push_back(r.n_eval.value_or(1 + passes));
        m.failure_counts.push_back(counts);
    }
    return m;
}

std::string format_ratio(double ratio) {
    const double rounded = std::floor(ratio * 10.0 + 0.5 + 1e-9) / 10.0;
    return fmt::format("{:.1f}×", rounded);
}

ReportSummary summarize(const std::vector<TraceRecord>& trace, std::optional<double> reference_evals) {
    ReportSummary s;
    s.attempts = trace.size();
    std::uint64_t entangled = 0, passes = 0;
    s.evaluations_used = 1;
    for (const auto& r : trace) {
        if (r.outcome == "PASS" || r.outcome == "CULLED") ++s.valid;
        if (r.outcome == "PASS") ++passes;
        if (r.entangled) ++entangled;
        const std::uint64_t n_eval = r.n_eval.value_or(1 + passes);
        s.evaluations_used = std::max(s.evaluations_used, n_eval);
        if (r.outcome == "PASS" && r.fitness) {
            const std::uint64_t mc = r.macs.value_or(0);
            if (!s.best_fitness || *r.fitness > *s.best_fitness) {
                s.best_fitness = *r.fitness;
                s.best_macs = mc;
                s.best_attempt = r.iteration;
                s.evaluations_to_best = n_eval;
            } else if (*r.fitness == *s.best_fitness && mc < *s.best_macs) {
                s.best_macs = mc;
            }
        }
    }
    if (s.attempts > 0) {
        s.valid_rate = static_cast<double>(s.valid) / static_cast<double>(s.attempts);
        s.entanglement_rate = static_cast<double>(entangled) / static_cast<double>(s.attempts);
    }
    if (reference_evals && s.evaluations_to_best && *s.evaluations_to_best > 0) {
        s.efficiency_ratio = *reference_evals / static_cast<double>(*s.evaluations_to_best);
        s.efficiency_display = format_ratio(*s.efficiency_ratio);
    }
    return s;
}

nlohmann::ordered_json to_json(const ReportSummary& s) {
    auto opt = [](const auto& x) { return x ? nlohmann::ordered_json(*x) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j;
    j["attempts"] = s.attempts;
    j["valid"] = s.valid;
    j["valid_rate"] = s.valid_rate;
    j["entanglement_rate"] = s.entanglement_rate;
    j["evaluations_used"] = s.evaluations_used;
    j["best_fitness"] = opt(s.best_fitness);
    j["best_macs"] = opt(s.best_macs);
    j["best_attempt"] = opt(s.best_attempt);
    j["evaluations_to_best"] = opt(s.evaluations_to_best);
    j["no_valid_candidates"] = !s.best_fitness.has_value();
    j["efficiency_ratio"] = opt(s.efficiency_ratio);
    j["efficiency_display"] = opt(s.efficiency_display);
    return j;
}

std::string metrics_csv(const MetricsSeries& m) {
    std::string out = "iteration,best_so_far,best_macs,valid_rate,entanglement_rate,rolling_entanglement_rate,evaluations";
    for (std::size_t t = 0; t < kFailureTypeCount; ++t) {
        out += ",fail_" + to_upper_ascii(to_string(static_cast<FailureType>(t)));
    }
    out += "\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        out += fmt::format("{},{},{},{},{},{},{}", m.iteration[i], opt_num(m.best_so_far[i], ""),
                           opt_num(m.best_macs[i], ""), num(m.valid_rate[i]), num(m.entanglement_rate[i]),
                           num(m.rolling_entanglement_rate[i]), m.evaluations[i]);
        for (auto c : m.failure_counts[i]) out += fmt::format(",{}", c);
        out += "\n";
    }
    return out;
}

std::string metrics_gnuplot(const MetricsSeries& m) {
    std::string out =
        "# iteration best_so_far best_macs valid_rate entanglement_rate rolling_entanglement_rate evaluations\n";
    for (std::size_t i = 0; i < m.size(); ++i) {
        out += fmt::format("{} {} {} {} {} {} {}\n", m.iteration[i], opt_num(m.best_so_far[i], "NaN"),
                           opt_num(m.best_macs[i], "NaN"), num(m.valid_rate[i]), num(m.entanglement_rate[i]),
                           num(m.rolling_entanglement_rate[i]), m.evaluations[i]);
    }
    return out;
}

namespace {

struct Band {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double min = std::numeric_limits<double>::quiet_NaN();
    double max = std::numeric_limits<double>::quiet_NaN();
};

Band band(const std::vector<double>& xs) {
    Band b;
    if (xs.empty()) return b;
    double sum = 0;
    b.min = xs.front();
    b.max = xs.front();
    for (double x : xs) {
        sum += x;
        b.min = std::min(b.min, x);
        b.max = std::max(b.max, x);
    }
    b.mean = sum / static_cast<double>(xs.size());
    return b;
}

std::string band_cells(const Band& b, char sep) {
    auto f = [&](double x) { return std::isnan(x) ? std::string(sep == ',' ? "" : "NaN") : num(x); };
    return fmt::format("{}{}{}{}{}", f(b.mean), sep, f(b.min), sep, f(b.max));
}

std::string aggregate_table(const std::vector<MetricsSeries>& runs, char sep) {
    const char* cols[] = {"attempt", "best_mean", "best_min",  "best_max",  "valid_mean", "valid_min",
                          "valid_max", "ent_mean", "ent_min", "ent_max", "runs"};
    std::string out = sep == ',' ? "" : "# ";
    for (std::size_t c = 0; c < std::size(cols); ++c) out += (c ? std::string(1, sep) : "") + cols[c];
    out += "\n";
    std::size_t len = 0;
    for (const auto& r : runs) len = std::max(len, r.size());
    for (std::size_t i = 0; i < len; ++i) {
        std::vector<double> best, valid, ent;
        std::size_t n = 0;
        for (const auto& r : runs) {
            if (i >= r.size()) continue;
            ++n;
            if (r.best_so_far[i]) best.push_back(*r.best_so_far[i]);
            valid.push_back(r.valid_rate[i]);
            ent.push_back(r.entanglement_rate[i]);
        }
        out += fmt::format("{}{}{}{}{}{}{}{}{}\n", i + 1, sep, band_cells(band(best), sep), sep,
                           band_cells(band(valid), sep), sep, band_cells(band(ent), sep), sep, n);
    }
    return out;
}

}  // namespace

std::string aggregate_csv(const std::vector<MetricsSeries>& runs) { return aggregate_table(runs, ','); }

nlohmann::ordered_json write_report(const std::vector<std::filesystem::path>& traces,
                                    const std::filesystem::path& out_dir, std::optional<double> reference_evals) {
    if (traces.empty()) throw ConfigError("report needs at least one trace");
    std::vector<MetricsSeries> series;
    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < traces.size(); ++i) {
        const auto records = read_trace(traces[i]);
        series.push_back(compute_metrics(records));
        auto s = to_json(summarize(records, reference_evals));
        s["trace"] = traces[i].string();
        runs.push_back(std::move(s));
        const std::string stem = traces.size() == 1 ? "metrics" : fmt::format("metrics_{}", i + 1);
        write_file(out_dir / (stem + ".csv"), metrics_csv(series.back()));
        write_file(out_dir / (stem + ".dat"), metrics_gnuplot(series.back()));
    }

    nlohmann::ordered_json summary;
    if (traces.size() == 1) {
        summary = runs.front();
    } else {
        write_file(out_dir / "aggregate.csv", aggregate_table(series, ','));
        write_file(out_dir / "aggregate.dat", aggregate_table(series, ' '));
        std::vector<double> best, valid;
        for (const auto& r : runs) {
            if (!r["best_fitness"].is_null()) best.push_back(r["best_fitness"].get<double>());
            valid.push_back(r["valid_rate"].get<double>());
        }
        const Band bb = band(best), vb = band(valid);
        auto nan_null = [](double x) { return std::isnan(x) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(x); };
        summary["runs"] = runs;
        summary["aggregate"] = {{"traces", traces.size()},
                                {"best_fitness_mean", nan_null(bb.mean)},
                                {"best_fitness_min", nan_null(bb.min)},
                                {"best_fitness_max", nan_null(bb.max)},
                                {"valid_rate_mean", nan_null(vb.mean)},
                                {"valid_rate_min", nan_null(vb.min)},
                                {"valid_rate_max", nan_null(vb.max)}};
    }
    write_file(out_dir / "summary.json", summary.dump(2) + "\n");
    return summary;
}

// ---------------------------------------------------------------------------

std::vector<AuditPair> read_manifest(const std::filesystem::path& manifest) {
    const std::string text = read_file(manifest);
    const auto base = manifest.parent_path();
    std::vector<AuditPair> pairs;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        const std::string line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            AuditPair p;
            p.id = j.value("id", "pair-" + std::to_string(line_no));
            p.parent = base / j.at("parent").get<std::string>();
            p.child = base / j.at("child").get<std::string>();
            if (j.contains("factor") && !j["factor"].is_null()) p.factor = parse_factor_token(j["factor"].get<std::string>());
            if (j.contains("entangled") && !j["entangled"].is_null()) p.label_entangled = j["entangled"].get<bool>();
            pairs.push_back(std::move(p));
        } catch (const std::exception& e) {
            throw ConfigError("manifest line " + std::to_string(line_no) + " is malformed: " + e.what());
        }
    }
    return pairs;
}

AuditResult run_audit(const std::vector<AuditPair>& pairs, const TagConfig& tags) {
    AuditResult result;
    std::vector<LocalityVerdict> verdicts;
    for (const auto& p : pairs) {
        const std::string parent_text = read_file(p.parent);
        const std::string child_text = read_file(p.child);
        LocalityVerdict v;
        try {
            const auto parent = TaggedProgram::parse(parent_text, tags);
            v = check_factor_local(parent, child_text, tags, p.factor);
        } catch (const SparkError& e) {
            v = unparseable_verdict(p.factor, std::string("parent: ") + e.what());
        }
        nlohmann::ordered_json j;
        j["id"] = p.id;
        j["factor"] = p.factor ? nlohmann::ordered_json(std::string(to_string(*p.factor))) : nlohmann::ordered_json(nullptr);
        j["is_factor_local"] = v.is_factor_local;
        j["entangled"] = v.entangled;
        j["touched_regions"] = v.touched_regions.names();
        j["parse_failure"] = v.parse_failure;
        j["parse_error"] = v.parse_error;
        if (p.label_entangled) {
            ++result.labelled;
            if (*p.label_entangled) ++result.labelled_entangled;
            const bool agrees = *p.label_entangled == v.entangled;
            if (agrees) ++result.label_agreement;
            j["label_entangled"] = *p.label_entangled;
            j["agrees_with_label"] = agrees;
        }
        result.verdicts.push_back(std::move(j));
        verdicts.push_back(std::move(v));
    }
    result.rate = entanglement_rate(verdicts);
    return result;
}

// ---------------------------------------------------------------------------

void SimulationConfig::validate() const {
    std::vector<std::string> errors;
    if (!(p_valid > 0.0 && p_valid <= 1.0)) errors.push_back("p_valid must lie in (0, 1]");
    if (ks.empty()) errors.push_back("at least one k is required");
    for (int k : ks) {
        if (k < 1 || k > 3) errors.push_back("k must be 1, 2 or 3 (got " + std::to_string(k) + ")");
    }
    if (trials == 0) errors.push_back("trials must be at least 1");
    if (attempts == 0) errors.push_back("attempts must be at least 1");
    if (!(entangle_prob >= 0.0 && entangle_prob <= 1.0)) errors.push_back("entangle_prob must lie in [0, 1]");
    if (entangled_scopes != 2 && entangled_scopes != 3) errors.push_back("entangled_scopes must be 2 or 3");
    if (!errors.empty()) {
        std::string msg = "invalid simulation settings:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw ConfigError(msg);
    }
}

std::vector<ValidatorHook> mock_validator_hooks() {
    std::vector<ValidatorHook> hooks;
    for (HookKind k : {HookKind::kSyntax, HookKind::kInterface, HookKind::kSemantic}) {
        ValidatorHook h;
        h.kind = k;
        h.forbidden_substrings = {mock_defect_marker(to_string(k))};
        hooks.push_back(std::move(h));
    }
    return hooks;
}

std::string simulation_seed_program() {
    return R"(import torch
from torch import nn


class Processor(nn.Module):
    """Message-passing processor over node, edge and graph features."""

    def __init__(self, hidden: int, num_layers: int = 2):
        super().__init__()
        self.hidden = hidden
        # <SPARK:OPERATOR>
        self.msg = nn.Linear(3 * hidden, hidden)
        self.upd = nn.Linear(2 * hidden, hidden)
        self.norm = nn.LayerNorm(hidden)
        # </SPARK:OPERATOR>

    def forward(self, node, edge, graph, adj):
        x = node
        # <SPARK:ACTION>
        pair = torch.cat([x.unsqueeze(2).expand(-1, -1, x.size(1), -1), edge, graph[:, None, None, :].expand_as(edge)], dim=-1)
        msgs = torch.relu(self.msg(pair))
        msgs = msgs * adj.unsqueeze(-1)
        agg = msgs.max(dim=2).values
        x = self.norm(self.upd(torch.cat([x, agg], dim=-1)))
        # </SPARK:ACTION>
        return x


def build(hidden: int = 128) -> Processor:
    return Processor(hidden)
)";
}

SimulationResult simulate(const SimulationConfig& config, const std::filesystem::path& scratch_dir) {
    config.validate();
    SimulationResult result;
    const TagConfig tags;
    const auto parent = TaggedProgram::parse(simulation_seed_program(), tags);
    const FeasibilityChecker checker(tags, mock_validator_hooks(), scratch_dir);

    MockEditorConfig mc;
    mc.p_valid = config.p_valid;
    const MockEditor editor(mc, tags);
    for (int k : config.ks) {
        Rng rng(config.seed * 1000003ULL + static_cast<std::uint64_t>(k));
        std::uint64_t counter = 0;
        FeasibilityRow row;
        row.k = k;
        row.trials = config.trials;
        row.analytic = std::pow(config.p_valid, k);
        for (std::size_t i = 0; i < config.trials; ++i) {
            RegionSet scopes;
            if (k == 1) {
                scopes.insert(rng.bernoulli(0.5) ? Region::kOperator : Region::kAction);
            } else {
                scopes.insert(Region::kOperator);
                scopes.insert(Region::kAction);
                if (k == 3) scopes.insert(Region::kFrozen);
            }
            const std::string child = editor.apply(parent, scopes, rng, counter);
            if (checker.check(parent, child, std::nullopt, false).passed()) ++row.passed;
        }
        row.measured = static_cast<double>(row.passed) / static_cast<double>(row.trials);
        result.table.push_back(row);
    }

    const auto out_dir = config.out_dir.empty() ? scratch_dir : config.out_dir;
    for (std::uint64_t seed : config.seeds) {
        ModeGapRow row;
        row.seed = seed;
        for (RunMode mode : {RunMode::kSpark, RunMode::kFreeform}) {
            MockEditorConfig m;
            m.p_valid = config.p_valid;
            m.entangle_prob = config.entangle_prob;
            m.entangled_scopes = config.entangled_scopes;
            m.seed = seed;
            StochasticBackend backend(m, tags);
            SyntheticEvaluator evaluator{SyntheticTask{}};

            LoopConfig lc;
            lc.mode = mode;
            lc.attempt_cap = config.attempts;
            lc.budget = config.attempts + 1;
            lc.seed = seed;
            lc.trace_path = out_dir / fmt::format("sim_{}_seed{}.jsonl", to_upper_ascii(to_string(mode)), seed);
            SearchLoop loop(lc, backend, evaluator, checker, TaggedProgram::parse(simulation_seed_program(), tags));
            loop.run();
            const auto s = summarize(read_trace(lc.trace_path), std::nullopt);
            if (mode == RunMode::kSpark) {
                row.spark_valid_rate = s.valid_rate;
                row.spark_entanglement = s.entanglement_rate;
                row.spark_best = s.best_fitness;
            } else {
                row.freeform_valid_rate = s.valid_rate;
                row.freeform_entanglement = s.entanglement_rate;
                row.freeform_best = s.best_fitness;
            }
        }
        result.mode_gap.push_back(row);
    }
    return result;
}

}  // namespace spark
