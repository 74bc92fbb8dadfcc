#include "spark/archive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "spark/errors.hpp"

namespace spark {

void BinningSpec::validate() const {
    if (fitness_bins == 0) throw ConfigError("binning.fitness_bins must be positive");
    if (macs_bins == 0) throw ConfigError("binning.macs_bins must be positive");
    if (!(fitness_max > fitness_min)) throw ConfigError("binning.fitness_max must exceed binning.fitness_min");
    if (!(macs_min > 0.0)) throw ConfigError("binning.macs_min must be positive");
    if (!(macs_max > macs_min)) throw ConfigError("binning.macs_max must exceed binning.macs_min");
}

namespace {

std::size_t clamp_bin(double position, std::size_t bins) {
    if (!(position > 0.0)) return 0;  // also catches -inf
    const double idx = std::floor(position * static_cast<double>(bins));
    if (idx >= static_cast<double>(bins)) return bins - 1;
    return static_cast<std::size_t>(idx);
}

}  // namespace

std::optional<CellKey> bin(const Descriptor& d, const BinningSpec& spec) {
    if (!std::isfinite(d.fitness)) return std::nullopt;
    CellKey key;
    key.fitness_bin = clamp_bin((d.fitness - spec.fitness_min) / (spec.fitness_max - spec.fitness_min),
                                spec.fitness_bins);
    if (d.macs > 0) {
        const double lo = std::log10(spec.macs_min);
        const double hi = std::log10(spec.macs_max);
        key.macs_bin = clamp_bin((std::log10(static_cast<double>(d.macs)) - lo) / (hi - lo), spec.macs_bins);
    }
    return key;
}

bool elite_better(const Elite& a, const Elite& b) {
    if (a.descriptor.fitness != b.descriptor.fitness) return a.descriptor.fitness > b.descriptor.fitness;
    if (a.descriptor.macs != b.descriptor.macs) return a.descriptor.macs < b.descriptor.macs;
    return a.digest() < b.digest();
}

std::string_view to_string(ArchiveAction a) noexcept {
    switch (a) {
        case ArchiveAction::kInserted: return "INSERTED";
        case ArchiveAction::kReplaced: return "REPLACED";
        case ArchiveAction::kRejected: return "REJECTED";
        case ArchiveAction::kInvalid: return "INVALID";
    }
    return "REJECTED";
}

void ArchiveConfig::validate() const {
    if (islands == 0) throw ConfigError("archive.islands must be at least 1");
    if (population_cap == 0) throw ConfigError("archive.population_cap must be positive");
    if (archive_cap == 0) throw ConfigError("archive.archive_cap must be positive");
    if (migration_period == 0) throw ConfigError("archive.migration_period must be positive");
    if (!(uniform_parent_prob >= 0.0 && uniform_parent_prob <= 1.0)) {
        throw ConfigError("archive.uniform_parent_prob must lie in [0, 1]");
    }
    binning.validate();
}

Archive::Archive(ArchiveConfig config) : config_(std::move(config)), islands_(config_.islands) {
    config_.validate();
}

std::size_t Archive::size() const noexcept {
    std::size_t n = 0;
    for (const auto& isl : islands_) n += isl.size();
    return n;
}

std::vector<const Elite*> Archive::elites() const {
    std::vector<const Elite*> out;
    for (const auto& isl : islands_) {
        for (const auto& [key, e] : isl) out.push_back(&e);
    }
    return out;
}

std::optional<std::pair<std::size_t, CellKey>> Archive::worst_in(std::optional<std::size_t> island) const {
    std::optional<std::pair<std::size_t, CellKey>> worst;
    const Elite* w = nullptr;
    for (std::size_t i = 0; i < islands_.size(); ++i) {
        if (island && *island != i) continue;
        for (const auto& [key, e] : islands_[i]) {
            if (!w || elite_better(*w, e)) {
                w = &e;
                worst = {i, key};
            }
        }
    }
    return worst;
}

InsertResult Archive::try_insert(std::size_t island, std::shared_ptr<const TaggedProgram> program,
                                 const Descriptor& d, std::uint64_t iteration) {
    if (island >= islands_.size()) throw PreconditionError("island index out of range");
    if (!program) throw PreconditionError("try_insert needs a program");
    InsertResult result;
    result.key = bin(d, config_.binning);
    if (!result.key) {
        result.action = ArchiveAction::kInvalid;
        return result;
    }
    auto& cells = islands_[island];
    Elite incoming{std::move(program), d, *result.key, iteration, 0};

    if (auto it = cells.find(*result.key); it != cells.end()) {
        const Descriptor& cur = it->second.descriptor;
        const bool improved = d.fitness > cur.fitness || (d.fitness == cur.fitness && d.macs < cur.macs);
        if (!improved) {
            result.action = ArchiveAction::kRejected;
            return result;
        }
        incoming.replacements = it->second.replacements + 1;
        it->second = std::move(incoming);
        result.action = ArchiveAction::kReplaced;
        return result;
    }

    // New cell: make room if a cap is reached, but only by evicting something worse.
    std::vector<std::pair<std::size_t, CellKey>> evict;
    if (cells.size() >= config_.population_cap) {
        const auto w = worst_in(island);
        if (!w || !elite_better(incoming, islands_[w->first].at(w->second))) {
            result.action = ArchiveAction::kRejected;
            return result;
        }
        evict.push_back(*w);
    }
    if (size() - evict.size() >= config_.archive_cap) {
        const Elite* w = nullptr;
        std::pair<std::size_t, CellKey> where;
        for (std::size_t i = 0; i < islands_.size(); ++i) {
            for (const auto& [key, e] : islands_[i]) {
                if (!evict.empty() && evict.front() == std::pair{i, key}) continue;
                if (!w || elite_better(*w, e)) {
                    w = &e;
                    where = {i, key};
                }
            }
        }
        if (!w || !elite_better(incoming, *w)) {
            result.action = ArchiveAction::kRejected;
            return result;
        }
        evict.push_back(where);
    }
    for (const auto& [i, key] : evict) {
        auto node = islands_[i].extract(key);
        result.evicted.push_back(node.mapped().digest());
    }
    cells.emplace(*result.key, std::move(incoming));
    result.action = ArchiveAction::kInserted;
    return result;
}

bool Archive::migration_due(std::uint64_t iteration) const noexcept {
    return islands_.size() > 1 && iteration >= 1 && iteration % config_.migration_period == 0;
}

const Elite* Archive::best_in(std::size_t island) const {
    const Elite* b = nullptr;
    for (const auto& [key, e] : islands_.at(island)) {
        if (!b || elite_better(e, *b)) b = &e;
    }
    return b;
}

MigrationReport Archive::migrate(std::uint64_t iteration) {
    MigrationReport report;
    if (!migration_due(iteration)) return report;
    report.happened = true;

    std::vector<std::optional<Elite>> sources(islands_.size());
    for (std::size_t i = 0; i < islands_.size(); ++i) {
        if (const Elite* b = best_in(i)) sources[i] = *b;
    }
    for (std::size_t i = 0; i < islands_.size(); ++i) {
        if (!sources[i]) continue;
        const std::size_t to = (i + 1) % islands_.size();
        const auto r = try_insert(to, sources[i]->program, sources[i]->descriptor, sources[i]->iteration);
        report.offers.push_back({i, to, sources[i]->digest(), r.action});
    }
    return report;
}

const Elite& Archive::best() const {
    const Elite* b = nullptr;
    for (std::size_t i = 0; i < islands_.size(); ++i) {
        const Elite* c = best_in(i);
        if (c && (!b || elite_better(*c, *b))) b = c;
    }
    if (!b) throw PreconditionError("best() on an empty archive");
    return *b;
}

ArchiveSample Archive::sample(std::size_t island, Rng& rng) const {
    if (empty()) throw PreconditionError("cannot sample from an empty archive");
    ArchiveSample s;

    std::vector<const Elite*> pool;
    if (island < islands_.size()) {
        for (const auto& [key, e] : islands_[island]) pool.push_back(&e);
    }
    if (pool.empty()) pool = elites();

    if (rng.bernoulli(config_.uniform_parent_prob)) {
        s.parent = pool[rng.index(pool.size())];
    } else {
        double top = -std::numeric_limits<double>::infinity();
        for (const Elite* e : pool) top = std::max(top, e->descriptor.fitness);
        std::vector<double> w;
        double total = 0.0;
        for (const Elite* e : pool) {
            w.push_back(std::exp(e->descriptor.fitness - top));
            total += w.back();
        }
        double u = rng.uniform01() * total;
        s.parent = pool.back();
        for (std::size_t i = 0; i < pool.size(); ++i) {
            if (u < w[i]) {
                s.parent = pool[i];
                break;
            }
            u -= w[i];
        }
    }

    // Distinct programs, best representative first.
    std::vector<const Elite*> all = elites();
    std::sort(all.begin(), all.end(), [](const Elite* a, const Elite* b) { return elite_better(*a, *b); });
    std::vector<const Elite*> distinct;
    std::set<std::string> seen;
    for (const Elite* e : all) {
        if (seen.insert(e->digest()).second) distinct.push_back(e);
    }

    const std::size_t n_top = std::min(config_.top_k, distinct.size());
    s.inspirations.assign(distinct.begin(), distinct.begin() + static_cast<std::ptrdiff_t>(n_top));
    std::vector<const Elite*> rest(distinct.begin() + static_cast<std::ptrdiff_t>(n_top), distinct.end());

    auto l1 = [](const CellKey& a, const CellKey& b) {
        auto d = [](std::size_t x, std::size_t y) { return x > y ? x - y : y - x; };
        return d(a.fitness_bin, b.fitness_bin) + d(a.macs_bin, b.macs_bin);
    };
    for (std::size_t round = 0; round < config_.diverse_k && !rest.empty(); ++round) {
        std::size_t pick = 0;
        std::size_t pick_score = 0;
        for (std::size_t c = 0; c < rest.size(); ++c) {
            std::size_t m = std::numeric_limits<std::size_t>::max();
            for (const Elite* chosen : s.inspirations) m = std::min(m, l1(rest[c]->key, chosen->key));
            if (c == 0 || m > pick_score) {
                pick = c;
                pick_score = m;
            }
        }
        s.inspirations.push_back(rest[pick]);
        rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    return s;
}

nlohmann::json Archive::to_json() const {
    nlohmann::json programs = nlohmann::json::object();
    nlohmann::json islands = nlohmann::json::array();
    for (const auto& isl : islands_) {
        nlohmann::json cells = nlohmann::json::array();
        for (const auto& [key, e] : isl) {
            nlohmann::json c = {
                {"fitness_bin", key.fitness_bin},
                {"macs_bin", key.macs_bin},
                {"digest", e.digest()},
                {"fitness", e.descriptor.fitness},
                {"macs", e.descriptor.macs},
                {"iteration", e.iteration},
                {"replacements", e.replacements},
            };
            if (e.descriptor.params) c["params"] = *e.descriptor.params;
            cells.push_back(std::move(c));
            programs[e.digest()] = e.program->raw_text();
        }
        islands.push_back(std::move(cells));
    }
    return {{"islands", std::move(islands)}, {"programs", std::move(programs)}};
}

Archive Archive::from_json(const nlohmann::json& j, ArchiveConfig config, const TagConfig& tags) {
    Archive a(std::move(config));
    try {
        std::map<std::string, std::shared_ptr<const TaggedProgram>> programs;
        for (const auto& [digest, text] : j.at("programs").items()) {
            auto p = std::make_shared<const TaggedProgram>(TaggedProgram::parse(text.get<std::string>(), tags));
            if (p->digest() != digest) throw TraceError("archive snapshot: digest mismatch for " + digest);
            programs.emplace(digest, std::move(p));
        }
        const auto& islands = j.at("islands");
        if (islands.size() != a.islands_.size()) throw TraceError("archive snapshot: island count differs from config");
        for (std::size_t i = 0; i < islands.size(); ++i) {
            for (const auto& c : islands[i]) {
                Elite e;
                e.program = programs.at(c.at("digest").get<std::string>());
                e.descriptor.fitness = c.at("fitness").get<double>();
                e.descriptor.macs = c.at("macs").get<std::uint64_t>();
                if (c.contains("params")) e.descriptor.params = c["params"].get<std::uint64_t>();
                e.key = {c.at("fitness_bin").get<std::size_t>(), c.at("macs_bin").get<std::size_t>()};
                e.iteration = c.at("iteration").get<std::uint64_t>();
                e.replacements = c.at("replacements").get<std::uint64_t>();
                a.islands_[i].emplace(e.key, std::move(e));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw TraceError(std::string("archive snapshot is malformed: ") + e.what());
    } catch (const std::out_of_range&) {
        throw TraceError("archive snapshot references an unknown program");
    }
    return a;
}

}  // namespace spark
