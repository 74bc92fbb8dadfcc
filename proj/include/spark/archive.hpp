#pragma once

// Islanded MAP-Elites archive over (fitness, MACs) descriptors.

#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spark/program.hpp"
#include "spark/util.hpp"

namespace spark {

struct Descriptor {
    double fitness = 0.0;
    std::uint64_t macs = 0;
    std::optional<std::uint64_t> params;
};

/// Uniform fitness bins over [fitness_min, fitness_max] crossed with
/// log-spaced MAC bins over [macs_min, macs_max].
struct BinningSpec {
    std::size_t fitness_bins = 10;
    double fitness_min = 0.0;
    double fitness_max = 1.0;
    std::size_t macs_bins = 8;
    double macs_min = 1e5;
    double macs_max = 1e7;

    /// Throws ConfigError.
    void validate() const;
};

struct CellKey {
    std::size_t fitness_bin = 0;
    std::size_t macs_bin = 0;
    auto operator<=>(const CellKey&) const = default;
};

/// Out-of-range values clamp to the edge bins. Non-finite fitness has no cell.
std::optional<CellKey> bin(const Descriptor& d, const BinningSpec& spec);

struct Elite {
    std::shared_ptr<const TaggedProgram> program;
    Descriptor descriptor;
    CellKey key;
    std::uint64_t iteration = 0;     // attempt index that produced it (0 = seed)
    std::uint64_t replacements = 0;  // times this cell's elite was replaced

    const std::string& digest() const { return program->digest(); }
};

/// Strict order used for best(): higher fitness, then lower MACs, then
/// smaller digest.
bool elite_better(const Elite& a, const Elite& b);

enum class ArchiveAction : std::uint8_t { kInserted, kReplaced, kRejected, kInvalid };
std::string_view to_string(ArchiveAction a) noexcept;

struct InsertResult {
    ArchiveAction action = ArchiveAction::kRejected;
    std::optional<CellKey> key;
    std::vector<std::string> evicted;  // digests removed to respect the caps
};

struct ArchiveConfig {
    std::size_t islands = 5;
    std::size_t population_cap = 100;  // elites per island
    std::size_t archive_cap = 100;     // elites over all islands
    std::uint64_t migration_period = 10;
    std::size_t top_k = 5;
    std::size_t diverse_k = 5;
    double uniform_parent_prob = 0.5;
    BinningSpec binning;

    void validate() const;
};

struct Migration {
    std::size_t from = 0;
    std::size_t to = 0;
    std::string digest;
    ArchiveAction action = ArchiveAction::kRejected;
};

struct MigrationReport {
    bool happened = false;
    std::vector<Migration> offers;
};

struct ArchiveSample {
    const Elite* parent = nullptr;
    std::vector<const Elite*> inspirations;  // top first, then diverse; distinct digests
};

class Archive {
public:
    explicit Archive(ArchiveConfig config);

    const ArchiveConfig& config() const noexcept { return config_; }
    std::size_t island_count() const noexcept { return islands_.size(); }
    std::size_t size() const noexcept;
    bool empty() const noexcept { return size() == 0; }
    const std::map<CellKey, Elite>& island(std::size_t i) const { return islands_.at(i); }
    std::vector<const Elite*> elites() const;

    /// Cell update: empty cell inserts, occupied cell is replaced iff the new
    /// fitness is higher, or equal with fewer MACs. Filling a new cell in a
    /// full island (or full archive) evicts the lowest-fitness, highest-MAC
    /// elite, provided the newcomer beats it; otherwise the newcomer is rejected.
    InsertResult try_insert(std::size_t island, std::shared_ptr<const TaggedProgram> program, const Descriptor& d,
                            std::uint64_t iteration);

    bool migration_due(std::uint64_t iteration) const noexcept;
    /// Ring migration of island bests (i -> i+1) when iteration is a multiple
    /// of the period. Sources are snapshotted before any offer is made.
    MigrationReport migrate(std::uint64_t iteration);

    /// Parent from `island` (whole archive if that island is empty): uniform
    /// with probability uniform_parent_prob, otherwise softmax over fitness.
    /// Inspirations: global top_k by fitness plus diverse_k by greedy max-min
    /// L1 distance between cell keys. Throws PreconditionError when empty.
    ArchiveSample sample(std::size_t island, Rng& rng) const;

    /// Throws PreconditionError when empty.
    const Elite& best() const;
    const Elite* best_in(std::size_t island) const;

    nlohmann::json to_json() const;
    static Archive from_json(const nlohmann::json& j, ArchiveConfig config, const TagConfig& tags);

private:
    std::optional<std::pair<std::size_t, CellKey>> worst_in(std::optional<std::size_t> island) const;

    ArchiveConfig config_;
    std::vector<std::map<CellKey, Elite>> islands_;
};

}  // namespace spark
