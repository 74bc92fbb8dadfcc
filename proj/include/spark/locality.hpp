#pragma once

// Line diff between parent and offspring, region attribution, and the
// factor-locality / entanglement verdict.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spark/program.hpp"

namespace spark {

/// One aligned difference block: parent lines [parent.begin, parent.end) were
/// replaced by child lines [child.begin, child.end). Either side may be empty.
struct Hunk {
    LineSpan parent;
    LineSpan child;
    bool operator==(const Hunk&) const = default;
};

struct EditSet {
    std::vector<std::size_t> changed_parent_lines;  // sorted
    std::vector<std::size_t> changed_child_lines;   // sorted
    std::vector<Hunk> hunks;                        // in order

    bool empty() const noexcept { return hunks.empty(); }
};

/// Minimal line diff under a longest-common-subsequence alignment. Ties are
/// broken towards the earliest alignment: when a line is equal on both sides
/// it is matched; otherwise deletions are emitted before insertions.
EditSet diff_lines(std::span<const std::string> parent, std::span<const std::string> child);
EditSet diff(const TaggedProgram& parent, const TaggedProgram& child);

/// Small set over {OPERATOR, ACTION, FROZEN}.
class RegionSet {
public:
    constexpr RegionSet() = default;

    constexpr void insert(Region r) noexcept { bits_ |= bit(r); }
    constexpr bool contains(Region r) const noexcept { return (bits_ & bit(r)) != 0; }
    bool empty() const noexcept { return bits_ == 0; }
    std::size_t size() const noexcept;
    bool subset_of(RegionSet other) const noexcept { return (bits_ & ~other.bits_) == 0; }
    RegionSet& operator|=(RegionSet other) noexcept {
        bits_ |= other.bits_;
        return *this;
    }
    bool operator==(const RegionSet&) const = default;

    static RegionSet of(std::initializer_list<Region> rs) noexcept {
        RegionSet s;
        for (Region r : rs) s.insert(r);
        return s;
    }

    /// Names in OPERATOR, ACTION, FROZEN order.
    std::vector<std::string> names() const;

private:
    static constexpr unsigned bit(Region r) noexcept { return 1u << static_cast<unsigned>(r); }
    unsigned bits_ = 0;
};

/// A region is touched when a changed parent line lies in the parent's span for
/// it, or a changed child line lies in the child's span. Tag lines are FROZEN.
RegionSet attribute(const EditSet& edit, const RegionMap& parent_map, const RegionMap& child_map);

/// Entangled: both factor regions touched, or any frozen scaffolding touched.
constexpr bool is_entangled(RegionSet touched) noexcept {
    return (touched.contains(Region::kOperator) && touched.contains(Region::kAction)) ||
           touched.contains(Region::kFrozen);
}

struct LocalityVerdict {
    /// The factor the edit was requested for; empty for free-form edits, in
    /// which case locality means "confined to a single factor region".
    std::optional<Factor> selected;
    bool is_factor_local = false;
    RegionSet touched_regions;
    bool entangled = false;
    /// The child's region tags could not be parsed.
    bool parse_failure = false;
    std::string parse_error;
};

LocalityVerdict check_factor_local(const TaggedProgram& parent, const TaggedProgram& child,
                                   std::optional<Factor> selected);

/// Parses the child first. A child whose tags are broken yields
/// {entangled, touched={FROZEN}, parse_failure}.
LocalityVerdict check_factor_local(const TaggedProgram& parent, std::string_view child_text,
                                   const TagConfig& tags, std::optional<Factor> selected);

/// Verdict for a proposal with no usable program at all (tag-free editor output).
LocalityVerdict unparseable_verdict(std::optional<Factor> selected, std::string reason);

struct EntanglementRate {
    double rate = 0.0;
    std::size_t entangled = 0;
    std::size_t total = 0;
    bool empty() const noexcept { return total == 0; }
};

EntanglementRate entanglement_rate(std::span<const LocalityVerdict> verdicts);

}  // namespace spark
