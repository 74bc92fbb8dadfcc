#include "spark/locality.hpp"

#include <algorithm>
#include <cstdint>
#include <unordered_map>

namespace spark {

namespace {

/// Maps each distinct line to a small integer so the DP compares ints.
struct Interned {
    std::vector<std::uint32_t> parent;
    std::vector<std::uint32_t> child;
};

Interned intern(std::span<const std::string> parent, std::span<const std::string> child) {
    std::unordered_map<std::string_view, std::uint32_t> ids;
    ids.reserve(parent.size() + child.size());
    auto id_of = [&](std::string_view s) {
        auto [it, _] = ids.try_emplace(s, static_cast<std::uint32_t>(ids.size()));
        return it->second;
    };
    Interned out;
    out.parent.reserve(parent.size());
    out.child.reserve(child.size());
    for (const auto& l : parent) out.parent.push_back(id_of(l));
    for (const auto& l : child) out.child.push_back(id_of(l));
    return out;
}

enum class Op : std::uint8_t { kMatch, kDelete, kInsert };

}  // namespace

EditSet diff_lines(std::span<const std::string> parent, std::span<const std::string> child) {
    const Interned ids = intern(parent, child);
    const std::size_t n = ids.parent.size(), m = ids.child.size();

    // Common prefix and suffix are matched outright; the DP covers the core.
    std::size_t pre = 0;
    while (pre < n && pre < m && ids.parent[pre] == ids.child[pre]) ++pre;
    std::size_t suf = 0;
    while (suf < n - pre && suf < m - pre && ids.parent[n - 1 - suf] == ids.child[m - 1 - suf]) ++suf;

    const std::size_t cn = n - pre - suf, cm = m - pre - suf;
    const std::uint32_t* a = ids.parent.data() + pre;
    const std::uint32_t* b = ids.child.data() + pre;

    // lcs[i][j] = LCS length of a[i..cn) and b[j..cm).
    const std::size_t w = cm + 1;
    std::vector<std::uint32_t> lcs((cn + 1) * w, 0);
    for (std::size_t i = cn; i-- > 0;) {
        for (std::size_t j = cm; j-- > 0;) {
            lcs[i * w + j] = a[i] == b[j] ? lcs[(i + 1) * w + j + 1] + 1
                                          : std::max(lcs[(i + 1) * w + j], lcs[i * w + j + 1]);
        }
    }

    std::vector<Op> ops;
    ops.reserve(cn + cm);
    std::size_t i = 0, j = 0;
    while (i < cn || j < cm) {
        if (i < cn && j < cm && a[i] == b[j]) {
            ops.push_back(Op::kMatch);
            ++i;
            ++j;
        } else if (j == cm || (i < cn && lcs[(i + 1) * w + j] >= lcs[i * w + j + 1])) {
            ops.push_back(Op::kDelete);
            ++i;
        } else {
            ops.push_back(Op::kInsert);
            ++j;
        }
    }

    EditSet out;
    std::size_t pi = pre, ci = pre;
    std::size_t k = 0;
    while (k < ops.size()) {
        if (ops[k] == Op::kMatch) {
            ++pi;
            ++ci;
            ++k;
            continue;
        }
        Hunk h{{pi, pi}, {ci, ci}};
        while (k < ops.size() && ops[k] != Op::kMatch) {
            if (ops[k] == Op::kDelete) {
                out.changed_parent_lines.push_back(pi++);
            } else {
                out.changed_child_lines.push_back(ci++);
            }
            ++k;
        }
        h.parent.end = pi;
        h.child.end = ci;
        out.hunks.push_back(h);
    }
    return out;
}

EditSet diff(const TaggedProgram& parent, const TaggedProgram& child) {
    return diff_lines(parent.lines(), child.lines());
}

std::size_t RegionSet::size() const noexcept {
    return static_cast<std::size_t>(__builtin_popcount(bits_));
}

std::vector<std::string> RegionSet::names() const {
    std::vector<std::string> out;
    for (Region r : {Region::kOperator, Region::kAction, Region::kFrozen}) {
        if (contains(r)) out.emplace_back(to_string(r));
    }
    return out;
}

RegionSet attribute(const EditSet& edit, const RegionMap& parent_map, const RegionMap& child_map) {
    RegionSet touched;
    for (std::size_t line : edit.changed_parent_lines) touched.insert(parent_map.region_of(line));
    for (std::size_t line : edit.changed_child_lines) touched.insert(child_map.region_of(line));
    return touched;
}

namespace {

bool same_lines(std::span<const std::string> a, std::span<const std::string> b) {
    return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace

LocalityVerdict check_factor_local(const TaggedProgram& parent, const TaggedProgram& child,
                                   std::optional<Factor> selected) {
    LocalityVerdict v;
    v.selected = selected;
    v.touched_regions = attribute(diff(parent, child), parent.regions(), child.regions());

    // Byte-level comparison of everything that must be preserved. This also
    // catches differences a line diff cannot see, such as the final newline.
    const bool frozen_same = parent.frozen_lines() == child.frozen_lines() &&
                             parent.normalized().final_newline == child.normalized().final_newline;
    if (!frozen_same) v.touched_regions.insert(Region::kFrozen);
    for (Factor f : kAllFactors) {
        if (!same_lines(parent.body(f), child.body(f))) v.touched_regions.insert(region_of(f));
    }

    if (selected) {
        v.is_factor_local = v.touched_regions.subset_of(RegionSet::of({region_of(*selected)})) &&
                            frozen_same && same_lines(parent.body(other(*selected)), child.body(other(*selected)));
    } else {
        v.is_factor_local = v.touched_regions.size() <= 1 && !v.touched_regions.contains(Region::kFrozen);
    }
    v.entangled = is_entangled(v.touched_regions);
    return v;
}

LocalityVerdict unparseable_verdict(std::optional<Factor> selected, std::string reason) {
    LocalityVerdict v;
    v.selected = selected;
    v.touched_regions = RegionSet::of({Region::kFrozen});
    v.entangled = true;
    v.parse_failure = true;
    v.parse_error = std::move(reason);
    return v;
}

LocalityVerdict check_factor_local(const TaggedProgram& parent, std::string_view child_text,
                                   const TagConfig& tags, std::optional<Factor> selected) {
    try {
        return check_factor_local(parent, TaggedProgram::parse(child_text, tags), selected);
    } catch (const TagParseError& e) {
        return unparseable_verdict(selected, e.what());
    } catch (const EncodingError& e) {
        return unparseable_verdict(selected, e.what());
    }
}

EntanglementRate entanglement_rate(std::span<const LocalityVerdict> verdicts) {
    EntanglementRate r;
    r.total = verdicts.size();
    r.entangled = static_cast<std::size_t>(
        std::count_if(verdicts.begin(), verdicts.end(), [](const LocalityVerdict& v) { return v.entangled; }));
    r.rate = r.total == 0 ? 0.0 : static_cast<double>(r.entangled) / static_cast<double>(r.total);
    return r;
}

}  // namespace spark
