#pragma once

// Region-tagged program text: normalization, factor regions, factor tokens.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "spark/errors.hpp"

namespace spark {

/// The two editable design axes of a program.
enum class Factor : std::uint8_t { kOperator, kAction };

inline constexpr std::array<Factor, 2> kAllFactors{Factor::kOperator, Factor::kAction};

std::string_view to_string(Factor f) noexcept;
constexpr Factor other(Factor f) noexcept {
    return f == Factor::kOperator ? Factor::kAction : Factor::kOperator;
}

/// Trims surrounding whitespace and case-folds, then requires an exact match
/// with "OPERATOR" or "ACTION". No substring or fuzzy matching.
std::optional<Factor> try_parse_factor_token(std::string_view text);
/// As try_parse_factor_token, throwing InvalidFactorToken on mismatch.
Factor parse_factor_token(std::string_view text);

/// Throws EncodingError at the first malformed sequence.
void validate_utf8(std::string_view text);

/// Program text after formatting-level normalization: LF line endings and no
/// trailing whitespace on any line. Whether the text ended with a newline is
/// kept as a flag so serialization is exact.
struct NormalizedText {
    std::vector<std::string> lines;
    bool final_newline = false;

    std::string serialize() const;
    bool operator==(const NormalizedText&) const = default;
};

/// CRLF and lone CR become LF; spaces, tabs, form feeds and vertical tabs are
/// stripped from line ends. Nothing else changes.
NormalizedText normalize(std::string_view text);

/// Half-open range of 0-based line indices.
struct LineSpan {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - begin; }
    bool empty() const noexcept { return begin == end; }
    bool contains(std::size_t i) const noexcept { return i >= begin && i < end; }
    bool operator==(const LineSpan&) const = default;
};

struct TagMarkers {
    std::string open;
    std::string close;
};

/// Full-line boundary markers for both factor regions. A line is a tag line
/// only when the whole line, trimmed, equals a marker.
struct TagConfig {
    TagMarkers operator_tags{"# <SPARK:OPERATOR>", "# </SPARK:OPERATOR>"};
    TagMarkers action_tags{"# <SPARK:ACTION>", "# </SPARK:ACTION>"};

    const TagMarkers& markers(Factor f) const noexcept {
        return f == Factor::kOperator ? operator_tags : action_tags;
    }
    std::array<std::string_view, 4> all() const noexcept {
        return {operator_tags.open, operator_tags.close, action_tags.open, action_tags.close};
    }
    /// Throws ConfigError if markers are empty, multi-line, or not distinct.
    void validate() const;
};

enum class Region : std::uint8_t { kOperator, kAction, kFrozen };

std::string_view to_string(Region r) noexcept;
constexpr Region region_of(Factor f) noexcept {
    return f == Factor::kOperator ? Region::kOperator : Region::kAction;
}

/// Location of the two factor region bodies. Everything else, the tag lines
/// included, is frozen scaffolding.
class RegionMap {
public:
    RegionMap(std::size_t line_count, std::size_t operator_open, std::size_t operator_close,
              std::size_t action_open, std::size_t action_close);

    /// Body lines strictly between the open and close tags.
    LineSpan span(Factor f) const noexcept;
    std::size_t open_tag_line(Factor f) const noexcept;
    std::size_t close_tag_line(Factor f) const noexcept;
    std::size_t line_count() const noexcept { return line_count_; }

    Region region_of(std::size_t line) const noexcept;
    /// Sorted, non-empty complement of the two body spans.
    std::vector<LineSpan> frozen_spans() const;

    bool operator==(const RegionMap&) const = default;

private:
    std::size_t line_count_;
    std::array<std::size_t, 2> open_;
    std::array<std::size_t, 2> close_;
};

/// Structural problem with the region tags of a program.
class TagParseError : public SparkError {
public:
    enum class Kind { kMissing, kDuplicated, kUnclosed, kMisordered, kInterleaved };
    static constexpr std::size_t kNoLine = static_cast<std::size_t>(-1);

    TagParseError(Factor factor, Kind kind, std::size_t line);

    Factor factor() const noexcept { return factor_; }
    Kind kind() const noexcept { return kind_; }
    /// 0-based index of the offending line, or kNoLine when the tag is absent.
    std::size_t line() const noexcept { return line_; }

private:
    Factor factor_;
    Kind kind_;
    std::size_t line_;
};

std::string_view to_string(TagParseError::Kind k) noexcept;

/// Throws TagParseError.
RegionMap parse_regions(std::span<const std::string> lines, const TagConfig& tags);

/// True when each of the four markers occurs on at least one full line.
bool has_region_tags(std::string_view text, const TagConfig& tags);

/// Immutable, normalized, region-parsed program.
class TaggedProgram {
public:
    /// Normalizes and parses. Throws EncodingError or TagParseError.
    static TaggedProgram parse(std::string_view raw_text, const TagConfig& tags);

    const std::string& raw_text() const noexcept { return raw_text_; }
    const NormalizedText& normalized() const noexcept { return normalized_; }
    std::span<const std::string> lines() const noexcept { return normalized_.lines; }
    std::size_t line_count() const noexcept { return normalized_.lines.size(); }
    const RegionMap& regions() const noexcept { return regions_; }
    const std::string& digest() const noexcept { return digest_; }

    /// Normalized text, byte-exact.
    const std::string& text() const noexcept { return text_; }

    std::span<const std::string> body(Factor f) const noexcept;
    /// Lines outside both bodies, in order, tag lines included.
    std::vector<std::string_view> frozen_lines() const;

private:
    TaggedProgram(std::string raw, NormalizedText normalized, RegionMap regions);

    std::string raw_text_;
    NormalizedText normalized_;
    RegionMap regions_;
    std::string text_;
    std::string digest_;
};

}  // namespace spark
