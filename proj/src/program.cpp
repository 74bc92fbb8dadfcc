#include "spark/program.hpp"

#include <algorithm>

#include "spark/util.hpp"

namespace spark {

std::string_view to_string(Factor f) noexcept {
    return f == Factor::kOperator ? "OPERATOR" : "ACTION";
}

std::string_view to_string(Region r) noexcept {
    switch (r) {
        case Region::kOperator: return "OPERATOR";
        case Region::kAction: return "ACTION";
        case Region::kFrozen: return "FROZEN";
    }
    return "FROZEN";
}

std::optional<Factor> try_parse_factor_token(std::string_view text) {
    const std::string folded = to_upper_ascii(trim(text));
    if (folded == "OPERATOR") return Factor::kOperator;
    if (folded == "ACTION") return Factor::kAction;
    return std::nullopt;
}

Factor parse_factor_token(std::string_view text) {
    if (auto f = try_parse_factor_token(text)) return *f;
    throw InvalidFactorToken(std::string(text));
}

void validate_utf8(std::string_view text) {
    const auto* s = reinterpret_cast<const unsigned char*>(text.data());
    const std::size_t n = text.size();
    std::size_t i = 0;
    auto fail = [&](const char* why) {
        throw EncodingError(i, std::string("invalid UTF-8 at byte ") + std::to_string(i) + ": " + why);
    };
    while (i < n) {
        const unsigned char c = s[i];
        if (c < 0x80) {
            ++i;
            continue;
        }
        std::size_t len;
        std::uint32_t cp;
        if ((c & 0xE0) == 0xC0) {
            len = 2;
            cp = c & 0x1F;
        } else if ((c & 0xF0) == 0xE0) {
            len = 3;
            cp = c & 0x0F;
        } else if ((c & 0xF8) == 0xF0) {
            len = 4;
            cp = c & 0x07;
        } else {
            fail("bad lead byte");
        }
        if (i + len > n) fail("truncated sequence");
        for (std::size_t k = 1; k < len; ++k) {
            if ((s[i + k] & 0xC0) != 0x80) fail("bad continuation byte");
            cp = (cp << 6) | (s[i + k] & 0x3F);
        }
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000))
            fail("overlong encoding");
        if (cp >= 0xD800 && cp <= 0xDFFF) fail("surrogate code point");
        if (cp > 0x10FFFF) fail("code point out of range");
        i += len;
    }
}

std::string NormalizedText::serialize() const {
    std::string out;
    std::size_t total = 0;
    for (const auto& l : lines) total += l.size() + 1;
    out.reserve(total);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i > 0) out.push_back('\n');
        out += lines[i];
    }
    if (final_newline && !lines.empty()) out.push_back('\n');
    return out;
}

namespace {

bool is_trailing_ws(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\f' || c == '\v';
}

void strip_trailing(std::string& line) {
    while (!line.empty() && is_trailing_ws(line.back())) line.pop_back();
}

}  // namespace

NormalizedText normalize(std::string_view text) {
    validate_utf8(text);

    // Split on LF, CRLF and lone CR. A terminator right before end of input
    // sets final_newline instead of producing an empty last line.
    NormalizedText out;
    std::string current;
    bool pending = false;  // `current` holds an unterminated line
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\r' || c == '\n') {
            if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
            strip_trailing(current);
            out.lines.push_back(std::move(current));
            current.clear();
            pending = false;
        } else {
            current.push_back(c);
            pending = true;
        }
    }
    if (pending) {
        strip_trailing(current);
        if (!current.empty()) {
            out.lines.push_back(std::move(current));
            out.final_newline = false;
            return out;
        }
        // Whitespace-only tail: it normalizes to nothing.
    }
    out.final_newline = !out.lines.empty();
    return out;
}

void TagConfig::validate() const {
    const auto markers = all();
    for (std::size_t i = 0; i < markers.size(); ++i) {
        const auto m = markers[i];
        if (trim(m).empty()) throw ConfigError("tag marker must not be empty");
        if (m.find_first_of("\r\n") != std::string_view::npos)
            throw ConfigError("tag marker must be a single line: " + std::string(m));
        for (std::size_t j = 0; j < i; ++j) {
            if (trim(markers[j]) == trim(m))
                throw ConfigError("tag markers must be distinct: " + std::string(m));
        }
    }
}

RegionMap::RegionMap(std::size_t line_count, std::size_t operator_open, std::size_t operator_close,
                     std::size_t action_open, std::size_t action_close)
    : line_count_(line_count),
      open_{operator_open, action_open},
      close_{operator_close, action_close} {
    for (std::size_t k = 0; k < 2; ++k) {
        if (!(open_[k] < close_[k] && close_[k] < line_count_))
            throw PreconditionError("RegionMap: tag lines out of order or out of range");
    }
    if (!(close_[0] < open_[1] || close_[1] < open_[0]))
        throw PreconditionError("RegionMap: regions overlap");
}

LineSpan RegionMap::span(Factor f) const noexcept {
    const auto k = static_cast<std::size_t>(f);
    return {open_[k] + 1, close_[k]};
}

std::size_t RegionMap::open_tag_line(Factor f) const noexcept {
    return open_[static_cast<std::size_t>(f)];
}

std::size_t RegionMap::close_tag_line(Factor f) const noexcept {
    return close_[static_cast<std::size_t>(f)];
}

Region RegionMap::region_of(std::size_t line) const noexcept {
    if (span(Factor::kOperator).contains(line)) return Region::kOperator;
    if (span(Factor::kAction).contains(line)) return Region::kAction;
    return Region::kFrozen;
}

std::vector<LineSpan> RegionMap::frozen_spans() const {
    std::array<LineSpan, 2> bodies{span(Factor::kOperator), span(Factor::kAction)};
    if (bodies[1].begin < bodies[0].begin) std::swap(bodies[0], bodies[1]);
    std::vector<LineSpan> out;
    std::size_t cursor = 0;
    for (const auto& b : bodies) {
        if (b.begin > cursor) out.push_back({cursor, b.begin});
        cursor = std::max(cursor, b.end);
    }
    if (cursor < line_count_) out.push_back({cursor, line_count_});
    return out;
}

std::string_view to_string(TagParseError::Kind k) noexcept {
    switch (k) {
        case TagParseError::Kind::kMissing: return "missing";
        case TagParseError::Kind::kDuplicated: return "duplicated";
        case TagParseError::Kind::kUnclosed: return "unclosed";
        case TagParseError::Kind::kMisordered: return "misordered";
        case TagParseError::Kind::kInterleaved: return "interleaved";
    }
    return "unknown";
}

namespace {

std::string describe(Factor f, TagParseError::Kind kind, std::size_t line) {
    std::string msg = std::string(to_string(f)) + " tag " + std::string(to_string(kind));
    if (line != TagParseError::kNoLine) msg += " at line " + std::to_string(line + 1);
    return msg;
}

}  // namespace

TagParseError::TagParseError(Factor factor, Kind kind, std::size_t line)
    : SparkError(describe(factor, kind, line)), factor_(factor), kind_(kind), line_(line) {}

RegionMap parse_regions(std::span<const std::string> lines, const TagConfig& tags) {
    struct Hits {
        std::vector<std::size_t> open, close;
    };
    std::array<Hits, 2> hits;
    const std::array<std::string_view, 2> opens{trim(tags.operator_tags.open), trim(tags.action_tags.open)};
    const std::array<std::string_view, 2> closes{trim(tags.operator_tags.close),
                                                 trim(tags.action_tags.close)};

    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto t = trim(lines[i]);
        for (std::size_t k = 0; k < 2; ++k) {
            if (t == opens[k]) hits[k].open.push_back(i);
            if (t == closes[k]) hits[k].close.push_back(i);
        }
    }

    using Kind = TagParseError::Kind;
    for (Factor f : kAllFactors) {
        const auto& h = hits[static_cast<std::size_t>(f)];
        if (h.open.size() > 1) throw TagParseError(f, Kind::kDuplicated, h.open[1]);
        if (h.close.size() > 1) throw TagParseError(f, Kind::kDuplicated, h.close[1]);
        if (h.open.empty()) {
            throw TagParseError(f, Kind::kMissing, h.close.empty() ? TagParseError::kNoLine : h.close[0]);
        }
        if (h.close.empty()) throw TagParseError(f, Kind::kUnclosed, h.open[0]);
        if (h.close[0] < h.open[0]) throw TagParseError(f, Kind::kMisordered, h.close[0]);
    }

    const std::size_t op_open = hits[0].open[0], op_close = hits[0].close[0];
    const std::size_t ac_open = hits[1].open[0], ac_close = hits[1].close[0];
    if (!(op_close < ac_open || ac_close < op_open)) {
        // Report against whichever region starts second.
        if (ac_open > op_open) throw TagParseError(Factor::kAction, Kind::kInterleaved, ac_open);
        throw TagParseError(Factor::kOperator, Kind::kInterleaved, op_open);
    }
    return RegionMap(lines.size(), op_open, op_close, ac_open, ac_close);
}

bool has_region_tags(std::string_view text, const TagConfig& tags) {
    std::array<bool, 4> seen{};
    const auto markers = tags.all();
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find_first_of("\r\n", pos);
        if (nl == std::string_view::npos) nl = text.size();
        const auto t = trim(text.substr(pos, nl - pos));
        for (std::size_t k = 0; k < markers.size(); ++k) {
            if (t == trim(markers[k])) seen[k] = true;
        }
        pos = nl + 1;
    }
    return std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

TaggedProgram::TaggedProgram(std::string raw, NormalizedText normalized, RegionMap regions)
    : raw_text_(std::move(raw)),
      normalized_(std::move(normalized)),
      regions_(regions),
      text_(normalized_.serialize()),
      digest_(hex_digest(text_)) {}

TaggedProgram TaggedProgram::parse(std::string_view raw_text, const TagConfig& tags) {
    NormalizedText norm = normalize(raw_text);
    RegionMap regions = parse_regions(norm.lines, tags);
    return TaggedProgram(std::string(raw_text), std::move(norm), regions);
}

std::span<const std::string> TaggedProgram::body(Factor f) const noexcept {
    const auto s = regions_.span(f);
    return lines().subspan(s.begin, s.size());
}

std::vector<std::string_view> TaggedProgram::frozen_lines() const {
    std::vector<std::string_view> out;
    for (const auto& s : regions_.frozen_spans()) {
        for (std::size_t i = s.begin; i < s.end; ++i) out.emplace_back(normalized_.lines[i]);
    }
    return out;
}

}  // namespace spark
