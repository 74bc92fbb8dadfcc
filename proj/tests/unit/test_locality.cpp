#include <chrono>
#include <functional>
#include <map>
#include <random>

#include "doctest.h"
#include "spark/locality.hpp"
#include "locality_oracle.hpp"
#include "test_support.hpp"

using namespace spark;

namespace {

std::vector<std::string> L(std::initializer_list<const char*> xs) { return {xs.begin(), xs.end()}; }

std::size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
        if (i == a.size() || j == b.size()) return 0;
        auto key = std::make_pair(i, j);
        if (auto it = memo.find(key); it != memo.end()) return it->second;
        std::size_t r = a[i] == b[j] ? 1 + go(i + 1, j + 1) : std::max(go(i + 1, j), go(i, j + 1));
        memo[key] = r;
        return r;
    };
    return go(0, 0);
}

std::vector<std::string> apply_hunks(const std::vector<std::string>& parent, const std::vector<std::string>& child,
                                     const EditSet& e) {
    std::vector<std::string> out;
    std::size_t p = 0;
    for (const auto& h : e.hunks) {
        while (p < h.parent.begin) out.push_back(parent[p++]);
        for (std::size_t j = h.child.begin; j < h.child.end; ++j) out.push_back(child[j]);
        p = h.parent.end;
    }
    while (p < parent.size()) out.push_back(parent[p++]);
    return out;
}

}  // namespace

TEST_CASE("diff_lines basic hunks") {
    const auto a = L({"a", "b", "c", "d"});
    auto e = diff_lines(a, a);
    CHECK(e.empty());

    e = diff_lines(a, L({"a", "x", "c", "d"}));
    REQUIRE(e.hunks.size() == 1);
    CHECK(e.hunks[0] == Hunk{{1, 2}, {1, 2}});
    CHECK(e.changed_parent_lines == std::vector<std::size_t>{1});
    CHECK(e.changed_child_lines == std::vector<std::size_t>{1});

    e = diff_lines(a, L({"a", "b", "n", "c", "d"}));
    REQUIRE(e.hunks.size() == 1);
    CHECK(e.hunks[0].parent.empty());
    CHECK(e.hunks[0].child == LineSpan{2, 3});

    e = diff_lines(a, L({"b", "c"}));
    CHECK(e.hunks.size() == 2);
    CHECK(e.changed_parent_lines == std::vector<std::size_t>{0, 3});
    CHECK(e.changed_child_lines.empty());

    e = diff_lines({}, L({"x"}));
    CHECK(e.changed_child_lines == std::vector<std::size_t>{0});
}

TEST_CASE("diff_lines is a minimal edit under LCS (brute-force oracle)") {
    std::mt19937_64 g(3);
    for (int it = 0; it < 400; ++it) {
        std::vector<std::string> a, b;
        const std::size_t n = g() % 14, m = g() % 14;
        for (std::size_t i = 0; i < n; ++i) a.push_back(std::string(1, static_cast<char>('a' + g() % 4)));
        for (std::size_t i = 0; i < m; ++i) b.push_back(std::string(1, static_cast<char>('a' + g() % 4)));
        const auto e = diff_lines(a, b);
        const std::size_t lcs = lcs_oracle(a, b);
        REQUIRE(e.changed_parent_lines.size() == n - lcs);
        REQUIRE(e.changed_child_lines.size() == m - lcs);
        REQUIRE(apply_hunks(a, b, e) == b);
        for (std::size_t h = 1; h < e.hunks.size(); ++h) {
            REQUIRE(e.hunks[h - 1].parent.end < e.hunks[h].parent.begin);
        }
    }
}

TEST_CASE("attribution is two-sided and tags count as frozen") {
    const TagConfig tags;
    const auto parent = TaggedProgram::parse(test::seed_text(), tags);
    const auto& rm = parent.regions();

    // Insert a line just inside the ACTION body: child-side ACTION only.
    std::vector<std::string> lines(parent.lines().begin(), parent.lines().end());
    lines.insert(lines.begin() + static_cast<std::ptrdiff_t>(rm.open_tag_line(Factor::kAction) + 1), "        pass");
    auto child = TaggedProgram::parse(test::join(lines, true), tags);
    auto touched = attribute(diff(parent, child), parent.regions(), child.regions());
    CHECK(touched == RegionSet::of({Region::kAction}));

    // Re-indent a tag line: frozen.
    lines.assign(parent.lines().begin(), parent.lines().end());
    lines[rm.close_tag_line(Factor::kOperator)] = "    # </SPARK:OPERATOR>";
    child = TaggedProgram::parse(test::join(lines, true), tags);
    touched = attribute(diff(parent, child), parent.regions(), child.regions());
    CHECK(touched == RegionSet::of({Region::kFrozen}));
    CHECK(RegionSet::of({Region::kFrozen, Region::kOperator}).names() == std::vector<std::string>{"OPERATOR", "FROZEN"});
}

TEST_CASE("check_factor_local verdicts") {
    const TagConfig tags;
    const std::string seed = test::seed_text();
    const auto parent = TaggedProgram::parse(seed, tags);
    auto replace = [&](std::string from, std::string to) {
        auto s = seed;
        s.replace(s.find(from), from.size(), to);
        return s;
    };
    const std::string act = replace("        tri_g = self.t_g(graph_fts)\n", "        tri_g = self.t_g(graph_fts) * 2\n");

    auto v = check_factor_local(parent, act, tags, Factor::kAction);
    CHECK(v.is_factor_local);
    CHECK_FALSE(v.entangled);
    CHECK(v.touched_regions == RegionSet::of({Region::kAction}));

    v = check_factor_local(parent, act, tags, Factor::kOperator);
    CHECK_FALSE(v.is_factor_local);
    CHECK_FALSE(v.entangled);

    v = check_factor_local(parent, act, tags, std::nullopt);
    CHECK(v.is_factor_local);

    v = check_factor_local(parent, seed, tags, Factor::kOperator);
    CHECK(v.is_factor_local);
    CHECK(v.touched_regions.empty());

    // Same edit with CRLF endings and trailing blanks: identical verdict.
    std::string crlf;
    for (char c : act) {
        if (c == '\n') crlf += "  \r\n";
        else crlf.push_back(c);
    }
    v = check_factor_local(parent, crlf, tags, Factor::kAction);
    CHECK(v.is_factor_local);

    // Dropping the final newline is a scaffolding change.
    v = check_factor_local(parent, seed.substr(0, seed.size() - 1), tags, Factor::kAction);
    CHECK_FALSE(v.is_factor_local);
    CHECK(v.entangled);
    CHECK(v.touched_regions == RegionSet::of({Region::kFrozen}));

    v = check_factor_local(parent, replace("        # </SPARK:ACTION>\n", ""), tags, Factor::kAction);
    CHECK(v.parse_failure);
    CHECK(v.entangled);
    CHECK_FALSE(v.is_factor_local);

    v = check_factor_local(parent, "\xff", tags, Factor::kAction);
    CHECK(v.parse_failure);
}

TEST_CASE("verdicts agree with the byte-comparison oracle on random pairs") {
    const TagConfig tags;
    std::mt19937_64 g(12345);
    std::size_t local = 0, unparseable = 0;
    const auto start = std::chrono::steady_clock::now();
    for (int it = 0; it < 3000; ++it) {
        const auto shape = test::random_program(g);
        const std::string parent_text = test::join(shape.lines, shape.final_newline);
        const auto parent = TaggedProgram::parse(parent_text, tags);
        const std::string child = test::random_child(g, shape);
        const std::optional<Factor> sel =
            g() % 3 == 0 ? std::nullopt : std::optional<Factor>(g() % 2 ? Factor::kOperator : Factor::kAction);
        const auto v = check_factor_local(parent, child, tags, sel);
        const auto o = test::byte_oracle(parent_text, child, sel, tags);
        INFO("iteration " << it);
        REQUIRE(v.is_factor_local == o.local);
        REQUIRE(v.entangled == o.entangled);
        REQUIRE(v.touched_regions == o.touched);
        local += v.is_factor_local;
        unparseable += v.parse_failure;
    }
    CHECK(local > 300);
    CHECK(unparseable > 50);
    CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(10));
}

TEST_CASE("entanglement rate") {
    std::vector<LocalityVerdict> vs(4);
    vs[1].entangled = true;
    vs[3].entangled = true;
    const auto r = entanglement_rate(vs);
    CHECK(r.total == 4);
    CHECK(r.entangled == 2);
    CHECK(r.rate == doctest::Approx(0.5));
    CHECK(entanglement_rate({}).empty());
    CHECK(entanglement_rate({}).rate == 0.0);
}
