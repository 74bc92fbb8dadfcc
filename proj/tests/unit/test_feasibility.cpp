#include "doctest.h"
#include "spark/errors.hpp"
#include "spark/feasibility.hpp"
#include "spark/util.hpp"
#include "test_support.hpp"

using namespace spark;
using namespace std::chrono_literals;

namespace {

std::string edit_seed(std::string_view from, std::string_view to) {
    std::string s = test::seed_text();
    const auto at = s.find(from);
    REQUIRE(at != std::string::npos);
    s.replace(at, from.size(), to);
    return s;
}

const std::string kActLine = "        tri_g = self.t_g(graph_fts)\n";

ValidatorHook sh_hook(HookKind kind, std::string script, std::chrono::milliseconds timeout = 10s) {
    ValidatorHook h;
    h.kind = kind;
    h.command = {"sh", "-c", std::move(script), "hook"};
    h.timeout = timeout;
    return h;
}

}  // namespace

TEST_CASE("failure type names round-trip") {
    for (std::size_t i = 0; i < kFailureTypeCount; ++i) {
        const auto t = static_cast<FailureType>(i);
        CHECK(failure_type_from_string(to_string(t)) == t);
    }
    CHECK(to_string(FailureType::kNotFactorLocal) == "NOT_FACTOR_LOCAL");
    CHECK_FALSE(failure_type_from_string("PASS"));
    CHECK(hook_kind_from_string("Interface") == HookKind::kInterface);
    CHECK_FALSE(hook_kind_from_string("lint"));
}

TEST_CASE("stage ordering without hooks") {
    const auto dir = test::temp_dir("feas_basic");
    const FeasibilityChecker checker(TagConfig{}, {}, dir);
    const auto parent = TaggedProgram::parse(test::seed_text(), TagConfig{});

    auto r = checker.check(parent, edit_seed(kActLine, "        tri_g = self.t_g(graph_fts) + 1\n"), Factor::kAction);
    CHECK(r.passed());
    REQUIRE(r.child);

    r = checker.check(parent, edit_seed("        # </SPARK:ACTION>\n", ""), Factor::kAction);
    CHECK(r.failure == FailureType::kTagViolation);
    CHECK(r.verdict.parse_failure);
    CHECK(r.verdict.entangled);
    CHECK_FALSE(r.child);

    r = checker.check(parent, "bad \xc3\x28 utf8", Factor::kAction);
    CHECK(r.failure == FailureType::kTagViolation);

    // Edit in ACTION but OPERATOR was selected.
    const std::string act = edit_seed(kActLine, "        tri_g = self.t_g(graph_fts) * 3\n");
    r = checker.check(parent, act, Factor::kOperator);
    CHECK(r.failure == FailureType::kNotFactorLocal);
    CHECK(r.detail == "touched: ACTION");

    // Same child with locality not enforced passes but keeps the verdict.
    r = checker.check(parent, act, Factor::kOperator, false);
    CHECK(r.passed());
    CHECK_FALSE(r.verdict.is_factor_local);
}

TEST_CASE("hooks run in kind order and the first failure wins") {
    const auto dir = test::temp_dir("feas_hooks");
    const auto log = dir / "order.log";
    std::vector<ValidatorHook> hooks{
        sh_hook(HookKind::kSemantic, "echo semantic >> " + log.string() + "; exit 0"),
        sh_hook(HookKind::kSyntax, "echo syntax >> " + log.string() + "; exit 0"),
        sh_hook(HookKind::kInterface, "echo interface >> " + log.string() + "; exit 0"),
    };
    const FeasibilityChecker ok(TagConfig{}, hooks, dir);
    const auto parent = TaggedProgram::parse(test::seed_text(), TagConfig{});
    CHECK(ok.check(parent, test::seed_text(), Factor::kAction).passed());
    CHECK(read_file(log) == "syntax\ninterface\nsemantic\n");

    hooks[1] = sh_hook(HookKind::kSyntax, "echo 'bad indent' >&2; exit 1");
    const FeasibilityChecker bad(TagConfig{}, hooks, dir);
    std::filesystem::remove(log);
    const auto r = bad.check(parent, test::seed_text(), Factor::kAction);
    CHECK(r.failure == FailureType::kSyntax);
    CHECK(r.detail == "bad indent\n");
    CHECK_FALSE(std::filesystem::exists(log));
}

TEST_CASE("hook receives the normalized candidate file") {
    const auto dir = test::temp_dir("feas_file");
    const auto copy = dir / "seen.py";
    const FeasibilityChecker checker(TagConfig{}, {sh_hook(HookKind::kSyntax, "cp \"$1\" " + copy.string())}, dir);
    const auto parent = TaggedProgram::parse(test::seed_text(), TagConfig{});
    std::string crlf;
    for (char c : test::seed_text()) {
        if (c == '\n') crlf += "\r\n";
        else crlf.push_back(c);
    }
    REQUIRE(checker.check(parent, crlf, Factor::kAction).passed());
    CHECK(read_file(copy) == test::seed_text());
    CHECK(std::filesystem::exists(dir / "candidate.py"));
}

TEST_CASE("hook timeout and unexecutable commands") {
    const auto dir = test::temp_dir("feas_timeout");
    const auto parent = TaggedProgram::parse(test::seed_text(), TagConfig{});
    const FeasibilityChecker slow(TagConfig{}, {sh_hook(HookKind::kSemantic, "sleep 5", 200ms)}, dir);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = slow.check(parent, test::seed_text(), Factor::kAction);
    CHECK(r.failure == FailureType::kTimeout);
    CHECK(std::chrono::steady_clock::now() - t0 < 3s);

    ValidatorHook missing;
    missing.command = {"/nonexistent/validator"};
    const FeasibilityChecker broken(TagConfig{}, {missing}, dir);
    CHECK_THROWS_AS(broken.check(parent, test::seed_text(), Factor::kAction), ConfigError);
}

TEST_CASE("in-process forbidden substrings and required symbols") {
    const auto dir = test::temp_dir("feas_inproc");
    const auto parent = TaggedProgram::parse(test::seed_text(), TagConfig{});

    ValidatorHook forbid;
    forbid.kind = HookKind::kSemantic;
    forbid.forbidden_substrings = {"breakpoint()"};
    ValidatorHook iface;
    iface.kind = HookKind::kInterface;
    iface.required_symbols = {"class TripletMPNN", "def __call__"};
    const FeasibilityChecker checker(TagConfig{}, {forbid, iface}, dir);

    CHECK(checker.check(parent, test::seed_text(), Factor::kAction).passed());

    const auto child = edit_seed(kActLine, kActLine + std::string("        breakpoint()\n"));
    auto r = checker.check(parent, child, Factor::kAction);
    CHECK(r.failure == FailureType::kSemantic);
    CHECK(r.detail.find("forbidden text 'breakpoint()'") != std::string::npos);

    // The symbol only counts in frozen scaffolding; a copy inside a region does not.
    const std::string renamed = edit_seed("class TripletMPNN", "class TripletNet");
    const auto parent2 = TaggedProgram::parse(renamed, TagConfig{});
    r = checker.check(parent2, renamed, Factor::kAction);
    CHECK(r.failure == FailureType::kInterface);
    CHECK(r.detail == "required symbol missing from frozen scaffolding: class TripletMPNN");

    const std::string stash = edit_seed(kActLine, kActLine + std::string("        # class TripletMPNN\n"));
    const std::string both = [&] {
        std::string s = stash;
        s.replace(s.find("class TripletMPNN("), 17, "class TripletNet");
        return s;
    }();
    const auto parent3 = TaggedProgram::parse(both, TagConfig{});
    CHECK(checker.check(parent3, both, Factor::kAction).failure == FailureType::kInterface);
}

TEST_CASE("editor output classification") {
    const TagConfig tags;
    const std::string seed = test::seed_text();

    CHECK_FALSE(classify_editor_output("", tags));
    CHECK_FALSE(classify_editor_output("   \n\t", tags));
    CHECK_FALSE(classify_editor_output("I cannot do that.", tags));
    CHECK_FALSE(classify_editor_output("```python\nprint(1)\n```", tags));

    const auto bare = classify_editor_output(seed, tags);
    REQUIRE(bare);
    CHECK(*bare == seed);

    const std::string fenced = "Sure.\n```python\nold\n```\nFinal:\n```python\n" + seed + "```\nDone.";
    const auto got = classify_editor_output(fenced, tags);
    REQUIRE(got);
    CHECK(*got == seed);

    // Unterminated fence: the whole response is the candidate.
    const std::string open = "```python\n" + seed;
    REQUIRE(classify_editor_output(open, tags));
    CHECK(*classify_editor_output(open, tags) == open);

    CHECK(last_fenced_block("~~~\na\n~~~\n```\nb\n```") == std::optional<std::string>("b\n"));
    CHECK(last_fenced_block("~~~\n```\nx\n~~~") == std::optional<std::string>("```\nx\n"));
    CHECK_FALSE(last_fenced_block("no fences"));
}
