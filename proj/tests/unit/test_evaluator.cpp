#include "doctest.h"
#include "spark/errors.hpp"
#include "spark/evaluator.hpp"
#include "test_support.hpp"

using namespace spark;
using namespace std::chrono_literals;

namespace {

std::filesystem::path write_script(const std::filesystem::path& dir, const std::string& name, const std::string& body) {
    const auto p = dir / name;
    write_file(p, "#!/bin/sh\n" + body);
    std::filesystem::permissions(p, std::filesystem::perms::owner_all);
    return p;
}

std::size_t count_str(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t p = hay.find(needle); p != std::string::npos; p = hay.find(needle, p + needle.size())) ++n;
    return n;
}

// Scores straight from text: locate tag lines, join the bodies, count.
Descriptor oracle_score(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos) nl = text.size();
        lines.push_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    auto body = [&](const std::string& tag, std::size_t& nonblank) {
        std::string out;
        bool in = false;
        for (const auto& l : lines) {
            const auto t = l.substr(l.find_first_not_of(' ') == std::string::npos ? 0 : l.find_first_not_of(' '));
            if (t == "# <SPARK:" + tag + ">") {
                in = true;
                continue;
            }
            if (t == "# </SPARK:" + tag + ">") in = false;
            if (in) {
                out += l + "\n";
                if (l.find_first_not_of(" \t") != std::string::npos) ++nonblank;
            }
        }
        return out;
    };
    std::size_t nb = 0;
    const std::string op = body("OPERATOR", nb), act = body("ACTION", nb);
    double f = 0.05 * static_cast<double>(count_str(act, "gate")) + 0.02 * static_cast<double>(count_str(op, "head"));
    if (nb > 40) f -= 0.01 * static_cast<double>(nb - 40);
    Descriptor d;
    d.fitness = std::min(1.0, std::max(0.0, f));
    d.macs = 600000 + 1000 * nb;
    d.params = 50000 + 500 * nb;
    return d;
}

}  // namespace

TEST_CASE("evaluator output contract") {
    auto o = parse_evaluator_output(R"({"status":"ok","fitness":0.4678,"descriptors":{"macs":661190,"params":51000}})",
                                    EvalStage::kFull);
    REQUIRE(o.ok());
    CHECK(o.descriptor->fitness == 0.4678);
    CHECK(o.descriptor->macs == 661190);
    CHECK(o.descriptor->params == std::optional<std::uint64_t>(51000));

    o = parse_evaluator_output(" {\"status\":\"ok\",\"fitness\":0.3}\n", EvalStage::kPrelim);
    REQUIRE(o.ok());
    CHECK(o.descriptor->fitness == 0.3);

    o = parse_evaluator_output(R"({"status":"ok","fitness":0.3,"descriptors":{"macs":6.6e5}})", EvalStage::kFull);
    REQUIRE(o.ok());
    CHECK(o.descriptor->macs == 660000);

    const char* bad[] = {
        R"({"status":"ok","fitness":0.3})",
        R"({"status":"ok","fitness":"0.3","descriptors":{"macs":1}})",
        R"({"status":"ok","fitness":0.3,"descriptors":{"macs":-5}})",
        R"({"status":"ok","fitness":0.3,"descriptors":{"macs":1.5}})",
        R"({"status":"ok","fitness":0.3,"descriptors":{"macs":1,"params":-1}})",
        R"({"status":"done","fitness":0.3,"descriptors":{"macs":1}})",
        R"({"status":"error","type":"OOM"})",
        R"([1, 2])",
        "{\"status\":\"ok\"} trailing",
        "",
    };
    for (const char* text : bad) {
        INFO(text);
        const auto r = parse_evaluator_output(text, EvalStage::kFull);
        CHECK_FALSE(r.ok());
        CHECK(r.failure == FailureType::kEvaluatorError);
    }
    CHECK(parse_evaluator_output(R"({"status":"error","type":"OOM"})", EvalStage::kFull).detail ==
          "evaluator reported error: OOM");
}

TEST_CASE("command evaluator invocation, exit status and timeouts") {
    const auto dir = test::temp_dir("eval_cmd");
    const auto prog = TaggedProgram::parse(test::seed_text(), TagConfig{});

    const auto ok = write_script(dir, "ok.sh",
                                 "echo \"$@\" > " + (dir / "args").string() + "\n"
                                 "cp \"$3\" " + (dir / "seen.py").string() + "\n"
                                 "echo '{\"status\":\"ok\",\"fitness\":0.4678,\"descriptors\":{\"macs\":661190}}'\n");
    EvaluatorSpec spec;
    spec.command = {ok.string()};
    spec.scratch_dir = dir;
    CommandEvaluator ev(spec);
    CHECK_FALSE(ev.supports_prelim());
    auto o = ev.evaluate(prog, EvalStage::kFull);
    REQUIRE(o.ok());
    CHECK(o.descriptor->fitness == 0.4678);
    CHECK(o.descriptor->macs == 661190);
    CHECK(read_file(dir / "args") == "--stage full " + (dir / "eval_candidate.py").string() + "\n");
    CHECK(read_file(dir / "seen.py") == prog.text());

    spec.command = {write_script(dir, "exit2.sh", "echo boom >&2\nexit 2\n").string()};
    o = CommandEvaluator(spec).evaluate(prog, EvalStage::kFull);
    CHECK(o.failure == FailureType::kEvaluatorError);
    CHECK(o.detail == "evaluator exited with status 2: boom\n");

    spec.command = {write_script(dir, "slow.sh", "sleep 5\n").string()};
    spec.full_timeout = 300ms;
    spec.prelim_timeout = 100ms;
    CommandEvaluator slow(spec);
    CHECK(slow.supports_prelim());
    const auto t0 = std::chrono::steady_clock::now();
    o = slow.evaluate(prog, EvalStage::kPrelim);
    CHECK(o.failure == FailureType::kTimeout);
    CHECK(o.detail == "prelim evaluation timed out");
    CHECK(std::chrono::steady_clock::now() - t0 < 2s);

    spec.command = {};
    CHECK_THROWS_AS(CommandEvaluator{spec}, ConfigError);
}

TEST_CASE("synthetic task on the seed fixture") {
    // Golden values computed from the fixture with a Python script.
    const auto prog = TaggedProgram::parse(test::seed_text(), TagConfig{});
    const auto d = synthetic_score(prog, SyntheticTask{});
    CHECK(d.fitness == doctest::Approx(0.1));
    CHECK(d.macs == 634000);
    CHECK(d.params == std::optional<std::uint64_t>(67000));

    SyntheticEvaluator ev(SyntheticTask{});
    CHECK(ev.supports_prelim());
    CHECK(ev.evaluate(prog, EvalStage::kPrelim).descriptor->fitness == d.fitness);

    SyntheticTask noisy;
    noisy.noise = 0.05;
    noisy.noise_seed = 3;
    const auto n1 = synthetic_score(prog, noisy), n2 = synthetic_score(prog, noisy);
    CHECK(n1.fitness == n2.fitness);
    CHECK(std::abs(n1.fitness - 0.1) <= 0.05);
    CHECK(n1.macs == d.macs);
}

TEST_CASE("synthetic score matches the text oracle on random programs") {
    std::mt19937_64 g(31);
    const std::vector<std::string> vocab{"x = gate(x)", "y = head(y)", "gategate = headhead", "",
                                         "   ",          "z = 1",        "# gate head",         "h = multihead(g)"};
    for (int it = 0; it < 500; ++it) {
        std::string text = "import torch\n\nclass Net:\n    def f(self, x):\n";
        auto block = [&](const std::string& tag) {
            text += "        # <SPARK:" + tag + ">\n";
            const std::size_t n = g() % 35;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& l = vocab[g() % vocab.size()];
                text += l.empty() ? "\n" : "        " + l + "\n";
            }
            text += "        # </SPARK:" + tag + ">\n";
        };
        if (g() % 2) {
            block("OPERATOR");
            block("ACTION");
        } else {
            block("ACTION");
            text += "        x = gate(x)\n";
            block("OPERATOR");
        }
        text += "        return x\n";
        const auto prog = TaggedProgram::parse(text, TagConfig{});
        const auto got = synthetic_score(prog, SyntheticTask{});
        const auto want = oracle_score(text);
        INFO(text);
        REQUIRE(got.fitness == doctest::Approx(want.fitness).epsilon(1e-12));
        REQUIRE(got.macs == want.macs);
        REQUIRE(got.params == want.params);
    }
}
