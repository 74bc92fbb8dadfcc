#include <map>
#include <set>

#include "doctest.h"
#include "spark/archive.hpp"
#include "spark/errors.hpp"
#include "test_support.hpp"

using namespace spark;

namespace {

// Distinct tagged programs: the seed with a numbered line appended to ACTION.
std::shared_ptr<const TaggedProgram> prog(int i) {
    static const std::string seed = test::seed_text();
    const std::string close = "        # </SPARK:ACTION>\n";
    std::string s = seed;
    s.insert(s.find(close), "        x = " + std::to_string(i) + "\n");
    return std::make_shared<const TaggedProgram>(TaggedProgram::parse(s, TagConfig{}));
}

ArchiveConfig single_island() {
    ArchiveConfig c;
    c.islands = 1;
    return c;
}

}  // namespace

TEST_CASE("binning goldens") {
    // Values computed with an independent Python implementation.
    const BinningSpec spec;
    struct G {
        double f;
        std::uint64_t m;
        std::size_t fb, mb;
    };
    const G goldens[] = {
        {0.46, 661190, 4, 3},  {0.0, 0, 0, 0},       {1.0, 10000000, 9, 7}, {0.5, 1000000, 5, 4},
        {0.999, 99999, 9, 0},  {0.7, 700000, 7, 3},  {0.1, 316228, 1, 2},   {0.05, 20000000, 0, 7},
        {-0.2, 150000, 0, 0},  {1.5, 5000000, 9, 6},
    };
    for (const auto& g : goldens) {
        INFO(g.f << " " << g.m);
        const auto k = bin({g.f, g.m, {}}, spec);
        REQUIRE(k);
        CHECK(k->fitness_bin == g.fb);
        CHECK(k->macs_bin == g.mb);
    }
    CHECK_FALSE(bin({std::nan(""), 1000, {}}, spec));
    CHECK_FALSE(bin({std::numeric_limits<double>::infinity(), 1000, {}}, spec));

    BinningSpec bad;
    bad.macs_min = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = {};
    bad.fitness_bins = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    ArchiveConfig cfg;
    cfg.islands = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("cell replacement rules") {
    Archive a(single_island());
    auto r = a.try_insert(0, prog(1), {0.70, 700000, {}}, 1);
    CHECK(r.action == ArchiveAction::kInserted);
    CHECK(r.key == CellKey{7, 3});

    // Equal fitness with fewer MACs replaces.
    r = a.try_insert(0, prog(2), {0.70, 660000, {}}, 2);
    CHECK(r.action == ArchiveAction::kReplaced);
    CHECK(a.island(0).at({7, 3}).digest() == prog(2)->digest());
    CHECK(a.island(0).at({7, 3}).replacements == 1);

    // Equal fitness, more MACs: rejected. Lower fitness in the same cell: rejected.
    CHECK(a.try_insert(0, prog(3), {0.70, 700000, {}}, 3).action == ArchiveAction::kRejected);
    CHECK(a.try_insert(0, prog(4), {0.79, 800000, {}}, 4).action == ArchiveAction::kReplaced);
    CHECK(a.try_insert(0, prog(5), {0.71, 610000, {}}, 5).action == ArchiveAction::kRejected);
    CHECK(a.try_insert(0, prog(6), {0.69, 660000, {}}, 6).action == ArchiveAction::kInserted);
    CHECK(a.try_insert(0, prog(7), {std::nan(""), 660000, {}}, 7).action == ArchiveAction::kInvalid);
    CHECK(a.size() == 2);
    CHECK(to_string(ArchiveAction::kReplaced) == "REPLACED");
}

TEST_CASE("replacement matches a map oracle") {
    std::mt19937_64 g(77);
    for (int round = 0; round < 50; ++round) {
        Archive a(single_island());
        std::map<CellKey, std::pair<double, std::uint64_t>> oracle;
        for (int i = 0; i < 200; ++i) {
            const double f = static_cast<double>(g() % 21) / 20.0;
            const std::uint64_t m = 100000 + g() % 5000000;
            const auto k = *bin({f, m, {}}, BinningSpec{});
            const auto r = a.try_insert(0, prog(i), {f, m, {}}, static_cast<std::uint64_t>(i));
            auto it = oracle.find(k);
            ArchiveAction expect;
            if (it == oracle.end()) {
                expect = ArchiveAction::kInserted;
                oracle[k] = {f, m};
            } else if (f > it->second.first || (f == it->second.first && m < it->second.second)) {
                expect = ArchiveAction::kReplaced;
                it->second = {f, m};
            } else {
                expect = ArchiveAction::kRejected;
            }
            REQUIRE(r.action == expect);
        }
        REQUIRE(a.size() == oracle.size());
        for (const auto& [k, v] : oracle) {
            REQUIRE(a.island(0).at(k).descriptor.fitness == v.first);
            REQUIRE(a.island(0).at(k).descriptor.macs == v.second);
        }
    }
}

TEST_CASE("caps evict the worst elite only for a better newcomer") {
    auto cfg = single_island();
    cfg.population_cap = 3;
    Archive a(cfg);
    a.try_insert(0, prog(1), {0.15, 200000, {}}, 1);
    a.try_insert(0, prog(2), {0.35, 200000, {}}, 2);
    a.try_insert(0, prog(3), {0.55, 200000, {}}, 3);
    auto r = a.try_insert(0, prog(4), {0.05, 200000, {}}, 4);
    CHECK(r.action == ArchiveAction::kRejected);
    CHECK(a.size() == 3);

    r = a.try_insert(0, prog(5), {0.75, 200000, {}}, 5);
    CHECK(r.action == ArchiveAction::kInserted);
    REQUIRE(r.evicted.size() == 1);
    CHECK(r.evicted[0] == prog(1)->digest());
    CHECK(a.size() == 3);

    // Ties on fitness: the higher-MAC elite goes first.
    a.try_insert(0, prog(6), {0.35, 9000000, {}}, 6);
    CHECK(a.size() == 3);
    CHECK_FALSE(a.island(0).count(*bin({0.35, 9000000, {}}, BinningSpec{})));

    ArchiveConfig two;
    two.islands = 2;
    two.archive_cap = 2;
    Archive b(two);
    b.try_insert(0, prog(1), {0.2, 200000, {}}, 1);
    b.try_insert(1, prog(2), {0.4, 200000, {}}, 2);
    r = b.try_insert(1, prog(3), {0.9, 200000, {}}, 3);
    CHECK(r.action == ArchiveAction::kInserted);
    CHECK(r.evicted == std::vector<std::string>{prog(1)->digest()});
    CHECK(b.island(0).empty());
    CHECK(b.size() == 2);
}

TEST_CASE("migration schedule and ring transfer") {
    ArchiveConfig cfg;
    cfg.islands = 5;
    cfg.migration_period = 5;
    Archive a(cfg);
    for (std::size_t i = 0; i < 5; ++i) {
        a.try_insert(i, prog(static_cast<int>(i)), {0.1 * static_cast<double>(i + 1), 200000, {}}, 0);
    }
    int events = 0;
    for (std::uint64_t t = 1; t <= 20; ++t) {
        const auto rep = a.migrate(t);
        CHECK(rep.happened == a.migration_due(t));
        events += rep.happened;
        if (t == 5) {
            REQUIRE(rep.offers.size() == 5);
            CHECK(rep.offers[4].from == 4);
            CHECK(rep.offers[4].to == 0);
            // Island 1 had 0.2 in another cell: island 0's best (0.1) lands there.
            CHECK(a.best_in(0)->descriptor.fitness == doctest::Approx(0.5));
        }
    }
    CHECK(events == 4);

    ArchiveConfig one = single_island();
    one.migration_period = 1;
    Archive s(one);
    s.try_insert(0, prog(1), {0.5, 200000, {}}, 0);
    CHECK_FALSE(s.migration_due(1));
    CHECK_FALSE(s.migrate(1).happened);
    CHECK(s.size() == 1);
}

TEST_CASE("best matches a linear-scan oracle") {
    std::mt19937_64 g(4242);
    for (int round = 0; round < 500; ++round) {
        ArchiveConfig cfg;
        cfg.islands = 1 + g() % 4;
        Archive a(cfg);
        const int n = 1 + static_cast<int>(g() % 30);
        for (int i = 0; i < n; ++i) {
            const double f = static_cast<double>(g() % 11) / 10.0;
            const std::uint64_t m = 100000 + (g() % 4) * 300000;
            a.try_insert(g() % cfg.islands, prog(i), {f, m, {}}, static_cast<std::uint64_t>(i));
        }
        const Elite* want = nullptr;
        for (std::size_t i = 0; i < a.island_count(); ++i) {
            for (const auto& [k, e] : a.island(i)) {
                if (!want || e.descriptor.fitness > want->descriptor.fitness ||
                    (e.descriptor.fitness == want->descriptor.fitness &&
                     (e.descriptor.macs < want->descriptor.macs ||
                      (e.descriptor.macs == want->descriptor.macs && e.digest() < want->digest())))) {
                    want = &e;
                }
            }
        }
        REQUIRE(&a.best() == want);
    }
    Archive empty(single_island());
    CHECK_THROWS_AS(empty.best(), PreconditionError);
    Rng rng(1);
    CHECK_THROWS_AS(empty.sample(0, rng), PreconditionError);
}

TEST_CASE("best fitness never decreases under insertion and migration") {
    std::mt19937_64 g(9);
    ArchiveConfig cfg;
    cfg.population_cap = 4;
    cfg.archive_cap = 12;
    cfg.migration_period = 3;
    Archive a(cfg);
    double best = -1;
    for (int t = 1; t <= 400; ++t) {
        a.try_insert(static_cast<std::size_t>(t) % 5, prog(t),
                     {static_cast<double>(g() % 1000) / 1000.0, 100000 + g() % 9000000, {}},
                     static_cast<std::uint64_t>(t));
        a.migrate(static_cast<std::uint64_t>(t));
        REQUIRE(a.best().descriptor.fitness >= best);
        best = a.best().descriptor.fitness;
        REQUIRE(a.size() <= 12);
        for (std::size_t i = 0; i < 5; ++i) REQUIRE(a.island(i).size() <= 4);
    }
}

TEST_CASE("sampling: parents, inspirations and softmax weights") {
    ArchiveConfig cfg = single_island();
    Archive a(cfg);
    for (int i = 0; i < 12; ++i) {
        a.try_insert(0, prog(i), {0.05 + 0.08 * i, 120000u + static_cast<std::uint64_t>(i % 4) * 2000000u, {}}, 0);
    }
    REQUIRE(a.size() == 12);
    Rng rng(3);
    const auto s = a.sample(0, rng);
    REQUIRE(s.inspirations.size() == 10);
    std::set<std::string> digests;
    for (const Elite* e : s.inspirations) digests.insert(e->digest());
    CHECK(digests.size() == 10);
    CHECK(s.inspirations[0] == &a.best());
    for (std::size_t i = 1; i < 5; ++i) CHECK(elite_better(*s.inspirations[i - 1], *s.inspirations[i]));

    // Softmax over fitness {1, 0}: P(best) = e / (e + 1).
    ArchiveConfig soft = single_island();
    soft.uniform_parent_prob = 0.0;
    Archive b(soft);
    b.try_insert(0, prog(1), {1.0, 200000, {}}, 0);
    b.try_insert(0, prog(2), {0.0, 200000, {}}, 0);
    int hits = 0;
    for (int i = 0; i < 4000; ++i) hits += b.sample(0, rng).parent->descriptor.fitness == 1.0;
    CHECK(std::abs(hits / 4000.0 - std::exp(1.0) / (std::exp(1.0) + 1.0)) < 0.03);

    soft.uniform_parent_prob = 1.0;
    Archive c(soft);
    c.try_insert(0, prog(1), {1.0, 200000, {}}, 0);
    c.try_insert(0, prog(2), {0.0, 200000, {}}, 0);
    hits = 0;
    for (int i = 0; i < 4000; ++i) hits += c.sample(0, rng).parent->descriptor.fitness == 1.0;
    CHECK(std::abs(hits / 4000.0 - 0.5) < 0.03);

    // Empty island falls back to the whole archive.
    ArchiveConfig two;
    two.islands = 2;
    Archive d(two);
    d.try_insert(1, prog(1), {0.3, 200000, {}}, 0);
    CHECK(d.sample(0, rng).parent->digest() == prog(1)->digest());
}

TEST_CASE("json round trip") {
    ArchiveConfig cfg;
    cfg.islands = 3;
    Archive a(cfg);
    a.try_insert(0, prog(1), {0.4, 300000, 51000}, 3);
    a.try_insert(2, prog(2), {0.6, 900000, {}}, 5);
    a.try_insert(2, prog(1), {0.2, 300000, 51000}, 7);
    a.try_insert(2, prog(3), {0.61, 100000, {}}, 8);
    const auto j = a.to_json();
    const Archive b = Archive::from_json(nlohmann::json::parse(j.dump()), cfg, TagConfig{});
    CHECK(b.to_json() == j);
    CHECK(b.size() == a.size());
    CHECK(b.best().digest() == a.best().digest());
    const auto& e = b.island(0).at(*bin({0.4, 300000, {}}, cfg.binning));
    CHECK(e.descriptor.params == std::optional<std::uint64_t>(51000));
    CHECK(e.iteration == 3);
    CHECK(e.program->text() == prog(1)->text());
}
