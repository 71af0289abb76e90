#include <doctest.h>

#include <cmath>

#include "probshift/data_io.hpp"
#include "probshift/error.hpp"
#include "probshift/fixtures.hpp"
#include "probshift/prob_model.hpp"
#include "probshift/train.hpp"

using namespace probshift;

namespace {

FeatureMeta meta(int index, FeatureKind kind, Direction dir, bool is_mutable = true) {
    FeatureMeta f;
    f.index = index;
    f.name = "f" + std::to_string(index);
    f.kind = kind;
    f.beneficial = dir;
    f.is_mutable = is_mutable;
    return f;
}

Forest stump_on(const FeatureMeta& f, double threshold) {
    Tree t({{0, 0, threshold, 1, 2}}, {{1, 0}, {2, 1}}, 0);
    return Forest({f}, {t});
}

PerturbationSpec spec_for(double sigma, double p, std::uint64_t seed, int samples = 1000) {
    PerturbationSpec s;
    s.features = {FeaturePerturbation{sigma, p, true, true}};
    s.num_samples = samples;
    s.seed = seed;
    return s;
}

// Count of seeds whose estimate lies within 3 standard errors of `expected`.
int seeds_within(const FeatureMeta& f, double threshold, double x0, int effort, double expected) {
    const Forest forest = stump_on(f, threshold);
    const double se = std::sqrt(expected * (1.0 - expected) / 1000.0);
    int ok = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const std::vector<double> x{x0};
        const auto t = estimate_node_probabilities(forest, x, spec_for(0.1, 1.0, seed), 1);
        if (std::fabs(t.right_prob(0, 0, effort) - expected) <= 3.0 * se + 1e-12) ++ok;
    }
    return ok;
}

}  // namespace

TEST_CASE("Monte-Carlo estimates match the closed forms") {
    const FeatureMeta f = meta(0, FeatureKind::continuous, Direction::increase);
    CHECK(seeds_within(f, 0.5, 0.5, 0, 0.5) >= 99);
    CHECK(seeds_within(f, 0.5 + 0.1, 0.5, 1, 1.0 / 3.0) >= 99);
    // Beyond the no-effort support the estimate is exactly zero.
    const Forest far = stump_on(f, 0.7);
    const std::vector<double> x{0.5};
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        CHECK(estimate_node_probabilities(far, x, spec_for(0.1, 1.0, seed), 1).right_prob(0, 0, 0) == 0.0);
}

TEST_CASE("continuous no-effort moves are symmetric") {
    const FeatureMeta f = meta(0, FeatureKind::continuous, Direction::increase);
    const PerturbationSpec s = spec_for(0.2, 1.0, 1);
    Rng rng = make_rng({1, 2, 3});
    int up = 0;
    const int n = 40000;
    for (int i = 0; i < n; ++i) {
        const double v = perturb_value(0.5, f, 0, s, rng);
        CHECK(std::fabs(v - 0.5) <= 0.2);
        if (v >= 0.5) ++up;
    }
    CHECK(std::fabs(up / double(n) - 0.5) <= 4.0 * std::sqrt(0.25 / n));
}

TEST_CASE("binary effort flips with max(1 - p, floor)") {
    const FeatureMeta f = meta(0, FeatureKind::binary, Direction::to_one);
    const PerturbationSpec s = spec_for(0.0, 0.9, 1);
    CHECK(s.effort_flip_probability(0, 1) == doctest::Approx(0.2));
    Rng rng = make_rng({7});
    const int n = 40000;
    int flips = 0;
    for (int i = 0; i < n; ++i) {
        if (perturb_value(0.0, f, 1, s, rng) == 1.0) ++flips;
        CHECK(perturb_value(1.0, f, 1, s, rng) == 1.0);
    }
    CHECK(std::fabs(flips / double(n) - 0.2) <= 4.0 * std::sqrt(0.16 / n));
}

TEST_CASE("effort extrapolation beyond one unit") {
    PerturbationSpec s = spec_for(0.1, 0.9, 0);
    CHECK(s.effort_multiplier(1) == doctest::Approx(1.5));
    CHECK(s.effort_multiplier(2) == doctest::Approx(2.0));
    CHECK(s.effort_flip_probability(0, 2) == doctest::Approx(0.4));
    CHECK(s.effort_flip_probability(0, 9) == doctest::Approx(1.0));
}

TEST_CASE("the maximal move is deterministic for continuous features") {
    const FeatureMeta f = meta(0, FeatureKind::continuous, Direction::decrease);
    const PerturbationSpec s = spec_for(0.1, 1.0, 0);
    Rng rng = make_rng({0});
    CHECK(max_effort_value(0.5, f, s, rng) == doctest::Approx(0.35));
    CHECK(max_effort_value(0.1, f, s, rng) == 0.0);
}

TEST_CASE("estimated tables: ranges, immutable rows, determinism") {
    const Dataset d = synth_generate(200, 6, 3);
    TrainConfig c;
    c.num_trees = 5;
    c.max_depth = 4;
    const Forest forest = train(d, c);
    const PerturbationSpec spec = PerturbationSpec::from_stats(forest.features(), feature_stats(d));
    const auto a = estimate_node_probabilities(forest, d.rows[0], spec, 2, 0);
    CHECK_NOTHROW(a.validate(forest));
    for (std::size_t r = 0; r < forest.size(); ++r)
        for (std::size_t n = 0; n < forest.tree(r).nodes().size(); ++n) {
            const auto& row = a.row(r, n);
            for (double v : row) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
            if (!forest.features()[static_cast<std::size_t>(forest.tree(r).nodes()[n].feature)].is_mutable)
                for (double v : row) CHECK(v == row[0]);
        }
    const auto b = estimate_node_probabilities(forest, d.rows[0], spec, 2, 0);
    CHECK(a.entries() == b.entries());
}

TEST_CASE("table JSON round trip and rejection") {
    const FirefighterFixture ff = firefighter_fixture();
    const auto doc = table_to_json(ff.table, ff.forest);
    const auto back = table_from_json(doc, ff.forest);
    CHECK(back.entries() == ff.table.entries());
    CHECK(table_to_json(back, ff.forest) == doc);

    auto missing = doc;
    missing["entries"].erase(1);
    CHECK_THROWS_AS(table_from_json(missing, ff.forest), Error);

    auto out_of_range = doc;
    out_of_range["entries"][0]["right"][1] = 1.2;
    CHECK_THROWS_AS(table_from_json(out_of_range, ff.forest), Error);

    const NodeProbabilityTable t2(3, 1, ff.table.entries(), std::vector<double>{0.65, 0.5});
    const auto back2 = table_from_json(table_to_json(t2, ff.forest), ff.forest);
    REQUIRE(back2.x0());
    CHECK(*back2.x0() == std::vector<double>{0.65, 0.5});
    CHECK(back2.individual() == 3);
}

TEST_CASE("spec validation") {
    const std::vector<FeatureMeta> metas{meta(0, FeatureKind::continuous, Direction::increase)};
    PerturbationSpec s = spec_for(0.0, 1.0, 0);
    CHECK_THROWS_AS(s.validate(metas), ContractError);
    s.features[0].sigma = 0.1;
    CHECK_NOTHROW(s.validate(metas));
    s.num_samples = 0;
    CHECK_THROWS_AS(s.validate(metas), ContractError);
}
