#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "probshift/cohort_sim.hpp"
#include "probshift/data_io.hpp"
#include "probshift/error.hpp"
#include "probshift/train.hpp"

using namespace probshift;

namespace {

FeatureMeta feature(int index, bool is_mutable) {
    FeatureMeta f;
    f.index = index;
    f.name = "f" + std::to_string(index);
    f.is_mutable = is_mutable;
    f.beneficial = Direction::increase;
    return f;
}

// Class 1 iff x[split_feature] >= threshold.
Forest one_split(std::vector<FeatureMeta> features, int split_feature, double threshold) {
    Tree t({{0, split_feature, threshold, 1, 2}}, {{1, 0}, {2, 1}}, 0);
    return Forest(std::move(features), {t});
}

Dataset cohort_of(const std::vector<FeatureMeta>& features, const std::vector<std::vector<double>>& rows) {
    Dataset d;
    d.features = features;
    d.rows = rows;
    d.labels.assign(rows.size(), 0);
    for (std::size_t i = 0; i < rows.size(); ++i) d.ids.push_back(static_cast<int>(i));
    return d;
}

PerturbationSpec spec_with(std::size_t d, double sigma, bool immutable_moves, const std::vector<FeatureMeta>& fs) {
    PerturbationSpec s;
    for (std::size_t j = 0; j < d; ++j)
        s.features.push_back({sigma, 1.0, fs[j].is_mutable || immutable_moves, fs[j].is_mutable});
    return s;
}

}  // namespace

TEST_CASE("normalized percent arithmetic") {
    CHECK(std::fabs(normalized_percent(31.81, 34.53) - 92.12) <= 0.05);
    CHECK(normalized_percent(0.0, 34.53) == 0.0);
}

TEST_CASE("a forest that only reads a frozen feature reclassifies nobody") {
    const std::vector<FeatureMeta> fs{feature(0, false), feature(1, true)};
    const Forest f = one_split(fs, 0, 0.5);
    const Dataset c = cohort_of(fs, {{0.2, 0.3}, {0.4, 0.9}});
    const PerturbationSpec s = spec_with(2, 0.2, false, fs);
    SimConfig cfg;
    cfg.n_reps = 50;
    CHECK(simulate_cohort(f, c, {1}, s, cfg).percent == 0.0);
    CHECK(feasible_baseline(f, c, s, cfg).percent == 0.0);
}

TEST_CASE("a cohort one full move from the threshold always crosses under the baseline") {
    const std::vector<FeatureMeta> fs{feature(0, true)};
    const Forest f = one_split(fs, 0, 0.5);
    // 1.5 * 0.1 = 0.15 > 0.5 - 0.4.
    const Dataset c = cohort_of(fs, {{0.4}, {0.45}, {0.49}});
    SimConfig cfg;
    cfg.n_reps = 20;
    const SimResult r = feasible_baseline(f, c, spec_with(1, 0.1, true, fs), cfg);
    CHECK(r.percent == 100.0);
    for (double v : r.per_individual) CHECK(v == 100.0);
}

TEST_CASE("simulation is deterministic, order and thread invariant") {
    const Dataset all = synth_generate(300, 6, 8);
    TrainConfig tc;
    tc.num_trees = 5;
    tc.max_depth = 4;
    const Forest f = train(all, tc);
    std::vector<std::size_t> off;
    for (std::size_t i = 0; i < all.size(); ++i)
        if (predict(f, all.rows[i]).predicted_class == 0) off.push_back(i);
    const Dataset c = all.subset(off);
    const PerturbationSpec s = PerturbationSpec::from_stats(f.features(), feature_stats(all));
    SimConfig cfg;
    cfg.n_reps = 5;
    cfg.seed = 3;
    const SimResult a = simulate_cohort(f, c, {2, 3}, s, cfg);
    const SimResult b = simulate_cohort(f, c, {2, 3}, s, cfg);
    CHECK(a.percent == b.percent);
    cfg.threads = 3;
    CHECK(simulate_cohort(f, c, {2, 3}, s, cfg).per_individual == a.per_individual);
    cfg.threads = 1;

    std::vector<std::size_t> rev(c.size());
    std::iota(rev.rbegin(), rev.rend(), std::size_t{0});
    const SimResult r = simulate_cohort(f, c.subset(rev), {2, 3}, s, cfg);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(r.per_individual[c.size() - 1 - i] == a.per_individual[i]);
    CHECK(r.percent == doctest::Approx(a.percent).epsilon(1e-12));

    // An on-target row is rejected.
    std::vector<std::size_t> with_on = off;
    for (std::size_t i = 0; i < all.size(); ++i)
        if (predict(f, all.rows[i]).predicted_class == 1) {
            with_on.push_back(i);
            break;
        }
    CHECK_THROWS_AS(simulate_cohort(f, all.subset(with_on), {2}, s, cfg), ContractError);
    CHECK_THROWS_AS(simulate_cohort(f, all.subset(std::vector<std::size_t>{}), {2}, s, cfg), ContractError);
}

TEST_CASE("effort on every mutable feature beats no effort") {
    double with_all = 0.0;
    double with_none = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Dataset all = synth_generate(400, 8, seed);
        TrainConfig tc;
        tc.num_trees = 9;
        tc.max_depth = 4;
        tc.seed = seed;
        const Forest f = train(all, tc);
        std::vector<std::size_t> off;
        for (std::size_t i = 0; i < all.size(); ++i)
            if (predict(f, all.rows[i]).predicted_class == 0) off.push_back(i);
        const Dataset c = all.subset(off);
        const PerturbationSpec s = PerturbationSpec::from_stats(f.features(), feature_stats(all));
        SimConfig cfg;
        cfg.n_reps = 20;
        cfg.seed = seed;
        with_all += simulate_cohort(f, c, {2, 3, 4, 5, 6, 7}, s, cfg).percent;
        with_none += simulate_cohort(f, c, {}, s, cfg).percent;
    }
    CHECK(with_all >= with_none);
}

TEST_CASE("report averages duplicate cells and omits normalization without a baseline") {
    SimResult a{30.0, {20.0, 40.0}};
    SimResult b{50.0, {40.0, 60.0}};
    SimResult k{45.0, {50.0, 40.0}};
    const std::vector<SimCell> cells{{"rsr", 1, a}, {"rsr", 1, b}, {"k50", 1, k}, {"k50", 2, k}};
    const SimReport rep = build_report(cells, SimResult{90.0, {90.0, 90.0}}, 10, 1);
    REQUIRE(rep.find("rsr", 1));
    CHECK(rep.find("rsr", 1)->result.percent == 40.0);
    CHECK(rep.find("rsr", 1)->result.per_individual == std::vector<double>{30.0, 50.0});
    CHECK(rep.etas == std::vector<int>{2, 1});
    const std::string csv = report_to_csv(rep);
    CHECK(csv.find("table,method,eta=2,eta=1,best_eta\n") == 0);
    CHECK(csv.find("raw,k50,45,45,2;1\n") != std::string::npos);
    CHECK(csv.find("raw,rsr,,40,\n") != std::string::npos);
    CHECK(csv.find("normalized,k50,50,50,2;1\n") != std::string::npos);

    const SimReport zero = build_report(cells, SimResult{0.0, {0.0, 0.0}}, 10, 1);
    CHECK_FALSE(zero.has_normalized());
    CHECK(report_to_csv(zero).find("normalized") == std::string::npos);
    CHECK(zero.warnings.size() == 1);
}
