#include <doctest.h>

#include <cmath>
#include <map>

#include "probshift/error.hpp"
#include "probshift/fixtures.hpp"
#include "probshift/ranking.hpp"
#include "probshift/solver.hpp"

using namespace probshift;

namespace {

std::vector<FeatureMeta> metas(const std::vector<std::pair<std::string, bool>>& spec) {
    std::vector<FeatureMeta> out;
    for (const auto& [name, is_mutable] : spec) {
        FeatureMeta f;
        f.index = static_cast<int>(out.size());
        f.name = name;
        f.is_mutable = is_mutable;
        f.beneficial = Direction::increase;
        out.push_back(f);
    }
    return out;
}

Solution with_effort(std::vector<int> e, SolveStatus status = SolveStatus::optimal) {
    Solution s;
    s.status = status;
    s.effort.e = std::move(e);
    return s;
}

std::vector<std::string> names(const Ranking& r) {
    std::vector<std::string> out;
    for (const auto& f : r.features) out.push_back(f.name);
    return out;
}

}  // namespace

TEST_CASE("effort ranking counts features with effort") {
    const auto fs = metas({{"S", true}, {"A", true}});
    const std::vector<Solution> sols{with_effort({0, 1}), with_effort({0, 1}), with_effort({1, 0}),
                                     with_effort({0, 0}, SolveStatus::infeasible)};
    const Ranking r = effort_ranking(sols, fs, 1);
    CHECK(names(r) == std::vector<std::string>{"A", "S"});
    CHECK(r.features[0].score == 2.0);
    CHECK(r.features[1].score == 1.0);
    CHECK(r.features[0].rank == 1);
    CHECK(r.cohort_size == 3);
    CHECK(r.excluded == 1);
    CHECK(r.top(1) == std::vector<int>{1});

    const std::vector<Solution> none{with_effort({0, 0}, SolveStatus::timeout)};
    CHECK_THROWS_AS(effort_ranking(none, fs, 1), ContractError);
}

TEST_CASE("identical effort sets top the ranking, ties by index") {
    const auto fs = metas({{"a", true}, {"b", true}, {"c", true}, {"d", true}});
    const std::vector<Solution> sols(4, with_effort({0, 0, 2, 1}));
    const Ranking r = effort_ranking(sols, fs, 2);
    CHECK(names(r) == std::vector<std::string>{"c", "d", "a", "b"});
    CHECK(r.features[2].score == 0.0);
    const Ranking w = effort_ranking(sols, fs, 2, true);
    CHECK(w.features[0].score == 8.0);
}

TEST_CASE("firefighter cohort ranks A first") {
    const FirefighterFixture ff = firefighter_fixture();
    std::vector<Solution> sols;
    for (int i = 0; i < 5; ++i) sols.push_back(solve_max_path(ff.forest, ff.instance, ff.table, SolverConfig{}));
    const Ranking r = effort_ranking(sols, ff.forest.features(), 1);
    CHECK(names(r) == std::vector<std::string>{"A", "S"});
    CHECK(r.features[0].score == 5.0);
    CHECK(r.features[1].score == 0.0);
}

TEST_CASE("importance ranking skips immutables") {
    const auto fs = metas({{"Age", false}, {"FCVC", true}, {"CH2O", true}});
    const std::vector<double> imp{0.85, 0.1, 0.05};
    const Ranking r = rfr_ranking(imp, fs, 1);
    CHECK(names(r) == std::vector<std::string>{"FCVC", "CH2O"});
    CHECK(r.top(1) == std::vector<int>{1});
}

TEST_CASE("random ranking: determinism, coverage and uniformity") {
    const auto fs = metas({{"i", false}, {"a", true}, {"b", true}, {"c", true}, {"d", true}, {"e", true}});
    CHECK(names(rsr_ranking(fs, 2, 9)) == names(rsr_ranking(fs, 2, 9)));
    const Ranking all = rsr_ranking(fs, 5, 1);
    CHECK(all.features.size() == 5);
    for (const auto& f : all.features) CHECK(f.score == 1.0);
    CHECK_THROWS_AS(rsr_ranking(fs, 6, 1), ContractError);

    const int n = 10000;
    const int eta = 2;
    std::map<int, int> hits;
    for (int s = 0; s < n; ++s)
        for (int j : rsr_ranking(fs, eta, static_cast<std::uint64_t>(s)).top(eta)) ++hits[j];
    const double p = eta / 5.0;
    const double sd = std::sqrt(n * p * (1 - p));
    CHECK(hits.count(0) == 0);
    for (int j = 1; j <= 5; ++j) CHECK(std::fabs(hits[j] - n * p) <= 3.0 * sd);
}

TEST_CASE("ranking CSV round trip") {
    const auto fs = metas({{"i", false}, {"a", true}, {"b", true}});
    const std::vector<double> imp{0.5, 0.1, 0.4};
    const Ranking r = rfr_ranking(imp, fs, 1);
    const std::string csv = ranking_to_csv(r);
    CHECK(csv.rfind("feature,score,rank\n", 0) == 0);
    const Ranking back = ranking_from_csv(csv, fs);
    CHECK(names(back) == names(r));
    CHECK(back.features[0].score == r.features[0].score);
    CHECK(ranking_to_csv(back) == csv);
    CHECK_THROWS_AS(ranking_from_csv("feature,score,rank\ni,1,1\n", fs), ValidationError);
    CHECK_THROWS_AS(ranking_from_csv("feature,score,rank\nzz,1,1\n", fs), ParseError);
    CHECK(ranking_to_svg(r).find("<svg") != std::string::npos);
}

TEST_CASE("shortest round-trip decimal") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}
