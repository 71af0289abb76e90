#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "probshift/forest.hpp"
#include "probshift/solver.hpp"

namespace probshift {

struct RankedFeature {
    int index = 0;
    std::string name;
    double score = 0.0;
    int rank = 0;  // 1-based
};

/// Mutable features only, scores non-increasing, ties broken by feature index.
struct Ranking {
    std::string method;
    std::vector<RankedFeature> features;
    int eta = 0;
    std::size_t cohort_size = 0;  // solutions that contributed
    std::size_t excluded = 0;     // infeasible or timed-out solutions

    /// Feature indices of the first `n` entries.
    std::vector<int> top(int n) const;
};

/// score_j = number of optimal solutions with e_j >= 1, or the summed units when `weighted`.
Ranking effort_ranking(std::span<const Solution> solutions, const std::vector<FeatureMeta>& features, int eta,
                       bool weighted = false);

Ranking rfr_ranking(std::span<const double> importances, const std::vector<FeatureMeta>& features, int eta);

/// Uniform eta-subset of the mutable features (score 1), followed by the rest (score 0).
Ranking rsr_ranking(const std::vector<FeatureMeta>& features, int eta, std::uint64_t seed);

std::string ranking_to_csv(const Ranking& ranking);
/// Reads `feature,score,rank` rows; names are resolved against `features`.
Ranking ranking_from_csv(const std::string& text, const std::vector<FeatureMeta>& features);
std::string ranking_to_svg(const Ranking& ranking);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace probshift
