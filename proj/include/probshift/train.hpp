#pragma once

#include <cstdint>
#include <vector>

#include "probshift/data_io.hpp"
#include "probshift/forest.hpp"

namespace probshift {

struct TrainConfig {
    int num_trees = 25;
    int max_depth = 5;
    int min_samples_split = 2;
    int features_per_split = 0;  // 0 means ceil(sqrt(d))
    bool bootstrap = true;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
};

/// Bagged CART with Gini splits at midpoints of consecutive distinct values.
/// Each tree draws from its own RNG stream keyed by (seed, tree index), so the
/// result does not depend on `threads`.
Forest train(const Dataset& data, const TrainConfig& config);

/// Mean decrease in Gini impurity, routed with `data`, averaged over trees and
/// normalized to sum 1. All zeros if no split receives any sample.
std::vector<double> impurity_importances(const Forest& forest, const Dataset& data);

double accuracy(const Forest& forest, const Dataset& data);

}  // namespace probshift
