#pragma once

#include <vector>

#include "probshift/forest.hpp"
#include "probshift/prob_model.hpp"
#include "probshift/solver.hpp"

namespace probshift {

/// One-tree forest over S (feature 0) and A (feature 1), both continuous, mutable, increasing.
/// Root S >= 0.7; left child A >= 0.8, right child A >= 0.6. Leaves l0..l3 (indices 0..3) vote
/// 0, 1, 0, 1. Right-branch probabilities without / with one effort unit: root 0.4 / 0.5,
/// left child 0.3 / 0.6, right child 0.4 / 0.8.
struct FirefighterFixture {
    Forest forest;
    NodeProbabilityTable table;
    ProblemInstance instance;  // x0 = (0.65, 0.5), target 1, eta = 1, E = 1
};

FirefighterFixture firefighter_fixture();

}  // namespace probshift
