#include "probshift/fixtures.hpp"

namespace probshift {

FirefighterFixture firefighter_fixture() {
    std::vector<FeatureMeta> features{
        {0, "S", FeatureKind::continuous, true, Direction::increase, 0.0, 1.0},
        {1, "A", FeatureKind::continuous, true, Direction::increase, 0.0, 1.0},
    };
    std::vector<RawNode> nodes{{0, 0, 0.7, 1, 2}, {1, 1, 0.8, 3, 4}, {2, 1, 0.6, 5, 6}};
    std::vector<Leaf> leaves{{3, 0}, {4, 1}, {5, 0}, {6, 1}};
    std::vector<Tree> trees;
    trees.emplace_back(nodes, leaves, 0);
    Forest forest(std::move(features), std::move(trees));
    NodeProbabilityTable table(0, 1, {{{0.4, 0.5}, {0.3, 0.6}, {0.4, 0.8}}});
    ProblemInstance instance{{0.65, 0.5}, 1, 1, 1, 1e-6};
    return {std::move(forest), std::move(table), std::move(instance)};
}

}  // namespace probshift
