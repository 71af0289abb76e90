#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace probshift {

enum class FeatureKind { continuous, binary };

/// Direction in which a change of the feature favours the target class.
enum class Direction { increase, decrease, to_one, to_zero, none };

std::string_view to_string(FeatureKind kind);
std::string_view to_string(Direction dir);
FeatureKind parse_feature_kind(std::string_view text);
Direction parse_direction(std::string_view text);

/// Sign of a favourable change: +1 for increase/to_one, -1 for decrease/to_zero, 0 for none.
int direction_sign(Direction dir);

struct FeatureMeta {
    int index = 0;
    std::string name;
    FeatureKind kind = FeatureKind::continuous;
    bool is_mutable = true;
    Direction beneficial = Direction::none;
    double lo = 0.0;
    double hi = 1.0;

    /// Throws ValidationError on an inconsistent combination of fields.
    void validate() const;
};

struct Interval {
    double lo = 0.0;
    double hi = 1.0;

    bool empty() const { return lo > hi; }
    bool contains(double v) const { return v >= lo && v <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Axis-aligned box, one closed interval per feature.
using Box = std::vector<Interval>;

struct ChildRef {
    bool is_leaf = true;
    int index = 0;  // into Tree::nodes() or Tree::leaves()
    friend bool operator==(const ChildRef&, const ChildRef&) = default;
};

/// Internal split node: go right iff x[feature] >= threshold.
struct Node {
    int id = 0;
    int feature = 0;
    double threshold = 0.0;
    ChildRef left;
    ChildRef right;
};

struct Leaf {
    int id = 0;
    int predicted_class = 0;
};

/// One ancestor on a root-to-leaf path and the branch taken there.
struct PathStep {
    int node = 0;  // index into Tree::nodes()
    bool right = false;
};

/// Split node as it appears in a document: children are given by document-local ids.
struct RawNode {
    int id = 0;
    int feature = 0;
    double threshold = 0.0;
    int left = 0;
    int right = 0;
};

class Tree {
public:
    /// Resolves document ids and checks the tree is a proper binary tree.
    /// Nodes and leaves share one id space.
    Tree(const std::vector<RawNode>& nodes, std::vector<Leaf> leaves, int root_id, double weight = 1.0);

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<Leaf>& leaves() const { return leaves_; }
    ChildRef root() const { return root_; }
    double weight() const { return weight_; }
    int depth() const { return depth_; }

    /// Root-to-leaf ancestors of `leaf` (index into leaves()).
    std::span<const PathStep> path(int leaf) const { return paths_[static_cast<std::size_t>(leaf)]; }

    /// Index of the leaf reached by x under (>= right, < left) routing.
    int leaf_of(std::span<const double> x) const;

    int node_index(int id) const;
    int leaf_index(int id) const;

    std::vector<RawNode> raw_nodes() const;

private:
    std::vector<Node> nodes_;
    std::vector<Leaf> leaves_;
    ChildRef root_;
    double weight_ = 1.0;
    int depth_ = 0;
    std::vector<std::vector<PathStep>> paths_;
};

class Forest {
public:
    /// Validates feature ids, thresholds (strictly inside the feature domain) and metadata.
    Forest(std::vector<FeatureMeta> features, std::vector<Tree> trees);

    std::size_t num_features() const { return features_.size(); }
    std::size_t size() const { return trees_.size(); }
    const std::vector<FeatureMeta>& features() const { return features_; }
    const std::vector<Tree>& trees() const { return trees_; }
    const Tree& tree(std::size_t r) const { return trees_.at(r); }

    /// Number of split nodes using each feature across the whole forest.
    const std::vector<int>& feature_occurrence_counts() const { return occurrences_; }

    bool equal_weights() const;
    double total_weight() const;
    std::vector<bool> mutable_mask() const;

    /// Full domain box of the feature space.
    Box domain() const;

    /// Throws InputError if x has the wrong dimension or leaves a feature domain.
    void check_point(std::span<const double> x) const;

private:
    std::vector<FeatureMeta> features_;
    std::vector<Tree> trees_;
    std::vector<int> occurrences_;
};

struct Prediction {
    int predicted_class = 0;
    std::array<double, 2> votes{0.0, 0.0};  // summed tree weights per class
    std::vector<int> tree_votes;            // class voted by each tree
};

/// Weighted majority vote; an exact tie goes to class 0.
Prediction predict(const Forest& forest, std::span<const double> x);

int leaf_of(const Tree& tree, std::span<const double> x);

/// Box of points reaching `leaf`. Right ancestors give x >= c, left ancestors x <= c - epsilon.
/// Throws DegenerateBoxError if some coordinate interval is empty.
Box leaf_box(const Forest& forest, std::size_t tree, int leaf, double epsilon);

/// Same as leaf_box but returns nullopt for an empty box.
std::optional<Box> try_leaf_box(const Forest& forest, std::size_t tree, int leaf, double epsilon);

/// Coordinate-wise intersection; nullopt if any interval is empty.
std::optional<Box> boxes_intersect(std::span<const Box> boxes);

bool box_contains(const Box& box, std::span<const double> x);

}  // namespace probshift
