#include "probshift/forest.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <unordered_map>

#include "probshift/error.hpp"

namespace probshift {

std::string_view to_string(FeatureKind kind) {
    return kind == FeatureKind::binary ? "binary" : "continuous";
}

std::string_view to_string(Direction dir) {
    switch (dir) {
        case Direction::increase: return "increase";
        case Direction::decrease: return "decrease";
        case Direction::to_one: return "to_one";
        case Direction::to_zero: return "to_zero";
        case Direction::none: return "none";
    }
    return "none";
}

FeatureKind parse_feature_kind(std::string_view text) {
    if (text == "continuous") return FeatureKind::continuous;
    if (text == "binary") return FeatureKind::binary;
    throw ParseError("unknown feature kind '" + std::string(text) + "'");
}

Direction parse_direction(std::string_view text) {
    if (text == "increase" || text == "+") return Direction::increase;
    if (text == "decrease" || text == "-") return Direction::decrease;
    if (text == "to_one") return Direction::to_one;
    if (text == "to_zero") return Direction::to_zero;
    if (text == "none" || text.empty()) return Direction::none;
    throw ParseError("unknown beneficial direction '" + std::string(text) + "'");
}

int direction_sign(Direction dir) {
    switch (dir) {
        case Direction::increase:
        case Direction::to_one: return 1;
        case Direction::decrease:
        case Direction::to_zero: return -1;
        case Direction::none: return 0;
    }
    return 0;
}

void FeatureMeta::validate() const {
    const std::string where = "feature " + std::to_string(index) + " ('" + name + "')";
    if (!(lo < hi)) throw ValidationError(where + ": domain requires lo < hi");
    if (kind == FeatureKind::binary) {
        if (lo != 0.0 || hi != 1.0) throw ValidationError(where + ": binary feature domain must be [0,1]");
        if (beneficial == Direction::increase || beneficial == Direction::decrease)
            throw ValidationError(where + ": binary feature needs to_one/to_zero direction");
    } else if (beneficial == Direction::to_one || beneficial == Direction::to_zero) {
        throw ValidationError(where + ": continuous feature needs increase/decrease direction");
    }
    if (is_mutable && beneficial == Direction::none)
        throw ValidationError(where + ": mutable feature needs a beneficial direction");
}

Tree::Tree(const std::vector<RawNode>& nodes, std::vector<Leaf> leaves, int root_id, double weight)
    : leaves_(std::move(leaves)), weight_(weight) {
    if (!(weight >= 0.0) || !std::isfinite(weight)) throw ValidationError("tree weight must be a nonnegative number");
    if (leaves_.empty()) throw ValidationError("tree has no leaves");
    if (leaves_.size() != nodes.size() + 1)
        throw ValidationError("tree with " + std::to_string(nodes.size()) + " split nodes must have " +
                              std::to_string(nodes.size() + 1) + " leaves, found " + std::to_string(leaves_.size()));

    std::unordered_map<int, ChildRef> by_id;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!by_id.emplace(nodes[i].id, ChildRef{false, static_cast<int>(i)}).second)
            throw ValidationError("duplicate id " + std::to_string(nodes[i].id));
    }
    for (std::size_t i = 0; i < leaves_.size(); ++i) {
        const Leaf& leaf = leaves_[i];
        if (leaf.predicted_class != 0 && leaf.predicted_class != 1)
            throw ValidationError("leaf " + std::to_string(leaf.id) + ": class " +
                                  std::to_string(leaf.predicted_class) + " not in {0,1}");
        if (!by_id.emplace(leaf.id, ChildRef{true, static_cast<int>(i)}).second)
            throw ValidationError("duplicate id " + std::to_string(leaf.id));
    }

    auto resolve = [&](int id, int owner) {
        auto it = by_id.find(id);
        if (it == by_id.end())
            throw ValidationError("node " + std::to_string(owner) + ": dangling child id " + std::to_string(id));
        return it->second;
    };

    nodes_.reserve(nodes.size());
    for (const RawNode& raw : nodes) {
        if (!std::isfinite(raw.threshold))
            throw ValidationError("node " + std::to_string(raw.id) + ": threshold is not finite");
        nodes_.push_back(Node{raw.id, raw.feature, raw.threshold, resolve(raw.left, raw.id), resolve(raw.right, raw.id)});
    }
    auto root_it = by_id.find(root_id);
    if (root_it == by_id.end()) throw ValidationError("root id " + std::to_string(root_id) + " does not exist");
    root_ = root_it->second;

    // Every node and leaf must be reached exactly once from the root.
    std::vector<int> node_seen(nodes_.size(), 0);
    std::vector<int> leaf_seen(leaves_.size(), 0);
    paths_.assign(leaves_.size(), {});
    std::vector<PathStep> trail;
    std::function<void(ChildRef, int)> walk = [&](ChildRef ref, int level) {
        if (ref.is_leaf) {
            if (leaf_seen[static_cast<std::size_t>(ref.index)]++ > 0)
                throw ValidationError("leaf " + std::to_string(leaves_[static_cast<std::size_t>(ref.index)].id) +
                                      " is referenced more than once");
            paths_[static_cast<std::size_t>(ref.index)] = trail;
            depth_ = std::max(depth_, level);
            return;
        }
        const auto idx = static_cast<std::size_t>(ref.index);
        if (node_seen[idx]++ > 0)
            throw ValidationError("node " + std::to_string(nodes_[idx].id) + " is referenced more than once");
        trail.push_back(PathStep{ref.index, false});
        walk(nodes_[idx].left, level + 1);
        trail.back().right = true;
        walk(nodes_[idx].right, level + 1);
        trail.pop_back();
    };
    walk(root_, 0);
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (node_seen[i] == 0) throw ValidationError("node " + std::to_string(nodes_[i].id) + " is unreachable from root");
    for (std::size_t i = 0; i < leaves_.size(); ++i)
        if (leaf_seen[i] == 0) throw ValidationError("leaf " + std::to_string(leaves_[i].id) + " is unreachable from root");
}

int Tree::leaf_of(std::span<const double> x) const {
    ChildRef ref = root_;
    while (!ref.is_leaf) {
        const Node& n = nodes_[static_cast<std::size_t>(ref.index)];
        ref = x[static_cast<std::size_t>(n.feature)] >= n.threshold ? n.right : n.left;
    }
    return ref.index;
}

int Tree::node_index(int id) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].id == id) return static_cast<int>(i);
    throw InputError("no split node with id " + std::to_string(id));
}

int Tree::leaf_index(int id) const {
    for (std::size_t i = 0; i < leaves_.size(); ++i)
        if (leaves_[i].id == id) return static_cast<int>(i);
    throw InputError("no leaf with id " + std::to_string(id));
}

std::vector<RawNode> Tree::raw_nodes() const {
    auto id_of = [&](ChildRef ref) {
        return ref.is_leaf ? leaves_[static_cast<std::size_t>(ref.index)].id : nodes_[static_cast<std::size_t>(ref.index)].id;
    };
    std::vector<RawNode> out;
    out.reserve(nodes_.size());
    for (const Node& n : nodes_) out.push_back(RawNode{n.id, n.feature, n.threshold, id_of(n.left), id_of(n.right)});
    return out;
}

Forest::Forest(std::vector<FeatureMeta> features, std::vector<Tree> trees)
    : features_(std::move(features)), trees_(std::move(trees)) {
    if (features_.empty()) throw ValidationError("forest has no features");
    if (trees_.empty()) throw ValidationError("forest has no trees");
    for (std::size_t j = 0; j < features_.size(); ++j) {
        if (features_[j].index != static_cast<int>(j))
            throw ValidationError("feature " + std::to_string(j) + " carries index " + std::to_string(features_[j].index));
        features_[j].validate();
    }
    occurrences_.assign(features_.size(), 0);
    for (std::size_t r = 0; r < trees_.size(); ++r) {
        for (const Node& n : trees_[r].nodes()) {
            const std::string where = "tree " + std::to_string(r) + " node " + std::to_string(n.id);
            if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= features_.size())
                throw ValidationError(where + ": feature " + std::to_string(n.feature) + " out of range");
            const FeatureMeta& f = features_[static_cast<std::size_t>(n.feature)];
            if (!(n.threshold > f.lo && n.threshold < f.hi))
                throw ValidationError(where + ": threshold " + std::to_string(n.threshold) +
                                      " not strictly inside the domain of feature " + std::to_string(n.feature));
            ++occurrences_[static_cast<std::size_t>(n.feature)];
        }
    }
}

bool Forest::equal_weights() const {
    return std::all_of(trees_.begin(), trees_.end(), [&](const Tree& t) { return t.weight() == trees_.front().weight(); });
}

double Forest::total_weight() const {
    double w = 0.0;
    for (const Tree& t : trees_) w += t.weight();
    return w;
}

std::vector<bool> Forest::mutable_mask() const {
    std::vector<bool> mask;
    mask.reserve(features_.size());
    for (const FeatureMeta& f : features_) mask.push_back(f.is_mutable);
    return mask;
}

Box Forest::domain() const {
    Box box;
    box.reserve(features_.size());
    for (const FeatureMeta& f : features_) box.push_back(Interval{f.lo, f.hi});
    return box;
}

void Forest::check_point(std::span<const double> x) const {
    if (x.size() != features_.size())
        throw InputError("point has dimension " + std::to_string(x.size()) + ", forest expects " +
                         std::to_string(features_.size()));
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (!(x[j] >= features_[j].lo && x[j] <= features_[j].hi))
            throw InputError("coordinate " + std::to_string(j) + " = " + std::to_string(x[j]) + " outside feature domain");
    }
}

Prediction predict(const Forest& forest, std::span<const double> x) {
    forest.check_point(x);
    Prediction p;
    p.tree_votes.reserve(forest.size());
    for (const Tree& t : forest.trees()) {
        const int cls = t.leaves()[static_cast<std::size_t>(t.leaf_of(x))].predicted_class;
        p.tree_votes.push_back(cls);
        p.votes[static_cast<std::size_t>(cls)] += t.weight();
    }
    p.predicted_class = p.votes[1] > p.votes[0] ? 1 : 0;
    return p;
}

int leaf_of(const Tree& tree, std::span<const double> x) { return tree.leaf_of(x); }

std::optional<Box> try_leaf_box(const Forest& forest, std::size_t tree, int leaf, double epsilon) {
    if (!(epsilon > 0.0)) throw ContractError("epsilon must be positive");
    const Tree& t = forest.tree(tree);
    if (leaf < 0 || static_cast<std::size_t>(leaf) >= t.leaves().size()) throw InputError("leaf index out of range");
    Box box = forest.domain();
    for (const PathStep& step : t.path(leaf)) {
        const Node& n = t.nodes()[static_cast<std::size_t>(step.node)];
        Interval& iv = box[static_cast<std::size_t>(n.feature)];
        if (step.right)
            iv.lo = std::max(iv.lo, n.threshold);
        else
            iv.hi = std::min(iv.hi, n.threshold - epsilon);
    }
    for (const Interval& iv : box)
        if (iv.empty()) return std::nullopt;
    return box;
}

Box leaf_box(const Forest& forest, std::size_t tree, int leaf, double epsilon) {
    auto box = try_leaf_box(forest, tree, leaf, epsilon);
    if (!box) {
        std::ostringstream msg;
        msg << "tree " << tree << " leaf " << forest.tree(tree).leaves()[static_cast<std::size_t>(leaf)].id
            << " has an empty box at epsilon " << epsilon;
        throw DegenerateBoxError(msg.str());
    }
    return *box;
}

std::optional<Box> boxes_intersect(std::span<const Box> boxes) {
    if (boxes.empty()) return Box{};
    Box out = boxes.front();
    for (const Box& b : boxes.subspan(1)) {
        if (b.size() != out.size()) throw InputError("boxes have different dimensions");
        for (std::size_t j = 0; j < out.size(); ++j) {
            out[j].lo = std::max(out[j].lo, b[j].lo);
            out[j].hi = std::min(out[j].hi, b[j].hi);
        }
    }
    for (const Interval& iv : out)
        if (iv.empty()) return std::nullopt;
    return out;
}

bool box_contains(const Box& box, std::span<const double> x) {
    if (box.size() != x.size()) return false;
    for (std::size_t j = 0; j < x.size(); ++j)
        if (!box[j].contains(x[j])) return false;
    return true;
}

}  // namespace probshift
