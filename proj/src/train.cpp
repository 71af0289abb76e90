#include "probshift/train.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <thread>

#include "probshift/error.hpp"

namespace probshift {

void TrainConfig::validate() const {
    if (num_trees < 1) throw ContractError("num_trees must be >= 1");
    if (max_depth < 1) throw ContractError("max_depth must be >= 1");
    if (min_samples_split < 2) throw ContractError("min_samples_split must be >= 2");
    if (features_per_split < 0) throw ContractError("features_per_split must be >= 0");
}

namespace {

double gini(double n0, double n1) {
    const double n = n0 + n1;
    if (n <= 0.0) return 0.0;
    const double p0 = n0 / n;
    const double p1 = n1 / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

std::mt19937_64 tree_rng(std::uint64_t seed, std::uint64_t tree_index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(tree_index), 0x7EEu};
    return std::mt19937_64(seq);
}

struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double impurity = 0.0;  // weighted child impurity
};

class TreeGrower {
public:
    TreeGrower(const Dataset& data, const TrainConfig& config, std::uint64_t tree_index)
        : data_(data), config_(config),
          rng_(tree_rng(config.seed, tree_index)) {
        const auto d = static_cast<int>(data.num_features());
        k_ = config.features_per_split > 0 ? std::min(config.features_per_split, d)
                                           : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(d))));
    }

    Tree grow() {
        std::vector<std::size_t> samples(data_.size());
        if (config_.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, data_.size() - 1);
            for (auto& s : samples) s = pick(rng_);
        } else {
            std::iota(samples.begin(), samples.end(), std::size_t{0});
        }
        const int root = build(samples, 0);
        return Tree(nodes_, leaves_, root, 1.0);
    }

private:
    int build(std::vector<std::size_t>& samples, int depth) {
        const int id = next_id_++;
        double n1 = 0.0;
        for (std::size_t s : samples) n1 += data_.labels[s];
        const double n0 = static_cast<double>(samples.size()) - n1;
        const int majority = n1 > n0 ? 1 : 0;

        const bool stop = depth >= config_.max_depth || n0 == 0.0 || n1 == 0.0 ||
                          static_cast<int>(samples.size()) < config_.min_samples_split;
        if (!stop) {
            const SplitChoice best = find_split(samples, n0, n1);
            if (best.feature >= 0) {
                std::vector<std::size_t> left;
                std::vector<std::size_t> right;
                for (std::size_t s : samples)
                    (data_.rows[s][static_cast<std::size_t>(best.feature)] >= best.threshold ? right : left).push_back(s);
                const std::size_t slot = nodes_.size();
                nodes_.push_back(RawNode{id, best.feature, best.threshold, 0, 0});
                const int l = build(left, depth + 1);
                const int r = build(right, depth + 1);
                nodes_[slot].left = l;
                nodes_[slot].right = r;
                return id;
            }
        }
        leaves_.push_back(Leaf{id, majority});
        return id;
    }

    SplitChoice find_split(const std::vector<std::size_t>& samples, double n0, double n1) {
        const auto d = static_cast<int>(data_.num_features());
        std::vector<int> order(static_cast<std::size_t>(d));
        std::iota(order.begin(), order.end(), 0);
        // Partial Fisher-Yates: the first k entries are the candidate subset. If none of them
        // admits a split, keep drawing from the remaining features.
        SplitChoice best;
        for (int i = 0; i < d; ++i) {
            std::uniform_int_distribution<int> pick(i, d - 1);
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng_))]);
            evaluate_feature(samples, order[static_cast<std::size_t>(i)], n0, n1, best);
            if (i + 1 >= k_ && best.feature >= 0) break;
        }
        return best;
    }

    void evaluate_feature(const std::vector<std::size_t>& samples, int feature, double n0, double n1,
                          SplitChoice& best) const {
        const auto j = static_cast<std::size_t>(feature);
        std::vector<std::pair<double, int>> vals;
        vals.reserve(samples.size());
        for (std::size_t s : samples) vals.emplace_back(data_.rows[s][j], data_.labels[s]);
        std::sort(vals.begin(), vals.end());
        const double n = n0 + n1;
        double l0 = 0.0;
        double l1 = 0.0;
        for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
            (vals[i].second == 1 ? l1 : l0) += 1.0;
            if (vals[i].first == vals[i + 1].first) continue;
            const double nl = l0 + l1;
            const double nr = n - nl;
            const double impurity = (nl * gini(l0, l1) + nr * gini(n0 - l0, n1 - l1)) / n;
            if (best.feature < 0 || impurity < best.impurity) {
                best.feature = feature;
                best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
                best.impurity = impurity;
            }
        }
    }

    const Dataset& data_;
    const TrainConfig& config_;
    std::mt19937_64 rng_;
    int k_ = 1;
    int next_id_ = 0;
    std::vector<RawNode> nodes_;
    std::vector<Leaf> leaves_;
};

}  // namespace

Forest train(const Dataset& data, const TrainConfig& config) {
    config.validate();
    data.validate();
    if (data.size() == 0) throw TrainingError("cannot train on an empty dataset");
    const auto ones = std::count(data.labels.begin(), data.labels.end(), 1);
    if (ones == 0 || ones == static_cast<long>(data.size()))
        throw TrainingError("training data contains a single class");

    const auto n_trees = static_cast<std::size_t>(config.num_trees);
    std::vector<std::optional<Tree>> trees(n_trees);
    auto work = [&](std::size_t first, std::size_t stride) {
        for (std::size_t t = first; t < n_trees; t += stride) trees[t] = TreeGrower(data, config, t).grow();
    };
    const auto workers = static_cast<std::size_t>(std::clamp(config.threads, 1, config.num_trees));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    }
    std::vector<Tree> out;
    out.reserve(n_trees);
    for (auto& t : trees) out.push_back(std::move(*t));
    return Forest(data.features, std::move(out));
}

std::vector<double> impurity_importances(const Forest& forest, const Dataset& data) {
    const std::size_t d = forest.num_features();
    if (data.num_features() != d) throw InputError("dataset and forest disagree on the number of features");
    std::vector<double> total(d, 0.0);
    const double n_total = static_cast<double>(data.size());
    if (data.size() == 0) return total;

    for (const Tree& tree : forest.trees()) {
        std::vector<double> tree_imp(d, 0.0);
        // class counts reaching each split node and each of its children
        std::vector<std::array<double, 2>> at(tree.nodes().size(), {0.0, 0.0});
        std::vector<std::array<double, 2>> left(tree.nodes().size(), {0.0, 0.0});
        std::vector<std::array<double, 2>> right(tree.nodes().size(), {0.0, 0.0});
        for (std::size_t i = 0; i < data.size(); ++i) {
            ChildRef ref = tree.root();
            const auto& x = data.rows[i];
            const auto y = static_cast<std::size_t>(data.labels[i]);
            while (!ref.is_leaf) {
                const auto k = static_cast<std::size_t>(ref.index);
                const Node& n = tree.nodes()[k];
                at[k][y] += 1.0;
                if (x[static_cast<std::size_t>(n.feature)] >= n.threshold) {
                    right[k][y] += 1.0;
                    ref = n.right;
                } else {
                    left[k][y] += 1.0;
                    ref = n.left;
                }
            }
        }
        for (std::size_t k = 0; k < tree.nodes().size(); ++k) {
            const double nt = at[k][0] + at[k][1];
            if (nt == 0.0) continue;
            const double nl = left[k][0] + left[k][1];
            const double nr = right[k][0] + right[k][1];
            const double decrease = gini(at[k][0], at[k][1]) - (nl / nt) * gini(left[k][0], left[k][1]) -
                                    (nr / nt) * gini(right[k][0], right[k][1]);
            tree_imp[static_cast<std::size_t>(tree.nodes()[k].feature)] += std::max(0.0, (nt / n_total) * decrease);
        }
        for (std::size_t j = 0; j < d; ++j) total[j] += tree_imp[j] / static_cast<double>(forest.size());
    }
    const double sum = std::accumulate(total.begin(), total.end(), 0.0);
    if (sum > 0.0)
        for (double& v : total) v /= sum;
    return total;
}

double accuracy(const Forest& forest, const Dataset& data) {
    if (data.size() == 0) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        hits += predict(forest, data.rows[i]).predicted_class == data.labels[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace probshift
