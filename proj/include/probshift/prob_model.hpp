#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <json.hpp>

#include "probshift/data_io.hpp"
#include "probshift/forest.hpp"

namespace probshift {

using Rng = std::mt19937_64;

/// Seeds an Rng from a list of integer keys (seed, individual, feature, ...).
Rng make_rng(std::initializer_list<std::uint64_t> keys);

struct FeaturePerturbation {
    double sigma = 0.0;          // continuous: spread of the no-effort move
    double majority_freq = 1.0;  // binary: p_j, frequency of the most common value
    bool no_effort_perturbable = true;
    bool effort_perturbable = false;
};

/// Stochastic change model of one individual's features.
struct PerturbationSpec {
    std::vector<FeaturePerturbation> features;
    int num_samples = 1000;
    double effort_scale = 1.5;  // continuous effort move is U[0, scale(e) * sigma], scale(1) = effort_scale
    double effort_floor = 0.2;  // binary effort flip probability is at least floor * e
    std::uint64_t seed = 0;

    /// Defaults: every feature perturbable without effort, mutable ones also with effort.
    /// A continuous feature with zero spread is not perturbed at all.
    static PerturbationSpec from_stats(const std::vector<FeatureMeta>& metas, const FeatureStats& stats);

    void validate(const std::vector<FeatureMeta>& metas) const;

    /// Multiplier of sigma for e >= 1 effort units: 1 + (effort_scale - 1) * e.
    double effort_multiplier(int effort) const;
    /// Flip probability toward the beneficial value for e >= 1 effort units.
    double effort_flip_probability(std::size_t feature, int effort) const;
};

/// One random draw of the future value of a feature. Clamped to the feature domain.
double perturb_value(double x0, const FeatureMeta& meta, int effort, const PerturbationSpec& spec, Rng& rng);

/// Maximal favourable move used by the feasible-to-change baseline: continuous features
/// move exactly effort_multiplier(1) * sigma in the beneficial direction, binary ones follow
/// the one-unit effort rule.
double max_effort_value(double x0, const FeatureMeta& meta, const PerturbationSpec& spec, Rng& rng);

/// Right-branch probability of every split node for every effort level 0..E.
class NodeProbabilityTable {
public:
    NodeProbabilityTable() = default;
    NodeProbabilityTable(int individual, int max_effort, std::vector<std::vector<std::vector<double>>> right,
                         std::optional<std::vector<double>> x0 = std::nullopt);

    int individual() const { return individual_; }
    int max_effort() const { return max_effort_; }
    const std::optional<std::vector<double>>& x0() const { return x0_; }

    double right_prob(std::size_t tree, std::size_t node, int effort) const {
        return right_[tree][node][static_cast<std::size_t>(effort)];
    }
    const std::vector<double>& row(std::size_t tree, std::size_t node) const { return right_.at(tree).at(node); }
    const std::vector<std::vector<std::vector<double>>>& entries() const { return right_; }

    /// Shape matches the forest, probabilities in [0,1], immutable-feature rows constant in e.
    void validate(const Forest& forest) const;

private:
    int individual_ = 0;
    int max_effort_ = 0;
    std::vector<std::vector<std::vector<double>>> right_;  // [tree][node index][effort]
    std::optional<std::vector<double>> x0_;
};

/// Monte-Carlo estimate: the fraction of num_samples perturbed values reaching the right branch.
/// Samples are shared by every node on the same feature at the same effort level, drawn
/// from a stream keyed by (seed, individual, feature, effort).
NodeProbabilityTable estimate_node_probabilities(const Forest& forest, std::span<const double> x0,
                                                 const PerturbationSpec& spec, int max_effort, int individual = 0);

nlohmann::json table_to_json(const NodeProbabilityTable& table, const Forest& forest);
NodeProbabilityTable table_from_json(const nlohmann::json& doc, const Forest& forest);
NodeProbabilityTable load_table(const std::filesystem::path& path, const Forest& forest);
void save_table(const NodeProbabilityTable& table, const Forest& forest, const std::filesystem::path& path);

}  // namespace probshift
