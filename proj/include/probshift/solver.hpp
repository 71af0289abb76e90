#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "probshift/forest.hpp"
#include "probshift/prob_model.hpp"

namespace probshift {

enum class Objective { max_path, min_path, kappa_path, min_distance };
enum class DistanceNorm { l1, l2, linf };
enum class PointRule { project_x0, box_center };
enum class MuDirection { at_least, at_most };
enum class SolveStatus { optimal, infeasible, timeout };

std::string to_string(Objective o);
std::string to_string(DistanceNorm n);
std::string to_string(PointRule r);
std::string to_string(MuDirection d);
std::string to_string(SolveStatus s);
/// Accepts the full names and the short forms max, min, kappa, distance.
Objective parse_objective(const std::string& s);
DistanceNorm parse_distance_norm(const std::string& s);
PointRule parse_point_rule(const std::string& s);
MuDirection parse_mu_direction(const std::string& s);
SolveStatus parse_solve_status(const std::string& s);

struct ProblemInstance {
    std::vector<double> x0;
    int target_class = 1;
    int eta = 0;         // total effort units
    int max_effort = 0;  // E, units per feature
    double epsilon = 1e-6;

    void validate(const Forest& forest) const;
};

struct EffortAllocation {
    std::vector<int> e;

    int total() const;
    bool operator==(const EffortAllocation&) const = default;
};

/// Every vector with sum <= eta, entries <= E and zero on immutables, exactly once, in
/// ascending lexicographic order. The position in this sequence is the allocation index
/// used for tie-breaking.
std::vector<EffortAllocation> enumerate_effort_allocations(std::size_t d, int max_effort, int eta,
                                                           const std::vector<bool>& mutable_mask);

struct SolverConfig {
    Objective objective = Objective::max_path;
    int kappa = 1;
    std::optional<double> kappa_fraction;  // per tree: kappa = max(1, ceil(fraction * sorted entries))
    double mu = 1e-6;
    MuDirection mu_direction = MuDirection::at_least;
    bool strict_mu = false;             // every tree must be mu-eligible, not only essential ones
    bool positive_leaves_only = false;  // order statistics over target-class leaves only
    DistanceNorm distance = DistanceNorm::l1;
    std::vector<double> distance_weights;  // empty means all ones
    bool respect_mutability = true;        // min_distance keeps immutable coordinates at x0
    double time_limit_s = 0.0;             // 0 disables the limit
    PointRule point_rule = PointRule::project_x0;
    std::uint64_t oracle_cap = 20'000'000;  // brute force refuses above cells x allocations

    void validate(const Forest& forest) const;
};

/// Strict majority of R equally weighted trees: floor(R/2) + 1.
int majority_threshold(std::size_t num_trees);

/// Product of effort-adjusted branch probabilities along the path of `leaf` (index).
double path_probability(const Forest& forest, std::size_t tree, std::size_t leaf, const NodeProbabilityTable& table,
                        const EffortAllocation& effort);

struct TreeValueProfile {
    std::vector<double> leaf_theta;    // per leaf index; 1 for off-target leaves
    std::vector<double> sorted_theta;  // ascending; target leaves only with positive_leaves_only
    double robust_value = 0.0;         // min over target leaves, or the kappa-th sorted entry
    int kappa_used = 0;                // 1-based order statistic behind robust_value
    bool positive = false;             // some leaf predicts the target class
    bool eligible = true;              // mu condition on the kappa - 1 smallest entries
};

TreeValueProfile tree_value_profile(const Forest& forest, std::size_t tree, const NodeProbabilityTable& table,
                                    const EffortAllocation& effort, int target_class, const SolverConfig& config);

struct Solution {
    SolveStatus status = SolveStatus::infeasible;
    Objective objective_kind = Objective::max_path;
    std::string infeasible_reason;  // "majority" or "mu_eligibility"
    EffortAllocation effort;
    int allocation_index = -1;
    std::vector<int> chosen_leaves;  // leaf id per tree
    std::vector<int> essential_set;  // tree indices, ascending
    std::vector<double> x;
    std::vector<double> per_tree_value;  // aligned with essential_set
    double objective = 0.0;               // probability product, or the distance
    double log_objective = 0.0;           // NaN for min_distance
    Box feasible_box;                     // intersection of the chosen leaf boxes
    double wall_time_s = 0.0;
    std::uint64_t nodes_explored = 0;

    bool has_point() const { return !x.empty(); }
};

Solution solve_max_path(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable& table,
                        const SolverConfig& config);
Solution solve_min_path(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable& table,
                        const SolverConfig& config);
Solution solve_kappa_path(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable& table,
                          const SolverConfig& config);
Solution solve_min_distance(const Forest& forest, const ProblemInstance& instance, const SolverConfig& config);

/// Dispatches on config.objective. `table` may be null for min_distance only.
Solution solve(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable* table,
               const SolverConfig& config);

/// Best solution of a probabilistic objective with the effort allocation held fixed.
Solution solve_with_effort(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable& table,
                           const SolverConfig& config, const EffortAllocation& effort);

/// Exhaustive enumeration of allocations x nonempty leaf cells. Throws ContractError when
/// the work exceeds config.oracle_cap.
Solution brute_force_oracle(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable* table,
                            const SolverConfig& config);

std::vector<double> choose_point(const Box& box, std::span<const double> x0, PointRule rule);

/// Weighted distance of the configured norm.
double weighted_distance(std::span<const double> a, std::span<const double> b, const SolverConfig& config);

struct Verdict {
    std::vector<std::string> failures;
    bool ok() const { return failures.empty(); }
};

/// Recomputes every property of `solution` from scratch. Failure names: "effort budget",
/// "mutability", "box intersection", "point membership", "majority", "essential set",
/// "objective", "mu eligibility". Solutions without a point pass vacuously.
Verdict verify_solution(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable* table,
                        const Solution& solution, const SolverConfig& config);

nlohmann::json solution_to_json(const Solution& solution, const Forest& forest, bool include_timing);
Solution solution_from_json(const nlohmann::json& doc, const Forest& forest);

}  // namespace probshift
