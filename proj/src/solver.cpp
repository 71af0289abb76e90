#include "probshift/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include "probshift/error.hpp"

namespace probshift {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Log-space tolerance under which two objective values count as tied.
constexpr double kTol = 1e-12;
constexpr double kVerifyTol = 1e-9;

bool near(double a, double b) { return a == b || std::fabs(a - b) <= kTol; }

using Clock = std::chrono::steady_clock;

struct Deadline {
    bool enabled = false;
    Clock::time_point at{};

    explicit Deadline(double seconds) {
        if (seconds > 0.0) {
            enabled = true;
            at = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(seconds));
        }
    }
    bool expired() const { return enabled && Clock::now() >= at; }
};

double elapsed_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

bool intersect_into(Box& acc, const Box& b) {
    for (std::size_t j = 0; j < acc.size(); ++j) {
        acc[j].lo = std::max(acc[j].lo, b[j].lo);
        acc[j].hi = std::min(acc[j].hi, b[j].hi);
        if (acc[j].lo > acc[j].hi) return false;
    }
    return true;
}

// Shrinks binary coordinates to the values {0, 1} they admit; false when none remains.
bool integral_hull(Box& box, const Forest& forest) {
    for (const FeatureMeta& f : forest.features()) {
        if (f.kind != FeatureKind::binary) continue;
        Interval& iv = box[static_cast<std::size_t>(f.index)];
        iv.lo = std::ceil(iv.lo);
        iv.hi = std::floor(iv.hi);
        if (iv.lo > iv.hi) return false;
    }
    return true;
}

bool compatible(const Box& a, const Box& b) {
    for (std::size_t j = 0; j < a.size(); ++j)
        if (std::max(a[j].lo, b[j].lo) > std::min(a[j].hi, b[j].hi)) return false;
    return true;
}

bool is_probabilistic(Objective o) { return o != Objective::min_distance; }

// True when the mu condition can exclude a tree or an allocation.
bool mu_binding(const SolverConfig& c) {
    return c.objective == Objective::kappa_path && (c.mu > 0.0 || c.mu_direction == MuDirection::at_most || c.strict_mu);
}

// Leaf boxes and reachable target leaves, shared by every effort allocation.
struct Geometry {
    std::vector<std::vector<std::optional<Box>>> boxes;  // [tree][leaf index]
    std::vector<std::vector<std::size_t>> positive;      // reachable target-class leaves
    Box start;
};

Geometry make_geometry(const Forest& forest, const ProblemInstance& instance, bool pin_immutables) {
    Geometry g;
    g.start = forest.domain();
    if (pin_immutables)
        for (const FeatureMeta& f : forest.features())
            if (!f.is_mutable) {
                const double v = instance.x0[static_cast<std::size_t>(f.index)];
                g.start[static_cast<std::size_t>(f.index)] = Interval{v, v};
            }
    g.boxes.resize(forest.size());
    g.positive.resize(forest.size());
    for (std::size_t r = 0; r < forest.size(); ++r) {
        const Tree& t = forest.tree(r);
        for (std::size_t l = 0; l < t.leaves().size(); ++l) {
            auto box = try_leaf_box(forest, r, static_cast<int>(l), instance.epsilon);
            if (box && (!intersect_into(*box, g.start) || !integral_hull(*box, forest))) box.reset();
            if (box && t.leaves()[l].predicted_class == instance.target_class) g.positive[r].push_back(l);
            g.boxes[r].push_back(std::move(box));
        }
    }
    return g;
}

// Log value of every leaf for one allocation; usable = the tree may join the essential set.
struct TreeScore {
    std::vector<double> leaf_log;
    bool usable = false;
    bool eligible = true;
};

std::vector<TreeScore> score_trees(const Forest& forest, const ProblemInstance& instance,
                                   const NodeProbabilityTable& table, const SolverConfig& config,
                                   const EffortAllocation& effort) {
    std::vector<TreeScore> scores(forest.size());
    for (std::size_t r = 0; r < forest.size(); ++r) {
        const TreeValueProfile p = tree_value_profile(forest, r, table, effort, instance.target_class, config);
        TreeScore& s = scores[r];
        s.eligible = p.eligible;
        s.usable = p.positive && (config.objective != Objective::kappa_path || p.eligible);
        s.leaf_log.assign(p.leaf_theta.size(), -kInf);
        const Tree& t = forest.tree(r);
        for (std::size_t l = 0; l < t.leaves().size(); ++l) {
            if (t.leaves()[l].predicted_class != instance.target_class) continue;
            const double v = config.objective == Objective::max_path ? p.leaf_theta[l] : p.robust_value;
            s.leaf_log[l] = std::log(v);
        }
    }
    return scores;
}

bool strict_ok(const SolverConfig& config, const std::vector<TreeScore>& scores) {
    if (config.objective != Objective::kappa_path || !config.strict_mu) return true;
    return std::all_of(scores.begin(), scores.end(), [](const TreeScore& s) { return s.eligible; });
}

struct Incumbent {
    bool has = false;
    double value = -kInf;
    std::size_t alloc = 0;
    std::vector<std::pair<std::size_t, std::size_t>> picks;  // (tree, leaf index)

    bool accepts(double v, std::size_t a) const {
        return !has || v > value + kTol || (near(v, value) && a < alloc);
    }
    bool prunes(double bound, std::size_t a) const {
        return has && (bound < value - kTol || (bound <= value + kTol && alloc <= a));
    }
};

// Branch and bound over sets of m target leaves, one per tree, with jointly nonempty boxes.
class PathSearch {
public:
    PathSearch(const Geometry& geo, int m, const Deadline& deadline, std::uint64_t& nodes)
        : geo_(geo), m_(m), deadline_(deadline), nodes_(nodes) {}

    bool timed_out() const { return timed_out_; }

    void run(std::size_t alloc, const std::vector<TreeScore>& scores, Incumbent& inc) {
        alloc_ = alloc;
        inc_ = &inc;
        cands_.assign(scores.size(), {});
        order_.clear();
        std::vector<double> tree_max(scores.size(), -kInf);
        for (std::size_t r = 0; r < scores.size(); ++r) {
            if (!scores[r].usable) continue;
            for (std::size_t l : geo_.positive[r]) cands_[r].push_back({scores[r].leaf_log[l], l});
            if (cands_[r].empty()) continue;
            std::stable_sort(cands_[r].begin(), cands_[r].end(),
                             [](const Cand& a, const Cand& b) { return a.value > b.value; });
            tree_max[r] = cands_[r].front().value;
            order_.push_back(r);
        }
        std::stable_sort(order_.begin(), order_.end(),
                         [&](std::size_t a, std::size_t b) { return tree_max[a] > tree_max[b]; });
        if (static_cast<int>(order_.size()) < m_) return;
        picks_.clear();
        dfs(0, 0, 0.0, geo_.start);
    }

private:
    struct Cand {
        double value;
        std::size_t leaf;
    };

    void dfs(std::size_t pos, int picked, double logsum, const Box& box) {
        if (timed_out_) return;
        if ((++nodes_ & 4095u) == 0 && deadline_.expired()) {
            timed_out_ = true;
            return;
        }
        if (picked == m_) {
            if (inc_->accepts(logsum, alloc_)) *inc_ = Incumbent{true, logsum, alloc_, picks_};
            return;
        }
        const auto need = static_cast<std::size_t>(m_ - picked);
        std::vector<double> rest;
        rest.reserve(order_.size() - pos);
        for (std::size_t i = pos; i < order_.size(); ++i) {
            const std::size_t r = order_[i];
            for (const Cand& c : cands_[r])
                if (compatible(box, *geo_.boxes[r][c.leaf])) {
                    rest.push_back(c.value);
                    break;
                }
        }
        if (rest.size() < need) return;
        std::partial_sort(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(need), rest.end(), std::greater<>());
        const double bound = std::accumulate(rest.begin(), rest.begin() + static_cast<std::ptrdiff_t>(need), logsum);
        if (inc_->prunes(bound, alloc_)) return;

        const std::size_t r = order_[pos];
        for (const Cand& c : cands_[r]) {
            Box next = box;
            if (!intersect_into(next, *geo_.boxes[r][c.leaf])) continue;
            picks_.emplace_back(r, c.leaf);
            dfs(pos + 1, picked + 1, logsum + c.value, next);
            picks_.pop_back();
            if (timed_out_) return;
        }
        if (order_.size() - pos - 1 >= need) dfs(pos + 1, picked, logsum, box);
    }

    const Geometry& geo_;
    int m_;
    const Deadline& deadline_;
    std::uint64_t& nodes_;
    std::size_t alloc_ = 0;
    Incumbent* inc_ = nullptr;
    std::vector<std::vector<Cand>> cands_;
    std::vector<std::size_t> order_;
    std::vector<std::pair<std::size_t, std::size_t>> picks_;
    bool timed_out_ = false;
};

// Moves coordinates sitting in a split's epsilon gap onto the nearest side allowed by `box`.
void snap_out_of_gaps(std::vector<double>& x, const Box& box, const Forest& forest, double epsilon) {
    for (const Tree& t : forest.trees())
        for (const Node& n : t.nodes()) {
            const auto j = static_cast<std::size_t>(n.feature);
            if (x[j] > n.threshold - epsilon && x[j] < n.threshold)
                x[j] = n.threshold <= box[j].hi ? n.threshold : n.threshold - epsilon;
        }
}

Box cell_box(const Forest& forest, const std::vector<int>& leaf_index, double epsilon) {
    Box box = forest.domain();
    for (std::size_t r = 0; r < forest.size(); ++r) {
        const auto b = try_leaf_box(forest, r, leaf_index[r], epsilon);
        if (!b || !intersect_into(box, *b)) throw DegenerateBoxError("chosen leaves have an empty intersection");
    }
    if (!integral_hull(box, forest)) throw DegenerateBoxError("chosen leaves admit no binary value");
    return box;
}

// Fills the point-dependent fields of a probabilistic solution from x.
void fill_from_point(Solution& sol, const Forest& forest, const ProblemInstance& instance,
                     const std::vector<TreeScore>& scores, int m, std::vector<double> x) {
    std::vector<int> leaf_index(forest.size());
    std::vector<std::pair<double, std::size_t>> ranked;
    sol.chosen_leaves.clear();
    for (std::size_t r = 0; r < forest.size(); ++r) {
        const Tree& t = forest.tree(r);
        leaf_index[r] = t.leaf_of(x);
        const Leaf& leaf = t.leaves()[static_cast<std::size_t>(leaf_index[r])];
        sol.chosen_leaves.push_back(leaf.id);
        if (leaf.predicted_class == instance.target_class && scores[r].usable)
            ranked.emplace_back(scores[r].leaf_log[static_cast<std::size_t>(leaf_index[r])], r);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    if (static_cast<int>(ranked.size()) < m) throw ContractError("point does not carry an eligible majority");
    ranked.resize(static_cast<std::size_t>(m));
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    sol.essential_set.clear();
    sol.per_tree_value.clear();
    double log_sum = 0.0;
    for (const auto& [v, r] : ranked) {
        sol.essential_set.push_back(static_cast<int>(r));
        sol.per_tree_value.push_back(std::exp(v));
        log_sum += v;
    }
    sol.log_objective = log_sum;
    sol.objective = std::exp(log_sum);
    sol.feasible_box = cell_box(forest, leaf_index, instance.epsilon);
    sol.x = std::move(x);
}

void check_probabilistic_inputs(const Forest& forest, const ProblemInstance& instance,
                                const NodeProbabilityTable& table, const SolverConfig& config) {
    instance.validate(forest);
    config.validate(forest);
    if (!is_probabilistic(config.objective)) throw ContractError("objective is not probabilistic");
    if (!forest.equal_weights()) throw ContractError("probabilistic objectives require equal tree weights");
    table.validate(forest);
    if (table.max_effort() < instance.max_effort)
        throw ContractError("probability table covers E=" + std::to_string(table.max_effort()) + ", instance needs E=" +
                            std::to_string(instance.max_effort));
}

Solution infeasible_solution(const SolverConfig& config, SolveStatus status, std::size_t d) {
    Solution s;
    s.status = status;
    s.objective_kind = config.objective;
    s.effort.e.assign(d, 0);
    s.objective = 0.0;
    s.log_objective = config.objective == Objective::min_distance ? std::numeric_limits<double>::quiet_NaN() : -kInf;
    return s;
}

// Search over allocations in descending order of their optimistic bound. `fixed` restricts
// the search to one allocation.
Solution solve_probabilistic(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable& table,
                             const SolverConfig& config, const std::optional<EffortAllocation>& fixed) {
    check_probabilistic_inputs(forest, instance, table, config);
    const auto start = Clock::now();
    const Deadline deadline(config.time_limit_s);
    const int m = majority_threshold(forest.size());
    const Geometry geo = make_geometry(forest, instance, false);

    std::vector<EffortAllocation> allocs;
    if (fixed) {
        if (fixed->e.size() != forest.num_features()) throw InputError("effort vector has the wrong length");
        allocs.push_back(*fixed);
    } else {
        allocs = enumerate_effort_allocations(forest.num_features(), instance.max_effort, instance.eta,
                                              forest.mutable_mask());
    }

    struct Planned {
        std::size_t index;
        double bound;
        std::vector<TreeScore> scores;
    };
    std::vector<Planned> plan;
    for (std::size_t a = 0; a < allocs.size(); ++a) {
        std::vector<TreeScore> scores = score_trees(forest, instance, table, config, allocs[a]);
        if (!strict_ok(config, scores)) continue;
        std::vector<double> maxima;
        for (std::size_t r = 0; r < scores.size(); ++r) {
            if (!scores[r].usable) continue;
            double best = -kInf;
            bool any = false;
            for (std::size_t l : geo.positive[r]) {
                best = std::max(best, scores[r].leaf_log[l]);
                any = true;
            }
            if (any) maxima.push_back(best);
        }
        if (static_cast<int>(maxima.size()) < m) continue;
        std::partial_sort(maxima.begin(), maxima.begin() + m, maxima.end(), std::greater<>());
        const double bound = std::accumulate(maxima.begin(), maxima.begin() + m, 0.0);
        plan.push_back({a, bound, std::move(scores)});
    }
    std::stable_sort(plan.begin(), plan.end(), [](const Planned& a, const Planned& b) { return a.bound > b.bound; });

    std::uint64_t nodes = 0;
    Incumbent inc;
    PathSearch search(geo, m, deadline, nodes);
    const std::vector<TreeScore>* best_scores = nullptr;
    bool timed_out = false;
    for (const Planned& p : plan) {
        if (deadline.expired()) {
            timed_out = true;
            break;
        }
        if (inc.prunes(p.bound, p.index)) {
            if (p.bound < inc.value - kTol) break;
            continue;
        }
        search.run(p.index, p.scores, inc);
        if (inc.has && inc.alloc == p.index) best_scores = &p.scores;
        if (search.timed_out()) {
            timed_out = true;
            break;
        }
    }

    Solution sol = infeasible_solution(config, timed_out ? SolveStatus::timeout : SolveStatus::infeasible,
                                       forest.num_features());
    sol.nodes_explored = nodes;
    if (inc.has) {
        sol.status = timed_out ? SolveStatus::timeout : SolveStatus::optimal;
        sol.effort = allocs[inc.alloc];
        sol.allocation_index = fixed ? -1 : static_cast<int>(inc.alloc);
        Box box = geo.start;
        for (const auto& [r, l] : inc.picks) intersect_into(box, *geo.boxes[r][l]);
        std::vector<double> x = choose_point(box, instance.x0, config.point_rule);
        snap_out_of_gaps(x, box, forest, instance.epsilon);
        fill_from_point(sol, forest, instance, *best_scores, m, std::move(x));
    } else if (!timed_out) {
        sol.infeasible_reason = "majority";
        if (mu_binding(config)) {
            SolverConfig relaxed = config;
            relaxed.mu = 0.0;
            relaxed.mu_direction = MuDirection::at_least;
            relaxed.strict_mu = false;
            relaxed.time_limit_s = 0.0;
            if (solve_probabilistic(forest, instance, table, relaxed, fixed).status == SolveStatus::optimal)
                sol.infeasible_reason = "mu_eligibility";
        }
    }
    sol.wall_time_s = elapsed_since(start);
    return sol;
}

// Branch and bound over target-leaf sets reaching a weighted majority; bound = distance
// from x0 to the current box.
class DistanceSearch {
public:
    DistanceSearch(const Forest& forest, const Geometry& geo, const ProblemInstance& instance,
                   const SolverConfig& config, const Deadline& deadline, std::uint64_t& nodes)
        : forest_(forest), geo_(geo), instance_(instance), config_(config), deadline_(deadline), nodes_(nodes) {
        for (std::size_t r = 0; r < forest.size(); ++r) {
            total_ += forest.tree(r).weight();
            if (!geo.positive[r].empty()) order_.push_back(r);
        }
        std::stable_sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) {
            return forest.tree(a).weight() > forest.tree(b).weight();
        });
        suffix_.assign(order_.size() + 1, 0.0);
        for (std::size_t i = order_.size(); i-- > 0;) suffix_[i] = suffix_[i + 1] + forest.tree(order_[i]).weight();
        cands_.resize(forest.size());
        for (std::size_t r : order_) {
            for (std::size_t l : geo.positive[r]) cands_[r].push_back({box_distance(*geo.boxes[r][l]), l});
            std::stable_sort(cands_[r].begin(), cands_[r].end(),
                             [](const auto& a, const auto& b) { return a.first < b.first; });
        }
    }

    void run() { dfs(0, geo_.start, 0.0); }

    bool has = false;
    double best = kInf;
    Box best_box;
    bool timed_out = false;

private:
    double box_distance(const Box& box) const {
        return weighted_distance(choose_point(box, instance_.x0, PointRule::project_x0), instance_.x0, config_);
    }

    void dfs(std::size_t pos, const Box& box, double pos_weight) {
        if (timed_out) return;
        if ((++nodes_ & 4095u) == 0 && deadline_.expired()) {
            timed_out = true;
            return;
        }
        const double lb = box_distance(box);
        if (has && lb >= best - kTol) return;
        if (2.0 * pos_weight > total_) {
            has = true;
            best = lb;
            best_box = box;
            return;
        }
        if (pos == order_.size() || 2.0 * (pos_weight + suffix_[pos]) <= total_) return;
        const std::size_t r = order_[pos];
        for (const auto& c : cands_[r]) {
            Box next = box;
            if (!intersect_into(next, *geo_.boxes[r][c.second])) continue;
            dfs(pos + 1, next, pos_weight + forest_.tree(r).weight());
            if (timed_out) return;
        }
        dfs(pos + 1, box, pos_weight);
    }

    const Forest& forest_;
    const Geometry& geo_;
    const ProblemInstance& instance_;
    const SolverConfig& config_;
    const Deadline& deadline_;
    std::uint64_t& nodes_;
    double total_ = 0.0;
    std::vector<std::size_t> order_;
    std::vector<double> suffix_;
    std::vector<std::vector<std::pair<double, std::size_t>>> cands_;
};

void fill_distance_solution(Solution& sol, const Forest& forest, const ProblemInstance& instance,
                            const SolverConfig& config, const Box& box) {
    std::vector<double> x = choose_point(box, instance.x0, PointRule::project_x0);
    snap_out_of_gaps(x, box, forest, instance.epsilon);
    std::vector<int> leaf_index(forest.size());
    sol.chosen_leaves.clear();
    sol.essential_set.clear();
    for (std::size_t r = 0; r < forest.size(); ++r) {
        const Tree& t = forest.tree(r);
        leaf_index[r] = t.leaf_of(x);
        const Leaf& leaf = t.leaves()[static_cast<std::size_t>(leaf_index[r])];
        sol.chosen_leaves.push_back(leaf.id);
        if (leaf.predicted_class == instance.target_class) sol.essential_set.push_back(static_cast<int>(r));
    }
    sol.feasible_box = cell_box(forest, leaf_index, instance.epsilon);
    sol.objective = weighted_distance(x, instance.x0, config);
    sol.log_objective = std::numeric_limits<double>::quiet_NaN();
    sol.x = std::move(x);
}

struct Cell {
    Box box;
    std::vector<int> leaves;  // leaf index per tree
};

std::vector<Cell> enumerate_cells(const Forest& forest, const Geometry& geo, std::uint64_t cap) {
    std::vector<Cell> cells;
    std::vector<int> leaves(forest.size());
    auto rec = [&](auto&& self, std::size_t r, const Box& box) -> void {
        if (r == forest.size()) {
            if (cells.size() >= cap) throw ContractError("brute force oracle: leaf-cell count exceeds the cap");
            cells.push_back({box, leaves});
            return;
        }
        for (std::size_t l = 0; l < geo.boxes[r].size(); ++l) {
            if (!geo.boxes[r][l]) continue;
            Box next = box;
            if (!intersect_into(next, *geo.boxes[r][l])) continue;
            leaves[r] = static_cast<int>(l);
            self(self, r + 1, next);
        }
    };
    rec(rec, 0, geo.start);
    return cells;
}

}  // namespace

std::string to_string(Objective o) {
    switch (o) {
        case Objective::max_path: return "max_path";
        case Objective::min_path: return "min_path";
        case Objective::kappa_path: return "kappa_path";
        case Objective::min_distance: return "min_distance";
    }
    return "?";
}

std::string to_string(DistanceNorm n) {
    switch (n) {
        case DistanceNorm::l1: return "l1";
        case DistanceNorm::l2: return "l2";
        case DistanceNorm::linf: return "linf";
    }
    return "?";
}

std::string to_string(PointRule r) { return r == PointRule::project_x0 ? "project_x0" : "box_center"; }

std::string to_string(MuDirection d) { return d == MuDirection::at_least ? "at_least" : "at_most"; }

std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return "optimal";
        case SolveStatus::infeasible: return "infeasible";
        case SolveStatus::timeout: return "timeout";
    }
    return "?";
}

Objective parse_objective(const std::string& s) {
    if (s == "max" || s == "max_path") return Objective::max_path;
    if (s == "min" || s == "min_path") return Objective::min_path;
    if (s == "kappa" || s == "kappa_path") return Objective::kappa_path;
    if (s == "distance" || s == "min_distance") return Objective::min_distance;
    throw InputError("unknown objective '" + s + "'");
}

DistanceNorm parse_distance_norm(const std::string& s) {
    if (s == "l1" || s == "L1") return DistanceNorm::l1;
    if (s == "l2" || s == "L2") return DistanceNorm::l2;
    if (s == "linf" || s == "Linf") return DistanceNorm::linf;
    throw InputError("unknown distance '" + s + "'");
}

PointRule parse_point_rule(const std::string& s) {
    if (s == "project_x0" || s == "project") return PointRule::project_x0;
    if (s == "box_center" || s == "center") return PointRule::box_center;
    throw InputError("unknown point rule '" + s + "'");
}

MuDirection parse_mu_direction(const std::string& s) {
    if (s == "at_least") return MuDirection::at_least;
    if (s == "at_most") return MuDirection::at_most;
    throw InputError("unknown mu direction '" + s + "'");
}

SolveStatus parse_solve_status(const std::string& s) {
    if (s == "optimal") return SolveStatus::optimal;
    if (s == "infeasible") return SolveStatus::infeasible;
    if (s == "timeout") return SolveStatus::timeout;
    throw ParseError("unknown status '" + s + "'");
}

void ProblemInstance::validate(const Forest& forest) const {
    forest.check_point(x0);
    if (target_class != 0 && target_class != 1) throw ContractError("target class must be 0 or 1");
    if (eta < 0) throw ContractError("eta must be nonnegative");
    if (max_effort < 0) throw ContractError("E must be nonnegative");
    if (!(epsilon > 0.0)) throw ContractError("epsilon must be positive");
}

int EffortAllocation::total() const { return std::accumulate(e.begin(), e.end(), 0); }

std::vector<EffortAllocation> enumerate_effort_allocations(std::size_t d, int max_effort, int eta,
                                                           const std::vector<bool>& mutable_mask) {
    if (mutable_mask.size() != d) throw ContractError("mutable mask has the wrong length");
    if (max_effort < 0 || eta < 0) throw ContractError("E and eta must be nonnegative");
    std::vector<EffortAllocation> out;
    EffortAllocation cur{std::vector<int>(d, 0)};
    auto rec = [&](auto&& self, std::size_t j, int left) -> void {
        if (j == d) {
            out.push_back(cur);
            return;
        }
        const int top = mutable_mask[j] ? std::min(max_effort, left) : 0;
        for (int v = 0; v <= top; ++v) {
            cur.e[j] = v;
            self(self, j + 1, left - v);
        }
        cur.e[j] = 0;
    };
    rec(rec, 0, eta);
    return out;
}

void SolverConfig::validate(const Forest& forest) const {
    std::size_t max_leaves = 0;
    for (const Tree& t : forest.trees()) max_leaves = std::max(max_leaves, t.leaves().size());
    if (kappa_fraction) {
        if (!(*kappa_fraction > 0.0 && *kappa_fraction <= 1.0)) throw ContractError("kappa fraction must lie in (0,1]");
    } else if (kappa < 1 || static_cast<std::size_t>(kappa) > max_leaves) {
        throw ContractError("kappa must lie in 1.." + std::to_string(max_leaves));
    }
    if (!(mu >= 0.0 && mu < 1.0)) throw ContractError("mu must lie in [0,1)");
    if (!distance_weights.empty()) {
        if (distance_weights.size() != forest.num_features())
            throw ContractError("distance weights must have one entry per feature");
        for (double w : distance_weights)
            if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("distance weights must be finite and nonnegative");
    }
    if (!(time_limit_s >= 0.0)) throw ContractError("time limit must be nonnegative");
}

int majority_threshold(std::size_t num_trees) { return static_cast<int>(num_trees / 2) + 1; }

double path_probability(const Forest& forest, std::size_t tree, std::size_t leaf, const NodeProbabilityTable& table,
                        const EffortAllocation& effort) {
    const Tree& t = forest.tree(tree);
    double p = 1.0;
    for (const PathStep& step : t.path(static_cast<int>(leaf))) {
        const auto k = static_cast<std::size_t>(step.node);
        const int e = effort.e[static_cast<std::size_t>(t.nodes()[k].feature)];
        const double right = table.right_prob(tree, k, e);
        p *= step.right ? right : 1.0 - right;
    }
    return p;
}

TreeValueProfile tree_value_profile(const Forest& forest, std::size_t tree, const NodeProbabilityTable& table,
                                    const EffortAllocation& effort, int target_class, const SolverConfig& config) {
    const Tree& t = forest.tree(tree);
    TreeValueProfile p;
    p.leaf_theta.resize(t.leaves().size());
    double min_positive = 1.0;
    for (std::size_t l = 0; l < t.leaves().size(); ++l) {
        const bool target = t.leaves()[l].predicted_class == target_class;
        p.leaf_theta[l] = target ? path_probability(forest, tree, l, table, effort) : 1.0;
        if (target) {
            p.positive = true;
            min_positive = std::min(min_positive, p.leaf_theta[l]);
            p.sorted_theta.push_back(p.leaf_theta[l]);
        } else if (!config.positive_leaves_only) {
            p.sorted_theta.push_back(1.0);
        }
    }
    std::sort(p.sorted_theta.begin(), p.sorted_theta.end());
    if (!p.positive) {
        p.robust_value = 0.0;
        p.eligible = false;
        return p;
    }
    if (config.objective != Objective::kappa_path) {
        p.robust_value = min_positive;
        p.kappa_used = 1;
        return p;
    }
    const auto n = static_cast<int>(p.sorted_theta.size());
    int k = config.kappa_fraction
                ? std::max(1, static_cast<int>(std::ceil(*config.kappa_fraction * static_cast<double>(n))))
                : config.kappa;
    k = std::min(k, n);
    p.kappa_used = k;
    p.robust_value = p.sorted_theta[static_cast<std::size_t>(k - 1)];
    const double below = std::accumulate(p.sorted_theta.begin(), p.sorted_theta.begin() + (k - 1), 0.0);
    p.eligible = config.mu_direction == MuDirection::at_least ? below >= config.mu : below <= config.mu;
    return p;
}

Solution solve_max_path(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable& table,
                        const SolverConfig& config) {
    SolverConfig c = config;
    c.objective = Objective::max_path;
    return solve_probabilistic(forest, instance, table, c, std::nullopt);
}

Solution solve_min_path(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable& table,
                        const SolverConfig& config) {
    SolverConfig c = config;
    c.objective = Objective::min_path;
    return solve_probabilistic(forest, instance, table, c, std::nullopt);
}

Solution solve_kappa_path(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable& table,
                          const SolverConfig& config) {
    SolverConfig c = config;
    c.objective = Objective::kappa_path;
    return solve_probabilistic(forest, instance, table, c, std::nullopt);
}

Solution solve_with_effort(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable& table,
                           const SolverConfig& config, const EffortAllocation& effort) {
    return solve_probabilistic(forest, instance, table, config, effort);
}

Solution solve_min_distance(const Forest& forest, const ProblemInstance& instance, const SolverConfig& config) {
    instance.validate(forest);
    config.validate(forest);
    const auto start = Clock::now();
    SolverConfig c = config;
    c.objective = Objective::min_distance;
    const Deadline deadline(c.time_limit_s);
    const Geometry geo = make_geometry(forest, instance, c.respect_mutability);
    std::uint64_t nodes = 0;
    DistanceSearch search(forest, geo, instance, c, deadline, nodes);
    search.run();
    Solution sol = infeasible_solution(c, search.timed_out ? SolveStatus::timeout : SolveStatus::infeasible,
                                       forest.num_features());
    sol.nodes_explored = nodes;
    if (search.has) {
        sol.status = search.timed_out ? SolveStatus::timeout : SolveStatus::optimal;
        fill_distance_solution(sol, forest, instance, c, search.best_box);
    } else if (!search.timed_out) {
        sol.infeasible_reason = "majority";
    }
    sol.wall_time_s = elapsed_since(start);
    return sol;
}

Solution solve(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable* table,
               const SolverConfig& config) {
    if (config.objective == Objective::min_distance) return solve_min_distance(forest, instance, config);
    if (table == nullptr) throw ContractError("probabilistic objectives need a probability table");
    return solve_probabilistic(forest, instance, *table, config, std::nullopt);
}

Solution brute_force_oracle(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable* table,
                            const SolverConfig& config) {
    const auto start = Clock::now();
    const bool distance = config.objective == Objective::min_distance;
    if (distance) {
        instance.validate(forest);
        config.validate(forest);
    } else {
        if (table == nullptr) throw ContractError("probabilistic objectives need a probability table");
        check_probabilistic_inputs(forest, instance, *table, config);
    }
    const Geometry geo = make_geometry(forest, instance, distance && config.respect_mutability);
    const std::vector<Cell> cells = enumerate_cells(forest, geo, config.oracle_cap);
    Solution sol = infeasible_solution(config, SolveStatus::infeasible, forest.num_features());

    if (distance) {
        double total = 0.0;
        for (const Tree& t : forest.trees()) total += t.weight();
        const Cell* best = nullptr;
        double best_d = kInf;
        for (const Cell& cell : cells) {
            double pos = 0.0;
            for (std::size_t r = 0; r < forest.size(); ++r)
                if (forest.tree(r).leaves()[static_cast<std::size_t>(cell.leaves[r])].predicted_class ==
                    instance.target_class)
                    pos += forest.tree(r).weight();
            if (2.0 * pos <= total) continue;
            const double d =
                weighted_distance(choose_point(cell.box, instance.x0, PointRule::project_x0), instance.x0, config);
            if (best == nullptr || d < best_d - kTol) {
                best = &cell;
                best_d = d;
            }
        }
        sol.nodes_explored = cells.size();
        if (best != nullptr) {
            sol.status = SolveStatus::optimal;
            fill_distance_solution(sol, forest, instance, config, best->box);
        } else {
            sol.infeasible_reason = "majority";
        }
        sol.wall_time_s = elapsed_since(start);
        return sol;
    }

    const int m = majority_threshold(forest.size());
    const auto allocs =
        enumerate_effort_allocations(forest.num_features(), instance.max_effort, instance.eta, forest.mutable_mask());
    if (static_cast<std::uint64_t>(cells.size()) * allocs.size() > config.oracle_cap)
        throw ContractError("brute force oracle: work exceeds the cap");
    bool has = false;
    double best_value = -kInf;
    std::size_t best_alloc = 0;
    const Cell* best_cell = nullptr;
    std::vector<TreeScore> best_scores;
    for (std::size_t a = 0; a < allocs.size(); ++a) {
        std::vector<TreeScore> scores = score_trees(forest, instance, *table, config, allocs[a]);
        if (!strict_ok(config, scores)) continue;
        bool improved = false;
        for (const Cell& cell : cells) {
            std::vector<std::pair<double, std::size_t>> ranked;
            for (std::size_t r = 0; r < forest.size(); ++r) {
                const auto l = static_cast<std::size_t>(cell.leaves[r]);
                if (forest.tree(r).leaves()[l].predicted_class == instance.target_class && scores[r].usable)
                    ranked.emplace_back(scores[r].leaf_log[l], r);
            }
            if (static_cast<int>(ranked.size()) < m) continue;
            std::stable_sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.first > y.first; });
            ranked.resize(static_cast<std::size_t>(m));
            std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) { return x.second < y.second; });
            double v = 0.0;
            for (const auto& pr : ranked) v += pr.first;
            if (!has || v > best_value + kTol) {
                has = true;
                best_value = v;
                best_alloc = a;
                best_cell = &cell;
                improved = true;
            }
        }
        if (improved) best_scores = std::move(scores);
    }
    sol.nodes_explored = static_cast<std::uint64_t>(cells.size()) * allocs.size();
    if (has) {
        sol.status = SolveStatus::optimal;
        sol.effort = allocs[best_alloc];
        sol.allocation_index = static_cast<int>(best_alloc);
        fill_from_point(sol, forest, instance, best_scores, m,
                        choose_point(best_cell->box, instance.x0, config.point_rule));
    } else {
        sol.infeasible_reason = "majority";
        if (mu_binding(config)) {
            SolverConfig relaxed = config;
            relaxed.mu = 0.0;
            relaxed.mu_direction = MuDirection::at_least;
            relaxed.strict_mu = false;
            if (brute_force_oracle(forest, instance, table, relaxed).status == SolveStatus::optimal)
                sol.infeasible_reason = "mu_eligibility";
        }
    }
    sol.wall_time_s = elapsed_since(start);
    return sol;
}

std::vector<double> choose_point(const Box& box, std::span<const double> x0, PointRule rule) {
    if (box.size() != x0.size()) throw InputError("box and point differ in dimension");
    std::vector<double> x(box.size());
    for (std::size_t j = 0; j < box.size(); ++j) {
        if (box[j].empty()) throw ContractError("cannot choose a point in an empty box");
        x[j] = rule == PointRule::project_x0 ? std::clamp(x0[j], box[j].lo, box[j].hi) : 0.5 * (box[j].lo + box[j].hi);
    }
    return x;
}

double weighted_distance(std::span<const double> a, std::span<const double> b, const SolverConfig& config) {
    if (a.size() != b.size()) throw InputError("points differ in dimension");
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double w = config.distance_weights.empty() ? 1.0 : config.distance_weights[j];
        const double diff = std::fabs(a[j] - b[j]);
        switch (config.distance) {
            case DistanceNorm::l1: acc += w * diff; break;
            case DistanceNorm::l2: acc += w * diff * diff; break;
            case DistanceNorm::linf: acc = std::max(acc, w * diff); break;
        }
    }
    return config.distance == DistanceNorm::l2 ? std::sqrt(acc) : acc;
}

Verdict verify_solution(const Forest& forest, const ProblemInstance& instance, const NodeProbabilityTable* table,
                        const Solution& solution, const SolverConfig& config) {
    Verdict v;
    if (!solution.has_point()) return v;
    auto fail = [&](const std::string& name) {
        if (std::find(v.failures.begin(), v.failures.end(), name) == v.failures.end()) v.failures.push_back(name);
    };
    const std::size_t d = forest.num_features();
    const std::size_t R = forest.size();
    const auto mutables = forest.mutable_mask();
    const bool distance = solution.objective_kind == Objective::min_distance;

    const auto& e = solution.effort.e;
    bool effort_shape = e.size() == d;
    if (!effort_shape) {
        fail("effort budget");
    } else {
        for (std::size_t j = 0; j < d; ++j) {
            if (e[j] < 0 || e[j] > instance.max_effort) fail("effort budget");
            if (e[j] != 0 && !mutables[j]) fail("mutability");
        }
        if (solution.effort.total() > instance.eta) fail("effort budget");
    }

    const auto& x = solution.x;
    if (x.size() != d) {
        fail("point membership");
        return v;
    }
    std::vector<int> leaf_index(R, -1);
    std::vector<Box> boxes;
    bool boxes_ok = solution.chosen_leaves.size() == R;
    for (std::size_t r = 0; boxes_ok && r < R; ++r) {
        try {
            leaf_index[r] = forest.tree(r).leaf_index(solution.chosen_leaves[r]);
        } catch (const Error&) {
            boxes_ok = false;
            break;
        }
        auto b = try_leaf_box(forest, r, leaf_index[r], instance.epsilon);
        if (!b) {
            boxes_ok = false;
            break;
        }
        boxes.push_back(std::move(*b));
    }
    if (!boxes_ok || !boxes_intersect(boxes)) {
        fail("box intersection");
        return v;
    }
    for (std::size_t r = 0; r < R; ++r)
        if (!box_contains(boxes[r], x) || forest.tree(r).leaf_of(x) != leaf_index[r]) fail("point membership");
    for (const FeatureMeta& f : forest.features()) {
        const double xj = x[static_cast<std::size_t>(f.index)];
        if (f.kind == FeatureKind::binary && xj != 0.0 && xj != 1.0) fail("point membership");
    }

    const Prediction pred = predict(forest, x);
    double pos_weight = 0.0;
    double total = 0.0;
    int pos_count = 0;
    std::vector<bool> positive(R, false);
    for (std::size_t r = 0; r < R; ++r) {
        total += forest.tree(r).weight();
        positive[r] = forest.tree(r).leaves()[static_cast<std::size_t>(leaf_index[r])].predicted_class ==
                      instance.target_class;
        if (positive[r]) {
            pos_weight += forest.tree(r).weight();
            ++pos_count;
        }
    }
    if (pred.predicted_class != instance.target_class || 2.0 * pos_weight <= total) fail("majority");

    const auto& ess = solution.essential_set;
    bool ess_ok = std::is_sorted(ess.begin(), ess.end()) && std::adjacent_find(ess.begin(), ess.end()) == ess.end();
    for (int r : ess)
        if (r < 0 || static_cast<std::size_t>(r) >= R || !positive[static_cast<std::size_t>(r)]) ess_ok = false;

    if (distance) {
        if (!ess_ok) fail("essential set");
        if (config.respect_mutability)
            for (std::size_t j = 0; j < d; ++j)
                if (!mutables[j] && x[j] != instance.x0[j]) fail("mutability");
        if (!(std::fabs(weighted_distance(x, instance.x0, config) - solution.objective) <= kVerifyTol)) fail("objective");
        return v;
    }

    if (table == nullptr) throw ContractError("probabilistic solutions need a probability table to verify");
    const int m = majority_threshold(R);
    if (pos_count < m) fail("majority");
    if (!ess_ok || static_cast<int>(ess.size()) != m) {
        fail("essential set");
        return v;
    }
    if (!effort_shape) return v;
    SolverConfig c = config;
    c.objective = solution.objective_kind;
    const auto scores = score_trees(forest, instance, *table, c, solution.effort);
    if (c.objective == Objective::kappa_path) {
        for (int r : ess)
            if (!scores[static_cast<std::size_t>(r)].eligible) fail("mu eligibility");
        if (!strict_ok(c, scores)) fail("mu eligibility");
    }
    double log_sum = 0.0;
    bool per_tree_ok = solution.per_tree_value.size() == ess.size();
    for (std::size_t i = 0; i < ess.size(); ++i) {
        const auto r = static_cast<std::size_t>(ess[i]);
        const double lv = scores[r].leaf_log[static_cast<std::size_t>(leaf_index[r])];
        log_sum += lv;
        if (per_tree_ok && !(std::fabs(std::exp(lv) - solution.per_tree_value[i]) <= kVerifyTol)) per_tree_ok = false;
    }
    if (!per_tree_ok || !(std::fabs(std::exp(log_sum) - solution.objective) <= kVerifyTol)) fail("objective");
    return v;
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json solution_to_json(const Solution& s, const Forest& forest, bool include_timing) {
    json doc;
    doc["status"] = to_string(s.status);
    doc["objective_kind"] = to_string(s.objective_kind);
    if (!s.infeasible_reason.empty()) doc["infeasible_reason"] = s.infeasible_reason;
    doc["effort"] = s.effort.e;
    json effort_features = json::array();
    for (std::size_t j = 0; j < s.effort.e.size() && j < forest.num_features(); ++j)
        if (s.effort.e[j] > 0) effort_features.push_back(forest.features()[j].name);
    doc["effort_features"] = std::move(effort_features);
    doc["allocation_index"] = s.allocation_index;
    if (s.has_point()) {
        doc["chosen_leaves"] = s.chosen_leaves;
        doc["essential_set"] = s.essential_set;
        doc["x"] = s.x;
        doc["per_tree_value"] = s.per_tree_value;
        doc["objective"] = s.objective;
        doc["log_objective"] = finite_or_null(s.log_objective);
        json box = json::array();
        for (const Interval& iv : s.feasible_box) box.push_back({iv.lo, iv.hi});
        doc["feasible_box"] = std::move(box);
    } else {
        doc["objective"] = nullptr;
    }
    doc["nodes_explored"] = s.nodes_explored;
    if (include_timing) doc["wall_time_s"] = s.wall_time_s;
    return doc;
}

Solution solution_from_json(const json& doc, const Forest& forest) {
    Solution s;
    try {
        s.status = parse_solve_status(doc.at("status").get<std::string>());
        s.objective_kind = parse_objective(doc.at("objective_kind").get<std::string>());
        s.infeasible_reason = doc.value("infeasible_reason", std::string());
        s.effort.e = doc.at("effort").get<std::vector<int>>();
        s.allocation_index = doc.value("allocation_index", -1);
        s.nodes_explored = doc.value("nodes_explored", std::uint64_t{0});
        s.wall_time_s = doc.value("wall_time_s", 0.0);
        if (doc.contains("x")) {
            s.chosen_leaves = doc.at("chosen_leaves").get<std::vector<int>>();
            s.essential_set = doc.at("essential_set").get<std::vector<int>>();
            s.x = doc.at("x").get<std::vector<double>>();
            s.per_tree_value = doc.at("per_tree_value").get<std::vector<double>>();
            s.objective = doc.at("objective").get<double>();
            const json& lo = doc.at("log_objective");
            s.log_objective = lo.is_null() ? (s.objective_kind == Objective::min_distance
                                                  ? std::numeric_limits<double>::quiet_NaN()
                                                  : -kInf)
                                           : lo.get<double>();
            for (const json& iv : doc.at("feasible_box")) s.feasible_box.push_back({iv.at(0).get<double>(), iv.at(1).get<double>()});
        }
    } catch (const json::exception& ex) {
        throw ParseError(std::string("solution: ") + ex.what());
    } catch (const InputError& ex) {
        throw ParseError(std::string("solution: ") + ex.what());
    }
    if (s.effort.e.size() != forest.num_features()) throw ValidationError("solution effort vector has the wrong length");
    if (s.has_point() && (s.x.size() != forest.num_features() || s.chosen_leaves.size() != forest.size()))
        throw ValidationError("solution does not match the forest");
    return s;
}

}  // namespace probshift
