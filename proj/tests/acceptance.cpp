// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "probshift/cohort_sim.hpp"
#include "probshift/data_io.hpp"
#include "probshift/fixtures.hpp"
#include "probshift/prob_model.hpp"
#include "probshift/ranking.hpp"
#include "probshift/solver.hpp"
#include "probshift/train.hpp"
#include "test_support.hpp"

using namespace probshift;

namespace {

using Clock = std::chrono::steady_clock;

constexpr double kExactTol = 1e-9;
constexpr double kFirefighterBudgetS = 0.010;
constexpr double kOracleBudgetS = 60.0;
constexpr int kInstances = 100;
constexpr int kMcSeeds = 100;
constexpr int kMcRequired = 99;
constexpr double kTableTol = 0.05;
constexpr double kEndToEndBudgetS = 15 * 60.0;
constexpr double kScaleLimitS = 300.0;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

// Objective on a comparable scale: infeasible probabilistic solves count as 0.
double value_of(const Solution& s) { return s.status == SolveStatus::optimal ? s.objective : 0.0; }

SolverConfig config_for(Objective o, int kappa = 2, double mu = 0.0) {
    SolverConfig c;
    c.objective = o;
    c.kappa = kappa;
    c.mu = mu;
    return c;
}

void firefighter() {
    const FirefighterFixture ff = firefighter_fixture();
    const auto start = Clock::now();
    SolverConfig max_cfg;
    SolverConfig min_cfg = config_for(Objective::min_path);
    const EffortAllocation on_s{{1, 0}};
    const Solution mx = solve_max_path(ff.forest, ff.instance, ff.table, max_cfg);
    const Solution mx_s = solve_with_effort(ff.forest, ff.instance, ff.table, max_cfg, on_s);
    const Solution mn = solve_min_path(ff.forest, ff.instance, ff.table, min_cfg);
    const Solution mn_s = solve_with_effort(ff.forest, ff.instance, ff.table, min_cfg, on_s);
    const double elapsed = seconds_since(start);
    const EffortAllocation on_a{{0, 1}};
    const bool ok = std::fabs(mx.objective - 0.36) <= kExactTol && mx.effort == on_a &&
                    std::fabs(mx_s.objective - 0.20) <= kExactTol && std::fabs(mn.objective - 0.32) <= kExactTol &&
                    mn.effort == on_a && std::fabs(mn_s.objective - 0.15) <= kExactTol && elapsed < kFirefighterBudgetS;
    char detail[160];
    std::snprintf(detail, sizeof detail, "max A %.12g, S %.12g; min A %.12g, S %.12g; %.2f ms", mx.objective,
                  mx_s.objective, mn.objective, mn_s.objective, elapsed * 1e3);
    report("firefighter", ok, detail);
}

struct SuiteStats {
    int mismatches = 0;
    int verify_failures = 0;
    int coincidence_failures = 0;
    int ordering_failures = 0;
    int monotonicity_failures = 0;
    int normalization_failures = 0;
    int solves = 0;
    double oracle_seconds = 0.0;
};

void instance_suite() {
    SuiteStats st;
    const auto start = Clock::now();
    for (int seed = 0; seed < kInstances; ++seed) {
        const auto ri = testing::random_instance(static_cast<std::uint64_t>(seed));
        const Forest& f = ri.forest;
        const ProblemInstance& inst = ri.instance;
        const std::vector<SolverConfig> configs{config_for(Objective::max_path), config_for(Objective::min_path),
                                                config_for(Objective::kappa_path, 2, 0.0),
                                                config_for(Objective::kappa_path, 2, 1e-6),
                                                config_for(Objective::min_distance)};
        for (const SolverConfig& c : configs) {
            const Solution s = solve(f, inst, &ri.table, c);
            const Solution o = brute_force_oracle(f, inst, &ri.table, c);
            ++st.solves;
            if (!testing::objectives_match(s, o, kExactTol)) ++st.mismatches;
            if (!verify_solution(f, inst, &ri.table, s, c).ok()) ++st.verify_failures;
        }
    }
    st.oracle_seconds = seconds_since(start);
    char detail[200];
    std::snprintf(detail, sizeof detail, "%d solves, %d mismatches, %d verify failures, %.1f s", st.solves,
                  st.mismatches, st.verify_failures, st.oracle_seconds);
    report("oracle-equivalence", st.mismatches == 0 && st.verify_failures == 0 && st.oracle_seconds < kOracleBudgetS,
           detail);

    for (int seed = 0; seed < kInstances; ++seed) {
        const auto ri = testing::random_instance(static_cast<std::uint64_t>(seed));
        const Forest& f = ri.forest;
        const Solution k1 = solve(f, ri.instance, &ri.table, config_for(Objective::kappa_path, 1, 0.0));
        const Solution mn = solve(f, ri.instance, &ri.table, config_for(Objective::min_path));
        if (k1.status != mn.status || value_of(k1) != value_of(mn)) ++st.coincidence_failures;

        const double v_min = value_of(mn);
        const double v_k1 = value_of(k1);
        const double v_k2 = value_of(solve(f, ri.instance, &ri.table, config_for(Objective::kappa_path, 2, 0.0)));
        const double v_max = value_of(solve(f, ri.instance, &ri.table, config_for(Objective::max_path)));
        if (!(v_min <= v_k1 + kExactTol && v_min <= v_k2 + kExactTol && v_k1 <= v_max + kExactTol))
            ++st.ordering_failures;

        for (Objective o : {Objective::max_path, Objective::min_path, Objective::kappa_path}) {
            const SolverConfig c = config_for(o, 2, 0.0);
            ProblemInstance p = ri.instance;
            double prev = -1.0;
            for (int eta = 0; eta <= 3; ++eta) {
                p.eta = eta;
                const double v = value_of(solve(f, p, &ri.table, c));
                if (v + kExactTol < prev) ++st.monotonicity_failures;
                prev = v;
            }
            p = ri.instance;
            prev = -1.0;
            for (int e = 0; e <= ri.table.max_effort(); ++e) {
                p.max_effort = e;
                const double v = value_of(solve(f, p, &ri.table, c));
                if (v + kExactTol < prev) ++st.monotonicity_failures;
                prev = v;
            }
        }

        for (const EffortAllocation& a :
             enumerate_effort_allocations(f.num_features(), ri.table.max_effort(), 3, f.mutable_mask()))
            for (std::size_t r = 0; r < f.size(); ++r) {
                double sum = 0.0;
                for (std::size_t l = 0; l < f.tree(r).leaves().size(); ++l) sum += path_probability(f, r, l, ri.table, a);
                if (std::fabs(sum - 1.0) > kExactTol) ++st.normalization_failures;
            }
    }
    report("kappa1-mu0-equals-min", st.coincidence_failures == 0,
           std::to_string(st.coincidence_failures) + " differing instances");
    report("ordering-and-monotonicity", st.ordering_failures == 0 && st.monotonicity_failures == 0,
           std::to_string(st.ordering_failures) + " ordering, " + std::to_string(st.monotonicity_failures) +
               " monotonicity violations");
    report("probability-normalization", st.normalization_failures == 0,
           std::to_string(st.normalization_failures) + " trees off by more than 1e-9");
}

void monte_carlo() {
    FeatureMeta f;
    f.name = "x";
    f.beneficial = Direction::increase;
    const double x0 = 0.5;
    const double sigma = 0.1;
    struct Case {
        const char* name;
        double threshold;
        int effort;
        double expected;
    };
    const Case cases[] = {{"symmetric", x0, 0, 0.5}, {"out-of-support", x0 + 2 * sigma, 0, 0.0},
                          {"effort-uniform", x0 + sigma, 1, 1.0 / 3.0}};
    std::string detail;
    bool ok = true;
    for (const Case& c : cases) {
        const Forest forest(std::vector<FeatureMeta>{f}, {Tree({{0, 0, c.threshold, 1, 2}}, {{1, 0}, {2, 1}}, 0)});
        const double se = std::sqrt(c.expected * (1.0 - c.expected) / 1000.0);
        int within = 0;
        for (int seed = 0; seed < kMcSeeds; ++seed) {
            PerturbationSpec spec;
            spec.features = {FeaturePerturbation{sigma, 1.0, true, true}};
            spec.num_samples = 1000;
            spec.seed = static_cast<std::uint64_t>(seed);
            const std::vector<double> x{x0};
            const double p = estimate_node_probabilities(forest, x, spec, 1).right_prob(0, 0, c.effort);
            if (std::fabs(p - c.expected) <= 3.0 * se) ++within;
        }
        ok = ok && within >= kMcRequired;
        detail += std::string(detail.empty() ? "" : ", ") + c.name + " " + std::to_string(within) + "/100";
    }
    report("monte-carlo-closed-forms", ok, detail);
}

void table_arithmetic() {
    const SimReport rep = build_report({SimCell{"k50", 4, SimResult{31.81, {31.81}}}}, SimResult{34.53, {34.53}}, 100, 0);
    const double normalized = normalized_percent(rep.find("k50", 4)->result.percent, rep.baseline.percent);
    report("normalized-table", rep.has_normalized() && std::fabs(normalized - 92.12) <= kTableTol,
           fmt("31.81 / 34.53 -> %.4f", normalized));
}

struct PipelineResult {
    double accuracy = 0.0;
    double kappa_percent[2] = {0.0, 0.0};  // eta = 1, 2
    double rsr_percent[2] = {0.0, 0.0};
};

std::vector<std::size_t> off_target(const Forest& f, const Dataset& d, std::span<const std::size_t> rows) {
    std::vector<std::size_t> out;
    for (std::size_t i : rows)
        if (predict(f, d.rows[i]).predicted_class != 1) out.push_back(i);
    return out;
}

PipelineResult pipeline(std::uint64_t seed) {
    PipelineResult res;
    const Dataset data = synth_generate(600, 8, seed);
    const SplitIndices split = split_indices(data.size(), 2.0 / 3.0, seed);
    const Dataset train_set = data.subset(split.train);
    TrainConfig tc;
    tc.num_trees = 9;
    tc.max_depth = 4;
    tc.seed = seed;
    const Forest forest = train(train_set, tc);
    res.accuracy = accuracy(forest, train_set);

    PerturbationSpec spec = PerturbationSpec::from_stats(forest.features(), feature_stats(train_set));
    spec.num_samples = 1000;
    spec.seed = seed;
    const auto ranking_rows = off_target(forest, data, split.train);
    std::vector<NodeProbabilityTable> tables;
    for (std::size_t i : ranking_rows)
        tables.push_back(estimate_node_probabilities(forest, data.rows[i], spec, 1, data.ids[i]));

    SolverConfig sc;
    sc.objective = Objective::kappa_path;
    sc.kappa_fraction = 0.5;
    sc.mu = 1e-6;
    const Dataset cohort = data.subset(off_target(forest, data, split.test));
    SimConfig sim;
    sim.n_reps = 100;
    sim.seed = seed;
    for (int k = 0; k < 2; ++k) {
        const int eta = k + 1;
        std::vector<Solution> sols;
        for (std::size_t t = 0; t < tables.size(); ++t) {
            ProblemInstance inst;
            inst.x0 = data.rows[ranking_rows[t]];
            inst.eta = eta;
            inst.max_effort = 1;
            sols.push_back(solve(forest, inst, &tables[t], sc));
        }
        const Ranking kr = effort_ranking(sols, forest.features(), eta);
        res.kappa_percent[k] = simulate_cohort(forest, cohort, kr.top(eta), spec, sim).percent;
        double rsr = 0.0;
        for (std::uint64_t r = 0; r < 3; ++r)
            rsr += simulate_cohort(forest, cohort, rsr_ranking(forest.features(), eta, seed * 100 + r).top(eta), spec, sim)
                       .percent /
                   3.0;
        res.rsr_percent[k] = rsr;
    }
    return res;
}

void end_to_end() {
    const auto start = Clock::now();
    double kappa[2] = {0.0, 0.0};
    double rsr[2] = {0.0, 0.0};
    double min_acc = 1.0;
    const int seeds = 5;
    for (int s = 1; s <= seeds; ++s) {
        const PipelineResult r = pipeline(static_cast<std::uint64_t>(s));
        min_acc = std::min(min_acc, r.accuracy);
        for (int k = 0; k < 2; ++k) {
            kappa[k] += r.kappa_percent[k] / seeds;
            rsr[k] += r.rsr_percent[k] / seeds;
        }
    }
    const double elapsed = seconds_since(start);
    char detail[220];
    std::snprintf(detail, sizeof detail,
                  "min train acc %.3f; eta=1 50%%-path %.2f vs RSR %.2f; eta=2 %.2f vs %.2f; %.1f s", min_acc,
                  kappa[0], rsr[0], kappa[1], rsr[1], elapsed);
    report("end-to-end-directional",
           min_acc >= 0.9 && kappa[0] >= rsr[0] && kappa[1] >= rsr[1] && elapsed < kEndToEndBudgetS, detail);
}

void scale() {
    const Dataset data = synth_generate(900, 14, 21);
    TrainConfig tc;
    tc.num_trees = 25;
    tc.max_depth = 5;
    tc.seed = 21;
    const Forest forest = train(data, tc);
    PerturbationSpec spec = PerturbationSpec::from_stats(forest.features(), feature_stats(data));
    spec.seed = 21;
    std::size_t row = 0;
    while (row < data.size() && predict(forest, data.rows[row]).predicted_class == 1) ++row;
    const NodeProbabilityTable table = estimate_node_probabilities(forest, data.rows[row], spec, 1, data.ids[row]);
    ProblemInstance inst;
    inst.x0 = data.rows[row];
    inst.eta = 4;
    inst.max_effort = 1;
    std::string detail;
    bool ok = true;
    for (Objective o : {Objective::max_path, Objective::kappa_path}) {
        SolverConfig c;
        c.objective = o;
        if (o == Objective::kappa_path) c.kappa_fraction = 0.5;
        c.time_limit_s = kScaleLimitS;
        const auto start = Clock::now();
        const Solution s = solve(forest, inst, &table, c);
        const double elapsed = seconds_since(start);
        const bool verified = verify_solution(forest, inst, &table, s, c).ok();
        const bool good = (s.status == SolveStatus::optimal || (s.status == SolveStatus::timeout && s.has_point())) &&
                          verified && elapsed <= kScaleLimitS + 1.0;
        ok = ok && good;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s%s %s obj %.4g, %llu nodes, %.1f s", detail.empty() ? "" : "; ",
                      to_string(o).c_str(), to_string(s.status).c_str(), s.objective,
                      static_cast<unsigned long long>(s.nodes_explored), elapsed);
        detail += buf;
    }
    report("solver-scale", ok, detail);
}

}  // namespace

int main() {
    firefighter();
    instance_suite();
    monte_carlo();
    table_arithmetic();
    end_to_end();
    scale();
    std::printf("%s\n", failures == 0 ? "ALL PASS" : (std::to_string(failures) + " FAILED").c_str());
    return failures == 0 ? 0 : 1;
}
