#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "probshift/data_io.hpp"
#include "probshift/forest.hpp"
#include "probshift/prob_model.hpp"

namespace probshift {

struct SimConfig {
    int n_reps = 100;
    std::uint64_t seed = 0;
    int target_class = 1;
    int threads = 1;
};

struct SimResult {
    double percent = 0.0;               // mean over individuals of the per-individual rate, in %
    std::vector<double> per_individual;  // in %, aligned with the cohort rows
};

/// Each replication perturbs every feature once: one effort unit on `effort_features`, none
/// elsewhere. Streams are keyed by (seed, individual id, replication), so the result does not
/// depend on row order or thread count.
SimResult simulate_cohort(const Forest& forest, const Dataset& cohort, const std::vector<int>& effort_features,
                          const PerturbationSpec& spec, const SimConfig& config);

/// Upper-bound run: continuous mutable features move the full effort_multiplier(1) * sigma in
/// their beneficial direction, binary mutable ones follow the one-unit effort rule, the rest get
/// the no-effort perturbation.
SimResult feasible_baseline(const Forest& forest, const Dataset& cohort, const PerturbationSpec& spec,
                            const SimConfig& config);

/// raw / baseline * 100.
double normalized_percent(double raw, double baseline);

struct SimCell {
    std::string method;
    int eta = 0;
    SimResult result;
};

struct SimReport {
    std::vector<std::string> methods;  // row order
    std::vector<int> etas;             // descending
    std::vector<SimCell> cells;
    SimResult baseline;
    int n_reps = 0;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    bool has_normalized() const { return baseline.percent > 0.0; }
    const SimCell* find(const std::string& method, int eta) const;
};

/// Collects cells into method x eta tables. Several cells with the same (method, eta) are
/// averaged, which is how repeated random rankings are combined.
SimReport build_report(const std::vector<SimCell>& cells, const SimResult& baseline, int n_reps, std::uint64_t seed);

/// Rows `table,method,eta=...,best_eta`; `best_eta` lists the eta columns where the row holds
/// the maximum. Normalized rows are omitted when the baseline is zero.
std::string report_to_csv(const SimReport& report);
nlohmann::json report_to_json(const SimReport& report, const Dataset& cohort);

}  // namespace probshift
