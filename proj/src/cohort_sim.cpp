#include "probshift/cohort_sim.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <thread>

#include "probshift/error.hpp"
#include "probshift/ranking.hpp"

namespace probshift {

namespace {

void check_cohort(const Forest& forest, const Dataset& cohort, const PerturbationSpec& spec, const SimConfig& config) {
    if (cohort.size() == 0) throw ContractError("cohort is empty");
    if (cohort.num_features() != forest.num_features()) throw InputError("cohort and forest disagree on features");
    if (config.n_reps < 1) throw ContractError("n_reps must be >= 1");
    spec.validate(forest.features());
    for (std::size_t i = 0; i < cohort.size(); ++i)
        if (predict(forest, cohort.rows[i]).predicted_class == config.target_class)
            throw ContractError("individual " + std::to_string(cohort.ids[i]) + " is already in the target class");
}

// Runs `draw` for every (individual, replication) and averages the target-class hit rate.
SimResult run(const Forest& forest, const Dataset& cohort, const SimConfig& config, std::uint64_t tag,
              const std::function<void(std::size_t, Rng&, std::vector<double>&)>& draw) {
    SimResult res;
    res.per_individual.assign(cohort.size(), 0.0);
    auto work = [&](std::size_t first, std::size_t stride) {
        std::vector<double> x(forest.num_features());
        for (std::size_t i = first; i < cohort.size(); i += stride) {
            int hits = 0;
            for (int rep = 0; rep < config.n_reps; ++rep) {
                Rng rng = make_rng({config.seed, static_cast<std::uint64_t>(cohort.ids[i]), static_cast<std::uint64_t>(rep), tag});
                draw(i, rng, x);
                if (predict(forest, x).predicted_class == config.target_class) ++hits;
            }
            res.per_individual[i] = 100.0 * hits / config.n_reps;
        }
    };
    const auto workers = static_cast<std::size_t>(std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, config.threads)), 1, cohort.size()));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    }
    double sum = 0.0;
    for (double p : res.per_individual) sum += p;
    res.percent = sum / static_cast<double>(cohort.size());
    return res;
}

}  // namespace

SimResult simulate_cohort(const Forest& forest, const Dataset& cohort, const std::vector<int>& effort_features,
                          const PerturbationSpec& spec, const SimConfig& config) {
    check_cohort(forest, cohort, spec, config);
    std::vector<int> effort(forest.num_features(), 0);
    for (int j : effort_features) {
        if (j < 0 || static_cast<std::size_t>(j) >= forest.num_features()) throw InputError("effort feature out of range");
        if (!forest.features()[static_cast<std::size_t>(j)].is_mutable)
            throw ContractError("effort feature '" + forest.features()[static_cast<std::size_t>(j)].name + "' is immutable");
        effort[static_cast<std::size_t>(j)] = 1;
    }
    return run(forest, cohort, config, 0x51Aull, [&](std::size_t i, Rng& rng, std::vector<double>& x) {
        for (const FeatureMeta& f : forest.features()) {
            const auto j = static_cast<std::size_t>(f.index);
            x[j] = perturb_value(cohort.rows[i][j], f, effort[j], spec, rng);
        }
    });
}

SimResult feasible_baseline(const Forest& forest, const Dataset& cohort, const PerturbationSpec& spec,
                            const SimConfig& config) {
    check_cohort(forest, cohort, spec, config);
    return run(forest, cohort, config, 0xBA5Eull, [&](std::size_t i, Rng& rng, std::vector<double>& x) {
        for (const FeatureMeta& f : forest.features()) {
            const auto j = static_cast<std::size_t>(f.index);
            x[j] = spec.features[j].effort_perturbable ? max_effort_value(cohort.rows[i][j], f, spec, rng)
                                                       : perturb_value(cohort.rows[i][j], f, 0, spec, rng);
        }
    });
}

double normalized_percent(double raw, double baseline) {
    if (!(baseline > 0.0)) throw ContractError("normalization needs a positive baseline");
    return raw / baseline * 100.0;
}

const SimCell* SimReport::find(const std::string& method, int eta) const {
    for (const SimCell& c : cells)
        if (c.method == method && c.eta == eta) return &c;
    return nullptr;
}

SimReport build_report(const std::vector<SimCell>& cells, const SimResult& baseline, int n_reps, std::uint64_t seed) {
    SimReport rep;
    rep.baseline = baseline;
    rep.n_reps = n_reps;
    rep.seed = seed;
    std::map<std::pair<std::string, int>, std::vector<const SimCell*>> groups;
    for (const SimCell& c : cells) {
        if (std::find(rep.methods.begin(), rep.methods.end(), c.method) == rep.methods.end()) rep.methods.push_back(c.method);
        if (std::find(rep.etas.begin(), rep.etas.end(), c.eta) == rep.etas.end()) rep.etas.push_back(c.eta);
        groups[{c.method, c.eta}].push_back(&c);
    }
    std::sort(rep.etas.begin(), rep.etas.end(), std::greater<>());
    for (const std::string& m : rep.methods)
        for (int eta : rep.etas) {
            auto it = groups.find({m, eta});
            if (it == groups.end()) continue;
            SimCell avg{m, eta, {}};
            const auto& members = it->second;
            avg.result.per_individual.assign(members.front()->result.per_individual.size(), 0.0);
            for (const SimCell* c : members) {
                if (c->result.per_individual.size() != avg.result.per_individual.size())
                    throw ContractError("cells of '" + m + "' were simulated on different cohorts");
                avg.result.percent += c->result.percent / static_cast<double>(members.size());
                for (std::size_t i = 0; i < avg.result.per_individual.size(); ++i)
                    avg.result.per_individual[i] += c->result.per_individual[i] / static_cast<double>(members.size());
            }
            rep.cells.push_back(std::move(avg));
        }
    if (!rep.has_normalized()) rep.warnings.push_back("feasible baseline is 0%; normalized table omitted");
    return rep;
}

std::string report_to_csv(const SimReport& report) {
    std::string out = "table,method";
    for (int eta : report.etas) out += ",eta=" + std::to_string(eta);
    out += ",best_eta\n";
    auto table = [&](const std::string& name, const std::function<double(double)>& f) {
        std::map<int, double> col_max;
        for (const SimCell& c : report.cells) {
            auto [it, fresh] = col_max.emplace(c.eta, f(c.result.percent));
            if (!fresh) it->second = std::max(it->second, f(c.result.percent));
        }
        for (const std::string& m : report.methods) {
            out += name + "," + m;
            std::string best;
            for (int eta : report.etas) {
                const SimCell* c = report.find(m, eta);
                out += ",";
                if (c == nullptr) continue;
                const double v = f(c->result.percent);
                out += format_double(v);
                if (v == col_max[eta]) best += (best.empty() ? "" : ";") + std::to_string(eta);
            }
            out += "," + best + "\n";
        }
    };
    table("raw", [](double v) { return v; });
    if (report.has_normalized()) table("normalized", [&](double v) { return normalized_percent(v, report.baseline.percent); });
    return out;
}

nlohmann::json report_to_json(const SimReport& report, const Dataset& cohort) {
    using nlohmann::json;
    auto detail = [&](const SimResult& r) {
        json rows = json::array();
        for (std::size_t i = 0; i < r.per_individual.size(); ++i)
            rows.push_back({{"id", i < cohort.ids.size() ? cohort.ids[i] : static_cast<int>(i)}, {"percent", r.per_individual[i]}});
        return rows;
    };
    json doc;
    doc["n_reps"] = report.n_reps;
    doc["seed"] = report.seed;
    doc["cohort_size"] = cohort.size();
    doc["baseline"] = {{"percent", report.baseline.percent}, {"per_individual", detail(report.baseline)}};
    json cells = json::array();
    for (const SimCell& c : report.cells) {
        json cell{{"method", c.method}, {"eta", c.eta}, {"percent", c.result.percent}};
        if (report.has_normalized()) cell["normalized"] = normalized_percent(c.result.percent, report.baseline.percent);
        cell["per_individual"] = detail(c.result);
        cells.push_back(std::move(cell));
    }
    doc["cells"] = std::move(cells);
    doc["warnings"] = report.warnings;
    return doc;
}

}  // namespace probshift
