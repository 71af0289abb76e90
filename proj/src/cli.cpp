#include "probshift/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include "probshift/cohort_sim.hpp"
#include "probshift/data_io.hpp"
#include "probshift/error.hpp"
#include "probshift/fixtures.hpp"
#include "probshift/forest_json.hpp"
#include "probshift/manifest.hpp"
#include "probshift/prob_model.hpp"
#include "probshift/ranking.hpp"
#include "probshift/solver.hpp"
#include "probshift/train.hpp"

namespace probshift {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int default_threads() {
    if (const char* env = std::getenv("FSHIFT_THREADS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::exception&) {
        }
    }
    return 1;
}

// Runs fn(i) for i in [0, n) on `threads` workers; rethrows the first failure.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), std::max<std::size_t>(n, 1));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr failure;
    std::mutex mu;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < n; i += workers) {
                    try {
                        fn(i);
                    } catch (...) {
                        std::lock_guard lock(mu);
                        if (!failure) failure = std::current_exception();
                        return;
                    }
                }
            });
    }
    if (failure) std::rethrow_exception(failure);
}

struct SplitFile {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    FeatureStats stats;
};

json split_to_json(const SplitFile& s, double fraction, std::uint64_t seed) {
    return {{"train_fraction", fraction}, {"seed", seed},          {"train", s.train},
            {"test", s.test},             {"sigma", s.stats.sigma}, {"majority_freq", s.stats.majority_freq}};
}

SplitFile load_split(const fs::path& path, std::size_t n_rows, std::size_t d) {
    const json doc = parse_json(read_text_file(path), path.string());
    SplitFile s;
    try {
        s.train = doc.at("train").get<std::vector<std::size_t>>();
        s.test = doc.at("test").get<std::vector<std::size_t>>();
        s.stats.sigma = doc.at("sigma").get<std::vector<double>>();
        s.stats.majority_freq = doc.at("majority_freq").get<std::vector<double>>();
    } catch (const json::exception& ex) {
        throw ParseError(path.string() + ": " + ex.what());
    }
    for (auto v : {&s.train, &s.test})
        for (std::size_t i : *v)
            if (i >= n_rows) throw ValidationError(path.string() + ": row " + std::to_string(i) + " out of range");
    if (s.stats.sigma.size() != d || s.stats.majority_freq.size() != d)
        throw ValidationError(path.string() + ": statistics do not match the feature count");
    return s;
}

void check_compatible(const Forest& forest, const Dataset& data) {
    if (forest.num_features() != data.num_features())
        throw InputError("forest has " + std::to_string(forest.num_features()) + " features, data has " +
                         std::to_string(data.num_features()));
    for (std::size_t j = 0; j < data.num_features(); ++j)
        if (forest.features()[j].name != data.features[j].name)
            throw InputError("feature " + std::to_string(j) + " is '" + forest.features()[j].name + "' in the forest and '" +
                             data.features[j].name + "' in the data");
}

std::vector<std::size_t> select_rows(const std::string& set, const SplitFile* split, std::size_t n) {
    if (set == "all" || split == nullptr) {
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        return all;
    }
    if (set == "train") return split->train;
    if (set == "test") return split->test;
    throw InputError("--set must be train, test or all");
}

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(std::stod(item));
    return out;
}

// Common bookkeeping for one subcommand invocation.
class Run {
public:
    Run(std::string command, const std::vector<std::string>& argv) {
        m_.command = std::move(command);
        m_.argv = argv;
        m_.tool_version = kToolVersion;
        start_ = std::chrono::steady_clock::now();
    }

    void input(const fs::path& p) { m_.add_input(p); }
    void output(const fs::path& p) { m_.add_output(p); }
    void seed(const std::string& name, std::uint64_t v) { m_.seeds[name] = v; }

    void record_flags(const CLI::App* app) {
        for (const CLI::Option* opt : app->get_options()) {
            const std::string name = opt->get_name(false, true);
            if (name.empty() || name == "--help" || name == "-h") continue;
            std::string key = opt->get_lnames().empty() ? name : opt->get_lnames().front();
            if (opt->count() > 0) {
                const auto& res = opt->results();
                m_.flags[key] = res.size() == 1 ? json(res.front()) : json(res);
            } else if (!opt->get_default_str().empty()) {
                m_.flags[key] = opt->get_default_str();
            }
        }
    }

    void write(const fs::path& manifest_path) {
        m_.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        write_text_file(manifest_path, manifest_to_json(m_).dump(2) + "\n");
    }

private:
    RunManifest m_;
    std::chrono::steady_clock::time_point start_;
};

void write_json(const fs::path& p, const json& doc) { write_text_file(p, doc.dump(2) + "\n"); }

// ---------------------------------------------------------------------------------------------

struct SynthOpts {
    std::size_t n = 600;
    std::size_t d = 8;
    std::uint64_t seed = 0;
    double noise = 0.05;
    std::string out;
};

int cmd_synth(const SynthOpts& o, Run& run, std::ostream& out) {
    SynthOptions so;
    so.label_noise = o.noise;
    const Dataset data = synth_generate(o.n, o.d, o.seed, so);
    const fs::path csv = o.out;
    const fs::path schema = sibling_path(csv, ".schema.json");
    write_text_file(csv, dataset_to_csv(data));
    write_json(schema, schema_to_json(schema_for(data)));
    run.seed("seed", o.seed);
    run.output(csv);
    run.output(schema);
    run.write(sibling_path(csv, ".manifest.json"));
    const auto ones = std::count(data.labels.begin(), data.labels.end(), 1);
    out << "wrote " << data.size() << " rows, " << data.num_features() << " features (" << ones << " positive) to "
        << csv.string() << "\n";
    return exit_ok;
}

struct TrainOpts {
    std::string data, schema, out;
    int trees = 25;
    int depth = 5;
    int min_split = 2;
    int mtry = 0;
    bool no_bootstrap = false;
    std::uint64_t seed = 0;
    double train_fraction = 2.0 / 3.0;
    int threads = 1;
};

int cmd_train(const TrainOpts& o, Run& run, std::ostream& out) {
    const LoadedDataset loaded = load_csv(o.data, load_schema(o.schema));
    run.input(o.data);
    run.input(o.schema);
    const Dataset& data = loaded.data;
    SplitFile split;
    const SplitIndices idx = split_indices(data.size(), o.train_fraction, o.seed);
    split.train = idx.train;
    split.test = idx.test;
    const Dataset train_set = data.subset(split.train);
    const Dataset test_set = data.subset(split.test);
    split.stats = feature_stats(train_set);

    TrainConfig cfg;
    cfg.num_trees = o.trees;
    cfg.max_depth = o.depth;
    cfg.min_samples_split = o.min_split;
    cfg.features_per_split = o.mtry;
    cfg.bootstrap = !o.no_bootstrap;
    cfg.seed = o.seed;
    cfg.threads = o.threads;
    const Forest forest = train(train_set, cfg);
    const std::vector<double> imp = impurity_importances(forest, train_set);

    const fs::path forest_path = o.out;
    const fs::path imp_path = sibling_path(forest_path, ".importances.csv");
    const fs::path split_path = sibling_path(forest_path, ".split.json");
    save_forest(forest, forest_path);
    std::string csv = "feature,importance\n";
    for (std::size_t j = 0; j < imp.size(); ++j) csv += forest.features()[j].name + "," + format_double(imp[j]) + "\n";
    write_text_file(imp_path, csv);
    write_json(split_path, split_to_json(split, o.train_fraction, o.seed));
    run.seed("seed", o.seed);
    run.output(forest_path);
    run.output(imp_path);
    run.output(split_path);
    run.write(sibling_path(forest_path, ".manifest.json"));
    char line[160];
    std::snprintf(line, sizeof line, "trained %d trees (depth <= %d): train accuracy %.4f, test accuracy %.4f\n",
                  o.trees, o.depth, accuracy(forest, train_set), test_set.size() ? accuracy(forest, test_set) : 0.0);
    out << line;
    return exit_ok;
}

struct SpecOpts {
    int samples = 1000;
    double effort_scale = 1.5;
    double effort_floor = 0.2;
    bool freeze_immutable = false;
    std::uint64_t seed = 0;
};

PerturbationSpec make_spec(const Forest& forest, const FeatureStats& stats, const SpecOpts& o) {
    PerturbationSpec spec = PerturbationSpec::from_stats(forest.features(), stats);
    spec.num_samples = o.samples;
    spec.effort_scale = o.effort_scale;
    spec.effort_floor = o.effort_floor;
    spec.seed = o.seed;
    if (o.freeze_immutable)
        for (std::size_t j = 0; j < spec.features.size(); ++j)
            if (!forest.features()[j].is_mutable) spec.features[j].no_effort_perturbable = false;
    return spec;
}

struct DataOpts {
    std::string forest, data, schema, split, set;
};

struct LoadedAll {
    Forest forest;
    Dataset data;
    std::optional<SplitFile> split;
};

LoadedAll load_all(const DataOpts& o, Run& run, std::ostream& err) {
    LoadedAll a{load_forest(o.forest), load_csv(o.data, load_schema(o.schema)).data, std::nullopt};
    run.input(o.forest);
    run.input(o.data);
    run.input(o.schema);
    check_compatible(a.forest, a.data);
    fs::path split_path = o.split.empty() ? sibling_path(o.forest, ".split.json") : fs::path(o.split);
    if (fs::exists(split_path)) {
        a.split = load_split(split_path, a.data.size(), a.data.num_features());
        run.input(split_path);
    } else if (!o.split.empty()) {
        throw InputError("split file " + split_path.string() + " not found");
    } else {
        err << "warning: no split file; statistics are computed on the whole dataset\n";
    }
    return a;
}

FeatureStats stats_of(const LoadedAll& a) { return a.split ? a.split->stats : feature_stats(a.data); }

struct ProbsOpts {
    DataOpts io;
    SpecOpts spec;
    std::string individual = "all-off-target";
    int E = 1;
    int target = 1;
    int threads = 1;
    std::string out;
};

int cmd_probs(const ProbsOpts& o, Run& run, std::ostream& out, std::ostream& err) {
    const LoadedAll a = load_all(o.io, run, err);
    const PerturbationSpec spec = make_spec(a.forest, stats_of(a), o.spec);
    std::vector<std::size_t> rows;
    if (o.individual == "all-off-target") {
        for (std::size_t i : select_rows(o.io.set, a.split ? &*a.split : nullptr, a.data.size()))
            if (predict(a.forest, a.data.rows[i]).predicted_class != o.target) rows.push_back(i);
    } else {
        const long id = std::stol(o.individual);
        if (id < 0 || static_cast<std::size_t>(id) >= a.data.size()) throw InputError("individual " + o.individual + " out of range");
        rows.push_back(static_cast<std::size_t>(id));
    }
    const fs::path dir = o.out;
    fs::create_directories(dir);
    std::vector<fs::path> paths(rows.size());
    parallel_for(rows.size(), o.threads, [&](std::size_t k) {
        const std::size_t i = rows[k];
        const int id = a.data.ids[i];
        const NodeProbabilityTable table = estimate_node_probabilities(a.forest, a.data.rows[i], spec, o.E, id);
        paths[k] = dir / ("individual_" + std::to_string(id) + ".json");
        save_table(table, a.forest, paths[k]);
    });
    run.seed("seed", o.spec.seed);
    for (const auto& p : paths) run.output(p);
    run.write(dir / "manifest.json");
    out << "wrote " << rows.size() << " probability tables to " << dir.string() << "\n";
    return exit_ok;
}

struct ShiftOpts {
    std::string forest, probs, individual, out, objective = "max";
    int eta = 1;
    int E = -1;
    int kappa = 1;
    double kappa_fraction = 0.0;
    double mu = 1e-6;
    std::string mu_direction = "at_least";
    bool strict_mu = false;
    bool positive_only = false;
    double epsilon = 1e-6;
    double time_limit = 300.0;
    std::string point_rule = "project_x0";
    std::string distance = "l1";
    std::string weights;
    bool no_pin = false;
    int target = 1;
    bool record_timing = false;
    int threads = 1;
    std::string x0;
};

SolverConfig solver_config(const ShiftOpts& o) {
    SolverConfig c;
    c.objective = parse_objective(o.objective);
    c.kappa = o.kappa;
    if (o.kappa_fraction > 0.0) c.kappa_fraction = o.kappa_fraction;
    c.mu = o.mu;
    c.mu_direction = parse_mu_direction(o.mu_direction);
    c.strict_mu = o.strict_mu;
    c.positive_leaves_only = o.positive_only;
    c.time_limit_s = o.time_limit;
    c.point_rule = parse_point_rule(o.point_rule);
    c.distance = parse_distance_norm(o.distance);
    if (!o.weights.empty()) c.distance_weights = parse_list(o.weights);
    c.respect_mutability = !o.no_pin;
    return c;
}

struct ShiftOutcome {
    SolveStatus status = SolveStatus::optimal;
    bool verified = true;
};

ShiftOutcome shift_one(const Forest& forest, const fs::path& table_path, const ShiftOpts& o, const SolverConfig& cfg,
                       const fs::path& out_path) {
    const NodeProbabilityTable table = load_table(table_path, forest);
    ProblemInstance inst;
    if (!o.x0.empty()) {
        inst.x0 = parse_list(o.x0);
    } else if (table.x0()) {
        inst.x0 = *table.x0();
    } else {
        throw InputError(table_path.string() + " carries no x0; pass --x0");
    }
    inst.target_class = o.target;
    inst.eta = o.eta;
    inst.max_effort = o.E >= 0 ? o.E : table.max_effort();
    inst.epsilon = o.epsilon;
    const Solution s = solve(forest, inst, &table, cfg);
    const Verdict v = verify_solution(forest, inst, &table, s, cfg);
    json doc = solution_to_json(s, forest, o.record_timing);
    doc["individual"] = table.individual();
    doc["verification"] = {{"ok", v.ok()}, {"failures", v.failures}};
    write_json(out_path, doc);
    return {s.status, v.ok()};
}

int exit_for(SolveStatus s) {
    switch (s) {
        case SolveStatus::optimal: return exit_ok;
        case SolveStatus::infeasible: return exit_infeasible;
        case SolveStatus::timeout: return exit_timeout;
    }
    return exit_error;
}

std::vector<fs::path> table_files(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && name.rfind("individual_", 0) == 0 && entry.path().extension() == ".json")
            files.push_back(entry.path());
    }
    // Numeric order of the individual id.
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        auto id = [](const fs::path& p) { return std::stol(p.stem().string().substr(std::string("individual_").size())); };
        return id(a) < id(b);
    });
    return files;
}

int cmd_shift(const ShiftOpts& o, Run& run, std::ostream& out, std::ostream& err) {
    const Forest forest = load_forest(o.forest);
    run.input(o.forest);
    const SolverConfig cfg = solver_config(o);
    const fs::path probs = o.probs;
    if (!fs::is_directory(probs) || !o.individual.empty()) {
        const fs::path table_path =
            fs::is_directory(probs) ? probs / ("individual_" + o.individual + ".json") : probs;
        run.input(table_path);
        const ShiftOutcome r = shift_one(forest, table_path, o, cfg, o.out);
        run.output(o.out);
        run.write(sibling_path(o.out, ".manifest.json"));
        out << to_string(r.status) << (r.verified ? "" : " (verification FAILED)") << "\n";
        if (!r.verified) {
            err << "error: solution failed verification\n";
            return exit_error;
        }
        return exit_for(r.status);
    }

    const auto files = table_files(probs);
    const fs::path dir = o.out;
    fs::create_directories(dir);
    std::vector<ShiftOutcome> results(files.size());
    std::vector<fs::path> outs(files.size());
    parallel_for(files.size(), o.threads, [&](std::size_t k) {
        outs[k] = dir / files[k].filename();
        results[k] = shift_one(forest, files[k], o, cfg, outs[k]);
    });
    std::map<std::string, int> counts;
    bool all_verified = true;
    for (const auto& r : results) {
        ++counts[to_string(r.status)];
        all_verified = all_verified && r.verified;
    }
    for (const auto& f : files) run.input(f);
    for (const auto& p : outs) run.output(p);
    run.write(dir / "manifest.json");
    out << "solved " << files.size() << " individuals:";
    for (const auto& [k, v] : counts) out << " " << k << "=" << v;
    out << "\n";
    if (!all_verified) {
        err << "error: some solutions failed verification\n";
        return exit_error;
    }
    return exit_ok;
}

struct RankOpts {
    std::string forest, solutions, importances, out;
    bool random = false;
    bool weighted = false;
    int eta = 1;
    int count = 1;
    std::uint64_t seed = 0;
};

void write_ranking(const Ranking& r, const fs::path& path, Run& run) {
    write_text_file(path, ranking_to_csv(r));
    const fs::path svg = sibling_path(path, ".svg");
    write_text_file(svg, ranking_to_svg(r));
    run.output(path);
    run.output(svg);
}

int cmd_rank(const RankOpts& o, Run& run, std::ostream& out) {
    const Forest forest = load_forest(o.forest);
    run.input(o.forest);
    const int modes = (o.solutions.empty() ? 0 : 1) + (o.importances.empty() ? 0 : 1) + (o.random ? 1 : 0);
    if (modes != 1) throw InputError("choose exactly one of --solutions, --importances, --random");
    const fs::path path = o.out;
    if (!o.solutions.empty()) {
        std::vector<Solution> sols;
        for (const auto& f : table_files(o.solutions)) {
            sols.push_back(solution_from_json(parse_json(read_text_file(f), f.string()), forest));
            run.input(f);
        }
        const Ranking r = effort_ranking(sols, forest.features(), o.eta, o.weighted);
        write_ranking(r, path, run);
        out << "ranked from " << r.cohort_size << " solutions (" << r.excluded << " excluded)\n";
    } else if (!o.importances.empty()) {
        const std::string text = read_text_file(o.importances);
        run.input(o.importances);
        std::vector<double> imp(forest.num_features(), 0.0);
        std::vector<bool> seen(forest.num_features(), false);
        std::istringstream in(text);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            const auto cells = split_csv_line(line);
            if (cells.size() != 2) throw ParseError("importances CSV: expected feature,importance");
            bool found = false;
            for (const FeatureMeta& f : forest.features())
                if (f.name == cells[0]) {
                    imp[static_cast<std::size_t>(f.index)] = std::stod(cells[1]);
                    seen[static_cast<std::size_t>(f.index)] = true;
                    found = true;
                }
            if (!found) throw ParseError("importances CSV: unknown feature '" + cells[0] + "'");
        }
        if (std::find(seen.begin(), seen.end(), false) != seen.end())
            throw ParseError("importances CSV does not cover every feature");
        write_ranking(rfr_ranking(imp, forest.features(), o.eta), path, run);
    } else {
        if (o.count < 1) throw InputError("--count must be >= 1");
        for (int i = 0; i < o.count; ++i) {
            const std::uint64_t seed = o.seed + static_cast<std::uint64_t>(i);
            const fs::path p = o.count == 1 ? path : sibling_path(path, "_" + std::to_string(i + 1) + path.extension().string());
            write_ranking(rsr_ranking(forest.features(), o.eta, seed), p, run);
        }
        run.seed("seed", o.seed);
    }
    run.write(sibling_path(path, ".manifest.json"));
    return exit_ok;
}

struct SimulateOpts {
    DataOpts io;
    SpecOpts spec;
    std::vector<std::string> rankings;
    std::string etas = "1,2,3,4";
    int reps = 100;
    int target = 1;
    bool baseline_only = false;
    int threads = 1;
    std::string out;
};

struct RankingArg {
    std::string label;
    std::optional<int> eta;
    fs::path path;
};

RankingArg parse_ranking_arg(const std::string& s) {
    RankingArg r;
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
        r.path = s;
        r.label = r.path.stem().string();
        return r;
    }
    std::string label = s.substr(0, eq);
    r.path = s.substr(eq + 1);
    const auto at = label.find('@');
    if (at != std::string::npos) {
        r.eta = std::stoi(label.substr(at + 1));
        label = label.substr(0, at);
    }
    r.label = label;
    return r;
}

int cmd_simulate(const SimulateOpts& o, Run& run, std::ostream& out, std::ostream& err) {
    const LoadedAll a = load_all(o.io, run, err);
    PerturbationSpec spec = make_spec(a.forest, stats_of(a), o.spec);
    std::vector<std::size_t> rows;
    for (std::size_t i : select_rows(o.io.set, a.split ? &*a.split : nullptr, a.data.size()))
        if (predict(a.forest, a.data.rows[i]).predicted_class != o.target) rows.push_back(i);
    if (rows.empty()) throw InputError("no off-target individuals in the selected set");
    const Dataset cohort = a.data.subset(rows);
    SimConfig sc;
    sc.n_reps = o.reps;
    sc.seed = o.spec.seed;
    sc.target_class = o.target;
    sc.threads = o.threads;
    const SimResult baseline = feasible_baseline(a.forest, cohort, spec, sc);

    std::vector<SimCell> cells;
    if (!o.baseline_only) {
        std::vector<RankingArg> args;
        for (const auto& s : o.rankings) args.push_back(parse_ranking_arg(s));
        if (args.empty()) throw InputError("pass at least one --ranking (or --baseline)");
        std::vector<int> etas;
        for (double v : parse_list(o.etas)) etas.push_back(static_cast<int>(v));
        std::map<fs::path, Ranking> loaded;
        for (const auto& r : args) {
            loaded.emplace(r.path, ranking_from_csv(read_text_file(r.path), a.forest.features()));
            run.input(r.path);
        }
        std::vector<std::string> labels;
        for (const auto& r : args)
            if (std::find(labels.begin(), labels.end(), r.label) == labels.end()) labels.push_back(r.label);
        for (const std::string& label : labels)
            for (int eta : etas) {
                std::vector<const RankingArg*> chosen;
                for (const auto& r : args)
                    if (r.label == label && r.eta == eta) chosen.push_back(&r);
                if (chosen.empty())
                    for (const auto& r : args)
                        if (r.label == label && !r.eta) chosen.push_back(&r);
                for (const RankingArg* r : chosen)
                    cells.push_back({label, eta, simulate_cohort(a.forest, cohort, loaded.at(r->path).top(eta), spec, sc)});
            }
    }
    const SimReport report = build_report(cells, baseline, o.reps, o.spec.seed);
    for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    const fs::path csv = o.out;
    const fs::path detail = sibling_path(csv, ".json");
    if (o.baseline_only) {
        write_text_file(csv, "table,percent\nbaseline," + format_double(baseline.percent) + "\n");
    } else {
        write_text_file(csv, report_to_csv(report));
    }
    write_json(detail, report_to_json(report, cohort));
    run.seed("seed", o.spec.seed);
    run.output(csv);
    run.output(detail);
    run.write(sibling_path(csv, ".manifest.json"));
    char line[128];
    std::snprintf(line, sizeof line, "cohort %zu, feasible baseline %.2f%%\n", cohort.size(), baseline.percent);
    out << line;
    return exit_ok;
}

int cmd_demo(std::ostream& out) {
    const FirefighterFixture ff = firefighter_fixture();
    SolverConfig cfg;
    auto effort_on = [](std::size_t j) {
        EffortAllocation a{std::vector<int>(2, 0)};
        a.e[j] = 1;
        return a;
    };
    auto line = [&](const char* model, const char* effort, double v) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%-9s effort=%s  %.2f\n", model, effort, v);
        out << buf;
    };
    auto name_of = [&](const Solution& s) { return s.effort.e[0] ? "S" : s.effort.e[1] ? "A" : "-"; };
    const Solution mx = solve_max_path(ff.forest, ff.instance, ff.table, cfg);
    line("max-path", name_of(mx), mx.objective);
    line("max-path", "S", solve_with_effort(ff.forest, ff.instance, ff.table, cfg, effort_on(0)).objective);
    const Solution mn = solve_min_path(ff.forest, ff.instance, ff.table, cfg);
    line("min-path", name_of(mn), mn.objective);
    cfg.objective = Objective::min_path;
    line("min-path", "S", solve_with_effort(ff.forest, ff.instance, ff.table, cfg, effort_on(0)).objective);
    return exit_ok;
}

int cmd_replay(const std::string& manifest_path, std::ostream& out, std::ostream& err) {
    const RunManifest m = manifest_from_json(parse_json(read_text_file(manifest_path), manifest_path));
    for (const FileDigest& in : m.inputs) {
        if (!fs::exists(in.path) || sha256_file(in.path) != in.sha256) {
            err << "error: input " << in.path << " differs from the recorded digest\n";
            return exit_error;
        }
    }
    std::ostringstream sink;
    const int code = run_cli(m.argv, sink, err);
    bool same = true;
    for (const FileDigest& o : m.outputs) {
        const bool ok = fs::exists(o.path) && sha256_file(o.path) == o.sha256;
        out << (ok ? "identical " : "DIFFERENT ") << o.path << "\n";
        same = same && ok;
    }
    if (!same) return exit_error;
    return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Probabilistic feature shifts on tree ensembles", "probshift"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);
    const int env_threads = default_threads();

    SynthOpts synth;
    auto* s_synth = app.add_subcommand("synth", "Generate a synthetic dataset and its schema");
    s_synth->add_option("--n", synth.n, "Rows")->capture_default_str();
    s_synth->add_option("--d", synth.d, "Features")->capture_default_str();
    s_synth->add_option("--seed", synth.seed)->capture_default_str();
    s_synth->add_option("--noise", synth.noise, "Label noise rate")->capture_default_str();
    s_synth->add_option("-o,--out", synth.out, "CSV path (schema written next to it)")->required();

    TrainOpts tr;
    tr.threads = env_threads;
    auto* s_train = app.add_subcommand("train", "Train a random forest");
    s_train->add_option("--data", tr.data)->required();
    s_train->add_option("--schema", tr.schema)->required();
    s_train->add_option("--trees", tr.trees)->capture_default_str();
    s_train->add_option("--depth", tr.depth)->capture_default_str();
    s_train->add_option("--min-split", tr.min_split)->capture_default_str();
    s_train->add_option("--mtry", tr.mtry, "Features per split (0 = ceil(sqrt(d)))")->capture_default_str();
    s_train->add_flag("--no-bootstrap", tr.no_bootstrap);
    s_train->add_option("--seed", tr.seed)->capture_default_str();
    s_train->add_option("--train-fraction", tr.train_fraction)->capture_default_str();
    s_train->add_option("--threads", tr.threads)->capture_default_str();
    s_train->add_option("-o,--out", tr.out, "Forest JSON path")->required();

    auto add_io = [](CLI::App* s, DataOpts& io, const std::string& default_set) {
        io.set = default_set;
        s->add_option("--forest", io.forest)->required();
        s->add_option("--data", io.data)->required();
        s->add_option("--schema", io.schema)->required();
        s->add_option("--split", io.split, "Split file (default: <forest>.split.json)");
        s->add_option("--set", io.set, "train, test or all")->capture_default_str();
    };
    auto add_spec = [](CLI::App* s, SpecOpts& sp) {
        s->add_option("--samples", sp.samples, "Monte-Carlo samples per node")->capture_default_str();
        s->add_option("--effort-scale", sp.effort_scale)->capture_default_str();
        s->add_option("--effort-floor", sp.effort_floor)->capture_default_str();
        s->add_flag("--freeze-immutable", sp.freeze_immutable, "Do not perturb immutable features");
        s->add_option("--seed", sp.seed)->capture_default_str();
    };

    ProbsOpts pr;
    pr.threads = env_threads;
    auto* s_probs = app.add_subcommand("probs", "Estimate node probability tables");
    add_io(s_probs, pr.io, "train");
    add_spec(s_probs, pr.spec);
    s_probs->add_option("--individual", pr.individual, "Row id or all-off-target")->capture_default_str();
    s_probs->add_option("--E", pr.E, "Effort levels per feature")->capture_default_str();
    s_probs->add_option("--target", pr.target)->capture_default_str();
    s_probs->add_option("--threads", pr.threads)->capture_default_str();
    s_probs->add_option("-o,--out", pr.out, "Output directory")->required();

    ShiftOpts sh;
    sh.threads = env_threads;
    auto* s_shift = app.add_subcommand("shift", "Solve for an optimal feature shift");
    s_shift->add_option("--forest", sh.forest)->required();
    s_shift->add_option("--probs", sh.probs, "Table file or directory")->required();
    s_shift->add_option("--individual", sh.individual, "Row id inside a table directory");
    s_shift->add_option("--objective", sh.objective, "max, min, kappa or distance")->capture_default_str();
    s_shift->add_option("--eta", sh.eta)->capture_default_str();
    s_shift->add_option("--E", sh.E, "Effort units per feature (default: table E)");
    s_shift->add_option("--kappa", sh.kappa)->capture_default_str();
    s_shift->add_option("--kappa-fraction", sh.kappa_fraction, "Per-tree kappa as a fraction of the leaves");
    s_shift->add_option("--mu", sh.mu)->capture_default_str();
    s_shift->add_option("--mu-direction", sh.mu_direction)->capture_default_str();
    s_shift->add_flag("--strict-mu", sh.strict_mu);
    s_shift->add_flag("--positive-leaves-only", sh.positive_only);
    s_shift->add_option("--epsilon", sh.epsilon)->capture_default_str();
    s_shift->add_option("--time-limit", sh.time_limit, "Seconds, 0 = none")->capture_default_str();
    s_shift->add_option("--point-rule", sh.point_rule)->capture_default_str();
    s_shift->add_option("--distance", sh.distance, "l1, l2 or linf")->capture_default_str();
    s_shift->add_option("--weights", sh.weights, "Comma-separated distance weights");
    s_shift->add_flag("--no-pin-immutable", sh.no_pin, "Let min_distance move immutable features");
    s_shift->add_option("--target", sh.target)->capture_default_str();
    s_shift->add_option("--x0", sh.x0, "Comma-separated point overriding the table's x0");
    s_shift->add_flag("--record-timing", sh.record_timing, "Write wall time into the solution");
    s_shift->add_option("--threads", sh.threads)->capture_default_str();
    s_shift->add_option("-o,--out", sh.out, "Solution file or directory")->required();

    RankOpts rk;
    auto* s_rank = app.add_subcommand("rank", "Build a feature ranking");
    s_rank->add_option("--forest", rk.forest)->required();
    s_rank->add_option("--solutions", rk.solutions, "Directory of solutions");
    s_rank->add_option("--importances", rk.importances, "Importances CSV from train");
    s_rank->add_flag("--random", rk.random);
    s_rank->add_flag("--weighted", rk.weighted, "Score by effort units instead of counts");
    s_rank->add_option("--eta", rk.eta)->capture_default_str();
    s_rank->add_option("--count", rk.count, "Number of random rankings")->capture_default_str();
    s_rank->add_option("--seed", rk.seed)->capture_default_str();
    s_rank->add_option("-o,--out", rk.out, "Ranking CSV (SVG written next to it)")->required();

    SimulateOpts sim;
    sim.threads = env_threads;
    auto* s_sim = app.add_subcommand("simulate", "Simulate reclassification under rankings");
    add_io(s_sim, sim.io, "test");
    add_spec(s_sim, sim.spec);
    s_sim->add_option("--ranking", sim.rankings, "label[@eta]=path, repeatable");
    s_sim->add_option("--eta", sim.etas, "Comma-separated eta values")->capture_default_str();
    s_sim->add_option("--reps", sim.reps)->capture_default_str();
    s_sim->add_option("--target", sim.target)->capture_default_str();
    s_sim->add_flag("--baseline", sim.baseline_only, "Only the feasible-to-change baseline");
    s_sim->add_option("--threads", sim.threads)->capture_default_str();
    s_sim->add_option("-o,--out", sim.out, "Report CSV (JSON detail written next to it)")->required();

    std::string demo_name;
    auto* s_demo = app.add_subcommand("demo", "Built-in examples");
    s_demo->add_option("name", demo_name, "firefighter")->required()->check(CLI::IsMember({"firefighter"}));

    std::string manifest_path;
    auto* s_replay = app.add_subcommand("replay", "Re-run a manifest and compare outputs");
    s_replay->add_option("--manifest", manifest_path)->required();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return exit_ok;
    } catch (const CLI::CallForVersion&) {
        out << kToolVersion << "\n";
        return exit_ok;
    } catch (const CLI::ParseError& e) {
        for (auto* sub : app.get_subcommands())
            if (sub->parsed()) {
                err << "error: " << e.what() << "\n" << sub->help();
                return exit_error;
            }
        err << "error: " << e.what() << "\n" << app.help();
        return exit_error;
    }

    try {
        CLI::App* sub = app.get_subcommands().front();
        Run run(sub->get_name(), args);
        run.record_flags(sub);
        if (sub == s_synth) return cmd_synth(synth, run, out);
        if (sub == s_train) return cmd_train(tr, run, out);
        if (sub == s_probs) return cmd_probs(pr, run, out, err);
        if (sub == s_shift) return cmd_shift(sh, run, out, err);
        if (sub == s_rank) return cmd_rank(rk, run, out);
        if (sub == s_sim) return cmd_simulate(sim, run, out, err);
        if (sub == s_demo) return cmd_demo(out);
        if (sub == s_replay) return cmd_replay(manifest_path, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_error;
    }
    return exit_error;
}

}  // namespace probshift
