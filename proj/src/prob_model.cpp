#include "probshift/prob_model.hpp"

#include <algorithm>
#include <cmath>

#include "probshift/error.hpp"
#include "probshift/forest_json.hpp"

namespace probshift {

using nlohmann::json;

Rng make_rng(std::initializer_list<std::uint64_t> keys) {
    std::vector<std::uint32_t> words;
    words.reserve(keys.size() * 2);
    for (std::uint64_t k : keys) {
        words.push_back(static_cast<std::uint32_t>(k));
        words.push_back(static_cast<std::uint32_t>(k >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

PerturbationSpec PerturbationSpec::from_stats(const std::vector<FeatureMeta>& metas, const FeatureStats& stats) {
    if (stats.sigma.size() != metas.size() || stats.majority_freq.size() != metas.size())
        throw InputError("feature statistics do not match the feature list");
    PerturbationSpec spec;
    for (std::size_t j = 0; j < metas.size(); ++j) {
        FeaturePerturbation fp;
        fp.sigma = stats.sigma[j];
        fp.majority_freq = std::clamp(stats.majority_freq[j], 0.5, 1.0);
        const bool degenerate = metas[j].kind == FeatureKind::continuous && !(fp.sigma > 0.0);
        fp.no_effort_perturbable = !degenerate;
        fp.effort_perturbable = metas[j].is_mutable && !degenerate;
        spec.features.push_back(fp);
    }
    return spec;
}

void PerturbationSpec::validate(const std::vector<FeatureMeta>& metas) const {
    if (features.size() != metas.size()) throw ContractError("perturbation spec does not cover every feature");
    if (num_samples < 1) throw ContractError("num_samples must be >= 1");
    if (!(effort_scale >= 0.0)) throw ContractError("effort_scale must be nonnegative");
    if (!(effort_floor >= 0.0 && effort_floor <= 1.0)) throw ContractError("effort_floor must lie in [0,1]");
    for (std::size_t j = 0; j < features.size(); ++j) {
        const FeaturePerturbation& fp = features[j];
        const bool perturbable = fp.no_effort_perturbable || fp.effort_perturbable;
        if (metas[j].kind == FeatureKind::continuous && perturbable && !(fp.sigma > 0.0))
            throw ContractError("feature " + std::to_string(j) + ": sigma must be positive");
        if (metas[j].kind == FeatureKind::binary && !(fp.majority_freq >= 0.5 && fp.majority_freq <= 1.0))
            throw ContractError("feature " + std::to_string(j) + ": majority frequency must lie in [0.5,1]");
        if (fp.effort_perturbable && metas[j].beneficial == Direction::none)
            throw ContractError("feature " + std::to_string(j) + ": effort needs a beneficial direction");
    }
}

double PerturbationSpec::effort_multiplier(int effort) const {
    return 1.0 + (effort_scale - 1.0) * static_cast<double>(effort);
}

double PerturbationSpec::effort_flip_probability(std::size_t feature, int effort) const {
    const double p = features.at(feature).majority_freq;
    return std::max(1.0 - p, std::min(1.0, effort_floor * static_cast<double>(effort)));
}

namespace {

double clamp_to(const FeatureMeta& meta, double v) { return std::clamp(v, meta.lo, meta.hi); }

double beneficial_binary_value(const FeatureMeta& meta) { return meta.beneficial == Direction::to_one ? 1.0 : 0.0; }

double effort_binary(double x0, const FeatureMeta& meta, const PerturbationSpec& spec, int effort, Rng& rng) {
    const double good = beneficial_binary_value(meta);
    if (x0 == good) return x0;
    std::bernoulli_distribution flip(spec.effort_flip_probability(static_cast<std::size_t>(meta.index), effort));
    return flip(rng) ? good : x0;
}

}  // namespace

double perturb_value(double x0, const FeatureMeta& meta, int effort, const PerturbationSpec& spec, Rng& rng) {
    if (effort < 0) throw ContractError("effort units must be nonnegative");
    const FeaturePerturbation& fp = spec.features.at(static_cast<std::size_t>(meta.index));
    if (effort > 0 && !fp.effort_perturbable)
        throw ContractError("feature " + std::to_string(meta.index) + " does not accept effort");
    if (effort == 0 && !fp.no_effort_perturbable) return x0;

    if (meta.kind == FeatureKind::continuous) {
        if (effort == 0) {
            std::bernoulli_distribution up(0.5);
            const double sign = up(rng) ? 1.0 : -1.0;
            std::uniform_real_distribution<double> delta(0.0, fp.sigma);
            return clamp_to(meta, x0 + sign * delta(rng));
        }
        std::uniform_real_distribution<double> delta(0.0, spec.effort_multiplier(effort) * fp.sigma);
        return clamp_to(meta, x0 + direction_sign(meta.beneficial) * delta(rng));
    }

    if (effort == 0) {
        std::bernoulli_distribution flip(1.0 - fp.majority_freq);
        return flip(rng) ? 1.0 - x0 : x0;
    }
    return effort_binary(x0, meta, spec, effort, rng);
}

double max_effort_value(double x0, const FeatureMeta& meta, const PerturbationSpec& spec, Rng& rng) {
    const FeaturePerturbation& fp = spec.features.at(static_cast<std::size_t>(meta.index));
    if (!fp.effort_perturbable) throw ContractError("feature " + std::to_string(meta.index) + " does not accept effort");
    if (meta.kind == FeatureKind::continuous)
        return clamp_to(meta, x0 + direction_sign(meta.beneficial) * spec.effort_multiplier(1) * fp.sigma);
    return effort_binary(x0, meta, spec, 1, rng);
}

NodeProbabilityTable::NodeProbabilityTable(int individual, int max_effort,
                                           std::vector<std::vector<std::vector<double>>> right,
                                           std::optional<std::vector<double>> x0)
    : individual_(individual), max_effort_(max_effort), right_(std::move(right)), x0_(std::move(x0)) {
    if (max_effort < 0) throw ContractError("E must be nonnegative");
}

void NodeProbabilityTable::validate(const Forest& forest) const {
    if (right_.size() != forest.size())
        throw ValidationError("probability table has " + std::to_string(right_.size()) + " trees, forest has " +
                              std::to_string(forest.size()));
    for (std::size_t r = 0; r < forest.size(); ++r) {
        const Tree& t = forest.tree(r);
        if (right_[r].size() != t.nodes().size())
            throw ValidationError("probability table tree " + std::to_string(r) + " covers " +
                                  std::to_string(right_[r].size()) + " of " + std::to_string(t.nodes().size()) + " nodes");
        for (std::size_t k = 0; k < t.nodes().size(); ++k) {
            const std::string where = "probability table tree " + std::to_string(r) + " node " + std::to_string(t.nodes()[k].id);
            const auto& row = right_[r][k];
            if (row.size() != static_cast<std::size_t>(max_effort_) + 1)
                throw ValidationError(where + ": expected " + std::to_string(max_effort_ + 1) + " effort levels");
            for (double p : row)
                if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(where + ": probability " + std::to_string(p) + " outside [0,1]");
            const auto feature = static_cast<std::size_t>(t.nodes()[k].feature);
            if (!forest.features()[feature].is_mutable && std::any_of(row.begin(), row.end(), [&](double p) { return p != row[0]; }))
                throw ValidationError(where + ": immutable feature row varies with effort");
        }
    }
    if (x0_) forest.check_point(*x0_);
}

NodeProbabilityTable estimate_node_probabilities(const Forest& forest, std::span<const double> x0,
                                                 const PerturbationSpec& spec, int max_effort, int individual) {
    forest.check_point(x0);
    spec.validate(forest.features());
    if (max_effort < 0) throw ContractError("E must be nonnegative");
    const std::size_t d = forest.num_features();
    const auto levels = static_cast<std::size_t>(max_effort) + 1;
    const auto n_s = static_cast<std::size_t>(spec.num_samples);

    // Which (feature, effort) sample sets are needed.
    std::vector<bool> used(d, false);
    for (const Tree& t : forest.trees())
        for (const Node& n : t.nodes()) used[static_cast<std::size_t>(n.feature)] = true;

    // samples[j][e] sorted ascending, so a node count is one binary search.
    std::vector<std::vector<std::vector<double>>> samples(d);
    for (std::size_t j = 0; j < d; ++j) {
        if (!used[j]) continue;
        const FeatureMeta& meta = forest.features()[j];
        samples[j].resize(levels);
        for (std::size_t e = 0; e < levels; ++e) {
            auto& draw = samples[j][e];
            if (e > 0 && !spec.features[j].effort_perturbable) {
                draw = samples[j][0];
                continue;
            }
            Rng rng = make_rng({spec.seed, static_cast<std::uint64_t>(individual), j, e, 0xB7A1ull});
            draw.resize(n_s);
            for (double& v : draw) v = perturb_value(x0[j], meta, static_cast<int>(e), spec, rng);
            std::sort(draw.begin(), draw.end());
        }
    }

    std::vector<std::vector<std::vector<double>>> right(forest.size());
    for (std::size_t r = 0; r < forest.size(); ++r) {
        const Tree& t = forest.tree(r);
        right[r].resize(t.nodes().size());
        for (std::size_t k = 0; k < t.nodes().size(); ++k) {
            const Node& n = t.nodes()[k];
            auto& row = right[r][k];
            row.resize(levels);
            for (std::size_t e = 0; e < levels; ++e) {
                const auto& draw = samples[static_cast<std::size_t>(n.feature)][e];
                const auto below = std::lower_bound(draw.begin(), draw.end(), n.threshold) - draw.begin();
                row[e] = static_cast<double>(n_s - static_cast<std::size_t>(below)) / static_cast<double>(n_s);
            }
        }
    }
    return NodeProbabilityTable(individual, max_effort, std::move(right), std::vector<double>(x0.begin(), x0.end()));
}

json table_to_json(const NodeProbabilityTable& table, const Forest& forest) {
    json entries = json::array();
    for (std::size_t r = 0; r < forest.size(); ++r) {
        const Tree& t = forest.tree(r);
        for (std::size_t k = 0; k < t.nodes().size(); ++k)
            entries.push_back({{"tree", r}, {"node", t.nodes()[k].id}, {"right", table.row(r, k)}});
    }
    json doc{{"individual", table.individual()}, {"E", table.max_effort()}, {"entries", std::move(entries)}};
    if (table.x0()) doc["x0"] = *table.x0();
    return doc;
}

NodeProbabilityTable table_from_json(const json& doc, const Forest& forest) {
    if (!doc.is_object() || !doc.contains("E") || !doc.contains("entries"))
        throw ParseError("probability table: expected object with 'E' and 'entries'");
    int individual = 0;
    int max_effort = 0;
    std::vector<std::vector<std::vector<double>>> right(forest.size());
    std::vector<std::vector<bool>> seen(forest.size());
    for (std::size_t r = 0; r < forest.size(); ++r) {
        right[r].resize(forest.tree(r).nodes().size());
        seen[r].assign(forest.tree(r).nodes().size(), false);
    }
    std::optional<std::vector<double>> x0;
    try {
        individual = doc.value("individual", 0);
        max_effort = doc.at("E").get<int>();
        if (doc.contains("x0")) x0 = doc.at("x0").get<std::vector<double>>();
        for (const json& e : doc.at("entries")) {
            const auto r = e.at("tree").get<std::size_t>();
            if (r >= forest.size()) throw ValidationError("probability table: tree " + std::to_string(r) + " out of range");
            const int node_id = e.at("node").get<int>();
            int k = 0;
            try {
                k = forest.tree(r).node_index(node_id);
            } catch (const InputError&) {
                throw ValidationError("probability table: tree " + std::to_string(r) + " has no node " + std::to_string(node_id));
            }
            if (seen[r][static_cast<std::size_t>(k)])
                throw ValidationError("probability table: duplicate entry for tree " + std::to_string(r) + " node " +
                                      std::to_string(node_id));
            seen[r][static_cast<std::size_t>(k)] = true;
            right[r][static_cast<std::size_t>(k)] = e.at("right").get<std::vector<double>>();
        }
    } catch (const json::exception& ex) {
        throw ParseError(std::string("probability table: ") + ex.what());
    }
    for (std::size_t r = 0; r < forest.size(); ++r)
        for (std::size_t k = 0; k < seen[r].size(); ++k)
            if (!seen[r][k])
                throw ValidationError("probability table: missing entry for tree " + std::to_string(r) + " node " +
                                      std::to_string(forest.tree(r).nodes()[k].id));
    NodeProbabilityTable table(individual, max_effort, std::move(right), std::move(x0));
    table.validate(forest);
    return table;
}

NodeProbabilityTable load_table(const std::filesystem::path& path, const Forest& forest) {
    return table_from_json(parse_json(read_text_file(path), path.string()), forest);
}

void save_table(const NodeProbabilityTable& table, const Forest& forest, const std::filesystem::path& path) {
    write_text_file(path, table_to_json(table, forest).dump(1) + "\n");
}

}  // namespace probshift
