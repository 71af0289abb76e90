#include "probshift/ranking.hpp"

#include <algorithm>
#include <charconv>
#include <numeric>
#include <sstream>

#include "probshift/data_io.hpp"
#include "probshift/error.hpp"
#include "probshift/prob_model.hpp"

namespace probshift {

namespace {

std::vector<int> mutable_features(const std::vector<FeatureMeta>& features) {
    std::vector<int> out;
    for (const FeatureMeta& f : features)
        if (f.is_mutable) out.push_back(f.index);
    return out;
}

void require_mutables(const std::vector<FeatureMeta>& features, int eta) {
    if (eta < 0) throw ContractError("eta must be nonnegative");
    const auto n = mutable_features(features).size();
    if (n < static_cast<std::size_t>(eta))
        throw ContractError("eta=" + std::to_string(eta) + " exceeds the " + std::to_string(n) + " mutable features");
}

Ranking finish(std::string method, const std::vector<FeatureMeta>& features, std::vector<std::pair<int, double>> scored,
               int eta) {
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    Ranking r;
    r.method = std::move(method);
    r.eta = eta;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        const auto& [j, s] = scored[i];
        r.features.push_back({j, features[static_cast<std::size_t>(j)].name, s, static_cast<int>(i) + 1});
    }
    return r;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

std::vector<int> Ranking::top(int n) const {
    if (n < 0 || static_cast<std::size_t>(n) > features.size())
        throw ContractError("ranking '" + method + "' has " + std::to_string(features.size()) + " features, " +
                            std::to_string(n) + " requested");
    std::vector<int> out;
    for (int i = 0; i < n; ++i) out.push_back(features[static_cast<std::size_t>(i)].index);
    return out;
}

Ranking effort_ranking(std::span<const Solution> solutions, const std::vector<FeatureMeta>& features, int eta,
                       bool weighted) {
    std::vector<double> score(features.size(), 0.0);
    std::size_t used = 0;
    std::size_t excluded = 0;
    for (const Solution& s : solutions) {
        if (s.status != SolveStatus::optimal) {
            ++excluded;
            continue;
        }
        if (s.effort.e.size() != features.size()) throw InputError("solution effort vector has the wrong length");
        ++used;
        for (std::size_t j = 0; j < features.size(); ++j)
            if (s.effort.e[j] > 0) score[j] += weighted ? s.effort.e[j] : 1.0;
    }
    if (used == 0) throw ContractError("no optimal solution to rank from (" + std::to_string(excluded) + " excluded)");
    std::vector<std::pair<int, double>> scored;
    for (int j : mutable_features(features)) scored.emplace_back(j, score[static_cast<std::size_t>(j)]);
    Ranking r = finish(weighted ? "effort_weighted" : "effort", features, std::move(scored), eta);
    r.cohort_size = used;
    r.excluded = excluded;
    return r;
}

Ranking rfr_ranking(std::span<const double> importances, const std::vector<FeatureMeta>& features, int eta) {
    if (importances.size() != features.size()) throw InputError("one importance per feature expected");
    require_mutables(features, eta);
    std::vector<std::pair<int, double>> scored;
    for (int j : mutable_features(features)) scored.emplace_back(j, importances[static_cast<std::size_t>(j)]);
    return finish("rfr", features, std::move(scored), eta);
}

Ranking rsr_ranking(const std::vector<FeatureMeta>& features, int eta, std::uint64_t seed) {
    require_mutables(features, eta);
    std::vector<int> pool = mutable_features(features);
    Rng rng = make_rng({seed, 0x25Bull});
    // Partial Fisher-Yates: the first eta entries are the sample.
    for (std::size_t i = 0; i < static_cast<std::size_t>(eta); ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    std::vector<std::pair<int, double>> scored;
    for (std::size_t i = 0; i < pool.size(); ++i) scored.emplace_back(pool[i], i < static_cast<std::size_t>(eta) ? 1.0 : 0.0);
    return finish("rsr", features, std::move(scored), eta);
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string ranking_to_csv(const Ranking& ranking) {
    std::string out = "feature,score,rank\n";
    for (const RankedFeature& f : ranking.features)
        out += f.name + "," + format_double(f.score) + "," + std::to_string(f.rank) + "\n";
    return out;
}

Ranking ranking_from_csv(const std::string& text, const std::vector<FeatureMeta>& features) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError("ranking CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (split_csv_line(line) != std::vector<std::string>{"feature", "score", "rank"})
        throw ParseError("ranking CSV header must be feature,score,rank");
    Ranking r;
    r.method = "file";
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 3) throw ParseError("ranking CSV line " + std::to_string(lineno) + ": expected 3 fields");
        auto it = std::find_if(features.begin(), features.end(), [&](const FeatureMeta& f) { return f.name == cells[0]; });
        if (it == features.end()) throw ParseError("ranking CSV line " + std::to_string(lineno) + ": unknown feature '" + cells[0] + "'");
        if (!it->is_mutable) throw ValidationError("ranking lists immutable feature '" + cells[0] + "'");
        RankedFeature f{it->index, it->name, 0.0, 0};
        try {
            f.score = std::stod(cells[1]);
            f.rank = std::stoi(cells[2]);
        } catch (const std::exception&) {
            throw ParseError("ranking CSV line " + std::to_string(lineno) + ": bad number");
        }
        r.features.push_back(std::move(f));
    }
    std::stable_sort(r.features.begin(), r.features.end(), [](const auto& a, const auto& b) { return a.rank < b.rank; });
    return r;
}

std::string ranking_to_svg(const Ranking& ranking) {
    const int bar_h = 22;
    const int label_w = 140;
    const int plot_w = 360;
    const int top = 30;
    const int height = top + bar_h * static_cast<int>(ranking.features.size()) + 20;
    double max_score = 0.0;
    for (const auto& f : ranking.features) max_score = std::max(max_score, f.score);
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << label_w + plot_w + 80 << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    svg << "  <text x=\"10\" y=\"18\" font-weight=\"bold\">" << xml_escape(ranking.method) << " ranking (eta="
        << ranking.eta << ")</text>\n";
    for (std::size_t i = 0; i < ranking.features.size(); ++i) {
        const auto& f = ranking.features[i];
        const int y = top + bar_h * static_cast<int>(i);
        const double w = max_score > 0.0 ? plot_w * f.score / max_score : 0.0;
        const bool selected = static_cast<int>(i) < ranking.eta;
        svg << "  <text x=\"" << label_w - 6 << "\" y=\"" << y + 15 << "\" text-anchor=\"end\">" << xml_escape(f.name)
            << "</text>\n";
        svg << "  <rect x=\"" << label_w << "\" y=\"" << y + 3 << "\" width=\"" << format_double(w)
            << "\" height=\"" << bar_h - 6 << "\" fill=\"" << (selected ? "#2b6cb0" : "#a0aec0") << "\"/>\n";
        svg << "  <text x=\"" << format_double(label_w + w + 4) << "\" y=\"" << y + 15 << "\">"
            << format_double(f.score) << "</text>\n";
    }
    svg << "</svg>\n";
    return svg.str();
}

}  // namespace probshift
