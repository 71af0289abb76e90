#include "probshift/forest_json.hpp"

#include <fstream>
#include <sstream>

#include "probshift/error.hpp"

namespace probshift {

using nlohmann::json;

namespace {

template <typename T>
T required(const json& obj, const char* key, const std::string& where) {
    if (!obj.is_object() || !obj.contains(key)) throw ParseError(where + ": missing field '" + key + "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(where + ": field '" + key + "' has the wrong type (" + e.what() + ")");
    }
}

}  // namespace

json feature_to_json(const FeatureMeta& f) {
    return json{{"index", f.index},
                {"name", f.name},
                {"kind", std::string(to_string(f.kind))},
                {"mutable", f.is_mutable},
                {"beneficial", std::string(to_string(f.beneficial))},
                {"lo", f.lo},
                {"hi", f.hi}};
}

FeatureMeta feature_from_json(const json& j) {
    FeatureMeta f;
    const std::string where = "feature";
    f.index = required<int>(j, "index", where);
    f.name = j.value("name", "x" + std::to_string(f.index));
    f.kind = parse_feature_kind(j.value("kind", "continuous"));
    f.is_mutable = j.value("mutable", false);
    f.beneficial = parse_direction(j.value("beneficial", "none"));
    f.lo = j.value("lo", 0.0);
    f.hi = j.value("hi", 1.0);
    return f;
}

json forest_to_json(const Forest& forest) {
    json features = json::array();
    for (const FeatureMeta& f : forest.features()) features.push_back(feature_to_json(f));
    json trees = json::array();
    for (const Tree& t : forest.trees()) {
        json nodes = json::array();
        for (const RawNode& n : t.raw_nodes())
            nodes.push_back({{"id", n.id}, {"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
        json leaves = json::array();
        for (const Leaf& l : t.leaves()) leaves.push_back({{"id", l.id}, {"class", l.predicted_class}});
        const int root_id = t.root().is_leaf ? t.leaves()[static_cast<std::size_t>(t.root().index)].id
                                             : t.nodes()[static_cast<std::size_t>(t.root().index)].id;
        trees.push_back({{"weight", t.weight()}, {"root", root_id}, {"nodes", std::move(nodes)}, {"leaves", std::move(leaves)}});
    }
    return json{{"num_features", forest.num_features()}, {"features", std::move(features)}, {"trees", std::move(trees)}};
}

Forest forest_from_json(const json& doc) {
    if (!doc.is_object()) throw ParseError("forest document must be a JSON object");
    const auto d = required<std::size_t>(doc, "num_features", "forest");
    std::vector<FeatureMeta> features;
    if (doc.contains("features")) {
        for (const json& f : doc.at("features")) features.push_back(feature_from_json(f));
    } else {
        for (std::size_t j = 0; j < d; ++j) features.push_back(FeatureMeta{static_cast<int>(j), "x" + std::to_string(j),
                                                                           FeatureKind::continuous, false,
                                                                           Direction::none, 0.0, 1.0});
    }
    if (features.size() != d)
        throw ParseError("forest: num_features = " + std::to_string(d) + " but " + std::to_string(features.size()) +
                         " feature entries");

    if (!doc.contains("trees") || !doc.at("trees").is_array()) throw ParseError("forest: missing 'trees' array");
    std::vector<Tree> trees;
    std::size_t r = 0;
    for (const json& jt : doc.at("trees")) {
        const std::string where = "tree " + std::to_string(r);
        std::vector<RawNode> nodes;
        for (const json& jn : jt.value("nodes", json::array())) {
            RawNode n;
            n.id = required<int>(jn, "id", where + " node");
            const std::string nwhere = where + " node " + std::to_string(n.id);
            n.feature = required<int>(jn, "feature", nwhere);
            n.threshold = required<double>(jn, "threshold", nwhere);
            n.left = required<int>(jn, "left", nwhere);
            n.right = required<int>(jn, "right", nwhere);
            nodes.push_back(n);
        }
        std::vector<Leaf> leaves;
        for (const json& jl : jt.value("leaves", json::array())) {
            Leaf l;
            l.id = required<int>(jl, "id", where + " leaf");
            l.predicted_class = required<int>(jl, "class", where + " leaf " + std::to_string(l.id));
            leaves.push_back(l);
        }
        try {
            trees.emplace_back(nodes, std::move(leaves), required<int>(jt, "root", where), jt.value("weight", 1.0));
        } catch (const ValidationError& e) {
            throw ValidationError(where + ": " + e.what());
        }
        ++r;
    }
    return Forest(std::move(features), std::move(trees));
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << text;
}

json parse_json(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(origin + ": JSON parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
}

Forest load_forest(const std::filesystem::path& path) {
    return forest_from_json(parse_json(read_text_file(path), path.string()));
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
    write_text_file(path, forest_to_json(forest).dump(2) + "\n");
}

}  // namespace probshift
