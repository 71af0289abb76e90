#include "probshift/data_io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "probshift/error.hpp"
#include "probshift/forest_json.hpp"

namespace probshift {

using nlohmann::json;

void Dataset::validate() const {
    if (rows.size() != labels.size() || rows.size() != ids.size())
        throw ValidationError("dataset rows, labels and ids differ in length");
    for (std::size_t j = 0; j < features.size(); ++j) features[j].validate();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != features.size())
            throw ValidationError("row " + std::to_string(ids[i]) + " has " + std::to_string(rows[i].size()) + " values");
        if (labels[i] != 0 && labels[i] != 1)
            throw ValidationError("row " + std::to_string(ids[i]) + ": label not binary");
        for (std::size_t j = 0; j < features.size(); ++j) {
            const double v = rows[i][j];
            if (!(v >= features[j].lo && v <= features[j].hi))
                throw ValidationError("row " + std::to_string(ids[i]) + ": value of '" + features[j].name +
                                      "' outside its domain");
        }
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    Dataset out;
    out.features = features;
    out.rows.reserve(indices.size());
    for (std::size_t i : indices) {
        out.rows.push_back(rows.at(i));
        out.labels.push_back(labels.at(i));
        out.ids.push_back(ids.at(i));
    }
    return out;
}

namespace {

ColumnRole parse_role(const std::string& s) {
    if (s == "feature") return ColumnRole::feature;
    if (s == "target") return ColumnRole::target;
    if (s == "drop") return ColumnRole::drop;
    throw ParseError("unknown column role '" + s + "'");
}

std::string role_name(ColumnRole r) {
    switch (r) {
        case ColumnRole::feature: return "feature";
        case ColumnRole::target: return "target";
        case ColumnRole::drop: return "drop";
    }
    return "drop";
}

std::string trim(std::string s) {
    auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

bool parse_number(const std::string& text, double& out) {
    const char* first = text.data();
    const char* last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && std::isfinite(out);
}

bool is_missing(const std::string& v) { return v.empty() || v == "NA" || v == "NaN" || v == "nan" || v == "?"; }

}  // namespace

void DatasetSchema::validate() const {
    int targets = 0;
    for (const ColumnSpec& c : columns) {
        if (c.role == ColumnRole::target) ++targets;
        if (c.role == ColumnRole::feature) {
            if (c.is_mutable && c.beneficial == Direction::none)
                throw ValidationError("column '" + c.name + "': mutable feature needs a beneficial direction");
            if (c.raw_lo.has_value() != c.raw_hi.has_value())
                throw ValidationError("column '" + c.name + "': give both lo and hi or neither");
            if (c.raw_lo && !(*c.raw_lo < *c.raw_hi))
                throw ValidationError("column '" + c.name + "': lo must be below hi");
        }
    }
    if (targets != 1) throw ValidationError("schema must have exactly one target column, found " + std::to_string(targets));
}

DatasetSchema schema_from_json(const json& doc) {
    if (!doc.is_object() || !doc.contains("columns") || !doc.at("columns").is_array())
        throw ParseError("schema: expected an object with a 'columns' array");
    DatasetSchema schema;
    try {
        for (const json& jc : doc.at("columns")) {
            ColumnSpec c;
            c.name = jc.at("name").get<std::string>();
            c.role = parse_role(jc.value("role", "feature"));
            c.kind = parse_feature_kind(jc.value("kind", "continuous"));
            c.is_mutable = jc.value("mutable", false);
            c.beneficial = parse_direction(jc.value("beneficial", "none"));
            if (jc.contains("recode"))
                for (const auto& [k, v] : jc.at("recode").items()) c.recode[k] = v.get<double>();
            if (jc.contains("exclude")) c.exclude = jc.at("exclude").get<std::vector<std::string>>();
            if (jc.contains("positive")) c.positive = jc.at("positive").get<std::vector<std::string>>();
            if (jc.contains("lo")) c.raw_lo = jc.at("lo").get<double>();
            if (jc.contains("hi")) c.raw_hi = jc.at("hi").get<double>();
            schema.columns.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("schema: ") + e.what());
    }
    schema.validate();
    return schema;
}

json schema_to_json(const DatasetSchema& schema) {
    json cols = json::array();
    for (const ColumnSpec& c : schema.columns) {
        json jc{{"name", c.name}, {"role", role_name(c.role)}};
        if (c.role == ColumnRole::feature) {
            jc["kind"] = std::string(to_string(c.kind));
            jc["mutable"] = c.is_mutable;
            jc["beneficial"] = std::string(to_string(c.beneficial));
        }
        if (!c.recode.empty()) jc["recode"] = c.recode;
        if (!c.exclude.empty()) jc["exclude"] = c.exclude;
        if (!c.positive.empty()) jc["positive"] = c.positive;
        if (c.raw_lo) jc["lo"] = *c.raw_lo;
        if (c.raw_hi) jc["hi"] = *c.raw_hi;
        cols.push_back(std::move(jc));
    }
    return json{{"columns", std::move(cols)}};
}

DatasetSchema load_schema(const std::filesystem::path& path) {
    return schema_from_json(parse_json(read_text_file(path), path.string()));
}

double Normalizer::normalize(std::size_t feature, double raw) const {
    const double span = hi.at(feature) - lo.at(feature);
    if (span <= 0.0) return 0.0;
    return std::clamp((raw - lo[feature]) / span, 0.0, 1.0);
}

double Normalizer::denormalize(std::size_t feature, double value) const {
    return lo.at(feature) + value * (hi.at(feature) - lo.at(feature));
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cur));
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

LoadedDataset parse_csv(const std::string& text, const DatasetSchema& schema, const std::string& origin) {
    schema.validate();
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(origin + ": empty file");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line = line.substr(3);  // UTF-8 BOM
    const std::vector<std::string> header = split_csv_line(line);

    std::vector<std::size_t> col_of(schema.columns.size());
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        auto it = std::find(header.begin(), header.end(), schema.columns[c].name);
        if (it == header.end()) throw ParseError(origin + ": schema column '" + schema.columns[c].name + "' not in header");
        col_of[c] = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<std::size_t> feature_cols;
    std::size_t target_col = 0;
    for (std::size_t c = 0; c < schema.columns.size(); ++c) {
        if (schema.columns[c].role == ColumnRole::feature) feature_cols.push_back(c);
        if (schema.columns[c].role == ColumnRole::target) target_col = c;
    }

    std::vector<std::vector<double>> raw_rows;
    std::vector<int> labels;
    std::vector<int> ids;
    std::vector<std::string> problems;
    int row_id = -1;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        ++row_id;
        const std::vector<std::string> cells = split_csv_line(line);
        const std::string where = origin + ":" + std::to_string(line_no);
        if (cells.size() != header.size()) {
            problems.push_back(where + ": expected " + std::to_string(header.size()) + " cells, got " +
                               std::to_string(cells.size()));
            continue;
        }
        bool excluded = false;
        for (std::size_t c = 0; c < schema.columns.size() && !excluded; ++c) {
            const auto& ex = schema.columns[c].exclude;
            excluded = std::find(ex.begin(), ex.end(), cells[col_of[c]]) != ex.end();
        }
        if (excluded) continue;

        bool ok = true;
        std::vector<double> values;
        for (std::size_t c : feature_cols) {
            const ColumnSpec& spec = schema.columns[c];
            const std::string& cell = cells[col_of[c]];
            double v = 0.0;
            if (is_missing(cell)) {
                problems.push_back(where + ": missing value in column '" + spec.name + "'");
                ok = false;
                continue;
            }
            if (auto it = spec.recode.find(cell); it != spec.recode.end()) {
                v = it->second;
            } else if (!parse_number(cell, v)) {
                problems.push_back(where + ": value '" + cell + "' of column '" + spec.name + "' has no recode");
                ok = false;
                continue;
            }
            if (spec.kind == FeatureKind::binary && v != 0.0 && v != 1.0) {
                problems.push_back(where + ": binary column '" + spec.name + "' holds " + cell);
                ok = false;
                continue;
            }
            values.push_back(v);
        }
        const ColumnSpec& tspec = schema.columns[target_col];
        const std::string& tcell = cells[col_of[target_col]];
        int label = 0;
        if (is_missing(tcell)) {
            problems.push_back(where + ": missing target");
            ok = false;
        } else if (!tspec.positive.empty()) {
            label = std::find(tspec.positive.begin(), tspec.positive.end(), tcell) != tspec.positive.end() ? 1 : 0;
        } else {
            double v = 0.0;
            if (auto it = tspec.recode.find(tcell); it != tspec.recode.end()) {
                v = it->second;
            } else if (!parse_number(tcell, v)) {
                problems.push_back(where + ": target value '" + tcell + "' is not 0/1 and has no recode");
                ok = false;
            }
            if (ok && v != 0.0 && v != 1.0) {
                problems.push_back(where + ": target value '" + tcell + "' is not binary");
                ok = false;
            }
            label = static_cast<int>(v);
        }
        if (!ok) continue;
        raw_rows.push_back(std::move(values));
        labels.push_back(label);
        ids.push_back(row_id);
    }

    if (!problems.empty()) {
        std::ostringstream msg;
        msg << origin << ": " << problems.size() << " row error(s)";
        for (std::size_t i = 0; i < std::min<std::size_t>(problems.size(), 20); ++i) msg << "\n  " << problems[i];
        throw ParseError(msg.str());
    }
    if (raw_rows.empty()) throw ParseError(origin + ": no data rows left after filtering");

    LoadedDataset out;
    Normalizer& norm = out.normalizer;
    Dataset& data = out.data;
    for (std::size_t k = 0; k < feature_cols.size(); ++k) {
        const ColumnSpec& spec = schema.columns[feature_cols[k]];
        double lo = 0.0;
        double hi = 1.0;
        if (spec.kind == FeatureKind::continuous) {
            if (spec.raw_lo) {
                lo = *spec.raw_lo;
                hi = *spec.raw_hi;
            } else {
                lo = hi = raw_rows.front()[k];
                for (const auto& r : raw_rows) {
                    lo = std::min(lo, r[k]);
                    hi = std::max(hi, r[k]);
                }
            }
        }
        norm.lo.push_back(lo);
        norm.hi.push_back(hi);
        data.features.push_back(FeatureMeta{static_cast<int>(k), spec.name, spec.kind, spec.is_mutable, spec.beneficial,
                                            0.0, 1.0});
    }
    for (auto& r : raw_rows)
        for (std::size_t k = 0; k < r.size(); ++k)
            if (data.features[k].kind == FeatureKind::continuous) r[k] = norm.normalize(k, r[k]);
    data.rows = std::move(raw_rows);
    data.labels = std::move(labels);
    data.ids = std::move(ids);
    data.validate();
    return out;
}

LoadedDataset load_csv(const std::filesystem::path& path, const DatasetSchema& schema) {
    return parse_csv(read_text_file(path), schema, path.string());
}

FeatureStats feature_stats(const Dataset& data) {
    const std::size_t d = data.num_features();
    const std::size_t n = data.size();
    FeatureStats stats;
    stats.sigma.assign(d, 0.0);
    stats.majority_freq.assign(d, 1.0);
    if (n == 0) return stats;
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (const auto& r : data.rows) mean += r[j];
        mean /= static_cast<double>(n);
        double ss = 0.0;
        for (const auto& r : data.rows) ss += (r[j] - mean) * (r[j] - mean);
        stats.sigma[j] = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
        if (data.features[j].kind == FeatureKind::binary) {
            std::size_t ones = 0;
            for (const auto& r : data.rows) ones += r[j] == 1.0 ? 1 : 0;
            const double f1 = static_cast<double>(ones) / static_cast<double>(n);
            stats.majority_freq[j] = std::max(f1, 1.0 - f1);
        }
    }
    return stats;
}

SplitIndices split_indices(std::size_t n, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ContractError("train fraction must lie in (0,1)");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5917u};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    SplitIndices out;
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed) {
    const SplitIndices idx = split_indices(data.size(), train_fraction, seed);
    return {data.subset(idx.train), data.subset(idx.test)};
}

namespace {

// Frequency of the beneficial value of mutable binary features in synthetic data.
constexpr double kSynthBeneficialRate = 0.3;

std::vector<FeatureMeta> synth_features(std::size_t d) {
    std::vector<FeatureMeta> f;
    for (std::size_t j = 0; j < d; ++j) {
        FeatureMeta m;
        m.index = static_cast<int>(j);
        if (j == 0) {
            m.name = "imm_cont";
            m.kind = FeatureKind::continuous;
            m.is_mutable = false;
        } else if (j == 1) {
            m.name = "imm_bin";
            m.kind = FeatureKind::binary;
            m.is_mutable = false;
        } else {
            const std::size_t pos = j - 2;
            m.is_mutable = true;
            if (pos % 2 == 0) {
                m.kind = FeatureKind::continuous;
                m.beneficial = (pos / 2) % 2 == 0 ? Direction::increase : Direction::decrease;
                m.name = "cont" + std::to_string(j);
            } else {
                m.kind = FeatureKind::binary;
                m.beneficial = (pos / 2) % 2 == 0 ? Direction::to_one : Direction::to_zero;
                m.name = "bin" + std::to_string(j);
            }
        }
        f.push_back(m);
    }
    return f;
}

}  // namespace

std::vector<double> synth_weights(std::size_t d) {
    std::vector<double> w(d, 0.0);
    if (d > 0) w[0] = 0.2;
    if (d > 1) w[1] = 0.2;
    // One dominant continuous feature keeps the boundary close to axis-aligned.
    for (std::size_t j = 2; j < d; ++j) {
        const std::size_t pos = j - 2;
        const std::size_t group = pos / 3;
        switch (pos % 3) {
            case 0: w[j] = group == 0 ? 3.0 : 0.2 / static_cast<double>(group); break;
            case 1: w[j] = group == 0 ? 1.0 : 0.3 / static_cast<double>(group); break;
            default: w[j] = 0.0; break;
        }
    }
    return w;
}

Dataset synth_generate(std::size_t n, std::size_t d, std::uint64_t seed, const SynthOptions& options) {
    if (n < 20 || d < 3) throw ContractError("synthetic data needs n >= 20 and d >= 3");
    Dataset data;
    data.features = synth_features(d);
    const std::vector<double> w = synth_weights(d);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x51D7u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    double threshold = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const FeatureMeta& f = data.features[j];
        double expected = 0.5;
        if (f.kind == FeatureKind::binary && f.is_mutable) expected = kSynthBeneficialRate;
        threshold += w[j] * expected;
    }

    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(d);
        double score = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const FeatureMeta& f = data.features[j];
            double v = 0.0;
            double aligned = 0.0;
            if (f.kind == FeatureKind::continuous) {
                v = unif(rng);
                aligned = f.beneficial == Direction::decrease ? 1.0 - v : v;
            } else if (!f.is_mutable) {
                v = unif(rng) < 0.5 ? 1.0 : 0.0;
                aligned = v;
            } else {
                const bool beneficial = unif(rng) < kSynthBeneficialRate;
                const double good = f.beneficial == Direction::to_one ? 1.0 : 0.0;
                v = beneficial ? good : 1.0 - good;
                aligned = beneficial ? 1.0 : 0.0;
            }
            row[j] = v;
            score += w[j] * aligned;
        }
        int label = score > threshold ? 1 : 0;
        if (unif(rng) < options.label_noise) label = 1 - label;
        data.rows.push_back(std::move(row));
        data.labels.push_back(label);
        data.ids.push_back(static_cast<int>(i));
    }
    return data;
}

std::string dataset_to_csv(const Dataset& data) {
    std::ostringstream out;
    out.precision(17);
    for (const FeatureMeta& f : data.features) out << f.name << ',';
    out << "label\n";
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (double v : data.rows[i]) out << v << ',';
        out << data.labels[i] << '\n';
    }
    return out.str();
}

DatasetSchema schema_for(const Dataset& data) {
    DatasetSchema schema;
    for (const FeatureMeta& f : data.features) {
        ColumnSpec c;
        c.name = f.name;
        c.role = ColumnRole::feature;
        c.kind = f.kind;
        c.is_mutable = f.is_mutable;
        c.beneficial = f.beneficial;
        if (f.kind == FeatureKind::continuous) {
            c.raw_lo = f.lo;
            c.raw_hi = f.hi;
        }
        schema.columns.push_back(std::move(c));
    }
    ColumnSpec target;
    target.name = "label";
    target.role = ColumnRole::target;
    schema.columns.push_back(std::move(target));
    return schema;
}

}  // namespace probshift
