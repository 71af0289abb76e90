#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "probshift/forest.hpp"

namespace probshift {

/// Rows of normalized feature values with binary labels. Every value lies in its feature domain.
struct Dataset {
    std::vector<FeatureMeta> features;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::vector<int> ids;  // stable row identifiers (0-based position in the source file)

    std::size_t size() const { return rows.size(); }
    std::size_t num_features() const { return features.size(); }

    void validate() const;
    Dataset subset(std::span<const std::size_t> indices) const;
};

enum class ColumnRole { feature, target, drop };

struct ColumnSpec {
    std::string name;
    ColumnRole role = ColumnRole::feature;
    FeatureKind kind = FeatureKind::continuous;
    Direction beneficial = Direction::none;
    bool is_mutable = false;
    std::map<std::string, double> recode;  // raw text -> numeric value
    std::vector<std::string> exclude;      // rows holding one of these raw values are dropped
    std::vector<std::string> positive;     // target only: raw labels mapped to class 1
    std::optional<double> raw_lo;          // fixed normalization range; observed min/max otherwise
    std::optional<double> raw_hi;
};

struct DatasetSchema {
    std::vector<ColumnSpec> columns;

    void validate() const;
};

DatasetSchema schema_from_json(const nlohmann::json& doc);
nlohmann::json schema_to_json(const DatasetSchema& schema);
DatasetSchema load_schema(const std::filesystem::path& path);

/// Raw range of each continuous feature, for mapping normalized values back.
struct Normalizer {
    std::vector<double> lo;
    std::vector<double> hi;

    double normalize(std::size_t feature, double raw) const;
    double denormalize(std::size_t feature, double value) const;
};

struct LoadedDataset {
    Dataset data;
    Normalizer normalizer;
};

/// Drops, recodes and min-max normalizes the CSV according to the schema.
/// All row-level problems are collected into one ParseError.
LoadedDataset load_csv(const std::filesystem::path& path, const DatasetSchema& schema);
LoadedDataset parse_csv(const std::string& text, const DatasetSchema& schema, const std::string& origin = "<csv>");

/// Per-feature statistics feeding the perturbation model.
struct FeatureStats {
    std::vector<double> sigma;          // sample standard deviation (continuous features)
    std::vector<double> majority_freq;  // frequency of the most common value (binary features)
};

FeatureStats feature_stats(const Dataset& data);

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Seeded shuffle, first round(fraction * n) rows go to train.
SplitIndices split_indices(std::size_t n, double train_fraction, std::uint64_t seed);
std::pair<Dataset, Dataset> split(const Dataset& data, double train_fraction, std::uint64_t seed);

struct SynthOptions {
    double label_noise = 0.05;
};

/// Synthetic stand-in dataset with a planted monotone rule.
///
/// Feature 0 is an immutable continuous feature and feature 1 an immutable binary one.
/// The remaining features alternate continuous / binary and are mutable. Each feature has a
/// fixed weight, the first mutable feature dominates, and every third mutable feature has
/// weight 0 and is pure noise. The label is 1 (the desired class) iff the weighted sum of
/// direction-aligned values exceeds its expectation, then flipped with probability `label_noise`.
Dataset synth_generate(std::size_t n, std::size_t d, std::uint64_t seed, const SynthOptions& options = {});

/// Weights of the planted rule used by synth_generate.
std::vector<double> synth_weights(std::size_t d);

/// Writes header + rows (feature names then "label"), '.' decimal.
std::string dataset_to_csv(const Dataset& data);

/// Schema matching dataset_to_csv output: identity recode, already normalized values.
DatasetSchema schema_for(const Dataset& data);

/// Splits one CSV line honouring double quotes.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace probshift
