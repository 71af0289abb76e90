#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "probshift/data_io.hpp"
#include "probshift/error.hpp"

using namespace probshift;

namespace {

DatasetSchema small_schema() {
    return schema_from_json(nlohmann::json::parse(R"({"columns": [
        {"name": "age", "kind": "continuous", "mutable": false},
        {"name": "note", "role": "drop"},
        {"name": "veg", "kind": "continuous", "mutable": true, "beneficial": "increase"},
        {"name": "smoke", "kind": "binary", "mutable": true, "beneficial": "to_zero",
         "recode": {"yes": 1, "no": 0}},
        {"name": "status", "role": "target", "positive": ["Normal"]}
    ]})"));
}

const char* kSmallCsv =
    "age,note,veg,smoke,status\n"
    "10,a,1,yes,Obese\n"
    "20,\"b,c\",2,no,Normal\n"
    "30,d,3,yes,Normal\n";

}  // namespace

TEST_CASE("schema-driven load drops, recodes and normalizes") {
    const LoadedDataset ld = parse_csv(kSmallCsv, small_schema());
    const Dataset& d = ld.data;
    REQUIRE(d.num_features() == 3);
    CHECK(d.features[0].name == "age");
    CHECK(d.features[2].kind == FeatureKind::binary);
    CHECK(d.rows[0][0] == 0.0);
    CHECK(d.rows[1][0] == doctest::Approx(0.5));
    CHECK(d.rows[2][0] == 1.0);
    CHECK(d.rows[0][2] == 1.0);
    CHECK(d.labels == std::vector<int>{0, 1, 1});
    CHECK(d.ids == std::vector<int>{0, 1, 2});
    for (double raw : {10.0, 17.3, 30.0})
        CHECK(std::fabs(ld.normalizer.denormalize(0, ld.normalizer.normalize(0, raw)) - raw) <= 1e-12);
}

TEST_CASE("bad rows are reported together") {
    const std::string csv =
        "age,note,veg,smoke,status\n"
        "10,a,x,yes,Obese\n"
        "20,b,2,maybe,Normal\n";
    try {
        parse_csv(csv, small_schema());
        FAIL("bad rows accepted");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("maybe") != std::string::npos);
        CHECK(msg.find("'x'") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_csv("age,veg\n1,2\n", small_schema()), ParseError);
}

TEST_CASE("schema validation") {
    CHECK_THROWS_AS(schema_from_json(nlohmann::json::parse(R"({"columns": [{"name": "a"}]})")), Error);
    CHECK_THROWS_AS(schema_from_json(nlohmann::json::parse(R"({"rows": []})")), ParseError);
    const DatasetSchema s = small_schema();
    CHECK(schema_to_json(schema_from_json(schema_to_json(s))) == schema_to_json(s));
}

TEST_CASE("feature statistics") {
    Dataset d;
    for (int j = 0; j < 2; ++j) {
        FeatureMeta f;
        f.index = j;
        f.name = "f" + std::to_string(j);
        f.is_mutable = false;
        f.kind = j == 0 ? FeatureKind::continuous : FeatureKind::binary;
        d.features.push_back(f);
    }
    for (int i = 0; i < 10; ++i) {
        d.rows.push_back({i < 5 ? 0.0 : 1.0, i == 0 ? 0.0 : 1.0});
        d.labels.push_back(i % 2);
        d.ids.push_back(i);
    }
    const FeatureStats s = feature_stats(d);
    CHECK(s.majority_freq[1] == doctest::Approx(0.9));
    // Sample standard deviation of five zeros and five ones.
    CHECK(s.sigma[0] == doctest::Approx(std::sqrt(2.5 / 9.0)));
}

TEST_CASE("seeded split") {
    const SplitIndices a = split_indices(9, 2.0 / 3.0, 4);
    CHECK(a.train.size() == 6);
    CHECK(a.test.size() == 3);
    const SplitIndices b = split_indices(9, 2.0 / 3.0, 4);
    CHECK(a.train == b.train);
    std::set<std::size_t> all(a.train.begin(), a.train.end());
    all.insert(a.test.begin(), a.test.end());
    CHECK(all.size() == 9);
    CHECK(*all.rbegin() == 8);
    CHECK_THROWS(split_indices(9, 1.0, 0));
}

TEST_CASE("synthetic generator") {
    const Dataset a = synth_generate(600, 8, 3);
    const Dataset b = synth_generate(600, 8, 3);
    CHECK(a.rows == b.rows);
    CHECK(a.labels == b.labels);
    CHECK_FALSE(a.features[0].is_mutable);
    CHECK_FALSE(a.features[1].is_mutable);
    CHECK(a.features[1].kind == FeatureKind::binary);
    for (std::size_t j = 2; j < 8; ++j) CHECK(a.features[j].is_mutable);
    const double ones = static_cast<double>(std::count(a.labels.begin(), a.labels.end(), 1)) / 600.0;
    CHECK(ones >= 0.3);
    CHECK(ones <= 0.7);
    CHECK_THROWS(synth_generate(10, 8, 0));
    CHECK_THROWS(synth_generate(100, 2, 0));

    // The written CSV reads back to the same data through the generated schema.
    const Dataset c = parse_csv(dataset_to_csv(a), schema_for(a)).data;
    CHECK(c.rows == a.rows);
    CHECK(c.labels == a.labels);
}

TEST_CASE("CSV line splitting honours quotes") {
    CHECK(split_csv_line("a,\"b,c\",d") == std::vector<std::string>{"a", "b,c", "d"});
    CHECK(split_csv_line("\"say \"\"hi\"\"\",x") == std::vector<std::string>{"say \"hi\"", "x"});
}
