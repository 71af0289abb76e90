#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "probshift/cli.hpp"
#include "probshift/fixtures.hpp"
#include "probshift/forest_json.hpp"
#include "probshift/manifest.hpp"
#include "probshift/prob_model.hpp"

using namespace probshift;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("probshift_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

// Firefighter forest and a table whose x0 is `x0`.
void write_fixture(const fs::path& dir, std::vector<double> x0, bool all_negative = false) {
    FirefighterFixture ff = firefighter_fixture();
    nlohmann::json doc = forest_to_json(ff.forest);
    if (all_negative)
        for (auto& leaf : doc["trees"][0]["leaves"]) leaf["class"] = 0;
    const Forest forest = forest_from_json(doc);
    save_forest(forest, dir / "forest.json");
    save_table(NodeProbabilityTable(0, 1, ff.table.entries(), std::move(x0)), forest, dir / "table.json");
}

}  // namespace

TEST_CASE("demo prints the firefighter values") {
    const Result r = run({"demo", "firefighter"});
    CHECK(r.code == exit_ok);
    CHECK(r.out.find("max-path  effort=A  0.36") != std::string::npos);
    CHECK(r.out.find("max-path  effort=S  0.20") != std::string::npos);
    CHECK(r.out.find("min-path  effort=A  0.32") != std::string::npos);
    CHECK(r.out.find("min-path  effort=S  0.15") != std::string::npos);
}

TEST_CASE("usage errors exit 1") {
    CHECK(run({}).code == exit_error);
    CHECK(run({"shift"}).code == exit_error);
    CHECK(run({"demo", "nothing"}).code == exit_error);
    CHECK(run({"--version"}).code == exit_ok);
    const Result missing = run({"shift", "--forest", "/nonexistent/forest.json", "--probs", "x.json", "-o", "y.json"});
    CHECK(missing.code == exit_error);
    CHECK(missing.err.find("error:") != std::string::npos);
}

TEST_CASE("shift exit codes") {
    const fs::path dir = scratch("exit");
    write_fixture(dir, {0.8, 0.7});
    const std::string forest = (dir / "forest.json").string();
    const std::string table = (dir / "table.json").string();
    const std::string out = (dir / "sol.json").string();

    const Result at_target = run({"shift", "--forest", forest, "--probs", table, "--eta", "0", "-o", out});
    CHECK(at_target.code == exit_ok);
    const auto sol = parse_json(read_text_file(out), out);
    CHECK(sol["status"] == "optimal");
    CHECK(sol["effort"] == nlohmann::json::array({0, 0}));
    CHECK(sol["verification"]["ok"] == true);
    CHECK(fs::exists(dir / "sol.manifest.json"));

    const Result mu = run({"shift", "--forest", forest, "--probs", table, "--objective", "kappa", "--kappa", "2",
                           "--mu", "0.5", "-o", out});
    CHECK(mu.code == exit_infeasible);

    const fs::path neg = scratch("negative");
    write_fixture(neg, {0.65, 0.5}, true);
    const Result r = run({"shift", "--forest", (neg / "forest.json").string(), "--probs", (neg / "table.json").string(),
                          "-o", (neg / "sol.json").string()});
    CHECK(r.code == exit_infeasible);
}

TEST_CASE("full pipeline with manifest replay") {
    const fs::path dir = scratch("pipeline");
    auto p = [&](const std::string& name) { return (dir / name).string(); };
    REQUIRE(run({"synth", "--n", "200", "--d", "6", "--seed", "2", "-o", p("data.csv")}).code == exit_ok);
    REQUIRE(run({"train", "--data", p("data.csv"), "--schema", p("data.schema.json"), "--trees", "5", "--depth", "3",
                 "--seed", "2", "-o", p("forest.json")})
                .code == exit_ok);
    CHECK(fs::exists(dir / "forest.split.json"));
    CHECK(fs::exists(dir / "forest.importances.csv"));
    REQUIRE(run({"probs", "--forest", p("forest.json"), "--data", p("data.csv"), "--schema", p("data.schema.json"),
                 "--samples", "200", "--seed", "2", "-o", p("probs")})
                .code == exit_ok);
    CHECK(fs::exists(dir / "probs" / "manifest.json"));
    const Result sh = run({"shift", "--forest", p("forest.json"), "--probs", p("probs"), "--objective", "kappa",
                           "--kappa-fraction", "0.5", "--eta", "2", "-o", p("sols")});
    REQUIRE(sh.code == exit_ok);
    REQUIRE(run({"rank", "--forest", p("forest.json"), "--solutions", p("sols"), "--eta", "2", "-o", p("k50.csv")})
                .code == exit_ok);
    REQUIRE(run({"rank", "--forest", p("forest.json"), "--random", "--count", "2", "--seed", "4", "-o", p("rsr.csv")})
                .code == exit_ok);
    REQUIRE(run({"rank", "--forest", p("forest.json"), "--importances", p("forest.importances.csv"), "-o", p("rfr.csv")})
                .code == exit_ok);
    CHECK(fs::exists(dir / "rsr_2.csv"));
    CHECK(fs::exists(dir / "k50.svg"));
    const Result sim = run({"simulate", "--forest", p("forest.json"), "--data", p("data.csv"), "--schema",
                            p("data.schema.json"), "--ranking", "k50=" + p("k50.csv"), "--ranking",
                            "rsr=" + p("rsr_1.csv"), "--ranking", "rsr=" + p("rsr_2.csv"), "--ranking",
                            "rfr=" + p("rfr.csv"), "--eta", "1,2", "--reps", "5", "--seed", "2", "-o", p("report.csv")});
    REQUIRE(sim.code == exit_ok);
    const std::string report = read_text_file(dir / "report.csv");
    CHECK(report.find("raw,k50,") != std::string::npos);
    CHECK(report.find("raw,rsr,") != std::string::npos);

    for (const std::string m : {"forest.manifest.json", "probs/manifest.json", "sols/manifest.json", "report.manifest.json"}) {
        const RunManifest before = manifest_from_json(parse_json(read_text_file(dir / m), m));
        CHECK_FALSE(before.outputs.empty());
        const Result rep = run({"replay", "--manifest", p(m)});
        CHECK_MESSAGE(rep.code == exit_ok, m, rep.err);
        CHECK(rep.out.find("DIFFERENT") == std::string::npos);
    }

    // A modified input fails the digest check before anything is rerun.
    const RunManifest sm = manifest_from_json(parse_json(read_text_file(dir / "report.manifest.json"), "m"));
    CHECK(sm.seeds["seed"] == 2);
    CHECK(sm.flags["reps"] == "5");
    write_text_file(dir / "data.csv", read_text_file(dir / "data.csv") + "\n");
    CHECK(run({"replay", "--manifest", p("report.manifest.json")}).code == exit_error);
}
