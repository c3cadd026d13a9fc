#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "support.hpp"
#include "geaf/cli.hpp"

using namespace geaf;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

std::string zeros_genotype(std::size_t n = 30) {
    std::string s = "0";
    for (std::size_t i = 1; i < n; ++i) s += ",0";
    return s;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream b;
    b << in.rdbuf();
    return b.str();
}

json small_config(const std::string& dataset, const std::string& schema, const fs::path& out) {
    return {{"dataset", {{"path", dataset}, {"schema", schema}}},
            {"hidden_layers", 1},
            {"network", {{"max_epochs", 4}, {"batch_size", 16}}},
            {"evolution", {{"population_size", 6}, {"generations", 3}}},
            {"seed", 5},
            {"runs", 2},
            {"output_dir", out.string()}};
}

fs::path write_config(const fs::path& dir, const json& j) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

}  // namespace

TEST_CASE("map prints the derivation", "[cli][map]") {
    std::string out;
    CHECK(testing::run_cli("map " + zeros_genotype(), &out) == 0);
    CHECK(out == "sin(x)\nconsumed 2\nwraps 0\n");
    CHECK(testing::run_cli("map " + zeros_genotype() + " -n 3", &out) == 0);
    CHECK(out == "sin(x)\nsin(x)\nsin(x)\nconsumed 6\nwraps 0\n");
}

TEST_CASE("map rejects malformed genotypes", "[cli][map]") {
    std::string out;
    CHECK(testing::run_cli("map " + zeros_genotype(31), &out) == cli::kUsage);
    CHECK(out.find("usage error") != std::string::npos);
    CHECK(testing::run_cli("map 101," + zeros_genotype(29), &out) == cli::kUsage);
    CHECK(testing::run_cli("map", &out) == cli::kUsage);
}

TEST_CASE("map reads a grammar file", "[cli][map]") {
    const auto dir = testing::scratch_dir("grammar");
    std::ofstream(dir / "g.bnf") << to_bnf(default_grammar());
    std::string out;
    CHECK(testing::run_cli("map " + zeros_genotype() + " --grammar " + (dir / "g.bnf").string(), &out) == 0);
    CHECK(out.rfind("sin(x)\n", 0) == 0);
    CHECK(testing::run_cli("map " + zeros_genotype() + " --grammar " + (dir / "missing.bnf").string(), &out) != 0);
}

TEST_CASE("curves writes an x,y table", "[cli][curves]") {
    const auto dir = testing::scratch_dir("curves");
    const auto csv = dir / "c.csv";
    CHECK(testing::run_cli("curves \"max(x, 2.0)\" --out " + csv.string()) == 0);
    std::ifstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line == "x,y");
    std::size_t rows = 0;
    double first = 0.0;
    double last = 0.0;
    double min_y = 1e300;
    while (std::getline(in, line)) {
        const auto comma = line.find(',');
        const double xv = std::stod(line.substr(0, comma));
        const double yv = std::stod(line.substr(comma + 1));
        if (rows == 0) first = xv;
        last = xv;
        min_y = std::min(min_y, yv);
        ++rows;
    }
    CHECK(rows == 1000);
    CHECK(first == -10.0);
    CHECK(last == 10.0);
    CHECK(min_y == 2.0);
    CHECK_FALSE(fs::exists(dir / "c.csv.tmp"));

    std::string out;
    CHECK(testing::run_cli("curves \"min(x 0.1)\"", &out) != 0);
    CHECK(out.find("parse error") != std::string::npos);
}

TEST_CASE("config parsing", "[cli][config]") {
    const json good = small_config("data.csv", "wbcd", "out");
    const RunConfig c = parse_run_config(good, "/base");
    CHECK(c.dataset_path == "/base/data.csv");
    CHECK(c.network.max_epochs == 4);
    CHECK(c.evolution.population_size == 6);
    CHECK(c.evolution.generations == 3);
    CHECK(c.evolution.crossover_rate == 0.9);
    CHECK(c.evolution.seed == 5);
    CHECK(c.runs == 2);

    json bad = good;
    bad["populaton_size"] = 3;
    CHECK_THROWS_WITH(parse_run_config(bad), Catch::Matchers::ContainsSubstring("populaton_size"));
    bad = good;
    bad["evolution"]["tournament_size"] = 5;
    CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
    bad = good;
    bad["hidden_layers"] = 0;
    CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
    bad = good;
    bad["dataset"]["schema"] = "iris";
    CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
    bad = good;
    bad["fitness_mode"] = "accuracy";
    CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
    bad = good;
    bad["network"]["learning_rate"] = "fast";
    CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
    bad = good;
    bad.erase("dataset");
    CHECK_THROWS_AS(parse_run_config(bad), ConfigError);
}

TEST_CASE("evolve with a missing dataset fails cleanly", "[cli][evolve]") {
    const auto dir = testing::scratch_dir("missing");
    const auto cfg = write_config(dir, small_config((dir / "nope.csv").string(), "wbcd", dir / "out"));
    std::string out;
    CHECK(testing::run_cli("evolve " + cfg.string(), &out) != 0);
    CHECK(out.find("nope.csv") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "out"));
}

TEST_CASE("evolve writes its artifacts", "[cli][evolve]") {
    const auto dir = testing::scratch_dir("evolve");
    const auto cfg = write_config(dir, small_config(testing::data_path("wdbc.data"), "wbcd", dir / "out"));
    std::string out;
    REQUIRE(testing::run_cli("evolve " + cfg.string(), &out) == 0);
    const json report = json::parse(slurp(dir / "out" / "run_report.json"));
    CHECK(report["elite"]["phenotypes"].size() == 3);
    CHECK(report["elite"]["genotype"].size() == 30);
    CHECK(report["generations"].size() == 3);
    CHECK(report["config"]["evolution"]["population_size"] == 6);

    std::ifstream gens(dir / "out" / "generations.csv");
    std::string header;
    std::getline(gens, header);
    CHECK(header == "generation,best_fitness,mean_fitness,failures");
    for (int i = 1; i <= 3; ++i) CHECK(fs::exists(dir / "out" / "curves" / ("elite_af" + std::to_string(i) + ".csv")));
}

TEST_CASE("baseline reports the best run", "[cli][baseline]") {
    const auto dir = testing::scratch_dir("baseline");
    const auto cfg = write_config(dir, small_config(testing::data_path("wdbc.data"), "wbcd", dir / "out"));
    REQUIRE(testing::run_cli("baseline " + cfg.string()) == 0);
    const json report = json::parse(slurp(dir / "out" / "baseline_report.json"));
    CHECK(report["runs"].size() == 2);
    CHECK(report["activation"] == "max(x,0.0)");
    const double mae = report["best"]["mae"];
    const double rmse = report["best"]["rmse"];
    CHECK(rmse == Approx(std::sqrt(mae)).epsilon(1e-12));
    CHECK(slurp(dir / "out" / "baseline.csv").rfind("dataset,training_accuracy,mae,rmse,f1\nwbcd,", 0) == 0);

    // reproducible
    const std::string first = slurp(dir / "out" / "baseline_report.json");
    REQUIRE(testing::run_cli("baseline " + cfg.string()) == 0);
    CHECK(slurp(dir / "out" / "baseline_report.json") == first);
}

TEST_CASE("eval trains with stored phenotypes", "[cli][eval]") {
    const auto dir = testing::scratch_dir("eval");
    json j = small_config(testing::data_path("processed.cleveland.data"), "heart", dir / "out");
    j["network"]["max_epochs"] = 10;
    const auto cfg = write_config(dir, j);
    std::ofstream(dir / "heart.txt") << "# input, hidden, output\ntanh(x)/pow(tanh(x),3.0)\nmax(x,1.0)+sin(x)/max(x,0.1)\nmin(x,2.0)-tanh(x)\n";
    std::string out;
    REQUIRE(testing::run_cli("eval " + (dir / "heart.txt").string() + " " + cfg.string(), &out) == 0);
    const json r = json::parse(out);
    CHECK(r["activations"].size() == 3);
    for (const char* k : {"accuracy", "mae", "rmse", "f1"}) CHECK(std::isfinite(r["test_metrics"][k].get<double>()));
    std::string again;
    REQUIRE(testing::run_cli("eval " + (dir / "heart.txt").string() + " " + cfg.string(), &again) == 0);
    CHECK(again == out);

    std::ofstream(dir / "two.txt") << "sin(x)\ncos(x)\n";
    CHECK(testing::run_cli("eval " + (dir / "two.txt").string() + " " + cfg.string(), &out) != 0);
    CHECK(out.find("expected 3 expressions") != std::string::npos);
}
