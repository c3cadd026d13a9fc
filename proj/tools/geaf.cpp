#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "geaf/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Evolve, inspect and evaluate neural-network activation functions"};
    app.require_subcommand(1);

    std::string config;
    std::optional<std::string> out_dir;
    auto* evolve = app.add_subcommand("evolve", "run the evolutionary search");
    evolve->add_option("config", config, "run configuration (JSON)")->required();
    evolve->add_option("--out", out_dir, "output directory (overrides output_dir)");

    auto* baseline = app.add_subcommand("baseline", "train the rectifier baseline over several seeds");
    baseline->add_option("config", config, "run configuration (JSON)")->required();
    baseline->add_option("--out", out_dir, "output directory (overrides output_dir)");

    std::string genotype;
    std::size_t n_functions = 1;
    std::optional<std::string> grammar;
    auto* map = app.add_subcommand("map", "map a genotype to activation expressions");
    map->add_option("genotype", genotype, "30 comma-separated codons")->required();
    map->add_option("-n,--functions", n_functions, "number of expressions to derive");
    map->add_option("--grammar", grammar, "BNF grammar file (default: built-in grammar)");

    std::string expr;
    double lo = -10.0;
    double hi = 10.0;
    std::size_t n_points = 1000;
    std::optional<std::string> out_path;
    auto* curves = app.add_subcommand("curves", "sample an activation expression as x,y CSV");
    curves->add_option("expression", expr, "expression text, e.g. \"max(x, 2.0)\"")->required();
    curves->add_option("--lo", lo, "first x");
    curves->add_option("--hi", hi, "last x");
    curves->add_option("--n", n_points, "number of points");
    curves->add_option("--out", out_path, "output CSV (default: standard output)");

    std::string exprs_file;
    auto* eval = app.add_subcommand("eval", "train once with fixed activations and report metrics");
    eval->add_option("expressions", exprs_file, "file with one expression per layer, input layer first")->required();
    eval->add_option("config", config, "run configuration (JSON)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : geaf::cli::kUsage;
    }

    if (*evolve) return geaf::cli::cmd_evolve(config, out_dir, std::cout, std::cerr);
    if (*baseline) return geaf::cli::cmd_baseline(config, out_dir, std::cout, std::cerr);
    if (*map) return geaf::cli::cmd_map(genotype, n_functions, grammar, std::cout, std::cerr);
    if (*curves) return geaf::cli::cmd_curves(expr, lo, hi, n_points, out_path, std::cout, std::cerr);
    return geaf::cli::cmd_eval(exprs_file, config, std::cout, std::cerr);
}
