#pragma once

// Shared fixtures for the test suites.

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "geaf/geaf.hpp"

namespace geaf::testing {

inline std::string data_path(const std::string& file) { return std::string(GEAF_TEST_DATA_DIR) + "/" + file; }

inline Genotype random_genotype(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, kCodonMax);
    Genotype::Codons c{};
    for (int& v : c) v = d(rng);
    return Genotype(c);
}

/// Sonar-shaped stand-in: 208 rows of 60 energies in [0,1], labels M/R in the
/// last column, the classes separated by a shift in the lower bands.
inline std::string synthetic_sonar_csv(std::uint64_t seed = 7) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::string out;
    char buf[32];
    for (int r = 0; r < 208; ++r) {
        const bool mine = r % 2 == 0;
        for (int c = 0; c < 60; ++c) {
            double v = u(rng) * (c < 20 ? (mine ? 0.6 : 0.3) : 0.5) + (c < 20 && mine ? 0.3 : 0.0);
            v = std::min(1.0, std::max(0.0, v));
            std::snprintf(buf, sizeof buf, "%.4f,", v);
            out += buf;
        }
        out += mine ? "M\n" : "R\n";
    }
    return out;
}

inline Dataset synthetic_sonar() { return parse_csv(synthetic_sonar_csv(), *bundled_schema("sonar"), "synthetic-sonar"); }

inline Dataset wbcd() { return load_csv(data_path("wdbc.data"), *bundled_schema("wbcd")); }

inline Dataset heart() { return load_csv(data_path("processed.cleveland.data"), *bundled_schema("heart")); }

/// Runs the command-line tool, returning its exit status; stdout+stderr go to `output`.
inline int run_cli(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = std::string("\"") + GEAF_CLI_PATH + "\" " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return -1;
    std::array<char, 4096> buf{};
    std::string text;
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) text.append(buf.data(), n);
    const int status = pclose(pipe);
    if (output) *output = text;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("geaf-test-" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace geaf::testing
