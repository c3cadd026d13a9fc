#pragma once

// Command implementations behind the `geaf` tool. Each returns a process exit
// status and reports problems on `err`; nothing is written to disk unless the
// command succeeds.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "geaf/run.hpp"

namespace geaf::cli {

inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

namespace detail {

inline std::string read_file(const std::filesystem::path& p, const char* what) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError(std::string("cannot open ") + what + " '" + p.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline std::filesystem::path output_dir(const RunConfig& c, const std::optional<std::string>& override_dir) {
    return override_dir ? std::filesystem::path(*override_dir) : std::filesystem::path(c.output_dir);
}

}  // namespace detail

inline int cmd_evolve(const std::string& config_path, const std::optional<std::string>& out_dir, std::ostream& out,
                      std::ostream& err) {
    try {
        const RunConfig c = load_run_config(config_path);
        const EvolveArtifacts a = run_evolution(c);
        const auto dir = detail::output_dir(c, out_dir);
        write_evolve_artifacts(a, dir);
        out << "elite fitness " << format_number(a.report.elite.fitness) << " test f1 "
            << format_number(a.report.elite.metrics.f1) << '\n';
        for (const auto& t : a.report.elite.phenotype_texts()) out << t << '\n';
        out << "artifacts in " << dir.string() << '\n';
        return kOk;
    } catch (const std::exception& e) {
        err << "geaf evolve: " << e.what() << '\n';
        return kFailure;
    }
}

inline int cmd_baseline(const std::string& config_path, const std::optional<std::string>& out_dir, std::ostream& out,
                        std::ostream& err) {
    try {
        const RunConfig c = load_run_config(config_path);
        const Dataset ds = load_csv(c.dataset_path, c.schema);
        const BaselineReport b = run_baseline(c, ds);
        const auto dir = detail::output_dir(c, out_dir);
        const std::string table = baseline_csv(b, c.schema.name);
        write_atomic(dir / "baseline_report.json", as_json(b, c.echo).dump(2) + "\n");
        write_atomic(dir / "baseline.csv", table);
        out << table;
        return kOk;
    } catch (const std::exception& e) {
        err << "geaf baseline: " << e.what() << '\n';
        return kFailure;
    }
}

inline int cmd_map(const std::string& genotype, std::size_t n_functions, const std::optional<std::string>& grammar_file,
                   std::ostream& out, std::ostream& err) {
    Genotype g;
    try {
        g = Genotype::parse(genotype);
    } catch (const Error& e) {
        err << "geaf map: usage error: " << e.what() << " (expected " << kGenomeLength << " comma-separated integers in [0,"
            << kCodonMax << "])\n";
        return kUsage;
    }
    if (n_functions < 1) {
        err << "geaf map: usage error: -n must be at least 1\n";
        return kUsage;
    }
    try {
        const Grammar gr = grammar_file ? load_grammar(detail::read_file(*grammar_file, "grammar file")) : default_grammar();
        const MappingResult r = map_genotype(g, gr, n_functions);
        for (const auto& e : r.expressions) out << to_text(e) << '\n';
        out << "consumed " << r.trace.codons_consumed << '\n' << "wraps " << r.trace.wraps_used << '\n';
        return kOk;
    } catch (const std::exception& e) {
        err << "geaf map: " << e.what() << '\n';
        return kFailure;
    }
}

inline int cmd_curves(const std::string& expr_text, double lo, double hi, std::size_t n,
                      const std::optional<std::string>& out_path, std::ostream& out, std::ostream& err) {
    try {
        const ActivationExpr e = parse_text(expr_text);
        const std::string csv = curve_csv(sample_curve(e, lo, hi, n));
        if (out_path) {
            write_atomic(*out_path, csv);
        } else {
            out << csv;
        }
        return kOk;
    } catch (const ParseError& e) {
        err << "geaf curves: cannot parse '" << expr_text << "': " << e.what() << '\n';
        return kFailure;
    } catch (const std::exception& e) {
        err << "geaf curves: " << e.what() << '\n';
        return kFailure;
    }
}

/// Expression file: one expression per line, input layer first; blank lines and
/// lines starting with '#' are ignored.
inline std::vector<ActivationExpr> read_expression_list(const std::string& text) {
    std::vector<ActivationExpr> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = geaf::detail::trim(line);
        if (t.empty() || t.front() == '#') continue;
        try {
            out.push_back(parse_text(t));
        } catch (const ParseError& e) {
            throw ConfigError("expression file line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

inline int cmd_eval(const std::string& exprs_path, const std::string& config_path, std::ostream& out, std::ostream& err) {
    try {
        const auto acts = read_expression_list(detail::read_file(exprs_path, "expression file"));
        const RunConfig c = load_run_config(config_path);
        const EvalReport r = run_eval(c, acts);
        out << as_json(r, c.echo).dump(2) << '\n';
        return r.trial.train.failed ? kFailure : kOk;
    } catch (const std::exception& e) {
        err << "geaf eval: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace geaf::cli
