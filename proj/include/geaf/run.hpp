#pragma once

// Run configuration (JSON), experiment drivers and their on-disk artifacts.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "geaf/dataset.hpp"
#include "geaf/error.hpp"
#include "geaf/evolution.hpp"
#include "geaf/expr.hpp"
#include "geaf/grammar.hpp"
#include "geaf/metrics.hpp"
#include "geaf/network.hpp"

namespace geaf {

using json = nlohmann::ordered_json;

enum class SplitMode : std::uint8_t { per_run, frozen };

struct RunConfig {
    std::string dataset_path;
    DatasetSchema schema;
    NetworkConfig network;  // n_features is filled in from the data
    EvolutionConfig evolution;
    MappingLimits limits;
    std::optional<std::string> grammar_file;
    bool standardize = true;
    double test_fraction = 0.25;
    double validation_fraction = 0.20;
    SplitMode split_mode = SplitMode::per_run;
    std::uint64_t split_seed = 0;  // used when split_mode is frozen
    std::uint64_t seed = 0;
    std::size_t runs = 10;  // baseline repetitions
    std::string output_dir = "geaf-out";
    json echo;              // normalized config, embedded in artifacts
};

namespace detail {

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline void reject_unknown(const json& obj, std::initializer_list<const char*> known, const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* k : known) ok = ok || it.key() == k;
        if (!ok) throw ConfigError("unknown config key '" + it.key() + "' in " + where);
    }
}

inline DatasetSchema parse_schema(const json& j) {
    if (j.is_string()) {
        auto s = bundled_schema(j.get<std::string>());
        if (!s) throw ConfigError("unknown bundled schema '" + j.get<std::string>() + "' (heart, pima, sonar, wbcd)");
        return *s;
    }
    if (!j.is_object()) throw ConfigError("dataset.schema must be a bundled name or an object");
    reject_unknown(j, {"name", "label_column", "label_mode", "positive_label", "negative_label", "drop_columns", "header",
                       "missing_token"},
                   "dataset.schema");
    DatasetSchema s;
    s.name = get_or<std::string>(j, "name", "custom");
    s.label_column = get_or<int>(j, "label_column", -1);
    const auto mode = get_or<std::string>(j, "label_mode", "tokens");
    if (mode == "tokens") {
        s.label_mode = LabelMode::tokens;
    } else if (mode == "numeric") {
        s.label_mode = LabelMode::numeric;
    } else {
        throw ConfigError("dataset.schema.label_mode must be 'tokens' or 'numeric'");
    }
    s.positive_label = get_or<std::string>(j, "positive_label", "1");
    s.negative_label = get_or<std::string>(j, "negative_label", "0");
    s.drop_columns = get_or<std::vector<int>>(j, "drop_columns", {});
    const auto header = get_or<std::string>(j, "header", "detect");
    if (header == "detect") {
        s.header = HeaderMode::detect;
    } else if (header == "present") {
        s.header = HeaderMode::present;
    } else if (header == "absent") {
        s.header = HeaderMode::absent;
    } else {
        throw ConfigError("dataset.schema.header must be 'detect', 'present' or 'absent'");
    }
    if (j.contains("missing_token")) s.missing_token = get_or<std::string>(j, "missing_token", "");
    if (s.label_mode == LabelMode::tokens && s.positive_label == s.negative_label)
        throw ConfigError("dataset.schema: positive_label and negative_label must differ");
    return s;
}

}  // namespace detail

/// Parses and validates a run configuration. Relative dataset and grammar
/// paths are resolved against `base_dir`.
inline RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir = {}) {
    using detail::get_or;
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    detail::reject_unknown(j, {"dataset", "hidden_layers", "network", "evolution", "mapping", "fitness_mode", "grammar_file",
                               "standardize", "split", "seed", "runs", "output_dir"},
                           "config");
    RunConfig c;
    if (!j.contains("dataset")) throw ConfigError("config is missing 'dataset'");
    const json& ds = j.at("dataset");
    detail::reject_unknown(ds, {"path", "schema"}, "dataset");
    if (!ds.contains("path")) throw ConfigError("config is missing 'dataset.path'");
    if (!ds.contains("schema")) throw ConfigError("config is missing 'dataset.schema'");
    auto resolve = [&base_dir](const std::string& p) {
        const std::filesystem::path path(p);
        return (path.is_absolute() || base_dir.empty() ? path : base_dir / path).string();
    };
    c.dataset_path = resolve(get_or<std::string>(ds, "path", ""));
    c.schema = detail::parse_schema(ds.at("schema"));

    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    c.network.hidden_layers = get_or<std::size_t>(j, "hidden_layers", 1);
    if (j.contains("network")) {
        const json& n = j.at("network");
        detail::reject_unknown(n, {"nodes_per_hidden", "max_epochs", "batch_size", "early_stop_patience", "early_stop_min_delta",
                                   "learning_rate", "beta1", "beta2", "epsilon", "output_activation"},
                               "network");
        NetworkConfig& nc = c.network;
        nc.nodes_per_hidden = get_or(n, "nodes_per_hidden", nc.nodes_per_hidden);
        nc.max_epochs = get_or(n, "max_epochs", nc.max_epochs);
        nc.batch_size = get_or(n, "batch_size", nc.batch_size);
        nc.early_stop_patience = get_or(n, "early_stop_patience", nc.early_stop_patience);
        nc.early_stop_min_delta = get_or(n, "early_stop_min_delta", nc.early_stop_min_delta);
        nc.learning_rate = get_or(n, "learning_rate", nc.learning_rate);
        nc.beta1 = get_or(n, "beta1", nc.beta1);
        nc.beta2 = get_or(n, "beta2", nc.beta2);
        nc.epsilon = get_or(n, "epsilon", nc.epsilon);
        const auto out = get_or<std::string>(n, "output_activation", "evolved");
        if (out == "evolved") {
            nc.output_activation = OutputActivation::evolved;
        } else if (out == "fixed_sigmoid") {
            nc.output_activation = OutputActivation::fixed_sigmoid;
        } else {
            throw ConfigError("network.output_activation must be 'evolved' or 'fixed_sigmoid'");
        }
    }
    if (j.contains("evolution")) {
        const json& e = j.at("evolution");
        detail::reject_unknown(e, {"population_size", "generations", "crossover_rate", "mutation_rate", "tournament_size",
                                   "elitism_size", "crossover_events_per_generation", "threads"},
                               "evolution");
        EvolutionConfig& ec = c.evolution;
        ec.population_size = get_or(e, "population_size", ec.population_size);
        ec.generations = get_or(e, "generations", ec.generations);
        ec.crossover_rate = get_or(e, "crossover_rate", ec.crossover_rate);
        ec.mutation_rate = get_or(e, "mutation_rate", ec.mutation_rate);
        ec.tournament_size = get_or(e, "tournament_size", ec.tournament_size);
        ec.elitism_size = get_or(e, "elitism_size", ec.elitism_size);
        ec.crossover_events_per_generation = get_or(e, "crossover_events_per_generation", ec.crossover_events_per_generation);
        ec.threads = get_or(e, "threads", ec.threads);
    }
    c.evolution.seed = c.seed;
    const auto fm = get_or<std::string>(j, "fitness_mode", "product");
    if (fm == "product") {
        c.evolution.fitness_mode = FitnessMode::product;
    } else if (fm == "test_f1") {
        c.evolution.fitness_mode = FitnessMode::test_f1;
    } else {
        throw ConfigError("fitness_mode must be 'product' or 'test_f1'");
    }
    if (j.contains("mapping")) {
        const json& m = j.at("mapping");
        detail::reject_unknown(m, {"max_wraps", "max_depth"}, "mapping");
        c.limits.max_wraps = get_or(m, "max_wraps", c.limits.max_wraps);
        c.limits.max_depth = get_or(m, "max_depth", c.limits.max_depth);
        if (c.limits.max_wraps < 1 || c.limits.max_depth < 1) throw ConfigError("mapping limits must be at least 1");
    }
    if (j.contains("grammar_file")) c.grammar_file = resolve(get_or<std::string>(j, "grammar_file", ""));
    c.standardize = get_or(j, "standardize", c.standardize);
    if (j.contains("split")) {
        const json& s = j.at("split");
        detail::reject_unknown(s, {"test_fraction", "validation_fraction", "mode", "seed"}, "split");
        c.test_fraction = get_or(s, "test_fraction", c.test_fraction);
        c.validation_fraction = get_or(s, "validation_fraction", c.validation_fraction);
        const auto mode = get_or<std::string>(s, "mode", "per_run");
        if (mode == "per_run") {
            c.split_mode = SplitMode::per_run;
        } else if (mode == "frozen") {
            c.split_mode = SplitMode::frozen;
        } else {
            throw ConfigError("split.mode must be 'per_run' or 'frozen'");
        }
        c.split_seed = get_or(s, "seed", c.seed);
    } else {
        c.split_seed = c.seed;
    }
    c.runs = get_or(j, "runs", c.runs);
    if (c.runs < 1) throw ConfigError("runs must be at least 1");
    c.output_dir = resolve(get_or<std::string>(j, "output_dir", c.output_dir));

    c.evolution.validate();
    NetworkConfig probe = c.network;
    probe.n_features = 1;
    probe.validate();

    // Normalized echo: every effective value, so an artifact replays exactly.
    json& echo = c.echo;
    echo["dataset"] = {{"path", get_or<std::string>(ds, "path", "")}, {"schema", ds.at("schema")}};
    echo["hidden_layers"] = c.network.hidden_layers;
    echo["network"] = {{"nodes_per_hidden", c.network.nodes_per_hidden},
                       {"max_epochs", c.network.max_epochs},
                       {"batch_size", c.network.batch_size},
                       {"early_stop_patience", c.network.early_stop_patience},
                       {"early_stop_min_delta", c.network.early_stop_min_delta},
                       {"learning_rate", c.network.learning_rate},
                       {"beta1", c.network.beta1},
                       {"beta2", c.network.beta2},
                       {"epsilon", c.network.epsilon},
                       {"output_activation", std::string(to_string(c.network.output_activation))}};
    echo["evolution"] = {{"population_size", c.evolution.population_size},
                         {"generations", c.evolution.generations},
                         {"crossover_rate", c.evolution.crossover_rate},
                         {"mutation_rate", c.evolution.mutation_rate},
                         {"tournament_size", c.evolution.tournament_size},
                         {"elitism_size", c.evolution.elitism_size},
                         {"crossover_events_per_generation", c.evolution.crossover_events_per_generation}};
    echo["mapping"] = {{"max_wraps", c.limits.max_wraps}, {"max_depth", c.limits.max_depth}};
    echo["fitness_mode"] = std::string(to_string(c.evolution.fitness_mode));
    if (j.contains("grammar_file")) echo["grammar_file"] = j.at("grammar_file");
    echo["standardize"] = c.standardize;
    echo["split"] = {{"test_fraction", c.test_fraction},
                     {"validation_fraction", c.validation_fraction},
                     {"mode", c.split_mode == SplitMode::per_run ? "per_run" : "frozen"},
                     {"seed", c.split_seed}};
    echo["seed"] = c.seed;
    echo["runs"] = c.runs;
    return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

inline Grammar grammar_for(const RunConfig& c) {
    if (!c.grammar_file) return default_grammar();
    std::ifstream in(*c.grammar_file);
    if (!in) throw ConfigError("cannot open grammar file '" + *c.grammar_file + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_grammar(buf.str());
}

/// Split used by run `run_index` (0-based).
inline Split prepare_split(const Dataset& ds, const RunConfig& c, std::size_t run_index = 0) {
    const std::uint64_t seed = c.split_mode == SplitMode::frozen ? c.split_seed : c.seed + run_index;
    Split s = shuffle_split(ds, seed, c.test_fraction, c.validation_fraction);
    return c.standardize ? standardize(std::move(s)) : s;
}

inline NetworkConfig network_for(const RunConfig& c, const Dataset& ds) {
    NetworkConfig n = c.network;
    n.n_features = ds.features.cols;
    n.validate();
    return n;
}

// ---------------------------------------------------------------------------
// JSON views

inline json as_json(const MetricsReport& m) {
    return {{"accuracy", m.accuracy}, {"mae", m.mae}, {"rmse", m.rmse}, {"f1", m.f1},
            {"tp", m.tp},             {"fp", m.fp},   {"tn", m.tn},     {"fn", m.fn}};
}

inline json as_json(const Individual& ind) {
    json codons = json::array();
    for (int c : ind.genotype.codons()) codons.push_back(c);
    return {{"genotype", codons},
            {"phenotypes", ind.phenotype_texts()},
            {"fitness", ind.fitness},
            {"validation_accuracy", ind.validation_accuracy},
            {"failure", std::string(to_string(ind.failure))},
            {"test_metrics", as_json(ind.metrics)}};
}

inline json as_json(const GenerationRecord& g) {
    return {{"generation", g.generation},         {"best_fitness", g.best_fitness},
            {"mean_fitness", g.mean_fitness},     {"elite_fitness", g.elite_fitness},
            {"elite_phenotypes", g.elite_phenotypes}, {"failures", g.failures}};
}

inline json as_json(const RunReport& r, const json& config_echo) {
    json gens = json::array();
    for (const auto& g : r.history) gens.push_back(as_json(g));
    return {{"config", config_echo},
            {"elite", as_json(r.elite)},
            {"initial_failures", r.initial_failures},
            {"generations", gens}};
}

// ---------------------------------------------------------------------------
// Artifacts

/// Writes via a sibling temporary file and rename, so readers never see a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw Error("write to '" + tmp.string() + "' failed");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string curve_csv(const std::vector<std::pair<double, double>>& pts) {
    std::string out = "x,y\n";
    for (const auto& [x, y] : pts) {
        out += format_number(x);
        out += ',';
        out += format_number(y);
        out += '\n';
    }
    return out;
}

inline std::string generations_csv(const std::vector<GenerationRecord>& history) {
    std::string out = "generation,best_fitness,mean_fitness,failures\n";
    for (const auto& g : history) {
        out += std::to_string(g.generation) + ',' + format_number(g.best_fitness) + ',' + format_number(g.mean_fitness) + ',' +
               std::to_string(g.failures) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct EvolveArtifacts {
    RunReport report;
    json report_json;
};

/// One evolutionary run (run index 0) on the configured dataset.
inline EvolveArtifacts run_evolution(const RunConfig& c) {
    const Dataset ds = load_csv(c.dataset_path, c.schema);
    const Grammar g = grammar_for(c);
    const Split split = prepare_split(ds, c);
    const NetworkConfig net = network_for(c, ds);
    EvolveArtifacts a;
    a.report = evolve(split, c.evolution, net, g, c.limits);
    a.report_json = as_json(a.report, c.echo);
    return a;
}

/// Writes the run report, generation log and one elite curve per activation.
inline void write_evolve_artifacts(const EvolveArtifacts& a, const std::filesystem::path& dir) {
    write_atomic(dir / "run_report.json", a.report_json.dump(2) + "\n");
    write_atomic(dir / "generations.csv", generations_csv(a.report.history));
    for (std::size_t i = 0; i < a.report.elite.phenotypes.size(); ++i) {
        write_atomic(dir / "curves" / ("elite_af" + std::to_string(i + 1) + ".csv"),
                     curve_csv(sample_curve(a.report.elite.phenotypes[i], -10.0, 10.0, 1000)));
    }
}

/// Trains one network with fixed activations; the metrics of one trial.
struct TrialResult {
    TrainReport train;
    double training_accuracy = 0.0;
    MetricsReport test;
};

inline TrialResult run_trial(const Split& split, const NetworkConfig& net, std::span<const ActivationExpr> activations,
                             std::uint64_t seed) {
    Network model = init_network(net, activations, seed);
    TrialResult r;
    r.train = train(model, split.train, split.validation, splitmix64(seed));
    if (r.train.failed) return r;
    r.training_accuracy = compute_metrics(split.train.y, predict_labels(model, split.train.X)).accuracy;
    r.test = compute_metrics(split.test.y, predict_labels(model, split.test.X));
    return r;
}

inline ActivationExpr rectifier() { return build::max(build::x(), 0.0); }

struct BaselineReport {
    std::vector<TrialResult> runs;
    std::size_t best_run = 0;  // highest test F1, earliest on ties
};

/// Rectifier on the input and hidden layers, logistic output, `c.runs` seeds.
/// Run i uses seed + i for both the split (unless frozen) and the weights.
inline BaselineReport run_baseline(const RunConfig& c, const Dataset& ds) {
    NetworkConfig net = network_for(c, ds);
    net.output_activation = OutputActivation::fixed_sigmoid;
    const std::vector<ActivationExpr> acts(net.activation_count(), rectifier());
    BaselineReport rep;
    for (std::size_t i = 0; i < c.runs; ++i) {
        const Split split = prepare_split(ds, c, i);
        rep.runs.push_back(run_trial(split, net, acts, c.seed + i));
        if (rep.runs.back().test.f1 > rep.runs[rep.best_run].test.f1) rep.best_run = i;
    }
    return rep;
}

inline json as_json(const BaselineReport& b, const json& config_echo) {
    json runs = json::array();
    for (std::size_t i = 0; i < b.runs.size(); ++i) {
        const auto& r = b.runs[i];
        runs.push_back({{"run", i},
                        {"failed", r.train.failed},
                        {"epochs_run", r.train.epochs_run},
                        {"training_accuracy", r.training_accuracy},
                        {"validation_accuracy", r.train.validation_accuracy},
                        {"test_metrics", as_json(r.test)}});
    }
    const auto& best = b.runs[b.best_run];
    return {{"config", config_echo},
            {"activation", to_text(rectifier())},
            {"best_run", b.best_run},
            {"best",
             {{"training_accuracy", best.training_accuracy},
              {"mae", best.test.mae},
              {"rmse", best.test.rmse},
              {"f1", best.test.f1}}},
            {"runs", runs}};
}

struct EvalReport {
    TrialResult trial;
    std::vector<std::string> texts;
};

/// Trains once (run index 0) with the given activations, input layer first.
inline EvalReport run_eval(const RunConfig& c, const std::vector<ActivationExpr>& acts) {
    const Dataset ds = load_csv(c.dataset_path, c.schema);
    const NetworkConfig net = network_for(c, ds);
    if (acts.size() != net.activation_count())
        throw ConfigError("expected " + std::to_string(net.activation_count()) + " expressions for " +
                          std::to_string(net.hidden_layers) + " hidden layer(s), got " + std::to_string(acts.size()));
    EvalReport r;
    for (const auto& a : acts) r.texts.push_back(to_text(a));
    r.trial = run_trial(prepare_split(ds, c), net, acts, c.seed);
    return r;
}

inline json as_json(const EvalReport& r, const json& config_echo) {
    return {{"config", config_echo},
            {"activations", r.texts},
            {"failed", r.trial.train.failed},
            {"failure", std::string(to_string(r.trial.train.failure_kind))},
            {"epochs_run", r.trial.train.epochs_run},
            {"training_accuracy", r.trial.training_accuracy},
            {"validation_accuracy", r.trial.train.validation_accuracy},
            {"test_metrics", as_json(r.trial.test)}};
}

/// One-row table: dataset,training_accuracy,mae,rmse,f1.
inline std::string baseline_csv(const BaselineReport& b, const std::string& dataset) {
    const auto& best = b.runs[b.best_run];
    std::ostringstream out;
    out << "dataset,training_accuracy,mae,rmse,f1\n"
        << dataset << ',' << format_number(best.training_accuracy) << ',' << format_number(best.test.mae) << ','
        << format_number(best.test.rmse) << ',' << format_number(best.test.f1) << '\n';
    return out.str();
}

}  // namespace geaf
