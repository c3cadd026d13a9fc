#pragma once

// Grammatical-evolution loop over activation genotypes.
//
// Each generation: refresh the elite, run crossover events (tournament of four
// split into two pairs, single-point crossover, failed children discarded in
// favour of their parent), then mutate non-elite individuals. Individuals are
// scored by training a network with their mapped activations.

#include <algorithm>
#include <array>
#include <cassert>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <future>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "geaf/dataset.hpp"
#include "geaf/error.hpp"
#include "geaf/expr.hpp"
#include "geaf/grammar.hpp"
#include "geaf/metrics.hpp"
#include "geaf/network.hpp"

namespace geaf {

using Rng = std::mt19937_64;

struct EvolutionConfig {
    std::size_t population_size = 100;
    std::size_t generations = 500;
    double crossover_rate = 0.90;
    double mutation_rate = 0.20;
    std::size_t tournament_size = 4;
    std::size_t elitism_size = 1;
    std::size_t crossover_events_per_generation = 1;
    FitnessMode fitness_mode = FitnessMode::product;
    std::uint64_t seed = 0;
    std::size_t threads = 1;  // 0: one per hardware thread

    void validate() const {
        if (population_size < 1) throw ConfigError("population_size must be at least 1");
        if (!(crossover_rate >= 0.0 && crossover_rate <= 1.0)) throw ConfigError("crossover_rate must lie in [0,1]");
        if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw ConfigError("mutation_rate must lie in [0,1]");
        if (tournament_size != 4) throw ConfigError("tournament_size must be 4 (two pairs of two)");
        if (elitism_size != 1) throw ConfigError("elitism_size must be 1");
    }
};

enum class EvalFailure : std::uint8_t { none, mapping_overflow, nan_loss, non_finite_weights, all_batches_guarded,
                                         scoring_guarded };

inline std::string_view to_string(EvalFailure f) {
    switch (f) {
        case EvalFailure::none: return "none";
        case EvalFailure::mapping_overflow: return "mapping_overflow";
        case EvalFailure::nan_loss: return "nan_loss";
        case EvalFailure::non_finite_weights: return "non_finite_weights";
        case EvalFailure::all_batches_guarded: return "all_batches_guarded";
        case EvalFailure::scoring_guarded: return "scoring_guarded";
    }
    return "?";
}

struct Individual {
    Genotype genotype;
    std::vector<ActivationExpr> phenotypes;  // empty when the mapping failed
    MetricsReport metrics;                   // on the test part
    double validation_accuracy = 0.0;
    double fitness = 0.0;
    bool evaluated = false;
    EvalFailure failure = EvalFailure::none;

    bool failed() const { return failure != EvalFailure::none; }

    std::vector<std::string> phenotype_texts() const {
        std::vector<std::string> out;
        for (const auto& e : phenotypes) out.push_back(to_text(e));
        return out;
    }

    /// Fresh, unevaluated individual.
    static Individual of(Genotype g) {
        Individual ind;
        ind.genotype = std::move(g);
        return ind;
    }
};

/// Everything an evaluation needs besides the individual itself.
struct EvaluationContext {
    const Split* split = nullptr;
    NetworkConfig network;
    const Grammar* grammar = nullptr;
    MappingLimits limits;
    FitnessMode fitness_mode = FitnessMode::product;
    std::uint64_t run_seed = 0;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Training seed for a genotype; independent of evaluation order.
inline std::uint64_t genotype_seed(std::uint64_t run_seed, const Genotype& g) {
    std::uint64_t h = splitmix64(run_seed);
    for (int c : g.codons()) h = splitmix64(h ^ static_cast<std::uint64_t>(c));
    return h;
}

/// Maps, trains and scores `ind` in place. Already-evaluated individuals are
/// left untouched. Failures of any kind leave fitness at exactly 0.
inline void evaluate_individual(Individual& ind, const EvaluationContext& ctx) {
    if (ind.evaluated) return;
    ind.phenotypes.clear();
    ind.metrics = {};
    ind.validation_accuracy = 0.0;
    ind.fitness = 0.0;
    ind.failure = EvalFailure::none;
    ind.evaluated = true;

    try {
        ind.phenotypes = map_genotype(ind.genotype, *ctx.grammar, ctx.network.activation_count(), ctx.limits).expressions;
    } catch (const MappingOverflow&) {
        ind.failure = EvalFailure::mapping_overflow;
        return;
    }

    const std::uint64_t seed = genotype_seed(ctx.run_seed, ind.genotype);
    Network net = init_network(ctx.network, ind.phenotypes, seed);
    const TrainReport rep = train(net, ctx.split->train, ctx.split->validation, splitmix64(seed));
    if (rep.failed) {
        ind.failure = rep.failure_kind == FailureKind::nan_loss ? EvalFailure::nan_loss : EvalFailure::non_finite_weights;
        return;
    }
    if (rep.every_batch_guarded()) {
        ind.failure = EvalFailure::all_batches_guarded;
        return;
    }
    // Scores read off guard-zeroed layers say nothing about the phenotype.
    const auto test = forward(net, ctx.split->test.X);
    if (rep.validation_guarded || test.guard_tripped) {
        ind.failure = EvalFailure::scoring_guarded;
        return;
    }
    std::vector<int> pred(test.probabilities.size());
    std::transform(test.probabilities.begin(), test.probabilities.end(), pred.begin(), threshold_label);
    ind.validation_accuracy = rep.validation_accuracy;
    ind.metrics = compute_metrics(ctx.split->test.y, pred);
    ind.fitness = fitness(ctx.fitness_mode, ind.validation_accuracy, ind.metrics.f1);
}

inline Individual evaluated(Individual ind, const EvaluationContext& ctx) {
    evaluate_individual(ind, ctx);
    return ind;
}

/// Evaluates every unevaluated individual, optionally on several threads.
/// Results do not depend on the thread count.
inline void evaluate_all(std::span<Individual*> inds, const EvaluationContext& ctx, std::size_t threads = 1) {
    if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    std::vector<Individual*> todo;
    for (Individual* i : inds)
        if (!i->evaluated) todo.push_back(i);
    if (threads <= 1 || todo.size() <= 1) {
        for (Individual* i : todo) evaluate_individual(*i, ctx);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t k = next++; k < todo.size(); k = next++) evaluate_individual(*todo[k], ctx);
    };
    std::vector<std::future<void>> jobs;
    for (std::size_t t = 0; t < std::min(threads, todo.size()); ++t) jobs.push_back(std::async(std::launch::async, worker));
    for (auto& j : jobs) j.get();
}

inline std::vector<Individual> init_population(const EvolutionConfig& evo, Rng& rng) {
    std::uniform_int_distribution<int> codon(0, kCodonMax);
    std::vector<Individual> pop;
    pop.reserve(evo.population_size);
    for (std::size_t i = 0; i < evo.population_size; ++i) {
        Genotype::Codons c{};
        for (int& v : c) v = codon(rng);
        pop.push_back(Individual::of(Genotype(c)));
    }
    return pop;
}

struct TournamentResult {
    std::array<std::size_t, 4> entrants{};
    std::size_t parent_a = 0;
    std::size_t parent_b = 0;
};

/// Pair winner: higher test F1, then higher fitness, then lower index.
inline std::size_t pair_winner(const std::vector<Individual>& pop, std::size_t i, std::size_t j) {
    const Individual& a = pop[i];
    const Individual& b = pop[j];
    if (a.metrics.f1 != b.metrics.f1) return a.metrics.f1 > b.metrics.f1 ? i : j;
    if (a.fitness != b.fitness) return a.fitness > b.fitness ? i : j;
    return std::min(i, j);
}

/// Four distinct entrants drawn uniformly; (0,1) and (2,3) in draw order form the pairs.
inline TournamentResult tournament_select(const std::vector<Individual>& pop, Rng& rng) {
    if (pop.size() < 4) throw Error("tournament selection needs at least 4 individuals, population has " + std::to_string(pop.size()));
    TournamentResult t;
    std::vector<std::size_t> idx(pop.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t k = 0; k < 4; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
        std::swap(idx[k], idx[pick(rng)]);
        t.entrants[k] = idx[k];
    }
    t.parent_a = pair_winner(pop, t.entrants[0], t.entrants[1]);
    t.parent_b = pair_winner(pop, t.entrants[2], t.entrants[3]);
    return t;
}

/// Single-point crossover at `point` in [1, 29].
inline std::pair<Individual, Individual> crossover_at(const Individual& a, const Individual& b, std::size_t point) {
    if (point < 1 || point >= kGenomeLength) throw Error("crossover point out of range");
    Genotype::Codons c1{};
    Genotype::Codons c2{};
    for (std::size_t i = 0; i < kGenomeLength; ++i) {
        c1[i] = i < point ? a.genotype[i] : b.genotype[i];
        c2[i] = i < point ? b.genotype[i] : a.genotype[i];
    }
    return {Individual::of(Genotype(c1)), Individual::of(Genotype(c2))};
}

inline std::pair<Individual, Individual> crossover(const Individual& a, const Individual& b, Rng& rng) {
    std::uniform_int_distribution<std::size_t> point(1, kGenomeLength - 1);
    return crossover_at(a, b, point(rng));
}

/// Replaces one uniformly chosen codon, used or not, with a uniform value in [0,100].
inline Individual mutate(const Individual& ind, Rng& rng) {
    std::uniform_int_distribution<std::size_t> where(0, kGenomeLength - 1);
    std::uniform_int_distribution<int> value(0, kCodonMax);
    const std::size_t i = where(rng);
    const int v = value(rng);
    return Individual::of(ind.genotype.with(i, v));
}

struct GenerationRecord {
    std::size_t generation = 0;
    double best_fitness = 0.0;
    double mean_fitness = 0.0;
    double elite_fitness = 0.0;
    std::vector<std::string> elite_phenotypes;
    std::size_t failures = 0;  // evaluations this generation that failed
};

struct EvolutionState {
    std::vector<Individual> population;
    std::optional<Individual> elite;
    std::size_t generation = 0;
    std::vector<GenerationRecord> history;
    std::map<Genotype::Codons, Individual> cache;  // evaluated genotypes
};

namespace detail {

/// Evaluates with a genotype-keyed cache; evaluation is deterministic per genotype.
inline std::size_t evaluate_cached(EvolutionState& st, std::span<Individual*> inds, const EvaluationContext& ctx,
                                   std::size_t threads) {
    std::vector<Individual*> fresh;
    std::map<Genotype::Codons, Individual*> first;
    for (Individual* i : inds) {
        if (i->evaluated) continue;
        if (auto it = st.cache.find(i->genotype.codons()); it != st.cache.end()) {
            *i = it->second;
        } else if (!first.contains(i->genotype.codons())) {
            first.emplace(i->genotype.codons(), i);
            fresh.push_back(i);
        }
    }
    evaluate_all(fresh, ctx, threads);
    std::size_t failures = 0;
    for (Individual* i : fresh) {
        st.cache.emplace(i->genotype.codons(), *i);
        if (i->failed()) ++failures;
    }
    for (Individual* i : inds)
        if (!i->evaluated) *i = st.cache.at(i->genotype.codons());
    return failures;
}

inline std::size_t best_index(const std::vector<Individual>& pop) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pop.size(); ++i)
        if (pop[i].fitness > pop[best].fitness) best = i;
    return best;
}

inline void update_elite(EvolutionState& st) {
    const Individual& best = st.population[best_index(st.population)];
    if (!st.elite || best.fitness > st.elite->fitness) st.elite = best;
}

inline std::optional<std::size_t> elite_position(const EvolutionState& st) {
    if (!st.elite) return std::nullopt;
    for (std::size_t i = 0; i < st.population.size(); ++i)
        if (st.population[i].genotype == st.elite->genotype) return i;
    return std::nullopt;
}

}  // namespace detail

/// Evaluates the initial population and sets the first elite.
inline void start_evolution(EvolutionState& st, const EvaluationContext& ctx, std::size_t threads = 1) {
    std::vector<Individual*> all;
    for (auto& i : st.population) all.push_back(&i);
    detail::evaluate_cached(st, all, ctx, threads);
    detail::update_elite(st);
}

/// Crosses population members `a` and `b` at `point`. Each child replaces its
/// own parent (first child: `a`) unless its evaluation failed, in which case the
/// parent stays. Returns the number of failed fresh evaluations.
inline std::size_t crossover_event(EvolutionState& st, std::size_t a, std::size_t b, std::size_t point,
                                   const EvaluationContext& ctx, std::size_t threads = 1) {
    auto& pop = st.population;
    auto [c1, c2] = crossover_at(pop.at(a), pop.at(b), point);
    Individual* kids[] = {&c1, &c2};
    const std::size_t failures = detail::evaluate_cached(st, kids, ctx, threads);
    if (!c1.failed()) pop[a] = std::move(c1);
    if (!c2.failed()) pop[b] = std::move(c2);
    return failures;
}

inline void step_generation(EvolutionState& st, const EvolutionConfig& evo, const EvaluationContext& ctx, Rng& rng) {
    auto& pop = st.population;
    std::size_t failures = 0;
    std::uniform_real_distribution<double> coin(0.0, 1.0);

    detail::update_elite(st);

    for (std::size_t e = 0; e < evo.crossover_events_per_generation; ++e) {
        if (pop.size() < 4 || coin(rng) >= evo.crossover_rate) continue;
        const TournamentResult t = tournament_select(pop, rng);
        std::uniform_int_distribution<std::size_t> point(1, kGenomeLength - 1);
        failures += crossover_event(st, t.parent_a, t.parent_b, point(rng), ctx, evo.threads);
    }

    // The elite stays in the population: if crossover displaced it, it takes the weakest slot.
    if (st.elite && !detail::elite_position(st)) {
        std::size_t worst = 0;
        for (std::size_t i = 1; i < pop.size(); ++i)
            if (pop[i].fitness < pop[worst].fitness) worst = i;
        pop[worst] = *st.elite;
    }

    // Mutation of everyone but the elite.
    const auto elite_at = detail::elite_position(st);
    std::vector<Individual*> mutants;
    for (std::size_t i = 0; i < pop.size(); ++i) {
        if (elite_at && *elite_at == i) continue;
        if (coin(rng) < evo.mutation_rate) {
            pop[i] = mutate(pop[i], rng);
            mutants.push_back(&pop[i]);
        }
    }
    failures += detail::evaluate_cached(st, mutants, ctx, evo.threads);

    detail::update_elite(st);
    ++st.generation;

    GenerationRecord rec;
    rec.generation = st.generation;
    double sum = 0.0;
    rec.best_fitness = 0.0;
    for (const auto& ind : pop) {
        sum += ind.fitness;
        rec.best_fitness = std::max(rec.best_fitness, ind.fitness);
    }
    rec.mean_fitness = sum / static_cast<double>(pop.size());
    assert(rec.best_fitness >= rec.mean_fitness - 1e-12);
    rec.elite_fitness = st.elite->fitness;
    assert(st.history.empty() || rec.elite_fitness >= st.history.back().elite_fitness);
    rec.elite_phenotypes = st.elite->phenotype_texts();
    rec.failures = failures;
    st.history.push_back(std::move(rec));
}

struct RunReport {
    Individual elite;
    std::vector<GenerationRecord> history;
    std::size_t initial_failures = 0;
};

/// Full evolutionary run on a prepared split.
inline RunReport evolve(const Split& split, const EvolutionConfig& evo, const NetworkConfig& net, const Grammar& grammar,
                        const MappingLimits& limits = {}) {
    evo.validate();
    net.validate();
    EvaluationContext ctx{&split, net, &grammar, limits, evo.fitness_mode, evo.seed};
    Rng rng(evo.seed);
    EvolutionState st;
    st.population = init_population(evo, rng);
    start_evolution(st, ctx, evo.threads);

    RunReport rep;
    for (const auto& i : st.population) rep.initial_failures += i.failed() ? 1 : 0;
    for (std::size_t g = 0; g < evo.generations; ++g) step_generation(st, evo, ctx, rng);
    rep.elite = *st.elite;
    rep.history = std::move(st.history);
    return rep;
}

}  // namespace geaf
