#include <catch_amalgamated.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <vector>

#include "support.hpp"

using namespace geaf;
using Catch::Approx;

namespace {

Genotype filled(int v) {
    Genotype::Codons c{};
    c.fill(v);
    return Genotype(c);
}

// exp(x)+exp(x) for every layer: expr 1, exp, +, expr 0, exp
Genotype exp_sum_genotype() {
    Genotype::Codons c{};
    const std::array<int, 5> unit{1, 5, 0, 0, 5};
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = unit[i % unit.size()];
    return Genotype(c);
}

struct Fixture {
    Dataset data = testing::wbcd();
    Split split = standardize(shuffle_split(data, 1));
    Grammar grammar = default_grammar();
    EvaluationContext ctx;

    Fixture() {
        ctx.split = &split;
        ctx.network.n_features = data.features.cols;
        ctx.network.max_epochs = 5;
        ctx.network.batch_size = 16;
        ctx.grammar = &grammar;
        ctx.run_seed = 3;
    }
};

std::vector<Individual> with_f1(std::initializer_list<double> f1s) {
    std::vector<Individual> pop;
    for (double f : f1s) {
        Individual i;
        i.metrics.f1 = f;
        i.fitness = f;
        i.evaluated = true;
        pop.push_back(i);
    }
    return pop;
}

}  // namespace

TEST_CASE("initial population", "[evolution][init]") {
    EvolutionConfig evo;
    Rng a(5);
    Rng b(5);
    const auto pa = init_population(evo, a);
    const auto pb = init_population(evo, b);
    REQUIRE(pa.size() == 100);
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].genotype == pb[i].genotype);
        CHECK_FALSE(pa[i].evaluated);
        for (int c : pa[i].genotype.codons()) CHECK((c >= 0 && c <= 100));
    }
    evo.population_size = 1;
    CHECK(init_population(evo, a).size() == 1);
}

TEST_CASE("config validation", "[evolution][config]") {
    EvolutionConfig evo;
    CHECK_NOTHROW(evo.validate());
    evo.tournament_size = 3;
    CHECK_THROWS_AS(evo.validate(), ConfigError);
    evo.tournament_size = 4;
    evo.crossover_rate = 1.5;
    CHECK_THROWS_AS(evo.validate(), ConfigError);
}

TEST_CASE("pair winners", "[evolution][selection]") {
    const auto pop = with_f1({0.9, 0.2, 0.5, 0.6});
    CHECK(pair_winner(pop, 0, 1) == 0);
    CHECK(pair_winner(pop, 2, 3) == 3);
    const auto ties = with_f1({0.5, 0.5, 0.5, 0.5});
    CHECK(pair_winner(ties, 3, 1) == 1);
    auto fit = with_f1({0.5, 0.5});
    fit[1].fitness = 0.7;
    CHECK(pair_winner(fit, 0, 1) == 1);
}

TEST_CASE("tournament entrants are distinct and uniform", "[evolution][selection]") {
    const auto pop = with_f1({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0});
    Rng rng(21);
    std::vector<int> seen(pop.size(), 0);
    const int draws = 10000;
    for (int d = 0; d < draws; ++d) {
        const auto t = tournament_select(pop, rng);
        auto e = t.entrants;
        std::sort(e.begin(), e.end());
        CHECK(std::adjacent_find(e.begin(), e.end()) == e.end());
        for (auto i : t.entrants) ++seen[i];
        CHECK(t.parent_a == std::max(t.entrants[0], t.entrants[1]));
        CHECK(t.parent_b == std::max(t.entrants[2], t.entrants[3]));
    }
    for (int s : seen) CHECK(static_cast<double>(s) / draws == Approx(0.4).margin(0.02));
    CHECK_THROWS_AS(tournament_select(with_f1({0.1, 0.2, 0.3}), rng), Error);
}

TEST_CASE("single-point crossover splices genotypes", "[evolution][crossover]") {
    const auto a = Individual::of(filled(0));
    const auto b = Individual::of(filled(100));
    const auto [c1, c2] = crossover_at(a, b, 15);
    for (std::size_t i = 0; i < 30; ++i) {
        CHECK(c1.genotype[i] == (i < 15 ? 0 : 100));
        CHECK(c2.genotype[i] == (i < 15 ? 100 : 0));
    }
    const auto [s1, s2] = crossover_at(a, a, 7);
    CHECK(s1.genotype == a.genotype);
    CHECK(s2.genotype == a.genotype);
    CHECK_THROWS_AS(crossover_at(a, b, 0), Error);
    CHECK_THROWS_AS(crossover_at(a, b, 30), Error);

    Rng rng(2);
    for (int t = 0; t < 100; ++t) {
        const auto x = Individual::of(testing::random_genotype(rng));
        const auto y = Individual::of(testing::random_genotype(rng));
        const auto [k1, k2] = crossover(x, y, rng);
        CHECK_FALSE(k1.evaluated);
        for (std::size_t i = 0; i < 30; ++i) {
            std::array<int, 2> before{x.genotype[i], y.genotype[i]};
            std::array<int, 2> after{k1.genotype[i], k2.genotype[i]};
            std::sort(before.begin(), before.end());
            std::sort(after.begin(), after.end());
            CHECK(before == after);
        }
    }
}

TEST_CASE("mutation changes at most one codon", "[evolution][mutation]") {
    Rng rng(8);
    const auto parent = Individual::of(testing::random_genotype(rng));
    for (int t = 0; t < 200; ++t) {
        const auto child = mutate(parent, rng);
        int diffs = 0;
        for (std::size_t i = 0; i < 30; ++i) diffs += child.genotype[i] != parent.genotype[i] ? 1 : 0;
        CHECK(diffs <= 1);
        CHECK_FALSE(child.evaluated);
    }
}

TEST_CASE("mutating unused codons is silent", "[evolution][mutation][property]") {
    Rng rng(13);
    const Grammar g = default_grammar();
    int checked = 0;
    while (checked < 100) {
        const Genotype gt = testing::random_genotype(rng);
        MappingResult r;
        try {
            r = map_genotype(gt, g, 3);
        } catch (const MappingOverflow&) {
            continue;
        }
        if (r.trace.wraps_used > 0) continue;
        ++checked;
        for (std::size_t i = r.trace.codons_consumed; i < 30; ++i) {
            const auto m = map_genotype(gt.with(i, (gt[i] + 37) % 101), g, 3);
            CHECK(m.expressions == r.expressions);
        }
    }
}

TEST_CASE("evaluation of a well-formed individual", "[evolution][evaluate]") {
    Fixture f;
    auto ind = Individual::of(Genotype());
    evaluate_individual(ind, f.ctx);
    CHECK(ind.evaluated);
    CHECK_FALSE(ind.failed());
    CHECK(ind.phenotype_texts() == std::vector<std::string>{"sin(x)", "sin(x)", "sin(x)"});
    CHECK(std::isfinite(ind.fitness));
    CHECK(ind.fitness >= 0.0);
    CHECK(ind.fitness == Approx(ind.validation_accuracy * ind.metrics.f1));

    // memoised: a stale fitness survives a second call untouched
    auto copy = ind;
    copy.fitness = 0.123;
    evaluate_individual(copy, f.ctx);
    CHECK(copy.fitness == 0.123);

    // order-independent seeding: a fresh evaluation reproduces the result
    auto again = evaluated(Individual::of(Genotype()), f.ctx);
    CHECK(again.fitness == ind.fitness);
    CHECK(again.metrics == ind.metrics);
}

TEST_CASE("test-F1 fitness mode", "[evolution][evaluate]") {
    Fixture f;
    f.ctx.fitness_mode = FitnessMode::test_f1;
    const auto ind = evaluated(Individual::of(Genotype()), f.ctx);
    CHECK(ind.fitness == ind.metrics.f1);
}

TEST_CASE("mapping overflow scores zero", "[evolution][evaluate]") {
    Fixture f;
    const auto ind = evaluated(Individual::of(filled(2)), f.ctx);
    CHECK(ind.failure == EvalFailure::mapping_overflow);
    CHECK(ind.fitness == 0.0);
    CHECK(ind.phenotypes.empty());
}

TEST_CASE("exploding activations on raw sonar-like inputs score zero", "[evolution][evaluate]") {
    const Dataset ds = testing::synthetic_sonar();
    const Split split = shuffle_split(ds, 1);
    const Grammar g = default_grammar();
    EvaluationContext ctx;
    ctx.split = &split;
    ctx.network.n_features = 60;
    ctx.network.hidden_layers = 3;
    ctx.grammar = &g;
    // mini-batches of 4 can dodge the overflow, the full scoring passes cannot
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        ctx.run_seed = seed;
        const auto ind = evaluated(Individual::of(exp_sum_genotype()), ctx);
        REQUIRE(ind.phenotype_texts() == std::vector<std::string>(5, "exp(x)+exp(x)"));
        CHECK(ind.failed());
        CHECK(ind.fitness == 0.0);
        CHECK(ind.validation_accuracy == 0.0);
    }
}

TEST_CASE("generation invariants", "[evolution][step]") {
    Fixture f;
    EvolutionConfig evo;
    evo.population_size = 10;
    evo.crossover_events_per_generation = 2;
    evo.mutation_rate = 0.5;
    Rng rng(1);
    EvolutionState st;
    st.population = init_population(evo, rng);
    start_evolution(st, f.ctx);
    double last = st.elite->fitness;
    for (int g = 0; g < 6; ++g) {
        step_generation(st, evo, f.ctx, rng);
        CHECK(st.population.size() == 10);
        const auto& rec = st.history.back();
        CHECK(rec.generation == static_cast<std::size_t>(g + 1));
        CHECK(rec.elite_fitness >= last);
        CHECK(rec.best_fitness >= rec.mean_fitness);
        last = rec.elite_fitness;
        CHECK(detail::elite_position(st).has_value());
        for (const auto& ind : st.population) {
            CHECK(ind.evaluated);
            CHECK(std::isfinite(ind.fitness));
        }
    }
}

TEST_CASE("zero rates leave the population unchanged", "[evolution][step]") {
    Fixture f;
    EvolutionConfig evo;
    evo.population_size = 6;
    evo.crossover_rate = 0.0;
    evo.mutation_rate = 0.0;
    Rng rng(4);
    EvolutionState st;
    st.population = init_population(evo, rng);
    start_evolution(st, f.ctx);
    std::vector<Genotype> before;
    for (const auto& i : st.population) before.push_back(i.genotype);
    for (int g = 0; g < 3; ++g) step_generation(st, evo, f.ctx, rng);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(st.population[i].genotype == before[i]);
}

TEST_CASE("failed children are discarded", "[evolution][step]") {
    // Codons congruent to 2 mod 3 always pick the bracketed recursive production,
    // so parents and every child overflow the mapping.
    Fixture f;
    EvolutionConfig evo;
    evo.population_size = 8;
    evo.crossover_rate = 1.0;
    evo.mutation_rate = 0.0;
    evo.crossover_events_per_generation = 3;
    Rng rng(6);
    std::uniform_int_distribution<int> k(0, 32);
    EvolutionState st;
    for (std::size_t i = 0; i < evo.population_size; ++i) {
        Genotype::Codons c{};
        for (int& v : c) v = 3 * k(rng) + 2;
        st.population.push_back(Individual::of(Genotype(c)));
    }
    start_evolution(st, f.ctx);
    std::vector<Genotype> before;
    for (const auto& i : st.population) {
        CHECK(i.failure == EvalFailure::mapping_overflow);
        before.push_back(i.genotype);
    }
    step_generation(st, evo, f.ctx, rng);
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(st.population[i].genotype == before[i]);
    CHECK(st.history.back().failures > 0);
}

TEST_CASE("runs are reproducible and thread-count independent", "[evolution][run]") {
    Fixture f;
    f.ctx.network.max_epochs = 3;
    EvolutionConfig evo;
    evo.population_size = 8;
    evo.generations = 3;
    evo.seed = 9;
    const auto a = evolve(f.split, evo, f.ctx.network, f.grammar);
    evo.threads = 4;
    const auto b = evolve(f.split, evo, f.ctx.network, f.grammar);
    CHECK(a.elite.genotype == b.elite.genotype);
    CHECK(a.elite.fitness == b.elite.fitness);
    REQUIRE(a.history.size() == 3);
    for (std::size_t g = 0; g < 3; ++g) {
        CHECK(a.history[g].mean_fitness == b.history[g].mean_fitness);
        CHECK(a.history[g].failures == b.history[g].failures);
    }
}

TEST_CASE("zero generations keep the best initial individual", "[evolution][run]") {
    Fixture f;
    f.ctx.network.max_epochs = 2;
    EvolutionConfig evo;
    evo.population_size = 5;
    evo.generations = 0;
    const auto r = evolve(f.split, evo, f.ctx.network, f.grammar);
    CHECK(r.history.empty());

    Rng rng(evo.seed);
    auto pop = init_population(evo, rng);
    double best = 0.0;
    for (auto& i : pop) best = std::max(best, evaluated(i, EvaluationContext{&f.split, f.ctx.network, &f.grammar, {}, evo.fitness_mode, evo.seed}).fitness);
    CHECK(r.elite.fitness == best);
}
