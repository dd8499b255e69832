#include <gtest/gtest.h>

#include <cmath>

#include "mpsens/pattern_entropy.hpp"
#include "mpsens/random.hpp"
#include "oracles.hpp"

namespace mpsens {

namespace {

const double golden = 0.6180339887498949;

} // namespace

TEST(PStar, BernoulliEveryPatternOptimal)
{
    const auto b = system::bernoulli({0.5, 0.5});
    const auto r = p_star(b, partition::letters(2), 5, 16);
    EXPECT_NEAR(r.best_value, 5 * std::log(2.0), 1e-12);
    EXPECT_TRUE(r.exact_within_horizon);
    EXPECT_EQ(r.best_pattern, (std::vector<std::int64_t>{0, 1, 2, 3, 4}));
}

TEST(PStar, KOneIsPartitionEntropy)
{
    const auto m = system::markov({{0.2, 0.8}, {0.6, 0.4}});
    const auto r = p_star(m, partition::letters(2), 1, 10);
    EXPECT_EQ(r.best_value, partition_entropy(m, partition::letters(2)));
    EXPECT_EQ(r.best_pattern, (std::vector<std::int64_t>{0}));
    EXPECT_TRUE(r.completed);
}

TEST(PStar, SturmianAtomBound)
{
    const auto st = system::sturmian(golden, 1 - golden);
    const auto r = p_star(st, partition::letters(2), 4, 32);
    EXPECT_LE(r.best_value, std::log(8.0) + 1e-12);
    EXPECT_TRUE(r.completed);
    const auto ex = oracle::exhaustive_p_star(st, partition::letters(2), 4, 32);
    EXPECT_EQ(ex.patterns, 40920u); // C(33, 4)
    EXPECT_EQ(r.best_value, ex.value);
    EXPECT_EQ(r.best_pattern, ex.pattern);
}

TEST(PStar, Validation)
{
    const auto b = system::bernoulli({0.5, 0.5});
    EXPECT_THROW(p_star(b, partition::letters(2), 0, 5), validation_error);
    EXPECT_THROW(p_star(b, partition::letters(2), 4, 2), validation_error);
    EXPECT_THROW(p_star(b, partition::half_circle(), 2, 5), kind_error);
}

TEST(PStar, BudgetExhaustionKeepsIncumbent)
{
    const auto m = system::markov({{0.1, 0.9}, {0.7, 0.3}});
    search_options opts;
    opts.node_budget = 5;
    const auto r = p_star(m, partition::letters(2), 4, 20, opts);
    EXPECT_FALSE(r.completed);
    EXPECT_FALSE(r.exact_within_horizon);
    EXPECT_LE(r.nodes_expanded, 5u);
    const auto full = p_star(m, partition::letters(2), 4, 20);
    EXPECT_TRUE(full.completed);
    EXPECT_LE(r.best_value, full.best_value);
}

TEST(PStar, EarlyUpperBoundCountsAsExact)
{
    // Bernoulli reaches k H(xi) on the first leaf, so even a tiny budget is exact
    const auto b = system::bernoulli({0.5, 0.5});
    search_options opts;
    opts.node_budget = 10;
    const auto r = p_star(b, partition::letters(2), 4, 30, opts);
    EXPECT_FALSE(r.completed);
    EXPECT_TRUE(r.exact_within_horizon);
    EXPECT_NEAR(r.best_value, 4 * std::log(2.0), 1e-12);
}

TEST(PStar, ThreadsGiveTheSameAnswer)
{
    const auto st = system::sturmian(golden, 1 - golden);
    search_options opts;
    opts.threads = 4;
    const auto a = p_star(st, partition::letters(2), 4, 24);
    const auto b = p_star(st, partition::letters(2), 4, 24, opts);
    EXPECT_EQ(a.best_value, b.best_value);
    EXPECT_EQ(a.best_pattern, b.best_pattern);
}

TEST(PStar, ValueBoundedByAtomCount)
{
    const auto m = system::markov({{0.3, 0.7, 0.0}, {0.2, 0.2, 0.6}, {0.5, 0.0, 0.5}});
    for (int k = 1; k <= 4; ++k) {
        const auto r = p_star(m, partition::letters(3), k, 8);
        EXPECT_LE(r.best_value, k * std::log(3.0) + 1e-9);
        ASSERT_EQ(r.best_pattern.size(), static_cast<std::size_t>(k));
        EXPECT_EQ(r.best_pattern.front(), 0);
        EXPECT_LE(r.best_pattern.back(), 8);
    }
}

// Random small instances: branch and bound must agree with enumeration of
// every k-subset of [0, T], in value and in the chosen pattern.
TEST(PStar, MatchesExhaustiveOnRandomInstances)
{
    engine e = make_engine(2718);
    const std::vector<system> systems{
        system::markov({{0.5, 0.5}, {1.0, 0.0}}),
        system::markov({{0.1, 0.9}, {0.7, 0.3}}),
        system::markov({{0.3, 0.7, 0.0}, {0.2, 0.2, 0.6}, {0.5, 0.0, 0.5}}),
        system::bernoulli({0.2, 0.8}),
        system::sturmian(golden, 1 - golden),
        system::sturmian(std::sqrt(2.0) - 1, 0.3),
        system::substitution({{0, 1}, {1, 0}}),
        system::substitution({{0, 1}, {0}}),
    };
    for (int trial = 0; trial < 16; ++trial) {
        const auto& sys = systems[static_cast<std::size_t>(trial) % systems.size()];
        const int k = 2 + static_cast<int>(uniform_index(e, 3));
        const std::int64_t horizon = k + static_cast<std::int64_t>(uniform_index(e, 10));
        const auto part = trial % 3 == 2 ? partition::words(2) : partition::letters(sys.alphabet_size());
        const auto r = p_star(sys, part, k, horizon);
        const auto ex = oracle::exhaustive_p_star(sys, part, k, horizon);
        EXPECT_EQ(r.best_value, ex.value) << "trial " << trial;
        EXPECT_EQ(r.best_pattern, ex.pattern) << "trial " << trial;
        EXPECT_TRUE(r.completed);
    }
}

TEST(PStar, Subadditive)
{
    engine e = make_engine(99);
    const std::vector<system> systems{system::markov({{0.5, 0.5}, {1.0, 0.0}}), system::sturmian(golden, 1 - golden),
                                      system::substitution({{0, 1}, {1, 0}})};
    for (int trial = 0; trial < 12; ++trial) {
        const auto& sys = systems[static_cast<std::size_t>(trial) % systems.size()];
        const int u = 1 + static_cast<int>(uniform_index(e, 3));
        const int v = 1 + static_cast<int>(uniform_index(e, 3));
        const std::int64_t horizon = 10;
        const auto part = partition::letters(2);
        const double puv = p_star(sys, part, u + v, horizon).best_value;
        EXPECT_LE(puv, p_star(sys, part, u, horizon).best_value + p_star(sys, part, v, horizon).best_value + 1e-9);
    }
}

TEST(HStar, BernoulliWordPartitions)
{
    const auto b = system::bernoulli({0.5, 0.5});
    for (int l = 1; l <= 3; ++l) {
        const auto prof = h_star_profile(b, partition::words(l), 4, 3 * l);
        EXPECT_NEAR(prof.infimum_proxy, l * std::log(2.0), 1e-10) << "L=" << l;
        EXPECT_TRUE(prof.exact);
        EXPECT_EQ(prof.per_k.size(), 4u);
    }
}

TEST(HStar, SturmianDecreases)
{
    const auto st = system::sturmian(golden, 1 - golden);
    const auto prof = h_star_profile(st, partition::letters(2), 6, 32);
    for (const auto& row : prof.per_k) {
        EXPECT_LE(row.p_star, std::log(2.0 * row.k) + 1e-12);
        EXPECT_TRUE(row.exact);
    }
    EXPECT_LE(prof.per_k.back().p_star_over_k, prof.per_k.front().p_star_over_k);
    EXPECT_LE(prof.infimum_proxy, std::log(12.0) / 6);
}

TEST(HStar, OneAtomPartition)
{
    const auto m = system::markov({{0.5, 0.5}, {1.0, 0.0}});
    const auto prof = h_star_profile(m, partition::symbol_map({0, 0}), 4, 6);
    for (const auto& row : prof.per_k) {
        EXPECT_EQ(row.p_star, 0.0);
    }
    EXPECT_EQ(prof.infimum_proxy, 0.0);
}

TEST(HStar, FamilySupremumGrowsForBernoulli)
{
    const auto b = system::bernoulli({0.5, 0.5});
    const auto fam = h_star_family(b, 3, 3, 6);
    ASSERT_EQ(fam.profiles.size(), 3u);
    EXPECT_NEAR(fam.supremum, 3 * std::log(2.0), 1e-10);
    EXPECT_THROW(h_star_family(system::rotation(golden), 2, 2, 4), kind_error);
}

TEST(SequenceEntropy, BernoulliConstant)
{
    const auto b = system::bernoulli({0.5, 0.5});
    std::vector<std::int64_t> gamma(12);
    std::iota(gamma.begin(), gamma.end(), 0);
    for (double v : sequence_entropy_profile(b, partition::letters(2), gamma)) {
        EXPECT_NEAR(v, std::log(2.0), 1e-12);
    }
}

TEST(SequenceEntropy, SturmianArithmeticProgression)
{
    const auto st = system::sturmian(golden, 1 - golden);
    std::vector<std::int64_t> gamma;
    for (int i = 0; i < 12; ++i) {
        gamma.push_back(3 * i);
    }
    const auto prof = sequence_entropy_profile(st, partition::letters(2), gamma);
    for (std::size_t n = 1; n <= prof.size(); ++n) {
        EXPECT_LE(prof[n - 1], std::log(2.0 * n) / n + 1e-12);
    }
}

TEST(SequenceEntropy, OneTerm)
{
    const auto m = system::markov({{0.2, 0.8}, {0.6, 0.4}});
    const auto prof = sequence_entropy_profile(m, partition::letters(2), {5});
    EXPECT_EQ(prof.size(), 1u);
    EXPECT_NEAR(prof[0], partition_entropy(m, partition::letters(2)), 1e-15);
    EXPECT_THROW(sequence_entropy_profile(m, partition::letters(2), {3, 2}), validation_error);
}

TEST(Sweep, AgreesWithOracleAndSearch)
{
    const auto st = system::sturmian(std::sqrt(2.0) - 1, 0.3);
    const auto m = system::markov({{0.1, 0.9}, {0.7, 0.3}});
    for (const auto* sys : {&st, &m}) {
        for (int k = 1; k <= 4; ++k) {
            const auto sw = sweep_patterns(*sys, partition::letters(2), k, 12);
            const auto ex = oracle::exhaustive_p_star(*sys, partition::letters(2), k, 12);
            EXPECT_EQ(sw.patterns, oracle::binomial(12, k - 1));
            EXPECT_EQ(sw.max_entropy, ex.value);
            EXPECT_EQ(sw.best_pattern, ex.pattern);
            EXPECT_LE(sw.max_atoms, std::size_t{1} << k);
        }
    }
    EXPECT_EQ(sweep_patterns(st, partition::letters(2), 5, 20).max_atoms, 10u);
    EXPECT_THROW(sweep_patterns(st, partition::letters(2), 3, 1), validation_error);
}

} // namespace mpsens
