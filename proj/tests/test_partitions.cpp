#include <gtest/gtest.h>

#include <cmath>

#include "mpsens/partitions.hpp"
#include "mpsens/random.hpp"
#include "oracles.hpp"

namespace mpsens {

namespace {

const double golden = 0.6180339887498949;

oracle::tuple_law as_law(const joint_distribution_t& j)
{
    oracle::tuple_law out;
    for (std::size_t i = 0; i < j.dist.size(); ++i) {
        out[j.dist.labels()[i]] = j.dist.probs()[i];
    }
    return out;
}

void expect_same_law(const oracle::tuple_law& got, const oracle::tuple_law& want, double tol)
{
    for (const auto& [t, m] : want) {
        const auto it = got.find(t);
        if (m > tol) {
            ASSERT_NE(it, got.end());
        }
        EXPECT_NEAR(it == got.end() ? 0.0 : it->second, m, tol);
    }
    for (const auto& [t, m] : got) {
        EXPECT_GT(m, 0.0);
        if (!want.contains(t)) {
            EXPECT_LT(m, tol);
        }
    }
}

std::vector<std::int64_t> random_pattern(engine& e, int k, std::int64_t horizon)
{
    std::vector<std::int64_t> t;
    while (static_cast<int>(t.size()) < k) {
        const auto c = static_cast<std::int64_t>(uniform_index(e, static_cast<std::uint64_t>(horizon + 1)));
        if (std::find(t.begin(), t.end(), c) == t.end()) {
            t.push_back(c);
        }
    }
    std::sort(t.begin(), t.end());
    return t;
}

std::vector<std::vector<double>> random_stochastic(engine& e, int n)
{
    std::vector<std::vector<double>> p(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n)));
    for (auto& row : p) {
        double s = 0;
        for (auto& x : row) {
            x = uniform01(e) < 0.25 ? 0.0 : uniform01(e) + 0.05;
            s += x;
        }
        if (s == 0) {
            row[0] = s = 1;
        }
        for (auto& x : row) {
            x /= s;
        }
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        // a cycle through every state keeps the chain irreducible
        auto& row = p[i];
        const std::size_t next = (i + 1) % p.size();
        if (row[next] == 0.0) {
            for (auto& x : row) {
                x *= 0.9;
            }
            row[next] = 0.1;
        }
    }
    return p;
}

} // namespace

TEST(Joint, BernoulliPatternIsUniform)
{
    const auto b = system::bernoulli({0.5, 0.5});
    const auto j = joint_distribution(b, partition::letters(2), time_pattern({0, 5}));
    ASSERT_EQ(j.dist.size(), 4u);
    for (double p : j.dist.probs()) {
        EXPECT_DOUBLE_EQ(p, 0.25);
    }
}

TEST(Joint, GoldenMeanMarkov)
{
    const auto m = system::markov({{0.5, 0.5}, {1.0, 0.0}});
    const auto law = as_law(joint_distribution(m, partition::letters(2), time_pattern({0, 1})));
    EXPECT_EQ(law.size(), 3u);
    EXPECT_NEAR(law.at({0, 0}), 1.0 / 3, 1e-12);
    EXPECT_NEAR(law.at({0, 1}), 1.0 / 3, 1e-12);
    EXPECT_NEAR(law.at({1, 0}), 1.0 / 3, 1e-12);
}

TEST(Joint, MarkovAgainstWordEnumeration)
{
    engine e = make_engine(31);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = 2 + static_cast<int>(uniform_index(e, 2));
        const auto p = random_stochastic(e, n);
        const auto m = system::markov(p);
        const int k = 1 + static_cast<int>(uniform_index(e, 4));
        auto t = random_pattern(e, k, 7);
        const auto want = oracle::chain_letters(p, m.as<markov_system>()->stationary, t);
        expect_same_law(as_law(joint_distribution(m, partition::letters(n), time_pattern(t))), want, 1e-12);
    }
}

TEST(Joint, BernoulliWordPartitionAgainstEnumeration)
{
    const std::vector<double> probs{0.2, 0.3, 0.5};
    const auto b = system::bernoulli(probs);
    const std::vector<std::int64_t> t{0, 2, 3};
    const auto j = joint_distribution(b, partition::words(2), time_pattern(t));
    // words(2) atoms at t are letter pairs (t, t+1): enumerate the 5-letter span
    const auto letters = oracle::chain_letters(oracle::iid_matrix(probs), probs, {0, 1, 2, 3, 4});
    oracle::tuple_law want;
    for (const auto& [w, mass] : letters) {
        want[{w[0] * 3 + w[1], w[2] * 3 + w[3], w[3] * 3 + w[4]}] += mass;
    }
    expect_same_law(as_law(j), want, 1e-14);
}

TEST(Joint, RotationHalfCircleAgainstGrid)
{
    const auto r = system::rotation(golden);
    const std::vector<std::int64_t> t{0, 1};
    const auto law = as_law(joint_distribution(r, partition::half_circle(), time_pattern(t)));
    EXPECT_LE(law.size(), 4u);
    expect_same_law(law, oracle::rotation_grid(golden, 0.5, t, 1000000), 2e-6);
    // the masses are the arcs cut by {0, 1/2, -alpha, 1/2 - alpha}
    std::vector<double> ends{0.0, 0.5, 1.0 - golden, 1.5 - golden};
    std::sort(ends.begin(), ends.end());
    std::vector<double> arcs{ends[1] - ends[0], ends[2] - ends[1], ends[3] - ends[2], 1.0 - ends[3]};
    std::vector<double> got;
    for (const auto& [k, m] : law) {
        got.push_back(m);
    }
    std::sort(arcs.begin(), arcs.end());
    std::sort(got.begin(), got.end());
    ASSERT_EQ(got.size(), arcs.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_NEAR(got[i], arcs[i], 1e-12);
    }
}

TEST(Joint, SturmianAgainstGrid)
{
    const auto st = system::sturmian(golden, 1 - golden);
    engine e = make_engine(4);
    for (int trial = 0; trial < 10; ++trial) {
        const auto t = random_pattern(e, 1 + trial % 5, 30);
        const auto law = as_law(joint_distribution(st, partition::letters(2), time_pattern(t)));
        EXPECT_LE(law.size(), 2 * t.size());
        expect_same_law(law, oracle::sturmian_grid(golden, 1 - golden, t, 200000), 2e-5);
    }
}

TEST(Joint, ThueMorseAgainstDirectCount)
{
    const auto tm = system::substitution({{0, 1}, {1, 0}});
    const auto text = oracle::substitute({{0, 1}, {1, 0}}, 0, 18);
    for (const std::vector<std::int64_t>& t : {std::vector<std::int64_t>{0, 3}, {0, 1, 5}, {2, 4, 9, 10}}) {
        oracle::tuple_law want;
        const std::size_t positions = text.size() - static_cast<std::size_t>(t.back());
        for (std::size_t i = 0; i < positions; ++i) {
            std::vector<int> key;
            for (auto s : t) {
                key.push_back(text[i + static_cast<std::size_t>(s)]);
            }
            want[key] += 1.0 / static_cast<double>(positions);
        }
        expect_same_law(as_law(joint_distribution(tm, partition::letters(2), time_pattern(t))), want, 1e-4);
    }
}

TEST(Joint, FiniteExtensionAgainstSimulation)
{
    const auto ext = system::finite_extension(golden, 2, {{0.0, 0}, {0.3, 1}});
    const auto part = partition::symbol_map({0, 1});
    const std::vector<std::int64_t> t{0, 2, 3};
    const auto law = as_law(joint_distribution(ext, part, time_pattern(t)));
    // Birkhoff average along one long orbit of the skew product
    oracle::tuple_law freq;
    const std::size_t n = 400000;
    const auto seq = orbit_atom_sequence(ext, part, point{extension_point{0.123, 0}}, n + 3);
    for (std::size_t k = 0; k < n; ++k) {
        freq[{static_cast<int>(seq[k]), static_cast<int>(seq[k + 2]), static_cast<int>(seq[k + 3])}] += 1.0 / n;
    }
    expect_same_law(law, freq, 5e-3);
}

TEST(Joint, ProductIsIndependent)
{
    const auto b = system::bernoulli({0.3, 0.7});
    const auto r = system::rotation(golden);
    const auto p = system::product({b, r});
    const auto part = partition::product({partition::letters(2), partition::half_circle()});
    const std::vector<std::int64_t> t{0, 1};
    const auto law = as_law(joint_distribution(p, part, time_pattern(t)));
    const auto lb = as_law(joint_distribution(b, partition::letters(2), time_pattern(t)));
    const auto lr = as_law(joint_distribution(r, partition::half_circle(), time_pattern(t)));
    for (const auto& [x, mx] : lb) {
        for (const auto& [y, my] : lr) {
            EXPECT_NEAR(law.at({x[0] * 2 + y[0], x[1] * 2 + y[1]}), mx * my, 1e-12);
        }
    }
}

TEST(Joint, ShiftedPatternsAreBitIdentical)
{
    const auto m = system::markov({{0.2, 0.8}, {0.6, 0.4}});
    const auto st = system::sturmian(golden, 1 - golden);
    for (const auto* sys : {&m, &st}) {
        const double a = detail::join_entropy(*sys, partition::letters(2), std::vector<std::int64_t>{0, 2, 7});
        const double b = detail::join_entropy(*sys, partition::letters(2), std::vector<std::int64_t>{13, 15, 20});
        EXPECT_EQ(a, b);
    }
}

TEST(Joint, MarginalConsistency)
{
    engine e = make_engine(77);
    const std::vector<system> systems{system::markov({{0.5, 0.5}, {1.0, 0.0}}), system::bernoulli({0.2, 0.3, 0.5}),
                                      system::sturmian(golden, 1 - golden),
                                      system::substitution({{0, 1}, {1, 0}})};
    for (const auto& sys : systems) {
        const auto part = partition::letters(sys.alphabet_size());
        for (int trial = 0; trial < 10; ++trial) {
            const int k = 2 + trial % 3;
            const auto t = random_pattern(e, k, 12);
            const auto full = as_law(joint_distribution(sys, part, time_pattern(t)));
            const std::size_t drop = uniform_index(e, static_cast<std::uint64_t>(k));
            auto sub = t;
            sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(drop));
            oracle::tuple_law marginal;
            for (const auto& [tuple, m] : full) {
                auto key = tuple;
                key.erase(key.begin() + static_cast<std::ptrdiff_t>(drop));
                marginal[key] += m;
            }
            expect_same_law(as_law(joint_distribution(sys, part, time_pattern(sub))), marginal, 1e-9);
        }
    }
}

TEST(Joint, SpanLimit)
{
    const auto b = system::bernoulli({0.5, 0.5}).with_span_limit(16);
    EXPECT_NO_THROW(joint_distribution(b, partition::letters(2), time_pattern({0, 15})));
    EXPECT_THROW(joint_distribution(b, partition::letters(2), time_pattern({0, 16})), span_error);
    EXPECT_THROW(joint_distribution(b, partition::words(4), time_pattern({0, 13})), span_error);
}

TEST(Joint, PatternValidation)
{
    EXPECT_THROW(time_pattern({}), validation_error);
    EXPECT_THROW(time_pattern({0, 0}), validation_error);
    EXPECT_THROW(time_pattern({3, 1}), validation_error);
    EXPECT_THROW(time_pattern({-1, 1}), validation_error);
}

TEST(Joint, IncompatiblePartitions)
{
    const auto b = system::bernoulli({0.5, 0.5});
    const auto r = system::rotation(golden);
    EXPECT_THROW(partition_entropy(b, partition::half_circle()), kind_error);
    EXPECT_THROW(partition_entropy(r, partition::letters(2)), kind_error);
    EXPECT_THROW(partition_entropy(b, partition::letters(3)), validation_error);
}

TEST(PartitionEntropy, Examples)
{
    const auto b = system::bernoulli({0.5, 0.5});
    EXPECT_NEAR(partition_entropy(b, partition::letters(2)), std::log(2.0), 1e-15);
    EXPECT_NEAR(partition_entropy(b, partition::words(3)), 3 * std::log(2.0), 1e-14);
    const auto tm = system::substitution({{0, 1}, {1, 0}});
    const double want = oracle::entropy(std::vector<double>{1.0 / 6, 1.0 / 3, 1.0 / 3, 1.0 / 6});
    EXPECT_NEAR(partition_entropy(tm, partition::words(2)), want, 1e-6);
    EXPECT_NEAR(want, 1.329661, 1e-6);
    EXPECT_EQ(partition_entropy(b, partition::symbol_map({0, 0})), 0.0);
    EXPECT_EQ(atom_count(b, partition::symbol_map({0, 0})), 1u);
}

TEST(Intervals, Validation)
{
    EXPECT_THROW(partition::intervals({{{0.0, 0.5}}, {{0.6, 1.0}}}), validation_error);   // gap
    EXPECT_THROW(partition::intervals({{{0.0, 0.6}}, {{0.5, 1.0}}}), validation_error);   // overlap
    EXPECT_NO_THROW(partition::intervals({{{0.8, 0.2}}, {{0.2, 0.8}}}));                   // wrapping arc
    EXPECT_THROW(partition::from_cuts({0.5, 0.2}, {0, 1}), validation_error);
}

TEST(Intervals, WrappingArcMasses)
{
    const auto r = system::rotation(golden);
    const auto part = partition::intervals({{{0.8, 0.2}}, {{0.2, 0.8}}});
    const auto masses = atom_masses(r, part);
    ASSERT_EQ(masses.size(), 2u);
    EXPECT_NEAR(masses[0].second, 0.4, 1e-12);
    EXPECT_NEAR(masses[1].second, 0.6, 1e-12);
}

TEST(Refine, Idempotent)
{
    const auto r = system::rotation(golden);
    const auto a = partition::half_circle(0.3);
    const auto aa = refine(r, a, a);
    EXPECT_EQ(atom_count(r, aa), 2u);
    EXPECT_NEAR(partition_entropy(r, aa), partition_entropy(r, a), 1e-15);
}

TEST(Refine, TrivialIsIdentity)
{
    const auto r = system::rotation(golden);
    const auto trivial = partition::from_cuts({0.0}, {0});
    const auto b = partition::from_cuts({0.1, 0.45, 0.7}, {0, 1, 2});
    const auto tb = refine(r, trivial, b);
    EXPECT_EQ(atom_count(r, tb), 3u);
    EXPECT_NEAR(partition_entropy(r, tb), partition_entropy(r, b), 1e-15);

    const auto m = system::markov({{0.5, 0.5}, {1.0, 0.0}});
    const auto one = partition::symbol_map({0, 0});
    EXPECT_NEAR(partition_entropy(m, refine(m, one, partition::words(2))), partition_entropy(m, partition::words(2)),
                1e-15);
}

TEST(Refine, FourEndpointsGiveFourAtoms)
{
    const auto r = system::rotation(golden);
    const auto a = partition::from_cuts({0.0, 0.5}, {0, 1});
    const auto b = partition::from_cuts({0.25, 0.75}, {0, 1});
    const auto ab = refine(r, a, b);
    EXPECT_EQ(atom_count(r, ab), 4u);
    EXPECT_NEAR(partition_entropy(r, ab), std::log(4.0), 1e-12);
}

TEST(Refine, EntropyIsMonotone)
{
    engine e = make_engine(12);
    const auto m = system::markov({{0.3, 0.7, 0.0}, {0.2, 0.2, 0.6}, {0.5, 0.0, 0.5}});
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<int> map(3);
        for (auto& x : map) {
            x = static_cast<int>(uniform_index(e, 2));
        }
        const auto a = partition::symbol_map(map);
        const auto b = partition::words(1 + trial % 3);
        const double h = partition_entropy(m, refine(m, a, b));
        EXPECT_GE(h + 1e-12, partition_entropy(m, a));
        EXPECT_GE(h + 1e-12, partition_entropy(m, b));
        EXPECT_LE(h, partition_entropy(m, a) + partition_entropy(m, b) + 1e-12);
    }
}

TEST(Partitions, AtomLabelOverflow)
{
    const auto b = system::bernoulli({0.5, 0.5});
    EXPECT_THROW(partition::words(70).code_range(b), span_error);
}

} // namespace mpsens
