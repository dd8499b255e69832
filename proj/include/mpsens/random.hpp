#ifndef MPSENS_RANDOM_HPP
#define MPSENS_RANDOM_HPP

#include <cstdint>
#include <random>
#include <span>

namespace mpsens {

/// The toolkit's only generator: the 64-bit Mersenne Twister (a twisted
/// generalized feedback shift register). Its output sequence is fixed by the
/// C++ standard, so seeded runs are bit-reproducible across platforms.
using engine = std::mt19937_64;

namespace detail {

/// splitmix64 finalizer (Steele, Lea, Flood 2014).
inline std::uint64_t mix64(std::uint64_t z)
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

/// Derives a child seed; used to give every trial and witness its own stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    return detail::mix64(detail::mix64(seed) ^ stream);
}

/// Engine for stream `stream` of a run seeded with `seed`.
inline engine make_engine(std::uint64_t seed, std::uint64_t stream = 0)
{
    return engine(derive_seed(seed, stream));
}

/// Uniform double in [0, 1) from the top 53 bits. std::uniform_real_distribution
/// is implementation-defined, so it is not used.
inline double uniform01(engine& e)
{
    return static_cast<double>(e() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection of the biased tail.
inline std::uint64_t uniform_index(engine& e, std::uint64_t n)
{
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
        x = e();
    } while (x >= limit);
    return x % n;
}

/// Draws an index from a probability vector by inverse CDF. Rounding slack
/// at the top end falls on the last positive entry, never on a null one.
inline int categorical(engine& e, std::span<const double> probs)
{
    double u = uniform01(e);
    int last_positive = 0;
    for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
        if (probs[i] <= 0.0) {
            continue;
        }
        if (u < probs[i]) {
            return i;
        }
        u -= probs[i];
        last_positive = i;
    }
    return last_positive;
}

} // namespace mpsens

#endif // MPSENS_RANDOM_HPP
