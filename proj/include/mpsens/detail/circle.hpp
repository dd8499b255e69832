#ifndef MPSENS_DETAIL_CIRCLE_HPP
#define MPSENS_DETAIL_CIRCLE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace mpsens::detail {

/// Endpoints closer than this are merged when arcs are arranged.
inline constexpr double arc_dedupe_tolerance = 1e-12;

/// Fractional part in [0, 1).
inline double frac(long double x)
{
    long double f = x - std::floor(x);
    auto d = static_cast<double>(f);
    return d >= 1.0 ? 0.0 : d;
}

/// x + k alpha mod 1, evaluated in extended precision so that large k does
/// not accumulate rounding from repeated addition.
inline double rotate(double x, std::int64_t k, double alpha)
{
    return frac(static_cast<long double>(x) + static_cast<long double>(k) * static_cast<long double>(alpha));
}

inline double arc_distance(double x, double y)
{
    const double d = std::abs(x - y);
    return std::min(d, 1.0 - d);
}

/// Index of the arc [cuts[i], cuts[i+1]) holding y; the last arc wraps.
inline std::size_t arc_index(std::span<const double> cuts, double y)
{
    auto it = std::upper_bound(cuts.begin(), cuts.end(), y);
    if (it == cuts.begin()) {
        return cuts.size() - 1;
    }
    return static_cast<std::size_t>(it - cuts.begin()) - 1;
}

struct arc_piece
{
    double start;
    double length;
    double mid;
};

/// Cuts the circle at the given endpoints (any real values, reduced mod 1).
inline std::vector<arc_piece> arrangement(std::vector<double> endpoints)
{
    for (double& e : endpoints) {
        e = frac(e);
    }
    std::sort(endpoints.begin(), endpoints.end());
    std::vector<double> cuts;
    for (double e : endpoints) {
        if (cuts.empty() || e - cuts.back() > arc_dedupe_tolerance) {
            cuts.push_back(e);
        }
    }
    while (cuts.size() > 1 && cuts.front() + 1.0 - cuts.back() <= arc_dedupe_tolerance) {
        cuts.pop_back();
    }
    std::vector<arc_piece> pieces;
    if (cuts.size() <= 1) {
        const double s = cuts.empty() ? 0.0 : cuts.front();
        pieces.push_back({s, 1.0, frac(static_cast<long double>(s) + 0.5L)});
        return pieces;
    }
    pieces.reserve(cuts.size());
    for (std::size_t i = 0; i < cuts.size(); ++i) {
        const double end = (i + 1 < cuts.size()) ? cuts[i + 1] : cuts.front() + 1.0;
        const double len = end - cuts[i];
        pieces.push_back({cuts[i], len, frac(static_cast<long double>(cuts[i]) + 0.5L * len)});
    }
    return pieces;
}

} // namespace mpsens::detail

#endif // MPSENS_DETAIL_CIRCLE_HPP
