#ifndef MPSENS_NUM_CORE_HPP
#define MPSENS_NUM_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/dynamic_bitset.hpp>

#include "error.hpp"

namespace mpsens {

/// Tolerance for sum-to-one checks and entropy equality comparisons.
inline constexpr double probability_tolerance = 1e-9;

namespace detail {

/// -sum p log p over a mass vector, 0 log 0 = 0. No validation.
inline double entropy_of_masses(std::span<const double> masses)
{
    double h = 0.0;
    for (double p : masses) {
        if (p > 0.0) {
            h -= p * std::log(p);
        }
    }
    return h;
}

inline void check_probabilities(std::span<const double> probs)
{
    if (probs.empty()) {
        throw validation_error("probability vector is empty");
    }
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p)) {
            throw validation_error("probability entry is negative or not finite");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > probability_tolerance) {
        throw validation_error("probabilities sum to " + std::to_string(sum) + ", not 1");
    }
}

} // namespace detail

/**
 * Finite probability distribution over labeled outcomes.
 *
 * Entries are non-negative and sum to one within probability_tolerance;
 * labels are pairwise distinct. Label must be less-than comparable.
 */
template <typename Label>
class prob_vector
{
public:
    prob_vector(std::vector<double> probs, std::vector<Label> labels)
      : probs_(std::move(probs)), labels_(std::move(labels))
    {
        if (probs_.size() != labels_.size()) {
            throw validation_error("probability vector and label list differ in length");
        }
        detail::check_probabilities(probs_);
        std::vector<const Label*> sorted;
        sorted.reserve(labels_.size());
        for (const auto& l : labels_) {
            sorted.push_back(&l);
        }
        std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return *a < *b; });
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            if (!(*sorted[i - 1] < *sorted[i])) {
                throw validation_error("probability vector labels are not distinct");
            }
        }
    }

    std::span<const double> probs() const { return probs_; }
    std::span<const Label> labels() const { return labels_; }
    std::size_t size() const { return probs_.size(); }

private:
    std::vector<double> probs_;
    std::vector<Label> labels_;
};

/// Shannon entropy in nats of a raw probability vector.
inline double shannon_entropy(std::span<const double> probs)
{
    detail::check_probabilities(probs);
    return detail::entropy_of_masses(probs);
}

template <typename Label>
double shannon_entropy(const prob_vector<Label>& p)
{
    return detail::entropy_of_masses(p.probs());
}

/// Strictly increasing set of non-negative times observed in a window [0, N).
class finite_time_set
{
public:
    finite_time_set() = default;

    finite_time_set(std::vector<std::int64_t> times, std::int64_t window)
      : times_(std::move(times)), window_(window)
    {
        if (window_ < 1) {
            throw validation_error("time set window must be positive");
        }
        for (std::size_t i = 0; i < times_.size(); ++i) {
            if (times_[i] < 0 || times_[i] >= window_) {
                throw validation_error("time outside [0, window)");
            }
            if (i > 0 && times_[i] <= times_[i - 1]) {
                throw validation_error("times are not strictly increasing");
            }
        }
    }

    std::span<const std::int64_t> times() const { return times_; }
    std::int64_t window() const { return window_; }
    std::size_t size() const { return times_.size(); }

    /// #(F intersected with [0, n)).
    std::int64_t count_below(std::int64_t n) const
    {
        return std::lower_bound(times_.begin(), times_.end(), n) - times_.begin();
    }

    bool contains(std::int64_t t) const
    {
        return std::binary_search(times_.begin(), times_.end(), t);
    }

    friend bool operator==(const finite_time_set&, const finite_time_set&) = default;

private:
    std::vector<std::int64_t> times_;
    std::int64_t window_ = 1;
};

struct window_density
{
    std::int64_t window;
    std::int64_t count;
    double density;
};

/**
 * Finite-window stand-in for lower and upper density.
 *
 * The proxies are the min and max of the densities over the suffix half of
 * the checkpoints; they estimate liminf and limsup, never certify them.
 */
struct density_estimate
{
    std::vector<window_density> window_densities;
    double lower_proxy = 0.0;
    double upper_proxy = 0.0;

    /// Index of the first checkpoint that takes part in the proxies.
    std::size_t suffix_begin() const { return window_densities.size() / 2; }
};

inline density_estimate estimate_density(const finite_time_set& f, std::span<const std::int64_t> checkpoints)
{
    if (checkpoints.empty()) {
        throw validation_error("density estimate needs at least one checkpoint");
    }
    density_estimate est;
    std::int64_t previous = 0;
    for (std::int64_t n : checkpoints) {
        if (n <= previous) {
            throw validation_error("checkpoints must be positive and increasing");
        }
        if (n > f.window()) {
            throw validation_error("checkpoint beyond the observed window");
        }
        const std::int64_t count = f.count_below(n);
        est.window_densities.push_back({n, count, static_cast<double>(count) / static_cast<double>(n)});
        previous = n;
    }
    est.lower_proxy = std::numeric_limits<double>::infinity();
    est.upper_proxy = -std::numeric_limits<double>::infinity();
    for (std::size_t i = est.suffix_begin(); i < est.window_densities.size(); ++i) {
        est.lower_proxy = std::min(est.lower_proxy, est.window_densities[i].density);
        est.upper_proxy = std::max(est.upper_proxy, est.window_densities[i].density);
    }
    return est;
}

/// Checkpoints {N/8, N/4, N/2, N}, deduplicated for tiny N.
inline std::vector<std::int64_t> standard_checkpoints(std::int64_t n)
{
    std::vector<std::int64_t> out;
    for (std::int64_t d : {8, 4, 2, 1}) {
        const std::int64_t c = std::max<std::int64_t>(1, n / d);
        if (out.empty() || c > out.back()) {
            out.push_back(c);
        }
    }
    return out;
}

/**
 * Near-uniformity constant for k-atom distributions.
 *
 * Returns lambda such that every k-atom distribution with entropy above
 * log k - lambda has all atoms strictly within eps of 1/k. The maximum
 * entropy over distributions with some atom at distance >= eps from 1/k is
 * attained with one atom at 1/k +- eps and the rest uniform (entropy is
 * concave along that coordinate and Schur-concave in the others), so only
 * the two candidate values need comparing.
 */
inline double uniformity_bound(int k, double eps)
{
    if (k < 2) {
        throw validation_error("uniformity bound needs k >= 2");
    }
    const double u = 1.0 / k;
    if (!(eps > 0.0) || eps > 1.0 - u + 1e-12) {
        throw validation_error("eps must lie in (0, 1 - 1/k]");
    }
    auto entropy_with_atom = [k](double c) {
        c = std::clamp(c, 0.0, 1.0);
        const double rest = (1.0 - c) / (k - 1);
        double h = 0.0;
        if (c > 0.0) {
            h -= c * std::log(c);
        }
        if (rest > 0.0) {
            h -= (1.0 - c) * std::log(rest);
        }
        return h;
    };
    double best = -std::numeric_limits<double>::infinity();
    if (u + eps <= 1.0 + 1e-12) {
        best = std::max(best, entropy_with_atom(u + eps));
    }
    if (u - eps >= -1e-12) {
        best = std::max(best, entropy_with_atom(u - eps));
    }
    return std::log(static_cast<double>(k)) - best;
}

/// A finite probability space: point weights summing to one.
class finite_space
{
public:
    explicit finite_space(std::vector<double> weights) : weights_(std::move(weights))
    {
        detail::check_probabilities(weights_);
        uniform_ = std::all_of(weights_.begin(), weights_.end(), [&](double w) { return w == weights_.front(); });
    }

    static finite_space uniform(std::size_t n)
    {
        return finite_space(std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    std::size_t size() const { return weights_.size(); }

    double measure(const boost::dynamic_bitset<>& event) const
    {
        if (uniform_) {
            return static_cast<double>(event.count()) * weights_.front();
        }
        double m = 0.0;
        for (auto i = event.find_first(); i != boost::dynamic_bitset<>::npos; i = event.find_next(i)) {
            m += weights_[i];
        }
        return m;
    }

private:
    std::vector<double> weights_;
    bool uniform_ = false;
};

struct intersection_result
{
    std::vector<std::size_t> indices; ///< increasing
    double measure = 0.0;
    bool exhaustive = true; ///< false when the beam heuristic was used
};

/// Largest list length searched exhaustively by best_k_intersection.
inline constexpr std::size_t exhaustive_intersection_limit = 20;

/**
 * Finds k of the given events whose common intersection has the largest
 * measure. Exhaustive (lexicographically first maximizer) when at most
 * exhaustive_intersection_limit events are given, a beam search otherwise.
 */
inline intersection_result best_k_intersection(const finite_space& space, std::span<const boost::dynamic_bitset<>> events,
                                               std::size_t k, std::size_t beam_width = 64)
{
    if (k == 0 || k > events.size()) {
        throw validation_error("best_k_intersection needs 1 <= k <= number of events");
    }
    for (const auto& e : events) {
        if (e.size() != space.size()) {
            throw validation_error("event size does not match the probability space");
        }
    }

    intersection_result best;
    best.measure = -1.0;

    if (events.size() <= exhaustive_intersection_limit) {
        std::vector<std::size_t> chosen;
        // measure only shrinks as sets are added, so a partial intersection
        // no larger than the incumbent can be cut
        auto dfs = [&](auto& self, std::size_t from, const boost::dynamic_bitset<>& acc, double acc_measure) -> void {
            if (chosen.size() == k) {
                if (acc_measure > best.measure) {
                    best.measure = acc_measure;
                    best.indices = chosen;
                }
                return;
            }
            const std::size_t need = k - chosen.size();
            for (std::size_t i = from; i + need <= events.size(); ++i) {
                boost::dynamic_bitset<> next = chosen.empty() ? events[i] : (acc & events[i]);
                const double m = space.measure(next);
                if (m <= best.measure) {
                    continue;
                }
                chosen.push_back(i);
                self(self, i + 1, next, m);
                chosen.pop_back();
            }
        };
        dfs(dfs, 0, boost::dynamic_bitset<>(space.size()), 1.0);
        if (best.measure < 0.0) {
            // every intersection is empty
            best.indices.resize(k);
            std::iota(best.indices.begin(), best.indices.end(), std::size_t{0});
            best.measure = 0.0;
        }
        best.exhaustive = true;
        return best;
    }

    struct state
    {
        std::vector<std::size_t> indices;
        boost::dynamic_bitset<> acc;
        double measure;
    };
    auto by_measure = [](const state& a, const state& b) {
        if (a.measure != b.measure) {
            return a.measure > b.measure;
        }
        return a.indices < b.indices;
    };
    std::vector<state> beam;
    for (std::size_t i = 0; i < events.size(); ++i) {
        beam.push_back({{i}, events[i], space.measure(events[i])});
    }
    std::sort(beam.begin(), beam.end(), by_measure);
    if (beam.size() > beam_width) {
        beam.resize(beam_width);
    }
    for (std::size_t depth = 1; depth < k; ++depth) {
        std::vector<state> next;
        for (const auto& s : beam) {
            for (std::size_t i = 0; i < events.size(); ++i) {
                if (std::find(s.indices.begin(), s.indices.end(), i) != s.indices.end()) {
                    continue;
                }
                state t{s.indices, s.acc & events[i], 0.0};
                t.indices.push_back(i);
                std::sort(t.indices.begin(), t.indices.end());
                t.measure = space.measure(t.acc);
                next.push_back(std::move(t));
            }
        }
        std::sort(next.begin(), next.end(), by_measure);
        next.erase(std::unique(next.begin(), next.end(),
                               [](const state& a, const state& b) { return a.indices == b.indices; }),
                   next.end());
        if (next.size() > beam_width) {
            next.resize(beam_width);
        }
        beam = std::move(next);
    }
    best.indices = beam.front().indices;
    best.measure = beam.front().measure;
    best.exhaustive = false;
    return best;
}

} // namespace mpsens

#endif // MPSENS_NUM_CORE_HPP
