#ifndef MPSENS_PATTERN_ENTROPY_HPP
#define MPSENS_PATTERN_ENTROPY_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "error.hpp"
#include "partitions.hpp"
#include "systems.hpp"

namespace mpsens {

struct search_options
{
    std::uint64_t node_budget = 10'000'000; ///< joint evaluations before giving up
    unsigned threads = 1;
};

/// Pruning slack: a branch survives unless its bound is this far below the
/// incumbent, so rounding in the bound never hides an improving pattern.
inline constexpr double search_slack = 1e-9;

struct pattern_search_result
{
    int k = 0;
    std::int64_t horizon = 0;
    double best_value = 0.0; ///< nats
    std::vector<std::int64_t> best_pattern;
    std::uint64_t nodes_expanded = 0;
    /// Search finished, or the incumbent meets the k H(xi) upper bound.
    bool exact_within_horizon = false;
    bool completed = false;
};

namespace detail {

class pattern_search
{
public:
    pattern_search(const system& sys, const partition& part, int k, std::int64_t horizon, double atom_entropy,
                   const search_options& opts)
      : sys_(sys), part_(part), k_(k), horizon_(horizon), h1_(atom_entropy), opts_(opts)
    {
    }

    struct incumbent
    {
        double value = -std::numeric_limits<double>::infinity();
        std::vector<std::int64_t> times;

        void offer(double v, const std::vector<std::int64_t>& t)
        {
            if (v > value || (v == value && t < times)) {
                value = v;
                times = t;
            }
        }
    };

    /// Explores the subtree below `prefix` into `local`.
    void expand(std::vector<std::int64_t>& prefix, incumbent& local)
    {
        const int remaining = k_ - static_cast<int>(prefix.size());
        const std::int64_t last_start = horizon_ - (remaining - 1);
        struct child
        {
            std::int64_t t;
            double h;
        };
        std::vector<child> children;
        for (std::int64_t t = prefix.back() + 1; t <= last_start; ++t) {
            if (nodes_.fetch_add(1) >= opts_.node_budget) {
                budget_hit_ = true;
                return;
            }
            prefix.push_back(t);
            children.push_back({t, join_entropy(sys_, part_, prefix)});
            prefix.pop_back();
        }
        std::stable_sort(children.begin(), children.end(), [](const child& a, const child& b) { return a.h > b.h; });
        for (const auto& c : children) {
            if (budget_hit_) {
                return;
            }
            const double bound = c.h + (remaining - 1) * h1_;
            if (bound < shared_best_.load() - search_slack) {
                break; // children are sorted, later bounds are no larger
            }
            prefix.push_back(c.t);
            if (remaining == 1) {
                local.offer(c.h, prefix);
                raise_shared(local.value);
            } else {
                expand(prefix, local);
            }
            prefix.pop_back();
        }
    }

    pattern_search_result run()
    {
        pattern_search_result out;
        out.k = k_;
        out.horizon = horizon_;
        incumbent best;
        std::vector<std::int64_t> root{0};
        if (k_ == 1) {
            nodes_ = 1;
            best.offer(h1_, root);
        } else {
            // {0, 1, ..., k-1} is the lexicographically first candidate, so
            // starting from it leaves the tie rule intact and guarantees an
            // incumbent under any budget
            std::vector<std::int64_t> first(static_cast<std::size_t>(k_));
            std::iota(first.begin(), first.end(), std::int64_t{0});
            nodes_ = 1;
            best.offer(join_entropy(sys_, part_, first), first);
            // evenly spread times often reach the k H(xi) bound outright
            const std::int64_t gap = horizon_ / (k_ - 1);
            if (gap > 1) {
                std::vector<std::int64_t> spread(static_cast<std::size_t>(k_));
                for (int i = 0; i < k_; ++i) {
                    spread[static_cast<std::size_t>(i)] = i * gap;
                }
                nodes_ = 2;
                best.offer(join_entropy(sys_, part_, spread), spread);
            }
            raise_shared(best.value);
        }
        if (k_ > 1 && opts_.threads <= 1) {
            expand(root, best);
        } else if (k_ > 1) {
            // split the second time across workers; each keeps its own
            // incumbent and they merge by the same (value, lex) rule
            std::vector<incumbent> locals(opts_.threads);
            std::vector<std::thread> workers;
            std::atomic<std::int64_t> next_t{1};
            const std::int64_t last_start = horizon_ - (k_ - 2);
            for (unsigned w = 0; w < opts_.threads; ++w) {
                workers.emplace_back([&, w] {
                    for (;;) {
                        const std::int64_t t = next_t.fetch_add(1);
                        if (t > last_start || budget_hit_) {
                            return;
                        }
                        if (nodes_.fetch_add(1) >= opts_.node_budget) {
                            budget_hit_ = true;
                            return;
                        }
                        std::vector<std::int64_t> prefix{0, t};
                        const double h = join_entropy(sys_, part_, prefix);
                        if (h + (k_ - 2) * h1_ < shared_best_.load() - search_slack) {
                            continue;
                        }
                        if (k_ == 2) {
                            locals[w].offer(h, prefix);
                            raise_shared(locals[w].value);
                        } else {
                            expand(prefix, locals[w]);
                        }
                    }
                });
            }
            for (auto& t : workers) {
                t.join();
            }
            for (const auto& l : locals) {
                if (!l.times.empty()) {
                    best.offer(l.value, l.times);
                }
            }
        }
        out.best_value = best.value;
        out.best_pattern = best.times;
        out.nodes_expanded = std::min<std::uint64_t>(nodes_.load(), opts_.node_budget);
        out.completed = !budget_hit_;
        // rounding in a join of many atoms can leave the bound a few ulps out of reach
        const double bound = k_ * h1_;
        out.exact_within_horizon = out.completed || best.value >= bound - 1e-11 * std::max(1.0, bound);
        return out;
    }

private:
    void raise_shared(double v)
    {
        double cur = shared_best_.load();
        while (v > cur && !shared_best_.compare_exchange_weak(cur, v)) {
        }
    }

    const system& sys_;
    const partition& part_;
    int k_;
    std::int64_t horizon_;
    double h1_;
    search_options opts_;
    std::atomic<std::uint64_t> nodes_{0};
    std::atomic<bool> budget_hit_{false};
    std::atomic<double> shared_best_{-std::numeric_limits<double>::infinity()};
};

} // namespace detail

/**
 * Largest join entropy over k-patterns inside [0, horizon].
 *
 * Branch and bound over patterns with t_1 = 0 (entropy is shift invariant,
 * and the lexicographically smallest maximizer always starts at 0). A
 * partial pattern S is cut when H(S) + (k - |S|) H(xi) falls below the
 * incumbent, which is valid by subadditivity of entropy under joins and
 * invariance of H(T^{-t} xi). Ties go to the lexicographically smallest
 * pattern. Budget exhaustion returns the incumbent with completed = false.
 */
inline pattern_search_result p_star(const system& sys, const partition& part, int k, std::int64_t horizon,
                                    const search_options& opts = {})
{
    if (k < 1) {
        throw validation_error("pattern length k must be at least 1");
    }
    if (horizon < k - 1) {
        throw validation_error("horizon must satisfy T >= k - 1");
    }
    detail::check_compatible(sys, part);
    const double h1 = partition_entropy(sys, part);
    detail::pattern_search search(sys, part, k, horizon, h1, opts);
    return search.run();
}

struct h_star_row
{
    int k;
    double p_star;
    double p_star_over_k;
    bool exact;
    std::vector<std::int64_t> pattern;
};

struct h_star_profile_t
{
    std::vector<h_star_row> per_k;
    double infimum_proxy = 0.0; ///< min over k of p*_T(k)/k
    std::string partition_id;
    std::int64_t horizon = 0;
    bool exact = true; ///< every row exact within the horizon
};

/// p*_T(k) for k = 1..k_max and their running infimum of p*/k.
inline h_star_profile_t h_star_profile(const system& sys, const partition& part, int k_max, std::int64_t horizon,
                                       const search_options& opts = {})
{
    if (k_max < 1) {
        throw validation_error("k_max must be at least 1");
    }
    h_star_profile_t out;
    out.partition_id = part.describe();
    out.horizon = horizon;
    out.infimum_proxy = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= k_max; ++k) {
        auto r = p_star(sys, part, k, horizon, opts);
        const double ratio = r.best_value / k;
        out.per_k.push_back({k, r.best_value, ratio, r.exact_within_horizon, r.best_pattern});
        out.infimum_proxy = std::min(out.infimum_proxy, ratio);
        out.exact = out.exact && r.exact_within_horizon;
    }
    return out;
}

struct h_star_family_t
{
    std::vector<h_star_profile_t> profiles; ///< word partitions of length 1..L_max
    double supremum = 0.0;                  ///< sup over the family of infimum proxies
};

/**
 * Sweep over word partitions of length 1..max_length. For coding
 * partitions of the symbolic systems here the family is generating, so the
 * supremum stands in for h* over all partitions.
 */
inline h_star_family_t h_star_family(const system& sys, int max_length, int k_max, std::int64_t horizon,
                                     const search_options& opts = {})
{
    if (!sys.symbolic()) {
        throw kind_error("word partition families need a symbolic system");
    }
    h_star_family_t out;
    for (int l = 1; l <= max_length; ++l) {
        out.profiles.push_back(h_star_profile(sys, partition::words(l), k_max, horizon, opts));
        out.supremum = std::max(out.supremum, out.profiles.back().infimum_proxy);
    }
    return out;
}

/// H(join over the first n terms of gamma) / n for n = 1..|gamma|.
inline std::vector<double> sequence_entropy_profile(const system& sys, const partition& part,
                                                    const std::vector<std::int64_t>& gamma)
{
    const time_pattern checked(gamma);
    detail::check_compatible(sys, part);
    std::vector<double> out;
    out.reserve(gamma.size());
    for (std::size_t n = 1; n <= gamma.size(); ++n) {
        const double h = detail::join_entropy(sys, part, std::span(gamma.data(), n));
        out.push_back(h / static_cast<double>(n));
    }
    return out;
}

struct pattern_sweep_result
{
    int k = 0;
    std::int64_t horizon = 0;
    std::uint64_t patterns = 0;
    std::size_t max_atoms = 0; ///< positive-mass atoms of the busiest join
    double max_entropy = 0.0;
    std::vector<std::int64_t> best_pattern;
};

/// Every k-pattern in [0, T] with t_1 = 0, no pruning and no budget.
inline pattern_sweep_result sweep_patterns(const system& sys, const partition& part, int k, std::int64_t horizon)
{
    if (k < 1 || horizon < k - 1) {
        throw validation_error("sweep needs k >= 1 and T >= k - 1");
    }
    detail::check_compatible(sys, part);
    pattern_sweep_result out;
    out.k = k;
    out.horizon = horizon;
    out.max_entropy = -1.0;
    std::vector<std::int64_t> t(static_cast<std::size_t>(k));
    std::iota(t.begin(), t.end(), 0);
    const auto kk = static_cast<std::size_t>(k);
    while (true) {
        const auto masses = detail::joint_masses(sys, part, t);
        double h = 0.0;
        std::size_t atoms = 0;
        for (const auto& km : masses) {
            if (km.second > 0.0) {
                h -= km.second * std::log(km.second);
                ++atoms;
            }
        }
        ++out.patterns;
        out.max_atoms = std::max(out.max_atoms, atoms);
        if (h > out.max_entropy) {
            out.max_entropy = h;
            out.best_pattern = t;
        }
        std::size_t i = kk;
        while (i > 1 && t[i - 1] == horizon - static_cast<std::int64_t>(kk - i)) {
            --i;
        }
        if (i <= 1) {
            break;
        }
        ++t[i - 1];
        for (std::size_t j = i; j < kk; ++j) {
            t[j] = t[j - 1] + 1;
        }
    }
    return out;
}

} // namespace mpsens

#endif // MPSENS_PATTERN_ENTROPY_HPP
