#ifndef MPSENS_SENSITIVITY_HPP
#define MPSENS_SENSITIVITY_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "error.hpp"
#include "num_core.hpp"
#include "partitions.hpp"
#include "pattern_entropy.hpp"
#include "random.hpp"
#include "systems.hpp"

namespace mpsens {

struct full_space
{
};

/// {x : x[position, position + |word|) = word}.
struct cylinder
{
    std::vector<int> word;
    std::size_t position = 0;
};

/// Arc [from, to) of the circle (wraps when from > to); for finite
/// extensions it constrains the base coordinate only.
struct arc
{
    double from;
    double to;
};

/// A set of positive measure that witnesses must be drawn from.
class target_set
{
public:
    using spec_type = std::variant<full_space, cylinder, arc>;

    static target_set make(const system& sys, spec_type spec)
    {
        double m = 1.0;
        if (auto c = std::get_if<cylinder>(&spec)) {
            if (!sys.symbolic()) {
                throw kind_error("cylinder targets need a symbolic system");
            }
            m = word_frequency(sys, c->word);
        } else if (auto a = std::get_if<arc>(&spec)) {
            if (!sys.as<rotation_system>() && !sys.as<sturmian_system>() && !sys.as<finite_extension_system>()) {
                throw kind_error("arc targets need a rotation-based system");
            }
            if (!(a->from >= 0.0 && a->from < 1.0 && a->to >= 0.0 && a->to <= 1.0)) {
                throw validation_error("arc endpoints must lie in [0, 1]");
            }
            m = a->to - a->from;
            if (m <= 0.0) {
                m += 1.0;
            }
        }
        if (!(m > 0.0)) {
            throw validation_error("target set has measure zero");
        }
        return target_set(std::move(spec), m);
    }

    const spec_type& spec() const { return spec_; }
    double measure() const { return measure_; }

    /// Coordinates a symbolic point must carry before membership is decidable.
    std::size_t lookahead() const
    {
        if (auto c = std::get_if<cylinder>(&spec_)) {
            return c->position + c->word.size();
        }
        return 1;
    }

    std::string describe() const
    {
        if (auto c = std::get_if<cylinder>(&spec_)) {
            std::string w;
            for (int s : c->word) {
                w += std::to_string(s);
                if (s > 9) {
                    w += ' ';
                }
            }
            return "cylinder[" + w + "]@" + std::to_string(c->position);
        }
        if (auto a = std::get_if<arc>(&spec_)) {
            return "arc[" + std::to_string(a->from) + "," + std::to_string(a->to) + ")";
        }
        return "full";
    }

private:
    target_set(spec_type s, double m) : spec_(std::move(s)), measure_(m) {}

    spec_type spec_;
    double measure_;
};

inline bool contains(const system& sys, const target_set& a, const point& x)
{
    if (auto c = std::get_if<cylinder>(&a.spec())) {
        const auto syms = symbols(sys, x, c->position + c->word.size());
        return std::equal(c->word.begin(), c->word.end(), syms.begin() + static_cast<std::ptrdiff_t>(c->position));
    }
    if (auto r = std::get_if<arc>(&a.spec())) {
        double z = 0.0;
        if (auto cp = std::get_if<circle_point>(&x.value)) {
            z = cp->x;
        } else {
            z = std::get<extension_point>(x.value).x;
        }
        return detail::frac(static_cast<long double>(z) - r->from) < a.measure();
    }
    return true;
}

/**
 * Target sets of shrinking measure: cylinders on growing prefixes of a
 * sampled reference sequence, or arcs of length 2^-1 .. 2^-depth at a
 * sampled base point. Product systems get the full space only.
 */
inline std::vector<target_set> adversarial_family(const system& sys, int depth, std::uint64_t seed)
{
    std::vector<target_set> out;
    if (depth < 1) {
        throw validation_error("family depth must be at least 1");
    }
    if (sys.symbolic()) {
        const auto ref = symbols(sys, sample_point(sys, seed, static_cast<std::size_t>(depth)),
                                 static_cast<std::size_t>(depth));
        for (int j = 1; j <= depth; ++j) {
            out.push_back(target_set::make(sys, cylinder{std::vector<int>(ref.begin(), ref.begin() + j), 0}));
        }
    } else if (sys.as<rotation_system>() || sys.as<finite_extension_system>()) {
        engine e = make_engine(seed, 0xa4c);
        const double x0 = uniform01(e);
        for (int j = 1; j <= depth; ++j) {
            const double to = detail::frac(static_cast<long double>(x0) + std::ldexp(1.0L, -j));
            out.push_back(target_set::make(sys, arc{x0, to == 0.0 ? 1.0 : to}));
        }
    } else {
        out.push_back(target_set::make(sys, full_space{}));
    }
    return out;
}

struct sensitivity_options
{
    std::uint64_t rejection_budget = 1'000'000;
    std::uint64_t construction_budget = 100'000; ///< draws of z in construct_witnesses
    std::size_t distinct_horizon = 64; ///< symbolic coordinates compared for distinctness
    std::size_t metric_horizon = 64;
    search_options search;
};

struct witness
{
    point x;
    std::uint64_t seed;
};

namespace detail {

inline std::size_t initial_horizon(const system& sys, const target_set& a, std::size_t horizon,
                                   const sensitivity_options& opts)
{
    // sequence kinds extend lazily from the same stream, so rejection only
    // pays for the coordinates the membership test reads
    if (sys.as<bernoulli_system>() || sys.as<markov_system>()) {
        return std::max(a.lookahead(), opts.distinct_horizon);
    }
    return std::max({horizon, a.lookahead(), opts.distinct_horizon});
}

inline bool distinct_from(const system& sys, const point& x, const std::vector<witness>& others,
                          const sensitivity_options& opts)
{
    for (const auto& w : others) {
        if (same_point(sys, x, w.x, opts.distinct_horizon)) {
            return false;
        }
    }
    return true;
}

} // namespace detail

/// Rejection-samples n distinct points of A; seeds are derived from `seed`.
inline std::vector<witness> sample_in_target(const system& sys, const target_set& a, int n, std::size_t horizon,
                                             std::uint64_t seed, const sensitivity_options& opts = {})
{
    std::vector<witness> out;
    const std::size_t h0 = detail::initial_horizon(sys, a, horizon, opts);
    for (std::uint64_t attempt = 0; static_cast<int>(out.size()) < n; ++attempt) {
        if (attempt >= opts.rejection_budget) {
            throw sampling_error("no " + std::to_string(n) + " distinct points found in " + a.describe() + " after " +
                                 std::to_string(opts.rejection_budget) + " draws");
        }
        const std::uint64_t s = derive_seed(seed, attempt);
        point x = sample_point(sys, s, h0);
        if (contains(sys, a, x) && detail::distinct_from(sys, x, out, opts)) {
            extend(sys, x, horizon);
            out.push_back({std::move(x), s});
        }
    }
    return out;
}

/// Points from explicit seeds; they must lie in A and be pairwise distinct.
inline std::vector<witness> sample_witnesses(const system& sys, const target_set& a,
                                             const std::vector<std::uint64_t>& seeds, std::size_t horizon,
                                             const sensitivity_options& opts = {})
{
    std::vector<witness> out;
    for (auto s : seeds) {
        point x = sample_point(sys, s, detail::initial_horizon(sys, a, horizon, opts));
        if (!contains(sys, a, x)) {
            throw validation_error("seed " + std::to_string(s) + " gives a point outside " + a.describe());
        }
        if (!detail::distinct_from(sys, x, out, opts)) {
            throw validation_error("witness points must be distinct");
        }
        extend(sys, x, horizon);
        out.push_back({std::move(x), s});
    }
    return out;
}

/// F = {k < N : the orbits of all points sit in pairwise different atoms at time k}.
inline finite_time_set separation_set(const system& sys, const partition& part, const std::vector<point>& points,
                                      std::size_t n)
{
    std::vector<std::vector<std::uint64_t>> seqs;
    for (const auto& p : points) {
        seqs.push_back(orbit_atom_sequence(sys, part, p, n));
    }
    std::vector<std::int64_t> times;
    std::vector<std::uint64_t> atoms(points.size());
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < seqs.size(); ++i) {
            atoms[i] = seqs[i][k];
        }
        std::sort(atoms.begin(), atoms.end());
        if (std::adjacent_find(atoms.begin(), atoms.end()) == atoms.end()) {
            times.push_back(static_cast<std::int64_t>(k));
        }
    }
    return finite_time_set(std::move(times), static_cast<std::int64_t>(n));
}

struct separation_record
{
    std::vector<std::uint64_t> witness_seeds;
    finite_time_set separation_set;
    density_estimate density;
    double all_distinct_atoms_fraction = 0.0;
    bool constructed = false; ///< witnesses came from the pattern construction
    std::vector<std::int64_t> pattern;
};

struct cesaro_record
{
    std::vector<std::uint64_t> witness_seeds;
    std::vector<std::pair<std::int64_t, double>> profile; ///< (checkpoint N', average)
    double lower_proxy = 0.0;
    double upper_proxy = 0.0;
};

enum class notion { strong, weak, mean, pair };
enum class verdict { witnessed, not_witnessed_at_budget };

inline const char* to_string(notion n)
{
    switch (n) {
    case notion::strong: return "strong";
    case notion::weak: return "weak";
    case notion::mean: return "mean";
    case notion::pair: return "pair";
    }
    return "?";
}

inline const char* to_string(verdict v)
{
    return v == verdict::witnessed ? "witnessed" : "not-witnessed-at-budget";
}

struct sensitivity_report
{
    notion kind = notion::strong;
    int n = 2;
    double delta_estimate = 0.0;
    std::vector<separation_record> trials;
    std::vector<cesaro_record> cesaro; ///< mean notion only
    verdict outcome = verdict::not_witnessed_at_budget;

    /// Smallest trial proxy.
    double min_proxy() const
    {
        double m = std::numeric_limits<double>::infinity();
        for (const auto& t : trials) {
            m = std::min(m, kind == notion::weak ? t.density.upper_proxy : t.density.lower_proxy);
        }
        for (const auto& c : cesaro) {
            m = std::min(m, c.lower_proxy);
        }
        return trials.empty() && cesaro.empty() ? 0.0 : m;
    }
};

inline separation_record make_record(const system& sys, const partition& part, const std::vector<witness>& ws,
                                     std::size_t n)
{
    std::vector<point> pts;
    separation_record rec;
    for (const auto& w : ws) {
        pts.push_back(w.x);
        rec.witness_seeds.push_back(w.seed);
    }
    rec.separation_set = separation_set(sys, part, pts, n);
    const auto cps = standard_checkpoints(static_cast<std::int64_t>(n));
    rec.density = estimate_density(rec.separation_set, cps);
    rec.all_distinct_atoms_fraction = static_cast<double>(rec.separation_set.size()) / static_cast<double>(n);
    return rec;
}

/**
 * One n-sensitivity trial: n distinct points of A, and the times in [0, N)
 * at which their orbits occupy pairwise different atoms.
 */
inline separation_record n_sensitivity_trial(const system& sys, const partition& part, const target_set& a, int n,
                                             std::size_t horizon, std::uint64_t seed,
                                             const sensitivity_options& opts = {})
{
    if (n < 2) {
        throw validation_error("sensitivity needs n >= 2");
    }
    if (horizon < 1) {
        throw validation_error("trial horizon must be positive");
    }
    const auto atoms = atom_count(sys, part);
    if (atoms < static_cast<std::size_t>(n)) {
        throw precondition_error("partition has " + std::to_string(atoms) + " atoms, fewer than n = " +
                                 std::to_string(n));
    }
    return make_record(sys, part, sample_in_target(sys, a, n, horizon, seed, opts), horizon);
}

/// Same data as the strong trial; weak reports read the upper-density proxy.
inline separation_record weak_sensitivity_trial(const system& sys, const partition& part, const target_set& a, int n,
                                                std::size_t horizon, std::uint64_t seed,
                                                const sensitivity_options& opts = {})
{
    return n_sensitivity_trial(sys, part, a, n, horizon, seed, opts);
}

/// delta = max over trials of the notion's density proxy.
inline sensitivity_report summarize(notion kind, int n, std::vector<separation_record> trials)
{
    sensitivity_report rep;
    rep.kind = kind;
    rep.n = n;
    rep.trials = std::move(trials);
    for (const auto& t : rep.trials) {
        rep.delta_estimate =
            std::max(rep.delta_estimate, kind == notion::weak ? t.density.upper_proxy : t.density.lower_proxy);
    }
    rep.outcome = rep.delta_estimate > 0.0 ? verdict::witnessed : verdict::not_witnessed_at_budget;
    return rep;
}

struct witness_construction
{
    verdict outcome = verdict::not_witnessed_at_budget;
    std::vector<witness> points; ///< x_i = T^{t_i} z
    std::vector<std::int64_t> pattern;
    std::vector<int> cell_atoms;   ///< atoms P_1..P_n of the cell W
    double cell_measure = 0.0;     ///< mu(W)
    std::uint64_t z_seed = 0;
    std::uint64_t attempts = 0;
    pattern_search_result search;
    std::string reason;
};

/**
 * Builds n witnesses in A from a high-entropy pattern. A pattern t_1..t_n
 * maximizing the join entropy is found by p_star; W is the heaviest cell
 * T^{-t_1}P_1 cap ... cap T^{-t_n}P_n with pairwise different atoms; z is
 * drawn until every T^{t_i} z lies in A, and x_i = T^{t_i} z. Whenever the
 * orbit of z visits W, the x_i sit in different atoms.
 */
inline witness_construction construct_witnesses(const system& sys, const partition& part, const target_set& a, int n,
                                                 std::int64_t pattern_horizon, std::size_t horizon, std::uint64_t seed,
                                                 const sensitivity_options& opts = {})
{
    if (n < 2) {
        throw validation_error("sensitivity needs n >= 2");
    }
    witness_construction out;
    if (atom_count(sys, part) < static_cast<std::size_t>(n)) {
        out.reason = "partition has fewer than n atoms";
        return out;
    }
    out.search = p_star(sys, part, n, pattern_horizon, opts.search);
    out.pattern = out.search.best_pattern;
    const auto joint = joint_distribution(sys, part, time_pattern(out.pattern));
    double best = 0.0;
    for (std::size_t i = 0; i < joint.dist.size(); ++i) {
        auto label = joint.dist.labels()[i];
        auto sorted = label;
        std::sort(sorted.begin(), sorted.end());
        if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end() && joint.dist.probs()[i] > best) {
            best = joint.dist.probs()[i];
            out.cell_atoms = label;
        }
    }
    out.cell_measure = best;
    if (out.cell_atoms.empty()) {
        out.reason = "no cell with pairwise different atoms along the best pattern";
        return out;
    }
    if (auto c = std::get_if<cylinder>(&a.spec())) {
        // the shifted cylinders must agree where they overlap, or the
        // intersection of the T^{-t_i} A is empty
        std::map<std::int64_t, int> fixed;
        for (auto t : out.pattern) {
            for (std::size_t j = 0; j < c->word.size(); ++j) {
                auto [it, fresh] = fixed.emplace(t + static_cast<std::int64_t>(c->position + j), c->word[j]);
                if (!fresh && it->second != c->word[j]) {
                    out.reason = "the shifted copies of A along the pattern do not intersect";
                    return out;
                }
            }
        }
    }
    const std::size_t reach = horizon + static_cast<std::size_t>(out.pattern.back());
    const std::size_t h0 = detail::initial_horizon(sys, a, reach, opts) + static_cast<std::size_t>(out.pattern.back());
    for (std::uint64_t attempt = 0; attempt < opts.construction_budget; ++attempt) {
        const std::uint64_t s = derive_seed(seed, attempt);
        point z = sample_point(sys, s, h0);
        std::vector<witness> xs;
        bool ok = true;
        for (auto t : out.pattern) {
            point x = shift(sys, z, t);
            if (!contains(sys, a, x) || !detail::distinct_from(sys, x, xs, opts)) {
                ok = false;
                break;
            }
            xs.push_back({std::move(x), s});
        }
        if (!ok) {
            continue;
        }
        for (auto& w : xs) {
            extend(sys, w.x, horizon);
        }
        out.points = std::move(xs);
        out.z_seed = s;
        out.attempts = attempt + 1;
        out.outcome = verdict::witnessed;
        return out;
    }
    out.attempts = opts.construction_budget;
    out.reason = "sampling budget exhausted before T^{t_i} z landed in A for all i";
    return out;
}

/// Separation record of constructed witnesses, if the construction succeeded.
inline std::optional<separation_record> constructed_trial(const system& sys, const partition& part, const target_set& a,
                                                          int n, std::int64_t pattern_horizon, std::size_t horizon,
                                                          std::uint64_t seed, const sensitivity_options& opts = {})
{
    auto c = construct_witnesses(sys, part, a, n, pattern_horizon, horizon, seed, opts);
    if (c.outcome != verdict::witnessed) {
        return std::nullopt;
    }
    auto rec = make_record(sys, part, c.points, horizon);
    rec.constructed = true;
    rec.pattern = c.pattern;
    return rec;
}

struct family_report
{
    notion kind = notion::strong;
    int n = 2;
    std::vector<target_set> sets;
    std::vector<sensitivity_report> per_set;
    double delta_estimate = 0.0; ///< min over sets of the per-set delta
    verdict outcome = verdict::not_witnessed_at_budget;
};

/**
 * Runs strong or weak trials on every set of a family. A common delta must
 * work for all sets, so the family estimate is the minimum of the per-set
 * estimates; "witnessed" requires it to be positive. When
 * `pattern_horizon` is positive the constructive witnesses join the trials.
 */
inline family_report sensitivity_over_family(const system& sys, const partition& part, notion kind, int n,
                                             const std::vector<target_set>& family, std::size_t horizon,
                                             int trials_per_set, std::uint64_t seed, std::int64_t pattern_horizon = 0,
                                             const sensitivity_options& opts = {})
{
    if (kind != notion::strong && kind != notion::weak) {
        throw validation_error("family trials support the strong and weak notions");
    }
    family_report out;
    out.kind = kind;
    out.n = n;
    out.sets = family;
    out.delta_estimate = std::numeric_limits<double>::infinity();
    for (std::size_t s = 0; s < family.size(); ++s) {
        std::vector<separation_record> recs;
        for (int t = 0; t < trials_per_set; ++t) {
            recs.push_back(n_sensitivity_trial(sys, part, family[s], n, horizon,
                                               derive_seed(seed, s * 1000 + static_cast<std::uint64_t>(t)), opts));
        }
        if (pattern_horizon > 0) {
            auto c = constructed_trial(sys, part, family[s], n, pattern_horizon, horizon,
                                       derive_seed(seed, s * 1000 + 999), opts);
            if (c) {
                recs.push_back(std::move(*c));
            }
        }
        out.per_set.push_back(summarize(kind, n, std::move(recs)));
        out.delta_estimate = std::min(out.delta_estimate, out.per_set.back().delta_estimate);
    }
    if (family.empty()) {
        out.delta_estimate = 0.0;
    }
    out.outcome = out.delta_estimate > 0.0 ? verdict::witnessed : verdict::not_witnessed_at_budget;
    return out;
}

namespace detail {

inline cesaro_record cesaro_from(const system& sys, const std::vector<witness>& ws, std::size_t horizon,
                                 const sensitivity_options& opts)
{
    cesaro_record rec;
    std::vector<double> mins(horizon, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < ws.size(); ++i) {
        rec.witness_seeds.push_back(ws[i].seed);
        for (std::size_t j = i + 1; j < ws.size(); ++j) {
            const auto d = distance_sequence(sys, ws[i].x, ws[j].x, horizon, opts.metric_horizon);
            for (std::size_t k = 0; k < horizon; ++k) {
                mins[k] = std::min(mins[k], d[k]);
            }
        }
    }
    const auto cps = standard_checkpoints(static_cast<std::int64_t>(horizon));
    double sum = 0.0;
    std::size_t k = 0;
    for (auto cp : cps) {
        for (; k < static_cast<std::size_t>(cp); ++k) {
            sum += mins[k];
        }
        rec.profile.emplace_back(cp, sum / static_cast<double>(cp));
    }
    rec.lower_proxy = std::numeric_limits<double>::infinity();
    rec.upper_proxy = -std::numeric_limits<double>::infinity();
    for (std::size_t i = rec.profile.size() / 2; i < rec.profile.size(); ++i) {
        rec.lower_proxy = std::min(rec.lower_proxy, rec.profile[i].second);
        rec.upper_proxy = std::max(rec.upper_proxy, rec.profile[i].second);
    }
    return rec;
}

} // namespace detail

/**
 * Mean n-sensitivity: Cesaro averages of min_{i<j} d(T^k x_i, T^k x_j)
 * over the standard checkpoints, for n distinct points of A per trial.
 */
inline sensitivity_report mean_sensitivity_estimate(const system& sys, const target_set& a, int n, std::size_t horizon,
                                                    int trials, std::uint64_t seed,
                                                    const sensitivity_options& opts = {})
{
    if (n < 2 || trials < 1 || horizon < 1) {
        throw validation_error("mean sensitivity needs n >= 2, trials >= 1 and a positive horizon");
    }
    sensitivity_report rep;
    rep.kind = notion::mean;
    rep.n = n;
    for (int t = 0; t < trials; ++t) {
        const auto ws = sample_in_target(sys, a, n, horizon + opts.metric_horizon,
                                         derive_seed(seed, static_cast<std::uint64_t>(t)), opts);
        rep.cesaro.push_back(detail::cesaro_from(sys, ws, horizon, opts));
        rep.delta_estimate = std::max(rep.delta_estimate, rep.cesaro.back().lower_proxy);
    }
    rep.outcome = rep.delta_estimate > 0.0 ? verdict::witnessed : verdict::not_witnessed_at_budget;
    return rep;
}

/// Mean-sensitivity record for explicitly seeded witnesses.
inline cesaro_record mean_sensitivity_from_seeds(const system& sys, const target_set& a,
                                                 const std::vector<std::uint64_t>& seeds, std::size_t horizon,
                                                 const sensitivity_options& opts = {})
{
    if (seeds.size() < 2) {
        throw validation_error("mean sensitivity needs at least two witnesses");
    }
    return detail::cesaro_from(sys, sample_witnesses(sys, a, seeds, horizon + opts.metric_horizon, opts), horizon,
                               opts);
}

/**
 * Separation densities of independent mu x mu pairs from the whole space.
 * For a sensitive partition the proxies should concentrate above a common
 * positive level.
 */
inline sensitivity_report pair_separation_density(const system& sys, const partition& part, int trials,
                                                  std::size_t horizon, std::uint64_t seed)
{
    if (trials < 1 || horizon < 1) {
        throw validation_error("pair separation needs trials >= 1 and a positive horizon");
    }
    detail::check_compatible(sys, part);
    std::vector<separation_record> recs;
    for (int t = 0; t < trials; ++t) {
        const auto sx = derive_seed(seed, 2 * static_cast<std::uint64_t>(t));
        const auto sy = derive_seed(seed, 2 * static_cast<std::uint64_t>(t) + 1);
        std::vector<witness> ws{{sample_point(sys, sx, horizon), sx}, {sample_point(sys, sy, horizon), sy}};
        recs.push_back(make_record(sys, part, ws, horizon));
    }
    auto rep = summarize(notion::pair, 2, std::move(recs));
    return rep;
}

} // namespace mpsens

#endif // MPSENS_SENSITIVITY_HPP
