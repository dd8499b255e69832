#ifndef MPSENS_PARTITIONS_HPP
#define MPSENS_PARTITIONS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "detail/circle.hpp"
#include "error.hpp"
#include "num_core.hpp"
#include "systems.hpp"

namespace mpsens {

class partition;

/// Letter -> atom for symbolic systems; fiber index -> atom for finite extensions.
struct symbol_map_partition
{
    std::vector<int> map;
};

/// Atom of x is the word x[0, length), coded big-endian in the alphabet base.
struct word_partition
{
    int length;
};

/// Arcs [cuts[i], cuts[i+1]) -> atoms[i]; the last arc wraps around 0.
struct interval_partition
{
    std::vector<double> cuts;
    std::vector<int> atoms;
};

/// One partition per component of a product system (or base/fiber pair of
/// a finite extension); atom codes combine in mixed radix.
struct product_partition
{
    std::vector<partition> parts;
};

/// Common refinement kept symbolic: atom = (atom of a, atom of b).
struct join_partition
{
    std::shared_ptr<const partition> a;
    std::shared_ptr<const partition> b;
};

/**
 * Finite measurable partition of a system's phase space.
 *
 * Atoms are identified by integer codes in [0, code_range); the number of
 * atoms is the number of codes of positive measure and depends on the
 * system (see atom_count). Interval arcs are closed on the left.
 */
class partition
{
public:
    using kind_type =
        std::variant<symbol_map_partition, word_partition, interval_partition, product_partition, join_partition>;

    static partition symbol_map(std::vector<int> map)
    {
        if (map.empty()) {
            throw validation_error("symbol map is empty");
        }
        for (int a : map) {
            if (a < 0) {
                throw validation_error("symbol map atoms must be non-negative");
            }
        }
        return partition(symbol_map_partition{std::move(map)});
    }

    /// Identity map on an alphabet of the given size.
    static partition letters(int alphabet)
    {
        std::vector<int> map(static_cast<std::size_t>(alphabet));
        for (int i = 0; i < alphabet; ++i) {
            map[static_cast<std::size_t>(i)] = i;
        }
        return symbol_map(std::move(map));
    }

    static partition words(int length)
    {
        if (length < 1) {
            throw validation_error("word partition length must be positive");
        }
        return partition(word_partition{length});
    }

    /// Arc-list form: arcs[i] holds the [from, to) arcs of atom i. Arcs may
    /// wrap (from > to); together they must tile the circle exactly.
    static partition intervals(const std::vector<std::vector<std::pair<double, double>>>& arcs)
    {
        struct piece
        {
            double from;
            double length;
            int atom;
        };
        std::vector<piece> pieces;
        for (std::size_t a = 0; a < arcs.size(); ++a) {
            for (auto [from, to] : arcs[a]) {
                if (!(from >= 0.0 && from < 1.0 && to >= 0.0 && to <= 1.0)) {
                    throw validation_error("interval endpoints must lie in [0, 1]");
                }
                double len = to - from;
                if (len <= 0.0) {
                    len += 1.0;
                }
                pieces.push_back({from, len, static_cast<int>(a)});
            }
        }
        if (pieces.empty()) {
            throw validation_error("interval partition has no arcs");
        }
        std::sort(pieces.begin(), pieces.end(), [](const piece& x, const piece& y) { return x.from < y.from; });
        double total = 0.0;
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            const auto& next = pieces[(i + 1) % pieces.size()];
            const double end = detail::frac(static_cast<long double>(pieces[i].from) + pieces[i].length);
            if (std::abs(detail::arc_distance(end, next.from)) > detail::arc_dedupe_tolerance) {
                throw validation_error("interval arcs overlap or leave a gap");
            }
            total += pieces[i].length;
        }
        if (std::abs(total - 1.0) > 1e-9) {
            throw validation_error("interval arcs do not cover the circle exactly once");
        }
        std::vector<double> cuts;
        std::vector<int> atoms;
        for (const auto& p : pieces) {
            cuts.push_back(p.from);
            atoms.push_back(p.atom);
        }
        return from_cuts(std::move(cuts), std::move(atoms));
    }

    /// Cut form: arcs [cuts[i], cuts[i+1]) -> atoms[i], cuts strictly increasing.
    static partition from_cuts(std::vector<double> cuts, std::vector<int> atoms)
    {
        if (cuts.empty() || cuts.size() != atoms.size()) {
            throw validation_error("interval partition needs one atom per cut");
        }
        for (std::size_t i = 0; i < cuts.size(); ++i) {
            if (!(cuts[i] >= 0.0 && cuts[i] < 1.0) || (i > 0 && cuts[i] <= cuts[i - 1]) || atoms[i] < 0) {
                throw validation_error("interval cuts must be increasing in [0, 1) with non-negative atoms");
            }
        }
        return partition(interval_partition{std::move(cuts), std::move(atoms)});
    }

    /// Two arcs [0, c) and [c, 1).
    static partition half_circle(double c = 0.5) { return from_cuts({0.0, c}, {0, 1}); }

    static partition product(std::vector<partition> parts)
    {
        if (parts.empty()) {
            throw validation_error("product partition needs components");
        }
        return partition(product_partition{std::move(parts)});
    }

    static partition join(partition a, partition b)
    {
        return partition(join_partition{std::make_shared<const partition>(std::move(a)),
                                        std::make_shared<const partition>(std::move(b))});
    }

    const kind_type& kind() const { return kind_; }

    template <typename K>
    const K* as() const
    {
        return std::get_if<K>(&kind_);
    }

    /// Symbols of look-ahead a symbolic partition reads.
    int window() const
    {
        if (auto w = as<word_partition>()) {
            return w->length;
        }
        if (auto j = as<join_partition>()) {
            return std::max(j->a->window(), j->b->window());
        }
        return 1;
    }

    /// Upper bound (exclusive) on atom codes for the given system.
    std::uint64_t code_range(const system& sys) const
    {
        return std::visit(
            [&](const auto& k) -> std::uint64_t {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, symbol_map_partition>) {
                    return static_cast<std::uint64_t>(*std::max_element(k.map.begin(), k.map.end())) + 1;
                } else if constexpr (std::is_same_v<K, word_partition>) {
                    return checked_power(static_cast<std::uint64_t>(sys.alphabet_size()), k.length);
                } else if constexpr (std::is_same_v<K, interval_partition>) {
                    return static_cast<std::uint64_t>(*std::max_element(k.atoms.begin(), k.atoms.end())) + 1;
                } else if constexpr (std::is_same_v<K, product_partition>) {
                    std::uint64_t r = 1;
                    for (std::size_t i = 0; i < k.parts.size(); ++i) {
                        r = checked_mul(r, k.parts[i].code_range(component(sys, i)));
                    }
                    return r;
                } else {
                    return checked_mul(k.a->code_range(sys), k.b->code_range(sys));
                }
            },
            kind_);
    }

    std::string describe() const
    {
        return std::visit(
            [](const auto& k) -> std::string {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, symbol_map_partition>) {
                    std::string s = "symbol_map(";
                    for (std::size_t i = 0; i < k.map.size(); ++i) {
                        s += (i ? "," : "") + std::to_string(k.map[i]);
                    }
                    return s + ")";
                } else if constexpr (std::is_same_v<K, word_partition>) {
                    return "words(" + std::to_string(k.length) + ")";
                } else if constexpr (std::is_same_v<K, interval_partition>) {
                    return "intervals(" + std::to_string(k.cuts.size()) + " arcs)";
                } else if constexpr (std::is_same_v<K, product_partition>) {
                    std::string s = "product(";
                    for (std::size_t i = 0; i < k.parts.size(); ++i) {
                        s += (i ? "," : "") + k.parts[i].describe();
                    }
                    return s + ")";
                } else {
                    return "join(" + k.a->describe() + "," + k.b->describe() + ")";
                }
            },
            kind_);
    }

    static std::uint64_t checked_mul(std::uint64_t a, std::uint64_t b)
    {
        if (b != 0 && a > std::numeric_limits<std::uint64_t>::max() / b) {
            throw span_error("atom label space exceeds 64 bits");
        }
        return a * b;
    }

    static std::uint64_t checked_power(std::uint64_t base, int e)
    {
        std::uint64_t r = 1;
        for (int i = 0; i < e; ++i) {
            r = checked_mul(r, base);
        }
        return r;
    }

    /// Component i of a product system, or base/fiber slot of an extension.
    static const system& component(const system& sys, std::size_t i)
    {
        if (auto p = sys.as<product_system>()) {
            return p->parts.at(i);
        }
        return sys;
    }

private:
    explicit partition(kind_type k) : kind_(std::move(k)) {}

    kind_type kind_;
};

/// Strictly increasing non-negative times t_1 < ... < t_k, k >= 1.
class time_pattern
{
public:
    time_pattern(std::vector<std::int64_t> times) : times_(std::move(times))
    {
        if (times_.empty()) {
            throw validation_error("time pattern needs at least one time");
        }
        for (std::size_t i = 0; i < times_.size(); ++i) {
            if (times_[i] < 0 || (i > 0 && times_[i] <= times_[i - 1])) {
                throw validation_error("time pattern must be strictly increasing and non-negative");
            }
        }
    }

    std::span<const std::int64_t> times() const { return times_; }
    std::size_t size() const { return times_.size(); }
    std::int64_t front() const { return times_.front(); }
    std::int64_t back() const { return times_.back(); }

    friend auto operator<=>(const time_pattern&, const time_pattern&) = default;

private:
    std::vector<std::int64_t> times_;
};

/// Joint law of (atom(T^{t_1}x), ..., atom(T^{t_k}x)); null tuples omitted.
struct joint_distribution_t
{
    time_pattern pattern;
    prob_vector<std::vector<int>> dist;
};

namespace detail {

/// Throws unless the partition can be evaluated on the system.
inline void check_compatible(const system& sys, const partition& part)
{
    if (auto j = part.as<join_partition>()) {
        check_compatible(sys, *j->a);
        check_compatible(sys, *j->b);
        return;
    }
    if (sys.symbolic()) {
        if (auto m = part.as<symbol_map_partition>()) {
            if (static_cast<int>(m->map.size()) != sys.alphabet_size()) {
                throw validation_error("symbol map must cover the alphabet of " + std::to_string(sys.alphabet_size()) +
                                       " letters");
            }
            return;
        }
        if (part.as<word_partition>()) {
            return;
        }
        throw kind_error(part.describe() + " cannot partition a " + sys.name() + " system");
    }
    if (sys.as<rotation_system>()) {
        if (part.as<interval_partition>()) {
            return;
        }
        throw kind_error(part.describe() + " cannot partition a rotation");
    }
    if (auto f = sys.as<finite_extension_system>()) {
        if (part.as<interval_partition>()) {
            return;
        }
        if (auto m = part.as<symbol_map_partition>()) {
            if (static_cast<int>(m->map.size()) != f->fiber) {
                throw validation_error("fiber map must cover all " + std::to_string(f->fiber) + " fiber points");
            }
            return;
        }
        if (auto p = part.as<product_partition>()) {
            if (p->parts.size() != 2 || !p->parts[0].as<interval_partition>() ||
                !p->parts[1].as<symbol_map_partition>()) {
                throw kind_error("finite extension product partitions are (interval on base, map on fiber)");
            }
            check_compatible(sys, p->parts[1]);
            return;
        }
        throw kind_error(part.describe() + " cannot partition a finite extension");
    }
    const auto& prod = expect_kind<product_system>(sys, "partition");
    const auto* p = part.as<product_partition>();
    if (!p || p->parts.size() != prod.parts.size()) {
        throw kind_error("product systems need a product partition with one component per factor");
    }
    for (std::size_t i = 0; i < p->parts.size(); ++i) {
        check_compatible(prod.parts[i], p->parts[i]);
    }
}

/// Atom of a symbolic window (window[0] is the current coordinate).
inline std::uint64_t window_atom(const partition& part, std::span<const int> window, const system& sys)
{
    if (auto m = part.as<symbol_map_partition>()) {
        return static_cast<std::uint64_t>(m->map[static_cast<std::size_t>(window[0])]);
    }
    if (auto w = part.as<word_partition>()) {
        std::uint64_t code = 0;
        const auto a = static_cast<std::uint64_t>(sys.alphabet_size());
        for (int i = 0; i < w->length; ++i) {
            code = code * a + static_cast<std::uint64_t>(window[static_cast<std::size_t>(i)]);
        }
        return code;
    }
    const auto& j = std::get<join_partition>(part.kind());
    return window_atom(*j.a, window, sys) * j.b->code_range(sys) + window_atom(*j.b, window, sys);
}

/// Atom of a circle point (rotation) or of (z, fiber) (finite extension).
inline std::uint64_t state_atom(const partition& part, double z, int fiber, const system& sys)
{
    if (auto iv = part.as<interval_partition>()) {
        return static_cast<std::uint64_t>(iv->atoms[arc_index(iv->cuts, z)]);
    }
    if (auto m = part.as<symbol_map_partition>()) {
        return static_cast<std::uint64_t>(m->map[static_cast<std::size_t>(fiber)]);
    }
    if (auto p = part.as<product_partition>()) {
        return state_atom(p->parts[0], z, fiber, sys) * p->parts[1].code_range(sys) +
               state_atom(p->parts[1], z, fiber, sys);
    }
    const auto& j = std::get<join_partition>(part.kind());
    return state_atom(*j.a, z, fiber, sys) * j.b->code_range(sys) + state_atom(*j.b, z, fiber, sys);
}

using keyed_masses = std::vector<std::pair<std::uint64_t, double>>;

/// Sorts by key and merges equal keys in a fixed order.
inline keyed_masses merge_masses(keyed_masses items)
{
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    keyed_masses out;
    for (const auto& [key, mass] : items) {
        if (!out.empty() && out.back().first == key) {
            out.back().second += mass;
        } else {
            out.emplace_back(key, mass);
        }
    }
    std::erase_if(out, [](const auto& km) { return !(km.second > 0.0); });
    return out;
}

inline std::vector<std::int64_t> relevant_positions(std::span<const std::int64_t> times, int window)
{
    std::vector<std::int64_t> pos;
    for (auto t : times) {
        for (int i = 0; i < window; ++i) {
            if (pos.empty() || t + i > pos.back()) {
                pos.push_back(t + i);
            }
        }
    }
    return pos;
}

/// Bernoulli / Markov joints by forward propagation over relevant positions.
inline keyed_masses chain_joint(const system& sys, const partition& part, std::span<const std::int64_t> times,
                                std::uint64_t range)
{
    std::vector<std::vector<double>> matrix;
    std::vector<double> initial;
    if (auto b = sys.as<bernoulli_system>()) {
        matrix.assign(b->probs.size(), b->probs);
        initial = b->probs;
    } else {
        const auto& m = expect_kind<markov_system>(sys, "joint_distribution");
        matrix = m.matrix;
        initial = m.stationary;
    }
    const int a = sys.alphabet_size();
    const int w = part.window();
    const std::uint64_t buf_mod = partition::checked_power(static_cast<std::uint64_t>(a), w);
    const auto positions = relevant_positions(times, w);

    const auto n = static_cast<Eigen::Index>(a);
    Eigen::MatrixXd step(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            step(i, j) = matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    std::map<std::int64_t, Eigen::MatrixXd> powers;
    auto power = [&](std::int64_t g) -> const Eigen::MatrixXd& {
        auto it = powers.find(g);
        if (it != powers.end()) {
            return it->second;
        }
        Eigen::MatrixXd r = step;
        for (std::int64_t i = 1; i < g; ++i) {
            r = r * step;
        }
        return powers.emplace(g, std::move(r)).first->second;
    };

    std::map<std::pair<std::uint64_t, std::uint64_t>, double> states{{{0, 0}, 1.0}};
    std::vector<int> window(static_cast<std::size_t>(w));
    std::size_t next_time = 0;
    std::int64_t prev = -1;
    for (std::size_t pi = 0; pi < positions.size(); ++pi) {
        const std::int64_t pos = positions[pi];
        const bool completes = next_time < times.size() && times[next_time] + w - 1 == pos;
        const Eigen::MatrixXd* trans = pi == 0 ? nullptr : &power(pos - prev);
        std::map<std::pair<std::uint64_t, std::uint64_t>, double> next;
        for (const auto& [state, prob] : states) {
            const auto [key, buf] = state;
            const int last = static_cast<int>(buf % static_cast<std::uint64_t>(a));
            for (int b = 0; b < a; ++b) {
                const double q = trans ? (*trans)(last, b) : initial[static_cast<std::size_t>(b)];
                if (!(q > 0.0)) {
                    continue;
                }
                const std::uint64_t nbuf = (buf * static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b)) % buf_mod;
                std::uint64_t nkey = key;
                if (completes) {
                    std::uint64_t rest = nbuf;
                    for (int i = w - 1; i >= 0; --i) {
                        window[static_cast<std::size_t>(i)] = static_cast<int>(rest % static_cast<std::uint64_t>(a));
                        rest /= static_cast<std::uint64_t>(a);
                    }
                    nkey = key * range + window_atom(part, window, sys);
                }
                next[{nkey, nbuf}] += prob * q;
            }
        }
        if (completes) {
            ++next_time;
        }
        states = std::move(next);
        prev = pos;
    }
    keyed_masses out;
    for (const auto& [state, prob] : states) {
        out.emplace_back(state.first, prob);
    }
    return merge_masses(std::move(out));
}

inline keyed_masses substitution_joint(const system& sys, const partition& part, std::span<const std::int64_t> times,
                                       std::uint64_t range)
{
    const auto& sub = expect_kind<substitution_system>(sys, "joint_distribution");
    const int w = part.window();
    const auto span_len = static_cast<std::size_t>(times.back() + w);
    auto table = sub.model->table(span_len);
    const auto data = sub.model->cyclic();
    keyed_masses items;
    items.reserve(table->positions.size());
    std::vector<int> window(static_cast<std::size_t>(w));
    for (std::size_t f = 0; f < table->positions.size(); ++f) {
        std::uint64_t key = 0;
        for (auto t : times) {
            const std::size_t base = table->positions[f] + static_cast<std::size_t>(t);
            for (int i = 0; i < w; ++i) {
                window[static_cast<std::size_t>(i)] = data[base + static_cast<std::size_t>(i)];
            }
            key = key * range + window_atom(part, window, sys);
        }
        items.emplace_back(key, table->freqs[f]);
    }
    return merge_masses(std::move(items));
}

inline keyed_masses sturmian_joint(const system& sys, const partition& part, std::span<const std::int64_t> times,
                                   std::uint64_t range)
{
    const auto& st = expect_kind<sturmian_system>(sys, "joint_distribution");
    const int w = part.window();
    const auto positions = relevant_positions(times, w);
    std::vector<double> endpoints;
    for (auto s : positions) {
        endpoints.push_back(rotate(0.0, -s, st.alpha));
        endpoints.push_back(rotate(st.cut, -s, st.alpha));
    }
    keyed_masses items;
    std::vector<int> window(static_cast<std::size_t>(w));
    for (const auto& piece : arrangement(std::move(endpoints))) {
        std::uint64_t key = 0;
        for (auto t : times) {
            for (int i = 0; i < w; ++i) {
                window[static_cast<std::size_t>(i)] = sturmian_letter(st, piece.mid, t + i);
            }
            key = key * range + window_atom(part, window, sys);
        }
        items.emplace_back(key, piece.length);
    }
    return merge_masses(std::move(items));
}

inline void collect_cuts(const partition& part, std::vector<double>& out)
{
    if (auto iv = part.as<interval_partition>()) {
        out.insert(out.end(), iv->cuts.begin(), iv->cuts.end());
    } else if (auto p = part.as<product_partition>()) {
        for (const auto& c : p->parts) {
            collect_cuts(c, out);
        }
    } else if (auto j = part.as<join_partition>()) {
        collect_cuts(*j->a, out);
        collect_cuts(*j->b, out);
    }
}

inline keyed_masses rotation_joint(const system& sys, const partition& part, std::span<const std::int64_t> times,
                                   std::uint64_t range)
{
    const auto& rot = expect_kind<rotation_system>(sys, "joint_distribution");
    std::vector<double> cuts;
    collect_cuts(part, cuts);
    std::vector<double> endpoints;
    for (auto t : times) {
        for (double c : cuts) {
            endpoints.push_back(rotate(c, -t, rot.alpha));
        }
    }
    keyed_masses items;
    for (const auto& piece : arrangement(std::move(endpoints))) {
        std::uint64_t key = 0;
        for (auto t : times) {
            key = key * range + state_atom(part, rotate(piece.mid, t, rot.alpha), 0, sys);
        }
        items.emplace_back(key, piece.length);
    }
    return merge_masses(std::move(items));
}

inline keyed_masses extension_joint(const system& sys, const partition& part, std::span<const std::int64_t> times,
                                    std::uint64_t range)
{
    const auto& ext = expect_kind<finite_extension_system>(sys, "joint_distribution");
    std::vector<double> cuts;
    collect_cuts(part, cuts);
    std::vector<double> endpoints;
    for (auto t : times) {
        for (double c : cuts) {
            endpoints.push_back(rotate(c, -t, ext.alpha));
        }
    }
    // cocycle sums S_t(z) for t <= t_k change only where z + s alpha crosses a step
    for (std::int64_t s = 0; s < times.back(); ++s) {
        for (double c : ext.cocycle_cuts) {
            endpoints.push_back(rotate(c, -s, ext.alpha));
        }
    }
    keyed_masses items;
    std::vector<int> sums(times.size());
    for (const auto& piece : arrangement(std::move(endpoints))) {
        int acc = 0;
        std::size_t i = 0;
        for (std::int64_t s = 0; s <= times.back(); ++s) {
            if (s == times[i]) {
                sums[i++] = acc;
            }
            if (i == times.size()) {
                break;
            }
            acc = (acc + cocycle_value(ext, rotate(piece.mid, s, ext.alpha))) % ext.fiber;
        }
        const double mass = piece.length / ext.fiber;
        for (int j0 = 0; j0 < ext.fiber; ++j0) {
            std::uint64_t key = 0;
            for (std::size_t t = 0; t < times.size(); ++t) {
                const int fiber = (j0 + sums[t]) % ext.fiber;
                key = key * range + state_atom(part, rotate(piece.mid, times[t], ext.alpha), fiber, sys);
            }
            items.emplace_back(key, mass);
        }
    }
    return merge_masses(std::move(items));
}

inline std::vector<std::uint64_t> decode_key(std::uint64_t key, std::uint64_t range, std::size_t k)
{
    std::vector<std::uint64_t> out(k);
    for (std::size_t i = k; i-- > 0;) {
        out[i] = key % range;
        key /= range;
    }
    return out;
}

/// Joint masses keyed by the mixed-radix tuple code, times shifted to start at 0.
inline keyed_masses joint_masses(const system& sys, const partition& part, std::span<const std::int64_t> raw_times)
{
    std::vector<std::int64_t> times(raw_times.begin(), raw_times.end());
    for (auto& t : times) {
        t -= raw_times.front();
    }
    const std::uint64_t range = part.code_range(sys);
    partition::checked_power(range, static_cast<int>(times.size()));
    const auto span_len = static_cast<std::size_t>(times.back()) + static_cast<std::size_t>(part.window());
    if (span_len > sys.span_limit() && !sys.as<rotation_system>() && !sys.as<product_system>()) {
        throw span_error("pattern span " + std::to_string(span_len) + " exceeds the span limit " +
                         std::to_string(sys.span_limit()));
    }
    if (sys.as<bernoulli_system>() || sys.as<markov_system>()) {
        return chain_joint(sys, part, times, range);
    }
    if (sys.as<substitution_system>()) {
        return substitution_joint(sys, part, times, range);
    }
    if (sys.as<sturmian_system>()) {
        return sturmian_joint(sys, part, times, range);
    }
    if (sys.as<rotation_system>()) {
        return rotation_joint(sys, part, times, range);
    }
    if (sys.as<finite_extension_system>()) {
        return extension_joint(sys, part, times, range);
    }
    // product measure: component joints are independent
    const auto& prod = expect_kind<product_system>(sys, "joint_distribution");
    const auto& pp = std::get<product_partition>(part.kind());
    const std::size_t k = times.size();
    std::vector<std::vector<std::uint64_t>> acc_tuples{std::vector<std::uint64_t>(k, 0)};
    std::vector<double> acc_mass{1.0};
    for (std::size_t c = 0; c < prod.parts.size(); ++c) {
        const std::uint64_t cr = pp.parts[c].code_range(prod.parts[c]);
        const auto comp = joint_masses(prod.parts[c], pp.parts[c], times);
        std::vector<std::vector<std::uint64_t>> tuples;
        std::vector<double> masses;
        for (std::size_t i = 0; i < acc_tuples.size(); ++i) {
            for (const auto& [key, mass] : comp) {
                auto digits = decode_key(key, cr, k);
                auto t = acc_tuples[i];
                for (std::size_t j = 0; j < k; ++j) {
                    t[j] = t[j] * cr + digits[j];
                }
                tuples.push_back(std::move(t));
                masses.push_back(acc_mass[i] * mass);
            }
        }
        acc_tuples = std::move(tuples);
        acc_mass = std::move(masses);
    }
    keyed_masses items;
    for (std::size_t i = 0; i < acc_tuples.size(); ++i) {
        std::uint64_t key = 0;
        for (auto d : acc_tuples[i]) {
            key = key * range + d;
        }
        items.emplace_back(key, acc_mass[i]);
    }
    return merge_masses(std::move(items));
}

/// Entropy of the join along `times`; the pattern search hot path.
inline double join_entropy(const system& sys, const partition& part, std::span<const std::int64_t> times)
{
    const auto masses = joint_masses(sys, part, times);
    double h = 0.0;
    for (const auto& km : masses) {
        h -= km.second * std::log(km.second);
    }
    return h;
}

} // namespace detail

/**
 * Exact law of the atom tuple along a time pattern. Symbolic kinds
 * aggregate cylinder measures over the pattern span (bounded by the
 * system's span limit); rotation kinds measure arcs cut by rotated
 * endpoints.
 */
inline joint_distribution_t joint_distribution(const system& sys, const partition& part, const time_pattern& pattern)
{
    detail::check_compatible(sys, part);
    const auto masses = detail::joint_masses(sys, part, pattern.times());
    const std::uint64_t range = part.code_range(sys);
    std::vector<double> probs;
    std::vector<std::vector<int>> labels;
    double total = 0.0;
    for (const auto& [key, mass] : masses) {
        total += mass;
    }
    for (const auto& [key, mass] : masses) {
        auto digits = detail::decode_key(key, range, pattern.size());
        labels.emplace_back(digits.begin(), digits.end());
        // renormalize away the rounding of arc lengths / counted frequencies
        probs.push_back(mass / total);
    }
    return {pattern, prob_vector<std::vector<int>>(std::move(probs), std::move(labels))};
}

/// H(part) under the system's invariant measure.
inline double partition_entropy(const system& sys, const partition& part)
{
    detail::check_compatible(sys, part);
    const std::int64_t zero = 0;
    return detail::join_entropy(sys, part, std::span(&zero, 1));
}

/// Atom codes with positive measure, with their masses.
inline std::vector<std::pair<std::uint64_t, double>> atom_masses(const system& sys, const partition& part)
{
    detail::check_compatible(sys, part);
    const std::int64_t zero = 0;
    return detail::joint_masses(sys, part, std::span(&zero, 1));
}

inline std::size_t atom_count(const system& sys, const partition& part)
{
    return atom_masses(sys, part).size();
}

/**
 * Common refinement a v b. Interval partitions merge their cuts, product
 * partitions refine componentwise, anything else becomes a join.
 */
inline partition refine(const system& sys, const partition& a, const partition& b)
{
    detail::check_compatible(sys, a);
    detail::check_compatible(sys, b);
    const auto* ia = a.as<interval_partition>();
    const auto* ib = b.as<interval_partition>();
    if (ia && ib) {
        std::vector<double> endpoints = ia->cuts;
        endpoints.insert(endpoints.end(), ib->cuts.begin(), ib->cuts.end());
        const std::uint64_t rb = b.code_range(sys);
        std::vector<double> cuts;
        std::vector<int> atoms;
        for (const auto& piece : detail::arrangement(std::move(endpoints))) {
            const auto code = ia->atoms[detail::arc_index(ia->cuts, piece.mid)] * rb +
                              static_cast<std::uint64_t>(ib->atoms[detail::arc_index(ib->cuts, piece.mid)]);
            cuts.push_back(piece.start);
            atoms.push_back(static_cast<int>(code));
        }
        // arrangement starts at the smallest endpoint, so cuts are sorted
        return partition::from_cuts(std::move(cuts), std::move(atoms));
    }
    const auto* pa = a.as<product_partition>();
    const auto* pb = b.as<product_partition>();
    if (pa && pb && sys.as<product_system>()) {
        std::vector<partition> parts;
        for (std::size_t i = 0; i < pa->parts.size(); ++i) {
            parts.push_back(refine(partition::component(sys, i), pa->parts[i], pb->parts[i]));
        }
        return partition::product(std::move(parts));
    }
    if (sys.as<product_system>()) {
        throw kind_error("product systems refine componentwise product partitions only");
    }
    return partition::join(a, b);
}

/// Atom index of T^k x for k in [0, n).
inline std::vector<std::uint64_t> orbit_atom_sequence(const system& sys, const partition& part, const point& x,
                                                      std::size_t n)
{
    detail::check_compatible(sys, part);
    std::vector<std::uint64_t> out(n);
    if (sys.symbolic()) {
        const auto w = static_cast<std::size_t>(part.window());
        point y = x;
        extend(sys, y, n + w - 1);
        const auto syms = symbols(sys, y, n + w - 1);
        for (std::size_t k = 0; k < n; ++k) {
            out[k] = detail::window_atom(part, std::span(syms).subspan(k, w), sys);
        }
        return out;
    }
    if (auto r = sys.as<rotation_system>()) {
        const double x0 = std::get<circle_point>(x.value).x;
        for (std::size_t k = 0; k < n; ++k) {
            out[k] = detail::state_atom(part, detail::rotate(x0, static_cast<std::int64_t>(k), r->alpha), 0, sys);
        }
        return out;
    }
    if (auto f = sys.as<finite_extension_system>()) {
        const auto& p = std::get<extension_point>(x.value);
        int fiber = p.fiber;
        for (std::size_t k = 0; k < n; ++k) {
            const double z = detail::rotate(p.x, static_cast<std::int64_t>(k), f->alpha);
            out[k] = detail::state_atom(part, z, fiber, sys);
            fiber = (fiber + detail::cocycle_value(*f, z)) % f->fiber;
        }
        return out;
    }
    const auto& prod = detail::expect_kind<product_system>(sys, "orbit_atom_sequence");
    const auto& pp = std::get<product_partition>(part.kind());
    const auto& px = std::get<product_point>(x.value);
    std::fill(out.begin(), out.end(), 0);
    for (std::size_t c = 0; c < prod.parts.size(); ++c) {
        const auto comp = orbit_atom_sequence(prod.parts[c], pp.parts[c], px.parts[c], n);
        const std::uint64_t cr = pp.parts[c].code_range(prod.parts[c]);
        for (std::size_t k = 0; k < n; ++k) {
            out[k] = out[k] * cr + comp[k];
        }
    }
    return out;
}

} // namespace mpsens

#endif // MPSENS_PARTITIONS_HPP
