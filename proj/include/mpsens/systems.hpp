#ifndef MPSENS_SYSTEMS_HPP
#define MPSENS_SYSTEMS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "detail/circle.hpp"
#include "detail/substitution.hpp"
#include "error.hpp"
#include "num_core.hpp"
#include "random.hpp"

namespace mpsens {

/// Default cap on word / pattern spans served by exact symbolic oracles.
inline constexpr std::size_t default_span_limit = 4096;

/// Rational approximations p/q with q up to this bound must stay away from alpha.
inline constexpr int irrationality_max_denominator = 1000;
inline constexpr double irrationality_tolerance = 1e-12;

struct bernoulli_system
{
    std::vector<double> probs;
};

struct markov_system
{
    std::vector<std::vector<double>> matrix; ///< row-stochastic
    std::vector<double> stationary;
};

struct substitution_system
{
    std::vector<std::vector<std::uint8_t>> rules;
    std::shared_ptr<const substitution_model> model;
};

/// Coding of x -> x + alpha by the arcs [0, cut) -> 0 and [cut, 1) -> 1.
struct sturmian_system
{
    double alpha;
    double cut;
};

struct rotation_system
{
    double alpha;
};

/// Cocycle value on the arc starting at `from` (up to the next step).
struct cocycle_step
{
    double from;
    int value;
};

/// Skew product (z, j) -> (z + alpha, j + cocycle(z) mod fiber).
struct finite_extension_system
{
    double alpha;
    int fiber;
    std::vector<cocycle_step> cocycle; ///< sorted by `from`
    std::vector<double> cocycle_cuts;
};

class system;

struct product_system
{
    std::vector<system> parts;
};

namespace detail {

inline void check_irrational(double alpha, const char* what)
{
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw validation_error(std::string(what) + " must lie in (0, 1)");
    }
    // convergents are the best rational approximations, so scanning them
    // up to the denominator bound covers every p/q with small q
    long double x = alpha;
    long double p_prev = 1, p = 0; // convergents p_{-1}, p_0 for a_0 = 0
    long double q_prev = 0, q = 1;
    std::vector<long long> terms{0};
    x = 1.0L / x;
    for (int iter = 0; iter < 64; ++iter) {
        const long double a = std::floor(x);
        const long double p_next = a * p + p_prev;
        const long double q_next = a * q + q_prev;
        if (q_next > irrationality_max_denominator) {
            return;
        }
        terms.push_back(static_cast<long long>(a));
        p_prev = p;
        q_prev = q;
        p = p_next;
        q = q_next;
        if (std::abs(static_cast<long double>(alpha) - p / q) < irrationality_tolerance) {
            std::ostringstream msg;
            msg << what << " = " << alpha << " is within " << irrationality_tolerance << " of " << static_cast<long long>(p)
                << "/" << static_cast<long long>(q) << " (continued fraction [";
            for (std::size_t i = 0; i < terms.size(); ++i) {
                msg << (i == 0 ? "" : i == 1 ? "; " : ", ") << terms[i];
            }
            msg << "]); rotation codings need an irrational rotation number";
            throw validation_error(msg.str());
        }
        const long double rest = x - a;
        if (rest <= 0.0L) {
            return;
        }
        x = 1.0L / rest;
    }
}

inline bool all_reachable(const std::vector<std::vector<bool>>& adj)
{
    const std::size_t n = adj.size();
    for (std::size_t s = 0; s < n; ++s) {
        std::vector<bool> seen(n, false);
        std::queue<std::size_t> todo;
        todo.push(s);
        seen[s] = true;
        std::size_t count = 1;
        while (!todo.empty()) {
            auto u = todo.front();
            todo.pop();
            for (std::size_t v = 0; v < n; ++v) {
                if (adj[u][v] && !seen[v]) {
                    seen[v] = true;
                    ++count;
                    todo.push(v);
                }
            }
        }
        if (count != n) {
            return false;
        }
    }
    return true;
}

inline std::vector<double> stationary_vector(const std::vector<std::vector<double>>& p)
{
    const auto n = static_cast<Eigen::Index>(p.size());
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            a(j, i) = p[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - (i == j ? 1.0 : 0.0);
        }
    }
    a.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    Eigen::VectorXd pi = a.fullPivLu().solve(b);
    return {pi.data(), pi.data() + n};
}

} // namespace detail

/**
 * A measure-preserving system exposed through its oracles.
 *
 * Symbolic kinds (Bernoulli, Markov, substitution, Sturmian coding) serve
 * word frequencies; every kind samples points and has an orbit metric.
 * Values are immutable; the substitution frequency cache is shared and
 * built once on first use.
 */
class system
{
public:
    using kind_type = std::variant<bernoulli_system, markov_system, substitution_system, sturmian_system,
                                   rotation_system, finite_extension_system, product_system>;

    static system bernoulli(std::vector<double> probs)
    {
        detail::check_probabilities(probs);
        if (probs.size() < 2 || probs.size() > 256) {
            throw validation_error("Bernoulli alphabet must have 2..256 letters");
        }
        return system(bernoulli_system{std::move(probs)});
    }

    static system markov(std::vector<std::vector<double>> matrix, std::optional<std::vector<double>> stationary = {})
    {
        const std::size_t n = matrix.size();
        if (n < 2 || n > 256) {
            throw validation_error("Markov alphabet must have 2..256 states");
        }
        std::vector<std::vector<bool>> adj(n, std::vector<bool>(n));
        for (std::size_t i = 0; i < n; ++i) {
            if (matrix[i].size() != n) {
                throw validation_error("Markov transition matrix is not square");
            }
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (!(matrix[i][j] >= 0.0)) {
                    throw validation_error("Markov transition probabilities must be non-negative");
                }
                sum += matrix[i][j];
                adj[i][j] = matrix[i][j] > 0.0;
            }
            if (std::abs(sum - 1.0) > 1e-12) {
                throw validation_error("Markov row " + std::to_string(i) + " sums to " + std::to_string(sum));
            }
        }
        if (!detail::all_reachable(adj)) {
            throw validation_error("Markov chain is not irreducible");
        }
        std::vector<double> pi = stationary ? *stationary : detail::stationary_vector(matrix);
        if (pi.size() != n) {
            throw validation_error("stationary vector has the wrong length");
        }
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                s += pi[i] * matrix[i][j];
            }
            if (std::abs(s - pi[j]) > 1e-10) {
                throw validation_error("stationary vector is not invariant under the transition matrix");
            }
            if (!(pi[j] > 0.0)) {
                throw validation_error("stationary vector must be strictly positive");
            }
        }
        detail::check_probabilities(pi);
        return system(markov_system{std::move(matrix), std::move(pi)});
    }

    static system substitution(std::vector<std::vector<std::uint8_t>> rules, substitution_options opts = {})
    {
        const std::size_t n = rules.size();
        if (n < 2 || n > 256) {
            throw validation_error("substitution alphabet must have 2..256 letters");
        }
        std::vector<std::vector<bool>> m(n, std::vector<bool>(n, false));
        for (std::size_t a = 0; a < n; ++a) {
            if (rules[a].empty()) {
                throw validation_error("substitution rule for letter " + std::to_string(a) + " is empty");
            }
            for (auto b : rules[a]) {
                if (b >= n) {
                    throw validation_error("substitution rule uses a letter outside the alphabet");
                }
                m[a][b] = true;
            }
        }
        // primitive iff some power <= (n-1)^2 + 1 is strictly positive
        auto power = m;
        bool primitive = false;
        for (std::size_t e = 1; e <= (n - 1) * (n - 1) + 1; ++e) {
            bool positive = true;
            for (const auto& row : power) {
                positive = positive && std::all_of(row.begin(), row.end(), [](bool x) { return x; });
            }
            if (positive) {
                primitive = true;
                break;
            }
            std::vector<std::vector<bool>> next(n, std::vector<bool>(n, false));
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t k = 0; k < n; ++k) {
                    if (power[i][k]) {
                        for (std::size_t j = 0; j < n; ++j) {
                            next[i][j] = next[i][j] || m[k][j];
                        }
                    }
                }
            }
            power = std::move(next);
        }
        if (!primitive) {
            throw validation_error("substitution matrix is not primitive");
        }
        auto model = std::make_shared<const substitution_model>(rules, opts);
        return system(substitution_system{std::move(rules), std::move(model)});
    }

    static system sturmian(double alpha, double cut)
    {
        detail::check_irrational(alpha, "rotation number");
        if (!(cut > 0.0 && cut < 1.0)) {
            throw validation_error("Sturmian cut point must lie in (0, 1)");
        }
        return system(sturmian_system{alpha, cut});
    }

    static system rotation(double alpha)
    {
        detail::check_irrational(alpha, "rotation number");
        return system(rotation_system{alpha});
    }

    static system finite_extension(double alpha, int fiber, std::vector<cocycle_step> cocycle)
    {
        detail::check_irrational(alpha, "rotation number");
        if (fiber < 2 || fiber > 256) {
            throw validation_error("fiber size must be 2..256");
        }
        if (cocycle.empty()) {
            throw validation_error("cocycle needs at least one step");
        }
        std::sort(cocycle.begin(), cocycle.end(), [](const auto& a, const auto& b) { return a.from < b.from; });
        std::vector<double> cuts;
        for (std::size_t i = 0; i < cocycle.size(); ++i) {
            if (!(cocycle[i].from >= 0.0 && cocycle[i].from < 1.0)) {
                throw validation_error("cocycle step must start in [0, 1)");
            }
            if (i > 0 && cocycle[i].from <= cocycle[i - 1].from) {
                throw validation_error("cocycle steps must start at distinct points");
            }
            cocycle[i].value = ((cocycle[i].value % fiber) + fiber) % fiber;
            cuts.push_back(cocycle[i].from);
        }
        return system(finite_extension_system{alpha, fiber, std::move(cocycle), std::move(cuts)});
    }

    static system product(std::vector<system> parts)
    {
        if (parts.size() < 2) {
            throw validation_error("product needs at least two components");
        }
        return system(product_system{std::move(parts)});
    }

    const kind_type& kind() const { return kind_; }

    template <typename K>
    const K* as() const
    {
        return std::get_if<K>(&kind_);
    }

    /// True for kinds whose points are symbol sequences over alphabet_size().
    bool symbolic() const
    {
        return std::holds_alternative<bernoulli_system>(kind_) || std::holds_alternative<markov_system>(kind_) ||
               std::holds_alternative<substitution_system>(kind_) || std::holds_alternative<sturmian_system>(kind_);
    }

    int alphabet_size() const
    {
        if (auto b = as<bernoulli_system>()) {
            return static_cast<int>(b->probs.size());
        }
        if (auto m = as<markov_system>()) {
            return static_cast<int>(m->matrix.size());
        }
        if (auto s = as<substitution_system>()) {
            return static_cast<int>(s->rules.size());
        }
        if (as<sturmian_system>()) {
            return 2;
        }
        throw kind_error(name() + " is not a symbolic system");
    }

    std::string name() const
    {
        return std::visit(
            [](const auto& k) -> std::string {
                using K = std::decay_t<decltype(k)>;
                if constexpr (std::is_same_v<K, bernoulli_system>) {
                    return "bernoulli";
                } else if constexpr (std::is_same_v<K, markov_system>) {
                    return "markov";
                } else if constexpr (std::is_same_v<K, substitution_system>) {
                    return "substitution";
                } else if constexpr (std::is_same_v<K, sturmian_system>) {
                    return "sturmian";
                } else if constexpr (std::is_same_v<K, rotation_system>) {
                    return "rotation";
                } else if constexpr (std::is_same_v<K, finite_extension_system>) {
                    return "finite_extension";
                } else {
                    return "product";
                }
            },
            kind_);
    }

    /// Mixed into every sampling stream of this system.
    std::uint64_t seed() const { return seed_; }
    system with_seed(std::uint64_t s) const
    {
        system out = *this;
        out.seed_ = s;
        return out;
    }

    std::size_t span_limit() const { return span_limit_; }
    system with_span_limit(std::size_t limit) const
    {
        system out = *this;
        out.span_limit_ = limit;
        return out;
    }

private:
    explicit system(kind_type k) : kind_(std::move(k)) {}

    kind_type kind_;
    std::uint64_t seed_ = 0;
    std::size_t span_limit_ = default_span_limit;
};

//------------------------------------------------------------------------------
// points
//------------------------------------------------------------------------------

struct point;

/// Bernoulli / Markov coordinates; extendable while `source` is set.
struct sequence_point
{
    std::vector<std::uint8_t> symbols;
    std::optional<engine> source;
};

/// Substitution point: a window into a fixed-point prefix.
struct offset_point
{
    std::shared_ptr<const std::vector<std::uint8_t>> word;
    std::size_t offset = 0;
};

/// Rotation or Sturmian point.
struct circle_point
{
    double x = 0.0;
};

struct extension_point
{
    double x = 0.0;
    int fiber = 0;
};

struct product_point
{
    std::vector<point> parts;
};

struct point
{
    std::variant<sequence_point, offset_point, circle_point, extension_point, product_point> value;
};

namespace detail {

template <typename K>
const K& expect_kind(const system& sys, const char* op)
{
    if (auto k = sys.as<K>()) {
        return *k;
    }
    throw kind_error(std::string(op) + " does not apply to " + sys.name() + " systems");
}

inline int sturmian_letter(const sturmian_system& s, double x, std::int64_t k)
{
    return rotate(x, k, s.alpha) < s.cut ? 0 : 1;
}

inline int cocycle_value(const finite_extension_system& f, double z)
{
    return f.cocycle[arc_index(f.cocycle_cuts, z)].value;
}

inline void extend_sequence(const system& sys, sequence_point& p, std::size_t count)
{
    if (p.symbols.size() >= count) {
        return;
    }
    if (!p.source) {
        throw horizon_error("point holds " + std::to_string(p.symbols.size()) + " coordinates and cannot be extended to " +
                            std::to_string(count));
    }
    p.symbols.reserve(count);
    if (auto b = sys.as<bernoulli_system>()) {
        while (p.symbols.size() < count) {
            p.symbols.push_back(static_cast<std::uint8_t>(categorical(*p.source, b->probs)));
        }
    } else {
        const auto& m = expect_kind<markov_system>(sys, "sequence extension");
        while (p.symbols.size() < count) {
            const auto& row = p.symbols.empty() ? m.stationary : m.matrix[p.symbols.back()];
            p.symbols.push_back(static_cast<std::uint8_t>(categorical(*p.source, row)));
        }
    }
}

} // namespace detail

/// Makes sure `x` carries at least `count` coordinates (symbolic kinds).
inline void extend(const system& sys, point& x, std::size_t count)
{
    if (auto s = std::get_if<sequence_point>(&x.value)) {
        detail::extend_sequence(sys, *s, count);
    } else if (auto o = std::get_if<offset_point>(&x.value)) {
        if (o->offset + count > o->word->size()) {
            const auto& sub = detail::expect_kind<substitution_system>(sys, "extend");
            o->word = sub.model->prefix(o->offset + count);
        }
    } else if (auto p = std::get_if<product_point>(&x.value)) {
        const auto& prod = detail::expect_kind<product_system>(sys, "extend");
        for (std::size_t i = 0; i < p->parts.size(); ++i) {
            extend(prod.parts[i], p->parts[i], count);
        }
    }
}

/// Coordinate k of a symbolic point; `x` must already be extended past k.
inline int symbol_at(const system& sys, const point& x, std::size_t k)
{
    if (auto s = std::get_if<sequence_point>(&x.value)) {
        return s->symbols.at(k);
    }
    if (auto o = std::get_if<offset_point>(&x.value)) {
        return o->word->at(o->offset + k);
    }
    if (auto c = std::get_if<circle_point>(&x.value)) {
        return detail::sturmian_letter(detail::expect_kind<sturmian_system>(sys, "symbol_at"), c->x,
                                       static_cast<std::int64_t>(k));
    }
    throw kind_error("symbol_at needs a symbolic point");
}

/// The first `count` coordinates of a symbolic point.
inline std::vector<int> symbols(const system& sys, const point& x, std::size_t count)
{
    if (!sys.symbolic()) {
        throw kind_error("symbols() does not apply to " + sys.name() + " systems");
    }
    point y = x;
    extend(sys, y, count);
    std::vector<int> out(count);
    for (std::size_t k = 0; k < count; ++k) {
        out[k] = symbol_at(sys, y, k);
    }
    return out;
}

/// A fixed, non-extendable symbolic point (Bernoulli / Markov alphabets).
inline point point_from_symbols(const system& sys, std::span<const int> syms)
{
    if (!sys.as<bernoulli_system>() && !sys.as<markov_system>()) {
        throw kind_error("explicit symbol points are supported for Bernoulli and Markov systems");
    }
    sequence_point p;
    for (int s : syms) {
        if (s < 0 || s >= sys.alphabet_size()) {
            throw validation_error("symbol outside the alphabet");
        }
        p.symbols.push_back(static_cast<std::uint8_t>(s));
    }
    return {p};
}

/**
 * Draws a point from the system's invariant measure. Deterministic in
 * (system, seed); symbolic points carry `horizon` coordinates and extend
 * lazily from the same stream.
 */
inline point sample_point(const system& sys, std::uint64_t seed, std::size_t horizon)
{
    if (horizon < 1) {
        throw validation_error("sample horizon must be at least 1");
    }
    engine e = make_engine(sys.seed(), seed);
    return std::visit(
        [&](const auto& k) -> point {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, bernoulli_system> || std::is_same_v<K, markov_system>) {
                sequence_point p;
                p.source = e;
                detail::extend_sequence(sys, p, horizon);
                return {p};
            } else if constexpr (std::is_same_v<K, substitution_system>) {
                auto word = k.model->prefix(65 * horizon);
                const std::size_t off = uniform_index(e, word->size() - horizon + 1);
                return {offset_point{std::move(word), off}};
            } else if constexpr (std::is_same_v<K, sturmian_system> || std::is_same_v<K, rotation_system>) {
                return {circle_point{uniform01(e)}};
            } else if constexpr (std::is_same_v<K, finite_extension_system>) {
                const double x = uniform01(e);
                return {extension_point{x, static_cast<int>(uniform_index(e, static_cast<std::uint64_t>(k.fiber)))}};
            } else {
                product_point p;
                for (std::size_t i = 0; i < k.parts.size(); ++i) {
                    p.parts.push_back(sample_point(k.parts[i], derive_seed(seed, i), horizon));
                }
                return {p};
            }
        },
        sys.kind());
}

/// T^t x.
inline point shift(const system& sys, const point& x, std::int64_t t)
{
    if (t < 0) {
        throw validation_error("shift time must be non-negative");
    }
    const auto ut = static_cast<std::size_t>(t);
    if (auto s = std::get_if<sequence_point>(&x.value)) {
        sequence_point out = *s;
        detail::extend_sequence(sys, out, ut + 1);
        out.symbols.erase(out.symbols.begin(), out.symbols.begin() + t);
        return {out};
    }
    if (auto o = std::get_if<offset_point>(&x.value)) {
        point out{offset_point{o->word, o->offset + ut}};
        extend(sys, out, 1);
        return out;
    }
    if (auto c = std::get_if<circle_point>(&x.value)) {
        const double alpha = sys.as<rotation_system>() ? sys.as<rotation_system>()->alpha
                                                       : detail::expect_kind<sturmian_system>(sys, "shift").alpha;
        return {circle_point{detail::rotate(c->x, t, alpha)}};
    }
    if (auto f = std::get_if<extension_point>(&x.value)) {
        const auto& ext = detail::expect_kind<finite_extension_system>(sys, "shift");
        int fiber = f->fiber;
        for (std::int64_t s = 0; s < t; ++s) {
            fiber = (fiber + detail::cocycle_value(ext, detail::rotate(f->x, s, ext.alpha))) % ext.fiber;
        }
        return {extension_point{detail::rotate(f->x, t, ext.alpha), fiber}};
    }
    const auto& prod = detail::expect_kind<product_system>(sys, "shift");
    const auto& pp = std::get<product_point>(x.value);
    product_point out;
    for (std::size_t i = 0; i < pp.parts.size(); ++i) {
        out.parts.push_back(shift(prod.parts[i], pp.parts[i], t));
    }
    return {out};
}

/// Exact equality of the first `horizon` coordinates (symbolic) or of the
/// underlying reals.
inline bool same_point(const system& sys, const point& x, const point& y, std::size_t horizon = 64)
{
    if (auto px = std::get_if<product_point>(&x.value)) {
        const auto& prod = detail::expect_kind<product_system>(sys, "same_point");
        const auto& py = std::get<product_point>(y.value);
        for (std::size_t i = 0; i < px->parts.size(); ++i) {
            if (!same_point(prod.parts[i], px->parts[i], py.parts[i], horizon)) {
                return false;
            }
        }
        return true;
    }
    if (sys.as<rotation_system>() || sys.as<sturmian_system>()) {
        return std::get<circle_point>(x.value).x == std::get<circle_point>(y.value).x;
    }
    if (sys.as<finite_extension_system>()) {
        const auto& a = std::get<extension_point>(x.value);
        const auto& b = std::get<extension_point>(y.value);
        return a.x == b.x && a.fiber == b.fiber;
    }
    return symbols(sys, x, horizon) == symbols(sys, y, horizon);
}

struct metric_result
{
    double value = 0.0;
    bool below_horizon = false; ///< coordinates agreed over the whole horizon
};

/**
 * Orbit metric: 2^-j at the first differing coordinate j for symbolic
 * kinds, arc distance for rotations, arc distance within a fiber and 1
 * across fibers for finite extensions, max over product components.
 */
inline metric_result metric_distance(const system& sys, const point& x, const point& y, std::size_t horizon = 64)
{
    if (x.value.index() != y.value.index()) {
        throw kind_error("metric_distance between points of different kinds");
    }
    if (auto px = std::get_if<product_point>(&x.value)) {
        const auto& prod = detail::expect_kind<product_system>(sys, "metric_distance");
        const auto& py = std::get<product_point>(y.value);
        metric_result out;
        for (std::size_t i = 0; i < px->parts.size(); ++i) {
            auto r = metric_distance(prod.parts[i], px->parts[i], py.parts[i], horizon);
            if (r.value > out.value) {
                out = r;
            }
        }
        return out;
    }
    if (sys.as<rotation_system>()) {
        return {detail::arc_distance(std::get<circle_point>(x.value).x, std::get<circle_point>(y.value).x), false};
    }
    if (sys.as<finite_extension_system>()) {
        const auto& a = std::get<extension_point>(x.value);
        const auto& b = std::get<extension_point>(y.value);
        return {a.fiber == b.fiber ? detail::arc_distance(a.x, b.x) : 1.0, false};
    }
    if (!sys.symbolic()) {
        throw kind_error("metric_distance does not apply to " + sys.name() + " systems");
    }
    const auto sx = symbols(sys, x, horizon);
    const auto sy = symbols(sys, y, horizon);
    for (std::size_t j = 0; j < horizon; ++j) {
        if (sx[j] != sy[j]) {
            return {std::ldexp(1.0, -static_cast<int>(j)), false};
        }
    }
    return {std::ldexp(1.0, -static_cast<int>(horizon)), true};
}

/// d(T^k x, T^k y) for k in [0, n).
inline std::vector<double> distance_sequence(const system& sys, const point& x, const point& y, std::size_t n,
                                             std::size_t horizon = 64)
{
    std::vector<double> out(n);
    if (auto px = std::get_if<product_point>(&x.value)) {
        const auto& prod = detail::expect_kind<product_system>(sys, "distance_sequence");
        const auto& py = std::get<product_point>(y.value);
        std::fill(out.begin(), out.end(), 0.0);
        for (std::size_t i = 0; i < px->parts.size(); ++i) {
            auto d = distance_sequence(prod.parts[i], px->parts[i], py.parts[i], n, horizon);
            for (std::size_t k = 0; k < n; ++k) {
                out[k] = std::max(out[k], d[k]);
            }
        }
        return out;
    }
    if (auto r = sys.as<rotation_system>()) {
        const double a = std::get<circle_point>(x.value).x;
        const double b = std::get<circle_point>(y.value).x;
        for (std::size_t k = 0; k < n; ++k) {
            const auto t = static_cast<std::int64_t>(k);
            out[k] = detail::arc_distance(detail::rotate(a, t, r->alpha), detail::rotate(b, t, r->alpha));
        }
        return out;
    }
    if (auto f = sys.as<finite_extension_system>()) {
        auto a = std::get<extension_point>(x.value);
        auto b = std::get<extension_point>(y.value);
        int fa = a.fiber;
        int fb = b.fiber;
        for (std::size_t k = 0; k < n; ++k) {
            const auto t = static_cast<std::int64_t>(k);
            const double za = detail::rotate(a.x, t, f->alpha);
            const double zb = detail::rotate(b.x, t, f->alpha);
            out[k] = fa == fb ? detail::arc_distance(za, zb) : 1.0;
            fa = (fa + detail::cocycle_value(*f, za)) % f->fiber;
            fb = (fb + detail::cocycle_value(*f, zb)) % f->fiber;
        }
        return out;
    }
    const auto sx = symbols(sys, x, n + horizon);
    const auto sy = symbols(sys, y, n + horizon);
    // next[k] = first j >= k with a difference, capped at n + horizon
    std::vector<std::size_t> next(n + horizon + 1, n + horizon);
    for (std::size_t k = n + horizon; k-- > 0;) {
        next[k] = sx[k] != sy[k] ? k : next[k + 1];
    }
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t j = std::min(next[k] - k, horizon);
        out[k] = std::ldexp(1.0, -static_cast<int>(j));
    }
    return out;
}

//------------------------------------------------------------------------------
// word frequencies
//------------------------------------------------------------------------------

namespace detail {

/// Arc arrangement cut by the coding cells of positions [0, length).
inline std::vector<arc_piece> sturmian_cells(const sturmian_system& s, std::size_t length)
{
    std::vector<double> endpoints;
    endpoints.reserve(2 * length);
    for (std::size_t i = 0; i < length; ++i) {
        const auto t = -static_cast<std::int64_t>(i);
        endpoints.push_back(rotate(0.0, t, s.alpha));
        endpoints.push_back(rotate(s.cut, t, s.alpha));
    }
    return arrangement(std::move(endpoints));
}

} // namespace detail

/**
 * Measure of the cylinder [w] at position 0. Exact for Bernoulli, Markov
 * and Sturmian codings; a stabilized counting estimate for substitutions.
 */
inline double word_frequency(const system& sys, std::span<const int> w)
{
    if (!sys.symbolic()) {
        throw kind_error("word_frequency does not apply to " + sys.name() + " systems");
    }
    if (w.size() > sys.span_limit()) {
        throw span_error("word of length " + std::to_string(w.size()) + " exceeds the span limit " +
                         std::to_string(sys.span_limit()));
    }
    const int a = sys.alphabet_size();
    for (int c : w) {
        if (c < 0 || c >= a) {
            throw validation_error("word letter outside the alphabet");
        }
    }
    if (w.empty()) {
        return 1.0;
    }
    if (auto b = sys.as<bernoulli_system>()) {
        double p = 1.0;
        for (int c : w) {
            p *= b->probs[static_cast<std::size_t>(c)];
        }
        return p;
    }
    if (auto m = sys.as<markov_system>()) {
        double p = m->stationary[static_cast<std::size_t>(w[0])];
        for (std::size_t i = 1; i < w.size(); ++i) {
            p *= m->matrix[static_cast<std::size_t>(w[i - 1])][static_cast<std::size_t>(w[i])];
        }
        return p;
    }
    if (auto s = sys.as<substitution_system>()) {
        std::vector<std::uint8_t> bytes(w.begin(), w.end());
        return s->model->frequency(bytes);
    }
    const auto& st = detail::expect_kind<sturmian_system>(sys, "word_frequency");
    double total = 0.0;
    for (const auto& piece : detail::sturmian_cells(st, w.size())) {
        bool match = true;
        for (std::size_t i = 0; i < w.size() && match; ++i) {
            match = detail::sturmian_letter(st, piece.mid, static_cast<std::int64_t>(i)) == w[i];
        }
        if (match) {
            total += piece.length;
        }
    }
    return total;
}

/// The same system with its letters renamed a -> perm[a].
inline system relabel(const system& sys, std::span<const int> perm)
{
    const int n = sys.alphabet_size();
    if (static_cast<int>(perm.size()) != n) {
        throw validation_error("relabeling must cover the whole alphabet");
    }
    std::vector<int> check(perm.begin(), perm.end());
    std::sort(check.begin(), check.end());
    for (int i = 0; i < n; ++i) {
        if (check[static_cast<std::size_t>(i)] != i) {
            throw validation_error("relabeling is not a permutation");
        }
    }
    auto at = [&](int a) { return static_cast<std::size_t>(perm[static_cast<std::size_t>(a)]); };
    system out = [&] {
        if (auto b = sys.as<bernoulli_system>()) {
            std::vector<double> probs(b->probs.size());
            for (int a = 0; a < n; ++a) {
                probs[at(a)] = b->probs[static_cast<std::size_t>(a)];
            }
            return system::bernoulli(std::move(probs));
        }
        if (auto m = sys.as<markov_system>()) {
            std::vector<std::vector<double>> p(m->matrix.size(), std::vector<double>(m->matrix.size()));
            std::vector<double> pi(m->stationary.size());
            for (int a = 0; a < n; ++a) {
                pi[at(a)] = m->stationary[static_cast<std::size_t>(a)];
                for (int b = 0; b < n; ++b) {
                    p[at(a)][at(b)] = m->matrix[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)];
                }
            }
            return system::markov(std::move(p), std::move(pi));
        }
        if (auto s = sys.as<substitution_system>()) {
            std::vector<std::vector<std::uint8_t>> rules(s->rules.size());
            for (int a = 0; a < n; ++a) {
                for (auto c : s->rules[static_cast<std::size_t>(a)]) {
                    rules[at(a)].push_back(static_cast<std::uint8_t>(perm[c]));
                }
            }
            auto opts = s->model->options();
            opts.start_from = perm[static_cast<std::size_t>(opts.start_from)];
            return system::substitution(std::move(rules), opts);
        }
        throw kind_error("relabel supports Bernoulli, Markov and substitution systems");
    }();
    return out.with_seed(sys.seed()).with_span_limit(sys.span_limit());
}

} // namespace mpsens

#endif // MPSENS_SYSTEMS_HPP
