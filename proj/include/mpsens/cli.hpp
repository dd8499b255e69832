#ifndef MPSENS_CLI_HPP
#define MPSENS_CLI_HPP

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "error.hpp"
#include "num_core.hpp"
#include "partitions.hpp"
#include "pattern_entropy.hpp"
#include "random.hpp"
#include "sensitivity.hpp"
#include "systems.hpp"

namespace mpsens::cli {

using json = nlohmann::ordered_json;

inline constexpr const char* version = "0.1.0";

inline constexpr int exit_ok = 0;
inline constexpr int exit_validation = 1;
inline constexpr int exit_inconclusive = 2;
inline constexpr int exit_internal = 3;

/// Malformed or inconsistent configuration; the message carries line and field.
class config_error : public validation_error
{
public:
    using validation_error::validation_error;
};

struct options
{
    std::string command;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out_dir = ".";
    bool log2 = false;
    std::optional<std::uint64_t> budget;
};

// ---------------------------------------------------------------- config

namespace detail {

inline std::string where(const YAML::Node& n, const std::string& field)
{
    const auto m = n.Mark();
    if (m.is_null()) {
        return field;
    }
    return "line " + std::to_string(m.line + 1) + ", column " + std::to_string(m.column + 1) + " (" + field + ")";
}

[[noreturn]] inline void fail(const YAML::Node& n, const std::string& field, const std::string& msg)
{
    throw config_error(where(n, field) + ": " + msg);
}

inline YAML::Node child(const YAML::Node& parent, const std::string& key, const std::string& path)
{
    if (!parent.IsMap()) {
        fail(parent, path, "expected a table");
    }
    const YAML::Node c = parent[key];
    if (!c) {
        fail(parent, path + "." + key, "missing field");
    }
    return c;
}

inline std::optional<YAML::Node> maybe(const YAML::Node& parent, const std::string& key)
{
    if (!parent || !parent.IsMap()) {
        return std::nullopt;
    }
    const YAML::Node c = parent[key];
    if (!c) {
        return std::nullopt;
    }
    return c;
}

inline const std::string& scalar(const YAML::Node& n, const std::string& path)
{
    if (!n.IsScalar()) {
        fail(n, path, "expected a scalar");
    }
    return n.Scalar();
}

/// Decimal text to the nearest double; quoted strings keep every digit.
inline double to_double(const YAML::Node& n, const std::string& path)
{
    const auto& s = scalar(n, path);
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size() || !std::isfinite(v)) {
        fail(n, path, "'" + s + "' is not a decimal number");
    }
    return v;
}

template <typename Int>
inline Int to_int(const YAML::Node& n, const std::string& path)
{
    const auto& s = scalar(n, path);
    Int v{};
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) {
        fail(n, path, "'" + s + "' is not an integer in range");
    }
    return v;
}

inline const YAML::Node& sequence(const YAML::Node& n, const std::string& path)
{
    if (!n.IsSequence()) {
        fail(n, path, "expected a list");
    }
    return n;
}

inline std::vector<double> to_doubles(const YAML::Node& n, const std::string& path)
{
    std::vector<double> out;
    for (std::size_t i = 0; i < sequence(n, path).size(); ++i) {
        out.push_back(to_double(n[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

template <typename Int>
inline std::vector<Int> to_ints(const YAML::Node& n, const std::string& path)
{
    std::vector<Int> out;
    for (std::size_t i = 0; i < sequence(n, path).size(); ++i) {
        out.push_back(to_int<Int>(n[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

/// Runs a toolkit factory and prefixes its complaints with the config location.
template <typename F>
inline auto guarded(const YAML::Node& n, const std::string& path, F&& f)
{
    try {
        return f();
    } catch (const config_error&) {
        throw;
    } catch (const error& e) {
        fail(n, path, e.what());
    }
}

inline json echo(const YAML::Node& n)
{
    switch (n.Type()) {
    case YAML::NodeType::Map: {
        json out = json::object();
        for (const auto& kv : n) {
            out[kv.first.Scalar()] = echo(kv.second);
        }
        return out;
    }
    case YAML::NodeType::Sequence: {
        json out = json::array();
        for (const auto& v : n) {
            out.push_back(echo(v));
        }
        return out;
    }
    case YAML::NodeType::Scalar: {
        const auto& s = n.Scalar();
        std::int64_t i = 0;
        const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), i);
        if (ec == std::errc{} && end == s.data() + s.size()) {
            return i;
        }
        if (s == "true" || s == "false") {
            return s == "true";
        }
        return s; // decimals stay as written
    }
    default:
        return nullptr;
    }
}

inline std::string kind_of(const YAML::Node& n, const std::string& path)
{
    return scalar(child(n, "kind", path), path + ".kind");
}

} // namespace detail

inline system build_system(const YAML::Node& n, const std::string& path = "system")
{
    using namespace detail;
    const auto kind = kind_of(n, path);
    auto field = [&](const char* key) { return child(n, key, path); };
    auto sub = [&](const char* key) { return path + "." + key; };
    system sys = guarded(n, path, [&]() -> system {
        if (kind == "bernoulli") {
            return system::bernoulli(to_doubles(field("probs"), sub("probs")));
        }
        if (kind == "markov") {
            std::vector<std::vector<double>> p;
            const auto rows = field("matrix");
            for (std::size_t i = 0; i < sequence(rows, sub("matrix")).size(); ++i) {
                p.push_back(to_doubles(rows[i], sub("matrix") + "[" + std::to_string(i) + "]"));
            }
            std::optional<std::vector<double>> pi;
            if (auto s = maybe(n, "stationary")) {
                pi = to_doubles(*s, sub("stationary"));
            }
            return system::markov(std::move(p), std::move(pi));
        }
        if (kind == "substitution" || kind == "thue_morse") {
            std::vector<std::vector<std::uint8_t>> rules;
            if (kind == "thue_morse") {
                rules = {{0, 1}, {1, 0}};
            } else {
                const auto rs = field("rules");
                for (std::size_t i = 0; i < sequence(rs, sub("rules")).size(); ++i) {
                    std::vector<std::uint8_t> r;
                    for (int a : to_ints<int>(rs[i], sub("rules") + "[" + std::to_string(i) + "]")) {
                        if (a < 0 || a > 255) {
                            fail(rs[i], sub("rules"), "letter out of range");
                        }
                        r.push_back(static_cast<std::uint8_t>(a));
                    }
                    rules.push_back(std::move(r));
                }
            }
            return system::substitution(std::move(rules));
        }
        if (kind == "sturmian") {
            const double alpha = to_double(field("alpha"), sub("alpha"));
            const double cut = maybe(n, "cut") ? to_double(field("cut"), sub("cut")) : 1.0 - alpha;
            return system::sturmian(alpha, cut);
        }
        if (kind == "rotation") {
            return system::rotation(to_double(field("alpha"), sub("alpha")));
        }
        if (kind == "finite_extension") {
            std::vector<cocycle_step> steps;
            const auto cs = field("cocycle");
            for (std::size_t i = 0; i < sequence(cs, sub("cocycle")).size(); ++i) {
                const auto p = sub("cocycle") + "[" + std::to_string(i) + "]";
                steps.push_back({to_double(child(cs[i], "from", p), p + ".from"),
                                 to_int<int>(child(cs[i], "value", p), p + ".value")});
            }
            return system::finite_extension(to_double(field("alpha"), sub("alpha")),
                                            to_int<int>(field("fiber"), sub("fiber")), std::move(steps));
        }
        if (kind == "product") {
            std::vector<system> parts;
            const auto ps = field("parts");
            for (std::size_t i = 0; i < sequence(ps, sub("parts")).size(); ++i) {
                parts.push_back(build_system(ps[i], sub("parts") + "[" + std::to_string(i) + "]"));
            }
            return system::product(std::move(parts));
        }
        fail(n, sub("kind"), "unknown system kind '" + kind + "'");
    });
    if (auto s = maybe(n, "seed")) {
        sys = sys.with_seed(to_int<std::uint64_t>(*s, sub("seed")));
    }
    if (auto s = maybe(n, "span_limit")) {
        sys = sys.with_span_limit(to_int<std::size_t>(*s, sub("span_limit")));
    }
    return sys;
}

inline partition build_partition(const YAML::Node& n, const std::string& path = "partition")
{
    using namespace detail;
    const auto kind = kind_of(n, path);
    auto field = [&](const char* key) { return child(n, key, path); };
    auto sub = [&](const char* key) { return path + "." + key; };
    return guarded(n, path, [&]() -> partition {
        if (kind == "letters") {
            return partition::letters(to_int<int>(field("alphabet"), sub("alphabet")));
        }
        if (kind == "words") {
            return partition::words(to_int<int>(field("length"), sub("length")));
        }
        if (kind == "symbol_map") {
            return partition::symbol_map(to_ints<int>(field("map"), sub("map")));
        }
        if (kind == "intervals") {
            std::vector<std::vector<std::pair<double, double>>> atoms;
            const auto as = field("atoms");
            for (std::size_t i = 0; i < sequence(as, sub("atoms")).size(); ++i) {
                const auto p = sub("atoms") + "[" + std::to_string(i) + "]";
                std::vector<std::pair<double, double>> arcs;
                for (std::size_t j = 0; j < sequence(as[i], p).size(); ++j) {
                    const auto ab = to_doubles(as[i][j], p + "[" + std::to_string(j) + "]");
                    if (ab.size() != 2) {
                        fail(as[i][j], p, "an arc is a pair [from, to]");
                    }
                    arcs.emplace_back(ab[0], ab[1]);
                }
                atoms.push_back(std::move(arcs));
            }
            return partition::intervals(atoms);
        }
        if (kind == "cuts") {
            return partition::from_cuts(to_doubles(field("cuts"), sub("cuts")), to_ints<int>(field("atoms"), sub("atoms")));
        }
        if (kind == "half_circle") {
            return partition::half_circle(maybe(n, "at") ? to_double(field("at"), sub("at")) : 0.5);
        }
        if (kind == "product") {
            std::vector<partition> parts;
            const auto ps = field("parts");
            for (std::size_t i = 0; i < sequence(ps, sub("parts")).size(); ++i) {
                parts.push_back(build_partition(ps[i], sub("parts") + "[" + std::to_string(i) + "]"));
            }
            return partition::product(std::move(parts));
        }
        fail(n, sub("kind"), "unknown partition kind '" + kind + "'");
    });
}

inline YAML::Node load_config(const std::string& path)
{
    try {
        return YAML::LoadFile(path);
    } catch (const YAML::BadFile&) {
        throw config_error("cannot read config file '" + path + "'");
    } catch (const YAML::ParserException& e) {
        throw config_error("line " + std::to_string(e.mark.line + 1) + ", column " + std::to_string(e.mark.column + 1) +
                           ": " + e.msg);
    }
}

// ---------------------------------------------------------------- output

namespace detail {

inline json num(double v, bool exact)
{
    return json{{"value", v}, {"exact", exact}};
}

inline json count(std::int64_t v)
{
    return json{{"value", v}, {"exact", true}};
}

inline std::string fmt(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline bool joints_exact(const system& sys)
{
    if (sys.as<substitution_system>()) {
        return false; // frequencies come from a stabilized count
    }
    if (auto p = sys.as<product_system>()) {
        for (const auto& s : p->parts) {
            if (!joints_exact(s)) {
                return false;
            }
        }
    }
    return true;
}

struct csv_table
{
    std::string name;
    std::ostringstream body;

    explicit csv_table(std::string n, const std::string& header) : name(std::move(n)) { body << header << '\n'; }
};

} // namespace detail

struct run_output
{
    json results = json::object();
    std::vector<std::pair<std::string, std::string>> tables; ///< file name, contents
    int code = exit_ok;
};

struct context
{
    std::optional<system> sys;
    std::optional<partition> part;
    YAML::Node params;
    std::optional<std::uint64_t> seed;
    search_options search;
    double unit = 1.0; ///< nats per output unit
    std::ostream* log = nullptr;

    const system& need_system() const
    {
        if (!sys) {
            throw config_error("system: missing table");
        }
        return *sys;
    }

    const partition& need_partition() const
    {
        if (!part) {
            throw config_error("partition: missing table");
        }
        return *part;
    }

    std::uint64_t need_seed() const
    {
        if (!seed) {
            throw config_error("seed: required for stochastic commands (--seed or params.seed)");
        }
        return *seed;
    }

    template <typename Int>
    Int integer(const char* key) const
    {
        return detail::to_int<Int>(detail::child(params, key, "params"), std::string("params.") + key);
    }

    template <typename Int>
    Int integer(const char* key, Int fallback) const
    {
        auto n = detail::maybe(params, key);
        return n ? detail::to_int<Int>(*n, std::string("params.") + key) : fallback;
    }

    std::string text(const char* key, std::string fallback) const
    {
        auto n = detail::maybe(params, key);
        return n ? detail::scalar(*n, std::string("params.") + key) : fallback;
    }
};

namespace detail {

inline void add_table(run_output& out, csv_table& t)
{
    out.tables.emplace_back(t.name, t.body.str());
}

inline json profile_json(const h_star_profile_t& prof, double unit, bool joints)
{
    json rows = json::array();
    for (const auto& r : prof.per_k) {
        rows.push_back({{"k", r.k},
                        {"p_star", num(r.p_star * unit, r.exact && joints)},
                        {"p_star_over_k", num(r.p_star_over_k * unit, r.exact && joints)},
                        {"pattern", r.pattern}});
    }
    return json{{"partition", prof.partition_id},
                {"T", prof.horizon},
                {"rows", rows},
                {"infimum_proxy", num(prof.infimum_proxy * unit, prof.exact && joints)}};
}

inline void profile_csv(csv_table& t, const h_star_profile_t& prof, double unit, bool joints)
{
    for (const auto& r : prof.per_k) {
        t.body << r.k << ',' << fmt(r.p_star * unit) << ',' << fmt(r.p_star_over_k * unit) << ','
               << (r.exact && joints ? 1 : 0) << '\n';
    }
}

inline json density_json(const density_estimate& d)
{
    return json{{"lower_proxy", num(d.lower_proxy, false)},
                {"upper_proxy", num(d.upper_proxy, false)},
                {"gap", num(d.upper_proxy - d.lower_proxy, false)}};
}

inline void density_csv(csv_table& t, const std::string& ids, const density_estimate& d)
{
    for (const auto& w : d.window_densities) {
        t.body << ids << w.window << ',' << w.count << ',' << fmt(w.density) << '\n';
    }
}

inline json record_json(const separation_record& r)
{
    json j = density_json(r.density);
    j["witness_seeds"] = r.witness_seeds;
    j["all_distinct_atoms_fraction"] = num(r.all_distinct_atoms_fraction, false);
    j["constructed"] = r.constructed;
    if (r.constructed) {
        j["pattern"] = r.pattern;
    }
    return j;
}

inline std::vector<target_set> targets_from(const context& ctx, std::uint64_t seed)
{
    const auto& sys = ctx.need_system();
    auto t = maybe(ctx.params, "targets");
    if (!t) {
        return adversarial_family(sys, 10, derive_seed(seed, 0xfa));
    }
    const std::string path = "params.targets";
    if (t->IsMap()) {
        const int depth = to_int<int>(child(*t, "family", path), path + ".family");
        return guarded(*t, path, [&] { return adversarial_family(sys, depth, derive_seed(seed, 0xfa)); });
    }
    std::vector<target_set> out;
    for (std::size_t i = 0; i < sequence(*t, path).size(); ++i) {
        const auto& n = (*t)[i];
        const auto p = path + "[" + std::to_string(i) + "]";
        const auto kind = kind_of(n, p);
        out.push_back(guarded(n, p, [&]() -> target_set {
            if (kind == "cylinder") {
                const auto pos = maybe(n, "position") ? to_int<std::size_t>(n["position"], p + ".position") : 0;
                return target_set::make(sys, cylinder{to_ints<int>(child(n, "word", p), p + ".word"), pos});
            }
            if (kind == "arc") {
                return target_set::make(sys, arc{to_double(child(n, "from", p), p + ".from"),
                                                 to_double(child(n, "to", p), p + ".to")});
            }
            if (kind == "full") {
                return target_set::make(sys, full_space{});
            }
            fail(n, p + ".kind", "unknown target kind '" + kind + "'");
        }));
    }
    return out;
}

} // namespace detail

// ---------------------------------------------------------------- commands

inline run_output cmd_entropy(const context& ctx)
{
    using namespace detail;
    const auto& sys = ctx.need_system();
    const auto& part = ctx.need_partition();
    const bool ex = joints_exact(sys);
    run_output out;
    out.results["partition"] = part.describe();
    out.results["partition_entropy"] = num(partition_entropy(sys, part) * ctx.unit, ex);
    json atoms = json::array();
    for (const auto& [code, mass] : atom_masses(sys, part)) {
        atoms.push_back({{"atom", code}, {"mass", num(mass, ex)}});
    }
    out.results["atom_count"] = count(static_cast<std::int64_t>(atom_count(sys, part)));
    out.results["atoms"] = atoms;
    if (auto p = maybe(ctx.params, "pattern")) {
        const auto times = to_ints<std::int64_t>(*p, "params.pattern");
        const auto jd = guarded(*p, "params.pattern", [&] { return joint_distribution(sys, part, time_pattern(times)); });
        out.results["pattern"] = times;
        out.results["join_entropy"] = num(shannon_entropy(jd.dist.probs()) * ctx.unit, ex);
        out.results["join_atoms"] = count(static_cast<std::int64_t>(jd.dist.size()));
    }
    if (auto g = maybe(ctx.params, "gamma")) {
        const auto gamma = to_ints<std::int64_t>(*g, "params.gamma");
        const auto prof = guarded(*g, "params.gamma", [&] { return sequence_entropy_profile(sys, part, gamma); });
        json rows = json::array();
        for (std::size_t i = 0; i < prof.size(); ++i) {
            rows.push_back({{"n", i + 1}, {"h_over_n", num(prof[i] * ctx.unit, ex)}});
        }
        out.results["gamma"] = gamma;
        out.results["sequence_entropy"] = rows;
    }
    return out;
}

inline run_output cmd_pattern(const context& ctx)
{
    using namespace detail;
    const auto& sys = ctx.need_system();
    const auto& part = ctx.need_partition();
    const int k = ctx.integer<int>("k");
    const auto horizon = ctx.integer<std::int64_t>("T");
    const auto r = guarded(ctx.params, "params", [&] { return p_star(sys, part, k, horizon, ctx.search); });
    const bool ex = r.exact_within_horizon && joints_exact(sys);
    run_output out;
    out.results = {{"partition", part.describe()},
                   {"k", k},
                   {"T", horizon},
                   {"p_star", num(r.best_value * ctx.unit, ex)},
                   {"p_star_over_k", num(r.best_value / k * ctx.unit, ex)},
                   {"pattern", r.best_pattern},
                   {"nodes_expanded", count(static_cast<std::int64_t>(r.nodes_expanded))},
                   {"completed", r.completed},
                   {"exact_within_horizon", r.exact_within_horizon}};
    csv_table t("pattern.csv", "k,p_star_nats,p_star_over_k,exact_flag");
    t.body << k << ',' << fmt(r.best_value * ctx.unit) << ',' << fmt(r.best_value / k * ctx.unit) << ','
           << (ex ? 1 : 0) << '\n';
    add_table(out, t);
    return out;
}

inline run_output cmd_hstar(const context& ctx)
{
    using namespace detail;
    const auto& sys = ctx.need_system();
    const int k_max = ctx.integer<int>("k_max");
    const auto horizon = ctx.integer<std::int64_t>("T");
    const int max_length = ctx.integer<int>("max_length", 0);
    const bool joints = joints_exact(sys);
    run_output out;
    if (max_length > 0) {
        const auto fam =
            guarded(ctx.params, "params", [&] { return h_star_family(sys, max_length, k_max, horizon, ctx.search); });
        json profiles = json::array();
        bool all = true;
        for (std::size_t l = 0; l < fam.profiles.size(); ++l) {
            profiles.push_back(profile_json(fam.profiles[l], ctx.unit, joints));
            csv_table t("hstar_L" + std::to_string(l + 1) + ".csv", "k,p_star_nats,p_star_over_k,exact_flag");
            profile_csv(t, fam.profiles[l], ctx.unit, joints);
            add_table(out, t);
            all = all && fam.profiles[l].exact;
        }
        out.results["profiles"] = profiles;
        out.results["supremum"] = num(fam.supremum * ctx.unit, all && joints);
        return out;
    }
    const auto& part = ctx.need_partition();
    const auto prof = guarded(ctx.params, "params", [&] { return h_star_profile(sys, part, k_max, horizon, ctx.search); });
    out.results["profile"] = profile_json(prof, ctx.unit, joints);
    csv_table t("hstar.csv", "k,p_star_nats,p_star_over_k,exact_flag");
    profile_csv(t, prof, ctx.unit, joints);
    add_table(out, t);
    return out;
}

inline run_output cmd_sensitivity(const context& ctx)
{
    using namespace detail;
    const auto& sys = ctx.need_system();
    const auto seed = ctx.need_seed();
    const auto kind_text = ctx.text("notion", "strong");
    const int n = ctx.integer<int>("n");
    const auto horizon = ctx.integer<std::size_t>("N");
    const int trials = ctx.integer<int>("trials", 4);
    sensitivity_options opts;
    opts.search = ctx.search;
    opts.rejection_budget = ctx.integer<std::uint64_t>("rejection_budget", opts.rejection_budget);
    const auto family = targets_from(ctx, seed);
    run_output out;
    json sets = json::array();
    if (kind_text == "mean") {
        csv_table t("cesaro.csv", "set,trial,checkpoint_N,cesaro_value");
        double delta = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < family.size(); ++s) {
            const auto rep = guarded(ctx.params, "params", [&] {
                return mean_sensitivity_estimate(sys, family[s], n, horizon, trials, derive_seed(seed, s), opts);
            });
            json tj = json::array();
            for (std::size_t i = 0; i < rep.cesaro.size(); ++i) {
                const auto& c = rep.cesaro[i];
                tj.push_back({{"witness_seeds", c.witness_seeds},
                              {"lower_proxy", num(c.lower_proxy, false)},
                              {"upper_proxy", num(c.upper_proxy, false)}});
                for (const auto& [cp, v] : c.profile) {
                    t.body << s << ',' << i << ',' << cp << ',' << fmt(v) << '\n';
                }
            }
            sets.push_back({{"target", family[s].describe()},
                            {"measure", num(family[s].measure(), joints_exact(sys))},
                            {"delta_estimate", num(rep.delta_estimate, false)},
                            {"outcome", to_string(rep.outcome)},
                            {"trials", tj}});
            delta = std::min(delta, rep.delta_estimate);
        }
        add_table(out, t);
        out.results = {{"notion", "mean"},
                       {"n", n},
                       {"N", horizon},
                       {"sets", sets},
                       {"delta_estimate", num(delta, false)},
                       {"outcome", delta > 0.0 ? "witnessed" : "not-witnessed-at-budget"}};
        return out;
    }
    if (kind_text != "strong" && kind_text != "weak") {
        fail(ctx.params["notion"], "params.notion", "expected strong, weak or mean");
    }
    const auto& part = ctx.need_partition();
    const auto pattern_horizon = ctx.integer<std::int64_t>("pattern_horizon", 0);
    const auto rep = guarded(ctx.params, "params", [&] {
        return sensitivity_over_family(sys, part, kind_text == "weak" ? notion::weak : notion::strong, n, family,
                                       horizon, trials, seed, pattern_horizon, opts);
    });
    csv_table t("density.csv", "set,trial,window_N,count,density");
    for (std::size_t s = 0; s < rep.per_set.size(); ++s) {
        json tj = json::array();
        for (std::size_t i = 0; i < rep.per_set[s].trials.size(); ++i) {
            tj.push_back(record_json(rep.per_set[s].trials[i]));
            density_csv(t, std::to_string(s) + "," + std::to_string(i) + ",", rep.per_set[s].trials[i].density);
        }
        sets.push_back({{"target", rep.sets[s].describe()},
                        {"measure", num(rep.sets[s].measure(), joints_exact(sys))},
                        {"delta_estimate", num(rep.per_set[s].delta_estimate, false)},
                        {"outcome", to_string(rep.per_set[s].outcome)},
                        {"trials", tj}});
    }
    add_table(out, t);
    out.results = {{"notion", kind_text},
                   {"partition", part.describe()},
                   {"n", n},
                   {"N", horizon},
                   {"sets", sets},
                   {"delta_estimate", num(rep.delta_estimate, false)},
                   {"outcome", to_string(rep.outcome)}};
    return out;
}

inline run_output cmd_pairs(const context& ctx)
{
    using namespace detail;
    const auto& sys = ctx.need_system();
    const auto& part = ctx.need_partition();
    const auto seed = ctx.need_seed();
    const int trials = ctx.integer<int>("trials");
    const auto horizon = ctx.integer<std::size_t>("N");
    const auto rep = guarded(ctx.params, "params", [&] { return pair_separation_density(sys, part, trials, horizon, seed); });
    run_output out;
    csv_table t("density.csv", "trial,window_N,count,density");
    json tj = json::array();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < rep.trials.size(); ++i) {
        const auto& d = rep.trials[i].density;
        tj.push_back(record_json(rep.trials[i]));
        density_csv(t, std::to_string(i) + ",", d);
        lo = std::min(lo, d.lower_proxy);
        hi = std::max(hi, d.upper_proxy);
    }
    add_table(out, t);
    out.results = {{"partition", part.describe()},
                   {"N", horizon},
                   {"trials", tj},
                   {"min_lower_proxy", num(lo, false)},
                   {"max_upper_proxy", num(hi, false)}};
    return out;
}

// ---------------------------------------------------------------- verify

namespace detail {

struct check_list
{
    json items = json::array();
    int failed = 0;
    int inconclusive = 0;

    void hard(const std::string& name, const std::string& tolerance, json observed, bool exact, bool ok)
    {
        const char* outcome = !exact ? "inconclusive" : ok ? "pass" : "fail";
        failed += exact && !ok;
        inconclusive += !exact;
        items.push_back({{"check", name},
                         {"kind", "hard"},
                         {"tolerance", tolerance},
                         {"observed", std::move(observed)},
                         {"outcome", outcome}});
    }

    void exploratory(const std::string& name, const std::string& note, json observed, const std::string& outcome)
    {
        items.push_back({{"check", name},
                         {"kind", "exploratory"},
                         {"tolerance", note},
                         {"observed", std::move(observed)},
                         {"outcome", outcome}});
    }
};

inline json family_json(const family_report& f)
{
    json per = json::array();
    for (std::size_t s = 0; s < f.per_set.size(); ++s) {
        per.push_back({{"target", f.sets[s].describe()},
                       {"delta_estimate", num(f.per_set[s].delta_estimate, false)},
                       {"outcome", to_string(f.per_set[s].outcome)}});
    }
    return json{{"notion", to_string(f.kind)},
                {"n", f.n},
                {"delta_estimate", num(f.delta_estimate, false)},
                {"outcome", to_string(f.outcome)},
                {"sets", per}};
}

} // namespace detail

inline run_output cmd_verify(const context& ctx)
{
    using namespace detail;
    const double log2 = std::log(2.0);
    const double golden = (std::sqrt(5.0) - 1.0) / 2.0;
    const auto seed = ctx.seed.value_or(0);
    auto note = [&](const std::string& s) {
        if (ctx.log) {
            *ctx.log << "verify: " << s << '\n';
        }
    };
    run_output out;
    json sections = json::array();
    int failed = 0;
    int inconclusive = 0;

    {
        note("bernoulli");
        check_list checks;
        const auto b = system::bernoulli({0.5, 0.5});
        csv_table t("verify_bernoulli_hstar.csv", "k,p_star_nats,p_star_over_k,exact_flag");
        json rows = json::array();
        double worst = 0.0;
        bool exact = true;
        for (int k = 1; k <= 8; ++k) {
            const auto r = p_star(b, partition::letters(2), k, 2 * k, ctx.search);
            worst = std::max(worst, std::abs(r.best_value - k * log2));
            exact = exact && r.exact_within_horizon;
            rows.push_back({{"k", k},
                            {"T", 2 * k},
                            {"p_star", num(r.best_value * ctx.unit, r.exact_within_horizon)},
                            {"p_star_over_k", num(r.best_value / k * ctx.unit, r.exact_within_horizon)}});
            t.body << k << ',' << fmt(r.best_value * ctx.unit) << ',' << fmt(r.best_value / k * ctx.unit) << ','
                   << (r.exact_within_horizon ? 1 : 0) << '\n';
        }
        add_table(out, t);
        checks.hard("p*_T(k) = k log 2 for k <= 8, T = 2k, letters", "1e-10", num(worst, exact), exact,
                    worst <= 1e-10);

        json words = json::array();
        double wworst = 0.0;
        bool wexact = true;
        for (int l = 1; l <= 4; ++l) {
            const auto prof = h_star_profile(b, partition::words(l), 4, 3 * l, ctx.search);
            wworst = std::max(wworst, std::abs(prof.infimum_proxy - l * log2));
            wexact = wexact && prof.exact;
            words.push_back({{"L", l}, {"infimum_proxy", num(prof.infimum_proxy * ctx.unit, prof.exact)}});
        }
        checks.hard("words(L) infimum proxy = L log 2 for L <= 4, k <= 4, T = 3L", "1e-10", num(wworst, wexact),
                    wexact, wworst <= 1e-10);

        json sens = json::array();
        for (int n = 2; n <= 4; ++n) {
            const auto fam = adversarial_family(b, 10, derive_seed(seed, 0xfa));
            const auto rep =
                sensitivity_over_family(b, partition::words(3), notion::strong, n, fam, 100'000, 2, derive_seed(seed, n));
            checks.hard("strong " + std::to_string(n) + "-sensitivity, words(3), cylinder family depth 10, N = 1e5",
                        "delta >= 0.1", num(rep.delta_estimate, false), true, rep.delta_estimate >= 0.1);
            sens.push_back(family_json(rep));
        }
        failed += checks.failed;
        inconclusive += checks.inconclusive;
        sections.push_back({{"section", "bernoulli"},
                            {"system", "bernoulli(1/2, 1/2)"},
                            {"h_star_profile", rows},
                            {"word_partitions", words},
                            {"sensitivity", sens},
                            {"checks", checks.items}});
    }

    {
        note("sturmian-rotation");
        check_list checks;
        const auto st = system::sturmian(golden, 1.0 - golden);
        csv_table t("verify_sturmian_hstar.csv", "k,p_star_nats,p_star_over_k,exact_flag");
        json rows = json::array();
        bool atoms_ok = true;
        double p6 = 0.0;
        std::vector<double> sweep_values;
        for (int k = 1; k <= 6; ++k) {
            const auto sw = sweep_patterns(st, partition::letters(2), k, 32);
            atoms_ok = atoms_ok && sw.max_atoms <= static_cast<std::size_t>(2 * k);
            sweep_values.push_back(sw.max_entropy);
            p6 = sw.max_entropy / 6;
            rows.push_back({{"k", k},
                            {"patterns", count(static_cast<std::int64_t>(sw.patterns))},
                            {"max_atoms", count(static_cast<std::int64_t>(sw.max_atoms))},
                            {"p_star", num(sw.max_entropy * ctx.unit, true)},
                            {"p_star_over_k", num(sw.max_entropy / k * ctx.unit, true)},
                            {"pattern", sw.best_pattern}});
            t.body << k << ',' << fmt(sw.max_entropy * ctx.unit) << ',' << fmt(sw.max_entropy / k * ctx.unit) << ",1\n";
        }
        add_table(out, t);
        checks.hard("positive-mass atoms of every k-pattern join <= 2k, k <= 6, T = 32", "exact",
                    num(atoms_ok ? 1.0 : 0.0, true), true, atoms_ok);
        checks.hard("p*_T(6)/6 <= 0.415 nats", "0.415", num(p6, true), true, p6 <= 0.415);

        const auto prof = h_star_profile(st, partition::letters(2), 6, 32, ctx.search);
        bool agree = true;
        for (std::size_t i = 0; i < prof.per_k.size(); ++i) {
            agree = agree && prof.per_k[i].p_star == sweep_values[i];
        }
        checks.exploratory("branch and bound profile matches the sweep", "equal",
                           profile_json(prof, ctx.unit, true),
                           !prof.exact ? "inconclusive" : agree ? "consistent" : "differs");

        const auto rot = system::rotation(golden);
        const auto a = target_set::make(rot, arc{0.3, 0.31});
        const std::size_t horizon = 10'000;
        double dev = 0.0;
        double dmax = 0.0;
        json pairs = json::array();
        for (std::uint64_t tr = 0; tr < 5; ++tr) {
            const auto ws = sample_in_target(rot, a, 2, 1, derive_seed(seed, 0x70 + tr));
            const auto rec = mean_sensitivity_from_seeds(rot, a, {ws[0].seed, ws[1].seed}, horizon);
            const double d = metric_distance(rot, ws[0].x, ws[1].x).value;
            for (const auto& cp : rec.profile) {
                dev = std::max(dev, std::abs(cp.second - d));
            }
            dmax = std::max(dmax, rec.upper_proxy);
            pairs.push_back({{"witness_seeds", rec.witness_seeds}, {"distance", num(d, true)}});
        }
        checks.hard("rotation Cesaro profile equals d(x, y) for pairs in an arc of length 0.01", "1e-12",
                    num(dev, true), true, dev <= 1e-12);
        checks.hard("no mean separation above 0.01 in that arc", "0.01", num(dmax, true), true, dmax <= 0.01);

        const auto fam = adversarial_family(st, 8, derive_seed(seed, 0xfb));
        const auto rep = sensitivity_over_family(st, partition::letters(2), notion::strong, 2, fam, 10'000, 2,
                                                 derive_seed(seed, 0x5e));
        checks.exploratory("strong 2-sensitivity over shrinking cylinders", "delta shrinks with depth",
                           family_json(rep), "reported");
        failed += checks.failed;
        inconclusive += checks.inconclusive;
        sections.push_back({{"section", "sturmian-rotation"},
                            {"system", "sturmian(golden mean)"},
                            {"h_star_profile", rows},
                            {"sensitivity", json::array({family_json(rep)})},
                            {"checks", checks.items}});
    }

    {
        note("thue-morse");
        check_list checks;
        const auto tm = system::substitution({{0, 1}, {1, 0}});
        const double f0 = word_frequency(tm, std::vector<int>{0});
        const double f1 = word_frequency(tm, std::vector<int>{1});
        const double f11 = word_frequency(tm, std::vector<int>{1, 1});
        const double dev = std::max(std::abs(f0 - 0.5), std::abs(f1 - 0.5));
        checks.hard("letter frequencies 1/2", "1e-6", num(dev, false), true, dev <= 1e-6);
        checks.hard("freq(11) = 1/6", "1e-4", num(std::abs(f11 - 1.0 / 6), false), true,
                    std::abs(f11 - 1.0 / 6) <= 1e-4);

        const auto prof = h_star_profile(tm, partition::letters(2), 6, 64, ctx.search);
        csv_table t("verify_thue_morse_hstar.csv", "k,p_star_nats,p_star_over_k,exact_flag");
        profile_csv(t, prof, ctx.unit, false);
        add_table(out, t);
        const bool inside = prof.infimum_proxy > 0.0 && prof.infimum_proxy <= log2 + 1e-12;
        checks.exploratory("h* proxy in the bracket (0, log 2]", "(0, log 2]", num(prof.infimum_proxy * ctx.unit, false),
                           !prof.exact ? "inconclusive" : inside ? "inside" : "outside");

        sensitivity_options opts;
        opts.search = ctx.search;
        json sens = json::array();
        for (int n = 2; n <= 3; ++n) {
            const auto fam = adversarial_family(tm, 6, derive_seed(seed, 0xfc));
            const auto rep = sensitivity_over_family(tm, partition::words(2), notion::strong, n, fam, 10'000, 2,
                                                     derive_seed(seed, 0x7e + n), 16, opts);
            checks.exploratory("strong " + std::to_string(n) + "-sensitivity, words(2), cylinder family depth 6",
                               "witnessed or not at budget", num(rep.delta_estimate, false), to_string(rep.outcome));
            sens.push_back(family_json(rep));
        }
        failed += checks.failed;
        inconclusive += checks.inconclusive;
        sections.push_back({{"section", "thue-morse"},
                            {"system", "substitution 0->01, 1->10"},
                            {"h_star_profile", profile_json(prof, ctx.unit, false)},
                            {"sensitivity", sens},
                            {"checks", checks.items}});
    }

    out.results["sections"] = sections;
    out.results["hard_failed"] = failed;
    out.results["hard_inconclusive"] = inconclusive;
    out.code = failed > 0 ? exit_internal : inconclusive > 0 ? exit_inconclusive : exit_ok;
    out.results["status"] = failed > 0 ? "fail" : inconclusive > 0 ? "inconclusive" : "pass";
    return out;
}

// ---------------------------------------------------------------- driver

inline bool known_command(const std::string& c)
{
    return c == "entropy" || c == "pattern" || c == "hstar" || c == "sensitivity" || c == "pairs" || c == "verify";
}

/// Builds the context and the config echo; throws config_error on bad input.
inline context prepare(const options& o, json& echo)
{
    context ctx;
    YAML::Node root;
    if (!o.config_path.empty()) {
        root = load_config(o.config_path);
        if (!root.IsMap()) {
            throw config_error("config must be a table");
        }
    } else if (o.command != "verify") {
        throw config_error("--config is required for " + o.command);
    }
    if (root) {
        if (auto s = detail::maybe(root, "system")) {
            ctx.sys = build_system(*s);
        }
        if (auto p = detail::maybe(root, "partition")) {
            ctx.part = build_partition(*p);
        }
        if (auto p = detail::maybe(root, "params")) {
            if (!p->IsMap()) {
                detail::fail(*p, "params", "expected a table");
            }
            ctx.params = *p;
        }
    }
    if (o.seed) {
        ctx.seed = o.seed;
    } else if (auto s = detail::maybe(ctx.params, "seed")) {
        ctx.seed = detail::to_int<std::uint64_t>(*s, "params.seed");
    }
    if (o.budget) {
        if (*o.budget == 0) {
            throw config_error("--budget must be positive");
        }
        ctx.search.node_budget = *o.budget;
    }
    ctx.unit = o.log2 ? 1.0 / std::log(2.0) : 1.0;
    echo = json::object();
    echo["command"] = o.command;
    echo["source"] = root ? detail::echo(root) : json::object();
    echo["seed"] = ctx.seed ? json(*ctx.seed) : json(nullptr);
    echo["budget"] = ctx.search.node_budget;
    echo["log2"] = o.log2;
    return ctx;
}

inline run_output dispatch(const std::string& command, const context& ctx)
{
    if (command == "entropy") {
        return cmd_entropy(ctx);
    }
    if (command == "pattern") {
        return cmd_pattern(ctx);
    }
    if (command == "hstar") {
        return cmd_hstar(ctx);
    }
    if (command == "sensitivity") {
        return cmd_sensitivity(ctx);
    }
    if (command == "pairs") {
        return cmd_pairs(ctx);
    }
    return cmd_verify(ctx);
}

inline void write_file(const std::filesystem::path& p, const std::string& contents)
{
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f << contents;
    if (!f) {
        throw std::runtime_error("cannot write " + p.string());
    }
}

/// Runs one subcommand end to end and returns the process exit code.
inline int run(const options& o, std::ostream& log)
{
    const auto start = std::chrono::steady_clock::now();
    try {
        if (!known_command(o.command)) {
            throw config_error("unknown command '" + o.command + "'");
        }
        json echo;
        auto ctx = prepare(o, echo);
        ctx.log = &log;
        auto out = dispatch(o.command, ctx);
        std::filesystem::create_directories(o.out_dir);
        for (const auto& [name, body] : out.tables) {
            write_file(o.out_dir / name, body);
        }
        json report;
        report["tool"] = "mpsens";
        report["version"] = version;
        report["command"] = o.command;
        report["units"] = o.log2 ? "bits" : "nats";
        report["config"] = echo;
        report["results"] = out.results;
        json files = json::array();
        for (const auto& t : out.tables) {
            files.push_back(t.first);
        }
        report["tables"] = files;
        write_file(o.out_dir / "report.json", report.dump(2) + "\n");
        const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
        log << o.command << ": wrote " << (o.out_dir / "report.json").string() << " in " << took.count() << " s\n";
        return out.code;
    } catch (const config_error& e) {
        log << "config error: " << e.what() << '\n';
        return exit_validation;
    } catch (const error& e) {
        log << "error: " << e.what() << '\n';
        return exit_validation;
    } catch (const std::exception& e) {
        log << "internal error: " << e.what() << '\n';
        return exit_internal;
    }
}

} // namespace mpsens::cli

#endif // MPSENS_CLI_HPP
