#ifndef MPSENS_DETAIL_SUBSTITUTION_HPP
#define MPSENS_DETAIL_SUBSTITUTION_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "../error.hpp"

namespace mpsens {

struct substitution_options
{
    std::size_t min_length = 1024;            ///< first level compared
    std::size_t max_length = std::size_t{1} << 24; ///< cap on the counting prefix
    std::size_t max_sample_length = std::size_t{1} << 27;
    double stabilization_tolerance = 1e-7;
    std::size_t stabilization_span = 4; ///< word lengths compared between levels
    std::size_t tail = 4096;            ///< longest factor length served
    int start_from = 0;                 ///< letter the first-letter walk begins at
};

/// Factors of one length in the cyclic counting word, with frequencies.
struct factor_table
{
    std::size_t length = 0;
    std::vector<std::size_t> positions; ///< first occurrence, increasing
    std::vector<double> freqs;
};

namespace detail {

/// Shared refinement step: classes of length-l factors -> length-(l+1).
/// `data` must hold at least period + l symbols (cyclic continuation).
inline factor_table refine_factor_classes(std::span<const std::uint8_t> data, std::size_t period, int alphabet,
                                          std::vector<std::int32_t>& classes, std::size_t& class_count,
                                          std::size_t new_length)
{
    factor_table t;
    t.length = new_length;
    std::vector<std::uint64_t> counts;
    if (new_length == 1) {
        std::vector<std::int32_t> id(static_cast<std::size_t>(alphabet), -1);
        classes.assign(period, 0);
        for (std::size_t p = 0; p < period; ++p) {
            auto& slot = id[data[p]];
            if (slot < 0) {
                slot = static_cast<std::int32_t>(t.positions.size());
                t.positions.push_back(p);
                counts.push_back(0);
            }
            classes[p] = slot;
            ++counts[static_cast<std::size_t>(slot)];
        }
    } else {
        std::vector<std::int32_t> id(class_count * static_cast<std::size_t>(alphabet), -1);
        for (std::size_t p = 0; p < period; ++p) {
            const std::size_t key = static_cast<std::size_t>(classes[p]) * alphabet + data[p + new_length - 1];
            auto& slot = id[key];
            if (slot < 0) {
                slot = static_cast<std::int32_t>(t.positions.size());
                t.positions.push_back(p);
                counts.push_back(0);
            }
            classes[p] = slot;
            ++counts[static_cast<std::size_t>(slot)];
        }
    }
    class_count = t.positions.size();
    t.freqs.reserve(counts.size());
    for (auto c : counts) {
        t.freqs.push_back(static_cast<double>(c) / static_cast<double>(period));
    }
    return t;
}

inline std::vector<std::uint8_t> cyclic_extension(const std::vector<std::uint8_t>& word, std::size_t tail)
{
    std::vector<std::uint8_t> data(word.size() + tail);
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = word[i % word.size()];
    }
    return data;
}

} // namespace detail

/**
 * Frequency oracle for a primitive substitution.
 *
 * Factor frequencies are counted cyclically in sigma^m(a), where a is a
 * letter with sigma^p(a) beginning with a. Levels grow two substitution
 * steps at a time until the frequencies of all words up to
 * stabilization_span letters move by less than the tolerance, or the
 * length cap is hit. Cyclic counting makes the counts exactly
 * shift-consistent: every factor of length l extends to the right and to
 * the left into factors of length l+1 with the same total.
 */
class substitution_model
{
public:
    struct stabilization
    {
        int level = 0;           ///< substitution steps applied
        std::size_t length = 0;  ///< counting word length
        double gap = 0.0;        ///< last max frequency change between levels
        bool converged = false;
    };

    substitution_model(std::vector<std::vector<std::uint8_t>> rules, substitution_options opts = {})
      : rules_(std::move(rules)), opts_(opts)
    {
        const int n = static_cast<int>(rules_.size());
        // follow first letters until a cycle; any letter on it starts a
        // fixed point of sigma^period
        std::vector<int> seen(static_cast<std::size_t>(n), -1);
        if (opts_.start_from < 0 || opts_.start_from >= n) {
            throw validation_error("start letter outside the alphabet");
        }
        int a = opts_.start_from;
        int step = 0;
        while (seen[static_cast<std::size_t>(a)] < 0) {
            seen[static_cast<std::size_t>(a)] = step++;
            a = rules_[static_cast<std::size_t>(a)].front();
        }
        start_ = static_cast<std::uint8_t>(a);
        power_ = step - seen[static_cast<std::size_t>(a)];
    }

    int alphabet_size() const { return static_cast<int>(rules_.size()); }
    std::uint8_t start_letter() const { return start_; }
    int power() const { return power_; }
    const substitution_options& options() const { return opts_; }

    /// sigma applied `steps` times to `word`.
    std::vector<std::uint8_t> apply(std::vector<std::uint8_t> word, int steps) const
    {
        for (int s = 0; s < steps; ++s) {
            std::vector<std::uint8_t> next;
            std::size_t len = 0;
            for (auto c : word) {
                len += rules_[c].size();
            }
            next.reserve(len);
            for (auto c : word) {
                next.insert(next.end(), rules_[c].begin(), rules_[c].end());
            }
            word = std::move(next);
        }
        return word;
    }

    const stabilization& stats() const
    {
        std::call_once(built_, [this] { build(); });
        return stats_;
    }

    /// Counting word followed by its cyclic continuation.
    std::span<const std::uint8_t> cyclic() const
    {
        stats();
        return data_;
    }

    std::size_t period() const { return stats().length; }

    std::shared_ptr<const factor_table> table(std::size_t length) const
    {
        stats();
        if (length == 0) {
            throw validation_error("factor length must be positive");
        }
        if (length > opts_.tail || length > stats_.length) {
            throw span_error("factor length " + std::to_string(length) + " exceeds the substitution span limit");
        }
        std::lock_guard lock(mutex_);
        while (tables_.size() < length) {
            auto t = detail::refine_factor_classes(data_, stats_.length, alphabet_size(), classes_, class_count_,
                                                   tables_.size() + 1);
            tables_.push_back(std::make_shared<const factor_table>(std::move(t)));
        }
        return tables_[length - 1];
    }

    double frequency(std::span<const std::uint8_t> word) const
    {
        auto t = table(word.size());
        for (std::size_t i = 0; i < t->positions.size(); ++i) {
            if (std::equal(word.begin(), word.end(), data_.begin() + static_cast<std::ptrdiff_t>(t->positions[i]))) {
                return t->freqs[i];
            }
        }
        return 0.0;
    }

    /// A prefix of the fixed point with at least `min_length` symbols.
    std::shared_ptr<const std::vector<std::uint8_t>> prefix(std::size_t min_length) const
    {
        if (min_length > opts_.max_sample_length) {
            throw horizon_error("substitution prefix of " + std::to_string(min_length) + " symbols exceeds the cap");
        }
        std::lock_guard lock(mutex_);
        if (!prefix_ || prefix_->size() < min_length) {
            std::vector<std::uint8_t> w{start_};
            while (w.size() < std::max<std::size_t>(min_length, 2)) {
                w = apply(std::move(w), power_);
            }
            prefix_ = std::make_shared<const std::vector<std::uint8_t>>(std::move(w));
        }
        return prefix_;
    }

private:
    using word_table = std::map<std::string, double>;

    static word_table short_words(const std::vector<std::uint8_t>& word, int alphabet, std::size_t span)
    {
        word_table out;
        const std::size_t len = std::min(span, word.size());
        auto data = detail::cyclic_extension(word, len);
        std::vector<std::int32_t> classes;
        std::size_t count = 0;
        for (std::size_t l = 1; l <= len; ++l) {
            auto t = detail::refine_factor_classes(data, word.size(), alphabet, classes, count, l);
            for (std::size_t i = 0; i < t.positions.size(); ++i) {
                std::string key(data.begin() + static_cast<std::ptrdiff_t>(t.positions[i]),
                                data.begin() + static_cast<std::ptrdiff_t>(t.positions[i] + l));
                out[key] = t.freqs[i];
            }
        }
        return out;
    }

    static double table_gap(const word_table& a, const word_table& b)
    {
        double gap = 0.0;
        for (const auto& [w, f] : a) {
            auto it = b.find(w);
            gap = std::max(gap, std::abs(f - (it == b.end() ? 0.0 : it->second)));
        }
        for (const auto& [w, f] : b) {
            if (!a.contains(w)) {
                gap = std::max(gap, f);
            }
        }
        return gap;
    }

    void build() const
    {
        const int step = power_ * ((2 + power_ - 1) / power_);
        std::vector<std::uint8_t> current{start_};
        int level = 0;
        while (current.size() < opts_.min_length) {
            current = apply(std::move(current), power_);
            level += power_;
        }
        auto current_words = short_words(current, alphabet_size(), opts_.stabilization_span);
        stats_.gap = 1.0;
        for (;;) {
            auto next = apply(current, step);
            if (next.size() > opts_.max_length) {
                break;
            }
            auto next_words = short_words(next, alphabet_size(), opts_.stabilization_span);
            stats_.gap = table_gap(current_words, next_words);
            current = std::move(next);
            current_words = std::move(next_words);
            level += step;
            if (stats_.gap < opts_.stabilization_tolerance) {
                stats_.converged = true;
                break;
            }
        }
        stats_.level = level;
        stats_.length = current.size();
        data_ = detail::cyclic_extension(current, opts_.tail);
    }

    std::vector<std::vector<std::uint8_t>> rules_;
    substitution_options opts_;
    std::uint8_t start_ = 0;
    int power_ = 1;

    mutable std::once_flag built_;
    mutable stabilization stats_;
    mutable std::vector<std::uint8_t> data_;

    mutable std::mutex mutex_;
    mutable std::vector<std::int32_t> classes_;
    mutable std::size_t class_count_ = 0;
    mutable std::vector<std::shared_ptr<const factor_table>> tables_;
    mutable std::shared_ptr<const std::vector<std::uint8_t>> prefix_;
};

} // namespace mpsens

#endif // MPSENS_DETAIL_SUBSTITUTION_HPP
