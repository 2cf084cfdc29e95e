#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "gather/core.hpp"
#include "gather/rng.hpp"

namespace gather {

// Indexed family S_0..S_{m-1} of subsets of {0..n-1}, stored both by set and
// by label (incidence lists, sorted), so either direction is cheap.
class SetFamily {
public:
    SetFamily() = default;
    SetFamily(std::size_t n, std::vector<std::vector<Label>> sets) : n_(n), sets_(std::move(sets)) {
        incidence_.assign(n_, {});
        for (std::uint32_t i = 0; i < sets_.size(); ++i) {
            auto& s = sets_[i];
            std::sort(s.begin(), s.end());
            s.erase(std::unique(s.begin(), s.end()), s.end());
            for (Label v : s) {
                if (v >= n_)
                    throw ConfigError("set member " + std::to_string(v) + " outside label space " + std::to_string(n_));
                incidence_[v].push_back(i);
            }
        }
    }

    std::size_t n() const noexcept { return n_; }
    std::size_t m() const noexcept { return sets_.size(); }
    const std::vector<Label>& set(std::size_t i) const { return sets_[i]; }
    const std::vector<std::vector<Label>>& sets() const noexcept { return sets_; }
    // Indices of the sets containing v, increasing.
    const std::vector<std::uint32_t>& incidence(Label v) const { return incidence_[v]; }

    bool contains(std::size_t i, Label v) const {
        const auto& s = sets_[i];
        return std::binary_search(s.begin(), s.end(), v);
    }

    friend bool operator==(const SetFamily& a, const SetFamily& b) { return a.n_ == b.n_ && a.sets_ == b.sets_; }

private:
    std::size_t n_ = 0;
    std::vector<std::vector<Label>> sets_;
    std::vector<std::vector<std::uint32_t>> incidence_;
};

// Fills `rows` sets over n labels, each label joining each set with
// probability 1/denominator, walking the rows x labels grid with geometric
// skips so the cost is proportional to the number of memberships.
inline std::vector<std::vector<Label>> random_sets(std::size_t rows, std::size_t n, double denominator, Rng& rng) {
    std::vector<std::vector<Label>> sets(rows);
    if (denominator <= 1.0) {
        for (auto& s : sets) {
            s.resize(n);
            for (Label v = 0; v < n; ++v)
                s[v] = v;
        }
        return sets;
    }
    const double log_q = std::log1p(-1.0 / denominator);
    const std::uint64_t total = static_cast<std::uint64_t>(rows) * n;
    std::uint64_t pos = 0;
    while (true) {
        // uniform in (0,1]
        const double u = (static_cast<double>(rng.next() >> 11) + 1.0) * 0x1.0p-53;
        const double skip = std::floor(std::log(u) / log_q);
        if (skip >= static_cast<double>(total - pos))
            break;
        pos += static_cast<std::uint64_t>(skip);
        sets[pos / n].push_back(static_cast<Label>(pos % n));
        if (++pos >= total)
            break;
    }
    return sets;
}

// Depth-first enumeration of the subsets of {0..n-1} whose size lies in
// [lo, hi]. add/remove are called as elements enter and leave the current
// set; visit(A) is called on each subset of admissible size and returns false
// to stop. Returns false if stopped early.
template <typename Add, typename Remove, typename Visit>
bool enumerate_subsets(std::size_t n, std::size_t lo, std::size_t hi, Add&& add, Remove&& remove, Visit&& visit) {
    std::vector<Label> a;
    a.reserve(hi);
    std::function<bool(Label)> rec = [&](Label start) -> bool {
        if (a.size() >= lo && !a.empty() && !visit(static_cast<const std::vector<Label>&>(a)))
            return false;
        if (a.size() == hi)
            return true;
        // leave room for enough elements to reach lo
        const std::size_t need = lo > a.size() + 1 ? lo - a.size() - 1 : 0;
        for (Label x = start; x + need < n; ++x) {
            a.push_back(x);
            add(x);
            const bool go = rec(x + 1);
            remove(x);
            a.pop_back();
            if (!go)
                return false;
        }
        return true;
    };
    return rec(0);
}

// Elementary-work cap under which verification is exhaustive.
inline constexpr std::uint64_t kExhaustiveBudget = 100'000'000;
inline constexpr std::uint64_t kMinSampledTrials = 100'000;

enum class VerifyMode { Auto, Exhaustive, Sampled };

struct Verification {
    enum class Kind { Unverified, Exhaustive, Sampled };
    Kind kind = Kind::Unverified;
    std::uint64_t trials = 0;  // subsets examined
};

inline std::string to_string(const Verification& v) {
    switch (v.kind) {
    case Verification::Kind::Exhaustive: return "exhaustive";
    case Verification::Kind::Sampled: return "sampled(" + std::to_string(v.trials) + ")";
    default: return "unverified";
    }
}

// Exact rational with 64-bit parts; only compared and printed.
struct Rational {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    double value() const { return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0; }
    friend bool operator<(const Rational& a, const Rational& b) {
        return static_cast<unsigned __int128>(a.num) * b.den < static_cast<unsigned __int128>(b.num) * a.den;
    }
    friend bool operator==(const Rational& a, const Rational& b) {
        return static_cast<unsigned __int128>(a.num) * b.den == static_cast<unsigned __int128>(b.num) * a.den;
    }
};

}  // namespace gather
