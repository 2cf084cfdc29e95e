#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "gather/set_family.hpp"

namespace gather {

// ---------------------------------------------------------------------------
// Strong k-selectors

struct StrongSelector {
    std::size_t k = 1;
    SetFamily family;
    Verification verified;
    double multiplier = 1.0;  // size multiplier actually used
    std::uint64_t seed = 0;

    std::size_t n() const { return family.n(); }
    std::size_t m() const { return family.m(); }
};

struct SelectorWitness {
    std::vector<Label> A;
    Label a = kNoLabel;
};

struct SelectorCheck {
    bool ok = true;
    std::optional<SelectorWitness> witness;
    Verification mode;
};

inline std::uint64_t selector_length(std::size_t n, std::size_t k, double multiplier) {
    const double raw = std::ceil(multiplier * static_cast<double>(k) * static_cast<double>(k) * math::log2n(n) - 1e-9);
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::max(raw, 0.0)));
}

inline bool exhaustive_feasible(std::size_t n, std::size_t k, std::size_t m) {
    const std::uint64_t c = math::binomial(n, k);
    return c != 0 && c <= kExhaustiveBudget / std::max<std::size_t>(m, 1);
}

namespace detail {

// Incremental isolation checker: cnt[i] = |S_i ∩ A| for the current A.
class IsolationCounter {
public:
    explicit IsolationCounter(const SetFamily& f) : f_(f), cnt_(f.m(), 0) {}
    void add(Label x) {
        for (auto i : f_.incidence(x))
            ++cnt_[i];
    }
    void remove(Label x) {
        for (auto i : f_.incidence(x))
            --cnt_[i];
    }
    // Number of sets S_i with S_i ∩ A = {a}, given a ∈ A.
    std::uint32_t hits(Label a) const {
        std::uint32_t h = 0;
        for (auto i : f_.incidence(a))
            h += cnt_[i] == 1;
        return h;
    }
    bool isolated(Label a) const {
        for (auto i : f_.incidence(a))
            if (cnt_[i] == 1)
                return true;
        return false;
    }

private:
    const SetFamily& f_;
    std::vector<std::uint32_t> cnt_;
};

}  // namespace detail

// Checks that every a in every A (|A| = k, or every 1 <= |A| <= k when
// all_sizes is set) is isolated by some set. Returns the first violation.
inline SelectorCheck verify_strong_selector(const SetFamily& f, std::size_t k, VerifyMode mode = VerifyMode::Auto,
                                            std::uint64_t trials = kMinSampledTrials, std::uint64_t seed = 0,
                                            bool all_sizes = false) {
    SelectorCheck out;
    const std::size_t n = f.n();
    if (k == 0 || k > n)
        throw ConfigError("selector parameter k must lie in [1, n]");
    detail::IsolationCounter ctr(f);
    const bool exhaustive =
        mode == VerifyMode::Exhaustive || (mode == VerifyMode::Auto && exhaustive_feasible(n, k, f.m()));
    auto check = [&](const std::vector<Label>& A) {
        for (Label a : A)
            if (!ctr.isolated(a)) {
                out.ok = false;
                out.witness = SelectorWitness{A, a};
                return false;
            }
        return true;
    };
    if (exhaustive) {
        out.mode.kind = Verification::Kind::Exhaustive;
        enumerate_subsets(
            n, all_sizes ? 1 : k, k, [&](Label x) { ctr.add(x); }, [&](Label x) { ctr.remove(x); },
            [&](const std::vector<Label>& A) {
                ++out.mode.trials;
                return A.size() != k && !all_sizes ? true : check(A);
            });
    } else {
        out.mode.kind = Verification::Kind::Sampled;
        Rng rng(derive_seed(seed, "verify-strong", n, k));
        for (std::uint64_t t = 0; t < trials && out.ok; ++t) {
            const std::size_t size = all_sizes ? 1 + rng.below(k) : k;
            auto A = rng.subset(n, size);
            for (Label x : A)
                ctr.add(x);
            ++out.mode.trials;
            check(A);
            for (Label x : A)
                ctr.remove(x);
        }
    }
    return out;
}

struct BuildOptions {
    VerifyMode mode = VerifyMode::Auto;
    std::uint64_t sampled_trials = kMinSampledTrials;
    unsigned max_doublings = 6;
};

// One random candidate: selector_length(n, k, mult) sets, each label joining
// with probability 1/k.
inline SetFamily strong_selector_candidate(std::size_t n, std::size_t k, double mult, std::uint64_t seed,
                                           unsigned attempt) {
    Rng rng(derive_seed(seed, "strong", n * 1000003 + k, attempt));
    return SetFamily(n, random_sets(selector_length(n, k, mult), n, static_cast<double>(k), rng));
}

// Random construction with inclusion probability 1/k, verified; the size
// multiplier doubles on each failed attempt.
inline StrongSelector build_strong_selector(std::size_t n, std::size_t k, double multiplier, std::uint64_t seed,
                                            const BuildOptions& opt = {}) {
    if (n == 0 || k == 0 || k > n)
        throw ConfigError("strong selector needs 1 <= k <= n");
    if (!(multiplier > 0))
        throw ConfigError("size multiplier must be positive");
    double mult = multiplier;
    for (unsigned attempt = 0; attempt <= opt.max_doublings; ++attempt, mult *= 2) {
        SetFamily fam = strong_selector_candidate(n, k, mult, seed, attempt);
        auto res = verify_strong_selector(fam, k, opt.mode, opt.sampled_trials, seed);
        if (res.ok)
            return StrongSelector{k, std::move(fam), res.mode, mult, seed};
    }
    throw ConstructionFailed("no strong " + std::to_string(k) + "-selector over " + std::to_string(n) +
                             " labels after " + std::to_string(opt.max_doublings) + " doublings");
}

// ---------------------------------------------------------------------------
// Amortizing selector families

// Rows i = 0..s-1, levels j = 1, 2, 4, ..., k. Stored by level and label:
// rows(level, v) lists the rows i with v in S_{ij}.
class AmortizingFamily {
public:
    AmortizingFamily() = default;
    AmortizingFamily(std::size_t n, std::size_t k, std::size_t s)
        : n_(n), k_(k), s_(s), levels_(math::floor_log2(k) + 1), rows_(levels_, std::vector<std::vector<std::uint32_t>>(n)) {}

    std::size_t n() const noexcept { return n_; }
    std::size_t k() const noexcept { return k_; }
    std::size_t s() const noexcept { return s_; }
    std::size_t level_count() const noexcept { return levels_; }
    static std::size_t level_value(std::size_t lvl) { return std::size_t{1} << lvl; }

    const std::vector<std::uint32_t>& rows(std::size_t lvl, Label v) const { return rows_[lvl][v]; }
    std::vector<std::uint32_t>& mutable_rows(std::size_t lvl, Label v) { return rows_[lvl][v]; }

    bool contains(std::size_t row, std::size_t lvl, Label v) const {
        const auto& r = rows_[lvl][v];
        return std::binary_search(r.begin(), r.end(), static_cast<std::uint32_t>(row));
    }

    // Sets S_{i, 2^lvl} for all rows i.
    std::vector<std::vector<Label>> sets_at(std::size_t lvl) const {
        std::vector<std::vector<Label>> out(s_);
        for (Label v = 0; v < n_; ++v)
            for (auto i : rows_[lvl][v])
                out[i].push_back(v);
        return out;
    }

    Rational measured_rate;
    Verification verified;
    double inclusion_scale = 2.0;
    std::uint64_t seed = 0;

    friend bool operator==(const AmortizingFamily& a, const AmortizingFamily& b) {
        return a.n_ == b.n_ && a.k_ == b.k_ && a.s_ == b.s_ && a.rows_ == b.rows_;
    }

private:
    std::size_t n_ = 0, k_ = 0, s_ = 0, levels_ = 0;
    std::vector<std::vector<std::vector<std::uint32_t>>> rows_;
};

struct RateReport {
    Rational rate;
    Verification mode;
    // Minimizing triple.
    std::size_t level = 0;
    std::vector<Label> A;
    Label v = kNoLabel;
};

namespace detail {

inline std::vector<std::uint32_t> merge_rows(std::initializer_list<const std::vector<std::uint32_t>*> lists) {
    std::vector<std::uint32_t> out;
    for (auto* l : lists)
        out.insert(out.end(), l->begin(), l->end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

inline bool amortizing_exhaustive_feasible(std::size_t n, std::size_t k, std::size_t s) {
    std::uint64_t total = 0;
    for (std::size_t j = 1; j <= k / 2; j *= 2) {
        const std::uint64_t c = math::binomial(n, std::min(n, 2 * j));
        if (c == 0 || c > kExhaustiveBudget / std::max<std::size_t>(s, 1))
            return false;
        total += c * s;
        if (total > kExhaustiveBudget)
            return false;
    }
    return true;
}

}  // namespace detail

// Minimum over certified levels j <= k/2, sets A with j/2 <= |A| <= 2j and
// v in A of count * |A| / s, where count is the number of rows i with
// v in S_ij and A ∩ (S_{i,j/2} ∪ S_ij ∪ S_{i,2j}) = {v}; S_{i,1/2} is empty.
inline RateReport verify_amortizing_rate(const AmortizingFamily& f, VerifyMode mode = VerifyMode::Auto,
                                         std::uint64_t trials = kMinSampledTrials, std::uint64_t seed = 0) {
    RateReport rep;
    const std::size_t n = f.n(), s = f.s();
    bool first = true;
    const bool exhaustive = mode == VerifyMode::Exhaustive ||
                            (mode == VerifyMode::Auto && detail::amortizing_exhaustive_feasible(n, f.k(), s));
    rep.mode.kind = exhaustive ? Verification::Kind::Exhaustive : Verification::Kind::Sampled;
    const std::size_t certified = f.k() >= 2 ? f.level_count() - 1 : 0;
    const std::vector<std::uint32_t> none;
    Rng rng(derive_seed(seed, "verify-amortizing", n, f.k()));

    for (std::size_t lvl = 0; lvl < certified; ++lvl) {
        const std::size_t j = AmortizingFamily::level_value(lvl);
        std::vector<std::vector<std::uint32_t>> uni(n);
        for (Label v = 0; v < n; ++v)
            uni[v] = detail::merge_rows({lvl ? &f.rows(lvl - 1, v) : &none, &f.rows(lvl, v), &f.rows(lvl + 1, v)});
        std::vector<std::uint32_t> cnt(s, 0);
        auto add = [&](Label x) {
            for (auto i : uni[x])
                ++cnt[i];
        };
        auto remove = [&](Label x) {
            for (auto i : uni[x])
                --cnt[i];
        };
        auto visit = [&](const std::vector<Label>& A) {
            ++rep.mode.trials;
            for (Label v : A) {
                std::uint64_t count = 0;
                for (auto i : f.rows(lvl, v))
                    count += cnt[i] == 1;
                Rational r{count * A.size(), s};
                if (first || r < rep.rate) {
                    first = false;
                    rep.rate = r;
                    rep.level = j;
                    rep.A = A;
                    rep.v = v;
                }
            }
            return true;
        };
        const std::size_t lo = std::max<std::size_t>(1, (j + 1) / 2);
        const std::size_t hi = std::min(n, 2 * j);
        if (lo > hi)
            continue;
        if (exhaustive) {
            enumerate_subsets(n, lo, hi, add, remove, visit);
        } else {
            const std::uint64_t per_level = std::max<std::uint64_t>(1, trials / certified);
            for (std::uint64_t t = 0; t < per_level; ++t) {
                auto A = rng.subset(n, lo + rng.below(hi - lo + 1));
                for (Label x : A)
                    add(x);
                visit(A);
                for (Label x : A)
                    remove(x);
            }
        }
    }
    if (first)
        rep.rate = Rational{0, 1};
    return rep;
}

// Random construction: v joins S_ij with probability 1/(scale * j). The
// measured rate is computed and stored; a low rate is not an error.
inline AmortizingFamily build_amortizing_family(std::size_t n, std::size_t k, std::size_t s, std::uint64_t seed,
                                                double scale = 2.0, VerifyMode mode = VerifyMode::Auto,
                                                bool measure = true) {
    if (k < 2 || (k & (k - 1)) != 0)
        throw ConfigError("amortizing top level k must be a power of two >= 2");
    if (s < 1 || n < 1)
        throw ConfigError("amortizing family needs n >= 1 and s >= 1");
    AmortizingFamily f(n, k, s);
    f.inclusion_scale = scale;
    f.seed = seed;
    for (std::size_t lvl = 0; lvl < f.level_count(); ++lvl) {
        const std::size_t j = AmortizingFamily::level_value(lvl);
        Rng rng(derive_seed(seed, "amortizing", n * 1000003 + k, s * 64 + lvl));
        auto sets = random_sets(s, n, scale * static_cast<double>(j), rng);
        for (std::uint32_t i = 0; i < s; ++i)
            for (Label v : sets[i])
                f.mutable_rows(lvl, v).push_back(i);
    }
    if (measure) {
        auto rep = verify_amortizing_rate(f, mode, kMinSampledTrials, seed);
        f.measured_rate = rep.rate;
        f.verified = rep.mode;
    }
    return f;
}

}  // namespace gather
