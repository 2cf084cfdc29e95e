#include <gtest/gtest.h>

#include <bit>
#include <set>

#include "gather/label_set.hpp"
#include "gather/selectors.hpp"

using namespace gather;

namespace {

// Oracle: scan every set for an intersection with A equal to {a}.
bool isolated_naive(const SetFamily& f, const std::vector<Label>& A, Label a) {
    for (std::size_t i = 0; i < f.m(); ++i) {
        std::size_t inter = 0;
        bool has_a = false;
        for (Label x : A)
            if (f.contains(i, x)) {
                ++inter;
                has_a |= x == a;
            }
        if (has_a && inter == 1)
            return true;
    }
    return false;
}

// Oracle: first violating (A, a) over |A| = k in lexicographic order, by bitmask.
std::optional<SelectorWitness> brute_force_selector(const SetFamily& f, std::size_t k) {
    const std::size_t n = f.n();
    std::vector<std::vector<Label>> subsets;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) != k)
            continue;
        std::vector<Label> A;
        for (Label x = 0; x < n; ++x)
            if (mask >> x & 1)
                A.push_back(x);
        subsets.push_back(A);
    }
    std::sort(subsets.begin(), subsets.end());
    for (const auto& A : subsets)
        for (Label a : A)
            if (!isolated_naive(f, A, a))
                return SelectorWitness{A, a};
    return std::nullopt;
}

// Oracle for the amortizing rate: membership checks only, no incidence lists.
Rational naive_rate(const AmortizingFamily& f) {
    const std::size_t n = f.n();
    bool first = true;
    Rational best{0, 1};
    for (std::size_t lvl = 0; lvl + 1 < f.level_count(); ++lvl) {
        const std::size_t j = std::size_t{1} << lvl;
        for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
            const std::size_t sz = std::popcount(mask);
            if (sz < std::max<std::size_t>(1, (j + 1) / 2) || sz > 2 * j)
                continue;
            for (Label v = 0; v < n; ++v) {
                if (!(mask >> v & 1))
                    continue;
                std::uint64_t count = 0;
                for (std::size_t i = 0; i < f.s(); ++i) {
                    if (!f.contains(i, lvl, v))
                        continue;
                    bool clean = true;
                    for (Label u = 0; u < n && clean; ++u) {
                        if (u == v || !(mask >> u & 1))
                            continue;
                        clean = !((lvl && f.contains(i, lvl - 1, u)) || f.contains(i, lvl, u) ||
                                  f.contains(i, lvl + 1, u));
                    }
                    count += clean;
                }
                Rational r{count * sz, f.s()};
                if (first || r < best) {
                    best = r;
                    first = false;
                }
            }
        }
    }
    return best;
}

}  // namespace

TEST(StrongSelector, TrivialAndBits) {
    SetFamily two(2, {{0}, {1}});
    EXPECT_TRUE(verify_strong_selector(two, 1).ok);
    // For k = 2 over 4 labels, the bit sets and their complements isolate.
    SetFamily bits(4, {{1, 3}, {2, 3}, {0, 2}, {0, 1}});
    auto r = verify_strong_selector(bits, 2, VerifyMode::Exhaustive);
    EXPECT_TRUE(r.ok);
    EXPECT_EQ(r.mode.kind, Verification::Kind::Exhaustive);
    EXPECT_FALSE(brute_force_selector(bits, 2));
}

TEST(StrongSelector, WitnessForNonSelector) {
    SetFamily f(2, {{0, 1}});
    auto r = verify_strong_selector(f, 2, VerifyMode::Exhaustive);
    ASSERT_FALSE(r.ok);
    ASSERT_TRUE(r.witness);
    EXPECT_EQ(r.witness->A, (std::vector<Label>{0, 1}));
    EXPECT_EQ(r.witness->a, 0u);
}

TEST(StrongSelector, BuiltN8K3Exhaustive) {
    auto s = build_strong_selector(8, 3, 1.0, 1);
    EXPECT_EQ(s.verified.kind, Verification::Kind::Exhaustive);
    EXPECT_EQ(s.verified.trials, math::binomial(8, 3));
    EXPECT_FALSE(brute_force_selector(s.family, 3));
    EXPECT_GE(s.m(), selector_length(8, 3, 1.0));
}

TEST(StrongSelector, AgreesWithOracleOnRandomFamilies) {
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        const std::size_t n = 6 + seed % 5, k = 1 + seed % 4;
        auto fam = strong_selector_candidate(n, k, 0.5, seed, 0);
        auto fast = verify_strong_selector(fam, k, VerifyMode::Exhaustive);
        auto slow = brute_force_selector(fam, k);
        ASSERT_EQ(fast.ok, !slow.has_value()) << "seed " << seed;
        if (slow) {
            EXPECT_EQ(fast.witness->A, slow->A);
            EXPECT_EQ(fast.witness->a, slow->a);
        }
    }
}

TEST(StrongSelector, SmallerSetsAlsoIsolated) {
    // A strong k-selector isolates inside every nonempty A with |A| <= k.
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto s = build_strong_selector(10, 3, 1.0, seed);
        auto all = verify_strong_selector(s.family, 3, VerifyMode::Exhaustive, 0, 0, true);
        EXPECT_TRUE(all.ok);
        EXPECT_EQ(all.mode.trials, 10u + 45u + 120u);
    }
}

TEST(StrongSelector, SampledMode) {
    auto s = build_strong_selector(64, 4, 1.0, 9, {VerifyMode::Sampled, 5000, 6});
    EXPECT_EQ(s.verified.kind, Verification::Kind::Sampled);
    EXPECT_EQ(s.verified.trials, 5000u);
}

TEST(StrongSelector, DeterministicAndRejectsBadArgs) {
    EXPECT_EQ(build_strong_selector(12, 3, 1.0, 4).family, build_strong_selector(12, 3, 1.0, 4).family);
    EXPECT_THROW(build_strong_selector(4, 5, 1.0, 1), ConfigError);
    EXPECT_THROW(build_strong_selector(4, 0, 1.0, 1), ConfigError);
    EXPECT_THROW(build_strong_selector(4, 2, 0.0, 1), ConfigError);
}

TEST(StrongSelector, ConstructionFailsWhenTooShort) {
    EXPECT_THROW(build_strong_selector(16, 4, 0.01, 1, {VerifyMode::Exhaustive, 0, 0}), ConstructionFailed);
}

TEST(Amortizing, N8K4PositiveRate) {
    auto f = build_amortizing_family(8, 4, 2000, 3);
    EXPECT_EQ(f.level_count(), 3u);
    EXPECT_EQ(f.verified.kind, Verification::Kind::Exhaustive);
    EXPECT_GT(f.measured_rate.num, 0u);
    EXPECT_EQ(f.measured_rate, naive_rate(f));
}

TEST(Amortizing, RateMatchesOracle) {
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
        auto f = build_amortizing_family(7, seed % 2 ? 4 : 8, 40, seed);
        EXPECT_EQ(verify_amortizing_rate(f, VerifyMode::Exhaustive).rate, naive_rate(f)) << seed;
    }
}

TEST(Amortizing, FullSetsGiveZeroRate) {
    AmortizingFamily f(4, 4, 3);
    for (std::size_t l = 0; l < f.level_count(); ++l)
        for (Label v = 0; v < 4; ++v)
            f.mutable_rows(l, v) = {0, 1, 2};
    auto r = verify_amortizing_rate(f, VerifyMode::Exhaustive);
    EXPECT_EQ(r.rate.num, 0u);
    EXPECT_EQ(r.A.size(), 2u);
}

TEST(Amortizing, SingletonAtLevelOne) {
    // Only v0 is ever included, and only at level 1: every A = {v0} is hit by each row.
    AmortizingFamily f(3, 2, 5);
    f.mutable_rows(0, 0) = {0, 1, 2, 3, 4};
    auto r = verify_amortizing_rate(f, VerifyMode::Exhaustive);
    EXPECT_EQ(r.rate.num, 0u);
    EXPECT_EQ(r.v, 1u);
    EXPECT_EQ(r.rate, naive_rate(f));
}

TEST(Amortizing, DeterministicAndRejectsBadK) {
    EXPECT_EQ(build_amortizing_family(10, 4, 50, 2), build_amortizing_family(10, 4, 50, 2));
    EXPECT_THROW(build_amortizing_family(10, 3, 50, 2), ConfigError);
    EXPECT_THROW(build_amortizing_family(10, 1, 50, 2), ConfigError);
    EXPECT_THROW(build_amortizing_family(10, 4, 0, 2), ConfigError);
}

TEST(LabelSet, InsertEraseFindNext) {
    LabelSet s(10000);
    EXPECT_EQ(s.first(), kNoLabel);
    for (Label x : {5u, 63u, 64u, 4095u, 4096u, 9999u})
        EXPECT_TRUE(s.insert(x));
    EXPECT_FALSE(s.insert(64));
    EXPECT_EQ(s.size(), 6u);
    EXPECT_EQ(s.find_next(6), 63u);
    EXPECT_EQ(s.find_next(65), 4095u);
    EXPECT_EQ(s.find_next(4097), 9999u);
    EXPECT_TRUE(s.erase(4095));
    EXPECT_EQ(s.find_next(65), 4096u);
    EXPECT_EQ(s.to_vector(), (std::vector<Label>{5, 63, 64, 4096, 9999}));
    EXPECT_FALSE(s.contains(10000));
}

TEST(LabelSet, MatchesStdSet) {
    Rng rng(11);
    LabelSet s(5000);
    std::set<Label> ref;
    for (int i = 0; i < 20000; ++i) {
        Label x = static_cast<Label>(rng.below(5000));
        if (rng.below(2)) {
            EXPECT_EQ(s.insert(x), ref.insert(x).second);
        } else {
            EXPECT_EQ(s.erase(x), ref.erase(x) == 1);
        }
        Label q = static_cast<Label>(rng.below(5000));
        auto it = ref.lower_bound(q);
        EXPECT_EQ(s.find_next(q), it == ref.end() ? kNoLabel : *it);
    }
    EXPECT_EQ(s.size(), ref.size());
}
