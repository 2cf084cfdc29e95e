#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "gather/selectors.hpp"

namespace gather {

class NotMember : public Error {
public:
    using Error::Error;
};

class NoLevelFired : public Error {
public:
    using Error::Error;
};

// |Hits(a, A)|: number of sets S_j with S_j ∩ A = {a}.
inline std::uint64_t hits(Label a, const std::vector<Label>& A, const SetFamily& f) {
    if (std::find(A.begin(), A.end(), a) == A.end())
        throw NotMember("label " + std::to_string(a) + " is not in A");
    std::uint64_t h = 0;
    for (auto j : f.incidence(a)) {
        bool alone = true;
        for (Label u : A)
            if (u != a && f.contains(j, u)) {
                alone = false;
                break;
            }
        h += alone;
    }
    return h;
}

struct Distinguisher {
    std::size_t k = 1;
    SetFamily family;
    std::uint64_t xi = 0;
    // Calibration extremes: m1 = min hits over |A| = k, m2 = max over |A| = 2k.
    std::uint64_t m1 = 0, m2 = 0;
    Verification verified;
    double multiplier = 1.0;
    std::uint64_t seed = 0;

    std::size_t n() const { return family.n(); }
    std::size_t m() const { return family.m(); }
    std::int64_t gap() const { return static_cast<std::int64_t>(m1) - static_cast<std::int64_t>(m2); }
};

struct DistinguisherWitness {
    int condition = 1;  // 1 for (d1), 2 for (d2)
    std::vector<Label> A;
    Label a = kNoLabel;
    std::uint64_t hits = 0;
};

struct DistinguisherCheck {
    bool ok = true;
    std::optional<DistinguisherWitness> witness;
    Verification mode;
};

namespace detail {

// Calls f(A, a, hits) for every A of the given size (exhaustively or by
// sampling) and every a in A; f returns false to stop.
template <typename F>
Verification for_each_hit(const SetFamily& fam, std::size_t size, bool exhaustive, std::uint64_t trials,
                          std::uint64_t seed, F&& f) {
    Verification v;
    IsolationCounter ctr(fam);
    const std::size_t n = fam.n();
    auto visit = [&](const std::vector<Label>& A) {
        ++v.trials;
        for (Label a : A)
            if (!f(A, a, ctr.hits(a)))
                return false;
        return true;
    };
    if (exhaustive) {
        v.kind = Verification::Kind::Exhaustive;
        enumerate_subsets(n, size, size, [&](Label x) { ctr.add(x); }, [&](Label x) { ctr.remove(x); }, visit);
    } else {
        v.kind = Verification::Kind::Sampled;
        Rng rng(derive_seed(seed, "hits-sample", n, size));
        for (std::uint64_t t = 0; t < trials; ++t) {
            auto A = rng.subset(n, size);
            for (Label x : A)
                ctr.add(x);
            const bool go = visit(A);
            for (Label x : A)
                ctr.remove(x);
            if (!go)
                break;
        }
    }
    return v;
}

inline bool distinguisher_exhaustive_feasible(std::size_t n, std::size_t k, std::size_t m) {
    return exhaustive_feasible(n, k, m) && exhaustive_feasible(n, std::min(n, 2 * k), m);
}

}  // namespace detail

inline constexpr std::uint64_t kMinCalibrationSamples = 10'000;

// Checks (d1): hits > xi for all a in A, |A| = k; (d2): hits < xi for |A| = 2k.
inline DistinguisherCheck verify_distinguisher(const SetFamily& f, std::size_t k, std::uint64_t xi,
                                               VerifyMode mode = VerifyMode::Auto,
                                               std::uint64_t trials = kMinSampledTrials, std::uint64_t seed = 0) {
    DistinguisherCheck out;
    const bool ex = mode == VerifyMode::Exhaustive ||
                    (mode == VerifyMode::Auto && detail::distinguisher_exhaustive_feasible(f.n(), k, f.m()));
    auto v1 = detail::for_each_hit(f, k, ex, trials, derive_seed(seed, "d1"),
                                   [&](const std::vector<Label>& A, Label a, std::uint64_t h) {
                                       if (h > xi)
                                           return true;
                                       out.ok = false;
                                       out.witness = DistinguisherWitness{1, A, a, h};
                                       return false;
                                   });
    out.mode = v1;
    if (!out.ok || 2 * k > f.n())
        return out;
    auto v2 = detail::for_each_hit(f, 2 * k, ex, trials, derive_seed(seed, "d2"),
                                   [&](const std::vector<Label>& A, Label a, std::uint64_t h) {
                                       if (h < xi)
                                           return true;
                                       out.ok = false;
                                       out.witness = DistinguisherWitness{2, A, a, h};
                                       return false;
                                   });
    out.mode.trials += v2.trials;
    return out;
}

inline SetFamily distinguisher_candidate(std::size_t n, std::size_t k, double mult, std::uint64_t seed,
                                         unsigned attempt) {
    Rng rng(derive_seed(seed, "distinguisher", n * 1000003 + k, attempt));
    return SetFamily(n, random_sets(selector_length(n, k, mult), n, 2.0 * static_cast<double>(k), rng));
}

// Random construction with inclusion probability 1/(2k) and an empirically
// calibrated threshold; the multiplier doubles when the calibration gap is
// below 2 or verification fails.
inline Distinguisher build_distinguisher(std::size_t n, std::size_t k, double multiplier, std::uint64_t seed,
                                         const BuildOptions& opt = {}) {
    if (k < 1 || 2 * k > n)
        throw ConfigError("distinguisher needs 1 <= k <= n/2");
    if (!(multiplier > 0))
        throw ConfigError("size multiplier must be positive");
    double mult = multiplier;
    for (unsigned attempt = 0; attempt <= opt.max_doublings; ++attempt, mult *= 2) {
        SetFamily fam = distinguisher_candidate(n, k, mult, seed, attempt);
        const auto m = fam.m();
        const bool ex = opt.mode == VerifyMode::Exhaustive ||
                        (opt.mode == VerifyMode::Auto && detail::distinguisher_exhaustive_feasible(n, k, m));
        const std::uint64_t cal_seed = derive_seed(seed, "calibrate", attempt);
        std::uint64_t m1 = std::numeric_limits<std::uint64_t>::max(), m2 = 0;
        detail::for_each_hit(fam, k, ex, kMinCalibrationSamples, cal_seed, [&](auto&, Label, std::uint64_t h) {
            m1 = std::min(m1, h);
            return true;
        });
        detail::for_each_hit(fam, 2 * k, ex, kMinCalibrationSamples, cal_seed + 1, [&](auto&, Label, std::uint64_t h) {
            m2 = std::max(m2, h);
            return true;
        });
        if (m1 == std::numeric_limits<std::uint64_t>::max() || m1 < m2 + 2)
            continue;
        const std::uint64_t xi = (m1 + m2) / 2;
        auto res = verify_distinguisher(fam, k, xi, ex ? VerifyMode::Exhaustive : VerifyMode::Sampled,
                                        opt.sampled_trials, derive_seed(seed, "verify", attempt));
        if (res.ok)
            return Distinguisher{k, std::move(fam), xi, m1, m2, res.mode, mult, seed};
    }
    throw ConstructionFailed("no " + std::to_string(k) + "-distinguisher over " + std::to_string(n) +
                             " labels after " + std::to_string(opt.max_doublings) + " doublings");
}

// ---------------------------------------------------------------------------
// Cardinality estimators

struct CardinalityEstimator {
    double lambda = 0.5;
    std::vector<Distinguisher> levels;  // level i is a 2^i-distinguisher

    std::size_t top_level() const { return levels.empty() ? 0 : levels.size() - 1; }
    std::uint64_t total_length() const {
        std::uint64_t t = 0;
        for (const auto& d : levels)
            t += d.m();
        return t;
    }
    // Offset of level i inside the concatenated sequence.
    std::uint64_t offset(std::size_t i) const {
        std::uint64_t t = 0;
        for (std::size_t l = 0; l < i; ++l)
            t += levels[l].m();
        return t;
    }
};

inline std::size_t estimator_top_level(std::size_t n, double lambda) {
    return static_cast<std::size_t>(std::ceil(lambda * math::log2n(n) - 1e-9));
}

// Levels 0..top, where top = ceil(lambda * log2 n) unless given explicitly.
inline CardinalityEstimator build_estimator(std::size_t n, double lambda, std::uint64_t seed, double multiplier = 1.0,
                                            std::optional<std::size_t> top = std::nullopt,
                                            const BuildOptions& opt = {}) {
    if (!(lambda > 0 && lambda < 1) && !top)
        throw ConfigError("estimator lambda must lie in (0, 1)");
    const std::size_t I = top ? *top : estimator_top_level(n, lambda);
    if ((std::size_t{1} << I) * 2 > n)
        throw ConfigError("estimator top level 2^" + std::to_string(I) + " exceeds n/2");
    CardinalityEstimator est;
    est.lambda = lambda;
    for (std::size_t i = 0; i <= I; ++i)
        est.levels.push_back(build_distinguisher(n, std::size_t{1} << i, multiplier, derive_seed(seed, "level", i), opt));
    return est;
}

struct Interval {
    double lo = 0, hi = 0;  // open interval
    std::size_t i0 = 0;
    bool contains(double x) const { return lo < x && x < hi; }
};

// i0 = smallest level whose hit count exceeds its threshold; returns the open
// interval (2^(i0-1), 2^(i0+1)).
inline Interval estimate_cardinality(const std::vector<std::uint64_t>& hit_counts, const CardinalityEstimator& est) {
    if (hit_counts.size() != est.levels.size())
        throw ConfigError("one hit count per estimator level expected");
    for (std::size_t i = 0; i < hit_counts.size(); ++i)
        if (hit_counts[i] > est.levels[i].xi)
            return Interval{std::ldexp(1.0, static_cast<int>(i) - 1), std::ldexp(1.0, static_cast<int>(i) + 1), i};
    throw NoLevelFired("no estimator level exceeded its threshold");
}

struct EstimatorCheck {
    bool ok = true;
    std::uint64_t cases = 0;     // (A, a) pairs examined
    std::uint64_t failures = 0;
    std::string witness;         // first failure
};

// Exhaustive: every A with 1 <= |A| <= max_size and every a in A must get an
// interval containing |A| with hi/lo = 4.
inline EstimatorCheck verify_estimator(const CardinalityEstimator& est, std::size_t max_size) {
    EstimatorCheck out;
    if (est.levels.empty())
        throw ConfigError("estimator has no levels");
    const std::size_t n = est.levels.front().n();
    std::vector<detail::IsolationCounter> ctr;
    for (const auto& d : est.levels)
        ctr.emplace_back(d.family);
    std::vector<std::uint64_t> h(est.levels.size());
    auto fail = [&](const std::vector<Label>& A, Label a, const std::string& why) {
        out.ok = false;
        if (++out.failures == 1) {
            out.witness = "a=" + std::to_string(a) + " A={";
            for (std::size_t i = 0; i < A.size(); ++i)
                out.witness += (i ? "," : "") + std::to_string(A[i]);
            out.witness += "}: " + why;
        }
    };
    enumerate_subsets(
        n, 1, max_size,
        [&](Label x) {
            for (auto& c : ctr)
                c.add(x);
        },
        [&](Label x) {
            for (auto& c : ctr)
                c.remove(x);
        },
        [&](const std::vector<Label>& A) {
            for (Label a : A) {
                ++out.cases;
                for (std::size_t i = 0; i < ctr.size(); ++i)
                    h[i] = ctr[i].hits(a);
                try {
                    const auto iv = estimate_cardinality(h, est);
                    if (!iv.contains(static_cast<double>(A.size())))
                        fail(A, a, "interval misses |A|");
                    else if (iv.hi != 4 * iv.lo)
                        fail(A, a, "interval ratio is not 4");
                } catch (const NoLevelFired&) {
                    fail(A, a, "no level fired");
                }
            }
            return true;
        });
    return out;
}

}  // namespace gather
