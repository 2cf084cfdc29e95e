#pragma once

#include <memory>
#include <string>
#include <vector>

#include "gather/distinguishers.hpp"
#include "gather/selectors.hpp"
#include "gather/tree.hpp"

namespace gather {

// Which half-duplex transforms to apply.
struct Transforms {
    bool selector_swap = false;  // epoch-1 selector parameter K -> K+1
    bool parity_sync = false;    // all-transmit parts run with path parity
    bool any() const { return selector_swap || parity_sync; }
    static Transforms half_duplex() { return {true, true}; }
};

// A run of stages in which nodes of a size band act by their gamma-height:
// part 1 repeats a strong selector, part 2 is a rumor round-robin.
struct SelectorEpoch {
    std::uint64_t gamma = 2;       // heights are gamma-heights within {size >= member_threshold}
    std::uint64_t member_threshold = 1;
    std::uint64_t active_below = 1;  // active iff member_threshold <= size < active_below
    std::uint32_t stages = 0;
    std::uint64_t iterations = 0;
    std::shared_ptr<const StrongSelector> selector;
    Step start = 0;
    std::size_t n = 0;

    std::uint64_t m() const { return selector ? selector->m() : 0; }
    Step part1() const { return static_cast<Step>(iterations * m()); }
    Step stage_length() const { return part1() + static_cast<Step>(n); }
    Step stage_start(std::uint32_t h) const { return start + static_cast<Step>(h) * stage_length(); }
    Step length() const { return stages == 0 ? 0 : static_cast<Step>(stages) * stage_length(); }
    Step end() const { return start + length(); }
};

// Stages over {size >= threshold} by 2-height: all-transmit, then rumor
// round-robin. With parity, each stage is control round, distance pass,
// doubled all-transmit, rumor round-robin.
struct PipelineEpoch {
    std::uint64_t threshold = 1;
    std::uint32_t stages = 0;
    bool parity = false;
    Step start = 0;
    std::size_t n = 0;

    Step stage_length() const { return static_cast<Step>((parity ? 5 : 2) * n); }
    Step stage_start(std::uint32_t g) const { return start + static_cast<Step>(g) * stage_length(); }
    Step length() const { return static_cast<Step>(stages) * stage_length(); }
    Step end() const { return start + length(); }
};

struct Boundary {
    std::string what;
    Step start = 0;
    Step end = 0;
};

inline void append_boundaries(std::vector<Boundary>& out, const std::string& tag, const SelectorEpoch& e) {
    for (std::uint32_t h = 0; h < e.stages; ++h) {
        const Step s = e.stage_start(h);
        out.push_back({tag + " stage " + std::to_string(h) + " selector", s, s + e.part1()});
        out.push_back({tag + " stage " + std::to_string(h) + " rumor-rr", s + e.part1(), s + e.stage_length()});
    }
}

inline void append_boundaries(std::vector<Boundary>& out, const std::string& tag, const PipelineEpoch& e) {
    const Step n = static_cast<Step>(e.n);
    for (std::uint32_t g = 0; g < e.stages; ++g) {
        const Step s = e.stage_start(g);
        const std::string st = tag + " stage " + std::to_string(g);
        if (e.parity) {
            out.push_back({st + " control", s, s + n});
            out.push_back({st + " distance", s + n, s + 2 * n});
            out.push_back({st + " parity-transmit", s + 2 * n, s + 4 * n});
            out.push_back({st + " rumor-rr", s + 4 * n, s + 5 * n});
        } else {
            out.push_back({st + " all-transmit", s, s + n});
            out.push_back({st + " rumor-rr", s + n, s + 2 * n});
        }
    }
}

// ---------------------------------------------------------------------------
// SimpleGather

inline std::uint64_t simple_gather_K(std::size_t n) {
    const auto r = static_cast<unsigned>(std::floor(std::sqrt(math::log2n(n)) + 1e-12));
    return std::max<std::uint64_t>(2, std::uint64_t{1} << r);
}

// Selector parameter actually used in epoch 1 (K, or K+1 under swap), clamped to n.
inline std::size_t selector_parameter(std::size_t n, std::uint64_t K, const Transforms& tr) {
    return static_cast<std::size_t>(std::min<std::uint64_t>(n, K + (tr.selector_swap ? 1 : 0)));
}

struct SimpleGatherPlan {
    std::size_t n = 1;
    std::uint64_t K = 2;
    std::uint32_t D = 0, Dp = 0;
    SelectorEpoch epoch1;
    PipelineEpoch epoch2;
    Step total() const { return epoch2.end(); }
};

inline SimpleGatherPlan simple_gather_plan(std::size_t n, std::uint64_t K, std::shared_ptr<const StrongSelector> sel,
                                           const Transforms& tr) {
    if (!sel || sel->n() != n)
        throw ConfigError("selector must be built over the tree's label space");
    SimpleGatherPlan p;
    p.n = n;
    p.K = K;
    p.D = math::ceil_log(K, n);
    p.Dp = math::ceil_log2(math::ipow_sat(K, 3));
    const std::uint64_t K3 = math::ipow_sat(K, 3);
    p.epoch1.gamma = K;
    p.epoch1.member_threshold = 1;
    p.epoch1.active_below = heavy_threshold(n, K);
    p.epoch1.stages = p.D + 1;
    p.epoch1.iterations = (n + K3 - 1) / K3;
    p.epoch1.selector = std::move(sel);
    p.epoch1.start = 0;
    p.epoch1.n = n;
    p.epoch2.threshold = heavy_threshold(n, K);
    p.epoch2.stages = p.Dp + 1;
    p.epoch2.parity = tr.parity_sync;
    p.epoch2.start = p.epoch1.end();
    p.epoch2.n = n;
    return p;
}

// ---------------------------------------------------------------------------
// FastGather

struct FastGatherPlan {
    std::size_t n = 1;
    Ladder ladder;
    std::vector<SelectorEpoch> epochs;  // epochs 1..L
    std::vector<std::uint32_t> D;       // D_l per epoch (before the +1 for stages)
    std::uint32_t Dp = 0;
    PipelineEpoch last;
    Step total() const { return last.end(); }
};

// Stage-count bound per epoch: D_1 = ceil(log_{K_1} n), D_l = ceil(3 log_{K_l} K_{l-1}) + 1, capped at 3 beta + 2.
inline std::uint32_t fast_gather_D(const Ladder& lad, std::uint32_t l) {
    std::uint32_t d;
    if (l == 1)
        d = math::ceil_log(lad.K[1], lad.n);
    else
        d = math::ceil_log(lad.K[l], math::ipow_sat(lad.K[l - 1], 3)) + 1;
    return std::min<std::uint32_t>(d, 3 * lad.beta + 2);
}

// Epoch l is empty exactly when floor(n / K_l^3) = 0: then T^(l) = T.
inline bool fast_gather_epoch_empty(const Ladder& lad, std::uint32_t l) { return lad.threshold[l] <= 1; }

// selectors[l-1] is the strong selector for epoch l (may be null for empty epochs).
inline FastGatherPlan fast_gather_plan(std::size_t n, std::uint32_t beta,
                                       const std::vector<std::shared_ptr<const StrongSelector>>& selectors,
                                       const Transforms& tr) {
    FastGatherPlan p;
    p.n = n;
    p.ladder = ladder_params(n, beta);
    const auto& lad = p.ladder;
    Step t = 0;
    for (std::uint32_t l = 1; l <= lad.L; ++l) {
        SelectorEpoch e;
        e.n = n;
        e.gamma = lad.K[l];
        e.member_threshold = lad.threshold[l - 1];
        e.active_below = lad.threshold[l];
        const std::uint64_t K3 = math::ipow_sat(lad.K[l], 3);
        e.iterations = (n + K3 - 1) / K3;
        e.start = t;
        const std::uint32_t d = fast_gather_D(lad, l);
        p.D.push_back(d);
        if (!fast_gather_epoch_empty(lad, l)) {
            if (l - 1 >= selectors.size() || !selectors[l - 1] || selectors[l - 1]->n() != n)
                throw ConfigError("missing selector for epoch " + std::to_string(l));
            e.selector = selectors[l - 1];
            e.stages = d + 1;
        }
        t = e.end();
        p.epochs.push_back(e);
    }
    p.Dp = lad.L == 0 ? math::ceil_log2(n) : math::ceil_log2(math::ipow_sat(lad.K[lad.L], 3));
    p.last.n = n;
    p.last.threshold = lad.threshold[lad.L];
    p.last.stages = p.Dp + 1;
    p.last.parity = tr.parity_sync;
    p.last.start = t;
    return p;
}

// Selector parameter per epoch l = 1..L (0 for empty epochs).
inline std::vector<std::size_t> fast_gather_selector_parameters(std::size_t n, std::uint32_t beta, const Transforms& tr) {
    const auto lad = ladder_params(n, beta);
    std::vector<std::size_t> ks;
    for (std::uint32_t l = 1; l <= lad.L; ++l)
        ks.push_back(fast_gather_epoch_empty(lad, l) ? 0 : selector_parameter(n, lad.K[l], tr));
    return ks;
}

// ---------------------------------------------------------------------------
// LinGather

struct LinGatherOptions {
    double delta = 0.07;
    double selector_multiplier = 1.0;
    double estimator_multiplier = 1.0;
    std::optional<std::size_t> rows;  // amortizing rows s; default K^8
    std::uint64_t seed = 1;
};

inline std::uint64_t lin_gather_K(std::size_t n, double delta) {
    const double x = std::pow(static_cast<double>(n), delta);
    return std::max<std::uint64_t>(2, static_cast<std::uint64_t>(std::ceil(x - 1e-9)));
}

struct LinGatherPlan {
    std::size_t n = 1;
    double delta = 0;
    std::uint64_t K = 2;
    std::uint32_t D = 0;
    SelectorEpoch epoch1;
    std::shared_ptr<const CardinalityEstimator> estimator;
    std::shared_ptr<const AmortizingFamily> amortizing;
    Step epoch2_start = 0;
    std::uint64_t D1 = 0;  // estimator length (even steps)
    std::uint64_t s = 0;   // amortizing rows (even steps)

    Step stage_length() const { return static_cast<Step>(2 * (D1 + s)); }
};

// Amortizing top level: 2K^3 rounded up to a power of two.
inline std::size_t lin_gather_amortizing_k(std::uint64_t K) {
    return std::bit_ceil(static_cast<std::size_t>(2 * math::ipow_sat(K, 3)));
}

inline LinGatherPlan lin_gather_plan(std::size_t n, double delta, std::shared_ptr<const StrongSelector> sel,
                                     std::shared_ptr<const CardinalityEstimator> est,
                                     std::shared_ptr<const AmortizingFamily> amort) {
    LinGatherPlan p;
    p.n = n;
    p.delta = delta;
    p.K = lin_gather_K(n, delta);
    const std::uint64_t K3 = math::ipow_sat(p.K, 3);
    p.D = math::ceil_log(p.K, n);
    if (!sel || sel->n() != n || !est || !amort || amort->n() != n)
        throw ConfigError("LinGather families must be built over the tree's label space");
    p.epoch1.gamma = p.K;
    p.epoch1.member_threshold = 1;
    p.epoch1.active_below = heavy_threshold(n, p.K);
    p.epoch1.stages = p.D + 1;
    p.epoch1.iterations = (n + K3 - 1) / K3;
    p.epoch1.selector = std::move(sel);
    p.epoch1.n = n;
    p.epoch2_start = p.epoch1.end();
    p.D1 = est->total_length();
    p.s = amort->s();
    if (est->top_level() + 1 >= amort->level_count())
        throw ConfigError("amortizing family lacks the level the estimator can select");
    p.estimator = std::move(est);
    p.amortizing = std::move(amort);
    return p;
}

}  // namespace gather
