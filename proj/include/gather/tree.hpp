#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gather/core.hpp"
#include "gather/rng.hpp"

namespace gather {

class TreeError : public Error {
public:
    enum class Kind { NoRoot, MultipleRoots, CycleDetected, UnreachableNode, LabelOutOfRange, InvalidGamma, BadParameters };

    TreeError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// Rooted tree over labels 0..n-1 with edges directed toward the root.
// parent(root) == kNoLabel. Immutable once built.
class Tree {
public:
    Tree() = default;

    std::size_t size() const noexcept { return parent_.size(); }
    Label root() const noexcept { return root_; }
    Label parent(Label v) const { return parent_[v]; }
    const std::vector<Label>& parents() const noexcept { return parent_; }

    std::span<const Label> children(Label v) const {
        return {child_list_.data() + child_start_[v], child_list_.data() + child_start_[v + 1]};
    }
    std::size_t degree(Label v) const { return child_start_[v + 1] - child_start_[v]; }
    bool is_leaf(Label v) const { return degree(v) == 0; }

    // Labels in breadth-first order from the root; reverse it for bottom-up passes.
    const std::vector<Label>& bfs_order() const noexcept { return order_; }
    std::uint32_t depth(Label v) const { return depth_[v]; }

    std::size_t leaf_count() const {
        std::size_t q = 0;
        for (Label v = 0; v < size(); ++v)
            q += is_leaf(v);
        return q;
    }

    friend bool operator==(const Tree& a, const Tree& b) { return a.parent_ == b.parent_; }

    friend Tree validate_tree(std::vector<Label> parents);

private:
    std::vector<Label> parent_;
    Label root_ = 0;
    std::vector<std::uint32_t> child_start_;
    std::vector<Label> child_list_;
    std::vector<Label> order_;
    std::vector<std::uint32_t> depth_;
};

// Checks entries, then cycles, then the root count.
inline Tree validate_tree(std::vector<Label> parents) {
    const std::size_t n = parents.size();
    if (n == 0)
        throw TreeError(TreeError::Kind::NoRoot, "empty parent array");
    for (std::size_t v = 0; v < n; ++v)
        if (parents[v] != kNoLabel && parents[v] >= n)
            throw TreeError(TreeError::Kind::LabelOutOfRange,
                            "parent of " + std::to_string(v) + " is out of range: " + std::to_string(parents[v]));

    // 0 = unvisited, 1 = on current walk, 2 = known to reach a root
    std::vector<std::uint8_t> state(n, 0);
    std::vector<Label> walk;
    for (Label s = 0; s < n; ++s) {
        walk.clear();
        Label v = s;
        while (v != kNoLabel && state[v] == 0) {
            state[v] = 1;
            walk.push_back(v);
            v = parents[v];
        }
        if (v != kNoLabel && state[v] == 1)
            throw TreeError(TreeError::Kind::CycleDetected, "cycle through label " + std::to_string(v));
        for (Label w : walk)
            state[w] = 2;
    }

    Label root = kNoLabel;
    for (Label v = 0; v < n; ++v) {
        if (parents[v] != kNoLabel)
            continue;
        if (root != kNoLabel)
            throw TreeError(TreeError::Kind::MultipleRoots,
                            "labels " + std::to_string(root) + " and " + std::to_string(v) + " have no parent");
        root = v;
    }
    if (root == kNoLabel)
        throw TreeError(TreeError::Kind::NoRoot, "no label without a parent");

    Tree t;
    t.parent_ = std::move(parents);
    t.root_ = root;
    t.child_start_.assign(n + 1, 0);
    for (Label v = 0; v < n; ++v)
        if (t.parent_[v] != kNoLabel)
            ++t.child_start_[t.parent_[v] + 1];
    for (std::size_t v = 0; v < n; ++v)
        t.child_start_[v + 1] += t.child_start_[v];
    t.child_list_.resize(n - 1);
    std::vector<std::uint32_t> fill(t.child_start_.begin(), t.child_start_.end() - 1);
    for (Label v = 0; v < n; ++v)
        if (t.parent_[v] != kNoLabel)
            t.child_list_[fill[t.parent_[v]]++] = v;

    t.order_.reserve(n);
    t.depth_.assign(n, 0);
    t.order_.push_back(root);
    for (std::size_t i = 0; i < t.order_.size(); ++i) {
        Label v = t.order_[i];
        for (Label c : t.children(v)) {
            t.depth_[c] = t.depth_[v] + 1;
            t.order_.push_back(c);
        }
    }
    if (t.order_.size() != n)
        throw TreeError(TreeError::Kind::UnreachableNode, "some label does not reach the root");
    return t;
}

inline std::vector<std::uint32_t> subtree_sizes(const Tree& t) {
    std::vector<std::uint32_t> size(t.size(), 1);
    const auto& order = t.bfs_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if (t.parent(*it) != kNoLabel)
            size[t.parent(*it)] += size[*it];
    return size;
}

namespace detail {

// gamma-heights restricted to the subtree induced by `member` (all nodes if
// empty). Entries for non-members are left at 0.
inline std::vector<std::uint32_t> gamma_heights_within(const Tree& t, std::uint32_t gamma,
                                                       const std::vector<char>& member) {
    std::vector<std::uint32_t> h(t.size(), 0);
    const auto& order = t.bfs_order();
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Label v = *it;
        if (!member.empty() && !member[v])
            continue;
        std::uint32_t g = 0, attain = 0;
        bool any = false;
        for (Label c : t.children(v)) {
            if (!member.empty() && !member[c])
                continue;
            if (!any || h[c] > g) {
                g = h[c];
                attain = 1;
                any = true;
            } else if (h[c] == g) {
                ++attain;
            }
        }
        h[v] = !any ? 0 : (attain >= gamma ? g + 1 : g);
    }
    return h;
}

}  // namespace detail

inline std::vector<std::uint32_t> gamma_heights(const Tree& t, std::uint32_t gamma) {
    const std::size_t n = t.size();
    if (gamma < 2 || (gamma != 2 && gamma > n - 1))
        throw TreeError(TreeError::Kind::InvalidGamma,
                        "gamma must be 2 or lie in [2, n-1], got " + std::to_string(gamma));
    return detail::gamma_heights_within(t, gamma, {});
}

// Membership mask of nodes with subtree size >= threshold. Always upward
// closed and contains the root.
inline std::vector<char> heavy_subtree(const std::vector<std::uint32_t>& sizes, std::uint64_t threshold) {
    if (threshold < 1)
        throw TreeError(TreeError::Kind::BadParameters, "heavy threshold must be >= 1");
    std::vector<char> heavy(sizes.size());
    for (std::size_t v = 0; v < sizes.size(); ++v)
        heavy[v] = sizes[v] >= threshold;
    return heavy;
}

inline std::vector<char> heavy_subtree(const Tree& t, std::uint64_t threshold) {
    return heavy_subtree(subtree_sizes(t), threshold);
}

// Threshold that separates light (size <= floor(n/K^3)) from heavy nodes.
inline std::uint64_t heavy_threshold(std::uint64_t n, std::uint64_t K) {
    return n / math::ipow_sat(K, 3) + 1;
}

// K_l ladder for FastGather. K[0] = n; K[l] = ceil(n^(beta^-l)) for
// l = 1..L+1; L is the largest l with n^(beta^-l) >= log2 n (0 if none).
struct Ladder {
    std::uint64_t n = 1;
    std::uint32_t beta = 2;
    std::uint32_t L = 0;
    std::vector<std::uint64_t> K;
    std::vector<std::uint64_t> threshold;  // per level, heavy_threshold(n, K[l]); threshold[0] = 1
};

inline Ladder ladder_params(std::uint64_t n, std::uint32_t beta) {
    if (beta < 2)
        throw TreeError(TreeError::Kind::BadParameters, "beta must be >= 2");
    Ladder lad;
    lad.n = n;
    lad.beta = beta;
    if (n >= 4) {
        // compare log2(n)/beta^l with log2(log2 n) in the log domain
        const long double lg = std::log2(static_cast<long double>(n));
        const long double llg = std::log2(lg);
        long double e = lg;
        while (true) {
            e /= beta;
            if (e + 1e-12L < llg)
                break;
            ++lad.L;
        }
    }
    lad.K.push_back(n);
    lad.threshold.push_back(1);
    std::uint64_t exponent = 1;
    for (std::uint32_t l = 1; l <= lad.L + 1; ++l) {
        exponent = exponent > (1ULL << 40) ? exponent : exponent * beta;
        std::uint64_t k = n <= 1 ? 1 : math::ceil_root(n, exponent);
        lad.K.push_back(std::max<std::uint64_t>(k, 2));
        lad.threshold.push_back(heavy_threshold(n, lad.K.back()));
    }
    lad.threshold[0] = 1;
    return lad;
}

struct LevelDecomposition {
    Ladder ladder;
    std::vector<std::vector<char>> member;  // member[l][v]: v in T^(l), l = 0..L
};

inline LevelDecomposition level_decomposition(const Tree& t, std::uint32_t beta) {
    LevelDecomposition d;
    d.ladder = ladder_params(t.size(), beta);
    auto sizes = subtree_sizes(t);
    for (std::uint32_t l = 0; l <= d.ladder.L; ++l)
        d.member.push_back(heavy_subtree(sizes, d.ladder.threshold[l]));
    return d;
}

// Leaf bound in integer form: gamma^height <= leaves.
inline bool height_within_leaf_bound(std::uint32_t height, std::uint32_t gamma, std::size_t leaves) {
    return math::ipow_sat(gamma, height) <= leaves;
}

// ---------------------------------------------------------------------------
// Generators

struct TreeKind {
    enum class Type { Path, Star, CompleteAry, Caterpillar, Broom, RandomAttachment };
    Type type = Type::Path;
    std::uint32_t arity = 2;   // CompleteAry
    std::uint32_t arms = 0;    // Broom; 0 picks floor(sqrt(n))
    std::uint32_t armlen = 0;  // Broom; 0 picks so the handle holds about half the nodes
};

inline std::string kind_name(const TreeKind& k) {
    switch (k.type) {
    case TreeKind::Type::Path: return "path";
    case TreeKind::Type::Star: return "star";
    case TreeKind::Type::CompleteAry: return k.arity == 2 ? "complete-binary" : "complete-ary" + std::to_string(k.arity);
    case TreeKind::Type::Caterpillar: return "caterpillar";
    case TreeKind::Type::Broom: return "broom";
    case TreeKind::Type::RandomAttachment: return "random-attachment";
    }
    return "?";
}

inline TreeKind parse_kind(const std::string& s, std::uint32_t arity = 2, std::uint32_t arms = 0,
                           std::uint32_t armlen = 0) {
    TreeKind k;
    k.arity = arity;
    k.arms = arms;
    k.armlen = armlen;
    if (s == "path")
        k.type = TreeKind::Type::Path;
    else if (s == "star")
        k.type = TreeKind::Type::Star;
    else if (s == "complete-binary")
        k.type = TreeKind::Type::CompleteAry, k.arity = 2;
    else if (s == "complete-ary")
        k.type = TreeKind::Type::CompleteAry;
    else if (s == "caterpillar")
        k.type = TreeKind::Type::Caterpillar;
    else if (s == "broom")
        k.type = TreeKind::Type::Broom;
    else if (s == "random-attachment" || s == "random")
        k.type = TreeKind::Type::RandomAttachment;
    else
        throw TreeError(TreeError::Kind::BadParameters, "unknown tree kind '" + s + "'");
    return k;
}

inline Tree generate(const TreeKind& kind, std::size_t n, std::uint64_t seed = 0) {
    if (n == 0)
        throw TreeError(TreeError::Kind::BadParameters, "n must be >= 1");
    std::vector<Label> p(n, kNoLabel);
    switch (kind.type) {
    case TreeKind::Type::Path:
        for (Label v = 1; v < n; ++v)
            p[v] = v - 1;
        break;
    case TreeKind::Type::Star:
        for (Label v = 1; v < n; ++v)
            p[v] = 0;
        break;
    case TreeKind::Type::CompleteAry:
        if (kind.arity < 1)
            throw TreeError(TreeError::Kind::BadParameters, "arity must be >= 1");
        for (Label v = 1; v < n; ++v)
            p[v] = (v - 1) / kind.arity;
        break;
    case TreeKind::Type::Caterpillar: {
        const std::size_t spine = (n + 1) / 2;
        for (Label v = 1; v < spine; ++v)
            p[v] = v - 1;
        for (std::size_t v = spine; v < n; ++v)
            p[v] = static_cast<Label>((v - spine) % spine);
        break;
    }
    case TreeKind::Type::Broom: {
        std::size_t arms = kind.arms ? kind.arms : std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(n)));
        std::size_t armlen = kind.armlen ? kind.armlen : std::max<std::size_t>(1, (n / 2) / arms);
        if (arms * armlen >= n)
            throw TreeError(TreeError::Kind::BadParameters, "broom arms leave no handle");
        const std::size_t handle = n - arms * armlen;
        for (Label v = 1; v < handle; ++v)
            p[v] = v - 1;
        Label next = static_cast<Label>(handle);
        for (std::size_t a = 0; a < arms; ++a)
            for (std::size_t i = 0; i < armlen; ++i, ++next)
                p[next] = i == 0 ? static_cast<Label>(handle - 1) : next - 1;
        break;
    }
    case TreeKind::Type::RandomAttachment: {
        Rng rng(derive_seed(seed, "random-attachment", n));
        std::vector<Label> shape(n, kNoLabel);
        for (Label v = 1; v < n; ++v)
            shape[v] = static_cast<Label>(rng.below(v));
        std::vector<Label> perm(n);
        for (Label v = 0; v < n; ++v)
            perm[v] = v;
        rng.shuffle(perm);
        for (Label v = 0; v < n; ++v)
            p[perm[v]] = shape[v] == kNoLabel ? kNoLabel : perm[shape[v]];
        break;
    }
    }
    return validate_tree(std::move(p));
}

}  // namespace gather
