#pragma once

#include <map>
#include <string>
#include <vector>

#include "gather/schedule.hpp"
#include "gather/sim.hpp"

namespace gather {

struct AuditReport {
    bool ok = true;
    std::uint64_t checks = 0;
    std::vector<std::string> failures;  // first few only

    void fail(std::string s) {
        ok = false;
        if (failures.size() < 16)
            failures.push_back(std::move(s));
    }
};

// Ancestor tests in O(1) from an Euler tour.
class AncestorIndex {
public:
    explicit AncestorIndex(const Tree& t) : tin_(t.size()), tout_(t.size()) {
        std::uint32_t clock = 0;
        std::vector<std::pair<Label, std::size_t>> stack{{t.root(), 0}};
        tin_[t.root()] = clock++;
        while (!stack.empty()) {
            auto& [v, i] = stack.back();
            auto ch = t.children(v);
            if (i < ch.size()) {
                Label c = ch[i++];
                tin_[c] = clock++;
                stack.push_back({c, 0});
            } else {
                tout_[v] = clock++;
                stack.pop_back();
            }
        }
    }
    // a is an ancestor of b or equal to it
    bool is_ancestor(Label a, Label b) const { return tin_[a] <= tin_[b] && tout_[b] <= tout_[a]; }

private:
    std::vector<std::uint32_t> tin_, tout_;
};

// Every node ever holding rumor r lies on the path from r to the root, and
// the shallowest holder (the front) never moves away from the root. Holders
// of r form the path segment from r up to the front, so "v holds r" is an
// O(1) test; each transmission is checked against it and the front may gain
// at most one level per step.
class CopyFrontAudit {
public:
    explicit CopyFrontAudit(const Tree& t) : tree_(t), anc_(t), front_(t.size()) {
        for (Label v = 0; v < t.size(); ++v)
            front_[v] = t.depth(v);
    }

    void observe(const StepEvents& ev) {
        for (const auto& tx : ev.tx) {
            if (tx.rumor == kNoLabel)
                continue;
            ++rep_.checks;
            if (!anc_.is_ancestor(tx.node, tx.rumor))
                rep_.fail("step " + std::to_string(ev.t) + ": node " + std::to_string(tx.node) + " sent rumor " +
                          std::to_string(tx.rumor) + " from off its path");
            else if (tree_.depth(tx.node) < front_[tx.rumor])
                rep_.fail("step " + std::to_string(ev.t) + ": node " + std::to_string(tx.node) + " sent rumor " +
                          std::to_string(tx.rumor) + " ahead of its front");
        }
        moved_.clear();
        for (const auto& rx : ev.rx) {
            if (rx.rumor == kNoLabel)
                continue;
            ++rep_.checks;
            if (!anc_.is_ancestor(rx.parent, rx.rumor)) {
                rep_.fail("step " + std::to_string(ev.t) + ": rumor " + std::to_string(rx.rumor) + " reached " +
                          std::to_string(rx.parent) + ", which is not on its root path");
                continue;
            }
            const auto d = tree_.depth(rx.parent);
            if (d < front_[rx.rumor]) {
                if (d + 1 < front_[rx.rumor])
                    rep_.fail("step " + std::to_string(ev.t) + ": front of rumor " + std::to_string(rx.rumor) +
                              " jumped more than one level");
                moved_.emplace_back(rx.rumor, d);
            }
        }
        // apply after the step: receptions only count from the next step on
        for (auto [r, d] : moved_)
            front_[r] = std::min(front_[r], d);
    }

    StepObserver observer() {
        return [this](const StepEvents& ev) { observe(ev); };
    }
    const AuditReport& report() const { return rep_; }
    std::uint32_t front(Label rumor) const { return front_[rumor]; }

private:
    const Tree& tree_;
    AncestorIndex anc_;
    std::vector<std::uint32_t> front_;
    std::vector<std::pair<Label, std::uint32_t>> moved_;
    AuditReport rep_;
};

inline AuditReport copy_front_audit(const Tree& t, const std::vector<StepEvents>& trace) {
    CopyFrontAudit a(t);
    for (const auto& ev : trace)
        a.observe(ev);
    return a.report();
}

// Replays the selector part of a SelectorEpoch from the event stream with its
// own marking bookkeeping and checks, at the end of every iteration:
//  - within each height-h component H, the nodes still holding unmarked
//    rumors form a connected set (at most one of them has its parent outside);
//  - every node of H whose parent is in H, and that marked a rumor at the
//    start of the iteration, got at least one message through to the parent;
//  - each part-1 transmission carries the rumor marked for that iteration.
class SelectorEpochAudit {
public:
    SelectorEpochAudit(const Tree& t, const SelectorEpoch& e) : tree_(t), e_(e), n_(t.size()) {
        const auto sizes = subtree_sizes(t);
        std::vector<char> member(n_);
        for (Label v = 0; v < n_; ++v)
            member[v] = sizes[v] >= e.member_threshold;
        const auto h = detail::gamma_heights_within(t, static_cast<std::uint32_t>(std::min<std::uint64_t>(e.gamma, 0xffffffffu)), member);
        stage_.assign(n_, -1);
        for (Label v = 0; v < n_; ++v)
            if (member[v] && sizes[v] < e.active_below)
                stage_[v] = static_cast<int>(h[v]);
        held_.resize(n_);
        unmarked_.resize(n_);
        for (Label v = 0; v < n_; ++v) {
            held_[v] = LabelSet(n_);
            held_[v].insert(v);
            if (stage_[v] >= 0) {
                unmarked_[v] = LabelSet(n_);
                unmarked_[v].insert(v);
            }
        }
        choice_.assign(n_, kNoLabel);
        delivered_.assign(n_, 0);
        by_stage_.resize(e.stages);
        for (Label v = 0; v < n_; ++v)
            if (stage_[v] >= 0 && static_cast<std::uint32_t>(stage_[v]) < e.stages)
                by_stage_[stage_[v]].push_back(v);
            else if (stage_[v] >= 0)
                rep_.fail("node " + std::to_string(v) + " has height beyond the planned stages");
    }

    void observe(const StepEvents& ev) {
        advance_to(ev.t);
        const int h = current_stage(ev.t);
        const bool in_part1 = h >= 0 && ev.t < e_.stage_start(h) + e_.part1();
        for (const auto& tx : ev.tx)
            if (in_part1 && stage_[tx.node] == h) {
                ++rep_.checks;
                if (tx.rumor != choice_[tx.node])
                    rep_.fail("step " + std::to_string(ev.t) + ": node " + std::to_string(tx.node) +
                              " sent a rumor other than the one it marked");
            }
        for (const auto& rx : ev.rx) {
            if (rx.rumor != kNoLabel && held_[rx.parent].insert(rx.rumor) && stage_[rx.parent] >= 0)
                unmarked_[rx.parent].insert(rx.rumor);
            if (in_part1 && stage_[rx.from] == h)
                delivered_[rx.from] = 1;
        }
    }

    // Processes all remaining boundaries.
    void finish() { advance_to(e_.end()); }

    StepObserver observer() {
        return [this](const StepEvents& ev) { observe(ev); };
    }
    const AuditReport& report() const { return rep_; }
    std::uint64_t iterations_checked() const { return iterations_checked_; }

private:
    int current_stage(Step t) const {
        if (e_.stages == 0 || t < e_.start || t >= e_.end())
            return -1;
        return static_cast<int>((t - e_.start) / e_.stage_length());
    }

    // Handles every iteration boundary b <= t not yet processed. Holdings
    // reflect receptions strictly before b.
    void advance_to(Step t) {
        if (e_.stages == 0 || e_.part1() == 0)
            return;
        while (next_stage_ < e_.stages) {
            const Step s = e_.stage_start(next_stage_);
            const Step b = s + static_cast<Step>(next_iter_ * e_.m());
            if (b > t)
                return;
            const auto& nodes = by_stage_[next_stage_];
            if (next_iter_ > 0)
                end_iteration(nodes);
            if (next_iter_ < e_.iterations) {
                for (Label v : nodes) {
                    const Label r = unmarked_[v].first();
                    choice_[v] = r;
                    if (r != kNoLabel)
                        unmarked_[v].erase(r);
                    delivered_[v] = 0;
                }
                ++next_iter_;
            } else {
                for (Label v : nodes)
                    choice_[v] = kNoLabel;
                next_iter_ = 0;
                ++next_stage_;
            }
        }
    }

    void end_iteration(const std::vector<Label>& nodes) {
        ++iterations_checked_;
        const int h = static_cast<int>(next_stage_);
        auto in_h = [&](Label v) { return v != kNoLabel && stage_[v] == h; };
        // component roots: nodes of H whose parent is outside H
        std::map<Label, std::uint32_t> tops_per_component;
        for (Label v : nodes) {
            const Label p = tree_.parent(v);
            if (in_h(p) && choice_[v] != kNoLabel) {
                ++rep_.checks;
                if (!delivered_[v])
                    rep_.fail("stage " + std::to_string(h) + ": node " + std::to_string(v) +
                              " marked a rumor but nothing reached its parent in the iteration");
            }
            if (unmarked_[v].empty())
                continue;
            const bool top = !in_h(p) || unmarked_[p].empty();
            if (top)
                ++tops_per_component[component_root(v, h)];
        }
        for (auto& [root, tops] : tops_per_component) {
            ++rep_.checks;
            if (tops > 1)
                rep_.fail("stage " + std::to_string(h) + ": nodes holding unmarked rumors under component " +
                          std::to_string(root) + " are split into " + std::to_string(tops) + " pieces");
        }
    }

    Label component_root(Label v, int h) const {
        while (tree_.parent(v) != kNoLabel && stage_[tree_.parent(v)] == h)
            v = tree_.parent(v);
        return v;
    }

    const Tree& tree_;
    SelectorEpoch e_;
    std::size_t n_;
    std::vector<int> stage_;
    std::vector<std::vector<Label>> by_stage_;
    std::vector<LabelSet> held_, unmarked_;
    std::vector<Label> choice_;
    std::vector<char> delivered_;
    std::uint32_t next_stage_ = 0;
    std::uint64_t next_iter_ = 0;
    std::uint64_t iterations_checked_ = 0;
    AuditReport rep_;
};

// Largest (time to reach j rumors) / (2m + j) over watched nodes and j,
// with m the node's subtree size and times measured from the origin.
struct ProgressFit {
    double c = 0;
    Label node = kNoLabel;
    std::uint32_t j = 0;
};

// Records, for each node of the watched set, the step at which it first held
// j rumors (j = 1..), relative to `origin`. The progress maximum is also kept
// online, so long runs can skip storing the times.
class AcquisitionRecorder {
public:
    AcquisitionRecorder(const Tree& t, std::vector<char> watch, Step origin, bool keep_times = true)
        : tree_(t), watch_(std::move(watch)), origin_(origin), keep_(keep_times), sizes_(subtree_sizes(t)),
          held_(t.size()), count_(t.size(), 0), times_(t.size()) {
        for (Label v = 0; v < t.size(); ++v)
            if (watch_[v]) {
                held_[v] = LabelSet(t.size());
                add(v, v, origin);  // own rumor
            }
    }

    void observe(const StepEvents& ev) {
        for (const auto& rx : ev.rx)
            if (watch_[rx.parent] && rx.rumor != kNoLabel)
                add(rx.parent, rx.rumor, std::max(origin_, ev.t + 1));
    }

    StepObserver observer() {
        return [this](const StepEvents& ev) { observe(ev); };
    }

    // times(v)[j-1] = first step at which v held j rumors; empty unless kept.
    const std::vector<Step>& times(Label v) const { return times_[v]; }
    Step origin() const { return origin_; }
    const ProgressFit& fit() const { return fit_; }

private:
    // Held from step `at` on; anything before the origin counts as held at the origin.
    void add(Label v, Label rumor, Step at) {
        if (!held_[v].insert(rumor))
            return;
        const auto j = ++count_[v];
        if (keep_)
            times_[v].push_back(at);
        const double r = static_cast<double>(at - origin_) / static_cast<double>(2 * sizes_[v] + j);
        if (r > fit_.c)
            fit_ = {r, v, j};
    }

    const Tree& tree_;
    std::vector<char> watch_;
    Step origin_;
    bool keep_;
    std::vector<std::uint32_t> sizes_;
    std::vector<LabelSet> held_;
    std::vector<std::uint32_t> count_;
    std::vector<std::vector<Step>> times_;
    ProgressFit fit_;
};

inline ProgressFit progress_ratio(const Tree& t, const AcquisitionRecorder& rec, const std::vector<char>& watch) {
    ProgressFit best;
    const auto sizes = subtree_sizes(t);
    for (Label v = 0; v < t.size(); ++v) {
        if (!watch[v])
            continue;
        const auto& ts = rec.times(v);
        for (std::size_t j = 1; j <= ts.size(); ++j) {
            const double r = static_cast<double>(ts[j - 1] - rec.origin()) / static_cast<double>(2 * sizes[v] + j);
            if (r > best.c)
                best = {r, v, static_cast<std::uint32_t>(j)};
        }
    }
    return best;
}

// Checks "holds >= j rumors by origin + C (2m + j)" for every watched node
// and every j <= m.
inline AuditReport progress_audit(const Tree& t, const AcquisitionRecorder& rec, const std::vector<char>& watch,
                                  double C) {
    AuditReport rep;
    const auto sizes = subtree_sizes(t);
    for (Label v = 0; v < t.size(); ++v) {
        if (!watch[v])
            continue;
        const auto& ts = rec.times(v);
        for (std::uint32_t j = 1; j <= sizes[v]; ++j) {
            ++rep.checks;
            const double bound = C * static_cast<double>(2 * sizes[v] + j);
            if (j > ts.size())
                rep.fail("node " + std::to_string(v) + " never held " + std::to_string(j) + " rumors");
            else if (static_cast<double>(ts[j - 1] - rec.origin()) > bound)
                rep.fail("node " + std::to_string(v) + " held " + std::to_string(j) + " rumors only after " +
                         std::to_string(ts[j - 1] - rec.origin()) + " steps, bound " + std::to_string(bound));
            if (j > ts.size())
                break;
        }
    }
    return rep;
}

}  // namespace gather
