#pragma once

#include <bit>
#include <memory>
#include <string>
#include <vector>

#include "gather/schedule.hpp"
#include "gather/sim.hpp"

namespace gather {

// ---------------------------------------------------------------------------
// RoundRobin: at step r*n + l, node l transmits its lowest rumor not yet
// transmitted. Runs n rounds.

class RoundRobin final : public Protocol {
public:
    explicit RoundRobin(std::size_t n) : n_(n) {}
    std::string name() const override { return "RoundRobin"; }
    std::optional<Step> schedule_end() const override { return static_cast<Step>(n_ * n_); }

    std::unique_ptr<NodeAutomaton> make_node(const NodeContext& ctx) const override {
        return std::make_unique<Node>(ctx.label(), ctx.n());
    }

private:
    class Node final : public NodeAutomaton {
    public:
        Node(Label label, std::size_t n) : label_(label), n_(static_cast<Step>(n)), held_(n), pending_(n) {
            held_.insert(label);
            pending_.insert(label);
        }

        Step next_wakeup(Step t) override {
            if (pending_.empty())
                return kNever;
            const Step r = t <= label_ ? 0 : (t - label_ + n_ - 1) / n_;
            return r < n_ ? r * n_ + label_ : kNever;
        }
        std::optional<Message> act(Step) override {
            const Label r = pending_.first();
            if (r == kNoLabel)
                return std::nullopt;
            pending_.erase(r);
            return Message{r};
        }
        void on_receive(Step, const Message& m) override {
            if (m.has_rumor() && held_.insert(m.rumor))
                pending_.insert(m.rumor);
        }

    private:
        Step label_;
        Step n_;
        LabelSet held_;
        LabelSet pending_;
    };

    std::size_t n_;
};

// ---------------------------------------------------------------------------
// Segment-scheduled node used by the stage-based protocols.

namespace detail {

struct Segment {
    enum class Type { Selector, AllTransmit, ParityTransmit, RumorRoundRobin, ControlRound, Distance };
    Type type;
    Step start;
    Step end;
    std::uint64_t m = 0;                                // Selector
    const std::vector<std::uint32_t>* offsets = nullptr;  // Selector: own positions in [0, m)
};

inline std::uint8_t bits_for(std::uint64_t v) { return static_cast<std::uint8_t>(std::max<int>(1, std::bit_width(v))); }

class StagedNode : public NodeAutomaton {
public:
    StagedNode(Label label, std::size_t n) : label_(label), n_(n), held_(n), unmarked_(n) {
        held_.insert(label);
        unmarked_.insert(label);
    }

    void add(Segment s) { seg_.push_back(s); }

    Step next_wakeup(Step t) override {
        for (std::size_t i = cur_; i < seg_.size(); ++i) {
            const auto& s = seg_[i];
            if (s.end <= t) {
                if (i == cur_)
                    ++cur_;
                continue;
            }
            const Step w = next_in(s, std::max(t, s.start));
            if (w != kNever)
                return w;
        }
        return kNever;
    }

    std::optional<Message> act(Step t) override {
        const Segment* s = at(t);
        if (!s)
            return std::nullopt;
        switch (s->type) {
        case Segment::Type::Selector: {
            const Step rel = t - s->start;
            const Step iter_start = s->start + rel / static_cast<Step>(s->m) * static_cast<Step>(s->m);
            const auto off = static_cast<std::uint32_t>(rel % static_cast<Step>(s->m));
            if (off == 0) {
                const Label r = unmarked_.first();
                if (r != kNoLabel) {
                    unmarked_.erase(r);
                    choice_ = r;
                    chosen_at_ = iter_start;
                } else {
                    chosen_at_ = -1;
                }
            }
            if (chosen_at_ == iter_start && std::binary_search(s->offsets->begin(), s->offsets->end(), off))
                return Message{choice_};
            return std::nullopt;
        }
        case Segment::Type::AllTransmit:
        case Segment::Type::ParityTransmit: {
            const Label r = unmarked_.first();
            if (r == kNoLabel)
                return std::nullopt;
            unmarked_.erase(r);
            return Message{r};
        }
        case Segment::Type::RumorRoundRobin: {
            const auto l = static_cast<Label>(t - s->start);
            if (held_.contains(l))
                return Message{l};
            return std::nullopt;
        }
        case Segment::Type::ControlRound:
            return Message{kNoLabel, 1, 1};
        case Segment::Type::Distance:
            if (!stage_child_ && t == s->start) {
                position_ = 0;
                return Message{kNoLabel, 0, 1};
            }
            if (t == distance_send_)
                return Message{kNoLabel, *position_, bits_for(*position_)};
            return std::nullopt;
        }
        return std::nullopt;
    }

    void on_receive(Step t, const Message& m) override {
        if (m.has_rumor() && held_.insert(m.rumor))
            unmarked_.insert(m.rumor);
        if (m.control_bits == 0)
            return;
        const Segment* s = at(t);
        if (!s)
            return;
        if (s->type == Segment::Type::ControlRound) {
            stage_child_ = true;
        } else if (s->type == Segment::Type::Distance && !position_) {
            position_ = static_cast<std::uint32_t>(m.control + 1);
            if (t + 1 < s->end)
                distance_send_ = t + 1;
        }
    }

    const LabelSet& held() const { return held_; }

protected:
    const Segment* at(Step t) const {
        for (std::size_t i = cur_; i < seg_.size(); ++i)
            if (seg_[i].start <= t && t < seg_[i].end)
                return &seg_[i];
        return nullptr;
    }

    Step next_in(const Segment& s, Step t) const {
        switch (s.type) {
        case Segment::Type::Selector: {
            const Step m = static_cast<Step>(s.m);
            const Step rel = t - s.start;
            Step it = rel / m;
            const Step off = rel % m;
            if (chosen_at_ == s.start + it * m) {
                auto pos = std::lower_bound(s.offsets->begin(), s.offsets->end(), static_cast<std::uint32_t>(off));
                if (pos != s.offsets->end())
                    return s.start + it * m + *pos;
                ++it;
            } else if (off != 0) {
                ++it;
            }
            const Step at = s.start + it * m;
            if (at >= s.end || unmarked_.empty())
                return kNever;
            return at;
        }
        case Segment::Type::AllTransmit:
            return unmarked_.empty() ? kNever : t;
        case Segment::Type::ParityTransmit: {
            if (!position_ || unmarked_.empty())
                return kNever;
            const Step p = (*position_ + 1) % 2;
            const Step rel = t - s.start;
            const Step at = t + ((p - rel % 2 + 2) % 2);
            return at < s.end ? at : kNever;
        }
        case Segment::Type::RumorRoundRobin: {
            const Label l = held_.find_next(static_cast<Label>(t - s.start));
            return l == kNoLabel ? kNever : s.start + l;
        }
        case Segment::Type::ControlRound: {
            const Step at = s.start + label_;
            return t <= at ? at : kNever;
        }
        case Segment::Type::Distance:
            if (!stage_child_)
                return t <= s.start ? s.start : kNever;
            return distance_send_ >= t ? distance_send_ : kNever;
        }
        return kNever;
    }

    Label label_;
    std::size_t n_;
    LabelSet held_;
    LabelSet unmarked_;
    std::vector<Segment> seg_;
    std::size_t cur_ = 0;
    Step chosen_at_ = -1;
    Label choice_ = kNoLabel;
    bool stage_child_ = false;
    std::optional<std::uint32_t> position_;
    Step distance_send_ = -1;
};

inline void add_selector_stage(StagedNode& node, const SelectorEpoch& e, std::uint32_t h, Label label) {
    if (h >= e.stages)
        throw Error("height " + std::to_string(h) + " exceeds the " + std::to_string(e.stages) + " planned stages");
    const Step s = e.stage_start(h);
    if (e.part1() > 0)
        node.add({Segment::Type::Selector, s, s + e.part1(), e.m(), &e.selector->family.incidence(label)});
    node.add({Segment::Type::RumorRoundRobin, s + e.part1(), s + e.stage_length()});
}

inline void add_pipeline_stage(StagedNode& node, const PipelineEpoch& e, std::uint32_t g) {
    if (g >= e.stages)
        throw Error("2-height " + std::to_string(g) + " exceeds the " + std::to_string(e.stages) + " planned stages");
    const Step s = e.stage_start(g);
    const Step n = static_cast<Step>(e.n);
    if (e.parity) {
        node.add({Segment::Type::ControlRound, s, s + n});
        node.add({Segment::Type::Distance, s + n, s + 2 * n});
        node.add({Segment::Type::ParityTransmit, s + 2 * n, s + 4 * n});
        node.add({Segment::Type::RumorRoundRobin, s + 4 * n, s + 5 * n});
    } else {
        node.add({Segment::Type::AllTransmit, s, s + n});
        node.add({Segment::Type::RumorRoundRobin, s + n, s + 2 * n});
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SimpleGather

class SimpleGather final : public Protocol {
public:
    explicit SimpleGather(SimpleGatherPlan plan) : plan_(std::move(plan)) {}

    std::string name() const override { return "SimpleGather"; }
    const SimpleGatherPlan& plan() const { return plan_; }
    std::optional<Step> schedule_end() const override { return plan_.total(); }

    OracleRequest oracle_request() const override {
        return {true, {{static_cast<std::uint32_t>(plan_.K), 1}, {2, plan_.epoch2.threshold}}};
    }

    std::unique_ptr<NodeAutomaton> make_node(const NodeContext& ctx) const override {
        auto node = std::make_unique<detail::StagedNode>(ctx.label(), ctx.n());
        if (ctx.subtree_size() < plan_.epoch1.active_below)
            detail::add_selector_stage(*node, plan_.epoch1, ctx.height(0).value(), ctx.label());
        else
            detail::add_pipeline_stage(*node, plan_.epoch2, ctx.height(1).value());
        return node;
    }

    std::vector<Boundary> boundaries() const {
        std::vector<Boundary> b;
        append_boundaries(b, "epoch 1", plan_.epoch1);
        append_boundaries(b, "epoch 2", plan_.epoch2);
        return b;
    }

private:
    SimpleGatherPlan plan_;
};

// ---------------------------------------------------------------------------
// FastGather

class FastGather final : public Protocol {
public:
    explicit FastGather(FastGatherPlan plan) : plan_(std::move(plan)) {}

    std::string name() const override { return "FastGather"; }
    const FastGatherPlan& plan() const { return plan_; }
    std::optional<Step> schedule_end() const override { return plan_.total(); }

    // Query l-1 gives K_l-heights within T^(l-1); the last gives 2-heights in T^(L).
    OracleRequest oracle_request() const override {
        OracleRequest r{true, {}};
        for (const auto& e : plan_.epochs)
            r.heights.push_back({static_cast<std::uint32_t>(std::min<std::uint64_t>(e.gamma, 0xffffffffu)), e.member_threshold});
        r.heights.push_back({2, plan_.last.threshold});
        return r;
    }

    std::unique_ptr<NodeAutomaton> make_node(const NodeContext& ctx) const override {
        auto node = std::make_unique<detail::StagedNode>(ctx.label(), ctx.n());
        const auto size = ctx.subtree_size();
        for (std::size_t l = 0; l < plan_.epochs.size(); ++l) {
            const auto& e = plan_.epochs[l];
            if (e.stages > 0 && size >= e.member_threshold && size < e.active_below)
                detail::add_selector_stage(*node, e, ctx.height(l).value(), ctx.label());
        }
        if (size >= plan_.last.threshold)
            detail::add_pipeline_stage(*node, plan_.last, ctx.height(plan_.epochs.size()).value());
        return node;
    }

    std::vector<Boundary> boundaries() const {
        std::vector<Boundary> b;
        for (std::size_t l = 0; l < plan_.epochs.size(); ++l)
            append_boundaries(b, "epoch " + std::to_string(l + 1), plan_.epochs[l]);
        append_boundaries(b, "epoch " + std::to_string(plan_.epochs.size() + 1), plan_.last);
        return b;
    }

private:
    FastGatherPlan plan_;
};

// ---------------------------------------------------------------------------
// LinGather (needs acknowledgements)

struct LinGatherCounters {
    std::uint64_t no_level_fired = 0;
    std::uint64_t active_stages = 0;
};

class LinGather final : public Protocol {
public:
    explicit LinGather(LinGatherPlan plan) : plan_(std::move(plan)) {
        for (std::size_t i = 0; i <= plan_.estimator->levels.size(); ++i)
            offsets_.push_back(plan_.estimator->offset(i));
    }

    std::string name() const override { return "LinGather"; }
    bool requires_ack() const override { return true; }
    const LinGatherPlan& plan() const { return plan_; }

    OracleRequest oracle_request() const override { return {true, {{static_cast<std::uint32_t>(plan_.K), 1}}}; }

    std::unique_ptr<NodeAutomaton> make_node(const NodeContext& ctx) const override {
        const auto size = ctx.subtree_size();
        if (size < plan_.epoch1.active_below) {
            auto node = std::make_unique<detail::StagedNode>(ctx.label(), ctx.n());
            detail::add_selector_stage(*node, plan_.epoch1, ctx.height(0).value(), ctx.label());
            return node;
        }
        return std::make_unique<HeavyNode>(*this, ctx.label(), ctx.n(), size);
    }

    // Shared across runs of this protocol object; only read by the harness.
    const LinGatherCounters& counters() const { return counters_; }
    void reset_counters() const { counters_ = {}; }

private:
    class HeavyNode final : public NodeAutomaton {
    public:
        HeavyNode(const LinGather& p, Label label, std::size_t n, std::uint32_t size)
            : p_(p), label_(label), size_(size), held_(n), unpassed_(n), hits_(p.plan_.estimator->levels.size(), 0) {
            held_.insert(label);
            unpassed_.insert(label);
        }

        Step next_wakeup(Step t) override {
            if (unpassed_.empty())
                return kNever;
            const auto& pl = p_.plan_;
            if (t <= pl.epoch2_start)
                return pl.epoch2_start;
            const Step o = (t - pl.epoch2_start) % pl.stage_length();
            if (o % 2 == 1 || o == 0)
                return t;
            // even step inside a stage: only matters if active and scheduled
            if (active_stage_ == stage_of(t) && wants_even(static_cast<std::uint64_t>(o / 2)))
                return t;
            return t + 1;
        }

        std::optional<Message> act(Step t) override {
            const auto& pl = p_.plan_;
            const Step q = stage_of(t);
            const Step o = (t - pl.epoch2_start) % pl.stage_length();
            pending_level_ = -1;
            sent_ = kNoLabel;
            if (o == 0) {
                std::fill(hits_.begin(), hits_.end(), 0);
                fire_level_ = -2;
                if (held_.size() == size_ && !unpassed_.empty()) {
                    active_stage_ = q;
                    ++p_.counters_.active_stages;
                }
            }
            if (o % 2 == 1) {
                sent_ = unpassed_.first();
                return sent_ == kNoLabel ? std::nullopt : std::optional<Message>(Message{sent_});
            }
            if (active_stage_ != q)
                return std::nullopt;
            const auto e = static_cast<std::uint64_t>(o / 2);
            if (e < pl.D1) {
                const int level = slot_at(e);
                if (level < 0)
                    return std::nullopt;
                pending_level_ = level;
                sent_ = unpassed_.first();
                return sent_ == kNoLabel ? std::nullopt : std::optional<Message>(Message{sent_});
            }
            if (!wants_even(e))
                return std::nullopt;
            sent_ = unpassed_.first();
            return Message{sent_};
        }

        void on_receive(Step, const Message& m) override {
            if (m.has_rumor() && held_.insert(m.rumor))
                unpassed_.insert(m.rumor);
        }

        void on_ack(Step) override {
            if (sent_ != kNoLabel)
                unpassed_.erase(sent_);
            if (pending_level_ >= 0)
                ++hits_[static_cast<std::size_t>(pending_level_)];
        }

    private:
        Step stage_of(Step t) const { return (t - p_.plan_.epoch2_start) / p_.plan_.stage_length(); }

        // Estimator level whose set at even step e contains this node, or -1.
        int slot_at(std::uint64_t e) const {
            const auto& off = p_.offsets_;
            const auto i = static_cast<std::size_t>(std::upper_bound(off.begin(), off.end(), e) - off.begin()) - 1;
            if (i + 1 >= off.size())
                return -1;
            const auto& inc = p_.plan_.estimator->levels[i].family.incidence(label_);
            return std::binary_search(inc.begin(), inc.end(), static_cast<std::uint32_t>(e - off[i])) ? static_cast<int>(i)
                                                                                                    : -1;
        }

        // Whether an active node transmits at even step e of the current stage.
        bool wants_even(std::uint64_t e) {
            const auto& pl = p_.plan_;
            if (unpassed_.empty())
                return false;
            if (e < pl.D1)
                return slot_at(e) >= 0;
            if (fire_level_ == -2) {
                fire_level_ = -1;
                const auto& est = *pl.estimator;
                for (std::size_t i = 0; i < hits_.size(); ++i)
                    if (hits_[i] > est.levels[i].xi) {
                        fire_level_ = static_cast<int>(std::max<std::size_t>(i, 1));
                        break;
                    }
                if (fire_level_ < 0)
                    ++p_.counters_.no_level_fired;
            }
            if (fire_level_ < 0)
                return false;
            return pl.amortizing->contains(e - pl.D1, static_cast<std::size_t>(fire_level_), label_);
        }

        const LinGather& p_;
        Label label_;
        std::uint32_t size_;
        LabelSet held_, unpassed_;
        std::vector<std::uint64_t> hits_;
        Step active_stage_ = -1;
        int fire_level_ = -2;  // amortizing level index; -1 none fired; -2 not yet computed
        int pending_level_ = -1;
        Label sent_ = kNoLabel;
    };

    LinGatherPlan plan_;
    std::vector<std::uint64_t> offsets_;  // estimator level boundaries in even steps
    mutable LinGatherCounters counters_;
};

}  // namespace gather
