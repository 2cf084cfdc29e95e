#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "gather/label_set.hpp"
#include "gather/tree.hpp"

namespace gather {

class ProtocolViolation : public Error {
public:
    enum class Kind { Aggregation, ControlBudget, Locality, UnheldRumor };
    ProtocolViolation(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

// One rumor (by origin label) plus a short control word.
struct Message {
    Label rumor = kNoLabel;
    std::uint64_t control = 0;
    std::uint8_t control_bits = 0;

    bool has_rumor() const { return rumor != kNoLabel; }
};

enum class Duplex { Simultaneous, Half };

struct SimConfig {
    bool ack_enabled = false;
    Duplex duplex = Duplex::Simultaneous;
    std::optional<Step> max_steps;  // default 64 n (1 + log2 n)
    bool record_trace = false;
    std::uint64_t seed = 0;
    bool oracle = true;
    double c_bits = 4.0;
};

inline Step default_max_steps(std::size_t n) {
    return static_cast<Step>(std::ceil(64.0 * static_cast<double>(n) * (1.0 + math::log2n(n))));
}

inline std::uint32_t control_budget(std::size_t n, double c_bits) {
    return static_cast<std::uint32_t>(std::ceil(c_bits * math::log2n(n) - 1e-9));
}

// gamma-height within the subtree of nodes whose size is >= threshold.
struct HeightQuery {
    std::uint32_t gamma = 2;
    std::uint64_t threshold = 1;
    friend bool operator==(const HeightQuery&, const HeightQuery&) = default;
};

// Topology-derived facts a protocol wants injected at start-up.
struct OracleRequest {
    bool subtree_size = false;
    std::vector<HeightQuery> heights;
};

// The only view of the network a node automaton gets.
class NodeContext {
public:
    NodeContext(Label label, std::size_t n) : label_(label), n_(n) {}

    Label label() const noexcept { return label_; }
    std::size_t n() const noexcept { return n_; }

    std::uint32_t subtree_size() const {
        if (!size_)
            throw ProtocolViolation(ProtocolViolation::Kind::Locality, "subtree size was not declared or oracle is off");
        return *size_;
    }
    // Height for the q-th declared query; nullopt when the node lies outside
    // that query's heavy subtree.
    std::optional<std::uint32_t> height(std::size_t q) const {
        if (q >= heights_.size())
            throw ProtocolViolation(ProtocolViolation::Kind::Locality, "height query " + std::to_string(q) + " was not declared or oracle is off");
        return heights_[q];
    }

private:
    friend class Engine;
    Label label_;
    std::size_t n_;
    std::optional<std::uint32_t> size_;
    std::vector<std::optional<std::uint32_t>> heights_;
};

// Per-node protocol automaton. The engine calls act(t) only at steps returned
// by next_wakeup; receptions and acks are delivered after all actions of the
// step, and the node is asked for its next wakeup afterwards.
class NodeAutomaton {
public:
    virtual ~NodeAutomaton() = default;
    // Earliest step >= t at which the node wants to act, or kNever.
    virtual Step next_wakeup(Step t) = 0;
    virtual std::optional<Message> act(Step t) = 0;
    virtual void on_receive(Step, const Message&) {}
    virtual void on_ack(Step) {}
};

class Protocol {
public:
    virtual ~Protocol() = default;
    virtual std::string name() const = 0;
    virtual OracleRequest oracle_request() const { return {}; }
    virtual bool requires_ack() const { return false; }
    virtual std::unique_ptr<NodeAutomaton> make_node(const NodeContext& ctx) const = 0;
    // Last step of a fixed schedule, if the protocol has one.
    virtual std::optional<Step> schedule_end() const { return std::nullopt; }
};

struct TxEvent {
    Label node;
    Label rumor;
    friend bool operator==(const TxEvent&, const TxEvent&) = default;
};
struct RxEvent {
    Label parent;
    Label from;
    Label rumor;
    friend bool operator==(const RxEvent&, const RxEvent&) = default;
};

// Everything that happened at one step. Only steps with at least one
// transmission are reported.
struct StepEvents {
    Step t = 0;
    std::vector<TxEvent> tx;
    std::vector<RxEvent> rx;
    std::vector<Label> ack;
    std::vector<Label> collided;  // parents with two or more transmitting children
    friend bool operator==(const StepEvents&, const StepEvents&) = default;
};

using StepObserver = std::function<void(const StepEvents&)>;

enum class StopReason { Completed, Timeout, Stalled };

inline const char* to_string(StopReason r) {
    switch (r) {
    case StopReason::Completed: return "completed";
    case StopReason::Timeout: return "timeout";
    case StopReason::Stalled: return "stalled";
    }
    return "?";
}

struct SimResult {
    bool completed = false;
    StopReason stop = StopReason::Stalled;
    std::optional<Step> completion_step;
    std::vector<Step> arrival_step;  // per rumor; -1 for the root's own, kNever if missing
    std::uint64_t collisions = 0;
    std::uint64_t transmissions = 0;
    std::uint64_t deliveries = 0;
    Step steps_run = 0;
    bool oracle_used = false;
    std::optional<std::vector<StepEvents>> trace;

    std::vector<Label> missing() const {
        std::vector<Label> out;
        for (Label r = 0; r < arrival_step.size(); ++r)
            if (arrival_step[r] == kNever)
                out.push_back(r);
        return out;
    }
};

namespace detail {

// Buckets keep their capacity, so the ring is small and fixed: memory is
// bounded by ring size times the busiest step, not by n squared.
inline constexpr std::size_t kWakeupRing = 256;

// Ring of buckets for near wakeups plus a heap for far ones. Each node has at
// most one live entry; stale ones are recognised by a version stamp.
class WakeupQueue {
public:
    WakeupQueue(std::size_t nodes, std::size_t ring) : mask_(std::bit_ceil(std::max<std::size_t>(ring, 64)) - 1),
                                                       ring_(mask_ + 1), version_(nodes, 0), when_(nodes, kNever) {}

    void schedule(Label v, Step at) {
        if (at == when_[v])
            return;  // the live entry already covers it
        ++version_[v];
        when_[v] = at;
        if (at == kNever)
            return;
        Entry e{at, v, version_[v]};
        if (at - now_ <= static_cast<Step>(mask_)) {
            ring_[at & mask_].push_back(e);
            ++in_ring_;
        } else {
            far_.push(e);
            if (far_.size() > 2 * version_.size() + 1024)
                compact_far();
        }
    }

    // Moves to the next step with a live entry, not beyond `limit`; returns
    // false if none exists.
    bool advance(Step from, Step limit) {
        now_ = from;
        while (now_ <= limit) {
            pull_far();
            if (in_ring_ == 0) {
                if (far_.empty())
                    return false;
                now_ = far_.top().at;
                continue;
            }
            auto& b = ring_[now_ & mask_];
            for (const auto& e : b)
                if (e.at == now_ && version_[e.node] == e.version)
                    return true;
            // nothing live here; drop stale entries for this step
            drop(b);
            ++now_;
        }
        return false;
    }

    Step now() const { return now_; }

    // Live nodes due at now(), removed from the queue.
    void take_due(std::vector<Label>& out) {
        out.clear();
        auto& b = ring_[now_ & mask_];
        std::size_t keep = 0;
        for (std::size_t i = 0; i < b.size(); ++i) {
            const auto& e = b[i];
            if (e.at == now_) {
                if (version_[e.node] == e.version) {
                    out.push_back(e.node);
                    when_[e.node] = kNever;
                    ++version_[e.node];
                }
                --in_ring_;
            } else {
                b[keep++] = e;
            }
        }
        b.resize(keep);
        std::sort(out.begin(), out.end());
    }

    Step when(Label v) const { return when_[v]; }

private:
    struct Entry {
        Step at;
        Label node;
        std::uint32_t version;
        bool operator>(const Entry& o) const { return at > o.at; }
    };

    void pull_far() {
        while (!far_.empty() && far_.top().at - now_ <= static_cast<Step>(mask_)) {
            Entry e = far_.top();
            far_.pop();
            if (version_[e.node] != e.version)
                continue;
            ring_[e.at & mask_].push_back(e);
            ++in_ring_;
        }
    }

    // Rebuilds the heap from live entries; at most one per node survives.
    void compact_far() {
        std::vector<Entry> live;
        while (!far_.empty()) {
            if (version_[far_.top().node] == far_.top().version)
                live.push_back(far_.top());
            far_.pop();
        }
        far_ = decltype(far_)(std::greater<Entry>{}, std::move(live));
    }

    void drop(std::vector<Entry>& b) {
        std::size_t keep = 0;
        for (const auto& e : b) {
            if (e.at == now_)
                --in_ring_;
            else
                b[keep++] = e;
        }
        b.resize(keep);
    }

    std::size_t mask_;
    std::vector<std::vector<Entry>> ring_;
    std::size_t in_ring_ = 0;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> far_;
    std::vector<std::uint32_t> version_;
    std::vector<Step> when_;
    Step now_ = 0;
};

}  // namespace detail

// Runs a protocol on a tree until the root holds every rumor, the step cap is
// reached, or no node has a pending wakeup.
class Engine {
public:
    Engine(const Tree& tree, const Protocol& protocol, SimConfig cfg) : tree_(tree), protocol_(protocol), cfg_(cfg) {}

    void add_observer(StepObserver obs) { observers_.push_back(std::move(obs)); }

    SimResult run() {
        const std::size_t n = tree_.size();
        const Label root = tree_.root();
        if (protocol_.requires_ack() && !cfg_.ack_enabled)
            throw ConfigError(protocol_.name() + " requires acknowledgements");
        const Step max_steps = cfg_.max_steps.value_or(default_max_steps(n));
        if (max_steps < 1)
            throw ConfigError("max_steps must be >= 1");
        const std::uint32_t budget = control_budget(n, cfg_.c_bits);

        SimResult res;
        res.arrival_step.assign(n, kNever);
        res.arrival_step[root] = -1;
        if (cfg_.record_trace)
            res.trace.emplace();

        build_contexts(res);
        std::vector<std::unique_ptr<NodeAutomaton>> node(n);
        for (Label v = 0; v < n; ++v)
            if (v != root)
                node[v] = protocol_.make_node(contexts_[v]);

        std::vector<LabelSet> held(n);
        for (Label v = 0; v < n; ++v) {
            held[v] = LabelSet(n);
            held[v].insert(v);
        }
        std::size_t at_root = 1;
        if (n == 1) {
            res.completed = true;
            res.stop = StopReason::Completed;
            res.completion_step = 0;
            return res;
        }

        detail::WakeupQueue queue(n, detail::kWakeupRing);
        for (Label v = 0; v < n; ++v)
            if (v != root)
                queue.schedule(v, node[v]->next_wakeup(0));

        const bool want_events = cfg_.record_trace || !observers_.empty();
        std::vector<Label> due;
        std::vector<std::pair<Label, Message>> tx;
        std::vector<Step> tx_stamp(n, -1), cnt_stamp(n, -1);
        std::vector<std::uint32_t> cnt(n, 0);
        std::vector<std::uint32_t> first_tx(n, 0);  // index into tx
        std::vector<Label> touched_parents, acked, touched;
        std::vector<Step> touched_stamp(n, -1);
        StepEvents ev;

        Step t = 0;
        res.stop = StopReason::Stalled;
        while (true) {
            if (!queue.advance(t, max_steps - 1)) {
                res.stop = queue.now() >= max_steps ? StopReason::Timeout : StopReason::Stalled;
                res.steps_run = std::min(queue.now(), max_steps);
                break;
            }
            t = queue.now();
            queue.take_due(due);
            tx.clear();
            touched.clear();
            for (Label v : due) {
                touched.push_back(v);
                touched_stamp[v] = t;
                auto msg = node[v]->act(t);
                if (!msg)
                    continue;
                if (msg->control_bits > budget || msg->control_bits > 64)
                    throw ProtocolViolation(ProtocolViolation::Kind::ControlBudget,
                                            "node " + std::to_string(v) + " sent " + std::to_string(msg->control_bits) +
                                                " control bits, budget " + std::to_string(budget));
                if (msg->has_rumor() && (msg->rumor >= n || !held[v].contains(msg->rumor)))
                    throw ProtocolViolation(ProtocolViolation::Kind::UnheldRumor,
                                            "node " + std::to_string(v) + " sent rumor " + std::to_string(msg->rumor) +
                                                " it does not hold at step " + std::to_string(t));
                tx.emplace_back(v, *msg);
                tx_stamp[v] = t;
            }
            if (!tx.empty()) {
                res.transmissions += tx.size();
                touched_parents.clear();
                for (std::uint32_t i = 0; i < tx.size(); ++i) {
                    Label p = tree_.parent(tx[i].first);
                    if (cnt_stamp[p] != t) {
                        cnt_stamp[p] = t;
                        cnt[p] = 0;
                        touched_parents.push_back(p);
                        first_tx[p] = i;
                    }
                    ++cnt[p];
                }
                if (want_events) {
                    ev = StepEvents{};
                    ev.t = t;
                    for (auto& [v, msg] : tx)
                        ev.tx.push_back({v, msg.rumor});
                }
                acked.clear();
                std::sort(touched_parents.begin(), touched_parents.end());
                for (Label p : touched_parents) {
                    if (cnt[p] >= 2) {
                        ++res.collisions;
                        if (want_events)
                            ev.collided.push_back(p);
                        continue;
                    }
                    if (cfg_.duplex == Duplex::Half && tx_stamp[p] == t)
                        continue;
                    const Label from = tx[first_tx[p]].first;
                    const Message* msg = &tx[first_tx[p]].second;
                    ++res.deliveries;
                    if (msg->has_rumor() && held[p].insert(msg->rumor) && p == root) {
                        res.arrival_step[msg->rumor] = t;
                        res.completion_step = t;
                        ++at_root;
                    }
                    if (p != root) {
                        node[p]->on_receive(t, *msg);
                        if (touched_stamp[p] != t) {
                            touched_stamp[p] = t;
                            touched.push_back(p);
                        }
                    }
                    if (want_events)
                        ev.rx.push_back({p, from, msg->rumor});
                    if (cfg_.ack_enabled)
                        acked.push_back(from);
                }
                std::sort(acked.begin(), acked.end());
                for (Label v : acked)
                    node[v]->on_ack(t);
                if (want_events) {
                    ev.ack = acked;
                    for (auto& o : observers_)
                        o(ev);
                    if (res.trace)
                        res.trace->push_back(ev);
                }
            }
            for (Label v : touched)
                queue.schedule(v, node[v]->next_wakeup(t + 1));
            if (at_root == n) {
                res.completed = true;
                res.stop = StopReason::Completed;
                res.steps_run = t + 1;
                break;
            }
            ++t;
        }
        return res;
    }

private:
    void build_contexts(SimResult& res) {
        const std::size_t n = tree_.size();
        contexts_.clear();
        for (Label v = 0; v < n; ++v)
            contexts_.emplace_back(v, n);
        const OracleRequest req = protocol_.oracle_request();
        if (!cfg_.oracle || (!req.subtree_size && req.heights.empty()))
            return;
        res.oracle_used = true;
        const auto sizes = subtree_sizes(tree_);
        if (req.subtree_size)
            for (Label v = 0; v < n; ++v)
                contexts_[v].size_ = sizes[v];
        for (const auto& q : req.heights) {
            auto member = heavy_subtree(sizes, q.threshold);
            auto h = detail::gamma_heights_within(tree_, q.gamma, member);
            for (Label v = 0; v < n; ++v)
                contexts_[v].heights_.push_back(member[v] ? std::optional<std::uint32_t>(h[v]) : std::nullopt);
        }
    }

    const Tree& tree_;
    const Protocol& protocol_;
    SimConfig cfg_;
    std::vector<NodeContext> contexts_;
    std::vector<StepObserver> observers_;
};

inline SimResult run(const Tree& tree, const Protocol& protocol, const SimConfig& cfg = {},
                     std::vector<StepObserver> observers = {}) {
    Engine e(tree, protocol, cfg);
    for (auto& o : observers)
        e.add_observer(std::move(o));
    return e.run();
}

struct ResultCheck {
    bool ok = true;
    std::vector<std::string> problems;
    std::vector<Label> missing;
};

// Completion, distinct arrival steps, and (with a trace) an independent
// recount of collisions, deliveries and root arrivals.
inline ResultCheck check_result(const Tree& tree, const SimResult& r) {
    ResultCheck c;
    auto fail = [&](std::string s) {
        c.ok = false;
        c.problems.push_back(std::move(s));
    };
    c.missing = r.missing();
    if (!r.completed)
        fail(std::string("run did not complete (") + to_string(r.stop) + ")");
    if (!c.missing.empty())
        fail(std::to_string(c.missing.size()) + " rumors never reached the root");
    std::vector<Step> steps;
    for (Label v = 0; v < r.arrival_step.size(); ++v)
        if (v != tree.root() && r.arrival_step[v] != kNever)
            steps.push_back(r.arrival_step[v]);
    std::sort(steps.begin(), steps.end());
    if (std::adjacent_find(steps.begin(), steps.end()) != steps.end())
        fail("two rumors reached the root at the same step");
    if (r.trace) {
        std::uint64_t coll = 0, tx = 0;
        std::vector<Step> root_rx(r.arrival_step.size(), kNever);
        std::vector<char> seen(r.arrival_step.size(), 0);
        for (const auto& ev : *r.trace) {
            tx += ev.tx.size();
            std::vector<Label> parents;
            for (const auto& e : ev.tx)
                parents.push_back(tree.parent(e.node));
            std::sort(parents.begin(), parents.end());
            for (std::size_t i = 0; i < parents.size();) {
                std::size_t j = i;
                while (j < parents.size() && parents[j] == parents[i])
                    ++j;
                coll += (j - i) >= 2;
                i = j;
            }
            for (const auto& e : ev.rx)
                if (e.parent == tree.root() && e.rumor != kNoLabel && !seen[e.rumor]) {
                    seen[e.rumor] = 1;
                    root_rx[e.rumor] = ev.t;
                }
        }
        if (coll != r.collisions)
            fail("trace collision recount " + std::to_string(coll) + " != " + std::to_string(r.collisions));
        if (tx != r.transmissions)
            fail("trace transmission recount differs");
        for (Label v = 0; v < root_rx.size(); ++v)
            if (v != tree.root() && root_rx[v] != r.arrival_step[v])
                fail("arrival step of rumor " + std::to_string(v) + " disagrees with trace");
    }
    return c;
}

}  // namespace gather
