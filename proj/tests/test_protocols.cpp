#include <gtest/gtest.h>

#include <cmath>

#include "gather/harness.hpp"

using namespace gather;

namespace {

FamilyCache& cache() {
    static FamilyCache c;
    return c;
}

ProtocolSpec spec(const std::string& name) {
    ProtocolSpec p;
    p.protocol = name;
    return p;
}

SimResult run_spec(const Tree& t, const ProtocolSpec& p, bool trace = false) {
    auto inst = make_protocol(p, t.size(), cache());
    SimConfig cfg;
    cfg.ack_enabled = p.protocol == "LinGather";
    cfg.duplex = p.half_duplex ? Duplex::Half : Duplex::Simultaneous;
    cfg.max_steps = inst.max_steps;
    cfg.record_trace = trace;
    return run(t, *inst.protocol, cfg);
}

std::vector<Tree> shapes(std::size_t n) {
    std::vector<Tree> out;
    for (const char* k : {"path", "star", "complete-binary", "caterpillar", "broom"})
        out.push_back(generate(parse_kind(k), n));
    for (std::uint64_t s = 1; s <= 3; ++s)
        out.push_back(generate(parse_kind("random-attachment"), n, s));
    return out;
}

// Root with two arms of equal length.
Tree two_branch(std::size_t n) {
    std::vector<Label> p(n, kNoLabel);
    const std::size_t arm = (n - 1) / 2;
    for (Label v = 1; v < n; ++v)
        p[v] = v == 1 || v == arm + 1 ? 0 : v - 1;
    return validate_tree(p);
}

// Oracle for the SimpleGather constants, in floating point.
std::uint64_t oracle_K(std::size_t n) {
    return std::max<std::uint64_t>(2, std::uint64_t{1} << static_cast<int>(std::floor(std::sqrt(std::log2(n)))));
}

}  // namespace

TEST(RoundRobin, FinishesWithinNSquared) {
    for (std::size_t n : {2, 10, 64}) {
        for (const auto& t : shapes(n)) {
            auto r = run_spec(t, spec("RoundRobin"));
            ASSERT_TRUE(r.completed);
            EXPECT_LT(*r.completion_step, static_cast<Step>(n * n));
        }
    }
}

TEST(RoundRobin, StarOfThree) {
    auto t = generate(parse_kind("star"), 3);
    auto r = run_spec(t, spec("RoundRobin"));
    ASSERT_TRUE(r.completed);
    EXPECT_LE(*r.completion_step, 9);
    EXPECT_EQ(r.collisions, 0u);
    EXPECT_EQ(r.arrival_step, (std::vector<Step>{-1, 1, 2}));
}

TEST(RoundRobin, SingleNode) {
    auto r = run_spec(generate(parse_kind("path"), 1), spec("RoundRobin"));
    EXPECT_TRUE(r.completed);
    EXPECT_EQ(*r.completion_step, 0);
}

TEST(SimpleGather, ScheduleLength) {
    for (std::size_t n : {16, 64, 256, 1024}) {
        const auto K = oracle_K(n);
        EXPECT_EQ(simple_gather_K(n), K) << n;
        const auto D = static_cast<std::uint64_t>(std::ceil(std::log(n) / std::log(K) - 1e-9));
        const auto Dp = static_cast<std::uint64_t>(std::ceil(3 * std::log2(K) - 1e-9));
        auto inst = make_protocol(spec("SimpleGather"), n, cache());
        const auto& plan = dynamic_cast<const SimpleGather&>(*inst.protocol).plan();
        EXPECT_EQ(plan.D, D);
        EXPECT_EQ(plan.Dp, Dp);
        const std::uint64_t P1 = (n + K * K * K - 1) / (K * K * K) * plan.epoch1.m();
        EXPECT_EQ(static_cast<std::uint64_t>(plan.total()), (D + 1) * (P1 + n) + (Dp + 1) * (2 * n)) << n;
        EXPECT_EQ(*inst.schedule_end, plan.total());
    }
}

TEST(SimpleGather, BoundariesContiguous) {
    auto inst = make_protocol(spec("SimpleGather"), 256, cache());
    const auto b = dynamic_cast<const SimpleGather&>(*inst.protocol).boundaries();
    ASSERT_FALSE(b.empty());
    EXPECT_EQ(b.front().start, 0);
    for (std::size_t i = 0; i < b.size(); ++i) {
        EXPECT_LE(b[i].start, b[i].end);
        if (i > 0) {
            EXPECT_EQ(b[i].start, b[i - 1].end) << b[i].what;
        }
    }
    EXPECT_EQ(b.back().end, *inst.schedule_end);
}

TEST(SimpleGather, StarJustAboveKCubed) {
    // Every leaf is light and the root alone is heavy.
    const std::size_t n = 65;
    ASSERT_EQ(simple_gather_K(n), 4u);
    auto t = generate(parse_kind("star"), n);
    auto r = run_spec(t, spec("SimpleGather"), true);
    ASSERT_TRUE(r.completed);
    EXPECT_TRUE(check_result(t, r).ok);
}

TEST(SimpleGather, CompletesWithinScheduleAndAudits) {
    for (std::size_t n : {16, 64, 256}) {
        for (std::uint64_t seed : {1, 2}) {
            for (const char* k : {"path", "star", "complete-binary", "caterpillar", "broom", "random-attachment"}) {
                TreeSpec ts{parse_kind(k), n, seed};
                auto p = spec("SimpleGather");
                p.seed = seed;
                RunOptions opt;
                opt.audit = true;
                auto row = run_one(ts, p, cache(), opt);
                EXPECT_TRUE(row.completed) << row.run_id;
                EXPECT_LE(row.completion_step, row.schedule_end) << row.run_id;
                EXPECT_EQ(row.audit, "ok") << row.run_id;
            }
        }
    }
}

TEST(FastGather, DegenerateLadderStillCompletes) {
    for (std::size_t n : {8, 64, 1024})
        for (const auto& t : shapes(n)) {
            auto r = run_spec(t, spec("FastGather"), true);
            ASSERT_TRUE(r.completed) << n;
            EXPECT_TRUE(check_result(t, r).ok);
        }
}

TEST(FastGather, Beta3HasSelectorEpoch) {
    const std::size_t n = 4096;
    auto p = spec("FastGather");
    p.beta = 3;
    auto inst = make_protocol(p, n, cache());
    const auto& plan = dynamic_cast<const FastGather&>(*inst.protocol).plan();
    ASSERT_EQ(plan.ladder.L, 1u);
    EXPECT_EQ(plan.ladder.K[1], 16u);
    ASSERT_GT(plan.epochs[0].stages, 0u);
    for (std::uint64_t seed : {1, 2}) {
        RunOptions opt;
        opt.audit = true;
        auto row = run_one({parse_kind("random-attachment"), n, seed}, p, cache(), opt);
        EXPECT_TRUE(row.completed);
        EXPECT_LE(row.completion_step, row.schedule_end);
        EXPECT_EQ(row.audit, "ok");
    }
}

TEST(FastGather, LadderBeta2VacuousAtDeskScale) {
    for (std::size_t n : {1024, 4096}) {
        const auto lad = ladder_params(n, 2);
        ASSERT_GE(lad.L, 1u);
        EXPECT_TRUE(fast_gather_epoch_empty(lad, 1)) << n;
    }
}

TEST(HalfDuplex, ParityTransmitAlternatesOnPath) {
    const std::size_t n = 64;
    auto t = generate(parse_kind("path"), n);
    auto p = spec("SimpleGather");
    p.half_duplex = true;
    auto inst = make_protocol(p, n, cache());
    const auto& sg = dynamic_cast<const SimpleGather&>(*inst.protocol);
    auto r = run_spec(t, p, true);
    ASSERT_TRUE(r.completed);
    std::size_t windows = 0, steps = 0;
    for (const auto& b : sg.boundaries()) {
        if (b.what.find("parity-transmit") == std::string::npos)
            continue;
        ++windows;
        for (const auto& ev : *r.trace) {
            if (ev.t < b.start || ev.t >= b.end)
                continue;
            ++steps;
            std::set<Label> tx;
            for (const auto& e : ev.tx)
                tx.insert(e.node);
            for (Label v : tx)
                EXPECT_FALSE(t.parent(v) != kNoLabel && tx.count(t.parent(v))) << "step " << ev.t;
            for (Label v : tx)
                EXPECT_EQ(t.depth(v) % 2, t.depth(*tx.begin()) % 2);
        }
    }
    EXPECT_GT(windows, 0u);
    EXPECT_GT(steps, 0u);
}

TEST(HalfDuplex, TransformedProtocolsComplete) {
    for (const char* name : {"SimpleGather", "FastGather"})
        for (std::size_t n : {16, 64, 256})
            for (const auto& t : shapes(n)) {
                auto p = spec(name);
                p.half_duplex = true;
                auto r = run_spec(t, p, true);
                ASSERT_TRUE(r.completed) << name << " n=" << n;
                EXPECT_TRUE(check_result(t, r).ok);
                EXPECT_LE(*r.completion_step, *make_protocol(p, n, cache()).schedule_end);
            }
}

TEST(HalfDuplex, UntransformedCanFail) {
    // Without the transforms a transmitting parent loses its child's message.
    std::size_t failures = 0;
    for (const auto& t : shapes(64)) {
        auto p = spec("SimpleGather");
        p.half_duplex = true;
        p.transforms = Transforms{};
        failures += !run_spec(t, p).completed;
    }
    EXPECT_GT(failures, 0u);
}

TEST(LinGather, RequiresAckAndRejectsHalfDuplex) {
    auto p = spec("LinGather");
    EXPECT_THROW(validate(p, false), ConfigError);
    EXPECT_NO_THROW(validate(p, true));
    p.half_duplex = true;
    EXPECT_THROW(validate(p, true), Unsupported);
    auto inst = make_protocol(spec("LinGather"), 64, cache());
    SimConfig cfg;
    EXPECT_THROW(run(generate(parse_kind("path"), 64), *inst.protocol, cfg), ConfigError);
}

TEST(LinGather, Parameters) {
    EXPECT_EQ(lin_gather_K(256, 0.07), 2u);
    EXPECT_EQ(lin_gather_amortizing_k(2), 16u);
    auto inst = make_protocol(spec("LinGather"), 256, cache());
    const auto& plan = dynamic_cast<const LinGather&>(*inst.protocol).plan();
    EXPECT_EQ(plan.K, 2u);
    EXPECT_EQ(plan.s, 256u);
    EXPECT_EQ(plan.stage_length(), static_cast<Step>(2 * (plan.D1 + plan.s)));
    EXPECT_EQ(plan.epoch1.active_below, 256u / 8 + 1);
}

TEST(LinGather, CompletesOnShapes) {
    for (std::size_t n : {64, 256}) {
        std::vector<Tree> ts = shapes(n);
        ts.push_back(two_branch(n));
        for (const auto& t : ts) {
            auto r = run_spec(t, spec("LinGather"), true);
            ASSERT_TRUE(r.completed) << n;
            EXPECT_TRUE(check_result(t, r).ok);
            EXPECT_TRUE(copy_front_audit(t, *r.trace).ok);
        }
    }
}

TEST(LinGather, TwoBranchProgress) {
    // Each heavy node must collect its subtree in time linear in its size,
    // first on a path, then with two heavy arms contending at the root.
    const std::size_t n = 257;
    auto p = spec("LinGather");
    p.ack = true;
    RunOptions opt;
    opt.audit = true;
    TreeSpec ts{parse_kind("path"), n, 0};
    auto row = run_one(ts, p, cache(), opt);
    EXPECT_TRUE(row.completed);
    EXPECT_EQ(row.audit, "ok");
    EXPECT_GT(row.progress, 0);
    EXPECT_LT(row.progress, 64);

    auto t = two_branch(n);
    auto inst = make_protocol(p, n, cache());
    const auto& lg = dynamic_cast<const LinGather&>(*inst.protocol);
    const auto sizes = subtree_sizes(t);
    std::vector<char> heavy(n);
    for (Label v = 0; v < n; ++v)
        heavy[v] = v != t.root() && sizes[v] >= lg.plan().epoch1.active_below;
    AcquisitionRecorder rec(t, heavy, lg.plan().epoch2_start);
    SimConfig cfg;
    cfg.ack_enabled = true;
    cfg.max_steps = inst.max_steps;
    auto r = run(t, lg, cfg, {rec.observer()});
    ASSERT_TRUE(r.completed);
    EXPECT_TRUE(progress_audit(t, rec, heavy, 64).ok);
    const auto batch = progress_ratio(t, rec, heavy);
    EXPECT_DOUBLE_EQ(rec.fit().c, batch.c);
    EXPECT_EQ(rec.fit().node, batch.node);
    EXPECT_EQ(rec.fit().j, batch.j);
}
