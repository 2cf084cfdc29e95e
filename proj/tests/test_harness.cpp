#include <gtest/gtest.h>

#include <filesystem>

#include "gather/harness.hpp"

using namespace gather;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.corpus.kinds = {"path", "star"};
    c.corpus.sizes = {64};
    ProtocolSpec rr;
    rr.protocol = "RoundRobin";
    c.protocols = {rr};
    return c;
}

RunRow row(const std::string& proto, std::size_t n, Step done, Step sched = -1, bool completed = true) {
    RunRow r;
    r.protocol = proto;
    r.n = n;
    r.tree_id = "t" + std::to_string(n) + "-" + std::to_string(done);
    r.run_id = proto + "/" + r.tree_id;
    r.completion_step = done;
    r.schedule_end = sched;
    r.completed = completed;
    return r;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("gather_test_" + name)).string();
}

}  // namespace

TEST(Experiment, RoundRobinRowsWithinNSquared) {
    FamilyCache cache;
    auto rep = run_experiment(small_config(), cache);
    ASSERT_EQ(rep.rows.size(), 2u);
    for (const auto& r : rep.rows) {
        EXPECT_TRUE(r.completed);
        EXPECT_LT(r.completion_step, 64 * 64);
        EXPECT_EQ(r.protocol, "RoundRobin");
    }
    EXPECT_EQ(rep.rows[0].tree_id, "path-n64");
    EXPECT_EQ(rep.rows[1].tree_id, "star-n64");
}

TEST(Experiment, ByteIdenticalOnRepeatAndAcrossWorkers) {
    auto c = small_config();
    c.corpus.kinds.push_back("random-attachment");
    c.corpus.random_seeds = 3;
    ProtocolSpec sg;
    sg.protocol = "SimpleGather";
    c.protocols.push_back(sg);
    FamilyCache a, b;
    const auto first = rows_to_csv(run_experiment(c, a).rows);
    c.jobs = 3;
    const auto second = rows_to_csv(run_experiment(c, b).rows);
    EXPECT_EQ(first, second);
}

TEST(Experiment, LinGatherWithoutAckFailsBeforeRunning) {
    auto c = small_config();
    ProtocolSpec lin;
    lin.protocol = "LinGather";
    c.protocols.push_back(lin);
    c.out.csv = temp_path("never.csv");
    std::filesystem::remove(c.out.csv);
    FamilyCache cache;
    EXPECT_THROW(run_experiment(c, cache), ConfigError);
    EXPECT_EQ(cache.misses(), 0u);
    EXPECT_FALSE(std::filesystem::exists(c.out.csv));
    c.protocols.back().half_duplex = true;
    c.ack = true;
    EXPECT_THROW(run_experiment(c, cache), Unsupported);
}

TEST(Experiment, UnknownProtocol) {
    auto c = small_config();
    c.protocols[0].protocol = "Gossip";
    FamilyCache cache;
    EXPECT_THROW(run_experiment(c, cache), ConfigError);
}

TEST(Experiment, FitsAndNotes) {
    auto c = small_config();
    c.corpus.sizes = {16, 32, 64};
    c.envelopes["RoundRobin"] = Envelope::N2;
    c.envelopes["SimpleGather"] = Envelope::Schedule;
    FamilyCache cache;
    auto rep = run_experiment(c, cache);
    ASSERT_EQ(rep.fits.size(), 1u);
    EXPECT_LE(rep.fits[0].c_max, 1.0);
    EXPECT_EQ(rep.fits[0].table.size(), 3u);
    ASSERT_EQ(rep.notes.size(), 1u);
    EXPECT_NE(rep.notes[0].find("SimpleGather"), std::string::npos);
}

TEST(Fit, NeedsThreeSizes) {
    std::vector<RunRow> rows{row("X", 10, 5), row("X", 20, 9)};
    EXPECT_THROW(fit_envelope(rows, Envelope::N), InsufficientData);
    rows.push_back(row("X", 40, 30));
    auto f = fit_envelope(rows, Envelope::N);
    EXPECT_DOUBLE_EQ(f.c_max, 0.75);
    EXPECT_EQ(f.witness, rows[2].run_id);
    EXPECT_DOUBLE_EQ(f.drift(), 0.75 / 0.45);
    EXPECT_DOUBLE_EQ(f.drift(20, 40), 0.75 / 0.45);
}

TEST(Fit, IncompleteRunIsInfinite) {
    std::vector<RunRow> rows{row("X", 10, 5), row("X", 20, 9), row("X", 40, -1, -1, false)};
    auto f = fit_envelope(rows, Envelope::N);
    EXPECT_TRUE(std::isinf(f.c_max));
    EXPECT_EQ(f.witness, rows[2].run_id);
}

TEST(Fit, ScheduleEnvelope) {
    std::vector<RunRow> rows{row("S", 10, 50, 100), row("S", 20, 90, 100), row("S", 40, 100, 100)};
    EXPECT_DOUBLE_EQ(fit_envelope(rows, Envelope::Schedule).c_max, 1.0);
    rows[0].schedule_end = -1;
    EXPECT_THROW(fit_envelope(rows, Envelope::Schedule), ConfigError);
    EXPECT_DOUBLE_EQ(envelope_value(Envelope::NLogLogN, row("S", 256, 1)), 256 * 3.0);
}

TEST(Emit, CsvRoundTrip) {
    std::vector<RunRow> rows{row("A", 10, 5, 7), row("B,with comma", 20, 9)};
    rows[1].params = "k=\"3\";m=9";
    rows[1].audit = "copy-front: bad, very bad";
    const auto text = rows_to_csv(rows);
    EXPECT_EQ(rows_from_csv(text), rows);
    EXPECT_EQ(rows_to_csv(rows_from_csv(text)), text);
}

TEST(Emit, EmptyReportHeaderOnly) {
    Report rep;
    EXPECT_EQ(render(rep, Format::Csv), std::string(kCsvHeader) + "\n");
    EXPECT_TRUE(rows_from_csv(render(rep, Format::Csv)).empty());
    EXPECT_EQ(render(rep, Format::Plot), "protocol,envelope,n,ratio_max,ratio_mean\n");
}

TEST(Emit, CsvErrors) {
    EXPECT_THROW(rows_from_csv(""), ParseError);
    EXPECT_THROW(rows_from_csv("foo,bar\n"), ParseError);
    try {
        rows_from_csv(std::string(kCsvHeader) + "\nx,t,P,notanumber,,1,3,4,0,0,0,-1,,0\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
        EXPECT_EQ(e.field(), "n");
    }
}

TEST(Emit, JsonRoundTripAndMarkdown) {
    Report rep;
    rep.rows = {row("A", 10, 5, 7), row("A", 20, 9, 30), row("A", 40, -1, 50, false)};
    rep.rows[0].progress = 1.2345678901;
    rep.fits.push_back(fit_envelope(rep.rows, Envelope::N));
    rep.structures.push_back({"strong", 8, 3, 20, "exhaustive", true, true, "mult=1", ""});
    rep.structures.push_back({"amortizing", 8, 4, 64, "exhaustive", false, true, "rate=0/64", "level 1 A={0} v=0"});
    rep.criteria.push_back({"1-correctness", true, "fine", ""});
    rep.criteria.push_back({"2-scaling", false, "drift", "A/t40"});
    rep.notes.push_back("a note");
    const auto back = report_from_json(json::parse(render(rep, Format::Json)));
    EXPECT_EQ(back, rep);
    const auto md = render(rep, Format::Markdown);
    EXPECT_NE(md.find("| 1-correctness | PASS |"), std::string::npos);
    EXPECT_NE(md.find("| 2-scaling | FAIL |"), std::string::npos);
    EXPECT_NE(md.find("1 of 2 verified"), std::string::npos);
    EXPECT_NE(render(rep, Format::Plot).find("A,n,40,inf,inf"), std::string::npos);

    const auto path = temp_path("report.json");
    emit(rep, Format::Json, path);
    EXPECT_EQ(report_from_json(json::parse(detail::read_file(path))), rep);
    EXPECT_THROW(emit(rep, Format::Csv, "/nonexistent-dir/x.csv"), IoError);
    EXPECT_THROW(parse_format("xml"), ConfigError);
}

TEST(Config, ParsesExperimentAndBareProtocol) {
    auto c = experiment_from_json(json::parse(R"({
        "corpus": {"kinds": ["path", "broom"], "sizes": [16, 32], "random_seeds": 2},
        "protocols": [{"protocol": "FastGather", "beta": 3, "half_duplex": true},
                      {"protocol": "LinGather", "ack": true, "rows": 64}],
        "ack": false, "audit": true, "jobs": 2,
        "envelopes": {"FastGather-b3+hd": "nloglogn"},
        "out": {"csv": "a.csv"}})"));
    ASSERT_EQ(c.protocols.size(), 2u);
    EXPECT_EQ(c.protocols[0].label(), "FastGather-b3+hd");
    EXPECT_TRUE(c.protocols[0].effective_transforms().parity_sync);
    EXPECT_EQ(*c.protocols[1].rows, 64u);
    EXPECT_EQ(c.corpus.sizes, (std::vector<std::size_t>{16, 32}));
    EXPECT_EQ(c.envelopes.at("FastGather-b3+hd"), Envelope::NLogLogN);
    EXPECT_EQ(c.out.csv, "a.csv");
    EXPECT_TRUE(c.audit);

    auto bare = experiment_from_json(json::parse(R"({"protocol": "SimpleGather", "seed": 4})"));
    ASSERT_EQ(bare.protocols.size(), 1u);
    EXPECT_EQ(bare.protocols[0].seed, 4u);

    auto back = protocol_from_json(to_json(c.protocols[0]));
    EXPECT_EQ(back.label(), c.protocols[0].label());
    EXPECT_THROW(protocol_from_json(json::parse(R"({"protocol": "X", "transforms": ["flip"]})")), ParseError);
    EXPECT_THROW(experiment_from_json(json::parse(R"({"corpus": {"kinds": ["blob"]}})")), TreeError);
    EXPECT_THROW(load_experiment("/nonexistent/cfg.json"), IoError);
}

TEST(Structures, SmallGridExhaustive) {
    StructureGrid g;
    g.strong_n = {8};
    g.strong_k = {2, 3};
    g.dist_n = {8};
    g.dist_k = {1, 2};
    g.amort_n = {8};
    g.amort_k = {4};
    const auto rows = verify_structures(g);
    ASSERT_EQ(rows.size(), 5u);
    for (const auto& r : rows) {
        EXPECT_TRUE(r.ok) << r.family << " " << r.detail << " " << r.witness;
        EXPECT_EQ(r.mode, "exhaustive") << r.family;
    }
    EXPECT_TRUE(criterion_structures(rows).passed);
}

TEST(Structures, UndersizedFamiliesReportWitness) {
    StructureGrid g;
    g.strong_n = {16};
    g.strong_k = {4};
    g.dist_n = {};
    g.amort_n = {};
    g.multiplier = 0.1;
    g.doublings = 0;
    const auto rows = verify_structures(g);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_FALSE(rows[0].ok);
    EXPECT_NE(rows[0].witness.find("not isolated"), std::string::npos);
    const auto c = criterion_structures(rows);
    EXPECT_FALSE(c.passed);
    EXPECT_EQ(c.witness, "strong n=16 k=4");
}

TEST(Structures, DistinguisherGap) {
    auto d = build_distinguisher(16, 2, 1.0, 1);
    EXPECT_GT(d.gap(), 0);
    EXPECT_GT(d.xi, d.m2);
    EXPECT_LT(d.xi, d.m1);
}

TEST(Cache, ReusesFamilies) {
    FamilyCache cache;
    auto a = cache.strong(16, 2, 1.0, 1);
    auto b = cache.strong(16, 2, 1.0, 1);
    auto c = cache.strong(16, 2, 1.0, 2);
    EXPECT_EQ(a.get(), b.get());
    EXPECT_NE(a.get(), c.get());
    EXPECT_EQ(cache.hits(), 1u);
    EXPECT_EQ(cache.misses(), 2u);
}

TEST(Criteria, CorrectnessAndHalfDuplex) {
    std::vector<RunRow> rows{row("RoundRobin", 4, 10, 16), row("SimpleGather", 4, 10, 12)};
    EXPECT_TRUE(criterion_correctness(rows).passed);
    rows.push_back(row("RoundRobin", 4, 16, 16));
    auto c = criterion_correctness(rows);
    EXPECT_FALSE(c.passed);
    EXPECT_EQ(c.witness, rows[2].run_id);
    rows.pop_back();
    rows.push_back(row("SimpleGather+hd", 4, 13, 12));
    auto h = criterion_half_duplex(rows);
    EXPECT_FALSE(h.passed);
    EXPECT_EQ(h.id, "7-half-duplex");
    EXPECT_FALSE(criterion_correctness({}).passed);
}

TEST(Criteria, LeafBoundAndEstimator) {
    std::vector<TreeSpec> ts{{parse_kind("complete-binary"), 63, 0}, {parse_kind("broom"), 100, 0}};
    EXPECT_TRUE(criterion_leaf_bound(ts, {2, 3, 4, 8}).passed);
    auto e = criterion_estimator(16, 0.5, 1);
    EXPECT_TRUE(e.passed) << e.detail << " " << e.witness;
}

TEST(Criteria, AuditsUseFrozenConstant) {
    std::vector<RunRow> simple{row("SimpleGather", 8, 3, 9)};
    simple[0].audit = "ok";
    std::vector<RunRow> fit{row("LinGather", 8, 3)}, held{row("LinGather", 8, 3)};
    fit[0].progress = 2.0;
    held[0].progress = 2.4;
    EXPECT_TRUE(criterion_audits(simple, fit, held, 2.5, 1.25).passed);
    EXPECT_FALSE(criterion_audits(simple, fit, held, 2.3, 1.0).passed);
    EXPECT_FALSE(criterion_audits(simple, fit, held, 2.45, 1.25).passed);
    simple[0].audit = "copy-front: x";
    EXPECT_FALSE(criterion_audits(simple, fit, held, 2.5, 1.25).passed);
}

TEST(RunOne, WritesTrace) {
    const auto dir = temp_path("traces");
    std::filesystem::remove_all(dir);
    auto c = small_config();
    c.corpus.kinds = {"star"};
    c.corpus.sizes = {8};
    c.trace_dir = dir;
    FamilyCache cache;
    auto rep = run_experiment(c, cache);
    const auto path = dir + "/RoundRobin_star-n8.jsonl";
    ASSERT_TRUE(std::filesystem::exists(path));
    const auto trace = parse_trace(detail::read_file(path));
    EXPECT_EQ(trace.size(), 7u);
    EXPECT_EQ(trace.back().t, rep.rows[0].completion_step);
}
