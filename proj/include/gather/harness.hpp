#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <tuple>

#include "gather/audit.hpp"
#include "gather/io.hpp"
#include "gather/protocols.hpp"

namespace gather {

// ---------------------------------------------------------------------------
// Corpus

struct TreeSpec {
    TreeKind kind;
    std::size_t n = 1;
    std::uint64_t seed = 0;  // only random-attachment uses it

    bool random() const { return kind.type == TreeKind::Type::RandomAttachment; }
    std::string id() const {
        std::string s = kind_name(kind) + "-n" + std::to_string(n);
        if (random())
            s += "-s" + std::to_string(seed);
        return s;
    }
    Tree build() const { return generate(kind, n, seed); }
};

struct CorpusSpec {
    std::vector<std::string> kinds{"path", "star", "complete-binary", "caterpillar", "broom", "random-attachment"};
    std::vector<std::size_t> sizes{64, 256, 1024, 4096};
    std::uint32_t random_seeds = 5;
    std::uint64_t seed_base = 1;

    std::vector<TreeSpec> trees() const {
        std::vector<TreeSpec> out;
        for (auto n : sizes)
            for (const auto& k : kinds) {
                TreeKind kind = parse_kind(k);
                if (kind.type == TreeKind::Type::RandomAttachment) {
                    for (std::uint32_t i = 0; i < random_seeds; ++i)
                        out.push_back({kind, n, seed_base + i});
                } else {
                    out.push_back({kind, n, 0});
                }
            }
        return out;
    }
};

inline const std::vector<std::size_t> kDefaultSizes{64, 256, 1024, 4096};
inline const std::vector<std::size_t> kScalingSizes{64, 256, 1024, 4096, 16384};

inline CorpusSpec default_corpus(std::vector<std::size_t> sizes = kDefaultSizes) {
    CorpusSpec c;
    c.sizes = std::move(sizes);
    return c;
}

// `count` random-attachment trees per size with seeds disjoint from the default corpus.
inline std::vector<TreeSpec> held_out_corpus(const std::vector<std::size_t>& sizes, std::uint32_t count,
                                             std::uint64_t seed_base = 1000) {
    std::vector<TreeSpec> out;
    for (auto n : sizes)
        for (std::uint32_t i = 0; i < count; ++i)
            out.push_back({parse_kind("random-attachment"), n, seed_base + i});
    return out;
}

// ---------------------------------------------------------------------------
// Protocol specs

struct ProtocolSpec {
    std::string protocol = "SimpleGather";  // RoundRobin | SimpleGather | FastGather | LinGather
    std::uint32_t beta = 2;
    double delta = 0.07;
    std::uint64_t seed = 1;
    bool half_duplex = false;
    bool oracle = true;
    std::optional<bool> ack;                 // falls back to the experiment flag
    std::optional<Transforms> transforms;    // default: both iff half_duplex
    double multiplier = 1.0;                 // strong selector size multiplier
    std::optional<std::size_t> rows;         // LinGather amortizing rows
    std::optional<CorpusSpec> corpus;        // overrides the experiment corpus

    Transforms effective_transforms() const {
        return transforms ? *transforms : (half_duplex ? Transforms::half_duplex() : Transforms{});
    }
    std::string label() const {
        std::string s = protocol;
        if (protocol == "FastGather" && beta != 2)
            s += "-b" + std::to_string(beta);
        if (half_duplex)
            s += "+hd";
        else if (effective_transforms().any())
            s += "+tr";
        return s;
    }
};

inline json to_json(const ProtocolSpec& p) {
    json j{{"protocol", p.protocol}, {"beta", p.beta},         {"delta", p.delta},
           {"seed", p.seed},         {"half_duplex", p.half_duplex}, {"oracle", p.oracle},
           {"multiplier", p.multiplier}};
    if (p.ack)
        j["ack"] = *p.ack;
    if (p.transforms) {
        json t = json::array();
        if (p.transforms->selector_swap)
            t.push_back("selector-swap");
        if (p.transforms->parity_sync)
            t.push_back("parity-sync");
        j["transforms"] = t;
    }
    if (p.rows)
        j["rows"] = *p.rows;
    return j;
}

inline CorpusSpec corpus_from_json(const json& j) {
    CorpusSpec c;
    try {
        if (j.contains("kinds"))
            c.kinds = j["kinds"].get<std::vector<std::string>>();
        if (j.contains("sizes"))
            c.sizes = j["sizes"].get<std::vector<std::size_t>>();
        c.random_seeds = j.value("random_seeds", c.random_seeds);
        c.seed_base = j.value("seed_base", c.seed_base);
    } catch (const json::exception& e) {
        throw ParseError(1, "corpus", e.what());
    }
    for (const auto& k : c.kinds)
        parse_kind(k);
    return c;
}

inline ProtocolSpec protocol_from_json(const json& j) {
    if (!j.is_object())
        throw ParseError(1, "protocol", "expected an object");
    ProtocolSpec p;
    try {
        p.protocol = j.at("protocol").get<std::string>();
        p.beta = j.value("beta", p.beta);
        p.delta = j.value("delta", p.delta);
        p.seed = j.value("seed", p.seed);
        p.half_duplex = j.value("half_duplex", p.half_duplex);
        p.oracle = j.value("oracle", p.oracle);
        p.multiplier = j.value("multiplier", p.multiplier);
        if (j.contains("ack"))
            p.ack = j["ack"].get<bool>();
        if (j.contains("rows"))
            p.rows = j["rows"].get<std::size_t>();
        if (j.contains("transforms")) {
            Transforms t;
            for (const auto& s : j["transforms"].get<std::vector<std::string>>()) {
                if (s == "selector-swap")
                    t.selector_swap = true;
                else if (s == "parity-sync")
                    t.parity_sync = true;
                else
                    throw ParseError(1, "transforms", "unknown transform '" + s + "'");
            }
            p.transforms = t;
        }
    } catch (const json::exception& e) {
        throw ParseError(1, "protocol", e.what());
    }
    if (j.contains("corpus"))
        p.corpus = corpus_from_json(j["corpus"]);
    return p;
}

// ---------------------------------------------------------------------------
// Family cache, keyed by (type, n, k or lambda, multiplier, seed, extra).

class FamilyCache {
public:
    std::shared_ptr<const StrongSelector> strong(std::size_t n, std::size_t k, double mult, std::uint64_t seed) {
        return get<StrongSelector>({"strong", n, static_cast<double>(k), mult, seed, 0},
                                   [&] { return build_strong_selector(n, k, mult, seed); });
    }
    std::shared_ptr<const CardinalityEstimator> estimator(std::size_t n, double lambda, double mult,
                                                          std::uint64_t seed) {
        return get<CardinalityEstimator>({"estimator", n, lambda, mult, seed, 0},
                                         [&] { return build_estimator(n, lambda, seed, mult); });
    }
    std::shared_ptr<const AmortizingFamily> amortizing(std::size_t n, std::size_t k, std::size_t s,
                                                       std::uint64_t seed) {
        return get<AmortizingFamily>({"amortizing", n, static_cast<double>(k), 1.0, seed, s}, [&] {
            return build_amortizing_family(n, k, s, seed, 2.0, VerifyMode::Auto, false);
        });
    }
    std::size_t hits() const { return hits_; }
    std::size_t misses() const { return misses_; }

private:
    using Key = std::tuple<std::string, std::size_t, double, double, std::uint64_t, std::size_t>;

    template <typename T, typename Build>
    std::shared_ptr<const T> get(const Key& key, Build&& build) {
        std::lock_guard lock(mu_);
        if (auto it = map_.find(key); it != map_.end()) {
            ++hits_;
            return std::static_pointer_cast<const T>(it->second);
        }
        ++misses_;
        auto p = std::make_shared<const T>(build());
        map_.emplace(key, p);
        return p;
    }

    std::mutex mu_;
    std::map<Key, std::shared_ptr<const void>> map_;
    std::size_t hits_ = 0, misses_ = 0;
};

inline void validate(const ProtocolSpec& p, bool experiment_ack) {
    static const std::set<std::string> known{"RoundRobin", "SimpleGather", "FastGather", "LinGather"};
    if (!known.count(p.protocol))
        throw ConfigError("unknown protocol '" + p.protocol + "'");
    if (p.beta < 2)
        throw ConfigError("beta must be >= 2");
    if (!(p.delta > 0 && p.delta < 1))
        throw ConfigError("delta must lie in (0, 1)");
    if (!(p.multiplier > 0))
        throw ConfigError("multiplier must be positive");
    if (p.protocol == "LinGather") {
        if (p.half_duplex || p.effective_transforms().any())
            throw Unsupported("LinGather has no half-duplex transform");
        if (!p.ack.value_or(experiment_ack))
            throw ConfigError("LinGather requires acknowledgements (set \"ack\": true)");
    }
}

struct ProtocolInstance {
    std::unique_ptr<Protocol> protocol;
    std::string params;  // ';'-separated key=value
    std::optional<Step> schedule_end;
    Step max_steps = 0;
};

inline std::string fmt_double(double x) {
    std::ostringstream s;
    s << x;
    return s.str();
}

inline LinGatherPlan lin_gather_plan_for(const ProtocolSpec& p, std::size_t n, FamilyCache& cache) {
    const auto K = lin_gather_K(n, p.delta);
    auto sel = cache.strong(n, std::min<std::size_t>(n, K), p.multiplier, p.seed);
    auto est = cache.estimator(n, 3 * p.delta, 1.0, p.seed);
    const std::size_t s = p.rows.value_or(static_cast<std::size_t>(math::ipow_sat(K, 8)));
    auto am = cache.amortizing(n, lin_gather_amortizing_k(K), s, p.seed);
    return lin_gather_plan(n, p.delta, sel, est, am);
}

// Builds a protocol for trees of n nodes. max_steps leaves the fixed-schedule
// protocols one step past their schedule end and gives LinGather room for
// 4 log n + 4 epoch-2 stages.
inline ProtocolInstance make_protocol(const ProtocolSpec& p, std::size_t n, FamilyCache& cache) {
    ProtocolInstance out;
    const Transforms tr = p.effective_transforms();
    const Step N = static_cast<Step>(n);
    if (p.protocol == "RoundRobin") {
        out.protocol = std::make_unique<RoundRobin>(n);
        out.max_steps = N * N + 1;
    } else if (p.protocol == "SimpleGather") {
        const auto K = simple_gather_K(n);
        const auto k = selector_parameter(n, K, tr);
        auto plan = simple_gather_plan(n, K, cache.strong(n, k, p.multiplier, p.seed), tr);
        out.params = "K=" + std::to_string(K) + ";k=" + std::to_string(k) + ";m=" + std::to_string(plan.epoch1.m());
        out.protocol = std::make_unique<SimpleGather>(std::move(plan));
    } else if (p.protocol == "FastGather") {
        std::vector<std::shared_ptr<const StrongSelector>> sels;
        for (auto k : fast_gather_selector_parameters(n, p.beta, tr))
            sels.push_back(k ? cache.strong(n, k, p.multiplier, p.seed) : nullptr);
        auto plan = fast_gather_plan(n, p.beta, sels, tr);
        out.params = "beta=" + std::to_string(p.beta) + ";L=" + std::to_string(plan.ladder.L);
        out.protocol = std::make_unique<FastGather>(std::move(plan));
    } else if (p.protocol == "LinGather") {
        auto plan = lin_gather_plan_for(p, n, cache);
        out.params = "delta=" + fmt_double(p.delta) + ";K=" + std::to_string(plan.K) + ";D1=" + std::to_string(plan.D1) +
                     ";s=" + std::to_string(plan.s);
        out.max_steps = plan.epoch2_start + plan.stage_length() * (4 * static_cast<Step>(math::ceil_log2(n)) + 4) + 64 * N;
        out.protocol = std::make_unique<LinGather>(std::move(plan));
    } else {
        throw ConfigError("unknown protocol '" + p.protocol + "'");
    }
    out.schedule_end = p.protocol == "RoundRobin" ? std::optional<Step>(N * N) : out.protocol->schedule_end();
    if (out.max_steps == 0)
        out.max_steps = *out.schedule_end + 1;
    if (p.half_duplex)
        out.params += std::string(out.params.empty() ? "" : ";") + "hd=1";
    else if (tr.any())
        out.params += std::string(out.params.empty() ? "" : ";") + "tr=1";
    return out;
}

// ---------------------------------------------------------------------------
// Runs

struct RunRow {
    std::string run_id;
    std::string tree_id;
    std::string protocol;  // ProtocolSpec::label()
    std::size_t n = 0;
    std::string params;
    bool completed = false;
    Step completion_step = -1;
    Step schedule_end = -1;
    std::uint64_t collisions = 0;
    std::uint64_t transmissions = 0;
    std::uint64_t no_level_fired = 0;
    double progress = -1;  // LinGather: max (steps to j rumors) / (2m + j) over heavy nodes
    std::string audit;     // empty when not audited, "ok", or the first failure
    std::uint64_t seed = 0;

    bool operator==(const RunRow&) const = default;
};

struct FitRow {
    std::size_t n = 0;
    double min = 0, max = 0, mean = 0;
    std::size_t count = 0;
    bool operator==(const FitRow&) const = default;
};

enum class Envelope { N, N2, NLogLogN, Schedule };

inline const char* to_string(Envelope e) {
    switch (e) {
    case Envelope::N: return "n";
    case Envelope::N2: return "n2";
    case Envelope::NLogLogN: return "nloglogn";
    case Envelope::Schedule: return "schedule";
    }
    return "?";
}

inline Envelope parse_envelope(const std::string& s) {
    if (s == "n")
        return Envelope::N;
    if (s == "n2")
        return Envelope::N2;
    if (s == "nloglogn")
        return Envelope::NLogLogN;
    if (s == "schedule")
        return Envelope::Schedule;
    throw ConfigError("unknown envelope '" + s + "'");
}

struct Fit {
    std::string protocol;
    Envelope envelope = Envelope::N;
    double c_max = 0;
    std::string witness;  // run id attaining c_max
    std::vector<FitRow> table;

    // Largest over smallest per-n maximum, restricted to lo <= n <= hi.
    double drift(std::size_t lo = 0, std::size_t hi = std::numeric_limits<std::size_t>::max()) const {
        double a = std::numeric_limits<double>::infinity(), b = 0;
        for (const auto& r : table)
            if (r.n >= lo && r.n <= hi) {
                a = std::min(a, r.max);
                b = std::max(b, r.max);
            }
        return b > 0 && a > 0 ? b / a : std::numeric_limits<double>::infinity();
    }
    bool operator==(const Fit&) const = default;
};

struct StructureRow {
    std::string family;  // strong | distinguisher | amortizing
    std::size_t n = 0, k = 0, m = 0;
    std::string mode;    // exhaustive / sampled / unverified
    bool ok = false;
    bool exhaustive_feasible = false;
    std::string detail;
    std::string witness;
    bool operator==(const StructureRow&) const = default;
};

struct CriterionResult {
    std::string id;
    bool passed = false;
    std::string detail;
    std::string witness;
    bool operator==(const CriterionResult&) const = default;
};

struct Report {
    std::vector<RunRow> rows;
    std::vector<Fit> fits;
    std::vector<StructureRow> structures;
    std::vector<CriterionResult> criteria;
    std::vector<std::string> notes;
    bool operator==(const Report&) const = default;
};

struct ExperimentConfig {
    CorpusSpec corpus;
    std::vector<ProtocolSpec> protocols;
    bool ack = false;
    bool audit = false;
    std::optional<Step> max_steps;
    unsigned jobs = 1;
    std::string trace_dir;  // empty: GATHER_TRACE_DIR, if set
    std::map<std::string, Envelope> envelopes;  // protocol label -> envelope to fit
    struct Outputs {
        std::string csv, json, markdown, plot;
    } out;
};

inline ExperimentConfig experiment_from_json(const json& j) {
    ExperimentConfig c;
    if (j.contains("protocol")) {  // a bare protocol config
        c.protocols.push_back(protocol_from_json(j));
        return c;
    }
    try {
        if (j.contains("corpus"))
            c.corpus = corpus_from_json(j["corpus"]);
        if (j.contains("protocols"))
            for (const auto& p : j["protocols"])
                c.protocols.push_back(protocol_from_json(p));
        c.ack = j.value("ack", false);
        c.audit = j.value("audit", false);
        c.jobs = j.value("jobs", 1u);
        c.trace_dir = j.value("trace_dir", std::string{});
        if (j.contains("max_steps"))
            c.max_steps = j["max_steps"].get<Step>();
        if (j.contains("envelopes"))
            for (auto& [k, v] : j["envelopes"].items())
                c.envelopes[k] = parse_envelope(v.get<std::string>());
        if (j.contains("out")) {
            const auto& o = j["out"];
            c.out.csv = o.value("csv", std::string{});
            c.out.json = o.value("json", std::string{});
            c.out.markdown = o.value("markdown", std::string{});
            c.out.plot = o.value("plot", std::string{});
        }
    } catch (const json::exception& e) {
        throw ParseError(1, "experiment", e.what());
    }
    return c;
}

inline ExperimentConfig load_experiment(const std::string& path) {
    const auto text = detail::read_file(path);
    return experiment_from_json(detail::parse_json(text));
}

namespace detail {

inline std::string sanitize(std::string s) {
    for (auto& c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.')
            c = '_';
    return s;
}

inline std::string trace_dir(const ExperimentConfig& c) {
    if (!c.trace_dir.empty())
        return c.trace_dir;
    const char* e = std::getenv("GATHER_TRACE_DIR");
    return e ? e : "";
}

}  // namespace detail

struct RunOptions {
    bool audit = false;
    std::optional<Step> max_steps;
    std::string trace_path;  // JSON-lines dump when non-empty
    bool ack = false;
};

// One (tree, protocol) run with optional audits.
inline RunRow run_one(const TreeSpec& ts, const ProtocolSpec& p, FamilyCache& cache, const RunOptions& opt) {
    const Tree tree = ts.build();
    auto inst = make_protocol(p, tree.size(), cache);
    RunRow row;
    row.tree_id = ts.id();
    row.protocol = p.label();
    row.run_id = row.protocol + "/" + row.tree_id;
    row.n = tree.size();
    row.params = inst.params;
    row.seed = p.seed;
    row.schedule_end = inst.schedule_end.value_or(-1);

    SimConfig cfg;
    cfg.ack_enabled = p.ack.value_or(opt.ack);
    cfg.duplex = p.half_duplex ? Duplex::Half : Duplex::Simultaneous;
    cfg.max_steps = opt.max_steps.value_or(inst.max_steps);
    cfg.oracle = p.oracle;
    cfg.seed = p.seed;
    Engine eng(tree, *inst.protocol, cfg);

    std::unique_ptr<TraceWriter> writer;
    if (!opt.trace_path.empty()) {
        writer = std::make_unique<TraceWriter>(opt.trace_path);
        eng.add_observer([&](const StepEvents& ev) { (*writer)(ev); });
    }
    std::unique_ptr<CopyFrontAudit> front;
    std::vector<std::unique_ptr<SelectorEpochAudit>> epochs;
    std::unique_ptr<AcquisitionRecorder> rec;
    std::vector<char> heavy;
    if (opt.audit) {
        front = std::make_unique<CopyFrontAudit>(tree);
        eng.add_observer(front->observer());
        if (auto* sg = dynamic_cast<const SimpleGather*>(inst.protocol.get()))
            epochs.push_back(std::make_unique<SelectorEpochAudit>(tree, sg->plan().epoch1));
        if (auto* fg = dynamic_cast<const FastGather*>(inst.protocol.get()))
            for (const auto& e : fg->plan().epochs)
                if (e.stages > 0)
                    epochs.push_back(std::make_unique<SelectorEpochAudit>(tree, e));
        for (auto& a : epochs)
            eng.add_observer(a->observer());
        if (auto* lg = dynamic_cast<const LinGather*>(inst.protocol.get())) {
            const auto sizes = subtree_sizes(tree);
            heavy.assign(tree.size(), 0);
            for (Label v = 0; v < tree.size(); ++v)
                heavy[v] = v != tree.root() && sizes[v] >= lg->plan().epoch1.active_below;
            rec = std::make_unique<AcquisitionRecorder>(tree, heavy, lg->plan().epoch2_start, false);
            eng.add_observer(rec->observer());
        }
    }

    SimResult r;
    try {
        r = eng.run();
    } catch (const std::exception& e) {
        throw Error("run " + row.run_id + ": " + e.what());
    }
    row.completed = r.completed;
    row.completion_step = r.completion_step.value_or(-1);
    if (r.completed && tree.size() == 1)
        row.completion_step = 0;
    row.collisions = r.collisions;
    row.transmissions = r.transmissions;
    if (auto* lg = dynamic_cast<const LinGather*>(inst.protocol.get()))
        row.no_level_fired = lg->counters().no_level_fired;

    if (opt.audit) {
        std::string first;
        std::uint64_t checks = front->report().checks;
        if (!front->report().ok)
            first = "copy-front: " + front->report().failures.front();
        for (auto& a : epochs) {
            a->finish();
            checks += a->report().checks;
            if (first.empty() && !a->report().ok)
                first = "selector-epoch: " + a->report().failures.front();
        }
        if (rec)
            row.progress = rec->fit().c;
        row.audit = first.empty() ? "ok" : first;
    }
    return row;
}

// Runs jobs on `workers` threads; results come back in job order.
template <typename Job>
auto run_jobs(std::size_t count, unsigned workers, Job&& job) {
    using R = decltype(job(std::size_t{0}));
    std::vector<std::optional<R>> out(count);
    std::vector<std::exception_ptr> err(count);
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i; (i = next++) < count;) {
            try {
                out[i] = job(i);
            } catch (...) {
                err[i] = std::current_exception();
            }
        }
    };
    workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(count)));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w)
            pool.emplace_back(work);
        for (auto& t : pool)
            t.join();
    }
    std::vector<R> res;
    res.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (err[i])
            std::rethrow_exception(err[i]);
        res.push_back(std::move(*out[i]));
    }
    return res;
}

inline double envelope_value(Envelope e, const RunRow& r) {
    const double n = static_cast<double>(r.n);
    switch (e) {
    case Envelope::N: return n;
    case Envelope::N2: return n * n;
    case Envelope::NLogLogN: return n * std::max(1.0, std::log2(std::max(2.0, std::log2(n))));
    case Envelope::Schedule:
        if (r.schedule_end <= 0)
            throw ConfigError("run " + r.run_id + " has no schedule end");
        return static_cast<double>(r.schedule_end);
    }
    return n;
}

// c_max = max completion_step / envelope(n) over rows; runs that did not
// complete count as infinite ratios.
inline Fit fit_envelope(const std::vector<RunRow>& rows, Envelope env) {
    std::set<std::size_t> ns;
    for (const auto& r : rows)
        ns.insert(r.n);
    if (ns.size() < 3)
        throw InsufficientData("fit needs at least 3 distinct n, got " + std::to_string(ns.size()));
    Fit f;
    f.envelope = env;
    f.protocol = rows.front().protocol;
    std::map<std::size_t, FitRow> by_n;
    for (const auto& r : rows) {
        const double ratio = r.completed ? static_cast<double>(std::max<Step>(r.completion_step, 0)) / envelope_value(env, r)
                                         : std::numeric_limits<double>::infinity();
        auto& t = by_n[r.n];
        if (t.count == 0) {
            t.n = r.n;
            t.min = t.max = ratio;
        }
        t.min = std::min(t.min, ratio);
        t.max = std::max(t.max, ratio);
        t.mean += ratio;
        ++t.count;
        if (f.witness.empty() || ratio > f.c_max) {
            f.c_max = ratio;
            f.witness = r.run_id;
        }
    }
    for (auto& [n, t] : by_n) {
        t.mean /= static_cast<double>(t.count);
        f.table.push_back(t);
    }
    return f;
}

inline std::vector<RunRow> rows_for(const std::vector<RunRow>& rows, const std::string& label) {
    std::vector<RunRow> out;
    for (const auto& r : rows)
        if (r.protocol == label)
            out.push_back(r);
    return out;
}

// ---------------------------------------------------------------------------
// Emission

enum class Format { Csv, Json, Markdown, Plot };

inline Format parse_format(const std::string& s) {
    if (s == "csv")
        return Format::Csv;
    if (s == "json")
        return Format::Json;
    if (s == "markdown" || s == "markdown-summary" || s == "md")
        return Format::Markdown;
    if (s == "plot" || s == "plot-data")
        return Format::Plot;
    throw ConfigError("unknown format '" + s + "'");
}

namespace detail {

inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char c : s)
        q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

inline std::vector<std::string> csv_split(const std::string& line, std::size_t lineno) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"')
                cur += '"', ++i;
            else if (c == '"')
                quoted = false;
            else
                cur += c;
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    if (quoted)
        throw ParseError(lineno, "<row>", "unterminated quote");
    out.push_back(std::move(cur));
    return out;
}

inline std::string fmt_ratio(double x) {
    if (std::isinf(x))
        return "inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", x);
    return buf;
}

}  // namespace detail

inline const char* kCsvHeader =
    "run_id,tree_id,protocol,n,params,completed,completion_step,schedule_end,collisions,transmissions,"
    "no_level_fired,progress,audit,seed";

inline std::string rows_to_csv(const std::vector<RunRow>& rows) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& r : rows) {
        using detail::csv_field;
        out += csv_field(r.run_id) + "," + csv_field(r.tree_id) + "," + csv_field(r.protocol) + "," +
               std::to_string(r.n) + "," + csv_field(r.params) + "," + (r.completed ? "1" : "0") + "," +
               std::to_string(r.completion_step) + "," + std::to_string(r.schedule_end) + "," +
               std::to_string(r.collisions) + "," + std::to_string(r.transmissions) + "," +
               std::to_string(r.no_level_fired) + "," + detail::fmt_ratio(r.progress) + "," + csv_field(r.audit) +
               "," + std::to_string(r.seed) + "\n";
    }
    return out;
}

inline std::vector<RunRow> rows_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line))
        throw ParseError(1, "<header>", "empty file");
    ++lineno;
    const auto header = detail::csv_split(line, lineno);
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < header.size(); ++i)
        col[header[i]] = i;
    for (const char* need : {"tree_id", "protocol", "n", "completion_step"})
        if (!col.count(need))
            throw ParseError(1, need, "missing column");
    std::vector<RunRow> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r")
            continue;
        const auto f = detail::csv_split(line, lineno);
        auto get = [&](const char* name) -> std::string {
            auto it = col.find(name);
            return it == col.end() || it->second >= f.size() ? std::string{} : f[it->second];
        };
        auto integer = [&](const char* name, std::int64_t dflt) {
            const auto x = get(name);
            if (x.empty())
                return dflt;
            std::size_t used = 0;
            std::int64_t v = 0;
            try {
                v = std::stoll(x, &used);
            } catch (const std::exception&) {
            }
            if (used == 0 || used != x.size())
                throw ParseError(lineno, name, "not an integer: '" + x + "'");
            return v;
        };
        auto real = [&](const char* name, double dflt) {
            const auto x = get(name);
            if (x.empty())
                return dflt;
            if (x == "inf")
                return std::numeric_limits<double>::infinity();
            std::size_t used = 0;
            double v = 0;
            try {
                v = std::stod(x, &used);
            } catch (const std::exception&) {
            }
            if (used == 0 || used != x.size())
                throw ParseError(lineno, name, "not a number: '" + x + "'");
            return v;
        };
        RunRow r;
        r.tree_id = get("tree_id");
        r.protocol = get("protocol");
        r.run_id = get("run_id");
        if (r.run_id.empty())
            r.run_id = r.protocol + "/" + r.tree_id;
        r.n = static_cast<std::size_t>(integer("n", 0));
        r.params = get("params");
        r.completion_step = integer("completion_step", -1);
        r.completed = col.count("completed") ? get("completed") == "1" : r.completion_step >= 0;
        r.schedule_end = integer("schedule_end", -1);
        r.collisions = static_cast<std::uint64_t>(integer("collisions", 0));
        r.transmissions = static_cast<std::uint64_t>(integer("transmissions", 0));
        r.no_level_fired = static_cast<std::uint64_t>(integer("no_level_fired", 0));
        r.progress = real("progress", -1.0);
        r.audit = get("audit");
        r.seed = static_cast<std::uint64_t>(integer("seed", 0));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline json to_json(const RunRow& r) {
    return json{{"run_id", r.run_id},
                {"tree_id", r.tree_id},
                {"protocol", r.protocol},
                {"n", r.n},
                {"params", r.params},
                {"completed", r.completed},
                {"completion_step", r.completion_step},
                {"schedule_end", r.schedule_end},
                {"collisions", r.collisions},
                {"transmissions", r.transmissions},
                {"no_level_fired", r.no_level_fired},
                {"progress", r.progress},
                {"audit", r.audit},
                {"seed", r.seed}};
}

namespace detail {
// JSON has no infinity; store it as the string "inf".
inline json ratio_json(double x) { return std::isinf(x) ? json("inf") : json(x); }
inline double ratio_from(const json& j) { return j.is_string() ? std::numeric_limits<double>::infinity() : j.get<double>(); }
}  // namespace detail

inline json report_to_json(const Report& rep) {
    json j;
    j["rows"] = json::array();
    for (const auto& r : rep.rows)
        j["rows"].push_back(to_json(r));
    j["fits"] = json::array();
    for (const auto& f : rep.fits) {
        json t = json::array();
        for (const auto& r : f.table)
            t.push_back({{"n", r.n},
                         {"min", detail::ratio_json(r.min)},
                         {"max", detail::ratio_json(r.max)},
                         {"mean", detail::ratio_json(r.mean)},
                         {"count", r.count}});
        j["fits"].push_back({{"protocol", f.protocol},
                             {"envelope", to_string(f.envelope)},
                             {"c_max", detail::ratio_json(f.c_max)},
                             {"witness", f.witness},
                             {"table", t}});
    }
    j["structures"] = json::array();
    for (const auto& s : rep.structures)
        j["structures"].push_back({{"family", s.family},
                                   {"n", s.n},
                                   {"k", s.k},
                                   {"m", s.m},
                                   {"mode", s.mode},
                                   {"ok", s.ok},
                                   {"exhaustive_feasible", s.exhaustive_feasible},
                                   {"detail", s.detail},
                                   {"witness", s.witness}});
    j["criteria"] = json::array();
    for (const auto& c : rep.criteria)
        j["criteria"].push_back({{"id", c.id}, {"passed", c.passed}, {"detail", c.detail}, {"witness", c.witness}});
    j["notes"] = rep.notes;
    return j;
}

inline Report report_from_json(const json& j) {
    Report rep;
    try {
        for (const auto& r : j.at("rows")) {
            RunRow x;
            x.run_id = r.at("run_id");
            x.tree_id = r.at("tree_id");
            x.protocol = r.at("protocol");
            x.n = r.at("n");
            x.params = r.at("params");
            x.completed = r.at("completed");
            x.completion_step = r.at("completion_step");
            x.schedule_end = r.at("schedule_end");
            x.collisions = r.at("collisions");
            x.transmissions = r.at("transmissions");
            x.no_level_fired = r.at("no_level_fired");
            x.progress = r.at("progress");
            x.audit = r.at("audit");
            x.seed = r.at("seed");
            rep.rows.push_back(std::move(x));
        }
        for (const auto& f : j.at("fits")) {
            Fit x;
            x.protocol = f.at("protocol");
            x.envelope = parse_envelope(f.at("envelope"));
            x.c_max = detail::ratio_from(f.at("c_max"));
            x.witness = f.at("witness");
            for (const auto& t : f.at("table"))
                x.table.push_back({t.at("n"), detail::ratio_from(t.at("min")), detail::ratio_from(t.at("max")),
                                   detail::ratio_from(t.at("mean")), t.at("count")});
            rep.fits.push_back(std::move(x));
        }
        for (const auto& s : j.at("structures"))
            rep.structures.push_back({s.at("family"), s.at("n"), s.at("k"), s.at("m"), s.at("mode"), s.at("ok"),
                                      s.at("exhaustive_feasible"), s.at("detail"), s.at("witness")});
        for (const auto& c : j.at("criteria"))
            rep.criteria.push_back({c.at("id"), c.at("passed"), c.at("detail"), c.at("witness")});
        rep.notes = j.at("notes").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ParseError(1, "report", e.what());
    }
    return rep;
}

// One line per (protocol, envelope, n): the per-n maximum and mean ratio.
inline std::string plot_data(const Report& rep) {
    std::string out = "protocol,envelope,n,ratio_max,ratio_mean\n";
    for (const auto& f : rep.fits)
        for (const auto& t : f.table)
            out += f.protocol + "," + to_string(f.envelope) + "," + std::to_string(t.n) + "," + detail::fmt_ratio(t.max) +
                   "," + detail::fmt_ratio(t.mean) + "\n";
    return out;
}

inline std::string markdown_summary(const Report& rep) {
    std::string out = "# Gathering report\n\n";
    std::size_t done = 0;
    for (const auto& r : rep.rows)
        done += r.completed;
    out += "Runs: " + std::to_string(rep.rows.size()) + ", completed: " + std::to_string(done) + "\n";
    if (!rep.criteria.empty()) {
        out += "\n## Criteria\n\n| id | result | detail | witness |\n|---|---|---|---|\n";
        for (const auto& c : rep.criteria)
            out += "| " + c.id + " | " + (c.passed ? "PASS" : "FAIL") + " | " + c.detail + " | " + c.witness + " |\n";
    }
    if (!rep.fits.empty()) {
        out += "\n## Fits\n\n| protocol | envelope | n | min | max | mean |\n|---|---|---|---|---|---|\n";
        for (const auto& f : rep.fits)
            for (const auto& t : f.table)
                out += "| " + f.protocol + " | " + to_string(f.envelope) + " | " + std::to_string(t.n) + " | " +
                       detail::fmt_ratio(t.min) + " | " + detail::fmt_ratio(t.max) + " | " + detail::fmt_ratio(t.mean) +
                       " |\n";
    }
    if (!rep.structures.empty()) {
        std::size_t ok = 0;
        for (const auto& s : rep.structures)
            ok += s.ok;
        out += "\n## Structures\n\n" + std::to_string(ok) + " of " + std::to_string(rep.structures.size()) +
               " verified.\n";
        for (const auto& s : rep.structures)
            if (!s.ok)
                out += "- " + s.family + " n=" + std::to_string(s.n) + " k=" + std::to_string(s.k) + ": " + s.detail +
                       (s.witness.empty() ? "" : " (" + s.witness + ")") + "\n";
    }
    for (const auto& n : rep.notes)
        out += "\n> " + n + "\n";
    return out;
}

inline std::string render(const Report& rep, Format f) {
    switch (f) {
    case Format::Csv: return rows_to_csv(rep.rows);
    case Format::Json: return report_to_json(rep).dump(2) + "\n";
    case Format::Markdown: return markdown_summary(rep);
    case Format::Plot: return plot_data(rep);
    }
    return {};
}

inline void emit(const Report& rep, Format f, const std::string& path) { detail::write_file(path, render(rep, f)); }

inline Report run_experiment(const ExperimentConfig& c, FamilyCache& cache) {
    for (const auto& p : c.protocols)
        validate(p, c.ack);
    struct Job {
        TreeSpec tree;
        const ProtocolSpec* spec;
    };
    std::vector<Job> jobs;
    for (const auto& p : c.protocols)
        for (const auto& t : (p.corpus ? *p.corpus : c.corpus).trees())
            jobs.push_back({t, &p});
    // Families are built up front so that worker threads only read the cache.
    for (const auto& p : c.protocols) {
        std::set<std::size_t> ns;
        for (const auto& t : (p.corpus ? *p.corpus : c.corpus).trees())
            ns.insert(t.n);
        for (auto n : ns)
            make_protocol(p, n, cache);
    }
    const std::string tdir = detail::trace_dir(c);
    if (!tdir.empty())
        std::filesystem::create_directories(tdir);
    Report rep;
    rep.rows = run_jobs(jobs.size(), c.jobs, [&](std::size_t i) {
        RunOptions opt;
        opt.audit = c.audit;
        opt.max_steps = c.max_steps;
        opt.ack = c.ack;
        const std::string id = jobs[i].spec->label() + "/" + jobs[i].tree.id();
        if (!tdir.empty())
            opt.trace_path = tdir + "/" + detail::sanitize(id) + ".jsonl";
        return run_one(jobs[i].tree, *jobs[i].spec, cache, opt);
    });
    for (const auto& [label, env] : c.envelopes) {
        auto rows = rows_for(rep.rows, label);
        if (rows.empty()) {
            rep.notes.push_back("no rows for " + label + "; fit skipped");
            continue;
        }
        try {
            rep.fits.push_back(fit_envelope(rows, env));
        } catch (const InsufficientData& e) {
            rep.notes.push_back(label + ": " + e.what());
        }
    }
    if (!c.out.csv.empty())
        emit(rep, Format::Csv, c.out.csv);
    if (!c.out.json.empty())
        emit(rep, Format::Json, c.out.json);
    if (!c.out.markdown.empty())
        emit(rep, Format::Markdown, c.out.markdown);
    if (!c.out.plot.empty())
        emit(rep, Format::Plot, c.out.plot);
    return rep;
}

// ---------------------------------------------------------------------------
// Structure verification

struct StructureGrid {
    std::vector<std::size_t> strong_n{8, 16, 32}, strong_k{1, 2, 3, 4};
    std::vector<std::size_t> dist_n{8, 16, 20}, dist_k{1, 2, 3};
    std::vector<std::size_t> amort_n{8, 10, 12, 14}, amort_k{2, 4};
    std::size_t amort_s = 256;
    double multiplier = 1.0;
    unsigned doublings = 6;
    std::uint64_t seed = 1;
};

inline StructureGrid grid_from_json(const json& j) {
    StructureGrid g;
    try {
        auto vec = [&](const char* key, std::vector<std::size_t>& v) {
            if (j.contains(key))
                v = j[key].get<std::vector<std::size_t>>();
        };
        vec("strong_n", g.strong_n);
        vec("strong_k", g.strong_k);
        vec("dist_n", g.dist_n);
        vec("dist_k", g.dist_k);
        vec("amort_n", g.amort_n);
        vec("amort_k", g.amort_k);
        g.amort_s = j.value("amort_s", g.amort_s);
        g.multiplier = j.value("multiplier", g.multiplier);
        g.doublings = j.value("doublings", g.doublings);
        g.seed = j.value("seed", g.seed);
    } catch (const json::exception& e) {
        throw ParseError(1, "grid", e.what());
    }
    return g;
}

namespace detail {

inline std::string set_str(const std::vector<Label>& A) {
    std::string s = "{";
    for (std::size_t i = 0; i < A.size(); ++i)
        s += (i ? "," : "") + std::to_string(A[i]);
    return s + "}";
}

}  // namespace detail

inline std::vector<StructureRow> verify_structures(const StructureGrid& g) {
    std::vector<StructureRow> out;
    BuildOptions opt;
    opt.max_doublings = g.doublings;
    for (auto n : g.strong_n)
        for (auto k : g.strong_k) {
            if (k > n)
                continue;
            StructureRow row{"strong", n, k};
            try {
                auto s = build_strong_selector(n, k, g.multiplier, g.seed, opt);
                row.m = s.m();
                row.ok = true;
                row.mode = to_string(s.verified);
                row.exhaustive_feasible = exhaustive_feasible(n, k, s.m());
                row.detail = "mult=" + fmt_double(s.multiplier);
            } catch (const ConstructionFailed& e) {
                auto fam = strong_selector_candidate(n, k, g.multiplier, g.seed, 0);
                auto chk = verify_strong_selector(fam, k, VerifyMode::Auto, kMinSampledTrials, g.seed);
                row.m = fam.m();
                row.mode = to_string(chk.mode);
                row.exhaustive_feasible = exhaustive_feasible(n, k, fam.m());
                row.detail = e.what();
                if (chk.witness)
                    row.witness = "A=" + detail::set_str(chk.witness->A) + " a=" + std::to_string(chk.witness->a) +
                                  " not isolated";
            }
            out.push_back(std::move(row));
        }
    for (auto n : g.dist_n)
        for (auto k : g.dist_k) {
            if (2 * k > n)
                continue;
            StructureRow row{"distinguisher", n, k};
            try {
                auto d = build_distinguisher(n, k, g.multiplier, g.seed, opt);
                row.m = d.m();
                row.ok = d.gap() > 0;
                row.mode = to_string(d.verified);
                row.exhaustive_feasible = detail::distinguisher_exhaustive_feasible(n, k, d.m());
                row.detail = "xi=" + std::to_string(d.xi) + " m1=" + std::to_string(d.m1) + " m2=" +
                             std::to_string(d.m2) + " gap=" + std::to_string(d.gap());
            } catch (const ConstructionFailed& e) {
                auto fam = distinguisher_candidate(n, k, g.multiplier, g.seed, 0);
                row.m = fam.m();
                row.detail = e.what();
                // Report a witness against the midpoint threshold of the candidate's hit ranges.
                std::uint64_t lo = std::numeric_limits<std::uint64_t>::max(), hi = 0;
                const bool ex = detail::distinguisher_exhaustive_feasible(n, k, fam.m());
                detail::for_each_hit(fam, k, ex, kMinCalibrationSamples, g.seed, [&](auto&, Label, std::uint64_t h) {
                    lo = std::min(lo, h);
                    return true;
                });
                detail::for_each_hit(fam, 2 * k, ex, kMinCalibrationSamples, g.seed, [&](auto&, Label, std::uint64_t h) {
                    hi = std::max(hi, h);
                    return true;
                });
                auto chk = verify_distinguisher(fam, k, (lo + hi) / 2, VerifyMode::Auto, kMinSampledTrials, g.seed);
                row.mode = to_string(chk.mode);
                row.exhaustive_feasible = ex;
                if (chk.witness)
                    row.witness = "(d" + std::to_string(chk.witness->condition) + ") A=" +
                                  detail::set_str(chk.witness->A) + " a=" + std::to_string(chk.witness->a) +
                                  " hits=" + std::to_string(chk.witness->hits);
                else
                    row.witness = "hit ranges overlap: min at k " + std::to_string(lo) + ", max at 2k " +
                                  std::to_string(hi);
            }
            out.push_back(std::move(row));
        }
    for (auto n : g.amort_n)
        for (auto k : g.amort_k) {
            // Rows are doubled until every (A, v) succeeds somewhere, like the selector retry.
            std::size_t s = g.amort_s;
            RateReport rep;
            for (unsigned attempt = 0;; ++attempt, s *= 2) {
                auto f = build_amortizing_family(n, k, s, g.seed, 2.0, VerifyMode::Auto, false);
                rep = verify_amortizing_rate(f, VerifyMode::Auto, kMinSampledTrials, g.seed);
                if (rep.rate.num > 0 || attempt >= g.doublings)
                    break;
            }
            StructureRow row{"amortizing", n, k, s};
            row.mode = to_string(rep.mode);
            row.exhaustive_feasible = detail::amortizing_exhaustive_feasible(n, k, s);
            row.ok = rep.rate.num > 0;
            row.detail = "rate=" + std::to_string(rep.rate.num) + "/" + std::to_string(rep.rate.den);
            if (!row.ok)
                row.witness = "level " + std::to_string(rep.level) + " A=" + detail::set_str(rep.A) + " v=" +
                              std::to_string(rep.v);
            out.push_back(std::move(row));
        }
    return out;
}

// ---------------------------------------------------------------------------
// Acceptance criteria. Each returns a stamped result; failures carry the
// witness run id or structure.

inline CriterionResult criterion_correctness(const std::vector<RunRow>& rows) {
    CriterionResult c{"1-correctness"};
    std::size_t checked = 0;
    for (const auto& r : rows) {
        ++checked;
        std::string why;
        if (!r.completed)
            why = "did not complete";
        else if (r.protocol.rfind("RoundRobin", 0) == 0 && r.completion_step >= static_cast<Step>(r.n * r.n))
            why = "RoundRobin needed " + std::to_string(r.completion_step) + " >= n^2 steps";
        else if (r.schedule_end >= 0 && r.completion_step > r.schedule_end)
            why = "completed at " + std::to_string(r.completion_step) + " after schedule end " +
                  std::to_string(r.schedule_end);
        if (!why.empty() && c.witness.empty()) {
            c.witness = r.run_id;
            c.detail = why;
        }
    }
    c.passed = c.witness.empty() && checked > 0;
    if (c.passed)
        c.detail = std::to_string(checked) + " runs complete within bounds";
    return c;
}

inline CriterionResult criterion_scaling(const std::vector<RunRow>& lin, const std::vector<RunRow>& fast,
                                         double max_drift, std::size_t lo, std::size_t hi) {
    CriterionResult c{"2-scaling"};
    for (const auto* rows : {&lin, &fast})
        for (const auto& r : *rows)
            if (!r.completed && c.witness.empty()) {
                c.witness = r.run_id;
                c.detail = "did not complete";
            }
    if (!c.witness.empty())
        return c;
    const Fit fl = fit_envelope(lin, Envelope::N), ff = fit_envelope(fast, Envelope::NLogLogN);
    const double dl = fl.drift(lo, hi), df = ff.drift(lo, hi);
    c.detail = "LinGather c_max/n drift " + detail::fmt_ratio(dl) + " (c_max " + detail::fmt_ratio(fl.c_max) +
               "), FastGather c_max/(n loglog n) drift " + detail::fmt_ratio(df) + " (c_max " +
               detail::fmt_ratio(ff.c_max) + "), limit " + detail::fmt_ratio(max_drift);
    c.passed = dl <= max_drift && df <= max_drift;
    if (!c.passed)
        c.witness = dl > max_drift ? fl.witness : ff.witness;
    return c;
}

inline CriterionResult criterion_structures(const std::vector<StructureRow>& rows) {
    CriterionResult c{"3-structures"};
    std::size_t exhaustive = 0;
    for (const auto& s : rows) {
        std::string why;
        if (!s.ok)
            why = s.detail + (s.witness.empty() ? "" : " " + s.witness);
        else if (s.exhaustive_feasible && s.mode != "exhaustive")
            why = "exhaustive verification was feasible but not run";
        if (s.mode == "exhaustive")
            ++exhaustive;
        if (!why.empty() && c.witness.empty()) {
            c.witness = s.family + " n=" + std::to_string(s.n) + " k=" + std::to_string(s.k);
            c.detail = why;
        }
    }
    c.passed = c.witness.empty() && !rows.empty();
    if (c.passed)
        c.detail = std::to_string(rows.size()) + " families verified, " + std::to_string(exhaustive) + " exhaustively";
    return c;
}

inline CriterionResult criterion_estimator(std::size_t n, double lambda, std::uint64_t seed) {
    CriterionResult c{"4-estimator"};
    const auto est = build_estimator(n, lambda, seed);
    const auto max_size = static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), lambda) + 1e-9));
    const auto chk = verify_estimator(est, max_size);
    c.passed = chk.ok && chk.cases > 0;
    c.detail = std::to_string(chk.cases) + " (A, a) cases with |A| <= " + std::to_string(max_size) + ", " +
               std::to_string(est.levels.size()) + " levels, " + std::to_string(chk.failures) + " failures";
    c.witness = chk.witness;
    return c;
}

inline CriterionResult criterion_leaf_bound(const std::vector<TreeSpec>& trees, const std::vector<std::uint32_t>& gammas) {
    CriterionResult c{"5-leaf-bound"};
    std::size_t checks = 0;
    for (const auto& ts : trees) {
        const Tree t = ts.build();
        for (auto g : gammas) {
            if (g >= t.size() && g != 2)
                continue;
            const auto h = gamma_heights(t, g)[t.root()];
            ++checks;
            if (!height_within_leaf_bound(h, g, t.leaf_count()) && c.witness.empty()) {
                c.witness = ts.id() + " gamma=" + std::to_string(g);
                c.detail = "height " + std::to_string(h) + " exceeds log of " + std::to_string(t.leaf_count()) + " leaves";
            }
        }
    }
    c.passed = c.witness.empty() && checks > 0;
    if (c.passed)
        c.detail = std::to_string(checks) + " (tree, gamma) pairs within the leaf bound";
    return c;
}

// Audited SimpleGather rows, LinGather fit rows, and held-out LinGather rows.
inline CriterionResult criterion_audits(const std::vector<RunRow>& simple, const std::vector<RunRow>& lin_fit,
                                        const std::vector<RunRow>& lin_held_out, double frozen_c, double headroom) {
    CriterionResult c{"6-audits"};
    for (const auto& r : simple)
        if (r.audit != "ok" && c.witness.empty()) {
            c.witness = r.run_id;
            c.detail = r.audit.empty() ? "not audited" : r.audit;
        }
    double fitted = 0;
    std::string fit_witness;
    for (const auto& r : lin_fit)
        if (r.progress > fitted)
            fitted = r.progress, fit_witness = r.run_id;
    if (c.witness.empty() && fitted * headroom > frozen_c + 1e-9) {
        c.witness = fit_witness;
        c.detail = "fitted progress constant " + detail::fmt_ratio(fitted) + " with headroom exceeds frozen " +
                   detail::fmt_ratio(frozen_c);
    }
    double worst = 0;
    for (const auto& r : lin_held_out) {
        worst = std::max(worst, r.progress);
        if ((!r.completed || r.progress < 0 || r.progress > frozen_c) && c.witness.empty()) {
            c.witness = r.run_id;
            c.detail = !r.completed ? "did not complete"
                                    : "progress ratio " + detail::fmt_ratio(r.progress) + " exceeds frozen " +
                                          detail::fmt_ratio(frozen_c);
        }
    }
    c.passed = c.witness.empty() && !simple.empty() && !lin_held_out.empty();
    if (c.passed)
        c.detail = std::to_string(simple.size()) + " audited traces clean; progress fit " + detail::fmt_ratio(fitted) +
                   ", frozen " + detail::fmt_ratio(frozen_c) + ", held-out worst " + detail::fmt_ratio(worst) + " over " +
                   std::to_string(lin_held_out.size()) + " trees";
    return c;
}

inline CriterionResult criterion_half_duplex(const std::vector<RunRow>& rows) {
    auto c = criterion_correctness(rows);
    c.id = "7-half-duplex";
    return c;
}

}  // namespace gather
