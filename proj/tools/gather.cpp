// Command-line front end: tree generation, family construction and
// verification, experiment runs and envelope fits.

#include <cstdio>
#include <iostream>

#include <CLI11.hpp>

#include "gather/harness.hpp"

using namespace gather;

namespace {

void write_or_print(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-")
        std::cout << text;
    else
        detail::write_file(path, text);
}

json load_json(const std::string& path) { return detail::parse_json(detail::read_file(path)); }

VerifyMode parse_mode(const std::string& s) {
    if (s == "auto")
        return VerifyMode::Auto;
    if (s == "exhaustive")
        return VerifyMode::Exhaustive;
    if (s == "sampled")
        return VerifyMode::Sampled;
    throw ConfigError("unknown verification mode '" + s + "'");
}

struct TreeArgs {
    std::string kind = "random-attachment";
    std::size_t n = 64;
    std::uint64_t seed = 1;
    std::uint32_t arity = 2, arms = 0, armlen = 0;
    std::string out;
};

struct FamilyArgs {
    std::string type = "strong";
    std::size_t n = 16, k = 2, s = 256;
    double mult = 1.0, lambda = 0.5;
    std::uint64_t seed = 1;
    std::string out;
};

struct VerifyArgs {
    std::string in, mode = "auto";
    std::uint64_t trials = kMinSampledTrials;
    std::uint64_t seed = 1;
};

struct RunArgs {
    std::string config, tree, csv, json, markdown, plot;
    unsigned jobs = 0;
    bool audit = false;
};

struct GridArgs {
    std::string grid, format = "markdown", out;
};

struct FitArgs {
    std::string rows, envelope = "n", protocol, format = "markdown", out;
};

int cmd_tree(const TreeArgs& a) {
    const Tree t = generate(parse_kind(a.kind, a.arity, a.arms, a.armlen), a.n, a.seed);
    write_or_print(a.out, serialize_tree(t));
    return 0;
}

int cmd_build(const FamilyArgs& a) {
    json j;
    if (a.type == "strong")
        j = to_json(build_strong_selector(a.n, a.k, a.mult, a.seed));
    else if (a.type == "distinguisher")
        j = to_json(build_distinguisher(a.n, a.k, a.mult, a.seed));
    else if (a.type == "estimator")
        j = to_json(build_estimator(a.n, a.lambda, a.seed, a.mult));
    else if (a.type == "amortizing")
        j = to_json(build_amortizing_family(a.n, a.k, a.s, a.seed));
    else
        throw ConfigError("unknown family type '" + a.type + "'");
    write_or_print(a.out, j.dump() + "\n");
    return 0;
}

int cmd_verify_family(const VerifyArgs& a) {
    const json j = load_json(a.in);
    const std::string type = j.value("type", std::string("strong-selector"));
    const VerifyMode mode = parse_mode(a.mode);
    if (type == "strong-selector") {
        const auto s = strong_selector_from_json(j);
        const auto r = verify_strong_selector(s.family, s.k, mode, a.trials, a.seed);
        std::cout << (r.ok ? "ok" : "FAIL") << " strong " << s.k << "-selector n=" << s.n() << " m=" << s.m() << " ("
                  << to_string(r.mode) << ", " << r.mode.trials << " sets)\n";
        if (r.witness)
            std::cout << "witness: A=" << detail::set_str(r.witness->A) << " a=" << r.witness->a << "\n";
        return r.ok ? 0 : 1;
    }
    if (type == "distinguisher") {
        const auto d = distinguisher_from_json(j);
        const auto r = verify_distinguisher(d.family, d.k, d.xi, mode, a.trials, a.seed);
        std::cout << (r.ok ? "ok" : "FAIL") << " " << d.k << "-distinguisher n=" << d.n() << " m=" << d.m()
                  << " xi=" << d.xi << " (" << to_string(r.mode) << ")\n";
        if (r.witness)
            std::cout << "witness: (d" << r.witness->condition << ") A=" << detail::set_str(r.witness->A)
                      << " a=" << r.witness->a << " hits=" << r.witness->hits << "\n";
        return r.ok ? 0 : 1;
    }
    if (type == "estimator") {
        const auto e = estimator_from_json(j);
        const std::size_t n = e.levels.empty() ? 0 : e.levels.front().n();
        const auto max_size = static_cast<std::size_t>(std::floor(std::pow(static_cast<double>(n), e.lambda) + 1e-9));
        const auto r = verify_estimator(e, max_size);
        std::cout << (r.ok ? "ok" : "FAIL") << " estimator n=" << n << " levels=" << e.levels.size() << " cases=" << r.cases
                  << " failures=" << r.failures << "\n";
        if (!r.ok)
            std::cout << "witness: " << r.witness << "\n";
        return r.ok ? 0 : 1;
    }
    if (type == "amortizing") {
        const auto f = amortizing_from_json(j);
        const auto r = verify_amortizing_rate(f, mode, a.trials, a.seed);
        const bool ok = r.rate.num > 0;
        std::cout << (ok ? "ok" : "FAIL") << " amortizing n=" << f.n() << " k=" << f.k() << " s=" << f.s()
                  << " rate=" << r.rate.num << "/" << r.rate.den << " (" << to_string(r.mode) << ")\n";
        if (!ok)
            std::cout << "witness: level " << r.level << " A=" << detail::set_str(r.A) << " v=" << r.v << "\n";
        return ok ? 0 : 1;
    }
    throw ConfigError("unknown family type '" + type + "'");
}

int cmd_run(const RunArgs& a) {
    ExperimentConfig c = load_experiment(a.config);
    if (a.jobs)
        c.jobs = a.jobs;
    if (a.audit)
        c.audit = true;
    if (!a.csv.empty())
        c.out.csv = a.csv;
    if (!a.json.empty())
        c.out.json = a.json;
    if (!a.markdown.empty())
        c.out.markdown = a.markdown;
    if (!a.plot.empty())
        c.out.plot = a.plot;
    FamilyCache cache;
    if (!a.tree.empty()) {
        // Run every protocol of the config on one tree read from file.
        const Tree t = load_tree(a.tree);
        for (const auto& p : c.protocols)
            validate(p, c.ack);
        for (const auto& p : c.protocols) {
            auto inst = make_protocol(p, t.size(), cache);
            SimConfig cfg;
            cfg.ack_enabled = p.ack.value_or(c.ack);
            cfg.duplex = p.half_duplex ? Duplex::Half : Duplex::Simultaneous;
            cfg.max_steps = c.max_steps.value_or(inst.max_steps);
            cfg.oracle = p.oracle;
            Engine eng(t, *inst.protocol, cfg);
            std::unique_ptr<TraceWriter> w;
            if (const auto dir = detail::trace_dir(c); !dir.empty()) {
                std::filesystem::create_directories(dir);
                w = std::make_unique<TraceWriter>(dir + "/" + detail::sanitize(p.label()) + ".jsonl");
                eng.add_observer([&](const StepEvents& ev) { (*w)(ev); });
            }
            const auto r = eng.run();
            const auto chk = check_result(t, r);
            std::cout << p.label() << " n=" << t.size() << " completed=" << r.completed
                      << " completion_step=" << r.completion_step.value_or(-1) << " collisions=" << r.collisions
                      << (chk.ok ? "" : " problem: " + chk.problems.front()) << "\n";
        }
        return 0;
    }
    if (c.protocols.empty())
        throw ConfigError("config lists no protocols");
    const Report rep = run_experiment(c, cache);
    if (c.out.csv.empty())
        std::cout << rows_to_csv(rep.rows);
    std::size_t done = 0;
    for (const auto& r : rep.rows)
        done += r.completed;
    std::cerr << rep.rows.size() << " runs, " << done << " completed\n";
    return done == rep.rows.size() ? 0 : 1;
}

int cmd_verify_grid(const GridArgs& a) {
    const StructureGrid g = a.grid.empty() || a.grid == "default" ? StructureGrid{} : grid_from_json(load_json(a.grid));
    Report rep;
    rep.structures = verify_structures(g);
    rep.criteria.push_back(criterion_structures(rep.structures));
    write_or_print(a.out, render(rep, parse_format(a.format)));
    return rep.criteria.front().passed ? 0 : 1;
}

int cmd_fit(const FitArgs& a) {
    const auto rows = rows_from_csv(detail::read_file(a.rows));
    const Envelope env = parse_envelope(a.envelope);
    std::vector<std::string> labels;
    if (!a.protocol.empty()) {
        labels.push_back(a.protocol);
    } else {
        for (const auto& r : rows)
            if (std::find(labels.begin(), labels.end(), r.protocol) == labels.end())
                labels.push_back(r.protocol);
    }
    Report rep;
    for (const auto& l : labels) {
        try {
            rep.fits.push_back(fit_envelope(rows_for(rows, l), env));
        } catch (const InsufficientData& e) {
            rep.notes.push_back(l + ": " + e.what());
        }
    }
    write_or_print(a.out, render(rep, parse_format(a.format)));
    return rep.fits.empty() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gathering protocols on tree radio networks"};
    app.require_subcommand(1);

    TreeArgs ta;
    auto* tree = app.add_subcommand("tree", "Tree utilities");
    auto* gen = tree->add_subcommand("gen", "Generate a tree as JSON");
    gen->add_option("--kind", ta.kind, "path|star|complete-binary|complete-ary|caterpillar|broom|random-attachment");
    gen->add_option("--n", ta.n, "Number of nodes")->check(CLI::PositiveNumber);
    gen->add_option("--seed", ta.seed);
    gen->add_option("--arity", ta.arity);
    gen->add_option("--arms", ta.arms);
    gen->add_option("--armlen", ta.armlen);
    gen->add_option("--out", ta.out, "Output file (default stdout)");
    tree->require_subcommand(1);

    FamilyArgs fa;
    VerifyArgs va;
    auto* sel = app.add_subcommand("selector", "Set-family construction and verification");
    auto* build = sel->add_subcommand("build", "Build a family");
    build->add_option("--type", fa.type, "strong|distinguisher|estimator|amortizing");
    build->add_option("--n", fa.n)->check(CLI::PositiveNumber);
    build->add_option("--k", fa.k);
    build->add_option("--s", fa.s, "Amortizing rows");
    build->add_option("--mult", fa.mult, "Size multiplier");
    build->add_option("--lambda", fa.lambda, "Estimator exponent");
    build->add_option("--seed", fa.seed);
    build->add_option("--out", fa.out);
    auto* ver = sel->add_subcommand("verify", "Verify a family file");
    ver->add_option("--in", va.in)->required();
    ver->add_option("--mode", va.mode, "auto|exhaustive|sampled");
    ver->add_option("--trials", va.trials);
    ver->add_option("--seed", va.seed);
    sel->require_subcommand(1);

    RunArgs ra;
    auto* run = app.add_subcommand("run", "Run an experiment config");
    run->add_option("--config", ra.config, "Experiment or protocol JSON")->required();
    run->add_option("--tree", ra.tree, "Run on this tree file instead of the corpus");
    run->add_option("--csv", ra.csv);
    run->add_option("--json", ra.json);
    run->add_option("--markdown", ra.markdown);
    run->add_option("--plot", ra.plot);
    run->add_option("--jobs", ra.jobs);
    run->add_flag("--audit", ra.audit, "Run trace audits");

    GridArgs ga;
    auto* verify = app.add_subcommand("verify", "Verify a structure grid");
    verify->add_option("--grid", ga.grid, "Grid JSON, or 'default'");
    verify->add_option("--format", ga.format, "csv|json|markdown|plot-data");
    verify->add_option("--out", ga.out);

    FitArgs fi;
    auto* fit = app.add_subcommand("fit", "Fit completion steps against an envelope");
    fit->add_option("--rows", fi.rows, "Run CSV")->required();
    fit->add_option("--envelope", fi.envelope, "nloglogn|n|n2|schedule");
    fit->add_option("--protocol", fi.protocol, "Only this protocol label");
    fit->add_option("--format", fi.format, "markdown|json|plot-data");
    fit->add_option("--out", fi.out);

    CLI11_PARSE(app, argc, argv);
    try {
        if (gen->parsed())
            return cmd_tree(ta);
        if (build->parsed())
            return cmd_build(fa);
        if (ver->parsed())
            return cmd_verify_family(va);
        if (run->parsed())
            return cmd_run(ra);
        if (verify->parsed())
            return cmd_verify_grid(ga);
        if (fit->parsed())
            return cmd_fit(fi);
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
