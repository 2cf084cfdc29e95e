#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gather/distinguishers.hpp"
#include "gather/selectors.hpp"
#include "gather/sim.hpp"
#include "gather/tree.hpp"

namespace gather {

using json = nlohmann::json;

namespace detail {

// 1-based line of byte offset `pos` in text.
inline std::size_t line_of(const std::string& text, std::size_t pos) {
    pos = std::min(pos, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

// Line on which "key" first appears, or 1.
inline std::size_t line_of_key(const std::string& text, const std::string& key) {
    auto p = text.find("\"" + key + "\"");
    return p == std::string::npos ? 1 : line_of(text, p);
}

inline json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(line_of(text, e.byte == 0 ? 0 : e.byte - 1), "<document>", e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw IoError("cannot write " + path);
    out << text;
    if (!out)
        throw IoError("write failed for " + path);
}

template <typename T>
T get_field(const json& j, const std::string& key, const std::string& text) {
    if (!j.contains(key))
        throw ParseError(1, key, "missing field");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ParseError(line_of_key(text, key), key, e.what());
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trees: {"n": int, "parent": [int or null, ...]}

inline std::string serialize_tree(const Tree& t) {
    json j;
    j["n"] = t.size();
    json p = json::array();
    for (Label v = 0; v < t.size(); ++v)
        p.push_back(t.parent(v) == kNoLabel ? json(nullptr) : json(t.parent(v)));
    j["parent"] = std::move(p);
    return j.dump() + "\n";
}

inline Tree parse_tree(const std::string& text) {
    const json j = detail::parse_json(text);
    if (!j.is_object())
        throw ParseError(1, "<document>", "expected an object");
    const auto n = detail::get_field<std::int64_t>(j, "n", text);
    if (n < 1)
        throw ParseError(detail::line_of_key(text, "n"), "n", "must be >= 1");
    if (!j.contains("parent") || !j["parent"].is_array())
        throw ParseError(detail::line_of_key(text, "parent"), "parent", "expected an array");
    const auto& arr = j["parent"];
    if (arr.size() != static_cast<std::size_t>(n))
        throw ParseError(detail::line_of_key(text, "parent"), "parent", "length differs from n");
    std::vector<Label> p(static_cast<std::size_t>(n), kNoLabel);
    for (std::size_t v = 0; v < arr.size(); ++v) {
        const auto& e = arr[v];
        const std::string field = "parent[" + std::to_string(v) + "]";
        if (e.is_null())
            continue;
        if (!e.is_number_integer() || e.get<std::int64_t>() < 0 || e.get<std::int64_t>() >= n)
            throw ParseError(detail::line_of_key(text, "parent"), field, "not a label in [0, n)");
        p[v] = static_cast<Label>(e.get<std::int64_t>());
    }
    return validate_tree(std::move(p));
}

inline void save_tree(const Tree& t, const std::string& path) { detail::write_file(path, serialize_tree(t)); }
inline Tree load_tree(const std::string& path) { return parse_tree(detail::read_file(path)); }

// ---------------------------------------------------------------------------
// Families: {"n","k","m","sets":[[...],...]} plus "xi" (distinguisher),
// "levels" (estimator), "s" and per-level "sets" (amortizing).

inline json to_json(const SetFamily& f, std::size_t k) {
    return json{{"n", f.n()}, {"k", k}, {"m", f.m()}, {"sets", f.sets()}};
}

inline json to_json(const StrongSelector& s) {
    json j = to_json(s.family, s.k);
    j["type"] = "strong-selector";
    j["verified"] = to_string(s.verified);
    j["multiplier"] = s.multiplier;
    j["seed"] = s.seed;
    return j;
}

inline json to_json(const Distinguisher& d) {
    json j = to_json(d.family, d.k);
    j["type"] = "distinguisher";
    j["xi"] = d.xi;
    j["m1"] = d.m1;
    j["m2"] = d.m2;
    j["verified"] = to_string(d.verified);
    return j;
}

inline json to_json(const CardinalityEstimator& e) {
    json lv = json::array();
    for (const auto& d : e.levels)
        lv.push_back(to_json(d));
    const std::size_t n = e.levels.empty() ? 0 : e.levels.front().n();
    return json{{"type", "estimator"}, {"n", n}, {"lambda", e.lambda}, {"total_length", e.total_length()}, {"levels", lv}};
}

inline json to_json(const AmortizingFamily& f) {
    json sets = json::array();
    for (std::size_t l = 0; l < f.level_count(); ++l)
        sets.push_back(f.sets_at(l));
    return json{{"type", "amortizing"},
                {"n", f.n()},
                {"k", f.k()},
                {"s", f.s()},
                {"m", f.s()},
                {"rate", {f.measured_rate.num, f.measured_rate.den}},
                {"verified", to_string(f.verified)},
                {"sets", sets}};
}

inline SetFamily family_from_json(const json& j, std::size_t* k_out = nullptr) {
    const std::string text = j.dump();
    const auto n = detail::get_field<std::size_t>(j, "n", text);
    auto sets = detail::get_field<std::vector<std::vector<Label>>>(j, "sets", text);
    if (j.contains("m") && j["m"].get<std::size_t>() != sets.size())
        throw ParseError(1, "m", "does not match the number of sets");
    if (k_out)
        *k_out = detail::get_field<std::size_t>(j, "k", text);
    try {
        return SetFamily(n, std::move(sets));
    } catch (const ConfigError& e) {
        throw ParseError(1, "sets", e.what());
    }
}

inline StrongSelector strong_selector_from_json(const json& j) {
    StrongSelector s;
    s.family = family_from_json(j, &s.k);
    return s;
}

inline Distinguisher distinguisher_from_json(const json& j) {
    Distinguisher d;
    d.family = family_from_json(j, &d.k);
    d.xi = detail::get_field<std::uint64_t>(j, "xi", j.dump());
    d.m1 = j.value("m1", std::uint64_t{0});
    d.m2 = j.value("m2", std::uint64_t{0});
    return d;
}

inline CardinalityEstimator estimator_from_json(const json& j) {
    CardinalityEstimator e;
    e.lambda = j.value("lambda", 0.5);
    if (!j.contains("levels") || !j["levels"].is_array())
        throw ParseError(1, "levels", "expected an array");
    for (const auto& l : j["levels"])
        e.levels.push_back(distinguisher_from_json(l));
    return e;
}

inline AmortizingFamily amortizing_from_json(const json& j) {
    const std::string text = j.dump();
    const auto n = detail::get_field<std::size_t>(j, "n", text);
    const auto k = detail::get_field<std::size_t>(j, "k", text);
    const auto s = detail::get_field<std::size_t>(j, "s", text);
    if (k < 2 || (k & (k - 1)))
        throw ParseError(1, "k", "must be a power of two >= 2");
    AmortizingFamily f(n, k, s);
    const auto sets = detail::get_field<std::vector<std::vector<std::vector<Label>>>>(j, "sets", text);
    if (sets.size() != f.level_count())
        throw ParseError(1, "sets", "one array per level expected");
    for (std::size_t l = 0; l < sets.size(); ++l) {
        if (sets[l].size() != s)
            throw ParseError(1, "sets", "level " + std::to_string(l) + " must have s rows");
        for (std::uint32_t i = 0; i < s; ++i)
            for (Label v : sets[l][i]) {
                if (v >= n)
                    throw ParseError(1, "sets", "label out of range");
                f.mutable_rows(l, v).push_back(i);
            }
    }
    for (std::size_t l = 0; l < f.level_count(); ++l)
        for (Label v = 0; v < n; ++v) {
            auto& r = f.mutable_rows(l, v);
            std::sort(r.begin(), r.end());
            r.erase(std::unique(r.begin(), r.end()), r.end());
        }
    if (j.contains("rate") && j["rate"].is_array() && j["rate"].size() == 2)
        f.measured_rate = Rational{j["rate"][0].get<std::uint64_t>(), j["rate"][1].get<std::uint64_t>()};
    return f;
}

// ---------------------------------------------------------------------------
// Traces: one JSON object per line.

inline std::string trace_line(const StepEvents& ev) {
    json j;
    j["t"] = ev.t;
    json tx = json::array(), rx = json::array();
    for (const auto& e : ev.tx)
        tx.push_back({{"node", e.node}, {"rumor", e.rumor == kNoLabel ? json(nullptr) : json(e.rumor)}});
    for (const auto& e : ev.rx)
        rx.push_back({{"parent", e.parent}, {"from", e.from}, {"rumor", e.rumor == kNoLabel ? json(nullptr) : json(e.rumor)}});
    j["tx"] = std::move(tx);
    j["rx"] = std::move(rx);
    j["ack"] = ev.ack;
    return j.dump();
}

inline StepEvents parse_trace_line(const std::string& line, std::size_t lineno) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(lineno, "<line>", e.what());
    }
    StepEvents ev;
    auto label_or_none = [](const json& x) { return x.is_null() ? kNoLabel : x.get<Label>(); };
    try {
        ev.t = j.at("t").get<Step>();
        for (const auto& e : j.at("tx"))
            ev.tx.push_back({e.at("node").get<Label>(), label_or_none(e.at("rumor"))});
        for (const auto& e : j.at("rx"))
            ev.rx.push_back({e.at("parent").get<Label>(), e.at("from").get<Label>(), label_or_none(e.at("rumor"))});
        ev.ack = j.at("ack").get<std::vector<Label>>();
    } catch (const json::exception& e) {
        throw ParseError(lineno, "record", e.what());
    }
    return ev;
}

inline std::string serialize_trace(const std::vector<StepEvents>& trace) {
    std::string out;
    for (const auto& ev : trace)
        out += trace_line(ev) + "\n";
    return out;
}

inline std::vector<StepEvents> parse_trace(const std::string& text) {
    std::vector<StepEvents> out;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        out.push_back(parse_trace_line(line, lineno));
    }
    return out;
}

// Streams events to a JSON-lines file as the engine produces them.
class TraceWriter {
public:
    explicit TraceWriter(const std::string& path) : out_(path) {
        if (!out_)
            throw IoError("cannot write trace " + path);
    }
    void operator()(const StepEvents& ev) { out_ << trace_line(ev) << '\n'; }

private:
    std::ofstream out_;
};

}  // namespace gather
