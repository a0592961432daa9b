#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fss.hpp"
#include "models.hpp"

namespace mstest {

/// Bad or missing configuration; the message names the offending key.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    // [model]
    std::optional<std::string> kind;
    std::optional<std::string> statistic;
    std::optional<double> eta, x_star, mu0, mu1, p;
    // [levels]
    std::optional<double> alpha, beta;
    std::optional<std::string> regime;
    // [budget]
    std::optional<long> reps, sim_reps, max_n, threads;
    std::optional<std::uint64_t> seed;
    // [output]
    std::optional<std::string> dir, prefix;

    bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> s{
        {"model", {"kind", "statistic", "eta", "x_star", "mu0", "mu1", "p"}},
        {"levels", {"alpha", "beta", "regime"}},
        {"budget", {"reps", "sim_reps", "max_n", "threads", "seed"}},
        {"output", {"dir", "prefix"}},
    };
    return s;
}

template <class T>
T parse_value(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    T v{};
    is >> v;
    if (!is || !(is >> std::ws).eof()) throw ConfigError("config key " + key + ": cannot parse '" + text + "'");
    return v;
}

template <>
inline std::string parse_value<std::string>(const std::string&, const std::string& text) {
    return text;
}

inline std::string show(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}
inline std::string show(long x) { return std::to_string(x); }
inline std::string show(std::uint64_t x) { return std::to_string(x); }
inline std::string show(const std::string& x) { return x; }

}  // namespace detail

/// Parses INI text with sections [model], [levels], [budget], [output]. Unknown sections or keys are errors.
inline RunConfig parse_config(std::istream& is) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    const auto& schema = detail::config_schema();
    for (const auto& [section, body] : tree) {
        auto it = schema.find(section);
        if (it == schema.end()) throw ConfigError("config: unknown section [" + section + "]");
        if (!body.data().empty()) throw ConfigError("config: value outside a section: " + section);
        for (const auto& [key, _] : body)
            if (!it->second.count(key)) throw ConfigError("config: unknown key " + section + "." + key);
    }
    RunConfig c;
    auto get = [&](auto& field, const std::string& path) {
        using T = typename std::decay_t<decltype(field)>::value_type;
        if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(path, '.')))
            field = detail::parse_value<T>(path, *v);
    };
    get(c.kind, "model.kind");
    get(c.statistic, "model.statistic");
    get(c.eta, "model.eta");
    get(c.x_star, "model.x_star");
    get(c.mu0, "model.mu0");
    get(c.mu1, "model.mu1");
    get(c.p, "model.p");
    get(c.alpha, "levels.alpha");
    get(c.beta, "levels.beta");
    get(c.regime, "levels.regime");
    get(c.reps, "budget.reps");
    get(c.sim_reps, "budget.sim_reps");
    get(c.max_n, "budget.max_n");
    get(c.threads, "budget.threads");
    get(c.seed, "budget.seed");
    get(c.dir, "output.dir");
    get(c.prefix, "output.prefix");
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    return parse_config(in);
}

/// INI text that parses back to the same config.
inline std::string serialize_config(const RunConfig& c) {
    std::ostringstream os;
    auto section = [&](const char* name, auto... kv) {
        std::ostringstream body;
        auto emit = [&](const auto& pair) {
            if (pair.second->has_value()) body << pair.first << " = " << detail::show(**pair.second) << '\n';
        };
        (emit(kv), ...);
        if (!body.str().empty()) os << '[' << name << "]\n" << body.str();
    };
    auto kv = [](const char* k, const auto& field) { return std::make_pair(k, &field); };
    section("model", kv("kind", c.kind), kv("statistic", c.statistic), kv("eta", c.eta), kv("x_star", c.x_star),
            kv("mu0", c.mu0), kv("mu1", c.mu1), kv("p", c.p));
    section("levels", kv("alpha", c.alpha), kv("beta", c.beta), kv("regime", c.regime));
    section("budget", kv("reps", c.reps), kv("sim_reps", c.sim_reps), kv("max_n", c.max_n), kv("threads", c.threads),
            kv("seed", c.seed));
    section("output", kv("dir", c.dir), kv("prefix", c.prefix));
    return os.str();
}

/// Fields set in over replace those in base.
inline RunConfig merge(RunConfig base, const RunConfig& over) {
    auto pick = [](auto& b, const auto& o) {
        if (o) b = o;
    };
    pick(base.kind, over.kind);
    pick(base.statistic, over.statistic);
    pick(base.eta, over.eta);
    pick(base.x_star, over.x_star);
    pick(base.mu0, over.mu0);
    pick(base.mu1, over.mu1);
    pick(base.p, over.p);
    pick(base.alpha, over.alpha);
    pick(base.beta, over.beta);
    pick(base.regime, over.regime);
    pick(base.reps, over.reps);
    pick(base.sim_reps, over.sim_reps);
    pick(base.max_n, over.max_n);
    pick(base.threads, over.threads);
    pick(base.seed, over.seed);
    pick(base.dir, over.dir);
    pick(base.prefix, over.prefix);
    return base;
}

template <class T>
const T& require(const std::optional<T>& v, const std::string& key) {
    if (!v) throw ConfigError("missing required key " + key);
    return *v;
}

inline Statistic parse_statistic(const std::string& s) {
    for (auto x : {Statistic::AvgLlr, Statistic::SampleMean, Statistic::Binarized, Statistic::YuleWalker})
        if (to_string(x) == s) return x;
    throw ConfigError("model.statistic: unknown statistic '" + s + "' (llr, mean, binarized, yule-walker)");
}

inline ModelSpec model_from_config(const RunConfig& c) {
    const auto& kind = require(c.kind, "model.kind");
    const Statistic stat = c.statistic ? parse_statistic(*c.statistic) : Statistic::AvgLlr;
    try {
        if (kind == "gaussian") return ModelSpec::gaussian(require(c.eta, "model.eta"), stat, c.x_star.value_or(0.0));
        if (kind == "ar1") return ModelSpec::ar1(require(c.mu0, "model.mu0"), require(c.mu1, "model.mu1"), stat);
        if (kind == "markov")
            return ModelSpec::markov(require(c.p, "model.p"), require(c.mu0, "model.mu0"), require(c.mu1, "model.mu1"),
                                     stat);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("[model] ") + e.what());
    }
    throw ConfigError("model.kind: unknown model '" + kind + "' (gaussian, ar1, markov)");
}

inline SimBudget budget_from_config(const RunConfig& c) {
    SimBudget b;
    if (c.sim_reps) {
        if (*c.sim_reps < 100) throw ConfigError("budget.sim_reps must be >= 100");
        b.reps = std::size_t(*c.sim_reps);
    }
    if (c.max_n) {
        if (*c.max_n < 1) throw ConfigError("budget.max_n must be >= 1");
        b.max_n = *c.max_n;
    }
    b.seed = c.seed.value_or(1);
    return b;
}

}  // namespace mstest
