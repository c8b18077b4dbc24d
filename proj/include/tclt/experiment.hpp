#ifndef TCLT_EXPERIMENT_HPP
#define TCLT_EXPERIMENT_HPP

// Sweep configuration, cell execution and result records for the command-line front end.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <algorithm>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "measures.hpp"
#include "metrics.hpp"
#include "random.hpp"
#include "stein.hpp"
#include "symtensor.hpp"
#include "transport.hpp"
#include "wishart.hpp"

namespace tclt
{

// ---------------------------------------------------------------- INI text

struct IniEntry {
    std::string key; // empty for a comment line
    std::string value;
    int line = 0;
    int value_column = 0;
};

struct IniSection {
    std::string name;
    int line = 0;
    std::vector<IniEntry> entries;

    [[nodiscard]] const IniEntry *find(const std::string &key) const
    {
        const IniEntry *hit = nullptr;
        for (const auto &e : entries) {
            if (!e.key.empty() && e.key == key) {
                hit = &e;
            }
        }
        return hit;
    }
};

struct IniDocument {
    std::vector<std::string> preamble; // comment lines before the first section
    std::vector<IniSection> sections;

    [[nodiscard]] const IniSection *find(const std::string &name) const
    {
        for (const auto &s : sections) {
            if (s.name == name) {
                return &s;
            }
        }
        return nullptr;
    }

    /// Canonical text: "[name]" headers, "key = value" lines, comments kept, one blank line between sections.
    [[nodiscard]] std::string serialize() const
    {
        std::ostringstream os;
        for (const auto &c : preamble) {
            os << c << '\n';
        }
        for (std::size_t i = 0; i < sections.size(); ++i) {
            if (i || !preamble.empty()) {
                os << '\n';
            }
            os << '[' << sections[i].name << "]\n";
            for (const auto &e : sections[i].entries) {
                if (e.key.empty()) {
                    os << e.value << '\n';
                } else {
                    os << e.key << " = " << e.value << '\n';
                }
            }
        }
        return os.str();
    }
};

namespace detail
{

inline std::string trim(const std::string &s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string &s, char sep)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, sep)) {
        out.push_back(trim(item));
    }
    return out;
}

} // namespace detail

inline IniDocument parse_ini(const std::string &text)
{
    IniDocument doc;
    std::istringstream is(text);
    std::string raw;
    int lineno = 0;
    while (std::getline(is, raw)) {
        ++lineno;
        const std::string line = detail::trim(raw);
        if (line.empty()) {
            continue;
        }
        const int col = static_cast<int>(raw.find_first_not_of(" \t")) + 1;
        if (line[0] == '#' || line[0] == ';') {
            if (doc.sections.empty()) {
                doc.preamble.push_back(line);
                continue;
            }
            doc.sections.back().entries.push_back({"", line, lineno, col});
            continue;
        }
        if (line[0] == '[') {
            if (line.back() != ']') {
                throw config_error("unterminated section header", lineno, col);
            }
            const std::string name = detail::trim(line.substr(1, line.size() - 2));
            if (name.empty()) {
                throw config_error("empty section name", lineno, col + 1);
            }
            if (doc.find(name)) {
                throw config_error("duplicate section [" + name + "]", lineno, col);
            }
            doc.sections.push_back({name, lineno, {}});
            continue;
        }
        const auto eq = raw.find('=');
        if (eq == std::string::npos) {
            throw config_error("expected 'key = value'", lineno, col);
        }
        if (doc.sections.empty()) {
            throw config_error("key outside of any section", lineno, col);
        }
        const std::string key = detail::trim(raw.substr(0, eq));
        if (key.empty()) {
            throw config_error("empty key", lineno, col);
        }
        const auto vpos = raw.find_first_not_of(" \t", eq + 1);
        const int vcol = vpos == std::string::npos ? static_cast<int>(eq) + 2 : static_cast<int>(vpos) + 1;
        doc.sections.back().entries.push_back({key, detail::trim(raw.substr(eq + 1)), lineno, vcol});
    }
    return doc;
}

// ---------------------------------------------------------------- experiment config

enum class WeightsMode { homogeneous, list, toeplitz };

enum class EstimatorId : std::uint64_t { gaussian_proxy = 0, exact_w2 = 1, entropic_w2 = 2, stein_upper = 3 };

inline std::string to_string(EstimatorId e)
{
    switch (e) {
        case EstimatorId::gaussian_proxy:
            return "gaussian_proxy";
        case EstimatorId::exact_w2:
            return "exact_w2";
        case EstimatorId::entropic_w2:
            return "entropic_w2";
        case EstimatorId::stein_upper:
            return "stein_upper";
    }
    return "?";
}

inline std::optional<EstimatorId> parse_estimator(const std::string &s)
{
    for (auto e : {EstimatorId::gaussian_proxy, EstimatorId::exact_w2, EstimatorId::entropic_w2,
                   EstimatorId::stein_upper}) {
        if (to_string(e) == s) {
            return e;
        }
    }
    return std::nullopt;
}

/// Stream id for the bound column's Monte Carlo D8 estimate (not an estimator).
inline constexpr std::uint64_t bound_stream_id = 0x626f756e64ULL;

struct ExperimentConfig {
    IniDocument source;
    std::map<std::string, std::string> measure;
    std::vector<int> ns;
    std::vector<int> ds;
    std::vector<int> ps;
    IndexKind kind = IndexKind::principal;
    WeightsMode weights_mode = WeightsMode::homogeneous;
    std::vector<double> weights; // list entries or Toeplitz symbol
    std::vector<EstimatorId> estimators{EstimatorId::gaussian_proxy};
    std::size_t replicas = 1000;
    std::uint64_t seed = 0;
    int workers = 1;
    std::size_t bound_mc = 10000;

    /// Text of the weights column: homogeneous, list:a;b;..., toeplitz:s0;s1;...
    [[nodiscard]] std::string weights_label() const
    {
        if (weights_mode == WeightsMode::homogeneous) {
            return "homogeneous";
        }
        std::string s = weights_mode == WeightsMode::list ? "list:" : "toeplitz:";
        char buf[32];
        for (std::size_t i = 0; i < weights.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", weights[i]);
            s += (i ? ";" : "");
            s += buf;
        }
        return s;
    }

    /// FNV-1a over the IEEE-754 bits of the weights (mode tag first); the string "homogeneous" otherwise.
    [[nodiscard]] std::uint64_t weights_hash() const
    {
        if (weights_mode == WeightsMode::homogeneous) {
            std::uint64_t h = fnv1a_offset;
            for (char c : std::string("homogeneous")) {
                h ^= static_cast<unsigned char>(c);
                h *= fnv1a_prime;
            }
            return h;
        }
        std::vector<std::uint64_t> fields;
        fields.push_back(weights_mode == WeightsMode::list ? 1 : 2);
        for (double w : weights) {
            std::uint64_t bits;
            std::memcpy(&bits, &w, sizeof bits);
            fields.push_back(bits);
        }
        return hash64(std::span<const std::uint64_t>(fields));
    }

    /// hash64(master, n, d, p, weights-hash, estimator-id).
    [[nodiscard]] std::uint64_t cell_seed(int n, int d, int p, std::uint64_t estimator_id) const
    {
        return hash64({seed, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(d),
                       static_cast<std::uint64_t>(p), weights_hash(), estimator_id});
    }

    /// Measure of a cell: the [measure] block with n replaced by the grid value.
    [[nodiscard]] MeasureSpec measure_for(int n) const
    {
        auto kv = measure;
        kv["n"] = std::to_string(n);
        return MeasureSpec::from_config(kv);
    }
};

namespace detail
{

inline long long parse_integer(const IniEntry &e, const std::string &text, int col)
{
    try {
        std::size_t used = 0;
        const long long v = std::stoll(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return v;
    } catch (const std::exception &) {
        throw config_error("'" + e.key + "': expected an integer, got '" + text + "'", e.line, col);
    }
}

inline double parse_real(const IniEntry &e, const std::string &text, int col)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) {
            throw std::invalid_argument(text);
        }
        return v;
    } catch (const std::exception &) {
        throw config_error("'" + e.key + "': expected a real number, got '" + text + "'", e.line, col);
    }
}

inline std::vector<int> parse_int_list(const IniEntry &e)
{
    std::vector<int> out;
    for (const auto &item : split(e.value, ',')) {
        const long long v = parse_integer(e, item, e.value_column);
        if (v < 1) {
            throw config_error("'" + e.key + "': values must be >= 1", e.line, e.value_column);
        }
        out.push_back(static_cast<int>(v));
    }
    if (out.empty()) {
        throw config_error("'" + e.key + "': empty list", e.line, e.value_column);
    }
    return out;
}

inline std::vector<double> parse_real_list(const IniEntry &e, const std::string &text, int col)
{
    std::vector<double> out;
    for (const auto &item : split(text, ',')) {
        out.push_back(parse_real(e, item, col));
    }
    if (out.empty()) {
        throw config_error("'" + e.key + "': empty list", e.line, col);
    }
    return out;
}

} // namespace detail

inline ExperimentConfig parse_experiment(const std::string &text)
{
    ExperimentConfig cfg;
    cfg.source = parse_ini(text);
    const auto &doc = cfg.source;
    for (const auto &s : doc.sections) {
        if (s.name != "measure" && s.name != "grid" && s.name != "run") {
            throw config_error("unknown section [" + s.name + "]", s.line, 1);
        }
    }
    const auto *measure = doc.find("measure");
    const auto *grid = doc.find("grid");
    if (!measure) {
        throw config_error("missing [measure] section");
    }
    if (!grid) {
        throw config_error("missing [grid] section");
    }
    for (const auto &e : measure->entries) {
        if (!e.key.empty()) {
            cfg.measure[e.key] = e.value;
        }
    }
    if (!cfg.measure.count("family")) {
        throw config_error("[measure] needs 'family'", measure->line, 1);
    }
    try {
        parse_family(cfg.measure["family"]);
    } catch (const std::exception &ex) {
        const auto *e = measure->find("family");
        throw config_error(ex.what(), e->line, e->value_column);
    }

    bool have_n = false, have_d = false, have_p = false;
    for (const auto &e : grid->entries) {
        if (e.key.empty()) {
            continue;
        }
        if (e.key == "n") {
            cfg.ns = detail::parse_int_list(e);
            have_n = true;
        } else if (e.key == "d") {
            cfg.ds = detail::parse_int_list(e);
            have_d = true;
        } else if (e.key == "p") {
            cfg.ps = detail::parse_int_list(e);
            have_p = true;
        } else if (e.key == "kind") {
            try {
                cfg.kind = parse_index_kind(e.value);
            } catch (const std::exception &ex) {
                throw config_error(ex.what(), e.line, e.value_column);
            }
            if (cfg.kind == IndexKind::full) {
                throw config_error("kind must be principal or symmetric", e.line, e.value_column);
            }
        } else if (e.key == "weights") {
            if (e.value == "homogeneous") {
                cfg.weights_mode = WeightsMode::homogeneous;
            } else if (e.value.rfind("list:", 0) == 0) {
                cfg.weights_mode = WeightsMode::list;
                cfg.weights = detail::parse_real_list(e, e.value.substr(5), e.value_column + 5);
                for (double w : cfg.weights) {
                    if (!(w > 0)) {
                        throw config_error("weights must be positive", e.line, e.value_column + 5);
                    }
                }
            } else if (e.value.rfind("toeplitz:", 0) == 0) {
                cfg.weights_mode = WeightsMode::toeplitz;
                cfg.weights = detail::parse_real_list(e, e.value.substr(9), e.value_column + 9);
            } else {
                throw config_error("weights must be homogeneous, list:... or toeplitz:...", e.line, e.value_column);
            }
        } else {
            throw config_error("unknown [grid] key '" + e.key + "'", e.line, 1);
        }
    }
    if (!have_n || !have_d || !have_p) {
        throw config_error("[grid] needs n, d and p", grid->line, 1);
    }

    if (const auto *run = doc.find("run")) {
        for (const auto &e : run->entries) {
            if (e.key.empty()) {
                continue;
            }
            if (e.key == "estimators") {
                cfg.estimators.clear();
                for (const auto &name : detail::split(e.value, ',')) {
                    const auto id = parse_estimator(name);
                    if (!id) {
                        throw config_error("unknown estimator '" + name + "'", e.line, e.value_column);
                    }
                    cfg.estimators.push_back(*id);
                }
                if (cfg.estimators.empty()) {
                    throw config_error("estimators list is empty", e.line, e.value_column);
                }
            } else if (e.key == "replicas") {
                const long long r = detail::parse_integer(e, e.value, e.value_column);
                if (r < 100) {
                    throw config_error("replicas must be >= 100", e.line, e.value_column);
                }
                cfg.replicas = static_cast<std::size_t>(r);
            } else if (e.key == "seed") {
                if (!e.value.empty() && e.value[0] == '-') {
                    throw config_error("seed must be >= 0", e.line, e.value_column);
                }
                try {
                    std::size_t used = 0;
                    cfg.seed = std::stoull(e.value, &used);
                    if (used != e.value.size()) {
                        throw std::invalid_argument(e.value);
                    }
                } catch (const std::exception &) {
                    throw config_error("seed must be a nonnegative integer", e.line, e.value_column);
                }
            } else if (e.key == "workers") {
                const long long w = detail::parse_integer(e, e.value, e.value_column);
                if (w < 1) {
                    throw config_error("workers must be >= 1", e.line, e.value_column);
                }
                cfg.workers = static_cast<int>(w);
            } else if (e.key == "bound_mc") {
                const long long b = detail::parse_integer(e, e.value, e.value_column);
                if (b < 1000) {
                    throw config_error("bound_mc must be >= 1000", e.line, e.value_column);
                }
                cfg.bound_mc = static_cast<std::size_t>(b);
            } else {
                throw config_error("unknown [run] key '" + e.key + "'", e.line, 1);
            }
        }
    }
    return cfg;
}

inline ExperimentConfig load_experiment(const std::string &path)
{
    std::ifstream in(path);
    if (!in) {
        throw config_error("cannot read config file '" + path + "'");
    }
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_experiment(ss.str());
}

// ---------------------------------------------------------------- records

struct ResultRecord {
    int n = 0;
    int d = 0;
    int p = 0;
    std::string kind;
    std::string weights;
    std::string estimator;
    std::optional<double> value; // absent: skipped
    std::optional<double> std_error;
    std::optional<double> bound;
    double seconds = 0.0;
    std::uint64_t seed = 0;

    [[nodiscard]] bool skipped() const { return !value.has_value(); }
    bool operator==(const ResultRecord &) const = default;
};

inline constexpr const char *csv_header = "n,d,p,kind,weights,estimator,value,stderr,bound,seconds,seed";

namespace detail
{

inline std::string fmt_real(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

inline std::string to_csv(const std::vector<ResultRecord> &records)
{
    std::ostringstream os;
    os << csv_header << '\n';
    for (const auto &r : records) {
        os << r.n << ',' << r.d << ',' << r.p << ',' << r.kind << ',' << r.weights << ',' << r.estimator << ','
           << (r.value ? detail::fmt_real(*r.value) : "skipped") << ','
           << (r.std_error ? detail::fmt_real(*r.std_error) : "") << ','
           << (r.bound ? detail::fmt_real(*r.bound) : "") << ',' << detail::fmt_real(r.seconds) << ',' << r.seed
           << '\n';
    }
    return os.str();
}

inline std::string to_json_text(const std::vector<ResultRecord> &records)
{
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto &r : records) {
        nlohmann::ordered_json j;
        j["n"] = r.n;
        j["d"] = r.d;
        j["p"] = r.p;
        j["kind"] = r.kind;
        j["weights"] = r.weights;
        j["estimator"] = r.estimator;
        j["value"] = r.value ? nlohmann::ordered_json(*r.value) : nlohmann::ordered_json("skipped");
        j["stderr"] = r.std_error ? nlohmann::ordered_json(*r.std_error) : nlohmann::ordered_json(nullptr);
        j["bound"] = r.bound ? nlohmann::ordered_json(*r.bound) : nlohmann::ordered_json(nullptr);
        j["seconds"] = r.seconds;
        j["seed"] = r.seed;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

inline std::vector<ResultRecord> parse_records(const std::string &text)
{
    std::vector<ResultRecord> out;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
        nlohmann::json arr;
        try {
            arr = nlohmann::json::parse(text);
        } catch (const std::exception &ex) {
            throw std::runtime_error(std::string("malformed JSON result file: ") + ex.what());
        }
        if (!arr.is_array()) {
            throw std::runtime_error("malformed JSON result file: expected an array");
        }
        try {
            for (const auto &j : arr) {
                ResultRecord r;
                r.n = j.at("n").get<int>();
                r.d = j.at("d").get<int>();
                r.p = j.at("p").get<int>();
                r.kind = j.at("kind").get<std::string>();
                r.weights = j.at("weights").get<std::string>();
                r.estimator = j.at("estimator").get<std::string>();
                if (j.at("value").is_number()) {
                    r.value = j.at("value").get<double>();
                } else if (j.at("value") != "skipped") {
                    throw std::runtime_error("value must be a number or \"skipped\"");
                }
                if (j.at("stderr").is_number()) {
                    r.std_error = j.at("stderr").get<double>();
                }
                if (j.at("bound").is_number()) {
                    r.bound = j.at("bound").get<double>();
                }
                r.seconds = j.at("seconds").get<double>();
                r.seed = j.at("seed").get<std::uint64_t>();
                out.push_back(std::move(r));
            }
        } catch (const std::runtime_error &) {
            throw;
        } catch (const std::exception &ex) {
            throw std::runtime_error(std::string("malformed JSON result record: ") + ex.what());
        }
        return out;
    }
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    auto real = [&](const std::string &s) {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception &) {
            used = 0;
        }
        if (used != s.size() || s.empty()) {
            throw std::runtime_error("malformed number '" + s + "' on line " + std::to_string(lineno));
        }
        return v;
    };
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (lineno == 1) {
            if (line != csv_header) {
                throw std::runtime_error("malformed CSV result file: unexpected header");
            }
            continue;
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> f;
        std::string item;
        std::istringstream ls(line);
        while (std::getline(ls, item, ',')) {
            f.push_back(item);
        }
        if (!line.empty() && line.back() == ',') {
            f.emplace_back();
        }
        if (f.size() != 11) {
            throw std::runtime_error("malformed CSV record on line " + std::to_string(lineno));
        }
        ResultRecord r;
        r.n = static_cast<int>(real(f[0]));
        r.d = static_cast<int>(real(f[1]));
        r.p = static_cast<int>(real(f[2]));
        r.kind = f[3];
        r.weights = f[4];
        r.estimator = f[5];
        if (f[6] != "skipped") {
            r.value = real(f[6]);
        }
        if (!f[7].empty()) {
            r.std_error = real(f[7]);
        }
        if (!f[8].empty()) {
            r.bound = real(f[8]);
        }
        r.seconds = real(f[9]);
        try {
            r.seed = std::stoull(f[10]);
        } catch (const std::exception &) {
            throw std::runtime_error("malformed seed on line " + std::to_string(lineno));
        }
        out.push_back(std::move(r));
    }
    if (lineno == 0) {
        throw std::runtime_error("empty result file");
    }
    return out;
}

/// One text line per series with at least 3 distinct d (or n), for each estimator and for the bound column.
inline std::string slopes_report(const std::vector<ResultRecord> &records)
{
    struct Key {
        std::string series;
        int p;
        std::string kind;
        std::string weights;
        std::string axis;
        int fixed;
        auto operator<=>(const Key &) const = default;
    };
    std::map<Key, std::pair<std::vector<double>, std::vector<double>>> series;
    auto add = [&](const std::string &name, const ResultRecord &r, double y) {
        if (!(y > 0)) {
            return;
        }
        auto &a = series[{name, r.p, r.kind, r.weights, "d", r.n}];
        a.first.push_back(r.d);
        a.second.push_back(y);
        auto &b = series[{name, r.p, r.kind, r.weights, "n", r.d}];
        b.first.push_back(r.n);
        b.second.push_back(y);
    };
    std::map<std::tuple<int, int, int, std::string, std::string>, bool> bound_seen;
    for (const auto &r : records) {
        if (r.value) {
            add(r.estimator, r, *r.value);
        }
        if (r.bound && !bound_seen[{r.n, r.d, r.p, r.kind, r.weights}]) {
            bound_seen[{r.n, r.d, r.p, r.kind, r.weights}] = true;
            add("bound", r, *r.bound);
        }
    }
    std::ostringstream os;
    char buf[256];
    for (const auto &[k, xy] : series) {
        std::vector<double> xs = xy.first;
        std::sort(xs.begin(), xs.end());
        if (std::unique(xs.begin(), xs.end()) - xs.begin() < 3) {
            continue;
        }
        const auto fit = loglog_slope(xy.first, xy.second);
        std::snprintf(buf, sizeof buf, "series=%s p=%d kind=%s weights=%s %s=%d vs=%s slope=%.6f points=%zu\n",
                      k.series.c_str(), k.p, k.kind.c_str(), k.weights.c_str(), k.axis == "d" ? "n" : "d", k.fixed,
                      k.axis.c_str(), fit.slope, fit.points);
        os << buf;
    }
    return os.str();
}

// ---------------------------------------------------------------- sweep

struct Cell {
    int n;
    int d;
    int p;
};

inline std::vector<Cell> cells_of(const ExperimentConfig &cfg)
{
    std::vector<Cell> out;
    for (int n : cfg.ns) {
        for (int d : cfg.ds) {
            for (int p : cfg.ps) {
                out.push_back({n, d, p});
            }
        }
    }
    return out;
}

struct CellOutcome {
    std::vector<ResultRecord> records;
    std::string note; // reason when skipped
};

namespace detail
{

inline std::optional<std::vector<double>> cell_weights(const ExperimentConfig &cfg, int d)
{
    switch (cfg.weights_mode) {
        case WeightsMode::homogeneous:
            return std::nullopt;
        case WeightsMode::list:
            if (static_cast<int>(cfg.weights.size()) != d) {
                throw dimension_error("weights list has " + std::to_string(cfg.weights.size()) +
                                      " entries but d = " + std::to_string(d));
            }
            return cfg.weights;
        case WeightsMode::toeplitz: {
            const auto rep = toeplitz_weights(cfg.weights, d);
            return std::vector<double>(rep.eigenvalues.data(), rep.eigenvalues.data() + rep.eigenvalues.size());
        }
    }
    return std::nullopt;
}

inline double m8_for(const MeasureSpec &spec, int p, std::uint64_t seed)
{
    const int m = 8 * (p - 1);
    if (m == 0) {
        return 1.0;
    }
    if (m <= 24) {
        return abs_moment(spec, m).value;
    }
    return abs_moment(spec, m, MomentMethod::monte_carlo, 100000, seed).value;
}

} // namespace detail

/// Runs every estimator of one grid cell. Infeasible cells come back as skipped records.
inline CellOutcome run_cell(const ExperimentConfig &cfg, const Cell &cell, bool timing = false)
{
    CellOutcome out;
    const std::string kind = to_string(cfg.kind);
    const std::string wlabel = cfg.weights_label();
    auto base = [&](EstimatorId e) {
        ResultRecord r;
        r.n = cell.n;
        r.d = cell.d;
        r.p = cell.p;
        r.kind = kind;
        r.weights = wlabel;
        r.estimator = to_string(e);
        r.seed = cfg.cell_seed(cell.n, cell.d, cell.p, static_cast<std::uint64_t>(e));
        return r;
    };
    std::optional<WishartConfig> wcfg;
    std::optional<CovarianceModel> model;
    double bound = 0.0;
    try {
        if (cfg.kind == IndexKind::principal && cell.p > cell.n) {
            throw empty_space_error("principal tensors need p <= n");
        }
        const auto spec = cfg.measure_for(cell.n);
        wcfg.emplace(spec, cell.d, cell.p, cfg.kind, detail::cell_weights(cfg, cell.d));
        model = covariance_model(*wcfg);
        BoundInputs in;
        in.n = cell.n;
        in.d = cell.d;
        in.p = cell.p;
        in.opnorm_a = model->whitener_opnorm();
        const auto bseed = cfg.cell_seed(cell.n, cell.d, cell.p, bound_stream_id);
        in.m8p = detail::m8_for(spec, cell.p, bseed);
        in.d8 = opnorm_eighth_moment(default_transport(spec), cfg.bound_mc, bseed).eighth_moment.value;
        in.weights = wcfg->weights;
        bound = theorem_bound(in);
    } catch (const std::exception &ex) {
        out.note = ex.what();
        for (auto e : cfg.estimators) {
            out.records.push_back(base(e));
        }
        return out;
    }

    for (auto e : cfg.estimators) {
        auto rec = base(e);
        rec.bound = bound;
        const auto start = std::chrono::steady_clock::now();
        try {
            switch (e) {
                case EstimatorId::gaussian_proxy: {
                    const auto w = whiten(wishart_sample(*wcfg, cfg.replicas, rec.seed), *model);
                    const auto rep = gaussian_proxy_w2(w);
                    rec.value = rep.value;
                    rec.std_error = rep.std_error;
                    break;
                }
                case EstimatorId::exact_w2:
                case EstimatorId::entropic_w2: {
                    const std::size_t m =
                        std::min<std::size_t>(cfg.replicas, e == EstimatorId::exact_w2 ? 2000 : 500);
                    const auto w = whiten(wishart_sample(*wcfg, m, derive_seed(rec.seed, 0)), *model);
                    Eigen::MatrixXd ref(static_cast<Eigen::Index>(m), w.cols());
                    auto eng = make_engine(derive_seed(rec.seed, 1));
                    std::normal_distribution<double> normal;
                    for (Eigen::Index i = 0; i < ref.rows(); ++i) {
                        for (Eigen::Index j = 0; j < ref.cols(); ++j) {
                            ref(i, j) = normal(eng);
                        }
                    }
                    if (e == EstimatorId::exact_w2) {
                        rec.value = exact_w2(w, ref).value;
                    } else {
                        const auto rep = entropic_w2(w, ref);
                        rec.value = rep.value;
                        rec.std_error = rep.duality_gap;
                    }
                    break;
                }
                case EstimatorId::stein_upper: {
                    const auto map = default_transport(wcfg->spec);
                    const auto field = build_kernel(map, wcfg->space(), cfg.kind, OUQuadrature(16, 64, rec.seed));
                    const auto est = discrepancy_upper_estimate(field, model->whitener, cfg.replicas);
                    const double r = wcfg->weight_ratio();
                    rec.value = discrepancy_to_w2(est.value * r);
                    rec.std_error = est.std_error * r;
                    break;
                }
            }
        } catch (const std::exception &ex) {
            rec.value.reset();
            rec.std_error.reset();
            out.note = ex.what();
        }
        if (timing) {
            rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
        out.records.push_back(std::move(rec));
    }
    return out;
}

struct SweepResult {
    std::vector<ResultRecord> records;
    std::vector<std::string> notes; // "n=.. d=.. p=..: reason" for skipped cells
};

/// All cells in grid order; cells run concurrently on `workers` threads, records are emitted in cell order.
inline SweepResult run_sweep(const ExperimentConfig &cfg, int workers, bool timing = false)
{
    const auto cells = cells_of(cfg);
    std::vector<CellOutcome> outcomes(cells.size());
    detail::parallel_for(cells.size(), workers, [&](std::size_t i) { outcomes[i] = run_cell(cfg, cells[i], timing); });
    SweepResult res;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        for (auto &r : outcomes[i].records) {
            res.records.push_back(std::move(r));
        }
        if (!outcomes[i].note.empty()) {
            res.notes.push_back("n=" + std::to_string(cells[i].n) + " d=" + std::to_string(cells[i].d) +
                                " p=" + std::to_string(cells[i].p) + ": " + outcomes[i].note);
        }
    }
    return res;
}

// ---------------------------------------------------------------- self test

struct SelftestLine {
    std::string name;
    double residual = 0.0;
    double std_error = 0.0;
    double threshold = 0.0; // pass iff |residual| < threshold (already scaled)
    bool pass = false;
};

struct SelftestOptions {
    std::size_t mc_n = 20000;
    std::uint64_t seed = 0;
    double fault = 0.0;
    int workers = 1;
};

/// Identity suite for one measure: Stein identity (linear, quadratic) and kernel moment identity for each p.
inline std::vector<SelftestLine> selftest_measure(const MeasureSpec &spec, const std::vector<int> &ps, IndexKind kind,
                                                  const SelftestOptions &opt)
{
    std::vector<SelftestLine> lines;
    const auto map = default_transport(spec);
    for (int p : ps) {
        if (kind == IndexKind::principal && p > spec.n()) {
            continue;
        }
        const std::uint64_t seed = hash64({opt.seed, static_cast<std::uint64_t>(spec.n()),
                                           static_cast<std::uint64_t>(p)});
        auto field = build_kernel(map, TensorSpace(spec.n(), p), kind, OUQuadrature(16, 64, seed));
        field.inject_fault(opt.fault);
        const auto rep = identity_suite(field, opt.mc_n, seed, opt.workers);
        const std::string tag = to_string(spec.family()) + " n=" + std::to_string(spec.n()) +
                                " p=" + std::to_string(p) + " " + to_string(kind);
        for (const auto *r : {&rep.linear, &rep.quadratic}) {
            lines.push_back({tag + " stein_identity/" + to_string(r->family), r->residual, r->std_error,
                             4.0 * r->std_error + 1e-10, r->passes()});
        }
        const double worst = rep.moment.max_abs_diff;
        lines.push_back({tag + " kernel_moment", worst, rep.moment.kernel_stderr.maxCoeff(),
                         4.0 * rep.moment.kernel_stderr.maxCoeff() + 1e-10, rep.moment.passes()});
    }
    return lines;
}

/// Contraction check of τ̂ for maps with ‖Dφ‖_op <= 1.
inline std::vector<SelftestLine> selftest_contraction(const SelftestOptions &opt, std::size_t points = 2000)
{
    std::vector<SelftestLine> lines;
    const auto uni = monotone_rearrangement(MeasureSpec::uniform_box(2));
    const std::vector<std::pair<std::string, TransportMap>> maps{
        {"identity", identity_map(2)},
        {"half_identity", identity_map(2).scaled(0.5)},
        {"uniform_box_contracted", uni.scaled(1.0 / uni.alpha())},
    };
    for (const auto &[name, map] : maps) {
        auto field = build_kernel(map, TensorSpace(2, 1), IndexKind::principal,
                                  OUQuadrature(16, 64, hash64({opt.seed, 0x6c3433ULL})));
        field.inject_fault(opt.fault);
        const auto rep = lemma43_check(field, points, opt.workers);
        const double excess = rep.max_opnorm - 1.0;
        const double tol = 3.0 * rep.inner_stderr + 1e-12;
        lines.push_back({"contraction " + name, excess, rep.inner_stderr, tol, excess <= tol});
    }
    return lines;
}

} // namespace tclt

#endif
