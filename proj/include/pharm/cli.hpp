#pragma once

// Configuration-driven experiment runner.
//
// Config text is flat `key = value` with dotted section prefixes and `#`
// comments.  A run validates everything, computes in memory, and only then
// writes a fresh run directory (never overwritten) plus a `latest` marker.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "pharm/analytic.hpp"
#include "pharm/discretization.hpp"
#include "pharm/energy_solver.hpp"
#include "pharm/errors.hpp"
#include "pharm/radial_bvp.hpp"
#include "pharm/verification.hpp"

namespace pharm {

enum ExitStatus : int { Ok = 0, ConfigFailure = 1, NonConvergence = 2, VerificationFailure = 3, IoFailure = 4 };

/// Every problem found while parsing, not only the first.
class ConfigErrors : public ConfigError {
public:
    explicit ConfigErrors(std::vector<std::string> errors)
        : ConfigError(join(errors)), errors_(std::move(errors))
    {
    }
    const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
    static std::string join(const std::vector<std::string>& e)
    {
        std::string s = "invalid configuration:";
        for (const auto& x : e)
            s += "\n  " + x;
        return s;
    }
    std::vector<std::string> errors_;
};

struct RunConfig {
    std::string kind;
    double p = 0.0;
    int d = 0;

    struct Geometry {
        std::string mode; // radial | 2d
        double r_in = 1.0;
        double R = 0.0;
        int n_r = 64;
        int n_theta = 128;
        double grading = 1.0;
        int intervals = 400;
        std::optional<double> radial_grading;
    } geometry;

    struct Inner {
        std::string law; // dirichlet | neumann | robin
        double value = 0.0;
        double alpha = 1.0;
        std::optional<std::pair<double, double>> dirichlet_arc;
        double arc_value = 0.0;
    } inner;

    struct Far {
        std::string kind; // limit | outer_dirichlet | growth
        double value = 0.0;
    } far;

    double epsilon = 1e-6;
    SolverOptions solver;
    std::string initial = "default"; // default | linear

    struct Verify {
        std::vector<double> radii{2.0, 4.0, 8.0};
        std::optional<double> b;
        std::string cutoff = "exp";
        double radii_start = 2.0;
        int radii_count = 5;
        int per_circle = 64;
        double constant_tol = 1e-8;
    } verify;

    DichotomyOptions classify;

    struct Checks {
        std::optional<double> max_norm;
        std::optional<std::string> verdict;
        std::optional<double> limit;
        double limit_tol = 1e-3;
        std::optional<double> exponent;
        double exponent_tol = 0.05;
        double oracle_shoot_tol = 1e-8;
        double oracle_2d_tol = 1e-2;
    } check;

    PExponents exps() const { return PExponents::make(p, d); }
    bool radial() const { return geometry.mode == "radial"; }
};

namespace detail {

inline std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::optional<double> to_number(const std::string& s)
{
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc() || ptr != end || s.empty())
        return std::nullopt;
    return v;
}

inline std::optional<std::vector<double>> to_list(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto v = to_number(trim(item));
        if (!v)
            return std::nullopt;
        out.push_back(*v);
    }
    if (out.empty())
        return std::nullopt;
    return out;
}

enum class KeyType { Number, Integer, Text, List };

struct KeyDef {
    KeyType type;
    std::function<void(RunConfig&, const std::string&, double, const std::vector<double>&)> assign;
};

inline const std::map<std::string, KeyDef>& key_table()
{
    using C = RunConfig;
    using L = std::vector<double>;
    static const std::map<std::string, KeyDef> table{
        {"kind", {KeyType::Text, [](C& c, const std::string& s, double, const L&) { c.kind = s; }}},
        {"p", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.p = x; }}},
        {"d", {KeyType::Integer, [](C& c, const std::string&, double x, const L&) { c.d = static_cast<int>(x); }}},
        {"geometry.mode", {KeyType::Text, [](C& c, const std::string& s, double, const L&) { c.geometry.mode = s; }}},
        {"geometry.r_in", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.geometry.r_in = x; }}},
        {"geometry.R", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.geometry.R = x; }}},
        {"geometry.n_r", {KeyType::Integer, [](C& c, const std::string&, double x, const L&) { c.geometry.n_r = static_cast<int>(x); }}},
        {"geometry.n_theta", {KeyType::Integer, [](C& c, const std::string&, double x, const L&) { c.geometry.n_theta = static_cast<int>(x); }}},
        {"geometry.grading", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.geometry.grading = x; }}},
        {"geometry.intervals", {KeyType::Integer, [](C& c, const std::string&, double x, const L&) { c.geometry.intervals = static_cast<int>(x); }}},
        {"geometry.radial_grading", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.geometry.radial_grading = x; }}},
        {"inner.law", {KeyType::Text, [](C& c, const std::string& s, double, const L&) { c.inner.law = s; }}},
        {"inner.value", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.inner.value = x; }}},
        {"inner.alpha", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.inner.alpha = x; }}},
        {"inner.dirichlet_arc", {KeyType::List, [](C& c, const std::string&, double, const L& l) {
             if (l.size() == 2)
                 c.inner.dirichlet_arc = std::pair{l[0], l[1]};
         }}},
        {"inner.arc_value", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.inner.arc_value = x; }}},
        {"far.kind", {KeyType::Text, [](C& c, const std::string& s, double, const L&) { c.far.kind = s; }}},
        {"far.value", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.far.value = x; }}},
        {"solver.epsilon", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.epsilon = x; }}},
        {"solver.tau_g", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.solver.tau_g = x; }}},
        {"solver.tau_x", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.solver.tau_x = x; }}},
        {"solver.max_iter", {KeyType::Integer, [](C& c, const std::string&, double x, const L&) { c.solver.max_iterations = static_cast<int>(x); }}},
        {"solver.quadrature_order", {KeyType::Integer, [](C& c, const std::string&, double x, const L&) { c.solver.quadrature_order = static_cast<int>(x); }}},
        {"solver.schedule", {KeyType::List, [](C& c, const std::string&, double, const L& l) { c.solver.epsilon_schedule = l; }}},
        {"solver.initial", {KeyType::Text, [](C& c, const std::string& s, double, const L&) { c.initial = s; }}},
        {"verify.radii", {KeyType::List, [](C& c, const std::string&, double, const L& l) { c.verify.radii = l; }}},
        {"verify.b", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.verify.b = x; }}},
        {"verify.cutoff", {KeyType::Text, [](C& c, const std::string& s, double, const L&) { c.verify.cutoff = s; }}},
        {"verify.radii_start", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.verify.radii_start = x; }}},
        {"verify.radii_count", {KeyType::Integer, [](C& c, const std::string&, double x, const L&) { c.verify.radii_count = static_cast<int>(x); }}},
        {"verify.constant_tol", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.verify.constant_tol = x; }}},
        {"verify.per_circle", {KeyType::Integer, [](C& c, const std::string&, double x, const L&) { c.verify.per_circle = static_cast<int>(x); }}},
        {"classify.ratio", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.classify.ratio_threshold = x; }}},
        {"classify.stabilization", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.classify.stabilization = x; }}},
        {"classify.flat_tolerance", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.classify.flat_tolerance = x; }}},
        {"check.max_norm", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.check.max_norm = x; }}},
        {"check.verdict", {KeyType::Text, [](C& c, const std::string& s, double, const L&) { c.check.verdict = s; }}},
        {"check.limit", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.check.limit = x; }}},
        {"check.limit_tol", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.check.limit_tol = x; }}},
        {"check.exponent", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.check.exponent = x; }}},
        {"check.exponent_tol", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.check.exponent_tol = x; }}},
        {"check.oracle_shoot_tol", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.check.oracle_shoot_tol = x; }}},
        {"check.oracle_2d_tol", {KeyType::Number, [](C& c, const std::string&, double x, const L&) { c.check.oracle_2d_tol = x; }}},
    };
    return table;
}

inline const std::set<std::string>& known_kinds()
{
    static const std::set<std::string> k{"solve-radial", "solve-2d",      "verify-caccioppoli", "verify-decay",
                                         "classify",     "oracle-compare", "constants"};
    return k;
}

inline void validate_config(const RunConfig& c, const std::set<std::string>& seen, std::vector<std::string>& err)
{
    auto need = [&](const char* key) {
        if (!seen.count(key))
            err.push_back(std::string("missing required key '") + key + "'");
    };
    need("kind");
    need("p");
    need("d");
    if (!c.kind.empty() && !known_kinds().count(c.kind))
        err.push_back("kind: unknown experiment '" + c.kind + "'");
    if (seen.count("p") && !(c.p > 1.0 && std::isfinite(c.p)))
        err.push_back("p: must satisfy p > 1 (got " + format_number(c.p) + ")");
    if (seen.count("d") && c.d < 2)
        err.push_back("d: must be >= 2");
    if (c.kind == "constants")
        return;

    need("inner.law");
    need("far.kind");
    need("geometry.R");
    if (!c.geometry.mode.empty() && c.geometry.mode != "radial" && c.geometry.mode != "2d")
        err.push_back("geometry.mode: expected radial or 2d");
    if (c.geometry.mode == "2d" && c.d != 2)
        err.push_back("geometry.mode: two-dimensional meshes require d = 2");
    if (c.kind == "solve-2d" && c.d != 2)
        err.push_back("kind solve-2d requires d = 2");
    if (!(c.geometry.r_in > 0.0))
        err.push_back("geometry.r_in: must be > 0");
    if (seen.count("geometry.R") && !(c.geometry.R > c.geometry.r_in))
        err.push_back("geometry.R: truncation radius must exceed geometry.r_in");
    if (c.geometry.n_r < 2)
        err.push_back("geometry.n_r: need at least 2 radial layers");
    if (c.geometry.n_theta < 8)
        err.push_back("geometry.n_theta: need at least 8 angular nodes");
    if (!(c.geometry.grading >= 1.0))
        err.push_back("geometry.grading: must be >= 1");
    if (c.geometry.intervals < 2)
        err.push_back("geometry.intervals: need at least 2 radial intervals");
    if (c.geometry.radial_grading && !(*c.geometry.radial_grading >= 1.0))
        err.push_back("geometry.radial_grading: must be >= 1");

    if (!c.inner.law.empty() && c.inner.law != "dirichlet" && c.inner.law != "neumann" && c.inner.law != "robin")
        err.push_back("inner.law: expected dirichlet, neumann or robin");
    if (c.inner.law == "robin" && !(c.inner.alpha >= 0.0))
        err.push_back("inner.alpha: RobinPower needs alpha >= 0 so that the sign condition h(v) v >= 0 holds");
    if (seen.count("inner.dirichlet_arc")) {
        if (!c.inner.dirichlet_arc)
            err.push_back("inner.dirichlet_arc: expected two angles 'begin, end'");
        else if (!(c.inner.dirichlet_arc->second >= c.inner.dirichlet_arc->first))
            err.push_back("inner.dirichlet_arc: end angle precedes start angle");
        if (c.geometry.mode == "radial" || c.kind == "solve-radial")
            err.push_back("inner.dirichlet_arc: partial arcs need a two-dimensional mesh");
    }

    if (!c.far.kind.empty() && c.far.kind != "limit" && c.far.kind != "outer_dirichlet" && c.far.kind != "growth")
        err.push_back("far.kind: expected limit, outer_dirichlet or growth");
    if (c.far.kind == "growth" && c.p < c.d)
        err.push_back("far.kind: the growth branch needs p >= d");

    if (!(c.epsilon > 0.0))
        err.push_back("solver.epsilon: must be > 0");
    if (!(c.solver.tau_g > 0.0))
        err.push_back("solver.tau_g: must be > 0");
    if (c.solver.max_iterations < 1)
        err.push_back("solver.max_iter: must be >= 1");
    if (c.solver.quadrature_order < 1 || c.solver.quadrature_order > 16)
        err.push_back("solver.quadrature_order: must lie in [1, 16]");
    if (c.initial != "default" && c.initial != "linear")
        err.push_back("solver.initial: expected default or linear");

    try {
        parse_transition(c.verify.cutoff);
    } catch (const ConfigError& e) {
        err.push_back(std::string("verify.cutoff: ") + e.what());
    }
    if (c.kind == "verify-caccioppoli")
        for (double r : c.verify.radii)
            if (!(r > c.geometry.r_in) || (c.geometry.R > 0 && 2.0 * r > c.geometry.R * (1 + 1e-12)))
                err.push_back("verify.radii: r = " + format_number(r) + " needs r_in < r and 2r <= R");
    if (!(c.verify.radii_start >= 2.0))
        err.push_back("verify.radii_start: decay radii must be >= 2");
    if (c.verify.radii_count < 4)
        err.push_back("verify.radii_count: need at least 4 radii");
    if (c.kind == "classify" && c.verify.radii_count < 5)
        err.push_back("verify.radii_count: the classifier needs at least 5 dyadic radii");
    if ((c.kind == "classify" || c.kind == "verify-decay") && c.geometry.R > 0
        && c.verify.radii_start * std::pow(2.0, c.verify.radii_count - 1) > c.geometry.R)
        err.push_back("verify.radii_count: dyadic radii run past the truncation radius");
    if (c.verify.per_circle < 1)
        err.push_back("verify.per_circle: must be >= 1");
    if (c.check.verdict && *c.check.verdict != "constant" && *c.check.verdict != "growth")
        err.push_back("check.verdict: expected constant or growth");
}

} // namespace detail

inline RunConfig parse_config(const std::string& text)
{
    RunConfig cfg;
    std::vector<std::string> err;
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        const std::string body = detail::trim(hash == std::string::npos ? line : line.substr(0, hash));
        if (body.empty())
            continue;
        const auto where = "line " + std::to_string(lineno) + ": ";
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            err.push_back(where + "expected 'key = value'");
            continue;
        }
        const std::string key = detail::trim(body.substr(0, eq)), value = detail::trim(body.substr(eq + 1));
        const auto& table = detail::key_table();
        const auto it = table.find(key);
        if (it == table.end()) {
            err.push_back(where + "unknown key '" + key + "'");
            continue;
        }
        if (!seen.insert(key).second) {
            err.push_back(where + "duplicate key '" + key + "'");
            continue;
        }
        const auto type = it->second.type;
        if (type == detail::KeyType::Text) {
            if (value.empty())
                err.push_back(where + key + ": empty value");
            else
                it->second.assign(cfg, value, 0.0, {});
        } else if (type == detail::KeyType::List) {
            const auto l = detail::to_list(value);
            if (!l)
                err.push_back(where + key + ": expected a comma-separated list of numbers");
            else
                it->second.assign(cfg, value, 0.0, *l);
        } else {
            const auto x = detail::to_number(value);
            if (!x)
                err.push_back(where + key + ": expected a number, got '" + value + "'");
            else if (type == detail::KeyType::Integer && *x != std::floor(*x))
                err.push_back(where + key + ": expected an integer, got '" + value + "'");
            else
                it->second.assign(cfg, value, *x, {});
        }
    }
    if (cfg.geometry.mode.empty())
        cfg.geometry.mode = (cfg.kind == "solve-radial" || cfg.d != 2) ? "radial" : "2d";
    if (cfg.kind == "solve-2d")
        cfg.geometry.mode = "2d";
    if (cfg.kind == "solve-radial")
        cfg.geometry.mode = "radial";
    detail::validate_config(cfg, seen, err);
    if (!err.empty())
        throw ConfigErrors(std::move(err));
    return cfg;
}

/// Resolved configuration, one `key = value` per line in table order.
inline std::string echo_config(const RunConfig& c)
{
    std::ostringstream os;
    auto num = [](double x) { return format_number(x); };
    auto list = [&](const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? ", " : "") + num(v[i]);
        return s;
    };
    os << "kind = " << c.kind << "\np = " << num(c.p) << "\nd = " << c.d << '\n';
    if (c.kind == "constants")
        return os.str();
    os << "geometry.mode = " << c.geometry.mode << "\ngeometry.r_in = " << num(c.geometry.r_in)
       << "\ngeometry.R = " << num(c.geometry.R) << '\n';
    if (c.radial()) {
        os << "geometry.intervals = " << c.geometry.intervals << '\n';
        if (c.geometry.radial_grading)
            os << "geometry.radial_grading = " << num(*c.geometry.radial_grading) << '\n';
    } else {
        os << "geometry.n_r = " << c.geometry.n_r << "\ngeometry.n_theta = " << c.geometry.n_theta
           << "\ngeometry.grading = " << num(c.geometry.grading) << '\n';
    }
    os << "inner.law = " << c.inner.law << '\n';
    if (c.inner.law == "dirichlet")
        os << "inner.value = " << num(c.inner.value) << '\n';
    if (c.inner.law == "robin")
        os << "inner.alpha = " << num(c.inner.alpha) << '\n';
    if (c.inner.dirichlet_arc)
        os << "inner.dirichlet_arc = " << num(c.inner.dirichlet_arc->first) << ", "
           << num(c.inner.dirichlet_arc->second) << "\ninner.arc_value = " << num(c.inner.arc_value) << '\n';
    os << "far.kind = " << c.far.kind << "\nfar.value = " << num(c.far.value) << '\n';
    os << "solver.epsilon = " << num(c.epsilon) << "\nsolver.tau_g = " << num(c.solver.tau_g)
       << "\nsolver.tau_x = " << num(c.solver.tau_x) << "\nsolver.max_iter = " << c.solver.max_iterations
       << "\nsolver.quadrature_order = " << c.solver.quadrature_order
       << "\nsolver.schedule = " << list(c.solver.epsilon_schedule) << "\nsolver.initial = " << c.initial << '\n';
    os << "verify.radii = " << list(c.verify.radii) << '\n';
    if (c.verify.b)
        os << "verify.b = " << num(*c.verify.b) << '\n';
    os << "verify.cutoff = " << c.verify.cutoff << "\nverify.radii_start = " << num(c.verify.radii_start)
       << "\nverify.radii_count = " << c.verify.radii_count << "\nverify.per_circle = " << c.verify.per_circle
       << "\nverify.constant_tol = " << num(c.verify.constant_tol) << '\n';
    os << "classify.ratio = " << num(c.classify.ratio_threshold)
       << "\nclassify.stabilization = " << num(c.classify.stabilization)
       << "\nclassify.flat_tolerance = " << num(c.classify.flat_tolerance) << '\n';
    if (c.check.max_norm)
        os << "check.max_norm = " << num(*c.check.max_norm) << '\n';
    if (c.check.verdict)
        os << "check.verdict = " << *c.check.verdict << '\n';
    if (c.check.limit)
        os << "check.limit = " << num(*c.check.limit) << "\ncheck.limit_tol = " << num(c.check.limit_tol) << '\n';
    if (c.check.exponent)
        os << "check.exponent = " << num(*c.check.exponent) << "\ncheck.exponent_tol = " << num(c.check.exponent_tol)
           << '\n';
    if (c.kind == "oracle-compare")
        os << "check.oracle_shoot_tol = " << num(c.check.oracle_shoot_tol)
           << "\ncheck.oracle_2d_tol = " << num(c.check.oracle_2d_tol) << '\n';
    return os.str();
}

/// Ordered `key: value` report.
class KeyValueReport {
public:
    void add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
    void add(const std::string& key, double value) { add(key, format_number(value)); }
    void add(const std::string& key, int value) { add(key, std::to_string(value)); }
    void add(const std::string& key, std::size_t value) { add(key, std::to_string(value)); }
    void add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }

    std::optional<std::string> get(const std::string& key) const
    {
        for (const auto& [k, v] : entries_)
            if (k == key)
                return v;
        return std::nullopt;
    }
    const std::vector<std::pair<std::string, std::string>>& entries() const noexcept { return entries_; }

    std::string str() const
    {
        std::string s;
        for (const auto& [k, v] : entries_)
            s += k + ": " + v + '\n';
        return s;
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

struct RunResult {
    int status = ExitStatus::Ok;
    KeyValueReport report;
    std::map<std::string, std::string> files; ///< file name -> contents
};

namespace detail {

inline RadialBVP radial_bvp_of(const RunConfig& c)
{
    RadialBVP bvp;
    bvp.r_in = c.geometry.r_in;
    bvp.exps = c.exps();
    if (c.inner.law == "dirichlet")
        bvp.inner = DirichletValue{c.inner.value};
    else if (c.inner.law == "robin")
        bvp.inner = RobinPower{c.inner.alpha};
    else
        bvp.inner = NeumannZero{};
    if (c.far.kind == "limit")
        bvp.far = Limit{c.far.value};
    else if (c.far.kind == "growth")
        bvp.far = GrowthCoefficient{c.far.value};
    else
        bvp.far = OuterDirichlet{c.geometry.R, c.far.value};
    return bvp;
}

inline bool pure_neumann(const RunConfig& c) { return c.inner.law == "neumann" && !c.inner.dirichlet_arc; }

/// Dirichlet value at the truncation radius: b, g, or the matched mu_p trace.
inline double outer_value_of(const RunConfig& c)
{
    if (c.far.kind == "growth" && !c.inner.dirichlet_arc)
        return solve_radial(radial_bvp_of(c)).eval(c.geometry.R);
    return truncation_value(radial_bvp_of(c).far, c.exps(), c.geometry.R);
}

inline std::vector<InnerSegment> segments_of(const RunConfig& c)
{
    const auto law = radial_bvp_of(c).inner;
    std::vector<InnerSegment> segs{InnerSegment{0.0, 2.0 * std::numbers::pi, law}};
    if (c.inner.dirichlet_arc)
        segs.push_back(InnerSegment{c.inner.dirichlet_arc->first, c.inner.dirichlet_arc->second,
                                    DirichletValue{c.inner.arc_value}});
    return segs;
}

template <class Mesh>
ProblemSpec<Mesh> problem_of(const RunConfig& c, std::shared_ptr<const Mesh> mesh)
{
    ProblemSpec<Mesh> s;
    s.mesh = std::move(mesh);
    s.exps = c.exps();
    s.inner = segments_of(c);
    s.outer_value = outer_value_of(c);
    s.epsilon = c.epsilon;
    s.options = c.solver;
    return s;
}

inline std::shared_ptr<const RadialGrid> radial_grid_of(const RunConfig& c)
{
    const double g = c.geometry.radial_grading.value_or(
        std::pow(c.geometry.R / c.geometry.r_in, 1.0 / c.geometry.intervals));
    return std::make_shared<const RadialGrid>(
        RadialGrid::geometric(c.d, c.geometry.r_in, c.geometry.R, c.geometry.intervals, g));
}

inline std::shared_ptr<const AnnularMesh2D> mesh_of(const RunConfig& c)
{
    return std::make_shared<const AnnularMesh2D>(build_annular_mesh(c.geometry.r_in, c.geometry.R, c.geometry.n_r,
                                                                    c.geometry.n_theta, c.geometry.grading));
}

/// Linear ramp between 1 on the hole and the outer value; a deliberately nontrivial start.
template <class Mesh>
typename mesh_traits<Mesh>::field_type linear_start(const ProblemSpec<Mesh>& s, const RunConfig& c)
{
    const double r_in = c.geometry.r_in, R = c.geometry.R, out = s.outer_value;
    auto ramp = [&](double r) { return out + (1.0 - out) * (R - r) / (R - r_in); };
    if constexpr (std::is_same_v<Mesh, RadialGrid>)
        return RadialField::interpolate(s.mesh, ramp);
    else
        return ScalarField::interpolate(s.mesh, [&](Vec2 x) { return ramp(norm(x)); });
}

template <class Mesh>
void record_solve(RunResult& res, const SolveReport<Mesh>& rep)
{
    res.report.add("solver.converged", rep.converged);
    res.report.add("solver.iterations", rep.iterations);
    res.report.add("solver.energy", rep.energy);
    res.report.add("solver.grad_norm", rep.grad_norm);
    res.report.add("solver.grad_floor", rep.grad_floor);
    res.report.add("solver.energy_monotone", rep.energy_monotone);
    for (std::size_t i = 0; i < rep.stages.size(); ++i)
        res.report.add("solver.stage" + std::to_string(i),
                       "eps=" + format_number(rep.stages[i].epsilon) + " iterations="
                           + std::to_string(rep.stages[i].iterations) + " grad_norm="
                           + format_number(rep.stages[i].grad_norm));
    res.report.add("solver.weak_residual_max", rep.weak_residual_max);
    res.report.add("solver.weak_residual_probes", rep.weak_residual_probes);
    res.report.add("solution.max_norm", rep.solution.max_abs());
    std::ostringstream field, trace;
    write_csv(field, rep.solution);
    write_trace_csv(trace, rep.trace);
    res.files["field.csv"] = field.str();
    res.files["trace.csv"] = trace.str();
}

/// Solve on the configured geometry; returns the report or records non-convergence.
template <class Mesh>
std::optional<SolveReport<Mesh>> run_solver(RunResult& res, const RunConfig& c, const ProblemSpec<Mesh>& spec)
{
    try {
        auto rep = c.initial == "linear" ? solve(spec, linear_start(spec, c)) : solve(spec);
        record_solve(res, rep);
        return rep;
    } catch (const NonConvergenceError<Mesh>& e) {
        record_solve(res, e.best());
        res.report.add("solver.failure", std::string(e.what()));
        res.status = ExitStatus::NonConvergence;
        return std::nullopt;
    }
}

inline void fail_check(RunResult& res, const std::string& what)
{
    res.report.add("check.failed", what);
    if (res.status == ExitStatus::Ok)
        res.status = ExitStatus::VerificationFailure;
}

template <class Field>
void generic_checks(RunResult& res, const RunConfig& c, const Field& v)
{
    if (c.check.max_norm) {
        const bool ok = v.max_abs() <= *c.check.max_norm;
        res.report.add("check.max_norm", ok);
        if (!ok)
            fail_check(res, "solution max-norm " + format_number(v.max_abs()) + " exceeds "
                                + format_number(*c.check.max_norm));
    }
}

template <class Field>
AnnulusSamples dyadic_samples(const RunConfig& c, const Field& v)
{
    const auto radii = dyadic_radii(c.verify.radii_start, c.verify.radii_count);
    if constexpr (std::is_same_v<Field, ScalarField>)
        return sample_on_annuli(v, radii, c.verify.per_circle);
    else
        return sample_on_annuli(v, radii);
}

template <class Field>
void verify_caccioppoli(RunResult& res, const RunConfig& c, const Field& v_in)
{
    const auto e = c.exps();
    double b = 0.0;
    if (c.verify.b) {
        b = *c.verify.b;
    } else if (pure_neumann(c)) {
        std::vector<double> radii;
        for (double r = 2.0; r <= c.geometry.R * (1 + 1e-12); r *= 2.0)
            radii.push_back(r);
        if (radii.size() >= 4) {
            AnnulusSamples s;
            if constexpr (std::is_same_v<Field, ScalarField>)
                s = sample_on_annuli(v_in, radii, c.verify.per_circle);
            else
                s = sample_on_annuli(v_in, radii);
            b = decay_fit(s, e, FitMode::Limit).b_hat;
        } else {
            b = outer_value_of(c);
        }
    }
    res.report.add("caccioppoli.b", b);
    // a solution equal to b up to solver resolution is certified as the constant b
    const bool constant = relative_deviation(v_in, b) <= c.verify.constant_tol;
    res.report.add("caccioppoli.constant_solution", constant);
    const Field v = constant ? constant_like(v_in, b) : v_in;
    const auto cutoff = build_cutoff(parse_transition(c.verify.cutoff));
    res.report.add("caccioppoli.cutoff", to_string(cutoff.kind()));
    res.report.add("caccioppoli.sup_grad", cutoff.sup_grad());
    std::vector<CaccioppoliReport> reps;
    bool all = true;
    for (double r : c.verify.radii) {
        reps.push_back(caccioppoli_check(v, b, cutoff.at(r), e));
        all = all && reps.back().holds;
        res.report.add("caccioppoli.r" + format_number(r),
                       "lhs=" + format_number(reps.back().lhs) + " rhs=" + format_number(reps.back().rhs)
                           + " holds=" + (reps.back().holds ? "true" : "false"));
    }
    res.report.add("caccioppoli.C0", reps.empty() ? 0.0 : reps.front().C0);
    res.report.add("caccioppoli.holds", all);
    const auto bc = bound_check(v, b, e, c.verify.radii);
    res.report.add("bound.C1", bc.C1);
    const auto k = cap_constants(v, b, cutoff, e, c.verify.radii);
    const auto cap = energy_cap(v, cutoff, c.verify.radii, e, k.C, k.delta);
    res.report.add("cap.C", cap.C);
    res.report.add("cap.delta", cap.delta);
    res.report.add("cap.bound", cap.cap);
    res.report.add("cap.premise_holds", cap.premise_holds());
    res.report.add("cap.all_capped", cap.all_capped());
    for (const auto& ce : cap.entries)
        if (!ce.premise_holds)
            res.report.add("cap.premise_violation.r" + format_number(ce.r), ce.premise_ratio);
    std::ostringstream os;
    write_caccioppoli_csv(os, reps);
    res.files["caccioppoli.csv"] = os.str();
    if (!all)
        fail_check(res, "Caccioppoli inequality violated");
}

template <class Field>
void verify_decay(RunResult& res, const RunConfig& c, const Field& v)
{
    const auto e = c.exps();
    const auto s = dyadic_samples(c, v);
    const auto mode = c.far.kind == "growth" ? FitMode::Growth : FitMode::Limit;
    const auto fit = decay_fit(s, e, mode);
    res.report.add("decay.mode", std::string(mode == FitMode::Growth ? "growth" : "limit"));
    res.report.add("decay.status", to_string(fit.status));
    res.report.add("decay.b_hat", fit.b_hat);
    res.report.add("decay.exponent", fit.exponent);
    res.report.add("decay.prefactor", fit.prefactor);
    res.report.add("decay.residual", fit.residual);
    res.report.add("decay.kappa", e.kappa());
    if (c.d >= 3) {
        const auto k = kelvin_limit_estimate(s.radii, s.mean, c.d);
        res.report.add("kelvin.b_hat", k.b_hat);
        res.report.add("kelvin.w0_hat", k.w0_hat);
        res.report.add("kelvin.residual", k.residual);
        if (c.check.limit) {
            const bool ok = std::abs(k.b_hat - *c.check.limit) <= c.check.limit_tol;
            res.report.add("check.kelvin_limit", ok);
            if (!ok)
                fail_check(res, "Kelvin limit estimate off target");
        }
    } else if (c.check.limit) {
        const bool ok = std::abs(fit.b_hat - *c.check.limit) <= c.check.limit_tol;
        res.report.add("check.limit", ok);
        if (!ok)
            fail_check(res, "extrapolated limit off target");
    }
    if (c.check.exponent) {
        const bool ok = fit.status == FitStatus::Ok && std::abs(fit.exponent - *c.check.exponent) <= c.check.exponent_tol;
        res.report.add("check.exponent", ok);
        if (!ok)
            fail_check(res, "fitted exponent off target");
    }
    std::ostringstream os;
    write_decay_csv(os, s, e);
    res.files["decay.csv"] = os.str();
}

template <class Field>
void classify(RunResult& res, const RunConfig& c, const Field& v)
{
    const auto e = c.exps();
    const auto s = dyadic_samples(c, v);
    const auto verdict = classify_dichotomy(s, e, c.classify);
    res.report.add("dichotomy.verdict", describe(verdict));
    if (c.check.verdict) {
        const bool ok = (*c.check.verdict == "constant" && std::holds_alternative<ConstantLimit>(verdict))
            || (*c.check.verdict == "growth" && std::holds_alternative<FundamentalGrowth>(verdict));
        res.report.add("check.verdict", ok);
        if (!ok)
            fail_check(res, "verdict differs from the expected " + *c.check.verdict);
    }
    if (c.check.limit) {
        const auto* cl = std::get_if<ConstantLimit>(&verdict);
        const bool ok = cl && std::abs(cl->b - *c.check.limit) <= c.check.limit_tol;
        res.report.add("check.limit", ok);
        if (!ok)
            fail_check(res, "classified limit off target");
    }
    std::ostringstream os;
    write_decay_csv(os, s, e);
    res.files["decay.csv"] = os.str();
}

inline void constants_report(RunResult& res, const RunConfig& c)
{
    const auto e = c.exps();
    res.report.add("kappa", e.kappa());
    res.report.add("critical", e.is_critical());
    res.report.add("omega_d", omega_d(c.d));
    res.report.add("c2", annulus_decay_constant(e));
    res.report.add("c2_as_printed", annulus_decay_constant_as_printed(e));
    res.report.add("c2_branch", std::string(std::abs(c.d - c.p * c.p) < 1e-9 ? "ln2" : "power"));
    res.report.add("c2_sign_discrepancy", std::abs(annulus_decay_constant(e) - annulus_decay_constant_as_printed(e)) > 0.0);
    res.report.add("sup_bound_constant_unit", sup_bound_constant(e, 1.0, 1.0));
}

template <class Mesh, class Body>
void with_solution(RunResult& res, const RunConfig& c, std::shared_ptr<const Mesh> mesh, Body&& body)
{
    const auto spec = problem_of(c, std::move(mesh));
    DiscreteProblem<Mesh> validated(spec);
    (void)validated;
    res.report.add("truncation.outer_value", spec.outer_value);
    if (auto rep = run_solver(res, c, spec)) {
        generic_checks(res, c, rep->solution);
        body(rep->solution);
    }
}

} // namespace detail

struct OracleComparison {
    double closed_vs_shoot = 0.0;
    std::optional<double> closed_vs_2d;
    std::optional<double> shoot_vs_2d;
    SampledProfile closed;
    SampledProfile shot;
};

/// Closed form vs shooting on the radial grid, and vs the 2-D solver when d = 2.
inline OracleComparison compare_with_oracle(const RunConfig& c)
{
    const auto bvp = detail::radial_bvp_of(c);
    bvp.validate();
    auto grid_cfg = c;
    grid_cfg.geometry.mode = "radial";
    const auto grid = detail::radial_grid_of(grid_cfg);
    OracleComparison out;
    const auto profile = solve_radial(bvp);
    out.closed = sample_profile(profile, *grid);
    out.shot = shoot_radial(bvp, *grid);
    out.closed_vs_shoot = out.shot.max_abs_difference(out.closed.v);
    if (c.d == 2) {
        auto cfg2 = c;
        cfg2.geometry.mode = "2d";
        cfg2.inner.dirichlet_arc.reset();
        const auto spec = detail::problem_of(cfg2, detail::mesh_of(cfg2));
        const auto rep = solve(spec);
        double d_closed = 0.0, d_shoot = 0.0;
        const auto& m = *spec.mesh;
        for (std::size_t k = 0; k < m.node_count(); ++k) {
            const double r = m.node_radius(k), v = rep.solution.values()[k];
            d_closed = std::max(d_closed, std::abs(v - profile.eval(r)));
        }
        for (std::size_t i = 0; i < out.shot.r.size(); ++i) {
            double worst = 0.0;
            for (int j = 0; j < m.angular_count(); j += std::max(1, m.angular_count() / 8))
                worst = std::max(worst, std::abs(rep.solution.value_at(out.shot.r[i], j * m.dtheta()) - out.shot.v[i]));
            d_shoot = std::max(d_shoot, worst);
        }
        out.closed_vs_2d = d_closed;
        out.shoot_vs_2d = d_shoot;
    }
    return out;
}

/// Validate and compute in memory; nothing touches the disk.
inline RunResult execute(const RunConfig& c)
{
    RunResult res;
    res.report.add("kind", c.kind);
    res.report.add("p", c.p);
    res.report.add("d", c.d);
    const char* det = std::getenv("PHARM_DETERMINISTIC");
    res.report.add("deterministic", std::string(det && std::string(det) == "1" ? "1" : "0"));

    if (c.kind == "constants") {
        detail::constants_report(res, c);
        res.report.add("status", res.status);
        return res;
    }
    if (c.kind == "oracle-compare") {
        const auto cmp = compare_with_oracle(c);
        res.report.add("oracle.closed_vs_shoot", cmp.closed_vs_shoot);
        if (cmp.closed_vs_shoot > c.check.oracle_shoot_tol)
            detail::fail_check(res, "closed form and shooting disagree");
        if (cmp.closed_vs_2d) {
            res.report.add("oracle.closed_vs_2d", *cmp.closed_vs_2d);
            res.report.add("oracle.shoot_vs_2d", *cmp.shoot_vs_2d);
            if (*cmp.closed_vs_2d > c.check.oracle_2d_tol)
                detail::fail_check(res, "2-D solve disagrees with the closed form");
        }
        std::ostringstream os;
        os << "r,closed,shooting\n";
        for (std::size_t i = 0; i < cmp.closed.r.size(); ++i)
            os << format_number(cmp.closed.r[i]) << ',' << format_number(cmp.closed.v[i]) << ','
               << format_number(cmp.shot.v[i]) << '\n';
        res.files["oracle.csv"] = os.str();
        res.report.add("status", res.status);
        return res;
    }

    auto dispatch = [&](auto&& body) {
        if (c.radial())
            detail::with_solution(res, c, detail::radial_grid_of(c), body);
        else
            detail::with_solution(res, c, detail::mesh_of(c), body);
    };
    if (c.kind == "solve-radial" || c.kind == "solve-2d") {
        if (!detail::pure_neumann(c) || c.far.kind != "growth") {
            const auto profile = c.inner.dirichlet_arc ? std::optional<RadialProfile>{}
                                                       : std::optional<RadialProfile>{solve_radial(detail::radial_bvp_of(c))};
            if (profile) {
                res.report.add("closed_form.a", profile->a);
                res.report.add("closed_form.b", profile->b);
            }
        }
        dispatch([](const auto&) {});
    } else if (c.kind == "verify-caccioppoli") {
        dispatch([&](const auto& v) { detail::verify_caccioppoli(res, c, v); });
    } else if (c.kind == "verify-decay") {
        dispatch([&](const auto& v) { detail::verify_decay(res, c, v); });
    } else if (c.kind == "classify") {
        dispatch([&](const auto& v) { detail::classify(res, c, v); });
    }
    res.report.add("status", res.status);
    return res;
}

struct RunArtifact {
    std::filesystem::path dir;
    int status = ExitStatus::Ok;
    RunResult result;
};

namespace detail {

inline std::string timestamp()
{
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y%m%dT%H%M%SZ");
    return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content)
{
    std::ofstream f(path, std::ios::binary);
    if (!f)
        throw std::filesystem::filesystem_error("cannot open for writing", path,
                                                std::make_error_code(std::errc::io_error));
    f << content;
    if (!f)
        throw std::filesystem::filesystem_error("write failed", path, std::make_error_code(std::errc::io_error));
}

} // namespace detail

/// Persist a computed result under `out_root/<timestamp>-<kind>[-n]` and update `latest`.
inline std::filesystem::path persist(const RunConfig& c, const RunResult& r, const std::filesystem::path& out_root)
{
    namespace fs = std::filesystem;
    fs::create_directories(out_root);
    const std::string base = detail::timestamp() + "-" + c.kind;
    fs::path dir = out_root / base;
    for (int n = 1; !fs::create_directory(dir); ++n)
        dir = out_root / (base + "-" + std::to_string(n));
    detail::write_file(dir / "config.txt", echo_config(c));
    detail::write_file(dir / "report.txt", r.report.str());
    for (const auto& [name, content] : r.files)
        detail::write_file(dir / name, content);
    const fs::path tmp = out_root / "latest.tmp";
    detail::write_file(tmp, dir.filename().string() + "\n");
    fs::rename(tmp, out_root / "latest");
    return dir;
}

/// Full run: compute, then write the artifact directory.  Exceptions of the
/// config/precondition kind propagate before anything is written.
inline RunArtifact run(const RunConfig& c, const std::filesystem::path& out_root)
{
    RunArtifact a;
    a.result = execute(c);
    a.status = a.result.status;
    try {
        a.dir = persist(c, a.result, out_root);
    } catch (const std::filesystem::filesystem_error&) {
        a.status = ExitStatus::IoFailure;
        throw;
    }
    return a;
}

} // namespace pharm
