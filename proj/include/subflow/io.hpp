#pragma once

// JSON space/derivation files, seed lists, tolerance overrides, and the
// report, interval and trace writers.
//
// Space file:
//   { "ambient_dim": 2,
//     "equalities": ["x0^2 + x1^2 - 1"], "inequalities": [],
//     "sample_box": [[-1.5, 1.5], [-1.5, 1.5]],
//     "tol_membership": 1e-7,          // sets both tolerances
//     "tol_equality": 1e-7, "tol_inequality": 1e-9,
//     "components": ["-x1", "x0"],     // optional derivation
//     "tolerances": { "horizon": 10 }, // optional Tolerances
//     "seeds": [[1, 0]],               // optional default seeds
//     "checks": { ... } }              // optional check corpus

#include "subflow/derivation.hpp"
#include "subflow/dspace.hpp"
#include "subflow/errors.hpp"
#include "subflow/expr.hpp"
#include "subflow/flow.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace subflow::io {

using json = nlohmann::ordered_json;

/// Malformed or unreadable configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

namespace detail {

inline Expr parse_field(const json& node, const std::string& where, std::size_t dim) {
    if (!node.is_string()) throw ConfigError(where + " must be an expression string");
    try {
        return parse(node.get<std::string>(), {.dimension = dim});
    } catch (const ParseError& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

inline std::vector<Expr> parse_list(const json& doc, const char* key, std::size_t dim) {
    std::vector<Expr> out;
    if (!doc.contains(key)) return out;
    const json& list = doc.at(key);
    if (!list.is_array()) throw ConfigError(std::string(key) + " must be a list of expressions");
    for (std::size_t i = 0; i < list.size(); ++i)
        out.push_back(parse_field(list[i], std::string(key) + "[" + std::to_string(i) + "]", dim));
    return out;
}

inline double number(const json& node, const std::string& where) {
    if (!node.is_number()) throw ConfigError(where + " must be a number");
    return node.get<double>();
}

} // namespace detail

inline EmbeddedSpace space_from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("space spec must be a JSON object");
    if (!doc.contains("ambient_dim") || !doc["ambient_dim"].is_number_unsigned() || doc["ambient_dim"].get<std::size_t>() == 0)
        throw ConfigError("ambient_dim must be a positive integer");
    const auto n = doc["ambient_dim"].get<std::size_t>();
    auto eq = detail::parse_list(doc, "equalities", n);
    auto ineq = detail::parse_list(doc, "inequalities", n);

    if (!doc.contains("sample_box") || !doc["sample_box"].is_array()) throw ConfigError("sample_box is required");
    Box box;
    for (const auto& iv : doc["sample_box"]) {
        if (!iv.is_array() || iv.size() != 2) throw ConfigError("sample_box entries must be [lo, hi]");
        box.push_back({detail::number(iv[0], "sample_box"), detail::number(iv[1], "sample_box")});
    }

    MembershipTolerance tol;
    if (doc.contains("tol_membership")) tol.equality = tol.inequality = detail::number(doc["tol_membership"], "tol_membership");
    if (doc.contains("tol_equality")) tol.equality = detail::number(doc["tol_equality"], "tol_equality");
    if (doc.contains("tol_inequality")) tol.inequality = detail::number(doc["tol_inequality"], "tol_inequality");
    try {
        return EmbeddedSpace(n, std::move(eq), std::move(ineq), std::move(box), tol);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

inline std::vector<Expr> components_from_json(const json& doc, std::size_t dim) {
    if (doc.is_array()) return detail::parse_list(json{{"components", doc}}, "components", dim);
    if (!doc.contains("components")) throw ConfigError("derivation spec needs 'components'");
    return detail::parse_list(doc, "components", dim);
}

/// Comma-separated component list, commas inside parentheses kept.
inline std::vector<Expr> components_from_string(const std::string& text, std::size_t dim) {
    std::vector<Expr> out;
    std::string cur;
    int depth = 0;
    auto flush = [&] {
        out.push_back(detail::parse_field(json(cur), "component " + std::to_string(out.size()), dim));
        cur.clear();
    };
    for (char c : text) {
        if (c == '(') ++depth;
        if (c == ')') --depth;
        if (c == ',' && depth == 0)
            flush();
        else
            cur += c;
    }
    flush();
    return out;
}

inline Derivation derivation_from(const SpacePtr& space, std::vector<Expr> components) {
    try {
        return Derivation(space, std::move(components));
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
}

inline std::vector<std::vector<double>> seeds_from_json(const json& doc, std::size_t dim) {
    const json& list = doc.is_object() ? doc.value("seeds", json::array()) : doc;
    if (!list.is_array()) throw ConfigError("seeds must be a list of points");
    std::vector<std::vector<double>> out;
    for (const auto& p : list) {
        if (!p.is_array() || p.size() != dim)
            throw ConfigError("each seed must be a list of " + std::to_string(dim) + " numbers");
        std::vector<double> q;
        for (const auto& x : p) q.push_back(detail::number(x, "seed coordinate"));
        out.push_back(std::move(q));
    }
    return out;
}

/// Applies the keys of a "tolerances" object on top of `tol`.
inline void apply_tolerances(const json& doc, Tolerances& tol) {
    if (!doc.is_object()) throw ConfigError("tolerances must be an object");
    for (const auto& [key, val] : doc.items()) {
        if (key == "project_equalities") {
            if (!val.is_boolean()) throw ConfigError("tolerances.project_equalities must be a boolean");
            tol.project_equalities = val.get<bool>();
            continue;
        }
        const double x = detail::number(val, "tolerances." + key);
        if (key == "rel_tol") tol.rel_tol = x;
        else if (key == "abs_tol") tol.abs_tol = x;
        else if (key == "event_tol") tol.event_tol = x;
        else if (key == "dt_check") tol.dt_check = x;
        else if (key == "horizon") tol.horizon = x;
        else if (key == "blow_up_norm") tol.blow_up_norm = x;
        else if (key == "tangent_tol") tol.tangent_tol = x;
        else if (key == "max_step") tol.max_step = x;
        else if (key == "max_steps") tol.max_steps = static_cast<std::size_t>(x);
        else throw ConfigError("unknown tolerance '" + key + "'");
    }
}

/// SUBFLOW_TOL_{REL,ABS,EVENT,DT_CHECK,HORIZON,BLOW_UP,TANGENT}.
inline void apply_environment(Tolerances& tol, const std::function<const char*(const char*)>& getenv = {}) {
    auto get = [&](const char* name) -> const char* { return getenv ? getenv(name) : std::getenv(name); };
    const std::pair<const char*, double*> vars[] = {
        {"SUBFLOW_TOL_REL", &tol.rel_tol},       {"SUBFLOW_TOL_ABS", &tol.abs_tol},
        {"SUBFLOW_TOL_EVENT", &tol.event_tol},   {"SUBFLOW_TOL_DT_CHECK", &tol.dt_check},
        {"SUBFLOW_TOL_HORIZON", &tol.horizon},   {"SUBFLOW_TOL_BLOW_UP", &tol.blow_up_norm},
        {"SUBFLOW_TOL_TANGENT", &tol.tangent_tol},
    };
    for (const auto& [name, slot] : vars) {
        const char* raw = get(name);
        if (!raw || !*raw) continue;
        const std::string text(raw);
        double x = 0.0;
        const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), x);
        if (ec != std::errc() || ptr != text.data() + text.size())
            throw ConfigError(std::string(name) + " is not a number: '" + text + "'");
        *slot = x;
    }
}

// ---------------------------------------------------------------------------
// Writers

inline json point_json(std::span<const double> p) {
    json out = json::array();
    for (double x : p) out.push_back(x);
    return out;
}

inline json report_json(const CheckReport& r) {
    json out{{"check", r.check},
             {"status", to_string(r.status)},
             {"max_residual", r.max_residual},
             {"tolerance", r.tolerance},
             {"worst_point", point_json(r.worst_point)},
             {"samples", r.samples},
             {"seed", r.seed}};
    if (!r.detail.empty()) out["detail"] = r.detail;
    if (!r.metrics.empty()) {
        json m = json::object();
        for (const auto& [k, v] : r.metrics) m[k] = v;
        out["metrics"] = m;
    }
    return out;
}

inline json sidecar_json(std::size_t index, const IntegralCurve& c) {
    return {{"seed_index", index},
            {"seed", point_json(c.seed())},
            {"t_min", c.t_min()},
            {"t_max", c.t_max()},
            {"end_reasons", {{"backward", to_string(c.backward_end())}, {"forward", to_string(c.forward_end())}}},
            {"audit_points", c.audit_points()},
            {"audit_failures", c.audit_failures()}};
}

/// One interval record per seed: the serialized flow domain.
inline json seed_record_json(std::size_t index, const SeedResult& r) {
    if (r.curve) {
        json out = sidecar_json(index, *r.curve);
        out["status"] = "ok";
        return out;
    }
    return {{"seed_index", index}, {"seed", point_json(r.seed)}, {"status", "error"}, {"error", r.error}};
}

/// Sample times from t_min to t_max spaced dt, with the endpoint included.
inline std::vector<double> trace_times(const IntegralCurve& c, double dt) {
    if (!(dt > 0.0)) throw InvalidArgument("trace spacing must be positive");
    std::vector<double> ts;
    const double span = c.t_max() - c.t_min();
    const auto steps = static_cast<std::size_t>(std::floor(span / dt + 1e-9));
    for (std::size_t k = 0; k <= steps; ++k) ts.push_back(c.t_min() + dt * static_cast<double>(k));
    if (ts.back() < c.t_max()) ts.push_back(c.t_max());
    return ts;
}

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline void write_trace_csv_header(std::ostream& out, std::size_t dim) {
    out << "seed_index,t";
    for (std::size_t i = 0; i < dim; ++i) out << ",x" << i;
    out << '\n';
}

inline void write_trace_csv(std::ostream& out, std::size_t index, const IntegralCurve& c, double dt) {
    for (double t : trace_times(c, dt)) {
        out << index << ',' << format_double(t);
        for (double x : c(t)) out << ',' << format_double(x);
        out << '\n';
    }
}

inline json trace_json(std::size_t index, const IntegralCurve& c, double dt) {
    json rows = json::array();
    for (double t : trace_times(c, dt)) rows.push_back({{"t", t}, {"x", point_json(c(t))}});
    json out = sidecar_json(index, c);
    out["trace"] = rows;
    return out;
}

} // namespace subflow::io
