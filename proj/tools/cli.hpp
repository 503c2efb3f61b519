#pragma once

// subflow command line: curve | flow | check | sample.
//
// Exit codes: 0 success, 1 configuration error, 2 numerical or per-seed failure.
// Precedence for tolerances: flags, then SUBFLOW_TOL_* variables, then the
// space file's "tolerances" object, then built-in defaults.

#include "subflow/subflow.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#ifndef SUBFLOW_GALLERY_DIR
#define SUBFLOW_GALLERY_DIR "gallery"
#endif

namespace subflow::cli {

using io::ConfigError;
using io::json;

inline const std::vector<std::string>& check_names() {
    static const std::vector<std::string> names{"leibniz", "chain_rule",       "inverse_rule",   "hadamard",
                                                "tangency", "point_determined", "curve_residual", "translation"};
    return names;
}

struct Options {
    std::string command;
    std::string space_file;
    std::string gallery;
    std::string derivation_file;
    std::string components;
    std::string seeds_file;
    std::string grid;
    std::optional<std::size_t> sample_count;
    std::uint64_t seed = 0;
    std::optional<double> horizon;
    std::optional<double> dt;
    std::string out_dir;
    std::string format = "csv";
    bool strict_tangency = false;
    bool project_equalities = false;
    bool traces = false;
    std::string checks_list;
    std::vector<std::string> check_args;
    bool all_checks = false;
    std::size_t samples = 100;
    unsigned threads = 0;
};

/// Loaded configuration shared by the subcommands.
struct Config {
    json doc;
    std::string label;
    SpacePtr space;
    std::optional<Derivation> derivation;
    Tolerances tol;
};

struct Seed {
    std::vector<double> point;
    bool skipped = false; // grid point outside M
};

inline std::filesystem::path gallery_dir() {
    if (const char* env = std::getenv("SUBFLOW_GALLERY")) return env;
    return SUBFLOW_GALLERY_DIR;
}

inline std::vector<std::string> gallery_cases() {
    std::vector<std::string> names;
    for (const auto& entry : std::filesystem::directory_iterator(gallery_dir()))
        if (entry.path().extension() == ".json") names.push_back(entry.path().stem().string());
    std::sort(names.begin(), names.end());
    return names;
}

inline Config load(const Options& o, bool need_derivation) {
    Config c;
    if (o.space_file.empty() == o.gallery.empty()) throw ConfigError("give exactly one of --space or --gallery");
    const auto path = o.gallery.empty() ? std::filesystem::path(o.space_file) : gallery_dir() / (o.gallery + ".json");
    if (!o.gallery.empty() && !std::filesystem::exists(path)) throw ConfigError("no gallery case '" + o.gallery + "'");
    c.doc = io::read_json_file(path);
    c.label = o.gallery.empty() ? o.space_file : o.gallery;
    c.space = share(io::space_from_json(c.doc));
    const std::size_t n = c.space->ambient_dim();

    if (need_derivation) {
        std::vector<Expr> comps;
        if (!o.components.empty())
            comps = io::components_from_string(o.components, n);
        else if (!o.derivation_file.empty())
            comps = io::components_from_json(io::read_json_file(o.derivation_file), n);
        else if (c.doc.contains("components"))
            comps = io::components_from_json(c.doc, n);
        else
            throw ConfigError("no derivation: use --components, --derivation, or a 'components' entry");
        c.derivation.emplace(io::derivation_from(c.space, std::move(comps)));
    }

    if (c.doc.contains("tolerances")) io::apply_tolerances(c.doc["tolerances"], c.tol);
    io::apply_environment(c.tol);
    if (o.horizon) c.tol.horizon = *o.horizon;
    if (o.project_equalities) c.tol.project_equalities = true;
    try {
        c.tol.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    return c;
}

/// "21x21" spans the sample box; "lo:hi:n,lo:hi:n" gives each axis.
inline std::vector<std::vector<double>> grid_points(const std::string& spec, const EmbeddedSpace& space) {
    const std::size_t n = space.ambient_dim();
    std::vector<double> lo, hi;
    std::vector<std::size_t> counts;
    auto to_count = [&](const std::string& s) {
        std::size_t pos = 0;
        long v = 0;
        try {
            v = std::stol(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size() || v < 1) throw ConfigError("bad grid count '" + s + "'");
        return static_cast<std::size_t>(v);
    };
    auto to_real = [&](const std::string& s) {
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != s.size()) throw ConfigError("bad grid bound '" + s + "'");
        return v;
    };
    auto split = [](const std::string& s, char sep) {
        std::vector<std::string> parts;
        std::stringstream ss(s);
        for (std::string item; std::getline(ss, item, sep);) parts.push_back(item);
        return parts;
    };
    if (spec.find(':') == std::string::npos) {
        const auto parts = split(spec, 'x');
        if (parts.size() != n) throw ConfigError("grid '" + spec + "' needs " + std::to_string(n) + " counts");
        for (std::size_t i = 0; i < n; ++i) {
            lo.push_back(space.sample_box()[i].lo);
            hi.push_back(space.sample_box()[i].hi);
            counts.push_back(to_count(parts[i]));
        }
    } else {
        const auto axes = split(spec, ',');
        if (axes.size() != n) throw ConfigError("grid '" + spec + "' needs " + std::to_string(n) + " axes");
        for (const auto& axis : axes) {
            const auto f = split(axis, ':');
            if (f.size() != 3) throw ConfigError("grid axis '" + axis + "' must be lo:hi:n");
            lo.push_back(to_real(f[0]));
            hi.push_back(to_real(f[1]));
            counts.push_back(to_count(f[2]));
        }
    }
    std::vector<std::vector<double>> pts;
    std::vector<std::size_t> idx(n, 0);
    for (;;) {
        std::vector<double> p(n);
        for (std::size_t i = 0; i < n; ++i)
            p[i] = counts[i] == 1 ? lo[i]
                                  : lo[i] + (hi[i] - lo[i]) * static_cast<double>(idx[i]) / static_cast<double>(counts[i] - 1);
        pts.push_back(std::move(p));
        std::size_t i = 0;
        while (i < n && ++idx[i] == counts[i]) idx[i++] = 0;
        if (i == n) break;
    }
    return pts;
}

/// Seeds from exactly one of --seeds, --grid, --sample, or the file's "seeds".
inline std::vector<Seed> load_seeds(const Options& o, const Config& c, bool allow_empty = false) {
    const int sources = !o.seeds_file.empty() + !o.grid.empty() + o.sample_count.has_value();
    if (sources > 1) throw ConfigError("give at most one of --seeds, --grid, --sample");
    const std::size_t n = c.space->ambient_dim();
    std::vector<Seed> out;
    if (!o.seeds_file.empty()) {
        for (auto& p : io::seeds_from_json(io::read_json_file(o.seeds_file), n)) out.push_back({std::move(p)});
    } else if (!o.grid.empty()) {
        for (auto& p : grid_points(o.grid, *c.space)) {
            const bool in = c.space->contains(p);
            out.push_back({std::move(p), !in});
        }
    } else if (o.sample_count) {
        try {
            for (auto& p : sample(*c.space, *o.sample_count, o.seed)) out.push_back({std::move(p)});
        } catch (const InvalidArgument& e) {
            throw ConfigError(e.what());
        }
    } else if (c.doc.contains("seeds")) {
        for (auto& p : io::seeds_from_json(c.doc["seeds"], n)) out.push_back({std::move(p)});
    }
    if (out.empty() && !allow_empty) throw ConfigError("no seeds");
    return out;
}

// ---------------------------------------------------------------------------
// Check corpus

struct Composition {
    Expr outer;
    std::vector<Expr> inner;
};

struct Corpus {
    std::vector<Expr> functions;
    std::vector<Composition> compositions;
    std::vector<Expr> positive;
};

/// Ten functions and ten compositions built from the first and last coordinates.
inline Corpus default_corpus(std::size_t n) {
    const std::string a = "x0";
    const std::string b = "x" + std::to_string(n - 1);
    const std::vector<std::string> fs{
        a,
        b + "^2",
        a + "*" + b + " + 1",
        "sin(" + a + ") + cos(" + b + ")",
        "exp(0.5*" + a + ") - " + b,
        a + "^3 - 2*" + a + "*" + b,
        "atan(" + a + " + " + b + ")",
        "tanh(" + b + ")*" + a,
        "sqrt(2 + " + a + "^2)",
        "(" + a + " - " + b + ")/(2 + " + a + "^2)",
    };
    const std::vector<std::string> outers{"x0*x1", "sin(x0 + x1)", "exp(x0)*x1^2", "x0/(1 + x1^2)", "atan(x0) - x1^3"};
    Corpus c;
    for (const auto& s : fs) c.functions.push_back(parse(s));
    for (std::size_t k = 0; k < 10; ++k)
        c.compositions.push_back({parse(outers[k % outers.size()]),
                                  {c.functions[k % fs.size()], c.functions[(k + 3) % fs.size()]}});
    for (const auto& f : c.functions) c.positive.push_back(exp(f / Expr(2.0)));
    return c;
}

inline Corpus load_corpus(const json& doc, std::size_t n) {
    Corpus c = default_corpus(n);
    if (!doc.contains("checks")) return c;
    const json& ch = doc["checks"];
    if (ch.contains("functions")) c.functions = io::detail::parse_list(ch, "functions", n);
    if (ch.contains("positive")) c.positive = io::detail::parse_list(ch, "positive", n);
    if (ch.contains("compositions")) {
        c.compositions.clear();
        for (const auto& item : ch["compositions"]) {
            if (!item.is_object() || !item.contains("outer") || !item.contains("inner"))
                throw ConfigError("each composition needs 'outer' and 'inner'");
            const auto inner = io::detail::parse_list(item, "inner", n);
            c.compositions.push_back({io::detail::parse_field(item["outer"], "outer", inner.size()), inner});
        }
    }
    return c;
}

/// Folds per-case reports of one check into a single report.
inline CheckReport merge(const std::string& name, const std::vector<CheckReport>& parts, std::uint64_t seed) {
    CheckReport out{.check = name, .seed = seed};
    out.metrics["cases"] = static_cast<double>(parts.size());
    for (const auto& r : parts) {
        out.tolerance = std::max(out.tolerance, r.tolerance);
        out.samples += r.samples;
        if (static_cast<int>(r.status) > static_cast<int>(out.status)) out.status = r.status;
        if (out.worst_point.empty() || !(r.max_residual <= out.max_residual)) {
            out.max_residual = std::max(out.max_residual, r.max_residual);
            out.worst_point = r.worst_point;
        }
        for (const auto& [k, v] : r.metrics)
            if (k != "cases") out.metrics[k] = std::max(out.metrics.count(k) ? out.metrics[k] : v, v);
        if (!r.detail.empty() && out.detail.empty()) out.detail = r.detail;
    }
    if (parts.empty()) out.detail = "no cases";
    return out;
}

inline std::vector<std::vector<double>> check_curve_seeds(const Options& o, const Config& c) {
    std::vector<std::vector<double>> seeds;
    for (auto& s : load_seeds(o, c, true))
        if (!s.skipped && c.space->contains(s.point)) seeds.push_back(std::move(s.point));
    if (seeds.empty()) seeds = sample(*c.space, 5, o.seed);
    return seeds;
}

inline CheckReport run_check(const std::string& name, const Options& o, const Config& c, const Corpus& corpus) {
    const Derivation& v = *c.derivation;
    const SpacePtr& M = c.space;
    const CheckOptions opts{.samples = o.samples, .seed = o.seed, .tol = 1e-12};
    std::vector<CheckReport> parts;
    auto wrap = [&](const Expr& e) { return RestrictedFunction(M, e); };

    if (name == "leibniz") {
        for (std::size_t k = 0; k < corpus.functions.size(); ++k)
            parts.push_back(leibniz_check(v, wrap(corpus.functions[k]),
                                          wrap(corpus.functions[(k + 1) % corpus.functions.size()]), opts));
    } else if (name == "chain_rule") {
        CheckOptions chain = opts;
        chain.tol = 1e-10;
        for (const auto& comp : corpus.compositions) {
            std::vector<RestrictedFunction> inner;
            for (const auto& f : comp.inner) inner.push_back(wrap(f));
            parts.push_back(chain_rule_check(v, comp.outer, inner, chain));
        }
    } else if (name == "inverse_rule") {
        for (const auto& a : corpus.positive) parts.push_back(inverse_rule_check(v, wrap(a), opts));
    } else if (name == "hadamard") {
        const auto pts = sample(*M, o.samples + 1, o.seed);
        const std::vector<std::vector<double>> queries(pts.begin() + 1, pts.end());
        for (const auto& f : corpus.functions) parts.push_back(hadamard_check(f, pts.front(), queries));
    } else if (name == "tangency") {
        parts.push_back(tangency_check(v, {.samples = o.samples, .seed = o.seed, .tol = 1e-9}, o.strict_tangency));
    } else if (name == "point_determined") {
        const auto pts = sample(*M, std::min<std::size_t>(o.samples, 50), o.seed);
        for (const auto& comp : corpus.compositions) {
            std::vector<RestrictedFunction> inner;
            for (const auto& f : comp.inner) inner.push_back(wrap(f));
            parts.push_back(point_determined_check(v, comp.outer, inner, pts));
        }
    } else if (name == "curve_residual") {
        for (const auto& p : check_curve_seeds(o, c)) {
            const auto curve = maximal_curve(v, p, c.tol);
            for (const auto& f : corpus.functions) parts.push_back(curve_residual_check(curve, v, wrap(f)));
        }
    } else if (name == "translation") {
        for (const auto& p : check_curve_seeds(o, c)) {
            const auto curve = maximal_curve(v, p, c.tol);
            const double s = curve.t_max() > 0.0 ? 0.5 * curve.t_max() : 0.5 * curve.t_min();
            parts.push_back(translation_check(v, p, s, c.tol));
        }
    } else {
        throw ConfigError("unknown check '" + name + "'");
    }
    return merge(name, parts, o.seed);
}

// ---------------------------------------------------------------------------
// Subcommands

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + path.string() + "'");
    f << text;
}

inline std::filesystem::path ensure_dir(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create '" + dir + "': " + ec.message());
    return dir;
}

inline double trace_dt(const Options& o, const IntegralCurve& c) {
    if (o.dt) return *o.dt;
    return c.width() > 0.0 ? std::max(c.width() / 1000.0, 1e-6) : 1.0;
}

inline void write_traces(const Options& o, const FlowResult& result, const std::vector<std::size_t>& index_of) {
    const auto dir = ensure_dir(o.out_dir);
    for (std::size_t k = 0; k < result.size(); ++k) {
        const auto& rec = result[k];
        if (!rec.curve) continue;
        const std::size_t idx = index_of[k];
        const std::string stem = "curve_" + std::to_string(idx);
        if (o.format == "json") {
            write_file(dir / (stem + ".json"), io::trace_json(idx, *rec.curve, trace_dt(o, *rec.curve)).dump(2) + "\n");
        } else {
            std::ostringstream csv;
            io::write_trace_csv_header(csv, rec.curve->seed().size());
            io::write_trace_csv(csv, idx, *rec.curve, trace_dt(o, *rec.curve));
            write_file(dir / (stem + ".csv"), csv.str());
            write_file(dir / (stem + ".json"), io::sidecar_json(idx, *rec.curve).dump(2) + "\n");
        }
    }
}

/// curve and flow: one maximal curve per seed.
inline int cmd_integrate(const Options& o, std::ostream& out, std::ostream& err) {
    const Config c = load(o, true);
    const auto seeds = load_seeds(o, c);
    std::vector<std::vector<double>> members;
    std::vector<std::size_t> index_of;
    for (std::size_t k = 0; k < seeds.size(); ++k)
        if (!seeds[k].skipped) {
            members.push_back(seeds[k].point);
            index_of.push_back(k);
        }
    const auto tangency = c.derivation->tangency();
    if (tangency.status != Status::pass)
        err << "warning: derivation is not tangent to the equality set (residual " << tangency.max_residual << ")\n";

    const FlowResult result = flow(*c.derivation, members, c.tol, o.threads);

    json records = json::array();
    std::size_t k = 0;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (seeds[i].skipped) {
            records.push_back({{"seed_index", i}, {"seed", io::point_json(seeds[i].point)}, {"status", "skipped_non_member"}});
            continue;
        }
        records.push_back(io::seed_record_json(i, result[k++]));
    }
    const json report{{"space", c.label}, {"seeds", seeds.size()}, {"failures", result.failures()}, {"intervals", records}};
    const std::string text = report.dump(2) + "\n";
    out << text;
    if (!o.out_dir.empty()) {
        const auto dir = ensure_dir(o.out_dir);
        if (o.command == "flow") write_file(dir / "intervals.json", text);
        if (o.command == "curve" || o.traces) write_traces(o, result, index_of);
    }
    for (const auto& rec : result.records())
        if (!rec.ok()) err << "seed failed: " << rec.error << "\n";
    return result.failures() == 0 ? 0 : 2;
}

inline int cmd_check(const Options& o, std::ostream& out, std::ostream&) {
    std::vector<std::string> names = o.check_args;
    if (!o.checks_list.empty()) {
        std::stringstream ss(o.checks_list);
        for (std::string item; std::getline(ss, item, ',');)
            if (!item.empty()) names.push_back(item);
    }
    for (const auto& n : names)
        if (n != "all" && std::find(check_names().begin(), check_names().end(), n) == check_names().end())
            throw ConfigError("unknown check '" + n + "'");
    if (o.all_checks || std::find(names.begin(), names.end(), "all") != names.end()) names = check_names();
    if (names.empty()) throw ConfigError("no checks selected");

    const Config c = load(o, true);
    const Corpus corpus = load_corpus(c.doc, c.space->ambient_dim());
    json reports = json::array();
    Status overall = Status::pass;
    std::set<std::string> done;
    for (const auto& name : names) {
        if (!done.insert(name).second) continue;
        const CheckReport r = run_check(name, o, c, corpus);
        if (static_cast<int>(r.status) > static_cast<int>(overall)) overall = r.status;
        reports.push_back(io::report_json(r));
    }
    const json report{{"space", c.label}, {"status", to_string(overall)}, {"checks", reports}};
    const std::string text = report.dump(2) + "\n";
    out << text;
    if (!o.out_dir.empty()) write_file(ensure_dir(o.out_dir) / "report.json", text);
    return overall == Status::fail ? 2 : 0;
}

inline int cmd_sample(const Options& o, std::ostream& out, std::ostream&) {
    const Config c = load(o, false);
    const std::size_t count = o.sample_count.value_or(100);
    std::vector<std::vector<double>> pts;
    try {
        pts = sample(*c.space, count, o.seed);
    } catch (const InvalidArgument& e) {
        throw ConfigError(e.what());
    }
    std::ostringstream text;
    if (o.format == "json") {
        json list = json::array();
        for (const auto& p : pts) list.push_back(io::point_json(p));
        text << json{{"space", c.label}, {"seed", o.seed}, {"points", list}}.dump(2) << "\n";
    } else {
        for (std::size_t i = 0; i < c.space->ambient_dim(); ++i) text << (i ? "," : "") << "x" << i;
        text << "\n";
        for (const auto& p : pts) {
            for (std::size_t i = 0; i < p.size(); ++i) text << (i ? "," : "") << io::format_double(p[i]);
            text << "\n";
        }
    }
    out << text.str();
    if (!o.out_dir.empty())
        write_file(ensure_dir(o.out_dir) / (o.format == "json" ? "samples.json" : "samples.csv"), text.str());
    return 0;
}

inline void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--space", o.space_file, "space spec file (JSON)");
    sub->add_option("--gallery", o.gallery, "gallery case name");
    sub->add_option("--seed", o.seed, "random seed for sampling");
    sub->add_option("--out", o.out_dir, "output directory");
    sub->add_option("--format", o.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--horizon", o.horizon, "time horizon T");
}

inline void add_derivation(CLI::App* sub, Options& o) {
    sub->add_option("--derivation", o.derivation_file, "derivation spec file");
    sub->add_option("--components", o.components, "comma-separated component expressions");
    sub->add_flag("--project-equalities", o.project_equalities, "Newton-project states onto the equality set");
    sub->add_option("--threads", o.threads, "worker threads (0 = hardware)");
}

inline void add_seeds(CLI::App* sub, Options& o) {
    sub->add_option("--seeds", o.seeds_file, "JSON list of seed points");
    sub->add_option("--grid", o.grid, "seed grid, NxM over the sample box or lo:hi:n,...");
    sub->add_option("--sample", o.sample_count, "number of sampled seeds");
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Flows of derivations on embedded differential spaces", "subflow"};
    app.require_subcommand(1);

    auto* curve = app.add_subcommand("curve", "maximal integral curves with traces");
    auto* flow_cmd = app.add_subcommand("flow", "flow domain over a seed set");
    auto* check = app.add_subcommand("check", "numerical identity checks");
    auto* samp = app.add_subcommand("sample", "sample points of the space");
    for (auto* sub : {curve, flow_cmd, check, samp}) add_common(sub, o);
    for (auto* sub : {curve, flow_cmd, check}) add_derivation(sub, o);
    for (auto* sub : {curve, flow_cmd, check}) add_seeds(sub, o);
    for (auto* sub : {curve, flow_cmd}) sub->add_option("--dt", o.dt, "trace spacing");
    flow_cmd->add_flag("--traces", o.traces, "also write per-seed traces to --out");
    samp->add_option("--count,--sample", o.sample_count, "number of points");
    check->add_option("names", o.check_args, "checks to run (or 'all')");
    check->add_option("--checks", o.checks_list, "comma-separated checks");
    check->add_flag("--all,--all-checks", o.all_checks, "run every check");
    check->add_flag("--strict-tangency", o.strict_tangency, "tangency residual fails instead of warning");
    check->add_option("--samples", o.samples, "sample points per check");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (curve->parsed()) {
            o.command = "curve";
            return cmd_integrate(o, out, err);
        }
        if (flow_cmd->parsed()) {
            o.command = "flow";
            return cmd_integrate(o, out, err);
        }
        if (check->parsed()) return cmd_check(o, out, err);
        return cmd_sample(o, out, err);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const SamplingExhausted& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, out, err);
}

} // namespace subflow::cli
