// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

using namespace subflow;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Derivation make(const SpacePtr& s, const std::vector<std::string>& comps) {
    std::vector<Expr> c;
    for (const auto& src : comps) c.push_back(parse(src));
    return Derivation(s, c);
}

SpacePtr disk() { return share(EmbeddedSpace(2, {}, {parse("x0^2 + x1^2 - 1")}, {{-1, 1}, {-1, 1}})); }

// ---------------------------------------------------------------------------
// Identity corpus: four spaces, ten compositions each.

struct Case {
    std::string name;
    Derivation v;
    std::vector<Expr> functions;
    std::vector<std::pair<Expr, std::vector<Expr>>> compositions;
};

std::vector<Case> identity_corpus() {
    auto build = [](std::string name, SpacePtr M, std::vector<std::string> comps) {
        const std::size_t n = M->ambient_dim();
        const std::string a = "x0", b = "x1", c = "x" + std::to_string(n - 1);
        const std::vector<std::string> fs{
            a + "*" + b + " + " + c,
            "sin(" + a + ") + cos(" + b + ")",
            "exp(0.5*" + c + ") - " + a + "^2",
            a + "^3 - 2*" + b + "*" + c,
            "atan(" + a + " + " + c + ")",
            "tanh(" + b + ")*" + a,
            "sqrt(2 + " + a + "^2 + " + b + "^2)",
            "(" + a + " - " + c + ")/(2 + " + b + "^2)",
            "log(3 + " + a + "*" + c + ")",
            b + "^2*" + c + " - " + a,
        };
        const std::vector<std::string> outers{
            "x0*x1",          "sin(x0 + x1)",       "exp(x0)*x1^2",          "x0/(1 + x1^2)",
            "atan(x0) - x1^3", "sqrt(1 + x0^2 + x1^2)", "tanh(x0*x1)",           "log(2 + sin(x0))*x1",
            "x0^2*x1^2*x2",   "cos(x0)*exp(x1) - x2",
        };
        Case k{std::move(name), make(M, comps), {}, {}};
        for (const auto& s : fs) k.functions.push_back(parse(s));
        for (std::size_t i = 0; i < outers.size(); ++i) {
            const Expr outer = parse(outers[i]);
            std::vector<Expr> inner;
            for (std::size_t j = 0; j < std::max<std::size_t>(outer.arity(), 2); ++j)
                inner.push_back(k.functions[(i + 3 * j) % k.functions.size()]);
            k.compositions.emplace_back(outer, inner);
        }
        return k;
    };
    std::vector<Case> out;
    out.push_back(build("disk", disk(), {"1 - x1", "x0 + x1^2"}));
    out.push_back(build("circle",
                        share(EmbeddedSpace(2, {parse("x0^2 + x1^2 - 1")}, {}, {{-1.5, 1.5}, {-1.5, 1.5}})),
                        {"-x1", "x0"}));
    out.push_back(build("halfcone",
                        share(EmbeddedSpace(3, {parse("x0^2 + x1^2 - x2^2")}, {parse("-x2")},
                                            {{-1, 1}, {-1, 1}, {0, 1}})),
                        {"x0", "x1", "x2"}));
    out.push_back(build("cylinder",
                        share(EmbeddedSpace(3, {}, {parse("x0^2 + x1^2 - 1"), parse("-x2"), parse("x2 - 1")},
                                            {{-1, 1}, {-1, 1}, {0, 1}})),
                        {"-x1", "x0", "1"}));
    return out;
}

std::vector<RestrictedFunction> restrict_all(const SpacePtr& M, const std::vector<Expr>& fs) {
    std::vector<RestrictedFunction> out;
    for (const auto& f : fs) out.emplace_back(M, f);
    return out;
}

// ---------------------------------------------------------------------------
// Gallery

struct GalleryCase {
    std::string name;
    cli::Config config;
    std::vector<std::vector<double>> seeds;
};

std::vector<GalleryCase> gallery() {
    std::vector<GalleryCase> out;
    for (const auto& name : cli::gallery_cases()) {
        cli::Options o;
        o.gallery = name;
        auto c = cli::load(o, true);
        auto seeds = io::seeds_from_json(c.doc["seeds"], c.space->ambient_dim());
        out.push_back({name, std::move(c), std::move(seeds)});
    }
    return out;
}

std::vector<Expr> curve_corpus(std::size_t n) {
    const std::string a = "x0", c = "x" + std::to_string(n - 1);
    std::vector<Expr> fs;
    for (const auto& s : {a, c, a + "^2 + " + c + "^2", a + "*" + c, "sin(" + a + ")", "cos(" + c + ") + " + a,
                          "exp(0.3*" + a + ")", "atan(" + a + " - " + c + ")", "sqrt(2 + " + a + "^2)",
                          a + "^3 - " + c})
        fs.push_back(parse(s));
    return fs;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome disk_flow() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const auto v = make(disk(), {"1", "0"});
    std::vector<std::vector<double>> seeds;
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            const std::vector<double> p{-1 + 0.1 * i, -1 + 0.1 * j};
            if (v.space()->contains(p)) seeds.push_back(p);
        }
    const auto result = flow(v, seeds);
    double end_err = 0, traj_err = 0;
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        if (!result[k].ok()) {
            o.pass = false;
            continue;
        }
        const auto& c = *result[k].curve;
        const double x = seeds[k][0], y = seeds[k][1];
        const double w = std::sqrt(std::max(0.0, 1 - y * y));
        end_err = std::max({end_err, std::fabs(c.t_max() - (w - x)), std::fabs(c.t_min() - (-w - x))});
        for (int m = 0; m <= 50; ++m) {
            const double t = c.t_min() + (c.t_max() - c.t_min()) * m / 50.0;
            const auto g = c(std::min(t, c.t_max()));
            traj_err = std::max({traj_err, std::fabs(g[0] - (x + t)), std::fabs(g[1] - y)});
        }
    }
    const double secs = seconds_since(t0);
    o.pass = o.pass && end_err <= 1e-7 && traj_err <= 1e-8 && secs <= 5.0;
    o.detail = std::to_string(seeds.size()) + " seeds, " +
               fmt("endpoint err %.2e (<= 1e-7), trajectory err %.2e (<= 1e-8), %.2f s (<= 5)", end_err, traj_err, secs);
    return o;
}

Outcome zero_time() {
    const Tolerances tol;
    const auto c = maximal_curve(make(disk(), {"1", "0"}), {0.0, 1.0}, tol);
    Outcome o;
    o.pass = c.width() <= 2 * tol.event_tol && c.forward_end() == EndReason::left_membership &&
             c.backward_end() == EndReason::left_membership;
    o.detail = fmt("width %.2e (<= %.0e), ends ", c.width(), 2 * tol.event_tol) + to_string(c.backward_end()) + "/" +
               to_string(c.forward_end());
    return o;
}

Outcome interval_example() {
    const auto M = share(EmbeddedSpace(1, {}, {parse("-x0"), parse("x0 - 1")}, {{0, 1}}));
    const auto c = maximal_curve(make(M, {"1"}), {0.5});
    double traj = 0;
    for (int k = 0; k <= 1000; ++k) {
        const double t = std::min(c.t_min() + (c.t_max() - c.t_min()) * k / 1000.0, c.t_max());
        traj = std::max(traj, std::fabs(c(t)[0] - (t + 0.5)));
    }
    const double end = std::max(std::fabs(c.t_min() + 0.5), std::fabs(c.t_max() - 0.5));
    return {end <= 1e-8 && traj <= 1e-10, fmt("endpoint err %.2e (<= 1e-8), trajectory err %.2e (<= 1e-10)", end, traj)};
}

Outcome chain_rule(const std::vector<Case>& corpus) {
    double worst = 0;
    std::size_t combos = 0, points = 0;
    for (const auto& k : corpus)
        for (const auto& [outer, inner] : k.compositions) {
            const auto r = chain_rule_check(k.v, outer, restrict_all(k.v.space(), inner),
                                            {.samples = 100, .seed = 11, .tol = 1e-10});
            worst = std::max(worst, r.max_residual);
            ++combos;
            points += r.samples;
        }
    return {worst <= 1e-10 && combos >= 10 && corpus.size() >= 3,
            std::to_string(combos) + " combos on " + std::to_string(corpus.size()) + " spaces, " +
                std::to_string(points) + " points, " + fmt("max residual %.2e (<= 1e-10)", worst)};
}

Outcome leibniz_inverse(const std::vector<Case>& corpus) {
    double leib = 0, inv = 0;
    std::size_t cases = 0;
    for (const auto& k : corpus) {
        const auto& M = k.v.space();
        for (std::size_t i = 0; i < k.functions.size(); ++i) {
            const RestrictedFunction f(M, k.functions[i]);
            const RestrictedFunction g(M, k.functions[(i + 1) % k.functions.size()]);
            leib = std::max(leib, leibniz_check(k.v, f, g, {.samples = 100, .seed = 12}).max_residual);
            const RestrictedFunction a(M, Expr(1.5) + sin(k.functions[i]));
            const RestrictedFunction b(M, exp(k.functions[i] / Expr(2.0)));
            inv = std::max(inv, inverse_rule_check(k.v, a, {.samples = 100, .seed = 13}).max_residual);
            inv = std::max(inv, inverse_rule_check(k.v, b, {.samples = 100, .seed = 14}).max_residual);
            ++cases;
        }
    }
    return {leib <= 1e-12 && inv <= 1e-12,
            std::to_string(cases) + " function cases, " + fmt("leibniz %.2e, inverse %.2e (<= 1e-12)", leib, inv)};
}

Outcome hadamard(const std::vector<Case>& corpus) {
    const auto t0 = std::chrono::steady_clock::now();
    double recon = 0, endpoint = 0;
    std::size_t functions = 0, pairs = 0;
    for (const auto& k : corpus) {
        const auto pts = sample(*k.v.space(), 200, 21);
        for (const auto& f : k.functions) {
            ++functions;
            for (std::size_t m = 0; m + 1 < pts.size(); m += 2) {
                const auto r = hadamard_check(f, pts[m], {pts[m + 1]}, 32);
                recon = std::max(recon, r.max_residual);
                endpoint = std::max(endpoint, r.metrics.at("endpoint_max"));
                ++pairs;
            }
        }
    }
    const double secs = seconds_since(t0);
    return {functions >= 20 && pairs >= 100 * 20 && recon <= 1e-8 && endpoint <= 1e-10 && secs <= 10.0,
            std::to_string(functions) + " functions, " + std::to_string(pairs) + " pairs, " +
                fmt("reconstruction %.2e (<= 1e-8), endpoint %.2e (<= 1e-10), %.2f s (<= 10)", recon, endpoint, secs)};
}

Outcome point_determined(const std::vector<Case>& corpus) {
    double worst = 0;
    std::size_t cases = 0;
    for (const auto& k : corpus) {
        const auto pts = sample(*k.v.space(), 50, 31);
        for (const auto& [outer, inner] : k.compositions) {
            const auto r = point_determined_check(k.v, outer, restrict_all(k.v.space(), inner), pts, 1e-8);
            worst = std::max(worst, r.max_residual);
            ++cases;
            if (r.samples != 50) return {false, "expected 50 evaluation points"};
        }
    }
    return {worst <= 1e-8, std::to_string(cases) + " cases x 50 points, " + fmt("max residual %.2e (<= 1e-8)", worst)};
}

Outcome translation(const std::vector<GalleryCase>& cases) {
    double traj = 0, shift = 0;
    std::size_t runs = 0;
    bool ok = true;
    for (const auto& g : cases)
        for (const auto& p : g.seeds) {
            const auto& v = *g.config.derivation;
            const auto c = maximal_curve(v, p, g.config.tol);
            for (double frac : {0.5, -0.5, 0.25}) {
                const double s = frac > 0 ? frac * c.t_max() : -frac * c.t_min();
                const auto r = translation_check(v, p, s, g.config.tol, {.tol = 1e-6, .interval_tol = 1e-7});
                traj = std::max(traj, r.max_residual);
                shift = std::max(shift, r.metrics.at("interval_shift_error"));
                ok = ok && r.status == Status::pass;
                ++runs;
            }
        }
    return {ok && traj <= 1e-6 && shift <= 1e-7,
            std::to_string(runs) + " shifts on " + std::to_string(cases.size()) + " cases, " +
                fmt("trajectory %.2e (<= 1e-6), interval shift %.2e (<= 1e-7)", traj, shift)};
}

Outcome defining_ode(const std::vector<GalleryCase>& cases) {
    double worst = 0;
    std::size_t curves = 0;
    for (const auto& g : cases) {
        const auto& v = *g.config.derivation;
        const auto fs = curve_corpus(v.dimension());
        for (const auto& p : g.seeds) {
            const auto c = maximal_curve(v, p, g.config.tol);
            ++curves;
            for (const auto& f : fs)
                worst = std::max(worst, curve_residual_check(c, v, {v.space(), f}, 100, 1e-4).max_residual);
        }
    }
    return {worst <= 1e-4, std::to_string(curves) + " curves x 10 functions, " + fmt("max residual %.2e (<= 1e-4)", worst)};
}

Outcome refinement(const std::vector<GalleryCase>& cases) {
    double ends = 0, traj = 0;
    for (const auto& g : cases) {
        const auto& v = *g.config.derivation;
        Tolerances fine = g.config.tol;
        fine.rel_tol /= 2;
        fine.abs_tol /= 2;
        for (const auto& p : g.seeds) {
            const auto a = maximal_curve(v, p, g.config.tol);
            const auto b = maximal_curve(v, p, fine);
            ends = std::max({ends, std::fabs(a.t_min() - b.t_min()), std::fabs(a.t_max() - b.t_max())});
            const double lo = std::max(a.t_min(), b.t_min()), hi = std::min(a.t_max(), b.t_max());
            for (int k = 0; k <= 200 && hi >= lo; ++k) {
                const double t = std::min(hi, lo + (hi - lo) * k / 200.0);
                const auto ya = a(t), yb = b(t);
                for (std::size_t i = 0; i < ya.size(); ++i) traj = std::max(traj, std::fabs(ya[i] - yb[i]));
            }
        }
    }
    return {ends <= 1e-8 && traj <= 1e-7, fmt("endpoint shift %.2e (<= 1e-8), trajectory shift %.2e (<= 1e-7)", ends, traj)};
}

Outcome nested_and_product() {
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-1.5, 1.5);
    // Nested: the annular sector {1/4 <= |x|^2 <= 1, x1 >= 0} as a subspace of the disk,
    // against the same set written out directly and against two-stage membership.
    const auto D = disk();
    const auto nested = subspace(*D, {}, {parse("0.25 - x0^2 - x1^2"), parse("-x1")});
    const EmbeddedSpace direct(2, {}, {parse("x0^2 + x1^2 - 1"), parse("0.25 - x0^2 - x1^2"), parse("-x1")},
                               {{-1, 1}, {-1, 1}});
    const EmbeddedSpace extra(2, {}, {parse("0.25 - x0^2 - x1^2"), parse("-x1")}, {{-1, 1}, {-1, 1}});
    // Nested with an equality: the upper unit semicircle inside the upper half plane.
    const EmbeddedSpace half(2, {}, {parse("-x1")}, {{-1.5, 1.5}, {-1.5, 1.5}});
    const auto arc = subspace(half, {parse("x0^2 + x1^2 - 1")}, {});
    std::size_t nested_bad = 0, nested_members = 0;
    for (int k = 0; k < 10000; ++k) {
        std::vector<double> p{u(rng), u(rng)};
        if (k % 4 == 0) {
            // Points on and near the circle so the equality case is not vacuous.
            const double th = std::atan2(p[1], p[0]);
            const double r = 1 + (k % 8 == 0 ? 0.0 : 1e-8 * (u(rng)));
            p = {r * std::cos(th), r * std::sin(th)};
        }
        const bool a = nested.contains(p), b = direct.contains(p), c = D->contains(p) && extra.contains(p);
        nested_bad += (a != b) + (a != c);
        nested_members += a;
        const bool on_arc = half.contains(p) && std::fabs(p[0] * p[0] + p[1] * p[1] - 1) <= half.tolerance().equality;
        nested_bad += arc.contains(p) != on_arc;
    }
    // Product of the unit interval and the circle, membership of the pair vs the factors.
    const EmbeddedSpace I(1, {}, {parse("-x0"), parse("x0 - 1")}, {{-0.5, 1.5}});
    const EmbeddedSpace C(2, {parse("x0^2 + x1^2 - 1")}, {}, {{-1.5, 1.5}, {-1.5, 1.5}});
    const auto P = product(I, C);
    const auto members = sample(P, 5000, 7);
    std::size_t product_bad = 0, product_members = 0;
    for (int k = 0; k < 10000; ++k) {
        std::vector<double> q = k < 5000 ? members[static_cast<std::size_t>(k)]
                                         : std::vector<double>{u(rng), u(rng), u(rng)};
        const bool a = P.contains(q);
        const bool b = I.contains(std::span<const double>(q.data(), 1)) && C.contains(std::span<const double>(q.data() + 1, 2));
        product_bad += a != b;
        product_members += a;
    }
    return {nested_bad == 0 && product_bad == 0,
            "nested disagreements " + std::to_string(nested_bad) + " (" + std::to_string(nested_members) +
                " members of 1e4), product disagreements " + std::to_string(product_bad) + " (" +
                std::to_string(product_members) + " members of 1e4)"};
}

} // namespace

int main() {
    const auto corpus = identity_corpus();
    const auto cases = gallery();
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"disk flow", disk_flow},
        {"zero-time curve", zero_time},
        {"interval example", interval_example},
        {"chain rule", [&] { return chain_rule(corpus); }},
        {"leibniz and inverse rule", [&] { return leibniz_inverse(corpus); }},
        {"hadamard decomposition", [&] { return hadamard(corpus); }},
        {"point-determined derivation", [&] { return point_determined(corpus); }},
        {"translation property", [&] { return translation(cases); }},
        {"defining ODE", [&] { return defining_ode(cases); }},
        {"refinement convergence", [&] { return refinement(cases); }},
        {"nested subspace and product", nested_and_product},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("[%s] %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        failed += !o.pass;
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
