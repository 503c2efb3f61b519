#pragma once

// Derivations of the induced structure on an embedded space M ⊂ R^n.
//
// A derivation v is stored as its component tuple (b_1, ..., b_n) with
// b_i|_M = v(x_i|_M). It acts on any structure function through the chain rule
//
//   v(h|_M) = sum_i (∂_i h)|_M * b_i|_M,
//
// and the checks below test the algebraic identities a derivation has to
// satisfy, each at seeded sample points of M.

#include "subflow/dspace.hpp"
#include "subflow/errors.hpp"
#include "subflow/expr.hpp"
#include "subflow/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace subflow {

enum class Status { pass, warn, fail };

inline const char* to_string(Status s) {
    switch (s) {
    case Status::pass: return "PASS";
    case Status::warn: return "WARN";
    case Status::fail: return "FAIL";
    }
    return "FAIL";
}

/// Result of a numerical identity check.
struct CheckReport {
    std::string check;
    Status status = Status::pass;
    double max_residual = 0.0;
    double tolerance = 0.0;
    std::vector<double> worst_point;
    std::size_t samples = 0;
    std::uint64_t seed = 0;
    std::string detail;
    /// Secondary measurements, e.g. the endpoint identity of a Hadamard check.
    std::map<std::string, double> metrics;

    bool passed() const noexcept { return status != Status::fail; }
};

struct CheckOptions {
    std::size_t samples = 100;
    std::uint64_t seed = 0;
    double tol = 1e-12;
};

namespace detail {

/// |lhs - rhs| scaled by max(1, |lhs|, |rhs|).
inline double scaled_residual(double lhs, double rhs) {
    return std::fabs(lhs - rhs) / std::max({1.0, std::fabs(lhs), std::fabs(rhs)});
}

inline void record(CheckReport& r, double residual, std::span<const double> p) {
    if (!(residual <= r.max_residual)) {
        r.max_residual = residual;
        r.worst_point.assign(p.begin(), p.end());
    }
}

inline void finish(CheckReport& r) { r.status = r.max_residual <= r.tolerance ? Status::pass : Status::fail; }

} // namespace detail

class Derivation;
CheckReport tangency_check(const Derivation& v, const CheckOptions& opts, bool strict = false);

class Derivation {
public:
    Derivation(SpacePtr space, std::vector<Expr> components)
        : space_(std::move(space)), components_(std::move(components)), cache_(std::make_shared<Cache>()) {
        if (!space_) throw InvalidArgument("derivation needs a space");
        if (components_.size() != space_->ambient_dim())
            throw InvalidArgument("derivation has " + std::to_string(components_.size()) +
                                  " components, space dimension is " + std::to_string(space_->ambient_dim()));
        for (const auto& b : components_)
            if (b.arity() > space_->ambient_dim())
                throw InvalidArgument("component '" + to_string(b) + "' uses coordinates beyond the space dimension");
    }

    const SpacePtr& space() const noexcept { return space_; }
    const std::vector<Expr>& components() const noexcept { return components_; }
    std::size_t dimension() const noexcept { return components_.size(); }

    /// Tangency status, computed on first use with `certificate_options()` and
    /// cached together with its sampling certificate.
    const CheckReport& tangency() const {
        std::call_once(cache_->once, [this] { cache_->report = tangency_check(*this, certificate_options()); });
        return *cache_->report;
    }

    static CheckOptions certificate_options() { return {.samples = 200, .seed = 0, .tol = 1e-9}; }

private:
    struct Cache {
        std::once_flag once;
        std::optional<CheckReport> report;
    };

    SpacePtr space_;
    std::vector<Expr> components_;
    std::shared_ptr<Cache> cache_;
};

/// Ambient expression sum_i ∂_i f * b_i.
inline Expr apply(const Derivation& v, const Expr& f) {
    Expr out(0.0);
    for (std::size_t i = 0; i < v.dimension(); ++i) out = out + diff(f, i) * v.components()[i];
    return out;
}

inline RestrictedFunction apply(const Derivation& v, const RestrictedFunction& f) {
    if (!same_space(v.space(), f.space())) throw SpaceMismatch();
    return {v.space(), apply(v, f.ambient())};
}

/// Product rule v(fg) = v(f) g + f v(g) at sampled points.
inline CheckReport leibniz_check(const Derivation& v, const RestrictedFunction& f, const RestrictedFunction& g,
                                 const CheckOptions& opts = {}) {
    const auto vfg = apply(v, f * g);
    const auto vf = apply(v, f);
    const auto vg = apply(v, g);
    CheckReport r{.check = "leibniz", .tolerance = opts.tol, .seed = opts.seed};
    for (const auto& p : sample(*v.space(), opts.samples, opts.seed)) {
        detail::record(r, detail::scaled_residual(vfg(p), vf(p) * g(p) + f(p) * vg(p)), p);
        ++r.samples;
    }
    detail::finish(r);
    return r;
}

/// Chain rule v(h(f_1..f_k)) = sum_j (∂_j h)(f_1..f_k) v(f_j) at sampled points.
inline CheckReport chain_rule_check(const Derivation& v, const Expr& outer, const std::vector<RestrictedFunction>& inner,
                                    const CheckOptions& opts = {}) {
    if (outer.arity() > inner.size())
        throw InvalidArgument("outer function uses " + std::to_string(outer.arity()) + " variables, " +
                              std::to_string(inner.size()) + " inner functions given");
    std::vector<Expr> ambient;
    std::vector<Expr> applied;
    for (const auto& f : inner) {
        if (!same_space(v.space(), f.space())) throw SpaceMismatch();
        ambient.push_back(f.ambient());
        applied.push_back(apply(v, f.ambient()));
    }
    const Expr lhs = apply(v, compose(outer, ambient));
    std::vector<Expr> outer_partials;
    for (std::size_t j = 0; j < inner.size(); ++j) outer_partials.push_back(compose(diff(outer, j), ambient));

    CheckReport r{.check = "chain_rule", .tolerance = opts.tol, .seed = opts.seed};
    for (const auto& p : sample(*v.space(), opts.samples, opts.seed)) {
        double rhs = 0.0;
        for (std::size_t j = 0; j < inner.size(); ++j) rhs += eval(outer_partials[j], p) * eval(applied[j], p);
        detail::record(r, detail::scaled_residual(eval(lhs, p), rhs), p);
        ++r.samples;
    }
    detail::finish(r);
    return r;
}

/// Inverse rule v(1/a) = -(1/a)^2 v(a). Every sampled point must satisfy |a| > floor.
inline CheckReport inverse_rule_check(const Derivation& v, const RestrictedFunction& a, const CheckOptions& opts = {},
                                      double floor = 1e-8) {
    if (!same_space(v.space(), a.space())) throw SpaceMismatch();
    const Expr inv_applied = apply(v, Expr(1.0) / a.ambient());
    const Expr a_applied = apply(v, a.ambient());
    CheckReport r{.check = "inverse_rule", .tolerance = opts.tol, .seed = opts.seed};
    for (const auto& p : sample(*v.space(), opts.samples, opts.seed)) {
        const double av = a(p);
        if (!(std::fabs(av) > floor))
            throw PreconditionError("'" + to_string(a.ambient()) + "' vanishes at a sampled point",
                                    std::vector<double>(p.begin(), p.end()));
        const double inv = 1.0 / av;
        detail::record(r, detail::scaled_residual(eval(inv_applied, p), -inv * inv * eval(a_applied, p)), p);
        ++r.samples;
    }
    detail::finish(r);
    return r;
}

// ---------------------------------------------------------------------------
// Hadamard decomposition

/// f(y) - f(b) = sum_j (y_j - b_j) ĝ_j(y) with ĝ_j(y) = ∫_0^1 ∂_j f(t y + (1 - t) b) dt,
/// the integral evaluated by a fixed-order Gauss-Legendre rule.
class HadamardDecomposition {
public:
    HadamardDecomposition(Expr f, std::vector<double> base, std::size_t order = 32)
        : f_(std::move(f)), base_(std::move(base)), rule_(order) {
        if (f_.arity() > base_.size())
            throw DimensionError("function uses " + std::to_string(f_.arity()) + " variables, base point has " +
                                 std::to_string(base_.size()));
        partials_ = gradient(f_, base_.size());
    }

    const Expr& function() const noexcept { return f_; }
    const std::vector<double>& base() const noexcept { return base_; }
    std::size_t quadrature_order() const noexcept { return rule_.order(); }

    /// (ĝ_1(y), ..., ĝ_k(y)).
    std::vector<double> components(std::span<const double> y) const {
        check_dimension(y);
        eval(f_, y);
        std::vector<double> g(base_.size(), 0.0);
        std::vector<double> x(base_.size());
        for (std::size_t q = 0; q < rule_.order(); ++q) {
            const double t = rule_.nodes[q];
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = t * y[i] + (1.0 - t) * base_[i];
            eval(f_, x); // the segment must lie in the domain of f, not only of its partials
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += rule_.weights[q] * eval(partials_[j], x);
        }
        return g;
    }

    double component(std::size_t j, std::span<const double> y) const { return components(y).at(j); }

    /// f(y) - f(b) - sum_j (y_j - b_j) ĝ_j(y).
    double reconstruction_error(std::span<const double> y) const {
        const auto g = components(y);
        double sum = 0.0;
        for (std::size_t j = 0; j < g.size(); ++j) sum += (y[j] - base_[j]) * g[j];
        return eval(f_, y) - eval(f_, base_) - sum;
    }

private:
    void check_dimension(std::span<const double> y) const {
        if (y.size() != base_.size()) throw DimensionError("query point has the wrong dimension");
    }

    Expr f_;
    std::vector<double> base_;
    GaussLegendre rule_;
    std::vector<Expr> partials_;
};

inline HadamardDecomposition hadamard_decompose(const Expr& f, std::vector<double> base, std::size_t order = 32) {
    return HadamardDecomposition(f, std::move(base), order);
}

/// Reconstruction |f(y) - f(b) - Σ (y_j - b_j) ĝ_j(y)| / (1 + |f(y)|) over the
/// query points, and the endpoint identity ĝ_j(b) = ∂_j f(b) (metric
/// "endpoint_max", absolute, must not exceed `endpoint_tol`).
inline CheckReport hadamard_check(const Expr& f, const std::vector<double>& base,
                                  const std::vector<std::vector<double>>& queries, std::size_t order = 32,
                                  double tol = 1e-8, double endpoint_tol = 1e-10) {
    const auto h = hadamard_decompose(f, base, order);
    CheckReport r{.check = "hadamard", .tolerance = tol};
    for (const auto& y : queries) {
        detail::record(r, std::fabs(h.reconstruction_error(y)) / (1.0 + std::fabs(eval(f, y))), y);
        ++r.samples;
    }
    double endpoint = 0.0;
    const auto at_base = h.components(base);
    for (std::size_t j = 0; j < base.size(); ++j)
        endpoint = std::max(endpoint, std::fabs(at_base[j] - eval(diff(f, j), base)));
    r.metrics["endpoint_max"] = endpoint;
    r.metrics["endpoint_tol"] = endpoint_tol;
    r.status = (r.max_residual <= tol && endpoint <= endpoint_tol) ? Status::pass : Status::fail;
    return r;
}

// ---------------------------------------------------------------------------
// Tangency and the point-determined identity

/// For each equality constraint g_k: max |Σ_i b_i ∂_i g_k| over sampled points.
/// Inequalities impose nothing. Residual above tol is WARN, or FAIL in strict mode.
inline CheckReport tangency_check(const Derivation& v, const CheckOptions& opts, bool strict) {
    CheckReport r{.check = "tangency", .tolerance = opts.tol, .seed = opts.seed};
    const auto& eqs = v.space()->equalities();
    if (eqs.empty()) {
        r.detail = "no equality constraints";
        return r;
    }
    std::vector<Expr> normal_parts;
    for (const auto& g : eqs) normal_parts.push_back(apply(v, g));
    for (const auto& p : sample(*v.space(), opts.samples, opts.seed)) {
        for (std::size_t k = 0; k < normal_parts.size(); ++k) {
            const double res = std::fabs(eval(normal_parts[k], p));
            r.metrics["constraint_" + std::to_string(k)] = std::max(r.metrics["constraint_" + std::to_string(k)], res);
            detail::record(r, res, p);
        }
        ++r.samples;
    }
    if (r.max_residual > opts.tol) r.status = strict ? Status::fail : Status::warn;
    return r;
}

/// At each evaluation point p, compares v(h(f_1..f_k))(p) against the right
/// side assembled from the Hadamard decomposition of h about b = (f_j(p)):
/// Σ_j v(f_j)(p) ĝ_j(b). The right side never differentiates h.
inline CheckReport point_determined_check(const Derivation& v, const Expr& outer,
                                          const std::vector<RestrictedFunction>& inner,
                                          const std::vector<std::vector<double>>& eval_points, double tol = 1e-8,
                                          std::size_t order = 32) {
    if (outer.arity() > inner.size())
        throw InvalidArgument("outer function uses more variables than inner functions given");
    std::vector<Expr> ambient;
    std::vector<Expr> applied;
    for (const auto& f : inner) {
        if (!same_space(v.space(), f.space())) throw SpaceMismatch();
        ambient.push_back(f.ambient());
        applied.push_back(apply(v, f.ambient()));
    }
    const Expr lhs = apply(v, compose(outer, ambient));
    CheckReport r{.check = "point_determined", .tolerance = tol};
    for (const auto& p : eval_points) {
        if (!v.space()->contains(p)) throw NotAMember(p);
        std::vector<double> b(inner.size());
        for (std::size_t j = 0; j < b.size(); ++j) b[j] = eval(ambient[j], p);
        const auto h = hadamard_decompose(outer, b, order);
        const auto g_hat = h.components(b);
        double rhs = 0.0;
        for (std::size_t j = 0; j < b.size(); ++j) rhs += eval(applied[j], p) * g_hat[j];
        detail::record(r, detail::scaled_residual(eval(lhs, p), rhs), p);
        ++r.samples;
    }
    detail::finish(r);
    return r;
}

} // namespace subflow
