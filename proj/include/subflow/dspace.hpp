#pragma once

// Subsets M of R^n cut out by finitely many constraints
//
//   g_k(x) = 0   (equalities)      h_j(x) <= 0   (inequalities)
//
// together with their induced differential structure: every structure function
// is represented by an ambient expression restricted to M.

#include "subflow/errors.hpp"
#include "subflow/expr.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace subflow {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double width() const noexcept { return hi - lo; }
    bool contains(double t) const noexcept { return lo <= t && t <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

using Box = std::vector<Interval>;

/// Membership tolerances. Equality sets have measure zero, so they get more
/// headroom for integrator drift.
struct MembershipTolerance {
    double equality = 1e-7;
    double inequality = 1e-9;

    friend bool operator==(const MembershipTolerance&, const MembershipTolerance&) = default;
};

/// Outcome of a membership test with the largest constraint violation.
struct MembershipResult {
    bool member = false;
    /// A constraint could not be evaluated at the point.
    bool domain_error = false;
    /// max over constraints of (|g_k| - tol_eq) and (h_j - tol_ineq); <= 0 for members.
    double violation = 0.0;
    std::string diagnostic;

    explicit operator bool() const noexcept { return member; }
};

class EmbeddedSpace {
public:
    EmbeddedSpace(std::size_t ambient_dim, std::vector<Expr> equalities, std::vector<Expr> inequalities, Box box,
                  MembershipTolerance tol = {})
        : n_(ambient_dim),
          equalities_(std::move(equalities)),
          inequalities_(std::move(inequalities)),
          box_(std::move(box)),
          tol_(tol) {
        if (n_ == 0) throw InvalidArgument("ambient dimension must be at least 1");
        for (const auto* list : {&equalities_, &inequalities_})
            for (const auto& e : *list)
                if (e.arity() > n_)
                    throw InvalidArgument("constraint '" + to_string(e) + "' uses coordinates beyond dimension " +
                                          std::to_string(n_));
        if (box_.size() != n_) throw InvalidArgument("sample box must have one interval per coordinate");
        for (const auto& iv : box_)
            if (!(iv.lo < iv.hi) || !std::isfinite(iv.lo) || !std::isfinite(iv.hi))
                throw InvalidArgument("sample box must have positive volume");
        if (!(tol_.equality > 0.0) || !(tol_.inequality > 0.0))
            throw InvalidArgument("membership tolerances must be positive");
        jacobian_.reserve(equalities_.size());
        for (const auto& g : equalities_) jacobian_.push_back(gradient(g, n_));
    }

    /// All of R^n, sampled in `box`.
    static EmbeddedSpace euclidean(std::size_t n, Box box) { return EmbeddedSpace(n, {}, {}, std::move(box)); }

    std::size_t ambient_dim() const noexcept { return n_; }
    const std::vector<Expr>& equalities() const noexcept { return equalities_; }
    const std::vector<Expr>& inequalities() const noexcept { return inequalities_; }
    const Box& sample_box() const noexcept { return box_; }
    const MembershipTolerance& tolerance() const noexcept { return tol_; }
    /// Symbolic gradients of the equality constraints, one row per constraint.
    const std::vector<std::vector<Expr>>& equality_jacobian() const noexcept { return jacobian_; }

    MembershipResult classify(std::span<const double> p) const {
        if (p.size() != n_) throw DimensionError("point has " + std::to_string(p.size()) + " coordinates, space has " +
                                                 std::to_string(n_));
        MembershipResult r;
        r.violation = -std::numeric_limits<double>::infinity();
        try {
            for (const auto& g : equalities_) r.violation = std::max(r.violation, std::fabs(eval(g, p)) - tol_.equality);
            for (const auto& h : inequalities_) r.violation = std::max(r.violation, eval(h, p) - tol_.inequality);
        } catch (const DomainError& err) {
            r.domain_error = true;
            r.violation = std::numeric_limits<double>::infinity();
            r.diagnostic = err.what();
            return r;
        }
        r.member = r.violation <= 0.0;
        return r;
    }

    bool contains(std::span<const double> p) const { return classify(p).member; }

    friend bool operator==(const EmbeddedSpace& a, const EmbeddedSpace& b) {
        return a.n_ == b.n_ && a.equalities_ == b.equalities_ && a.inequalities_ == b.inequalities_ &&
               a.box_ == b.box_ && a.tol_ == b.tol_;
    }

private:
    std::size_t n_;
    std::vector<Expr> equalities_;
    std::vector<Expr> inequalities_;
    Box box_;
    MembershipTolerance tol_;
    std::vector<std::vector<Expr>> jacobian_;
};

using SpacePtr = std::shared_ptr<const EmbeddedSpace>;

inline SpacePtr share(EmbeddedSpace space) { return std::make_shared<const EmbeddedSpace>(std::move(space)); }

inline bool same_space(const SpacePtr& a, const SpacePtr& b) { return a == b || (a && b && *a == *b); }

inline bool membership(const EmbeddedSpace& space, std::span<const double> p) { return space.contains(p); }

// ---------------------------------------------------------------------------
// Projection onto the equality set and sampling

struct ProjectionOptions {
    int max_iterations = 25;
    double tolerance = 1e-10;
    int max_halvings = 12;
};

/// Damped Newton iteration with Moore-Penrose steps on the equality Jacobian.
/// Returns nothing if it fails to reach max|g_k| <= tolerance.
inline std::optional<std::vector<double>> project_onto_equalities(const EmbeddedSpace& space, std::vector<double> p,
                                                                  const ProjectionOptions& opts = {}) {
    const auto& eqs = space.equalities();
    if (eqs.empty()) return p;
    const auto m = static_cast<Eigen::Index>(eqs.size());
    const auto n = static_cast<Eigen::Index>(space.ambient_dim());
    auto residual = [&](std::span<const double> x) {
        Eigen::VectorXd g(m);
        for (Eigen::Index k = 0; k < m; ++k) g[k] = eval(eqs[static_cast<std::size_t>(k)], x);
        return g;
    };
    try {
        Eigen::VectorXd g = residual(p);
        for (int it = 0; it < opts.max_iterations; ++it) {
            if (g.lpNorm<Eigen::Infinity>() <= opts.tolerance) return p;
            Eigen::MatrixXd jac(m, n);
            for (Eigen::Index k = 0; k < m; ++k)
                for (Eigen::Index i = 0; i < n; ++i)
                    jac(k, i) = eval(space.equality_jacobian()[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)], p);
            const Eigen::VectorXd step = jac.completeOrthogonalDecomposition().solve(g);
            if (!step.allFinite() || step.squaredNorm() == 0.0) return std::nullopt;
            double alpha = 1.0;
            bool improved = false;
            for (int k = 0; k < opts.max_halvings; ++k, alpha *= 0.5) {
                std::vector<double> trial(p);
                for (Eigen::Index i = 0; i < n; ++i) trial[static_cast<std::size_t>(i)] -= alpha * step[i];
                try {
                    Eigen::VectorXd gt = residual(trial);
                    if (gt.norm() < g.norm()) {
                        p = std::move(trial);
                        g = std::move(gt);
                        improved = true;
                        break;
                    }
                } catch (const DomainError&) {
                }
            }
            if (!improved) return std::nullopt;
        }
        if (g.lpNorm<Eigen::Infinity>() <= opts.tolerance) return p;
    } catch (const DomainError&) {
    }
    return std::nullopt;
}

struct SampleOptions {
    /// Minimum acceptance rate, checked once `probe` candidates have been drawn.
    double acceptance_floor = 1e-3;
    std::size_t probe = 1000;
    /// Hard cap on candidates is max(probe, count / acceptance_floor).
    ProjectionOptions projection{};
};

/// Seeded sample of at most `count` member points. Candidates are uniform in
/// the sample box; with equality constraints each candidate is first projected
/// onto the equality set. Throws SamplingExhausted when the acceptance rate
/// falls below the floor.
inline std::vector<std::vector<double>> sample(const EmbeddedSpace& space, std::size_t count, std::uint64_t seed,
                                               const SampleOptions& opts = {}) {
    if (count == 0) throw InvalidArgument("sample count must be at least 1");
    std::mt19937_64 rng(seed);
    std::vector<std::uniform_real_distribution<double>> axes;
    for (const auto& iv : space.sample_box()) axes.emplace_back(iv.lo, iv.hi);

    const auto budget = std::max<std::size_t>(
        opts.probe, static_cast<std::size_t>(static_cast<double>(count) / opts.acceptance_floor));
    std::vector<std::vector<double>> points;
    points.reserve(count);
    std::size_t candidates = 0;
    while (points.size() < count && candidates < budget) {
        std::vector<double> p(space.ambient_dim());
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = axes[i](rng);
        ++candidates;
        auto projected = project_onto_equalities(space, std::move(p), opts.projection);
        if (projected && space.contains(*projected)) points.push_back(std::move(*projected));
        if (candidates >= opts.probe &&
            static_cast<double>(points.size()) < opts.acceptance_floor * static_cast<double>(candidates))
            throw SamplingExhausted("sampling exhausted: " + std::to_string(points.size()) + " of " +
                                    std::to_string(candidates) + " candidates accepted");
    }
    if (points.empty()) throw SamplingExhausted("sampling exhausted: no member point found");
    return points;
}

// ---------------------------------------------------------------------------
// Restricted functions

/// An element of the induced structure: an ambient expression restricted to a space.
class RestrictedFunction {
public:
    RestrictedFunction(SpacePtr space, Expr ambient) : space_(std::move(space)), ambient_(std::move(ambient)) {
        if (!space_) throw InvalidArgument("restricted function needs a space");
        if (ambient_.arity() > space_->ambient_dim())
            throw InvalidArgument("'" + to_string(ambient_) + "' uses coordinates beyond dimension " +
                                  std::to_string(space_->ambient_dim()));
    }

    const Expr& ambient() const noexcept { return ambient_; }
    const SpacePtr& space() const noexcept { return space_; }

    double operator()(std::span<const double> p) const { return eval(ambient_, p); }

private:
    SpacePtr space_;
    Expr ambient_;
};

namespace detail {
inline const SpacePtr& common_space(const RestrictedFunction& f, const RestrictedFunction& g) {
    if (!same_space(f.space(), g.space())) throw SpaceMismatch();
    return f.space();
}
} // namespace detail

inline RestrictedFunction operator+(const RestrictedFunction& f, const RestrictedFunction& g) {
    return {detail::common_space(f, g), f.ambient() + g.ambient()};
}
inline RestrictedFunction operator-(const RestrictedFunction& f, const RestrictedFunction& g) {
    return {detail::common_space(f, g), f.ambient() - g.ambient()};
}
inline RestrictedFunction operator*(const RestrictedFunction& f, const RestrictedFunction& g) {
    return {detail::common_space(f, g), f.ambient() * g.ambient()};
}
inline RestrictedFunction operator/(const RestrictedFunction& f, const RestrictedFunction& g) {
    return {detail::common_space(f, g), f.ambient() / g.ambient()};
}
inline RestrictedFunction operator*(double a, const RestrictedFunction& f) { return {f.space(), Expr(a) * f.ambient()}; }

/// Sampled equality on M: |f - g| <= tol at `samples` seeded member points.
/// A `true` answer is probabilistic evidence, not a proof.
inline bool restricted_eq(const RestrictedFunction& f, const RestrictedFunction& g, std::size_t samples,
                          std::uint64_t seed, double tol) {
    const auto& space = detail::common_space(f, g);
    for (const auto& p : sample(*space, samples, seed))
        if (!(std::fabs(f(p) - g(p)) <= tol)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Constructions

/// M_a x M_b in R^(n_a + n_b); b's coordinates are shifted by n_a.
inline EmbeddedSpace product(const EmbeddedSpace& a, const EmbeddedSpace& b) {
    const std::size_t na = a.ambient_dim();
    auto eqs = a.equalities();
    auto ineqs = a.inequalities();
    for (const auto& g : b.equalities()) eqs.push_back(shift_coords(g, na));
    for (const auto& h : b.inequalities()) ineqs.push_back(shift_coords(h, na));
    Box box = a.sample_box();
    box.insert(box.end(), b.sample_box().begin(), b.sample_box().end());
    const MembershipTolerance tol{std::max(a.tolerance().equality, b.tolerance().equality),
                                  std::max(a.tolerance().inequality, b.tolerance().inequality)};
    return EmbeddedSpace(na + b.ambient_dim(), std::move(eqs), std::move(ineqs), std::move(box), tol);
}

/// The subset of `outer` where the extra constraints also hold.
inline EmbeddedSpace subspace(const EmbeddedSpace& outer, const std::vector<Expr>& extra_eq,
                              const std::vector<Expr>& extra_ineq) {
    auto eqs = outer.equalities();
    auto ineqs = outer.inequalities();
    eqs.insert(eqs.end(), extra_eq.begin(), extra_eq.end());
    ineqs.insert(ineqs.end(), extra_ineq.begin(), extra_ineq.end());
    return EmbeddedSpace(outer.ambient_dim(), std::move(eqs), std::move(ineqs), outer.sample_box(), outer.tolerance());
}

/// Smooth bump: exactly 1 on the closed ball of radius r_inner about `center`,
/// exactly 0 outside radius r_outer, with values in [0, 1]. With
/// u = (r_outer^2 - |x - c|^2) / (r_outer^2 - r_inner^2) it is
/// flat(u) / (flat(u) + flat(1 - u)).
inline Expr bump(std::span<const double> center, double r_inner, double r_outer) {
    if (!(0.0 < r_inner && r_inner < r_outer)) throw InvalidArgument("bump radii must satisfy 0 < r_inner < r_outer");
    Expr s(0.0);
    for (std::size_t i = 0; i < center.size(); ++i) s = s + pow(Expr::coord(i) - Expr(center[i]), Expr(2.0));
    const double ro2 = r_outer * r_outer;
    const Expr u = (Expr(ro2) - s) / Expr(ro2 - r_inner * r_inner);
    return flat(u) / (flat(u) + flat(Expr(1.0) - u));
}

} // namespace subflow
