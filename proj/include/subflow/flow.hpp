#pragma once

// Integral curves and flows of derivations.
//
// The derivation's components are read as an ambient vector field
// V = sum_i b_i ∂/∂x_i. Its trajectory from a seed p is integrated in both
// time directions and cut at the first exit from M, so the interval I is the
// connected component of 0 in the membership preimage. Seeds on an active
// inequality whose Lie series points outward give I = {0}.

#include "subflow/derivation.hpp"
#include "subflow/dspace.hpp"
#include "subflow/errors.hpp"
#include "subflow/expr.hpp"
#include "subflow/ode.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

namespace subflow {

struct Tolerances {
    double rel_tol = 1e-9;
    double abs_tol = 1e-11;
    double event_tol = 1e-10;
    /// Membership audit spacing; 0 means horizon / 1e4.
    double dt_check = 0.0;
    double horizon = 100.0;
    double blow_up_norm = 1e8;
    /// Threshold below which a Lie derivative at a boundary seed counts as zero.
    double tangent_tol = 1e-10;
    /// Largest integrator step; 0 means horizon / 1000.
    double max_step = 0.0;
    std::size_t max_steps = 1'000'000;
    /// Newton-project each accepted state back onto the equality set.
    bool project_equalities = false;

    double check_spacing() const { return dt_check > 0.0 ? dt_check : horizon / 1e4; }
    double step_cap() const { return max_step > 0.0 ? max_step : horizon / 1000.0; }

    void validate() const {
        auto need = [](double v, const char* name) {
            if (!(v > 0.0) || !std::isfinite(v)) throw InvalidArgument(std::string(name) + " must be positive");
        };
        need(rel_tol, "rel_tol");
        need(abs_tol, "abs_tol");
        need(event_tol, "event_tol");
        need(horizon, "horizon");
        need(blow_up_norm, "blow_up_norm");
        need(tangent_tol, "tangent_tol");
        if (dt_check != 0.0) need(dt_check, "dt_check");
        if (max_step != 0.0) need(max_step, "max_step");
        if (max_steps == 0) throw InvalidArgument("max_steps must be positive");
    }
};

class AmbientVectorField {
public:
    explicit AmbientVectorField(const Derivation& v) : components_(v.components()) {}
    explicit AmbientVectorField(std::vector<Expr> components) : components_(std::move(components)) {}

    std::size_t dimension() const noexcept { return components_.size(); }
    const std::vector<Expr>& components() const noexcept { return components_; }

    void operator()(std::span<const double> y, std::vector<double>& out) const {
        for (std::size_t i = 0; i < components_.size(); ++i) out[i] = eval(components_[i], y);
    }

private:
    std::vector<Expr> components_;
};

enum class EndReason { left_membership, horizon_reached, blow_up, domain_error, step_limit };

inline const char* to_string(EndReason r) {
    switch (r) {
    case EndReason::left_membership: return "left_membership";
    case EndReason::horizon_reached: return "horizon_reached";
    case EndReason::blow_up: return "blow_up";
    case EndReason::domain_error: return "domain_error";
    case EndReason::step_limit: return "step_limit";
    }
    return "step_limit";
}

inline ode::StepControl step_control(const Tolerances& tol) {
    return {.rel_tol = tol.rel_tol,
            .abs_tol = tol.abs_tol,
            .horizon = tol.horizon,
            .max_step = tol.step_cap(),
            .blow_up_norm = tol.blow_up_norm,
            .max_steps = tol.max_steps};
}

/// Dense ambient trajectory of V from p in one time direction.
inline ode::Integration integrate_ambient(const AmbientVectorField& V, std::vector<double> p, int direction,
                                          const Tolerances& tol) {
    tol.validate();
    if (direction != 1 && direction != -1) throw InvalidArgument("direction must be +1 or -1");
    if (p.size() != V.dimension()) throw DimensionError("seed dimension does not match the vector field");
    for (double x : p)
        if (!std::isfinite(x)) throw InvalidArgument("seed must be finite");
    return ode::dopri5(V, std::move(p), direction, step_control(tol));
}

class IntegralCurve {
public:
    IntegralCurve(std::vector<double> seed, double t_min, double t_max, EndReason backward_end, EndReason forward_end,
                  ode::DenseTrajectory backward, ode::DenseTrajectory forward)
        : seed_(std::move(seed)),
          t_min_(t_min),
          t_max_(t_max),
          backward_end_(backward_end),
          forward_end_(forward_end),
          backward_(std::move(backward)),
          forward_(std::move(forward)) {}

    const std::vector<double>& seed() const noexcept { return seed_; }
    double t_min() const noexcept { return t_min_; }
    double t_max() const noexcept { return t_max_; }
    double width() const noexcept { return t_max_ - t_min_; }
    EndReason backward_end() const noexcept { return backward_end_; }
    EndReason forward_end() const noexcept { return forward_end_; }
    bool contains_time(double t) const noexcept { return t >= t_min_ && t <= t_max_; }
    bool is_point() const noexcept { return t_min_ == 0.0 && t_max_ == 0.0; }

    /// γ(t) for t in I; γ(0) is the seed bit for bit.
    std::vector<double> operator()(double t) const {
        if (!contains_time(t)) throw InvalidArgument("time outside the curve's interval");
        return ambient(t);
    }

    /// Ambient trajectory γ̃, defined wherever it was integrated.
    std::vector<double> ambient(double t) const {
        if (t == 0.0) return seed_;
        return t > 0.0 ? forward_(t) : backward_(t);
    }

    double ambient_reach(int direction) const noexcept {
        return direction > 0 ? forward_.reach() : -backward_.reach();
    }

    /// Audit points on a dt grid that failed membership.
    std::size_t audit_failures() const noexcept { return audit_failures_; }
    std::size_t audit_points() const noexcept { return audit_points_; }
    void set_audit(std::size_t points, std::size_t failures) {
        audit_points_ = points;
        audit_failures_ = failures;
    }

private:
    std::vector<double> seed_;
    double t_min_;
    double t_max_;
    EndReason backward_end_;
    EndReason forward_end_;
    ode::DenseTrajectory backward_;
    ode::DenseTrajectory forward_;
    std::size_t audit_points_ = 0;
    std::size_t audit_failures_ = 0;
};

namespace detail {

/// Lie series L^k h = v(L^{k-1} h), k = 1..order, of every inequality.
inline std::vector<std::vector<Expr>> lie_series(const Derivation& v, std::size_t order) {
    std::vector<std::vector<Expr>> out;
    for (const auto& h : v.space()->inequalities()) {
        std::vector<Expr> series;
        Expr cur = h;
        for (std::size_t k = 0; k < order; ++k) {
            cur = apply(v, cur);
            series.push_back(cur);
        }
        out.push_back(std::move(series));
    }
    return out;
}

/// True when some inequality active at p is pushed outward immediately in
/// the given direction: the first Lie derivative above the threshold has the
/// sign of (direction)^k.
inline bool exits_immediately(const EmbeddedSpace& space, const std::vector<std::vector<Expr>>& lie,
                              std::span<const double> p, int direction, const Tolerances& tol) {
    const auto& ineq = space.inequalities();
    for (std::size_t j = 0; j < ineq.size(); ++j) {
        double h0 = 0.0;
        try {
            h0 = eval(ineq[j], p);
        } catch (const DomainError&) {
            return true;
        }
        if (std::fabs(h0) > space.tolerance().inequality) continue;
        double sign = 1.0;
        for (const auto& lk : lie[j]) {
            sign *= direction;
            double d = 0.0;
            try {
                d = eval(lk, p);
            } catch (const DomainError&) {
                break;
            }
            if (std::fabs(d) <= tol.tangent_tol) continue;
            if (sign * d > 0.0) return true;
            break;
        }
    }
    return false;
}

struct HalfCurve {
    ode::DenseTrajectory trajectory;
    double reach = 0.0; // |t| of the endpoint
    EndReason reason = EndReason::horizon_reached;
};

inline HalfCurve half_curve(const Derivation& v, const AmbientVectorField& V, const std::vector<double>& p,
                            int direction, const Tolerances& tol, const std::vector<std::vector<Expr>>& lie) {
    const EmbeddedSpace& space = *v.space();
    if (exits_immediately(space, lie, p, direction, tol))
        return {ode::DenseTrajectory(direction, p), 0.0, EndReason::left_membership};

    auto outside = [&](std::span<const double> y) { return !space.classify(y).member; };
    std::function<void(std::vector<double>&)> project;
    if (tol.project_equalities && !space.equalities().empty()) {
        project = [&](std::vector<double>& y) {
            if (auto q = project_onto_equalities(space, y)) y = std::move(*q);
        };
    }
    auto run = ode::dopri5(
        V, p, direction, step_control(tol), [&](double, std::span<const double> y) { return outside(y); }, project);

    HalfCurve out{.trajectory = std::move(run.trajectory), .reach = run.reach};
    switch (run.stop) {
    case ode::Stop::horizon: out.reason = EndReason::horizon_reached; break;
    case ode::Stop::blow_up: out.reason = EndReason::blow_up; break;
    case ode::Stop::domain_error: out.reason = EndReason::domain_error; break;
    case ode::Stop::step_limit: out.reason = EndReason::step_limit; break;
    case ode::Stop::event: {
        out.reason = EndReason::left_membership;
        // Scan the offending step for its first outside sample, then bisect.
        const auto& traj = out.trajectory;
        double lo = run.reach;
        double hi = traj.reach();
        constexpr int scan = 16;
        const double s0 = lo;
        for (int k = 1; k <= scan; ++k) {
            const double s = k == scan ? hi : s0 + (hi - s0) * k / scan;
            if (outside(traj(direction * s))) {
                hi = s;
                break;
            }
            lo = s;
        }
        while (hi - lo > tol.event_tol) {
            const double mid = 0.5 * (lo + hi);
            if (mid <= lo || mid >= hi) break;
            if (outside(traj(direction * mid)))
                hi = mid;
            else
                lo = mid;
        }
        out.reach = lo;
        break;
    }
    }
    return out;
}

} // namespace detail

/// Maximal integral curve of v through a member p.
inline IntegralCurve maximal_curve(const Derivation& v, const std::vector<double>& p, const Tolerances& tol = {}) {
    tol.validate();
    const EmbeddedSpace& space = *v.space();
    const auto m = space.classify(p);
    if (!m.member) throw NotAMember(p);
    for (double x : p)
        if (!std::isfinite(x)) throw InvalidArgument("seed must be finite");
    const AmbientVectorField V(v);
    const auto lie = detail::lie_series(v, 3);
    auto fwd = detail::half_curve(v, V, p, +1, tol, lie);
    auto bwd = detail::half_curve(v, V, p, -1, tol, lie);
    IntegralCurve curve(p, bwd.reach == 0.0 ? 0.0 : -bwd.reach, fwd.reach, bwd.reason, fwd.reason, std::move(bwd.trajectory),
                        std::move(fwd.trajectory));

    const double dt = tol.check_spacing();
    std::size_t points = 0, failures = 0;
    auto audit = [&](double t) {
        ++points;
        if (!space.classify(curve(t)).member) ++failures;
    };
    for (double t = dt; t < curve.t_max(); t += dt) audit(t);
    for (double t = -dt; t > curve.t_min(); t -= dt) audit(t);
    if (curve.t_max() > 0.0) audit(curve.t_max());
    if (curve.t_min() < 0.0) audit(curve.t_min());
    curve.set_audit(points, failures);
    return curve;
}

struct SeedResult {
    std::vector<double> seed;
    std::optional<IntegralCurve> curve;
    std::string error;

    bool ok() const noexcept { return curve.has_value(); }
};

class FlowResult {
public:
    explicit FlowResult(std::vector<SeedResult> records) : records_(std::move(records)) {}

    const std::vector<SeedResult>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }
    const SeedResult& operator[](std::size_t i) const { return records_.at(i); }

    std::size_t failures() const noexcept {
        return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [](const auto& r) { return !r.ok(); }));
    }

    /// Φ(p_index, t) for t in I_p.
    std::vector<double> operator()(std::size_t index, double t) const {
        const auto& r = records_.at(index);
        if (!r.curve) throw PreconditionError("seed " + std::to_string(index) + " has no curve: " + r.error, r.seed);
        return (*r.curve)(t);
    }

private:
    std::vector<SeedResult> records_;
};

/// One maximal curve per seed; per-seed failures are recorded, not thrown.
inline FlowResult flow(const Derivation& v, const std::vector<std::vector<double>>& seeds, const Tolerances& tol = {},
                       unsigned threads = 0) {
    tol.validate();
    std::vector<SeedResult> records(seeds.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < seeds.size(); i = next++) {
            records[i].seed = seeds[i];
            try {
                records[i].curve.emplace(maximal_curve(v, seeds[i], tol));
            } catch (const Error& e) {
                records[i].error = e.what();
            }
        }
    };
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(seeds.size(), 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    }
    return FlowResult(std::move(records));
}

// ---------------------------------------------------------------------------
// Checks on computed curves

/// Central-difference d/dt (f∘γ) against v(f)∘γ on `grid` interior times.
inline CheckReport curve_residual_check(const IntegralCurve& curve, const Derivation& v, const RestrictedFunction& f,
                                        std::size_t grid = 100, double tol = 1e-4, double fd_step = 1e-5) {
    if (!same_space(v.space(), f.space())) throw SpaceMismatch();
    CheckReport r{.check = "curve_residual", .tolerance = tol};
    const Expr vf = apply(v, f.ambient());
    const double lo = curve.t_min() + fd_step;
    const double hi = curve.t_max() - fd_step;
    if (hi > lo) {
        for (std::size_t k = 1; k <= grid; ++k) {
            const double t = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(grid + 1);
            const auto y = curve(t);
            const double tp = std::min(t + fd_step, curve.t_max());
            const double tm = std::max(t - fd_step, curve.t_min());
            const double fd = (eval(f.ambient(), curve(tp)) - eval(f.ambient(), curve(tm))) / (tp - tm);
            detail::record(r, std::fabs(fd - eval(vf, y)), y);
            ++r.samples;
        }
    } else {
        r.detail = "no interior grid";
    }
    r.metrics["t_min"] = curve.t_min();
    r.metrics["t_max"] = curve.t_max();
    detail::finish(r);
    return r;
}

struct TranslationOptions {
    double tol = 1e-6;
    double interval_tol = 1e-7;
    std::size_t grid = 50;
};

/// Φ(Φ(p,s), t) = Φ(p, s+t) on a grid of t, and I_{Φ(p,s)} = I_p - s at every
/// end that was cut by a membership exit on both curves.
inline CheckReport translation_check(const Derivation& v, const std::vector<double>& p, double s,
                                     const Tolerances& tol = {}, const TranslationOptions& opts = {}) {
    const IntegralCurve base = maximal_curve(v, p, tol);
    if (!base.contains_time(s)) throw InvalidArgument("shift lies outside the seed's interval");
    const auto q = base(s);
    const IntegralCurve moved = maximal_curve(v, q, tol);

    CheckReport r{.check = "translation", .tolerance = opts.tol};
    const double lo = std::max(moved.t_min(), base.t_min() - s);
    const double hi = std::min(moved.t_max(), base.t_max() - s);
    if (hi >= lo) {
        for (std::size_t k = 0; k <= opts.grid; ++k) {
            const double t = opts.grid == 0 ? lo
                                            : std::min(hi, lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(opts.grid));
            const auto a = moved(t);
            const auto b = base(std::clamp(s + t, base.t_min(), base.t_max()));
            double d = 0.0;
            for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::fabs(a[i] - b[i]));
            detail::record(r, d, a);
            ++r.samples;
        }
    }

    double shift_err = 0.0;
    bool shift_ok = true;
    if (base.backward_end() == EndReason::left_membership && moved.backward_end() == EndReason::left_membership) {
        const double e = std::fabs(moved.t_min() - (base.t_min() - s));
        shift_err = std::max(shift_err, e);
        shift_ok = shift_ok && e <= opts.interval_tol;
    }
    if (base.forward_end() == EndReason::left_membership && moved.forward_end() == EndReason::left_membership) {
        const double e = std::fabs(moved.t_max() - (base.t_max() - s));
        shift_err = std::max(shift_err, e);
        shift_ok = shift_ok && e <= opts.interval_tol;
    }
    r.metrics["interval_shift_error"] = shift_err;
    r.metrics["interval_tol"] = opts.interval_tol;
    r.metrics["t_min"] = moved.t_min();
    r.metrics["t_max"] = moved.t_max();
    detail::finish(r);
    if (!shift_ok) {
        r.status = Status::fail;
        r.detail = "interval shift exceeds tolerance";
    }
    return r;
}

} // namespace subflow
