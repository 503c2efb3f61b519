#pragma once

// Dormand-Prince 5(4) integration of autonomous systems y' = F(y) with the
// method's free fourth-order continuous extension (the dopri5 "contd5"
// interpolant). Integration runs in one time direction; the trajectory is
// parameterised by s = |t| internally and by signed t at the interface.

#include "subflow/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace subflow::ode {

/// One accepted step [s0, s0 + h] with its interpolation coefficients.
struct DenseSegment {
    double s0 = 0.0;
    double h = 0.0;
    /// r1..r5 back to back, each of the system dimension.
    std::vector<double> coeff;
};

class DenseTrajectory {
public:
    DenseTrajectory() = default;
    DenseTrajectory(int direction, std::vector<double> start) : direction_(direction), start_(std::move(start)) {}

    int direction() const noexcept { return direction_; }
    std::size_t dimension() const noexcept { return start_.size(); }
    const std::vector<double>& start() const noexcept { return start_; }
    const std::vector<DenseSegment>& segments() const noexcept { return segments_; }

    /// Largest |t| the interpolant reaches.
    double reach() const noexcept { return segments_.empty() ? 0.0 : segments_.back().s0 + segments_.back().h; }

    bool covers(double t) const noexcept {
        const double s = direction_ * t;
        return s >= 0.0 && s <= reach();
    }

    void push(DenseSegment seg) { segments_.push_back(std::move(seg)); }

    /// Drops every segment starting at or beyond s.
    void truncate(double s) {
        while (!segments_.empty() && segments_.back().s0 >= s) segments_.pop_back();
    }

    void eval(double t, std::span<double> out) const {
        const double s = direction_ * t;
        const std::size_t n = start_.size();
        if (s == 0.0 || segments_.empty()) {
            if (s != 0.0) throw InvalidArgument("time outside the integrated range");
            std::copy(start_.begin(), start_.end(), out.begin());
            return;
        }
        if (s < 0.0 || s > reach()) throw InvalidArgument("time outside the integrated range");
        auto it = std::upper_bound(segments_.begin(), segments_.end(), s,
                                   [](double v, const DenseSegment& seg) { return v < seg.s0; });
        const DenseSegment& seg = *std::prev(it);
        const double theta = std::clamp((s - seg.s0) / seg.h, 0.0, 1.0);
        const double theta1 = 1.0 - theta;
        const double* r = seg.coeff.data();
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = r[i] + theta * (r[n + i] + theta1 * (r[2 * n + i] + theta * (r[3 * n + i] + theta1 * r[4 * n + i])));
        }
    }

    std::vector<double> operator()(double t) const {
        std::vector<double> y(start_.size());
        eval(t, y);
        return y;
    }

private:
    int direction_ = 1;
    std::vector<double> start_;
    std::vector<DenseSegment> segments_;
};

enum class Stop { horizon, blow_up, domain_error, event, step_limit };

struct StepControl {
    double rel_tol = 1e-9;
    double abs_tol = 1e-11;
    /// Integrate up to |t| = horizon.
    double horizon = 100.0;
    double max_step = 0.1;
    double blow_up_norm = 1e8;
    std::size_t max_steps = 1'000'000;
};

struct Integration {
    DenseTrajectory trajectory;
    Stop stop = Stop::horizon;
    /// |t| of the last point that passed every check (for `event`, the step
    /// that triggered the event ends beyond this).
    double reach = 0.0;
    std::size_t accepted = 0;
    std::size_t rejected = 0;
};

namespace detail {

// Dormand-Prince tableau.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                        a65 = -5103.0 / 18656;
inline constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                        a76 = 11.0 / 84;
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                        e6 = 22.0 / 525, e7 = -1.0 / 40;
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

inline double weighted_rms(std::span<const double> v, std::span<const double> y0, std::span<const double> y1,
                            const StepControl& ctl) {
    double sum = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double sk = ctl.abs_tol + ctl.rel_tol * std::max(std::fabs(y0[i]), std::fabs(y1[i]));
        sum += (v[i] / sk) * (v[i] / sk);
    }
    return std::sqrt(sum / static_cast<double>(std::max<std::size_t>(v.size(), 1)));
}

inline double sup_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

} // namespace detail

/// Integrates y' = direction * F(y) from y(0) = y0 in s = |t| until the horizon,
/// blow-up, an unrecoverable domain error, or until `stop_after(s, y)` returns
/// true at an accepted step. `F(y, out)` may throw DomainError; that rejects
/// the step and shrinks it. `post_step`, when set, may modify each accepted
/// state (used for projection onto constraint manifolds).
template <class Field>
Integration dopri5(Field&& field, std::vector<double> y0, int direction, const StepControl& ctl,
                   const std::function<bool(double, std::span<const double>)>& stop_after = {},
                   const std::function<void(std::vector<double>&)>& post_step = {}) {
    using namespace detail;
    const std::size_t n = y0.size();
    Integration out{.trajectory = DenseTrajectory(direction, y0)};
    auto rhs = [&](std::span<const double> y, std::vector<double>& dy) {
        field(y, dy);
        for (std::size_t i = 0; i < n; ++i) {
            dy[i] *= direction;
            if (!std::isfinite(dy[i])) throw DomainError("vector field is not finite");
        }
    };

    std::vector<double> y(y0), y1(n), ytmp(n), err(n);
    std::vector<double> k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n);
    rhs(y, k1); // a domain error at the initial point propagates

    // Initial step size (Hairer, Norsett & Wanner, II.4).
    double h = 0.0;
    {
        const double d0 = weighted_rms(y, y, y, ctl);
        const double dd1 = weighted_rms(k1, y, y, ctl);
        double h0 = (d0 < 1e-5 || dd1 < 1e-5) ? 1e-6 : 0.01 * d0 / dd1;
        h0 = std::min(h0, ctl.max_step);
        for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h0 * k1[i];
        double d2 = 0.0;
        try {
            rhs(ytmp, k2);
            for (std::size_t i = 0; i < n; ++i) err[i] = k2[i] - k1[i];
            d2 = weighted_rms(err, y, y, ctl) / h0;
        } catch (const DomainError&) {
            d2 = 1e6;
        }
        const double dmax = std::max(dd1, d2);
        const double h1 = dmax <= 1e-15 ? std::max(1e-6, h0 * 1e-3) : std::pow(0.01 / dmax, 0.2);
        h = std::min(100 * h0, h1);
    }

    double s = 0.0;
    const double min_step = 1e-14;
    bool last_rejected = false;
    for (;;) {
        if (s >= ctl.horizon) {
            out.stop = Stop::horizon;
            break;
        }
        if (out.accepted >= ctl.max_steps) {
            out.stop = Stop::step_limit;
            break;
        }
        h = std::min({h, ctl.max_step, ctl.horizon - s});
        const bool final_step = (s + h >= ctl.horizon);

        double err_norm = 0.0;
        bool step_ok = true;
        try {
            for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * a21 * k1[i];
            rhs(ytmp, k2);
            for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a31 * k1[i] + a32 * k2[i]);
            rhs(ytmp, k3);
            for (std::size_t i = 0; i < n; ++i) ytmp[i] = y[i] + h * (a41 * k1[i] + a42 * k2[i] + a43 * k3[i]);
            rhs(ytmp, k4);
            for (std::size_t i = 0; i < n; ++i)
                ytmp[i] = y[i] + h * (a51 * k1[i] + a52 * k2[i] + a53 * k3[i] + a54 * k4[i]);
            rhs(ytmp, k5);
            for (std::size_t i = 0; i < n; ++i)
                ytmp[i] = y[i] + h * (a61 * k1[i] + a62 * k2[i] + a63 * k3[i] + a64 * k4[i] + a65 * k5[i]);
            rhs(ytmp, k6);
            for (std::size_t i = 0; i < n; ++i)
                y1[i] = y[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
            rhs(y1, k7);
            for (std::size_t i = 0; i < n; ++i)
                err[i] = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            err_norm = weighted_rms(err, y, y1, ctl);
            if (!std::isfinite(err_norm)) step_ok = false;
        } catch (const DomainError&) {
            step_ok = false;
        }

        if (!step_ok) {
            h *= 0.25;
            ++out.rejected;
            last_rejected = true;
            if (h < min_step * std::max(1.0, s)) {
                out.stop = Stop::domain_error;
                break;
            }
            continue;
        }

        if (err_norm > 1.0) {
            h *= std::max(0.2, 0.9 * std::pow(err_norm, -0.2));
            ++out.rejected;
            last_rejected = true;
            if (h < min_step * std::max(1.0, s)) {
                out.stop = Stop::step_limit;
                break;
            }
            continue;
        }

        if (sup_norm(y1) > ctl.blow_up_norm) {
            out.stop = Stop::blow_up;
            break;
        }

        DenseSegment seg{.s0 = s, .h = h, .coeff = std::vector<double>(5 * n)};
        for (std::size_t i = 0; i < n; ++i) {
            const double ydiff = y1[i] - y[i];
            const double bspl = h * k1[i] - ydiff;
            seg.coeff[i] = y[i];
            seg.coeff[n + i] = ydiff;
            seg.coeff[2 * n + i] = bspl;
            seg.coeff[3 * n + i] = ydiff - h * k7[i] - bspl;
            seg.coeff[4 * n + i] = h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
        }
        out.trajectory.push(std::move(seg));
        ++out.accepted;

        const double s_new = final_step ? ctl.horizon : s + h;
        if (stop_after && stop_after(s_new, y1)) {
            out.stop = Stop::event;
            out.reach = s;
            return out;
        }
        s = s_new;
        out.reach = s;
        y.swap(y1);
        if (post_step) {
            post_step(y);
            rhs(y, k1);
        } else {
            k1.swap(k7);
        }

        double factor = err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
        if (last_rejected) factor = std::min(factor, 1.0);
        last_rejected = false;
        h *= factor;
    }
    out.reach = s;
    return out;
}

} // namespace subflow::ode
