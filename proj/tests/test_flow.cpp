#include "subflow/flow.hpp"

#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace subflow;

namespace {

SpacePtr disk() { return share(EmbeddedSpace(2, {}, {parse("x0^2 + x1^2 - 1")}, {{-1, 1}, {-1, 1}})); }
SpacePtr circle() { return share(EmbeddedSpace(2, {parse("x0^2 + x1^2 - 1")}, {}, {{-1.5, 1.5}, {-1.5, 1.5}})); }
SpacePtr unit_interval() { return share(EmbeddedSpace(1, {}, {parse("-x0"), parse("x0 - 1")}, {{0, 1}})); }

Derivation make(const SpacePtr& s, std::initializer_list<const char*> comps) {
    std::vector<Expr> c;
    for (const char* src : comps) c.push_back(parse(src));
    return Derivation(s, c);
}

// Exit times of t -> (x + t, y) from the unit disk.
double disk_exit_forward(double x, double y) { return std::sqrt(std::max(0.0, 1 - y * y)) - x; }
double disk_exit_backward(double x, double y) { return -std::sqrt(std::max(0.0, 1 - y * y)) - x; }

} // namespace

TEST(MaximalCurve, DiskThroughOrigin) {
    const auto v = make(disk(), {"1", "0"});
    const auto c = maximal_curve(v, {0.0, 0.0});
    EXPECT_NEAR(c.t_min(), -1.0, 1e-8);
    EXPECT_NEAR(c.t_max(), 1.0, 1e-8);
    EXPECT_EQ(c.forward_end(), EndReason::left_membership);
    EXPECT_EQ(c.backward_end(), EndReason::left_membership);
    for (int k = -99; k <= 99; ++k) {
        const auto y = c(0.01 * k);
        EXPECT_NEAR(y[0], 0.01 * k, 1e-12);
        EXPECT_EQ(y[1], 0.0);
    }
    EXPECT_EQ(c.audit_failures(), 0u);
    EXPECT_GT(c.audit_points(), 100u);
}

TEST(MaximalCurve, ZeroTimeCurveAtTopOfDisk) {
    const auto v = make(disk(), {"1", "0"});
    const Tolerances tol;
    const auto c = maximal_curve(v, {0.0, 1.0}, tol);
    EXPECT_LE(c.width(), 2 * tol.event_tol);
    EXPECT_EQ(c.forward_end(), EndReason::left_membership);
    EXPECT_EQ(c.backward_end(), EndReason::left_membership);
    EXPECT_EQ(c(0.0), (std::vector<double>{0.0, 1.0}));
}

TEST(MaximalCurve, BoundarySeedWithOutwardFieldExitsOneWay) {
    const auto v = make(disk(), {"1", "0"});
    const auto c = maximal_curve(v, {0.6, 0.8});
    EXPECT_EQ(c.t_max(), 0.0);
    EXPECT_NEAR(c.t_min(), -1.2, 1e-8);
    EXPECT_EQ(c.forward_end(), EndReason::left_membership);
}

TEST(MaximalCurve, UnitIntervalThroughMidpoint) {
    const auto v = make(unit_interval(), {"1"});
    const auto c = maximal_curve(v, {0.5});
    EXPECT_NEAR(c.t_min(), -0.5, 1e-8);
    EXPECT_NEAR(c.t_max(), 0.5, 1e-8);
    for (int k = -49; k <= 49; ++k) EXPECT_NEAR(c(0.01 * k)[0], 0.01 * k + 0.5, 1e-10);
}

TEST(MaximalCurve, EndpointsOfIntervalExitInOneDirection) {
    const auto v = make(unit_interval(), {"1"});
    const auto right = maximal_curve(v, {1.0});
    EXPECT_EQ(right.t_max(), 0.0);
    EXPECT_NEAR(right.t_min(), -1.0, 1e-8);
    const auto left = maximal_curve(v, {0.0});
    EXPECT_EQ(left.t_min(), 0.0);
    EXPECT_NEAR(left.t_max(), 1.0, 1e-8);
}

TEST(MaximalCurve, TangentFieldOnCircleRunsToHorizon) {
    Tolerances tol;
    tol.horizon = 10;
    const auto v = make(circle(), {"-x1", "x0"});
    const auto c = maximal_curve(v, {1.0, 0.0}, tol);
    EXPECT_EQ(c.forward_end(), EndReason::horizon_reached);
    EXPECT_EQ(c.backward_end(), EndReason::horizon_reached);
    EXPECT_DOUBLE_EQ(c.t_max(), 10.0);
    EXPECT_DOUBLE_EQ(c.t_min(), -10.0);
    EXPECT_NEAR(c(7.0)[0], std::cos(7.0), 1e-7);
    EXPECT_EQ(c.audit_failures(), 0u);
}

TEST(MaximalCurve, ZeroFieldIsHorizonTruncated) {
    const auto v = make(disk(), {"0", "0"});
    const auto c = maximal_curve(v, {0.2, 0.3});
    EXPECT_EQ(c.t_min(), -100.0);
    EXPECT_EQ(c.t_max(), 100.0);
    EXPECT_EQ(c(42.0), (std::vector<double>{0.2, 0.3}));
}

TEST(MaximalCurve, NonMemberSeedThrows) {
    const auto v = make(disk(), {"1", "0"});
    EXPECT_THROW(maximal_curve(v, {2.0, 0.0}), NotAMember);
}

TEST(MaximalCurve, TimeOutsideIntervalThrows) {
    const auto v = make(disk(), {"1", "0"});
    const auto c = maximal_curve(v, {0.0, 0.0});
    EXPECT_THROW(c(1.5), InvalidArgument);
}

TEST(MaximalCurve, ProjectionKeepsCircleCurveTight) {
    Tolerances tol;
    tol.horizon = 20;
    tol.project_equalities = true;
    const auto v = make(circle(), {"-x1", "x0"});
    const auto c = maximal_curve(v, {0.0, 1.0}, tol);
    EXPECT_EQ(c.forward_end(), EndReason::horizon_reached);
    EXPECT_EQ(c.audit_failures(), 0u);
}

TEST(Flow, DiskGridMatchesAnalyticIntervals) {
    const auto v = make(disk(), {"1", "0"});
    std::vector<std::vector<double>> seeds;
    for (int i = 0; i <= 20; ++i)
        for (int j = 0; j <= 20; ++j) {
            const std::vector<double> p{-1 + 0.1 * i, -1 + 0.1 * j};
            if (v.space()->contains(p)) seeds.push_back(p);
        }
    ASSERT_GT(seeds.size(), 300u);
    const auto result = flow(v, seeds);
    ASSERT_EQ(result.size(), seeds.size());
    EXPECT_EQ(result.failures(), 0u);
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        const auto& c = *result[k].curve;
        const double x = seeds[k][0], y = seeds[k][1];
        EXPECT_NEAR(c.t_max(), disk_exit_forward(x, y), 1e-7) << x << "," << y;
        EXPECT_NEAR(c.t_min(), disk_exit_backward(x, y), 1e-7) << x << "," << y;
        EXPECT_EQ(result(k, 0.0), seeds[k]);
        const double mid = 0.5 * (c.t_min() + c.t_max());
        EXPECT_NEAR(result(k, mid)[0], x + mid, 1e-8);
        EXPECT_EQ(c.audit_failures(), 0u);
    }
}

TEST(Flow, PerSeedErrorsAreCollected) {
    const auto v = make(disk(), {"1", "0"});
    const auto result = flow(v, {{0.0, 0.0}, {3.0, 0.0}, {0.5, 0.0}});
    ASSERT_EQ(result.size(), 3u);
    EXPECT_TRUE(result[0].ok());
    EXPECT_FALSE(result[1].ok());
    EXPECT_FALSE(result[1].error.empty());
    EXPECT_TRUE(result[2].ok());
    EXPECT_EQ(result.failures(), 1u);
    EXPECT_THROW(result(1, 0.0), PreconditionError);
}

TEST(Flow, ThreadCountDoesNotChangeResults) {
    const auto v = make(disk(), {"1", "x0"});
    std::vector<std::vector<double>> seeds{{0.1, 0.2}, {-0.4, 0.1}, {0.0, -0.3}, {0.5, 0.5}, {-0.2, -0.6}};
    const auto one = flow(v, seeds, {}, 1);
    const auto four = flow(v, seeds, {}, 4);
    for (std::size_t k = 0; k < seeds.size(); ++k) {
        EXPECT_EQ(one[k].curve->t_min(), four[k].curve->t_min());
        EXPECT_EQ(one[k].curve->t_max(), four[k].curve->t_max());
    }
}

TEST(Flow, RefinementConvergence) {
    const auto v = make(disk(), {"1 - x1", "x0"});
    Tolerances coarse;
    Tolerances fine = coarse;
    fine.rel_tol /= 2;
    fine.abs_tol /= 2;
    for (const std::vector<double>& p : {std::vector<double>{0.0, 0.0}, {0.3, -0.2}, {-0.5, 0.4}}) {
        const auto a = maximal_curve(v, p, coarse);
        const auto b = maximal_curve(v, p, fine);
        EXPECT_NEAR(a.t_min(), b.t_min(), 10 * coarse.event_tol);
        EXPECT_NEAR(a.t_max(), b.t_max(), 10 * coarse.event_tol);
        for (int k = 0; k <= 20; ++k) {
            const double t = a.t_min() + (a.t_max() - a.t_min()) * k / 20.0;
            if (!b.contains_time(t)) continue;
            const auto ya = a(t), yb = b(t);
            EXPECT_NEAR(ya[0], yb[0], 1e-7);
            EXPECT_NEAR(ya[1], yb[1], 1e-7);
        }
    }
}

TEST(Flow, ExitSoundness) {
    const auto v = make(disk(), {"1 - x1", "x0"});
    const Tolerances tol;
    const auto& h = v.space()->inequalities()[0];
    for (const std::vector<double>& p : {std::vector<double>{0.0, 0.0}, {0.3, -0.2}, {-0.5, 0.4}}) {
        const auto c = maximal_curve(v, p, tol);
        ASSERT_EQ(c.forward_end(), EndReason::left_membership);
        ASSERT_EQ(c.backward_end(), EndReason::left_membership);
        // Band around the threshold induced by the event tolerance.
        const double speed = 10.0;
        EXPECT_LE(std::fabs(eval(h, c(c.t_max()))), v.space()->tolerance().inequality + 2 * tol.event_tol * speed);
        EXPECT_LE(std::fabs(eval(h, c(c.t_min()))), v.space()->tolerance().inequality + 2 * tol.event_tol * speed);
        EXPECT_FALSE(v.space()->contains(c.ambient(c.t_max() + 10 * tol.event_tol)));
        EXPECT_FALSE(v.space()->contains(c.ambient(c.t_min() - 10 * tol.event_tol)));
    }
}

TEST(CurveResidual, SpecExamples) {
    const auto d = disk();
    const auto v = make(d, {"1", "0"});
    const auto c = maximal_curve(v, {0.0, 0.0});
    const auto r1 = curve_residual_check(c, v, {d, parse("x0")});
    EXPECT_EQ(r1.status, Status::pass);
    EXPECT_LE(r1.max_residual, 1e-9);
    const auto r2 = curve_residual_check(c, v, {d, parse("x0^2 + x1^2")});
    EXPECT_EQ(r2.status, Status::pass);
    EXPECT_LE(r2.max_residual, 1e-6);
    const auto point = maximal_curve(v, {0.0, 1.0});
    const auto r3 = curve_residual_check(point, v, {d, parse("x0")});
    EXPECT_EQ(r3.status, Status::pass);
    EXPECT_EQ(r3.samples, 0u);
}

TEST(CurveResidual, RejectsForeignFunction) {
    const auto v = make(disk(), {"1", "0"});
    const auto c = maximal_curve(v, {0.0, 0.0});
    EXPECT_THROW(curve_residual_check(c, v, {circle(), parse("x0")}), SpaceMismatch);
}

TEST(Translation, DiskShift) {
    const auto v = make(disk(), {"1", "0"});
    const auto base = maximal_curve(v, {-0.5, 0.0});
    EXPECT_NEAR(base.t_min(), -0.5, 1e-8);
    EXPECT_NEAR(base.t_max(), 1.5, 1e-8);
    const auto r = translation_check(v, {-0.5, 0.0}, 0.5);
    EXPECT_EQ(r.status, Status::pass) << r.detail;
    EXPECT_NEAR(r.metrics.at("t_min"), -1.0, 1e-8);
    EXPECT_NEAR(r.metrics.at("t_max"), 1.0, 1e-8);
    EXPECT_LE(r.metrics.at("interval_shift_error"), 1e-7);
}

TEST(Translation, ZeroShiftIsIdentity) {
    const auto v = make(disk(), {"1", "x0"});
    const auto r = translation_check(v, {0.1, 0.1}, 0.0);
    EXPECT_EQ(r.status, Status::pass);
    EXPECT_EQ(r.max_residual, 0.0);
}

TEST(Translation, ZeroFieldAlwaysPasses) {
    const auto v = make(disk(), {"0", "0"});
    EXPECT_EQ(translation_check(v, {0.1, 0.1}, 3.0).status, Status::pass);
}

TEST(Translation, RotationOnCircle) {
    Tolerances tol;
    tol.horizon = 10;
    const auto v = make(circle(), {"-x1", "x0"});
    const auto r = translation_check(v, {1.0, 0.0}, 2.0, tol);
    EXPECT_EQ(r.status, Status::pass);
    EXPECT_LE(r.max_residual, 1e-6);
}

TEST(Translation, ShiftOutsideIntervalThrows) {
    const auto v = make(disk(), {"1", "0"});
    EXPECT_THROW(translation_check(v, {0.0, 0.0}, 2.0), InvalidArgument);
}
