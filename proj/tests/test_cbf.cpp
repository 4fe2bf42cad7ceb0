#include <gtest/gtest.h>

#include <complex>
#include <random>

#include "safer/barriers.hpp"
#include "safer/cbf.hpp"
#include "safer/error.hpp"
#include "support/invariance.hpp"

using namespace safer;
using namespace safer::cbf;
using world::Slice;
using world::Vec2;
using world::Vec3;

namespace {

BarrierFunction identity_barrier(int degree) {
  BarrierFunction bf;
  bf.name = "x";
  bf.relative_degree = degree;
  bf.value = [](const VectorXd& x, const world::WorldState&) { return x(0); };
  return bf;
}

world::WorldState one_robot(const world::Pose2& pose) {
  world::WorldState w;
  world::RobotState r;
  r.id = "r";
  r.base = pose;
  r.ee_pos = r.stowed_ee(pose);
  w.robots.push_back(r);
  return w;
}

// Roots of s^2 + k1 s + k0.
std::pair<std::complex<double>, std::complex<double>> roots(double k0, double k1) {
  const std::complex<double> disc = std::sqrt(std::complex<double>(k1 * k1 - 4.0 * k0));
  return {(-k1 - disc) / 2.0, (-k1 + disc) / 2.0};
}

}  // namespace

TEST(PolePlacement, Examples) {
  EXPECT_EQ(pole_placement_gains(-1, -1), (std::array<double, 2>{1, 2}));
  EXPECT_EQ(pole_placement_gains(-2, -3), (std::array<double, 2>{6, 5}));
  EXPECT_THROW(pole_placement_gains(-1, 0.5), DimensionError);
  EXPECT_THROW(pole_placement_gains(0.0, -1), DimensionError);
  const auto d = GainSpec::defaults();
  EXPECT_EQ(*d.gamma, 2.0);
  EXPECT_EQ(*d.k, (std::array<double, 2>{4, 4}));
}

TEST(PolePlacement, RootsRecovered) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-5.0, -0.1);
  for (int i = 0; i < 1000; ++i) {
    const double l1 = u(rng), l2 = u(rng);
    const auto k = pole_placement_gains(l1, l2);
    auto [a, b] = roots(k[0], k[1]);
    const double lo = std::min(l1, l2), hi = std::max(l1, l2);
    EXPECT_NEAR(std::abs(a - lo), 0.0, 1e-10 * (1 + std::abs(lo)));
    EXPECT_NEAR(std::abs(b - hi), 0.0, 1e-10 * (1 + std::abs(hi)) + 1e-7 * (std::abs(l1 - l2) < 1e-3));
  }
}

TEST(Linearize, SingleIntegrator) {
  GainSpec g;
  g.gamma = 1.0;
  const auto dyn = world::DynamicsModel::single_integrator(1);
  const auto row = linearize(identity_barrier(1), dyn, VectorXd::Constant(1, 2.0), g);
  EXPECT_NEAR(row.a(0), 1.0, 1e-9);
  EXPECT_NEAR(row.b, 2.0, 1e-9);
}

TEST(Linearize, DoubleIntegrator) {
  GainSpec g;
  g.k = std::array<double, 2>{1.0, 2.0};
  const auto dyn = world::DynamicsModel::double_integrator(1);
  const auto row = linearize(identity_barrier(2), dyn, (VectorXd(2) << 1.0, 0.0).finished(), g);
  EXPECT_NEAR(row.a(0), 1.0, 1e-6);
  EXPECT_NEAR(row.b, 1.0, 1e-6);
}

TEST(Linearize, ConstantBarrierNeverBinds) {
  BarrierFunction bf;
  bf.name = "c";
  bf.value = [](const VectorXd&, const world::WorldState&) { return 0.7; };
  GainSpec g;
  g.gamma = 3.0;
  const auto row = linearize(bf, world::DynamicsModel::single_integrator(2), VectorXd::Zero(2), g);
  EXPECT_NEAR(row.a.norm(), 0.0, 1e-12);
  EXPECT_NEAR(row.b, 2.1, 1e-12);
}

TEST(Linearize, Errors) {
  GainSpec only_gamma;
  only_gamma.gamma = 1.0;
  const auto dyn2 = world::DynamicsModel::double_integrator(1);
  EXPECT_THROW(linearize(identity_barrier(2), dyn2, VectorXd::Zero(2), only_gamma), DimensionError);
  BarrierFunction nan = identity_barrier(1);
  nan.value = [](const VectorXd&, const world::WorldState&) { return NAN; };
  EXPECT_THROW(linearize(nan, world::DynamicsModel::single_integrator(1), VectorXd::Zero(1), only_gamma),
               DimensionError);
  EXPECT_THROW(linearize(identity_barrier(1), world::DynamicsModel::single_integrator(2), VectorXd::Zero(1),
                         only_gamma),
               DimensionError);
}

TEST(Barriers, DocumentedValues) {
  auto w = one_robot(world::Pose2(2.0, 0.0, 0.0));
  Subject point{"r", Slice::Base, 0.0};
  const auto ko = keep_out(point, ShapeSource::fixed(geom::Circle{Vec2::Zero(), 1.0}), 0.2);
  EXPECT_NEAR(ko.eval(w), 0.8, 1e-12);

  const Subject ee = Subject::of(w, "r", Slice::Ee);
  w.robots[0].ee_vel.setZero();
  const auto vb = velocity_box(ee, {{0, -1.0, 1.0}});
  ASSERT_EQ(vb.size(), 2u);
  EXPECT_NEAR(vb[0].eval(w), 1.0, 1e-12);

  world::HumanState h;
  h.id = "h";
  h.position = Vec2(3.0, 0.0);
  w.humans.push_back(h);
  EXPECT_NEAR(keep_away_human(point, "h", 1.0).eval(w), 0.0, 1e-12);

  EXPECT_THROW(keep_out(point, ShapeSource::fixed(geom::Circle{Vec2::Zero(), 1.0}), 0.0), GeometryError);
  EXPECT_THROW(keep_away_human(point, "h", -1.0), GeometryError);
  EXPECT_THROW(workspace_polygon(point, geom::Polygon{{{0, 0}, {0, 1}, {1, 0}}}), GeometryError);
  EXPECT_THROW(speed_cap_near(Subject{"r", Slice::Base, 0.3}, "h", 0.5), DimensionError);
}

TEST(Barriers, AnalyticMatchesFiniteDifferences) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto w = one_robot(world::Pose2(u(rng), u(rng), M_PI * u(rng)));
    auto& r = w.robots[0];
    r.ee_pos = Vec3(r.base.x + 0.5 * u(rng), r.base.y + 0.5 * u(rng), 1.0 + 0.3 * u(rng));
    r.ee_vel = 0.4 * Vec3(u(rng), u(rng), u(rng));
    world::HumanState h;
    h.id = "h";
    h.position = Vec2(3.0 * u(rng), 3.0 * u(rng));
    w.humans.push_back(h);
    world::RobotState other = r;
    other.id = "o";
    other.base = world::Pose2(3.0 + u(rng), 3.0 * u(rng), 0.0);
    w.robots.push_back(other);

    const geom::Polygon obstacle =
        geom::convex_hull({Vec2(4 + u(rng), u(rng)), Vec2(5 + u(rng), u(rng)), Vec2(4.5, 2 + u(rng)),
                           Vec2(4.5 + u(rng), -2 + u(rng))});
    for (const Slice slice : {Slice::Base, Slice::Ee}) {
      const Subject s = Subject::of(w, "r", slice);
      std::vector<BarrierFunction> all = position_box(s, {{0, -5, 5}, {1, -5, 5}});
      for (auto& b : workspace_polygon(s, geom::circumscribe(geom::Circle{Vec2::Zero(), 6.0}, 8))) all.push_back(b);
      all.push_back(keep_out(s, ShapeSource::fixed(obstacle), 0.05));
      all.push_back(keep_out(s, ShapeSource::fixed(geom::Circle{Vec2(-4, 0), 0.5}), 0.05));
      all.push_back(separation(s, "o", 0.3));
      all.push_back(keep_away_human(s, "h", 1.0));
      if (slice == Slice::Ee) {
        for (auto& b : velocity_box(s, {{2, -0.6, 0.6}})) all.push_back(b);
        all.push_back(speed_cap_near(s, "h", 0.5, 1.5));
        all.push_back(reach(s, 0.9));
      }
      const VectorXd x = world::slice_state(r, slice);
      const auto dyn = world::slice_dynamics(r, slice);
      for (const auto& bf : all) {
        const LieTerms a = bf.lie(x, w, dyn);
        const LieTerms n = finite_difference_lie(bf, dyn, x, w);
        EXPECT_NEAR(a.h, n.h, 1e-12) << bf.name;
        EXPECT_NEAR(a.lf, n.lf, 1e-5) << bf.name;
        if (bf.relative_degree == 1) {
          EXPECT_LE((a.lg - n.lg).norm(), 1e-5) << bf.name;
        } else {
          EXPECT_NEAR(a.lf2, n.lf2, 1e-5) << bf.name;
          EXPECT_LE((a.lglf - n.lglf).norm(), 1e-5) << bf.name;
        }
      }
    }
  }
}

TEST(SafeControl, InactivePassesNominal) {
  auto w = one_robot(world::Pose2(0, 0, 0));
  const Subject s = Subject::of(w, "r", Slice::Base);
  const auto barriers = position_box(s, {{0, -5, 5}, {1, -5, 5}});
  const VectorXd u_nom = (VectorXd(3) << 0.1, -0.2, 0.3).finished();
  const std::vector<GainSpec> gains = {GainSpec::defaults()};
  const VectorXd hi = VectorXd::Constant(3, 1.0);
  const auto out = safe_control(u_nom, barriers, world::DynamicsModel::base(),
                                world::slice_state(w.robots[0], Slice::Base), gains, Slice::Base, -hi, hi, w);
  EXPECT_FALSE(out.infeasible);
  EXPECT_LE((out.u - u_nom).norm(), 1e-9);
}

TEST(SafeControl, ContradictoryBarriersBrake) {
  auto w = one_robot(world::Pose2(0, 0, 0));
  w.robots[0].ee_pos = Vec3(0.2, 0, 1.0);
  w.robots[0].ee_vel = Vec3(0.5, 0, 0);
  const Subject s = Subject::of(w, "r", Slice::Ee);
  // x >= 0.5 and x <= 0.1 cannot both hold.
  std::vector<BarrierFunction> barriers = position_box(s, {{0, 0.5, 10.0}});
  for (auto& b : position_box(s, {{0, -10.0, 0.1}})) barriers.push_back(b);
  const std::vector<GainSpec> gains = {GainSpec::defaults()};
  const VectorXd hi = VectorXd::Constant(3, 3.0);
  const auto out = safe_control(VectorXd::Zero(3), barriers, world::slice_dynamics(w.robots[0], Slice::Ee),
                                world::slice_state(w.robots[0], Slice::Ee), gains, Slice::Ee, -hi, hi, w);
  EXPECT_TRUE(out.infeasible);
  EXPECT_NEAR((out.u - Vec3(-3.0, 0, 0)).norm(), 0.0, 1e-12);
}

TEST(SafeControl, RejectsMixedSubjects) {
  auto w = one_robot(world::Pose2(0, 0, 0));
  const auto base = position_box(Subject::of(w, "r", Slice::Base), {{0, -5, 5}});
  const std::vector<GainSpec> gains = {GainSpec::defaults()};
  EXPECT_THROW(safe_control(VectorXd::Zero(6), base, world::slice_dynamics(w.robots[0], Slice::Ee),
                            world::slice_state(w.robots[0], Slice::Ee), gains, Slice::Ee, std::nullopt,
                            std::nullopt, w),
               DimensionError);
}

// Smaller sample than the acceptance run; same harness.
TEST(ForwardInvariance, EveryBarrierKind) {
  for (const auto& kind : safer::testing::invariance_kinds()) {
    const auto res = safer::testing::run_invariance(kind, 10, 5);
    EXPECT_EQ(res.failures, 0) << kind << " min h " << res.min_h;
  }
}
