#include "duolift/attitude_control.hpp"
#include "duolift/harness/simulation.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace duolift;

namespace {

AttitudeReference target(const Vec3& angle, const Vec3& rate = Vec3::Zero()) {
  AttitudeReference r;
  r.angle = angle;
  r.rate = rate;
  return r;
}

// Attitude-only closed loop: the position loop is off and the desired
// attitude is held, so the filter output is constant.
Scenario attitude_step(const Vec3& start, double dt) {
  Scenario sc;
  sc.name = "attitude_step";
  sc.duration = 1.0;
  sc.dt = dt;
  sc.log_rate_hz = 1000.0;
  sc.position_loop_enabled = false;
  sc.initial_state = SimState::at_rest({0, 0, 1});
  sc.initial_state.set_attitude(start);
  return sc;
}

}  // namespace

TEST(SlidingSurface, ZeroAtTheOrigin) {
  EXPECT_EQ(sliding_surface(Vec3::Zero(), Vec3::Zero(), AttitudeGains{}), Vec3::Zero());
}

TEST(SlidingSurface, RollExample) {
  const Vec3 s = sliding_surface({0.1, 0.0, 0.0}, Vec3::Zero(), AttitudeGains{});
  EXPECT_NEAR(s.x(), 2.25, 1e-15);
  EXPECT_EQ(s.y(), 0.0);
  EXPECT_EQ(s.z(), 0.0);
}

TEST(SlidingSurface, IsOdd) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const AttitudeGains g;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 e(u(rng), u(rng), u(rng));
    const Vec3 r(u(rng), u(rng), u(rng));
    EXPECT_EQ(sliding_surface(-e, -r, g), -sliding_surface(e, r, g));
  }
}

TEST(AttitudeControl, ZeroWhenTrackingPerfectly) {
  const SimState s = SimState::at_rest({0, 0, 1});
  const AttitudeControlOutput out = attitude_control(AttitudeReference{}, s, AttitudeGains{}, SystemParams{});
  EXPECT_EQ(out.moments, Vec3::Zero());
}

TEST(AttitudeControl, RollExample) {
  const SimState s = SimState::at_rest({0, 0, 1});
  const AttitudeControlOutput out =
      attitude_control(target({0.1, 0.0, 0.0}), s, AttitudeGains{}, SystemParams{});
  EXPECT_NEAR(out.sliding.surface.x(), 2.25, 1e-15);
  EXPECT_NEAR(out.moments.x(), 3.039 * (191.25 + 55.0), 1e-10);
  EXPECT_NEAR(out.moments.x(), 748.35375, 1e-10);
  EXPECT_EQ(out.moments.y(), 0.0);
  EXPECT_EQ(out.moments.z(), 0.0);
}

TEST(AttitudeControl, CancelsGyroscopicCoupling) {
  const SystemParams p;
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    SimState s = SimState::at_rest({0, 0, 1});
    const Vec3 rates(u(rng), u(rng), u(rng));
    s.set_rates(rates);
    const AttitudeControlOutput out = attitude_control(target(Vec3::Zero(), rates), s, AttitudeGains{}, p);
    const StateVector d = state_derivative(s, WrenchCommand{p.weight(), out.moments}, ExternalForce{}, p);
    EXPECT_NEAR(d[kRollRate], 0.0, 1e-12);
    EXPECT_NEAR(d[kPitchRate], 0.0, 1e-12);
    EXPECT_NEAR(d[kYawRate], 0.0, 1e-12);
  }
}

TEST(AttitudeControl, NominalSurfaceDynamics) {
  // On the model plant the law enforces S_dot = -kappa1 S - kappa2 sgn(S).
  const SystemParams p;
  const AttitudeGains g;
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    SimState s = SimState::at_rest({0, 0, 1});
    s.set_attitude({u(rng), u(rng), u(rng)});
    s.set_rates({u(rng), u(rng), u(rng)});
    const AttitudeReference ref = target({u(rng), u(rng), u(rng)});
    const AttitudeControlOutput out = attitude_control(ref, s, g, p);
    const StateVector d = state_derivative(s, WrenchCommand{p.weight(), out.moments}, ExternalForce{}, p);
    const Vec3 s_dot = sliding_surface_rate(ref, s, d, g);
    for (int i = 0; i < 3; ++i) {
      const double si = out.sliding.surface[i];
      EXPECT_NEAR(s_dot[i], -g.kappa1 * si - g.kappa2 * sign(si), 1e-9);
      EXPECT_LE(si * s_dot[i], 0.0);
    }
  }
}

TEST(AttitudeControl, BoundaryLayerSwitching) {
  AttitudeGains g;
  g.switching = SwitchingMode::kBoundaryLayer;
  EXPECT_EQ(switching(0.005, g), 0.5);
  EXPECT_EQ(switching(-1.0, g), -1.0);
  g.switching = SwitchingMode::kSign;
  EXPECT_EQ(switching(0.005, g), 1.0);
  EXPECT_EQ(switching(0.0, g), 0.0);
}

TEST(ReachingBound, ZeroOnTheSurface) {
  EXPECT_EQ(reaching_time_bound(Vec3::Zero(), AttitudeGains{}), Vec3::Zero());
}

TEST(ReachingBound, MatchesIntegratedReachingDynamics) {
  // Integrate S_dot = -kappa1 S - kappa2 from S(0) = sqrt(2 V0) until S = 0.
  const AttitudeGains g;
  for (double v0 : {0.5, 0.02, 3.0}) {
    double s = std::sqrt(2.0 * v0);
    double t = 0.0;
    const double h = 1e-7;
    while (true) {
      const double next = s - h * (g.kappa1 * s + g.kappa2);
      if (next <= 0.0) {
        t += h * s / (s - next);
        break;
      }
      s = next;
      t += h;
    }
    EXPECT_NEAR(reaching_time_bound(Vec3::Constant(v0), g)[0], t, 1e-6) << v0;
  }
  EXPECT_NEAR(reaching_time_bound(Vec3::Constant(0.5), g)[0], 0.010991873380903922, 1e-15);
}

TEST(ReachingBound, MonotoneInItsArguments) {
  AttitudeGains g;
  double prev = 0.0;
  for (double v0 = 0.01; v0 < 10.0; v0 *= 1.5) {
    const double t = reaching_time_bound(Vec3::Constant(v0), g)[0];
    EXPECT_GT(t, prev);
    prev = t;
  }
  const double base = reaching_time_bound(Vec3::Constant(0.5), g)[0];
  AttitudeGains k1 = g;
  k1.kappa1 *= 1.1;
  AttitudeGains k2 = g;
  k2.kappa2 *= 1.1;
  EXPECT_LT(reaching_time_bound(Vec3::Constant(0.5), k1)[0], base);
  EXPECT_LT(reaching_time_bound(Vec3::Constant(0.5), k2)[0], base);
  EXPECT_THROW(reaching_time_bound(Vec3(-1.0, 0.0, 0.0), g), std::invalid_argument);
}

TEST(DesiredAttitudeFilter, ConvergesToTheSetPoint) {
  DesiredAttitudeFilter f(20.0);
  f.reset(Vec3::Zero());
  const Vec3 goal(0.2, -0.1, 0.0);
  for (int k = 0; k < 1000; ++k) f.update(goal, 0.001);
  EXPECT_TRUE(f.output().angle.isApprox(goal, 1e-9));
  EXPECT_TRUE(f.output().rate.isZero(1e-6));
}

TEST(DesiredAttitudeFilter, NoOvershootWhenCriticallyDamped) {
  DesiredAttitudeFilter f(20.0);
  f.reset(Vec3::Zero());
  for (int k = 0; k < 500; ++k) {
    f.update(Vec3(1.0, 1.0, 1.0), 0.001);
    EXPECT_LE(f.output().angle.x(), 1.0 + 1e-12);
  }
}

TEST(AttitudeClosedLoop, ReachesTheSurfaceWithinTheBound) {
  const Scenario sc = attitude_step({0.3, -0.2, 0.1}, 0.001);
  const RunLog log = run(sc);
  ASSERT_EQ(log.status, RunStatus::kCompleted);
  const Vec3 s0 = log.rows.front().sliding.surface;
  const Vec3 bound = reaching_time_bound(attitude_lyapunov(s0), sc.attitude);
  for (int i = 0; i < 3; ++i) {
    double reached = -1.0;
    for (std::size_t k = 1; k < log.rows.size(); ++k) {
      const double a = log.rows[k - 1].sliding.surface[i], b = log.rows[k].sliding.surface[i];
      if (std::abs(b) < 1e-3 || sign(a) != sign(b)) {
        reached = log.rows[k].t;
        break;
      }
    }
    ASSERT_GE(reached, 0.0) << "axis " << i;
    // One sample of slack for the sampled crossing.
    EXPECT_LE(reached, bound[i] + sc.dt) << "axis " << i;
  }
}

TEST(AttitudeClosedLoop, LyapunovDecreasesOffTheSurface) {
  const RunLog log = run(attitude_step({0.3, -0.2, 0.1}, 0.001));
  for (const auto& r : log.rows) {
    for (int i = 0; i < 3; ++i) {
      if (std::abs(r.sliding.surface[i]) > 1e-3) {
        EXPECT_LE(r.v_phi_dot[i], 0.0) << "t=" << r.t << " axis " << i;
      }
    }
  }
}

TEST(AttitudeClosedLoop, ErrorDecaysOnTheSurface) {
  const RunLog log = run(attitude_step({0.3, -0.2, 0.1}, 0.001));
  for (int i = 0; i < 3; ++i) {
    std::size_t k = 0;
    while (k < log.rows.size() && std::abs(log.rows[k].sliding.surface[i]) > 0.1) ++k;
    ASSERT_LT(k, log.rows.size());
    // Sampled every 50 ms the error magnitude shrinks until it is at the chattering floor.
    double prev = std::abs(log.rows[k].sliding.error[i]);
    for (std::size_t j = k + 50; j < log.rows.size(); j += 50) {
      const double e = std::abs(log.rows[j].sliding.error[i]);
      if (prev < 1e-3) break;
      EXPECT_LT(e, prev) << "axis " << i << " t=" << log.rows[j].t;
      prev = e;
    }
  }
}

TEST(AttitudeClosedLoop, ChatteringBandShrinksWithTheStep) {
  auto band = [](double dt) {
    const RunLog log = run(attitude_step({0.3, -0.2, 0.1}, dt));
    double worst = 0.0;
    for (const auto& r : log.rows) {
      if (r.t >= 0.5) worst = std::max(worst, std::abs(r.sliding.surface.x()));
    }
    return worst;
  };
  const double coarse = band(0.001);
  const double fine = band(0.0005);
  EXPECT_GT(coarse, 0.0);
  EXPECT_NEAR(coarse / fine, 2.0, 0.4);
}
