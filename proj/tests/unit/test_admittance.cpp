#include "duolift/admittance.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace duolift;

TEST(Gate, ZeroForceStaysZero) { EXPECT_EQ(gate(Vec3::Zero(), AdmittanceParams{}), Vec3::Zero()); }

TEST(Gate, PassesForcesAboveThreshold) {
  EXPECT_EQ(gate({1.0, 0.0, 0.0}, AdmittanceParams{}), Vec3(1.0, 0.0, 0.0));
  EXPECT_EQ(gate({0.3, 0.0, 0.0}, AdmittanceParams{}), Vec3::Zero());
  // The norm, not a single component, is compared.
  EXPECT_EQ(gate({0.3, 0.3, 0.3}, AdmittanceParams{}), Vec3(0.3, 0.3, 0.3));
}

TEST(Gate, ReleaseHysteresis) {
  ForceGate g(AdmittanceParams{});
  EXPECT_EQ(g.apply({0.48, 0, 0}), Vec3::Zero());
  EXPECT_FALSE(g.is_open());
  EXPECT_EQ(g.apply({0.51, 0, 0}), Vec3(0.51, 0, 0));
  EXPECT_TRUE(g.is_open());
  // Between 0.45 and 0.5 N the gate stays open.
  EXPECT_EQ(g.apply({0.46, 0, 0}), Vec3(0.46, 0, 0));
  EXPECT_TRUE(g.is_open());
  EXPECT_EQ(g.apply({0.45, 0, 0}), Vec3::Zero());
  EXPECT_FALSE(g.is_open());
  EXPECT_EQ(g.apply({0.46, 0, 0}), Vec3::Zero());
}

TEST(StepAdmittance, RestIsUnchanged) {
  const ReferenceTrajectory ref = ReferenceTrajectory::hold({1, 2, 3});
  const ReferenceTrajectory next = step_admittance(ref, Vec3::Zero(), ref.position, AdmittanceParams{}, 0.01);
  EXPECT_EQ(next.position, ref.position);
  EXPECT_EQ(next.velocity, Vec3::Zero());
  EXPECT_EQ(next.acceleration, Vec3::Zero());
  EXPECT_THROW(step_admittance(ref, Vec3::Zero(), ref.position, AdmittanceParams{}, 0.0), std::invalid_argument);
}

TEST(StepAdmittance, TerminalVelocityIsForceOverDamping) {
  const AdmittanceParams p;
  ReferenceTrajectory ref;
  const Vec3 f(1.54, 0, 0);
  const double tau = 0.95 / 1.54;
  const int steps = static_cast<int>(std::ceil(10.0 * tau / 0.01));
  for (int k = 0; k < steps; ++k) ref = step_admittance(ref, f, Vec3::Zero(), p, 0.01);
  EXPECT_NEAR(ref.velocity.x(), 1.0, 1e-3);
  EXPECT_EQ(ref.velocity.y(), 0.0);
}

TEST(StepAdmittance, ComplianceSlopeIsOneOverDamping) {
  AdmittanceParams p;
  p.damping = Vec3(1.0, 1.54, 3.0);
  const double horizon = 5.0 * 0.95 / 1.0;
  for (double mag : {0.6, 1.0, 2.5, 4.0}) {
    ReferenceTrajectory ref;
    for (double t = 0.0; t < horizon; t += 0.01) ref = step_admittance(ref, Vec3::Constant(mag), Vec3::Zero(), p, 0.01);
    for (int i = 0; i < 3; ++i) {
      EXPECT_NEAR(ref.velocity[i] / (mag / p.damping[i]), 1.0, 0.02) << "axis " << i << " F=" << mag;
    }
  }
}

TEST(StepAdmittance, ReferenceMovesAlongTheForce) {
  ReferenceTrajectory ref;
  ref = step_admittance(ref, {0, -2.0, 0}, Vec3::Zero(), AdmittanceParams{}, 0.01);
  EXPECT_LT(ref.velocity.y(), 0.0);
  EXPECT_LT(ref.position.y(), 0.0);
}

TEST(StepAdmittance, StaticDeflectionWithStiffness) {
  for (double k : {0.5, 2.0, 8.0}) {
    AdmittanceParams p;
    p.stiffness = Vec3::Constant(k);
    ReferenceTrajectory ref;
    for (int s = 0; s < 10000; ++s) ref = step_admittance(ref, {1.0, 0, 0}, Vec3::Zero(), p, 0.01);
    EXPECT_NEAR(ref.position.x(), 1.0 / k, 1e-6) << "K=" << k;
  }
}

TEST(StepAdmittance, StifferMeansSmallerDeflection) {
  double prev = std::numeric_limits<double>::infinity();
  for (double k = 0.25; k < 20.0; k *= 2.0) {
    AdmittanceParams p;
    p.stiffness = Vec3::Constant(k);
    ReferenceTrajectory ref;
    for (int s = 0; s < 3000; ++s) ref = step_admittance(ref, {1.0, 0, 0}, Vec3::Zero(), p, 0.01);
    EXPECT_LT(ref.position.x(), prev);
    prev = ref.position.x();
  }
}

TEST(StepAdmittance, DampingAbsorbsTheInjectedPower) {
  // At terminal velocity F v = C v^2.
  const AdmittanceParams p;
  ReferenceTrajectory ref;
  const Vec3 f(0.8, -1.2, 2.0);
  for (int s = 0; s < 2000; ++s) ref = step_admittance(ref, f, Vec3::Zero(), p, 0.01);
  const double injected = f.dot(ref.velocity);
  const double dissipated = p.damping.cwiseProduct(ref.velocity).dot(ref.velocity);
  EXPECT_NEAR(injected, dissipated, 1e-9);
  EXPECT_GE(dissipated, 0.0);
}

TEST(AdmittanceFilter, HoldsWhenTheGateIsClosed) {
  AdmittanceFilter f(AdmittanceParams{}, ReferenceTrajectory::hold({0, 0, 1}));
  for (int k = 0; k < 100; ++k) f.step({0, 0, 1.54}, 0.01);
  const Vec3 moved = f.reference().position;
  EXPECT_GT(moved.z(), 1.0);
  for (int k = 0; k < 500; ++k) {
    f.step({0.2, 0.0, 0.1}, 0.01);
    EXPECT_EQ(f.reference().position, moved);
    EXPECT_EQ(f.reference().velocity, Vec3::Zero());
    EXPECT_EQ(f.reference().acceleration, Vec3::Zero());
  }
  EXPECT_EQ(f.hold_position(), moved);
  EXPECT_FALSE(f.gate_open());
}

TEST(AdmittanceFilter, SpringPullsBackAfterRelease) {
  AdmittanceParams p;
  p.stiffness = Vec3::Constant(2.0);
  AdmittanceFilter f(p, ReferenceTrajectory::hold(Vec3::Zero()));
  for (int k = 0; k < 300; ++k) f.step({2.0, 0, 0}, 0.01);
  EXPECT_GT(f.reference().position.x(), 0.5);
  for (int k = 0; k < 3000; ++k) f.step(Vec3::Zero(), 0.01);
  EXPECT_NEAR(f.reference().position.x(), 0.0, 1e-3);
}

TEST(ForceSensors, EvenSplitWithoutNoise) {
  ForceSensorPair s(0.0, 1);
  const MeasuredWrench m = s.measure({2.0, 0, 0});
  EXPECT_EQ(m.channel[0], Vec3(1.0, 0, 0));
  EXPECT_EQ(m.channel[1], Vec3(1.0, 0, 0));
  EXPECT_EQ(m.total, Vec3(2.0, 0, 0));
  const Vec3 odd(0.3, -1.7, 2.9);
  EXPECT_EQ(s.measure(odd).total, odd);
}

TEST(ForceSensors, NoiseIsZeroMean) {
  const double sigma = 0.1;
  ForceSensorPair s(sigma, 42);
  const int n = 100000;
  Vec3 sum = Vec3::Zero();
  for (int k = 0; k < n; ++k) sum += s.measure({1.0, 2.0, 3.0}).total;
  const Vec3 mean = sum / n;
  // Two channels add, so the total has standard deviation sqrt(2) sigma.
  const double tol = 3.0 * std::sqrt(2.0) * sigma / std::sqrt(static_cast<double>(n));
  EXPECT_NEAR(mean.x(), 1.0, tol);
  EXPECT_NEAR(mean.y(), 2.0, tol);
  EXPECT_NEAR(mean.z(), 3.0, tol);
}

TEST(ForceSensors, SeededNoiseIsReproducible) {
  ForceSensorPair a(0.1, 7), b(0.1, 7);
  for (int k = 0; k < 100; ++k) EXPECT_EQ(a.measure(Vec3::Zero()).total, b.measure(Vec3::Zero()).total);
}

TEST(AdmittanceParams, Validation) {
  AdmittanceParams p;
  EXPECT_NO_THROW(p.validate());
  p.mass.x() = 0.0;
  EXPECT_THROW(p.validate(), ScenarioError);
  p = AdmittanceParams{};
  p.stiffness.y() = -1.0;
  EXPECT_THROW(p.validate(), ScenarioError);
}
