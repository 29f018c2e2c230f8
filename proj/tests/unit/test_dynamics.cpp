#include "duolift/dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace duolift;

namespace {

SystemParams table_params() { return SystemParams{}; }

WrenchCommand hover_wrench(const SystemParams& p) { return {p.weight(), Vec3::Zero()}; }

SimState random_state(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  SimState s;
  for (int i = 0; i < 12; ++i) s.eta[i] = u(rng);
  s.eta[kRoll] *= 0.5;
  s.eta[kPitch] *= 0.5;
  return s;
}

}  // namespace

TEST(Dynamics, TableMassesAreConsistent) {
  const SystemParams p = table_params();
  EXPECT_DOUBLE_EQ(p.total_mass(), 3.25);
  EXPECT_NEAR(p.weight(), 31.8825, 1e-12);
  EXPECT_NO_THROW(validate(p));
}

TEST(Dynamics, HoverIsAnEquilibrium) {
  const SystemParams p = table_params();
  const SimState s = SimState::at_rest({0.3, -0.2, 7.0});
  const StateVector d = state_derivative(s, hover_wrench(p), ExternalForce{}, p);
  EXPECT_EQ(d, StateVector::Zero());
}

TEST(Dynamics, FreeFallOnlyAcceleratesDownward) {
  const SystemParams p = table_params();
  const StateVector d = state_derivative(SimState{}, WrenchCommand{}, ExternalForce{}, p);
  for (int i = 0; i < 12; ++i) {
    EXPECT_EQ(d[i], i == kVz ? -9.81 : 0.0) << "row " << i;
  }
}

TEST(Dynamics, HumanForceActsAtTheCentreOfMass) {
  const SystemParams p = table_params();
  const SimState s = SimState::at_rest({0, 0, 1});
  const StateVector d = state_derivative(s, hover_wrench(p), ExternalForce{{1.0, 0.0, 0.0}}, p);
  EXPECT_NEAR(d[kVx], 1.0 / 3.25, 1e-15);
  EXPECT_NEAR(d[kVy], 0.0, 1e-15);
  EXPECT_NEAR(d[kVz], 0.0, 1e-15);
  EXPECT_EQ(d[kRollRate], 0.0);
  EXPECT_EQ(d[kPitchRate], 0.0);
  EXPECT_EQ(d[kYawRate], 0.0);
}

TEST(Dynamics, NonFiniteInputIsAHardFault) {
  const SystemParams p = table_params();
  SimState s;
  s.eta[kVx] = std::nan("");
  EXPECT_THROW(state_derivative(s, WrenchCommand{}, ExternalForce{}, p), SimulationIntegrityError);
  EXPECT_THROW(state_derivative(SimState{}, WrenchCommand{std::numeric_limits<double>::infinity(), Vec3::Zero()},
                                ExternalForce{}, p),
               SimulationIntegrityError);
}

TEST(Dynamics, StepRejectsOutOfRangeDt) {
  const SystemParams p = table_params();
  EXPECT_THROW(step_rk4(SimState{}, WrenchCommand{}, ExternalForce{}, p, 0.0), std::invalid_argument);
  EXPECT_THROW(step_rk4(SimState{}, WrenchCommand{}, ExternalForce{}, p, -1e-3), std::invalid_argument);
  EXPECT_THROW(step_rk4(SimState{}, WrenchCommand{}, ExternalForce{}, p, 0.02), std::invalid_argument);
  EXPECT_NO_THROW(step_rk4(SimState{}, WrenchCommand{}, ExternalForce{}, p, 0.01));
}

TEST(Dynamics, HoverStepLeavesStateUnchanged) {
  const SystemParams p = table_params();
  SimState s = SimState::at_rest({1.0, 2.0, 3.0});
  const StateVector start = s.eta;
  for (double dt : {1e-4, 1e-3, 1e-2}) {
    const SimState next = step_rk4(s, hover_wrench(p), ExternalForce{}, p, dt);
    EXPECT_EQ(next.eta, start);
    EXPECT_DOUBLE_EQ(next.t, s.t + dt);
  }
}

TEST(Dynamics, FreeFallWithoutDragMatchesConstantAcceleration) {
  SystemParams p = table_params();
  p.linear_drag = 0.0;
  SimState s;
  for (int k = 0; k < 1000; ++k) s = step_rk4(s, WrenchCommand{}, ExternalForce{}, p, 0.001);
  EXPECT_NEAR(s.eta[kVz], -9.81, 1e-9);
  EXPECT_NEAR(s.eta[kZ], -0.5 * 9.81, 1e-9);
}

TEST(Dynamics, FreeFallWithDragMatchesExponentialSolution) {
  const SystemParams p = table_params();
  SimState s;
  for (int k = 0; k < 1000; ++k) s = step_rk4(s, WrenchCommand{}, ExternalForce{}, p, 0.001);
  // v(t) = -(g m / k)(1 - exp(-k t / m)) at t = 1 s
  EXPECT_NEAR(s.eta[kVz], -9.801703911273737, 1e-9);
}

TEST(Dynamics, TiltBeyondBoundDiverges) {
  const SystemParams p = table_params();
  SimState s = SimState::at_rest({0, 0, 1});
  s.eta[kRoll] = 1.04;
  s.eta[kRollRate] = 5.0;
  try {
    step_rk4(s, hover_wrench(p), ExternalForce{}, p, 0.01);
    FAIL() << "expected divergence";
  } catch (const DivergedError& e) {
    EXPECT_GT(std::abs(e.state().eta[kRoll]), std::numbers::pi / 3.0);
  }
}

TEST(Dynamics, EquilibriumOnlyAtHover) {
  const SystemParams p = table_params();
  std::mt19937_64 rng(3);
  const SimState hover = SimState::at_rest({0, 0, 2});
  EXPECT_TRUE(state_derivative(hover, hover_wrench(p), ExternalForce{}, p).isZero(1e-12));

  // Perturbing any single hover condition breaks the equilibrium.
  std::uniform_real_distribution<double> u(0.01, 0.5);
  for (int trial = 0; trial < 50; ++trial) {
    const double d = u(rng);
    for (int which = 0; which < 6; ++which) {
      SimState s = hover;
      WrenchCommand w = hover_wrench(p);
      Vec3 f = Vec3::Zero();
      switch (which) {
        case 0: s.eta[kRoll] = d; break;
        case 1: s.eta[kPitchRate] = d; break;
        case 2: s.eta[kVx] = d; break;
        case 3: w.thrust += d; break;
        case 4: w.moments.z() = d; break;
        case 5: f.y() = d; break;
      }
      EXPECT_FALSE(state_derivative(s, w, ExternalForce{f}, p).isZero(1e-12)) << "case " << which;
    }
  }
}

TEST(Dynamics, DragDissipatesKineticEnergy) {
  SystemParams p = table_params();
  p.gravity = 0.0;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    SimState s = random_state(rng);
    s.eta[kRoll] = s.eta[kPitch] = 0.0;
    auto energy = [&](const SimState& x) {
      return 0.5 * p.total_mass() * x.velocity().squaredNorm() +
             0.5 * p.inertia.dot(x.rates().cwiseAbs2());
    };
    double e = energy(s);
    for (int k = 0; k < 500; ++k) {
      s = step_rk4(s, WrenchCommand{}, ExternalForce{}, p, 0.001);
      const double next = energy(s);
      EXPECT_LE(next, e * (1.0 + 1e-12));
      e = next;
    }
  }
}

TEST(Dynamics, ComponentWrenchesAtHover) {
  const SystemParams p = table_params();
  const ComponentWrenches w = component_wrenches(SimState::at_rest({0, 0, 1}), hover_wrench(p), p);
  const Vec3 sum = w.force[0] + w.force[1];
  EXPECT_NEAR(sum.z(), 0.45 * 9.81, 1e-12);
  EXPECT_NEAR(sum.z(), 4.4145, 1e-12);
  EXPECT_NEAR(sum.x(), 0.0, 1e-12);
  EXPECT_NEAR(sum.y(), 0.0, 1e-12);
  EXPECT_TRUE(w.force[0].isApprox(w.force[1], 1e-15));
  EXPECT_TRUE(w.torque[0].isApprox(w.torque[1], 1e-15));
}

TEST(Dynamics, ComponentWrenchesVanishInFreeFall) {
  const SystemParams p = table_params();
  const ComponentWrenches w = component_wrenches(SimState::at_rest({0, 0, 5}), WrenchCommand{}, p);
  EXPECT_TRUE(w.force[0].isZero(1e-12));
  EXPECT_TRUE(w.force[1].isZero(1e-12));
}

TEST(Dynamics, ComponentWrenchesComposeToTheCompositeEquation) {
  const SystemParams p = table_params();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const SimState s = random_state(rng);
    const WrenchCommand cmd{p.weight() * (1.0 + 0.3 * u(rng)), Vec3(u(rng), u(rng), u(rng))};
    const ComponentWrenches w = component_wrenches(s, cmd, p);
    const StateVector d = state_derivative(s, cmd, ExternalForce{}, p);
    const Vec3 a{d[kVx], d[kVy], d[kVz]};
    // Payload: m_p a = F_1 + F_2 - m_p g e_z
    const Vec3 payload = w.force[0] + w.force[1] - Vec3(0, 0, p.payload_mass * p.gravity);
    EXPECT_TRUE((payload - p.payload_mass * a).isZero(1e-9)) << trial;
  }
}
