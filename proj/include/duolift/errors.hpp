#pragma once

#include "duolift/types.hpp"

#include <stdexcept>
#include <string>

namespace duolift {

/// Non-finite or otherwise corrupt numbers reached the plant.
class SimulationIntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The state left the region where the small-angle model is valid.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(const std::string& what, SimState state)
      : std::runtime_error(what), state_(std::move(state)) {}

  const SimState& state() const { return state_; }

 private:
  SimState state_;
};

/// Lambda * Gamma^-2 * Lambda^T is singular, so no minimum-effort split exists.
class AllocationInfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A rotor would need negative thrust.
class ActuatorSaturationError : public std::runtime_error {
 public:
  ActuatorSaturationError(int quad, int rotor, double thrust)
      : std::runtime_error("rotor " + std::to_string(rotor + 1) + " of quadrotor " +
                           std::to_string(quad + 1) + " needs negative thrust (" +
                           std::to_string(thrust) + " N)"),
        quad_(quad),
        rotor_(rotor),
        thrust_(thrust) {}

  int quad() const { return quad_; }
  int rotor() const { return rotor_; }
  double thrust() const { return thrust_; }

 private:
  int quad_;
  int rotor_;
  double thrust_;
};

/// The vertical virtual control cannot be produced with upward thrust.
class ThrustSingularityError : public std::runtime_error {
 public:
  explicit ThrustSingularityError(double vertical)
      : std::runtime_error("thrust singularity: u_vz + g = " + std::to_string(vertical)),
        vertical_(vertical) {}

  double vertical() const { return vertical_; }

 private:
  double vertical_;
};

/// Invalid scenario file or parameter set.
class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace duolift
