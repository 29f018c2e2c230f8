#pragma once

/**
 * @file admittance.hpp
 * @brief Human guidance: force gate, virtual mass-damper-spring reference
 *        generator and the simulated force-torque sensor pair.
 *
 * The reference R_r is displaced from the hold position R_d along the
 * applied force:
 *
 *   M R_r_ddot + C R_r_dot + K (R_r - R_d) = F_h
 */

#include "duolift/errors.hpp"
#include "duolift/types.hpp"

#include <array>
#include <cstdint>
#include <random>

namespace duolift {

struct AdmittanceParams {
  Vec3 mass{0.95, 0.95, 0.95};        // kg
  Vec3 damping{1.54, 1.54, 1.54};     // N s/m
  Vec3 stiffness{0.0, 0.0, 0.0};      // N/m
  double force_threshold = 0.5;       // N
  double release_hysteresis = 0.1;    // fraction of the threshold

  void validate() const {
    if (!mass.allFinite() || !damping.allFinite() || !stiffness.allFinite() || (mass.array() <= 0.0).any() ||
        (damping.array() <= 0.0).any() || (stiffness.array() < 0.0).any()) {
      throw ScenarioError("admittance needs M > 0, C > 0, K >= 0");
    }
    if (!(force_threshold >= 0.0) || !(release_hysteresis >= 0.0 && release_hysteresis < 1.0)) {
      throw ScenarioError("force threshold must be >= 0 and hysteresis in [0, 1)");
    }
  }
};

/// Passes F when ||F|| exceeds the threshold, zero otherwise (no memory).
inline Vec3 gate(const Vec3& force, const AdmittanceParams& params) {
  return force.norm() > params.force_threshold ? force : Vec3::Zero();
}

/// Threshold gate with release hysteresis: opens above the threshold, closes
/// once the force drops to (1 - hysteresis) times it.
class ForceGate {
 public:
  explicit ForceGate(const AdmittanceParams& params)
      : open_level_(params.force_threshold),
        close_level_((1.0 - params.release_hysteresis) * params.force_threshold) {}

  Vec3 apply(const Vec3& force) {
    const double n = force.norm();
    if (open_) {
      open_ = n > close_level_;
    } else {
      open_ = n > open_level_;
    }
    return open_ ? force : Vec3::Zero();
  }

  bool is_open() const { return open_; }

 private:
  double open_level_;
  double close_level_;
  bool open_ = false;
};

/// One semi-implicit Euler step of the mass-damper-spring around `hold`.
inline ReferenceTrajectory step_admittance(const ReferenceTrajectory& ref, const Vec3& force, const Vec3& hold,
                                           const AdmittanceParams& params, double dt) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("admittance step must be positive");
  }
  ReferenceTrajectory next = ref;
  next.acceleration = (force - params.damping.cwiseProduct(ref.velocity) -
                       params.stiffness.cwiseProduct(ref.position - hold))
                          .cwiseQuotient(params.mass);
  next.velocity = ref.velocity + dt * next.acceleration;
  next.position = ref.position + dt * next.velocity;
  return next;
}

/**
 * Reference generator with gating. With the gate closed and no stiffness the
 * reference stops and the hold position follows it; with stiffness the
 * spring pulls the reference back toward the hold position.
 */
class AdmittanceFilter {
 public:
  AdmittanceFilter(AdmittanceParams params, const ReferenceTrajectory& initial)
      : params_(std::move(params)), gate_(params_), reference_(initial), hold_(initial.position) {
    params_.validate();
  }

  const ReferenceTrajectory& step(const Vec3& measured_force, double dt) {
    gated_ = gate_.apply(measured_force);
    if (!gate_.is_open() && params_.stiffness.isZero(0.0)) {
      reference_.velocity.setZero();
      reference_.acceleration.setZero();
      hold_ = reference_.position;
    } else {
      reference_ = step_admittance(reference_, gated_, hold_, params_, dt);
    }
    return reference_;
  }

  const ReferenceTrajectory& reference() const { return reference_; }
  const Vec3& hold_position() const { return hold_; }
  const Vec3& gated_force() const { return gated_; }
  bool gate_open() const { return gate_.is_open(); }
  const AdmittanceParams& params() const { return params_; }

 private:
  AdmittanceParams params_;
  ForceGate gate_;
  ReferenceTrajectory reference_;
  Vec3 hold_;
  Vec3 gated_ = Vec3::Zero();
};

struct MeasuredWrench {
  std::array<Vec3, 2> channel{Vec3::Zero(), Vec3::Zero()};
  Vec3 total = Vec3::Zero();
};

/// Two force-torque sensors at the quadrotor/payload joints; each sees half
/// of the applied force plus independent zero-mean Gaussian noise.
class ForceSensorPair {
 public:
  ForceSensorPair(double noise_std, std::uint64_t seed) : noise_std_(noise_std), rng_(seed) {
    if (!(noise_std >= 0.0)) {
      throw ScenarioError("sensor noise standard deviation must be non-negative");
    }
  }

  MeasuredWrench measure(const Vec3& applied) {
    MeasuredWrench m;
    for (auto& ch : m.channel) {
      ch = 0.5 * applied;
      if (noise_std_ > 0.0) {
        for (int i = 0; i < 3; ++i) {
          ch[i] += noise_std_ * unit_(rng_);
        }
      }
    }
    m.total = m.channel[0] + m.channel[1];
    return m;
  }

 private:
  double noise_std_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> unit_{0.0, 1.0};
};

}  // namespace duolift
