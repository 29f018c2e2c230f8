#pragma once

/**
 * @file position_control.hpp
 * @brief Outer loop: adaptive backstepping from a reference trajectory to
 *        total thrust and desired roll/pitch.
 *
 * Per axis:
 *   E_p = X_d - X,     X_temp = K_p E_p + X_d_dot,     E_v = X_temp - v
 *   U_v = -E_p + K_v_hat E_v + K_p E_p_dot + X_d_ddot - Q_p
 *   K_v_hat_dot = B E_v^2
 * and U_v is turned into thrust magnitude and roll/pitch set-points.
 */

#include "duolift/dynamics.hpp"
#include "duolift/errors.hpp"
#include "duolift/types.hpp"

#include <algorithm>
#include <cmath>

namespace duolift {

struct PositionGains {
  Vec3 kp{18.0, 9.0, 18.0};     // 1/s
  Vec3 beta{0.4, 0.4, 0.4};     // adaptation rates

  void validate() const {
    if (!kp.allFinite() || !beta.allFinite() || (kp.array() <= 0.0).any() || (beta.array() <= 0.0).any()) {
      throw ScenarioError("position gains K_p and adaptation rates must be strictly positive");
    }
  }
};

/// Adaptive gain estimate K_v_hat; only ever grows.
struct AdaptiveState {
  Vec3 kv_hat = Vec3::Ones();
  double t_last = 0.0;
};

struct PositionError {
  Vec3 position = Vec3::Zero();  // E_p, m
  Vec3 velocity = Vec3::Zero();  // E_v, m/s
};

inline PositionError position_errors(const ReferenceTrajectory& ref, const SimState& s, const PositionGains& g) {
  PositionError e;
  e.position = ref.position - s.position();
  e.velocity = g.kp.cwiseProduct(e.position) + ref.velocity - s.velocity();
  return e;
}

/// E_p_dot = X_d_dot - v, evaluated analytically.
inline Vec3 position_error_rate(const ReferenceTrajectory& ref, const SimState& s) {
  return ref.velocity - s.velocity();
}

/// Explicit Euler on K_v_hat_dot = B E_v^2. Axes in `frozen` keep their value.
inline AdaptiveState update_adaptation(const AdaptiveState& a, const PositionError& e, const PositionGains& g,
                                       double dt, const AxisMask& frozen = AxisMask::Constant(false)) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("adaptation step must be positive");
  }
  AdaptiveState next = a;
  const Vec3 increment = dt * g.beta.cwiseProduct(e.velocity.cwiseAbs2());
  for (int i = 0; i < 3; ++i) {
    if (!frozen[i]) {
      next.kv_hat[i] += increment[i];
    }
  }
  next.t_last = a.t_last + dt;
  return next;
}

inline Vec3 virtual_controls(const PositionError& e, const Vec3& error_rate, const AdaptiveState& a,
                             const ReferenceTrajectory& ref, const SimState& s, const SystemParams& p,
                             const PositionGains& g) {
  return -e.position + a.kv_hat.cwiseProduct(e.velocity) + g.kp.cwiseProduct(error_rate) + ref.acceleration -
         translational_drift(s.velocity(), p);
}

/// Limits on the virtual control applied before thrust/attitude extraction.
struct VirtualControlLimits {
  bool enabled = true;
  double max_tilt = 0.5;            // rad; lateral |u_v| <= g tan(max_tilt)
  double max_climb_accel = 5.0;     // m/s^2
  double max_descent_accel = 4.905; // m/s^2, keeps u_vz + g > 0 when < g
};

/// Saturated U_v and the axes that hit a limit.
struct SaturatedControl {
  Vec3 value = Vec3::Zero();
  AxisMask saturated = AxisMask::Constant(false);
};

inline SaturatedControl saturate(const Vec3& uv, const VirtualControlLimits& lim, double gravity) {
  SaturatedControl out{uv, AxisMask::Constant(false)};
  if (!lim.enabled) {
    return out;
  }
  const double lateral = gravity * std::tan(lim.max_tilt);
  const Vec3 lo{-lateral, -lateral, -lim.max_descent_accel};
  const Vec3 hi{lateral, lateral, lim.max_climb_accel};
  for (int i = 0; i < 3; ++i) {
    out.value[i] = std::clamp(uv[i], lo[i], hi[i]);
    out.saturated[i] = out.value[i] != uv[i];
  }
  return out;
}

struct ThrustAttitude {
  double thrust = 0.0;  // N
  double roll = 0.0;    // rad
  double pitch = 0.0;   // rad
};

/**
 * Thrust magnitude and roll/pitch set-points realising U_v for a given yaw:
 *
 *   U_th  = m_s sqrt(u_x^2 + u_y^2 + (u_z + g)^2)
 *   theta = atan((u_x cos(psi) + u_y sin(psi)) / (u_z + g))
 *   phi   = atan(cos(theta)(u_x sin(psi) - u_y cos(psi)) / (u_z + g))
 *
 * Throws ThrustSingularityError when u_z + g <= 0.
 */
inline ThrustAttitude extract_thrust_attitude(const Vec3& uv, double yaw_d, const SystemParams& p) {
  const double vertical = uv.z() + p.gravity;
  if (!(vertical > 0.0)) {
    throw ThrustSingularityError(vertical);
  }
  const double c = std::cos(yaw_d), s = std::sin(yaw_d);
  ThrustAttitude out;
  out.thrust = p.total_mass() * std::sqrt(uv.x() * uv.x() + uv.y() * uv.y() + vertical * vertical);
  out.pitch = std::atan((uv.x() * c + uv.y() * s) / vertical);
  out.roll = std::atan(std::cos(out.pitch) * (uv.x() * s - uv.y() * c) / vertical);
  return out;
}

/// Per-axis V_pv = E_p^2/2 + E_v^2/2 + (K_v - K_v_hat)^2 / (2 beta), with
/// `kv_reference` standing in for the unknown true K_v.
inline Vec3 position_lyapunov(const PositionError& e, const Vec3& kv_hat, const PositionGains& g,
                              const Vec3& kv_reference) {
  const Vec3 tilde = kv_reference - kv_hat;
  return 0.5 * e.position.cwiseAbs2() + 0.5 * e.velocity.cwiseAbs2() +
         0.5 * tilde.cwiseAbs2().cwiseQuotient(g.beta);
}

struct PositionControlConfig {
  PositionGains gains;
  VirtualControlLimits limits;
  Vec3 kv_initial = Vec3::Ones();
  Vec3 kv_reference = Vec3::Ones();
  bool anti_windup = true;  // freeze adaptation on saturated axes
};

/// Everything one outer-loop update produced, for logging.
struct PositionControlOutput {
  ThrustAttitude command;
  PositionError error;
  Vec3 error_rate = Vec3::Zero();
  Vec3 virtual_control = Vec3::Zero();  // after saturation
  Vec3 kv_hat = Vec3::Ones();           // estimate used for this update
  AxisMask saturated = AxisMask::Constant(false);
  bool singular = false;                // command held from the previous update
};

/**
 * Stateful outer loop. The adaptive estimate is single-writer: only update()
 * changes it.
 */
class PositionController {
 public:
  PositionController(PositionControlConfig config, SystemParams params)
      : config_(std::move(config)), params_(std::move(params)) {
    config_.gains.validate();
    if (!config_.kv_initial.allFinite()) {
      throw ScenarioError("initial adaptive gain must be finite");
    }
    adaptive_.kv_hat = config_.kv_initial;
    last_ = {params_.weight(), 0.0, 0.0};
  }

  /// One outer-loop step of length `dt`. With `adapt` false the estimate is
  /// left untouched.
  PositionControlOutput update(const ReferenceTrajectory& ref, const SimState& s, double dt, bool adapt = true) {
    PositionControlOutput out;
    out.error = position_errors(ref, s, config_.gains);
    out.error_rate = position_error_rate(ref, s);
    out.kv_hat = adaptive_.kv_hat;

    const Vec3 raw = virtual_controls(out.error, out.error_rate, adaptive_, ref, s, params_, config_.gains);
    const SaturatedControl sat = saturate(raw, config_.limits, params_.gravity);
    out.virtual_control = sat.value;
    out.saturated = sat.saturated;

    try {
      last_ = extract_thrust_attitude(sat.value, ref.yaw, params_);
    } catch (const ThrustSingularityError&) {
      out.singular = true;
    }
    out.command = last_;

    if (adapt) {
      const AxisMask frozen = config_.anti_windup ? sat.saturated : AxisMask::Constant(false);
      adaptive_ = update_adaptation(adaptive_, out.error, config_.gains, dt, frozen);
    }
    return out;
  }

  const AdaptiveState& adaptive_state() const { return adaptive_; }
  const PositionControlConfig& config() const { return config_; }
  const ThrustAttitude& last_command() const { return last_; }

 private:
  PositionControlConfig config_;
  SystemParams params_;
  AdaptiveState adaptive_;
  ThrustAttitude last_;
};

}  // namespace duolift
