#pragma once

/**
 * @file attitude_control.hpp
 * @brief Inner loop: fast nonsingular terminal sliding-mode attitude control.
 *
 * Surface, per axis:   S = E_dot + zeta E + gamma |E|^eps sgn(E)
 * Control, per axis:   U_m = I [ Phi_d_ddot - Q_Phi + (zeta + gamma eps |E|^(eps-1)) E_dot
 *                                + kappa1 S + kappa2 sgn*(S) ]
 * which makes S_dot = -kappa1 S - kappa2 sgn*(S) on the nominal plant.
 */

#include "duolift/dynamics.hpp"
#include "duolift/errors.hpp"
#include "duolift/types.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace duolift {

enum class SwitchingMode {
  kSign,           // exact sgn(S)
  kBoundaryLayer,  // clamp(S / width, -1, 1)
};

struct AttitudeGains {
  Vec3 zeta{22.0, 30.0, 22.0};
  double gamma = 5.0;
  double epsilon = 2.0;
  double kappa1 = 85.0;
  double kappa2 = 55.0;
  SwitchingMode switching = SwitchingMode::kSign;
  double boundary_layer = 0.01;

  void validate() const {
    if (!zeta.allFinite() || (zeta.array() <= 0.0).any() || !(gamma > 0.0) || !(epsilon >= 1.0) ||
        !(kappa1 > 0.0) || !(kappa2 > 0.0) || !(boundary_layer > 0.0)) {
      throw ScenarioError("attitude gains need zeta, gamma, kappa1, kappa2 > 0 and epsilon >= 1");
    }
  }
};

/// Desired attitude with its first and second time derivatives.
struct AttitudeReference {
  Vec3 angle = Vec3::Zero();
  Vec3 rate = Vec3::Zero();
  Vec3 accel = Vec3::Zero();
};

struct SlidingState {
  Vec3 error = Vec3::Zero();       // E_Phi
  Vec3 error_rate = Vec3::Zero();  // E_Phi_dot
  Vec3 surface = Vec3::Zero();     // S_Phi
};

/// |E|^eps sgn(E), elementwise.
inline Vec3 signed_power(const Vec3& e, double eps) {
  return e.unaryExpr([eps](double v) { return std::pow(std::abs(v), eps) * sign(v); });
}

inline Vec3 sliding_surface(const Vec3& error, const Vec3& error_rate, const AttitudeGains& g) {
  return error_rate + g.zeta.cwiseProduct(error) + g.gamma * signed_power(error, g.epsilon);
}

inline double switching(double s, const AttitudeGains& g) {
  if (g.switching == SwitchingMode::kBoundaryLayer) {
    return std::clamp(s / g.boundary_layer, -1.0, 1.0);
  }
  return sign(s);
}

/// zeta + gamma eps |E|^(eps - 1): the surface's sensitivity to E.
inline Vec3 surface_slope(const Vec3& error, const AttitudeGains& g) {
  const double eps = g.epsilon;
  return g.zeta + error.unaryExpr([&](double v) { return g.gamma * eps * std::pow(std::abs(v), eps - 1.0); });
}

inline SlidingState sliding_state(const AttitudeReference& ref, const SimState& s, const AttitudeGains& g) {
  SlidingState st;
  st.error = ref.angle - s.attitude();
  st.error_rate = ref.rate - s.rates();
  st.surface = sliding_surface(st.error, st.error_rate, g);
  return st;
}

struct AttitudeControlOutput {
  Vec3 moments = Vec3::Zero();
  SlidingState sliding;
};

inline AttitudeControlOutput attitude_control(const AttitudeReference& ref, const SimState& s,
                                              const AttitudeGains& g, const SystemParams& p) {
  AttitudeControlOutput out;
  out.sliding = sliding_state(ref, s, g);
  const Vec3 drift = attitude_drift(s.rates(), p);
  const Vec3 slope = surface_slope(out.sliding.error, g);
  for (int i = 0; i < 3; ++i) {
    const double si = out.sliding.surface[i];
    out.moments[i] = p.inertia[i] * (ref.accel[i] - drift[i] + slope[i] * out.sliding.error_rate[i] +
                                     g.kappa1 * si + g.kappa2 * switching(si, g));
  }
  return out;
}

/// S_dot given the plant's state derivative (eta_dot) at the same instant.
inline Vec3 sliding_surface_rate(const AttitudeReference& ref, const SimState& s, const StateVector& eta_dot,
                                 const AttitudeGains& g) {
  const Vec3 angular_accel{eta_dot[kRollRate], eta_dot[kPitchRate], eta_dot[kYawRate]};
  const Vec3 error = ref.angle - s.attitude();
  const Vec3 error_rate = ref.rate - s.rates();
  return (ref.accel - angular_accel) + surface_slope(error, g).cwiseProduct(error_rate);
}

/// V_Phi = S^2 / 2 per axis.
inline Vec3 attitude_lyapunov(const Vec3& surface) { return 0.5 * surface.cwiseAbs2(); }

/**
 * Upper bound on the time to reach S = 0 from V_Phi(0):
 *   t_r <= ln((2 kappa1 sqrt(V0) + alpha) / alpha) / kappa1,  alpha = sqrt(2) kappa2.
 */
inline Vec3 reaching_time_bound(const Vec3& v0, const AttitudeGains& g) {
  if ((v0.array() < 0.0).any()) {
    throw std::invalid_argument("initial Lyapunov value must be non-negative");
  }
  const double alpha = std::numbers::sqrt2 * g.kappa2;
  return v0.unaryExpr(
      [&](double v) { return std::log(std::abs((2.0 * g.kappa1 * std::sqrt(v) + alpha) / alpha)) / g.kappa1; });
}

/**
 * Critically damped second-order low-pass differentiator producing the
 * desired attitude and its first two derivatives from a piecewise-constant
 * set-point.
 */
class DesiredAttitudeFilter {
 public:
  explicit DesiredAttitudeFilter(double cutoff_hz = 20.0, double damping = 1.0)
      : omega_(2.0 * std::numbers::pi * cutoff_hz), damping_(damping) {
    if (!(cutoff_hz > 0.0) || !(damping > 0.0)) {
      throw ScenarioError("filter cutoff and damping must be positive");
    }
  }

  void reset(const Vec3& angle) {
    state_ = AttitudeReference{};
    state_.angle = angle;
  }

  /// Semi-implicit Euler step toward `target`.
  const AttitudeReference& update(const Vec3& target, double dt) {
    const Vec3 accel = acceleration(target, state_.angle, state_.rate);
    state_.rate += dt * accel;
    state_.angle += dt * state_.rate;
    state_.accel = acceleration(target, state_.angle, state_.rate);
    return state_;
  }

  const AttitudeReference& output() const { return state_; }

 private:
  Vec3 acceleration(const Vec3& target, const Vec3& angle, const Vec3& rate) const {
    return omega_ * omega_ * (target - angle) - 2.0 * damping_ * omega_ * rate;
  }

  double omega_;
  double damping_;
  AttitudeReference state_;
};

}  // namespace duolift
