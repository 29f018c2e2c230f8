#pragma once

/**
 * @file dynamics.hpp
 * @brief Composite two-quadrotor/payload plant.
 *
 * Translational rows (mass m_s, scalar drag k_dl, thrust direction b):
 *
 *   v_dot = (-k_dl v + b(roll, pitch, yaw) U_th + F_h) / m_s - g e_z
 *
 * with b = (s_th c_ps + s_ph c_th s_ps,  s_th s_ps - s_ph c_th c_ps,  c_ph c_th).
 * Rotational rows use Euler rates as body rates, gyroscopic coupling and
 * scalar rotational drag k_dr.  The human force acts at the composite CoM
 * and induces no torque.
 */

#include "duolift/errors.hpp"
#include "duolift/types.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace duolift {

inline void validate(const SystemParams& p) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(p.quad_mass) || !positive(p.payload_mass)) {
    throw ScenarioError("masses must be strictly positive");
  }
  if (!positive(p.arm_length) || !(std::isfinite(p.payload_length) && p.payload_length >= 0.0)) {
    throw ScenarioError("arm length must be positive and payload length non-negative");
  }
  if (!(std::isfinite(p.gravity) && p.gravity >= 0.0)) {
    throw ScenarioError("gravity must be finite and non-negative");
  }
  if (!positive(p.inertia.x()) || !positive(p.inertia.y()) || !positive(p.inertia.z())) {
    throw ScenarioError("inertia entries must be strictly positive");
  }
  if (!positive(p.linear_drag) || !positive(p.angular_drag)) {
    throw ScenarioError("drag coefficients must be strictly positive");
  }
  if (!p.attach_offset_1.allFinite() || !(p.attach_offset_1 + p.attach_offset_2).isZero(1e-12)) {
    throw ScenarioError("attachment offsets must be finite and mirror each other (rho_1 = -rho_2)");
  }
  if (!(p.tilt_safety_bound > 0.0 && p.tilt_safety_bound < std::numbers::pi / 2.0)) {
    throw ScenarioError("tilt safety bound must lie in (0, pi/2)");
  }
}

/// Direction of the total thrust in the world frame, as used by the plant.
inline Vec3 thrust_direction(double roll, double pitch, double yaw) {
  const double sph = std::sin(roll), cph = std::cos(roll);
  const double sth = std::sin(pitch), cth = std::cos(pitch);
  const double sps = std::sin(yaw), cps = std::cos(yaw);
  return {sth * cps + sph * cth * sps, sth * sps - sph * cth * cps, cph * cth};
}

/// Drag and gyroscopic part of the angular acceleration (Q_Phi), per axis.
inline Vec3 attitude_drift(const Vec3& rates, const SystemParams& p) {
  const Vec3& I = p.inertia;
  const double wx = rates.x(), wy = rates.y(), wz = rates.z();
  return {(-p.angular_drag * wx + (I.y() - I.z()) * wy * wz) / I.x(),
          (-p.angular_drag * wy + (I.z() - I.x()) * wx * wz) / I.y(),
          (-p.angular_drag * wz + (I.x() - I.y()) * wx * wy) / I.z()};
}

/// Drag part of the translational acceleration (Q_p).
inline Vec3 translational_drift(const Vec3& velocity, const SystemParams& p) {
  return -p.linear_drag * velocity / p.total_mass();
}

/// eta_dot for a raw state vector; no input validation.
inline StateVector state_derivative(const StateVector& eta, const WrenchCommand& u, const Vec3& f_h,
                                    const SystemParams& p) {
  const double ms = p.total_mass();
  const Vec3 b = thrust_direction(eta[kRoll], eta[kPitch], eta[kYaw]);
  const Vec3 v{eta[kVx], eta[kVy], eta[kVz]};
  const Vec3 accel = (-p.linear_drag * v + b * u.thrust + f_h) / ms - Vec3(0.0, 0.0, p.gravity);

  const Vec3 rates{eta[kRollRate], eta[kPitchRate], eta[kYawRate]};
  const Vec3 alpha = attitude_drift(rates, p) + u.moments.cwiseQuotient(p.inertia);

  StateVector d;
  d << v.x(), accel.x(), v.y(), accel.y(), v.z(), accel.z(),  //
      rates.x(), alpha.x(), rates.y(), alpha.y(), rates.z(), alpha.z();
  return d;
}

/// Time derivative of the state under a wrench and a human force.
/// Throws SimulationIntegrityError on non-finite input.
inline StateVector state_derivative(const SimState& s, const WrenchCommand& u, const ExternalForce& f,
                                    const SystemParams& p) {
  if (!s.eta.allFinite() || !std::isfinite(s.t) || !std::isfinite(u.thrust) || !u.moments.allFinite() ||
      !f.force.allFinite()) {
    throw SimulationIntegrityError("non-finite input to state_derivative");
  }
  return state_derivative(s.eta, u, f.force, p);
}

inline bool exceeds_tilt_bound(const StateVector& eta, const SystemParams& p) {
  return std::abs(eta[kRoll]) > p.tilt_safety_bound || std::abs(eta[kPitch]) > p.tilt_safety_bound;
}

/**
 * Classical fourth-order Runge-Kutta step with the wrench and the human force
 * held constant over `dt`.
 *
 * Throws std::invalid_argument unless dt is in (0, 0.01], and DivergedError
 * (carrying the offending state) when the result is non-finite or tilted
 * beyond the safety bound.
 */
inline SimState step_rk4(const SimState& s, const WrenchCommand& u, const ExternalForce& f,
                         const SystemParams& p, double dt) {
  if (!(dt > 0.0 && dt <= 0.01)) {
    throw std::invalid_argument("integration step must lie in (0, 0.01] s");
  }
  const StateVector k1 = state_derivative(s, u, f, p);
  const StateVector k2 = state_derivative(s.eta + 0.5 * dt * k1, u, f.force, p);
  const StateVector k3 = state_derivative(s.eta + 0.5 * dt * k2, u, f.force, p);
  const StateVector k4 = state_derivative(s.eta + dt * k3, u, f.force, p);

  SimState next;
  next.t = s.t + dt;
  next.eta = s.eta + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);

  if (!next.eta.allFinite()) {
    throw DivergedError("state became non-finite", next);
  }
  if (exceeds_tilt_bound(next.eta, p)) {
    std::ostringstream msg;
    msg << "tilt safety bound exceeded at t=" << next.t << " s (roll " << next.eta[kRoll] << ", pitch "
        << next.eta[kPitch] << " rad)";
    throw DivergedError(msg.str(), next);
  }
  return next;
}

/// Forces (world frame) and torques (body frame) each quadrotor exerts on the payload.
struct ComponentWrenches {
  std::array<Vec3, 2> force{Vec3::Zero(), Vec3::Zero()};
  std::array<Vec3, 2> torque{Vec3::Zero(), Vec3::Zero()};
};

/// Per-quadrotor share of the composite command used by component_wrenches.
/// With rho_1 = -rho_2 an even split reproduces [U_th, U_m] through the
/// allocation matrix exactly.
struct QuadShare {
  double thrust = 0.0;
  Vec3 moments = Vec3::Zero();
};

inline QuadShare even_share(const WrenchCommand& u) { return {0.5 * u.thrust, 0.5 * u.moments}; }

/**
 * Interaction wrenches between the quadrotors and the payload implied by the
 * rigid connection.
 *
 * All three bodies share the composite translational acceleration.  Quadrotor
 * bodies are treated as point masses at the attachment points carrying an
 * even share of the thrust and moments; translational drag is split evenly
 * between them, so the quadrotor and payload equations sum to the composite
 * translational equation.  Diagnostic only.
 */
inline ComponentWrenches component_wrenches(const SimState& s, const WrenchCommand& u, const SystemParams& p) {
  const StateVector d = state_derivative(s, u, ExternalForce{}, p);
  const Vec3 accel{d[kVx], d[kVy], d[kVz]};
  const Vec3 b = thrust_direction(s.eta[kRoll], s.eta[kPitch], s.eta[kYaw]);
  const Vec3 gravity_force = Vec3(0.0, 0.0, p.quad_mass * p.gravity);
  const Vec3 drag_share = 0.5 * p.linear_drag * s.velocity();
  const QuadShare share = even_share(u);

  ComponentWrenches w;
  for (int i = 0; i < 2; ++i) {
    // m_q a = b F_qi - m_q g e_z - drag/2 - F_i
    w.force[i] = b * share.thrust - gravity_force - drag_share - p.quad_mass * accel;
    w.torque[i] = share.moments;
  }
  return w;
}

}  // namespace duolift
