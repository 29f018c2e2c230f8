#pragma once

/**
 * @file types.hpp
 * @brief Value types shared by the plant, the controllers and the harness.
 *
 * The composite vehicle (two quadrotors rigidly bolted to a beam payload) is
 * treated as a single rigid body.  Its state is the 12-vector
 *
 *   [x, vx, y, vy, z, vz, roll, roll_rate, pitch, pitch_rate, yaw, yaw_rate]
 *
 * in SI units, with Euler-angle rates standing in for body rates (small-angle
 * kinematics).
 */

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace duolift {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec8 = Eigen::Matrix<double, 8, 1>;
using StateVector = Eigen::Matrix<double, 12, 1>;
using AxisMask = Eigen::Array<bool, 3, 1>;

/// Indices into StateVector.
enum StateIndex : int {
  kX = 0,
  kVx = 1,
  kY = 2,
  kVy = 3,
  kZ = 4,
  kVz = 5,
  kRoll = 6,
  kRollRate = 7,
  kPitch = 8,
  kPitchRate = 9,
  kYaw = 10,
  kYawRate = 11,
};

/// Physical constants of the composite vehicle. Defaults are the published
/// two-quadrotor/beam configuration.
struct SystemParams {
  double quad_mass = 1.4;        // kg, each quadrotor
  double payload_mass = 0.45;    // kg
  double arm_length = 0.225;     // m, quadrotor arm
  double payload_length = 2.2;   // m, beam length
  double gravity = 9.81;         // m/s^2
  Vec3 inertia{3.039, 0.051, 3.072};  // kg m^2, diagonal of the composite inertia
  double linear_drag = 55e-4;    // N s/m
  double angular_drag = 55e-4;   // N m s
  // Attachment points of the quadrotors relative to the payload CoM (body
  // frame). The beam lies along body y.
  Vec3 attach_offset_1{0.0, 1.1, 0.0};
  Vec3 attach_offset_2{0.0, -1.1, 0.0};
  // |roll|, |pitch| beyond this aborts a run: the small-angle model is no
  // longer meaningful there.
  double tilt_safety_bound = std::numbers::pi / 3.0;

  double total_mass() const { return 2.0 * quad_mass + payload_mass; }
  double weight() const { return total_mass() * gravity; }

  /// Attachment offset of quadrotor `i` (0 or 1).
  const Vec3& attach_offset(int i) const { return i == 0 ? attach_offset_1 : attach_offset_2; }

  /// Places the quadrotors at the beam ends, (0, +-l_p/2, 0).
  void set_symmetric_attachments() {
    attach_offset_1 = Vec3(0.0, 0.5 * payload_length, 0.0);
    attach_offset_2 = -attach_offset_1;
  }
};

/// Simulation clock plus the 12-dimensional state.
struct SimState {
  double t = 0.0;
  StateVector eta = StateVector::Zero();

  Vec3 position() const { return {eta[kX], eta[kY], eta[kZ]}; }
  Vec3 velocity() const { return {eta[kVx], eta[kVy], eta[kVz]}; }
  Vec3 attitude() const { return {eta[kRoll], eta[kPitch], eta[kYaw]}; }
  Vec3 rates() const { return {eta[kRollRate], eta[kPitchRate], eta[kYawRate]}; }

  void set_position(const Vec3& r) {
    eta[kX] = r.x();
    eta[kY] = r.y();
    eta[kZ] = r.z();
  }
  void set_velocity(const Vec3& v) {
    eta[kVx] = v.x();
    eta[kVy] = v.y();
    eta[kVz] = v.z();
  }
  void set_attitude(const Vec3& a) {
    eta[kRoll] = a.x();
    eta[kPitch] = a.y();
    eta[kYaw] = a.z();
  }
  void set_rates(const Vec3& w) {
    eta[kRollRate] = w.x();
    eta[kPitchRate] = w.y();
    eta[kYawRate] = w.z();
  }

  static SimState at_rest(const Vec3& position, double t = 0.0) {
    SimState s;
    s.t = t;
    s.set_position(position);
    return s;
  }
};

/// Total thrust and body moments [U_th, U_m] of the composite vehicle.
struct WrenchCommand {
  double thrust = 0.0;            // N
  Vec3 moments = Vec3::Zero();    // N m

  Vec4 as_vector() const { return {thrust, moments.x(), moments.y(), moments.z()}; }
  static WrenchCommand from_vector(const Vec4& w) { return {w[0], w.tail<3>()}; }
};

/// Human interaction force on the payload, world frame.
struct ExternalForce {
  Vec3 force = Vec3::Zero();  // N
};

/// Desired position/velocity/acceleration and yaw fed to the position loop.
struct ReferenceTrajectory {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  Vec3 acceleration = Vec3::Zero();
  double yaw = 0.0;

  static ReferenceTrajectory hold(const Vec3& position, double yaw = 0.0) {
    ReferenceTrajectory r;
    r.position = position;
    r.yaw = yaw;
    return r;
  }
};

inline bool all_finite(const StateVector& v) { return v.allFinite(); }
inline bool all_finite(const Vec3& v) { return v.allFinite(); }

/// sgn with sgn(0) = 0.
inline double sign(double v) { return static_cast<double>((v > 0.0) - (v < 0.0)); }

}  // namespace duolift
