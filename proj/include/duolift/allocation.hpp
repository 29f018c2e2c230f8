#pragma once

/**
 * @file allocation.hpp
 * @brief Split of the composite wrench into per-quadrotor thrust/moments and
 *        rotor speeds.
 *
 * The composite wrench w = [U_th, U_m] relates to the 8-vector
 * u_d = [F_q1, tau_11, tau_12, tau_13, F_q2, tau_21, tau_22, tau_23] through
 * w = Lambda u_d.  The minimum weighted-effort solution
 *
 *   u_d* = argmin ||Gamma u_d||^2  s.t.  Lambda u_d = w,   Gamma = sqrt(diag(sigma))
 *
 * is the weighted pseudo-inverse  W Lambda^T (Lambda W Lambda^T)^-1 w  with
 * W = Gamma^-2.
 */

#include "duolift/errors.hpp"
#include "duolift/types.hpp"

#include <cmath>

namespace duolift {

using AllocationMatrix = Eigen::Matrix<double, 4, 8>;
using AllocationGain = Eigen::Matrix<double, 8, 4>;

/// Positive cost coefficients sigma_11..sigma_24 (one per entry of u_d).
struct AllocationWeights {
  Vec8 sigma = Vec8::Ones();

  void validate() const {
    if (!sigma.allFinite() || (sigma.array() <= 0.0).any()) {
      throw AllocationInfeasibleError("allocation weights must be finite and strictly positive");
    }
  }
};

/// Per-quadrotor thrust and moments u_d.
struct ActuatorCommand {
  Vec8 u = Vec8::Zero();

  double thrust(int quad) const { return u[4 * quad]; }
  Vec3 moments(int quad) const { return u.segment<3>(4 * quad + 1); }
  bool thrusts_nonnegative() const { return thrust(0) >= 0.0 && thrust(1) >= 0.0; }
};

/// Rotor thrust/moment coefficients. The defaults are nominal values for a
/// 1.4 kg class quadrotor, not taken from any published configuration.
struct RotorModel {
  double thrust_coeff = 8.55e-6;  // N s^2 / rad^2
  double moment_coeff = 1.6e-7;   // N m s^2 / rad^2
  double arm_length = 0.225;      // m

  void validate() const {
    if (!(thrust_coeff > 0.0 && moment_coeff > 0.0 && arm_length > 0.0)) {
      throw ScenarioError("rotor coefficients and arm length must be strictly positive");
    }
  }
};

/// Configuration matrix: thrust sum, roll (y-offset lever + roll moments),
/// pitch (-x-offset lever + pitch moments), yaw moment sum.
inline AllocationMatrix build_lambda(const SystemParams& p) {
  const Vec3& r1 = p.attach_offset_1;
  const Vec3& r2 = p.attach_offset_2;
  AllocationMatrix L;
  // clang-format off
  L << 1.0,     0, 0, 0, 1.0,     0, 0, 0,
       r1.y(),  1, 0, 0, r2.y(),  1, 0, 0,
       -r1.x(), 0, 1, 0, -r2.x(), 0, 1, 0,
       0,       0, 0, 1, 0,       0, 0, 1;
  // clang-format on
  return L;
}

/**
 * Minimum weighted-effort allocator. The 8x4 gain is factored once per
 * configuration and is immutable afterwards.
 */
class Allocator {
 public:
  Allocator(const AllocationMatrix& lambda, const AllocationWeights& weights) : lambda_(lambda), weights_(weights) {
    weights_.validate();
    if (!lambda_.allFinite()) {
      throw AllocationInfeasibleError("allocation matrix has non-finite entries");
    }
    const Vec8 w_inv = weights_.sigma.cwiseInverse();
    const AllocationGain wlt = w_inv.asDiagonal() * lambda_.transpose();
    const Eigen::Matrix4d gram = lambda_ * wlt;
    const Eigen::Vector4d sv = Eigen::JacobiSVD<Eigen::Matrix4d>(gram).singularValues();
    Eigen::LDLT<Eigen::Matrix4d> ldlt(gram);
    if (!(sv[3] > 1e-12 * sv[0]) || ldlt.info() != Eigen::Success) {
      throw AllocationInfeasibleError("Lambda Gamma^-2 Lambda^T is singular (rank-deficient configuration)");
    }
    gain_ = wlt * ldlt.solve(Eigen::Matrix4d::Identity());
  }

  Allocator(const SystemParams& p, const AllocationWeights& weights) : Allocator(build_lambda(p), weights) {}

  ActuatorCommand allocate(const WrenchCommand& w) const { return {gain_ * w.as_vector()}; }

  /// Lambda u - w, for diagnostics.
  Vec4 residual(const ActuatorCommand& cmd, const WrenchCommand& w) const {
    return lambda_ * cmd.u - w.as_vector();
  }

  /// ||Gamma u||^2.
  double cost(const ActuatorCommand& cmd) const { return (weights_.sigma.array() * cmd.u.array().square()).sum(); }

  const AllocationMatrix& lambda() const { return lambda_; }
  const AllocationWeights& weights() const { return weights_; }
  const AllocationGain& gain() const { return gain_; }

 private:
  AllocationMatrix lambda_;
  AllocationWeights weights_;
  AllocationGain gain_;
};

inline ActuatorCommand allocate(const WrenchCommand& w, const AllocationMatrix& lambda,
                                const AllocationWeights& weights) {
  return Allocator(lambda, weights).allocate(w);
}

/// Thrust of each rotor implied by a quadrotor's (F, tau), inverting
///   F = sum f_j, tau_1 = d (f_2 - f_4), tau_2 = d (f_3 - f_1),
///   tau_3 = (k_m / k_f)(f_1 - f_2 + f_3 - f_4).
inline Vec4 rotor_thrusts(double thrust, const Vec3& moments, const RotorModel& r) {
  const double drag_ratio = r.moment_coeff / r.thrust_coeff;
  const double odd = 0.5 * (thrust + moments.z() / drag_ratio);   // f_1 + f_3
  const double even = 0.5 * (thrust - moments.z() / drag_ratio);  // f_2 + f_4
  const double roll = moments.x() / r.arm_length;                  // f_2 - f_4
  const double pitch = moments.y() / r.arm_length;                 // f_3 - f_1
  return {0.5 * (odd - pitch), 0.5 * (even + roll), 0.5 * (odd + pitch), 0.5 * (even - roll)};
}

/**
 * Rotor speeds (rad/s) producing a quadrotor's thrust and moments.
 * Throws ActuatorSaturationError naming the first rotor that would need
 * negative thrust; round-off negatives are treated as zero.
 */
inline Vec4 mix_to_rotors(double thrust, const Vec3& moments, const RotorModel& r, int quad = 0) {
  const Vec4 f = rotor_thrusts(thrust, moments, r);
  const double tol = 1e-12 * std::max(1.0, std::abs(thrust) + moments.cwiseAbs().sum() / r.arm_length);
  Vec4 omega;
  for (int j = 0; j < 4; ++j) {
    if (f[j] < -tol) {
      throw ActuatorSaturationError(quad, j, f[j]);
    }
    omega[j] = std::sqrt(std::max(0.0, f[j]) / r.thrust_coeff);
  }
  return omega;
}

/// Forward rotor map: speeds to (F, tau) of one quadrotor.
inline Vec4 rotor_wrench(const Vec4& omega, const RotorModel& r) {
  const Vec4 f = r.thrust_coeff * omega.array().square().matrix();
  const Vec4 m = r.moment_coeff * omega.array().square().matrix();
  return {f.sum(), r.arm_length * (f[1] - f[3]), r.arm_length * (f[2] - f[0]), m[0] - m[1] + m[2] - m[3]};
}

}  // namespace duolift
