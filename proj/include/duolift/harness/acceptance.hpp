#pragma once

/**
 * @file acceptance.hpp
 * @brief End-to-end acceptance checks shared by the acceptance test binary
 *        and `duolift verify`.
 */

#include "duolift/allocation.hpp"
#include "duolift/attitude_control.hpp"
#include "duolift/dynamics.hpp"
#include "duolift/harness/metrics.hpp"
#include "duolift/harness/run_log.hpp"
#include "duolift/harness/scenario.hpp"
#include "duolift/harness/simulation.hpp"
#include "duolift/position_control.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace duolift::acceptance {

struct Result {
  std::string name;
  bool passed = false;
  std::string detail;
  double elapsed_s = 0.0;
};

struct Paths {
  std::string scenario_dir;
  std::string golden_dir;
};

namespace detail {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Collects sub-check outcomes into one pass/fail with a readable detail.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    passed_ = passed_ && ok;
    if (!ok) failures_ << (failures_.tellp() > 0 ? "; " : "") << what;
  }
  void note(const std::string& s) { notes_ << (notes_.tellp() > 0 ? ", " : "") << s; }
  bool passed() const { return passed_; }
  std::string detail() const { return passed_ ? notes_.str() : "FAILED: " + failures_.str() + " | " + notes_.str(); }

 private:
  bool passed_ = true;
  std::ostringstream failures_;
  std::ostringstream notes_;
};

inline std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

inline Result finish(const std::string& name, const Checks& c, const Stopwatch& sw) {
  return {name, c.passed(), c.detail(), sw.seconds()};
}

}  // namespace detail

// ------------------------------------------------------------------ hover

inline Scenario hover_scenario(double duration = 60.0) {
  Scenario sc;
  sc.name = "hover";
  sc.duration = duration;
  sc.initial_state = SimState::at_rest(Vec3(0.0, 0.0, 1.0));
  return sc;
}

inline Result hover() {
  detail::Stopwatch sw;
  detail::Checks c;
  const SystemParams p;
  PositionController ctrl(PositionControlConfig{}, p);
  const SimState s = SimState::at_rest(Vec3(0.0, 0.0, 1.0));
  const auto out = ctrl.update(ReferenceTrajectory::hold(s.position()), s, 0.01);
  const double expected = 31.8825;
  c.expect(std::abs(out.command.thrust - expected) <= 1e-9, "U_th = " + detail::fmt(out.command.thrust));
  c.expect(out.command.roll == 0.0 && out.command.pitch == 0.0, "non-zero attitude set-point");
  const auto att = attitude_control(AttitudeReference{}, s, AttitudeGains{}, p);
  c.expect(att.moments.isZero(0.0), "U_m non-zero at equilibrium");

  Simulation sim(hover_scenario());
  while (!sim.finished()) sim.step(Vec3::Zero());
  const double drift = (sim.state().position() - s.position()).norm();
  c.expect(sim.state().eta.allFinite() && drift < 1e-3, "60 s drift " + detail::fmt(drift) + " m");
  c.note("U_th error " + detail::fmt(std::abs(out.command.thrust - expected)) + " N");
  c.note("60 s drift " + detail::fmt(drift) + " m");
  const double elapsed = sw.seconds();
  c.expect(elapsed < 5.0, "runtime " + detail::fmt(elapsed) + " s");
  return detail::finish("hover equilibrium", c, sw);
}

// ------------------------------------------------------------- allocation

/// Minimum of sum sigma_i u_i^2 subject to Lambda u = w, from the KKT system.
inline Vec8 allocation_oracle(const AllocationMatrix& lambda, const Vec8& sigma, const Vec4& w) {
  Eigen::Matrix<double, 12, 12> kkt = Eigen::Matrix<double, 12, 12>::Zero();
  kkt.topLeftCorner<8, 8>() = (2.0 * sigma).asDiagonal();
  kkt.topRightCorner<8, 4>() = lambda.transpose();
  kkt.bottomLeftCorner<4, 8>() = lambda;
  Eigen::Matrix<double, 12, 1> rhs = Eigen::Matrix<double, 12, 1>::Zero();
  rhs.tail<4>() = w;
  return kkt.fullPivLu().solve(rhs).head<8>();
}

inline Result allocation(std::uint64_t seed = 7) {
  detail::Stopwatch sw;
  detail::Checks c;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> thrust(0.0, 80.0), moment(-5.0, 5.0), weight(0.1, 10.0),
      offset(-1.5, 1.5);
  double worst_residual = 0.0, worst_cost = 0.0;
  for (int k = 0; k < 1000; ++k) {
    SystemParams p;
    // Every fourth instance uses a randomised attachment geometry.
    if (k % 4 == 3) {
      p.attach_offset_1 = Vec3(offset(rng), offset(rng), 0.0);
      p.attach_offset_2 = Vec3(offset(rng), offset(rng), 0.0);
      if ((p.attach_offset_1 - p.attach_offset_2).norm() < 0.1) continue;
    }
    AllocationWeights aw;
    for (int i = 0; i < 8; ++i) aw.sigma[i] = weight(rng);
    const WrenchCommand w{thrust(rng), Vec3(moment(rng), moment(rng), moment(rng))};
    const Allocator alloc(p, aw);
    const ActuatorCommand u = alloc.allocate(w);
    const Vec8 ref = allocation_oracle(alloc.lambda(), aw.sigma, w.as_vector());
    const Vec8 gamma = aw.sigma.cwiseSqrt();
    worst_residual = std::max(worst_residual, alloc.residual(u, w).norm());
    worst_cost = std::max(worst_cost, std::abs(gamma.cwiseProduct(u.u).norm() - gamma.cwiseProduct(ref).norm()));
  }
  c.expect(worst_residual < 1e-9, "residual " + detail::fmt(worst_residual));
  c.expect(worst_cost < 1e-7, "cost mismatch " + detail::fmt(worst_cost));
  c.note("max residual " + detail::fmt(worst_residual));
  c.note("max |Gamma u| mismatch " + detail::fmt(worst_cost));
  const double elapsed = sw.seconds();
  c.expect(elapsed < 1.0, "runtime " + detail::fmt(elapsed) + " s");
  return detail::finish("allocation exactness and optimality", c, sw);
}

// --------------------------------------------------------------- reaching

inline Scenario attitude_step_scenario(const Vec3& attitude, const Vec3& rates = Vec3::Zero()) {
  Scenario sc;
  sc.name = "attitude_step";
  sc.duration = 1.0;
  sc.log_rate_hz = 1000.0;
  sc.position_loop_enabled = false;
  sc.initial_state = SimState::at_rest(Vec3(0.0, 0.0, 1.0));
  sc.initial_state.set_attitude(attitude);
  sc.initial_state.set_rates(rates);
  return sc;
}

inline Result reaching(std::uint64_t seed = 11) {
  detail::Stopwatch sw;
  detail::Checks c;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-0.8, 0.8), rate(-1.0, 1.0);
  double worst_margin = -1e300;  // measured - bound, must stay <= 0
  double worst_vdot = -1e300;    // max V_dot while |S| > threshold
  int violations = 0;
  for (int k = 0; k < 100; ++k) {
    const Vec3 att(angle(rng), angle(rng), angle(rng));
    const Vec3 w(rate(rng), rate(rng), rate(rng));
    const RunLog log = run(attitude_step_scenario(att, w));
    if (log.status != RunStatus::kCompleted) {
      c.expect(false, "run " + std::to_string(k) + " diverged");
      continue;
    }
    const RunMetrics m = compute_metrics(log);
    for (int i = 0; i < 3; ++i) {
      const auto& r = m.reaching[i];
      if (!r.measured) {
        ++violations;
        continue;
      }
      worst_margin = std::max(worst_margin, *r.measured - r.bound);
      if (*r.measured > r.bound) ++violations;
    }
    for (const auto& row : log.rows) {
      for (int i = 0; i < 3; ++i) {
        if (std::abs(row.sliding.surface[i]) > 1e-3) worst_vdot = std::max(worst_vdot, row.v_phi_dot[i]);
      }
    }
  }
  c.expect(violations == 0, std::to_string(violations) + " axes exceeded the reaching bound");
  c.expect(worst_vdot <= 0.0, "V_phi_dot reached " + detail::fmt(worst_vdot));
  c.note("worst (measured - bound) " + detail::fmt(worst_margin) + " s");
  c.note("max V_phi_dot off the surface " + detail::fmt(worst_vdot));
  const double elapsed = sw.seconds();
  c.expect(elapsed < 30.0, "runtime " + detail::fmt(elapsed) + " s");
  return detail::finish("finite-time reaching", c, sw);
}

// ------------------------------------------------------------ backstepping

inline Scenario position_step_scenario(int axis, double duration = 12.0) {
  Scenario sc;
  sc.name = std::string("step_") + "xyz"[axis];
  sc.duration = duration;
  sc.initial_state = SimState::at_rest(Vec3(0.0, 0.0, 1.0));
  Vec3 target = sc.initial_state.position();
  target[axis] += 1.0;
  sc.initial_reference = target;
  return sc;
}

/// Index of the first row after the last saturated outer-loop update.
inline std::size_t transient_end(const RunLog& log) {
  std::size_t end = 0;
  for (std::size_t i = 0; i < log.rows.size(); ++i) {
    if (log.rows[i].saturated.any() || log.rows[i].thrust_singular) end = i + 1;
  }
  return end;
}

inline Result backstepping() {
  detail::Stopwatch sw;
  detail::Checks c;
  for (int axis = 0; axis < 3; ++axis) {
    const std::string tag = std::string(1, "xyz"[axis]) + ": ";
    const RunLog log = run(position_step_scenario(axis));
    if (log.status != RunStatus::kCompleted) {
      c.expect(false, tag + "diverged");
      continue;
    }
    // Settled: ||E_p|| < 1e-3 from some t <= 10 s to the end of the run.
    double settled = -1.0;  // < 0 while outside the band
    for (const auto& r : log.rows) {
      if (r.position_error.norm() >= 1e-3) {
        settled = -1.0;
      } else if (settled < 0.0) {
        settled = r.t;
      }
    }
    c.expect(settled >= 0.0 && settled <= 10.0, tag + "||E_p|| not below 1e-3 m within 10 s");

    // Rises below 1e-12 of the post-transient level are round-off.
    const std::size_t t0 = transient_end(log);
    const double level = t0 < log.rows.size() ? log.rows[t0].v_pv.sum() : 0.0;
    const double noise = 1e-12 * std::max(1.0, level);
    double worst_rise = 0.0;
    for (std::size_t i = std::max<std::size_t>(t0, 1); i < log.rows.size(); ++i) {
      const double prev = log.rows[i - 1].v_pv.sum();
      worst_rise = std::max(worst_rise, log.rows[i].v_pv.sum() - prev);
    }
    c.expect(worst_rise <= noise, tag + "V_pv rose by " + detail::fmt(worst_rise));

    bool monotone = true;
    for (std::size_t i = 1; i < log.rows.size(); ++i) {
      monotone = monotone && (log.rows[i].kv_hat.array() >= log.rows[i - 1].kv_hat.array()).all();
    }
    c.expect(monotone, tag + "K_v_hat decreased");
    c.note(tag + "settled at " + (settled >= 0.0 ? detail::fmt(settled) : std::string("never")) + " s, transient ends " +
           detail::fmt(t0 < log.rows.size() ? log.rows[t0].t : log.rows.back().t) + " s, max V_pv rise " +
           detail::fmt(worst_rise));
  }
  return detail::finish("backstepping convergence", c, sw);
}

// --------------------------------------------------------------- admittance

inline Result admittance() {
  detail::Stopwatch sw;
  detail::Checks c;
  const AdmittanceParams params;
  const double dt = 0.01;
  const double settle = 5.0 * params.mass.x() / params.damping.x();
  for (int axis = 0; axis < 3; ++axis) {
    AdmittanceFilter f(params, ReferenceTrajectory::hold(Vec3::Zero()));
    Vec3 force = Vec3::Zero();
    force[axis] = 1.54;
    const int steps = static_cast<int>(std::ceil(settle / dt - 1e-9));
    for (int k = 0; k < steps; ++k) f.step(force, dt);
    const double v = f.reference().velocity[axis];
    c.expect(std::abs(v - 1.0) <= 0.02, std::string("axis ") + "xyz"[axis] + " velocity " + detail::fmt(v));
    if (axis == 0) c.note("terminal velocity after 5M/C " + detail::fmt(v) + " m/s");
  }

  // Sub-threshold force through the full closed loop: the reference never moves.
  Scenario sc = hover_scenario(5.0);
  sc.name = "sub_threshold";
  sc.force_profile.push_back({0.0, 5.0, Vec3(0.3, -0.2, 0.25)});
  const RunLog log = run(sc);
  double motion = 0.0;
  for (const auto& r : log.rows) {
    motion = std::max(motion, (r.reference.position - Vec3(0.0, 0.0, 1.0)).norm() + r.reference.velocity.norm());
  }
  c.expect(log.status == RunStatus::kCompleted && motion == 0.0,
           "sub-threshold reference motion " + detail::fmt(motion));
  c.note("sub-threshold reference motion " + detail::fmt(motion));
  return detail::finish("admittance compliance", c, sw);
}

// -------------------------------------------------------- lift-guide-land

struct GoldenComparison {
  bool ok = false;
  double max_diff = 0.0;
  std::string message;
};

/// Compares a log to a golden CSV, value by value, at `tol` scaled by max(1, |golden|).
inline GoldenComparison compare_to_golden(const RunLog& log, const std::string& path, double tol = 1e-9) {
  GoldenComparison g;
  CsvTable golden;
  try {
    golden = read_csv_file(path);
  } catch (const std::exception& e) {
    g.message = e.what();
    return g;
  }
  if (golden.columns != log_columns()) {
    g.message = "column layout differs from golden";
    return g;
  }
  // The golden file may hold a subsample; rows are matched by time.
  if (golden.rows.empty() || log.rows.empty() || log.log_interval <= 0.0) {
    g.message = "empty log or golden";
    return g;
  }
  for (const auto& ref_row : golden.rows) {
    const auto i = static_cast<std::size_t>(std::llround((ref_row[0] - log.rows.front().t) / log.log_interval));
    if (i >= log.rows.size() || log.rows[i].t != ref_row[0]) {
      g.message = "golden row at t=" + detail::fmt(ref_row[0]) + " has no counterpart";
      return g;
    }
    const auto values = row_values(log.rows[i]);
    for (std::size_t j = 0; j < values.size(); ++j) {
      g.max_diff = std::max(g.max_diff, std::abs(values[j] - ref_row[j]) / std::max(1.0, std::abs(ref_row[j])));
    }
  }
  g.ok = g.max_diff <= tol;
  g.message = std::to_string(golden.rows.size()) + " rows, max scaled difference " + detail::fmt(g.max_diff);
  return g;
}

/// Guidance segments of a scenario merged into quiet intervals [end_i, start_{i+1}).
inline std::vector<std::pair<double, double>> quiet_intervals(const Scenario& sc) {
  std::vector<ForceSegment> segs = sc.force_profile;
  std::sort(segs.begin(), segs.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const double next = i + 1 < segs.size() ? segs[i + 1].start : sc.duration;
    if (next > segs[i].end) out.emplace_back(segs[i].end, next);
  }
  return out;
}

inline Result lift_guide_land(const Paths& paths) {
  detail::Stopwatch sw;
  detail::Checks c;
  const Scenario sc = load_scenario(paths.scenario_dir + "/lift_guide_land.json");
  const RunLog log = run(sc);
  c.expect(log.status == RunStatus::kCompleted, "run diverged");
  const RunMetrics m = compute_metrics(log);

  const double max_att = m.attitude_error.max_abs.maxCoeff();
  c.expect(max_att < 0.2, "attitude error reached " + detail::fmt(max_att) + " rad");
  c.note("max |E_phi| " + detail::fmt(max_att) + " rad");

  // Between guidance segments the position error decays to zero.
  double worst_end = 0.0;
  for (const auto& [a, b] : quiet_intervals(sc)) {
    double at_end = 0.0, early = 0.0;
    for (const auto& r : log.rows) {
      if (r.t >= a && r.t < a + 0.1) early = std::max(early, r.position_error.norm());
      if (r.t >= b - 0.1 && r.t < b) at_end = std::max(at_end, r.position_error.norm());
    }
    worst_end = std::max(worst_end, at_end);
    c.expect(at_end < 1e-3 && at_end <= early, "E_p not converging in quiet interval [" + detail::fmt(a) + ", " +
                                                   detail::fmt(b) + "): " + detail::fmt(at_end) + " m");
  }
  c.note("||E_p|| at end of quiet intervals <= " + detail::fmt(worst_end) + " m");

  const auto& th = m.thrust;
  c.expect(th.first_lift.has_value() && th.first_descent.has_value() && *th.first_lift < *th.first_descent,
           "missing lift-before-descent thrust phases");
  c.expect(th.hold_fraction > 0.5, "hold-near-weight fraction " + detail::fmt(th.hold_fraction));
  c.note("thrust " + detail::fmt(th.min) + ".." + detail::fmt(th.max) + " N, hold fraction " +
         detail::fmt(th.hold_fraction));

  const RunLog again = run(sc);
  c.expect(to_csv(again) == to_csv(log), "rerun not bit-identical");

  const auto golden = compare_to_golden(log, paths.golden_dir + "/lift_guide_land.csv");
  c.expect(golden.ok, "golden log: " + golden.message);
  c.note("golden " + golden.message);
  return detail::finish("lift-guide-land replication", c, sw);
}

// --------------------------------------------------------------- RK4 order

/// Free fall with linear drag c = k/m from (z0, v0): closed form.
inline std::pair<double, double> free_fall_exact(double z0, double v0, double c, double g, double t) {
  const double vt = g / c;  // terminal speed
  const double e = std::exp(-c * t);
  return {z0 - vt * t + (v0 + vt) * (1.0 - e) / c, (v0 + vt) * e - vt};
}

/// Error norm after integrating a drag-only free fall from z = 0 with an
/// initial climb rate v0 and half of it sideways.
inline double free_fall_error(double dt, const SystemParams& p, double horizon, double v0) {
  SimState s;
  s.eta[kVz] = v0;
  s.eta[kVx] = 0.5 * v0;
  const long n = std::lround(horizon / dt);
  for (long k = 0; k < n; ++k) s = step_rk4(s, WrenchCommand{}, ExternalForce{}, p, dt);
  const double c = p.linear_drag / p.total_mass();
  const auto [z, vz] = free_fall_exact(0.0, v0, c, p.gravity, horizon);
  const double vx = 0.5 * v0 * std::exp(-c * horizon);
  const double x = 0.5 * v0 * (1.0 - std::exp(-c * horizon)) / c;
  return std::hypot(std::hypot(s.eta[kZ] - z, s.eta[kVz] - vz), std::hypot(s.eta[kX] - x, s.eta[kVx] - vx));
}

inline Result rk4_order() {
  detail::Stopwatch sw;
  detail::Checks c;
  // With the nominal drag the truncation error is far below round-off, so the
  // drag is enlarged to k/m = 10 1/s to make the error observable.
  SystemParams p;
  p.linear_drag = 10.0 * p.total_mass();
  const std::vector<double> dts{0.004, 0.002, 0.001, 0.0005};
  std::vector<double> errors;
  for (double dt : dts) errors.push_back(free_fall_error(dt, p, 0.5, 20.0));
  for (std::size_t i = 1; i < dts.size(); ++i) {
    const double order = std::log(errors[i - 1] / errors[i]) / std::log(dts[i - 1] / dts[i]);
    c.expect(std::abs(order - 4.0) <= 0.2, "order " + detail::fmt(order) + " between dt " +
                                                detail::fmt(dts[i - 1]) + " and " + detail::fmt(dts[i]));
    c.note("order " + detail::fmt(order));
  }
  return detail::finish("RK4 convergence order", c, sw);
}

inline std::vector<Result> run_all(const Paths& paths) {
  std::vector<Result> out;
  const std::vector<std::pair<std::string, std::function<Result()>>> checks{
      {"hover equilibrium", [] { return hover(); }},
      {"allocation exactness and optimality", [] { return allocation(); }},
      {"finite-time reaching", [] { return reaching(); }},
      {"backstepping convergence", [] { return backstepping(); }},
      {"admittance compliance", [] { return admittance(); }},
      {"lift-guide-land replication", [&] { return lift_guide_land(paths); }},
      {"RK4 convergence order", [] { return rk4_order(); }},
  };
  for (const auto& [name, fn] : checks) {
    try {
      out.push_back(fn());
    } catch (const std::exception& e) {
      out.push_back({name, false, std::string("FAILED: exception: ") + e.what(), 0.0});
    }
  }
  return out;
}

}  // namespace duolift::acceptance
