#pragma once

/**
 * @file run_log.hpp
 * @brief Time series recorded by a run and its CSV serialization.
 *
 * CSV column order (one header line, then one row per log sample):
 *
 *   t
 *   x vx y vy z vz roll roll_rate pitch pitch_rate yaw yaw_rate
 *   ref_x ref_y ref_z ref_vx ref_vy ref_vz ref_ax ref_ay ref_az ref_yaw
 *   att_d_roll att_d_pitch att_d_yaw att_d_rate_roll att_d_rate_pitch att_d_rate_yaw
 *   att_d_acc_roll att_d_acc_pitch att_d_acc_yaw
 *   U_th U_m1 U_m2 U_m3
 *   F_q1 tau_11 tau_12 tau_13 F_q2 tau_21 tau_22 tau_23
 *   Ep_x Ep_y Ep_z Ev_x Ev_y Ev_z
 *   Ephi_roll Ephi_pitch Ephi_yaw Ephi_rate_roll Ephi_rate_pitch Ephi_rate_yaw
 *   S_roll S_pitch S_yaw
 *   kv_x kv_y kv_z
 *   Vpv_x Vpv_y Vpv_z Vphi_roll Vphi_pitch Vphi_yaw Vphi_dot_roll Vphi_dot_pitch Vphi_dot_yaw
 *   F_applied_x F_applied_y F_applied_z F_meas_x F_meas_y F_meas_z F_gated_x F_gated_y F_gated_z
 *   gate_open alloc_feasible sat_x sat_y sat_z thrust_singular diverged
 *
 * Units are SI (m, m/s, rad, N, N m).  Flags are 0/1.
 */

#include "duolift/allocation.hpp"
#include "duolift/attitude_control.hpp"
#include "duolift/types.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace duolift {

struct LogRow {
  double t = 0.0;
  StateVector eta = StateVector::Zero();
  ReferenceTrajectory reference;
  AttitudeReference attitude_reference;
  WrenchCommand wrench;
  ActuatorCommand actuators;
  Vec3 position_error = Vec3::Zero();
  Vec3 velocity_error = Vec3::Zero();
  SlidingState sliding;
  Vec3 kv_hat = Vec3::Zero();
  Vec3 v_pv = Vec3::Zero();
  Vec3 v_phi = Vec3::Zero();
  Vec3 v_phi_dot = Vec3::Zero();
  Vec3 force_applied = Vec3::Zero();
  Vec3 force_measured = Vec3::Zero();
  Vec3 force_gated = Vec3::Zero();
  bool gate_open = false;
  bool allocation_feasible = true;
  AxisMask saturated = AxisMask::Constant(false);
  bool thrust_singular = false;
  bool diverged = false;
};

enum class RunStatus { kCompleted, kDiverged };

inline const char* to_string(RunStatus s) { return s == RunStatus::kCompleted ? "completed" : "diverged"; }

struct RunEvent {
  double t = 0.0;
  std::string kind;
  std::string message;
};

struct RunLog {
  std::string scenario_name;
  double dt = 0.0;
  double log_interval = 0.0;
  double weight = 0.0;        // m_s g, for thrust statistics
  AttitudeGains attitude_gains;
  RunStatus status = RunStatus::kCompleted;
  std::vector<LogRow> rows;
  std::vector<RunEvent> events;
};

namespace detail {

template <typename Fn>
void visit_columns(const LogRow& r, Fn&& f) {
  auto v3 = [&](const char* a, const char* b, const char* c, const Vec3& v) {
    f(a, v.x());
    f(b, v.y());
    f(c, v.z());
  };
  auto flag = [&](const char* n, bool b) { f(n, b ? 1.0 : 0.0); };
  static const char* const kState[12] = {"x",    "vx",        "y",     "vy",         "z",   "vz",
                                         "roll", "roll_rate", "pitch", "pitch_rate", "yaw", "yaw_rate"};
  static const char* const kActuator[8] = {"F_q1", "tau_11", "tau_12", "tau_13",
                                           "F_q2", "tau_21", "tau_22", "tau_23"};
  f("t", r.t);
  for (int i = 0; i < 12; ++i) f(kState[i], r.eta[i]);
  v3("ref_x", "ref_y", "ref_z", r.reference.position);
  v3("ref_vx", "ref_vy", "ref_vz", r.reference.velocity);
  v3("ref_ax", "ref_ay", "ref_az", r.reference.acceleration);
  f("ref_yaw", r.reference.yaw);
  v3("att_d_roll", "att_d_pitch", "att_d_yaw", r.attitude_reference.angle);
  v3("att_d_rate_roll", "att_d_rate_pitch", "att_d_rate_yaw", r.attitude_reference.rate);
  v3("att_d_acc_roll", "att_d_acc_pitch", "att_d_acc_yaw", r.attitude_reference.accel);
  f("U_th", r.wrench.thrust);
  v3("U_m1", "U_m2", "U_m3", r.wrench.moments);
  for (int i = 0; i < 8; ++i) f(kActuator[i], r.actuators.u[i]);
  v3("Ep_x", "Ep_y", "Ep_z", r.position_error);
  v3("Ev_x", "Ev_y", "Ev_z", r.velocity_error);
  v3("Ephi_roll", "Ephi_pitch", "Ephi_yaw", r.sliding.error);
  v3("Ephi_rate_roll", "Ephi_rate_pitch", "Ephi_rate_yaw", r.sliding.error_rate);
  v3("S_roll", "S_pitch", "S_yaw", r.sliding.surface);
  v3("kv_x", "kv_y", "kv_z", r.kv_hat);
  v3("Vpv_x", "Vpv_y", "Vpv_z", r.v_pv);
  v3("Vphi_roll", "Vphi_pitch", "Vphi_yaw", r.v_phi);
  v3("Vphi_dot_roll", "Vphi_dot_pitch", "Vphi_dot_yaw", r.v_phi_dot);
  v3("F_applied_x", "F_applied_y", "F_applied_z", r.force_applied);
  v3("F_meas_x", "F_meas_y", "F_meas_z", r.force_measured);
  v3("F_gated_x", "F_gated_y", "F_gated_z", r.force_gated);
  flag("gate_open", r.gate_open);
  flag("alloc_feasible", r.allocation_feasible);
  flag("sat_x", r.saturated[0]);
  flag("sat_y", r.saturated[1]);
  flag("sat_z", r.saturated[2]);
  flag("thrust_singular", r.thrust_singular);
  flag("diverged", r.diverged);
}

}  // namespace detail

inline std::vector<std::string> log_columns() {
  std::vector<std::string> names;
  detail::visit_columns(LogRow{}, [&](const char* n, double) { names.emplace_back(n); });
  return names;
}

inline std::vector<double> row_values(const LogRow& r) {
  std::vector<double> values;
  detail::visit_columns(r, [&](const char*, double v) { values.push_back(v); });
  return values;
}

/// Writes the log as CSV, every `stride`-th row. Values use 17 significant
/// digits so the text is an exact image of the doubles.
inline void write_csv(std::ostream& out, const RunLog& log, std::size_t stride = 1) {
  const auto names = log_columns();
  for (std::size_t i = 0; i < names.size(); ++i) {
    out << (i ? "," : "") << names[i];
  }
  out << '\n';
  char buf[32];
  for (std::size_t r = 0; r < log.rows.size(); r += std::max<std::size_t>(stride, 1)) {
    const auto values = row_values(log.rows[r]);
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[i]);
      out << (i ? "," : "") << buf;
    }
    out << '\n';
  }
}

inline std::string to_csv(const RunLog& log) {
  std::ostringstream out;
  write_csv(out, log);
  return out.str();
}

/// Numeric CSV table with a header line.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) {
    return table;
  }
  {
    std::istringstream header(line);
    std::string cell;
    while (std::getline(header, cell, ',')) table.columns.push_back(cell);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    table.rows.push_back(std::move(row));
  }
  return table;
}

inline CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  return read_csv(in);
}

}  // namespace duolift
