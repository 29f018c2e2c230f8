#pragma once

/**
 * @file metrics.hpp
 * @brief Summary statistics of a run log and its JSON form.
 */

#include "duolift/attitude_control.hpp"
#include "duolift/harness/run_log.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

namespace duolift {

struct AxisStats {
  Vec3 rms = Vec3::Zero();
  Vec3 max_abs = Vec3::Zero();
};

/// Reaching of S = 0 on one axis, measured against the theoretical bound.
struct ReachingMeasurement {
  double initial_surface = 0.0;
  double bound = 0.0;                  // s
  std::optional<double> measured;      // s, empty if never reached in the log
  bool within_bound() const { return measured.has_value() && *measured <= bound; }
};

struct ThrustStats {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double weight = 0.0;
  // Fractions of the run with thrust above, near and below the weight.
  double lift_fraction = 0.0;
  double hold_fraction = 0.0;
  double descent_fraction = 0.0;
  std::optional<double> first_lift;     // s
  std::optional<double> first_descent;  // s
};

struct MetricsOptions {
  double position_tolerance = 1e-3;  // m, for settling
  double attitude_tolerance = 1e-3;  // rad, for settling
  double reach_threshold = 1e-3;     // |S| counted as reached
  double hold_band = 0.01;           // fraction of the weight
};

struct RunMetrics {
  std::string status;
  std::size_t rows = 0;
  double duration = 0.0;
  AxisStats position_error;
  AxisStats attitude_error;
  std::array<std::optional<double>, 3> position_settling{};
  std::array<std::optional<double>, 3> attitude_settling{};
  Vec3 max_abs_surface = Vec3::Zero();
  std::array<ReachingMeasurement, 3> reaching{};
  ThrustStats thrust;
  std::size_t allocation_infeasible_rows = 0;
  std::size_t events = 0;
};

using RowGetter = std::function<double(const LogRow&)>;

inline std::vector<double> series(const RunLog& log, const RowGetter& get) {
  std::vector<double> out;
  out.reserve(log.rows.size());
  for (const auto& r : log.rows) out.push_back(get(r));
  return out;
}

/// Series scaled by its largest magnitude so that the peak is exactly 1.
inline std::vector<double> normalized(std::vector<double> v) {
  double peak = 0.0;
  for (double x : v) peak = std::max(peak, std::abs(x));
  if (peak > 0.0) {
    for (double& x : v) x /= peak;
  }
  return v;
}

/// Time after which |x| stays within tol; empty if it is outside at the end.
inline std::optional<double> settling_time(const std::vector<double>& t, const std::vector<double>& x, double tol) {
  if (x.empty()) return std::nullopt;
  if (std::abs(x.back()) > tol) return std::nullopt;
  for (std::size_t i = x.size(); i-- > 0;) {
    if (std::abs(x[i]) > tol) {
      return t[i + 1];
    }
  }
  return t.front();
}

/**
 * First time |s| drops below `threshold`, or s changes sign, whichever comes
 * first. Sign changes are located by linear interpolation between samples.
 */
inline std::optional<double> reaching_time(const std::vector<double>& t, const std::vector<double>& s,
                                           double threshold) {
  if (s.empty()) return std::nullopt;
  if (std::abs(s[0]) < threshold) return t[0];
  for (std::size_t i = 1; i < s.size(); ++i) {
    if (std::abs(s[i]) < threshold) {
      // A crossing between the samples comes first when the sign flipped.
      if (s[i] != 0.0 && sign(s[i]) != sign(s[i - 1])) {
        return t[i - 1] + (t[i] - t[i - 1]) * s[i - 1] / (s[i - 1] - s[i]);
      }
      return t[i];
    }
    if (sign(s[i]) != sign(s[i - 1])) {
      return t[i - 1] + (t[i] - t[i - 1]) * s[i - 1] / (s[i - 1] - s[i]);
    }
  }
  return std::nullopt;
}

inline AxisStats axis_stats(const RunLog& log, const std::function<Vec3(const LogRow&)>& get) {
  AxisStats st;
  if (log.rows.empty()) return st;
  Vec3 sq = Vec3::Zero();
  for (const auto& r : log.rows) {
    const Vec3 v = get(r);
    sq += v.cwiseAbs2();
    st.max_abs = st.max_abs.cwiseMax(v.cwiseAbs());
  }
  st.rms = (sq / static_cast<double>(log.rows.size())).cwiseSqrt();
  return st;
}

inline RunMetrics compute_metrics(const RunLog& log, const MetricsOptions& opt = {}) {
  RunMetrics m;
  m.status = to_string(log.status);
  m.rows = log.rows.size();
  m.events = log.events.size();
  if (log.rows.empty()) return m;
  m.duration = log.rows.back().t - log.rows.front().t;

  m.position_error = axis_stats(log, [](const LogRow& r) { return r.position_error; });
  m.attitude_error = axis_stats(log, [](const LogRow& r) { return r.sliding.error; });
  m.max_abs_surface = axis_stats(log, [](const LogRow& r) { return r.sliding.surface; }).max_abs;

  const auto t = series(log, [](const LogRow& r) { return r.t; });
  for (int i = 0; i < 3; ++i) {
    m.position_settling[i] =
        settling_time(t, series(log, [i](const LogRow& r) { return r.position_error[i]; }), opt.position_tolerance);
    m.attitude_settling[i] =
        settling_time(t, series(log, [i](const LogRow& r) { return r.sliding.error[i]; }), opt.attitude_tolerance);

    auto& reach = m.reaching[i];
    const auto s = series(log, [i](const LogRow& r) { return r.sliding.surface[i]; });
    reach.initial_surface = s.front();
    reach.bound = reaching_time_bound(Vec3::Constant(0.5 * s.front() * s.front()), log.attitude_gains)[0];
    if (auto tr = reaching_time(t, s, opt.reach_threshold)) {
      reach.measured = *tr - t.front();
    }
  }

  auto& th = m.thrust;
  th.weight = log.weight;
  th.min = std::numeric_limits<double>::infinity();
  th.max = -std::numeric_limits<double>::infinity();
  std::size_t lift = 0, hold = 0, descent = 0;
  for (const auto& r : log.rows) {
    const double u = r.wrench.thrust;
    th.min = std::min(th.min, u);
    th.max = std::max(th.max, u);
    th.mean += u;
    if (u > log.weight * (1.0 + opt.hold_band)) {
      ++lift;
      if (!th.first_lift) th.first_lift = r.t;
    } else if (u < log.weight * (1.0 - opt.hold_band)) {
      ++descent;
      if (!th.first_descent) th.first_descent = r.t;
    } else {
      ++hold;
    }
    if (!r.allocation_feasible) ++m.allocation_infeasible_rows;
  }
  const double n = static_cast<double>(log.rows.size());
  th.mean /= n;
  th.lift_fraction = static_cast<double>(lift) / n;
  th.hold_fraction = static_cast<double>(hold) / n;
  th.descent_fraction = static_cast<double>(descent) / n;
  return m;
}

namespace detail {
inline nlohmann::json json3(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }
inline nlohmann::json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}
}  // namespace detail

inline nlohmann::json metrics_to_json(const RunMetrics& m) {
  using nlohmann::json;
  using detail::opt_json;
  using detail::json3;
  json j;
  j["status"] = m.status;
  j["rows"] = m.rows;
  j["duration_s"] = m.duration;
  j["events"] = m.events;
  j["position_error_m"] = {{"rms", json3(m.position_error.rms)}, {"max_abs", json3(m.position_error.max_abs)}};
  j["attitude_error_rad"] = {{"rms", json3(m.attitude_error.rms)}, {"max_abs", json3(m.attitude_error.max_abs)}};
  j["position_settling_s"] = json::array();
  j["attitude_settling_s"] = json::array();
  j["reaching"] = json::array();
  for (int i = 0; i < 3; ++i) {
    j["position_settling_s"].push_back(opt_json(m.position_settling[i]));
    j["attitude_settling_s"].push_back(opt_json(m.attitude_settling[i]));
    const auto& r = m.reaching[i];
    j["reaching"].push_back({{"initial_surface", r.initial_surface},
                             {"bound_s", r.bound},
                             {"measured_s", opt_json(r.measured)},
                             {"within_bound", r.within_bound()}});
  }
  j["max_abs_surface"] = json3(m.max_abs_surface);
  const auto& t = m.thrust;
  j["thrust_N"] = {{"min", t.min},
                   {"max", t.max},
                   {"mean", t.mean},
                   {"weight", t.weight},
                   {"lift_fraction", t.lift_fraction},
                   {"hold_fraction", t.hold_fraction},
                   {"descent_fraction", t.descent_fraction},
                   {"first_lift_s", opt_json(t.first_lift)},
                   {"first_descent_s", opt_json(t.first_descent)}};
  j["allocation_infeasible_rows"] = m.allocation_infeasible_rows;
  return j;
}

/// JSON summary written next to the CSV log.
inline nlohmann::json run_summary(const RunLog& log, const MetricsOptions& opt = {}) {
  nlohmann::json j;
  j["scenario"] = log.scenario_name;
  j["dt_s"] = log.dt;
  j["log_interval_s"] = log.log_interval;
  j["metrics"] = metrics_to_json(compute_metrics(log, opt));
  j["event_log"] = nlohmann::json::array();
  for (const auto& e : log.events) {
    j["event_log"].push_back({{"t_s", e.t}, {"kind", e.kind}, {"message", e.message}});
  }
  if (!log.rows.empty()) {
    const auto& last = log.rows.back();
    j["final"] = {{"t_s", last.t},
                  {"position_m", detail::json3({last.eta[kX], last.eta[kY], last.eta[kZ]})},
                  {"kv_hat", detail::json3(last.kv_hat)}};
  }
  return j;
}

}  // namespace duolift
