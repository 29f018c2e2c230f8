#pragma once

/**
 * @file scenario.hpp
 * @brief Scenario description and its JSON file format.
 *
 * Keys carry their unit as a suffix (duration_s, quad_mass_kg, force_N, ...).
 * Every key is optional and falls back to the published vehicle/controller
 * parameters; unknown keys are rejected so a misspelt unit never passes
 * silently.  See the scenarios directory for complete examples.
 */

#include "duolift/admittance.hpp"
#include "duolift/allocation.hpp"
#include "duolift/attitude_control.hpp"
#include "duolift/dynamics.hpp"
#include "duolift/errors.hpp"
#include "duolift/position_control.hpp"
#include "duolift/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace duolift {

using json = nlohmann::json;

/// Constant human force applied over [start, end).
struct ForceSegment {
  double start = 0.0;  // s
  double end = 0.0;    // s
  Vec3 force = Vec3::Zero();
};

struct Scenario {
  std::string name = "scenario";
  double duration = 10.0;  // s
  double dt = 0.001;       // s, plant and attitude loop step
  std::uint64_t seed = 1;
  bool live_mode = false;

  double position_rate_hz = 100.0;  // position loop and admittance
  double log_rate_hz = 100.0;
  double telemetry_rate_hz = 30.0;

  SystemParams system;

  PositionControlConfig position;
  bool position_loop_enabled = true;
  // Desired attitude held when the position loop is disabled; the thrust is
  // then held at the vehicle weight.
  Vec3 frozen_attitude = Vec3::Zero();

  AttitudeGains attitude;
  double attitude_filter_cutoff_hz = 20.0;

  AdmittanceParams admittance;
  double max_external_force = 50.0;  // N
  double sensor_noise_std = 0.0;     // N, per sensor channel

  AllocationWeights allocation_weights;
  RotorModel rotor;

  SimState initial_state;
  std::optional<Vec3> initial_reference;  // defaults to the initial position
  double reference_yaw = 0.0;

  std::vector<ForceSegment> force_profile;

  static int decimation(double rate_hz, double dt) {
    return static_cast<int>(std::lround(1.0 / (rate_hz * dt)));
  }
  int position_decimation() const { return decimation(position_rate_hz, dt); }
  int log_decimation() const { return decimation(log_rate_hz, dt); }
  int telemetry_decimation() const { return std::max(1, decimation(telemetry_rate_hz, dt)); }
  double position_dt() const { return dt * position_decimation(); }
  std::int64_t step_count() const { return static_cast<std::int64_t>(std::llround(duration / dt)); }

  Vec3 reference_start() const { return initial_reference.value_or(initial_state.position()); }

  /// Scripted force at time t (zero outside every segment).
  Vec3 force_at(double t) const {
    for (const auto& seg : force_profile) {
      if (t >= seg.start && t < seg.end) {
        return seg.force;
      }
    }
    return Vec3::Zero();
  }

  void validate() const {
    duolift::validate(system);
    position.gains.validate();
    attitude.validate();
    admittance.validate();
    allocation_weights.validate();
    rotor.validate();
    if (!(dt > 0.0 && dt <= 0.01)) {
      throw ScenarioError("dt_s must lie in (0, 0.01]");
    }
    if (!(duration > 0.0) || !std::isfinite(duration)) {
      throw ScenarioError("duration_s must be positive");
    }
    auto divides = [&](double rate, const char* what) {
      if (!(rate > 0.0)) {
        throw ScenarioError(std::string(what) + " must be positive");
      }
      const double ratio = 1.0 / (rate * dt);
      if (ratio < 1.0 - 1e-9 || std::abs(ratio - std::round(ratio)) > 1e-6) {
        throw ScenarioError(std::string(what) + " must be an integer divisor of the plant rate 1/dt_s");
      }
    };
    divides(position_rate_hz, "position_hz");
    divides(log_rate_hz, "log_hz");
    if (!(telemetry_rate_hz > 0.0)) {
      throw ScenarioError("telemetry_hz must be positive");
    }
    if (!(max_external_force > 0.0)) {
      throw ScenarioError("max_force_N must be positive");
    }
    if (!initial_state.eta.allFinite() || exceeds_tilt_bound(initial_state.eta, system)) {
      throw ScenarioError("initial state must be finite and inside the tilt safety bound");
    }
    std::vector<ForceSegment> sorted = force_profile;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const auto& s = sorted[i];
      if (!(s.start >= 0.0 && s.end > s.start && s.end <= duration + 1e-12)) {
        throw ScenarioError("force segments must satisfy 0 <= start_s < end_s <= duration_s");
      }
      if (!s.force.allFinite() || s.force.norm() > max_external_force) {
        throw ScenarioError("force segment exceeds max_force_N");
      }
      if (i > 0 && s.start < sorted[i - 1].end) {
        throw ScenarioError("force segments overlap");
      }
    }
  }
};

namespace detail {

/// Reads an object, remembering which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw ScenarioError(path_ + " must be a JSON object");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (const json* v = find(key)) {
      try {
        out = v->get<T>();
      } catch (const json::exception& e) {
        throw ScenarioError(path_ + "." + key + ": " + e.what());
      }
    }
  }

  void vec3(const char* key, Vec3& out) {
    if (const json* v = find(key)) {
      if (v->is_number()) {
        out.setConstant(v->get<double>());
        return;
      }
      if (!v->is_array() || v->size() != 3) {
        throw ScenarioError(path_ + "." + key + " must be a number or an array of 3 numbers");
      }
      for (int i = 0; i < 3; ++i) {
        out[i] = (*v)[i].get<double>();
      }
    }
  }

  const json* child(const char* key) { return find(key); }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) {
        throw ScenarioError("unknown key " + path_ + "." + it.key());
      }
    }
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

inline SwitchingMode parse_switching(const std::string& s) {
  if (s == "sign") return SwitchingMode::kSign;
  if (s == "boundary_layer") return SwitchingMode::kBoundaryLayer;
  throw ScenarioError("attitude_control.switching must be \"sign\" or \"boundary_layer\"");
}

}  // namespace detail

inline Scenario scenario_from_json(const json& j) {
  using detail::ObjectReader;
  Scenario sc;
  ObjectReader root(j, "scenario");
  root.get("name", sc.name);
  root.get("duration_s", sc.duration);
  root.get("dt_s", sc.dt);
  root.get("seed", sc.seed);
  root.get("live_mode", sc.live_mode);

  if (const json* r = root.child("rates")) {
    ObjectReader o(*r, "rates");
    o.get("position_hz", sc.position_rate_hz);
    o.get("log_hz", sc.log_rate_hz);
    o.get("telemetry_hz", sc.telemetry_rate_hz);
    o.finish();
  }
  if (const json* s = root.child("system")) {
    ObjectReader o(*s, "system");
    SystemParams& p = sc.system;
    o.get("quad_mass_kg", p.quad_mass);
    o.get("payload_mass_kg", p.payload_mass);
    o.get("arm_length_m", p.arm_length);
    o.get("payload_length_m", p.payload_length);
    o.get("gravity_mps2", p.gravity);
    o.vec3("inertia_kgm2", p.inertia);
    o.get("linear_drag_Nspm", p.linear_drag);
    o.get("angular_drag_Nms", p.angular_drag);
    o.get("tilt_safety_bound_rad", p.tilt_safety_bound);
    o.finish();
    p.set_symmetric_attachments();
  }
  if (const json* s = root.child("position_control")) {
    ObjectReader o(*s, "position_control");
    PositionControlConfig& c = sc.position;
    o.get("enabled", sc.position_loop_enabled);
    o.vec3("kp_per_s", c.gains.kp);
    o.vec3("adaptation_rate", c.gains.beta);
    o.vec3("kv_initial", c.kv_initial);
    o.vec3("kv_reference", c.kv_reference);
    o.get("anti_windup", c.anti_windup);
    o.vec3("frozen_attitude_rad", sc.frozen_attitude);
    if (const json* l = o.child("limits")) {
      ObjectReader lo(*l, "position_control.limits");
      lo.get("enabled", c.limits.enabled);
      lo.get("max_tilt_rad", c.limits.max_tilt);
      lo.get("max_climb_accel_mps2", c.limits.max_climb_accel);
      lo.get("max_descent_accel_mps2", c.limits.max_descent_accel);
      lo.finish();
    }
    o.finish();
  }
  if (const json* s = root.child("attitude_control")) {
    ObjectReader o(*s, "attitude_control");
    AttitudeGains& g = sc.attitude;
    o.vec3("zeta", g.zeta);
    o.get("gamma", g.gamma);
    o.get("epsilon", g.epsilon);
    o.get("kappa1", g.kappa1);
    o.get("kappa2", g.kappa2);
    std::string mode = g.switching == SwitchingMode::kSign ? "sign" : "boundary_layer";
    o.get("switching", mode);
    g.switching = detail::parse_switching(mode);
    o.get("boundary_layer", g.boundary_layer);
    o.get("filter_cutoff_hz", sc.attitude_filter_cutoff_hz);
    o.finish();
  }
  if (const json* s = root.child("admittance")) {
    ObjectReader o(*s, "admittance");
    AdmittanceParams& a = sc.admittance;
    o.vec3("virtual_mass_kg", a.mass);
    o.vec3("virtual_damping_Nspm", a.damping);
    o.vec3("virtual_stiffness_Npm", a.stiffness);
    o.get("force_threshold_N", a.force_threshold);
    o.get("release_hysteresis", a.release_hysteresis);
    o.get("max_force_N", sc.max_external_force);
    o.finish();
  }
  if (const json* s = root.child("sensors")) {
    ObjectReader o(*s, "sensors");
    o.get("noise_std_N", sc.sensor_noise_std);
    o.finish();
  }
  if (const json* s = root.child("allocation")) {
    ObjectReader o(*s, "allocation");
    if (const json* w = o.child("weights")) {
      if (w->is_number()) {
        sc.allocation_weights.sigma.setConstant(w->get<double>());
      } else if (w->is_array() && w->size() == 8) {
        for (int i = 0; i < 8; ++i) sc.allocation_weights.sigma[i] = (*w)[i].get<double>();
      } else {
        throw ScenarioError("allocation.weights must be a number or an array of 8 numbers");
      }
    }
    o.get("thrust_coeff_Ns2prad2", sc.rotor.thrust_coeff);
    o.get("moment_coeff_Nms2prad2", sc.rotor.moment_coeff);
    o.finish();
  }
  sc.rotor.arm_length = sc.system.arm_length;

  if (const json* s = root.child("initial_state")) {
    ObjectReader o(*s, "initial_state");
    Vec3 pos = Vec3::Zero(), vel = Vec3::Zero(), att = Vec3::Zero(), rates = Vec3::Zero();
    o.vec3("position_m", pos);
    o.vec3("velocity_mps", vel);
    o.vec3("attitude_rad", att);
    o.vec3("rates_radps", rates);
    o.finish();
    sc.initial_state.set_position(pos);
    sc.initial_state.set_velocity(vel);
    sc.initial_state.set_attitude(att);
    sc.initial_state.set_rates(rates);
  }
  if (const json* s = root.child("reference")) {
    ObjectReader o(*s, "reference");
    if (s->contains("initial_position_m")) {
      Vec3 r = Vec3::Zero();
      o.vec3("initial_position_m", r);
      sc.initial_reference = r;
    }
    o.get("yaw_rad", sc.reference_yaw);
    o.finish();
  }
  if (const json* s = root.child("force_profile")) {
    if (!s->is_array()) {
      throw ScenarioError("force_profile must be an array");
    }
    for (std::size_t i = 0; i < s->size(); ++i) {
      ObjectReader o((*s)[i], "force_profile[" + std::to_string(i) + "]");
      ForceSegment seg;
      o.get("start_s", seg.start);
      o.get("end_s", seg.end);
      o.vec3("force_N", seg.force);
      o.finish();
      sc.force_profile.push_back(seg);
    }
  }
  root.finish();
  sc.validate();
  return sc;
}

inline json scenario_to_json(const Scenario& sc) {
  using detail::vec_json;
  json j;
  j["name"] = sc.name;
  j["duration_s"] = sc.duration;
  j["dt_s"] = sc.dt;
  j["seed"] = sc.seed;
  j["live_mode"] = sc.live_mode;
  j["rates"] = {{"position_hz", sc.position_rate_hz},
                {"log_hz", sc.log_rate_hz},
                {"telemetry_hz", sc.telemetry_rate_hz}};
  const SystemParams& p = sc.system;
  j["system"] = {{"quad_mass_kg", p.quad_mass},
                 {"payload_mass_kg", p.payload_mass},
                 {"arm_length_m", p.arm_length},
                 {"payload_length_m", p.payload_length},
                 {"gravity_mps2", p.gravity},
                 {"inertia_kgm2", vec_json(p.inertia)},
                 {"linear_drag_Nspm", p.linear_drag},
                 {"angular_drag_Nms", p.angular_drag},
                 {"tilt_safety_bound_rad", p.tilt_safety_bound}};
  const PositionControlConfig& c = sc.position;
  j["position_control"] = {{"enabled", sc.position_loop_enabled},
                           {"kp_per_s", vec_json(c.gains.kp)},
                           {"adaptation_rate", vec_json(c.gains.beta)},
                           {"kv_initial", vec_json(c.kv_initial)},
                           {"kv_reference", vec_json(c.kv_reference)},
                           {"anti_windup", c.anti_windup},
                           {"frozen_attitude_rad", vec_json(sc.frozen_attitude)},
                           {"limits",
                            {{"enabled", c.limits.enabled},
                             {"max_tilt_rad", c.limits.max_tilt},
                             {"max_climb_accel_mps2", c.limits.max_climb_accel},
                             {"max_descent_accel_mps2", c.limits.max_descent_accel}}}};
  const AttitudeGains& g = sc.attitude;
  j["attitude_control"] = {{"zeta", vec_json(g.zeta)},
                           {"gamma", g.gamma},
                           {"epsilon", g.epsilon},
                           {"kappa1", g.kappa1},
                           {"kappa2", g.kappa2},
                           {"switching", g.switching == SwitchingMode::kSign ? "sign" : "boundary_layer"},
                           {"boundary_layer", g.boundary_layer},
                           {"filter_cutoff_hz", sc.attitude_filter_cutoff_hz}};
  const AdmittanceParams& a = sc.admittance;
  j["admittance"] = {{"virtual_mass_kg", vec_json(a.mass)},
                     {"virtual_damping_Nspm", vec_json(a.damping)},
                     {"virtual_stiffness_Npm", vec_json(a.stiffness)},
                     {"force_threshold_N", a.force_threshold},
                     {"release_hysteresis", a.release_hysteresis},
                     {"max_force_N", sc.max_external_force}};
  j["sensors"] = {{"noise_std_N", sc.sensor_noise_std}};
  j["allocation"] = {{"weights", std::vector<double>(sc.allocation_weights.sigma.data(),
                                                     sc.allocation_weights.sigma.data() + 8)},
                     {"thrust_coeff_Ns2prad2", sc.rotor.thrust_coeff},
                     {"moment_coeff_Nms2prad2", sc.rotor.moment_coeff}};
  j["initial_state"] = {{"position_m", vec_json(sc.initial_state.position())},
                        {"velocity_mps", vec_json(sc.initial_state.velocity())},
                        {"attitude_rad", vec_json(sc.initial_state.attitude())},
                        {"rates_radps", vec_json(sc.initial_state.rates())}};
  j["reference"] = {{"yaw_rad", sc.reference_yaw}};
  if (sc.initial_reference) {
    j["reference"]["initial_position_m"] = vec_json(*sc.initial_reference);
  }
  j["force_profile"] = json::array();
  for (const auto& seg : sc.force_profile) {
    j["force_profile"].push_back({{"start_s", seg.start}, {"end_s", seg.end}, {"force_N", vec_json(seg.force)}});
  }
  return j;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ScenarioError("cannot open scenario file " + path);
  }
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ScenarioError("scenario " + path + ": " + e.what());
  }
  return scenario_from_json(j);
}

}  // namespace duolift
