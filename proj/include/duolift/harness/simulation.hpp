#pragma once

/**
 * @file simulation.hpp
 * @brief The cascaded closed loop: sensors, admittance, position loop,
 *        attitude loop, allocation and plant, stepped at the plant rate.
 */

#include "duolift/admittance.hpp"
#include "duolift/allocation.hpp"
#include "duolift/attitude_control.hpp"
#include "duolift/dynamics.hpp"
#include "duolift/errors.hpp"
#include "duolift/harness/run_log.hpp"
#include "duolift/harness/scenario.hpp"
#include "duolift/position_control.hpp"
#include "duolift/types.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

namespace duolift {

/// Callbacks used by live sessions. All are optional.
struct LiveHooks {
  // Fresh operator force, or nullopt to fall back to the scripted profile.
  std::function<std::optional<Vec3>(double t)> command;
  // Receives the current row at the telemetry rate.
  std::function<void(const LogRow&)> publish;
  // Called after every plant step (real-time pacing).
  std::function<void(double t)> pace;
  // Returning true ends the run early.
  std::function<bool()> stop;
};

inline Vec3 clamp_norm(const Vec3& f, double max_norm) {
  const double n = f.norm();
  return n > max_norm ? Vec3(f * (max_norm / n)) : f;
}

class Simulation {
 public:
  explicit Simulation(Scenario scenario)
      : sc_(std::move(scenario)),
        state_(sc_.initial_state),
        controller_(sc_.position, sc_.system),
        admittance_(sc_.admittance, ReferenceTrajectory::hold(sc_.reference_start(), sc_.reference_yaw)),
        filter_(sc_.attitude_filter_cutoff_hz),
        sensors_(sc_.sensor_noise_std, sc_.seed),
        pos_decimation_(sc_.position_decimation()),
        log_decimation_(sc_.log_decimation()) {
    sc_.validate();
    reference_ = admittance_.reference();
    wrench_.thrust = sc_.system.weight();
    try {
      allocator_ = std::make_unique<Allocator>(sc_.system, sc_.allocation_weights);
    } catch (const AllocationInfeasibleError& e) {
      allocation_feasible_ = false;
      event("allocation", std::string(e.what()) + "; wrench passed through unallocated");
    }
    log_.scenario_name = sc_.name;
    log_.dt = sc_.dt;
    log_.log_interval = sc_.dt * log_decimation_;
    log_.weight = sc_.system.weight();
    log_.attitude_gains = sc_.attitude;
    log_.rows.reserve(static_cast<std::size_t>(sc_.step_count() / log_decimation_ + 1));
  }

  /**
   * Advances one plant step with `applied` as the human force (clamped to the
   * scenario's maximum). Returns false once the run has diverged.
   */
  bool step(const Vec3& applied) {
    if (diverged_) {
      return false;
    }
    applied_ = clamp_norm(applied, sc_.max_external_force);
    measured_ = sensors_.measure(applied_).total;

    if (step_ % pos_decimation_ == 0) {
      outer_loop();
    }
    if (!filter_ready_) {
      filter_.reset(target_attitude_);
      filter_ready_ = true;
    } else {
      filter_.update(target_attitude_, sc_.dt);
    }
    attitude_ = attitude_control(filter_.output(), state_, sc_.attitude, sc_.system);
    wrench_.moments = attitude_.moments;
    allocate();

    if (step_ % log_decimation_ == 0) {
      log_.rows.push_back(current_row());
    }

    try {
      state_ = step_rk4(state_, wrench_, ExternalForce{applied_}, sc_.system, sc_.dt);
    } catch (const DivergedError& e) {
      diverged_ = true;
      state_ = e.state();
      log_.status = RunStatus::kDiverged;
      event("diverged", e.what());
      LogRow row = current_row();
      row.diverged = true;
      log_.rows.push_back(row);
      return false;
    }
    // Keep the clock an exact multiple of dt.
    ++step_;
    state_.t = static_cast<double>(step_) * sc_.dt;
    return true;
  }

  /// Row describing the current instant (state before the pending step).
  LogRow current_row() const {
    LogRow r;
    r.t = state_.t;
    r.eta = state_.eta;
    r.reference = reference_;
    r.attitude_reference = filter_.output();
    r.wrench = wrench_;
    r.actuators = actuators_;
    const PositionError e = position_errors(reference_, state_, sc_.position.gains);
    r.position_error = e.position;
    r.velocity_error = e.velocity;
    r.sliding = sliding_state(filter_.output(), state_, sc_.attitude);
    r.kv_hat = controller_.adaptive_state().kv_hat;
    r.v_pv = position_lyapunov(e, r.kv_hat, sc_.position.gains, sc_.position.kv_reference);
    r.v_phi = attitude_lyapunov(r.sliding.surface);
    if (state_.eta.allFinite()) {
      const StateVector eta_dot = state_derivative(state_.eta, wrench_, applied_, sc_.system);
      const Vec3 s_dot = sliding_surface_rate(filter_.output(), state_, eta_dot, sc_.attitude);
      r.v_phi_dot = r.sliding.surface.cwiseProduct(s_dot);
    }
    r.force_applied = applied_;
    r.force_measured = measured_;
    r.force_gated = admittance_.gated_force();
    r.gate_open = admittance_.gate_open();
    r.allocation_feasible = allocation_feasible_;
    r.saturated = saturated_;
    r.thrust_singular = singular_;
    return r;
  }

  bool finished() const { return diverged_ || step_ >= sc_.step_count(); }
  bool diverged() const { return diverged_; }
  std::int64_t step_index() const { return step_; }
  const SimState& state() const { return state_; }
  const Scenario& scenario() const { return sc_; }
  const WrenchCommand& wrench() const { return wrench_; }
  const ReferenceTrajectory& reference() const { return reference_; }
  const PositionController& position_controller() const { return controller_; }
  const RunLog& log() const { return log_; }
  RunLog take_log() { return std::move(log_); }

 private:
  void outer_loop() {
    if (!sc_.position_loop_enabled) {
      wrench_.thrust = sc_.system.weight();
      target_attitude_ = sc_.frozen_attitude;
      return;
    }
    const double pdt = sc_.position_dt();
    const bool was_open = admittance_.gate_open();
    reference_ = admittance_.step(measured_, pdt);
    if (admittance_.gate_open() != was_open) {
      event("gate", admittance_.gate_open() ? "opened" : "closed");
    }
    const PositionControlOutput out = controller_.update(reference_, state_, pdt);
    if (out.singular != singular_) {
      event("thrust_singularity", out.singular ? "u_vz + g <= 0, holding previous command" : "cleared");
    }
    singular_ = out.singular;
    saturated_ = out.saturated;
    wrench_.thrust = out.command.thrust;
    target_attitude_ = Vec3(out.command.roll, out.command.pitch, reference_.yaw);
  }

  void allocate() {
    if (!allocator_) {
      actuators_ = ActuatorCommand{};
      return;
    }
    actuators_ = allocator_->allocate(wrench_);
    bool feasible = actuators_.thrusts_nonnegative();
    std::string why = feasible ? "" : "negative quadrotor thrust";
    for (int q = 0; q < 2 && feasible; ++q) {
      try {
        mix_to_rotors(actuators_.thrust(q), actuators_.moments(q), sc_.rotor, q);
      } catch (const ActuatorSaturationError& e) {
        feasible = false;
        why = e.what();
      }
    }
    allocation_feasible_ = feasible;
    track_infeasibility(feasible, why);
  }

  // Infeasible steps are grouped into episodes so that chattering near the
  // limit produces one start and one end event rather than one per step.
  void track_infeasibility(bool feasible, const std::string& why) {
    constexpr int kQuietSteps = 100;
    if (!feasible) {
      if (!episode_open_) {
        episode_open_ = true;
        episode_start_ = state_.t;
        episode_steps_ = 0;
        event("allocation", "infeasible: " + why);
      }
      ++episode_steps_;
      feasible_run_ = 0;
    } else if (episode_open_ && ++feasible_run_ >= kQuietSteps) {
      episode_open_ = false;
      std::ostringstream msg;
      msg << "feasible again; " << episode_steps_ << " infeasible steps since t=" << episode_start_ << " s";
      event("allocation", msg.str());
    }
  }

  void event(std::string kind, std::string msg) {
    log_.events.push_back({state_.t, std::move(kind), std::move(msg)});
  }

  Scenario sc_;
  SimState state_;
  PositionController controller_;
  AdmittanceFilter admittance_;
  DesiredAttitudeFilter filter_;
  ForceSensorPair sensors_;
  std::unique_ptr<Allocator> allocator_;
  int pos_decimation_;
  int log_decimation_;

  std::int64_t step_ = 0;
  bool diverged_ = false;
  bool filter_ready_ = false;
  ReferenceTrajectory reference_;
  Vec3 target_attitude_ = Vec3::Zero();
  WrenchCommand wrench_;
  AttitudeControlOutput attitude_;
  ActuatorCommand actuators_;
  Vec3 applied_ = Vec3::Zero();
  Vec3 measured_ = Vec3::Zero();
  AxisMask saturated_ = AxisMask::Constant(false);
  bool singular_ = false;
  bool allocation_feasible_ = true;
  bool episode_open_ = false;
  double episode_start_ = 0.0;
  long episode_steps_ = 0;
  int feasible_run_ = 0;
  RunLog log_;
};

/**
 * Runs a scenario to completion. With hooks, a fresh live command replaces
 * the scripted force; without one the scripted profile applies, so a live
 * run that never receives a command matches the scripted run exactly.
 */
inline RunLog run(const Scenario& scenario, const LiveHooks* hooks = nullptr) {
  Simulation sim(scenario);
  const double publish_period = 1.0 / scenario.telemetry_rate_hz;
  double next_publish = 0.0;
  while (!sim.finished()) {
    const double t = sim.state().t;
    if (hooks && hooks->stop && hooks->stop()) {
      break;
    }
    Vec3 force = scenario.force_at(t);
    if (hooks && hooks->command) {
      if (auto live = hooks->command(t)) {
        force = *live;
      }
    }
    const bool ok = sim.step(force);
    if (hooks && hooks->publish && (t >= next_publish || !ok)) {
      hooks->publish(sim.current_row());
      next_publish += publish_period;
    }
    if (hooks && hooks->pace) {
      hooks->pace(sim.state().t);
    }
  }
  return sim.take_log();
}

}  // namespace duolift
