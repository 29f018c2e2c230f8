// duolift: run scenarios, check acceptance, serve live sessions, query the allocator.

#include "duolift/duolift.hpp"
#include "duolift/harness/acceptance.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

namespace fs = std::filesystem;
using namespace duolift;

namespace {

std::atomic<bool> g_interrupted{false};

struct Common {
  std::string scenario;
  std::string out;
  std::optional<double> dt;
  std::optional<std::uint64_t> seed;
  std::size_t stride = 1;
};

Scenario load_with_overrides(const Common& c) {
  Scenario sc = load_scenario(c.scenario);
  if (c.dt) sc.dt = *c.dt;
  if (c.seed) sc.seed = *c.seed;
  sc.validate();
  return sc;
}

void write_outputs(const RunLog& log, const std::string& dir, std::size_t stride = 1) {
  fs::create_directories(dir);
  const fs::path csv = fs::path(dir) / (log.scenario_name + ".csv");
  const fs::path summary = fs::path(dir) / (log.scenario_name + "_summary.json");
  {
    std::ofstream out(csv);
    write_csv(out, log, stride);
  }
  {
    std::ofstream out(summary);
    out << run_summary(log).dump(2) << '\n';
  }
  std::cout << "wrote " << csv.string() << " and " << summary.string() << '\n';
}

void print_brief(const RunLog& log) {
  const RunMetrics m = compute_metrics(log);
  std::printf("%s: %s, %zu rows, max |E_p| %.3g m, max |E_phi| %.3g rad, thrust %.3f..%.3f N\n",
              log.scenario_name.c_str(), m.status.c_str(), m.rows, m.position_error.max_abs.maxCoeff(),
              m.attitude_error.max_abs.maxCoeff(), m.thrust.min, m.thrust.max);
  for (const auto& e : log.events) {
    std::printf("  t=%.3f %s: %s\n", e.t, e.kind.c_str(), e.message.c_str());
  }
}

int cmd_run(const Common& c) {
  const Scenario sc = load_with_overrides(c);
  const RunLog log = run(sc);
  print_brief(log);
  write_outputs(log, c.out.empty() ? "." : c.out, c.stride);
  return log.status == RunStatus::kCompleted ? 0 : 2;
}

int cmd_verify(const std::string& scenario_dir, const std::string& golden_dir, const std::string& out) {
  const auto results = acceptance::run_all({scenario_dir, golden_dir});
  int failed = 0;
  nlohmann::json report = nlohmann::json::array();
  for (const auto& r : results) {
    std::printf("%s  %-38s %7.3f s  %s\n", r.passed ? "PASS" : "FAIL", r.name.c_str(), r.elapsed_s,
                r.detail.c_str());
    failed += r.passed ? 0 : 1;
    report.push_back({{"name", r.name}, {"passed", r.passed}, {"detail", r.detail}, {"elapsed_s", r.elapsed_s}});
  }
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "verify.json") << report.dump(2) << '\n';
  }
  std::printf("%d of %zu criteria failed\n", failed, results.size());
  return failed == 0 ? 0 : 1;
}

int cmd_serve(const Common& c, std::uint16_t port) {
  const Scenario sc = load_with_overrides(c);
  if (!sc.live_mode) {
    throw ScenarioError("serve needs a scenario with \"live_mode\": true");
  }
  TelemetryServer::Options opt;
  opt.port = port;
  TelemetryServer server(opt);
  LiveSession session(server, sc.max_external_force);
  LiveHooks hooks = session.hooks();
  const auto start = std::chrono::steady_clock::now();
  hooks.pace = [start](double t) { std::this_thread::sleep_until(start + std::chrono::duration<double>(t)); };
  hooks.stop = [] { return g_interrupted.load(); };
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });

  std::printf("serving %s on 127.0.0.1:%u for %.1f s (Ctrl-C to stop)\n", sc.name.c_str(), server.port(),
              sc.duration);
  std::fflush(stdout);
  const RunLog log = run(sc, &hooks);
  server.stop();
  print_brief(log);
  if (!c.out.empty()) write_outputs(log, c.out);
  return log.status == RunStatus::kCompleted ? 0 : 2;
}

int cmd_allocate(const std::string& scenario, const std::vector<double>& wrench) {
  Scenario sc;
  if (!scenario.empty()) sc = load_scenario(scenario);
  const Allocator alloc(sc.system, sc.allocation_weights);
  const WrenchCommand w{wrench[0], Vec3(wrench[1], wrench[2], wrench[3])};
  const ActuatorCommand u = alloc.allocate(w);
  nlohmann::json j;
  j["wrench"] = wrench;
  j["u_d"] = std::vector<double>(u.u.data(), u.u.data() + 8);
  j["residual_norm"] = alloc.residual(u, w).norm();
  j["cost"] = alloc.cost(u);
  j["rotor_speeds_radps"] = nlohmann::json::array();
  for (int q = 0; q < 2; ++q) {
    try {
      const Vec4 omega = mix_to_rotors(u.thrust(q), u.moments(q), sc.rotor, q);
      j["rotor_speeds_radps"].push_back(std::vector<double>(omega.data(), omega.data() + 4));
    } catch (const ActuatorSaturationError& e) {
      j["rotor_speeds_radps"].push_back(nullptr);
      j["warnings"].push_back(e.what());
    }
  }
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-quadrotor payload transport simulator"};
  app.require_subcommand(1);

  Common common;
  std::uint16_t port = 9870;
  std::vector<double> wrench;
  std::string scenario_dir = DUOLIFT_SCENARIO_DIR;
  std::string golden_dir = DUOLIFT_GOLDEN_DIR;

  auto add_common = [&](CLI::App* sub, bool scenario_required) {
    auto* opt = sub->add_option("--scenario", common.scenario, "Scenario file (JSON)")->check(CLI::ExistingFile);
    if (scenario_required) opt->required();
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--dt", common.dt, "Override the plant step, s");
    sub->add_option("--seed", common.seed, "Override the random seed");
  };

  auto* run_cmd = app.add_subcommand("run", "Run a scenario and write the CSV log and JSON summary");
  add_common(run_cmd, true);
  run_cmd->add_option("--stride", common.stride, "Write every N-th log row")->check(CLI::PositiveNumber);

  auto* verify_cmd = app.add_subcommand("verify", "Run the acceptance suite");
  verify_cmd->add_option("--out", common.out, "Directory for verify.json");
  verify_cmd->add_option("--scenario-dir", scenario_dir, "Directory holding the reference scenarios");
  verify_cmd->add_option("--golden-dir", golden_dir, "Directory holding the golden logs");

  auto* serve_cmd = app.add_subcommand("serve", "Run a live scenario in real time with telemetry");
  add_common(serve_cmd, true);
  serve_cmd->add_option("--port", port, "TCP port (0 picks a free one)");

  auto* alloc_cmd = app.add_subcommand("allocate", "Split one wrench [U_th U_m1 U_m2 U_m3] between the quadrotors");
  alloc_cmd->add_option("--scenario", common.scenario, "Scenario file for geometry and weights")
      ->check(CLI::ExistingFile);
  alloc_cmd->add_option("--wrench", wrench, "U_th U_m1 U_m2 U_m3 (N, N m)")->expected(4)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return cmd_run(common);
    if (*verify_cmd) return cmd_verify(scenario_dir, golden_dir, common.out);
    if (*serve_cmd) return cmd_serve(common, port);
    if (*alloc_cmd) return cmd_allocate(common.scenario, wrench);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
