// spinhover: simulate scenarios, analyze attitude stability, run the
// acceptance battery.

#include "spinhover/acceptance.hpp"
#include "spinhover/config.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace spinhover;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitCrash = 2;
constexpr int kExitSuiteFailed = 3;

struct Common {
  std::string config;
  std::string scenario;
  std::string preset;
  std::string out;
};

void add_common(CLI::App* cmd, Common& o) {
  cmd->add_option("--config", o.config, "Configuration file (defaults when omitted)");
  cmd->add_option("--scenario", o.scenario, "Named scenario")
      ->check(CLI::IsMember(scenario_names()));
  cmd->add_option("--preset", o.preset, "Noise preset, replaces the [noise] section")
      ->check(CLI::IsMember({"ideal", "realistic"}));
}

Config load(const Common& o) {
  std::optional<std::string> scenario;
  if (!o.scenario.empty()) scenario = o.scenario;
  Config c = o.config.empty() ? default_config(scenario.value_or("bicopter_circle"))
                              : load_config(o.config, scenario);
  if (!o.preset.empty()) c.scenario.noise = noise_preset(o.preset);
  if (!o.out.empty()) c.output.directory = o.out;
  return c;
}

// Writes to `path` through a temporary so a failed run leaves nothing behind.
template <typename Fn>
void write_file(const fs::path& path, Fn&& body) {
  const fs::path tmp = path.string() + ".part";
  {
    std::ofstream os(tmp);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    body(os);
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

int cmd_simulate(const Common& o, std::uint64_t seed) {
  const Config c = load(o);
  require_stable_config(c);

  const ScenarioResult r = run_scenario(c.scenario, c.sim, seed);
  const fs::path dir = c.output.directory;
  fs::create_directories(dir);
  const std::string stem = c.scenario.name + "_" + std::to_string(seed);
  if (c.output.csv) {
    write_file(dir / (stem + ".csv"), [&](std::ostream& os) { write_log_csv(os, r.log); });
  }
  if (c.output.json) {
    write_file(dir / (stem + ".json"), [&](std::ostream& os) { write_metrics_json(os, r); });
  }
  write_file(dir / (stem + ".cfg"), [&](std::ostream& os) { write_config(os, c); });

  const FlightMetrics& m = r.metrics;
  std::cout << std::setprecision(4) << "scenario   " << c.scenario.name << " (seed " << seed
            << ", " << r.log.size() << " records)\n"
            << "rms        horizontal " << m.rms_horizontal << " m, vertical " << m.rms_vertical
            << " m\n"
            << "mode       " << (m.detected_mode ? to_string(*m.detected_mode) : "none") << '\n';
  if (c.scenario.trajectory == TrajectoryKind::HandThrow) {
    std::cout << "recovery   " << (m.recovered ? "yes" : "no");
    if (m.recovered) std::cout << " after " << m.recovery_time << " s";
    std::cout << '\n';
  }
  std::cout << "output     " << (dir / stem).string() << ".{csv,json,cfg}\n";
  if (m.mode_mismatch) {
    std::cerr << "mode mismatch: detector latched "
              << (m.detected_mode ? to_string(*m.detected_mode) : "nothing") << " for a "
              << to_string(c.scenario.vehicle) << '\n';
    return kExitCrash;
  }
  if (m.crashed) {
    std::cerr << "crashed at t=" << m.crash_time << " s: " << m.crash_reason << '\n';
    return kExitCrash;
  }
  return kExitOk;
}

int cmd_analyze(const Common& o, int grid) {
  Config c = load(o);
  if (grid > 0) c.sweep.kp_steps = c.sweep.kd_steps = grid;

  const Handedness h =
      c.scenario.vehicle == VehicleConfig::BicopterCcw ? Handedness::Ccw : Handedness::Cw;
  const VehicleParams p = make_bicopter(c.sim.airframe, h);
  const double spin = equilibrium_yaw_rate(p);
  if (spin == 0.0) {
    std::cerr << "equilibrium yaw rate is zero (torque_ratio_m = "
              << c.sim.airframe.torque_ratio
              << "): without a steady spin there is no gyroscopic stiffness, so the "
                 "precession and stability analysis do not apply\n";
    return kExitError;
  }
  const AttitudeGains configured{c.sim.gains.k_tau_p, c.sim.gains.k_tau_d};
  const StabilityReport undamped = routh_hurwitz_check({configured.kp, 0.0}, p);
  const StabilityReport report = routh_hurwitz_check(configured, p);

  std::cout << std::setprecision(4) << "unit                 " << to_string(p.airframe)
            << " (delta " << std::showpos << p.handedness << std::noshowpos << ")\n"
            << "equilibrium yaw rate " << spin << " rad/s\n"
            << "precession rate      " << precession_rate(p) << " rad/s\n"
            << std::setprecision(3) << "K_tau_p bound        " << undamped.kp_upper_bound
            << " N m/rad at K_tau_d = 0\n"
            << "                     " << report.kp_upper_bound << " N m/rad at K_tau_d = "
            << configured.kd << '\n'
            << "configured gains     K_tau_p = " << configured.kp << ", K_tau_d = "
            << configured.kd << ": " << to_string(report.verdict);
  if (!report.violated.empty()) std::cout << " (" << report.violated << ")";
  std::cout << '\n';

  const auto rows = stability_map(c.sim.airframe, c.sweep, {h});
  const fs::path dir = c.output.directory;
  fs::create_directories(dir);
  const fs::path csv = dir / "stability_map.csv";
  write_file(csv, [&](std::ostream& os) { write_stability_csv(os, rows); });
  std::cout << "stability map        " << csv.string() << " (" << rows.size() << " rows)\n";
  return kExitOk;
}

std::vector<std::string> split_ids(const std::string& s) {
  std::vector<std::string> ids;
  std::stringstream ss(s);
  std::string id;
  while (std::getline(ss, id, ',')) {
    if (!id.empty()) ids.push_back(id);
  }
  return ids;
}

int cmd_suite(const Common& o, const std::optional<std::string>& only) {
  const Config c = load(o);
  std::vector<std::string> ids;
  if (only) {
    ids = split_ids(*only);
    if (ids.empty()) {
      std::cerr << "warning: no criteria selected, nothing was checked (vacuous pass)\n";
      return kExitOk;
    }
  }
  const auto results = run_acceptance(c, ids, &std::cout);
  std::size_t passed = 0;
  for (const auto& r : results) passed += r.passed;
  std::cout << passed << "/" << results.size() << " criteria passed\n";
  return passed == results.size() ? kExitOk : kExitSuiteFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spinning bicopter / quadcopter flight simulator"};
  app.require_subcommand(1);

  Common sim_opts, ana_opts, suite_opts;
  std::uint64_t seed = 1;
  int grid = 0;
  std::string only;

  CLI::App* simulate = app.add_subcommand("simulate", "Run one scenario and write its log");
  add_common(simulate, sim_opts);
  simulate->add_option("--seed", seed, "Noise seed");
  simulate->add_option("--out", sim_opts.out, "Output directory");

  CLI::App* analyze = app.add_subcommand("analyze", "Equilibrium, precession and gain bounds");
  add_common(analyze, ana_opts);
  analyze->add_option("--out", ana_opts.out, "Output directory for the stability map");
  analyze->add_option("--grid", grid, "Points per gain axis (overrides [sweep])")
      ->check(CLI::Range(2, 10000));

  CLI::App* suite = app.add_subcommand("suite", "Run the acceptance battery");
  add_common(suite, suite_opts);
  CLI::Option* only_opt =
      suite->add_option("--only", only, "Comma-separated criterion ids (all when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*simulate) return cmd_simulate(sim_opts, seed);
    if (*analyze) return cmd_analyze(ana_opts, grid);
    if (*suite) {
      return cmd_suite(suite_opts, *only_opt ? std::optional<std::string>(only) : std::nullopt);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "rejected: " << e.what() << '\n';
    return kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return kExitError;
}
