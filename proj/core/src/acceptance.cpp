#include "spinhover/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>

namespace spinhover {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

CriterionResult make(const std::string& id, const std::string& title) {
  CriterionResult r;
  r.id = id;
  r.title = title;
  return r;
}

// The config's own scenario when it is the named one, the preset otherwise.
Scenario pick(const Config& c, const std::string& name) {
  Scenario s = c.scenario_name == name ? c.scenario : scenario_preset(name);
  s.detection_window = c.sim.detector.window;
  return s;
}

VehicleParams drag_free(const Config& c) {
  AirframeConstants k = c.sim.airframe;
  k.drag_h = 0.0;
  k.drag_v = 0.0;
  return make_bicopter(k, Handedness::Cw);
}

Vec3 angular_momentum(const RigidBodyState& s, const VehicleParams& p) {
  return s.orientation * (p.inertia() * s.omega);
}

double kinetic_energy(const RigidBodyState& s, const VehicleParams& p) {
  return 0.5 * s.omega.dot(p.inertia() * s.omega);
}

RigidBodyState tumbling_state() {
  RigidBodyState s;
  s.orientation = orientation_from_xi(Vec2(0.1, -0.05), 0.3);
  s.omega = Vec3(2.0, -1.0, 30.0);
  return s;
}

std::string log_csv(const ScenarioResult& r) {
  std::ostringstream os;
  write_log_csv(os, r.log);
  return os.str();
}

}  // namespace

double rk4_empirical_order(const VehicleParams& p, double horizon, double dt) {
  MotorCommand idle;
  idle.thrust.assign(p.propellers.size(), 0.0);
  const Eigen::VectorXd x0 = PlantVector::pack(tumbling_state(), {});
  auto run = [&](double h) {
    Eigen::VectorXd x = x0;
    const long n = std::lround(horizon / h);
    for (long i = 0; i < n; ++i) {
      x = rk4_step([&](double, const Eigen::VectorXd& y) { return dynamics_derivative(y, idle, p); },
                   x, i * h, h);
    }
    return x;
  };
  const Eigen::VectorXd fine = run(dt / 64.0);
  const double e1 = (run(dt) - fine).norm();
  const double e2 = (run(dt / 2.0) - fine).norm();
  return std::log2(e1 / e2);
}

double measured_precession_rate(const VehicleParams& p, double horizon, double dt) {
  ReducedAttitudeState s;
  s.xi_dot = Vec2(1e-3, 0.0);
  s.spin = equilibrium_yaw_rate(p);
  using Vec4 = Eigen::Vector4d;
  Vec4 x;
  x << s.xi, s.xi_dot;
  auto f = [&](double, const Vec4& y) {
    ReducedAttitudeState r{y.head<2>(), y.tail<2>(), 0.0, s.spin};
    const ReducedAttitudeDerivative d = reduced_attitude_derivative(r, Vec2::Zero(), p);
    Vec4 dy;
    dy << d.xi_dot, d.xi_ddot;
    return dy;
  };
  // Least-squares slope of the unwrapped phase of xi'.
  const long n = std::lround(horizon / dt);
  double phase = std::atan2(x(3), x(2)), last = phase;
  double st = 0, sp = 0, stt = 0, stp = 0;
  for (long i = 0; i <= n; ++i) {
    const double t = i * dt;
    if (i > 0) {
      x = rk4_step(f, x, t - dt, dt);
      const double a = std::atan2(x(3), x(2));
      phase += wrap_angle(a - last);
      last = a;
    }
    st += t;
    sp += phase;
    stt += t * t;
    stp += t * phase;
  }
  const double m = static_cast<double>(n + 1);
  return std::abs((m * stp - st * sp) / (m * stt - st * st));
}

CriterionResult check_relaxed_hover(const Config& c) {
  CriterionResult r = make("relaxed_hover", "Relaxed-hover spin-up converges to the equilibrium yaw rate");
  const auto start = Clock::now();
  const VehicleParams p = make_bicopter(c.sim.airframe, Handedness::Cw);
  const RelaxedHoverEquilibrium eq = relaxed_hover_equilibrium(p);
  Plant plant(p, RigidBodyState{});
  plant.set_command(MotorCommand{std::vector<double>(p.propellers.size(), eq.thrust_per_prop)});
  const long steps = std::lround(tolerance::kSpinupHorizon / c.sim.physics_dt);
  double settled_at = -1.0;
  double error = 1.0;
  for (long i = 0; i < steps; ++i) {
    plant.step(c.sim.physics_dt);
    error = std::abs(plant.state().omega.z() - eq.yaw_rate) / std::abs(eq.yaw_rate);
    if (error < tolerance::kSpinupRelative) {
      if (settled_at < 0.0) settled_at = plant.time();
    } else {
      settled_at = -1.0;
    }
  }
  r.wall_seconds = seconds_since(start);
  r.passed = settled_at >= 0.0 && r.wall_seconds < tolerance::kSpinupWall;
  r.detail = "Omega*=" + fmt(eq.yaw_rate) + " rad/s, error at " + fmt(tolerance::kSpinupHorizon) +
             " s=" + fmt(100.0 * error, 3) + "%, within 1% from t=" +
             (settled_at >= 0.0 ? fmt(settled_at) + " s" : std::string("never")) +
             ", wall=" + fmt(r.wall_seconds, 3) + " s";
  return r;
}

CriterionResult check_precession(const Config& c) {
  CriterionResult r = make("precession", "Torque-free reduced model precesses at I_z Omega*/I_d");
  const auto start = Clock::now();
  AirframeConstants k = c.sim.airframe;
  k.drag_v = 0.0;
  const VehicleParams p = make_bicopter(k, Handedness::Cw);
  const double expected = precession_rate(p);
  const double measured = measured_precession_rate(p);
  const double rel = std::abs(measured - expected) / expected;
  r.wall_seconds = seconds_since(start);
  r.passed = rel < tolerance::kPrecessionRelative;
  r.detail = "omega_p expected=" + fmt(expected) + " measured=" + fmt(measured, 6) +
             " rad/s (rel " + fmt(rel, 2) + ")";
  return r;
}

CriterionResult check_routh_hurwitz(const Config& c) {
  CriterionResult r = make("routh_hurwitz", "Routh-Hurwitz verdicts agree with eigenvalues on the gain grid");
  const auto start = Clock::now();
  const auto rows = stability_map(c.sim.airframe, c.sweep, {Handedness::Cw, Handedness::Ccw});
  std::size_t compared = 0, agree = 0, marginal = 0, stable = 0;
  for (const StabilityMapRow& row : rows) {
    if (row.verdict == Stability::Marginal) {
      ++marginal;
      continue;
    }
    ++compared;
    const bool rh_stable = row.verdict == Stability::Stable;
    stable += rh_stable;
    if (rh_stable == (row.max_real_eig < 0.0)) ++agree;
  }
  r.wall_seconds = seconds_since(start);
  r.passed = compared > 0 && agree == compared;
  r.detail = std::to_string(agree) + "/" + std::to_string(compared) + " agree (" +
             std::to_string(stable) + " stable, " + std::to_string(marginal) +
             " marginal skipped, " + std::to_string(rows.size()) + " points)";
  return r;
}

CriterionResult check_cycle_average(const Config& c) {
  CriterionResult r = make("cycle_average", "Cyclic allocation realizes the commanded torque on cycle average");
  const auto start = Clock::now();
  const VehicleParams p = make_bicopter(c.sim.airframe, Handedness::Cw);
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> dist(-2e-3, 2e-3);
  constexpr int kSamples = 720;  // two heading cycles
  double worst_mean = 0.0, worst_residual = 0.0, min_ripple = 1e300;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec2 desired(dist(rng), dist(rng));
    Vec2 sum = Vec2::Zero();
    Vec2 residual_sum = Vec2::Zero();
    double ripple = 0.0;
    for (int i = 0; i < kSamples; ++i) {
      const double psi = 2.0 * 2.0 * kPi * i / kSamples;
      const double u = allocate_cyclic(desired, psi);
      const Vec2 realized = inertial_torque(psi, u, Vec2::Zero(), p).thrust;
      sum += realized;
      residual_sum += realized - desired;
      ripple = std::max(ripple, (realized - desired).norm());
    }
    const double scale = desired.norm();
    worst_mean = std::max(worst_mean, (sum / kSamples - desired).norm() / scale);
    worst_residual = std::max(worst_residual, (residual_sum / kSamples).norm() / scale);
    min_ripple = std::min(min_ripple, ripple / scale);
  }
  r.wall_seconds = seconds_since(start);
  // The residual must average out while being present instant by instant.
  r.passed = worst_mean < tolerance::kCycleAverageRelative &&
             worst_residual < tolerance::kCycleAverageRelative && min_ripple > 0.5;
  r.detail = "worst mean error " + fmt(worst_mean, 2) + ", worst residual mean " +
             fmt(worst_residual, 2) + ", residual amplitude >= " + fmt(min_ripple, 3) +
             " x |tau| over 100 draws";
  return r;
}

CriterionResult check_linearization(const Config& c) {
  CriterionResult r = make("linearization", "Reduced attitude model tracks the full plant for small tilt");
  const auto start = Clock::now();
  const VehicleParams p = make_bicopter(c.sim.airframe, Handedness::Cw);
  const double a = tolerance::kLinearizationTilt;
  const std::vector<Vec2> tilts = {Vec2(a, 0.0), Vec2(0.0, -a), Vec2(a, a) / std::sqrt(2.0),
                                   Vec2(0.01, 0.02)};
  const std::vector<Vec2> torques = {Vec2::Zero(), Vec2(2e-4, 0.0), Vec2(-1e-4, 1.5e-4)};
  double worst = 0.0;
  for (const Vec2& xi0 : tilts) {
    for (const Vec2& tau : torques) {
      worst = std::max(worst,
                       linearization_error(p, xi0, cyclic_program(tau), 1.0).max_deviation);
    }
  }
  r.wall_seconds = seconds_since(start);
  r.passed = worst < tolerance::kLinearization;
  r.detail = "max |xi_full - xi_reduced| = " + fmt(worst, 3) + " rad over " +
             std::to_string(tilts.size() * torques.size()) + " cases, 1 s each";
  return r;
}

CriterionResult check_bicopter_flight(const Config& c) {
  CriterionResult r = make("bicopter_flight", "Bicopter takeoff/hover/circle/land within the RMS bounds");
  const auto start = Clock::now();
  Scenario s = pick(c, "bicopter_circle");
  s.noise = NoiseSpec::ideal();
  Config gate = c;
  gate.scenario = s;
  require_stable_config(gate);
  const ScenarioResult res = run_scenario(s, c.sim, 1);
  const FlightMetrics& m = res.metrics;
  r.wall_seconds = seconds_since(start);
  r.passed = !m.crashed && !m.mode_mismatch && m.rms_horizontal <= tolerance::kBicopterRmsH &&
             m.rms_vertical <= tolerance::kBicopterRmsV && r.wall_seconds < tolerance::kBicopterWall;
  r.detail = "rms_h=" + fmt(m.rms_horizontal, 3) + " m (<= " + fmt(tolerance::kBicopterRmsH) +
             "), rms_v=" + fmt(m.rms_vertical, 3) + " m (<= " + fmt(tolerance::kBicopterRmsV) +
             "), duty=" + fmt(m.deadzone_duty, 2) + (m.crashed ? ", CRASHED: " + m.crash_reason : "") +
             ", wall=" + fmt(r.wall_seconds, 3) + " s";
  return r;
}

CriterionResult check_quad_flight(const Config& c) {
  CriterionResult r = make("quad_flight", "Quadcopter ellipse, single and split brain, within the RMS bounds");
  const auto start = Clock::now();
  Scenario single = pick(c, "quad_ellipse");
  Scenario split = pick(c, "split_brain_ellipse");
  single.noise = split.noise = NoiseSpec::ideal();
  single.split_brain = false;
  split.split_brain = true;
  split.board_failure_at.reset();
  const ScenarioResult a = run_scenario(single, c.sim, 1);
  const ScenarioResult b = run_scenario(split, c.sim, 1);
  auto ok = [](const FlightMetrics& m) {
    return !m.crashed && !m.mode_mismatch && m.rms_horizontal <= tolerance::kQuadRmsH &&
           m.rms_vertical <= tolerance::kQuadRmsV;
  };
  bool identical = a.log.size() == b.log.size();
  for (std::size_t i = 0; identical && i < a.log.size(); ++i) {
    const SimLogRecord &x = a.log[i], &y = b.log[i];
    identical = x.position == y.position && x.velocity == y.velocity &&
                x.omega == y.omega && x.orientation.coeffs() == y.orientation.coeffs();
    for (int k = 0; k < 4; ++k) identical = identical && x.motor[k] == y.motor[k];
  }
  identical = identical && log_csv(a) == log_csv(b);
  r.wall_seconds = seconds_since(start);
  r.passed = ok(a.metrics) && ok(b.metrics) && identical;
  r.detail = "single rms_h=" + fmt(a.metrics.rms_horizontal, 3) + " rms_v=" +
             fmt(a.metrics.rms_vertical, 3) + ", split rms_h=" + fmt(b.metrics.rms_horizontal, 3) +
             " rms_v=" + fmt(b.metrics.rms_vertical, 3) + " m (<= " + fmt(tolerance::kQuadRmsH) +
             "/" + fmt(tolerance::kQuadRmsV) + "), logs " +
             (identical ? "bit-identical" : "DIFFER");
  return r;
}

CriterionResult check_mode_detection(const Config& c) {
  CriterionResult r = make("mode_detection", "Launch spin selects the flight mode");
  const auto start = Clock::now();
  auto launch = [&](VehicleConfig v, double rate) {
    Scenario s = pick(c, v == VehicleConfig::Quadcopter ? "quad_hover" : "hover");
    s.vehicle = v;
    s.trajectory = TrajectoryKind::Hover;
    s.duration = 12.0;
    s.launch_yaw_rate = rate;
    s.noise = NoiseSpec::ideal();
    return run_scenario(s, c.sim, 1).metrics;
  };
  auto name = [](const FlightMetrics& m) {
    return std::string(m.detected_mode ? to_string(*m.detected_mode) : "none");
  };
  const FlightMetrics spun = launch(VehicleConfig::BicopterCw, tolerance::kLaunchRate);
  const FlightMetrics still = launch(VehicleConfig::Quadcopter, 0.0);
  const FlightMetrics edge = launch(VehicleConfig::BicopterCw, tolerance::kThresholdRate);
  r.wall_seconds = seconds_since(start);
  const bool spun_ok = spun.detected_mode == FlightMode::Bicopter && !spun.crashed &&
                       !spun.mode_mismatch;
  const bool still_ok = still.detected_mode == FlightMode::Quadcopter && !still.crashed;
  const bool edge_ok = edge.detected_mode == FlightMode::Quadcopter;
  r.passed = spun_ok && still_ok && edge_ok;
  r.detail = "10 rad/s -> " + name(spun) + (spun.crashed ? " (crashed)" : " (hovered)") +
             ", 0 rad/s -> " + name(still) + ", 8.7 rad/s -> " + name(edge);
  return r;
}

CriterionResult check_hand_throw(const Config& c) {
  CriterionResult r = make("hand_throw", "Hand-thrown bicopter recovers to a position hold");
  const auto start = Clock::now();
  Scenario s = pick(c, "hand_throw_random");
  s.trajectory = TrajectoryKind::HandThrow;
  s.hand_throw.randomize = true;
  s.hand_throw.tilt_max = tolerance::kThrowTiltMax;
  s.hand_throw.yaw_rate = tolerance::kThrowYawRate;
  s.noise = NoiseSpec::realistic();

  std::vector<std::future<FlightMetrics>> runs;
  for (int seed = 1; seed <= tolerance::kThrowSeeds; ++seed) {
    runs.push_back(std::async(std::launch::async, [&s, &c, seed] {
      return run_scenario(s, c.sim, static_cast<std::uint64_t>(seed)).metrics;
    }));
  }
  int recovered = 0;
  double slowest = 0.0;
  std::string failed;
  for (int i = 0; i < tolerance::kThrowSeeds; ++i) {
    const FlightMetrics m = runs[i].get();
    if (m.recovered && !m.crashed) {
      ++recovered;
      slowest = std::max(slowest, m.recovery_time);
    } else {
      failed += (failed.empty() ? "" : ",") + std::to_string(i + 1);
    }
  }
  r.wall_seconds = seconds_since(start);
  const double rate = static_cast<double>(recovered) / tolerance::kThrowSeeds;
  r.passed = rate >= tolerance::kThrowSuccess;
  r.detail = std::to_string(recovered) + "/" + std::to_string(tolerance::kThrowSeeds) +
             " recovered (need " + fmt(100.0 * tolerance::kThrowSuccess) + "%), slowest " +
             fmt(slowest, 3) + " s" + (failed.empty() ? "" : ", failed seeds " + failed);
  return r;
}

CriterionResult check_conservation(const Config& c) {
  CriterionResult r = make("conservation", "Free-body invariants, RK4 order and run determinism");
  const auto start = Clock::now();
  const VehicleParams p = drag_free(c);

  Plant plant(p, tumbling_state());
  plant.set_command(MotorCommand{std::vector<double>(p.propellers.size(), 0.0)});
  const Vec3 l0 = angular_momentum(plant.state(), p);
  const double e0 = kinetic_energy(plant.state(), p);
  double dl = 0.0, de = 0.0;
  const long steps = std::lround(10.0 / c.sim.physics_dt);
  for (long i = 0; i < steps; ++i) {
    plant.step(c.sim.physics_dt);
    dl = std::max(dl, (angular_momentum(plant.state(), p) - l0).norm() / l0.norm());
    de = std::max(de, std::abs(kinetic_energy(plant.state(), p) - e0) / e0);
  }

  const double order = rk4_empirical_order(p);

  Scenario s = pick(c, "hand_throw_random");
  s.noise = NoiseSpec::realistic();
  const std::string first = log_csv(run_scenario(s, c.sim, 7));
  const std::string second = log_csv(run_scenario(s, c.sim, 7));
  const bool deterministic = first == second;

  r.wall_seconds = seconds_since(start);
  r.passed = dl < tolerance::kConservationRelative && de < tolerance::kConservationRelative &&
             std::abs(order - tolerance::kRk4Order) <= tolerance::kRk4OrderBand && deterministic;
  std::ostringstream hash;
  hash << std::hex << std::hash<std::string>{}(first);
  r.detail = "|dL|/L=" + fmt(dl, 2) + ", |dE|/E=" + fmt(de, 2) + " over 10 s, RK4 order " +
             fmt(order, 4) + ", log hash " + hash.str() + (deterministic ? " repeated" : " CHANGED");
  return r;
}

const std::vector<AcceptanceCriterion>& acceptance_criteria() {
  static const std::vector<AcceptanceCriterion> all = {
      {"relaxed_hover", "relaxed-hover convergence", check_relaxed_hover},
      {"precession", "precession oracle", check_precession},
      {"routh_hurwitz", "Routh-Hurwitz vs eigenvalues", check_routh_hurwitz},
      {"cycle_average", "cycle-average allocation identity", check_cycle_average},
      {"linearization", "reduced vs full model", check_linearization},
      {"bicopter_flight", "bicopter flight", check_bicopter_flight},
      {"quad_flight", "quadcopter flight", check_quad_flight},
      {"mode_detection", "mode detection", check_mode_detection},
      {"hand_throw", "hand-throw recovery", check_hand_throw},
      {"conservation", "conservation and convergence", check_conservation},
  };
  return all;
}

std::vector<CriterionResult> run_acceptance(const Config& config,
                                            const std::vector<std::string>& only,
                                            std::ostream* progress) {
  for (const std::string& id : only) {
    bool known = false;
    for (const auto& c : acceptance_criteria()) known = known || c.id == id;
    if (!known) throw ConfigError("unknown acceptance criterion '" + id + "'");
  }
  std::vector<CriterionResult> results;
  for (const AcceptanceCriterion& c : acceptance_criteria()) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    CriterionResult r;
    const auto start = Clock::now();
    try {
      r = c.run(config);
    } catch (const std::exception& e) {
      r = make(c.id, c.title);
      r.passed = false;
      r.detail = std::string("error: ") + e.what();
      r.wall_seconds = seconds_since(start);
    }
    if (progress) print_result(*progress, r);
    results.push_back(std::move(r));
  }
  return results;
}

void print_result(std::ostream& os, const CriterionResult& r) {
  os << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(16) << r.id << r.detail << '\n'
     << std::flush;
}

}  // namespace spinhover
