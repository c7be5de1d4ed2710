#include "spinhover/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace spinhover {

namespace {

enum class Provenance { Published, Calibrated, Tuned, None };

const char* tag(Provenance p) {
  switch (p) {
    case Provenance::Published: return "published";
    case Provenance::Calibrated: return "calibrated";
    case Provenance::Tuned: return "tuned";
    case Provenance::None: break;
  }
  return "";
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (!text.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw ConfigError("expected a number, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "yes" || text == "on" || text == "1") return true;
  if (text == "false" || text == "no" || text == "off" || text == "0") return false;
  throw ConfigError("expected true/false, got '" + text + "'");
}

struct Field {
  std::string section;
  std::string key;
  Provenance provenance = Provenance::None;
  bool numeric = false;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

class Registry {
 public:
  explicit Registry(Config& c) : c_(c) { build(); }

  const std::vector<Field>& fields() const { return fields_; }
  const Field* find(const std::string& section, const std::string& key) const {
    for (const Field& f : fields_) {
      if (f.section == section && f.key == key) return &f;
    }
    return nullptr;
  }

 private:
  void number(const std::string& key, double& ref, double lo, double hi, Provenance p) {
    const std::string name = section_ + "." + key;
    fields_.push_back({section_, key, p, true,
                       [&ref, lo, hi, name](const std::string& v) {
                         const double x = parse_double(v);
                         if (x < lo || x > hi) {
                           throw ConfigError(name + " = " + v + " outside [" + format_double(lo) +
                                             ", " + format_double(hi) + "]");
                         }
                         ref = x;
                       },
                       [&ref] { return format_double(ref); }});
  }

  // Sets both horizontal components from one key.
  void pair(const std::string& key, Vec3& ref, double lo, double hi, Provenance p) {
    const std::string name = section_ + "." + key;
    fields_.push_back({section_, key, p, true,
                       [&ref, lo, hi, name](const std::string& v) {
                         const double x = parse_double(v);
                         if (x < lo || x > hi) {
                           throw ConfigError(name + " = " + v + " outside [" + format_double(lo) +
                                             ", " + format_double(hi) + "]");
                         }
                         ref.x() = x;
                         ref.y() = x;
                       },
                       [&ref] { return format_double(ref.x()); }});
  }

  void integer(const std::string& key, int& ref, int lo, int hi, Provenance p) {
    const std::string name = section_ + "." + key;
    fields_.push_back({section_, key, p, true,
                       [&ref, lo, hi, name](const std::string& v) {
                         int x = 0;
                         auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
                         if (ec != std::errc() || ptr != v.data() + v.size()) {
                           throw ConfigError(name + ": expected an integer, got '" + v + "'");
                         }
                         if (x < lo || x > hi) {
                           throw ConfigError(name + " = " + v + " outside [" +
                                             std::to_string(lo) + ", " + std::to_string(hi) +
                                             "]");
                         }
                         ref = x;
                       },
                       [&ref] { return std::to_string(ref); }});
  }

  void boolean(const std::string& key, bool& ref) {
    fields_.push_back({section_, key, Provenance::None, false,
                       [&ref](const std::string& v) { ref = parse_bool(v); },
                       [&ref] { return std::string(ref ? "true" : "false"); }});
  }

  // "none" or a non-negative time in seconds.
  void optional_time(const std::string& key, std::optional<double>& ref) {
    const std::string name = section_ + "." + key;
    fields_.push_back({section_, key, Provenance::Tuned, true,
                       [&ref, name](const std::string& v) {
                         if (v == "none") {
                           ref.reset();
                           return;
                         }
                         const double t = parse_double(v);
                         if (t < 0.0) throw ConfigError(name + " must be >= 0");
                         ref = t;
                       },
                       [&ref] { return ref ? format_double(*ref) : std::string("none"); }});
  }

  void text(const std::string& key, std::function<void(const std::string&)> set,
            std::function<std::string()> get) {
    fields_.push_back({section_, key, Provenance::None, false, std::move(set), std::move(get)});
  }

  void build() {
    using P = Provenance;
    Config& c = c_;
    AirframeConstants& a = c.sim.airframe;
    section_ = "airframe";
    number("mass_kg", a.mass, 0.001, 1.0, P::Published);
    number("gravity_m_s2", a.gravity, 0.1, 30.0, P::Published);
    number("arm_m", a.arm, 0.005, 1.0, P::Published);
    number("torque_ratio_m", a.torque_ratio, 0.0, 0.1, P::Calibrated);
    number("drag_h_N_s_m", a.drag_h, 0.0, 1.0, P::Calibrated);
    number("drag_v_N_s_m", a.drag_v, 0.0, 1.0, P::Tuned);
    number("inertia_d_kg_m2", a.inertia_d, 1e-8, 1e-1, P::Published);
    number("inertia_z_kg_m2", a.inertia_z, 1e-8, 1e-1, P::Published);
    number("thrust_max_N", a.thrust_max, 0.01, 10.0, P::Tuned);
    number("quad_mass_kg", a.quad_mass, 0.002, 2.0, P::Published);
    number("module_spacing_m", a.module_spacing, 0.0, 1.0, P::Published);

    ControllerGains& g = c.sim.gains;
    section_ = "bicopter_gains";
    pair("kp_xy_1_s2", g.position.kp, 0.0, 1e3, P::Tuned);
    number("kp_z_1_s2", g.position.kp.z(), 0.0, 1e3, P::Tuned);
    pair("kd_xy_1_s", g.position.kd, 0.0, 1e3, P::Tuned);
    number("kd_z_1_s", g.position.kd.z(), 0.0, 1e3, P::Tuned);
    pair("ki_xy_1_s3", g.position.ki, 0.0, 1e3, P::Tuned);
    number("ki_z_1_s3", g.position.ki.z(), 0.0, 1e3, P::Tuned);
    number("integrator_clamp_m_s", g.position.integrator_clamp, 0.0, 100.0, P::Tuned);
    number("k_tau_p_N_m_rad", g.k_tau_p, -10.0, 10.0, P::Tuned);
    number("k_tau_d_N_m_s_rad", g.k_tau_d, -10.0, 10.0, P::Tuned);
    number("xi_d_max_rad", g.xi_d_max, 0.0, 1.0, P::Published);
    number("xi_err_deadzone_rad", g.xi_err_deadzone, 0.0, 1.0, P::Published);
    number("lpf_cutoff_rad_s", g.lpf_cutoff, 0.1, 1e3, P::Tuned);
    number("allocation_lead_s", g.allocation_lead, 0.0, 0.1, P::Tuned);

    QuadGains& q = c.sim.quad_gains;
    section_ = "quad_gains";
    pair("kp_xy_1_s2", q.position.kp, 0.0, 1e3, P::Tuned);
    number("kp_z_1_s2", q.position.kp.z(), 0.0, 1e3, P::Tuned);
    pair("kd_xy_1_s", q.position.kd, 0.0, 1e3, P::Tuned);
    number("kd_z_1_s", q.position.kd.z(), 0.0, 1e3, P::Tuned);
    pair("ki_xy_1_s3", q.position.ki, 0.0, 1e3, P::Tuned);
    number("ki_z_1_s3", q.position.ki.z(), 0.0, 1e3, P::Tuned);
    number("integrator_clamp_m_s", q.position.integrator_clamp, 0.0, 100.0, P::Tuned);
    pair("k_attitude_xy_N_m_rad", q.k_attitude, 0.0, 10.0, P::Tuned);
    number("k_attitude_z_N_m_rad", q.k_attitude.z(), 0.0, 10.0, P::Tuned);
    pair("k_rate_xy_N_m_s_rad", q.k_rate, 0.0, 10.0, P::Tuned);
    number("k_rate_z_N_m_s_rad", q.k_rate.z(), 0.0, 10.0, P::Tuned);
    number("tilt_max_rad", q.tilt_max, 0.01, 1.5, P::Tuned);
    number("yaw_setpoint_rad", q.yaw_setpoint, -kPi, kPi, P::Tuned);

    section_ = "mode_detector";
    number("threshold_rad_s", c.sim.detector.threshold, 0.0, 1e3, P::Published);
    number("window_s", c.sim.detector.window, 0.01, 10.0, P::Tuned);
    number("sustain_s", c.sim.detector.sustain, 0.0, 10.0, P::Tuned);

    section_ = "timing";
    number("physics_dt_s", c.sim.physics_dt, 1e-5, 1e-2, P::Tuned);
    number("inner_period_s", c.sim.inner_period, 1e-4, 0.1, P::Published);
    number("outer_period_s", c.sim.outer_period, 1e-4, 0.1, P::Published);
    number("velocity_cutoff_rad_s", c.sim.velocity_cutoff, 0.1, 1e4, P::Tuned);
    number("tilt_crash_rad", c.sim.tilt_crash, 0.1, kPi, P::Tuned);
    number("escape_radius_m", c.sim.escape_radius, 1.0, 1e4, P::Tuned);
    number("hard_landing_m_s", c.sim.hard_landing_speed, 0.0, 100.0, P::Tuned);

    Scenario& s = c.scenario;
    section_ = "scenario";
    text("preset", [&c](const std::string& v) { c.scenario_name = v; },
         [&c] { return c.scenario_name; });
    text("vehicle", [&s](const std::string& v) { s.vehicle = parse_vehicle_config(v); },
         [&s] { return std::string(to_string(s.vehicle)); });
    text("trajectory", [&s](const std::string& v) { s.trajectory = parse_trajectory(v); },
         [&s] { return std::string(to_string(s.trajectory)); });
    number("duration_s", s.duration, 0.1, 3600.0, P::Published);
    number("hover_height_m", s.hover_height, 0.1, 100.0, P::Tuned);
    number("takeoff_time_s", s.takeoff_time, 0.1, 60.0, P::Tuned);
    number("land_time_s", s.land_time, 0.1, 60.0, P::Tuned);
    number("circle_radius_m", s.circle_radius, 0.0, 10.0, P::Tuned);
    number("circle_period_s", s.circle_period, 0.5, 600.0, P::Published);
    integer("circle_laps", s.circle_laps, 0, 1000, P::Tuned);
    number("ellipse_a_m", s.ellipse_a, 0.0, 10.0, P::Tuned);
    number("ellipse_b_m", s.ellipse_b, 0.0, 10.0, P::Tuned);
    number("ellipse_period_s", s.ellipse_period, 0.5, 600.0, P::Tuned);
    integer("ellipse_laps", s.ellipse_laps, 0, 1000, P::Tuned);
    number("launch_yaw_rate_rad_s", s.launch_yaw_rate, 0.0, 200.0, P::Published);
    boolean("split_brain", s.split_brain);
    optional_time("board_failure_at_s", s.board_failure_at);
    optional_time("propeller_failure_at_s", s.propeller_failure_at);

    HandThrow& h = s.hand_throw;
    section_ = "hand_throw";
    number("x_m", h.position.x(), -100.0, 100.0, P::Tuned);
    number("y_m", h.position.y(), -100.0, 100.0, P::Tuned);
    number("z_m", h.position.z(), 0.0, 100.0, P::Tuned);
    number("vx_m_s", h.velocity.x(), -20.0, 20.0, P::Tuned);
    number("vy_m_s", h.velocity.y(), -20.0, 20.0, P::Tuned);
    number("vz_m_s", h.velocity.z(), -20.0, 20.0, P::Tuned);
    number("tilt_rad", h.tilt, 0.0, 0.999, P::Tuned);
    number("tilt_direction_rad", h.tilt_direction, -kPi, kPi, P::Tuned);
    number("yaw_rate_rad_s", h.yaw_rate, 0.0, 200.0, P::Published);
    number("braking_time_s", h.braking_time, 0.1, 60.0, P::Tuned);
    boolean("randomize", h.randomize);
    number("tilt_max_rad", h.tilt_max, 0.0, 0.999, P::Tuned);

    NoiseSpec& n = s.noise;
    section_ = "noise";
    number("position_m", n.position, 0.0, 1.0, P::Tuned);
    number("tilt_rad", n.tilt, 0.0, 1.0, P::Tuned);
    number("heading_rad", n.heading, 0.0, kPi, P::Tuned);
    number("gyro_rad_s", n.gyro, 0.0, 10.0, P::Tuned);
    number("gyro_bias_rad_s", n.gyro_bias, -10.0, 10.0, P::Tuned);
    number("latency_s", n.latency, 0.0, 1.0, P::Tuned);
    number("motor_lag_s", n.motor_lag, 0.0, 1.0, P::Tuned);

    SweepSpec& w = c.sweep;
    section_ = "sweep";
    number("kp_min_N_m_rad", w.kp_min, -10.0, 10.0, P::Tuned);
    number("kp_max_N_m_rad", w.kp_max, -10.0, 10.0, P::Tuned);
    integer("kp_steps", w.kp_steps, 2, 10000, P::Tuned);
    number("kd_min_N_m_s_rad", w.kd_min, -10.0, 10.0, P::Tuned);
    number("kd_max_N_m_s_rad", w.kd_max, -10.0, 10.0, P::Tuned);
    integer("kd_steps", w.kd_steps, 2, 10000, P::Tuned);

    OutputSpec& o = c.output;
    section_ = "output";
    text("directory", [&o](const std::string& v) { o.directory = v; },
         [&o] { return o.directory; });
    boolean("csv", o.csv);
    boolean("json", o.json);
  }

  Config& c_;
  std::string section_;
  std::vector<Field> fields_;
};

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  int line = 0;
};

std::vector<Entry> tokenize(std::istream& is, const std::string& origin) {
  std::vector<Entry> entries;
  std::string section;
  std::string raw;
  int line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line) + ": ";
    if (text.front() == '[') {
      if (text.back() != ']' || text.size() < 3) throw ConfigError(where + "bad section header");
      section = trim(text.substr(1, text.size() - 2));
      continue;
    }
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside any [section]");
    Entry e{section, trim(text.substr(0, eq)), trim(text.substr(eq + 1)), line};
    if (e.key.empty() || e.value.empty()) throw ConfigError(where + "empty key or value");
    for (const Entry& prev : entries) {
      if (prev.section == e.section && prev.key == e.key) {
        throw ConfigError(where + "duplicate key " + e.section + "." + e.key);
      }
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

// The takeoff window is both the detector's and the platform's.
void synchronize(Config& c) { c.scenario.detection_window = c.sim.detector.window; }

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = {
      "hover",          "bicopter_circle", "bicopter_ccw_circle", "slow_launch",
      "quad_hover",     "quad_ellipse",    "split_brain_ellipse", "split_brain_failure",
      "dual_bicopter",  "hand_throw",      "hand_throw_random",   "equilibrium_throw"};
  return names;
}

Scenario scenario_preset(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "hover") {
  } else if (name == "bicopter_circle") {
    s.trajectory = TrajectoryKind::Circle;
  } else if (name == "bicopter_ccw_circle") {
    s.vehicle = VehicleConfig::BicopterCcw;
    s.trajectory = TrajectoryKind::Circle;
  } else if (name == "slow_launch") {
    s.launch_yaw_rate = 5.0;
  } else if (name == "quad_hover") {
    s.vehicle = VehicleConfig::Quadcopter;
    s.launch_yaw_rate = 0.0;
  } else if (name == "quad_ellipse" || name == "split_brain_ellipse" ||
             name == "split_brain_failure") {
    s.vehicle = VehicleConfig::Quadcopter;
    s.trajectory = TrajectoryKind::Ellipse;
    s.launch_yaw_rate = 0.0;
    s.split_brain = name != "quad_ellipse";
    if (name == "split_brain_failure") s.board_failure_at = 12.0;
  } else if (name == "dual_bicopter") {
    s.vehicle = VehicleConfig::DualBicopter;
    s.trajectory = TrajectoryKind::Circle;
  } else if (name == "hand_throw" || name == "hand_throw_random") {
    s.trajectory = TrajectoryKind::HandThrow;
    s.duration = 10.0;
    if (name == "hand_throw_random") {
      s.hand_throw.randomize = true;
      s.noise = NoiseSpec::realistic();
    }
  } else if (name == "equilibrium_throw") {
    s.trajectory = TrajectoryKind::HandThrow;
    s.duration = 10.0;
    s.hand_throw.velocity = Vec3::Zero();
    s.hand_throw.tilt = 0.0;
    s.hand_throw.yaw_rate = 35.0;
  } else {
    std::string known;
    for (const auto& n : scenario_names()) known += (known.empty() ? "" : ", ") + n;
    throw ConfigError("unknown scenario '" + name + "' (known: " + known + ")");
  }
  return s;
}

NoiseSpec noise_preset(const std::string& name) {
  if (name == "ideal") return NoiseSpec::ideal();
  if (name == "realistic") return NoiseSpec::realistic();
  throw ConfigError("unknown noise preset '" + name + "' (ideal, realistic)");
}

Config default_config(const std::string& scenario) {
  Config c;
  c.scenario_name = scenario;
  c.scenario = scenario_preset(scenario);
  synchronize(c);
  return c;
}

Config parse_config(std::istream& is, const std::string& origin,
                    const std::optional<std::string>& scenario_override) {
  const std::vector<Entry> entries = tokenize(is, origin);

  std::string preset = "bicopter_circle";
  for (const Entry& e : entries) {
    if (e.section == "scenario" && e.key == "preset") preset = e.value;
  }
  if (scenario_override) preset = *scenario_override;

  Config c = default_config(preset);
  Registry registry(c);
  for (const Entry& e : entries) {
    const std::string where = origin + ":" + std::to_string(e.line) + ": ";
    if (e.section == "scenario" && e.key == "preset") continue;
    const Field* f = registry.find(e.section, e.key);
    if (!f) throw ConfigError(where + "unknown key " + e.section + "." + e.key);
    try {
      f->set(e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(where + err.what());
    } catch (const std::invalid_argument& err) {
      throw ConfigError(where + e.section + "." + e.key + ": " + err.what());
    }
  }
  synchronize(c);
  validate_config(c);
  return c;
}

Config load_config(const std::filesystem::path& path,
                   const std::optional<std::string>& scenario_override) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config(in, path.string(), scenario_override);
}

void validate_config(const Config& c) {
  const SimConfig& sim = c.sim;
  try {
    for (Airframe a : {Airframe::BicopterCw, Airframe::BicopterCcw, Airframe::Quadcopter}) {
      make_vehicle(sim.airframe, a).validate();
    }
    // Flight schedule must fit the duration.
    if (c.scenario.trajectory != TrajectoryKind::HandThrow) {
      ReferenceTrajectory(c.scenario, Vec3::Zero());
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const double inner = sim.inner_period / sim.physics_dt;
  const double outer = sim.outer_period / sim.inner_period;
  if (std::abs(inner - std::round(inner)) > 1e-9 || std::abs(outer - std::round(outer)) > 1e-9) {
    throw ConfigError("timing: inner_period_s must be a multiple of physics_dt_s and "
                      "outer_period_s a multiple of inner_period_s");
  }
  if (c.sweep.kp_min > c.sweep.kp_max || c.sweep.kd_min > c.sweep.kd_max) {
    throw ConfigError("sweep: min must not exceed max");
  }
  if (c.scenario.hand_throw.tilt_max > 0.999 || c.scenario.hand_throw.tilt > 0.999) {
    throw ConfigError("hand_throw: tilt must stay below 1 rad");
  }
}

void write_config(std::ostream& os, const Config& c) {
  Config copy = c;
  Config reference = default_config(c.scenario_name);
  const Registry current(copy);
  const Registry defaults(reference);

  os << "# spinhover effective configuration\n";
  std::string section;
  for (std::size_t i = 0; i < current.fields().size(); ++i) {
    const Field& f = current.fields()[i];
    if (f.section != section) {
      section = f.section;
      os << (i ? "\n" : "") << "[" << section << "]\n";
    }
    const std::string value = f.get();
    os << f.key << " = " << value;
    if (f.numeric) {
      const bool is_default = defaults.fields()[i].get() == value;
      os << "  # " << (is_default ? tag(f.provenance) : "override");
    }
    os << "\n";
  }
}

void require_stable_config(const Config& c) {
  std::vector<Airframe> units;
  switch (c.scenario.vehicle) {
    case VehicleConfig::BicopterCw: units = {Airframe::BicopterCw}; break;
    case VehicleConfig::BicopterCcw: units = {Airframe::BicopterCcw}; break;
    case VehicleConfig::DualBicopter: units = {Airframe::BicopterCw, Airframe::BicopterCcw}; break;
    case VehicleConfig::Quadcopter: return;
  }
  for (Airframe a : units) require_stable_gains(c.sim.gains, make_vehicle(c.sim.airframe, a));
}

}  // namespace spinhover
