#include "spinhover/analysis.hpp"

#include <Eigen/Eigenvalues>

#include <iomanip>
#include <ostream>
#include <sstream>

namespace spinhover {

double equilibrium_yaw_rate(const VehicleParams& p) {
  if (!(p.drag_h > 0.0) || !(p.arm > 0.0)) {
    throw std::invalid_argument("equilibrium_yaw_rate: D_h and l must be positive");
  }
  return p.handedness * p.torque_ratio * p.mass * p.gravity / (p.drag_h * p.arm * p.arm);
}

RelaxedHoverEquilibrium relaxed_hover_equilibrium(const VehicleParams& p) {
  RelaxedHoverEquilibrium e;
  e.yaw_rate = equilibrium_yaw_rate(p);
  e.thrust_per_prop = p.weight() / static_cast<double>(p.propellers.size());
  return e;
}

double precession_rate(const VehicleParams& p) {
  return p.inertia_z * std::abs(equilibrium_yaw_rate(p)) / p.inertia_d;
}

ReducedAttitudeDerivative reduced_attitude_derivative(const ReducedAttitudeState& s,
                                                      const Vec2& torque,
                                                      const VehicleParams& p) {
  ReducedAttitudeDerivative d;
  d.xi_dot = s.xi_dot;
  d.xi_ddot = (torque - p.inertia_z * s.spin * gyro_j() * s.xi_dot) / p.inertia_d;
  d.psi_dot = s.spin;
  d.out_of_envelope = s.xi.norm() > kReducedEnvelope;
  return d;
}

Mat2 drag_projection(double psi) {
  const double c = std::cos(psi);
  const double s = std::sin(psi);
  Mat2 m;
  m << c * c, s * c, s * c, s * s;
  return m;
}

InertialTorque inertial_torque(double psi, double differential, const Vec2& xi_dot,
                               const VehicleParams& p) {
  InertialTorque t;
  t.thrust = differential * Vec2(std::cos(psi), std::sin(psi));
  t.drag = -p.arm * p.arm * p.drag_v * drag_projection(psi) * xi_dot;
  return t;
}

InertialTorque inertial_torque(double psi, const std::vector<double>& thrust,
                               const Vec2& xi_dot, const VehicleParams& p) {
  if (thrust.size() != p.propellers.size()) {
    throw std::invalid_argument("inertial_torque: thrust count mismatch");
  }
  double u = 0.0;
  for (std::size_t k = 0; k < thrust.size(); ++k) {
    u += p.propellers[k].sigma * p.arm * thrust[k];
  }
  return inertial_torque(psi, u, xi_dot, p);
}

ClosedLoopModel closed_loop_matrix(const AttitudeGains& g, const VehicleParams& p) {
  ClosedLoopModel m;
  m.inertia_d = p.inertia_d;
  m.inertia_z = p.inertia_z;
  m.spin = equilibrium_yaw_rate(p);
  m.kp = g.kp;
  m.kd = g.kd;
  m.drag_damping = 0.5 * p.arm * p.arm * p.drag_v;
  m.delta = p.handedness;

  const Mat2 j = gyro_j();
  const double gyro = m.inertia_z * m.spin;
  const Mat2 damping = gyro * j + (m.kd + m.drag_damping) * Mat2::Identity();
  const Mat2 stiffness = m.delta * m.kp * j;

  m.a.topLeftCorner<2, 2>().setZero();
  m.a.topRightCorner<2, 2>().setIdentity();
  m.a.bottomLeftCorner<2, 2>() = -stiffness / m.inertia_d;
  m.a.bottomRightCorner<2, 2>() = -damping / m.inertia_d;
  return m;
}

double max_real_eigenvalue(const ClosedLoopModel& m) {
  Eigen::EigenSolver<Eigen::Matrix4d> solver(m.a, false);
  return solver.eigenvalues().real().maxCoeff();
}

const char* to_string(Stability s) {
  switch (s) {
    case Stability::Stable: return "stable";
    case Stability::Unstable: return "unstable";
    case Stability::Marginal: return "marginal";
  }
  return "unknown";
}

StabilityReport routh_hurwitz_check(const AttitudeGains& g, const VehicleParams& p,
                                    double band) {
  const double spin = equilibrium_yaw_rate(p);
  if (spin == 0.0) {
    throw UndefinedRegime(
        "equilibrium yaw rate is zero; the gyroscopic attitude model needs a spinning "
        "vehicle (check torque_ratio)");
  }
  const int delta = p.handedness;
  const double gyro = p.inertia_z * spin;

  StabilityReport r;
  r.damping_lhs = g.kd + 0.5 * p.arm * p.arm * p.drag_v;
  r.damping_rhs = delta * p.inertia_d * g.kp / gyro;
  r.kp_upper_bound = r.damping_lhs * std::abs(gyro) / p.inertia_d;
  r.damping_condition = r.damping_lhs > r.damping_rhs;
  // sign(Omega*) = delta, so this is K_tau_p > 0 for either unit.
  r.sign_condition = delta * g.kp / spin > 0.0;

  const double damping_gap = r.damping_lhs - r.damping_rhs;
  const double damping_scale = std::max(std::abs(r.damping_lhs), std::abs(r.damping_rhs));
  const bool damping_marginal = std::abs(damping_gap) <= band * damping_scale;
  const bool sign_marginal = std::abs(g.kp) <= band * r.kp_upper_bound;

  const bool damping_violated = !r.damping_condition && !damping_marginal;
  const bool sign_violated = !r.sign_condition && !sign_marginal;

  std::ostringstream why;
  if (damping_violated || (!r.damping_condition && damping_marginal)) {
    why << "damping condition K_tau_d + l^2 D_v / 2 > delta I_d K_tau_p / (I_z Omega_z*) "
        << "violated: " << r.damping_lhs << " <= " << r.damping_rhs;
  }
  if (sign_violated || (!r.sign_condition && sign_marginal)) {
    if (why.tellp() > 0) why << "; ";
    why << "sign condition delta K_tau_p / Omega_z* > 0 violated: delta=" << delta
        << ", K_tau_p=" << g.kp;
  }
  r.violated = why.str();

  if (damping_violated || sign_violated) {
    r.verdict = Stability::Unstable;
  } else if (damping_marginal || sign_marginal) {
    r.verdict = Stability::Marginal;
  } else {
    r.verdict = Stability::Stable;
  }
  return r;
}

DifferentialProgram cyclic_program(const Vec2& torque) {
  return [torque](double, double psi) {
    return 2.0 * torque.dot(Vec2(std::cos(psi), std::sin(psi)));
  };
}

LinearizationError linearization_error(const VehicleParams& p, const Vec2& xi0,
                                       const DifferentialProgram& program, double horizon,
                                       double dt) {
  const double spin = equilibrium_yaw_rate(p);
  LinearizationError out;
  out.out_of_envelope = xi0.norm() > 0.12;

  RigidBodyState init;
  init.orientation = orientation_from_xi(xi0, 0.0);
  init.omega = Vec3(0.0, 0.0, spin);
  Plant plant(p, init);

  using Vec5 = Eigen::Matrix<double, 5, 1>;
  Vec5 reduced;
  reduced << xi0, Vec2::Zero(), yaw_of(init.orientation);

  const double hover = 0.5 * p.weight();
  const long steps = std::lround(horizon / dt);
  for (long n = 0; n < steps; ++n) {
    const double t = n * dt;

    const double u_full = program(t, yaw_of(plant.state().orientation));
    MotorCommand cmd;
    for (const Propeller& prop : p.propellers) {
      const double f = hover + prop.sigma * u_full / (2.0 * p.arm);
      cmd.thrust.push_back(std::clamp(f, p.thrust_min, p.thrust_max));
    }
    plant.set_command(cmd);
    plant.step(dt);

    const double u_red = program(t, reduced(4));
    auto f = [&](double, const Vec5& x) {
      ReducedAttitudeState s{x.head<2>(), x.segment<2>(2), x(4), spin};
      const InertialTorque tau = inertial_torque(s.psi, u_red, s.xi_dot, p);
      const ReducedAttitudeDerivative d = reduced_attitude_derivative(s, tau.total(), p);
      Vec5 dx;
      dx << d.xi_dot, d.xi_ddot, d.psi_dot;
      return dx;
    };
    reduced = rk4_step(f, reduced, t, dt);

    const Vec2 xi_full = zb_to_xi(plant.state().orientation).xi;
    out.max_deviation = std::max(out.max_deviation, (xi_full - reduced.head<2>()).norm());
  }
  return out;
}

std::vector<StabilityMapRow> stability_map(const AirframeConstants& k, const SweepSpec& sweep,
                                           const std::vector<Handedness>& units) {
  if (sweep.kp_steps < 2 || sweep.kd_steps < 2) {
    throw std::invalid_argument("stability_map: need at least 2 steps per axis");
  }
  std::vector<StabilityMapRow> rows;
  rows.reserve(units.size() * static_cast<std::size_t>(sweep.kp_steps * sweep.kd_steps));
  for (Handedness h : units) {
    const VehicleParams p = make_bicopter(k, h);
    for (int i = 0; i < sweep.kp_steps; ++i) {
      const double kp =
          sweep.kp_min + (sweep.kp_max - sweep.kp_min) * i / (sweep.kp_steps - 1);
      for (int j = 0; j < sweep.kd_steps; ++j) {
        const double kd =
            sweep.kd_min + (sweep.kd_max - sweep.kd_min) * j / (sweep.kd_steps - 1);
        const AttitudeGains g{kp, kd};
        StabilityMapRow row;
        row.kp = kp;
        row.kd = kd;
        row.delta = p.handedness;
        row.verdict = routh_hurwitz_check(g, p).verdict;
        row.max_real_eig = max_real_eigenvalue(closed_loop_matrix(g, p));
        rows.push_back(row);
      }
    }
  }
  return rows;
}

void write_stability_csv(std::ostream& os, const std::vector<StabilityMapRow>& rows) {
  os << "K_tau_p,K_tau_d,delta,verdict,max_real_eig\n";
  os << std::setprecision(6);
  for (const StabilityMapRow& r : rows) {
    os << r.kp << ',' << r.kd << ',' << r.delta << ',' << to_string(r.verdict) << ','
       << r.max_real_eig << '\n';
  }
}

}  // namespace spinhover
